//! Finite-count statistics: multinomial sampling of every measured context,
//! frequency estimates, and bootstrap uncertainties.
//!
//! Each measured configuration collects a fixed total of coincidences split
//! multinomially over its outcome cells. Bootstrap resamples redraw each table
//! from its observed frequencies with the same total.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::{
    alpha_chsh, beta_kcbs, classify, correlators_from_behavior, CorrelatorKey, CorrelatorSet,
    Functional, Region,
};
use crate::quantum::{quantum_behavior, QuantumModel};
use crate::scenario::{
    disturbance_distance, marginalize_bob, Behavior, Context, JointContext, MarginalBehavior,
    Scenario, NORMALIZATION_TOL,
};

/// Coincidences per measured configuration in the experiment.
pub const DEFAULT_COUNTS: u64 = 5500;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountTable {
    #[serde(serialize_with = "serialize_key")]
    pub context: JointContext,
    pub counts: Vec<u64>,
    pub total: u64,
}

fn serialize_key<S: serde::Serializer>(jc: &JointContext, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&jc.key())
}

impl CountTable {
    pub fn new(context: JointContext, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != context.cells() {
            return Err(Error::structural(format!(
                "{} counts for {context}, expected {}",
                counts.len(),
                context.cells()
            )));
        }
        let total = counts.iter().sum();
        Ok(CountTable {
            context,
            counts,
            total,
        })
    }

    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::domain(format!(
                "no counts recorded for {}",
                self.context
            )));
        }
        let n = self.total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoisyEstimate {
    pub value: f64,
    pub sigma: f64,
    pub n_resamples: usize,
}

/// Mixes a base seed with a stream index (splitmix64 finaliser), so parallel
/// draws are independent of execution order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index))
}

/// One multinomial draw of `n` trials, via successive conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass = probs.iter().sum::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .expect("probability in (0, 1)")
                .sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

/// Multinomial sample of `n` coincidences for one context; deterministic in `seed`.
pub fn sample_counts(
    context: &JointContext,
    table: &[f64],
    n: u64,
    seed: u64,
) -> Result<CountTable> {
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    if table.len() != context.cells() {
        return Err(Error::structural(format!(
            "table for {context} has {} cells, expected {}",
            table.len(),
            context.cells()
        )));
    }
    let total: f64 = table.iter().sum();
    if table
        .iter()
        .any(|p| !p.is_finite() || *p < -NORMALIZATION_TOL)
        || (total - 1.0).abs() > NORMALIZATION_TOL
    {
        return Err(Error::domain(format!(
            "table for {context} is not a probability distribution (sum {total})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs: Vec<f64> = table.iter().map(|p| p.max(0.0)).collect();
    CountTable::new(context.clone(), multinomial(&probs, n, &mut rng))
}

/// The configurations measured in the experiment: `A_x` with `{B_0}` and with
/// `{B_2, B_3}` for both settings, and the remaining pentagon edges with
/// Alice's outcome recorded at `x = 0`.
pub fn experiment_plan() -> Vec<JointContext> {
    let mut plan = Vec::new();
    for x in 0..2 {
        plan.push(JointContext::new(x, Context::singleton(0)));
        plan.push(JointContext::new(x, Context::pair(2, 3).expect("distinct")));
    }
    for j in [0, 1, 3, 4] {
        plan.push(JointContext::new(
            0,
            Context::pair(j, (j + 1) % 5).expect("distinct"),
        ));
    }
    plan
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub behavior: Behavior,
    pub marginal: MarginalBehavior,
    pub correlators: CorrelatorSet,
    pub sigmas: BTreeMap<CorrelatorKey, f64>,
    /// Bootstrap sigma of the disturbance distance.
    pub distance: NoisyEstimate,
    pub n_resamples: usize,
}

impl Estimate {
    pub fn correlator(&self, key: CorrelatorKey) -> Option<NoisyEstimate> {
        Some(NoisyEstimate {
            value: self.correlators.get(key)?,
            sigma: *self.sigmas.get(&key)?,
            n_resamples: self.n_resamples,
        })
    }

    /// Functional value with the sigma given by the linear sum of its terms' sigmas.
    pub fn functional(&self, f: &Functional) -> Result<NoisyEstimate> {
        let value = f.evaluate(&self.correlators)?;
        let sigma = f
            .terms
            .iter()
            .map(|(k, _)| {
                self.sigmas
                    .get(k)
                    .copied()
                    .ok_or_else(|| Error::structural(format!("no sigma for {k}")))
            })
            .sum::<Result<f64>>()?;
        Ok(NoisyEstimate {
            value,
            sigma,
            n_resamples: self.n_resamples,
        })
    }
}

fn frequency_behavior(counts: &[CountTable]) -> Result<Behavior> {
    let tables = counts
        .iter()
        .map(|c| Ok((c.context.clone(), c.frequencies()?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Behavior::new(tables)
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Frequencies as probabilities, with per-correlator and disturbance-distance
/// sigmas from `resamples` seeded bootstrap redraws.
pub fn estimate_from_counts(
    counts: &[CountTable],
    resamples: usize,
    seed: u64,
) -> Result<Estimate> {
    let behavior = frequency_behavior(counts)?;
    let marginal = marginalize_bob(&behavior)?;
    let correlators = correlators_from_behavior(&behavior, &marginal)?;
    let distance = disturbance_distance(&marginal)?;

    let freqs: Vec<Vec<f64>> = counts
        .iter()
        .map(CountTable::frequencies)
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: BTreeMap<CorrelatorKey, Vec<f64>> = BTreeMap::new();
    let mut distances = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let redrawn = counts
            .iter()
            .zip(&freqs)
            .map(|(c, f)| CountTable::new(c.context.clone(), multinomial(f, c.total, &mut rng)))
            .collect::<Result<Vec<_>>>()?;
        let b = frequency_behavior(&redrawn)?;
        let m = marginalize_bob(&b)?;
        for (k, v) in correlators_from_behavior(&b, &m)?.iter() {
            samples.entry(k).or_default().push(v);
        }
        distances.push(disturbance_distance(&m)?);
    }
    let sigmas = correlators
        .iter()
        .map(|(k, _)| (k, samples.get(&k).map_or(0.0, |s| sample_sd(s))))
        .collect();
    Ok(Estimate {
        behavior,
        marginal,
        correlators,
        sigmas,
        distance: NoisyEstimate {
            value: distance,
            sigma: sample_sd(&distances),
            n_resamples: resamples,
        },
        n_resamples: resamples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorReport {
    pub label: String,
    pub exact: f64,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport {
    pub phi: f64,
    pub theta_u: f64,
    pub theta_v: f64,
    pub n_per_setting: u64,
    pub seed: u64,
    pub n_resamples: usize,
    pub alpha_exact: f64,
    pub beta_exact: f64,
    pub alpha: NoisyEstimate,
    pub beta: NoisyEstimate,
    pub region: Region,
    pub distance: NoisyEstimate,
    pub correlators: Vec<CorrelatorReport>,
    pub counts: Vec<CountTable>,
}

/// Samples every configuration of [`experiment_plan`] with `n_per_setting`
/// coincidences and reports α̂, β̂ (linear-sum sigmas) and the disturbance distance.
pub fn simulate_experiment(
    model: &QuantumModel,
    n_per_setting: u64,
    seed: u64,
    resamples: usize,
) -> Result<SimulationReport> {
    let exact = quantum_behavior(model, &Scenario::chsh_kcbs())?;
    let exact_c = correlators_from_behavior(&exact, &marginalize_bob(&exact)?)?;
    let counts = experiment_plan()
        .iter()
        .enumerate()
        .map(|(i, jc)| {
            let table = exact
                .table(jc)
                .ok_or_else(|| Error::structural(format!("no exact table for {jc}")))?;
            sample_counts(jc, table, n_per_setting, derive_seed(seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = estimate_from_counts(&counts, resamples, derive_seed(seed, u64::MAX))?;
    let alpha = est.functional(&Functional::chsh())?;
    let beta = est.functional(&Functional::kcbs())?;
    let mut correlators = Vec::new();
    for f in [Functional::chsh(), Functional::kcbs()] {
        for (k, _) in f.terms {
            let e = est.correlator(k).expect("estimated above");
            correlators.push(CorrelatorReport {
                label: k.to_string(),
                exact: exact_c.get(k).expect("exact correlators are complete"),
                value: e.value,
                sigma: e.sigma,
            });
        }
    }
    Ok(SimulationReport {
        phi: model.phi,
        theta_u: model.theta_u,
        theta_v: model.theta_v,
        n_per_setting,
        seed,
        n_resamples: resamples,
        alpha_exact: alpha_chsh(&exact_c)?,
        beta_exact: beta_kcbs(&exact_c)?,
        alpha,
        beta,
        region: classify(alpha.value, beta.value).region,
        distance: est.distance,
        correlators,
        counts,
    })
}

/// Independent simulations for seeds `derive_seed(base_seed, 0..runs)`.
pub fn simulate_ensemble(
    model: &QuantumModel,
    n_per_setting: u64,
    base_seed: u64,
    runs: usize,
    resamples: usize,
) -> Result<Vec<SimulationReport>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| simulate_experiment(model, n_per_setting, derive_seed(base_seed, i), resamples))
        .collect()
}
