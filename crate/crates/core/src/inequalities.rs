//! Correlators and the two functionals of the joint test.
//!
//! ```text
//! α = ⟨A0B0⟩ + ⟨A0B2B3⟩ + ⟨A1B0⟩ − ⟨A1B2B3⟩          local bound 2
//! β = ⟨B0B1⟩ + ⟨B1B2⟩ + ⟨B2B3⟩ + ⟨B3B4⟩ − ⟨B4B0⟩      noncontextual bound 3
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{expectation, HermitianOperator, Ket, Observables, QuantumModel};
use crate::scenario::{cell_outcomes, Behavior, Context, JointContext, MarginalBehavior};

pub const LOCAL_BOUND: f64 = 2.0;
pub const NONCONTEXTUAL_BOUND: f64 = 3.0;

/// Identifies one correlator. Bob labels follow context order, so the closing
/// pentagon term is `BB(4, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorrelatorKey {
    /// `⟨A_x B_y⟩` from the singleton context `(x, {y})`.
    AB(usize, usize),
    /// `⟨A_x B_y B_y'⟩`.
    ABB(usize, usize, usize),
    /// `⟨B_y B_y'⟩` from Bob's marginal.
    BB(usize, usize),
}

impl fmt::Display for CorrelatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CorrelatorKey::AB(x, y) => write!(f, "A{x}B{y}"),
            CorrelatorKey::ABB(x, y, y2) => write!(f, "A{x}B{y}B{y2}"),
            CorrelatorKey::BB(y, y2) => write!(f, "B{y}B{y2}"),
        }
    }
}

impl FromStr for CorrelatorKey {
    type Err = Error;

    /// Parses labels such as `A0B2B3` or `B4B0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("unrecognised correlator label `{s}`"));
        let mut alice = None;
        let mut bob = Vec::new();
        let mut chars = s.chars().peekable();
        while let Some(ch) = chars.next() {
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let n: usize = digits.parse().map_err(|_| bad())?;
            match ch {
                'A' if alice.is_none() && bob.is_empty() => alice = Some(n),
                'B' => bob.push(n),
                _ => return Err(bad()),
            }
        }
        match (alice, bob.as_slice()) {
            (Some(x), [y]) => Ok(CorrelatorKey::AB(x, *y)),
            (Some(x), [y, y2]) => Ok(CorrelatorKey::ABB(x, *y, *y2)),
            (None, [y, y2]) => Ok(CorrelatorKey::BB(*y, *y2)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelatorSet {
    pub ab: BTreeMap<(usize, usize), f64>,
    pub abb: BTreeMap<(usize, usize, usize), f64>,
    pub bb: BTreeMap<(usize, usize), f64>,
}

impl CorrelatorSet {
    pub fn get(&self, key: CorrelatorKey) -> Option<f64> {
        match key {
            CorrelatorKey::AB(x, y) => self.ab.get(&(x, y)).copied(),
            CorrelatorKey::ABB(x, y, y2) => self.abb.get(&(x, y, y2)).copied(),
            CorrelatorKey::BB(y, y2) => self.bb.get(&(y, y2)).copied(),
        }
    }

    pub fn insert(&mut self, key: CorrelatorKey, value: f64) {
        match key {
            CorrelatorKey::AB(x, y) => self.ab.insert((x, y), value),
            CorrelatorKey::ABB(x, y, y2) => self.abb.insert((x, y, y2), value),
            CorrelatorKey::BB(y, y2) => self.bb.insert((y, y2), value),
        };
    }

    pub fn iter(&self) -> impl Iterator<Item = (CorrelatorKey, f64)> + '_ {
        let ab = self
            .ab
            .iter()
            .map(|(&(x, y), &v)| (CorrelatorKey::AB(x, y), v));
        let abb = self
            .abb
            .iter()
            .map(|(&(x, y, y2), &v)| (CorrelatorKey::ABB(x, y, y2), v));
        let bb = self
            .bb
            .iter()
            .map(|(&(y, y2), &v)| (CorrelatorKey::BB(y, y2), v));
        ab.chain(abb).chain(bb)
    }

    pub fn len(&self) -> usize {
        self.ab.len() + self.abb.len() + self.bb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Linear combination of correlators with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Functional {
    pub name: &'static str,
    pub terms: Vec<(CorrelatorKey, i32)>,
}

impl Functional {
    pub fn chsh() -> Self {
        use CorrelatorKey::*;
        Functional {
            name: "alpha",
            terms: vec![
                (AB(0, 0), 1),
                (ABB(0, 2, 3), 1),
                (AB(1, 0), 1),
                (ABB(1, 2, 3), -1),
            ],
        }
    }

    pub fn kcbs() -> Self {
        use CorrelatorKey::*;
        Functional {
            name: "beta",
            terms: vec![
                (BB(0, 1), 1),
                (BB(1, 2), 1),
                (BB(2, 3), 1),
                (BB(3, 4), 1),
                (BB(4, 0), -1),
            ],
        }
    }

    /// Term-wise sum of two functionals.
    pub fn plus(&self, other: &Functional, name: &'static str) -> Functional {
        let mut terms = self.terms.clone();
        for &(k, c) in &other.terms {
            match terms.iter_mut().find(|(k2, _)| *k2 == k) {
                Some((_, c2)) => *c2 += c,
                None => terms.push((k, c)),
            }
        }
        Functional { name, terms }
    }

    /// Negates the coefficients of every term involving Alice's setting `x`.
    pub fn flip_alice(&self, x: usize) -> Functional {
        let terms = self
            .terms
            .iter()
            .map(|&(k, c)| match k {
                CorrelatorKey::AB(x2, _) | CorrelatorKey::ABB(x2, _, _) if x2 == x => (k, -c),
                _ => (k, c),
            })
            .collect();
        Functional {
            name: self.name,
            terms,
        }
    }

    pub fn evaluate(&self, c: &CorrelatorSet) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, &(k, coeff)| {
            let v = c
                .get(k)
                .ok_or_else(|| Error::structural(format!("{} needs correlator {k}", self.name)))?;
            Ok(acc + f64::from(coeff) * v)
        })
    }

    /// Exact evaluation on ±1-valued correlators.
    pub fn evaluate_integer(&self, value: impl Fn(CorrelatorKey) -> Option<i32>) -> Result<i32> {
        self.terms.iter().try_fold(0, |acc, &(k, coeff)| {
            let v = value(k)
                .ok_or_else(|| Error::structural(format!("{} needs correlator {k}", self.name)))?;
            Ok(acc + coeff * v)
        })
    }
}

pub fn alpha_chsh(c: &CorrelatorSet) -> Result<f64> {
    Functional::chsh().evaluate(c)
}

pub fn beta_kcbs(c: &CorrelatorSet) -> Result<f64> {
    Functional::kcbs().evaluate(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Neither,
    ContextualOnly,
    NonlocalOnly,
    Both,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Neither => "neither",
            Region::ContextualOnly => "contextual-only",
            Region::NonlocalOnly => "nonlocal-only",
            Region::Both => "both",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InequalityResult {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_bound: f64,
    pub beta_bound: f64,
    pub region: Region,
}

/// Violation means strict exceedance; values on a bound count as satisfied.
pub fn classify(alpha: f64, beta: f64) -> InequalityResult {
    let nonlocal = alpha > LOCAL_BOUND;
    let contextual = beta > NONCONTEXTUAL_BOUND;
    let region = match (nonlocal, contextual) {
        (true, true) => Region::Both,
        (true, false) => Region::NonlocalOnly,
        (false, true) => Region::ContextualOnly,
        (false, false) => Region::Neither,
    };
    InequalityResult {
        alpha,
        beta,
        alpha_bound: LOCAL_BOUND,
        beta_bound: NONCONTEXTUAL_BOUND,
        region,
    }
}

/// `Σ (product of outcomes) · p` over a table.
pub fn signed_sum(table: &[f64], len: usize) -> f64 {
    table
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sign: i8 = cell_outcomes(i, len).iter().product();
            f64::from(sign) * p
        })
        .sum()
}

/// Reads every correlator off the probability tables: `⟨A_xB_y⟩` from
/// singleton contexts, `⟨A_xB_yB_y'⟩` from joint pair tables and
/// `⟨B_yB_y'⟩` from Bob's marginal.
pub fn correlators_from_behavior(
    behavior: &Behavior,
    marginal: &MarginalBehavior,
) -> Result<CorrelatorSet> {
    let mut set = CorrelatorSet::default();
    for (jc, table) in behavior.tables() {
        let labels = jc.bob.labels();
        let value = signed_sum(table, labels.len() + 1);
        match *labels {
            [y] => set.insert(CorrelatorKey::AB(jc.x, y), value),
            [y, y2] => set.insert(CorrelatorKey::ABB(jc.x, y, y2), value),
            _ => {}
        }
    }
    for (ctx, table) in marginal.tables() {
        if let [y, y2] = *ctx.labels() {
            set.insert(CorrelatorKey::BB(y, y2), signed_sum(table, 2));
        }
    }
    for x in 0..2 {
        for jc in [
            JointContext::new(x, Context::singleton(0)),
            JointContext::new(x, Context::pair(2, 3)?),
        ] {
            if behavior.table(&jc).is_none() {
                return Err(Error::structural(format!("behavior lacks context {jc}")));
            }
        }
    }
    for j in 0..5 {
        if !set.bb.contains_key(&(j, (j + 1) % 5)) {
            return Err(Error::structural(format!(
                "marginal lacks pentagon context {{{j},{}}}",
                (j + 1) % 5
            )));
        }
    }
    Ok(set)
}

/// Correlators needed by α and β, straight from operator expectations.
pub fn direct_correlators_of(model: &QuantumModel, ket: &Ket) -> Result<CorrelatorSet> {
    let obs = model.observables();
    let mut set = CorrelatorSet::default();
    for f in [Functional::chsh(), Functional::kcbs()] {
        for (key, _) in f.terms {
            let op = match key {
                CorrelatorKey::AB(x, y) => obs.joint_observable(x, &[y])?,
                CorrelatorKey::ABB(x, y, y2) => obs.joint_observable(x, &[y, y2])?,
                CorrelatorKey::BB(y, y2) => obs.bob_only_observable(&[y, y2])?,
            };
            set.insert(key, expectation(ket, &op)?);
        }
    }
    Ok(set)
}

pub fn direct_correlators(model: &QuantumModel) -> Result<CorrelatorSet> {
    direct_correlators_of(model, &model.state())
}

/// α and β operators assembled once, for evaluating many states.
#[derive(Clone, Debug)]
pub struct AlphaBetaEvaluator {
    alpha: Vec<(f64, HermitianOperator)>,
    beta: Vec<(f64, HermitianOperator)>,
}

impl AlphaBetaEvaluator {
    pub fn new(obs: &Observables) -> Result<Self> {
        let build = |f: Functional| -> Result<Vec<(f64, HermitianOperator)>> {
            f.terms
                .iter()
                .map(|&(key, coeff)| {
                    let op = match key {
                        CorrelatorKey::AB(x, y) => obs.joint_observable(x, &[y])?,
                        CorrelatorKey::ABB(x, y, y2) => obs.joint_observable(x, &[y, y2])?,
                        CorrelatorKey::BB(y, y2) => obs.bob_only_observable(&[y, y2])?,
                    };
                    Ok((f64::from(coeff), op))
                })
                .collect()
        };
        Ok(AlphaBetaEvaluator {
            alpha: build(Functional::chsh())?,
            beta: build(Functional::kcbs())?,
        })
    }

    pub fn evaluate(&self, ket: &Ket) -> Result<(f64, f64)> {
        let sum = |terms: &[(f64, HermitianOperator)]| -> Result<f64> {
            terms
                .iter()
                .try_fold(0.0, |acc, (c, op)| Ok(acc + c * expectation(ket, op)?))
        };
        Ok((sum(&self.alpha)?, sum(&self.beta)?))
    }
}

/// `(α, β)` of the model's state via operator expectations.
pub fn evaluate_model(model: &QuantumModel) -> Result<InequalityResult> {
    let c = direct_correlators(model)?;
    Ok(classify(alpha_chsh(&c)?, beta_kcbs(&c)?))
}
