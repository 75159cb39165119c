//! φ scans of the state family, the joint-violation window, and
//! re-optimisation of `(θ_u, θ_v)` at fixed φ.

pub mod nelder_mead;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::{
    alpha_chsh, beta_kcbs, classify, correlators_from_behavior, AlphaBetaEvaluator, Region,
    LOCAL_BOUND, NONCONTEXTUAL_BOUND,
};
use crate::quantum::{quantum_behavior, state_psi, QuantumModel, DEFAULT_THETA_U, DEFAULT_THETA_V};
use crate::scenario::{marginalize_bob, Scenario};

use nelder_mead::{minimize, NelderMeadOptions};

/// Default bisection resolution for window endpoints, in radians.
pub const DEFAULT_RESOLUTION: f64 = 1e-4;

/// Restart coordinates for the simplex search, used on both axes.
pub const RESTART_GRID: [f64; 5] = [0.5, 1.2, 1.9, 2.6, 3.0];

pub const MAX_ITERATIONS: usize = 300;

/// φ range searched for the joint-violation window.
const WINDOW_DOMAIN: (f64, f64) = (0.0, FRAC_PI_2);
const WINDOW_GRID: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub phi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub region: Region,
}

/// Evaluates `steps` evenly spaced φ values (endpoints included) through the
/// full behavior → marginal → correlator pipeline.
pub fn phi_scan(
    phi_min: f64,
    phi_max: f64,
    steps: usize,
    theta_u: f64,
    theta_v: f64,
) -> Result<Vec<ScanPoint>> {
    if steps < 2 {
        return Err(Error::domain(format!(
            "scan needs at least 2 steps, got {steps}"
        )));
    }
    let scenario = Scenario::chsh_kcbs();
    let width = phi_max - phi_min;
    (0..steps)
        .into_par_iter()
        .map(|i| {
            let phi = if i == steps - 1 {
                phi_max
            } else {
                phi_min + width * i as f64 / (steps - 1) as f64
            };
            scan_point(&QuantumModel::new(phi, theta_u, theta_v), &scenario)
        })
        .collect()
}

/// One scan point at an explicit φ.
pub fn scan_point(model: &QuantumModel, scenario: &Scenario) -> Result<ScanPoint> {
    let behavior = quantum_behavior(model, scenario)?;
    let marginal = marginalize_bob(&behavior)?;
    let c = correlators_from_behavior(&behavior, &marginal)?;
    let r = classify(alpha_chsh(&c)?, beta_kcbs(&c)?);
    Ok(ScanPoint {
        phi: model.phi,
        alpha: r.alpha,
        beta: r.beta,
        region: r.region,
    })
}

/// Scan at the given φ values rather than an even grid.
pub fn scan_at(phis: &[f64], theta_u: f64, theta_v: f64) -> Result<Vec<ScanPoint>> {
    let scenario = Scenario::chsh_kcbs();
    phis.iter()
        .map(|&phi| scan_point(&QuantumModel::new(phi, theta_u, theta_v), &scenario))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiWindow {
    pub phi_lo: f64,
    pub phi_hi: f64,
}

impl PhiWindow {
    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.phi_lo <= lo && hi <= self.phi_hi
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        lo <= self.phi_lo && self.phi_hi <= hi
    }
}

/// Maximal contiguous φ interval in `[0, π/2]` where both inequalities are
/// violated. Endpoints are bisected to `resolution` and always lie inside the
/// window. Returns `None` when no grid point violates both.
pub fn joint_violation_window(
    theta_u: f64,
    theta_v: f64,
    resolution: f64,
) -> Result<Option<PhiWindow>> {
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(Error::domain(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let eval = AlphaBetaEvaluator::new(QuantumModel::at_phi(0.0).observables())?;
    let both = |phi: f64| -> Result<bool> {
        let (a, b) = eval.evaluate(&state_psi(&QuantumModel::new(phi, theta_u, theta_v)))?;
        Ok(a > LOCAL_BOUND && b > NONCONTEXTUAL_BOUND)
    };

    let (lo, hi) = WINDOW_DOMAIN;
    let grid: Vec<f64> = (0..=WINDOW_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / WINDOW_GRID as f64)
        .collect();
    let flags = grid.iter().map(|&p| both(p)).collect::<Result<Vec<_>>>()?;

    // Longest run of consecutive violating grid points; first one wins ties.
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - 1 - s > be - bs) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let Some((first, last)) = best else {
        return Ok(None);
    };

    // Bisect between an outside point and an inside point, returning the inside end.
    let refine = |mut outside: f64, mut inside: f64| -> Result<f64> {
        while (inside - outside).abs() > resolution {
            let mid = 0.5 * (inside + outside);
            if both(mid)? {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(inside)
    };
    let phi_lo = if first == 0 {
        grid[0]
    } else {
        refine(grid[first - 1], grid[first])?
    };
    let phi_hi = if last == WINDOW_GRID {
        grid[WINDOW_GRID]
    } else {
        refine(grid[last + 1], grid[last])?
    };
    Ok(Some(PhiWindow { phi_lo, phi_hi }))
}

/// What the `(θ_u, θ_v)` search maximises.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `min(α − 2, β − 3)`: positive exactly when both inequalities are violated.
    MaxMinMargin,
    /// `w·α + (1 − w)·β`.
    WeightedSum(f64),
    /// β, subject to `α ≥ 2 + δ` (enforced by a linear penalty).
    MaxBetaGivenAlphaAbove(f64),
}

const CONSTRAINT_PENALTY: f64 = 100.0;

impl Objective {
    pub fn score(&self, alpha: f64, beta: f64) -> f64 {
        match *self {
            Objective::MaxMinMargin => (alpha - LOCAL_BOUND).min(beta - NONCONTEXTUAL_BOUND),
            Objective::WeightedSum(w) => w * alpha + (1.0 - w) * beta,
            Objective::MaxBetaGivenAlphaAbove(delta) => {
                let shortfall = (LOCAL_BOUND + delta - alpha).max(0.0);
                beta - CONSTRAINT_PENALTY * shortfall
            }
        }
    }

    pub fn feasible(&self, alpha: f64, beta: f64) -> bool {
        match *self {
            Objective::MaxMinMargin => self.score(alpha, beta) > 0.0,
            Objective::WeightedSum(_) => true,
            Objective::MaxBetaGivenAlphaAbove(delta) => alpha >= LOCAL_BOUND + delta,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::MaxMinMargin => f.write_str("max_min_margin"),
            Objective::WeightedSum(w) => write!(f, "weighted_sum({w})"),
            Objective::MaxBetaGivenAlphaAbove(d) => write!(f, "max_beta_given_alpha_above({d})"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    /// Accepts `max_min_margin`, `weighted_sum(w)`, `max_beta_given_alpha_above(δ)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max_min_margin" {
            return Ok(Objective::MaxMinMargin);
        }
        let arg = |prefix: &str| -> Option<f64> {
            s.strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        if let Some(w) = arg("weighted_sum") {
            return Ok(Objective::WeightedSum(w));
        }
        if let Some(d) = arg("max_beta_given_alpha_above") {
            return Ok(Objective::MaxBetaGivenAlphaAbove(d));
        }
        Err(Error::domain(format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub phi: f64,
    pub theta_u: f64,
    pub theta_v: f64,
    pub objective_value: f64,
    pub objective_id: String,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub feasible: bool,
    /// Objective at the default `(θ_u, θ_v)`, used as a floor.
    pub witness_value: f64,
}

struct Candidate {
    theta: [f64; 2],
    value: f64,
}

/// Simplex search over `(θ_u, θ_v) ∈ [0, π]²` from each point of the restart
/// grid. The default parameters are evaluated first and returned whenever no
/// restart beats them.
pub fn optimize_state_params(phi: f64, objective: Objective) -> Result<OptimizationResult> {
    let eval = AlphaBetaEvaluator::new(QuantumModel::at_phi(phi).observables())?;
    let alpha_beta = |tu: f64, tv: f64| eval.evaluate(&state_psi(&QuantumModel::new(phi, tu, tv)));
    let score_at = |tu: f64, tv: f64| -> Result<f64> {
        let (a, b) = alpha_beta(tu, tv)?;
        Ok(objective.score(a, b))
    };

    let witness_value = score_at(DEFAULT_THETA_U, DEFAULT_THETA_V)?;
    let starts: Vec<[f64; 2]> = RESTART_GRID
        .iter()
        .flat_map(|&u| RESTART_GRID.iter().map(move |&v| [u, v]))
        .collect();
    let bounds = [(0.0, PI), (0.0, PI)];
    let opts = NelderMeadOptions {
        max_iterations: MAX_ITERATIONS,
        ..Default::default()
    };

    let runs: Vec<(Candidate, usize)> = starts
        .par_iter()
        .map(|start| {
            // Evaluation only fails on dimension mismatches, impossible here.
            let r = minimize(
                |x| -score_at(x[0], x[1]).unwrap_or(f64::NEG_INFINITY),
                start,
                &bounds,
                &opts,
            );
            let theta = [r.x[0], r.x[1]];
            (Candidate { theta, value: -r.f }, r.iterations)
        })
        .collect();

    let iterations = runs.iter().map(|(_, it)| it).sum();
    let mut best = Candidate {
        theta: [DEFAULT_THETA_U, DEFAULT_THETA_V],
        value: witness_value,
    };
    for (c, _) in runs {
        if c.value > best.value {
            best = c;
        }
    }
    let [theta_u, theta_v] = best.theta;
    let (alpha, beta) = alpha_beta(theta_u, theta_v)?;
    let objective_value = objective.score(alpha, beta);
    Ok(OptimizationResult {
        phi,
        theta_u,
        theta_v,
        objective_value,
        objective_id: objective.to_string(),
        iterations,
        alpha,
        beta,
        feasible: objective.feasible(alpha, beta),
        witness_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::evaluate_model;

    #[test]
    fn scan_grid_includes_endpoints() {
        let pts = phi_scan(0.0, 0.785, 5, DEFAULT_THETA_U, DEFAULT_THETA_V).unwrap();
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0].phi, 0.0);
        assert_eq!(pts[4].phi, 0.785);
        assert!((pts[0].alpha - 1.1188).abs() < 1e-2);
        assert!((pts[0].beta - 3.9443).abs() < 1e-2);
        assert!(phi_scan(0.0, 1.0, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn scan_matches_direct_route() {
        for p in phi_scan(0.0, 1.5, 7, 2.0, 0.3).unwrap() {
            let r = evaluate_model(&QuantumModel::new(p.phi, 2.0, 0.3)).unwrap();
            assert!((r.alpha - p.alpha).abs() < 1e-12);
            assert!((r.beta - p.beta).abs() < 1e-12);
        }
    }

    #[test]
    fn default_window() {
        let w = joint_violation_window(DEFAULT_THETA_U, DEFAULT_THETA_V, DEFAULT_RESOLUTION)
            .unwrap()
            .unwrap();
        assert!(w.contains(0.30, 0.54), "{w:?}");
        assert!(w.within(0.27, 0.57), "{w:?}");
        // Each endpoint sits on one of the two bounds.
        for phi in [w.phi_lo, w.phi_hi] {
            let r = evaluate_model(&QuantumModel::at_phi(phi)).unwrap();
            assert_eq!(r.region, Region::Both);
            let slope = 3.0;
            let near = |v: f64, bound: f64| (v - bound).abs() < 2.0 * DEFAULT_RESOLUTION * slope;
            assert!(near(r.alpha, 2.0) || near(r.beta, 3.0), "{phi}: {r:?}");
        }
    }

    #[test]
    fn degenerate_family_has_no_window() {
        assert_eq!(joint_violation_window(0.0, 0.0, 1e-3).unwrap(), None);
        assert!(joint_violation_window(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn objective_parsing() {
        assert_eq!(
            "max_min_margin".parse::<Objective>().unwrap(),
            Objective::MaxMinMargin
        );
        assert_eq!(
            "weighted_sum(0.25)".parse::<Objective>().unwrap(),
            Objective::WeightedSum(0.25)
        );
        assert_eq!(
            "max_beta_given_alpha_above(0.1)"
                .parse::<Objective>()
                .unwrap(),
            Objective::MaxBetaGivenAlphaAbove(0.1)
        );
        assert!("weighted_sum".parse::<Objective>().is_err());
        let o = Objective::WeightedSum(0.5);
        assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
    }

    #[test]
    fn optimizer_beats_witness_and_reevaluates() {
        let r = optimize_state_params(0.421, Objective::MaxMinMargin).unwrap();
        assert!(r.objective_value >= 0.32, "{r:?}");
        assert!(r.objective_value >= r.witness_value);
        assert!(r.feasible);
        let again = evaluate_model(&QuantumModel::new(0.421, r.theta_u, r.theta_v)).unwrap();
        let v = Objective::MaxMinMargin.score(again.alpha, again.beta);
        assert!((v - r.objective_value).abs() < 1e-9);
    }

    #[test]
    fn pure_beta_reaches_kcbs_maximum() {
        let r = optimize_state_params(0.0, Objective::WeightedSum(0.0)).unwrap();
        assert!(r.beta >= 3.9443 - 1e-4, "{r:?}");
        assert_eq!(r.objective_value, r.beta);
    }

    #[test]
    fn unreachable_constraint_is_reported() {
        // α ≤ 2√2 for any state, so α ≥ 2 + 1 cannot be met.
        let r = optimize_state_params(0.4, Objective::MaxBetaGivenAlphaAbove(1.0)).unwrap();
        assert!(!r.feasible);
        let r = optimize_state_params(0.4, Objective::MaxBetaGivenAlphaAbove(0.1)).unwrap();
        assert!(r.feasible && r.alpha >= 2.1 && r.beta > 3.0, "{r:?}");
    }
}
