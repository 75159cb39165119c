//! Measurement scenario, behaviors and their consistency conditions.
//!
//! Alice holds two dichotomic measurements, Bob holds five arranged on a
//! pentagon: adjacent measurements are compatible and are measured together.
//! A [`Behavior`] stores one probability table per measured joint context
//! `(x, bob-context)`. Cells are ordered lexicographically over `(a, b1, b2, ...)`
//! with `-1` before `+1`, so the Alice outcome is the most significant bit.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for consistency checks on analytic behaviors.
pub const ANALYTIC_TOL: f64 = 1e-10;

/// Tolerance used when validating that a table sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

pub type Outcome = i8;

/// Both outcomes of a dichotomic measurement in storage order.
pub const OUTCOMES: [Outcome; 2] = [-1, 1];

/// Outcome encoded by bit `bit` of a cell index.
#[inline]
pub fn outcome_of_bit(bit: usize) -> Outcome {
    if bit == 0 {
        -1
    } else {
        1
    }
}

/// Decodes a cell index into `len` outcomes, most significant first.
pub fn cell_outcomes(index: usize, len: usize) -> Vec<Outcome> {
    (0..len)
        .map(|i| outcome_of_bit((index >> (len - 1 - i)) & 1))
        .collect()
}

/// Inverse of [`cell_outcomes`].
pub fn cell_index(outcomes: &[Outcome]) -> usize {
    outcomes
        .iter()
        .fold(0, |acc, &o| (acc << 1) | usize::from(o > 0))
}

/// A set of mutually compatible Bob measurements, stored in measurement order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context(Vec<usize>);

impl Context {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::structural("empty context"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::structural(format!(
                    "context {labels:?} repeats measurement {l}"
                )));
            }
        }
        Ok(Context(labels))
    }

    pub fn singleton(y: usize) -> Self {
        Context(vec![y])
    }

    pub fn pair(y: usize, y2: usize) -> Result<Self> {
        Self::new(vec![y, y2])
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn position(&self, y: usize) -> Option<usize> {
        self.0.iter().position(|&l| l == y)
    }

    pub fn contains(&self, y: usize) -> bool {
        self.0.contains(&y)
    }

    /// Number of cells in Bob's table for this context.
    pub fn cells(&self) -> usize {
        1 << self.arity()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Alice setting paired with a Bob context.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointContext {
    pub x: usize,
    pub bob: Context,
}

impl JointContext {
    pub fn new(x: usize, bob: Context) -> Self {
        JointContext { x, bob }
    }

    /// Cells of the joint table: Alice outcome times Bob outcomes.
    pub fn cells(&self) -> usize {
        2 * self.bob.cells()
    }

    /// Serialization key, e.g. `x0_ctx2_3`.
    pub fn key(&self) -> String {
        let labels: Vec<String> = self.bob.labels().iter().map(|l| l.to_string()).collect();
        format!("x{}_ctx{}", self.x, labels.join("_"))
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        let bad = || Error::structural(format!("malformed behavior key `{key}`"));
        let rest = key.strip_prefix('x').ok_or_else(bad)?;
        let (x, ctx) = rest.split_once("_ctx").ok_or_else(bad)?;
        let x = x.parse().map_err(|_| bad())?;
        let labels = ctx
            .split('_')
            .map(|s| s.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        Ok(JointContext::new(x, Context::new(labels)?))
    }
}

impl fmt::Display for JointContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={}, {})", self.x, self.bob)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    alice_settings: usize,
    bob_settings: usize,
    bob_contexts: Vec<Context>,
    joint_contexts: Vec<JointContext>,
}

impl Scenario {
    pub fn new(
        alice_settings: usize,
        bob_settings: usize,
        bob_contexts: Vec<Context>,
        joint_contexts: Vec<JointContext>,
    ) -> Result<Self> {
        for ctx in &bob_contexts {
            if let Some(&l) = ctx.labels().iter().find(|&&l| l >= bob_settings) {
                return Err(Error::structural(format!(
                    "context {ctx} uses unknown Bob measurement {l}"
                )));
            }
        }
        for jc in &joint_contexts {
            if jc.x >= alice_settings {
                return Err(Error::structural(format!("unknown Alice setting in {jc}")));
            }
            if !bob_contexts.contains(&jc.bob) {
                return Err(Error::structural(format!(
                    "joint context {jc} refers to an undeclared Bob context"
                )));
            }
        }
        Ok(Scenario {
            alice_settings,
            bob_settings,
            bob_contexts,
            joint_contexts,
        })
    }

    /// The scenario of the joint test: the five pentagon edges
    /// `{j, j+1 mod 5}` plus the singleton `{0}`, each measured with both
    /// Alice settings.
    pub fn chsh_kcbs() -> Self {
        let mut contexts: Vec<Context> = (0..5).map(|j| Context(vec![j, (j + 1) % 5])).collect();
        contexts.push(Context::singleton(0));
        let joint = (0..2)
            .flat_map(|x| {
                contexts
                    .iter()
                    .map(move |c| JointContext::new(x, c.clone()))
            })
            .collect();
        let s = Scenario {
            alice_settings: 2,
            bob_settings: 5,
            bob_contexts: contexts,
            joint_contexts: joint,
        };
        debug_assert!(s.check_pentagon().is_ok());
        s
    }

    pub fn alice_settings(&self) -> usize {
        self.alice_settings
    }

    pub fn bob_settings(&self) -> usize {
        self.bob_settings
    }

    pub fn bob_contexts(&self) -> &[Context] {
        &self.bob_contexts
    }

    pub fn joint_contexts(&self) -> &[JointContext] {
        &self.joint_contexts
    }

    /// Pair contexts, in declaration order.
    pub fn pentagon_edges(&self) -> impl Iterator<Item = &Context> {
        self.bob_contexts.iter().filter(|c| c.arity() == 2)
    }

    /// Verifies that every pair context joins cyclically adjacent labels.
    pub fn check_pentagon(&self) -> Result<()> {
        let n = self.bob_settings;
        for ctx in self.pentagon_edges() {
            let (a, b) = (ctx.labels()[0], ctx.labels()[1]);
            if (a + 1) % n != b && (b + 1) % n != a {
                return Err(Error::structural(format!(
                    "context {ctx} is not a cycle edge"
                )));
            }
        }
        Ok(())
    }
}

fn validate_table(name: &dyn fmt::Display, table: &[f64], cells: usize) -> Result<()> {
    if table.len() != cells {
        return Err(Error::structural(format!(
            "table for {name} has {} cells, expected {cells}",
            table.len()
        )));
    }
    if let Some(p) = table
        .iter()
        .find(|p| !p.is_finite() || **p < -NORMALIZATION_TOL)
    {
        return Err(Error::domain(format!(
            "table for {name} has invalid entry {p}"
        )));
    }
    let total: f64 = table.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::domain(format!(
            "table for {name} sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// Joint probabilities `p(a, b | x, y)` for every measured joint context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<String, Vec<f64>>",
    into = "BTreeMap<String, Vec<f64>>"
)]
pub struct Behavior {
    tables: BTreeMap<JointContext, Vec<f64>>,
}

impl Behavior {
    pub fn new(tables: BTreeMap<JointContext, Vec<f64>>) -> Result<Self> {
        for (jc, t) in &tables {
            validate_table(jc, t, jc.cells())?;
        }
        Ok(Behavior { tables })
    }

    /// Every joint context of `scenario` filled with the same uniform table.
    pub fn uniform(scenario: &Scenario) -> Self {
        let tables = scenario
            .joint_contexts()
            .iter()
            .map(|jc| (jc.clone(), vec![1.0 / jc.cells() as f64; jc.cells()]))
            .collect();
        Behavior { tables }
    }

    pub fn table(&self, jc: &JointContext) -> Option<&[f64]> {
        self.tables.get(jc).map(Vec::as_slice)
    }

    pub fn tables(&self) -> &BTreeMap<JointContext, Vec<f64>> {
        &self.tables
    }

    /// Largest deviation of any table's sum from one.
    pub fn normalization_error(&self) -> f64 {
        self.tables
            .values()
            .map(|t| (t.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl TryFrom<BTreeMap<String, Vec<f64>>> for Behavior {
    type Error = Error;

    fn try_from(raw: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let tables = raw
            .into_iter()
            .map(|(k, v)| Ok((JointContext::parse_key(&k)?, v)))
            .collect::<Result<_>>()?;
        Behavior::new(tables)
    }
}

impl From<Behavior> for BTreeMap<String, Vec<f64>> {
    fn from(b: Behavior) -> Self {
        b.tables.into_iter().map(|(k, v)| (k.key(), v)).collect()
    }
}

/// Bob's marginal behavior `p(b | y)` per context.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalBehavior {
    tables: BTreeMap<Context, Vec<f64>>,
    /// Largest cross-x difference of any cell, per context (zero when only
    /// one Alice setting was measured with it).
    spread: BTreeMap<Context, f64>,
}

impl MarginalBehavior {
    pub fn new(tables: BTreeMap<Context, Vec<f64>>) -> Result<Self> {
        for (c, t) in &tables {
            validate_table(c, t, c.cells())?;
        }
        let spread = tables.keys().map(|c| (c.clone(), 0.0)).collect();
        Ok(MarginalBehavior { tables, spread })
    }

    pub fn uniform(scenario: &Scenario) -> Self {
        let tables: BTreeMap<_, _> = scenario
            .bob_contexts()
            .iter()
            .map(|c| (c.clone(), vec![1.0 / c.cells() as f64; c.cells()]))
            .collect();
        let spread = tables.keys().map(|c| (c.clone(), 0.0)).collect();
        MarginalBehavior { tables, spread }
    }

    pub fn table(&self, c: &Context) -> Option<&[f64]> {
        self.tables.get(c).map(Vec::as_slice)
    }

    pub fn tables(&self) -> &BTreeMap<Context, Vec<f64>> {
        &self.tables
    }

    pub fn spread(&self) -> &BTreeMap<Context, f64> {
        &self.spread
    }

    pub fn max_spread(&self) -> f64 {
        self.spread.values().copied().fold(0.0, f64::max)
    }

    /// Probability that measurement `y` yields `+1` within context `c`.
    pub fn prob_plus(&self, c: &Context, y: usize) -> Option<f64> {
        let pos = c.position(y)?;
        let table = self.tables.get(c)?;
        Some(single_plus(table, c.arity(), pos))
    }
}

/// Probability of `+1` at position `pos` of a table over `len` outcomes.
fn single_plus(table: &[f64], len: usize, pos: usize) -> f64 {
    let shift = len - 1 - pos;
    table
        .iter()
        .enumerate()
        .filter(|(i, _)| (i >> shift) & 1 == 1)
        .map(|(_, p)| p)
        .sum()
}

/// Sums out Alice's outcome and averages the result over every Alice setting
/// measured with each Bob context. The cross-x spread is kept for diagnostics.
pub fn marginalize_bob(behavior: &Behavior) -> Result<MarginalBehavior> {
    let mut grouped: BTreeMap<Context, Vec<Vec<f64>>> = BTreeMap::new();
    for (jc, table) in &behavior.tables {
        let cells = jc.bob.cells();
        if table.len() != 2 * cells {
            return Err(Error::structural(format!(
                "table for {jc} has {} cells, expected {}",
                table.len(),
                2 * cells
            )));
        }
        let bob: Vec<f64> = (0..cells).map(|b| table[b] + table[cells + b]).collect();
        grouped.entry(jc.bob.clone()).or_default().push(bob);
    }
    let mut tables = BTreeMap::new();
    let mut spread = BTreeMap::new();
    for (ctx, per_x) in grouped {
        let n = per_x.len() as f64;
        let cells = ctx.cells();
        let mut mean = vec![0.0; cells];
        let mut worst = 0.0_f64;
        for b in 0..cells {
            let (lo, hi) = per_x
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                    (lo.min(t[b]), hi.max(t[b]))
                });
            worst = worst.max(hi - lo);
            mean[b] = per_x.iter().map(|t| t[b]).sum::<f64>() / n;
        }
        spread.insert(ctx.clone(), worst);
        tables.insert(ctx, mean);
    }
    Ok(MarginalBehavior { tables, spread })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub lhs: f64,
    pub rhs: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_violation: f64,
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    fn record(&mut self, condition: String, lhs: f64, rhs: f64, tol: f64) {
        let difference = (lhs - rhs).abs();
        if difference > tol {
            self.max_violation = self.max_violation.max(difference);
            self.violations.push(Violation {
                condition,
                lhs,
                rhs,
                difference,
            });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares `p(b | x, y)` across Alice settings and `p(a | x, y)` across Bob
/// contexts. Every pair differing by more than `tol` is listed.
pub fn check_no_signalling(behavior: &Behavior, tol: f64) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();

    // Bob's marginal must not depend on x.
    let mut by_ctx: BTreeMap<&Context, Vec<(usize, &[f64])>> = BTreeMap::new();
    for (jc, t) in &behavior.tables {
        by_ctx.entry(&jc.bob).or_default().push((jc.x, t));
    }
    for (ctx, rows) in &by_ctx {
        let cells = ctx.cells();
        let bob = |t: &[f64], b: usize| t[b] + t[cells + b];
        let (x0, t0) = rows[0];
        for &(x1, t1) in &rows[1..] {
            for b in 0..cells {
                report.record(
                    format!(
                        "bob-marginal ctx={ctx} b={:?} x={x0} vs x={x1}",
                        cell_outcomes(b, ctx.arity())
                    ),
                    bob(t0, b),
                    bob(t1, b),
                    tol,
                );
            }
        }
    }

    // Alice's marginal must not depend on Bob's context.
    let mut by_x: BTreeMap<usize, Vec<(&Context, &[f64])>> = BTreeMap::new();
    for (jc, t) in &behavior.tables {
        by_x.entry(jc.x).or_default().push((&jc.bob, t));
    }
    for (x, rows) in &by_x {
        let alice_plus = |t: &[f64]| t[t.len() / 2..].iter().sum::<f64>();
        let (c0, t0) = rows[0];
        for &(c1, t1) in &rows[1..] {
            report.record(
                format!("alice-marginal x={x} a=+1 ctx={c0} vs ctx={c1}"),
                alice_plus(t0),
                alice_plus(t1),
                tol,
            );
        }
    }
    report
}

/// Compares the single-measurement marginal `p(b=+1 | y)` across every
/// context containing `y`.
pub fn check_no_disturbance(marginal: &MarginalBehavior, tol: f64) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let mut per_label: BTreeMap<usize, Vec<(&Context, f64)>> = BTreeMap::new();
    for (ctx, table) in &marginal.tables {
        for (pos, &y) in ctx.labels().iter().enumerate() {
            per_label
                .entry(y)
                .or_default()
                .push((ctx, single_plus(table, ctx.arity(), pos)));
        }
    }
    for (y, rows) in &per_label {
        let (c0, p0) = rows[0];
        for &(c1, p1) in &rows[1..] {
            report.record(
                format!("measurement {y} b=+1 ctx={c0} vs ctx={c1}"),
                p0,
                p1,
                tol,
            );
        }
    }
    report
}

/// `Σ_j (p_j − p_j')²` over the pair contexts, where `p_j` is the probability
/// of `b = +1` for measurement `j` in the first pair context (pentagon order)
/// that contains it and `p_j'` the same in the second.
pub fn disturbance_distance(marginal: &MarginalBehavior) -> Result<f64> {
    let mut per_label: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (ctx, table) in marginal.tables.iter().filter(|(c, _)| c.arity() == 2) {
        for (pos, &y) in ctx.labels().iter().enumerate() {
            per_label
                .entry(y)
                .or_default()
                .push(single_plus(table, 2, pos));
        }
    }
    let mut total = 0.0;
    for (y, ps) in &per_label {
        if ps.len() != 2 {
            return Err(Error::structural(format!(
                "measurement {y} appears in {} pair contexts, expected 2",
                ps.len()
            )));
        }
        total += (ps[0] - ps[1]).powi(2);
    }
    if per_label.is_empty() {
        return Err(Error::structural("marginal has no pair contexts"));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_table(cells: usize, hot: usize) -> Vec<f64> {
        let mut t = vec![0.0; cells];
        t[hot] = 1.0;
        t
    }

    #[test]
    fn cell_index_round_trip() {
        for len in 1..4 {
            for i in 0..(1 << len) {
                assert_eq!(cell_index(&cell_outcomes(i, len)), i);
            }
        }
        assert_eq!(cell_outcomes(0, 3), vec![-1, -1, -1]);
        assert_eq!(cell_outcomes(4, 3), vec![1, -1, -1]);
    }

    #[test]
    fn standard_scenario_shape() {
        let s = Scenario::chsh_kcbs();
        assert_eq!(s.bob_contexts().len(), 6);
        assert_eq!(s.joint_contexts().len(), 12);
        assert_eq!(s.pentagon_edges().count(), 5);
        s.check_pentagon().unwrap();
        assert!(s.bob_contexts().contains(&Context::singleton(0)));
    }

    #[test]
    fn context_rejects_repeats_and_unknown_labels() {
        assert!(Context::new(vec![1, 1]).is_err());
        let bad = Scenario::new(2, 5, vec![Context::pair(0, 7).unwrap()], vec![]);
        assert!(matches!(bad, Err(Error::Structural(_))));
        let s = Scenario::new(2, 5, vec![Context::pair(0, 2).unwrap()], vec![]).unwrap();
        assert!(s.check_pentagon().is_err());
    }

    #[test]
    fn keys_round_trip() {
        let jc = JointContext::new(1, Context::pair(4, 0).unwrap());
        assert_eq!(jc.key(), "x1_ctx4_0");
        assert_eq!(JointContext::parse_key("x1_ctx4_0").unwrap(), jc);
        assert_eq!(
            JointContext::parse_key("x0_ctx0").unwrap(),
            JointContext::new(0, Context::singleton(0))
        );
        assert!(JointContext::parse_key("y0_ctx0").is_err());
        assert!(JointContext::parse_key("x0_ctx0_0").is_err());
    }

    #[test]
    fn uniform_marginal_is_uniform() {
        let s = Scenario::chsh_kcbs();
        let m = marginalize_bob(&Behavior::uniform(&s)).unwrap();
        for (c, t) in m.tables() {
            for p in t {
                assert!((p - 1.0 / c.cells() as f64).abs() < 1e-15);
            }
        }
        assert_eq!(m.max_spread(), 0.0);
        assert!(check_no_signalling(&Behavior::uniform(&s), ANALYTIC_TOL).is_empty());
        assert!(check_no_disturbance(&m, ANALYTIC_TOL).is_empty());
        assert!(check_no_disturbance(&MarginalBehavior::uniform(&s), ANALYTIC_TOL).is_empty());
        assert_eq!(disturbance_distance(&m).unwrap(), 0.0);
    }

    #[test]
    fn unnormalized_and_misshaped_tables_rejected() {
        let jc = JointContext::new(0, Context::singleton(0));
        let mut t = BTreeMap::new();
        t.insert(jc.clone(), vec![0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(Behavior::new(t), Err(Error::Domain(_))));
        let mut t = BTreeMap::new();
        t.insert(jc, vec![0.5, 0.5]);
        assert!(matches!(Behavior::new(t), Err(Error::Structural(_))));
    }

    #[test]
    fn injected_alice_signalling_detected() {
        let s = Scenario::chsh_kcbs();
        let mut tables = Behavior::uniform(&s).tables().clone();
        // a = +1 with certainty in context {0}, uniform elsewhere.
        let jc = JointContext::new(0, Context::singleton(0));
        tables.insert(jc, vec![0.0, 0.0, 0.5, 0.5]);
        let b = Behavior::new(tables).unwrap();
        let r = check_no_signalling(&b, ANALYTIC_TOL);
        assert!(!r.is_empty());
        assert!(r
            .violations
            .iter()
            .any(|v| v.condition.starts_with("alice-marginal x=0")));
        assert!((r.max_violation - 0.5).abs() < 1e-15);
        let largest = r
            .violations
            .iter()
            .map(|v| v.difference)
            .fold(0.0, f64::max);
        assert_eq!(r.max_violation, largest);
    }

    #[test]
    fn injected_bob_signalling_detected() {
        let s = Scenario::chsh_kcbs();
        let mut tables = Behavior::uniform(&s).tables().clone();
        let jc = JointContext::new(1, Context::singleton(0));
        tables.insert(jc, vec![0.5, 0.0, 0.5, 0.0]);
        let b = Behavior::new(tables).unwrap();
        let r = check_no_signalling(&b, ANALYTIC_TOL);
        assert!(r
            .violations
            .iter()
            .any(|v| v.condition.starts_with("bob-marginal ctx={0}")));
    }

    #[test]
    fn context_dependent_assignment_disturbs() {
        // B_1 = +1 in {0,1}, B_1 = -1 in {1,2}; B_0 = B_2 = +1.
        let mut t = BTreeMap::new();
        t.insert(
            Context::pair(0, 1).unwrap(),
            point_table(4, cell_index(&[1, 1])),
        );
        t.insert(
            Context::pair(1, 2).unwrap(),
            point_table(4, cell_index(&[-1, 1])),
        );
        let m = MarginalBehavior::new(t).unwrap();
        let r = check_no_disturbance(&m, ANALYTIC_TOL);
        assert_eq!(r.violations.len(), 1);
        assert!((r.violations[0].difference - 1.0).abs() < 1e-15);
        assert!(r.violations[0].condition.starts_with("measurement 1"));
    }

    #[test]
    fn distance_arithmetic() {
        let s = Scenario::chsh_kcbs();
        let mut tables = MarginalBehavior::uniform(&s).tables().clone();
        // Only B_2's marginal moves: p(B_2=+1) = 0.25 + 0.3 = 0.55 in {1,2}.
        let c = Context::pair(1, 2).unwrap();
        tables.insert(c, vec![0.25, 0.25, 0.2, 0.3]);
        let m = MarginalBehavior::new(tables).unwrap();
        let d = disturbance_distance(&m).unwrap();
        assert!((d - 0.0025).abs() < 1e-15, "{d}");

        // p(B_1=+1) flipped from 0.5 to 0.6 in one context.
        let mut tables = MarginalBehavior::uniform(&s).tables().clone();
        tables.insert(Context::pair(1, 2).unwrap(), vec![0.2, 0.2, 0.3, 0.3]);
        let m = MarginalBehavior::new(tables).unwrap();
        assert!((disturbance_distance(&m).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn distance_requires_two_contexts() {
        let mut t = BTreeMap::new();
        t.insert(Context::pair(0, 1).unwrap(), vec![0.25; 4]);
        let m = MarginalBehavior::new(t).unwrap();
        assert!(matches!(
            disturbance_distance(&m),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn behavior_json_layout() {
        let s = Scenario::chsh_kcbs();
        let b = Behavior::uniform(&s);
        let json = b.to_json().unwrap();
        assert!(json.contains("\"x0_ctx2_3\""));
        assert!(json.contains("\"x1_ctx4_0\""));
        assert!(json.contains("\"x1_ctx0\""));
        assert_eq!(Behavior::from_json(&json).unwrap(), b);
        assert!(Behavior::from_json("{\"x0_ctx0\": [1.0, 0.0]}").is_err());
    }
}
