//! Deterministic hidden-variable strategies and exhaustive classical bounds.
//!
//! Local strategies let Bob's response depend on his whole context (only
//! locality is imposed), so the two edges containing a measurement may assign
//! it different values. Noncontextual strategies assign one value per
//! measurement. All arithmetic on strategies is integer.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::{CorrelatorKey, Functional};
use crate::scenario::{
    cell_index, outcome_of_bit, Behavior, Context, MarginalBehavior, Outcome, Scenario,
};

/// A strategy whose correlators are all ±1.
pub trait DeterministicStrategy {
    /// Value of a correlator, or `None` when the strategy does not define it.
    fn correlator(&self, key: CorrelatorKey) -> Option<i32>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LocalDeterministicStrategy {
    /// `alice[x]` is the outcome of `A_x`.
    pub alice: Vec<Outcome>,
    /// Outcome tuple per Bob context, in scenario order.
    pub bob: Vec<(Context, Vec<Outcome>)>,
}

impl LocalDeterministicStrategy {
    pub fn bob_assignment(&self, ctx: &Context) -> Option<&[Outcome]> {
        self.bob
            .iter()
            .find(|(c, _)| c == ctx)
            .map(|(_, o)| o.as_slice())
    }

    fn bob_product(&self, labels: &[usize]) -> Option<i32> {
        let ctx = Context::new(labels.to_vec()).ok()?;
        self.bob_assignment(&ctx)
            .map(|o| o.iter().map(|&b| i32::from(b)).product())
    }
}

impl DeterministicStrategy for LocalDeterministicStrategy {
    fn correlator(&self, key: CorrelatorKey) -> Option<i32> {
        match key {
            CorrelatorKey::AB(x, y) => {
                Some(i32::from(*self.alice.get(x)?) * self.bob_product(&[y])?)
            }
            CorrelatorKey::ABB(x, y, y2) => {
                Some(i32::from(*self.alice.get(x)?) * self.bob_product(&[y, y2])?)
            }
            CorrelatorKey::BB(y, y2) => self.bob_product(&[y, y2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NoncontextualStrategy {
    /// `bob[y]` is the outcome of `B_y` in every context.
    pub bob: Vec<Outcome>,
}

impl DeterministicStrategy for NoncontextualStrategy {
    fn correlator(&self, key: CorrelatorKey) -> Option<i32> {
        match key {
            CorrelatorKey::BB(y, y2) => {
                Some(i32::from(*self.bob.get(y)?) * i32::from(*self.bob.get(y2)?))
            }
            _ => None,
        }
    }
}

/// Local Alice assignment combined with a noncontextual Bob assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProductStrategy {
    pub alice: Vec<Outcome>,
    pub bob: NoncontextualStrategy,
}

impl DeterministicStrategy for ProductStrategy {
    fn correlator(&self, key: CorrelatorKey) -> Option<i32> {
        let b = |y: usize| self.bob.bob.get(y).map(|&v| i32::from(v));
        let a = |x: usize| self.alice.get(x).map(|&v| i32::from(v));
        match key {
            CorrelatorKey::AB(x, y) => Some(a(x)? * b(y)?),
            CorrelatorKey::ABB(x, y, y2) => Some(a(x)? * b(y)? * b(y2)?),
            CorrelatorKey::BB(..) => self.bob.correlator(key),
        }
    }
}

/// Whether Bob's singleton contexts must agree with the pair contexts
/// containing the same measurement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LocalVariant {
    #[default]
    Unconstrained,
    SingletonConsistent,
}

fn bits_msb_first(index: usize, width: usize) -> impl Iterator<Item = Outcome> {
    (0..width).map(move |i| outcome_of_bit((index >> (width - 1 - i)) & 1))
}

/// Every local deterministic strategy, Alice's assignment most significant,
/// then Bob's contexts in scenario order; `-1` before `+1` throughout.
pub fn enumerate_local_vertices(scenario: &Scenario) -> Vec<LocalDeterministicStrategy> {
    enumerate_local_vertices_with(scenario, LocalVariant::Unconstrained)
}

pub fn enumerate_local_vertices_with(
    scenario: &Scenario,
    variant: LocalVariant,
) -> Vec<LocalDeterministicStrategy> {
    let alice_bits = scenario.alice_settings();
    let arities: Vec<usize> = scenario.bob_contexts().iter().map(Context::arity).collect();
    let width = alice_bits + arities.iter().sum::<usize>();
    (0..1usize << width)
        .map(|index| {
            let mut bits = bits_msb_first(index, width);
            let alice = bits.by_ref().take(alice_bits).collect();
            let bob = scenario
                .bob_contexts()
                .iter()
                .map(|c| (c.clone(), bits.by_ref().take(c.arity()).collect()))
                .collect();
            LocalDeterministicStrategy { alice, bob }
        })
        .filter(|s| variant == LocalVariant::Unconstrained || singleton_consistent(s))
        .collect()
}

fn singleton_consistent(s: &LocalDeterministicStrategy) -> bool {
    s.bob
        .iter()
        .filter(|(c, _)| c.arity() == 1)
        .all(|(single, v)| {
            let y = single.labels()[0];
            s.bob
                .iter()
                .filter(|(c, _)| c.arity() > 1)
                .filter_map(|(c, o)| c.position(y).map(|p| o[p]))
                .all(|o| o == v[0])
        })
}

/// The `2^n` per-measurement assignments, `B_0` most significant.
pub fn enumerate_noncontextual_vertices(scenario: &Scenario) -> Vec<NoncontextualStrategy> {
    let n = scenario.bob_settings();
    (0..1usize << n)
        .map(|index| NoncontextualStrategy {
            bob: bits_msb_first(index, n).collect(),
        })
        .collect()
}

/// Alice's local assignments crossed with Bob's noncontextual ones.
pub fn enumerate_product_strategies(scenario: &Scenario) -> Vec<ProductStrategy> {
    let na = scenario.alice_settings();
    let bob = enumerate_noncontextual_vertices(scenario);
    (0..1usize << na)
        .flat_map(|index| {
            let alice: Vec<Outcome> = bits_msb_first(index, na).collect();
            bob.iter().map(move |b| ProductStrategy {
                alice: alice.clone(),
                bob: b.clone(),
            })
        })
        .collect()
}

/// Exhaustive maximum; ties resolve to the earliest vertex.
pub fn max_functional<'a, S: DeterministicStrategy>(
    vertices: &'a [S],
    functional: &Functional,
) -> Result<(i32, &'a S)> {
    extremum(vertices, functional, |new, best| new > best)
}

pub fn min_functional<'a, S: DeterministicStrategy>(
    vertices: &'a [S],
    functional: &Functional,
) -> Result<(i32, &'a S)> {
    extremum(vertices, functional, |new, best| new < best)
}

fn extremum<'a, S: DeterministicStrategy>(
    vertices: &'a [S],
    functional: &Functional,
    better: impl Fn(i32, i32) -> bool,
) -> Result<(i32, &'a S)> {
    let mut best: Option<(i32, &S)> = None;
    for v in vertices {
        let value = functional.evaluate_integer(|k| v.correlator(k))?;
        if best.is_none_or(|(b, _)| better(value, b)) {
            best = Some((value, v));
        }
    }
    best.ok_or_else(|| Error::domain("no vertices to optimise over"))
}

pub fn max_functional_local<'a>(
    vertices: &'a [LocalDeterministicStrategy],
    functional: &Functional,
) -> Result<(i32, &'a LocalDeterministicStrategy)> {
    max_functional(vertices, functional)
}

pub fn max_functional_noncontextual<'a>(
    vertices: &'a [NoncontextualStrategy],
    functional: &Functional,
) -> Result<(i32, &'a NoncontextualStrategy)> {
    max_functional(vertices, functional)
}

fn point_table(cells: usize, hot: usize) -> Vec<f64> {
    let mut t = vec![0.0; cells];
    t[hot] = 1.0;
    t
}

/// Deterministic behavior induced by a local strategy on every joint context.
pub fn local_strategy_behavior(
    strategy: &LocalDeterministicStrategy,
    scenario: &Scenario,
) -> Result<Behavior> {
    let mut tables = BTreeMap::new();
    for jc in scenario.joint_contexts() {
        let a = *strategy
            .alice
            .get(jc.x)
            .ok_or_else(|| Error::structural(format!("strategy lacks Alice setting {}", jc.x)))?;
        let b = strategy
            .bob_assignment(&jc.bob)
            .ok_or_else(|| Error::structural(format!("strategy lacks context {}", jc.bob)))?;
        let mut outcomes = vec![a];
        outcomes.extend_from_slice(b);
        tables.insert(jc.clone(), point_table(jc.cells(), cell_index(&outcomes)));
    }
    Behavior::new(tables)
}

/// Deterministic Bob marginal induced by a noncontextual strategy.
pub fn noncontextual_strategy_marginal(
    strategy: &NoncontextualStrategy,
    scenario: &Scenario,
) -> Result<MarginalBehavior> {
    let mut tables = BTreeMap::new();
    for ctx in scenario.bob_contexts() {
        let outcomes = ctx
            .labels()
            .iter()
            .map(|&y| {
                strategy
                    .bob
                    .get(y)
                    .copied()
                    .ok_or_else(|| Error::structural(format!("strategy lacks measurement {y}")))
            })
            .collect::<Result<Vec<_>>>()?;
        tables.insert(ctx.clone(), point_table(ctx.cells(), cell_index(&outcomes)));
    }
    MarginalBehavior::new(tables)
}

/// Deterministic behavior of a product strategy on every joint context.
pub fn product_strategy_behavior(
    strategy: &ProductStrategy,
    scenario: &Scenario,
) -> Result<Behavior> {
    let bob = scenario
        .bob_contexts()
        .iter()
        .map(|c| {
            let o = c
                .labels()
                .iter()
                .map(|&y| strategy.bob.bob.get(y).copied())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::structural(format!("strategy lacks a label of {c}")))?;
            Ok((c.clone(), o))
        })
        .collect::<Result<_>>()?;
    local_strategy_behavior(
        &LocalDeterministicStrategy {
            alice: strategy.alice.clone(),
            bob,
        },
        scenario,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::{alpha_chsh, beta_kcbs, correlators_from_behavior};
    use crate::scenario::{
        check_no_disturbance, check_no_signalling, disturbance_distance, marginalize_bob,
        JointContext,
    };

    #[test]
    fn vertex_counts() {
        let s = Scenario::chsh_kcbs();
        assert_eq!(enumerate_local_vertices(&s).len(), 4 * 2 * 4usize.pow(5));
        assert_eq!(enumerate_noncontextual_vertices(&s).len(), 32);
        assert_eq!(enumerate_product_strategies(&s).len(), 128);
        // B_0 is fixed by the singleton and must match both edges containing it.
        let constrained = enumerate_local_vertices_with(&s, LocalVariant::SingletonConsistent);
        assert_eq!(constrained.len(), 4 * 2 * 4usize.pow(3) * 2 * 2);
    }

    #[test]
    fn enumeration_order() {
        let s = Scenario::chsh_kcbs();
        let v = enumerate_local_vertices(&s);
        assert_eq!(v[0].alice, vec![-1, -1]);
        assert!(v[0].bob.iter().all(|(_, o)| o.iter().all(|&b| b == -1)));
        // Last context (singleton {0}) varies fastest.
        assert_eq!(v[1].bob.last().unwrap().1, vec![1]);
        assert_eq!(v[1].alice, vec![-1, -1]);
        let last = v.last().unwrap();
        assert!(last.alice.iter().all(|&a| a == 1));
        let nc = enumerate_noncontextual_vertices(&s);
        assert_eq!(nc[1].bob, vec![-1, -1, -1, -1, 1]);
    }

    #[test]
    fn all_plus_strategy_values() {
        let s = Scenario::chsh_kcbs();
        let v = enumerate_local_vertices(&s);
        let all_plus = v.last().unwrap();
        let alpha = Functional::chsh()
            .evaluate_integer(|k| all_plus.correlator(k))
            .unwrap();
        let beta = Functional::kcbs()
            .evaluate_integer(|k| all_plus.correlator(k))
            .unwrap();
        assert_eq!((alpha, beta), (2, 3));
        let b = local_strategy_behavior(all_plus, &s).unwrap();
        let t = b
            .table(&JointContext::new(0, Context::singleton(0)))
            .unwrap();
        assert_eq!(t, &[0.0, 0.0, 0.0, 1.0]);
        let nc = enumerate_noncontextual_vertices(&s);
        let plus = nc.last().unwrap();
        assert_eq!(
            Functional::kcbs()
                .evaluate_integer(|k| plus.correlator(k))
                .unwrap(),
            3
        );
    }

    #[test]
    fn integer_route_matches_behavior_route() {
        let s = Scenario::chsh_kcbs();
        for v in enumerate_local_vertices(&s).iter().step_by(7) {
            let b = local_strategy_behavior(v, &s).unwrap();
            assert_eq!(b.normalization_error(), 0.0);
            assert!(check_no_signalling(&b, 0.0).is_empty());
            let m = marginalize_bob(&b).unwrap();
            let c = correlators_from_behavior(&b, &m).unwrap();
            let ia = Functional::chsh()
                .evaluate_integer(|k| v.correlator(k))
                .unwrap();
            let ib = Functional::kcbs()
                .evaluate_integer(|k| v.correlator(k))
                .unwrap();
            assert_eq!(alpha_chsh(&c).unwrap(), f64::from(ia));
            assert_eq!(beta_kcbs(&c).unwrap(), f64::from(ib));
        }
    }

    #[test]
    fn noncontextual_marginals_do_not_disturb() {
        let s = Scenario::chsh_kcbs();
        for v in enumerate_noncontextual_vertices(&s) {
            let m = noncontextual_strategy_marginal(&v, &s).unwrap();
            assert!(check_no_disturbance(&m, 0.0).is_empty());
            assert_eq!(disturbance_distance(&m).unwrap(), 0.0);
        }
        for p in enumerate_product_strategies(&s).iter().step_by(5) {
            let b = product_strategy_behavior(p, &s).unwrap();
            assert!(check_no_signalling(&b, 0.0).is_empty());
            assert!(check_no_disturbance(&marginalize_bob(&b).unwrap(), 0.0).is_empty());
        }
    }

    #[test]
    fn exhaustive_bounds() {
        let s = Scenario::chsh_kcbs();
        let local = enumerate_local_vertices(&s);
        let (a, arg) = max_functional_local(&local, &Functional::chsh()).unwrap();
        assert_eq!(a, 2);
        // First maximiser in enumeration order.
        let first = local
            .iter()
            .position(|v| {
                Functional::chsh()
                    .evaluate_integer(|k| v.correlator(k))
                    .unwrap()
                    == 2
            })
            .unwrap();
        assert_eq!(arg, &local[first]);
        assert_eq!(
            max_functional_local(&local, &Functional::kcbs()).unwrap().0,
            5
        );

        let nc = enumerate_noncontextual_vertices(&s);
        assert_eq!(
            max_functional_noncontextual(&nc, &Functional::kcbs())
                .unwrap()
                .0,
            3
        );
        let (lo, arg) = min_functional(&nc, &Functional::kcbs()).unwrap();
        assert_eq!(lo, -5);
        assert_eq!(arg.bob, vec![-1, 1, -1, 1, -1]);

        let products = enumerate_product_strategies(&s);
        assert_eq!(max_functional(&products, &Functional::chsh()).unwrap().0, 2);
        let sum = Functional::chsh().plus(&Functional::kcbs(), "alpha+beta");
        assert_eq!(max_functional(&products, &sum).unwrap().0, 5);

        let constrained = enumerate_local_vertices_with(&s, LocalVariant::SingletonConsistent);
        assert_eq!(
            max_functional(&constrained, &Functional::chsh()).unwrap().0,
            2
        );
    }

    #[test]
    fn sign_relabeling_maps_argmax() {
        let s = Scenario::chsh_kcbs();
        let local = enumerate_local_vertices(&s);
        let flipped = Functional::chsh().flip_alice(1);
        let (m, arg) = max_functional_local(&local, &flipped).unwrap();
        assert_eq!(m, 2);
        // Undoing the relabeling on the argmax gives a maximiser of α.
        let mut back = arg.clone();
        back.alice[1] = -back.alice[1];
        assert_eq!(
            Functional::chsh()
                .evaluate_integer(|k| back.correlator(k))
                .unwrap(),
            2
        );
    }

    #[test]
    fn empty_vertex_list_is_rejected() {
        let none: Vec<NoncontextualStrategy> = Vec::new();
        assert!(max_functional(&none, &Functional::kcbs()).is_err());
    }

    #[test]
    fn missing_correlator_is_structural() {
        let s = Scenario::chsh_kcbs();
        let nc = enumerate_noncontextual_vertices(&s);
        assert!(matches!(
            max_functional(&nc, &Functional::chsh()),
            Err(Error::Structural(_))
        ));
    }
}
