//! Kets, observables and Born-rule behaviors on the qubit ⊗ qutrit space.
//!
//! Everything is built from closed forms: Alice measures Pauli observables,
//! Bob measures reflections `B_j = (-1)^j (1 - 2|v_j⟩⟨v_j|)` through five
//! qutrit vectors forming an orthogonality pentagon. No eigensolver is used;
//! the spectral projectors of each `B_j` are `|v_j⟩⟨v_j|` and its complement.
//!
//! The six-dimensional product basis is qubit-major: `(q, t) ↦ 3q + t`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{cell_outcomes, Behavior, JointContext, Scenario};

pub const QUBIT_DIM: usize = 2;
pub const QUTRIT_DIM: usize = 3;
pub const JOINT_DIM: usize = QUBIT_DIM * QUTRIT_DIM;

pub const DEFAULT_THETA_U: f64 = 2.868;
pub const DEFAULT_THETA_V: f64 = 1.449;

/// Tolerance for closed-form structural identities.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Largest imaginary part tolerated in an expectation value.
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;
/// Commutator norm above which a context is rejected.
pub const COMMUTE_TOL: f64 = 1e-10;

pub type CMatrix = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amplitudes: DVector<Complex64>,
}

impl Ket {
    /// Wraps already-normalized amplitudes.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::domain(format!("ket has norm {norm}, expected 1")));
        }
        Ok(Ket { amplitudes: v })
    }

    /// Scales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::domain(
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(Ket {
            amplitudes: v.unscale(norm),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| c(a)).collect())
    }

    /// Computational basis vector `|index⟩` of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = c(1.0);
        Ket { amplitudes: v }
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

/// Square matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::structural("operator matrix is not square"));
        }
        let residue = (&matrix - matrix.adjoint()).norm();
        if residue > STRUCTURE_TOL {
            return Err(Error::domain(format!(
                "matrix is not Hermitian (‖M − M†‖ = {residue:e})"
            )));
        }
        Ok(HermitianOperator { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn tensor(&self, other: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Product of two commuting observables, itself Hermitian.
    pub fn compatible_product(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        let comm = self.commutator_norm(other)?;
        if comm > COMMUTE_TOL {
            return Err(Error::domain(format!(
                "observables do not commute (‖[A, B]‖ = {comm:e})"
            )));
        }
        // Symmetrize to absorb rounding in the product.
        let p = &self.matrix * &other.matrix;
        let sym = (&p + p.adjoint()) * c(0.5);
        Ok(HermitianOperator { matrix: sym })
    }

    /// Frobenius norm of `[self, other]`.
    pub fn commutator_norm(&self, other: &HermitianOperator) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(Error::structural(
                "commutator of operators of different dimension",
            ));
        }
        let ab = &self.matrix * &other.matrix;
        let ba = &other.matrix * &self.matrix;
        Ok((ab - ba).norm())
    }

    /// Frobenius distance of `self²` from the identity.
    pub fn involution_residue(&self) -> f64 {
        let n = self.dimension();
        (&self.matrix * &self.matrix - CMatrix::identity(n, n)).norm()
    }
}

/// Spectral projectors of a ±1-valued observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorPair {
    pub plus: CMatrix,
    pub minus: CMatrix,
}

impl ProjectorPair {
    /// `(1 ± O) / 2` for an involutory observable `O`.
    pub fn from_involution(op: &HermitianOperator) -> Self {
        let n = op.dimension();
        let id = CMatrix::identity(n, n);
        ProjectorPair {
            plus: (&id + op.matrix()) * c(0.5),
            minus: (&id - op.matrix()) * c(0.5),
        }
    }

    pub fn for_outcome(&self, outcome: i8) -> &CMatrix {
        if outcome > 0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    /// Largest of `‖P₊ + P₋ − 1‖`, `‖P₊P₋‖`, `‖P₊² − P₊‖`.
    pub fn residue(&self) -> f64 {
        let n = self.plus.nrows();
        let id = CMatrix::identity(n, n);
        let sum = (&self.plus + &self.minus - id).norm();
        let cross = (&self.plus * &self.minus).norm();
        let idem = (&self.plus * &self.plus - &self.plus).norm();
        sum.max(cross).max(idem)
    }
}

/// `A_0 = σ_z`, `A_1 = σ_x`.
pub fn alice_observable(x: usize) -> Result<HermitianOperator> {
    let m = match x {
        0 => CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
        1 => CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
        _ => return Err(Error::domain(format!("unknown Alice setting {x}"))),
    };
    HermitianOperator::new(m)
}

/// `|v_j⟩ ∝ cos(4πj/5)|0⟩ + sin(4πj/5)|1⟩ + √cos(π/5)|2⟩`.
pub fn kcbs_vector(j: usize) -> Result<Ket> {
    if j >= 5 {
        return Err(Error::domain(format!("unknown Bob setting {j}")));
    }
    let angle = 4.0 * PI * j as f64 / 5.0;
    let axial = (PI / 5.0).cos();
    let scale = 1.0 / (1.0 + axial).sqrt();
    Ket::from_real(&[
        scale * angle.cos(),
        scale * angle.sin(),
        scale * axial.sqrt(),
    ])
}

fn reflection(sign: f64, v: &Ket) -> HermitianOperator {
    let n = v.dimension();
    let m = (CMatrix::identity(n, n) - v.projector() * c(2.0)) * c(sign);
    HermitianOperator { matrix: m }
}

fn parity(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `B_j = (-1)^j (1 - 2|v_j⟩⟨v_j|)`.
pub fn bob_observable(j: usize) -> Result<HermitianOperator> {
    Ok(reflection(parity(j), &kcbs_vector(j)?))
}

/// `⟨ψ|O|ψ⟩`, checked to be real.
pub fn expectation(ket: &Ket, op: &HermitianOperator) -> Result<f64> {
    expectation_matrix(ket, op.matrix())
}

fn expectation_matrix(ket: &Ket, m: &CMatrix) -> Result<f64> {
    if m.nrows() != ket.dimension() || m.ncols() != ket.dimension() {
        return Err(Error::structural(format!(
            "operator of dimension {} applied to ket of dimension {}",
            m.nrows(),
            ket.dimension()
        )));
    }
    let v = ket.amplitudes();
    let value = v.dotc(&(m * v));
    if value.im.abs() > IMAG_RESIDUE_TOL {
        return Err(Error::Numeric(format!(
            "expectation has imaginary residue {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Observables and projectors shared by every model with the same Bob vectors.
#[derive(Debug)]
pub struct Observables {
    pub alice: [HermitianOperator; 2],
    pub alice_projectors: [ProjectorPair; 2],
    pub bob_vectors: [Ket; 5],
    pub bob: [HermitianOperator; 5],
    pub bob_projectors: [ProjectorPair; 5],
}

impl Observables {
    /// Bob vectors relabeled cyclically: setting `j` uses `|v_{(j+shift) mod 5}⟩`
    /// with the sign `(-1)^j` of its new label.
    pub fn with_bob_shift(shift: usize) -> Self {
        let alice = [
            alice_observable(0).expect("A_0"),
            alice_observable(1).expect("A_1"),
        ];
        let bob_vectors: [Ket; 5] =
            std::array::from_fn(|j| kcbs_vector((j + shift) % 5).expect("v_j"));
        let bob: [HermitianOperator; 5] =
            std::array::from_fn(|j| reflection(parity(j), &bob_vectors[j]));
        // Closed-form spectral split: the rank-one projector carries (-1)^{j+1}.
        let bob_projectors = std::array::from_fn(|j| {
            let rank_one = bob_vectors[j].projector();
            let complement = CMatrix::identity(QUTRIT_DIM, QUTRIT_DIM) - &rank_one;
            if j % 2 == 0 {
                ProjectorPair {
                    plus: complement,
                    minus: rank_one,
                }
            } else {
                ProjectorPair {
                    plus: rank_one,
                    minus: complement,
                }
            }
        });
        let alice_projectors = [
            ProjectorPair::from_involution(&alice[0]),
            ProjectorPair::from_involution(&alice[1]),
        ];
        Observables {
            alice,
            alice_projectors,
            bob_vectors,
            bob,
            bob_projectors,
        }
    }

    pub fn standard() -> Arc<Self> {
        static STANDARD: LazyLock<Arc<Observables>> =
            LazyLock::new(|| Arc::new(Observables::with_bob_shift(0)));
        STANDARD.clone()
    }

    pub fn alice(&self, x: usize) -> Result<&HermitianOperator> {
        self.alice
            .get(x)
            .ok_or_else(|| Error::domain(format!("unknown Alice setting {x}")))
    }

    pub fn bob(&self, y: usize) -> Result<&HermitianOperator> {
        self.bob
            .get(y)
            .ok_or_else(|| Error::domain(format!("unknown Bob setting {y}")))
    }

    /// Product of Bob observables in `labels`; errors when any two fail to commute.
    pub fn bob_product(&self, labels: &[usize]) -> Result<HermitianOperator> {
        let mut acc = HermitianOperator::identity(QUTRIT_DIM);
        for &y in labels {
            acc = acc.compatible_product(self.bob(y)?)?;
        }
        Ok(acc)
    }

    /// `A_x ⊗ Π B_y` for the listed Bob labels.
    pub fn joint_observable(&self, x: usize, labels: &[usize]) -> Result<HermitianOperator> {
        Ok(self.alice(x)?.tensor(&self.bob_product(labels)?))
    }

    /// `1 ⊗ Π B_y`.
    pub fn bob_only_observable(&self, labels: &[usize]) -> Result<HermitianOperator> {
        Ok(HermitianOperator::identity(QUBIT_DIM).tensor(&self.bob_product(labels)?))
    }

    fn check_context(&self, labels: &[usize]) -> Result<()> {
        for (i, &y) in labels.iter().enumerate() {
            for &y2 in &labels[i + 1..] {
                let comm = self.bob(y)?.commutator_norm(self.bob(y2)?)?;
                if comm > COMMUTE_TOL {
                    return Err(Error::domain(format!(
                        "B_{y} and B_{y2} do not commute (‖[B_{y}, B_{y2}]‖ = {comm:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Born-rule table `p(a, b… | x, ctx)` for one joint context.
    pub fn joint_table(&self, ket: &Ket, jc: &JointContext) -> Result<Vec<f64>> {
        let labels = jc.bob.labels();
        self.check_context(labels)?;
        let alice = self
            .alice_projectors
            .get(jc.x)
            .ok_or_else(|| Error::domain(format!("unknown Alice setting {}", jc.x)))?;
        let len = labels.len() + 1;
        (0..jc.cells())
            .map(|cell| {
                let outcomes = cell_outcomes(cell, len);
                let mut bob = CMatrix::identity(QUTRIT_DIM, QUTRIT_DIM);
                for (&y, &b) in labels.iter().zip(&outcomes[1..]) {
                    bob *= self.bob_projectors[y].for_outcome(b);
                }
                let op = alice.for_outcome(outcomes[0]).kronecker(&bob);
                expectation_matrix(ket, &op)
            })
            .collect()
    }

    /// Behavior of an arbitrary six-dimensional state over `scenario`.
    pub fn behavior_of(&self, ket: &Ket, scenario: &Scenario) -> Result<Behavior> {
        let mut tables = BTreeMap::new();
        for jc in scenario.joint_contexts() {
            let mut t = self.joint_table(ket, jc)?;
            // Born probabilities can undershoot zero by rounding.
            for p in &mut t {
                if *p < 0.0 && *p > -STRUCTURE_TOL {
                    *p = 0.0;
                }
            }
            tables.insert(jc.clone(), t);
        }
        Behavior::new(tables)
    }
}

/// The one-parameter state family `cos φ |u⟩ + sin φ |v⟩` with its measurements.
#[derive(Clone, Debug)]
pub struct QuantumModel {
    pub phi: f64,
    pub theta_u: f64,
    pub theta_v: f64,
    observables: Arc<Observables>,
}

impl QuantumModel {
    pub fn new(phi: f64, theta_u: f64, theta_v: f64) -> Self {
        QuantumModel {
            phi,
            theta_u,
            theta_v,
            observables: Observables::standard(),
        }
    }

    /// Model at `phi` with `θ_u = 2.868`, `θ_v = 1.449`.
    pub fn at_phi(phi: f64) -> Self {
        Self::new(phi, DEFAULT_THETA_U, DEFAULT_THETA_V)
    }

    /// Same state with Bob's settings relabeled `j → j + shift (mod 5)`.
    pub fn with_bob_shift(&self, shift: usize) -> Self {
        QuantumModel {
            observables: Arc::new(Observables::with_bob_shift(shift % 5)),
            ..self.clone()
        }
    }

    pub fn observables(&self) -> &Observables {
        &self.observables
    }

    pub fn state(&self) -> Ket {
        state_psi(self)
    }
}

/// `|Ψ(φ)⟩ = cos φ [cos θ_u|0⟩ + sin θ_u|1⟩]⊗|2⟩ + sin φ [cos θ_v|0⟩ + sin θ_v|1⟩]⊗|0⟩`.
pub fn state_psi(model: &QuantumModel) -> Ket {
    let (cp, sp) = (model.phi.cos(), model.phi.sin());
    let (cu, su) = (model.theta_u.cos(), model.theta_u.sin());
    let (cv, sv) = (model.theta_v.cos(), model.theta_v.sin());
    let mut amps = vec![c(0.0); JOINT_DIM];
    // |u⟩ lives on qutrit |2⟩, |v⟩ on qutrit |0⟩.
    amps[2] = c(cp * cu);
    amps[QUTRIT_DIM + 2] = c(cp * su);
    amps[0] = c(sp * cv);
    amps[QUTRIT_DIM] = c(sp * sv);
    Ket {
        amplitudes: DVector::from_vec(amps),
    }
}

/// Born-rule behavior of the model's state over every joint context of `scenario`.
pub fn quantum_behavior(model: &QuantumModel, scenario: &Scenario) -> Result<Behavior> {
    model.observables.behavior_of(&model.state(), scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Context;

    #[test]
    fn alice_paulis() {
        let a0 = alice_observable(0).unwrap();
        let a1 = alice_observable(1).unwrap();
        assert_eq!(a0.matrix()[(0, 0)], c(1.0));
        assert_eq!(a0.matrix()[(1, 1)], c(-1.0));
        assert_eq!(a0.matrix()[(0, 1)], c(0.0));
        assert_eq!(a1.matrix()[(0, 1)], c(1.0));
        assert_eq!(a1.matrix()[(1, 0)], c(1.0));
        assert_eq!(a1.matrix()[(0, 0)], c(0.0));
        assert!(a0.involution_residue() < 1e-15);
        assert!(a1.involution_residue() < 1e-15);
        assert!(matches!(alice_observable(2), Err(Error::Domain(_))));
    }

    #[test]
    fn kcbs_vectors_form_orthogonal_pentagon() {
        for j in 0..5 {
            let v = kcbs_vector(j).unwrap();
            let w = kcbs_vector((j + 1) % 5).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-15);
            assert!(v.inner(&w).norm() < STRUCTURE_TOL, "j={j}");
        }
        assert!(kcbs_vector(5).is_err());
    }

    #[test]
    fn v0_components() {
        let axial = (PI / 5.0).cos();
        let scale = 1.0 / (1.0 + axial).sqrt();
        let v0 = kcbs_vector(0).unwrap();
        let a = v0.amplitudes();
        assert!((a[0].re - scale).abs() < 1e-15);
        assert!(a[1].norm() < 1e-15);
        assert!((a[2].norm_sqr() - axial / (1.0 + axial)).abs() < 1e-15);
    }

    #[test]
    fn bob_observables_are_reflections() {
        for j in 0..5 {
            let b = bob_observable(j).unwrap();
            HermitianOperator::new(b.matrix().clone()).unwrap();
            assert!(b.involution_residue() < STRUCTURE_TOL);
            let next = bob_observable((j + 1) % 5).unwrap();
            assert!(b.commutator_norm(&next).unwrap() < STRUCTURE_TOL);
            // Nondegenerate eigenvalue (-1)^{j+1} on |v_j⟩.
            let v = kcbs_vector(j).unwrap();
            let ev = expectation(&v, &b).unwrap();
            assert!((ev + parity(j)).abs() < 1e-14);
        }
        let b0 = bob_observable(0).unwrap();
        let b2 = bob_observable(2).unwrap();
        assert!(b0.commutator_norm(&b2).unwrap() > 0.1);
        assert!(bob_observable(7).is_err());
    }

    #[test]
    fn projector_pairs_are_spectral() {
        let obs = Observables::standard();
        for j in 0..5 {
            let p = &obs.bob_projectors[j];
            assert!(p.residue() < STRUCTURE_TOL);
            let rebuilt = &p.plus - &p.minus;
            assert!((rebuilt - obs.bob[j].matrix()).norm() < STRUCTURE_TOL);
        }
        for x in 0..2 {
            assert!(obs.alice_projectors[x].residue() < STRUCTURE_TOL);
        }
    }

    #[test]
    fn endpoint_states_are_products() {
        let u = QuantumModel::new(0.0, 0.7, 1.3).state();
        let expected = Ket::from_real(&[0.7f64.cos(), 0.7f64.sin()])
            .unwrap()
            .tensor(&Ket::basis(3, 2));
        assert!((u.amplitudes() - expected.amplitudes()).norm() < 1e-15);
        let v = QuantumModel::new(PI / 2.0, 0.7, 1.3).state();
        let expected = Ket::from_real(&[1.3f64.cos(), 1.3f64.sin()])
            .unwrap()
            .tensor(&Ket::basis(3, 0));
        assert!((v.amplitudes() - expected.amplitudes()).norm() < 1e-15);
        for phi in [0.1, 0.5, 1.0, 2.5] {
            assert!((QuantumModel::new(phi, 2.0, -0.4).state().norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn expectation_values_against_reference_table() {
        let obs = Observables::standard();
        let psi1 = QuantumModel::at_phi(0.0).state();
        let a0b0 = expectation(&psi1, &obs.joint_observable(0, &[0]).unwrap()).unwrap();
        assert!((a0b0 - 0.0904).abs() < 1e-3, "{a0b0}");
        let id = HermitianOperator::identity(JOINT_DIM);
        assert!((expectation(&psi1, &id).unwrap() - 1.0).abs() < 1e-15);
        let psi5 = QuantumModel::at_phi(0.351).state();
        let a1b2b3 = expectation(&psi5, &obs.joint_observable(1, &[2, 3]).unwrap()).unwrap();
        // Truncated θ defaults land 2.3e-3 away from the quoted −0.7483.
        assert!((a1b2b3 + 0.7483).abs() < 1e-2, "{a1b2b3}");
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let k = Ket::basis(3, 0);
        let err = expectation(&k, &HermitianOperator::identity(JOINT_DIM));
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn imaginary_residue_rejected() {
        let s = 0.5f64.sqrt();
        let k = Ket::new(vec![c(s), Complex64::new(0.0, s)]).unwrap();
        // Anti-Hermitian off-diagonal gives a purely imaginary expectation.
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(-1.0), c(0.0)]);
        assert!(matches!(expectation_matrix(&k, &m), Err(Error::Numeric(_))));
    }

    #[test]
    fn noncommuting_context_rejected() {
        let bad = Context::pair(0, 2).unwrap();
        let scenario =
            Scenario::new(2, 5, vec![bad.clone()], vec![JointContext::new(0, bad)]).unwrap();
        let err = quantum_behavior(&QuantumModel::at_phi(0.3), &scenario);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn behavior_tables_reproduce_operator_expectations() {
        let model = QuantumModel::new(0.4, 2.1, 0.6);
        let scenario = Scenario::chsh_kcbs();
        let behavior = quantum_behavior(&model, &scenario).unwrap();
        let psi = model.state();
        for jc in scenario.joint_contexts() {
            let table = behavior.table(jc).unwrap();
            let len = jc.bob.arity() + 1;
            let signed: f64 = table
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let prod: i8 = cell_outcomes(i, len).iter().product();
                    f64::from(prod) * p
                })
                .sum();
            let op = model
                .observables()
                .joint_observable(jc.x, jc.bob.labels())
                .unwrap();
            let direct = expectation(&psi, &op).unwrap();
            assert!(
                (signed - direct).abs() < 1e-12,
                "{jc}: {signed} vs {direct}"
            );
        }
        assert!(behavior.normalization_error() < 1e-12);
    }
}
