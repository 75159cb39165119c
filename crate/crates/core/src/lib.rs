//! Simulation and verification toolkit for joint CHSH / KCBS violations in a
//! qubit-qutrit Bell scenario where Bob measures pairs of compatible observables.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: contexts, behaviors, marginals and consistency checks
//! * [`quantum`]: kets, observables and Born-rule behaviors of the state family
//! * [`inequalities`]: correlators, the CHSH and KCBS functionals, region classification
//! * [`hidden`]: deterministic local / noncontextual strategies and exhaustive bounds
//! * [`search`]: φ scans, the joint-violation window and (θ_u, θ_v) re-optimisation
//! * [`shot_noise`]: multinomial count simulation and bootstrap uncertainties
//! * [`dataset`]: the bundled experimental correlator tables, verification and figure data

pub mod dataset;
pub mod error;
pub mod hidden;
pub mod inequalities;
pub mod quantum;
pub mod scenario;
pub mod search;
pub mod shot_noise;

pub use error::{Error, Result};
