//! Quantum and classical kicked rotor simulation.
//!
//! Covers the standard kicked rotor (KR), the variant whose kick sign flips
//! after every block of `M` kicks (MKR), and its atom-optics realisation in
//! which each flip is replaced by a half-Talbot free evolution (MAKR).
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! acceptance suite use.

// Negated float comparisons are deliberate here: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod classical;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod model;
pub mod observables;
pub mod quantum;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{Gap, KickSchedule, Mode, ScheduleEntry, Sign};
pub use scalar::Real;

pub type SimParams = model::SimParams<f64>;
pub type PhysicalParams = model::PhysicalParams<f64>;
pub type Wavefunction = quantum::MomentumWavefunction<f64>;
pub type Distribution = observables::MomentumDistribution<f64>;
pub type Series = observables::ObservableSeries<f64>;
pub type PhasePoint = classical::PhasePoint<f64>;
pub type CloudSpec = ensemble::CloudSpec<f64>;
pub type NoiseSpec = ensemble::NoiseSpec<f64>;
pub type EnsembleResult = ensemble::EnsembleResult<f64>;

pub type SimParams32 = model::SimParams<f32>;
pub type Wavefunction32 = quantum::MomentumWavefunction<f32>;
