//! Quantum-jump unravelings of time-local master equations built on the
//! generalized rate operator.
//!
//! Two stochastic engines are provided:
//!
//! * [`jump_mc`]: independent trajectories, valid while every jump rate is
//!   non-negative.
//! * [`nmqj`]: an ensemble of trajectory classes with reverse jumps for
//!   negative rates, which also flags master equations that drive the state
//!   out of the positive cone.
//!
//! Both are checked against the RK4 density-matrix integrator in [`exact`].
//!
//! All numerics are generic over the real scalar ([`Scalar`], implemented
//! for `f32` and `f64`); the `*64` aliases below fix the common case.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod jump_mc;
pub mod linalg;
pub mod model;
pub mod nmqj;
pub mod observables;
pub mod policy;
pub mod rateop;
pub mod scalar;

pub use error::{BreakdownEvent, Error, Result};
pub use exact::{evolve_exact, DensityTrajectory};
pub use jump_mc::{run_ensemble, TrajectoryConfig};
pub use linalg::{hermitian_eig, projector, CMatrix, CVector, SpectralDecomposition};
pub use model::{Channel, CoefficientFn, HamiltonianTerm, MasterEquation, Snapshot};
pub use nmqj::run_nmqj;
pub use observables::{bloch, compare, BlochSeries, Tolerance};
pub use policy::NumericPolicy;
pub use rateop::{RateOperator, TransformationStrategy};
pub use scalar::Scalar;

pub type CVector64 = CVector<f64>;
pub type CMatrix64 = CMatrix<f64>;
pub type CVector32 = CVector<f32>;
pub type CMatrix32 = CMatrix<f32>;
pub type MasterEquation64 = MasterEquation<f64>;
pub type Strategy64 = TransformationStrategy<f64>;
