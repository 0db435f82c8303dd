//! Semi-supervised reward modeling over pairwise preference data.
//!
//! A preference model scores `P(A)` for a prompt and two responses rendered
//! as `[CONTEXT]{x}[RESPONSE A]{a1}[RESPONSE B]{a2}`. Starting from a small
//! labeled pool, [`ssrm::run_ssrm`] alternates between pseudo-labeling an
//! unlabeled pool, keeping the confident labels, and retraining.
//!
//! Model math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision used by the tools.

pub mod backend;
pub mod error;
pub mod eval;
pub mod prefdata;
pub mod provenance;
pub mod scalar;
pub mod ssrm;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact labeled-data fraction, e.g. `1/4`.
pub type Fraction = num_rational::Ratio<u64>;

pub type Snapshot = backend::ModelSnapshot<f64>;
pub type SnapshotF32 = backend::ModelSnapshot<f32>;
pub type Prediction = backend::PredictionDistribution<f64>;
pub type Gradient = backend::Gradient<f64>;
pub type Run = ssrm::SsrmRun<f64>;
