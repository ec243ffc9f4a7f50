//! Randomized sensor selection for steady-state Kalman filtering.
//!
//! Sensors are drawn with replacement from a candidate pool according to a
//! sampling distribution `p`. The crate computes semidefinite bounds
//! `P_L ⪯ P_𝒮 ⪯ P_U` that hold with probability at least `1 − δ`, solves a
//! semidefinite program for the distribution minimizing `λ_max(P_U)`, and
//! provides uniform, greedy and Monte Carlo baselines to validate it.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below name the two instantiations. The semidefinite
//! program itself is always assembled and solved in `f64`.

pub mod bounds;
pub mod concentration;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod policies;
pub mod riccati;
pub mod rng;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SystemModel64 = model::SystemModel<f64>;
pub type SystemModel32 = model::SystemModel<f32>;
pub type CandidateSensor64 = model::CandidateSensor<f64>;
pub type CandidateSensor32 = model::CandidateSensor<f32>;
pub type SensorPool64 = model::SensorPool<f64>;
pub type SensorPool32 = model::SensorPool<f32>;
pub type SamplingDistribution64 = model::SamplingDistribution<f64>;
pub type SamplingDistribution32 = model::SamplingDistribution<f32>;
pub type BoundSet64 = bounds::BoundSet<f64>;
pub type BoundSet32 = bounds::BoundSet<f32>;
pub type SteadyStateResult64 = riccati::SteadyStateResult<f64>;
pub type SteadyStateResult32 = riccati::SteadyStateResult<f32>;
