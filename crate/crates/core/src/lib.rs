//! Edge-cloud video analytics pipeline.
//!
//! The edge side tracks targets with a Kalman filter and only regresses the
//! tracker's proposals, recovers missed targets by matching cached cloud-grade
//! feature descriptors into the current frame, and uploads frames encoded with
//! high quality inside clustered regions of interest and low quality elsewhere.
//! A configuration scheduler picks cluster count and qualities per upload under
//! bandwidth and latency budgets. Models are scripted stand-ins and the link is
//! a virtual-clock simulation, so every stage is deterministic.
//!
//! Math-heavy types are generic over [`scalar::Real`] (f32/f64) or, for box
//! arithmetic, any [`scalar::Scalar`] including exact rationals. The aliases
//! below fix the scalar the pipeline itself runs on.

pub mod encode;
pub mod mining;
pub mod model;
pub mod netsim;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod scheduler;
pub mod tracking;

pub use scalar::{Real, Scalar};

/// Box type the pipeline uses.
pub type BBox = model::BoundingBox<f64>;
/// Single-precision box.
pub type BBox32 = model::BoundingBox<f32>;
/// Exact box for rational arithmetic.
pub type ExactBox = model::BoundingBox<num_rational::Ratio<i64>>;
pub type Det = model::Detection<f64>;
pub type Features = model::FeatureMap<f64>;
pub type Features32 = model::FeatureMap<f32>;
pub type Track = tracking::KalmanTrack<f64>;
