//! Geometry-only multi-object tracking.
//!
//! A SORT-style tracker (constant-velocity Kalman filter plus Hungarian
//! association on IoU) extended with a per-track confidence score that
//! decides when an unmatched track is occluded rather than lost, an
//! extended-box re-identification step, three-frame target birth and
//! age-dependent removal. The crate also carries the tooling used to check
//! it: a MOTChallenge reader/writer, a CLEAR-MOT evaluator and a seeded
//! synthetic scenario generator.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases at the crate root fix the scalar to `f64` for everyday use.

pub mod assignment;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mot_io;
pub mod motion;
pub mod pipeline;
pub mod scalar;
pub mod scenario;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BBox = geometry::BoundingBox<f64>;
pub type BBoxF32 = geometry::BoundingBox<f32>;
pub type MotionState = motion::MotionState<f64>;
pub type NoiseConfig = motion::NoiseConfig<f64>;
pub type ScoreMatrix = assignment::ScoreMatrix<f64>;
pub type Track = tracker::Track<f64>;
pub type TrackerConfig = tracker::TrackerConfig<f64>;
pub type Tracker = tracker::Tracker<f64>;
pub type TrackerF32 = tracker::Tracker<f32>;
pub type FrameOutput = tracker::FrameOutput<f64>;
pub type FrameRecord = mot_io::FrameRecord<f64>;
pub type FrameMap = mot_io::FrameMap<f64>;
pub type EvalReport = metrics::EvalReport<f64>;
pub type Scenario = scenario::Scenario<f64>;
