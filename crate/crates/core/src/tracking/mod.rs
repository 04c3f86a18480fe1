//! Kalman tracking, inference-mode selection and tracker-guided fast inference.

pub mod fast;
pub mod kalman;
pub mod linalg;
pub mod mode;
pub mod tracker;

pub use fast::{clamp_detections, fast_detect, fast_infer, FastDetect, FastError, FastOutput};
pub use kalman::{box_to_measurement, observation, state_to_box, transition, KalmanTrack, TrackerParams, MEAS_DIM, STATE_DIM};
pub use mode::{choose_mode, InferenceMode, Mode, ModeTrace, Reason};
pub use tracker::{associate, Tracker, UpdateSummary};
