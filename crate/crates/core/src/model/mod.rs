//! Shared domain types: geometry, frames, detections, features, the pluggable
//! model interface with its scripted implementation, and the mAP metric.

pub mod detection;
pub mod features;
pub mod frame;
pub mod geometry;
pub mod metrics;
pub mod scripted;

pub use detection::{read_annotations, write_annotations, AnnotationError, Detection, GroundTruth, GtObject, Source};
pub use features::{synthetic_extract, FeatureError, FeatureLayer, FeatureMap};
pub use frame::{frame_diff, Frame, FrameError};
pub use geometry::{iou, BoundingBox, GeometryError};
pub use metrics::{evaluate_map, MapResult};
pub use scripted::{scripted_detect, scripted_detect_with, ModelError, ModelInterface, ScriptedModel, ScriptedModelConfig};
