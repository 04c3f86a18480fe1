//! Region-of-interest clustering, differentiated-quality encoding, the wire
//! format and offline configuration profiling.

pub mod cluster;
pub mod codec;
pub mod config;
pub mod roi;
pub mod wire;

pub use cluster::{
    bisect, total_wcss, weighted_bikmeans, weighted_centers, weighted_centroid, weighted_wcss, ClusterError,
    Clustering, WeightedPoint, EXACT_LIMIT,
};
pub use codec::{decode_bytes, decode_frame, encode_frame, jpeg_decode, jpeg_encode, uniform_size, EncodeError};
pub use config::{
    build_config_set, modeled_cluster_time, modeled_encode_time, read_config_set, write_config_set, ConfigEntry,
    ConfigSet, ConfigSetError, ProfileParams, TimingMode,
};
pub use roi::{merge_overlapping, plan_frame, plan_rois, PlanError, Rect, RoiPlan, DEFAULT_PADDING};
pub use wire::{EncodedFrame, EncodedRegion, FrameHeader, Section, WireError, HEADER_LEN, MAGIC, VERSION};
