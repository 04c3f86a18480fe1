//! Recovery of targets the edge model missed, by matching cloud-grade
//! reference descriptors into the current frame's features.

pub mod matching;
pub mod reference;

pub use matching::{
    feature_distance, match_target, region_cells, sample_descriptors, search_region, select_layer, Cell,
    MatchFailure, MatchOutcome, MatchTransform, MiningParams, SamplePoints, SearchRegion, MAX_SCALE, MIN_SCALE,
    VARIANCE_FLOOR,
};
pub use reference::{
    mine_frame, refresh_reference, staleness_threshold, CachedFrame, FrameCache, MineOutput, MiningTrace,
    ReferenceFrame, RefreshError,
};
