//! Reference-frame cache and per-frame mining of missed targets.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::matching::{
    match_target, sample_descriptors, search_region, MatchFailure, MatchOutcome, MiningParams, SamplePoints,
    SearchRegion,
};
use crate::model::{iou, BoundingBox, Detection, FeatureMap, Source};
use crate::scalar::Real;

/// Cloud-grade detections with the features they were sampled from.
#[derive(Debug, Clone)]
pub struct ReferenceFrame<T> {
    pub frame_id: u64,
    pub detections: Vec<Detection<T>>,
    pub features: Arc<FeatureMap<T>>,
    pub samples: Vec<SamplePoints<T>>,
    /// Match hops used to carry the detections forward from the cloud frame.
    pub hops: u32,
}

impl<T: Real> ReferenceFrame<T> {
    /// Clamps detections to the frame and samples descriptors for each;
    /// detections entirely outside the frame are dropped.
    pub fn new(frame_id: u64, detections: &[Detection<T>], features: Arc<FeatureMap<T>>) -> Self {
        let (w, h) = (T::lit(features.frame_width as f64), T::lit(features.frame_height as f64));
        let detections: Vec<Detection<T>> = detections
            .iter()
            .filter_map(|d| d.bbox().clamp_to(w, h).map(|b| d.with_box(b)))
            .collect();
        let samples = detections.iter().map(|d| sample_descriptors(d, &features)).collect();
        Self {
            frame_id,
            detections,
            features,
            samples,
            hops: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CachedFrame<T> {
    pub frame_id: u64,
    pub features: Arc<FeatureMap<T>>,
    pub detections: Vec<Detection<T>>,
}

/// Bounded ring of recent edge frames, oldest first.
#[derive(Debug, Clone)]
pub struct FrameCache<T> {
    capacity: usize,
    frames: VecDeque<CachedFrame<T>>,
}

impl<T: Real> FrameCache<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache capacity must be >= 1");
        Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends a frame; ids must increase. Evicts the oldest when full.
    pub fn push(&mut self, frame: CachedFrame<T>) {
        if let Some(last) = self.frames.back() {
            assert!(frame.frame_id > last.frame_id, "cache ids must increase");
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn get(&self, frame_id: u64) -> Option<&CachedFrame<T>> {
        self.frames
            .binary_search_by_key(&frame_id, |f| f.frame_id)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn newest(&self) -> Option<&CachedFrame<T>> {
        self.frames.back()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CachedFrame<T>> {
        self.frames.iter()
    }
}

/// Hop length in frames: mean box diagonal over mean track speed, in
/// `[1, cap]`. Static or empty scenes get `cap`.
pub fn staleness_threshold<T: Real>(boxes: &[BoundingBox<T>], mean_speed: Option<T>, cap: u32) -> u32 {
    let cap = cap.max(1);
    let Some(speed) = mean_speed else { return cap };
    if boxes.is_empty() || !(speed > T::lit(1e-6)) {
        return cap;
    }
    let k: T = boxes.iter().map(|b| b.diagonal()).sum::<T>() / T::from_usize_lossy(boxes.len());
    let frames = (k / speed).floor().as_f64();
    if frames.is_nan() {
        return cap;
    }
    frames.clamp(1.0, cap as f64) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefreshError {
    #[error("cloud frame {0} is no longer cached")]
    Evicted(u64),
}

/// Builds the reference for a cloud result on `cloud_frame_id`.
///
/// When the newest cached frame is within `threshold` frames of the cloud
/// frame the cloud frame is used verbatim. Otherwise the detections are
/// carried forward in hops of at most `threshold` frames, each hop matching
/// every target into the next cached frame's features and resampling its
/// descriptors there. Targets lost on a hop are dropped.
pub fn refresh_reference<T: Real>(
    cache: &FrameCache<T>,
    cloud_frame_id: u64,
    cloud_detections: &[Detection<T>],
    threshold: u32,
    params: &MiningParams<T>,
) -> Result<ReferenceFrame<T>, RefreshError> {
    let base = cache.get(cloud_frame_id).ok_or(RefreshError::Evicted(cloud_frame_id))?;
    let mut reference = ReferenceFrame::new(cloud_frame_id, cloud_detections, base.features.clone());
    let newest = cache.newest().map_or(cloud_frame_id, |f| f.frame_id);
    let step = u64::from(threshold.max(1));
    while newest - reference.frame_id > step {
        let target = reference.frame_id + step;
        // Latest cached frame not past the hop target.
        let Some(next) = cache
            .iter()
            .filter(|f| f.frame_id > reference.frame_id && f.frame_id <= target)
            .last()
        else {
            break;
        };
        reference = hop(&reference, next, params);
    }
    Ok(reference)
}

fn hop<T: Real>(reference: &ReferenceFrame<T>, next: &CachedFrame<T>, params: &MiningParams<T>) -> ReferenceFrame<T> {
    let fmap = &next.features;
    let mut carried = Vec::with_capacity(reference.detections.len());
    for (det, sp) in reference.detections.iter().zip(&reference.samples) {
        let b = det.bbox();
        let pad = params.l_padding + b.diagonal();
        let Some(region) = search_region(b, b, pad, fmap.frame_width, fmap.frame_height) else {
            continue;
        };
        let region = SearchRegion {
            bbox: region,
            source_track_id: None,
            layer: sp.layer,
        };
        let out = match_target(sp, fmap, &region, params);
        if let Some(m) = out.detection {
            carried.push(Detection::new(*m.bbox(), det.class_id(), det.confidence(), det.source()));
        } else {
            log::debug!("reference target lost on hop to frame {}", next.frame_id);
        }
    }
    let mut r = ReferenceFrame::new(next.frame_id, &carried, next.features.clone());
    r.hops = reference.hops + 1;
    r
}

/// Per-target mining trace line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiningTrace {
    pub frame: u64,
    pub target: usize,
    pub track_id: Option<u64>,
    pub rounds: u32,
    pub group_loss: f64,
    pub conservative: bool,
    pub confidence: f64,
    pub failure: Option<MatchFailure>,
    /// Dropped because it duplicated an edge or earlier mined detection.
    pub duplicate: bool,
}

#[derive(Debug, Clone)]
pub struct MineOutput<T> {
    /// Edge detections followed by the mined ones.
    pub detections: Vec<Detection<T>>,
    pub mined: usize,
    pub traces: Vec<MiningTrace>,
}

fn covered<T: Real>(b: &BoundingBox<T>, class_id: u32, dets: &[Detection<T>], thr: T) -> bool {
    dets.iter().any(|d| d.class_id() == class_id && iou(d.bbox(), b) >= thr)
}

/// Recovers reference targets the edge model missed in the current frame.
///
/// A reference target is skipped when a same-class edge detection overlaps
/// its reference box or its track's prediction at `duplicate_iou` or more.
/// Otherwise the search region joins the track prediction (if any track
/// overlaps the reference box) with the reference box. Mined results that
/// overlap an edge or earlier mined detection are dropped. Edge detections
/// are passed through untouched.
pub fn mine_frame<T: Real>(
    cur: &FeatureMap<T>,
    edge_dets: &[Detection<T>],
    track_predictions: &[(u64, BoundingBox<T>)],
    reference: &ReferenceFrame<T>,
    params: &MiningParams<T>,
) -> MineOutput<T> {
    let mut out = edge_dets.to_vec();
    let mut traces = Vec::new();
    let mut mined = 0;
    for (i, (det, sp)) in reference.detections.iter().zip(&reference.samples).enumerate() {
        let rb = det.bbox();
        let track = track_predictions
            .iter()
            .map(|(id, b)| (*id, *b, iou(b, rb)))
            .filter(|(_, _, v)| *v > T::zero())
            .fold(None::<(u64, BoundingBox<T>, T)>, |best, c| match best {
                Some(b) if b.2 >= c.2 => Some(b),
                _ => Some(c),
            });
        let pre = track.map_or(*rb, |t| t.1);
        if covered(rb, det.class_id(), edge_dets, params.duplicate_iou)
            || covered(&pre, det.class_id(), edge_dets, params.duplicate_iou)
        {
            continue;
        }
        let outcome: MatchOutcome<T> = match search_region(&pre, rb, params.l_padding, cur.frame_width, cur.frame_height) {
            Some(bbox) => match_target(
                sp,
                cur,
                &SearchRegion {
                    bbox,
                    source_track_id: track.map(|t| t.0),
                    layer: sp.layer,
                },
                params,
            ),
            None => MatchOutcome {
                detection: None,
                confidence: T::zero(),
                rounds: 0,
                group_loss: T::infinity(),
                conservative: false,
                transform: None,
                cells: [(0, 0); 5],
                failure: Some(MatchFailure::Degenerate),
            },
        };
        let mut duplicate = false;
        if let Some(m) = outcome.detection {
            if covered(m.bbox(), m.class_id(), &out, params.duplicate_iou) {
                duplicate = true;
            } else {
                out.push(m);
                mined += 1;
            }
        }
        traces.push(MiningTrace {
            frame: cur.frame_id,
            target: i,
            track_id: track.map(|t| t.0),
            rounds: outcome.rounds,
            group_loss: outcome.group_loss.as_f64(),
            conservative: outcome.conservative,
            confidence: outcome.confidence.as_f64(),
            failure: outcome.failure,
            duplicate,
        });
    }
    debug_assert!(out[..edge_dets.len()] == *edge_dets);
    debug_assert!(out[edge_dets.len()..].iter().all(|d| d.source() == Source::Mined));
    MineOutput {
        detections: out,
        mined,
        traces,
    }
}
