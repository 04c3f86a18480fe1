use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{evaluate_map, GroundTruth, Source};
use crate::tracking::{Mode, Reason};
use crate::Det;

/// Virtual seconds spent per stage on one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub extract: f64,
    pub regress: f64,
    pub mine: f64,
    pub encode: f64,
    /// Queue time of the item whose upload started on this frame.
    pub queue_wait: f64,
}

impl Latency {
    /// Edge compute on the frame's critical path.
    pub fn edge(&self) -> f64 {
        self.extract + self.regress + self.mine + self.encode
    }
}

/// Configuration an upload was encoded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadChoice {
    pub k: u8,
    pub q_roi: u8,
    pub q_bg: u8,
    /// Selected from the profiled set; false for fixed or uniform plans.
    pub scheduled: bool,
    /// No candidate met the budget; the smallest was sent anyway.
    pub over_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: u64,
    pub mode: Mode,
    pub reason: Reason,
    /// Live tracks when the mode was chosen.
    pub tracks_before: usize,
    pub proposals: usize,
    pub tracks_after: usize,
    pub latency: Latency,
    pub detections: Vec<Det>,
    pub mined: usize,
    /// Reference targets that had no covering edge detection and were searched for.
    pub mine_attempts: usize,
    pub keyframe: bool,
    /// This frame was encoded and queued.
    pub enqueued: bool,
    pub choice: Option<UploadChoice>,
    /// The scheduler skipped this frame's upload.
    pub skipped: bool,
    /// An upload started on this frame's tick.
    pub uploaded: bool,
    pub sent_frame_id: Option<u64>,
    pub bytes_sent: u64,
    pub cloud_results_applied: usize,
    pub cloud_results_dropped: usize,
    pub reference_frame: Option<u64>,
    pub reference_targets: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("no frame reports to summarize")]
    Empty,
    #[error("report for frame {frame} has no ground truth")]
    MissingTruth { frame: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub mean_latency: f64,
    pub p50_latency: f64,
    pub p90_latency: f64,
    pub p99_latency: f64,
    pub mean_regress: f64,
    pub fast_frames: usize,
    pub full_frames: usize,
    /// Mean proposal count over fast frames; 0 without any.
    pub proposals_per_fast_frame: f64,
    pub total_bytes: u64,
    pub uploads: usize,
    pub enqueued: usize,
    pub mined: usize,
    pub cloud_results_applied: usize,
    pub cloud_results_dropped: usize,
}

/// Nearest-rank percentile of an ascending slice, `p` in `(0, 100]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Aggregates reports; `gts` must hold ground truth for every reported frame.
pub fn summarize(reports: &[FrameReport], gts: &[GroundTruth]) -> Result<Summary, SummaryError> {
    if reports.is_empty() {
        return Err(SummaryError::Empty);
    }
    let mut truth = Vec::with_capacity(reports.len());
    for r in reports {
        let g = gts
            .iter()
            .find(|g| g.frame_id == r.frame_id)
            .ok_or(SummaryError::MissingTruth { frame: r.frame_id })?;
        truth.push(g.clone());
    }
    let dets: Vec<Vec<Det>> = reports.iter().map(|r| r.detections.clone()).collect();
    let map = evaluate_map(&dets, &truth, 0.5).map;
    let mut lat: Vec<f64> = reports.iter().map(|r| r.latency.edge()).collect();
    let n = reports.len() as f64;
    let mean_latency = lat.iter().sum::<f64>() / n;
    lat.sort_by(f64::total_cmp);
    let fast: Vec<&FrameReport> = reports.iter().filter(|r| r.mode == Mode::Fast).collect();
    let proposals_per_fast_frame = if fast.is_empty() {
        0.0
    } else {
        fast.iter().map(|r| r.proposals as f64).sum::<f64>() / fast.len() as f64
    };
    Ok(Summary {
        frames: reports.len(),
        map,
        mean_latency,
        p50_latency: nearest_rank(&lat, 50.0),
        p90_latency: nearest_rank(&lat, 90.0),
        p99_latency: nearest_rank(&lat, 99.0),
        mean_regress: reports.iter().map(|r| r.latency.regress).sum::<f64>() / n,
        fast_frames: fast.len(),
        full_frames: reports.len() - fast.len(),
        proposals_per_fast_frame,
        total_bytes: reports.iter().map(|r| r.bytes_sent).sum(),
        uploads: reports.iter().filter(|r| r.uploaded).count(),
        enqueued: reports.iter().filter(|r| r.enqueued).count(),
        mined: reports
            .iter()
            .map(|r| r.detections.iter().filter(|d| d.source() == Source::Mined).count())
            .sum(),
        cloud_results_applied: reports.iter().map(|r| r.cloud_results_applied).sum(),
        cloud_results_dropped: reports.iter().map(|r| r.cloud_results_dropped).sum(),
    })
}

/// One `metrics.csv` row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub frame_id: u64,
    pub mode: Mode,
    pub reason: Reason,
    pub proposals: usize,
    pub tracks: usize,
    pub extract_s: f64,
    pub regress_s: f64,
    pub mine_s: f64,
    pub encode_s: f64,
    pub queue_wait_s: f64,
    pub edge_latency_s: f64,
    pub detections: usize,
    pub mined: usize,
    pub enqueued: bool,
    pub uploaded: bool,
    pub bytes_sent: u64,
    pub cloud_results_applied: usize,
}

impl From<&FrameReport> for MetricsRow {
    fn from(r: &FrameReport) -> Self {
        Self {
            frame_id: r.frame_id,
            mode: r.mode,
            reason: r.reason,
            proposals: r.proposals,
            tracks: r.tracks_after,
            extract_s: r.latency.extract,
            regress_s: r.latency.regress,
            mine_s: r.latency.mine,
            encode_s: r.latency.encode,
            queue_wait_s: r.latency.queue_wait,
            edge_latency_s: r.latency.edge(),
            detections: r.detections.len(),
            mined: r.mined,
            enqueued: r.enqueued,
            uploaded: r.uploaded,
            bytes_sent: r.bytes_sent,
            cloud_results_applied: r.cloud_results_applied,
        }
    }
}
