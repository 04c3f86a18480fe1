//! Offline profiling of (cluster count, quality) choices per annotated frame.

use std::io::{BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cluster::weighted_bikmeans;
use super::codec::{decode_frame, encode_frame, EncodeError};
use super::roi::{plan_rois, RoiPlan};
use crate::model::{evaluate_map, BoundingBox, Frame, GroundTruth};
use crate::netsim::CloudModel;
use crate::scheduler::{embed, DistributionEmbedding};

/// Modeled encoder cost per pixel (background plus region pixels), seconds.
pub const ENCODE_S_PER_PIXEL: f64 = 4e-9;
/// Modeled clustering cost per (box, cluster) pair, seconds.
pub const CLUSTER_S_PER_BOX_K: f64 = 2e-6;
/// Fixed clustering overhead, seconds.
pub const CLUSTER_S_BASE: f64 = 1e-4;
/// IoU threshold for the per-entry accuracy.
pub const ACCURACY_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub id: u64,
    pub frame_id: u64,
    pub embedding: DistributionEmbedding,
    pub k: u8,
    pub q_roi: u8,
    pub q_bg: u8,
    pub accuracy: f64,
    pub payload_size: u64,
    pub t_cluster: f64,
    pub t_encode: f64,
}

impl ConfigEntry {
    /// Time to ship and prepare this entry at `bandwidth` bytes/s.
    pub fn cost(&self, bandwidth: f64) -> f64 {
        self.payload_size as f64 / bandwidth + self.t_cluster + self.t_encode
    }
}

#[derive(Debug, Error)]
pub enum ConfigSetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("frame {frame}: {source}")]
    Encode {
        frame: u64,
        #[source]
        source: EncodeError,
    },
    #[error("frame {frame}: {message}")]
    Profile { frame: u64, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
}

pub fn write_config_set(entries: &[ConfigEntry], mut w: impl Write) -> Result<(), ConfigSetError> {
    for e in entries {
        serde_json::to_writer(&mut w, e).map_err(|e| ConfigSetError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines; blank lines are skipped and errors carry the 1-based line.
pub fn read_config_set(r: impl BufRead) -> Result<Vec<ConfigEntry>, ConfigSetError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ConfigEntry = serde_json::from_str(&line).map_err(|e| ConfigSetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&e.accuracy) || e.t_cluster < 0.0 || e.t_encode < 0.0 {
            return Err(ConfigSetError::Parse {
                line: i + 1,
                message: "accuracy must be in [0,1] and timings >= 0".into(),
            });
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Deterministic cost model; identical runs give identical sets.
    #[default]
    Modeled,
    /// Median of five wall-clock measurements.
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileParams {
    pub k_values: Vec<u8>,
    pub q_values: Vec<(u8, u8)>,
    pub padding: u32,
    pub grid: usize,
    pub timing: TimingMode,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            k_values: vec![1, 2, 3, 4],
            q_values: vec![(90, 20), (90, 40), (70, 20), (50, 10)],
            padding: super::roi::DEFAULT_PADDING,
            grid: crate::scheduler::DEFAULT_GRID,
            timing: TimingMode::Modeled,
        }
    }
}

pub fn modeled_cluster_time(n_boxes: usize, k: usize) -> f64 {
    CLUSTER_S_BASE + CLUSTER_S_PER_BOX_K * (n_boxes * k) as f64
}

pub fn modeled_encode_time(plan: &RoiPlan, width: u32, height: u32) -> f64 {
    let roi_px: u64 = plan.rois.iter().map(|r| r.area()).sum();
    ENCODE_S_PER_PIXEL * (u64::from(width) * u64::from(height) + roi_px) as f64
}

fn median_of_5(mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..5)
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub entries: Vec<ConfigEntry>,
    /// `(frame_id, k)` pairs skipped because k exceeded the box count.
    pub skipped: Vec<(u64, u8)>,
}

/// Profiles every `(frame, K, Q)` combination: cluster the ground-truth
/// boxes, plan and encode, decode, run the cloud model on the decoded frame
/// and record accuracy, size and timings. Entries come out ordered by frame,
/// then K, then Q, with ids numbered in that order.
pub fn build_config_set(
    corpus: &[(Frame, GroundTruth)],
    params: &ProfileParams,
    cloud: &CloudModel,
) -> Result<ConfigSet, ConfigSetError> {
    if corpus.is_empty() {
        return Err(ConfigSetError::EmptyCorpus);
    }
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for (fi, (frame, gt)) in corpus.iter().enumerate() {
        for &k in &params.k_values {
            if k == 0 || usize::from(k) > gt.objects.len() {
                skipped.push((frame.id, k));
                continue;
            }
            for &q in &params.q_values {
                jobs.push((fi, k, q));
            }
        }
    }
    let results: Vec<Result<ConfigEntry, ConfigSetError>> = jobs
        .par_iter()
        .map(|&(fi, k, (q_roi, q_bg))| profile_one(&corpus[fi], k, q_roi, q_bg, params, cloud))
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let mut e = r?;
        e.id = i as u64;
        entries.push(e);
    }
    Ok(ConfigSet { entries, skipped })
}

fn profile_one(
    (frame, gt): &(Frame, GroundTruth),
    k: u8,
    q_roi: u8,
    q_bg: u8,
    params: &ProfileParams,
    cloud: &CloudModel,
) -> Result<ConfigEntry, ConfigSetError> {
    let fid = frame.id;
    let profile_err = |m: String| ConfigSetError::Profile { frame: fid, message: m };
    RoiPlan::validate_quality(q_roi, q_bg).map_err(|e| profile_err(e.to_string()))?;
    let (w, h) = frame.dims();
    let boxes: Vec<BoundingBox<f64>> = gt.objects.iter().filter_map(|o| o.bbox.clamp_to(w as f64, h as f64)).collect();
    let cluster = || weighted_bikmeans(&boxes, usize::from(k));
    let clustering = cluster().map_err(|e| profile_err(e.to_string()))?;
    let rois = plan_rois(&boxes, &clustering.clusters, params.padding, w, h).map_err(|e| profile_err(e.to_string()))?;
    let plan = RoiPlan { k, rois, q_roi, q_bg };
    let enc = encode_frame(frame, &plan).map_err(|source| ConfigSetError::Encode { frame: fid, source })?;
    let decoded = decode_frame(&enc).map_err(|e| profile_err(e.to_string()))?;
    let dets = cloud.infer(&decoded, frame, gt).map_err(|e| profile_err(e.to_string()))?;
    let accuracy = evaluate_map(&[dets], std::slice::from_ref(gt), ACCURACY_IOU).map;
    let (t_cluster, t_encode) = match params.timing {
        TimingMode::Modeled => (modeled_cluster_time(boxes.len(), usize::from(k)), modeled_encode_time(&plan, w, h)),
        TimingMode::WallClock => (
            median_of_5(|| {
                let _ = cluster();
            }),
            median_of_5(|| {
                let _ = encode_frame(frame, &plan);
            }),
        ),
    };
    Ok(ConfigEntry {
        id: 0,
        frame_id: fid,
        embedding: embed(&boxes, w, h, params.grid),
        k,
        q_roi,
        q_bg,
        accuracy,
        payload_size: enc.total_size() as u64,
        t_cluster,
        t_encode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip_and_line_errors() {
        let e = ConfigEntry {
            id: 3,
            frame_id: 1,
            embedding: embed::<f64>(&[], 10, 10, 2),
            k: 1,
            q_roi: 90,
            q_bg: 20,
            accuracy: 0.5,
            payload_size: 100,
            t_cluster: 0.01,
            t_encode: 0.02,
        };
        let mut buf = Vec::new();
        write_config_set(&[e.clone(), e.clone()], &mut buf).unwrap();
        assert_eq!(read_config_set(&buf[..]).unwrap(), vec![e.clone(), e]);
        let bad = b"{\"id\":1}\n".to_vec();
        let mut all = buf.clone();
        all.extend_from_slice(&bad);
        match read_config_set(&all[..]) {
            Err(ConfigSetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cost_formula() {
        let e = ConfigEntry {
            id: 0,
            frame_id: 0,
            embedding: embed::<f64>(&[], 10, 10, 2),
            k: 1,
            q_roi: 90,
            q_bg: 20,
            accuracy: 0.9,
            payload_size: 150_000,
            t_cluster: 0.02,
            t_encode: 0.01,
        };
        assert!((e.cost(1e6) - 0.18).abs() < 1e-12);
    }
}
