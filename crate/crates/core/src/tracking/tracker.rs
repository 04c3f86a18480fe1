use serde::Serialize;

use super::kalman::{KalmanTrack, TrackerParams};
use crate::model::{iou, BoundingBox, Detection};
use crate::scalar::Real;

/// Greedy max-IoU matching. Returns `(proposal index, detection index)` pairs
/// in the order they were taken; ties break on lower indices.
pub fn associate<T: Real>(
    proposals: &[BoundingBox<T>],
    detections: &[Detection<T>],
    threshold: T,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(T, usize, usize)> = Vec::new();
    for (pi, p) in proposals.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let v = iou(p, d.bbox());
            if v >= threshold {
                pairs.push((v, pi, di));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_p = vec![false; proposals.len()];
    let mut used_d = vec![false; detections.len()];
    let mut out = Vec::new();
    for (_, pi, di) in pairs {
        if !used_p[pi] && !used_d[di] {
            used_p[pi] = true;
            used_d[di] = true;
            out.push((pi, di));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UpdateSummary {
    pub matched: usize,
    pub spawned: Vec<u64>,
    pub removed: Vec<u64>,
    /// Detections refused because their area is below the tracker's floor.
    pub rejected: usize,
}

/// Owns the live tracks and hands out ids.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    pub params: TrackerParams<T>,
    tracks: Vec<KalmanTrack<T>>,
    next_id: u64,
}

impl<T: Real> Tracker<T> {
    pub fn new(params: TrackerParams<T>) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn tracks(&self) -> &[KalmanTrack<T>] {
        &self.tracks
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    /// Advances every track one frame and returns the predicted boxes.
    pub fn predict(&mut self) -> Vec<(u64, BoundingBox<T>)> {
        let params = &self.params;
        self.tracks
            .iter_mut()
            .map(|t| (t.id, t.predict(params)))
            .collect()
    }

    /// Current box of every track, in track order.
    pub fn boxes(&self) -> Vec<BoundingBox<T>> {
        self.tracks.iter().map(|t| t.bbox()).collect()
    }

    /// Associates `detections` with the current (predicted) boxes and updates.
    pub fn update(&mut self, detections: &[Detection<T>]) -> UpdateSummary {
        let boxes = self.boxes();
        let pairs = associate(&boxes, detections, self.params.association_iou);
        let mut det_used = vec![false; detections.len()];
        let matched: Vec<(u64, Detection<T>)> = pairs
            .iter()
            .map(|&(ti, di)| {
                det_used[di] = true;
                (self.tracks[ti].id, detections[di])
            })
            .collect();
        let unmatched: Vec<Detection<T>> = detections
            .iter()
            .zip(&det_used)
            .filter(|(_, &u)| !u)
            .map(|(d, _)| *d)
            .collect();
        self.update_matched(&matched, &unmatched)
    }

    /// Applies explicit matches; each track id may appear at most once.
    /// Unmatched tracks age, expired tracks are removed and unmatched
    /// detections start new tracks.
    pub fn update_matched(
        &mut self,
        matched: &[(u64, Detection<T>)],
        unmatched: &[Detection<T>],
    ) -> UpdateSummary {
        let mut summary = UpdateSummary::default();
        let mut touched = vec![false; self.tracks.len()];
        for (id, det) in matched {
            let Some(ti) = self.tracks.iter().position(|t| t.id == *id) else {
                log::warn!("update for unknown track {id}");
                continue;
            };
            assert!(!touched[ti], "track {id} matched twice");
            if det.bbox().area() < self.params.min_area {
                log::warn!("rejecting detection with area {:?}", det.bbox().area());
                summary.rejected += 1;
                continue;
            }
            touched[ti] = true;
            self.tracks[ti].update(det, &self.params);
            summary.matched += 1;
        }
        for (t, &hit) in self.tracks.iter_mut().zip(&touched) {
            if !hit {
                t.time_since_update += 1;
            }
        }
        let max_tsu = self.params.max_time_since_update;
        self.tracks.retain(|t| {
            let keep = t.time_since_update <= max_tsu;
            if !keep {
                summary.removed.push(t.id);
            }
            keep
        });
        for det in unmatched {
            if det.bbox().area() < self.params.min_area {
                log::warn!("rejecting detection with area {:?}", det.bbox().area());
                summary.rejected += 1;
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(KalmanTrack::new(id, det, &self.params));
            summary.spawned.push(id);
        }
        summary
    }

    /// Mean centre speed over live tracks, px/frame.
    pub fn mean_speed(&self) -> Option<T> {
        if self.tracks.is_empty() {
            return None;
        }
        let sum: T = self.tracks.iter().map(|t| t.speed()).sum();
        Some(sum / T::from_usize_lossy(self.tracks.len()))
    }
}
