use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cluster::{weighted_bikmeans, ClusterError};
use crate::model::BoundingBox;
use crate::scalar::Real;

pub const DEFAULT_PADDING: u32 = 16;

/// Pixel rectangle on the integer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn x_end(&self) -> u32 {
        self.x + self.w
    }

    pub fn y_end(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    /// Overlap with positive area.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x_end() && o.x < self.x_end() && self.y < o.y_end() && o.y < self.y_end()
    }

    pub fn union(&self, o: &Rect) -> Rect {
        let x = self.x.min(o.x);
        let y = self.y.min(o.y);
        Rect {
            x,
            y,
            w: self.x_end().max(o.x_end()) - x,
            h: self.y_end().max(o.y_end()) - y,
        }
    }

    pub fn contains_box<T: Real>(&self, b: &BoundingBox<T>) -> bool {
        let f = |v: u32| T::lit(v as f64);
        b.x_min() >= f(self.x) && b.y_min() >= f(self.y) && b.x_max() <= f(self.x_end()) && b.y_max() <= f(self.y_end())
    }

    pub fn to_box(&self) -> BoundingBox<f64> {
        BoundingBox::new(
            self.x as f64,
            self.y as f64,
            self.x_end() as f64,
            self.y_end() as f64,
        )
        .expect("rects in a plan have positive size")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("quality must be in 1..=100 with q_roi >= q_bg, got q_roi={q_roi}, q_bg={q_bg}")]
    Quality { q_roi: u8, q_bg: u8 },
    #[error("box {0} lies outside the frame")]
    OutsideFrame(usize),
}

/// Clustered high-quality regions plus the qualities to encode them with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiPlan {
    pub k: u8,
    pub rois: Vec<Rect>,
    pub q_roi: u8,
    pub q_bg: u8,
}

impl RoiPlan {
    /// Plan with no regions: the whole frame goes out at `q_bg`.
    pub fn background_only(q: u8) -> Self {
        Self {
            k: 0,
            rois: Vec::new(),
            q_roi: q,
            q_bg: q,
        }
    }

    pub fn validate_quality(q_roi: u8, q_bg: u8) -> Result<(), PlanError> {
        if (1..=100).contains(&q_roi) && (1..=100).contains(&q_bg) && q_roi >= q_bg {
            Ok(())
        } else {
            Err(PlanError::Quality { q_roi, q_bg })
        }
    }

    /// Fraction of frame pixels inside ROIs (ROIs never overlap).
    pub fn coverage(&self, width: u32, height: u32) -> f64 {
        let a: u64 = self.rois.iter().map(Rect::area).sum();
        a as f64 / (f64::from(width) * f64::from(height))
    }
}

/// Merges rectangles that overlap with positive area until none do.
/// Output is sorted by `(y, x)`.
pub fn merge_overlapping(mut rects: Vec<Rect>) -> Vec<Rect> {
    loop {
        let mut merged = false;
        'outer: for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                if rects[i].overlaps(&rects[j]) {
                    let r = rects.swap_remove(j);
                    rects[i] = rects[i].union(&r);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    rects.sort_by_key(|r| (r.y, r.x, r.h, r.w));
    rects
}

/// Hull of each cluster's boxes, padded, snapped outward to whole pixels,
/// clamped to the frame, then merged until no two regions overlap. Every
/// box ends up inside exactly one region.
pub fn plan_rois<T: Real>(
    boxes: &[BoundingBox<T>],
    clusters: &[Vec<usize>],
    padding: u32,
    width: u32,
    height: u32,
) -> Result<Vec<Rect>, PlanError> {
    let (fw, fh) = (T::lit(width as f64), T::lit(height as f64));
    for (i, b) in boxes.iter().enumerate() {
        if b.x_min() < T::zero() || b.y_min() < T::zero() || b.x_max() > fw || b.y_max() > fh {
            return Err(PlanError::OutsideFrame(i));
        }
    }
    let pad = T::lit(padding as f64);
    let mut rects = Vec::with_capacity(clusters.len());
    for c in clusters {
        let Some(hull) = c.iter().map(|&i| boxes[i]).reduce(|a, b| a.hull(&b)) else {
            continue;
        };
        let r = hull.expand(pad).round_out();
        let x0 = r.x_min().max(T::zero()).as_f64() as u32;
        let y0 = r.y_min().max(T::zero()).as_f64() as u32;
        let x1 = (r.x_max().min(fw).as_f64() as u32).max(x0 + 1).min(width);
        let y1 = (r.y_max().min(fh).as_f64() as u32).max(y0 + 1).min(height);
        rects.push(Rect {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        });
    }
    Ok(merge_overlapping(rects))
}

/// Clusters `boxes` into `k` groups (capped at the box count) and plans
/// regions for them. No boxes gives a background-only plan.
pub fn plan_frame<T: Real>(
    boxes: &[BoundingBox<T>],
    k: usize,
    padding: u32,
    q_roi: u8,
    q_bg: u8,
    width: u32,
    height: u32,
) -> Result<RoiPlan, PlanError> {
    RoiPlan::validate_quality(q_roi, q_bg)?;
    if boxes.is_empty() {
        return Ok(RoiPlan {
            k: 0,
            rois: Vec::new(),
            q_roi,
            q_bg,
        });
    }
    let k = k.clamp(1, boxes.len());
    let clustering = weighted_bikmeans(boxes, k)?;
    let rois = plan_rois(boxes, &clustering.clusters, padding, width, height)?;
    Ok(RoiPlan {
        k: k.min(u8::MAX as usize) as u8,
        rois,
        q_roi,
        q_bg,
    })
}
