//! Fixed-length summary of where targets sit in a frame.
//!
//! The frame is cut into a `g x g` grid. Each cell holds the area-weighted
//! mean centre (normalized by frame size), the total box area (normalized by
//! frame area, capped at 1) and the share of boxes falling in it. A second
//! grid offset by half a cell softens bucketing at cell borders.

use serde::{Deserialize, Serialize};

use crate::model::BoundingBox;
use crate::scalar::Real;

pub const DEFAULT_GRID: usize = 4;
pub const CELL_DIM: usize = 4;
pub const METRIC_VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEmbedding {
    pub grid: usize,
    pub base: Vec<f64>,
    pub shifted: Vec<f64>,
    /// No boxes went in; both vectors are zero.
    pub empty: bool,
}

impl DistributionEmbedding {
    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// `[base; shifted]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.base.clone();
        v.extend_from_slice(&self.shifted);
        v
    }
}

fn cell_index(p: f64, cell: f64, offset: f64, g: usize) -> usize {
    let i = ((p + offset) / cell).floor();
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(g - 1)
    }
}

fn grid_vector(centers: &[(f64, f64, f64)], w: f64, h: f64, g: usize, offset: bool) -> Vec<f64> {
    let (cw, ch) = (w / g as f64, h / g as f64);
    let (ox, oy) = if offset { (cw / 2.0, ch / 2.0) } else { (0.0, 0.0) };
    // Per cell: sum(a*x), sum(a*y), sum(a), count.
    let mut acc = vec![[0.0f64; 4]; g * g];
    for &(x, y, a) in centers {
        let c = cell_index(y, ch, oy, g) * g + cell_index(x, cw, ox, g);
        acc[c][0] += a * x;
        acc[c][1] += a * y;
        acc[c][2] += a;
        acc[c][3] += 1.0;
    }
    let n = centers.len().max(1) as f64;
    let mut v = Vec::with_capacity(g * g * CELL_DIM);
    for [sx, sy, sa, cnt] in acc {
        if cnt == 0.0 {
            v.extend_from_slice(&[0.0; CELL_DIM]);
        } else {
            let (mx, my) = if sa > 0.0 { (sx / sa, sy / sa) } else { (0.0, 0.0) };
            v.push((mx / w).clamp(0.0, 1.0));
            v.push((my / h).clamp(0.0, 1.0));
            v.push((sa / (w * h)).min(1.0));
            v.push(cnt / n);
        }
    }
    v
}

/// Embeds a box set for a `width x height` frame. Panics if `grid < 2`.
pub fn embed<T: Real>(boxes: &[BoundingBox<T>], width: u32, height: u32, grid: usize) -> DistributionEmbedding {
    assert!(grid >= 2, "grid must be >= 2");
    let (w, h) = (f64::from(width.max(1)), f64::from(height.max(1)));
    let centers: Vec<(f64, f64, f64)> = boxes
        .iter()
        .map(|b| {
            let (x, y) = b.center();
            (x.as_f64(), y.as_f64(), b.area().as_f64())
        })
        .collect();
    DistributionEmbedding {
        grid,
        base: grid_vector(&centers, w, h, grid, false),
        shifted: grid_vector(&centers, w, h, grid, true),
        empty: boxes.is_empty(),
    }
}

/// Diagonal Mahalanobis metric over both grids: the distance is the mean of
/// the base-grid and shifted-grid distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetric {
    pub inv_var_base: Vec<f64>,
    pub inv_var_shifted: Vec<f64>,
}

impl EmbeddingMetric {
    pub fn identity(dim: usize) -> Self {
        Self {
            inv_var_base: vec![1.0; dim],
            inv_var_shifted: vec![1.0; dim],
        }
    }

    /// Per-component variances of `set`, floored at [`METRIC_VARIANCE_FLOOR`].
    pub fn fit<'a>(set: impl IntoIterator<Item = &'a DistributionEmbedding>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut s = vec![0.0; 2 * dim];
        let mut q = vec![0.0; 2 * dim];
        for e in set {
            n += 1;
            for (i, x) in e.base.iter().chain(&e.shifted).enumerate() {
                s[i] += x;
                q[i] += x * x;
            }
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let inv: Vec<f64> = s
            .iter()
            .zip(&q)
            .map(|(&s, &q)| {
                let m = s / n as f64;
                1.0 / (q / n as f64 - m * m).max(METRIC_VARIANCE_FLOOR)
            })
            .collect();
        Self {
            inv_var_base: inv[..dim].to_vec(),
            inv_var_shifted: inv[dim..].to_vec(),
        }
    }

    /// Per-component scale that turns the metric into plain Euclidean
    /// distance on each half of `[base; shifted]`.
    pub fn whitening(&self) -> Vec<f64> {
        self.inv_var_base.iter().chain(&self.inv_var_shifted).map(|v| v.sqrt()).collect()
    }

    pub fn distance(&self, a: &DistributionEmbedding, b: &DistributionEmbedding) -> f64 {
        let d = |x: &[f64], y: &[f64], w: &[f64]| -> f64 {
            x.iter()
                .zip(y)
                .zip(w)
                .map(|((a, b), w)| (a - b) * (a - b) * w)
                .sum::<f64>()
                .sqrt()
        };
        0.5 * (d(&a.base, &b.base, &self.inv_var_base) + d(&a.shifted, &b.shifted, &self.inv_var_shifted))
    }
}
