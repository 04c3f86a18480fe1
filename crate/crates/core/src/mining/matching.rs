//! Five-point descriptor matching of one reference target into a feature map.

use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, Detection, FeatureLayer, FeatureMap, Source};
use crate::scalar::Real;

/// Variance floor for the diagonal Mahalanobis metric.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Scale plausibility window.
pub const MIN_SCALE: f64 = 1.0 / 3.0;
pub const MAX_SCALE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MiningParams<T> {
    /// Search-region padding, px.
    pub l_padding: T,
    /// Matching rounds including the conservative one.
    pub depth: u32,
    /// Group loss below which a round is accepted.
    pub epsilon: T,
    /// Group loss above which the target counts as occluded or absent.
    pub occlusion_threshold: T,
    pub penalty_weight: T,
    /// Same-class IoU at which an edge detection already covers a target.
    pub duplicate_iou: T,
    /// Initial and maximum reference hop length, frames.
    pub reference_staleness_threshold: u32,
    pub conf_small: T,
    pub conf_large: T,
    /// Offset in the confidence denominator; must stay below 1.
    pub tau: T,
    /// Area below which the small-bucket confidence applies, px².
    pub small_area: T,
}

impl<T: Real> Default for MiningParams<T> {
    fn default() -> Self {
        Self {
            l_padding: T::lit(16.0),
            depth: 3,
            epsilon: T::lit(1.5),
            occlusion_threshold: T::lit(7.0),
            penalty_weight: T::lit(0.5),
            duplicate_iou: T::lit(0.5),
            reference_staleness_threshold: 8,
            conf_small: T::lit(0.5),
            conf_large: T::lit(0.8),
            tau: T::zero(),
            small_area: T::lit(1024.0),
        }
    }
}

impl<T: Real> MiningParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: T, name: &str| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(format!("{name} must be > 0, got {v}"))
            }
        };
        if self.depth < 1 {
            return Err("depth must be >= 1".into());
        }
        pos(self.epsilon, "epsilon")?;
        pos(self.occlusion_threshold, "occlusion_threshold")?;
        pos(self.penalty_weight, "penalty_weight")?;
        pos(self.conf_small, "conf_small")?;
        pos(self.conf_large, "conf_large")?;
        if self.l_padding < T::zero() {
            return Err("l_padding must be >= 0".into());
        }
        if !(self.tau < T::one()) {
            return Err("tau must be < 1".into());
        }
        if self.reference_staleness_threshold < 1 {
            return Err("reference_staleness_threshold must be >= 1".into());
        }
        Ok(())
    }

    /// Confidence for a match with the given total loss over the five points.
    /// Strictly decreasing in `group_loss` and always in `(0, 1]`.
    pub fn confidence(&self, area: T, group_loss: T) -> T {
        let b = if area < self.small_area {
            self.conf_small
        } else {
            self.conf_large
        };
        let mean = group_loss.max(T::zero()) / T::lit(5.0);
        let c = b / (mean.exp() - self.tau);
        c.min(T::one()).max(T::min_positive_value())
    }
}

/// Layer whose stride is closest to `sqrt(area) / 4`; ties go to the smaller
/// stride.
pub fn select_layer<T: Real>(bbox: &BoundingBox<T>, fmap: &FeatureMap<T>) -> usize {
    let target = bbox.area().sqrt().as_f64() / 4.0;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, l) in fmap.layers.iter().enumerate() {
        let d = (l.stride as f64 - target).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion<T> {
    pub bbox: BoundingBox<T>,
    pub source_track_id: Option<u64>,
    pub layer: usize,
}

/// Hull of the predicted and reference boxes, padded and clamped to the frame.
/// `None` when nothing of it lies inside the frame.
pub fn search_region<T: Real>(
    o_pre: &BoundingBox<T>,
    o_ref: &BoundingBox<T>,
    l_padding: T,
    frame_width: u32,
    frame_height: u32,
) -> Option<BoundingBox<T>> {
    o_pre
        .hull(o_ref)
        .expand(l_padding)
        .clamp_to(T::lit(frame_width as f64), T::lit(frame_height as f64))
}

pub type Cell = (usize, usize);

/// Reference descriptors for one target: the box centre `p0` and the four
/// quadrant centres `p1..p4` (top-left, top-right, bottom-left, bottom-right).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoints<T> {
    pub layer: usize,
    pub stride: u32,
    pub reference_box: BoundingBox<T>,
    pub class_id: u32,
    pub points: [(T, T); 5],
    pub cells: [Cell; 5],
    pub descriptors: [Vec<T>; 5],
    /// Inverse per-channel variance of the reference layer.
    pub inv_variance: Vec<T>,
    /// Box narrower than two cells on some axis; `p1..p4` collapsed onto `p0`.
    pub degenerate: bool,
}

/// Reads the five descriptors of `det` from the layer chosen by
/// [`select_layer`]. The box is expected inside the frame.
pub fn sample_descriptors<T: Real>(det: &Detection<T>, fmap: &FeatureMap<T>) -> SamplePoints<T> {
    let b = *det.bbox();
    let layer_idx = select_layer(&b, fmap);
    let layer = &fmap.layers[layer_idx];
    let inv_variance = inverse_variance(layer);
    sample_with(det, layer, layer_idx, inv_variance)
}

fn inverse_variance<T: Real>(layer: &FeatureLayer<T>) -> Vec<T> {
    let floor = T::lit(VARIANCE_FLOOR);
    layer.channel_variance().into_iter().map(|v| T::one() / v.max(floor)).collect()
}

pub(crate) fn sample_with<T: Real>(
    det: &Detection<T>,
    layer: &FeatureLayer<T>,
    layer_idx: usize,
    inv_variance: Vec<T>,
) -> SamplePoints<T> {
    let b = *det.bbox();
    let s = T::lit(layer.stride as f64);
    let two = T::lit(2.0);
    let degenerate = b.width() < two * s || b.height() < two * s;
    let (cx, cy) = b.center();
    let points = if degenerate {
        [(cx, cy); 5]
    } else {
        let q = T::lit(0.25);
        let (qx, qy) = (b.width() * q, b.height() * q);
        [
            (cx, cy),
            (cx - qx, cy - qy),
            (cx + qx, cy - qy),
            (cx - qx, cy + qy),
            (cx + qx, cy + qy),
        ]
    };
    let cells = points.map(|(x, y)| layer.cell_of(x, y));
    let descriptors = cells.map(|(u, v)| layer.cell(u, v).to_vec());
    SamplePoints {
        layer: layer_idx,
        stride: layer.stride,
        reference_box: b,
        class_id: det.class_id(),
        points,
        cells,
        descriptors,
        inv_variance,
        degenerate,
    }
}

/// Normalized diagonal Mahalanobis distance `sqrt(mean_c (a-b)^2 / var_c)`.
pub fn feature_distance<T: Real>(a: &[T], b: &[T], inv_variance: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let sum: T = a
        .iter()
        .zip(b)
        .zip(inv_variance)
        .map(|((&x, &y), &w)| (x - y) * (x - y) * w)
        .sum();
    (sum / T::from_usize_lossy(a.len())).sqrt()
}

/// Inclusive cell range `[u0, u1] x [v0, v1]` whose centres lie in `region`.
pub fn region_cells<T: Real>(region: &BoundingBox<T>, layer: &FeatureLayer<T>) -> Option<(Cell, Cell)> {
    let s = T::lit(layer.stride as f64);
    let lo = |p: T| (p / s).ceil().max(T::zero()).to_usize();
    let hi = |p: T| (p / s).floor().to_isize();
    let u0 = lo(region.x_min())?;
    let v0 = lo(region.y_min())?;
    let u1 = hi(region.x_max())?.min(layer.grid_w as isize - 1);
    let v1 = hi(region.y_max())?.min(layer.grid_h as isize - 1);
    if u1 < u0 as isize || v1 < v0 as isize {
        return None;
    }
    Some(((u0, v0), (u1 as usize, v1 as usize)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchTransform<T> {
    pub scale: (T, T),
    pub translation: (T, T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFailure {
    /// Empty search region, missing layer, or a box that left the frame.
    Degenerate,
    /// Best group loss above the occlusion threshold.
    Occluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome<T> {
    pub detection: Option<Detection<T>>,
    pub confidence: T,
    /// Rounds run, the conservative one included.
    pub rounds: u32,
    /// Lowest group loss seen over all rounds.
    pub group_loss: T,
    pub conservative: bool,
    pub transform: Option<MatchTransform<T>>,
    /// Matched cells `p̂0..p̂4` of the reported result.
    pub cells: [Cell; 5],
    pub failure: Option<MatchFailure>,
}

impl<T: Real> MatchOutcome<T> {
    fn failed(failure: MatchFailure, rounds: u32, group_loss: T) -> Self {
        Self {
            detection: None,
            confidence: T::zero(),
            rounds,
            group_loss,
            conservative: false,
            transform: None,
            cells: [(0, 0); 5],
            failure: Some(failure),
        }
    }
}

/// Dense per-point distance tables over the search region.
struct Tables<T> {
    origin: Cell,
    w: usize,
    h: usize,
    /// `dist[i][k]` is the distance of region cell `k` to descriptor `i`.
    dist: [Vec<T>; 5],
}

impl<T: Real> Tables<T> {
    fn new(reference: &SamplePoints<T>, layer: &FeatureLayer<T>, (lo, hi): (Cell, Cell)) -> Self {
        let (w, h) = (hi.0 - lo.0 + 1, hi.1 - lo.1 + 1);
        let dist = std::array::from_fn(|i| {
            let mut d = Vec::with_capacity(w * h);
            for v in lo.1..=hi.1 {
                for u in lo.0..=hi.0 {
                    d.push(feature_distance(layer.cell(u, v), &reference.descriptors[i], &reference.inv_variance));
                }
            }
            d
        });
        Self {
            origin: lo,
            w,
            h,
            dist,
        }
    }

    fn cell(&self, k: usize) -> Cell {
        (self.origin.0 + k % self.w, self.origin.1 + k / self.w)
    }

    /// First (row-major) minimiser of `dist[i] + extra` within the local
    /// rectangle `[u0, u1] x [v0, v1]`.
    fn argmin(&self, i: usize, extra: Option<&[T]>, (u0, v0): Cell, (u1, v1): Cell) -> usize {
        let mut best = usize::MAX;
        let mut best_v = T::infinity();
        for v in v0..=v1 {
            for u in u0..=u1 {
                let k = v * self.w + u;
                let mut x = self.dist[i][k];
                if let Some(e) = extra {
                    x = x + e[k];
                }
                if x < best_v {
                    best_v = x;
                    best = k;
                }
            }
        }
        if best == usize::MAX {
            // All-NaN input; fall back to the first cell so callers stay total.
            best = v0 * self.w + u0;
        }
        best
    }

    /// Best quadrant matches for a given `p̂0` (local index `k0`).
    fn quadrants(&self, k0: usize) -> [usize; 4] {
        let (u0, v0) = (k0 % self.w, k0 / self.w);
        let (ue, ve) = (self.w - 1, self.h - 1);
        [
            self.argmin(1, None, (0, 0), (u0, v0)),
            self.argmin(2, None, (u0, 0), (ue, v0)),
            self.argmin(3, None, (0, v0), (u0, ve)),
            self.argmin(4, None, (u0, v0), (ue, ve)),
        ]
    }

    fn group_loss(&self, ks: &[usize; 5]) -> T {
        (0..5).map(|i| self.dist[i][ks[i]]).sum()
    }
}

fn cell_dist<T: Real>(a: Cell, b: Cell, stride: u32) -> T {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    T::lit(dx.hypot(dy) * stride as f64)
}

fn axis_scale<T: Real>(matched: T, reference: T) -> T {
    let s = if reference > T::zero() {
        matched / reference
    } else {
        T::one()
    };
    s.max(T::lit(MIN_SCALE)).min(T::lit(MAX_SCALE))
}

/// Box implied by matched cells. The scale on each axis is the ratio of the
/// matched quadrant spans to the reference spans, so an exact match
/// reproduces the reference box; `conservative` keeps the reference scale.
fn recover_box<T: Real>(
    reference: &SamplePoints<T>,
    cells: &[Cell; 5],
    conservative: bool,
    frame_width: u32,
    frame_height: u32,
) -> Option<(BoundingBox<T>, MatchTransform<T>)> {
    let s = reference.stride;
    let st = T::lit(s as f64);
    let r = &reference.cells;
    let scale = if conservative {
        (T::one(), T::one())
    } else {
        let span = |c: &[Cell; 5], a: usize, b: usize, x: usize, y: usize| -> T {
            cell_dist::<T>(c[a], c[b], s) + cell_dist::<T>(c[x], c[y], s)
        };
        (
            axis_scale(span(cells, 1, 2, 3, 4), span(r, 1, 2, 3, 4)),
            axis_scale(span(cells, 1, 3, 2, 4), span(r, 1, 3, 2, 4)),
        )
    };
    let tx = (T::lit(cells[0].0 as f64) - T::lit(r[0].0 as f64)) * st;
    let ty = (T::lit(cells[0].1 as f64) - T::lit(r[0].1 as f64)) * st;
    let b = &reference.reference_box;
    let (cx, cy) = b.center();
    let bbox = BoundingBox::from_center(cx + tx, cy + ty, b.width() * scale.0, b.height() * scale.1)
        .ok()?
        .clamp_to(T::lit(frame_width as f64), T::lit(frame_height as f64))?;
    Some((
        bbox,
        MatchTransform {
            scale,
            translation: (tx, ty),
        },
    ))
}

/// Searches `region` of `cur` for the target described by `reference`.
///
/// Each normal round takes `p̂0` as the region cell minimising distance to
/// `p0` plus the accumulated penalty, then matches `p1..p4` exhaustively in
/// the four inclusive quadrants around `p̂0`. A round whose group loss is
/// below `epsilon` is accepted. A failed round adds
/// `penalty_weight / (1 + dist_px)` around each of its five match locations.
/// After `max(depth - 1, 1)` failed rounds the conservative result is used:
/// the unpenalised best `p̂0` with the reference scale, unless the lowest
/// group loss seen exceeds `occlusion_threshold`.
pub fn match_target<T: Real>(
    reference: &SamplePoints<T>,
    cur: &FeatureMap<T>,
    region: &SearchRegion<T>,
    params: &MiningParams<T>,
) -> MatchOutcome<T> {
    let Some(layer) = cur.layers.get(region.layer) else {
        return MatchOutcome::failed(MatchFailure::Degenerate, 0, T::infinity());
    };
    if layer.stride != reference.stride || layer.channels != reference.inv_variance.len() {
        return MatchOutcome::failed(MatchFailure::Degenerate, 0, T::infinity());
    }
    let Some(range) = region_cells(&region.bbox, layer) else {
        return MatchOutcome::failed(MatchFailure::Degenerate, 0, T::infinity());
    };
    let t = Tables::new(reference, layer, range);
    let n = t.w * t.h;
    let full = ((0, 0), (t.w - 1, t.h - 1));
    let normal_rounds = params.depth.saturating_sub(1).max(1);
    let mut penalty = vec![T::zero(); n];
    let mut best_loss = T::infinity();
    let mut rounds = 0;

    for _ in 0..normal_rounds {
        rounds += 1;
        let k0 = t.argmin(0, Some(&penalty), full.0, full.1);
        let [k1, k2, k3, k4] = t.quadrants(k0);
        let ks = [k0, k1, k2, k3, k4];
        let loss = t.group_loss(&ks);
        if loss < best_loss || best_loss.is_infinite() {
            best_loss = loss;
        }
        if loss < params.epsilon {
            let cells = ks.map(|k| t.cell(k));
            return finish(reference, cur, cells, false, rounds, loss, params);
        }
        let failed = ks.map(|k| t.cell(k));
        for (k, p) in penalty.iter_mut().enumerate() {
            let c = t.cell(k);
            for &f in &failed {
                *p = *p + params.penalty_weight / (T::one() + cell_dist::<T>(c, f, reference.stride));
            }
        }
    }

    rounds += 1;
    if !(best_loss <= params.occlusion_threshold) {
        return MatchOutcome::failed(MatchFailure::Occluded, rounds, best_loss);
    }
    let k0 = t.argmin(0, None, full.0, full.1);
    let c0 = t.cell(k0);
    finish(reference, cur, [c0; 5], true, rounds, best_loss, params)
}

fn finish<T: Real>(
    reference: &SamplePoints<T>,
    cur: &FeatureMap<T>,
    cells: [Cell; 5],
    conservative: bool,
    rounds: u32,
    group_loss: T,
    params: &MiningParams<T>,
) -> MatchOutcome<T> {
    let Some((bbox, transform)) = recover_box(reference, &cells, conservative, cur.frame_width, cur.frame_height)
    else {
        return MatchOutcome::failed(MatchFailure::Degenerate, rounds, group_loss);
    };
    let confidence = params.confidence(bbox.area(), group_loss);
    MatchOutcome {
        detection: Some(Detection::new(bbox, reference.class_id, confidence, Source::Mined)),
        confidence,
        rounds,
        group_loss,
        conservative,
        transform: Some(transform),
        cells,
        failure: None,
    }
}
