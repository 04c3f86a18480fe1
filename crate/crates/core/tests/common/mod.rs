//! Independent oracles shared by the integration and acceptance targets.
//! Nothing here calls the code under test to compute an expected value.
#![allow(dead_code)]

use cloudeye::encode::ConfigEntry;
use cloudeye::mining::{sample_descriptors, search_region, SamplePoints, SearchRegion};
use cloudeye::model::{BoundingBox, Detection, FeatureLayer, FeatureMap, Source};
use cloudeye::scheduler::{embed, BudgetParams, DistributionEmbedding, FallbackPolicy};
use cloudeye::tracking::TrackerParams;
use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox<f64> {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

// ---- Kalman: dense matrix arithmetic with nalgebra ----

pub type M7 = SMatrix<f64, 7, 7>;
pub type V7 = SVector<f64, 7>;
pub type V4 = SVector<f64, 4>;

pub fn f_mat() -> M7 {
    let mut f = M7::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

pub fn h_mat() -> SMatrix<f64, 4, 7> {
    let mut h = SMatrix::<f64, 4, 7>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

pub fn to_m7(a: &[[f64; 7]; 7]) -> M7 {
    M7::from_fn(|r, c| a[r][c])
}

fn sigma_sq(p: &TrackerParams<f64>, area: f64) -> f64 {
    p.noise_scale * p.noise_scale * area.max(p.min_area)
}

/// `x' = F x`, `P' = F P F^T + Q(area')`.
pub fn kf_predict(x: &V7, p: &M7, params: &TrackerParams<f64>) -> (V7, M7) {
    let f = f_mat();
    let x2 = f * x;
    let s2 = sigma_sq(params, x2[2]);
    let q = M7::from_diagonal(&V7::from_fn(|i, _| params.process_noise[i] * s2));
    (x2, f * p * f.transpose() + q)
}

/// Textbook gain form: `K = P H^T S^-1`, `x' = x + K y`, `P' = (I - K H) P`.
pub fn kf_update(x: &V7, p: &M7, z: &V4, params: &TrackerParams<f64>) -> (V7, M7) {
    let h = h_mat();
    let s2 = sigma_sq(params, x[2]);
    let r = SMatrix::<f64, 4, 4>::from_diagonal(&V4::from_fn(|i, _| params.measurement_noise[i] * s2));
    let s = h * p * h.transpose() + r;
    let k = p * h.transpose() * s.try_inverse().expect("S invertible");
    let x2 = x + k * (z - h * x);
    let p2 = (M7::identity() - k * h) * p;
    (x2, 0.5 * (p2 + p2.transpose()))
}

pub fn measurement(b: &BoundingBox<f64>) -> V4 {
    let (w, h) = (b.x_max() - b.x_min(), b.y_max() - b.y_min());
    V4::new((b.x_min() + b.x_max()) / 2.0, (b.y_min() + b.y_max()) / 2.0, w * h, w / h)
}

pub fn min_eigenvalue(p: &M7) -> f64 {
    p.symmetric_eigen().eigenvalues.min()
}

// ---- Feature mining: exhaustive joint search ----

/// Per-channel population variance over every cell of `layer`.
pub fn layer_variance(layer: &FeatureLayer<f64>) -> Vec<f64> {
    let n = (layer.grid_w * layer.grid_h) as f64;
    (0..layer.channels)
        .map(|c| {
            let vals: Vec<f64> = (0..layer.grid_h)
                .flat_map(|v| (0..layer.grid_w).map(move |u| (u, v)))
                .map(|(u, v)| layer.cell(u, v)[c])
                .collect();
            let m = vals.iter().sum::<f64>() / n;
            vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
        })
        .collect()
}

pub fn mahalanobis(a: &[f64], b: &[f64], var: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(var).map(|((x, y), v)| (x - y).powi(2) / v.max(1e-6)).sum();
    (s / a.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMatch {
    pub cells: [(usize, usize); 5],
    pub loss: f64,
}

/// Every `p0` cell in the inclusive range, each with the best match of every
/// quadrant point inside its quadrant; returns the lowest total. Ties keep the
/// first in row-major order.
pub fn brute_force_match(
    descriptors: &[Vec<f64>; 5],
    var: &[f64],
    layer: &FeatureLayer<f64>,
    lo: (usize, usize),
    hi: (usize, usize),
) -> JointMatch {
    let d = |i: usize, u: usize, v: usize| mahalanobis(layer.cell(u, v), &descriptors[i], var);
    let best_in = |i: usize, u0: usize, v0: usize, u1: usize, v1: usize| {
        let mut best = ((u0, v0), f64::INFINITY);
        for v in v0..=v1 {
            for u in u0..=u1 {
                let x = d(i, u, v);
                if x < best.1 {
                    best = ((u, v), x);
                }
            }
        }
        best
    };
    let mut out = JointMatch {
        cells: [lo; 5],
        loss: f64::INFINITY,
    };
    for v0 in lo.1..=hi.1 {
        for u0 in lo.0..=hi.0 {
            let q = [
                best_in(1, lo.0, lo.1, u0, v0),
                best_in(2, u0, lo.1, hi.0, v0),
                best_in(3, lo.0, v0, u0, hi.1),
                best_in(4, u0, v0, hi.0, hi.1),
            ];
            let loss = d(0, u0, v0) + q.iter().map(|x| x.1).sum::<f64>();
            if loss < out.loss {
                out = JointMatch {
                    cells: [(u0, v0), q[0].0, q[1].0, q[2].0, q[3].0],
                    loss,
                };
            }
        }
    }
    out
}

pub fn random_layer_map(seed: u64, w: u32, h: u32, stride: u32, channels: usize) -> FeatureMap<f64> {
    let mut r = rng(seed);
    let mut m = FeatureMap::zeros(0, w, h, &[stride], channels).unwrap();
    let l = &mut m.layers[0];
    for v in 0..l.grid_h {
        for u in 0..l.grid_w {
            for x in l.cell_mut(u, v) {
                *x = r.random_range(-1.0..1.0);
            }
        }
    }
    m
}

pub struct Planted {
    pub reference: SamplePoints<f64>,
    pub reference_box: BoundingBox<f64>,
    pub cur: FeatureMap<f64>,
    pub region: SearchRegion<f64>,
    pub offset: (i64, i64),
    pub stride: u32,
}

/// Reference target on a random map, its five descriptors copied into an
/// unrelated random map at a cell offset, plus a search region covering both.
pub fn planted_case(seed: u64) -> Planted {
    const W: u32 = 256;
    const S: u32 = 8;
    let mut r = rng(seed);
    let ref_map = random_layer_map(seed.wrapping_mul(2) + 1, W, W, S, 8);
    let mut cur = random_layer_map(seed.wrapping_mul(2) + 2, W, W, S, 8);
    cur.frame_id = 1;
    let (w, h) = (r.random_range(24.0..64.0_f64).round(), r.random_range(24.0..64.0_f64).round());
    let margin = 48.0;
    let x0 = r.random_range(margin..W as f64 - margin - w).round();
    let y0 = r.random_range(margin..W as f64 - margin - h).round();
    let ref_box = bx(x0, y0, x0 + w, y0 + h);
    let det = Detection::new(ref_box, 1, 1.0, Source::Cloud);
    let reference = sample_descriptors(&det, &ref_map);
    let offset = (r.random_range(-3..=3_i64), r.random_range(-3..=3_i64));
    for i in 0..5 {
        let (u, v) = reference.cells[i];
        let (u2, v2) = ((u as i64 + offset.0) as usize, (v as i64 + offset.1) as usize);
        cur.layers[0].cell_mut(u2, v2).copy_from_slice(&reference.descriptors[i]);
    }
    let moved = bx(
        x0 + (offset.0 * S as i64) as f64,
        y0 + (offset.1 * S as i64) as f64,
        x0 + w + (offset.0 * S as i64) as f64,
        y0 + h + (offset.1 * S as i64) as f64,
    );
    let region = SearchRegion {
        bbox: search_region(&moved, &ref_box, 16.0, W, W).unwrap(),
        source_track_id: None,
        layer: 0,
    };
    Planted {
        reference,
        reference_box: ref_box,
        cur,
        region,
        offset,
        stride: S,
    }
}

/// Inclusive cell range whose represented pixels `(u*s, v*s)` lie in `b`.
pub fn cells_in(b: &BoundingBox<f64>, stride: u32, gw: usize, gh: usize) -> ((usize, usize), (usize, usize)) {
    let s = stride as f64;
    let lo = |p: f64| (p / s).ceil().max(0.0) as usize;
    let hi = |p: f64, n: usize| ((p / s).floor() as usize).min(n - 1);
    ((lo(b.x_min()), lo(b.y_min())), (hi(b.x_max(), gw), hi(b.y_max(), gh)))
}

// ---- Clustering ----

pub fn weighted_points(boxes: &[BoundingBox<f64>]) -> Vec<(f64, f64, f64)> {
    boxes
        .iter()
        .map(|b| {
            let w = (b.x_max() - b.x_min()) * (b.y_max() - b.y_min());
            ((b.x_min() + b.x_max()) / 2.0, (b.y_min() + b.y_max()) / 2.0, w)
        })
        .collect()
}

pub fn wcss(pts: &[(f64, f64, f64)], members: &[usize]) -> f64 {
    let wsum: f64 = members.iter().map(|&i| pts[i].2).sum();
    let cx = members.iter().map(|&i| pts[i].0 * pts[i].2).sum::<f64>() / wsum;
    let cy = members.iter().map(|&i| pts[i].1 * pts[i].2).sum::<f64>() / wsum;
    members
        .iter()
        .map(|&i| pts[i].2 * ((pts[i].0 - cx).powi(2) + (pts[i].1 - cy).powi(2)))
        .sum()
}

/// Best 2-partition by total weighted WCSS over all `2^(n-1) - 1` splits;
/// the half containing box 0 comes first.
pub fn exhaustive_two_partition(boxes: &[BoundingBox<f64>]) -> (Vec<usize>, Vec<usize>, f64) {
    let n = boxes.len();
    assert!((2..=20).contains(&n));
    let pts = weighted_points(boxes);
    let mut best = (Vec::new(), Vec::new(), f64::INFINITY);
    for mask in 0..(1u32 << (n - 1)) {
        // box 0 always on side A; mask selects which of 1..n join side B
        let b: Vec<usize> = (1..n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
        if b.is_empty() {
            continue;
        }
        let a: Vec<usize> = (0..n).filter(|i| !b.contains(i)).collect();
        let cost = wcss(&pts, &a) + wcss(&pts, &b);
        if cost < best.2 {
            best = (a, b, cost);
        }
    }
    best
}

pub fn random_boxes(r: &mut impl Rng, n: usize, w: f64, h: f64) -> Vec<BoundingBox<f64>> {
    (0..n)
        .map(|_| {
            let bw = r.random_range(4.0..60.0);
            let bh = r.random_range(4.0..60.0);
            let x = r.random_range(0.0..w - bw);
            let y = r.random_range(0.0..h - bh);
            bx(x, y, x + bw, y + bh)
        })
        .collect()
}

// ---- Scheduler ----

/// Enumerates every candidate: the feasible ones ranked by accuracy, then
/// smaller size, smaller K, lower id; otherwise the policy fallback.
/// Returns `(index, feasible)`.
pub fn select_oracle(c: &[ConfigEntry], b: &BudgetParams) -> Option<(usize, bool)> {
    let cost = |e: &ConfigEntry| e.payload_size as f64 / b.bandwidth + e.t_cluster + e.t_encode;
    let key = |e: &ConfigEntry| (std::cmp::Reverse(ordered(e.accuracy)), e.payload_size, e.k, e.id);
    let mut best: Option<usize> = None;
    for i in 0..c.len() {
        if cost(&c[i]) <= b.latency && best.is_none_or(|j| key(&c[i]) < key(&c[j])) {
            best = Some(i);
        }
    }
    if let Some(i) = best {
        return Some((i, true));
    }
    match b.fallback {
        FallbackPolicy::Skip => None,
        FallbackPolicy::SmallestSize => (0..c.len())
            .min_by_key(|&i| (c[i].payload_size, std::cmp::Reverse(ordered(c[i].accuracy)), c[i].id))
            .map(|i| (i, false)),
    }
}

/// Total order key for finite floats.
fn ordered(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

pub fn entry(id: u64, emb: DistributionEmbedding, k: u8, acc: f64, size: u64, tk: f64, tq: f64) -> ConfigEntry {
    ConfigEntry {
        id,
        frame_id: id,
        embedding: emb,
        k,
        q_roi: 90,
        q_bg: 20,
        accuracy: acc,
        payload_size: size,
        t_cluster: tk,
        t_encode: tq,
    }
}

/// Clustered box layouts, so the set has near neighbours the way a profiled
/// corpus of one camera does.
pub fn synthetic_embeddings(seed: u64, n: usize) -> Vec<DistributionEmbedding> {
    let mut r = rng(seed);
    let layouts: Vec<Vec<BoundingBox<f64>>> = (0..40)
        .map(|_| {
            let k = r.random_range(1..=8);
            random_boxes(&mut r, k, 320.0, 240.0)
        })
        .collect();
    (0..n)
        .map(|_| {
            let base = &layouts[r.random_range(0..layouts.len())];
            let jittered: Vec<_> = base
                .iter()
                .map(|b| {
                    let dx = r.random_range(-12.0..12.0_f64);
                    let dy = r.random_range(-12.0..12.0_f64);
                    let x0 = (b.x_min() + dx).clamp(0.0, 300.0);
                    let y0 = (b.y_min() + dy).clamp(0.0, 220.0);
                    bx(x0, y0, (x0 + b.x_max() - b.x_min()).min(320.0), (y0 + b.y_max() - b.y_min()).min(240.0))
                })
                .collect();
            embed(&jittered, 320, 240, 4)
        })
        .collect()
}
