//! Product-quantization index over configuration-set embeddings.
//!
//! Vectors are `[base; shifted]` scaled by the metric's whitening so each
//! half is plain Euclidean. Each of `m` subspaces gets a `ksub`-centroid
//! codebook; queries rank entries by asymmetric distance (exact query
//! subvector against quantized entries). An optional re-rank pass reorders
//! the best `rerank` candidates by the exact embedding metric.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::{DistributionEmbedding, EmbeddingMetric};
use crate::encode::ConfigEntry;
use crate::rng;

pub const PQ_MAGIC: [u8; 4] = *b"CEPQ";
pub const PQ_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PqParams {
    pub m: usize,
    pub ksub: usize,
    pub iters: usize,
    pub seed: u64,
    /// Candidates re-ranked by the exact metric; 0 ranks by PQ distance only.
    pub rerank: usize,
}

impl Default for PqParams {
    fn default() -> Self {
        Self {
            m: 16,
            ksub: 256,
            iters: 25,
            seed: 0x5eed,
            rerank: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Pq,
    /// Too few entries to train codebooks; queries scan with the exact metric.
    Exhaustive,
}

#[derive(Debug, Error, PartialEq)]
pub enum PqError {
    #[error("m = {m} must be even and divide the vector dimension {dim}")]
    Dimension { dim: usize, m: usize },
    #[error("ksub must be in 1..=256, got {0}")]
    Ksub(usize),
    #[error("entries have mixed embedding dimensions")]
    MixedDimensions,
    #[error("sidecar: {0}")]
    Format(String),
    #[error("index covers {index} entries but the config set has {set}")]
    SetMismatch { index: usize, set: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqIndex {
    pub mode: IndexMode,
    pub m: usize,
    pub ksub: usize,
    pub dsub: usize,
    pub rerank: usize,
    pub metric: EmbeddingMetric,
    /// `m * ksub * dsub` centroid coordinates.
    centroids: Vec<f32>,
    /// `n * m` codes, entry-major.
    codes: Vec<u8>,
    n: usize,
}

fn whiten(e: &DistributionEmbedding, w: &[f64]) -> Vec<f64> {
    e.base.iter().chain(&e.shifted).zip(w).map(|(x, s)| x * s).collect()
}

fn sq(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &c)| (x - f64::from(c)) * (x - f64::from(c))).sum()
}

/// Seeded k-means++ plus Lloyd iterations on one subspace. Returns `k`
/// centroids rounded to `f32`.
fn train_codebook(data: &[Vec<f64>], k: usize, iters: usize, seed: u64, sub: usize) -> Vec<Vec<f32>> {
    let mut rng = rng::stream(seed, &[0x70, sub as u64]);
    let d = data[0].len();
    let mut cents: Vec<Vec<f64>> = vec![data[rng.random_range(0..data.len())].clone()];
    let dist2 = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut near: Vec<f64> = data.iter().map(|x| dist2(x, &cents[0])).collect();
    while cents.len() < k {
        let total: f64 = near.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, &w) in near.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        cents.push(data[pick].clone());
        let c = cents.last().expect("just pushed");
        for (n, x) in near.iter_mut().zip(data) {
            *n = n.min(dist2(x, c));
        }
    }
    let mut assign = vec![usize::MAX; data.len()];
    for _ in 0..iters {
        let mut changed = false;
        for (a, x) in assign.iter_mut().zip(data) {
            let best = (0..k)
                .min_by(|&i, &j| dist2(x, &cents[i]).total_cmp(&dist2(x, &cents[j])).then(i.cmp(&j)))
                .expect("k >= 1");
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&a, x) in assign.iter().zip(data) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                cents[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    cents.into_iter().map(|c| c.into_iter().map(|v| v as f32).collect()).collect()
}

impl PqIndex {
    /// Trains codebooks on `entries` and encodes all of them. Fewer entries
    /// than `ksub` gives an exhaustive-scan index.
    pub fn build(entries: &[ConfigEntry], params: &PqParams) -> Result<Self, PqError> {
        if params.ksub == 0 || params.ksub > 256 {
            return Err(PqError::Ksub(params.ksub));
        }
        let half = entries.first().map_or(0, |e| e.embedding.dim());
        if entries.iter().any(|e| e.embedding.dim() != half || e.embedding.shifted.len() != half) {
            return Err(PqError::MixedDimensions);
        }
        let dim = 2 * half;
        if params.m == 0 || !params.m.is_multiple_of(2) || !dim.is_multiple_of(params.m) {
            return Err(PqError::Dimension { dim, m: params.m });
        }
        let metric = EmbeddingMetric::fit(entries.iter().map(|e| &e.embedding), half);
        let dsub = dim / params.m;
        let mut index = Self {
            mode: IndexMode::Exhaustive,
            m: params.m,
            ksub: params.ksub,
            dsub,
            rerank: params.rerank,
            metric,
            centroids: Vec::new(),
            codes: Vec::new(),
            n: entries.len(),
        };
        if entries.len() < params.ksub {
            log::warn!("{} entries < ksub {}: exhaustive scan", entries.len(), params.ksub);
            return Ok(index);
        }
        let w = index.metric.whitening();
        let vecs: Vec<Vec<f64>> = entries.iter().map(|e| whiten(&e.embedding, &w)).collect();
        let mut centroids = Vec::with_capacity(params.m * params.ksub * dsub);
        for s in 0..params.m {
            let sub: Vec<Vec<f64>> = vecs.iter().map(|v| v[s * dsub..(s + 1) * dsub].to_vec()).collect();
            for c in train_codebook(&sub, params.ksub, params.iters, params.seed, s) {
                centroids.extend(c);
            }
        }
        index.centroids = centroids;
        index.mode = IndexMode::Pq;
        index.codes = vecs.iter().flat_map(|v| index.encode(v)).collect();
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn centroid(&self, s: usize, c: usize) -> &[f32] {
        let i = (s * self.ksub + c) * self.dsub;
        &self.centroids[i..i + self.dsub]
    }

    fn encode(&self, v: &[f64]) -> Vec<u8> {
        (0..self.m)
            .map(|s| {
                let x = &v[s * self.dsub..(s + 1) * self.dsub];
                (0..self.ksub)
                    .min_by(|&a, &b| sq(x, self.centroid(s, a)).total_cmp(&sq(x, self.centroid(s, b))).then(a.cmp(&b)))
                    .expect("ksub >= 1") as u8
            })
            .collect()
    }

    /// Asymmetric distance from `query` to every indexed entry, combined per
    /// half the way [`EmbeddingMetric::distance`] combines exact distances.
    pub fn adc_distances(&self, query: &DistributionEmbedding) -> Vec<f64> {
        assert_eq!(self.mode, IndexMode::Pq, "no codebooks in exhaustive mode");
        let q = whiten(query, &self.metric.whitening());
        let table: Vec<f64> = (0..self.m)
            .flat_map(|s| {
                let x = &q[s * self.dsub..(s + 1) * self.dsub];
                (0..self.ksub).map(move |c| (s, c, x))
            })
            .map(|(s, c, x)| sq(x, self.centroid(s, c)))
            .collect();
        // subspaces never straddle the base/shifted boundary (m is even)
        let half = self.m / 2;
        self.codes
            .chunks_exact(self.m)
            .map(|code| {
                let part = |r: std::ops::Range<usize>| -> f64 { r.map(|s| table[s * self.ksub + usize::from(code[s])]).sum() };
                0.5 * (part(0..half).sqrt() + part(half..self.m).sqrt())
            })
            .collect()
    }

    /// Indices into `entries` of the `top_n` nearest entries, nearest first;
    /// ties go to the lower entry id.
    pub fn query(
        &self,
        entries: &[ConfigEntry],
        query: &DistributionEmbedding,
        top_n: usize,
    ) -> Result<Vec<usize>, PqError> {
        if entries.len() != self.n {
            return Err(PqError::SetMismatch {
                index: self.n,
                set: entries.len(),
            });
        }
        let exact = |i: usize| self.metric.distance(query, &entries[i].embedding);
        let rank = |mut idx: Vec<(f64, usize)>, n: usize| -> Vec<usize> {
            idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(entries[a.1].id.cmp(&entries[b.1].id)));
            idx.into_iter().take(n).map(|x| x.1).collect()
        };
        if self.mode == IndexMode::Exhaustive {
            return Ok(rank((0..self.n).map(|i| (exact(i), i)).collect(), top_n));
        }
        let adc = self.adc_distances(query);
        let by_adc = rank(adc.iter().copied().zip(0..).collect(), top_n.max(self.rerank));
        if self.rerank == 0 {
            return Ok(by_adc);
        }
        Ok(rank(by_adc.into_iter().map(|i| (exact(i), i)).collect(), top_n))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&PQ_MAGIC);
        b.push(PQ_VERSION);
        b.push(match self.mode {
            IndexMode::Pq => 0,
            IndexMode::Exhaustive => 1,
        });
        let half = self.metric.inv_var_base.len();
        for v in [self.m, self.ksub, self.dsub, self.n, half, self.rerank] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.metric.inv_var_base.iter().chain(&self.metric.inv_var_shifted) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.centroids {
            b.extend_from_slice(&c.to_le_bytes());
        }
        b.extend_from_slice(&self.codes);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqError> {
        let bad = |m: &str| PqError::Format(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], PqError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != PQ_MAGIC {
            return Err(bad("bad magic"));
        }
        let head = take(2)?;
        if head[0] != PQ_VERSION {
            return Err(bad("unsupported version"));
        }
        let mode = match head[1] {
            0 => IndexMode::Pq,
            1 => IndexMode::Exhaustive,
            _ => return Err(bad("bad mode")),
        };
        let mut u = [0usize; 6];
        for v in &mut u {
            *v = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        }
        let [m, ksub, dsub, n, half, rerank] = u;
        if m == 0 || ksub == 0 || ksub > 256 || m * dsub != 2 * half {
            return Err(bad("inconsistent dimensions"));
        }
        let mut f64s = |count: usize| -> Result<Vec<f64>, PqError> {
            let raw = take(count.checked_mul(8).ok_or_else(|| bad("overflow"))?)?;
            Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let base = f64s(half)?;
        let shifted = f64s(half)?;
        let (n_cent, n_codes) = match mode {
            IndexMode::Pq => (m * ksub * dsub, n * m),
            IndexMode::Exhaustive => (0, 0),
        };
        let raw = take(n_cent * 4)?;
        let centroids = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let codes = take(n_codes)?.to_vec();
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        if codes.iter().any(|&c| usize::from(c) >= ksub) {
            return Err(bad("code out of range"));
        }
        Ok(Self {
            mode,
            m,
            ksub,
            dsub,
            rerank,
            metric: EmbeddingMetric {
                inv_var_base: base,
                inv_var_shifted: shifted,
            },
            centroids,
            codes,
            n,
        })
    }
}
