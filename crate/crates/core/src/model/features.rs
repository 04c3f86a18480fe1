//! Multi-scale dense feature maps and the seeded random-projection extractor
//! that stands in for a convolutional backbone.
//!
//! A layer with stride `s` has one vector per grid cell `(u, v)`, describing
//! the pixel patch centred on `(u*s, v*s)`. The patch is `4*b` pixels wide with
//! `b = max(1, s/2)`, average-pooled into 4x4 blocks of RGB means (48 values)
//! and projected to `channels` dimensions by a matrix fixed per `(seed, layer)`.
//! Pixels outside the frame read as zero, so only interior cells are exactly
//! shift-equivariant.

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::frame::Frame;
use crate::rng;
use crate::scalar::Real;

const POOL: usize = 4;
const POOLED_LEN: usize = POOL * POOL * 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("strides must be non-empty, >= 1 and strictly increasing: {0:?}")]
    BadStrides(Vec<u32>),
    #[error("channel count must be >= 1")]
    NoChannels,
    #[error("layer data has {got} values, expected {expected}")]
    DataSize { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer<T> {
    pub stride: u32,
    pub channels: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureLayer<T> {
    pub fn new(
        stride: u32,
        channels: usize,
        grid_w: usize,
        grid_h: usize,
        data: Vec<T>,
    ) -> Result<Self, FeatureError> {
        if channels == 0 {
            return Err(FeatureError::NoChannels);
        }
        let expected = grid_w * grid_h * channels;
        if data.len() != expected {
            return Err(FeatureError::DataSize {
                got: data.len(),
                expected,
            });
        }
        Ok(Self {
            stride,
            channels,
            grid_w,
            grid_h,
            data,
        })
    }

    pub fn zeros(stride: u32, channels: usize, grid_w: usize, grid_h: usize) -> Self {
        Self {
            stride,
            channels,
            grid_w,
            grid_h,
            data: vec![T::zero(); grid_w * grid_h * channels],
        }
    }

    #[inline]
    pub fn cell(&self, u: usize, v: usize) -> &[T] {
        let i = (v * self.grid_w + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, u: usize, v: usize) -> &mut [T] {
        let i = (v * self.grid_w + u) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Grid cell whose centre is nearest to pixel `(x, y)`, clamped to the grid.
    pub fn cell_of(&self, x: T, y: T) -> (usize, usize) {
        let s = T::lit(self.stride as f64);
        let clamp = |p: T, n: usize| -> usize {
            let c = (p / s).round();
            if c <= T::zero() {
                0
            } else {
                c.to_usize().unwrap_or(usize::MAX).min(n - 1)
            }
        };
        (clamp(x, self.grid_w), clamp(y, self.grid_h))
    }

    /// Pixel position represented by cell `(u, v)`.
    pub fn cell_center(&self, u: usize, v: usize) -> (T, T) {
        let s = self.stride as f64;
        (T::lit(u as f64 * s), T::lit(v as f64 * s))
    }

    /// Per-channel variance over all cells.
    pub fn channel_variance(&self) -> Vec<T> {
        let n = T::from_usize_lossy(self.grid_w * self.grid_h);
        let mut mean = vec![T::zero(); self.channels];
        let mut sq = vec![T::zero(); self.channels];
        for cell in self.data.chunks_exact(self.channels) {
            for (c, &x) in cell.iter().enumerate() {
                mean[c] = mean[c] + x;
                sq[c] = sq[c] + x * x;
            }
        }
        mean.iter()
            .zip(&sq)
            .map(|(&m, &s)| {
                let m = m / n;
                (s / n - m * m).max(T::zero())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub frame_id: u64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub layers: Vec<FeatureLayer<T>>,
}

impl<T: Real> FeatureMap<T> {
    /// Empty layers laid out for a frame of the given size.
    pub fn zeros(
        frame_id: u64,
        frame_width: u32,
        frame_height: u32,
        strides: &[u32],
        channels: usize,
    ) -> Result<Self, FeatureError> {
        check_strides(strides)?;
        if channels == 0 {
            return Err(FeatureError::NoChannels);
        }
        let layers = strides
            .iter()
            .map(|&s| {
                let (gw, gh) = grid_dims(frame_width, frame_height, s);
                FeatureLayer::zeros(s, channels, gw, gh)
            })
            .collect();
        Ok(Self {
            frame_id,
            frame_width,
            frame_height,
            layers,
        })
    }

    pub fn strides(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.stride).collect()
    }
}

fn check_strides(strides: &[u32]) -> Result<(), FeatureError> {
    let ok = !strides.is_empty()
        && strides[0] >= 1
        && strides.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(FeatureError::BadStrides(strides.to_vec()))
    }
}

pub fn grid_dims(width: u32, height: u32, stride: u32) -> (usize, usize) {
    (
        width.div_ceil(stride) as usize,
        height.div_ceil(stride) as usize,
    )
}

/// Summed-area table over one color channel with a zero border.
struct Integral {
    w: usize,
    sums: Vec<u64>,
}

impl Integral {
    fn new(frame: &Frame, channel: usize) -> Self {
        let (w, h) = (frame.width() as usize, frame.height() as usize);
        let px = frame.pixels();
        let mut sums = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += px[(y * w + x) * 3 + channel] as u64;
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Sum over `[x0, x1) x [y0, y1)` clipped to the frame.
    fn rect(&self, x0: i64, y0: i64, x1: i64, y1: i64, h: usize) -> u64 {
        let cx = |x: i64| x.clamp(0, self.w as i64) as usize;
        let cy = |y: i64| y.clamp(0, h as i64) as usize;
        let (x0, x1, y0, y1) = (cx(x0), cx(x1), cy(y0), cy(y1));
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let at = |x: usize, y: usize| self.sums[y * (self.w + 1) + x];
        at(x1, y1) + at(x0, y0) - at(x0, y1) - at(x1, y0)
    }
}

/// Seeded projection matrix, `channels x 48`, row-major.
fn projection<T: Real>(seed: u64, layer: usize, channels: usize) -> Vec<T> {
    let mut rng = rng::stream(seed, &[0xfea7, layer as u64]);
    let scale = 1.0 / (POOLED_LEN as f64).sqrt();
    (0..channels * POOLED_LEN)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z * scale)
        })
        .collect()
}

/// Deterministic random-projection features for `frame`.
pub fn synthetic_extract<T: Real>(
    frame: &Frame,
    strides: &[u32],
    channels: usize,
    seed: u64,
) -> Result<FeatureMap<T>, FeatureError> {
    let mut map = FeatureMap::zeros(frame.id, frame.width(), frame.height(), strides, channels)?;
    let h = frame.height() as usize;
    let integrals = [
        Integral::new(frame, 0),
        Integral::new(frame, 1),
        Integral::new(frame, 2),
    ];
    let mut pooled = [T::zero(); POOLED_LEN];
    for (li, layer) in map.layers.iter_mut().enumerate() {
        let proj = projection::<T>(seed, li, channels);
        let block = (layer.stride / 2).max(1) as i64;
        let norm = T::lit(1.0 / (255.0 * (block * block) as f64));
        let stride = layer.stride as i64;
        for v in 0..layer.grid_h {
            for u in 0..layer.grid_w {
                let x_start = u as i64 * stride - 2 * block;
                let y_start = v as i64 * stride - 2 * block;
                let mut k = 0;
                for by in 0..POOL as i64 {
                    for bx in 0..POOL as i64 {
                        let x0 = x_start + bx * block;
                        let y0 = y_start + by * block;
                        for ig in &integrals {
                            let s = ig.rect(x0, y0, x0 + block, y0 + block, h);
                            pooled[k] = T::lit(s as f64) * norm;
                            k += 1;
                        }
                    }
                }
                let out = layer.cell_mut(u, v);
                for (c, o) in out.iter_mut().enumerate() {
                    let row = &proj[c * POOLED_LEN..(c + 1) * POOLED_LEN];
                    *o = row.iter().zip(&pooled).map(|(&a, &b)| a * b).sum();
                }
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(id: u64, w: u32, h: u32, shift: u32) -> Frame {
        let mut f = Frame::filled(id, w, h, [0; 3]);
        for y in 0..h {
            for x in 0..w {
                // content is a function of (x - shift), so it moves right by `shift`
                let sx = x as i64 - shift as i64;
                let v = ((sx * 37 + y as i64 * 91).rem_euclid(251)) as u8;
                f.set_pixel(x, y, [v, v.wrapping_mul(3), 255 - v]);
            }
        }
        f
    }

    #[test]
    fn grid_follows_ceil() {
        let f = Frame::filled(0, 33, 17, [1, 2, 3]);
        let m: FeatureMap<f64> = synthetic_extract(&f, &[4, 8, 16], 8, 1).unwrap();
        let dims: Vec<_> = m.layers.iter().map(|l| (l.grid_w, l.grid_h)).collect();
        assert_eq!(dims, vec![(9, 5), (5, 3), (3, 2)]);
    }

    #[test]
    fn rejects_bad_strides() {
        let f = Frame::filled(0, 8, 8, [0; 3]);
        assert!(synthetic_extract::<f64>(&f, &[8, 4], 4, 0).is_err());
        assert!(synthetic_extract::<f64>(&f, &[], 4, 0).is_err());
        assert!(synthetic_extract::<f64>(&f, &[4], 0, 0).is_err());
    }

    #[test]
    fn identical_frames_bitwise_equal() {
        let a = textured(3, 40, 30, 0);
        let m1: FeatureMap<f32> = synthetic_extract(&a, &[2, 4], 6, 9).unwrap();
        let m2: FeatureMap<f32> = synthetic_extract(&a, &[2, 4], 6, 9).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn uniform_frame_interior_cells_equal() {
        let f = Frame::filled(0, 64, 48, [90, 120, 30]);
        let m: FeatureMap<f64> = synthetic_extract(&f, &[4], 8, 5).unwrap();
        let l = &m.layers[0];
        let reference = l.cell(4, 4).to_vec();
        for v in 2..l.grid_h - 2 {
            for u in 2..l.grid_w - 2 {
                assert_eq!(l.cell(u, v), reference.as_slice());
            }
        }
    }

    #[test]
    fn shift_by_one_stride_translates_grid() {
        for stride in [2u32, 4, 8] {
            let a = textured(0, 96, 64, 0);
            let b = textured(1, 96, 64, stride);
            let ma: FeatureMap<f64> = synthetic_extract(&a, &[stride], 5, 11).unwrap();
            let mb: FeatureMap<f64> = synthetic_extract(&b, &[stride], 5, 11).unwrap();
            let (la, lb) = (&ma.layers[0], &mb.layers[0]);
            // patch half-width is 2*max(1, s/2) <= s + 1 pixels, so skip 2 border cells
            for v in 2..la.grid_h - 2 {
                for u in 2..la.grid_w - 3 {
                    assert_eq!(lb.cell(u + 1, v), la.cell(u, v), "stride {stride} cell {u},{v}");
                }
            }
        }
    }

    #[test]
    fn cell_lookup_rounds_to_nearest_center() {
        let l = FeatureLayer::<f64>::zeros(8, 1, 10, 10);
        assert_eq!(l.cell_of(3.9, 4.0), (0, 1));
        assert_eq!(l.cell_of(-5.0, 1000.0), (0, 9));
        assert_eq!(l.cell_center(2, 3), (16.0, 24.0));
    }
}
