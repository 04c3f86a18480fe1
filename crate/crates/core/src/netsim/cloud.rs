//! Scripted cloud detector whose recall and confidence follow the fidelity
//! of the decoded pixels it is given.

use serde::{Deserialize, Serialize};

use crate::model::{scripted_detect_with, BoundingBox, Detection, Frame, GroundTruth, ModelError, ScriptedModelConfig, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudModel {
    pub config: ScriptedModelConfig,
    /// PSNR (dB) at which the logistic is centred.
    pub psnr_mid: f64,
    /// Logistic width, dB.
    pub psnr_scale: f64,
    /// PSNR at and above which fidelity is exactly 1.
    pub psnr_full: f64,
}

impl Default for CloudModel {
    fn default() -> Self {
        Self {
            config: ScriptedModelConfig {
                box_jitter_sigma: 0.5,
                confidence_noise_sigma: 0.05,
                latency_s: 0.1,
                rng_seed: 0xc10d,
                ..Default::default()
            },
            psnr_mid: 27.0,
            psnr_scale: 2.0,
            psnr_full: 38.0,
        }
    }
}

/// PSNR of the pixels under `bbox`; infinite when they are identical.
pub fn box_psnr(original: &Frame, decoded: &Frame, bbox: &BoundingBox<f64>) -> f64 {
    let (w, h) = original.dims();
    let x0 = bbox.x_min().floor().clamp(0.0, w as f64) as u32;
    let y0 = bbox.y_min().floor().clamp(0.0, h as f64) as u32;
    let x1 = bbox.x_max().ceil().clamp(0.0, w as f64) as u32;
    let y1 = bbox.y_max().ceil().clamp(0.0, h as f64) as u32;
    if x1 <= x0 || y1 <= y0 {
        return f64::INFINITY;
    }
    let (a, b) = (original.crop(x0, y0, x1 - x0, y1 - y0), decoded.crop(x0, y0, x1 - x0, y1 - y0));
    let se: u64 = a
        .iter()
        .zip(&b)
        .map(|(&p, &q)| {
            let d = u64::from(p.abs_diff(q));
            d * d
        })
        .sum();
    if se == 0 {
        return f64::INFINITY;
    }
    let mse = se as f64 / a.len() as f64;
    10.0 * (255.0f64 * 255.0 / mse).log10()
}

impl CloudModel {
    /// Logistic in PSNR, rescaled to reach exactly 1 at `psnr_full`.
    pub fn fidelity(&self, psnr: f64) -> f64 {
        if psnr >= self.psnr_full {
            return 1.0;
        }
        let s = |p: f64| 1.0 / (1.0 + (-(p - self.psnr_mid) / self.psnr_scale).exp());
        (s(psnr) / s(self.psnr_full)).clamp(0.0, 1.0)
    }

    /// Detections on a decoded upload; fidelity is measured per ground-truth
    /// box against the original frame.
    pub fn infer(&self, decoded: &Frame, original: &Frame, gt: &GroundTruth) -> Result<Vec<Detection<f64>>, ModelError> {
        scripted_detect_with(&self.config, gt, decoded, Source::Cloud, |_, o| {
            self.fidelity(box_psnr(original, decoded, &o.bbox))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fidelity_shape() {
        let m = CloudModel::default();
        assert_eq!(m.fidelity(f64::INFINITY), 1.0);
        assert_eq!(m.fidelity(40.0), 1.0);
        let mut last = 1.0;
        for p in (10..38).rev() {
            let f = m.fidelity(p as f64);
            assert!(f < last && f > 0.0);
            last = f;
        }
    }

    #[test]
    fn identical_pixels_infinite_psnr() {
        let f = Frame::filled(0, 8, 8, [7; 3]);
        assert!(box_psnr(&f, &f, &BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap()).is_infinite());
    }
}
