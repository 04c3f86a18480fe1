//! Pluggable model interface and a scripted stand-in detector.
//!
//! The scripted detector reads ground truth and degrades it: each object is
//! dropped with a size-dependent miss rate, survivors are jittered, and the
//! confidence is `1 - |noise|`. Every random draw is keyed by
//! `(seed, frame id, object index)`, so the full-frame and proposal paths see
//! the same outcome for the same object.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::detection::{Detection, GroundTruth, GtObject, Source};
use super::features::{synthetic_extract, FeatureMap};
use super::frame::Frame;
use super::geometry::{iou, BoundingBox};
use crate::rng;
use crate::scalar::Real;

/// A detector the pipeline can drive: backbone, proposal head and full path.
pub trait ModelInterface<T: Real> {
    fn extract(&self, frame: &Frame) -> FeatureMap<T>;

    /// Refines `proposals` against features; returns at most one detection per proposal.
    fn regress(&self, proposals: &[BoundingBox<T>], features: &FeatureMap<T>) -> Vec<Detection<T>>;

    fn full_infer(&self, frame: &Frame) -> Vec<Detection<T>>;
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("ground truth is for frame {gt} but frame is {frame}")]
    FrameMismatch { gt: u64, frame: u64 },
    #[error("invalid scripted model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedModelConfig {
    pub miss_rate_small: f64,
    pub miss_rate_large: f64,
    /// Objects with area below this (px^2) use `miss_rate_small`.
    pub small_area_threshold: f64,
    pub box_jitter_sigma: f64,
    pub confidence_noise_sigma: f64,
    /// Constant inference latency in seconds.
    pub latency_s: f64,
    pub rng_seed: u64,
}

impl Default for ScriptedModelConfig {
    fn default() -> Self {
        Self {
            miss_rate_small: 0.0,
            miss_rate_large: 0.0,
            small_area_threshold: 32.0 * 32.0,
            box_jitter_sigma: 0.0,
            confidence_noise_sigma: 0.0,
            latency_s: 0.0,
            rng_seed: 0,
        }
    }
}

impl ScriptedModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.miss_rate_small) || !prob(self.miss_rate_large) {
            return Err(ModelError::Config("miss rates must be in [0, 1]".into()));
        }
        if !(self.box_jitter_sigma >= 0.0) || !(self.confidence_noise_sigma >= 0.0) {
            return Err(ModelError::Config("sigmas must be >= 0".into()));
        }
        if !(self.latency_s >= 0.0) {
            return Err(ModelError::Config("latency must be >= 0".into()));
        }
        Ok(())
    }

    fn miss_rate(&self, obj: &GtObject) -> f64 {
        if obj.bbox.area() < self.small_area_threshold {
            self.miss_rate_small
        } else {
            self.miss_rate_large
        }
    }
}

/// Outcome of the per-object draw.
struct ObjectDraw {
    u_keep: f64,
    jitter: [f64; 4],
    conf_noise: f64,
}

fn draw(cfg: &ScriptedModelConfig, frame_id: u64, index: usize) -> ObjectDraw {
    let mut r = rng::stream(cfg.rng_seed, &[0x5c12, frame_id, index as u64]);
    let u_keep: f64 = r.random();
    let mut jitter = [0.0; 4];
    if cfg.box_jitter_sigma > 0.0 {
        let n = Normal::new(0.0, cfg.box_jitter_sigma).expect("sigma checked");
        for j in &mut jitter {
            *j = n.sample(&mut r);
        }
    }
    let conf_noise = if cfg.confidence_noise_sigma > 0.0 {
        Normal::new(0.0, cfg.confidence_noise_sigma)
            .expect("sigma checked")
            .sample(&mut r)
    } else {
        0.0
    };
    ObjectDraw {
        u_keep,
        jitter,
        conf_noise,
    }
}

/// Degraded copy of one ground-truth object, or `None` if it is missed.
/// `fidelity` in `[0, 1]` scales both the keep probability and confidence.
fn detect_object(
    cfg: &ScriptedModelConfig,
    frame: (u64, u32, u32),
    index: usize,
    obj: &GtObject,
    fidelity: f64,
    source: Source,
) -> Option<Detection<f64>> {
    let (frame_id, w, h) = frame;
    let d = draw(cfg, frame_id, index);
    let keep_p = (1.0 - cfg.miss_rate(obj)) * fidelity.clamp(0.0, 1.0);
    if d.u_keep >= keep_p {
        return None;
    }
    let b = &obj.bbox;
    let jittered = BoundingBox::new(
        b.x_min() + d.jitter[0],
        b.y_min() + d.jitter[1],
        b.x_max() + d.jitter[2],
        b.y_max() + d.jitter[3],
    )
    .ok()?
    .clamp_to(w as f64, h as f64)?;
    let conf = (1.0 - d.conf_noise.abs()) * fidelity.clamp(0.0, 1.0);
    Some(Detection::new(jittered, obj.class_id, conf, source))
}

/// Scripted detection of every object in `gt`, with per-object fidelity.
pub fn scripted_detect_with(
    cfg: &ScriptedModelConfig,
    gt: &GroundTruth,
    frame: &Frame,
    source: Source,
    fidelity: impl Fn(usize, &GtObject) -> f64,
) -> Result<Vec<Detection<f64>>, ModelError> {
    if gt.frame_id != frame.id {
        return Err(ModelError::FrameMismatch {
            gt: gt.frame_id,
            frame: frame.id,
        });
    }
    let key = (frame.id, frame.width(), frame.height());
    Ok(gt
        .objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| detect_object(cfg, key, i, o, fidelity(i, o), source))
        .collect())
}

pub fn scripted_detect(
    cfg: &ScriptedModelConfig,
    gt: &GroundTruth,
    frame: &Frame,
) -> Result<Vec<Detection<f64>>, ModelError> {
    scripted_detect_with(cfg, gt, frame, Source::Edge, |_, _| 1.0)
}

/// Scripted detector bound to a ground-truth table, usable as a [`ModelInterface`].
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    pub config: ScriptedModelConfig,
    pub strides: Vec<u32>,
    pub channels: usize,
    pub feature_seed: u64,
    /// Minimum IoU between a proposal and an object for regression to lock on.
    pub regress_min_iou: f64,
    pub source: Source,
    truth: Arc<BTreeMap<u64, GroundTruth>>,
}

impl ScriptedModel {
    pub fn new(
        config: ScriptedModelConfig,
        truth: Arc<BTreeMap<u64, GroundTruth>>,
        strides: Vec<u32>,
        channels: usize,
        feature_seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            config,
            strides,
            channels,
            feature_seed,
            regress_min_iou: 0.1,
            source: Source::Edge,
            truth,
        })
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    fn gt(&self, frame_id: u64) -> GroundTruth {
        self.truth.get(&frame_id).cloned().unwrap_or(GroundTruth {
            frame_id,
            objects: Vec::new(),
        })
    }
}

impl<T: Real> ModelInterface<T> for ScriptedModel {
    fn extract(&self, frame: &Frame) -> FeatureMap<T> {
        synthetic_extract(frame, &self.strides, self.channels, self.feature_seed)
            .expect("strides validated at construction")
    }

    fn regress(&self, proposals: &[BoundingBox<T>], features: &FeatureMap<T>) -> Vec<Detection<T>> {
        let gt = self.gt(features.frame_id);
        let key = (features.frame_id, features.frame_width, features.frame_height);
        let mut claimed = vec![false; gt.objects.len()];
        let mut out = Vec::new();
        for p in proposals {
            let p = p.cast::<f64>();
            let best = gt
                .objects
                .iter()
                .enumerate()
                .filter(|(i, _)| !claimed[*i])
                .map(|(i, o)| (i, iou(&p, &o.bbox)))
                .filter(|&(_, v)| v >= self.regress_min_iou)
                .fold(None::<(usize, f64)>, |acc, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            if let Some((i, _)) = best {
                claimed[i] = true;
                if let Some(d) =
                    detect_object(&self.config, key, i, &gt.objects[i], 1.0, Source::Tracked)
                {
                    out.push(Detection::new(
                        d.bbox().cast(),
                        d.class_id(),
                        T::lit(d.confidence()),
                        Source::Tracked,
                    ));
                }
            }
        }
        out
    }

    fn full_infer(&self, frame: &Frame) -> Vec<Detection<T>> {
        let gt = self.gt(frame.id);
        scripted_detect_with(&self.config, &gt, frame, self.source, |_, _| 1.0)
            .expect("gt keyed by frame id")
            .into_iter()
            .map(|d| Detection::new(d.bbox().cast(), d.class_id(), T::lit(d.confidence()), d.source()))
            .collect()
    }
}
