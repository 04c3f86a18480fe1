//! Tracker-guided inference: the filter's predictions are the only proposals
//! the edge model regresses.

use thiserror::Error;

use super::tracker::{Tracker, UpdateSummary};
use crate::model::{BoundingBox, Detection, FeatureMap, Frame, ModelInterface};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum FastError {
    #[error("no live tracks: run full inference instead")]
    NoTracks,
}

#[derive(Debug, Clone)]
pub struct FastDetect<T> {
    pub proposals: Vec<(u64, BoundingBox<T>)>,
    pub features: FeatureMap<T>,
    pub detections: Vec<Detection<T>>,
    /// Regressed boxes that fell outside the frame and were clamped.
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct FastOutput<T> {
    pub detections: Vec<Detection<T>>,
    pub proposals: usize,
    pub clamped: usize,
    pub features: FeatureMap<T>,
    pub update: UpdateSummary,
}

/// Clamps detections to the frame; returns how many needed it. Boxes that
/// vanish entirely are dropped.
pub fn clamp_detections<T: Real>(dets: Vec<Detection<T>>, width: u32, height: u32) -> (Vec<Detection<T>>, usize) {
    let (w, h) = (T::lit(width as f64), T::lit(height as f64));
    let mut clamped = 0;
    let out = dets
        .into_iter()
        .filter_map(|d| {
            let b = d.bbox();
            let inside = b.x_min() >= T::zero() && b.y_min() >= T::zero() && b.x_max() <= w && b.y_max() <= h;
            if inside {
                return Some(d);
            }
            clamped += 1;
            b.clamp_to(w, h).map(|c| d.with_box(c))
        })
        .collect();
    (out, clamped)
}

/// Predict and regress without touching track state; the caller updates.
pub fn fast_detect<T: Real, M: ModelInterface<T> + ?Sized>(
    frame: &Frame,
    tracker: &mut Tracker<T>,
    model: &M,
) -> Result<FastDetect<T>, FastError> {
    if tracker.is_empty() {
        return Err(FastError::NoTracks);
    }
    let proposals = tracker.predict();
    let features = model.extract(frame);
    let boxes: Vec<BoundingBox<T>> = proposals.iter().map(|(_, b)| *b).collect();
    let raw = model.regress(&boxes, &features);
    debug_assert!(raw.len() <= boxes.len());
    let (detections, clamped) = clamp_detections(raw, frame.width(), frame.height());
    if clamped > 0 {
        log::debug!("frame {}: clamped {clamped} regressed boxes", frame.id);
    }
    Ok(FastDetect {
        proposals,
        features,
        detections,
        clamped,
    })
}

/// Full fast-inference step: predict, extract, regress, associate and update.
pub fn fast_infer<T: Real, M: ModelInterface<T> + ?Sized>(
    frame: &Frame,
    tracker: &mut Tracker<T>,
    model: &M,
) -> Result<FastOutput<T>, FastError> {
    let d = fast_detect(frame, tracker, model)?;
    let update = tracker.update(&d.detections);
    Ok(FastOutput {
        proposals: d.proposals.len(),
        detections: d.detections,
        clamped: d.clamped,
        features: d.features,
        update,
    })
}
