use serde::{Deserialize, Serialize};

use super::kalman::TrackerParams;
use crate::model::{frame_diff, Frame, FrameError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    None,
    PixelChange,
    CloudStale,
    NoTracks,
    /// Fast inference switched off for an ablation run.
    Disabled,
}

/// Mode plus the trigger that forced a full pass; `reason == None` iff fast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InferenceMode {
    mode: Mode,
    reason: Reason,
}

impl InferenceMode {
    pub const FAST: Self = Self {
        mode: Mode::Fast,
        reason: Reason::None,
    };

    pub fn full(reason: Reason) -> Self {
        assert_ne!(reason, Reason::None, "full mode needs a trigger");
        Self {
            mode: Mode::Full,
            reason,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn reason(&self) -> Reason {
        self.reason
    }

    pub fn is_fast(&self) -> bool {
        self.mode == Mode::Fast
    }
}

/// Picks fast or full inference for `cur`. Checked in order: pixel change
/// against `prev`, cloud staleness, then an empty track set.
pub fn choose_mode<T: Real>(
    prev: Option<&Frame>,
    cur: &Frame,
    live_tracks: usize,
    frames_since_cloud: u32,
    params: &TrackerParams<T>,
) -> Result<InferenceMode, FrameError> {
    if let Some(prev) = prev {
        if frame_diff(prev, cur)? > params.full_infer_pixel_threshold {
            return Ok(InferenceMode::full(Reason::PixelChange));
        }
    }
    if frames_since_cloud > params.cloud_staleness_limit {
        return Ok(InferenceMode::full(Reason::CloudStale));
    }
    if live_tracks == 0 {
        return Ok(InferenceMode::full(Reason::NoTracks));
    }
    Ok(InferenceMode::FAST)
}

/// Per-frame mode trace line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeTrace {
    pub frame: u64,
    pub mode: Mode,
    pub reason: Reason,
    pub proposals: usize,
    pub tracks: usize,
    pub latency_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TrackerParams<f64> {
        TrackerParams {
            full_infer_pixel_threshold: 0.3,
            cloud_staleness_limit: 10,
            ..Default::default()
        }
    }

    #[test]
    fn no_trigger_is_fast() {
        let f = Frame::filled(0, 8, 8, [10; 3]);
        assert_eq!(choose_mode(Some(&f), &f, 3, 0, &params()).unwrap(), InferenceMode::FAST);
    }

    #[test]
    fn pixel_change_triggers_full() {
        let a = Frame::filled(0, 8, 8, [0; 3]);
        let mut b = a.clone();
        for y in 0..4 {
            for x in 0..8 {
                b.set_pixel(x, y, [255; 3]);
            }
        }
        let m = choose_mode(Some(&a), &b, 3, 0, &params()).unwrap();
        assert_eq!(m, InferenceMode::full(Reason::PixelChange));
    }

    #[test]
    fn stale_then_empty() {
        let f = Frame::filled(0, 8, 8, [0; 3]);
        assert_eq!(choose_mode(None, &f, 2, 11, &params()).unwrap().reason(), Reason::CloudStale);
        assert_eq!(choose_mode(None, &f, 0, 0, &params()).unwrap().reason(), Reason::NoTracks);
    }

    #[test]
    #[should_panic]
    fn full_without_reason_panics() {
        InferenceMode::full(Reason::None);
    }

    #[test]
    fn trace_serializes_lowercase() {
        let t = ModeTrace {
            frame: 1,
            mode: Mode::Full,
            reason: Reason::PixelChange,
            proposals: 0,
            tracks: 2,
            latency_s: 0.01,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"mode\":\"full\""));
        assert!(s.contains("\"reason\":\"pixel_change\""));
    }
}
