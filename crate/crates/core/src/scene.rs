//! Synthetic moving-rectangle scenes: textured targets on a textured
//! background, integer positions and velocities, ground truth alongside.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, Frame, GroundTruth, GtObject};
use crate::netsim::BandwidthTrace;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Targets leave the frame and stop being annotated.
    #[default]
    Exit,
    /// A target that would cross an edge reverses that velocity component.
    Bounce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frames: u32,
    pub targets: u32,
    /// Per-axis speed bounds in px/frame; the faster axis is at least `speed_min`.
    pub speed_min: u32,
    pub speed_max: u32,
    /// Side length bounds in px.
    pub size_min: u32,
    pub size_max: u32,
    pub classes: u32,
    pub fps: u32,
    pub boundary: Boundary,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frames: 60,
            targets: 5,
            speed_min: 1,
            speed_max: 3,
            size_min: 20,
            size_max: 30,
            classes: 3,
            fps: 30,
            boundary: Boundary::Bounce,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene needs at least one frame")]
    NoFrames,
    #[error("invalid scene spec: {0}")]
    Invalid(String),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frames == 0 {
            return Err(SceneError::NoFrames);
        }
        let bad = |m: &str| Err(SceneError::Invalid(m.into()));
        if self.width == 0 || self.height == 0 || self.width > u32::from(u16::MAX) || self.height > u32::from(u16::MAX) {
            return bad("frame size must be in 1..=65535");
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return bad("need 0 < size_min <= size_max");
        }
        if self.size_max >= self.width || self.size_max >= self.height {
            return bad("targets must be smaller than the frame");
        }
        if self.speed_min > self.speed_max {
            return bad("need speed_min <= speed_max");
        }
        if self.classes == 0 || self.fps == 0 {
            return bad("classes and fps must be >= 1");
        }
        Ok(())
    }
}

/// Planted target: top-left corner, velocity, size, class and texture.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub x: i64,
    pub y: i64,
    pub vx: i64,
    pub vy: i64,
    pub w: u32,
    pub h: u32,
    pub class_id: u32,
    /// `w * h` RGB texels, fixed for the whole run.
    texture: Vec<[u8; 3]>,
}

impl Target {
    pub fn bbox(&self) -> BoundingBox<f64> {
        BoundingBox::new(
            self.x as f64,
            self.y as f64,
            (self.x + i64::from(self.w)) as f64,
            (self.y + i64::from(self.h)) as f64,
        )
        .expect("positive size")
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub frames: Vec<Frame>,
    pub truth: Vec<GroundTruth>,
    /// Target state at frame 0.
    pub initial: Vec<Target>,
}

/// Bilinear value noise: random lattice values every `cell` px, smoothly
/// interpolated in between.
fn value_noise(r: &mut impl Rng, w: u32, h: u32, cell: u32, lo: f64, hi: f64) -> Vec<f64> {
    let (gw, gh) = ((w / cell + 2) as usize, (h / cell + 2) as usize);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| r.random_range(lo..=hi)).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let (gy, fy) = ((y / cell) as usize, f64::from(y % cell) / f64::from(cell));
        for x in 0..w {
            let (gx, fx) = ((x / cell) as usize, f64::from(x % cell) / f64::from(cell));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(gx, gy) * (1.0 - fx) + at(gx + 1, gy) * fx;
            let bot = at(gx, gy + 1) * (1.0 - fx) + at(gx + 1, gy + 1) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

// Fine ground detail, like gravel or foliage seen from above. Without it the
// ground is so smooth that low background quality saves almost nothing.
const GRAIN_CELL: u32 = 2;
const GRAIN_AMPLITUDE: f64 = 20.0;

fn background(spec: &SceneSpec) -> Vec<u8> {
    let mut r = rng::stream(spec.seed, &[0xb6]);
    let g = value_noise(&mut r, spec.width, spec.height, 16, 60.0, 140.0);
    let grain = value_noise(&mut r, spec.width, spec.height, GRAIN_CELL, -GRAIN_AMPLITUDE, GRAIN_AMPLITUDE);
    g.iter()
        .zip(&grain)
        .flat_map(|(&v, &d)| {
            let v = (v + d).round().clamp(0.0, 255.0) as u8;
            [v, v, v.saturating_add(8)]
        })
        .collect()
}

fn plant(spec: &SceneSpec, i: u32) -> Target {
    let mut r = rng::stream(spec.seed, &[0x7a, u64::from(i)]);
    let w = r.random_range(spec.size_min..=spec.size_max);
    let h = r.random_range(spec.size_min..=spec.size_max);
    let x = r.random_range(0..=i64::from(spec.width - w));
    let y = r.random_range(0..=i64::from(spec.height - h));
    let (smin, smax) = (i64::from(spec.speed_min), i64::from(spec.speed_max));
    let (vx, vy) = loop {
        let vx = r.random_range(-smax..=smax);
        let vy = r.random_range(-smax..=smax);
        if vx.abs().max(vy.abs()) >= smin {
            break (vx, vy);
        }
    };
    // Smooth saturated colour fields stand out against the grey ground and
    // change gradually under sub-cell shifts, like real backbone features.
    let channels: Vec<Vec<f64>> = (0..3).map(|_| value_noise(&mut r, w, h, 8, 0.0, 255.0)).collect();
    let texture = (0..(w * h) as usize)
        .map(|i| [0, 1, 2].map(|c| channels[c][i].round() as u8))
        .collect();
    Target {
        x,
        y,
        vx,
        vy,
        w,
        h,
        class_id: i % spec.classes,
        texture,
    }
}

fn step(t: &mut Target, spec: &SceneSpec) {
    if spec.boundary == Boundary::Bounce {
        let (mx, my) = (i64::from(spec.width - t.w), i64::from(spec.height - t.h));
        if !(0..=mx).contains(&(t.x + t.vx)) {
            t.vx = -t.vx;
        }
        if !(0..=my).contains(&(t.y + t.vy)) {
            t.vy = -t.vy;
        }
    }
    t.x += t.vx;
    t.y += t.vy;
}

fn render(spec: &SceneSpec, id: u64, bg: &[u8], targets: &[Target]) -> Frame {
    let mut px = bg.to_vec();
    let (fw, fh) = (i64::from(spec.width), i64::from(spec.height));
    for t in targets {
        for ty in 0..i64::from(t.h) {
            let y = t.y + ty;
            if !(0..fh).contains(&y) {
                continue;
            }
            for tx in 0..i64::from(t.w) {
                let x = t.x + tx;
                if !(0..fw).contains(&x) {
                    continue;
                }
                let o = ((y * fw + x) * 3) as usize;
                px[o..o + 3].copy_from_slice(&t.texture[(ty * i64::from(t.w) + tx) as usize]);
            }
        }
    }
    Frame::new(id, Ratio::new(id as i64, i64::from(spec.fps)), spec.width, spec.height, px).expect("sized buffer")
}

/// Renders every frame. Annotations carry the in-frame part of each visible
/// target, in planting order.
pub fn generate(spec: &SceneSpec) -> Result<Scene, SceneError> {
    spec.validate()?;
    let bg = background(spec);
    let mut targets: Vec<Target> = (0..spec.targets).map(|i| plant(spec, i)).collect();
    let initial = targets.clone();
    let (fw, fh) = (f64::from(spec.width), f64::from(spec.height));
    let mut frames = Vec::with_capacity(spec.frames as usize);
    let mut truth = Vec::with_capacity(spec.frames as usize);
    for id in 0..u64::from(spec.frames) {
        if id > 0 {
            for t in &mut targets {
                step(t, spec);
            }
        }
        frames.push(render(spec, id, &bg, &targets));
        let objects = targets
            .iter()
            .filter_map(|t| {
                t.bbox().clamp_to(fw, fh).map(|bbox| GtObject {
                    bbox,
                    class_id: t.class_id,
                })
            })
            .collect();
        truth.push(GroundTruth { frame_id: id, objects });
    }
    Ok(Scene {
        spec: spec.clone(),
        frames,
        truth,
        initial,
    })
}

/// Default link for generated scenes: 1 MB/s with a one-second dip to
/// 250 kB/s every ten seconds, covering `horizon_s`.
pub fn default_trace(horizon_s: f64) -> BandwidthTrace {
    let mut rows = Vec::new();
    let mut t = 0.0;
    while t < horizon_s {
        rows.push((t, 1_000_000.0));
        rows.push((t + 9.0, 250_000.0));
        t += 10.0;
    }
    rows.push((t.max(horizon_s + 1.0), 1_000_000.0));
    BandwidthTrace::new(rows).expect("increasing rows")
}
