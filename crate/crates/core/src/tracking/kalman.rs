//! Constant-velocity Kalman track over `[cx, cy, s, r, vcx, vcy, vs]`:
//! centre, area, aspect ratio (w/h) and the velocities of the first three.
//! Aspect ratio has no velocity term.

use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat};
use crate::model::{BoundingBox, Detection};
use crate::scalar::Real;

pub const STATE_DIM: usize = 7;
pub const MEAS_DIM: usize = 4;

/// Noise and lifecycle parameters for tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams<T> {
    /// Diagonal of the process noise, multiplied by `sigma^2`.
    pub process_noise: [T; STATE_DIM],
    /// Diagonal of the measurement noise, multiplied by `sigma^2`.
    pub measurement_noise: [T; MEAS_DIM],
    /// `sigma = noise_scale * sqrt(area)`, i.e. proportional to box side.
    pub noise_scale: T,
    /// Extra factor on the velocity variances of a newborn track.
    pub birth_velocity_inflation: T,
    /// Area floor applied after prediction.
    pub min_area: T,
    /// Tracks unmatched for more than this many consecutive frames are dropped.
    pub max_time_since_update: u32,
    pub min_hits: u32,
    /// Greedy IoU association threshold between predictions and detections.
    pub association_iou: T,
    /// `frame_diff` above which the full model runs.
    pub full_infer_pixel_threshold: f64,
    /// Frames without a cloud result after which the full model runs.
    pub cloud_staleness_limit: u32,
}

impl<T: Real> Default for TrackerParams<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            process_noise: [l(1.0), l(1.0), l(1.0), l(1e-2), l(1e-1), l(1e-1), l(1e-4)],
            measurement_noise: [l(1.0), l(1.0), l(10.0), l(1e-2)],
            noise_scale: l(0.05),
            birth_velocity_inflation: l(10.0),
            min_area: l(1e-3),
            max_time_since_update: 3,
            min_hits: 1,
            association_iou: l(0.3),
            full_infer_pixel_threshold: 0.12,
            cloud_staleness_limit: 60,
        }
    }
}

impl<T: Real> TrackerParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        let pos = self.process_noise.iter().chain(&self.measurement_noise).all(|&v| v > T::zero());
        if !pos || !(self.noise_scale > T::zero()) {
            return Err("noise scales must be > 0".into());
        }
        if !(self.full_infer_pixel_threshold > 0.0) || self.cloud_staleness_limit == 0 {
            return Err("fallback thresholds must be > 0".into());
        }
        if !(self.association_iou > T::zero()) || !(self.min_area > T::zero()) {
            return Err("association threshold and area floor must be > 0".into());
        }
        Ok(())
    }

    fn sigma_sq(&self, area: T) -> T {
        self.noise_scale * self.noise_scale * area.max(self.min_area)
    }

    pub fn process_cov(&self, area: T) -> Mat<T, STATE_DIM, STATE_DIM> {
        let s2 = self.sigma_sq(area);
        linalg::diag(&self.process_noise.map(|v| v * s2))
    }

    pub fn measurement_cov(&self, area: T) -> Mat<T, MEAS_DIM, MEAS_DIM> {
        let s2 = self.sigma_sq(area);
        linalg::diag(&self.measurement_noise.map(|v| v * s2))
    }
}

/// State transition: position terms pick up their velocities.
pub fn transition<T: Real>() -> Mat<T, STATE_DIM, STATE_DIM> {
    let mut f = linalg::identity::<T, STATE_DIM>();
    f[0][4] = T::one();
    f[1][5] = T::one();
    f[2][6] = T::one();
    f
}

/// Measurement picks the first four state components.
pub fn observation<T: Real>() -> Mat<T, MEAS_DIM, STATE_DIM> {
    let mut h = linalg::zeros::<T, MEAS_DIM, STATE_DIM>();
    for i in 0..MEAS_DIM {
        h[i][i] = T::one();
    }
    h
}

/// `[cx, cy, s, r]` of a box.
pub fn box_to_measurement<T: Real>(b: &BoundingBox<T>) -> [T; MEAS_DIM] {
    let (cx, cy) = b.center();
    [cx, cy, b.area(), b.width() / b.height()]
}

pub fn state_to_box<T: Real>(state: &[T; STATE_DIM]) -> BoundingBox<T> {
    let s = state[2].max(T::min_positive_value());
    let r = state[3].max(T::min_positive_value());
    let w = (s * r).sqrt();
    let h = s / w;
    BoundingBox::from_center(state[0], state[1], w, h).expect("positive area")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KalmanTrack<T> {
    pub id: u64,
    state: [T; STATE_DIM],
    covariance: Mat<T, STATE_DIM, STATE_DIM>,
    pub age: u32,
    pub hits: u32,
    pub time_since_update: u32,
    pub class_id: u32,
    pub confidence: T,
}

impl<T: Real> KalmanTrack<T> {
    /// New track at `det` with zero velocity.
    pub fn new(id: u64, det: &Detection<T>, params: &TrackerParams<T>) -> Self {
        let z = box_to_measurement(det.bbox());
        let state = [z[0], z[1], z[2], z[3], T::zero(), T::zero(), T::zero()];
        let r = params.measurement_cov(z[2]);
        let mut covariance = linalg::zeros::<T, STATE_DIM, STATE_DIM>();
        for i in 0..MEAS_DIM {
            covariance[i][i] = r[i][i];
        }
        let s2 = params.sigma_sq(z[2]);
        for i in MEAS_DIM..STATE_DIM {
            covariance[i][i] = s2 * params.birth_velocity_inflation;
        }
        Self {
            id,
            state,
            covariance,
            age: 0,
            hits: 1,
            time_since_update: 0,
            class_id: det.class_id(),
            confidence: det.confidence(),
        }
    }

    /// Builds a track from raw parts; used by tests and replay tooling.
    pub fn from_parts(
        id: u64,
        state: [T; STATE_DIM],
        covariance: Mat<T, STATE_DIM, STATE_DIM>,
        class_id: u32,
    ) -> Self {
        Self {
            id,
            state,
            covariance,
            age: 0,
            hits: 1,
            time_since_update: 0,
            class_id,
            confidence: T::one(),
        }
    }

    pub fn state(&self) -> &[T; STATE_DIM] {
        &self.state
    }

    pub fn covariance(&self) -> &Mat<T, STATE_DIM, STATE_DIM> {
        &self.covariance
    }

    pub fn bbox(&self) -> BoundingBox<T> {
        state_to_box(&self.state)
    }

    /// Speed of the centre in px/frame.
    pub fn speed(&self) -> T {
        self.state[4].hypot(self.state[5])
    }

    /// One constant-velocity step: `x' = F x`, `P' = F P F^T + Q`.
    pub fn predict(&mut self, params: &TrackerParams<T>) -> BoundingBox<T> {
        let f = transition::<T>();
        self.state = linalg::mat_vec(&f, &self.state);
        if self.state[2] < params.min_area {
            self.state[2] = params.min_area;
            self.state[6] = T::zero();
        }
        let q = params.process_cov(self.state[2]);
        self.covariance = linalg::add(&linalg::matmul(&linalg::matmul(&f, &self.covariance), &linalg::transpose(&f)), &q);
        linalg::symmetrize(&mut self.covariance);
        self.age += 1;
        self.bbox()
    }

    /// Measurement update in Joseph form so the covariance stays PSD.
    pub fn update(&mut self, det: &Detection<T>, params: &TrackerParams<T>) {
        let z = box_to_measurement(det.bbox());
        let h = observation::<T>();
        let ht = linalg::transpose(&h);
        let r = params.measurement_cov(self.state[2]);
        let pht = linalg::matmul(&self.covariance, &ht);
        let s = linalg::add(&linalg::matmul(&h, &pht), &r);
        let s_inv = linalg::spd_inverse(&s).expect("innovation covariance is SPD");
        let k = linalg::matmul(&pht, &s_inv);
        let hx = linalg::mat_vec(&h, &self.state);
        let y: [T; MEAS_DIM] = std::array::from_fn(|i| z[i] - hx[i]);
        let dx = linalg::mat_vec(&k, &y);
        for i in 0..STATE_DIM {
            self.state[i] = self.state[i] + dx[i];
        }
        let i_kh = linalg::sub(&linalg::identity::<T, STATE_DIM>(), &linalg::matmul(&k, &h));
        let left = linalg::matmul(&linalg::matmul(&i_kh, &self.covariance), &linalg::transpose(&i_kh));
        let krk = linalg::matmul(&linalg::matmul(&k, &r), &linalg::transpose(&k));
        self.covariance = linalg::add(&left, &krk);
        linalg::symmetrize(&mut self.covariance);
        self.state[2] = self.state[2].max(params.min_area);
        self.state[3] = self.state[3].max(T::min_positive_value());
        self.hits += 1;
        self.time_since_update = 0;
        self.class_id = det.class_id();
        self.confidence = det.confidence();
    }
}
