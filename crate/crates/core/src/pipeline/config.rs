use serde::{Deserialize, Serialize};

use crate::encode::DEFAULT_PADDING;
use crate::mining::MiningParams;
use crate::model::ScriptedModelConfig;
use crate::netsim::{CloudModel, NetParams};
use crate::rng::derive_seed;
use crate::scheduler::{FallbackPolicy, DEFAULT_GRID};
use crate::tracking::TrackerParams;

/// Module switches for ablation runs. All on is the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub fast_inference_on: bool,
    pub mining_on: bool,
    pub quality_encode_on: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            fast_inference_on: true,
            mining_on: true,
            quality_encode_on: true,
        }
    }
}

/// Synthetic edge latency model, virtual seconds. The constants are not
/// measurements; they only fix the ratio between the full detector head and
/// per-proposal regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub extract_s_per_px: f64,
    /// Regression over the full-frame proposal set.
    pub regress_full_s: f64,
    pub regress_base_s: f64,
    pub regress_per_proposal_s: f64,
    pub mine_s_per_target: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            extract_s_per_px: 1e-7,
            regress_full_s: 0.028,
            regress_base_s: 0.002,
            regress_per_proposal_s: 0.0008,
            mine_s_per_target: 0.0004,
        }
    }
}

impl CostModel {
    pub fn extract(&self, width: u32, height: u32) -> f64 {
        self.extract_s_per_px * f64::from(width) * f64::from(height)
    }

    pub fn regress_fast(&self, proposals: usize) -> f64 {
        self.regress_base_s + self.regress_per_proposal_s * proposals as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeModelConfig {
    pub scripted: ScriptedModelConfig,
    pub strides: Vec<u32>,
    pub channels: usize,
}

impl Default for EdgeModelConfig {
    fn default() -> Self {
        Self {
            scripted: ScriptedModelConfig {
                miss_rate_small: 0.3,
                miss_rate_large: 0.1,
                box_jitter_sigma: 1.0,
                confidence_noise_sigma: 0.1,
                latency_s: 0.0,
                ..Default::default()
            },
            strides: vec![4, 8, 16],
            channels: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UploadParams {
    pub padding: u32,
    pub grid: usize,
    /// Quality of the whole frame when differentiated encoding is off.
    pub uniform_q: u8,
    /// Plan used when no configuration set is loaded.
    pub default_k: u8,
    pub default_q_roi: u8,
    pub default_q_bg: u8,
    /// Nearest configurations handed to the selector.
    pub top_n: usize,
    /// Seconds allowed for transfer plus clustering and encoding.
    pub latency_budget: f64,
    pub fallback: FallbackPolicy,
    /// Upload every n-th frame besides keyframes; 0 disables periodic uploads.
    pub interval: u64,
}

impl Default for UploadParams {
    fn default() -> Self {
        Self {
            padding: DEFAULT_PADDING,
            grid: DEFAULT_GRID,
            uniform_q: 90,
            default_k: 2,
            default_q_roi: 90,
            default_q_bg: 20,
            top_n: 8,
            latency_budget: 0.2,
            fallback: FallbackPolicy::SmallestSize,
            interval: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tracker: TrackerParams<f64>,
    pub mining: MiningParams<f64>,
    pub upload: UploadParams,
    pub net: NetParams,
    pub edge: EdgeModelConfig,
    pub cloud: CloudModel,
    pub cost: CostModel,
    pub toggles: Toggles,
    /// Frames kept for reference refreshes.
    pub cache_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerParams::default(),
            mining: MiningParams::default(),
            upload: UploadParams::default(),
            net: NetParams::default(),
            edge: EdgeModelConfig::default(),
            cloud: CloudModel::default(),
            cost: CostModel::default(),
            toggles: Toggles::default(),
            cache_capacity: 90,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.tracker.validate()?;
        self.mining.validate()?;
        self.edge.scripted.validate().map_err(|e| e.to_string())?;
        self.cloud.config.validate().map_err(|e| e.to_string())?;
        if self.edge.strides.is_empty() || self.edge.strides.contains(&0) || self.edge.channels == 0 {
            return Err("edge model needs non-zero strides and channels".into());
        }
        if self.cache_capacity == 0 {
            return Err("cache_capacity must be >= 1".into());
        }
        let u = &self.upload;
        let q_ok = |a: u8, b: u8| (1..=100).contains(&a) && (1..=100).contains(&b) && a >= b;
        if !q_ok(u.uniform_q, u.uniform_q) || !q_ok(u.default_q_roi, u.default_q_bg) {
            return Err("upload qualities must be in 1..=100 with q_roi >= q_bg".into());
        }
        if u.grid == 0 || u.top_n == 0 || !(u.latency_budget > 0.0) {
            return Err("upload grid, top_n and latency_budget must be positive".into());
        }
        let n = &self.net;
        if !(n.rtt >= 0.0 && n.cloud_latency >= 0.0 && n.send_window > 0.0 && n.estimate_window > 0.0) || n.max_queue == 0 {
            return Err("network params out of range".into());
        }
        Ok(())
    }

    /// Copy with every random stream keyed off `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.edge.scripted.rng_seed = derive_seed(seed, &[1]);
        c.cloud.config.rng_seed = derive_seed(seed, &[2]);
        c.net.seed = derive_seed(seed, &[3]);
        c
    }

    pub fn feature_seed(seed: u64) -> u64 {
        derive_seed(seed, &[4])
    }
}
