//! Ablation grid over module toggles and link bandwidth.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Toggles;
use super::run::{run_scenario, PipelineError, RunOutput};
use super::scenario::{write_outputs, LoadedScenario};
use crate::netsim::TraceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub toggles: Vec<Toggles>,
    /// Factors applied to every rate of the scenario trace.
    pub bandwidth_scales: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let mut toggles = Vec::new();
        for fast_inference_on in [false, true] {
            for mining_on in [false, true] {
                for quality_encode_on in [false, true] {
                    toggles.push(Toggles {
                        fast_inference_on,
                        mining_on,
                        quality_encode_on,
                    });
                }
            }
        }
        Self {
            toggles,
            bandwidth_scales: vec![0.25, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub run: usize,
    pub fast: bool,
    pub mine: bool,
    pub qe: bool,
    pub bw_scale: f64,
}

/// Long-format row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub run: usize,
    pub fast: bool,
    pub mine: bool,
    pub qe: bool,
    pub bw_scale: f64,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("bandwidth scale {0}: {1}")]
    Scale(f64, TraceError),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: PipelineError,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SweepGrid {
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for t in &self.toggles {
            for &bw_scale in &self.bandwidth_scales {
                out.push(SweepPoint {
                    run: out.len(),
                    fast: t.fast_inference_on,
                    mine: t.mining_on,
                    qe: t.quality_encode_on,
                    bw_scale,
                });
            }
        }
        out
    }
}

pub fn rows(point: &SweepPoint, out: &RunOutput) -> Vec<SweepRow> {
    let s = &out.summary;
    let metrics: [(&'static str, f64); 8] = [
        ("map", s.map),
        ("mean_latency_s", s.mean_latency),
        ("p90_latency_s", s.p90_latency),
        ("mean_regress_s", s.mean_regress),
        ("total_bytes", s.total_bytes as f64),
        ("uploads", s.uploads as f64),
        ("mined", s.mined as f64),
        ("proposals_per_fast_frame", s.proposals_per_fast_frame),
    ];
    metrics
        .iter()
        .map(|&(metric, value)| SweepRow {
            run: point.run,
            fast: point.fast,
            mine: point.mine,
            qe: point.qe,
            bw_scale: point.bw_scale,
            metric,
            value,
        })
        .collect()
}

/// Runs every grid point on a pool of `threads` workers (0 picks the
/// default). Results come back in grid order regardless of scheduling.
/// With `out_dir`, each run writes to `run_NNN/` and the grid to `sweep.csv`.
pub fn run_sweep(
    scenario: &LoadedScenario,
    grid: &SweepGrid,
    threads: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<(SweepPoint, RunOutput)>, SweepError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let results: Vec<Result<(SweepPoint, RunOutput), SweepError>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let trace = scenario.trace.scaled(p.bw_scale).map_err(|e| SweepError::Scale(p.bw_scale, e))?;
                let mut cfg = scenario.config.clone();
                cfg.toggles = Toggles {
                    fast_inference_on: p.fast,
                    mining_on: p.mine,
                    quality_encode_on: p.qe,
                };
                let out = run_scenario(&scenario.frames, &scenario.truth, &trace, &cfg, scenario.profiled.as_ref(), scenario.seed)
                    .map_err(|source| SweepError::Run { run: p.run, source })?;
                if let Some(dir) = out_dir {
                    write_outputs(&dir.join(format!("run_{:03}", p.run)), &out)?;
                }
                Ok((*p, out))
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for (p, out) in &results {
            for r in rows(p, out) {
                w.serialize(r)?;
            }
        }
        w.flush()?;
    }
    Ok(results)
}
