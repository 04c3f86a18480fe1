//! One virtual-clocked run of the edge pipeline against the simulated link
//! and cloud, plus scenario files, outputs and ablation sweeps.

pub mod config;
pub mod report;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use config::{CostModel, EdgeModelConfig, PipelineConfig, Toggles, UploadParams};
pub use report::{nearest_rank, summarize, FrameReport, Latency, MetricsRow, Summary, SummaryError, UploadChoice};
pub use run::{detections_of, run_scenario, PipelineError, Profiled, RunOutput};
pub use scenario::{
    load_annotations, load_png_dir, load_profiled, load_scenario, load_trace, parse_scenario, pq_sidecar,
    save_profiled, write_outputs, write_scene, FramesSource, LoadedScenario, ScenarioError, ScenarioFile,
};
pub use sweep::{run_sweep, SweepError, SweepGrid, SweepPoint, SweepRow};
