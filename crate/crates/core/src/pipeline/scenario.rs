//! Scenario files, corpus loading and run outputs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::PipelineConfig;
use super::report::MetricsRow;
use super::run::{Profiled, RunOutput};
use crate::encode::{read_config_set, write_config_set, ConfigEntry, ConfigSetError};
use crate::model::{read_annotations, write_annotations, AnnotationError, Frame, FrameError, GroundTruth};
use crate::netsim::{BandwidthTrace, TraceError};
use crate::scene::{default_trace, generate, Scene, SceneError, SceneSpec};
use crate::scheduler::{PqError, PqIndex, PqParams};

/// Where a scenario's frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FramesSource {
    /// Directory of PNGs, taken in file-name order with ids `0..n`.
    Dir(PathBuf),
    Synthetic { synthetic: SceneSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub frames: FramesSource,
    /// Required for a PNG directory; ignored for synthetic frames.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// Bandwidth trace CSV; without one the default trace is used.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Profiled configuration set; its PQ index is read from `<path>.pq`
    /// when present and trained otherwise.
    #[serde(default)]
    pub config_set: Option<PathBuf>,
    #[serde(default)]
    pub config: PipelineConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fps")]
    pub fps: u32,
}

fn default_fps() -> u32 {
    30
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("trace file {0} not found")]
    TraceMissing(PathBuf),
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error("{path}: {source}")]
    Annotations {
        path: PathBuf,
        #[source]
        source: AnnotationError,
    },
    #[error("{path}: {source}")]
    ConfigSet {
        path: PathBuf,
        #[source]
        source: ConfigSetError,
    },
    #[error("{path}: {source}")]
    Pq {
        path: PathBuf,
        #[source]
        source: PqError,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl ScenarioError {
    /// Caller-supplied input was malformed or inconsistent.
    pub fn is_invalid_input(&self) -> bool {
        match self {
            ScenarioError::TraceMissing(_) => false,
            ScenarioError::Io { source, .. } => {
                matches!(source.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData)
            }
            _ => true,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, ScenarioError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Everything a run needs, loaded and checked.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub frames: Vec<Frame>,
    pub truth: Vec<GroundTruth>,
    pub trace: BandwidthTrace,
    pub config: PipelineConfig,
    pub profiled: Option<Profiled>,
    pub seed: u64,
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn load_png_dir(dir: &Path, fps: u32) -> Result<Vec<Frame>, ScenarioError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let fps = i64::from(fps.max(1));
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| Frame::load_png(p, i as u64, Ratio::new(i as i64, fps)).map_err(ScenarioError::from))
        .collect()
}

pub fn load_annotations(path: &Path) -> Result<Vec<GroundTruth>, ScenarioError> {
    read_annotations(open(path)?).map_err(|source| ScenarioError::Annotations {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_trace(path: &Path) -> Result<BandwidthTrace, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::TraceMissing(path.to_path_buf()));
    }
    BandwidthTrace::read_csv(open(path)?).map_err(|source| ScenarioError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

/// Sidecar path of a configuration set's PQ index.
pub fn pq_sidecar(config_set: &Path) -> PathBuf {
    let mut s = config_set.as_os_str().to_owned();
    s.push(".pq");
    PathBuf::from(s)
}

pub fn load_profiled(path: &Path) -> Result<Profiled, ScenarioError> {
    let entries = read_config_set(open(path)?).map_err(|source| ScenarioError::ConfigSet {
        path: path.to_path_buf(),
        source,
    })?;
    let side = pq_sidecar(path);
    let pq_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| ScenarioError::Pq { path: p, source }
    };
    let index = if side.exists() {
        let bytes = fs::read(&side).map_err(io_err(&side))?;
        let index = PqIndex::from_bytes(&bytes).map_err(pq_err(&side))?;
        if index.len() != entries.len() {
            return Err(ScenarioError::Pq {
                path: side,
                source: PqError::SetMismatch {
                    index: index.len(),
                    set: entries.len(),
                },
            });
        }
        index
    } else {
        PqIndex::build(&entries, &PqParams::default()).map_err(pq_err(path))?
    };
    Ok(Profiled { entries, index })
}

/// Writes a configuration set and its PQ sidecar.
pub fn save_profiled(path: &Path, entries: &[ConfigEntry], params: &PqParams) -> Result<PqIndex, ScenarioError> {
    let cs_err = |source| ScenarioError::ConfigSet {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_config_set(entries, &mut w).map_err(cs_err)?;
    w.flush().map_err(io_err(path))?;
    let index = PqIndex::build(entries, params).map_err(|source| ScenarioError::Pq {
        path: path.to_path_buf(),
        source,
    })?;
    let side = pq_sidecar(path);
    fs::write(&side, index.to_bytes()).map_err(io_err(&side))?;
    Ok(index)
}

/// Loads a scenario; relative paths resolve against the file's directory.
pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<LoadedScenario, ScenarioError> {
    let file = parse_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    file.config.validate().map_err(|m| ScenarioError::Invalid(format!("{}: config: {m}", path.display())))?;
    let (frames, truth) = match &file.frames {
        FramesSource::Synthetic { synthetic } => {
            let s = generate(synthetic)?;
            (s.frames, s.truth)
        }
        FramesSource::Dir(dir) => {
            let ann = file
                .annotations
                .as_ref()
                .ok_or_else(|| ScenarioError::Invalid("a frame directory needs \"annotations\"".into()))?;
            let frames = load_png_dir(&rel(dir), file.fps)?;
            let truth = load_annotations(&rel(ann))?;
            (frames, truth)
        }
    };
    if frames.is_empty() {
        return Err(ScenarioError::Invalid("scenario has no frames".into()));
    }
    if frames.len() != truth.len() || frames.iter().zip(&truth).any(|(f, g)| f.id != g.frame_id) {
        return Err(ScenarioError::Invalid(format!(
            "{} frames do not line up with {} annotation rows",
            frames.len(),
            truth.len()
        )));
    }
    let trace = match &file.trace {
        Some(p) => load_trace(&rel(p))?,
        None => {
            let last = frames.last().expect("non-empty");
            default_trace(*last.timestamp.numer() as f64 / *last.timestamp.denom() as f64 + 1.0)
        }
    };
    let profiled = file.config_set.as_ref().map(|p| load_profiled(&rel(p))).transpose()?;
    Ok(LoadedScenario {
        frames,
        truth,
        trace,
        config: file.config,
        profiled,
        seed: seed_override.unwrap_or(file.seed),
    })
}

/// Writes `reports.jsonl`, `summary.json`, `metrics.csv` and `events.jsonl`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("reports.jsonl"))?);
    for r in &out.reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, &out.summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    for r in &out.reports {
        w.serialize(MetricsRow::from(r))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("events.jsonl"))?);
    for e in &out.events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes a generated scene as PNG frames, annotations, a default trace and
/// a scenario file that ties them together. Returns the scenario path.
pub fn write_scene(dir: &Path, scene: &Scene, trace: &BandwidthTrace) -> Result<PathBuf, ScenarioError> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;
    for f in &scene.frames {
        f.save_png(&frames_dir.join(format!("frame_{:06}.png", f.id)))?;
    }
    let ann = dir.join("annotations.jsonl");
    let mut w = BufWriter::new(File::create(&ann).map_err(io_err(&ann))?);
    write_annotations(&mut w, &scene.truth).map_err(io_err(&ann))?;
    w.flush().map_err(io_err(&ann))?;
    let tr = dir.join("trace.csv");
    let w = BufWriter::new(File::create(&tr).map_err(io_err(&tr))?);
    trace.write_csv(w).map_err(|source| ScenarioError::Trace {
        path: tr.clone(),
        source,
    })?;
    let file = ScenarioFile {
        frames: FramesSource::Dir("frames".into()),
        annotations: Some("annotations.jsonl".into()),
        trace: Some("trace.csv".into()),
        config_set: None,
        config: PipelineConfig::default(),
        seed: scene.spec.seed,
        fps: scene.spec.fps,
    };
    let path = dir.join("scenario.json");
    let text = serde_json::to_string_pretty(&file).expect("scenario serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
