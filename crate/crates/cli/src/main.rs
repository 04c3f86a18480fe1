//! `cloudeye` command line: scenario runs, config-set profiling, single-frame
//! encode/decode, synthetic scenario generation and ablation sweeps.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 trace file missing, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cloudeye::encode::{build_config_set, decode_bytes, encode_frame, plan_frame, ProfileParams, WireError};
use cloudeye::model::{Frame, GroundTruth};
use cloudeye::netsim::CloudModel;
use cloudeye::pipeline::{
    load_annotations, load_png_dir, load_scenario, load_trace, run_scenario, run_sweep, save_profiled, write_outputs,
    write_scene, LoadedScenario, ScenarioError, SweepGrid,
};
use cloudeye::scene::{default_trace, generate, Boundary, SceneError, SceneSpec};
use cloudeye::scheduler::PqParams;
use cloudeye::BBox;

/// Failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn other(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::TraceMissing(_) => 3,
            e if e.is_invalid_input() => 2,
            _ => 1,
        };
        Self { code, error: e.into() }
    }
}

type CliResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "cloudeye", version, about = "Edge-cloud video analytics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write reports.jsonl, summary.json and metrics.csv.
    Run(RunArgs),
    /// Profile a configuration set from an annotated corpus.
    Profile(ProfileArgs),
    /// Encode one PNG frame with differentiated quality.
    Encode(EncodeArgs),
    /// Decode an encoded frame back to PNG.
    Decode(DecodeArgs),
    /// Generate a synthetic moving-target scenario.
    GenScenario(GenArgs),
    /// Run a grid of module toggles and bandwidth scales.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Module {
    Fast,
    Mine,
    Qe,
}

#[derive(Debug, Clone, Copy)]
struct Toggle {
    module: Module,
    on: bool,
}

fn parse_toggle(s: &str) -> Result<Toggle, String> {
    let (m, v) = s.split_once('=').ok_or("expected MODULE=on|off")?;
    let module = Module::from_str(m, true).map_err(|_| format!("unknown module {m:?}; use fast, mine or qe"))?;
    let on = match v {
        "on" => true,
        "off" => false,
        _ => return Err(format!("toggle value must be on or off, got {v:?}")),
    };
    Ok(Toggle { module, on })
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Module switch, e.g. `--toggle mine=off`; repeatable.
    #[arg(long = "toggle", value_parser = parse_toggle)]
    toggles: Vec<Toggle>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Scenario file, or a directory holding `frames/` and `annotations.jsonl`.
    #[arg(long)]
    corpus: PathBuf,
    /// Output config set (JSON lines); the PQ index goes to `<out>.pq`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u8, 2, 3, 4])]
    k_list: Vec<u8>,
    /// Quality pairs `roi:bg`, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["90:20", "90:40", "70:20", "50:10"], value_parser = parse_q)]
    q_list: Vec<(u8, u8)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_q(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s.split_once(':').ok_or("expected ROI:BG")?;
    let p = |x: &str| x.trim().parse::<u8>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Args)]
struct EncodeArgs {
    /// PNG frame.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target boxes `x0,y0,x1,y1`, separated by `;`.
    #[arg(long, default_value = "")]
    boxes: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 90)]
    q_roi: u8,
    #[arg(long, default_value_t = 20)]
    q_bg: u8,
    #[arg(long, default_value_t = 16)]
    padding: u32,
    #[arg(long, default_value_t = 0)]
    frame_id: u64,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Exit,
    Bounce,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    frames: u32,
    #[arg(long)]
    targets: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 240)]
    height: u32,
    #[arg(long, default_value_t = 1)]
    speed_min: u32,
    #[arg(long, default_value_t = 3)]
    speed_max: u32,
    #[arg(long, default_value_t = 20)]
    size_min: u32,
    #[arg(long, default_value_t = 30)]
    size_max: u32,
    #[arg(long, default_value_t = 3)]
    classes: u32,
    #[arg(long, default_value_t = 30)]
    fps: u32,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Exit)]
    boundary: BoundaryArg,
    /// Copy this trace instead of writing the default one.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 1.0])]
    bw_scales: Vec<f64>,
}

fn load(path: &Path, seed: Option<u64>, trace: Option<&Path>) -> Result<LoadedScenario, Failure> {
    let mut s = load_scenario(path, seed)?;
    if let Some(t) = trace {
        s.trace = load_trace(t)?;
    }
    Ok(s)
}

fn cmd_run(a: RunArgs) -> CliResult {
    let mut s = load(&a.scenario, a.seed, a.trace.as_deref())?;
    for t in &a.toggles {
        let tg = &mut s.config.toggles;
        match t.module {
            Module::Fast => tg.fast_inference_on = t.on,
            Module::Mine => tg.mining_on = t.on,
            Module::Qe => tg.quality_encode_on = t.on,
        }
    }
    let out = run_scenario(&s.frames, &s.truth, &s.trace, &s.config, s.profiled.as_ref(), s.seed)
        .map_err(Failure::invalid)?;
    write_outputs(&a.out, &out)
        .with_context(|| format!("writing outputs to {}", a.out.display()))
        .map_err(Failure::other)?;
    println!("{}", serde_json::to_string(&out.summary).map_err(Failure::other)?);
    Ok(())
}

/// Frames and annotations of a corpus directory or scenario file.
fn load_corpus(path: &Path) -> Result<Vec<(Frame, GroundTruth)>, Failure> {
    let (frames, truth) = if path.is_dir() {
        let frames = load_png_dir(&path.join("frames"), 30)?;
        let truth = load_annotations(&path.join("annotations.jsonl"))?;
        (frames, truth)
    } else {
        let s = load_scenario(path, None)?;
        (s.frames, s.truth)
    };
    if frames.len() != truth.len() {
        return Err(Failure::invalid(anyhow!(
            "{} frames but {} annotation rows",
            frames.len(),
            truth.len()
        )));
    }
    Ok(frames.into_iter().zip(truth).collect())
}

fn cmd_profile(a: ProfileArgs) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(Failure::invalid(anyhow!("corpus {} is empty", a.corpus.display())));
    }
    let params = ProfileParams {
        k_values: a.k_list,
        q_values: a.q_list,
        ..Default::default()
    };
    let mut cloud = CloudModel::default();
    cloud.config.rng_seed = cloudeye::rng::derive_seed(a.seed, &[2]);
    let set = build_config_set(&corpus, &params, &cloud).map_err(Failure::invalid)?;
    let pq = PqParams {
        seed: a.seed,
        ..Default::default()
    };
    save_profiled(&a.out, &set.entries, &pq)?;
    println!(
        "{}",
        serde_json::json!({"entries": set.entries.len(), "skipped": set.skipped.len()})
    );
    Ok(())
}

fn parse_boxes(s: &str) -> anyhow::Result<Vec<BBox>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let v: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("box {p:?}")))
                .collect::<anyhow::Result<_>>()?;
            let [x0, y0, x1, y1] = v[..] else {
                return Err(anyhow!("box {p:?} needs four numbers"));
            };
            BBox::new(x0, y0, x1, y1).map_err(|e| anyhow!("box {p:?}: {e}"))
        })
        .collect()
}

fn cmd_encode(a: EncodeArgs) -> CliResult {
    let frame = Frame::load_png(&a.input, a.frame_id, Default::default()).map_err(Failure::invalid)?;
    let boxes = parse_boxes(&a.boxes).map_err(Failure::invalid)?;
    let (w, h) = frame.dims();
    let plan = plan_frame(&boxes, a.k, a.padding, a.q_roi, a.q_bg, w, h).map_err(Failure::invalid)?;
    let enc = encode_frame(&frame, &plan).map_err(Failure::invalid)?;
    let bytes = enc.to_bytes().map_err(Failure::other)?;
    fs::write(&a.out, &bytes)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::other)?;
    println!(
        "{}",
        serde_json::json!({"bytes": bytes.len(), "k": plan.k, "rois": plan.rois.len(), "coverage": plan.coverage(w, h)})
    );
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> CliResult {
    let bytes = fs::read(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .map_err(Failure::invalid)?;
    let frame = decode_bytes(&bytes).map_err(|e: WireError| Failure::invalid(e))?;
    frame.save_png(&a.out).map_err(Failure::other)?;
    println!("{}", serde_json::json!({"frame_id": frame.id, "width": frame.width(), "height": frame.height()}));
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CliResult {
    let spec = SceneSpec {
        width: a.width,
        height: a.height,
        frames: a.frames,
        targets: a.targets,
        speed_min: a.speed_min,
        speed_max: a.speed_max,
        size_min: a.size_min,
        size_max: a.size_max,
        classes: a.classes,
        fps: a.fps,
        boundary: match a.boundary {
            BoundaryArg::Exit => Boundary::Exit,
            BoundaryArg::Bounce => Boundary::Bounce,
        },
        seed: a.seed,
    };
    let scene = generate(&spec).map_err(|e: SceneError| Failure::invalid(e))?;
    let trace = match &a.trace {
        Some(p) => load_trace(p)?,
        None => default_trace(f64::from(spec.frames) / f64::from(spec.fps) + 1.0),
    };
    let path = write_scene(&a.out, &scene, &trace)?;
    println!("{}", serde_json::json!({"scenario": path, "frames": scene.frames.len()}));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let s = load(&a.scenario, a.seed, a.trace.as_deref())?;
    let grid = SweepGrid {
        bandwidth_scales: a.bw_scales,
        ..Default::default()
    };
    let results = run_sweep(&s, &grid, a.threads, Some(&a.out)).map_err(Failure::invalid)?;
    println!("{}", serde_json::json!({"runs": results.len(), "csv": a.out.join("sweep.csv")}));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CLOUDEYE_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::GenScenario(a) => cmd_gen(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
