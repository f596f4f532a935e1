//! Command-line front end.
//!
//! Every subcommand accepts `--config <file.json>`: a JSON object whose keys
//! are long flag names (`"batch-size": 64`, `"hidden": [64, 64]`,
//! `"no-depth": true`). Flags given on the command line win over the file.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{compare, evaluate_baseline, evaluate_model, write_trace_csv, EvalReport};
use crate::geometry::{RoomBounds, Rig};
use crate::graph::{assemble_person_graph, FeatureMode};
use crate::matcher::{association_accuracy, latest_views, Matcher, MatcherConfig, PersonId, TrackStatus};
use crate::nn::search::random_search;
use crate::nn::train::{save_history_csv, train_with};
use crate::nn::{
    encode_dataset, encode_input, Activation, ArchitectureParams, Family, Model, ModelSpec, PoseEstimate, SearchSpace,
    TrainConfig,
};
use crate::sim::{generate_dataset, write_dataset, DatasetConfig, GenerationProfile, NoiseModel, PathParams};
use crate::skeleton::Dataset;

#[derive(Debug, Parser)]
#[command(name = "torso-pose", version, about = "Multi-camera torso pose estimation", args_override_self = true)]
pub struct Cli {
    /// JSON file supplying default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its manifest.
    Simulate(SimulateArgs),
    /// Associate observations to people and report track events.
    Track(TrackArgs),
    /// Train one architecture.
    Train(TrainArgs),
    /// Random hyperparameter search.
    Search(SearchArgs),
    /// Evaluate a trained model on a dataset.
    Eval(EvalArgs),
    /// Evaluate the analytical estimator on a dataset.
    Baseline(BaselineArgs),
    /// Summarize several reports and write a per-sample trace.
    Compare(CompareArgs),
    /// Track people and predict their pose frame by frame.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Rig JSON with `cameras` and optionally `room`. Defaults to the built-in three-camera rig.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Room JSON `{"half_extents": [hx, hy, hz]}` overriding the rig's room.
    #[arg(long)]
    pub room: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// Noise model JSON. Defaults to the moderate profile.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// JSON list of `{label, frames, noise}` profiles, replacing --frames and --noise.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::sim::DEFAULT_RATE_HZ)]
    pub rate: f64,
    #[arg(long, default_value_t = 1)]
    pub persons: usize,
    /// Omit world coordinates (RGB-only rig).
    #[arg(long)]
    pub no_depth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Matcher configuration JSON.
    #[arg(long)]
    pub matcher: Option<PathBuf>,
    /// Track events as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "rgcn")]
    pub arch: Family,
    #[arg(long, default_value = "3d")]
    pub mode: FeatureMode,
}

#[derive(Debug, Args, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 8)]
    pub patience: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Hidden widths, one per hidden layer (per head for GAT, camera stack for MLP).
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    /// MLP head hidden widths.
    #[arg(long, value_delimiter = ',')]
    pub head_hidden: Vec<usize>,
    #[arg(long, default_value = "relu")]
    pub activation: Activation,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 7)]
    pub bases: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Model descriptor JSON used instead of the architecture flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch losses as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Write the graph of the first training sample as JSON.
    #[arg(long)]
    pub dump_graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub budget: usize,
    /// Search space JSON.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Best model checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// All trials as JSON.
    #[arg(long)]
    pub trials: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label of the training set, used as the row of comparison tables.
    #[arg(long)]
    pub train_set: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub matcher: Option<PathBuf>,
    /// JSON lines output. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json(&read(path)?)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    crate::error::from_json_str(&read(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io("<output>", e))
}

fn matcher_config(path: Option<&Path>) -> Result<MatcherConfig> {
    let cfg = match path {
        Some(p) => load_json(p)?,
        None => MatcherConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(o: &OptimArgs, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs: o.epochs,
        batch_size: o.batch_size,
        seed: o.seed,
        weight_decay: o.weight_decay,
        patience: o.patience,
        lr_decay: o.lr_decay,
    }
}

#[derive(serde::Deserialize)]
struct RigFile {
    cameras: Vec<crate::geometry::CameraModel>,
    room: Option<RoomBounds>,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut rig = match &a.rig {
        Some(p) => {
            let file: RigFile = load_json(p)?;
            let room = file.room.unwrap_or(Rig::three_camera_default().room);
            Rig::new(file.cameras, room)?
        }
        None => Rig::three_camera_default(),
    };
    if let Some(p) = &a.room {
        rig.room = load_json(p)?;
    }
    let profiles = match &a.profiles {
        Some(p) => load_json::<Vec<GenerationProfile>>(p)?,
        None => vec![GenerationProfile {
            label: "default".into(),
            frames: a.frames,
            noise: match &a.noise {
                Some(p) => NoiseModel::from_json(&read(p)?)?,
                None => NoiseModel::moderate(),
            },
        }],
    };
    let config = DatasetConfig {
        seed: a.seed,
        rate_hz: a.rate,
        persons: a.persons,
        depth: !a.no_depth,
        path: PathParams::default(),
        profiles,
    };
    let (dataset, manifest) = generate_dataset(&rig, &config)?;
    let mpath = write_dataset(&dataset, &manifest, &a.out)?;
    eprintln!(
        "wrote {} frames ({} observations) to {}, manifest {}",
        manifest.frames,
        manifest.observations,
        a.out.display(),
        mpath.display()
    );
    Ok(())
}

fn track(a: &TrackArgs) -> Result<()> {
    let dataset = load_dataset(&a.input)?;
    let mut matcher = Matcher::new(matcher_config(a.matcher.as_deref())?)?;
    let mut out = output(a.out.as_deref())?;
    let mut labelled: Vec<(u32, PersonId)> = Vec::new();
    let mut created = 0;
    let mut confirmed = 0;
    for frame in &dataset.frames {
        let step = matcher.step(frame)?;
        for e in &step.events {
            match e.event {
                crate::matcher::TrackEventKind::Created => created += 1,
                crate::matcher::TrackEventKind::Confirmed => confirmed += 1,
                crate::matcher::TrackEventKind::Expired => {}
            }
            json_line(&mut *out, e)?;
        }
        for &(oi, pid) in &step.assignments {
            if let Some(label) = frame.observations[oi].person {
                labelled.push((label, pid));
            }
        }
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    eprintln!("tracks created {created}, confirmed {confirmed}");
    if !labelled.is_empty() {
        eprintln!("association accuracy {:.4}", association_accuracy(&labelled));
    }
    Ok(())
}

fn load_examples(path: &Path, family: Family, mode: FeatureMode) -> Result<(Dataset, Vec<crate::nn::Example>)> {
    let dataset = load_dataset(path)?;
    let examples = encode_dataset(&dataset, family, mode)?;
    Ok((dataset, examples))
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let family = a.model.arch;
    let (train_ds, train_set) = load_examples(&a.train, family, a.model.mode)?;
    let (_, dev_set) = load_examples(&a.dev, family, a.model.mode)?;
    let spec = match &a.spec {
        Some(p) => load_json::<ModelSpec>(p)?,
        None => ModelSpec::build(
            &ArchitectureParams {
                family,
                hidden: a.hidden.clone(),
                head_hidden: a.head_hidden.clone(),
                activation: a.activation,
                heads: a.heads,
                bases: a.bases,
            },
            a.model.mode,
            train_ds.rig.num_cameras(),
        )?,
    };
    if let Some(p) = &a.dump_graph {
        let sample = train_ds
            .samples()
            .into_iter()
            .next()
            .ok_or_else(|| Error::Config("training set has no samples".into()))?;
        let graph = assemble_person_graph(&sample.views, a.model.mode, &train_ds.rig)?;
        write_text(p, &graph.to_json()?)?;
    }
    let cfg = train_config(&a.optim, a.lr);
    let outcome = train_with(&spec, &train_set, &dev_set, &cfg, |r| {
        eprintln!(
            "epoch {:>3}  train {:.6}  dev {:.6} (position {:.6}, orientation {:.6})",
            r.epoch, r.train.global, r.dev.global, r.dev.position, r.dev.orientation
        )
    })?;
    outcome.model.save(&a.out)?;
    if let Some(p) = &a.history {
        save_history_csv(&outcome.history, p)?;
    }
    eprintln!(
        "best dev global MSE {:.6} at epoch {}, {} parameters",
        outcome.best_dev.global,
        outcome.best_epoch,
        outcome.model.num_parameters()
    );
    Ok(())
}

fn search_cmd(a: &SearchArgs) -> Result<()> {
    let family = a.model.arch;
    let (train_ds, train_set) = load_examples(&a.train, family, a.model.mode)?;
    let (_, dev_set) = load_examples(&a.dev, family, a.model.mode)?;
    let space = match &a.space {
        Some(p) => load_json(p)?,
        None => SearchSpace::default(),
    };
    let base = train_config(&a.optim, 0.0);
    let outcome = random_search(
        &space,
        family,
        a.model.mode,
        train_ds.rig.num_cameras(),
        &train_set,
        &dev_set,
        a.budget,
        &base,
        a.optim.seed,
        |i, t| eprintln!("trial {i}: dev global MSE {:.6} {:?}", t.dev.global, t.candidate),
    )?;
    outcome.model.save(&a.out)?;
    if let Some(p) = &a.trials {
        write_text(p, &serde_json::to_string_pretty(&outcome.trials)?)?;
    }
    eprintln!("best dev global MSE {:.6}: {:?}", outcome.best_dev.global, outcome.best);
    Ok(())
}

fn print_report(r: &EvalReport) {
    let m = &r.metrics;
    eprintln!(
        "{} [{}] {} samples: global MSE {:.6}, position MSE {:.6}, orientation MSE {:.6}, MAE {:.1} mm / {:.2} deg",
        r.estimator,
        r.mode.name(),
        r.samples,
        m.global_mse,
        m.position_mse,
        m.orientation_mse,
        m.position_mae_mm,
        m.orientation_mae_deg
    );
}

fn finish_report(report: &EvalReport, out: Option<&Path>, trace: Option<&Path>) -> Result<()> {
    print_report(report);
    if let Some(p) = out {
        write_text(p, &report.to_json()?)?;
    }
    if let Some(p) = trace {
        write_trace_csv(&[report], create(p)?)?;
    }
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let dataset = load_dataset(&a.input)?;
    let report = evaluate_model(&model, &dataset, a.train_set.clone())?;
    finish_report(&report, a.out.as_deref(), a.trace.as_deref())
}

fn baseline_cmd(a: &BaselineArgs) -> Result<()> {
    let report = evaluate_baseline(&load_dataset(&a.input)?)?;
    finish_report(&report, a.out.as_deref(), a.trace.as_deref())
}

fn compare_cmd(a: &CompareArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| EvalReport::from_json(&read(p)?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let comparison = compare(&refs)?;
    let table = comparison.render();
    match &a.table {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.trace {
        write_trace_csv(&refs, create(p)?)?;
    }
    if let Some(p) = &a.json {
        write_text(p, &serde_json::to_string_pretty(&comparison)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InferLine {
    t: f64,
    track: PersonId,
    status: TrackStatus,
    cameras: Vec<u32>,
    estimate: PoseEstimate,
}

fn infer_cmd(a: &InferArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let dataset = load_dataset(&a.input)?;
    let rig = &dataset.rig;
    if rig.num_cameras() != model.spec.num_cameras {
        return Err(Error::Mismatch(format!(
            "model expects {} cameras, rig has {}",
            model.spec.num_cameras,
            rig.num_cameras()
        )));
    }
    let mut matcher = Matcher::new(matcher_config(a.matcher.as_deref())?)?;
    let mut out = output(a.out.as_deref())?;
    for frame in &dataset.frames {
        let step = matcher.step(frame)?;
        let mut active: Vec<PersonId> = step.assignments.iter().map(|&(_, pid)| pid).collect();
        active.sort_unstable();
        active.dedup();
        for pid in active {
            let track = matcher.track(pid).expect("assigned track is live");
            let views = latest_views(track, rig.num_cameras())?;
            let input = encode_input(&views, model.spec.family, model.spec.mode, rig)?;
            let estimate = model.predict_input(&input, &rig.room)?;
            json_line(
                &mut *out,
                &InferLine {
                    t: frame.timestamp,
                    track: pid,
                    status: track.status,
                    cameras: views.iter().map(|v| v.camera_id).collect(),
                    estimate,
                },
            )?;
        }
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

/// Converts the `--config` JSON object into command-line tokens.
fn config_tokens(path: &Path) -> Result<Vec<OsString>> {
    let value: serde_json::Value = serde_json::from_str(&read(path)?)?;
    let map = value
        .as_object()
        .ok_or_else(|| Error::Config(format!("{} must hold a JSON object", path.display())))?;
    let scalar = |v: &serde_json::Value| match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        other => Err(Error::Config(format!("unsupported config value {other}"))),
    };
    let mut tokens = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => tokens.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                if key == "reports" {
                    tokens.push(flag.into());
                    tokens.extend(parts.into_iter().map(OsString::from));
                } else {
                    tokens.push(flag.into());
                    tokens.push(parts.join(",").into());
                }
            }
            other => {
                tokens.push(flag.into());
                tokens.push(scalar(other)?.into());
            }
        }
    }
    Ok(tokens)
}

/// Splices config-file tokens between the subcommand and the user's flags.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let Some(path) = args.get(pos + 1).map(PathBuf::from) else {
        return Ok(args);
    };
    let mut rest: Vec<OsString> = args[..pos].iter().chain(&args[pos + 2..]).cloned().collect();
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let tokens = config_tokens(&path)?;
    rest.splice(sub..sub, tokens);
    Ok(rest)
}

pub fn run_command(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Track(a) => track(a),
        Command::Train(a) => train_cmd(a),
        Command::Search(a) => search_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Infer(a) => infer_cmd(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_command(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
