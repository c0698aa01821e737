//! `setpred`: generate synthetic datasets, train set-prediction networks,
//! evaluate and decode them, and run diagnostics.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or format error,
//! 3 training divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use setpred::datagen::{self, DigitGlyphs, GlyphSource};
use setpred::gradcheck;
use setpred::inference::InferenceMode;
use setpred::network::{Checkpoint, Real, SetNetwork};
use setpred::setloss::PermutationHistogram;
use setpred::trainer::{self, Prediction, TrainOutcome};
use setpred::{Error, Precision, RunConfig, Scenario, Task};

#[derive(Parser)]
#[command(name = "setpred", version, about = "Set prediction with feed-forward networks")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They override values from `--config`.
#[derive(Args)]
struct GlobalArgs {
    /// Run configuration file (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    task: Option<Task>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    momentum: Option<f64>,
    #[arg(long = "weight-decay", global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Inference constant U
    #[arg(long = "U", global = true)]
    u: Option<f64>,
    #[arg(long, global = true)]
    mode: Option<InferenceMode>,
    /// Output file or directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other configuration key, as `key=value` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL
    Gen {
        /// Number of instances
        #[arg(long, short)]
        n: usize,
        /// Labels (tagging) or largest object count (detection)
        #[arg(long, default_value_t = 5)]
        slots: usize,
        /// Overlap level in [0, 1] for detection
        #[arg(long, default_value_t = 0.4)]
        overlap: f64,
        /// Largest number of scene digits for CAPTCHA
        #[arg(long = "scene-digits", default_value_t = 4)]
        scene_digits: usize,
        /// IDX image file of handwritten digits for CAPTCHA scenes
        #[arg(long = "digit-images", requires = "digit_labels")]
        digit_images: Option<PathBuf>,
        /// IDX label file matching `--digit-images`
        #[arg(long = "digit-labels", requires = "digit_images")]
        digit_labels: Option<PathBuf>,
    },
    /// Train a network and write a run directory
    Train {
        /// Training data (JSONL)
        #[arg(long)]
        data: PathBuf,
        /// Validation data; when given, U is selected on it after training
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Score a checkpoint on a labelled dataset
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Decode the set predicted for one instance
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// File holding one JSONL instance record
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare analytic loss gradients with finite differences
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        draws: usize,
    },
    /// Dominant sampled permutations of a scenario-2 run
    PermsReport {
        /// Run directory written by `train`
        #[arg(long)]
        run: PathBuf,
        /// Permutations listed per instance
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

impl GlobalArgs {
    /// Starts from `base` (or the `--config` file) and applies flag overrides.
    fn resolve(&self, base: RunConfig) -> setpred::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::parse(&read_config_file(p)?)?,
            None => base,
        };
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(s) = self.scenario {
            cfg.scenario = Scenario::from_number(s)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.u {
            cfg.u = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self, what: &str) -> setpred::Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config(format!("--out is required for {what}")))
    }
}

fn read_config_file(path: &Path) -> setpred::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> setpred::Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}

fn write_or_print(out: Option<&Path>, text: &str) -> setpred::Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(g: &GlobalArgs, cmd: &Command) -> setpred::Result<()> {
    let Command::Gen {
        n,
        slots,
        overlap,
        scene_digits,
        digit_images,
        digit_labels,
    } = cmd
    else {
        unreachable!()
    };
    let cfg = g.resolve(RunConfig::default())?;
    let data = match cfg.task {
        Task::Tagging => datagen::gen_multilabel(*n, *slots, cfg.seed)?,
        Task::Detect => datagen::gen_toy_detection(*n, *slots, *overlap, cfg.seed)?,
        Task::Captcha => {
            let glyphs = match (digit_images, digit_labels) {
                (Some(i), Some(l)) => GlyphSource::Images(DigitGlyphs::load(i, l)?),
                _ => GlyphSource::Bitmap,
            };
            datagen::gen_captcha_with(*n, *scene_digits, cfg.seed, &glyphs)?
        }
    };
    datagen::save_jsonl(&data, g.out("gen")?)?;
    eprintln!("wrote {} {} instances", data.len(), data.task.name());
    Ok(())
}

fn train_typed<T: Real>(cfg: &RunConfig, dir: &Path, data: &datagen::Dataset) -> setpred::Result<TrainOutcome<T>> {
    let width = data
        .input_width()
        .ok_or_else(|| Error::Config("training data is empty".into()))?;
    let net = trainer::init_network::<T>(cfg, width)?;
    fs::create_dir_all(dir)?;
    trainer::train_with(net, data, cfg, |ev| {
        let r = ev.record;
        eprintln!("epoch {} lr {:.3e} loss {:.5}", r.epoch, r.lr, r.loss);
        if cfg.checkpoint_every > 0 && (ev.epoch + 1) % cfg.checkpoint_every == 0 {
            let ck = Checkpoint::capture(ev.net, cfg).to_json()?;
            fs::write(dir.join(format!("checkpoint_epoch{}.json", ev.epoch + 1)), ck)?;
        }
        Ok(())
    })
}

fn finish_training<T: Real>(
    mut cfg: RunConfig,
    dir: &Path,
    data: &datagen::Dataset,
    validation: Option<&datagen::Dataset>,
) -> setpred::Result<()> {
    let outcome = train_typed::<T>(&cfg, dir, data)?;
    if let Some(v) = validation {
        cfg.u = trainer::select_u(&outcome.net, v, &cfg, &trainer::U_GRID)?;
        eprintln!("selected U = {}", cfg.u);
    }
    trainer::save_run(dir, &outcome, &cfg)
}

fn cmd_train(g: &GlobalArgs, data: &Path, validation: Option<&Path>) -> setpred::Result<()> {
    let cfg = g.resolve(RunConfig::default())?;
    let dir = g.out("train")?;
    let train = datagen::load_jsonl(data)?;
    let val = validation.map(datagen::load_jsonl).transpose()?;
    match cfg.precision {
        Precision::F32 => finish_training::<f32>(cfg, dir, &train, val.as_ref()),
        Precision::F64 => finish_training::<f64>(cfg, dir, &train, val.as_ref()),
    }
}

/// Configuration stored in a checkpoint with inference flags applied.
fn checkpoint_config(g: &GlobalArgs, ck: &Checkpoint) -> setpred::Result<RunConfig> {
    let mut cfg = ck.config.clone();
    if let Some(v) = g.u {
        cfg.u = v;
    }
    if let Some(v) = g.mode {
        cfg.mode = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn predict_with(ck: &Checkpoint, cfg: &RunConfig, data: &datagen::Dataset) -> setpred::Result<Vec<Prediction>> {
    fn run<T: Real>(net: SetNetwork<T>, cfg: &RunConfig, data: &datagen::Dataset) -> setpred::Result<Vec<Prediction>> {
        trainer::predict(&net, data, cfg, &cfg.inference_config())
    }
    match cfg.precision {
        Precision::F32 => run(ck.network::<f32>()?, cfg, data),
        Precision::F64 => run(ck.network::<f64>()?, cfg, data),
    }
}

fn cmd_eval(g: &GlobalArgs, checkpoint: &Path, data: &Path) -> setpred::Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(g, &ck)?;
    let data = datagen::load_jsonl(data)?;
    let preds = predict_with(&ck, &cfg, &data)?;
    let report = trainer::score(&preds, &data, cfg.slots);
    let hash = cfg.hash();
    match &g.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.csv"), format!("# config_hash {hash}\n{}", report.to_csv()))?;
            let json = serde_json::json!({
                "config_hash": hash,
                "U": cfg.u,
                "mode": cfg.mode.name(),
                "metrics": serde_json::from_str::<serde_json::Value>(&report.to_json())?,
            });
            fs::write(dir.join("report.json"), serde_json::to_string_pretty(&json)?)?;
            let mut lines = String::new();
            for p in &preds {
                lines.push_str(&serde_json::to_string(p)?);
                lines.push('\n');
            }
            fs::write(dir.join("predictions.jsonl"), lines)?;
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn cmd_infer(g: &GlobalArgs, checkpoint: &Path, input: &Path) -> setpred::Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(g, &ck)?;
    let data = datagen::load_jsonl(input)?;
    if data.len() != 1 {
        return Err(Error::Format {
            offset: 0,
            msg: format!("expected one instance, found {}", data.len()),
        });
    }
    let pred = predict_with(&ck, &cfg, &data)?.remove(0);
    let mut json = serde_json::to_value(&pred)?;
    json["config_hash"] = serde_json::Value::String(cfg.hash());
    write_or_print(g.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&json)?))
}

fn cmd_gradcheck(g: &GlobalArgs, draws: usize) -> setpred::Result<()> {
    let cfg = g.resolve(RunConfig::default())?;
    let checks = gradcheck::check_all(&cfg, draws, cfg.seed)?;
    let text = format!("# config_hash {}\n{}", cfg.hash(), gradcheck::to_csv(&checks));
    write_or_print(g.out.as_deref(), &text)
}

fn cmd_perms_report(g: &GlobalArgs, run: &Path, top: usize) -> setpred::Result<()> {
    let path = run.join("histogram.json");
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} not found; permutation histograms are only recorded for scenario 2",
            path.display()
        )));
    }
    let hist: PermutationHistogram = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let hash = fs::read_to_string(run.join("config.txt"))
        .ok()
        .and_then(|t| t.lines().next().map(str::to_string))
        .unwrap_or_default();
    let mut text = String::new();
    if hash.starts_with("# config_hash") {
        text.push_str(&hash);
        text.push('\n');
    }
    text.push_str(&hist.to_csv(top));
    eprintln!("mean top-1 permutation weight {:.4}", hist.mean_top1_weight());
    write_or_print(g.out.as_deref(), &text)
}

fn run(cli: &Cli) -> setpred::Result<()> {
    let g = &cli.global;
    match &cli.command {
        c @ Command::Gen { .. } => cmd_gen(g, c),
        Command::Train { data, validation } => cmd_train(g, data, validation.as_deref()),
        Command::Eval { checkpoint, data } => cmd_eval(g, checkpoint, data),
        Command::Infer { checkpoint, input } => cmd_infer(g, checkpoint, input),
        Command::Gradcheck { draws } => cmd_gradcheck(g, *draws),
        Command::PermsReport { run, top } => cmd_perms_report(g, run, *top),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
