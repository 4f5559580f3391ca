//! `afidaf`: summarize, verify, train and evaluate dual-domain networks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afidaf_core::container::WeightFile;
use afidaf_core::models::{Model, ModelConfig, Variant};
use afidaf_core::train::{evaluate, train_loop, DataSpec, RunConfig, SyntheticDataset};
use afidaf_core::verify::{self, Suite};
use afidaf_core::Error;
use anyhow::Context;
use clap::{ArgGroup, Parser, Subcommand};

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

/// Batch size used for whole-dataset evaluation by `train` and `eval`.
const EVAL_BATCH: usize = 64;

#[derive(Parser)]
#[command(name = "afidaf", version, about = "Dual-domain token-mixing networks")]
#[command(after_help = "Exit codes: 0 ok, 1 verification failure, 2 bad config or arguments, \
3 I/O or weight-file error, 4 training diverged.\n\
Environment: AFIDAF_THREADS caps the worker thread count.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-stage output shapes, parameter counts and FLOPs.
    #[command(group(ArgGroup::new("model").required(true).args(["variant", "config"])))]
    Summarize {
        /// Preset name: afidaf-t, afidaf, idaf, aff, hafidaf or narrow.
        #[arg(long)]
        variant: Option<String>,
        /// Model config JSON (or a training run config).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run self-check suites against reference implementations.
    Verify {
        #[arg(long, default_value = "all", value_parser = Suite::NAMES)]
        suite: String,
    },
    /// Train on synthetic data; writes config.json, metrics.csv and weights.afwt.
    Train {
        /// Training run config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the init and shuffling seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate saved weights on a synthetic dataset.
    Eval {
        /// Weight file written by `train`.
        #[arg(long)]
        weights: PathBuf,
        /// Data spec, e.g. synthetic:classes=4,size=32,per_class=64,seed=0,task=mixed.
        #[arg(long)]
        data: String,
        /// Model or run config; defaults to config.json next to the weights.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// An error tagged with the process exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(Error::Io(_) | Error::Format(_) | Error::DType { .. }) => EXIT_IO,
            Some(Error::Divergence(_) | Error::Numeric(_)) => EXIT_DIVERGED,
            _ if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self { code, err }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())).into())
}

/// Accepts either a bare model config or a training run config.
fn load_model_config(path: &Path) -> Result<ModelConfig, Failure> {
    let text = read(path)?;
    let parsed = ModelConfig::from_json(&text).or_else(|model_err| {
        RunConfig::from_json(&text)
            .and_then(|run| run.model_config())
            .map_err(|_| model_err)
    });
    Ok(parsed.with_context(|| format!("reading {}", path.display()))?)
}

fn summarize(variant: Option<String>, config: Option<PathBuf>) -> Outcome {
    let cfg = match (variant, config) {
        (Some(v), _) => ModelConfig::preset(v.parse::<Variant>()?)?,
        (None, Some(path)) => load_model_config(&path)?,
        (None, None) => unreachable!("clap requires one of --variant/--config"),
    };
    let model = Model::<f32>::build(&cfg, 0)?;
    let [c, h, w] = cfg.input;
    let shapes = model.shape_schedule()?;
    let flops = model.count_flops(h, w)?;
    let params = model.param_breakdown();
    println!(
        "model {} (input {c}x{h}x{w}, {} classes)",
        cfg.variant.name(),
        cfg.num_classes
    );
    println!("{:<8} {:>14} {:>12} {:>10}", "section", "output", "params", "GFLOPs");
    for ((shape, (_, p)), (_, f)) in shapes.iter().zip(&params).zip(&flops.sections) {
        let dims: Vec<String> = shape.shape.iter().map(|d| d.to_string()).collect();
        println!(
            "{:<8} {:>14} {:>12} {:>10.4}",
            shape.name,
            dims.join("x"),
            p,
            f.total() as f64 / 1e9
        );
    }
    let total = flops.total();
    let n = model.count_params();
    println!("total params {n} ({:.2}M)", n as f64 / 1e6);
    println!(
        "total FLOPs {:.3}G ({:.3} GMACs, spectral {:.3}G)",
        total.total() as f64 / 1e9,
        total.total() as f64 / 2e9,
        total.spectral as f64 / 1e9
    );
    Ok(())
}

fn run_verify(suite: &str) -> Outcome {
    let checks = verify::run(suite.parse()?);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    if failed.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = failed.iter().map(|c| format!("{}/{}", c.suite, c.name)).collect();
    Err(Failure { code: EXIT_VERIFY, err: anyhow::anyhow!("failed checks: {}", names.join(", ")) })
}

fn train(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let mut run = RunConfig::from_json(&read(config)?).with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = seed {
        run.train.seed = s;
    }
    let run = run.resolved()?;
    let model_cfg = run.model_config()?;
    let spec = run.data_spec()?;
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;

    let data = SyntheticDataset::<f32>::generate(&spec)?;
    let mut model = Model::<f32>::build(&model_cfg, run.train.seed)?;
    println!(
        "training {} ({} params) on {spec} for {} steps",
        model_cfg.variant.name(),
        model.count_params(),
        run.train.total_steps(data.len())
    );
    let history = train_loop(&mut model, &data, &run.train, |s| {
        if s.step % 20 == 0 {
            println!("step {:>4}  lr {:.3e}  loss {:.4}  acc {:.3}", s.step, s.lr, s.loss, s.acc);
        }
    })?;
    for e in &history.epochs {
        println!("epoch {:>3}  loss {:.4}  acc {:.3}", e.epoch, e.loss, e.acc);
    }

    write(&out.join("config.json"), &run.to_json())?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    write(&out.join("metrics.csv"), &String::from_utf8(csv).expect("csv is utf-8"))?;
    WeightFile::from_store(&model.params).save(out.join("weights.afwt"))?;

    let eval = evaluate(&model, &data, EVAL_BATCH)?;
    println!("final train loss {:.6} accuracy {:.6}", eval.loss, eval.acc);
    Ok(())
}

fn eval(weights: &Path, data: &str, config: Option<PathBuf>) -> Outcome {
    let spec: DataSpec = data.parse()?;
    let config = config.unwrap_or_else(|| weights.with_file_name("config.json"));
    let cfg = load_model_config(&config)?;
    let file = WeightFile::load(weights)?;
    let mut model = Model::<f32>::build(&cfg, 0)?;
    file.apply_to(&mut model.params)?;
    let data = SyntheticDataset::<f32>::generate(&spec)?;
    let e = evaluate(&model, &data, EVAL_BATCH)?;
    println!("eval loss {:.6} accuracy {:.6}", e.loss, e.acc);
    Ok(())
}

fn configure_threads() -> Outcome {
    let Ok(v) = std::env::var("AFIDAF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("AFIDAF_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Summarize { variant, config } => summarize(variant, config),
        Command::Verify { suite } => run_verify(&suite),
        Command::Train { config, out, seed } => train(&config, &out, seed),
        Command::Eval { weights, data, config } => eval(&weights, &data, config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
