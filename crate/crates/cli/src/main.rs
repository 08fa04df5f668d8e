use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pfchain::chain::ChainedPfModel;
use pfchain::config::RunConfig;
use pfchain::eval::{read_metric_csv, run_benchmark, timing_report, write_metric_csv, write_timing_csv};
use pfchain::learner::{train, TrainOutput};
use pfchain::testbench::Problem;
use pfchain::Error;

/// Exit status for rejected points (check only).
const EXIT_REJECTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "pfchain", version, about = "Chained Gaussian-process Pareto front models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write `model.pf` and `trace.csv` to the output directory.
    Train { config: PathBuf },
    /// Test whether a metric vector lies on a model's front.
    Check {
        model: PathBuf,
        #[arg(required = true, num_args = 1.., allow_negative_numbers = true)]
        f: Vec<f64>,
    },
    /// Sample points from a model's front as CSV.
    Generate {
        model: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Repeated seeded runs; writes `summary.csv`, `runs.csv` and `timing.csv`.
    Benchmark { config: PathBuf },
    /// True-front samples of a problem, or distances of given points to it.
    Oracle {
        problem: String,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        /// CSV of points (header f1..fm) to measure instead of sampling.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// A failure carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::UnknownProblem { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_RUNTIME, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Check { model, f } => cmd_check(&model, &f),
        Command::Generate { model, n, seed, out } => cmd_generate(&model, n, seed, out.as_deref()),
        Command::Benchmark { config } => cmd_benchmark(&config),
        Command::Oracle { problem, n, seed, points, out } => {
            cmd_oracle(&problem, n, seed, points.as_deref(), out.as_deref())
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_model(path: &Path) -> Result<ChainedPfModel, Failure> {
    ChainedPfModel::load(path).map_err(|e| Failure { code: EXIT_RUNTIME, message: format!("{}: {e}", path.display()) })
}

fn write_outputs(dir: &Path, out: &TrainOutput, suffix: &str) -> Result<(PathBuf, PathBuf), Failure> {
    let model_path = dir.join(format!("model{suffix}.pf"));
    let trace_path = dir.join(format!("trace{suffix}.csv"));
    out.model.save(&model_path)?;
    out.trace.write_csv(BufWriter::new(File::create(&trace_path)?))?;
    Ok((model_path, trace_path))
}

fn cmd_train(config: &Path) -> CmdResult {
    let cfg = RunConfig::load(config)?;
    let p = cfg.problem()?;
    fs::create_dir_all(&cfg.output_dir)?;
    log::info!("training {} on {} (n_max = {}, seed = {})", cfg.method, p.name(), cfg.train.n_max, cfg.seed);
    let start = Instant::now();
    match train(&p, &cfg.train) {
        Ok(out) => {
            let (model_path, _) = write_outputs(&cfg.output_dir, &out, "")?;
            let points: Vec<String> = out.training_sets.iter().map(|s| s.len().to_string()).collect();
            println!(
                "levels={} points=[{}] eq_tol={:.3e} elapsed={:.3}s model={}",
                out.model.levels().len(),
                points.join(","),
                out.model.eq_tol(),
                start.elapsed().as_secs_f64(),
                model_path.display()
            );
            Ok(0)
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                let (model_path, _) = write_outputs(&cfg.output_dir, partial, ".partial")?;
                log::warn!("partial model written to {}", model_path.display());
            }
            Err(failure.error.into())
        }
    }
}

fn cmd_check(model: &Path, f: &[f64]) -> CmdResult {
    let model = load_model(model)?;
    if f.len() != model.m() {
        return Err(Failure::usage(format!("model has {} metrics, got {} values", model.m(), f.len())));
    }
    let verdict = model.check_membership(f).map_err(|e| Failure::usage(e.to_string()))?;
    match verdict.reject_level {
        None => {
            println!("on-front");
            Ok(0)
        }
        Some(level) => {
            println!("rejected level={level}");
            Ok(EXIT_REJECTED)
        }
    }
}

fn cmd_generate(model: &Path, n: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    if n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let model = load_model(model)?;
    let set = model.generate(n, seed)?;
    write_metric_csv(output(out)?, &set)?;
    Ok(0)
}

fn cmd_benchmark(config: &Path) -> CmdResult {
    let cfg = RunConfig::load(config)?;
    let p = cfg.problem()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let runs = cfg.eval.methods.len() * cfg.eval.n_max.len() * cfg.eval.repeats;
    log::info!("benchmark on {}: {runs} runs", p.name());
    let start = Instant::now();
    let summary = run_benchmark(&p, &cfg.train, &cfg.eval)?;
    summary.write_summary_csv(BufWriter::new(File::create(cfg.output_dir.join("summary.csv"))?))?;
    summary.write_runs_csv(BufWriter::new(File::create(cfg.output_dir.join("runs.csv"))?))?;
    write_timing_csv(
        BufWriter::new(File::create(cfg.output_dir.join("timing.csv"))?),
        &timing_report(&summary.reports),
    )?;
    print!("{summary}");
    log::info!("finished in {:.1}s", start.elapsed().as_secs_f64());
    for f in &summary.failures {
        log::warn!("{} n_max={} seed={}: {}", f.method, f.n_max, f.seed, f.error);
    }
    summary.check()?;
    Ok(0)
}

fn cmd_oracle(problem: &str, n: usize, seed: u64, points: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let p = Problem::by_name(problem)?;
    let set = match points {
        Some(path) => read_metric_csv(File::open(path)?)?,
        None => {
            if n == 0 {
                return Err(Failure::usage("--n must be at least 1"));
            }
            p.true_pf_sample(n, seed)?
        }
    };
    if set.dim().is_some_and(|d| d != p.m()) {
        return Err(Failure::usage(format!(
            "{} has {} metrics, points have {}",
            p.name(),
            p.m(),
            set.dim().unwrap_or(0)
        )));
    }
    let mut w = output(out)?;
    let header: Vec<String> = (1..=p.m()).map(|i| format!("f{i}")).chain(["distance".to_string()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for f in set.iter() {
        let d = p.distance_to_true_pf(f)?;
        let row: Vec<String> = f.as_slice().iter().chain([&d]).map(f64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(0)
}
