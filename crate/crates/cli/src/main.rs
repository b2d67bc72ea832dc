mod commands;
mod config;
mod manifest;
mod presets;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use manifest::{Manifest, Outputs, MANIFEST};
use presets::{Figure, PresetOptions, ScoreChoice};
use report::Report;

const DEFAULT_OUT: &str = "lmclab-out";

#[derive(Parser)]
#[command(name = "lmclab", version, about = "Langevin Monte Carlo on Gaussian mixtures with estimated scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of chains and diagnose every horizon.
    Simulate(RunArgs),
    /// Train a score network and write its weights.
    TrainScore(RunArgs),
    /// Overlaps, overlap graph, log-Sobolev certificate, and multiscale plan.
    CertifyLsi(RunArgs),
    /// Recommended horizon, step size, score accuracy, and data size.
    Schedule(RunArgs),
    /// Diagnose an endpoint CSV against the configured target.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        endpoints: PathBuf,
    },
    /// Run one of the built-in reference experiments.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        /// Score used by the chains.
        #[arg(long, value_enum)]
        score: Option<ScoreChoice>,
        /// Replace the horizon list by a single horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Full-size training run.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare the artifacts in a run directory with its manifest.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a built-in configuration instead of a file.
    #[arg(long, value_enum)]
    preset: Option<Figure>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; otherwise the config `out`, then LMCLAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail with exit code 4 when a configured check does not hold.
    #[arg(long)]
    check: bool,
    /// Worker threads for the chains; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

/// A failure with a specific exit code.
#[derive(Debug)]
struct ExitError {
    code: u8,
    message: String,
}

impl std::fmt::Display for ExitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ExitError {}

fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    ExitError { code, message: message.into() }.into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<ExitError>() {
        return e.code;
    }
    for cause in err.chain() {
        if let Some(lmclab::Error::TrainingDiverged { .. } | lmclab::Error::NonFinite(_)) = cause.downcast_ref() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let loaded = match (&args.config, args.preset) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(fig)) => presets::preset(fig, PresetOptions::default()),
        (None, None) => Err(anyhow::anyhow!("give --config or --preset")),
    };
    let mut cfg = loaded.map_err(|e| fail(2, format!("{e:#}")))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.validate().map_err(|e| fail(2, format!("{e:#}")))?;
    }
    Ok(cfg)
}

fn out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("LMCLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn threads(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => {
            let cfg = load_config(&args)?;
            execute("simulate", cfg, args.out.as_deref(), args.check, threads(args.threads))
        }
        Command::Reproduce { figure, score, horizon, full, seed, out, check, threads: t } => {
            let mut cfg = presets::preset(figure, PresetOptions { score, horizon, full })?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            execute("simulate", cfg, out.as_deref(), check, threads(t))
        }
        Command::TrainScore(args) => {
            let cfg = load_config(&args)?;
            let mut out = Outputs::create(&out_dir(args.out.as_deref(), &cfg))?;
            let report = commands::train_score(&cfg, &mut out)?;
            finish("train-score", &cfg, report, out, args.check)
        }
        Command::CertifyLsi(args) => {
            let cfg = load_config(&args)?;
            let out = Outputs::create(&out_dir(args.out.as_deref(), &cfg))?;
            let report = commands::certify_lsi(&cfg)?;
            finish("certify-lsi", &cfg, report, out, args.check)
        }
        Command::Schedule(args) => {
            let cfg = load_config(&args)?;
            let out = Outputs::create(&out_dir(args.out.as_deref(), &cfg))?;
            let report = commands::schedule(&cfg)?;
            finish("schedule", &cfg, report, out, args.check)
        }
        Command::Diagnose { run: args, endpoints } => {
            let cfg = load_config(&args)?;
            let mut out = Outputs::create(&out_dir(args.out.as_deref(), &cfg))?;
            let report = commands::diagnose(&cfg, &endpoints, &mut out)?;
            finish("diagnose", &cfg, report, out, args.check)
        }
        Command::Verify { dir } => {
            let manifest = Manifest::load(&dir.join(MANIFEST))?;
            let bad = manifest.mismatches(&dir)?;
            if bad.is_empty() {
                println!("{} artifacts match {}", manifest.artifacts.len(), dir.join(MANIFEST).display());
                Ok(())
            } else {
                Err(fail(4, format!("artifacts differ from the manifest: {}", bad.join(", "))))
            }
        }
    }
}

fn execute(command: &str, cfg: ExperimentConfig, out: Option<&Path>, check: bool, threads: usize) -> Result<()> {
    let mut outputs = Outputs::create(&out_dir(out, &cfg))?;
    let outcome = run::simulate(&cfg, threads, &mut outputs)?;
    let diverged = outcome.diverged_chains;
    finish(command, &cfg, outcome.report, outputs, check)?;
    if diverged > 0 {
        return Err(fail(3, format!("{diverged} chain(s) diverged")));
    }
    Ok(())
}

/// Evaluates checks, writes `report.txt`, the resolved config, and the
/// manifest, and prints the report.
fn finish(command: &str, cfg: &ExperimentConfig, mut report: Report, mut out: Outputs, check: bool) -> Result<()> {
    let failures = evaluate_checks(cfg, &mut report);
    out.write("report.txt", report.text())?;
    let mut resolved = cfg.clone();
    resolved.out = None;
    let dir = out.dir().to_path_buf();
    out.finish(command, cfg.seed, &resolved.to_toml())?;
    print!("{}", report.text());
    println!("\nwrote {}", dir.display());
    if check && !failures.is_empty() {
        return Err(fail(4, format!("checks failed: {}", failures.join("; "))));
    }
    Ok(())
}

fn evaluate_checks(cfg: &ExperimentConfig, report: &mut Report) -> Vec<String> {
    if cfg.check.is_empty() {
        return Vec::new();
    }
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for c in &cfg.check {
        let Some(v) = report.get(&c.metric) else {
            failures.push(format!("{} was not reported", c.metric));
            lines.push((c.metric.clone(), "FAIL (not reported)".to_string()));
            continue;
        };
        let mut conds = Vec::new();
        if let Some(max) = c.max {
            conds.push((v <= max, format!("{v} <= {max}")));
        }
        if let Some(min) = c.min {
            conds.push((v >= min, format!("{v} >= {min}")));
        }
        if let Some(other) = &c.at_most {
            match report.get(other) {
                Some(w) => conds.push((v <= w + c.offset, format!("{v} <= {other} ({w}) + {}", c.offset))),
                None => conds.push((false, format!("{other} was not reported"))),
            }
        }
        for (ok, text) in conds {
            if !ok {
                failures.push(format!("{}: {text}", c.metric));
            }
            lines.push((c.metric.clone(), format!("{} {text}", if ok { "PASS" } else { "FAIL" })));
        }
    }
    report.section("checks");
    for (k, v) in lines {
        report.line(&k, v);
    }
    failures
}
