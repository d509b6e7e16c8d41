use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccbm_cli::config::{self, parse_assignment};
use ccbm_cli::{
    cmd_enumerate, cmd_eval, cmd_extract_keyphrases, cmd_predict, cmd_run, cmd_simulate, CliError, EnumerateArgs,
    EvalArgs, PredictArgs, RunOptions, RunStatus, SimulateArgs,
};
use clap::{Args, Parser, Subcommand};
use toml::Value;

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "ccbm", version, about = "Bayesian concept bottleneck models with an LLM or pool oracle")]
struct Cli {
    /// More log output (repeat for debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample concept sets and write the run directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from the run directory's checkpoint.
        #[arg(long)]
        resume: bool,
        #[arg(long, hide = true)]
        halt_after_epoch: Option<usize>,
    },
    /// Extract keyphrases and print the ranked keyphrase summary.
    ExtractKeyphrases {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score new observations with a finished run.
    Predict {
        #[arg(long)]
        run_dir: PathBuf,
        /// Observations to score, JSON lines.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to <run_dir>/predictions.jsonl.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Concept recovery and predictive metrics for a run.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output of `predict` on labelled observations.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with a known label model.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; the built-in clinical-notes design otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        n_test: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact posterior over all k-subsets of a small pool.
    Enumerate {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        no_intercept: bool,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// `pool` or `llm`.
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    pool: Option<PathBuf>,
    /// uniform, exact-sampled or exact-top.
    #[arg(long)]
    pool_style: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warm_start_epochs: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    keep_last: Option<usize>,
    /// single_try or multi_try.
    #[arg(long)]
    mode: Option<String>,
    /// Any config key, e.g. `--set sampler.solver.max_iterations=50`. Applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn absolute(p: &Path) -> Result<String, CliError> {
    std::path::absolute(p)
        .map(|p| p.display().to_string())
        .map_err(|e| CliError::io(p, e))
}

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>, CliError> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let paths = [
            ("dataset", &self.dataset),
            ("output_dir", &self.output_dir),
            ("cache_dir", &self.cache_dir),
            ("truth", &self.truth),
        ];
        for (key, p) in paths {
            if let Some(p) = p {
                out.push((key.into(), Value::String(absolute(p)?)));
            }
        }
        if let Some(kind) = &self.oracle {
            out.push(("oracle.kind".into(), Value::String(kind.clone())));
        }
        if let Some(p) = &self.pool {
            out.push(("oracle.pool".into(), Value::String(absolute(p)?)));
        }
        let strings = [
            ("oracle.style", &self.pool_style),
            ("oracle.endpoint", &self.endpoint),
            ("oracle.model", &self.model),
            ("sampler.mode", &self.mode),
        ];
        for (key, v) in strings {
            if let Some(v) = v {
                out.push((key.into(), Value::String(v.clone())));
            }
        }
        let counts = [
            ("sampler.k", self.k),
            ("sampler.t_epochs", self.epochs),
            ("sampler.m_candidates", self.candidates),
            ("sampler.warm_start_epochs", self.warm_start_epochs),
            ("sampler.burn_in", self.burn_in),
            ("sampler.keep_last", self.keep_last),
        ];
        for (key, v) in counts {
            if let Some(v) = v {
                out.push((key.into(), int(v)));
            }
        }
        if let Some(v) = self.omega {
            out.push(("sampler.omega".into(), Value::Float(v)));
        }
        if let Some(v) = self.gamma {
            out.push(("sampler.gamma".into(), Value::Float(v)));
        }
        if let Some(v) = self.seed {
            let v = i64::try_from(v).map_err(|_| CliError::Config(format!("seed {v} is too large")))?;
            out.push(("sampler.seed".into(), Value::Integer(v)));
        }
        for raw in &self.set {
            out.push(parse_assignment(raw)?);
        }
        Ok(out)
    }

    fn load(&self) -> Result<config::RunConfig, CliError> {
        config::load(self.config.as_deref(), &self.overrides()?)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, resume, halt_after_epoch } => {
            let cfg = config.load()?;
            let summary = cmd_run(&cfg, &RunOptions { resume, halt_after_epoch })?;
            let m = &summary.manifest;
            let status = match summary.status {
                RunStatus::Completed => "completed",
                RunStatus::Halted => "halted",
                RunStatus::Failed => "failed",
            };
            say!(
                "{status}: {} epochs, {} posterior samples, acceptance rate {}, {} annotation calls -> {}",
                m.next_epoch,
                m.posterior_samples,
                m.acceptance_rate.map_or("n/a".to_string(), |r| format!("{r:.3}")),
                m.oracle_calls.annotation_calls,
                cfg.output_dir.display()
            );
        }
        Command::ExtractKeyphrases { config } => {
            let cfg = config.load()?;
            let bags = cmd_extract_keyphrases(&cfg)?;
            say!("{} keyphrase bags -> {}", bags.len(), cfg.output_dir.join("reports").display());
        }
        Command::Predict { run_dir, input, output } => {
            let scored = cmd_predict(&PredictArgs { run_dir, input, output })?;
            let flagged = scored.iter().filter(|s| s.flagged).count();
            say!("{} observations scored, {flagged} flagged", scored.len() - flagged);
        }
        Command::Eval { run_dir, truth, predictions } => {
            let report = cmd_eval(&EvalArgs { run_dir, truth, predictions })?;
            say!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Simulate { out, spec, n, n_test, seed } => {
            let spec = cmd_simulate(&SimulateArgs { out: out.clone(), spec, n, n_test, seed })?;
            say!("{} training and {n_test} test observations -> {}", spec.n, out.display());
        }
        Command::Enumerate { pool, dataset, k, gamma, no_intercept, out } => {
            let report = cmd_enumerate(&EnumerateArgs {
                pool,
                dataset,
                k,
                gamma,
                include_intercept: !no_intercept,
                out: out.clone(),
            })?;
            if out.is_none() {
                say!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Oracle { checkpoint: Some(cp), .. } = &e {
                eprintln!("resume with --resume; checkpoint at {}", cp.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
