//! The `prism` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::config::Config;
use crate::game::{parse_rational, parse_text_with, Profile, UpdateOrder, DEFAULT_DEVIATION_CAP};
use crate::llm::{Client, HttpTransport, MockTransport, Transport};
use crate::montecarlo::{
    estimate_identity, frontier_csv, frontier_points, pareto_frontier, sweep, sweep_csv, SweepGrid,
};
use crate::pipeline::{load_tasks, Aggregator, Backend, LivePipeline};
use crate::theory::{self, golden_table, BoundInputs};

#[derive(Debug, Parser)]
#[command(
    name = "prism",
    version,
    about = "Propose, execute, review and synthesize with analytic and Monte Carlo checks"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print reference values of the closed-form quantities as CSV.
    Theory,
    /// Estimate coverage, selection and quality of the simulated pipeline.
    Simulate(SimulateArgs),
    /// Check or play finite potential games read from a text file.
    #[command(subcommand)]
    Game(GameCommand),
    /// Run the pipeline over tasks and write one JSON line per task.
    Pipeline(PipelineArgs),
    /// Sweep simulated configurations and print the cost/quality frontier.
    Pareto(ParetoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Simulated,
    Llm,
    Mock,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Simulated => Backend::Simulated,
            BackendArg::Llm => Backend::Llm,
            BackendArg::Mock => Backend::MockLlm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregatorArg {
    Prism,
    MajorityVote,
    RandomSelect,
    OracleSelect,
}

impl From<AggregatorArg> for Aggregator {
    fn from(a: AggregatorArg) -> Self {
        match a {
            AggregatorArg::Prism => Aggregator::Prism,
            AggregatorArg::MajorityVote => Aggregator::MajorityVote,
            AggregatorArg::RandomSelect => Aggregator::RandomSelect,
            AggregatorArg::OracleSelect => Aggregator::OracleSelect,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulated tasks per estimate.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorArg>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Run the `[sweep]` grid from the config and print one row per cell.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Subcommand)]
pub enum GameCommand {
    /// Enumerate every unilateral deviation and compare utility and potential changes.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEVIATION_CAP)]
        cap: u64,
    },
    /// Run best-response dynamics to a pure Nash equilibrium.
    Dynamics {
        file: PathBuf,
        /// Starting strategies, comma separated; all zero by default.
        #[arg(long)]
        initial: Option<String>,
        /// Revise players in a seeded random order instead of round robin.
        #[arg(long)]
        random_order: bool,
    },
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// A task directory, a directory of task directories, or a number of simulated tasks.
    #[arg(long)]
    pub tasks: String,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorArg>,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// Simulated tasks per configuration.
    #[arg(long)]
    pub trials: Option<u64>,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(validation)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(runtime),
    }
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Theory => emit(out, stdout, &theory_csv()),
        Command::Simulate(args) => {
            let mut cfg = load_config(cli)?;
            if let Some(a) = args.aggregator {
                cfg.pipeline.aggregator = a.into();
            }
            if let Some(b) = args.backend {
                if Backend::from(b) != Backend::Simulated {
                    return Err(validation("simulate only supports the simulated backend"));
                }
            }
            cfg.pipeline.backend = Backend::Simulated;
            cfg.validate().map_err(validation)?;
            if args.sweep {
                let mut grid = cfg
                    .sweep
                    .clone()
                    .ok_or_else(|| validation("--sweep needs a [sweep] section in the config"))?;
                if let Some(t) = args.trials {
                    grid.trials = t;
                }
                let rows = sweep(&grid, &cfg.base_cell(), &cfg.run_config()).map_err(validation)?;
                return emit(out, stdout, &sweep_csv(&rows));
            }
            let trials = args.trials.unwrap_or(cfg.simulate.trials);
            emit(out, stdout, &simulate_csv(&cfg, trials)?)
        }
        Command::Game(cmd) => emit(out, stdout, &game(cmd, load_config(cli)?.seed)?),
        Command::Pipeline(args) => {
            let mut cfg = load_config(cli)?;
            if let Some(b) = args.backend {
                cfg.pipeline.backend = b.into();
            }
            if let Some(a) = args.aggregator {
                cfg.pipeline.aggregator = a.into();
            }
            cfg.validate().map_err(validation)?;
            emit(out, stdout, &pipeline(&cfg, &args.tasks)?)
        }
        Command::Pareto(args) => {
            let cfg = load_config(cli)?;
            cfg.validate().map_err(validation)?;
            emit(out, stdout, &pareto(&cfg, args.trials)?)
        }
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn theory_csv() -> String {
    let mut out = String::from("name,p,k,eps0,s,rho,value\n");
    for r in golden_table() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            fmt_opt(r.p),
            fmt_opt(r.k),
            fmt_opt(r.eps0),
            fmt_opt(r.s),
            fmt_opt(r.rho),
            r.value
        ));
    }
    out
}

fn simulate_csv(cfg: &Config, trials: u64) -> Result<String, CliError> {
    let world = cfg.world().map_err(validation)?;
    let run = cfg.run_config();
    let est = estimate_identity(&world, &run, trials).map_err(runtime)?;
    let (p, k, eps0, s, r) = (
        cfg.world.p,
        cfg.pipeline.k,
        cfg.world.reviewer_error,
        cfg.pipeline.s,
        cfg.pipeline.r,
    );
    let analytic_coverage = if cfg.world.rho == 0.0 {
        theory::iid_coverage(p, k).ok()
    } else {
        None
    };
    let bounds = if eps0 > 0.0 && run.aggregator == Aggregator::Prism {
        let inputs = BoundInputs::new(p, k, eps0, s);
        (
            theory::performance_bound(&inputs, false).ok(),
            theory::performance_bound(&inputs, true).ok(),
        )
    } else {
        (None, None)
    };
    let mut out = String::from("quantity,estimate,ci_low,ci_high,analytic\n");
    let mut row = |name: &str, e: Option<crate::montecarlo::EstimateWithCI>, analytic: Option<f64>| {
        let (v, lo, hi) = e
            .map(|e| (e.point.to_string(), e.ci_low.to_string(), e.ci_high.to_string()))
            .unwrap_or_default();
        out.push_str(&format!("{name},{v},{lo},{hi},{}\n", fmt_opt(analytic)));
    };
    row("coverage", Some(est.coverage), analytic_coverage);
    row("selection", est.selection, None);
    row("mean_quality", Some(est.mean_quality), None);
    row("bound_untightened", None, bounds.0);
    row("bound_tightened", None, bounds.1);
    row(
        "all_reviewers_reject",
        est.all_reject,
        (r > 0).then(|| eps0.powi(r as i32)),
    );
    out.push_str(&format!(
        "identity_holds,{},,,\ntokens_per_task,{},,,\ntrials,{},,,\n",
        u8::from(est.identity_holds),
        est.counts.mean_tokens(),
        est.counts.n
    ));
    Ok(out)
}

fn game(cmd: &GameCommand, seed: u64) -> Result<String, CliError> {
    let read = |file: &Path| -> Result<_, CliError> {
        let text = fs::read_to_string(file).map_err(|e| validation(format!("{}: {e}", file.display())))?;
        parse_text_with(&text, parse_rational).map_err(|e| validation(format!("{}: {e}", file.display())))
    };
    match cmd {
        GameCommand::Verify { file, cap } => {
            let g = read(file)?;
            let report = g.verify_exact_potential(*cap).map_err(validation)?;
            Ok(format!(
                "deviations_checked,max_discrepancy,passed\n{},{},{}\n",
                report.deviations_checked,
                report.max_discrepancy,
                report.passed_exact()
            ))
        }
        GameCommand::Dynamics {
            file,
            initial,
            random_order,
        } => {
            let g = read(file)?;
            let start = match initial {
                Some(s) => Profile::new(
                    s.split(',')
                        .map(|x| x.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| validation(format!("bad --initial `{s}`")))?,
                ),
                None => Profile::new(vec![0; g.k_players()]),
            };
            let order = if *random_order {
                UpdateOrder::Random { seed }
            } else {
                UpdateOrder::RoundRobin
            };
            let trace = g.best_response_dynamics(start, order).map_err(validation)?;
            let potential = g.potential(&trace.terminal).map_err(runtime)?;
            let steps: Vec<_> = trace
                .steps
                .iter()
                .map(|s| json!({"player": s.player, "from": s.from, "to": s.to, "potential": s.potential.to_string()}))
                .collect();
            let body = json!({
                "steps": steps,
                "terminal": trace.terminal.choice,
                "potential": potential.to_string(),
                "is_nash": g.is_nash(&trace.terminal).map_err(runtime)?,
            });
            Ok(format!("{body}\n"))
        }
    }
}

fn pipeline(cfg: &Config, tasks: &str) -> Result<String, CliError> {
    let run = cfg.run_config();
    let lines: Vec<String> = if let Ok(count) = tasks.parse::<u64>() {
        if run.backend != Backend::Simulated {
            return Err(validation(
                "a task count needs the simulated backend; pass a task directory instead",
            ));
        }
        let world = cfg.world().map_err(validation)?;
        (0..count)
            .into_par_iter()
            .map(|i| world.run(&run, i).map(|r| r.summary_json().to_string()))
            .collect::<Result<_, _>>()
            .map_err(runtime)?
    } else {
        if run.backend == Backend::Simulated {
            return Err(validation("the simulated backend takes a task count, not a directory"));
        }
        let dir = Path::new(tasks);
        if !dir.is_dir() {
            return Err(validation(format!("task directory {} does not exist", dir.display())));
        }
        let tasks = load_tasks(dir).map_err(validation)?;
        let mut endpoint = cfg.endpoint().map_err(validation)?;
        let transport: Arc<dyn Transport> = match run.backend {
            Backend::MockLlm => {
                let path = cfg
                    .transcript_path()
                    .ok_or_else(|| validation("the mock backend needs llm.transcript in the config"))?;
                Arc::new(MockTransport::from_file(&path).map_err(validation)?)
            }
            _ => {
                endpoint = endpoint.with_env().map_err(validation)?;
                Arc::new(HttpTransport::new(&endpoint).map_err(validation)?)
            }
        };
        let client = Arc::new(Client::new(endpoint, transport));
        let mut live = LivePipeline::new(client, run);
        live.workers = cfg.exec.workers;
        tasks
            .iter()
            .enumerate()
            .map(|(i, t)| live.run(t, i as u64).map(|r| r.summary_json().to_string()))
            .collect::<Result<_, _>>()
            .map_err(runtime)?
    };
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

/// PRISM over K, R, S plus vote-only baselines at K = 1, 3, 5.
pub fn default_pareto_grids(trials: u64) -> Vec<SweepGrid> {
    vec![
        SweepGrid {
            k: vec![1, 2, 3],
            r: vec![0, 1, 2],
            s: vec![1, 3],
            aggregator: vec![Aggregator::Prism],
            trials,
            ..SweepGrid::default()
        },
        SweepGrid {
            k: vec![1, 3, 5],
            r: vec![0],
            s: vec![1],
            aggregator: vec![Aggregator::MajorityVote],
            trials,
            ..SweepGrid::default()
        },
    ]
}

fn pareto(cfg: &Config, trials: Option<u64>) -> Result<String, CliError> {
    let grids = match &cfg.sweep {
        Some(g) => {
            let mut g = g.clone();
            if let Some(t) = trials {
                g.trials = t;
            }
            vec![g]
        }
        None => default_pareto_grids(trials.unwrap_or(20_000)),
    };
    let mut rows = Vec::new();
    for grid in &grids {
        rows.extend(sweep(grid, &cfg.base_cell(), &cfg.run_config()).map_err(validation)?);
    }
    Ok(frontier_csv(&pareto_frontier(&frontier_points(&rows))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn theory_prints_golden_csv() {
        let (code, out, _) = run_args(&["prism", "theory"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("name,p,k,eps0,s,rho,value\n"));
        assert!(out.contains("iid_coverage,0.4,3,,,,0.784"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["prism", "--bogus", "theory"]).0, 1);
        assert_eq!(run_args(&["prism"]).0, 1);
        let (code, _, err) = run_args(&["prism", "--config", "/no/such.toml", "simulate"]);
        assert_eq!(code, 1);
        assert!(err.contains("/no/such.toml"));
    }

    #[test]
    fn help_and_version_exit_zero() {
        let (code, out, _) = run_args(&["prism", "--help"]);
        assert_eq!(code, 0);
        for sub in ["theory", "simulate", "game", "pipeline", "pareto"] {
            assert!(out.contains(sub), "{sub}");
        }
        let (code, out, _) = run_args(&["prism", "--version"]);
        assert_eq!(code, 0);
        assert!(out.contains(env!("CARGO_PKG_VERSION")));
    }
}
