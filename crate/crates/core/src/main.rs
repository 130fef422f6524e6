use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jointdec::jd::{jd1_solve, jd2_solve, monolith_solve, trace_jsonl, JdConfig, JdError, Summary, TraceRecord};
use jointdec::model::{validate, Solution, Status, StructuredProblem};
use jointdec::pooling::{build_pooling_problem, haverly_surrogate, sample_scenarios, PoolingNetwork};
use jointdec::synth::random_instance;

#[derive(Parser)]
#[command(name = "jointdec", version, about = "Joint decomposition for two-stage bilinear programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    Jd1,
    Jd2,
    Monolith,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file.
    Solve {
        #[arg(long, value_enum, default_value = "jd2")]
        alg: Alg,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_nodes: usize,
        /// Write one JSON record per subproblem solve, then the summary.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
        /// Record zero wall times so output is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        instance: PathBuf,
    },
    /// Write a stochastic pooling instance.
    GenPooling {
        /// Sample counts per uncertain parameter, e.g. `2x2`.
        #[arg(long, default_value = "2x2")]
        scenarios: String,
        #[arg(long, default_value = "haverly")]
        topology: String,
        /// Network description to use instead of a named topology.
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a small random instance.
    GenRandom {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: &'a Summary,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_instance(path: &Path) -> Result<StructuredProblem, String> {
    let p = StructuredProblem::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let violations = validate(&p);
    if violations.is_empty() {
        Ok(p)
    } else {
        let report: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        Err(format!("{} is not a valid instance:\n{}", path.display(), report.join("\n")))
    }
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("JD_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).map(Some).ok_or_else(|| format!("JD_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn parse_counts(text: &str) -> Result<Vec<usize>, String> {
    text.split(['x', 'X'])
        .map(|c| c.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| format!("bad scenario counts {text:?}; expected e.g. 2x2")))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn solve(
    alg: Alg,
    eps: f64,
    max_iters: usize,
    max_nodes: usize,
    trace: Option<PathBuf>,
    summary: Option<PathBuf>,
    quiet: bool,
    no_timing: bool,
    instance: PathBuf,
) -> ExitCode {
    if !(eps > 0.0) || !eps.is_finite() {
        return fail(format!("--eps must be positive, got {eps}"));
    }
    let p = match load_instance(&instance) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let base = match alg {
        Alg::Jd2 => JdConfig::jd2(),
        _ => JdConfig::jd1(),
    };
    let cfg = JdConfig { eps, max_iters, max_gbd_iters: max_iters, max_nodes, threads, include_timing: !no_timing, ..base };
    let run: Result<(Solution, Summary, Vec<TraceRecord>), JdError> = match alg {
        Alg::Jd1 => jd1_solve(&p, &cfg).map(|r| (r.solution, r.summary, r.ledger.trace)),
        Alg::Jd2 => jd2_solve(&p, &cfg).map(|r| (r.solution, r.summary, r.ledger.trace)),
        Alg::Monolith => monolith_solve(&p, &cfg).map(|r| (r.solution, r.summary, r.trace)),
    };
    let (solution, sum, records) = match run {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let summary_json = serde_json::to_string(&sum).expect("summary serializes");
    if let Some(path) = &trace {
        let mut text = trace_jsonl(&records);
        text.push_str(&serde_json::to_string(&SummaryLine { summary: &sum }).expect("summary serializes"));
        text.push('\n');
        if let Err(e) = write(path, &text) {
            return fail(e);
        }
    }
    if let Some(path) = &summary {
        if let Err(e) = write(path, &format!("{summary_json}\n")) {
            return fail(e);
        }
    }
    if !quiet {
        println!("{summary_json}");
        if matches!(solution.status, Status::Optimal | Status::Feasible) {
            println!("x0 = {:?}", solution.x0);
        }
    }
    match solution.status {
        Status::Optimal | Status::Infeasible => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    }
}

fn gen_pooling(scenarios: &str, topology: &str, network: Option<PathBuf>, out: &Path) -> ExitCode {
    let net = match network {
        Some(path) => match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| PoolingNetwork::from_json(&t).map_err(|e| e.to_string())) {
            Ok(n) => n,
            Err(e) => return fail(format!("{}: {e}", path.display())),
        },
        None if topology == "haverly" => haverly_surrogate(),
        None => return fail(format!("unknown topology {topology:?}; available: haverly")),
    };
    let counts = match parse_counts(scenarios) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let built = sample_scenarios(&net.uncertain, &counts).and_then(|sc| build_pooling_problem(&net, &sc));
    match built {
        Ok(p) => match write(out, &p.to_json()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Solve { alg, eps, max_iters, max_nodes, trace, summary, quiet, no_timing, instance } => {
            solve(alg, eps, max_iters, max_nodes, trace, summary, quiet, no_timing, instance)
        }
        Command::GenPooling { scenarios, topology, network, out } => gen_pooling(&scenarios, &topology, network, &out),
        Command::GenRandom { seed, out } => match write(&out, &random_instance(seed).to_json()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
    }
}
