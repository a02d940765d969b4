use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde_json::json;

use symquant::converge::{default_base_sizes, run, ConvergeConfig, UnboundedStatus, Verdict};
use symquant::corpus;
use symquant::engine::{EngineConfig, EngineStats, InductiveInvariant, TraceCex};
use symquant::ground::{build_instance, SizeAssignment};
use symquant::oracle::{bfs_reach, check_invariant_explicit, find_violation, replay, InvariantCheck, Replay};
use symquant::solver::SolverConfig;
use symquant::spec::{load_spec, ProtocolSpec};

const EXIT_SAFE: u8 = 0;
const EXIT_VIOLATED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;

#[derive(Parser)]
#[command(name = "symquant", version, about = "Safety verification of parameterized protocols")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Cmd {
    /// Prove or refute the safety property of a protocol.
    Verify(VerifyArgs),
    /// List the bundled protocols, or write one to standard output.
    Corpus {
        /// Name of a bundled protocol to print.
        name: Option<String>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Spec file, or `corpus:<name>` for a bundled protocol.
    spec: String,
    /// Base sizes, for example `node=3,value=3`.
    #[arg(long)]
    size: Option<String>,
    /// Largest instance in ground state variables.
    #[arg(long)]
    max_vars: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long, default_value_t = symquant::engine::DEFAULT_MAX_FRAMES)]
    max_frames: usize,
    #[arg(long)]
    max_ctis: Option<u64>,
    /// Solver program and arguments, for example "z3 -in".
    #[arg(long, env = "SYMQUANT_SOLVER_CMD")]
    solver_cmd: Option<String>,
    #[arg(long, default_value_t = 1)]
    solver_seed: u64,
    /// Write the certificate here.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Write a JSON run summary here.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Write the counterexample here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the unbounded induction check here.
    #[arg(long)]
    emit_unbounded: Option<PathBuf>,
    /// Run the unbounded induction check with the solver.
    #[arg(long)]
    check_unbounded: bool,
    #[arg(long, default_value_t = 60)]
    unbounded_timeout: u64,
    /// Cross-check the result by explicit-state search on small instances.
    #[arg(long)]
    oracle_check: bool,
    #[arg(long)]
    enable_antecedent_reduction: bool,
    #[arg(long)]
    enable_epr_reduction: bool,
    /// Re-check every blocking query under random symmetries.
    #[arg(long)]
    orbit_audit: bool,
    /// Seed the minimal-core search with the solver's unsat core.
    #[arg(long)]
    core_seeding: bool,
    /// Keep every lemma of the converged frame.
    #[arg(long)]
    no_minimize: bool,
    /// Dump solver transcripts into this directory.
    #[arg(long)]
    log_smt: Option<PathBuf>,
    /// Test hook: `drop-guard=<action>` replaces that action's guard by true.
    #[arg(long, hide = true)]
    mutate: Option<String>,
}

enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn,symquant=info",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let code = match cli.command {
        Cmd::Corpus { name } => corpus_cmd(name.as_deref()),
        Cmd::Verify(args) => verify(&args),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_EXHAUSTED)
        }
    }
}

fn corpus_cmd(name: Option<&str>) -> Result<u8, Failure> {
    match name {
        None => {
            for b in corpus::all() {
                let sizes = SizeAssignment::from_pairs(b.base_sizes.iter().copied());
                println!("{}\t{sizes}", b.name);
            }
        }
        Some(n) => {
            let b = corpus::get(n).ok_or_else(|| usage(anyhow!("no bundled protocol named `{n}`")))?;
            print!("{}", b.text);
        }
    }
    Ok(EXIT_SAFE)
}

/// Spec text plus the base sizes shipped with it, if bundled.
fn read_spec(arg: &str) -> Result<(String, Option<SizeAssignment>), Failure> {
    if let Some(name) = arg.strip_prefix("corpus:") {
        let b = corpus::get(name).ok_or_else(|| usage(anyhow!("no bundled protocol named `{name}`")))?;
        return Ok((
            b.text.to_string(),
            Some(SizeAssignment::from_pairs(b.base_sizes.iter().copied())),
        ));
    }
    let text = std::fs::read_to_string(arg)
        .with_context(|| format!("reading {arg}"))
        .map_err(usage)?;
    Ok((text, None))
}

fn apply_mutation(spec: ProtocolSpec, m: &str) -> Result<ProtocolSpec, Failure> {
    let action = m
        .strip_prefix("drop-guard=")
        .ok_or_else(|| usage(anyhow!("unknown mutation `{m}`")))?;
    spec.drop_guard(action)
        .ok_or_else(|| usage(anyhow!("no action named `{action}`")))
}

fn verify(args: &VerifyArgs) -> Result<u8, Failure> {
    let started = Instant::now();
    let (text, bundled_sizes) = read_spec(&args.spec)?;
    let mut spec = load_spec(&text).map_err(|e| usage(anyhow!("{}: {e}", args.spec)))?;
    if let Some(m) = &args.mutate {
        spec = apply_mutation(spec, m)?;
    }
    let sizes = match &args.size {
        Some(s) => SizeAssignment::parse(s).map_err(|e| usage(e.into()))?,
        None => bundled_sizes.unwrap_or_else(|| default_base_sizes(&spec)),
    };
    let solver_cmd = args
        .solver_cmd
        .as_deref()
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| {
            usage(anyhow!(
                "no solver configured: pass --solver-cmd or set SYMQUANT_SOLVER_CMD"
            ))
        })?;
    // Catch size errors before any solver is started.
    build_instance(&spec, &sizes).map_err(|e| usage(e.into()))?;

    let mut solver = SolverConfig::new(solver_cmd);
    solver.seed = Some(args.solver_seed);
    solver.log_dir = args.log_smt.clone();
    solver.core_seeding = args.core_seeding;
    let mut engine = EngineConfig::new(solver);
    engine.max_frames = args.max_frames;
    engine.max_ctis = args.max_ctis;
    engine.deadline = args.timeout.map(|s| started + Duration::from_secs(s));
    engine.antecedent_reduction = args.enable_antecedent_reduction;
    engine.epr_reduction = args.enable_epr_reduction;
    engine.orbit_audit = args.orbit_audit;
    engine.audit_seed = args.solver_seed;
    engine.minimize_invariant = !args.no_minimize;
    let mut cfg = ConvergeConfig::new(engine);
    if let Some(m) = args.max_vars {
        cfg.max_vars = m;
    }
    cfg.emit_unbounded = args.emit_unbounded.clone();
    cfg.check_unbounded = args.check_unbounded;
    cfg.unbounded_timeout = Duration::from_secs(args.unbounded_timeout);

    info!("verifying {} from {sizes}", args.spec);
    let verdict = run(&spec, &sizes, &cfg)?;
    let wall = started.elapsed();
    let code = match &verdict {
        Verdict::Safe {
            invariant,
            cutoff,
            history,
            unbounded,
            stats,
        } => {
            println!(
                "safe: cutoff {cutoff}, {} strengthening assertions, sizes {}",
                invariant.lemmas.len(),
                history.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" -> ")
            );
            println!("unbounded check: {}", unbounded_text(unbounded));
            print!("{}", invariant.certificate());
            if let Some(p) = &args.cert {
                write(p, &invariant.certificate())?;
            }
            if args.oracle_check {
                oracle_check_invariant(&spec, invariant, cutoff)?;
            }
            if let Some(p) = &args.result {
                let body = json!({
                    "verdict": "safe",
                    "cutoff": cutoff.to_string(),
                    "sizes": history.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    "strengthening": invariant.lemmas.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                    "safety": invariant.safety.to_string(),
                    "invariant_size": invariant.size(),
                    "unbounded": unbounded_text(unbounded),
                    "stats": stats_json(stats, wall),
                });
                write(p, &format!("{body:#}\n"))?;
            }
            EXIT_SAFE
        }
        Verdict::Violated {
            trace,
            sizes: at,
            history,
            stats,
        } => {
            let inst = build_instance(&spec, at)?;
            let rendered = trace.render(&inst);
            println!("violated at {at}: counterexample of {} states", trace.len());
            print!("{rendered}");
            if let Some(p) = &args.trace {
                write(p, &rendered)?;
            }
            if args.oracle_check {
                oracle_check_trace(trace, &inst)?;
            }
            if let Some(p) = &args.result {
                let body = json!({
                    "verdict": "violated",
                    "sizes": history.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    "at": at.to_string(),
                    "trace": rendered.lines().collect::<Vec<_>>(),
                    "stats": stats_json(stats, wall),
                });
                write(p, &format!("{body:#}\n"))?;
            }
            EXIT_VIOLATED
        }
        Verdict::ResourcesExhausted { reason, history, stats } => {
            println!("resources exhausted: {reason}");
            if let Some(p) = &args.result {
                let body = json!({
                    "verdict": "resources-exhausted",
                    "reason": reason,
                    "sizes": history.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    "stats": stats_json(stats, wall),
                });
                write(p, &format!("{body:#}\n"))?;
            }
            EXIT_EXHAUSTED
        }
    };
    Ok(code)
}

fn unbounded_text(s: &UnboundedStatus) -> String {
    match s {
        UnboundedStatus::NotRun => "not run".into(),
        UnboundedStatus::Confirmed => "confirmed".into(),
        UnboundedStatus::NotConfirmed(why) => format!("finite cutoff reached; unbounded check not confirmed ({why})"),
        UnboundedStatus::Refuted(goal) => format!("refuted: {goal} is satisfiable"),
    }
}

fn stats_json(s: &EngineStats, wall: Duration) -> serde_json::Value {
    json!({
        "frames": s.frames,
        "ctis": s.ctis,
        "smt_checks": s.smt_checks,
        "learned": s.learned,
        "generalized": s.generalized,
        "audit_checks": s.audit_checks,
        "audit_failures": s.audit_failures,
        "wall_ms": wall.as_millis() as u64,
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn oracle_check_invariant(spec: &ProtocolSpec, inv: &InductiveInvariant, at: &SizeAssignment) -> Result<(), Failure> {
    let inst = build_instance(spec, at)?;
    let space = match bfs_reach(&inst) {
        Ok(s) => s,
        Err(e) => {
            println!("oracle check skipped: {e}");
            return Ok(());
        }
    };
    if let Some(s) = find_violation(&inst, &space) {
        error!("oracle found a reachable unsafe state: {s:?}");
        return Err(Failure::Run(anyhow!("oracle disagrees: safety is violated at {at}")));
    }
    let formulas: Vec<_> = inv.conjuncts().map(|c| c.to_formula()).collect();
    match check_invariant_explicit(&inst, &formulas)? {
        InvariantCheck::Holds => {
            println!("oracle check: {} reachable states, invariant confirmed", space.count());
            Ok(())
        }
        other => bail_run(anyhow!("oracle rejects the invariant at {at}: {other:?}")),
    }
}

fn oracle_check_trace(trace: &TraceCex, inst: &symquant::ground::FiniteInstance) -> Result<(), Failure> {
    match replay(trace, inst) {
        Replay::Valid => {
            println!("oracle check: counterexample replays");
            Ok(())
        }
        Replay::BrokenAt(i) => bail_run(anyhow!("oracle rejects the counterexample at state {i}")),
    }
}

fn bail_run(e: anyhow::Error) -> Result<(), Failure> {
    Err(Failure::Run(e))
}
