//! `esm`: run, sweep and verify the storage and scheduling controller.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use esm_core::config::ExperimentSpec;
use esm_core::experiment::{run_sweep, save_csv, sweep_means, verify};
use esm_core::par;
use esm_core::scenario::{save_trace, validate_trace, Trace};
use esm_core::simulator::{run, save_records, Policy};

#[derive(Parser)]
#[command(name = "esm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one horizon; writes summary.json and slots.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Policy to run; the first configured policy when omitted.
        #[arg(long, value_parser = parse_policy)]
        policy: Option<Policy>,
    },
    /// Run every sweep point, replication and policy; writes sweep.csv and
    /// sweep_means.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant battery; exits nonzero if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Write the scenario trace to trace.csv.
    GenTrace {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario seed (the seed base for sweeps).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides ESM_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

struct Session {
    spec: ExperimentSpec,
    seed: u64,
    out: PathBuf,
}

fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    Policy::parse(s).ok_or_else(|| {
        let names: Vec<_> = Policy::ALL.iter().map(Policy::as_str).collect();
        format!("unknown policy `{s}`; expected one of {}", names.join(", "))
    })
}

fn prepare(common: &Common) -> Result<Session> {
    let mut spec = match &common.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::defaults(),
    };
    if common.workers.is_some() {
        spec.experiment.workers = common.workers;
    }
    let report = spec.validate();
    eprint!("{report}");
    if report.has_errors() {
        bail!("invalid configuration");
    }
    let seed = common.seed.unwrap_or(spec.scenario.seed);
    let out = spec.out_dir(common.out.as_deref());
    Ok(Session { spec, seed, out })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn checked_trace(ctx: &Session) -> Result<Trace> {
    let trace = ctx.spec.trace(ctx.seed)?;
    let report = validate_trace(&trace, &ctx.spec.grid);
    eprint!("{report}");
    if report.has_errors() {
        bail!("invalid trace");
    }
    Ok(trace)
}

fn cmd_run(common: &Common, policy: Option<Policy>) -> Result<ExitCode> {
    let ctx = prepare(common)?;
    let policy = policy
        .or_else(|| ctx.spec.experiment.policies.first().copied())
        .unwrap_or(Policy::Joint);
    let trace = checked_trace(&ctx)?;
    let summary = par::with_workers(ctx.spec.experiment.workers, || {
        run(&trace, policy, &ctx.spec.model(), &ctx.spec.run_options())
    })?;
    create_dir(&ctx.out)?;
    summary.save_json(ctx.out.join("summary.json"))?;
    save_records(&summary.records, ctx.out.join("slots.csv"))?;
    println!(
        "{} over {} slots: total {:.6}, J {:.6}, entry {:.6}, usage {:.6}, delay {:.6}, avg delay {:.3}",
        policy.as_str(),
        summary.horizon,
        summary.total,
        summary.j_bar,
        summary.entry_bar,
        summary.usage_cost,
        summary.delay_cost,
        summary.avg_delay
    );
    println!("wrote {}", ctx.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(common: &Common) -> Result<ExitCode> {
    let ctx = prepare(common)?;
    let rows = run_sweep(&ctx.spec, ctx.seed)?;
    let means = sweep_means(&rows);
    create_dir(&ctx.out)?;
    save_csv(&rows, ctx.out.join("sweep.csv"))?;
    save_csv(&means, ctx.out.join("sweep_means.csv"))?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    for r in rows.iter().filter(|r| !r.error.is_empty()) {
        eprintln!(
            "run failed: d_max {} b_max {} alpha {} mu {} {} rep {}: {}",
            r.d_max,
            r.b_max,
            r.alpha,
            r.mu,
            r.policy.as_str(),
            r.replication,
            r.error
        );
    }
    println!(
        "{} runs over {} points, {failed} failed; wrote {}",
        rows.len(),
        means.len() / ctx.spec.experiment.policies.len().max(1),
        ctx.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(common: &Common) -> Result<ExitCode> {
    let ctx = prepare(common)?;
    let report = par::with_workers(ctx.spec.experiment.workers, || verify(&ctx.spec, ctx.seed));
    for c in &report.checks {
        println!("{c}");
    }
    create_dir(&ctx.out)?;
    fs::write(
        ctx.out.join("verify.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        eprintln!("{failed} of {} checks failed", report.checks.len());
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_gen_trace(common: &Common) -> Result<ExitCode> {
    let ctx = prepare(common)?;
    let trace = checked_trace(&ctx)?;
    create_dir(&ctx.out)?;
    let path = ctx.out.join("trace.csv");
    save_trace(&trace, &path)?;
    println!("wrote {} slots to {}", trace.horizon(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, policy } => cmd_run(common, *policy),
        Command::Sweep { common } => cmd_sweep(common),
        Command::Verify { common } => cmd_verify(common),
        Command::GenTrace { common } => cmd_gen_trace(common),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
