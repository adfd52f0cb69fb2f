//! `seeu`: validate models, plan, estimate from traces and run regret experiments.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use seeu_core::harness::{loglog_slope, read_aggregate_file, run_experiment, ExperimentConfig};
use seeu_core::learners::{best_memoryless_policy, run_memoryless, run_random};
use seeu_core::model::{theoretical_constants, validate_model};
use seeu_core::planner::{plan, PlannerConfig};
use seeu_core::sim::{Phase, StepTag};
use seeu_core::spectral::{recover_parameters, SpectralConfig, ViewBatch};
use seeu_core::{Belief, Env, Model, Trajectory};

#[derive(Parser)]
#[command(
    name = "seeu",
    version,
    about = "Online learning for average-reward POMDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print its assumption report and constants.
    Validate { model: PathBuf },
    /// Solve the belief MDP of a model on a grid.
    Plan {
        model: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Also write `plan.csv` and `plan.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral estimate from the exploration periods of a trace CSV.
    Estimate {
        trace: PathBuf,
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Model whose observation matrices fix the state labels.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a replicated regret experiment from a JSON config.
    Run { config: PathBuf },
    /// Log-log regret slopes from an aggregate CSV.
    Slope { aggregate: PathBuf },
    /// Simulate a model under a fixed policy and write the trace CSV.
    Simulate {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Explore)]
        policy: PolicyArg,
        #[arg(long)]
        horizon: usize,
        /// Run length per action for the round-robin policy.
        #[arg(long, default_value_t = 200)]
        tau1: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Each action for `tau1` consecutive periods, in turn.
    Explore,
    Memoryless,
    Random,
}

fn validate(path: PathBuf) -> Result<ExitCode> {
    let model = Model::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let report = validate_model(&model);
    let mut out = serde_json::Map::new();
    out.insert("report".into(), serde_json::to_value(&report)?);
    match theoretical_constants(&model) {
        Ok(c) => out.insert("constants".into(), serde_json::to_value(&c)?),
        Err(e) => out.insert("constants_error".into(), e.to_string().into()),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn simulate(
    path: PathBuf,
    policy: PolicyArg,
    horizon: usize,
    tau1: usize,
    seed: u64,
    output: PathBuf,
) -> Result<()> {
    if horizon == 0 || tau1 == 0 {
        bail!("horizon and tau1 must be positive");
    }
    let model = Model::load(&path)?;
    let mut env = Env::new(&model, &Belief::uniform(model.num_states()), seed, 0)?;
    match policy {
        PolicyArg::Explore => {
            for t in 0..horizon {
                let action = (t / tau1) % model.num_actions();
                env.step_env(
                    action,
                    StepTag::explore(1 + t / (tau1 * model.num_actions())),
                )?;
            }
        }
        PolicyArg::Memoryless => {
            let best = best_memoryless_policy(&model)?;
            run_memoryless(&mut env, &best.map, horizon)?;
        }
        PolicyArg::Random => run_random(&mut env, seed, horizon)?,
    }
    env.log().save_csv(&output)?;
    info!("wrote {horizon} periods to {}", output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    trace: PathBuf,
    states: usize,
    delta: f64,
    reference: Option<PathBuf>,
    seed: u64,
    c1: f64,
    c2: f64,
    output: Option<PathBuf>,
) -> Result<()> {
    let log = Trajectory::load_csv(&trace)?;
    let reference = reference.map(Model::load).transpose()?;
    let num_actions = match &reference {
        Some(m) => m.num_actions(),
        None => log.actions.iter().max().map_or(0, |a| a + 1),
    };
    let num_obs = match &reference {
        Some(m) => m.num_obs(),
        None => log.observations.iter().max().map_or(0, |o| o + 1),
    };
    let mut batch = ViewBatch::new(num_actions, num_obs);
    for (a, o) in log.phase_segments(Phase::Explore) {
        batch.add_segment(a, o)?;
    }
    info!("exploration triples per action: {:?}", batch.counts());
    let cfg = SpectralConfig {
        seed,
        c1,
        c2,
        ..SpectralConfig::default()
    };
    let est = recover_parameters::<f64>(
        &batch,
        states,
        &cfg,
        delta,
        reference.as_ref().map(|m| m.observations()),
    )?;
    match output {
        Some(p) => est.save(&p)?,
        None => println!("{}", est.to_json()?),
    }
    Ok(())
}

fn run(path: PathBuf) -> Result<()> {
    let cfg =
        ExperimentConfig::load(&path).with_context(|| format!("reading {}", path.display()))?;
    let res = run_experiment(&cfg)?;
    println!(
        "reference gain {:.6} (grid {}, refinement delta {:.2e}); best memoryless gain {:.6}",
        res.oracle.gain, res.oracle.resolution, res.oracle.refinement_delta, res.memoryless_gain
    );
    for c in &res.curves {
        let fit = loglog_slope(&c.points());
        let last = c.horizons.len() - 1;
        match fit {
            Ok(f) => println!(
                "{:<10} slope {:.3} +- {:.3}  regret at T={}: {:.1} +- {:.1}",
                c.algorithm.name(),
                f.slope,
                f.stderr,
                c.horizons[last],
                c.mean(last),
                c.stderr(last)
            ),
            Err(e) => println!("{:<10} no slope: {e}", c.algorithm.name()),
        }
    }
    if !res.failures.is_empty() {
        println!(
            "{} replications failed, see metadata.json",
            res.failures.len()
        );
    }
    println!("outputs in {}", res.output_dir.display());
    Ok(())
}

fn slope(path: PathBuf) -> Result<()> {
    let rows = read_aggregate_file(&path)?;
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        series
            .entry(&r.algorithm)
            .or_default()
            .push((r.t as f64, r.mean_regret));
    }
    if series.is_empty() {
        bail!("{} has no rows", path.display());
    }
    for (name, pts) in series {
        match loglog_slope(&pts) {
            Ok(f) => println!("{name},{:.6},{:.6},{}", f.slope, f.stderr, f.points_used),
            Err(e) => println!("{name},,,0 # {e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { model } => validate(model),
        Command::Plan {
            model,
            grid,
            tol,
            out,
        } => (|| {
            let m = Model::load(&model)?;
            let cfg = PlannerConfig {
                tol,
                ..PlannerConfig::with_resolution(grid)
            };
            let p = plan(&m, &cfg)?;
            println!("{}", p.summary_json()?);
            if let Some(dir) = out {
                p.save(dir, "plan")?;
            }
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Estimate {
            trace,
            states,
            delta,
            reference,
            seed,
            c1,
            c2,
            output,
        } => estimate(trace, states, delta, reference, seed, c1, c2, output)
            .map(|_| ExitCode::SUCCESS),
        Command::Run { config } => run(config).map(|_| ExitCode::SUCCESS),
        Command::Slope { aggregate } => slope(aggregate).map(|_| ExitCode::SUCCESS),
        Command::Simulate {
            model,
            policy,
            horizon,
            tau1,
            seed,
            output,
        } => simulate(model, policy, horizon, tau1, seed, output).map(|_| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
