use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use bellnet::env::{build_cliff_mdp, render_policy, GridSpec};
use bellnet::experiment::{
    nerr, optimal_values, policy_agreement, policy_csv, realization_q_bar, run_depth_sweep, run_order_sweep,
    run_transfer, EnvironmentConfig, ExperimentConfig, SweepResult, SweepVariable,
};
use bellnet::model::{extract_deterministic_policy, forward};
use bellnet::solvers::{policy_iteration, solve_optimal, value_iteration, SolverReport};
use bellnet::training::{initialize_model, train};
use bellnet::{BellNetModel, Error, Result, TabularMdp, ValueFunction};

#[derive(Parser)]
#[command(name = "bellnet", version, about = "Unrolled dynamic programming on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a classical solver on an MDP file.
    Solve {
        /// MDP JSON file (see `export-mdp`).
        mdp: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Optimal)]
        method: Method,
        /// Value-iteration steps or policy-improvement steps.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Evaluation steps per policy-iteration round.
        #[arg(long, default_value_t = 10)]
        eval_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on the configured environment and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Normalized error of a checkpoint on the configured environment.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Evaluate on the transfer target instead of the source grid.
        #[arg(long)]
        transfer: bool,
    },
    /// Run a full sweep and write its CSV tables.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Write the MDP of a grid as JSON.
    ExportMdp {
        /// Experiment config, or an `{"grid": ..., "gamma": ...}` document.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Optimal,
    ValueIteration,
    PolicyIteration,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SweepKind {
    Depth,
    Order,
    Transfer,
}

fn load_config(common: &Common, fallback: impl FnOnce() -> ExperimentConfig) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => fallback(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn values_csv(q: &ValueFunction) -> String {
    let mut out = String::from("state,action,value\n");
    for a in 0..q.num_actions() {
        for s in 0..q.num_states() {
            out.push_str(&format!("{s},{a},{}\n", q.get(s, a)));
        }
    }
    out
}

fn solve(mdp_path: &Path, method: Method, steps: usize, eval_steps: usize, out: Option<&Path>) -> Result<()> {
    let mdp = TabularMdp::load(mdp_path)?;
    let q0 = mdp.zero_values();
    let report: SolverReport = match method {
        Method::Optimal => solve_optimal(&mdp)?,
        Method::ValueIteration => value_iteration(&mdp, steps, &q0)?,
        Method::PolicyIteration => policy_iteration(&mdp, eval_steps, steps, &q0)?,
    };
    println!("residual {:e}", report.residual);
    println!("iterations {}", report.iterations_used);
    println!("policy {:?}", report.policy.argmax_actions());
    if let Some(dir) = out {
        write(&dir.join("values.csv"), &values_csv(&report.q))?;
    }
    Ok(())
}

fn train_command(common: &Common) -> Result<()> {
    let config = load_config(common, ExperimentConfig::depth_default)?;
    let mdp = config.environment.build()?;
    let m = &config.model;
    let train_cfg = bellnet::training::TrainConfig {
        seed: common.seed.unwrap_or(config.train.seed),
        ..config.train.clone()
    };
    let gamma = train_cfg.gamma.unwrap_or(mdp.discount());
    let model = initialize_model(&train_cfg, gamma, m.filter_order, m.depth, m.temperature, m.weight_shared)?;
    let outcome = train(&model, &mdp, &train_cfg)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    outcome.model.save(dir.join("checkpoint.json"))?;
    write(&dir.join("loss_history.csv"), &outcome.history_csv())?;
    let q_bar = realization_q_bar(&config, &mdp, config.seed)?;
    let q_hat = forward(&outcome.model, &mdp, &q_bar)?.q_hat;
    write(&dir.join("policy_source.csv"), &policy_csv(&config.environment.grid, &q_hat))?;
    if let Some(last) = outcome.history.last() {
        println!("final loss {last:e}");
    }
    println!("checkpoint {}", dir.join("checkpoint.json").display());
    Ok(())
}

fn eval_command(checkpoint: &Path, common: &Common, transfer: bool) -> Result<()> {
    let config = load_config(common, ExperimentConfig::transfer_default)?;
    let model = BellNetModel::load(checkpoint)?;
    let (grid, name): (GridSpec, &str) = if transfer {
        let t = config
            .transfer
            .as_ref()
            .ok_or_else(|| Error::Argument("config has no transfer section".into()))?;
        (t.target.clone(), "target")
    } else {
        (config.environment.grid.clone(), "source")
    };
    let mdp = build_cliff_mdp(&grid, config.environment.gamma)?;
    let q_star = optimal_values(&mdp)?;
    let q_bar = realization_q_bar(&config, &mdp, config.seed)?;
    let out = forward(&model, &mdp, &q_bar)?;
    println!("nerr {:e}", nerr(out.q_hat.vector(), q_star.vector())?);
    println!("policy_agreement {}", policy_agreement(&grid, &out.q_hat, &q_star));
    print!("{}", render_policy(&grid, &extract_deterministic_policy(&out.pi_hat).argmax_actions()));
    write(&config.output_dir.join(format!("policy_{name}.csv")), &policy_csv(&grid, &out.q_hat))?;
    Ok(())
}

fn sweep_command(kind: SweepKind, common: &Common) -> Result<()> {
    let config = load_config(common, || match kind {
        SweepKind::Depth => ExperimentConfig::depth_default(),
        SweepKind::Order => ExperimentConfig::order_default(),
        SweepKind::Transfer => ExperimentConfig::transfer_default(),
    })?;
    let result: SweepResult = match kind {
        SweepKind::Depth => run_depth_sweep(&config)?,
        SweepKind::Order => run_order_sweep(&config)?,
        SweepKind::Transfer => run_transfer(&config)?,
    };
    let dir = &config.output_dir;
    for path in result.write(dir)? {
        info!("wrote {}", path.display());
    }
    let source = optimal_values(&config.environment.build()?)?;
    write(&dir.join("policy_source.csv"), &policy_csv(&config.environment.grid, &source))?;
    if let Some(t) = config.transfer.as_ref().filter(|_| kind == SweepKind::Transfer) {
        let target = optimal_values(&build_cliff_mdp(&t.target, config.environment.gamma)?)?;
        write(&dir.join("policy_target.csv"), &policy_csv(&t.target, &target))?;
    }
    if !result.failures.is_empty() {
        log::warn!("{} realizations failed", result.failures.len());
    }
    let x_name = match config.sweep.variable {
        SweepVariable::Depth => "depth",
        SweepVariable::FilterOrder => "filter order",
    };
    println!("median nerr by {x_name}");
    print!("{}", result.median_csv());
    Ok(())
}

fn export_mdp(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let env = match config {
        Some(path) => {
            let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            let section = doc.get_mut("environment").map(serde_json::Value::take).unwrap_or(doc);
            serde_json::from_value::<EnvironmentConfig>(section)?
        }
        None => EnvironmentConfig::default(),
    };
    let json = env.build()?.to_json_string()?;
    match out {
        Some(path) => write(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            mdp,
            method,
            steps,
            eval_steps,
            out,
        } => solve(&mdp, method, steps, eval_steps, out.as_deref()),
        Command::Train { common } => train_command(&common),
        Command::Eval {
            checkpoint,
            common,
            transfer,
        } => eval_command(&checkpoint, &common, transfer),
        Command::Sweep { kind, common } => sweep_command(kind, &common),
        Command::ExportMdp { config, out } => export_mdp(config.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
