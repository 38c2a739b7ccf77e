//! Config-driven depth, filter-order and transfer studies.
//!
//! Every (method, sweep value, realization) cell is an independent job. Jobs
//! run in parallel and are collected in a fixed order, so results depend only
//! on the config and its seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{build_cliff_mdp, mirror_spec, Action, GridSpec};
use crate::error::{Error, Result};
use crate::model::{forward, BellNetModel, DEFAULT_TEMPERATURE};
use crate::solvers::{policy_iteration, solve_optimal, value_iteration, OPTIMAL_RESIDUAL_TOL};
use crate::training::{initialize_model, sample_q_bar, train, TrainConfig};
use crate::mdp::{TabularMdp, ValueFunction};

/// Normalized error `|| a/|a| - b/|b| ||^2`, in `[0, 4]`.
pub fn nerr(q_hat: &DVector<f64>, q_star: &DVector<f64>) -> Result<f64> {
    if q_hat.len() != q_star.len() {
        return Err(Error::arg("nerr: vectors differ in length"));
    }
    let (na, nb) = (q_hat.norm(), q_star.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::arg("nerr: zero-norm input"));
    }
    Ok((q_hat / na - q_star / nb).norm_squared())
}

/// Inclusive linear-interpolation percentile of already sorted data, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Fraction of non-cliff states where the greedy action of `q` is optimal
/// under `q_star` (ties in `q_star` within 1e-9 count as optimal).
pub fn policy_agreement(spec: &GridSpec, q: &ValueFunction, q_star: &ValueFunction) -> f64 {
    let free = spec.free_states();
    let greedy = |s: usize| {
        (0..q.num_actions()).fold(0, |best, a| if q.get(s, a) > q.get(s, best) { a } else { best })
    };
    let hits = free
        .iter()
        .filter(|&&s| {
            let best = (0..q_star.num_actions()).map(|a| q_star.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
            q_star.get(s, greedy(s)) >= best - 1e-9 * best.abs().max(1.0)
        })
        .count();
    hits as f64 / free.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub grid: GridSpec,
    pub gamma: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            gamma: 0.99,
        }
    }
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<TabularMdp> {
        build_cliff_mdp(&self.grid, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of layers `L + 1`.
    pub depth: usize,
    pub filter_order: usize,
    pub temperature: f64,
    pub weight_shared: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            filter_order: 10,
            temperature: DEFAULT_TEMPERATURE,
            weight_shared: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Depth,
    FilterOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// x-axis values.
    pub values: Vec<usize>,
    /// Filter orders trained at every depth (depth and transfer sweeps).
    #[serde(default)]
    pub orders: Vec<usize>,
    /// Depths trained at every filter order (order sweep).
    #[serde(default)]
    pub depths: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::Depth,
            values: (2..=10).collect(),
            orders: vec![5, 10],
            depths: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub val_it: bool,
    pub pol_it_eval_steps: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            val_it: true,
            pol_it_eval_steps: vec![10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub target: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed of realization 0; realization `i` uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
}

fn default_realizations() -> usize {
    15
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Modified cliff layout used as the default transfer target: mirrored
/// endpoints plus an extra cliff block in the second row.
pub fn modified_grid() -> GridSpec {
    let base = mirror_spec(&GridSpec::default());
    GridSpec {
        cliff_cells: base.cliff_cells.iter().copied().chain((3..=8).map(|c| (1, c))).collect(),
        ..base
    }
}

impl ExperimentConfig {
    /// Depth study: layers 2..=10, BN and BN-WS at orders 5 and 10.
    pub fn depth_default() -> Self {
        Self {
            environment: EnvironmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            baselines: BaselineConfig::default(),
            realizations: default_realizations(),
            transfer: None,
            output_dir: default_output_dir(),
            seed: 0,
        }
    }

    /// Filter-order study: orders 1, 5, 10, 15 at depths 5, 10, 15.
    pub fn order_default() -> Self {
        Self {
            sweep: SweepConfig {
                variable: SweepVariable::FilterOrder,
                values: vec![1, 5, 10, 15],
                orders: vec![],
                depths: vec![5, 10, 15],
            },
            baselines: BaselineConfig {
                val_it: false,
                pol_it_eval_steps: vec![],
            },
            ..Self::depth_default()
        }
    }

    /// Transfer study: depths 2..=8, BN-WS at orders 3, 5, 10, baselines on the target.
    pub fn transfer_default() -> Self {
        Self {
            sweep: SweepConfig {
                variable: SweepVariable::Depth,
                values: (2..=8).collect(),
                orders: vec![3, 5, 10],
                depths: vec![],
            },
            baselines: BaselineConfig {
                val_it: true,
                pol_it_eval_steps: vec![5, 10],
            },
            transfer: Some(TransferConfig { target: modified_grid() }),
            ..Self::depth_default()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::arg("realizations must be at least 1"));
        }
        let positive = |v: &[usize], what: &str| -> Result<()> {
            if v.contains(&0) {
                return Err(Error::arg(format!("{what} must be positive integers")));
            }
            Ok(())
        };
        positive(&self.sweep.values, "sweep values")?;
        positive(&self.sweep.depths, "sweep depths")?;
        positive(&self.baselines.pol_it_eval_steps, "policy-iteration evaluation steps")?;
        if self.sweep.values.is_empty() {
            return Err(Error::arg("sweep values are empty"));
        }
        if self.model.depth == 0 {
            return Err(Error::arg("model depth must be at least 1"));
        }
        if !(self.model.temperature > 0.0) {
            return Err(Error::arg("model temperature must be positive"));
        }
        if self.train.iterations > 0 {
            self.train.validate()?;
        }
        self.environment.grid.validate()?;
        if let Some(t) = &self.transfer {
            t.target.validate()?;
        }
        if !(0.0..1.0).contains(&self.environment.gamma) {
            return Err(Error::arg("gamma outside [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub sweep_value: usize,
    pub seed: u64,
    pub nerr: f64,
    /// Share of non-cliff states whose greedy action is optimal.
    pub policy_agreement: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedRun {
    pub method: String,
    pub sweep_value: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    /// Name used as the CSV file prefix.
    pub name: String,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedRun>,
    /// Method labels in column order.
    pub methods: Vec<String>,
    pub sweep_values: Vec<usize>,
}

/// Median and interquartile range of one (method, sweep value) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub count: usize,
    pub failed: usize,
}

impl SweepResult {
    pub fn values(&self, method: &str, sweep_value: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.sweep_value == sweep_value)
            .map(|r| r.nerr)
            .collect()
    }

    pub fn stats(&self, method: &str, sweep_value: usize) -> Option<CellStats> {
        let mut v = self.values(method, sweep_value);
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let failed = self
            .failures
            .iter()
            .filter(|f| f.method == method && f.sweep_value == sweep_value)
            .count();
        Some(CellStats {
            median: percentile(&v, 0.5),
            p25: percentile(&v, 0.25),
            p75: percentile(&v, 0.75),
            count: v.len(),
            failed,
        })
    }

    pub fn median(&self, method: &str, sweep_value: usize) -> Option<f64> {
        self.stats(method, sweep_value).map(|s| s.median)
    }

    fn wide_csv(&self, pick: impl Fn(&CellStats) -> f64) -> String {
        let mut out = String::from("xaxis");
        for m in &self.methods {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for &x in &self.sweep_values {
            let _ = write!(out, "{x}");
            for m in &self.methods {
                out.push(',');
                if let Some(s) = self.stats(m, x) {
                    let _ = write!(out, "{}", pick(&s));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Wide tables: x-axis column plus one column per method.
    pub fn median_csv(&self) -> String {
        self.wide_csv(|s| s.median)
    }

    pub fn p25_csv(&self) -> String {
        self.wide_csv(|s| s.p25)
    }

    pub fn p75_csv(&self) -> String {
        self.wide_csv(|s| s.p75)
    }

    /// Long table: one row per (method, sweep value, statistic).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,sweep_value,statistic,nerr,failed\n");
        for m in &self.methods {
            for &x in &self.sweep_values {
                let failed = self
                    .failures
                    .iter()
                    .filter(|f| &f.method == m && f.sweep_value == x)
                    .count();
                match self.stats(m, x) {
                    Some(s) => {
                        for (name, v) in [("median", s.median), ("p25", s.p25), ("p75", s.p75)] {
                            let _ = writeln!(out, "{m},{x},{name},{v},{failed}");
                        }
                    }
                    None if failed > 0 => {
                        for name in ["median", "p25", "p75"] {
                            let _ = writeln!(out, "{m},{x},{name},,{failed}");
                        }
                    }
                    None => {}
                }
            }
        }
        out
    }

    /// Every realization, without timings.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("method,sweep_value,seed,nerr,policy_agreement\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.method, r.sweep_value, r.seed, r.nerr, r.policy_agreement);
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("method,sweep_value,seed,wall_time_ms\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.method, r.sweep_value, r.seed, r.wall_time_ms);
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("method,sweep_value,seed,reason\n");
        for f in &self.failures {
            let _ = writeln!(out, "{},{},{},\"{}\"", f.method, f.sweep_value, f.seed, f.reason.replace('"', "'"));
        }
        out
    }

    /// Writes `<name>_med_err.csv`, `<name>_p25.csv`, `<name>_p75.csv`,
    /// `<name>_summary.csv`, `<name>_runs.csv`, `<name>_timing.csv` and, when
    /// any run failed, `<name>_failures.csv`. Returns the written paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            ("med_err", self.median_csv()),
            ("p25", self.p25_csv()),
            ("p75", self.p75_csv()),
            ("summary", self.summary_csv()),
            ("runs", self.runs_csv()),
            ("timing", self.timing_csv()),
        ];
        if !self.failures.is_empty() {
            files.push(("failures", self.failures_csv()));
        }
        let mut paths = Vec::new();
        for (suffix, body) in files {
            let path = dir.join(format!("{}_{suffix}.csv", self.name));
            std::fs::write(&path, body)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone)]
enum JobKind {
    ValueIteration { steps: usize },
    PolicyIteration { eval_steps: usize, improve_steps: usize },
    Net { order: usize, depth: usize, shared: bool },
}

#[derive(Debug, Clone)]
struct Job {
    label: String,
    x: usize,
    realization: usize,
    kind: JobKind,
}

/// SplitMix64 finalizer, used to derive independent per-job seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training seed for a network job; independent of the evaluation target.
pub fn training_seed(realization_seed: u64, order: usize, depth: usize, shared: bool) -> u64 {
    mix(mix(mix(realization_seed) ^ order as u64) ^ ((depth as u64) << 1 | shared as u64))
}

/// The `q_bar` shared by every method within one realization.
pub fn realization_q_bar(config: &ExperimentConfig, mdp: &TabularMdp, realization_seed: u64) -> Result<ValueFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed);
    rng.set_stream(2);
    let gamma = config.train.gamma.unwrap_or(mdp.discount());
    sample_q_bar(config.train.q_bar_sampling, mdp, gamma, &mut rng)
}

/// Optimal values of `mdp`, checked against the residual tolerance.
pub fn optimal_values(mdp: &TabularMdp) -> Result<ValueFunction> {
    let report = solve_optimal(mdp)?;
    if !(report.residual < OPTIMAL_RESIDUAL_TOL) {
        return Err(Error::Numeric(format!(
            "optimal values did not converge (residual {:e})",
            report.residual
        )));
    }
    Ok(report.q)
}

/// Trains a fresh model on `mdp` for one sweep cell. Zero training
/// iterations return the initialized model.
pub fn train_cell(
    config: &ExperimentConfig,
    mdp: &TabularMdp,
    realization_seed: u64,
    order: usize,
    depth: usize,
    shared: bool,
) -> Result<BellNetModel> {
    let train_cfg = TrainConfig {
        seed: training_seed(realization_seed, order, depth, shared),
        ..config.train.clone()
    };
    let gamma = train_cfg.gamma.unwrap_or(mdp.discount());
    let model = initialize_model(&train_cfg, gamma, order, depth, config.model.temperature, shared)?;
    if train_cfg.iterations == 0 {
        return Ok(model);
    }
    Ok(train(&model, mdp, &train_cfg)?.model)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    train_mdp: &'a TabularMdp,
    eval_mdp: &'a TabularMdp,
    eval_grid: &'a GridSpec,
    q_star: &'a ValueFunction,
    q_bars: &'a [ValueFunction],
}

fn run_job(ctx: &Context, job: &Job) -> std::result::Result<ResultRow, FailedRun> {
    let seed = ctx.config.seed + job.realization as u64;
    let q_bar = &ctx.q_bars[job.realization];
    let started = Instant::now();
    let outcome = (|| -> Result<ValueFunction> {
        match job.kind {
            JobKind::ValueIteration { steps } => Ok(value_iteration(ctx.eval_mdp, steps, q_bar)?.q),
            JobKind::PolicyIteration { eval_steps, improve_steps } => {
                Ok(policy_iteration(ctx.eval_mdp, eval_steps, improve_steps, q_bar)?.q)
            }
            JobKind::Net { order, depth, shared } => {
                let model = train_cell(ctx.config, ctx.train_mdp, seed, order, depth, shared)?;
                Ok(forward(&model, ctx.eval_mdp, q_bar)?.q_hat)
            }
        }
    })();
    let fail = |reason: String| FailedRun {
        method: job.label.clone(),
        sweep_value: job.x,
        seed,
        reason,
    };
    let q = outcome.map_err(|e| fail(e.to_string()))?;
    let err = nerr(q.vector(), ctx.q_star.vector()).map_err(|e| fail(e.to_string()))?;
    Ok(ResultRow {
        method: job.label.clone(),
        sweep_value: job.x,
        seed,
        nerr: err,
        policy_agreement: policy_agreement(ctx.eval_grid, &q, ctx.q_star),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn execute(
    name: &str,
    config: &ExperimentConfig,
    train_mdp: &TabularMdp,
    eval_mdp: &TabularMdp,
    eval_grid: &GridSpec,
    jobs: Vec<Job>,
    methods: Vec<String>,
) -> Result<SweepResult> {
    let q_star = optimal_values(eval_mdp)?;
    let q_bars = (0..config.realizations)
        .map(|i| realization_q_bar(config, eval_mdp, config.seed + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let ctx = Context {
        config,
        train_mdp,
        eval_mdp,
        eval_grid,
        q_star: &q_star,
        q_bars: &q_bars,
    };
    let outcomes: Vec<_> = jobs.par_iter().map(|job| run_job(&ctx, job)).collect();
    let mut result = SweepResult {
        name: name.to_string(),
        methods,
        sweep_values: config.sweep.values.clone(),
        ..SweepResult::default()
    };
    for outcome in outcomes {
        match outcome {
            Ok(row) => result.rows.push(row),
            Err(failed) => {
                log::warn!(
                    "{} at {} (seed {}) failed: {}",
                    failed.method,
                    failed.sweep_value,
                    failed.seed,
                    failed.reason
                );
                result.failures.push(failed);
            }
        }
    }
    Ok(result)
}

fn baseline_jobs(config: &ExperimentConfig, depth_of: impl Fn(usize) -> usize, jobs: &mut Vec<Job>, methods: &mut Vec<String>) {
    if config.baselines.val_it {
        methods.push("Val-it".into());
    }
    for &k in &config.baselines.pol_it_eval_steps {
        methods.push(format!("Pol-it-{k}"));
    }
    for &x in &config.sweep.values {
        for realization in 0..config.realizations {
            if config.baselines.val_it {
                jobs.push(Job {
                    label: "Val-it".into(),
                    x,
                    realization,
                    kind: JobKind::ValueIteration { steps: depth_of(x) },
                });
            }
            for &k in &config.baselines.pol_it_eval_steps {
                jobs.push(Job {
                    label: format!("Pol-it-{k}"),
                    x,
                    realization,
                    kind: JobKind::PolicyIteration {
                        eval_steps: k,
                        improve_steps: depth_of(x),
                    },
                });
            }
        }
    }
}

fn net_label(order_or_depth: usize, shared: bool) -> String {
    if shared {
        format!("BN-WS-{order_or_depth}")
    } else {
        format!("BN-{order_or_depth}")
    }
}

fn require(config: &ExperimentConfig, variable: SweepVariable) -> Result<()> {
    config.validate()?;
    if config.sweep.variable != variable {
        let name = if variable == SweepVariable::Depth { "depth" } else { "filter_order" };
        return Err(Error::arg(format!("sweep.variable must be {name} for this study")));
    }
    Ok(())
}

/// Error against the number of layers, for BN and BN-WS at each order in
/// `sweep.orders`, value iteration and policy iteration.
pub fn run_depth_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    require(config, SweepVariable::Depth)?;
    let mdp = config.environment.build()?;
    let mut jobs = Vec::new();
    let mut methods = Vec::new();
    baseline_jobs(config, |x| x, &mut jobs, &mut methods);
    for &order in &config.sweep.orders {
        for shared in [false, true] {
            methods.push(net_label(order, shared));
            for &depth in &config.sweep.values {
                for realization in 0..config.realizations {
                    jobs.push(Job {
                        label: net_label(order, shared),
                        x: depth,
                        realization,
                        kind: JobKind::Net { order, depth, shared },
                    });
                }
            }
        }
    }
    execute("depth", config, &mdp, &mdp, &config.environment.grid, jobs, methods)
}

/// Error against the filter order. Policy iteration runs `x` evaluation
/// steps; BN-WS uses filter order `x`; both at each depth in `sweep.depths`.
pub fn run_order_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    require(config, SweepVariable::FilterOrder)?;
    let mdp = config.environment.build()?;
    let mut jobs = Vec::new();
    let mut methods = Vec::new();
    for &depth in &config.sweep.depths {
        methods.push(format!("Pol-it-{depth}"));
    }
    for &depth in &config.sweep.depths {
        methods.push(net_label(depth, true));
    }
    for &x in &config.sweep.values {
        for &depth in &config.sweep.depths {
            for realization in 0..config.realizations {
                jobs.push(Job {
                    label: format!("Pol-it-{depth}"),
                    x,
                    realization,
                    kind: JobKind::PolicyIteration {
                        eval_steps: x,
                        improve_steps: depth,
                    },
                });
                jobs.push(Job {
                    label: net_label(depth, true),
                    x,
                    realization,
                    kind: JobKind::Net {
                        order: x,
                        depth,
                        shared: true,
                    },
                });
            }
        }
    }
    let result = execute("order", config, &mdp, &mdp, &config.environment.grid, jobs, methods)?;
    for &depth in &config.sweep.depths {
        let label = net_label(depth, true);
        let medians: Vec<f64> = config
            .sweep
            .values
            .iter()
            .filter_map(|&x| result.median(&label, x))
            .collect();
        if medians.windows(2).any(|w| w[1] > w[0]) {
            log::info!("{label}: median error is not monotone in the filter order: {medians:?}");
        }
    }
    Ok(result)
}

/// Trains BN-WS on the source grid and evaluates it, without retraining, on
/// `transfer.target`. Baselines run natively on the target.
pub fn run_transfer(config: &ExperimentConfig) -> Result<SweepResult> {
    require(config, SweepVariable::Depth)?;
    let target = config
        .transfer
        .as_ref()
        .ok_or_else(|| Error::arg("transfer section missing from config"))?;
    let source_mdp = config.environment.build()?;
    let target_mdp = build_cliff_mdp(&target.target, config.environment.gamma)?;
    if source_mdp.num_actions() != target_mdp.num_actions() {
        return Err(Error::arg("source and target action spaces differ"));
    }
    let mut jobs = Vec::new();
    let mut methods = Vec::new();
    baseline_jobs(config, |x| x, &mut jobs, &mut methods);
    for &order in &config.sweep.orders {
        methods.push(net_label(order, true));
        for &depth in &config.sweep.values {
            for realization in 0..config.realizations {
                jobs.push(Job {
                    label: net_label(order, true),
                    x: depth,
                    realization,
                    kind: JobKind::Net {
                        order,
                        depth,
                        shared: true,
                    },
                });
            }
        }
    }
    execute("transfer", config, &source_mdp, &target_mdp, &target.target, jobs, methods)
}

/// Per-state greedy action and state value, for redrawing arrow/heat maps.
pub fn policy_csv(spec: &GridSpec, q: &ValueFunction) -> String {
    let mut out = String::from("state,row,col,cliff,action,arrow,value\n");
    let values = q.state_values();
    for s in 0..spec.num_states() {
        let (r, c) = spec.cell(s);
        let a = (0..q.num_actions()).fold(0, |best, a| if q.get(s, a) > q.get(s, best) { a } else { best });
        let arrow = Action::from_index(a).map_or('?', Action::arrow);
        let _ = writeln!(out, "{s},{r},{c},{},{a},{arrow},{}", spec.is_cliff((r, c)) as u8, values[s]);
    }
    out
}
