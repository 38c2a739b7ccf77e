//! Bellman-error training of BellNet.
//!
//! At iteration `n` the network is run under the current coefficients to get
//! `(q_n, pi_n)`, the frozen target `r + gamma P_{pi_n} q_n` is formed, and one
//! optimizer step is taken on `|| target - Phi(q_bar) ||^2`. Gradients are
//! computed by hand in reverse mode through every filter stage and every
//! softmax, including the dependence of each `P_{pi_l}` on earlier layers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterCoeffs;
use crate::mdp::{Policy, TabularMdp, ValueFunction};
use crate::model::{forward, BellNetModel, ForwardOutput};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescent,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Distribution of the initial value estimate `q_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QBarSampling {
    Zero,
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std: f64 },
    /// Uniform between 0 and `max(R) / (1 - gamma)`.
    RewardScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `h_j = gamma^j`, bias tap included.
    Classical,
    /// Classical taps plus `N(0, sigma^2)` noise.
    ClassicalNoise { sigma: f64 },
    /// Independent `U(low, high)` taps.
    Random { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub q_bar_sampling: QBarSampling,
    pub resample_each_step: bool,
    pub seed: u64,
    /// Target-side discount; `None` uses the MDP's own.
    pub gamma: Option<f64>,
    pub init: Init,
    /// Gradient steps per target refresh.
    pub inner_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            q_bar_sampling: QBarSampling::Uniform { low: 0.0, high: 1.0 },
            resample_each_step: true,
            seed: 0,
            gamma: None,
            init: Init::ClassicalNoise { sigma: 0.01 },
            inner_steps: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::arg("iterations must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::arg(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.inner_steps == 0 {
            return Err(Error::arg("inner_steps must be at least 1"));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::arg(format!("target discount {g} outside [0, 1)")));
            }
        }
        match self.q_bar_sampling {
            QBarSampling::Uniform { low, high } if !(low <= high) => {
                return Err(Error::arg("q_bar uniform range is empty"))
            }
            QBarSampling::Gaussian { std, .. } if !(std >= 0.0) => {
                return Err(Error::arg("q_bar standard deviation must be nonnegative"))
            }
            _ => {}
        }
        Ok(())
    }

    fn gamma_for(&self, mdp: &TabularMdp) -> f64 {
        self.gamma.unwrap_or(mdp.discount())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Model with coefficients drawn according to `config.init`.
pub fn initialize_model(
    config: &TrainConfig,
    gamma: f64,
    filter_order: usize,
    depth: usize,
    temperature: f64,
    weight_shared: bool,
) -> Result<BellNetModel> {
    let mut rng = rng_for(config.seed, 0);
    let blocks = if weight_shared { 1 } else { depth };
    let mut draw = || -> Result<FilterCoeffs> {
        let base = FilterCoeffs::classical(gamma, filter_order);
        let h = match config.init {
            Init::Classical => return Ok(base),
            Init::ClassicalNoise { sigma } => {
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::arg(e.to_string()))?;
                base.as_slice().iter().map(|h| h + noise.sample(&mut rng)).collect()
            }
            Init::Random { low, high } => {
                if !(low < high) {
                    return Err(Error::arg("random init range is empty"));
                }
                (0..filter_order + 2).map(|_| rng.random_range(low..high)).collect()
            }
        };
        FilterCoeffs::new(h)
    };
    let layers = (0..blocks).map(|_| draw()).collect::<Result<Vec<_>>>()?;
    if weight_shared {
        BellNetModel::shared(layers.into_iter().next().unwrap(), depth, temperature)
    } else {
        BellNetModel::new(layers, temperature)
    }
}

/// Draws one `q_bar` for `mdp`.
pub fn sample_q_bar(sampling: QBarSampling, mdp: &TabularMdp, gamma: f64, rng: &mut impl Rng) -> Result<ValueFunction> {
    let n = mdp.num_pairs();
    let q = match sampling {
        QBarSampling::Zero => DVector::zeros(n),
        QBarSampling::Uniform { low, high } => uniform_vector(n, low, high, rng),
        QBarSampling::Gaussian { mean, std } => {
            let dist = Normal::new(mean, std).map_err(|e| Error::arg(e.to_string()))?;
            DVector::from_fn(n, |_, _| dist.sample(rng))
        }
        QBarSampling::RewardScaled => {
            let edge = mdp.reward().max() / (1.0 - gamma);
            uniform_vector(n, edge.min(0.0), edge.max(0.0), rng)
        }
    };
    ValueFunction::new(q, mdp.num_states())
}

fn uniform_vector(n: usize, low: f64, high: f64, rng: &mut impl Rng) -> DVector<f64> {
    if low == high {
        return DVector::from_element(n, low);
    }
    DVector::from_fn(n, |_, _| rng.random_range(low..high))
}

/// `r + gamma P_{pi_n} q_n`, a constant with respect to the coefficients.
pub fn bellman_target(mdp: &TabularMdp, q_n: &ValueFunction, pi_n: &Policy) -> Result<DVector<f64>> {
    bellman_target_with(mdp, q_n, pi_n, mdp.discount())
}

pub fn bellman_target_with(mdp: &TabularMdp, q_n: &ValueFunction, pi_n: &Policy, gamma: f64) -> Result<DVector<f64>> {
    mdp.check_values(q_n)?;
    let op = mdp.policy_operator(pi_n)?;
    Ok(crate::mdp::backup_with(&op, q_n.vector(), mdp.reward_vector(), gamma))
}

/// Loss and coefficient gradients, one block per stored parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn flat(&self) -> Vec<f64> {
        self.grads.iter().flatten().copied().collect()
    }
}

/// `|| target - Phi(q_bar) ||^2` and its gradient with respect to every tap.
pub fn loss_and_gradient(
    model: &BellNetModel,
    mdp: &TabularMdp,
    q_bar: &ValueFunction,
    target: &DVector<f64>,
) -> Result<GradientBundle> {
    let out = forward(model, mdp, q_bar)?;
    backward(model, mdp, &out, target)
}

/// Reverse pass over a recorded softmax-mode forward.
fn backward(model: &BellNetModel, mdp: &TabularMdp, out: &ForwardOutput, target: &DVector<f64>) -> Result<GradientBundle> {
    if target.len() != mdp.num_pairs() {
        return Err(Error::arg(format!(
            "target length {} does not match {} state-action pairs",
            target.len(),
            mdp.num_pairs()
        )));
    }
    let last = model.depth() - 1;
    let diff = out.q_hat.vector() - target;
    let loss = diff.norm_squared();
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: last });
    }

    let n = mdp.num_states();
    let m = mdp.num_actions();
    let order = model.filter_order();
    let tau = model.temperature();
    let r = mdp.reward_vector();
    let mut grads = vec![vec![0.0; order + 2]; model.parameters().len()];

    // adjoint of q^(l+1)
    let mut g_q = diff * 2.0;
    for l in (0..model.depth()).rev() {
        let coeffs = model.layer(l).as_slice();
        let pi = &out.trace.policies[l];
        let q_l = out.trace.q[l].vector();
        let stages = &out.trace.stages[l];
        let op = mdp.policy_operator(pi)?;
        let block = if model.weight_shared() { 0 } else { l };

        let mut d_pi = DMatrix::<f64>::zeros(n, m);
        let mut g = g_q;
        // stage j: u_j = h_j r + A u_{j+1}, stored as stages[order + 1 - j]
        for j in 0..=order {
            grads[block][j] += g.dot(r);
            let u_next = &stages[order - j];
            let (pt_g, at_g) = op.apply_transpose(&g);
            for a in 0..m {
                for s in 0..n {
                    d_pi[(s, a)] += pt_g[s] * u_next[a * n + s];
                }
            }
            g = at_g;
        }
        // innermost stage: u_{K+1} = h_{K+1} q_l
        grads[block][order + 1] += g.dot(q_l);

        if l == 0 {
            break;
        }
        let mut g_prev = g * coeffs[order + 1];
        // softmax: dQ[s,a] = p_a (dpi_a - <p, dpi>) / tau
        let probs = pi.probs();
        for s in 0..n {
            let inner: f64 = (0..m).map(|a| probs[(s, a)] * d_pi[(s, a)]).sum();
            for a in 0..m {
                g_prev[a * n + s] += probs[(s, a)] * (d_pi[(s, a)] - inner) / tau;
            }
        }
        if g_prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        g_q = g_prev;
    }
    Ok(GradientBundle { loss, grads })
}

/// Central finite-difference gradient of the loss at fixed `target`.
pub fn finite_difference_gradient(
    model: &BellNetModel,
    mdp: &TabularMdp,
    q_bar: &ValueFunction,
    target: &DVector<f64>,
    step: f64,
) -> Result<Vec<f64>> {
    let base = model.flat_parameters();
    let mut probe = model.clone();
    let mut loss_at = |params: &[f64]| -> Result<f64> {
        probe.set_flat_parameters(params)?;
        let out = forward(&probe, mdp, q_bar)?;
        Ok((out.q_hat.vector() - target).norm_squared())
    };
    let mut grad = Vec::with_capacity(base.len());
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + step;
        let plus = loss_at(&x)?;
        x[i] = base[i] - step;
        let minus = loss_at(&x)?;
        x[i] = base[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Per-coordinate comparison of analytic and finite-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|a - n| / max(1, |a|, |n|)` per coordinate.
    pub relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn check_gradients(
    model: &BellNetModel,
    mdp: &TabularMdp,
    q_bar: &ValueFunction,
    target: &DVector<f64>,
    step: f64,
) -> Result<GradCheck> {
    let analytic = loss_and_gradient(model, mdp, q_bar, target)?.flat();
    let numeric = finite_difference_gradient(model, mdp, q_bar, target, step)?;
    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .collect();
    Ok(GradCheck {
        analytic,
        numeric,
        relative_errors,
    })
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        Self {
            kind,
            lr,
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        match self.kind {
            Optimizer::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.first) {
                    *v = beta * *v + g;
                    *p -= self.lr * *v;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BellNetModel,
    /// Loss at every outer iteration, measured before that iteration's update.
    pub history: Vec<f64>,
}

impl TrainOutcome {
    /// Loss history as CSV with columns `iteration,loss`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, loss) in self.history.iter().enumerate() {
            out.push_str(&format!("{i},{loss}\n"));
        }
        out
    }
}

/// Minimizes the Bellman error of `model` on `mdp`.
pub fn train(model: &BellNetModel, mdp: &TabularMdp, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let gamma = config.gamma_for(mdp);
    let mut rng = rng_for(config.seed, 1);
    let mut model = model.clone();
    let mut params = model.flat_parameters();
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, params.len());
    let mut history = Vec::with_capacity(config.iterations);
    let mut q_bar = sample_q_bar(config.q_bar_sampling, mdp, gamma, &mut rng)?;

    for n in 0..config.iterations {
        if n > 0 && config.resample_each_step {
            q_bar = sample_q_bar(config.q_bar_sampling, mdp, gamma, &mut rng)?;
        }
        let diverged = |loss: f64, history: Vec<f64>| Error::Diverged {
            iteration: n,
            loss,
            history,
        };
        let current = match forward(&model, mdp, &q_bar) {
            Ok(out) => out,
            Err(Error::NonFinite { .. }) => return Err(diverged(f64::INFINITY, history)),
            Err(e) => return Err(e),
        };
        let target = bellman_target_with(mdp, &current.q_hat, &current.pi_hat, gamma)?;

        for inner in 0..config.inner_steps {
            // the first inner step differentiates the forward pass that produced the target
            let bundle = if inner == 0 {
                backward(&model, mdp, &current, &target)
            } else {
                loss_and_gradient(&model, mdp, &q_bar, &target)
            };
            let bundle = match bundle {
                Ok(b) => b,
                Err(Error::NonFinite { .. }) => return Err(diverged(f64::INFINITY, history)),
                Err(e) => return Err(e),
            };
            if inner == 0 {
                if !bundle.loss.is_finite() || bundle.loss > DIVERGENCE_LOSS {
                    return Err(diverged(bundle.loss, history));
                }
                history.push(bundle.loss);
            }
            opt.update(&mut params, &bundle.flat());
            model.set_flat_parameters(&params)?;
        }
    }
    Ok(TrainOutcome { model, history })
}
