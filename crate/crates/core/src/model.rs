//! BellNet: unrolled policy iteration as a cascade of biased graph filters,
//! each followed by a row-wise tempered softmax.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{horner_stages, FilterCoeffs};
use crate::mdp::{greedy_policy, softmax_policy, Policy, TabularMdp, ValueFunction};

pub const DEFAULT_TEMPERATURE: f64 = 0.25;

/// Policy readout applied after every filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicyMode {
    #[default]
    Softmax,
    /// One-hot argmax; not differentiable, inference only.
    HardMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellNetModel {
    /// One entry per layer, or a single shared entry.
    layers: Vec<FilterCoeffs>,
    depth: usize,
    filter_order: usize,
    temperature: f64,
    weight_shared: bool,
}

impl BellNetModel {
    /// Builds an unshared model from per-layer coefficients.
    pub fn new(layers: Vec<FilterCoeffs>, temperature: f64) -> Result<Self> {
        let depth = layers.len();
        Self::build(layers, depth, temperature, false)
    }

    /// One coefficient vector reused by `depth` layers.
    pub fn shared(coeffs: FilterCoeffs, depth: usize, temperature: f64) -> Result<Self> {
        Self::build(vec![coeffs], depth, temperature, true)
    }

    /// Classical taps `gamma^j` in every layer.
    pub fn classical(gamma: f64, filter_order: usize, depth: usize, temperature: f64, weight_shared: bool) -> Result<Self> {
        let coeffs = FilterCoeffs::classical(gamma, filter_order);
        if weight_shared {
            Self::shared(coeffs, depth, temperature)
        } else {
            Self::new(vec![coeffs; depth], temperature)
        }
    }

    fn build(layers: Vec<FilterCoeffs>, depth: usize, temperature: f64, weight_shared: bool) -> Result<Self> {
        if depth == 0 || layers.is_empty() {
            return Err(Error::arg("BellNet needs at least one layer"));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::arg(format!("temperature must be positive, got {temperature}")));
        }
        let filter_order = layers[0].order();
        if layers.iter().any(|c| c.order() != filter_order) {
            return Err(Error::arg("all layers must share the same filter order"));
        }
        Ok(Self {
            layers,
            depth,
            filter_order,
            temperature,
            weight_shared,
        })
    }

    /// Number of layers `L + 1`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn filter_order(&self) -> usize {
        self.filter_order
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weight_shared(&self) -> bool {
        self.weight_shared
    }

    /// Coefficients used by layer `l`.
    pub fn layer(&self, l: usize) -> &FilterCoeffs {
        if self.weight_shared {
            &self.layers[0]
        } else {
            &self.layers[l]
        }
    }

    /// Stored parameter blocks (one when shared).
    pub fn parameters(&self) -> &[FilterCoeffs] {
        &self.layers
    }

    /// Total number of learnable scalars.
    pub fn num_parameters(&self) -> usize {
        self.layers.len() * (self.filter_order + 2)
    }

    /// Shared models can be unrolled to any depth at inference time.
    pub fn with_depth(&self, depth: usize) -> Result<Self> {
        if !self.weight_shared {
            return Err(Error::arg("only weight-shared models can change depth"));
        }
        Self::shared(self.layers[0].clone(), depth, self.temperature)
    }

    /// Expands a shared model into an unshared one with tied copies.
    pub fn untied(&self) -> Self {
        Self {
            layers: (0..self.depth).map(|l| self.layer(l).clone()).collect(),
            weight_shared: false,
            ..self.clone()
        }
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::build(self.layers.clone(), self.depth, temperature, self.weight_shared)
    }

    /// Flattened parameters, block by block.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|c| c.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::arg(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                flat.len()
            )));
        }
        let width = self.filter_order + 2;
        for (coeffs, chunk) in self.layers.iter_mut().zip(flat.chunks(width)) {
            coeffs.as_mut_slice().copy_from_slice(chunk);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            filter_order: self.filter_order,
            temperature: self.temperature,
            weight_shared: self.weight_shared,
            depth: Some(self.depth),
            layers: self.layers.iter().map(|c| c.as_slice().to_vec()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let layers = ckpt
            .layers
            .into_iter()
            .map(FilterCoeffs::new)
            .collect::<Result<Vec<_>>>()?;
        if layers.iter().any(|c| c.order() != ckpt.filter_order) {
            return Err(Error::arg("checkpoint layers disagree with filter_order"));
        }
        if ckpt.weight_shared {
            if layers.len() != 1 {
                return Err(Error::arg("a weight-shared checkpoint stores exactly one layer"));
            }
            let depth = ckpt.depth.unwrap_or(1);
            Self::shared(layers.into_iter().next().unwrap(), depth, ckpt.temperature)
        } else {
            if ckpt.depth.is_some_and(|d| d != layers.len()) {
                return Err(Error::arg("checkpoint depth disagrees with its layer count"));
            }
            Self::new(layers, ckpt.temperature)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(ckpt)
    }
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub filter_order: usize,
    pub temperature: f64,
    pub weight_shared: bool,
    /// Number of layers; required to restore the depth of a shared model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    pub layers: Vec<Vec<f64>>,
}

/// Per-layer values and policies, `q[0] = q_bar` through `q[L+1] = q_hat`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub q: Vec<ValueFunction>,
    pub policies: Vec<Policy>,
    /// Horner stages of every layer's filter, kept for the backward pass.
    pub(crate) stages: Vec<Vec<DVector<f64>>>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub q_hat: ValueFunction,
    pub pi_hat: Policy,
    pub trace: ForwardTrace,
}

fn readout(q: &ValueFunction, tau: f64, mode: PolicyMode) -> Result<Policy> {
    match mode {
        PolicyMode::Softmax => softmax_policy(&q.matrix(), tau),
        PolicyMode::HardMax => greedy_policy(&q.matrix()),
    }
}

fn layer_stages(
    mdp: &TabularMdp,
    coeffs: &FilterCoeffs,
    pi_l: &Policy,
    q_l: &ValueFunction,
) -> Result<Vec<DVector<f64>>> {
    mdp.check_values(q_l)?;
    let op = mdp.policy_operator(pi_l)?;
    Ok(horner_stages(&op, coeffs, mdp.reward_vector(), q_l.vector()))
}

/// One BellNet layer: biased filter on `P_{pi_l}` then policy readout.
pub fn layer_forward(
    mdp: &TabularMdp,
    coeffs: &FilterCoeffs,
    pi_l: &Policy,
    q_l: &ValueFunction,
    temperature: f64,
    mode: PolicyMode,
) -> Result<(ValueFunction, Policy)> {
    let mut stages = layer_stages(mdp, coeffs, pi_l, q_l)?;
    let q_next = ValueFunction::new(stages.pop().unwrap(), mdp.num_states())
        .map_err(|_| Error::NonFinite { layer: 0 })?;
    let pi_next = readout(&q_next, temperature, mode)?;
    Ok((q_next, pi_next))
}

/// Runs the whole network from `q_bar` with the softmax readout.
pub fn forward(model: &BellNetModel, mdp: &TabularMdp, q_bar: &ValueFunction) -> Result<ForwardOutput> {
    forward_with_mode(model, mdp, q_bar, PolicyMode::Softmax)
}

pub fn forward_with_mode(
    model: &BellNetModel,
    mdp: &TabularMdp,
    q_bar: &ValueFunction,
    mode: PolicyMode,
) -> Result<ForwardOutput> {
    mdp.check_values(q_bar)?;
    let tau = model.temperature();
    let mut qs = Vec::with_capacity(model.depth() + 1);
    let mut policies = Vec::with_capacity(model.depth() + 1);
    let mut stages = Vec::with_capacity(model.depth());
    qs.push(q_bar.clone());
    policies.push(readout(q_bar, tau, mode)?);
    for l in 0..model.depth() {
        let layer = layer_stages(mdp, model.layer(l), &policies[l], &qs[l])?;
        let out = layer.last().unwrap();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        let q_next = ValueFunction::from_vector_unchecked(out.clone(), mdp.num_states());
        policies.push(readout(&q_next, tau, mode)?);
        qs.push(q_next);
        stages.push(layer);
    }
    Ok(ForwardOutput {
        q_hat: qs.last().unwrap().clone(),
        pi_hat: policies.last().unwrap().clone(),
        trace: ForwardTrace { q: qs, policies, stages },
    })
}

/// One-hot argmax of a stochastic policy, ties to the lowest action.
pub fn extract_deterministic_policy(pi_hat: &Policy) -> Policy {
    // probs are finite by construction, so the greedy readout cannot fail
    greedy_policy(pi_hat.probs()).expect("policy probabilities are finite")
}
