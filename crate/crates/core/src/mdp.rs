//! Tabular MDP types and single-step Bellman operators.
//!
//! State-action pairs are flattened with `idx(s, a) = a * |S| + s`, which is
//! the column-stacking `vec` of an `|S| x |A|` matrix. nalgebra matrices are
//! column-major, so `DMatrix::from_column_slice(|S|, |A|, q)` is `unvec(q)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied to every probability row on construction.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Flat index of the pair `(s, a)`.
pub fn idx(s: usize, a: usize, num_states: usize, num_actions: usize) -> Result<usize> {
    if s >= num_states || a >= num_actions {
        return Err(Error::arg(format!(
            "pair ({s}, {a}) out of range for {num_states} states and {num_actions} actions"
        )));
    }
    Ok(a * num_states + s)
}

/// Inverse of [`idx`].
pub fn unidx(flat: usize, num_states: usize, num_actions: usize) -> Result<(usize, usize)> {
    if num_states == 0 || flat >= num_states * num_actions {
        return Err(Error::arg(format!(
            "flat index {flat} out of range for {num_states} states and {num_actions} actions"
        )));
    }
    Ok((flat % num_states, flat / num_states))
}

fn check_row_stochastic(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::arg(format!("{what} row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::arg(format!("{what} row {i} sums to {sum}, expected 1")));
        }
    }
    Ok(())
}

fn renormalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        row /= sum;
    }
}

/// A finite MDP with a known transition model.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `|S||A| x |S|`, rows indexed by `idx(s, a)`.
    transition: DMatrix<f64>,
    /// `|S| x |A|`.
    reward: DMatrix<f64>,
    /// `vec(reward)`, cached.
    reward_vec: DVector<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(transition: DMatrix<f64>, reward: DMatrix<f64>, discount: f64) -> Result<Self> {
        let (num_states, num_actions) = reward.shape();
        if num_states == 0 || num_actions == 0 {
            return Err(Error::arg("an MDP needs at least one state and one action"));
        }
        if transition.shape() != (num_states * num_actions, num_states) {
            return Err(Error::arg(format!(
                "transition is {:?}, expected ({}, {})",
                transition.shape(),
                num_states * num_actions,
                num_states
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::arg(format!("discount {discount} outside [0, 1)")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::arg("reward entries must be finite"));
        }
        let mut transition = transition;
        check_row_stochastic(&transition, "transition")?;
        renormalize_rows(&mut transition);
        let reward_vec = DVector::from_column_slice(reward.as_slice());
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            reward_vec,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `|S||A|`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.reward
    }

    /// `r = vec(R)`.
    pub fn reward_vector(&self) -> &DVector<f64> {
        &self.reward_vec
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.transition.clone(), self.reward.clone(), discount)
    }

    /// Same dynamics with every reward multiplied by `factor`.
    pub fn with_scaled_reward(&self, factor: f64) -> Result<Self> {
        Self::new(self.transition.clone(), &self.reward * factor, self.discount)
    }

    pub fn index(&self, s: usize, a: usize) -> Result<usize> {
        idx(s, a, self.num_states, self.num_actions)
    }

    pub fn zero_values(&self) -> ValueFunction {
        ValueFunction::zeros(self.num_states, self.num_actions)
    }

    pub(crate) fn check_values(&self, q: &ValueFunction) -> Result<()> {
        if q.num_states() != self.num_states || q.num_actions() != self.num_actions {
            return Err(Error::arg(format!(
                "value function is {}x{}, MDP is {}x{}",
                q.num_states(),
                q.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.probs().shape() != (self.num_states, self.num_actions) {
            return Err(Error::arg(format!(
                "policy is {:?}, MDP is {}x{}",
                pi.probs().shape(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Implicit `P_pi` for `pi`, applied without materializing the matrix.
    pub fn policy_operator<'a>(&'a self, pi: &'a Policy) -> Result<PolicyOperator<'a>> {
        self.check_policy(pi)?;
        Ok(PolicyOperator { mdp: self, policy: pi })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpFile::from(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// On-disk MDP layout. `transition` rows follow the flat index order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
}

impl From<&TabularMdp> for MdpFile {
    fn from(mdp: &TabularMdp) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        MdpFile {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            discount: mdp.discount,
            transition: rows(&mdp.transition),
            reward: rows(&mdp.reward),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::arg(format!("{what} must be {nrows} rows of {ncols} columns")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let transition = matrix_from_rows(
            &f.transition,
            f.num_states * f.num_actions,
            f.num_states,
            "transition",
        )?;
        let reward = matrix_from_rows(&f.reward, f.num_states, f.num_actions, "reward")?;
        TabularMdp::new(transition, reward, f.discount)
    }
}

/// Row-stochastic `|S| x |A|` action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::arg("empty policy"));
        }
        check_row_stochastic(&probs, "policy")?;
        Ok(Self { probs })
    }

    /// Skips validation; callers guarantee stochastic rows.
    pub(crate) fn from_probs_unchecked(probs: DMatrix<f64>) -> Self {
        Self { probs }
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    /// One-hot policy taking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::arg(format!("action {a} out of range")));
        }
        let probs = DMatrix::from_fn(actions.len(), num_actions, |s, a| {
            if actions[s] == a {
                1.0
            } else {
                0.0
            }
        });
        Policy::new(probs)
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs
            .row_iter()
            .all(|row| row.iter().filter(|&&p| p == 1.0).count() == 1 && row.iter().all(|&p| p == 0.0 || p == 1.0))
    }

    /// Most probable action per state, ties to the lowest index.
    pub fn argmax_actions(&self) -> Vec<usize> {
        self.probs.row_iter().map(|row| argmax(row.iter().copied())).collect()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// State-action values stored as `vec(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    q: DVector<f64>,
    num_states: usize,
}

impl ValueFunction {
    pub fn new(q: DVector<f64>, num_states: usize) -> Result<Self> {
        if num_states == 0 || q.len() % num_states != 0 || q.is_empty() {
            return Err(Error::arg(format!(
                "length {} is not a positive multiple of {num_states}",
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("value function entries must be finite"));
        }
        Ok(Self { q, num_states })
    }

    pub(crate) fn from_vector_unchecked(q: DVector<f64>, num_states: usize) -> Self {
        Self { q, num_states }
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            q: DVector::zeros(num_states * num_actions),
            num_states,
        }
    }

    /// `vec(Q)` for an `|S| x |A|` matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::from_column_slice(m.as_slice()), m.nrows())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.q.len() / self.num_states
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.q
    }

    /// `unvec(q)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.num_states, self.num_actions(), self.q.as_slice())
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[a * self.num_states + s]
    }

    /// `v[s] = max_a Q[s][a]`.
    pub fn state_values(&self) -> DVector<f64> {
        let n = self.num_states;
        DVector::from_fn(n, |s, _| {
            (0..self.num_actions())
                .map(|a| self.q[a * n + s])
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        (&self.q - &other.q).amax()
    }
}

/// A linear shift operator on graph signals: the adjacency of the graph a
/// filter diffuses over.
pub trait GraphShift {
    fn dim(&self) -> usize;

    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl GraphShift for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
}

/// `P_pi` applied as `P (pi-weighted gather)`: `(P_pi x)[sa] = sum_s' P[sa][s'] sum_a' pi[s'][a'] x[s'a']`.
///
/// Costs `O(|S|^2 |A|)` per product instead of `O(|S|^2 |A|^2)`.
#[derive(Debug, Clone, Copy)]
pub struct PolicyOperator<'a> {
    mdp: &'a TabularMdp,
    policy: &'a Policy,
}

impl PolicyOperator<'_> {
    /// `sum_a pi[s][a] x[idx(s, a)]` for each state.
    pub fn gather(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.mdp.num_states;
        let pi = &self.policy.probs;
        DVector::from_fn(n, |s, _| {
            (0..self.mdp.num_actions).map(|a| pi[(s, a)] * x[a * n + s]).sum()
        })
    }

    /// `P_pi^T y`. Returns `(P^T y, P_pi^T y)`; the first factor is what the
    /// policy gradient needs.
    pub fn apply_transpose(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.mdp.num_states;
        let u = self.mdp.transition.tr_mul(y);
        let pi = &self.policy.probs;
        let out = DVector::from_fn(self.mdp.num_pairs(), |i, _| {
            let (s, a) = (i % n, i / n);
            pi[(s, a)] * u[s]
        });
        (u, out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.mdp.num_states;
        let m = self.mdp.num_actions;
        let p = &self.mdp.transition;
        let pi = &self.policy.probs;
        DMatrix::from_fn(n * m, n * m, |row, col| {
            let (s2, a2) = (col % n, col / n);
            p[(row, s2)] * pi[(s2, a2)]
        })
    }
}

impl GraphShift for PolicyOperator<'_> {
    fn dim(&self) -> usize {
        self.mdp.num_pairs()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mdp.transition * self.gather(x)
    }
}

/// Dense `P_pi = P (I kr Pi^T)^T`, entrywise `P[(s,a)][s'] * pi[s'][a']`.
pub fn policy_transition(mdp: &TabularMdp, pi: &Policy) -> Result<DMatrix<f64>> {
    Ok(mdp.policy_operator(pi)?.to_dense())
}

/// `r + gamma * P_pi * q`.
pub fn bellman_backup(
    q: &ValueFunction,
    p_pi: &DMatrix<f64>,
    r: &DVector<f64>,
    gamma: f64,
) -> Result<ValueFunction> {
    let n = q.vector().len();
    if p_pi.shape() != (n, n) || r.len() != n {
        return Err(Error::arg(format!(
            "bellman_backup: q has length {n}, P_pi is {:?}, r has length {}",
            p_pi.shape(),
            r.len()
        )));
    }
    let mut out = r.clone();
    out.gemv(gamma, p_pi, q.vector(), 1.0);
    Ok(ValueFunction::from_vector_unchecked(out, q.num_states()))
}

/// Same as [`bellman_backup`] through the implicit operator.
pub(crate) fn backup_with(op: &impl GraphShift, q: &DVector<f64>, r: &DVector<f64>, gamma: f64) -> DVector<f64> {
    let mut out = op.apply(q);
    out *= gamma;
    out += r;
    out
}

/// One-hot argmax per row of `q_matrix`, ties to the lowest action.
pub fn greedy_policy(q_matrix: &DMatrix<f64>) -> Result<Policy> {
    if q_matrix.iter().any(|v| v.is_nan()) {
        return Err(Error::arg("greedy_policy: Q contains NaN"));
    }
    let (n, m) = q_matrix.shape();
    let mut probs = DMatrix::zeros(n, m);
    for (s, row) in q_matrix.row_iter().enumerate() {
        probs[(s, argmax(row.iter().copied()))] = 1.0;
    }
    Ok(Policy::from_probs_unchecked(probs))
}

/// Row-wise softmax of `Q / tau` with row-max subtraction.
pub fn softmax_policy(q_matrix: &DMatrix<f64>, tau: f64) -> Result<Policy> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::arg(format!("temperature must be positive, got {tau}")));
    }
    if q_matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("softmax_policy: Q must be finite"));
    }
    let mut probs = q_matrix.clone();
    for mut row in probs.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = ((*v - max) / tau).exp());
        let sum: f64 = row.sum();
        row /= sum;
    }
    Ok(Policy::from_probs_unchecked(probs))
}

/// `r + gamma * P * v` with `v[s] = max_a Q[s][a]`.
pub fn bellman_optimality_backup(q: &ValueFunction, mdp: &TabularMdp) -> Result<ValueFunction> {
    mdp.check_values(q)?;
    let v = q.state_values();
    let mut out = mdp.reward_vector().clone();
    out.gemv(mdp.discount(), mdp.transition(), &v, 1.0);
    Ok(ValueFunction::from_vector_unchecked(out, mdp.num_states()))
}

/// `|| q - T*(q) ||_inf`.
pub fn optimality_residual(q: &ValueFunction, mdp: &TabularMdp) -> Result<f64> {
    Ok(q.sup_distance(&bellman_optimality_backup(q, mdp)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two_uniform() -> TabularMdp {
        TabularMdp::new(DMatrix::from_element(4, 2, 0.5), DMatrix::from_element(2, 2, 1.0), 0.9).unwrap()
    }

    #[test]
    fn idx_examples() {
        assert_eq!(idx(0, 0, 4, 2).unwrap(), 0);
        assert_eq!(idx(3, 1, 4, 2).unwrap(), 7);
        assert!(idx(4, 0, 4, 2).is_err());
        assert!(idx(0, 2, 4, 2).is_err());
        for s in 0..3 {
            for a in 0..2 {
                let i = idx(s, a, 3, 2).unwrap();
                assert_eq!(unidx(i, 3, 2).unwrap(), (s, a));
            }
        }
        assert!(unidx(6, 3, 2).is_err());
    }

    #[test]
    fn constructor_rejects_bad_rows() {
        let mut p = DMatrix::from_element(4, 2, 0.5);
        p[(1, 0)] = 0.6;
        assert!(TabularMdp::new(p, DMatrix::zeros(2, 2), 0.9).is_err());
        let p = DMatrix::from_element(4, 2, 0.5);
        assert!(TabularMdp::new(p.clone(), DMatrix::zeros(2, 2), 1.0).is_err());
        assert!(TabularMdp::new(p.clone(), DMatrix::zeros(3, 2), 0.5).is_err());
        let mut r = DMatrix::zeros(2, 2);
        r[(0, 0)] = f64::INFINITY;
        assert!(TabularMdp::new(p, r, 0.5).is_err());
    }

    #[test]
    fn uniform_policy_transition_is_quarter() {
        let mdp = two_by_two_uniform();
        let p_pi = policy_transition(&mdp, &Policy::uniform(2, 2)).unwrap();
        assert!(p_pi.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn one_hot_policy_transition() {
        let p = DMatrix::from_row_slice(4, 2, &[0.3, 0.7, 1.0, 0.0, 0.5, 0.5, 0.1, 0.9]);
        let mdp = TabularMdp::new(p.clone(), DMatrix::zeros(2, 2), 0.5).unwrap();
        let pi = Policy::deterministic(&[0, 0], 2).unwrap();
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        for row in 0..4 {
            for s2 in 0..2 {
                assert_eq!(p_pi[(row, s2)], p[(row, s2)]);
                assert_eq!(p_pi[(row, 2 + s2)], 0.0);
            }
        }
    }

    #[test]
    fn policy_dimension_mismatch() {
        let mdp = two_by_two_uniform();
        assert!(policy_transition(&mdp, &Policy::uniform(3, 2)).is_err());
    }

    #[test]
    fn backup_zero_cases() {
        let mdp = two_by_two_uniform();
        let p_pi = policy_transition(&mdp, &Policy::uniform(2, 2)).unwrap();
        let q = ValueFunction::new(DVector::from_vec(vec![1.0, -2.0, 3.0, 4.0]), 2).unwrap();
        let r = mdp.reward_vector();
        assert_eq!(bellman_backup(&q, &p_pi, r, 0.0).unwrap().vector(), r);
        let zero = mdp.zero_values();
        let out = bellman_backup(&zero, &p_pi, &DVector::zeros(4), 0.9).unwrap();
        assert!(out.vector().iter().all(|&v| v == 0.0));
        assert!(bellman_backup(&q, &p_pi, &DVector::zeros(3), 0.9).is_err());
    }

    #[test]
    fn greedy_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.0]);
        let pi = greedy_policy(&q).unwrap();
        assert_eq!(pi.probs(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let tied = DMatrix::from_row_slice(1, 2, &[5.0, 5.0]);
        assert_eq!(greedy_policy(&tied).unwrap().argmax_actions(), vec![0]);
        let shifted = DMatrix::from_row_slice(2, 2, &[11.0, 12.0, -7.0, -10.0]);
        assert_eq!(greedy_policy(&shifted).unwrap(), pi);
        let nan = DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(greedy_policy(&nan).is_err());
    }

    #[test]
    fn softmax_examples() {
        let zero = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        for tau in [1e-3, 1.0, 1e3] {
            let p = softmax_policy(&zero, tau).unwrap();
            assert_eq!(p.probs()[(0, 0)], 0.5);
        }
        let q = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let p = softmax_policy(&q, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p.probs()[(0, 0)] - e * e / (e * e + e)).abs() < 1e-15);
        assert!((p.probs()[(0, 0)] - 0.7311).abs() < 1e-4);
        assert!((p.probs()[(0, 1)] - 0.2689).abs() < 1e-4);

        let q = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let cold = softmax_policy(&q, 1e-4).unwrap();
        assert!((cold.probs()[(0, 0)] - 1.0).abs() < 1e-12);
        let hot = softmax_policy(&q, 1e6).unwrap();
        assert!((hot.probs()[(0, 0)] - 0.5).abs() < 1e-6);

        assert!(softmax_policy(&q, 0.0).is_err());
        assert!(softmax_policy(&q, -1.0).is_err());
    }

    #[test]
    fn softmax_handles_huge_entries() {
        let q = DMatrix::from_row_slice(2, 3, &[1e6, -1e6, 0.0, -1e6, -1e6, -1e6 + 1.0]);
        let p = softmax_policy(&q, 0.25).unwrap();
        for row in p.probs().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optimality_backup_single_action_matches_policy_backup() {
        let p = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8]);
        let r = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.5]);
        let mdp = TabularMdp::new(p, r, 0.8).unwrap();
        let q = ValueFunction::new(DVector::from_vec(vec![0.3, 2.0, -4.0]), 3).unwrap();
        let p_pi = policy_transition(&mdp, &Policy::uniform(3, 1)).unwrap();
        let a = bellman_optimality_backup(&q, &mdp).unwrap();
        let b = bellman_backup(&q, &p_pi, mdp.reward_vector(), 0.8).unwrap();
        assert!(a.sup_distance(&b) < 1e-15);

        let mdp0 = mdp.with_discount(0.0).unwrap();
        assert_eq!(bellman_optimality_backup(&q, &mdp0).unwrap().vector(), mdp0.reward_vector());
    }

    #[test]
    fn unvec_is_column_stacking() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let q = ValueFunction::from_matrix(&m).unwrap();
        assert_eq!(q.vector().as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(q.matrix(), m);
        assert_eq!(q.get(2, 1), 6.0);
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let mdp = two_by_two_uniform();
        let back = TabularMdp::from_json_str(&mdp.to_json_string().unwrap()).unwrap();
        assert_eq!(back, mdp);
        let bad = r#"{"num_states":1,"num_actions":1,"discount":0.5,"transition":[[0.9]],"reward":[[1.0]]}"#;
        assert!(TabularMdp::from_json_str(bad).is_err());
        let near = r#"{"num_states":1,"num_actions":1,"discount":0.5,"transition":[[1.0000000000001]],"reward":[[1.0]]}"#;
        let ok = TabularMdp::from_json_str(near).unwrap();
        assert_eq!(ok.transition()[(0, 0)], 1.0);
    }
}
