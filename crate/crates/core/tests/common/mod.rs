#![allow(dead_code)]

use bellnet::{Policy, TabularMdp, ValueFunction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense random MDP with rewards in `[-1, 1]`.
pub fn random_mdp(rng: &mut impl Rng, num_states: usize, num_actions: usize, gamma: f64) -> TabularMdp {
    let mut p = DMatrix::from_fn(num_states * num_actions, num_states, |_, _| rng.random_range(0.01..1.0));
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let r = DMatrix::from_fn(num_states, num_actions, |_, _| rng.random_range(-1.0..1.0));
    TabularMdp::new(p, r, gamma).unwrap()
}

pub fn random_policy(rng: &mut impl Rng, num_states: usize, num_actions: usize) -> Policy {
    let mut p = DMatrix::from_fn(num_states, num_actions, |_, _| rng.random_range(0.01..1.0));
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    Policy::new(p).unwrap()
}

pub fn random_values(rng: &mut impl Rng, num_states: usize, num_actions: usize, scale: f64) -> ValueFunction {
    let q = DVector::from_fn(num_states * num_actions, |_, _| rng.random_range(-scale..scale));
    ValueFunction::new(q, num_states).unwrap()
}

/// `P_pi[(s,a), (s',a')] = P[(s,a), s'] * pi[s', a']` by explicit loops.
pub fn brute_force_p_pi(mdp: &TabularMdp, pi: &Policy) -> DMatrix<f64> {
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let mut out = DMatrix::zeros(n * m, n * m);
    for s in 0..n {
        for a in 0..m {
            for s2 in 0..n {
                for a2 in 0..m {
                    out[(a * n + s, a2 * n + s2)] = mdp.transition()[(a * n + s, s2)] * pi.probs()[(s2, a2)];
                }
            }
        }
    }
    out
}

/// Exact `q_pi = (I - gamma P_pi)^{-1} r` via a dense inverse.
pub fn exact_q(mdp: &TabularMdp, pi: &Policy) -> DVector<f64> {
    let p_pi = brute_force_p_pi(mdp, pi);
    let n = p_pi.nrows();
    let inv = (DMatrix::identity(n, n) - p_pi * mdp.discount()).try_inverse().unwrap();
    inv * mdp.reward_vector()
}

/// Applies a flat-index permutation: entry `i` moves to `perm[i]`.
pub fn permute(v: &DVector<f64>, perm: &[usize]) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (i, &j) in perm.iter().enumerate() {
        out[j] = v[i];
    }
    out
}

pub fn sup(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
