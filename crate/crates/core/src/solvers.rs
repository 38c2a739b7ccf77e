//! Classical dynamic-programming baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{
    backup_with, bellman_optimality_backup, greedy_policy, optimality_residual, GraphShift, Policy,
    TabularMdp, ValueFunction,
};

/// Residual at which the optimal values are considered converged.
pub const OPTIMAL_RESIDUAL_TOL: f64 = 1e-10;
/// Iteration cap for [`solve_optimal`].
pub const OPTIMAL_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub q: ValueFunction,
    pub policy: Policy,
    /// `|| q - T*(q) ||_inf`.
    pub residual: f64,
    pub iterations_used: usize,
    /// `q` after every outer iteration, `trajectory[0]` being the input.
    pub trajectory: Vec<ValueFunction>,
}

/// How each evaluation inside policy iteration is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalStart {
    /// Reuse the previous estimate.
    #[default]
    Warm,
    /// Restart from zero.
    Cold,
}

/// `k` Bellman backups under `p_pi` starting from `q0`.
pub fn policy_evaluation_iterative(
    p_pi: &impl GraphShift,
    r: &DVector<f64>,
    gamma: f64,
    steps: usize,
    q0: &ValueFunction,
) -> Result<ValueFunction> {
    let n = p_pi.dim();
    if r.len() != n || q0.vector().len() != n {
        return Err(Error::arg(format!(
            "policy evaluation: operator dimension {n}, r length {}, q0 length {}",
            r.len(),
            q0.vector().len()
        )));
    }
    let mut q = q0.vector().clone();
    for _ in 0..steps {
        q = backup_with(p_pi, &q, r, gamma);
    }
    Ok(ValueFunction::from_vector_unchecked(q, q0.num_states()))
}

/// Solves `(I - gamma P_pi) q = r` densely, with one refinement step.
pub fn policy_evaluation_exact(p_pi: &DMatrix<f64>, r: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let n = r.len();
    if p_pi.shape() != (n, n) {
        return Err(Error::arg(format!("P_pi is {:?}, r has length {n}", p_pi.shape())));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Numeric(format!("I - gamma P_pi may be singular for gamma = {gamma}")));
    }
    let system = DMatrix::identity(n, n) - p_pi * gamma;
    let lu = system.clone().lu();
    let mut q = lu
        .solve(r)
        .ok_or_else(|| Error::Numeric("singular policy evaluation system".into()))?;
    let correction = lu.solve(&(r - &system * &q)).unwrap_or_else(|| DVector::zeros(n));
    q += correction;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("policy evaluation produced non-finite values".into()));
    }
    Ok(q)
}

/// Exact `q_pi` for a policy on `mdp`.
pub fn evaluate_policy(mdp: &TabularMdp, pi: &Policy) -> Result<ValueFunction> {
    let p_pi = mdp.policy_operator(pi)?.to_dense();
    let q = policy_evaluation_exact(&p_pi, mdp.reward_vector(), mdp.discount())?;
    Ok(ValueFunction::from_vector_unchecked(q, mdp.num_states()))
}

/// `improve_steps` rounds of `eval_steps`-step evaluation followed by greedy
/// improvement, starting from `greedy(q0)`.
pub fn policy_iteration(
    mdp: &TabularMdp,
    eval_steps: usize,
    improve_steps: usize,
    q0: &ValueFunction,
) -> Result<SolverReport> {
    policy_iteration_with(mdp, eval_steps, improve_steps, q0, EvalStart::Warm)
}

pub fn policy_iteration_with(
    mdp: &TabularMdp,
    eval_steps: usize,
    improve_steps: usize,
    q0: &ValueFunction,
    start: EvalStart,
) -> Result<SolverReport> {
    if eval_steps == 0 || improve_steps == 0 {
        return Err(Error::arg("policy iteration needs at least one evaluation and one improvement step"));
    }
    mdp.check_values(q0)?;
    let r = mdp.reward_vector();
    let mut q = q0.clone();
    let mut policy = greedy_policy(&q.matrix())?;
    let mut trajectory = Vec::with_capacity(improve_steps + 1);
    trajectory.push(q.clone());
    for _ in 0..improve_steps {
        let init = match start {
            EvalStart::Warm => q,
            EvalStart::Cold => mdp.zero_values(),
        };
        let op = mdp.policy_operator(&policy)?;
        q = policy_evaluation_iterative(&op, r, mdp.discount(), eval_steps, &init)?;
        policy = greedy_policy(&q.matrix())?;
        trajectory.push(q.clone());
    }
    Ok(SolverReport {
        residual: optimality_residual(&q, mdp)?,
        q,
        policy,
        iterations_used: improve_steps,
        trajectory,
    })
}

/// `steps` applications of the Bellman optimality backup.
pub fn value_iteration(mdp: &TabularMdp, steps: usize, q0: &ValueFunction) -> Result<SolverReport> {
    if steps == 0 {
        return Err(Error::arg("value iteration needs at least one step"));
    }
    mdp.check_values(q0)?;
    let mut q = q0.clone();
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(q.clone());
    for _ in 0..steps {
        q = bellman_optimality_backup(&q, mdp)?;
        trajectory.push(q.clone());
    }
    Ok(SolverReport {
        policy: greedy_policy(&q.matrix())?,
        residual: optimality_residual(&q, mdp)?,
        q,
        iterations_used: steps,
        trajectory,
    })
}

/// Optimal values via policy iteration with exact evaluation, polished by
/// optimality backups until the residual drops below [`OPTIMAL_RESIDUAL_TOL`]
/// or [`OPTIMAL_MAX_ITERATIONS`] iterations have run.
pub fn solve_optimal(mdp: &TabularMdp) -> Result<SolverReport> {
    let mut policy = greedy_policy(&DMatrix::from_column_slice(
        mdp.num_states(),
        mdp.num_actions(),
        mdp.reward_vector().as_slice(),
    ))?;
    let mut q = evaluate_policy(mdp, &policy)?;
    let mut trajectory = vec![q.clone()];
    let mut iterations = 0;
    while iterations < OPTIMAL_MAX_ITERATIONS {
        iterations += 1;
        let improved = greedy_policy(&q.matrix())?;
        if improved == policy {
            break;
        }
        policy = improved;
        q = evaluate_policy(mdp, &policy)?;
        trajectory.push(q.clone());
    }
    let mut residual = optimality_residual(&q, mdp)?;
    while residual >= OPTIMAL_RESIDUAL_TOL && iterations < OPTIMAL_MAX_ITERATIONS {
        iterations += 1;
        q = bellman_optimality_backup(&q, mdp)?;
        residual = optimality_residual(&q, mdp)?;
    }
    Ok(SolverReport {
        policy: greedy_policy(&q.matrix())?,
        q,
        residual,
        iterations_used: iterations,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::policy_transition;

    fn small_mdp(gamma: f64) -> TabularMdp {
        let p = DMatrix::from_row_slice(
            6,
            3,
            &[
                0.5, 0.5, 0.0, //
                0.0, 0.2, 0.8, //
                1.0, 0.0, 0.0, //
                0.1, 0.1, 0.8, //
                0.0, 0.0, 1.0, //
                0.3, 0.3, 0.4, //
            ],
        );
        let r = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 2.0, 0.5, 0.3]);
        TabularMdp::new(p, r, gamma).unwrap()
    }

    #[test]
    fn zero_and_one_step_evaluation() {
        let mdp = small_mdp(0.9);
        let pi = Policy::uniform(3, 2);
        let op = mdp.policy_operator(&pi).unwrap();
        let q0 = ValueFunction::new(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 3).unwrap();
        let r = mdp.reward_vector();
        assert_eq!(policy_evaluation_iterative(&op, r, 0.9, 0, &q0).unwrap(), q0);
        let one = policy_evaluation_iterative(&op, r, 0.9, 1, &q0).unwrap();
        let expected = r + op.to_dense() * q0.vector() * 0.9;
        assert!((one.vector() - expected).amax() < 1e-14);
    }

    #[test]
    fn exact_evaluation_scalar_and_zero_discount() {
        let q = policy_evaluation_exact(&DMatrix::from_element(1, 1, 1.0), &DVector::from_element(1, 1.0), 0.5)
            .unwrap();
        assert!((q[0] - 2.0).abs() < 1e-15);
        let mdp = small_mdp(0.0);
        let p_pi = policy_transition(&mdp, &Policy::uniform(3, 2)).unwrap();
        let q = policy_evaluation_exact(&p_pi, mdp.reward_vector(), 0.0).unwrap();
        assert_eq!(&q, mdp.reward_vector());
        assert!(policy_evaluation_exact(&p_pi, mdp.reward_vector(), 1.0).is_err());
    }

    #[test]
    fn solver_argument_checks() {
        let mdp = small_mdp(0.9);
        let q0 = mdp.zero_values();
        assert!(policy_iteration(&mdp, 0, 1, &q0).is_err());
        assert!(policy_iteration(&mdp, 1, 0, &q0).is_err());
        assert!(value_iteration(&mdp, 0, &q0).is_err());
        assert!(value_iteration(&mdp, 1, &ValueFunction::zeros(2, 2)).is_err());
    }

    #[test]
    fn value_iteration_zero_discount() {
        let mdp = small_mdp(0.0);
        let report = value_iteration(&mdp, 1, &mdp.zero_values()).unwrap();
        assert_eq!(report.q.vector(), mdp.reward_vector());
        assert_eq!(report.policy, greedy_policy(mdp.reward()).unwrap());
    }

    #[test]
    fn optimal_solution_is_a_fixed_point() {
        let mdp = small_mdp(0.95);
        let report = solve_optimal(&mdp).unwrap();
        assert!(report.residual < OPTIMAL_RESIDUAL_TOL);
        let backed = bellman_optimality_backup(&report.q, &mdp).unwrap();
        assert!(backed.sup_distance(&report.q) < 1e-8);
    }

    #[test]
    fn cold_start_differs_from_warm_start() {
        let mdp = small_mdp(0.9);
        let q0 = ValueFunction::new(DVector::from_element(6, 5.0), 3).unwrap();
        let warm = policy_iteration_with(&mdp, 2, 3, &q0, EvalStart::Warm).unwrap();
        let cold = policy_iteration_with(&mdp, 2, 3, &q0, EvalStart::Cold).unwrap();
        assert!(warm.q.sup_distance(&cold.q) > 1e-6);
    }
}
