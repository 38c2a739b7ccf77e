mod common;

use bellnet::env::{build_cliff_mdp, mirror_permutation, mirror_spec, Action, GridSpec};
use bellnet::experiment::nerr;
use bellnet::filter::{filtered_evaluation, FilterCoeffs};
use bellnet::mdp::greedy_policy;
use bellnet::model::{forward, forward_with_mode, PolicyMode};
use bellnet::solvers::{
    evaluate_policy, policy_evaluation_exact, policy_iteration, solve_optimal, value_iteration,
};
use bellnet::training::{bellman_target, loss_and_gradient, train, Init, TrainConfig};
use bellnet::{BellNetModel, TabularMdp, ValueFunction};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn exact_evaluation_matches_neumann_series() {
    let mut rng = rng(11);
    for gamma in [0.5, 0.9] {
        let mdp = random_mdp(&mut rng, 4, 3, gamma);
        let pi = random_policy(&mut rng, 4, 3);
        let p_pi = brute_force_p_pi(&mdp, &pi);
        let mut term = mdp.reward_vector().clone();
        let mut series = term.clone();
        for _ in 0..2000 {
            term = &p_pi * term * gamma;
            series += &term;
        }
        let q = policy_evaluation_exact(&p_pi, mdp.reward_vector(), gamma).unwrap();
        assert!(sup(&q, &series) < 1e-10);
        assert!(sup(&q, &exact_q(&mdp, &pi)) < 1e-10);
    }
}

#[test]
fn policy_iteration_improves_monotonically() {
    let mut rng = rng(12);
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let q0 = random_values(&mut rng, 5, 3, 10.0);
        let report = policy_iteration(&mdp, 500, 6, &q0).unwrap();
        let values: Vec<DVector<f64>> = report
            .trajectory
            .iter()
            .skip(1)
            .map(|q| evaluate_policy(&mdp, &greedy_policy(&q.matrix()).unwrap()).unwrap().into_vector())
            .collect();
        for pair in values.windows(2) {
            assert!((&pair[1] - &pair[0]).min() > -1e-9);
        }
    }
}

#[test]
fn value_iteration_is_policy_iteration_with_one_evaluation_step() {
    let mut rng = rng(13);
    let mdp = random_mdp(&mut rng, 5, 3, 0.95);
    let q0 = random_values(&mut rng, 5, 3, 4.0);
    let vi = value_iteration(&mdp, 20, &q0).unwrap();
    let pi = policy_iteration(&mdp, 1, 20, &q0).unwrap();
    for (a, b) in vi.trajectory.iter().zip(&pi.trajectory) {
        assert!(a.sup_distance(b) < 1e-12);
    }
}

#[test]
fn converged_policy_iteration_on_cliff_walking() {
    let mdp = build_cliff_mdp(&GridSpec::default(), 0.99).unwrap();
    let report = policy_iteration(&mdp, 3000, 40, &mdp.zero_values()).unwrap();
    assert!(report.residual < 1e-8, "residual {}", report.residual);
    let last = greedy_policy(&report.trajectory[39].matrix()).unwrap();
    assert_eq!(last, report.policy);
}

#[test]
fn filter_matches_explicit_matrix_powers() {
    let mut rng = rng(14);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9);
    let pi = random_policy(&mut rng, 3, 2);
    let p_pi = brute_force_p_pi(&mdp, &pi);
    let op = mdp.policy_operator(&pi).unwrap();
    let q0 = random_values(&mut rng, 3, 2, 2.0).into_vector();
    let h: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coeffs = FilterCoeffs::new(h.clone()).unwrap();
    let r = mdp.reward_vector();
    let mut expected = DVector::zeros(6);
    let mut power = DMatrix::identity(6, 6);
    for &hj in &h[..5] {
        expected += &power * r * hj;
        power = &p_pi * power;
    }
    expected += power * &q0 * h[5];
    let got = filtered_evaluation(&op, r, &q0, &coeffs).unwrap();
    assert!(sup(&got, &expected) < 1e-13);
}

#[test]
fn hardmax_network_reproduces_dp_trajectories() {
    let mdp = build_cliff_mdp(&GridSpec::default(), 0.99).unwrap();
    let mut rng = rng(15);
    let q_bar = random_values(&mut rng, mdp.num_states(), 4, 1.0);

    let vi = value_iteration(&mdp, 6, &q_bar).unwrap();
    let net = BellNetModel::classical(0.99, 0, 6, 1.0, true).unwrap();
    let out = forward_with_mode(&net, &mdp, &q_bar, PolicyMode::HardMax).unwrap();
    for (a, b) in out.trace.q.iter().zip(&vi.trajectory) {
        assert!(a.sup_distance(b) < 1e-12);
    }

    let pi = policy_iteration(&mdp, 4, 5, &q_bar).unwrap();
    let net = BellNetModel::classical(0.99, 3, 5, 1.0, false).unwrap();
    let out = forward_with_mode(&net, &mdp, &q_bar, PolicyMode::HardMax).unwrap();
    for (a, b) in out.trace.q.iter().zip(&pi.trajectory) {
        assert!(a.sup_distance(b) < 1e-12 * b.vector().amax().max(1.0));
    }
}

fn small_setup(seed: u64) -> (TabularMdp, ValueFunction, DVector<f64>) {
    let mut rng = rng(seed);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9);
    let q_bar = random_values(&mut rng, 3, 2, 1.0);
    let target = random_values(&mut rng, 3, 2, 3.0).into_vector();
    (mdp, q_bar, target)
}

#[test]
fn shared_gradient_is_sum_of_untied_gradients() {
    let (mdp, q_bar, target) = small_setup(16);
    let shared = BellNetModel::classical(0.9, 2, 3, 0.5, true).unwrap();
    let g_shared = loss_and_gradient(&shared, &mdp, &q_bar, &target).unwrap();
    let g_untied = loss_and_gradient(&shared.untied(), &mdp, &q_bar, &target).unwrap();
    assert_eq!(g_shared.grads.len(), 1);
    assert_eq!(g_untied.grads.len(), 3);
    assert!((g_shared.loss - g_untied.loss).abs() < 1e-14);
    for j in 0..4 {
        let sum: f64 = g_untied.grads.iter().map(|g| g[j]).sum();
        assert!((sum - g_shared.grads[0][j]).abs() < 1e-10 * sum.abs().max(1.0));
    }
}

#[test]
fn target_is_held_constant() {
    let (mdp, q_bar, _) = small_setup(17);
    let model = BellNetModel::classical(0.9, 2, 2, 0.5, true).unwrap();
    let out = forward(&model, &mdp, &q_bar).unwrap();
    let target = bellman_target(&mdp, &out.q_hat, &out.pi_hat).unwrap();
    let bundle = loss_and_gradient(&model, &mdp, &q_bar, &target).unwrap();
    assert_eq!(bellman_target(&mdp, &out.q_hat, &out.pi_hat).unwrap(), target);

    // the derivative treats the target as a constant: a finite difference that
    // also moves the target gives a different answer
    let step = 1e-6;
    let loss_moving_target = |delta: f64| {
        let mut m = model.clone();
        let mut p = m.flat_parameters();
        p[0] += delta;
        m.set_flat_parameters(&p).unwrap();
        let o = forward(&m, &mdp, &q_bar).unwrap();
        let t = bellman_target(&mdp, &o.q_hat, &o.pi_hat).unwrap();
        (o.q_hat.vector() - t).norm_squared()
    };
    let moving = (loss_moving_target(step) - loss_moving_target(-step)) / (2.0 * step);
    assert!((moving - bundle.grads[0][0]).abs() > 1e-6);
}

#[test]
fn bellman_target_is_linear_in_reward_and_values() {
    let mut rng = rng(18);
    let mdp = random_mdp(&mut rng, 4, 2, 0.9);
    let doubled = mdp.with_scaled_reward(2.0).unwrap();
    let q = random_values(&mut rng, 4, 2, 3.0);
    let q2 = ValueFunction::new(q.vector() * 2.0, 4).unwrap();
    let pi = random_policy(&mut rng, 4, 2);
    let t = bellman_target(&mdp, &q, &pi).unwrap();
    let t2 = bellman_target(&doubled, &q2, &pi).unwrap();
    assert!(sup(&(t * 2.0), &t2) < 1e-13);
}

#[test]
fn training_is_deterministic_per_seed() {
    let (mdp, _, _) = small_setup(19);
    let config = TrainConfig {
        iterations: 60,
        seed: 5,
        ..TrainConfig::default()
    };
    let model = BellNetModel::classical(0.9, 2, 3, 0.5, false).unwrap();
    let a = train(&model, &mdp, &config).unwrap();
    let b = train(&model, &mdp, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let c = train(&model, &mdp, &TrainConfig { seed: 6, ..config }).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn training_reduces_bellman_error() {
    let mdp = build_cliff_mdp(&GridSpec::default(), 0.99).unwrap();
    let config = TrainConfig {
        iterations: 300,
        init: Init::ClassicalNoise { sigma: 0.01 },
        ..TrainConfig::default()
    };
    let model = BellNetModel::classical(0.99, 5, 3, 0.25, true).unwrap();
    let out = train(&model, &mdp, &config).unwrap();
    let head: f64 = out.history[..20].iter().sum();
    let tail: f64 = out.history[out.history.len() - 20..].iter().sum();
    assert!(tail < head, "{tail} >= {head}");
}

#[test]
fn cliff_walking_optimal_values_and_path() {
    let spec = GridSpec::default();
    let mdp = build_cliff_mdp(&spec, 0.99).unwrap();
    let report = solve_optimal(&mdp).unwrap();
    let v = report.q.state_values();
    let expected: f64 = -(0..13).map(|t| 0.99f64.powi(t)).sum::<f64>();
    assert!((v[spec.state(spec.start)] - expected).abs() < 1e-9);

    let actions = report.policy.argmax_actions();
    assert_eq!(actions[spec.state((3, 0))], Action::Up as usize);
    for c in 0..11 {
        assert_eq!(actions[spec.state((2, c))], Action::Right as usize, "column {c}");
    }
    assert_eq!(actions[spec.state((2, 11))], Action::Down as usize);
}

#[test]
fn mirrored_grid_has_mirrored_optimum() {
    let spec = GridSpec::default();
    let q = solve_optimal(&build_cliff_mdp(&spec, 0.99).unwrap()).unwrap().q;
    let mirrored = solve_optimal(&build_cliff_mdp(&mirror_spec(&spec), 0.99).unwrap()).unwrap().q;
    let moved = permute(q.vector(), &mirror_permutation(&spec));
    assert!(sup(&moved, mirrored.vector()) < 1e-9);
    assert!(nerr(&moved, mirrored.vector()).unwrap() < 1e-10);
}

#[test]
fn slip_moves_optimal_path_away_from_cliff() {
    let spec = GridSpec {
        slip_probability: 0.1,
        ..GridSpec::default()
    };
    let mdp = build_cliff_mdp(&spec, 0.99).unwrap();
    let report = solve_optimal(&mdp).unwrap();
    assert!(report.residual < 1e-10);
    // with slip, hugging the cliff is no longer worth the risk
    let actions = report.policy.argmax_actions();
    assert_eq!(actions[spec.state((3, 0))], Action::Up as usize);
    assert_ne!(actions[spec.state((2, 5))], Action::Right as usize);
}
