//! Statistical verification of the estimator suite against the tabular
//! oracle: exact values come from the direct linear solve, estimates from
//! logged episodes only.

use proptest::prelude::*;
use std::collections::BTreeSet;

use orl_core::data::Dataset;
use orl_core::env::{q_table_model, RewardSpec, StateSpaceSpec, TabularMDP};
use orl_core::ope::{
    effective_sample_size, estimate_dr, estimate_is, fit_fqe, FqeConfig, FqeFit,
};
use orl_core::policy::{PolicyArtifact, SelectionRule};

/// 2-state MDP, state 1 terminal. Both actions may end the episode, with
/// different continuation probabilities and rewards.
fn two_state() -> TabularMDP {
    TabularMDP {
        n_states: 2,
        n_actions: 2,
        transition: vec![
            vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ],
        reward: vec![vec![1.0, 0.5], vec![0.0, 0.0]],
        initial_dist: vec![1.0, 0.0],
        terminal_states: BTreeSet::from([1]),
    }
}

/// Deterministic chain 0 -> 1 -> terminal with per-action rewards.
fn det_chain() -> TabularMDP {
    TabularMDP {
        n_states: 3,
        n_actions: 2,
        transition: vec![
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
        ],
        reward: vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![0.0, 0.0]],
        initial_dist: vec![1.0, 0.0, 0.0],
        terminal_states: BTreeSet::from([2]),
    }
}

fn greedy_artifact(q: &[Vec<f64>]) -> PolicyArtifact {
    PolicyArtifact::from_q_table(q, SelectionRule::Greedy, "greedy-oracle")
}

fn sample_std_err(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

const GAMMA: f64 = 0.9;

#[test]
fn plain_is_within_three_se_of_exact() {
    let mdp = two_state();
    let mu = mdp.uniform_policy();
    // Target: deterministic, always action 1.
    let pi_table = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let exact = mdp.exact_policy_value(&pi_table, GAMMA).unwrap();
    let data = mdp.sample_dataset(&mu, 10_000, 40, 100).unwrap();
    let pi = greedy_artifact(&vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
    let rep = estimate_is(&data, &pi, &RewardSpec::full(), GAMMA, false).unwrap();
    let se = sample_std_err(&rep.per_episode);
    assert!(
        (rep.value - exact).abs() < 3.0 * se,
        "IS {} vs exact {exact}, se {se}",
        rep.value
    );
}

#[test]
fn plain_is_unbiased_across_disjoint_datasets() {
    let mdp = two_state();
    let mu = mdp.uniform_policy();
    let pi_table = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let exact = mdp.exact_policy_value(&pi_table, GAMMA).unwrap();
    let pi = greedy_artifact(&vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
    let estimates: Vec<f64> = (0..20)
        .map(|k| {
            let data = mdp.sample_dataset(&mu, 10_000, 40, 1000 + k).unwrap();
            estimate_is(&data, &pi, &RewardSpec::full(), GAMMA, false)
                .unwrap()
                .value
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 20.0;
    let se = sample_std_err(&estimates);
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "mean estimate {mean} vs exact {exact}, se {se}"
    );
}

#[test]
fn fqe_value_within_one_percent_of_exact() {
    let mdp = det_chain();
    let mu = mdp.uniform_policy();
    let exact = mdp.exact_policy_value(&mu, GAMMA).unwrap();
    let data = mdp.sample_dataset(&mu, 200, 10, 200).unwrap();
    let pi = PolicyArtifact::from_q_table(
        &vec![vec![0.0; 2]; 3],
        SelectionRule::EpsilonGreedy { epsilon: 1.0 },
        "uniform",
    );
    let ctx = StateSpaceSpec::identity("tabular-one-hot", 3);
    let cfg = FqeConfig {
        iterations: 40,
        gradient_steps: 300,
        gamma: GAMMA,
        step_size: 5e-3,
        batch_size: 64,
        hidden: vec![32],
    };
    let fit = fit_fqe(&data, &pi, &RewardSpec::full(), &ctx, &cfg, 0).unwrap();
    let rep = orl_core::ope::estimate_dm_fqe(&fit, &data, &pi).unwrap();
    assert!(
        (rep.value - exact).abs() < 0.01 * exact.abs(),
        "DM-FQE {} vs exact {exact}",
        rep.value
    );
    // Contraction sanity: finite loss at every iteration, Q bounded by
    // R_max/(1-gamma) plus tolerance.
    assert!(fit.loss_trace.iter().all(|l| l.is_finite()));
    let r_max = 2.0;
    let bound = r_max / (1.0 - GAMMA) + 1.0;
    for s in 0..3 {
        for q in fit.q_model.forward(&mdp.one_hot(s)).unwrap() {
            assert!(q.abs() <= bound, "Q {q} exceeds bound {bound}");
        }
    }
}

#[test]
fn dr_corrects_biased_q_within_three_se() {
    let mdp = two_state();
    let mu = mdp.uniform_policy();
    let pi_table = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let exact = mdp.exact_policy_value(&pi_table, GAMMA).unwrap();
    let mut q_biased = mdp.exact_q_values(&pi_table, GAMMA).unwrap();
    for row in &mut q_biased {
        for q in row {
            *q += 0.5;
        }
    }
    let data = mdp.sample_dataset(&mu, 10_000, 40, 300).unwrap();
    let pi = greedy_artifact(&vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
    let fit = FqeFit::from_parts(
        q_table_model(&q_biased),
        StateSpaceSpec::identity("tabular-one-hot", 2),
        "f",
    );
    let rep = estimate_dr(&data, &fit, &pi, &RewardSpec::full(), GAMMA).unwrap();
    let se = sample_std_err(&rep.per_episode);
    assert!(
        (rep.value - exact).abs() < 3.0 * se,
        "DR {} vs exact {exact}, se {se}",
        rep.value
    );
}

#[test]
fn dr_variance_does_not_exceed_is_variance() {
    let mdp = two_state();
    let mu = mdp.uniform_policy();
    let pi_table = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    // Noisy but centered Qhat: symmetric perturbation around the exact table.
    let mut q_noisy = mdp.exact_q_values(&pi_table, GAMMA).unwrap();
    q_noisy[0][0] += 0.3;
    q_noisy[0][1] -= 0.3;
    let pi = greedy_artifact(&vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
    let fit = FqeFit::from_parts(
        q_table_model(&q_noisy),
        StateSpaceSpec::identity("tabular-one-hot", 2),
        "f",
    );
    let spec = RewardSpec::full();
    let mut is_vals = Vec::new();
    let mut dr_vals = Vec::new();
    for k in 0..20 {
        let data = mdp.sample_dataset(&mu, 500, 40, 5000 + k).unwrap();
        is_vals.push(estimate_is(&data, &pi, &spec, GAMMA, false).unwrap().value);
        dr_vals.push(estimate_dr(&data, &fit, &pi, &spec, GAMMA).unwrap().value);
    }
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    assert!(
        var(&dr_vals) <= var(&is_vals),
        "var(DR) {} > var(IS) {}",
        var(&dr_vals),
        var(&is_vals)
    );
}

#[test]
fn estimators_leave_dataset_untouched() {
    let mdp = det_chain();
    let mu = mdp.uniform_policy();
    let data = mdp.sample_dataset(&mu, 20, 10, 7).unwrap();
    let snapshot = data.clone();
    let pi = PolicyArtifact::from_q_table(
        &vec![vec![0.0; 2]; 3],
        SelectionRule::EpsilonGreedy { epsilon: 0.5 },
        "probe",
    );
    let spec = RewardSpec::full();
    let ctx = StateSpaceSpec::identity("tabular-one-hot", 3);
    let cfg = FqeConfig {
        iterations: 2,
        gradient_steps: 20,
        gamma: GAMMA,
        step_size: 1e-3,
        batch_size: 16,
        hidden: vec![8],
    };
    estimate_is(&data, &pi, &spec, GAMMA, false).unwrap();
    estimate_is(&data, &pi, &spec, GAMMA, true).unwrap();
    let fit = fit_fqe(&data, &pi, &spec, &ctx, &cfg, 0).unwrap();
    orl_core::ope::estimate_dm_fqe(&fit, &data, &pi).unwrap();
    estimate_dr(&data, &fit, &pi, &spec, GAMMA).unwrap();
    assert_eq!(data, snapshot);
}

proptest! {
    #[test]
    fn ess_between_one_and_n(weights in prop::collection::vec(0.0f64..10.0, 1..50)) {
        prop_assume!(weights.iter().any(|&w| w > 0.0));
        let n = weights.len() as f64;
        let ess = effective_sample_size(&weights).unwrap();
        prop_assert!(ess >= 1.0 - 1e-12 && ess <= n + 1e-12);
    }

    #[test]
    fn wis_always_within_observed_return_range(seed in 0u64..50, eps in 0.1f64..1.0) {
        let mdp = two_state();
        let data = mdp.sample_dataset(&mdp.uniform_policy(), 50, 40, seed).unwrap();
        let pi = PolicyArtifact::from_q_table(
            &vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            SelectionRule::EpsilonGreedy { epsilon: eps },
            "wis-probe",
        );
        let spec = RewardSpec::full();
        let rep = estimate_is(&data, &pi, &spec, GAMMA, true).unwrap();
        let returns: Vec<f64> = data
            .episodes
            .iter()
            .zip(rep.episode_weights.as_ref().unwrap())
            .filter(|(_, &w)| w > 0.0)
            .map(|(ep, _)| Dataset::episode_return(ep, &spec, GAMMA))
            .collect();
        let lo = returns.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(rep.value >= lo - 1e-9 && rep.value <= hi + 1e-9);
    }
}
