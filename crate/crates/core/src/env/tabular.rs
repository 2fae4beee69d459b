//! Tabular MDP oracle: exact policy values by direct linear solve, episode
//! sampling under a logged behavior policy, and Q-table-as-network helpers.
//! This is the ground truth the estimator suite is verified against.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::BTreeSet;

use crate::nn::MlpModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    pub n_states: usize,
    pub n_actions: usize,
    /// transition[s][a][s'] = P(s'|s,a)
    pub transition: Vec<Vec<Vec<f64>>>,
    /// reward[s][a]
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub terminal_states: BTreeSet<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum TabularError {
    #[error("transition row P(.|{s},{a}) sums to {sum}, not 1")]
    BadTransitionRow { s: usize, a: usize, sum: f64 },
    #[error("initial distribution sums to {0}, not 1")]
    BadInitialDist(f64),
    #[error("policy row for state {0} sums to {1}, not 1")]
    BadPolicyRow(usize, f64),
    #[error("discount {0} outside [0, 1)")]
    BadGamma(f64),
}

const PROB_TOL: f64 = 1e-12;

impl TabularMDP {
    pub fn validate(&self) -> Result<(), TabularError> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let sum: f64 = self.transition[s][a].iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(TabularError::BadTransitionRow { s, a, sum });
                }
            }
        }
        let isum: f64 = self.initial_dist.iter().sum();
        if (isum - 1.0).abs() > PROB_TOL {
            return Err(TabularError::BadInitialDist(isum));
        }
        Ok(())
    }

    /// Random MDP with sparse transition rows (2-state support), rewards in
    /// [0, 1], a deterministic initial state and no terminal states.
    pub fn random(n_states: usize, n_actions: usize, seed: u64) -> TabularMDP {
        let mut rng = rng::stream(seed, "tabular-mdp");
        let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut reward = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let s1 = rng.gen_range(0..n_states);
                let mut s2 = rng.gen_range(0..n_states);
                if s2 == s1 {
                    s2 = (s2 + 1) % n_states;
                }
                let p = 0.5 + 0.4 * rng.gen::<f64>();
                transition[s][a][s1] = p;
                transition[s][a][s2] += 1.0 - p;
                reward[s][a] = rng.gen::<f64>();
            }
        }
        let mut initial_dist = vec![0.0; n_states];
        initial_dist[0] = 1.0;
        TabularMDP {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
            terminal_states: BTreeSet::new(),
        }
    }

    fn policy_matrices(&self, policy: &[Vec<f64>]) -> Result<(DMatrix<f64>, DVector<f64>), TabularError> {
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            if self.terminal_states.contains(&s) {
                continue; // absorbing with zero reward
            }
            let row = &policy[s];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(TabularError::BadPolicyRow(s, sum));
            }
            for a in 0..self.n_actions {
                let pa = row[a];
                if pa == 0.0 {
                    continue;
                }
                r[s] += pa * self.reward[s][a];
                for (s2, &pt) in self.transition[s][a].iter().enumerate() {
                    p[(s, s2)] += pa * pt;
                }
            }
        }
        Ok((p, r))
    }

    /// State values V^pi from the direct linear solve of (I - gamma P) V = r.
    pub fn exact_state_values(
        &self,
        policy: &[Vec<f64>],
        gamma: f64,
    ) -> Result<Vec<f64>, TabularError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(TabularError::BadGamma(gamma));
        }
        self.validate()?;
        let (p, r) = self.policy_matrices(policy)?;
        let n = self.n_states;
        let a = DMatrix::identity(n, n) - gamma * &p;
        let v = a
            .clone()
            .lu()
            .solve(&r)
            .expect("I - gamma*P is nonsingular for gamma < 1");
        let residual = (&a * &v - &r).amax();
        assert!(residual <= 1e-10, "linear solve residual {residual}");
        Ok(v.iter().copied().collect())
    }

    /// initial_dist . V^pi
    pub fn exact_policy_value(&self, policy: &[Vec<f64>], gamma: f64) -> Result<f64, TabularError> {
        let v = self.exact_state_values(policy, gamma)?;
        Ok(self.initial_dist.iter().zip(&v).map(|(p, v)| p * v).sum())
    }

    /// Q^pi(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) V^pi(s'); zero at terminals.
    pub fn exact_q_values(
        &self,
        policy: &[Vec<f64>],
        gamma: f64,
    ) -> Result<Vec<Vec<f64>>, TabularError> {
        let v = self.exact_state_values(policy, gamma)?;
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            if self.terminal_states.contains(&s) {
                continue;
            }
            for a in 0..self.n_actions {
                let future: f64 =
                    self.transition[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
                q[s][a] = self.reward[s][a] + gamma * future;
            }
        }
        Ok(q)
    }

    /// Log episodes under a behavior policy `mu` into the standard dataset
    /// shape: one-hot union features, propensity = mu(a|s), reward carried in
    /// the state-based component. Episodes end on entering a terminal state
    /// or are truncated at `max_steps`.
    pub fn sample_dataset(
        &self,
        mu: &[Vec<f64>],
        n_episodes: usize,
        max_steps: usize,
        seed: u64,
    ) -> Result<crate::data::Dataset, TabularError> {
        self.validate()?;
        for (s, row) in mu.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(TabularError::BadPolicyRow(s, sum));
            }
        }
        let mut rng = rng::stream(seed, "tabular-log");
        let mut episodes = Vec::with_capacity(n_episodes);
        for ep in 0..n_episodes {
            let mut s = self.sample_initial(&mut rng);
            let mut episode = Vec::new();
            for t in 0..max_steps {
                let a = sample_index(&mu[s], &mut rng);
                let s_next = self.sample_next(s, a, &mut rng);
                let terminal = self.terminal_states.contains(&s_next);
                let last = terminal || t + 1 == max_steps;
                episode.push(crate::data::Transition {
                    episode_id: ep as u64,
                    t: t as u32,
                    s_union: self.one_hot(s),
                    action: a,
                    reward: crate::env::RewardComponents {
                        state_based: self.reward[s][a],
                        action_based: 0.0,
                        terminal: 0.0,
                    },
                    s_next_union: self.one_hot(s_next),
                    done: last,
                    truncated: last && !terminal,
                    propensity: mu[s][a],
                });
                if last {
                    break;
                }
                s = s_next;
            }
            episodes.push(episode);
        }
        let transition_count = episodes.iter().map(|e| e.len() as u64).sum();
        let header = crate::data::DatasetHeader {
            format_version: crate::data::FORMAT_VERSION,
            feature_names: (0..self.n_states).map(|i| format!("s{i}")).collect(),
            action_count: self.n_actions,
            env_config_hash: format!("tabular-{}x{}", self.n_states, self.n_actions),
            collection_seed: seed,
            episode_count: n_episodes as u64,
            transition_count,
        };
        Ok(crate::data::Dataset::new(header, episodes))
    }

    pub fn sample_initial<R: Rng>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng)
    }

    pub fn sample_next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(&self.transition[s][a], rng)
    }

    /// One-hot rendering of a state over the full state set.
    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    /// Greedy deterministic policy table from a Q-table (lowest-index ties).
    pub fn greedy_policy(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        q.iter()
            .map(|row| {
                let best = argmax(row);
                let mut p = vec![0.0; self.n_actions];
                p[best] = 1.0;
                p
            })
            .collect()
    }

    pub fn uniform_policy(&self) -> Vec<Vec<f64>> {
        vec![vec![1.0 / self.n_actions as f64; self.n_actions]; self.n_states]
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Single linear layer whose outputs reproduce a Q-table on one-hot inputs.
/// Lets tabular policies flow through the same artifact machinery as
/// learned networks.
pub fn q_table_model(q: &[Vec<f64>]) -> MlpModel {
    let n_states = q.len();
    let n_actions = q[0].len();
    let mut model = MlpModel::init(&[n_states, n_actions], 0).unwrap();
    for a in 0..n_actions {
        for s in 0..n_states {
            model.layers[0].w[a * n_states + s] = q[s][a];
        }
        model.layers[0].b[a] = 0.0;
    }
    model
}
