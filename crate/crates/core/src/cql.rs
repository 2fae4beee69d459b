//! Conservative Q-learning on logged data only: the double-Q Bellman loss
//! plus a discrete conservative penalty, mean[logsumexp_a Q(s,a) - Q(s,a_logged)],
//! which pushes down Q-values of actions the data never took.
//!
//! This module never steps an environment; it consumes datasets and
//! projection specs exclusively.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ddqn::ReplayItem;
use crate::env::{RewardSpec, SpaceError, StateSpaceSpec};
use crate::nn::{
    adam_step, forward_and_backward, soft_update, AdamConfig, AdamState, Grads, MlpModel, NnError,
};
use crate::policy::{PolicyArtifact, PolicyMeta, SelectionRule};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqlConfig {
    /// Conservatism coefficient.
    pub alpha: f64,
    pub gamma: f64,
    pub step_size: f64,
    pub batch_size: usize,
    pub gradient_steps: usize,
    pub tau: f64,
    /// Fraction of episodes (taken from the front of the dataset) used for
    /// training; the worst/avg/best construction varies this.
    pub dataset_fraction: f64,
    pub hidden: Vec<usize>,
}

impl Default for CqlConfig {
    fn default() -> Self {
        CqlConfig {
            alpha: 1.0,
            gamma: 0.99,
            step_size: 5e-5,
            batch_size: 128,
            gradient_steps: 20_000,
            tau: 0.01,
            dataset_fraction: 1.0,
            hidden: vec![256, 256],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CqlError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("state spec: {0}")]
    Space(#[from] SpaceError),
    #[error("reward spec: {0}")]
    Reward(#[from] crate::env::RewardSpecError),
    #[error("model: {0}")]
    Nn(#[from] NnError),
    #[error("policy: {0}")]
    Policy(#[from] crate::policy::PolicyError),
}

impl CqlConfig {
    pub fn validate(&self) -> Result<(), CqlError> {
        if self.alpha < 0.0 {
            return Err(CqlError::BadConfig(format!("alpha {}", self.alpha)));
        }
        if !(self.dataset_fraction > 0.0 && self.dataset_fraction <= 1.0) {
            return Err(CqlError::BadConfig(format!(
                "dataset_fraction {}",
                self.dataset_fraction
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CqlError::BadConfig(format!("gamma {}", self.gamma)));
        }
        Ok(())
    }
}

fn logsumexp(q: &[f64]) -> f64 {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + q.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(q: &[f64]) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Bellman term (double-Q target from dataset transitions) plus
/// `alpha * mean[logsumexp_a Q(s,a) - Q(s, a_logged)]`.
pub fn cql_loss(
    online: &MlpModel,
    target: &MlpModel,
    batch: &[&ReplayItem],
    gamma: f64,
    alpha: f64,
) -> Result<(f64, Grads), NnError> {
    assert!(!batch.is_empty());
    let n = batch.len() as f64;
    // Double-Q targets, frozen with respect to the differentiated forward.
    let mut ys = Vec::with_capacity(batch.len());
    for item in batch {
        let y = if item.terminal {
            item.reward
        } else {
            let a_star = crate::env::argmax(&online.forward(&item.s_next)?);
            item.reward + gamma * target.forward(&item.s_next)?[a_star]
        };
        ys.push(y);
    }
    let inputs: Vec<Vec<f64>> = batch.iter().map(|it| it.s.clone()).collect();
    let mut loss = 0.0;
    let (_, grads) = forward_and_backward(online, &inputs, |i, q| {
        let a = batch[i].action;
        let err = q[a] - ys[i];
        loss += (0.5 * err * err + alpha * (logsumexp(q) - q[a])) / n;
        let mut d = softmax(q);
        for (j, dj) in d.iter_mut().enumerate() {
            *dj *= alpha / n;
            if j == a {
                *dj += (err - alpha) / n;
            }
        }
        d
    })?;
    Ok((loss, grads))
}

/// Mean conservative gap, mean[logsumexp_a Q(s,a) - Q(s, a_logged)], over a
/// set of items. Diagnostic for "conservatism is actually optimized".
pub fn conservative_gap(model: &MlpModel, items: &[ReplayItem]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for item in items {
        let q = model.forward(&item.s)?;
        total += logsumexp(&q) - q[item.action];
    }
    Ok(total / items.len() as f64)
}

/// Project the leading `dataset_fraction` of episodes through the specs.
pub fn project_training_items(
    dataset: &Dataset,
    state_spec: &StateSpaceSpec,
    reward_spec: &RewardSpec,
    fraction: f64,
    seed: u64,
) -> Result<Vec<ReplayItem>, CqlError> {
    if dataset.episodes.is_empty() {
        return Err(CqlError::EmptyDataset);
    }
    state_spec.validate(dataset.union_dim())?;
    reward_spec.validate()?;
    let n_ep = ((dataset.episodes.len() as f64 * fraction).ceil() as usize)
        .clamp(1, dataset.episodes.len());
    let mut stream = state_spec.stream(seed);
    let mut items = Vec::new();
    for ep in &dataset.episodes[..n_ep] {
        for tr in ep {
            items.push(ReplayItem {
                s: state_spec.project(&tr.s_union, &mut stream)?,
                action: tr.action,
                reward: reward_spec.apply(&tr.reward),
                s_next: state_spec.project(&tr.s_next_union, &mut stream)?,
                terminal: tr.done && !tr.truncated,
            });
        }
    }
    Ok(items)
}

/// Train an offline greedy policy from the dataset alone. Deterministic per
/// (dataset, specs, config, seed).
pub fn train_cql(
    dataset: &Dataset,
    state_spec: &StateSpaceSpec,
    reward_spec: &RewardSpec,
    cfg: &CqlConfig,
    seed: u64,
) -> Result<PolicyArtifact, CqlError> {
    cfg.validate()?;
    let items = project_training_items(dataset, state_spec, reward_spec, cfg.dataset_fraction, seed)?;
    let n_actions = dataset.header.action_count;
    let mut layer_sizes = vec![state_spec.dim()];
    layer_sizes.extend_from_slice(&cfg.hidden);
    layer_sizes.push(n_actions);

    let mut online = MlpModel::init(&layer_sizes, seed)?;
    let mut target = online.clone();
    let mut adam = AdamState::new(&online, AdamConfig::with_step_size(cfg.step_size));
    let mut batch_rng = rng::stream(seed, "cql-batch");

    let batch_size = cfg.batch_size.min(items.len());
    let mut picked: Vec<usize> = Vec::with_capacity(batch_size);
    for _ in 0..cfg.gradient_steps {
        // Without replacement inside the batch, by rejection.
        picked.clear();
        while picked.len() < batch_size {
            let i = batch_rng.gen_range(0..items.len());
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        let batch: Vec<&ReplayItem> = picked.iter().map(|&i| &items[i]).collect();
        let (_, grads) = cql_loss(&online, &target, &batch, cfg.gamma, cfg.alpha)?;
        adam_step(&mut online, &grads, &mut adam);
        soft_update(&mut target, &online, cfg.tau);
    }

    let config_hash = crate::config_hash(&(cfg, &state_spec.name, &reward_spec.name));
    Ok(PolicyArtifact::new(
        online,
        state_spec.clone(),
        SelectionRule::Greedy,
        PolicyMeta {
            policy_id: format!("cql-{}-{}-seed{}", state_spec.name, reward_spec.name, seed),
            reward_spec: reward_spec.name.clone(),
            config_hash,
            seed,
        },
    )?)
}
