//! Online DDQN agent. It serves two roles: it produces the behavior data —
//! every environment transition is logged with its exact epsilon-greedy
//! propensity — and its checkpoints (untrained / mid-training / best
//! moving average) become the Random / Avg / Best target policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetHeader, Episode, Transition, FORMAT_VERSION};
use crate::env::{Lander, LanderConfig, RewardSpec, StateSpaceSpec};
use crate::env::{ACTION_COUNT, UNION_FEATURE_NAMES};
use crate::nn::{adam_step, grad_weighted_sq, soft_update, AdamConfig, AdamState, Grads, MlpModel, NnError};
use crate::policy::{epsilon_greedy, PolicyArtifact, PolicyMeta, SelectionRule};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdqnConfig {
    pub gamma: f64,
    pub step_size: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Linear decay horizon in environment steps; `None` means 20% of the
    /// step budget over all episodes.
    pub epsilon_decay_steps: Option<usize>,
    pub episodes: usize,
    pub avg_checkpoint_episode: usize,
    pub hidden: Vec<usize>,
    pub train_every: usize,
    pub learning_starts: usize,
    pub moving_average_window: usize,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        DdqnConfig {
            gamma: 0.99,
            step_size: 5e-5,
            batch_size: 128,
            tau: 0.01,
            replay_capacity: 100_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            episodes: 1000,
            avg_checkpoint_episode: 100,
            hidden: vec![256, 256],
            train_every: 1,
            learning_starts: 1000,
            moving_average_window: 100,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DdqnError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("model: {0}")]
    Nn(#[from] NnError),
}

impl DdqnConfig {
    pub fn validate(&self) -> Result<(), DdqnError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(DdqnError::BadConfig(format!("gamma {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(DdqnError::BadConfig(format!("tau {}", self.tau)));
        }
        if self.batch_size > self.replay_capacity {
            return Err(DdqnError::BadConfig(format!(
                "batch_size {} > replay_capacity {}",
                self.batch_size, self.replay_capacity
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(DdqnError::BadConfig("epsilon outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, step: usize, step_budget: usize) -> f64 {
        let decay = self
            .epsilon_decay_steps
            .unwrap_or_else(|| (self.episodes * step_budget / 5).max(1))
            .max(1);
        let frac = (step as f64 / decay as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One stored transition, already projected to the training space.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem {
    pub s: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub s_next: Vec<f64>,
    /// True terminal (not truncation): the target does not bootstrap.
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform without-replacement sampling
/// inside a batch.
pub struct ReplayBuffer {
    items: Vec<ReplayItem>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { items: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: ReplayItem) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform sample of `n` distinct stored items (all of them if n > len).
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&ReplayItem> {
        let len = self.items.len();
        let n = n.min(len);
        // Partial Fisher-Yates over an index vector.
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = rng.gen_range(i..len);
            idx.swap(i, j);
        }
        idx[..n].iter().map(|&i| &self.items[i]).collect()
    }
}

/// Double-DQN target: y = r + gamma * (1 - terminal) * Q_target(s', argmax_a
/// Q_online(s', a)). Loss is the weighted squared error restricted to the
/// taken action.
pub fn ddqn_update(
    online: &MlpModel,
    target: &MlpModel,
    batch: &[&ReplayItem],
    gamma: f64,
) -> Result<(f64, Grads), NnError> {
    assert!(!batch.is_empty());
    let n_actions = online.output_dim();
    let mut inputs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    let mut weights = Vec::with_capacity(batch.len());
    for item in batch {
        let y = if item.terminal {
            item.reward
        } else {
            let q_online_next = online.forward(&item.s_next)?;
            let a_star = crate::env::argmax(&q_online_next);
            let q_target_next = target.forward(&item.s_next)?;
            item.reward + gamma * q_target_next[a_star]
        };
        let mut t = vec![0.0; n_actions];
        let mut w = vec![0.0; n_actions];
        t[item.action] = y;
        w[item.action] = 1.0;
        inputs.push(item.s.clone());
        targets.push(t);
        weights.push(w);
    }
    grad_weighted_sq(online, &inputs, &targets, &weights)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub episode_return: f64,
    pub moving_average: f64,
}

pub struct NamedCheckpoint {
    pub name: String,
    pub episode: usize,
    pub epsilon: f64,
    pub artifact: PolicyArtifact,
}

pub struct CollectRun {
    pub dataset: Dataset,
    pub checkpoints: Vec<NamedCheckpoint>,
    pub curve: Vec<CurvePoint>,
}

fn make_checkpoint(
    name: &str,
    episode: usize,
    epsilon: f64,
    model: &MlpModel,
    config_hash: &str,
    seed: u64,
) -> NamedCheckpoint {
    let artifact = PolicyArtifact::new(
        model.clone(),
        StateSpaceSpec::lander_orig(),
        SelectionRule::EpsilonGreedy { epsilon },
        PolicyMeta {
            policy_id: format!("ddqn-{name}-seed{seed}"),
            reward_spec: "f".to_string(),
            config_hash: config_hash.to_string(),
            seed,
        },
    )
    .expect("checkpoint dims consistent");
    NamedCheckpoint { name: name.to_string(), episode, epsilon, artifact }
}

/// Train DDQN on the lander under the composite reward, logging every
/// transition with its propensity. Deterministic per (configs, seed).
pub fn collect_run(
    cfg: &DdqnConfig,
    env_cfg: &LanderConfig,
    seed: u64,
) -> Result<CollectRun, DdqnError> {
    cfg.validate()?;
    let config_hash = crate::config_hash(&(cfg, env_cfg));
    let reward = RewardSpec::full();
    let mut layer_sizes = vec![8usize];
    layer_sizes.extend_from_slice(&cfg.hidden);
    layer_sizes.push(ACTION_COUNT);

    let mut online = MlpModel::init(&layer_sizes, seed)?;
    let mut target = online.clone();
    let mut adam = AdamState::new(&online, AdamConfig::with_step_size(cfg.step_size));
    let mut explore_rng = rng::stream(seed, "ddqn-explore");
    let mut replay_rng = rng::stream(seed, "ddqn-replay");
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);

    let mut checkpoints =
        vec![make_checkpoint("random", 0, cfg.epsilon_start, &online, &config_hash, seed)];

    let mut episodes: Vec<Episode> = Vec::with_capacity(cfg.episodes);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut returns: Vec<f64> = Vec::with_capacity(cfg.episodes);
    let mut best: Option<(f64, MlpModel, usize, f64)> = None;
    let window = cfg.moving_average_window.min(cfg.episodes.max(1));
    let mut global_step = 0usize;

    let mut env = Lander::new(env_cfg.clone(), seed);
    for episode_idx in 0..cfg.episodes {
        if episode_idx > 0 {
            env.reset();
        }
        let mut transitions: Episode = Vec::new();
        let mut ep_return = 0.0;
        let mut t = 0u32;
        let mut epsilon;
        loop {
            epsilon = cfg.epsilon_at(global_step, env_cfg.step_budget);
            let s = env.state();
            let s_vec = s.to_vec();
            let q = online.forward(&s_vec)?;
            let (action, propensity) = epsilon_greedy(&q, epsilon, &mut explore_rng);
            let out = env.step(action).expect("episode not done");
            let r = reward.apply(&out.reward);
            ep_return += r;
            transitions.push(Transition {
                episode_id: episode_idx as u64,
                t,
                s_union: s_vec.clone(),
                action,
                reward: out.reward,
                s_next_union: out.state.to_vec(),
                done: out.done,
                truncated: out.truncated,
                propensity,
            });
            replay.push(ReplayItem {
                s: s_vec,
                action,
                reward: r,
                s_next: out.state.to_vec(),
                terminal: out.done && !out.truncated,
            });
            global_step += 1;
            t += 1;
            if global_step >= cfg.learning_starts
                && global_step % cfg.train_every == 0
                && replay.len() >= cfg.batch_size
            {
                let batch = replay.sample(cfg.batch_size, &mut replay_rng);
                let (_, grads) = ddqn_update(&online, &target, &batch, cfg.gamma)?;
                adam_step(&mut online, &grads, &mut adam);
                soft_update(&mut target, &online, cfg.tau);
            }
            if out.done {
                break;
            }
        }
        episodes.push(transitions);
        returns.push(ep_return);
        let n_done = returns.len();
        let tail = &returns[n_done.saturating_sub(window)..];
        let moving_average = tail.iter().sum::<f64>() / tail.len() as f64;
        curve.push(CurvePoint { episode: episode_idx + 1, episode_return: ep_return, moving_average });

        if episode_idx + 1 == cfg.avg_checkpoint_episode {
            checkpoints.push(make_checkpoint(
                "avg",
                episode_idx + 1,
                epsilon,
                &online,
                &config_hash,
                seed,
            ));
        }
        if n_done >= window
            && best.as_ref().map_or(true, |(b, _, _, _)| moving_average > *b)
        {
            best = Some((moving_average, online.clone(), episode_idx + 1, epsilon));
        }
    }

    if let Some((_, model, episode, epsilon)) = best {
        checkpoints.push(make_checkpoint("best", episode, epsilon, &model, &config_hash, seed));
    }

    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        feature_names: UNION_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        action_count: ACTION_COUNT,
        env_config_hash: crate::config_hash(env_cfg),
        collection_seed: seed,
        episode_count: episodes.len() as u64,
        transition_count: episodes.iter().map(|e| e.len() as u64).sum(),
    };
    Ok(CollectRun { dataset: Dataset::new(header, episodes), checkpoints, curve })
}
