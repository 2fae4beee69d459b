//! Policy artifacts: a Q-network plus an action-selection rule and the
//! state projection it was trained under. Serialized as the flat model
//! binary plus a JSON sidecar.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::env::{ProjectionStream, StateSpaceSpec};
use crate::nn::MlpModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Argmax with lowest-index tie-break; propensity 1 at the argmax.
    Greedy,
    /// Greedy with probability 1 - epsilon, else uniform.
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub policy_id: String,
    pub reward_spec: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub q_model: MlpModel,
    pub state_spec: StateSpaceSpec,
    pub action_count: usize,
    pub rule: SelectionRule,
    pub meta: PolicyMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("q-model input dim {model} != state spec dim {spec}")]
    DimMismatch { model: usize, spec: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model: {0}")]
    Nn(#[from] crate::nn::NnError),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

/// Sidecar JSON layout.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    state_spec: StateSpaceSpec,
    action_count: usize,
    rule: SelectionRule,
    meta: PolicyMeta,
}

impl PolicyArtifact {
    pub fn new(
        q_model: MlpModel,
        state_spec: StateSpaceSpec,
        rule: SelectionRule,
        meta: PolicyMeta,
    ) -> Result<Self, PolicyError> {
        if q_model.input_dim() != state_spec.dim() {
            return Err(PolicyError::DimMismatch {
                model: q_model.input_dim(),
                spec: state_spec.dim(),
            });
        }
        let action_count = q_model.output_dim();
        Ok(PolicyArtifact { q_model, state_spec, action_count, rule, meta })
    }

    /// Tabular policy as an artifact: a Q-table rendered as a linear layer
    /// over one-hot states. Used by the estimator oracle tests and the
    /// tabular pipelines.
    pub fn from_q_table(q: &[Vec<f64>], rule: SelectionRule, policy_id: &str) -> Self {
        PolicyArtifact::new(
            crate::env::q_table_model(q),
            StateSpaceSpec::identity("tabular-one-hot", q.len()),
            rule,
            PolicyMeta {
                policy_id: policy_id.to_string(),
                reward_spec: "f".to_string(),
                config_hash: crate::config_hash(&q),
                seed: 0,
            },
        )
        .expect("q-table model dimension matches identity spec by construction")
    }

    /// Evaluator with this artifact's noise stream positioned at the start
    /// for `seed`. Specs without noise dims ignore the seed entirely.
    pub fn evaluator(&self, seed: u64) -> PolicyEvaluator<'_> {
        PolicyEvaluator { artifact: self, stream: self.state_spec.stream(seed) }
    }

    /// Write `<base>.qnet` and `<base>.json`.
    pub fn save(&self, base: &Path) -> Result<(), PolicyError> {
        self.q_model.save(&base.with_extension("qnet"))?;
        let sidecar = Sidecar {
            state_spec: self.state_spec.clone(),
            action_count: self.action_count,
            rule: self.rule,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| PolicyError::Sidecar(e.to_string()))?;
        std::fs::write(base.with_extension("json"), json + "\n")?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<Self, PolicyError> {
        let model = MlpModel::load(&base.with_extension("qnet"))?;
        let text = std::fs::read_to_string(base.with_extension("json"))?;
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| PolicyError::Sidecar(e.to_string()))?;
        PolicyArtifact::new(model, sidecar.state_spec, sidecar.rule, sidecar.meta)
    }

    pub fn artifact_paths(base: &Path) -> (PathBuf, PathBuf) {
        (base.with_extension("qnet"), base.with_extension("json"))
    }
}

/// Evaluates a policy on union-space vectors, applying the artifact's own
/// projection (including any noise features) before the Q-network.
pub struct PolicyEvaluator<'a> {
    artifact: &'a PolicyArtifact,
    stream: ProjectionStream,
}

impl PolicyEvaluator<'_> {
    pub fn artifact(&self) -> &PolicyArtifact {
        self.artifact
    }

    fn q_values(&mut self, union_vec: &[f64]) -> Vec<f64> {
        let projected = self
            .artifact
            .state_spec
            .project(union_vec, &mut self.stream)
            .expect("state spec validated against the dataset union dimension");
        self.artifact.q_model.forward(&projected).expect("projection dim matches model input")
    }

    /// Greedy action under the Q-network (the mode of the policy).
    pub fn greedy_action(&mut self, union_vec: &[f64]) -> usize {
        crate::env::argmax(&self.q_values(union_vec))
    }

    /// Full action distribution pi(.|s).
    pub fn action_probs(&mut self, union_vec: &[f64]) -> Vec<f64> {
        let q = self.q_values(union_vec);
        let greedy = crate::env::argmax(&q);
        let n = q.len();
        match self.artifact.rule {
            SelectionRule::Greedy => {
                let mut p = vec![0.0; n];
                p[greedy] = 1.0;
                p
            }
            SelectionRule::EpsilonGreedy { epsilon } => {
                let base = epsilon / n as f64;
                let mut p = vec![base; n];
                p[greedy] += 1.0 - epsilon;
                p
            }
        }
    }

    /// pi(a|s) for a specific action.
    pub fn propensity(&mut self, union_vec: &[f64], action: usize) -> f64 {
        self.action_probs(union_vec)[action]
    }

    /// Sample an action according to the rule; returns its propensity too.
    pub fn sample_action<R: Rng>(&mut self, union_vec: &[f64], rng: &mut R) -> (usize, f64) {
        let q = self.q_values(union_vec);
        match self.artifact.rule {
            SelectionRule::Greedy => (crate::env::argmax(&q), 1.0),
            SelectionRule::EpsilonGreedy { epsilon } => epsilon_greedy(&q, epsilon, rng),
        }
    }
}

/// Epsilon-greedy draw over Q-values with exact propensity bookkeeping:
/// mu(a|s) = eps/|A| + (1 - eps) * [a == greedy].
pub fn epsilon_greedy<R: Rng>(q_values: &[f64], epsilon: f64, rng: &mut R) -> (usize, f64) {
    assert!(!q_values.is_empty());
    assert!((0.0..=1.0).contains(&epsilon));
    let n = q_values.len();
    let greedy = crate::env::argmax(q_values);
    let action = if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..n)
    } else {
        greedy
    };
    let base = epsilon / n as f64;
    let propensity = base + if action == greedy { 1.0 - epsilon } else { 0.0 };
    (action, propensity)
}
