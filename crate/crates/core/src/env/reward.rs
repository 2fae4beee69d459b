//! Reward decomposition and named reward-function candidates.

use serde::{Deserialize, Serialize};

/// Per-step reward split into the three components logged with every
/// transition. `terminal` is zero unless the step ended the episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub state_based: f64,
    pub action_based: f64,
    pub terminal: f64,
}

impl RewardComponents {
    pub const ZERO: RewardComponents =
        RewardComponents { state_based: 0.0, action_based: 0.0, terminal: 0.0 };

    pub fn total(&self) -> f64 {
        self.state_based + self.action_based + self.terminal
    }

    pub fn is_finite(&self) -> bool {
        self.state_based.is_finite() && self.action_based.is_finite() && self.terminal.is_finite()
    }
}

/// A named composition of reward components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub name: String,
    pub include_state_based: bool,
    pub include_action_based: bool,
    pub include_terminal: bool,
    #[serde(default = "unit_weights")]
    pub weights: [f64; 3],
}

fn unit_weights() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Debug, thiserror::Error)]
pub enum RewardSpecError {
    #[error("reward spec '{0}': no component included")]
    Empty(String),
    #[error("reward spec '{0}': non-finite weight")]
    NonFiniteWeight(String),
}

impl RewardSpec {
    pub fn new(
        name: &str,
        include_state_based: bool,
        include_action_based: bool,
        include_terminal: bool,
    ) -> Self {
        RewardSpec {
            name: name.to_string(),
            include_state_based,
            include_action_based,
            include_terminal,
            weights: unit_weights(),
        }
    }

    /// Composite reward with every component.
    pub fn full() -> Self {
        RewardSpec::new("f", true, true, true)
    }

    /// Terminal-state rewards only.
    pub fn terminal_only() -> Self {
        RewardSpec::new("f_r1", false, false, true)
    }

    /// Action-based and terminal-state rewards.
    pub fn action_terminal() -> Self {
        RewardSpec::new("f_r2", false, true, true)
    }

    /// State-based and terminal-state rewards.
    pub fn state_terminal() -> Self {
        RewardSpec::new("f_r3", true, false, true)
    }

    pub fn lander_candidates() -> Vec<RewardSpec> {
        vec![
            RewardSpec::full(),
            RewardSpec::terminal_only(),
            RewardSpec::action_terminal(),
            RewardSpec::state_terminal(),
        ]
    }

    pub fn validate(&self) -> Result<(), RewardSpecError> {
        if !(self.include_state_based || self.include_action_based || self.include_terminal) {
            return Err(RewardSpecError::Empty(self.name.clone()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(RewardSpecError::NonFiniteWeight(self.name.clone()));
        }
        Ok(())
    }

    /// Weighted sum over the included components.
    pub fn apply(&self, c: &RewardComponents) -> f64 {
        let mut r = 0.0;
        if self.include_state_based {
            r += self.weights[0] * c.state_based;
        }
        if self.include_action_based {
            r += self.weights[1] * c.action_based;
        }
        if self.include_terminal {
            r += self.weights[2] * c.terminal;
        }
        r
    }
}
