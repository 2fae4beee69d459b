//! Desk-scale environments: a simplified 2-D lander with a decomposable
//! reward, plus a tabular MDP used as an exact oracle for the estimators.

mod lander;
mod reward;
mod spaces;
mod tabular;

pub use lander::{
    Lander, LanderConfig, LanderError, LanderState, StepOutcome, ACTION_COUNT, ACTION_LEFT,
    ACTION_MAIN, ACTION_NOOP, ACTION_RIGHT, UNION_FEATURE_NAMES,
};
pub use reward::{RewardComponents, RewardSpec, RewardSpecError};
pub use spaces::{ProjectionStream, SpaceError, StateSpaceSpec};
pub use tabular::{q_table_model, TabularError, TabularMDP};
pub(crate) use tabular::argmax;

use std::sync::atomic::{AtomicBool, Ordering};

// Offline pipeline stages must never touch a live environment. The CLI
// flips this off for every command except `collect` and `audit-online`.
static LIVE_ENV_ALLOWED: AtomicBool = AtomicBool::new(true);

pub fn set_live_env_allowed(allowed: bool) {
    LIVE_ENV_ALLOWED.store(allowed, Ordering::SeqCst);
}

pub(crate) fn assert_live_env_allowed() {
    assert!(
        LIVE_ENV_ALLOWED.load(Ordering::SeqCst),
        "live environment instantiated inside an offline-only command"
    );
}
