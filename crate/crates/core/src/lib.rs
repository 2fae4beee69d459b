//! Offline reinforcement learning pipeline: logged-data collection with
//! propensities, offline CQL training, an off-policy estimator suite
//! (IS/WIS, FQE, DM-FQE, DR), and OPE-driven state-space and reward
//! selection.

pub mod cql;
pub mod data;
pub mod ddqn;
pub mod env;
pub mod nn;
pub mod ope;
pub mod policy;
pub mod selection;
pub mod rng;

use sha2::{Digest, Sha256};

/// Short stable hash of any serializable config, used to key output
/// directories and stamp artifacts with their provenance.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
