//! Command implementations. Only `collect` and `audit-online` may touch a
//! live environment; every other command runs with the live-environment
//! guard disabled, so an accidental environment dependency panics loudly.

use std::path::{Path, PathBuf};

use orl_core::cql::train_cql;
use orl_core::data::{read_dataset, write_dataset, Dataset, EXT_GZ};
use orl_core::ddqn::collect_run;
use orl_core::env::{set_live_env_allowed, Lander, RewardSpec, StateSpaceSpec};
use orl_core::ope::{estimate_dm_fqe, estimate_dr, estimate_is, fit_fqe, OPEReport};
use orl_core::policy::PolicyArtifact;
use orl_core::rng;
use orl_core::selection::{select_reward_jobs, select_state_space_jobs};

use crate::config::PipelineConfig;
use crate::reports;
use crate::CliError;

fn load_artifact(base: &Path) -> Result<PolicyArtifact, CliError> {
    PolicyArtifact::load(base)
        .map_err(|e| CliError::Usage(format!("loading policy {}: {e}", base.display())))
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset file {} not found", path.display())));
    }
    Ok(read_dataset(path)?)
}

/// Train the online agent and write the logged dataset, the named policy
/// checkpoints, and the learning curve.
pub fn cmd_collect(
    config: &PipelineConfig,
    seed: u64,
    episodes_override: Option<usize>,
) -> Result<PathBuf, CliError> {
    set_live_env_allowed(true);
    let mut config = config.clone();
    if let Some(e) = episodes_override {
        config.ddqn.episodes = e;
    }
    let dir = config.run_dir(seed)?;
    let run = collect_run(&config.ddqn, &config.env, seed)?;

    let mut outputs = Vec::new();
    let dataset_path = dir.join(format!("dataset{EXT_GZ}"));
    write_dataset(&dataset_path, &run.dataset)?;
    outputs.push(dataset_path.clone());
    for cp in &run.checkpoints {
        let base = dir.join(format!("ddqn-{}", cp.name));
        cp.artifact.save(&base)?;
        outputs.push(base.with_extension("qnet"));
        outputs.push(base.with_extension("json"));
    }
    let curve_path = dir.join("curve.csv");
    reports::write_text(&curve_path, &reports::curve_csv(&run.curve))?;
    outputs.push(curve_path);
    reports::write_manifest(&dir, "collect", &config.hash(), seed, &outputs)?;
    Ok(dataset_path)
}

pub fn cmd_train_offline(
    config: &PipelineConfig,
    dataset_path: &Path,
    state_space: &str,
    reward: &str,
    seed: u64,
) -> Result<PathBuf, CliError> {
    set_live_env_allowed(false);
    let dataset = load_data(dataset_path)?;
    let spec = config.state_space(state_space)?;
    let reward_spec = config.reward(reward)?;
    let artifact = train_cql(&dataset, spec, reward_spec, &config.cql, seed)?;
    let dir = config.run_dir(seed)?;
    let base = dir.join(format!("cql-{}-{}", spec.name, reward_spec.name));
    artifact.save(&base)?;
    reports::write_manifest(
        &dir,
        "train-offline",
        &config.hash(),
        seed,
        &[base.with_extension("qnet"), base.with_extension("json")],
    )?;
    Ok(base)
}

pub fn parse_estimators(list: &str) -> Result<Vec<String>, CliError> {
    let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
    for n in &names {
        if !matches!(n.as_str(), "is" | "wis" | "dm" | "dr") {
            return Err(CliError::Usage(format!(
                "unknown estimator '{n}' (expected a comma list of is, wis, dm, dr)"
            )));
        }
    }
    Ok(names)
}

pub fn cmd_evaluate(
    config: &PipelineConfig,
    dataset_path: &Path,
    policy_base: &Path,
    reward: &str,
    estimators: &str,
    seed: u64,
) -> Result<Vec<OPEReport>, CliError> {
    set_live_env_allowed(false);
    let names = parse_estimators(estimators)?;
    let dataset = load_data(dataset_path)?;
    let policy = load_artifact(policy_base)?;
    let reward_spec = config.reward(reward)?;
    let gamma = config.fqe.gamma;

    let fit = if names.iter().any(|n| n == "dm" || n == "dr") {
        let context = StateSpaceSpec::identity("union", dataset.union_dim());
        Some(fit_fqe(
            &dataset,
            &policy,
            reward_spec,
            &context,
            &config.fqe,
            rng::sub_seed(seed, "evaluate/fqe"),
        )?)
    } else {
        None
    };

    let mut results = Vec::new();
    for name in &names {
        let report = match name.as_str() {
            "is" => estimate_is(&dataset, &policy, reward_spec, gamma, false)?,
            "wis" => estimate_is(&dataset, &policy, reward_spec, gamma, true)?,
            "dm" => estimate_dm_fqe(fit.as_ref().unwrap(), &dataset, &policy)?,
            "dr" => estimate_dr(&dataset, fit.as_ref().unwrap(), &policy, reward_spec, gamma)?,
            _ => unreachable!("validated above"),
        };
        results.push(report);
    }

    let dir = config.run_dir(seed)?;
    let mut outputs = Vec::new();
    for report in &results {
        let path = dir.join(format!("ope-{}.json", report.estimator));
        reports::write_json(&path, report)?;
        outputs.push(path);
    }
    let csv_path = dir.join("ope_results.csv");
    reports::write_text(&csv_path, &reports::ope_results_csv(&results))?;
    outputs.push(csv_path);
    reports::write_manifest(&dir, "evaluate", &config.hash(), seed, &outputs)?;
    Ok(results)
}

pub fn cmd_select_state(
    config: &PipelineConfig,
    dataset_path: &Path,
    seed: u64,
    jobs: usize,
) -> Result<PathBuf, CliError> {
    set_live_env_allowed(false);
    let dataset = load_data(dataset_path)?;
    if config.state_spaces.len() == 1 {
        eprintln!(
            "warning: only one state-space candidate ('{}'); selection is vacuous",
            config.state_spaces[0].name
        );
    }
    let reward_spec = config
        .rewards
        .first()
        .ok_or_else(|| CliError::Validation("no reward candidates configured".into()))?;
    let report = select_state_space_jobs(
        &config.state_spaces,
        &dataset,
        reward_spec,
        &config.cql,
        &config.fqe,
        seed,
        jobs.max(1),
    )?;
    let dir = config.run_dir(seed)?;
    let json = dir.join("state_selection.json");
    reports::write_json(&json, &report)?;
    reports::write_text(&dir.join("state_selection.csv"), &reports::state_selection_csv(&report))?;
    reports::write_text(&dir.join("state_selection.txt"), &reports::state_selection_text(&report))?;
    reports::write_manifest(
        &dir,
        "select-state",
        &config.hash(),
        seed,
        &[json.clone(), dir.join("state_selection.csv"), dir.join("state_selection.txt")],
    )?;
    Ok(json)
}

pub fn cmd_select_reward(
    config: &PipelineConfig,
    dataset_path: &Path,
    best_base: &Path,
    worst_base: &Path,
    seed: u64,
    jobs: usize,
) -> Result<PathBuf, CliError> {
    set_live_env_allowed(false);
    let dataset = load_data(dataset_path)?;
    let best = load_artifact(best_base)?;
    let worst = load_artifact(worst_base)?;
    let report = select_reward_jobs(
        &config.rewards,
        &best,
        &worst,
        &dataset,
        &config.fqe,
        seed,
        jobs.max(1),
    )?;
    let dir = config.run_dir(seed)?;
    let json = dir.join("reward_selection.json");
    reports::write_json(&json, &report)?;
    reports::write_text(&dir.join("reward_selection.csv"), &reports::reward_selection_csv(&report))?;
    reports::write_text(&dir.join("reward_selection.txt"), &reports::reward_selection_text(&report))?;
    reports::write_manifest(
        &dir,
        "select-reward",
        &config.hash(),
        seed,
        &[json.clone(), dir.join("reward_selection.csv"), dir.join("reward_selection.txt")],
    )?;
    Ok(json)
}

/// Ground-truth audit: roll the policy out in the live environment and log
/// undiscounted composite returns. Explicitly outside the offline contract.
pub fn cmd_audit_online(
    config: &PipelineConfig,
    policy_base: &Path,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, CliError> {
    set_live_env_allowed(true);
    if episodes == 0 {
        return Err(CliError::Usage("audit needs at least 1 episode".into()));
    }
    let policy = load_artifact(policy_base)?;
    let reward_spec = RewardSpec::full();
    let mut env = Lander::new(config.env.clone(), rng::sub_seed(seed, "audit-env"));
    let mut eval = policy.evaluator(rng::sub_seed(seed, "audit-policy"));
    let mut returns = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        if episode > 0 {
            env.reset();
        }
        let mut g = 0.0;
        loop {
            let action = eval.greedy_action(&env.state().to_vec());
            let out = env.step(action).expect("stepped only while not done");
            g += reward_spec.apply(&out.reward);
            if out.done {
                break;
            }
        }
        returns.push(g);
    }
    let dir = config.run_dir(seed)?;
    let csv = dir.join("audit.csv");
    reports::write_text(&csv, &reports::audit_csv(&returns))?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std =
        (returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n).sqrt();
    let summary = serde_json::json!({
        "policy_id": policy.meta.policy_id,
        "episodes": returns.len(),
        "mean_return": mean,
        "std_return": std,
    });
    let json = dir.join("audit.json");
    reports::write_json(&json, &summary)?;
    reports::write_manifest(&dir, "audit-online", &config.hash(), seed, &[csv, json])?;
    Ok(returns)
}
