//! Report serialization: every report lands as JSON (machine), CSV (ledger),
//! and an aligned text table (human audit). All writers are deterministic —
//! no timestamps — so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use orl_core::ddqn::CurvePoint;
use orl_core::ope::OPEReport;
use orl_core::selection::{RewardSelectionReport, StateSelectionReport};
use serde::Serialize;

use crate::CliError;

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("report serializes");
    body.push('\n');
    write_text(path, &body)
}

/// Manifest of one command's outputs within a run directory.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub outputs: Vec<String>,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config_hash: &str,
    seed: u64,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        config_hash,
        seed,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    write_json(&dir.join(format!("manifest-{command}.json")), &manifest)
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("episode,episode_return,moving_average\n");
    for p in curve {
        writeln!(out, "{},{},{}", p.episode, p.episode_return, p.moving_average).unwrap();
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn state_selection_csv(report: &StateSelectionReport) -> String {
    let mut out = String::from("state_space,dim,policy_id,value,effective_sample_size,online_value\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.state_space,
            r.dim,
            r.policy_id,
            r.value,
            opt(r.effective_sample_size),
            opt(r.online_value)
        )
        .unwrap();
    }
    out
}

pub fn state_selection_text(report: &StateSelectionReport) -> String {
    let mut out = format!(
        "state-space selection (reward {}, seed {})\n\n{:<12} {:>4} {:>14} {:>14}\n",
        report.reward_spec, report.seed, "candidate", "dim", "V_OPE", "online"
    );
    for r in &report.rows {
        let online = r.online_value.map(|v| format!("{v:>14.4}")).unwrap_or_else(|| format!("{:>14}", "-"));
        writeln!(out, "{:<12} {:>4} {:>14.4} {}", r.state_space, r.dim, r.value, online).unwrap();
    }
    writeln!(out, "\nwinner: {}", report.winner).unwrap();
    out
}

pub fn reward_selection_csv(report: &RewardSelectionReport) -> String {
    let mut out = String::from("reward,mean_worst,mean_best,delta_v,js,kl,degenerate\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.reward, r.mean_worst, r.mean_best, r.delta_v, r.js, r.kl, r.degenerate
        )
        .unwrap();
    }
    out
}

pub fn reward_selection_text(report: &RewardSelectionReport) -> String {
    let mut out = format!(
        "reward selection (seed {})\n\n{:<10} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
        report.seed, "reward", "mean worst", "mean best", "difference", "JS", "KL"
    );
    for r in &report.rows {
        writeln!(
            out,
            "{:<10} {:>12.4} {:>12.4} {:>12.4} {:>10.6} {:>10.6}{}",
            r.reward,
            r.mean_worst,
            r.mean_best,
            r.delta_v,
            r.js,
            r.kl,
            if r.degenerate { "  (degenerate)" } else { "" }
        )
        .unwrap();
    }
    writeln!(
        out,
        "\nwinner by mean difference: {}\nwinner by JS divergence:   {}\nwinner by KL divergence:   {}",
        report.winner_by_delta_v, report.winner_by_js, report.winner_by_kl
    )
    .unwrap();
    out
}

pub fn ope_results_csv(reports: &[OPEReport]) -> String {
    let mut out = String::from(
        "estimator,policy_id,reward_spec,value,episodes,effective_sample_size,weight_max,weight_mean\n",
    );
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.estimator,
            r.policy_id,
            r.reward_spec,
            r.value,
            r.per_episode.len(),
            opt(r.diagnostics.effective_sample_size),
            opt(r.diagnostics.weight_max),
            opt(r.diagnostics.weight_mean)
        )
        .unwrap();
    }
    out
}

pub fn audit_csv(returns: &[f64]) -> String {
    let mut out = String::from("episode,episode_return\n");
    for (i, g) in returns.iter().enumerate() {
        writeln!(out, "{i},{g}").unwrap();
    }
    out
}
