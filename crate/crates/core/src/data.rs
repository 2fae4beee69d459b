//! Logged-interaction dataset format: one header line of JSON followed by
//! one JSON object per transition, optionally gzip-compressed. This file
//! format is the contract that keeps every downstream stage environment-free.

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::env::RewardComponents;

pub const FORMAT_VERSION: u32 = 1;
pub const EXT_PLAIN: &str = ".orl.jsonl";
pub const EXT_GZ: &str = ".orl.jsonl.gz";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub episode_id: u64,
    pub t: u32,
    pub s_union: Vec<f64>,
    pub action: usize,
    pub reward: RewardComponents,
    pub s_next_union: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
    pub propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub action_count: usize,
    pub env_config_hash: String,
    pub collection_seed: u64,
    pub episode_count: u64,
    pub transition_count: u64,
}

/// An episode is the ordered list of its transitions.
pub type Episode = Vec<Transition>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub episodes: Vec<Episode>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    VersionMismatch(u32),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("missing header line")]
    MissingHeader,
}

impl Dataset {
    pub fn new(header: DatasetHeader, episodes: Vec<Episode>) -> Dataset {
        Dataset { header, episodes }
    }

    pub fn union_dim(&self) -> usize {
        self.header.feature_names.len()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Undiscounted / discounted return of an episode under a reward spec.
    pub fn episode_return(
        episode: &Episode,
        spec: &crate::env::RewardSpec,
        gamma: f64,
    ) -> f64 {
        let mut g = 0.0;
        let mut disc = 1.0;
        for tr in episode {
            g += disc * spec.apply(&tr.reward);
            disc *= gamma;
        }
        g
    }
}

fn check_transition(tr: &Transition, union_dim: usize, violations: &mut Vec<String>) {
    let at = format!("episode {} step {}", tr.episode_id, tr.t);
    if !(tr.propensity > 0.0 && tr.propensity <= 1.0) {
        violations.push(format!("{at}: propensity {} outside (0, 1]", tr.propensity));
    }
    if tr.s_union.len() != union_dim || tr.s_next_union.len() != union_dim {
        violations.push(format!(
            "{at}: state length {} / {} != union dimension {union_dim}",
            tr.s_union.len(),
            tr.s_next_union.len()
        ));
    }
    if tr.s_union.iter().chain(&tr.s_next_union).any(|v| !v.is_finite()) {
        violations.push(format!("{at}: non-finite state feature"));
    }
    if !tr.reward.is_finite() {
        violations.push(format!("{at}: non-finite reward component"));
    }
    if tr.truncated && !tr.done {
        violations.push(format!("{at}: truncated but not done"));
    }
    if !tr.done && tr.reward.terminal != 0.0 {
        violations.push(format!("{at}: nonzero terminal component before episode end"));
    }
}

/// Validation diagnostics; violations carry the offending episode/step.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetDiagnostics {
    pub episode_count: u64,
    pub transition_count: u64,
    pub min_propensity: f64,
    pub mean_return_state_based: f64,
    pub mean_return_action_based: f64,
    pub mean_return_terminal: f64,
    pub violations: Vec<String>,
}

impl DatasetDiagnostics {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check every structural invariant; never fails, failures are reported
/// as diagnostics.
pub fn validate_dataset(header: &DatasetHeader, episodes: &[Episode]) -> DatasetDiagnostics {
    let mut violations = Vec::new();
    let union_dim = header.feature_names.len();
    if header.format_version != FORMAT_VERSION {
        violations.push(format!("header: format_version {}", header.format_version));
    }
    let transition_count: u64 = episodes.iter().map(|e| e.len() as u64).sum();
    if header.episode_count != episodes.len() as u64 {
        violations.push(format!(
            "header: episode_count {} but body has {}",
            header.episode_count,
            episodes.len()
        ));
    }
    if header.transition_count != transition_count {
        violations.push(format!(
            "header: transition_count {} but body has {transition_count}",
            header.transition_count
        ));
    }
    let mut min_propensity = f64::INFINITY;
    let mut sums = [0.0f64; 3];
    for ep in episodes {
        if ep.is_empty() {
            violations.push("empty episode".to_string());
            continue;
        }
        let id = ep[0].episode_id;
        for (i, tr) in ep.iter().enumerate() {
            check_transition(tr, union_dim, &mut violations);
            if tr.episode_id != id {
                violations.push(format!(
                    "episode {id}: transition with mismatched episode_id {}",
                    tr.episode_id
                ));
            }
            if tr.t != i as u32 {
                violations.push(format!(
                    "episode {id}: step index {} at position {i}, expected contiguous from 0",
                    tr.t
                ));
            }
            let last = i == ep.len() - 1;
            if tr.done != last {
                violations.push(format!(
                    "episode {id} step {}: done={} but position is {}",
                    tr.t,
                    tr.done,
                    if last { "last" } else { "not last" }
                ));
            }
            min_propensity = min_propensity.min(tr.propensity);
            sums[0] += tr.reward.state_based;
            sums[1] += tr.reward.action_based;
            sums[2] += tr.reward.terminal;
        }
    }
    let n_ep = episodes.len().max(1) as f64;
    DatasetDiagnostics {
        episode_count: episodes.len() as u64,
        transition_count,
        min_propensity: if min_propensity.is_finite() { min_propensity } else { 0.0 },
        mean_return_state_based: sums[0] / n_ep,
        mean_return_action_based: sums[1] / n_ep,
        mean_return_terminal: sums[2] / n_ep,
        violations,
    }
}

fn is_gz(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".gz")
}

/// Write header + line-delimited transitions. Gzip is selected by a `.gz`
/// file extension. Refuses to write a dataset whose invariants fail.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let diag = validate_dataset(&dataset.header, &dataset.episodes);
    if !diag.ok() {
        return Err(DataError::Invariant(diag.violations.join("; ")));
    }
    let file = std::fs::File::create(path)?;
    let mut writer: Box<dyn Write> = if is_gz(path) {
        Box::new(BufWriter::new(GzEncoder::new(file, Compression::default())))
    } else {
        Box::new(BufWriter::new(file))
    };
    serde_json::to_writer(&mut writer, &dataset.header).map_err(io_err)?;
    writer.write_all(b"\n")?;
    for tr in dataset.transitions() {
        serde_json::to_writer(&mut writer, tr).map_err(io_err)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> DataError {
    DataError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Read and fully validate a dataset file. Either the whole dataset loads
/// or an error is returned; no partial results.
pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut lines = BufReader::new(reader).lines();
    let header_line = lines.next().ok_or(DataError::MissingHeader)??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| DataError::MalformedLine { line: 1, msg: e.to_string() })?;
    if header.format_version != FORMAT_VERSION {
        return Err(DataError::VersionMismatch(header.format_version));
    }
    let mut episodes: Vec<Episode> = Vec::new();
    let mut current: Episode = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let tr: Transition = serde_json::from_str(&line)
            .map_err(|e| DataError::MalformedLine { line: line_no, msg: e.to_string() })?;
        if !(tr.propensity > 0.0 && tr.propensity <= 1.0) {
            return Err(DataError::MalformedLine {
                line: line_no,
                msg: format!("propensity {} outside (0, 1]", tr.propensity),
            });
        }
        let done = tr.done;
        current.push(tr);
        if done {
            episodes.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        return Err(DataError::MalformedLine {
            line: 0,
            msg: "trailing transitions without a terminal flag (truncated file?)".to_string(),
        });
    }
    let diag = validate_dataset(&header, &episodes);
    if !diag.ok() {
        return Err(DataError::Invariant(diag.violations.join("; ")));
    }
    Ok(Dataset { header, episodes })
}
