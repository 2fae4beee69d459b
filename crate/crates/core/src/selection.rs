//! Design selection by off-policy evaluation alone: rank candidate state
//! spaces by the estimated value of the policy each one supports, and rank
//! candidate reward functions by how far apart they pull the return
//! distributions of a good and a bad policy.

use serde::{Deserialize, Serialize};

use crate::cql::{train_cql, CqlConfig, CqlError};
use crate::data::Dataset;
use crate::env::{RewardSpec, StateSpaceSpec};
use crate::ope::{estimate_dm_fqe, fit_fqe, FqeConfig, OpeError};
use crate::policy::PolicyArtifact;
use crate::rng;

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_RANGE: (f64, f64) = (-5.0, 5.0);
pub const SMOOTHING: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("no candidates supplied")]
    NoCandidates,
    #[error("fewer than 2 initial states in the dataset")]
    TooFewInitialStates,
    #[error("histogram bin edges differ between the two distributions")]
    MismatchedBinning,
    #[error("training: {0}")]
    Cql(#[from] CqlError),
    #[error("estimation: {0}")]
    Ope(#[from] OpeError),
}

/// Estimated return distribution of a policy: one sample per episode-initial
/// state, plus its standardized form and histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnDistribution {
    pub samples: Vec<f64>,
    /// Standardization parameters actually applied (own or pooled).
    pub mean: f64,
    pub std: f64,
    pub standardized: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Set when std == 0: standardized samples are defined as all-zero.
    pub degenerate: bool,
}

fn bin_edges() -> Vec<f64> {
    let (lo, hi) = HISTOGRAM_RANGE;
    let w = (hi - lo) / HISTOGRAM_BINS as f64;
    (0..=HISTOGRAM_BINS).map(|i| lo + w * i as f64).collect()
}

impl ReturnDistribution {
    /// Standardize `samples` with the given parameters and histogram them on
    /// the fixed standardized-unit bins; out-of-range values are clipped to
    /// the edge bins.
    pub fn from_samples_with(samples: Vec<f64>, mean: f64, std: f64) -> Self {
        // Relative threshold: summation noise keeps the std of identical
        // samples slightly above exact zero.
        let degenerate = std <= 1e-12 * mean.abs().max(1.0);
        let standardized: Vec<f64> = if degenerate {
            vec![0.0; samples.len()]
        } else {
            samples.iter().map(|s| (s - mean) / std).collect()
        };
        let (lo, hi) = HISTOGRAM_RANGE;
        let w = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut masses = vec![0.0; HISTOGRAM_BINS];
        for &z in &standardized {
            let idx = (((z - lo) / w).floor() as i64).clamp(0, HISTOGRAM_BINS as i64 - 1);
            masses[idx as usize] += 1.0;
        }
        let n = standardized.len() as f64;
        for m in &mut masses {
            *m /= n;
        }
        ReturnDistribution {
            samples,
            mean,
            std,
            standardized,
            bin_edges: bin_edges(),
            masses,
            degenerate,
        }
    }

    /// Standardize with the samples' own mean and (population) std.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&samples);
        Self::from_samples_with(samples, mean, std)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn smoothed(masses: &[f64]) -> Vec<f64> {
    let total: f64 = masses.iter().map(|m| m + SMOOTHING).sum();
    masses.iter().map(|m| (m + SMOOTHING) / total).collect()
}

/// Histogram KL with additive smoothing; nonnegative by construction.
pub fn kl_divergence(p: &ReturnDistribution, q: &ReturnDistribution) -> Result<f64, SelectionError> {
    if p.bin_edges != q.bin_edges {
        return Err(SelectionError::MismatchedBinning);
    }
    let ps = smoothed(&p.masses);
    let qs = smoothed(&q.masses);
    Ok(ps.iter().zip(&qs).map(|(p, q)| p * (p / q).ln()).sum::<f64>().max(0.0))
}

/// Jensen-Shannon divergence on the smoothed histograms; in [0, ln 2].
pub fn js_divergence(p: &ReturnDistribution, q: &ReturnDistribution) -> Result<f64, SelectionError> {
    if p.bin_edges != q.bin_edges {
        return Err(SelectionError::MismatchedBinning);
    }
    let ps = smoothed(&p.masses);
    let qs = smoothed(&q.masses);
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let m = 0.5 * (x + y);
                x * (x / m).ln()
            })
            .sum()
    };
    let js = 0.5 * kl_to_mid(&ps, &qs) + 0.5 * kl_to_mid(&qs, &ps);
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Fit an FQE evaluator for (policy, reward) and read one value sample per
/// episode-initial state: E_{a ~ pi} Q(s0, a).
pub fn value_samples(
    dataset: &Dataset,
    policy: &PolicyArtifact,
    reward_spec: &RewardSpec,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<Vec<f64>, SelectionError> {
    let context = StateSpaceSpec::identity("union", dataset.union_dim());
    let fit = fit_fqe(dataset, policy, reward_spec, &context, fqe_cfg, seed)?;
    let report = estimate_dm_fqe(&fit, dataset, policy)?;
    Ok(report.per_episode)
}

/// Return distribution of one policy under one reward, standardized with its
/// own statistics.
pub fn build_return_distribution(
    dataset: &Dataset,
    policy: &PolicyArtifact,
    reward_spec: &RewardSpec,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<ReturnDistribution, SelectionError> {
    if dataset.episodes.len() < 2 {
        return Err(SelectionError::TooFewInitialStates);
    }
    let samples = value_samples(dataset, policy, reward_spec, fqe_cfg, seed)?;
    Ok(ReturnDistribution::from_samples(samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCandidateRow {
    pub state_space: String,
    pub dim: usize,
    pub policy_id: String,
    pub value: f64,
    pub effective_sample_size: Option<f64>,
    /// Filled in by an online audit run, never by selection itself.
    pub online_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSelectionReport {
    /// Sorted descending by value; ties by smaller dimension, then name.
    pub rows: Vec<StateCandidateRow>,
    pub winner: String,
    pub reward_spec: String,
    pub seed: u64,
}

/// Ordering used both for row sorting and winner choice: higher value first,
/// ties broken by smaller dimension, then name.
fn row_order(a: &StateCandidateRow, b: &StateCandidateRow) -> std::cmp::Ordering {
    b.value
        .partial_cmp(&a.value)
        .expect("candidate values are finite")
        .then(a.dim.cmp(&b.dim))
        .then(a.state_space.cmp(&b.state_space))
}

pub fn winner_from_rows(rows: &[StateCandidateRow]) -> &str {
    rows.iter()
        .min_by(|a, b| row_order(a, b))
        .map(|r| r.state_space.as_str())
        .expect("at least one row")
}

fn state_candidate_row(
    spec: &StateSpaceSpec,
    dataset: &Dataset,
    reward_spec: &RewardSpec,
    cql_cfg: &CqlConfig,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<StateCandidateRow, SelectionError> {
    let context = StateSpaceSpec::identity("union", dataset.union_dim());
    let job = format!("select-state/{}", spec.name);
    let policy = train_cql(dataset, spec, reward_spec, cql_cfg, rng::sub_seed(seed, &job))?;
    let fit = fit_fqe(
        dataset,
        &policy,
        reward_spec,
        &context,
        fqe_cfg,
        rng::sub_seed(seed, &format!("{job}/fqe")),
    )?;
    let report = estimate_dm_fqe(&fit, dataset, &policy)?;
    Ok(StateCandidateRow {
        state_space: spec.name.clone(),
        dim: spec.dim(),
        policy_id: policy.meta.policy_id.clone(),
        value: report.value,
        effective_sample_size: report.diagnostics.effective_sample_size,
        online_value: None,
    })
}

/// Run one fallible job per candidate, optionally across threads. Results
/// come back in candidate order regardless of completion order, so parallel
/// runs are byte-identical to sequential ones.
fn per_candidate<C: Sync, R: Send, F>(candidates: &[C], jobs: usize, f: F) -> Result<Vec<R>, SelectionError>
where
    F: Fn(&C) -> Result<R, SelectionError> + Sync,
{
    if jobs <= 1 || candidates.len() <= 1 {
        return candidates.iter().map(&f).collect();
    }
    let n_threads = jobs.min(candidates.len());
    let mut slots: Vec<Option<Result<R, SelectionError>>> =
        candidates.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..n_threads {
            let f = &f;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = worker;
                while i < candidates.len() {
                    out.push((i, f(&candidates[i])));
                    i += n_threads;
                }
                out
            }));
        }
        for handle in handles {
            for (i, result) in handle.join().expect("candidate job panicked") {
                slots[i] = Some(result);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// Train one offline policy per candidate state space and rank the
/// candidates by the DM-FQE estimate of their policies' values.
pub fn select_state_space(
    candidates: &[StateSpaceSpec],
    dataset: &Dataset,
    reward_spec: &RewardSpec,
    cql_cfg: &CqlConfig,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<StateSelectionReport, SelectionError> {
    select_state_space_jobs(candidates, dataset, reward_spec, cql_cfg, fqe_cfg, seed, 1)
}

/// As `select_state_space`, with up to `jobs` candidates trained in parallel.
pub fn select_state_space_jobs(
    candidates: &[StateSpaceSpec],
    dataset: &Dataset,
    reward_spec: &RewardSpec,
    cql_cfg: &CqlConfig,
    fqe_cfg: &FqeConfig,
    seed: u64,
    jobs: usize,
) -> Result<StateSelectionReport, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let mut rows = per_candidate(candidates, jobs, |spec| {
        state_candidate_row(spec, dataset, reward_spec, cql_cfg, fqe_cfg, seed)
    })?;
    rows.sort_by(row_order);
    let winner = rows[0].state_space.clone();
    Ok(StateSelectionReport { rows, winner, reward_spec: reward_spec.name.clone(), seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCandidateRow {
    pub reward: String,
    /// Means of the standardized (pooled per reward) value samples.
    pub mean_worst: f64,
    pub mean_best: f64,
    /// mean_best - mean_worst in pooled standardized units.
    pub delta_v: f64,
    /// KL(best || worst) on the standardized histograms.
    pub kl: f64,
    pub js: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSelectionReport {
    pub rows: Vec<RewardCandidateRow>,
    /// The paper's stated argmax criterion.
    pub winner_by_delta_v: String,
    pub winner_by_kl: String,
    pub winner_by_js: String,
    pub seed: u64,
}

fn reward_winner<F: Fn(&RewardCandidateRow) -> f64>(rows: &[RewardCandidateRow], key: F) -> String {
    rows.iter()
        .min_by(|a, b| {
            key(b)
                .partial_cmp(&key(a))
                .expect("criteria are finite")
                .then(a.reward.cmp(&b.reward))
        })
        .map(|r| r.reward.clone())
        .expect("at least one row")
}

/// Score each candidate reward by how well it separates a good policy's
/// return distribution from a bad one's. Standardization is pooled over both
/// policies per reward so the comparison units are common.
pub fn select_reward(
    candidates: &[RewardSpec],
    best_policy: &PolicyArtifact,
    worst_policy: &PolicyArtifact,
    dataset: &Dataset,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<RewardSelectionReport, SelectionError> {
    select_reward_jobs(candidates, best_policy, worst_policy, dataset, fqe_cfg, seed, 1)
}

fn reward_candidate_row(
    spec: &RewardSpec,
    best_policy: &PolicyArtifact,
    worst_policy: &PolicyArtifact,
    dataset: &Dataset,
    fqe_cfg: &FqeConfig,
    seed: u64,
) -> Result<RewardCandidateRow, SelectionError> {
    // Both policies share one FQE seed per reward: the comparison is
    // paired, and identical policies yield identical samples exactly.
    let job_seed = rng::sub_seed(seed, &format!("select-reward/{}", spec.name));
    let best = value_samples(dataset, best_policy, spec, fqe_cfg, job_seed)?;
    let worst = value_samples(dataset, worst_policy, spec, fqe_cfg, job_seed)?;
    let pooled: Vec<f64> = best.iter().chain(&worst).copied().collect();
    let (mean, std) = mean_std(&pooled);
    let d_best = ReturnDistribution::from_samples_with(best, mean, std);
    let d_worst = ReturnDistribution::from_samples_with(worst, mean, std);
    let zmean =
        |d: &ReturnDistribution| d.standardized.iter().sum::<f64>() / d.standardized.len() as f64;
    let (mean_best, mean_worst) = (zmean(&d_best), zmean(&d_worst));
    Ok(RewardCandidateRow {
        reward: spec.name.clone(),
        mean_worst,
        mean_best,
        delta_v: mean_best - mean_worst,
        kl: kl_divergence(&d_best, &d_worst)?,
        js: js_divergence(&d_best, &d_worst)?,
        degenerate: d_best.degenerate || d_worst.degenerate,
    })
}

/// As `select_reward`, with up to `jobs` reward candidates scored in parallel.
pub fn select_reward_jobs(
    candidates: &[RewardSpec],
    best_policy: &PolicyArtifact,
    worst_policy: &PolicyArtifact,
    dataset: &Dataset,
    fqe_cfg: &FqeConfig,
    seed: u64,
    jobs: usize,
) -> Result<RewardSelectionReport, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    if dataset.episodes.len() < 2 {
        return Err(SelectionError::TooFewInitialStates);
    }
    let mut rows = per_candidate(candidates, jobs, |spec| {
        reward_candidate_row(spec, best_policy, worst_policy, dataset, fqe_cfg, seed)
    })?;
    rows.sort_by(|a, b| {
        b.delta_v
            .partial_cmp(&a.delta_v)
            .expect("delta_v finite")
            .then(a.reward.cmp(&b.reward))
    });
    Ok(RewardSelectionReport {
        winner_by_delta_v: reward_winner(&rows, |r| r.delta_v),
        winner_by_kl: reward_winner(&rows, |r| r.kl),
        winner_by_js: reward_winner(&rows, |r| r.js),
        rows,
        seed,
    })
}
