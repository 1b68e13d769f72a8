//! Offline evaluation: precision, aggregate diversity, exposure fairness and
//! the Gini complement of in-list scores.

use crate::data::InteractionDataset;
use crate::diffusion::ScoreMatrix;
use crate::error::{Error, Result};
use crate::matching::RecommendationMatrix;

/// The four evaluation measures plus the run they describe.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dataset: String,
    pub algorithm: String,
    pub strategy: String,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub l: usize,
    pub precision: f64,
    pub aggregate_diversity: f64,
    pub exposure_fairness: f64,
    pub score_gini: f64,
    pub underfill_count: usize,
}

/// Mean of `hits / l` over users with at least one probe interaction.
/// Short lists still divide by the nominal `l`.
pub fn precision(r: &RecommendationMatrix, probe: &InteractionDataset, l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::Evaluation("list length must be at least 1".into()));
    }
    if probe.n_users() != r.n_users() {
        return Err(Error::Evaluation(format!(
            "probe has {} users, recommendations {}",
            probe.n_users(),
            r.n_users()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for u in 0..probe.n_users() {
        if probe.user_items(u).is_empty() {
            continue;
        }
        let hits = r.picks(u).iter().filter(|&&j| probe.contains(u, j)).count();
        total += hits as f64 / l as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Evaluation("no user has probe interactions".into()));
    }
    Ok(total / counted as f64)
}

/// Fraction of the `n` items recommended to at least one user.
pub fn aggregate_diversity(r: &RecommendationMatrix, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let covered = r.item_counts().iter().filter(|&&c| c > 0).count();
    covered as f64 / n as f64
}

/// `1 - 1/(N-1) * sum_k (2k - N - 1) p_k` over the ascending shares `p_k` of
/// `values`. A single value is perfectly equal.
pub fn gini_complement(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Evaluation("empty distribution".into()));
    }
    let total: f64 = values.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Evaluation("distribution has no mass".into()));
    }
    let n = values.len();
    if n == 1 {
        return Ok(1.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &v)| (2.0 * (k + 1) as f64 - n as f64 - 1.0) * (v / total))
        .sum();
    Ok(1.0 - weighted / (n - 1) as f64)
}

/// Gini complement of per-item recommendation counts, never-recommended
/// items included as zeros.
pub fn exposure_fairness(r: &RecommendationMatrix) -> Result<f64> {
    if r.n_items() < 2 {
        return Err(Error::Evaluation(format!(
            "exposure fairness needs at least 2 items, got {}",
            r.n_items()
        )));
    }
    if r.total_picks() == 0 {
        return Err(Error::Evaluation("no recommendations to evaluate".into()));
    }
    let counts: Vec<f64> = r.item_counts().into_iter().map(|c| c as f64).collect();
    gini_complement(&counts)
}

/// Gini complement of the scores of all picked pairs.
pub fn score_gini(r: &RecommendationMatrix, scores: &ScoreMatrix) -> Result<f64> {
    let picked: Vec<f64> = r
        .lists()
        .iter()
        .enumerate()
        .flat_map(|(u, p)| p.iter().map(move |&j| scores.get(u, j)))
        .collect();
    if picked.is_empty() {
        return Err(Error::Evaluation("no recommendations to evaluate".into()));
    }
    if picked.iter().all(|&s| s == 0.0) {
        return Err(Error::Evaluation("all recommended scores are zero".into()));
    }
    gini_complement(&picked)
}
