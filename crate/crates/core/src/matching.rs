//! Unconstrained top-l lists and the largest-normalized-score-first greedy matcher.

use std::cmp::Ordering;
use std::io::Write;

use crate::constraints::StockVector;
use crate::data::InteractionDataset;
use crate::diffusion::ScoreMatrix;
use crate::error::{Error, Result};

/// Recommendation lists, one per user, in pick order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationMatrix {
    n_items: usize,
    l: usize,
    picks: Vec<Vec<u32>>,
}

impl RecommendationMatrix {
    pub fn new(n_items: usize, l: usize, picks: Vec<Vec<u32>>) -> Self {
        RecommendationMatrix { n_items, l, picks }
    }

    pub fn n_users(&self) -> usize {
        self.picks.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn list_length(&self) -> usize {
        self.l
    }

    pub fn picks(&self, u: usize) -> &[u32] {
        &self.picks[u]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.picks
    }

    pub fn total_picks(&self) -> usize {
        self.picks.iter().map(Vec::len).sum()
    }

    /// Filled slots per user.
    pub fn fill_report(&self) -> Vec<usize> {
        self.picks.iter().map(Vec::len).collect()
    }

    /// Missing slots for user `u`.
    pub fn shortfall(&self, u: usize) -> usize {
        self.l.saturating_sub(self.picks[u].len())
    }

    /// Number of users whose list holds fewer than `l` items.
    pub fn underfilled_users(&self) -> usize {
        self.picks.iter().filter(|p| p.len() < self.l).count()
    }

    /// How often each item was recommended.
    pub fn item_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_items];
        for &j in self.picks.iter().flatten() {
            counts[j as usize] += 1;
        }
        counts
    }

    /// Sum of `scores` over all picked pairs.
    pub fn total_score(&self, scores: &ScoreMatrix) -> f64 {
        self.picks
            .iter()
            .enumerate()
            .flat_map(|(u, p)| p.iter().map(move |&j| scores.get(u, j)))
            .sum()
    }

    /// Checks list lengths, duplicates, interacted items and stock limits.
    pub fn check_feasible(
        &self,
        dataset: &InteractionDataset,
        stocks: Option<&StockVector>,
    ) -> Result<()> {
        let mut seen = vec![false; self.n_items];
        for (u, picks) in self.picks.iter().enumerate() {
            if picks.len() > self.l {
                return Err(Error::Evaluation(format!(
                    "user {u} holds {} > l items",
                    picks.len()
                )));
            }
            for &j in picks {
                if seen[j as usize] {
                    return Err(Error::Evaluation(format!("user {u} holds item {j} twice")));
                }
                seen[j as usize] = true;
                if dataset.contains(u, j) {
                    return Err(Error::Evaluation(format!(
                        "user {u} recommended interacted item {j}"
                    )));
                }
            }
            for &j in picks {
                seen[j as usize] = false;
            }
        }
        if let Some(stocks) = stocks {
            for (j, (&c, &q)) in self.item_counts().iter().zip(stocks.volumes()).enumerate() {
                if c > q {
                    return Err(Error::Evaluation(format!(
                        "item {j} recommended {c} > {q} times"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One line per user: `user_ext_id: item_ext_id,item_ext_id,...`
    pub fn write_lists<W: Write>(&self, mut out: W, dataset: &InteractionDataset) -> Result<()> {
        for (u, picks) in self.picks.iter().enumerate() {
            write!(out, "{}:", dataset.users().external(u as u32))?;
            for (k, &j) in picks.iter().enumerate() {
                let sep = if k == 0 { " " } else { "," };
                write!(out, "{sep}{}", dataset.items().external(j))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Descending score, then ascending item index.
fn by_score_then_item(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn check_dims(scores: &ScoreMatrix, dataset: &InteractionDataset) -> Result<()> {
    if scores.n_users() != dataset.n_users() || scores.n_items() != dataset.n_items() {
        return Err(Error::Parameter(format!(
            "score matrix is {}x{} but dataset is {}x{}",
            scores.n_users(),
            scores.n_items(),
            dataset.n_users(),
            dataset.n_items()
        )));
    }
    Ok(())
}

fn check_list_length(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::Parameter("list length must be at least 1".into()));
    }
    Ok(())
}

/// The `l` best-scoring candidates of every user, independently.
///
/// Candidates are non-interacted items with a positive score; users with fewer
/// candidates get truncated lists.
pub fn unconstrained_topl(
    scores: &ScoreMatrix,
    dataset: &InteractionDataset,
    l: usize,
) -> Result<RecommendationMatrix> {
    check_dims(scores, dataset)?;
    check_list_length(l)?;
    let picks = scores
        .rows()
        .iter()
        .enumerate()
        .map(|(u, row)| {
            let mut cands: Vec<(u32, f64)> = row
                .iter()
                .copied()
                .filter(|&(j, s)| s > 0.0 && !dataset.contains(u, j))
                .collect();
            cands.sort_unstable_by(by_score_then_item);
            cands.truncate(l);
            cands.into_iter().map(|(j, _)| j).collect()
        })
        .collect();
    Ok(RecommendationMatrix::new(dataset.n_items(), l, picks))
}

/// Largest-normalized-score-first matching under list-length and stock limits.
///
/// All positive-score non-interacted pairs are visited in descending score
/// order (ties: ascending user, then ascending item); a pair is taken while
/// both the user's list and the item's stock have room. Vacancies left when
/// the pairs run out are reported through the fill report.
pub fn greedy_match(
    scores: &ScoreMatrix,
    dataset: &InteractionDataset,
    l: usize,
    stocks: &StockVector,
) -> Result<RecommendationMatrix> {
    check_dims(scores, dataset)?;
    check_list_length(l)?;
    if stocks.len() != dataset.n_items() {
        return Err(Error::Parameter(format!(
            "{} stock volumes for {} items",
            stocks.len(),
            dataset.n_items()
        )));
    }

    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(scores.nnz());
    for (u, row) in scores.rows().iter().enumerate() {
        for &(j, s) in row {
            if s > 0.0 && !dataset.contains(u, j) {
                pairs.push((s, u as u32, j));
            }
        }
    }
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut vacancies = vec![l; dataset.n_users()];
    let mut open_users = dataset.n_users();
    let mut remaining: Vec<u64> = stocks.volumes().to_vec();
    let mut picks = vec![Vec::new(); dataset.n_users()];
    for (_, u, j) in pairs {
        if open_users == 0 {
            break;
        }
        let (u, j) = (u as usize, j as usize);
        if vacancies[u] > 0 && remaining[j] > 0 {
            picks[u].push(j as u32);
            vacancies[u] -= 1;
            remaining[j] -= 1;
            if vacancies[u] == 0 {
                open_users -= 1;
            }
        }
    }
    Ok(RecommendationMatrix::new(dataset.n_items(), l, picks))
}
