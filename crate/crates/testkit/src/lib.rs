//! Random small matching instances and exhaustive oracles.
//!
//! Nothing here calls into the solver or the matchers; the oracles only use
//! the library's data types to read instances.

use std::collections::HashMap;

use fairmatch::{
    normalize_rows, stock_volumes, InteractionDataset, ScoreKind, ScoreMatrix, StockVector,
};
use rand::Rng;

/// A stock-constrained matching problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dataset: InteractionDataset,
    pub raw: ScoreMatrix,
    pub normalized: ScoreMatrix,
    pub l: usize,
    pub stocks: StockVector,
}

/// Random binary adjacency where each pair is an interaction with probability `density`.
pub fn random_dataset<R: Rng>(rng: &mut R, m: usize, n: usize, density: f64) -> InteractionDataset {
    let mut pairs = Vec::new();
    for u in 0..m as u32 {
        for j in 0..n as u32 {
            if rng.gen_bool(density) {
                pairs.push((u, j));
            }
        }
    }
    InteractionDataset::from_edges(m, n, pairs).expect("pairs inside bounds")
}

/// Uniform random scores on non-interacted pairs; a `zero_rate` share of
/// pairs is left at zero. Users without history get empty rows, as they do
/// under diffusion.
pub fn random_scores<R: Rng>(
    rng: &mut R,
    dataset: &InteractionDataset,
    zero_rate: f64,
) -> ScoreMatrix {
    let mut rows = Vec::with_capacity(dataset.n_users());
    for u in 0..dataset.n_users() {
        let mut row = Vec::new();
        for j in 0..dataset.n_items() as u32 {
            if dataset.user_degrees()[u] > 0 && !dataset.contains(u, j) && !rng.gen_bool(zero_rate)
            {
                row.push((j, rng.gen_range(0.001..1.0)));
            }
        }
        rows.push(row);
    }
    ScoreMatrix::from_rows(dataset.n_items(), rows, ScoreKind::Raw).expect("valid scores")
}

/// Instance with `m <= max_m`, `2 <= n <= max_n`, `l <= max_l`, sparse
/// interactions and popularity-proportional stocks. With `random_stocks`
/// the stocks are drawn from `0..=3` instead, which often makes full fill
/// infeasible.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_m: usize,
    max_n: usize,
    max_l: usize,
    random_stocks: bool,
) -> Instance {
    loop {
        let m = rng.gen_range(1..=max_m);
        let n = rng.gen_range(2..=max_n);
        let l = rng.gen_range(1..=max_l);
        let density = rng.gen_range(0.1..0.45);
        let dataset = random_dataset(rng, m, n, density);
        if dataset.nnz() == 0 {
            continue;
        }
        let raw = random_scores(rng, &dataset, 0.15);
        let normalized = normalize_rows(&raw, 1.0).expect("theta in range");
        let stocks = if random_stocks {
            StockVector::from_volumes((0..n).map(|_| rng.gen_range(0..=3)).collect(), m, l)
        } else {
            stock_volumes(dataset.item_degrees(), dataset.active_users(), l)
                .expect("nonzero degrees")
        };
        return Instance {
            dataset,
            raw,
            normalized,
            l,
            stocks,
        };
    }
}

/// Two-decimal round-up of a normalized score, as an integer in 0..=100.
pub fn quantize(s: f64) -> i64 {
    ((s * 100.0 - 1e-9).ceil().max(0.0) as i64).min(100)
}

/// Best achievable `(matched pairs, sum of quantized scores)`, maximizing the
/// pair count first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Optimum {
    pub pairs: usize,
    pub score: i64,
}

/// Enumerates every feasible recommendation matrix: users with a training
/// history may take up to `l` non-interacted items with remaining stock.
pub fn brute_force(inst: &Instance) -> Optimum {
    let m = inst.dataset.n_users();
    let candidates: Vec<Vec<(usize, i64)>> = (0..m)
        .map(|u| {
            if inst.dataset.user_degrees()[u] == 0 {
                return Vec::new();
            }
            (0..inst.dataset.n_items())
                .filter(|&j| !inst.dataset.contains(u, j as u32) && inst.stocks.get(j) > 0)
                .map(|j| (j, quantize(inst.normalized.get(u, j as u32))))
                .collect()
        })
        .collect();
    let mut remaining = inst.stocks.volumes().to_vec();
    let mut memo = HashMap::new();
    search(0, &candidates, inst.l, &mut remaining, &mut memo)
}

fn search(
    u: usize,
    candidates: &[Vec<(usize, i64)>],
    l: usize,
    remaining: &mut Vec<u64>,
    memo: &mut HashMap<(usize, Vec<u64>), Optimum>,
) -> Optimum {
    if u == candidates.len() {
        return Optimum { pairs: 0, score: 0 };
    }
    if let Some(&hit) = memo.get(&(u, remaining.clone())) {
        return hit;
    }
    let cands = &candidates[u];
    let mut best = Optimum {
        pairs: 0,
        score: i64::MIN,
    };
    for mask in 0u32..(1 << cands.len()) {
        if mask.count_ones() as usize > l {
            continue;
        }
        let chosen: Vec<&(usize, i64)> = cands
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, c)| c)
            .collect();
        if chosen.iter().any(|&&(j, _)| remaining[j] == 0) {
            continue;
        }
        for &&(j, _) in &chosen {
            remaining[j] -= 1;
        }
        let rest = search(u + 1, candidates, l, remaining, memo);
        for &&(j, _) in &chosen {
            remaining[j] += 1;
        }
        let here = Optimum {
            pairs: rest.pairs + chosen.len(),
            score: rest.score + chosen.iter().map(|c| c.1).sum::<i64>(),
        };
        if here > best {
            best = here;
        }
    }
    memo.insert((u, remaining.clone()), best);
    best
}

/// `1 - sum_j sum_k |c_j - c_k| / (2 (n - 1) sum c)`, the mean-absolute-difference form.
pub fn mad_gini_complement(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mut diff = 0.0;
    for a in values {
        for b in values {
            diff += (a - b).abs();
        }
    }
    1.0 - diff / (2.0 * (n - 1.0) * total)
}

/// Item resources after the two diffusion steps from user `u`, evaluated
/// densely over every user-item pair and without zeroing interacted items.
pub fn dense_p3_resources(dataset: &InteractionDataset, u: usize) -> Vec<f64> {
    let (m, n) = (dataset.n_users(), dataset.n_items());
    let a = |i: usize, j: usize| {
        if dataset.contains(i, j as u32) {
            1.0
        } else {
            0.0
        }
    };
    let deg_v = dataset.item_degrees();
    let deg_u = dataset.user_degrees();
    let mut g = vec![0.0; m];
    for (k, gk) in g.iter_mut().enumerate() {
        for (j, &dv) in deg_v.iter().enumerate() {
            if dv > 0 {
                *gk += a(k, j) * a(u, j) / f64::from(dv);
            }
        }
    }
    (0..n)
        .map(|j| {
            (0..m)
                .filter(|&k| deg_u[k] > 0)
                .map(|k| a(k, j) * g[k] / f64::from(deg_u[k]))
                .sum()
        })
        .collect()
}
