//! Mass-diffusion (P3) scoring, RP3 popularity rescaling and row normalization.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};

/// Scores below this are not stored.
pub const SCORE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreKind {
    Raw,
    /// Rows divided by their sum raised to `theta`.
    Normalized {
        theta: f64,
    },
}

/// Per-user sparse score vectors, sorted by item index.
///
/// Entries are nonnegative, and items the user already interacted with are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n_items: usize,
    rows: Vec<Vec<(u32, f64)>>,
    kind: ScoreKind,
}

impl ScoreMatrix {
    /// Builds a matrix from per-user `(item, score)` lists. Rows are sorted,
    /// zero entries dropped; negative or non-finite scores are rejected.
    pub fn from_rows(n_items: usize, rows: Vec<Vec<(u32, f64)>>, kind: ScoreKind) -> Result<Self> {
        let mut rows = rows;
        for row in &mut rows {
            for &(j, s) in row.iter() {
                if j as usize >= n_items {
                    return Err(Error::Parameter(format!(
                        "item {j} outside {n_items} items"
                    )));
                }
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "score {s} is not a nonnegative number"
                    )));
                }
            }
            row.retain(|&(_, s)| s > 0.0);
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Parameter("duplicate item in score row".into()));
            }
        }
        Ok(ScoreMatrix {
            n_items,
            rows,
            kind,
        })
    }

    /// Dense rows; interacted items of `dataset` are zeroed.
    pub fn from_dense(dense: &[Vec<f64>], dataset: &InteractionDataset) -> Result<Self> {
        let rows = dense
            .iter()
            .enumerate()
            .map(|(u, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, _)| !dataset.contains(u, j as u32))
                    .map(|(j, &s)| (j as u32, s))
                    .collect()
            })
            .collect();
        Self::from_rows(dataset.n_items(), rows, ScoreKind::Raw)
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn row(&self, u: usize) -> &[(u32, f64)] {
        &self.rows[u]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn get(&self, u: usize, j: u32) -> f64 {
        let row = &self.rows[u];
        match row.binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, u: usize) -> f64 {
        self.rows[u].iter().map(|&(_, s)| s).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Cache format: header `m n`, then `i j s` lines with 17 significant digits.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n_users(), self.n_items)?;
        for (u, row) in self.rows.iter().enumerate() {
            for &(j, s) in row {
                writeln!(out, "{u} {j} {s:.16e}")?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R, kind: ScoreKind) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e: std::num::ParseIntError| Error::parse(1, e.to_string()))?;
        let [m, n] = dims[..] else {
            return Err(Error::parse(1, "expected `m n`"));
        };
        let mut rows = vec![Vec::new(); m];
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line_no = idx + 2;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [u, j, s] = fields[..] else {
                return Err(Error::parse(line_no, "expected `i j s`"));
            };
            let bad = |e: String| Error::parse(line_no, e);
            let u: usize = u
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let j: u32 = j
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let s: f64 = s
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            if u >= m {
                return Err(bad(format!("user {u} outside {m} rows")));
            }
            rows[u].push((j, s));
        }
        Self::from_rows(n, rows, kind)
    }
}

/// Item resources after the item -> user -> item diffusion from user `u`,
/// before interacted items are zeroed. Sums to `deg(u)`.
pub fn p3_resources(dataset: &InteractionDataset, u: usize) -> Vec<f64> {
    let mut user_mass = vec![0.0; dataset.n_users()];
    let mut item_mass = vec![0.0; dataset.n_items()];
    diffuse_into(dataset, u, &mut user_mass, &mut item_mass, &mut Vec::new());
    item_mass
}

/// Runs both diffusion steps for user `u`, leaving item resources in
/// `item_mass`; `touched` collects the items that received any mass.
fn diffuse_into(
    dataset: &InteractionDataset,
    u: usize,
    user_mass: &mut [f64],
    item_mass: &mut [f64],
    touched: &mut Vec<u32>,
) {
    let degrees_u = dataset.user_degrees();
    let degrees_v = dataset.item_degrees();
    let mut reached_users = Vec::new();
    for &j in dataset.user_items(u) {
        let deg_j = degrees_v[j as usize];
        assert!(deg_j > 0, "interacted item {j} has zero degree");
        let share = 1.0 / f64::from(deg_j);
        for &k in dataset.item_users(j as usize) {
            if user_mass[k as usize] == 0.0 {
                reached_users.push(k);
            }
            user_mass[k as usize] += share;
        }
    }
    for &k in &reached_users {
        let mass = std::mem::take(&mut user_mass[k as usize]);
        let share = mass / f64::from(degrees_u[k as usize]);
        for &j in dataset.user_items(k as usize) {
            if item_mass[j as usize] == 0.0 {
                touched.push(j);
            }
            item_mass[j as usize] += share;
        }
    }
}

/// P3 mass-diffusion scores for every user. Interacted items are zeroed and
/// users without interactions get empty rows.
pub fn p3_scores(dataset: &InteractionDataset) -> ScoreMatrix {
    let (m, n) = (dataset.n_users(), dataset.n_items());
    let rows: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map_init(
            || (vec![0.0; m], vec![0.0; n], Vec::new()),
            |(user_mass, item_mass, touched), u| {
                touched.clear();
                diffuse_into(dataset, u, user_mass, item_mass, touched);
                touched.sort_unstable();
                let mut row = Vec::with_capacity(touched.len());
                for &j in touched.iter() {
                    let s = std::mem::take(&mut item_mass[j as usize]);
                    if s >= SCORE_EPSILON && !dataset.contains(u, j) {
                        row.push((j, s));
                    }
                }
                row
            },
        )
        .collect();
    ScoreMatrix {
        n_items: n,
        rows,
        kind: ScoreKind::Raw,
    }
}

fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} = {value} outside [0, 1]")))
    }
}

/// RP3: divides each score by the item's degree raised to `lambda`.
pub fn rp3_rescale(raw: &ScoreMatrix, item_degrees: &[u32], lambda: f64) -> Result<ScoreMatrix> {
    check_unit_interval("lambda", lambda)?;
    if raw.kind != ScoreKind::Raw {
        return Err(Error::Parameter("rp3 rescaling expects raw scores".into()));
    }
    if item_degrees.len() != raw.n_items {
        return Err(Error::Parameter(format!(
            "{} item degrees for {} items",
            item_degrees.len(),
            raw.n_items
        )));
    }
    let mut rows = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        let mut out = Vec::with_capacity(row.len());
        for &(j, s) in row {
            let deg = item_degrees[j as usize];
            if deg == 0 {
                return Err(Error::Parameter(format!("scored item {j} has zero degree")));
            }
            let scaled = s / f64::from(deg).powf(lambda);
            if scaled >= SCORE_EPSILON {
                out.push((j, scaled));
            }
        }
        rows.push(out);
    }
    Ok(ScoreMatrix {
        n_items: raw.n_items,
        rows,
        kind: ScoreKind::Raw,
    })
}

/// Divides each row by its sum raised to `theta`; zero rows stay zero.
/// `theta = 1` gives unit row sums.
pub fn normalize_rows(raw: &ScoreMatrix, theta: f64) -> Result<ScoreMatrix> {
    check_unit_interval("theta", theta)?;
    if raw.kind != ScoreKind::Raw {
        return Err(Error::Parameter(
            "row normalization expects raw scores".into(),
        ));
    }
    let rows = raw
        .rows
        .iter()
        .map(|row| {
            let sum: f64 = row.iter().map(|&(_, s)| s).sum();
            if sum <= 0.0 {
                return Vec::new();
            }
            let divisor = if theta == 1.0 { sum } else { sum.powf(theta) };
            row.iter().map(|&(j, s)| (j, s / divisor)).collect()
        })
        .collect();
    Ok(ScoreMatrix {
        n_items: raw.n_items,
        rows,
        kind: ScoreKind::Normalized { theta },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_three() -> InteractionDataset {
        // u1-{v1,v2}, u2-{v2,v3}
        InteractionDataset::from_edges(2, 3, [(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn hand_diffusion() {
        let d = two_by_three();
        let f1 = p3_resources(&d, 0);
        assert_eq!(f1, vec![0.75, 1.0, 0.25]);
        assert_eq!(f1.iter().sum::<f64>(), 2.0);
        let s = p3_scores(&d);
        assert_eq!(s.row(0), &[(2, 0.25)]);
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn lone_interaction_scores_nothing() {
        let d = InteractionDataset::from_edges(1, 1, [(0, 0)]).unwrap();
        assert!(p3_scores(&d).row(0).is_empty());
    }

    #[test]
    fn cold_users_get_empty_rows() {
        let d = InteractionDataset::from_edges(3, 3, [(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap();
        let s = p3_scores(&d);
        assert!(s.row(2).is_empty());
        assert_eq!(p3_resources(&d, 2).iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn rp3_cases() {
        let d = two_by_three();
        let raw = p3_scores(&d);
        assert_eq!(rp3_rescale(&raw, d.item_degrees(), 0.0).unwrap(), raw);
        // v3 has unit degree
        let r = rp3_rescale(&raw, d.item_degrees(), 0.6).unwrap();
        assert_eq!(r.get(0, 2), 0.25);

        let single = ScoreMatrix::from_rows(1, vec![vec![(0, 0.8)]], ScoreKind::Raw).unwrap();
        let r = rp3_rescale(&single, &[4], 0.5).unwrap();
        assert_eq!(r.get(0, 0), 0.4);

        assert!(matches!(
            rp3_rescale(&raw, d.item_degrees(), 1.5),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            rp3_rescale(&raw, d.item_degrees(), -0.1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn normalize_cases() {
        let m = ScoreMatrix::from_rows(3, vec![vec![(2, 0.25)]], ScoreKind::Raw).unwrap();
        assert_eq!(normalize_rows(&m, 1.0).unwrap().row(0), &[(2, 1.0)]);

        let m = ScoreMatrix::from_rows(
            3,
            vec![
                vec![(0, 0.6), (1, 0.2), (2, 0.2)],
                vec![(0, 1.0), (1, 3.0)],
                vec![],
            ],
            ScoreKind::Raw,
        )
        .unwrap();
        let zero = normalize_rows(&m, 0.0).unwrap();
        assert_eq!(zero.rows(), m.rows());
        let half = normalize_rows(&m, 0.5).unwrap();
        assert_eq!(half.row(1), &[(0, 0.5), (1, 1.5)]);
        assert!(half.row(2).is_empty());
        assert!((half.row_sum(0) - 1.0).abs() < 1e-15);

        assert!(normalize_rows(&m, 2.0).is_err());
        assert!(normalize_rows(&half, 1.0).is_err());
    }

    #[test]
    fn score_cache_round_trip() {
        let d = InteractionDataset::from_edges(
            4,
            5,
            [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (3, 4), (3, 0)],
        )
        .unwrap();
        let s = p3_scores(&d);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"4 5\n"));
        let back = ScoreMatrix::read_from(&buf[..], ScoreKind::Raw).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn from_rows_rejects_bad_entries() {
        assert!(ScoreMatrix::from_rows(2, vec![vec![(2, 0.1)]], ScoreKind::Raw).is_err());
        assert!(ScoreMatrix::from_rows(2, vec![vec![(0, -0.1)]], ScoreKind::Raw).is_err());
        assert!(ScoreMatrix::from_rows(2, vec![vec![(0, f64::NAN)]], ScoreKind::Raw).is_err());
        assert!(ScoreMatrix::from_rows(2, vec![vec![(0, 0.1), (0, 0.2)]], ScoreKind::Raw).is_err());
    }
}
