//! End-to-end experiment pipeline: load, split, score, match, evaluate.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::constraints::{stock_volumes, StockVector};
use crate::data::{parse_ratings, DelimiterFormat, IdMap, InteractionDataset, SplitDataset};
use crate::diffusion::{normalize_rows, p3_scores, rp3_rescale, ScoreMatrix};
use crate::error::{Error, Result};
use crate::flow::{
    build_matching_network, extract_recommendations, min_cost_max_flow, FlowNetwork,
};
use crate::format::significant;
use crate::matching::{greedy_match, unconstrained_topl, RecommendationMatrix};
use crate::metrics::{
    aggregate_diversity, exposure_fairness, precision, score_gini, MetricsReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    P3,
    Rp3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Unconstrained top-l.
    Regular,
    Greedy,
    Mcmf,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::P3 => "p3",
            Algorithm::Rp3 => "rp3",
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Regular => "regular",
            Strategy::Greedy => "greedy",
            Strategy::Mcmf => "mcmf",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p3" => Ok(Algorithm::P3),
            "rp3" => Ok(Algorithm::Rp3),
            _ => Err(Error::Parameter(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Strategy::Regular),
            "greedy" => Ok(Strategy::Greedy),
            "mcmf" => Ok(Strategy::Mcmf),
            _ => Err(Error::Parameter(format!("unknown strategy {s:?}"))),
        }
    }
}

/// One scorer x strategy combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    /// Normalization exponent of the greedy strategy.
    pub theta: f64,
    /// RP3 popularity exponent.
    pub lambda: f64,
    pub l: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            algorithm: Algorithm::P3,
            strategy: Strategy::Regular,
            theta: 1.0,
            lambda: 0.0,
            l: 20,
        }
    }
}

impl RunParams {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Parameter("list length must be at least 1".into()));
        }
        for (name, v) in [("theta", self.theta), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Everything a single `run` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: std::path::PathBuf,
    pub format: DelimiterFormat,
    pub threshold: u8,
    pub ratio: f64,
    pub params: RunParams,
    /// Reserved; every stage is deterministic.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<std::path::PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            format: DelimiterFormat::Tab,
            threshold: 3,
            ratio: 0.8,
            params: RunParams::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Parameter(format!(
                "split ratio {} outside (0, 1)",
                self.ratio
            )));
        }
        if !(1..=5).contains(&self.threshold) {
            return Err(Error::Parameter(format!(
                "threshold {} outside 1..=5",
                self.threshold
            )));
        }
        self.params.validate()
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub recommendations: RecommendationMatrix,
    pub stocks: Option<StockVector>,
}

/// A prepared train/probe split with its P3 scores computed on first use.
#[derive(Debug)]
pub struct Pipeline {
    name: String,
    split: SplitDataset,
    p3: OnceLock<ScoreMatrix>,
}

impl Pipeline {
    pub fn new(name: impl Into<String>, split: SplitDataset) -> Self {
        Pipeline {
            name: name.into(),
            split,
            p3: OnceLock::new(),
        }
    }

    /// Reads a rating log and prepares the filtered temporal split.
    pub fn load(path: &Path, format: DelimiterFormat, threshold: u8, ratio: f64) -> Result<Self> {
        let file = File::open(path)?;
        let events = parse_ratings(BufReader::new(file), format)?;
        let split = SplitDataset::prepare(&events, threshold, ratio)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Pipeline::new(name, split))
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Self::load(
            &config.dataset,
            config.format,
            config.threshold,
            config.ratio,
        )
    }

    /// Writes the split under `dir`: `train.adj` and `probe.adj` adjacency
    /// caches, `users.txt` / `items.txt` id lists and `name.txt`.
    pub fn write_cache(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        self.split.train.write_adjacency(create("train.adj")?)?;
        self.split.probe.write_adjacency(create("probe.adj")?)?;
        for (file, ids) in [
            ("users.txt", self.split.train.users()),
            ("items.txt", self.split.train.items()),
        ] {
            let mut out = create(file)?;
            for id in ids.iter() {
                writeln!(out, "{id}")?;
            }
            out.flush()?;
        }
        std::fs::write(dir.join("name.txt"), format!("{}\n", self.name))?;
        Ok(())
    }

    /// Reads a split written by [`write_cache`](Self::write_cache).
    pub fn read_cache(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<BufReader<File>> {
            Ok(BufReader::new(File::open(dir.join(name))?))
        };
        let ids = |name: &str| -> Result<Arc<IdMap>> {
            let mut list = Vec::new();
            for line in open(name)?.lines() {
                list.push(line?);
            }
            Ok(Arc::new(IdMap::from_ids(list)?))
        };
        let (users, items) = (ids("users.txt")?, ids("items.txt")?);
        let train =
            InteractionDataset::read_adjacency(open("train.adj")?, users.clone(), items.clone())?;
        let probe = InteractionDataset::read_adjacency(open("probe.adj")?, users, items)?;
        let name = std::fs::read_to_string(dir.join("name.txt"))?
            .trim()
            .to_owned();
        Ok(Pipeline::new(name, SplitDataset { train, probe }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> &SplitDataset {
        &self.split
    }

    pub fn p3(&self) -> &ScoreMatrix {
        self.p3.get_or_init(|| p3_scores(&self.split.train))
    }

    /// Raw scores of `algorithm`.
    pub fn raw_scores(&self, algorithm: Algorithm, lambda: f64) -> Result<ScoreMatrix> {
        match algorithm {
            Algorithm::P3 => Ok(self.p3().clone()),
            Algorithm::Rp3 => rp3_rescale(self.p3(), self.split.train.item_degrees(), lambda),
        }
    }

    /// Stock volumes over the users that can receive recommendations, i.e.
    /// those with training interactions.
    pub fn stocks(&self, l: usize) -> Result<StockVector> {
        let train = &self.split.train;
        stock_volumes(train.item_degrees(), train.active_users(), l)
    }

    /// The matching network an MCMF run would solve.
    pub fn network(&self, params: &RunParams) -> Result<FlowNetwork> {
        params.validate()?;
        let raw = self.raw_scores(params.algorithm, params.lambda)?;
        let normalized = normalize_rows(&raw, 1.0)?;
        let stocks = self.stocks(params.l)?;
        build_matching_network(&normalized, &self.split.train, params.l, &stocks)
    }

    pub fn run(&self, params: &RunParams) -> Result<RunOutcome> {
        params.validate()?;
        let train = &self.split.train;
        let raw = self.raw_scores(params.algorithm, params.lambda)?;
        let (recommendations, stocks) = match params.strategy {
            Strategy::Regular => (unconstrained_topl(&raw, train, params.l)?, None),
            Strategy::Greedy => {
                let stocks = self.stocks(params.l)?;
                let normalized = normalize_rows(&raw, params.theta)?;
                (
                    greedy_match(&normalized, train, params.l, &stocks)?,
                    Some(stocks),
                )
            }
            Strategy::Mcmf => {
                let stocks = self.stocks(params.l)?;
                let normalized = normalize_rows(&raw, 1.0)?;
                let mut net = build_matching_network(&normalized, train, params.l, &stocks)?;
                min_cost_max_flow(&mut net)?;
                (
                    extract_recommendations(&net, train, &normalized)?,
                    Some(stocks),
                )
            }
        };
        let report = MetricsReport {
            dataset: self.name.clone(),
            algorithm: params.algorithm.to_string(),
            strategy: params.strategy.to_string(),
            theta: (params.strategy == Strategy::Greedy).then_some(params.theta),
            lambda: (params.algorithm == Algorithm::Rp3).then_some(params.lambda),
            l: params.l,
            precision: precision(&recommendations, &self.split.probe, params.l)?,
            aggregate_diversity: aggregate_diversity(&recommendations, train.n_items()),
            exposure_fairness: exposure_fairness(&recommendations)?,
            score_gini: score_gini(&recommendations, &raw)?,
            underfill_count: recommendations.underfilled_users(),
        };
        Ok(RunOutcome {
            report,
            recommendations,
            stocks,
        })
    }
}

/// Inclusive grid `from, from + step, ...` up to `to`.
pub fn parameter_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(0.0 <= from && from <= to && to <= 1.0) {
        return Err(Error::Parameter(format!(
            "grid [{from}, {to}] not inside [0, 1]"
        )));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Parameter(format!(
            "grid step {step} must be positive"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            // snap to 12 decimals so 0.1 * 3 prints as 0.3
            let v = from + k as f64 * step;
            ((v * 1e12).round() / 1e12).min(to)
        })
        .collect())
}

/// Rows of a parameter sweep, in grid order.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<MetricsReport>,
    /// Index of the row with the highest precision (first on ties).
    pub best_precision: usize,
}

fn sweep(pipeline: &Pipeline, grid: Vec<RunParams>) -> Result<SweepReport> {
    // score the base matrix once before fanning out
    pipeline.p3();
    let rows = grid
        .par_iter()
        .map(|p| pipeline.run(p).map(|o| o.report))
        .collect::<Result<Vec<_>>>()?;
    let best_precision = rows.iter().enumerate().fold(0, |best, (k, r)| {
        if r.precision > rows[best].precision {
            k
        } else {
            best
        }
    });
    Ok(SweepReport {
        rows,
        best_precision,
    })
}

/// Greedy runs over an inclusive theta grid.
pub fn sweep_theta(
    pipeline: &Pipeline,
    base: &RunParams,
    from: f64,
    to: f64,
    step: f64,
) -> Result<SweepReport> {
    let grid = parameter_grid(from, to, step)?
        .into_iter()
        .map(|theta| RunParams {
            strategy: Strategy::Greedy,
            theta,
            ..*base
        })
        .collect();
    sweep(pipeline, grid)
}

/// RP3 runs over an inclusive lambda grid, keeping the base strategy.
pub fn sweep_lambda(
    pipeline: &Pipeline,
    base: &RunParams,
    from: f64,
    to: f64,
    step: f64,
) -> Result<SweepReport> {
    let grid = parameter_grid(from, to, step)?
        .into_iter()
        .map(|lambda| RunParams {
            algorithm: Algorithm::Rp3,
            lambda,
            ..*base
        })
        .collect();
    sweep(pipeline, grid)
}

pub const CSV_HEADER: &str = "dataset,algo,strategy,theta,lambda,l,precision,aggregate_diversity,exposure_fairness,score_gini,underfill_count";

fn opt(v: Option<f64>) -> String {
    v.map(|x| significant(x, 6)).unwrap_or_default()
}

pub fn csv_row(r: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.dataset,
        r.algorithm,
        r.strategy,
        opt(r.theta),
        opt(r.lambda),
        r.l,
        significant(r.precision, 6),
        significant(r.aggregate_diversity, 6),
        significant(r.exposure_fairness, 6),
        significant(r.score_gini, 6),
        r.underfill_count
    )
}

/// Header plus one line per report.
pub fn write_csv<W: Write>(mut out: W, rows: &[MetricsReport]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}
