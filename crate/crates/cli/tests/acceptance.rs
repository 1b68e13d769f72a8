//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any criterion fails.
//!
//! Criteria 7, 8 and 10 read MovieLens-100K from `FAIRMATCH_ML100K` or
//! `data/ml-100k/u.data` under the workspace root; `scripts/fetch_movielens.py`
//! downloads it.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fairmatch::experiment::{sweep_theta, Algorithm, Pipeline, RunParams, Strategy};
use fairmatch::flow::quantized_total;
use fairmatch::metrics::gini_complement;
use fairmatch::{
    build_matching_network, extract_recommendations, greedy_match, min_cost_max_flow,
    normalize_rows, stock_volumes, unconstrained_topl, DelimiterFormat, InteractionDataset,
    RecommendationMatrix, ScoreKind, ScoreMatrix, StockVector,
};
use fairmatch_testkit::{
    brute_force, mad_gini_complement, random_dataset, random_instance, Instance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn mcmf(inst: &Instance) -> (RecommendationMatrix, i64, usize) {
    let mut net = build_matching_network(&inst.normalized, &inst.dataset, inst.l, &inst.stocks)
        .expect("network builds");
    let sol = min_cost_max_flow(&mut net).expect("solver succeeds");
    let r = extract_recommendations(&net, &inst.dataset, &inst.normalized).expect("extraction");
    let score = 100 * sol.value - sol.cost;
    (r, score, sol.value as usize)
}

/// The 200 small instances shared by criteria 1 and 2.
fn small_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    (0..200)
        .map(|k| random_instance(&mut rng, 5, 6, 2, k % 4 == 0))
        .collect()
}

fn criterion_1(instances: &[Instance]) -> Outcome {
    let start = Instant::now();
    for (k, inst) in instances.iter().enumerate() {
        let (_, score, pairs) = mcmf(inst);
        let oracle = brute_force(inst);
        if (pairs, score) != (oracle.pairs, oracle.score) {
            return Err(format!(
                "instance {k}: solver ({pairs} pairs, {score}) vs enumeration ({}, {})",
                oracle.pairs, oracle.score
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!(
            "exact on all {} instances but took {secs:.1}s",
            instances.len()
        ));
    }
    Ok(format!("{} instances exact in {secs:.2}s", instances.len()))
}

/// u1 scores (A 0.6, B 0.5), u2 scores (A 0.55, B 0.05), l = 1, one unit of
/// stock each. Both users also interacted with a third item C.
fn hand_traced_instance() -> Instance {
    let dataset = InteractionDataset::from_edges(2, 3, [(0, 2), (1, 2)]).expect("valid edges");
    let rows = vec![vec![(0, 0.6), (1, 0.5)], vec![(0, 0.55), (1, 0.05)]];
    let normalized = ScoreMatrix::from_rows(3, rows.clone(), ScoreKind::Normalized { theta: 1.0 })
        .expect("valid rows");
    let raw = ScoreMatrix::from_rows(3, rows, ScoreKind::Raw).expect("valid rows");
    Instance {
        dataset,
        raw,
        normalized,
        l: 1,
        stocks: StockVector::from_volumes(vec![1, 1, 0], 2, 1),
    }
}

fn criterion_2(instances: &[Instance]) -> Outcome {
    let hand = hand_traced_instance();
    let g = greedy_match(&hand.normalized, &hand.dataset, 1, &hand.stocks).expect("greedy");
    let (_, flow_score, _) = mcmf(&hand);
    let greedy_score = quantized_total(&g, &hand.normalized);
    if (greedy_score, flow_score) != (65, 105) {
        return Err(format!(
            "hand instance: greedy {greedy_score}, flow {flow_score}; want 65 vs 105"
        ));
    }
    let mut strict = 0;
    for (k, inst) in instances.iter().enumerate() {
        let g =
            greedy_match(&inst.normalized, &inst.dataset, inst.l, &inst.stocks).expect("greedy");
        let greedy_score = quantized_total(&g, &inst.normalized);
        let (_, flow_score, _) = mcmf(inst);
        if greedy_score > flow_score {
            return Err(format!(
                "instance {k}: greedy {greedy_score} > flow {flow_score}"
            ));
        }
        if greedy_score < flow_score {
            strict += 1;
        }
    }
    if strict == 0 {
        return Err("greedy matched the flow optimum on every random instance".into());
    }
    Ok(format!(
        "hand case 65 < 105; greedy strictly below on {strict}/{} random instances",
        instances.len()
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for k in 0..1000 {
        let inst = random_instance(&mut rng, 8, 10, 3, k % 2 == 0);
        let theta = rng.gen_range(0.0..=1.0);
        let topl = unconstrained_topl(&inst.raw, &inst.dataset, inst.l).expect("top-l");
        let greedy_n = normalize_rows(&inst.raw, theta).expect("theta in range");
        let greedy = greedy_match(&greedy_n, &inst.dataset, inst.l, &inst.stocks).expect("greedy");
        let (flow, _, _) = mcmf(&inst);
        let checks = [
            ("regular", topl.check_feasible(&inst.dataset, None)),
            (
                "greedy",
                greedy.check_feasible(&inst.dataset, Some(&inst.stocks)),
            ),
            (
                "mcmf",
                flow.check_feasible(&inst.dataset, Some(&inst.stocks)),
            ),
        ];
        for (name, check) in checks {
            check.map_err(|e| format!("instance {k}, {name}: {e}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} matrices feasible"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..1000 {
        let n = rng.gen_range(1..=300);
        let m = rng.gen_range(1..=5000);
        let l = rng.gen_range(1..=50);
        let mut degrees: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=m as u32)).collect();
        if degrees.iter().all(|&d| d == 0) {
            degrees[0] = 1;
        }
        let q = stock_volumes(&degrees, m, l).map_err(|e| format!("vector {k}: {e}"))?;
        if q.total() < (m * l) as u64 {
            return Err(format!(
                "vector {k}: sum q = {} < m l = {}",
                q.total(),
                m * l
            ));
        }
    }
    Ok("1000 degree vectors, sum q >= m l".into())
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut users = 0;
    for size in [10, 50, 200, 500, 1000] {
        for _ in 0..3 {
            let m = rng.gen_range(size / 2..=size);
            let n = rng.gen_range(size / 2..=size);
            let density = rng.gen_range(0.005..0.05);
            let dataset = random_dataset(&mut rng, m, n, density);
            for u in 0..m {
                let deg = f64::from(dataset.user_degrees()[u]);
                if deg == 0.0 {
                    continue;
                }
                let mass: f64 = fairmatch::diffusion::p3_resources(&dataset, u).iter().sum();
                let rel = (mass - deg).abs() / deg;
                worst = worst.max(rel);
                users += 1;
                if rel > 1e-9 {
                    return Err(format!("{m}x{n} user {u}: mass {mass} vs degree {deg}"));
                }
            }
        }
    }
    Ok(format!("{users} users, worst relative error {worst:.1e}"))
}

fn criterion_6() -> Outcome {
    let hand: [(&[f64], f64); 3] = [
        (&[3.0, 3.0, 3.0, 3.0], 1.0),
        (&[0.0, 0.0, 0.0, 7.0], 0.0),
        (&[1.0, 1.0, 2.0], 0.75),
    ];
    for (counts, want) in hand {
        let got = gini_complement(counts).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("{counts:?}: {got} != {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = rng.gen_range(2..=200);
        let mut counts: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.gen_range(0..=50u32)))
            .collect();
        if counts.iter().all(|&c| c == 0.0) {
            counts[0] = 1.0;
        }
        let got = gini_complement(&counts).map_err(|e| e.to_string())?;
        let want = mad_gini_complement(&counts);
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-9 {
            return Err(format!("vector {k}: {got} vs {want}"));
        }
    }
    Ok(format!(
        "hand cases exact; 1000 vectors, worst difference {worst:.1e}"
    ))
}

fn corpus_path() -> PathBuf {
    std::env::var_os("FAIRMATCH_ML100K")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data")
        })
}

fn params(strategy: Strategy) -> RunParams {
    RunParams {
        algorithm: Algorithm::P3,
        strategy,
        theta: 1.0,
        lambda: 0.0,
        l: 20,
    }
}

struct CorpusRuns {
    regular: fairmatch::MetricsReport,
    greedy: fairmatch::MetricsReport,
    mcmf: fairmatch::MetricsReport,
    greedy_secs: f64,
    mcmf_secs: f64,
}

fn corpus_runs(pipeline: &Pipeline) -> Result<CorpusRuns, String> {
    let run = |s| {
        let start = Instant::now();
        pipeline
            .run(&params(s))
            .map(|o| (o.report, start.elapsed().as_secs_f64()))
            .map_err(|e| format!("{s} run failed: {e}"))
    };
    let (regular, _) = run(Strategy::Regular)?;
    let (greedy, greedy_secs) = run(Strategy::Greedy)?;
    let (mcmf, mcmf_secs) = run(Strategy::Mcmf)?;
    Ok(CorpusRuns {
        regular,
        greedy,
        mcmf,
        greedy_secs,
        mcmf_secs,
    })
}

fn criterion_7(runs: &CorpusRuns) -> Outcome {
    let base = runs.regular.exposure_fairness;
    let detail = format!(
        "fairness regular {:.4}, greedy {:.4} ({:.1}x, {:.1}s), mcmf {:.4} ({:.1}x, {:.1}s)",
        base,
        runs.greedy.exposure_fairness,
        runs.greedy.exposure_fairness / base,
        runs.greedy_secs,
        runs.mcmf.exposure_fairness,
        runs.mcmf.exposure_fairness / base,
        runs.mcmf_secs,
    );
    let ok = runs.greedy.exposure_fairness >= 3.0 * base
        && runs.mcmf.exposure_fairness >= 3.0 * base
        && runs.greedy_secs < 60.0
        && runs.mcmf_secs < 1800.0;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8(pipeline: &Pipeline, runs: &CorpusRuns) -> Outcome {
    let flow_ok = runs.mcmf.precision >= runs.regular.precision;
    let sweep = sweep_theta(pipeline, &params(Strategy::Greedy), 0.0, 1.0, 0.1)
        .map_err(|e| format!("theta sweep failed: {e}"))?;
    let best = &sweep.rows[sweep.best_precision];
    let at_one = sweep.rows.last().expect("grid ends at 1");
    let best_theta = best.theta.unwrap_or_default();
    let sweep_ok = best_theta > 0.0 && best.precision >= at_one.precision;
    let detail = format!(
        "precision mcmf {:.4} vs regular {:.4} [{}]; sweep max {:.4} at theta {best_theta} vs {:.4} at 1 [{}]",
        runs.mcmf.precision,
        runs.regular.precision,
        if flow_ok { "ok" } else { "fails" },
        best.precision,
        at_one.precision,
        if sweep_ok { "ok" } else { "fails" },
    );
    if flow_ok && sweep_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..100 {
        let mut inst = random_instance(&mut rng, 6, 8, 3, false);
        let (m, n, l) = (inst.dataset.n_users(), inst.dataset.n_items(), inst.l);
        inst.stocks = StockVector::slack(n, m, l);
        let topl = unconstrained_topl(&inst.raw, &inst.dataset, l).expect("top-l");
        let theta = rng.gen_range(0.0..=1.0);
        let scores = normalize_rows(&inst.raw, theta).expect("theta in range");
        let greedy = greedy_match(&scores, &inst.dataset, l, &inst.stocks).expect("greedy");
        if greedy != topl {
            return Err(format!(
                "instance {k}: greedy at theta {theta} differs from top-l"
            ));
        }
        let (_, flow_score, _) = mcmf(&inst);
        let want = quantized_total(&topl, &inst.normalized);
        if flow_score != want {
            return Err(format!(
                "instance {k}: flow objective {flow_score} vs top-l {want}"
            ));
        }
    }
    Ok("100 instances: greedy == top-l, flow objective == top-l objective".into())
}

fn criterion_10(corpus: &std::path::Path) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for round in 0..2 {
        let mut files = Vec::new();
        for strategy in ["regular", "greedy", "mcmf"] {
            let report = dir.path().join(format!("{round}-{strategy}.csv"));
            let lists = dir.path().join(format!("{round}-{strategy}.txt"));
            let status = Command::new(env!("CARGO_BIN_EXE_fairmatch"))
                .arg("run")
                .arg("--dataset")
                .arg(corpus)
                .args(["--strategy", strategy, "--l", "20"])
                .arg("--report")
                .arg(&report)
                .arg("--recommendations")
                .arg(&lists)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{strategy} run exited with {status}"));
            }
            files.push(std::fs::read(&report).map_err(|e| e.to_string())?);
            files.push(std::fs::read(&lists).map_err(|e| e.to_string())?);
        }
        outputs.push(files);
    }
    if outputs[0] != outputs[1] {
        return Err("outputs differ between runs".into());
    }
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    Ok(format!("3 strategies x 2 runs, {bytes} bytes identical"))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let instances = small_instances();
    results.push((1, criterion_1(&instances)));
    results.push((2, criterion_2(&instances)));
    results.push((3, criterion_3()));
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));

    let corpus = corpus_path();
    match Pipeline::load(&corpus, DelimiterFormat::Tab, 3, 0.8) {
        Ok(pipeline) => match corpus_runs(&pipeline) {
            Ok(runs) => {
                results.push((7, criterion_7(&runs)));
                results.push((8, criterion_8(&pipeline, &runs)));
            }
            Err(e) => {
                results.push((7, Err(e.clone())));
                results.push((8, Err(e)));
            }
        },
        Err(e) => {
            let msg = format!(
                "cannot load {} ({e}); run scripts/fetch_movielens.py or set FAIRMATCH_ML100K",
                corpus.display()
            );
            results.push((7, Err(msg.clone())));
            results.push((8, Err(msg)));
        }
    }
    results.push((9, criterion_9()));
    results.push((10, criterion_10(&corpus)));

    let mut failed = 0;
    for (k, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {k:>2}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k:>2}: FAIL  {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
