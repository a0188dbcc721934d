//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{build, evaluate_mode, random_graph, rng, Trained};
use rand::Rng;
use shapekg::datamodel::EntityKind;
use shapekg::embed::{grad_check, loss, GcnConfig, PairSample};
use shapekg::evalmetrics::{evaluate, pr_curve, RankedQuery};
use shapekg::linalg::{sq_dist, Matrix};
use shapekg::simsearch::{sim_entity, sim_parts, sim_words, ChannelWeights};
use shapekg::synthgen::{generate, SynthConfig};
use shapekg::vocab::kmeans_fit;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut resampled = 0;
    let mut r = rng(101);
    for g in 0..10 {
        let n = r.gen_range(6..=20);
        let graph = random_graph(n, 0.3, 4, &mut r);
        for dims in [vec![4, 3], vec![4, 6, 3]] {
            let mut seed = g as u64 * 100;
            let check = loop {
                let config = GcnConfig {
                    layer_dims: dims.clone(),
                    neg_ratio: 2,
                    seed,
                    ..GcnConfig::with_input_dim(4)
                };
                let c = grad_check(&graph, &config, 1e-5).unwrap();
                if c.min_abs_preactivation.is_none_or(|m| m >= 1e-3) {
                    break c;
                }
                resampled += 1;
                seed += 1;
            };
            worst = worst.max(check.max_rel_error);
            runs += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && t < Duration::from_secs(10),
        format!("max relative error {worst:.2e} over {runs} checks ({resampled} kink resamples), {t:.1?}"),
    )
}

fn loss_soundness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut min_loss = f64::INFINITY;
    for _ in 0..200 {
        let n = r.gen_range(2..10);
        let scale = 10f64.powi(r.gen_range(-2..4));
        let y = Matrix::from_vec(n, 3, (0..n * 3).map(|_| r.gen_range(-scale..scale)).collect());
        let samples: Vec<PairSample> = (0..n)
            .map(|i| PairSample {
                anchor: i,
                positives: vec![(i + 1) % n],
                negatives: if n > 2 { vec![(i + 2) % n] } else { vec![] },
            })
            .collect();
        min_loss = min_loss.min(loss(&y, &samples));
    }
    let big = Matrix::from_rows(&[[100.0], [100.0], [-100.0]]);
    let extreme = [
        PairSample { anchor: 0, positives: vec![1], negatives: vec![2] },
        PairSample { anchor: 0, positives: vec![2], negatives: vec![1] },
    ];
    let finite = loss(&big, &extreme).is_finite();

    let t = build(&SynthConfig::default(), true, |c| {
        c.learning_rate = 1e-3;
        c.epochs = 300;
    });
    let l = &t.table.losses;
    let steady = l.windows(2).filter(|w| w[1] <= w[0]).count() as f64 / (l.len() - 1) as f64;
    let ratio = t.table.final_loss / l[0];
    let elapsed = start.elapsed();
    outcome(
        min_loss >= 0.0 && finite && steady >= 0.9 && ratio < 0.5 && elapsed < Duration::from_secs(60),
        format!(
            "min loss {min_loss:.3e}, finite at |dot| = 1e4: {finite}, non-increasing {:.1}% of epochs, final/initial {ratio:.3}, {elapsed:.1?}",
            steady * 100.0
        ),
    )
}

fn injection_max(w: &[Vec<f64>]) -> f64 {
    fn go(w: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(w[row][c] + go(w, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let (m, n) = (w.len(), w[0].len());
    if m <= n {
        go(w, 0, &mut vec![false; n]) / m as f64
    } else {
        let t: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| w[r][c]).collect()).collect();
        go(&t, 0, &mut vec![false; m]) / n as f64
    }
}

fn matching_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(303);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (m, n) = (r.gen_range(1..=7), r.gen_range(1..=7));
        let mut draw = |k: usize| -> Vec<Vec<f64>> { (0..k).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect() };
        let (q, c) = (draw(m), draw(n));
        let w: Vec<Vec<f64>> = q.iter().map(|a| c.iter().map(|b| sim_entity(a, b).unwrap()).collect()).collect();
        worst = worst.max((sim_parts(&q, &c).unwrap() - injection_max(&w)).abs());
    }
    let t = start.elapsed();
    outcome(worst <= 1e-12 && t < Duration::from_secs(10), format!("max deviation {worst:.1e} over 200 instances, {t:.1?}"))
}

fn word_score() -> Outcome {
    let mut worst = 0.0f64;
    for c in 1..=100usize {
        let q: Vec<usize> = (0..c).chain([1000]).collect();
        let m: Vec<usize> = (0..c).chain([2000, 2001]).collect();
        worst = worst.max((sim_words(&q, &m) - c as f64 / (c as f64 + 1.0)).abs());
    }
    let zero = sim_words(&[1, 2], &[3, 4]);
    outcome(worst <= 1e-12 && zero == 0.0, format!("max deviation {worst:.1e} for c in 1..=100, c = 0 gives {zero}"))
}

fn normalized_adjacency() -> Outcome {
    let mut r = rng(505);
    let mut symmetric = true;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(2..40);
        let p = r.gen_range(0.05..0.6);
        let g = random_graph(n, p, 1, &mut r);
        let s = g.norm_adj();
        for i in 0..n {
            for (j, v) in s.row(i) {
                symmetric &= s.get(j, i) == v;
            }
        }
        let root: Vec<f64> = (0..n).map(|i| (g.degree(i) as f64).sqrt()).collect();
        let out = s.mul_vec(&root);
        for (a, b) in out.iter().zip(&root) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        symmetric && worst <= 1e-9,
        format!("exactly symmetric: {symmetric}, max |S sqrt(d) - sqrt(d)| = {worst:.1e} over 50 graphs"),
    )
}

fn kmeans() -> Outcome {
    let mut r = rng(606);
    let mut monotone = true;
    for _ in 0..20 {
        let n = r.gen_range(30..200);
        let dim = r.gen_range(2..8);
        let k = r.gen_range(2..10);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.gen_range(-5.0..5.0)).collect()).collect();
        let v = kmeans_fit(&pts, k, r.gen(), 100, 1e-9).unwrap();
        monotone &= v.history.windows(2).all(|h| h[1] <= h[0] * (1.0 + 1e-12));
    }
    let world = generate(&SynthConfig::default()).unwrap();
    let parts: Vec<&[f64]> = world.corpus.of_kind(EntityKind::Part).map(|e| e.descriptor.values()).collect();
    let v = kmeans_fit(&parts, 30, 1, 100, 1e-6).unwrap();
    let worst = world
        .prototypes
        .iter()
        .map(|p| v.centroids.iter().map(|c| sq_dist(c, p).sqrt()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    outcome(
        monotone && worst < 0.5,
        format!("inertia monotone on 20 datasets: {monotone}, worst prototype recovery distance {worst:.3}"),
    )
}

fn shape_retrieval(default: &Trained) -> Outcome {
    let start = Instant::now();
    let report = evaluate_mode(default, "shape", &ChannelWeights::default());
    let clean_cfg = SynthConfig {
        noise_sigma: 0.0,
        words_per_class: 3,
        class_word_overlap: 0,
        ..SynthConfig::default()
    };
    let clean = build(&clean_cfg, true, |_| {});
    let clean_report = evaluate_mode(&clean, "shape", &ChannelWeights::default());
    let t = start.elapsed();
    outcome(
        report.nn >= 0.9 && report.map >= 0.8 && clean_report.nn == 1.0 && t < Duration::from_secs(300),
        format!(
            "NN {:.3}, mAP {:.3} over {} queries; noise-free disjoint world NN {:.3}; {t:.1?}",
            report.nn,
            report.map,
            report.queries.len(),
            clean_report.nn
        ),
    )
}

fn image_retrieval(default: &Trained) -> Outcome {
    let sup = evaluate_mode(default, "image", &ChannelWeights::default());
    let unsup_model = build(&SynthConfig::default(), false, |_| {});
    let unsup = evaluate_mode(&unsup_model, "image", &ChannelWeights::default());
    let drop = (sup.nn - unsup.nn) / sup.nn;
    outcome(
        sup.queries.len() == 50 && sup.nn >= 0.8 && drop <= 0.15,
        format!(
            "{} image queries: supervised NN {:.3}, unsupervised NN {:.3}, relative drop {drop:.3}",
            sup.queries.len(),
            sup.nn,
            unsup.nn
        ),
    )
}

fn ranked(rel: &[u8], total: usize) -> RankedQuery {
    RankedQuery {
        query: "q".into(),
        relevance: rel.iter().map(|&v| v == 1).collect(),
        relevant_total: total,
    }
}

fn metric_suite() -> Outcome {
    let ap = evaluate(&[ranked(&[1, 0, 1, 0], 2)], 20).unwrap().map;
    let ap_ok = (ap - (1.0 + 2.0 / 3.0) / 2.0).abs() <= 1e-6;
    let curve = pr_curve(&ranked(&[1, 0, 1, 0], 2)).unwrap();
    let has = |r: f64, p: f64| curve.points.iter().any(|pt| (pt.recall - r).abs() < 1e-12 && (pt.precision - p).abs() < 1e-12);
    let pr_ok = has(0.5, 1.0) && has(1.0, 2.0 / 3.0);
    // NG = 2, K = 4, both hits beyond K at 1.25K = 5: (5 - 0.5 - 1) / (5 - 0.5 - 1)
    let inv = evaluate(&[ranked(&[0, 0, 0, 0, 0, 0, 0, 0, 1, 1], 2)], 20).unwrap();
    let inv_ok = inv.nn == 0.0 && (inv.anmrr - 1.0).abs() <= 1e-6;
    let perfect = evaluate(&[ranked(&[1, 1, 1, 0, 0], 3)], 20).unwrap();
    let perfect_ok = [perfect.nn, perfect.ft, perfect.st, perfect.dcg, perfect.map].iter().all(|v| (v - 1.0).abs() <= 1e-12)
        && perfect.anmrr == 0.0;
    outcome(
        ap_ok && pr_ok && inv_ok && perfect_ok,
        format!("AP {ap:.6}, PR points ok: {pr_ok}, inverted ANMRR {:.6}, perfect ranking ok: {perfect_ok}", inv.anmrr),
    )
}

const BIN: &str = env!("CARGO_BIN_EXE_shapekg");

fn cli_pipeline(dir: &Path) -> Result<(), String> {
    let steps: [&[&str]; 7] = [
        &["synth", "--out", "world", "--seed", "7"],
        &["vocab", "--manifest", "world/manifest.jsonl", "--sidecar", "world/descriptors.gwkg", "--out", "vocab.json", "--k", "30", "--seed", "7"],
        &["graph", "--manifest", "world/manifest.jsonl", "--sidecar", "world/descriptors.gwkg", "--vocab", "vocab.json", "--out", "graph.json", "--seed", "7"],
        &["train", "--graph", "graph.json", "--out", "emb.json", "--seed", "7"],
        &["retrieve", "--graph", "graph.json", "--emb", "emb.json", "--truth", "world/truth.json", "--out", "shape.json"],
        &["retrieve", "--graph", "graph.json", "--emb", "emb.json", "--truth", "world/truth.json", "--mode", "image", "--out", "image.json"],
        &["eval", "--results", "shape.json", "--truth", "world/truth.json", "--graph", "graph.json", "--out", "eval.json"],
    ];
    for args in steps {
        let out = Command::new(BIN).args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    const ARTIFACTS: [&str; 12] = [
        "world/manifest.jsonl",
        "world/descriptors.gwkg",
        "vocab.json",
        "graph.json",
        "graph.features.gwkg",
        "emb.json",
        "emb.embeddings.gwkg",
        "emb.log.csv",
        "shape.json",
        "image.json",
        "eval.json",
        "eval.pr.csv",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if let Err(e) = cli_pipeline(a.path()).and_then(|_| cli_pipeline(b.path())) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let differing: Vec<&str> = ARTIFACTS
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", ARTIFACTS.len()),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n:>2} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    };
    report(1, "gradient correctness", gradient_check());
    report(2, "loss soundness", loss_soundness());
    report(3, "matching oracle", matching_oracle());
    report(4, "word-score closed form", word_score());
    report(5, "normalized adjacency", normalized_adjacency());
    report(6, "k-means", kmeans());
    let default = build(&SynthConfig::default(), true, |_| {});
    report(7, "end-to-end shape retrieval", shape_retrieval(&default));
    report(8, "cross-modal retrieval", image_retrieval(&default));
    report(9, "metric suite", metric_suite());
    report(10, "determinism", determinism());
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
