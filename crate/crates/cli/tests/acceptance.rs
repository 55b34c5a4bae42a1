//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use narrel_core::decode::{brute_force_oracle, decode, DecodeConfig};
use narrel_core::graph::{enumerate_triangles, triad_census, Assignment, Document, Edge, Label};
use narrel_core::logistic::{train_lr_corpus, LrConfig};
use narrel_core::metrics::evaluate;
use narrel_core::mixture::{train_mixture_with_log, MixtureTrainConfig};
use narrel_core::model::{FlatModel, Standardization};
use narrel_core::perceptron::{train_spr, train_spr_with_report, Example, TrainConfig};
use narrel_core::persist::Model;
use narrel_core::synth::{generate_corpus, ClusterProfile, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const BIN: &str = env!("CARGO_BIN_EXE_narrel");
const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_doc(rng: &mut ChaCha8Rng, max_chars: usize, max_edges: usize, d: usize) -> Document {
    let n = rng.random_range(2..=max_chars);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.random_range(0..=i));
    }
    let keep = rng.random_range(1..=pairs.len().min(max_edges));
    let edges = pairs[..keep]
        .iter()
        .map(|&(a, b)| Edge::new(names[a].clone(), names[b].clone(), (0..d).map(|_| normal(rng)).collect()))
        .collect();
    Document::new("random", names, edges, Vec::new()).unwrap().with_feature_dim(d).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Assignment {
    Assignment::new((0..n).map(|_| if rng.random::<bool>() { Label::Pos } else { Label::Neg }).collect())
}

fn decoder_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 3;
    let mut mismatches = 0;
    for _ in 0..200 {
        let doc = random_doc(&mut rng, 6, 12, d);
        let w: Vec<f64> = (0..d + 4).map(|_| normal(&mut rng)).collect();
        let names = (0..d).map(|j| format!("x{j}")).collect();
        let model = FlatModel::from_weights(&w, names, Standardization::identity(d)).unwrap();
        let got = decode(&model, &doc, &DecodeConfig::default()).unwrap().score;
        let (_, best) = brute_force_oracle(&model, &doc).unwrap();
        if got != best {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("200 instances, {mismatches} score mismatches, {:.2}s (limit 10s)", elapsed.as_secs_f64()),
    )
}

fn census_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..100 {
        let doc = random_doc(&mut rng, 8, 28, 1);
        let y = random_labels(&mut rng, doc.num_edges());
        let sign: HashMap<(&str, &str), Label> = doc
            .edges()
            .iter()
            .zip(y.labels())
            .map(|(e, l)| ((e.a.as_str(), e.b.as_str()), *l))
            .collect();
        let chars = doc.characters();
        let get = |i: usize, j: usize| sign.get(&(chars[i].as_str(), chars[j].as_str())).copied();
        let mut expect = [0usize; 4];
        for i in 0..chars.len() {
            for j in i + 1..chars.len() {
                for k in j + 1..chars.len() {
                    if let (Some(a), Some(b), Some(c)) = (get(i, j), get(j, k), get(i, k)) {
                        expect[3 - [a, b, c].iter().filter(|l| l.is_pos()).count()] += 1;
                    }
                }
            }
        }
        let census = triad_census(&doc, &y).unwrap();
        let triangles = enumerate_triangles(&doc).len();
        if census.counts() != expect || census.total() != triangles {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("100 graphs, {bad} disagreements with all-triples enumeration"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let out = Command::new(BIN).args(["gradcheck", "--instances", "20"]).output().unwrap();
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let err: Option<f64> = stdout
        .split_whitespace()
        .skip_while(|w| *w != "error")
        .nth(1)
        .and_then(|v| v.parse().ok());
    match err {
        Some(e) => outcome(
            out.status.success() && e <= 1e-5 && elapsed < Duration::from_secs(5),
            format!("max relative error {e:.3e} (limit 1e-5), {:.2}s (limit 5s)", elapsed.as_secs_f64()),
        ),
        None => outcome(false, format!("could not read gradcheck output: {stdout}")),
    }
}

fn accuracy(model: &Model, test: &[Example]) -> f64 {
    let cfg = DecodeConfig::default();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for ex in test {
        pred.extend_from_slice(model.predict(&ex.doc, &cfg).unwrap().assignment.labels());
        gold.extend_from_slice(ex.gold.labels());
    }
    evaluate(&pred, &gold).unwrap().accuracy
}

fn structure_helps() -> Outcome {
    let start = Instant::now();
    let (mut lr, mut spr) = (0.0, 0.0);
    for seed in 0..SEEDS {
        let spec = SynthSpec {
            num_docs: 150,
            min_chars: 4,
            max_chars: 6,
            edge_density: 1.0,
            planted_struct_weights: [0.0, 0.0, 8.0, -4.0],
            text_dim: 5,
            text_signal: 1.0,
            text_noise: 1.5,
            seed,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).unwrap().examples;
        let (train, test) = corpus.split_at(120);
        let lr_model = Model::Lr(train_lr_corpus(train, &LrConfig::default()).unwrap().0);
        let spr_model = Model::Spr(train_spr(train, &TrainConfig { seed, ..Default::default() }).unwrap());
        lr += accuracy(&lr_model, test);
        spr += accuracy(&spr_model, test);
    }
    let (lr, spr) = (lr / SEEDS as f64, spr / SEEDS as f64);
    let elapsed = start.elapsed();
    let reduction = ((1.0 - lr) - (1.0 - spr)) / (1.0 - lr);
    let pass = (0.70..=0.80).contains(&lr) && spr - lr >= 0.05 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "LR {lr:.4} (band 0.70-0.80), SPR {spr:.4}, gain {:.1} points (min 5), {:.1}s (limit 120s); \
             error reduction {:.1}% (soft target 30%: {})",
            100.0 * (spr - lr),
            elapsed.as_secs_f64(),
            100.0 * reduction,
            if reduction >= 0.30 { "met" } else { "not met" }
        ),
    )
}

struct MixtureRun {
    k1: f64,
    k2: f64,
    alpha0: f64,
    max_increase: f64,
    lambda_steps: usize,
}

fn mixture_experiment() -> MixtureRun {
    let mut run = MixtureRun {
        k1: 0.0,
        k2: 0.0,
        alpha0: 0.0,
        max_increase: f64::NEG_INFINITY,
        lambda_steps: 0,
    };
    for seed in 0..SEEDS {
        let spec = SynthSpec {
            num_docs: 150,
            min_chars: 4,
            max_chars: 6,
            edge_density: 0.8,
            text_dim: 5,
            text_signal: 1.0,
            text_noise: 2.5,
            cluster_profiles: vec![
                ClusterProfile { struct_weights: [0.0, 0.0, 8.0, -4.0], descriptor_mean: vec![1.0] },
                ClusterProfile { struct_weights: [8.0, -4.0, 0.0, 0.0], descriptor_mean: vec![-1.0] },
            ],
            seed,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).unwrap().examples;
        let (train, test) = corpus.split_at(120);
        let inner = TrainConfig { seed, ..Default::default() };
        run.k1 += accuracy(&Model::Spr(train_spr(train, &inner).unwrap()), test);
        for alpha in [0.8, 0.0] {
            let cfg = MixtureTrainConfig { k: 2, alpha, seed, inner: inner.clone(), ..Default::default() };
            let (model, log) = train_mixture_with_log(train, &cfg).unwrap();
            run.max_increase = run.max_increase.max(log.max_lambda_increase());
            run.lambda_steps += log.lambda_steps.len();
            let acc = accuracy(&Model::Mixture(model), test);
            if alpha > 0.0 {
                run.k2 += acc;
            } else {
                run.alpha0 += acc;
            }
        }
    }
    let n = SEEDS as f64;
    run.k1 /= n;
    run.k2 /= n;
    run.alpha0 /= n;
    run
}

fn lambda_monotonicity(run: &MixtureRun) -> Outcome {
    outcome(
        run.max_increase <= 1e-9,
        format!(
            "{} gating steps over 20 training runs, largest J increase {:.3e} (limit 1e-9)",
            run.lambda_steps, run.max_increase
        ),
    )
}

fn mixture_helps(run: &MixtureRun) -> Outcome {
    let gain = run.k2 - run.k1;
    let gap = (run.alpha0 - run.k1).abs();
    outcome(
        gain >= 0.03 && gap <= 0.01,
        format!(
            "K=1 {:.4}, K=2 {:.4} (gain {:.1} points, min 3), alpha=0 {:.4} (gap {:.2} points, max 1)",
            run.k1,
            run.k2,
            100.0 * gain,
            run.alpha0,
            100.0 * gap
        ),
    )
}

fn perceptron_convergence() -> Outcome {
    let spec = SynthSpec {
        num_docs: 120,
        text_signal: 1.0,
        text_noise: 0.0,
        seed: 7,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap().examples;
    let (_, report) = train_spr_with_report(&corpus, &TrainConfig { num_epochs: 50, ..Default::default() }).unwrap();
    let last = *report.mistakes_per_epoch.last().unwrap();
    let first_clean = report.mistakes_per_epoch.iter().position(|&m| m == 0);
    outcome(
        last == 0,
        format!(
            "final-epoch mistakes {last}; first clean epoch {}",
            first_clean.map_or("none".to_string(), |e| (e + 1).to_string())
        ),
    )
}

fn metric_conformance() -> Outcome {
    let mut gold = vec![Label::Pos; 52];
    gold.extend(vec![Label::Neg; 48]);
    let majority = evaluate(&[Label::Pos; 100], &gold).unwrap();
    let l = |s: [i8; 4]| s.map(|v| if v > 0 { Label::Pos } else { Label::Neg });
    let hand = evaluate(&l([1, 1, -1, -1]), &l([1, -1, 1, -1])).unwrap();
    let classes_half = [hand.positive, hand.negative]
        .iter()
        .all(|c| c.precision == 0.5 && c.recall == 0.5 && c.f1 == 0.5);
    outcome(
        (majority.accuracy - 0.520).abs() < 1e-12 && hand.accuracy == 0.5 && classes_half,
        format!(
            "majority accuracy {:.3}; confusion example accuracy {} with per-class P/R/F1 all 0.5: {classes_half}",
            majority.accuracy, hand.accuracy
        ),
    )
}

/// Runs the full command sequence in `dir`, returning every artifact.
fn cli_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let run = |args: &[&str]| {
        let out = Command::new(BIN).current_dir(dir).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let mut artifacts = Vec::new();
    run(&["synth", "--out", "train.jsonl", "--docs", "40", "--weights", "0,0,8,-4", "--noise", "1.5", "--seed", "3"]);
    run(&["synth", "--out", "test.jsonl", "--docs", "15", "--weights", "0,0,8,-4", "--noise", "1.5", "--seed", "4"]);
    run(&[
        "synth", "--out", "mix.jsonl", "--docs", "40", "--profile", "0,0,8,-4:1", "--profile", "8,-4,0,0:-1", "--seed", "5",
    ]);
    for kind in ["lr", "spr"] {
        run(&["train", "--model", kind, "--train", "train.jsonl", "--out", &format!("{kind}.json"), "--seed", "9"]);
    }
    run(&[
        "train", "--model", "mixture", "--train", "mix.jsonl", "--out", "mixture.json", "--seed", "9", "--outer-rounds", "3",
        "--lambda-iters", "10", "--log", "mixture.log.jsonl",
    ]);
    for kind in ["lr", "spr"] {
        let p = run(&["predict", "--model", &format!("{kind}.json"), "--input", "test.jsonl"]);
        artifacts.push((format!("predict {kind}"), p));
        let e = run(&["eval", "--model", &format!("{kind}.json"), "--input", "test.jsonl"]);
        artifacts.push((format!("eval {kind}"), e));
    }
    let p = run(&["predict", "--model", "mixture.json", "--input", "mix.jsonl", "--infer-ungrounded"]);
    artifacts.push(("predict mixture".into(), p));
    artifacts.push(("eval mixture".into(), run(&["eval", "--model", "mixture.json", "--input", "mix.jsonl"])));
    artifacts.push(("census".into(), run(&["census", "--input", "train.jsonl"])));
    artifacts.push(("gradcheck".into(), run(&["gradcheck", "--seed", "2"])));
    for f in ["train.jsonl", "test.jsonl", "mix.jsonl", "lr.json", "spr.json", "mixture.json", "mixture.log.jsonl"] {
        artifacts.push((f.to_string(), std::fs::read(dir.join(f)).unwrap()));
    }
    artifacts
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_pipeline(a.path());
    let second = cli_pipeline(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} artifacts compared across two runs; differing: {differing:?}", first.len()),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture` or a filter;
    // this target always runs every criterion.
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} [{status}] {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "decoder exactness", decoder_exactness());
    report(2, "census correctness", census_correctness());
    report(3, "gradient check", gradient_check());
    let mixture = mixture_experiment();
    report(4, "lambda-phase monotonicity", lambda_monotonicity(&mixture));
    report(5, "structure helps", structure_helps());
    report(6, "mixture helps", mixture_helps(&mixture));
    report(7, "perceptron convergence", perceptron_convergence());
    report(8, "metric conformance", metric_conformance());
    report(9, "determinism", determinism());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
