use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use narrel_core::corpus::{load_corpus, write_corpus, Corpus};
use narrel_core::decode::{DecodeConfig, InferredEdge};
use narrel_core::features::FeatureVocabulary;
use narrel_core::graph::{triad_census, Label, TriadCensus};
use narrel_core::logistic::{train_lr_corpus, LrConfig};
use narrel_core::metrics::{evaluate, ClassScores, Metrics};
use narrel_core::mixture::{gradient_check, train_mixture_with_log, MixtureLog, MixtureTrainConfig, Phase};
use narrel_core::perceptron::{train_spr_with_report, Example, Sampling, TrainConfig};
use narrel_core::persist::{load_model, save_model, Model, Prediction};
use narrel_core::synth::{generate_corpus, ClusterProfile, SynthSpec};
use narrel_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{CensusArgs, DecodeArgs, EvalArgs, GradcheckArgs, ModelKind, PredictArgs, SamplingArg, SynthArgs, TrainArgs};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => USAGE,
        Error::Numeric(_) => NUMERIC,
        _ => DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_of(&e),
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.downcast_ref::<Error>().map_or(DATA, code_of);
        Failure { code, error }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        error: anyhow!(msg.into()),
    }
}

type Outcome = Result<(), Failure>;

fn decode_config(a: &DecodeArgs, seed: u64) -> Result<DecodeConfig, Failure> {
    let cfg = DecodeConfig {
        component_cap: a.component_cap,
        confidence_threshold: a.tau,
        greedy_restarts: a.restarts,
        infer_ungrounded: false,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_corpus(path: &Path, vocab: Option<&FeatureVocabulary>) -> Result<Corpus, Failure> {
    Ok(load_corpus(path, vocab).with_context(|| format!("reading corpus {}", path.display()))?)
}

fn gold_examples(corpus: Corpus) -> Result<Vec<Example>, Failure> {
    Ok(corpus
        .documents
        .into_iter()
        .map(Example::from_document)
        .collect::<Result<Vec<_>, _>>()?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(e: io::Error) -> Failure {
    Failure {
        code: DATA,
        error: e.into(),
    }
}

pub fn train(a: TrainArgs) -> Outcome {
    let decode = decode_config(&a.decode, a.seed)?;
    let corpus = read_corpus(&a.train, None)?;
    let names = corpus.feature_names.clone();
    let examples = gold_examples(corpus)?;
    let edges: usize = examples.iter().map(|e| e.doc.num_edges()).sum();
    let inner = TrainConfig {
        num_epochs: a.epochs,
        eta: a.eta,
        seed: a.seed,
        sampling: match a.sampling {
            SamplingArg::WithReplacement => Sampling::WithReplacement,
            SamplingArg::ShuffledEpochs => Sampling::ShuffledEpochs,
        },
        averaging: !a.no_average,
        decode,
    };
    let perceptron_kind = if inner.averaging { "averaged" } else { "final" };
    if a.log.is_some() && a.model != ModelKind::Mixture {
        return Err(usage("--log is only produced by --model mixture"));
    }

    let (model, config, details) = match a.model {
        ModelKind::Lr => {
            let cfg = LrConfig {
                l2: a.l2,
                iters: a.lr_iters,
                tol: a.lr_tol,
            };
            let (mut m, report) = train_lr_corpus(&examples, &cfg)?;
            m.feature_names = names;
            let details = json!({
                "iterations": report.losses.len() - 1,
                "final_objective": report.losses.last(),
                "grad_norm": report.grad_norm,
                "converged": report.converged,
            });
            (Model::Lr(m), json!(cfg), details)
        }
        ModelKind::Spr => {
            let (mut m, report) = train_spr_with_report(&examples, &inner)?;
            m.feature_names = names;
            let details = json!({
                "perceptron": perceptron_kind,
                "mistakes_per_epoch": report.mistakes_per_epoch,
                "updates": report.updates.len(),
            });
            (Model::Spr(m), json!(inner), details)
        }
        ModelKind::Mixture => {
            let cfg = MixtureTrainConfig {
                k: a.clusters,
                alpha: a.alpha,
                mu: a.mu,
                outer_rounds: a.outer_rounds,
                lambda_iters: a.lambda_iters,
                lambda_init: a.lambda_init,
                seed: a.seed,
                inner,
            };
            let (mut m, log) = train_mixture_with_log(&examples, &cfg)?;
            m.feature_names = names;
            report_rounds(&log);
            if let Some(path) = &a.log {
                write_log(&log, path)?;
            }
            let details = json!({
                "perceptron": perceptron_kind,
                "objective": log.entries.last().map(|e| e.objective),
                "max_lambda_increase": log.max_lambda_increase(),
            });
            (Model::Mixture(m), json!(cfg), details)
        }
    };
    let metadata = json!({
        "seed": a.seed,
        "documents": examples.len(),
        "edges": edges,
        "training": details,
    });
    save_model(&model, config, metadata, &a.out).with_context(|| format!("writing model {}", a.out.display()))?;
    println!(
        "trained {} model on {} documents ({} edges) -> {}",
        model.kind(),
        examples.len(),
        edges,
        a.out.display()
    );
    Ok(())
}

fn report_rounds(log: &MixtureLog) {
    for pair in log.entries.chunks(2) {
        if let [w, l] = pair {
            eprintln!(
                "round {}: J after weights {:.6}, after gating {:.6}",
                w.round, w.objective, l.objective
            );
        }
    }
}

fn write_log(log: &MixtureLog, path: &Path) -> Result<(), Failure> {
    let mut w = output(Some(path))?;
    let mut steps = log.lambda_steps.iter().peekable();
    for e in &log.entries {
        if e.phase == Phase::Lambda {
            while let Some(s) = steps.next_if(|s| s.round == e.round) {
                let mut v = json!(s);
                v["type"] = json!("lambda_step");
                writeln!(w, "{v}").map_err(io_err)?;
            }
        }
        let mut v = json!(e);
        v["type"] = json!("objective");
        writeln!(w, "{v}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Loads a model and a corpus aggregated with the model's features.
fn model_and_corpus(model_path: &Path, input: &Path) -> Result<(Model, Corpus), Failure> {
    let (model, _) = load_model(model_path).with_context(|| format!("reading model {}", model_path.display()))?;
    let vocab = FeatureVocabulary::from_names(model.feature_names()).ok();
    let corpus = read_corpus(input, vocab.as_ref())?;
    if corpus.feature_names != model.feature_names() {
        return Err(Failure {
            code: DATA,
            error: anyhow!(
                "corpus features {:?} do not match the model's {:?}",
                corpus.feature_names,
                model.feature_names()
            ),
        });
    }
    Ok((model, corpus))
}

fn predict_all(model: &Model, corpus: &Corpus, cfg: &DecodeConfig) -> Result<Vec<Prediction>, Failure> {
    Ok(corpus
        .documents
        .par_iter()
        .map(|doc| model.predict(doc, cfg))
        .collect::<Result<Vec<_>, _>>()?)
}

#[derive(Serialize)]
struct EdgeOut<'a> {
    a: &'a str,
    b: &'a str,
    label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    cluster: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    edges: Vec<EdgeOut<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inferred: Option<&'a [InferredEdge]>,
}

pub fn predict(a: PredictArgs) -> Outcome {
    let mut cfg = decode_config(&a.decode, a.seed)?;
    cfg.infer_ungrounded = a.infer_ungrounded;
    let (model, corpus) = model_and_corpus(&a.model, &a.input)?;
    if a.infer_ungrounded && matches!(model, Model::Lr(_)) {
        return Err(usage("--infer-ungrounded needs a structured model (spr or mixture)"));
    }
    let preds = predict_all(&model, &corpus, &cfg)?;
    let mut w = output(a.out.as_deref())?;
    for (doc, p) in corpus.documents.iter().zip(&preds) {
        let edges = doc
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| EdgeOut {
                a: &e.a,
                b: &e.b,
                label: p.assignment[i],
                probability: p.probabilities.as_ref().map(|ps| ps[i]),
            })
            .collect();
        let rec = PredictionOut {
            id: doc.id(),
            cluster: p.cluster,
            exact: p.decoded.as_ref().map(|d| d.exact),
            score: p.decoded.as_ref().map(|d| d.score),
            edges,
            inferred: p.decoded.as_ref().filter(|_| a.infer_ungrounded).map(|d| d.inferred.as_slice()),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| io_err(e.into()))?;
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn metrics_table(m: &Metrics) -> String {
    let row = |name: &str, c: &ClassScores| {
        format!(
            "{name:<9} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
            c.precision, c.recall, c.f1, c.support
        )
    };
    let mut s = format!("{:<9} {:>9} {:>9} {:>9} {:>8}\n", "class", "precision", "recall", "f1", "support");
    s += &row("+1", &m.positive);
    s += &row("-1", &m.negative);
    s += &format!(
        "{:<9} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
        "macro", m.macro_precision, m.macro_recall, m.macro_f1, m.total
    );
    s += &format!("accuracy  {:.4}\n", m.accuracy);
    s
}

pub fn eval(a: EvalArgs) -> Outcome {
    let cfg = decode_config(&a.decode, a.seed)?;
    let (model, corpus) = model_and_corpus(&a.model, &a.input)?;
    let docs = corpus.documents.len();
    let examples = gold_examples(corpus.clone())?;
    let preds = predict_all(&model, &corpus, &cfg)?;
    let predicted: Vec<Label> = preds.iter().flat_map(|p| p.assignment.labels().to_vec()).collect();
    let gold: Vec<Label> = examples.iter().flat_map(|e| e.gold.labels().to_vec()).collect();
    let metrics = evaluate(&predicted, &gold)?;
    let record = json!({
        "model": model.kind(),
        "documents": docs,
        "metrics": metrics,
    });
    print!("{}", metrics_table(&metrics));
    println!("{record}");
    if let Some(path) = &a.json {
        let mut w = output(Some(path))?;
        writeln!(w, "{record}").map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    Ok(())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("{what}: cannot parse {s:?} ({e})")))
}

fn parse_weights(s: &str) -> Result<[f64; 4], Failure> {
    let v = parse_list(s, "structural weights")?;
    v.try_into()
        .map_err(|v: Vec<f64>| usage(format!("structural weights need 4 values, got {}", v.len())))
}

pub fn synth(a: SynthArgs) -> Outcome {
    let cluster_profiles = a
        .profile
        .iter()
        .map(|p| {
            let (w, m) = p
                .split_once(':')
                .ok_or_else(|| usage(format!("profile {p:?} must look like w1,w2,w3,w4:m1,m2")))?;
            Ok(ClusterProfile {
                struct_weights: parse_weights(w)?,
                descriptor_mean: parse_list(m, "descriptor mean")?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let spec = SynthSpec {
        num_docs: a.docs,
        min_chars: a.min_chars,
        max_chars: a.max_chars,
        edge_density: a.density,
        planted_struct_weights: parse_weights(&a.weights)?,
        text_dim: a.dim,
        text_signal: a.signal,
        text_noise: a.noise,
        cluster_profiles,
        gibbs_sweeps: a.sweeps,
        seed: a.seed,
    };
    let corpus = generate_corpus(&spec)?;
    let w = output(a.out.as_deref())?;
    write_corpus(corpus.examples.iter().map(|e| &e.doc), w)?;
    let edges: usize = corpus.examples.iter().map(|e| e.doc.num_edges()).sum();
    eprintln!("generated {} documents ({} edges)", corpus.examples.len(), edges);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Outcome {
    if a.step.is_nan() || a.step <= 0.0 {
        return Err(usage("--step must be positive"));
    }
    let r = gradient_check(a.instances, a.seed, a.step)?;
    println!(
        "max relative error {:.3e} over {} coordinates in {} instances",
        r.max_rel_error, r.coordinates, r.instances
    );
    if r.max_rel_error > a.tol {
        return Err(Failure {
            code: NUMERIC,
            error: anyhow!("gradient check failed: {:.3e} exceeds {:.1e}", r.max_rel_error, a.tol),
        });
    }
    Ok(())
}

pub fn census(a: CensusArgs) -> Outcome {
    let examples = gold_examples(read_corpus(&a.input, None)?)?;
    let mut out = String::from("id\tclique\tlove_triangle\tcommon_enemy\tmexican_standoff\ttriangles\n");
    let mut total = TriadCensus::default();
    let line = |id: &str, c: &TriadCensus| {
        let [p, q, r, s] = c.counts();
        format!("{id}\t{p}\t{q}\t{r}\t{s}\t{}\n", c.total())
    };
    for ex in &examples {
        let c = triad_census(&ex.doc, &ex.gold)?;
        for (t, v) in [
            (&mut total.clique, c.clique),
            (&mut total.love_triangle, c.love_triangle),
            (&mut total.common_enemy, c.common_enemy),
            (&mut total.mexican_standoff, c.mexican_standoff),
        ] {
            *t += v;
        }
        out += &line(ex.doc.id(), &c);
    }
    out += &line("total", &total);
    let mut w = output(None)?;
    w.write_all(out.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}
