//! Structured perceptron training with violation-only updates and weight
//! averaging, plus the structured hinge loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{decode, decode_scores, DecodeConfig};
use crate::error::{Error, Result};
use crate::graph::{census_unchecked, joint_features, Assignment, Document};
use crate::model::{combine, default_feature_names, FlatModel, Standardization};

/// Instances whose weight falls below this are skipped entirely.
pub const MIN_INSTANCE_WEIGHT: f64 = 1e-6;

/// A document paired with its gold assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub doc: Document,
    pub gold: Assignment,
}

impl Example {
    pub fn new(doc: Document, gold: Assignment) -> Result<Self> {
        gold.check(&doc)?;
        Ok(Example { doc, gold })
    }

    /// Takes the gold labels carried on the document's edges.
    pub fn from_document(doc: Document) -> Result<Self> {
        let gold = doc.gold().ok_or_else(|| Error::InvalidDocument {
            doc: doc.id().to_string(),
            reason: "every edge needs a gold label for training".into(),
        })?;
        Ok(Example { doc, gold })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `m` independent uniform draws per epoch.
    WithReplacement,
    /// A fresh permutation of the corpus each epoch.
    ShuffledEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_epochs: usize,
    pub eta: f64,
    pub seed: u64,
    pub sampling: Sampling,
    pub averaging: bool,
    pub decode: DecodeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_epochs: 10,
            eta: 1.0,
            seed: 0,
            sampling: Sampling::WithReplacement,
            averaging: true,
            decode: DecodeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_epochs < 1 {
            return Err(Error::InvalidConfig("num_epochs must be >= 1".into()));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        self.decode.validate()
    }
}

/// One applied update: `W += step * (phi(gold) - phi(predicted))` on the
/// blocks of `view`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRecord {
    pub attempt: usize,
    pub doc: usize,
    pub view: usize,
    pub step: f64,
    pub predicted: Assignment,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Attempts that were not skipped for low instance weight.
    pub attempts: usize,
    /// Decoded assignments differing from gold, per epoch.
    pub mistakes_per_epoch: Vec<usize>,
    pub updates: Vec<UpdateRecord>,
}

/// `max_y' w.(phi(x, y') - phi(x, gold))`, with the max found by [`decode`].
///
/// The gold assignment is itself a candidate, so the result is clamped at 0
/// when an inexact decode returns something worse than gold.
pub fn hinge_loss(model: &FlatModel, doc: &Document, gold: &Assignment, cfg: &DecodeConfig) -> Result<f64> {
    let best = decode(model, doc, cfg)?;
    let g = model.score(doc, gold)?;
    Ok((best.score - g).max(0.0))
}

pub fn train_spr(corpus: &[Example], cfg: &TrainConfig) -> Result<FlatModel> {
    train_spr_with_report(corpus, cfg).map(|(m, _)| m)
}

pub fn train_spr_with_report(corpus: &[Example], cfg: &TrainConfig) -> Result<(FlatModel, TrainReport)> {
    let weights = vec![1.0; corpus.len()];
    train_weighted_with_report(corpus, &weights, cfg)
}

pub fn train_weighted(corpus: &[Example], instance_weights: &[f64], cfg: &TrainConfig) -> Result<FlatModel> {
    train_weighted_with_report(corpus, instance_weights, cfg).map(|(m, _)| m)
}

pub fn train_weighted_with_report(
    corpus: &[Example],
    instance_weights: &[f64],
    cfg: &TrainConfig,
) -> Result<(FlatModel, TrainReport)> {
    cfg.validate()?;
    let sched = schedule(corpus.len(), cfg)?;
    train_scheduled(corpus, instance_weights, &sched, cfg)
}

/// The document draw order used by the trainers for `m` documents.
pub fn schedule(m: usize, cfg: &TrainConfig) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = Vec::with_capacity(m * cfg.num_epochs);
    for _ in 0..cfg.num_epochs {
        match cfg.sampling {
            Sampling::WithReplacement => order.extend((0..m).map(|_| rng.random_range(0..m))),
            Sampling::ShuffledEpochs => {
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(&mut rng);
                order.extend(perm);
            }
        }
    }
    Ok(order)
}

/// Trains on an explicit draw order. Epoch boundaries fall every
/// `corpus.len()` attempts.
pub fn train_scheduled(
    corpus: &[Example],
    instance_weights: &[f64],
    order: &[usize],
    cfg: &TrainConfig,
) -> Result<(FlatModel, TrainReport)> {
    cfg.validate()?;
    if instance_weights.len() != corpus.len() {
        return Err(Error::dim("instance weights", corpus.len(), instance_weights.len()));
    }
    if let Some(w) = instance_weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidConfig(format!("instance weight {w} is not a finite non-negative number")));
    }
    let (d, standardization) = fit_corpus(corpus)?;
    let prepared = prepare(corpus, &standardization)?;
    let views = |i: usize| {
        vec![View {
            weight: instance_weights[i],
            blocks: vec![(0, 1.0)],
        }]
    };
    let run = run_perceptron(&prepared, d, 1, &views, order, cfg)?;
    let model = FlatModel::from_weights(&run.weights, default_feature_names(d), standardization)?;
    Ok((model, run.report))
}

/// Corpus text dimensionality and its standardization statistics.
pub(crate) fn fit_corpus(corpus: &[Example]) -> Result<(usize, Standardization)> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let d = corpus
        .iter()
        .find(|ex| ex.doc.num_edges() > 0)
        .map_or(first.doc.feature_dim(), |ex| ex.doc.feature_dim());
    for ex in corpus {
        if ex.doc.num_edges() > 0 && ex.doc.feature_dim() != d {
            return Err(Error::dim(format!("document `{}` features", ex.doc.id()), d, ex.doc.feature_dim()));
        }
        ex.gold.check(&ex.doc)?;
    }
    let st = Standardization::fit_documents(d, corpus.iter().map(|ex| &ex.doc))?;
    Ok((d, st))
}

/// A standardized training document with its cached gold feature vector.
pub(crate) struct Prepared {
    pub doc: Document,
    pub gold: Assignment,
    pub gold_phi: Vec<f64>,
}

pub(crate) fn prepare(corpus: &[Example], st: &Standardization) -> Result<Vec<Prepared>> {
    corpus
        .iter()
        .map(|ex| {
            let doc = st.apply_document(&ex.doc)?;
            let gold_phi = joint_features(&doc, &ex.gold)?;
            Ok(Prepared {
                doc,
                gold: ex.gold.clone(),
                gold_phi,
            })
        })
        .collect()
}

/// How one training instance enters the block-structured weight vector: its
/// feature vector is copied into each listed block, scaled.
pub(crate) struct View {
    pub weight: f64,
    pub blocks: Vec<(usize, f64)>,
}

pub(crate) struct Run {
    /// Averaged or final weights, `n_blocks * (d + 4)` long.
    pub weights: Vec<f64>,
    pub report: TrainReport,
}

/// Effective `d + 4` weights of a view: the scaled sum of its blocks.
pub(crate) fn effective(w: &[f64], dim: usize, blocks: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(b, scale) in blocks {
        for (o, v) in out.iter_mut().zip(&w[b * dim..(b + 1) * dim]) {
            *o += scale * v;
        }
    }
    out
}

pub(crate) fn edge_scores(doc: &Document, text_weights: &[f64]) -> Vec<f64> {
    doc.edges()
        .iter()
        .map(|e| e.features.iter().zip(text_weights).map(|(x, w)| x * w).sum())
        .collect()
}

/// The perceptron loop. Every view of an attempt is decoded against the same
/// weights; their updates are applied together afterwards.
/// Blocks, step and `phi(gold) - phi(predicted)` of one view's update.
type Pending = (Vec<(usize, f64)>, f64, Vec<f64>);

pub(crate) fn run_perceptron(
    data: &[Prepared],
    d: usize,
    n_blocks: usize,
    views: &dyn Fn(usize) -> Vec<View>,
    order: &[usize],
    cfg: &TrainConfig,
) -> Result<Run> {
    let m = data.len();
    if m == 0 {
        return Err(Error::EmptyCorpus);
    }
    let dim = d + 4;
    let mut w = vec![0.0; n_blocks * dim];
    let mut sum = vec![0.0; n_blocks * dim];
    let mut report = TrainReport {
        mistakes_per_epoch: vec![0; order.len().div_ceil(m)],
        ..Default::default()
    };
    let mut pending: Vec<Pending> = Vec::new();

    for (t, &i) in order.iter().enumerate() {
        if i >= m {
            return Err(Error::InvalidConfig(format!("schedule index {i} out of range for {m} documents")));
        }
        let ex = &data[i];
        let active: Vec<(usize, View)> = views(i)
            .into_iter()
            .enumerate()
            .filter(|(_, v)| v.weight >= MIN_INSTANCE_WEIGHT)
            .collect();
        if active.is_empty() {
            continue;
        }
        report.attempts += 1;
        for (vi, view) in active {
            let we = effective(&w, dim, &view.blocks);
            let mut sw = [0.0; 4];
            sw.copy_from_slice(&we[d..]);
            let scores = edge_scores(&ex.doc, &we[..d]);
            let (pred, _) = decode_scores(&ex.doc, &scores, &sw, &cfg.decode);
            if pred == ex.gold {
                continue;
            }
            report.mistakes_per_epoch[t / m] += 1;
            let s_pred = combine(&scores, &pred, &census_unchecked(&ex.doc, pred.labels()), &sw);
            let s_gold = combine(&scores, &ex.gold, &census_unchecked(&ex.doc, ex.gold.labels()), &sw);
            // violation-only: inexact search may return something worse than gold
            if s_pred < s_gold {
                continue;
            }
            let phi_pred = joint_features(&ex.doc, &pred)?;
            let delta: Vec<f64> = ex.gold_phi.iter().zip(&phi_pred).map(|(g, p)| g - p).collect();
            let step = cfg.eta * view.weight;
            report.updates.push(UpdateRecord {
                attempt: t,
                doc: i,
                view: vi,
                step,
                predicted: pred,
            });
            pending.push((view.blocks, step, delta));
        }
        for (blocks, step, delta) in pending.drain(..) {
            for (b, scale) in blocks {
                for (wv, dv) in w[b * dim..(b + 1) * dim].iter_mut().zip(&delta) {
                    *wv += step * scale * dv;
                }
            }
        }
        if cfg.averaging {
            for (s, v) in sum.iter_mut().zip(&w) {
                *s += v;
            }
        }
    }

    let weights = if cfg.averaging && report.attempts > 0 {
        let n = report.attempts as f64;
        sum.iter().map(|s| s / n).collect()
    } else {
        w
    };
    Ok(Run { weights, report })
}
