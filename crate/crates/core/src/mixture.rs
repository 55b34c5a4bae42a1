//! Narrative-type mixture of structured models.
//!
//! Each document is softly assigned to one of `K` clusters by a softmax over
//! its descriptor. Cluster `k` scores assignments with `w_k = (1 - alpha) w_0 +
//! alpha v_k`, realized by copying the joint feature vector into the shared
//! block and the `k`-th cluster block. Training alternates between weighted
//! perceptron passes over all clusters and gradient steps on the gating
//! parameters with the per-cluster losses held fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{decode, decode_scores, DecodeConfig, Decoded};
use crate::error::{Error, Result};
use crate::graph::{census_unchecked, Document};
use crate::model::{combine, default_feature_names, dot, FlatModel, Standardization};
use crate::perceptron::{
    edge_scores, effective, fit_corpus, hinge_loss, prepare, run_perceptron, schedule, Example, Prepared,
    TrainConfig, View,
};

/// Step-size halvings tried before a gating step is abandoned.
pub const MAX_HALVINGS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteredModel {
    pub k: usize,
    pub alpha: f64,
    /// One gating vector per cluster, each of descriptor length.
    pub lambda: Vec<Vec<f64>>,
    /// Shared block followed by `k` cluster blocks, each `d + 4` long.
    pub weights: Vec<f64>,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
}

impl ClusteredModel {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.lambda.first().map_or(0, |l| l.len())
    }

    fn block_len(&self) -> usize {
        self.dim() + 4
    }

    /// Block 0 is shared; block `k + 1` belongs to cluster `k`.
    pub fn block(&self, b: usize) -> &[f64] {
        let n = self.block_len();
        &self.weights[b * n..(b + 1) * n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Model("cluster count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Model(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.lambda.len() != self.k {
            return Err(Error::dim("gating vectors", self.k, self.lambda.len()));
        }
        let p = self.descriptor_dim();
        if let Some(l) = self.lambda.iter().find(|l| l.len() != p) {
            return Err(Error::dim("gating vector", p, l.len()));
        }
        if self.weights.len() != (self.k + 1) * self.block_len() {
            return Err(Error::dim("mixture weights", (self.k + 1) * self.block_len(), self.weights.len()));
        }
        if self.standardization.dim() != self.dim() {
            return Err(Error::dim("standardization", self.dim(), self.standardization.dim()));
        }
        Ok(())
    }

    /// The flat model scoring documents of cluster `k` (0-based).
    pub fn effective(&self, k: usize) -> Result<FlatModel> {
        if k >= self.k {
            return Err(Error::InvalidConfig(format!("cluster {k} out of range for K = {}", self.k)));
        }
        let w = effective(&self.weights, self.block_len(), &cluster_blocks(k, self.alpha));
        FlatModel::from_weights(&w, self.feature_names.clone(), self.standardization.clone())
    }

    pub fn membership(&self, doc: &Document) -> Result<Vec<f64>> {
        membership(&self.lambda, doc.descriptor())
    }

    /// Most likely cluster, ties to the smallest index.
    pub fn predict_cluster(&self, doc: &Document) -> Result<usize> {
        Ok(argmax(&self.membership(doc)?))
    }

    /// Decodes with the effective weights of the document's most likely cluster.
    pub fn decode(&self, doc: &Document, cfg: &DecodeConfig) -> Result<(usize, Decoded)> {
        let k = self.predict_cluster(doc)?;
        Ok((k, decode(&self.effective(k)?, doc, cfg)?))
    }
}

fn cluster_blocks(k: usize, alpha: f64) -> Vec<(usize, f64)> {
    vec![(0, 1.0 - alpha), (k + 1, alpha)]
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `lambda_k . f` over clusters.
pub fn membership(lambda: &[Vec<f64>], descriptor: &[f64]) -> Result<Vec<f64>> {
    if lambda.is_empty() {
        return Err(Error::InvalidConfig("at least one cluster is required".into()));
    }
    let logits = lambda
        .iter()
        .map(|l| {
            if l.len() != descriptor.len() {
                Err(Error::dim("descriptor", l.len(), descriptor.len()))
            } else {
                Ok(dot(l, descriptor))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(softmax(&logits))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Copies `phi` into the shared block scaled by `1 - alpha` and into block
/// `k + 1` scaled by `alpha`; all other blocks are zero.
pub fn augment_features(phi: &[f64], k: usize, num_clusters: usize, alpha: f64) -> Result<Vec<f64>> {
    if k >= num_clusters {
        return Err(Error::InvalidConfig(format!("cluster {k} out of range for K = {num_clusters}")));
    }
    let n = phi.len();
    let mut out = vec![0.0; (num_clusters + 1) * n];
    for (o, v) in out[..n].iter_mut().zip(phi) {
        *o = (1.0 - alpha) * v;
    }
    for (o, v) in out[(k + 1) * n..(k + 2) * n].iter_mut().zip(phi) {
        *o = alpha * v;
    }
    Ok(out)
}

/// Hinge loss of `doc` under every cluster's effective weights.
pub fn cluster_losses(model: &ClusteredModel, ex: &Example, cfg: &DecodeConfig) -> Result<Vec<f64>> {
    (0..model.k)
        .map(|k| hinge_loss(&model.effective(k)?, &ex.doc, &ex.gold, cfg))
        .collect()
}

/// Membership-weighted hinge loss of one document.
pub fn expected_loss(model: &ClusteredModel, ex: &Example, cfg: &DecodeConfig) -> Result<f64> {
    let p = model.membership(&ex.doc)?;
    let l = cluster_losses(model, ex, cfg)?;
    Ok(dot(&p, &l))
}

/// Sum of expected losses over a corpus.
pub fn objective(model: &ClusteredModel, corpus: &[Example], cfg: &DecodeConfig) -> Result<f64> {
    corpus.iter().map(|ex| expected_loss(model, ex, cfg)).sum()
}

/// The objective as a function of the gating parameters alone, with the
/// per-document, per-cluster losses held fixed.
pub fn frozen_objective(lambda: &[Vec<f64>], descriptors: &[&[f64]], losses: &[Vec<f64>]) -> Result<f64> {
    let mut j = 0.0;
    for (f, l) in descriptors.iter().zip(losses) {
        j += dot(&membership(lambda, f)?, l);
    }
    Ok(j)
}

/// Gradient of [`frozen_objective`] in `lambda_k`:
/// `sum_i p_k(x_i) (L_ik - sum_k' p_k'(x_i) L_ik') f(x_i)`.
pub fn grad_lambda_frozen(
    lambda: &[Vec<f64>],
    descriptors: &[&[f64]],
    losses: &[Vec<f64>],
    k: usize,
) -> Result<Vec<f64>> {
    if k >= lambda.len() {
        return Err(Error::InvalidConfig(format!("cluster {k} out of range for K = {}", lambda.len())));
    }
    if descriptors.len() != losses.len() {
        return Err(Error::dim("loss table", descriptors.len(), losses.len()));
    }
    let mut g = vec![0.0; lambda[k].len()];
    for (f, l) in descriptors.iter().zip(losses) {
        if l.len() != lambda.len() {
            return Err(Error::dim("cluster losses", lambda.len(), l.len()));
        }
        let p = membership(lambda, f)?;
        let mean = dot(&p, l);
        let c = p[k] * (l[k] - mean);
        for (gv, fv) in g.iter_mut().zip(f.iter()) {
            *gv += c * fv;
        }
    }
    Ok(g)
}

/// Gradient in `lambda_k` with losses computed under the model's current weights.
pub fn grad_lambda(model: &ClusteredModel, corpus: &[Example], k: usize, cfg: &DecodeConfig) -> Result<Vec<f64>> {
    let losses = corpus
        .iter()
        .map(|ex| cluster_losses(model, ex, cfg))
        .collect::<Result<Vec<_>>>()?;
    let descriptors: Vec<&[f64]> = corpus.iter().map(|ex| ex.doc.descriptor()).collect();
    grad_lambda_frozen(&model.lambda, &descriptors, &losses, k)
}

/// Largest relative disagreement between [`grad_lambda_frozen`] and central
/// differences of [`frozen_objective`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

/// Checks the gating gradient on random problems with K in {2, 3}, random
/// gating vectors and descriptors, and losses uniform in [0, 5).
pub fn gradient_check(instances: usize, seed: u64, step: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)).collect()
    };
    let mut out = GradCheck {
        instances,
        coordinates: 0,
        max_rel_error: 0.0,
    };
    for _ in 0..instances {
        let k = rng.random_range(2..4);
        let p = rng.random_range(1..5);
        let m = rng.random_range(3..10);
        let lambda: Vec<Vec<f64>> = (0..k).map(|_| normal(&mut rng, p)).collect();
        let fs: Vec<Vec<f64>> = (0..m).map(|_| normal(&mut rng, p)).collect();
        let losses: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let fr: Vec<&[f64]> = fs.iter().map(|f| f.as_slice()).collect();
        for c in 0..k {
            let g = grad_lambda_frozen(&lambda, &fr, &losses, c)?;
            for j in 0..p {
                let mut up = lambda.clone();
                up[c][j] += step;
                let mut dn = lambda.clone();
                dn[c][j] -= step;
                let fd = (frozen_objective(&up, &fr, &losses)? - frozen_objective(&dn, &fr, &losses)?) / (2.0 * step);
                let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-8);
                if !rel.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient comparison ({} vs {fd})", g[j])));
                }
                out.max_rel_error = out.max_rel_error.max(rel);
                out.coordinates += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureTrainConfig {
    pub k: usize,
    pub alpha: f64,
    /// Initial gating step size; halved on demand.
    pub mu: f64,
    pub outer_rounds: usize,
    pub lambda_iters: usize,
    /// Gating vectors start uniform in `(-lambda_init, lambda_init)`.
    pub lambda_init: f64,
    pub seed: u64,
    pub inner: TrainConfig,
}

impl Default for MixtureTrainConfig {
    fn default() -> Self {
        MixtureTrainConfig {
            k: 2,
            alpha: 0.8,
            mu: 0.01,
            outer_rounds: 10,
            lambda_iters: 50,
            lambda_init: 0.01,
            seed: 0,
            inner: TrainConfig::default(),
        }
    }
}

impl MixtureTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::InvalidConfig(format!("mu must be positive, got {}", self.mu)));
        }
        if self.outer_rounds < 1 {
            return Err(Error::InvalidConfig("outer_rounds must be >= 1".into()));
        }
        if self.lambda_init.is_nan() || self.lambda_init < 0.0 {
            return Err(Error::InvalidConfig("lambda_init must be >= 0".into()));
        }
        self.inner.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Weights,
    Lambda,
}

/// Objective value after a half-step of the alternation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub phase: Phase,
    pub objective: f64,
}

/// One accepted (or abandoned, when `mu == 0`) gating update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStep {
    pub round: usize,
    pub iter: usize,
    pub cluster: usize,
    pub mu: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixtureLog {
    pub entries: Vec<LogEntry>,
    pub lambda_steps: Vec<LambdaStep>,
}

impl MixtureLog {
    /// Largest increase of the objective over any gating step.
    pub fn max_lambda_increase(&self) -> f64 {
        self.lambda_steps
            .iter()
            .map(|s| s.after - s.before)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn train_mixture(corpus: &[Example], cfg: &MixtureTrainConfig) -> Result<ClusteredModel> {
    train_mixture_with_log(corpus, cfg).map(|(m, _)| m)
}

pub fn train_mixture_with_log(corpus: &[Example], cfg: &MixtureTrainConfig) -> Result<(ClusteredModel, MixtureLog)> {
    cfg.validate()?;
    let (d, standardization) = fit_corpus(corpus)?;
    let p = corpus[0].doc.descriptor().len();
    if let Some(ex) = corpus.iter().find(|ex| ex.doc.descriptor().len() != p) {
        return Err(Error::dim(format!("document `{}` descriptor", ex.doc.id()), p, ex.doc.descriptor().len()));
    }
    let data = prepare(corpus, &standardization)?;
    let descriptors: Vec<&[f64]> = corpus.iter().map(|ex| ex.doc.descriptor()).collect();
    let order = schedule(corpus.len(), &cfg.inner)?;
    let k_count = cfg.k;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lambda: Vec<Vec<f64>> = (0..k_count)
        .map(|_| {
            (0..p)
                .map(|_| {
                    if cfg.lambda_init > 0.0 {
                        rng.random_range(-cfg.lambda_init..cfg.lambda_init)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let mut log = MixtureLog::default();
    let mut weights = Vec::new();
    for round in 0..cfg.outer_rounds {
        let member = descriptors
            .iter()
            .map(|f| membership(&lambda, f))
            .collect::<Result<Vec<_>>>()?;
        let views = |i: usize| {
            (0..k_count)
                .map(|k| View {
                    weight: member[i][k],
                    blocks: cluster_blocks(k, cfg.alpha),
                })
                .collect()
        };
        weights = run_perceptron(&data, d, k_count + 1, &views, &order, &cfg.inner)?.weights;

        let losses = frozen_losses(&data, &weights, d, k_count, cfg.alpha, &cfg.inner.decode);
        let mut j = frozen_objective(&lambda, &descriptors, &losses)?;
        log.entries.push(LogEntry {
            round,
            phase: Phase::Weights,
            objective: j,
        });

        for iter in 0..cfg.lambda_iters {
            for k in 0..k_count {
                let g = grad_lambda_frozen(&lambda, &descriptors, &losses, k)?;
                let mut mu = cfg.mu;
                let mut accepted = None;
                for _ in 0..=MAX_HALVINGS {
                    let mut trial = lambda.clone();
                    for (l, gv) in trial[k].iter_mut().zip(&g) {
                        *l -= mu * gv;
                    }
                    let jt = frozen_objective(&trial, &descriptors, &losses)?;
                    if jt <= j {
                        accepted = Some((trial, jt));
                        break;
                    }
                    mu /= 2.0;
                }
                let before = j;
                match accepted {
                    Some((trial, jt)) => {
                        lambda = trial;
                        j = jt;
                    }
                    None => mu = 0.0,
                }
                log.lambda_steps.push(LambdaStep {
                    round,
                    iter,
                    cluster: k,
                    mu,
                    before,
                    after: j,
                });
            }
        }
        log.entries.push(LogEntry {
            round,
            phase: Phase::Lambda,
            objective: j,
        });
    }

    let model = ClusteredModel {
        k: k_count,
        alpha: cfg.alpha,
        lambda,
        weights,
        feature_names: default_feature_names(d),
        standardization,
    };
    model.validate()?;
    Ok((model, log))
}

/// Hinge losses of every (document, cluster) pair on standardized documents.
fn frozen_losses(
    data: &[Prepared],
    weights: &[f64],
    d: usize,
    k_count: usize,
    alpha: f64,
    cfg: &DecodeConfig,
) -> Vec<Vec<f64>> {
    let effs: Vec<Vec<f64>> = (0..k_count)
        .map(|k| effective(weights, d + 4, &cluster_blocks(k, alpha)))
        .collect();
    data.iter()
        .map(|ex| {
            effs.iter()
                .map(|we| {
                    let mut sw = [0.0; 4];
                    sw.copy_from_slice(&we[d..]);
                    let s = edge_scores(&ex.doc, &we[..d]);
                    let (pred, _) = decode_scores(&ex.doc, &s, &sw, cfg);
                    let sp = combine(&s, &pred, &census_unchecked(&ex.doc, pred.labels()), &sw);
                    let sg = combine(&s, &ex.gold, &census_unchecked(&ex.doc, ex.gold.labels()), &sw);
                    (sp - sg).max(0.0)
                })
                .collect()
        })
        .collect()
}
