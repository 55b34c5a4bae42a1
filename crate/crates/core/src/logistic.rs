//! Per-edge logistic regression on text features: the unstructured baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Label;
use crate::model::{default_feature_names, dot, Standardization};
use crate::perceptron::Example;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub l2: f64,
    pub iters: usize,
    /// Stop once the gradient norm is at most this.
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            l2: 1e-3,
            iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    pub l2: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LrReport {
    /// Objective after each accepted step, starting with the initial value.
    pub losses: Vec<f64>,
    pub grad_norm: f64,
    pub converged: bool,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Regularized logistic loss and its gradient; the last gradient entry is
/// the bias, which is not penalized.
fn loss_grad(data: &[(Vec<f64>, f64)], theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let mut loss = l2 * dot(w, w);
    let mut grad: Vec<f64> = w.iter().map(|v| 2.0 * l2 * v).collect();
    grad.push(0.0);
    for (x, y) in data {
        let margin = y * (dot(w, x) + b);
        loss += softplus(-margin);
        let c = -y * sigmoid(-margin);
        for (g, xv) in grad.iter_mut().zip(x) {
            *g += c * xv;
        }
        grad[d] += c;
    }
    (loss, grad)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Fits by gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking, so every accepted step lowers the objective.
pub fn train_lr(pairs: &[(Vec<f64>, Label)], cfg: &LrConfig) -> Result<(LrModel, LrReport)> {
    let first = pairs.first().ok_or(Error::EmptyCorpus)?;
    let d = first.0.len();
    if cfg.l2.is_nan() || cfg.l2 < 0.0 || cfg.tol.is_nan() || cfg.tol < 0.0 {
        return Err(Error::InvalidConfig("l2 and tol must be non-negative".into()));
    }
    let st = Standardization::fit(d, pairs.iter().map(|(x, _)| x.as_slice()))?;
    let data: Vec<(Vec<f64>, f64)> = pairs.iter().map(|(x, y)| (st.apply(x), y.sign())).collect();

    let mut theta = vec![0.0; d + 1];
    let (mut f, mut g) = loss_grad(&data, &theta, cfg.l2);
    let mut report = LrReport {
        losses: vec![f],
        ..Default::default()
    };
    let mut step = 1.0 / (1.0 + data.len() as f64);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..cfg.iters {
        if norm(&g) <= cfg.tol {
            break;
        }
        if let Some((pt, pg)) = &prev {
            let s: Vec<f64> = theta.iter().zip(pt).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 0.0 {
                step = dot(&s, &s) / sy;
            }
        }
        let g2 = dot(&g, &g);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gv)| t - step * gv).collect();
            let (ft, gt) = loss_grad(&data, &trial, cfg.l2);
            if ft <= f - 1e-4 * step * g2 {
                accepted = Some((trial, ft, gt));
                break;
            }
            step /= 2.0;
        }
        let Some((trial, ft, gt)) = accepted else { break };
        prev = Some((std::mem::replace(&mut theta, trial), std::mem::replace(&mut g, gt)));
        f = ft;
        report.losses.push(f);
    }
    report.grad_norm = norm(&g);
    report.converged = report.grad_norm <= cfg.tol;
    let bias = theta.pop().unwrap_or(0.0);
    let model = LrModel {
        weights: theta,
        bias,
        feature_names: default_feature_names(d),
        standardization: st,
        l2: cfg.l2,
    };
    Ok((model, report))
}

/// Trains on every gold-labeled edge of a corpus.
pub fn train_lr_corpus(corpus: &[Example], cfg: &LrConfig) -> Result<(LrModel, LrReport)> {
    let pairs: Vec<(Vec<f64>, Label)> = corpus
        .iter()
        .flat_map(|ex| {
            ex.doc
                .edges()
                .iter()
                .zip(ex.gold.labels())
                .map(|(e, &l)| (e.features.clone(), l))
        })
        .collect();
    train_lr(&pairs, cfg)
}

impl LrModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The regularized training objective at this model's parameters.
    pub fn objective(&self, pairs: &[(Vec<f64>, Label)]) -> f64 {
        let data: Vec<(Vec<f64>, f64)> = pairs
            .iter()
            .map(|(x, y)| (self.standardization.apply(x), y.sign()))
            .collect();
        let mut theta = self.weights.clone();
        theta.push(self.bias);
        loss_grad(&data, &theta, self.l2).0
    }
}

/// Label and positive-class probability. Probabilities are kept strictly
/// inside (0, 1); `+1` wins ties.
pub fn predict_lr(model: &LrModel, x: &[f64]) -> Result<(Label, f64)> {
    if x.len() != model.dim() {
        return Err(Error::dim("LR input", model.dim(), x.len()));
    }
    let z = model.standardization.apply(x);
    let m = dot(&model.weights, &z) + model.bias;
    let p = sigmoid(m).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    Ok((Label::from_score(m), p))
}
