//! Flat structured model: a text weight block plus four triad weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{census_unchecked, Assignment, Document, TriadCensus};

/// Smallest standard deviation used when z-scoring a feature.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score statistics, frozen into a model at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Population mean and standard deviation over the given feature vectors.
    pub fn fit<'a>(d: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            if r.len() != d {
                return Err(Error::dim("standardization input", d, r.len()));
            }
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if n == 0 {
            return Ok(Self::identity(d));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let std = sq
            .iter()
            .map(|q| (q / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Standardization { mean, std })
    }

    /// Statistics over every edge of every document.
    pub fn fit_documents<'a>(d: usize, docs: impl IntoIterator<Item = &'a Document>) -> Result<Self> {
        Self::fit(
            d,
            docs.into_iter()
                .flat_map(|doc| doc.edges().iter().map(|e| e.features.as_slice())),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_document(&self, doc: &Document) -> Result<Document> {
        if doc.num_edges() > 0 && doc.feature_dim() != self.dim() {
            return Err(Error::dim(
                format!("document `{}` features", doc.id()),
                self.dim(),
                doc.feature_dim(),
            ));
        }
        doc.map_features(|x| self.apply(x)).with_feature_dim(self.dim())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    pub text_weights: Vec<f64>,
    /// Ordered clique, love triangle, common enemy, mexican standoff.
    pub struct_weights: [f64; 4],
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
}

impl FlatModel {
    pub fn new(
        text_weights: Vec<f64>,
        struct_weights: [f64; 4],
        feature_names: Vec<String>,
        standardization: Standardization,
    ) -> Result<Self> {
        let d = text_weights.len();
        if feature_names.len() != d {
            return Err(Error::dim("feature names", d, feature_names.len()));
        }
        if standardization.dim() != d {
            return Err(Error::dim("standardization", d, standardization.dim()));
        }
        Ok(FlatModel {
            text_weights,
            struct_weights,
            feature_names,
            standardization,
        })
    }

    pub fn zeros(d: usize) -> Self {
        FlatModel {
            text_weights: vec![0.0; d],
            struct_weights: [0.0; 4],
            feature_names: default_feature_names(d),
            standardization: Standardization::identity(d),
        }
    }

    /// Builds a model from a concatenated `d + 4` weight vector.
    pub fn from_weights(weights: &[f64], feature_names: Vec<String>, standardization: Standardization) -> Result<Self> {
        if weights.len() < 4 {
            return Err(Error::dim("weight vector", 4, weights.len()));
        }
        let d = weights.len() - 4;
        let mut st = [0.0; 4];
        st.copy_from_slice(&weights[d..]);
        Self::new(weights[..d].to_vec(), st, feature_names, standardization)
    }

    pub fn dim(&self) -> usize {
        self.text_weights.len()
    }

    /// `text_weights ++ struct_weights`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.text_weights.clone();
        w.extend_from_slice(&self.struct_weights);
        w
    }

    pub fn standardize(&self, doc: &Document) -> Result<Document> {
        self.standardization.apply_document(doc)
    }

    /// Text-only score `w_text . z(phi(x_e))` of every edge.
    pub fn edge_scores(&self, doc: &Document) -> Result<Vec<f64>> {
        if doc.num_edges() > 0 && doc.feature_dim() != self.dim() {
            return Err(Error::dim(
                format!("document `{}` features", doc.id()),
                self.dim(),
                doc.feature_dim(),
            ));
        }
        Ok(doc
            .edges()
            .iter()
            .map(|e| {
                e.features
                    .iter()
                    .zip(&self.text_weights)
                    .zip(self.standardization.mean.iter().zip(&self.standardization.std))
                    .map(|((v, w), (m, s))| w * (v - m) / s)
                    .sum()
            })
            .collect())
    }

    /// Linear score of assignment `y` for `doc`.
    pub fn score(&self, doc: &Document, y: &Assignment) -> Result<f64> {
        y.check(doc)?;
        let s = self.edge_scores(doc)?;
        let census = census_unchecked(doc, y.labels());
        Ok(combine(&s, y, &census, &self.struct_weights))
    }
}

pub(crate) fn combine(edge_scores: &[f64], y: &Assignment, census: &TriadCensus, struct_weights: &[f64; 4]) -> f64 {
    let text: f64 = edge_scores
        .iter()
        .zip(y.labels())
        .map(|(s, l)| l.sign() * s)
        .sum();
    let structural: f64 = census
        .as_features()
        .iter()
        .zip(struct_weights)
        .map(|(c, w)| c * w)
        .sum();
    text + structural
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
