//! Synthetic corpora with planted triad preferences.
//!
//! Gold labels are drawn by Gibbs sampling from `p(y) ~ exp(w . census(y))`,
//! so the structural part of the joint model is the true generating process.
//! Text features are class-conditional Gaussians around `+s u` and `-s u` for a
//! fixed random unit direction `u`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Assignment, Document, Edge, Label, TriadKind};
use crate::perceptron::Example;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub struct_weights: [f64; 4],
    pub descriptor_mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub min_chars: usize,
    pub max_chars: usize,
    pub edge_density: f64,
    pub planted_struct_weights: [f64; 4],
    pub text_dim: usize,
    /// Distance of each class mean from the origin along `u`.
    pub text_signal: f64,
    pub text_noise: f64,
    /// When non-empty, each document draws a profile uniformly and uses its
    /// weights instead of `planted_struct_weights`.
    pub cluster_profiles: Vec<ClusterProfile>,
    pub gibbs_sweeps: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_docs: 100,
            min_chars: 4,
            max_chars: 7,
            edge_density: 0.6,
            planted_struct_weights: [0.0; 4],
            text_dim: 5,
            text_signal: 1.0,
            text_noise: 1.0,
            cluster_profiles: Vec::new(),
            gibbs_sweeps: 200,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_docs == 0 {
            return bad("num_docs must be positive");
        }
        if self.min_chars < 1 || self.min_chars > self.max_chars {
            return bad("character range must satisfy 1 <= min <= max");
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return bad("edge_density must be in (0, 1]");
        }
        if self.text_dim == 0 {
            return bad("text_dim must be positive");
        }
        if [self.text_signal, self.text_noise].iter().any(|v| v.is_nan() || *v < 0.0) {
            return bad("text_signal and text_noise must be non-negative");
        }
        if self.planted_struct_weights.iter().any(|w| !w.is_finite()) {
            return bad("planted weights must be finite");
        }
        if let Some(p) = self.cluster_profiles.first() {
            let dim = p.descriptor_mean.len();
            if self.cluster_profiles.iter().any(|c| c.descriptor_mean.len() != dim) {
                return bad("cluster descriptor means must share one dimension");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub examples: Vec<Example>,
    /// Profile index of each document, when profiles were given.
    pub clusters: Vec<Option<usize>>,
    /// The unit direction separating the class means.
    pub direction: Vec<f64>,
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let direction = unit_vector(&mut master, spec.text_dim);
    let width = spec.max_chars.saturating_sub(1).to_string().len();

    let mut examples = Vec::with_capacity(spec.num_docs);
    let mut clusters = Vec::with_capacity(spec.num_docs);
    for i in 0..spec.num_docs {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let n = rng.random_range(spec.min_chars..=spec.max_chars);
        let names: Vec<String> = (0..n).map(|c| format!("c{c:0width$}")).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < spec.edge_density {
                    edges.push(Edge::new(names[a].clone(), names[b].clone(), Vec::new()));
                }
            }
        }
        let skeleton = Document::new(format!("synth-{i:05}"), names.clone(), edges, Vec::new())?;

        let (cluster, weights) = if spec.cluster_profiles.is_empty() {
            (None, spec.planted_struct_weights)
        } else {
            let k = rng.random_range(0..spec.cluster_profiles.len());
            (Some(k), spec.cluster_profiles[k].struct_weights)
        };
        let gold = gibbs_labels(&skeleton, &weights, spec.gibbs_sweeps, &mut rng);

        let edges: Vec<Edge> = skeleton
            .edges()
            .iter()
            .zip(gold.labels())
            .map(|(e, &l)| {
                let features = direction
                    .iter()
                    .map(|u| {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        l.sign() * spec.text_signal * u + spec.text_noise * noise
                    })
                    .collect();
                Edge::new(e.a.clone(), e.b.clone(), features).with_gold(l)
            })
            .collect();
        let doc = Document::new(skeleton.id(), names, edges, Vec::new())?.with_feature_dim(spec.text_dim)?;
        let descriptor: Vec<f64> = match cluster {
            Some(k) => spec.cluster_profiles[k]
                .descriptor_mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect(),
            None => doc.mean_edge_features(),
        };
        let doc = doc.with_descriptor(descriptor);
        examples.push(Example::new(doc, gold)?);
        clusters.push(cluster);
    }
    Ok(SynthCorpus {
        examples,
        clusters,
        direction,
    })
}

fn unit_vector(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Gibbs sampler over edge labels targeting `p(y) ~ exp(w . census(y))`,
/// started from independent fair coins. Each sweep resamples every edge once,
/// in edge order, from its conditional given the rest.
pub fn gibbs_labels(doc: &Document, weights: &[f64; 4], sweeps: usize, rng: &mut impl Rng) -> Assignment {
    let n = doc.num_edges();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.random::<bool>() { Label::Pos } else { Label::Neg })
        .collect();
    let w = |pos: usize| weights[TriadKind::from_positive_count(pos).index()];
    for _ in 0..sweeps {
        for e in 0..n {
            let mut gain = 0.0;
            for &t in doc.triangles_of(e) {
                let others = doc.triangles()[t]
                    .edges
                    .iter()
                    .filter(|&&o| o != e && labels[o].is_pos())
                    .count();
                gain += w(others + 1) - w(others);
            }
            let p_pos = 1.0 / (1.0 + (-gain).exp());
            labels[e] = if rng.random::<f64>() < p_pos { Label::Pos } else { Label::Neg };
        }
    }
    Assignment::new(labels)
}
