//! Argmax decoding of joint edge labels.
//!
//! The objective separates over triangle-connected components. Components
//! without triangles are single edges and take the sign of their text score.
//! Components up to [`DecodeConfig::component_cap`] edges are enumerated
//! exhaustively in Gray-code order with incremental score updates; larger ones
//! fall back to best-improvement coordinate ascent with restarts.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{joint_features, triangle_components, Assignment, Document, Label, TriadKind};
use crate::model::{dot, FlatModel};

/// Edge count above which [`brute_force_oracle`] refuses to run.
pub const ORACLE_MAX_EDGES: usize = 24;
/// Largest accepted `component_cap`.
pub const MAX_COMPONENT_CAP: usize = 30;
/// Flips allowed per edge in one greedy ascent.
pub const GREEDY_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Largest component solved by exhaustive enumeration.
    pub component_cap: usize,
    /// Text-score magnitude above which an edge keeps its text sign when
    /// seeding random greedy restarts.
    pub confidence_threshold: f64,
    pub greedy_restarts: usize,
    pub infer_ungrounded: bool,
    /// Base seed for greedy restarts.
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            component_cap: 20,
            confidence_threshold: 0.5,
            greedy_restarts: 5,
            infer_ungrounded: false,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.component_cap < 1 || self.component_cap > MAX_COMPONENT_CAP {
            return Err(Error::InvalidConfig(format!(
                "component_cap must be in 1..={MAX_COMPONENT_CAP}, got {}",
                self.component_cap
            )));
        }
        if self.greedy_restarts < 1 {
            return Err(Error::InvalidConfig("greedy_restarts must be >= 1".into()));
        }
        if self.confidence_threshold.is_nan() || self.confidence_threshold < 0.0 {
            return Err(Error::InvalidConfig("confidence_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// A label proposed for a character pair with no textual evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredEdge {
    pub a: String,
    pub b: String,
    pub label: Label,
    /// Structural score gained by adding the edge with `label`.
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub assignment: Assignment,
    pub score: f64,
    /// False when some component was too large for exhaustive search.
    pub exact: bool,
    /// Filled only when [`DecodeConfig::infer_ungrounded`] is set.
    pub inferred: Vec<InferredEdge>,
}

/// Finds the highest-scoring assignment of `doc` under `model`.
pub fn decode(model: &FlatModel, doc: &Document, cfg: &DecodeConfig) -> Result<Decoded> {
    cfg.validate()?;
    let scores = model.edge_scores(doc)?;
    let (assignment, exact) = decode_scores(doc, &scores, &model.struct_weights, cfg);
    let score = model.score(doc, &assignment)?;
    let inferred = if cfg.infer_ungrounded {
        infer_ungrounded(model, doc, &assignment)?
    } else {
        Vec::new()
    };
    Ok(Decoded {
        assignment,
        score,
        exact,
        inferred,
    })
}

/// Decodes from precomputed per-edge text scores. Returns the assignment and
/// whether every component was solved exactly.
pub fn decode_scores(
    doc: &Document,
    edge_scores: &[f64],
    struct_weights: &[f64; 4],
    cfg: &DecodeConfig,
) -> (Assignment, bool) {
    assert_eq!(edge_scores.len(), doc.num_edges());
    let mut labels: Vec<Label> = edge_scores.iter().map(|&s| Label::from_score(s)).collect();
    let mut exact = true;
    for comp in triangle_components(doc) {
        if comp.len() == 1 {
            continue;
        }
        let local = LocalProblem::new(doc, &comp, edge_scores, struct_weights);
        let solved = if comp.len() <= cfg.component_cap {
            local.exhaustive()
        } else {
            exact = false;
            let seed = cfg.seed ^ fnv1a(doc.id().as_bytes()) ^ (comp[0] as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            local.greedy(cfg, &mut rng)
        };
        for (&e, l) in comp.iter().zip(solved) {
            labels[e] = l;
        }
    }
    (Assignment::new(labels), exact)
}

/// Exhaustive search over all `2^|E|` assignments, scoring each through the
/// joint feature map. Ties go to the first assignment in lexicographic order
/// with `+1` before `-1`.
pub fn brute_force_oracle(model: &FlatModel, doc: &Document) -> Result<(Assignment, f64)> {
    let n = doc.num_edges();
    if n > ORACLE_MAX_EDGES {
        return Err(Error::TooManyEdges {
            edges: n,
            cap: ORACLE_MAX_EDGES,
        });
    }
    let z = model.standardize(doc)?;
    let w = model.weights();
    let mut best: Option<(f64, Assignment)> = None;
    for code in 0u64..(1u64 << n) {
        let y = Assignment::new(
            (0..n)
                .map(|e| if code >> (n - 1 - e) & 1 == 0 { Label::Pos } else { Label::Neg })
                .collect(),
        );
        let v = dot(&w, &joint_features(&z, &y)?);
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, y));
        }
    }
    let (_, y) = best.expect("at least the empty assignment");
    let s = model.score(doc, &y)?;
    Ok((y, s))
}

/// Labels for ungrounded pairs that close at least one triangle with two
/// grounded edges. A pair is emitted only when its best label has positive
/// structural gain; grounded labels are left alone.
pub fn infer_ungrounded(model: &FlatModel, doc: &Document, y: &Assignment) -> Result<Vec<InferredEdge>> {
    y.check(doc)?;
    let n = doc.characters().len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut present = BTreeSet::new();
    for (e, &[a, b]) in doc.endpoints().iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
        present.insert((a, b));
    }
    // (u, w) -> positive-edge counts of the wedges through each common neighbour
    let mut wedges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for nbrs in &adj {
        for (i, &(u, e1)) in nbrs.iter().enumerate() {
            for &(w, e2) in &nbrs[i + 1..] {
                let key = (u.min(w), u.max(w));
                if present.contains(&key) {
                    continue;
                }
                let pos = y[e1].is_pos() as usize + y[e2].is_pos() as usize;
                wedges.entry(key).or_default().push(pos);
            }
        }
    }
    let w = &model.struct_weights;
    let mut out = Vec::new();
    for ((u, v), pos) in wedges {
        let gain = |extra: usize| -> f64 {
            pos.iter()
                .map(|&p| w[TriadKind::from_positive_count(p + extra).index()])
                .sum()
        };
        let (gp, gn) = (gain(1), gain(0));
        let (label, g) = if gp >= gn { (Label::Pos, gp) } else { (Label::Neg, gn) };
        if g > 0.0 {
            out.push(InferredEdge {
                a: doc.characters()[u].clone(),
                b: doc.characters()[v].clone(),
                label,
                gain: g,
            });
        }
    }
    Ok(out)
}

/// A triangle-connected component with local edge indices.
struct LocalProblem<'a> {
    scores: Vec<f64>,
    /// Local edge indices of each triangle.
    triangles: Vec<[usize; 3]>,
    /// Triangles incident to each local edge.
    incident: Vec<Vec<usize>>,
    w: &'a [f64; 4],
}

impl<'a> LocalProblem<'a> {
    fn new(doc: &Document, comp: &[usize], edge_scores: &[f64], w: &'a [f64; 4]) -> Self {
        let local_of = |e: usize| comp.binary_search(&e).expect("triangle edge outside its component");
        let mut tri_ids: Vec<usize> = comp.iter().flat_map(|&e| doc.triangles_of(e).iter().copied()).collect();
        tri_ids.sort_unstable();
        tri_ids.dedup();
        let triangles: Vec<[usize; 3]> = tri_ids
            .iter()
            .map(|&t| doc.triangles()[t].edges.map(local_of))
            .collect();
        let mut incident = vec![Vec::new(); comp.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &e in tri {
                incident[e].push(t);
            }
        }
        LocalProblem {
            scores: comp.iter().map(|&e| edge_scores[e]).collect(),
            triangles,
            incident,
            w,
        }
    }

    fn tri_weight(&self, pos: u8) -> f64 {
        self.w[TriadKind::from_positive_count(pos as usize).index()]
    }

    fn evaluate(&self, labels: &[Label]) -> (f64, Vec<u8>) {
        let mut score: f64 = labels.iter().zip(&self.scores).map(|(l, s)| l.sign() * s).sum();
        let pos: Vec<u8> = self
            .triangles
            .iter()
            .map(|t| t.iter().filter(|&&e| labels[e].is_pos()).count() as u8)
            .collect();
        score += pos.iter().map(|&p| self.tri_weight(p)).sum::<f64>();
        (score, pos)
    }

    /// Score change from flipping edge `e`.
    fn flip_delta(&self, labels: &[Label], pos: &[u8], e: usize) -> f64 {
        let to_neg = labels[e].is_pos();
        let mut delta = if to_neg { -2.0 * self.scores[e] } else { 2.0 * self.scores[e] };
        for &t in &self.incident[e] {
            let p = pos[t];
            let q = if to_neg { p - 1 } else { p + 1 };
            delta += self.tri_weight(q) - self.tri_weight(p);
        }
        delta
    }

    fn apply_flip(&self, labels: &mut [Label], pos: &mut [u8], e: usize) {
        let to_neg = labels[e].is_pos();
        labels[e] = labels[e].flip();
        for &t in &self.incident[e] {
            if to_neg {
                pos[t] -= 1;
            } else {
                pos[t] += 1;
            }
        }
    }

    fn magnitude(&self) -> f64 {
        let wmax = self.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.scores.iter().map(|s| s.abs()).sum::<f64>() + wmax * self.triangles.len() as f64
    }

    /// Gray-code enumeration. Bit `m - 1 - i` of the code is edge `i`, set for
    /// `-1`, so a smaller code is earlier in lexicographic order.
    fn exhaustive(&self) -> Vec<Label> {
        let m = self.scores.len();
        let mut labels = vec![Label::Pos; m];
        let (mut cur, mut pos) = self.evaluate(&labels);
        let tol = 1e-10 * (1.0 + self.magnitude());
        let (mut best, mut best_code) = (cur, 0u64);
        let mut code = 0u64;
        for i in 1u64..(1u64 << m) {
            let bit = i.trailing_zeros() as usize;
            let e = m - 1 - bit;
            cur += self.flip_delta(&labels, &pos, e);
            self.apply_flip(&mut labels, &mut pos, e);
            code ^= 1 << bit;
            if cur > best + tol || (cur >= best - tol && code < best_code) {
                best = cur;
                best_code = code;
            }
        }
        (0..m)
            .map(|e| if best_code >> (m - 1 - e) & 1 == 0 { Label::Pos } else { Label::Neg })
            .collect()
    }

    fn greedy(&self, cfg: &DecodeConfig, rng: &mut impl Rng) -> Vec<Label> {
        let text: Vec<Label> = self.scores.iter().map(|&s| Label::from_score(s)).collect();
        let mut best = self.ascend(text.clone());
        for _ in 1..cfg.greedy_restarts {
            let start: Vec<Label> = self
                .scores
                .iter()
                .zip(&text)
                .map(|(s, &l)| {
                    if s.abs() >= cfg.confidence_threshold {
                        l
                    } else if rng.random::<bool>() {
                        Label::Pos
                    } else {
                        Label::Neg
                    }
                })
                .collect();
            let run = self.ascend(start);
            if run.score > best.score {
                best = run;
            }
        }
        best.labels
    }

    /// Best-improvement single-flip ascent until no flip improves the score.
    fn ascend(&self, mut labels: Vec<Label>) -> Ascent {
        let (mut score, mut pos) = self.evaluate(&labels);
        let tol = 1e-12 * (1.0 + self.magnitude());
        let mut flips = Vec::new();
        let max_flips = labels.len() * GREEDY_MAX_ITER;
        while flips.len() < max_flips {
            let mut best: Option<(usize, f64)> = None;
            for e in 0..labels.len() {
                let d = self.flip_delta(&labels, &pos, e);
                if d > tol && best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((e, d));
                }
            }
            let Some((e, d)) = best else { break };
            self.apply_flip(&mut labels, &mut pos, e);
            score += d;
            flips.push(d);
        }
        Ascent { labels, score, flips }
    }
}

struct Ascent {
    labels: Vec<Label>,
    score: f64,
    /// Score gain of each accepted flip.
    #[cfg_attr(not(test), allow(dead_code))]
    flips: Vec<f64>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
