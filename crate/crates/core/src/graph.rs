//! Character graphs, signed assignments and the triad census.
//!
//! A [`Document`] is an undirected graph whose nodes are characters and whose
//! edges are the annotated character pairs. Characters and edges are kept in
//! lexicographic order so that every downstream enumeration (triangles,
//! components, decoding tie-breaks) is reproducible.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polarity of a relationship. `Pos` orders before `Neg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    /// Cooperative, +1.
    Pos,
    /// Adversarial, -1.
    Neg,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    /// Sign of `x`, with zero mapped to `Pos`.
    pub fn from_score(x: f64) -> Label {
        if x >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Pos => f.write_str("+1"),
            Label::Neg => f.write_str("-1"),
        }
    }
}

/// An annotated character pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub features: Vec<f64>,
    pub gold: Option<Label>,
}

impl Edge {
    pub fn new(a: impl Into<String>, b: impl Into<String>, features: Vec<f64>) -> Self {
        Edge {
            a: a.into(),
            b: b.into(),
            features,
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: Label) -> Self {
        self.gold = Some(gold);
        self
    }
}

/// Three edges closing a triangle, together with its characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    /// Character indices, ascending.
    pub chars: [usize; 3],
    /// Edge indices for the pairs (0,1), (0,2), (1,2) of `chars`.
    pub edges: [usize; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    id: String,
    characters: Vec<String>,
    edges: Vec<Edge>,
    endpoints: Vec<[usize; 2]>,
    descriptor: Vec<f64>,
    feature_dim: usize,
    triangles: Vec<Triangle>,
    edge_triangles: Vec<Vec<usize>>,
}

impl Document {
    /// Validates and canonicalizes a document.
    ///
    /// Edge endpoints are reordered so that `a < b`, edges are sorted by
    /// `(a, b)` and characters are sorted by id. Duplicate pairs, self-loops,
    /// undeclared endpoints and ragged feature vectors are rejected.
    pub fn new(
        id: impl Into<String>,
        characters: Vec<String>,
        edges: Vec<Edge>,
        descriptor: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidDocument {
            doc: id.clone(),
            reason,
        };

        let mut characters = characters;
        characters.sort();
        if let Some(c) = characters.iter().find(|c| c.is_empty()) {
            return Err(invalid(format!("empty character id {c:?}")));
        }
        if let Some(w) = characters.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate character `{}`", w[0])));
        }
        let index: HashMap<&str, usize> = characters
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut edges = edges;
        for e in &mut edges {
            if e.a == e.b {
                return Err(invalid(format!("self-loop on `{}`", e.a)));
            }
            for end in [&e.a, &e.b] {
                if !index.contains_key(end.as_str()) {
                    return Err(invalid(format!("edge endpoint `{end}` is not a declared character")));
                }
            }
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        if let Some(w) = edges.windows(2).find(|w| w[0].a == w[1].a && w[0].b == w[1].b) {
            return Err(invalid(format!("duplicate pair ({}, {})", w[0].a, w[0].b)));
        }

        let feature_dim = edges.first().map_or(0, |e| e.features.len());
        for e in &edges {
            if e.features.len() != feature_dim {
                return Err(invalid(format!(
                    "edge ({}, {}) has {} features, expected {}",
                    e.a,
                    e.b,
                    e.features.len(),
                    feature_dim
                )));
            }
            if e.features.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("edge ({}, {}) has non-finite features", e.a, e.b)));
            }
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite descriptor".into()));
        }

        let endpoints: Vec<[usize; 2]> = edges
            .iter()
            .map(|e| [index[e.a.as_str()], index[e.b.as_str()]])
            .collect();
        let (triangles, edge_triangles) = find_triangles(characters.len(), &endpoints);

        Ok(Document {
            id,
            characters,
            edges,
            endpoints,
            descriptor,
            feature_dim,
            triangles,
            edge_triangles,
        })
    }

    /// Pins the text-feature dimensionality, which is otherwise inferred from
    /// the edges (and is 0 for an edgeless document).
    pub fn with_feature_dim(mut self, d: usize) -> Result<Self> {
        if !self.edges.is_empty() && self.feature_dim != d {
            return Err(Error::dim(format!("document `{}` features", self.id), d, self.feature_dim));
        }
        self.feature_dim = d;
        Ok(self)
    }

    pub fn with_descriptor(mut self, descriptor: Vec<f64>) -> Self {
        self.descriptor = descriptor;
        self
    }

    /// Returns a copy with every edge feature vector passed through `f`.
    pub fn map_features(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut doc = self.clone();
        for e in &mut doc.edges {
            e.features = f(&e.features);
        }
        if let Some(e) = doc.edges.first() {
            doc.feature_dim = e.features.len();
        }
        doc
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn characters(&self) -> &[String] {
        &self.characters
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Character indices of each edge, `[a, b]` with `a < b`.
    pub fn endpoints(&self) -> &[[usize; 2]] {
        &self.endpoints
    }

    pub fn descriptor(&self) -> &[f64] {
        &self.descriptor
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Indices into [`Document::triangles`] of the triangles containing `edge`.
    pub fn triangles_of(&self, edge: usize) -> &[usize] {
        &self.edge_triangles[edge]
    }

    pub fn edge_index(&self, a: &str, b: &str) -> Option<usize> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by(|e| (e.a.as_str(), e.b.as_str()).cmp(&(a, b)))
            .ok()
    }

    /// Gold labels, if every edge carries one.
    pub fn gold(&self) -> Option<Assignment> {
        self.edges
            .iter()
            .map(|e| e.gold)
            .collect::<Option<Vec<_>>>()
            .map(Assignment::new)
    }

    /// Returns a copy whose edges carry the labels of `y` as gold.
    pub fn with_gold(&self, y: &Assignment) -> Result<Self> {
        y.check(self)?;
        let mut doc = self.clone();
        for (e, &l) in doc.edges.iter_mut().zip(y.labels()) {
            e.gold = Some(l);
        }
        Ok(doc)
    }

    /// Mean of the edge feature vectors (zeros when the document has no edges).
    pub fn mean_edge_features(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.feature_dim];
        if self.edges.is_empty() {
            return mean;
        }
        for e in &self.edges {
            for (m, v) in mean.iter_mut().zip(&e.features) {
                *m += v;
            }
        }
        let n = self.edges.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

fn find_triangles(n_chars: usize, endpoints: &[[usize; 2]]) -> (Vec<Triangle>, Vec<Vec<usize>>) {
    let mut pair: HashMap<(usize, usize), usize> = HashMap::with_capacity(endpoints.len());
    let mut higher: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_chars];
    for (e, &[a, b]) in endpoints.iter().enumerate() {
        pair.insert((a, b), e);
        higher[a].insert(b);
    }
    let mut triangles = Vec::new();
    for i in 0..n_chars {
        for &j in &higher[i] {
            for &k in higher[i].range(j + 1..) {
                if let Some(&jk) = pair.get(&(j, k)) {
                    triangles.push(Triangle {
                        chars: [i, j, k],
                        edges: [pair[&(i, j)], pair[&(i, k)], jk],
                    });
                }
            }
        }
    }
    let mut edge_triangles = vec![Vec::new(); endpoints.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &e in &tri.edges {
            edge_triangles[e].push(t);
        }
    }
    (triangles, edge_triangles)
}

/// One label per edge of a document, in the document's edge order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    labels: Vec<Label>,
}

impl Assignment {
    pub fn new(labels: Vec<Label>) -> Self {
        Assignment { labels }
    }

    pub fn uniform(label: Label, n: usize) -> Self {
        Assignment {
            labels: vec![label; n],
        }
    }

    /// Builds an assignment from `+1`/`-1` values; anything `>= 0` is `Pos`.
    pub fn from_signs(signs: &[i32]) -> Self {
        Assignment {
            labels: signs
                .iter()
                .map(|&s| if s >= 0 { Label::Pos } else { Label::Neg })
                .collect(),
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn flipped(&self) -> Self {
        Assignment {
            labels: self.labels.iter().map(|l| l.flip()).collect(),
        }
    }

    /// Errors unless there is exactly one label per edge of `doc`.
    pub fn check(&self, doc: &Document) -> Result<()> {
        if self.labels.len() != doc.num_edges() {
            return Err(Error::InvalidAssignment(format!(
                "document `{}` has {} edges but the assignment labels {}",
                doc.id(),
                doc.num_edges(),
                self.labels.len()
            )));
        }
        Ok(())
    }
}

impl Index<usize> for Assignment {
    type Output = Label;

    fn index(&self, i: usize) -> &Label {
        &self.labels[i]
    }
}

/// The four signed-triangle configurations, keyed by number of positive edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TriadKind {
    /// (+,+,+)
    Clique,
    /// (+,+,-)
    LoveTriangle,
    /// (+,-,-)
    CommonEnemy,
    /// (-,-,-)
    MexicanStandoff,
}

impl TriadKind {
    pub const ALL: [TriadKind; 4] = [
        TriadKind::Clique,
        TriadKind::LoveTriangle,
        TriadKind::CommonEnemy,
        TriadKind::MexicanStandoff,
    ];

    pub fn from_positive_count(n: usize) -> TriadKind {
        match n {
            3 => TriadKind::Clique,
            2 => TriadKind::LoveTriangle,
            1 => TriadKind::CommonEnemy,
            0 => TriadKind::MexicanStandoff,
            _ => unreachable!("a triangle has three edges"),
        }
    }

    pub fn from_labels(labels: [Label; 3]) -> TriadKind {
        Self::from_positive_count(labels.iter().filter(|l| l.is_pos()).count())
    }

    /// Position in the structural weight block.
    pub fn index(self) -> usize {
        match self {
            TriadKind::Clique => 0,
            TriadKind::LoveTriangle => 1,
            TriadKind::CommonEnemy => 2,
            TriadKind::MexicanStandoff => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TriadKind::Clique => "clique",
            TriadKind::LoveTriangle => "love_triangle",
            TriadKind::CommonEnemy => "common_enemy",
            TriadKind::MexicanStandoff => "mexican_standoff",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriadCensus {
    pub clique: usize,
    pub love_triangle: usize,
    pub common_enemy: usize,
    pub mexican_standoff: usize,
}

impl TriadCensus {
    pub fn add(&mut self, kind: TriadKind) {
        match kind {
            TriadKind::Clique => self.clique += 1,
            TriadKind::LoveTriangle => self.love_triangle += 1,
            TriadKind::CommonEnemy => self.common_enemy += 1,
            TriadKind::MexicanStandoff => self.mexican_standoff += 1,
        }
    }

    pub fn counts(&self) -> [usize; 4] {
        [
            self.clique,
            self.love_triangle,
            self.common_enemy,
            self.mexican_standoff,
        ]
    }

    pub fn as_features(&self) -> [f64; 4] {
        self.counts().map(|c| c as f64)
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }
}

/// All triangles of `doc` as edge-index triples, ordered by character triple.
pub fn enumerate_triangles(doc: &Document) -> Vec<[usize; 3]> {
    doc.triangles().iter().map(|t| t.edges).collect()
}

pub fn triad_census(doc: &Document, y: &Assignment) -> Result<TriadCensus> {
    y.check(doc)?;
    Ok(census_unchecked(doc, y.labels()))
}

pub(crate) fn census_unchecked(doc: &Document, labels: &[Label]) -> TriadCensus {
    let mut census = TriadCensus::default();
    for t in doc.triangles() {
        census.add(TriadKind::from_labels(t.edges.map(|e| labels[e])));
    }
    census
}

/// The joint feature vector: `sum_e y_e * phi(x_e)` followed by the triad census.
pub fn joint_features(doc: &Document, y: &Assignment) -> Result<Vec<f64>> {
    y.check(doc)?;
    let d = doc.feature_dim();
    let mut phi = vec![0.0; d + 4];
    for (e, &l) in doc.edges().iter().zip(y.labels()) {
        if e.features.len() != d {
            return Err(Error::dim("edge features", d, e.features.len()));
        }
        let s = l.sign();
        for (p, v) in phi.iter_mut().zip(&e.features) {
            *p += s * v;
        }
    }
    phi[d..].copy_from_slice(&census_unchecked(doc, y.labels()).as_features());
    Ok(phi)
}

/// Groups edges that are linked through chains of shared triangles.
///
/// Components are returned with ascending edge indices and ordered by their
/// smallest edge. Edges in no triangle form singleton components.
pub fn triangle_components(doc: &Document) -> Vec<Vec<usize>> {
    let n = doc.num_edges();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for t in doc.triangles() {
        let [e0, e1, e2] = t.edges;
        for e in [e1, e2] {
            let (ra, rb) = (root(&mut parent, e0), root(&mut parent, e));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for e in 0..n {
        let r = root(&mut parent, e);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(e);
    }
    groups
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Builds a document from `(a, b, features)` triples; characters are
    /// inferred from the endpoints.
    pub fn doc_from(edges: &[(&str, &str, Vec<f64>)]) -> Document {
        let mut chars: Vec<String> = edges
            .iter()
            .flat_map(|(a, b, _)| [a.to_string(), b.to_string()])
            .collect();
        chars.sort();
        chars.dedup();
        let edges = edges
            .iter()
            .map(|(a, b, f)| Edge::new(*a, *b, f.clone()))
            .collect();
        Document::new("t", chars, edges, vec![]).unwrap()
    }

    pub fn complete(n: usize, d: usize) -> Document {
        let names: Vec<String> = (0..n).map(|i| format!("c{i:02}")).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push(Edge::new(names[i].clone(), names[j].clone(), vec![0.0; d]));
            }
        }
        Document::new("k", names, edges, vec![]).unwrap()
    }
}
