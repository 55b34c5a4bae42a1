//! Aggregation of sentence-level cue records into per-pair feature vectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Document, Edge, Label};

/// Cues that only fire on or off; their mean carries no extra information.
pub const BINARY_CUES: [&str; 5] = [
    "are_team",
    "relation_keyword",
    "frame_positive",
    "frame_negative",
    "frame_relationship",
];

pub const CHARACTER_SIMILARITY: &str = "character_similarity";

pub fn is_binary_cue(name: &str) -> bool {
    BINARY_CUES.contains(&name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Mean,
    Max,
    Sum,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Max => "max",
            Aggregator::Sum => "sum",
        }
    }

    fn parse(s: &str) -> Option<Aggregator> {
        match s {
            "mean" => Some(Aggregator::Mean),
            "max" => Some(Aggregator::Max),
            "sum" => Some(Aggregator::Sum),
            _ => None,
        }
    }

    pub fn for_cue(name: &str) -> &'static [Aggregator] {
        if is_binary_cue(name) {
            &[Aggregator::Max, Aggregator::Sum]
        } else {
            &[Aggregator::Mean, Aggregator::Max, Aggregator::Sum]
        }
    }
}

/// One occurrence of a cue in one sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueRecord {
    pub name: String,
    pub value: f64,
}

impl CueRecord {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        CueRecord {
            name: name.into(),
            value,
        }
    }
}

/// Document-level cues for a pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairCue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character_similarity: Option<f64>,
}

/// All evidence about one character pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairEvidence {
    pub records: Vec<CueRecord>,
    pub pair_cues: PairCue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CueEdge {
    pub a: String,
    pub b: String,
    pub gold: Option<Label>,
    pub evidence: PairEvidence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CueDocument {
    pub id: String,
    pub characters: Vec<String>,
    pub descriptor: Option<Vec<f64>>,
    pub edges: Vec<CueEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Cue(String, Aggregator),
    Similarity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVocabulary {
    slots: Vec<Slot>,
    index: BTreeMap<String, Vec<(Aggregator, usize)>>,
    similarity: Option<usize>,
}

impl FeatureVocabulary {
    fn from_slots(slots: Vec<Slot>) -> Result<Self> {
        let mut index: BTreeMap<String, Vec<(Aggregator, usize)>> = BTreeMap::new();
        let mut similarity = None;
        for (i, s) in slots.iter().enumerate() {
            match s {
                Slot::Cue(c, a) => {
                    let e = index.entry(c.clone()).or_default();
                    if e.iter().any(|(x, _)| x == a) {
                        return Err(Error::Vocabulary(format!("duplicate feature {c}:{}", a.name())));
                    }
                    e.push((*a, i));
                }
                Slot::Similarity => {
                    if similarity.replace(i).is_some() {
                        return Err(Error::Vocabulary(format!("duplicate feature {CHARACTER_SIMILARITY}")));
                    }
                }
            }
        }
        Ok(FeatureVocabulary {
            slots,
            index,
            similarity,
        })
    }

    /// Rebuilds a vocabulary from its names, e.g. as stored with a model.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let slots = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                if n == CHARACTER_SIMILARITY {
                    return Ok(Slot::Similarity);
                }
                n.rsplit_once(':')
                    .and_then(|(c, a)| Some(Slot::Cue(c.to_string(), Aggregator::parse(a)?)))
                    .ok_or_else(|| Error::Vocabulary(format!("malformed feature name {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_slots(slots)
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Cue(c, a) => format!("{c}:{}", a.name()),
                Slot::Similarity => CHARACTER_SIMILARITY.to_string(),
            })
            .collect()
    }
}

/// Vocabulary over every cue seen in the corpus: cue names in sorted order,
/// each with its aggregators, and the document-level similarity last if any
/// pair supplies it.
pub fn build_vocabulary(corpus: &[CueDocument]) -> Result<FeatureVocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut cues = BTreeSet::new();
    let mut similarity = false;
    for e in corpus.iter().flat_map(|d| &d.edges) {
        cues.extend(e.evidence.records.iter().map(|r| r.name.as_str()));
        similarity |= e.evidence.pair_cues.character_similarity.is_some();
    }
    let mut slots: Vec<Slot> = cues
        .into_iter()
        .flat_map(|c| Aggregator::for_cue(c).iter().map(move |&a| Slot::Cue(c.to_string(), a)))
        .collect();
    if similarity {
        slots.push(Slot::Similarity);
    }
    FeatureVocabulary::from_slots(slots)
}

pub fn aggregate_pair_features(evidence: &PairEvidence, vocab: &FeatureVocabulary) -> Result<Vec<f64>> {
    // (sum, max, count) per cue
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in &evidence.records {
        if !vocab.index.contains_key(&r.name) {
            return Err(Error::Vocabulary(format!("unknown cue {:?}", r.name)));
        }
        if !r.value.is_finite() {
            return Err(Error::Vocabulary(format!("non-finite value for cue {:?}", r.name)));
        }
        let e = acc.entry(&r.name).or_insert((0.0, f64::NEG_INFINITY, 0));
        e.0 += r.value;
        e.1 = e.1.max(r.value);
        e.2 += 1;
    }
    let mut out = vec![0.0; vocab.dim()];
    for (cue, (sum, max, n)) in acc {
        for &(agg, i) in &vocab.index[cue] {
            out[i] = match agg {
                Aggregator::Mean => sum / n as f64,
                Aggregator::Max => max,
                Aggregator::Sum => sum,
            };
        }
    }
    if let Some(s) = evidence.pair_cues.character_similarity {
        if !s.is_finite() {
            return Err(Error::Vocabulary(format!("non-finite {CHARACTER_SIMILARITY}")));
        }
        let i = vocab
            .similarity
            .ok_or_else(|| Error::Vocabulary(format!("{CHARACTER_SIMILARITY} is not in the vocabulary")))?;
        out[i] = s;
    }
    Ok(out)
}

impl CueDocument {
    /// Aggregates every edge and builds a validated document. The descriptor
    /// defaults to the mean of the aggregated edge vectors.
    pub fn to_document(&self, vocab: &FeatureVocabulary) -> Result<Document> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let mut edge = Edge::new(e.a.clone(), e.b.clone(), aggregate_pair_features(&e.evidence, vocab)?);
                edge.gold = e.gold;
                Ok(edge)
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = Document::new(self.id.clone(), self.characters.clone(), edges, Vec::new())?
            .with_feature_dim(vocab.dim())?;
        let descriptor = match &self.descriptor {
            Some(f) => f.clone(),
            None => doc.mean_edge_features(),
        };
        Ok(doc.with_descriptor(descriptor))
    }
}
