//! Line-delimited JSON corpora: one document per line.
//!
//! Each edge carries either a dense `features` vector or a list of `cues`
//! (with optional `pair_cues`); a corpus uses one form throughout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_vocabulary, CueDocument, CueEdge, CueRecord, FeatureVocabulary, PairCue, PairEvidence};
use crate::graph::{Document, Edge, Label};
use crate::model::default_feature_names;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cues: Option<Vec<CueRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_cues: Option<PairCue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    pub characters: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Vec<f64>>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Dense,
    Cues,
}

impl EdgeRecord {
    fn form(&self) -> std::result::Result<Form, String> {
        match (&self.features, &self.cues) {
            (Some(_), None) if self.pair_cues.is_none() => Ok(Form::Dense),
            (None, Some(_)) => Ok(Form::Cues),
            (Some(_), _) => Err(format!("edge ({}, {}) mixes features with cues", self.a, self.b)),
            (None, None) => Err(format!("edge ({}, {}) has neither features nor cues", self.a, self.b)),
        }
    }
}

/// A parsed corpus with its feature names, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub feature_names: Vec<String>,
}

/// Reads raw records, reporting JSON errors with 1-based line numbers.
/// Blank lines are skipped.
pub fn read_records(reader: impl Read) -> Result<Vec<(usize, DocumentRecord)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Parses and validates a corpus. Cue corpora are aggregated with `vocab`
/// when given, otherwise with a vocabulary built from the corpus itself.
pub fn parse_corpus(reader: impl Read, vocab: Option<&FeatureVocabulary>) -> Result<Corpus> {
    let records = read_records(reader)?;
    let at = |line: usize| move |e: Error| Error::Parse { line, message: e.to_string() };
    let mut form = None;
    for (line, rec) in &records {
        for e in &rec.edges {
            let f = e.form().map_err(|message| Error::Parse { line: *line, message })?;
            if *form.get_or_insert(f) != f {
                return Err(Error::Parse {
                    line: *line,
                    message: "corpus mixes dense features and cue records".into(),
                });
            }
        }
    }

    if form == Some(Form::Cues) {
        let cue_docs: Vec<(usize, CueDocument)> = records
            .into_iter()
            .map(|(line, r)| {
                let edges = r
                    .edges
                    .into_iter()
                    .map(|e| CueEdge {
                        a: e.a,
                        b: e.b,
                        gold: e.gold,
                        evidence: PairEvidence {
                            records: e.cues.unwrap_or_default(),
                            pair_cues: e.pair_cues.unwrap_or_default(),
                        },
                    })
                    .collect();
                let doc = CueDocument {
                    id: r.id,
                    characters: r.characters,
                    descriptor: r.descriptor,
                    edges,
                };
                (line, doc)
            })
            .collect();
        let built;
        let vocab = match vocab {
            Some(v) => v,
            None => {
                let docs: Vec<CueDocument> = cue_docs.iter().map(|(_, d)| d.clone()).collect();
                built = build_vocabulary(&docs)?;
                &built
            }
        };
        let documents = cue_docs
            .iter()
            .map(|(line, d)| d.to_document(vocab).map_err(at(*line)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Corpus {
            documents,
            feature_names: vocab.names(),
        });
    }

    let d = match vocab {
        Some(v) => Some(v.dim()),
        None => records.iter().flat_map(|(_, r)| &r.edges).find_map(|e| e.features.as_ref().map(Vec::len)),
    };
    let d = d.unwrap_or(0);
    let documents = records
        .into_iter()
        .map(|(line, r)| {
            let edges = r
                .edges
                .into_iter()
                .map(|e| {
                    let mut edge = Edge::new(e.a, e.b, e.features.unwrap_or_default());
                    edge.gold = e.gold;
                    edge
                })
                .collect();
            let doc = Document::new(r.id, r.characters, edges, Vec::new())
                .and_then(|doc| doc.with_feature_dim(d))
                .map_err(at(line))?;
            let descriptor = r.descriptor.unwrap_or_else(|| doc.mean_edge_features());
            if descriptor.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line,
                    message: "descriptor values must be finite".into(),
                });
            }
            Ok(doc.with_descriptor(descriptor))
        })
        .collect::<Result<Vec<_>>>()?;
    let feature_names = match vocab {
        Some(v) => v.names(),
        None => default_feature_names(d),
    };
    Ok(Corpus {
        documents,
        feature_names,
    })
}

pub fn load_corpus(path: impl AsRef<Path>, vocab: Option<&FeatureVocabulary>) -> Result<Corpus> {
    parse_corpus(File::open(path)?, vocab)
}

pub fn document_record(doc: &Document) -> DocumentRecord {
    DocumentRecord {
        id: doc.id().to_string(),
        characters: doc.characters().to_vec(),
        descriptor: Some(doc.descriptor().to_vec()),
        edges: doc
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                a: e.a.clone(),
                b: e.b.clone(),
                gold: e.gold,
                features: Some(e.features.clone()),
                cues: None,
                pair_cues: None,
            })
            .collect(),
    }
}

/// Writes documents in the dense form, one line each.
pub fn write_corpus<'a>(docs: impl IntoIterator<Item = &'a Document>, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in docs {
        serde_json::to_writer(&mut w, &document_record(doc)).map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
