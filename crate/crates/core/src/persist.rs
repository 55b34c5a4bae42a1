//! Model files: a single JSON object with a version, the model kind, an echo
//! of the training configuration, metadata, and the parameters. Floats are
//! written in shortest round-trip form, so weights survive exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decode::{decode, DecodeConfig, Decoded};
use crate::error::{Error, Result};
use crate::graph::{Assignment, Document};
use crate::logistic::{predict_lr, LrModel};
use crate::mixture::ClusteredModel;
use crate::model::FlatModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Lr(LrModel),
    Spr(FlatModel),
    Mixture(ClusteredModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Lr(_) => "lr",
            Model::Spr(_) => "spr",
            Model::Mixture(_) => "mixture",
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Lr(m) => &m.feature_names,
            Model::Spr(m) => &m.feature_names,
            Model::Mixture(m) => &m.feature_names,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Lr(m) => m.dim(),
            Model::Spr(m) => m.dim(),
            Model::Mixture(m) => m.dim(),
        }
    }

    /// Labels every edge of a document. LR labels edges independently and
    /// never reports a cluster.
    pub fn predict(&self, doc: &Document, cfg: &DecodeConfig) -> Result<Prediction> {
        if doc.feature_dim() != self.dim() {
            return Err(Error::dim(format!("features of `{}`", doc.id()), self.dim(), doc.feature_dim()));
        }
        match self {
            Model::Lr(m) => {
                let mut labels = Vec::with_capacity(doc.num_edges());
                let mut probs = Vec::with_capacity(doc.num_edges());
                for e in doc.edges() {
                    let (l, p) = predict_lr(m, &e.features)?;
                    labels.push(l);
                    probs.push(p);
                }
                Ok(Prediction {
                    assignment: Assignment::new(labels),
                    probabilities: Some(probs),
                    decoded: None,
                    cluster: None,
                })
            }
            Model::Spr(m) => {
                let d = decode(m, doc, cfg)?;
                Ok(Prediction {
                    assignment: d.assignment.clone(),
                    probabilities: None,
                    decoded: Some(d),
                    cluster: None,
                })
            }
            Model::Mixture(m) => {
                let (k, d) = m.decode(doc, cfg)?;
                Ok(Prediction {
                    assignment: d.assignment.clone(),
                    probabilities: None,
                    decoded: Some(d),
                    cluster: Some(k),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub assignment: Assignment,
    pub probabilities: Option<Vec<f64>>,
    pub decoded: Option<Decoded>,
    pub cluster: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub kind: String,
    pub config: Value,
    pub metadata: Value,
    pub model: Value,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Model(e.to_string()))
}

fn from_value<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Model(e.to_string()))
}

pub fn write_model(model: &Model, config: Value, metadata: Value, writer: impl Write) -> Result<()> {
    let model_value = match model {
        Model::Lr(m) => to_value(m)?,
        Model::Spr(m) => to_value(m)?,
        Model::Mixture(m) => to_value(m)?,
    };
    let file = ModelFile {
        version: FORMAT_VERSION,
        kind: model.kind().to_string(),
        config,
        metadata,
        model: model_value,
    };
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| Error::Model(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model(reader: impl Read) -> Result<(Model, ModelFile)> {
    let mut file: ModelFile =
        serde_json::from_reader(BufReader::new(reader)).map_err(|e| Error::Model(format!("corrupt model file: {e}")))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let params = std::mem::take(&mut file.model);
    let model = match file.kind.as_str() {
        "lr" => {
            let m: LrModel = from_value(params)?;
            if m.feature_names.len() != m.dim() || m.standardization.dim() != m.dim() {
                return Err(Error::Model("inconsistent LR dimensions".into()));
            }
            Model::Lr(m)
        }
        "spr" => {
            let m: FlatModel = from_value(params)?;
            FlatModel::new(m.text_weights, m.struct_weights, m.feature_names, m.standardization)
                .map(Model::Spr)
                .map_err(|e| Error::Model(e.to_string()))?
        }
        "mixture" => {
            let m: ClusteredModel = from_value(params)?;
            m.validate().map_err(|e| Error::Model(e.to_string()))?;
            Model::Mixture(m)
        }
        other => return Err(Error::Model(format!("unknown model kind {other:?}"))),
    };
    Ok((model, file))
}

pub fn save_model(model: &Model, config: Value, metadata: Value, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, config, metadata, File::create(path)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, ModelFile)> {
    read_model(File::open(path)?)
}
