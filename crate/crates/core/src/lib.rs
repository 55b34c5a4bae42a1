//! Joint classification of signed character relationships in narratives.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod features;
pub mod graph;
pub mod logistic;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod perceptron;
pub mod persist;
pub mod synth;

pub use error::{Error, Result};
