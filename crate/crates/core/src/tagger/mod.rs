//! Sequence transducers used as Text2Logic and Logic2Text taggers.
//!
//! The self-training loop only sees the [`Tagger`] trait. Built-in backends
//! are deterministic desk-scale stand-ins; [`external::ExternalTagger`]
//! drives a neural model in another process over a line-delimited JSON
//! protocol.

mod builtin;
pub mod external;
pub mod protocol;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{IdentityTagger, ReplayTagger, TemplateTagger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "text2logic")]
    TextToLogic,
    #[serde(rename = "logic2text")]
    LogicToText,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TextToLogic => "text2logic",
            Direction::LogicToText => "logic2text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub trainable: bool,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainPair {
    #[serde(rename = "in")]
    pub input: String,
    #[serde(rename = "out")]
    pub target: String,
}

impl TrainPair {
    pub fn new(input: impl Into<String>, target: impl Into<String>) -> Self {
        TrainPair { input: input.into(), target: target.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pairs: usize,
    /// Backend-defined loss summary; `None` for backends without one.
    pub loss: Option<f64>,
}

/// Tagging result: `outputs[i]` answers `inputs[i]`. Items the backend could
/// not tag come back as empty strings and are counted in `failures`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagBatch {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub failures: usize,
}

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("{0} backend is not trainable")]
    NotTrainable(&'static str),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("backend failure: {message}")]
    BackendFailure { message: String, diagnostics: String },
}

impl TaggerError {
    pub fn failure(message: impl Into<String>) -> Self {
        TaggerError::BackendFailure { message: message.into(), diagnostics: String::new() }
    }
}

pub trait Tagger: Send {
    fn name(&self) -> &'static str;

    fn direction(&self) -> Direction;

    fn capabilities(&self) -> Capabilities;

    /// Update backend state from `pairs`, continuing from the current state.
    fn train(&mut self, pairs: &[TrainPair]) -> Result<TrainReport, TaggerError>;

    fn tag(&mut self, inputs: &[String]) -> Result<TagBatch, TaggerError>;

    /// Return to the freshly constructed state.
    fn reset(&mut self) -> Result<(), TaggerError> {
        Ok(())
    }
}

/// Validate and forward a training call.
pub fn train(backend: &mut dyn Tagger, pairs: &[TrainPair]) -> Result<TrainReport, TaggerError> {
    if !backend.capabilities().trainable {
        return Err(TaggerError::NotTrainable(backend.name()));
    }
    if pairs.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }
    backend.train(pairs)
}

/// Forward a tagging call and check positional correspondence.
pub fn tag(backend: &mut dyn Tagger, inputs: &[String]) -> Result<TagBatch, TaggerError> {
    let batch = backend.tag(inputs)?;
    if batch.outputs.len() != inputs.len() {
        return Err(TaggerError::failure(format!(
            "{} returned {} outputs for {} inputs",
            backend.name(),
            batch.outputs.len(),
            inputs.len()
        )));
    }
    Ok(batch)
}
