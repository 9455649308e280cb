use std::collections::HashMap;

use super::{Capabilities, Direction, TagBatch, Tagger, TaggerError, TrainPair, TrainReport};
use crate::ast::{parse_logical_form, LogicNode, RESERVED};
use crate::corpus::strip_table;

/// Memorizes input → target pairs and answers lookups exactly.
///
/// A replay tagger may be preloaded with a fixed memory; the pairs of the
/// most recent [`Tagger::train`] call take precedence over it. Unknown
/// inputs yield an empty output and count as a failure.
#[derive(Debug, Clone)]
pub struct ReplayTagger {
    direction: Direction,
    preload: HashMap<String, String>,
    trained: HashMap<String, String>,
}

impl ReplayTagger {
    pub fn new(direction: Direction) -> Self {
        ReplayTagger { direction, preload: HashMap::new(), trained: HashMap::new() }
    }

    pub fn with_memory(direction: Direction, memory: impl IntoIterator<Item = TrainPair>) -> Self {
        let preload = memory.into_iter().map(|p| (p.input, p.target)).collect();
        ReplayTagger { direction, preload, trained: HashMap::new() }
    }

    pub fn lookup(&self, input: &str) -> Option<&str> {
        self.trained.get(input).or_else(|| self.preload.get(input)).map(String::as_str)
    }
}

impl Tagger for ReplayTagger {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { trainable: true, deterministic: true }
    }

    fn train(&mut self, pairs: &[TrainPair]) -> Result<TrainReport, TaggerError> {
        if pairs.is_empty() {
            return Err(TaggerError::EmptyTrainingSet);
        }
        self.trained = pairs.iter().map(|p| (p.input.clone(), p.target.clone())).collect();
        Ok(TrainReport { pairs: pairs.len(), loss: Some(0.0) })
    }

    fn tag(&mut self, inputs: &[String]) -> Result<TagBatch, TaggerError> {
        let mut failures = 0;
        let outputs = inputs
            .iter()
            .map(|i| match self.lookup(i) {
                Some(o) => o.to_string(),
                None => {
                    failures += 1;
                    String::new()
                }
            })
            .collect();
        Ok(TagBatch { inputs: inputs.to_vec(), outputs, failures })
    }

    fn reset(&mut self) -> Result<(), TaggerError> {
        self.trained.clear();
        Ok(())
    }
}

/// Echoes every input.
#[derive(Debug, Clone, Copy)]
pub struct IdentityTagger {
    direction: Direction,
}

impl IdentityTagger {
    pub fn new(direction: Direction) -> Self {
        IdentityTagger { direction }
    }
}

impl Tagger for IdentityTagger {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { trainable: false, deterministic: true }
    }

    fn train(&mut self, _pairs: &[TrainPair]) -> Result<TrainReport, TaggerError> {
        Err(TaggerError::NotTrainable("identity"))
    }

    fn tag(&mut self, inputs: &[String]) -> Result<TagBatch, TaggerError> {
        Ok(TagBatch { inputs: inputs.to_vec(), outputs: inputs.to_vec(), failures: 0 })
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "by", "with", "and", "or", "is", "are",
    "was", "were", "be", "been", "has", "had", "have", "it", "its", "as", "that", "this", "than",
    "from", "all", "there", "their", "which", "who",
];

/// Content-bearing tokens of a text in first-occurrence order: lowercased,
/// edge punctuation trimmed, stopwords and reserved characters dropped.
pub(crate) fn salient_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in text.split_whitespace() {
        let t = w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if t.is_empty() || t.contains(RESERVED) || STOPWORDS.contains(&t.as_str()) {
            continue;
        }
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Fixed-shape transducer.
///
/// In the text-to-logic direction it always emits `root { t1 ; ... ; tn }`
/// with `n` the root's arity and leaves copied from the first salient input
/// tokens (padded with `all_rows`). In the logic-to-text direction it emits
/// the leaf texts of the parsed form joined by spaces.
#[derive(Debug, Clone)]
pub struct TemplateTagger {
    direction: Direction,
    root: String,
    arity: usize,
}

impl TemplateTagger {
    pub fn text_to_logic(root: impl Into<String>, arity: usize) -> Self {
        TemplateTagger { direction: Direction::TextToLogic, root: root.into(), arity: arity.max(1) }
    }

    pub fn logic_to_text() -> Self {
        TemplateTagger { direction: Direction::LogicToText, root: String::new(), arity: 1 }
    }

    fn to_logic(&self, input: &str) -> String {
        let mut leaves: Vec<LogicNode> = salient_tokens(strip_table(input))
            .into_iter()
            .take(self.arity)
            .map(LogicNode::Leaf)
            .collect();
        while leaves.len() < self.arity {
            leaves.push(LogicNode::leaf("all_rows"));
        }
        LogicNode::function(self.root.clone(), leaves).linearize()
    }

    fn to_text(input: &str) -> Option<String> {
        let tree = parse_logical_form(strip_table(input)).ok()?;
        let mut words = Vec::new();
        tree.visit(&mut |n| {
            if let LogicNode::Leaf(t) = n {
                words.push(t.as_str());
            }
        });
        Some(words.join(" "))
    }
}

impl Tagger for TemplateTagger {
    fn name(&self) -> &'static str {
        "template"
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { trainable: false, deterministic: true }
    }

    fn train(&mut self, _pairs: &[TrainPair]) -> Result<TrainReport, TaggerError> {
        Err(TaggerError::NotTrainable("template"))
    }

    fn tag(&mut self, inputs: &[String]) -> Result<TagBatch, TaggerError> {
        let mut failures = 0;
        let outputs = inputs
            .iter()
            .map(|i| match self.direction {
                Direction::TextToLogic => self.to_logic(i),
                Direction::LogicToText => Self::to_text(i).unwrap_or_else(|| {
                    failures += 1;
                    String::new()
                }),
            })
            .collect();
        Ok(TagBatch { inputs: inputs.to_vec(), outputs, failures })
    }
}
