//! Dataset records, table linearization, model inputs, few-shot splits,
//! depth buckets and corpus statistics.
//!
//! Records are stored one JSON object per line:
//!
//! ```text
//! {"id":"train-00000","caption":"medals","headers":["nation","gold"],
//!  "rows":[["canada","3"]],"logic":"eq { count { all_rows } ; 1 }","text":"..."}
//! ```
//!
//! Unlabeled pool records are the same without `logic`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::{parse_logical_form, ParseError};
use crate::schema::LogicType;

/// Literal placed between the logical form and the linearized table.
pub const SEPARATOR: &str = "<sep>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("cannot sample {requested} items from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid depth thresholds `{0}` (expected `easy_max,middle_max`)")]
    BadThresholds(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TableContext {
    pub caption: String,
    #[serde(default)]
    pub headers: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<String>>,
}

impl TableContext {
    pub fn new(caption: impl Into<String>, headers: Vec<String>) -> Self {
        TableContext { caption: caption.into(), headers, rows: Vec::new() }
    }

    fn validate(&self) -> Result<(), String> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.headers.len() {
                return Err(format!(
                    "row {} has {} cells but the table has {} headers",
                    i + 1,
                    row.len(),
                    self.headers.len()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Gold,
    Pseudo,
}

fn is_gold(p: &Provenance) -> bool {
    *p == Provenance::Gold
}

/// One (logical form, table, text) training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub id: String,
    #[serde(flatten)]
    pub table: TableContext,
    pub logic: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "is_gold")]
    pub provenance: Provenance,
    /// Content score at selection time; pseudo pairs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Annotated logic type, when the source dataset provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_type: Option<LogicType>,
}

impl ParallelPair {
    pub fn gold(id: impl Into<String>, table: TableContext, logic: impl Into<String>, text: impl Into<String>) -> Self {
        ParallelPair {
            id: id.into(),
            table,
            logic: logic.into(),
            text: text.into(),
            provenance: Provenance::Gold,
            score: None,
            logic_type: None,
        }
    }

    pub fn to_unlabeled(&self) -> UnlabeledItem {
        UnlabeledItem { id: self.id.clone(), table: self.table.clone(), text: self.text.clone() }
    }
}

/// An unlabeled text with its table context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledItem {
    pub id: String,
    #[serde(flatten)]
    pub table: TableContext,
    pub text: String,
}

/// Per-line validation applied by [`read_records`].
pub trait Record: DeserializeOwned {
    fn check(&self) -> Result<(), String>;
}

impl Record for ParallelPair {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        match (self.provenance, self.score) {
            (Provenance::Gold, Some(_)) => return Err("gold pair carries a score".into()),
            (Provenance::Pseudo, None) => return Err("pseudo pair without a score".into()),
            _ => {}
        }
        self.table.validate()
    }
}

impl Record for UnlabeledItem {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        self.table.validate()
    }
}

/// A record that failed to parse or validate, by 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub skipped: Vec<SkippedRecord>,
}

/// Read line-delimited records, skipping blank lines. Malformed records are
/// reported and skipped; a file with no valid record is a format error.
pub fn read_records<T: Record>(path: impl AsRef<Path>) -> Result<(Vec<T>, LoadStats), CorpusError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::FileNotFound(shown.clone()),
        _ => CorpusError::Io(e),
    })?;
    let mut out = Vec::new();
    let mut stats = LoadStats::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r));
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => stats.skipped.push(SkippedRecord { line: i + 1, message }),
        }
    }
    if out.is_empty() {
        return Err(CorpusError::Format { path: shown, message: "no valid records".into() });
    }
    stats.loaded = out.len();
    Ok((out, stats))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Vec<ParallelPair>, LoadStats), CorpusError> {
    let (pairs, stats): (Vec<ParallelPair>, _) = read_records(&path)?;
    ensure_unique_ids(path.as_ref(), pairs.iter().map(|p| p.id.as_str()))?;
    Ok((pairs, stats))
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<(Vec<UnlabeledItem>, LoadStats), CorpusError> {
    let (items, stats): (Vec<UnlabeledItem>, _) = read_records(&path)?;
    ensure_unique_ids(path.as_ref(), items.iter().map(|p| p.id.as_str()))?;
    Ok((items, stats))
}

fn ensure_unique_ids<'a>(path: &Path, ids: impl Iterator<Item = &'a str>) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::Format {
                path: path.display().to_string(),
                message: format!("duplicate id `{id}`"),
            });
        }
    }
    Ok(())
}

/// Write records one per line.
pub fn write_records<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), CorpusError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn push_cells(out: &mut String, cells: &[String]) {
    for (i, c) in cells.iter().enumerate() {
        if i > 0 {
            out.push_str(" |");
        }
        for w in c.split_whitespace() {
            out.push(' ');
            out.push_str(w);
        }
    }
    out.push_str(" .");
}

/// Flatten a table into
/// `caption : <c> . header : <h1> | <h2> . [row <k> : <v1> | <v2> .]`.
pub fn linearize_table(table: &TableContext, include_rows: bool) -> String {
    let mut out = String::from("caption :");
    push_cells(&mut out, std::slice::from_ref(&table.caption));
    out.push_str(" header :");
    push_cells(&mut out, &table.headers);
    if include_rows {
        for (k, row) in table.rows.iter().enumerate() {
            out.push_str(&format!(" row {} :", k + 1));
            push_cells(&mut out, row);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InputConfig {
    pub include_rows: bool,
}

fn join_with_table(head: &str, table: &TableContext, cfg: &InputConfig) -> String {
    format!("{} {SEPARATOR} {}", head.split_whitespace().collect::<Vec<_>>().join(" "), linearize_table(table, cfg.include_rows))
}

/// Logic-to-text model input: logical form, separator, linearized table.
pub fn build_input_sequence(logic: &str, table: &TableContext, cfg: &InputConfig) -> String {
    join_with_table(logic, table, cfg)
}

/// Text-to-logic model input: the text in place of the logical form.
pub fn build_text_input(text: &str, table: &TableContext, cfg: &InputConfig) -> String {
    join_with_table(text, table, cfg)
}

/// Drop the table segment of a model input, if present.
pub fn strip_table(input: &str) -> &str {
    match input.find(SEPARATOR) {
        Some(i) => input[..i].trim_end(),
        None => input,
    }
}

/// Uniformly sample `n` gold pairs without replacement; the rest become the
/// unlabeled pool. Both keep the input order.
pub fn sample_few_shot(
    pairs: &[ParallelPair],
    n: usize,
    seed: u64,
) -> Result<(Vec<ParallelPair>, Vec<UnlabeledItem>), CorpusError> {
    if n > pairs.len() {
        return Err(CorpusError::SampleTooLarge { requested: n, available: pairs.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: BTreeSet<usize> = rand::seq::index::sample(&mut rng, pairs.len(), n).into_iter().collect();
    let mut train = Vec::with_capacity(n);
    let mut pool = Vec::with_capacity(pairs.len() - n);
    for (i, p) in pairs.iter().enumerate() {
        if picked.contains(&i) {
            train.push(p.clone());
        } else {
            pool.push(p.to_unlabeled());
        }
    }
    Ok((train, pool))
}

/// SHA-256 over the train ids then the pool ids (one per line, in order),
/// identifying a split independently of record contents.
pub fn split_digest(train: &[ParallelPair], pool: &[UnlabeledItem]) -> String {
    let mut h = Sha256::new();
    for (tag, ids) in [("train", train.iter().map(|p| p.id.as_str()).collect::<Vec<_>>()), ("pool", pool.iter().map(|u| u.id.as_str()).collect())] {
        h.update(tag.as_bytes());
        h.update(b"\n");
        for id in ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Inclusive upper depths of the easy and middle buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthThresholds {
    pub easy_max: usize,
    pub middle_max: usize,
}

impl Default for DepthThresholds {
    fn default() -> Self {
        DepthThresholds { easy_max: 1, middle_max: 2 }
    }
}

impl FromStr for DepthThresholds {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadThresholds(s.to_string());
        let (e, m) = s.split_once(',').ok_or_else(bad)?;
        let easy_max = e.trim().parse().map_err(|_| bad())?;
        let middle_max = m.trim().parse().map_err(|_| bad())?;
        Ok(DepthThresholds { easy_max, middle_max })
    }
}

impl fmt::Display for DepthThresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.easy_max, self.middle_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Middle,
    Hard,
}

impl DepthThresholds {
    pub fn classify(&self, depth: usize) -> Difficulty {
        if depth <= self.easy_max {
            Difficulty::Easy
        } else if depth <= self.middle_max {
            Difficulty::Middle
        } else {
            Difficulty::Hard
        }
    }

    /// Difficulty of a raw logical form; unparseable forms are hard.
    pub fn classify_form(&self, logic: &str) -> Difficulty {
        parse_logical_form(logic).map(|t| self.classify(t.depth())).unwrap_or(Difficulty::Hard)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Buckets {
    pub easy: Vec<String>,
    pub middle: Vec<String>,
    pub hard: Vec<String>,
    /// Records whose logic failed to parse; their ids are also in `hard`.
    pub errors: Vec<(String, ParseError)>,
}

impl Buckets {
    pub fn counts(&self) -> [usize; 3] {
        [self.easy.len(), self.middle.len(), self.hard.len()]
    }
}

pub fn bucket_by_depth(pairs: &[ParallelPair], thresholds: DepthThresholds) -> Buckets {
    let mut b = Buckets::default();
    for p in pairs {
        match parse_logical_form(&p.logic) {
            Ok(t) => match thresholds.classify(t.depth()) {
                Difficulty::Easy => b.easy.push(p.id.clone()),
                Difficulty::Middle => b.middle.push(p.id.clone()),
                Difficulty::Hard => b.hard.push(p.id.clone()),
            },
            Err(e) => {
                b.hard.push(p.id.clone());
                b.errors.push((p.id.clone(), e));
            }
        }
    }
    b
}

/// Depth of every record's form; `None` where it does not parse.
pub fn form_depths(pairs: &[ParallelPair]) -> Vec<Option<usize>> {
    pairs.iter().map(|p| parse_logical_form(&p.logic).ok().map(|t| t.depth())).collect()
}

/// Thresholds whose bucket sizes are closest (L1) to `target`, searching
/// `0 <= easy_max <= middle_max <= max depth`. `None` depths count as hard,
/// as in [`bucket_by_depth`]. Ties keep the smallest pair.
pub fn calibrate_thresholds(depths: &[Option<usize>], target: [usize; 3]) -> (DepthThresholds, usize) {
    let max_depth = depths.iter().flatten().copied().max().unwrap_or(0);
    let mut best = (DepthThresholds::default(), usize::MAX);
    for easy_max in 0..=max_depth {
        for middle_max in easy_max..=max_depth {
            let th = DepthThresholds { easy_max, middle_max };
            let mut counts = [0usize; 3];
            for d in depths {
                let bucket = d.map_or(Difficulty::Hard, |d| th.classify(d));
                counts[bucket as usize] += 1;
            }
            let dev = counts.iter().zip(target).map(|(c, t)| c.abs_diff(t)).sum();
            if dev < best.1 {
                best = (th, dev);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub tables: usize,
    pub examples: usize,
    pub vocabulary: usize,
    pub avg_description_length: f64,
    pub avg_nodes: f64,
    pub avg_function_nodes: f64,
    pub avg_linearized_length: f64,
    /// Examples whose logical form did not parse; excluded from node averages.
    pub unparseable: usize,
}

pub fn dataset_stats(pairs: &[ParallelPair]) -> DatasetStats {
    let mut tables = HashSet::new();
    let mut vocab = HashSet::new();
    let mut desc_tokens = 0usize;
    let (mut nodes, mut functions, mut lin_tokens, mut parsed) = (0usize, 0usize, 0usize, 0usize);
    for p in pairs {
        tables.insert(&p.table);
        for w in p.text.split_whitespace() {
            desc_tokens += 1;
            vocab.insert(w.to_lowercase());
        }
        if let Ok(t) = parse_logical_form(&p.logic) {
            let c = t.node_counts();
            nodes += c.total;
            functions += c.functions;
            lin_tokens += t.linearize().split_whitespace().count();
            parsed += 1;
        }
    }
    let mean = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    DatasetStats {
        tables: tables.len(),
        examples: pairs.len(),
        vocabulary: vocab.len(),
        avg_description_length: mean(desc_tokens, pairs.len()),
        avg_nodes: mean(nodes, parsed),
        avg_function_nodes: mean(functions, parsed),
        avg_linearized_length: mean(lin_tokens, parsed),
        unparseable: pairs.len() - parsed,
    }
}

/// Record layout of the published Logic2Text JSON files.
#[derive(Debug, Deserialize)]
struct Logic2TextRecord {
    topic: String,
    #[serde(default)]
    table_header: Vec<String>,
    #[serde(default)]
    table_cont: Vec<Vec<String>>,
    logic_str: String,
    sent: String,
    #[serde(default)]
    action: Option<String>,
}

/// Remove the `= true` assertion suffix carried by published logic strings.
pub fn strip_truth_suffix(logic: &str) -> &str {
    let t = logic.trim_end();
    t.strip_suffix("= true").map(str::trim_end).unwrap_or(t)
}

/// Convert a published Logic2Text split (a JSON array) into dataset records
/// with ids `<prefix>-<index>`.
pub fn convert_logic2text(json: &str, prefix: &str) -> Result<Vec<ParallelPair>, serde_json::Error> {
    let raw: Vec<Logic2TextRecord> = serde_json::from_str(json)?;
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| ParallelPair {
            id: format!("{prefix}-{i:05}"),
            table: TableContext { caption: r.topic, headers: r.table_header, rows: r.table_cont },
            logic: strip_truth_suffix(&r.logic_str).to_string(),
            text: r.sent,
            provenance: Provenance::Gold,
            score: None,
            logic_type: r.action.and_then(|a| a.parse().ok()),
        })
        .collect())
}
