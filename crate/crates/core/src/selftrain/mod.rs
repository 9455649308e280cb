//! The self-training loop with content and structure consistency.
//!
//! Each iteration trains both taggers on the current training set, tags
//! every remaining pool text with a pseudo logical form, reconstructs the
//! text from that form, and scores the pair:
//!
//! - content: [`content_score`] between the original and recovered text;
//! - structure: [`structure_verdict`] on the pseudo form.
//!
//! Among candidates whose form passes all three rules, the `k` best by
//! content score (ties by ascending id) move from the pool into the training
//! set as pseudo pairs `(pseudo form ⊕ table, original text)`. The loop ends
//! when the pool is empty, the iteration cap is hit, or (by default) no
//! candidate qualifies.

pub mod checkpoint;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{content_score, ConsistencyConfig, DEFAULT_BETA};
use crate::corpus::{
    build_input_sequence, build_text_input, strip_table, DepthThresholds, Difficulty, InputConfig,
    ParallelPair, Provenance, UnlabeledItem,
};
use crate::rules::{structure_verdict, StructureVerdict, DEFAULT_KAPPA};
use crate::schema::FunctionSchema;
use crate::tagger::{self, Tagger, TaggerError, TrainPair};

pub use checkpoint::{load_checkpoint, load_report, save_checkpoint, CheckpointError};

pub const DEFAULT_K: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub k: usize,
    pub kappa: f64,
    pub beta: f64,
    /// `None` resolves to `ceil(|pool| / k) + 2` at the start of a run.
    pub max_iterations: Option<usize>,
    pub shuffle_seed: u64,
    pub early_stop_if_no_qualified: bool,
    pub include_rows: bool,
    pub lowercase: bool,
    /// Buckets used to summarize the difficulty of selected forms.
    pub thresholds: DepthThresholds,
    /// Worker threads for scoring; does not affect results.
    #[serde(skip, default = "one")]
    pub jobs: usize,
    /// Check conservation and selection soundness after every iteration.
    #[serde(skip)]
    pub verify_invariants: bool,
}

fn one() -> usize {
    1
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            k: DEFAULT_K,
            kappa: DEFAULT_KAPPA,
            beta: DEFAULT_BETA,
            max_iterations: None,
            shuffle_seed: 0,
            early_stop_if_no_qualified: true,
            include_rows: false,
            lowercase: true,
            thresholds: DepthThresholds::default(),
            jobs: 1,
            verify_invariants: false,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<(), SelfTrainError> {
        let bad = |m: &str| Err(SelfTrainError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad("kappa must lie in [0, 1]");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be a positive finite number");
        }
        if self.max_iterations == Some(0) {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }

    pub fn consistency(&self) -> ConsistencyConfig {
        ConsistencyConfig { beta: self.beta, lowercase: self.lowercase, conventional: false }
    }

    fn input(&self) -> InputConfig {
        InputConfig { include_rows: self.include_rows }
    }
}

#[derive(Debug, Error)]
pub enum SelfTrainError {
    #[error(transparent)]
    Backend(#[from] TaggerError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invariant violated at iteration {iteration}: {message}")]
    Invariant { iteration: usize, message: String },
}

/// A scored round trip of one pool item.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub item: UnlabeledItem,
    pub pseudo_logic: String,
    pub recovered_text: String,
    pub content_score: f64,
    pub verdict: StructureVerdict,
    /// Either tagger produced no output for this item.
    pub tag_failed: bool,
    /// `verdict.overall_pass` and both taggers produced output.
    pub qualified: bool,
}

fn score_one(
    item: &UnlabeledItem,
    pseudo: String,
    recovered: String,
    schema: &FunctionSchema,
    cfg: &SelfTrainConfig,
) -> Candidate {
    let tag_failed = pseudo.trim().is_empty() || recovered.trim().is_empty();
    let verdict = structure_verdict(&pseudo, schema, cfg.kappa);
    let content_score = if tag_failed { 0.0 } else { content_score(&item.text, &recovered, &cfg.consistency()) };
    Candidate {
        item: item.clone(),
        qualified: verdict.overall_pass && !tag_failed,
        pseudo_logic: pseudo,
        recovered_text: recovered,
        content_score,
        verdict,
        tag_failed,
    }
}

/// Round trip a batch: `x̂ = t2l(u ⊕ table)`, `u' = l2t(x̂ ⊕ table)`, then
/// score. Tagger outputs are cut at the table separator.
pub fn round_trip_batch(
    items: &[UnlabeledItem],
    t2l: &mut dyn Tagger,
    l2t: &mut dyn Tagger,
    schema: &FunctionSchema,
    cfg: &SelfTrainConfig,
) -> Result<Vec<Candidate>, TaggerError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let input_cfg = cfg.input();
    let inputs: Vec<String> = items.iter().map(|u| build_text_input(&u.text, &u.table, &input_cfg)).collect();
    let pseudo: Vec<String> = tagger::tag(t2l, &inputs)?
        .outputs
        .into_iter()
        .map(|o| strip_table(&o).to_string())
        .collect();
    let back_inputs: Vec<String> = items
        .iter()
        .zip(&pseudo)
        .map(|(u, x)| build_input_sequence(x, &u.table, &input_cfg))
        .collect();
    let recovered: Vec<String> = tagger::tag(l2t, &back_inputs)?
        .outputs
        .into_iter()
        .map(|o| strip_table(&o).to_string())
        .collect();

    let jobs = cfg.jobs.max(1).min(items.len());
    let triples: Vec<(&UnlabeledItem, String, String)> =
        items.iter().zip(pseudo).zip(recovered).map(|((u, p), r)| (u, p, r)).collect();
    if jobs == 1 {
        return Ok(triples.into_iter().map(|(u, p, r)| score_one(u, p, r, schema, cfg)).collect());
    }
    let chunk = triples.len().div_ceil(jobs);
    let mut chunks: Vec<Vec<(&UnlabeledItem, String, String)>> = Vec::new();
    let mut it = triples.into_iter().peekable();
    while it.peek().is_some() {
        chunks.push(it.by_ref().take(chunk).collect());
    }
    let scored = thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|c| s.spawn(move || c.into_iter().map(|(u, p, r)| score_one(u, p, r, schema, cfg)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    Ok(scored)
}

pub fn round_trip(
    item: &UnlabeledItem,
    t2l: &mut dyn Tagger,
    l2t: &mut dyn Tagger,
    schema: &FunctionSchema,
    cfg: &SelfTrainConfig,
) -> Result<Candidate, TaggerError> {
    Ok(round_trip_batch(std::slice::from_ref(item), t2l, l2t, schema, cfg)?.remove(0))
}

/// Selection order: higher score first, then ascending id.
pub fn selection_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.content_score.total_cmp(&a.content_score).then_with(|| a.item.id.cmp(&b.item.id))
}

/// The `k` best qualified candidates in selection order.
pub fn select_top_k(candidates: &[Candidate], k: usize) -> Vec<&Candidate> {
    let mut q: Vec<&Candidate> = candidates.iter().filter(|c| c.qualified).collect();
    q.sort_by(|a, b| selection_order(a, b));
    q.truncate(k);
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub iteration: usize,
    pub id: String,
    pub content_score: f64,
    #[serde(flatten)]
    pub verdict: StructureVerdict,
    pub pseudo_logic: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PoolExhausted,
    MaxIterations,
    NoQualifiedCandidates,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::PoolExhausted => "pool exhausted",
            StopReason::MaxIterations => "iteration limit reached",
            StopReason::NoQualifiedCandidates => "no candidate qualified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Ten equal-width bins over `[0, 1]`, the last one closed.
    pub histogram: [usize; 10],
}

impl ScoreSummary {
    pub fn of(scores: impl IntoIterator<Item = f64>) -> Self {
        let mut s = ScoreSummary { min: f64::INFINITY, max: f64::NEG_INFINITY, ..Default::default() };
        let mut sum = 0.0;
        for x in scores {
            s.count += 1;
            sum += x;
            s.min = s.min.min(x);
            s.max = s.max.max(x);
            s.histogram[((x * 10.0).floor() as usize).min(9)] += 1;
        }
        if s.count == 0 {
            s.min = 0.0;
            s.max = 0.0;
        } else {
            s.mean = sum / s.count as f64;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    pub easy: usize,
    pub middle: usize,
    pub hard: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub train_before: usize,
    pub pool_before: usize,
    pub text2logic_loss: Option<f64>,
    pub logic2text_loss: Option<f64>,
    pub tag_failures: usize,
    pub qualified: usize,
    pub selected: usize,
    pub pool_after: usize,
    pub candidate_scores: ScoreSummary,
    pub selected_scores: ScoreSummary,
    pub selected_buckets: BucketCounts,
}

/// Everything needed to resume a run, given the original inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainState {
    /// Completed iterations.
    pub iteration: usize,
    pub config: SelfTrainConfig,
    pub gold_ids: Vec<String>,
    /// Gold then pseudo ids, in training-set order.
    pub train_ids: Vec<String>,
    /// Remaining pool ids in shuffled order.
    pub pool_ids: Vec<String>,
    pub pseudo_pairs: Vec<ParallelPair>,
    pub last_selection: Vec<SelectionRecord>,
    pub history: Vec<SelectionRecord>,
    pub iterations: Vec<IterationReport>,
    pub done: bool,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: SelfTrainConfig,
    pub initial_train: usize,
    pub initial_pool: usize,
    pub iterations: Vec<IterationReport>,
    pub final_train: usize,
    pub final_pool: usize,
    pub done: bool,
    pub stop_reason: Option<StopReason>,
}

impl SelfTrainState {
    pub fn report(&self) -> RunReport {
        RunReport {
            format_version: checkpoint::FORMAT_VERSION,
            config: self.config.clone(),
            initial_train: self.gold_ids.len(),
            initial_pool: self.pool_ids.len() + self.pseudo_pairs.len(),
            iterations: self.iterations.clone(),
            final_train: self.train_ids.len(),
            final_pool: self.pool_ids.len(),
            done: self.done,
            stop_reason: self.stop_reason,
        }
    }
}

/// Per-iteration view handed to the observer before the state commits.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub candidates: &'a [Candidate],
    pub selected: &'a [String],
    pub state: &'a SelfTrainState,
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Continue from the checkpoint when one exists.
    pub resume: bool,
    /// Return after this many iterations in this call, leaving the run
    /// resumable. Simulates an interruption.
    pub halt_after: Option<usize>,
    pub observer: Option<&'a mut dyn FnMut(&IterationView<'_>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: SelfTrainState,
    pub report: RunReport,
    /// Final training set: gold pairs then selected pseudo pairs.
    pub train_set: Vec<ParallelPair>,
}

fn check_universe(train: &[ParallelPair], pool: &[UnlabeledItem]) -> Result<BTreeSet<String>, SelfTrainError> {
    let mut universe = BTreeSet::new();
    for id in train.iter().map(|p| &p.id).chain(pool.iter().map(|u| &u.id)) {
        if !universe.insert(id.clone()) {
            return Err(SelfTrainError::InvalidConfig(format!("id `{id}` appears twice across train and pool")));
        }
    }
    Ok(universe)
}

fn fresh_state(train: &[ParallelPair], pool: &[UnlabeledItem], cfg: &SelfTrainConfig) -> SelfTrainState {
    let mut config = SelfTrainConfig { jobs: 1, verify_invariants: false, ..cfg.clone() };
    if config.max_iterations.is_none() {
        config.max_iterations = Some(pool.len().div_ceil(cfg.k) + 2);
    }
    let mut pool_ids: Vec<String> = pool.iter().map(|u| u.id.clone()).collect();
    pool_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.shuffle_seed));
    let gold_ids: Vec<String> = train.iter().map(|p| p.id.clone()).collect();
    SelfTrainState {
        iteration: 0,
        config,
        train_ids: gold_ids.clone(),
        gold_ids,
        pool_ids,
        pseudo_pairs: Vec::new(),
        last_selection: Vec::new(),
        history: Vec::new(),
        iterations: Vec::new(),
        done: false,
        stop_reason: None,
    }
}

fn verify(state: &SelfTrainState, universe: &BTreeSet<String>, candidates: &[Candidate], selected: &[String]) -> Result<(), String> {
    let train: BTreeSet<&String> = state.train_ids.iter().collect();
    let pool: BTreeSet<&String> = state.pool_ids.iter().collect();
    if train.len() != state.train_ids.len() || pool.len() != state.pool_ids.len() {
        return Err("duplicate ids in train or pool".into());
    }
    if train.intersection(&pool).next().is_some() {
        return Err("train and pool overlap".into());
    }
    let union: BTreeSet<&String> = train.union(&pool).copied().collect();
    if union != universe.iter().collect::<BTreeSet<_>>() {
        return Err("train ⊎ pool differs from the initial universe".into());
    }
    let chosen: BTreeSet<&String> = selected.iter().collect();
    let worst = candidates
        .iter()
        .filter(|c| chosen.contains(&c.item.id))
        .map(|c| c.content_score)
        .fold(f64::INFINITY, f64::min);
    for c in candidates {
        if chosen.contains(&c.item.id) && !c.verdict.overall_pass {
            return Err(format!("selected `{}` fails the structure rules", c.item.id));
        }
        if !chosen.contains(&c.item.id) && c.qualified && !selected.is_empty() && c.content_score > worst {
            return Err(format!("unselected `{}` outscores a selected candidate", c.item.id));
        }
    }
    Ok(())
}

/// Train a backend if it supports training; non-trainable backends are fixed.
fn maybe_train(backend: &mut dyn Tagger, pairs: &[TrainPair]) -> Result<Option<f64>, TaggerError> {
    if !backend.capabilities().trainable {
        return Ok(None);
    }
    Ok(tagger::train(backend, pairs)?.loss)
}

fn training_pairs(train: &[ParallelPair], input: &InputConfig) -> (Vec<TrainPair>, Vec<TrainPair>) {
    let to_logic = train
        .iter()
        .map(|p| TrainPair::new(build_text_input(&p.text, &p.table, input), p.logic.clone()))
        .collect();
    let to_text = train
        .iter()
        .map(|p| TrainPair::new(build_input_sequence(&p.logic, &p.table, input), p.text.clone()))
        .collect();
    (to_logic, to_text)
}

/// Run the loop to completion (or until `opts.halt_after`), checkpointing
/// after every iteration when `checkpoint_dir` is given.
///
/// On resume the stored configuration takes precedence over `cfg`. The
/// Logic2Text tagger is trained once more on the final training set before
/// returning, so it reflects every selected pair.
pub fn run_self_training(
    train: &[ParallelPair],
    pool: &[UnlabeledItem],
    t2l: &mut dyn Tagger,
    l2t: &mut dyn Tagger,
    schema: &FunctionSchema,
    cfg: &SelfTrainConfig,
    checkpoint_dir: Option<&Path>,
    mut opts: RunOptions<'_>,
) -> Result<RunOutcome, SelfTrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(SelfTrainError::InvalidConfig("training set is empty".into()));
    }
    let universe = check_universe(train, pool)?;

    let resumed = match checkpoint_dir {
        Some(dir) if opts.resume && checkpoint::state_path(dir).exists() => Some(load_checkpoint(dir)?),
        _ => None,
    };
    let mut state = match resumed {
        Some(s) => {
            let stored: BTreeSet<&String> = s.train_ids.iter().chain(&s.pool_ids).collect();
            let gold: Vec<&String> = train.iter().map(|p| &p.id).collect();
            if stored != universe.iter().collect::<BTreeSet<_>>() || gold != s.gold_ids.iter().collect::<Vec<_>>() {
                return Err(SelfTrainError::InvalidConfig("checkpoint does not match the train and pool inputs".into()));
            }
            s
        }
        None => fresh_state(train, pool, cfg),
    };
    // runtime-only knobs come from the caller, never from the stored state
    let cfg = SelfTrainConfig { jobs: cfg.jobs, verify_invariants: cfg.verify_invariants, ..state.config.clone() };
    let max_iterations = cfg.max_iterations.expect("resolved in fresh_state");
    let input = cfg.input();

    let by_id: HashMap<&str, &UnlabeledItem> = pool.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut train_set: Vec<ParallelPair> = train.to_vec();
    train_set.extend(state.pseudo_pairs.iter().cloned());

    let commit = |state: &SelfTrainState| -> Result<(), SelfTrainError> {
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(state, &state.report(), dir)?;
        }
        Ok(())
    };

    let mut ran = 0usize;
    while !state.done {
        if state.pool_ids.is_empty() {
            state.stop_reason = Some(StopReason::PoolExhausted);
        } else if state.iteration >= max_iterations {
            state.stop_reason = Some(StopReason::MaxIterations);
        }
        if state.stop_reason.is_some() {
            state.done = true;
            break;
        }
        if opts.halt_after.is_some_and(|h| ran >= h) {
            return Ok(RunOutcome { report: state.report(), state, train_set });
        }

        let (to_logic, to_text) = training_pairs(&train_set, &input);
        let t2l_loss = maybe_train(t2l, &to_logic)?;
        let l2t_loss = maybe_train(l2t, &to_text)?;

        let items: Vec<UnlabeledItem> = state.pool_ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
        let candidates = round_trip_batch(&items, t2l, l2t, schema, &cfg)?;
        let selected = select_top_k(&candidates, cfg.k);
        let selected_ids: Vec<String> = selected.iter().map(|c| c.item.id.clone()).collect();

        let iteration = state.iteration + 1;
        let mut buckets = BucketCounts::default();
        let mut records = Vec::with_capacity(selected.len());
        for c in &selected {
            match cfg.thresholds.classify_form(&c.pseudo_logic) {
                Difficulty::Easy => buckets.easy += 1,
                Difficulty::Middle => buckets.middle += 1,
                Difficulty::Hard => buckets.hard += 1,
            }
            records.push(SelectionRecord {
                iteration,
                id: c.item.id.clone(),
                content_score: c.content_score,
                verdict: c.verdict,
                pseudo_logic: c.pseudo_logic.clone(),
            });
            let pair = ParallelPair {
                id: c.item.id.clone(),
                table: c.item.table.clone(),
                logic: c.pseudo_logic.clone(),
                text: c.item.text.clone(),
                provenance: Provenance::Pseudo,
                score: Some(c.content_score),
                logic_type: None,
            };
            state.pseudo_pairs.push(pair.clone());
            train_set.push(pair);
        }
        let chosen: BTreeSet<&str> = selected_ids.iter().map(String::as_str).collect();
        let pool_before = state.pool_ids.len();
        state.pool_ids.retain(|id| !chosen.contains(id.as_str()));
        state.train_ids.extend(selected_ids.iter().cloned());
        state.iterations.push(IterationReport {
            iteration,
            train_before: state.train_ids.len() - selected_ids.len(),
            pool_before,
            text2logic_loss: t2l_loss,
            logic2text_loss: l2t_loss,
            tag_failures: candidates.iter().filter(|c| c.tag_failed).count(),
            qualified: candidates.iter().filter(|c| c.qualified).count(),
            selected: selected_ids.len(),
            pool_after: state.pool_ids.len(),
            candidate_scores: ScoreSummary::of(candidates.iter().map(|c| c.content_score)),
            selected_scores: ScoreSummary::of(selected.iter().map(|c| c.content_score)),
            selected_buckets: buckets,
        });
        state.history.extend(records.iter().cloned());
        state.last_selection = records;
        state.iteration = iteration;
        if selected_ids.is_empty() && cfg.early_stop_if_no_qualified {
            state.stop_reason = Some(StopReason::NoQualifiedCandidates);
            state.done = true;
        }

        if cfg.verify_invariants {
            verify(&state, &universe, &candidates, &selected_ids)
                .map_err(|message| SelfTrainError::Invariant { iteration, message })?;
        }
        if let Some(obs) = opts.observer.as_mut() {
            obs(&IterationView { iteration, candidates: &candidates, selected: &selected_ids, state: &state });
        }
        ran += 1;
        if !state.done {
            commit(&state)?;
        }
    }

    if cfg.verify_invariants {
        verify(&state, &universe, &[], &[]).map_err(|message| SelfTrainError::Invariant { iteration: state.iteration, message })?;
    }
    if !state.pseudo_pairs.is_empty() {
        let (_, to_text) = training_pairs(&train_set, &input);
        maybe_train(l2t, &to_text)?;
    }
    commit(&state)?;
    Ok(RunOutcome { report: state.report(), state, train_set })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TableContext;
    use crate::tagger::{Direction, IdentityTagger, ReplayTagger};

    fn item(id: &str, text: &str) -> UnlabeledItem {
        UnlabeledItem { id: id.into(), table: TableContext::new("t", vec!["h".into()]), text: text.into() }
    }

    fn cand(id: &str, score: f64, qualified: bool) -> Candidate {
        let verdict = StructureVerdict {
            rule1_pass: true,
            rule2_pass: qualified,
            rule3_avg: 1.0,
            rule3_pass: true,
            overall_pass: qualified,
            kappa: 0.5,
        };
        Candidate {
            item: item(id, "x"),
            pseudo_logic: String::new(),
            recovered_text: String::new(),
            content_score: score,
            verdict,
            tag_failed: false,
            qualified,
        }
    }

    #[test]
    fn top_k_by_score_then_id() {
        let cs: Vec<_> = [0.9, 0.8, 0.7, 0.6, 0.5].iter().enumerate().map(|(i, s)| cand(&format!("c{i}"), *s, true)).collect();
        let ids: Vec<_> = select_top_k(&cs, 3).iter().map(|c| c.content_score).collect();
        assert_eq!(ids, [0.9, 0.8, 0.7]);

        let cs = vec![cand("a", 0.1, true), cand("b", 0.9, false), cand("c", 0.2, true)];
        let ids: Vec<_> = select_top_k(&cs, 1000).iter().map(|c| c.item.id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);

        let cs = vec![cand("z", 0.5, true), cand("m", 0.5, true), cand("a", 0.5, true)];
        let ids: Vec<_> = select_top_k(&cs, 2).iter().map(|c| c.item.id.as_str()).collect();
        assert_eq!(ids, ["a", "m"]);
    }

    #[test]
    fn identity_round_trip_fails_structure() {
        let schema = FunctionSchema::default_schema();
        let mut t2l = IdentityTagger::new(Direction::TextToLogic);
        let mut l2t = IdentityTagger::new(Direction::LogicToText);
        let u = item("u", "canada won 3 gold medals");
        let c = round_trip(&u, &mut t2l, &mut l2t, &schema, &SelfTrainConfig::default()).unwrap();
        assert_eq!(c.pseudo_logic, u.text);
        assert_eq!(c.recovered_text, u.text);
        assert_eq!(c.content_score, 1.0);
        assert!(!c.verdict.rule2_pass);
        assert!(!c.qualified);
    }

    #[test]
    fn unbalanced_pseudo_form_fails_rule1() {
        let schema = FunctionSchema::default_schema();
        let cfg = SelfTrainConfig::default();
        let u = item("u", "a b");
        let key = build_text_input(&u.text, &u.table, &InputConfig::default());
        let mut t2l = ReplayTagger::with_memory(Direction::TextToLogic, [TrainPair::new(key, "eq { a ; b")]);
        let mut l2t = IdentityTagger::new(Direction::LogicToText);
        let c = round_trip(&u, &mut t2l, &mut l2t, &schema, &cfg).unwrap();
        assert!(!c.verdict.rule1_pass && !c.qualified);
    }

    #[test]
    fn tag_failure_scores_zero() {
        let schema = FunctionSchema::default_schema();
        let mut t2l = ReplayTagger::new(Direction::TextToLogic);
        let mut l2t = ReplayTagger::new(Direction::LogicToText);
        let c = round_trip(&item("u", "a b"), &mut t2l, &mut l2t, &schema, &SelfTrainConfig::default()).unwrap();
        assert!(c.tag_failed && !c.qualified);
        assert_eq!(c.content_score, 0.0);
    }

    #[test]
    fn parallel_scoring_matches_sequential() {
        let schema = FunctionSchema::default_schema();
        let items: Vec<_> = (0..23).map(|i| item(&format!("u{i}"), &format!("w{i} x{} y", i % 3))).collect();
        let mut t2l = crate::tagger::TemplateTagger::text_to_logic("count", 1);
        let mut l2t = crate::tagger::TemplateTagger::logic_to_text();
        let seq = round_trip_batch(&items, &mut t2l, &mut l2t, &schema, &SelfTrainConfig::default()).unwrap();
        let par_cfg = SelfTrainConfig { jobs: 4, ..Default::default() };
        let par = round_trip_batch(&items, &mut t2l, &mut l2t, &schema, &par_cfg).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn config_validation() {
        assert!(SelfTrainConfig::default().validate().is_ok());
        for bad in [
            SelfTrainConfig { k: 0, ..Default::default() },
            SelfTrainConfig { kappa: 1.5, ..Default::default() },
            SelfTrainConfig { beta: 0.0, ..Default::default() },
            SelfTrainConfig { max_iterations: Some(0), ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(SelfTrainError::InvalidConfig(_))));
        }
    }

    #[test]
    fn score_summary_bins() {
        let s = ScoreSummary::of([0.0, 0.05, 0.5, 1.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.histogram[0], 2);
        assert_eq!(s.histogram[5], 1);
        assert_eq!(s.histogram[9], 1);
        assert_eq!(ScoreSummary::of([]).count, 0);
    }
}
