//! Automatic text-overlap metrics: BLEU-1 (optionally BLEU-4) and ROUGE-1/2/L
//! F-measure, single reference, with macro averaging over a corpus.
//!
//! These follow the textbook definitions on whitespace tokens. They do not
//! reproduce the stemming and segmentation quirks of the reference Perl
//! scripts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

use crate::consistency::{f_beta, lcs_length};
use crate::schema::LogicType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
    #[error("grouping has {groups} labels for {pairs} pairs")]
    GroupLengthMismatch { pairs: usize, groups: usize },
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate n-gram total.
fn clipped_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, cand.values().sum())
}

fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        return 0.0;
    }
    (1.0 - reference_len as f64 / candidate_len as f64).exp().min(1.0)
}

/// Clipped unigram precision times the brevity penalty.
pub fn bleu1<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    bleu(candidate, reference, 1)
}

/// Unsmoothed BLEU up to order `max_n`: geometric mean of clipped precisions
/// times the brevity penalty. Any zero precision gives 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    if candidate.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(candidate, reference, n);
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp()
}

/// ROUGE-N F1 with clipped counts.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    let (matched, cand_total) = clipped_matches(candidate, reference, n);
    let ref_total = reference.len().saturating_sub(n.saturating_sub(1));
    if matched == 0 || cand_total == 0 || ref_total == 0 || reference.len() < n {
        return 0.0;
    }
    f_beta(matched as f64 / ref_total as f64, matched as f64 / cand_total as f64, 1.0)
}

/// ROUGE-L F1: recall against the reference length, precision against the
/// candidate length.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_length(candidate, reference) as f64;
    f_beta(l / reference.len() as f64, l / candidate.len() as f64, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct InstanceScores {
    pub bleu1: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
}

impl InstanceScores {
    pub fn compute<T: Eq + Hash>(candidate: &[T], reference: &[T], with_bleu4: bool) -> Self {
        InstanceScores {
            bleu1: bleu1(candidate, reference),
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rougel: rouge_l(candidate, reference),
            bleu4: with_bleu4.then(|| bleu(candidate, reference, 4)),
        }
    }
}

/// Macro-averaged scores for one group of instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScores {
    pub group: String,
    pub count: usize,
    #[serde(flatten)]
    pub mean: InstanceScores,
}

fn average(group: String, scores: &[InstanceScores]) -> GroupScores {
    let n = scores.len() as f64;
    let mut mean = InstanceScores::default();
    let mut b4 = 0.0;
    for s in scores {
        mean.bleu1 += s.bleu1;
        mean.rouge1 += s.rouge1;
        mean.rouge2 += s.rouge2;
        mean.rougel += s.rougel;
        b4 += s.bleu4.unwrap_or(0.0);
    }
    mean.bleu1 /= n;
    mean.rouge1 /= n;
    mean.rouge2 /= n;
    mean.rougel /= n;
    if scores.first().is_some_and(|s| s.bleu4.is_some()) {
        mean.bleu4 = Some(b4 / n);
    }
    GroupScores { group, count: scores.len(), mean }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub overall: GroupScores,
    pub groups: Vec<GroupScores>,
}

/// Score every `(candidate, reference)` pair and macro-average, optionally
/// per logic type. Groups appear in [`LogicType`] order.
pub fn corpus_eval<T: Eq + Hash>(
    pairs: &[(Vec<T>, Vec<T>)],
    groups: Option<&[LogicType]>,
    with_bleu4: bool,
) -> Result<MetricReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if let Some(g) = groups {
        if g.len() != pairs.len() {
            return Err(MetricError::GroupLengthMismatch { pairs: pairs.len(), groups: g.len() });
        }
    }
    let scores: Vec<InstanceScores> = pairs
        .iter()
        .map(|(c, r)| InstanceScores::compute(c, r, with_bleu4))
        .collect();
    let overall = average("overall".to_string(), &scores);
    let mut by_group: BTreeMap<LogicType, Vec<InstanceScores>> = BTreeMap::new();
    if let Some(g) = groups {
        for (t, s) in g.iter().zip(&scores) {
            by_group.entry(*t).or_default().push(*s);
        }
    }
    let groups = by_group
        .into_iter()
        .map(|(t, s)| average(t.as_str().to_string(), &s))
        .collect();
    Ok(MetricReport { overall, groups })
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl MetricReport {
    pub fn rows(&self) -> impl Iterator<Item = &GroupScores> {
        std::iter::once(&self.overall).chain(self.groups.iter())
    }

    /// Tab-separated table, four decimals.
    pub fn to_text(&self) -> String {
        let b4 = self.overall.mean.bleu4.is_some();
        let mut out = String::from("# macro-averaged over instances\ngroup\tcount\tB-1\tR-1\tR-2\tR-L");
        if b4 {
            out.push_str("\tB-4");
        }
        out.push('\n');
        for g in self.rows() {
            let m = &g.mean;
            let _ = write!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                g.group, g.count, m.bleu1, m.rouge1, m.rouge2, m.rougel
            );
            if let Some(x) = m.bleu4 {
                let _ = write!(out, "\t{x:.4}");
            }
            out.push('\n');
        }
        out
    }

    /// One JSON object per line, values rounded to four decimals.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for g in self.rows() {
            let m = &g.mean;
            let rounded = GroupScores {
                group: g.group.clone(),
                count: g.count,
                mean: InstanceScores {
                    bleu1: round4(m.bleu1),
                    rouge1: round4(m.rouge1),
                    rouge2: round4(m.rouge2),
                    rougel: round4(m.rougel),
                    bleu4: m.bleu4.map(round4),
                },
            };
            out.push_str(&serde_json::to_string(&rounded).expect("serializable"));
            out.push('\n');
        }
        out
    }
}
