//! Round-trip content consistency between an original text and the text
//! recovered from its pseudo logical form.
//!
//! With `L = LCS(u, u')`, recall is `R = L / len(u')` and precision is
//! `P = L / len(u)`, combined as
//!
//! ```text
//! score = (1 + beta^2) R P / (R + beta^2 P)
//! ```
//!
//! Note the denominators: recall is taken against the recovered text. The
//! conventional ROUGE-L assignment is available through
//! [`ConsistencyConfig::conventional`].

use serde::{Deserialize, Serialize};

pub const DEFAULT_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    /// F-beta weight, strictly positive.
    pub beta: f64,
    pub lowercase: bool,
    /// Swap the length denominators to the usual ROUGE-L orientation.
    #[serde(default)]
    pub conventional: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig { beta: DEFAULT_BETA, lowercase: true, conventional: false }
    }
}

impl ConsistencyConfig {
    pub fn with_beta(beta: f64) -> Self {
        ConsistencyConfig { beta, ..Default::default() }
    }
}

/// Whitespace tokenization; punctuation stays attached to its word.
pub fn tokenize(s: &str, cfg: &ConsistencyConfig) -> Vec<String> {
    s.split_whitespace()
        .map(|w| if cfg.lowercase { w.to_lowercase() } else { w.to_string() })
        .collect()
}

/// Length of the longest common subsequence, in O(|a|·|b|) time and
/// O(min(|a|,|b|)) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[short.len()]
}

/// F-beta combination of recall and precision, 0 when either is 0.
pub fn f_beta(recall: f64, precision: f64, beta: f64) -> f64 {
    if recall <= 0.0 || precision <= 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * recall * precision / (recall + b2 * precision)
}

/// Recall and precision of the recovered tokens against the original.
pub fn lcs_recall_precision<T: PartialEq>(original: &[T], recovered: &[T], conventional: bool) -> (f64, f64) {
    if original.is_empty() || recovered.is_empty() {
        return (0.0, 0.0);
    }
    let l = lcs_length(original, recovered) as f64;
    let (r_den, p_den) = if conventional {
        (original.len(), recovered.len())
    } else {
        (recovered.len(), original.len())
    };
    (l / r_den as f64, l / p_den as f64)
}

/// Content consistency score of `recovered` against `original`, in `[0, 1]`.
pub fn content_score(original: &str, recovered: &str, cfg: &ConsistencyConfig) -> f64 {
    let u = tokenize(original, cfg);
    let v = tokenize(recovered, cfg);
    let (r, p) = lcs_recall_precision(&u, &v, cfg.conventional);
    f_beta(r, p, cfg.beta)
}
