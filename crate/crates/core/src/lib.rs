//! Tools for self-training logic-conditioned text generators from a handful
//! of annotated logical forms.
//!
//! The crate covers the parts of the pipeline that can be checked without a
//! neural runtime:
//!
//! - [`ast`]: parse, serialize and traverse brace-delimited logical forms;
//! - [`schema`] and [`rules`]: the function set and the three structure
//!   consistency rules;
//! - [`consistency`]: the LCS-based round-trip content score;
//! - [`metrics`]: BLEU-1 and ROUGE-1/2/L;
//! - [`corpus`]: dataset records, table linearization, few-shot splits,
//!   depth buckets and statistics;
//! - [`tagger`]: the transducer abstraction and its wire protocol;
//! - [`selftrain`]: the self-training loop with checkpointing.
//!
//! ```
//! use logic_selftrain::ast::parse_logical_form;
//! use logic_selftrain::rules::structure_verdict;
//! use logic_selftrain::schema::FunctionSchema;
//!
//! let form = "eq { count { filter_eq { all_rows ; nation ; canada } } ; 2 }";
//! let tree = parse_logical_form(form).unwrap();
//! assert_eq!(tree.depth(), 3);
//!
//! let verdict = structure_verdict(form, &FunctionSchema::default_schema(), 0.5);
//! assert!(verdict.overall_pass);
//! ```

pub mod ast;
pub mod consistency;
pub mod corpus;
pub mod metrics;
pub mod rules;
pub mod schema;
pub mod selftrain;
pub mod tagger;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use ast::{parse_logical_form, LogicNode, ParseError};
pub use consistency::{content_score, lcs_length, ConsistencyConfig};
pub use rules::{structure_verdict, StructureVerdict};
pub use schema::{FunctionSchema, LogicType};

// The guide's code listings are compiled and run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/logical-forms.md")]
    mod logical_forms {}
    #[doc = include_str!("../../../book/src/structure-rules.md")]
    mod structure_rules {}
    #[doc = include_str!("../../../book/src/content-consistency.md")]
    mod content_consistency {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/taggers.md")]
    mod taggers {}
    #[doc = include_str!("../../../book/src/self-training.md")]
    mod self_training {}
}
