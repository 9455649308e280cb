//! Structure consistency of generated logical forms.
//!
//! Three rules decide whether a pseudo logical form is structurally rational:
//!
//! 1. braces in the raw generation are balanced and properly nested;
//! 2. every function used belongs to the schema's function set;
//! 3. the level-order average of per-function arity agreement (1 when the
//!    child count equals the schema arity, 0 otherwise) is at least `kappa`.
//!
//! Rule 1 looks at the raw string, so generations that fail to parse still
//! get a well-defined verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{parse_logical_form, LogicNode};
use crate::schema::FunctionSchema;

pub const DEFAULT_KAPPA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown function `{0}`")]
pub struct UnknownFunction(pub String);

/// Outcome of running all three rules on one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureVerdict {
    pub rule1_pass: bool,
    pub rule2_pass: bool,
    pub rule3_avg: f64,
    pub rule3_pass: bool,
    pub overall_pass: bool,
    pub kappa: f64,
}

impl StructureVerdict {
    fn failed(rule1_pass: bool, kappa: f64) -> Self {
        StructureVerdict {
            rule1_pass,
            rule2_pass: false,
            rule3_avg: 0.0,
            rule3_pass: false,
            overall_pass: false,
            kappa,
        }
    }
}

/// Rule 1: `{` and `}` are balanced and never close before they open.
pub fn check_rule1(raw: &str) -> bool {
    let mut open = 0usize;
    for ch in raw.chars() {
        match ch {
            '{' => open += 1,
            '}' => match open.checked_sub(1) {
                Some(n) => open = n,
                None => return false,
            },
            _ => {}
        }
    }
    open == 0
}

/// Rule 2: every function name in the tree is a schema key.
pub fn check_rule2(tree: &LogicNode, schema: &FunctionSchema) -> bool {
    tree.bfs_functions().iter().all(|(name, _)| schema.contains(name))
}

/// Rule 3: mean arity agreement over function nodes in level order.
///
/// Callers gate on [`check_rule2`]; an unknown name is an error here.
pub fn check_rule3(
    tree: &LogicNode,
    schema: &FunctionSchema,
    kappa: f64,
) -> Result<(f64, bool), UnknownFunction> {
    let functions = tree.bfs_functions();
    let mut agree = 0usize;
    for (name, arity) in &functions {
        let expected = schema.arity(name).ok_or_else(|| UnknownFunction(name.to_string()))?;
        if expected == *arity {
            agree += 1;
        }
    }
    // a parsed tree always has a function root, but a bare leaf scores 0
    let avg = if functions.is_empty() { 0.0 } else { agree as f64 / functions.len() as f64 };
    Ok((avg, avg >= kappa))
}

/// Verdict for an already-parsed tree whose raw form passed Rule 1.
pub fn tree_verdict(tree: &LogicNode, schema: &FunctionSchema, kappa: f64) -> StructureVerdict {
    if !check_rule2(tree, schema) {
        return StructureVerdict::failed(true, kappa);
    }
    let (rule3_avg, rule3_pass) = check_rule3(tree, schema, kappa).expect("rule 2 holds");
    StructureVerdict {
        rule1_pass: true,
        rule2_pass: true,
        rule3_avg,
        rule3_pass,
        overall_pass: rule3_pass,
        kappa,
    }
}

/// Run Rules 1–3 on a raw generation. Total: never fails.
pub fn structure_verdict(raw: &str, schema: &FunctionSchema, kappa: f64) -> StructureVerdict {
    if !check_rule1(raw) {
        return StructureVerdict::failed(false, kappa);
    }
    match parse_logical_form(raw) {
        Ok(tree) => tree_verdict(&tree, schema, kappa),
        Err(_) => StructureVerdict::failed(true, kappa),
    }
}
