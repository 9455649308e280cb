//! Random logic-tree generators and single-point mutations for fuzzing.
//! Enabled with the `testkit` feature.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::LogicNode;
use crate::corpus::{build_input_sequence, build_text_input, InputConfig, ParallelPair, TableContext, UnlabeledItem};
use crate::schema::FunctionSchema;
use crate::tagger::TrainPair;

const WORDS: &[&str] = &[
    "all_rows", "nation", "gold", "silver", "1990", "3", "united", "states", "date", "attendance",
    "july", "10", "score", "team", "points", "canada", "x-ray", "o'brien", "=", "2:1",
];

fn leaf(rng: &mut impl Rng) -> LogicNode {
    let n = rng.gen_range(1..=3);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    LogicNode::Leaf(words.join(" "))
}

fn name(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..=8);
    (0..len)
        .map(|i| {
            let pool: &[u8] = if i == 0 { b"abcdefghijklmnopqrstuvwxyz" } else { b"abcdefghijklmnopqrstuvwxyz_0123456789" };
            *pool.choose(rng).unwrap() as char
        })
        .collect()
}

/// Arbitrary well-formed tree: random names, 1–4 children, multi-word leaves.
pub fn random_tree(rng: &mut impl Rng, max_depth: usize) -> LogicNode {
    let arity = rng.gen_range(1..=4);
    let children = (0..arity)
        .map(|_| {
            if max_depth > 1 && rng.gen_bool(0.4) {
                random_tree(rng, max_depth - 1)
            } else {
                leaf(rng)
            }
        })
        .collect();
    LogicNode::Function { name: name(rng), children }
}

/// Tree whose every function is in `schema` with its declared arity.
pub fn conformant_tree(rng: &mut impl Rng, schema: &FunctionSchema, max_depth: usize) -> LogicNode {
    let entries: Vec<(&str, usize)> = schema.iter().map(|(n, s)| (n, s.arity)).collect();
    let (fname, arity) = *entries.choose(rng).expect("non-empty schema");
    let children = (0..arity)
        .map(|_| {
            if max_depth > 1 && rng.gen_bool(0.35) {
                conformant_tree(rng, schema, max_depth - 1)
            } else {
                leaf(rng)
            }
        })
        .collect();
    LogicNode::function(fname, children)
}

/// Child-index path to every function node, in pre-order.
fn function_paths(t: &LogicNode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if t.is_function() {
        out.push(prefix.clone());
    }
    for (i, c) in t.children().iter().enumerate() {
        prefix.push(i);
        function_paths(c, prefix, out);
        prefix.pop();
    }
}

fn random_function<'a>(t: &'a mut LogicNode, rng: &mut impl Rng) -> &'a mut LogicNode {
    let mut paths = Vec::new();
    function_paths(t, &mut Vec::new(), &mut paths);
    let path = paths.choose(rng).expect("tree has a function").clone();
    let mut node = t;
    for i in path {
        node = match node {
            LogicNode::Function { children, .. } => &mut children[i],
            LogicNode::Leaf(_) => unreachable!("paths only descend through functions"),
        };
    }
    node
}

/// Delete one randomly chosen closing brace from the serialized form.
pub fn delete_closing_brace(form: &str, rng: &mut impl Rng) -> String {
    let closers: Vec<usize> = form.match_indices('}').map(|(i, _)| i).collect();
    let at = *closers.choose(rng).expect("form has a closing brace");
    let mut out = form.to_string();
    out.remove(at);
    out
}

/// Rename one function to a name outside `schema`.
pub fn rename_function(t: &LogicNode, schema: &FunctionSchema, rng: &mut impl Rng) -> LogicNode {
    let mut out = t.clone();
    let node = random_function(&mut out, rng);
    let mut fresh = format!("zz_{}", name(rng));
    while schema.contains(&fresh) {
        fresh.push('x');
    }
    if let LogicNode::Function { name, .. } = node {
        *name = fresh;
    }
    out
}

/// Add or remove one argument of one function (removal only when it keeps at
/// least one argument).
pub fn change_arity(t: &LogicNode, rng: &mut impl Rng) -> LogicNode {
    let mut out = t.clone();
    let node = random_function(&mut out, rng);
    if let LogicNode::Function { children, .. } = node {
        if children.len() > 1 && rng.gen_bool(0.5) {
            let at = rng.gen_range(0..children.len());
            children.remove(at);
        } else {
            let at = rng.gen_range(0..=children.len());
            children.insert(at, leaf(rng));
        }
    }
    out
}

/// A small end-to-end corpus whose round trips are fully scripted.
///
/// The replay memories map each pool text (with its table) to a pseudo form,
/// and that form back to a copy of the text with `i % 4` trailing words
/// dropped, so content scores vary and tie. The last `rejects` pool items get
/// a form that fails the structure rules.
#[derive(Debug, Clone)]
pub struct ReplayFixture {
    pub train: Vec<ParallelPair>,
    pub pool: Vec<UnlabeledItem>,
    pub text_to_logic: Vec<TrainPair>,
    pub logic_to_text: Vec<TrainPair>,
}

pub fn replay_fixture(gold: usize, pool_size: usize, rejects: usize, seed: u64) -> ReplayFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = FunctionSchema::default_schema();
    let input = InputConfig::default();
    let sentence = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(6..=12);
        (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let table = |i: usize| {
        TableContext::new(format!("table {i}"), vec!["nation".into(), "gold".into(), "silver".into()])
    };

    let train = (0..gold)
        .map(|i| {
            let logic = conformant_tree(&mut rng, &schema, 3).linearize();
            ParallelPair::gold(format!("g{i:03}"), table(i), logic, sentence(&mut rng))
        })
        .collect();

    let mut pool = Vec::new();
    let (mut text_to_logic, mut logic_to_text) = (Vec::new(), Vec::new());
    for i in 0..pool_size {
        let item = UnlabeledItem { id: format!("u{i:03}"), table: table(100 + i), text: sentence(&mut rng) };
        let tree = conformant_tree(&mut rng, &schema, 3);
        let logic = if i + rejects >= pool_size {
            match i % 3 {
                0 => delete_closing_brace(&tree.linearize(), &mut rng),
                1 => rename_function(&tree, &schema, &mut rng).linearize(),
                // a lone function with the wrong arity: rule 3 average 0
                _ => LogicNode::function("count", vec![leaf(&mut rng), LogicNode::leaf("all_rows")]).linearize(),
            }
        } else {
            tree.linearize()
        };
        let words: Vec<&str> = item.text.split_whitespace().collect();
        let recovered = words[..words.len() - i % 4].join(" ");
        text_to_logic.push(TrainPair::new(build_text_input(&item.text, &item.table, &input), logic.clone()));
        logic_to_text.push(TrainPair::new(build_input_sequence(&logic, &item.table, &input), recovered));
        pool.push(item);
    }
    ReplayFixture { train, pool, text_to_logic, logic_to_text }
}
