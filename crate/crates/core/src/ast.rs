//! Logic trees: parsing, canonical serialization and traversal.
//!
//! A linearized logical form is a nested function application written with
//! braces and semicolons:
//!
//! ```text
//! form := NAME '{' arg ( ';' arg )* '}'
//! arg  := form | LEAF
//! ```
//!
//! A leaf is the maximal run of non-reserved whitespace tokens between two
//! delimiters, so multi-word values such as `gold medals` are a single leaf.
//! Parsing is strict: malformed input is rejected with the byte offset of the
//! first violation.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::schema::{FunctionSchema, LogicType};

/// Characters that delimit structure and can never appear inside a leaf.
pub const RESERVED: [char; 3] = ['{', '}', ';'];

/// A node in a logic tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LogicNode {
    /// A function application with at least one argument.
    Function { name: String, children: Vec<LogicNode> },
    /// A value or column token span, stored with single internal spaces.
    Leaf(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty logical form")]
    EmptyInput,
    #[error("unbalanced braces at byte {offset}")]
    UnbalancedBraces { offset: usize },
    #[error("empty argument at byte {offset}")]
    EmptyArgument { offset: usize },
    #[error("trailing input at byte {offset}")]
    TrailingInput { offset: usize },
    #[error("missing function name before '{{' at byte {offset}")]
    EmptyFunctionName { offset: usize },
    #[error("function name must be a single token (byte {offset})")]
    InvalidFunctionName { offset: usize },
    #[error("expected a function application at byte {offset}")]
    ExpectedFunction { offset: usize },
}

impl ParseError {
    /// Byte offset of the first violation in the source string.
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::EmptyInput => 0,
            ParseError::UnbalancedBraces { offset }
            | ParseError::EmptyArgument { offset }
            | ParseError::TrailingInput { offset }
            | ParseError::EmptyFunctionName { offset }
            | ParseError::InvalidFunctionName { offset }
            | ParseError::ExpectedFunction { offset } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("no function in the form carries a logic-type category")]
    Uncategorized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Semi,
    Word(&'a str),
}

fn lex(src: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, ch) in src.char_indices() {
        let delim = ch.is_whitespace() || RESERVED.contains(&ch);
        if delim {
            if let Some(s) = word_start.take() {
                out.push((s, Tok::Word(&src[s..i])));
            }
            match ch {
                '{' => out.push((i, Tok::Open)),
                '}' => out.push((i, Tok::Close)),
                ';' => out.push((i, Tok::Semi)),
                _ => {}
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        out.push((s, Tok::Word(&src[s..])));
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(usize, Tok<'a>)> {
        self.toks.get(self.pos).copied()
    }

    fn offset_here(&self) -> usize {
        self.peek().map(|(o, _)| o).unwrap_or(self.len)
    }

    /// Collect the run of word tokens starting at the cursor.
    fn words(&mut self) -> Vec<(usize, &'a str)> {
        let mut run = Vec::new();
        while let Some((o, Tok::Word(w))) = self.peek() {
            run.push((o, w));
            self.pos += 1;
        }
        run
    }

    fn form(&mut self) -> Result<LogicNode, ParseError> {
        let start = self.offset_here();
        let run = self.words();
        match self.peek() {
            Some((o, Tok::Open)) => self.application(run, o),
            _ if run.is_empty() => match self.peek() {
                Some((o, Tok::Close)) => Err(ParseError::UnbalancedBraces { offset: o }),
                _ => Err(ParseError::ExpectedFunction { offset: start }),
            },
            _ => Err(ParseError::ExpectedFunction { offset: start }),
        }
    }

    fn application(
        &mut self,
        run: Vec<(usize, &'a str)>,
        open_at: usize,
    ) -> Result<LogicNode, ParseError> {
        let name = match run.as_slice() {
            [] => return Err(ParseError::EmptyFunctionName { offset: open_at }),
            [(_, w)] => (*w).to_string(),
            [_, (o, _), ..] => return Err(ParseError::InvalidFunctionName { offset: *o }),
        };
        self.pos += 1; // '{'
        let mut children = Vec::new();
        loop {
            children.push(self.arg()?);
            match self.peek() {
                Some((_, Tok::Semi)) => self.pos += 1,
                Some((_, Tok::Close)) => {
                    self.pos += 1;
                    return Ok(LogicNode::Function { name, children });
                }
                None => return Err(ParseError::UnbalancedBraces { offset: open_at }),
                Some((o, _)) => return Err(ParseError::UnbalancedBraces { offset: o }),
            }
        }
    }

    fn arg(&mut self) -> Result<LogicNode, ParseError> {
        let start = self.offset_here();
        let run = self.words();
        match self.peek() {
            Some((o, Tok::Open)) => self.application(run, o),
            _ if run.is_empty() => Err(ParseError::EmptyArgument { offset: start }),
            _ => {
                let text = run.iter().map(|(_, w)| *w).collect::<Vec<_>>().join(" ");
                Ok(LogicNode::Leaf(text))
            }
        }
    }
}

/// Parse a linearized logical form into its tree.
pub fn parse_logical_form(src: &str) -> Result<LogicNode, ParseError> {
    let toks = lex(src);
    if toks.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut p = Parser { toks, pos: 0, len: src.len() };
    let root = p.form()?;
    if let Some((o, t)) = p.peek() {
        return Err(match t {
            Tok::Close => ParseError::UnbalancedBraces { offset: o },
            _ => ParseError::TrailingInput { offset: o },
        });
    }
    Ok(root)
}

impl LogicNode {
    pub fn leaf(text: impl Into<String>) -> Self {
        LogicNode::Leaf(text.into())
    }

    pub fn function(name: impl Into<String>, children: Vec<LogicNode>) -> Self {
        LogicNode::Function { name: name.into(), children }
    }

    pub fn is_function(&self) -> bool {
        matches!(self, LogicNode::Function { .. })
    }

    /// Function name, or `None` for a leaf.
    pub fn name(&self) -> Option<&str> {
        match self {
            LogicNode::Function { name, .. } => Some(name),
            LogicNode::Leaf(_) => None,
        }
    }

    pub fn children(&self) -> &[LogicNode] {
        match self {
            LogicNode::Function { children, .. } => children,
            LogicNode::Leaf(_) => &[],
        }
    }

    /// Canonical serialization: `name { child ; child }` with single spaces.
    pub fn linearize(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out);
        out
    }

    fn write_to(&self, out: &mut String) {
        match self {
            LogicNode::Leaf(text) => {
                let mut first = true;
                for w in text.split_whitespace() {
                    if !first {
                        out.push(' ');
                    }
                    out.push_str(w);
                    first = false;
                }
            }
            LogicNode::Function { name, children } => {
                out.push_str(name);
                out.push_str(" {");
                for (i, c) in children.iter().enumerate() {
                    out.push_str(if i == 0 { " " } else { " ; " });
                    c.write_to(out);
                }
                out.push_str(" }");
            }
        }
    }

    /// Maximum nesting depth of function nodes. Leaves contribute nothing, so
    /// a function root is at depth 1 and a bare leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            LogicNode::Leaf(_) => 0,
            LogicNode::Function { children, .. } => {
                1 + children.iter().map(LogicNode::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn node_counts(&self) -> NodeCounts {
        let mut counts = NodeCounts::default();
        self.visit(&mut |n| {
            counts.total += 1;
            if n.is_function() {
                counts.functions += 1;
            }
        });
        counts
    }

    /// Pre-order visit of every node.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a LogicNode)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Function nodes in level order, as `(name, arity)`.
    pub fn bfs_functions(&self) -> Vec<(&str, usize)> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([self]);
        while let Some(n) = queue.pop_front() {
            if let LogicNode::Function { name, children } = n {
                out.push((name.as_str(), children.len()));
                queue.extend(children.iter());
            }
        }
        out
    }

    /// Every whitespace token of every leaf and function name, in pre-order.
    pub fn leaf_tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |n| match n {
            LogicNode::Function { name, .. } => out.push(name.as_str()),
            LogicNode::Leaf(text) => out.extend(text.split_whitespace()),
        });
        out
    }

    /// Logic type of the form: the category of the first categorized function
    /// in level order, which is the root whenever the root carries one.
    pub fn classify(&self, schema: &FunctionSchema) -> Result<LogicType, ClassifyError> {
        let root = self.name().ok_or(ClassifyError::Uncategorized)?;
        if !schema.contains(root) {
            return Err(ClassifyError::UnknownFunction(root.to_string()));
        }
        self.bfs_functions()
            .into_iter()
            .find_map(|(name, _)| schema.get(name).and_then(|s| s.category))
            .ok_or(ClassifyError::Uncategorized)
    }
}

impl fmt::Display for LogicNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.linearize())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeCounts {
    pub total: usize,
    pub functions: usize,
}

impl NodeCounts {
    pub fn leaves(&self) -> usize {
        self.total - self.functions
    }
}
