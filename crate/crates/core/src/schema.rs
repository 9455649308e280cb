//! The default function set: expected arity and logic-type category of each
//! function a logical form may use.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_SCHEMA: &str = include_str!("../data/default_schema.toml");

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

/// The seven logic types of the Logic2Text benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicType {
    Count,
    Superlative,
    Comparative,
    Aggregation,
    Majority,
    Unique,
    Ordinal,
}

impl LogicType {
    pub const ALL: [LogicType; 7] = [
        LogicType::Count,
        LogicType::Superlative,
        LogicType::Comparative,
        LogicType::Aggregation,
        LogicType::Majority,
        LogicType::Unique,
        LogicType::Ordinal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LogicType::Count => "count",
            LogicType::Superlative => "superlative",
            LogicType::Comparative => "comparative",
            LogicType::Aggregation => "aggregation",
            LogicType::Majority => "majority",
            LogicType::Unique => "unique",
            LogicType::Ordinal => "ordinal",
        }
    }
}

impl fmt::Display for LogicType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogicType {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LogicType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SchemaError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub arity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<LogicType>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed schema: {0}")]
    Format(#[from] toml::de::Error),
    #[error("unsupported schema format version {0}")]
    Version(u32),
    #[error("function `{0}` must take at least one argument")]
    ZeroArity(String),
    #[error("unknown logic type `{0}`")]
    UnknownCategory(String),
}

#[derive(Deserialize, Serialize)]
struct SchemaFile {
    format_version: u32,
    functions: BTreeMap<String, FunctionSpec>,
}

/// Function name → arity and category. Names are unique by construction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FunctionSchema {
    entries: BTreeMap<String, FunctionSpec>,
}

impl FunctionSchema {
    /// The built-in schema shipped in `data/default_schema.toml`.
    pub fn default_schema() -> Self {
        Self::from_toml(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn from_toml(src: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile = toml::from_str(src)?;
        if file.format_version != SCHEMA_FORMAT_VERSION {
            return Err(SchemaError::Version(file.format_version));
        }
        let mut schema = FunctionSchema::default();
        for (name, spec) in file.functions {
            schema.insert(name, spec)?;
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        let file = SchemaFile { format_version: SCHEMA_FORMAT_VERSION, functions: self.entries.clone() };
        toml::to_string(&file).expect("schema serializes")
    }

    pub fn insert(&mut self, name: impl Into<String>, spec: FunctionSpec) -> Result<(), SchemaError> {
        let name = name.into();
        if spec.arity == 0 {
            return Err(SchemaError::ZeroArity(name));
        }
        self.entries.insert(name, spec);
        Ok(())
    }

    /// Builder used mostly by tests: `[("eq", 2), ("count", 1)]`, uncategorized.
    pub fn from_arities<'a>(items: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut schema = FunctionSchema::default();
        for (name, arity) in items {
            schema
                .insert(name, FunctionSpec { arity, category: None })
                .expect("positive arity");
        }
        schema
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSpec> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.get(name).map(|s| s.arity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FunctionSpec)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}
