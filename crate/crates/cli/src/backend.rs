//! Backend selection: `replay`, `identity`, `template`, `external:<command>`
//! or `socket:<path>`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use logic_selftrain::schema::FunctionSchema;
use logic_selftrain::tagger::external::ExternalTagger;
use logic_selftrain::tagger::{Direction, IdentityTagger, ReplayTagger, Tagger, TemplateTagger, TrainPair};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Replay,
    Identity,
    Template,
    External(String),
    Socket(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replay" => Ok(BackendSpec::Replay),
            "identity" => Ok(BackendSpec::Identity),
            "template" => Ok(BackendSpec::Template),
            _ => {
                if let Some(cmd) = s.strip_prefix("external:").filter(|c| !c.trim().is_empty()) {
                    Ok(BackendSpec::External(cmd.to_string()))
                } else if let Some(path) = s.strip_prefix("socket:").filter(|p| !p.is_empty()) {
                    Ok(BackendSpec::Socket(PathBuf::from(path)))
                } else {
                    Err(format!(
                        "unknown backend `{s}` (expected replay, identity, template, external:<command> or socket:<path>)"
                    ))
                }
            }
        }
    }
}

/// Read `{"in": .., "out": ..}` lines.
pub fn load_memory(path: &Path) -> Result<Vec<TrainPair>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainPair =
            serde_json::from_str(line).with_context(|| format!("{}:{}: bad memory entry", path.display(), i + 1))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

#[derive(Clone, Copy)]
pub struct BuildOptions<'a> {
    pub memory: Option<&'a Path>,
    pub template_root: &'a str,
    pub schema: &'a FunctionSchema,
}

pub fn build(spec: &BackendSpec, direction: Direction, opts: &BuildOptions<'_>) -> Result<Box<dyn Tagger>> {
    if opts.memory.is_some() && *spec != BackendSpec::Replay {
        bail!("a {direction} memory file only applies to the replay backend");
    }
    Ok(match spec {
        BackendSpec::Replay => match opts.memory {
            Some(path) => Box::new(ReplayTagger::with_memory(direction, load_memory(path)?)),
            None => Box::new(ReplayTagger::new(direction)),
        },
        BackendSpec::Identity => Box::new(IdentityTagger::new(direction)),
        BackendSpec::Template => match direction {
            Direction::TextToLogic => {
                let arity = opts
                    .schema
                    .arity(opts.template_root)
                    .with_context(|| format!("template root `{}` is not in the schema", opts.template_root))?;
                Box::new(TemplateTagger::text_to_logic(opts.template_root, arity))
            }
            Direction::LogicToText => Box::new(TemplateTagger::logic_to_text()),
        },
        BackendSpec::External(cmd) => Box::new(ExternalTagger::spawn(cmd, direction)?),
        BackendSpec::Socket(path) => Box::new(ExternalTagger::connect(path, direction)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("replay".parse(), Ok(BackendSpec::Replay));
        assert_eq!("external:python worker.py --seed 1".parse(), Ok(BackendSpec::External("python worker.py --seed 1".into())));
        assert_eq!("socket:/tmp/t.sock".parse(), Ok(BackendSpec::Socket("/tmp/t.sock".into())));
        assert!("external:".parse::<BackendSpec>().is_err());
        assert!("gpt".parse::<BackendSpec>().is_err());
    }
}
