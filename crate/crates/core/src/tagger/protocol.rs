//! Wire format for external taggers: one JSON object per line, UTF-8, strictly
//! request/response with no interleaving.
//!
//! ```text
//! → {"op":"train","direction":"text2logic","pairs":[{"in":"..","out":".."}]}
//! ← {"ok":true,"loss":0.42}
//! → {"op":"tag","direction":"text2logic","inputs":[".."]}
//! ← {"ok":true,"outputs":[".."]}
//! → {"op":"reset"}      ← {"ok":true}
//! → {"op":"shutdown"}   ← {"ok":true}
//! ← {"ok":false,"error":"..."}
//! ```
//!
//! A `null` entry in `outputs` marks a per-item failure.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Direction, Tagger, TrainPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Train { direction: Direction, pairs: Vec<TrainPair> },
    Tag { direction: Direction, inputs: Vec<String> },
    Reset,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<Option<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok() -> Self {
        Response { ok: true, ..Default::default() }
    }

    pub fn error(msg: impl Into<String>) -> Self {
        Response { ok: false, error: Some(msg.into()), ..Default::default() }
    }
}

pub fn write_message<T: Serialize>(mut w: impl Write, msg: &T) -> io::Result<()> {
    let mut line = serde_json::to_vec(msg).map_err(io::Error::other)?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()
}

fn pick(
    backends: &mut BTreeMap<Direction, Box<dyn Tagger>>,
    d: Direction,
) -> Result<&mut Box<dyn Tagger>, String> {
    backends.get_mut(&d).ok_or_else(|| format!("no {d} backend"))
}

fn handle(backends: &mut BTreeMap<Direction, Box<dyn Tagger>>, req: Request) -> Response {
    match req {
        Request::Train { direction, pairs } => match pick(backends, direction) {
            Ok(b) => match super::train(b.as_mut(), &pairs) {
                Ok(r) => Response { loss: Some(r.loss.unwrap_or(0.0)), ..Response::ok() },
                Err(e) => Response::error(e.to_string()),
            },
            Err(e) => Response::error(e),
        },
        Request::Tag { direction, inputs } => match pick(backends, direction) {
            Ok(b) => match super::tag(b.as_mut(), &inputs) {
                Ok(batch) => Response {
                    outputs: Some(batch.outputs.into_iter().map(|o| (!o.is_empty()).then_some(o)).collect()),
                    ..Response::ok()
                },
                Err(e) => Response::error(e.to_string()),
            },
            Err(e) => Response::error(e),
        },
        Request::Reset => {
            for b in backends.values_mut() {
                if let Err(e) = b.reset() {
                    return Response::error(e.to_string());
                }
            }
            Response::ok()
        }
        Request::Shutdown => Response::ok(),
    }
}

/// Serve in-process taggers over the wire protocol until `shutdown` or EOF.
pub fn serve(
    backends: &mut BTreeMap<Direction, Box<dyn Tagger>>,
    reader: impl BufRead,
    mut writer: impl Write,
) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, stop) = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Shutdown) => (Response::ok(), true),
            Ok(req) => (handle(backends, req), false),
            Err(e) => (Response::error(format!("malformed request: {e}")), false),
        };
        write_message(&mut writer, &resp)?;
        if stop {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::ReplayTagger;

    #[test]
    fn request_framing() {
        let r = Request::Train { direction: Direction::TextToLogic, pairs: vec![TrainPair::new("a", "b")] };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"train","direction":"text2logic","pairs":[{"in":"a","out":"b"}]}"#
        );
        assert_eq!(serde_json::to_string(&Request::Reset).unwrap(), r#"{"op":"reset"}"#);
        assert_eq!(serde_json::to_string(&Response::ok()).unwrap(), r#"{"ok":true}"#);
        assert_eq!(
            serde_json::to_string(&Response::error("x")).unwrap(),
            r#"{"ok":false,"error":"x"}"#
        );
    }

    #[test]
    fn serve_replay() {
        let mut backends: BTreeMap<Direction, Box<dyn Tagger>> = BTreeMap::new();
        backends.insert(Direction::TextToLogic, Box::new(ReplayTagger::new(Direction::TextToLogic)));
        let input = concat!(
            r#"{"op":"tag","direction":"text2logic","inputs":["a"]}"#, "\n",
            r#"{"op":"train","direction":"text2logic","pairs":[{"in":"a","out":"b"}]}"#, "\n",
            r#"{"op":"tag","direction":"text2logic","inputs":["a"]}"#, "\n",
            r#"{"op":"tag","direction":"logic2text","inputs":["a"]}"#, "\n",
            "garbage\n",
            r#"{"op":"shutdown"}"#, "\n",
            r#"{"op":"reset"}"#, "\n",
        );
        let mut out = Vec::new();
        serve(&mut backends, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 6, "stops after shutdown");
        assert_eq!(lines[0], r#"{"ok":true,"outputs":[null]}"#);
        assert_eq!(lines[1], r#"{"ok":true,"loss":0.0}"#);
        assert_eq!(lines[2], r#"{"ok":true,"outputs":["b"]}"#);
        assert!(lines[3].starts_with(r#"{"ok":false,"error":"no logic2text"#));
        assert!(lines[4].starts_with(r#"{"ok":false,"error":"malformed request"#));
        assert_eq!(lines[5], r#"{"ok":true}"#);
    }
}
