//! Client side of the external tagger protocol.

use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::net::UnixStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::protocol::{write_message, Request, Response};
use super::{Capabilities, Direction, TagBatch, Tagger, TaggerError, TrainPair, TrainReport};

/// A tagger living in another process, reached over its standard streams or
/// a Unix socket.
pub struct ExternalTagger {
    direction: Direction,
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    stderr: Arc<Mutex<String>>,
    deterministic: bool,
}

impl ExternalTagger {
    /// Spawn `command` (program followed by whitespace-separated arguments).
    pub fn spawn(command: &str, direction: Direction) -> Result<Self, TaggerError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| TaggerError::failure("empty backend command"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| TaggerError::failure(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                sink.lock().unwrap().push_str(&String::from_utf8_lossy(&buf[..n]));
            }
        });
        Ok(ExternalTagger {
            direction,
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
            stderr,
            deterministic: false,
        })
    }

    pub fn connect(socket: impl AsRef<Path>, direction: Direction) -> Result<Self, TaggerError> {
        let stream = UnixStream::connect(socket.as_ref())
            .map_err(|e| TaggerError::failure(format!("cannot connect to {}: {e}", socket.as_ref().display())))?;
        Self::from_stream(stream, direction)
    }

    pub fn from_stream(stream: UnixStream, direction: Direction) -> Result<Self, TaggerError> {
        let read_half = stream.try_clone().map_err(|e| TaggerError::failure(e.to_string()))?;
        Ok(ExternalTagger {
            direction,
            reader: Box::new(BufReader::new(read_half)),
            writer: Box::new(stream),
            child: None,
            stderr: Arc::new(Mutex::new(String::new())),
            deterministic: false,
        })
    }

    /// Declare the remote deterministic (it is assumed not to be).
    pub fn deterministic(mut self, yes: bool) -> Self {
        self.deterministic = yes;
        self
    }

    fn diagnostics(&mut self) -> String {
        let mut d = String::new();
        if let Some(child) = self.child.as_mut() {
            // a worker that just closed its pipe is usually about to exit
            for _ in 0..50 {
                if let Ok(Some(status)) = child.try_wait() {
                    d.push_str(&format!("process exited with {status}\n"));
                    break;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
        // give the stderr pump a moment to drain after a crash
        thread::sleep(Duration::from_millis(20));
        d.push_str(&self.stderr.lock().unwrap());
        d
    }

    fn fail(&mut self, message: String) -> TaggerError {
        TaggerError::BackendFailure { message, diagnostics: self.diagnostics() }
    }

    fn request(&mut self, req: &Request) -> Result<Response, TaggerError> {
        if let Err(e) = write_message(&mut self.writer, req) {
            return Err(self.fail(format!("write to backend failed: {e}")));
        }
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => return Err(self.fail("backend closed the connection".into())),
            Ok(_) => {}
            Err(e) => return Err(self.fail(format!("read from backend failed: {e}"))),
        }
        let resp: Response = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(format!("malformed response: {e}"))),
        };
        if !resp.ok {
            let msg = resp.error.unwrap_or_else(|| "unspecified error".into());
            return Err(self.fail(format!("backend error: {msg}")));
        }
        Ok(resp)
    }

    /// Ask the remote to exit and reap it.
    pub fn shutdown(&mut self) -> Result<(), TaggerError> {
        let r = self.request(&Request::Shutdown).map(|_| ());
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
        r
    }
}

impl Drop for ExternalTagger {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = write_message(&mut self.writer, &Request::Shutdown);
            if !matches!(child.try_wait(), Ok(Some(_))) {
                thread::sleep(Duration::from_millis(50));
                if !matches!(child.try_wait(), Ok(Some(_))) {
                    let _ = child.kill();
                }
            }
            let _ = child.wait();
        }
    }
}

impl Tagger for ExternalTagger {
    fn name(&self) -> &'static str {
        "external"
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { trainable: true, deterministic: self.deterministic }
    }

    fn train(&mut self, pairs: &[TrainPair]) -> Result<TrainReport, TaggerError> {
        if pairs.is_empty() {
            return Err(TaggerError::EmptyTrainingSet);
        }
        let resp = self.request(&Request::Train { direction: self.direction, pairs: pairs.to_vec() })?;
        match resp.loss {
            Some(loss) => Ok(TrainReport { pairs: pairs.len(), loss: Some(loss) }),
            None => Err(self.fail("train acknowledged without a loss".into())),
        }
    }

    fn tag(&mut self, inputs: &[String]) -> Result<TagBatch, TaggerError> {
        let resp = self.request(&Request::Tag { direction: self.direction, inputs: inputs.to_vec() })?;
        let Some(raw) = resp.outputs else {
            return Err(self.fail("tag response without outputs".into()));
        };
        if raw.len() != inputs.len() {
            return Err(self.fail(format!("{} outputs for {} inputs", raw.len(), inputs.len())));
        }
        let failures = raw.iter().filter(|o| o.is_none()).count();
        let outputs = raw.into_iter().map(Option::unwrap_or_default).collect();
        Ok(TagBatch { inputs: inputs.to_vec(), outputs, failures })
    }

    fn reset(&mut self) -> Result<(), TaggerError> {
        self.request(&Request::Reset).map(|_| ())
    }
}
