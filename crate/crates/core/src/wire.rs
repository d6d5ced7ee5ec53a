//! Line-delimited JSON request/response transport shared by the masked-LM
//! backend and the tagger plugin.
//!
//! Every request is one JSON object on one line:
//! `{"v":1,"id":<u64>,"op":"<name>", ...payload}`. The peer answers with one
//! line `{"v":1,"id":<same>,"ok":true, ...payload}` or
//! `{"v":1,"id":<same>,"ok":false,"error":"<message>"}`. See
//! `docs/wire-protocol.md` for the per-service payloads.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u64 = 1;

struct Inner {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    next_id: u64,
}

/// A synchronous request/response channel. One request is in flight at a time.
pub struct LineChannel {
    inner: Mutex<Inner>,
    child: Mutex<Option<Child>>,
    endpoint: String,
}

impl LineChannel {
    /// Opens `tcp://host:port` or `exec:<program> [args...]`.
    pub fn connect(endpoint: &str) -> Result<Self> {
        if let Some(addr) = endpoint.strip_prefix("tcp://") {
            let stream = TcpStream::connect(addr)
                .map_err(|e| Error::Backend(format!("cannot reach {endpoint}: {e}")))?;
            let reader = BufReader::new(stream.try_clone()?);
            let mut channel = LineChannel::from_streams(reader, stream);
            channel.endpoint = endpoint.to_string();
            Ok(channel)
        } else if let Some(cmd) = endpoint.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| Error::Config(format!("empty command in endpoint `{endpoint}`")))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Backend(format!("cannot start `{cmd}`: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let mut channel = LineChannel::from_streams(BufReader::new(stdout), stdin);
            channel.child = Mutex::new(Some(child));
            channel.endpoint = endpoint.to_string();
            Ok(channel)
        } else {
            Err(Error::Config(format!(
                "unsupported endpoint `{endpoint}` (expected tcp://host:port or exec:command)"
            )))
        }
    }

    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        LineChannel {
            inner: Mutex::new(Inner {
                reader: Box::new(reader),
                writer: Box::new(writer),
                next_id: 1,
            }),
            child: Mutex::new(None),
            endpoint: "<streams>".to_string(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends `op` with the fields of `payload` and returns the response payload
    /// (envelope fields removed).
    pub fn call(&self, op: &str, payload: Value) -> Result<Map<String, Value>> {
        let mut inner = self.inner.lock().map_err(|_| Error::Backend("channel poisoned".into()))?;
        let id = inner.next_id;
        inner.next_id += 1;

        let mut request = match payload {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => return Err(Error::Protocol(format!("payload must be an object, got {other}"))),
        };
        request.insert("v".into(), PROTOCOL_VERSION.into());
        request.insert("id".into(), id.into());
        request.insert("op".into(), op.into());
        let line = serde_json::to_string(&Value::Object(request))?;
        writeln!(inner.writer, "{line}")
            .and_then(|_| inner.writer.flush())
            .map_err(|e| Error::Backend(format!("{}: write failed: {e}", self.endpoint)))?;

        let mut response = String::new();
        let n = inner
            .reader
            .read_line(&mut response)
            .map_err(|e| Error::Backend(format!("{}: read failed: {e}", self.endpoint)))?;
        if n == 0 {
            return Err(Error::Backend(format!("{}: connection closed", self.endpoint)));
        }
        let mut map = match serde_json::from_str::<Value>(&response)
            .map_err(|e| Error::Protocol(format!("malformed response: {e}")))?
        {
            Value::Object(map) => map,
            other => return Err(Error::Protocol(format!("response is not an object: {other}"))),
        };
        if map.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(Error::Protocol(format!("response id mismatch, expected {id}")));
        }
        match map.get("ok").and_then(Value::as_bool) {
            Some(true) => {}
            Some(false) => {
                let msg = map.get("error").and_then(Value::as_str).unwrap_or("unspecified error");
                return Err(Error::Backend(format!("{}: {msg}", self.endpoint)));
            }
            None => return Err(Error::Protocol("response lacks `ok`".into())),
        }
        for key in ["v", "id", "ok"] {
            map.remove(key);
        }
        Ok(map)
    }
}

impl Drop for LineChannel {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            if let Some(mut child) = child.take() {
                // Closing stdin is the shutdown signal; reap afterwards.
                if let Ok(mut inner) = self.inner.lock() {
                    inner.writer = Box::new(std::io::sink());
                }
                let _ = child.wait();
            }
        }
    }
}

/// Serves requests read from `reader` until end of input. The handler gets
/// the operation name and the full request object.
pub fn serve<R, W, H>(reader: R, mut writer: W, mut handler: H) -> Result<()>
where
    R: BufRead,
    W: Write,
    H: FnMut(&str, &Map<String, Value>) -> Result<Value>,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, result) = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(req)) => {
                let id = req.get("id").cloned().unwrap_or(Value::Null);
                let result = match (req.get("v").and_then(Value::as_u64), req.get("op").and_then(Value::as_str)) {
                    (Some(PROTOCOL_VERSION), Some(op)) => handler(op, &req),
                    (Some(v), _) if v != PROTOCOL_VERSION => {
                        Err(Error::Protocol(format!("unsupported protocol version {v}")))
                    }
                    _ => Err(Error::Protocol("request lacks `v` or `op`".into())),
                };
                (id, result)
            }
            Ok(_) => (Value::Null, Err(Error::Protocol("request is not an object".into()))),
            Err(e) => (Value::Null, Err(Error::Protocol(format!("malformed request: {e}")))),
        };
        let mut response = Map::new();
        response.insert("v".into(), PROTOCOL_VERSION.into());
        response.insert("id".into(), id);
        match result {
            Ok(Value::Object(payload)) => {
                response.insert("ok".into(), true.into());
                response.extend(payload);
            }
            Ok(Value::Null) => {
                response.insert("ok".into(), true.into());
            }
            Ok(other) => {
                response.insert("ok".into(), false.into());
                response.insert("error".into(), format!("handler returned non-object {other}").into());
            }
            Err(e) => {
                response.insert("ok".into(), false.into());
                response.insert("error".into(), e.to_string().into());
            }
        }
        writeln!(writer, "{}", Value::Object(response))?;
        writer.flush()?;
    }
    Ok(())
}

/// Fetches a required field from a request or response object.
pub fn field<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    map.get(key).ok_or_else(|| Error::Protocol(format!("missing field `{key}`")))
}

pub fn decode<T: serde::de::DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<T> {
    serde_json::from_value(field(map, key)?.clone()).map_err(|e| Error::Protocol(format!("field `{key}`: {e}")))
}

/// Runs `service` on a thread, connected to the returned channel through an
/// in-memory duplex pipe.
pub fn spawn_service<F>(service: F) -> LineChannel
where
    F: FnOnce(Box<dyn BufRead + Send>, Box<dyn Write + Send>) + Send + 'static,
{
    let (req_tx, req_rx) = pipe::pipe();
    let (resp_tx, resp_rx) = pipe::pipe();
    std::thread::spawn(move || service(Box::new(BufReader::new(req_rx)), Box::new(resp_tx)));
    LineChannel::from_streams(BufReader::new(resp_rx), req_tx)
}

/// [`spawn_service`] around a plain request handler.
pub fn spawn_in_memory<H>(handler: H) -> LineChannel
where
    H: FnMut(&str, &Map<String, Value>) -> Result<Value> + Send + 'static,
{
    spawn_service(move |reader, writer| {
        let _ = serve(reader, writer, handler);
    })
}

mod pipe {
    use std::io::{Read, Write};
    use std::sync::mpsc::{channel, Receiver, Sender};

    pub struct PipeWriter(Sender<Vec<u8>>);
    pub struct PipeReader {
        rx: Receiver<Vec<u8>>,
        buf: Vec<u8>,
        pos: usize,
    }

    pub fn pipe() -> (PipeWriter, PipeReader) {
        let (tx, rx) = channel();
        (PipeWriter(tx), PipeReader { rx, buf: Vec::new(), pos: 0 })
    }

    impl Write for PipeWriter {
        fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
            self.0
                .send(data.to_vec())
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "pipe closed"))?;
            Ok(data.len())
        }

        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    impl Read for PipeReader {
        fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
            while self.pos >= self.buf.len() {
                match self.rx.recv() {
                    Ok(chunk) => {
                        self.buf = chunk;
                        self.pos = 0;
                    }
                    Err(_) => return Ok(0),
                }
            }
            let n = out.len().min(self.buf.len() - self.pos);
            out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
            self.pos += n;
            Ok(n)
        }
    }
}
