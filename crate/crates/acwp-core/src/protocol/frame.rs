use std::collections::BTreeMap;
use std::io::{self, BufRead, Read};

use thiserror::Error;

/// Default cap on one encoded frame, including headers and body.
pub const DEFAULT_MAX_FRAME: usize = 1024 * 1024;

const START_PREFIX: &str = "ACWP/1 ";

/// Frame command verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Connect,
    Connected,
    Subscribe,
    Unsubscribe,
    Publish,
    Message,
    Ack,
    Own,
    Error,
    Ping,
    Pong,
    Disconnect,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Connect => "CONNECT",
            Command::Connected => "CONNECTED",
            Command::Subscribe => "SUBSCRIBE",
            Command::Unsubscribe => "UNSUBSCRIBE",
            Command::Publish => "PUBLISH",
            Command::Message => "MESSAGE",
            Command::Ack => "ACK",
            Command::Own => "OWN",
            Command::Error => "ERROR",
            Command::Ping => "PING",
            Command::Pong => "PONG",
            Command::Disconnect => "DISCONNECT",
        }
    }

    pub fn from_token(token: &str) -> Option<Command> {
        Some(match token {
            "CONNECT" => Command::Connect,
            "CONNECTED" => Command::Connected,
            "SUBSCRIBE" => Command::Subscribe,
            "UNSUBSCRIBE" => Command::Unsubscribe,
            "PUBLISH" => Command::Publish,
            "MESSAGE" => Command::Message,
            "ACK" => Command::Ack,
            "OWN" => Command::Own,
            "ERROR" => Command::Error,
            "PING" => Command::Ping,
            "PONG" => Command::Pong,
            "DISCONNECT" => Command::Disconnect,
            _ => return None,
        })
    }

    /// Headers a well-formed frame of this command must carry.
    pub fn required_headers(self) -> &'static [&'static str] {
        match self {
            Command::Connect => &["client-id"],
            Command::Subscribe => &["topic", "subscription-id"],
            Command::Unsubscribe => &["subscription-id"],
            Command::Publish => &[
                "topic",
                "message-id",
                "sender-id",
                "message-type",
                "timestamp",
            ],
            Command::Message => &[
                "topic",
                "message-id",
                "sender-id",
                "message-type",
                "timestamp",
                "subscription-id",
                "hop-trace",
            ],
            Command::Ack => &["message-id", "subscription-id"],
            Command::Own => &["domain"],
            Command::Error => &["error-code"],
            Command::Connected | Command::Ping | Command::Pong | Command::Disconnect => &[],
        }
    }
}

/// One wire frame: start line, lowercase headers, byte body.
///
/// `content-length` is maintained internally and always equals the body
/// length; headers encode in bytewise name order, so equal frames encode
/// byte-identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    command: Command,
    headers: BTreeMap<String, String>,
    body: Vec<u8>,
}

impl Frame {
    pub fn new(command: Command) -> Frame {
        let mut headers = BTreeMap::new();
        headers.insert("content-length".to_string(), "0".to_string());
        Frame {
            command,
            headers,
            body: Vec::new(),
        }
    }

    pub fn command(&self) -> Command {
        self.command
    }

    /// Sets a header. Names and values are protocol tokens, not free text;
    /// panics on a malformed name, a `\n` in the value, or an attempt to
    /// set `content-length` (use [`set_body`](Frame::set_body)).
    pub fn set_header(&mut self, name: &str, value: impl Into<String>) -> &mut Frame {
        assert!(header_name_ok(name), "bad header name {name:?}");
        assert!(name != "content-length", "content-length tracks the body");
        let value = value.into();
        assert!(!value.contains('\n'), "newline in header value");
        self.headers.insert(name.to_string(), value);
        self
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Frame {
        self.set_header(name, value);
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(String::as_str)
    }

    pub fn headers(&self) -> impl Iterator<Item = (&str, &str)> {
        self.headers.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn set_body(&mut self, body: Vec<u8>) -> &mut Frame {
        self.headers
            .insert("content-length".to_string(), body.len().to_string());
        self.body = body;
        self
    }

    pub fn with_body(mut self, body: Vec<u8>) -> Frame {
        self.set_body(body);
        self
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// First required header missing for this frame's command, if any.
    pub fn missing_required_header(&self) -> Option<&'static str> {
        self.command
            .required_headers()
            .iter()
            .copied()
            .find(|name| !self.headers.contains_key(*name))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.body.len());
        out.extend_from_slice(START_PREFIX.as_bytes());
        out.extend_from_slice(self.command.as_str().as_bytes());
        out.push(b'\n');
        for (name, value) in &self.headers {
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(b": ");
            out.extend_from_slice(value.as_bytes());
            out.push(b'\n');
        }
        out.push(b'\n');
        out.extend_from_slice(&self.body);
        out
    }

    /// Reads exactly one frame from the stream.
    ///
    /// Returns `Ok(None)` on a clean end of stream (no bytes before EOF);
    /// EOF anywhere inside a frame is an error.
    pub fn decode(reader: &mut impl BufRead) -> Result<Option<Frame>, FrameError> {
        Frame::decode_with_limit(reader, DEFAULT_MAX_FRAME)
    }

    pub fn decode_with_limit(
        reader: &mut impl BufRead,
        limit: usize,
    ) -> Result<Option<Frame>, FrameError> {
        let start = match read_line(reader, limit)? {
            Some(line) => line,
            None => return Ok(None),
        };
        let token = start
            .strip_prefix(START_PREFIX)
            .ok_or_else(|| FrameError::Syntax(format!("bad start line {start:?}")))?;
        let command = Command::from_token(token)
            .ok_or_else(|| FrameError::UnknownCommand(token.to_string()))?;

        let mut headers = BTreeMap::new();
        loop {
            let line = read_line(reader, limit)?
                .ok_or_else(|| FrameError::Syntax("end of stream inside headers".into()))?;
            if line.is_empty() {
                break;
            }
            let (name, value) = line
                .split_once(": ")
                .ok_or_else(|| FrameError::Syntax(format!("bad header line {line:?}")))?;
            if !header_name_ok(name) {
                return Err(FrameError::Syntax(format!("bad header name {name:?}")));
            }
            if headers.contains_key(name) {
                return Err(FrameError::Syntax(format!("duplicate header {name:?}")));
            }
            headers.insert(name.to_string(), value.to_string());
        }

        let length: usize = headers
            .get("content-length")
            .ok_or_else(|| FrameError::Syntax("missing content-length header".into()))?
            .parse()
            .map_err(|_| FrameError::Syntax("bad content-length value".into()))?;
        if length > limit {
            return Err(FrameError::TooLarge {
                size: length,
                limit,
            });
        }
        let mut body = vec![0u8; length];
        let mut got = 0;
        while got < length {
            match reader.read(&mut body[got..]) {
                Ok(0) => {
                    return Err(FrameError::LengthMismatch {
                        expected: length,
                        got,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(FrameError::Io(e)),
            }
        }
        Ok(Some(Frame {
            command,
            headers,
            body,
        }))
    }
}

/// Reads one LF-terminated line (LF stripped). `Ok(None)` only when the
/// stream ends before any byte of the line.
fn read_line(reader: &mut impl BufRead, limit: usize) -> Result<Option<String>, FrameError> {
    let mut raw = Vec::new();
    let mut limited = reader.take((limit + 2) as u64);
    limited.read_until(b'\n', &mut raw)?;
    if raw.is_empty() {
        return Ok(None);
    }
    if raw.len() > limit {
        return Err(FrameError::TooLarge {
            size: raw.len(),
            limit,
        });
    }
    if raw.last() != Some(&b'\n') {
        return Err(FrameError::Syntax("end of stream inside frame".into()));
    }
    raw.pop();
    String::from_utf8(raw).map(Some).map_err(|_| {
        FrameError::Syntax("invalid utf-8 in frame head".into())
    })
}

fn header_name_ok(name: &str) -> bool {
    let bytes = name.as_bytes();
    matches!(bytes.first(), Some(b'a'..=b'z'))
        && bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'-')
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame syntax: {0}")]
    Syntax(String),
    #[error("unknown command {0:?}")]
    UnknownCommand(String),
    #[error("body length mismatch: declared {expected}, got {got} before end of stream")]
    LengthMismatch { expected: usize, got: usize },
    #[error("frame of {size} bytes exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}
