use thiserror::Error;

use super::document::{Document, DocumentError};
use super::frame::{Command, Frame};

/// One addressed message: routing headers plus a document payload.
///
/// `message_id` is `<sender_id>:<sequence>` with a per-sender monotonic
/// sequence. `hop_trace` lists the broker ids the message has passed
/// through, oldest first, pairwise distinct; relays refuse to forward to a
/// broker already in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: String,
    pub message_id: String,
    pub sender_id: String,
    pub message_type: String,
    pub timestamp_ms: i64,
    pub correlation_id: Option<String>,
    pub reply_to: Option<String>,
    pub hop_trace: Vec<String>,
    pub payload: Document,
}

impl Envelope {
    pub fn new(
        topic: impl Into<String>,
        message_id: impl Into<String>,
        sender_id: impl Into<String>,
        message_type: impl Into<String>,
        timestamp_ms: i64,
        payload: Document,
    ) -> Envelope {
        Envelope {
            topic: topic.into(),
            message_id: message_id.into(),
            sender_id: sender_id.into(),
            message_type: message_type.into(),
            timestamp_ms,
            correlation_id: None,
            reply_to: None,
            hop_trace: Vec::new(),
            payload,
        }
    }

    pub fn with_correlation(mut self, correlation_id: impl Into<String>) -> Envelope {
        self.correlation_id = Some(correlation_id.into());
        self
    }

    pub fn with_reply_to(mut self, reply_to: impl Into<String>) -> Envelope {
        self.reply_to = Some(reply_to.into());
        self
    }

    /// The PUBLISH frame a sender puts on the wire. `hop-trace` is written
    /// only once a broker has stamped the envelope.
    pub fn to_publish_frame(&self) -> Frame {
        self.to_frame(Command::Publish, None)
    }

    /// The MESSAGE frame a broker delivers to one subscription.
    pub fn to_message_frame(&self, subscription_id: &str) -> Frame {
        self.to_frame(Command::Message, Some(subscription_id))
    }

    fn to_frame(&self, command: Command, subscription_id: Option<&str>) -> Frame {
        let mut frame = Frame::new(command)
            .with_header("topic", &self.topic)
            .with_header("message-id", &self.message_id)
            .with_header("sender-id", &self.sender_id)
            .with_header("message-type", &self.message_type)
            .with_header("timestamp", self.timestamp_ms.to_string())
            .with_body(self.payload.encode());
        if let Some(correlation) = &self.correlation_id {
            frame.set_header("correlation-id", correlation);
        }
        if let Some(reply_to) = &self.reply_to {
            frame.set_header("reply-to", reply_to);
        }
        if command == Command::Message || !self.hop_trace.is_empty() {
            frame.set_header("hop-trace", self.hop_trace.join(","));
        }
        if let Some(sid) = subscription_id {
            frame.set_header("subscription-id", sid);
        }
        frame
    }

    /// Reads a PUBLISH or MESSAGE frame back into an envelope.
    pub fn from_frame(frame: &Frame) -> Result<Envelope, EnvelopeError> {
        if !matches!(frame.command(), Command::Publish | Command::Message) {
            return Err(EnvelopeError::UnsupportedCommand(
                frame.command().as_str(),
            ));
        }
        let required = |name: &'static str| {
            frame
                .header(name)
                .ok_or(EnvelopeError::MissingHeader(name))
        };
        let timestamp_ms: i64 =
            required("timestamp")?
                .parse()
                .map_err(|_| EnvelopeError::BadHeader {
                    name: "timestamp",
                    message: "not an integer".into(),
                })?;
        let hop_trace = match frame.header("hop-trace") {
            Some(raw) => parse_hop_trace(raw)?,
            None if frame.command() == Command::Message => {
                return Err(EnvelopeError::MissingHeader("hop-trace"))
            }
            None => Vec::new(),
        };
        Ok(Envelope {
            topic: required("topic")?.to_string(),
            message_id: required("message-id")?.to_string(),
            sender_id: required("sender-id")?.to_string(),
            message_type: required("message-type")?.to_string(),
            timestamp_ms,
            correlation_id: frame.header("correlation-id").map(str::to_string),
            reply_to: frame.header("reply-to").map(str::to_string),
            hop_trace,
            payload: Document::parse(frame.body()).map_err(EnvelopeError::Payload)?,
        })
    }
}

fn parse_hop_trace(raw: &str) -> Result<Vec<String>, EnvelopeError> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let hops: Vec<String> = raw.split(',').map(str::to_string).collect();
    for (at, hop) in hops.iter().enumerate() {
        if hop.is_empty() {
            return Err(EnvelopeError::BadHeader {
                name: "hop-trace",
                message: "empty broker id".into(),
            });
        }
        if hops[..at].contains(hop) {
            return Err(EnvelopeError::BadHeader {
                name: "hop-trace",
                message: format!("repeated broker id {hop:?}"),
            });
        }
    }
    Ok(hops)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("missing header {0}")]
    MissingHeader(&'static str),
    #[error("bad header {name}: {message}")]
    BadHeader {
        name: &'static str,
        message: String,
    },
    #[error("frame command {0} carries no envelope")]
    UnsupportedCommand(&'static str),
    #[error("payload: {0}")]
    Payload(DocumentError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Value;

    fn sample() -> Envelope {
        let mut payload = Document::new();
        payload.put("callsign", Value::text("DLH123"));
        payload.put("runway", Value::text("25R"));
        Envelope::new(
            "fpl.contribution",
            "cwp1:17",
            "cwp1",
            "fpl.update",
            1_718_000_000_123,
            payload,
        )
    }

    #[test]
    fn publish_frame_round_trips() {
        let env = sample();
        let frame = env.to_publish_frame();
        assert_eq!(frame.command(), Command::Publish);
        assert_eq!(frame.header("hop-trace"), None);
        assert_eq!(Envelope::from_frame(&frame).unwrap(), env);
    }

    #[test]
    fn optional_headers_round_trip() {
        let mut env = sample()
            .with_correlation("cwp1:9")
            .with_reply_to("_reply.cwp1");
        env.hop_trace = vec!["cwp1".into(), "central".into()];
        let frame = env.to_publish_frame();
        assert_eq!(frame.header("hop-trace"), Some("cwp1,central"));
        assert_eq!(Envelope::from_frame(&frame).unwrap(), env);
    }

    #[test]
    fn message_frame_carries_subscription_and_trace() {
        let mut env = sample();
        env.hop_trace = vec!["central".into()];
        let frame = env.to_message_frame("s1");
        assert_eq!(frame.command(), Command::Message);
        assert_eq!(frame.header("subscription-id"), Some("s1"));
        assert_eq!(frame.missing_required_header(), None);
        assert_eq!(Envelope::from_frame(&frame).unwrap(), env);
    }

    #[test]
    fn missing_headers_are_named() {
        let env = sample();
        let mut frame = Frame::new(Command::Publish).with_body(env.payload.encode());
        frame
            .set_header("topic", &env.topic)
            .set_header("sender-id", &env.sender_id)
            .set_header("message-type", &env.message_type)
            .set_header("timestamp", env.timestamp_ms.to_string());
        assert_eq!(
            Envelope::from_frame(&frame),
            Err(EnvelopeError::MissingHeader("message-id"))
        );
    }

    #[test]
    fn repeated_hop_is_rejected() {
        let frame = sample().to_publish_frame().with_header("hop-trace", "a,b,a");
        match Envelope::from_frame(&frame) {
            Err(EnvelopeError::BadHeader { name, .. }) => assert_eq!(name, "hop-trace"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_message_commands_are_refused() {
        let frame = Frame::new(Command::Ping);
        assert!(matches!(
            Envelope::from_frame(&frame),
            Err(EnvelopeError::UnsupportedCommand(_))
        ));
    }

    #[test]
    fn bad_payload_surfaces_document_error() {
        let mut frame = sample().to_publish_frame();
        frame.set_body(b"not a document".to_vec());
        assert!(matches!(
            Envelope::from_frame(&frame),
            Err(EnvelopeError::Payload(_))
        ));
    }
}
