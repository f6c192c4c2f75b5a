//! Client-side session state, independent of any transport.
//!
//! [`SessionState`] numbers outgoing messages, validates payloads before
//! they reach the wire, and builds the frames a session sends. The live
//! TCP client in [`crate::net`] drives it against sockets; simulation
//! components drive it against in-process brokers.

use std::collections::BTreeMap;

use crate::broker::{is_dlq_name, is_system_topic};
use crate::protocol::{
    Command, Document, Envelope, Frame, SchemaSet, ValidationMode, Violation,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("no schema for message type {0}")]
    UnknownMessageType(String),
    #[error("invalid {type_name} document: {}", render(violations))]
    Validation {
        type_name: String,
        violations: Vec<Violation>,
    },
}

fn render(violations: &[Violation]) -> String {
    let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    lines.join("; ")
}

/// What a domain owner emits after processing one contribution: accept it
/// into the published picture, or turn it back. Either way the output is
/// correlated to the contribution that caused it.
#[derive(Debug, Clone)]
pub enum OwnerOutput {
    Publication {
        message_type: String,
        payload: Document,
    },
    Rejection {
        message_type: String,
        payload: Document,
    },
}

/// Sans-io client core: one per connection.
#[derive(Debug)]
pub struct SessionState {
    client_id: String,
    relay: bool,
    schemas: SchemaSet,
    mode: ValidationMode,
    seq: u64,
    sub_seq: u64,
    subscriptions: BTreeMap<String, String>,
}

impl SessionState {
    pub fn new(client_id: impl Into<String>, schemas: SchemaSet) -> SessionState {
        SessionState {
            client_id: client_id.into(),
            relay: false,
            schemas,
            mode: ValidationMode::Strict,
            seq: 0,
            sub_seq: 0,
            subscriptions: BTreeMap::new(),
        }
    }

    /// Marks this session as a federation relay; the broker exempts relays
    /// from ownership checks and re-validation, and relays skip client-side
    /// validation since they forward others' messages verbatim.
    pub fn relay(mut self) -> SessionState {
        self.relay = true;
        self
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn is_relay(&self) -> bool {
        self.relay
    }

    pub fn schemas(&self) -> &SchemaSet {
        &self.schemas
    }

    pub fn set_validation_mode(&mut self, mode: ValidationMode) {
        self.mode = mode;
    }

    /// Topic the broker opened for this client's request replies.
    pub fn reply_topic(&self) -> String {
        format!("_reply.{}", self.client_id)
    }

    pub fn next_message_id(&mut self) -> String {
        self.seq += 1;
        format!("{}:{}", self.client_id, self.seq)
    }

    /// A fresh broker-unique subscription id.
    pub fn next_subscription_id(&mut self) -> String {
        self.sub_seq += 1;
        format!("{}:s{}", self.client_id, self.sub_seq)
    }

    pub fn note_subscribed(&mut self, subscription_id: impl Into<String>, topic: impl Into<String>) {
        self.subscriptions.insert(subscription_id.into(), topic.into());
    }

    pub fn note_unsubscribed(&mut self, subscription_id: &str) {
        self.subscriptions.remove(subscription_id);
    }

    pub fn subscription_topic(&self, subscription_id: &str) -> Option<&str> {
        self.subscriptions.get(subscription_id).map(String::as_str)
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.subscriptions.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    /// Validates and wraps a payload for `topic`. Messages to `_` and
    /// dead-letter topics skip validation (plumbing, not domain data);
    /// everything else needs a schema and a clean document, so malformed
    /// messages die here instead of at the broker.
    pub fn build_publish(
        &mut self,
        topic: impl Into<String>,
        message_type: impl Into<String>,
        payload: Document,
        now_ms: i64,
    ) -> Result<Envelope, ClientError> {
        let topic = topic.into();
        let message_type = message_type.into();
        if !self.relay && !is_system_topic(&topic) && !is_dlq_name(&topic) {
            if self.schemas.latest(&message_type).is_none() {
                return Err(ClientError::UnknownMessageType(message_type));
            }
            let violations = self.schemas.validate_with(&payload, &message_type, self.mode);
            if !violations.is_empty() {
                return Err(ClientError::Validation {
                    type_name: message_type,
                    violations,
                });
            }
        }
        let message_id = self.next_message_id();
        Ok(Envelope::new(
            topic,
            message_id,
            self.client_id.clone(),
            message_type,
            now_ms,
            payload,
        ))
    }

    /// A publish wired for request/reply: the reply lands on this client's
    /// reply topic carrying the returned envelope's correlation id.
    pub fn build_request(
        &mut self,
        topic: impl Into<String>,
        message_type: impl Into<String>,
        payload: Document,
        now_ms: i64,
    ) -> Result<Envelope, ClientError> {
        let env = self.build_publish(topic, message_type, payload, now_ms)?;
        let correlation = env.message_id.clone();
        Ok(env.with_reply_to(self.reply_topic()).with_correlation(correlation))
    }

    /// Owner-side response to a contribution, targeted at the domain's
    /// publication or rejection topic and correlated to the contribution.
    pub fn build_owner_output(
        &mut self,
        domain: &str,
        output: OwnerOutput,
        contribution: &Envelope,
        now_ms: i64,
    ) -> Result<Envelope, ClientError> {
        let (suffix, message_type, payload) = match output {
            OwnerOutput::Publication { message_type, payload } => {
                ("publication", message_type, payload)
            }
            OwnerOutput::Rejection { message_type, payload } => {
                ("rejection", message_type, payload)
            }
        };
        let env = self.build_publish(format!("{domain}.{suffix}"), message_type, payload, now_ms)?;
        Ok(env.with_correlation(contribution.message_id.clone()))
    }

    pub fn connect_frame(&self) -> Frame {
        let mut frame = Frame::new(Command::Connect);
        frame.set_header("client-id", &self.client_id);
        if self.relay {
            frame.set_header("relay", "true");
        }
        frame
    }

    pub fn subscribe_frame(&self, subscription_id: &str, topic: &str) -> Frame {
        let mut frame = Frame::new(Command::Subscribe);
        frame.set_header("topic", topic);
        frame.set_header("subscription-id", subscription_id);
        frame
    }

    pub fn unsubscribe_frame(&self, subscription_id: &str) -> Frame {
        let mut frame = Frame::new(Command::Unsubscribe);
        frame.set_header("subscription-id", subscription_id);
        frame
    }

    pub fn ack_frame(&self, subscription_id: &str, message_id: &str) -> Frame {
        let mut frame = Frame::new(Command::Ack);
        frame.set_header("message-id", message_id);
        frame.set_header("subscription-id", subscription_id);
        frame
    }

    pub fn own_frame(&self, domain: &str) -> Frame {
        let mut frame = Frame::new(Command::Own);
        frame.set_header("domain", domain);
        frame
    }

    pub fn ping_frame(&self) -> Frame {
        Frame::new(Command::Ping)
    }

    pub fn disconnect_frame(&self) -> Frame {
        Frame::new(Command::Disconnect)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_schema_set;

    fn schemas() -> SchemaSet {
        parse_schema_set("message met.update v1\nfield qnh int required min=900 max=1100\n")
            .unwrap()
    }

    fn payload(qnh: i64) -> Document {
        let mut doc = Document::new();
        doc.put("qnh", crate::protocol::Value::Int(qnh));
        doc
    }

    #[test]
    fn message_ids_are_sequential_and_prefixed() {
        let mut s = SessionState::new("cwp1", schemas());
        let a = s.build_publish("qnh", "met.update", payload(1013), 0).unwrap();
        let b = s.build_publish("qnh", "met.update", payload(1014), 0).unwrap();
        assert_eq!(a.message_id, "cwp1:1");
        assert_eq!(b.message_id, "cwp1:2");
        assert_eq!(a.sender_id, "cwp1");
        assert!(a.hop_trace.is_empty());
    }

    #[test]
    fn build_publish_validates_client_side() {
        let mut s = SessionState::new("cwp1", schemas());
        let err = s.build_publish("qnh", "met.update", payload(2000), 0).unwrap_err();
        assert!(matches!(err, ClientError::Validation { .. }), "{err}");
        let err = s.build_publish("qnh", "unknown.type", payload(1013), 0).unwrap_err();
        assert!(matches!(err, ClientError::UnknownMessageType(_)), "{err}");
    }

    #[test]
    fn system_and_dlq_topics_skip_validation() {
        let mut s = SessionState::new("cli", schemas());
        s.build_publish("_sys.topics", "sys.topics.request", Document::new(), 0)
            .unwrap();
        s.build_publish("qnh.dlq", "anything", Document::new(), 0).unwrap();
    }

    #[test]
    fn relays_skip_validation() {
        let mut s = SessionState::new("bridge_central", schemas()).relay();
        assert!(s.is_relay());
        s.build_publish("qnh", "unvalidated", Document::new(), 0).unwrap();
        assert_eq!(s.connect_frame().header("relay"), Some("true"));
    }

    #[test]
    fn requests_carry_reply_routing() {
        let mut s = SessionState::new("cli", schemas());
        let req = s
            .build_request("_sys.topics", "sys.topics.request", Document::new(), 5)
            .unwrap();
        assert_eq!(req.reply_to.as_deref(), Some("_reply.cli"));
        assert_eq!(req.correlation_id.as_deref(), Some("cli:1"));
    }

    #[test]
    fn owner_outputs_target_domain_topics_and_correlate() {
        let mut owner = SessionState::new("fdps", schemas());
        let contribution = Envelope::new(
            "met.contribution",
            "cwp1:9",
            "cwp1",
            "met.update",
            3,
            payload(1013),
        );
        let publication = owner
            .build_owner_output(
                "met",
                OwnerOutput::Publication {
                    message_type: "met.update".into(),
                    payload: payload(1013),
                },
                &contribution,
                4,
            )
            .unwrap();
        assert_eq!(publication.topic, "met.publication");
        assert_eq!(publication.correlation_id.as_deref(), Some("cwp1:9"));
        let rejection = owner
            .build_owner_output(
                "met",
                OwnerOutput::Rejection {
                    message_type: "met.update".into(),
                    payload: payload(900),
                },
                &contribution,
                4,
            )
            .unwrap();
        assert_eq!(rejection.topic, "met.rejection");
    }

    #[test]
    fn subscription_ids_are_unique_and_tracked() {
        let mut s = SessionState::new("cwp1", schemas());
        let a = s.next_subscription_id();
        let b = s.next_subscription_id();
        assert_ne!(a, b);
        s.note_subscribed(&a, "qnh");
        assert_eq!(s.subscription_topic(&a), Some("qnh"));
        s.note_unsubscribed(&a);
        assert_eq!(s.subscription_topic(&a), None);
    }

    #[test]
    fn frames_carry_required_headers() {
        let s = SessionState::new("cwp1", schemas());
        for frame in [
            s.connect_frame(),
            s.subscribe_frame("s1", "qnh"),
            s.unsubscribe_frame("s1"),
            s.ack_frame("s1", "x:1"),
            s.own_frame("fpl"),
            s.ping_frame(),
            s.disconnect_frame(),
        ] {
            assert_eq!(frame.missing_required_header(), None, "{:?}", frame.command());
        }
    }
}
