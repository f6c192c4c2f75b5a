use crate::protocol::{Document, Envelope, Value};

use super::topic::dlq_name;

/// Message type stamped on dead-letter record envelopes.
pub const DLQ_MESSAGE_TYPE: &str = "dlq.record";

/// Why a delivery was dead-lettered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlqReason {
    AckTimeout,
    ClientDisconnected,
}

impl DlqReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DlqReason::AckTimeout => "ack_timeout",
            DlqReason::ClientDisconnected => "client_disconnected",
        }
    }

    pub fn from_token(text: &str) -> Option<DlqReason> {
        match text {
            "ack_timeout" => Some(DlqReason::AckTimeout),
            "client_disconnected" => Some(DlqReason::ClientDisconnected),
            _ => None,
        }
    }
}

/// One failed delivery: exactly one record exists per (message,
/// subscription) failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlqRecord {
    pub original_topic: String,
    pub original_message_id: String,
    pub original_sender: String,
    pub original_message_type: String,
    pub failed_subscription_id: String,
    pub failed_client: String,
    pub reason: DlqReason,
    pub original_payload: Document,
}

impl DlqRecord {
    /// The record as a document: the failure metadata next to the original
    /// payload re-rooted under `original.`.
    pub fn to_document(&self) -> Document {
        let mut doc = Document::new();
        doc.put("original_topic", Value::text(&self.original_topic));
        doc.put("original_message_id", Value::text(&self.original_message_id));
        doc.put("original_sender", Value::text(&self.original_sender));
        doc.put(
            "original_message_type",
            Value::text(&self.original_message_type),
        );
        doc.put(
            "failed_subscription_id",
            Value::text(&self.failed_subscription_id),
        );
        doc.put("failed_client", Value::text(&self.failed_client));
        doc.put("reason", Value::text(self.reason.as_str()));
        for (path, value) in self.original_payload.iter() {
            let embedded = path.prefixed("original").expect("valid embedded path");
            doc.set(embedded, value.clone());
        }
        doc
    }

    pub fn from_document(doc: &Document) -> Option<DlqRecord> {
        let mut original_payload = Document::new();
        for (path, value) in doc.iter() {
            if let Some(rest) = path.as_str().strip_prefix("original.") {
                original_payload.set(rest.parse().ok()?, value.clone());
            }
        }
        Some(DlqRecord {
            original_topic: doc.get_text("original_topic")?.to_string(),
            original_message_id: doc.get_text("original_message_id")?.to_string(),
            original_sender: doc.get_text("original_sender")?.to_string(),
            original_message_type: doc.get_text("original_message_type")?.to_string(),
            failed_subscription_id: doc.get_text("failed_subscription_id")?.to_string(),
            failed_client: doc.get_text("failed_client")?.to_string(),
            reason: DlqReason::from_token(doc.get_text("reason")?)?,
            original_payload,
        })
    }

    /// The envelope the broker publishes on `<original_topic>.dlq`.
    /// Correlated to the failed message by its id.
    pub fn to_envelope(&self, broker_id: &str, message_id: String, now_ms: i64) -> Envelope {
        Envelope::new(
            dlq_name(&self.original_topic),
            message_id,
            broker_id,
            DLQ_MESSAGE_TYPE,
            now_ms,
            self.to_document(),
        )
        .with_correlation(&self.original_message_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> DlqRecord {
        let mut payload = Document::new();
        payload.put("callsign", Value::text("DLH123"));
        payload.put("route.0.fix", Value::text("WSN"));
        DlqRecord {
            original_topic: "fpl.publication".into(),
            original_message_id: "fdps:3".into(),
            original_sender: "fdps".into(),
            original_message_type: "fpl.record".into(),
            failed_subscription_id: "s2".into(),
            failed_client: "cwp2".into(),
            reason: DlqReason::AckTimeout,
            original_payload: payload,
        }
    }

    #[test]
    fn document_round_trips() {
        let rec = record();
        let doc = rec.to_document();
        assert_eq!(doc.get_text("reason"), Some("ack_timeout"));
        assert_eq!(doc.get_text("original.callsign"), Some("DLH123"));
        assert_eq!(DlqRecord::from_document(&doc), Some(rec));
    }

    #[test]
    fn envelope_targets_the_dlq_sibling() {
        let env = record().to_envelope("central", "central:9".into(), 4200);
        assert_eq!(env.topic, "fpl.publication.dlq");
        assert_eq!(env.message_type, DLQ_MESSAGE_TYPE);
        assert_eq!(env.correlation_id.as_deref(), Some("fdps:3"));
        assert_eq!(env.sender_id, "central");
        assert_eq!(env.timestamp_ms, 4200);
    }
}
