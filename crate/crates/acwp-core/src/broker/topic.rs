use super::error::BrokerError;

/// Ack deadline applied when a topic or domain does not set one.
pub const DEFAULT_ACK_DEADLINE_MS: i64 = 2000;

/// What a topic carries and which access rules apply to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicKind {
    /// No access restrictions.
    Plain,
    /// `<domain>.contribution`: anyone publishes, only the owner subscribes.
    Contribution,
    /// `<domain>.publication`: only the owner publishes.
    Publication,
    /// `<domain>.rejection`: only the owner publishes.
    Rejection,
    /// `<name>.dlq` sibling; receives failed-delivery records.
    DeadLetter,
}

impl TopicKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicKind::Plain => "plain",
            TopicKind::Contribution => "contribution",
            TopicKind::Publication => "publication",
            TopicKind::Rejection => "rejection",
            TopicKind::DeadLetter => "dead_letter",
        }
    }
}

/// Whether a topic is visible to federation relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicScope {
    /// May be forwarded between brokers.
    Global,
    /// Never leaves the broker it is declared on.
    Local,
}

impl TopicScope {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicScope::Global => "global",
            TopicScope::Local => "local",
        }
    }
}

/// Declared attributes of one topic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicDescriptor {
    pub name: String,
    pub kind: TopicKind,
    pub scope: TopicScope,
    pub ack_deadline_ms: i64,
    /// Set for contribution/publication/rejection topics.
    pub domain: Option<String>,
}

impl TopicDescriptor {
    pub fn plain(name: impl Into<String>) -> TopicDescriptor {
        TopicDescriptor {
            name: name.into(),
            kind: TopicKind::Plain,
            scope: TopicScope::Global,
            ack_deadline_ms: DEFAULT_ACK_DEADLINE_MS,
            domain: None,
        }
    }

    pub fn local(name: impl Into<String>) -> TopicDescriptor {
        TopicDescriptor {
            scope: TopicScope::Local,
            ..TopicDescriptor::plain(name)
        }
    }

    pub fn with_deadline(mut self, ack_deadline_ms: i64) -> TopicDescriptor {
        self.ack_deadline_ms = ack_deadline_ms;
        self
    }

    /// Checks name shape, the `.dlq` reservation, the `<domain>.<kind>`
    /// naming rule, and the deadline bound.
    pub fn check(&self) -> Result<(), BrokerError> {
        if !topic_name_ok(&self.name) {
            return Err(BrokerError::InvalidTopicName {
                name: self.name.clone(),
                reason: "bad topic name shape".into(),
            });
        }
        if self.kind != TopicKind::DeadLetter && is_dlq_name(&self.name) {
            return Err(BrokerError::ReservedSuffix(self.name.clone()));
        }
        if self.ack_deadline_ms <= 0 {
            return Err(BrokerError::InvalidTopicName {
                name: self.name.clone(),
                reason: "ack_deadline_ms must be positive".into(),
            });
        }
        let expected_domain = match self.kind {
            TopicKind::Contribution => self.name.strip_suffix(".contribution"),
            TopicKind::Publication => self.name.strip_suffix(".publication"),
            TopicKind::Rejection => self.name.strip_suffix(".rejection"),
            TopicKind::Plain | TopicKind::DeadLetter => {
                if self.domain.is_some() {
                    return Err(BrokerError::InvalidTopicName {
                        name: self.name.clone(),
                        reason: "domain set on a non-domain topic".into(),
                    });
                }
                return Ok(());
            }
        };
        let ok = match (expected_domain, &self.domain) {
            (Some(name_part), Some(domain)) => name_part == domain && domain_ok(domain),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(BrokerError::InvalidTopicName {
                name: self.name.clone(),
                reason: format!("a {} topic is named <domain>.{}", self.kind.as_str(), self.kind.as_str()),
            })
        }
    }
}

/// Dot-separated lowercase segments; a leading `_` marks the reserved
/// system namespace (`_sys.*`, `_reply.*`).
pub fn topic_name_ok(name: &str) -> bool {
    !name.is_empty() && name.split('.').all(topic_segment_ok)
}

fn topic_segment_ok(segment: &str) -> bool {
    let body = segment.strip_prefix('_').unwrap_or(segment);
    let bytes = body.as_bytes();
    matches!(bytes.first(), Some(b'a'..=b'z'))
        && bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
}

/// Client and broker identifiers: one lowercase identifier segment.
pub fn client_id_ok(id: &str) -> bool {
    let bytes = id.as_bytes();
    matches!(bytes.first(), Some(b'a'..=b'z'))
        && bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
}

/// Domain names share the client identifier shape.
pub fn domain_ok(domain: &str) -> bool {
    client_id_ok(domain)
}

/// Subscription ids are free-form printable tokens.
pub fn subscription_id_ok(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_graphic())
}

pub fn is_system_topic(name: &str) -> bool {
    name.starts_with('_')
}

pub fn is_dlq_name(name: &str) -> bool {
    name == "dlq" || name.ends_with(".dlq")
}

pub fn dlq_name(topic: &str) -> String {
    format!("{topic}.dlq")
}
