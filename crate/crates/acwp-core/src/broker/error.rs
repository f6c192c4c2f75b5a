use thiserror::Error;

use crate::protocol::Violation;

/// Why the broker refused a command.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BrokerError {
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("bad topic {name}: {reason}")]
    InvalidTopicName { name: String, reason: String },
    #[error("{0} is already declared with different attributes")]
    AlreadyDeclared(String),
    #[error("{0}: the .dlq suffix is reserved for dead-letter siblings")]
    ReservedSuffix(String),
    #[error("unknown domain {0}")]
    UnknownDomain(String),
    #[error("domain {domain} is owned by {owner}")]
    AlreadyOwned { domain: String, owner: String },
    #[error("client {client} lacks the ownership right for {topic}")]
    OwnershipViolation { topic: String, client: String },
    #[error("subscription id {0} is taken")]
    DuplicateSubscriptionId(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(String),
    #[error("nothing pending for message {message_id} on subscription {subscription_id}")]
    UnknownPending {
        subscription_id: String,
        message_id: String,
    },
    #[error("client id {0} is already connected")]
    DuplicateClientId(String),
    #[error("bad client id {0:?}")]
    InvalidClientId(String),
    #[error("unknown message type {0}")]
    UnknownMessageType(String),
    #[error("message type {type_name}: {} violation(s)", violations.len())]
    SchemaViolation {
        type_name: String,
        violations: Vec<Violation>,
    },
}

impl BrokerError {
    /// The closed set of `error-code` header values on ERROR frames.
    pub fn wire_code(&self) -> &'static str {
        match self {
            BrokerError::UnknownTopic(_) | BrokerError::UnknownDomain(_) => "unknown-topic",
            BrokerError::OwnershipViolation { .. } | BrokerError::AlreadyOwned { .. } => {
                "ownership-violation"
            }
            BrokerError::SchemaViolation { .. } => "schema-violation",
            BrokerError::UnknownMessageType(_) => "unknown-message-type",
            BrokerError::DuplicateSubscriptionId(_) => "duplicate-subscription",
            BrokerError::UnknownSubscription(_) | BrokerError::UnknownPending { .. } => {
                "unknown-subscription"
            }
            BrokerError::InvalidTopicName { .. }
            | BrokerError::AlreadyDeclared(_)
            | BrokerError::ReservedSuffix(_)
            | BrokerError::DuplicateClientId(_)
            | BrokerError::InvalidClientId(_) => "protocol-error",
        }
    }

    /// Body text for an ERROR frame: schema violations list one per line,
    /// everything else is the error's display form.
    pub fn wire_body(&self) -> String {
        match self {
            BrokerError::SchemaViolation { violations, .. } => violations
                .iter()
                .map(|v| format!("{v}\n"))
                .collect::<String>(),
            other => format!("{other}\n"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_violations_list_one_per_line() {
        let err = BrokerError::SchemaViolation {
            type_name: "met.update".into(),
            violations: vec![
                Violation::MissingRequired { path: "qnh".into() },
                Violation::UnknownField { path: "x".into() },
            ],
        };
        assert_eq!(err.wire_code(), "schema-violation");
        assert_eq!(err.wire_body(), "missing-required: qnh\nunknown-field: x\n");
    }

    #[test]
    fn wire_codes_stay_in_the_closed_set() {
        let codes = [
            "unknown-topic",
            "ownership-violation",
            "schema-violation",
            "unknown-message-type",
            "duplicate-subscription",
            "unknown-subscription",
            "protocol-error",
        ];
        for err in [
            BrokerError::UnknownTopic("t".into()),
            BrokerError::UnknownDomain("d".into()),
            BrokerError::OwnershipViolation {
                topic: "t".into(),
                client: "c".into(),
            },
            BrokerError::AlreadyOwned {
                domain: "d".into(),
                owner: "o".into(),
            },
            BrokerError::UnknownMessageType("m".into()),
            BrokerError::DuplicateSubscriptionId("s".into()),
            BrokerError::UnknownSubscription("s".into()),
            BrokerError::UnknownPending {
                subscription_id: "s".into(),
                message_id: "m".into(),
            },
            BrokerError::DuplicateClientId("c".into()),
            BrokerError::InvalidClientId("C".into()),
            BrokerError::AlreadyDeclared("t".into()),
            BrokerError::ReservedSuffix("t.dlq".into()),
            BrokerError::InvalidTopicName {
                name: "T".into(),
                reason: "case".into(),
            },
        ] {
            assert!(codes.contains(&err.wire_code()), "{err:?}");
        }
    }
}
