//! Single-broker engine: topic registry, ownership ACL, per-subscriber
//! ordered delivery with acknowledgements, and dead-letter handling.
//!
//! The engine is sans-io and time-explicit: commands take `now_ms`, and
//! [`Broker::dispatch`] / [`Broker::sweep_deadlines`] are driven by the
//! hosting loop (live server or simulation). All internal maps are ordered,
//! so identical command sequences produce identical behavior.

pub(crate) mod config;
mod dlq;
mod error;
mod topic;

pub use config::{BrokerConfig, ConfigError, DomainConfig};
pub use dlq::{DlqReason, DlqRecord, DLQ_MESSAGE_TYPE};
pub use error::BrokerError;
pub use topic::{
    client_id_ok, dlq_name, domain_ok, is_dlq_name, is_system_topic, subscription_id_ok,
    topic_name_ok, TopicDescriptor, TopicKind, TopicScope, DEFAULT_ACK_DEADLINE_MS,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::protocol::{Document, Envelope, SchemaSet, ValidationMode, Value};

/// Reserved topic answering introspection requests with a topic/stats
/// snapshot document.
pub const SYS_TOPICS: &str = "_sys.topics";

/// Prefix of the per-client reply topic (`_reply.<client>`), declared and
/// subscribed automatically at connect.
pub const REPLY_PREFIX: &str = "_reply.";

/// Message type of `_sys.topics` reply envelopes.
pub const SYS_TOPICS_REPLY_TYPE: &str = "sys.topics";

/// Per-topic counters, visible through `stats()` and the snapshot document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TopicStats {
    pub published: u64,
    pub delivered: u64,
    pub acked: u64,
    pub dead_lettered: u64,
}

/// One message handed to one subscription by `dispatch`.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub subscription_id: String,
    pub client: String,
    pub envelope: Envelope,
    /// When the pending ack expires; `sweep_deadlines` past this point
    /// dead-letters the delivery.
    pub deadline_ms: i64,
}

#[derive(Debug)]
struct TopicState {
    desc: TopicDescriptor,
    subscribers: BTreeSet<String>,
    stats: TopicStats,
}

#[derive(Debug)]
struct DomainState {
    owner: Option<String>,
}

#[derive(Debug)]
struct ClientState {
    relay: bool,
    subscriptions: BTreeSet<String>,
}

#[derive(Debug)]
struct SubscriptionState {
    client: String,
    topic: String,
    queue: VecDeque<Envelope>,
    pending: VecDeque<PendingAck>,
}

#[derive(Debug)]
struct PendingAck {
    envelope: Envelope,
    deadline_ms: i64,
}

/// The broker engine.
#[derive(Debug)]
pub struct Broker {
    id: String,
    seq: u64,
    topics: BTreeMap<String, TopicState>,
    domains: BTreeMap<String, DomainState>,
    clients: BTreeMap<String, ClientState>,
    subscriptions: BTreeMap<String, SubscriptionState>,
    schemas: SchemaSet,
    mode: ValidationMode,
}

impl Broker {
    /// A fresh broker named `id`, validating against `schemas` in strict
    /// mode. `_sys.topics` exists from the start.
    pub fn new(id: impl Into<String>, schemas: SchemaSet) -> Broker {
        let id = id.into();
        assert!(client_id_ok(&id), "bad broker id {id:?}");
        let mut broker = Broker {
            id,
            seq: 0,
            topics: BTreeMap::new(),
            domains: BTreeMap::new(),
            clients: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            schemas,
            mode: ValidationMode::Strict,
        };
        broker
            .declare_topic_internal(TopicDescriptor::local(SYS_TOPICS))
            .expect("reserved topic declares");
        broker
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schemas(&self) -> &SchemaSet {
        &self.schemas
    }

    pub fn set_validation_mode(&mut self, mode: ValidationMode) {
        self.mode = mode;
    }

    /// Registers a client session. `relay` marks a trusted federation
    /// bridge: relays bypass ownership checks and re-validation. Declares
    /// and subscribes the client's `_reply.<client>` topic.
    pub fn connect(&mut self, client: &str, relay: bool) -> Result<(), BrokerError> {
        if !client_id_ok(client) {
            return Err(BrokerError::InvalidClientId(client.to_string()));
        }
        if self.clients.contains_key(client) {
            return Err(BrokerError::DuplicateClientId(client.to_string()));
        }
        self.clients.insert(
            client.to_string(),
            ClientState {
                relay,
                subscriptions: BTreeSet::new(),
            },
        );
        let reply_topic = format!("{REPLY_PREFIX}{client}");
        self.declare_topic_internal(TopicDescriptor::local(&reply_topic))?;
        self.subscribe_internal(client, &reply_topic, format!("reply:{client}"))?;
        Ok(())
    }

    /// Removes the client and all its subscriptions; in-flight unacked
    /// deliveries are dead-lettered with reason `client_disconnected`.
    /// Ownership registrations survive disconnects, so a domain keeps its
    /// owner while the owning component is away.
    pub fn disconnect(&mut self, client: &str, now_ms: i64) -> Vec<DlqRecord> {
        let ids = match self.clients.remove(client) {
            Some(state) => state.subscriptions,
            None => return Vec::new(),
        };
        let mut records = Vec::new();
        for sid in ids {
            records.extend(self.remove_subscription(&sid, now_ms));
        }
        records
    }

    pub fn is_connected(&self, client: &str) -> bool {
        self.clients.contains_key(client)
    }

    fn is_relay(&self, client: &str) -> bool {
        self.clients.get(client).is_some_and(|c| c.relay)
    }

    /// Declares a topic; its `<name>.dlq` sibling comes into existence with
    /// it. Re-declaring an identical descriptor is a no-op. The `_`
    /// namespace is reserved for the broker's own topics.
    pub fn declare_topic(&mut self, desc: TopicDescriptor) -> Result<(), BrokerError> {
        if is_system_topic(&desc.name) {
            return Err(BrokerError::InvalidTopicName {
                name: desc.name.clone(),
                reason: "the _ namespace is reserved".into(),
            });
        }
        if desc.kind == TopicKind::DeadLetter {
            return Err(BrokerError::ReservedSuffix(desc.name.clone()));
        }
        self.declare_topic_internal(desc)
    }

    fn declare_topic_internal(&mut self, desc: TopicDescriptor) -> Result<(), BrokerError> {
        desc.check()?;
        if let Some(existing) = self.topics.get(&desc.name) {
            return if existing.desc == desc {
                Ok(())
            } else {
                Err(BrokerError::AlreadyDeclared(desc.name.clone()))
            };
        }
        if desc.kind != TopicKind::DeadLetter {
            let sibling = TopicDescriptor {
                name: dlq_name(&desc.name),
                kind: TopicKind::DeadLetter,
                scope: desc.scope,
                ack_deadline_ms: desc.ack_deadline_ms,
                domain: None,
            };
            self.insert_topic(sibling);
        }
        self.insert_topic(desc);
        Ok(())
    }

    fn insert_topic(&mut self, desc: TopicDescriptor) {
        self.topics.insert(
            desc.name.clone(),
            TopicState {
                desc,
                subscribers: BTreeSet::new(),
                stats: TopicStats::default(),
            },
        );
    }

    /// Declares `<domain>.contribution/.publication/.rejection` (plus dlq
    /// siblings). The domain starts ownerless: nobody can subscribe to the
    /// contribution topic until an owner registers.
    pub fn declare_domain(&mut self, domain: &str, ack_deadline_ms: i64) -> Result<(), BrokerError> {
        if !domain_ok(domain) {
            return Err(BrokerError::InvalidTopicName {
                name: domain.to_string(),
                reason: "bad domain name".into(),
            });
        }
        if self.domains.contains_key(domain) {
            return Err(BrokerError::AlreadyDeclared(domain.to_string()));
        }
        for kind in [
            TopicKind::Contribution,
            TopicKind::Publication,
            TopicKind::Rejection,
        ] {
            let desc = TopicDescriptor {
                name: format!("{domain}.{}", kind.as_str()),
                kind,
                scope: TopicScope::Global,
                ack_deadline_ms,
                domain: Some(domain.to_string()),
            };
            self.declare_topic_internal(desc)?;
        }
        self.domains.insert(domain.to_string(), DomainState { owner: None });
        Ok(())
    }

    /// Records `client` as the owner of `domain` and subscribes it to the
    /// contribution topic (subscription id `own:<domain>`). Idempotent for
    /// the same client; a second client is refused.
    pub fn register_owner(&mut self, client: &str, domain: &str) -> Result<(), BrokerError> {
        let state = self
            .domains
            .get_mut(domain)
            .ok_or_else(|| BrokerError::UnknownDomain(domain.to_string()))?;
        match &state.owner {
            Some(owner) if owner != client => {
                return Err(BrokerError::AlreadyOwned {
                    domain: domain.to_string(),
                    owner: owner.clone(),
                })
            }
            _ => state.owner = Some(client.to_string()),
        }
        // Re-owning after a disconnect restores the implicit subscription.
        let sid = format!("own:{domain}");
        if !self.subscriptions.contains_key(&sid) {
            self.subscribe_internal(client, &format!("{domain}.contribution"), sid)?;
        }
        Ok(())
    }

    pub fn owner(&self, domain: &str) -> Option<&str> {
        self.domains.get(domain)?.owner.as_deref()
    }

    /// Opens a subscription. Contribution topics admit only the domain
    /// owner (relays excepted); delivery starts with the next published
    /// message, with no replay of history.
    pub fn subscribe(
        &mut self,
        client: &str,
        topic: &str,
        subscription_id: impl Into<String>,
    ) -> Result<(), BrokerError> {
        let subscription_id = subscription_id.into();
        let state = self
            .topics
            .get(topic)
            .ok_or_else(|| BrokerError::UnknownTopic(topic.to_string()))?;
        if state.desc.kind == TopicKind::Contribution && !self.is_relay(client) {
            let domain = state.desc.domain.as_deref().unwrap_or_default();
            if self.owner(domain) != Some(client) {
                return Err(BrokerError::OwnershipViolation {
                    topic: topic.to_string(),
                    client: client.to_string(),
                });
            }
        }
        self.subscribe_internal(client, topic, subscription_id)
    }

    fn subscribe_internal(
        &mut self,
        client: &str,
        topic: &str,
        subscription_id: String,
    ) -> Result<(), BrokerError> {
        if !subscription_id_ok(&subscription_id) {
            return Err(BrokerError::DuplicateSubscriptionId(subscription_id));
        }
        if self.subscriptions.contains_key(&subscription_id) {
            return Err(BrokerError::DuplicateSubscriptionId(subscription_id));
        }
        self.topics
            .get_mut(topic)
            .ok_or_else(|| BrokerError::UnknownTopic(topic.to_string()))?
            .subscribers
            .insert(subscription_id.clone());
        self.subscriptions.insert(
            subscription_id.clone(),
            SubscriptionState {
                client: client.to_string(),
                topic: topic.to_string(),
                queue: VecDeque::new(),
                pending: VecDeque::new(),
            },
        );
        if let Some(state) = self.clients.get_mut(client) {
            state.subscriptions.insert(subscription_id);
        }
        Ok(())
    }

    /// Closes a subscription; its in-flight unacked deliveries are
    /// dead-lettered with reason `client_disconnected`.
    pub fn unsubscribe(
        &mut self,
        client: &str,
        subscription_id: &str,
        now_ms: i64,
    ) -> Result<Vec<DlqRecord>, BrokerError> {
        let owned = self
            .subscriptions
            .get(subscription_id)
            .is_some_and(|sub| sub.client == client);
        if !owned {
            return Err(BrokerError::UnknownSubscription(subscription_id.to_string()));
        }
        if let Some(state) = self.clients.get_mut(client) {
            state.subscriptions.remove(subscription_id);
        }
        Ok(self.remove_subscription(subscription_id, now_ms))
    }

    fn remove_subscription(&mut self, subscription_id: &str, now_ms: i64) -> Vec<DlqRecord> {
        let Some(mut sub) = self.subscriptions.remove(subscription_id) else {
            return Vec::new();
        };
        if let Some(topic) = self.topics.get_mut(&sub.topic) {
            topic.subscribers.remove(subscription_id);
        }
        let is_dlq_topic = self
            .topics
            .get(&sub.topic)
            .is_some_and(|t| t.desc.kind == TopicKind::DeadLetter);
        let mut records = Vec::new();
        // In-flight means delivered and unacked; messages still queued were
        // never delivered to this subscription and vanish with it.
        for pending in sub.pending.drain(..) {
            if is_dlq_topic {
                continue;
            }
            records.push(DlqRecord {
                original_topic: sub.topic.clone(),
                original_message_id: pending.envelope.message_id.clone(),
                original_sender: pending.envelope.sender_id.clone(),
                original_message_type: pending.envelope.message_type.clone(),
                failed_subscription_id: subscription_id.to_string(),
                failed_client: sub.client.clone(),
                reason: DlqReason::ClientDisconnected,
                original_payload: pending.envelope.payload,
            });
        }
        for record in &records {
            self.dead_letter(record, now_ms);
        }
        records
    }

    /// Accepts a message and enqueues it for every current subscriber.
    ///
    /// Acceptance depends only on topic, ownership, and schema checks; the
    /// publisher never learns who subscribes or waits for acks. Non-relay
    /// publishes restart the hop trace at this broker; relays keep the
    /// trace they carry. `_`-namespace and dead-letter topics skip schema
    /// validation (their payloads are plumbing, not domain messages).
    pub fn publish(
        &mut self,
        client: &str,
        mut env: Envelope,
        now_ms: i64,
    ) -> Result<(), BrokerError> {
        let relay = self.is_relay(client);
        let (kind, domain) = {
            let state = self
                .topics
                .get(&env.topic)
                .ok_or_else(|| BrokerError::UnknownTopic(env.topic.clone()))?;
            (state.desc.kind, state.desc.domain.clone())
        };
        if !relay {
            if matches!(kind, TopicKind::Publication | TopicKind::Rejection) {
                let domain = domain.as_deref().unwrap_or_default();
                if self.owner(domain) != Some(client) {
                    return Err(BrokerError::OwnershipViolation {
                        topic: env.topic.clone(),
                        client: client.to_string(),
                    });
                }
            }
            if kind != TopicKind::DeadLetter && !is_system_topic(&env.topic) {
                if self.schemas.latest(&env.message_type).is_none() {
                    return Err(BrokerError::UnknownMessageType(env.message_type.clone()));
                }
                let violations = self
                    .schemas
                    .validate_with(&env.payload, &env.message_type, self.mode);
                if !violations.is_empty() {
                    return Err(BrokerError::SchemaViolation {
                        type_name: env.message_type.clone(),
                        violations,
                    });
                }
            }
            env.hop_trace.clear();
        }
        self.route(&mut env);
        if env.topic == SYS_TOPICS {
            self.answer_topics_request(&env, now_ms);
        }
        Ok(())
    }

    /// Broker-origin publish (dead-letter records, system replies): no ACL,
    /// no validation; unknown target topics drop the message.
    fn publish_internal(&mut self, mut env: Envelope) {
        if self.topics.contains_key(&env.topic) {
            self.route(&mut env);
        }
    }

    fn route(&mut self, env: &mut Envelope) {
        if !env.hop_trace.iter().any(|h| h == &self.id) {
            env.hop_trace.push(self.id.clone());
        }
        let topic = self.topics.get_mut(&env.topic).expect("routed topic exists");
        topic.stats.published += 1;
        for sid in &topic.subscribers {
            if let Some(sub) = self.subscriptions.get_mut(sid) {
                sub.queue.push_back(env.clone());
            }
        }
    }

    fn answer_topics_request(&mut self, request: &Envelope, now_ms: i64) {
        let Some(reply_to) = request.reply_to.clone() else {
            return;
        };
        let correlation = request
            .correlation_id
            .clone()
            .unwrap_or_else(|| request.message_id.clone());
        let reply = Envelope::new(
            reply_to,
            self.next_message_id(),
            self.id.clone(),
            SYS_TOPICS_REPLY_TYPE,
            now_ms,
            self.topics_snapshot(),
        )
        .with_correlation(correlation);
        self.publish_internal(reply);
    }

    /// Moves every queued message into its subscription's pending set and
    /// returns the deliveries, stamping deadline = now + topic deadline.
    /// Subscriptions drain in id order; each queue preserves publish order.
    pub fn dispatch(&mut self, now_ms: i64) -> Vec<Delivery> {
        let mut out = Vec::new();
        for (sid, sub) in self.subscriptions.iter_mut() {
            if sub.queue.is_empty() {
                continue;
            }
            let topic = self.topics.get_mut(&sub.topic).expect("subscribed topic exists");
            let deadline_ms = now_ms + topic.desc.ack_deadline_ms;
            while let Some(envelope) = sub.queue.pop_front() {
                topic.stats.delivered += 1;
                sub.pending.push_back(PendingAck {
                    envelope: envelope.clone(),
                    deadline_ms,
                });
                out.push(Delivery {
                    subscription_id: sid.clone(),
                    client: sub.client.clone(),
                    envelope,
                    deadline_ms,
                });
            }
        }
        out
    }

    /// Clears one pending delivery. Anything else — unknown subscription,
    /// someone else's subscription, already acked, already dead-lettered —
    /// is `UnknownPending`: benign after a deadline race, so callers log
    /// rather than escalate.
    pub fn ack(
        &mut self,
        client: &str,
        subscription_id: &str,
        message_id: &str,
    ) -> Result<(), BrokerError> {
        let unknown = || BrokerError::UnknownPending {
            subscription_id: subscription_id.to_string(),
            message_id: message_id.to_string(),
        };
        let sub = self
            .subscriptions
            .get_mut(subscription_id)
            .filter(|sub| sub.client == client)
            .ok_or_else(unknown)?;
        let at = sub
            .pending
            .iter()
            .position(|p| p.envelope.message_id == message_id)
            .ok_or_else(unknown)?;
        sub.pending.remove(at);
        let topic = sub.topic.clone();
        if let Some(state) = self.topics.get_mut(&topic) {
            state.stats.acked += 1;
        }
        Ok(())
    }

    /// Dead-letters every pending delivery whose deadline passed
    /// (`deadline < now`), one record per expired (message, subscription),
    /// in original publish order per subscription. Records are published on
    /// the original topic's `.dlq` sibling. Expired deliveries on
    /// dead-letter topics are dropped without new records (no recursion).
    pub fn sweep_deadlines(&mut self, now_ms: i64) -> Vec<DlqRecord> {
        let mut records = Vec::new();
        for (sid, sub) in self.subscriptions.iter_mut() {
            let is_dlq_topic = self
                .topics
                .get(&sub.topic)
                .is_some_and(|t| t.desc.kind == TopicKind::DeadLetter);
            // Deadlines are non-decreasing within one subscription, so the
            // expired entries form a prefix.
            while sub.pending.front().is_some_and(|p| p.deadline_ms < now_ms) {
                let expired = sub.pending.pop_front().expect("front exists");
                if is_dlq_topic {
                    continue;
                }
                records.push(DlqRecord {
                    original_topic: sub.topic.clone(),
                    original_message_id: expired.envelope.message_id.clone(),
                    original_sender: expired.envelope.sender_id.clone(),
                    original_message_type: expired.envelope.message_type.clone(),
                    failed_subscription_id: sid.clone(),
                    failed_client: sub.client.clone(),
                    reason: DlqReason::AckTimeout,
                    original_payload: expired.envelope.payload,
                });
            }
        }
        for record in &records {
            self.dead_letter(record, now_ms);
        }
        records
    }

    fn dead_letter(&mut self, record: &DlqRecord, now_ms: i64) {
        if let Some(state) = self.topics.get_mut(&record.original_topic) {
            state.stats.dead_lettered += 1;
        }
        let message_id = self.next_message_id();
        let envelope = record.to_envelope(&self.id, message_id, now_ms);
        self.publish_internal(envelope);
    }

    fn next_message_id(&mut self) -> String {
        self.seq += 1;
        format!("{}:{}", self.id, self.seq)
    }

    pub fn topic(&self, name: &str) -> Option<&TopicDescriptor> {
        self.topics.get(name).map(|t| &t.desc)
    }

    /// All declared topics, name-sorted.
    pub fn list_topics(&self) -> Vec<&TopicDescriptor> {
        self.topics.values().map(|t| &t.desc).collect()
    }

    pub fn topic_stats(&self, name: &str) -> Option<TopicStats> {
        self.topics.get(name).map(|t| t.stats)
    }

    pub fn stats(&self) -> impl Iterator<Item = (&str, TopicStats)> {
        self.topics.iter().map(|(name, t)| (name.as_str(), t.stats))
    }

    /// Number of delivered-but-unacked messages on a subscription.
    pub fn pending_count(&self, subscription_id: &str) -> usize {
        self.subscriptions
            .get(subscription_id)
            .map_or(0, |sub| sub.pending.len())
    }

    pub fn subscription_exists(&self, subscription_id: &str) -> bool {
        self.subscriptions.contains_key(subscription_id)
    }

    /// The `_sys.topics` reply payload: an indexed group per topic with its
    /// descriptor fields and counters.
    pub fn topics_snapshot(&self) -> Document {
        let mut doc = Document::new();
        doc.put("broker_id", Value::text(&self.id));
        doc.put("topic_count", Value::Int(self.topics.len() as i64));
        for (at, state) in self.topics.values().enumerate() {
            let mut field = |key: &str, value: Value| {
                doc.put(&format!("topic.{at}.{key}"), value);
            };
            field("name", Value::text(&state.desc.name));
            field("kind", Value::text(state.desc.kind.as_str()));
            field("scope", Value::text(state.desc.scope.as_str()));
            field("ack_deadline_ms", Value::Int(state.desc.ack_deadline_ms));
            field("published", Value::Int(state.stats.published as i64));
            field("delivered", Value::Int(state.stats.delivered as i64));
            field("acked", Value::Int(state.stats.acked as i64));
            field("dead_lettered", Value::Int(state.stats.dead_lettered as i64));
        }
        doc
    }
}
