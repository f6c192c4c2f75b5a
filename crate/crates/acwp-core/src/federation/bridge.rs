//! The sans-io bridge core: given a delivery from one broker, decide
//! whether it crosses to the other, and hold messages in a bounded buffer
//! while the far side is unreachable.
//!
//! The hosting loop (live process or simulation) owns the sockets and the
//! clock. A bridge acks a delivery at the source broker only once the far
//! broker has accepted it; while partitioned it buffers instead, so source
//! brokers dead-letter long-overdue deliveries and nothing is silently
//! dropped until the buffer itself overflows.

use std::collections::VecDeque;

use super::{Flow, RuleSet};
use crate::broker::TopicScope;
use crate::protocol::Envelope;

/// Buffered messages per direction while the far side is down.
pub const DEFAULT_BUFFER_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// The topic is local-scope at the source broker.
    LocalScope,
    /// The destination broker is already in the hop trace.
    AlreadyVisited,
    /// No routing rule forwards this topic along this flow.
    NoRule,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::LocalScope => "local-scope",
            SkipReason::AlreadyVisited => "already-visited",
            SkipReason::NoRule => "no-rule",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    Skip(SkipReason),
}

#[derive(Debug)]
pub struct BridgeCore {
    local_id: String,
    central_id: String,
    rules: RuleSet,
    buffer_limit: usize,
    up: VecDeque<Envelope>,
    down: VecDeque<Envelope>,
}

impl BridgeCore {
    pub fn new(local_id: impl Into<String>, central_id: impl Into<String>, rules: RuleSet) -> BridgeCore {
        BridgeCore {
            local_id: local_id.into(),
            central_id: central_id.into(),
            rules,
            buffer_limit: DEFAULT_BUFFER_LIMIT,
            up: VecDeque::new(),
            down: VecDeque::new(),
        }
    }

    pub fn with_buffer_limit(mut self, limit: usize) -> BridgeCore {
        assert!(limit > 0, "buffer limit must be positive");
        self.buffer_limit = limit;
        self
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }

    pub fn central_id(&self) -> &str {
        &self.central_id
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// Broker id a message moving along `flow` is delivered to.
    pub fn destination(&self, flow: Flow) -> &str {
        match flow {
            Flow::Up => &self.central_id,
            Flow::Down => &self.local_id,
        }
    }

    /// Whether a delivery observed at the source broker crosses the bridge.
    /// `scope` is the topic's scope at the source broker.
    pub fn decide(&self, env: &Envelope, flow: Flow, scope: TopicScope) -> ForwardDecision {
        if scope == TopicScope::Local {
            return ForwardDecision::Skip(SkipReason::LocalScope);
        }
        let destination = self.destination(flow);
        if env.hop_trace.iter().any(|hop| hop == destination) {
            return ForwardDecision::Skip(SkipReason::AlreadyVisited);
        }
        if !self.rules.matches(&env.topic, flow) {
            return ForwardDecision::Skip(SkipReason::NoRule);
        }
        ForwardDecision::Forward
    }

    /// The envelope as it crosses the bridge: identical except the
    /// destination broker id is appended to the hop trace. Topic, ids,
    /// timestamps, and payload are untouched.
    pub fn forwarded(&self, env: &Envelope, flow: Flow) -> Envelope {
        let mut out = env.clone();
        out.hop_trace.push(self.destination(flow).to_string());
        out
    }

    /// Topics worth subscribing at the `flow` source broker, given that
    /// broker's declared topics: global-scope topics some rule forwards.
    pub fn topics_to_watch<'a>(
        &self,
        flow: Flow,
        topics: impl IntoIterator<Item = (&'a str, TopicScope)>,
    ) -> Vec<String> {
        topics
            .into_iter()
            .filter(|(name, scope)| {
                *scope == TopicScope::Global && self.rules.matches(name, flow)
            })
            .map(|(name, _)| name.to_string())
            .collect()
    }

    /// Queues a message while the far side is unreachable. At capacity the
    /// oldest buffered message is evicted and returned; the caller logs the
    /// loss.
    pub fn buffer_push(&mut self, flow: Flow, env: Envelope) -> Option<Envelope> {
        let buffer = self.buffer_mut(flow);
        buffer.push_back(env);
        if buffer.len() > self.buffer_limit {
            self.buffer_mut(flow).pop_front()
        } else {
            None
        }
    }

    /// Takes everything buffered for `flow`, oldest first.
    pub fn buffer_drain(&mut self, flow: Flow) -> Vec<Envelope> {
        self.buffer_mut(flow).drain(..).collect()
    }

    pub fn buffered(&self, flow: Flow) -> usize {
        match flow {
            Flow::Up => self.up.len(),
            Flow::Down => self.down.len(),
        }
    }

    fn buffer_mut(&mut self, flow: Flow) -> &mut VecDeque<Envelope> {
        match flow {
            Flow::Up => &mut self.up,
            Flow::Down => &mut self.down,
        }
    }
}
