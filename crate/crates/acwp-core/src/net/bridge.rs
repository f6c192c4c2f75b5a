//! Live federation bridge: two relay connections and a store-and-forward
//! loop between them.
//!
//! The bridge acks every delivery at the source broker on receipt; from
//! then on the message is its responsibility. While the far side is
//! reachable it forwards immediately, otherwise it buffers (bounded,
//! oldest-out) and a supervisor thread reconnects and drains in order.
//! Topic scopes come from each broker's `_sys.topics` listing, learned at
//! connect time, and the routing rules are checked against them before
//! any traffic moves.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::broker::{DlqReason, DlqRecord, TopicScope};
use crate::federation::{BridgeConfig, FederationError, Flow, ForwardDecision};
use crate::protocol::{Document, Envelope, SchemaSet};

use super::client::{ClientConfig, LiveClient, NetError};
use super::wall_ms;

const RETRY_INTERVAL: Duration = Duration::from_millis(250);

/// A freshly connected side: the relay connection plus that broker's
/// declared topics and scopes.
type SideSetup = (Arc<LiveClient>, Vec<(String, TopicScope)>);
const OP_TIMEOUT: Duration = Duration::from_millis(2000);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Federation(#[from] FederationError),
}

/// Which broker a connection talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Local,
    Central,
}

impl Side {
    /// Deliveries received on this side travel along this flow.
    fn inbound_flow(self) -> Flow {
        match self {
            Side::Local => Flow::Up,
            Side::Central => Flow::Down,
        }
    }

    /// The flow whose forwards this side's connection carries.
    fn outbound_flow(self) -> Flow {
        match self {
            Side::Local => Flow::Down,
            Side::Central => Flow::Up,
        }
    }
}

struct Inner {
    core: crate::federation::BridgeCore,
    local: Option<Arc<LiveClient>>,
    central: Option<Arc<LiveClient>>,
    overflow_seq: u64,
}

impl Inner {
    fn conn(&self, side: Side) -> Option<Arc<LiveClient>> {
        match side {
            Side::Local => self.local.clone(),
            Side::Central => self.central.clone(),
        }
    }

    fn set_conn(&mut self, side: Side, conn: Option<Arc<LiveClient>>) {
        match side {
            Side::Local => self.local = conn,
            Side::Central => self.central = conn,
        }
    }
}

struct State {
    config: BridgeConfig,
    /// Topic scopes as learned from both brokers; local wins on conflict,
    /// so a disagreement can only make the bridge more conservative.
    scopes: Mutex<BTreeMap<String, TopicScope>>,
    inner: Mutex<Inner>,
}

impl State {
    fn endpoint(&self, side: Side) -> &str {
        match side {
            Side::Local => &self.config.local_endpoint,
            Side::Central => &self.config.central_endpoint,
        }
    }

    fn client_id(&self, side: Side) -> String {
        match side {
            Side::Local => self.config.local_client_id(),
            Side::Central => self.config.central_client_id(),
        }
    }
}

/// A running bridge; [`BridgeHandle::stop`] tears it down.
pub struct BridgeHandle {
    state: Arc<State>,
    stop: Arc<AtomicBool>,
    supervisor: Option<JoinHandle<()>>,
}

impl BridgeHandle {
    pub fn buffered(&self, flow: Flow) -> usize {
        self.state.inner.lock().unwrap().core.buffered(flow)
    }

    /// Both connections currently up.
    pub fn connected(&self) -> bool {
        let inner = self.state.inner.lock().unwrap();
        inner.local.is_some() && inner.central.is_some()
    }

    pub fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.supervisor.take() {
            let _ = t.join();
        }
        let mut inner = self.state.inner.lock().unwrap();
        for conn in [inner.local.take(), inner.central.take()].into_iter().flatten() {
            conn.close();
        }
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Connects both sides, validates the routing rules against the learned
/// topic scopes, subscribes the watched topics, and starts forwarding.
pub fn run_bridge(config: BridgeConfig) -> Result<BridgeHandle, BridgeError> {
    let state = Arc::new(State {
        inner: Mutex::new(Inner {
            core: config.core(),
            local: None,
            central: None,
            overflow_seq: 0,
        }),
        scopes: Mutex::new(BTreeMap::new()),
        config,
    });

    let (local, local_topics) = connect_side(&state, Side::Local)?;
    let (central, central_topics) = connect_side(&state, Side::Central)?;
    {
        let scopes = state.scopes.lock().unwrap();
        state
            .config
            .rules
            .validate_scopes(|name| scopes.get(name).copied())?;
    }
    subscribe_watches(&state, Side::Local, &local, &local_topics)?;
    subscribe_watches(&state, Side::Central, &central, &central_topics)?;
    install(&state, Side::Local, local);
    install(&state, Side::Central, central);

    let stop = Arc::new(AtomicBool::new(false));
    let supervisor = {
        let state = Arc::clone(&state);
        let stop = Arc::clone(&stop);
        thread::spawn(move || supervise(state, stop))
    };
    Ok(BridgeHandle {
        state,
        stop,
        supervisor: Some(supervisor),
    })
}

/// Opens the relay connection for one side and learns that broker's topic
/// scopes. No subscriptions yet; the caller decides when traffic starts.
fn connect_side(state: &Arc<State>, side: Side) -> Result<SideSetup, NetError> {
    let mut client_config = ClientConfig::new(
        state.endpoint(side),
        state.client_id(side),
        SchemaSet::new(),
    )
    .relay();
    client_config.timeout = OP_TIMEOUT;
    let conn = Arc::new(LiveClient::connect(client_config)?);

    let listing = conn.request("_sys.topics", "sys.topics.request", Document::new(), None)?;
    let topics = parse_topic_scopes(&listing.payload);
    {
        let mut scopes = state.scopes.lock().unwrap();
        for (name, scope) in &topics {
            scopes
                .entry(name.clone())
                .and_modify(|existing| {
                    if *scope == TopicScope::Local {
                        *existing = TopicScope::Local;
                    }
                })
                .or_insert(*scope);
        }
    }
    Ok((conn, topics))
}

/// `topic.<n>.name` / `topic.<n>.scope` pairs out of a `_sys.topics` reply.
fn parse_topic_scopes(payload: &Document) -> Vec<(String, TopicScope)> {
    let mut by_index: BTreeMap<usize, (Option<String>, Option<TopicScope>)> = BTreeMap::new();
    for (path, value) in payload.iter() {
        let segments: Vec<&str> = path.segments().collect();
        let ["topic", index, field] = segments.as_slice() else {
            continue;
        };
        let Ok(index) = index.parse::<usize>() else {
            continue;
        };
        let entry = by_index.entry(index).or_default();
        match *field {
            "name" => entry.0 = value.as_text().map(str::to_string),
            "scope" => {
                entry.1 = match value.as_text() {
                    Some("global") => Some(TopicScope::Global),
                    Some("local") => Some(TopicScope::Local),
                    _ => None,
                }
            }
            _ => {}
        }
    }
    by_index
        .into_values()
        .filter_map(|(name, scope)| Some((name?, scope?)))
        .collect()
}

fn subscribe_watches(
    state: &Arc<State>,
    side: Side,
    conn: &Arc<LiveClient>,
    topics: &[(String, TopicScope)],
) -> Result<(), NetError> {
    let flow = side.inbound_flow();
    let watch = {
        let inner = state.inner.lock().unwrap();
        inner
            .core
            .topics_to_watch(flow, topics.iter().map(|(n, s)| (n.as_str(), *s)))
    };
    for topic in watch {
        let sid = watch_sid(state, flow, &topic);
        let handler_state = Arc::clone(state);
        conn.subscribe_with_id(&sid, &topic, move |env| {
            on_delivery(&handler_state, flow, env.clone());
        })?;
    }
    Ok(())
}

/// Stable, broker-unique subscription ids so a reconnect reclaims the
/// same identity and dead-letter records name a recognizable watcher.
fn watch_sid(state: &Arc<State>, flow: Flow, topic: &str) -> String {
    match flow {
        Flow::Up => format!("up:{topic}"),
        Flow::Down => format!("dn:{}:{topic}", state.config.local_broker),
    }
}

/// One delivery arrived from the `flow` source broker. The connection's
/// auto-ack already took custody; decide, then forward or buffer.
fn on_delivery(state: &Arc<State>, flow: Flow, env: Envelope) {
    let scope = state
        .scopes
        .lock()
        .unwrap()
        .get(&env.topic)
        .copied()
        .unwrap_or(TopicScope::Local);
    let mut inner = state.inner.lock().unwrap();
    match inner.core.decide(&env, flow, scope) {
        ForwardDecision::Skip(_) => {}
        ForwardDecision::Forward => {
            let far_side = match flow {
                Flow::Up => Side::Central,
                Flow::Down => Side::Local,
            };
            match inner.conn(far_side) {
                Some(conn) => {
                    let crossed = inner.core.forwarded(&env, flow);
                    if conn.forward(&crossed).is_err() {
                        // Far side just died; the supervisor rebuilds it.
                        inner.set_conn(far_side, None);
                        buffer(state, &mut inner, flow, env);
                    }
                }
                None => buffer(state, &mut inner, flow, env),
            }
        }
    }
}

/// Queues a message for later draining. Eviction publishes a dead-letter
/// record at the source broker, because the bridge acked on receipt; the
/// loss must end up on `<topic>.dlq` where recovery tooling watches.
fn buffer(state: &Arc<State>, inner: &mut Inner, flow: Flow, env: Envelope) {
    let Some(evicted) = inner.core.buffer_push(flow, env) else {
        return;
    };
    inner.overflow_seq += 1;
    let n = inner.overflow_seq;
    let source_side = match flow {
        Flow::Up => Side::Local,
        Flow::Down => Side::Central,
    };
    let failed_client = state.client_id(source_side);
    let record = DlqRecord {
        original_topic: evicted.topic.clone(),
        original_message_id: evicted.message_id.clone(),
        original_sender: evicted.sender_id.clone(),
        original_message_type: evicted.message_type.clone(),
        failed_subscription_id: watch_sid(state, flow, &evicted.topic),
        failed_client: failed_client.clone(),
        reason: DlqReason::AckTimeout,
        original_payload: evicted.payload.clone(),
    };
    let record_env = record.to_envelope(&failed_client, format!("{failed_client}:ov{n}"), wall_ms());
    if let Some(conn) = inner.conn(source_side) {
        let _ = conn.forward(&record_env);
    }
}

/// Puts a fresh connection into service and drains everything waiting to
/// cross toward it, oldest first. Holding the state lock keeps newly
/// arriving traffic behind the backlog.
fn install(state: &Arc<State>, side: Side, conn: Arc<LiveClient>) {
    let mut inner = state.inner.lock().unwrap();
    inner.set_conn(side, Some(Arc::clone(&conn)));
    let flow = side.outbound_flow();
    let backlog = inner.core.buffer_drain(flow);
    let mut failed = Vec::new();
    let mut broken = false;
    for env in backlog {
        if broken {
            failed.push(env);
            continue;
        }
        let crossed = inner.core.forwarded(&env, flow);
        if conn.forward(&crossed).is_err() {
            broken = true;
            failed.push(env);
        }
    }
    if broken {
        inner.set_conn(side, None);
        for env in failed {
            buffer(state, &mut inner, flow, env);
        }
    }
}

fn supervise(state: Arc<State>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        thread::sleep(RETRY_INTERVAL);
        if stop.load(Ordering::SeqCst) {
            break;
        }
        for side in [Side::Local, Side::Central] {
            let existing = state.inner.lock().unwrap().conn(side);
            match existing {
                Some(conn) => {
                    if conn.ping().is_err() {
                        let mut inner = state.inner.lock().unwrap();
                        // Another thread may have swapped in a new
                        // connection; only clear the one that failed.
                        if inner
                            .conn(side)
                            .is_some_and(|current| Arc::ptr_eq(&current, &conn))
                        {
                            inner.set_conn(side, None);
                        }
                        conn.close();
                    }
                }
                None => {
                    let Ok((conn, topics)) = connect_side(&state, side) else {
                        continue;
                    };
                    if subscribe_watches(&state, side, &conn, &topics).is_ok() {
                        install(&state, side, conn);
                    } else {
                        conn.close();
                    }
                }
            }
        }
    }
}
