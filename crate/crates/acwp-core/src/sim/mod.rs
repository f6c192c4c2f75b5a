//! Deterministic discrete-event simulation of a broker federation.
//!
//! A [`SimWorld`] holds one central broker, N local brokers (`cwp1..cwpN`),
//! a bridge per local broker, and a fixed cast of components: `fdps` owns
//! the `fpl` domain at the central broker, `met1` owns `met` and emits
//! periodic QNH publications, `recovery` watches the central dead-letter
//! topics, and each `cwpN` client keeps a replica of the published flight
//! plans at its local broker.
//!
//! Time is virtual milliseconds. Every effect is an event on a single
//! `(time, insertion-seq)` ordered queue, and every random choice (link
//! jitter, link loss, the QNH walk) comes from one seeded ChaCha8 stream,
//! so a `(world config, scenario, seed)` triple always produces the same
//! event log, byte for byte. Arrival times on each directed link are
//! clamped to be non-decreasing: links reorder nothing, they only delay.
//!
//! Scenario steps execute at the broker at their scripted time. Deliveries
//! and acknowledgements cross the client link (latency + jitter); messages
//! between brokers cross the bridge link, which may also drop. Partition
//! buffers at the bridge; heal flushes in order. Messages a bridge already
//! handed to the link keep flying across a later partition.

pub mod components;
mod config;
mod log;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::broker::{
    client_id_ok, Broker, BrokerError, ConfigError, Delivery, DlqReason, DlqRecord,
    TopicDescriptor, TopicKind, TopicScope,
};
use crate::client::{ClientError, OwnerOutput, SessionState};
use crate::federation::{BridgeCore, FederationError, Flow, ForwardDecision};
use crate::protocol::{parse_schema_set, Document, Envelope, SchemaError, SchemaSet};

use components::{CwpReplica, FlightPlan, FplOwnerState, QnhSource, Recovery};
use components::{ATS_SCHEMA, MET_UPDATE_TYPE};

pub use config::{LinkModel, WorldConfig};
pub use log::{EventKind, EventLog, EventRecord};
pub use scenario::{Scenario, ScenarioAction, ScenarioError, ScenarioStep};

const FDPS: &str = "fdps";
const MET1: &str = "met1";
const RECOVERY: &str = "recovery";
const SELECTION_TOPIC: &str = "selection";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("duplicate broker id: {0}")]
    DuplicateBrokerId(String),
    #[error("unknown broker: {0}")]
    UnknownBroker(String),
}

/// How a replica disagrees with its domain owner at quiescence.
#[derive(Debug)]
pub struct ConvergenceDiff {
    pub domain: String,
    pub problems: Vec<String>,
}

impl fmt::Display for ConvergenceDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "domain {} diverged:", self.domain)?;
        for p in &self.problems {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
enum SimEvent {
    Step(ScenarioStep),
    Dispatch {
        broker: String,
    },
    Receive {
        broker: String,
        client: String,
        subscription_id: String,
        envelope: Envelope,
    },
    AckArrive {
        broker: String,
        client: String,
        subscription_id: String,
        message_id: String,
    },
    Transfer {
        cwp: String,
        flow: Flow,
        envelope: Envelope,
    },
    Sweep {
        broker: String,
    },
    QnhTick,
    IssueRequest {
        client: String,
        topic: String,
        message_type: String,
        payload: Document,
        timeout_ms: i64,
    },
    RequestTimeout {
        correlation: String,
    },
}

#[derive(Debug)]
struct BridgeNode {
    core: BridgeCore,
    local_client: String,
    central_client: String,
    partitioned: bool,
    overflow_seq: u64,
}

#[derive(Debug)]
struct CwpNode {
    replica: CwpReplica,
    connected: bool,
    withhold_all: bool,
    withhold_topics: BTreeSet<String>,
    /// domain name -> subscription id on `<domain>.publication`.
    domain_subs: BTreeMap<String, String>,
}

impl CwpNode {
    fn withholds(&self, topic: &str) -> bool {
        self.withhold_all || self.withhold_topics.contains(topic)
    }
}

pub struct SimWorld {
    config: WorldConfig,
    schemas: SchemaSet,
    clock_ms: i64,
    seq: u64,
    queue: BTreeMap<(i64, u64), SimEvent>,
    brokers: BTreeMap<String, Broker>,
    bridges: BTreeMap<String, BridgeNode>,
    cwps: BTreeMap<String, CwpNode>,
    sessions: BTreeMap<String, SessionState>,
    owner: FplOwnerState,
    qnh: Option<QnhSource>,
    met_published: Option<i64>,
    recovery: Option<Recovery>,
    rng: ChaCha8Rng,
    log: EventLog,
    last_arrival: BTreeMap<String, i64>,
    scheduled_dispatches: BTreeSet<(i64, String)>,
    scheduled_sweeps: BTreeSet<(i64, String)>,
    pending_requests: BTreeMap<String, String>,
    replies: BTreeMap<String, Envelope>,
}

impl SimWorld {
    pub fn build(config: WorldConfig, seed: u64) -> Result<SimWorld, SimError> {
        let schemas = parse_schema_set(ATS_SCHEMA)?;

        // Scope oracle for the routing rules: domain topics are global,
        // the selection topic is local, explicit topics say so themselves.
        let mut scopes: BTreeMap<String, TopicScope> = BTreeMap::new();
        for d in &config.domains {
            for suffix in ["contribution", "publication", "rejection"] {
                scopes.insert(format!("{}.{suffix}", d.name), TopicScope::Global);
            }
        }
        for t in &config.topics {
            scopes.insert(t.name.clone(), t.scope);
        }
        scopes
            .entry(SELECTION_TOPIC.to_string())
            .or_insert(TopicScope::Local);
        config
            .routes
            .validate_scopes(|name| scopes.get(name).copied())?;

        let mut world = SimWorld {
            schemas: schemas.clone(),
            clock_ms: 0,
            seq: 0,
            queue: BTreeMap::new(),
            brokers: BTreeMap::new(),
            bridges: BTreeMap::new(),
            cwps: BTreeMap::new(),
            sessions: BTreeMap::new(),
            owner: FplOwnerState::new(),
            qnh: None,
            met_published: None,
            recovery: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: EventLog::new(),
            last_arrival: BTreeMap::new(),
            scheduled_dispatches: BTreeSet::new(),
            scheduled_sweeps: BTreeSet::new(),
            pending_requests: BTreeMap::new(),
            replies: BTreeMap::new(),
            config,
        };

        let central = world.config.central_id.clone();
        let mut broker = Broker::new(central.clone(), schemas);
        world.declare_world_topics(&mut broker)?;
        world.brokers.insert(central.clone(), broker);

        let has_fpl = world.config.domains.iter().any(|d| d.name == "fpl");
        let has_met = world.config.domains.iter().any(|d| d.name == "met");

        if has_fpl {
            world.connect_component(&central, FDPS)?;
            world.register_owner(&central, FDPS, "fpl")?;
        }
        if has_met {
            world.connect_component(&central, MET1)?;
            world.register_owner(&central, MET1, "met")?;
            if world.config.qnh_period_ms > 0 {
                world.qnh = Some(QnhSource::new(world.config.qnh_period_ms));
                let first = world.config.qnh_period_ms;
                if first <= world.config.max_ms {
                    world.schedule(first, SimEvent::QnhTick);
                }
            }
        }
        if world.config.recovery_enabled {
            world.connect_component(&central, RECOVERY)?;
            world.recovery = Some(Recovery::new());
            let dlq_topics: Vec<String> = world.brokers[&central]
                .list_topics()
                .iter()
                .filter(|t| t.kind == TopicKind::DeadLetter && !t.name.starts_with('_'))
                .map(|t| t.name.clone())
                .collect();
            for topic in dlq_topics {
                let sid = format!("rec:{topic}");
                world.brokers.get_mut(&central).unwrap().subscribe(
                    RECOVERY,
                    &topic,
                    sid.clone(),
                )?;
                world.log_event(&central, EventKind::Subscribe, &topic, "", RECOVERY, &format!("sub={sid}"));
            }
        }

        for n in 1..=world.config.cwp_count {
            world.spawn_cwp(&format!("cwp{n}"))?;
        }
        Ok(world)
    }

    pub fn build_from_str(text: &str, seed: u64) -> Result<SimWorld, SimError> {
        SimWorld::build(WorldConfig::parse_str(text)?, seed)
    }

    fn declare_world_topics(&mut self, broker: &mut Broker) -> Result<(), SimError> {
        let id = broker.id().to_string();
        let is_central = id == self.config.central_id;
        for d in self.config.domains.clone() {
            broker.declare_domain(&d.name, d.ack_deadline_ms)?;
            self.log_event(&id, EventKind::DeclareDomain, &d.name, "", "", "");
        }
        for t in self.config.topics.clone() {
            let detail = t.scope.as_str();
            let name = t.name.clone();
            broker.declare_topic(t)?;
            self.log_event(&id, EventKind::DeclareTopic, &name, "", "", detail);
        }
        if !is_central && broker.topic(SELECTION_TOPIC).is_none() {
            broker.declare_topic(TopicDescriptor::local(SELECTION_TOPIC))?;
            self.log_event(&id, EventKind::DeclareTopic, SELECTION_TOPIC, "", "", "local");
        }
        Ok(())
    }

    fn connect_component(&mut self, broker_id: &str, client: &str) -> Result<(), SimError> {
        self.brokers
            .get_mut(broker_id)
            .ok_or_else(|| SimError::UnknownBroker(broker_id.to_string()))?
            .connect(client, false)?;
        self.sessions
            .insert(client.to_string(), SessionState::new(client, self.schemas.clone()));
        self.log_event(broker_id, EventKind::Connect, "", "", client, "");
        Ok(())
    }

    fn register_owner(&mut self, broker_id: &str, client: &str, domain: &str) -> Result<(), SimError> {
        self.brokers
            .get_mut(broker_id)
            .ok_or_else(|| SimError::UnknownBroker(broker_id.to_string()))?
            .register_owner(client, domain)?;
        self.log_event(
            broker_id,
            EventKind::Own,
            domain,
            "",
            client,
            &format!("sub=own:{domain}"),
        );
        Ok(())
    }

    /// Brings up `id` as a local broker with its bridge and CWP client.
    /// Nothing published before this moment is replayed to it.
    pub fn attach_local_broker(&mut self, id: &str) -> Result<(), SimError> {
        if !client_id_ok(id) {
            return Err(SimError::UnknownBroker(id.to_string()));
        }
        if self.brokers.contains_key(id) {
            return Err(SimError::DuplicateBrokerId(id.to_string()));
        }
        self.spawn_cwp(id)
    }

    /// Removes a local broker, its bridge, and its CWP client. Messages
    /// still in flight toward it are dropped on arrival.
    pub fn detach_local_broker(&mut self, id: &str) -> Result<(), SimError> {
        if self.brokers.remove(id).is_none() || id == self.config.central_id {
            return Err(SimError::UnknownBroker(id.to_string()));
        }
        let central = self.config.central_id.clone();
        if let Some(bridge) = self.bridges.remove(id) {
            if let Some(broker) = self.brokers.get_mut(&central) {
                let records = broker.disconnect(&bridge.central_client, self.clock_ms);
                self.log_dlq_records(&central, &records);
                if !records.is_empty() {
                    self.schedule_dispatch(&central);
                }
            }
        }
        self.cwps.remove(id);
        self.sessions.remove(id);
        self.log_event(id, EventKind::Detach, "", "", "", "");
        Ok(())
    }

    fn spawn_cwp(&mut self, id: &str) -> Result<(), SimError> {
        let central = self.config.central_id.clone();
        if id == central || self.brokers.contains_key(id) {
            return Err(SimError::DuplicateBrokerId(id.to_string()));
        }
        self.log_event(id, EventKind::Attach, "", "", "", "");

        let mut broker = Broker::new(id, self.schemas.clone());
        self.declare_world_topics(&mut broker)?;

        let local_client = format!("bridge_{central}");
        let central_client = format!("bridge_{id}");
        let core = BridgeCore::new(id, central.clone(), self.config.routes.clone())
            .with_buffer_limit(self.config.bridge_buffer_limit);

        broker.connect(&local_client, true)?;
        self.log_event(id, EventKind::Connect, "", "", &local_client, "relay=true");
        let up_watch = core.topics_to_watch(
            Flow::Up,
            broker.list_topics().iter().map(|t| (t.name.as_str(), t.scope)),
        );
        for topic in up_watch {
            let sid = format!("up:{topic}");
            broker.subscribe(&local_client, &topic, sid.clone())?;
            self.log_event(id, EventKind::Subscribe, &topic, "", &local_client, &format!("sub={sid}"));
        }
        self.brokers.insert(id.to_string(), broker);

        {
            let central_broker = self
                .brokers
                .get_mut(&central)
                .ok_or_else(|| SimError::UnknownBroker(central.clone()))?;
            central_broker.connect(&central_client, true)?;
            let down_watch = core.topics_to_watch(
                Flow::Down,
                central_broker
                    .list_topics()
                    .iter()
                    .map(|t| (t.name.as_str(), t.scope)),
            );
            let mut subscribed = Vec::new();
            for topic in down_watch {
                let sid = format!("dn:{id}:{topic}");
                central_broker.subscribe(&central_client, &topic, sid.clone())?;
                subscribed.push((topic, sid));
            }
            self.log_event(&central, EventKind::Connect, "", "", &central_client, "relay=true");
            for (topic, sid) in subscribed {
                self.log_event(&central, EventKind::Subscribe, &topic, "", &central_client, &format!("sub={sid}"));
            }
        }

        self.bridges.insert(
            id.to_string(),
            BridgeNode {
                core,
                local_client,
                central_client,
                partitioned: false,
                overflow_seq: 0,
            },
        );

        // The CWP client itself, subscribed to every domain's outputs and
        // to the local selection topic.
        let broker = self.brokers.get_mut(id).expect("just inserted");
        broker.connect(id, false)?;
        let mut session = SessionState::new(id, self.schemas.clone());
        let mut domain_subs = BTreeMap::new();
        let mut subscribed = Vec::new();
        for d in &self.config.domains {
            for suffix in ["publication", "rejection"] {
                let topic = format!("{}.{suffix}", d.name);
                let sid = session.next_subscription_id();
                broker.subscribe(id, &topic, sid.clone())?;
                if suffix == "publication" {
                    domain_subs.insert(d.name.clone(), sid.clone());
                }
                subscribed.push((topic, sid));
            }
        }
        if broker.topic(SELECTION_TOPIC).is_some() {
            let sid = session.next_subscription_id();
            broker.subscribe(id, SELECTION_TOPIC, sid.clone())?;
            subscribed.push((SELECTION_TOPIC.to_string(), sid));
        }
        self.log_event(id, EventKind::Connect, "", "", id, "");
        for (topic, sid) in subscribed {
            self.log_event(id, EventKind::Subscribe, &topic, "", id, &format!("sub={sid}"));
        }
        self.sessions.insert(id.to_string(), session);
        self.cwps.insert(
            id.to_string(),
            CwpNode {
                replica: CwpReplica::new(),
                connected: true,
                withhold_all: false,
                withhold_topics: BTreeSet::new(),
                domain_subs,
            },
        );
        Ok(())
    }

    // ---- scheduling --------------------------------------------------

    fn schedule(&mut self, at_ms: i64, event: SimEvent) {
        self.seq += 1;
        self.queue.insert((at_ms, self.seq), event);
    }

    fn schedule_dispatch(&mut self, broker: &str) {
        let key = (self.clock_ms, broker.to_string());
        if self.scheduled_dispatches.insert(key) {
            self.schedule(self.clock_ms, SimEvent::Dispatch { broker: broker.to_string() });
        }
    }

    fn schedule_sweep(&mut self, broker: &str, at_ms: i64) {
        let key = (at_ms, broker.to_string());
        if self.scheduled_sweeps.insert(key) {
            self.schedule(at_ms, SimEvent::Sweep { broker: broker.to_string() });
        }
    }

    /// Arrival time over a directed link: `now + delay`, clamped so the
    /// link never reorders. `key` names the link.
    fn arrival_at(&mut self, key: String, delay: i64) -> i64 {
        let mut at = self.clock_ms + delay;
        if let Some(floor) = self.last_arrival.get(&key) {
            at = at.max(*floor);
        }
        self.last_arrival.insert(key, at);
        at
    }

    fn client_link_delay(&mut self) -> i64 {
        let model = self.config.client_link;
        model.latency_ms
            + if model.jitter_ms > 0 {
                self.rng.gen_range(0..=model.jitter_ms)
            } else {
                0
            }
    }

    fn bridge_link_delay(&mut self) -> i64 {
        let model = self.config.link;
        model.latency_ms
            + if model.jitter_ms > 0 {
                self.rng.gen_range(0..=model.jitter_ms)
            } else {
                0
            }
    }

    fn bridge_link_drops(&mut self) -> bool {
        let p = self.config.link.drop_prob;
        p > 0.0 && self.rng.gen::<f64>() < p
    }

    // ---- logging -----------------------------------------------------

    fn log_event(
        &mut self,
        broker: &str,
        kind: EventKind,
        topic: &str,
        message_id: &str,
        client: &str,
        detail: &str,
    ) {
        self.log.push(EventRecord {
            time_ms: self.clock_ms,
            broker: broker.to_string(),
            kind,
            topic: topic.to_string(),
            message_id: message_id.to_string(),
            client: client.to_string(),
            detail: detail.to_string(),
        });
    }

    fn log_publish(&mut self, broker: &str, env: &Envelope) {
        let trace = env.hop_trace.join(">");
        let mut detail = format!("type={}", env.message_type);
        if let Some(corr) = &env.correlation_id {
            detail.push_str(&format!(",corr={corr}"));
        }
        if let Some(reply) = &env.reply_to {
            detail.push_str(&format!(",reply={reply}"));
        }
        detail.push_str(&format!(",trace={trace}"));
        self.log_event(
            broker,
            EventKind::Publish,
            &env.topic,
            &env.message_id,
            &env.sender_id,
            &detail,
        );
    }

    fn log_dlq_records(&mut self, broker: &str, records: &[DlqRecord]) {
        for r in records {
            self.log_event(
                broker,
                EventKind::Dlq,
                &r.original_topic,
                &r.original_message_id,
                &r.failed_client,
                &format!("reason={},sub={}", r.reason.as_str(), r.failed_subscription_id),
            );
        }
    }

    fn log_error(&mut self, broker: &str, topic: &str, client: &str, message: &str) {
        self.log_event(broker, EventKind::Error, topic, "", client, message);
    }

    // ---- run loop ----------------------------------------------------

    /// Runs until the queue is empty or virtual time passes the world's
    /// `max_ms` horizon.
    pub fn run(&mut self) {
        while let Some(entry) = self.queue.first_entry() {
            let (at, _) = *entry.key();
            if at > self.config.max_ms {
                break;
            }
            let ((at, _), event) = self.queue.pop_first().expect("peeked entry");
            self.clock_ms = at;
            self.handle(event);
        }
    }

    /// Schedules every step of the scenario and runs to quiescence.
    pub fn run_scenario(&mut self, scenario: &Scenario) {
        for step in scenario.steps() {
            self.schedule(step.at_ms, SimEvent::Step(step.clone()));
        }
        self.run();
    }

    /// Issues a request from a connected component at a virtual time; the
    /// reply (if any) becomes retrievable via [`SimWorld::reply_for`].
    pub fn schedule_request(
        &mut self,
        at_ms: i64,
        client: &str,
        topic: &str,
        message_type: &str,
        payload: Document,
        timeout_ms: i64,
    ) {
        self.schedule(
            at_ms,
            SimEvent::IssueRequest {
                client: client.to_string(),
                topic: topic.to_string(),
                message_type: message_type.to_string(),
                payload,
                timeout_ms,
            },
        );
    }

    fn handle(&mut self, event: SimEvent) {
        match event {
            SimEvent::Step(step) => self.handle_step(step),
            SimEvent::Dispatch { broker } => self.handle_dispatch(&broker),
            SimEvent::Receive {
                broker,
                client,
                subscription_id,
                envelope,
            } => self.handle_receive(&broker, &client, &subscription_id, envelope),
            SimEvent::AckArrive {
                broker,
                client,
                subscription_id,
                message_id,
            } => self.handle_ack(&broker, &client, &subscription_id, &message_id),
            SimEvent::Transfer { cwp, flow, envelope } => self.handle_transfer(&cwp, flow, envelope),
            SimEvent::Sweep { broker } => self.handle_sweep(&broker),
            SimEvent::QnhTick => self.handle_qnh_tick(),
            SimEvent::IssueRequest {
                client,
                topic,
                message_type,
                payload,
                timeout_ms,
            } => self.handle_request(&client, &topic, &message_type, payload, timeout_ms),
            SimEvent::RequestTimeout { correlation } => {
                if let Some(client) = self.pending_requests.remove(&correlation) {
                    let broker = self.client_broker(&client).unwrap_or_default();
                    self.log_event(
                        &broker,
                        EventKind::RequestTimeout,
                        "",
                        "",
                        &client,
                        &format!("corr={correlation}"),
                    );
                }
            }
        }
    }

    /// The broker a component's commands land on.
    fn client_broker(&self, client: &str) -> Option<String> {
        if self.cwps.contains_key(client) {
            Some(client.to_string())
        } else if self.sessions.contains_key(client) {
            Some(self.config.central_id.clone())
        } else {
            None
        }
    }

    fn handle_step(&mut self, step: ScenarioStep) {
        let actor = step.actor;
        match step.action {
            ScenarioAction::Contribute {
                domain,
                message_type,
                payload,
            } => {
                let topic = format!("{domain}.contribution");
                self.publish_as(&actor, &topic, &message_type, payload);
            }
            ScenarioAction::Publish {
                topic,
                message_type,
                payload,
            } => {
                self.publish_as(&actor, &topic, &message_type, payload);
            }
            ScenarioAction::Subscribe { topic } => {
                let Some(broker_id) = self.client_broker(&actor) else {
                    self.log_error("", &topic, &actor, "unknown-actor");
                    return;
                };
                let Some(session) = self.sessions.get_mut(&actor) else {
                    self.log_error(&broker_id, &topic, &actor, "unknown-actor");
                    return;
                };
                let sid = session.next_subscription_id();
                let broker = self.brokers.get_mut(&broker_id).expect("session implies broker");
                match broker.subscribe(&actor, &topic, sid.clone()) {
                    Ok(()) => {
                        self.log_event(&broker_id, EventKind::Subscribe, &topic, "", &actor, &format!("sub={sid}"));
                    }
                    Err(e) => self.log_error(&broker_id, &topic, &actor, &e.to_string()),
                }
            }
            ScenarioAction::WithholdAck { topic } => {
                let Some(node) = self.cwps.get_mut(&actor) else {
                    self.log_error("", "", &actor, "withhold_ack: not a cwp");
                    return;
                };
                let detail = match topic {
                    Some(t) => {
                        node.withhold_topics.insert(t.clone());
                        format!("topic={t}")
                    }
                    None => {
                        node.withhold_all = true;
                        "all".to_string()
                    }
                };
                self.log_event(&actor, EventKind::Error, "", "", &actor, &format!("withhold_ack {detail}"));
            }
            ScenarioAction::Disconnect => {
                let Some(broker_id) = self.client_broker(&actor) else {
                    self.log_error("", "", &actor, "unknown-actor");
                    return;
                };
                let now = self.clock_ms;
                let Some(broker) = self.brokers.get_mut(&broker_id) else {
                    return;
                };
                let records = broker.disconnect(&actor, now);
                self.log_event(&broker_id, EventKind::Disconnect, "", "", &actor, "");
                self.log_dlq_records(&broker_id, &records);
                if !records.is_empty() {
                    self.schedule_dispatch(&broker_id);
                }
                if let Some(node) = self.cwps.get_mut(&actor) {
                    node.connected = false;
                }
            }
            ScenarioAction::AttachBroker => {
                if let Err(e) = self.attach_local_broker(&actor) {
                    self.log_error("", "", &actor, &e.to_string());
                }
            }
            ScenarioAction::Partition => {
                match self.bridges.get_mut(&actor) {
                    Some(bridge) => {
                        bridge.partitioned = true;
                        self.log_event(&actor, EventKind::Partition, "", "", "", "");
                    }
                    None => self.log_error("", "", &actor, "partition: no bridge"),
                }
            }
            ScenarioAction::Heal => self.handle_heal(&actor),
        }
    }

    fn handle_heal(&mut self, cwp: &str) {
        let Some(bridge) = self.bridges.get_mut(cwp) else {
            self.log_error("", "", cwp, "heal: no bridge");
            return;
        };
        if !bridge.partitioned {
            self.log_event(cwp, EventKind::Heal, "", "", "", "flushed=0");
            return;
        }
        bridge.partitioned = false;
        let up = bridge.core.buffer_drain(Flow::Up);
        let down = bridge.core.buffer_drain(Flow::Down);
        self.log_event(
            cwp,
            EventKind::Heal,
            "",
            "",
            "",
            &format!("flushed={}", up.len() + down.len()),
        );
        for env in up {
            self.send_over_bridge(cwp, Flow::Up, env);
        }
        for env in down {
            self.send_over_bridge(cwp, Flow::Down, env);
        }
    }

    fn publish_as(&mut self, actor: &str, topic: &str, message_type: &str, payload: Document) {
        let Some(broker_id) = self.client_broker(actor) else {
            self.log_error("", topic, actor, "unknown-actor");
            return;
        };
        let now = self.clock_ms;
        let session = self.sessions.get_mut(actor).expect("client_broker implies session");
        let env = match session.build_publish(topic, message_type, payload, now) {
            Ok(env) => env,
            Err(e) => {
                self.log_error(&broker_id, topic, actor, &client_error_detail(&e));
                return;
            }
        };
        self.deliver_publish(&broker_id, actor, env, false);
    }

    /// Publishes an already-built envelope and logs the outcome.
    fn deliver_publish(&mut self, broker_id: &str, sender: &str, env: Envelope, relayed: bool) {
        let now = self.clock_ms;
        let Some(broker) = self.brokers.get_mut(broker_id) else {
            self.log_event(broker_id, EventKind::Drop, &env.topic, &env.message_id, sender, "reason=detached");
            return;
        };
        let mut logged = env.clone();
        match broker.publish(sender, env, now) {
            Ok(()) => {
                // Mirror the broker's trace handling so the log shows the
                // trace as routed: non-relay publishes start fresh, and the
                // accepting broker appears exactly once.
                if !relayed {
                    logged.hop_trace.clear();
                }
                if !logged.hop_trace.iter().any(|hop| hop == broker_id) {
                    logged.hop_trace.push(broker_id.to_string());
                }
                self.log_publish(broker_id, &logged);
                self.schedule_dispatch(broker_id);
            }
            Err(e) => {
                self.log_error(broker_id, &logged.topic, sender, &e.to_string());
            }
        }
    }

    fn handle_dispatch(&mut self, broker_id: &str) {
        self.scheduled_dispatches
            .remove(&(self.clock_ms, broker_id.to_string()));
        let now = self.clock_ms;
        let Some(broker) = self.brokers.get_mut(broker_id) else {
            return;
        };
        let deliveries = broker.dispatch(now);
        for d in deliveries {
            let Delivery {
                subscription_id,
                client,
                envelope,
                deadline_ms,
            } = d;
            self.log_event(
                broker_id,
                EventKind::Deliver,
                &envelope.topic,
                &envelope.message_id,
                &client,
                &format!("sub={subscription_id}"),
            );
            self.schedule_sweep(broker_id, deadline_ms + 1);
            let delay = self.client_link_delay();
            let at = self.arrival_at(format!("d:{broker_id}>{client}"), delay);
            self.schedule(
                at,
                SimEvent::Receive {
                    broker: broker_id.to_string(),
                    client,
                    subscription_id,
                    envelope,
                },
            );
        }
    }

    fn handle_sweep(&mut self, broker_id: &str) {
        self.scheduled_sweeps
            .remove(&(self.clock_ms, broker_id.to_string()));
        let now = self.clock_ms;
        let Some(broker) = self.brokers.get_mut(broker_id) else {
            return;
        };
        let records = broker.sweep_deadlines(now);
        if records.is_empty() {
            return;
        }
        self.log_dlq_records(broker_id, &records);
        self.schedule_dispatch(broker_id);
    }

    fn schedule_client_ack(&mut self, broker_id: &str, client: &str, sid: &str, message_id: &str) {
        let delay = self.client_link_delay();
        let at = self.arrival_at(format!("a:{client}>{broker_id}"), delay);
        self.schedule(
            at,
            SimEvent::AckArrive {
                broker: broker_id.to_string(),
                client: client.to_string(),
                subscription_id: sid.to_string(),
                message_id: message_id.to_string(),
            },
        );
    }

    fn handle_ack(&mut self, broker_id: &str, client: &str, sid: &str, message_id: &str) {
        let Some(broker) = self.brokers.get_mut(broker_id) else {
            return;
        };
        match broker.ack(client, sid, message_id) {
            Ok(()) => {
                self.log_event(broker_id, EventKind::Ack, "", message_id, client, &format!("sub={sid}"));
            }
            Err(e) => self.log_error(broker_id, "", client, &e.to_string()),
        }
    }

    fn handle_receive(&mut self, broker_id: &str, client: &str, sid: &str, env: Envelope) {
        if !self.brokers.contains_key(broker_id) {
            return;
        }
        // Bridge halves: the local half lives at each cwp broker, the
        // central half is named after the cwp it serves.
        if let Some(bridge) = self.bridges.get(broker_id) {
            if bridge.local_client == client {
                self.bridge_receive(broker_id.to_string(), Flow::Up, sid, env);
                return;
            }
        }
        if broker_id == self.config.central_id {
            if let Some(cwp) = client.strip_prefix("bridge_") {
                if self.bridges.get(cwp).is_some_and(|b| b.central_client == client) {
                    self.bridge_receive(cwp.to_string(), Flow::Down, sid, env);
                    return;
                }
            }
        }

        match client {
            FDPS => self.owner_receive(broker_id, sid, env),
            MET1 => self.met_receive(broker_id, sid, env),
            RECOVERY => self.recovery_receive(broker_id, sid, env),
            _ => self.cwp_receive(broker_id, client, sid, env),
        }
    }

    fn bridge_receive(&mut self, cwp: String, flow: Flow, sid: &str, env: Envelope) {
        let (source_broker, source_client) = {
            let Some(bridge) = self.bridges.get(&cwp) else {
                return;
            };
            match flow {
                Flow::Up => (cwp.clone(), bridge.local_client.clone()),
                Flow::Down => (self.config.central_id.clone(), bridge.central_client.clone()),
            }
        };
        // Custody transfer: the bridge acks as soon as it has the message;
        // from here on delivery is its responsibility (buffer or forward).
        self.schedule_client_ack(&source_broker, &source_client, sid, &env.message_id);

        let scope = self
            .brokers
            .get(&source_broker)
            .and_then(|b| b.topic(&env.topic))
            .map(|t| t.scope)
            .unwrap_or(TopicScope::Local);
        let bridge = self.bridges.get_mut(&cwp).expect("checked above");
        match bridge.core.decide(&env, flow, scope) {
            ForwardDecision::Skip(_) => {}
            ForwardDecision::Forward => {
                if bridge.partitioned {
                    if let Some(evicted) = bridge.core.buffer_push(flow, env) {
                        self.bridge_overflow(&cwp, flow, evicted);
                    }
                } else {
                    self.send_over_bridge(&cwp, flow, env);
                }
            }
        }
    }

    /// Hands a message to the bridge link: logs the forward, rolls link
    /// loss, and schedules arrival at the far broker.
    fn send_over_bridge(&mut self, cwp: &str, flow: Flow, env: Envelope) {
        let Some(bridge) = self.bridges.get(cwp) else {
            return;
        };
        let (source_broker, source_client) = match flow {
            Flow::Up => (cwp.to_string(), bridge.local_client.clone()),
            Flow::Down => (self.config.central_id.clone(), bridge.central_client.clone()),
        };
        let dest = bridge.core.destination(flow).to_string();
        let forwarded = bridge.core.forwarded(&env, flow);
        self.log_event(
            &source_broker,
            EventKind::Forward,
            &env.topic,
            &env.message_id,
            &source_client,
            &format!("to={dest}"),
        );
        if self.bridge_link_drops() {
            self.log_event(
                &source_broker,
                EventKind::Drop,
                &env.topic,
                &env.message_id,
                &source_client,
                &format!("reason=link-loss,to={dest}"),
            );
            return;
        }
        let delay = self.bridge_link_delay();
        let at = self.arrival_at(format!("t:{cwp}:{}", flow.as_str()), delay);
        self.schedule(
            at,
            SimEvent::Transfer {
                cwp: cwp.to_string(),
                flow,
                envelope: forwarded,
            },
        );
    }

    /// A partition buffer overflowed: the evicted message is recorded on
    /// the source broker's dead-letter topic, attributed to the bridge.
    fn bridge_overflow(&mut self, cwp: &str, flow: Flow, evicted: Envelope) {
        let Some(bridge) = self.bridges.get_mut(cwp) else {
            return;
        };
        bridge.overflow_seq += 1;
        let n = bridge.overflow_seq;
        let (source_broker, source_client) = match flow {
            Flow::Up => (cwp.to_string(), bridge.local_client.clone()),
            Flow::Down => (self.config.central_id.clone(), bridge.central_client.clone()),
        };
        let sub_id = match flow {
            Flow::Up => format!("up:{}", evicted.topic),
            Flow::Down => format!("dn:{cwp}:{}", evicted.topic),
        };
        let record = DlqRecord {
            original_topic: evicted.topic.clone(),
            original_message_id: evicted.message_id.clone(),
            original_sender: evicted.sender_id.clone(),
            original_message_type: evicted.message_type.clone(),
            failed_subscription_id: sub_id.clone(),
            failed_client: source_client.clone(),
            reason: DlqReason::AckTimeout,
            original_payload: evicted.payload.clone(),
        };
        let record_env = record.to_envelope(&source_client, format!("{source_client}:ov{n}"), self.clock_ms);
        self.log_event(
            &source_broker,
            EventKind::Dlq,
            &evicted.topic,
            &evicted.message_id,
            &source_client,
            &format!("reason=ack_timeout,sub={sub_id},overflow=true"),
        );
        let now = self.clock_ms;
        if let Some(broker) = self.brokers.get_mut(&source_broker) {
            if broker.publish(&source_client, record_env, now).is_ok() {
                self.schedule_dispatch(&source_broker);
            }
        }
    }

    fn handle_transfer(&mut self, cwp: &str, flow: Flow, env: Envelope) {
        let Some(bridge) = self.bridges.get(cwp) else {
            self.log_event("", EventKind::Drop, &env.topic, &env.message_id, "", "reason=detached");
            return;
        };
        let (dest, publisher) = match flow {
            Flow::Up => (self.config.central_id.clone(), bridge.central_client.clone()),
            Flow::Down => (cwp.to_string(), bridge.local_client.clone()),
        };
        self.deliver_publish(&dest, &publisher, env, true);
    }

    fn cwp_receive(&mut self, broker_id: &str, client: &str, sid: &str, env: Envelope) {
        let Some(node) = self.cwps.get_mut(client) else {
            // Unknown subscriber (e.g. a component subscribed via scenario
            // to a topic we have no handler for): ack and move on.
            self.schedule_client_ack(broker_id, client, sid, &env.message_id);
            return;
        };
        if node.withholds(&env.topic) {
            return;
        }
        if env.topic.starts_with("_reply.") {
            if let Some(corr) = env.correlation_id.clone() {
                if self.pending_requests.remove(&corr).is_some() {
                    self.replies.insert(corr, env.clone());
                }
            }
        } else {
            node.replica.apply(&env);
        }
        self.schedule_client_ack(broker_id, client, sid, &env.message_id);
    }

    fn owner_receive(&mut self, broker_id: &str, sid: &str, env: Envelope) {
        self.schedule_client_ack(broker_id, FDPS, sid, &env.message_id);
        if env.topic == "fpl.contribution" {
            let output = self.owner.apply(&env);
            self.owner_publish(broker_id, FDPS, "fpl", output, &env);
        } else if env.topic.starts_with("_reply.") {
            if let Some(corr) = env.correlation_id.clone() {
                if self.pending_requests.remove(&corr).is_some() {
                    self.replies.insert(corr, env);
                }
            }
        }
    }

    /// The met owner echoes well-formed QNH contributions as publications
    /// and rejects anything else.
    fn met_receive(&mut self, broker_id: &str, sid: &str, env: Envelope) {
        self.schedule_client_ack(broker_id, MET1, sid, &env.message_id);
        if env.topic != "met.contribution" {
            return;
        }
        let output = if env.message_type == MET_UPDATE_TYPE {
            if let Some(qnh) = env.payload.get_int("qnh") {
                self.met_published = Some(qnh);
                if let Some(source) = self.qnh.as_mut() {
                    source.set_value(qnh);
                }
            }
            OwnerOutput::Publication {
                message_type: MET_UPDATE_TYPE.to_string(),
                payload: env.payload.clone(),
            }
        } else {
            components::rejection("unsupported-type", "")
        };
        self.owner_publish(broker_id, MET1, "met", output, &env);
    }

    fn owner_publish(
        &mut self,
        broker_id: &str,
        owner: &str,
        domain: &str,
        output: OwnerOutput,
        contribution: &Envelope,
    ) {
        let now = self.clock_ms;
        let session = self.sessions.get_mut(owner).expect("owner has a session");
        match session.build_owner_output(domain, output, contribution, now) {
            Ok(out_env) => self.deliver_publish(broker_id, owner, out_env, false),
            Err(e) => self.log_error(broker_id, "", owner, &client_error_detail(&e)),
        }
    }

    fn recovery_receive(&mut self, broker_id: &str, sid: &str, env: Envelope) {
        self.schedule_client_ack(broker_id, RECOVERY, sid, &env.message_id);
        let Some(recovery) = self.recovery.as_mut() else {
            return;
        };
        if let Some((topic, message_type, payload)) = recovery.apply(&env) {
            self.publish_as(RECOVERY, &topic, &message_type, payload);
        }
    }

    fn handle_qnh_tick(&mut self) {
        let Some(source) = self.qnh.as_mut() else {
            return;
        };
        let payload = source.tick(&mut self.rng);
        self.met_published = payload.get_int("qnh");
        let now = self.clock_ms;
        let central = self.config.central_id.clone();
        let session = self.sessions.get_mut(MET1).expect("met owner session");
        match session.build_publish("met.publication", MET_UPDATE_TYPE, payload, now) {
            Ok(env) => self.deliver_publish(&central, MET1, env, false),
            Err(e) => self.log_error(&central, "met.publication", MET1, &client_error_detail(&e)),
        }
        let next = now + self.config.qnh_period_ms;
        if next <= self.config.max_ms {
            self.schedule(next, SimEvent::QnhTick);
        }
    }

    fn handle_request(
        &mut self,
        client: &str,
        topic: &str,
        message_type: &str,
        payload: Document,
        timeout_ms: i64,
    ) {
        let Some(broker_id) = self.client_broker(client) else {
            self.log_error("", topic, client, "unknown-actor");
            return;
        };
        let now = self.clock_ms;
        let session = self.sessions.get_mut(client).expect("client_broker implies session");
        let env = match session.build_request(topic, message_type, payload, now) {
            Ok(env) => env,
            Err(e) => {
                self.log_error(&broker_id, topic, client, &client_error_detail(&e));
                return;
            }
        };
        let correlation = env.correlation_id.clone().expect("requests carry correlation");
        self.pending_requests.insert(correlation.clone(), client.to_string());
        self.schedule(now + timeout_ms, SimEvent::RequestTimeout { correlation });
        self.deliver_publish(&broker_id, client, env, false);
    }

    // ---- inspection ---------------------------------------------------

    pub fn clock_ms(&self) -> i64 {
        self.clock_ms
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn render_log(&self) -> String {
        self.log.render()
    }

    pub fn central_id(&self) -> &str {
        &self.config.central_id
    }

    pub fn broker(&self, id: &str) -> Option<&Broker> {
        self.brokers.get(id)
    }

    pub fn cwp_ids(&self) -> impl Iterator<Item = &str> {
        self.cwps.keys().map(String::as_str)
    }

    pub fn owner_plans(&self) -> &BTreeMap<String, FlightPlan> {
        self.owner.plans()
    }

    pub fn replica(&self, cwp: &str) -> Option<&CwpReplica> {
        self.cwps.get(cwp).map(|n| &n.replica)
    }

    pub fn recovery(&self) -> Option<&Recovery> {
        self.recovery.as_ref()
    }

    pub fn recovery_mut(&mut self) -> Option<&mut Recovery> {
        self.recovery.as_mut()
    }

    pub fn reply_for(&self, correlation: &str) -> Option<&Envelope> {
        self.replies.get(correlation)
    }

    pub fn bridge_buffered(&self, cwp: &str, flow: Flow) -> Option<usize> {
        self.bridges.get(cwp).map(|b| b.core.buffered(flow))
    }

    pub fn is_partitioned(&self, cwp: &str) -> Option<bool> {
        self.bridges.get(cwp).map(|b| b.partitioned)
    }

    /// Checks that every CWP still able to receive a domain's publications
    /// holds exactly the owner's state. CWPs that are disconnected, have
    /// lost their publication subscription, or are withholding acks on it
    /// are exempt: without an intact subscription there is no delivery
    /// guarantee to hold them to.
    pub fn assert_converged(&self, domain: &str) -> Result<(), ConvergenceDiff> {
        let mut problems = Vec::new();
        let topic = format!("{domain}.publication");
        for (id, node) in &self.cwps {
            let Some(broker) = self.brokers.get(id) else {
                continue;
            };
            let eligible = node.connected
                && !node.withholds(&topic)
                && node
                    .domain_subs
                    .get(domain)
                    .is_some_and(|sid| broker.subscription_exists(sid));
            if !eligible {
                continue;
            }
            match domain {
                "met" => {
                    if node.replica.qnh() != self.met_published {
                        problems.push(format!(
                            "{id}: qnh {:?} != published {:?}",
                            node.replica.qnh(),
                            self.met_published
                        ));
                    }
                }
                _ => {
                    diff_plans(id, self.owner.plans(), node.replica.plans(), &mut problems);
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConvergenceDiff {
                domain: domain.to_string(),
                problems,
            })
        }
    }
}

fn diff_plans(
    cwp: &str,
    owner: &BTreeMap<String, FlightPlan>,
    replica: &BTreeMap<String, FlightPlan>,
    problems: &mut Vec<String>,
) {
    for (callsign, plan) in owner {
        match replica.get(callsign) {
            None => problems.push(format!("{cwp}: missing {callsign}")),
            Some(r) if r != plan => problems.push(format!(
                "{cwp}: {callsign} differs (owner rev {}, replica rev {})",
                plan.revision, r.revision
            )),
            Some(_) => {}
        }
    }
    for callsign in replica.keys() {
        if !owner.contains_key(callsign) {
            problems.push(format!("{cwp}: extra {callsign}"));
        }
    }
}

fn client_error_detail(e: &ClientError) -> String {
    match e {
        ClientError::UnknownMessageType(t) => format!("unknown-message-type: {t}"),
        ClientError::Validation { type_name, violations } => {
            let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            format!("schema-violation: {type_name}: {}", lines.join("; "))
        }
    }
}
