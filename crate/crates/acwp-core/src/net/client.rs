//! Blocking client connection with a background reader.
//!
//! The protocol only confirms publishes negatively (an ERROR frame may
//! arrive later), so operations that must be known-good before the caller
//! proceeds are fenced with a ping barrier: send the command, send PING,
//! and treat a PONG with no intervening matching ERROR as success. The
//! broker processes frames from one connection in order, which makes the
//! barrier exact rather than heuristic.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::client::{ClientError, OwnerOutput, SessionState};
use crate::protocol::{
    Command, Document, Envelope, Frame, SchemaSet, ValidationMode, DEFAULT_MAX_FRAME,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("io: {0}")]
    Io(String),
    #[error("broker rejected: {code}: {detail}")]
    Broker { code: String, detail: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("timed out")]
    Timeout,
    #[error("connection closed")]
    Closed,
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> NetError {
        NetError::Io(e.to_string())
    }
}

impl From<crate::protocol::FrameError> for NetError {
    fn from(e: crate::protocol::FrameError) -> NetError {
        NetError::Io(e.to_string())
    }
}

pub struct ClientConfig {
    pub endpoint: String,
    pub client_id: String,
    pub relay: bool,
    /// Ack every delivery after its handler returns. Turn off to ack
    /// manually (or deliberately not at all).
    pub auto_ack: bool,
    /// Bound on barrier waits and the default request timeout.
    pub timeout: Duration,
    pub schemas: SchemaSet,
    pub validation: ValidationMode,
}

impl ClientConfig {
    pub fn new(
        endpoint: impl Into<String>,
        client_id: impl Into<String>,
        schemas: SchemaSet,
    ) -> ClientConfig {
        ClientConfig {
            endpoint: endpoint.into(),
            client_id: client_id.into(),
            relay: false,
            auto_ack: true,
            timeout: Duration::from_millis(5000),
            schemas,
            validation: ValidationMode::Strict,
        }
    }

    pub fn relay(mut self) -> ClientConfig {
        self.relay = true;
        self
    }
}

type Handler = Box<dyn FnMut(&Envelope) + Send>;
type ErrorHook = Box<dyn FnMut(NetError) + Send>;

/// What an outstanding barrier is waiting on; an ERROR frame whose ref
/// headers match the key fails that barrier instead of reaching the
/// async error hook.
enum BarrierKey {
    Plain,
    Subscription(String),
    Domain(String),
    MessageId(String),
}

struct Barrier {
    key: BarrierKey,
    failed: Option<NetError>,
    tx: SyncSender<Result<(), NetError>>,
}

struct Shared {
    session: Mutex<SessionState>,
    writer: Mutex<TcpStream>,
    handlers: Mutex<BTreeMap<String, Handler>>,
    barriers: Mutex<VecDeque<Barrier>>,
    replies: Mutex<BTreeMap<String, SyncSender<Envelope>>>,
    on_error: Mutex<Option<ErrorHook>>,
    auto_ack: bool,
    reply_sid: String,
    closed: AtomicBool,
}

pub struct LiveClient {
    shared: Arc<Shared>,
    broker_id: String,
    timeout: Duration,
}

impl LiveClient {
    /// Connects, waits for CONNECTED, and starts the reader thread. A
    /// broker that answers with ERROR (say, a duplicate client id) fails
    /// the call.
    pub fn connect(config: ClientConfig) -> Result<LiveClient, NetError> {
        let mut session = SessionState::new(&config.client_id, config.schemas);
        if config.relay {
            session = session.relay();
        }
        session.set_validation_mode(config.validation);

        let stream = TcpStream::connect(&config.endpoint)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        stream
            .try_clone()?
            .write_all(&session.connect_frame().encode())?;
        let reply = Frame::decode(&mut reader)?.ok_or(NetError::Closed)?;
        let broker_id = match reply.command() {
            Command::Connected => reply.header("broker-id").unwrap_or_default().to_string(),
            Command::Error => return Err(broker_error(&reply)),
            other => {
                return Err(NetError::Io(format!(
                    "expected CONNECTED, got {}",
                    other.as_str()
                )))
            }
        };

        let reply_sid = format!("reply:{}", config.client_id);
        let shared = Arc::new(Shared {
            session: Mutex::new(session),
            writer: Mutex::new(stream),
            handlers: Mutex::new(BTreeMap::new()),
            barriers: Mutex::new(VecDeque::new()),
            replies: Mutex::new(BTreeMap::new()),
            on_error: Mutex::new(None),
            auto_ack: config.auto_ack,
            reply_sid,
            closed: AtomicBool::new(false),
        });
        {
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || reader_loop(reader, shared));
        }
        Ok(LiveClient {
            shared,
            broker_id,
            timeout: config.timeout,
        })
    }

    pub fn broker_id(&self) -> &str {
        &self.broker_id
    }

    pub fn client_id(&self) -> String {
        self.shared.session.lock().unwrap().client_id().to_string()
    }

    /// Hook for errors that arrive outside any waiting operation
    /// (rejected fire-and-forget publishes, late acks).
    pub fn on_error(&self, hook: impl FnMut(NetError) + Send + 'static) {
        *self.shared.on_error.lock().unwrap() = Some(Box::new(hook));
    }

    /// Subscribes and confirms; the handler runs on the reader thread for
    /// every delivery on the returned subscription id.
    pub fn subscribe(
        &self,
        topic: &str,
        handler: impl FnMut(&Envelope) + Send + 'static,
    ) -> Result<String, NetError> {
        let sid = self.shared.session.lock().unwrap().next_subscription_id();
        self.subscribe_with_id(&sid, topic, handler)?;
        Ok(sid)
    }

    /// Subscribe under a caller-chosen id (ids are broker-unique, so pick
    /// with care; bridges use stable per-topic ids).
    pub fn subscribe_with_id(
        &self,
        sid: &str,
        topic: &str,
        handler: impl FnMut(&Envelope) + Send + 'static,
    ) -> Result<(), NetError> {
        let frame = {
            let session = self.shared.session.lock().unwrap();
            session.subscribe_frame(sid, topic)
        };
        // Register before the broker can deliver anything on this id.
        self.shared
            .handlers
            .lock()
            .unwrap()
            .insert(sid.to_string(), Box::new(handler));
        let result = self.fenced(frame, BarrierKey::Subscription(sid.to_string()));
        match result {
            Ok(()) => {
                self.shared
                    .session
                    .lock()
                    .unwrap()
                    .note_subscribed(sid, topic);
                Ok(())
            }
            Err(e) => {
                self.shared.handlers.lock().unwrap().remove(sid);
                Err(e)
            }
        }
    }

    pub fn unsubscribe(&self, subscription_id: &str) -> Result<(), NetError> {
        let frame = {
            let session = self.shared.session.lock().unwrap();
            session.unsubscribe_frame(subscription_id)
        };
        self.fenced(frame, BarrierKey::Subscription(subscription_id.to_string()))?;
        self.shared.handlers.lock().unwrap().remove(subscription_id);
        self.shared
            .session
            .lock()
            .unwrap()
            .note_unsubscribed(subscription_id);
        Ok(())
    }

    /// Claims a data domain for this client; confirmed.
    pub fn own(&self, domain: &str) -> Result<(), NetError> {
        let frame = self.shared.session.lock().unwrap().own_frame(domain);
        self.fenced(frame, BarrierKey::Domain(domain.to_string()))
    }

    /// Claims `domain` and wires its contribution stream: every
    /// contribution goes through `handler`, and each returned output is
    /// published on the domain's publication or rejection topic with the
    /// contribution's message id as correlation. Returns the contribution
    /// subscription's id. Output publishes are fire-and-forget; failures
    /// land in the [`Self::on_error`] hook.
    pub fn own_domain(
        &self,
        domain: &str,
        mut handler: impl FnMut(&Envelope) -> Vec<OwnerOutput> + Send + 'static,
    ) -> Result<String, NetError> {
        self.own(domain)?;
        let weak = Arc::downgrade(&self.shared);
        let domain_name = domain.to_string();
        self.subscribe(&format!("{domain}.contribution"), move |contribution| {
            let Some(shared) = weak.upgrade() else { return };
            for output in handler(contribution) {
                if let Err(e) = publish_output(&shared, &domain_name, output, contribution) {
                    report_error(&shared, e);
                }
            }
        })
    }

    /// One owner response by hand, for callers managing their own
    /// contribution subscription: published on `<domain>.publication` or
    /// `<domain>.rejection`, correlated to `contribution`. Fire-and-forget,
    /// so it is safe inside delivery handlers.
    pub fn publish_owner_output(
        &self,
        domain: &str,
        output: OwnerOutput,
        contribution: &Envelope,
    ) -> Result<String, NetError> {
        publish_output(&self.shared, domain, output, contribution)
    }

    /// Fire-and-forget publish, as the protocol defines it: a rejection
    /// arrives later as an ERROR frame and lands in the [`Self::on_error`]
    /// hook. Returns the message id.
    pub fn publish(
        &self,
        topic: &str,
        message_type: &str,
        payload: Document,
    ) -> Result<String, NetError> {
        let env = self.build(topic, message_type, payload)?;
        let id = env.message_id.clone();
        self.send(&env.to_publish_frame())?;
        Ok(id)
    }

    /// Publish fenced with a barrier, so broker-side rejections (ownership,
    /// validation, unknown topic) come back as this call's error.
    pub fn publish_confirmed(
        &self,
        topic: &str,
        message_type: &str,
        payload: Document,
    ) -> Result<String, NetError> {
        let env = self.build(topic, message_type, payload)?;
        let id = env.message_id.clone();
        self.fenced(env.to_publish_frame(), BarrierKey::MessageId(id.clone()))?;
        Ok(id)
    }

    /// Puts an existing envelope on the wire untouched: same message id,
    /// sender, and hop trace. This is the relay path; ordinary clients
    /// should let [`Self::publish`] mint fresh envelopes.
    pub fn forward(&self, envelope: &Envelope) -> Result<(), NetError> {
        self.send(&envelope.to_publish_frame())
    }

    /// Publishes a request and blocks for the correlated reply on this
    /// client's reply topic.
    pub fn request(
        &self,
        topic: &str,
        message_type: &str,
        payload: Document,
        timeout: Option<Duration>,
    ) -> Result<Envelope, NetError> {
        let env = {
            let mut session = self.shared.session.lock().unwrap();
            session.build_request(topic, message_type, payload, wall_ms())?
        };
        let correlation = env.message_id.clone();
        let (tx, rx) = mpsc::sync_channel(1);
        self.shared
            .replies
            .lock()
            .unwrap()
            .insert(correlation.clone(), tx);
        let sent = self.fenced(
            env.to_publish_frame(),
            BarrierKey::MessageId(correlation.clone()),
        );
        if let Err(e) = sent {
            self.shared.replies.lock().unwrap().remove(&correlation);
            return Err(e);
        }
        match rx.recv_timeout(timeout.unwrap_or(self.timeout)) {
            Ok(envelope) => Ok(envelope),
            Err(RecvTimeoutError::Timeout) => {
                self.shared.replies.lock().unwrap().remove(&correlation);
                Err(NetError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(NetError::Closed),
        }
    }

    /// Manual ack, for `auto_ack = false` setups.
    pub fn ack(&self, subscription_id: &str, message_id: &str) -> Result<(), NetError> {
        let frame = {
            let session = self.shared.session.lock().unwrap();
            session.ack_frame(subscription_id, message_id)
        };
        self.send(&frame)
    }

    /// Round-trip liveness check; also drains any queued ERROR frames
    /// into the error hook.
    pub fn ping(&self) -> Result<(), NetError> {
        self.fenced(Frame::new(Command::Ping), BarrierKey::Plain)
    }

    /// Whether the connection is gone (socket closed or reader exited).
    pub fn is_closed(&self) -> bool {
        self.shared.closed.load(Ordering::SeqCst)
    }

    /// Says goodbye and closes the socket. The broker treats anything
    /// still unacked as failed.
    pub fn close(&self) {
        if self.shared.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        let frame = self.shared.session.lock().unwrap().disconnect_frame();
        if let Ok(mut writer) = self.shared.writer.lock() {
            let _ = writer.write_all(&frame.encode());
            let _ = writer.flush();
            let _ = writer.shutdown(std::net::Shutdown::Both);
        }
    }

    fn build(
        &self,
        topic: &str,
        message_type: &str,
        payload: Document,
    ) -> Result<Envelope, NetError> {
        let mut session = self.shared.session.lock().unwrap();
        Ok(session.build_publish(topic, message_type, payload, wall_ms())?)
    }

    fn send(&self, frame: &Frame) -> Result<(), NetError> {
        if self.shared.closed.load(Ordering::SeqCst) {
            return Err(NetError::Closed);
        }
        let mut writer = self.shared.writer.lock().unwrap();
        writer.write_all(&frame.encode())?;
        writer.flush()?;
        Ok(())
    }

    /// Sends `frame` followed by PING under one writer lock, then waits
    /// for the barrier verdict from the reader thread.
    fn fenced(&self, frame: Frame, key: BarrierKey) -> Result<(), NetError> {
        if self.shared.closed.load(Ordering::SeqCst) {
            return Err(NetError::Closed);
        }
        let (tx, rx) = mpsc::sync_channel(1);
        {
            // Barrier must exist before the broker can answer the ping.
            let mut barriers = self.shared.barriers.lock().unwrap();
            let mut writer = self.shared.writer.lock().unwrap();
            barriers.push_back(Barrier {
                key,
                failed: None,
                tx,
            });
            let mut bytes = frame.encode();
            bytes.extend_from_slice(&Frame::new(Command::Ping).encode());
            writer.write_all(&bytes)?;
            writer.flush()?;
        }
        match rx.recv_timeout(self.timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => Err(NetError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(NetError::Closed),
        }
    }
}

impl Drop for LiveClient {
    fn drop(&mut self) {
        self.close();
    }
}

use super::wall_ms;

fn broker_error(frame: &Frame) -> NetError {
    NetError::Broker {
        code: frame.header("error-code").unwrap_or("unknown").to_string(),
        detail: String::from_utf8_lossy(frame.body()).trim_end().to_string(),
    }
}

fn reader_loop(mut reader: BufReader<TcpStream>, shared: Arc<Shared>) {
    while let Ok(Some(frame)) = Frame::decode_with_limit(&mut reader, DEFAULT_MAX_FRAME) {
        handle_frame(&shared, frame);
    }
    shared.closed.store(true, Ordering::SeqCst);
    // Wake everyone still waiting; dropped senders read as Closed.
    let mut barriers = shared.barriers.lock().unwrap();
    while let Some(b) = barriers.pop_front() {
        let _ = b.tx.send(Err(NetError::Closed));
    }
    shared.replies.lock().unwrap().clear();
}

fn handle_frame(shared: &Shared, frame: Frame) {
    match frame.command() {
        Command::Message => on_message(shared, &frame),
        Command::Pong => {
            let verdict = {
                let mut barriers = shared.barriers.lock().unwrap();
                barriers.pop_front().map(|mut b| {
                    let result = match b.failed.take() {
                        Some(e) => Err(e),
                        None => Ok(()),
                    };
                    (b.tx, result)
                })
            };
            if let Some((tx, result)) = verdict {
                let _ = tx.send(result);
            }
        }
        Command::Error => on_error_frame(shared, &frame),
        // Unsolicited server frames with nothing to route to.
        _ => {}
    }
}

fn on_message(shared: &Shared, frame: &Frame) {
    let Ok(envelope) = Envelope::from_frame(frame) else {
        return;
    };
    let sid = frame.header("subscription-id").unwrap_or_default().to_string();

    if sid == shared.reply_sid {
        ack(shared, &sid, &envelope.message_id);
        if let Some(correlation) = envelope.correlation_id.clone() {
            let waiter = shared.replies.lock().unwrap().remove(&correlation);
            if let Some(tx) = waiter {
                let _ = tx.send(envelope);
            }
        }
        return;
    }

    let mut handlers = shared.handlers.lock().unwrap();
    if let Some(handler) = handlers.get_mut(&sid) {
        handler(&envelope);
        if shared.auto_ack {
            ack(shared, &sid, &envelope.message_id);
        }
    }
}

fn on_error_frame(shared: &Shared, frame: &Frame) {
    let error = broker_error(frame);
    {
        let mut barriers = shared.barriers.lock().unwrap();
        let hit = barriers.iter_mut().find(|b| {
            b.failed.is_none()
                && match &b.key {
                    BarrierKey::Plain => false,
                    BarrierKey::Subscription(sid) => {
                        frame.header("ref-subscription-id") == Some(sid)
                    }
                    BarrierKey::Domain(domain) => frame.header("ref-domain") == Some(domain),
                    BarrierKey::MessageId(id) => frame.header("ref-message-id") == Some(id),
                }
        });
        if let Some(barrier) = hit {
            barrier.failed = Some(error);
            return;
        }
    }
    let mut hook = shared.on_error.lock().unwrap();
    if let Some(hook) = hook.as_mut() {
        hook(error);
    }
}

fn publish_output(
    shared: &Shared,
    domain: &str,
    output: OwnerOutput,
    contribution: &Envelope,
) -> Result<String, NetError> {
    if shared.closed.load(Ordering::SeqCst) {
        return Err(NetError::Closed);
    }
    let env = {
        let mut session = shared.session.lock().unwrap();
        session.build_owner_output(domain, output, contribution, wall_ms())?
    };
    let id = env.message_id.clone();
    let mut writer = shared.writer.lock().unwrap();
    writer.write_all(&env.to_publish_frame().encode())?;
    writer.flush()?;
    Ok(id)
}

fn report_error(shared: &Shared, error: NetError) {
    let mut hook = shared.on_error.lock().unwrap();
    match hook.as_mut() {
        Some(hook) => hook(error),
        None => log::warn!("owner output failed: {error}"),
    }
}

fn ack(shared: &Shared, sid: &str, message_id: &str) {
    let frame = {
        let session = shared.session.lock().unwrap();
        session.ack_frame(sid, message_id)
    };
    if let Ok(mut writer) = shared.writer.lock() {
        let _ = writer.write_all(&frame.encode());
        let _ = writer.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::BrokerConfig;
    use crate::net::serve;
    use crate::protocol::{parse_schema_set, Value};
    use crate::sim::components::ATS_SCHEMA;
    use std::sync::mpsc;

    fn server() -> crate::net::ServerHandle {
        let config = BrokerConfig::parse_str(&format!(
            "broker.id = \"central\"\n\
             schema.0 = \"{}\"\n\
             domain.0.name = \"met\"\n\
             domain.0.ack_deadline_ms = 2000\n",
            crate::net::testutil::schema_file()
        ))
        .unwrap();
        serve(config).unwrap()
    }

    fn client(addr: std::net::SocketAddr, id: &str) -> LiveClient {
        let schemas = parse_schema_set(ATS_SCHEMA).unwrap();
        LiveClient::connect(ClientConfig::new(addr.to_string(), id, schemas)).unwrap()
    }

    #[test]
    fn publish_reaches_subscriber_via_handler() {
        let handle = server();
        let addr = handle.addr();
        let owner = client(addr, "met1");
        owner.own("met").unwrap();

        let watcher = client(addr, "watch");
        let (tx, rx) = mpsc::channel();
        watcher
            .subscribe("met.publication", move |env| {
                let _ = tx.send((env.message_id.clone(), env.payload.get_int("qnh")));
            })
            .unwrap();

        let mut payload = Document::new();
        payload.put("qnh", Value::Int(1013));
        let id = owner
            .publish_confirmed("met.publication", "met.update", payload)
            .unwrap();

        let (got_id, qnh) = rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(got_id, id);
        assert_eq!(qnh, Some(1013));

        watcher.close();
        owner.close();
        handle.shutdown();
    }

    #[test]
    fn ownership_violation_fails_the_confirmed_publish() {
        let handle = server();
        let intruder = client(handle.addr(), "intruder");
        let mut payload = Document::new();
        payload.put("qnh", Value::Int(990));
        let err = intruder
            .publish_confirmed("met.publication", "met.update", payload)
            .unwrap_err();
        assert!(
            matches!(err, NetError::Broker { ref code, .. } if code == "ownership-violation"),
            "got {err}"
        );
        intruder.close();
        handle.shutdown();
    }

    #[test]
    fn local_validation_rejects_unknown_types_before_the_wire() {
        let handle = server();
        let c = client(handle.addr(), "c1");
        let err = c
            .publish("met.publication", "met.bogus", Document::new())
            .unwrap_err();
        assert!(matches!(err, NetError::Client(_)), "got {err}");
        c.close();
        handle.shutdown();
    }

    #[test]
    fn duplicate_client_id_fails_connect() {
        let handle = server();
        let addr = handle.addr();
        let first = client(addr, "dup");
        let schemas = parse_schema_set(ATS_SCHEMA).unwrap();
        let second = LiveClient::connect(ClientConfig::new(addr.to_string(), "dup", schemas));
        assert!(
            matches!(second, Err(NetError::Broker { ref code, .. }) if code == "protocol-error"),
        );
        first.close();
        handle.shutdown();
    }

    #[test]
    fn sys_topics_request_answers_with_topic_list() {
        let handle = server();
        let c = client(handle.addr(), "asker");
        let reply = c
            .request("_sys.topics", "sys.topics.request", Document::new(), None)
            .unwrap();
        let names: Vec<&str> = reply
            .payload
            .iter()
            .filter(|(path, _)| path.as_ref().ends_with(".name"))
            .filter_map(|(_, value)| value.as_text())
            .collect();
        assert!(names.contains(&"met.publication"), "names: {names:?}");
        assert!(names.contains(&"met.publication.dlq"));
        c.close();
        handle.shutdown();
    }

    #[test]
    fn owner_pipeline_publishes_correlated_outputs() {
        let handle = server();
        let addr = handle.addr();

        let owner = client(addr, "met1");
        owner
            .own_domain("met", |contribution| {
                let mut payload = Document::new();
                let qnh = contribution.payload.get_int("qnh").unwrap_or(0);
                payload.put("qnh", Value::Int(qnh + 1));
                vec![OwnerOutput::Publication {
                    message_type: "met.update".into(),
                    payload,
                }]
            })
            .unwrap();

        let watcher = client(addr, "watch");
        let (tx, rx) = mpsc::channel();
        watcher
            .subscribe("met.publication", move |env| {
                let _ = tx.send((env.correlation_id.clone(), env.payload.get_int("qnh")));
            })
            .unwrap();

        let contributor = client(addr, "cwp9");
        let mut doc = Document::new();
        doc.put("qnh", Value::Int(996));
        let sent = contributor
            .publish_confirmed("met.contribution", "met.update", doc)
            .unwrap();

        let (correlation, qnh) = rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(correlation.as_deref(), Some(sent.as_str()));
        assert_eq!(qnh, Some(997));

        contributor.close();
        watcher.close();
        owner.close();
        handle.shutdown();
    }

    #[test]
    fn duplicate_subscription_id_is_rejected_on_subscribe() {
        let handle = server();
        let a = client(handle.addr(), "suba");
        let b = client(handle.addr(), "subb");
        let sid = a.subscribe("met.publication", |_| {}).unwrap();
        assert_eq!(sid, "suba:s1");
        // Same broker-wide id from another client must be refused.
        let frame = {
            let session = b.shared.session.lock().unwrap();
            session.subscribe_frame("suba:s1", "met.publication")
        };
        let err = b
            .fenced(frame, BarrierKey::Subscription("suba:s1".to_string()))
            .unwrap_err();
        assert!(
            matches!(err, NetError::Broker { ref code, .. } if code == "duplicate-subscription")
        );
        a.close();
        b.close();
        handle.shutdown();
    }
}
