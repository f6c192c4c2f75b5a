//! Live TCP broker: frames in, frames out, one engine thread.
//!
//! Every connection gets a reader thread (socket to engine channel) and a
//! writer thread (engine channel to socket); the engine thread owns the
//! [`Broker`] outright, so command handling needs no locks and commands
//! from one client apply in the order they were sent. Between commands the
//! engine wakes on a short timer to sweep ack deadlines and flush
//! deliveries, trading at most ~25ms of latency for a fully serialized
//! core.

use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::broker::{Broker, BrokerConfig, BrokerError};
use crate::protocol::{Command, Envelope, Frame, DEFAULT_MAX_FRAME};

const TICK: Duration = Duration::from_millis(25);

enum EngineCmd {
    Open {
        session: u64,
        tx: Sender<WriterMsg>,
    },
    Frame {
        session: u64,
        frame: Frame,
    },
    Closed {
        session: u64,
    },
    Shutdown,
}

enum WriterMsg {
    Bytes(Vec<u8>),
    Close,
}

struct SessionEntry {
    client: Option<String>,
    tx: Sender<WriterMsg>,
}

/// A running broker server. Dropping the handle leaves the server running;
/// call [`ServerHandle::shutdown`] to stop it.
pub struct ServerHandle {
    addr: SocketAddr,
    cmd_tx: Sender<EngineCmd>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes every session, and joins the service
    /// threads. Idempotent enough for test teardown: errors are ignored.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.cmd_tx.send(EngineCmd::Shutdown);
        // Wake the accept loop so it observes the stop flag.
        let _ = TcpStream::connect(self.addr);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Binds the configured listen address (an OS-assigned port if the config
/// names none) and serves until shut down.
pub fn serve(config: BrokerConfig) -> Result<ServerHandle, crate::broker::ConfigError> {
    let listen = config.listen.clone().unwrap_or_else(|| "127.0.0.1:0".to_string());
    let broker = config.build()?;
    let listener = TcpListener::bind(&listen).map_err(|e| crate::broker::ConfigError::Io {
        path: listen.clone(),
        message: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(|e| crate::broker::ConfigError::Io {
        path: listen,
        message: e.to_string(),
    })?;

    let stop = Arc::new(AtomicBool::new(false));
    let (cmd_tx, cmd_rx) = mpsc::channel();

    let engine = {
        let broker_id = broker.id().to_string();
        thread::spawn(move || engine_loop(broker, broker_id, cmd_rx))
    };
    let acceptor = {
        let stop = Arc::clone(&stop);
        let cmd_tx = cmd_tx.clone();
        thread::spawn(move || accept_loop(listener, stop, cmd_tx))
    };

    Ok(ServerHandle {
        addr,
        cmd_tx,
        stop,
        threads: vec![engine, acceptor],
    })
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, cmd_tx: Sender<EngineCmd>) {
    let next_session = AtomicU64::new(1);
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let session = next_session.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        if cmd_tx.send(EngineCmd::Open { session, tx }).is_err() {
            break;
        }
        spawn_session(session, stream, rx, cmd_tx.clone());
    }
}

fn spawn_session(
    session: u64,
    stream: TcpStream,
    writer_rx: Receiver<WriterMsg>,
    cmd_tx: Sender<EngineCmd>,
) {
    let write_half = match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    };
    thread::spawn(move || writer_loop(write_half, writer_rx));
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        loop {
            match Frame::decode_with_limit(&mut reader, DEFAULT_MAX_FRAME) {
                Ok(Some(frame)) => {
                    if cmd_tx.send(EngineCmd::Frame { session, frame }).is_err() {
                        return;
                    }
                }
                Ok(None) | Err(_) => {
                    let _ = cmd_tx.send(EngineCmd::Closed { session });
                    return;
                }
            }
        }
    });
}

fn writer_loop(mut stream: TcpStream, rx: Receiver<WriterMsg>) {
    while let Ok(msg) = rx.recv() {
        match msg {
            WriterMsg::Bytes(bytes) => {
                if stream.write_all(&bytes).and_then(|()| stream.flush()).is_err() {
                    break;
                }
            }
            WriterMsg::Close => break,
        }
    }
    let _ = stream.shutdown(std::net::Shutdown::Both);
}

struct Engine {
    broker: Broker,
    broker_id: String,
    epoch: Instant,
    sessions: BTreeMap<u64, SessionEntry>,
    clients: BTreeMap<String, u64>,
}

fn engine_loop(broker: Broker, broker_id: String, rx: Receiver<EngineCmd>) {
    let mut engine = Engine {
        broker,
        broker_id,
        epoch: Instant::now(),
        sessions: BTreeMap::new(),
        clients: BTreeMap::new(),
    };
    loop {
        match rx.recv_timeout(TICK) {
            Ok(EngineCmd::Open { session, tx }) => {
                engine.sessions.insert(session, SessionEntry { client: None, tx });
            }
            Ok(EngineCmd::Frame { session, frame }) => {
                engine.handle_frame(session, frame);
                engine.tick();
            }
            Ok(EngineCmd::Closed { session }) => {
                engine.drop_session(session);
                engine.tick();
            }
            Ok(EngineCmd::Shutdown) => break,
            Err(RecvTimeoutError::Timeout) => engine.tick(),
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    for (_, entry) in engine.sessions {
        let _ = entry.tx.send(WriterMsg::Close);
    }
}

impl Engine {
    fn now_ms(&self) -> i64 {
        self.epoch.elapsed().as_millis() as i64
    }

    /// Sweeps expired acks and pushes every queued delivery out.
    fn tick(&mut self) {
        let now = self.now_ms();
        self.broker.sweep_deadlines(now);
        for d in self.broker.dispatch(now) {
            if let Some(session) = self.clients.get(&d.client) {
                if let Some(entry) = self.sessions.get(session) {
                    let frame = d.envelope.to_message_frame(&d.subscription_id);
                    let _ = entry.tx.send(WriterMsg::Bytes(frame.encode()));
                }
            }
        }
    }

    fn send(&self, session: u64, frame: Frame) {
        if let Some(entry) = self.sessions.get(&session) {
            let _ = entry.tx.send(WriterMsg::Bytes(frame.encode()));
        }
    }

    fn send_error(&self, session: u64, err: &BrokerError, refs: &[(&str, &str)]) {
        let mut frame = Frame::new(Command::Error).with_header("error-code", err.wire_code());
        for (name, value) in refs {
            frame.set_header(name, *value);
        }
        let frame = frame.with_body(err.wire_body().into_bytes());
        self.send(session, frame);
    }

    fn protocol_error(&self, session: u64, message: &str) {
        let frame = Frame::new(Command::Error)
            .with_header("error-code", "protocol-error")
            .with_body(format!("{message}\n").into_bytes());
        self.send(session, frame);
    }

    fn drop_session(&mut self, session: u64) {
        if let Some(entry) = self.sessions.remove(&session) {
            if let Some(client) = entry.client {
                self.clients.remove(&client);
                self.broker.disconnect(&client, self.now_ms());
            }
            let _ = entry.tx.send(WriterMsg::Close);
        }
    }

    fn handle_frame(&mut self, session: u64, frame: Frame) {
        if let Some(missing) = frame.missing_required_header() {
            self.protocol_error(session, &format!("missing header {missing}"));
            return;
        }
        let connected = self
            .sessions
            .get(&session)
            .and_then(|e| e.client.clone());
        match frame.command() {
            Command::Connect => self.on_connect(session, &frame, connected),
            Command::Ping => self.send(session, Frame::new(Command::Pong)),
            Command::Disconnect => self.drop_session(session),
            _ if connected.is_none() => {
                self.protocol_error(session, "not connected: send CONNECT first");
            }
            Command::Subscribe => self.on_subscribe(session, &frame, &connected.unwrap()),
            Command::Unsubscribe => self.on_unsubscribe(session, &frame, &connected.unwrap()),
            Command::Publish => self.on_publish(session, &frame, &connected.unwrap()),
            Command::Ack => self.on_ack(session, &frame, &connected.unwrap()),
            Command::Own => self.on_own(session, &frame, &connected.unwrap()),
            Command::Connected | Command::Message | Command::Error | Command::Pong => {
                self.protocol_error(
                    session,
                    &format!("{} is broker-to-client only", frame.command().as_str()),
                );
            }
        }
    }

    fn on_connect(&mut self, session: u64, frame: &Frame, connected: Option<String>) {
        if connected.is_some() {
            self.protocol_error(session, "already connected");
            return;
        }
        let client = frame.header("client-id").unwrap_or_default().to_string();
        let relay = frame.header("relay") == Some("true");
        match self.broker.connect(&client, relay) {
            Ok(()) => {
                self.clients.insert(client.clone(), session);
                if let Some(entry) = self.sessions.get_mut(&session) {
                    entry.client = Some(client);
                }
                let reply = Frame::new(Command::Connected)
                    .with_header("broker-id", &self.broker_id);
                self.send(session, reply);
            }
            Err(e) => self.send_error(session, &e, &[]),
        }
    }

    fn on_subscribe(&mut self, session: u64, frame: &Frame, client: &str) {
        let topic = frame.header("topic").unwrap_or_default().to_string();
        let sid = frame.header("subscription-id").unwrap_or_default().to_string();
        if let Err(e) = self.broker.subscribe(client, &topic, sid.clone()) {
            self.send_error(session, &e, &[("ref-subscription-id", &sid)]);
        }
    }

    fn on_unsubscribe(&mut self, session: u64, frame: &Frame, client: &str) {
        let sid = frame.header("subscription-id").unwrap_or_default().to_string();
        let now = self.now_ms();
        if let Err(e) = self.broker.unsubscribe(client, &sid, now) {
            self.send_error(session, &e, &[("ref-subscription-id", &sid)]);
        }
    }

    fn on_publish(&mut self, session: u64, frame: &Frame, client: &str) {
        let envelope = match Envelope::from_frame(frame) {
            Ok(env) => env,
            Err(e) => {
                self.protocol_error(session, &e.to_string());
                return;
            }
        };
        let message_id = envelope.message_id.clone();
        let now = self.now_ms();
        if let Err(e) = self.broker.publish(client, envelope, now) {
            self.send_error(session, &e, &[("ref-message-id", &message_id)]);
        }
    }

    fn on_ack(&mut self, session: u64, frame: &Frame, client: &str) {
        let sid = frame.header("subscription-id").unwrap_or_default();
        let mid = frame.header("message-id").unwrap_or_default();
        if let Err(e) = self.broker.ack(client, sid, mid) {
            self.send_error(
                session,
                &e,
                &[("ref-subscription-id", sid), ("ref-message-id", mid)],
            );
        }
    }

    fn on_own(&mut self, session: u64, frame: &Frame, client: &str) {
        let domain = frame.header("domain").unwrap_or_default();
        if let Err(e) = self.broker.register_owner(client, domain) {
            self.send_error(session, &e, &[("ref-domain", domain)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config() -> BrokerConfig {
        BrokerConfig::parse_str(&format!(
            "broker.id = \"central\"\n\
             schema.0 = \"{}\"\n\
             domain.0.name = \"met\"\n\
             domain.0.ack_deadline_ms = 200\n",
            crate::net::testutil::schema_file()
        ))
        .unwrap()
    }

    struct TestConn {
        stream: TcpStream,
        reader: BufReader<TcpStream>,
    }

    impl TestConn {
        fn open(addr: SocketAddr) -> TestConn {
            let stream = TcpStream::connect(addr).unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            TestConn { stream, reader }
        }

        fn send(&mut self, frame: &Frame) {
            self.stream.write_all(&frame.encode()).unwrap();
            self.stream.flush().unwrap();
        }

        fn recv(&mut self) -> Frame {
            Frame::decode(&mut self.reader).unwrap().expect("peer closed")
        }

        fn connect(addr: SocketAddr, client: &str) -> TestConn {
            let mut conn = TestConn::open(addr);
            conn.send(&Frame::new(Command::Connect).with_header("client-id", client));
            let reply = conn.recv();
            assert_eq!(reply.command(), Command::Connected);
            conn
        }
    }

    #[test]
    fn connect_subscribe_publish_deliver_ack() {
        let handle = serve(test_config()).unwrap();
        let addr = handle.addr();

        let mut owner = TestConn::connect(addr, "met1");
        owner.send(&Frame::new(Command::Own).with_header("domain", "met"));

        let mut sub = TestConn::connect(addr, "watch");
        sub.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication")
                .with_header("subscription-id", "watch:s1"),
        );
        // Confirm both sync ops with a ping barrier before publishing.
        owner.send(&Frame::new(Command::Ping));
        assert_eq!(owner.recv().command(), Command::Pong);
        sub.send(&Frame::new(Command::Ping));
        assert_eq!(sub.recv().command(), Command::Pong);

        let mut payload = crate::protocol::Document::new();
        payload.put("qnh", crate::protocol::Value::Int(1019));
        let env = Envelope::new("met.publication", "met1:1", "met1", "met.update", 0, payload);
        owner.send(&env.to_publish_frame());

        let msg = sub.recv();
        assert_eq!(msg.command(), Command::Message);
        assert_eq!(msg.header("topic"), Some("met.publication"));
        assert_eq!(msg.header("subscription-id"), Some("watch:s1"));
        let delivered = Envelope::from_frame(&msg).unwrap();
        assert_eq!(delivered.payload.get_int("qnh"), Some(1019));
        assert_eq!(delivered.hop_trace, vec!["central".to_string()]);

        sub.send(
            &Frame::new(Command::Ack)
                .with_header("subscription-id", "watch:s1")
                .with_header("message-id", "met1:1"),
        );
        sub.send(&Frame::new(Command::Ping));
        assert_eq!(sub.recv().command(), Command::Pong);

        handle.shutdown();
    }

    #[test]
    fn publish_errors_reference_the_message() {
        let handle = serve(test_config()).unwrap();
        let mut conn = TestConn::connect(handle.addr(), "intruder");
        let env = Envelope::new(
            "met.publication",
            "intruder:1",
            "intruder",
            "met.update",
            0,
            crate::protocol::Document::new(),
        );
        conn.send(&env.to_publish_frame());
        let err = conn.recv();
        assert_eq!(err.command(), Command::Error);
        assert_eq!(err.header("error-code"), Some("ownership-violation"));
        assert_eq!(err.header("ref-message-id"), Some("intruder:1"));
        handle.shutdown();
    }

    #[test]
    fn unacked_deliveries_dead_letter_on_disconnect() {
        let handle = serve(test_config()).unwrap();
        let addr = handle.addr();

        let mut owner = TestConn::connect(addr, "met1");
        owner.send(&Frame::new(Command::Own).with_header("domain", "met"));

        let mut watcher = TestConn::connect(addr, "dlq_watch");
        watcher.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication.dlq")
                .with_header("subscription-id", "dlq_watch:s1"),
        );
        let mut silent = TestConn::connect(addr, "silent");
        silent.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication")
                .with_header("subscription-id", "silent:s1"),
        );
        owner.send(&Frame::new(Command::Ping));
        assert_eq!(owner.recv().command(), Command::Pong);
        watcher.send(&Frame::new(Command::Ping));
        assert_eq!(watcher.recv().command(), Command::Pong);
        silent.send(&Frame::new(Command::Ping));
        assert_eq!(silent.recv().command(), Command::Pong);

        let mut payload = crate::protocol::Document::new();
        payload.put("qnh", crate::protocol::Value::Int(995));
        let env = Envelope::new("met.publication", "met1:9", "met1", "met.update", 0, payload);
        owner.send(&env.to_publish_frame());

        // Receive but never ack, then hang up.
        let msg = silent.recv();
        assert_eq!(msg.command(), Command::Message);
        silent.send(&Frame::new(Command::Disconnect));
        drop(silent);

        let record = watcher.recv();
        assert_eq!(record.command(), Command::Message);
        assert_eq!(record.header("topic"), Some("met.publication.dlq"));
        let rec_env = Envelope::from_frame(&record).unwrap();
        assert_eq!(rec_env.payload.get_text("reason"), Some("client_disconnected"));
        assert_eq!(rec_env.payload.get_text("failed_client"), Some("silent"));
        handle.shutdown();
    }

    #[test]
    fn commands_before_connect_are_protocol_errors() {
        let handle = serve(test_config()).unwrap();
        let mut conn = TestConn::open(handle.addr());
        conn.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication")
                .with_header("subscription-id", "x:s1"),
        );
        let err = conn.recv();
        assert_eq!(err.command(), Command::Error);
        assert_eq!(err.header("error-code"), Some("protocol-error"));
        handle.shutdown();
    }

    #[test]
    fn ack_deadline_expiry_dead_letters_live() {
        let handle = serve(test_config()).unwrap();
        let addr = handle.addr();
        let mut owner = TestConn::connect(addr, "met1");
        owner.send(&Frame::new(Command::Own).with_header("domain", "met"));
        let mut watcher = TestConn::connect(addr, "dlq_watch");
        watcher.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication.dlq")
                .with_header("subscription-id", "dlq_watch:s1"),
        );
        let mut lazy = TestConn::connect(addr, "lazy");
        lazy.send(
            &Frame::new(Command::Subscribe)
                .with_header("topic", "met.publication")
                .with_header("subscription-id", "lazy:s1"),
        );
        owner.send(&Frame::new(Command::Ping));
        assert_eq!(owner.recv().command(), Command::Pong);
        watcher.send(&Frame::new(Command::Ping));
        assert_eq!(watcher.recv().command(), Command::Pong);
        lazy.send(&Frame::new(Command::Ping));
        assert_eq!(lazy.recv().command(), Command::Pong);

        let mut payload = crate::protocol::Document::new();
        payload.put("qnh", crate::protocol::Value::Int(1002));
        let env = Envelope::new("met.publication", "met1:2", "met1", "met.update", 0, payload);
        owner.send(&env.to_publish_frame());
        let _ = lazy.recv(); // delivered, never acked; deadline is 200ms

        let record = watcher.recv();
        let rec_env = Envelope::from_frame(&record).unwrap();
        assert_eq!(rec_env.payload.get_text("reason"), Some("ack_timeout"));
        assert_eq!(rec_env.payload.get_text("failed_client"), Some("lazy"));
        assert_eq!(
            rec_env.payload.get_text("original_message_id"),
            Some("met1:2")
        );
        handle.shutdown();
    }
}
