//! Append-only simulation event log with a canonical text rendering for
//! golden-file comparison.
//!
//! One record per line, tab-separated:
//! `time<TAB>broker<TAB>kind<TAB>topic<TAB>message_id<TAB>client<TAB>detail`
//! with `-` for empty fields. Records are appended in execution order, so
//! equal runs render byte-identical text.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    DeclareTopic,
    DeclareDomain,
    Connect,
    Disconnect,
    Subscribe,
    Own,
    Publish,
    Deliver,
    Ack,
    Dlq,
    Forward,
    Drop,
    Error,
    Partition,
    Heal,
    Attach,
    Detach,
    RequestTimeout,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::DeclareTopic => "declare_topic",
            EventKind::DeclareDomain => "declare_domain",
            EventKind::Connect => "connect",
            EventKind::Disconnect => "disconnect",
            EventKind::Subscribe => "subscribe",
            EventKind::Own => "own",
            EventKind::Publish => "publish",
            EventKind::Deliver => "deliver",
            EventKind::Ack => "ack",
            EventKind::Dlq => "dlq",
            EventKind::Forward => "forward",
            EventKind::Drop => "drop",
            EventKind::Error => "error",
            EventKind::Partition => "partition",
            EventKind::Heal => "heal",
            EventKind::Attach => "attach",
            EventKind::Detach => "detach",
            EventKind::RequestTimeout => "request_timeout",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub time_ms: i64,
    pub broker: String,
    pub kind: EventKind,
    pub topic: String,
    pub message_id: String,
    pub client: String,
    pub detail: String,
}

impl EventRecord {
    fn render_into(&self, out: &mut String) {
        use fmt::Write;
        fn field(s: &str) -> &str {
            if s.is_empty() {
                "-"
            } else {
                s
            }
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time_ms,
            field(&self.broker),
            self.kind,
            field(&self.topic),
            field(&self.message_id),
            field(&self.client),
            field(&self.detail),
        )
        .expect("write to String");
    }
}

#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> EventLog {
        EventLog::default()
    }

    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Canonical text form; byte-identical across equal runs.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        for record in &self.records {
            record.render_into(&mut out);
        }
        out
    }
}
