//! The demo air-traffic components: a flight-plan owner, a QNH source, CWP
//! replicas, a legacy-format interface agent, and a dead-letter recovery
//! counter. All pure state machines; the simulation and the live demo feed
//! them envelopes and publish what they return.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::broker::DlqRecord;
use crate::client::OwnerOutput;
use crate::protocol::{Document, Envelope, Value};

/// Schema set for the demo domains; also shipped as `configs/ats.schema`.
pub const ATS_SCHEMA: &str = "\
# flight plan domain
message fpl.create v1
field callsign string required pattern=/[A-Z0-9]{2,7}/
field aircraft_type string optional
field adep string optional pattern=/[A-Z]{4}/
field ades string optional pattern=/[A-Z]{4}/
field runway string optional
field eobt int optional min=0 max=1439
field squawk string optional pattern=/[0-7]{4}/

message fpl.update v1
field callsign string required pattern=/[A-Z0-9]{2,7}/
field aircraft_type string optional
field adep string optional pattern=/[A-Z]{4}/
field ades string optional pattern=/[A-Z]{4}/
field runway string optional
field eobt int optional min=0 max=1439
field squawk string optional pattern=/[0-7]{4}/
field status string optional enum(filed|cleared|taxiing|departed)

message fpl.delete v1
field callsign string required pattern=/[A-Z0-9]{2,7}/

message fpl.state v1
field callsign string required pattern=/[A-Z0-9]{2,7}/
field aircraft_type string required
field adep string required pattern=/[A-Z]{4}/
field ades string required pattern=/[A-Z]{4}/
field runway string required
field eobt int required min=0 max=1439
field squawk string required pattern=/[0-7]{4}/
field status string required enum(filed|cleared|taxiing|departed|cancelled)
field revision int required min=1

message fpl.reject v1
field reason string required
field callsign string required

# meteorological domain
message met.update v1
field qnh int required min=900 max=1100

# per-position selection, local scope
message selection.update v1
field callsign string required pattern=/[A-Z0-9]{2,7}/
";

pub const FPL_STATE_TYPE: &str = "fpl.state";
pub const FPL_REJECT_TYPE: &str = "fpl.reject";
pub const MET_UPDATE_TYPE: &str = "met.update";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FplStatus {
    Filed,
    Cleared,
    Taxiing,
    Departed,
    Cancelled,
}

impl FplStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FplStatus::Filed => "filed",
            FplStatus::Cleared => "cleared",
            FplStatus::Taxiing => "taxiing",
            FplStatus::Departed => "departed",
            FplStatus::Cancelled => "cancelled",
        }
    }

    pub fn from_token(token: &str) -> Option<FplStatus> {
        Some(match token {
            "filed" => FplStatus::Filed,
            "cleared" => FplStatus::Cleared,
            "taxiing" => FplStatus::Taxiing,
            "departed" => FplStatus::Departed,
            "cancelled" => FplStatus::Cancelled,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlightPlan {
    pub callsign: String,
    pub aircraft_type: String,
    pub adep: String,
    pub ades: String,
    pub runway: String,
    pub eobt: i64,
    pub squawk: String,
    pub status: FplStatus,
    pub revision: i64,
}

impl FlightPlan {
    /// A fresh plan at revision 1, fields defaulted where the create
    /// contribution left them out.
    fn create(callsign: &str, doc: &Document) -> FlightPlan {
        let text = |path: &str, fallback: &str| {
            doc.get_text(path).unwrap_or(fallback).to_string()
        };
        FlightPlan {
            callsign: callsign.to_string(),
            aircraft_type: text("aircraft_type", "ZZZZ"),
            adep: text("adep", "ZZZZ"),
            ades: text("ades", "ZZZZ"),
            runway: text("runway", "00"),
            eobt: doc.get_int("eobt").unwrap_or(0),
            squawk: text("squawk", "0000"),
            status: FplStatus::Filed,
            revision: 1,
        }
    }

    /// Merges the fields present in an update contribution; absent fields
    /// keep their value. Bumps the revision.
    fn merge_update(&mut self, doc: &Document) {
        if let Some(v) = doc.get_text("aircraft_type") {
            self.aircraft_type = v.to_string();
        }
        if let Some(v) = doc.get_text("adep") {
            self.adep = v.to_string();
        }
        if let Some(v) = doc.get_text("ades") {
            self.ades = v.to_string();
        }
        if let Some(v) = doc.get_text("runway") {
            self.runway = v.to_string();
        }
        if let Some(v) = doc.get_int("eobt") {
            self.eobt = v;
        }
        if let Some(v) = doc.get_text("squawk") {
            self.squawk = v.to_string();
        }
        if let Some(status) = doc.get_text("status").and_then(FplStatus::from_token) {
            self.status = status;
        }
        self.revision += 1;
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::new();
        doc.put("callsign", Value::text(&self.callsign));
        doc.put("aircraft_type", Value::text(&self.aircraft_type));
        doc.put("adep", Value::text(&self.adep));
        doc.put("ades", Value::text(&self.ades));
        doc.put("runway", Value::text(&self.runway));
        doc.put("eobt", Value::Int(self.eobt));
        doc.put("squawk", Value::text(&self.squawk));
        doc.put("status", Value::text(self.status.as_str()));
        doc.put("revision", Value::Int(self.revision));
        doc
    }

    pub fn from_document(doc: &Document) -> Option<FlightPlan> {
        Some(FlightPlan {
            callsign: doc.get_text("callsign")?.to_string(),
            aircraft_type: doc.get_text("aircraft_type")?.to_string(),
            adep: doc.get_text("adep")?.to_string(),
            ades: doc.get_text("ades")?.to_string(),
            runway: doc.get_text("runway")?.to_string(),
            eobt: doc.get_int("eobt")?,
            squawk: doc.get_text("squawk")?.to_string(),
            status: FplStatus::from_token(doc.get_text("status")?)?,
            revision: doc.get_int("revision")?,
        })
    }
}

pub(crate) fn rejection(reason: &str, callsign: &str) -> OwnerOutput {
    let mut payload = Document::new();
    payload.put("reason", Value::text(reason));
    payload.put(
        "callsign",
        Value::text(if callsign.is_empty() { "UNKNOWN" } else { callsign }),
    );
    OwnerOutput::Rejection {
        message_type: FPL_REJECT_TYPE.into(),
        payload,
    }
}

/// The flight-plan owner's state: the authoritative callsign map.
#[derive(Debug, Default)]
pub struct FplOwnerState {
    plans: BTreeMap<String, FlightPlan>,
}

impl FplOwnerState {
    pub fn new() -> FplOwnerState {
        FplOwnerState::default()
    }

    pub fn plans(&self) -> &BTreeMap<String, FlightPlan> {
        &self.plans
    }

    /// Processes one contribution and returns exactly one output: the full
    /// published record, or a rejection naming the reason. Contributions
    /// arrive schema-valid; the checks here are the owner's own rules.
    pub fn apply(&mut self, contribution: &Envelope) -> OwnerOutput {
        let doc = &contribution.payload;
        let callsign = doc.get_text("callsign").unwrap_or_default().to_string();
        if callsign.is_empty() {
            return rejection("malformed", "");
        }
        match contribution.message_type.as_str() {
            "fpl.create" => {
                if self.plans.contains_key(&callsign) {
                    return rejection("already-exists", &callsign);
                }
                let plan = FlightPlan::create(&callsign, doc);
                let payload = plan.to_document();
                self.plans.insert(callsign, plan);
                OwnerOutput::Publication {
                    message_type: FPL_STATE_TYPE.into(),
                    payload,
                }
            }
            "fpl.update" => match self.plans.get_mut(&callsign) {
                None => rejection("unknown-callsign", &callsign),
                Some(plan) => {
                    plan.merge_update(doc);
                    OwnerOutput::Publication {
                        message_type: FPL_STATE_TYPE.into(),
                        payload: plan.to_document(),
                    }
                }
            },
            "fpl.delete" => match self.plans.remove(&callsign) {
                None => rejection("unknown-callsign", &callsign),
                Some(mut plan) => {
                    // The cancellation is published at the next revision;
                    // the record then leaves the owner's map.
                    plan.revision += 1;
                    plan.status = FplStatus::Cancelled;
                    OwnerOutput::Publication {
                        message_type: FPL_STATE_TYPE.into(),
                        payload: plan.to_document(),
                    }
                }
            },
            _ => rejection("unsupported-type", &callsign),
        }
    }
}

/// A CWP's mirror of published state: flight plans by callsign plus the
/// latest QNH. Stale revisions are ignored so redelivered or reordered
/// publications cannot roll the replica back.
#[derive(Debug, Default)]
pub struct CwpReplica {
    plans: BTreeMap<String, FlightPlan>,
    // Kept across cancellation so late stale publications stay dead.
    revisions: BTreeMap<String, i64>,
    qnh: Option<i64>,
}

impl CwpReplica {
    pub fn new() -> CwpReplica {
        CwpReplica::default()
    }

    pub fn plans(&self) -> &BTreeMap<String, FlightPlan> {
        &self.plans
    }

    pub fn qnh(&self) -> Option<i64> {
        self.qnh
    }

    /// Applies one publication; returns false when ignored as stale or
    /// unparseable.
    pub fn apply(&mut self, publication: &Envelope) -> bool {
        match publication.message_type.as_str() {
            FPL_STATE_TYPE => {
                let Some(plan) = FlightPlan::from_document(&publication.payload) else {
                    return false;
                };
                let seen = self.revisions.get(&plan.callsign).copied().unwrap_or(0);
                if plan.revision <= seen {
                    return false;
                }
                self.revisions.insert(plan.callsign.clone(), plan.revision);
                if plan.status == FplStatus::Cancelled {
                    self.plans.remove(&plan.callsign);
                } else {
                    self.plans.insert(plan.callsign.clone(), plan);
                }
                true
            }
            MET_UPDATE_TYPE => {
                let Some(qnh) = publication.payload.get_int("qnh") else {
                    return false;
                };
                self.qnh = Some(qnh);
                true
            }
            _ => false,
        }
    }
}

/// The QNH source: a seeded bounded walk over [900, 1100] hPa, published
/// on the met domain at a fixed period.
#[derive(Debug)]
pub struct QnhSource {
    value: i64,
    pub period_ms: i64,
}

impl QnhSource {
    pub fn new(period_ms: i64) -> QnhSource {
        QnhSource {
            value: 1013,
            period_ms,
        }
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    /// Adopts an externally contributed value; later ticks walk from here.
    pub fn set_value(&mut self, value: i64) {
        self.value = value.clamp(900, 1100);
    }

    /// Steps the walk and returns the met.update payload to publish.
    pub fn tick(&mut self, rng: &mut impl Rng) -> Document {
        self.value = (self.value + rng.gen_range(-3..=3)).clamp(900, 1100);
        let mut doc = Document::new();
        doc.put("qnh", Value::Int(self.value));
        doc
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("bad legacy line: {0}")]
pub struct BadLegacyLine(String);

/// Translates the demo legacy flight-plan feed: fixed-width 23-character
/// lines, columns callsign(7) aircraft_type(4) adep(4) ades(4) eobt(4).
/// First sighting of a callsign becomes fpl.create, later lines fpl.update.
#[derive(Debug, Default)]
pub struct LegacyAgent {
    seen: BTreeSet<String>,
}

impl LegacyAgent {
    pub fn new() -> LegacyAgent {
        LegacyAgent::default()
    }

    pub fn translate(&mut self, line: &str) -> Result<(String, Document), BadLegacyLine> {
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != 23 {
            return Err(BadLegacyLine(format!(
                "expected 23 characters, got {}",
                chars.len()
            )));
        }
        let column = |from: usize, len: usize| -> String {
            chars[from..from + len].iter().collect()
        };
        let callsign = column(0, 7).trim_end().to_string();
        if callsign.len() < 2 || !callsign.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
        {
            return Err(BadLegacyLine(format!("bad callsign column {:?}", column(0, 7))));
        }
        let aircraft_type = column(7, 4);
        let adep = column(11, 4);
        let ades = column(15, 4);
        for (name, code) in [("adep", &adep), ("ades", &ades)] {
            if !code.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(BadLegacyLine(format!("bad {name} column {code:?}")));
            }
        }
        let eobt_text = column(19, 4);
        if !eobt_text.chars().all(|c| c.is_ascii_digit()) {
            return Err(BadLegacyLine(format!("bad eobt column {eobt_text:?}")));
        }
        let eobt: i64 = eobt_text.parse().expect("four digits");
        if eobt >= 1440 {
            return Err(BadLegacyLine(format!("eobt {eobt} out of range")));
        }
        let mut doc = Document::new();
        doc.put("callsign", Value::text(&callsign));
        doc.put("aircraft_type", Value::text(aircraft_type.trim_end()));
        doc.put("adep", Value::text(&adep));
        doc.put("ades", Value::text(&ades));
        doc.put("eobt", Value::Int(eobt));
        let message_type = if self.seen.insert(callsign) {
            "fpl.create"
        } else {
            "fpl.update"
        };
        Ok((message_type.to_string(), doc))
    }
}

/// Optional recovery reaction to a dead-letter record: a (topic, type,
/// payload) to republish.
pub type RedeliverHook = Box<dyn FnMut(&DlqRecord) -> Option<(String, String, Document)>>;

/// The recovery component: consumes dead-letter topics, counts records per
/// reason, and optionally reacts through a pluggable hook (unused by
/// default; counting and logging is the demo behavior).
#[derive(Default)]
pub struct Recovery {
    counts: BTreeMap<String, u64>,
    records: Vec<DlqRecord>,
    pub redeliver_hook: Option<RedeliverHook>,
}

impl std::fmt::Debug for Recovery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recovery")
            .field("counts", &self.counts)
            .field("records", &self.records.len())
            .field("redeliver_hook", &self.redeliver_hook.is_some())
            .finish()
    }
}

impl Recovery {
    pub fn new() -> Recovery {
        Recovery::default()
    }

    /// Consumes one dlq-topic delivery; returns the hook's republish
    /// request, if any.
    pub fn apply(&mut self, env: &Envelope) -> Option<(String, String, Document)> {
        let record = DlqRecord::from_document(&env.payload)?;
        *self.counts.entry(record.reason.as_str().to_string()).or_insert(0) += 1;
        let reaction = self.redeliver_hook.as_mut().and_then(|hook| hook(&record));
        self.records.push(record);
        reaction
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, reason: &str) -> u64 {
        self.counts.get(reason).copied().unwrap_or(0)
    }

    pub fn records(&self) -> &[DlqRecord] {
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_schema_set;

    fn contribution(message_type: &str, pairs: &[(&str, Value)]) -> Envelope {
        let mut doc = Document::new();
        for (path, value) in pairs {
            doc.put(path, value.clone());
        }
        Envelope::new("fpl.contribution", "cwp1:1", "cwp1", message_type, 0, doc)
    }

    #[test]
    fn ats_schema_parses() {
        let set = parse_schema_set(ATS_SCHEMA).unwrap();
        for t in ["fpl.create", "fpl.update", "fpl.delete", "fpl.state", "fpl.reject", "met.update", "selection.update"] {
            assert!(set.latest(t).is_some(), "missing {t}");
        }
    }

    #[test]
    fn create_publishes_revision_one_with_defaults() {
        let mut owner = FplOwnerState::new();
        let out = owner.apply(&contribution(
            "fpl.create",
            &[("callsign", Value::text("DLH123")), ("eobt", Value::Int(540))],
        ));
        let OwnerOutput::Publication { message_type, payload } = out else {
            panic!("expected publication");
        };
        assert_eq!(message_type, FPL_STATE_TYPE);
        assert_eq!(payload.get_int("revision"), Some(1));
        assert_eq!(payload.get_text("status"), Some("filed"));
        assert_eq!(payload.get_text("adep"), Some("ZZZZ"));
        assert_eq!(payload.get_int("eobt"), Some(540));
        // The published record always satisfies the full-state schema.
        let set = parse_schema_set(ATS_SCHEMA).unwrap();
        assert!(set.validate(&payload, FPL_STATE_TYPE).is_empty());
    }

    #[test]
    fn duplicate_create_rejects_and_leaves_state() {
        let mut owner = FplOwnerState::new();
        owner.apply(&contribution("fpl.create", &[("callsign", Value::text("DLH123"))]));
        let before = owner.plans().clone();
        let out = owner.apply(&contribution("fpl.create", &[("callsign", Value::text("DLH123"))]));
        let OwnerOutput::Rejection { payload, .. } = out else {
            panic!("expected rejection");
        };
        assert_eq!(payload.get_text("reason"), Some("already-exists"));
        assert_eq!(owner.plans(), &before);
    }

    #[test]
    fn update_merges_and_bumps_revision() {
        let mut owner = FplOwnerState::new();
        owner.apply(&contribution(
            "fpl.create",
            &[("callsign", Value::text("DLH123")), ("adep", Value::text("EDDF"))],
        ));
        let out = owner.apply(&contribution(
            "fpl.update",
            &[
                ("callsign", Value::text("DLH123")),
                ("runway", Value::text("25R")),
                ("status", Value::text("cleared")),
            ],
        ));
        let OwnerOutput::Publication { payload, .. } = out else {
            panic!("expected publication");
        };
        assert_eq!(payload.get_int("revision"), Some(2));
        assert_eq!(payload.get_text("runway"), Some("25R"));
        assert_eq!(payload.get_text("adep"), Some("EDDF"));
        assert_eq!(payload.get_text("status"), Some("cleared"));
    }

    #[test]
    fn update_of_unknown_callsign_rejects() {
        let mut owner = FplOwnerState::new();
        let out = owner.apply(&contribution("fpl.update", &[("callsign", Value::text("XYZ99"))]));
        let OwnerOutput::Rejection { payload, .. } = out else {
            panic!("expected rejection");
        };
        assert_eq!(payload.get_text("reason"), Some("unknown-callsign"));
        assert_eq!(payload.get_text("callsign"), Some("XYZ99"));
        assert!(owner.plans().is_empty());
    }

    #[test]
    fn delete_publishes_cancellation_then_removes() {
        let mut owner = FplOwnerState::new();
        owner.apply(&contribution("fpl.create", &[("callsign", Value::text("DLH123"))]));
        let out = owner.apply(&contribution("fpl.delete", &[("callsign", Value::text("DLH123"))]));
        let OwnerOutput::Publication { payload, .. } = out else {
            panic!("expected publication");
        };
        assert_eq!(payload.get_text("status"), Some("cancelled"));
        assert_eq!(payload.get_int("revision"), Some(2));
        assert!(owner.plans().is_empty());
        // A second delete no longer finds the record.
        let out = owner.apply(&contribution("fpl.delete", &[("callsign", Value::text("DLH123"))]));
        assert!(matches!(out, OwnerOutput::Rejection { .. }));
    }

    #[test]
    fn unsupported_types_reject() {
        let mut owner = FplOwnerState::new();
        let out = owner.apply(&contribution("met.update", &[("callsign", Value::text("DLH123"))]));
        let OwnerOutput::Rejection { payload, .. } = out else {
            panic!("expected rejection");
        };
        assert_eq!(payload.get_text("reason"), Some("unsupported-type"));
    }

    #[test]
    fn revisions_climb_one_per_applied_contribution() {
        let mut owner = FplOwnerState::new();
        owner.apply(&contribution("fpl.create", &[("callsign", Value::text("DLH123"))]));
        for expect in 2..=4 {
            let out = owner.apply(&contribution(
                "fpl.update",
                &[("callsign", Value::text("DLH123")), ("eobt", Value::Int(expect * 10))],
            ));
            let OwnerOutput::Publication { payload, .. } = out else {
                panic!("expected publication");
            };
            assert_eq!(payload.get_int("revision"), Some(expect));
        }
    }

    fn state_env(plan: &FlightPlan) -> Envelope {
        Envelope::new(
            "fpl.publication",
            "fdps:1",
            "fdps",
            FPL_STATE_TYPE,
            0,
            plan.to_document(),
        )
    }

    #[test]
    fn replica_applies_new_revisions_and_ignores_stale() {
        let mut replica = CwpReplica::new();
        let mut plan = FlightPlan::create("DLH123", &Document::new());
        assert!(replica.apply(&state_env(&plan)));
        plan.revision = 2;
        plan.runway = "25R".into();
        assert!(replica.apply(&state_env(&plan)));
        assert_eq!(replica.plans()["DLH123"].runway, "25R");
        // Redelivery of revision 1 is ignored.
        let stale = FlightPlan::create("DLH123", &Document::new());
        assert!(!replica.apply(&state_env(&stale)));
        assert_eq!(replica.plans()["DLH123"].revision, 2);
    }

    #[test]
    fn replica_removes_cancelled_and_blocks_late_stale_records() {
        let mut replica = CwpReplica::new();
        let mut plan = FlightPlan::create("DLH123", &Document::new());
        replica.apply(&state_env(&plan));
        plan.revision = 2;
        plan.status = FplStatus::Cancelled;
        assert!(replica.apply(&state_env(&plan)));
        assert!(replica.plans().is_empty());
        // A delayed revision-1 copy must not resurrect the flight.
        let stale = FlightPlan::create("DLH123", &Document::new());
        assert!(!replica.apply(&state_env(&stale)));
        assert!(replica.plans().is_empty());
    }

    #[test]
    fn replica_tracks_qnh() {
        let mut replica = CwpReplica::new();
        let mut doc = Document::new();
        doc.put("qnh", Value::Int(1021));
        let env = Envelope::new("met.publication", "met1:1", "met1", MET_UPDATE_TYPE, 0, doc);
        assert!(replica.apply(&env));
        assert_eq!(replica.qnh(), Some(1021));
    }

    #[test]
    fn qnh_walk_stays_in_schema_range() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut source = QnhSource::new(60_000);
        let set = parse_schema_set(ATS_SCHEMA).unwrap();
        for _ in 0..10_000 {
            let doc = source.tick(&mut rng);
            let qnh = doc.get_int("qnh").unwrap();
            assert!((900..=1100).contains(&qnh), "qnh {qnh} out of range");
            assert!(set.validate(&doc, MET_UPDATE_TYPE).is_empty());
        }
    }

    #[test]
    fn legacy_line_translates_to_create_then_update() {
        let mut agent = LegacyAgent::new();
        let (t1, doc) = agent.translate("DLH123 A320EDDFEDDH0540").unwrap();
        assert_eq!(t1, "fpl.create");
        assert_eq!(doc.get_text("callsign"), Some("DLH123"));
        assert_eq!(doc.get_text("aircraft_type"), Some("A320"));
        assert_eq!(doc.get_text("adep"), Some("EDDF"));
        assert_eq!(doc.get_text("ades"), Some("EDDH"));
        assert_eq!(doc.get_int("eobt"), Some(540));
        let (t2, _) = agent.translate("DLH123 A320EDDFEDDH0555").unwrap();
        assert_eq!(t2, "fpl.update");
        // Output always passes the contribution schema.
        let set = parse_schema_set(ATS_SCHEMA).unwrap();
        assert!(set.validate(&doc, "fpl.create").is_empty());
    }

    #[test]
    fn legacy_rejects_malformed_lines() {
        let mut agent = LegacyAgent::new();
        assert!(agent.translate("short").is_err());
        assert!(agent.translate("dlh123 A320EDDFEDDH0540").is_err());
        assert!(agent.translate("DLH123 A320EDD4EDDH0540").is_err());
        assert!(agent.translate("DLH123 A320EDDFEDDH9999").is_err());
        assert!(agent.translate("X      A320EDDFEDDH0540").is_err());
    }

    #[test]
    fn recovery_counts_by_reason() {
        use crate::broker::DlqReason;
        let mut recovery = Recovery::new();
        let record = DlqRecord {
            original_topic: "fpl.publication".into(),
            original_message_id: "fdps:1".into(),
            original_sender: "fdps".into(),
            original_message_type: FPL_STATE_TYPE.into(),
            failed_subscription_id: "cwp3:s1".into(),
            failed_client: "cwp3".into(),
            reason: DlqReason::AckTimeout,
            original_payload: Document::new(),
        };
        let env = record.to_envelope("central", "central:9".to_string(), 100);
        assert!(recovery.apply(&env).is_none());
        assert_eq!(recovery.count("ack_timeout"), 1);
        assert_eq!(recovery.total(), 1);
        assert_eq!(recovery.records().len(), 1);
    }

    #[test]
    fn recovery_hook_can_request_republish() {
        use crate::broker::DlqReason;
        let mut recovery = Recovery::new();
        recovery.redeliver_hook = Some(Box::new(|record| {
            Some((
                record.original_topic.clone(),
                record.original_message_type.clone(),
                record.original_payload.clone(),
            ))
        }));
        let record = DlqRecord {
            original_topic: "qnh".into(),
            original_message_id: "met1:4".into(),
            original_sender: "met1".into(),
            original_message_type: MET_UPDATE_TYPE.into(),
            failed_subscription_id: "s1".into(),
            failed_client: "cwp1".into(),
            reason: DlqReason::ClientDisconnected,
            original_payload: Document::new(),
        };
        let env = record.to_envelope("central", "central:1".to_string(), 5);
        let (topic, message_type, _) = recovery.apply(&env).unwrap();
        assert_eq!(topic, "qnh");
        assert_eq!(message_type, MET_UPDATE_TYPE);
    }
}
