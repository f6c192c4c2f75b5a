//! World configuration for the deterministic simulator.
//!
//! A world file is a plain-text document describing the federation under
//! test: one central broker, `cwp.count` local brokers named `cwp1..cwpN`,
//! the domains and extra topics to declare everywhere, the bridge routing
//! rules, and the timing model for links. Everything has a default so the
//! empty document is a valid (if tiny) world.

use std::fs;
use std::path::Path as FsPath;

use crate::broker::config::{bad, expect_int, expect_text, IndexedGroup};
use crate::broker::{domain_ok, ConfigError, DomainConfig, DEFAULT_ACK_DEADLINE_MS};
use crate::broker::{client_id_ok, TopicDescriptor, TopicScope};
use crate::federation::{parse_rule_line, RuleSet};
use crate::protocol::Document;

/// Delay model for one kind of link. `drop_prob` only applies to
/// bridge links; client links never lose commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub latency_ms: i64,
    pub jitter_ms: i64,
    pub drop_prob: f64,
}

impl LinkModel {
    fn fixed(latency_ms: i64) -> LinkModel {
        LinkModel {
            latency_ms,
            jitter_ms: 0,
            drop_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub central_id: String,
    pub cwp_count: usize,
    pub domains: Vec<DomainConfig>,
    pub topics: Vec<TopicDescriptor>,
    pub routes: RuleSet,
    pub link: LinkModel,
    pub client_link: LinkModel,
    pub bridge_buffer_limit: usize,
    pub qnh_period_ms: i64,
    pub recovery_enabled: bool,
    pub max_ms: i64,
}

impl Default for WorldConfig {
    fn default() -> WorldConfig {
        WorldConfig {
            central_id: "central".to_string(),
            cwp_count: 0,
            domains: default_domains(),
            topics: Vec::new(),
            routes: default_routes(),
            link: LinkModel::fixed(5),
            client_link: LinkModel::fixed(1),
            bridge_buffer_limit: crate::federation::DEFAULT_BUFFER_LIMIT,
            qnh_period_ms: 0,
            recovery_enabled: true,
            max_ms: 60_000,
        }
    }
}

fn default_domains() -> Vec<DomainConfig> {
    vec![
        DomainConfig {
            name: "fpl".to_string(),
            ack_deadline_ms: DEFAULT_ACK_DEADLINE_MS,
        },
        DomainConfig {
            name: "met".to_string(),
            ack_deadline_ms: DEFAULT_ACK_DEADLINE_MS,
        },
    ]
}

fn default_routes() -> RuleSet {
    RuleSet::parse(
        "route fpl.contribution up\n\
         route fpl.publication down\n\
         route fpl.rejection down\n\
         route met.contribution up\n\
         route met.publication down\n\
         route met.rejection down\n",
    )
    .expect("built-in route table parses")
}

impl WorldConfig {
    pub fn parse_str(text: &str) -> Result<WorldConfig, ConfigError> {
        let doc = Document::parse_str(text)?;
        WorldConfig::from_document(&doc)
    }

    pub fn load(path: &FsPath) -> Result<WorldConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        WorldConfig::parse_str(&text)
    }

    pub fn from_document(doc: &Document) -> Result<WorldConfig, ConfigError> {
        let mut out = WorldConfig::default();
        let mut saw_domains = false;
        let mut saw_routes = false;
        let mut domain_names = IndexedGroup::new("domain");
        let mut domain_deadlines = IndexedGroup::new("domain");
        let mut topic_names = IndexedGroup::new("topic");
        let mut topic_scopes = IndexedGroup::new("topic");
        let mut topic_deadlines = IndexedGroup::new("topic");
        let mut route_lines = IndexedGroup::new("route");

        for (path, value) in doc.iter() {
            let segments: Vec<&str> = path.segments().collect();
            let p = path.as_ref();
            match segments.as_slice() {
                ["central", "id"] => out.central_id = expect_text(p, value)?,
                ["cwp", "count"] => {
                    let n = expect_int(p, value)?;
                    if !(0..=32).contains(&n) {
                        return Err(bad(p, "cwp.count must be between 0 and 32"));
                    }
                    out.cwp_count = n as usize;
                }
                ["domain", at, "name"] => {
                    saw_domains = true;
                    domain_names.put(p, at, value)?;
                }
                ["domain", at, "ack_deadline_ms"] => {
                    saw_domains = true;
                    domain_deadlines.put(p, at, value)?;
                }
                ["topic", at, "name"] => topic_names.put(p, at, value)?,
                ["topic", at, "scope"] => topic_scopes.put(p, at, value)?,
                ["topic", at, "ack_deadline_ms"] => topic_deadlines.put(p, at, value)?,
                ["route", at] => {
                    saw_routes = true;
                    route_lines.put(p, at, value)?;
                }
                ["link", "latency_ms"] => out.link.latency_ms = nonneg(p, value)?,
                ["link", "jitter_ms"] => out.link.jitter_ms = nonneg(p, value)?,
                ["link", "drop_prob"] => {
                    let f = value
                        .as_decimal()
                        .or_else(|| value.as_int().map(|n| n as f64))
                        .ok_or_else(|| bad(p, "expected a decimal"))?;
                    if !(0.0..1.0).contains(&f) {
                        return Err(bad(p, "drop_prob must be in [0, 1)"));
                    }
                    out.link.drop_prob = f;
                }
                ["client_link", "latency_ms"] => out.client_link.latency_ms = nonneg(p, value)?,
                ["client_link", "jitter_ms"] => out.client_link.jitter_ms = nonneg(p, value)?,
                ["bridge", "buffer_limit"] => {
                    let n = expect_int(p, value)?;
                    if n <= 0 {
                        return Err(bad(p, "buffer_limit must be positive"));
                    }
                    out.bridge_buffer_limit = n as usize;
                }
                ["qnh", "period_ms"] => out.qnh_period_ms = nonneg(p, value)?,
                ["recovery", "enabled"] => {
                    out.recovery_enabled = value
                        .as_bool()
                        .ok_or_else(|| bad(p, "expected true or false"))?;
                }
                ["world", "max_ms"] => {
                    let n = expect_int(p, value)?;
                    if n <= 0 {
                        return Err(bad(p, "max_ms must be positive"));
                    }
                    out.max_ms = n;
                }
                _ => return Err(bad(p, "unknown world key")),
            }
        }

        if !client_id_ok(&out.central_id) {
            return Err(bad("central.id", "not a valid broker id"));
        }
        for n in 1..=out.cwp_count {
            if out.central_id == format!("cwp{n}") {
                return Err(bad("central.id", "collides with a cwp broker id"));
            }
        }

        if saw_domains {
            out.domains.clear();
            for (at, (path, value)) in domain_names.dense()?.into_iter().enumerate() {
                let name = expect_text(&path, &value)?;
                if !domain_ok(&name) {
                    return Err(bad(&path, "not a valid domain name"));
                }
                if out.domains.iter().any(|d| d.name == name) {
                    return Err(bad(&path, "duplicate domain name"));
                }
                let ack_deadline_ms = match domain_deadlines.take(at) {
                    Some((dp, dv)) => {
                        let ms = expect_int(&dp, &dv)?;
                        if ms <= 0 {
                            return Err(bad(&dp, "ack deadline must be positive"));
                        }
                        ms
                    }
                    None => DEFAULT_ACK_DEADLINE_MS,
                };
                out.domains.push(DomainConfig {
                    name,
                    ack_deadline_ms,
                });
            }
            domain_deadlines.expect_empty()?;
        }

        for (at, (path, value)) in topic_names.dense()?.into_iter().enumerate() {
            let name = expect_text(&path, &value)?;
            let scope = match topic_scopes.take(at) {
                Some((sp, sv)) => match expect_text(&sp, &sv)?.as_str() {
                    "global" => TopicScope::Global,
                    "local" => TopicScope::Local,
                    _ => return Err(bad(&sp, "scope must be \"global\" or \"local\"")),
                },
                None => TopicScope::Global,
            };
            let mut desc = match scope {
                TopicScope::Global => TopicDescriptor::plain(name.clone()),
                TopicScope::Local => TopicDescriptor::local(name.clone()),
            };
            if let Some((dp, dv)) = topic_deadlines.take(at) {
                let ms = expect_int(&dp, &dv)?;
                if ms <= 0 {
                    return Err(bad(&dp, "ack deadline must be positive"));
                }
                desc.ack_deadline_ms = ms;
            }
            if out.topics.iter().any(|t| t.name == name) {
                return Err(bad(&path, "duplicate topic name"));
            }
            out.topics.push(desc);
        }
        topic_scopes.expect_empty()?;
        topic_deadlines.expect_empty()?;

        if saw_routes {
            let mut rules = Vec::new();
            for (path, value) in route_lines.dense()? {
                let line = expect_text(&path, &value)?;
                let rule = parse_rule_line(&line).map_err(|message| bad(&path, message))?;
                rules.push(rule);
            }
            out.routes = RuleSet::new(rules);
        }

        Ok(out)
    }
}

fn nonneg(path: &str, value: &crate::protocol::Value) -> Result<i64, ConfigError> {
    let n = expect_int(path, value)?;
    if n < 0 {
        return Err(bad(path, "must not be negative"));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::Flow;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg = WorldConfig::parse_str("").unwrap();
        assert_eq!(cfg.central_id, "central");
        assert_eq!(cfg.cwp_count, 0);
        assert_eq!(cfg.domains.len(), 2);
        assert_eq!(cfg.domains[0].name, "fpl");
        assert!(cfg.routes.matches("fpl.contribution", Flow::Up));
        assert!(cfg.routes.matches("fpl.publication", Flow::Down));
        assert!(!cfg.routes.matches("fpl.publication", Flow::Up));
        assert_eq!(cfg.max_ms, 60_000);
        assert!(cfg.recovery_enabled);
    }

    #[test]
    fn full_document_round_trips() {
        let cfg = WorldConfig::parse_str(
            "central.id = \"hub\"\n\
             cwp.count = 3\n\
             domain.0.name = \"fpl\"\n\
             domain.0.ack_deadline_ms = 500\n\
             topic.0.name = \"selection.shared\"\n\
             topic.0.scope = \"global\"\n\
             route.0 = \"fpl.* both\"\n\
             link.latency_ms = 10\n\
             link.jitter_ms = 4\n\
             link.drop_prob = 0.25\n\
             client_link.latency_ms = 2\n\
             qnh.period_ms = 60000\n\
             recovery.enabled = false\n\
             world.max_ms = 120000\n",
        )
        .unwrap();
        assert_eq!(cfg.central_id, "hub");
        assert_eq!(cfg.cwp_count, 3);
        assert_eq!(cfg.domains.len(), 1);
        assert_eq!(cfg.domains[0].ack_deadline_ms, 500);
        assert_eq!(cfg.topics[0].name, "selection.shared");
        assert!(cfg.routes.matches("fpl.anything", Flow::Up));
        assert_eq!(cfg.link.drop_prob, 0.25);
        assert_eq!(cfg.client_link.latency_ms, 2);
        assert_eq!(cfg.qnh_period_ms, 60_000);
        assert!(!cfg.recovery_enabled);
        assert_eq!(cfg.max_ms, 120_000);
    }

    #[test]
    fn central_id_may_not_collide_with_a_cwp() {
        let err = WorldConfig::parse_str("central.id = \"cwp2\"\ncwp.count = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Bad { .. }), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = WorldConfig::parse_str("wor1d.max_ms = 5\n").unwrap_err();
        assert!(err.to_string().contains("unknown world key"), "{err}");
    }

    #[test]
    fn bad_route_lines_are_rejected_with_their_key() {
        let err = WorldConfig::parse_str("route.0 = \"fpl.contribution sideways\"\n").unwrap_err();
        assert!(err.to_string().contains("route.0"), "{err}");
    }

    #[test]
    fn explicit_domains_replace_the_defaults() {
        let cfg = WorldConfig::parse_str("domain.0.name = \"asm\"\n").unwrap();
        assert_eq!(cfg.domains.len(), 1);
        assert_eq!(cfg.domains[0].name, "asm");
        assert_eq!(cfg.domains[0].ack_deadline_ms, DEFAULT_ACK_DEADLINE_MS);
    }
}
