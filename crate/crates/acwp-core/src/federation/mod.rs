//! Federation: routing rules and the bridge state machine that relays
//! messages between a central broker and per-position local brokers.
//!
//! Rules are lines of `route <topic|prefix.*> <up|down|both>`. `up` means
//! local to central, `down` central to local. Dead-letter topics never
//! match a prefix; forwarding one requires naming it exactly. Local-scope
//! topics never cross brokers regardless of rules.

mod bridge;

pub use bridge::{BridgeCore, ForwardDecision, SkipReason, DEFAULT_BUFFER_LIMIT};

use std::path::Path as FsPath;

use crate::broker::{is_dlq_name, topic_name_ok, TopicScope};
use crate::protocol::{Document, DocumentError};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FederationError {
    #[error("routes line {line}: {message}")]
    RuleSyntax { line: usize, message: String },
    #[error("route names local-scope topic {0}, which never crosses brokers")]
    LocalScopeRule(String),
    #[error("bridge config: {path}: {message}")]
    BadConfig { path: String, message: String },
    #[error("bridge config: cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Document(#[from] DocumentError),
}

/// Transfer direction relative to the local broker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    /// Local broker to central.
    Up,
    /// Central broker to local.
    Down,
}

impl Flow {
    pub fn as_str(self) -> &'static str {
        match self {
            Flow::Up => "up",
            Flow::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteDirection {
    Up,
    Down,
    Both,
}

impl RouteDirection {
    fn from_token(token: &str) -> Option<RouteDirection> {
        match token {
            "up" => Some(RouteDirection::Up),
            "down" => Some(RouteDirection::Down),
            "both" => Some(RouteDirection::Both),
            _ => None,
        }
    }

    pub fn allows(self, flow: Flow) -> bool {
        match self {
            RouteDirection::Both => true,
            RouteDirection::Up => flow == Flow::Up,
            RouteDirection::Down => flow == Flow::Down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicPattern {
    Exact(String),
    /// Stored with the trailing dot: `fpl.*` becomes `Prefix("fpl.")`, which
    /// matches `fpl.publication` but not `fpl` itself.
    Prefix(String),
}

impl TopicPattern {
    fn matches(&self, topic: &str) -> bool {
        match self {
            TopicPattern::Exact(name) => name == topic,
            TopicPattern::Prefix(prefix) => topic.starts_with(prefix),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingRule {
    pub pattern: TopicPattern,
    pub direction: RouteDirection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<RoutingRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<RoutingRule>) -> RuleSet {
        RuleSet { rules }
    }

    /// Parses rule lines; `#` comment lines and blank lines are skipped.
    pub fn parse(text: &str) -> Result<RuleSet, FederationError> {
        let mut rules = Vec::new();
        for (at, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rules.push(parse_rule_line(line).map_err(|message| FederationError::RuleSyntax {
                line: at + 1,
                message,
            })?);
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[RoutingRule] {
        &self.rules
    }

    /// Whether any rule forwards `topic` along `flow`. Dead-letter topics
    /// match only rules naming them exactly.
    pub fn matches(&self, topic: &str, flow: Flow) -> bool {
        self.rules.iter().any(|rule| {
            rule.direction.allows(flow)
                && if is_dlq_name(topic) {
                    matches!(&rule.pattern, TopicPattern::Exact(name) if name == topic)
                } else {
                    rule.pattern.matches(topic)
                }
        })
    }

    /// Rejects exact rules naming a topic that is local-scope wherever it is
    /// declared. Prefix rules are checked per topic at forward time instead.
    pub fn validate_scopes(
        &self,
        scope_of: impl Fn(&str) -> Option<TopicScope>,
    ) -> Result<(), FederationError> {
        for rule in &self.rules {
            if let TopicPattern::Exact(name) = &rule.pattern {
                if scope_of(name) == Some(TopicScope::Local) {
                    return Err(FederationError::LocalScopeRule(name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// One rule; the leading `route` keyword is optional so rule text embedded
/// in config values reads the same as rule files.
pub(crate) fn parse_rule_line(line: &str) -> Result<RoutingRule, String> {
    let mut tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.first() == Some(&"route") {
        tokens.remove(0);
    }
    let [pattern, direction] = tokens.as_slice() else {
        return Err(format!("expected `route <topic|prefix.*> <up|down|both>`, got {line:?}"));
    };
    let direction = RouteDirection::from_token(direction)
        .ok_or_else(|| format!("unknown direction {direction:?}"))?;
    let pattern = if let Some(stem) = pattern.strip_suffix(".*") {
        if !topic_name_ok(stem) {
            return Err(format!("bad topic prefix {pattern:?}"));
        }
        TopicPattern::Prefix(format!("{stem}."))
    } else {
        if !topic_name_ok(pattern) {
            return Err(format!("bad topic name {pattern:?}"));
        }
        TopicPattern::Exact(pattern.to_string())
    };
    Ok(RoutingRule { pattern, direction })
}

/// Connection plan for a live bridge process, in the document grammar:
///
/// ```text
/// bridge.local.endpoint = "127.0.0.1:4711"
/// bridge.local.broker_id = "cwp1"
/// bridge.central.endpoint = "127.0.0.1:4710"
/// bridge.central.broker_id = "central"
/// bridge.buffer_limit = 10000
/// route.0 = "fpl.contribution up"
/// route.1 = "fpl.publication down"
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeConfig {
    pub local_endpoint: String,
    pub local_broker: String,
    pub central_endpoint: String,
    pub central_broker: String,
    pub buffer_limit: usize,
    pub rules: RuleSet,
}

impl BridgeConfig {
    pub fn parse_str(text: &str) -> Result<BridgeConfig, FederationError> {
        let doc = Document::parse_str(text)?;
        let bad = |path: &str, message: &str| FederationError::BadConfig {
            path: path.to_string(),
            message: message.to_string(),
        };
        let mut local_endpoint = None;
        let mut local_broker = None;
        let mut central_endpoint = None;
        let mut central_broker = None;
        let mut buffer_limit = DEFAULT_BUFFER_LIMIT;
        let mut routes = std::collections::BTreeMap::new();
        for (path, value) in doc.iter() {
            let segments: Vec<&str> = path.segments().collect();
            let text = || {
                value
                    .as_text()
                    .map(str::to_string)
                    .ok_or_else(|| bad(path.as_ref(), "expected a quoted string"))
            };
            match segments.as_slice() {
                ["bridge", "local", "endpoint"] => local_endpoint = Some(text()?),
                ["bridge", "local", "broker_id"] => local_broker = Some(text()?),
                ["bridge", "central", "endpoint"] => central_endpoint = Some(text()?),
                ["bridge", "central", "broker_id"] => central_broker = Some(text()?),
                ["bridge", "buffer_limit"] => {
                    let n = value
                        .as_int()
                        .filter(|n| *n > 0)
                        .ok_or_else(|| bad(path.as_ref(), "expected a positive integer"))?;
                    buffer_limit = n as usize;
                }
                ["route", at] => {
                    let at: usize = at
                        .parse()
                        .map_err(|_| bad(path.as_ref(), "expected a numeric index"))?;
                    routes.insert(at, text()?);
                }
                _ => return Err(bad(path.as_ref(), "unknown config key")),
            }
        }
        let mut rules = Vec::new();
        for (expect, (at, line)) in routes.iter().enumerate() {
            if *at != expect {
                return Err(bad(
                    &format!("route.{at}"),
                    "indexes must be dense from 0",
                ));
            }
            rules.push(parse_rule_line(line).map_err(|message| FederationError::BadConfig {
                path: format!("route.{at}"),
                message,
            })?);
        }
        let require = |field: Option<String>, path: &str| {
            field.ok_or_else(|| bad(path, "required"))
        };
        Ok(BridgeConfig {
            local_endpoint: require(local_endpoint, "bridge.local.endpoint")?,
            local_broker: require(local_broker, "bridge.local.broker_id")?,
            central_endpoint: require(central_endpoint, "bridge.central.endpoint")?,
            central_broker: require(central_broker, "bridge.central.broker_id")?,
            buffer_limit,
            rules: RuleSet::new(rules),
        })
    }

    pub fn load(path: &FsPath) -> Result<BridgeConfig, FederationError> {
        let text = std::fs::read_to_string(path).map_err(|e| FederationError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    /// Client id this bridge uses at the local broker.
    pub fn local_client_id(&self) -> String {
        format!("bridge_{}", self.central_broker)
    }

    /// Client id this bridge uses at the central broker.
    pub fn central_client_id(&self) -> String {
        format!("bridge_{}", self.local_broker)
    }

    pub fn core(&self) -> BridgeCore {
        BridgeCore::new(&self.local_broker, &self.central_broker, self.rules.clone())
            .with_buffer_limit(self.buffer_limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rule_files_with_comments() {
        let rules = RuleSet::parse(
            "# flight plans\nroute fpl.contribution up\nroute fpl.* down\n\nroute qnh both\n",
        )
        .unwrap();
        assert_eq!(rules.rules().len(), 3);
        assert_eq!(
            rules.rules()[0],
            RoutingRule {
                pattern: TopicPattern::Exact("fpl.contribution".into()),
                direction: RouteDirection::Up,
            }
        );
        assert_eq!(
            rules.rules()[1].pattern,
            TopicPattern::Prefix("fpl.".into())
        );
    }

    #[test]
    fn keyword_is_optional_in_rule_lines() {
        assert_eq!(
            parse_rule_line("fpl.* both").unwrap(),
            parse_rule_line("route fpl.* both").unwrap()
        );
    }

    #[test]
    fn bad_rules_are_rejected_with_line_numbers() {
        let err = RuleSet::parse("route fpl.* sideways\n").unwrap_err();
        assert!(matches!(err, FederationError::RuleSyntax { line: 1, .. }), "{err}");
        let err = RuleSet::parse("# ok\nroute Fpl.* up\n").unwrap_err();
        assert!(matches!(err, FederationError::RuleSyntax { line: 2, .. }), "{err}");
        let err = RuleSet::parse("route fpl.publication\n").unwrap_err();
        assert!(matches!(err, FederationError::RuleSyntax { .. }), "{err}");
    }

    #[test]
    fn direction_gates_the_flow() {
        let rules = RuleSet::parse("route fpl.contribution up\nroute fpl.publication down\n")
            .unwrap();
        assert!(rules.matches("fpl.contribution", Flow::Up));
        assert!(!rules.matches("fpl.contribution", Flow::Down));
        assert!(rules.matches("fpl.publication", Flow::Down));
        assert!(!rules.matches("fpl.publication", Flow::Up));
        assert!(!rules.matches("qnh", Flow::Up));
    }

    #[test]
    fn prefix_matches_children_not_the_stem() {
        let rules = RuleSet::parse("route fpl.* both\n").unwrap();
        assert!(rules.matches("fpl.publication", Flow::Up));
        assert!(rules.matches("fpl.publication.extra", Flow::Down));
        assert!(!rules.matches("fpl", Flow::Up));
        assert!(!rules.matches("fplan.publication", Flow::Up));
    }

    #[test]
    fn dlq_topics_need_an_exact_rule() {
        let rules = RuleSet::parse("route fpl.* both\n").unwrap();
        assert!(!rules.matches("fpl.publication.dlq", Flow::Up));
        let rules = RuleSet::parse("route fpl.publication.dlq up\n").unwrap();
        assert!(rules.matches("fpl.publication.dlq", Flow::Up));
    }

    #[test]
    fn local_scope_exact_rules_are_rejected() {
        let rules = RuleSet::parse("route sector_load up\n").unwrap();
        let err = rules
            .validate_scopes(|name| (name == "sector_load").then_some(TopicScope::Local))
            .unwrap_err();
        assert_eq!(err, FederationError::LocalScopeRule("sector_load".into()));
        rules.validate_scopes(|_| Some(TopicScope::Global)).unwrap();
        rules.validate_scopes(|_| None).unwrap();
    }

    #[test]
    fn bridge_config_parses() {
        let config = BridgeConfig::parse_str(
            "bridge.local.endpoint = \"127.0.0.1:4711\"\n\
             bridge.local.broker_id = \"cwp1\"\n\
             bridge.central.endpoint = \"127.0.0.1:4710\"\n\
             bridge.central.broker_id = \"central\"\n\
             route.0 = \"fpl.contribution up\"\n\
             route.1 = \"fpl.publication down\"\n",
        )
        .unwrap();
        assert_eq!(config.local_client_id(), "bridge_central");
        assert_eq!(config.central_client_id(), "bridge_cwp1");
        assert_eq!(config.buffer_limit, DEFAULT_BUFFER_LIMIT);
        assert_eq!(config.rules.rules().len(), 2);
    }

    #[test]
    fn bridge_config_rejects_unknown_keys_and_bad_routes() {
        let err = BridgeConfig::parse_str("bridge.port = 9\n").unwrap_err();
        assert!(matches!(err, FederationError::BadConfig { .. }), "{err}");
        let err = BridgeConfig::parse_str(
            "bridge.local.endpoint = \"a\"\nbridge.local.broker_id = \"b\"\n\
             bridge.central.endpoint = \"c\"\nbridge.central.broker_id = \"d\"\n\
             route.0 = \"fpl.* sideways\"\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, FederationError::BadConfig { ref path, .. } if path == "route.0"),
            "{err}"
        );
    }
}
