//! Broker configuration, written in the same plain-text document grammar
//! the wire uses:
//!
//! ```text
//! broker.id = "central"
//! broker.listen = "127.0.0.1:4710"
//! broker.role = "central"
//! schema.0 = "schemas/ats.schema"
//! domain.0.name = "fpl"
//! domain.0.ack_deadline_ms = 2000
//! topic.0.name = "qnh"
//! topic.0.scope = "global"
//! ```
//!
//! Unknown keys are errors; indexed groups must be dense from 0.

use std::path::{Path as FsPath, PathBuf};

use super::{Broker, BrokerError, TopicDescriptor, TopicScope, DEFAULT_ACK_DEADLINE_MS};
use crate::protocol::{
    load_schema_files, Document, DocumentError, SchemaError, SchemaSet, Value,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("config: cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {path}: {message}")]
    Bad { path: String, message: String },
}

pub(crate) fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Bad {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainConfig {
    pub name: String,
    pub ack_deadline_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrokerConfig {
    pub id: String,
    pub listen: Option<String>,
    /// "central" or "local"; informational, used by the CLI for logging.
    pub role: Option<String>,
    pub schema_paths: Vec<PathBuf>,
    pub domains: Vec<DomainConfig>,
    pub topics: Vec<TopicDescriptor>,
}

impl BrokerConfig {
    pub fn parse_str(text: &str) -> Result<BrokerConfig, ConfigError> {
        let doc = Document::parse_str(text)?;
        Self::from_document(&doc)
    }

    /// Reads a config file; schema paths resolve relative to its directory.
    pub fn load(path: &FsPath) -> Result<BrokerConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::parse_str(&text)?;
        let base = path.parent().unwrap_or_else(|| FsPath::new("."));
        for schema in &mut config.schema_paths {
            if schema.is_relative() {
                *schema = base.join(&*schema);
            }
        }
        Ok(config)
    }

    pub fn from_document(doc: &Document) -> Result<BrokerConfig, ConfigError> {
        let mut id = None;
        let mut listen = None;
        let mut role = None;
        let mut schemas = IndexedGroup::new("schema");
        let mut domain_names = IndexedGroup::new("domain");
        let mut domain_deadlines = IndexedGroup::new("domain");
        let mut topic_names = IndexedGroup::new("topic");
        let mut topic_scopes = IndexedGroup::new("topic");
        let mut topic_deadlines = IndexedGroup::new("topic");

        for (path, value) in doc.iter() {
            let segments: Vec<&str> = path.segments().collect();
            match segments.as_slice() {
                ["broker", "id"] => id = Some(expect_text(path.as_ref(), value)?),
                ["broker", "listen"] => listen = Some(expect_text(path.as_ref(), value)?),
                ["broker", "role"] => {
                    let text = expect_text(path.as_ref(), value)?;
                    if text != "central" && text != "local" {
                        return Err(bad(path.as_ref(), "role must be central or local"));
                    }
                    role = Some(text);
                }
                ["schema", at] => schemas.put(path.as_ref(), at, value)?,
                ["domain", at, "name"] => domain_names.put(path.as_ref(), at, value)?,
                ["domain", at, "ack_deadline_ms"] => {
                    domain_deadlines.put(path.as_ref(), at, value)?
                }
                ["topic", at, "name"] => topic_names.put(path.as_ref(), at, value)?,
                ["topic", at, "scope"] => topic_scopes.put(path.as_ref(), at, value)?,
                ["topic", at, "ack_deadline_ms"] => {
                    topic_deadlines.put(path.as_ref(), at, value)?
                }
                _ => return Err(bad(path.as_ref(), "unknown config key")),
            }
        }

        let id = id.ok_or_else(|| bad("broker.id", "required"))?;
        let schema_paths = schemas
            .dense()?
            .into_iter()
            .map(|(path, value)| Ok(PathBuf::from(expect_text(&path, &value)?)))
            .collect::<Result<Vec<_>, ConfigError>>()?;

        let mut domains = Vec::new();
        for (at, (path, value)) in domain_names.dense()?.into_iter().enumerate() {
            let name = expect_text(&path, &value)?;
            let ack_deadline_ms = match domain_deadlines.take(at) {
                Some((path, value)) => expect_int(&path, &value)?,
                None => DEFAULT_ACK_DEADLINE_MS,
            };
            domains.push(DomainConfig { name, ack_deadline_ms });
        }
        domain_deadlines.expect_empty()?;

        let mut topics = Vec::new();
        for (at, (path, value)) in topic_names.dense()?.into_iter().enumerate() {
            let name = expect_text(&path, &value)?;
            let scope = match topic_scopes.take(at) {
                Some((path, value)) => match expect_text(&path, &value)?.as_str() {
                    "global" => TopicScope::Global,
                    "local" => TopicScope::Local,
                    other => return Err(bad(&path, format!("unknown scope {other:?}"))),
                },
                None => TopicScope::Global,
            };
            let ack_deadline_ms = match topic_deadlines.take(at) {
                Some((path, value)) => expect_int(&path, &value)?,
                None => DEFAULT_ACK_DEADLINE_MS,
            };
            let mut desc = TopicDescriptor::plain(&name).with_deadline(ack_deadline_ms);
            desc.scope = scope;
            topics.push(desc);
        }
        topic_scopes.expect_empty()?;
        topic_deadlines.expect_empty()?;

        Ok(BrokerConfig {
            id,
            listen,
            role,
            schema_paths,
            domains,
            topics,
        })
    }

    /// Loads the configured schema files and builds the broker with its
    /// domains and topics declared.
    pub fn build(&self) -> Result<Broker, ConfigError> {
        let schemas = self.load_schemas()?;
        let mut broker = Broker::new(&self.id, schemas);
        for domain in &self.domains {
            broker.declare_domain(&domain.name, domain.ack_deadline_ms)?;
        }
        for topic in &self.topics {
            broker.declare_topic(topic.clone())?;
        }
        Ok(broker)
    }

    pub fn load_schemas(&self) -> Result<SchemaSet, ConfigError> {
        Ok(load_schema_files(&self.schema_paths)?)
    }
}

pub(crate) fn expect_text(path: &str, value: &Value) -> Result<String, ConfigError> {
    value
        .as_text()
        .map(str::to_string)
        .ok_or_else(|| bad(path, "expected a quoted string"))
}

pub(crate) fn expect_int(path: &str, value: &Value) -> Result<i64, ConfigError> {
    value.as_int().ok_or_else(|| bad(path, "expected an integer"))
}

/// Collects `group.<i>[.key]` entries and enforces dense indexes.
pub(crate) struct IndexedGroup {
    group: &'static str,
    entries: std::collections::BTreeMap<usize, (String, Value)>,
}

impl IndexedGroup {
    pub(crate) fn new(group: &'static str) -> IndexedGroup {
        IndexedGroup {
            group,
            entries: std::collections::BTreeMap::new(),
        }
    }

    pub(crate) fn put(&mut self, path: &str, at: &str, value: &Value) -> Result<(), ConfigError> {
        let at: usize = at
            .parse()
            .map_err(|_| bad(path, "expected a numeric index"))?;
        self.entries.insert(at, (path.to_string(), value.clone()));
        Ok(())
    }

    pub(crate) fn take(&mut self, at: usize) -> Option<(String, Value)> {
        self.entries.remove(&at)
    }

    pub(crate) fn dense(&mut self) -> Result<Vec<(String, Value)>, ConfigError> {
        let entries = std::mem::take(&mut self.entries);
        for (expect, at) in entries.keys().enumerate() {
            if *at != expect {
                return Err(bad(
                    &format!("{}.{at}", self.group),
                    format!("indexes must be dense from 0, missing {expect}"),
                ));
            }
        }
        Ok(entries.into_values().collect())
    }

    pub(crate) fn expect_empty(&self) -> Result<(), ConfigError> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(at) => Err(bad(
                &format!("{}.{at}", self.group),
                "entry has no matching name",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::TopicKind;

    const FULL: &str = "broker.id = \"central\"\n\
        broker.listen = \"127.0.0.1:4710\"\n\
        broker.role = \"central\"\n\
        domain.0.name = \"fpl\"\n\
        domain.0.ack_deadline_ms = 1500\n\
        domain.1.name = \"met\"\n\
        topic.0.name = \"sector_load\"\n\
        topic.0.scope = \"local\"\n\
        topic.1.name = \"qnh\"\n\
        topic.1.ack_deadline_ms = 3000\n";

    #[test]
    fn full_config_parses() {
        let config = BrokerConfig::parse_str(FULL).unwrap();
        assert_eq!(config.id, "central");
        assert_eq!(config.listen.as_deref(), Some("127.0.0.1:4710"));
        assert_eq!(config.role.as_deref(), Some("central"));
        assert_eq!(config.domains.len(), 2);
        assert_eq!(config.domains[0].ack_deadline_ms, 1500);
        assert_eq!(config.domains[1].ack_deadline_ms, DEFAULT_ACK_DEADLINE_MS);
        assert_eq!(config.topics[0].scope, TopicScope::Local);
        assert_eq!(config.topics[1].ack_deadline_ms, 3000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = BrokerConfig::parse_str("broker.id = \"b\"\nbroker.port = 99\n").unwrap_err();
        assert!(matches!(err, ConfigError::Bad { ref path, .. } if path == "broker.port"));
    }

    #[test]
    fn missing_id_is_rejected() {
        let err = BrokerConfig::parse_str("broker.role = \"local\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Bad { ref path, .. } if path == "broker.id"));
    }

    #[test]
    fn sparse_indexes_are_rejected() {
        let err = BrokerConfig::parse_str("broker.id = \"b\"\ntopic.1.name = \"qnh\"\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Bad { .. }), "{err}");
    }

    #[test]
    fn orphan_group_keys_are_rejected() {
        let text = "broker.id = \"b\"\ntopic.0.name = \"qnh\"\ntopic.3.scope = \"local\"\n";
        let err = BrokerConfig::parse_str(text).unwrap_err();
        assert!(matches!(err, ConfigError::Bad { .. }), "{err}");
    }

    #[test]
    fn bad_role_and_bad_scope_are_rejected() {
        let err =
            BrokerConfig::parse_str("broker.id = \"b\"\nbroker.role = \"edge\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Bad { .. }), "{err}");
        let text = "broker.id = \"b\"\ntopic.0.name = \"q\"\ntopic.0.scope = \"wide\"\n";
        let err = BrokerConfig::parse_str(text).unwrap_err();
        assert!(matches!(err, ConfigError::Bad { .. }), "{err}");
    }

    #[test]
    fn build_declares_domains_and_topics() {
        let config = BrokerConfig::parse_str(FULL).unwrap();
        let broker = config.build().unwrap();
        assert_eq!(broker.id(), "central");
        assert!(broker.topic("fpl.contribution").is_some());
        assert!(broker.topic("met.publication.dlq").is_some());
        let qnh = broker.topic("qnh").unwrap();
        assert_eq!(qnh.ack_deadline_ms, 3000);
        let local = broker.topic("sector_load").unwrap();
        assert_eq!(local.scope, TopicScope::Local);
        assert_eq!(local.kind, TopicKind::Plain);
    }

    #[test]
    fn load_resolves_schema_paths_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("ats.schema"),
            "message note v1\nfield text string optional\n",
        )
        .unwrap();
        let config_path = dir.path().join("broker.conf");
        std::fs::write(
            &config_path,
            "broker.id = \"central\"\nschema.0 = \"ats.schema\"\n",
        )
        .unwrap();
        let config = BrokerConfig::load(&config_path).unwrap();
        assert_eq!(config.schema_paths[0], dir.path().join("ats.schema"));
        let broker = config.build().unwrap();
        assert!(broker.schemas().latest("note").is_some());
    }
}
