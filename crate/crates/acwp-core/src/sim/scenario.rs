//! Scenario scripts: plain-text timed actions driving a simulation run.
//!
//! ```text
//! # one CWP proposes a flight plan change
//! at 0 cwp1 contribute fpl fpl.create callsign="DLH123" eobt=540
//! at 500 cwp3 withhold_ack fpl.publication
//! at 800 cwp2 disconnect
//! at 1000 cwp4 attach_broker
//! at 1200 cwp1 partition
//! at 1800 cwp1 heal
//! ```
//!
//! Lines are `at <ms> <actor> <action> [args…]`; `#` comments and blank
//! lines are skipped; times must be non-decreasing. Payload arguments are
//! `path=value` pairs in the wire literal grammar, so strings are quoted
//! (quotes may contain spaces).

use std::path::Path as FsPath;

use crate::protocol::{Document, Path, Value};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("scenario: cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioAction {
    /// Publish to `<domain>.contribution` with the actor's session.
    Contribute {
        domain: String,
        message_type: String,
        payload: Document,
    },
    /// Publish to an arbitrary topic at the actor's broker.
    Publish {
        topic: String,
        message_type: String,
        payload: Document,
    },
    /// Subscribe the actor to a topic at its broker.
    Subscribe { topic: String },
    /// Stop processing and acknowledging deliveries, on one topic or all.
    WithholdAck { topic: Option<String> },
    Disconnect,
    /// Bring up a new local broker + bridge + CWP client named `actor`.
    AttachBroker,
    /// Cut the actor's bridge link to the central broker.
    Partition,
    /// Restore the actor's bridge link and flush buffered messages.
    Heal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioStep {
    pub at_ms: i64,
    pub actor: String,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    steps: Vec<ScenarioStep>,
}

impl Scenario {
    pub fn from_steps(steps: Vec<ScenarioStep>) -> Scenario {
        Scenario { steps }
    }

    pub fn steps(&self) -> &[ScenarioStep] {
        &self.steps
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut steps: Vec<ScenarioStep> = Vec::new();
        for (at, raw) in text.lines().enumerate() {
            let line = at + 1;
            let err = |message: String| ScenarioError::Syntax { line, message };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let tokens = tokenize(raw).map_err(err)?;
            let [keyword, time, actor, action, args @ ..] = tokens.as_slice() else {
                return Err(err(format!("expected `at <ms> <actor> <action>`, got {raw:?}")));
            };
            if keyword != "at" {
                return Err(err(format!("lines start with `at`, got {keyword:?}")));
            }
            let at_ms: i64 = time
                .parse()
                .ok()
                .filter(|ms| *ms >= 0)
                .ok_or_else(|| err(format!("bad time {time:?}")))?;
            if let Some(previous) = steps.last() {
                if at_ms < previous.at_ms {
                    return Err(err(format!(
                        "time {at_ms} goes back before {}",
                        previous.at_ms
                    )));
                }
            }
            let action = parse_action(action, args).map_err(err)?;
            steps.push(ScenarioStep {
                at_ms,
                actor: actor.clone(),
                action,
            });
        }
        Ok(Scenario { steps })
    }

    pub fn load(path: &FsPath) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

fn parse_action(action: &str, args: &[String]) -> Result<ScenarioAction, String> {
    match action {
        "contribute" => {
            let [domain, message_type, pairs @ ..] = args else {
                return Err("contribute needs `<domain> <type> [path=value…]`".into());
            };
            Ok(ScenarioAction::Contribute {
                domain: domain.clone(),
                message_type: message_type.clone(),
                payload: parse_pairs(pairs)?,
            })
        }
        "publish" => {
            let [topic, message_type, pairs @ ..] = args else {
                return Err("publish needs `<topic> <type> [path=value…]`".into());
            };
            Ok(ScenarioAction::Publish {
                topic: topic.clone(),
                message_type: message_type.clone(),
                payload: parse_pairs(pairs)?,
            })
        }
        "subscribe" => {
            let [topic] = args else {
                return Err("subscribe needs `<topic>`".into());
            };
            Ok(ScenarioAction::Subscribe { topic: topic.clone() })
        }
        "withhold_ack" => match args {
            [] => Ok(ScenarioAction::WithholdAck { topic: None }),
            [topic] => Ok(ScenarioAction::WithholdAck {
                topic: Some(topic.clone()),
            }),
            _ => Err("withhold_ack takes at most one topic".into()),
        },
        "disconnect" => expect_no_args(args, ScenarioAction::Disconnect),
        "attach_broker" => expect_no_args(args, ScenarioAction::AttachBroker),
        "partition" => expect_no_args(args, ScenarioAction::Partition),
        "heal" => expect_no_args(args, ScenarioAction::Heal),
        _ => Err(format!("unknown action {action:?}")),
    }
}

fn expect_no_args(args: &[String], action: ScenarioAction) -> Result<ScenarioAction, String> {
    if args.is_empty() {
        Ok(action)
    } else {
        Err(format!("{action:?} takes no arguments"))
    }
}

fn parse_pairs(pairs: &[String]) -> Result<Document, String> {
    let mut doc = Document::new();
    for pair in pairs {
        let (path, literal) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected path=value, got {pair:?}"))?;
        let path = Path::parse(path.trim()).map_err(|e| e.to_string())?;
        let value = Value::parse_literal(literal.trim()).map_err(|e| e.to_string())?;
        if doc.set(path, value).is_some() {
            return Err(format!("duplicate path in {pair:?}"));
        }
    }
    Ok(doc)
}

/// Splits on whitespace, except inside double quotes; quotes keep their
/// backslash escapes for the literal parser.
fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut escaped = false;
    for c in line.chars() {
        if in_quotes {
            current.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_quotes = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_quotes = true;
                current.push(c);
            }
            c if c.is_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if in_quotes {
        return Err("unterminated quote".into());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}
