use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use regex::Regex;
use thiserror::Error;

use super::document::Document;
use super::path::{self, Path};
use super::value::{Value, ValueKind};

/// Value kind a field rule demands. Kinds are exact: an `int` never
/// satisfies a `decimal` rule and `null` satisfies none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Int,
    Decimal,
    Bool,
}

impl FieldKind {
    fn from_token(token: &str) -> Option<FieldKind> {
        Some(match token {
            "string" => FieldKind::Text,
            "int" => FieldKind::Int,
            "decimal" => FieldKind::Decimal,
            "bool" => FieldKind::Bool,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Text => "string",
            FieldKind::Int => "int",
            FieldKind::Decimal => "decimal",
            FieldKind::Bool => "bool",
        }
    }

    fn accepts(self, kind: ValueKind) -> bool {
        matches!(
            (self, kind),
            (FieldKind::Text, ValueKind::Text)
                | (FieldKind::Int, ValueKind::Int)
                | (FieldKind::Decimal, ValueKind::Decimal)
                | (FieldKind::Bool, ValueKind::Bool)
        )
    }

    fn is_numeric(self) -> bool {
        matches!(self, FieldKind::Int | FieldKind::Decimal)
    }
}

/// Field path pattern: document path segments plus `*`, which matches any
/// single index segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaPath {
    text: String,
    segments: Vec<SchemaSegment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SchemaSegment {
    Literal(String),
    Wildcard,
}

impl SchemaPath {
    pub fn parse(text: &str) -> Result<SchemaPath, String> {
        if text.is_empty() {
            return Err("empty field path".into());
        }
        let mut segments = Vec::new();
        for segment in text.split('.') {
            if segment == "*" {
                segments.push(SchemaSegment::Wildcard);
            } else if path::valid_segment(segment) {
                segments.push(SchemaSegment::Literal(segment.to_string()));
            } else {
                return Err(format!("bad field path segment {segment:?}"));
            }
        }
        Ok(SchemaPath {
            text: text.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn has_wildcard(&self) -> bool {
        self.segments.contains(&SchemaSegment::Wildcard)
    }

    pub fn matches(&self, path: &Path) -> bool {
        let segments: Vec<&str> = path.segments().collect();
        if segments.len() != self.segments.len() {
            return false;
        }
        self.segments
            .iter()
            .zip(segments)
            .all(|(pattern, segment)| match pattern {
                SchemaSegment::Literal(text) => text == segment,
                SchemaSegment::Wildcard => path::is_index_segment(segment),
            })
    }
}

impl fmt::Display for SchemaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// One constraint on a field's value.
#[derive(Debug, Clone)]
pub enum Constraint {
    Enum(Vec<String>),
    Min(f64),
    Max(f64),
    Pattern { source: String, regex: Regex },
}

impl Constraint {
    /// None when satisfied, otherwise this constraint's display form.
    fn check(&self, value: &Value) -> bool {
        match self {
            Constraint::Enum(variants) => value
                .as_text()
                .is_some_and(|text| variants.iter().any(|v| v == text)),
            Constraint::Min(bound) => numeric(value).is_some_and(|n| n >= *bound),
            Constraint::Max(bound) => numeric(value).is_some_and(|n| n <= *bound),
            Constraint::Pattern { regex, .. } => {
                value.as_text().is_some_and(|text| regex.is_match(text))
            }
        }
    }
}

fn numeric(value: &Value) -> Option<f64> {
    match value {
        Value::Int(n) => Some(*n as f64),
        Value::Decimal(d) => Some(d.value()),
        _ => None,
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Enum(variants) => write!(f, "enum({})", variants.join("|")),
            Constraint::Min(bound) => write!(f, "min={bound}"),
            Constraint::Max(bound) => write!(f, "max={bound}"),
            Constraint::Pattern { source, .. } => write!(f, "pattern=/{source}/"),
        }
    }
}

/// One `field` line of a schema.
#[derive(Debug, Clone)]
pub struct FieldRule {
    pub path: SchemaPath,
    pub kind: FieldKind,
    pub required: bool,
    pub constraints: Vec<Constraint>,
}

/// All rules for one message type at one version.
#[derive(Debug, Clone)]
pub struct MessageSchema {
    pub type_name: String,
    pub version: u32,
    pub rules: Vec<FieldRule>,
}

/// How unknown fields are treated during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Fields without a matching rule are violations.
    #[default]
    Strict,
    /// Fields without a matching rule pass.
    Permissive,
}

/// A validation finding. `validate` returns every finding, not only the
/// first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingRequired { path: String },
    WrongKind { path: String, expected: FieldKind, found: &'static str },
    ConstraintFailed { path: String, constraint: String },
    UnknownField { path: String },
    UnknownType { type_name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingRequired { path } => write!(f, "missing-required: {path}"),
            Violation::WrongKind {
                path,
                expected,
                found,
            } => write!(f, "wrong-kind: {path} expected {}, got {found}", expected.name()),
            Violation::ConstraintFailed { path, constraint } => {
                write!(f, "constraint-failed: {path} {constraint}")
            }
            Violation::UnknownField { path } => write!(f, "unknown-field: {path}"),
            Violation::UnknownType { type_name } => write!(f, "unknown-type: {type_name}"),
        }
    }
}

/// Parsed schemas, indexed by type name and version.
#[derive(Debug, Clone, Default)]
pub struct SchemaSet {
    by_type: BTreeMap<String, BTreeMap<u32, MessageSchema>>,
}

impl SchemaSet {
    pub fn new() -> SchemaSet {
        SchemaSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.by_type.is_empty()
    }

    pub fn get(&self, type_name: &str, version: u32) -> Option<&MessageSchema> {
        self.by_type.get(type_name)?.get(&version)
    }

    /// The highest declared version of `type_name`; the version validation
    /// resolves, since envelopes carry only the type name.
    pub fn latest(&self, type_name: &str) -> Option<&MessageSchema> {
        self.by_type
            .get(type_name)
            .and_then(|versions| versions.values().next_back())
    }

    pub fn schemas(&self) -> impl Iterator<Item = &MessageSchema> {
        self.by_type.values().flat_map(BTreeMap::values)
    }

    pub fn insert(&mut self, schema: MessageSchema) -> Result<(), SchemaError> {
        let versions = self.by_type.entry(schema.type_name.clone()).or_default();
        if versions.contains_key(&schema.version) {
            return Err(SchemaError::DuplicateSchema {
                type_name: schema.type_name,
                version: schema.version,
            });
        }
        versions.insert(schema.version, schema);
        Ok(())
    }

    pub fn merge(&mut self, other: SchemaSet) -> Result<(), SchemaError> {
        for schema in other.by_type.into_values().flat_map(BTreeMap::into_values) {
            self.insert(schema)?;
        }
        Ok(())
    }

    /// Strict-mode validation; see [`validate_with`](SchemaSet::validate_with).
    pub fn validate(&self, doc: &Document, type_name: &str) -> Vec<Violation> {
        self.validate_with(doc, type_name, ValidationMode::Strict)
    }

    /// Checks `doc` against the latest schema for `type_name`.
    ///
    /// Findings are ordered: missing required fields in rule order, then
    /// per-entry findings in document path order. When several rules match
    /// one path, the first declared rule applies. A `required` marker on a
    /// wildcard rule is vacuous (there is no concrete path to demand).
    pub fn validate_with(
        &self,
        doc: &Document,
        type_name: &str,
        mode: ValidationMode,
    ) -> Vec<Violation> {
        let Some(schema) = self.latest(type_name) else {
            return vec![Violation::UnknownType {
                type_name: type_name.to_string(),
            }];
        };
        let mut violations = Vec::new();
        for rule in &schema.rules {
            if rule.required
                && !rule.path.has_wildcard()
                && doc.get(rule.path.as_str()).is_none()
            {
                violations.push(Violation::MissingRequired {
                    path: rule.path.as_str().to_string(),
                });
            }
        }
        for (path, value) in doc.iter() {
            let rule = schema.rules.iter().find(|rule| rule.path.matches(path));
            let Some(rule) = rule else {
                if mode == ValidationMode::Strict {
                    violations.push(Violation::UnknownField {
                        path: path.as_str().to_string(),
                    });
                }
                continue;
            };
            if !rule.kind.accepts(value.kind()) {
                violations.push(Violation::WrongKind {
                    path: path.as_str().to_string(),
                    expected: rule.kind,
                    found: value.kind().name(),
                });
                continue;
            }
            for constraint in &rule.constraints {
                if !constraint.check(value) {
                    violations.push(Violation::ConstraintFailed {
                        path: path.as_str().to_string(),
                        constraint: constraint.to_string(),
                    });
                }
            }
        }
        violations
    }
}

/// Parses schema DSL text: `message <type> v<int>` blocks of
/// `field <path> <kind> <required|optional> [constraints]` lines, with `#`
/// comment lines. Patterns match the whole value and may not contain
/// whitespace or `/`.
pub fn parse_schema_set(text: &str) -> Result<SchemaSet, SchemaError> {
    let mut set = SchemaSet::new();
    let mut current: Option<MessageSchema> = None;
    for (at, raw_line) in text.split('\n').enumerate() {
        let line_no = at + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "message" => {
                if let Some(done) = current.take() {
                    set.insert(done)?;
                }
                current = Some(parse_message_line(&tokens, line_no)?);
            }
            "field" => {
                let schema = current.as_mut().ok_or_else(|| SchemaError::Syntax {
                    line: line_no,
                    message: "field line before any message line".into(),
                })?;
                let rule = parse_field_line(&tokens, line_no)?;
                if schema.rules.iter().any(|r| r.path == rule.path) {
                    return Err(SchemaError::DuplicateFieldPath {
                        line: line_no,
                        path: rule.path.as_str().to_string(),
                    });
                }
                schema.rules.push(rule);
            }
            other => {
                return Err(SchemaError::Syntax {
                    line: line_no,
                    message: format!("expected message or field, found {other:?}"),
                })
            }
        }
    }
    if let Some(done) = current.take() {
        set.insert(done)?;
    }
    Ok(set)
}

fn parse_message_line(tokens: &[&str], line: usize) -> Result<MessageSchema, SchemaError> {
    let syntax = |message: String| SchemaError::Syntax { line, message };
    if tokens.len() != 3 {
        return Err(syntax("expected `message <type> v<int>`".into()));
    }
    let type_name = tokens[1];
    let type_ok = !type_name.is_empty()
        && type_name.split('.').all(|segment| {
            path::valid_segment(segment) && !path::is_index_segment(segment)
        });
    if !type_ok {
        return Err(syntax(format!("bad message type name {type_name:?}")));
    }
    let version: u32 = tokens[2]
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .filter(|v| *v >= 1)
        .ok_or_else(|| syntax(format!("bad version {:?}", tokens[2])))?;
    Ok(MessageSchema {
        type_name: type_name.to_string(),
        version,
        rules: Vec::new(),
    })
}

fn parse_field_line(tokens: &[&str], line: usize) -> Result<FieldRule, SchemaError> {
    let syntax = |message: String| SchemaError::Syntax { line, message };
    if tokens.len() < 4 {
        return Err(syntax(
            "expected `field <path> <kind> <required|optional> [constraints]`".into(),
        ));
    }
    let path = SchemaPath::parse(tokens[1]).map_err(syntax)?;
    let kind = FieldKind::from_token(tokens[2])
        .ok_or_else(|| syntax(format!("unknown kind {:?}", tokens[2])))?;
    let required = match tokens[3] {
        "required" => true,
        "optional" => false,
        other => return Err(syntax(format!("expected required or optional, found {other:?}"))),
    };
    let mut constraints = Vec::new();
    for token in &tokens[4..] {
        constraints.push(parse_constraint(token, kind, line)?);
    }
    Ok(FieldRule {
        path,
        kind,
        required,
        constraints,
    })
}

fn parse_constraint(token: &str, kind: FieldKind, line: usize) -> Result<Constraint, SchemaError> {
    let syntax = |message: String| SchemaError::Syntax { line, message };
    if let Some(inner) = token.strip_prefix("enum(").and_then(|t| t.strip_suffix(')')) {
        if kind != FieldKind::Text {
            return Err(syntax("enum applies to string fields only".into()));
        }
        let variants: Vec<String> = inner.split('|').map(str::to_string).collect();
        if variants.iter().any(String::is_empty) {
            return Err(syntax("empty enum variant".into()));
        }
        return Ok(Constraint::Enum(variants));
    }
    if let Some(raw) = token.strip_prefix("min=") {
        return parse_bound(raw, kind, Constraint::Min).map_err(syntax);
    }
    if let Some(raw) = token.strip_prefix("max=") {
        return parse_bound(raw, kind, Constraint::Max).map_err(syntax);
    }
    if let Some(source) = token.strip_prefix("pattern=/").and_then(|t| t.strip_suffix('/')) {
        if kind != FieldKind::Text {
            return Err(syntax("pattern applies to string fields only".into()));
        }
        // Field patterns match the whole value.
        let regex = Regex::new(&format!("^(?:{source})$"))
            .map_err(|e| syntax(format!("bad pattern: {e}")))?;
        return Ok(Constraint::Pattern {
            source: source.to_string(),
            regex,
        });
    }
    Err(syntax(format!("unknown constraint {token:?}")))
}

fn parse_bound(
    raw: &str,
    kind: FieldKind,
    build: fn(f64) -> Constraint,
) -> Result<Constraint, String> {
    if !kind.is_numeric() {
        return Err("min/max apply to int and decimal fields only".into());
    }
    let bound: f64 = raw
        .parse()
        .ok()
        .filter(|b: &f64| b.is_finite())
        .ok_or_else(|| format!("bad bound {raw:?}"))?;
    Ok(build(bound))
}

/// Parses and merges schema files. Each entry is a file, or a directory
/// whose `*.schema` files load in name order.
pub fn load_schema_files(paths: &[PathBuf]) -> Result<SchemaSet, SchemaError> {
    let mut set = SchemaSet::new();
    for path in paths {
        let io_err = |e: std::io::Error| SchemaError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(io_err)?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "schema"))
                .collect();
            files.sort();
            set.merge(load_schema_files(&files)?)?;
        } else {
            let text = std::fs::read_to_string(path).map_err(io_err)?;
            set.merge(parse_schema_set(&text)?)?;
        }
    }
    Ok(set)
}

/// Loads a colon-separated list of schema files and directories, the
/// format of the `ACWP_SCHEMA_PATH` environment variable.
pub fn load_schema_search_path(search: &str) -> Result<SchemaSet, SchemaError> {
    let paths: Vec<PathBuf> = search
        .split(':')
        .filter(|entry| !entry.is_empty())
        .map(PathBuf::from)
        .collect();
    load_schema_files(&paths)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate schema {type_name} v{version}")]
    DuplicateSchema { type_name: String, version: u32 },
    #[error("line {line}: duplicate field path {path}")]
    DuplicateFieldPath { line: usize, path: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    const MET: &str = "message met.update v1\nfield qnh int required min=900 max=1100\n";

    fn doc(text: &str) -> Document {
        Document::parse_str(text).unwrap()
    }

    #[test]
    fn parses_single_schema() {
        let set = parse_schema_set(MET).unwrap();
        let schema = set.latest("met.update").unwrap();
        assert_eq!(schema.version, 1);
        assert_eq!(schema.rules.len(), 1);
        assert!(schema.rules[0].required);
        assert_eq!(schema.rules[0].constraints.len(), 2);
    }

    #[test]
    fn duplicate_schema_is_rejected() {
        let text = "message x v1\nfield a int optional\nmessage x v1\nfield b int optional\n";
        assert_eq!(
            parse_schema_set(text).unwrap_err(),
            SchemaError::DuplicateSchema {
                type_name: "x".into(),
                version: 1
            }
        );
    }

    #[test]
    fn duplicate_field_path_is_rejected() {
        let text = "message x v1\nfield a int optional\nfield a string optional\n";
        assert_eq!(
            parse_schema_set(text).unwrap_err(),
            SchemaError::DuplicateFieldPath {
                line: 3,
                path: "a".into()
            }
        );
    }

    #[test]
    fn unknown_kind_is_a_syntax_error() {
        let err = parse_schema_set("message x v1\nfield q frob required\n").unwrap_err();
        match err {
            SchemaError::Syntax { line: 2, message } => {
                assert!(message.contains("frob"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# met family\n\nmessage met.update v1\n  # indented comment\nfield qnh int required\n";
        assert!(parse_schema_set(text).is_ok());
    }

    #[test]
    fn misplaced_and_malformed_lines_are_rejected() {
        assert!(parse_schema_set("field q int required\n").is_err());
        assert!(parse_schema_set("message x v0\n").is_err());
        assert!(parse_schema_set("message x 1\n").is_err());
        assert!(parse_schema_set("message x.0 v1\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q int\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q int sometimes\n").is_err());
        assert!(parse_schema_set("bogus\n").is_err());
    }

    #[test]
    fn constraint_applicability_is_checked_at_parse() {
        assert!(parse_schema_set("message x v1\nfield q string required min=1\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q int required enum(a|b)\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q int required pattern=/a/\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q string required pattern=/[/\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q string required enum(a||b)\n").is_err());
        assert!(parse_schema_set("message x v1\nfield q int required near=5\n").is_err());
    }

    #[test]
    fn valid_document_passes() {
        let set = parse_schema_set(MET).unwrap();
        assert!(set.validate(&doc("qnh = 1013\n"), "met.update").is_empty());
    }

    #[test]
    fn wrong_kind_is_reported() {
        let set = parse_schema_set(MET).unwrap();
        let violations = set.validate(&doc("qnh = \"high\"\n"), "met.update");
        assert_eq!(
            violations,
            vec![Violation::WrongKind {
                path: "qnh".into(),
                expected: FieldKind::Int,
                found: "string",
            }]
        );
    }

    #[test]
    fn missing_required_is_reported() {
        let set = parse_schema_set(MET).unwrap();
        let violations = set.validate(&Document::new(), "met.update");
        assert_eq!(
            violations,
            vec![Violation::MissingRequired { path: "qnh".into() }]
        );
    }

    #[test]
    fn null_fails_every_kind() {
        let set = parse_schema_set(MET).unwrap();
        let violations = set.validate(&doc("qnh = null\n"), "met.update");
        assert!(matches!(violations[0], Violation::WrongKind { .. }));
    }

    #[test]
    fn bounds_are_inclusive() {
        let set = parse_schema_set(MET).unwrap();
        assert!(set.validate(&doc("qnh = 900\n"), "met.update").is_empty());
        assert!(set.validate(&doc("qnh = 1100\n"), "met.update").is_empty());
        let violations = set.validate(&doc("qnh = 899\n"), "met.update");
        assert_eq!(
            violations,
            vec![Violation::ConstraintFailed {
                path: "qnh".into(),
                constraint: "min=900".into()
            }]
        );
        assert_eq!(
            set.validate(&doc("qnh = 1101\n"), "met.update"),
            vec![Violation::ConstraintFailed {
                path: "qnh".into(),
                constraint: "max=1100".into()
            }]
        );
    }

    #[test]
    fn unknown_type_short_circuits() {
        let set = parse_schema_set(MET).unwrap();
        assert_eq!(
            set.validate(&doc("qnh = 1013\n"), "met.updatez"),
            vec![Violation::UnknownType {
                type_name: "met.updatez".into()
            }]
        );
    }

    #[test]
    fn strict_flags_unknown_fields_and_permissive_allows_them() {
        let set = parse_schema_set(MET).unwrap();
        let d = doc("qnh = 1013\nxyz = 1\n");
        assert_eq!(
            set.validate(&d, "met.update"),
            vec![Violation::UnknownField { path: "xyz".into() }]
        );
        assert!(set
            .validate_with(&d, "met.update", ValidationMode::Permissive)
            .is_empty());
    }

    #[test]
    fn every_violation_is_returned() {
        let text = "message m v1\nfield a int required\nfield b string required enum(x|y)\n";
        let set = parse_schema_set(text).unwrap();
        let violations = set.validate(&doc("b = \"z\"\nc = 1\n"), "m");
        assert_eq!(violations.len(), 3);
        assert_eq!(
            violations[0],
            Violation::MissingRequired { path: "a".into() }
        );
        assert_eq!(
            violations[1],
            Violation::ConstraintFailed {
                path: "b".into(),
                constraint: "enum(x|y)".into()
            }
        );
        assert_eq!(violations[2], Violation::UnknownField { path: "c".into() });
    }

    #[test]
    fn patterns_match_whole_values() {
        let text = "message m v1\nfield callsign string required pattern=/[A-Z0-9]{2,7}/\n";
        let set = parse_schema_set(text).unwrap();
        assert!(set
            .validate(&doc("callsign = \"DLH123\"\n"), "m")
            .is_empty());
        assert!(!set
            .validate(&doc("callsign = \"DLH123 heavy\"\n"), "m")
            .is_empty());
        assert!(!set.validate(&doc("callsign = \"x\"\n"), "m").is_empty());
    }

    #[test]
    fn wildcards_match_index_segments_only() {
        let text = "message m v1\nfield route.*.fix string optional\n";
        let set = parse_schema_set(text).unwrap();
        assert!(set
            .validate(&doc("route.0.fix = \"WSN\"\nroute.1.fix = \"LBU\"\n"), "m")
            .is_empty());
        let violations = set.validate(&doc("route.x.fix = \"WSN\"\n"), "m");
        assert_eq!(
            violations,
            vec![Violation::UnknownField {
                path: "route.x.fix".into()
            }]
        );
    }

    #[test]
    fn latest_version_wins() {
        let text = "message m v1\nfield a int required\nmessage m v2\nfield a int optional\n";
        let set = parse_schema_set(text).unwrap();
        assert!(set.validate(&Document::new(), "m").is_empty());
        assert_eq!(set.get("m", 1).unwrap().rules[0].required, true);
    }

    #[test]
    fn violations_render_one_per_line() {
        let set = parse_schema_set(MET).unwrap();
        let violations = set.validate(&doc("qnh = 899\n"), "met.update");
        assert_eq!(violations[0].to_string(), "constraint-failed: qnh min=900");
        assert_eq!(
            Violation::MissingRequired { path: "qnh".into() }.to_string(),
            "missing-required: qnh"
        );
        assert_eq!(
            Violation::UnknownType {
                type_name: "m".into()
            }
            .to_string(),
            "unknown-type: m"
        );
    }
}
