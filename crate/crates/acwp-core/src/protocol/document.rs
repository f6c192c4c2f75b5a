use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::path::Path;
use super::value::Value;

/// Flat map of [`Path`] to [`Value`], the payload of every message.
///
/// Entries are kept sorted by path bytes, so a document has exactly one
/// encoding: equal documents produce byte-identical text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    entries: BTreeMap<Path, Value>,
}

impl Document {
    pub fn new() -> Document {
        Document::default()
    }

    /// Sets `path` to `value`, returning the previous value if any.
    pub fn set(&mut self, path: Path, value: Value) -> Option<Value> {
        self.entries.insert(path, value)
    }

    /// [`set`](Document::set) for code-built documents.
    ///
    /// Panics if `path` is not a valid path literal.
    pub fn put(&mut self, path: &str, value: Value) -> &mut Document {
        let path = Path::parse(path).expect("valid path literal");
        self.entries.insert(path, value);
        self
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        self.entries.get(path)
    }

    pub fn get_text(&self, path: &str) -> Option<&str> {
        self.get(path).and_then(Value::as_text)
    }

    pub fn get_int(&self, path: &str) -> Option<i64> {
        self.get(path).and_then(Value::as_int)
    }

    pub fn get_decimal(&self, path: &str) -> Option<f64> {
        self.get(path).and_then(Value::as_decimal)
    }

    pub fn get_bool(&self, path: &str) -> Option<bool> {
        self.get(path).and_then(Value::as_bool)
    }

    pub fn remove(&mut self, path: &str) -> Option<Value> {
        self.entries.remove(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Path, &Value)> {
        self.entries.iter()
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.entries.keys()
    }

    /// Canonical text form: one `path = value` line per entry, paths in
    /// bytewise order, LF line ends.
    pub fn encode(&self) -> Vec<u8> {
        self.encode_string().into_bytes()
    }

    pub fn encode_string(&self) -> String {
        let mut out = String::new();
        for (path, value) in &self.entries {
            out.push_str(path.as_str());
            out.push_str(" = ");
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses document text. Lines hold `path = value` with free whitespace
    /// around the separator; blank lines are skipped; entries may arrive in
    /// any order; the final line may omit its LF.
    pub fn parse(bytes: &[u8]) -> Result<Document, DocumentError> {
        let text = std::str::from_utf8(bytes).map_err(|e| DocumentError::Syntax {
            line: bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1,
            message: "invalid utf-8".into(),
        })?;
        Document::parse_str(text)
    }

    pub fn parse_str(text: &str) -> Result<Document, DocumentError> {
        let mut doc = Document::new();
        for (at, line) in text.split('\n').enumerate() {
            let line_no = at + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (raw_path, raw_value) =
                line.split_once('=').ok_or_else(|| DocumentError::Syntax {
                    line: line_no,
                    message: "expected `path = value`".into(),
                })?;
            let path = Path::parse(raw_path.trim_end()).map_err(|e| DocumentError::Syntax {
                line: line_no,
                message: e.to_string(),
            })?;
            let value =
                Value::parse_literal(raw_value.trim_start()).map_err(|e| DocumentError::Syntax {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if doc.entries.contains_key(&path) {
                return Err(DocumentError::DuplicatePath {
                    line: line_no,
                    path: path.as_str().to_string(),
                });
            }
            doc.entries.insert(path, value);
        }
        Ok(doc)
    }

    /// Identity: documents are sorted on construction, so every document is
    /// already canonical. Kept so callers can state the intent explicitly.
    pub fn canonicalize(self) -> Document {
        self
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode_string())
    }
}

impl FromIterator<(Path, Value)> for Document {
    fn from_iter<I: IntoIterator<Item = (Path, Value)>>(iter: I) -> Document {
        Document {
            entries: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate path {path}")]
    DuplicatePath { line: usize, path: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_sorted_with_lf() {
        let mut doc = Document::new();
        doc.put("eobt", Value::Int(540));
        doc.put("callsign", Value::text("DLH123"));
        assert_eq!(doc.encode_string(), "callsign = \"DLH123\"\neobt = 540\n");
    }

    #[test]
    fn index_segments_sort_bytewise() {
        let mut doc = Document::new();
        doc.put("a.1", Value::Int(1));
        doc.put("a.10", Value::Int(10));
        doc.put("a.2", Value::Int(2));
        assert_eq!(doc.encode_string(), "a.1 = 1\na.10 = 10\na.2 = 2\n");
    }

    #[test]
    fn parse_accepts_any_order_and_whitespace() {
        let doc = Document::parse_str("eobt=540\n\n  callsign   =  \"DLH123\"").unwrap();
        assert_eq!(doc.get_int("eobt"), Some(540));
        assert_eq!(doc.get_text("callsign"), Some("DLH123"));
        assert_eq!(doc.encode_string(), "callsign = \"DLH123\"\neobt = 540\n");
    }

    #[test]
    fn parse_reports_duplicate_path_with_line() {
        let err = Document::parse_str("a = 1\nb = 2\na = 3\n").unwrap_err();
        assert_eq!(
            err,
            DocumentError::DuplicatePath {
                line: 3,
                path: "a".into()
            }
        );
    }

    #[test]
    fn parse_reports_syntax_with_line() {
        let err = Document::parse_str("a = 1\nx = 00.50\n").unwrap_err();
        match err {
            DocumentError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Document::parse_str("just words\n").is_err());
        assert!(Document::parse_str("a.B = 1\n").is_err());
    }

    #[test]
    fn empty_document_round_trips() {
        let doc = Document::parse(b"").unwrap();
        assert!(doc.is_empty());
        assert!(doc.encode().is_empty());
    }

    #[test]
    fn values_with_equals_signs_parse() {
        let doc = Document::parse_str("note = \"a = b\"\n").unwrap();
        assert_eq!(doc.get_text("note"), Some("a = b"));
    }

    #[test]
    fn parse_then_encode_is_canonical() {
        let input = "b = 2\na = 1\n";
        let doc = Document::parse_str(input).unwrap().canonicalize();
        assert_eq!(doc.encode_string(), "a = 1\nb = 2\n");
        let again = Document::parse(&doc.encode()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn invalid_utf8_names_the_line() {
        let err = Document::parse(b"a = 1\n\xff = 2\n").unwrap_err();
        match err {
            DocumentError::Syntax { line, message } => {
                assert_eq!(line, 2);
                assert_eq!(message, "invalid utf-8");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
