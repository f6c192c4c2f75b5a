use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Dotted field path, e.g. `route.0.fix`.
///
/// Segments are lowercase identifiers (`[a-z][a-z0-9_]*`) or decimal
/// indexes without leading zeros. Paths order bytewise on their text form,
/// which is the canonical document order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(String);

impl Path {
    pub fn parse(text: &str) -> Result<Path, PathError> {
        if text.is_empty() {
            return Err(PathError::Empty);
        }
        for segment in text.split('.') {
            check_segment(text, segment)?;
        }
        Ok(Path(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    /// The path with `prefix` prepended as leading segments.
    pub fn prefixed(&self, prefix: &str) -> Result<Path, PathError> {
        Path::parse(&format!("{prefix}.{}", self.0))
    }
}

fn check_segment(path: &str, segment: &str) -> Result<(), PathError> {
    let bytes = segment.as_bytes();
    let ok = match bytes.first() {
        Some(b'a'..=b'z') => bytes[1..]
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_'),
        Some(b'0') => bytes.len() == 1,
        Some(b'1'..=b'9') => bytes[1..].iter().all(u8::is_ascii_digit),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(PathError::BadSegment {
            path: path.to_string(),
            segment: segment.to_string(),
        })
    }
}

/// Whether `segment` is a decimal index rather than an identifier.
pub(crate) fn is_index_segment(segment: &str) -> bool {
    segment.bytes().all(|b| b.is_ascii_digit()) && !segment.is_empty()
}

/// Whether `segment` is valid as one path segment.
pub(crate) fn valid_segment(segment: &str) -> bool {
    check_segment("", segment).is_ok()
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Path {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Path, PathError> {
        Path::parse(s)
    }
}

impl AsRef<str> for Path {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Lets `BTreeMap<Path, _>` look up by `&str`; `str` ordering matches
/// [`Path`] ordering (both bytewise).
impl std::borrow::Borrow<str> for Path {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("bad path segment {segment:?} in {path:?}")]
    BadSegment { path: String, segment: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_identifiers_and_indexes() {
        for ok in ["callsign", "route.0.fix", "a.10.b_2", "q0"] {
            assert!(Path::parse(ok).is_ok(), "rejected {ok:?}");
        }
    }

    #[test]
    fn rejects_bad_segments() {
        for bad in [
            "", ".", "a.", ".a", "A", "a.B", "1a", "01", "a..b", "_x", "a-b", "a b",
        ] {
            assert!(Path::parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn orders_bytewise() {
        let mut paths: Vec<Path> = ["a.10", "a.2", "b", "a.1"]
            .iter()
            .map(|s| Path::parse(s).unwrap())
            .collect();
        paths.sort();
        let sorted: Vec<&str> = paths.iter().map(Path::as_str).collect();
        // Indexes sort as text, not numerically: "10" before "2".
        assert_eq!(sorted, ["a.1", "a.10", "a.2", "b"]);
    }

    #[test]
    fn prefixing_revalidates() {
        let p = Path::parse("callsign").unwrap();
        assert_eq!(p.prefixed("original").unwrap().as_str(), "original.callsign");
    }
}
