use std::fmt;

use thiserror::Error;

/// Maximum number of significant decimal digits a [`Decimal`] may carry.
pub const DECIMAL_MAX_DIGITS: usize = 15;

/// Base-10 decimal scalar limited to [`DECIMAL_MAX_DIGITS`] significant
/// digits, so every representable value survives a text round trip exactly.
///
/// Construction normalizes: non-finite inputs are rejected, negative zero
/// collapses to zero, and the magnitude is quantized to 15 significant
/// digits. Two decimals are equal exactly when their encodings are
/// byte-identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decimal(f64);

impl Decimal {
    /// Quantizes `value` to 15 significant digits.
    ///
    /// Fails on NaN and infinities, and on finite values whose quantized
    /// form falls outside the f64 range (only near `f64::MAX`).
    pub fn new(value: f64) -> Result<Decimal, ValueError> {
        if !value.is_finite() {
            return Err(ValueError::NotFinite);
        }
        let quantized: f64 = format!("{value:.*e}", DECIMAL_MAX_DIGITS - 1)
            .parse()
            .expect("formatted float reparses");
        if !quantized.is_finite() {
            return Err(ValueError::NotFinite);
        }
        // -0.0 and 0.0 compare equal but encode differently; keep one form.
        Ok(Decimal(if quantized == 0.0 { 0.0 } else { quantized }))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Parses the decimal literal grammar: optional sign, integer digits,
    /// optional fraction, optional exponent, with at least a fraction or an
    /// exponent present (otherwise the token is an integer literal).
    pub fn parse(text: &str) -> Result<Decimal, ValueError> {
        let bytes = text.as_bytes();
        let mut at = 0;
        if bytes.first() == Some(&b'-') {
            at += 1;
        }
        let int_start = at;
        while at < bytes.len() && bytes[at].is_ascii_digit() {
            at += 1;
        }
        if at == int_start || !canonical_digit_run(&text[int_start..at]) {
            return Err(ValueError::Malformed(format!("bad decimal {text:?}")));
        }
        let mut digits = text[int_start..at].to_string();
        let mut marked = false;
        if bytes.get(at) == Some(&b'.') {
            at += 1;
            let frac_start = at;
            while at < bytes.len() && bytes[at].is_ascii_digit() {
                at += 1;
            }
            if at == frac_start {
                return Err(ValueError::Malformed(format!("bad decimal {text:?}")));
            }
            digits.push_str(&text[frac_start..at]);
            marked = true;
        }
        if matches!(bytes.get(at), Some(b'e') | Some(b'E')) {
            at += 1;
            if matches!(bytes.get(at), Some(b'+') | Some(b'-')) {
                at += 1;
            }
            let exp_start = at;
            while at < bytes.len() && bytes[at].is_ascii_digit() {
                at += 1;
            }
            if at == exp_start {
                return Err(ValueError::Malformed(format!("bad decimal {text:?}")));
            }
            marked = true;
        }
        if at != bytes.len() || !marked {
            return Err(ValueError::Malformed(format!("bad decimal {text:?}")));
        }
        let significant = digits.bytes().skip_while(|b| *b == b'0').count().max(1);
        if significant > DECIMAL_MAX_DIGITS {
            return Err(ValueError::TooManyDigits);
        }
        let parsed: f64 = text.parse().expect("validated decimal grammar parses");
        if !parsed.is_finite() {
            return Err(ValueError::NotFinite);
        }
        Decimal::new(parsed)
    }
}

impl Eq for Decimal {}

impl fmt::Display for Decimal {
    /// Shortest text that re-parses to the same value: positional notation
    /// (with `.0` appended to bare integers) unless scientific notation is
    /// strictly shorter.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut plain = format!("{}", self.0);
        if !plain.contains('.') {
            plain.push_str(".0");
        }
        let scientific = format!("{:e}", self.0);
        if scientific.len() < plain.len() {
            f.write_str(&scientific)
        } else {
            f.write_str(&plain)
        }
    }
}

/// Scalar document value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(String),
    Int(i64),
    Decimal(Decimal),
    Bool(bool),
    Null,
}

/// The kind of a [`Value`], as schema rules see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Text,
    Int,
    Decimal,
    Bool,
    Null,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Text => "string",
            ValueKind::Int => "int",
            ValueKind::Decimal => "decimal",
            ValueKind::Bool => "bool",
            ValueKind::Null => "null",
        }
    }
}

impl Value {
    pub fn text(text: impl Into<String>) -> Value {
        Value::Text(text.into())
    }

    pub fn decimal(value: f64) -> Result<Value, ValueError> {
        Ok(Value::Decimal(Decimal::new(value)?))
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Int,
            Value::Decimal(_) => ValueKind::Decimal,
            Value::Bool(_) => ValueKind::Bool,
            Value::Null => ValueKind::Null,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(text) => Some(text),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_decimal(&self) -> Option<f64> {
        match self {
            Value::Decimal(d) => Some(d.value()),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Parses one value literal. The token must be exact: no surrounding
    /// whitespace, nothing trailing.
    pub fn parse_literal(token: &str) -> Result<Value, ValueError> {
        match token.as_bytes().first() {
            Some(b'"') => parse_string_literal(token),
            Some(b'-') | Some(b'0'..=b'9') => parse_number_literal(token),
            _ => match token {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                "null" => Ok(Value::Null),
                other => Err(ValueError::Malformed(format!("unknown literal {other:?}"))),
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(text) => {
                f.write_str("\"")?;
                write_escaped(text, f)?;
                f.write_str("\"")
            }
            Value::Int(n) => write!(f, "{n}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Null => f.write_str("null"),
        }
    }
}

fn write_escaped(text: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for c in text.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c if c.is_control() => write!(f, "\\u{:04x}", c as u32)?,
            c => write!(f, "{c}")?,
        }
    }
    Ok(())
}

fn parse_number_literal(token: &str) -> Result<Value, ValueError> {
    if token.contains(['.', 'e', 'E']) {
        return Ok(Value::Decimal(Decimal::parse(token)?));
    }
    let digits = token.strip_prefix('-').unwrap_or(token);
    if digits.is_empty()
        || !digits.bytes().all(|b| b.is_ascii_digit())
        || !canonical_digit_run(digits)
    {
        return Err(ValueError::Malformed(format!("bad integer {token:?}")));
    }
    token
        .parse::<i64>()
        .map(Value::Int)
        .map_err(|_| ValueError::Malformed(format!("integer out of range: {token}")))
}

/// Integer digit runs carry no leading zeros; numbers have one written form.
fn canonical_digit_run(digits: &str) -> bool {
    digits == "0" || !digits.starts_with('0')
}

fn parse_string_literal(token: &str) -> Result<Value, ValueError> {
    let mut out = String::with_capacity(token.len());
    let mut chars = token[1..].chars();
    loop {
        let c = chars.next().ok_or(ValueError::UnterminatedString)?;
        match c {
            '"' => break,
            '\\' => out.push(parse_escape(&mut chars)?),
            c if c.is_control() => {
                return Err(ValueError::Malformed(
                    "raw control character in string literal".into(),
                ))
            }
            c => out.push(c),
        }
    }
    if chars.next().is_some() {
        return Err(ValueError::Malformed(
            "trailing data after string literal".into(),
        ));
    }
    Ok(Value::Text(out))
}

fn parse_escape(chars: &mut std::str::Chars<'_>) -> Result<char, ValueError> {
    match chars.next().ok_or(ValueError::UnterminatedString)? {
        '"' => Ok('"'),
        '\\' => Ok('\\'),
        'n' => Ok('\n'),
        't' => Ok('\t'),
        'u' => parse_unicode_escape(chars),
        other => Err(ValueError::BadEscape(format!("\\{other}"))),
    }
}

fn parse_unicode_escape(chars: &mut std::str::Chars<'_>) -> Result<char, ValueError> {
    let first = take_hex4(chars)?;
    // Surrogate pairs arrive as two consecutive \uXXXX escapes.
    if (0xd800..0xdc00).contains(&first) {
        if (chars.next(), chars.next()) != (Some('\\'), Some('u')) {
            return Err(ValueError::BadEscape("unpaired surrogate".into()));
        }
        let second = take_hex4(chars)?;
        if !(0xdc00..0xe000).contains(&second) {
            return Err(ValueError::BadEscape("unpaired surrogate".into()));
        }
        let code = 0x10000 + ((first - 0xd800) << 10) + (second - 0xdc00);
        return char::from_u32(code).ok_or_else(|| ValueError::BadEscape("bad surrogate".into()));
    }
    char::from_u32(first).ok_or_else(|| ValueError::BadEscape(format!("\\u{first:04x}")))
}

fn take_hex4(chars: &mut std::str::Chars<'_>) -> Result<u32, ValueError> {
    let mut code = 0u32;
    for _ in 0..4 {
        let c = chars.next().ok_or(ValueError::UnterminatedString)?;
        let digit = c
            .to_digit(16)
            .ok_or_else(|| ValueError::BadEscape(format!("bad hex digit {c:?}")))?;
        code = code * 16 + digit;
    }
    Ok(code)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("decimal must be finite and in range")]
    NotFinite,
    #[error("decimal exceeds {DECIMAL_MAX_DIGITS} significant digits")]
    TooManyDigits,
    #[error("bad escape sequence: {0}")]
    BadEscape(String),
    #[error("unterminated string literal")]
    UnterminatedString,
    #[error("{0}")]
    Malformed(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_rejects_non_finite() {
        assert_eq!(Decimal::new(f64::NAN), Err(ValueError::NotFinite));
        assert_eq!(Decimal::new(f64::INFINITY), Err(ValueError::NotFinite));
        assert_eq!(Decimal::new(f64::NEG_INFINITY), Err(ValueError::NotFinite));
    }

    #[test]
    fn decimal_quantizes_to_fifteen_digits() {
        let d = Decimal::new(0.1 + 0.2).unwrap();
        assert_eq!(d.to_string(), "0.3");
        let d = Decimal::new(1.0 / 3.0).unwrap();
        assert_eq!(d.to_string(), "0.333333333333333");
    }

    #[test]
    fn decimal_normalizes_negative_zero() {
        let d = Decimal::new(-0.0).unwrap();
        assert_eq!(d.to_string(), "0.0");
        assert_eq!(d, Decimal::new(0.0).unwrap());
    }

    #[test]
    fn decimal_display_appends_fraction_marker() {
        assert_eq!(Decimal::new(540.0).unwrap().to_string(), "540.0");
        assert_eq!(Decimal::new(1013.25).unwrap().to_string(), "1013.25");
    }

    #[test]
    fn decimal_display_prefers_shorter_scientific_form() {
        assert_eq!(Decimal::new(1e300).unwrap().to_string(), "1e300");
        assert_eq!(Decimal::new(0.0001).unwrap().to_string(), "1e-4");
    }

    #[test]
    fn decimal_parse_enforces_digit_budget() {
        assert!(Decimal::parse("1013.25").is_ok());
        assert!(Decimal::parse("0.333333333333333").is_ok());
        assert_eq!(
            Decimal::parse("0.3333333333333333"),
            Err(ValueError::TooManyDigits)
        );
        // Leading zeros are not significant.
        assert!(Decimal::parse("0.000333333333333333").is_ok());
    }

    #[test]
    fn decimal_parse_requires_fraction_or_exponent() {
        assert!(Decimal::parse("540").is_err());
        assert!(Decimal::parse("5e2").is_ok());
        assert!(Decimal::parse("5.").is_err());
        assert!(Decimal::parse(".5").is_err());
        assert!(Decimal::parse("1e").is_err());
    }

    #[test]
    fn decimal_parse_rejects_overflow() {
        assert_eq!(Decimal::parse("1e999"), Err(ValueError::NotFinite));
    }

    #[test]
    fn numbers_have_one_written_form() {
        assert!(Decimal::parse("00.50").is_err());
        assert!(Decimal::parse("01.5").is_err());
        assert!(Value::parse_literal("0540").is_err());
        assert_eq!(Value::parse_literal("0").unwrap(), Value::Int(0));
        assert!(Decimal::parse("0.5").is_ok());
    }

    #[test]
    fn literal_round_trips() {
        for (token, value) in [
            ("\"DLH123\"", Value::text("DLH123")),
            ("540", Value::Int(540)),
            ("-7", Value::Int(-7)),
            ("1013.25", Value::decimal(1013.25).unwrap()),
            ("true", Value::Bool(true)),
            ("false", Value::Bool(false)),
            ("null", Value::Null),
        ] {
            let parsed = Value::parse_literal(token).unwrap();
            assert_eq!(parsed, value);
            assert_eq!(parsed.to_string(), token);
        }
    }

    #[test]
    fn string_escapes_round_trip() {
        let original = Value::text("say \"hi\"\n\tc:\\path \u{1f600} \u{7}");
        let encoded = original.to_string();
        assert_eq!(encoded, "\"say \\\"hi\\\"\\n\\tc:\\\\path \u{1f600} \\u0007\"");
        assert_eq!(Value::parse_literal(&encoded).unwrap(), original);
    }

    #[test]
    fn unicode_escapes_parse() {
        assert_eq!(
            Value::parse_literal("\"\\u0041\\u00e9\"").unwrap(),
            Value::text("Aé")
        );
        // An astral-plane character written as a surrogate pair.
        assert_eq!(
            Value::parse_literal("\"\\ud83d\\ude00\"").unwrap(),
            Value::text("\u{1f600}")
        );
        assert!(Value::parse_literal("\"\\ud83d\"").is_err());
    }

    #[test]
    fn malformed_literals_are_rejected() {
        for bad in [
            "\"open",
            "\"a\" b",
            "tru",
            "nul",
            "TRUE",
            "--1",
            "1x",
            "\"\\q\"",
            "",
            "'single'",
        ] {
            assert!(Value::parse_literal(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn int_boundaries_parse() {
        assert_eq!(
            Value::parse_literal("9223372036854775807").unwrap(),
            Value::Int(i64::MAX)
        );
        assert_eq!(
            Value::parse_literal("-9223372036854775808").unwrap(),
            Value::Int(i64::MIN)
        );
        assert!(Value::parse_literal("9223372036854775808").is_err());
    }
}
