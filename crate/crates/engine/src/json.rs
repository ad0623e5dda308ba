//! Canonical JSON: sorted keys, two-space indent, trailing newline.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// A document that failed to parse or did not match its schema.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl SchemaError {
    pub fn is_syntax(&self) -> bool {
        matches!(self, SchemaError::Syntax { .. })
    }

    /// Offending path, `.` for the document root.
    pub fn path(&self) -> Option<&str> {
        match self {
            SchemaError::Schema { path, .. } => Some(path),
            SchemaError::Syntax { .. } => None,
        }
    }
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    // serde_json's default map is a BTreeMap, so objects come out sorted.
    serde_json::to_value(value).expect("domain types serialize to JSON")
}

/// Pretty canonical form used for files and HTTP bodies.
pub fn canonical<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(&to_value(value)).expect("JSON value serializes");
    text.push('\n');
    text
}

/// Single-line canonical form used for JSON-lines records and hashing.
pub fn canonical_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(&to_value(value)).expect("JSON value serializes")
}

/// Hex SHA-256 of the single-line canonical form.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(canonical_line(value).as_bytes()))
}

/// Parses `text` as `T`, naming the offending path on schema errors.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, SchemaError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SchemaError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_value(value)
}

pub fn from_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, SchemaError> {
    serde_path_to_error::deserialize(value).map_err(|e| SchemaError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        zeta: u32,
        alpha: Inner,
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        threshold: f64,
    }

    #[test]
    fn keys_are_sorted() {
        let doc = Doc { zeta: 1, alpha: Inner { threshold: 0.5 } };
        assert_eq!(canonical_line(&doc), r#"{"alpha":{"threshold":0.5},"zeta":1}"#);
        assert_eq!(parse::<Doc>(&canonical(&doc)).unwrap(), doc);
    }

    #[test]
    fn missing_field_names_its_path() {
        let err = parse::<Doc>(r#"{"zeta": 1, "alpha": {}}"#).unwrap_err();
        assert_eq!(err.path(), Some("alpha"));
        assert!(err.to_string().contains("threshold"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = parse::<Doc>(r#"{"zeta": 1, "alpha": {"threshold": 1}, "extra": 2}"#).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn truncated_text_is_a_syntax_error() {
        assert!(parse::<Doc>(r#"{"zeta": 1, "al"#).unwrap_err().is_syntax());
    }
}
