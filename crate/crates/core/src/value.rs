//! Values that can be assigned to registers or inserted into lists.

use std::fmt;
use std::str::FromStr;

/// A JSON number kept in serde_json's canonical text form, so equality and
/// ordering are exact and independent of float formatting quirks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Number(String);

impl Number {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_json(n: &serde_json::Number) -> Self {
        Number(n.to_string())
    }

    pub fn to_json(&self) -> serde_json::Number {
        // Constructed only from a valid serde_json::Number.
        serde_json::from_str(&self.0).expect("canonical number text")
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid number literal `{0}`")]
pub struct InvalidNumber(String);

impl FromStr for Number {
    type Err = InvalidNumber;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match serde_json::from_str::<serde_json::Value>(s) {
            Ok(serde_json::Value::Number(n)) => Ok(Number::from_json(&n)),
            _ => Err(InvalidNumber(s.to_string())),
        }
    }
}

impl From<i64> for Number {
    fn from(n: i64) -> Self {
        Number(n.to_string())
    }
}

/// `VAL ::= n | str | true | false | null | {} | []`
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Number(Number),
    Str(String),
    Bool(bool),
    Null,
    EmptyMap,
    EmptyList,
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn int(n: i64) -> Self {
        Value::Number(n.into())
    }

    pub fn is_primitive(&self) -> bool {
        !matches!(self, Value::EmptyMap | Value::EmptyList)
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Number(n) => J::Number(n.to_json()),
            Value::Str(s) => J::String(s.clone()),
            Value::Bool(b) => J::Bool(*b),
            Value::Null => J::Null,
            Value::EmptyMap => J::Object(Default::default()),
            Value::EmptyList => J::Array(Vec::new()),
        }
    }

    /// Converts a JSON value; only scalars, `{}` and `[]` are representable.
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        use serde_json::Value as J;
        Some(match v {
            J::Number(n) => Value::Number(Number::from_json(n)),
            J::String(s) => Value::Str(s.clone()),
            J::Bool(b) => Value::Bool(*b),
            J::Null => Value::Null,
            J::Object(m) if m.is_empty() => Value::EmptyMap,
            J::Array(a) if a.is_empty() => Value::EmptyList,
            _ => return None,
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_canonicalised() {
        let a: Number = "1e2".parse().unwrap();
        let b: Number = "100.0".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!("-7".parse::<Number>().unwrap().as_str(), "-7");
        assert!("07".parse::<Number>().is_err());
        assert!("abc".parse::<Number>().is_err());
    }

    #[test]
    fn json_round_trip() {
        for v in [
            Value::int(3),
            Value::str("a\"b"),
            Value::Bool(false),
            Value::Null,
            Value::EmptyMap,
            Value::EmptyList,
        ] {
            assert_eq!(Value::from_json(&v.to_json()), Some(v));
        }
        assert_eq!(Value::from_json(&serde_json::json!({"a": 1})), None);
    }
}
