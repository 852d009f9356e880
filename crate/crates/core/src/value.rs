//! Feature values and the comparison operators queries and rules apply to them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A feature value. Integers and floats compare on one numeric line;
/// strings only compare with strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Num(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Num(f) => Some(f),
            Value::Str(_) => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Value::Str(_))
    }

    /// `None` when the two values live on different lines (numeric vs string).
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Str(_), _) | (_, Value::Str(_)) => None,
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    /// Canonical text used in the feature log: integers bare, floats always
    /// carrying a fraction or exponent, strings as JSON string literals.
    pub fn to_canonical(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Num(f) => format!("{f:?}"),
            Value::Str(s) => serde_json::to_string(s).expect("string serialization"),
        }
    }

    pub fn parse_canonical(s: &str) -> Option<Value> {
        if s.starts_with('"') {
            return serde_json::from_str::<String>(s).ok().map(Value::Str);
        }
        if let Ok(i) = s.parse::<i64>() {
            return Some(Value::Int(i));
        }
        let looks_float = s.contains(['.', 'e', 'E']) && !s.contains(['i', 'n', 'N', 'I']);
        match s.parse::<f64>() {
            Ok(f) if looks_float && f.is_finite() => Some(Value::Num(f)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Cmp {
    pub const ALL: [Cmp; 6] = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }

    /// `value <cmp> literal`. Incomparable pairs never match, `!=` included.
    pub fn holds(self, value: &Value, literal: &Value) -> bool {
        let Some(ord) = value.compare(literal) else {
            return false;
        };
        match self {
            Cmp::Eq => ord == Ordering::Equal,
            Cmp::Ne => ord != Ordering::Equal,
            Cmp::Lt => ord == Ordering::Less,
            Cmp::Le => ord != Ordering::Greater,
            Cmp::Gt => ord == Ordering::Greater,
            Cmp::Ge => ord != Ordering::Less,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Cmp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Cmp::ALL
            .into_iter()
            .find(|c| c.symbol() == s)
            .ok_or_else(|| format!("unknown comparator `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text() {
        assert_eq!(Value::Int(12).to_canonical(), "12");
        assert_eq!(Value::Num(5.0).to_canonical(), "5.0");
        assert_eq!(Value::Num(0.125).to_canonical(), "0.125");
        assert_eq!(Value::from("a b\"c").to_canonical(), r#""a b\"c""#);
        for v in [
            Value::Int(-3),
            Value::Num(5.0),
            Value::Num(1e21),
            Value::Num(-0.001),
            Value::from("congestion"),
            Value::from("with space"),
        ] {
            assert_eq!(Value::parse_canonical(&v.to_canonical()), Some(v));
        }
        assert_eq!(Value::parse_canonical("NaN"), None);
        assert_eq!(Value::parse_canonical("inf"), None);
        assert_eq!(Value::parse_canonical("bare"), None);
    }

    #[test]
    fn mixed_types_never_match() {
        let s = Value::from("x");
        for c in Cmp::ALL {
            assert!(!c.holds(&s, &Value::Int(1)), "{c}");
        }
        assert!(Cmp::Ge.holds(&Value::Int(12), &Value::Int(10)));
        assert!(Cmp::Lt.holds(&Value::Num(9.5), &Value::Int(10)));
        assert!(Cmp::Eq.holds(&Value::Num(10.0), &Value::Int(10)));
        assert!(Cmp::Ne.holds(&Value::from("a"), &Value::from("b")));
    }

    #[test]
    fn json_shapes() {
        let v: Vec<Value> = serde_json::from_str(r#"[10, 2.5, "x"]"#).unwrap();
        assert_eq!(v, vec![Value::Int(10), Value::Num(2.5), Value::from("x")]);
        let c: Cmp = serde_json::from_str(r#"">=""#).unwrap();
        assert_eq!(c, Cmp::Ge);
    }
}
