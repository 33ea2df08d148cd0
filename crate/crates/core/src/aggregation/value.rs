use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;
use rust_decimal::prelude::*;

/// A runtime value of the expression language.
///
/// Numbers are exact decimals. Sets are ordered so that printing and
/// iteration are deterministic.
#[derive(Debug, Clone)]
pub enum Value {
    Number(Decimal),
    Str(String),
    Date(NaiveDate),
    Bool(bool),
    List(Vec<Value>),
    Set(BTreeSet<Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Str(_) => "string",
            Value::Date(_) => "date",
            Value::Bool(_) => "boolean",
            Value::List(_) => "list",
            Value::Set(_) => "set",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Number(_) => 1,
            Value::Str(_) => 2,
            Value::Date(_) => 3,
            Value::List(_) => 4,
            Value::Set(_) => 5,
        }
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            Value::Number(d) => Some(*d),
            _ => None,
        }
    }

    pub fn number(d: Decimal) -> Self {
        Value::Number(d.normalize())
    }

    /// Elements of a list or set, in iteration order.
    pub fn elements(&self) -> Option<Vec<Value>> {
        match self {
            Value::List(xs) => Some(xs.clone()),
            Value::Set(xs) => Some(xs.iter().cloned().collect()),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::List(a), Value::List(b)) => a.cmp(b),
            (Value::Set(a), Value::Set(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

pub(crate) fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

fn write_seq<'a>(
    f: &mut fmt::Formatter<'_>,
    open: &str,
    close: &str,
    items: impl Iterator<Item = &'a Value>,
) -> fmt::Result {
    f.write_str(open)?;
    for (i, v) in items.enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str(close)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(d) => write!(f, "{}", d.normalize()),
            Value::Str(s) => write_str_literal(f, s),
            Value::Date(d) => write!(f, "date(\"{}\")", d.format("%Y-%m-%d")),
            Value::Bool(b) => write!(f, "{b}"),
            Value::List(xs) => write_seq(f, "[", "]", xs.iter()),
            Value::Set(xs) => write_seq(f, "{", "}", xs.iter()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        Decimal::from_str_exact(s).unwrap()
    }

    #[test]
    fn numbers_compare_numerically_across_scales() {
        assert_eq!(Value::Number(d("1.0")), Value::Number(d("1")));
        let set: BTreeSet<Value> = [Value::Number(d("2.00")), Value::Number(d("2"))]
            .into_iter()
            .collect();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn display_is_canonical() {
        let v = Value::List(vec![
            Value::Number(d("2.50")),
            Value::Str("a\"b".into()),
            Value::Bool(true),
        ]);
        assert_eq!(v.to_string(), r#"[2.5, "a\"b", true]"#);
    }
}
