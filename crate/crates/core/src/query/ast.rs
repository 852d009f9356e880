use std::fmt;

use serde::{Deserialize, Serialize};

use crate::edge::features::count_key;
use crate::scenario::ObjectClass;
use crate::time::DailyInterval;
use crate::value::{Cmp, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Query {
    And { lhs: Box<Query>, rhs: Box<Query> },
    Or { lhs: Box<Query>, rhs: Box<Query> },
    Not { inner: Box<Query> },
    Pred { pred: Predicate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Key { key: String, cmp: Cmp, literal: Value },
    Count { class: ObjectClass, cmp: Cmp, n: i64 },
    Time { range: DailyInterval },
    Camera { ids: Vec<String> },
}

impl Predicate {
    /// The index key and comparison this predicate looks up, if any.
    pub fn lookup(&self) -> Option<(String, Cmp, Value)> {
        match self {
            Predicate::Key { key, cmp, literal } => Some((key.clone(), *cmp, literal.clone())),
            Predicate::Count { class, cmp, n } => Some((count_key(*class), *cmp, Value::Int(*n))),
            Predicate::Time { .. } | Predicate::Camera { .. } => None,
        }
    }
}

impl Query {
    pub fn pred(pred: Predicate) -> Self {
        Query::Pred { pred }
    }

    pub fn and(lhs: Query, rhs: Query) -> Self {
        Query::And {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn or(lhs: Query, rhs: Query) -> Self {
        Query::Or {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Query) -> Self {
        Query::Not { inner: Box::new(inner) }
    }

    pub fn depth(&self) -> usize {
        match self {
            Query::And { lhs, rhs } | Query::Or { lhs, rhs } => 1 + lhs.depth().max(rhs.depth()),
            Query::Not { inner } => 1 + inner.depth(),
            Query::Pred { .. } => 1,
        }
    }

    /// Predicates outside any NOT, left to right.
    pub fn positive_leaves(&self) -> Vec<&Predicate> {
        fn walk<'a>(q: &'a Query, out: &mut Vec<&'a Predicate>) {
            match q {
                Query::And { lhs, rhs } | Query::Or { lhs, rhs } => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
                Query::Not { .. } => {}
                Query::Pred { pred } => out.push(pred),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Query::Or { .. } => 1,
            Query::And { .. } => 2,
            Query::Not { .. } => 3,
            Query::Pred { .. } => 4,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Key { key, cmp, literal } => write!(f, "{key} {cmp} {}", literal.to_canonical()),
            Predicate::Count { class, cmp, n } => write!(f, "COUNT({class}) {cmp} {n}"),
            Predicate::Time { range } => write!(f, "TIME IN [{},{}]", range.start, range.end),
            Predicate::Camera { ids } => write!(f, "CAMERA IN {{{}}}", ids.join(",")),
        }
    }
}

/// Prints with the fewest parentheses that parse back to the same tree.
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, q: &Query, parens: bool| {
            if parens {
                write!(f, "({q})")
            } else {
                write!(f, "{q}")
            }
        };
        match self {
            Query::And { lhs, rhs } | Query::Or { lhs, rhs } => {
                let p = self.precedence();
                let word = if p == 1 { "OR" } else { "AND" };
                child(f, lhs, lhs.precedence() < p)?;
                write!(f, " {word} ")?;
                child(f, rhs, rhs.precedence() <= p)
            }
            Query::Not { inner } => {
                f.write_str("NOT ")?;
                child(f, inner, !matches!(**inner, Query::Pred { .. }))
            }
            Query::Pred { pred } => write!(f, "{pred}"),
        }
    }
}
