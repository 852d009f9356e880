//! Operator query language: parsing, printing and evaluation over the fog
//! index.

pub mod ast;
pub mod eval;
pub mod parser;

pub use ast::{Predicate, Query};
pub use eval::{clip_set, evaluate, evaluate_scan, QueryResult, ResultRow};
pub use parser::{parse_query, ParseError, ParseErrorKind};
