//! Recursive-descent parser for the operator query language.
//!
//! ```text
//! query    := or_expr
//! or_expr  := and_expr { "OR" and_expr }
//! and_expr := unary { "AND" unary }
//! unary    := [ "NOT" ] primary
//! primary  := "(" query ")" | pred
//! pred     := "COUNT" "(" class ")" cmp INT
//!           | "TIME" "IN" "[" TIME "," TIME "]"
//!           | "CAMERA" "IN" "{" ID { "," ID } "}"
//!           | ID cmp literal
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Predicate, Query};
use crate::scenario::ObjectClass;
use crate::time::{DailyInterval, TimeOfDay};
use crate::value::{Cmp, Value};

const KEYWORDS: [&str; 7] = ["AND", "OR", "NOT", "COUNT", "TIME", "IN", "CAMERA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Syntax,
    UnknownClass,
    BadTime,
    BadLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{message} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the query text.
    pub offset: usize,
    pub expected: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Cmp(Cmp),
    Word(String),
    Number(String),
    Str(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Cmp(c) => format!("`{c}`"),
            Tok::Word(w) => format!("`{w}`"),
            Tok::Number(n) => format!("`{n}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

fn is_reserved(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn syntax(offset: usize, expected: &[&str], found: &Tok) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Syntax,
        offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        message: format!("expected {}, found {}", expected.join(" or "), found.describe()),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b'{' => Some(Tok::LBrace),
            b'}' => Some(Tok::RBrace),
            b',' => Some(Tok::Comma),
            b':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(t) = single {
            out.push((start, t));
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
        } else if matches!(c, b'<' | b'>' | b'=' | b'!') {
            let two = bytes.get(i + 1) == Some(&b'=');
            let cmp = match (c, two) {
                (b'>', true) => Cmp::Ge,
                (b'<', true) => Cmp::Le,
                (b'!', true) => Cmp::Ne,
                (b'=', _) => Cmp::Eq,
                (b'>', false) => Cmp::Gt,
                (b'<', false) => Cmp::Lt,
                _ => {
                    return Err(ParseError {
                        kind: ParseErrorKind::Syntax,
                        offset: start,
                        expected: vec!["`!=`".into()],
                        message: "stray `!`".into(),
                    })
                }
            };
            i += if two && c != b'=' { 2 } else { 1 };
            out.push((start, Tok::Cmp(cmp)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Word(src[start..i].to_string())));
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            let digits = |i: &mut usize| {
                while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                    *i += 1;
                }
            };
            digits(&mut i);
            if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                i += 1;
                digits(&mut i);
            }
            if matches!(bytes.get(i), Some(b'e' | b'E')) {
                let mut j = i + 1;
                if matches!(bytes.get(j), Some(b'+' | b'-')) {
                    j += 1;
                }
                if bytes.get(j).is_some_and(u8::is_ascii_digit) {
                    i = j;
                    digits(&mut i);
                }
            }
            out.push((start, Tok::Number(src[start..i].to_string())));
        } else if c == b'"' {
            i += 1;
            loop {
                match bytes.get(i) {
                    None => {
                        return Err(ParseError {
                            kind: ParseErrorKind::BadLiteral,
                            offset: start,
                            expected: vec!["`\"`".into()],
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(b'\\') => i += 2,
                    Some(b'"') => break,
                    Some(_) => i += 1,
                }
            }
            i += 1;
            let s: String = serde_json::from_str(&src[start..i]).map_err(|e| ParseError {
                kind: ParseErrorKind::BadLiteral,
                offset: start,
                expected: Vec::new(),
                message: format!("bad string literal: {e}"),
            })?;
            out.push((start, Tok::Str(s)));
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(ParseError {
                kind: ParseErrorKind::Syntax,
                offset: start,
                expected: Vec::new(),
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((src.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, label: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), &[label], self.peek()))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek().is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), &[kw], self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Word(w) if !is_reserved(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            t => Err(syntax(self.offset(), &["identifier"], t)),
        }
    }

    fn cmp(&mut self) -> Result<Cmp, ParseError> {
        match self.peek() {
            Tok::Cmp(c) => {
                let c = *c;
                self.bump();
                Ok(c)
            }
            t => Err(syntax(self.offset(), &["comparator"], t)),
        }
    }

    fn or_expr(&mut self) -> Result<Query, ParseError> {
        let mut q = self.and_expr()?;
        while self.peek().is_keyword("OR") {
            self.bump();
            q = Query::or(q, self.and_expr()?);
        }
        Ok(q)
    }

    fn and_expr(&mut self) -> Result<Query, ParseError> {
        let mut q = self.unary()?;
        while self.peek().is_keyword("AND") {
            self.bump();
            q = Query::and(q, self.unary()?);
        }
        Ok(q)
    }

    fn unary(&mut self) -> Result<Query, ParseError> {
        if self.peek().is_keyword("NOT") {
            self.bump();
            Ok(Query::not(self.primary()?))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Query, ParseError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let q = self.or_expr()?;
            match self.peek() {
                Tok::RParen => {
                    self.bump();
                    Ok(q)
                }
                t => Err(syntax(self.offset(), &["AND", "OR", "`)`"], t)),
            }
        } else {
            self.pred().map(Query::pred)
        }
    }

    fn pred(&mut self) -> Result<Predicate, ParseError> {
        let t = self.peek().clone();
        if t.is_keyword("COUNT") {
            self.bump();
            self.expect(Tok::LParen, "`(`")?;
            let at = self.offset();
            let class = match self.bump().1 {
                Tok::Word(w) => ObjectClass::parse(&w).ok_or_else(|| ParseError {
                    kind: ParseErrorKind::UnknownClass,
                    offset: at,
                    expected: ObjectClass::ALL.iter().map(|c| c.to_string()).collect(),
                    message: format!("unknown class `{w}`"),
                })?,
                other => return Err(syntax(at, &["person", "vehicle", "other"], &other)),
            };
            self.expect(Tok::RParen, "`)`")?;
            let cmp = self.cmp()?;
            let at = self.offset();
            let n = match self.bump().1 {
                Tok::Number(s) => s.parse::<i64>().map_err(|_| ParseError {
                    kind: ParseErrorKind::BadLiteral,
                    offset: at,
                    expected: vec!["integer".into()],
                    message: format!("COUNT needs an integer, found `{s}`"),
                })?,
                other => return Err(syntax(at, &["integer"], &other)),
            };
            Ok(Predicate::Count { class, cmp, n })
        } else if t.is_keyword("TIME") {
            self.bump();
            self.expect_keyword("IN")?;
            self.expect(Tok::LBracket, "`[`")?;
            let from = self.time_of_day()?;
            self.expect(Tok::Comma, "`,`")?;
            let to = self.time_of_day()?;
            self.expect(Tok::RBracket, "`]`")?;
            Ok(Predicate::Time {
                range: DailyInterval::new(from, to),
            })
        } else if t.is_keyword("CAMERA") {
            self.bump();
            self.expect_keyword("IN")?;
            self.expect(Tok::LBrace, "`{`")?;
            let mut ids = vec![self.ident()?];
            loop {
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                        ids.push(self.ident()?);
                    }
                    Tok::RBrace => {
                        self.bump();
                        break;
                    }
                    t => return Err(syntax(self.offset(), &["`,`", "`}`"], t)),
                }
            }
            Ok(Predicate::Camera { ids })
        } else if matches!(&t, Tok::Word(w) if !is_reserved(w)) {
            let key = self.ident()?;
            let cmp = self.cmp()?;
            let literal = self.literal()?;
            Ok(Predicate::Key { key, cmp, literal })
        } else {
            Err(syntax(
                self.offset(),
                &["`(`", "NOT", "COUNT", "TIME", "CAMERA", "identifier"],
                &t,
            ))
        }
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        let at = self.offset();
        match self.bump().1 {
            Tok::Str(s) => Ok(Value::Str(s)),
            Tok::Number(s) => {
                if let Ok(i) = s.parse::<i64>() {
                    return Ok(Value::Int(i));
                }
                match s.parse::<f64>() {
                    Ok(f) if f.is_finite() && s.contains(['.', 'e', 'E']) => Ok(Value::Num(f)),
                    _ => Err(ParseError {
                        kind: ParseErrorKind::BadLiteral,
                        offset: at,
                        expected: vec!["literal".into()],
                        message: format!("number `{s}` out of range"),
                    }),
                }
            }
            other => Err(syntax(at, &["literal"], &other)),
        }
    }

    fn time_of_day(&mut self) -> Result<TimeOfDay, ParseError> {
        let at = self.offset();
        let bad = |msg: String| ParseError {
            kind: ParseErrorKind::BadTime,
            offset: at,
            expected: vec!["HH:MM".into()],
            message: msg,
        };
        let two_digits = |t: Tok| match t {
            Tok::Number(s) if s.len() == 2 && s.bytes().all(|b| b.is_ascii_digit()) => s.parse::<u8>().ok(),
            _ => None,
        };
        let h = two_digits(self.bump().1);
        if *self.peek() != Tok::Colon {
            return Err(bad("malformed time, expected HH:MM".into()));
        }
        self.bump();
        let m = two_digits(self.bump().1);
        match (h, m) {
            (Some(h), Some(m)) => TimeOfDay::new(h, m).ok_or_else(|| bad(format!("time {h:02}:{m:02} out of range"))),
            _ => Err(bad("malformed time, expected HH:MM".into())),
        }
    }
}

pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let q = p.or_expr()?;
    match p.peek() {
        Tok::Eof => Ok(q),
        t => Err(syntax(p.offset(), &["AND", "OR", "end of input"], t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(k: &str, cmp: Cmp, v: impl Into<Value>) -> Query {
        Query::pred(Predicate::Key {
            key: k.into(),
            cmp,
            literal: v.into(),
        })
    }

    #[test]
    fn congestion_query() {
        let q = parse_query("COUNT(person) >= 10 AND TIME IN [22:00,06:00]").unwrap();
        let expect = Query::and(
            Query::pred(Predicate::Count {
                class: ObjectClass::Person,
                cmp: Cmp::Ge,
                n: 10,
            }),
            Query::pred(Predicate::Time {
                range: DailyInterval::new("22:00".parse().unwrap(), "06:00".parse().unwrap()),
            }),
        );
        assert_eq!(q, expect);
    }

    #[test]
    fn single_predicate() {
        assert_eq!(parse_query("speed > 200").unwrap(), key("speed", Cmp::Gt, 200));
        assert_eq!(parse_query("speed>2.5e1").unwrap(), key("speed", Cmp::Gt, 25.0));
        assert_eq!(parse_query("event = \"congestion\"").unwrap(), key("event", Cmp::Eq, "congestion"));
        assert_eq!(parse_query("pos_x <= -3").unwrap(), key("pos_x", Cmp::Le, -3));
    }

    #[test]
    fn precedence() {
        let (a, b, c) = (key("a", Cmp::Eq, 1), key("b", Cmp::Eq, 2), key("c", Cmp::Eq, 3));
        assert_eq!(
            parse_query("a = 1 OR b = 2 AND c = 3").unwrap(),
            Query::or(a.clone(), Query::and(b.clone(), c.clone()))
        );
        assert_eq!(
            parse_query("(a = 1 OR b = 2) AND c = 3").unwrap(),
            Query::and(Query::or(a.clone(), b.clone()), c.clone())
        );
        assert_eq!(
            parse_query("NOT a = 1 AND b = 2").unwrap(),
            Query::and(Query::not(a.clone()), b.clone())
        );
        assert_eq!(
            parse_query("a = 1 or b = 2 or c = 3").unwrap(),
            Query::or(Query::or(a, b), c)
        );
    }

    #[test]
    fn keywords_case_insensitive() {
        let q = parse_query("count(vehicle) > 0 and not camera in {cam1, cam2}").unwrap();
        assert_eq!(q.to_string(), "COUNT(vehicle) > 0 AND NOT CAMERA IN {cam1,cam2}");
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_query("speed >> 200").unwrap_err();
        assert_eq!((e.kind, e.offset), (ParseErrorKind::Syntax, 7));
        assert_eq!(e.expected, vec!["literal"]);

        let e = parse_query("COUNT(dog) > 1").unwrap_err();
        assert_eq!((e.kind, e.offset), (ParseErrorKind::UnknownClass, 6));

        let e = parse_query("TIME IN [25:00,06:00]").unwrap_err();
        assert_eq!((e.kind, e.offset), (ParseErrorKind::BadTime, 9));
        let e = parse_query("TIME IN [7:00,06:00]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadTime);

        let e = parse_query("speed > 1 AND").unwrap_err();
        assert_eq!(e.offset, 13);
        assert!(e.expected.contains(&"COUNT".to_string()));

        let e = parse_query("(speed > 1").unwrap_err();
        assert_eq!(e.offset, 10);

        let e = parse_query("speed > 1 speed").unwrap_err();
        assert_eq!(e.offset, 10);

        assert!(parse_query("time = 3").is_err());
        assert!(parse_query("").is_err());
        assert!(parse_query("a = \"open").is_err());
        assert!(parse_query("NOT NOT a = 1").is_err());
    }

    #[test]
    fn printer_parenthesizes_minimally() {
        for src in [
            "a = 1 OR b = 2 AND c = 3",
            "(a = 1 OR b = 2) AND c = 3",
            "a = 1 OR (b = 2 OR c = 3)",
            "a = 1 OR b = 2 OR c = 3",
            "NOT (a = 1 AND b = 2)",
            "NOT (NOT a = 1)",
            "name != \"a \\\"q\\\"\"",
            "x < 0.5",
        ] {
            let q = parse_query(src).unwrap();
            assert_eq!(q.to_string(), src);
            assert_eq!(parse_query(&q.to_string()).unwrap(), q);
        }
    }
}
