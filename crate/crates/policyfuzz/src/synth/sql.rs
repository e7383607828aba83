//! Recursive-descent parser for the supported SQL subset:
//!
//! ```text
//! query      := select ( ("UNION" | "INTERSECT") select )* [ "LIMIT" n ]
//! select     := "SELECT" projection "FROM" ident [ "WHERE" or_expr ]
//! projection := "*" | "COUNT" "(" field ")" | item ("," item)*
//! item       := field [ "AS" ident ]
//! or_expr    := and_expr ( "OR" and_expr )*
//! and_expr   := not_expr ( "AND" not_expr )*
//! not_expr   := "NOT" not_expr | "(" or_expr ")" | operand op operand
//! operand    := field | integer | 'string' | TRUE | FALSE
//! field      := ident [ "." ident ]
//! op         := = | != | <> | < | <= | > | >=
//! ```
//!
//! Anything else (DDL, JOINs, subqueries, other aggregates) is rejected.

use thiserror::Error;

use super::constraints::{CmpOp, ConstraintAtom, ConstraintFormula, ConstraintVar};
use super::relalg::{FieldRef, ProjectionItem, RelAlgExpr};
use super::ConcreteValue;

#[derive(Debug, Error)]
#[error("unsupported SQL ({detail}): {query}")]
pub struct SqlError {
    pub query: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Star,
    Comma,
    Dot,
    LParen,
    RParen,
    Op(CmpOp),
}

fn lex(query: &str) -> Result<Vec<Tok>, String> {
    let bytes = query.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            b',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            b'.' => {
                toks.push(Tok::Dot);
                i += 1;
            }
            b'(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            b')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            b'=' => {
                toks.push(Tok::Op(CmpOp::Eq));
                i += 1;
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::Op(CmpOp::Ne));
                    i += 2;
                } else {
                    return Err("stray '!'".into());
                }
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    toks.push(Tok::Op(CmpOp::Le));
                    i += 2;
                }
                Some(b'>') => {
                    toks.push(Tok::Op(CmpOp::Ne));
                    i += 2;
                }
                _ => {
                    toks.push(Tok::Op(CmpOp::Lt));
                    i += 1;
                }
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::Op(CmpOp::Ge));
                    i += 2;
                } else {
                    toks.push(Tok::Op(CmpOp::Gt));
                    i += 1;
                }
            }
            b'\'' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != b'\'' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err("unterminated string literal".into());
                }
                toks.push(Tok::Str(query[start..j].to_string()));
                i = j + 1;
            }
            b'0'..=b'9' | b'-' => {
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text = &query[start..j];
                let value: i64 = text.parse().map_err(|_| format!("bad integer {text:?}"))?;
                toks.push(Tok::Int(value));
                i = j;
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                toks.push(Tok::Ident(query[start..j].to_string()));
                i = j;
            }
            _ => return Err(format!("unexpected character {:?}", c as char)),
        }
    }
    Ok(toks)
}

struct Parser<'q> {
    query: &'q str,
    toks: Vec<Tok>,
    pos: usize,
}

impl<'q> Parser<'q> {
    fn err(&self, detail: impl Into<String>) -> SqlError {
        SqlError {
            query: self.query.to_string(),
            detail: detail.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected {kw}")))
        }
    }

    fn expect_ident(&mut self) -> Result<String, SqlError> {
        match self.next() {
            Some(Tok::Ident(s)) if !is_reserved(&s) => Ok(s),
            _ => Err(self.err("expected identifier")),
        }
    }

    fn parse_query(&mut self) -> Result<RelAlgExpr, SqlError> {
        let mut expr = self.parse_select()?;
        loop {
            if self.eat_keyword("UNION") {
                let rhs = self.parse_select()?;
                expr = RelAlgExpr::Union {
                    left: Box::new(expr),
                    right: Box::new(rhs),
                };
            } else if self.eat_keyword("INTERSECT") {
                let rhs = self.parse_select()?;
                expr = RelAlgExpr::Intersect {
                    left: Box::new(expr),
                    right: Box::new(rhs),
                };
            } else {
                break;
            }
        }
        if self.eat_keyword("LIMIT") {
            let max = match self.next() {
                Some(Tok::Int(n)) if n >= 0 => n as u64,
                _ => return Err(self.err("LIMIT expects a non-negative integer")),
            };
            expr = RelAlgExpr::Limit {
                max,
                input: Box::new(expr),
            };
        }
        if self.pos != self.toks.len() {
            return Err(self.err("trailing tokens"));
        }
        Ok(expr)
    }

    fn parse_select(&mut self) -> Result<RelAlgExpr, SqlError> {
        self.expect_keyword("SELECT")?;
        enum Proj {
            Wildcard,
            Count(String, Option<String>),
            /// `(qualifier, field, alias)` triples.
            Items(Vec<(Option<String>, String, Option<String>)>),
        }
        let proj = if matches!(self.peek(), Some(Tok::Star)) {
            self.pos += 1;
            Proj::Wildcard
        } else if self.peek_keyword("COUNT") {
            self.pos += 1;
            if self.next() != Some(Tok::LParen) {
                return Err(self.err("COUNT expects '('"));
            }
            let (table, field) = self.parse_field_name()?;
            if self.next() != Some(Tok::RParen) {
                return Err(self.err("COUNT expects ')'"));
            }
            if matches!(self.peek(), Some(Tok::Comma)) {
                return Err(self.err("COUNT cannot be mixed with other projection items"));
            }
            Proj::Count(field, table)
        } else {
            let mut items = Vec::new();
            loop {
                let (table, field) = self.parse_field_name()?;
                let alias = if self.eat_keyword("AS") {
                    Some(self.expect_ident()?.to_ascii_lowercase())
                } else {
                    None
                };
                items.push((table, field, alias));
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            Proj::Items(items)
        };
        self.expect_keyword("FROM")?;
        let table = self.expect_ident()?.to_ascii_lowercase();
        let mut expr = RelAlgExpr::BaseTable {
            name: table.clone(),
        };
        if self.eat_keyword("WHERE") {
            let condition = self.parse_or(&table)?;
            expr = RelAlgExpr::Select {
                condition,
                input: Box::new(expr),
            };
        }
        match proj {
            Proj::Wildcard => {}
            Proj::Count(field, qualifier) => {
                let fr = FieldRef::new(qualifier.as_deref().unwrap_or(&table), &field);
                expr = RelAlgExpr::Project {
                    items: vec![ProjectionItem::Count(fr)],
                    input: Box::new(expr),
                };
            }
            Proj::Items(items) => {
                let mut proj_items = Vec::new();
                let mut renames = Vec::new();
                for (qualifier, field, alias) in items {
                    let fr = FieldRef::new(qualifier.as_deref().unwrap_or(&table), &field);
                    if let Some(alias) = alias {
                        renames.push((fr.field.clone(), alias));
                    }
                    proj_items.push(ProjectionItem::Field(fr));
                }
                expr = RelAlgExpr::Project {
                    items: proj_items,
                    input: Box::new(expr),
                };
                if !renames.is_empty() {
                    expr = RelAlgExpr::Rename {
                        mappings: renames,
                        input: Box::new(expr),
                    };
                }
            }
        }
        Ok(expr)
    }

    fn parse_field_name(&mut self) -> Result<(Option<String>, String), SqlError> {
        let first = self.expect_ident()?;
        if matches!(self.peek(), Some(Tok::Dot)) {
            self.pos += 1;
            let second = self.expect_ident()?;
            Ok((
                Some(first.to_ascii_lowercase()),
                second.to_ascii_lowercase(),
            ))
        } else {
            Ok((None, first.to_ascii_lowercase()))
        }
    }

    fn parse_or(&mut self, table: &str) -> Result<ConstraintFormula, SqlError> {
        let mut parts = vec![self.parse_and(table)?];
        while self.eat_keyword("OR") {
            parts.push(self.parse_and(table)?);
        }
        Ok(ConstraintFormula::or(parts))
    }

    fn parse_and(&mut self, table: &str) -> Result<ConstraintFormula, SqlError> {
        let mut parts = vec![self.parse_not(table)?];
        while self.eat_keyword("AND") {
            parts.push(self.parse_not(table)?);
        }
        Ok(ConstraintFormula::and(parts))
    }

    fn parse_not(&mut self, table: &str) -> Result<ConstraintFormula, SqlError> {
        if self.eat_keyword("NOT") {
            return Ok(self.parse_not(table)?.negate());
        }
        if matches!(self.peek(), Some(Tok::LParen)) {
            self.pos += 1;
            let inner = self.parse_or(table)?;
            if self.next() != Some(Tok::RParen) {
                return Err(self.err("expected ')'"));
            }
            return Ok(inner);
        }
        self.parse_atom(table)
    }

    fn parse_operand(&mut self, table: &str) -> Result<Operand, SqlError> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(Operand::Lit(ConcreteValue::Int(n))),
            Some(Tok::Str(s)) => Ok(Operand::Lit(ConcreteValue::Str(s))),
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("TRUE") => {
                Ok(Operand::Lit(ConcreteValue::Bool(true)))
            }
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("FALSE") => {
                Ok(Operand::Lit(ConcreteValue::Bool(false)))
            }
            Some(Tok::Ident(s)) if !is_reserved(&s) => {
                if matches!(self.peek(), Some(Tok::Dot)) {
                    self.pos += 1;
                    let field = self.expect_ident()?;
                    Ok(Operand::Field(FieldRef::new(&s, &field)))
                } else {
                    Ok(Operand::Field(FieldRef::new(table, &s)))
                }
            }
            _ => Err(self.err("expected field or literal")),
        }
    }

    fn parse_atom(&mut self, table: &str) -> Result<ConstraintFormula, SqlError> {
        let lhs = self.parse_operand(table)?;
        let op = match self.next() {
            Some(Tok::Op(op)) => op,
            _ => return Err(self.err("expected comparison operator")),
        };
        let rhs = self.parse_operand(table)?;
        Ok(match (lhs, rhs) {
            (Operand::Field(f), Operand::Lit(v)) => ConstraintFormula::Atom(ConstraintAtom::Cmp {
                lhs: ConstraintVar::Field(f),
                op,
                rhs: v,
            }),
            (Operand::Lit(v), Operand::Field(f)) => ConstraintFormula::Atom(ConstraintAtom::Cmp {
                lhs: ConstraintVar::Field(f),
                op: op.flipped(),
                rhs: v,
            }),
            (Operand::Field(a), Operand::Field(b)) => {
                ConstraintFormula::Atom(ConstraintAtom::CmpVar {
                    lhs: ConstraintVar::Field(a),
                    op,
                    rhs: ConstraintVar::Field(b),
                })
            }
            (Operand::Lit(a), Operand::Lit(b)) => {
                // Constant-folded; mismatched literal types compare false.
                let holds = if a.value_type() == b.value_type() {
                    op.eval(&a, &b)
                } else {
                    false
                };
                if holds {
                    ConstraintFormula::True
                } else {
                    ConstraintFormula::False
                }
            }
        })
    }
}

enum Operand {
    Field(FieldRef),
    Lit(ConcreteValue),
}

fn is_reserved(word: &str) -> bool {
    const RESERVED: &[&str] = &[
        "SELECT",
        "FROM",
        "WHERE",
        "LIMIT",
        "UNION",
        "INTERSECT",
        "AND",
        "OR",
        "NOT",
        "AS",
        "COUNT",
        "TRUE",
        "FALSE",
    ];
    RESERVED.iter().any(|kw| word.eq_ignore_ascii_case(kw))
}

/// Translate a query string into a relational algebra tree.
pub fn parse_sql(query: &str) -> Result<RelAlgExpr, SqlError> {
    let toks = lex(query).map_err(|detail| SqlError {
        query: query.to_string(),
        detail,
    })?;
    let mut parser = Parser {
        query,
        toks,
        pos: 0,
    };
    let expr = parser.parse_query()?;
    debug_assert!(expr.validate());
    Ok(expr)
}

/// Conjunction along each root-to-leaf path of select conditions:
/// disjunction across union branches, conjunction across intersections.
pub fn constraints(ra: &RelAlgExpr) -> ConstraintFormula {
    match ra {
        RelAlgExpr::BaseTable { .. } => ConstraintFormula::True,
        RelAlgExpr::Select { condition, input } => {
            ConstraintFormula::and(vec![condition.clone(), constraints(input)])
        }
        RelAlgExpr::Project { input, .. }
        | RelAlgExpr::Rename { input, .. }
        | RelAlgExpr::Limit { input, .. } => constraints(input),
        RelAlgExpr::Union { left, right } => {
            ConstraintFormula::or(vec![constraints(left), constraints(right)])
        }
        RelAlgExpr::Intersect { left, right } => {
            ConstraintFormula::and(vec![constraints(left), constraints(right)])
        }
    }
}

/// Type pins implied by the tree: literal comparisons pin the field to the
/// literal's type, `COUNT(f)` pins `f` to Int.
pub fn type_pins(ra: &RelAlgExpr) -> Vec<(FieldRef, super::ValueType)> {
    let mut pins = constraints(ra).type_pins();
    fn walk(e: &RelAlgExpr, pins: &mut Vec<(FieldRef, super::ValueType)>) {
        match e {
            RelAlgExpr::Project { items, input } => {
                for item in items {
                    if let ProjectionItem::Count(f) = item {
                        if !pins.iter().any(|(existing, _)| existing == f) {
                            pins.push((f.clone(), super::ValueType::Int));
                        }
                    }
                }
                walk(input, pins);
            }
            RelAlgExpr::BaseTable { .. } => {}
            RelAlgExpr::Select { input, .. }
            | RelAlgExpr::Rename { input, .. }
            | RelAlgExpr::Limit { input, .. } => walk(input, pins),
            RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                walk(left, pins);
                walk(right, pins);
            }
        }
    }
    walk(ra, &mut pins);
    pins
}
