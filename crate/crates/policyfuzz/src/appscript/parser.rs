//! LL(1) recursive-descent parser. Statements are semicolon-terminated;
//! comparison is non-associative and binds looser than `.` concatenation.

use super::lexer::{lex, Tok, Token};
use super::{Expr, Program, RefTarget, Stmt, StmtKind, SyntaxError};
use crate::synth::CmpOp;

const KEYWORDS: &[&str] = &[
    "if",
    "else",
    "echo",
    "header",
    "session_start",
    "abort",
    "isset",
    "query",
    "fetch_row",
    "session",
    "cookie",
    "param",
    "true",
    "false",
    "null",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, expected: impl Into<String>) -> SyntaxError {
        let (line, col) = self.here();
        SyntaxError {
            line,
            col,
            expected: expected.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_is(&self, tok: &Tok) -> bool {
        self.peek() == Some(tok)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek_is(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn parse_stmts(&mut self, stop_at_brace: bool) -> Result<Vec<Stmt>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                None => {
                    if stop_at_brace {
                        return Err(self.err("'}'"));
                    }
                    return Ok(out);
                }
                Some(Tok::RBrace) if stop_at_brace => return Ok(out),
                _ => out.push(self.parse_stmt()?),
            }
        }
    }

    fn parse_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let (line, _) = self.here();
        let kind = match self.peek() {
            Some(Tok::Ident(name)) => match name.as_str() {
                "if" => return self.parse_if(),
                "echo" => {
                    self.pos += 1;
                    let expr = self.parse_expr()?;
                    self.expect(Tok::Semi, "';'")?;
                    StmtKind::Echo(expr)
                }
                "header" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    let name = self.parse_expr()?;
                    self.expect(Tok::Comma, "','")?;
                    let value = self.parse_expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    self.expect(Tok::Semi, "';'")?;
                    StmtKind::Header { name, value }
                }
                "session_start" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    self.expect(Tok::RParen, "')'")?;
                    self.expect(Tok::Semi, "';'")?;
                    StmtKind::SessionStart
                }
                "abort" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    self.expect(Tok::RParen, "')'")?;
                    self.expect(Tok::Semi, "';'")?;
                    StmtKind::Abort
                }
                _ if KEYWORDS.contains(&name.as_str()) => {
                    return Err(self.err("statement"));
                }
                _ => {
                    let name = name.clone();
                    self.pos += 1;
                    self.expect(Tok::Assign, "'=' (assignment)")?;
                    let expr = self.parse_expr()?;
                    self.expect(Tok::Semi, "';'")?;
                    StmtKind::Assign { name, expr }
                }
            },
            _ => return Err(self.err("statement")),
        };
        Ok(Stmt {
            kind,
            block: 0,
            line,
        })
    }

    fn parse_if(&mut self) -> Result<Stmt, SyntaxError> {
        let (line, _) = self.here();
        self.pos += 1; // "if"
        self.expect(Tok::LParen, "'('")?;
        let cond = self.parse_expr()?;
        self.expect(Tok::RParen, "')'")?;
        self.expect(Tok::LBrace, "'{'")?;
        let then_branch = self.parse_stmts(true)?;
        self.expect(Tok::RBrace, "'}'")?;
        let else_branch = if self.peek_keyword("else") {
            self.pos += 1;
            self.expect(Tok::LBrace, "'{'")?;
            let body = self.parse_stmts(true)?;
            self.expect(Tok::RBrace, "'}'")?;
            body
        } else {
            Vec::new()
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_branch,
                else_branch,
                then_block: 0,
                else_block: 0,
            },
            block: 0,
            line,
        })
    }

    fn parse_expr(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.parse_concat()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => Some(CmpOp::Eq),
            Some(Tok::NotEq) => Some(CmpOp::Ne),
            Some(Tok::Lt) => Some(CmpOp::Lt),
            Some(Tok::Le) => Some(CmpOp::Le),
            Some(Tok::Gt) => Some(CmpOp::Gt),
            Some(Tok::Ge) => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.parse_concat()?;
            Ok(Expr::BinCmp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            })
        } else {
            Ok(lhs)
        }
    }

    fn parse_concat(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.parse_postfix()?;
        while self.peek_is(&Tok::Dot) {
            self.pos += 1;
            let rhs = self.parse_postfix()?;
            expr = Expr::Concat(Box::new(expr), Box::new(rhs));
        }
        Ok(expr)
    }

    fn parse_postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.parse_primary()?;
        while self.peek_is(&Tok::LBracket) {
            self.pos += 1;
            let key = self.parse_expr()?;
            self.expect(Tok::RBracket, "']'")?;
            expr = Expr::Index {
                target: Box::new(expr),
                key: Box::new(key),
            };
        }
        Ok(expr)
    }

    /// `session["k"]` / `cookie["k"]` / `param["k"]` with a literal key.
    fn parse_ref_target(&mut self, kind: &str) -> Result<RefTarget, SyntaxError> {
        self.expect(Tok::LBracket, "'['")?;
        let key = match self.advance() {
            Some(Tok::Str(s)) => s,
            _ => return Err(self.err("string literal key")),
        };
        self.expect(Tok::RBracket, "']'")?;
        Ok(match kind {
            "session" => RefTarget::Session(key),
            "cookie" => RefTarget::Cookie(key),
            _ => RefTarget::Param(key),
        })
    }

    fn parse_primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Expr::LitInt(n))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::LitStr(s))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "true" => {
                    self.pos += 1;
                    Ok(Expr::LitBool(true))
                }
                "false" => {
                    self.pos += 1;
                    Ok(Expr::LitBool(false))
                }
                "null" => {
                    self.pos += 1;
                    Ok(Expr::LitNull)
                }
                "isset" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    let target = match self.peek() {
                        Some(Tok::Ident(kind))
                            if matches!(kind.as_str(), "session" | "cookie" | "param") =>
                        {
                            let kind = kind.clone();
                            self.pos += 1;
                            self.parse_ref_target(&kind)?
                        }
                        _ => return Err(self.err("session[...], cookie[...] or param[...]")),
                    };
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::IsSet(target))
                }
                "query" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    let sql = self.parse_expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::DbQuery(Box::new(sql)))
                }
                "fetch_row" => {
                    self.pos += 1;
                    self.expect(Tok::LParen, "'('")?;
                    let handle = self.parse_expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::FetchRow(Box::new(handle)))
                }
                "session" | "cookie" | "param" => {
                    let kind = name;
                    self.pos += 1;
                    let target = self.parse_ref_target(&kind)?;
                    Ok(match target {
                        RefTarget::Session(k) => Expr::SessionRef(k),
                        RefTarget::Cookie(k) => Expr::CookieRef(k),
                        RefTarget::Param(k) => Expr::ParamRef(k),
                    })
                }
                _ if KEYWORDS.contains(&name.as_str()) => Err(self.err("expression")),
                _ => {
                    self.pos += 1;
                    if self.peek_is(&Tok::LParen) {
                        self.pos += 1;
                        let mut args = Vec::new();
                        if !self.peek_is(&Tok::RParen) {
                            loop {
                                args.push(self.parse_expr()?);
                                if self.peek_is(&Tok::Comma) {
                                    self.pos += 1;
                                } else {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen, "')'")?;
                        Ok(Expr::CallInternal { name, args })
                    } else {
                        Ok(Expr::Var(name))
                    }
                }
            },
            _ => Err(self.err("expression")),
        }
    }
}

/// Parse source text into a block-numbered [`Program`].
pub fn parse_program(source: &str, source_path: &str) -> Result<Program, SyntaxError> {
    let toks = lex(source)?;
    let mut parser = Parser { toks, pos: 0 };
    let stmts = parser.parse_stmts(false)?;
    Ok(Program::from_statements(stmts, source_path.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_database_pattern() {
        let src = r#"
            res = query("SELECT * FROM A WHERE A.c = 1");
            x = fetch_row(res);
            a = x["a"];
            if (a == 0) { echo 1; }
        "#;
        let p = parse_program(src, "db.app").unwrap();
        assert_eq!(p.statements.len(), 4);
        assert!(matches!(
            &p.statements[0].kind,
            StmtKind::Assign {
                expr: Expr::DbQuery(_),
                ..
            }
        ));
    }

    #[test]
    fn parses_session_pattern() {
        let src = r#"
            session_start();
            if (isset(session["is_auth"])) { echo session["welcome_message"]; }
        "#;
        let p = parse_program(src, "sess.app").unwrap();
        assert!(matches!(p.statements[0].kind, StmtKind::SessionStart));
        match &p.statements[1].kind {
            StmtKind::If {
                cond, then_branch, ..
            } => {
                assert!(matches!(cond, Expr::IsSet(RefTarget::Session(k)) if k == "is_auth"));
                assert!(matches!(
                    &then_branch[0].kind,
                    StmtKind::Echo(Expr::SessionRef(k)) if k == "welcome_message"
                ));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_expected_token() {
        let err = parse_program("if (x == 1) { echo 1;", "t.app").unwrap_err();
        assert!(err.expected.contains('}'));
        let err = parse_program("header(\"a\" \"b\");", "t.app").unwrap_err();
        assert!(err.expected.contains(','));
    }

    #[test]
    fn keywords_cannot_be_variables() {
        assert!(parse_program("echo = 1;", "t.app").is_err());
        assert!(parse_program("echo session;", "t.app").is_err());
    }

    #[test]
    fn comparison_binds_looser_than_concat() {
        let p = parse_program("x = \"a\" . \"b\" == \"ab\";", "t.app").unwrap();
        match &p.statements[0].kind {
            StmtKind::Assign {
                expr: Expr::BinCmp { lhs, .. },
                ..
            } => {
                assert!(matches!(**lhs, Expr::Concat(_, _)));
            }
            other => panic!("{other:?}"),
        }
    }
}
