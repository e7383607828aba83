//! Hand-rolled lexer with line/column tracking. String literals support
//! `\n`, `\t`, `\r`, `\"`, `\\` and `\xNN` escapes; `//` comments run to
//! end of line.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Semi,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Dot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub fn lex(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            out.push(Token {
                tok: $tok,
                line,
                col,
            });
            i += $len;
            col += $len as u32;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b';' => push!(Tok::Semi, 1),
            b'(' => push!(Tok::LParen, 1),
            b')' => push!(Tok::RParen, 1),
            b'{' => push!(Tok::LBrace, 1),
            b'}' => push!(Tok::RBrace, 1),
            b'[' => push!(Tok::LBracket, 1),
            b']' => push!(Tok::RBracket, 1),
            b',' => push!(Tok::Comma, 1),
            b'.' => push!(Tok::Dot, 1),
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::EqEq, 2);
                } else {
                    push!(Tok::Assign, 1);
                }
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::NotEq, 2);
                } else {
                    return Err(SyntaxError {
                        line,
                        col,
                        expected: "'=' after '!'".into(),
                    });
                }
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Le, 2);
                } else {
                    push!(Tok::Lt, 1);
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Ge, 2);
                } else {
                    push!(Tok::Gt, 1);
                }
            }
            b'"' => {
                let start_line = line;
                let start_col = col;
                let mut s = String::new();
                let mut j = i + 1;
                let mut jcol = col + 1;
                loop {
                    match bytes.get(j) {
                        None | Some(b'\n') => {
                            return Err(SyntaxError {
                                line: start_line,
                                col: start_col,
                                expected: "closing '\"'".into(),
                            })
                        }
                        Some(b'"') => {
                            j += 1;
                            break;
                        }
                        Some(b'\\') => {
                            let escaped = bytes.get(j + 1).copied();
                            match escaped {
                                Some(b'n') => s.push('\n'),
                                Some(b't') => s.push('\t'),
                                Some(b'r') => s.push('\r'),
                                Some(b'"') => s.push('"'),
                                Some(b'\\') => s.push('\\'),
                                Some(b'x') => {
                                    let hex: Option<u32> = bytes
                                        .get(j + 2)
                                        .zip(bytes.get(j + 3))
                                        .and_then(|(a, b)| {
                                            let hi = (*a as char).to_digit(16)?;
                                            let lo = (*b as char).to_digit(16)?;
                                            Some(hi * 16 + lo)
                                        });
                                    match hex.and_then(char::from_u32) {
                                        Some(ch) => {
                                            s.push(ch);
                                            j += 2;
                                            jcol += 2;
                                        }
                                        None => {
                                            return Err(SyntaxError {
                                                line,
                                                col: jcol,
                                                expected: "two hex digits after \\x".into(),
                                            })
                                        }
                                    }
                                }
                                _ => {
                                    return Err(SyntaxError {
                                        line,
                                        col: jcol,
                                        expected: "valid escape".into(),
                                    })
                                }
                            }
                            j += 2;
                            jcol += 2;
                        }
                        Some(other) => {
                            s.push(*other as char);
                            j += 1;
                            jcol += 1;
                        }
                    }
                }
                out.push(Token {
                    tok: Tok::Str(s),
                    line: start_line,
                    col: start_col,
                });
                col += (j - i) as u32;
                i = j;
            }
            b'0'..=b'9' | b'-' => {
                if c == b'-' && !bytes.get(i + 1).map(u8::is_ascii_digit).unwrap_or(false) {
                    return Err(SyntaxError {
                        line,
                        col,
                        expected: "digits after '-'".into(),
                    });
                }
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text = &source[start..j];
                let value: i64 = text.parse().map_err(|_| SyntaxError {
                    line,
                    col,
                    expected: "integer within 64 bits".into(),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    line,
                    col,
                });
                col += (j - i) as u32;
                i = j;
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(source[start..j].to_string()),
                    line,
                    col,
                });
                col += (j - i) as u32;
                i = j;
            }
            other => {
                return Err(SyntaxError {
                    line,
                    col,
                    expected: format!("token, found {:?}", other as char),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_statement_with_escapes() {
        let toks = lex("echo \"a\\x17b\\n\";").unwrap();
        assert_eq!(toks.len(), 3);
        match &toks[1].tok {
            Tok::Str(s) => assert_eq!(s.as_bytes(), b"a\x17b\n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tracks_lines() {
        let toks = lex("echo 1;\n  echo 2;").unwrap();
        assert_eq!(toks[3].line, 2);
        assert_eq!(toks[3].col, 3);
    }

    #[test]
    fn comments_are_skipped() {
        let toks = lex("// nothing\necho 1;").unwrap();
        assert!(matches!(toks[0].tok, Tok::Ident(ref s) if s == "echo"));
    }

    #[test]
    fn negative_integers_lex() {
        let toks = lex("x = -42;").unwrap();
        assert!(matches!(toks[2].tok, Tok::Int(-42)));
        assert!(lex("x = -;").is_err());
    }
}
