//! Surface syntax of λ^req.
//!
//! ```text
//! expr   ::= app [ ";" expr ]
//! app    ::= simple { simple } [ open ] | open
//! open   ::= "if" guard "then" expr "else" expr
//!          | "fun" var "(" var [":" ty] ")" [":" ty] "=" expr
//!          | "\" var [":" ty] "->" expr
//! simple ::= "*" | RESOURCE | var | action "(" expr ")" | "(" expr ")"
//!          | "sec" STRING "{" expr "}"
//!          | "met" METRIC ("<=" | ">=") value "{" expr "}"
//!          | "req" id ":" ty "->" ty [ "{" annot { "," annot } "}" ]
//!          | "fork" "{" expr "}" "and" "{" expr "}"
//! annot  ::= "sec" STRING | "met" METRIC ("<=" | ">=") value
//! ty     ::= "unit" | DOMAIN
//! ```
//!
//! Identifiers starting with an uppercase letter are resources (or domain
//! names in type position); lowercase ones are variables, actions, guards
//! and request ids. An identifier written *immediately* before `(` is an
//! access event; application needs whitespace: `f (x)`. Comments run from
//! `//` to end of line.

use std::fmt;

use crate::lang::ast::{Expr, Lambda, Request, TypeAnn};
use crate::semiring::{MetricCheck, Notation, Semiring};
use crate::Name;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Star,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Colon,
    Comma,
    Arrow,
    Backslash,
    Equals,
    Le,
    Ge,
    Str(String),
    Num(String),
    /// identifier; `true` when immediately followed by `(`
    Ident(String, bool),
    Infinity,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Star => f.write_str("`*`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Backslash => f.write_str("`\\`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Ident(s, _) => write!(f, "`{s}`"),
            Tok::Infinity => f.write_str("`∞`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "if", "then", "else", "fun", "sec", "met", "req", "fork", "and", "unit",
];

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ParseError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let simple = match two.as_str() {
            "->" => Some((Tok::Arrow, 2)),
            "<=" => Some((Tok::Le, 2)),
            ">=" => Some((Tok::Ge, 2)),
            _ => match c {
                '*' => Some((Tok::Star, 1)),
                '(' => Some((Tok::LParen, 1)),
                ')' => Some((Tok::RParen, 1)),
                '{' => Some((Tok::LBrace, 1)),
                '}' => Some((Tok::RBrace, 1)),
                ';' => Some((Tok::Semi, 1)),
                ':' => Some((Tok::Colon, 1)),
                ',' => Some((Tok::Comma, 1)),
                '\\' | 'λ' => Some((Tok::Backslash, 1)),
                '=' => Some((Tok::Equals, 1)),
                '∞' => Some((Tok::Infinity, 1)),
                _ => None,
            },
        };
        if let Some((tok, n)) = simple {
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            });
            advance(n, &mut i, &mut col);
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(err(tl, tc, "unterminated string".into()));
            }
            let s: String = chars[start..j].iter().collect();
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                col: tc,
            });
            let n = j + 1 - i;
            advance(n, &mut i, &mut col);
            continue;
        }
        if c == '#' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            out.push(Token {
                tok: Tok::Num(s),
                line: tl,
                col: tc,
            });
            let n = j - i;
            advance(n, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            out.push(Token {
                tok: Tok::Num(s),
                line: tl,
                col: tc,
            });
            let n = j - i;
            advance(n, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            let call = chars.get(j) == Some(&'(');
            out.push(Token {
                tok: Tok::Ident(s, call),
                line: tl,
                col: tc,
            });
            let n = j - i;
            advance(n, &mut i, &mut col);
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Parses a λ^req term. Metric thresholds are interpreted in the built-in
/// semiring named by the check.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    Parser::new(src, None)?.parse_all()
}

/// Parses with `semiring` available for metric thresholds (needed for
/// finite semirings, whose literals are element names).
pub fn parse_with(src: &str, semiring: &Semiring) -> Result<Expr, ParseError> {
    Parser::new(src, Some(semiring))?.parse_all()
}

struct Parser<'s> {
    toks: Vec<Token>,
    pos: usize,
    semiring: Option<&'s Semiring>,
}

fn is_upper(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

impl<'s> Parser<'s> {
    fn new(src: &str, semiring: Option<&'s Semiring>) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            semiring,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s, _) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", self.peek()))
        }
    }

    /// A lowercase, non-keyword identifier.
    fn lower_ident(&mut self, what: &str) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s, _) if !is_upper(&s) && !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s.into())
            }
            t => self.error(format!("expected {what}, found {t}")),
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        if *self.peek() != Tok::Eof {
            return self.error(format!("unexpected {}", self.peek()));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let head = self.app()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.expr()?;
            Ok(Expr::seq(head, rest))
        } else {
            Ok(head)
        }
    }

    fn starts_simple(&self) -> bool {
        match self.peek() {
            Tok::Star | Tok::LParen => true,
            Tok::Ident(s, _) => {
                !KEYWORDS.contains(&s.as_str())
                    || matches!(s.as_str(), "sec" | "met" | "req" | "fork")
            }
            _ => false,
        }
    }

    fn starts_open(&self) -> bool {
        matches!(self.peek(), Tok::Backslash) || self.is_keyword("if") || self.is_keyword("fun")
    }

    fn app(&mut self) -> Result<Expr, ParseError> {
        let mut items = Vec::new();
        loop {
            if self.starts_simple() {
                items.push(self.simple()?);
            } else if self.starts_open() {
                items.push(self.open()?);
                break;
            } else {
                break;
            }
        }
        let mut it = items.into_iter();
        let Some(first) = it.next() else {
            return self.error(format!("expected an expression, found {}", self.peek()));
        };
        Ok(it.fold(first, Expr::app))
    }

    fn ty(&mut self) -> Result<TypeAnn, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s, _) if s == "unit" => {
                self.bump();
                Ok(TypeAnn::Unit)
            }
            Tok::Ident(s, _) if is_upper(&s) => {
                self.bump();
                Ok(TypeAnn::Dom(s.into()))
            }
            t => self.error(format!("expected a type, found {t}")),
        }
    }

    fn opt_ty(&mut self) -> Result<Option<TypeAnn>, ParseError> {
        if *self.peek() == Tok::Colon {
            self.bump();
            Ok(Some(self.ty()?))
        } else {
            Ok(None)
        }
    }

    fn open(&mut self) -> Result<Expr, ParseError> {
        if self.is_keyword("if") {
            self.bump();
            let guard = self.lower_ident("a guard name")?;
            self.expect_keyword("then")?;
            let t = self.expr()?;
            self.expect_keyword("else")?;
            let e = self.expr()?;
            return Ok(Expr::If {
                guard,
                then_branch: Box::new(t),
                else_branch: Box::new(e),
            });
        }
        if self.is_keyword("fun") {
            self.bump();
            let self_name = self.lower_ident("a function name")?;
            self.expect(Tok::LParen)?;
            let param = self.lower_ident("a parameter name")?;
            let param_ty = self.opt_ty()?;
            self.expect(Tok::RParen)?;
            let ret_ty = self.opt_ty()?;
            self.expect(Tok::Equals)?;
            let body = self.expr()?;
            return Ok(Expr::Abs(Lambda {
                self_name: Some(self_name),
                param,
                param_ty,
                ret_ty,
                body: Box::new(body),
            }));
        }
        self.expect(Tok::Backslash)?;
        let param = self.lower_ident("a parameter name")?;
        let param_ty = self.opt_ty()?;
        self.expect(Tok::Arrow)?;
        let body = self.expr()?;
        Ok(Expr::Abs(Lambda {
            self_name: None,
            param,
            param_ty,
            ret_ty: None,
            body: Box::new(body),
        }))
    }

    fn braced(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LBrace)?;
        let e = self.expr()?;
        self.expect(Tok::RBrace)?;
        Ok(e)
    }

    fn policy_name(&mut self) -> Result<Name, ParseError> {
        match self.bump() {
            Tok::Str(s) => Ok(s.into()),
            t => {
                self.pos -= 1;
                self.error(format!("expected a policy name string, found {t}"))
            }
        }
    }

    fn metric_check(&mut self) -> Result<MetricCheck, ParseError> {
        let metric = match self.peek().clone() {
            Tok::Ident(s, _) => {
                self.bump();
                s
            }
            t => return self.error(format!("expected a metric name, found {t}")),
        };
        let notation = match self.peek() {
            Tok::Le => Notation::AtMost,
            Tok::Ge => Notation::AtLeast,
            t => return self.error(format!("expected `<=` or `>=`, found {t}")),
        };
        self.bump();
        let literal = match self.peek().clone() {
            Tok::Num(n) => n,
            Tok::Infinity => "inf".into(),
            Tok::Ident(s, _) => s,
            t => return self.error(format!("expected a metric value, found {t}")),
        };
        let semiring = match self.semiring {
            Some(s) if s.name().eq_ignore_ascii_case(&metric) => s.clone(),
            _ => match Semiring::builtin(&metric) {
                Ok(s) => s,
                Err(_) => return self.error(format!("unknown metric `{metric}`")),
            },
        };
        let threshold = match semiring.parse_value(&literal) {
            Ok(v) => v,
            Err(e) => return self.error(e.to_string()),
        };
        self.bump();
        Ok(MetricCheck::new(threshold, notation))
    }

    fn simple(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Star => {
                self.bump();
                Ok(Expr::Unit)
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s, _) if s == "sec" => {
                self.bump();
                let policy = self.policy_name()?;
                let body = self.braced()?;
                Ok(Expr::Sec {
                    policy,
                    body: Box::new(body),
                })
            }
            Tok::Ident(s, _) if s == "met" => {
                self.bump();
                let check = self.metric_check()?;
                let body = self.braced()?;
                Ok(Expr::Met {
                    check,
                    body: Box::new(body),
                })
            }
            Tok::Ident(s, _) if s == "fork" => {
                self.bump();
                let a = self.braced()?;
                self.expect_keyword("and")?;
                let b = self.braced()?;
                Ok(Expr::fork(a, b))
            }
            Tok::Ident(s, _) if s == "req" => {
                self.bump();
                self.request()
            }
            Tok::Ident(s, _) if is_upper(&s) => {
                self.bump();
                Ok(Expr::Res(s.into()))
            }
            Tok::Ident(s, call) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                if call {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::event(&s, arg))
                } else {
                    Ok(Expr::Var(s.into()))
                }
            }
            t => self.error(format!("expected an expression, found {t}")),
        }
    }

    fn request(&mut self) -> Result<Expr, ParseError> {
        let id = self.lower_ident("a request id")?;
        self.expect(Tok::Colon)?;
        let input = self.ty()?;
        self.expect(Tok::Arrow)?;
        let output = self.ty()?;
        let mut req = Request {
            id,
            input,
            output,
            policy: None,
            check: None,
        };
        if *self.peek() == Tok::LBrace {
            self.bump();
            loop {
                if self.is_keyword("sec") && req.policy.is_none() {
                    self.bump();
                    req.policy = Some(self.policy_name()?);
                } else if self.is_keyword("met") && req.check.is_none() {
                    self.bump();
                    req.check = Some(self.metric_check()?);
                } else {
                    return self.error(format!(
                        "expected a request annotation, found {}",
                        self.peek()
                    ));
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
        }
        Ok(Expr::Req(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit() {
        assert_eq!(parse("*").unwrap(), Expr::Unit);
    }

    #[test]
    fn event_versus_application() {
        assert_eq!(
            parse("sign_64(x)").unwrap(),
            Expr::event("sign_64", Expr::var("x"))
        );
        assert_eq!(
            parse("f (x)").unwrap(),
            Expr::app(Expr::var("f"), Expr::var("x"))
        );
        assert_eq!(
            parse("f x y").unwrap(),
            Expr::app(Expr::app(Expr::var("f"), Expr::var("x")), Expr::var("y"))
        );
    }

    #[test]
    fn metric_frame() {
        let e = parse("met RISK <= 75 { * }").unwrap();
        let s = Semiring::risk();
        let check = MetricCheck::new(s.value(75.0).unwrap(), Notation::AtMost);
        assert_eq!(e, Expr::met(check, Expr::Unit));
    }

    #[test]
    fn sequencing_is_right_nested_and_if_extends() {
        let e = parse("a(X); if g then b(X); Y else Z").unwrap();
        let expected = Expr::seq(
            Expr::event("a", Expr::res("X")),
            Expr::if_(
                "g",
                Expr::seq(Expr::event("b", Expr::res("X")), Expr::res("Y")),
                Expr::res("Z"),
            ),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn request_with_annotations() {
        let e = parse("(req rho : Airport -> Flight { sec \"p\", met RISK <= 10 }) AIRPORT").unwrap();
        let Expr::App(f, _) = e else { panic!() };
        let Expr::Req(r) = *f else { panic!() };
        assert_eq!(&*r.id, "rho");
        assert_eq!(r.policy.as_deref(), Some("p"));
        assert!(r.check.is_some());
    }

    #[test]
    fn errors_carry_location() {
        let err = parse("fun z(x) =\n  ( a(X)").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("expected `)`"), "{err}");
        assert!(parse("_g#1").is_err());
        assert!(parse("\\_g#1 -> *").is_err());
        assert!(parse("met NOPE <= 1 { * }").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(parse("// hello\n*  // there").unwrap(), Expr::Unit);
    }
}
