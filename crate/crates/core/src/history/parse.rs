//! Reader for the rendering produced by `Display for HistExpr`.
//!
//! ```text
//! h     ::= par { "+" par }
//! par   ::= seq { "|" seq }
//! seq   ::= atom { "·" atom }
//! atom  ::= "ε" | var | action "(" RES ")" | "(" h ")"
//!         | "ℳ[" value "]" atom | policy "[" h "]"
//!         | METRIC ("<=" | ">=") value "⟨" h "⟩" | "μ" var "." "(" h ")"
//! ```
//!
//! ASCII spellings are accepted too: `eps`, `.`, `M[d]`, `<`/`>` for the
//! metric brackets and `mu h.(...)`.

use super::HistExpr;
use crate::semiring::{MetricCheck, Notation, Semiring};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("history expression, offset {offset}: {message}")]
pub struct HistParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Eps,
    Dot,
    Plus,
    Bar,
    Ann,
    LBrack,
    RBrack,
    LAngle,
    RAngle,
    LParen,
    RParen,
    Mu,
    Le,
    Ge,
    Word(String),
    Eof,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, HistParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        let next = chars.get(i + 1).map(|p| p.1);
        let single = match c {
            'ε' => Some(Tok::Eps),
            '·' | '.' => Some(Tok::Dot),
            '+' => Some(Tok::Plus),
            '|' => Some(Tok::Bar),
            'ℳ' => Some(Tok::Ann),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            '⟨' => Some(Tok::LAngle),
            '⟩' => Some(Tok::RAngle),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            'μ' => Some(Tok::Mu),
            '<' if next == Some('=') => {
                out.push((Tok::Le, off));
                i += 2;
                continue;
            }
            '>' if next == Some('=') => {
                out.push((Tok::Ge, off));
                i += 2;
                continue;
            }
            '<' => Some(Tok::LAngle),
            '>' => Some(Tok::RAngle),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, off));
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' || c == '#' || c == '∞' {
            let mut j = i;
            // a word may contain one decimal point between digits
            while j < chars.len() {
                let ch = chars[j].1;
                let decimal = ch == '.'
                    && j > i
                    && chars[j - 1].1.is_ascii_digit()
                    && chars.get(j + 1).is_some_and(|p| p.1.is_ascii_digit());
                if ch.is_ascii_alphanumeric() || ch == '_' || ch == '#' || ch == '∞' || decimal {
                    j += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[i..j].iter().map(|p| p.1).collect();
            let tok = match word.as_str() {
                "eps" => Tok::Eps,
                "mu" => Tok::Mu,
                "M" if chars.get(j).map(|p| p.1) == Some('[') => Tok::Ann,
                _ => Tok::Word(word),
            };
            out.push((tok, off));
            i = j;
            continue;
        }
        return Err(HistParseError {
            offset: off,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

/// Parses a history expression; annotation values and thresholds are read
/// in `semiring`.
pub fn parse_hist(src: &str, semiring: &Semiring) -> Result<HistExpr, HistParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        semiring,
    };
    let h = p.choice()?;
    if p.peek() != &Tok::Eof {
        return p.fail(format!("unexpected {:?}", p.peek()));
    }
    Ok(h)
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    semiring: &'s Semiring,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, message: String) -> Result<T, HistParseError> {
        Err(HistParseError {
            offset: self.toks[self.pos].1,
            message,
        })
    }

    fn expect(&mut self, t: Tok) -> Result<(), HistParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {t:?}, found {:?}", self.peek()))
        }
    }

    fn choice(&mut self) -> Result<HistExpr, HistParseError> {
        let mut h = self.par()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            h = HistExpr::Choice(Box::new(h), Box::new(self.par()?));
        }
        Ok(h)
    }

    fn par(&mut self) -> Result<HistExpr, HistParseError> {
        let mut h = self.seq()?;
        while *self.peek() == Tok::Bar {
            self.bump();
            h = HistExpr::Par(Box::new(h), Box::new(self.seq()?));
        }
        Ok(h)
    }

    fn seq(&mut self) -> Result<HistExpr, HistParseError> {
        let mut h = self.atom()?;
        while *self.peek() == Tok::Dot {
            self.bump();
            h = HistExpr::Seq(Box::new(h), Box::new(self.atom()?));
        }
        Ok(h)
    }

    fn word(&mut self) -> Result<String, HistParseError> {
        match self.bump() {
            Tok::Word(w) => Ok(w),
            t => {
                self.pos -= 1;
                self.fail(format!("expected a name, found {t:?}"))
            }
        }
    }

    fn value(&mut self) -> Result<crate::semiring::MetricValue, HistParseError> {
        let w = self.word()?;
        self.semiring.parse_value(&w).or_else(|e| {
            self.pos -= 1;
            self.fail(e.to_string())
        })
    }

    fn atom(&mut self) -> Result<HistExpr, HistParseError> {
        match self.bump() {
            Tok::Eps => Ok(HistExpr::Empty),
            Tok::LParen => {
                let h = self.choice()?;
                self.expect(Tok::RParen)?;
                Ok(h)
            }
            Tok::Ann => {
                self.expect(Tok::LBrack)?;
                let d = self.value()?;
                self.expect(Tok::RBrack)?;
                let h = self.atom()?;
                Ok(HistExpr::Ann(d, Box::new(h)))
            }
            Tok::Mu => {
                let v = self.word()?;
                self.expect(Tok::Dot)?;
                self.expect(Tok::LParen)?;
                let body = self.choice()?;
                self.expect(Tok::RParen)?;
                Ok(HistExpr::Mu(v.into(), Box::new(body)))
            }
            Tok::Word(w) => match self.peek().clone() {
                Tok::LParen => {
                    self.bump();
                    let r = self.word()?;
                    self.expect(Tok::RParen)?;
                    Ok(HistExpr::ev(&w, &r))
                }
                Tok::LBrack => {
                    self.bump();
                    let h = self.choice()?;
                    self.expect(Tok::RBrack)?;
                    Ok(HistExpr::Sec(w.into(), Box::new(h)))
                }
                t @ (Tok::Le | Tok::Ge) => {
                    self.bump();
                    if !self.semiring.name().eq_ignore_ascii_case(&w) {
                        return self.fail(format!("metric `{w}` is not `{}`", self.semiring.name()));
                    }
                    let d = self.value()?;
                    let notation = if t == Tok::Le { Notation::AtMost } else { Notation::AtLeast };
                    self.expect(Tok::LAngle)?;
                    let h = self.choice()?;
                    self.expect(Tok::RAngle)?;
                    Ok(HistExpr::Met(MetricCheck::new(d, notation), Box::new(h)))
                }
                _ => Ok(HistExpr::Var(w.into())),
            },
            t => {
                self.pos -= 1;
                self.fail(format!("unexpected {t:?}"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_its_own_rendering() {
        let r = Semiring::risk();
        for src in [
            "ε",
            "ℳ[0] search_flight_for(AIRPORT) · (ℳ[15] reserve(FLIGHT_No) + ℳ[0] reserve(NO_FLIGHT))",
            "(RISK<=75⟨a(X)⟩ | RISK<=75⟨b(Y)⟩) · RISK<=75⟨μh.(ε + (ℳ[1] c(D) + ℳ[0] d(D)) · h)⟩",
            "noOB[a(X) · (b(Y) · c(Z))]",
            "ℳ[∞] (a(X) | b(Y))",
            "ℳ[0.5] a(X)",
        ] {
            let h = parse_hist(src, &r).unwrap();
            assert_eq!(h.to_string(), src);
        }
    }

    #[test]
    fn ascii_spelling() {
        let r = Semiring::risk();
        let a = parse_hist("mu h.(eps + M[1] a(X) . h)", &r).unwrap();
        let b = parse_hist("μh.(ε + ℳ[1] a(X) · h)", &r).unwrap();
        assert_eq!(a, b);
        let m = parse_hist("RISK<=75<a(X)>", &r).unwrap();
        assert!(matches!(m, HistExpr::Met(..)));
    }

    #[test]
    fn errors() {
        let r = Semiring::risk();
        assert!(parse_hist("a(X", &r).is_err());
        assert!(parse_hist("TRUST>=0.5⟨ε⟩", &r).is_err());
        assert!(parse_hist("ℳ[-1] ε", &r).is_err());
        assert!(parse_hist("a(X) $", &r).is_err());
    }
}
