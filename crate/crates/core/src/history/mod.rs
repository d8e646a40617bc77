//! History expressions: behavioural abstractions of λ^req terms, their
//! bounded trace semantics and the ⊑ relation.

mod denote;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use crate::policy::Event;
use crate::semiring::{MetricCheck, MetricValue};
use crate::Name;

pub use crate::policy::{render_trace, strip_markers, Trace, TraceItem};
pub use denote::{denote, denote_closed, interleave, subsumes, Env, HistoryError, TraceSet, DEFAULT_TRACE_CAP};
pub use parse::{parse_hist, HistParseError};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HistExpr {
    Empty,
    Var(Name),
    Ev(Event),
    Seq(Box<HistExpr>, Box<HistExpr>),
    Choice(Box<HistExpr>, Box<HistExpr>),
    Par(Box<HistExpr>, Box<HistExpr>),
    Ann(MetricValue, Box<HistExpr>),
    Sec(Name, Box<HistExpr>),
    Met(MetricCheck, Box<HistExpr>),
    Mu(Name, Box<HistExpr>),
}

impl HistExpr {
    pub fn ev(action: &str, resource: &str) -> Self {
        HistExpr::Ev(Event::new(action, resource))
    }

    pub fn var(h: &str) -> Self {
        HistExpr::Var(h.into())
    }

    /// `a · b` without the `ε` units.
    pub fn seq(a: HistExpr, b: HistExpr) -> Self {
        match (a, b) {
            (HistExpr::Empty, x) | (x, HistExpr::Empty) => x,
            (a, b) => HistExpr::Seq(Box::new(a), Box::new(b)),
        }
    }

    /// `a | b` without the `ε` units.
    pub fn par(a: HistExpr, b: HistExpr) -> Self {
        match (a, b) {
            (HistExpr::Empty, x) | (x, HistExpr::Empty) => x,
            (a, b) => HistExpr::Par(Box::new(a), Box::new(b)),
        }
    }

    pub fn choice(a: HistExpr, b: HistExpr) -> Self {
        HistExpr::Choice(Box::new(a), Box::new(b))
    }

    /// Left-nested sum; `None` for an empty iterator.
    pub fn sum<I: IntoIterator<Item = HistExpr>>(items: I) -> Option<Self> {
        items.into_iter().reduce(HistExpr::choice)
    }

    pub fn ann(d: MetricValue, h: HistExpr) -> Self {
        HistExpr::Ann(d, Box::new(h))
    }

    pub fn sec(policy: &str, h: HistExpr) -> Self {
        HistExpr::Sec(policy.into(), Box::new(h))
    }

    pub fn met(check: MetricCheck, h: HistExpr) -> Self {
        HistExpr::Met(check, Box::new(h))
    }

    pub fn mu(h: &str, body: HistExpr) -> Self {
        HistExpr::Mu(h.into(), Box::new(body))
    }

    pub fn children(&self) -> Vec<&HistExpr> {
        match self {
            HistExpr::Empty | HistExpr::Var(_) | HistExpr::Ev(_) => vec![],
            HistExpr::Seq(a, b) | HistExpr::Choice(a, b) | HistExpr::Par(a, b) => vec![a, b],
            HistExpr::Ann(_, h) | HistExpr::Sec(_, h) | HistExpr::Met(_, h) | HistExpr::Mu(_, h) => {
                vec![h]
            }
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a HistExpr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn any(&self, pred: impl Fn(&HistExpr) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |h| found |= pred(h));
        found
    }

    pub fn has_annotations(&self) -> bool {
        self.any(|h| matches!(h, HistExpr::Ann(..)))
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        fn go(h: &HistExpr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
            match h {
                HistExpr::Var(v) if !bound.contains(v) => {
                    out.insert(v.clone());
                }
                HistExpr::Mu(v, body) => {
                    bound.push(v.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                _ => {
                    for c in h.children() {
                        go(c, bound, out);
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// Replaces free occurrences of `h` by `with`.
    pub fn subst(&self, h: &str, with: &HistExpr) -> HistExpr {
        let map = |x: &HistExpr| Box::new(x.subst(h, with));
        match self {
            HistExpr::Var(v) if &**v == h => with.clone(),
            HistExpr::Empty | HistExpr::Var(_) | HistExpr::Ev(_) => self.clone(),
            HistExpr::Seq(a, b) => HistExpr::Seq(map(a), map(b)),
            HistExpr::Choice(a, b) => HistExpr::Choice(map(a), map(b)),
            HistExpr::Par(a, b) => HistExpr::Par(map(a), map(b)),
            HistExpr::Ann(d, x) => HistExpr::Ann(d.clone(), map(x)),
            HistExpr::Sec(p, x) => HistExpr::Sec(p.clone(), map(x)),
            HistExpr::Met(c, x) => HistExpr::Met(c.clone(), map(x)),
            HistExpr::Mu(v, _) if &**v == h => self.clone(),
            HistExpr::Mu(v, x) => HistExpr::Mu(v.clone(), map(x)),
        }
    }

    /// The same expression with every `ℳd` removed.
    pub fn strip_annotations(&self) -> HistExpr {
        let map = |x: &HistExpr| Box::new(x.strip_annotations());
        match self {
            HistExpr::Ann(_, x) => x.strip_annotations(),
            HistExpr::Empty | HistExpr::Var(_) | HistExpr::Ev(_) => self.clone(),
            HistExpr::Seq(a, b) => HistExpr::Seq(map(a), map(b)),
            HistExpr::Choice(a, b) => HistExpr::Choice(map(a), map(b)),
            HistExpr::Par(a, b) => HistExpr::Par(map(a), map(b)),
            HistExpr::Sec(p, x) => HistExpr::Sec(p.clone(), map(x)),
            HistExpr::Met(c, x) => HistExpr::Met(c.clone(), map(x)),
            HistExpr::Mu(v, x) => HistExpr::Mu(v.clone(), map(x)),
        }
    }
}

// precedence: + < | < · < atoms
const CHOICE: u8 = 0;
const PAR: u8 = 1;
const SEQ: u8 = 2;
const ATOM: u8 = 3;

fn write_hist(f: &mut fmt::Formatter<'_>, h: &HistExpr, level: u8) -> fmt::Result {
    let (own, op) = match h {
        HistExpr::Choice(..) => (CHOICE, " + "),
        HistExpr::Par(..) => (PAR, " | "),
        HistExpr::Seq(..) => (SEQ, " · "),
        _ => (ATOM, ""),
    };
    if own < level {
        f.write_str("(")?;
        write_hist(f, h, CHOICE)?;
        return f.write_str(")");
    }
    match h {
        HistExpr::Empty => f.write_str("ε"),
        HistExpr::Var(v) => f.write_str(v),
        HistExpr::Ev(e) => write!(f, "{e}"),
        HistExpr::Seq(a, b) | HistExpr::Choice(a, b) | HistExpr::Par(a, b) => {
            // left-nested chains print flat; a right-nested operand keeps
            // its parentheses
            write_hist(f, a, own)?;
            f.write_str(op)?;
            write_hist(f, b, own + 1)
        }
        HistExpr::Ann(d, x) => {
            write!(f, "ℳ[{d}] ")?;
            write_hist(f, x, ATOM)
        }
        HistExpr::Sec(p, x) => {
            write!(f, "{p}[")?;
            write_hist(f, x, CHOICE)?;
            f.write_str("]")
        }
        HistExpr::Met(c, x) => {
            write!(f, "{}⟨", c.label())?;
            write_hist(f, x, CHOICE)?;
            f.write_str("⟩")
        }
        HistExpr::Mu(v, x) => {
            write!(f, "μ{v}.(")?;
            write_hist(f, x, CHOICE)?;
            f.write_str(")")
        }
    }
}

impl fmt::Display for HistExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hist(f, self, CHOICE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::Semiring;

    #[test]
    fn smart_constructors_drop_units() {
        let a = HistExpr::ev("a", "R");
        assert_eq!(HistExpr::seq(HistExpr::Empty, a.clone()), a);
        assert_eq!(HistExpr::par(a.clone(), HistExpr::Empty), a);
        assert!(matches!(HistExpr::choice(a.clone(), HistExpr::Empty), HistExpr::Choice(..)));
    }

    #[test]
    fn rendering() {
        let r = Semiring::risk();
        let h9 = HistExpr::choice(
            HistExpr::ann(r.value(1.0).unwrap(), HistExpr::ev("sign_64", "RCPT")),
            HistExpr::ann(r.value(1.0).unwrap(), HistExpr::ev("sign_64", "SIGNED_DOC")),
        );
        assert_eq!(h9.to_string(), "ℳ[1] sign_64(RCPT) + ℳ[1] sign_64(SIGNED_DOC)");
        let s = HistExpr::seq(h9.clone(), HistExpr::var("h"));
        assert_eq!(s.to_string(), "(ℳ[1] sign_64(RCPT) + ℳ[1] sign_64(SIGNED_DOC)) · h");
        let right = HistExpr::Seq(
            Box::new(HistExpr::ev("a", "R")),
            Box::new(HistExpr::seq(HistExpr::ev("b", "R"), HistExpr::ev("c", "R"))),
        );
        assert_eq!(right.to_string(), "a(R) · (b(R) · c(R))");
        assert_eq!(HistExpr::mu("h", HistExpr::Empty).to_string(), "μh.(ε)");
    }

    #[test]
    fn free_vars_and_subst() {
        let body = HistExpr::choice(HistExpr::seq(HistExpr::ev("a", "R"), HistExpr::var("h")), HistExpr::Empty);
        assert_eq!(body.free_vars(), BTreeSet::from([Name::from("h")]));
        let m = HistExpr::mu("h", body.clone());
        assert!(m.free_vars().is_empty());
        assert_eq!(m.subst("h", &HistExpr::Empty), m);
        let unrolled = body.subst("h", &HistExpr::Empty);
        assert!(unrolled.free_vars().is_empty());
    }
}
