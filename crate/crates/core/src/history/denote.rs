use std::collections::{BTreeMap, BTreeSet};

use super::HistExpr;
use crate::policy::{strip_markers, Trace, TraceItem};
use crate::Name;

pub const DEFAULT_TRACE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("unbound history variable `{0}`")]
    UnboundVar(Name),
    #[error("more than {cap} traces while denoting `{subterm}`")]
    CapExceeded { cap: usize, subterm: String },
}

/// A finite set of traces. `truncated` records that some `μ` had more
/// iterates than the depth allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceSet {
    pub traces: BTreeSet<Trace>,
    pub truncated: bool,
}

impl TraceSet {
    pub fn single(t: Trace) -> Self {
        TraceSet {
            traces: BTreeSet::from([t]),
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn contains(&self, t: &[TraceItem]) -> bool {
        self.traces.contains(t)
    }

    /// The traces with framing markers removed.
    pub fn stripped(&self) -> BTreeSet<Trace> {
        self.traces.iter().map(|t| strip_markers(t)).collect()
    }
}

pub type Env = BTreeMap<Name, TraceSet>;

struct Ctx {
    depth: usize,
    cap: usize,
}

impl Ctx {
    fn guard(&self, n: usize, h: &HistExpr) -> Result<(), HistoryError> {
        if n > self.cap {
            Err(HistoryError::CapExceeded {
                cap: self.cap,
                subterm: h.to_string(),
            })
        } else {
            Ok(())
        }
    }
}

/// Bounded denotation: `μh.H` is the union of the first `depth` iterates
/// of `X ↦ ⟦H⟧δ{X/h}` from `{ε}`.
pub fn denote(h: &HistExpr, env: &Env, depth: usize, cap: usize) -> Result<TraceSet, HistoryError> {
    go(h, env, &Ctx { depth, cap })
}

/// `denote` of a closed expression with the default cap.
pub fn denote_closed(h: &HistExpr, depth: usize) -> Result<TraceSet, HistoryError> {
    denote(h, &Env::new(), depth, DEFAULT_TRACE_CAP)
}

fn go(h: &HistExpr, env: &Env, ctx: &Ctx) -> Result<TraceSet, HistoryError> {
    match h {
        HistExpr::Empty => Ok(TraceSet::single(Vec::new())),
        HistExpr::Ev(e) => Ok(TraceSet::single(vec![TraceItem::Event(e.clone())])),
        HistExpr::Var(v) => env.get(v).cloned().ok_or_else(|| HistoryError::UnboundVar(v.clone())),
        HistExpr::Ann(_, x) => go(x, env, ctx),
        HistExpr::Choice(a, b) => {
            let mut l = go(a, env, ctx)?;
            let r = go(b, env, ctx)?;
            l.traces.extend(r.traces);
            l.truncated |= r.truncated;
            ctx.guard(l.len(), h)?;
            Ok(l)
        }
        HistExpr::Seq(a, b) => {
            let l = go(a, env, ctx)?;
            let r = go(b, env, ctx)?;
            let mut out = BTreeSet::new();
            for x in &l.traces {
                for y in &r.traces {
                    let mut t = x.clone();
                    t.extend(y.iter().cloned());
                    out.insert(t);
                    ctx.guard(out.len(), h)?;
                }
            }
            Ok(TraceSet {
                traces: out,
                truncated: l.truncated || r.truncated,
            })
        }
        HistExpr::Par(a, b) => {
            let l = go(a, env, ctx)?;
            let r = go(b, env, ctx)?;
            let mut out = BTreeSet::new();
            for x in &l.traces {
                for y in &r.traces {
                    for t in interleave(x, y) {
                        out.insert(t);
                        ctx.guard(out.len(), h)?;
                    }
                }
            }
            Ok(TraceSet {
                traces: out,
                truncated: l.truncated || r.truncated,
            })
        }
        HistExpr::Sec(p, x) => {
            let inner = go(x, env, ctx)?;
            Ok(wrap(
                inner,
                TraceItem::SecOpen { policy: p.clone() },
                TraceItem::SecClose { policy: p.clone() },
            ))
        }
        HistExpr::Met(c, x) => {
            let inner = go(x, env, ctx)?;
            let label = c.label();
            Ok(wrap(
                inner,
                TraceItem::MetOpen { check: label.clone() },
                TraceItem::MetClose { check: label },
            ))
        }
        HistExpr::Mu(v, body) => {
            let mut union = TraceSet::default();
            let mut current = TraceSet::single(Vec::new());
            for _ in 0..ctx.depth {
                let mut inner = env.clone();
                inner.insert(v.clone(), current);
                current = go(body, &inner, ctx)?;
                union.truncated |= current.truncated;
                union.traces.extend(current.traces.iter().cloned());
                ctx.guard(union.len(), h)?;
            }
            // one more iterate tells whether the bound cut anything off
            let mut inner = env.clone();
            inner.insert(v.clone(), current);
            match go(body, &inner, ctx) {
                Ok(next) => {
                    union.truncated |= next.truncated || !next.traces.is_subset(&union.traces);
                }
                Err(HistoryError::CapExceeded { .. }) => union.truncated = true,
                Err(e) => return Err(e),
            }
            Ok(union)
        }
    }
}

fn wrap(inner: TraceSet, open: TraceItem, close: TraceItem) -> TraceSet {
    TraceSet {
        traces: inner
            .traces
            .into_iter()
            .map(|t| {
                let mut w = Vec::with_capacity(t.len() + 2);
                w.push(open.clone());
                w.extend(t);
                w.push(close.clone());
                w
            })
            .collect(),
        truncated: inner.truncated,
    }
}

/// All shuffles of `x` and `y`, by the recursion
/// `x ⧢ ε = {x}` and `x ⧢ αy' = { x₁ α t | t ∈ y' ⧢ x₂, x₁x₂ = x }`.
pub fn interleave(x: &[TraceItem], y: &[TraceItem]) -> BTreeSet<Trace> {
    let Some((alpha, rest)) = y.split_first() else {
        return BTreeSet::from([x.to_vec()]);
    };
    let mut out = BTreeSet::new();
    for cut in 0..=x.len() {
        let (x1, x2) = x.split_at(cut);
        for tail in interleave(rest, x2) {
            let mut t = Vec::with_capacity(x.len() + y.len());
            t.extend_from_slice(x1);
            t.push(alpha.clone());
            t.extend(tail);
            out.insert(t);
        }
    }
    out
}

/// Bounded `H ⊑ H'`: every marker-stripped trace of `H` is a trace of
/// `H'`, both denoted at `depth`.
pub fn subsumes(h: &HistExpr, h2: &HistExpr, depth: usize) -> Result<bool, HistoryError> {
    let small = denote_closed(h, depth)?.stripped();
    let big = denote_closed(h2, depth)?.stripped();
    Ok(small.is_subset(&big))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::Semiring;

    fn ev(a: &str) -> TraceItem {
        TraceItem::event(a, "R")
    }

    fn h(a: &str) -> HistExpr {
        HistExpr::ev(a, "R")
    }

    #[test]
    fn basic_cases() {
        let e = denote_closed(&HistExpr::Empty, 3).unwrap();
        assert_eq!(e.traces, BTreeSet::from([vec![]]));
        let r = Semiring::risk();
        let ann = HistExpr::ann(r.value(15.0).unwrap(), HistExpr::ev("reserve", "FLIGHT_No"));
        assert_eq!(
            denote_closed(&ann, 3).unwrap().traces,
            BTreeSet::from([vec![TraceItem::event("reserve", "FLIGHT_No")]])
        );
    }

    #[test]
    fn bounded_mu() {
        let body = HistExpr::choice(HistExpr::seq(h("a"), HistExpr::var("h")), HistExpr::Empty);
        let m = HistExpr::mu("h", body);
        let d = denote_closed(&m, 3).unwrap();
        let expected: BTreeSet<Trace> = (0..=3).map(|n| vec![ev("a"); n]).collect();
        assert_eq!(d.traces, expected);
        assert!(d.truncated);
        // μh.h denotes {ε} and is not truncated
        let d = denote_closed(&HistExpr::mu("h", HistExpr::var("h")), 4).unwrap();
        assert_eq!(d.traces, BTreeSet::from([vec![]]));
        assert!(!d.truncated);
    }

    #[test]
    fn interleavings() {
        let ab = vec![ev("a"), ev("b")];
        let c = vec![ev("c")];
        assert_eq!(interleave(&ab, &[]), BTreeSet::from([ab.clone()]));
        let out = interleave(&ab, &c);
        let expected = BTreeSet::from([
            vec![ev("a"), ev("b"), ev("c")],
            vec![ev("a"), ev("c"), ev("b")],
            vec![ev("c"), ev("a"), ev("b")],
        ]);
        assert_eq!(out, expected);
    }

    #[test]
    fn frames_wrap_traces() {
        let d = denote_closed(&HistExpr::sec("p", h("a")), 1).unwrap();
        let t = d.traces.into_iter().next().unwrap();
        assert_eq!(t.len(), 3);
        assert!(matches!(t[0], TraceItem::SecOpen { .. }));
    }

    #[test]
    fn subsumption() {
        let a = h("a");
        let b = h("b");
        assert!(subsumes(&a, &a, 2).unwrap());
        assert!(subsumes(&a, &HistExpr::choice(a.clone(), b.clone()), 2).unwrap());
        assert!(!subsumes(&HistExpr::choice(a.clone(), b), &a, 2).unwrap());
    }

    #[test]
    fn errors() {
        assert!(matches!(denote_closed(&HistExpr::var("h"), 1), Err(HistoryError::UnboundVar(_))));
        let many = HistExpr::choice(h("a"), h("b"));
        let mut big = many.clone();
        for _ in 0..12 {
            big = HistExpr::seq(big, many.clone());
        }
        assert!(matches!(
            denote(&big, &Env::new(), 1, 1000),
            Err(HistoryError::CapExceeded { .. })
        ));
    }
}
