//! Metric normal form: rewriting a metric-annotated history expression to a
//! single annotation `ℳd̄` over an annotation-free body.

use std::fmt;

use crate::history::HistExpr;
use crate::semiring::{AlgebraError, MetricCheck, MetricValue, Semiring};
use crate::Name;

pub const DEFAULT_MU_ITERS: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("unbound history variable `{0}`")]
    UnboundVar(Name),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Rule {
    /// `H ≡ ℳ1 H` on a leaf.
    Neutral,
    /// `ℳd ℳd' H ≡ ℳ(d⊗d') H`
    Fuse,
    Seq,
    Choice,
    Par,
    /// `φ[ℳd H] ≡ ℳd φ[H]`
    Sec,
    /// `γ⟨ℳd H⟩ ≡ ℳ(d⊕t) γ⟨H⟩` where `t` is the threshold of `γ`.
    Met,
    Mu,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Neutral => "neutral",
            Rule::Fuse => "fuse",
            Rule::Seq => "seq",
            Rule::Choice => "choice",
            Rule::Par => "par",
            Rule::Sec => "sec",
            Rule::Met => "met",
            Rule::Mu => "mu",
        };
        f.write_str(s)
    }
}

/// One rewrite `before ≡ after` applied to a subterm.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub rule: Rule,
    pub before: HistExpr,
    pub after: HistExpr,
}

/// The bound computed for one metric framing, in pre-order of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct FramingBound {
    pub check: MetricCheck,
    /// Bound of the framed body before capping.
    pub inner: MetricValue,
    pub capped: MetricValue,
    /// The annotation-free framed body.
    pub body: HistExpr,
    /// Whether the framing sits under a `μ`; its `inner` then reflects the
    /// recursion variable at the fixed point.
    pub in_recursion: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm {
    pub bound: MetricValue,
    pub body: HistExpr,
    pub trail: Vec<Step>,
    pub framings: Vec<FramingBound>,
}

impl NormalForm {
    /// `ℳd̄ H'`
    pub fn as_hist(&self) -> HistExpr {
        HistExpr::ann(self.bound.clone(), self.body.clone())
    }
}

/// `d ⊕ threshold`: a framing never lets the accumulated value get worse
/// than its threshold, so the enforced bound is the better of the two.
pub fn cap_frame(s: &Semiring, d: &MetricValue, check: &MetricCheck) -> Result<MetricValue, AlgebraError> {
    if check.metric != *s.name() {
        return Err(AlgebraError::MetricMismatch {
            check: check.metric.clone(),
            semiring: s.name().clone(),
        });
    }
    s.plus(d, &check.threshold)
}

/// Normalises a closed `h`, recording the rewrite trail and framing bounds.
pub fn normalize(h: &HistExpr, s: &Semiring, mu_iters: usize) -> Result<NormalForm, NormError> {
    let mut n = Normalizer {
        s,
        k: mu_iters,
        env: Vec::new(),
        trail: Some(Vec::new()),
        framings: Some(Vec::new()),
        mu_depth: 0,
    };
    let bound = n.go(h)?;
    Ok(NormalForm {
        bound,
        body: h.strip_annotations(),
        trail: n.trail.unwrap_or_default(),
        framings: n.framings.unwrap_or_default(),
    })
}

/// Just `d̄`, without a trail.
pub fn bound(h: &HistExpr, s: &Semiring, mu_iters: usize) -> Result<MetricValue, NormError> {
    quiet(s, mu_iters, Vec::new()).go(h)
}

/// Framing bounds without a trail.
pub fn framing_bounds(h: &HistExpr, s: &Semiring, mu_iters: usize) -> Result<(MetricValue, Vec<FramingBound>), NormError> {
    let mut n = quiet(s, mu_iters, Vec::new());
    n.framings = Some(Vec::new());
    let d = n.go(h)?;
    Ok((d, n.framings.unwrap_or_default()))
}

/// `⊕⁻¹ₙ Φⁿ(0)` for `μh.body`, where `Φ(d)` is the bound of
/// `body[ℳd h / h]`. Stops at the first `n` with `Φⁿ(0) = Φⁿ⁻¹(0)`; without a
/// fixed point within `mu_iters` iterations the answer is `0`.
pub fn mu_bound(h: &str, body: &HistExpr, s: &Semiring, mu_iters: usize) -> Result<MetricValue, NormError> {
    quiet(s, mu_iters, Vec::new()).mu(h, body)
}

fn quiet(s: &Semiring, k: usize, env: Vec<(Name, MetricValue)>) -> Normalizer<'_> {
    Normalizer {
        s,
        k,
        env,
        trail: None,
        framings: None,
        mu_depth: 0,
    }
}

struct Normalizer<'s> {
    s: &'s Semiring,
    k: usize,
    /// Recursion variables in scope with their current annotation.
    env: Vec<(Name, MetricValue)>,
    trail: Option<Vec<Step>>,
    framings: Option<Vec<FramingBound>>,
    mu_depth: usize,
}

impl Normalizer<'_> {
    fn record(&mut self, rule: Rule, before: HistExpr, d: &MetricValue, body: HistExpr) {
        if let Some(t) = &mut self.trail {
            t.push(Step {
                rule,
                before,
                after: HistExpr::ann(d.clone(), body),
            });
        }
    }

    fn recording(&self) -> bool {
        self.trail.is_some()
    }

    fn go(&mut self, h: &HistExpr) -> Result<MetricValue, NormError> {
        let s = self.s;
        let one = || s.one();
        match h {
            HistExpr::Empty | HistExpr::Ev(_) => {
                self.record(Rule::Neutral, h.clone(), &one(), h.clone());
                Ok(one())
            }
            HistExpr::Var(v) => {
                let Some((_, d)) = self.env.iter().rev().find(|(x, _)| x == v) else {
                    return Err(NormError::UnboundVar(v.clone()));
                };
                let d = d.clone();
                self.record(Rule::Neutral, h.clone(), &one(), h.clone());
                Ok(d)
            }
            HistExpr::Ann(d, x) => {
                let inner = self.go(x)?;
                let out = s.times(d, &inner)?;
                if self.recording() {
                    let body = x.strip_annotations();
                    let before = HistExpr::ann(d.clone(), HistExpr::ann(inner, body.clone()));
                    self.record(Rule::Fuse, before, &out, body);
                }
                Ok(out)
            }
            HistExpr::Seq(a, b) | HistExpr::Choice(a, b) | HistExpr::Par(a, b) => {
                let da = self.go(a)?;
                let db = self.go(b)?;
                let (rule, out) = match h {
                    HistExpr::Seq(..) => (Rule::Seq, s.times(&da, &db)?),
                    HistExpr::Par(..) => (Rule::Par, s.times(&da, &db)?),
                    _ => (Rule::Choice, s.inv_plus(&da, &db)?),
                };
                if self.recording() {
                    let (sa, sb) = (a.strip_annotations(), b.strip_annotations());
                    let rebuild = |x: HistExpr, y: HistExpr| match h {
                        HistExpr::Seq(..) => HistExpr::Seq(Box::new(x), Box::new(y)),
                        HistExpr::Par(..) => HistExpr::Par(Box::new(x), Box::new(y)),
                        _ => HistExpr::Choice(Box::new(x), Box::new(y)),
                    };
                    let before = rebuild(HistExpr::ann(da, sa.clone()), HistExpr::ann(db, sb.clone()));
                    self.record(rule, before, &out, rebuild(sa, sb));
                }
                Ok(out)
            }
            HistExpr::Sec(p, x) => {
                let d = self.go(x)?;
                if self.recording() {
                    let body = x.strip_annotations();
                    let before = HistExpr::Sec(p.clone(), Box::new(HistExpr::ann(d.clone(), body.clone())));
                    self.record(Rule::Sec, before, &d, HistExpr::Sec(p.clone(), Box::new(body)));
                }
                Ok(d)
            }
            HistExpr::Met(c, x) => {
                let slot = self.framings.as_ref().map(|f| f.len());
                if let Some(f) = &mut self.framings {
                    // reserve the pre-order position
                    f.push(FramingBound {
                        check: c.clone(),
                        inner: s.one(),
                        capped: s.one(),
                        body: HistExpr::Empty,
                        in_recursion: false,
                    });
                }
                let d = self.go(x)?;
                let capped = cap_frame(s, &d, c)?;
                let body = x.strip_annotations();
                if let (Some(i), Some(f)) = (slot, &mut self.framings) {
                    f[i] = FramingBound {
                        check: c.clone(),
                        inner: d.clone(),
                        capped: capped.clone(),
                        body: body.clone(),
                        in_recursion: self.mu_depth > 0,
                    };
                }
                if self.recording() {
                    let before = HistExpr::Met(c.clone(), Box::new(HistExpr::ann(d, body.clone())));
                    self.record(Rule::Met, before, &capped, HistExpr::Met(c.clone(), Box::new(body)));
                }
                Ok(capped)
            }
            HistExpr::Mu(v, body) => {
                let d = self.mu(v, body)?;
                if self.framings.is_some() {
                    // one more pass at the fixed point, for the framing report
                    let mut report = quiet(s, self.k, self.env.clone());
                    report.env.push((v.clone(), d.clone()));
                    report.framings = self.framings.take();
                    report.mu_depth = self.mu_depth + 1;
                    let pass = report.go(body);
                    self.framings = report.framings.take();
                    pass?;
                }
                self.record(Rule::Mu, h.clone(), &d, h.strip_annotations());
                Ok(d)
            }
        }
    }

    fn mu(&mut self, v: &str, body: &HistExpr) -> Result<MetricValue, NormError> {
        let s = self.s;
        let mut prev = s.zero();
        let mut acc: Option<MetricValue> = None;
        for _ in 0..self.k {
            let mut phi = quiet(s, self.k, self.env.clone());
            phi.env.push((v.into(), prev.clone()));
            let next = phi.go(body)?;
            acc = Some(match acc {
                None => next.clone(),
                Some(a) => s.inv_plus(&a, &next)?,
            });
            if next == prev {
                return Ok(acc.unwrap_or_else(|| s.zero()));
            }
            prev = next;
        }
        Ok(s.zero())
    }
}
