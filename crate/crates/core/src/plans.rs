//! Composition plans: enumeration, per-plan effects and static
//! classification against policies and metric framings.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::effects::{analysis_target, infer_closed, natural_cmp, Context, Type, TypeError};
use crate::history::{denote, Env, HistExpr, HistoryError, Trace};
use crate::lang::Expr;
use crate::mnf::{framing_bounds, FramingBound, NormError};
use crate::policy::{first_violation, Policies, PolicyError, Violation};
use crate::semiring::{AlgebraError, MetricCheck, MetricValue};
use crate::Name;

/// `π`: request identifier to service location.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Plan(pub BTreeMap<Name, Name>);

impl Plan {
    pub fn get(&self, request: &str) -> Option<&Name> {
        self.0.get(request)
    }

    /// Pairs in the natural order of request names.
    pub fn pairs(&self) -> Vec<(&Name, &Name)> {
        let mut v: Vec<_> = self.0.iter().collect();
        v.sort_by(|a, b| natural_cmp(a.0, b.0));
        v
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs().iter().map(|(r, l)| format!("{r}={l}")).collect();
        if parts.is_empty() {
            f.write_str("{}")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

impl<const N: usize> From<[(&str, &str); N]> for Plan {
    fn from(pairs: [(&str, &str); N]) -> Self {
        Plan(pairs.iter().map(|(r, l)| (Name::from(*r), Name::from(*l))).collect())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("request `{0}` matches no service in the repository")]
    NoCandidates(Name),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// The distinct requests of `e` with their interfaces, in natural order.
pub fn requests_of(e: &Expr) -> Vec<(Name, Type, Type)> {
    let mut out: Vec<(Name, Type, Type)> = Vec::new();
    for r in e.requests() {
        if out.iter().all(|(id, _, _)| *id != r.id) {
            out.push((r.id.clone(), Type::from_ann(&r.input), Type::from_ann(&r.output)));
        }
    }
    out.sort_by(|a, b| natural_cmp(&a.0, &b.0));
    out
}

/// Every total assignment of interface-compatible services to the
/// requests of `e`; the first request varies slowest.
pub fn enumerate_plans(e: &Expr, cx: &Context) -> Result<Vec<Plan>, PlanError> {
    let mut plans = vec![Plan::default()];
    for (id, input, output) in requests_of(e) {
        let locs: Vec<Name> = cx.repo.candidates(&input, &output).map(|s| s.location.clone()).collect();
        if locs.is_empty() {
            return Err(PlanError::NoCandidates(id));
        }
        plans = plans
            .into_iter()
            .flat_map(|p| {
                let id = id.clone();
                locs.iter().map(move |l| {
                    let mut q = p.clone();
                    q.0.insert(id.clone(), l.clone());
                    q
                })
            })
            .collect();
    }
    Ok(plans)
}

/// The analysed effect of `e` with every request resolved by `plan`.
pub fn plan_effect(e: &Expr, plan: &Plan, cx: &Context) -> Result<HistExpr, PlanError> {
    let cx = cx.with_plan(&plan.0);
    let t = infer_closed(&cx, e)?;
    Ok(analysis_target(e, &t))
}

/// The analysed effect of `e` with requests standing for all candidates.
pub fn summed_effect(e: &Expr, cx: &Context) -> Result<HistExpr, PlanError> {
    let t = infer_closed(&Context { plan: None, ..*cx }, e)?;
    Ok(analysis_target(e, &t))
}

/// Knobs for [`classify`].
#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Unfolding depth for `μ` when checking policies.
    pub depth: usize,
    pub trace_cap: usize,
    pub mu_iters: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            depth: 2,
            trace_cap: crate::history::DEFAULT_TRACE_CAP,
            mu_iters: crate::mnf::DEFAULT_MU_ITERS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FramingVerdict {
    /// Pre-order position among the metric framings of the effect.
    pub index: usize,
    pub check: MetricCheck,
    pub label: String,
    pub inner: MetricValue,
    pub capped: MetricValue,
    pub needs_guard: bool,
    pub in_recursion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    StaticallyValid,
    /// Indices of the framings that must be checked at run time.
    NeedsRuntimeGuards { framings: Vec<usize> },
    Invalid { violation: Violation, witness: Trace },
    Inconclusive { reason: String },
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::StaticallyValid => "statically-valid",
            Classification::NeedsRuntimeGuards { .. } => "needs-runtime-guards",
            Classification::Invalid { .. } => "invalid",
            Classification::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanVerdict {
    pub plan: Plan,
    pub bound: MetricValue,
    pub framings: Vec<FramingVerdict>,
    /// Whether the policy check had to cut some recursion short.
    pub truncated: bool,
    pub classification: Classification,
}

/// Per-framing verdicts for an effect.
pub fn framing_verdicts(h: &HistExpr, cx: &Context, mu_iters: usize) -> Result<(MetricValue, Vec<FramingVerdict>), PlanError> {
    let s = &cx.metric.semiring;
    let (bound, framings) = framing_bounds(h, s, mu_iters)?;
    let verdicts = framings
        .into_iter()
        .enumerate()
        .map(|(index, f): (usize, FramingBound)| {
            Ok(FramingVerdict {
                index,
                label: f.check.label(),
                needs_guard: !s.satisfies(&f.inner, &f.check)?,
                check: f.check,
                inner: f.inner,
                capped: f.capped,
                in_recursion: f.in_recursion,
            })
        })
        .collect::<Result<Vec<_>, AlgebraError>>()?;
    Ok((bound, verdicts))
}

/// First trace of `h` (in trace order) that breaks a policy inside its
/// scope. Effects without security framings need no denotation.
pub fn security_witness(
    h: &HistExpr,
    policies: &Policies,
    limits: Limits,
) -> Result<(Option<(Violation, Trace)>, bool), PlanError> {
    if !h.any(|x| matches!(x, HistExpr::Sec(..))) {
        return Ok((None, false));
    }
    let traces = denote(h, &Env::new(), limits.depth, limits.trace_cap)?;
    for t in &traces.traces {
        if let Some(v) = first_violation(t, policies)? {
            return Ok((Some((v, t.clone())), traces.truncated));
        }
    }
    Ok((None, traces.truncated))
}

pub fn classify(e: &Expr, plan: &Plan, cx: &Context, policies: &Policies, limits: Limits) -> Result<PlanVerdict, PlanError> {
    let h = plan_effect(e, plan, cx)?;
    classify_effect(&h, plan, cx, policies, limits)
}

pub fn classify_effect(
    h: &HistExpr,
    plan: &Plan,
    cx: &Context,
    policies: &Policies,
    limits: Limits,
) -> Result<PlanVerdict, PlanError> {
    let (bound, framings) = framing_verdicts(h, cx, limits.mu_iters)?;
    let (witness, truncated, inconclusive) = match security_witness(h, policies, limits) {
        Ok((w, t)) => (w, t, None),
        Err(PlanError::History(e @ HistoryError::CapExceeded { .. })) => (None, false, Some(e.to_string())),
        Err(err) => return Err(err),
    };
    let guarded: Vec<usize> = framings.iter().filter(|f| f.needs_guard).map(|f| f.index).collect();
    let classification = match (inconclusive, witness) {
        (Some(reason), _) => Classification::Inconclusive { reason },
        (None, Some((violation, witness))) => Classification::Invalid { violation, witness },
        (None, None) if guarded.is_empty() => Classification::StaticallyValid,
        (None, None) => Classification::NeedsRuntimeGuards { framings: guarded },
    };
    Ok(PlanVerdict {
        plan: plan.clone(),
        bound,
        framings,
        truncated,
        classification,
    })
}
