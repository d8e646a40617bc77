//! Small-step interpreter for λ^req with runtime enforcement of security
//! and metric framings.
//!
//! A configuration is `⟨η, d, e⟩`. Framings open with a marker step when
//! first reached, so runtime traces carry the same `[φ ]φ ⟨γ ⟩γ` markers as
//! the denotation of history expressions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::effects::{infer_closed, Context};
use crate::history::HistExpr;
use crate::lang::{desugar, subst, Expr, Lambda, Request};
use crate::mnf;
use crate::policy::{Event, Monitor, Policies, PolicyError, Trace, TraceItem};
use crate::semiring::{AlgebraError, MetricCheck, MetricValue};
use crate::Name;

pub const DEFAULT_FUEL: usize = 10_000;
pub const DEFAULT_STATE_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardValue {
    True,
    False,
    /// Both branches; only meaningful to [`Machine::explore`].
    Both,
}

pub type GuardEnv = BTreeMap<Name, GuardValue>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    LeftFirst,
    RightFirst,
    Seeded(u64),
    Exhaustive,
}

/// How metric framings are enforced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enforcement {
    /// After every step inside `γ⟨e⟩`, the global metric must satisfy `γ`.
    Stepwise,
    /// When `γ⟨e⟩` opens, the normal-form bound of `e` under the current
    /// plan must satisfy `γ`. Bodies whose effect is recursive, or cannot
    /// be typed on their own, fall back to checking the value accumulated
    /// inside the framing after every step.
    #[default]
    Predictive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Done {
        #[serde(serialize_with = "display")]
        value: Expr,
        trace: Trace,
        metric: MetricValue,
    },
    SecurityHalt {
        policy: Name,
        trace: Trace,
    },
    MetricHalt {
        check: String,
        metric: MetricValue,
        /// Trace length when the run stopped.
        position: usize,
        /// Whether `metric` is a predicted bound rather than an observed
        /// accumulation.
        predicted: bool,
        trace: Trace,
    },
    Stuck {
        reason: String,
        trace: Trace,
    },
    OutOfFuel {
        trace: Trace,
        metric: MetricValue,
    },
}

fn display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Done { .. } => "done",
            Outcome::SecurityHalt { .. } => "security-halt",
            Outcome::MetricHalt { .. } => "metric-halt",
            Outcome::Stuck { .. } => "stuck",
            Outcome::OutOfFuel { .. } => "out-of-fuel",
        }
    }

    pub fn trace(&self) -> &Trace {
        match self {
            Outcome::Done { trace, .. }
            | Outcome::SecurityHalt { trace, .. }
            | Outcome::MetricHalt { trace, .. }
            | Outcome::Stuck { trace, .. }
            | Outcome::OutOfFuel { trace, .. } => trace,
        }
    }
}

/// One line of the step log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub rule: &'static str,
    pub item: Option<TraceItem>,
    pub metric: MetricValue,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.item {
            Some(i) => write!(f, "{:<10} {:<28} {}", self.rule, i.to_string(), self.metric),
            None => write!(f, "{:<10} {:<28} {}", self.rule, "", self.metric),
        }
    }
}

/// A predictive check made when a metric framing opened.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrameCheck {
    pub check: String,
    /// `None` when the body was recursive or untypable and the framing fell
    /// back to stepwise checks.
    pub bound: Option<MetricValue>,
    pub admitted: bool,
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub outcome: Outcome,
    pub log: Vec<LogEntry>,
    pub frames: Vec<FrameCheck>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error("guard `{0}` has no value")]
    UnmappedGuard(Name),
    #[error("guard `{0}` is `both`, which needs the exhaustive scheduler")]
    BothInRun(Name),
    #[error("the plan does not resolve request `{0}`")]
    Unplanned(Name),
    #[error("service `{0}` has no implementation to run")]
    NoImplementation(Name),
    #[error("free variable `{0}`")]
    FreeVariable(Name),
    #[error("exploration passed {0} states")]
    StateCap(usize),
    #[error("the exhaustive scheduler is only available to explore")]
    ExhaustiveRun,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Runtime terms: expressions whose framings remember whether they have
/// been entered, and whose metric framings carry the value accumulated
/// inside them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Term {
    Val(Expr),
    Event {
        action: Name,
        arg: Box<Term>,
    },
    If {
        guard: Name,
        then_branch: Expr,
        else_branch: Expr,
    },
    App(Box<Term>, Box<Term>),
    Sec {
        policy: Name,
        body: Box<Term>,
        opened: bool,
    },
    Met {
        check: MetricCheck,
        body: Box<Term>,
        opened: bool,
        local: MetricValue,
        /// Admitted by a predictive check, so no per-step checks.
        predicted: bool,
    },
}

impl Term {
    fn from_expr(e: &Expr, one: &MetricValue) -> Result<Term, InterpError> {
        Ok(match e {
            Expr::Unit | Expr::Res(_) | Expr::Abs(_) | Expr::Req(_) => Term::Val(e.clone()),
            Expr::Var(x) => return Err(InterpError::FreeVariable(x.clone())),
            Expr::Event { action, arg } => Term::Event {
                action: action.clone(),
                arg: Box::new(Term::from_expr(arg, one)?),
            },
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => Term::If {
                guard: guard.clone(),
                then_branch: (**then_branch).clone(),
                else_branch: (**else_branch).clone(),
            },
            Expr::App(f, a) => Term::App(Box::new(Term::from_expr(f, one)?), Box::new(Term::from_expr(a, one)?)),
            Expr::Sec { policy, body } => Term::Sec {
                policy: policy.clone(),
                body: Box::new(Term::from_expr(body, one)?),
                opened: false,
            },
            Expr::Met { check, body } => Term::Met {
                check: check.clone(),
                body: Box::new(Term::from_expr(body, one)?),
                opened: false,
                local: one.clone(),
                predicted: false,
            },
            Expr::Seq(..) | Expr::Fork(..) => return Term::from_expr(&desugar(e), one),
        })
    }

    fn to_expr(&self) -> Expr {
        match self {
            Term::Val(e) => e.clone(),
            Term::Event { action, arg } => Expr::Event {
                action: action.clone(),
                arg: Box::new(arg.to_expr()),
            },
            Term::If {
                guard,
                then_branch,
                else_branch,
            } => Expr::If {
                guard: guard.clone(),
                then_branch: Box::new(then_branch.clone()),
                else_branch: Box::new(else_branch.clone()),
            },
            Term::App(f, a) => Expr::App(Box::new(f.to_expr()), Box::new(a.to_expr())),
            Term::Sec { policy, body, .. } => Expr::Sec {
                policy: policy.clone(),
                body: Box::new(body.to_expr()),
            },
            Term::Met { check, body, .. } => Expr::Met {
                check: check.clone(),
                body: Box::new(body.to_expr()),
            },
        }
    }

    fn value(&self) -> Option<&Expr> {
        match self {
            Term::Val(e) => Some(e),
            _ => None,
        }
    }

    /// Paths to every redex, leftmost first. `0` descends into a function
    /// position or a framing body, `1` into an argument.
    fn redexes(&self, path: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        match self {
            Term::Val(_) => {}
            Term::If { .. } => out.push(path.clone()),
            Term::Event { arg, .. } => {
                if arg.value().is_some() {
                    out.push(path.clone());
                } else {
                    path.push(1);
                    arg.redexes(path, out);
                    path.pop();
                }
            }
            Term::App(f, a) => {
                if f.value().is_some() && a.value().is_some() {
                    out.push(path.clone());
                    return;
                }
                path.push(0);
                f.redexes(path, out);
                path.pop();
                path.push(1);
                a.redexes(path, out);
                path.pop();
            }
            Term::Sec { body, opened, .. } | Term::Met { body, opened, .. } => {
                if !opened || body.value().is_some() {
                    out.push(path.clone());
                } else {
                    path.push(0);
                    body.redexes(path, out);
                    path.pop();
                }
            }
        }
    }

    fn open_policies(&self, out: &mut Vec<Name>) {
        match self {
            Term::Val(_) | Term::If { .. } => {}
            Term::Event { arg, .. } => arg.open_policies(out),
            Term::App(f, a) => {
                f.open_policies(out);
                a.open_policies(out);
            }
            Term::Sec { policy, body, opened } => {
                if *opened {
                    out.push(policy.clone());
                }
                body.open_policies(out);
            }
            Term::Met { body, .. } => body.open_policies(out),
        }
    }
}

#[derive(Clone, Debug)]
struct State {
    term: Term,
    trace: Trace,
    metric: MetricValue,
    monitor: Monitor,
    /// Values already read for `both` guards.
    fixed: BTreeMap<Name, bool>,
    steps: usize,
}

type StateKey = (Term, Trace, MetricValue, BTreeMap<Name, bool>, usize);

/// What a single step did, gathered while descending to the redex.
struct Fired {
    rule: &'static str,
    item: Option<TraceItem>,
    new_metric: MetricValue,
    halt: Option<Outcome>,
    frame: Option<FrameCheck>,
}

enum Next {
    Continue(Box<State>, LogEntry, Option<FrameCheck>),
    Halt(Outcome, Option<FrameCheck>),
}

/// Everything a run reads besides the program.
pub struct Machine<'a> {
    /// Must carry the plan when the program makes requests.
    pub cx: Context<'a>,
    pub policies: &'a Policies,
    pub guards: &'a GuardEnv,
    pub enforcement: Enforcement,
    pub mu_iters: usize,
}

impl<'a> Machine<'a> {
    pub fn new(cx: Context<'a>, policies: &'a Policies, guards: &'a GuardEnv) -> Self {
        Machine {
            cx,
            policies,
            guards,
            enforcement: Enforcement::default(),
            mu_iters: mnf::DEFAULT_MU_ITERS,
        }
    }

    fn initial(&self, e: &Expr, d0: MetricValue) -> Result<State, InterpError> {
        self.cx.metric.semiring.check(&d0)?;
        let one = self.cx.metric.semiring.one();
        Ok(State {
            term: Term::from_expr(&desugar(e), &one)?,
            trace: Vec::new(),
            metric: d0,
            monitor: Monitor::new(self.policies),
            fixed: BTreeMap::new(),
            steps: 0,
        })
    }

    /// Runs `e` from `⟨ε, d0, e⟩` for at most `fuel` steps.
    pub fn run(&self, e: &Expr, d0: MetricValue, scheduler: Scheduler, fuel: usize) -> Result<RunReport, InterpError> {
        let mut rng = match scheduler {
            Scheduler::Exhaustive => return Err(InterpError::ExhaustiveRun),
            Scheduler::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let mut st = self.initial(e, d0)?;
        let mut log = Vec::new();
        let mut frames = Vec::new();
        loop {
            let mut paths = Vec::new();
            st.term.redexes(&mut Vec::new(), &mut paths);
            if paths.is_empty() {
                let outcome = self.finished(&st);
                return Ok(RunReport { outcome, log, frames });
            }
            if st.steps >= fuel {
                let outcome = Outcome::OutOfFuel {
                    trace: st.trace,
                    metric: st.metric,
                };
                return Ok(RunReport { outcome, log, frames });
            }
            let i = match (scheduler, &mut rng) {
                (Scheduler::RightFirst, _) => paths.len() - 1,
                (_, Some(r)) if paths.len() > 1 => r.gen_range(0..paths.len()),
                _ => 0,
            };
            match self.fire(&st, &paths[i], None)? {
                Next::Continue(next, entry, frame) => {
                    st = *next;
                    log.push(entry);
                    frames.extend(frame);
                }
                Next::Halt(outcome, frame) => {
                    frames.extend(frame);
                    return Ok(RunReport { outcome, log, frames });
                }
            }
        }
    }

    /// Every outcome over all scheduling choices and all values of `both`
    /// guards, deduplicated, in a deterministic order.
    pub fn explore(&self, e: &Expr, d0: MetricValue, fuel: usize, state_cap: usize) -> Result<Vec<Outcome>, InterpError> {
        let start = self.initial(e, d0)?;
        let mut seen: HashSet<StateKey> = HashSet::new();
        let mut outcomes: BTreeMap<String, Outcome> = BTreeMap::new();
        let mut stack = vec![start];
        while let Some(st) = stack.pop() {
            let key = (st.term.clone(), st.trace.clone(), st.metric.clone(), st.fixed.clone(), st.steps);
            if !seen.insert(key) {
                continue;
            }
            if seen.len() > state_cap {
                return Err(InterpError::StateCap(state_cap));
            }
            let mut paths = Vec::new();
            st.term.redexes(&mut Vec::new(), &mut paths);
            let mut record = |o: Outcome| {
                outcomes.insert(format!("{o:?}"), o);
            };
            if paths.is_empty() {
                record(self.finished(&st));
                continue;
            }
            if st.steps >= fuel {
                record(Outcome::OutOfFuel {
                    trace: st.trace.clone(),
                    metric: st.metric.clone(),
                });
                continue;
            }
            if let Some(next) = self.invisible_step(&st, &paths)? {
                stack.push(next);
                continue;
            }
            for p in paths.iter().rev() {
                let choices: &[Option<bool>] = match self.pending_both(&st, p) {
                    true => &[Some(true), Some(false)],
                    false => &[None],
                };
                for c in choices {
                    match self.fire(&st, p, *c)? {
                        Next::Continue(next, _, _) => stack.push(*next),
                        Next::Halt(o, _) => record(o),
                    }
                }
            }
        }
        Ok(outcomes.into_values().collect())
    }

    /// A step that touches only its own subterm commutes with every other
    /// redex, so exploring it alone loses no outcome.
    fn invisible_step(&self, st: &State, paths: &[Vec<u8>]) -> Result<Option<State>, InterpError> {
        if paths.len() < 2 {
            return Ok(None);
        }
        for p in paths {
            if self.pending_both(st, p) {
                continue;
            }
            if let Next::Continue(next, _, None) = self.fire(st, p, None)? {
                if next.trace.len() == st.trace.len() && next.metric == st.metric && next.fixed == st.fixed {
                    return Ok(Some(*next));
                }
            }
        }
        Ok(None)
    }

    fn finished(&self, st: &State) -> Outcome {
        match &st.term {
            Term::Val(v) => Outcome::Done {
                value: v.clone(),
                trace: st.trace.clone(),
                metric: st.metric.clone(),
            },
            t => Outcome::Stuck {
                reason: format!("no rule applies to `{}`", t.to_expr()),
                trace: st.trace.clone(),
            },
        }
    }

    /// Whether the redex at `path` reads a `both` guard not yet fixed.
    fn pending_both(&self, st: &State, path: &[u8]) -> bool {
        let mut t = &st.term;
        for &d in path {
            t = match (t, d) {
                (Term::App(f, _), 0) => f,
                (Term::App(_, a), _) => a,
                (Term::Event { arg, .. }, _) => arg,
                (Term::Sec { body, .. } | Term::Met { body, .. }, _) => body,
                _ => return false,
            };
        }
        match t {
            Term::If { guard, .. } => {
                self.guards.get(guard) == Some(&GuardValue::Both) && !st.fixed.contains_key(guard)
            }
            _ => false,
        }
    }

    fn fire(&self, st: &State, path: &[u8], choice: Option<bool>) -> Result<Next, InterpError> {
        let mut next = st.clone();
        let mut fired = Fired {
            rule: "",
            item: None,
            new_metric: st.metric.clone(),
            halt: None,
            frame: None,
        };
        let mut term = std::mem::replace(&mut next.term, Term::Val(Expr::Unit));
        self.descend(&mut term, path, &mut next, &mut fired, choice, st)?;
        next.term = term;
        if let Some(h) = fired.halt {
            return Ok(Next::Halt(h, fired.frame));
        }
        next.steps += 1;
        next.metric = fired.new_metric.clone();
        if let Some(item) = &fired.item {
            next.trace.push(item.clone());
            if let TraceItem::Event(ev) = item {
                next.monitor.push(self.policies, ev);
            }
        }
        let touches_policy = matches!(fired.item, Some(TraceItem::Event(_) | TraceItem::SecOpen { .. }));
        if touches_policy {
            let mut open = Vec::new();
            next.term.open_policies(&mut open);
            for p in open {
                if next.monitor.offends(self.policies, &p)? {
                    return Ok(Next::Halt(Outcome::SecurityHalt {
                        policy: p,
                        trace: next.trace,
                    }, None));
                }
            }
        }
        let entry = LogEntry {
            rule: fired.rule,
            item: fired.item,
            metric: next.metric.clone(),
        };
        Ok(Next::Continue(Box::new(next), entry, fired.frame))
    }

    fn metric_halt(&self, check: &MetricCheck, metric: MetricValue, predicted: bool, st: &State) -> Outcome {
        Outcome::MetricHalt {
            check: check.label(),
            metric,
            position: st.trace.len(),
            predicted,
            trace: st.trace.clone(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        t: &mut Term,
        path: &[u8],
        next: &mut State,
        fired: &mut Fired,
        choice: Option<bool>,
        before: &State,
    ) -> Result<(), InterpError> {
        let s = &self.cx.metric.semiring;
        let Some((&d, rest)) = path.split_first() else {
            return self.axiom(t, next, fired, choice, before);
        };
        match t {
            Term::App(f, a) => {
                let child = if d == 0 { f } else { a };
                self.descend(child, rest, next, fired, choice, before)
            }
            Term::Event { arg, .. } => self.descend(arg, rest, next, fired, choice, before),
            Term::Sec { body, .. } => self.descend(body, rest, next, fired, choice, before),
            Term::Met {
                check,
                body,
                local,
                predicted,
                ..
            } => {
                self.descend(body, rest, next, fired, choice, before)?;
                let Some(TraceItem::Event(ev)) = &fired.item else {
                    return Ok(());
                };
                if fired.halt.is_some() {
                    return Ok(());
                }
                *local = s.times(local, &self.cx.metric.get(&ev.action, &ev.resource))?;
                let (observed, enforce) = match self.enforcement {
                    Enforcement::Stepwise => (fired.new_metric.clone(), true),
                    Enforcement::Predictive => (local.clone(), !*predicted),
                };
                if enforce && !s.satisfies(&observed, check)? {
                    let mut at = before.clone();
                    at.trace.push(TraceItem::Event(ev.clone()));
                    fired.halt = Some(self.metric_halt(check, observed, false, &at));
                }
                Ok(())
            }
            Term::Val(_) | Term::If { .. } => unreachable!("paths only lead through compound terms"),
        }
    }

    fn axiom(
        &self,
        t: &mut Term,
        next: &mut State,
        fired: &mut Fired,
        choice: Option<bool>,
        before: &State,
    ) -> Result<(), InterpError> {
        let s = &self.cx.metric.semiring;
        let one = s.one();
        let stuck = |reason: String| Outcome::Stuck {
            reason,
            trace: before.trace.clone(),
        };
        match t {
            Term::Event { action, arg } => {
                let Some(Expr::Res(r)) = arg.value() else {
                    fired.halt = Some(stuck(format!("event `{action}` applied to `{}`", arg.to_expr())));
                    return Ok(());
                };
                let ev = Event {
                    action: action.clone(),
                    resource: r.clone(),
                };
                fired.rule = "S-Ev2";
                fired.new_metric = s.times(&before.metric, &self.cx.metric.get(action, r))?;
                fired.item = Some(TraceItem::Event(ev));
                *t = Term::Val(Expr::Unit);
            }
            Term::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let b = match (self.guards.get(guard), next.fixed.get(guard)) {
                    (None, _) => return Err(InterpError::UnmappedGuard(guard.clone())),
                    (Some(GuardValue::True), _) => true,
                    (Some(GuardValue::False), _) => false,
                    (Some(GuardValue::Both), Some(b)) => *b,
                    (Some(GuardValue::Both), None) => match choice {
                        Some(b) => {
                            next.fixed.insert(guard.clone(), b);
                            b
                        }
                        None => return Err(InterpError::BothInRun(guard.clone())),
                    },
                };
                fired.rule = "S-If";
                let branch = if b { &*then_branch } else { &*else_branch };
                *t = Term::from_expr(branch, &one)?;
            }
            Term::App(f, a) => {
                let (Some(fv), Some(av)) = (f.value(), a.value()) else {
                    unreachable!("application redexes have value operands")
                };
                match fv {
                    Expr::Abs(l) => {
                        fired.rule = "S-App3";
                        *t = Term::from_expr(&beta(l, av), &one)?;
                    }
                    Expr::Req(r) => {
                        fired.rule = "S-Req";
                        let imp = self.resolve(r)?;
                        *t = Term::App(Box::new(Term::Val(imp)), Box::new(Term::Val(av.clone())));
                    }
                    other => {
                        fired.halt = Some(stuck(format!("`{other}` is not a function")));
                    }
                }
            }
            Term::Sec { policy, body, opened } => {
                if !*opened {
                    fired.rule = "S-Sec0";
                    fired.item = Some(TraceItem::SecOpen { policy: policy.clone() });
                    *opened = true;
                } else {
                    if next.monitor.offends(self.policies, policy)? {
                        fired.halt = Some(Outcome::SecurityHalt {
                            policy: policy.clone(),
                            trace: before.trace.clone(),
                        });
                        return Ok(());
                    }
                    fired.rule = "S-Sec2";
                    fired.item = Some(TraceItem::SecClose { policy: policy.clone() });
                    *t = (**body).clone();
                }
            }
            Term::Met {
                check,
                body,
                opened,
                local,
                predicted,
            } => {
                if !*opened {
                    fired.rule = "S-Met0";
                    if self.enforcement == Enforcement::Predictive {
                        let bound = self.predict(&body.to_expr());
                        if let Some(b) = &bound {
                            let admitted = s.satisfies(b, check)?;
                            fired.frame = Some(FrameCheck {
                                check: check.label(),
                                bound: Some(b.clone()),
                                admitted,
                                position: before.trace.len(),
                            });
                            if !admitted {
                                fired.halt = Some(self.metric_halt(check, b.clone(), true, before));
                                return Ok(());
                            }
                            *predicted = true;
                        } else {
                            fired.frame = Some(FrameCheck {
                                check: check.label(),
                                bound: None,
                                admitted: true,
                                position: before.trace.len(),
                            });
                        }
                    }
                    fired.item = Some(TraceItem::MetOpen { check: check.label() });
                    *opened = true;
                } else {
                    let observed = match self.enforcement {
                        Enforcement::Stepwise => &before.metric,
                        Enforcement::Predictive => &*local,
                    };
                    if !s.satisfies(observed, check)? {
                        fired.halt = Some(self.metric_halt(check, observed.clone(), false, before));
                        return Ok(());
                    }
                    fired.rule = "S-Met2";
                    fired.item = Some(TraceItem::MetClose { check: check.label() });
                    *t = (**body).clone();
                }
            }
            Term::Val(_) => unreachable!("values are not redexes"),
        }
        Ok(())
    }

    fn resolve(&self, r: &Request) -> Result<Expr, InterpError> {
        let loc = self
            .cx
            .plan
            .and_then(|p| p.get(&r.id))
            .ok_or_else(|| InterpError::Unplanned(r.id.clone()))?;
        self.cx
            .repo
            .get(loc)
            .and_then(|s| s.implementation.clone())
            .ok_or_else(|| InterpError::NoImplementation(loc.clone()))
    }

    /// The bound of a framing body, if its effect is not recursive.
    fn predict(&self, body: &Expr) -> Option<MetricValue> {
        let t = infer_closed(&self.cx, body).ok()?;
        if t.effect.any(|h| matches!(h, HistExpr::Mu(..))) {
            return None;
        }
        mnf::bound(&t.effect, &self.cx.metric.semiring, self.mu_iters).ok()
    }
}

/// `e{v/x, λz x.e / z}`
fn beta(l: &Lambda, v: &Expr) -> Expr {
    let body = subst(&l.body, &l.param, v);
    match &l.self_name {
        Some(z) if *z != l.param => subst(&body, z, &Expr::Abs(l.clone())),
        _ => body,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::{publish, MetricFn, Repository};
    use crate::lang::{parse_program, Declarations};
    use crate::policy::{render_trace, UsageAutomaton};
    use crate::semiring::Semiring;

    struct World {
        d: Declarations,
        repo: Repository,
        f: MetricFn,
        policies: Policies,
    }

    fn world() -> World {
        let s = Semiring::risk();
        let mut d = Declarations::new(s.clone());
        d.add_domain("Airport", &["AIRPORT"]).unwrap();
        d.add_domain("Flight", &["FLIGHT_No", "NO_FLIGHT"]).unwrap();
        for g in ["is_available", "can_overbook", "loop"] {
            d.guards.insert(g.into());
        }
        d.policies.insert("noOB".into());
        let mut f = MetricFn::new(s.clone());
        f.set("reserve", Some("FLIGHT_No"), s.value(15.0).unwrap()).unwrap();
        f.set("overbook", Some("FLIGHT_No"), s.value(20.0).unwrap()).unwrap();
        let mut repo = Repository::new();
        let e1 = "\\x: Airport -> search_flight_for(x); if is_available then (reserve(FLIGHT_No); FLIGHT_No) \
                  else (if can_overbook then (overbook(FLIGHT_No); FLIGHT_No) else NO_FLIGHT)";
        publish("e1", parse_program(e1, &d).unwrap(), &mut repo, &d, &f).unwrap();
        let a = UsageAutomaton::new("noOB", &["ok", "bad"], "ok", &["bad"], &[("ok", "overbook", "*", "bad")]).unwrap();
        World {
            d,
            repo,
            f,
            policies: Policies::from([(Name::from("noOB"), a)]),
        }
    }

    fn guards(pairs: &[(&str, GuardValue)]) -> GuardEnv {
        pairs.iter().map(|(g, v)| (Name::from(*g), *v)).collect()
    }

    fn zero_risk() -> MetricValue {
        Semiring::risk().one()
    }

    #[test]
    fn example_execution() {
        let w = world();
        let plan = BTreeMap::from([(Name::from("r"), Name::from("e1"))]);
        let cx = Context::new(&w.d, &w.repo, &w.f).with_plan(&plan);
        let g = guards(&[("is_available", GuardValue::True), ("can_overbook", GuardValue::False)]);
        let m = Machine::new(cx, &w.policies, &g);
        let e = parse_program("(req r : Airport -> Flight) AIRPORT", &w.d).unwrap();
        let rep = m.run(&e, zero_risk(), Scheduler::LeftFirst, DEFAULT_FUEL).unwrap();
        let Outcome::Done { value, trace, metric } = &rep.outcome else {
            panic!("{:?}", rep.outcome)
        };
        assert_eq!(value.to_string(), "FLIGHT_No");
        assert_eq!(render_trace(trace), "search_flight_for(AIRPORT) reserve(FLIGHT_No)");
        assert_eq!(metric.to_string(), "15");
        assert_eq!(rep.log.first().unwrap().rule, "S-Req");
    }

    #[test]
    fn unit_in_zero_steps() {
        let w = world();
        let g = GuardEnv::new();
        let m = Machine::new(Context::new(&w.d, &w.repo, &w.f), &w.policies, &g);
        let e = parse_program("*", &w.d).unwrap();
        let rep = m.run(&e, zero_risk(), Scheduler::LeftFirst, 0).unwrap();
        assert!(rep.log.is_empty());
        assert!(matches!(rep.outcome, Outcome::Done { .. }));
        let ev = parse_program("reserve(FLIGHT_No)", &w.d).unwrap();
        let rep = m.run(&ev, zero_risk(), Scheduler::LeftFirst, 0).unwrap();
        assert!(matches!(rep.outcome, Outcome::OutOfFuel { .. }));
    }

    #[test]
    fn explore_both_guard() {
        let w = world();
        let plan = BTreeMap::from([(Name::from("r"), Name::from("e1"))]);
        let cx = Context::new(&w.d, &w.repo, &w.f).with_plan(&plan);
        let g = guards(&[("is_available", GuardValue::False), ("can_overbook", GuardValue::Both)]);
        let m = Machine::new(cx, &w.policies, &g);
        let e = parse_program("(req r : Airport -> Flight) AIRPORT", &w.d).unwrap();
        let outs = m.explore(&e, zero_risk(), DEFAULT_FUEL, DEFAULT_STATE_CAP).unwrap();
        let metrics: Vec<String> = outs
            .iter()
            .map(|o| match o {
                Outcome::Done { metric, .. } => metric.to_string(),
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(metrics.len(), 2);
        assert!(metrics.contains(&"20".to_string()) && metrics.contains(&"0".to_string()));
        assert!(matches!(m.run(&e, zero_risk(), Scheduler::LeftFirst, 100), Err(InterpError::BothInRun(_))));
    }

    #[test]
    fn fork_interleavings() {
        let w = world();
        let g = GuardEnv::new();
        let m = Machine::new(Context::new(&w.d, &w.repo, &w.f), &w.policies, &g);
        let e = parse_program("fork { a(AIRPORT) } and { b(AIRPORT) }", &w.d).unwrap();
        let outs = m.explore(&e, zero_risk(), 100, 1000).unwrap();
        assert_eq!(outs.len(), 2);
        let l = m.run(&e, zero_risk(), Scheduler::LeftFirst, 100).unwrap();
        let r = m.run(&e, zero_risk(), Scheduler::RightFirst, 100).unwrap();
        assert_ne!(l.outcome.trace(), r.outcome.trace());
        let s1 = m.run(&e, zero_risk(), Scheduler::Seeded(7), 100).unwrap();
        let s2 = m.run(&e, zero_risk(), Scheduler::Seeded(7), 100).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn security_and_metric_halts() {
        let w = world();
        let plan = BTreeMap::from([(Name::from("r"), Name::from("e1"))]);
        let cx = Context::new(&w.d, &w.repo, &w.f).with_plan(&plan);
        let g = guards(&[("is_available", GuardValue::False), ("can_overbook", GuardValue::True)]);
        let mut m = Machine::new(cx, &w.policies, &g);
        let sec = parse_program(r#"sec "noOB" { (req r : Airport -> Flight) AIRPORT }"#, &w.d).unwrap();
        let rep = m.run(&sec, zero_risk(), Scheduler::LeftFirst, 100).unwrap();
        let Outcome::SecurityHalt { policy, trace } = &rep.outcome else {
            panic!("{:?}", rep.outcome)
        };
        assert_eq!(&**policy, "noOB");
        assert_eq!(render_trace(trace), "[noOB search_flight_for(AIRPORT) overbook(FLIGHT_No)");

        let met = parse_program("met RISK <= 10 { (req r : Airport -> Flight) AIRPORT }", &w.d).unwrap();
        let rep = m.run(&met, zero_risk(), Scheduler::LeftFirst, 100).unwrap();
        assert!(matches!(&rep.outcome, Outcome::MetricHalt { predicted: true, metric, .. } if metric.to_string() == "20"));
        m.enforcement = Enforcement::Stepwise;
        let rep = m.run(&met, zero_risk(), Scheduler::LeftFirst, 100).unwrap();
        let Outcome::MetricHalt { predicted, metric, position, .. } = &rep.outcome else {
            panic!("{:?}", rep.outcome)
        };
        assert!(!predicted);
        assert_eq!(metric.to_string(), "20");
        assert_eq!(*position, 3);
    }

    #[test]
    fn recursion_falls_back_to_stepwise() {
        let w = world();
        let g = guards(&[("loop", GuardValue::True)]);
        let m = Machine::new(Context::new(&w.d, &w.repo, &w.f), &w.policies, &g);
        let e = parse_program(
            "met RISK <= 40 { (fun z(x: Flight) = if loop then (reserve(x); z x) else *) FLIGHT_No }",
            &w.d,
        )
        .unwrap();
        let rep = m.run(&e, zero_risk(), Scheduler::LeftFirst, 1000).unwrap();
        assert_eq!(rep.frames[0].bound, None);
        let Outcome::MetricHalt { metric, predicted, .. } = &rep.outcome else {
            panic!("{:?}", rep.outcome)
        };
        assert_eq!(metric.to_string(), "45");
        assert!(!predicted);
    }

    #[test]
    fn errors() {
        let w = world();
        let g = GuardEnv::new();
        let m = Machine::new(Context::new(&w.d, &w.repo, &w.f), &w.policies, &g);
        let e = parse_program("if is_available then * else *", &w.d).unwrap();
        assert!(matches!(m.run(&e, zero_risk(), Scheduler::LeftFirst, 10), Err(InterpError::UnmappedGuard(_))));
        let r = parse_program("(req r : Airport -> Flight) AIRPORT", &w.d).unwrap();
        assert!(matches!(m.run(&r, zero_risk(), Scheduler::LeftFirst, 10), Err(InterpError::Unplanned(_))));
        assert!(matches!(m.run(&r, zero_risk(), Scheduler::Exhaustive, 10), Err(InterpError::ExhaustiveRun)));
    }
}
