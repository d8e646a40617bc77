//! Seeded random programs, history expressions and traces over a small
//! fixed world. Used by the property suites and the benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::effects::{publish, Context, MetricFn, Repository};
use crate::history::{HistExpr, TraceItem};
use crate::lang::{parse_program, Declarations};
use crate::policy::{Event, Policies, UsageAutomaton};
use crate::semiring::{MetricCheck, Notation, Semiring};
use crate::Name;

pub const GUARDS: [&str; 3] = ["g0", "g1", "g2"];

/// Declarations, repository, metric and policy shared by generated programs.
#[derive(Clone, Debug)]
pub struct World {
    pub decls: Declarations,
    pub repo: Repository,
    pub metric: MetricFn,
    pub policies: Policies,
}

impl World {
    pub fn context(&self) -> Context<'_> {
        Context::new(&self.decls, &self.repo, &self.metric)
    }
}

pub fn world() -> World {
    let s = Semiring::risk();
    let mut decls = Declarations::new(s.clone());
    decls.add_domain("Doc", &["RCPT", "SIGNED_DOC"]).unwrap();
    decls.add_domain("Item", &["ITEM", "SPARE"]).unwrap();
    for g in GUARDS {
        decls.guards.insert(g.into());
    }
    decls.policies.insert("no_drop".into());
    let mut metric = MetricFn::new(s.clone());
    for (a, r, v) in [
        ("grab", None, 3.0),
        ("drop", Some("ITEM"), 5.0),
        ("sign", None, 1.0),
        ("copy", Some("RCPT"), 2.0),
        ("copy", Some("SIGNED_DOC"), 4.0),
    ] {
        metric.set(a, r, s.value(v).unwrap()).unwrap();
    }
    let mut repo = Repository::new();
    for (loc, src) in [
        ("s1", "\\x: Doc -> sign(x); SIGNED_DOC"),
        ("s2", "\\x: Doc -> x"),
        ("s3", "\\x: Doc -> grab(ITEM); copy(x); RCPT"),
        ("t1", "\\x: Item -> drop(x); RCPT"),
        ("t2", "\\x: Item -> grab(x); SIGNED_DOC"),
    ] {
        let e = parse_program(src, &decls).unwrap();
        publish(loc, e, &mut repo, &decls, &metric).unwrap();
    }
    let a = UsageAutomaton::new(
        "no_drop",
        &["q0", "q1", "q2"],
        "q0",
        &["q2"],
        &[("q0", "grab", "*", "q1"), ("q1", "drop", "*", "q2")],
    )
    .unwrap();
    let policies = Policies::from([(Name::from("no_drop"), a)]);
    World {
        decls,
        repo,
        metric,
        policies,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ty {
    Unit,
    Doc,
    Item,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Unit => "unit",
            Ty::Doc => "Doc",
            Ty::Item => "Item",
        }
    }

    fn resources(self) -> &'static [&'static str] {
        match self {
            Ty::Unit => &[],
            Ty::Doc => &["RCPT", "SIGNED_DOC"],
            Ty::Item => &["ITEM", "SPARE"],
        }
    }
}

const ACTIONS: [&str; 4] = ["grab", "drop", "sign", "copy"];

/// Generates source text of closed, well-typed programs with at most
/// `max_depth` nested constructs, two requests and one recursive function.
pub struct ProgramGen {
    rng: ChaCha8Rng,
    max_depth: usize,
    requests: usize,
    recursions: usize,
    fresh: usize,
}

impl ProgramGen {
    pub fn new(seed: u64, max_depth: usize) -> Self {
        ProgramGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_depth,
            requests: 0,
            recursions: 0,
            fresh: 0,
        }
    }

    pub fn program(&mut self) -> String {
        self.requests = 0;
        self.recursions = 0;
        self.fresh = 0;
        let ty = *[Ty::Unit, Ty::Doc, Ty::Item].choose(&mut self.rng).unwrap();
        let d = self.max_depth;
        self.expr(ty, d, &mut Vec::new())
    }

    fn var(&mut self, p: &str) -> String {
        self.fresh += 1;
        format!("{p}{}", self.fresh)
    }

    fn guard(&mut self) -> &'static str {
        GUARDS.choose(&mut self.rng).unwrap()
    }

    fn leaf(&mut self, ty: Ty, scope: &[(String, Ty)]) -> String {
        let vars: Vec<&String> = scope.iter().filter(|(_, t)| *t == ty).map(|(x, _)| x).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.5) {
            return vars.choose(&mut self.rng).unwrap().to_string();
        }
        match ty {
            Ty::Unit => "*".into(),
            _ => ty.resources().choose(&mut self.rng).unwrap().to_string(),
        }
    }

    fn resource_arg(&mut self, scope: &[(String, Ty)]) -> String {
        let ty = if self.rng.gen_bool(0.5) { Ty::Doc } else { Ty::Item };
        self.leaf(ty, scope)
    }

    fn expr(&mut self, ty: Ty, depth: usize, scope: &mut Vec<(String, Ty)>) -> String {
        if depth == 0 {
            return self.leaf(ty, scope);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..10) {
            0 => self.leaf(ty, scope),
            1 | 2 => {
                let act = ACTIONS.choose(&mut self.rng).unwrap();
                let arg = self.resource_arg(scope);
                let rest = self.expr(ty, d, scope);
                format!("({act}({arg}); {rest})")
            }
            3 => {
                let g = self.guard();
                let a = self.expr(ty, d, scope);
                let b = self.expr(ty, d, scope);
                format!("(if {g} then {a} else {b})")
            }
            4 => {
                let pty = *[Ty::Unit, Ty::Doc, Ty::Item].choose(&mut self.rng).unwrap();
                let x = self.var("x");
                let arg = self.expr(pty, d, scope);
                scope.push((x.clone(), pty));
                let body = self.expr(ty, d, scope);
                scope.pop();
                format!("((\\{x}: {} -> {body}) {arg})", pty.name())
            }
            5 if ty == Ty::Doc && self.requests < 2 => {
                self.requests += 1;
                let n = self.requests;
                let from = if self.rng.gen_bool(0.5) { Ty::Doc } else { Ty::Item };
                let arg = self.expr(from, d, scope);
                format!("((req r{n} : {} -> Doc) {arg})", from.name())
            }
            6 => {
                let other = *[Ty::Unit, Ty::Doc, Ty::Item].choose(&mut self.rng).unwrap();
                let a = self.expr(ty, d, scope);
                let b = self.expr(other, d, scope);
                format!("(fork {{ {a} }} and {{ {b} }})")
            }
            7 => {
                let k = self.rng.gen_range(0..=12);
                let a = self.expr(ty, d, scope);
                format!("(met RISK <= {k} {{ {a} }})")
            }
            8 => {
                let a = self.expr(ty, d, scope);
                format!("(sec \"no_drop\" {{ {a} }})")
            }
            9 if ty == Ty::Doc && self.recursions == 0 => {
                self.recursions += 1;
                let f = self.var("f");
                let y = self.var("y");
                let g = self.guard();
                let act = ACTIONS.choose(&mut self.rng).unwrap();
                let arg = self.expr(Ty::Doc, d, scope);
                format!("((fun {f}({y}: Doc) = if {g} then {y} else ({act}({y}); {f} {y})) {arg})")
            }
            _ => self.leaf(ty, scope),
        }
    }
}

/// Random history expression over events `a..d` on resources `X, Y`.
/// Recursion variables only occur under a `μ` binding them.
pub fn hist(rng: &mut impl Rng, depth: usize, s: &Semiring) -> HistExpr {
    hist_in(rng, depth, s, &mut Vec::new())
}

fn hist_in(rng: &mut impl Rng, depth: usize, s: &Semiring, bound: &mut Vec<String>) -> HistExpr {
    let event = |rng: &mut dyn rand::RngCore| {
        let a = ["a", "b", "c", "d"][rng.gen_range(0..4)];
        let r = ["X", "Y"][rng.gen_range(0..2)];
        HistExpr::ev(a, r)
    };
    if depth == 0 {
        return match rng.gen_range(0..4) {
            0 => HistExpr::Empty,
            1 if !bound.is_empty() => HistExpr::var(&bound[rng.gen_range(0..bound.len())]),
            _ => event(rng),
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..9) {
        0 => event(rng),
        1 => HistExpr::seq(hist_in(rng, d, s, bound), hist_in(rng, d, s, bound)),
        2 => HistExpr::choice(hist_in(rng, d, s, bound), hist_in(rng, d, s, bound)),
        3 => HistExpr::par(hist_in(rng, d, s, bound), hist_in(rng, d, s, bound)),
        4 | 5 => {
            let v = s.value(rng.gen_range(0..10) as f64).unwrap();
            HistExpr::ann(v, hist_in(rng, d, s, bound))
        }
        6 => HistExpr::sec("p", hist_in(rng, d, s, bound)),
        7 => {
            let t = s.value(rng.gen_range(0..20) as f64).unwrap();
            HistExpr::met(MetricCheck::new(t, Notation::AtMost), hist_in(rng, d, s, bound))
        }
        _ => {
            let h = format!("h{}", bound.len());
            bound.push(h.clone());
            let body = HistExpr::choice(HistExpr::Empty, HistExpr::seq(event(rng), hist_in(rng, d, s, bound)));
            bound.pop();
            HistExpr::mu(&h, body)
        }
    }
}

/// A trace of `len` distinct events `e0(R)`, `e1(R)`, … starting at `from`.
pub fn distinct_trace(from: usize, len: usize) -> Vec<TraceItem> {
    (from..from + len)
        .map(|i| TraceItem::Event(Event::new(&format!("e{i}"), "R")))
        .collect()
}

/// Finished runs checked and plans skipped by [`check_safety`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SafetyTally {
    pub runs: usize,
    pub skipped_plans: usize,
}

/// Explores every plan of a generated program in all interleavings and
/// guard valuations. Each finished run must have a trace denoted by the
/// plan's effect and a metric no worse than `one ⊗ bound`. Plans whose
/// denotation or state space passes the caps are skipped. `Err` carries a
/// counterexample.
pub fn check_safety(src: &str, w: &World, fuel: usize, state_cap: usize) -> Result<SafetyTally, String> {
    use crate::effects::infer_closed;
    use crate::history::{denote, strip_markers, Env};
    use crate::interp::{GuardValue, Machine, Outcome};
    use crate::mnf::bound;
    use crate::plans::{enumerate_plans, plan_effect};

    let e = parse_program(src, &w.decls).map_err(|err| format!("{src}: {err}"))?;
    let cx = w.context();
    infer_closed(&cx, &e).map_err(|err| format!("{src}: {err}"))?;
    let plans = enumerate_plans(&e, &cx).map_err(|err| format!("{src}: {err}"))?;
    let s = &w.decls.semiring;
    let guards = GUARDS.iter().map(|g| (Name::from(*g), GuardValue::Both)).collect();
    let mut tally = SafetyTally::default();
    for plan in plans {
        let h = plan_effect(&e, &plan, &cx).map_err(|err| err.to_string())?;
        let limit = s
            .times(&s.one(), &bound(&h, s, crate::mnf::DEFAULT_MU_ITERS).map_err(|err| err.to_string())?)
            .map_err(|err| err.to_string())?;
        let Ok(traces) = denote(&h, &Env::new(), 3, state_cap) else {
            tally.skipped_plans += 1;
            continue;
        };
        let allowed = traces.stripped();
        let m = Machine::new(cx.with_plan(&plan.0), &w.policies, &guards);
        let Ok(outcomes) = m.explore(&e, s.one(), fuel, state_cap) else {
            tally.skipped_plans += 1;
            continue;
        };
        for o in outcomes {
            if let Outcome::Done { trace, metric, .. } = o {
                let t = strip_markers(&trace);
                if !allowed.contains(&t) {
                    return Err(format!("trace {t:?} of {src} under {plan} is not denoted by {h}"));
                }
                if !s.leq(&limit, &metric).map_err(|err| err.to_string())? {
                    return Err(format!("metric {metric} of {src} under {plan} exceeds bound {limit}"));
                }
                tally.runs += 1;
            }
        }
    }
    Ok(tally)
}
