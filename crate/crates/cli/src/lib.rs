//! The `lreq` command line: effects, normal forms, plan tables and
//! simulated runs for a corpus described by an `analysis.toml`.
//!
//! Every command returns a [`Report`] holding the text to print and the
//! process exit code, so the commands can be driven from tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use lreq_core::config::{self, parse_scheduler, ConfigError, Corpus};
use lreq_core::effects::{analysis_target, infer_closed, Type};
use lreq_core::history::render_trace;
use lreq_core::interp::{InterpError, RunReport};
use lreq_core::lang::parse_program;
use lreq_core::mnf::framing_bounds;
use lreq_core::mnf::normalize;
use lreq_core::plans::{classify, enumerate_plans, framing_verdicts, Classification, FramingVerdict, PlanError, PlanVerdict};
use lreq_core::{Enforcement, Expr, Machine, MetricValue, Outcome, Plan, Scheduler};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TYPE: i32 = 2;
pub const EXIT_PLAN: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;
pub const EXIT_CAP: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "lreq", version, about = "Security and metric analysis of service orchestrations")]
pub struct Cli {
    /// Analysis configuration.
    #[arg(long, global = true, default_value = "analysis.toml")]
    pub config: PathBuf,
    /// Built-in semiring replacing the configured one.
    #[arg(long, global = true)]
    pub semiring: Option<String>,
    /// Unfolding depth for recursive effects.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Iteration limit for recursive bounds.
    #[arg(long, global = true)]
    pub mu_iters: Option<usize>,
    /// Step limit for a run.
    #[arg(long, global = true)]
    pub fuel: Option<usize>,
    /// Seed of the `seeded` scheduler.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Which redex fires when branches run in parallel.
    #[arg(long, global = true, value_enum)]
    pub scheduler: Option<SchedulerArg>,
    /// How metric framings are guarded at runtime.
    #[arg(long, global = true, value_enum)]
    pub enforcement: Option<EnforcementArg>,
    /// Plan number from `plans` (`7` or `p7`) or explicit `rho1=e9,rho2=e7`.
    #[arg(long, global = true)]
    pub plan: Option<String>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Type and effect of a program.
    Effects { program: PathBuf },
    /// Metric normal form and per-framing bounds.
    Mnf { program: PathBuf },
    /// Every composition plan with its verdict.
    Plans { program: PathBuf },
    /// Simulate a run under one plan.
    Run {
        program: PathBuf,
        /// Resource passed to a program that is a function of a domain.
        #[arg(long)]
        input: Option<String>,
    },
    /// Succeeds iff some plan is valid, possibly with runtime guards.
    Check { program: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchedulerArg {
    Left,
    Right,
    Seeded,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnforcementArg {
    Stepwise,
    Predictive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Report {
    fn ok(stdout: String) -> Self {
        Report {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, msg: impl std::fmt::Display) -> Self {
        Report {
            code,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

pub fn execute(cli: &Cli) -> Report {
    let corpus = match load(cli) {
        Ok(c) => c,
        Err(e) => return Report::fail(EXIT_TYPE, e),
    };
    let (Command::Effects { program }
    | Command::Mnf { program }
    | Command::Plans { program }
    | Command::Run { program, .. }
    | Command::Check { program }) = &cli.command;
    let path = locate(program, &corpus);
    let e = match corpus.load_program(&path) {
        Ok(e) => e,
        Err(err) => return Report::fail(EXIT_TYPE, err),
    };
    let s = Session { cli, corpus: &corpus, e };
    match &cli.command {
        Command::Effects { .. } => s.effects(),
        Command::Mnf { .. } => s.mnf(),
        Command::Plans { .. } => s.plans(),
        Command::Run { .. } => s.run(),
        Command::Check { .. } => s.check(),
    }
}

fn load(cli: &Cli) -> Result<Corpus, ConfigError> {
    let mut c = config::load(&cli.config, cli.semiring.as_deref())?;
    let invalid = |message: String| ConfigError::Invalid {
        path: cli.config.clone(),
        message,
    };
    if let Some(d) = cli.depth {
        c.bounds.depth = d;
    }
    if let Some(k) = cli.mu_iters {
        c.bounds.mu_iters = k;
    }
    if let Some(f) = cli.fuel {
        c.bounds.fuel = f;
    }
    if c.bounds.depth == 0 || c.bounds.mu_iters == 0 {
        return Err(invalid("bounds must be positive".into()));
    }
    if let Some(seed) = cli.seed {
        c.run.seed = seed;
        if let Scheduler::Seeded(_) = c.run.scheduler {
            c.run.scheduler = Scheduler::Seeded(seed);
        }
    }
    if let Some(s) = cli.scheduler {
        let name = match s {
            SchedulerArg::Left => "left",
            SchedulerArg::Right => "right",
            SchedulerArg::Seeded => "seeded",
            SchedulerArg::Exhaustive => "exhaustive",
        };
        c.run.scheduler = parse_scheduler(name, c.run.seed).map_err(invalid)?;
    }
    if let Some(e) = cli.enforcement {
        c.run.enforcement = match e {
            EnforcementArg::Stepwise => Enforcement::Stepwise,
            EnforcementArg::Predictive => Enforcement::Predictive,
        };
    }
    Ok(c)
}

/// Program paths are tried as given, then relative to the configuration.
fn locate(p: &Path, c: &Corpus) -> PathBuf {
    if p.exists() || p.is_absolute() {
        p.to_path_buf()
    } else {
        c.resolve_path(p)
    }
}

fn machine<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn plan_code(e: &PlanError) -> i32 {
    match e {
        PlanError::Type(_) => EXIT_TYPE,
        PlanError::History(_) => EXIT_CAP,
        _ => EXIT_PLAN,
    }
}

struct Session<'a> {
    cli: &'a Cli,
    corpus: &'a Corpus,
    e: Expr,
}

impl Session<'_> {
    fn text(&self) -> bool {
        self.cli.format == Format::Text
    }

    fn plan_table(&self) -> Result<Vec<Plan>, PlanError> {
        enumerate_plans(&self.e, &self.corpus.context())
    }

    /// The plan chosen with `--plan`, or the only plan there is.
    fn chosen_plan(&self) -> Result<Plan, Report> {
        let plans = self.plan_table().map_err(|e| Report::fail(plan_code(&e), e))?;
        let Some(arg) = &self.cli.plan else {
            return match plans.len() {
                1 => Ok(plans.into_iter().next().unwrap()),
                n => Err(Report::fail(EXIT_PLAN, format!("{n} plans exist, choose one with --plan"))),
            };
        };
        let index = arg.strip_prefix('p').unwrap_or(arg);
        if let Ok(i) = index.parse::<usize>() {
            return plans
                .get(i.wrapping_sub(1))
                .cloned()
                .ok_or_else(|| Report::fail(EXIT_PLAN, format!("no plan {arg}; there are {}", plans.len())));
        }
        let mut plan = Plan::default();
        for pair in arg.split(',') {
            let Some((r, l)) = pair.split_once('=') else {
                return Err(Report::fail(EXIT_PLAN, format!("bad plan entry `{pair}`")));
            };
            plan.0.insert(r.trim().into(), l.trim().into());
        }
        if !plans.contains(&plan) {
            return Err(Report::fail(EXIT_PLAN, format!("`{plan}` is not a plan of this program")));
        }
        Ok(plan)
    }

    fn effects(&self) -> Report {
        let t = match infer_closed(&self.corpus.context(), &self.e) {
            Ok(t) => t,
            Err(e) => return Report::fail(EXIT_TYPE, e),
        };
        if self.text() {
            let mut out = format!("{}, {}\n", t.ty, t.effect);
            if let Some((_, latent, _)) = t.ty.as_arrow() {
                let _ = writeln!(out, "latent: {latent}");
            }
            Report::ok(out)
        } else {
            let latent = t.ty.as_arrow().map(|(_, h, _)| h.to_string());
            Report::ok(machine(&json!({
                "type": t.ty.to_string(),
                "effect": t.effect.to_string(),
                "latent": latent,
            })))
        }
    }

    fn mnf(&self) -> Report {
        let plan = match &self.cli.plan {
            Some(_) => match self.chosen_plan() {
                Ok(p) => Some(p),
                Err(r) => return r,
            },
            None => None,
        };
        let base = self.corpus.context();
        let cx = match &plan {
            Some(p) => base.with_plan(&p.0),
            None => base,
        };
        let t = match infer_closed(&cx, &self.e) {
            Ok(t) => t,
            Err(e) => return Report::fail(EXIT_TYPE, e),
        };
        let h = analysis_target(&self.e, &t);
        let s = self.corpus.semiring();
        let k = self.corpus.bounds.mu_iters;
        let (nf, (_, frames)) = match normalize(&h, s, k).and_then(|nf| Ok((nf, framing_bounds(&h, s, k)?))) {
            Ok(x) => x,
            Err(e) => return Report::fail(EXIT_TYPE, e),
        };
        if self.text() {
            let mut out = format!("bound: {}\n", nf.bound);
            if !frames.is_empty() {
                out.push_str("framings:\n");
            }
            for (i, f) in frames.iter().enumerate() {
                let rec = if f.in_recursion { "  (in recursion)" } else { "" };
                let _ = writeln!(
                    out,
                    "  {:>2}  {:<10} inner {:<6} capped {}{rec}",
                    i + 1,
                    f.check.label(),
                    f.inner.to_string(),
                    f.capped
                );
            }
            let _ = writeln!(out, "normal form: {}", nf.as_hist());
            let _ = writeln!(out, "rewrite steps: {}", nf.trail.len());
            Report::ok(out)
        } else {
            let frames: Vec<_> = frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    json!({
                        "index": i + 1,
                        "check": f.check.label(),
                        "inner": f.inner,
                        "capped": f.capped,
                        "in_recursion": f.in_recursion,
                    })
                })
                .collect();
            let rules: Vec<String> = nf.trail.iter().map(|s| s.rule.to_string()).collect();
            Report::ok(machine(&json!({
                "bound": nf.bound,
                "framings": frames,
                "normal_form": nf.as_hist().to_string(),
                "trail": rules,
            })))
        }
    }

    fn verdicts(&self) -> Result<Vec<PlanVerdict>, Report> {
        let plans = self.plan_table().map_err(|e| Report::fail(plan_code(&e), e))?;
        let cx = self.corpus.context();
        plans
            .iter()
            .map(|p| classify(&self.e, p, &cx, &self.corpus.policies, self.corpus.bounds.limits()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Report::fail(plan_code(&e), e))
    }

    /// Framing verdicts of the effect that sums every candidate.
    fn summed(&self) -> Result<(MetricValue, Vec<FramingVerdict>), Report> {
        let cx = self.corpus.context();
        let t = infer_closed(&cx, &self.e).map_err(|e| Report::fail(EXIT_TYPE, e))?;
        let h = analysis_target(&self.e, &t);
        framing_verdicts(&h, &cx, self.corpus.bounds.mu_iters).map_err(|e| Report::fail(plan_code(&e), e))
    }

    fn plans(&self) -> Report {
        let verdicts = match self.verdicts() {
            Ok(v) => v,
            Err(r) => return r,
        };
        let (sum_bound, sum_frames) = match self.summed() {
            Ok(x) => x,
            Err(r) => return r,
        };
        let guarded: Vec<usize> = sum_frames.iter().filter(|f| f.needs_guard).map(|f| f.index + 1).collect();
        if !self.text() {
            let rows: Vec<_> = verdicts
                .iter()
                .enumerate()
                .map(|(i, v)| json!({ "id": format!("p{}", i + 1), "verdict": v }))
                .collect();
            return Report::ok(machine(&json!({
                "sum": { "bound": sum_bound, "framings": sum_frames },
                "plans": rows,
            })));
        }
        let mut out = format!("{:<5} {:<8} {:<22}", "sum", sum_bound.to_string(), "all candidates");
        if !guarded.is_empty() {
            let f: Vec<String> = guarded.iter().map(|i| i.to_string()).collect();
            let _ = write!(out, " [guard framing {}]", f.join(", "));
        }
        out.push('\n');
        for (i, v) in verdicts.iter().enumerate() {
            let _ = write!(out, "p{:<4} {:<8} {:<22} {}", i + 1, v.bound.to_string(), v.classification.name(), v.plan);
            match &v.classification {
                Classification::NeedsRuntimeGuards { framings } => {
                    let f: Vec<String> = framings.iter().map(|i| (i + 1).to_string()).collect();
                    let _ = write!(out, "  [guard framing {}]", f.join(", "));
                }
                Classification::Invalid { violation, witness } => {
                    let _ = write!(out, "  [{} violated by {}]", violation.policy, render_trace(witness));
                }
                Classification::Inconclusive { reason } => {
                    let _ = write!(out, "  [{reason}]");
                }
                Classification::StaticallyValid => {}
            }
            out.push('\n');
        }
        let summary = tally(&verdicts);
        let _ = writeln!(out, "{} plans: {summary}", verdicts.len());
        Report::ok(out)
    }

    fn check(&self) -> Report {
        let verdicts = match self.verdicts() {
            Ok(v) => v,
            Err(r) => return r,
        };
        let usable: Vec<usize> = verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| {
                matches!(
                    v.classification,
                    Classification::StaticallyValid | Classification::NeedsRuntimeGuards { .. }
                )
            })
            .map(|(i, _)| i + 1)
            .collect();
        let code = if !usable.is_empty() {
            EXIT_OK
        } else if verdicts.iter().any(|v| matches!(v.classification, Classification::Inconclusive { .. })) {
            EXIT_CAP
        } else {
            EXIT_PLAN
        };
        let stdout = if self.text() {
            format!("{} of {} plans usable: {}\n", usable.len(), verdicts.len(), tally(&verdicts))
        } else {
            machine(&json!({
                "usable": usable.iter().map(|i| format!("p{i}")).collect::<Vec<_>>(),
                "plans": verdicts.len(),
            }))
        };
        Report {
            code,
            stdout,
            stderr: String::new(),
        }
    }

    fn run(&self) -> Report {
        let plan = match self.chosen_plan() {
            Ok(p) => p,
            Err(r) => return r,
        };
        let cx = self.corpus.context().with_plan(&plan.0);
        let t = match infer_closed(&cx, &self.e) {
            Ok(t) => t,
            Err(e) => return Report::fail(EXIT_TYPE, e),
        };
        let input = match &self.cli.command {
            Command::Run { input, .. } => input.clone(),
            _ => None,
        };
        let e = match (t.ty.as_arrow(), input) {
            (_, Some(r)) => {
                let arg = match parse_program(&r, &self.corpus.decls) {
                    Ok(a) => a,
                    Err(err) => return Report::fail(EXIT_TYPE, err),
                };
                let applied = Expr::App(Box::new(self.e.clone()), Box::new(arg));
                if let Err(err) = infer_closed(&cx, &applied) {
                    return Report::fail(EXIT_TYPE, err);
                }
                applied
            }
            (Some((Type::Unit, _, _)), None) => Expr::App(Box::new(self.e.clone()), Box::new(Expr::Unit)),
            _ => self.e.clone(),
        };
        let mut m = Machine::new(cx, &self.corpus.policies, &self.corpus.guards);
        m.enforcement = self.corpus.run.enforcement;
        m.mu_iters = self.corpus.bounds.mu_iters;
        let d0 = self.corpus.run.initial.clone();
        let fuel = self.corpus.bounds.fuel;
        if self.corpus.run.scheduler == Scheduler::Exhaustive {
            return match m.explore(&e, d0, fuel, self.corpus.bounds.state_cap) {
                Ok(outcomes) => self.explored(&plan, &outcomes),
                Err(err) => Report::fail(interp_code(&err), err),
            };
        }
        match m.run(&e, d0, self.corpus.run.scheduler, fuel) {
            Ok(rep) => self.ran(&plan, &rep),
            Err(err) => Report::fail(interp_code(&err), err),
        }
    }

    fn ran(&self, plan: &Plan, rep: &RunReport) -> Report {
        let code = outcome_code(&rep.outcome);
        let stdout = if self.text() {
            let mut out = format!("plan: {plan}\n");
            for (i, l) in rep.log.iter().enumerate() {
                let _ = writeln!(out, "{:>4}  {l}", i + 1);
            }
            for f in &rep.frames {
                let b = f.bound.as_ref().map_or("stepwise".to_string(), |b| b.to_string());
                let verdict = if f.admitted { "admitted" } else { "refused" };
                let _ = writeln!(out, "frame {} at {}: bound {b}, {verdict}", f.check, f.position);
            }
            out.push_str(&describe(&rep.outcome));
            out
        } else {
            machine(&json!({ "plan": plan, "report": rep }))
        };
        Report {
            code,
            stdout,
            stderr: String::new(),
        }
    }

    fn explored(&self, plan: &Plan, outcomes: &[Outcome]) -> Report {
        let code = outcomes.iter().map(outcome_code).max().unwrap_or(EXIT_OK);
        let stdout = if self.text() {
            let mut out = format!("plan: {plan}\n{} outcomes\n", outcomes.len());
            for o in outcomes {
                out.push_str(&describe(o));
            }
            out
        } else {
            machine(&json!({ "plan": plan, "outcomes": outcomes }))
        };
        Report {
            code,
            stdout,
            stderr: String::new(),
        }
    }
}

fn tally(verdicts: &[PlanVerdict]) -> String {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for v in verdicts {
        let n = v.classification.name();
        match counts.iter_mut().find(|(k, _)| *k == n) {
            Some((_, c)) => *c += 1,
            None => counts.push((n, 1)),
        }
    }
    counts.iter().map(|(k, c)| format!("{c} {k}")).collect::<Vec<_>>().join(", ")
}

fn outcome_code(o: &Outcome) -> i32 {
    match o {
        Outcome::Done { .. } => EXIT_OK,
        Outcome::OutOfFuel { .. } => EXIT_CAP,
        _ => EXIT_VIOLATION,
    }
}

fn interp_code(e: &InterpError) -> i32 {
    match e {
        InterpError::StateCap(..) => EXIT_CAP,
        InterpError::Unplanned(..) => EXIT_PLAN,
        _ => EXIT_TYPE,
    }
}

fn describe(o: &Outcome) -> String {
    let trace = render_trace(o.trace());
    match o {
        Outcome::Done { value, metric, .. } => format!("done: value {value}, metric {metric}\ntrace: {trace}\n"),
        Outcome::SecurityHalt { policy, .. } => format!("halted: policy {policy} violated\ntrace: {trace}\n"),
        Outcome::MetricHalt {
            check,
            metric,
            predicted,
            position,
            ..
        } => {
            let how = if *predicted { "predicted" } else { "reached" };
            format!("halted: {check} fails, {how} {metric} at position {position}\ntrace: {trace}\n")
        }
        Outcome::Stuck { reason, .. } => format!("stuck: {reason}\ntrace: {trace}\n"),
        Outcome::OutOfFuel { metric, .. } => format!("out of fuel: metric {metric}\ntrace: {trace}\n"),
    }
}
