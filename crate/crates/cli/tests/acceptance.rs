//! The ten acceptance criteria, one verdict line each. Exits non-zero when
//! any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lreq_cli::{execute, Cli};
use lreq_core::config::{self, Corpus};
use lreq_core::effects::{analysis_target, infer_closed};
use lreq_core::history::{denote, interleave, Env, HistExpr, TraceSet};
use lreq_core::interp::{Enforcement, GuardValue, Machine, Outcome, Scheduler};
use lreq_core::mnf::{bound, framing_bounds, normalize};
use lreq_core::plans::Plan;
use lreq_core::sample::{self, ProgramGen};
use lreq_core::{Expr, MetricValue, Semiring};

type Verdict = Result<String, String>;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn config_path() -> PathBuf {
    corpus_dir().join("besttravel/analysis.toml")
}

fn corpus() -> Corpus {
    config::load(&config_path(), None).expect("corpus loads")
}

fn program(c: &Corpus, file: &str) -> Expr {
    c.load_program(&corpus_dir().join("besttravel").join(file)).expect("program parses")
}

fn risk(x: f64) -> MetricValue {
    Semiring::risk().value(x).unwrap()
}

fn within(start: Instant, limit: Duration, what: String) -> Verdict {
    let took = start.elapsed();
    if took <= limit {
        Ok(format!("{what} in {took:.2?}"))
    } else {
        Err(format!("{what} but took {took:.2?}, limit {limit:?}"))
    }
}

fn semiring_laws() -> Verdict {
    let start = Instant::now();
    let text = std::fs::read_to_string(corpus_dir().join("semirings/levels.toml")).map_err(|e| e.to_string())?;
    let levels = config::semiring_from_toml(&text)?;
    let els = levels.elements().unwrap();
    let mut triples = 0;
    for a in &els {
        for b in &els {
            for c in &els {
                let v = levels.law_violations(a, b, c).map_err(|e| e.to_string())?;
                if !v.is_empty() {
                    return Err(format!("levels ({a}, {b}, {c}): {v:?}"));
                }
                triples += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (r, t) = (Semiring::risk(), Semiring::trust());
    for _ in 0..10_000 {
        // integers and dyadic fractions keep f64 arithmetic exact
        let rv = |rng: &mut ChaCha8Rng| {
            if rng.gen_ratio(1, 20) {
                r.zero()
            } else {
                r.value(rng.gen_range(0..100_000) as f64).unwrap()
            }
        };
        let tv = |rng: &mut ChaCha8Rng| t.value(rng.gen_range(0..=1024) as f64 / 1024.0).unwrap();
        let (a, b, c) = (rv(&mut rng), rv(&mut rng), rv(&mut rng));
        let v = r.law_violations(&a, &b, &c).map_err(|e| e.to_string())?;
        if !v.is_empty() {
            return Err(format!("risk ({a}, {b}, {c}): {v:?}"));
        }
        let (a, b, c) = (tv(&mut rng), tv(&mut rng), tv(&mut rng));
        let v = t.law_violations(&a, &b, &c).map_err(|e| e.to_string())?;
        if !v.is_empty() {
            return Err(format!("trust ({a}, {b}, {c}): {v:?}"));
        }
    }
    within(
        start,
        Duration::from_secs(5),
        format!("{triples} finite triples and 10000 triples each on risk and trust hold"),
    )
}

fn service_bounds() -> Verdict {
    let start = Instant::now();
    let c = corpus();
    let got: Vec<MetricValue> = c
        .repo
        .services()
        .iter()
        .map(|s| bound(&s.effect, c.semiring(), c.bounds.mu_iters))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let want: Vec<MetricValue> = [20.0, 15.0, 25.0, 15.0, 40.0, 50.0, 28.0, 25.0, 1.0, 0.0].map(risk).to_vec();
    let shown: Vec<String> = got.iter().map(|v| v.to_string()).collect();
    if got != want {
        return Err(format!("bounds {shown:?}"));
    }
    within(start, Duration::from_secs(1), format!("bounds e1..e10 = {}", shown.join(", ")))
}

fn travel_effect(c: &Corpus) -> Result<HistExpr, String> {
    let e = program(c, "besttravel.lreq");
    let t = infer_closed(&c.context(), &e).map_err(|e| e.to_string())?;
    Ok(analysis_target(&e, &t))
}

fn besttravel_totals() -> Verdict {
    let start = Instant::now();
    let c = corpus();
    let h = travel_effect(&c)?;
    let (total, frames) = framing_bounds(&h, c.semiring(), c.bounds.mu_iters).map_err(|e| e.to_string())?;
    let capped: Vec<MetricValue> = frames.iter().map(|f| f.capped.clone()).collect();
    let inner: Vec<String> = frames.iter().map(|f| f.inner.to_string()).collect();
    if capped != [73.0, 75.0, 75.0].map(risk) || total != risk(223.0) || inner[1] != "78" || inner[2] != "∞" {
        return Err(format!("framings {inner:?} capped {capped:?}, total {total}"));
    }
    within(
        start,
        Duration::from_secs(1),
        format!("framings 73, 75 (from 78), 75 (from ∞), total {total}"),
    )
}

fn execution_trace() -> Verdict {
    let start = Instant::now();
    let mut c = corpus();
    c.guards.insert("is_available".into(), GuardValue::True);
    let e1 = c.repo.get("e1").and_then(|s| s.implementation.clone()).ok_or("e1 has no implementation")?;
    let e = Expr::App(Box::new(e1), Box::new(Expr::Res("AIRPORT".into())));
    let m = Machine::new(c.context(), &c.policies, &c.guards);
    let rep = m.run(&e, c.semiring().one(), Scheduler::LeftFirst, 100).map_err(|e| e.to_string())?;
    let Outcome::Done { trace, metric, .. } = &rep.outcome else {
        return Err(format!("outcome {:?}", rep.outcome));
    };
    let shown = lreq_core::history::render_trace(trace);
    if shown != "search_flight_for(AIRPORT) reserve(FLIGHT_No)" || *metric != risk(15.0) {
        return Err(format!("trace {shown}, metric {metric}"));
    }
    within(start, Duration::from_secs(1), format!("trace [{shown}], metric {metric}"))
}

fn hotel_plan(hotel: &str, pay: &str) -> Plan {
    Plan::from([
        ("rho1", "e9"),
        ("rho2", pay),
        ("rho3", hotel),
        ("rho4", "e8"),
        ("rho5", "e4"),
        ("rho6", "e8"),
        ("rho7", "e2"),
    ])
}

fn runtime_guarding() -> Verdict {
    let c = corpus();
    let e = Expr::App(Box::new(program(&c, "besttravel.lreq")), Box::new(Expr::Unit));
    let mut seen = Vec::new();
    for (hotel, pay, want) in [("e6", "e7", 78.0), ("e6", "e8", 75.0), ("e5", "e8", 65.0)] {
        let plan = hotel_plan(hotel, pay);
        let mut m = Machine::new(c.context().with_plan(&plan.0), &c.policies, &c.guards);
        m.enforcement = Enforcement::Predictive;
        let rep = m.run(&e, c.run.initial.clone(), Scheduler::LeftFirst, c.bounds.fuel).map_err(|e| e.to_string())?;
        let hotel_frame = rep.frames.iter().find(|f| f.bound == Some(risk(want)));
        let ok = match (&rep.outcome, hotel_frame) {
            (Outcome::MetricHalt { metric, predicted: true, .. }, Some(f)) if want > 75.0 => *metric == risk(want) && !f.admitted,
            (Outcome::Done { .. }, Some(f)) if want <= 75.0 => f.admitted,
            _ => false,
        };
        if !ok {
            return Err(format!("({hotel},{pay}): {} with frames {:?}", rep.outcome.kind(), rep.frames));
        }
        let what = match &rep.outcome {
            Outcome::Done { .. } => format!("done at {want}"),
            _ => format!("halt at {want}"),
        };
        seen.push(format!("({hotel},{pay}) {what}"));
    }
    Ok(seen.join(", "))
}

/// Criteria 6 and 7 share one corpus of generated programs.
fn generated_programs() -> (Verdict, Verdict) {
    let start = Instant::now();
    let w = sample::world();
    let mut gen = ProgramGen::new(2024, 5);
    let (mut programs, mut runs, mut drawn) = (0, 0, 0);
    while programs < 500 && drawn < 2000 {
        drawn += 1;
        let src = gen.program();
        match sample::check_safety(&src, &w, 300, 50_000) {
            Ok(t) if t.skipped_plans == 0 => {
                programs += 1;
                runs += t.runs;
            }
            Ok(_) => {}
            Err(cex) if cex.starts_with("metric") => {
                return (Ok("no trace counterexample before the metric one".into()), Err(cex));
            }
            Err(cex) => return (Err(cex), Err("not reached".into())),
        }
    }
    if programs < 500 {
        let msg = format!("only {programs} of {drawn} programs stayed under the caps");
        return (Err(msg.clone()), Err(msg));
    }
    let safety = within(
        start,
        Duration::from_secs(60),
        format!("{programs} programs, {runs} finished runs, every trace denoted"),
    );
    (safety, Ok(format!("{runs} finished runs within one ⊗ bound")))
}

fn equational_soundness() -> Verdict {
    let c = corpus();
    let s = c.semiring().clone();
    let mut exprs: Vec<HistExpr> = c.repo.services().iter().map(|x| x.effect.clone()).collect();
    exprs.push(travel_effect(&c)?);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        exprs.push(sample::hist(&mut rng, 4, &s));
    }
    let (mut steps, mut truncated) = (0, 0);
    for h in &exprs {
        let nf = normalize(h, &s, c.bounds.mu_iters).map_err(|e| e.to_string())?;
        for step in &nf.trail {
            let env: Env = step
                .before
                .free_vars()
                .into_iter()
                .chain(step.after.free_vars())
                .map(|v| (v, TraceSet::single(vec![])))
                .collect();
            match (denote(&step.before, &env, 2, 100_000), denote(&step.after, &env, 2, 100_000)) {
                (Ok(a), Ok(b)) if a == b => steps += 1,
                (Ok(_), Ok(_)) => return Err(format!("{} changes the traces of {}", step.rule, step.before)),
                _ => truncated += 1,
            }
        }
    }
    Ok(format!("{steps} rewrite steps over {} expressions keep their traces ({truncated} truncated)", exprs.len()))
}

fn interleavings() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for n in 0..=8usize {
        for k in 0..=n {
            let offset = rng.gen_range(0..100);
            let x = sample::distinct_trace(offset, k);
            let y = sample::distinct_trace(offset + k, n - k);
            let all = interleave(&x, &y);
            let binom = (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
            if all.len() != binom {
                return Err(format!("|x|={k}, |y|={}: {} interleavings, expected {binom}", n - k, all.len()));
            }
            for t in &all {
                let left: Vec<_> = t.iter().filter(|i| x.contains(i)).cloned().collect();
                let right: Vec<_> = t.iter().filter(|i| y.contains(i)).cloned().collect();
                if left != x || right != y {
                    return Err(format!("projection of {t:?} loses an input"));
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} size pairs with |x|+|y| <= 8 match the binomial count and project back"))
}

fn invoke(args: &[&str]) -> lreq_cli::Report {
    let config = config_path();
    let mut argv = vec!["lreq", "--config", config.to_str().unwrap(), "--format", "machine"];
    argv.extend_from_slice(args);
    execute(&Cli::parse_from(argv))
}

fn determinism() -> Verdict {
    let runs: [&[&str]; 3] = [
        &["plans", "besttravel.lreq"],
        &["--scheduler", "seeded", "--seed", "42", "--plan", "p77", "run", "besttravel.lreq"],
        &["--scheduler", "seeded", "--seed", "42", "--plan", "p12", "run", "besttravel.lreq"],
    ];
    for args in runs {
        let (a, b) = (invoke(args), invoke(args));
        if a.stdout.is_empty() || a.code == lreq_cli::EXIT_TYPE {
            return Err(format!("{args:?} failed: {}", a.stderr));
        }
        if a != b {
            return Err(format!("{args:?} differs between invocations"));
        }
    }
    Ok("plans and seeded runs produce byte-identical machine output".into())
}

fn main() {
    let (c6, c7) = generated_programs();
    let results: Vec<(&str, Verdict)> = vec![
        ("semiring laws", semiring_laws()),
        ("service bounds", service_bounds()),
        ("BestTravel totals", besttravel_totals()),
        ("execution trace", execution_trace()),
        ("runtime guarding", runtime_guarding()),
        ("type safety", c6),
        ("metric safety", c7),
        ("equational soundness", equational_soundness()),
        ("interleaving oracle", interleavings()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        match v {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
