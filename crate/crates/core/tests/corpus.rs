use std::path::PathBuf;

use lreq_core::config::{self, Corpus};
use lreq_core::effects::{analysis_target, infer_closed};
use lreq_core::interp::{Enforcement, GuardValue, Machine, Outcome, Scheduler};
use lreq_core::mnf::{bound, framing_bounds, normalize};
use lreq_core::plans::{classify, enumerate_plans, plan_effect, summed_effect, Classification, Limits, Plan};
use lreq_core::{Expr, HistExpr, Semiring};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Corpus {
    config::load(&dir().join("besttravel/analysis.toml"), None).unwrap()
}

fn program(c: &Corpus, file: &str) -> Expr {
    c.load_program(&dir().join("besttravel").join(file)).unwrap()
}

fn risk(x: f64) -> lreq_core::MetricValue {
    Semiring::risk().value(x).unwrap()
}

fn travel_effect(c: &Corpus, e: &Expr) -> HistExpr {
    let t = infer_closed(&c.context(), e).unwrap();
    analysis_target(e, &t)
}

#[test]
fn every_service_has_its_bound() {
    let c = corpus();
    let got: Vec<f64> = c
        .repo
        .services()
        .iter()
        .map(|s| {
            let b = bound(&s.effect, c.semiring(), c.bounds.mu_iters).unwrap();
            b.to_string().parse().unwrap()
        })
        .collect();
    assert_eq!(got, [20.0, 15.0, 25.0, 15.0, 40.0, 50.0, 28.0, 25.0, 1.0, 0.0]);
}

#[test]
fn besttravel_framings() {
    let c = corpus();
    let e = program(&c, "besttravel.lreq");
    let h = travel_effect(&c, &e);
    let (total, frames) = framing_bounds(&h, c.semiring(), 64).unwrap();
    assert_eq!(total, risk(223.0));
    let inner: Vec<String> = frames.iter().map(|f| f.inner.to_string()).collect();
    let capped: Vec<String> = frames.iter().map(|f| f.capped.to_string()).collect();
    assert_eq!(inner, ["73", "78", "∞"]);
    assert_eq!(capped, ["73", "75", "75"]);
    let nf = normalize(&h, c.semiring(), 64).unwrap();
    assert_eq!(nf.bound, total);
    assert!(!nf.body.has_annotations());
}

#[test]
fn plans_cover_every_combination() {
    let c = corpus();
    let cx = c.context();
    let e = program(&c, "besttravel.lreq");
    assert_eq!(enumerate_plans(&e, &cx).unwrap().len(), 128);
    let hotel = program(&c, "hotel.lreq");
    let plans = enumerate_plans(&hotel, &cx).unwrap();
    assert_eq!(plans.len(), 4);
    let sum = summed_effect(&hotel, &cx).unwrap();
    for p in &plans {
        let one = plan_effect(&hotel, p, &cx).unwrap();
        assert!(lreq_core::history::subsumes(&one, &sum, 1).unwrap(), "{p}");
    }
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

fn run_hotel(c: &Corpus, plan: &Plan, enforcement: Enforcement) -> lreq_core::interp::RunReport {
    let e = program(c, "besttravel.lreq");
    let applied = Expr::App(Box::new(e), Box::new(Expr::Unit));
    let cx = c.context().with_plan(&plan.0);
    let mut m = Machine::new(cx, &c.policies, &c.guards);
    m.enforcement = enforcement;
    m.run(&applied, c.run.initial.clone(), Scheduler::LeftFirst, c.bounds.fuel).unwrap()
}

#[test]
fn hotel_guarding() {
    let c = corpus();
    let halted = run_hotel(&c, &hotel_plan("e6", "e7"), Enforcement::Predictive);
    match &halted.outcome {
        Outcome::MetricHalt { metric, predicted, .. } => {
            assert_eq!(*metric, risk(78.0));
            assert!(predicted);
        }
        other => panic!("{other:?}"),
    }
    for (hotel, pay, b) in [("e6", "e8", 75.0), ("e5", "e8", 65.0)] {
        let rep = run_hotel(&c, &hotel_plan(hotel, pay), Enforcement::Predictive);
        assert_eq!(rep.outcome.kind(), "done", "{:?} {:?}", rep.outcome, rep.frames);
        assert!(rep.frames.iter().any(|f| f.bound == Some(risk(b)) && f.admitted), "{:?}", rep.frames);
    }
    // stepwise checks see the global metric, which includes the flight phase
    let stepwise = run_hotel(&c, &hotel_plan("e5", "e8"), Enforcement::Stepwise);
    match &stepwise.outcome {
        Outcome::MetricHalt { metric, predicted, .. } => {
            assert!(!predicted);
            assert!(Semiring::risk().leq(metric, &risk(75.0)).unwrap() && *metric != risk(75.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn overbooking_is_caught() {
    let mut c = corpus();
    let e = program(&c, "flight_secure.lreq");
    let plan = Plan::from([("rho6", "e8"), ("rho7", "e1")]);
    let cx = c.context();
    let v = classify(&e, &plan, &cx, &c.policies, Limits::default()).unwrap();
    assert!(matches!(v.classification, Classification::Invalid { .. }), "{:?}", v.classification);
    let safe = classify(&e, &Plan::from([("rho6", "e8"), ("rho7", "e2")]), &cx, &c.policies, Limits::default()).unwrap();
    assert!(matches!(safe.classification, Classification::StaticallyValid));

    c.guards.insert("is_available".into(), GuardValue::False);
    let applied = Expr::App(Box::new(e), Box::new(Expr::Unit));
    let m = Machine::new(c.context().with_plan(&plan.0), &c.policies, &c.guards);
    let rep = m.run(&applied, c.run.initial.clone(), Scheduler::LeftFirst, 1000).unwrap();
    assert!(matches!(rep.outcome, Outcome::SecurityHalt { .. }), "{:?}", rep.outcome);
}

#[test]
fn declared_effect_must_match() {
    let c = corpus();
    let text = std::fs::read_to_string(dir().join("besttravel/repository.toml")).unwrap();
    let tmp = std::env::temp_dir().join(format!("lreq-manifest-{}", std::process::id()));
    std::fs::create_dir_all(tmp.join("services")).unwrap();
    for i in 1..=10 {
        let f = format!("services/e{i}.lreq");
        std::fs::copy(dir().join("besttravel").join(&f), tmp.join(&f)).unwrap();
    }
    let bad = text.replace("ℳ[1] sign_64(RCPT)", "ℳ[2] sign_64(RCPT)");
    std::fs::write(tmp.join("repository.toml"), bad).unwrap();
    let err = config::load_repository(&tmp.join("repository.toml"), &c.decls, &c.metric).unwrap_err();
    assert!(matches!(err, config::ConfigError::EffectMismatch { .. }), "{err}");
    std::fs::remove_dir_all(tmp).unwrap();
}

#[test]
fn unit_program_and_custom_semiring() {
    let c = corpus();
    let e = c.load_program(&dir().join("unit.lreq")).unwrap();
    let t = infer_closed(&c.context(), &e).unwrap();
    assert_eq!(t.effect, HistExpr::Empty);
    let text = std::fs::read_to_string(dir().join("semirings/levels.toml")).unwrap();
    let s = config::semiring_from_toml(&text).unwrap();
    assert_eq!(s.elements().unwrap().len(), 4);
}
