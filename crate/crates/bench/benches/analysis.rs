use criterion::{black_box, criterion_group, criterion_main, Criterion};

use lreq_bench::travel;
use lreq_core::effects::{analysis_target, infer_closed};
use lreq_core::interp::{Machine, Scheduler};
use lreq_core::mnf::normalize;
use lreq_core::plans::{classify, enumerate_plans};
use lreq_core::Expr;

fn inference(c: &mut Criterion) {
    let (corpus, e) = travel("besttravel.lreq");
    let cx = corpus.context();
    c.bench_function("infer besttravel", |b| b.iter(|| infer_closed(&cx, black_box(&e)).unwrap()));
}

fn normal_form(c: &mut Criterion) {
    let (corpus, e) = travel("besttravel.lreq");
    let t = infer_closed(&corpus.context(), &e).unwrap();
    let h = analysis_target(&e, &t);
    c.bench_function("normalize besttravel", |b| {
        b.iter(|| normalize(black_box(&h), corpus.semiring(), corpus.bounds.mu_iters).unwrap())
    });
}

fn planning(c: &mut Criterion) {
    let (corpus, e) = travel("hotel.lreq");
    let cx = corpus.context();
    c.bench_function("enumerate and classify hotel plans", |b| {
        b.iter(|| {
            for p in enumerate_plans(&e, &cx).unwrap() {
                black_box(classify(&e, &p, &cx, &corpus.policies, corpus.bounds.limits()).unwrap());
            }
        })
    });
}

fn execution(c: &mut Criterion) {
    let (corpus, e) = travel("hotel.lreq");
    let cx = corpus.context();
    let plan = enumerate_plans(&e, &cx).unwrap().remove(0);
    let m = Machine::new(cx.with_plan(&plan.0), &corpus.policies, &corpus.guards);
    let e = Expr::App(Box::new(e), Box::new(Expr::Unit));
    let d0 = corpus.run.initial.clone();
    c.bench_function("run hotel", |b| {
        b.iter(|| m.run(black_box(&e), d0.clone(), Scheduler::LeftFirst, corpus.bounds.fuel).unwrap())
    });
    c.bench_function("explore hotel", |b| {
        b.iter(|| m.explore(black_box(&e), d0.clone(), corpus.bounds.fuel, corpus.bounds.state_cap).unwrap())
    });
}

criterion_group!(benches, inference, normal_form, planning, execution);
criterion_main!(benches);
