use super::ast::{Expr, Lambda, FRESH_PREFIX};
use crate::Name;

/// Removes the surface abbreviations:
///
/// * `e; e'`            becomes `(λ_. e') e`
/// * `fork e and e'`    becomes `(e'; λx.x) e`
/// * `(req ρ {φ, γ}) e` becomes `φ[γ⟨(req ρ) e⟩]`, and a bare annotated
///   request is eta-expanded first.
///
/// Introduced binders use the reserved `_g#` prefix, numbered after any
/// such name already present, so the result never captures a source name.
pub fn desugar(e: &Expr) -> Expr {
    let mut fresh = Fresh {
        next: max_fresh(e) + 1,
    };
    go(e, &mut fresh)
}

struct Fresh {
    next: usize,
}

impl Fresh {
    fn name(&mut self) -> Name {
        let n = format!("{FRESH_PREFIX}{}", self.next);
        self.next += 1;
        n.into()
    }
}

fn max_fresh(e: &Expr) -> usize {
    let mut max = 0;
    let mut see = |n: &str| {
        if let Some(k) = n.strip_prefix(FRESH_PREFIX).and_then(|s| s.parse::<usize>().ok()) {
            max = max.max(k);
        }
    };
    e.walk(&mut |e| match e {
        Expr::Var(x) => see(x),
        Expr::Abs(l) => {
            see(&l.param);
            if let Some(z) = &l.self_name {
                see(z);
            }
        }
        _ => {}
    });
    max
}

fn anon(param: Name, body: Expr) -> Expr {
    Expr::Abs(Lambda {
        self_name: None,
        param,
        param_ty: None,
        ret_ty: None,
        body: Box::new(body),
    })
}

fn go(e: &Expr, fresh: &mut Fresh) -> Expr {
    match e {
        Expr::Unit | Expr::Res(_) | Expr::Var(_) => e.clone(),
        Expr::Req(r) if r.is_annotated() => {
            let x = fresh.name();
            let call = Expr::app(Expr::Req(r.plain()), Expr::Var(x.clone()));
            anon(x, wrap_annotations(r, call))
        }
        Expr::Req(_) => e.clone(),
        Expr::Event { action, arg } => Expr::Event {
            action: action.clone(),
            arg: Box::new(go(arg, fresh)),
        },
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => Expr::If {
            guard: guard.clone(),
            then_branch: Box::new(go(then_branch, fresh)),
            else_branch: Box::new(go(else_branch, fresh)),
        },
        Expr::Abs(l) => Expr::Abs(Lambda {
            body: Box::new(go(&l.body, fresh)),
            ..l.clone()
        }),
        Expr::App(f, a) => match &**f {
            Expr::Req(r) if r.is_annotated() => {
                let call = Expr::app(Expr::Req(r.plain()), go(a, fresh));
                wrap_annotations(r, call)
            }
            _ => Expr::app(go(f, fresh), go(a, fresh)),
        },
        Expr::Sec { policy, body } => Expr::Sec {
            policy: policy.clone(),
            body: Box::new(go(body, fresh)),
        },
        Expr::Met { check, body } => Expr::Met {
            check: check.clone(),
            body: Box::new(go(body, fresh)),
        },
        Expr::Seq(a, b) => {
            let first = go(a, fresh);
            let rest = go(b, fresh);
            Expr::app(anon(fresh.name(), rest), first)
        }
        Expr::Fork(a, b) => {
            let left = go(a, fresh);
            let right = go(b, fresh);
            let x = fresh.name();
            let id = anon(x.clone(), Expr::Var(x));
            let then_id = Expr::app(anon(fresh.name(), id), right);
            Expr::app(then_id, left)
        }
    }
}

fn wrap_annotations(r: &super::ast::Request, call: Expr) -> Expr {
    let framed = match &r.check {
        Some(c) => Expr::met(c.clone(), call),
        None => call,
    };
    match &r.policy {
        Some(p) => Expr::Sec {
            policy: p.clone(),
            body: Box::new(framed),
        },
        None => framed,
    }
}
