use std::collections::BTreeSet;
use std::fmt;

use crate::semiring::MetricCheck;
use crate::Name;

/// Prefix of names introduced by desugaring. It cannot be written in
/// source because `#` is not an identifier character.
pub const FRESH_PREFIX: &str = "_g#";

/// A type written in source: `unit` or a resource-domain name.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeAnn {
    Unit,
    Dom(Name),
}

impl fmt::Display for TypeAnn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeAnn::Unit => f.write_str("unit"),
            TypeAnn::Dom(d) => f.write_str(d),
        }
    }
}

/// `λ_z x. e`. `self_name` is `None` for the non-recursive abbreviation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lambda {
    pub self_name: Option<Name>,
    pub param: Name,
    pub param_ty: Option<TypeAnn>,
    pub ret_ty: Option<TypeAnn>,
    pub body: Box<Expr>,
}

/// `req ρ : τ -> τ'`, optionally carrying the policy and metric check of
/// the annotated-request abbreviation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Request {
    pub id: Name,
    pub input: TypeAnn,
    pub output: TypeAnn,
    pub policy: Option<Name>,
    pub check: Option<MetricCheck>,
}

impl Request {
    pub fn plain(&self) -> Request {
        Request {
            policy: None,
            check: None,
            ..self.clone()
        }
    }

    pub fn is_annotated(&self) -> bool {
        self.policy.is_some() || self.check.is_some()
    }
}

/// λ^req terms. `Seq` and `Fork` are surface sugar removed by
/// [`desugar`](super::desugar).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Unit,
    Res(Name),
    Var(Name),
    Event {
        action: Name,
        arg: Box<Expr>,
    },
    If {
        guard: Name,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    Abs(Lambda),
    App(Box<Expr>, Box<Expr>),
    Sec {
        policy: Name,
        body: Box<Expr>,
    },
    Met {
        check: MetricCheck,
        body: Box<Expr>,
    },
    Req(Request),
    Seq(Box<Expr>, Box<Expr>),
    Fork(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn res(name: &str) -> Expr {
        Expr::Res(name.into())
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.into())
    }

    pub fn event(action: &str, arg: Expr) -> Expr {
        Expr::Event {
            action: action.into(),
            arg: Box::new(arg),
        }
    }

    pub fn app(f: Expr, a: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(a))
    }

    pub fn lam(param: &str, body: Expr) -> Expr {
        Expr::Abs(Lambda {
            self_name: None,
            param: param.into(),
            param_ty: None,
            ret_ty: None,
            body: Box::new(body),
        })
    }

    pub fn fun(self_name: &str, param: &str, body: Expr) -> Expr {
        Expr::Abs(Lambda {
            self_name: Some(self_name.into()),
            param: param.into(),
            param_ty: None,
            ret_ty: None,
            body: Box::new(body),
        })
    }

    pub fn if_(guard: &str, t: Expr, e: Expr) -> Expr {
        Expr::If {
            guard: guard.into(),
            then_branch: Box::new(t),
            else_branch: Box::new(e),
        }
    }

    pub fn seq(a: Expr, b: Expr) -> Expr {
        Expr::Seq(Box::new(a), Box::new(b))
    }

    pub fn fork(a: Expr, b: Expr) -> Expr {
        Expr::Fork(Box::new(a), Box::new(b))
    }

    pub fn sec(policy: &str, body: Expr) -> Expr {
        Expr::Sec {
            policy: policy.into(),
            body: Box::new(body),
        }
    }

    pub fn met(check: MetricCheck, body: Expr) -> Expr {
        Expr::Met {
            check,
            body: Box::new(body),
        }
    }

    pub fn req(id: &str, input: TypeAnn, output: TypeAnn) -> Expr {
        Expr::Req(Request {
            id: id.into(),
            input,
            output,
            policy: None,
            check: None,
        })
    }

    /// Values: `*`, resources, abstractions and (plain) requests.
    pub fn is_value(&self) -> bool {
        match self {
            Expr::Unit | Expr::Res(_) | Expr::Abs(_) => true,
            Expr::Req(r) => !r.is_annotated(),
            _ => false,
        }
    }

    pub fn has_sugar(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Seq(..) | Expr::Fork(..))
                || matches!(e, Expr::Req(r) if r.is_annotated())
            {
                found = true;
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unit | Expr::Res(_) | Expr::Var(_) | Expr::Req(_) => {}
            Expr::Event { arg, .. } => arg.walk(f),
            Expr::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                else_branch.walk(f);
            }
            Expr::Abs(l) => l.body.walk(f),
            Expr::App(a, b) | Expr::Seq(a, b) | Expr::Fork(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Expr::Sec { body, .. } | Expr::Met { body, .. } => body.walk(f),
        }
    }

    /// Request nodes in pre-order.
    pub fn requests(&self) -> Vec<&Request> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Req(r) = e {
                out.push(r);
            }
        });
        out
    }

    /// Guard names in pre-order, deduplicated.
    pub fn guards(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::If { guard, .. } = e {
                out.insert(guard.clone());
            }
        });
        out
    }
}

/// Free variables. An abstraction binds both its self name and its
/// parameter.
pub fn free_vars(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut out);
    out
}

fn collect_free(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Unit | Expr::Res(_) | Expr::Req(_) => {}
        Expr::Event { arg, .. } => collect_free(arg, bound, out),
        Expr::If {
            then_branch,
            else_branch,
            ..
        } => {
            collect_free(then_branch, bound, out);
            collect_free(else_branch, bound, out);
        }
        Expr::Abs(l) => {
            let mark = bound.len();
            if let Some(z) = &l.self_name {
                bound.push(z.clone());
            }
            bound.push(l.param.clone());
            collect_free(&l.body, bound, out);
            bound.truncate(mark);
        }
        Expr::App(a, b) | Expr::Seq(a, b) | Expr::Fork(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Expr::Sec { body, .. } | Expr::Met { body, .. } => collect_free(body, bound, out),
    }
}

/// Capture-free substitution of closed values. `subst(e, x, v)` replaces
/// free occurrences of `x` in `e` by `v`; `v` must be closed.
pub fn subst(e: &Expr, x: &str, v: &Expr) -> Expr {
    match e {
        Expr::Var(y) if &**y == x => v.clone(),
        Expr::Var(_) | Expr::Unit | Expr::Res(_) | Expr::Req(_) => e.clone(),
        Expr::Event { action, arg } => Expr::Event {
            action: action.clone(),
            arg: Box::new(subst(arg, x, v)),
        },
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => Expr::If {
            guard: guard.clone(),
            then_branch: Box::new(subst(then_branch, x, v)),
            else_branch: Box::new(subst(else_branch, x, v)),
        },
        Expr::Abs(l) => {
            let shadows = &*l.param == x || l.self_name.as_deref() == Some(x);
            if shadows {
                e.clone()
            } else {
                Expr::Abs(Lambda {
                    body: Box::new(subst(&l.body, x, v)),
                    ..l.clone()
                })
            }
        }
        Expr::App(a, b) => Expr::App(Box::new(subst(a, x, v)), Box::new(subst(b, x, v))),
        Expr::Seq(a, b) => Expr::Seq(Box::new(subst(a, x, v)), Box::new(subst(b, x, v))),
        Expr::Fork(a, b) => Expr::Fork(Box::new(subst(a, x, v)), Box::new(subst(b, x, v))),
        Expr::Sec { policy, body } => Expr::Sec {
            policy: policy.clone(),
            body: Box::new(subst(body, x, v)),
        },
        Expr::Met { check, body } => Expr::Met {
            check: check.clone(),
            body: Box::new(subst(body, x, v)),
        },
    }
}
