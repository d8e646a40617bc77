//! Type-and-effect inference: every λ^req term gets a type and a
//! metric-annotated history expression describing what evaluating it does.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::history::HistExpr;
use crate::lang::{free_vars, Declarations, Expr, Lambda, TypeAnn};
use crate::semiring::{AlgebraError, MetricValue, Semiring};
use crate::Name;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Unit,
    Dom(Name),
    Arrow(Box<Type>, HistExpr, Box<Type>),
    /// Unification variable; never present in a finished typing.
    Hole(usize),
}

impl Type {
    pub fn arrow(input: Type, latent: HistExpr, output: Type) -> Type {
        Type::Arrow(Box::new(input), latent, Box::new(output))
    }

    pub fn from_ann(t: &TypeAnn) -> Type {
        match t {
            TypeAnn::Unit => Type::Unit,
            TypeAnn::Dom(d) => Type::Dom(d.clone()),
        }
    }

    /// `(input, latent, output)` of an arrow.
    pub fn as_arrow(&self) -> Option<(&Type, &HistExpr, &Type)> {
        match self {
            Type::Arrow(i, h, o) => Some((i, h, o)),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => f.write_str("unit"),
            Type::Dom(d) => f.write_str(d),
            Type::Hole(i) => write!(f, "?{i}"),
            Type::Arrow(i, h, o) => {
                if matches!(**i, Type::Arrow(..)) {
                    write!(f, "({i})")?;
                } else {
                    write!(f, "{i}")?;
                }
                write!(f, " →[{h}] {o}")
            }
        }
    }
}

/// Ordered bindings; lookup finds the most recent.
#[derive(Clone, Debug, Default)]
pub struct TypeEnv {
    bindings: Vec<(Name, Type)>,
}

impl TypeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, x: Name, t: Type) {
        self.bindings.push((x, t));
    }

    pub fn lookup(&self, x: &str) -> Option<&Type> {
        self.bindings.iter().rev().find(|(y, _)| &**y == x).map(|(_, t)| t)
    }

    fn mark(&self) -> usize {
        self.bindings.len()
    }

    fn reset(&mut self, mark: usize) {
        self.bindings.truncate(mark);
    }
}

/// The metric function `F`: `(action, resource)` to metric value, with
/// `(action, *)` entries as fallbacks and `one` as the default.
#[derive(Clone, Debug)]
pub struct MetricFn {
    pub semiring: Semiring,
    entries: BTreeMap<(Name, Option<Name>), MetricValue>,
}

impl MetricFn {
    pub fn new(semiring: Semiring) -> Self {
        MetricFn {
            semiring,
            entries: BTreeMap::new(),
        }
    }

    /// `resource = None` sets the wildcard entry for `action`.
    pub fn set(&mut self, action: &str, resource: Option<&str>, v: MetricValue) -> Result<(), AlgebraError> {
        self.semiring.check(&v)?;
        self.entries.insert((action.into(), resource.map(Name::from)), v);
        Ok(())
    }

    pub fn get(&self, action: &str, resource: &str) -> MetricValue {
        let exact = (Name::from(action), Some(Name::from(resource)));
        let wild = (Name::from(action), None);
        self.entries
            .get(&exact)
            .or_else(|| self.entries.get(&wild))
            .cloned()
            .unwrap_or_else(|| self.semiring.one())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Name, Option<&Name>, &MetricValue)> {
        self.entries.iter().map(|((a, r), v)| (a, r.as_ref(), v))
    }
}

/// A published service `ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Service {
    pub location: Name,
    pub input: Type,
    pub output: Type,
    pub effect: HistExpr,
    pub implementation: Option<Expr>,
}

impl Service {
    pub fn ty(&self) -> Type {
        Type::arrow(self.input.clone(), self.effect.clone(), self.output.clone())
    }
}

/// Orders `e2` before `e10`: names compare by their non-digit prefix, then
/// by the numeric suffix.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..cut], s[cut..].parse().ok())
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb).then(na.cmp(&nb)).then(a.cmp(b))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Repository {
    services: Vec<Service>,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces (last write wins) a service.
    pub fn insert(&mut self, s: Service) {
        self.services.retain(|x| x.location != s.location);
        let at = self
            .services
            .partition_point(|x| natural_cmp(&x.location, &s.location) == Ordering::Less);
        self.services.insert(at, s);
    }

    pub fn remove(&mut self, location: &str) -> Option<Service> {
        let i = self.services.iter().position(|s| &*s.location == location)?;
        Some(self.services.remove(i))
    }

    pub fn get(&self, location: &str) -> Option<&Service> {
        self.services.iter().find(|s| &*s.location == location)
    }

    pub fn services(&self) -> &[Service] {
        &self.services
    }

    /// Services whose interface is exactly `input -> output`.
    pub fn candidates<'a>(&'a self, input: &'a Type, output: &'a Type) -> impl Iterator<Item = &'a Service> + 'a {
        self.services
            .iter()
            .filter(move |s| s.input == *input && s.output == *output)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TypeErrorKind {
    #[error("expected {expected}, found {found}")]
    Mismatch { expected: String, found: String },
    #[error("{0} is not a function")]
    NotAFunction(String),
    #[error("event argument has type {0}, not a resource domain")]
    EventOnNonResource(String),
    #[error("cannot infer the type of `{0}`; annotate it")]
    CannotInfer(Name),
    #[error("unbound variable `{0}`")]
    Unbound(Name),
    #[error("unknown resource `{0}`")]
    UnknownResource(Name),
    #[error("unknown resource domain `{0}`")]
    UnknownDomain(Name),
    #[error("branches have different types: {0} and {1}")]
    BranchMismatch(String, String),
    #[error("request `{0}` matches no service in the repository")]
    NoCandidates(Name),
    #[error("the plan does not resolve request `{0}`")]
    Unplanned(Name),
    #[error("plan maps `{request}` to `{location}`, which {reason}")]
    BadPlan { request: Name, location: Name, reason: String },
    #[error("recursive function `{0}` escapes its own definition")]
    Escaping(Name),
    #[error("infinite type")]
    Occurs,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("not a function: the implementation has type {0}")]
    NotAService(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("type error in `{subterm}`: {kind}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub subterm: String,
}

const SUBTERM_WIDTH: usize = 120;

fn excerpt(e: &Expr) -> String {
    let s = e.to_string();
    if s.chars().count() > SUBTERM_WIDTH {
        let cut: String = s.chars().take(SUBTERM_WIDTH).collect();
        format!("{cut}...")
    } else {
        s
    }
}

/// Everything inference reads besides the term.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub decls: &'a Declarations,
    pub repo: &'a Repository,
    pub metric: &'a MetricFn,
    /// `Some(π)` gives each request the latent effect of its planned
    /// service instead of the sum over all candidates.
    pub plan: Option<&'a BTreeMap<Name, Name>>,
}

impl<'a> Context<'a> {
    pub fn new(decls: &'a Declarations, repo: &'a Repository, metric: &'a MetricFn) -> Self {
        Context {
            decls,
            repo,
            metric,
            plan: None,
        }
    }

    pub fn with_plan(self, plan: &'a BTreeMap<Name, Name>) -> Self {
        Context {
            plan: Some(plan),
            ..self
        }
    }
}

/// A finished typing: `Γ, effect ⊢ e : ty`.
#[derive(Clone, Debug, PartialEq)]
pub struct Typing {
    pub ty: Type,
    pub effect: HistExpr,
}

/// Infers the type and effect of `e` under `env`.
pub fn infer(cx: &Context, env: &TypeEnv, e: &Expr) -> Result<Typing, TypeError> {
    let mut st = Infer {
        cx,
        holes: Vec::new(),
        next_mu: 0,
    };
    let mut env = env.clone();
    let (ty, effect) = st.infer(&mut env, e, None)?;
    let ty = st.finish(&ty);
    Ok(Typing { ty, effect })
}

pub fn infer_closed(cx: &Context, e: &Expr) -> Result<Typing, TypeError> {
    infer(cx, &TypeEnv::new(), e)
}

/// The effect an analysis looks at: for a program that is an abstraction
/// (a service or orchestration) its latent effect, otherwise the effect of
/// evaluating it.
pub fn analysis_target(e: &Expr, t: &Typing) -> HistExpr {
    match (e, t.ty.as_arrow()) {
        (Expr::Abs(_), Some((_, latent, _))) => latent.clone(),
        _ => t.effect.clone(),
    }
}

/// Types `implementation` and stores it at `location`.
pub fn publish(
    location: &str,
    implementation: Expr,
    repo: &mut Repository,
    decls: &Declarations,
    metric: &MetricFn,
) -> Result<(), TypeError> {
    let cx = Context::new(decls, repo, metric);
    let t = infer_closed(&cx, &implementation)?;
    let Some((i, h, o)) = t.ty.as_arrow() else {
        return Err(TypeError {
            kind: TypeErrorKind::NotAService(t.ty.to_string()),
            subterm: excerpt(&implementation),
        });
    };
    let s = Service {
        location: location.into(),
        input: i.clone(),
        output: o.clone(),
        effect: h.clone(),
        implementation: Some(implementation),
    };
    repo.insert(s);
    Ok(())
}

/// The latent effect given to a recursive abstraction: `μh.H` when the self
/// name `h` stood for occurs in `H`, `H` otherwise.
pub fn close_recursive(h: &str, body: HistExpr) -> HistExpr {
    if body.free_vars().contains(h) {
        HistExpr::Mu(h.into(), Box::new(body))
    } else {
        body
    }
}

struct Infer<'c, 'a> {
    cx: &'c Context<'a>,
    holes: Vec<Option<Type>>,
    next_mu: usize,
}

impl Infer<'_, '_> {
    fn fail<T>(&self, kind: TypeErrorKind, at: &Expr) -> Result<T, TypeError> {
        Err(TypeError {
            kind,
            subterm: excerpt(at),
        })
    }

    fn hole(&mut self) -> Type {
        self.holes.push(None);
        Type::Hole(self.holes.len() - 1)
    }

    fn fresh_mu(&mut self) -> Name {
        let n = self.next_mu;
        self.next_mu += 1;
        if n == 0 {
            "h".into()
        } else {
            format!("h{n}").into()
        }
    }

    /// Substitutes solved holes.
    fn zonk(&self, t: &Type) -> Type {
        match t {
            Type::Hole(i) => match &self.holes[*i] {
                Some(u) => self.zonk(u),
                None => t.clone(),
            },
            Type::Arrow(i, h, o) => Type::arrow(self.zonk(i), h.clone(), self.zonk(o)),
            _ => t.clone(),
        }
    }

    /// Zonks and defaults unsolved holes to `unit`.
    fn finish(&self, t: &Type) -> Type {
        match self.zonk(t) {
            Type::Hole(_) => Type::Unit,
            Type::Arrow(i, h, o) => Type::arrow(self.finish(&i), h, self.finish(&o)),
            u => u,
        }
    }

    fn occurs(&self, hole: usize, t: &Type) -> bool {
        match self.zonk(t) {
            Type::Hole(j) => j == hole,
            Type::Arrow(i, _, o) => self.occurs(hole, &i) || self.occurs(hole, &o),
            _ => false,
        }
    }

    fn bind(&mut self, hole: usize, t: Type, at: &Expr) -> Result<(), TypeError> {
        if self.occurs(hole, &t) {
            return self.fail(TypeErrorKind::Occurs, at);
        }
        self.holes[hole] = Some(t);
        Ok(())
    }

    /// Exact equality up to holes.
    fn unify(&mut self, a: &Type, b: &Type, at: &Expr) -> Result<(), TypeError> {
        let (a, b) = (self.zonk(a), self.zonk(b));
        match (&a, &b) {
            (Type::Hole(i), Type::Hole(j)) if i == j => Ok(()),
            (Type::Hole(i), _) => self.bind(*i, b.clone(), at),
            (_, Type::Hole(j)) => self.bind(*j, a.clone(), at),
            (Type::Unit, Type::Unit) => Ok(()),
            (Type::Dom(x), Type::Dom(y)) if x == y => Ok(()),
            (Type::Arrow(i1, h1, o1), Type::Arrow(i2, h2, o2)) if h1 == h2 => {
                self.unify(i1, i2, at)?;
                self.unify(o1, o2, at)
            }
            _ => self.fail(
                TypeErrorKind::Mismatch {
                    expected: a.to_string(),
                    found: b.to_string(),
                },
                at,
            ),
        }
    }

    /// Whether a value of type `arg` may be passed where `param` is
    /// expected: resource domains by inclusion, everything else exactly.
    fn accepts(&mut self, param: &Type, arg: &Type, at: &Expr) -> Result<(), TypeError> {
        match (self.zonk(param), self.zonk(arg)) {
            (Type::Dom(p), Type::Dom(a)) if self.cx.decls.includes(&p, &a) => Ok(()),
            (p, a) => self.unify(&p, &a, at),
        }
    }

    fn check_ann(&self, t: &TypeAnn, at: &Expr) -> Result<Type, TypeError> {
        if let TypeAnn::Dom(d) = t {
            if self.cx.decls.domain(d).is_none() {
                return self.fail(TypeErrorKind::UnknownDomain(d.clone()), at);
            }
        }
        Ok(Type::from_ann(t))
    }

    fn infer(&mut self, env: &mut TypeEnv, e: &Expr, param_hint: Option<&Type>) -> Result<(Type, HistExpr), TypeError> {
        match e {
            Expr::Unit => Ok((Type::Unit, HistExpr::Empty)),
            Expr::Res(r) => match self.cx.decls.domain_of(r) {
                Some(d) => Ok((Type::Dom(d.clone()), HistExpr::Empty)),
                None => self.fail(TypeErrorKind::UnknownResource(r.clone()), e),
            },
            Expr::Var(x) => match env.lookup(x) {
                Some(t) => Ok((t.clone(), HistExpr::Empty)),
                None => self.fail(TypeErrorKind::Unbound(x.clone()), e),
            },
            Expr::Event { action, arg } => {
                let (t, h) = self.infer(env, arg, None)?;
                let dom = match self.zonk(&t) {
                    Type::Dom(d) => d,
                    Type::Hole(_) => {
                        let name = match &**arg {
                            Expr::Var(x) => x.clone(),
                            _ => Name::from(excerpt(arg)),
                        };
                        return self.fail(TypeErrorKind::CannotInfer(name), e);
                    }
                    other => return self.fail(TypeErrorKind::EventOnNonResource(other.to_string()), e),
                };
                let members = match self.cx.decls.domain(&dom) {
                    Some(d) => d.members.clone(),
                    None => return self.fail(TypeErrorKind::UnknownDomain(dom), e),
                };
                let sum = HistExpr::sum(members.iter().map(|r| {
                    HistExpr::ann(self.cx.metric.get(action, r), HistExpr::Ev(crate::policy::Event {
                        action: action.clone(),
                        resource: r.clone(),
                    }))
                }))
                .unwrap_or(HistExpr::Empty);
                Ok((Type::Unit, HistExpr::seq(h, sum)))
            }
            Expr::If {
                then_branch,
                else_branch,
                ..
            } => {
                let (t1, h1) = self.infer(env, then_branch, None)?;
                let (t2, h2) = self.infer(env, else_branch, None)?;
                if self.unify(&t1, &t2, e).is_err() {
                    let (a, b) = (self.zonk(&t1), self.zonk(&t2));
                    return self.fail(TypeErrorKind::BranchMismatch(a.to_string(), b.to_string()), e);
                }
                Ok((t1, HistExpr::choice(h1, h2)))
            }
            Expr::Abs(l) => {
                let t = self.infer_abs(env, l, param_hint, e)?;
                Ok((t, HistExpr::Empty))
            }
            Expr::App(f, a) => {
                let (tf, hf, ta, ha) = if let Expr::Abs(_) = &**f {
                    let (ta, ha) = self.infer(env, a, None)?;
                    let (tf, hf) = self.infer(env, f, Some(&ta))?;
                    (tf, hf, ta, ha)
                } else {
                    let (tf, hf) = self.infer(env, f, None)?;
                    let hint = match self.zonk(&tf) {
                        Type::Arrow(i, _, _) => Some(*i),
                        _ => None,
                    };
                    let (ta, ha) = self.infer(env, a, hint.as_ref())?;
                    (tf, hf, ta, ha)
                };
                match self.zonk(&tf) {
                    Type::Arrow(input, latent, output) => {
                        self.accepts(&input, &ta, e)?;
                        Ok((*output, HistExpr::seq(HistExpr::par(hf, ha), latent)))
                    }
                    other => self.fail(TypeErrorKind::NotAFunction(other.to_string()), f),
                }
            }
            Expr::Sec { policy, body } => {
                let (t, h) = self.infer(env, body, param_hint)?;
                Ok((t, HistExpr::Sec(policy.clone(), Box::new(h))))
            }
            Expr::Met { check, body } => {
                self.cx.metric.semiring.check(&check.threshold).map_err(|err| TypeError {
                    kind: err.into(),
                    subterm: excerpt(e),
                })?;
                let (t, h) = self.infer(env, body, param_hint)?;
                Ok((t, HistExpr::Met(check.clone(), Box::new(h))))
            }
            Expr::Req(r) => {
                let input = self.check_ann(&r.input, e)?;
                let output = self.check_ann(&r.output, e)?;
                let latent = self.request_latent(&r.id, &input, &output, e)?;
                // annotated requests only reach here before desugaring
                let mut latent = latent;
                if let Some(c) = &r.check {
                    latent = HistExpr::Met(c.clone(), Box::new(latent));
                }
                if let Some(p) = &r.policy {
                    latent = HistExpr::Sec(p.clone(), Box::new(latent));
                }
                Ok((Type::arrow(input, latent, output), HistExpr::Empty))
            }
            Expr::Seq(a, b) => {
                let (_, ha) = self.infer(env, a, None)?;
                let (tb, hb) = self.infer(env, b, param_hint)?;
                Ok((tb, HistExpr::seq(ha, hb)))
            }
            Expr::Fork(a, b) => {
                let (ta, ha) = self.infer(env, a, None)?;
                let (_, hb) = self.infer(env, b, None)?;
                Ok((ta, HistExpr::par(hb, ha)))
            }
        }
    }

    fn request_latent(&self, id: &Name, input: &Type, output: &Type, at: &Expr) -> Result<HistExpr, TypeError> {
        let repo = self.cx.repo;
        match self.cx.plan {
            None => {
                let sum = HistExpr::sum(repo.candidates(input, output).map(|s| s.effect.clone()));
                match sum {
                    Some(h) => Ok(h),
                    None => self.fail(TypeErrorKind::NoCandidates(id.clone()), at),
                }
            }
            Some(plan) => {
                let Some(loc) = plan.get(id) else {
                    return self.fail(TypeErrorKind::Unplanned(id.clone()), at);
                };
                let bad = |reason: &str| TypeErrorKind::BadPlan {
                    request: id.clone(),
                    location: loc.clone(),
                    reason: reason.to_string(),
                };
                match repo.get(loc) {
                    None => self.fail(bad("is not in the repository"), at),
                    Some(s) if s.input != *input || s.output != *output => {
                        self.fail(bad("does not match the request interface"), at)
                    }
                    Some(s) => Ok(s.effect.clone()),
                }
            }
        }
    }

    fn infer_abs(&mut self, env: &mut TypeEnv, l: &Lambda, hint: Option<&Type>, at: &Expr) -> Result<Type, TypeError> {
        let param = match (&l.param_ty, hint) {
            (Some(ann), Some(h)) => {
                let p = self.check_ann(ann, at)?;
                self.accepts(&p, h, at)?;
                p
            }
            (Some(ann), None) => self.check_ann(ann, at)?,
            (None, Some(h)) => h.clone(),
            (None, None) => self.hole(),
        };
        let output = match &l.ret_ty {
            Some(ann) => self.check_ann(ann, at)?,
            None => self.hole(),
        };
        let mark = env.mark();
        let recursive = l
            .self_name
            .as_ref()
            .filter(|z| free_vars(&l.body).contains(*z))
            .cloned();
        let mu = recursive.as_ref().map(|_| self.fresh_mu());
        if let (Some(z), Some(h)) = (&recursive, &mu) {
            env.bind(z.clone(), Type::arrow(param.clone(), HistExpr::Var(h.clone()), output.clone()));
        }
        env.bind(l.param.clone(), param.clone());
        let result = self.infer(env, &l.body, None);
        env.reset(mark);
        let (body_ty, body_h) = result?;
        self.unify(&output, &body_ty, at)?;
        let latent = match &mu {
            Some(h) => close_recursive(h, body_h),
            None => body_h,
        };
        let ty = Type::arrow(param, latent, output);
        if let (Some(z), Some(h)) = (&recursive, &mu) {
            let (i, _, o) = match self.zonk(&ty) {
                Type::Arrow(i, lat, o) => (i, lat, o),
                _ => unreachable!("abstraction types are arrows"),
            };
            let leaks = |t: &Type| mentions_var(t, h);
            if leaks(&i) || leaks(&o) {
                return self.fail(TypeErrorKind::Escaping(z.clone()), at);
            }
        }
        Ok(ty)
    }
}

fn mentions_var(t: &Type, h: &str) -> bool {
    match t {
        Type::Arrow(i, lat, o) => lat.free_vars().contains(h) || mentions_var(i, h) || mentions_var(o, h),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn decls() -> Declarations {
        let mut d = Declarations::new(Semiring::risk());
        d.add_domain("Doc", &["RCPT", "SIGNED_DOC"]).unwrap();
        d.add_domain("Airport", &["AIRPORT"]).unwrap();
        d.add_domain("Flight", &["FLIGHT_No", "NO_FLIGHT"]).unwrap();
        d.guards.insert("g".into());
        d
    }

    fn risk(x: f64) -> MetricValue {
        Semiring::risk().value(x).unwrap()
    }

    fn metric() -> MetricFn {
        let mut f = MetricFn::new(Semiring::risk());
        f.set("sign_64", None, risk(1.0)).unwrap();
        f.set("reserve", Some("FLIGHT_No"), risk(15.0)).unwrap();
        f
    }

    fn typed(src: &str, repo: &Repository) -> Result<Typing, TypeError> {
        let d = decls();
        let f = metric();
        let e = parse_program(src, &d).unwrap();
        infer_closed(&Context::new(&d, repo, &f), &e)
    }

    #[test]
    fn unit_and_resources() {
        let r = Repository::new();
        let t = typed("*", &r).unwrap();
        assert_eq!((t.ty, t.effect), (Type::Unit, HistExpr::Empty));
        assert_eq!(typed("RCPT", &r).unwrap().ty, Type::Dom("Doc".into()));
    }

    #[test]
    fn service_nine() {
        let t = typed("fun z(x: Doc) = sign_64(x); SIGNED_DOC", &Repository::new()).unwrap();
        let (i, h, o) = t.ty.as_arrow().unwrap();
        assert_eq!(*i, Type::Dom("Doc".into()));
        assert_eq!(*o, Type::Dom("Doc".into()));
        assert_eq!(h.to_string(), "ℳ[1] sign_64(RCPT) + ℳ[1] sign_64(SIGNED_DOC)");
        assert_eq!(t.effect, HistExpr::Empty);
    }

    #[test]
    fn metric_fallbacks() {
        let f = metric();
        assert_eq!(f.get("reserve", "FLIGHT_No"), risk(15.0));
        assert_eq!(f.get("reserve", "NO_FLIGHT"), risk(0.0));
        assert_eq!(f.get("sign_64", "ANY"), risk(1.0));
    }

    #[test]
    fn recursion_gets_a_mu() {
        let t = typed("fun z(x: unit) = z x", &Repository::new()).unwrap();
        let (_, h, o) = t.ty.as_arrow().unwrap();
        assert_eq!(h.to_string(), "μh.(h)");
        assert_eq!(*o, Type::Unit);
        let plain = typed("\\x: Doc -> sign_64(x)", &Repository::new()).unwrap();
        assert!(!plain.ty.as_arrow().unwrap().1.any(|h| matches!(h, HistExpr::Mu(..))));
    }

    #[test]
    fn requests_sum_candidates() {
        let mut repo = Repository::new();
        let d = decls();
        let f = metric();
        for (loc, src) in [("s1", "\\x: Doc -> sign_64(x); x"), ("s2", "\\x: Doc -> x")] {
            publish(loc, parse_program(src, &d).unwrap(), &mut repo, &d, &f).unwrap();
        }
        let t = typed("(req r : Doc -> Doc) RCPT", &repo).unwrap();
        assert_eq!(t.effect.to_string(), "ℳ[1] sign_64(RCPT) + ℳ[1] sign_64(SIGNED_DOC) + ε");
        let err = typed("(req r : Flight -> Doc) NO_FLIGHT", &repo).unwrap_err();
        assert!(matches!(err.kind, TypeErrorKind::NoCandidates(_)));
        let plan = BTreeMap::from([(Name::from("r"), Name::from("s2"))]);
        let e = parse_program("(req r : Doc -> Doc) RCPT", &d).unwrap();
        let t = infer_closed(&Context::new(&d, &repo, &f).with_plan(&plan), &e).unwrap();
        assert_eq!(t.effect, HistExpr::Empty);
    }

    #[test]
    fn type_errors() {
        let r = Repository::new();
        let kind = |src: &str| typed(src, &r).unwrap_err().kind;
        assert!(matches!(kind("sign_64(*)"), TypeErrorKind::EventOnNonResource(_)));
        assert!(matches!(kind("RCPT *"), TypeErrorKind::NotAFunction(_)));
        assert!(matches!(kind("if g then RCPT else *"), TypeErrorKind::BranchMismatch(..)));
        assert!(matches!(kind("(\\x: Doc -> x) AIRPORT"), TypeErrorKind::Mismatch { .. }));
        assert!(matches!(kind("\\x -> sign_64(x)"), TypeErrorKind::CannotInfer(_)));
        assert!(matches!(kind("fun z(x: unit) = z"), TypeErrorKind::Occurs | TypeErrorKind::Escaping(_)));
        let err = typed("sign_64(*)", &r).unwrap_err();
        assert!(err.to_string().contains("sign_64(*)"), "{err}");
    }

    #[test]
    fn natural_order() {
        let mut v = vec!["e10", "e2", "e1", "rho7", "rho1"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, ["e1", "e2", "e10", "rho1", "rho7"]);
    }
}
