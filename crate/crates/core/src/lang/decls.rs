//! Declared names a program is checked against: resource domains, guard
//! alphabet, policies and the metric semiring.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Expr, TypeAnn};
use super::desugar::desugar;
use super::parser::{parse_with, ParseError};
use crate::semiring::Semiring;
use crate::Name;

/// A named set of resources. A union domain lists its `parts` and its
/// members are exactly the members of the parts, in part order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceDomain {
    pub name: Name,
    pub members: Vec<Name>,
    pub parts: Vec<Name>,
}

impl ResourceDomain {
    pub fn base(name: &str, members: &[&str]) -> Self {
        ResourceDomain {
            name: name.into(),
            members: members.iter().map(|m| Name::from(*m)).collect(),
            parts: Vec::new(),
        }
    }

    pub fn is_union(&self) -> bool {
        !self.parts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown resource `{0}`")]
    UnknownResource(Name),
    #[error("unknown resource domain `{0}`")]
    UnknownDomain(Name),
    #[error("unknown guard `{0}`")]
    UnknownGuard(Name),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(Name),
    #[error("metric check `{check}` does not use the configured semiring `{semiring}`")]
    MetricMismatch { check: String, semiring: Name },
    #[error("request id `{0}` is used more than once")]
    DuplicateRequest(Name),
    #[error("unbound variable `{0}`")]
    UnboundVariable(Name),
    #[error("`{0}` is a variable, not an action; write `{0} (...)` to apply it")]
    ActionIsVariable(Name),
    #[error("invalid domain declaration: {0}")]
    BadDomain(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LangError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Resolve(#[from] ResolveError),
}

#[derive(Debug, Clone)]
pub struct Declarations {
    domains: Vec<ResourceDomain>,
    owner: BTreeMap<Name, Name>,
    pub guards: BTreeSet<Name>,
    pub policies: BTreeSet<Name>,
    pub semiring: Semiring,
}

impl Declarations {
    pub fn new(semiring: Semiring) -> Self {
        Declarations {
            domains: Vec::new(),
            owner: BTreeMap::new(),
            guards: BTreeSet::new(),
            policies: BTreeSet::new(),
            semiring,
        }
    }

    /// Adds a base domain. Its members must not already belong to another
    /// base domain.
    pub fn add_domain(&mut self, name: &str, members: &[&str]) -> Result<(), ResolveError> {
        self.check_fresh(name)?;
        if members.is_empty() {
            return Err(ResolveError::BadDomain(format!("`{name}` has no members")));
        }
        for m in members {
            if let Some(other) = self.owner.get(*m) {
                return Err(ResolveError::BadDomain(format!(
                    "`{m}` is in both `{other}` and `{name}`"
                )));
            }
            if !m.starts_with(|c: char| c.is_ascii_uppercase()) {
                return Err(ResolveError::BadDomain(format!(
                    "resource `{m}` must start with an uppercase letter"
                )));
            }
        }
        for m in members {
            self.owner.insert((*m).into(), name.into());
        }
        self.domains.push(ResourceDomain::base(name, members));
        Ok(())
    }

    /// Adds a union of already declared domains.
    pub fn add_union(&mut self, name: &str, parts: &[&str]) -> Result<(), ResolveError> {
        self.check_fresh(name)?;
        if parts.is_empty() {
            return Err(ResolveError::BadDomain(format!("union `{name}` has no parts")));
        }
        let mut members: Vec<Name> = Vec::new();
        for p in parts {
            let d = self
                .domain(p)
                .ok_or_else(|| ResolveError::UnknownDomain((*p).into()))?;
            for m in &d.members {
                if !members.contains(m) {
                    members.push(m.clone());
                }
            }
        }
        self.domains.push(ResourceDomain {
            name: name.into(),
            members,
            parts: parts.iter().map(|p| Name::from(*p)).collect(),
        });
        Ok(())
    }

    fn check_fresh(&self, name: &str) -> Result<(), ResolveError> {
        if !name.starts_with(|c: char| c.is_ascii_uppercase()) {
            return Err(ResolveError::BadDomain(format!(
                "domain `{name}` must start with an uppercase letter"
            )));
        }
        if self.domain(name).is_some() {
            return Err(ResolveError::BadDomain(format!("`{name}` declared twice")));
        }
        Ok(())
    }

    pub fn domains(&self) -> &[ResourceDomain] {
        &self.domains
    }

    pub fn domain(&self, name: &str) -> Option<&ResourceDomain> {
        self.domains.iter().find(|d| &*d.name == name)
    }

    /// The base domain a resource was declared in.
    pub fn domain_of(&self, resource: &str) -> Option<&Name> {
        self.owner.get(resource)
    }

    /// `sub ⊆ sup` as member sets.
    pub fn includes(&self, sup: &str, sub: &str) -> bool {
        if sup == sub {
            return true;
        }
        match (self.domain(sup), self.domain(sub)) {
            (Some(a), Some(b)) => b.members.iter().all(|m| a.members.contains(m)),
            _ => false,
        }
    }

    fn check_type(&self, t: &TypeAnn) -> Result<(), ResolveError> {
        match t {
            TypeAnn::Unit => Ok(()),
            TypeAnn::Dom(d) if self.domain(d).is_some() => Ok(()),
            TypeAnn::Dom(d) => Err(ResolveError::UnknownDomain(d.clone())),
        }
    }
}

/// Checks every name in a surface term against `decls`, that request ids
/// are unique and that the term is closed.
pub fn resolve(e: &Expr, decls: &Declarations) -> Result<(), ResolveError> {
    let mut seen = BTreeSet::new();
    resolve_in(e, decls, &mut Vec::new(), &mut seen)
}

fn resolve_in(
    e: &Expr,
    decls: &Declarations,
    bound: &mut Vec<Name>,
    seen: &mut BTreeSet<Name>,
) -> Result<(), ResolveError> {
    let check_metric = |c: &crate::semiring::MetricCheck| {
        if c.metric == *decls.semiring.name() {
            Ok(())
        } else {
            Err(ResolveError::MetricMismatch {
                check: c.to_string(),
                semiring: decls.semiring.name().clone(),
            })
        }
    };
    match e {
        Expr::Unit => Ok(()),
        Expr::Res(r) => match decls.domain_of(r) {
            Some(_) => Ok(()),
            None => Err(ResolveError::UnknownResource(r.clone())),
        },
        Expr::Var(x) => {
            if bound.contains(x) {
                Ok(())
            } else {
                Err(ResolveError::UnboundVariable(x.clone()))
            }
        }
        Expr::Event { action, arg } => {
            if bound.contains(action) {
                return Err(ResolveError::ActionIsVariable(action.clone()));
            }
            resolve_in(arg, decls, bound, seen)
        }
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => {
            if !decls.guards.contains(guard) {
                return Err(ResolveError::UnknownGuard(guard.clone()));
            }
            resolve_in(then_branch, decls, bound, seen)?;
            resolve_in(else_branch, decls, bound, seen)
        }
        Expr::Abs(l) => {
            for t in l.param_ty.iter().chain(l.ret_ty.iter()) {
                decls.check_type(t)?;
            }
            let mark = bound.len();
            bound.extend(l.self_name.iter().cloned());
            bound.push(l.param.clone());
            let r = resolve_in(&l.body, decls, bound, seen);
            bound.truncate(mark);
            r
        }
        Expr::App(a, b) | Expr::Seq(a, b) | Expr::Fork(a, b) => {
            resolve_in(a, decls, bound, seen)?;
            resolve_in(b, decls, bound, seen)
        }
        Expr::Sec { policy, body } => {
            if !decls.policies.contains(policy) {
                return Err(ResolveError::UnknownPolicy(policy.clone()));
            }
            resolve_in(body, decls, bound, seen)
        }
        Expr::Met { check, body } => {
            check_metric(check)?;
            resolve_in(body, decls, bound, seen)
        }
        Expr::Req(r) => {
            if !seen.insert(r.id.clone()) {
                return Err(ResolveError::DuplicateRequest(r.id.clone()));
            }
            decls.check_type(&r.input)?;
            decls.check_type(&r.output)?;
            if let Some(p) = &r.policy {
                if !decls.policies.contains(p) {
                    return Err(ResolveError::UnknownPolicy(p.clone()));
                }
            }
            if let Some(c) = &r.check {
                check_metric(c)?;
            }
            Ok(())
        }
    }
}

/// Parse, resolve and desugar a closed program.
pub fn parse_program(src: &str, decls: &Declarations) -> Result<Expr, LangError> {
    let surface = parse_with(src, &decls.semiring)?;
    resolve(&surface, decls)?;
    Ok(desugar(&surface))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls() -> Declarations {
        let mut d = Declarations::new(Semiring::risk());
        d.add_domain("Flight", &["FLIGHT_No", "NO_FLIGHT"]).unwrap();
        d.add_domain("Hotel", &["HOTEL_RESV"]).unwrap();
        d.add_union("Booking", &["Flight", "Hotel"]).unwrap();
        d.guards.insert("g".into());
        d.policies.insert("p".into());
        d
    }

    #[test]
    fn domains_and_inclusion() {
        let d = decls();
        assert_eq!(d.domain("Booking").unwrap().members.len(), 3);
        assert!(d.includes("Booking", "Hotel"));
        assert!(!d.includes("Hotel", "Booking"));
        assert_eq!(d.domain_of("NO_FLIGHT").map(|n| &**n), Some("Flight"));
        let mut bad = decls();
        assert!(bad.add_domain("Other", &["HOTEL_RESV"]).is_err());
    }

    #[test]
    fn resolution_errors() {
        let d = decls();
        let err = |src: &str| parse_program(src, &d).unwrap_err();
        assert!(matches!(err("NOPE"), LangError::Resolve(ResolveError::UnknownResource(_))));
        assert!(matches!(err("if h then * else *"), LangError::Resolve(ResolveError::UnknownGuard(_))));
        assert!(matches!(err("sec \"q\" { * }"), LangError::Resolve(ResolveError::UnknownPolicy(_))));
        assert!(matches!(err("met TRUST >= 0.5 { * }"), LangError::Resolve(ResolveError::MetricMismatch { .. })));
        assert!(matches!(
            err("(req r : Hotel -> Flight) HOTEL_RESV; (req r : Hotel -> Flight) HOTEL_RESV"),
            LangError::Resolve(ResolveError::DuplicateRequest(_))
        ));
        assert!(matches!(err("x"), LangError::Resolve(ResolveError::UnboundVariable(_))));
        assert!(matches!(err("\\f -> f(HOTEL_RESV)"), LangError::Resolve(ResolveError::ActionIsVariable(_))));
        assert!(matches!(err("\\x: Nope -> x"), LangError::Resolve(ResolveError::UnknownDomain(_))));
        assert!(matches!(err("("), LangError::Parse(_)));
    }

    #[test]
    fn accepted_program_is_desugared() {
        let e = parse_program("\\x: Hotel -> a(x); if g then FLIGHT_No else NO_FLIGHT", &decls()).unwrap();
        assert!(!e.has_sugar());
    }
}
