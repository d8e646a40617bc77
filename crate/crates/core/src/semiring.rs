//! c*-semirings: the algebra that metric values live in.
//!
//! A semiring here is always a *c\** semiring: `plus` selects one of its two
//! operands, so it induces a total order `a <=_T b  iff  plus(a, b) = b`.
//! `plus` is "pick the better value", `inv_plus` is "pick the worse value"
//! and `times` accumulates. Two instances are built in:
//!
//! * `risk`  = `<[0, inf], min, +, inf, 0>` (tropical)
//! * `trust` = `<[0, 1], max, *, 0, 1>`     (possibilistic)
//!
//! Finite semirings can be registered from Cayley tables and are validated
//! against every axiom when they are built.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::Name;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlgebraError {
    #[error("mixed semirings: `{left}` and `{right}`")]
    Mixed { left: Name, right: Name },
    #[error("value {value} is outside the domain of `{semiring}`")]
    OutOfDomain { semiring: Name, value: String },
    #[error("`{name}` is not an element of `{semiring}`")]
    UnknownElement { semiring: Name, name: String },
    #[error("unknown semiring `{0}`")]
    UnknownSemiring(String),
    #[error("invalid semiring `{name}`: {reason}")]
    InvalidTable { name: String, reason: String },
    #[error("metric check on `{check}` cannot be applied in semiring `{semiring}`")]
    MetricMismatch { check: Name, semiring: Name },
}

/// Raw domain element. Reals cover `risk` and `trust`; `Elem` indexes a
/// finite table.
#[derive(Clone, Copy, Debug)]
pub enum Scalar {
    Real(f64),
    Elem(u8),
}

impl Scalar {
    fn canonical_bits(self) -> (u8, u64) {
        match self {
            // -0.0 and 0.0 are the same element
            Scalar::Real(0.0) => (0, 0),
            Scalar::Real(x) => (0, x.to_bits()),
            Scalar::Elem(i) => (1, i as u64),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_bits() == other.canonical_bits()
    }
}

impl Eq for Scalar {}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical_bits().hash(state);
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Real(x) if x.is_infinite() => write!(f, "∞"),
            Scalar::Real(x) => write!(f, "{x}"),
            Scalar::Elem(i) => write!(f, "#{i}"),
        }
    }
}

/// An element of a named semiring.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MetricValue {
    semiring: Name,
    scalar: Scalar,
}

impl MetricValue {
    pub fn semiring(&self) -> &str {
        &self.semiring
    }

    pub fn scalar(&self) -> Scalar {
        self.scalar
    }

    /// The numeric value for real-valued semirings.
    pub fn as_real(&self) -> Option<f64> {
        match self.scalar {
            Scalar::Real(x) => Some(x),
            Scalar::Elem(_) => None,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.scalar.fmt(f)
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.scalar {
            Scalar::Real(x) if x.is_infinite() => s.serialize_str("inf"),
            Scalar::Real(x) => s.serialize_f64(x),
            Scalar::Elem(i) => s.serialize_str(&format!("#{i}")),
        }
    }
}

/// How a metric check is written in source: `RISK <= 75`, `TRUST >= 0.9`.
/// Both mean "at least as good as the threshold" under `<=_T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Notation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Notation::AtMost => "<=",
            Notation::AtLeast => ">=",
        })
    }
}

/// A threshold constraint `gamma = T >=_T d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MetricCheck {
    pub metric: Name,
    pub notation: Notation,
    pub threshold: MetricValue,
}

impl MetricCheck {
    pub fn new(threshold: MetricValue, notation: Notation) -> Self {
        MetricCheck {
            metric: threshold.semiring.clone(),
            notation,
            threshold,
        }
    }

    /// Compact label used in trace markers, e.g. `RISK<=75`.
    pub fn label(&self) -> String {
        format!(
            "{}{}{}",
            self.metric.to_uppercase(),
            self.notation,
            self.threshold
        )
    }
}

impl fmt::Display for MetricCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.metric.to_uppercase(),
            self.notation,
            self.threshold
        )
    }
}

/// Cayley-table description of a finite c*-semiring.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTable {
    pub elements: Vec<String>,
    pub zero: usize,
    pub one: usize,
    pub plus: Vec<Vec<usize>>,
    pub times: Vec<Vec<usize>>,
}

impl FiniteTable {
    /// Checks every c-semiring axiom and the c* selection condition by
    /// exhaustive enumeration.
    fn validate(&self, name: &str) -> Result<(), AlgebraError> {
        let fail = |reason: String| AlgebraError::InvalidTable {
            name: name.to_string(),
            reason,
        };
        let n = self.elements.len();
        if n == 0 || n > u8::MAX as usize {
            return Err(fail(format!("{n} elements (need 1..=255)")));
        }
        for (i, e) in self.elements.iter().enumerate() {
            if self.elements[..i].contains(e) {
                return Err(fail(format!("duplicate element `{e}`")));
            }
        }
        if self.zero >= n || self.one >= n {
            return Err(fail("zero/one out of range".into()));
        }
        for (label, table) in [("plus", &self.plus), ("times", &self.times)] {
            if table.len() != n || table.iter().any(|row| row.len() != n) {
                return Err(fail(format!("{label} table is not {n}x{n}")));
            }
            if table.iter().flatten().any(|&v| v >= n) {
                return Err(fail(format!("{label} table has an out-of-range entry")));
            }
        }
        let (p, t) = (&self.plus, &self.times);
        let el = |i: usize| &self.elements[i];
        for a in 0..n {
            if p[a][self.zero] != a {
                return Err(fail(format!("zero is not the unit of plus at {}", el(a))));
            }
            if t[a][self.one] != a {
                return Err(fail(format!("one is not the unit of times at {}", el(a))));
            }
            if t[a][self.zero] != self.zero {
                return Err(fail(format!("zero does not absorb {}", el(a))));
            }
            for b in 0..n {
                if p[a][b] != p[b][a] || t[a][b] != t[b][a] {
                    return Err(fail(format!("not commutative at ({}, {})", el(a), el(b))));
                }
                if p[a][b] != a && p[a][b] != b {
                    return Err(fail(format!(
                        "plus({}, {}) selects neither operand",
                        el(a),
                        el(b)
                    )));
                }
                for c in 0..n {
                    if p[a][p[b][c]] != p[p[a][b]][c] || t[a][t[b][c]] != t[t[a][b]][c] {
                        return Err(fail(format!(
                            "not associative at ({}, {}, {})",
                            el(a),
                            el(b),
                            el(c)
                        )));
                    }
                    if t[a][p[b][c]] != p[t[a][b]][t[a][c]] {
                        return Err(fail(format!(
                            "times does not distribute at ({}, {}, {})",
                            el(a),
                            el(b),
                            el(c)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Risk,
    Trust,
    Finite(Arc<FiniteTable>),
}

/// A c*-semiring selected by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Semiring {
    name: Name,
    kind: Kind,
}

impl Semiring {
    pub fn risk() -> Self {
        Semiring {
            name: "risk".into(),
            kind: Kind::Risk,
        }
    }

    pub fn trust() -> Self {
        Semiring {
            name: "trust".into(),
            kind: Kind::Trust,
        }
    }

    /// Built-in semiring lookup (case-insensitive).
    pub fn builtin(name: &str) -> Result<Self, AlgebraError> {
        match name.to_ascii_lowercase().as_str() {
            "risk" => Ok(Self::risk()),
            "trust" => Ok(Self::trust()),
            _ => Err(AlgebraError::UnknownSemiring(name.to_string())),
        }
    }

    /// Registers a finite semiring after validating it.
    pub fn finite(name: &str, table: FiniteTable) -> Result<Self, AlgebraError> {
        table.validate(name)?;
        Ok(Semiring {
            name: name.to_ascii_lowercase().into(),
            kind: Kind::Finite(Arc::new(table)),
        })
    }

    pub fn name(&self) -> &Name {
        &self.name
    }

    /// The notation checks in this semiring are written with.
    pub fn notation(&self) -> Notation {
        match self.kind {
            Kind::Risk => Notation::AtMost,
            Kind::Trust | Kind::Finite(_) => Notation::AtLeast,
        }
    }

    fn wrap(&self, scalar: Scalar) -> MetricValue {
        MetricValue {
            semiring: self.name.clone(),
            scalar,
        }
    }

    pub fn zero(&self) -> MetricValue {
        match &self.kind {
            Kind::Risk => self.wrap(Scalar::Real(f64::INFINITY)),
            Kind::Trust => self.wrap(Scalar::Real(0.0)),
            Kind::Finite(t) => self.wrap(Scalar::Elem(t.zero as u8)),
        }
    }

    pub fn one(&self) -> MetricValue {
        match &self.kind {
            Kind::Risk => self.wrap(Scalar::Real(0.0)),
            Kind::Trust => self.wrap(Scalar::Real(1.0)),
            Kind::Finite(t) => self.wrap(Scalar::Elem(t.one as u8)),
        }
    }

    /// A real-valued element. Fails for finite semirings and for values
    /// outside the domain.
    pub fn value(&self, x: f64) -> Result<MetricValue, AlgebraError> {
        let ok = match self.kind {
            Kind::Risk => x >= 0.0,
            Kind::Trust => (0.0..=1.0).contains(&x),
            Kind::Finite(_) => false,
        };
        if ok {
            Ok(self.wrap(Scalar::Real(x)))
        } else {
            Err(AlgebraError::OutOfDomain {
                semiring: self.name.clone(),
                value: x.to_string(),
            })
        }
    }

    /// A finite-table element by name.
    pub fn element(&self, name: &str) -> Result<MetricValue, AlgebraError> {
        let unknown = || AlgebraError::UnknownElement {
            semiring: self.name.clone(),
            name: name.to_string(),
        };
        match &self.kind {
            Kind::Finite(t) => t
                .elements
                .iter()
                .position(|e| e == name)
                .map(|i| self.wrap(Scalar::Elem(i as u8)))
                .ok_or_else(unknown),
            _ => Err(unknown()),
        }
    }

    /// Parses a literal: a number, `inf`/`∞`, or a finite element name or
    /// `#index`.
    pub fn parse_value(&self, text: &str) -> Result<MetricValue, AlgebraError> {
        let text = text.trim();
        if let Kind::Finite(t) = &self.kind {
            // `#i` is the index form used by `Display`
            if let Some(i) = text.strip_prefix('#').and_then(|i| i.parse::<usize>().ok()) {
                if i < t.elements.len() {
                    return Ok(self.wrap(Scalar::Elem(i as u8)));
                }
            }
            return self.element(text);
        }
        match text {
            "inf" | "∞" | "infinity" => self.value(f64::INFINITY),
            _ => match text.parse::<f64>() {
                Ok(x) if !x.is_nan() => self.value(x),
                _ => Err(AlgebraError::OutOfDomain {
                    semiring: self.name.clone(),
                    value: text.to_string(),
                }),
            },
        }
    }

    /// Renders a value with element names for finite semirings.
    pub fn render(&self, v: &MetricValue) -> String {
        match (&self.kind, v.scalar) {
            (Kind::Finite(t), Scalar::Elem(i)) => t
                .elements
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| v.to_string()),
            _ => v.to_string(),
        }
    }

    /// Every element, for finite semirings.
    pub fn elements(&self) -> Option<Vec<MetricValue>> {
        match &self.kind {
            Kind::Finite(t) => Some(
                (0..t.elements.len())
                    .map(|i| self.wrap(Scalar::Elem(i as u8)))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Checks that `v` belongs to this semiring.
    pub fn check(&self, v: &MetricValue) -> Result<(), AlgebraError> {
        if v.semiring == self.name {
            Ok(())
        } else {
            Err(AlgebraError::Mixed {
                left: self.name.clone(),
                right: v.semiring.clone(),
            })
        }
    }

    fn operands(&self, a: &MetricValue, b: &MetricValue) -> Result<(Scalar, Scalar), AlgebraError> {
        if a.semiring != b.semiring {
            return Err(AlgebraError::Mixed {
                left: a.semiring.clone(),
                right: b.semiring.clone(),
            });
        }
        self.check(a)?;
        Ok((a.scalar, b.scalar))
    }

    pub fn plus(&self, a: &MetricValue, b: &MetricValue) -> Result<MetricValue, AlgebraError> {
        let s = match (&self.kind, self.operands(a, b)?) {
            (Kind::Risk, (Scalar::Real(x), Scalar::Real(y))) => Scalar::Real(x.min(y)),
            (Kind::Trust, (Scalar::Real(x), Scalar::Real(y))) => Scalar::Real(x.max(y)),
            (Kind::Finite(t), (Scalar::Elem(x), Scalar::Elem(y))) => {
                Scalar::Elem(t.plus[x as usize][y as usize] as u8)
            }
            _ => return Err(self.kind_mismatch(a, b)),
        };
        Ok(self.wrap(s))
    }

    pub fn times(&self, a: &MetricValue, b: &MetricValue) -> Result<MetricValue, AlgebraError> {
        let s = match (&self.kind, self.operands(a, b)?) {
            (Kind::Risk, (Scalar::Real(x), Scalar::Real(y))) => Scalar::Real(x + y),
            (Kind::Trust, (Scalar::Real(x), Scalar::Real(y))) => Scalar::Real(x * y),
            (Kind::Finite(t), (Scalar::Elem(x), Scalar::Elem(y))) => {
                Scalar::Elem(t.times[x as usize][y as usize] as u8)
            }
            _ => return Err(self.kind_mismatch(a, b)),
        };
        Ok(self.wrap(s))
    }

    /// The operand `plus` rejects: the `<=_T`-worse of the two. Returns `a`
    /// when the operands are equal.
    pub fn inv_plus(&self, a: &MetricValue, b: &MetricValue) -> Result<MetricValue, AlgebraError> {
        if self.plus(a, b)? == *b {
            Ok(a.clone())
        } else {
            Ok(b.clone())
        }
    }

    /// `a <=_T b  iff  plus(a, b) = b`.
    pub fn leq(&self, a: &MetricValue, b: &MetricValue) -> Result<bool, AlgebraError> {
        Ok(self.plus(a, b)? == *b)
    }

    /// `d ∈ γ`, i.e. `d >=_T threshold`.
    pub fn satisfies(&self, d: &MetricValue, check: &MetricCheck) -> Result<bool, AlgebraError> {
        if check.metric != self.name {
            return Err(AlgebraError::MetricMismatch {
                check: check.metric.clone(),
                semiring: self.name.clone(),
            });
        }
        self.leq(&check.threshold, d)
    }

    /// ⊗-fold of a sequence of values, starting from `one`.
    pub fn product<'a, I>(&self, values: I) -> Result<MetricValue, AlgebraError>
    where
        I: IntoIterator<Item = &'a MetricValue>,
    {
        values
            .into_iter()
            .try_fold(self.one(), |acc, v| self.times(&acc, v))
    }

    /// Names of the c*-semiring axioms and `inv_plus` properties that fail
    /// on the triple `(a, b, c)`. Empty means all hold.
    pub fn law_violations(&self, a: &MetricValue, b: &MetricValue, c: &MetricValue) -> Result<Vec<&'static str>, AlgebraError> {
        let p = |x: &MetricValue, y: &MetricValue| self.plus(x, y);
        let t = |x: &MetricValue, y: &MetricValue| self.times(x, y);
        let w = |x: &MetricValue, y: &MetricValue| self.inv_plus(x, y);
        let (zero, one) = (self.zero(), self.one());
        let leq = |x: &MetricValue, y: &MetricValue| self.leq(x, y);
        let checks = [
            ("plus commutative", p(a, b)? == p(b, a)?),
            ("plus associative", p(&p(a, b)?, c)? == p(a, &p(b, c)?)?),
            ("plus idempotent", p(a, a)? == *a),
            ("zero is plus unit", p(a, &zero)? == *a),
            ("one absorbs plus", p(a, &one)? == one),
            ("plus selective", { let s = p(a, b)?; s == *a || s == *b }),
            ("times commutative", t(a, b)? == t(b, a)?),
            ("times associative", t(&t(a, b)?, c)? == t(a, &t(b, c)?)?),
            ("one is times unit", t(a, &one)? == *a),
            ("zero absorbs times", t(a, &zero)? == zero),
            ("times distributes", t(a, &p(b, c)?)? == p(&t(a, b)?, &t(a, c)?)?),
            ("order total", leq(a, b)? || leq(b, a)?),
            ("order antisymmetric", !(leq(a, b)? && leq(b, a)?) || a == b),
            ("order transitive", !(leq(a, b)? && leq(b, c)?) || leq(a, c)?),
            ("inv_plus commutative", w(a, b)? == w(b, a)?),
            ("inv_plus associative", w(&w(a, b)?, c)? == w(a, &w(b, c)?)?),
            ("inv_plus idempotent", w(a, a)? == *a),
            ("inv_plus distributes", t(a, &w(b, c)?)? == w(&t(a, b)?, &t(a, c)?)?),
            ("inv_plus monotone", !leq(a, b)? || leq(&w(a, c)?, &w(b, c)?)?),
            ("inv_plus picks worse", leq(&w(a, b)?, a)? && leq(&w(a, b)?, b)?),
        ];
        Ok(checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect())
    }

    fn kind_mismatch(&self, a: &MetricValue, b: &MetricValue) -> AlgebraError {
        AlgebraError::OutOfDomain {
            semiring: self.name.clone(),
            value: format!("{a}, {b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn risk(x: f64) -> MetricValue {
        Semiring::risk().value(x).unwrap()
    }

    fn trust(x: f64) -> MetricValue {
        Semiring::trust().value(x).unwrap()
    }

    #[test]
    fn risk_operations() {
        let s = Semiring::risk();
        assert_eq!(s.plus(&risk(73.0), &risk(75.0)).unwrap(), risk(73.0));
        assert_eq!(s.plus(&s.zero(), &risk(42.0)).unwrap(), risk(42.0));
        assert_eq!(s.times(&risk(15.0), &risk(20.0)).unwrap(), risk(35.0));
        assert_eq!(s.times(&s.zero(), &risk(7.0)).unwrap(), s.zero());
        assert_eq!(s.inv_plus(&risk(0.0), &risk(15.0)).unwrap(), risk(15.0));
        assert_eq!(s.inv_plus(&risk(28.0), &risk(53.0)).unwrap(), risk(53.0));
        assert!(s.leq(&risk(80.0), &risk(75.0)).unwrap());
        assert!(s.leq(&s.zero(), &risk(3.0)).unwrap());
    }

    #[test]
    fn inv_plus_reproduces_flight_bound() {
        // 20 ⊗ inv_plus(28, 25 ⊗ 28) = 73
        let s = Semiring::risk();
        let inner = s.times(&risk(25.0), &risk(28.0)).unwrap();
        let worst = s.inv_plus(&risk(28.0), &inner).unwrap();
        assert_eq!(s.times(&risk(20.0), &worst).unwrap(), risk(73.0));
    }

    #[test]
    fn trust_operations() {
        let s = Semiring::trust();
        assert_eq!(s.plus(&trust(0.3), &trust(0.8)).unwrap(), trust(0.8));
        assert_eq!(s.times(&trust(0.5), &trust(0.5)).unwrap(), trust(0.25));
        assert!(s.leq(&trust(0.3), &trust(0.8)).unwrap());
        assert!(s.value(1.5).is_err());
    }

    #[test]
    fn satisfies_risk_threshold() {
        let s = Semiring::risk();
        let g = MetricCheck::new(risk(75.0), Notation::AtMost);
        assert!(s.satisfies(&risk(73.0), &g).unwrap());
        assert!(s.satisfies(&risk(75.0), &g).unwrap());
        assert!(!s.satisfies(&risk(78.0), &g).unwrap());
        assert_eq!(g.to_string(), "RISK <= 75");
        assert_eq!(g.label(), "RISK<=75");
    }

    #[test]
    fn mixed_semirings_rejected() {
        let s = Semiring::risk();
        assert!(matches!(
            s.plus(&risk(1.0), &trust(0.5)),
            Err(AlgebraError::Mixed { .. })
        ));
        let g = MetricCheck::new(trust(0.5), Notation::AtLeast);
        assert!(matches!(
            s.satisfies(&risk(1.0), &g),
            Err(AlgebraError::MetricMismatch { .. })
        ));
    }

    #[test]
    fn parse_values() {
        let s = Semiring::risk();
        assert_eq!(s.parse_value("inf").unwrap(), s.zero());
        assert_eq!(s.parse_value("75").unwrap(), risk(75.0));
        assert!(s.parse_value("-1").is_err());
        assert!(s.parse_value("abc").is_err());
    }

    #[test]
    fn finite_table_rejects_non_selective_plus() {
        // plus = xor-like on {0,1} is not c*
        let table = FiniteTable {
            elements: vec!["a".into(), "b".into()],
            zero: 0,
            one: 1,
            plus: vec![vec![0, 1], vec![1, 0]],
            times: vec![vec![0, 0], vec![0, 1]],
        };
        assert!(matches!(
            Semiring::finite("bad", table),
            Err(AlgebraError::InvalidTable { .. })
        ));
    }

    #[test]
    fn negative_zero_is_zero() {
        assert_eq!(risk(0.0), Semiring::risk().value(-0.0).unwrap());
    }
}
