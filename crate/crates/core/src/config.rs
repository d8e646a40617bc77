//! TOML documents describing a corpus: the analysis configuration, the
//! repository manifest, metric tables, policies and custom semirings.
//!
//! Paths inside a document are relative to the document's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::effects::{infer_closed, publish, Context, MetricFn, Repository, Service, Type, TypeError};
use crate::history::{parse_hist, HistParseError};
use crate::interp::{Enforcement, GuardEnv, GuardValue, Scheduler, DEFAULT_FUEL, DEFAULT_STATE_CAP};
use crate::lang::{parse_program, Declarations, Expr, LangError, ResolveError, TypeAnn};
use crate::policy::{Policies, PolicyError, UsageAutomaton};
use crate::semiring::{AlgebraError, FiniteTable, MetricValue, Semiring};
use crate::Name;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Lang { path: PathBuf, source: LangError },
    #[error("{path}: {source}")]
    Type { path: PathBuf, source: TypeError },
    #[error("{path}: {source}")]
    Algebra { path: PathBuf, source: AlgebraError },
    #[error("{path}: {source}")]
    Policy { path: PathBuf, source: PolicyError },
    #[error("{path}: {source}")]
    Hist { path: PathBuf, source: HistParseError },
    #[error("{path}: {source}")]
    Resolve { path: PathBuf, source: ResolveError },
    #[error("service `{location}` declares effect {declared} but its implementation has {inferred}")]
    EffectMismatch {
        location: Name,
        declared: String,
        inferred: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_doc<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    toml::from_str(&read(path)?).map_err(|e| ConfigError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A TOML scalar read as a metric literal.
fn literal(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SemiringDoc {
    name: String,
    elements: Vec<String>,
    zero: String,
    one: String,
    plus: Vec<Vec<String>>,
    times: Vec<Vec<String>>,
}

/// Reads a finite semiring given by element names and Cayley tables.
pub fn semiring_from_toml(text: &str) -> Result<Semiring, String> {
    let doc: SemiringDoc = toml::from_str(text).map_err(|e| e.to_string())?;
    let index = |e: &str| {
        doc.elements
            .iter()
            .position(|x| x == e)
            .ok_or_else(|| format!("unknown element `{e}`"))
    };
    let table = |rows: &[Vec<String>]| -> Result<Vec<Vec<usize>>, String> {
        rows.iter().map(|r| r.iter().map(|e| index(e)).collect()).collect()
    };
    let t = FiniteTable {
        elements: doc.elements.clone(),
        zero: index(&doc.zero)?,
        one: index(&doc.one)?,
        plus: table(&doc.plus)?,
        times: table(&doc.times)?,
    };
    Semiring::finite(&doc.name, t).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FTableDoc {
    metric: String,
    #[serde(default)]
    entries: Vec<FEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FEntry {
    action: String,
    #[serde(default = "star")]
    resource: String,
    value: toml::Value,
}

fn star() -> String {
    "*".into()
}

/// Reads an F-table; `resource = "*"` (the default) is the per-action
/// fallback.
pub fn metric_fn_from_toml(text: &str, s: &Semiring) -> Result<MetricFn, String> {
    let doc: FTableDoc = toml::from_str(text).map_err(|e| e.to_string())?;
    if !doc.metric.eq_ignore_ascii_case(s.name()) {
        return Err(format!("table is for `{}`, configured semiring is `{}`", doc.metric, s.name()));
    }
    let mut f = MetricFn::new(s.clone());
    for e in &doc.entries {
        let v = s.parse_value(&literal(&e.value)).map_err(|err| err.to_string())?;
        let r = (e.resource != "*").then_some(e.resource.as_str());
        f.set(&e.action, r, v).map_err(|err| err.to_string())?;
    }
    Ok(f)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    #[serde(default)]
    services: Vec<ServiceEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceEntry {
    location: String,
    source: Option<PathBuf>,
    effect: Option<String>,
    input: Option<String>,
    output: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainEntry {
    name: String,
    members: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnionEntry {
    name: String,
    parts: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GuardDoc {
    Bool(bool),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisDoc {
    #[serde(default = "risk")]
    semiring: String,
    semiring_file: Option<PathBuf>,
    ftable: PathBuf,
    repository: PathBuf,
    #[serde(default)]
    policies: Vec<PathBuf>,
    #[serde(default)]
    domains: Vec<DomainEntry>,
    #[serde(default)]
    unions: Vec<UnionEntry>,
    #[serde(default)]
    guards: toml::Table,
    #[serde(default)]
    bounds: Bounds,
    #[serde(default)]
    run: RunDoc,
}

fn risk() -> String {
    "risk".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    /// `μ` unfolding depth for denotations.
    pub depth: usize,
    pub mu_iters: usize,
    pub fuel: usize,
    pub state_cap: usize,
    pub trace_cap: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            depth: 2,
            mu_iters: crate::mnf::DEFAULT_MU_ITERS,
            fuel: DEFAULT_FUEL,
            state_cap: DEFAULT_STATE_CAP,
            trace_cap: crate::history::DEFAULT_TRACE_CAP,
        }
    }
}

impl Bounds {
    pub fn limits(&self) -> crate::plans::Limits {
        crate::plans::Limits {
            depth: self.depth,
            trace_cap: self.trace_cap,
            mu_iters: self.mu_iters,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunDoc {
    scheduler: Option<String>,
    seed: Option<u64>,
    enforcement: Option<Enforcement>,
    initial: Option<toml::Value>,
}

/// Parses `left`, `right`, `seeded` (with `seed`) or `exhaustive`.
pub fn parse_scheduler(name: &str, seed: u64) -> Result<Scheduler, String> {
    match name {
        "left" => Ok(Scheduler::LeftFirst),
        "right" => Ok(Scheduler::RightFirst),
        "seeded" => Ok(Scheduler::Seeded(seed)),
        "exhaustive" => Ok(Scheduler::Exhaustive),
        other => Err(format!("unknown scheduler `{other}`")),
    }
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub scheduler: Scheduler,
    pub seed: u64,
    pub enforcement: Enforcement,
    pub initial: MetricValue,
}

/// A loaded corpus, ready for analysis.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub decls: Declarations,
    pub repo: Repository,
    pub metric: MetricFn,
    pub policies: Policies,
    pub guards: GuardEnv,
    pub bounds: Bounds,
    pub run: RunSettings,
}

impl Corpus {
    pub fn context(&self) -> Context<'_> {
        Context::new(&self.decls, &self.repo, &self.metric)
    }

    pub fn semiring(&self) -> &Semiring {
        &self.metric.semiring
    }

    /// Parses, resolves and desugars a program file.
    pub fn load_program(&self, path: &Path) -> Result<Expr, ConfigError> {
        parse_program(&read(path)?, &self.decls).map_err(|source| ConfigError::Lang {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Path relative to the configuration directory.
    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }
}

/// Loads `analysis.toml` and everything it references. `semiring_override`
/// replaces the configured semiring name (not a semiring file).
pub fn load(path: &Path, semiring_override: Option<&str>) -> Result<Corpus, ConfigError> {
    let doc: AnalysisDoc = parse_doc(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let invalid = |message: String| ConfigError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let b = doc.bounds;
    if b.depth == 0 || b.mu_iters == 0 || b.state_cap == 0 || b.trace_cap == 0 {
        return Err(invalid("bounds must be positive".into()));
    }

    let semiring = match (semiring_override, &doc.semiring_file) {
        (None, Some(file)) => {
            let p = root.join(file);
            semiring_from_toml(&read(&p)?).map_err(|message| ConfigError::Syntax { path: p, message })?
        }
        (name, _) => {
            let name = name.unwrap_or(&doc.semiring);
            Semiring::builtin(name).map_err(|source| ConfigError::Algebra {
                path: path.to_path_buf(),
                source,
            })?
        }
    };

    let mut decls = Declarations::new(semiring.clone());
    let resolve_err = |source| ConfigError::Resolve {
        path: path.to_path_buf(),
        source,
    };
    for d in &doc.domains {
        let members: Vec<&str> = d.members.iter().map(String::as_str).collect();
        decls.add_domain(&d.name, &members).map_err(resolve_err)?;
    }
    for u in &doc.unions {
        let parts: Vec<&str> = u.parts.iter().map(String::as_str).collect();
        decls.add_union(&u.name, &parts).map_err(resolve_err)?;
    }

    let mut guards = GuardEnv::new();
    for (name, v) in &doc.guards {
        let g: GuardDoc = v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("guard `{name}`: {e}")))?;
        let value = match g {
            GuardDoc::Bool(true) => GuardValue::True,
            GuardDoc::Bool(false) => GuardValue::False,
            GuardDoc::Word(w) if w == "both" => GuardValue::Both,
            GuardDoc::Word(w) => return Err(invalid(format!("guard `{name}`: `{w}` is not true, false or \"both\""))),
        };
        decls.guards.insert(name.as_str().into());
        guards.insert(name.as_str().into(), value);
    }

    let mut policies = Policies::new();
    for p in &doc.policies {
        let file = root.join(p);
        let a = UsageAutomaton::from_toml(&read(&file)?).map_err(|source| ConfigError::Policy {
            path: file.clone(),
            source,
        })?;
        decls.policies.insert(a.name.clone());
        policies.insert(a.name.clone(), a);
    }

    let ftable = root.join(&doc.ftable);
    let metric = metric_fn_from_toml(&read(&ftable)?, &semiring).map_err(|message| ConfigError::Syntax {
        path: ftable.clone(),
        message,
    })?;

    let manifest_path = root.join(&doc.repository);
    let repo = load_repository(&manifest_path, &decls, &metric)?;

    let r = doc.run;
    let seed = r.seed.unwrap_or(0);
    let scheduler = parse_scheduler(r.scheduler.as_deref().unwrap_or("left"), seed).map_err(invalid)?;
    let initial = match &r.initial {
        Some(v) => semiring.parse_value(&literal(v)).map_err(|source| ConfigError::Algebra {
            path: path.to_path_buf(),
            source,
        })?,
        None => semiring.one(),
    };

    Ok(Corpus {
        root,
        decls,
        repo,
        metric,
        policies,
        guards,
        bounds: b,
        run: RunSettings {
            scheduler,
            seed,
            enforcement: r.enforcement.unwrap_or_default(),
            initial,
        },
    })
}

/// Publishes every service of a manifest in order. A declared effect must
/// equal the inferred one when both are present.
pub fn load_repository(path: &Path, decls: &Declarations, metric: &MetricFn) -> Result<Repository, ConfigError> {
    let doc: ManifestDoc = parse_doc(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut repo = Repository::new();
    for s in &doc.services {
        let declared = match &s.effect {
            Some(text) => Some(parse_hist(text, &decls.semiring).map_err(|source| ConfigError::Hist {
                path: path.to_path_buf(),
                source,
            })?),
            None => None,
        };
        match &s.source {
            Some(src) => {
                let file = dir.join(src);
                let e = parse_program(&read(&file)?, decls).map_err(|source| ConfigError::Lang {
                    path: file.clone(),
                    source,
                })?;
                publish(&s.location, e, &mut repo, decls, metric).map_err(|source| ConfigError::Type {
                    path: file.clone(),
                    source,
                })?;
                let published = repo.get(&s.location).map(|x| x.effect.clone());
                if let (Some(d), Some(inferred)) = (declared, published) {
                    if d != inferred {
                        return Err(ConfigError::EffectMismatch {
                            location: s.location.as_str().into(),
                            declared: d.to_string(),
                            inferred: inferred.to_string(),
                        });
                    }
                }
            }
            None => {
                let bad = |message: String| ConfigError::Invalid {
                    path: path.to_path_buf(),
                    message,
                };
                let (Some(effect), Some(i), Some(o)) = (declared, &s.input, &s.output) else {
                    return Err(bad(format!(
                        "service `{}` needs either a source or an effect with input and output",
                        s.location
                    )));
                };
                let ty = |d: &str| {
                    if d == "unit" {
                        Ok(Type::Unit)
                    } else if decls.domain(d).is_some() {
                        Ok(Type::from_ann(&TypeAnn::Dom(d.into())))
                    } else {
                        Err(bad(format!("unknown domain `{d}`")))
                    }
                };
                repo.insert(Service {
                    location: s.location.as_str().into(),
                    input: ty(i)?,
                    output: ty(o)?,
                    effect,
                    implementation: None,
                });
            }
        }
    }
    Ok(repo)
}

/// Infers a program against a corpus; convenience for reports.
pub fn infer_program(corpus: &Corpus, e: &Expr) -> Result<crate::effects::Typing, TypeError> {
    infer_closed(&corpus.context(), e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVELS: &str = r#"
name = "levels"
elements = ["bad", "low", "high", "top"]
zero = "bad"
one = "top"
plus = [
  ["bad", "low", "high", "top"],
  ["low", "low", "high", "top"],
  ["high", "high", "high", "top"],
  ["top", "top", "top", "top"],
]
times = [
  ["bad", "bad", "bad", "bad"],
  ["bad", "low", "low", "low"],
  ["bad", "low", "high", "high"],
  ["bad", "low", "high", "top"],
]
"#;

    #[test]
    fn finite_semiring_document() {
        let s = semiring_from_toml(LEVELS).unwrap();
        let low = s.parse_value("low").unwrap();
        let high = s.parse_value("high").unwrap();
        assert_eq!(s.plus(&low, &high).unwrap(), high);
        assert_eq!(s.times(&low, &high).unwrap(), low);
        let broken = LEVELS.replace(r#"["low", "low", "high", "top"],"#, r#"["high", "low", "high", "top"],"#);
        assert!(semiring_from_toml(&broken).is_err());
    }

    #[test]
    fn ftable_document() {
        let s = Semiring::risk();
        let f = metric_fn_from_toml(
            r#"
metric = "RISK"
[[entries]]
action = "reserve"
resource = "FLIGHT_No"
value = 15
[[entries]]
action = "sign_64"
value = 1
[[entries]]
action = "blackhole"
value = "inf"
"#,
            &s,
        )
        .unwrap();
        assert_eq!(f.get("reserve", "FLIGHT_No"), s.value(15.0).unwrap());
        assert_eq!(f.get("sign_64", "RCPT"), s.value(1.0).unwrap());
        assert_eq!(f.get("blackhole", "X"), s.zero());
        assert_eq!(f.get("other", "X"), s.one());
        assert!(metric_fn_from_toml("metric = \"trust\"", &s).is_err());
    }

    #[test]
    fn schedulers() {
        assert_eq!(parse_scheduler("seeded", 9), Ok(Scheduler::Seeded(9)));
        assert!(parse_scheduler("random", 0).is_err());
    }
}
