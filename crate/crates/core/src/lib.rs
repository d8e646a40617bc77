//! Metric-aware secure service orchestration.
//!
//! Programs are written in λ^req, a call-by-value λ-calculus with resource
//! access events, security and metric framings and service requests. The
//! pipeline is
//!
//! 1. [`lang`]: parse, resolve and desugar a program;
//! 2. [`effects`]: infer its type and metric-annotated history expression;
//! 3. [`mnf`]: normalise the history expression to one metric bound;
//! 4. [`plans`]: enumerate composition plans and classify each one;
//! 5. [`interp`]: run the program under a plan with runtime enforcement.
//!
//! [`semiring`] supplies the metric algebra, [`history`] the trace
//! semantics of effects, [`policy`] usage automata, and [`config`] loads the
//! TOML documents that describe a corpus.

use std::sync::Arc;

pub type Name = Arc<str>;

pub mod config;
pub mod effects;
pub mod history;
pub mod interp;
pub mod lang;
pub mod mnf;
pub mod plans;
pub mod policy;
pub mod sample;
pub mod semiring;

pub use effects::{MetricFn, Repository, Service, Type, Typing};
pub use history::{HistExpr, Trace, TraceItem, TraceSet};
pub use interp::{Enforcement, GuardEnv, GuardValue, Machine, Outcome, Scheduler};
pub use lang::{Declarations, Expr};
pub use mnf::NormalForm;
pub use plans::{Classification, Plan, PlanVerdict};
pub use policy::{Policies, UsageAutomaton};
pub use semiring::{AlgebraError, MetricCheck, MetricValue, Notation, Semiring};
