//! λ^req: syntax, surface grammar, desugaring and name resolution.

pub mod ast;
pub mod decls;
pub mod desugar;
pub mod parser;
pub mod print;

pub use ast::{free_vars, subst, Expr, Lambda, Request, TypeAnn, FRESH_PREFIX};
pub use decls::{parse_program, resolve, Declarations, LangError, ResolveError, ResourceDomain};
pub use desugar::desugar;
pub use parser::{parse, parse_with, ParseError};
