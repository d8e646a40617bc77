//! Canonical printer. `parse(&e.to_string()) == e` for every surface AST
//! whose names are valid identifiers.

use std::fmt::{self, Write};

use super::ast::{Expr, Lambda, Request};

// precedence levels
const SEQ: u8 = 0;
const APP: u8 = 1;
const ATOM: u8 = 2;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(&mut out, self, SEQ, true);
        f.write_str(&out)
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "req {} : {} -> {}", self.id, self.input, self.output)?;
        let mut annots = Vec::new();
        if let Some(p) = &self.policy {
            annots.push(format!("sec \"{p}\""));
        }
        if let Some(c) = &self.check {
            annots.push(format!("met {c}"));
        }
        if !annots.is_empty() {
            write!(f, " {{ {} }}", annots.join(", "))?;
        }
        Ok(())
    }
}

fn is_open(e: &Expr) -> bool {
    matches!(e, Expr::If { .. } | Expr::Abs(_))
}

/// `tail` is true when nothing follows `e` before the enclosing delimiter,
/// so an open form (`if`, `fun`, `\`) may be printed without parentheses.
fn write_expr(out: &mut String, e: &Expr, level: u8, tail: bool) {
    let needs_parens = match e {
        Expr::Seq(..) => level > SEQ,
        Expr::App(..) => level > APP,
        _ if is_open(e) => !tail,
        _ => false,
    };
    if needs_parens {
        out.push('(');
        write_expr(out, e, SEQ, true);
        out.push(')');
        return;
    }
    match e {
        Expr::Unit => out.push('*'),
        Expr::Res(r) => out.push_str(r),
        Expr::Var(x) => out.push_str(x),
        Expr::Event { action, arg } => {
            out.push_str(action);
            out.push('(');
            write_expr(out, arg, SEQ, true);
            out.push(')');
        }
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => {
            let _ = write!(out, "if {guard} then ");
            write_expr(out, then_branch, SEQ, true);
            out.push_str(" else ");
            write_expr(out, else_branch, SEQ, true);
        }
        Expr::Abs(l) => write_lambda(out, l),
        Expr::App(fun, arg) => {
            if matches!(**fun, Expr::Req(_)) {
                out.push('(');
                write_expr(out, fun, SEQ, true);
                out.push(')');
            } else {
                write_expr(out, fun, APP, false);
            }
            out.push(' ');
            write_expr(out, arg, ATOM, tail);
        }
        Expr::Sec { policy, body } => {
            let _ = write!(out, "sec \"{policy}\" {{ ");
            write_expr(out, body, SEQ, true);
            out.push_str(" }");
        }
        Expr::Met { check, body } => {
            let _ = write!(out, "met {check} {{ ");
            write_expr(out, body, SEQ, true);
            out.push_str(" }");
        }
        Expr::Req(r) => {
            let _ = write!(out, "{r}");
        }
        Expr::Seq(a, b) => {
            write_expr(out, a, APP, false);
            out.push_str("; ");
            write_expr(out, b, SEQ, tail);
        }
        Expr::Fork(a, b) => {
            out.push_str("fork { ");
            write_expr(out, a, SEQ, true);
            out.push_str(" } and { ");
            write_expr(out, b, SEQ, true);
            out.push_str(" }");
        }
    }
}

fn write_lambda(out: &mut String, l: &Lambda) {
    match &l.self_name {
        Some(z) => {
            let _ = write!(out, "fun {z}({}", l.param);
            if let Some(t) = &l.param_ty {
                let _ = write!(out, ": {t}");
            }
            out.push(')');
            if let Some(t) = &l.ret_ty {
                let _ = write!(out, ": {t}");
            }
            out.push_str(" = ");
        }
        None => {
            let _ = write!(out, "\\{}", l.param);
            if let Some(t) = &l.param_ty {
                let _ = write!(out, ": {t}");
            }
            out.push_str(" -> ");
        }
    }
    write_expr(out, &l.body, SEQ, true);
}

#[cfg(test)]
mod tests {
    use crate::lang::parse;

    fn round_trip(src: &str) {
        let e = parse(src).unwrap();
        let printed = e.to_string();
        assert_eq!(parse(&printed).unwrap(), e, "printed as {printed}");
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(parse("met RISK <= 75 { * }").unwrap().to_string(), "met RISK <= 75 { * }");
        assert_eq!(parse("f  (g x)").unwrap().to_string(), "f (g x)");
        assert_eq!(parse("\\x -> x").unwrap().to_string(), "\\x -> x");
    }

    #[test]
    fn open_forms_are_parenthesised_when_not_last() {
        round_trip("(if g then A else B); C");
        round_trip("(\\x -> x) A");
        round_trip("f (\\x -> x) A");
        round_trip("f \\x -> x; y");
        round_trip("a((if g then A else B)); *");
    }

    #[test]
    fn corpus_shapes() {
        round_trip("fun z(x: Doc) = sign_64(x); SIGNED_DOC");
        round_trip("fork { a(X) } and { b(Y); * }");
        round_trip("(req r : Airport -> Flight { sec \"p\", met RISK <= inf }) AIRPORT");
        round_trip("if is_empty then SIGNED_DOC else (req rho1 : Doc -> Doc) y; z y");
    }
}
