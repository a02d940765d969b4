use std::fmt::{self, Write};

use super::ast::*;

fn binders(f: &mut fmt::Formatter<'_>, bs: &[Binder]) -> fmt::Result {
    f.write_str("(")?;
    for (i, b) in bs.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "({} {})", b.var, b.sort)?;
    }
    f.write_str(")")
}

fn nary(f: &mut fmt::Formatter<'_>, op: &str, xs: &[Formula]) -> fmt::Result {
    write!(f, "({op}")?;
    for x in xs {
        write!(f, " {x}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::App { rel, primed, args } => {
                write!(f, "({rel}{}", if *primed { "'" } else { "" })?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Formula::Member { elem, set } => write!(f, "(member {elem} {set})"),
            Formula::Eq(a, b) => write!(f, "(= {a} {b})"),
            Formula::Distinct(ts) => {
                f.write_str("(distinct")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                f.write_str(")")
            }
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(xs) => nary(f, "and", xs),
            Formula::Or(xs) => nary(f, "or", xs),
            Formula::Implies(a, b) => write!(f, "(=> {a} {b})"),
            Formula::Iff(a, b) => write!(f, "(= {a} {b})"),
            Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
                let q = if matches!(self, Formula::Forall(..)) {
                    "forall"
                } else {
                    "exists"
                };
                write!(f, "({q} ")?;
                binders(f, bs)?;
                write!(f, " {body})")
            }
        }
    }
}

struct Binders<'a>(&'a [Binder]);

impl fmt::Display for Binders<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        binders(f, self.0)
    }
}

/// Renders a spec in its surface syntax; the output re-parses to an equal value.
pub fn print_spec(spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    for s in &spec.sorts {
        match &s.kind {
            SortKind::Independent => writeln!(out, "(sort {})", s.name),
            SortKind::Majority { base } => {
                writeln!(out, "(dependent-sort {} (majority {base}))", s.name)
            }
        }
        .unwrap();
    }
    for r in &spec.relations {
        match &r.role {
            RelationRole::State => writeln!(out, "(relation {} ({}))", r.name, r.arg_sorts.join(" ")).unwrap(),
            RelationRole::Definition { params, body } => {
                write!(out, "(definition ({}", r.name).unwrap();
                for p in params {
                    write!(out, " ({} {})", p.var, p.sort).unwrap();
                }
                writeln!(out, ")\n  {body})").unwrap();
            }
            RelationRole::Membership { .. } => {}
        }
    }
    for a in &spec.axioms {
        writeln!(out, "(axiom {a})").unwrap();
    }
    writeln!(out, "(init {})", spec.init).unwrap();
    for a in &spec.actions {
        writeln!(out, "(action {} {}", a.name, Binders(&a.params)).unwrap();
        writeln!(out, "  :guard {}", a.guard).unwrap();
        write!(out, "  :update (").unwrap();
        for (i, u) in a.updates.iter().enumerate() {
            if i > 0 {
                write!(out, "\n            ").unwrap();
            }
            write!(out, "({} {})", u.relation, u.formula).unwrap();
        }
        writeln!(out, "))").unwrap();
    }
    writeln!(out, "(safety {})", spec.safety).unwrap();
    out
}
