use std::collections::BTreeSet;

use super::clause::{GroundClause, GroundLiteral};

/// Dense identifier of a ground atom: state variables first, then
/// auxiliary definition applications.
pub type AtomId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frame {
    Current,
    Next,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomRef {
    pub atom: AtomId,
    pub next: bool,
}

impl AtomRef {
    pub fn cur(atom: AtomId) -> Self {
        AtomRef { atom, next: false }
    }

    pub fn in_frame(atom: AtomId, frame: Frame) -> Self {
        AtomRef {
            atom,
            next: frame == Frame::Next,
        }
    }
}

/// Quantifier-free Boolean formula over ground atoms. Constructors simplify
/// constants away, so `Const` only appears at the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroundFormula {
    Const(bool),
    Atom(AtomRef),
    Not(Box<GroundFormula>),
    And(Vec<GroundFormula>),
    Or(Vec<GroundFormula>),
    Iff(Box<GroundFormula>, Box<GroundFormula>),
}

use GroundFormula as G;

impl GroundFormula {
    pub fn atom(atom: AtomId, frame: Frame) -> Self {
        G::Atom(AtomRef::in_frame(atom, frame))
    }

    pub fn literal(lit: GroundLiteral, frame: Frame) -> Self {
        let a = G::atom(lit.atom, frame);
        if lit.positive {
            a
        } else {
            G::not(a)
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: GroundFormula) -> Self {
        match f {
            G::Const(b) => G::Const(!b),
            G::Not(inner) => *inner,
            other => G::Not(Box::new(other)),
        }
    }

    pub fn and(xs: impl IntoIterator<Item = GroundFormula>) -> Self {
        let mut out = Vec::new();
        for x in xs {
            match x {
                G::Const(true) => {}
                G::Const(false) => return G::Const(false),
                G::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => G::Const(true),
            1 => out.pop().unwrap(),
            _ => G::And(out),
        }
    }

    pub fn or(xs: impl IntoIterator<Item = GroundFormula>) -> Self {
        let mut out = Vec::new();
        for x in xs {
            match x {
                G::Const(false) => {}
                G::Const(true) => return G::Const(true),
                G::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => G::Const(false),
            1 => out.pop().unwrap(),
            _ => G::Or(out),
        }
    }

    pub fn implies(a: GroundFormula, b: GroundFormula) -> Self {
        G::or([G::not(a), b])
    }

    pub fn iff(a: GroundFormula, b: GroundFormula) -> Self {
        match (a, b) {
            (G::Const(true), x) | (x, G::Const(true)) => x,
            (G::Const(false), x) | (x, G::Const(false)) => G::not(x),
            (x, y) if x == y => G::Const(true),
            (x, y) => G::Iff(Box::new(x), Box::new(y)),
        }
    }

    pub fn is_const(&self) -> Option<bool> {
        match self {
            G::Const(b) => Some(*b),
            _ => None,
        }
    }

    /// Evaluates under full valuations of both frames (indexed by atom id).
    pub fn eval(&self, cur: &[bool], next: &[bool]) -> bool {
        match self {
            G::Const(b) => *b,
            G::Atom(r) => {
                if r.next {
                    next[r.atom as usize]
                } else {
                    cur[r.atom as usize]
                }
            }
            G::Not(a) => !a.eval(cur, next),
            G::And(xs) => xs.iter().all(|x| x.eval(cur, next)),
            G::Or(xs) => xs.iter().any(|x| x.eval(cur, next)),
            G::Iff(a, b) => a.eval(cur, next) == b.eval(cur, next),
        }
    }

    /// Rebuilds the formula with every atom reference mapped through `f`.
    pub fn map_atoms(&self, f: &impl Fn(AtomRef) -> AtomRef) -> GroundFormula {
        match self {
            G::Const(b) => G::Const(*b),
            G::Atom(r) => G::Atom(f(*r)),
            G::Not(a) => G::not(a.map_atoms(f)),
            G::And(xs) => G::And(xs.iter().map(|x| x.map_atoms(f)).collect()),
            G::Or(xs) => G::Or(xs.iter().map(|x| x.map_atoms(f)).collect()),
            G::Iff(a, b) => G::Iff(Box::new(a.map_atoms(f)), Box::new(b.map_atoms(f))),
        }
    }

    /// Moves every current-state reference to the next state.
    pub fn to_next(&self) -> GroundFormula {
        self.map_atoms(&|r| AtomRef {
            atom: r.atom,
            next: true,
        })
    }

    /// Partial evaluation: atoms for which `value` answers are replaced by
    /// constants and the result is simplified.
    pub fn substitute(&self, value: &impl Fn(AtomRef) -> Option<bool>) -> GroundFormula {
        match self {
            G::Const(b) => G::Const(*b),
            G::Atom(r) => match value(*r) {
                Some(b) => G::Const(b),
                None => G::Atom(*r),
            },
            G::Not(a) => G::not(a.substitute(value)),
            G::And(xs) => G::and(xs.iter().map(|x| x.substitute(value))),
            G::Or(xs) => G::or(xs.iter().map(|x| x.substitute(value))),
            G::Iff(a, b) => G::iff(a.substitute(value), b.substitute(value)),
        }
    }

    pub fn collect_atoms(&self, out: &mut BTreeSet<AtomRef>) {
        match self {
            G::Const(_) => {}
            G::Atom(r) => {
                out.insert(*r);
            }
            G::Not(a) => a.collect_atoms(out),
            G::And(xs) | G::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            G::Iff(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn atoms(&self) -> BTreeSet<AtomRef> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    pub fn size(&self) -> usize {
        match self {
            G::Const(_) | G::Atom(_) => 1,
            G::Not(a) => 1 + a.size(),
            G::And(xs) | G::Or(xs) => 1 + xs.iter().map(G::size).sum::<usize>(),
            G::Iff(a, b) => 1 + a.size() + b.size(),
        }
    }

    fn as_literal(&self) -> Option<(AtomRef, bool)> {
        match self {
            G::Atom(r) => Some((*r, true)),
            G::Not(a) => match a.as_ref() {
                G::Atom(r) => Some((*r, false)),
                _ => None,
            },
            _ => None,
        }
    }

    /// Views a current-state formula as a set of clauses, when it has that
    /// shape. Tautological clauses are dropped; the result is sorted.
    pub fn as_cnf(&self) -> Option<Vec<GroundClause>> {
        let conjuncts: Vec<&GroundFormula> = match self {
            G::Const(true) => return Some(Vec::new()),
            G::And(xs) => xs.iter().collect(),
            other => vec![other],
        };
        let mut out = BTreeSet::new();
        for c in conjuncts {
            let disjuncts: Vec<&GroundFormula> = match c {
                G::Or(xs) => xs.iter().collect(),
                G::Const(false) => Vec::new(),
                other => vec![other],
            };
            let mut lits = Vec::new();
            for d in disjuncts {
                let (r, positive) = d.as_literal()?;
                if r.next {
                    return None;
                }
                lits.push(GroundLiteral { atom: r.atom, positive });
            }
            if let Ok(clause) = GroundClause::new(lits) {
                out.insert(clause);
            }
        }
        Some(out.into_iter().collect())
    }

    /// Appends SMT-LIB2 text, naming atoms through `name`.
    pub fn write_smt(&self, out: &mut String, name: &impl Fn(AtomRef) -> String) {
        match self {
            G::Const(b) => out.push_str(if *b { "true" } else { "false" }),
            G::Atom(r) => out.push_str(&name(*r)),
            G::Not(a) => {
                out.push_str("(not ");
                a.write_smt(out, name);
                out.push(')');
            }
            G::And(xs) | G::Or(xs) => {
                out.push_str(if matches!(self, G::And(_)) { "(and" } else { "(or" });
                for x in xs {
                    out.push(' ');
                    x.write_smt(out, name);
                }
                out.push(')');
            }
            G::Iff(a, b) => {
                out.push_str("(= ");
                a.write_smt(out, name);
                out.push(' ');
                b.write_smt(out, name);
                out.push(')');
            }
        }
    }

    pub fn to_smt(&self, name: &impl Fn(AtomRef) -> String) -> String {
        let mut s = String::new();
        self.write_smt(&mut s, name);
        s
    }

    /// Canonical form for structural comparison: children of commutative
    /// connectives sorted and deduplicated.
    pub fn canonical(&self) -> GroundFormula {
        match self {
            G::Not(a) => G::not(a.canonical()),
            G::And(xs) | G::Or(xs) => {
                let set: BTreeSet<GroundFormula> = xs.iter().map(G::canonical).collect();
                if matches!(self, G::And(_)) {
                    G::and(set)
                } else {
                    G::or(set)
                }
            }
            G::Iff(a, b) => {
                let (x, y) = (a.canonical(), b.canonical());
                if x <= y {
                    G::iff(x, y)
                } else {
                    G::iff(y, x)
                }
            }
            other => other.clone(),
        }
    }
}

impl std::fmt::Display for GroundFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        self.write_smt(&mut s, &|r| format!("a{}{}", r.atom, if r.next { "'" } else { "" }));
        f.write_str(&s)
    }
}
