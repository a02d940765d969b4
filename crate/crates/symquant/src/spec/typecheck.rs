use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Diagnostic {
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Primes {
    Forbidden,
    /// Only the named relation may appear primed.
    Only,
}

struct Checker<'a> {
    spec: &'a ProtocolSpec,
    out: BTreeSet<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn report(&mut self, message: String) {
        self.out.insert(Diagnostic { message });
    }

    fn term_sort(&mut self, t: &Term, env: &[Binder], ctx: &str) -> Option<Ident> {
        match t {
            Term::Var(v) => match env.iter().rev().find(|b| &b.var == v) {
                Some(b) => Some(b.sort.clone()),
                None => {
                    self.report(format!("unbound variable {v} in {ctx}"));
                    None
                }
            },
            Term::Const { sort, .. } => Some(sort.clone()),
        }
    }

    fn binders(&mut self, bs: &[Binder], ctx: &str) {
        let mut seen = BTreeSet::new();
        for b in bs {
            if !seen.insert(&b.var) {
                self.report(format!("variable {} bound twice in {ctx}", b.var));
            }
            if self.spec.sort(&b.sort).is_none() {
                self.report(format!("unknown sort {} in {ctx}", b.sort));
            }
        }
    }

    fn formula(&mut self, f: &Formula, env: &mut Vec<Binder>, primes: Primes, target: Option<&str>, ctx: &str) {
        match f {
            Formula::Bool(_) => {}
            Formula::App { rel, primed, args } => {
                let Some(decl) = self.spec.relation(rel) else {
                    self.report(format!("unknown relation {rel} in {ctx}"));
                    return;
                };
                if *primed {
                    if decl.is_definition() {
                        self.report(format!("definition {rel} cannot be primed in {ctx}"));
                    } else if primes == Primes::Forbidden {
                        self.report(format!("primed relation {rel}' outside an action update in {ctx}"));
                    } else if target != Some(rel.as_str()) {
                        self.report(format!(
                            "update of {} mentions primed relation {rel}' in {ctx}",
                            target.unwrap_or("?")
                        ));
                    }
                }
                if args.len() != decl.arg_sorts.len() {
                    self.report(format!(
                        "relation {rel} expects {} argument(s), got {} in {ctx}",
                        decl.arg_sorts.len(),
                        args.len()
                    ));
                    return;
                }
                for (i, (a, want)) in args.iter().zip(&decl.arg_sorts).enumerate() {
                    if let Some(got) = self.term_sort(a, env, ctx) {
                        if &got != want {
                            self.report(format!(
                                "argument {} of {rel} has sort {got}, expected {want} in {ctx}",
                                i + 1
                            ));
                        }
                    }
                }
            }
            Formula::Member { elem, set } => {
                let es = self.term_sort(elem, env, ctx);
                let ss = self.term_sort(set, env, ctx);
                if let (Some(es), Some(ss)) = (es, ss) {
                    match self.spec.sort(&ss).map(|s| &s.kind) {
                        Some(SortKind::Majority { base }) if base == &es => {}
                        Some(SortKind::Majority { base }) => {
                            self.report(format!("member expects an element of {base}, got {es} in {ctx}"))
                        }
                        _ => self.report(format!("member expects a dependent sort, got {ss} in {ctx}")),
                    }
                }
            }
            Formula::Eq(a, b) => {
                let sa = self.term_sort(a, env, ctx);
                let sb = self.term_sort(b, env, ctx);
                if let (Some(sa), Some(sb)) = (sa, sb) {
                    if sa != sb {
                        self.report(format!("equality between sorts {sa} and {sb} in {ctx}"));
                    }
                }
            }
            Formula::Distinct(ts) => {
                let sorts: BTreeSet<Ident> = ts.iter().filter_map(|t| self.term_sort(t, env, ctx)).collect();
                if sorts.len() > 1 {
                    self.report(format!("distinct over mixed sorts in {ctx}"));
                }
            }
            Formula::Not(a) => self.formula(a, env, primes, target, ctx),
            Formula::And(xs) | Formula::Or(xs) => {
                for x in xs {
                    self.formula(x, env, primes, target, ctx);
                }
            }
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                self.formula(a, env, primes, target, ctx);
                self.formula(b, env, primes, target, ctx);
            }
            Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
                self.binders(bs, ctx);
                let n = env.len();
                env.extend(bs.iter().cloned());
                self.formula(body, env, primes, target, ctx);
                env.truncate(n);
            }
        }
    }

    fn definition_cycles(&mut self) {
        let defs: Vec<&RelationDecl> = self.spec.definitions().collect();
        let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for d in &defs {
            let RelationRole::Definition { body, .. } = &d.role else {
                continue;
            };
            let mut uses = BTreeSet::new();
            body.walk(&mut |g| {
                if let Formula::App { rel, .. } = g {
                    if defs.iter().any(|e| &e.name == rel) {
                        uses.insert(rel.as_str());
                    }
                }
            });
            edges.insert(d.name.as_str(), uses);
        }
        // Colors: 0 unvisited, 1 on stack, 2 done.
        let mut color: BTreeMap<&str, u8> = BTreeMap::new();
        let mut cyclic: BTreeSet<&str> = BTreeSet::new();
        fn visit<'b>(
            n: &'b str,
            edges: &BTreeMap<&'b str, BTreeSet<&'b str>>,
            color: &mut BTreeMap<&'b str, u8>,
            stack: &mut Vec<&'b str>,
            cyclic: &mut BTreeSet<&'b str>,
        ) {
            color.insert(n, 1);
            stack.push(n);
            for &m in &edges[n] {
                match color.get(m).copied().unwrap_or(0) {
                    0 => visit(m, edges, color, stack, cyclic),
                    1 => {
                        let from = stack.iter().position(|&s| s == m).unwrap();
                        cyclic.extend(stack[from..].iter().copied());
                    }
                    _ => {}
                }
            }
            stack.pop();
            color.insert(n, 2);
        }
        let names: Vec<&str> = edges.keys().copied().collect();
        for n in names {
            if color.get(n).copied().unwrap_or(0) == 0 {
                visit(n, &edges, &mut color, &mut Vec::new(), &mut cyclic);
            }
        }
        for n in cyclic {
            self.report(format!("cyclic definition involving {n}"));
        }
    }
}

/// Checks well-formedness; returns diagnostics sorted and deduplicated
/// (empty iff the protocol is well formed).
pub fn typecheck(spec: &ProtocolSpec) -> Vec<Diagnostic> {
    let mut c = Checker {
        spec,
        out: BTreeSet::new(),
    };
    for s in &spec.sorts {
        if let SortKind::Majority { base } = &s.kind {
            match spec.sort(base) {
                Some(b) if b.is_independent() => {}
                Some(_) => c.report(format!("base sort {base} of {} must be independent", s.name)),
                None => c.report(format!("unknown base sort {base} of {}", s.name)),
            }
        }
    }
    for r in &spec.relations {
        for s in &r.arg_sorts {
            if spec.sort(s).is_none() {
                c.report(format!("unknown sort {s} in relation {}", r.name));
            }
        }
        if let RelationRole::Definition { params, body } = &r.role {
            let ctx = format!("definition {}", r.name);
            c.binders(params, &ctx);
            c.formula(body, &mut params.clone(), Primes::Forbidden, None, &ctx);
        }
    }
    c.definition_cycles();
    for (i, a) in spec.axioms.iter().enumerate() {
        c.formula(a, &mut Vec::new(), Primes::Forbidden, None, &format!("axiom {}", i + 1));
    }
    c.formula(&spec.init, &mut Vec::new(), Primes::Forbidden, None, "init");
    c.formula(&spec.safety, &mut Vec::new(), Primes::Forbidden, None, "safety");
    for a in &spec.actions {
        let ctx = format!("action {}", a.name);
        c.binders(&a.params, &ctx);
        c.formula(&a.guard, &mut a.params.clone(), Primes::Forbidden, None, &ctx);
        let mut seen = BTreeSet::new();
        for u in &a.updates {
            if !seen.insert(u.relation.as_str()) {
                c.report(format!("relation {} updated twice in action {}", u.relation, a.name));
            }
            match spec.relation(&u.relation) {
                Some(r) if r.is_state() => {}
                _ => c.report(format!("update target {} is not a state relation in {ctx}", u.relation)),
            }
            c.formula(&u.formula, &mut a.params.clone(), Primes::Only, Some(&u.relation), &ctx);
        }
    }
    c.out.into_iter().collect()
}
