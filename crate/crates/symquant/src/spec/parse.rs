use std::collections::{BTreeSet, HashSet};

use super::ast::*;
use super::SpecError;
use crate::sexp::{self, Pos, Sexp};

const KEYWORDS: &[&str] = &[
    "and", "or", "not", "=>", "=", "distinct", "forall", "exists", "member", "true", "false",
];

fn syntax(pos: Pos, message: impl Into<String>) -> SpecError {
    SpecError::Syntax {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn ident(x: &Sexp, what: &str) -> Result<Ident, SpecError> {
    match x.as_atom() {
        Some(s) if is_ident(s) && !KEYWORDS.contains(&s) => Ok(s.to_string()),
        Some(s) => Err(syntax(x.pos(), format!("invalid {what} name `{s}`"))),
        None => Err(syntax(x.pos(), format!("expected {what} name"))),
    }
}

fn list<'a>(x: &'a Sexp, what: &str) -> Result<&'a [Sexp], SpecError> {
    x.as_list().ok_or_else(|| syntax(x.pos(), format!("expected {what}")))
}

/// Names known while parsing formulas.
pub(crate) struct Scope {
    pub sorts: HashSet<Ident>,
    pub relations: HashSet<Ident>,
    pub nullary: HashSet<Ident>,
}

impl Scope {
    pub(crate) fn of_spec(spec: &ProtocolSpec) -> Self {
        Scope {
            sorts: spec.sorts.iter().map(|s| s.name.clone()).collect(),
            relations: spec
                .relations
                .iter()
                .filter(|r| !matches!(r.role, RelationRole::Membership { .. }))
                .map(|r| r.name.clone())
                .collect(),
            nullary: spec
                .relations
                .iter()
                .filter(|r| r.arg_sorts.is_empty())
                .map(|r| r.name.clone())
                .collect(),
        }
    }

    fn sort(&self, x: &Sexp, context: &str) -> Result<Ident, SpecError> {
        let name = ident(x, "sort")?;
        if self.sorts.contains(&name) {
            Ok(name)
        } else {
            Err(SpecError::Unknown {
                kind: "sort",
                name,
                context: context.to_string(),
            })
        }
    }

    fn binders(&self, x: &Sexp, context: &str) -> Result<Vec<Binder>, SpecError> {
        list(x, "binder list")?
            .iter()
            .map(|b| {
                let parts = list(b, "binder `(var sort)`")?;
                if parts.len() != 2 {
                    return Err(syntax(b.pos(), "binder must be `(var sort)`"));
                }
                Ok(Binder {
                    var: ident(&parts[0], "variable")?,
                    sort: self.sort(&parts[1], context)?,
                })
            })
            .collect()
    }

    fn term(&self, x: &Sexp) -> Result<Term, SpecError> {
        match x {
            Sexp::Atom(s, p) => match s.split_once('#') {
                // Concrete instance constant, as printed for size-specific predicates.
                Some((sort, idx)) => {
                    let index: usize = idx
                        .parse()
                        .ok()
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| syntax(*p, format!("invalid constant `{s}`")))?;
                    if !self.sorts.contains(sort) {
                        return Err(SpecError::Unknown {
                            kind: "sort",
                            name: sort.to_string(),
                            context: format!("constant {s}"),
                        });
                    }
                    Ok(Term::Const {
                        sort: sort.to_string(),
                        index: index - 1,
                    })
                }
                None => Ok(Term::Var(ident(x, "variable")?)),
            },
            Sexp::List(_, p) => Err(syntax(*p, "expected a variable, found a list")),
        }
    }

    fn is_term_atom(&self, x: &Sexp) -> bool {
        match x.as_atom() {
            Some(s) => s != "true" && s != "false" && !self.nullary.contains(s.trim_end_matches('\'')),
            None => false,
        }
    }

    fn relation_name(&self, raw: &str, pos: Pos, context: &str) -> Result<(Ident, bool), SpecError> {
        let (name, primed) = match raw.strip_suffix('\'') {
            Some(n) => (n, true),
            None => (raw, false),
        };
        if !is_ident(name) {
            return Err(syntax(pos, format!("invalid relation name `{raw}`")));
        }
        if !self.relations.contains(name) {
            return Err(SpecError::Unknown {
                kind: "relation",
                name: name.to_string(),
                context: context.to_string(),
            });
        }
        Ok((name.to_string(), primed))
    }

    pub(crate) fn formula(&self, x: &Sexp, context: &str) -> Result<Formula, SpecError> {
        let items = match x {
            Sexp::Atom(s, p) => {
                return match s.as_str() {
                    "true" => Ok(Formula::Bool(true)),
                    "false" => Ok(Formula::Bool(false)),
                    _ if self.nullary.contains(s.trim_end_matches('\'')) => {
                        let (rel, primed) = self.relation_name(s, *p, context)?;
                        Ok(Formula::App {
                            rel,
                            primed,
                            args: vec![],
                        })
                    }
                    _ => Err(syntax(*p, format!("expected a formula, found `{s}`"))),
                }
            }
            Sexp::List(items, _) => items,
        };
        let Some(head) = items.first() else {
            return Err(syntax(x.pos(), "empty formula"));
        };
        let Some(op) = head.as_atom() else {
            return Err(syntax(head.pos(), "formula head must be an operator or relation"));
        };
        let args = &items[1..];
        let arity = |n: usize| -> Result<(), SpecError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    x.pos(),
                    format!("`{op}` expects {n} argument(s), got {}", args.len()),
                ))
            }
        };
        let sub = |a: &Sexp| self.formula(a, context);
        match op {
            "and" => Ok(Formula::And(args.iter().map(sub).collect::<Result<_, _>>()?)),
            "or" => Ok(Formula::Or(args.iter().map(sub).collect::<Result<_, _>>()?)),
            "not" => {
                arity(1)?;
                Ok(Formula::not(sub(&args[0])?))
            }
            "=>" => {
                arity(2)?;
                Ok(Formula::implies(sub(&args[0])?, sub(&args[1])?))
            }
            "=" => {
                arity(2)?;
                match (self.is_term_atom(&args[0]), self.is_term_atom(&args[1])) {
                    (true, true) => Ok(Formula::Eq(self.term(&args[0])?, self.term(&args[1])?)),
                    (false, false) => Ok(Formula::Iff(Box::new(sub(&args[0])?), Box::new(sub(&args[1])?))),
                    _ => Err(syntax(x.pos(), "`=` mixes a term with a formula")),
                }
            }
            "distinct" => {
                if args.len() < 2 {
                    return Err(syntax(x.pos(), "`distinct` expects at least 2 terms"));
                }
                Ok(Formula::Distinct(
                    args.iter().map(|a| self.term(a)).collect::<Result<_, _>>()?,
                ))
            }
            "member" => {
                arity(2)?;
                Ok(Formula::Member {
                    elem: self.term(&args[0])?,
                    set: self.term(&args[1])?,
                })
            }
            "forall" | "exists" => {
                arity(2)?;
                let binders = self.binders(&args[0], context)?;
                if binders.is_empty() {
                    return Err(syntax(args[0].pos(), "empty binder list"));
                }
                let body = Box::new(sub(&args[1])?);
                Ok(if op == "forall" {
                    Formula::Forall(binders, body)
                } else {
                    Formula::Exists(binders, body)
                })
            }
            "true" | "false" => Err(syntax(head.pos(), format!("`{op}` is not applicable"))),
            _ => {
                let (rel, primed) = self.relation_name(op, head.pos(), context)?;
                Ok(Formula::App {
                    rel,
                    primed,
                    args: args.iter().map(|a| self.term(a)).collect::<Result<_, _>>()?,
                })
            }
        }
    }
}

struct PendingDefinition<'a> {
    name: Ident,
    params: &'a Sexp,
    body: &'a Sexp,
    index: usize,
}

struct PendingAction<'a> {
    name: Ident,
    params: &'a Sexp,
    guard: Option<&'a Sexp>,
    updates: Option<&'a Sexp>,
}

pub fn parse_spec(text: &str) -> Result<ProtocolSpec, SpecError> {
    let forms = sexp::parse_all(text).map_err(|e| syntax(e.pos, e.message))?;

    let mut sorts: Vec<SortDecl> = Vec::new();
    let mut raw_relations: Vec<(Ident, &Sexp)> = Vec::new();
    let mut defs: Vec<PendingDefinition> = Vec::new();
    let mut axioms: Vec<&Sexp> = Vec::new();
    let mut init: Option<&Sexp> = None;
    let mut safety: Option<&Sexp> = None;
    let mut actions: Vec<PendingAction> = Vec::new();
    let mut rel_names: BTreeSet<Ident> = BTreeSet::new();
    // Index into the final relation list, in source order.
    let mut rel_order: Vec<Result<usize, usize>> = Vec::new();

    for form in &forms {
        let items = list(form, "a top-level declaration")?;
        let head = items
            .first()
            .and_then(Sexp::as_atom)
            .ok_or_else(|| syntax(form.pos(), "declaration must start with a keyword"))?;
        let args = &items[1..];
        let want = |n: usize| -> Result<(), SpecError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(form.pos(), format!("`{head}` expects {n} argument(s)")))
            }
        };
        match head {
            "sort" => {
                want(1)?;
                let name = ident(&args[0], "sort")?;
                if sorts.iter().any(|s| s.name == name) {
                    return Err(SpecError::Duplicate { kind: "sort", name });
                }
                sorts.push(SortDecl {
                    name,
                    kind: SortKind::Independent,
                });
            }
            "dependent-sort" => {
                want(2)?;
                let name = ident(&args[0], "sort")?;
                if sorts.iter().any(|s| s.name == name) {
                    return Err(SpecError::Duplicate { kind: "sort", name });
                }
                let ctor = list(&args[1], "`(majority <base>)`")?;
                if ctor.len() != 2 || ctor[0].as_atom() != Some("majority") {
                    return Err(syntax(args[1].pos(), "only `(majority <base>)` is supported"));
                }
                sorts.push(SortDecl {
                    name,
                    kind: SortKind::Majority {
                        base: ident(&ctor[1], "sort")?,
                    },
                });
            }
            "relation" => {
                want(2)?;
                let name = ident(&args[0], "relation")?;
                if name == MEMBER || !rel_names.insert(name.clone()) {
                    return Err(SpecError::Duplicate { kind: "relation", name });
                }
                rel_order.push(Ok(raw_relations.len()));
                raw_relations.push((name, &args[1]));
            }
            "definition" => {
                want(2)?;
                let sig = list(&args[0], "`(<name> (<var> <sort>)...)`")?;
                let name = ident(
                    sig.first()
                        .ok_or_else(|| syntax(args[0].pos(), "definition needs a name"))?,
                    "definition",
                )?;
                if name == MEMBER || !rel_names.insert(name.clone()) {
                    return Err(SpecError::Duplicate { kind: "relation", name });
                }
                rel_order.push(Err(defs.len()));
                defs.push(PendingDefinition {
                    name,
                    params: &args[0],
                    body: &args[1],
                    index: defs.len(),
                });
            }
            "axiom" => {
                want(1)?;
                axioms.push(&args[0]);
            }
            "init" => {
                want(1)?;
                if init.replace(&args[0]).is_some() {
                    return Err(SpecError::Duplicate {
                        kind: "init",
                        name: "init".into(),
                    });
                }
            }
            "safety" => {
                want(1)?;
                if safety.replace(&args[0]).is_some() {
                    return Err(SpecError::Duplicate {
                        kind: "safety",
                        name: "safety".into(),
                    });
                }
            }
            "action" => {
                if args.len() < 2 {
                    return Err(syntax(form.pos(), "`action` expects a name and parameters"));
                }
                let name = ident(&args[0], "action")?;
                if actions.iter().any(|a| a.name == name) {
                    return Err(SpecError::Duplicate { kind: "action", name });
                }
                let mut guard = None;
                let mut updates = None;
                let mut rest = args[2..].iter();
                while let Some(key) = rest.next() {
                    let value = rest
                        .next()
                        .ok_or_else(|| syntax(key.pos(), "keyword without a value"))?;
                    let slot = match key.as_atom() {
                        Some(":guard") => &mut guard,
                        Some(":update") => &mut updates,
                        _ => return Err(syntax(key.pos(), "expected `:guard` or `:update`")),
                    };
                    if slot.replace(value).is_some() {
                        return Err(syntax(key.pos(), "keyword given twice"));
                    }
                }
                actions.push(PendingAction {
                    name,
                    params: &args[1],
                    guard,
                    updates,
                });
            }
            other => return Err(syntax(form.pos(), format!("unknown declaration `{other}`"))),
        }
    }

    let Some(safety) = safety else {
        return Err(SpecError::NoSafety);
    };
    let Some(init) = init else {
        return Err(SpecError::NoInit);
    };

    for s in &sorts {
        if let SortKind::Majority { base } = &s.kind {
            if !sorts.iter().any(|b| &b.name == base) {
                return Err(SpecError::Unknown {
                    kind: "sort",
                    name: base.clone(),
                    context: format!("dependent sort {}", s.name),
                });
            }
        }
    }

    let mut scope = Scope {
        sorts: sorts.iter().map(|s| s.name.clone()).collect(),
        relations: rel_names.iter().cloned().collect(),
        nullary: HashSet::new(),
    };

    let mut state_rels = Vec::new();
    for (name, sorts_x) in &raw_relations {
        let context = format!("relation {name}");
        let arg_sorts = list(sorts_x, "argument sort list")?
            .iter()
            .map(|s| scope.sort(s, &context))
            .collect::<Result<Vec<_>, _>>()?;
        if arg_sorts.is_empty() {
            scope.nullary.insert(name.clone());
        }
        state_rels.push(RelationDecl {
            name: name.clone(),
            arg_sorts,
            role: RelationRole::State,
        });
    }
    let mut def_params = Vec::new();
    for d in &defs {
        let context = format!("definition {}", d.name);
        let sig = list(d.params, "definition signature")?;
        let params = sig[1..]
            .iter()
            .map(|b| {
                let parts = list(b, "parameter `(var sort)`")?;
                if parts.len() != 2 {
                    return Err(syntax(b.pos(), "parameter must be `(var sort)`"));
                }
                Ok(Binder {
                    var: ident(&parts[0], "variable")?,
                    sort: scope.sort(&parts[1], &context)?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if params.is_empty() {
            scope.nullary.insert(d.name.clone());
        }
        def_params.push(params);
    }

    let mut def_decls = Vec::new();
    for d in &defs {
        let params = def_params[d.index].clone();
        let body = scope.formula(d.body, &format!("definition {}", d.name))?;
        def_decls.push(RelationDecl {
            name: d.name.clone(),
            arg_sorts: params.iter().map(|b| b.sort.clone()).collect(),
            role: RelationRole::Definition { params, body },
        });
    }

    let mut relations: Vec<RelationDecl> = rel_order
        .iter()
        .map(|slot| match slot {
            Ok(i) => state_rels[*i].clone(),
            Err(i) => def_decls[*i].clone(),
        })
        .collect();
    for s in &sorts {
        if let SortKind::Majority { base } = &s.kind {
            relations.push(RelationDecl {
                name: MEMBER.into(),
                arg_sorts: vec![base.clone(), s.name.clone()],
                role: RelationRole::Membership {
                    dependent: s.name.clone(),
                },
            });
        }
    }

    let axioms = axioms
        .iter()
        .enumerate()
        .map(|(i, a)| scope.formula(a, &format!("axiom {}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let init = scope.formula(init, "init")?;
    let safety = scope.formula(safety, "safety")?;

    let mut action_decls = Vec::new();
    for a in &actions {
        let context = format!("action {}", a.name);
        let params = scope.binders(a.params, &context)?;
        let guard = match a.guard {
            Some(g) => scope.formula(g, &context)?,
            None => Formula::Bool(true),
        };
        let mut updates = Vec::new();
        if let Some(u) = a.updates {
            for entry in list(u, "update list")? {
                let parts = list(entry, "update `(<relation> <formula>)`")?;
                if parts.len() != 2 {
                    return Err(syntax(entry.pos(), "update must be `(<relation> <formula>)`"));
                }
                let (relation, primed) =
                    scope.relation_name(parts[0].as_atom().unwrap_or(""), parts[0].pos(), &context)?;
                if primed {
                    return Err(syntax(parts[0].pos(), "update target must be unprimed"));
                }
                updates.push(Update {
                    relation,
                    formula: scope.formula(&parts[1], &context)?,
                });
            }
        }
        action_decls.push(ActionDecl {
            name: a.name.clone(),
            params,
            guard,
            updates,
        });
    }

    Ok(ProtocolSpec {
        sorts,
        relations,
        axioms,
        init,
        actions: action_decls,
        safety,
    })
}

/// Parses a standalone formula in the vocabulary of `spec`.
pub fn parse_formula(spec: &ProtocolSpec, text: &str) -> Result<Formula, SpecError> {
    let forms = sexp::parse_all(text).map_err(|e| syntax(e.pos, e.message))?;
    match forms.as_slice() {
        [one] => Scope::of_spec(spec).formula(one, "formula"),
        _ => Err(syntax(Pos { line: 1, col: 1 }, "expected exactly one formula")),
    }
}

/// Parses a certificate: `(invariant f)` and `(safety f)` forms over `spec`.
/// Returns the invariant formulas followed by the safety formula if present.
pub fn parse_certificate(spec: &ProtocolSpec, text: &str) -> Result<Vec<Formula>, SpecError> {
    let forms = sexp::parse_all(text).map_err(|e| syntax(e.pos, e.message))?;
    let scope = Scope::of_spec(spec);
    let mut out = Vec::new();
    for form in &forms {
        let items = list(form, "certificate entry")?;
        match (items.first().and_then(Sexp::as_atom), items.len()) {
            (Some("invariant" | "safety"), 2) => out.push(scope.formula(&items[1], "certificate")?),
            _ => return Err(syntax(form.pos(), "expected `(invariant f)` or `(safety f)`")),
        }
    }
    Ok(out)
}
