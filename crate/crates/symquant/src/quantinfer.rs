//! Quantifier inference: turns the logical orbit of a ground clause into a
//! compact quantified predicate, plus two optional strengthenings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;

use crate::ground::{FiniteInstance, Frame, GroundClause, GroundError, GroundFormula};
use crate::spec::{Binder, Formula, Ident, ProtocolSpec, RelationRole, SortKind, Term};
use crate::symmetry::{orbit_closure, partition, Partition, SymmetryGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantifierBlock {
    pub quantifier: Quantifier,
    pub vars: Vec<Binder>,
    /// Groups of variables required to be pairwise distinct.
    pub distinct: Vec<Vec<Ident>>,
}

/// `Q1 x1 ... Qk xk. (distinct-groups ∧ guard) → body`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantifiedPredicate {
    pub prefix: Vec<QuantifierBlock>,
    /// Membership constraints between universally quantified variables.
    pub guard: Vec<Formula>,
    pub body: Formula,
    /// Sorts whose variable count depends on the instance size.
    pub fallback_sorts: BTreeSet<Ident>,
    /// The predicate is the literal conjunction of the orbit clauses.
    pub explicit: bool,
}

impl QuantifiedPredicate {
    /// A closed formula taken as is (for example the safety property).
    pub fn from_formula(body: Formula) -> Self {
        QuantifiedPredicate {
            prefix: Vec::new(),
            guard: Vec::new(),
            body,
            fallback_sorts: BTreeSet::new(),
            explicit: false,
        }
    }

    pub fn antecedent(&self) -> Vec<Formula> {
        let mut out: Vec<Formula> = self
            .prefix
            .iter()
            .flat_map(|b| b.distinct.iter())
            .map(|g| Formula::Distinct(g.iter().map(Term::var).collect()))
            .collect();
        out.extend(self.guard.iter().cloned());
        out
    }

    pub fn matrix(&self) -> Formula {
        let ante = self.antecedent();
        if ante.is_empty() {
            self.body.clone()
        } else {
            Formula::implies(Formula::and_of(ante), self.body.clone())
        }
    }

    pub fn to_formula(&self) -> Formula {
        let mut f = self.matrix();
        for block in self.prefix.iter().rev() {
            f = match block.quantifier {
                Quantifier::Forall => Formula::forall(block.vars.clone(), f),
                Quantifier::Exists => Formula::exists(block.vars.clone(), f),
            };
        }
        f
    }

    pub fn is_compact(&self) -> bool {
        self.fallback_sorts.is_empty() && !self.explicit
    }

    pub fn var_count(&self, sort: &str) -> usize {
        self.prefix
            .iter()
            .flat_map(|b| &b.vars)
            .filter(|v| v.sort == sort)
            .count()
    }

    pub fn has_distinct(&self) -> bool {
        self.prefix.iter().any(|b| !b.distinct.is_empty())
    }

    /// Whether some universal block precedes an existential one.
    pub fn has_forall_exists(&self) -> bool {
        let first_forall = self.prefix.iter().position(|b| b.quantifier == Quantifier::Forall);
        let last_exists = self.prefix.iter().rposition(|b| b.quantifier == Quantifier::Exists);
        matches!((first_forall, last_exists), (Some(f), Some(e)) if f < e)
    }
}

impl fmt::Display for QuantifiedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

/// Ground expansion of a predicate at an instance.
pub fn expand(phi: &QuantifiedPredicate, inst: &FiniteInstance) -> Result<GroundFormula, GroundError> {
    inst.ground_formula(&phi.to_formula(), Frame::Current)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error("precondition of {case} violated for sort {sort}: {detail}")]
    Precondition {
        case: &'static str,
        sort: String,
        detail: String,
    },
    #[error("partition of sort {sort} does not match the {case} shape")]
    ShapeMismatch { case: &'static str, sort: String },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Arg {
    Const(usize, usize),
    Var(Ident),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Lit {
        pred: usize,
        positive: bool,
        args: Vec<Arg>,
    },
    /// `∃ var. (∧ var ≠ u for u in distinct_from) ∧ (∨ items)`, with the
    /// quantifier pulled to the prefix when rendered.
    Group {
        var: Ident,
        distinct_from: Vec<Ident>,
        items: Vec<Item>,
    },
}

impl Item {
    fn mentions(&self, sort: usize, consts: &BTreeSet<usize>) -> bool {
        match self {
            Item::Lit { args, .. } => args
                .iter()
                .any(|a| matches!(a, Arg::Const(s, c) if *s == sort && consts.contains(c))),
            Item::Group { items, .. } => items.iter().any(|i| i.mentions(sort, consts)),
        }
    }

    fn substitute(&mut self, sort: usize, c: usize, var: &str) {
        match self {
            Item::Lit { args, .. } => {
                for a in args {
                    if *a == Arg::Const(sort, c) {
                        *a = Arg::Var(var.to_string());
                    }
                }
            }
            Item::Group { items, .. } => {
                for i in items.iter_mut() {
                    i.substitute(sort, c, var);
                }
                items.sort();
            }
        }
    }

    fn to_formula(&self, inst: &FiniteInstance) -> Formula {
        match self {
            Item::Lit { pred, positive, args } => {
                let p = &inst.vocab.preds[*pred];
                let args = args
                    .iter()
                    .map(|a| match a {
                        Arg::Var(v) => Term::Var(v.clone()),
                        Arg::Const(s, c) => Term::Const {
                            sort: inst.vocab.sorts[*s].name.clone(),
                            index: *c,
                        },
                    })
                    .collect();
                let app = Formula::app(p.name.clone(), args);
                if *positive {
                    app
                } else {
                    Formula::not(app)
                }
            }
            Item::Group {
                var,
                distinct_from,
                items,
            } => {
                let disj = Formula::or_of(items.iter().map(|i| i.to_formula(inst)).collect());
                if distinct_from.is_empty() {
                    disj
                } else {
                    let mut parts: Vec<Formula> = distinct_from
                        .iter()
                        .map(|u| Formula::Distinct(vec![Term::var(u.clone()), Term::var(var.clone())]))
                        .collect();
                    parts.push(disj);
                    Formula::And(parts)
                }
            }
        }
    }
}

fn flatten_or(f: Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::Or(xs) => xs.into_iter().for_each(|x| flatten_or(x, out)),
        other => out.push(other),
    }
}

/// Intermediate state of inference over one clause.
#[derive(Clone, Debug)]
pub struct Draft<'a> {
    inst: &'a FiniteInstance,
    items: Vec<Item>,
    /// (variable, sort, original constant)
    universals: Vec<(Ident, usize, usize)>,
    distinct: Vec<Vec<Ident>>,
    existentials: Vec<(Ident, usize)>,
    fallback: BTreeSet<usize>,
    prefixes: Vec<String>,
    counters: Vec<usize>,
}

/// Per-sort variable name prefixes: the upper-cased initial, or the
/// capitalized sort name when initials collide.
fn var_prefixes(inst: &FiniteInstance) -> Vec<String> {
    let initials: Vec<String> = inst
        .vocab
        .sorts
        .iter()
        .map(|s| s.name.chars().next().unwrap().to_ascii_uppercase().to_string())
        .collect();
    inst.vocab
        .sorts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if initials.iter().filter(|x| **x == initials[i]).count() == 1 {
                initials[i].clone()
            } else {
                let mut cs = s.name.chars();
                let first = cs.next().unwrap().to_ascii_uppercase();
                std::iter::once(first).chain(cs).collect()
            }
        })
        .collect()
}

impl<'a> Draft<'a> {
    pub fn new(inst: &'a FiniteInstance, clause: &GroundClause) -> Self {
        let mut items: Vec<Item> = clause
            .literals()
            .iter()
            .map(|l| {
                let info = &inst.vocab.atoms[l.atom as usize];
                let sorts = &inst.vocab.preds[info.pred].arg_sorts;
                Item::Lit {
                    pred: info.pred,
                    positive: l.positive,
                    args: info.args.iter().zip(sorts).map(|(c, s)| Arg::Const(*s, *c)).collect(),
                }
            })
            .collect();
        items.sort();
        Draft {
            inst,
            items,
            universals: Vec::new(),
            distinct: Vec::new(),
            existentials: Vec::new(),
            fallback: BTreeSet::new(),
            prefixes: var_prefixes(inst),
            counters: vec![0; inst.vocab.sorts.len()],
        }
    }

    fn fresh(&mut self, sort: usize) -> Ident {
        self.counters[sort] += 1;
        format!("{}{}", self.prefixes[sort], self.counters[sort])
    }

    fn sort_name(&self, sort: usize) -> String {
        self.inst.vocab.sorts[sort].name.clone()
    }

    fn substitute(&mut self, sort: usize, c: usize, var: &str) {
        for i in self.items.iter_mut() {
            i.substitute(sort, c, var);
        }
        self.items.sort();
    }

    fn universalize(&mut self, sort: usize, consts: &[usize]) {
        let mut group = Vec::new();
        for &c in consts {
            let v = self.fresh(sort);
            self.substitute(sort, c, &v);
            self.universals.push((v.clone(), sort, c));
            group.push(v);
        }
        if group.len() > 1 {
            self.distinct.push(group);
        }
    }

    /// Replaces the literals over `cell` by one existential group over a
    /// fresh variable, if they are copies of one template.
    fn collapse(
        &mut self,
        sort: usize,
        cell: &[usize],
        distinct_from: Vec<Ident>,
        case: &'static str,
    ) -> Result<(), InferError> {
        let var = format!("{}{}", self.prefixes[sort], self.counters[sort] + 1);
        let consts: BTreeSet<usize> = cell.iter().copied().collect();
        let sort_name = self.sort_name(sort);
        let group = collapse_in(&mut self.items, sort, &consts, &var, &distinct_from)
            .ok_or(InferError::ShapeMismatch { case, sort: sort_name })?;
        debug_assert!(group);
        self.counters[sort] += 1;
        self.existentials.push((var, sort));
        Ok(())
    }

    pub fn finish(self) -> QuantifiedPredicate {
        let inst = self.inst;
        let sorts = &inst.vocab.sorts;
        let mut prefix = Vec::new();
        if !self.universals.is_empty() {
            prefix.push(QuantifierBlock {
                quantifier: Quantifier::Forall,
                vars: self
                    .universals
                    .iter()
                    .map(|(v, s, _)| Binder::new(v.clone(), sorts[*s].name.clone()))
                    .collect(),
                distinct: self.distinct.clone(),
            });
        }
        if !self.existentials.is_empty() {
            prefix.push(QuantifierBlock {
                quantifier: Quantifier::Exists,
                vars: self
                    .existentials
                    .iter()
                    .map(|(v, s)| Binder::new(v.clone(), sorts[*s].name.clone()))
                    .collect(),
                distinct: Vec::new(),
            });
        }
        // Membership between universal dependent and universal base variables.
        let mut guard = Vec::new();
        for (q, qs, qc) in &self.universals {
            let Some(base) = sorts[*qs].base else { continue };
            for (n, ns, nc) in &self.universals {
                if *ns != base {
                    continue;
                }
                let m = Formula::Member {
                    elem: Term::var(n.clone()),
                    set: Term::var(q.clone()),
                };
                if sorts[*qs].constants[*qc].members.contains(nc) {
                    guard.push(m);
                } else {
                    guard.push(Formula::not(m));
                }
            }
        }
        let mut disjuncts = Vec::new();
        for i in &self.items {
            flatten_or(i.to_formula(inst), &mut disjuncts);
        }
        QuantifiedPredicate {
            prefix,
            guard,
            body: Formula::or_of(disjuncts),
            fallback_sorts: self.fallback.iter().map(|s| sorts[*s].name.clone()).collect(),
            explicit: false,
        }
    }
}

/// Returns Some(true) when a group was created.
fn collapse_in(
    items: &mut Vec<Item>,
    sort: usize,
    consts: &BTreeSet<usize>,
    var: &str,
    distinct_from: &[Ident],
) -> Option<bool> {
    let touched: Vec<usize> = (0..items.len()).filter(|&i| items[i].mentions(sort, consts)).collect();
    if touched.is_empty() {
        return None;
    }
    if touched.len() == 1 {
        if let Item::Group { items: inner, .. } = &mut items[touched[0]] {
            let r = collapse_in(inner, sort, consts, var, distinct_from);
            inner.sort();
            items.sort();
            return r;
        }
    }
    let mut templates: BTreeMap<usize, BTreeSet<Item>> = BTreeMap::new();
    for &i in &touched {
        let Item::Lit { args, .. } = &items[i] else {
            return None;
        };
        let cs: BTreeSet<usize> = args
            .iter()
            .filter_map(|a| match a {
                Arg::Const(s, c) if *s == sort && consts.contains(c) => Some(*c),
                _ => None,
            })
            .collect();
        if cs.len() != 1 {
            return None;
        }
        let c = *cs.iter().next().unwrap();
        let mut t = items[i].clone();
        t.substitute(sort, c, var);
        templates.entry(c).or_default().insert(t);
    }
    if templates.len() != consts.len() {
        return None;
    }
    let first = templates.values().next().unwrap().clone();
    if templates.values().any(|t| *t != first) {
        return None;
    }
    let mut rest: Vec<Item> = (0..items.len())
        .filter(|i| !touched.contains(i))
        .map(|i| items[i].clone())
        .collect();
    rest.push(Item::Group {
        var: var.to_string(),
        distinct_from: distinct_from.to_vec(),
        items: first.into_iter().collect(),
    });
    rest.sort();
    *items = rest;
    Some(true)
}

/// Case A: some constants of the sort are absent from the clause.
pub fn infer_forall(draft: &mut Draft, sort: usize, part: &Partition) -> Result<(), InferError> {
    let size = draft.inst.vocab.sorts[sort].size();
    if part.count == 0 || part.count >= size {
        return Err(InferError::Precondition {
            case: "forall",
            sort: draft.sort_name(sort),
            detail: format!("{} of {} constants occur", part.count, size),
        });
    }
    let consts: Vec<usize> = part
        .cells
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    draft.universalize(sort, &consts);
    Ok(())
}

/// Case B.I: every constant occurs, all identically.
pub fn infer_exists(draft: &mut Draft, sort: usize, part: &Partition) -> Result<(), InferError> {
    let size = draft.inst.vocab.sorts[sort].size();
    if part.count != size || !part.is_unit() {
        return Err(InferError::Precondition {
            case: "exists",
            sort: draft.sort_name(sort),
            detail: format!("needs all {size} constants in one cell"),
        });
    }
    draft.collapse(sort, &part.cells[0], Vec::new(), "exists")
}

/// Case B.II: every constant occurs; a few are singled out, the rest are
/// identically present.
pub fn infer_forall_exists(draft: &mut Draft, sort: usize, part: &Partition) -> Result<(), InferError> {
    let size = draft.inst.vocab.sorts[sort].size();
    if part.count != size {
        return Err(InferError::Precondition {
            case: "forall-exists",
            sort: draft.sort_name(sort),
            detail: format!("needs all {size} constants to occur"),
        });
    }
    let big: Vec<&Vec<usize>> = part.cells.iter().filter(|c| c.len() > 1).collect();
    let singles: Vec<usize> = part.cells.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
    if big.len() != 1 || singles.is_empty() {
        return Err(InferError::ShapeMismatch {
            case: "forall-exists",
            sort: draft.sort_name(sort),
        });
    }
    let big = big[0].clone();
    let mut trial = draft.clone();
    trial.universalize(sort, &singles);
    let ys: Vec<Ident> = trial.universals[trial.universals.len() - singles.len()..]
        .iter()
        .map(|u| u.0.clone())
        .collect();
    trial.collapse(sort, &big, ys, "forall-exists")?;
    *draft = trial;
    Ok(())
}

/// Fallback: a universal variable per occurring constant.
fn default_forall(draft: &mut Draft, sort: usize, part: &Partition) {
    let consts: Vec<usize> = part
        .cells
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if part.count >= draft.inst.vocab.sorts[sort].size() {
        draft.fallback.insert(sort);
    }
    draft.universalize(sort, &consts);
}

fn orbit_set(inst: &FiniteInstance, clause: &GroundClause) -> BTreeSet<GroundClause> {
    orbit_closure(clause, &SymmetryGroup::new(&inst.vocab))
}

/// Whether the predicate's expansion is exactly the given clause set.
fn expands_to(phi: &QuantifiedPredicate, inst: &FiniteInstance, orbit: &BTreeSet<GroundClause>) -> bool {
    match expand(phi, inst).ok().and_then(|g| g.as_cnf()) {
        Some(cnf) => cnf.into_iter().collect::<BTreeSet<_>>() == *orbit,
        None => false,
    }
}

/// The orbit clauses written out with constants.
pub fn explicit_predicate(inst: &FiniteInstance, clause: &GroundClause) -> QuantifiedPredicate {
    let orbit = orbit_set(inst, clause);
    let mut fallback = BTreeSet::new();
    let clauses: Vec<Formula> = orbit
        .iter()
        .map(|c| {
            let mut d = Draft::new(inst, c);
            d.items.sort();
            for s in 0..inst.vocab.sorts.len() {
                if !crate::symmetry::occurring_constants(&inst.vocab, c, s).is_empty() {
                    fallback.insert(inst.vocab.sorts[s].name.clone());
                }
            }
            d.finish().body
        })
        .collect();
    QuantifiedPredicate {
        prefix: Vec::new(),
        guard: Vec::new(),
        body: Formula::and_of(clauses),
        fallback_sorts: fallback,
        explicit: true,
    }
}

/// Infers a quantified predicate whose expansion at `inst` is the
/// conjunction of the logical orbit of `clause`.
pub fn sym_boost(clause: &GroundClause, inst: &FiniteInstance) -> QuantifiedPredicate {
    let vocab = &inst.vocab;
    let mut draft = Draft::new(inst, clause);
    for s in 0..vocab.sorts.len() {
        let part = partition(vocab, clause, s);
        if part.count == 0 {
            continue;
        }
        let size = vocab.sorts[s].size();
        let r = if part.count < size {
            infer_forall(&mut draft, s, &part)
        } else if part.is_unit() {
            infer_exists(&mut draft, s, &part)
        } else {
            infer_forall_exists(&mut draft, s, &part)
        };
        if let Err(e) = r {
            warn!(
                "no inference case applies to sort {} in {}: {e}; using plain forall",
                vocab.sorts[s].name,
                inst.clause_name(clause)
            );
            default_forall(&mut draft, s, &part);
        }
    }
    let candidate = draft.finish();
    let orbit = orbit_set(inst, clause);
    if expands_to(&candidate, inst, &orbit) {
        return candidate;
    }
    warn!(
        "inferred predicate {candidate} does not match the orbit of {}; retrying with plain forall",
        inst.clause_name(clause)
    );
    let mut draft = Draft::new(inst, clause);
    for s in 0..vocab.sorts.len() {
        let part = partition(vocab, clause, s);
        if part.count > 0 {
            default_forall(&mut draft, s, &part);
        }
    }
    let candidate = draft.finish();
    if expands_to(&candidate, inst, &orbit) {
        return candidate;
    }
    warn!("falling back to the explicit orbit of {}", inst.clause_name(clause));
    explicit_predicate(inst, clause)
}

/// Answers whether a candidate lemma may be learned in place of the one
/// just inferred: it must hold initially and be inductive relative to the
/// previous frame.
pub trait FrameOracle {
    type Error;
    fn admits(&mut self, candidate: &QuantifiedPredicate) -> Result<bool, Self::Error>;
}

/// Drops the distinctness antecedent when the stronger predicate is still
/// admitted by the oracle.
pub fn antecedent_reduction<O: FrameOracle>(
    phi: &QuantifiedPredicate,
    oracle: &mut O,
) -> Result<QuantifiedPredicate, O::Error> {
    if !phi.has_distinct() {
        return Ok(phi.clone());
    }
    let mut candidate = phi.clone();
    for b in candidate.prefix.iter_mut() {
        b.distinct.clear();
    }
    Ok(if oracle.admits(&candidate)? {
        candidate
    } else {
        phi.clone()
    })
}

/// Sort-level quantifier alternation graph: an edge s → t for every
/// existential over t in the scope of a universal over s.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlternationGraph {
    pub edges: BTreeSet<(Ident, Ident)>,
}

impl AlternationGraph {
    /// Edges of the protocol's own formulas, with definitions inlined, plus the
    /// intersection axiom of each majority sort.
    pub fn for_spec(spec: &ProtocolSpec) -> Self {
        let mut g = AlternationGraph::default();
        for s in &spec.sorts {
            if let SortKind::Majority { base } = &s.kind {
                g.edges.insert((s.name.clone(), base.clone()));
            }
        }
        for a in &spec.axioms {
            g.add(spec, a);
        }
        g.add(spec, &spec.init);
        g.add(spec, &spec.safety);
        for a in &spec.actions {
            g.add(spec, &a.guard);
            for u in &a.updates {
                g.add(spec, &u.formula);
            }
        }
        g
    }

    pub fn add(&mut self, spec: &ProtocolSpec, f: &Formula) {
        collect_edges(spec, f, true, &mut Vec::new(), &mut self.edges);
    }

    pub fn with(&self, spec: &ProtocolSpec, f: &Formula) -> Self {
        let mut g = self.clone();
        g.add(spec, f);
        g
    }

    pub fn has_cycle(&self) -> bool {
        let nodes: BTreeSet<&Ident> = self.edges.iter().flat_map(|(a, b)| [a, b]).collect();
        // Kahn's algorithm: a cycle remains iff some node is never freed.
        let mut indeg: BTreeMap<&Ident, usize> = nodes.iter().map(|n| (*n, 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b).unwrap() += 1;
        }
        let mut ready: Vec<&Ident> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for (a, b) in &self.edges {
                if a == n {
                    let d = indeg.get_mut(b).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        seen < nodes.len()
    }
}

fn collect_edges(
    spec: &ProtocolSpec,
    f: &Formula,
    positive: bool,
    scope: &mut Vec<Ident>,
    out: &mut BTreeSet<(Ident, Ident)>,
) {
    match f {
        Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
            let universal = matches!(f, Formula::Forall(..)) == positive;
            if universal {
                let n = scope.len();
                scope.extend(bs.iter().map(|b| b.sort.clone()));
                collect_edges(spec, body, positive, scope, out);
                scope.truncate(n);
            } else {
                for b in bs {
                    for u in scope.iter() {
                        out.insert((u.clone(), b.sort.clone()));
                    }
                }
                collect_edges(spec, body, positive, scope, out);
            }
        }
        Formula::Not(a) => collect_edges(spec, a, !positive, scope, out),
        Formula::Implies(a, b) => {
            collect_edges(spec, a, !positive, scope, out);
            collect_edges(spec, b, positive, scope, out);
        }
        Formula::Iff(a, b) => {
            for x in [a, b] {
                collect_edges(spec, x, true, scope, out);
                collect_edges(spec, x, false, scope, out);
            }
        }
        Formula::And(xs) | Formula::Or(xs) => {
            for x in xs {
                collect_edges(spec, x, positive, scope, out);
            }
        }
        Formula::App { rel, .. } => {
            if let Some(RelationRole::Definition { body, .. }) = spec.relation(rel).map(|r| &r.role) {
                collect_edges(spec, body, positive, scope, out);
            }
        }
        _ => {}
    }
}

/// Moves the existential blocks in front of the universal ones when that
/// removes a quantifier alternation cycle and the oracle admits the
/// (stronger) result.
pub fn epr_reduction<O: FrameOracle>(
    phi: &QuantifiedPredicate,
    spec: &ProtocolSpec,
    graph: &AlternationGraph,
    oracle: &mut O,
) -> Result<QuantifiedPredicate, O::Error> {
    if !phi.has_forall_exists() {
        return Ok(phi.clone());
    }
    let mut candidate = phi.clone();
    let (mut ex, mut all): (Vec<_>, Vec<_>) = candidate
        .prefix
        .drain(..)
        .partition(|b| b.quantifier == Quantifier::Exists);
    ex.append(&mut all);
    candidate.prefix = ex;
    let before = graph.with(spec, &phi.to_formula()).has_cycle();
    let after = graph.with(spec, &candidate.to_formula()).has_cycle();
    if !before || after {
        return Ok(phi.clone());
    }
    Ok(if oracle.admits(&candidate)? {
        candidate
    } else {
        phi.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ground::{build_instance, SizeAssignment};
    use crate::spec::{load_spec, parse_formula};

    fn toy(n: usize, v: usize) -> FiniteInstance {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        build_instance(&spec, &SizeAssignment::from_pairs([("node", n), ("value", v)])).unwrap()
    }

    fn boost(inst: &FiniteInstance, text: &str) -> QuantifiedPredicate {
        sym_boost(&inst.parse_clause(text).unwrap(), inst)
    }

    struct Fixed(bool);

    impl FrameOracle for Fixed {
        type Error = ();
        fn admits(&mut self, _: &QuantifiedPredicate) -> Result<bool, ()> {
            Ok(self.0)
        }
    }

    #[test]
    fn named_clauses_get_the_expected_shapes() {
        let inst = toy(3, 3);
        let p1 = boost(
            &inst,
            "vote(node_1,value_1) | vote(node_1,value_2) | vote(node_1,value_3)",
        );
        assert_eq!(
            p1.to_string(),
            "(forall ((N1 node)) (exists ((V1 value)) (vote N1 V1)))"
        );
        let p2 = boost(&inst, "!decision(value_1) | decision(value_2)");
        assert_eq!(
            p2.to_string(),
            "(forall ((V1 value) (V2 value)) (=> (distinct V1 V2) (or (not (decision V1)) (decision V2))))"
        );
        let p3 = boost(&inst, "decision(value_1) | decision(value_2) | decision(value_3)");
        assert_eq!(p3.to_string(), "(exists ((V1 value)) (decision V1))");
        let p4 = boost(&inst, "!decision(value_1) | decision(value_2) | decision(value_3)");
        assert_eq!(
            p4.to_string(),
            "(forall ((V1 value)) (exists ((V2 value)) (or (not (decision V1)) (and (distinct V1 V2) (decision V2)))))"
        );
        let a2 = boost(
            &inst,
            "!decision(value_1) | chosenAt(quorum_12,value_1) | chosenAt(quorum_13,value_1) | chosenAt(quorum_23,value_1)",
        );
        assert_eq!(
            a2.to_string(),
            "(forall ((V1 value)) (exists ((Q1 quorum)) (or (not (decision V1)) (chosenAt Q1 V1))))"
        );
        assert!([p1, p2, p3, p4, a2].iter().all(|p| p.is_compact()));
    }

    #[test]
    fn forall_precondition_routes_to_case_b() {
        let inst = toy(3, 3);
        let c = inst
            .parse_clause("decision(value_1) | decision(value_2) | decision(value_3)")
            .unwrap();
        let value = inst.vocab.sort_id("value").unwrap();
        let part = partition(&inst.vocab, &c, value);
        let mut d = Draft::new(&inst, &c);
        assert!(matches!(
            infer_forall(&mut d, value, &part),
            Err(InferError::Precondition { .. })
        ));
    }

    #[test]
    fn all_singletons_signal_fallback() {
        let inst = toy(3, 3);
        let c = inst
            .parse_clause("vote(node_1,value_1) | !vote(node_1,value_2) | vote(node_2,value_3)")
            .unwrap();
        let value = inst.vocab.sort_id("value").unwrap();
        let part = partition(&inst.vocab, &c, value);
        assert_eq!(part.cells, vec![vec![0], vec![1], vec![2]]);
        let mut d = Draft::new(&inst, &c);
        assert!(matches!(
            infer_forall_exists(&mut d, value, &part),
            Err(InferError::ShapeMismatch { .. })
        ));
        let p = sym_boost(&c, &inst);
        assert!(!p.is_compact());
    }

    #[test]
    fn size_one_sort_is_existential() {
        let inst = toy(2, 1);
        let p = boost(&inst, "decision(value_1)");
        assert_eq!(p.to_string(), "(exists ((V1 value)) (decision V1))");
    }

    #[test]
    fn membership_guard_relates_universals() {
        let inst = toy(3, 3);
        let p = boost(&inst, "vote(node_1,value_1) | chosenAt(quorum_23,value_1)");
        assert_eq!(
            p.guard,
            vec![Formula::not(Formula::Member {
                elem: Term::var("N1"),
                set: Term::var("Q1")
            })]
        );
        assert!(p.is_compact());
    }

    #[test]
    fn antecedent_reduction_branches() {
        let inst = toy(3, 3);
        let p2 = boost(&inst, "!decision(value_1) | decision(value_2)");
        let r = antecedent_reduction(&p2, &mut Fixed(true)).unwrap();
        assert_eq!(
            r.to_string(),
            "(forall ((V1 value) (V2 value)) (or (not (decision V1)) (decision V2)))"
        );
        assert_eq!(antecedent_reduction(&p2, &mut Fixed(false)).unwrap(), p2);
        let p = boost(&inst, "!decision(value_1)");
        assert_eq!(antecedent_reduction(&p, &mut Fixed(true)).unwrap(), p);
    }

    #[test]
    fn epr_reduction_breaks_the_quorum_cycle() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let f = parse_formula(&spec, "(forall ((Y node)) (exists ((Z quorum)) (member Y Z)))").unwrap();
        let phi = QuantifiedPredicate {
            prefix: vec![
                QuantifierBlock {
                    quantifier: Quantifier::Forall,
                    vars: vec![Binder::new("Y", "node")],
                    distinct: vec![],
                },
                QuantifierBlock {
                    quantifier: Quantifier::Exists,
                    vars: vec![Binder::new("Z", "quorum")],
                    distinct: vec![],
                },
            ],
            guard: vec![],
            body: match &f {
                Formula::Forall(_, b) => match b.as_ref() {
                    Formula::Exists(_, m) => (**m).clone(),
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            },
            fallback_sorts: BTreeSet::new(),
            explicit: false,
        };
        assert_eq!(phi.to_formula(), f);
        let graph = AlternationGraph::for_spec(&spec);
        assert!(!graph.has_cycle());
        let r = epr_reduction(&phi, &spec, &graph, &mut Fixed(true)).unwrap();
        assert_eq!(r.to_string(), "(exists ((Z quorum)) (forall ((Y node)) (member Y Z)))");
        assert_eq!(epr_reduction(&phi, &spec, &graph, &mut Fixed(false)).unwrap(), phi);
        let universal =
            QuantifiedPredicate::from_formula(parse_formula(&spec, "(forall ((V value)) (decision V))").unwrap());
        assert_eq!(
            epr_reduction(&universal, &spec, &graph, &mut Fixed(true)).unwrap(),
            universal
        );
    }

    #[test]
    fn expand_small_cases() {
        let inst = toy(3, 3);
        let p2 = boost(&inst, "!decision(value_1) | decision(value_2)");
        let cnf = expand(&p2, &inst).unwrap().as_cnf().unwrap();
        assert_eq!(cnf.len(), 6);
        let one = toy(1, 1);
        let p1 = boost(
            &inst,
            "vote(node_1,value_1) | vote(node_1,value_2) | vote(node_1,value_3)",
        );
        let g = expand(&p1, &one).unwrap();
        assert_eq!(g, GroundFormula::atom(0, Frame::Current));
    }
}
