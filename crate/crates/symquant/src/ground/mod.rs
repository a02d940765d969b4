//! Finite instances: constant tables, the ground atom index, and grounding
//! of protocol formulas to quantifier-free Boolean formulas.

mod clause;
mod formula;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

pub use clause::{GroundClause, GroundCube, GroundLiteral, LiteralSetError};
pub use formula::{AtomId, AtomRef, Frame, GroundFormula};

use crate::spec::{Formula, ProtocolSpec, RelationRole, SortKind, Term};

/// Instances with more ground state variables than this are rejected.
pub const MAX_STATE_VARS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundError {
    #[error("sort {0} has size 0; sizes must be at least 1")]
    ZeroSize(String),
    #[error("no size given for sort {0}")]
    MissingSize(String),
    #[error("{0} is not an independent sort of the protocol")]
    NotIndependent(String),
    #[error("instance has more than {limit} ground state variables")]
    TooLarge { limit: usize },
    #[error("invalid size assignment `{0}`; expected sort=n,...")]
    BadSizeSyntax(String),
    #[error("axiom {0} is false in this instance")]
    AxiomViolated(usize),
    #[error("unbound variable {0} while grounding")]
    Unbound(String),
    #[error("unknown relation {0} while grounding")]
    UnknownRelation(String),
    #[error("constant {sort}#{index} out of range")]
    ConstantOutOfRange { sort: String, index: usize },
    #[error("partial model: no value for {0}")]
    PartialModel(String),
}

/// Sizes of the independent sorts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SizeAssignment {
    sizes: BTreeMap<String, usize>,
}

impl SizeAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        SizeAssignment {
            sizes: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// Parses `node=3,value=2`.
    pub fn parse(text: &str) -> Result<Self, GroundError> {
        let mut out = SizeAssignment::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| GroundError::BadSizeSyntax(text.to_string()))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| GroundError::BadSizeSyntax(text.to_string()))?;
            out.sizes.insert(k.trim().to_string(), v);
        }
        Ok(out)
    }

    pub fn get(&self, sort: &str) -> Option<usize> {
        self.sizes.get(sort).copied()
    }

    pub fn set(&mut self, sort: &str, size: usize) {
        self.sizes.insert(sort.to_string(), size);
    }

    pub fn with(&self, sort: &str, size: usize) -> Self {
        let mut out = self.clone();
        out.set(sort, size);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.sizes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn total(&self) -> usize {
        self.sizes.values().sum()
    }
}

impl fmt::Display for SizeAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constant {
    pub name: String,
    /// Member indices over the base sort, sorted; empty for independent sorts.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortInfo {
    pub name: String,
    /// Index of the base sort for dependent sorts.
    pub base: Option<usize>,
    pub constants: Vec<Constant>,
}

impl SortInfo {
    pub fn size(&self) -> usize {
        self.constants.len()
    }

    pub fn is_independent(&self) -> bool {
        self.base.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredKind {
    State,
    Definition,
}

/// A relation or definition with its block of atom ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredInfo {
    pub name: String,
    pub arg_sorts: Vec<usize>,
    pub kind: PredKind,
    pub offset: usize,
    pub count: usize,
    strides: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomInfo {
    pub pred: usize,
    pub args: Vec<usize>,
}

/// Majority subsets of `0..n`: all subsets of size n/2+1, in lexicographic order.
pub fn majority_subsets(n: usize) -> Vec<Vec<usize>> {
    let k = n / 2 + 1;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    if n > 0 {
        rec(0, n, k, &mut cur, &mut out);
    }
    out
}

fn dependent_constant_name(sort: &str, base_size: usize, members: &[usize]) -> String {
    let idx: Vec<String> = members.iter().map(|m| (m + 1).to_string()).collect();
    if base_size <= 9 {
        format!("{sort}_{}", idx.concat())
    } else {
        format!("{sort}_{}", idx.join("_"))
    }
}

/// Sorts, constants and the atom index of an instance. Grounding only needs
/// this part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub sorts: Vec<SortInfo>,
    pub preds: Vec<PredInfo>,
    pub atoms: Vec<AtomInfo>,
    pub num_state: usize,
    sort_index: HashMap<String, usize>,
    pred_index: HashMap<String, usize>,
    /// Per dependent sort: member set to constant index.
    dependent_index: Vec<HashMap<Vec<usize>, usize>>,
}

type Env = Vec<(String, usize, usize)>;

impl Vocabulary {
    pub fn sort_id(&self, name: &str) -> Option<usize> {
        self.sort_index.get(name).copied()
    }

    pub fn pred_id(&self, name: &str) -> Option<usize> {
        self.pred_index.get(name).copied()
    }

    pub fn atom_id(&self, pred: usize, args: &[usize]) -> AtomId {
        let p = &self.preds[pred];
        let off: usize = args.iter().zip(&p.strides).map(|(a, s)| a * s).sum();
        (p.offset + off) as AtomId
    }

    pub fn is_state_atom(&self, atom: AtomId) -> bool {
        (atom as usize) < self.num_state
    }

    /// Dependent constant with the given members, if it exists.
    pub fn dependent_constant(&self, sort: usize, members: &[usize]) -> Option<usize> {
        self.dependent_index[sort].get(members).copied()
    }

    /// Human-readable atom name, e.g. `vote(node_1,value_2)`.
    pub fn atom_name(&self, atom: AtomId) -> String {
        let info = &self.atoms[atom as usize];
        let p = &self.preds[info.pred];
        if info.args.is_empty() {
            return p.name.clone();
        }
        let args: Vec<&str> = info
            .args
            .iter()
            .zip(&p.arg_sorts)
            .map(|(c, s)| self.sorts[*s].constants[*c].name.as_str())
            .collect();
        format!("{}({})", p.name, args.join(","))
    }

    /// Solver-level symbol, e.g. `vote.node_1.value_2` or `...next`.
    pub fn atom_symbol(&self, r: AtomRef) -> String {
        let info = &self.atoms[r.atom as usize];
        let p = &self.preds[info.pred];
        let mut s = p.name.clone();
        for (c, so) in info.args.iter().zip(&p.arg_sorts) {
            s.push('.');
            s.push_str(&self.sorts[*so].constants[*c].name);
        }
        if r.next {
            s.push_str(".next");
        }
        s
    }

    pub fn literal_name(&self, lit: GroundLiteral) -> String {
        if lit.positive {
            self.atom_name(lit.atom)
        } else {
            format!("!{}", self.atom_name(lit.atom))
        }
    }

    fn resolve(&self, t: &Term, env: &Env) -> Result<(usize, usize), GroundError> {
        match t {
            Term::Var(v) => env
                .iter()
                .rev()
                .find(|(name, _, _)| name == v)
                .map(|(_, s, c)| (*s, *c))
                .ok_or_else(|| GroundError::Unbound(v.clone())),
            Term::Const { sort, index } => {
                let s = self.sort_id(sort).ok_or_else(|| GroundError::ConstantOutOfRange {
                    sort: sort.clone(),
                    index: *index,
                })?;
                if *index >= self.sorts[s].size() {
                    return Err(GroundError::ConstantOutOfRange {
                        sort: sort.clone(),
                        index: *index + 1,
                    });
                }
                Ok((s, *index))
            }
        }
    }

    fn ground(&self, f: &Formula, frame: Frame, env: &mut Env) -> Result<GroundFormula, GroundError> {
        use GroundFormula as G;
        Ok(match f {
            Formula::Bool(b) => G::Const(*b),
            Formula::App { rel, primed, args } => {
                let p = self
                    .pred_id(rel)
                    .ok_or_else(|| GroundError::UnknownRelation(rel.clone()))?;
                let cs = args
                    .iter()
                    .map(|a| self.resolve(a, env).map(|x| x.1))
                    .collect::<Result<Vec<_>, _>>()?;
                let next = frame == Frame::Next || *primed;
                G::Atom(AtomRef {
                    atom: self.atom_id(p, &cs),
                    next,
                })
            }
            Formula::Member { elem, set } => {
                let (_, e) = self.resolve(elem, env)?;
                let (s, q) = self.resolve(set, env)?;
                G::Const(self.sorts[s].constants[q].members.contains(&e))
            }
            Formula::Eq(a, b) => G::Const(self.resolve(a, env)? == self.resolve(b, env)?),
            Formula::Distinct(ts) => {
                let cs = ts.iter().map(|t| self.resolve(t, env)).collect::<Result<Vec<_>, _>>()?;
                let mut ok = true;
                for i in 0..cs.len() {
                    for j in i + 1..cs.len() {
                        ok &= cs[i] != cs[j];
                    }
                }
                G::Const(ok)
            }
            Formula::Not(a) => G::not(self.ground(a, frame, env)?),
            Formula::And(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    let g = self.ground(x, frame, env)?;
                    if g == G::Const(false) {
                        return Ok(g);
                    }
                    out.push(g);
                }
                G::and(out)
            }
            Formula::Or(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    let g = self.ground(x, frame, env)?;
                    if g == G::Const(true) {
                        return Ok(g);
                    }
                    out.push(g);
                }
                G::or(out)
            }
            Formula::Implies(a, b) => {
                let ga = self.ground(a, frame, env)?;
                if ga == G::Const(false) {
                    return Ok(G::Const(true));
                }
                G::implies(ga, self.ground(b, frame, env)?)
            }
            Formula::Iff(a, b) => G::iff(self.ground(a, frame, env)?, self.ground(b, frame, env)?),
            Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
                let universal = matches!(f, Formula::Forall(..));
                let sorts = bs
                    .iter()
                    .map(|b| {
                        self.sort_id(&b.sort)
                            .ok_or_else(|| GroundError::Unbound(b.sort.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let dims: Vec<usize> = sorts.iter().map(|s| self.sorts[*s].size()).collect();
                let mut parts = Vec::new();
                for tuple in tuples(&dims) {
                    let n = env.len();
                    for ((b, s), c) in bs.iter().zip(&sorts).zip(&tuple) {
                        env.push((b.var.clone(), *s, *c));
                    }
                    let g = self.ground(body, frame, env);
                    env.truncate(n);
                    let g = g?;
                    match (universal, &g) {
                        (true, G::Const(false)) | (false, G::Const(true)) => return Ok(g),
                        _ => parts.push(g),
                    }
                }
                if universal {
                    G::and(parts)
                } else {
                    G::or(parts)
                }
            }
        })
    }
}

/// All tuples over `dims` in lexicographic (mixed radix) order.
pub fn tuples(dims: &[usize]) -> Vec<Vec<usize>> {
    if dims.contains(&0) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = vec![0; dims.len()];
    loop {
        out.push(cur.clone());
        let mut i = dims.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < dims[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Ground transition of one action instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTransition {
    pub action: String,
    pub params: Vec<usize>,
    pub formula: GroundFormula,
}

/// A protocol at concrete sizes. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteInstance {
    pub spec: ProtocolSpec,
    pub sizes: SizeAssignment,
    pub vocab: Vocabulary,
    /// Ground body of every auxiliary atom, indexed by `atom - num_state`.
    pub aux_bodies: Vec<GroundFormula>,
    /// Auxiliary atoms ordered so each body only mentions earlier ones.
    pub aux_order: Vec<AtomId>,
    pub axioms: GroundFormula,
    pub init: GroundFormula,
    pub safety: GroundFormula,
    pub transitions: Vec<GroundTransition>,
    pub trans: GroundFormula,
}

/// Grounds `spec` at `sizes`.
pub fn build_instance(spec: &ProtocolSpec, sizes: &SizeAssignment) -> Result<FiniteInstance, GroundError> {
    for (name, _) in sizes.iter() {
        if !spec.sort(name).is_some_and(|s| s.is_independent()) {
            return Err(GroundError::NotIndependent(name.to_string()));
        }
    }
    // Constant tables.
    let mut sorts: Vec<SortInfo> = Vec::new();
    let mut sort_index: HashMap<String, usize> = HashMap::new();
    let mut dependent_index = Vec::new();
    for decl in &spec.sorts {
        let mut deps = HashMap::new();
        let info = match &decl.kind {
            SortKind::Independent => {
                let n = sizes
                    .get(&decl.name)
                    .ok_or_else(|| GroundError::MissingSize(decl.name.clone()))?;
                if n == 0 {
                    return Err(GroundError::ZeroSize(decl.name.clone()));
                }
                if n > MAX_STATE_VARS {
                    return Err(GroundError::TooLarge { limit: MAX_STATE_VARS });
                }
                SortInfo {
                    name: decl.name.clone(),
                    base: None,
                    constants: (0..n)
                        .map(|i| Constant {
                            name: format!("{}_{}", decl.name, i + 1),
                            members: Vec::new(),
                        })
                        .collect(),
                }
            }
            SortKind::Majority { base } => {
                let b = *sort_index
                    .get(base)
                    .ok_or_else(|| GroundError::NotIndependent(base.clone()))?;
                let n = sorts[b].size();
                if n > 24 {
                    return Err(GroundError::TooLarge { limit: MAX_STATE_VARS });
                }
                let subsets = majority_subsets(n);
                for (i, m) in subsets.iter().enumerate() {
                    deps.insert(m.clone(), i);
                }
                SortInfo {
                    name: decl.name.clone(),
                    base: Some(b),
                    constants: subsets
                        .into_iter()
                        .map(|m| Constant {
                            name: dependent_constant_name(&decl.name, n, &m),
                            members: m,
                        })
                        .collect(),
                }
            }
        };
        sort_index.insert(decl.name.clone(), sorts.len());
        sorts.push(info);
        dependent_index.push(deps);
    }

    // Atom index: state relations first, then definitions.
    let mut preds = Vec::new();
    let mut pred_index = HashMap::new();
    let mut offset = 0usize;
    let state = spec.state_relations().map(|r| (r, PredKind::State));
    let defs = spec.definitions().map(|r| (r, PredKind::Definition));
    for (r, kind) in state.chain(defs) {
        let arg_sorts: Vec<usize> = r.arg_sorts.iter().map(|s| sort_index[s]).collect();
        let dims: Vec<usize> = arg_sorts.iter().map(|s| sorts[*s].size()).collect();
        let mut count = 1usize;
        for d in &dims {
            count = count
                .checked_mul(*d)
                .filter(|c| *c <= MAX_STATE_VARS)
                .ok_or(GroundError::TooLarge { limit: MAX_STATE_VARS })?;
        }
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        pred_index.insert(r.name.clone(), preds.len());
        preds.push(PredInfo {
            name: r.name.clone(),
            arg_sorts,
            kind,
            offset,
            count,
            strides,
        });
        offset += count;
        if kind == PredKind::State && offset > MAX_STATE_VARS {
            return Err(GroundError::TooLarge { limit: MAX_STATE_VARS });
        }
    }
    let num_state: usize = preds
        .iter()
        .filter(|p| p.kind == PredKind::State)
        .map(|p| p.count)
        .sum();
    let mut atoms = Vec::with_capacity(offset);
    for (pi, p) in preds.iter().enumerate() {
        let dims: Vec<usize> = p.arg_sorts.iter().map(|s| sorts[*s].size()).collect();
        for args in tuples(&dims) {
            atoms.push(AtomInfo { pred: pi, args });
        }
    }
    let vocab = Vocabulary {
        sorts,
        preds,
        atoms,
        num_state,
        sort_index,
        pred_index,
        dependent_index,
    };

    // Auxiliary bodies, in atom order, and a dependency order over them.
    let mut aux_bodies = Vec::with_capacity(vocab.atoms.len() - num_state);
    for atom in &vocab.atoms[num_state..] {
        let decl = spec.relation(&vocab.preds[atom.pred].name).unwrap();
        let RelationRole::Definition { params, body } = &decl.role else {
            unreachable!("auxiliary atoms come from definitions");
        };
        let mut env: Env = params
            .iter()
            .zip(&vocab.preds[atom.pred].arg_sorts)
            .zip(&atom.args)
            .map(|((b, s), c)| (b.var.clone(), *s, *c))
            .collect();
        aux_bodies.push(vocab.ground(body, Frame::Current, &mut env)?);
    }
    let aux_order = topo_order(num_state, &aux_bodies);

    let mut axiom_parts = Vec::new();
    for (i, a) in spec.axioms.iter().enumerate() {
        let g = vocab.ground(a, Frame::Current, &mut Vec::new())?;
        if g == GroundFormula::Const(false) {
            return Err(GroundError::AxiomViolated(i + 1));
        }
        axiom_parts.push(g);
    }
    let axioms = GroundFormula::and(axiom_parts);
    let init = vocab.ground(&spec.init, Frame::Current, &mut Vec::new())?;
    let safety = vocab.ground(&spec.safety, Frame::Current, &mut Vec::new())?;

    let mut transitions = Vec::new();
    for action in &spec.actions {
        let psorts: Vec<usize> = action.params.iter().map(|b| vocab.sort_index[&b.sort]).collect();
        let dims: Vec<usize> = psorts.iter().map(|s| vocab.sorts[*s].size()).collect();
        for params in tuples(&dims) {
            let mut env: Env = action
                .params
                .iter()
                .zip(&psorts)
                .zip(&params)
                .map(|((b, s), c)| (b.var.clone(), *s, *c))
                .collect();
            let guard = vocab.ground(&action.guard, Frame::Current, &mut env)?;
            if guard == GroundFormula::Const(false) {
                continue;
            }
            let mut parts = vec![guard];
            for u in &action.updates {
                parts.push(vocab.ground(&u.formula, Frame::Current, &mut env)?);
            }
            for (pi, p) in vocab.preds.iter().enumerate() {
                if p.kind != PredKind::State || action.updates.iter().any(|u| u.relation == p.name) {
                    continue;
                }
                for a in p.offset..p.offset + p.count {
                    let a = a as AtomId;
                    debug_assert_eq!(vocab.atoms[a as usize].pred, pi);
                    parts.push(GroundFormula::iff(
                        GroundFormula::atom(a, Frame::Next),
                        GroundFormula::atom(a, Frame::Current),
                    ));
                }
            }
            let formula = GroundFormula::and(parts);
            if formula != GroundFormula::Const(false) {
                transitions.push(GroundTransition {
                    action: action.name.clone(),
                    params,
                    formula,
                });
            }
        }
    }
    let trans = GroundFormula::or(transitions.iter().map(|t| t.formula.clone()));

    Ok(FiniteInstance {
        spec: spec.clone(),
        sizes: sizes.clone(),
        vocab,
        aux_bodies,
        aux_order,
        axioms,
        init,
        safety,
        transitions,
        trans,
    })
}

fn topo_order(num_state: usize, bodies: &[GroundFormula]) -> Vec<AtomId> {
    let n = bodies.len();
    let deps: Vec<Vec<usize>> = bodies
        .iter()
        .map(|b| {
            b.atoms()
                .into_iter()
                .filter(|r| r.atom as usize >= num_state)
                .map(|r| r.atom as usize - num_state)
                .collect()
        })
        .collect();
    let mut done = vec![false; n];
    let mut out = Vec::with_capacity(n);
    fn visit(i: usize, deps: &[Vec<usize>], done: &mut [bool], out: &mut Vec<usize>) {
        if done[i] {
            return;
        }
        done[i] = true;
        for &d in &deps[i] {
            visit(d, deps, done, out);
        }
        out.push(i);
    }
    for i in 0..n {
        visit(i, &deps, &mut done, &mut out);
    }
    out.into_iter().map(|i| (i + num_state) as AtomId).collect()
}

impl FiniteInstance {
    pub fn num_state(&self) -> usize {
        self.vocab.num_state
    }

    pub fn num_atoms(&self) -> usize {
        self.vocab.atoms.len()
    }

    pub fn sort(&self, name: &str) -> Option<&SortInfo> {
        self.vocab.sort_id(name).map(|i| &self.vocab.sorts[i])
    }

    /// Grounds a closed formula (or one whose variables are constants).
    pub fn ground_formula(&self, f: &Formula, frame: Frame) -> Result<GroundFormula, GroundError> {
        self.vocab.ground(f, frame, &mut Vec::new())
    }

    /// Same as `ground_formula` with free variables bound to constants by
    /// `(variable, sort, constant index)`.
    pub fn ground_with(
        &self,
        f: &Formula,
        frame: Frame,
        bindings: &[(&str, &str, usize)],
    ) -> Result<GroundFormula, GroundError> {
        let mut env: Env = Vec::new();
        for (v, s, c) in bindings {
            let sid = self
                .vocab
                .sort_id(s)
                .ok_or_else(|| GroundError::Unbound(s.to_string()))?;
            env.push((v.to_string(), sid, *c));
        }
        self.vocab.ground(f, frame, &mut env)
    }

    /// Extends a state valuation with the values of all auxiliary atoms.
    pub fn complete_valuation(&self, state: &[bool]) -> Vec<bool> {
        let n = self.num_state();
        let mut v = state[..n].to_vec();
        v.resize(self.num_atoms(), false);
        for &a in &self.aux_order {
            let b = self.aux_bodies[a as usize - n].eval(&v, &[]);
            v[a as usize] = b;
        }
        v
    }

    /// Cube fixing every state variable per `model`.
    pub fn state_as_cube(&self, model: &[Option<bool>]) -> Result<GroundCube, GroundError> {
        let mut lits = Vec::with_capacity(self.num_state());
        for a in 0..self.num_state() {
            match model.get(a).copied().flatten() {
                Some(b) => lits.push(GroundLiteral::new(a as AtomId, b)),
                None => return Err(GroundError::PartialModel(self.vocab.atom_name(a as AtomId))),
            }
        }
        Ok(GroundCube::new(lits).expect("one literal per variable"))
    }

    /// Cube fixing every state and auxiliary atom to its value in `state`.
    pub fn extended_cube(&self, state: &[bool]) -> GroundCube {
        let v = self.complete_valuation(state);
        GroundCube::new(v.iter().enumerate().map(|(a, b)| GroundLiteral::new(a as AtomId, *b)))
            .expect("one literal per atom")
    }

    /// Values of the state variables fixed by a cube (None where free).
    pub fn cube_state(&self, cube: &GroundCube) -> Vec<Option<bool>> {
        let mut out = vec![None; self.num_state()];
        for l in cube.literals() {
            if self.vocab.is_state_atom(l.atom) {
                out[l.atom as usize] = Some(l.positive);
            }
        }
        out
    }

    /// Evaluates a current-state formula on a state valuation.
    pub fn eval_state(&self, f: &GroundFormula, state: &[bool]) -> bool {
        f.eval(&self.complete_valuation(state), &[])
    }

    /// Evaluates a two-frame formula on a pair of states.
    pub fn eval_step(&self, f: &GroundFormula, cur: &[bool], next: &[bool]) -> bool {
        f.eval(&self.complete_valuation(cur), &self.complete_valuation(next))
    }

    /// Replaces auxiliary atoms by their definitions, yielding a formula
    /// over state variables only.
    pub fn inline_aux(&self, f: &GroundFormula) -> GroundFormula {
        let n = self.num_state();
        match f {
            GroundFormula::Atom(r) if r.atom as usize >= n => {
                let body = self.inline_aux(&self.aux_bodies[r.atom as usize - n]);
                if r.next {
                    body.to_next()
                } else {
                    body
                }
            }
            GroundFormula::Not(a) => GroundFormula::not(self.inline_aux(a)),
            GroundFormula::And(xs) => GroundFormula::and(xs.iter().map(|x| self.inline_aux(x))),
            GroundFormula::Or(xs) => GroundFormula::or(xs.iter().map(|x| self.inline_aux(x))),
            GroundFormula::Iff(a, b) => GroundFormula::iff(self.inline_aux(a), self.inline_aux(b)),
            other => other.clone(),
        }
    }

    pub fn clause_name(&self, c: &GroundClause) -> String {
        let parts: Vec<String> = c.literals().iter().map(|l| self.vocab.literal_name(*l)).collect();
        if parts.is_empty() {
            "false".into()
        } else {
            parts.join(" | ")
        }
    }

    pub fn cube_name(&self, c: &GroundCube) -> String {
        let parts: Vec<String> = c.literals().iter().map(|l| self.vocab.literal_name(*l)).collect();
        if parts.is_empty() {
            "true".into()
        } else {
            parts.join(" & ")
        }
    }

    /// Parses a literal written as `vote(node_1,value_2)` or `!decision(value_1)`.
    pub fn parse_literal(&self, text: &str) -> Option<GroundLiteral> {
        let text = text.trim();
        let (positive, body) = match text.strip_prefix('!') {
            Some(rest) => (false, rest.trim()),
            None => (true, text),
        };
        (0..self.num_atoms())
            .find(|&a| self.vocab.atom_name(a as AtomId) == body)
            .map(|a| GroundLiteral::new(a as AtomId, positive))
    }

    /// Parses a clause written as literals joined by `|`.
    pub fn parse_clause(&self, text: &str) -> Option<GroundClause> {
        let lits = text
            .split('|')
            .map(|l| self.parse_literal(l))
            .collect::<Option<Vec<_>>>()?;
        GroundClause::new(lits).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::spec::{load_spec, parse_formula};

    fn toy(n: usize, v: usize) -> FiniteInstance {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        build_instance(&spec, &SizeAssignment::from_pairs([("node", n), ("value", v)])).unwrap()
    }

    #[test]
    fn toy_three_three_counts() {
        let inst = toy(3, 3);
        assert_eq!(inst.num_state(), 12);
        let q: Vec<_> = inst
            .sort("quorum")
            .unwrap()
            .constants
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(q, vec!["quorum_12", "quorum_13", "quorum_23"]);
        // didNotVote per node, chosenAt per (quorum, value).
        assert_eq!(inst.num_atoms(), 12 + 3 + 9);
    }

    #[test]
    fn toy_two_one_has_a_single_quorum() {
        let inst = toy(2, 1);
        let q = inst.sort("quorum").unwrap();
        assert_eq!(q.size(), 1);
        assert_eq!(q.constants[0].members, vec![0, 1]);
        assert_eq!(inst.num_state(), 3);
    }

    #[test]
    fn zero_size_is_rejected() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let err = build_instance(&spec, &SizeAssignment::from_pairs([("node", 0), ("value", 1)])).unwrap_err();
        assert_eq!(err, GroundError::ZeroSize("node".into()));
        let err = build_instance(&spec, &SizeAssignment::from_pairs([("node", 1)])).unwrap_err();
        assert_eq!(err, GroundError::MissingSize("value".into()));
    }

    #[test]
    fn oversized_instances_are_rejected() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let err = build_instance(&spec, &SizeAssignment::from_pairs([("node", 2000), ("value", 2000)])).unwrap_err();
        assert!(matches!(err, GroundError::TooLarge { .. }), "{err:?}");
    }

    #[test]
    fn majority_subsets_pairwise_intersect() {
        for n in 2..=6 {
            let qs = majority_subsets(n);
            // C(n, n/2+1)
            let k = n / 2 + 1;
            let binom = (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
            assert_eq!(qs.len(), binom, "n={n}");
            for a in &qs {
                for b in &qs {
                    assert!(a.iter().any(|x| b.contains(x)), "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn safety_grounds_to_six_nontrivial_pairs() {
        let inst = toy(3, 3);
        // Nine (V1, V2) pairs, the three diagonal ones vanish.
        match &inst.safety {
            GroundFormula::And(xs) => assert_eq!(xs.len(), 6),
            other => panic!("{other}"),
        }
        let f = parse_formula(&inst.spec, "(forall ((V value)) (not (decision V)))").unwrap();
        let one = toy(3, 1);
        let g = one.ground_formula(&f, Frame::Current).unwrap();
        let d = one.vocab.atom_id(one.vocab.pred_id("decision").unwrap(), &[0]);
        assert_eq!(g, GroundFormula::not(GroundFormula::atom(d, Frame::Current)));
    }

    #[test]
    fn chosen_at_expands_over_members() {
        let inst = toy(3, 3);
        let v = &inst.vocab;
        let chosen = v.atom_id(v.pred_id("chosenAt").unwrap(), &[0, 0]);
        assert_eq!(v.atom_name(chosen), "chosenAt(quorum_12,value_1)");
        let vote = v.pred_id("vote").unwrap();
        let expect = GroundFormula::and([
            GroundFormula::atom(v.atom_id(vote, &[0, 0]), Frame::Current),
            GroundFormula::atom(v.atom_id(vote, &[1, 0]), Frame::Current),
        ]);
        assert_eq!(inst.aux_bodies[chosen as usize - inst.num_state()], expect);
    }

    #[test]
    fn state_cubes() {
        let inst = toy(3, 3);
        let all_false = vec![Some(false); 12];
        let c = inst.state_as_cube(&all_false).unwrap();
        assert_eq!(c.len(), 12);
        assert!(c.literals().iter().all(|l| !l.positive));
        let mut one = all_false.clone();
        one[0] = Some(true);
        let c = inst.state_as_cube(&one).unwrap();
        assert_eq!(c.literals().iter().filter(|l| l.positive).count(), 1);
        let mut partial = all_false;
        partial[10] = None;
        assert_eq!(
            inst.state_as_cube(&partial).unwrap_err().to_string(),
            "partial model: no value for decision(value_2)"
        );
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(toy(3, 2), toy(3, 2));
    }

    #[test]
    fn trans_enables_a_vote_from_the_initial_state() {
        let inst = toy(2, 2);
        let zero = vec![false; inst.num_state()];
        assert!(inst.eval_state(&inst.init, &zero));
        let mut next = zero.clone();
        next[0] = true;
        assert!(inst.eval_step(&inst.trans, &zero, &next));
        // Two votes at once is not a single step.
        next[3] = true;
        assert!(!inst.eval_step(&inst.trans, &zero, &next));
    }

    #[test]
    fn clause_text_round_trips() {
        let inst = toy(3, 3);
        let c = inst.parse_clause("vote(node_1,value_1) | !decision(value_2)").unwrap();
        assert_eq!(inst.clause_name(&c), "vote(node_1,value_1) | !decision(value_2)");
    }
}
