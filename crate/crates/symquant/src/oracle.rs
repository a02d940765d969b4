//! Explicit-state ground truth for tiny instances: breadth-first
//! reachability over a dense bitset, exhaustive invariant checks, trace
//! replay, and a direct evaluator for spec formulas that bypasses grounding.

use std::collections::VecDeque;

use crate::engine::TraceCex;
use crate::ground::{tuples, AtomRef, FiniteInstance, GroundFormula};
use crate::spec::{Formula, Ident, RelationRole, Term, MEMBER};

/// Largest number of state variables the oracle enumerates.
pub const MAX_ORACLE_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("instance has {vars} state variables, the explicit-state limit is {cap}")]
    TooLarge { vars: usize, cap: usize },
}

fn guard_size(inst: &FiniteInstance) -> Result<usize, OracleError> {
    let v = inst.num_state();
    if v > MAX_ORACLE_VARS {
        Err(OracleError::TooLarge {
            vars: v,
            cap: MAX_ORACLE_VARS,
        })
    } else {
        Ok(v)
    }
}

pub fn encode(state: &[bool]) -> u64 {
    state
        .iter()
        .enumerate()
        .fold(0, |acc, (i, b)| if *b { acc | (1 << i) } else { acc })
}

pub fn decode(code: u64, vars: usize) -> Vec<bool> {
    (0..vars).map(|i| code >> i & 1 == 1).collect()
}

/// Reachable states of an instance as a bitset over `2^V` encodings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    vars: usize,
    bits: Vec<u64>,
    count: u64,
    pub initial: u64,
}

impl StateSpace {
    fn empty(vars: usize) -> Self {
        let words = ((1u64 << vars) as usize).div_ceil(64);
        StateSpace {
            vars,
            bits: vec![0; words],
            count: 0,
            initial: 0,
        }
    }

    fn insert(&mut self, code: u64) -> bool {
        let (w, b) = ((code / 64) as usize, code % 64);
        let fresh = self.bits[w] >> b & 1 == 0;
        if fresh {
            self.bits[w] |= 1 << b;
            self.count += 1;
        }
        fresh
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn contains(&self, code: u64) -> bool {
        self.bits[(code / 64) as usize] >> (code % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn states(&self) -> impl Iterator<Item = u64> + '_ {
        (0..1u64 << self.vars).filter(|c| self.contains(*c))
    }
}

/// Enumerates the assignments to `frame` atoms satisfying a state-only
/// formula whose other frame is already substituted away.
fn models(f: &GroundFormula, next: bool, vars: usize, out: &mut Vec<u64>) {
    fn go(f: &GroundFormula, next: bool, vars: usize, fixed: &mut Vec<Option<bool>>, out: &mut Vec<u64>) {
        match f.is_const() {
            Some(false) => {}
            Some(true) => {
                let free: Vec<usize> = (0..vars).filter(|i| fixed[*i].is_none()).collect();
                let base: u64 = (0..vars)
                    .filter(|i| fixed[*i] == Some(true))
                    .fold(0, |acc, i| acc | 1 << i);
                for combo in 0..1u64 << free.len() {
                    let extra = free
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| combo >> j & 1 == 1)
                        .fold(0, |acc, (_, i)| acc | 1 << i);
                    out.push(base | extra);
                }
            }
            None => {
                let pick = f
                    .atoms()
                    .into_iter()
                    .find(|r| r.next == next)
                    .expect("non-constant formula mentions an atom");
                for b in [false, true] {
                    fixed[pick.atom as usize] = Some(b);
                    let g = f.substitute(&|r: AtomRef| (r == pick).then_some(b));
                    go(&g, next, vars, fixed, out);
                }
                fixed[pick.atom as usize] = None;
            }
        }
    }
    go(f, next, vars, &mut vec![None; vars], out);
}

/// Transition relation per ground action instance, with definitions inlined.
struct Successors<'a> {
    inst: &'a FiniteInstance,
    vars: usize,
    actions: Vec<GroundFormula>,
}

impl<'a> Successors<'a> {
    fn new(inst: &'a FiniteInstance) -> Self {
        Successors {
            inst,
            vars: inst.num_state(),
            actions: inst.transitions.iter().map(|t| inst.inline_aux(&t.formula)).collect(),
        }
    }

    fn of(&self, code: u64) -> Vec<u64> {
        let cur = decode(code, self.vars);
        let mut out = Vec::new();
        for t in &self.actions {
            let g = t.substitute(&|r: AtomRef| (!r.next).then(|| cur[r.atom as usize]));
            models(&g, true, self.vars, &mut out);
        }
        out.retain(|s| self.inst.eval_state(&self.inst.axioms, &decode(*s, self.vars)));
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn initial_states(inst: &FiniteInstance) -> Vec<u64> {
    let vars = inst.num_state();
    let f = inst.inline_aux(&GroundFormula::and([inst.init.clone(), inst.axioms.clone()]));
    let mut out = Vec::new();
    models(&f, false, vars, &mut out);
    out.sort_unstable();
    out.dedup();
    out
}

/// Exact reachable set by breadth-first search.
pub fn bfs_reach(inst: &FiniteInstance) -> Result<StateSpace, OracleError> {
    let vars = guard_size(inst)?;
    let succ = Successors::new(inst);
    let mut space = StateSpace::empty(vars);
    let mut queue = VecDeque::new();
    for s in initial_states(inst) {
        if space.insert(s) {
            queue.push_back(s);
        }
    }
    space.initial = space.count;
    while let Some(s) = queue.pop_front() {
        for t in succ.of(s) {
            if space.insert(t) {
                queue.push_back(t);
            }
        }
    }
    Ok(space)
}

/// First reachable state violating safety, if any.
pub fn find_violation(inst: &FiniteInstance, space: &StateSpace) -> Option<Vec<bool>> {
    space
        .states()
        .map(|c| decode(c, space.vars))
        .find(|s| !eval_formula(inst, &inst.spec.safety, s, s))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InvariantCheck {
    Holds,
    NotInitial(Vec<bool>),
    NotSafe(Vec<bool>),
    NotClosed(Vec<bool>, Vec<bool>),
}

/// Exhaustively checks that the conjunction of `inv` contains the initial
/// states, implies safety and is closed under transitions.
pub fn check_invariant_explicit(inst: &FiniteInstance, inv: &[Formula]) -> Result<InvariantCheck, OracleError> {
    let vars = guard_size(inst)?;
    let holds = |s: &[bool]| inv.iter().all(|f| eval_formula(inst, f, s, s));
    for c in initial_states(inst) {
        let s = decode(c, vars);
        if !holds(&s) {
            return Ok(InvariantCheck::NotInitial(s));
        }
    }
    let succ = Successors::new(inst);
    for c in 0..1u64 << vars {
        let s = decode(c, vars);
        if !eval_axioms(inst, &s) || !holds(&s) {
            continue;
        }
        if !eval_formula(inst, &inst.spec.safety, &s, &s) {
            return Ok(InvariantCheck::NotSafe(s));
        }
        for t in succ.of(c) {
            let t = decode(t, vars);
            if !holds(&t) {
                return Ok(InvariantCheck::NotClosed(s, t));
            }
        }
    }
    Ok(InvariantCheck::Holds)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Replay {
    Valid,
    /// Index of the first state that breaks the trace: a non-initial first
    /// state, a state not reachable in one step from its predecessor, or
    /// (at index `len`) a final state that satisfies safety.
    BrokenAt(usize),
}

/// Checks a counterexample against the protocol semantics directly.
pub fn replay(trace: &TraceCex, inst: &FiniteInstance) -> Replay {
    let mut states = Vec::new();
    for (i, c) in trace.states.iter().enumerate() {
        match inst.cube_state(c).into_iter().collect::<Option<Vec<bool>>>() {
            Some(s) => states.push(s),
            None => return Replay::BrokenAt(i),
        }
    }
    let Some(first) = states.first() else {
        return Replay::BrokenAt(0);
    };
    if !eval_axioms(inst, first) || !eval_formula(inst, &inst.spec.init, first, first) {
        return Replay::BrokenAt(0);
    }
    for i in 1..states.len() {
        if !spec_step(inst, &states[i - 1], &states[i]) {
            return Replay::BrokenAt(i);
        }
    }
    let last = states.last().unwrap();
    if eval_formula(inst, &inst.spec.safety, last, last) {
        return Replay::BrokenAt(states.len());
    }
    Replay::Valid
}

fn eval_axioms(inst: &FiniteInstance, s: &[bool]) -> bool {
    inst.spec.axioms.iter().all(|a| eval_formula(inst, a, s, s))
}

/// Whether some action instance leads from `cur` to `next`, evaluated on
/// the protocol's actions with the implicit frame condition.
pub fn spec_step(inst: &FiniteInstance, cur: &[bool], next: &[bool]) -> bool {
    if !eval_axioms(inst, next) {
        return false;
    }
    let vocab = &inst.vocab;
    inst.spec.actions.iter().any(|a| {
        let dims: Vec<usize> = a
            .params
            .iter()
            .map(|b| vocab.sorts[vocab.sort_id(&b.sort).unwrap()].size())
            .collect();
        let unchanged = inst.spec.state_relations().all(|r| {
            if a.updates.iter().any(|u| u.relation == r.name) {
                return true;
            }
            let p = &vocab.preds[vocab.pred_id(&r.name).unwrap()];
            (p.offset..p.offset + p.count).all(|i| cur[i] == next[i])
        });
        unchanged
            && tuples(&dims).into_iter().any(|args| {
                let mut env: Env = a
                    .params
                    .iter()
                    .zip(&args)
                    .map(|(b, c)| (b.var.clone(), vocab.sort_id(&b.sort).unwrap(), *c))
                    .collect();
                eval(inst, &a.guard, cur, next, &mut env)
                    && a.updates.iter().all(|u| eval(inst, &u.formula, cur, next, &mut env))
            })
    })
}

type Env = Vec<(Ident, usize, usize)>;

/// Evaluates a closed spec formula over a pair of state valuations by
/// recursion on its syntax, quantifying over the instance's constants.
pub fn eval_formula(inst: &FiniteInstance, f: &Formula, cur: &[bool], next: &[bool]) -> bool {
    eval(inst, f, cur, next, &mut Vec::new())
}

fn term(inst: &FiniteInstance, t: &Term, env: &Env) -> (usize, usize) {
    match t {
        Term::Var(v) => {
            let (_, s, c) = env
                .iter()
                .rev()
                .find(|(n, _, _)| n == v)
                .unwrap_or_else(|| panic!("unbound variable {v}"));
            (*s, *c)
        }
        Term::Const { sort, index } => (inst.vocab.sort_id(sort).expect("known sort"), *index),
    }
}

fn eval(inst: &FiniteInstance, f: &Formula, cur: &[bool], next: &[bool], env: &mut Env) -> bool {
    let vocab = &inst.vocab;
    match f {
        Formula::Bool(b) => *b,
        Formula::Member { elem, set } => {
            let (_, e) = term(inst, elem, env);
            let (s, q) = term(inst, set, env);
            vocab.sorts[s].constants[q].members.contains(&e)
        }
        Formula::App { rel, primed, args } => {
            let vals: Vec<usize> = args.iter().map(|a| term(inst, a, env).1).collect();
            if rel == MEMBER {
                let q = term(inst, &args[1], env).0;
                return vocab.sorts[q].constants[vals[1]].members.contains(&vals[0]);
            }
            let decl = inst
                .spec
                .relation(rel)
                .unwrap_or_else(|| panic!("unknown relation {rel}"));
            let frame = if *primed { next } else { cur };
            match &decl.role {
                RelationRole::State => frame[vocab.atom_id(vocab.pred_id(rel).unwrap(), &vals) as usize],
                RelationRole::Definition { params, body } => {
                    let mut inner: Env = params
                        .iter()
                        .zip(&vals)
                        .map(|(b, c)| (b.var.clone(), vocab.sort_id(&b.sort).unwrap(), *c))
                        .collect();
                    eval(inst, body, frame, frame, &mut inner)
                }
                RelationRole::Membership { .. } => unreachable!("membership is not looked up by name"),
            }
        }
        Formula::Eq(a, b) => term(inst, a, env).1 == term(inst, b, env).1,
        Formula::Distinct(ts) => {
            let vals: Vec<usize> = ts.iter().map(|t| term(inst, t, env).1).collect();
            (0..vals.len()).all(|i| (i + 1..vals.len()).all(|j| vals[i] != vals[j]))
        }
        Formula::Not(a) => !eval(inst, a, cur, next, env),
        Formula::And(xs) => xs.iter().all(|x| eval(inst, x, cur, next, env)),
        Formula::Or(xs) => xs.iter().any(|x| eval(inst, x, cur, next, env)),
        Formula::Implies(a, b) => !eval(inst, a, cur, next, env) || eval(inst, b, cur, next, env),
        Formula::Iff(a, b) => eval(inst, a, cur, next, env) == eval(inst, b, cur, next, env),
        Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
            let universal = matches!(f, Formula::Forall(..));
            let sorts: Vec<usize> = bs.iter().map(|b| vocab.sort_id(&b.sort).expect("known sort")).collect();
            let dims: Vec<usize> = sorts.iter().map(|s| vocab.sorts[*s].size()).collect();
            let n = env.len();
            let mut result = universal;
            for args in tuples(&dims) {
                env.truncate(n);
                env.extend(
                    bs.iter()
                        .zip(&sorts)
                        .zip(&args)
                        .map(|((b, s), c)| (b.var.clone(), *s, *c)),
                );
                if eval(inst, body, cur, next, env) != universal {
                    result = !universal;
                    break;
                }
            }
            env.truncate(n);
            result
        }
    }
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

    #[test]
    fn toy_consensus_reachable_states_are_safe() {
        let inst = toy(3, 3);
        let space = bfs_reach(&inst).unwrap();
        assert_eq!(space.vars(), 12);
        assert_eq!(space.initial, 1);
        assert!(space.count() > 1 && space.count() < 4096);
        assert_eq!(find_violation(&inst, &space), None);
    }

    #[test]
    fn free_system_reaches_everything() {
        let text = "(sort s) (relation r (s)) (init true) \
                    (action Stay () :guard true :update ()) (safety true)";
        let spec = load_spec(text).unwrap();
        let inst = build_instance(&spec, &SizeAssignment::from_pairs([("s", 3)])).unwrap();
        let space = bfs_reach(&inst).unwrap();
        assert_eq!(space.count(), 8);
        assert_eq!(space.initial, 8);
    }

    #[test]
    fn too_many_variables_is_refused() {
        // 5 nodes and 5 values give 25 votes and 5 decisions.
        let inst = toy(5, 5);
        assert!(matches!(
            bfs_reach(&inst),
            Err(OracleError::TooLarge { vars: 30, cap: 24 })
        ));
    }

    #[test]
    fn safety_alone_is_not_inductive() {
        let inst = toy(3, 3);
        let p = inst.spec.safety.clone();
        match check_invariant_explicit(&inst, &[p]).unwrap() {
            InvariantCheck::NotClosed(s, t) => {
                assert!(eval_formula(&inst, &inst.spec.safety, &s, &s));
                assert!(!eval_formula(&inst, &inst.spec.safety, &t, &t));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strengthened_safety_is_inductive() {
        let inst = toy(3, 3);
        let a1 = parse_formula(
            &inst.spec,
            "(forall ((N node) (V1 value) (V2 value)) (=> (distinct V1 V2) (or (not (vote N V1)) (not (vote N V2)))))",
        )
        .unwrap();
        let a2 = parse_formula(
            &inst.spec,
            "(forall ((V value)) (exists ((Q quorum)) (or (not (decision V)) (chosenAt Q V))))",
        )
        .unwrap();
        let inv = [a1, a2, inst.spec.safety.clone()];
        assert_eq!(check_invariant_explicit(&inst, &inv).unwrap(), InvariantCheck::Holds);
        let trivial =
            load_spec("(sort s) (relation r (s)) (init true) (action A () :guard true :update ()) (safety true)")
                .unwrap();
        let inst = build_instance(&trivial, &SizeAssignment::from_pairs([("s", 2)])).unwrap();
        assert_eq!(
            check_invariant_explicit(&inst, &[Formula::Bool(true)]).unwrap(),
            InvariantCheck::Holds
        );
    }

    #[test]
    fn spec_step_agrees_with_ground_transitions() {
        let inst = toy(2, 2);
        let succ = Successors::new(&inst);
        let v = inst.num_state();
        for c in 0..1u64 << v {
            let s = decode(c, v);
            let ground = succ.of(c);
            for d in 0..1u64 << v {
                let t = decode(d, v);
                assert_eq!(spec_step(&inst, &s, &t), ground.binary_search(&d).is_ok(), "{c} -> {d}");
                assert_eq!(spec_step(&inst, &s, &t), inst.eval_step(&inst.trans, &s, &t));
            }
        }
    }

    #[test]
    fn replay_rejects_broken_traces() {
        let inst = toy(2, 1);
        let cube = |s: &[bool]| {
            inst.state_as_cube(&s.iter().map(|b| Some(*b)).collect::<Vec<_>>())
                .unwrap()
        };
        let empty = TraceCex {
            states: vec![],
            stats: Default::default(),
        };
        assert_eq!(replay(&empty, &inst), Replay::BrokenAt(0));
        // vote(n1,v1) & vote(n2,v1) & decision(v1) appears out of nowhere.
        let teleport = TraceCex {
            states: vec![cube(&[false, false, false]), cube(&[true, true, true])],
            stats: Default::default(),
        };
        assert_eq!(replay(&teleport, &inst), Replay::BrokenAt(1));
    }
}
