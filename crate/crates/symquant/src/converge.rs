//! Size scheduling around the engine: prove at a finite size, check that
//! the invariant carries over to every one-step larger instance, and grow
//! the instance when it does not.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::engine::{prove, EngineConfig, EngineError, EngineStats, InductiveInvariant, ProveOutcome, TraceCex};
use crate::ground::{build_instance, GroundError, GroundFormula, SizeAssignment};
use crate::quantinfer::expand;
use crate::solver::{Assumption, SolverSession, LABEL_INIT, LABEL_TRANS};
use crate::spec::{Formula, ProtocolSpec, RelationRole, SortKind, Term, MEMBER};

#[derive(Debug, thiserror::Error)]
pub enum ConvergeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug)]
pub struct ConvergeConfig {
    pub engine: EngineConfig,
    /// Largest instance, in ground state variables, the loop may build.
    pub max_vars: usize,
    pub max_iterations: usize,
    pub emit_unbounded: Option<PathBuf>,
    /// Run the emitted unbounded check with the solver command.
    pub check_unbounded: bool,
    pub unbounded_timeout: Duration,
}

impl ConvergeConfig {
    pub fn new(engine: EngineConfig) -> Self {
        ConvergeConfig {
            engine,
            max_vars: crate::ground::MAX_STATE_VARS,
            max_iterations: 16,
            emit_unbounded: None,
            check_unbounded: false,
            unbounded_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CutoffResult {
    Pass,
    /// Growing `sort` by one breaks the named check.
    Fail {
        sort: String,
        check: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnboundedStatus {
    NotRun,
    Confirmed,
    /// Unknown, timeout or solver failure; carries the reason.
    NotConfirmed(String),
    /// The named goal was satisfiable.
    Refuted(String),
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Verdict {
    Safe {
        invariant: InductiveInvariant,
        cutoff: SizeAssignment,
        history: Vec<SizeAssignment>,
        unbounded: UnboundedStatus,
        stats: EngineStats,
    },
    Violated {
        trace: TraceCex,
        sizes: SizeAssignment,
        history: Vec<SizeAssignment>,
        stats: EngineStats,
    },
    ResourcesExhausted {
        reason: String,
        history: Vec<SizeAssignment>,
        stats: EngineStats,
    },
}

/// Two per independent sort, or one when the safety property binds a
/// single variable of that sort.
pub fn default_base_sizes(spec: &ProtocolSpec) -> SizeAssignment {
    let mut out = SizeAssignment::new();
    for s in spec.independent_sorts() {
        let mut bound = 0;
        spec.safety.walk(&mut |f| {
            if let Formula::Forall(bs, _) | Formula::Exists(bs, _) = f {
                bound += bs.iter().filter(|b| b.sort == s.name).count();
            }
        });
        out.set(&s.name, if bound == 1 { 1 } else { 2 });
    }
    out
}

fn base_of(spec: &ProtocolSpec, sort: &str) -> String {
    match spec.sort(sort).map(|s| &s.kind) {
        Some(SortKind::Majority { base }) => base.clone(),
        _ => sort.to_string(),
    }
}

/// Checks initiation and consecution of `inv` at every instance one larger
/// than `sizes` in a single independent sort.
pub fn check_cutoff(
    inv: &InductiveInvariant,
    spec: &ProtocolSpec,
    sizes: &SizeAssignment,
    cfg: &ConvergeConfig,
) -> Result<CutoffResult, ConvergeError> {
    let sorts: Vec<String> = spec.independent_sorts().map(|s| s.name.clone()).collect();
    let results: Vec<Result<Option<&'static str>, ConvergeError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sorts
            .iter()
            .map(|s| {
                let bigger = sizes.with(s, sizes.get(s).unwrap_or(1) + 1);
                scope.spawn(move || check_at(inv, spec, &bigger, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cutoff worker panicked"))
            .collect()
    });
    for (s, r) in sorts.iter().zip(results) {
        if let Some(check) = r? {
            return Ok(CutoffResult::Fail { sort: s.clone(), check });
        }
    }
    Ok(CutoffResult::Pass)
}

/// The first failing check of `inv` at `sizes`, if any.
fn check_at(
    inv: &InductiveInvariant,
    spec: &ProtocolSpec,
    sizes: &SizeAssignment,
    cfg: &ConvergeConfig,
) -> Result<Option<&'static str>, ConvergeError> {
    let inst = build_instance(spec, sizes)?;
    if inst.num_state() > cfg.max_vars {
        return Err(EngineError::ResourcesExhausted(format!(
            "instance {sizes} has {} state variables, above the limit {}",
            inst.num_state(),
            cfg.max_vars
        ))
        .into());
    }
    let g = inv.ground(&inst)?;
    let mut s = SolverSession::open(&inst, &cfg.engine.solver).map_err(EngineError::from)?;
    let init = [
        Assumption::label(LABEL_INIT),
        Assumption::Formula(GroundFormula::not(g.clone())),
    ];
    if !s.check_known(&init).map_err(EngineError::from)?.is_unsat() {
        return Ok(Some("initiation"));
    }
    let step = [
        Assumption::label(LABEL_TRANS),
        Assumption::Formula(g.clone()),
        Assumption::Formula(GroundFormula::not(g.to_next())),
    ];
    if !s.check_known(&step).map_err(EngineError::from)?.is_unsat() {
        return Ok(Some("consecution"));
    }
    Ok(None)
}

/// Sort to grow when some lemma is only valid at the current size.
fn non_compact_sort(inv: &InductiveInvariant, spec: &ProtocolSpec) -> Option<String> {
    for l in &inv.lemmas {
        if let Some(s) = l.fallback_sorts.iter().next() {
            return Some(base_of(spec, s));
        }
        if l.explicit {
            let mut sorts = BTreeSet::new();
            l.body.walk(&mut |f| {
                let terms: Vec<&Term> = match f {
                    Formula::App { args, .. } => args.iter().collect(),
                    Formula::Member { elem, set } => vec![elem, set],
                    Formula::Eq(a, b) => vec![a, b],
                    Formula::Distinct(ts) => ts.iter().collect(),
                    _ => vec![],
                };
                for t in terms {
                    if let Term::Const { sort, .. } = t {
                        sorts.insert(base_of(spec, sort));
                    }
                }
            });
            if let Some(first) = spec.independent_sorts().find(|s| sorts.contains(&s.name)) {
                return Some(first.name.clone());
            }
        }
    }
    None
}

fn exhausted(reason: String, history: Vec<SizeAssignment>, stats: EngineStats) -> Verdict {
    warn!("{reason}");
    Verdict::ResourcesExhausted { reason, history, stats }
}

/// Proves at `base`, growing one sort at a time until the invariant passes
/// the cutoff checks or a counterexample appears.
pub fn run(spec: &ProtocolSpec, base: &SizeAssignment, cfg: &ConvergeConfig) -> Result<Verdict, ConvergeError> {
    let mut sizes = base.clone();
    let mut history = vec![sizes.clone()];
    let mut reuse = Vec::new();
    let mut stats = EngineStats::default();
    let started = Instant::now();
    for _ in 0..cfg.max_iterations {
        let inst = match build_instance(spec, &sizes) {
            Ok(i) => i,
            Err(e @ GroundError::TooLarge { .. }) => return Ok(exhausted(e.to_string(), history, stats)),
            Err(e) => return Err(e.into()),
        };
        if inst.num_state() > cfg.max_vars {
            let reason = format!(
                "instance {sizes} has {} state variables, above the limit {}",
                inst.num_state(),
                cfg.max_vars
            );
            return Ok(exhausted(reason, history, stats));
        }
        info!("proving at {sizes} ({} state variables)", inst.num_state());
        let outcome = match prove(&inst, &reuse, &cfg.engine) {
            Ok(o) => o,
            Err(EngineError::ResourcesExhausted(r)) => return Ok(exhausted(r, history, stats)),
            Err(e) => return Err(e.into()),
        };
        let inv = match outcome {
            ProveOutcome::Violated(trace) => {
                stats.absorb(&trace.stats);
                stats.time = started.elapsed();
                return Ok(Verdict::Violated {
                    trace,
                    sizes,
                    history,
                    stats,
                });
            }
            ProveOutcome::Safe(inv) => inv,
        };
        stats.absorb(&inv.stats);
        let grow = match non_compact_sort(&inv, spec) {
            Some(s) => {
                info!("invariant at {sizes} is size specific in sort {s}");
                Some(s)
            }
            None => match check_cutoff(&inv, spec, &sizes, cfg) {
                Ok(CutoffResult::Pass) => None,
                Ok(CutoffResult::Fail { sort, check }) => {
                    info!("{check} fails when {sort} grows beyond {sizes}");
                    Some(sort)
                }
                Err(ConvergeError::Engine(EngineError::ResourcesExhausted(r))) => {
                    return Ok(exhausted(r, history, stats))
                }
                Err(e) => return Err(e),
            },
        };
        let Some(sort) = grow else {
            info!("cutoff reached at {sizes}");
            let unbounded = finish_unbounded(&inv, spec, cfg)?;
            stats.time = started.elapsed();
            return Ok(Verdict::Safe {
                invariant: inv,
                cutoff: sizes,
                history,
                unbounded,
                stats,
            });
        };
        if let Some(d) = cfg.engine.deadline {
            if Instant::now() >= d {
                return Ok(exhausted("time limit reached".into(), history, stats));
            }
        }
        sizes = sizes.with(&sort, sizes.get(&sort).unwrap_or(1) + 1);
        history.push(sizes.clone());
        reuse = inv.lemmas;
    }
    Ok(exhausted(
        format!("no cutoff within {} size increases", cfg.max_iterations),
        history,
        stats,
    ))
}

fn finish_unbounded(
    inv: &InductiveInvariant,
    spec: &ProtocolSpec,
    cfg: &ConvergeConfig,
) -> Result<UnboundedStatus, ConvergeError> {
    let Some(path) = &cfg.emit_unbounded else {
        if cfg.check_unbounded {
            let text = unbounded_check(inv, spec);
            return Ok(run_unbounded(&text, &cfg.engine.solver.command, cfg.unbounded_timeout));
        }
        return Ok(UnboundedStatus::NotRun);
    };
    emit_unbounded_check(inv, spec, path)?;
    if cfg.check_unbounded {
        let text = unbounded_check(inv, spec);
        Ok(run_unbounded(&text, &cfg.engine.solver.command, cfg.unbounded_timeout))
    } else {
        Ok(UnboundedStatus::NotRun)
    }
}

pub fn emit_unbounded_check(inv: &InductiveInvariant, spec: &ProtocolSpec, path: &Path) -> Result<(), ConvergeError> {
    std::fs::write(path, unbounded_check(inv, spec)).map_err(|source| ConvergeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const GOAL_INITIATION: &str = "goal initiation";
pub const GOAL_CONSECUTION: &str = "goal consecution";

/// SMT-LIB2 text over uninterpreted sorts whose two goals are
/// unsatisfiable iff the invariant is inductive for every size.
pub fn unbounded_check(inv: &InductiveInvariant, spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "(set-option :produce-models true)");
    let _ = writeln!(w, "(set-logic UF)");
    for s in &spec.sorts {
        let _ = writeln!(w, "(declare-sort {} 0)", s.name);
    }
    for s in &spec.sorts {
        if let SortKind::Majority { base } = &s.kind {
            let m = member_symbol(&s.name);
            let _ = writeln!(w, "(declare-fun {m} ({base} {}) Bool)", s.name);
            let _ = writeln!(
                w,
                "(assert (forall ((q1 {q}) (q2 {q})) (exists ((n {base})) (and ({m} n q1) ({m} n q2)))))",
                q = s.name
            );
        }
    }
    // Constants of instance-specific predicates, pairwise distinct per sort.
    let mut consts: BTreeSet<(String, usize)> = BTreeSet::new();
    for p in inv.conjuncts() {
        p.to_formula().walk(&mut |f| collect_consts(f, &mut consts));
    }
    for (sort, i) in &consts {
        let _ = writeln!(w, "(declare-const {} {sort})", const_symbol(sort, *i));
    }
    for s in &spec.sorts {
        let names: Vec<String> = consts
            .iter()
            .filter(|(k, _)| *k == s.name)
            .map(|(k, i)| const_symbol(k, *i))
            .collect();
        if names.len() > 1 {
            let _ = writeln!(w, "(assert (distinct {}))", names.join(" "));
        }
    }
    for r in spec.state_relations() {
        for next in [false, true] {
            let _ = writeln!(
                w,
                "(declare-fun {} ({}) Bool)",
                rel_symbol(&r.name, next),
                r.arg_sorts.join(" ")
            );
        }
    }
    let p = Printer { spec };
    for r in spec.definitions() {
        if let RelationRole::Definition { params, body } = &r.role {
            let ps: Vec<String> = params.iter().map(|b| format!("({} {})", b.var, b.sort)).collect();
            for next in [false, true] {
                let _ = writeln!(
                    w,
                    "(define-fun {} ({}) Bool {})",
                    rel_symbol(&r.name, next),
                    ps.join(" "),
                    p.formula(
                        body,
                        next,
                        &mut params.iter().map(|b| (b.var.clone(), b.sort.clone())).collect()
                    )
                );
            }
        }
    }
    for a in &spec.axioms {
        let _ = writeln!(w, "(assert {})", p.closed(a, false));
        let _ = writeln!(w, "(assert {})", p.closed(a, true));
    }
    let _ = writeln!(w, "(define-fun init () Bool {})", p.closed(&spec.init, false));
    let _ = writeln!(w, "(define-fun trans () Bool {})", p.transition());
    let inv_f = Formula::and_of(inv.conjuncts().map(|c| c.to_formula()).collect());
    let _ = writeln!(w, "(define-fun inv () Bool {})", p.closed(&inv_f, false));
    let _ = writeln!(w, "(define-fun inv.next () Bool {})", p.closed(&inv_f, true));
    let _ = writeln!(w, "(push 1)");
    let _ = writeln!(w, "(echo \"{GOAL_INITIATION}\")");
    let _ = writeln!(w, "(assert (and init (not inv)))");
    let _ = writeln!(w, "(check-sat)");
    let _ = writeln!(w, "(pop 1)");
    let _ = writeln!(w, "(push 1)");
    let _ = writeln!(w, "(echo \"{GOAL_CONSECUTION}\")");
    let _ = writeln!(w, "(assert (and inv trans (not inv.next)))");
    let _ = writeln!(w, "(check-sat)");
    let _ = writeln!(w, "(pop 1)");
    out
}

fn member_symbol(dep: &str) -> String {
    format!("{MEMBER}.{dep}")
}

fn rel_symbol(rel: &str, next: bool) -> String {
    if next {
        format!("{rel}.next")
    } else {
        rel.to_string()
    }
}

fn const_symbol(sort: &str, index: usize) -> String {
    format!("|{sort}#{}|", index + 1)
}

fn collect_consts(f: &Formula, out: &mut BTreeSet<(String, usize)>) {
    let mut add = |t: &Term| {
        if let Term::Const { sort, index } = t {
            out.insert((sort.clone(), *index));
        }
    };
    match f {
        Formula::App { args, .. } => args.iter().for_each(&mut add),
        Formula::Member { elem, set } => {
            add(elem);
            add(set);
        }
        Formula::Eq(a, b) => {
            add(a);
            add(b);
        }
        Formula::Distinct(ts) => ts.iter().for_each(&mut add),
        _ => {}
    }
}

type Scope = Vec<(String, String)>;

struct Printer<'s> {
    spec: &'s ProtocolSpec,
}

impl Printer<'_> {
    fn closed(&self, f: &Formula, next: bool) -> String {
        self.formula(f, next, &mut Vec::new())
    }

    fn term(&self, t: &Term) -> String {
        match t {
            Term::Var(v) => v.clone(),
            Term::Const { sort, index } => const_symbol(sort, *index),
        }
    }

    fn sort_of(&self, t: &Term, scope: &Scope) -> String {
        match t {
            Term::Var(v) => scope
                .iter()
                .rev()
                .find(|(n, _)| n == v)
                .map(|(_, s)| s.clone())
                .unwrap_or_default(),
            Term::Const { sort, .. } => sort.clone(),
        }
    }

    /// `next` shifts every unprimed application to the next state; primed
    /// applications are always next-state.
    fn formula(&self, f: &Formula, next: bool, scope: &mut Scope) -> String {
        let list = |op: &str, xs: Vec<String>, empty: &str| -> String {
            match xs.len() {
                0 => empty.to_string(),
                1 => xs.into_iter().next().unwrap(),
                _ => format!("({op} {})", xs.join(" ")),
            }
        };
        match f {
            Formula::Bool(b) => b.to_string(),
            Formula::App { rel, primed, args } => {
                let name = if rel == MEMBER {
                    member_symbol(&self.sort_of(&args[1], scope))
                } else {
                    rel_symbol(rel, next || *primed)
                };
                if args.is_empty() {
                    name
                } else {
                    let a: Vec<String> = args.iter().map(|t| self.term(t)).collect();
                    format!("({name} {})", a.join(" "))
                }
            }
            Formula::Member { elem, set } => format!(
                "({} {} {})",
                member_symbol(&self.sort_of(set, scope)),
                self.term(elem),
                self.term(set)
            ),
            Formula::Eq(a, b) => format!("(= {} {})", self.term(a), self.term(b)),
            Formula::Distinct(ts) => {
                if ts.len() < 2 {
                    "true".into()
                } else {
                    let a: Vec<String> = ts.iter().map(|t| self.term(t)).collect();
                    format!("(distinct {})", a.join(" "))
                }
            }
            Formula::Not(a) => format!("(not {})", self.formula(a, next, scope)),
            Formula::And(xs) => list("and", xs.iter().map(|x| self.formula(x, next, scope)).collect(), "true"),
            Formula::Or(xs) => list("or", xs.iter().map(|x| self.formula(x, next, scope)).collect(), "false"),
            Formula::Implies(a, b) => format!("(=> {} {})", self.formula(a, next, scope), self.formula(b, next, scope)),
            Formula::Iff(a, b) => format!("(= {} {})", self.formula(a, next, scope), self.formula(b, next, scope)),
            Formula::Forall(bs, body) | Formula::Exists(bs, body) => {
                let q = if matches!(f, Formula::Forall(..)) {
                    "forall"
                } else {
                    "exists"
                };
                let n = scope.len();
                scope.extend(bs.iter().map(|b| (b.var.clone(), b.sort.clone())));
                let inner = self.formula(body, next, scope);
                scope.truncate(n);
                let vs: Vec<String> = bs.iter().map(|b| format!("({} {})", b.var, b.sort)).collect();
                format!("({q} ({}) {inner})", vs.join(" "))
            }
        }
    }

    fn transition(&self) -> String {
        let mut disjuncts = Vec::new();
        for a in &self.spec.actions {
            let mut scope: Scope = a.params.iter().map(|b| (b.var.clone(), b.sort.clone())).collect();
            let mut parts = vec![self.formula(&a.guard, false, &mut scope)];
            for u in &a.updates {
                parts.push(self.formula(&u.formula, false, &mut scope));
            }
            for r in self.spec.state_relations() {
                if a.updates.iter().any(|u| u.relation == r.name) {
                    continue;
                }
                let vars: Vec<String> = (0..r.arg_sorts.len()).map(|i| format!("x{i}")).collect();
                let app = |name: String| {
                    if vars.is_empty() {
                        name
                    } else {
                        format!("({name} {})", vars.join(" "))
                    }
                };
                let eq = format!(
                    "(= {} {})",
                    app(rel_symbol(&r.name, true)),
                    app(rel_symbol(&r.name, false))
                );
                if vars.is_empty() {
                    parts.push(eq);
                } else {
                    let bs: Vec<String> = vars
                        .iter()
                        .zip(&r.arg_sorts)
                        .map(|(v, s)| format!("({v} {s})"))
                        .collect();
                    parts.push(format!("(forall ({}) {eq})", bs.join(" ")));
                }
            }
            let body = format!("(and {})", parts.join(" "));
            if a.params.is_empty() {
                disjuncts.push(body);
            } else {
                let bs: Vec<String> = a.params.iter().map(|b| format!("({} {})", b.var, b.sort)).collect();
                disjuncts.push(format!("(exists ({}) {body})", bs.join(" ")));
            }
        }
        match disjuncts.len() {
            0 => "false".into(),
            1 => disjuncts.pop().unwrap(),
            _ => format!("(or {})", disjuncts.join(" ")),
        }
    }
}

/// Runs the unbounded check through `command`, killing it after `timeout`.
pub fn run_unbounded(text: &str, command: &[String], timeout: Duration) -> UnboundedStatus {
    let Some((program, args)) = command.split_first() else {
        return UnboundedStatus::NotConfirmed("no solver command".into());
    };
    let mut child = match Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return UnboundedStatus::NotConfirmed(format!("cannot start `{}`: {e}", command.join(" "))),
    };
    if let Some(mut stdin) = child.stdin.take() {
        let _ = stdin.write_all(text.as_bytes());
        let _ = stdin.write_all(b"(exit)\n");
    }
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(10)),
            _ => {
                let _ = child.kill();
                let _ = child.wait();
                return UnboundedStatus::NotConfirmed(format!("no answer within {timeout:?}"));
            }
        }
    }
    let mut output = String::new();
    if let Some(mut out) = child.stdout.take() {
        let _ = out.read_to_string(&mut output);
    }
    classify_unbounded(&output)
}

/// Reads the answers following the two goal echoes.
pub fn classify_unbounded(output: &str) -> UnboundedStatus {
    let lines: Vec<&str> = output.lines().map(str::trim).collect();
    let mut pending = Vec::new();
    for goal in [GOAL_INITIATION, GOAL_CONSECUTION] {
        let answer = lines
            .iter()
            .position(|l| l.trim_matches('"') == goal)
            .and_then(|i| lines.get(i + 1))
            .copied()
            .unwrap_or("");
        match answer {
            "unsat" => {}
            "sat" => return UnboundedStatus::Refuted(goal.to_string()),
            other => pending.push(format!(
                "{goal}: {}",
                if other.is_empty() { "no answer" } else { other }
            )),
        }
    }
    if pending.is_empty() {
        UnboundedStatus::Confirmed
    } else {
        UnboundedStatus::NotConfirmed(pending.join("; "))
    }
}

/// Ground expansion of `inv` plus safety at `sizes`, for external checks.
pub fn ground_invariant_at(
    inv: &InductiveInvariant,
    spec: &ProtocolSpec,
    sizes: &SizeAssignment,
) -> Result<GroundFormula, ConvergeError> {
    let inst = build_instance(spec, sizes)?;
    Ok(GroundFormula::and(
        inv.conjuncts()
            .map(|p| expand(p, &inst))
            .collect::<Result<Vec<_>, _>>()?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::quantinfer::{sym_boost, QuantifiedPredicate};
    use crate::solver::SolverConfig;
    use crate::spec::load_spec;

    fn cfg() -> ConvergeConfig {
        ConvergeConfig::new(EngineConfig::new(SolverConfig::from_env_or("z3 -in")))
    }

    fn sizes(n: usize, v: usize) -> SizeAssignment {
        SizeAssignment::from_pairs([("node", n), ("value", v)])
    }

    #[test]
    fn toy_consensus_reaches_cutoff_at_base_size() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg();
        c.emit_unbounded = Some(dir.path().join("unbounded.smt2"));
        c.check_unbounded = true;
        let Verdict::Safe {
            invariant,
            cutoff,
            history,
            unbounded,
            ..
        } = run(&spec, &sizes(3, 3), &c).unwrap()
        else {
            panic!("expected safe")
        };
        assert_eq!(cutoff, sizes(3, 3));
        assert_eq!(history, vec![sizes(3, 3)]);
        assert_eq!(invariant.lemmas.len(), 2);
        assert_eq!(unbounded, UnboundedStatus::Confirmed);
        let text = std::fs::read_to_string(dir.path().join("unbounded.smt2")).unwrap();
        assert_eq!(text.matches("(check-sat)").count(), 2);
        assert!(text.contains("exists"));
    }

    #[test]
    fn toy_consensus_grows_from_small_sizes() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let Verdict::Safe { cutoff, history, .. } = run(&spec, &sizes(2, 2), &cfg()).unwrap() else {
            panic!("expected safe")
        };
        assert!(cutoff.get("node").unwrap() >= 3, "{cutoff}");
        for w in history.windows(2) {
            let grown: Vec<_> = w[1]
                .iter()
                .filter(|(k, v)| w[0].get(k) != Some(*v))
                .map(|(k, v)| (k.to_string(), v - w[0].get(k).unwrap()))
                .collect();
            assert_eq!(grown.len(), 1);
            assert_eq!(grown[0].1, 1);
        }
    }

    #[test]
    fn size_specific_invariant_fails_cutoff() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let c = cfg();
        let Verdict::Safe { invariant, .. } = run(&spec, &sizes(3, 3), &c).unwrap() else {
            panic!()
        };
        // Replace A2 by the explicit disjunction over the three quorums of size 3.
        let inst = build_instance(&spec, &sizes(3, 3)).unwrap();
        let mut pinned = invariant.clone();
        let j = pinned.lemmas.iter().position(|l| l.has_forall_exists()).unwrap();
        let origin = pinned.origins[j].clone().unwrap();
        let phi = sym_boost(&origin, &inst);
        assert!(phi.is_compact());
        let explicit_text = "(forall ((V value)) (or (not (decision V)) (chosenAt quorum#1 V) (chosenAt quorum#2 V) (chosenAt quorum#3 V)))";
        pinned.lemmas[j] = QuantifiedPredicate::from_formula(crate::spec::parse_formula(&spec, explicit_text).unwrap());
        assert_eq!(check_at(&pinned, &spec, &sizes(3, 3), &c).unwrap(), None);
        assert_eq!(
            check_cutoff(&pinned, &spec, &sizes(3, 3), &c).unwrap(),
            CutoffResult::Fail {
                sort: "node".into(),
                check: "consecution"
            }
        );
        // A1 written out over the three values misses pairs with a fourth.
        let mut pinned = invariant.clone();
        let j = pinned.lemmas.iter().position(|l| !l.has_forall_exists()).unwrap();
        let explicit_text = "(forall ((N node)) (and (or (not (vote N value#1)) (not (vote N value#2))) \
            (or (not (vote N value#1)) (not (vote N value#3))) (or (not (vote N value#2)) (not (vote N value#3)))))";
        pinned.lemmas[j] = QuantifiedPredicate::from_formula(crate::spec::parse_formula(&spec, explicit_text).unwrap());
        assert_eq!(check_at(&pinned, &spec, &sizes(3, 3), &c).unwrap(), None);
        assert_eq!(
            check_cutoff(&pinned, &spec, &sizes(3, 3), &c).unwrap(),
            CutoffResult::Fail {
                sort: "value".into(),
                check: "consecution"
            }
        );
    }

    #[test]
    fn no_independent_sorts_pass_vacuously() {
        let spec =
            load_spec("(relation on ()) (init (not (on))) (action Stay () :guard true :update ()) (safety (not (on)))")
                .unwrap();
        let base = SizeAssignment::new();
        let Verdict::Safe { cutoff, .. } = run(&spec, &base, &cfg()).unwrap() else {
            panic!()
        };
        assert_eq!(cutoff, base);
    }

    #[test]
    fn unsafe_spec_is_violated_without_growth() {
        let spec = load_spec(corpus::TOY_CONSENSUS)
            .unwrap()
            .drop_guard("CastVote")
            .unwrap();
        let Verdict::Violated { sizes: at, history, .. } = run(&spec, &sizes(3, 3), &cfg()).unwrap() else {
            panic!()
        };
        assert_eq!(at, sizes(3, 3));
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        let inv = InductiveInvariant {
            lemmas: vec![],
            safety: QuantifiedPredicate::from_formula(spec.safety.clone()),
            sizes: sizes(1, 1),
            stats: Default::default(),
            origins: vec![],
        };
        let err = emit_unbounded_check(&inv, &spec, Path::new("/nonexistent/dir/out.smt2")).unwrap_err();
        assert!(matches!(err, ConvergeError::Io { .. }));
    }

    #[test]
    fn base_size_heuristic() {
        let toy = load_spec(corpus::TOY_CONSENSUS).unwrap();
        assert_eq!(default_base_sizes(&toy).to_string(), "node=2,value=2");
        let lock = load_spec(corpus::LOCK_SERVER).unwrap();
        assert_eq!(default_base_sizes(&lock).to_string(), "client=2,server=1");
    }

    #[test]
    fn unbounded_answers_are_classified() {
        let ok = "goal initiation\nunsat\ngoal consecution\nunsat\n";
        assert_eq!(classify_unbounded(ok), UnboundedStatus::Confirmed);
        let bad = "goal initiation\nunsat\ngoal consecution\nsat\n";
        assert_eq!(
            classify_unbounded(bad),
            UnboundedStatus::Refuted(GOAL_CONSECUTION.into())
        );
        assert!(matches!(classify_unbounded(""), UnboundedStatus::NotConfirmed(_)));
    }
}
