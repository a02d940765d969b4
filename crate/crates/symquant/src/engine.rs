//! Incremental induction over one finite instance where every blocked
//! cube is generalized to its whole symmetry orbit before it is learned.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ground::{FiniteInstance, Frame, GroundClause, GroundCube, GroundError, GroundFormula, SizeAssignment};
use crate::quantinfer::{
    antecedent_reduction, epr_reduction, expand, sym_boost, AlternationGraph, FrameOracle, QuantifiedPredicate,
};
use crate::solver::{
    minimal_unsat_core_with, Assumption, SolverConfig, SolverError, SolverResult, SolverSession, LABEL_BAD,
    LABEL_BAD_NEXT, LABEL_INIT, LABEL_SAFE, LABEL_TRANS,
};
use crate::symmetry::SymmetryGroup;

pub const DEFAULT_MAX_FRAMES: usize = 100;
/// Group elements sampled per learned clause by the orbit audit.
pub const AUDIT_SAMPLES: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error("resources exhausted: {0}")]
    ResourcesExhausted(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub solver: SolverConfig,
    pub max_frames: usize,
    pub max_ctis: Option<u64>,
    pub deadline: Option<Instant>,
    pub antecedent_reduction: bool,
    pub epr_reduction: bool,
    /// Re-check every blocking query under random group elements.
    pub orbit_audit: bool,
    pub audit_seed: u64,
    /// Greedily drop lemmas that the rest of the invariant makes redundant.
    pub minimize_invariant: bool,
}

impl EngineConfig {
    pub fn new(solver: SolverConfig) -> Self {
        EngineConfig {
            solver,
            max_frames: DEFAULT_MAX_FRAMES,
            max_ctis: None,
            deadline: None,
            antecedent_reduction: false,
            epr_reduction: false,
            orbit_audit: false,
            audit_seed: 1,
            minimize_invariant: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub frames: usize,
    pub ctis: u64,
    pub smt_checks: u64,
    pub learned: usize,
    /// Blocked cubes generalized to a minimal core.
    pub generalized: u64,
    pub audit_checks: u64,
    pub audit_failures: u64,
    pub time: Duration,
}

impl EngineStats {
    pub fn absorb(&mut self, other: &EngineStats) {
        self.frames += other.frames;
        self.ctis += other.ctis;
        self.smt_checks += other.smt_checks;
        self.learned += other.learned;
        self.generalized += other.generalized;
        self.audit_checks += other.audit_checks;
        self.audit_failures += other.audit_failures;
        self.time += other.time;
    }
}

/// A learned predicate with the clause it was inferred from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lemma {
    pub predicate: QuantifiedPredicate,
    pub origin: GroundClause,
    pub ground: GroundFormula,
    /// The lemma belongs to frames 1..=level.
    pub level: usize,
}

#[derive(Clone, Debug)]
pub struct InductiveInvariant {
    /// Strengthening assertions in learning order.
    pub lemmas: Vec<QuantifiedPredicate>,
    pub safety: QuantifiedPredicate,
    pub sizes: SizeAssignment,
    pub stats: EngineStats,
    /// Ground clauses the lemmas were inferred from (empty for reused ones).
    pub origins: Vec<Option<GroundClause>>,
}

impl InductiveInvariant {
    /// Number of conjuncts including the safety property.
    pub fn size(&self) -> usize {
        self.lemmas.len() + 1
    }

    pub fn conjuncts(&self) -> impl Iterator<Item = &QuantifiedPredicate> {
        self.lemmas.iter().chain(std::iter::once(&self.safety))
    }

    pub fn ground(&self, inst: &FiniteInstance) -> Result<GroundFormula, GroundError> {
        Ok(GroundFormula::and(
            self.conjuncts()
                .map(|p| expand(p, inst))
                .collect::<Result<Vec<_>, _>>()?,
        ))
    }

    pub fn ground_lemmas(&self, inst: &FiniteInstance) -> Result<GroundFormula, GroundError> {
        Ok(GroundFormula::and(
            self.lemmas
                .iter()
                .map(|p| expand(p, inst))
                .collect::<Result<Vec<_>, _>>()?,
        ))
    }

    /// `(invariant f)` per lemma, then `(safety f)`.
    pub fn certificate(&self) -> String {
        let mut out = String::new();
        for l in &self.lemmas {
            out.push_str(&format!("(invariant {l})\n"));
        }
        out.push_str(&format!("(safety {})\n", self.safety));
        out
    }
}

/// States from an initial state to one violating safety.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceCex {
    pub states: Vec<GroundCube>,
    pub stats: EngineStats,
}

impl TraceCex {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn render(&self, inst: &FiniteInstance) -> String {
        let mut out = String::new();
        for (i, s) in self.states.iter().enumerate() {
            let trues: Vec<String> = s
                .literals()
                .iter()
                .filter(|l| l.positive)
                .map(|l| inst.vocab.atom_name(l.atom))
                .collect();
            out.push_str(&format!(
                "state {i}: {}\n",
                if trues.is_empty() { "-".into() } else { trues.join(" ") }
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum ProveOutcome {
    Safe(InductiveInvariant),
    Violated(TraceCex),
}

struct Obligation {
    state: Vec<bool>,
    parent: Option<usize>,
    /// Bad successor of a top-level CTI.
    bad: Option<Vec<bool>>,
}

enum Block {
    Blocked,
    Cex(Vec<Vec<bool>>),
}

struct Prover<'a, 'c> {
    inst: &'a FiniteInstance,
    cfg: &'c EngineConfig,
    session: SolverSession<'a>,
    lemmas: Vec<Lemma>,
    /// Highest frame index.
    top: usize,
    /// Set when Init is a single state, for in-process disjointness tests.
    init_state: Option<Vec<bool>>,
    stats: EngineStats,
    checks_at_start: u64,
    started: Instant,
    rng: ChaCha8Rng,
    graph: AlternationGraph,
}

fn frame_label(k: usize) -> String {
    format!("frame.{k}")
}

/// Proves safety of `inst` or finds a counterexample. `reuse` predicates
/// that hold initially and after one step seed the first frame.
pub fn prove(
    inst: &FiniteInstance,
    reuse: &[QuantifiedPredicate],
    cfg: &EngineConfig,
) -> Result<ProveOutcome, EngineError> {
    let session = SolverSession::open(inst, &cfg.solver)?;
    let mut p = Prover {
        inst,
        cfg,
        session,
        lemmas: Vec::new(),
        top: 0,
        init_state: None,
        stats: EngineStats::default(),
        checks_at_start: cfg.solver.stats.checks(),
        started: Instant::now(),
        rng: ChaCha8Rng::seed_from_u64(cfg.audit_seed),
        graph: AlternationGraph::for_spec(&inst.spec),
    };
    p.run(reuse)
}

impl<'a, 'c> Prover<'a, 'c> {
    fn run(&mut self, reuse: &[QuantifiedPredicate]) -> Result<ProveOutcome, EngineError> {
        if let SolverResult::Sat(m) = self
            .session
            .check_known(&[Assumption::label(LABEL_INIT), Assumption::label(LABEL_BAD)])?
        {
            return Ok(ProveOutcome::Violated(self.trace(vec![m.cur])));
        }
        self.detect_single_init()?;
        self.new_frame()?;
        self.seed(reuse)?;
        loop {
            // Block every bad successor of the top frame.
            loop {
                self.check_budget()?;
                let mut a = self.frame(self.top);
                a.push(Assumption::label(LABEL_TRANS));
                a.push(Assumption::label(LABEL_BAD_NEXT));
                match self.session.check_known(&a)? {
                    SolverResult::Sat(m) => {
                        self.stats.ctis += 1;
                        let root = Obligation {
                            state: m.cur,
                            parent: None,
                            bad: Some(m.next),
                        };
                        if let Block::Cex(states) = self.block(root)? {
                            return Ok(ProveOutcome::Violated(self.trace(states)));
                        }
                    }
                    _ => break,
                }
            }
            if self.top >= self.cfg.max_frames {
                return Err(EngineError::ResourcesExhausted(format!(
                    "frame limit {} reached",
                    self.cfg.max_frames
                )));
            }
            self.new_frame()?;
            if let Some(k) = self.propagate()? {
                let inv = self.finish(k)?;
                return Ok(ProveOutcome::Safe(inv));
            }
        }
    }

    fn snapshot(&self) -> EngineStats {
        let mut s = self.stats.clone();
        s.frames = self.top;
        s.smt_checks = self.cfg.solver.stats.checks() - self.checks_at_start;
        s.learned = self.lemmas.len();
        s.time = self.started.elapsed();
        s
    }

    fn check_budget(&self) -> Result<(), EngineError> {
        if let Some(max) = self.cfg.max_ctis {
            if self.stats.ctis > max {
                return Err(EngineError::ResourcesExhausted(format!("CTI limit {max} reached")));
            }
        }
        if let Some(d) = self.cfg.deadline {
            if Instant::now() >= d {
                return Err(EngineError::ResourcesExhausted("time limit reached".into()));
            }
        }
        Ok(())
    }

    fn detect_single_init(&mut self) -> Result<(), EngineError> {
        let SolverResult::Sat(m) = self.session.check_known(&[Assumption::label(LABEL_INIT)])? else {
            warn!("initial condition is unsatisfiable");
            return Ok(());
        };
        let others = GroundFormula::not(
            self.inst
                .state_as_cube(&m.cur.iter().map(|b| Some(*b)).collect::<Vec<_>>())?
                .to_formula(Frame::Current),
        );
        if self
            .session
            .check_known(&[Assumption::label(LABEL_INIT), Assumption::Formula(others)])?
            .is_unsat()
        {
            self.init_state = Some(self.inst.complete_valuation(&m.cur));
        }
        Ok(())
    }

    /// Assumptions selecting frame `i`.
    fn frame(&self, i: usize) -> Vec<Assumption> {
        if i == 0 {
            return vec![Assumption::label(LABEL_INIT)];
        }
        let mut a = vec![Assumption::label(LABEL_SAFE)];
        a.extend((i..=self.top).map(|k| Assumption::Label(frame_label(k))));
        a
    }

    fn new_frame(&mut self) -> Result<(), EngineError> {
        self.top += 1;
        self.session.declare_label(&frame_label(self.top))?;
        let s = self.snapshot();
        info!(
            "frame {}: {} lemmas, {} CTIs, {} SMT checks",
            self.top, s.learned, s.ctis, s.smt_checks
        );
        Ok(())
    }

    fn seed(&mut self, reuse: &[QuantifiedPredicate]) -> Result<(), EngineError> {
        for phi in reuse {
            // A plain forall that covered a whole sort has the universal
            // shape once that sort is larger than its variable count.
            let mut phi = phi.clone();
            let inst = self.inst;
            let var_count: Vec<(String, usize)> = phi
                .fallback_sorts
                .iter()
                .map(|s| (s.clone(), phi.var_count(s)))
                .collect();
            for (s, n) in var_count {
                if inst.sort(&s).is_some_and(|info| n < info.size()) {
                    phi.fallback_sorts.remove(&s);
                }
            }
            let phi = &phi;
            let g = expand(phi, self.inst)?;
            let not_now = Assumption::Formula(GroundFormula::not(g.clone()));
            let not_next = Assumption::Formula(GroundFormula::not(g.to_next()));
            let holds = self
                .session
                .check_known(&[Assumption::label(LABEL_INIT), not_now])?
                .is_unsat()
                && self
                    .session
                    .check_known(&[Assumption::label(LABEL_INIT), Assumption::label(LABEL_TRANS), not_next])?
                    .is_unsat();
            if holds {
                debug!("reusing {phi}");
                self.session.assert_under(&frame_label(1), &g)?;
                self.lemmas.push(Lemma {
                    predicate: phi.clone(),
                    origin: GroundClause::new([]).expect("empty clause"),
                    ground: g,
                    level: 1,
                });
                self.graph.add(&self.inst.spec, &phi.to_formula());
            } else {
                debug!("dropping reused {phi}: not valid in the new instance");
            }
        }
        Ok(())
    }

    /// Whether `state` lies in frame `i` (i ≥ 1).
    fn in_frame(&self, state: &[bool], i: usize) -> bool {
        let v = self.inst.complete_valuation(state);
        self.inst.safety.eval(&v, &[])
            && self
                .lemmas
                .iter()
                .filter(|l| l.level >= i)
                .all(|l| l.ground.eval(&v, &[]))
    }

    fn is_initial(&self, state: &[bool]) -> bool {
        self.inst.eval_state(&self.inst.init, state)
    }

    fn block(&mut self, root: Obligation) -> Result<Block, EngineError> {
        let mut arena = vec![root];
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        heap.push(Reverse((self.top, seq, 0usize)));
        while let Some(Reverse((level, _, idx))) = heap.pop() {
            self.check_budget()?;
            if self.is_initial(&arena[idx].state) {
                return Ok(Block::Cex(chain(&arena, idx)));
            }
            if !self.in_frame(&arena[idx].state, level) {
                if level < self.top {
                    seq += 1;
                    heap.push(Reverse((level + 1, seq, idx)));
                }
                continue;
            }
            let cube = self.inst.extended_cube(&arena[idx].state);
            let mut a = self.frame(level - 1);
            a.push(Assumption::label(LABEL_TRANS));
            let base_len = a.len();
            a.extend(cube.literals().iter().map(|l| Assumption::Literal(*l, Frame::Next)));
            match self.session.check_known(&a)? {
                SolverResult::Sat(m) => {
                    self.stats.ctis += 1;
                    arena.push(Obligation {
                        state: m.cur,
                        parent: Some(idx),
                        bad: None,
                    });
                    let child = arena.len() - 1;
                    if self.is_initial(&arena[child].state) {
                        return Ok(Block::Cex(chain(&arena, child)));
                    }
                    seq += 1;
                    heap.push(Reverse((level - 1, seq, child)));
                    seq += 1;
                    heap.push(Reverse((level, seq, idx)));
                }
                SolverResult::Unsat(_) => {
                    a.truncate(base_len);
                    self.learn(&a, &cube, level)?;
                    if level < self.top {
                        seq += 1;
                        heap.push(Reverse((level + 1, seq, idx)));
                    }
                }
                SolverResult::Unknown(why) => return Err(SolverError::Unknown(why).into()),
            }
        }
        Ok(Block::Blocked)
    }

    /// Generalizes a blocked cube and learns its orbit at `level`.
    fn learn(&mut self, base: &[Assumption], cube: &GroundCube, level: usize) -> Result<(), EngineError> {
        let init_state = self.init_state.clone();
        let mus = minimal_unsat_core_with(
            &mut self.session,
            base,
            cube,
            Frame::Next,
            self.cfg.solver.core_seeding,
            &mut |s, lits| {
                // The sub-cube must exclude every initial state.
                if let Some(init) = &init_state {
                    return Ok(lits.iter().any(|l| !l.holds(init)));
                }
                let mut a = vec![Assumption::label(LABEL_INIT)];
                a.extend(lits.iter().map(|l| Assumption::Literal(*l, Frame::Current)));
                Ok(s.check_known(&a)?.is_unsat())
            },
        )?;
        let clause = mus.negate();
        self.stats.generalized += 1;
        if self.cfg.orbit_audit {
            self.audit(base, &mus)?;
        }
        let mut phi = sym_boost(&clause, self.inst);
        if self.cfg.antecedent_reduction || self.cfg.epr_reduction {
            let mut oracle = LevelOracle {
                session: &mut self.session,
                inst: self.inst,
                base: base.to_vec(),
            };
            if self.cfg.antecedent_reduction {
                phi = antecedent_reduction(&phi, &mut oracle)?;
            }
            if self.cfg.epr_reduction {
                phi = epr_reduction(&phi, &self.inst.spec, &self.graph, &mut oracle)?;
            }
        }
        let ground = expand(&phi, self.inst)?;
        debug!(
            "learned at level {level}: {phi} from {}",
            self.inst.clause_name(&clause)
        );
        self.session.assert_under(&frame_label(level), &ground)?;
        if let Some(l) = self.lemmas.iter_mut().find(|l| l.predicate == phi) {
            l.level = l.level.max(level);
            return Ok(());
        }
        self.graph.add(&self.inst.spec, &phi.to_formula());
        self.lemmas.push(Lemma {
            predicate: phi,
            origin: clause,
            ground,
            level,
        });
        Ok(())
    }

    /// Every permuted image of a blocked cube must be blocked as well.
    fn audit(&mut self, base: &[Assumption], mus: &GroundCube) -> Result<(), EngineError> {
        let group = SymmetryGroup::new(&self.inst.vocab);
        for _ in 0..AUDIT_SAMPLES {
            let g = group.random(&mut self.rng);
            let image = g.apply_cube(&self.inst.vocab, mus);
            let mut a = base.to_vec();
            a.extend(image.literals().iter().map(|l| Assumption::Literal(*l, Frame::Next)));
            let before = self.cfg.solver.stats.checks();
            let r = self.session.check_known(&a)?;
            self.stats.audit_checks += self.cfg.solver.stats.checks() - before;
            if !r.is_unsat() {
                self.stats.audit_failures += 1;
                warn!("orbit audit failed for {}", self.inst.cube_name(&image));
            }
        }
        Ok(())
    }

    /// Pushes lemmas forward; returns k when frame k became equal to k+1.
    fn propagate(&mut self) -> Result<Option<usize>, EngineError> {
        for k in 1..self.top {
            for j in 0..self.lemmas.len() {
                if self.lemmas[j].level != k {
                    continue;
                }
                let mut a = self.frame(k);
                a.push(Assumption::label(LABEL_TRANS));
                a.push(Assumption::Formula(GroundFormula::not(self.lemmas[j].ground.to_next())));
                if self.session.check_known(&a)?.is_unsat() {
                    self.lemmas[j].level = k + 1;
                    let g = self.lemmas[j].ground.clone();
                    self.session.assert_under(&frame_label(k + 1), &g)?;
                }
            }
            if !self.lemmas.iter().any(|l| l.level == k) {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }

    fn finish(&mut self, k: usize) -> Result<InductiveInvariant, EngineError> {
        let mut kept: Vec<Lemma> = self.lemmas.iter().filter(|l| l.level > k).cloned().collect();
        if self.cfg.minimize_invariant {
            kept = self.minimize(kept)?;
        }
        let safety = QuantifiedPredicate::from_formula(self.inst.spec.safety.clone());
        let inv = GroundFormula::and(
            kept.iter()
                .map(|l| l.ground.clone())
                .chain(std::iter::once(self.inst.safety.clone())),
        );
        // The three defining checks, never skipped.
        let init_ok = self
            .session
            .check_known(&[
                Assumption::label(LABEL_INIT),
                Assumption::Formula(GroundFormula::not(inv.clone())),
            ])?
            .is_unsat();
        let step_ok = self
            .session
            .check_known(&[
                Assumption::label(LABEL_TRANS),
                Assumption::Formula(inv.clone()),
                Assumption::Formula(GroundFormula::not(inv.to_next())),
            ])?
            .is_unsat();
        let safe_ok = self
            .session
            .check_known(&[Assumption::Formula(inv.clone()), Assumption::label(LABEL_BAD)])?
            .is_unsat();
        if !(init_ok && step_ok && safe_ok) {
            return Err(EngineError::Internal(format!(
                "invariant failed its final checks (init {init_ok}, consecution {step_ok}, safety {safe_ok})"
            )));
        }
        let stats = self.snapshot();
        info!(
            "converged at frame {k} with {} lemmas after {} CTIs and {} SMT checks",
            kept.len(),
            stats.ctis,
            stats.smt_checks
        );
        Ok(InductiveInvariant {
            origins: kept
                .iter()
                .map(|l| {
                    if l.origin.is_empty() {
                        None
                    } else {
                        Some(l.origin.clone())
                    }
                })
                .collect(),
            lemmas: kept.into_iter().map(|l| l.predicate).collect(),
            safety,
            sizes: self.inst.sizes.clone(),
            stats,
        })
    }

    /// Drops lemmas, latest first, while the rest stays inductive.
    fn minimize(&mut self, lemmas: Vec<Lemma>) -> Result<Vec<Lemma>, EngineError> {
        let labels: Vec<String> = (0..lemmas.len()).map(|j| format!("inv.{j}")).collect();
        for (l, name) in lemmas.iter().zip(&labels) {
            self.session.define_label(name, &l.ground)?;
        }
        let mut keep = vec![true; lemmas.len()];
        for j in (0..lemmas.len()).rev() {
            keep[j] = false;
            let rest: Vec<usize> = (0..lemmas.len()).filter(|i| keep[*i]).collect();
            let next = GroundFormula::and(
                rest.iter()
                    .map(|i| lemmas[*i].ground.to_next())
                    .chain(std::iter::once(self.inst.safety.to_next())),
            );
            let mut a = vec![Assumption::label(LABEL_TRANS), Assumption::label(LABEL_SAFE)];
            a.extend(rest.iter().map(|i| Assumption::Label(labels[*i].clone())));
            a.push(Assumption::Formula(GroundFormula::not(next)));
            if !self.session.check_known(&a)?.is_unsat() {
                keep[j] = true;
            }
        }
        Ok(lemmas
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(l, _)| l)
            .collect())
    }

    fn trace(&self, states: Vec<Vec<bool>>) -> TraceCex {
        let inst = self.inst;
        TraceCex {
            states: states
                .iter()
                .map(|s| {
                    inst.state_as_cube(&s.iter().map(|b| Some(*b)).collect::<Vec<_>>())
                        .expect("total state")
                })
                .collect(),
            stats: self.snapshot(),
        }
    }
}

/// States from obligation `idx` up to its root, then the root's bad successor.
fn chain(arena: &[Obligation], mut idx: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    loop {
        out.push(arena[idx].state.clone());
        match arena[idx].parent {
            Some(p) => idx = p,
            None => break,
        }
    }
    if let Some(bad) = &arena[idx].bad {
        out.push(bad.clone());
    }
    out
}

/// Admits a candidate when it holds initially and is inductive relative
/// to the frame a lemma is being learned from.
struct LevelOracle<'s, 'a> {
    session: &'s mut SolverSession<'a>,
    inst: &'a FiniteInstance,
    base: Vec<Assumption>,
}

impl FrameOracle for LevelOracle<'_, '_> {
    type Error = EngineError;

    fn admits(&mut self, candidate: &QuantifiedPredicate) -> Result<bool, EngineError> {
        let g = expand(candidate, self.inst)?;
        let init = [
            Assumption::label(LABEL_INIT),
            Assumption::Formula(GroundFormula::not(g.clone())),
        ];
        if !self.session.check_known(&init)?.is_unsat() {
            return Ok(false);
        }
        let mut a = self.base.clone();
        a.push(Assumption::Formula(GroundFormula::not(g.to_next())));
        Ok(self.session.check_known(&a)?.is_unsat())
    }
}

/// Checks the three defining conditions of an inductive invariant with a
/// fresh session. Returns the names of the failed conditions.
pub fn check_inductive(
    inst: &FiniteInstance,
    inv: &GroundFormula,
    solver: &SolverConfig,
) -> Result<Vec<&'static str>, EngineError> {
    let mut s = SolverSession::open(inst, solver)?;
    let mut failed = Vec::new();
    let not_inv = Assumption::Formula(GroundFormula::not(inv.clone()));
    if !s.check_known(&[Assumption::label(LABEL_INIT), not_inv])?.is_unsat() {
        failed.push("initiation");
    }
    let step = [
        Assumption::label(LABEL_TRANS),
        Assumption::Formula(inv.clone()),
        Assumption::Formula(GroundFormula::not(inv.to_next())),
    ];
    if !s.check_known(&step)?.is_unsat() {
        failed.push("consecution");
    }
    if !s
        .check_known(&[Assumption::Formula(inv.clone()), Assumption::label(LABEL_BAD)])?
        .is_unsat()
    {
        failed.push("safety");
    }
    Ok(failed)
}

/// Whether two state formulas are equivalent under the instance's
/// definitions and axioms.
pub fn equivalent(
    inst: &FiniteInstance,
    a: &GroundFormula,
    b: &GroundFormula,
    solver: &SolverConfig,
) -> Result<bool, EngineError> {
    let mut s = SolverSession::open(inst, solver)?;
    let differ = GroundFormula::not(GroundFormula::iff(a.clone(), b.clone()));
    Ok(s.check_known(&[Assumption::Formula(differ)])?.is_unsat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ground::{build_instance, SizeAssignment};
    use crate::spec::{load_spec, parse_formula};

    fn cfg() -> EngineConfig {
        EngineConfig::new(SolverConfig::from_env_or("z3 -in"))
    }

    fn toy_spec() -> crate::spec::ProtocolSpec {
        load_spec(corpus::TOY_CONSENSUS).unwrap()
    }

    fn sizes(n: usize, v: usize) -> SizeAssignment {
        SizeAssignment::from_pairs([("node", n), ("value", v)])
    }

    #[test]
    fn toy_consensus_is_safe_with_two_assertions() {
        let spec = toy_spec();
        let inst = build_instance(&spec, &sizes(3, 3)).unwrap();
        let c = cfg();
        let ProveOutcome::Safe(inv) = prove(&inst, &[], &c).unwrap() else {
            panic!("expected safe")
        };
        assert!(check_inductive(&inst, &inv.ground(&inst).unwrap(), &c.solver)
            .unwrap()
            .is_empty());
        let a1 = parse_formula(
            &spec,
            "(forall ((N node) (V1 value) (V2 value)) (=> (distinct V1 V2) (or (not (vote N V1)) (not (vote N V2)))))",
        )
        .unwrap();
        let a2 = parse_formula(
            &spec,
            "(forall ((V value)) (exists ((Q quorum)) (or (not (decision V)) (chosenAt Q V))))",
        )
        .unwrap();
        let expected = GroundFormula::and([
            inst.ground_formula(&a1, Frame::Current).unwrap(),
            inst.ground_formula(&a2, Frame::Current).unwrap(),
        ]);
        assert!(equivalent(&inst, &inv.ground_lemmas(&inst).unwrap(), &expected, &c.solver).unwrap());
        assert!(inv.stats.ctis <= 130 && inv.stats.smt_checks <= 2000, "{:?}", inv.stats);
    }

    #[test]
    fn dropped_guard_gives_a_counterexample() {
        let spec = toy_spec().drop_guard("CastVote").unwrap();
        let inst = build_instance(&spec, &sizes(3, 2)).unwrap();
        let ProveOutcome::Violated(cex) = prove(&inst, &[], &cfg()).unwrap() else {
            panic!("expected cex")
        };
        let states: Vec<Vec<bool>> = cex
            .states
            .iter()
            .map(|c| inst.cube_state(c).into_iter().map(Option::unwrap).collect())
            .collect();
        assert!(inst.eval_state(&inst.init, &states[0]));
        for w in states.windows(2) {
            assert!(inst.eval_step(&inst.trans, &w[0], &w[1]));
        }
        let last = states.last().unwrap();
        assert!(!inst.eval_state(&inst.safety, last));
        let d = inst.vocab.pred_id("decision").unwrap();
        let decided = (0..2).filter(|v| last[inst.vocab.atom_id(d, &[*v]) as usize]).count();
        assert_eq!(decided, 2);
    }

    #[test]
    fn unsafe_init_gives_a_one_state_trace() {
        let text = corpus::TOY_CONSENSUS.replace(
            "(forall ((V value)) (not (decision V)))",
            "(forall ((V value)) (decision V))",
        );
        let spec = load_spec(&text).unwrap();
        let inst = build_instance(&spec, &sizes(2, 2)).unwrap();
        let ProveOutcome::Violated(cex) = prove(&inst, &[], &cfg()).unwrap() else {
            panic!("expected cex")
        };
        assert_eq!(cex.len(), 1);
    }

    #[test]
    fn reuse_keeps_only_valid_predicates() {
        let spec = toy_spec();
        let inst = build_instance(&spec, &sizes(3, 3)).unwrap();
        let c = cfg();
        let ProveOutcome::Safe(inv) = prove(&inst, &[], &c).unwrap() else {
            panic!()
        };
        let bogus =
            QuantifiedPredicate::from_formula(parse_formula(&spec, "(forall ((V value)) (decision V))").unwrap());
        let mut reuse = inv.lemmas.clone();
        reuse.push(bogus.clone());
        let bigger = build_instance(&spec, &sizes(4, 3)).unwrap();
        let ProveOutcome::Safe(inv2) = prove(&bigger, &reuse, &c).unwrap() else {
            panic!()
        };
        assert!(!inv2.lemmas.contains(&bogus));
        assert!(check_inductive(&bigger, &inv2.ground(&bigger).unwrap(), &c.solver)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn frame_budget_is_enforced() {
        let inst = build_instance(&toy_spec(), &sizes(3, 3)).unwrap();
        let mut c = cfg();
        c.max_frames = 1;
        assert!(matches!(prove(&inst, &[], &c), Err(EngineError::ResourcesExhausted(_))));
        let mut c = cfg();
        c.max_ctis = Some(0);
        assert!(matches!(prove(&inst, &[], &c), Err(EngineError::ResourcesExhausted(_))));
    }

    #[test]
    fn orbit_audit_never_fails() {
        let inst = build_instance(&toy_spec(), &sizes(3, 3)).unwrap();
        let mut c = cfg();
        c.orbit_audit = true;
        let ProveOutcome::Safe(inv) = prove(&inst, &[], &c).unwrap() else {
            panic!()
        };
        assert!(inv.stats.audit_checks > 0);
        assert_eq!(inv.stats.audit_failures, 0);
    }
}
