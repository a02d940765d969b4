//! SMT-LIB2 solver sessions over a child process. Every query is ground
//! and quantifier-free; formulas are switched on and off through
//! activation literals passed to `check-sat-assuming`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::debug;

use crate::ground::{AtomRef, FiniteInstance, Frame, GroundCube, GroundFormula, GroundLiteral};
use crate::sexp::{self, Sexp};

pub const LABEL_INIT: &str = "act.init";
pub const LABEL_TRANS: &str = "act.trans";
pub const LABEL_SAFE: &str = "act.safe";
pub const LABEL_BAD: &str = "act.bad";
pub const LABEL_BAD_NEXT: &str = "act.badnext";

const READY: &str = "symquant-ready";

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("failed to start solver `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no solver command configured")]
    NoCommand,
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver handshake failed: {0}")]
    Handshake(String),
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver exited unexpectedly")]
    Died,
    #[error("solver session is dead after an earlier failure")]
    Dead,
    #[error("solver returned unknown: {0}")]
    Unknown(String),
    #[error("minimal core requested for a satisfiable query")]
    NotUnsat,
}

/// Query counters shared by every session created from one configuration.
#[derive(Debug, Default)]
pub struct SolverStats {
    checks: AtomicU64,
    nanos: AtomicU64,
    sessions: AtomicU64,
}

impl SolverStats {
    pub fn checks(&self) -> u64 {
        self.checks.load(Ordering::Relaxed)
    }

    pub fn time(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::Relaxed))
    }

    pub fn sessions(&self) -> u64 {
        self.sessions.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub seed: Option<u64>,
    /// Directory receiving one replayable `.smt2` transcript per session.
    pub log_dir: Option<PathBuf>,
    /// Seed the minimal-core search with the solver's unsat core.
    pub core_seeding: bool,
    pub stats: Arc<SolverStats>,
}

impl SolverConfig {
    pub fn new(command_line: &str) -> Self {
        SolverConfig {
            command: command_line.split_whitespace().map(str::to_string).collect(),
            seed: Some(1),
            log_dir: None,
            core_seeding: false,
            stats: Arc::new(SolverStats::default()),
        }
    }

    /// `SYMQUANT_SOLVER_CMD` when set, else `default`.
    pub fn from_env_or(default: &str) -> Self {
        match std::env::var("SYMQUANT_SOLVER_CMD") {
            Ok(cmd) if !cmd.trim().is_empty() => SolverConfig::new(&cmd),
            _ => SolverConfig::new(default),
        }
    }

    pub fn command_line(&self) -> String {
        self.command.join(" ")
    }
}

/// Total assignment to the state variables of both frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub cur: Vec<bool>,
    pub next: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverResult {
    Sat(Model),
    /// Indices of the assumptions in the unsat core.
    Unsat(Vec<usize>),
    Unknown(String),
}

impl SolverResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolverResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolverResult::Unsat(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// A label declared with `declare_label` or one of the builtin ones.
    Label(String),
    Literal(GroundLiteral, Frame),
    /// A formula active for this check only.
    Formula(GroundFormula),
}

impl Assumption {
    pub fn label(name: &str) -> Self {
        Assumption::Label(name.to_string())
    }
}

pub struct SolverSession<'a> {
    inst: &'a FiniteInstance,
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    log: Option<BufWriter<File>>,
    symbols: HashMap<String, AtomRef>,
    labels: Vec<String>,
    dead: bool,
    stats: Arc<SolverStats>,
}

fn symbol(inst: &FiniteInstance, r: AtomRef) -> String {
    inst.vocab.atom_symbol(r)
}

fn normalize(s: &str) -> String {
    s.replace('|', "")
}

impl<'a> SolverSession<'a> {
    /// Starts the solver and declares the instance: state and auxiliary
    /// atoms for both frames, auxiliary definitions and axioms, and the
    /// builtin labels guarding Init, T and P.
    pub fn open(inst: &'a FiniteInstance, config: &SolverConfig) -> Result<Self, SolverError> {
        let (program, args) = config.command.split_first().ok_or(SolverError::NoCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                command: config.command_line(),
                source,
            })?;
        let id = config.stats.sessions.fetch_add(1, Ordering::Relaxed);
        let log = match &config.log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(BufWriter::new(File::create(dir.join(format!("session-{id:04}.smt2")))?))
            }
            None => None,
        };
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut s = SolverSession {
            inst,
            child,
            stdin,
            stdout,
            log,
            symbols: HashMap::new(),
            labels: Vec::new(),
            dead: false,
            stats: config.stats.clone(),
        };
        s.handshake(config)?;
        s.declare_instance()?;
        Ok(s)
    }

    fn handshake(&mut self, config: &SolverConfig) -> Result<(), SolverError> {
        self.send("(set-option :print-success false)")?;
        self.send("(set-option :produce-models true)")?;
        self.send("(set-option :produce-unsat-cores true)")?;
        if let Some(seed) = config.seed {
            self.send(&format!("(set-option :random-seed {seed})"))?;
        }
        self.send("(set-logic QF_UF)")?;
        self.send(&format!("(echo \"{READY}\")"))?;
        loop {
            let r = self.read_response()?;
            let text = r.to_string();
            if normalize(&text).trim_matches('"') == READY {
                return Ok(());
            }
            if text == "unsupported" || text.contains("random-seed") {
                // Seeding is best effort.
                continue;
            }
            return Err(SolverError::Handshake(text));
        }
    }

    fn declare_instance(&mut self) -> Result<(), SolverError> {
        let inst = self.inst;
        let mut out = String::new();
        for a in 0..inst.num_atoms() {
            for next in [false, true] {
                let r = AtomRef { atom: a as u32, next };
                let name = symbol(inst, r);
                out.push_str(&format!("(declare-const {name} Bool)\n"));
                self.symbols.insert(name, r);
            }
        }
        let n = inst.num_state();
        for &a in &inst.aux_order {
            let body = &inst.aux_bodies[a as usize - n];
            for next in [false, true] {
                let def = if next { body.to_next() } else { body.clone() };
                let name = symbol(inst, AtomRef { atom: a, next });
                out.push_str(&format!("(assert (= {name} {}))\n", self.smt(&def)));
            }
        }
        if inst.axioms.is_const() != Some(true) {
            out.push_str(&format!("(assert {})\n", self.smt(&inst.axioms)));
            out.push_str(&format!("(assert {})\n", self.smt(&inst.axioms.to_next())));
        }
        self.send(out.trim_end())?;
        self.define_label(LABEL_INIT, &inst.init)?;
        self.define_label(LABEL_TRANS, &inst.trans)?;
        self.define_label(LABEL_SAFE, &inst.safety)?;
        self.define_label(LABEL_BAD, &GroundFormula::not(inst.safety.clone()))?;
        self.define_label(LABEL_BAD_NEXT, &GroundFormula::not(inst.safety.to_next()))
    }

    pub fn instance(&self) -> &'a FiniteInstance {
        self.inst
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    pub fn smt(&self, f: &GroundFormula) -> String {
        f.to_smt(&|r| symbol(self.inst, r))
    }

    fn literal_text(&self, lit: GroundLiteral, frame: Frame) -> String {
        let name = symbol(self.inst, AtomRef::in_frame(lit.atom, frame));
        if lit.positive {
            name
        } else {
            format!("(not {name})")
        }
    }

    /// Declares a fresh activation label with nothing under it yet.
    pub fn declare_label(&mut self, name: &str) -> Result<(), SolverError> {
        if self.labels.iter().any(|l| l == name) {
            return Ok(());
        }
        self.labels.push(name.to_string());
        self.send(&format!("(declare-const {name} Bool)"))
    }

    /// Declares `name` and asserts `name => f`.
    pub fn define_label(&mut self, name: &str, f: &GroundFormula) -> Result<(), SolverError> {
        self.declare_label(name)?;
        self.assert_under(name, f)
    }

    pub fn assert_under(&mut self, label: &str, f: &GroundFormula) -> Result<(), SolverError> {
        let text = format!("(assert (=> {label} {}))", self.smt(f));
        self.send(&text)
    }

    fn send(&mut self, text: &str) -> Result<(), SolverError> {
        if self.dead {
            return Err(SolverError::Dead);
        }
        if let Some(log) = &mut self.log {
            writeln!(log, "{text}")?;
        }
        let r = writeln!(self.stdin, "{text}");
        if r.is_err() {
            self.dead = true;
        }
        Ok(r?)
    }

    fn read_response(&mut self) -> Result<Sexp, SolverError> {
        self.stdin.flush().inspect_err(|_| self.dead = true)?;
        let mut buf = String::new();
        loop {
            let mut line = String::new();
            let n = self.stdout.read_line(&mut line).inspect_err(|_| self.dead = true)?;
            if n == 0 {
                self.dead = true;
                return Err(SolverError::Died);
            }
            buf.push_str(&line);
            if sexp::is_complete(&buf) {
                break;
            }
        }
        if let Some(log) = &mut self.log {
            for l in buf.lines() {
                writeln!(log, "; {l}")?;
            }
        }
        let mut items = sexp::parse_all(&buf).map_err(|e| SolverError::Protocol(format!("{e:?}")))?;
        if items.len() != 1 {
            return Err(SolverError::Protocol(format!("unexpected response `{}`", buf.trim())));
        }
        let r = items.pop().unwrap();
        if let Some(list) = r.as_list() {
            if list.first().and_then(Sexp::as_atom) == Some("error") {
                self.dead = true;
                return Err(SolverError::Protocol(r.to_string()));
            }
        }
        Ok(r)
    }

    /// One `check-sat-assuming` round trip. Formula assumptions live in a
    /// push/pop scope around the check.
    pub fn check(&mut self, assumptions: &[Assumption]) -> Result<SolverResult, SolverError> {
        let start = Instant::now();
        let scoped = assumptions.iter().any(|a| matches!(a, Assumption::Formula(_)));
        if scoped {
            self.send("(push 1)")?;
        }
        let mut texts = Vec::with_capacity(assumptions.len());
        for (i, a) in assumptions.iter().enumerate() {
            texts.push(match a {
                Assumption::Label(l) => l.clone(),
                Assumption::Literal(lit, frame) => self.literal_text(*lit, *frame),
                Assumption::Formula(f) => {
                    let name = format!("tmp.{i}");
                    let text = format!("(declare-const {name} Bool)\n(assert (=> {name} {}))", self.smt(f));
                    self.send(&text)?;
                    name
                }
            });
        }
        self.send(&format!("(check-sat-assuming ({}))", texts.join(" ")))?;
        self.stats.checks.fetch_add(1, Ordering::Relaxed);
        let answer = self.read_response()?;
        let result = match answer.as_atom() {
            Some("sat") => {
                self.send("(get-model)")?;
                let m = self.read_response()?;
                SolverResult::Sat(self.parse_model(&m)?)
            }
            Some("unsat") => {
                self.send("(get-unsat-core)")?;
                let core = self.read_response()?;
                let names: Vec<String> = core
                    .as_list()
                    .ok_or_else(|| SolverError::Protocol(format!("bad core `{core}`")))?
                    .iter()
                    .map(|x| normalize(&x.to_string()))
                    .collect();
                SolverResult::Unsat(
                    texts
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| names.contains(t))
                        .map(|(i, _)| i)
                        .collect(),
                )
            }
            Some("unknown") => {
                self.send("(get-info :reason-unknown)")?;
                let why = self.read_response()?;
                SolverResult::Unknown(why.to_string())
            }
            _ => return Err(SolverError::Protocol(format!("unexpected answer `{answer}`"))),
        };
        if scoped {
            self.send("(pop 1)")?;
        }
        let elapsed = start.elapsed();
        self.stats.nanos.fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
        debug!(
            "check with {} assumptions: {} in {elapsed:?}",
            assumptions.len(),
            match &result {
                SolverResult::Sat(_) => "sat",
                SolverResult::Unsat(_) => "unsat",
                SolverResult::Unknown(_) => "unknown",
            }
        );
        Ok(result)
    }

    /// Like `check`, but `unknown` is an error.
    pub fn check_known(&mut self, assumptions: &[Assumption]) -> Result<SolverResult, SolverError> {
        match self.check(assumptions)? {
            SolverResult::Unknown(why) => Err(SolverError::Unknown(why)),
            r => Ok(r),
        }
    }

    fn parse_model(&self, m: &Sexp) -> Result<Model, SolverError> {
        let n = self.inst.num_state();
        let mut model = Model {
            cur: vec![false; n],
            next: vec![false; n],
        };
        let items = m
            .as_list()
            .ok_or_else(|| SolverError::Protocol(format!("bad model `{m}`")))?;
        for d in items {
            let Some(parts) = d.as_list() else { continue };
            // (define-fun name () Bool value)
            if parts.len() != 5 || parts[0].as_atom() != Some("define-fun") {
                continue;
            }
            let name = normalize(&parts[1].to_string());
            let Some(r) = self.symbols.get(&name) else { continue };
            if r.atom as usize >= n {
                continue;
            }
            let v = match parts[4].as_atom() {
                Some("true") => true,
                Some("false") => false,
                _ => continue,
            };
            if r.next {
                model.next[r.atom as usize] = v;
            } else {
                model.cur[r.atom as usize] = v;
            }
        }
        Ok(model)
    }
}

impl Drop for SolverSession<'_> {
    fn drop(&mut self) {
        if !self.dead {
            let _ = self.send("(exit)");
            let _ = self.stdin.flush();
        }
        if let Some(log) = &mut self.log {
            let _ = log.flush();
        }
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// Extra acceptance test for a candidate core.
pub type SideCondition<'f> = dyn FnMut(&mut SolverSession, &[GroundLiteral]) -> Result<bool, SolverError> + 'f;

/// Deletion-based minimal unsat subset of `cube`, placed in `frame`, under
/// the `base` assumptions. Candidates must also satisfy `side`; literals
/// are tried for deletion in cube order, so later literals tend to stay.
pub fn minimal_unsat_core_with(
    session: &mut SolverSession,
    base: &[Assumption],
    cube: &GroundCube,
    frame: Frame,
    core_seeding: bool,
    side: &mut SideCondition,
) -> Result<GroundCube, SolverError> {
    let query = |s: &mut SolverSession, lits: &[GroundLiteral]| -> Result<Option<Vec<GroundLiteral>>, SolverError> {
        let mut a = base.to_vec();
        a.extend(lits.iter().map(|l| Assumption::Literal(*l, frame)));
        match s.check_known(&a)? {
            SolverResult::Unsat(core) => Ok(Some(
                core.into_iter()
                    .filter(|i| *i >= base.len())
                    .map(|i| lits[i - base.len()])
                    .collect(),
            )),
            _ => Ok(None),
        }
    };
    let all: Vec<GroundLiteral> = cube.literals().to_vec();
    let Some(core) = query(session, &all)? else {
        return Err(SolverError::NotUnsat);
    };
    let mut cur = if core_seeding && side(session, &core)? {
        // Keep cube order.
        all.iter().filter(|l| core.contains(l)).copied().collect()
    } else {
        all
    };
    let mut i = 0;
    while i < cur.len() {
        let mut trial = cur.clone();
        trial.remove(i);
        if side(session, &trial)? {
            if let Some(core) = query(session, &trial)? {
                cur = if core_seeding && side(session, &core)? {
                    trial.into_iter().filter(|l| core.contains(l)).collect()
                } else {
                    trial
                };
                continue;
            }
        }
        i += 1;
    }
    Ok(GroundCube::new(cur).expect("sub-cube of a consistent cube"))
}

pub fn minimal_unsat_core(
    session: &mut SolverSession,
    base: &[Assumption],
    cube: &GroundCube,
    frame: Frame,
) -> Result<GroundCube, SolverError> {
    minimal_unsat_core_with(session, base, cube, frame, true, &mut |_, _| Ok(true))
}
