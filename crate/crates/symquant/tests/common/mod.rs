#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use symquant::converge::ConvergeConfig;
use symquant::engine::EngineConfig;
use symquant::ground::{build_instance, AtomRef, FiniteInstance, GroundFormula, SizeAssignment};
use symquant::solver::SolverConfig;
use symquant::spec::{load_spec, ProtocolSpec};

pub const DEFAULT_SOLVER: &str = "z3 -in";

pub fn solver() -> SolverConfig {
    SolverConfig::from_env_or(DEFAULT_SOLVER)
}

pub fn engine() -> EngineConfig {
    EngineConfig::new(solver())
}

pub fn converge() -> ConvergeConfig {
    ConvergeConfig::new(engine())
}

pub fn spec(text: &str) -> ProtocolSpec {
    load_spec(text).unwrap()
}

pub fn instance(spec: &ProtocolSpec, sizes: &[(&str, usize)]) -> FiniteInstance {
    build_instance(spec, &SizeAssignment::from_pairs(sizes.iter().copied())).unwrap()
}

/// Purely propositional equivalence of ground state formulas, with every
/// atom (auxiliary ones included) treated as a free Boolean. Small atom
/// sets are decided by truth table, larger ones by two unsat queries on a
/// bare solver process that knows nothing about the instance.
pub struct PropChecker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    num_atoms: usize,
    pub by_table: usize,
    pub by_solver: usize,
}

pub const TABLE_LIMIT: usize = 16;

impl PropChecker {
    pub fn new(num_atoms: usize) -> Self {
        let cmd = solver().command;
        let mut child = Command::new(&cmd[0])
            .args(&cmd[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("solver starts");
        let mut stdin = child.stdin.take().unwrap();
        let stdout = BufReader::new(child.stdout.take().unwrap());
        let mut decls = String::new();
        for a in 0..num_atoms {
            decls.push_str(&format!("(declare-const a{a} Bool)\n"));
        }
        stdin.write_all(decls.as_bytes()).unwrap();
        PropChecker {
            child,
            stdin,
            stdout,
            num_atoms,
            by_table: 0,
            by_solver: 0,
        }
    }

    fn unsat(&mut self, f: &GroundFormula) -> bool {
        let name = |r: AtomRef| {
            assert!(!r.next, "state formulas only");
            format!("a{}", r.atom)
        };
        let q = format!("(push 1)\n(assert {})\n(check-sat)\n(pop 1)\n", f.to_smt(&name));
        self.stdin.write_all(q.as_bytes()).unwrap();
        self.stdin.flush().unwrap();
        let mut line = String::new();
        self.stdout.read_line(&mut line).unwrap();
        match line.trim() {
            "unsat" => true,
            "sat" => false,
            other => panic!("unexpected solver answer {other:?}"),
        }
    }

    /// Whether `f` holds under every assignment.
    pub fn valid(&mut self, f: &GroundFormula) -> bool {
        let mut atoms: Vec<u32> = f.atoms().into_iter().map(|r| r.atom).collect();
        atoms.dedup();
        if atoms.len() <= TABLE_LIMIT {
            self.by_table += 1;
            let mut val = vec![false; self.num_atoms];
            (0u64..1 << atoms.len()).all(|bits| {
                for (i, at) in atoms.iter().enumerate() {
                    val[*at as usize] = bits >> i & 1 == 1;
                }
                f.eval(&val, &val)
            })
        } else {
            self.by_solver += 1;
            self.unsat(&GroundFormula::not(f.clone()))
        }
    }

    /// Equivalence as two validity checks, one per direction.
    pub fn equivalent(&mut self, a: &GroundFormula, b: &GroundFormula) -> bool {
        self.implies(a, b) && self.implies(b, a)
    }

    pub fn implies(&mut self, a: &GroundFormula, b: &GroundFormula) -> bool {
        self.valid(&GroundFormula::implies(a.clone(), b.clone()))
    }
}

impl Drop for PropChecker {
    fn drop(&mut self) {
        let _ = self.stdin.write_all(b"(exit)\n");
        let _ = self.child.wait();
    }
}
