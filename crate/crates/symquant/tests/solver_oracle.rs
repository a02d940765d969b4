mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symquant::corpus;
use symquant::ground::{AtomId, FiniteInstance, Frame, GroundFormula, GroundLiteral};
use symquant::oracle::{decode, eval_formula, spec_step};
use symquant::solver::{Assumption, SolverResult, SolverSession, LABEL_INIT, LABEL_TRANS};

#[derive(Clone, Copy, Debug)]
enum Kind {
    Free,
    Initial,
    Step,
}

fn random_cnf(inst: &FiniteInstance, rng: &mut ChaCha8Rng, two_frames: bool) -> GroundFormula {
    let clauses = (0..rng.gen_range(1..=4)).map(|_| {
        GroundFormula::or((0..rng.gen_range(1..=3)).map(|_| {
            let lit = GroundLiteral::new(rng.gen_range(0..inst.num_atoms()) as AtomId, rng.gen_bool(0.5));
            let frame = if two_frames && rng.gen_bool(0.5) {
                Frame::Next
            } else {
                Frame::Current
            };
            GroundFormula::literal(lit, frame)
        }))
    });
    GroundFormula::and(clauses)
}

/// Brute-force answer over all (pairs of) states.
fn expected(inst: &FiniteInstance, kind: Kind, f: &GroundFormula) -> bool {
    let n = inst.num_state();
    let spec = &inst.spec;
    let axioms = |s: &[bool]| spec.axioms.iter().all(|a| eval_formula(inst, a, s, s));
    let states: Vec<Vec<bool>> = (0..1u64 << n).map(|c| decode(c, n)).filter(|s| axioms(s)).collect();
    match kind {
        Kind::Free => states.iter().any(|s| f.eval(&inst.complete_valuation(s), &[])),
        Kind::Initial => states
            .iter()
            .any(|s| eval_formula(inst, &spec.init, s, s) && f.eval(&inst.complete_valuation(s), &[])),
        Kind::Step => states.iter().any(|s| {
            let cs = inst.complete_valuation(s);
            states
                .iter()
                .any(|t| spec_step(inst, s, t) && f.eval(&cs, &inst.complete_valuation(t)))
        }),
    }
}

#[test]
fn solver_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = common::solver();
    let mut done = 0;
    let mut sat = 0;
    for name in ["toy-consensus", "lock-server", "simple-election", "decentralized-lock"] {
        let b = corpus::get(name).unwrap();
        let inst = common::instance(&common::spec(b.text), b.base_sizes);
        let mut session = SolverSession::open(&inst, &cfg).unwrap();
        for i in 0..50 {
            let kind = [Kind::Free, Kind::Initial, Kind::Step][i % 3];
            let f = random_cnf(&inst, &mut rng, matches!(kind, Kind::Step));
            let mut a = vec![Assumption::Formula(f.clone())];
            match kind {
                Kind::Free => {}
                Kind::Initial => a.push(Assumption::label(LABEL_INIT)),
                Kind::Step => a.push(Assumption::label(LABEL_TRANS)),
            }
            let want = expected(&inst, kind, &f);
            match session.check_known(&a).unwrap() {
                SolverResult::Sat(m) => {
                    sat += 1;
                    assert!(want, "{name} {kind:?}: solver sat, enumeration unsat for {f}");
                    let cur = inst.complete_valuation(&m.cur);
                    let next = inst.complete_valuation(&m.next);
                    assert!(f.eval(&cur, &next), "{name}: model violates {f}");
                    match kind {
                        Kind::Free => {}
                        Kind::Initial => assert!(eval_formula(&inst, &inst.spec.init, &m.cur, &m.cur)),
                        Kind::Step => assert!(spec_step(&inst, &m.cur, &m.next)),
                    }
                }
                SolverResult::Unsat(_) => assert!(!want, "{name} {kind:?}: solver unsat, enumeration sat for {f}"),
                SolverResult::Unknown(r) => panic!("unknown: {r}"),
            }
            done += 1;
        }
    }
    assert_eq!(done, 200);
    assert!(sat > 20 && sat < 180, "{sat} of 200 sat");
}
