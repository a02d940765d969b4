//! Permutations of sort constants, their action on ground clauses and
//! states, logical orbits, and sort-constant partitions of clauses.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ground::{AtomId, AtomRef, GroundClause, GroundCube, GroundFormula, GroundLiteral, Vocabulary};

/// Default cap on the number of group elements enumerated by `logical_orbit`.
pub const ORBIT_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymmetryError {
    #[error("symmetry group has {order} elements, over the enumeration budget of {budget}")]
    BudgetExceeded { order: u128, budget: u128 },
}

/// A bijection on the constants of every sort. Maps of dependent sorts are
/// induced by their base sort, except for the syntactic swaps built by
/// `dependent_swap`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    maps: Vec<Vec<usize>>,
}

impl Permutation {
    pub fn identity(vocab: &Vocabulary) -> Self {
        Permutation {
            maps: vocab.sorts.iter().map(|s| (0..s.size()).collect()).collect(),
        }
    }

    /// Builds a permutation from maps on the independent sorts (identity
    /// where `None`), computing the induced action on dependent sorts.
    pub fn from_independent(vocab: &Vocabulary, maps: &[Option<Vec<usize>>]) -> Self {
        let mut out = Permutation::identity(vocab);
        for (i, m) in maps.iter().enumerate() {
            if let Some(m) = m {
                assert!(vocab.sorts[i].is_independent(), "map given for dependent sort");
                assert_eq!(m.len(), vocab.sorts[i].size());
                out.maps[i] = m.clone();
            }
        }
        out.induce(vocab);
        out
    }

    fn induce(&mut self, vocab: &Vocabulary) {
        for (d, sort) in vocab.sorts.iter().enumerate() {
            let Some(base) = sort.base else { continue };
            let images: Vec<usize> = sort
                .constants
                .iter()
                .map(|c| {
                    let mut m: Vec<usize> = c.members.iter().map(|x| self.maps[base][*x]).collect();
                    m.sort_unstable();
                    vocab
                        .dependent_constant(d, &m)
                        .expect("majority subsets are closed under permutation")
                })
                .collect();
            self.maps[d] = images;
        }
    }

    /// The transposition of constants `a` and `b` of an independent sort,
    /// acting on dependent sorts by induction.
    pub fn transposition(vocab: &Vocabulary, sort: usize, a: usize, b: usize) -> Self {
        let mut maps = vec![None; vocab.sorts.len()];
        let mut m: Vec<usize> = (0..vocab.sorts[sort].size()).collect();
        m.swap(a, b);
        maps[sort] = Some(m);
        Permutation::from_independent(vocab, &maps)
    }

    /// Swap of two constants of any sort, touching nothing else. For a
    /// dependent sort this is a renaming, not a group element.
    pub fn dependent_swap(vocab: &Vocabulary, sort: usize, a: usize, b: usize) -> Self {
        let mut out = Permutation::identity(vocab);
        out.maps[sort].swap(a, b);
        out
    }

    pub fn map(&self, sort: usize, c: usize) -> usize {
        self.maps[sort][c]
    }

    pub fn sort_map(&self, sort: usize) -> &[usize] {
        &self.maps[sort]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            maps: self
                .maps
                .iter()
                .zip(&other.maps)
                .map(|(f, g)| g.iter().map(|x| f[*x]).collect())
                .collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        Permutation {
            maps: self
                .maps
                .iter()
                .map(|f| {
                    let mut inv = vec![0; f.len()];
                    for (i, x) in f.iter().enumerate() {
                        inv[*x] = i;
                    }
                    inv
                })
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.maps.iter().all(|m| m.iter().enumerate().all(|(i, x)| i == *x))
    }

    pub fn apply_atom(&self, vocab: &Vocabulary, atom: AtomId) -> AtomId {
        let info = &vocab.atoms[atom as usize];
        let sorts = &vocab.preds[info.pred].arg_sorts;
        let args: Vec<usize> = info.args.iter().zip(sorts).map(|(c, s)| self.maps[*s][*c]).collect();
        vocab.atom_id(info.pred, &args)
    }

    pub fn apply_literal(&self, vocab: &Vocabulary, lit: GroundLiteral) -> GroundLiteral {
        GroundLiteral::new(self.apply_atom(vocab, lit.atom), lit.positive)
    }

    pub fn apply(&self, vocab: &Vocabulary, clause: &GroundClause) -> GroundClause {
        GroundClause::new(clause.literals().iter().map(|l| self.apply_literal(vocab, *l)))
            .expect("a bijection cannot create complementary literals")
    }

    pub fn apply_cube(&self, vocab: &Vocabulary, cube: &GroundCube) -> GroundCube {
        GroundCube::new(cube.literals().iter().map(|l| self.apply_literal(vocab, *l)))
            .expect("a bijection cannot create complementary literals")
    }

    pub fn apply_formula(&self, vocab: &Vocabulary, f: &GroundFormula) -> GroundFormula {
        f.map_atoms(&|r| AtomRef {
            atom: self.apply_atom(vocab, r.atom),
            next: r.next,
        })
    }

    /// Image of a valuation (state or full atom valuation): the value of
    /// atom `a` moves to `γ(a)`.
    pub fn apply_valuation(&self, vocab: &Vocabulary, vals: &[bool]) -> Vec<bool> {
        let mut out = vec![false; vals.len()];
        for (a, v) in vals.iter().enumerate() {
            out[self.apply_atom(vocab, a as AtomId) as usize] = *v;
        }
        out
    }
}

/// Product of the full symmetric groups of the independent sorts.
#[derive(Clone, Debug)]
pub struct SymmetryGroup<'a> {
    vocab: &'a Vocabulary,
    sorts: Vec<usize>,
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

/// All permutations of `0..n` in lexicographic order.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

impl<'a> SymmetryGroup<'a> {
    pub fn new(vocab: &'a Vocabulary) -> Self {
        SymmetryGroup {
            vocab,
            sorts: (0..vocab.sorts.len())
                .filter(|s| vocab.sorts[*s].is_independent())
                .collect(),
        }
    }

    pub fn vocab(&self) -> &'a Vocabulary {
        self.vocab
    }

    pub fn order(&self) -> u128 {
        self.sorts
            .iter()
            .map(|s| factorial(self.vocab.sorts[*s].size()))
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    /// Enumerates every element, in mixed-radix order over the per-sort
    /// lexicographic permutation lists.
    pub fn elements(&self, budget: u128) -> Result<Vec<Permutation>, SymmetryError> {
        let order = self.order();
        if order > budget {
            return Err(SymmetryError::BudgetExceeded { order, budget });
        }
        let per_sort: Vec<Vec<Vec<usize>>> = self
            .sorts
            .iter()
            .map(|s| all_permutations(self.vocab.sorts[*s].size()))
            .collect();
        let dims: Vec<usize> = per_sort.iter().map(Vec::len).collect();
        let mut out = Vec::with_capacity(order as usize);
        for idx in crate::ground::tuples(&dims) {
            let mut maps = vec![None; self.vocab.sorts.len()];
            for (k, s) in self.sorts.iter().enumerate() {
                maps[*s] = Some(per_sort[k][idx[k]].clone());
            }
            out.push(Permutation::from_independent(self.vocab, &maps));
        }
        Ok(out)
    }

    pub fn random(&self, rng: &mut impl Rng) -> Permutation {
        let mut maps = vec![None; self.vocab.sorts.len()];
        for s in &self.sorts {
            let mut m: Vec<usize> = (0..self.vocab.sorts[*s].size()).collect();
            m.shuffle(rng);
            maps[*s] = Some(m);
        }
        Permutation::from_independent(self.vocab, &maps)
    }

    /// Adjacent transpositions and the full cycle of every sort; together
    /// they generate the group.
    pub fn generators(&self) -> Vec<Permutation> {
        let mut out = Vec::new();
        for &s in &self.sorts {
            let n = self.vocab.sorts[s].size();
            if n < 2 {
                continue;
            }
            out.push(Permutation::transposition(self.vocab, s, 0, 1));
            if n > 2 {
                let mut maps = vec![None; self.vocab.sorts.len()];
                maps[s] = Some((0..n).map(|i| (i + 1) % n).collect());
                out.push(Permutation::from_independent(self.vocab, &maps));
            }
        }
        out
    }
}

/// The logically distinct images of `clause` under every group element,
/// by explicit enumeration of the group.
pub fn logical_orbit(
    clause: &GroundClause,
    group: &SymmetryGroup,
    budget: u128,
) -> Result<BTreeSet<GroundClause>, SymmetryError> {
    Ok(group
        .elements(budget)?
        .iter()
        .map(|g| g.apply(group.vocab, clause))
        .collect())
}

/// Same set as `logical_orbit`, computed as the closure of `clause` under
/// the group's generators. Cost is proportional to the orbit, not the group.
pub fn orbit_closure(clause: &GroundClause, group: &SymmetryGroup) -> BTreeSet<GroundClause> {
    let gens = group.generators();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(clause.clone());
    queue.push_back(clause.clone());
    while let Some(c) = queue.pop_front() {
        for g in &gens {
            let img = g.apply(group.vocab, &c);
            if !seen.contains(&img) {
                seen.insert(img.clone());
                queue.push_back(img);
            }
        }
    }
    seen
}

/// Constants of one sort occurring in a clause, grouped into cells of
/// identically-present constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub sort: usize,
    /// Cells sorted by their least element; each cell sorted.
    pub cells: Vec<Vec<usize>>,
    /// Number of occurring constants.
    pub count: usize,
}

impl Partition {
    pub fn is_unit(&self) -> bool {
        self.cells.len() == 1
    }
}

/// Constants of `sort` that appear as direct arguments in `clause`.
pub fn occurring_constants(vocab: &Vocabulary, clause: &GroundClause, sort: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for l in clause.literals() {
        let info = &vocab.atoms[l.atom as usize];
        for (c, s) in info.args.iter().zip(&vocab.preds[info.pred].arg_sorts) {
            if *s == sort {
                out.insert(*c);
            }
        }
    }
    out
}

/// The swap used to test whether two constants are identically present.
pub fn swap(vocab: &Vocabulary, sort: usize, a: usize, b: usize) -> Permutation {
    if vocab.sorts[sort].is_independent() {
        Permutation::transposition(vocab, sort, a, b)
    } else {
        Permutation::dependent_swap(vocab, sort, a, b)
    }
}

pub fn partition(vocab: &Vocabulary, clause: &GroundClause, sort: usize) -> Partition {
    let occ: Vec<usize> = occurring_constants(vocab, clause, sort).into_iter().collect();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for c in &occ {
        let home = cells
            .iter()
            .position(|cell| swap(vocab, sort, cell[0], *c).apply(vocab, clause) == *clause);
        match home {
            Some(i) => cells[i].push(*c),
            None => cells.push(vec![*c]),
        }
    }
    Partition {
        sort,
        count: occ.len(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ground::{build_instance, FiniteInstance, SizeAssignment};
    use crate::spec::load_spec;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, v: usize) -> FiniteInstance {
        let spec = load_spec(corpus::TOY_CONSENSUS).unwrap();
        build_instance(&spec, &SizeAssignment::from_pairs([("node", n), ("value", v)])).unwrap()
    }

    fn clause(inst: &FiniteInstance, text: &str) -> GroundClause {
        inst.parse_clause(text).unwrap_or_else(|| panic!("bad clause {text}"))
    }

    #[test]
    fn toy_group_order() {
        let inst = toy(3, 3);
        let g = SymmetryGroup::new(&inst.vocab);
        assert_eq!(g.order(), 36);
        assert_eq!(g.elements(ORBIT_BUDGET).unwrap().len(), 36);
        assert!(matches!(
            g.elements(10),
            Err(SymmetryError::BudgetExceeded { order: 36, .. })
        ));
    }

    #[test]
    fn swapping_nodes_moves_votes_and_quorums() {
        let inst = toy(3, 3);
        let v = &inst.vocab;
        let node = v.sort_id("node").unwrap();
        let g = Permutation::transposition(v, node, 0, 1);
        let c = clause(&inst, "vote(node_1,value_1) | !decision(value_2)");
        assert_eq!(
            inst.clause_name(&g.apply(v, &c)),
            "vote(node_2,value_1) | !decision(value_2)"
        );
        let c = clause(&inst, "chosenAt(quorum_13,value_1)");
        assert_eq!(inst.clause_name(&g.apply(v, &c)), "chosenAt(quorum_23,value_1)");
        assert_eq!(Permutation::identity(v).apply(v, &c), c);
    }

    #[test]
    fn table_orbits() {
        let inst = toy(3, 3);
        let g = SymmetryGroup::new(&inst.vocab);
        let phi1 = clause(
            &inst,
            "vote(node_1,value_1) | vote(node_1,value_2) | vote(node_1,value_3)",
        );
        assert_eq!(logical_orbit(&phi1, &g, ORBIT_BUDGET).unwrap().len(), 3);
        let phi2 = clause(&inst, "!decision(value_1) | decision(value_2)");
        assert_eq!(logical_orbit(&phi2, &g, ORBIT_BUDGET).unwrap().len(), 6);
        let phi3 = clause(&inst, "decision(value_1) | decision(value_2) | decision(value_3)");
        let o = logical_orbit(&phi3, &g, ORBIT_BUDGET).unwrap();
        assert_eq!(o.into_iter().collect::<Vec<_>>(), vec![phi3]);
    }

    #[test]
    fn partitions_of_named_clauses() {
        let inst = toy(3, 3);
        let v = &inst.vocab;
        let value = v.sort_id("value").unwrap();
        let node = v.sort_id("node").unwrap();
        let phi1 = clause(
            &inst,
            "vote(node_1,value_1) | vote(node_1,value_2) | vote(node_1,value_3)",
        );
        let p = partition(v, &phi1, value);
        assert_eq!((p.cells.clone(), p.count), (vec![vec![0, 1, 2]], 3));
        let phi4 = clause(&inst, "!decision(value_1) | decision(value_2) | decision(value_3)");
        assert_eq!(partition(v, &phi4, value).cells, vec![vec![0], vec![1, 2]]);
        let phi2 = clause(&inst, "!decision(value_1) | decision(value_2)");
        let p = partition(v, &phi2, node);
        assert_eq!((p.cells.len(), p.count), (0, 0));
    }

    #[test]
    fn quorum_cells_use_syntactic_swaps() {
        let inst = toy(3, 3);
        let v = &inst.vocab;
        let q = v.sort_id("quorum").unwrap();
        let c = clause(
            &inst,
            "!decision(value_1) | chosenAt(quorum_12,value_1) | chosenAt(quorum_13,value_1) | chosenAt(quorum_23,value_1)",
        );
        let p = partition(v, &c, q);
        assert!(p.is_unit());
        assert_eq!(p.count, 3);
    }

    #[test]
    fn closure_matches_enumeration() {
        let inst = toy(3, 3);
        let g = SymmetryGroup::new(&inst.vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut lits = Vec::new();
            for a in 0..inst.num_atoms() {
                if rng.gen_bool(0.12) {
                    lits.push(GroundLiteral::new(a as AtomId, rng.gen_bool(0.5)));
                }
            }
            let c = GroundClause::new(lits).unwrap();
            assert_eq!(orbit_closure(&c, &g), logical_orbit(&c, &g, ORBIT_BUDGET).unwrap());
        }
    }

    #[test]
    fn itp_is_invariant_under_the_group() {
        for b in corpus::all() {
            let spec = load_spec(b.text).unwrap();
            let sizes = SizeAssignment::from_pairs(b.base_sizes.iter().copied());
            let inst = build_instance(&spec, &sizes).unwrap();
            let g = SymmetryGroup::new(&inst.vocab);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let n = inst.num_state();
            for _ in 0..10 {
                let gamma = g.random(&mut rng);
                for _ in 0..50 {
                    let s: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
                    let t: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
                    let gs = gamma.apply_valuation(&inst.vocab, &s);
                    let gt = gamma.apply_valuation(&inst.vocab, &t);
                    assert_eq!(
                        inst.eval_state(&inst.init, &s),
                        inst.eval_state(&inst.init, &gs),
                        "{}",
                        b.name
                    );
                    assert_eq!(
                        inst.eval_state(&inst.safety, &s),
                        inst.eval_state(&inst.safety, &gs),
                        "{}",
                        b.name
                    );
                    assert_eq!(
                        inst.eval_step(&inst.trans, &s, &t),
                        inst.eval_step(&inst.trans, &gs, &gt),
                        "{}",
                        b.name
                    );
                }
                // A transition step from a state to its image of a successor.
                let zero = vec![false; n];
                let succ = inst.transitions.iter().find_map(|tr| {
                    (0..n).find_map(|a| {
                        let mut t = zero.clone();
                        t[a] = true;
                        inst.eval_step(&tr.formula, &zero, &t).then_some(t)
                    })
                });
                if let Some(t) = succ {
                    let gz = gamma.apply_valuation(&inst.vocab, &zero);
                    let gt = gamma.apply_valuation(&inst.vocab, &t);
                    assert!(inst.eval_step(&inst.trans, &gz, &gt), "{}", b.name);
                }
            }
        }
    }

    fn arb_case() -> impl Strategy<Value = (u64, Vec<(u32, bool)>)> {
        (any::<u64>(), proptest::collection::vec((0u32..24, any::<bool>()), 1..6))
    }

    proptest! {
        #[test]
        fn group_laws_hold((seed, raw) in arb_case()) {
            let inst = toy(3, 3);
            let v = &inst.vocab;
            let g = SymmetryGroup::new(v);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lits = std::collections::BTreeMap::new();
            for (a, p) in raw {
                lits.insert(a % inst.num_atoms() as u32, p);
            }
            let c = GroundClause::new(lits.into_iter().map(|(a, p)| GroundLiteral::new(a, p))).unwrap();
            let g1 = g.random(&mut rng);
            let g2 = g.random(&mut rng);
            prop_assert_eq!(g2.apply(v, &g1.apply(v, &c)), g2.compose(&g1).apply(v, &c));
            prop_assert_eq!(g1.inverse().apply(v, &g1.apply(v, &c)), c.clone());
            // Orbit closure under sampled elements.
            let orbit = orbit_closure(&c, &g);
            for d in &orbit {
                prop_assert!(orbit.contains(&g1.apply(v, d)));
            }
            // Partition soundness.
            for s in 0..v.sorts.len() {
                let p = partition(v, &c, s);
                for (i, ci) in p.cells.iter().enumerate() {
                    for a in ci {
                        for (j, cj) in p.cells.iter().enumerate() {
                            for b in cj {
                                if a < b {
                                    let same = swap(v, s, *a, *b).apply(v, &c) == c;
                                    prop_assert_eq!(same, i == j);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
