use super::formula::{AtomId, Frame, GroundFormula};

/// A possibly negated ground atom. The derived order, (atom, polarity),
/// is the canonical literal order because atom ids follow (relation,
/// constant tuple) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundLiteral {
    pub atom: AtomId,
    pub positive: bool,
}

impl GroundLiteral {
    pub fn new(atom: AtomId, positive: bool) -> Self {
        GroundLiteral { atom, positive }
    }

    pub fn negate(self) -> Self {
        GroundLiteral {
            atom: self.atom,
            positive: !self.positive,
        }
    }

    pub fn holds(self, valuation: &[bool]) -> bool {
        valuation[self.atom as usize] == self.positive
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LiteralSetError {
    #[error("clause contains a literal and its negation")]
    Tautology,
    #[error("cube contains a literal and its negation")]
    Contradiction,
}

fn canonical(mut lits: Vec<GroundLiteral>) -> Result<Vec<GroundLiteral>, ()> {
    lits.sort();
    lits.dedup();
    if lits.windows(2).any(|w| w[0].atom == w[1].atom) {
        Err(())
    } else {
        Ok(lits)
    }
}

/// Disjunction of literals in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundClause {
    lits: Vec<GroundLiteral>,
}

/// Conjunction of literals in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundCube {
    lits: Vec<GroundLiteral>,
}

impl GroundClause {
    pub fn new(lits: impl IntoIterator<Item = GroundLiteral>) -> Result<Self, LiteralSetError> {
        canonical(lits.into_iter().collect())
            .map(|lits| GroundClause { lits })
            .map_err(|_| LiteralSetError::Tautology)
    }

    pub fn literals(&self) -> &[GroundLiteral] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn negate(&self) -> GroundCube {
        GroundCube {
            lits: self.lits.iter().map(|l| l.negate()).collect(),
        }
    }

    pub fn eval(&self, valuation: &[bool]) -> bool {
        self.lits.iter().any(|l| l.holds(valuation))
    }

    pub fn to_formula(&self, frame: Frame) -> GroundFormula {
        GroundFormula::or(self.lits.iter().map(|l| GroundFormula::literal(*l, frame)))
    }
}

impl GroundCube {
    pub fn new(lits: impl IntoIterator<Item = GroundLiteral>) -> Result<Self, LiteralSetError> {
        canonical(lits.into_iter().collect())
            .map(|lits| GroundCube { lits })
            .map_err(|_| LiteralSetError::Contradiction)
    }

    pub fn literals(&self) -> &[GroundLiteral] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn negate(&self) -> GroundClause {
        GroundClause {
            lits: self.lits.iter().map(|l| l.negate()).collect(),
        }
    }

    pub fn eval(&self, valuation: &[bool]) -> bool {
        self.lits.iter().all(|l| l.holds(valuation))
    }

    pub fn to_formula(&self, frame: Frame) -> GroundFormula {
        GroundFormula::and(self.lits.iter().map(|l| GroundFormula::literal(*l, frame)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_complementary_literals() {
        let a = GroundLiteral::new(3, true);
        assert_eq!(GroundClause::new([a, a.negate()]), Err(LiteralSetError::Tautology));
        assert_eq!(GroundCube::new([a, a.negate()]), Err(LiteralSetError::Contradiction));
    }

    proptest! {
        #[test]
        fn negation_is_an_involution(atoms in proptest::collection::btree_map(0u32..40, any::<bool>(), 0..10)) {
            let lits: Vec<_> = atoms.iter().map(|(a, p)| GroundLiteral::new(*a, *p)).collect();
            let clause = GroundClause::new(lits.clone()).unwrap();
            let cube = clause.negate();
            prop_assert_eq!(cube.len(), clause.len());
            prop_assert_eq!(cube.negate(), clause.clone());
            for (l, m) in clause.literals().iter().zip(cube.literals()) {
                prop_assert_eq!(l.atom, m.atom);
                prop_assert_eq!(l.positive, !m.positive);
            }
            // A valuation satisfies the cube exactly when it falsifies the clause.
            let val: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
            prop_assert_eq!(cube.eval(&val), !clause.eval(&val));
        }
    }
}
