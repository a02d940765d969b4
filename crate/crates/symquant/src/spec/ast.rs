use std::fmt;

pub type Ident = String;

/// Name of the builtin membership relation of dependent sorts.
pub const MEMBER: &str = "member";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SortKind {
    Independent,
    /// All minimal majority subsets of `base`.
    Majority {
        base: Ident,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortDecl {
    pub name: Ident,
    pub kind: SortKind,
}

impl SortDecl {
    pub fn is_independent(&self) -> bool {
        self.kind == SortKind::Independent
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binder {
    pub var: Ident,
    pub sort: Ident,
}

impl Binder {
    pub fn new(var: impl Into<Ident>, sort: impl Into<Ident>) -> Self {
        Binder {
            var: var.into(),
            sort: sort.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RelationRole {
    State,
    Definition { params: Vec<Binder>, body: Formula },
    Membership { dependent: Ident },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationDecl {
    pub name: Ident,
    pub arg_sorts: Vec<Ident>,
    pub role: RelationRole,
}

impl RelationDecl {
    pub fn is_state(&self) -> bool {
        self.role == RelationRole::State
    }

    pub fn is_definition(&self) -> bool {
        matches!(self.role, RelationRole::Definition { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Ident),
    /// A concrete constant of a finite instance, by sort and index. Only
    /// produced by instance-specific predicates; the surface syntax has none.
    Const {
        sort: Ident,
        index: usize,
    },
}

impl Term {
    pub fn var(name: impl Into<Ident>) -> Self {
        Term::Var(name.into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Bool(bool),
    App { rel: Ident, primed: bool, args: Vec<Term> },
    Member { elem: Term, set: Term },
    Eq(Term, Term),
    Distinct(Vec<Term>),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Forall(Vec<Binder>, Box<Formula>),
    Exists(Vec<Binder>, Box<Formula>),
}

impl Formula {
    pub fn app(rel: impl Into<Ident>, args: Vec<Term>) -> Self {
        Formula::App {
            rel: rel.into(),
            primed: false,
            args,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(binders: Vec<Binder>, body: Formula) -> Self {
        if binders.is_empty() {
            body
        } else {
            Formula::Forall(binders, Box::new(body))
        }
    }

    pub fn exists(binders: Vec<Binder>, body: Formula) -> Self {
        if binders.is_empty() {
            body
        } else {
            Formula::Exists(binders, Box::new(body))
        }
    }

    /// Conjunction; a single operand is returned unchanged.
    pub fn and_of(mut fs: Vec<Formula>) -> Self {
        match fs.len() {
            0 => Formula::Bool(true),
            1 => fs.pop().unwrap(),
            _ => Formula::And(fs),
        }
    }

    /// Disjunction; a single operand is returned unchanged.
    pub fn or_of(mut fs: Vec<Formula>) -> Self {
        match fs.len() {
            0 => Formula::Bool(false),
            1 => fs.pop().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    /// Calls `f` on every sub-formula, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.walk(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.walk(f)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    pub fn mentions_primed(&self) -> bool {
        let mut found = false;
        self.walk(&mut |g| {
            if let Formula::App { primed: true, .. } = g {
                found = true;
            }
        });
        found
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Update {
    pub relation: Ident,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: Ident,
    pub params: Vec<Binder>,
    pub guard: Formula,
    pub updates: Vec<Update>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub sorts: Vec<SortDecl>,
    /// State relations and definitions in source order, followed by one
    /// builtin membership relation per dependent sort.
    pub relations: Vec<RelationDecl>,
    pub axioms: Vec<Formula>,
    pub init: Formula,
    pub actions: Vec<ActionDecl>,
    pub safety: Formula,
}

impl ProtocolSpec {
    pub fn sort(&self, name: &str) -> Option<&SortDecl> {
        self.sorts.iter().find(|s| s.name == name)
    }

    /// Non-builtin relation or definition by name.
    pub fn relation(&self, name: &str) -> Option<&RelationDecl> {
        self.relations
            .iter()
            .find(|r| r.name == name && !matches!(r.role, RelationRole::Membership { .. }))
    }

    pub fn action(&self, name: &str) -> Option<&ActionDecl> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn independent_sorts(&self) -> impl Iterator<Item = &SortDecl> {
        self.sorts.iter().filter(|s| s.is_independent())
    }

    pub fn state_relations(&self) -> impl Iterator<Item = &RelationDecl> {
        self.relations.iter().filter(|r| r.is_state())
    }

    pub fn definitions(&self) -> impl Iterator<Item = &RelationDecl> {
        self.relations.iter().filter(|r| r.is_definition())
    }

    /// Copy of the protocol with the named action's guard replaced by `true`.
    /// Used to manufacture unsafe variants in tests.
    pub fn drop_guard(&self, action: &str) -> Option<ProtocolSpec> {
        let mut out = self.clone();
        let a = out.actions.iter_mut().find(|a| a.name == action)?;
        a.guard = Formula::Bool(true);
        Some(out)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const { sort, index } => write!(f, "{sort}#{}", index + 1),
        }
    }
}
