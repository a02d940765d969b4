//! Safety verification of parameterized protocols by symmetry-boosted
//! incremental induction on small finite instances.

pub mod converge;
pub mod corpus;
pub mod engine;
pub mod ground;
pub mod oracle;
pub mod quantinfer;
pub mod sexp;
pub mod solver;
pub mod spec;
pub mod symmetry;
