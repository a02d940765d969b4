//! Bundled benchmark protocols with their base instance sizes.

pub const TOY_CONSENSUS: &str = include_str!("../corpus/toy_consensus.spec");
pub const LOCK_SERVER: &str = include_str!("../corpus/lock_server.spec");
pub const TWO_PHASE_COMMIT: &str = include_str!("../corpus/two_phase_commit.spec");
pub const DECENTRALIZED_LOCK: &str = include_str!("../corpus/decentralized_lock.spec");
pub const SIMPLE_ELECTION: &str = include_str!("../corpus/simple_election.spec");

#[derive(Clone, Copy, Debug)]
pub struct Benchmark {
    pub name: &'static str,
    pub text: &'static str,
    /// Base sizes of the independent sorts.
    pub base_sizes: &'static [(&'static str, usize)],
}

pub fn all() -> Vec<Benchmark> {
    vec![
        Benchmark {
            name: "toy-consensus",
            text: TOY_CONSENSUS,
            base_sizes: &[("node", 2), ("value", 2)],
        },
        Benchmark {
            name: "lock-server",
            text: LOCK_SERVER,
            base_sizes: &[("client", 2), ("server", 1)],
        },
        Benchmark {
            name: "two-phase-commit",
            text: TWO_PHASE_COMMIT,
            base_sizes: &[("node", 4)],
        },
        Benchmark {
            name: "decentralized-lock",
            text: DECENTRALIZED_LOCK,
            base_sizes: &[("node", 2)],
        },
        Benchmark {
            name: "simple-election",
            text: SIMPLE_ELECTION,
            base_sizes: &[("acceptor", 2), ("proposer", 2)],
        },
    ]
}

pub fn get(name: &str) -> Option<Benchmark> {
    all().into_iter().find(|b| b.name == name)
}
