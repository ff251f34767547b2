//! Fixtures shared by the benchmarks.

use typeforge::kg::EdgeKind;
use typeforge::pipeline::discover_pool;
use typeforge::{resolve, CandidatePool, LearnabilityConfig, MembershipCache, ResolvedMention, SynthConfig, SyntheticWorld};

pub fn world(seed: u64, n_documents: usize) -> SyntheticWorld {
    typeforge::generate_synthetic_world(
        seed,
        &SynthConfig {
            n_documents,
            ..SynthConfig::default()
        },
    )
    .expect("synthetic world")
}

pub fn mentions(w: &SyntheticWorld) -> Vec<ResolvedMention> {
    resolve(&w.corpus, &w.stats, &w.graph)
}

/// Candidate pool with a single learnability run per axis.
pub fn pool(w: &SyntheticWorld, roots: usize, cache: &MembershipCache) -> CandidatePool {
    let cfg = LearnabilityConfig {
        runs: 1,
        ..LearnabilityConfig::default()
    };
    discover_pool(&w.graph, &w.corpus, &[EdgeKind::InstanceOf, EdgeKind::WikipediaCategory], roots, &cfg, cache)
        .expect("candidate pool")
        .0
}
