use std::collections::BTreeMap;

use proptest::prelude::*;
use typeforge::search::{enumerate_relations, Objective};
use typeforge::kg::{Commonness, EdgeKind, EntityId, KnowledgeGraph, LinkStats};
use typeforge::{
    auc, objective_j, oracle_accuracy, resolve, s_greedy, simplify, CandidatePool, Labeler, MembershipCache,
    ObjectiveConfig, OracleObjective, SimplifyConfig, SynthConfig, TypeSystem,
};

fn small_world(seed: u64) -> typeforge::SyntheticWorld {
    typeforge::generate_synthetic_world(
        seed,
        &SynthConfig {
            n_documents: 20,
            ..SynthConfig::default()
        },
    )
    .unwrap()
}

fn random_graph(n: usize, edges: &[(usize, usize, bool)]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    for i in 0..n {
        g.add_entity(EntityId(i as u64), &format!("e{i}")).unwrap();
    }
    for &(a, b, kind) in edges {
        let (a, b) = (a % n, b % n);
        if a != b {
            let k = if kind { EdgeKind::InstanceOf } else { EdgeKind::SubclassOf };
            let _ = g.add_edge(EntityId(a as u64), k, EntityId(b as u64));
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_is_affine_in_each_argument(so in 0.0..1.0f64, sg in 0.0..1.0f64, l in 0.0..1.0f64, n in 0usize..50, lambda in 0.0..0.01f64) {
        let cfg = ObjectiveConfig::new(lambda).unwrap();
        let j = objective_j(so, sg, l, n, &cfg);
        prop_assert!((j - ((so - sg) * l + sg - n as f64 * lambda)).abs() < 1e-12);
        prop_assert!((objective_j(so, sg, l, n + 1, &cfg) - (j - lambda)).abs() < 1e-12);
    }

    #[test]
    fn auc_flips_under_negation(scores in prop::collection::vec(0u8..8, 2..40), labels in prop::collection::vec(any::<bool>(), 2..40)) {
        let n = scores.len().min(labels.len());
        let mut labels = labels[..n].to_vec();
        labels[0] = true;
        labels[1] = false;
        let s: Vec<f64> = scores[..n].iter().map(|&x| x as f64).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = auc(&s, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplify_conserves_totals_and_is_idempotent(
        n in 2usize..12,
        edges in prop::collection::vec((0usize..12, 0usize..12, any::<bool>()), 0..24),
        links in prop::collection::vec((0usize..3, 0usize..12, 1u64..500), 1..30),
    ) {
        let g = random_graph(n, &edges);
        let mut stats = LinkStats::new();
        for &(m, e, c) in &links {
            stats.add(&format!("m{m}"), EntityId((e % n) as u64), c).unwrap();
        }
        let cfg = SimplifyConfig::default();
        let (out, rep) = simplify(&stats, &g, &cfg);
        let totals = |s: &LinkStats| -> BTreeMap<String, u64> { s.mentions().map(|(m, r)| (m.to_string(), r.values().sum())).collect() };
        prop_assert_eq!(totals(&out), totals(&stats));
        prop_assert!(rep.after_same_mentions <= rep.before.mean + 1e-12);
        let (again, _) = simplify(&out, &g, &cfg);
        prop_assert_eq!(again, out);
    }

    #[test]
    fn oracle_never_loses_to_link_counts(seed in 0u64..1000, pick in prop::collection::vec(any::<prop::sample::Index>(), 0..6)) {
        let w = small_world(seed);
        let ms = resolve(&w.corpus, &w.stats, &w.graph);
        let rels = enumerate_relations(&w.graph, &[EdgeKind::InstanceOf, EdgeKind::WikipediaCategory], Commonness::ChildCount, 64);
        let cache = MembershipCache::new();
        let chosen: Vec<_> = pick.iter().map(|i| i.get(&rels).clone()).collect();
        let axes = chosen.iter().enumerate().map(|(i, r)| typeforge::TypeAxis::discovered(format!("a{i}"), r.clone())).collect();
        let sys = TypeSystem::new(axes).unwrap();
        let oracle = oracle_accuracy(&ms, &Labeler::new(&w.graph, &sys, &cache).unwrap());
        prop_assert!(oracle.hits >= s_greedy(&ms).hits);

        let pool = CandidatePool::new(&w.graph, rels.clone(), vec![1.0; rels.len()], &cache).unwrap();
        let obj = OracleObjective::new(&pool, &ms, ObjectiveConfig::default());
        prop_assert_eq!(obj.score(&[]).j, s_greedy(&ms).value());
    }
}
