//! Anaphora link simplification: links to a specific entity are folded into a
//! more-linked generic parent that is a candidate of the same mention, repeated until
//! an iteration changes nothing.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EdgeKind, EntityId, KnowledgeGraph, LinkStats};

#[derive(Debug, Error, PartialEq)]
pub enum SimplifyError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplifyConfig {
    /// Kinds that may be chained into a path of any length.
    pub transitive: Vec<EdgeKind>,
    /// Kinds that only count as a single direct edge.
    pub single_hop: Vec<EdgeKind>,
    pub max_depth: usize,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        Self {
            transitive: vec![EdgeKind::InstanceOf, EdgeKind::SubclassOf, EdgeKind::IsAListOf],
            single_hop: vec![EdgeKind::Occupation, EdgeKind::PositionHeld, EdgeKind::Series],
            max_depth: 16,
        }
    }
}

struct Kinds {
    transitive: Vec<usize>,
    single_hop: Vec<usize>,
    max_depth: usize,
}

impl Kinds {
    fn new(graph: &KnowledgeGraph, config: &SimplifyConfig) -> Self {
        let idx = |ks: &[EdgeKind]| ks.iter().filter_map(|k| graph.kind_index(k)).collect();
        Self {
            transitive: idx(&config.transitive),
            single_hop: idx(&config.single_hop),
            max_depth: config.max_depth,
        }
    }

    fn is_parent(&self, graph: &KnowledgeGraph, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let direct = graph.parents_of(b);
        if direct.iter().any(|&(k, p)| p == a && self.single_hop.contains(&k)) {
            return true;
        }
        let mut seen = vec![b];
        let mut frontier = vec![b];
        for _ in 0..self.max_depth {
            let mut next = Vec::new();
            for &x in &frontier {
                for &(k, p) in graph.parents_of(x) {
                    if !self.transitive.contains(&k) || seen.contains(&p) {
                        continue;
                    }
                    if p == a {
                        return true;
                    }
                    seen.push(p);
                    next.push(p);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        false
    }
}

/// True iff `a` is reachable from `b` through a non-empty path of transitive kinds or a
/// single edge of a single-hop kind.
pub fn is_parent(
    graph: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
    config: &SimplifyConfig,
) -> Result<bool, SimplifyError> {
    let ia = graph.index_of(a).ok_or(SimplifyError::UnknownEntity(a))?;
    let ib = graph.index_of(b).ok_or(SimplifyError::UnknownEntity(b))?;
    Ok(Kinds::new(graph, config).is_parent(graph, ia, ib))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRow {
    pub step: usize,
    pub replacements: usize,
    pub links_changed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolysemyStats {
    /// Mean senses over mentions with at least two candidates; 0 when there are none.
    pub mean: f64,
    pub polysemous: usize,
    /// False when no mention is polysemous and `mean` is a placeholder.
    pub defined: bool,
    /// Number of candidates → number of mentions.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn polysemy_stats(stats: &LinkStats) -> PolysemyStats {
    let mut histogram = BTreeMap::new();
    let (mut senses, mut polysemous) = (0usize, 0usize);
    for (_, row) in stats.mentions() {
        *histogram.entry(row.len()).or_insert(0) += 1;
        if row.len() >= 2 {
            senses += row.len();
            polysemous += 1;
        }
    }
    PolysemyStats {
        mean: if polysemous == 0 { 0.0 } else { senses as f64 / polysemous as f64 },
        polysemous,
        defined: polysemous > 0,
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplificationReport {
    pub iterations: Vec<IterationRow>,
    pub before: PolysemyStats,
    pub after: PolysemyStats,
    /// Mean senses after simplification over the mentions polysemous before it.
    /// Unlike `after.mean` this is over a fixed population and cannot increase.
    pub after_same_mentions: f64,
}

impl SimplificationReport {
    pub fn replacements(&self) -> usize {
        self.iterations.iter().map(|r| r.replacements).sum()
    }

    /// Columns: step, replacements, links_changed.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step\treplacements\tlinks_changed")?;
        for r in &self.iterations {
            writeln!(out, "{}\t{}\t{}", r.step, r.replacements, r.links_changed)?;
        }
        Ok(())
    }
}

type Row = BTreeMap<EntityId, u64>;

/// One iteration on one mention, against the counts the row had on entry.
fn fold_row(graph: &KnowledgeGraph, kinds: &Kinds, row: &Row) -> (Row, usize, u64) {
    let entries: Vec<(EntityId, u64, Option<usize>)> =
        row.iter().map(|(e, c)| (*e, *c, graph.index_of(*e))).collect();
    let mut target: HashMap<EntityId, EntityId> = HashMap::new();
    for &(b, cb, ib) in &entries {
        let Some(ib) = ib else { continue };
        let best = entries
            .iter()
            .filter(|&&(_, ca, ia)| ca > cb && ia.is_some_and(|ia| kinds.is_parent(graph, ia, ib)))
            .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
        if let Some(&(a, _, _)) = best {
            target.insert(b, a);
        }
    }
    let mut out = Row::new();
    let mut moved = 0;
    for &(e, c, _) in &entries {
        let mut t = e;
        // Targets strictly gain count along a chain, so this terminates.
        while let Some(&next) = target.get(&t) {
            t = next;
        }
        if t != e {
            moved += c;
        }
        *out.entry(t).or_insert(0) += c;
    }
    (out, target.len(), moved)
}

/// Folds links until a fixed point. Counts are read at the start of each iteration.
pub fn simplify(
    stats: &LinkStats,
    graph: &KnowledgeGraph,
    config: &SimplifyConfig,
) -> (LinkStats, SimplificationReport) {
    let kinds = Kinds::new(graph, config);
    let mut table: Vec<(String, Row)> = stats
        .mentions()
        .map(|(m, row)| (m.to_string(), row.clone()))
        .collect();
    let mut iterations = Vec::new();
    loop {
        let folded: Vec<(Row, usize, u64)> = table
            .par_iter()
            .map(|(_, row)| fold_row(graph, &kinds, row))
            .collect();
        let replacements: usize = folded.iter().map(|f| f.1).sum();
        let links_changed: u64 = folded.iter().map(|f| f.2).sum();
        iterations.push(IterationRow {
            step: iterations.len() + 1,
            replacements,
            links_changed,
        });
        for ((_, row), (new_row, _, _)) in table.iter_mut().zip(folded) {
            *row = new_row;
        }
        if replacements == 0 {
            break;
        }
    }
    let out = LinkStats::from_table(table.into_iter().collect());
    let before = polysemy_stats(stats);
    let senses: usize = stats
        .mentions()
        .filter(|(_, row)| row.len() >= 2)
        .map(|(m, _)| out.counts(m).map_or(0, |r| r.len()))
        .sum();
    let report = SimplificationReport {
        iterations,
        after_same_mentions: if before.polysemous == 0 { 0.0 } else { senses as f64 / before.polysemous as f64 },
        before,
        after: polysemy_stats(&out),
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: u64, edges: &[(u64, EdgeKind, u64)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 0..n {
            g.add_entity(EntityId(i), format!("e{i}")).unwrap();
        }
        for (c, k, p) in edges {
            g.add_edge(EntityId(*c), k.clone(), EntityId(*p)).unwrap();
        }
        g
    }

    fn stats(rows: &[(&str, u64, u64)]) -> LinkStats {
        let mut s = LinkStats::new();
        for (m, e, c) in rows {
            s.add(m, EntityId(*e), *c).unwrap();
        }
        s
    }

    #[test]
    fn parent_paths() {
        let cfg = SimplifyConfig::default();
        // 0 king, 1 Charles I
        let g = graph(2, &[(1, EdgeKind::PositionHeld, 0)]);
        assert!(is_parent(&g, EntityId(0), EntityId(1), &cfg).unwrap());
        assert!(!is_parent(&g, EntityId(1), EntityId(0), &cfg).unwrap());
        let g = graph(3, &[(0, EdgeKind::InstanceOf, 1), (1, EdgeKind::SubclassOf, 2)]);
        assert!(is_parent(&g, EntityId(2), EntityId(0), &cfg).unwrap());
        let g = graph(3, &[(0, EdgeKind::Occupation, 1), (1, EdgeKind::Occupation, 2)]);
        assert!(is_parent(&g, EntityId(1), EntityId(0), &cfg).unwrap());
        assert!(!is_parent(&g, EntityId(2), EntityId(0), &cfg).unwrap());
        let g = graph(2, &[(0, EdgeKind::SubclassOf, 1), (1, EdgeKind::SubclassOf, 0)]);
        assert!(is_parent(&g, EntityId(1), EntityId(0), &cfg).unwrap());
        assert_eq!(
            is_parent(&g, EntityId(1), EntityId(9), &cfg),
            Err(SimplifyError::UnknownEntity(EntityId(9)))
        );
    }

    fn brute_is_parent(g: &KnowledgeGraph, a: usize, b: usize, cfg: &SimplifyConfig) -> bool {
        let kind_ok = |k: usize, set: &[EdgeKind]| set.contains(g.kind_at(k));
        if g.parents_of(b).iter().any(|&(k, p)| p == a && kind_ok(k, &cfg.single_hop)) {
            return true;
        }
        // Enumerate simple paths by DFS.
        fn dfs(g: &KnowledgeGraph, x: usize, a: usize, path: &mut Vec<usize>, ok: &dyn Fn(usize) -> bool) -> bool {
            for &(k, p) in g.parents_of(x) {
                if !ok(k) || path.contains(&p) {
                    continue;
                }
                if p == a {
                    return true;
                }
                path.push(p);
                if dfs(g, p, a, path, ok) {
                    return true;
                }
                path.pop();
            }
            false
        }
        dfs(g, b, a, &mut vec![b], &|k| kind_ok(k, &cfg.transitive))
    }

    #[test]
    fn parent_matches_path_enumeration_on_random_graphs() {
        let cfg = SimplifyConfig::default();
        let kinds = [EdgeKind::InstanceOf, EdgeKind::SubclassOf, EdgeKind::Occupation, EdgeKind::Series, EdgeKind::WikipediaCategory];
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for _ in 0..35 {
                let (c, p) = (rng.gen_range(0..20), rng.gen_range(0..20));
                let k = kinds[rng.gen_range(0..kinds.len())].clone();
                if c != p && !edges.iter().any(|(c2, k2, p2)| (*c2, k2, *p2) == (c, &k, p)) {
                    edges.push((c, k, p));
                }
            }
            let g = graph(20, &edges);
            for a in 0..20 {
                for b in 0..20 {
                    if a != b {
                        assert_eq!(
                            is_parent(&g, EntityId(a as u64), EntityId(b as u64), &cfg).unwrap(),
                            brute_is_parent(&g, a, b, &cfg),
                            "seed {seed} a {a} b {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn king_absorbs_charles() {
        let g = graph(2, &[(1, EdgeKind::PositionHeld, 0)]);
        let s = stats(&[("king", 0, 5000), ("king", 1, 100)]);
        let (out, report) = simplify(&s, &g, &SimplifyConfig::default());
        assert_eq!(out.counts("king").unwrap(), &BTreeMap::from([(EntityId(0), 5100)]));
        assert_eq!(report.iterations[0], IterationRow { step: 1, replacements: 1, links_changed: 100 });
        assert_eq!(report.iterations[1].replacements, 0);
    }

    #[test]
    fn unrelated_candidates_stay() {
        let g = graph(3, &[]);
        let s = stats(&[("a", 0, 3), ("a", 1, 2)]);
        let (out, report) = simplify(&s, &g, &SimplifyConfig::default());
        assert_eq!(out, s);
        assert_eq!(report.iterations, vec![IterationRow { step: 1, replacements: 0, links_changed: 0 }]);
    }

    #[test]
    fn queens_fold_into_monarch_over_two_iterations() {
        // 0 monarch:10, 1 queen:4 (subclass of monarch), 2 queen_a:12 and 3 queen_b:3
        // (instances of queen). queen_a outweighs monarch until the first fold lands.
        let g = graph(4, &[
            (1, EdgeKind::SubclassOf, 0),
            (2, EdgeKind::InstanceOf, 1),
            (3, EdgeKind::InstanceOf, 1),
        ]);
        let s = stats(&[("queen", 0, 10), ("queen", 1, 4), ("queen", 2, 12), ("queen", 3, 3)]);
        let cfg = SimplifyConfig::default();
        let mut monarch = vec![10];
        let mut cur = s.clone();
        loop {
            let (next, report) = simplify_once(&cur, &g, &cfg);
            if report == 0 {
                break;
            }
            monarch.push(next.count("queen", EntityId(0)));
            cur = next;
        }
        assert_eq!(monarch, vec![10, 17, 29]);
        let (out, report) = simplify(&s, &g, &cfg);
        assert_eq!(out, cur);
        let steps: Vec<usize> = report.iterations.iter().map(|r| r.replacements).collect();
        assert_eq!(steps, vec![2, 1, 0]);
    }

    fn simplify_once(s: &LinkStats, g: &KnowledgeGraph, cfg: &SimplifyConfig) -> (LinkStats, usize) {
        let kinds = Kinds::new(g, cfg);
        let mut n = 0;
        let table = s
            .mentions()
            .map(|(m, row)| {
                let (r, k, _) = fold_row(g, &kinds, row);
                n += k;
                (m.to_string(), r)
            })
            .collect();
        (LinkStats::from_table(table), n)
    }

    #[test]
    fn polysemy_cases() {
        let p = polysemy_stats(&stats(&[("a", 1, 1)]));
        assert_eq!((p.mean, p.defined), (0.0, false));
        let p = polysemy_stats(&stats(&[("a", 1, 1), ("a", 2, 1), ("b", 3, 1), ("b", 4, 1), ("b", 5, 1)]));
        assert_eq!((p.mean, p.polysemous), (2.5, 2));
        assert_eq!(p.histogram, BTreeMap::from([(2, 1), (3, 1)]));
    }

    #[test]
    fn synthetic_world_properties() {
        use crate::synth::{generate_synthetic_world, SynthConfig};
        let w = generate_synthetic_world(3, &SynthConfig { n_documents: 40, generic_rate: 0.3, ..SynthConfig::default() }).unwrap();
        let cfg = SimplifyConfig::default();
        let (once, report) = simplify(&w.stats, &w.graph, &cfg);
        assert!(report.replacements() > 0);
        assert!(report.after_same_mentions <= report.before.mean);
        for (m, row) in w.stats.mentions() {
            let after = once.counts(m).unwrap();
            assert_eq!(row.values().sum::<u64>(), after.values().sum::<u64>());
            assert!(after.len() <= row.len());
        }
        let (twice, again) = simplify(&once, &w.graph, &cfg);
        assert_eq!(twice, once);
        assert_eq!(again.replacements(), 0);
        let mut brute: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, row) in once.mentions() {
            *brute.entry(row.len()).or_default() += 1;
        }
        assert_eq!(report.after.histogram, brute);
    }
}
