//! Discrete search over candidate type axes maximizing J.
//!
//! Subsets are sorted vectors of pool indices. Every method goes through a memoizing
//! [`Evaluator`]; its evaluation count is the number of distinct subsets scored.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use fixedbitset::FixedBitSet;
use parking_lot::Mutex;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ResolvedMention;
use crate::eval::{objective_j, ObjectiveConfig};
use crate::kg::{common_parents, Commonness, EdgeKind, KnowledgeGraph};
use crate::learnability::{mean_std, AxisLearnability};
use crate::rng;
use crate::typesys::{default_transitive_kinds, MembershipCache, Relation, SystemError};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("subset size {k} exceeds pool size {pool}")]
    SubsetTooLarge { k: usize, pool: usize },
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Candidate relations: for every common root and membership kind, the relation if it
/// has at least one member. Roots are ranked by `metric` over the membership kinds and
/// the default transitive kinds.
pub fn enumerate_relations(
    graph: &KnowledgeGraph,
    kinds: &[EdgeKind],
    metric: Commonness,
    limit: usize,
) -> Vec<Relation> {
    let mut all_kinds: Vec<EdgeKind> = kinds.to_vec();
    all_kinds.extend(default_transitive_kinds());
    let roots = common_parents(graph, &all_kinds, metric, limit);
    let cache = MembershipCache::new();
    let mut out = Vec::new();
    for root in roots {
        for kind in kinds {
            let rel = Relation::new(root, kind.clone());
            if cache.get(graph, &rel).is_ok_and(|s| s.count_ones(..) > 0) {
                out.push(rel);
            }
        }
    }
    out
}

/// Relations with their member sets and learnability.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub axes: Vec<Relation>,
    pub members: Vec<Arc<FixedBitSet>>,
    pub learnability: Vec<f64>,
}

impl CandidatePool {
    pub fn new(
        graph: &KnowledgeGraph,
        axes: Vec<Relation>,
        learnability: Vec<f64>,
        cache: &MembershipCache,
    ) -> Result<Self, SearchError> {
        if axes.len() != learnability.len() {
            return Err(SearchError::Config(format!(
                "{} axes but {} learnability scores",
                axes.len(),
                learnability.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = axes.iter().find(|r| !seen.insert((r.root, r.edge.clone()))) {
            return Err(SearchError::Config(format!(
                "duplicate axis ({}, {})",
                dup.root, dup.edge
            )));
        }
        cache.warm(graph, &axes)?;
        let members = axes
            .iter()
            .map(|r| cache.get(graph, r))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            axes,
            members,
            learnability,
        })
    }

    /// Keeps learnable axes only, dropping repeated (root, edge) pairs.
    pub fn from_scores(
        graph: &KnowledgeGraph,
        scores: &[AxisLearnability],
        cache: &MembershipCache,
    ) -> Result<Self, SearchError> {
        let mut seen = HashSet::new();
        let kept: Vec<&AxisLearnability> = scores
            .iter()
            .filter(|a| !a.unlearnable && seen.insert((a.relation.root, a.relation.edge.clone())))
            .collect();
        Self::new(
            graph,
            kept.iter().map(|a| a.relation.clone()).collect(),
            kept.iter().map(|a| a.mean).collect(),
            cache,
        )
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn relations(&self, subset: &[usize]) -> Vec<Relation> {
        subset.iter().map(|&i| self.axes[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub j: f64,
    /// Oracle accuracy of the subset (or any objective-specific accuracy).
    pub accuracy: f64,
    pub learnability: f64,
}

pub trait Objective: Sync {
    fn num_axes(&self) -> usize;
    /// Scores a sorted subset of axis indices.
    fn score(&self, subset: &[usize]) -> Score;
}

/// J over a candidate pool, with Oracle accuracy computed from precomputed masks.
///
/// For every mention whose gold is a candidate, each candidate ranked above the gold
/// gets a mask of the pool axes on which it differs from the gold. The Oracle picks
/// the gold iff every such mask meets the subset.
#[derive(Debug, Clone)]
pub struct OracleObjective {
    contested: Vec<Vec<FixedBitSet>>,
    free_hits: usize,
    greedy_hits: usize,
    total: usize,
    learnability: Vec<f64>,
    config: ObjectiveConfig,
}

impl OracleObjective {
    pub fn new(pool: &CandidatePool, mentions: &[ResolvedMention], config: ObjectiveConfig) -> Self {
        let n = pool.len();
        let mut contested = Vec::new();
        let mut free_hits = 0;
        let mut greedy_hits = 0;
        let mut total = 0;
        for m in mentions.iter().filter(|m| m.linkable()) {
            total += 1;
            let Some(rank) = m.gold_rank() else {
                continue;
            };
            greedy_hits += usize::from(rank == 0);
            let Some(gold) = m.gold_index else {
                free_hits += usize::from(rank == 0);
                continue;
            };
            let masks: Vec<FixedBitSet> = m.indices[..rank]
                .iter()
                .flatten()
                .map(|&c| {
                    let mut mask = FixedBitSet::with_capacity(n);
                    for (a, set) in pool.members.iter().enumerate() {
                        if set.contains(c) != set.contains(gold) {
                            mask.insert(a);
                        }
                    }
                    mask
                })
                .collect();
            if masks.is_empty() {
                free_hits += 1;
            } else {
                contested.push(masks);
            }
        }
        Self {
            contested,
            free_hits,
            greedy_hits,
            total,
            learnability: pool.learnability.clone(),
            config,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            config: ObjectiveConfig { lambda },
            ..self.clone()
        }
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn s_greedy(&self) -> f64 {
        self.ratio(self.greedy_hits)
    }

    fn ratio(&self, hits: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            hits as f64 / self.total as f64
        }
    }

    pub fn oracle_hits(&self, subset: &[usize]) -> usize {
        let mut chosen = FixedBitSet::with_capacity(self.learnability.len());
        for &a in subset {
            chosen.insert(a);
        }
        self.free_hits
            + self
                .contested
                .iter()
                .filter(|masks| masks.iter().all(|m| !m.is_disjoint(&chosen)))
                .count()
    }

    pub fn subset_learnability(&self, subset: &[usize]) -> f64 {
        if subset.is_empty() {
            0.0
        } else {
            subset.iter().map(|&a| self.learnability[a]).sum::<f64>() / subset.len() as f64
        }
    }
}

impl Objective for OracleObjective {
    fn num_axes(&self) -> usize {
        self.learnability.len()
    }

    fn score(&self, subset: &[usize]) -> Score {
        let s_oracle = self.ratio(self.oracle_hits(subset));
        let learnability = self.subset_learnability(subset);
        Score {
            j: objective_j(s_oracle, self.s_greedy(), learnability, subset.len(), &self.config),
            accuracy: s_oracle,
            learnability,
        }
    }
}

/// Memoizing, batch-parallel wrapper around an objective.
pub struct Evaluator<'a, O: Objective> {
    objective: &'a O,
    memo: Mutex<HashMap<Vec<usize>, Score>>,
    requests: Mutex<usize>,
}

impl<'a, O: Objective> Evaluator<'a, O> {
    pub fn new(objective: &'a O) -> Self {
        Self {
            objective,
            memo: Mutex::new(HashMap::new()),
            requests: Mutex::new(0),
        }
    }

    pub fn num_axes(&self) -> usize {
        self.objective.num_axes()
    }

    /// Distinct subsets scored so far.
    pub fn evaluations(&self) -> usize {
        self.memo.lock().len()
    }

    /// Score lookups including memo hits.
    pub fn requests(&self) -> usize {
        *self.requests.lock()
    }

    pub fn score(&self, subset: &[usize]) -> Score {
        self.score_batch(&[subset.to_vec()])[0]
    }

    /// Scores subsets in order; distinct unseen subsets are computed in parallel.
    pub fn score_batch(&self, subsets: &[Vec<usize>]) -> Vec<Score> {
        *self.requests.lock() += subsets.len();
        let missing: Vec<&Vec<usize>> = {
            let memo = self.memo.lock();
            let mut seen = HashSet::new();
            subsets
                .iter()
                .filter(|s| !memo.contains_key(*s) && seen.insert(*s))
                .collect()
        };
        let computed: Vec<Score> = missing.par_iter().map(|s| self.objective.score(s)).collect();
        let mut memo = self.memo.lock();
        for (s, score) in missing.into_iter().zip(computed) {
            memo.insert(s.clone(), score);
        }
        subsets.iter().map(|s| memo[s]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    Beam,
    Cem,
    Ga,
    Random,
}

impl std::str::FromStr for Method {
    type Err = SearchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "greedy" => Method::Greedy,
            "beam" => Method::Beam,
            "cem" => Method::Cem,
            "ga" => Method::Ga,
            "random" => Method::Random,
            _ => return Err(SearchError::Config(format!("unknown method {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub samples: usize,
    pub elites: usize,
    /// Expected subset size s of the initial distribution; p_start = s / |pool|.
    pub expected_size: f64,
    pub binary_epsilon: f64,
    pub max_iterations: usize,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            elites: 200,
            expected_size: 50.0,
            binary_epsilon: 0.02,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    /// Expected number of ones in an initial individual.
    pub expected_size: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            generations: 200,
            population: 1000,
            mutation: 0.5,
            crossover: 0.2,
            expected_size: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomConfig {
    pub k: usize,
    pub trials: usize,
}

impl Default for RandomConfig {
    fn default() -> Self {
        Self { k: 128, trials: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub method: Method,
    pub beam_width: usize,
    pub cem: CemConfig,
    pub ga: GaConfig,
    pub random: RandomConfig,
    pub seed: u64,
    pub max_evaluations: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            method: Method::Greedy,
            beam_width: 8,
            cem: CemConfig::default(),
            ga: GaConfig::default(),
            random: RandomConfig::default(),
            seed: 0,
            max_evaluations: None,
        }
    }
}

impl SearchConfig {
    pub fn method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Smaller CEM and GA budgets for pools of a few hundred axes.
    pub fn desk(method: Method) -> Self {
        Self {
            method,
            cem: CemConfig {
                samples: 60,
                elites: 12,
                expected_size: 8.0,
                ..CemConfig::default()
            },
            ga: GaConfig {
                generations: 10,
                population: 20,
                expected_size: 8.0,
                ..GaConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |m: &str| Err(SearchError::Config(m.into()));
        if self.beam_width == 0 {
            return fail("beam width must be at least 1");
        }
        if self.cem.elites == 0 || self.cem.elites > self.cem.samples {
            return fail("CEM needs 1 <= elites <= samples");
        }
        if self.ga.population < 2 {
            return fail("GA population must be at least 2");
        }
        for p in [self.ga.mutation, self.ga.crossover, self.cem.binary_epsilon] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub j: f64,
    pub s_oracle: f64,
    pub learnability: f64,
    pub axes: Vec<usize>,
}

impl TraceRow {
    fn new(step: usize, axes: &[usize], score: Score) -> Self {
        Self {
            step,
            j: score.j,
            s_oracle: score.accuracy,
            learnability: score.learnability,
            axes: axes.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub method: Method,
    pub axes: Vec<usize>,
    pub score: Score,
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
    pub requests: usize,
    pub iterations: usize,
    pub wall_clock_ms: u128,
}

pub fn run_search<O: Objective>(objective: &O, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let start = Instant::now();
    let eval = Evaluator::new(objective);
    let (axes, trace) = match config.method {
        Method::Greedy => beam_search(&eval, 1, config.max_evaluations),
        Method::Beam => beam_search(&eval, config.beam_width, config.max_evaluations),
        Method::Cem => cem(&eval, &config.cem, config.seed, config.max_evaluations),
        Method::Ga => ga(&eval, &config.ga, config.seed, config.max_evaluations),
        Method::Random => {
            let k = config.random.k;
            let n = eval.num_axes();
            if k > n {
                return Err(SearchError::SubsetTooLarge { k, pool: n });
            }
            let subsets: Vec<Vec<usize>> = (0..config.random.trials.max(1))
                .map(|t| random_subset(n, k, config.seed, t))
                .collect();
            let scores = eval.score_batch(&subsets);
            let trace = subsets
                .iter()
                .zip(&scores)
                .enumerate()
                .map(|(t, (s, sc))| TraceRow::new(t, s, *sc))
                .collect();
            (subsets[0].clone(), trace)
        }
    };
    let score = eval.score(&axes);
    Ok(SearchResult {
        method: config.method,
        iterations: trace.len(),
        axes,
        score,
        trace,
        evaluations: eval.evaluations(),
        requests: eval.requests(),
        wall_clock_ms: start.elapsed().as_millis(),
    })
}

fn budget_left(eval: &Evaluator<impl Objective>, max: Option<usize>) -> bool {
    max.is_none_or(|m| eval.evaluations() < m)
}

/// Orders states by J descending, then smaller subsets, then lexicographic axes.
fn better(a: &(Vec<usize>, Score), b: &(Vec<usize>, Score)) -> std::cmp::Ordering {
    b.1.j
        .total_cmp(&a.1.j)
        .then(a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp(&b.0))
}

/// Beam search over subsets; width 1 is greedy forward selection.
pub fn beam_search<O: Objective>(
    eval: &Evaluator<O>,
    width: usize,
    max_evaluations: Option<usize>,
) -> (Vec<usize>, Vec<TraceRow>) {
    let n = eval.num_axes();
    let empty = eval.score(&[]);
    let mut beam: Vec<(Vec<usize>, Score)> = vec![(Vec::new(), empty)];
    let mut trace = vec![TraceRow::new(0, &[], empty)];
    let mut step = 0;
    while budget_left(eval, max_evaluations) {
        step += 1;
        let mut children: Vec<Vec<usize>> = Vec::new();
        let mut seen = HashSet::new();
        let mut parent_of = Vec::new();
        for (p, (subset, _)) in beam.iter().enumerate() {
            for a in (0..n).filter(|a| subset.binary_search(a).is_err()) {
                let mut child = subset.clone();
                let pos = child.binary_search(&a).unwrap_err();
                child.insert(pos, a);
                if seen.insert(child.clone()) {
                    children.push(child);
                    parent_of.push(p);
                }
            }
        }
        let scores = eval.score_batch(&children);
        let improving: Vec<(Vec<usize>, Score)> = children
            .into_iter()
            .zip(scores)
            .zip(parent_of)
            .filter(|((_, s), p)| s.j > beam[*p].1.j)
            .map(|(c, _)| c)
            .collect();
        if improving.is_empty() {
            break;
        }
        let mut next: Vec<(Vec<usize>, Score)> = improving;
        next.extend(beam.iter().cloned());
        next.sort_by(better);
        next.dedup_by(|a, b| a.0 == b.0);
        next.truncate(width);
        if next == beam {
            break;
        }
        beam = next;
        trace.push(TraceRow::new(step, &beam[0].0, beam[0].1));
    }
    (beam.swap_remove(0).0, trace)
}

fn mask_to_subset(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
}

/// New probability vector: per-gene mean of the elite masks.
pub fn cem_refit(elites: &[Vec<bool>], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for e in elites {
        for (pi, &b) in p.iter_mut().zip(e) {
            *pi += f64::from(u8::from(b));
        }
    }
    p.iter_mut().for_each(|x| *x /= elites.len() as f64);
    p
}

pub fn is_binary(p: &[f64], epsilon: f64) -> bool {
    p.iter().all(|&x| x <= epsilon || x >= 1.0 - epsilon)
}

pub fn cem<O: Objective>(
    eval: &Evaluator<O>,
    config: &CemConfig,
    seed: u64,
    max_evaluations: Option<usize>,
) -> (Vec<usize>, Vec<TraceRow>) {
    let n = eval.num_axes();
    if n == 0 {
        return (Vec::new(), vec![TraceRow::new(0, &[], eval.score(&[]))]);
    }
    let p_start = (config.expected_size / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut p = vec![p_start; n];
    let mut trace = Vec::new();
    for it in 0..config.max_iterations {
        let masks: Vec<Vec<bool>> = (0..config.samples)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(&[seed, 0xCE, it as u64, i as u64]);
                p.iter().map(|&pj| r.gen::<f64>() < pj).collect()
            })
            .collect();
        let subsets: Vec<Vec<usize>> = masks.iter().map(|m| mask_to_subset(m)).collect();
        let scores = eval.score_batch(&subsets);
        let mut order: Vec<usize> = (0..masks.len()).collect();
        order.sort_by(|&a, &b| scores[b].j.total_cmp(&scores[a].j).then(a.cmp(&b)));
        let elites: Vec<Vec<bool>> = order[..config.elites].iter().map(|&i| masks[i].clone()).collect();
        p = cem_refit(&elites, n);
        let best = order[0];
        trace.push(TraceRow::new(it, &subsets[best], scores[best]));
        if is_binary(&p, config.binary_epsilon) || !budget_left(eval, max_evaluations) {
            break;
        }
    }
    let chosen: Vec<usize> = (0..n).filter(|&j| p[j] >= 0.5).collect();
    (chosen, trace)
}

/// One microbial tournament: the loser copies winner genes with probability
/// `crossover` each, then flips one random gene with probability `mutation`.
pub fn microbial_step(
    winner: &[bool],
    loser: &mut [bool],
    mutation: f64,
    crossover: f64,
    r: &mut impl Rng,
) {
    for (l, &w) in loser.iter_mut().zip(winner) {
        if r.gen::<f64>() < crossover {
            *l = w;
        }
    }
    if !loser.is_empty() && r.gen::<f64>() < mutation {
        let g = r.gen_range(0..loser.len());
        loser[g] = !loser[g];
    }
}

/// Microbial GA; returns the best individual ever scored.
pub fn ga<O: Objective>(
    eval: &Evaluator<O>,
    config: &GaConfig,
    seed: u64,
    max_evaluations: Option<usize>,
) -> (Vec<usize>, Vec<TraceRow>) {
    let n = eval.num_axes();
    let p_init = if n == 0 { 0.0 } else { (config.expected_size / n as f64).min(1.0) };
    let mut pop: Vec<Vec<bool>> = (0..config.population)
        .map(|i| {
            let mut r = rng::stream(&[seed, 0x6A, 0, i as u64]);
            (0..n).map(|_| r.gen::<f64>() < p_init).collect()
        })
        .collect();
    let (_, trace) = evolve(eval, &mut pop, config, seed, max_evaluations);
    let best = trace.last().map(|t| t.axes.clone()).unwrap_or_default();
    (best, trace)
}

/// Runs the tournaments in place. Trace rows carry the best individual seen so far.
pub fn evolve<O: Objective>(
    eval: &Evaluator<O>,
    pop: &mut [Vec<bool>],
    config: &GaConfig,
    seed: u64,
    max_evaluations: Option<usize>,
) -> (usize, Vec<TraceRow>) {
    let size = pop.len();
    let initial: Vec<Vec<usize>> = pop.iter().map(|m| mask_to_subset(m)).collect();
    let scores = eval.score_batch(&initial);
    let mut best = initial
        .into_iter()
        .zip(scores)
        .min_by(better)
        .expect("population is non-empty");
    let mut trace = vec![TraceRow::new(0, &best.0, best.1)];
    let mut generations = 0;
    for g in 0..config.generations {
        if !budget_left(eval, max_evaluations) {
            break;
        }
        generations += 1;
        for t in 0..size {
            let mut r = rng::stream(&[seed, 0x6A, g as u64 + 1, t as u64]);
            let a = r.gen_range(0..size);
            let mut b = r.gen_range(0..size - 1);
            if b >= a {
                b += 1;
            }
            let sa = mask_to_subset(&pop[a]);
            let sb = mask_to_subset(&pop[b]);
            let scores = eval.score_batch(&[sa, sb]);
            let (w, l) = if scores[1].j > scores[0].j { (b, a) } else { (a, b) };
            let winner = pop[w].clone();
            microbial_step(&winner, &mut pop[l], config.mutation, config.crossover, &mut r);
            let child = mask_to_subset(&pop[l]);
            let sc = eval.score(&child);
            let cand = (child, sc);
            if better(&cand, &best).is_lt() {
                best = cand;
            }
        }
        trace.push(TraceRow::new(g + 1, &best.0, best.1));
    }
    (generations, trace)
}

fn random_subset(n: usize, k: usize, seed: u64, trial: usize) -> Vec<usize> {
    let mut r = rng::stream(&[seed, 0x7A, trial as u64]);
    let mut s = sample(&mut r, n, k).into_vec();
    s.sort_unstable();
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub mean_j: f64,
    pub std_j: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Mean and std of J and accuracy over uniform k-subsets.
pub fn random_baseline<O: Objective>(
    objective: &O,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RandomBaseline, SearchError> {
    let n = objective.num_axes();
    if k > n {
        return Err(SearchError::SubsetTooLarge { k, pool: n });
    }
    let scores: Vec<Score> = (0..trials)
        .into_par_iter()
        .map(|t| objective.score(&random_subset(n, k, seed, t)))
        .collect();
    let (mean_j, std_j) = mean_std(&scores.iter().map(|s| s.j).collect::<Vec<_>>());
    let (mean_accuracy, std_accuracy) = mean_std(&scores.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    Ok(RandomBaseline {
        mean_j,
        std_j,
        mean_accuracy,
        std_accuracy,
    })
}

/// Every subset of a small pool, best first by the search tie-break.
pub fn exhaustive<O: Objective>(objective: &O) -> (Vec<usize>, Score) {
    let n = objective.num_axes();
    assert!(n <= 24, "exhaustive search over {n} axes");
    (0u32..1 << n)
        .into_par_iter()
        .map(|bits| {
            let s: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
            let sc = objective.score(&s);
            (s, sc)
        })
        .min_by(better)
        .expect("at least the empty subset")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub size_mean: f64,
    pub size_std: f64,
    pub size_median: f64,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub runs: usize,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Runs one search per (lambda, seed). `objective_for(lambda, seed)` builds the objective.
pub fn lambda_sweep<O: Objective>(
    lambdas: &[f64],
    seeds: &[u64],
    config: &SearchConfig,
    objective_for: impl Fn(f64, u64) -> O,
) -> Result<Vec<SweepRow>, SearchError> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut acc = Vec::new();
        let mut size = Vec::new();
        let mut iters = Vec::new();
        for &seed in seeds {
            let obj = objective_for(lambda, seed);
            let res = run_search(&obj, &SearchConfig { seed, ..*config })?;
            acc.push(res.score.accuracy);
            size.push(res.axes.len() as f64);
            iters.push(res.iterations as f64);
        }
        let (accuracy_mean, accuracy_std) = mean_std(&acc);
        let (size_mean, size_std) = mean_std(&size);
        let (iterations_mean, iterations_std) = mean_std(&iters);
        rows.push(SweepRow {
            lambda,
            accuracy_mean,
            accuracy_std,
            size_mean,
            size_std,
            size_median: median(&mut size),
            iterations_mean,
            iterations_std,
            runs: seeds.len(),
        });
    }
    Ok(rows)
}

/// Trace TSV: step, J, S_oracle, learnability, axes (as edge:root, comma-separated).
pub fn write_trace_tsv<W: std::io::Write>(
    trace: &[TraceRow],
    pool: &CandidatePool,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "step\tJ\tS_oracle\tlearnability\taxes")?;
    for row in trace {
        let axes: Vec<String> = row
            .axes
            .iter()
            .map(|&a| format!("{}:{}", pool.axes[a].edge, pool.axes[a].root))
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            row.step,
            row.j,
            row.s_oracle,
            row.learnability,
            axes.join(",")
        )?;
    }
    Ok(())
}

pub fn write_sweep_tsv<W: std::io::Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda\taccuracy_mean\taccuracy_std\tsize_mean\tsize_std\tsize_median\titerations_mean\titerations_std\truns")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.lambda,
            r.accuracy_mean,
            r.accuracy_std,
            r.size_mean,
            r.size_std,
            r.size_median,
            r.iterations_mean,
            r.iterations_std,
            r.runs
        )?;
    }
    Ok(())
}
