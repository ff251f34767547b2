//! Type-aware disambiguation: the link-count prior reweighted by pooled type beliefs.
//!
//! score(e) = P_Link(e|m) · (1 − β + β · Π_i (1 − α_i + α_i · P_i(t_i(e))))

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedCorpus, Document, MentionRef, ResolvedMention};
use crate::eval::{system_accuracy, Accuracy};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::typeclf::{BeliefSequence, BeliefSource};
use crate::typesys::Labeler;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("empty mention span [{0}, {1})")]
    EmptySpan(usize, usize),
    #[error("span [{0}, {1}) exceeds {2} tokens")]
    OutOfBounds(usize, usize, usize),
    #[error("entity {0} is not a candidate of the mention")]
    NotCandidate(EntityId),
    #[error("invalid smoothing parameters: {0}")]
    Params(String),
    #[error("empty smoothing grid")]
    EmptyGrid,
    #[error("beliefs cover {got} axes, the type system has {want}")]
    AxisMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Max,
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

impl SmoothingParams {
    pub fn uniform(num_axes: usize, alpha: f64, beta: f64) -> Self {
        Self {
            alpha: vec![alpha; num_axes],
            beta,
        }
    }

    /// α = β = 0.9 on every axis.
    pub fn default_for(num_axes: usize) -> Self {
        Self::uniform(num_axes, 0.9, 0.9)
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self
            .alpha
            .iter()
            .chain([&self.beta])
            .any(|x| !(0.0..=1.0).contains(x))
        {
            return Err(LinkError::Params("alpha and beta must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-axis type scores of a mention pooled over its tokens.
pub fn pool_mention_beliefs(
    beliefs: &BeliefSequence,
    start: usize,
    end: usize,
    pooling: Pooling,
) -> Result<Vec<Vec<f64>>, LinkError> {
    if end <= start {
        return Err(LinkError::EmptySpan(start, end));
    }
    if end > beliefs.tokens.len() {
        return Err(LinkError::OutOfBounds(start, end, beliefs.tokens.len()));
    }
    let mut pooled = beliefs.tokens[start].clone();
    for tok in &beliefs.tokens[start + 1..end] {
        for (acc, dist) in pooled.iter_mut().zip(tok) {
            for (a, &p) in acc.iter_mut().zip(dist) {
                *a = match pooling {
                    Pooling::Max => a.max(p),
                    Pooling::Product => *a * p,
                };
            }
        }
    }
    Ok(pooled)
}

fn type_factor(pooled: &[Vec<f64>], index: Option<usize>, labeler: &Labeler, params: &SmoothingParams) -> f64 {
    let prod: f64 = (0..labeler.num_axes())
        .map(|axis| {
            // Entities outside the graph have no type and get no belief mass.
            let p = index.map_or(0.0, |i| pooled[axis][labeler.label(axis, i)]);
            1.0 - params.alpha[axis] + params.alpha[axis] * p
        })
        .product();
    1.0 - params.beta + params.beta * prod
}

pub fn entity_score(
    entity: EntityId,
    pooled: &[Vec<f64>],
    mention: &ResolvedMention,
    labeler: &Labeler,
    params: &SmoothingParams,
) -> Result<f64, LinkError> {
    let rank = mention
        .ranked
        .iter()
        .position(|(e, _)| *e == entity)
        .ok_or(LinkError::NotCandidate(entity))?;
    Ok(mention.p_link(rank) * type_factor(pooled, mention.indices[rank], labeler, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDecision {
    pub at: MentionRef,
    /// Candidates by descending score, ties by ascending id.
    pub ranked: Vec<(EntityId, f64)>,
    pub chosen: EntityId,
}

fn decide(mention: &ResolvedMention, pooled: &[Vec<f64>], labeler: &Labeler, params: &SmoothingParams) -> LinkDecision {
    let mut ranked: Vec<(EntityId, f64)> = (0..mention.ranked.len())
        .map(|r| {
            let s = mention.p_link(r) * type_factor(pooled, mention.indices[r], labeler, params);
            (mention.ranked[r].0, s)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    LinkDecision {
        at: mention.at,
        chosen: ranked[0].0,
        ranked,
    }
}

fn check_axes(beliefs: &BeliefSequence, labeler: &Labeler) -> Result<(), LinkError> {
    if let Some(t) = beliefs.tokens.first() {
        if t.len() != labeler.num_axes() {
            return Err(LinkError::AxisMismatch {
                got: t.len(),
                want: labeler.num_axes(),
            });
        }
    }
    Ok(())
}

/// Decisions for the linkable mentions of one document, in mention order.
pub fn link(
    document: &Document,
    beliefs: &BeliefSequence,
    mentions: &[&ResolvedMention],
    labeler: &Labeler,
    params: &SmoothingParams,
    pooling: Pooling,
) -> Result<Vec<LinkDecision>, LinkError> {
    params.validate()?;
    check_axes(beliefs, labeler)?;
    if params.alpha.len() != labeler.num_axes() {
        return Err(LinkError::AxisMismatch {
            got: params.alpha.len(),
            want: labeler.num_axes(),
        });
    }
    mentions
        .iter()
        .filter(|m| m.linkable())
        .map(|m| {
            let span = &document.mentions[m.at.mention];
            let pooled = pool_mention_beliefs(beliefs, span.start, span.end, pooling)?;
            Ok(decide(m, &pooled, labeler, params))
        })
        .collect()
}

fn by_document(mentions: &[ResolvedMention], docs: usize) -> Vec<Vec<&ResolvedMention>> {
    let mut out = vec![Vec::new(); docs];
    for m in mentions {
        out[m.at.doc].push(m);
    }
    out
}

/// Pooled beliefs of every linkable mention, computed once per document.
pub struct PooledCorpus<'a> {
    items: Vec<(&'a ResolvedMention, Vec<Vec<f64>>)>,
}

impl<'a> PooledCorpus<'a> {
    pub fn new(
        corpus: &AnnotatedCorpus,
        mentions: &'a [ResolvedMention],
        source: &impl BeliefSource,
        labeler: &Labeler,
        pooling: Pooling,
    ) -> Result<Self, LinkError> {
        let grouped = by_document(mentions, corpus.documents.len());
        let per_doc: Vec<Vec<(&ResolvedMention, Vec<Vec<f64>>)>> = corpus
            .documents
            .par_iter()
            .enumerate()
            .map(|(d, doc)| {
                let beliefs = source.beliefs(d, doc);
                check_axes(&beliefs, labeler)?;
                grouped[d]
                    .iter()
                    .filter(|m| m.linkable())
                    .map(|m| {
                        let span = &doc.mentions[m.at.mention];
                        Ok((*m, pool_mention_beliefs(&beliefs, span.start, span.end, pooling)?))
                    })
                    .collect()
            })
            .collect::<Result<_, LinkError>>()?;
        Ok(Self {
            items: per_doc.into_iter().flatten().collect(),
        })
    }

    pub fn decisions(&self, labeler: &Labeler, params: &SmoothingParams) -> Result<Vec<LinkDecision>, LinkError> {
        params.validate()?;
        if params.alpha.len() != labeler.num_axes() {
            return Err(LinkError::AxisMismatch {
                got: params.alpha.len(),
                want: labeler.num_axes(),
            });
        }
        Ok(self
            .items
            .par_iter()
            .map(|(m, pooled)| decide(m, pooled, labeler, params))
            .collect())
    }
}

pub fn link_corpus(
    corpus: &AnnotatedCorpus,
    mentions: &[ResolvedMention],
    source: &impl BeliefSource,
    labeler: &Labeler,
    params: &SmoothingParams,
    pooling: Pooling,
) -> Result<Vec<LinkDecision>, LinkError> {
    PooledCorpus::new(corpus, mentions, source, labeler, pooling)?.decisions(labeler, params)
}

pub fn predictions(decisions: &[LinkDecision]) -> HashMap<MentionRef, EntityId> {
    decisions.iter().map(|d| (d.at, d.chosen)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingGrid {
    /// Candidate α values, shared by all axes.
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SmoothingGrid {
    fn default() -> Self {
        let steps: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        Self {
            alphas: steps.clone(),
            betas: steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSmoothing {
    pub params: SmoothingParams,
    pub accuracy: Accuracy,
}

/// Grid search over (β, α) in the given order; the first best point wins.
pub fn fit_smoothing(
    corpus: &AnnotatedCorpus,
    mentions: &[ResolvedMention],
    source: &impl BeliefSource,
    labeler: &Labeler,
    grid: &SmoothingGrid,
    pooling: Pooling,
) -> Result<FittedSmoothing, LinkError> {
    if grid.alphas.is_empty() || grid.betas.is_empty() {
        return Err(LinkError::EmptyGrid);
    }
    let pooled = PooledCorpus::new(corpus, mentions, source, labeler, pooling)?;
    let mut best: Option<FittedSmoothing> = None;
    for &beta in &grid.betas {
        for &alpha in &grid.alphas {
            let params = SmoothingParams::uniform(labeler.num_axes(), alpha, beta);
            let preds = predictions(&pooled.decisions(labeler, &params)?);
            let accuracy = system_accuracy(&preds, mentions).expect("every linkable mention is decided");
            if best.as_ref().is_none_or(|b| accuracy.hits > b.accuracy.hits) {
                best = Some(FittedSmoothing { params, accuracy });
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// One-hot beliefs on the gold entity's types over each mention's tokens, uniform
/// elsewhere: what a perfect type classifier would output.
pub struct OracleBeliefs {
    docs: Vec<BeliefSequence>,
}

impl OracleBeliefs {
    pub fn new(corpus: &AnnotatedCorpus, graph: &KnowledgeGraph, labeler: &Labeler) -> Self {
        let uniform: Vec<Vec<f64>> = (0..labeler.num_axes())
            .map(|a| {
                let k = labeler.type_names(a).len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        let docs = corpus
            .documents
            .iter()
            .map(|doc| {
                let mut tokens = vec![uniform.clone(); doc.tokens.len()];
                for m in &doc.mentions {
                    let Some(i) = graph.index_of(m.gold) else { continue };
                    let onehot: Vec<Vec<f64>> = (0..labeler.num_axes())
                        .map(|a| {
                            let mut v = vec![0.0; labeler.type_names(a).len()];
                            v[labeler.label(a, i)] = 1.0;
                            v
                        })
                        .collect();
                    for t in &mut tokens[m.start..m.end] {
                        *t = onehot.clone();
                    }
                }
                BeliefSequence { tokens }
            })
            .collect();
        Self { docs }
    }
}

impl BeliefSource for OracleBeliefs {
    fn beliefs(&self, doc_index: usize, _document: &Document) -> BeliefSequence {
        self.docs[doc_index].clone()
    }
}

/// Constant beliefs, independent of the text.
pub struct FixedBeliefs(pub Vec<Vec<f64>>);

impl BeliefSource for FixedBeliefs {
    fn beliefs(&self, _doc_index: usize, document: &Document) -> BeliefSequence {
        BeliefSequence {
            tokens: vec![self.0.clone(); document.tokens.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{resolve, Mention};
    use crate::eval::{greedy_predictions, oracle_accuracy};
    use crate::kg::{EdgeKind, LinkStats};
    use crate::synth::{generate_synthetic_world, SynthConfig};
    use crate::typesys::{MembershipCache, Relation, TypeSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn max_pooling() {
        let b = BeliefSequence { tokens: vec![vec![vec![0.2, 0.8]], vec![vec![0.7, 0.3]]] };
        assert_eq!(pool_mention_beliefs(&b, 0, 2, Pooling::Max).unwrap(), vec![vec![0.7, 0.8]]);
        assert_eq!(pool_mention_beliefs(&b, 1, 2, Pooling::Max).unwrap(), b.tokens[1]);
        let prod = pool_mention_beliefs(&b, 0, 2, Pooling::Product).unwrap();
        assert!((prod[0][0] - 0.14).abs() < 1e-15);
        assert_eq!(pool_mention_beliefs(&b, 1, 1, Pooling::Max), Err(LinkError::EmptySpan(1, 1)));
        assert!(pool_mention_beliefs(&b, 1, 3, Pooling::Max).is_err());
    }

    #[test]
    fn pooling_matches_loop_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = r.gen_range(1..8);
            let b = BeliefSequence {
                tokens: (0..n).map(|_| vec![(0..3).map(|_| r.gen::<f64>()).collect(), (0..2).map(|_| r.gen::<f64>()).collect()]).collect(),
            };
            let s = r.gen_range(0..n);
            let e = r.gen_range(s + 1..=n);
            let pooled = pool_mention_beliefs(&b, s, e, Pooling::Max).unwrap();
            for axis in 0..2 {
                for t in 0..pooled[axis].len() {
                    let mut m = f64::MIN;
                    for tok in s..e {
                        if b.tokens[tok][axis][t] > m {
                            m = b.tokens[tok][axis][t];
                        }
                    }
                    assert_eq!(pooled[axis][t], m);
                }
            }
        }
    }

    /// 0 animal, 1 car (classes); 2 jaguar the animal, 3 jaguar the car maker.
    fn jaguar() -> (KnowledgeGraph, LinkStats, AnnotatedCorpus, TypeSystem) {
        let mut g = KnowledgeGraph::new();
        for (i, l) in ["animal", "car", "jaguar (animal)", "Jaguar Cars"].iter().enumerate() {
            g.add_entity(EntityId(i as u64), *l).unwrap();
        }
        g.add_edge(EntityId(2), EdgeKind::InstanceOf, EntityId(0)).unwrap();
        g.add_edge(EntityId(3), EdgeKind::InstanceOf, EntityId(1)).unwrap();
        let mut s = LinkStats::new();
        s.add("jaguar", EntityId(3), 6).unwrap();
        s.add("jaguar", EntityId(2), 4).unwrap();
        let c = AnnotatedCorpus::new(vec![Document {
            doc_id: "d".into(),
            lang: "en".into(),
            tokens: "the jaguar hunts".split(' ').map(String::from).collect(),
            mentions: vec![Mention { start: 1, end: 2, gold: EntityId(2), candidates: None }],
        }])
        .unwrap();
        let sys = TypeSystem::from_relations(&[Relation::new(EntityId(0), EdgeKind::InstanceOf)]);
        (g, s, c, sys)
    }

    #[test]
    fn score_reductions_and_jaguar() {
        let (g, s, c, sys) = jaguar();
        let labeler = Labeler::new(&g, &sys, &MembershipCache::new()).unwrap();
        let ms = resolve(&c, &s, &g);
        let m = &ms[0];
        // axis types: 0 member (animal), 1 nonmember
        let pooled = vec![vec![0.9, 0.1]];
        for params in [SmoothingParams::uniform(1, 0.7, 0.0), SmoothingParams::uniform(1, 0.0, 0.8)] {
            assert_eq!(entity_score(EntityId(3), &pooled, m, &labeler, &params).unwrap(), 0.6);
        }
        let one = SmoothingParams::uniform(1, 1.0, 1.0);
        let half = vec![vec![0.5, 0.5]];
        assert!((entity_score(EntityId(3), &half, m, &labeler, &one).unwrap() - 0.30).abs() < 1e-15);
        // Animal belief 0.9: 0.4·0.9 = 0.36 beats 0.6·0.1 = 0.06.
        let d = link(&c.documents[0], &BeliefSequence { tokens: vec![pooled.clone(); 3] }, &[m], &labeler, &one, Pooling::Max).unwrap();
        assert_eq!(d[0].chosen, EntityId(2));
        assert!((d[0].ranked[0].1 - 0.36).abs() < 1e-12);
        assert_eq!(entity_score(EntityId(0), &pooled, m, &labeler, &one), Err(LinkError::NotCandidate(EntityId(0))));
    }

    #[test]
    fn raising_own_type_belief_never_lowers_score() {
        let (g, s, c, sys) = jaguar();
        let labeler = Labeler::new(&g, &sys, &MembershipCache::new()).unwrap();
        let ms = resolve(&c, &s, &g);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let params = SmoothingParams::uniform(1, r.gen(), r.gen());
            let p: f64 = r.gen();
            let lo = entity_score(EntityId(2), &[vec![p, 0.3]], &ms[0], &labeler, &params).unwrap();
            let hi = entity_score(EntityId(2), &[vec![p + (1.0 - p) * r.gen::<f64>(), 0.3]], &ms[0], &labeler, &params).unwrap();
            assert!(hi >= lo && lo >= 0.0 && hi.is_finite());
        }
    }

    fn world_setup(seed: u64) -> (crate::synth::SyntheticWorld, Vec<ResolvedMention>) {
        let w = generate_synthetic_world(seed, &SynthConfig { n_documents: 60, ..SynthConfig::default() }).unwrap();
        let ms = resolve(&w.corpus, &w.stats, &w.graph);
        (w, ms)
    }

    #[test]
    fn beta_zero_is_the_link_count_baseline() {
        for seed in 0..3 {
            let (w, ms) = world_setup(seed);
            let labeler = Labeler::new(&w.graph, &w.latent, &MembershipCache::new()).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let src = FixedBeliefs((0..labeler.num_axes()).map(|_| { let x: f64 = r.gen(); vec![x, 1.0 - x] }).collect());
            let params = SmoothingParams::uniform(labeler.num_axes(), 0.8, 0.0);
            let d = link_corpus(&w.corpus, &ms, &src, &labeler, &params, Pooling::Max).unwrap();
            assert_eq!(predictions(&d), greedy_predictions(&ms));
        }
    }

    #[test]
    fn one_hot_beliefs_reproduce_the_oracle() {
        let (w, ms) = world_setup(5);
        let labeler = Labeler::new(&w.graph, &w.latent, &MembershipCache::new()).unwrap();
        let src = OracleBeliefs::new(&w.corpus, &w.graph, &labeler);
        let params = SmoothingParams::uniform(labeler.num_axes(), 1.0, 1.0);
        let d = link_corpus(&w.corpus, &ms, &src, &labeler, &params, Pooling::Max).unwrap();
        assert_eq!(system_accuracy(&predictions(&d), &ms).unwrap(), oracle_accuracy(&ms, &labeler));
    }

    #[test]
    fn decisions_are_brute_force_argmax() {
        let (w, ms) = world_setup(6);
        let labeler = Labeler::new(&w.graph, &w.latent, &MembershipCache::new()).unwrap();
        let src = FixedBeliefs((0..labeler.num_axes()).map(|a| vec![0.3 + 0.05 * a as f64, 0.7 - 0.05 * a as f64]).collect());
        let params = SmoothingParams::default_for(labeler.num_axes());
        let d = link_corpus(&w.corpus, &ms, &src, &labeler, &params, Pooling::Max).unwrap();
        let pooled = src.0.clone();
        for (dec, m) in d.iter().zip(ms.iter().filter(|m| m.linkable())) {
            let mut best = (EntityId(u64::MAX), f64::MIN);
            for (e, _) in &m.ranked {
                let s = entity_score(*e, &pooled, m, &labeler, &params).unwrap();
                if s > best.1 || (s == best.1 && *e < best.0) {
                    best = (*e, s);
                }
            }
            assert_eq!(dec.chosen, best.0);
        }
    }

    #[test]
    fn grid_fitting() {
        let (w, ms) = world_setup(7);
        let labeler = Labeler::new(&w.graph, &w.latent, &MembershipCache::new()).unwrap();
        let src = OracleBeliefs::new(&w.corpus, &w.graph, &labeler);
        let only_zero = SmoothingGrid { alphas: vec![0.5], betas: vec![0.0] };
        let f = fit_smoothing(&w.corpus, &ms, &src, &labeler, &only_zero, Pooling::Max).unwrap();
        assert_eq!(f.params.beta, 0.0);
        assert_eq!(f.accuracy, crate::eval::s_greedy(&ms));
        let grid = SmoothingGrid { alphas: vec![0.0, 1.0], betas: vec![0.0, 1.0] };
        let f = fit_smoothing(&w.corpus, &ms, &src, &labeler, &grid, Pooling::Max).unwrap();
        assert!(f.accuracy.hits >= crate::eval::s_greedy(&ms).hits);
        let mut best = 0;
        for b in [0.0, 1.0] {
            for a in [0.0, 1.0] {
                let d = link_corpus(&w.corpus, &ms, &src, &labeler, &SmoothingParams::uniform(labeler.num_axes(), a, b), Pooling::Max).unwrap();
                best = best.max(system_accuracy(&predictions(&d), &ms).unwrap().hits);
            }
        }
        assert_eq!(f.accuracy.hits, best);
        let empty = SmoothingGrid { alphas: vec![], betas: vec![1.0] };
        assert_eq!(fit_smoothing(&w.corpus, &ms, &src, &labeler, &empty, Pooling::Max).unwrap_err(), LinkError::EmptyGrid);
    }
}
