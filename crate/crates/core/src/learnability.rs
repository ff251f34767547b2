//! Learnability of relations: how well a cheap classifier predicts relation membership
//! of a mention's gold entity from the words around the mention.
//!
//! Each axis gets `runs` independently seeded window classifiers (mean-pooled word
//! embeddings, a linear layer and a sigmoid), scored by held-out AUC. Runs own private
//! RNG streams derived from (master seed, axis, run), so training axes in parallel
//! gives the same numbers as training them one after the other.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedCorpus;
use crate::kg::KnowledgeGraph;
use crate::rng;
use crate::typesys::{members, Relation, SystemError};
use crate::vocab::Vocab;

/// Context words on each side of a mention.
pub const WINDOW_SIDE: usize = 10;
pub const WINDOW: usize = 2 * WINDOW_SIDE;
pub const EMBED_DIM: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("AUC needs at least one positive and one negative example")]
    SingleClass,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("score {0} is not a number")]
    NanScore(usize),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSample {
    pub context: [u32; WINDOW],
    pub label: bool,
}

/// Left and right context ids of a token span, padded to exactly `WINDOW` entries.
pub fn context_window(token_ids: &[u32], start: usize, end: usize) -> [u32; WINDOW] {
    let mut ctx = [Vocab::PAD_ID; WINDOW];
    for (slot, pos) in (0..WINDOW_SIDE).zip((0..WINDOW_SIDE).map(|k| start as isize - WINDOW_SIDE as isize + k as isize)) {
        if pos >= 0 {
            ctx[slot] = token_ids[pos as usize];
        }
    }
    for k in 0..WINDOW_SIDE {
        if let Some(&id) = token_ids.get(end + k) {
            ctx[WINDOW_SIDE + k] = id;
        }
    }
    ctx
}

/// One sample per mention, labeled with membership of the gold entity in `membership`.
pub fn window_dataset(
    corpus: &AnnotatedCorpus,
    vocab: &Vocab,
    graph: &KnowledgeGraph,
    membership: &FixedBitSet,
) -> Vec<WindowSample> {
    let mut out = Vec::with_capacity(corpus.num_mentions());
    for doc in &corpus.documents {
        let ids: Vec<u32> = doc.tokens.iter().map(|t| vocab.id(t)).collect();
        for m in &doc.mentions {
            let label = graph
                .index_of(m.gold)
                .is_some_and(|i| membership.contains(i));
            out.push(WindowSample {
                context: context_window(&ids, m.start, m.end),
                label,
            });
        }
    }
    out
}

pub fn build_window_dataset(
    corpus: &AnnotatedCorpus,
    graph: &KnowledgeGraph,
    relation: &Relation,
    vocab: &Vocab,
) -> Result<Vec<WindowSample>, LearnError> {
    let set = members(graph, relation)?;
    Ok(window_dataset(corpus, vocab, graph, &set))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub init_scale: f64,
}

impl Default for WindowTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 128,
            learning_rate: 10.0,
            dropout: 0.5,
            init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowClassifierModel {
    pub embeddings: Vec<[f64; EMBED_DIM]>,
    pub weights: [f64; EMBED_DIM],
    pub bias: f64,
}

impl WindowClassifierModel {
    fn pooled(&self, context: &[u32; WINDOW]) -> ([f64; EMBED_DIM], usize) {
        let mut h = [0.0; EMBED_DIM];
        let mut n = 0;
        for &t in context.iter().filter(|&&t| t != Vocab::PAD_ID) {
            let e = self.embeddings.get(t as usize).unwrap_or(&self.embeddings[Vocab::UNK_ID as usize]);
            for d in 0..EMBED_DIM {
                h[d] += e[d];
            }
            n += 1;
        }
        if n > 0 {
            h.iter_mut().for_each(|x| *x /= n as f64);
        }
        (h, n)
    }

    /// Probability that the gold entity belongs to the relation. Deterministic.
    pub fn predict(&self, context: &[u32; WINDOW]) -> f64 {
        let (h, _) = self.pooled(context);
        sigmoid(dot(&self.weights, &h) + self.bias)
    }
}

fn dot(a: &[f64; EMBED_DIM], b: &[f64; EMBED_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Trains with mini-batch SGD on log loss. Deterministic given `seed`.
pub fn train_window_classifier(
    samples: &[WindowSample],
    vocab_size: usize,
    config: &WindowTrainConfig,
    seed: u64,
) -> Result<WindowClassifierModel, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut rng = rng::stream(&[seed, 0x3ED]);
    let vocab_size = vocab_size.max(2);
    let mut model = WindowClassifierModel {
        embeddings: (0..vocab_size)
            .map(|_| std::array::from_fn(|_| normal(&mut rng) * config.init_scale))
            .collect(),
        weights: std::array::from_fn(|_| normal(&mut rng)),
        bias: 0.0,
    };
    model.embeddings[Vocab::PAD_ID as usize] = [0.0; EMBED_DIM];
    let keep = 1.0 - config.dropout;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad_emb = vec![[0.0; EMBED_DIM]; vocab_size];
    let mut touched: Vec<u32> = Vec::new();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grad_w = [0.0; EMBED_DIM];
            let mut grad_b = 0.0;
            for &i in batch {
                let s = &samples[i];
                let (h, n) = model.pooled(&s.context);
                let mask: [f64; EMBED_DIM] = std::array::from_fn(|_| {
                    if config.dropout > 0.0 && rng.gen::<f64>() < config.dropout {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                let hd: [f64; EMBED_DIM] = std::array::from_fn(|d| h[d] * mask[d]);
                let p = sigmoid(dot(&model.weights, &hd) + model.bias);
                let dz = p - f64::from(u8::from(s.label));
                for d in 0..EMBED_DIM {
                    grad_w[d] += dz * hd[d];
                }
                grad_b += dz;
                if n == 0 {
                    continue;
                }
                let dh: [f64; EMBED_DIM] = std::array::from_fn(|d| dz * model.weights[d] * mask[d] / n as f64);
                for &t in s.context.iter().filter(|&&t| t != Vocab::PAD_ID) {
                    let t = (t as usize).min(vocab_size - 1) as u32;
                    let g = &mut grad_emb[t as usize];
                    if g.iter().all(|x| *x == 0.0) {
                        touched.push(t);
                    }
                    for d in 0..EMBED_DIM {
                        g[d] += dh[d];
                    }
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for d in 0..EMBED_DIM {
                model.weights[d] -= scale * grad_w[d];
            }
            model.bias -= scale * grad_b;
            touched.sort_unstable();
            touched.dedup();
            for &t in &touched {
                let g = &mut grad_emb[t as usize];
                for d in 0..EMBED_DIM {
                    model.embeddings[t as usize][d] -= scale * g[d];
                }
                *g = [0.0; EMBED_DIM];
            }
            touched.clear();
        }
    }
    Ok(model)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic; ties count 1/2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, LearnError> {
    if scores.len() != labels.len() {
        return Err(LearnError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(LearnError::NanScore(i));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LearnError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of positives, doubled to stay integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        // average rank of the tie block is (i + 1 + j + 1) / 2
        rank_sum_x2 += pos_in_tie * (i as u128 + j as u128 + 2);
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    Ok(u_x2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnabilityConfig {
    pub runs: usize,
    pub seed: u64,
    /// Score on a held-out 20% split instead of the training samples.
    pub held_out: bool,
    pub held_out_fraction: f64,
    /// Axes with mean AUC at or below 0.5 + epsilon count as unlearnable.
    pub epsilon: f64,
    pub train: WindowTrainConfig,
}

impl Default for LearnabilityConfig {
    fn default() -> Self {
        Self {
            runs: 4,
            seed: 0,
            held_out: true,
            held_out_fraction: 0.2,
            epsilon: 0.01,
            train: WindowTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLearnability {
    pub relation: Relation,
    pub runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Mean AUC is within epsilon of chance.
    pub unlearnable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityScore {
    pub axes: Vec<AxisLearnability>,
    /// Mean of the per-axis means (0 for no axes).
    pub system: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn axis_key(relation: &Relation) -> u64 {
    rng::derive_seed(&[
        relation.root.0,
        rng::hash_str(relation.edge.as_str()),
        u64::from(relation.include_root),
        relation
            .transitive
            .iter()
            .fold(0, |h, k| h ^ rng::hash_str(k.as_str())),
    ])
}

/// AUC of one seeded run on one axis dataset.
pub fn run_auc(samples: &[WindowSample], vocab_size: usize, config: &LearnabilityConfig, seed: u64) -> f64 {
    let mut rng = rng::stream(&[seed, 0x5B11]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = if config.held_out {
        let n_test = ((samples.len() as f64) * config.held_out_fraction).round() as usize;
        let (test, train) = order.split_at(n_test.min(samples.len()));
        (train.to_vec(), test.to_vec())
    } else {
        (order.clone(), order)
    };
    let train: Vec<WindowSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let both = |xs: &[usize]| xs.iter().any(|&i| samples[i].label) && xs.iter().any(|&i| !samples[i].label);
    if !both(&train_idx) || !both(&test_idx) {
        return 0.5;
    }
    let model = match train_window_classifier(&train, vocab_size, &config.train, seed) {
        Ok(m) => m,
        Err(_) => return 0.5,
    };
    let scores: Vec<f64> = test_idx.iter().map(|&i| model.predict(&samples[i].context)).collect();
    let labels: Vec<bool> = test_idx.iter().map(|&i| samples[i].label).collect();
    auc(&scores, &labels).unwrap_or(0.5)
}

pub fn axis_learnability(
    relation: &Relation,
    corpus: &AnnotatedCorpus,
    vocab: &Vocab,
    graph: &KnowledgeGraph,
    membership: &FixedBitSet,
    config: &LearnabilityConfig,
) -> AxisLearnability {
    let samples = window_dataset(corpus, vocab, graph, membership);
    let key = axis_key(relation);
    let runs: Vec<f64> = (0..config.runs)
        .map(|r| run_auc(&samples, vocab.len(), config, rng::derive_seed(&[config.seed, key, r as u64])))
        .collect();
    let (mean, std) = mean_std(&runs);
    AxisLearnability {
        relation: relation.clone(),
        runs,
        mean,
        std,
        unlearnable: mean <= 0.5 + config.epsilon,
    }
}

/// Per-axis learnability in parallel; the result does not depend on the worker count.
pub fn learnability(
    axes: &[Relation],
    corpus: &AnnotatedCorpus,
    graph: &KnowledgeGraph,
    config: &LearnabilityConfig,
) -> Result<LearnabilityScore, LearnError> {
    let vocab = Vocab::from_corpus(corpus);
    let sets: Vec<FixedBitSet> = axes
        .par_iter()
        .map(|r| members(graph, r))
        .collect::<Result<_, _>>()?;
    let scored: Vec<AxisLearnability> = axes
        .par_iter()
        .zip(&sets)
        .map(|(r, s)| axis_learnability(r, corpus, &vocab, graph, s, config))
        .collect();
    Ok(summarize(scored))
}

pub fn summarize(axes: Vec<AxisLearnability>) -> LearnabilityScore {
    let means: Vec<f64> = axes.iter().map(|a| a.mean).collect();
    LearnabilityScore {
        system: mean_std(&means).0,
        axes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindRow {
    pub edge_kind: String,
    pub axes: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnabilityReport {
    pub by_kind: Vec<KindRow>,
    /// (mean AUC, AUC std) per axis.
    pub scatter: Vec<(f64, f64)>,
}

/// Groups per-axis mean AUCs by membership edge kind.
pub fn learnability_report(scores: &[AxisLearnability]) -> LearnabilityReport {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in scores {
        groups.entry(a.relation.edge.to_string()).or_default().push(a.mean);
    }
    LearnabilityReport {
        by_kind: groups
            .into_iter()
            .map(|(edge_kind, means)| {
                let (auc_mean, auc_std) = mean_std(&means);
                KindRow {
                    edge_kind,
                    axes: means.len(),
                    auc_mean,
                    auc_std,
                }
            })
            .collect(),
        scatter: scores.iter().map(|a| (a.mean, a.std)).collect(),
    }
}

/// Per-axis TSV: axis (root id), edge_kind, auc_mean, auc_std.
pub fn write_axis_tsv<W: std::io::Write>(scores: &[AxisLearnability], mut out: W) -> std::io::Result<()> {
    writeln!(out, "axis\tedge_kind\tauc_mean\tauc_std")?;
    for a in scores {
        writeln!(out, "{}\t{}\t{}\t{}", a.relation.root, a.relation.edge, a.mean, a.std)?;
    }
    Ok(())
}
