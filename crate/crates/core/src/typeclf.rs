//! Per-token multi-axis type classifier.
//!
//! Each token is classified from a window of word embeddings around it, through one
//! tanh hidden layer and one softmax head per type axis. Only tokens inside gold
//! mentions carry labels; all others contribute nothing to the loss.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedCorpus, Document};
use crate::kg::KnowledgeGraph;
use crate::rng;
use crate::typesys::{Labeler, MembershipCache, SystemError, TypeSystem};
use crate::vocab::{Vocab, UNK};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClfError {
    #[error("no labeled tokens to train on")]
    EmptySupervision,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Per document, per token: one type id per axis, or `None` when unsupervised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLabeling {
    pub axis_names: Vec<String>,
    pub num_types: Vec<usize>,
    pub docs: Vec<Vec<Option<Vec<u32>>>>,
}

impl TokenLabeling {
    pub fn labeled_tokens(&self) -> usize {
        self.docs.iter().flatten().filter(|t| t.is_some()).count()
    }
}

/// Labels every token of a gold mention with the gold entity's type on each axis.
pub fn label_corpus(
    corpus: &AnnotatedCorpus,
    graph: &KnowledgeGraph,
    system: &TypeSystem,
    cache: &MembershipCache,
) -> Result<TokenLabeling, ClfError> {
    let labeler = Labeler::new(graph, system, cache)?;
    let docs = corpus
        .documents
        .iter()
        .map(|doc| {
            let mut labels = vec![None; doc.tokens.len()];
            if system.is_empty() {
                return labels;
            }
            for m in &doc.mentions {
                let Some(idx) = graph.index_of(m.gold) else { continue };
                let tuple: Vec<u32> = labeler.label_tuple(idx).into_iter().map(|t| t as u32).collect();
                for slot in &mut labels[m.start..m.end] {
                    *slot = Some(tuple.clone());
                }
            }
            labels
        })
        .collect();
    Ok(TokenLabeling {
        axis_names: system.axes.iter().map(|a| a.name.clone()).collect(),
        num_types: system.axes.iter().map(|a| a.num_types()).collect(),
        docs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub unk: f64,
    pub decapitalize: f64,
    pub strip_s: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            unk: 0.05,
            decapitalize: 0.1,
            strip_s: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            unk: 0.0,
            decapitalize: 0.0,
            strip_s: 0.0,
        }
    }
}

/// Independent per-token noise: swap for `<UNK>`, lowercase, drop a trailing "s".
pub fn augment(tokens: &[String], config: &AugmentConfig, rng: &mut impl Rng) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let unk = rng.gen::<f64>() < config.unk;
            let lower = rng.gen::<f64>() < config.decapitalize;
            let strip = rng.gen::<f64>() < config.strip_s;
            if unk {
                return UNK.to_string();
            }
            let mut s = if lower { t.to_lowercase() } else { t.clone() };
            if strip && s.len() > 1 && (s.ends_with('s') || s.ends_with('S')) {
                s.pop();
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub radius: usize,
    pub hidden: usize,
    /// Hashed prefix/suffix buckets; 0 disables affix features.
    pub affix_buckets: usize,
    pub axis_names: Vec<String>,
    pub num_types: Vec<usize>,
}

impl ModelShape {
    fn window(&self) -> usize {
        2 * self.radius + 1
    }

    fn input(&self) -> usize {
        self.window() * self.dim
    }
}

#[derive(Debug, Clone)]
struct Layout {
    emb: usize,
    affix: usize,
    w1: usize,
    b1: usize,
    heads: Vec<(usize, usize)>,
    len: usize,
}

impl Layout {
    fn new(shape: &ModelShape, vocab: usize) -> Self {
        let emb = 0;
        let affix = emb + vocab * shape.dim;
        let w1 = affix + shape.affix_buckets * shape.dim;
        let b1 = w1 + shape.hidden * shape.input();
        let mut off = b1 + shape.hidden;
        let heads = shape
            .num_types
            .iter()
            .map(|&k| {
                let w = off;
                let b = w + k * shape.hidden;
                off = b + k;
                (w, b)
            })
            .collect();
        Self {
            emb,
            affix,
            w1,
            b1,
            heads,
            len: off,
        }
    }
}

/// Word ids and affix bucket ids of a token sequence.
#[derive(Debug, Clone)]
struct Encoded {
    ids: Vec<u32>,
    affixes: Vec<[u32; 4]>,
}

/// One classification instance: the window around a token and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `None` marks padding.
    pub window: Vec<Option<(u32, [u32; 4])>>,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenClassifierModel {
    pub version: u32,
    pub vocab: Vocab,
    pub shape: ModelShape,
    pub params: Vec<f64>,
}

/// Per token, per axis: a distribution over that axis's types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSequence {
    pub tokens: Vec<Vec<Vec<f64>>>,
}

struct Forward {
    x: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<Vec<f64>>,
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    logits.iter_mut().for_each(|l| *l /= sum);
}

impl TokenClassifierModel {
    /// Random embeddings and hidden layer, zero output heads.
    pub fn init(vocab: Vocab, shape: ModelShape, seed: u64) -> Self {
        let layout = Layout::new(&shape, vocab.len());
        let mut params = vec![0.0; layout.len];
        let mut r = rng::stream(&[seed, 0x1417]);
        for p in &mut params[layout.emb..layout.w1] {
            *p = r.gen_range(-0.1..0.1);
        }
        let bound = (6.0 / (shape.input() + shape.hidden) as f64).sqrt();
        for p in &mut params[layout.w1..layout.b1] {
            *p = r.gen_range(-bound..bound);
        }
        Self {
            version: CHECKPOINT_VERSION,
            vocab,
            shape,
            params,
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.shape, self.vocab.len())
    }

    pub fn num_axes(&self) -> usize {
        self.shape.num_types.len()
    }

    fn encode(&self, tokens: &[String]) -> Encoded {
        let ids = tokens.iter().map(|t| self.vocab.id(t)).collect();
        let affixes = if self.shape.affix_buckets == 0 {
            Vec::new()
        } else {
            tokens.iter().map(|t| affix_ids(t, self.shape.affix_buckets)).collect()
        };
        Encoded { ids, affixes }
    }

    fn example(&self, enc: &Encoded, pos: usize, labels: Vec<u32>) -> Example {
        let r = self.shape.radius as isize;
        let window = (-r..=r)
            .map(|o| {
                let p = pos as isize + o;
                if p < 0 || p as usize >= enc.ids.len() {
                    None
                } else {
                    let p = p as usize;
                    Some((enc.ids[p], enc.affixes.get(p).copied().unwrap_or([0; 4])))
                }
            })
            .collect();
        Example { window, labels }
    }

    /// Window examples for every labeled token of a document.
    pub fn examples(&self, tokens: &[String], labels: &[Option<Vec<u32>>]) -> Vec<Example> {
        let enc = self.encode(tokens);
        labels
            .iter()
            .enumerate()
            .filter_map(|(p, l)| l.as_ref().map(|l| self.example(&enc, p, l.clone())))
            .collect()
    }

    fn forward(&self, p: &[f64], layout: &Layout, ex: &Example, dropout: Option<&[f64]>) -> Forward {
        let s = &self.shape;
        let d = s.dim;
        let mut x = vec![0.0; s.input()];
        for (k, slot) in ex.window.iter().enumerate() {
            let dst = &mut x[k * d..(k + 1) * d];
            let id = slot.map_or(Vocab::PAD_ID, |t| t.0) as usize;
            dst.copy_from_slice(&p[layout.emb + id * d..layout.emb + (id + 1) * d]);
            if let (Some((_, aff)), true) = (slot, s.affix_buckets > 0) {
                for &a in aff {
                    let a = a as usize;
                    for (v, w) in dst.iter_mut().zip(&p[layout.affix + a * d..layout.affix + (a + 1) * d]) {
                        *v += w;
                    }
                }
            }
        }
        if let Some(mask) = dropout {
            x.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let n_in = s.input();
        let h: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let row = &p[layout.w1 + j * n_in..layout.w1 + (j + 1) * n_in];
                let a: f64 = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + p[layout.b1 + j];
                a.tanh()
            })
            .collect();
        let probs = layout
            .heads
            .iter()
            .zip(&s.num_types)
            .map(|(&(w, b), &k)| {
                let mut logits: Vec<f64> = (0..k)
                    .map(|t| {
                        let row = &p[w + t * s.hidden..w + (t + 1) * s.hidden];
                        row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + p[b + t]
                    })
                    .collect();
                softmax(&mut logits);
                logits
            })
            .collect();
        Forward { x, h, probs }
    }

    /// Adds the NLL gradient of one example to `grad`; returns its loss.
    fn backward(
        &self,
        p: &[f64],
        layout: &Layout,
        ex: &Example,
        dropout: Option<&[f64]>,
        grad: &mut [f64],
        scale: f64,
    ) -> f64 {
        let s = &self.shape;
        let fwd = self.forward(p, layout, ex, dropout);
        let mut loss = 0.0;
        let mut dh = vec![0.0; s.hidden];
        for (axis, (&(w, b), probs)) in layout.heads.iter().zip(&fwd.probs).enumerate() {
            let gold = ex.labels[axis] as usize;
            loss -= probs[gold].max(1e-300).ln();
            for (t, &pt) in probs.iter().enumerate() {
                let dl = (pt - f64::from(u8::from(t == gold))) * scale;
                grad[b + t] += dl;
                let row = w + t * s.hidden;
                for j in 0..s.hidden {
                    grad[row + j] += dl * fwd.h[j];
                    dh[j] += dl * p[row + j];
                }
            }
        }
        let n_in = s.input();
        let mut dx = vec![0.0; n_in];
        for j in 0..s.hidden {
            let da = dh[j] * (1.0 - fwd.h[j] * fwd.h[j]);
            if da == 0.0 {
                continue;
            }
            grad[layout.b1 + j] += da;
            let row = layout.w1 + j * n_in;
            for i in 0..n_in {
                grad[row + i] += da * fwd.x[i];
                dx[i] += da * p[row + i];
            }
        }
        if let Some(mask) = dropout {
            dx.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        let d = s.dim;
        for (k, slot) in ex.window.iter().enumerate() {
            let g = &dx[k * d..(k + 1) * d];
            let id = slot.map_or(Vocab::PAD_ID, |t| t.0) as usize;
            for (dst, v) in grad[layout.emb + id * d..layout.emb + (id + 1) * d].iter_mut().zip(g) {
                *dst += v;
            }
            if let (Some((_, aff)), true) = (slot, s.affix_buckets > 0) {
                for &a in aff {
                    let a = a as usize;
                    for (dst, v) in grad[layout.affix + a * d..layout.affix + (a + 1) * d].iter_mut().zip(g) {
                        *dst += v;
                    }
                }
            }
        }
        loss
    }

    /// Mean NLL over a batch and its gradient, without dropout.
    pub fn loss_and_grad(&self, batch: &[Example]) -> (f64, Vec<f64>) {
        self.batch_grad(&self.params, batch, None)
    }

    /// Mean NLL of a batch under explicit parameters.
    pub fn loss_at(&self, params: &[f64], batch: &[Example]) -> f64 {
        let layout = self.layout();
        batch
            .iter()
            .map(|ex| {
                let f = self.forward(params, &layout, ex, None);
                f.probs
                    .iter()
                    .zip(&ex.labels)
                    .map(|(p, &t)| -p[t as usize].max(1e-300).ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / batch.len().max(1) as f64
    }

    fn batch_grad(&self, p: &[f64], batch: &[Example], dropout: Option<(f64, u64)>) -> (f64, Vec<f64>) {
        const CHUNK: usize = 16;
        let layout = self.layout();
        let scale = 1.0 / batch.len().max(1) as f64;
        let parts: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut g = vec![0.0; layout.len];
                let mut loss = 0.0;
                for (i, ex) in chunk.iter().enumerate() {
                    let mask = dropout.map(|(rate, seed)| {
                        let mut r = rng::stream(&[seed, (c * CHUNK + i) as u64]);
                        (0..self.shape.input())
                            .map(|_| if r.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
                            .collect::<Vec<f64>>()
                    });
                    loss += self.backward(p, &layout, ex, mask.as_deref(), &mut g, scale);
                }
                (loss, g)
            })
            .collect();
        let mut grad = vec![0.0; layout.len];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (loss * scale, grad)
    }

    pub fn predict(&self, tokens: &[String]) -> BeliefSequence {
        let layout = self.layout();
        let enc = self.encode(tokens);
        BeliefSequence {
            tokens: (0..tokens.len())
                .map(|pos| {
                    let ex = self.example(&enc, pos, Vec::new());
                    self.forward(&self.params, &layout, &ex, None).probs
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ClfError> {
        let err = |m: String| ClfError::Checkpoint {
            path: path.display().to_string(),
            message: m,
        };
        let json = serde_json::to_vec(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClfError> {
        let err = |m: String| ClfError::Checkpoint {
            path: path.display().to_string(),
            message: m,
        };
        let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
        let model: Self = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if model.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {}", model.version)));
        }
        if model.params.len() != model.layout().len {
            return Err(err("parameter count does not match the model shape".into()));
        }
        Ok(model)
    }
}

fn affix_ids(token: &str, buckets: usize) -> [u32; 4] {
    let t: Vec<char> = token.to_lowercase().chars().collect();
    let pre = |n: usize| t.iter().take(n).collect::<String>();
    let suf = |n: usize| t[t.len().saturating_sub(n)..].iter().collect::<String>();
    let h = |tag: &str, s: String| (rng::hash_str(&format!("{tag}:{s}")) % buckets as u64) as u32;
    [h("p2", pre(2)), h("p3", pre(3)), h("s2", suf(2)), h("s3", suf(3))]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub anneal: f64,
    pub anneal_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            anneal: 0.99,
            anneal_every: 10_000,
        }
    }
}

impl AdamConfig {
    /// Learning rate after `steps` completed updates.
    pub fn lr_at(&self, steps: u64) -> f64 {
        self.lr * self.anneal.powi((steps / self.anneal_every) as i32)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.config;
        let lr = c.lr_at(self.steps);
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub radius: usize,
    pub hidden: usize,
    pub affix_buckets: usize,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub input_dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            radius: 5,
            hidden: 64,
            affix_buckets: 0,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            input_dropout: 0.0,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClfError> {
        let a = &self.augment;
        for p in [a.unk, a.decapitalize, a.strip_s, self.input_dropout] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ClfError::Config("probabilities must lie in [0, 1]".into()));
            }
        }
        if self.input_dropout >= 1.0 || self.batch_size == 0 || self.dim == 0 || self.hidden == 0 {
            return Err(ClfError::Config(
                "dropout must be below 1 and sizes at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A model plus optimizer state.
pub struct Trainer {
    pub model: TokenClassifierModel,
    adam: Adam,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(model: TokenClassifierModel, config: TrainConfig) -> Self {
        let adam = Adam::new(config.adam, model.params.len());
        Self { model, adam, config }
    }

    /// One Adam step on a batch; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[Example]) -> f64 {
        let dropout = (self.config.input_dropout > 0.0).then(|| {
            (
                self.config.input_dropout,
                rng::derive_seed(&[self.config.seed, 0xD0, self.adam.steps()]),
            )
        });
        let (loss, grad) = self.model.batch_grad(&self.model.params, batch, dropout);
        self.adam.update(&mut self.model.params, &grad);
        loss
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch loss at every step.
    pub losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    corpus: &AnnotatedCorpus,
    labeling: &TokenLabeling,
    config: &TrainConfig,
) -> Result<(TokenClassifierModel, TrainReport), ClfError> {
    config.validate()?;
    if labeling.docs.len() != corpus.documents.len() {
        return Err(ClfError::Shape(format!(
            "labeling covers {} documents, corpus has {}",
            labeling.docs.len(),
            corpus.documents.len()
        )));
    }
    if labeling.labeled_tokens() == 0 {
        return Err(ClfError::EmptySupervision);
    }
    let mut vocab = Vocab::from_corpus(corpus);
    for d in &corpus.documents {
        for t in &d.tokens {
            // Augmented spellings get their own rows when they can occur.
            if config.augment.decapitalize > 0.0 {
                vocab.insert(&t.to_lowercase());
            }
        }
    }
    let shape = ModelShape {
        dim: config.dim,
        radius: config.radius,
        hidden: config.hidden,
        affix_buckets: config.affix_buckets,
        axis_names: labeling.axis_names.clone(),
        num_types: labeling.num_types.clone(),
    };
    let model = TokenClassifierModel::init(vocab, shape, config.seed);
    let mut trainer = Trainer::new(model, config.clone());
    let positions: Vec<(usize, usize)> = labeling
        .docs
        .iter()
        .enumerate()
        .flat_map(|(d, toks)| {
            toks.iter()
                .enumerate()
                .filter(|(_, l)| l.is_some())
                .map(move |(p, _)| (d, p))
        })
        .collect();
    let mut report = TrainReport {
        losses: Vec::new(),
        epoch_losses: Vec::new(),
    };
    for epoch in 0..config.epochs {
        let encoded: Vec<Option<Encoded>> = corpus
            .documents
            .par_iter()
            .enumerate()
            .map(|(d, doc)| {
                if labeling.docs[d].iter().all(Option::is_none) {
                    return None;
                }
                let mut r = rng::stream(&[config.seed, 0xA6, epoch as u64, d as u64]);
                let toks = augment(&doc.tokens, &config.augment, &mut r);
                Some(trainer.model.encode(&toks))
            })
            .collect();
        let mut order = positions.clone();
        let mut r: ChaCha8Rng = rng::stream(&[config.seed, 0x5F, epoch as u64]);
        order.shuffle(&mut r);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let examples: Vec<Example> = batch
                .iter()
                .map(|&(d, p)| {
                    let enc = encoded[d].as_ref().expect("labeled document is encoded");
                    let labels = labeling.docs[d][p].clone().expect("labeled position");
                    trainer.model.example(enc, p, labels)
                })
                .collect();
            let loss = trainer.step(&examples);
            total += loss * batch.len() as f64;
            report.losses.push(loss);
        }
        report.epoch_losses.push(total / positions.len() as f64);
    }
    Ok((trainer.model, report))
}

/// Beliefs for the tokens of a document.
pub trait BeliefSource: Sync {
    fn beliefs(&self, doc_index: usize, document: &Document) -> BeliefSequence;
}

impl BeliefSource for TokenClassifierModel {
    fn beliefs(&self, _doc_index: usize, document: &Document) -> BeliefSequence {
        self.predict(&document.tokens)
    }
}

/// Fraction of labeled tokens whose argmax type is right on every axis.
pub fn token_accuracy(model: &TokenClassifierModel, corpus: &AnnotatedCorpus, labeling: &TokenLabeling) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for (doc, labels) in corpus.documents.iter().zip(&labeling.docs) {
        let beliefs = model.predict(&doc.tokens);
        for (b, l) in beliefs.tokens.iter().zip(labels) {
            let Some(l) = l else { continue };
            total += 1;
            let ok = b.iter().zip(l).all(|(dist, &t)| {
                let best = dist
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
                    .map(|x| x.0);
                best == Some(t as usize)
            });
            hits += usize::from(ok);
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
