//! The full desk pipeline: simplify, discover a type system, train, smooth, link.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{resolve, AnnotatedCorpus};
use crate::eval::{oracle_accuracy, s_greedy, system_accuracy, Accuracy, ObjectiveConfig};
use crate::kg::{Commonness, EdgeKind, KnowledgeGraph, LinkStats};
use crate::learnability::{learnability, LearnError, LearnabilityConfig, LearnabilityScore};
use crate::linker::{fit_smoothing, link_corpus, predictions, FittedSmoothing, LinkError, Pooling, SmoothingGrid};
use crate::search::{enumerate_relations, run_search, CandidatePool, Method, OracleObjective, SearchConfig, SearchError, SearchResult};
use crate::simplify::{simplify, SimplificationReport, SimplifyConfig};
use crate::typeclf::{label_corpus, train, AdamConfig, ClfError, TokenClassifierModel, TrainConfig};
use crate::typesys::{Labeler, MembershipCache, SystemError, TypeSystem};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Clf(#[from] ClfError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub simplify: Option<SimplifyConfig>,
    /// Train, dev and test fractions of the corpus, by document position.
    pub split: [f64; 3],
    pub kinds: Vec<EdgeKind>,
    pub relation_roots: usize,
    pub lambda: f64,
    pub learnability: LearnabilityConfig,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub grid: SmoothingGrid,
    pub pooling: Pooling,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            simplify: Some(SimplifyConfig::default()),
            split: [0.7, 0.15, 0.15],
            kinds: vec![EdgeKind::InstanceOf, EdgeKind::WikipediaCategory],
            relation_roots: 64,
            lambda: crate::eval::DEFAULT_LAMBDA,
            learnability: LearnabilityConfig::default(),
            search: SearchConfig::method(Method::Greedy),
            train: desk_train_config(),
            grid: SmoothingGrid::default(),
            pooling: Pooling::Max,
        }
    }
}

/// Classifier settings sized for desk-scale corpora.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        input_dropout: 0.3,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub simplification: Option<SimplificationReport>,
    pub pool_size: usize,
    pub search: SearchResult,
    pub system: serde_json::Value,
    pub train_losses: Vec<f64>,
    pub smoothing: Option<FittedSmoothing>,
    /// Measured on the test split.
    pub greedy: Accuracy,
    pub oracle: Accuracy,
    pub linked: Accuracy,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub system: TypeSystem,
    pub stats: LinkStats,
    pub model: Option<TokenClassifierModel>,
}

/// Candidate axes over the most common roots, scored for learnability on `corpus`;
/// unlearnable axes are dropped.
pub fn discover_pool(
    graph: &KnowledgeGraph,
    corpus: &AnnotatedCorpus,
    kinds: &[EdgeKind],
    roots: usize,
    config: &LearnabilityConfig,
    cache: &MembershipCache,
) -> Result<(CandidatePool, LearnabilityScore), PipelineError> {
    let relations = enumerate_relations(graph, kinds, Commonness::ChildCount, roots);
    let scores = learnability(&relations, corpus, graph, config)?;
    let pool = CandidatePool::from_scores(graph, &scores.axes, cache)?;
    Ok((pool, scores))
}

pub fn run_pipeline(
    graph: &KnowledgeGraph,
    stats: &LinkStats,
    corpus: &AnnotatedCorpus,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    if config.split.iter().any(|f| *f <= 0.0) || (config.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Config("split fractions must be positive and sum to 1".into()));
    }
    let (stats, simplification) = match &config.simplify {
        Some(cfg) => {
            let (s, r) = simplify(stats, graph, cfg);
            (s, Some(r))
        }
        None => (stats.clone(), None),
    };
    let parts = corpus.split(&config.split);
    let (train_c, dev_c, test_c) = (&parts[0], &parts[1], &parts[2]);
    let train_m = resolve(train_c, &stats, graph);
    let dev_m = resolve(dev_c, &stats, graph);
    let test_m = resolve(test_c, &stats, graph);

    let cache = MembershipCache::new();
    let (pool, _) = discover_pool(graph, train_c, &config.kinds, config.relation_roots, &config.learnability, &cache)?;
    let objective = OracleObjective::new(
        &pool,
        &train_m,
        ObjectiveConfig::new(config.lambda).map_err(|e| PipelineError::Config(e.to_string()))?,
    );
    let search = run_search(&objective, &config.search)?;
    let system = TypeSystem::from_relations(&pool.relations(&search.axes));
    let labeler = Labeler::new(graph, &system, &cache)?;

    let greedy = s_greedy(&test_m);
    let oracle = oracle_accuracy(&test_m, &labeler);
    let (model, train_losses, smoothing, linked) = if system.is_empty() {
        (None, Vec::new(), None, greedy)
    } else {
        let labeling = label_corpus(train_c, graph, &system, &cache)?;
        let (model, report) = train(train_c, &labeling, &config.train)?;
        let fit = fit_smoothing(dev_c, &dev_m, &model, &labeler, &config.grid, config.pooling)?;
        let decisions = link_corpus(test_c, &test_m, &model, &labeler, &fit.params, config.pooling)?;
        let linked = system_accuracy(&predictions(&decisions), &test_m).expect("every linkable mention is decided");
        (Some(model), report.epoch_losses, Some(fit), linked)
    };
    Ok(PipelineOutput {
        report: PipelineReport {
            simplification,
            pool_size: pool.len(),
            search,
            system: system.to_json(),
            train_losses,
            smoothing,
            greedy,
            oracle,
            linked,
        },
        system,
        stats,
        model,
    })
}
