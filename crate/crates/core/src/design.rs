//! Interactive type-system design: evaluate authored systems against a fixed world.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{resolve, AnnotatedCorpus, CorpusError, ResolvedMention};
use crate::eval::{
    error_analysis, gold_recall, objective_j, oracle_accuracy, oracle_predictions, s_greedy, Accuracy, ErrorRow,
    EvalError, ObjectiveConfig,
};
use crate::kg::{load_graph, load_links, Commonness, EdgeKind, KgError, KnowledgeGraph, LinkStats};
use crate::learnability::{axis_learnability, LearnabilityConfig};
use crate::search::enumerate_relations;
use crate::synth::{generate_synthetic_world, SynthConfig, SynthError};
use crate::typesys::{Labeler, MembershipCache, Relation, SystemError, TypeAxis, TypeSystem};
use crate::vocab::Vocab;

pub const ERROR_PAGE_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("{}: {message}", path.display())]
    Load { path: PathBuf, message: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid setting: {0}")]
    Setting(String),
}

/// Where a world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldSource {
    Files {
        /// Directory holding `entities.tsv` and `edges.tsv`.
        graph: PathBuf,
        links: PathBuf,
        corpus: PathBuf,
    },
    Synthetic {
        seed: u64,
        #[serde(default)]
        config: SynthConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInfo {
    pub relation: Relation,
    pub root_label: String,
    pub members: usize,
}

/// An immutable world with everything evaluation needs precomputed.
#[derive(Debug)]
pub struct DesignWorld {
    pub graph: KnowledgeGraph,
    pub stats: LinkStats,
    pub corpus: AnnotatedCorpus,
    pub mentions: Vec<ResolvedMention>,
    pub vocab: Vocab,
    pub cache: MembershipCache,
    pub relations: Vec<RelationInfo>,
}

fn must_exist(path: &Path) -> Result<(), DesignError> {
    if path.exists() {
        Ok(())
    } else {
        Err(DesignError::Load {
            path: path.to_path_buf(),
            message: "no such file or directory".into(),
        })
    }
}

impl DesignWorld {
    pub fn new(graph: KnowledgeGraph, stats: LinkStats, corpus: AnnotatedCorpus, relation_roots: usize) -> Self {
        let mentions = resolve(&corpus, &stats, &graph);
        let vocab = Vocab::from_corpus(&corpus);
        let cache = MembershipCache::new();
        let kinds: Vec<EdgeKind> = graph.kinds().to_vec();
        let relations = enumerate_relations(&graph, &kinds, Commonness::ChildCount, relation_roots)
            .into_iter()
            .map(|relation| {
                let members = cache.get(&graph, &relation).map_or(0, |s| s.count_ones(..));
                RelationInfo {
                    root_label: graph.label(relation.root).unwrap_or_default().to_string(),
                    relation,
                    members,
                }
            })
            .collect();
        Self {
            graph,
            stats,
            corpus,
            mentions,
            vocab,
            cache,
            relations,
        }
    }

    pub fn load(source: &WorldSource, relation_roots: usize) -> Result<Self, DesignError> {
        match source {
            WorldSource::Files { graph, links, corpus } => {
                must_exist(graph)?;
                must_exist(links)?;
                must_exist(corpus)?;
                let kg_err = |path: &Path| {
                    let path = path.to_path_buf();
                    move |e: KgError| DesignError::Load {
                        path,
                        message: e.to_string(),
                    }
                };
                let g = load_graph(graph).map_err(kg_err(graph))?;
                let stats = load_links(links, &g).map_err(kg_err(links))?;
                let c = AnnotatedCorpus::load(corpus).map_err(|e: CorpusError| DesignError::Load {
                    path: corpus.clone(),
                    message: e.to_string(),
                })?;
                Ok(Self::new(g, stats, c, relation_roots))
            }
            WorldSource::Synthetic { seed, config } => {
                let w = generate_synthetic_world(*seed, config)?;
                Ok(Self::new(w.graph, w.stats, w.corpus, relation_roots))
            }
        }
    }

    /// Relations whose root label, root id or edge kind contains `query` (case-insensitive).
    pub fn search_relations(&self, query: &str, limit: usize) -> Vec<&RelationInfo> {
        let q = query.to_lowercase();
        self.relations
            .iter()
            .filter(|r| {
                q.is_empty()
                    || r.root_label.to_lowercase().contains(&q)
                    || r.relation.root.to_string().contains(&q)
                    || r.relation.edge.as_str().contains(&q)
            })
            .take(limit)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSettings {
    pub lambda: f64,
    /// Learnability factor in J for authored systems.
    pub learnability: f64,
    pub top_confused: usize,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            lambda: crate::eval::DEFAULT_LAMBDA,
            learnability: 1.0,
            top_confused: 5,
        }
    }
}

impl DesignSettings {
    pub fn validate(&self) -> Result<(), DesignError> {
        ObjectiveConfig::new(self.lambda)?;
        if !(0.0..=1.0).contains(&self.learnability) {
            return Err(DesignError::Setting("learnability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub name: String,
    pub entities: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisCounts {
    pub axis: String,
    pub types: Vec<TypeCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPage {
    pub page: usize,
    pub page_size: usize,
    pub total_groups: usize,
    pub rows: Vec<ErrorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    pub s_greedy: f64,
    pub s_oracle: f64,
    pub j: f64,
    pub lambda: f64,
    pub learnability: f64,
    pub greedy: Accuracy,
    pub oracle: Accuracy,
    pub gold_recall: f64,
    pub axes: Vec<AxisCounts>,
    /// First page of oracle errors grouped by gold type.
    pub errors: ErrorPage,
    pub timing_ms: f64,
}

/// A full evaluation; the response carries only the first page of errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub response: EvaluationResponse,
    pub error_rows: Vec<ErrorRow>,
}

impl Evaluation {
    pub fn error_page(&self, page: usize, group: Option<&str>) -> ErrorPage {
        let rows: Vec<&ErrorRow> = self
            .error_rows
            .iter()
            .filter(|r| group.is_none_or(|g| r.key() == g))
            .collect();
        ErrorPage {
            page,
            page_size: ERROR_PAGE_SIZE,
            total_groups: rows.len(),
            rows: rows
                .into_iter()
                .skip(page * ERROR_PAGE_SIZE)
                .take(ERROR_PAGE_SIZE)
                .cloned()
                .collect(),
        }
    }
}

pub fn evaluate_rules(
    world: &DesignWorld,
    system: &TypeSystem,
    settings: &DesignSettings,
) -> Result<Evaluation, DesignError> {
    let started = Instant::now();
    settings.validate()?;
    let config = ObjectiveConfig::new(settings.lambda)?;
    system.check_roots(&world.graph)?;
    let labeler = Labeler::new(&world.graph, system, &world.cache)?;
    let greedy = s_greedy(&world.mentions);
    let oracle = oracle_accuracy(&world.mentions, &labeler);
    let j = objective_j(oracle.value(), greedy.value(), settings.learnability, system.len(), &config);
    let axes = system
        .axes
        .iter()
        .enumerate()
        .map(|(a, axis)| AxisCounts {
            axis: axis.name.clone(),
            types: labeler
                .type_names(a)
                .iter()
                .zip(labeler.type_counts(a, world.graph.len()))
                .map(|(name, entities)| TypeCount {
                    name: name.clone(),
                    entities,
                })
                .collect(),
        })
        .collect();
    let preds = oracle_predictions(&world.mentions, &labeler);
    let error_rows: Vec<ErrorRow> = error_analysis(&preds, &world.mentions, &labeler, settings.top_confused)
        .into_iter()
        .filter(|r| r.errors > 0)
        .collect();
    let mut eval = Evaluation {
        response: EvaluationResponse {
            s_greedy: greedy.value(),
            s_oracle: oracle.value(),
            j,
            lambda: settings.lambda,
            learnability: settings.learnability,
            greedy,
            oracle,
            gold_recall: gold_recall(&world.mentions).value(),
            axes,
            errors: ErrorPage {
                page: 0,
                page_size: ERROR_PAGE_SIZE,
                total_groups: 0,
                rows: Vec::new(),
            },
            timing_ms: 0.0,
        },
        error_rows,
    };
    eval.response.errors = eval.error_page(0, None);
    eval.response.timing_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityEstimate {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub unlearnable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub relation: Relation,
    pub axis: String,
    pub members: usize,
    pub delta_s_oracle: f64,
    pub delta_j: f64,
    pub learnability: LearnabilityEstimate,
}

/// The system extended by one discovered axis, named so as not to clash.
pub fn with_axis(system: &TypeSystem, relation: &Relation) -> Result<(TypeSystem, String), DesignError> {
    let base = format!("{}:{}", relation.edge, relation.root);
    let mut name = base.clone();
    let mut n = 1;
    while system.axes.iter().any(|a| a.name == name) {
        n += 1;
        name = format!("{base}#{n}");
    }
    let mut axes = system.axes.clone();
    axes.push(TypeAxis::discovered(name.clone(), relation.clone()));
    Ok((TypeSystem::new(axes)?, name))
}

/// Deltas of adding `relation` as an axis; the system itself is left untouched.
pub fn whatif_axis(
    world: &DesignWorld,
    system: &TypeSystem,
    relation: &Relation,
    settings: &DesignSettings,
    learn: &LearnabilityConfig,
) -> Result<WhatIfResponse, DesignError> {
    if !world.graph.contains(relation.root) {
        return Err(SystemError::UnknownRoot(relation.root).into());
    }
    let (extended, axis) = with_axis(system, relation)?;
    let before = evaluate_rules(world, system, settings)?.response;
    let after = evaluate_rules(world, &extended, settings)?.response;
    let members = world.cache.get(&world.graph, relation)?;
    let est = axis_learnability(relation, &world.corpus, &world.vocab, &world.graph, &members, learn);
    Ok(WhatIfResponse {
        relation: relation.clone(),
        axis,
        members: members.count_ones(..),
        delta_s_oracle: after.s_oracle - before.s_oracle,
        delta_j: after.j - before.j,
        learnability: LearnabilityEstimate {
            auc_mean: est.mean,
            auc_std: est.std,
            unlearnable: est.unlearnable,
        },
    })
}

/// Quick single-run estimate used by what-if queries.
pub fn whatif_learnability_config() -> LearnabilityConfig {
    LearnabilityConfig {
        runs: 1,
        ..LearnabilityConfig::default()
    }
}

/// Evaluations memoized by the canonical JSON of the system.
#[derive(Debug, Default)]
pub struct EvaluationCache {
    entries: parking_lot::RwLock<HashMap<String, Arc<Evaluation>>>,
}

impl EvaluationCache {
    pub fn get_or_eval(
        &self,
        world: &DesignWorld,
        system: &TypeSystem,
        settings: &DesignSettings,
    ) -> Result<Arc<Evaluation>, DesignError> {
        let key = system.to_json_string();
        if let Some(e) = self.entries.read().get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(evaluate_rules(world, system, settings)?);
        Ok(self.entries.write().entry(key).or_insert(e).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
