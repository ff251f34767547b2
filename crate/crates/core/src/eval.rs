//! LinkCount baseline, Oracle accuracy, system accuracy, the proxy objective J and
//! per-type error analysis.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{MentionRef, ResolvedMention};
use crate::kg::EntityId;
use crate::typesys::Labeler;

/// Default per-axis penalty.
pub const DEFAULT_LAMBDA: f64 = 0.00007;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction for linkable mention {0:?}")]
    MissingPrediction(MentionRef),
    #[error("lambda must be a finite non-negative number, got {0}")]
    InvalidLambda(f64),
}

/// Hit count over linkable mentions; mentions with no candidates are counted apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub hits: usize,
    pub total: usize,
    pub unlinkable: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub lambda: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl ObjectiveConfig {
    pub fn new(lambda: f64) -> Result<Self, EvalError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(EvalError::InvalidLambda(lambda));
        }
        Ok(Self { lambda })
    }
}

fn tally(mentions: &[ResolvedMention], hit: impl Fn(&ResolvedMention) -> bool + Sync) -> Accuracy {
    let (hits, total) = mentions
        .par_iter()
        .filter(|m| m.linkable())
        .map(|m| (usize::from(hit(m)), 1usize))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Accuracy {
        hits,
        total,
        unlinkable: mentions.iter().filter(|m| !m.linkable()).count(),
    }
}

/// Accuracy of always picking the most-linked candidate.
pub fn s_greedy(mentions: &[ResolvedMention]) -> Accuracy {
    tally(mentions, |m| m.ranked[0].0 == m.gold)
}

/// Oracle prediction: the most-linked candidate whose label tuple equals the gold's.
///
/// When the gold is not a candidate, pruning is still applied against its labels and
/// the mention can only count as an error. A gold entity missing from the graph has no
/// labels, so nothing is pruned. Candidates missing from the graph are always pruned.
pub fn oracle_prediction(m: &ResolvedMention, labeler: &Labeler) -> Option<EntityId> {
    let Some(gold) = m.gold_index else {
        return m.ranked.first().map(|r| r.0);
    };
    m.ranked
        .iter()
        .zip(&m.indices)
        .find(|(_, idx)| idx.is_some_and(|i| labeler.same_labels(i, gold)))
        .map(|((e, _), _)| *e)
}

pub fn oracle_accuracy(mentions: &[ResolvedMention], labeler: &Labeler) -> Accuracy {
    tally(mentions, |m| oracle_prediction(m, labeler) == Some(m.gold))
}

/// Fraction of linkable mentions whose gold entity is among the candidates.
pub fn gold_recall(mentions: &[ResolvedMention]) -> Accuracy {
    tally(mentions, |m| m.gold_rank().is_some())
}

pub fn system_accuracy(
    predictions: &HashMap<MentionRef, EntityId>,
    mentions: &[ResolvedMention],
) -> Result<Accuracy, EvalError> {
    if let Some(missing) = mentions
        .iter()
        .find(|m| m.linkable() && !predictions.contains_key(&m.at))
    {
        return Err(EvalError::MissingPrediction(missing.at));
    }
    Ok(tally(mentions, |m| predictions[&m.at] == m.gold))
}

/// J = (S_oracle − S_greedy)·Learnability + S_greedy − |A|·λ.
pub fn objective_j(
    s_oracle: f64,
    s_greedy: f64,
    learnability: f64,
    axis_count: usize,
    config: &ObjectiveConfig,
) -> f64 {
    (s_oracle - s_greedy) * learnability + s_greedy - axis_count as f64 * config.lambda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    /// Gold label tuple, one type name per axis.
    pub gold_type: Vec<String>,
    pub mentions: usize,
    pub errors: usize,
    /// Most frequent wrong predictions as (entity, count).
    pub confused_with: Vec<(EntityId, usize)>,
}

impl ErrorRow {
    pub fn key(&self) -> String {
        self.gold_type.join("/")
    }
}

/// Errors grouped by the gold entity's label tuple, most errors first.
pub fn error_analysis(
    predictions: &HashMap<MentionRef, EntityId>,
    mentions: &[ResolvedMention],
    labeler: &Labeler,
    top_confused: usize,
) -> Vec<ErrorRow> {
    struct Acc {
        mentions: usize,
        errors: usize,
        confused: BTreeMap<EntityId, usize>,
    }
    let mut groups: BTreeMap<Vec<String>, Acc> = BTreeMap::new();
    for m in mentions.iter().filter(|m| m.linkable()) {
        let key = match m.gold_index {
            Some(i) => labeler.label_names(i),
            None => vec!["<unknown>".to_string(); labeler.num_axes()],
        };
        let acc = groups.entry(key).or_insert(Acc {
            mentions: 0,
            errors: 0,
            confused: BTreeMap::new(),
        });
        acc.mentions += 1;
        match predictions.get(&m.at) {
            Some(p) if *p == m.gold => {}
            Some(p) => {
                acc.errors += 1;
                *acc.confused.entry(*p).or_default() += 1;
            }
            None => acc.errors += 1,
        }
    }
    let mut rows: Vec<ErrorRow> = groups
        .into_iter()
        .map(|(gold_type, acc)| {
            let mut confused: Vec<(EntityId, usize)> = acc.confused.into_iter().collect();
            confused.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            confused.truncate(top_confused);
            ErrorRow {
                gold_type,
                mentions: acc.mentions,
                errors: acc.errors,
                confused_with: confused,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.errors.cmp(&a.errors).then_with(|| a.gold_type.cmp(&b.gold_type)));
    rows
}

/// Predictions of the LinkCount baseline.
pub fn greedy_predictions(mentions: &[ResolvedMention]) -> HashMap<MentionRef, EntityId> {
    mentions
        .iter()
        .filter(|m| m.linkable())
        .map(|m| (m.at, m.ranked[0].0))
        .collect()
}

pub fn oracle_predictions(
    mentions: &[ResolvedMention],
    labeler: &Labeler,
) -> HashMap<MentionRef, EntityId> {
    mentions
        .iter()
        .filter(|m| m.linkable())
        .map(|m| (m.at, oracle_prediction(m, labeler).unwrap_or(m.ranked[0].0)))
        .collect()
}
