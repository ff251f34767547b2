//! Tokenized documents with gold-annotated mention spans, stored as JSON lines.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{sort_ranked, EntityId, KnowledgeGraph, LinkStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("document {doc:?}: mention {index}: {message}")]
    InvalidMention {
        doc: String,
        index: usize,
        message: String,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub gold: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<EntityId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub lang: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Surface string of a mention: its tokens joined by single spaces.
    pub fn surface(&self, mention: &Mention) -> String {
        self.tokens[mention.start..mention.end].join(" ")
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut spans: Vec<(usize, usize, usize)> = self
            .mentions
            .iter()
            .enumerate()
            .map(|(i, m)| (m.start, m.end, i))
            .collect();
        for &(start, end, index) in &spans {
            if end <= start || end > self.tokens.len() {
                return Err(CorpusError::InvalidMention {
                    doc: self.doc_id.clone(),
                    index,
                    message: format!(
                        "span [{start}, {end}) outside document of {} tokens",
                        self.tokens.len()
                    ),
                });
            }
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(CorpusError::InvalidMention {
                    doc: self.doc_id.clone(),
                    index: w[1].2,
                    message: "overlaps another mention".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotatedCorpus {
    pub documents: Vec<Document>,
}

impl AnnotatedCorpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        documents.iter().try_for_each(Document::validate)?;
        Ok(Self { documents })
    }

    pub fn num_mentions(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    /// Splits documents by position into consecutive parts of the given fractions.
    pub fn split(&self, fractions: &[f64]) -> Vec<AnnotatedCorpus> {
        let n = self.documents.len();
        let mut out = Vec::with_capacity(fractions.len());
        let mut start = 0;
        let mut acc = 0.0;
        for (i, f) in fractions.iter().enumerate() {
            acc += f;
            let end = if i + 1 == fractions.len() {
                n
            } else {
                ((acc * n as f64).round() as usize).min(n)
            };
            out.push(AnnotatedCorpus {
                documents: self.documents[start..end.max(start)].to_vec(),
            });
            start = end.max(start);
        }
        out
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            documents.push(doc);
        }
        Self::new(documents)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| {
            std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
        })?;
        Self::read_jsonl(BufReader::new(file))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()
    }
}

/// Position of a mention inside a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionRef {
    pub doc: usize,
    pub mention: usize,
}

/// A mention with its candidate set resolved and ranked by link count.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMention {
    pub at: MentionRef,
    pub surface: String,
    pub gold: EntityId,
    /// Candidates with link counts, most-linked first, ties by ascending id.
    pub ranked: Vec<(EntityId, u64)>,
    /// Dense graph indices parallel to `ranked` (`None` for entities absent from the graph).
    pub indices: Vec<Option<usize>>,
    pub gold_index: Option<usize>,
}

impl ResolvedMention {
    pub fn linkable(&self) -> bool {
        !self.ranked.is_empty()
    }

    /// Rank of the gold entity among the candidates.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|(e, _)| *e == self.gold)
    }

    pub fn total_count(&self) -> u64 {
        self.ranked.iter().map(|(_, c)| c).sum()
    }

    /// Normalized link prior of the candidate at `rank`.
    pub fn p_link(&self, rank: usize) -> f64 {
        let total = self.total_count();
        if total == 0 {
            0.0
        } else {
            self.ranked[rank].1 as f64 / total as f64
        }
    }
}

/// Resolves every mention in corpus order. Explicit candidate lists take precedence over
/// the link-statistics candidate set; their counts still come from `stats`.
pub fn resolve(
    corpus: &AnnotatedCorpus,
    stats: &LinkStats,
    graph: &KnowledgeGraph,
) -> Vec<ResolvedMention> {
    let mut out = Vec::with_capacity(corpus.num_mentions());
    for (d, doc) in corpus.documents.iter().enumerate() {
        for (m, mention) in doc.mentions.iter().enumerate() {
            let surface = doc.surface(mention);
            let ranked = match &mention.candidates {
                Some(cands) => {
                    let mut seen = std::collections::HashSet::new();
                    let mut r: Vec<(EntityId, u64)> = cands
                        .iter()
                        .filter(|e| seen.insert(**e))
                        .map(|e| (*e, stats.count(&surface, *e)))
                        .collect();
                    sort_ranked(&mut r);
                    r
                }
                None => stats.ranked_counts(&surface),
            };
            let indices = ranked.iter().map(|(e, _)| graph.index_of(*e)).collect();
            out.push(ResolvedMention {
                at: MentionRef { doc: d, mention: m },
                surface,
                gold: mention.gold,
                ranked,
                indices,
                gold_index: graph.index_of(mention.gold),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str], mentions: Vec<Mention>) -> Document {
        Document {
            doc_id: "d".into(),
            lang: "en".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            mentions,
        }
    }

    fn m(start: usize, end: usize, gold: u64) -> Mention {
        Mention {
            start,
            end,
            gold: EntityId(gold),
            candidates: None,
        }
    }

    #[test]
    fn spans_are_validated() {
        assert!(doc(&["a", "b"], vec![m(0, 2, 1)]).validate().is_ok());
        assert!(doc(&["a", "b"], vec![m(1, 1, 1)]).validate().is_err());
        assert!(doc(&["a", "b"], vec![m(1, 3, 1)]).validate().is_err());
        assert!(doc(&["a", "b", "c"], vec![m(0, 2, 1), m(1, 3, 2)]).validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut with_cands = m(2, 3, 4);
        with_cands.candidates = Some(vec![EntityId(4), EntityId(5)]);
        let corpus =
            AnnotatedCorpus::new(vec![doc(&["new", "york", "jaguar"], vec![m(0, 2, 1), with_cands])])
                .unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"candidates\":[4,5]"));
        assert_eq!(AnnotatedCorpus::read_jsonl(buf.as_slice()).unwrap(), corpus);
        let bad = r#"{"doc_id":"x","lang":"en","tokens":["a"],"mentions":[{"start":0,"end":1,"gold":1,"extra":2}]}"#;
        assert!(matches!(
            AnnotatedCorpus::read_jsonl(bad.as_bytes()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn split_covers_all_documents() {
        let docs: Vec<Document> = (0..10).map(|_| doc(&["a"], vec![])).collect();
        let corpus = AnnotatedCorpus::new(docs).unwrap();
        let parts = corpus.split(&[0.6, 0.2, 0.2]);
        assert_eq!(parts.iter().map(|p| p.documents.len()).collect::<Vec<_>>(), [6, 2, 2]);
    }
}
