//! Knowledge graph and link statistics.
//!
//! Both structures are built once (from TSV files or the synthetic generator) and
//! are read-only afterwards, so they can be shared freely across worker threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("duplicate entity {0}")]
    DuplicateEntity(EntityId),
    #[error("self-loop edge on entity {0}")]
    SelfLoop(EntityId),
    #[error("duplicate edge {0} {1} {2}")]
    DuplicateEdge(EntityId, EdgeKind, EntityId),
    #[error("invalid edge kind {0:?}")]
    InvalidKind(String),
    #[error("invalid label for entity {0}: labels may not contain tabs or newlines")]
    InvalidLabel(EntityId),
    #[error("non-positive link count for ({0:?}, {1})")]
    NonPositiveCount(String, EntityId),
    #[error("invalid mention string {0:?}")]
    InvalidMention(String),
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
}

impl KgError {
    fn at(file: &str, line: usize, column: usize, message: impl Into<String>) -> Self {
        KgError::Parse {
            file: file.to_string(),
            line,
            column,
            message: message.into(),
        }
    }
}

/// Identifier of an entity, unique within one world.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for EntityId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(EntityId)
    }
}

/// Kind label on a child → parent edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    InstanceOf,
    SubclassOf,
    WikipediaCategory,
    IsAListOf,
    Occupation,
    PositionHeld,
    Series,
    Custom(String),
}

impl EdgeKind {
    pub const BUILTIN: [EdgeKind; 7] = [
        EdgeKind::InstanceOf,
        EdgeKind::SubclassOf,
        EdgeKind::WikipediaCategory,
        EdgeKind::IsAListOf,
        EdgeKind::Occupation,
        EdgeKind::PositionHeld,
        EdgeKind::Series,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            EdgeKind::InstanceOf => "instance_of",
            EdgeKind::SubclassOf => "subclass_of",
            EdgeKind::WikipediaCategory => "wikipedia_category",
            EdgeKind::IsAListOf => "is_a_list_of",
            EdgeKind::Occupation => "occupation",
            EdgeKind::PositionHeld => "position_held",
            EdgeKind::Series => "series",
            EdgeKind::Custom(name) => name,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = KgError;

    /// Kind names are case-sensitive; anything that is not a builtin becomes a user kind.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty()
            || !s
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
        {
            return Err(KgError::InvalidKind(s.to_string()));
        }
        Ok(EdgeKind::BUILTIN
            .iter()
            .find(|k| k.as_str() == s)
            .cloned()
            .unwrap_or_else(|| EdgeKind::Custom(s.to_string())))
    }
}

impl Serialize for EdgeKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EdgeKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub child: EntityId,
    pub kind: EdgeKind,
    pub parent: EntityId,
}

/// Entities plus kind-labeled child → parent edges.
///
/// Entities are stored densely in insertion order; adjacency lists refer to dense
/// indices and interned kind indices.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    ids: Vec<EntityId>,
    labels: Vec<String>,
    index: HashMap<EntityId, usize>,
    kinds: Vec<EdgeKind>,
    edges: Vec<Edge>,
    edge_set: HashSet<(usize, usize, usize)>,
    parents: Vec<Vec<(usize, usize)>>,
    children: Vec<Vec<(usize, usize)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.labels == other.labels && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, id: EntityId, label: impl Into<String>) -> Result<(), KgError> {
        let label = label.into();
        if label.contains(['\t', '\n', '\r']) {
            return Err(KgError::InvalidLabel(id));
        }
        if self.index.contains_key(&id) {
            return Err(KgError::DuplicateEntity(id));
        }
        self.index.insert(id, self.ids.len());
        self.ids.push(id);
        self.labels.push(label);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        child: EntityId,
        kind: EdgeKind,
        parent: EntityId,
    ) -> Result<(), KgError> {
        let c = self.require(child)?;
        let p = self.require(parent)?;
        if c == p {
            return Err(KgError::SelfLoop(child));
        }
        let k = self.intern_kind(&kind);
        if !self.edge_set.insert((c, k, p)) {
            return Err(KgError::DuplicateEdge(child, kind, parent));
        }
        self.parents[c].push((k, p));
        self.children[p].push((k, c));
        self.edges.push(Edge {
            child,
            kind,
            parent,
        });
        Ok(())
    }

    fn intern_kind(&mut self, kind: &EdgeKind) -> usize {
        match self.kinds.iter().position(|k| k == kind) {
            Some(i) => i,
            None => {
                self.kinds.push(kind.clone());
                self.kinds.len() - 1
            }
        }
    }

    fn require(&self, id: EntityId) -> Result<usize, KgError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(KgError::UnknownEntity(id))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.index.contains_key(&id)
    }

    /// Dense index of an entity.
    pub fn index_of(&self, id: EntityId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_at(&self, index: usize) -> EntityId {
        self.ids[index]
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn label(&self, id: EntityId) -> Option<&str> {
        self.index_of(id).map(|i| self.labels[i].as_str())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge kinds that occur in this graph, in first-seen order.
    pub fn kinds(&self) -> &[EdgeKind] {
        &self.kinds
    }

    pub fn kind_index(&self, kind: &EdgeKind) -> Option<usize> {
        self.kinds.iter().position(|k| k == kind)
    }

    pub fn kind_at(&self, index: usize) -> &EdgeKind {
        &self.kinds[index]
    }

    /// Outgoing (kind index, parent index) pairs of a dense entity index.
    pub fn parents_of(&self, index: usize) -> &[(usize, usize)] {
        &self.parents[index]
    }

    /// Incoming (kind index, child index) pairs of a dense entity index.
    pub fn children_of(&self, index: usize) -> &[(usize, usize)] {
        &self.children[index]
    }

    pub fn write_entities<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, label) in self.ids.iter().zip(&self.labels) {
            writeln!(out, "{id}\t{label}")?;
        }
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(out, "{}\t{}\t{}", e.child, e.kind, e.parent)?;
        }
        Ok(())
    }

    /// Writes `entities.tsv` and `edges.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), KgError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let ent = dir.join("entities.tsv");
        let edg = dir.join("edges.tsv");
        write_file(&ent, |w| self.write_entities(w))?;
        write_file(&edg, |w| self.write_edges(w))?;
        Ok(())
    }
}

fn io_err(path: &Path, error: std::io::Error) -> KgError {
    KgError::Io {
        path: path.to_path_buf(),
        error,
    }
}

pub(crate) fn write_file(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), KgError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, KgError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

/// Iterates non-comment, non-blank lines as (1-based line number, fields).
fn tsv_rows<'a, R: BufRead + 'a>(
    reader: R,
    file: &'a str,
) -> impl Iterator<Item = Result<(usize, Vec<String>), KgError>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(KgError::at(file, i + 1, 1, e.to_string()))),
            Ok(line) => {
                let line = line.trim_end_matches('\r');
                if line.is_empty() || line.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, line.split('\t').map(str::to_string).collect())))
                }
            }
        })
}

fn parse_id(file: &str, line: usize, column: usize, s: &str) -> Result<EntityId, KgError> {
    s.parse()
        .map_err(|_| KgError::at(file, line, column, format!("invalid entity id {s:?}")))
}

/// Parses a graph from entity and edge TSV readers.
pub fn parse_graph<R1: BufRead, R2: BufRead>(
    entities: R1,
    entities_name: &str,
    edges: R2,
    edges_name: &str,
) -> Result<KnowledgeGraph, KgError> {
    let mut graph = KnowledgeGraph::new();
    for row in tsv_rows(entities, entities_name) {
        let (line, fields) = row?;
        if fields.len() != 2 {
            return Err(KgError::at(
                entities_name,
                line,
                fields.len().min(2) + 1,
                format!("expected 2 fields (id, label), found {}", fields.len()),
            ));
        }
        let id = parse_id(entities_name, line, 1, &fields[0])?;
        graph
            .add_entity(id, fields[1].clone())
            .map_err(|e| KgError::at(entities_name, line, 1, e.to_string()))?;
    }
    for row in tsv_rows(edges, edges_name) {
        let (line, fields) = row?;
        if fields.len() != 3 {
            return Err(KgError::at(
                edges_name,
                line,
                fields.len().min(3) + 1,
                format!(
                    "expected 3 fields (child, kind, parent), found {}",
                    fields.len()
                ),
            ));
        }
        let child = parse_id(edges_name, line, 1, &fields[0])?;
        let kind: EdgeKind = fields[1]
            .parse()
            .map_err(|e: KgError| KgError::at(edges_name, line, 2, e.to_string()))?;
        let parent = parse_id(edges_name, line, 3, &fields[2])?;
        if let Err(e) = graph.add_edge(child, kind, parent) {
            let column = match &e {
                KgError::UnknownEntity(id) if *id == child => 1,
                KgError::UnknownEntity(_) => 3,
                _ => 1,
            };
            return Err(KgError::at(edges_name, line, column, e.to_string()));
        }
    }
    Ok(graph)
}

/// Loads `entities.tsv` and `edges.tsv` from a directory.
pub fn load_graph(dir: &Path) -> Result<KnowledgeGraph, KgError> {
    load_graph_files(&dir.join("entities.tsv"), &dir.join("edges.tsv"))
}

pub fn load_graph_files(entities: &Path, edges: &Path) -> Result<KnowledgeGraph, KgError> {
    parse_graph(
        open(entities)?,
        &entities.display().to_string(),
        open(edges)?,
        &edges.display().to_string(),
    )
}

/// Mention string → (entity → link count).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    table: BTreeMap<String, BTreeMap<EntityId, u64>>,
}

impl LinkStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` links from `mention` to `entity`; repeated additions accumulate.
    pub fn add(&mut self, mention: &str, entity: EntityId, count: u64) -> Result<(), KgError> {
        if count == 0 {
            return Err(KgError::NonPositiveCount(mention.to_string(), entity));
        }
        if mention.is_empty() || mention.contains(['\t', '\n', '\r']) {
            return Err(KgError::InvalidMention(mention.to_string()));
        }
        *self
            .table
            .entry(mention.to_string())
            .or_default()
            .entry(entity)
            .or_insert(0) += count;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn counts(&self, mention: &str) -> Option<&BTreeMap<EntityId, u64>> {
        self.table.get(mention)
    }

    pub fn count(&self, mention: &str, entity: EntityId) -> u64 {
        self.table
            .get(mention)
            .and_then(|row| row.get(&entity))
            .copied()
            .unwrap_or(0)
    }

    pub fn mentions(&self) -> impl Iterator<Item = (&str, &BTreeMap<EntityId, u64>)> {
        self.table.iter().map(|(m, row)| (m.as_str(), row))
    }

    pub(crate) fn from_table(table: BTreeMap<String, BTreeMap<EntityId, u64>>) -> Self {
        Self { table }
    }

    pub fn total_links(&self) -> u64 {
        self.table.values().flat_map(|r| r.values()).sum()
    }

    /// Candidates with raw counts, most-linked first, ties by ascending id.
    pub fn ranked_counts(&self, mention: &str) -> Vec<(EntityId, u64)> {
        let mut out: Vec<(EntityId, u64)> = self
            .table
            .get(mention)
            .map(|row| row.iter().map(|(e, c)| (*e, *c)).collect())
            .unwrap_or_default();
        sort_ranked(&mut out);
        out
    }

    /// Candidate set with the normalized link prior P_Link(e | m).
    ///
    /// Unknown mentions yield an empty list.
    pub fn candidates(&self, mention: &str) -> Vec<(EntityId, f64)> {
        let ranked = self.ranked_counts(mention);
        let total: u64 = ranked.iter().map(|(_, c)| c).sum();
        ranked
            .into_iter()
            .map(|(e, c)| (e, c as f64 / total as f64))
            .collect()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (m, row) in &self.table {
            for (e, c) in row {
                writeln!(out, "{m}\t{e}\t{c}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        write_file(path, |w| self.write_tsv(w))
    }
}

/// Sorts by count descending, then by ascending entity id.
pub fn sort_ranked(items: &mut [(EntityId, u64)]) {
    items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
}

pub fn parse_links<R: BufRead>(
    reader: R,
    name: &str,
    graph: &KnowledgeGraph,
) -> Result<LinkStats, KgError> {
    let mut stats = LinkStats::new();
    for row in tsv_rows(reader, name) {
        let (line, fields) = row?;
        if fields.len() != 3 {
            return Err(KgError::at(
                name,
                line,
                fields.len().min(3) + 1,
                format!(
                    "expected 3 fields (mention, entity_id, count), found {}",
                    fields.len()
                ),
            ));
        }
        if fields[0].is_empty() {
            return Err(KgError::at(name, line, 1, "empty mention"));
        }
        let entity = parse_id(name, line, 2, &fields[1])?;
        if !graph.contains(entity) {
            return Err(KgError::at(
                name,
                line,
                2,
                format!("unknown entity {entity}"),
            ));
        }
        let count: i64 = fields[2]
            .parse()
            .map_err(|_| KgError::at(name, line, 3, format!("invalid count {:?}", fields[2])))?;
        if count <= 0 {
            return Err(KgError::at(
                name,
                line,
                3,
                format!("link count must be positive, found {count}"),
            ));
        }
        stats
            .add(&fields[0], entity, count as u64)
            .map_err(|e| KgError::at(name, line, 1, e.to_string()))?;
    }
    Ok(stats)
}

pub fn load_links(path: &Path, graph: &KnowledgeGraph) -> Result<LinkStats, KgError> {
    parse_links(open(path)?, &path.display().to_string(), graph)
}

/// How "common" a root entity is when restricting the candidate relation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Commonness {
    /// Number of distinct children through the membership edge kinds.
    #[default]
    ChildCount,
    /// Number of incoming edges of any kind.
    InlinkCount,
}

/// Entities that are parents through any of `kinds`, most common first (ties by id),
/// truncated to `limit`.
pub fn common_parents(
    graph: &KnowledgeGraph,
    kinds: &[EdgeKind],
    metric: Commonness,
    limit: usize,
) -> Vec<EntityId> {
    let kind_idx: Vec<usize> = kinds.iter().filter_map(|k| graph.kind_index(k)).collect();
    let mut scored: Vec<(EntityId, usize)> = (0..graph.len())
        .filter_map(|p| {
            let incoming = graph.children_of(p);
            let mut via: Vec<usize> = incoming
                .iter()
                .filter(|(k, _)| kind_idx.contains(k))
                .map(|(_, c)| *c)
                .collect();
            if via.is_empty() {
                return None;
            }
            let score = match metric {
                Commonness::ChildCount => {
                    via.sort_unstable();
                    via.dedup();
                    via.len()
                }
                Commonness::InlinkCount => incoming.len(),
            };
            Some((graph.id_at(p), score))
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(limit);
    scored.into_iter().map(|(e, _)| e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_from(entities: &str, edges: &str) -> Result<KnowledgeGraph, KgError> {
        parse_graph(entities.as_bytes(), "entities", edges.as_bytes(), "edges")
    }

    fn toy_city() -> KnowledgeGraph {
        graph_from(
            "# toy world\n1\tParis\n2\tSan Francisco\n3\tcity\n",
            "1\tinstance_of\t3\n2\tinstance_of\t3\n",
        )
        .unwrap()
    }

    #[test]
    fn minimal_graph() {
        let g = graph_from("1\ta\n2\tb\n", "1\tinstance_of\t2\n").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn self_loop_reports_line() {
        let err = graph_from("7\tx\n", "# header\n7\tinstance_of\t7\n").unwrap_err();
        match err {
            KgError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("self-loop"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_edge_and_unknown_entity() {
        let dup = graph_from("1\ta\n2\tb\n", "1\tseries\t2\n1\tseries\t2\n").unwrap_err();
        assert!(matches!(dup, KgError::Parse { line: 2, .. }));
        let unk = graph_from("1\ta\n", "1\tseries\t9\n").unwrap_err();
        assert!(matches!(unk, KgError::Parse { line: 1, column: 3, .. }));
        let bad = graph_from("1\ta\tb\n", "").unwrap_err();
        assert!(matches!(bad, KgError::Parse { line: 1, .. }));
    }

    #[test]
    fn city_has_two_instance_children() {
        let g = toy_city();
        let city = g.index_of(EntityId(3)).unwrap();
        let k = g.kind_index(&EdgeKind::InstanceOf).unwrap();
        let kids: Vec<_> = g
            .children_of(city)
            .iter()
            .filter(|(kind, _)| *kind == k)
            .collect();
        assert_eq!(kids.len(), 2);
    }

    #[test]
    fn custom_kinds_parse() {
        assert_eq!("instance_of".parse::<EdgeKind>().unwrap(), EdgeKind::InstanceOf);
        assert_eq!(
            "Instance_Of".parse::<EdgeKind>().unwrap(),
            EdgeKind::Custom("Instance_Of".into())
        );
        assert!("has space".parse::<EdgeKind>().is_err());
    }

    fn washington() -> (KnowledgeGraph, LinkStats) {
        let g = graph_from("1\tWashington, D.C.\n2\tGeorge Washington\n", "").unwrap();
        let s = parse_links(
            "washington\t1\t3\nwashington\t2\t1\n".as_bytes(),
            "links",
            &g,
        )
        .unwrap();
        (g, s)
    }

    #[test]
    fn links_aggregate_and_validate() {
        let (g, s) = washington();
        assert_eq!(s.counts("washington").unwrap().len(), 2);
        let dup = parse_links("x\t1\t2\nx\t1\t5\n".as_bytes(), "l", &g).unwrap();
        assert_eq!(dup.count("x", EntityId(1)), 7);
        assert!(matches!(
            parse_links("x\t1\t0\n".as_bytes(), "l", &g),
            Err(KgError::Parse { column: 3, .. })
        ));
        assert!(parse_links("x\t1\t-4\n".as_bytes(), "l", &g).is_err());
        assert!(parse_links("x\t5\t1\n".as_bytes(), "l", &g).is_err());
        assert!(parse_links("x\t1\n".as_bytes(), "l", &g).is_err());
    }

    #[test]
    fn candidates_normalize_and_break_ties() {
        let (_, s) = washington();
        assert_eq!(
            s.candidates("washington"),
            vec![(EntityId(1), 0.75), (EntityId(2), 0.25)]
        );
        let mut t = LinkStats::new();
        t.add("m", EntityId(9), 2).unwrap();
        t.add("m", EntityId(4), 2).unwrap();
        let c = t.candidates("m");
        assert_eq!(c[0].0, EntityId(4));
        assert!(t.candidates("nope").is_empty());
    }

    #[test]
    fn save_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = toy_city();
        g.save(dir.path()).unwrap();
        let again = load_graph(dir.path()).unwrap();
        assert_eq!(g, again);

        let mut s = LinkStats::new();
        s.add("paris", EntityId(1), 10).unwrap();
        s.add("sf", EntityId(2), 3).unwrap();
        s.add("sf", EntityId(3), 1).unwrap();
        let p = dir.path().join("links.tsv");
        s.save(&p).unwrap();
        assert_eq!(load_links(&p, &again).unwrap(), s);
    }

    #[test]
    fn common_parents_by_child_count() {
        let g = graph_from(
            "1\ta\n2\tb\n3\tc\n4\tP\n5\tQ\n",
            "1\tinstance_of\t4\n2\tinstance_of\t4\n3\tinstance_of\t5\n3\tseries\t4\n",
        )
        .unwrap();
        let roots = common_parents(&g, &[EdgeKind::InstanceOf], Commonness::ChildCount, 10);
        assert_eq!(roots, vec![EntityId(4), EntityId(5)]);
        let roots = common_parents(&g, &[EdgeKind::InstanceOf], Commonness::InlinkCount, 1);
        assert_eq!(roots, vec![EntityId(4)]);
    }
}
