//! Relations, Boolean type expressions, type axes, and the labeling function.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::kg::{EdgeKind, EntityId, KnowledgeGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown root entity {0}")]
    UnknownRoot(EntityId),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("duplicate axis name {0:?}")]
    DuplicateAxis(String),
    #[error("duplicate type name {1:?} in axis {0:?}")]
    DuplicateType(String, String),
    #[error("type system has no axes")]
    Empty,
}

impl SystemError {
    fn parse(path: &str, message: impl Into<String>) -> Self {
        SystemError::Parse {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// JSON path of the offending node, when the error came from parsing.
    pub fn path(&self) -> Option<&str> {
        match self {
            SystemError::Parse { path, .. } => Some(path),
            _ => None,
        }
    }
}

pub fn default_transitive_kinds() -> BTreeSet<EdgeKind> {
    [EdgeKind::SubclassOf, EdgeKind::WikipediaCategory]
        .into_iter()
        .collect()
}

/// Membership rule: entities linked by `edge` to `root` or to any descendant of `root`
/// reachable downward through `transitive` edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation {
    pub root: EntityId,
    pub edge: EdgeKind,
    pub transitive: BTreeSet<EdgeKind>,
    pub include_root: bool,
}

impl Relation {
    pub fn new(root: EntityId, edge: EdgeKind) -> Self {
        Self {
            root,
            edge,
            transitive: default_transitive_kinds(),
            include_root: false,
        }
    }

    pub fn with_transitive(mut self, kinds: impl IntoIterator<Item = EdgeKind>) -> Self {
        self.transitive = kinds.into_iter().collect();
        self
    }

    pub fn including_root(mut self) -> Self {
        self.include_root = true;
        self
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("root".into(), json!(self.root.0));
        map.insert("edge".into(), json!(self.edge.as_str()));
        if self.transitive != default_transitive_kinds() {
            map.insert(
                "transitive".into(),
                Value::Array(self.transitive.iter().map(|k| json!(k.as_str())).collect()),
            );
        }
        if self.include_root {
            map.insert("include_root".into(), json!(true));
        }
        Value::Object(map)
    }

    fn from_fields(map: &Map<String, Value>, path: &str, skip: &[&str]) -> Result<Self, SystemError> {
        for key in map.keys() {
            if !["root", "edge", "transitive", "include_root"].contains(&key.as_str())
                && !skip.contains(&key.as_str())
            {
                return Err(SystemError::parse(path, format!("unknown relation field {key:?}")));
            }
        }
        let root = map
            .get("root")
            .and_then(Value::as_u64)
            .ok_or_else(|| SystemError::parse(path, "relation needs a non-negative integer \"root\""))?;
        let edge = parse_kind(map.get("edge"), &format!("{path}.edge"))?;
        let mut rel = Relation::new(EntityId(root), edge);
        if let Some(t) = map.get("transitive") {
            let arr = t
                .as_array()
                .ok_or_else(|| SystemError::parse(&format!("{path}.transitive"), "expected an array"))?;
            rel.transitive = arr
                .iter()
                .enumerate()
                .map(|(i, v)| parse_kind(Some(v), &format!("{path}.transitive[{i}]")))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = map.get("include_root") {
            rel.include_root = v
                .as_bool()
                .ok_or_else(|| SystemError::parse(&format!("{path}.include_root"), "expected a boolean"))?;
        }
        Ok(rel)
    }

    pub fn from_json(value: &Value, path: &str) -> Result<Self, SystemError> {
        let map = value
            .as_object()
            .ok_or_else(|| SystemError::parse(path, "expected a relation object"))?;
        Self::from_fields(map, path, &[])
    }
}

fn parse_kind(v: Option<&Value>, path: &str) -> Result<EdgeKind, SystemError> {
    let s = v
        .and_then(Value::as_str)
        .ok_or_else(|| SystemError::parse(path, "expected an edge kind string"))?;
    s.parse()
        .map_err(|e: crate::kg::KgError| SystemError::parse(path, e.to_string()))
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        Relation::from_json(&v, "$").map_err(serde::de::Error::custom)
    }
}

/// Computes the member set of a relation as a bitset over dense entity indices.
pub fn members(graph: &KnowledgeGraph, relation: &Relation) -> Result<FixedBitSet, SystemError> {
    let root = graph
        .index_of(relation.root)
        .ok_or(SystemError::UnknownRoot(relation.root))?;
    let mut out = FixedBitSet::with_capacity(graph.len());
    if relation.include_root {
        out.insert(root);
    }
    let Some(membership) = graph.kind_index(&relation.edge) else {
        return Ok(out);
    };
    let transitive: Vec<usize> = relation
        .transitive
        .iter()
        .filter_map(|k| graph.kind_index(k))
        .collect();

    let mut seen = FixedBitSet::with_capacity(graph.len());
    seen.insert(root);
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        for &(kind, child) in graph.children_of(x) {
            if kind == membership {
                out.insert(child);
            }
            if transitive.contains(&kind) && !seen.contains(child) {
                seen.insert(child);
                queue.push_back(child);
            }
        }
    }
    Ok(out)
}

/// Relation-membership bitsets, computed once per relation and shared afterwards.
#[derive(Debug, Default)]
pub struct MembershipCache {
    sets: RwLock<HashMap<Relation, Arc<FixedBitSet>>>,
}

impl MembershipCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        graph: &KnowledgeGraph,
        relation: &Relation,
    ) -> Result<Arc<FixedBitSet>, SystemError> {
        if let Some(set) = self.sets.read().get(relation) {
            return Ok(set.clone());
        }
        let set = Arc::new(members(graph, relation)?);
        Ok(self
            .sets
            .write()
            .entry(relation.clone())
            .or_insert(set)
            .clone())
    }

    /// Builds the sets of all missing relations in parallel.
    pub fn warm(&self, graph: &KnowledgeGraph, relations: &[Relation]) -> Result<(), SystemError> {
        let missing: Vec<&Relation> = {
            let sets = self.sets.read();
            let mut seen = HashSet::new();
            relations
                .iter()
                .filter(|r| !sets.contains_key(*r) && seen.insert(*r))
                .collect()
        };
        let built: Vec<(Relation, FixedBitSet)> = missing
            .par_iter()
            .map(|r| members(graph, r).map(|s| ((*r).clone(), s)))
            .collect::<Result<_, _>>()?;
        let mut sets = self.sets.write();
        for (r, s) in built {
            sets.entry(r).or_insert_with(|| Arc::new(s));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sets.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Boolean expression over relation membership.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    And(Vec<TypeExpr>),
    Or(Vec<TypeExpr>),
    Not(Box<TypeExpr>),
    Rel(Relation),
}

impl TypeExpr {
    pub fn rel(relation: Relation) -> Self {
        TypeExpr::Rel(relation)
    }

    pub fn and(args: Vec<TypeExpr>) -> Self {
        TypeExpr::And(args)
    }

    pub fn or(args: Vec<TypeExpr>) -> Self {
        TypeExpr::Or(args)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(arg: TypeExpr) -> Self {
        TypeExpr::Not(Box::new(arg))
    }

    pub fn relations(&self) -> Vec<&Relation> {
        let mut out = Vec::new();
        self.collect_relations(&mut out);
        out
    }

    fn collect_relations<'a>(&'a self, out: &mut Vec<&'a Relation>) {
        match self {
            TypeExpr::And(args) | TypeExpr::Or(args) => {
                args.iter().for_each(|a| a.collect_relations(out))
            }
            TypeExpr::Not(arg) => arg.collect_relations(out),
            TypeExpr::Rel(r) => out.push(r),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            TypeExpr::And(args) => json!({"op": "and", "args": args.iter().map(Self::to_json).collect::<Vec<_>>()}),
            TypeExpr::Or(args) => json!({"op": "or", "args": args.iter().map(Self::to_json).collect::<Vec<_>>()}),
            TypeExpr::Not(arg) => json!({"op": "not", "arg": arg.to_json()}),
            TypeExpr::Rel(r) => {
                let mut v = r.to_json();
                v.as_object_mut()
                    .unwrap()
                    .insert("op".into(), json!("rel"));
                v
            }
        }
    }

    pub fn from_json(value: &Value, path: &str) -> Result<Self, SystemError> {
        let map = value
            .as_object()
            .ok_or_else(|| SystemError::parse(path, "expected an expression object"))?;
        let op = map
            .get("op")
            .and_then(Value::as_str)
            .ok_or_else(|| SystemError::parse(path, "expression needs an \"op\" string"))?;
        let only = |allowed: &[&str]| -> Result<(), SystemError> {
            match map.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(SystemError::parse(path, format!("unknown field {k:?} for op {op:?}"))),
                None => Ok(()),
            }
        };
        match op {
            "and" | "or" => {
                only(&["op", "args"])?;
                let args = map
                    .get("args")
                    .and_then(Value::as_array)
                    .ok_or_else(|| SystemError::parse(path, format!("{op} needs an \"args\" array")))?;
                if args.len() < 2 {
                    return Err(SystemError::parse(
                        &format!("{path}.args"),
                        format!("{op} needs at least 2 arguments, found {}", args.len()),
                    ));
                }
                let args = args
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Self::from_json(a, &format!("{path}.args[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(if op == "and" {
                    TypeExpr::And(args)
                } else {
                    TypeExpr::Or(args)
                })
            }
            "not" => {
                only(&["op", "arg"])?;
                let arg = map
                    .get("arg")
                    .ok_or_else(|| SystemError::parse(path, "not needs an \"arg\""))?;
                Ok(TypeExpr::not(Self::from_json(arg, &format!("{path}.arg"))?))
            }
            "rel" => Ok(TypeExpr::Rel(Relation::from_fields(map, path, &["op"])?)),
            other => Err(SystemError::parse(
                &format!("{path}.op"),
                format!("unknown op {other:?}"),
            )),
        }
    }

    fn check(&self, path: &str) -> Result<(), SystemError> {
        match self {
            TypeExpr::And(args) | TypeExpr::Or(args) => {
                if args.len() < 2 {
                    return Err(SystemError::parse(path, "and/or need at least 2 arguments"));
                }
                args.iter()
                    .enumerate()
                    .try_for_each(|(i, a)| a.check(&format!("{path}.args[{i}]")))
            }
            TypeExpr::Not(arg) => arg.check(&format!("{path}.arg")),
            TypeExpr::Rel(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeRule {
    pub type_name: String,
    pub expr: TypeExpr,
}

/// Name of the catch-all type of authored axes.
pub const OTHER: &str = "Other";
pub const MEMBER: &str = "member";
pub const NONMEMBER: &str = "nonmember";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AxisKind {
    /// Binary member / non-member split on a single relation.
    Discovered(Relation),
    /// Ordered rules, first match wins, with an implicit trailing `Other`.
    Authored(Vec<TypeRule>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeAxis {
    pub name: String,
    pub kind: AxisKind,
}

impl TypeAxis {
    pub fn discovered(name: impl Into<String>, relation: Relation) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Discovered(relation),
        }
    }

    pub fn authored(name: impl Into<String>, rules: Vec<(String, TypeExpr)>) -> Self {
        Self {
            name: name.into(),
            kind: AxisKind::Authored(
                rules
                    .into_iter()
                    .map(|(type_name, expr)| TypeRule { type_name, expr })
                    .collect(),
            ),
        }
    }

    /// Type names in label-id order.
    pub fn type_names(&self) -> Vec<String> {
        match &self.kind {
            AxisKind::Discovered(_) => vec![MEMBER.into(), NONMEMBER.into()],
            AxisKind::Authored(rules) => rules
                .iter()
                .map(|r| r.type_name.clone())
                .chain(std::iter::once(OTHER.to_string()))
                .collect(),
        }
    }

    pub fn num_types(&self) -> usize {
        match &self.kind {
            AxisKind::Discovered(_) => 2,
            AxisKind::Authored(rules) => rules.len() + 1,
        }
    }

    pub fn relations(&self) -> Vec<&Relation> {
        match &self.kind {
            AxisKind::Discovered(r) => vec![r],
            AxisKind::Authored(rules) => rules.iter().flat_map(|r| r.expr.relations()).collect(),
        }
    }
}

/// Ordered collection of type axes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeSystem {
    pub axes: Vec<TypeAxis>,
}

impl TypeSystem {
    pub fn new(axes: Vec<TypeAxis>) -> Result<Self, SystemError> {
        let system = Self { axes };
        system.validate()?;
        Ok(system)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// System of discovered axes, named after their relation.
    pub fn from_relations(relations: &[Relation]) -> Self {
        let axes = relations
            .iter()
            .enumerate()
            .map(|(i, r)| TypeAxis::discovered(format!("axis{i}:{}:{}", r.edge, r.root), r.clone()))
            .collect();
        Self { axes }
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn relations(&self) -> Vec<&Relation> {
        self.axes.iter().flat_map(|a| a.relations()).collect()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let mut names = HashSet::new();
        for (i, axis) in self.axes.iter().enumerate() {
            if !names.insert(axis.name.as_str()) {
                return Err(SystemError::DuplicateAxis(axis.name.clone()));
            }
            if let AxisKind::Authored(rules) = &axis.kind {
                let mut types = HashSet::new();
                for (j, rule) in rules.iter().enumerate() {
                    if rule.type_name == OTHER || !types.insert(rule.type_name.as_str()) {
                        return Err(SystemError::DuplicateType(
                            axis.name.clone(),
                            rule.type_name.clone(),
                        ));
                    }
                    rule.expr.check(&format!("axes[{i}].rules[{j}].expr"))?;
                }
            }
        }
        Ok(())
    }

    /// Checks that every referenced root exists in `graph`.
    pub fn check_roots(&self, graph: &KnowledgeGraph) -> Result<(), SystemError> {
        for r in self.relations() {
            if !graph.contains(r.root) {
                return Err(SystemError::UnknownRoot(r.root));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let axes: Vec<Value> = self
            .axes
            .iter()
            .map(|a| match &a.kind {
                AxisKind::Discovered(r) => {
                    json!({"name": a.name, "kind": "discovered", "relation": r.to_json()})
                }
                AxisKind::Authored(rules) => json!({
                    "name": a.name,
                    "kind": "authored",
                    "rules": rules.iter().map(|r| json!({"type": r.type_name, "expr": r.expr.to_json()})).collect::<Vec<_>>(),
                }),
            })
            .collect();
        json!({ "axes": axes })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("type system json")
    }

    pub fn from_json(value: &Value) -> Result<Self, SystemError> {
        let root = value
            .as_object()
            .ok_or_else(|| SystemError::parse("$", "expected an object"))?;
        if let Some(k) = root.keys().find(|k| *k != "axes") {
            return Err(SystemError::parse("$", format!("unknown field {k:?}")));
        }
        let axes = root
            .get("axes")
            .and_then(Value::as_array)
            .ok_or_else(|| SystemError::parse("$", "expected an \"axes\" array"))?;
        let mut out = Vec::with_capacity(axes.len());
        for (i, axis) in axes.iter().enumerate() {
            let path = format!("axes[{i}]");
            let map = axis
                .as_object()
                .ok_or_else(|| SystemError::parse(&path, "expected an axis object"))?;
            let name = map
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| SystemError::parse(&path, "axis needs a \"name\" string"))?
                .to_string();
            let kind = map.get("kind").and_then(Value::as_str).unwrap_or("");
            let allowed: &[&str] = match kind {
                "discovered" => &["name", "kind", "relation"],
                "authored" => &["name", "kind", "rules"],
                other => {
                    return Err(SystemError::parse(
                        &format!("{path}.kind"),
                        format!("expected \"discovered\" or \"authored\", found {other:?}"),
                    ))
                }
            };
            if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(SystemError::parse(&path, format!("unknown field {k:?}")));
            }
            let kind = if kind == "discovered" {
                let rel = map
                    .get("relation")
                    .ok_or_else(|| SystemError::parse(&path, "discovered axis needs a \"relation\""))?;
                AxisKind::Discovered(Relation::from_json(rel, &format!("{path}.relation"))?)
            } else {
                let rules = map
                    .get("rules")
                    .and_then(Value::as_array)
                    .ok_or_else(|| SystemError::parse(&path, "authored axis needs a \"rules\" array"))?;
                let mut parsed = Vec::with_capacity(rules.len());
                for (j, rule) in rules.iter().enumerate() {
                    let rpath = format!("{path}.rules[{j}]");
                    let rmap = rule
                        .as_object()
                        .ok_or_else(|| SystemError::parse(&rpath, "expected a rule object"))?;
                    if let Some(k) = rmap.keys().find(|k| *k != "type" && *k != "expr") {
                        return Err(SystemError::parse(&rpath, format!("unknown field {k:?}")));
                    }
                    let type_name = rmap
                        .get("type")
                        .and_then(Value::as_str)
                        .ok_or_else(|| SystemError::parse(&rpath, "rule needs a \"type\" string"))?;
                    let expr = rmap
                        .get("expr")
                        .ok_or_else(|| SystemError::parse(&rpath, "rule needs an \"expr\""))?;
                    parsed.push(TypeRule {
                        type_name: type_name.to_string(),
                        expr: TypeExpr::from_json(expr, &format!("{rpath}.expr"))?,
                    });
                }
                AxisKind::Authored(parsed)
            };
            out.push(TypeAxis { name, kind });
        }
        Self::new(out)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SystemError> {
        let v: Value = serde_json::from_str(s).map_err(|e| {
            SystemError::parse("$", format!("invalid JSON at line {} column {}: {e}", e.line(), e.column()))
        })?;
        Self::from_json(&v)
    }
}

#[derive(Debug, Clone)]
enum CompiledExpr {
    And(Vec<CompiledExpr>),
    Or(Vec<CompiledExpr>),
    Not(Box<CompiledExpr>),
    Set(Arc<FixedBitSet>),
}

impl CompiledExpr {
    fn compile(
        graph: &KnowledgeGraph,
        expr: &TypeExpr,
        cache: &MembershipCache,
    ) -> Result<Self, SystemError> {
        Ok(match expr {
            TypeExpr::And(args) => CompiledExpr::And(
                args.iter()
                    .map(|a| Self::compile(graph, a, cache))
                    .collect::<Result<_, _>>()?,
            ),
            TypeExpr::Or(args) => CompiledExpr::Or(
                args.iter()
                    .map(|a| Self::compile(graph, a, cache))
                    .collect::<Result<_, _>>()?,
            ),
            TypeExpr::Not(arg) => CompiledExpr::Not(Box::new(Self::compile(graph, arg, cache)?)),
            TypeExpr::Rel(r) => CompiledExpr::Set(cache.get(graph, r)?),
        })
    }

    fn eval(&self, index: usize) -> bool {
        match self {
            CompiledExpr::And(args) => args.iter().all(|a| a.eval(index)),
            CompiledExpr::Or(args) => args.iter().any(|a| a.eval(index)),
            CompiledExpr::Not(arg) => !arg.eval(index),
            CompiledExpr::Set(s) => s.contains(index),
        }
    }
}

#[derive(Debug, Clone)]
enum CompiledAxis {
    Discovered(Arc<FixedBitSet>),
    Authored(Vec<CompiledExpr>),
}

/// A type system bound to a graph: maps entities to one type id per axis.
#[derive(Debug, Clone)]
pub struct Labeler {
    axes: Vec<CompiledAxis>,
    type_names: Vec<Vec<String>>,
}

impl Labeler {
    pub fn new(
        graph: &KnowledgeGraph,
        system: &TypeSystem,
        cache: &MembershipCache,
    ) -> Result<Self, SystemError> {
        let rels: Vec<Relation> = system.relations().into_iter().cloned().collect();
        cache.warm(graph, &rels)?;
        let axes = system
            .axes
            .iter()
            .map(|axis| {
                Ok(match &axis.kind {
                    AxisKind::Discovered(r) => CompiledAxis::Discovered(cache.get(graph, r)?),
                    AxisKind::Authored(rules) => CompiledAxis::Authored(
                        rules
                            .iter()
                            .map(|rule| CompiledExpr::compile(graph, &rule.expr, cache))
                            .collect::<Result<_, _>>()?,
                    ),
                })
            })
            .collect::<Result<_, SystemError>>()?;
        Ok(Self {
            axes,
            type_names: system.axes.iter().map(TypeAxis::type_names).collect(),
        })
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn type_names(&self, axis: usize) -> &[String] {
        &self.type_names[axis]
    }

    /// Type id of the entity at dense index `index` on `axis`.
    pub fn label(&self, axis: usize, index: usize) -> usize {
        match &self.axes[axis] {
            CompiledAxis::Discovered(set) => usize::from(!set.contains(index)),
            CompiledAxis::Authored(rules) => rules
                .iter()
                .position(|r| r.eval(index))
                .unwrap_or(rules.len()),
        }
    }

    pub fn label_tuple(&self, index: usize) -> Vec<usize> {
        (0..self.axes.len()).map(|a| self.label(a, index)).collect()
    }

    /// True when the two entities carry the same type on every axis.
    pub fn same_labels(&self, a: usize, b: usize) -> bool {
        (0..self.axes.len()).all(|axis| self.label(axis, a) == self.label(axis, b))
    }

    pub fn label_names(&self, index: usize) -> Vec<String> {
        (0..self.axes.len())
            .map(|a| self.type_names[a][self.label(a, index)].clone())
            .collect()
    }

    /// Number of entities carrying each type on `axis`.
    pub fn type_counts(&self, axis: usize, num_entities: usize) -> Vec<usize> {
        let mut counts = vec![0; self.type_names[axis].len()];
        for i in 0..num_entities {
            counts[self.label(axis, i)] += 1;
        }
        counts
    }
}

pub fn eval_expr(graph: &KnowledgeGraph, expr: &TypeExpr, entity: EntityId) -> Result<bool, SystemError> {
    let index = graph.index_of(entity).ok_or(SystemError::UnknownEntity(entity))?;
    let cache = MembershipCache::new();
    Ok(CompiledExpr::compile(graph, expr, &cache)?.eval(index))
}

/// One type name per axis for `entity`.
pub fn label_entity(
    graph: &KnowledgeGraph,
    system: &TypeSystem,
    entity: EntityId,
) -> Result<Vec<String>, SystemError> {
    if system.is_empty() {
        return Err(SystemError::Empty);
    }
    let index = graph.index_of(entity).ok_or(SystemError::UnknownEntity(entity))?;
    let labeler = Labeler::new(graph, system, &MembershipCache::new())?;
    Ok(labeler.label_names(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_graph;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(entities: &str, edges: &str) -> KnowledgeGraph {
        parse_graph(entities.as_bytes(), "e", edges.as_bytes(), "g").unwrap()
    }

    fn ids(graph: &KnowledgeGraph, set: &FixedBitSet) -> Vec<u64> {
        set.ones().map(|i| graph.id_at(i).0).collect()
    }

    #[test]
    fn city_members() {
        let graph = g(
            "1\tParis\n2\tSan Francisco\n3\tcity\n4\tbig city\n5\tTokyo\n6\tFrance\n",
            "1\tinstance_of\t3\n2\tinstance_of\t3\n4\tsubclass_of\t3\n5\tinstance_of\t4\n1\tinstance_of\t6\n",
        );
        let rel = Relation::new(EntityId(3), EdgeKind::InstanceOf);
        assert_eq!(ids(&graph, &members(&graph, &rel).unwrap()), vec![1, 2, 5]);
        let direct = rel.clone().with_transitive([]);
        assert_eq!(ids(&graph, &members(&graph, &direct).unwrap()), vec![1, 2]);
        let with_root = rel.including_root();
        assert_eq!(ids(&graph, &members(&graph, &with_root).unwrap()), vec![1, 2, 3, 5]);
        let empty = Relation::new(EntityId(6), EdgeKind::Series);
        assert_eq!(members(&graph, &empty).unwrap().count_ones(..), 0);
        assert_eq!(
            members(&graph, &Relation::new(EntityId(99), EdgeKind::InstanceOf)),
            Err(SystemError::UnknownRoot(EntityId(99)))
        );
    }

    #[test]
    fn membership_survives_cycles() {
        let graph = g(
            "1\ta\n2\tb\n3\tc\n",
            "1\tsubclass_of\t2\n2\tsubclass_of\t1\n3\tinstance_of\t1\n",
        );
        let rel = Relation::new(EntityId(2), EdgeKind::InstanceOf);
        assert_eq!(ids(&graph, &members(&graph, &rel).unwrap()), vec![3]);
    }

    /// Random DAG plus a brute-force reachability definition of membership.
    fn random_world(seed: u64, n: usize) -> KnowledgeGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut graph = KnowledgeGraph::new();
        for i in 0..n {
            graph.add_entity(EntityId(i as u64), format!("n{i}")).unwrap();
        }
        let kinds = [EdgeKind::InstanceOf, EdgeKind::SubclassOf, EdgeKind::WikipediaCategory, EdgeKind::Occupation];
        for _ in 0..n * 2 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a < b {
                let kind = kinds[rng.gen_range(0..kinds.len())].clone();
                let _ = graph.add_edge(EntityId(b as u64), kind, EntityId(a as u64));
            }
        }
        graph
    }

    fn brute_members(graph: &KnowledgeGraph, rel: &Relation) -> Vec<u64> {
        // x is in the closure iff root == x or some transitive path x -> ... -> root exists.
        let edges = graph.edges();
        let reaches_root = |start: EntityId| -> bool {
            let mut stack = vec![start];
            let mut seen = HashSet::new();
            while let Some(x) = stack.pop() {
                if x == rel.root {
                    return true;
                }
                if !seen.insert(x) {
                    continue;
                }
                for e in edges.iter().filter(|e| e.child == x && rel.transitive.contains(&e.kind)) {
                    stack.push(e.parent);
                }
            }
            false
        };
        let mut out: Vec<u64> = edges
            .iter()
            .filter(|e| e.kind == rel.edge && reaches_root(e.parent))
            .map(|e| e.child.0)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    #[test]
    fn members_match_exhaustive_reachability() {
        for seed in 0..10 {
            let graph = random_world(seed, 60);
            for root in 0..60 {
                for edge in [EdgeKind::InstanceOf, EdgeKind::Occupation] {
                    let rel = Relation::new(EntityId(root), edge);
                    let mut got = ids(&graph, &members(&graph, &rel).unwrap());
                    got.sort_unstable();
                    assert_eq!(got, brute_members(&graph, &rel), "seed {seed} root {root}");
                }
            }
        }
    }

    #[test]
    fn adding_edges_never_removes_members() {
        let mut graph = random_world(3, 40);
        let rels: Vec<Relation> = (0..40)
            .map(|r| Relation::new(EntityId(r), EdgeKind::InstanceOf))
            .collect();
        let before: Vec<FixedBitSet> = rels.iter().map(|r| members(&graph, r).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let a = rng.gen_range(0..40u64);
            let b = rng.gen_range(0..40u64);
            let _ = graph.add_edge(EntityId(a), EdgeKind::SubclassOf, EntityId(b));
        }
        for (r, old) in rels.iter().zip(before) {
            let new = members(&graph, r).unwrap();
            assert!(old.is_subset(&new));
        }
    }

    fn people() -> KnowledgeGraph {
        g(
            "1\thuman\n2\tfemale\n3\ttaxon\n4\tplant\n10\tAda\n11\tBob\n12\tjaguar\n13\toak\n",
            "10\tinstance_of\t1\n10\tinstance_of\t2\n11\tinstance_of\t1\n\
             12\tinstance_of\t3\n13\tinstance_of\t3\n13\tinstance_of\t4\n10\tinstance_of\t3\n",
        )
    }

    fn is(root: u64) -> TypeExpr {
        TypeExpr::rel(Relation::new(EntityId(root), EdgeKind::InstanceOf))
    }

    #[test]
    fn boolean_rules() {
        let graph = people();
        let woman = TypeExpr::and(vec![is(1), is(2)]);
        assert!(eval_expr(&graph, &woman, EntityId(10)).unwrap());
        assert!(!eval_expr(&graph, &woman, EntityId(11)).unwrap());
        let animal = TypeExpr::and(vec![is(3), TypeExpr::not(TypeExpr::or(vec![is(1), is(4)]))]);
        // Ada is a taxon and a human.
        assert!(!eval_expr(&graph, &animal, EntityId(10)).unwrap());
        assert!(eval_expr(&graph, &animal, EntityId(12)).unwrap());
        assert!(!eval_expr(&graph, &animal, EntityId(13)).unwrap());
        assert!(eval_expr(&graph, &woman, EntityId(77)).is_err());
    }

    #[test]
    fn labels_follow_rule_order_and_catch_all() {
        let graph = people();
        let system = TypeSystem::new(vec![
            TypeAxis::authored(
                "IsA",
                vec![
                    ("Woman".into(), TypeExpr::and(vec![is(1), is(2)])),
                    ("Person".into(), is(1)),
                    ("Living".into(), is(3)),
                ],
            ),
            TypeAxis::discovered("plant", Relation::new(EntityId(4), EdgeKind::InstanceOf)),
        ])
        .unwrap();
        assert_eq!(label_entity(&graph, &system, EntityId(10)).unwrap(), ["Woman", "nonmember"]);
        assert_eq!(label_entity(&graph, &system, EntityId(11)).unwrap(), ["Person", "nonmember"]);
        assert_eq!(label_entity(&graph, &system, EntityId(13)).unwrap(), ["Living", "member"]);
        assert_eq!(label_entity(&graph, &system, EntityId(2)).unwrap(), ["Other", "nonmember"]);
        assert_eq!(label_entity(&graph, &TypeSystem::empty(), EntityId(2)), Err(SystemError::Empty));
    }

    #[test]
    fn george_washington_analog() {
        let graph = g(
            "1\tGeorge Washington\n2\tWashington, D.C.\n3\thuman\n4\tcity\n5\tpolitics\n6\tgeography\n",
            "1\tinstance_of\t3\n2\tinstance_of\t4\n1\twikipedia_category\t5\n2\twikipedia_category\t6\n",
        );
        let cat = |r: u64| TypeExpr::rel(Relation::new(EntityId(r), EdgeKind::WikipediaCategory));
        let system = TypeSystem::new(vec![
            TypeAxis::authored("IsA", vec![("Person".into(), is(3)), ("Place".into(), is(4))]),
            TypeAxis::authored("Topic", vec![("Politics".into(), cat(5)), ("Geography".into(), cat(6))]),
        ])
        .unwrap();
        assert_eq!(label_entity(&graph, &system, EntityId(1)).unwrap(), ["Person", "Politics"]);
        assert_eq!(label_entity(&graph, &system, EntityId(2)).unwrap(), ["Place", "Geography"]);
    }

    #[test]
    fn empty_membership_labels_other() {
        let graph = g("1\ta\n2\tb\n", "");
        let system = TypeSystem::new(vec![
            TypeAxis::authored("X", vec![("T".into(), is(1))]),
            TypeAxis::authored("Y", vec![("U".into(), is(2))]),
        ])
        .unwrap();
        for e in [1, 2] {
            assert_eq!(label_entity(&graph, &system, EntityId(e)).unwrap(), ["Other", "Other"]);
        }
    }

    #[test]
    fn json_round_trip_and_errors() {
        let system = TypeSystem::new(vec![
            TypeAxis::discovered("d", Relation::new(EntityId(3), EdgeKind::InstanceOf)),
            TypeAxis::authored(
                "a",
                vec![(
                    "T".into(),
                    TypeExpr::not(TypeExpr::or(vec![is(1), is(2).clone()])),
                )],
            ),
        ])
        .unwrap();
        let text = system.to_json_string();
        assert_eq!(TypeSystem::from_json_str(&text).unwrap(), system);

        let bad = r#"{"axes":[{"name":"a","kind":"authored","rules":[{"type":"T","expr":{"op":"and","args":[{"op":"rel","root":1,"edge":"instance_of","colour":1},{"op":"rel","root":2,"edge":"instance_of"}]}}]}]}"#;
        let err = TypeSystem::from_json_str(bad).unwrap_err();
        assert_eq!(err.path(), Some("axes[0].rules[0].expr.args[0]"));
        let one_arg = r#"{"axes":[{"name":"a","kind":"authored","rules":[{"type":"T","expr":{"op":"or","args":[{"op":"rel","root":1,"edge":"instance_of"}]}}]}]}"#;
        assert!(TypeSystem::from_json_str(one_arg).is_err());
        let dup = r#"{"axes":[{"name":"a","kind":"discovered","relation":{"root":1,"edge":"series"}},{"name":"a","kind":"discovered","relation":{"root":2,"edge":"series"}}]}"#;
        assert_eq!(TypeSystem::from_json_str(dup), Err(SystemError::DuplicateAxis("a".into())));
        let dup_type = r#"{"axes":[{"name":"a","kind":"authored","rules":[{"type":"T","expr":{"op":"rel","root":1,"edge":"series"}},{"type":"T","expr":{"op":"rel","root":1,"edge":"series"}}]}]}"#;
        assert!(matches!(TypeSystem::from_json_str(dup_type), Err(SystemError::DuplicateType(..))));
    }

    fn arb_relation() -> impl Strategy<Value = Relation> {
        (0u64..20, 0usize..7, prop::collection::btree_set(0usize..7, 0..3), any::<bool>()).prop_map(
            |(root, edge, trans, incl)| Relation {
                root: EntityId(root),
                edge: EdgeKind::BUILTIN[edge].clone(),
                transitive: trans.into_iter().map(|k| EdgeKind::BUILTIN[k].clone()).collect(),
                include_root: incl,
            },
        )
    }

    fn arb_expr() -> impl Strategy<Value = TypeExpr> {
        arb_relation().prop_map(TypeExpr::Rel).prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(TypeExpr::And),
                prop::collection::vec(inner.clone(), 2..4).prop_map(TypeExpr::Or),
                inner.prop_map(TypeExpr::not),
            ]
        })
    }

    fn arb_system() -> impl Strategy<Value = TypeSystem> {
        prop::collection::vec(
            prop_oneof![
                arb_relation().prop_map(AxisKind::Discovered),
                prop::collection::vec(arb_expr(), 0..4).prop_map(|exprs| AxisKind::Authored(
                    exprs
                        .into_iter()
                        .enumerate()
                        .map(|(i, expr)| TypeRule { type_name: format!("t{i}"), expr })
                        .collect()
                )),
            ],
            0..5,
        )
        .prop_map(|kinds| TypeSystem {
            axes: kinds
                .into_iter()
                .enumerate()
                .map(|(i, kind)| TypeAxis { name: format!("axis{i}"), kind })
                .collect(),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn systems_round_trip_through_json(system in arb_system()) {
            let parsed = TypeSystem::from_json_str(&system.to_json_string()).unwrap();
            prop_assert_eq!(parsed, system);
        }
    }

    fn truth_table(expr: &TypeExpr, sets: &HashMap<Relation, FixedBitSet>, i: usize) -> bool {
        match expr {
            TypeExpr::And(a) => a.iter().all(|x| truth_table(x, sets, i)),
            TypeExpr::Or(a) => a.iter().any(|x| truth_table(x, sets, i)),
            TypeExpr::Not(a) => !truth_table(a, sets, i),
            TypeExpr::Rel(r) => sets[r].contains(i),
        }
    }

    fn random_expr(rng: &mut ChaCha8Rng, rels: &[Relation], depth: usize) -> TypeExpr {
        if depth == 0 || rng.gen_bool(0.25) {
            return TypeExpr::Rel(rels[rng.gen_range(0..rels.len())].clone());
        }
        match rng.gen_range(0..3) {
            0 => TypeExpr::And((0..rng.gen_range(2..4)).map(|_| random_expr(rng, rels, depth - 1)).collect()),
            1 => TypeExpr::Or((0..rng.gen_range(2..4)).map(|_| random_expr(rng, rels, depth - 1)).collect()),
            _ => TypeExpr::not(random_expr(rng, rels, depth - 1)),
        }
    }

    #[test]
    fn expressions_match_truth_tables_and_de_morgan() {
        let graph = random_world(11, 50);
        let rels: Vec<Relation> = (0..5).map(|r| Relation::new(EntityId(r), EdgeKind::InstanceOf)).collect();
        let sets: HashMap<Relation, FixedBitSet> =
            rels.iter().map(|r| (r.clone(), members(&graph, r).unwrap())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let expr = random_expr(&mut rng, &rels, 3);
            for i in 0..graph.len() {
                let id = graph.id_at(i);
                assert_eq!(eval_expr(&graph, &expr, id).unwrap(), truth_table(&expr, &sets, i));
            }
            let a = random_expr(&mut rng, &rels, 2);
            let b = random_expr(&mut rng, &rels, 2);
            let lhs = TypeExpr::not(TypeExpr::and(vec![a.clone(), b.clone()]));
            let rhs = TypeExpr::or(vec![TypeExpr::not(a), TypeExpr::not(b)]);
            for i in 0..graph.len() {
                let id = graph.id_at(i);
                assert_eq!(eval_expr(&graph, &lhs, id).unwrap(), eval_expr(&graph, &rhs, id).unwrap());
            }
        }
    }

    #[test]
    fn every_entity_gets_exactly_one_type_per_axis() {
        let graph = random_world(2, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rels: Vec<Relation> = (0..6).map(|r| Relation::new(EntityId(r), EdgeKind::InstanceOf)).collect();
        let system = TypeSystem::new(vec![
            TypeAxis::authored(
                "x",
                (0..4).map(|i| (format!("t{i}"), random_expr(&mut rng, &rels, 2))).collect(),
            ),
            TypeAxis::discovered("y", rels[1].clone()),
        ])
        .unwrap();
        let labeler = Labeler::new(&graph, &system, &MembershipCache::new()).unwrap();
        for axis in 0..2 {
            let counts = labeler.type_counts(axis, graph.len());
            assert_eq!(counts.iter().sum::<usize>(), graph.len());
        }
    }
}
