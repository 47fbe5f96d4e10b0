//! Heterogeneous-graph data model and dataset ingestion.
//!
//! A dataset is described by a key-value descriptor file naming the entity
//! types, one tab-separated file per relation, a learner-KC interaction file
//! with ISO-8601 timestamps, and the embedding provider for KC content
//! features. Relations are undirected: each is stored once and the transpose
//! view is derived.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};

/// A typed node handle: type index into the graph's sorted type registry
/// plus an id in that type's contiguous id space.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct NodeRef {
    pub ty: u16,
    pub id: u32,
}

impl NodeRef {
    pub fn new(ty: u16, id: u32) -> Self {
        Self { ty, id }
    }
}

/// One undirected binary relation between two entity types, stored as
/// forward and reverse adjacency lists that always agree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Relation {
    /// fwd[a] = sorted ids of type B adjacent to a
    pub fwd: Vec<Vec<u32>>,
    /// rev[b] = sorted ids of type A adjacent to b
    pub rev: Vec<Vec<u32>>,
    pub edges: usize,
}

impl Relation {
    fn new(na: usize, nb: usize) -> Self {
        Self {
            fwd: vec![Vec::new(); na],
            rev: vec![Vec::new(); nb],
            edges: 0,
        }
    }

    fn insert(&mut self, a: u32, b: u32) {
        if let Err(pos) = self.fwd[a as usize].binary_search(&b) {
            self.fwd[a as usize].insert(pos, b);
            let pos = self.rev[b as usize].binary_search(&a).unwrap_err();
            self.rev[b as usize].insert(pos, a);
            self.edges += 1;
        }
    }
}

/// Typed node registry plus typed binary relation matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeteroGraph {
    /// Sorted type names; `NodeRef::ty` indexes into this.
    types: Vec<String>,
    counts: Vec<u32>,
    /// Keyed by (ty_a, ty_b) with ty_a <= ty_b.
    #[serde(with = "relation_map")]
    relations: BTreeMap<(u16, u16), Relation>,
}

/// JSON objects need string keys; relations serialize as an entry list.
mod relation_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(u16, u16), Relation>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<(&(u16, u16), &Relation)> = map.iter().collect();
        serde::Serialize::serialize(&entries, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<(u16, u16), Relation>, D::Error> {
        let entries: Vec<((u16, u16), Relation)> = serde::Deserialize::deserialize(d)?;
        Ok(entries.into_iter().collect())
    }
}

impl HeteroGraph {
    /// Build an empty graph over the given `(type name, node count)` registry.
    /// Type names are sorted so that type-index order equals name order.
    pub fn new(entities: &[(String, u32)]) -> Result<Self> {
        let mut sorted: Vec<(String, u32)> = entities.to_vec();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(AmrError::Schema(format!(
                    "duplicate entity type '{}'",
                    w[0].0
                )));
            }
        }
        Ok(Self {
            types: sorted.iter().map(|(n, _)| n.clone()).collect(),
            counts: sorted.iter().map(|(_, c)| *c).collect(),
            relations: BTreeMap::new(),
        })
    }

    pub fn type_names(&self) -> &[String] {
        &self.types
    }

    pub fn type_index(&self, name: &str) -> Option<u16> {
        self.types
            .binary_search_by(|t| t.as_str().cmp(name))
            .ok()
            .map(|i| i as u16)
    }

    pub fn type_name(&self, ty: u16) -> &str {
        &self.types[ty as usize]
    }

    pub fn node_count(&self, ty: u16) -> u32 {
        self.counts[ty as usize]
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    fn key(a: u16, b: u16) -> (u16, u16) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Insert an undirected edge. Ids must be inside their type's id space.
    pub fn add_edge(&mut self, ty_a: u16, a: u32, ty_b: u16, b: u32) -> Result<()> {
        if a >= self.counts[ty_a as usize] || b >= self.counts[ty_b as usize] {
            return Err(AmrError::Schema(format!(
                "edge ({}:{a}, {}:{b}) outside id space",
                self.type_name(ty_a),
                self.type_name(ty_b)
            )));
        }
        let (ka, kb) = Self::key(ty_a, ty_b);
        let (na, nb) = (self.counts[ka as usize] as usize, self.counts[kb as usize] as usize);
        let rel = self
            .relations
            .entry((ka, kb))
            .or_insert_with(|| Relation::new(na, nb));
        let (x, y) = if (ty_a, ty_b) == (ka, kb) { (a, b) } else { (b, a) };
        rel.insert(x, y);
        if ka == kb && x != y {
            rel.insert(y, x);
        }
        Ok(())
    }

    /// Ensure a relation exists (possibly with zero edges).
    pub fn declare_relation(&mut self, ty_a: u16, ty_b: u16) {
        let (ka, kb) = Self::key(ty_a, ty_b);
        let (na, nb) = (self.counts[ka as usize] as usize, self.counts[kb as usize] as usize);
        self.relations
            .entry((ka, kb))
            .or_insert_with(|| Relation::new(na, nb));
    }

    pub fn relation(&self, ty_a: u16, ty_b: u16) -> Option<&Relation> {
        self.relations.get(&Self::key(ty_a, ty_b))
    }

    /// Declared relation keys in canonical order.
    pub fn relation_keys(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        self.relations.keys().copied()
    }

    /// Neighbors of type `ty_b` adjacent to `node`, in ascending id order.
    pub fn neighbors_of_type(&self, node: NodeRef, ty_b: u16) -> &[u32] {
        static EMPTY: Vec<u32> = Vec::new();
        match self.relations.get(&Self::key(node.ty, ty_b)) {
            None => &EMPTY,
            Some(rel) => {
                let lists = if node.ty <= ty_b { &rel.fwd } else { &rel.rev };
                &lists[node.id as usize]
            }
        }
    }

    /// All neighbors of `node` across every declared relation touching its
    /// type, in (type, id) ascending order.
    pub fn neighbors(&self, node: NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        for ty in 0..self.types.len() as u16 {
            for &id in self.neighbors_of_type(node, ty) {
                out.push(NodeRef::new(ty, id));
            }
        }
        out
    }

    pub fn has_edge(&self, a: NodeRef, b: NodeRef) -> bool {
        self.neighbors_of_type(a, b.ty).binary_search(&b.id).is_ok()
    }

    /// Total node count across all types.
    pub fn total_nodes(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Per-node degree sequence of one relation, sorted ascending — an
    /// isomorphism-insensitive fingerprint used by tests.
    pub fn degree_sequence(&self, ty_a: u16, ty_b: u16) -> Vec<usize> {
        match self.relation(ty_a, ty_b) {
            None => Vec::new(),
            Some(rel) => {
                let mut d: Vec<usize> = rel.fwd.iter().map(|l| l.len()).collect();
                d.extend(rel.rev.iter().map(|l| l.len()));
                d.sort_unstable();
                d
            }
        }
    }
}

/// Train/test membership of one interaction record.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Interaction {
    pub learner: u32,
    pub kc: u32,
    /// Unix seconds.
    pub ts: i64,
    pub split: Split,
}

/// Timestamped learner-KC interactions, sorted by (ts, learner, kc).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn train(&self) -> impl Iterator<Item = &Interaction> {
        self.records.iter().filter(|r| r.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Interaction> {
        self.records.iter().filter(|r| r.split == Split::Test)
    }

    /// KC sets per learner over all splits.
    pub fn observed_by_learner(&self, n_learners: u32) -> Vec<std::collections::BTreeSet<u32>> {
        let mut out = vec![std::collections::BTreeSet::new(); n_learners as usize];
        for r in &self.records {
            out[r.learner as usize].insert(r.kc);
        }
        out
    }
}

/// Parsed dataset descriptor.
#[derive(Clone, Debug)]
pub struct Descriptor {
    pub entities: Vec<(String, u32)>,
    /// (type_a, type_b, relation file path)
    pub relations: Vec<(String, String, PathBuf)>,
    pub interactions: Option<PathBuf>,
    pub kc_names: Option<PathBuf>,
    pub cutoff: Option<DateTime<Utc>>,
    pub embedding_provider: String,
    pub embedding_dim: usize,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = s.parse::<DateTime<Utc>>() {
        return Some(dt);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(DateTime::from_naive_utc_and_offset(
            d.and_hms_opt(0, 0, 0).unwrap(),
            Utc,
        ));
    }
    None
}

impl Descriptor {
    /// Parse a descriptor file. Lines are `key value...`; `#` starts a comment.
    pub fn parse(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let file = path.display().to_string();
        let mut d = Descriptor {
            entities: Vec::new(),
            relations: Vec::new(),
            interactions: None,
            kc_names: None,
            cutoff: None,
            embedding_provider: "trigram".to_string(),
            embedding_dim: 10,
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            let bad = |detail: String| AmrError::Parse {
                file: file.clone(),
                line: ln + 1,
                detail,
            };
            match key {
                "entity" => {
                    if rest.len() != 2 {
                        return Err(bad("expected: entity <name> <count>".into()));
                    }
                    let count: u32 = rest[1]
                        .parse()
                        .map_err(|_| bad(format!("bad count '{}'", rest[1])))?;
                    d.entities.push((rest[0].to_string(), count));
                }
                "relation" => {
                    if rest.len() != 3 {
                        return Err(bad("expected: relation <typeA> <typeB> <file>".into()));
                    }
                    d.relations.push((
                        rest[0].to_string(),
                        rest[1].to_string(),
                        dir.join(rest[2]),
                    ));
                }
                "interactions" => {
                    if rest.len() != 1 {
                        return Err(bad("expected: interactions <file>".into()));
                    }
                    d.interactions = Some(dir.join(rest[0]));
                }
                "kc_names" => {
                    if rest.len() != 1 {
                        return Err(bad("expected: kc_names <file>".into()));
                    }
                    d.kc_names = Some(dir.join(rest[0]));
                }
                "cutoff" => {
                    if rest.len() != 1 {
                        return Err(bad("expected: cutoff <iso-8601>".into()));
                    }
                    d.cutoff = Some(
                        parse_timestamp(rest[0])
                            .ok_or_else(|| bad(format!("bad timestamp '{}'", rest[0])))?,
                    );
                }
                "embedding_provider" => {
                    if rest.len() != 1 {
                        return Err(bad("expected: embedding_provider <name>".into()));
                    }
                    d.embedding_provider = rest[0].to_string();
                }
                "embedding_dim" => {
                    d.embedding_dim = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("expected: embedding_dim <n>".into()))?;
                }
                other => {
                    return Err(bad(format!("unknown descriptor key '{other}'")));
                }
            }
        }
        if d.entities.is_empty() {
            return Err(AmrError::Schema(format!("{file}: no entities declared")));
        }
        Ok(d)
    }
}

/// A loaded dataset: the graph, the interaction log, and KC names.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub interactions: InteractionLog,
    pub kc_names: Vec<String>,
    pub embedding_provider: String,
    pub embedding_dim: usize,
}

/// Load a dataset from a descriptor file: every declared relation file, the
/// interaction log split at the descriptor's temporal cutoff, and KC names.
pub fn load_dataset(descriptor_path: &Path) -> Result<Dataset> {
    let desc = Descriptor::parse(descriptor_path)?;
    let mut graph = HeteroGraph::new(&desc.entities)?;

    for (ta, tb, file) in &desc.relations {
        let ia = graph
            .type_index(ta)
            .ok_or_else(|| AmrError::Schema(format!("unknown entity type '{ta}'")))?;
        let ib = graph
            .type_index(tb)
            .ok_or_else(|| AmrError::Schema(format!("unknown entity type '{tb}'")))?;
        graph.declare_relation(ia, ib);
        let text = fs::read_to_string(file)?;
        let fname = file.display().to_string();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a.trim(), b.trim()),
                _ => {
                    return Err(AmrError::Parse {
                        file: fname.clone(),
                        line: ln + 1,
                        detail: "expected two tab-separated ids".into(),
                    })
                }
            };
            let parse_id = |s: &str| -> Result<u32> {
                s.parse().map_err(|_| AmrError::Parse {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: format!("bad id '{s}'"),
                })
            };
            let (a, b) = (parse_id(a)?, parse_id(b)?);
            if a >= graph.node_count(ia) || b >= graph.node_count(ib) {
                return Err(AmrError::Referential {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: format!("({ta}:{a}, {tb}:{b}) outside declared id space"),
                });
            }
            graph.add_edge(ia, a, ib, b)?;
        }
    }

    let kc_ty = graph
        .type_index("KC")
        .ok_or_else(|| AmrError::Schema("dataset has no 'KC' entity type".into()))?;
    let learner_ty = graph
        .type_index("learner")
        .ok_or_else(|| AmrError::Schema("dataset has no 'learner' entity type".into()))?;

    let mut kc_names = vec![String::new(); graph.node_count(kc_ty) as usize];
    if let Some(file) = &desc.kc_names {
        let text = fs::read_to_string(file)?;
        let fname = file.display().to_string();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id: u32 = cols
                .next()
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| AmrError::Parse {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: "expected: <kc id>\\t<name>".into(),
                })?;
            if id >= graph.node_count(kc_ty) {
                return Err(AmrError::Referential {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: format!("KC id {id} outside declared id space"),
                });
            }
            kc_names[id as usize] = cols.next().unwrap_or("").trim().to_string();
        }
    }

    let mut records = Vec::new();
    if let Some(file) = &desc.interactions {
        let text = fs::read_to_string(file)?;
        let fname = file.display().to_string();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(|c| c.trim()).collect();
            if cols.len() != 3 {
                return Err(AmrError::Parse {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: "expected: <learner>\\t<kc>\\t<iso-8601 timestamp>".into(),
                });
            }
            let learner: u32 = cols[0].parse().map_err(|_| AmrError::Parse {
                file: fname.clone(),
                line: ln + 1,
                detail: format!("bad learner id '{}'", cols[0]),
            })?;
            let kc: u32 = cols[1].parse().map_err(|_| AmrError::Parse {
                file: fname.clone(),
                line: ln + 1,
                detail: format!("bad KC id '{}'", cols[1]),
            })?;
            if learner >= graph.node_count(learner_ty) || kc >= graph.node_count(kc_ty) {
                return Err(AmrError::Referential {
                    file: fname.clone(),
                    line: ln + 1,
                    detail: format!("(learner:{learner}, KC:{kc}) outside declared id space"),
                });
            }
            let ts = parse_timestamp(cols[2]).ok_or_else(|| AmrError::Parse {
                file: fname.clone(),
                line: ln + 1,
                detail: format!("bad timestamp '{}'", cols[2]),
            })?;
            let split = match desc.cutoff {
                Some(cutoff) if ts >= cutoff => Split::Test,
                _ => Split::Train,
            };
            records.push(Interaction {
                learner,
                kc,
                ts: ts.timestamp(),
                split,
            });
        }
    }
    records.sort_by_key(|r| (r.ts, r.learner, r.kc));

    Ok(Dataset {
        graph,
        interactions: InteractionLog { records },
        kc_names,
        embedding_provider: desc.embedding_provider,
        embedding_dim: desc.embedding_dim,
    })
}
