//! Interned triple store, inverse augmentation, and the undirected simple
//! graph used by the rule miner.
//!
//! Datasets are three UTF-8 TSV files (train/valid/test) with lines
//! `head<TAB>relation<TAB>tail`. Entities and relations are interned to dense
//! ids by first appearance in train, then valid, then test, so the id maps
//! are deterministic and independent of hash order. Inverse relations are
//! internal: a directed relation id encodes `r` on even values and `r⁻¹` on
//! odd values, and never appears in input files. In serialized outputs the
//! inverse of relation `name` is written as `INV:name`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Prefix marking the inverse orientation of a relation in serialized output.
pub const INVERSE_PREFIX: &str = "INV:";

#[derive(Error, Debug)]
pub enum KgError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine {
        path: String,
        line: usize,
        found: usize,
    },
    #[error("train split is empty")]
    EmptyTrain,
    #[error("knowledge graph is already inverse-augmented")]
    AlreadyAugmented,
    #[error("operation requires an inverse-augmented graph")]
    NotAugmented,
    #[error("bad interned-graph file {path}: {reason}")]
    BadInterned { path: String, reason: String },
}

/// Dense entity index, contiguous from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Directed relation label. Even values are base relations, odd values their
/// inverses, so `inverse` is an involution and directed ids stay contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn forward(base: u32) -> Self {
        RelationId(base * 2)
    }

    pub fn backward(base: u32) -> Self {
        RelationId(base * 2 + 1)
    }

    /// Index into arrays sized by the directed relation count.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Index of the underlying base relation.
    pub fn base(self) -> usize {
        (self.0 / 2) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn inverse(self) -> Self {
        RelationId(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    /// The same fact read in the opposite direction.
    pub fn inverted(self) -> Self {
        Triple {
            head: self.tail,
            relation: self.relation.inverse(),
            tail: self.head,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Counters reported by [`load_dataset`].
#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    /// Duplicate lines dropped per split (train, valid, test).
    pub duplicates_dropped: [usize; 3],
}

/// Interned triple store with per-split triples and train adjacency indexes.
///
/// All indexes are rebuilt whenever the triple sets change; after
/// construction the graph is immutable and can be shared across threads.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    augmented: bool,
    /// Per-entity train adjacency, sorted by (relation, tail).
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
    /// Train triples grouped by directed relation id.
    by_relation: Vec<Vec<Triple>>,
}

impl KnowledgeGraph {
    /// Build a graph from interned parts. Triples must reference ids below
    /// the respective counts; duplicates within a split are dropped.
    pub fn from_parts(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        augmented: bool,
    ) -> Self {
        let entity_ids = entity_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), EntityId(i as u32)))
            .collect();
        let mut kg = KnowledgeGraph {
            entity_names,
            relation_names,
            entity_ids,
            train: dedup_triples(train),
            valid: dedup_triples(valid),
            test: dedup_triples(test),
            augmented,
            adjacency: Vec::new(),
            by_relation: Vec::new(),
        };
        kg.rebuild_indexes();
        kg
    }

    /// Convenience constructor for tests and toy pipelines: triples given as
    /// `(head, relation, tail)` name strings, interned in order of appearance.
    pub fn from_named_triples(train: &[(&str, &str, &str)]) -> Self {
        let mut entity_names: Vec<String> = Vec::new();
        let mut relation_names: Vec<String> = Vec::new();
        let mut emap: HashMap<String, u32> = HashMap::new();
        let mut rmap: HashMap<String, u32> = HashMap::new();
        let mut triples = Vec::new();
        for &(h, r, t) in train {
            let hid = *emap.entry(h.to_string()).or_insert_with(|| {
                entity_names.push(h.to_string());
                entity_names.len() as u32 - 1
            });
            let rid = *rmap.entry(r.to_string()).or_insert_with(|| {
                relation_names.push(r.to_string());
                relation_names.len() as u32 - 1
            });
            let tid = *emap.entry(t.to_string()).or_insert_with(|| {
                entity_names.push(t.to_string());
                entity_names.len() as u32 - 1
            });
            triples.push(Triple::new(
                EntityId(hid),
                RelationId::forward(rid),
                EntityId(tid),
            ));
        }
        KnowledgeGraph::from_parts(
            entity_names,
            relation_names,
            triples,
            Vec::new(),
            Vec::new(),
            false,
        )
    }

    fn rebuild_indexes(&mut self) {
        let ne = self.entity_names.len();
        // Forward ids are even, so the id space spans 2R even before
        // augmentation populates the odd (inverse) slots.
        let nr = self.relation_names.len() * 2;
        let mut adjacency = vec![Vec::new(); ne];
        let mut by_relation = vec![Vec::new(); nr];
        for &t in &self.train {
            adjacency[t.head.index()].push((t.relation, t.tail));
            by_relation[t.relation.index()].push(t);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        self.adjacency = adjacency;
        self.by_relation = by_relation;
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    /// Number of base (file-level) relations.
    pub fn num_relations_raw(&self) -> usize {
        self.relation_names.len()
    }

    /// Number of directed relation labels: doubles after augmentation.
    pub fn num_relations_directed(&self) -> usize {
        if self.augmented {
            self.relation_names.len() * 2
        } else {
            self.relation_names.len()
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entity_names[e.index()]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    /// Directed id for a serialized relation name, honoring the `INV:` prefix.
    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        let (base_name, inv) = match name.strip_prefix(INVERSE_PREFIX) {
            Some(rest) => (rest, true),
            None => (name, false),
        };
        let base = self.relation_names.iter().position(|n| n == base_name)? as u32;
        Some(if inv {
            RelationId::backward(base)
        } else {
            RelationId::forward(base)
        })
    }

    /// Serialized name of a directed relation (`INV:` prefix for inverses).
    pub fn relation_name(&self, r: RelationId) -> String {
        let base = &self.relation_names[r.base()];
        if r.is_inverse() {
            format!("{INVERSE_PREFIX}{base}")
        } else {
            base.clone()
        }
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Train out-edges of `e`, sorted by (relation, tail).
    pub fn adjacency(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.adjacency[e.index()]
    }

    /// Train tails reachable from `e` under directed relation `r`.
    pub fn neighbors(&self, e: EntityId, r: RelationId) -> &[(RelationId, EntityId)] {
        let adj = &self.adjacency[e.index()];
        let lo = adj.partition_point(|&(rel, _)| rel < r);
        let hi = adj.partition_point(|&(rel, _)| rel <= r);
        &adj[lo..hi]
    }

    /// Train triples whose directed relation is `r`.
    pub fn triples_of(&self, r: RelationId) -> &[Triple] {
        &self.by_relation[r.index()]
    }

    /// SHA-256 over the canonical interned serialization; used to stamp
    /// derived artifacts so stale mixes are rejected.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.to_interned_string().as_bytes());
        hasher.finalize().into()
    }

    fn to_interned_string(&self) -> String {
        let mut out = String::new();
        out.push_str("kglp-kg v1\n");
        out.push_str(&format!("augmented {}\n", u8::from(self.augmented)));
        out.push_str(&format!("entities {}\n", self.entity_names.len()));
        for name in &self.entity_names {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str(&format!("relations {}\n", self.relation_names.len()));
        for name in &self.relation_names {
            out.push_str(name);
            out.push('\n');
        }
        for (tag, triples) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            out.push_str(&format!("{tag} {}\n", triples.len()));
            for t in triples {
                out.push_str(&format!("{} {} {}\n", t.head.0, t.relation.0, t.tail.0));
            }
        }
        out
    }

    /// Externalize the interned graph (id maps plus numeric triples).
    pub fn save_interned(&self, path: &Path) -> Result<(), KgError> {
        let mut f = fs::File::create(path).map_err(|e| KgError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        f.write_all(self.to_interned_string().as_bytes())
            .map_err(|e| KgError::Io {
                path: path.display().to_string(),
                source: e,
            })
    }

    /// Reload a graph written by [`save_interned`]; id maps and triple sets
    /// round-trip exactly.
    pub fn load_interned(path: &Path) -> Result<Self, KgError> {
        let bad = |reason: &str| KgError::BadInterned {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let text = fs::read_to_string(path).map_err(|e| KgError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lines = text.lines();
        if lines.next() != Some("kglp-kg v1") {
            return Err(bad("missing header"));
        }
        let augmented = match lines.next().and_then(|l| l.strip_prefix("augmented ")) {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(bad("missing augmented flag")),
        };
        let read_count = |prefix: &str, lines: &mut std::str::Lines| -> Result<usize, KgError> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(prefix))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad(&format!("missing `{prefix}` count")))
        };
        let ne = read_count("entities ", &mut lines)?;
        let entity_names: Vec<String> = (&mut lines).take(ne).map(str::to_string).collect();
        if entity_names.len() != ne {
            return Err(bad("truncated entity list"));
        }
        let nr = read_count("relations ", &mut lines)?;
        let relation_names: Vec<String> = (&mut lines).take(nr).map(str::to_string).collect();
        if relation_names.len() != nr {
            return Err(bad("truncated relation list"));
        }
        let mut splits = Vec::new();
        for tag in ["train ", "valid ", "test "] {
            let n = read_count(tag, &mut lines)?;
            let mut triples = Vec::with_capacity(n);
            for _ in 0..n {
                let line = lines.next().ok_or_else(|| bad("truncated triple list"))?;
                let mut it = line.split(' ').map(|v| v.parse::<u32>());
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(h)), Some(Ok(r)), Some(Ok(t))) => {
                        triples.push(Triple::new(EntityId(h), RelationId(r), EntityId(t)));
                    }
                    _ => return Err(bad("malformed triple line")),
                }
            }
            splits.push(triples);
        }
        let test = splits.pop().unwrap();
        let valid = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(KnowledgeGraph::from_parts(
            entity_names,
            relation_names,
            train,
            valid,
            test,
            augmented,
        ))
    }
}

fn dedup_triples(triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = HashSet::with_capacity(triples.len());
    triples.into_iter().filter(|t| seen.insert(*t)).collect()
}

/// Parse the three split files and intern identifiers.
///
/// Returns the graph before inverse augmentation together with load
/// statistics. Entity/relation sets are the union over all three splits;
/// duplicate lines within a file are dropped (and counted in the stats).
pub fn load_dataset(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
) -> Result<(KnowledgeGraph, LoadStats), KgError> {
    let mut entity_names: Vec<String> = Vec::new();
    let mut relation_names: Vec<String> = Vec::new();
    let mut emap: HashMap<String, u32> = HashMap::new();
    let mut rmap: HashMap<String, u32> = HashMap::new();
    let mut stats = LoadStats::default();
    let mut splits: Vec<Vec<Triple>> = Vec::new();

    for (si, path) in [train_path, valid_path, test_path].into_iter().enumerate() {
        let file = fs::File::open(path).map_err(|e| KgError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut triples = Vec::new();
        let mut seen: HashSet<Triple> = HashSet::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KgError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    found: fields.len(),
                });
            }
            let hid = *emap.entry(fields[0].to_string()).or_insert_with(|| {
                entity_names.push(fields[0].to_string());
                entity_names.len() as u32 - 1
            });
            let rid = *rmap.entry(fields[1].to_string()).or_insert_with(|| {
                relation_names.push(fields[1].to_string());
                relation_names.len() as u32 - 1
            });
            let tid = *emap.entry(fields[2].to_string()).or_insert_with(|| {
                entity_names.push(fields[2].to_string());
                entity_names.len() as u32 - 1
            });
            let triple = Triple::new(EntityId(hid), RelationId::forward(rid), EntityId(tid));
            if seen.insert(triple) {
                triples.push(triple);
            } else {
                stats.duplicates_dropped[si] += 1;
                log::warn!(
                    "{}:{}: dropping duplicate triple `{}`",
                    path.display(),
                    lineno + 1,
                    line
                );
            }
        }
        splits.push(triples);
    }

    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    if train.is_empty() {
        return Err(KgError::EmptyTrain);
    }
    Ok((
        KnowledgeGraph::from_parts(entity_names, relation_names, train, valid, test, false),
        stats,
    ))
}

/// Add `(t, r⁻¹, h)` to every split for each `(h, r, t)`; the directed
/// relation count doubles. Fails on a graph that is already augmented.
pub fn augment_inverses(kg: KnowledgeGraph) -> Result<KnowledgeGraph, KgError> {
    if kg.augmented {
        return Err(KgError::AlreadyAugmented);
    }
    let augment = |triples: &[Triple]| -> Vec<Triple> {
        let mut out = Vec::with_capacity(triples.len() * 2);
        out.extend_from_slice(triples);
        out.extend(triples.iter().map(|t| t.inverted()));
        out
    };
    Ok(KnowledgeGraph::from_parts(
        kg.entity_names.clone(),
        kg.relation_names.clone(),
        augment(&kg.train),
        augment(&kg.valid),
        augment(&kg.test),
        true,
    ))
}

/// Undirected entity graph with at most one edge per entity pair and no
/// self-loops. Each edge carries the directed relation labels of the train
/// triples connecting the pair, stored oriented from the smaller endpoint;
/// the opposite orientation is obtained by inverting every label.
#[derive(Debug, Clone)]
pub struct SimpleGraph {
    /// Sorted neighbor lists.
    neighbors: Vec<Vec<EntityId>>,
    /// Labels keyed by (min, max) entity pair, oriented min → max.
    labels: HashMap<(EntityId, EntityId), Vec<RelationId>>,
}

impl SimpleGraph {
    pub fn num_entities(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, e: EntityId) -> &[EntityId] {
        &self.neighbors[e.index()]
    }

    pub fn has_edge(&self, a: EntityId, b: EntityId) -> bool {
        self.labels.contains_key(&key(a, b))
    }

    /// Directed labels of edge `{a, b}` read in the direction a → b.
    pub fn labels(&self, a: EntityId, b: EntityId) -> Vec<RelationId> {
        match self.labels.get(&key(a, b)) {
            None => Vec::new(),
            Some(labels) if a < b => labels.clone(),
            Some(labels) => labels.iter().map(|r| r.inverse()).collect(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (EntityId, EntityId)> + '_ {
        self.labels.keys().copied()
    }
}

fn key(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Collapse the augmented train split into the undirected simple graph.
///
/// Panics if the graph is not augmented: the miner depends on every edge
/// label list being closed under inversion.
pub fn to_simple_graph(kg: &KnowledgeGraph) -> SimpleGraph {
    assert!(
        kg.is_augmented(),
        "to_simple_graph requires an inverse-augmented graph"
    );
    let mut labels: HashMap<(EntityId, EntityId), Vec<RelationId>> = HashMap::new();
    for t in kg.train() {
        if t.head == t.tail {
            continue;
        }
        let k = key(t.head, t.tail);
        // Store oriented min → max; the inverse triple covers the other
        // direction, so keep only labels whose forward form starts at min.
        if t.head == k.0 {
            labels.entry(k).or_default().push(t.relation);
        }
    }
    let mut neighbors = vec![Vec::new(); kg.num_entities()];
    for &(a, b) in labels.keys() {
        neighbors[a.index()].push(b);
        neighbors[b.index()].push(a);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    for list in labels.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    SimpleGraph { neighbors, labels }
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KnowledgeGraph({} entities, {} relations{}, train/valid/test = {}/{}/{})",
            self.num_entities(),
            self.num_relations_raw(),
            if self.augmented { " augmented" } else { "" },
            self.train.len(),
            self.valid.len(),
            self.test.len()
        )
    }
}
