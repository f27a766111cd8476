//! Graph data model, CSV ingestion, and the sampling/splitting protocol.
//!
//! A dataset is one node table (features and binary labels) shared by any
//! number of relation graphs. Each relation is one party's graph: an
//! undirected weighted edge set stored once per unordered pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::seed;

pub type NodeId = usize;

pub const LEGIT: u8 = 0;
pub const FRAUD: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    features: Array2<f64>,
    labels: Vec<u8>,
}

impl NodeTable {
    pub fn new(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not binary")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature(&self, id: NodeId) -> ArrayView1<'_, f64> {
        self.features.row(id)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, id: NodeId) -> u8 {
        self.labels[id]
    }
}

/// One party's view of the data: a vertex set and a weighted undirected
/// edge set over it. Immutable once built.
#[derive(Debug, Clone)]
pub struct ClientGraph {
    relation: String,
    vertices: BTreeSet<NodeId>,
    edges: BTreeMap<(NodeId, NodeId), f64>,
    adjacency: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    nodes: Arc<NodeTable>,
}

impl PartialEq for ClientGraph {
    fn eq(&self, other: &Self) -> bool {
        self.relation == other.relation
            && self.vertices == other.vertices
            && self.edges == other.edges
            && (Arc::ptr_eq(&self.nodes, &other.nodes) || self.nodes == other.nodes)
    }
}

fn canonical(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl ClientGraph {
    /// Builds a graph. Duplicate edges (in either orientation) are summed and
    /// self-loops are dropped.
    pub fn new(
        relation: impl Into<String>,
        nodes: Arc<NodeTable>,
        vertices: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
    ) -> Result<Self> {
        let vertices: BTreeSet<NodeId> = vertices.into_iter().collect();
        if let Some(&v) = vertices.iter().next_back() {
            if v >= nodes.len() {
                return Err(Error::InvalidGraph(format!(
                    "vertex {v} outside node table of size {}",
                    nodes.len()
                )));
            }
        }
        let mut merged: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for (u, v, w) in edges {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has weight {w}"
                )));
            }
            for x in [u, v] {
                if !vertices.contains(&x) {
                    return Err(Error::UnknownVertex(x));
                }
            }
            if u == v {
                continue;
            }
            *merged.entry(canonical(u, v)).or_insert(0.0) += w;
        }
        Ok(Self::from_canonical(
            relation.into(),
            nodes,
            vertices,
            merged,
        ))
    }

    fn from_canonical(
        relation: String,
        nodes: Arc<NodeTable>,
        vertices: BTreeSet<NodeId>,
        edges: BTreeMap<(NodeId, NodeId), f64>,
    ) -> Self {
        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, f64)>> =
            vertices.iter().map(|&v| (v, Vec::new())).collect();
        for (&(u, v), &w) in &edges {
            adjacency
                .get_mut(&u)
                .expect("endpoint checked")
                .push((v, w));
            adjacency
                .get_mut(&v)
                .expect("endpoint checked")
                .push((u, w));
        }
        for list in adjacency.values_mut() {
            list.sort_by_key(|&(n, _)| n);
        }
        Self {
            relation,
            vertices,
            edges,
            adjacency,
            nodes,
        }
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn with_relation(mut self, relation: impl Into<String>) -> Self {
        self.relation = relation.into();
        self
    }

    pub fn nodes(&self) -> &Arc<NodeTable> {
        &self.nodes
    }

    pub fn vertices(&self) -> &BTreeSet<NodeId> {
        &self.vertices
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.vertices.contains(&v)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(u, v, w)` triples with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.edges.get(&canonical(u, v)).copied()
    }

    /// Neighbors of `v` sorted by id; empty for unknown vertices.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        self.adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sum of the weights of all edges incident to `v`.
    pub fn incident_sum(&self, v: NodeId) -> Result<f64> {
        match self.adjacency.get(&v) {
            Some(list) => Ok(list.iter().map(|&(_, w)| w).sum()),
            None => Err(Error::UnknownVertex(v)),
        }
    }

    /// Subgraph induced by `keep ∩ vertices`.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Self {
        let vertices: BTreeSet<NodeId> = self.vertices.intersection(keep).copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|((u, v), _)| vertices.contains(u) && vertices.contains(v))
            .map(|(&k, &w)| (k, w))
            .collect();
        Self::from_canonical(self.relation.clone(), self.nodes.clone(), vertices, edges)
    }

    /// Writes the edge list in the `src,dst,weight` CSV format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "src,dst,weight")?;
        for (u, v, w) in self.edges() {
            writeln!(out, "{u},{v},{w}")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MultiRelationDataset {
    pub nodes: Arc<NodeTable>,
    pub relations: Vec<ClientGraph>,
}

impl MultiRelationDataset {
    pub fn relation(&self, name: &str) -> Option<&ClientGraph> {
        self.relations.iter().find(|g| g.relation() == name)
    }
}

/// Data rows of a CSV file with `#` comment lines and a leading header
/// (if any) removed. Record positions keep physical line numbers.
fn data_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec?;
        if rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        if std::mem::take(&mut first) && is_header(&rec) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// A first row whose leading field is not an integer is a header.
fn is_header(record: &csv::StringRecord) -> bool {
    record.get(0).is_some_and(|f| f.parse::<i64>().is_err())
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `id,label,f0,...,f{F-1}` rows. Ids must cover `[0, N)` exactly once.
pub fn load_nodes(path: &Path) -> Result<NodeTable> {
    let mut rows: BTreeMap<usize, (u8, Vec<f64>)> = BTreeMap::new();
    let mut width: Option<usize> = None;
    for rec in data_records(path)? {
        let line = line_of(&rec);
        if rec.len() < 2 {
            return Err(parse_err(path, line, "expected id,label,features..."));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad node id {:?}", &rec[0])))?;
        let label = match &rec[1] {
            "0" => LEGIT,
            "1" => FRAUD,
            other => {
                return Err(Error::NonBinaryLabel {
                    path: path.to_path_buf(),
                    line,
                    label: other.to_string(),
                })
            }
        };
        let feats = rec
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err(path, line, "bad feature value"))?;
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {w} features, found {}", feats.len()),
                ))
            }
            _ => {}
        }
        if rows.insert(id, (label, feats)).is_some() {
            return Err(parse_err(path, line, format!("duplicate node id {id}")));
        }
    }
    let n = rows.len();
    if let Some((&last, _)) = rows.iter().next_back() {
        if last != n - 1 {
            return Err(Error::InvalidArgument(format!(
                "{}: node ids are not contiguous from 0 (max id {last}, {n} rows)",
                path.display()
            )));
        }
    }
    let f = width.unwrap_or(0);
    let mut features = Array2::zeros((n, f));
    let mut labels = Vec::with_capacity(n);
    for (id, (label, feats)) in rows {
        features.row_mut(id).assign(&ArrayView1::from(&feats));
        labels.push(label);
    }
    NodeTable::new(features, labels)
}

/// Reads `src,dst[,weight]` rows into a graph over every node of `nodes`.
pub fn load_relation(name: &str, path: &Path, nodes: Arc<NodeTable>) -> Result<ClientGraph> {
    let n = nodes.len() as i64;
    let mut edges = Vec::new();
    for rec in data_records(path)? {
        let line = line_of(&rec);
        if rec.len() < 2 || rec.len() > 3 {
            return Err(parse_err(path, line, "expected src,dst[,weight]"));
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(rec.iter()) {
            let id: i64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad node id {field:?}")))?;
            if id < 0 || id >= n {
                return Err(Error::DanglingEndpoint {
                    path: path.to_path_buf(),
                    line,
                    id,
                });
            }
            *slot = id as usize;
        }
        let w = match rec.get(2) {
            None | Some("") => 1.0,
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| parse_err(path, line, format!("bad weight {s:?}")))?,
        };
        edges.push((ends[0], ends[1], w));
    }
    let all = 0..nodes.len();
    ClientGraph::new(name, nodes, all, edges)
}

/// Loads a node table and one graph per named relation file, in the order given.
pub fn load_dataset(
    node_path: &Path,
    relation_paths: &[(String, PathBuf)],
) -> Result<MultiRelationDataset> {
    let nodes = Arc::new(load_nodes(node_path)?);
    let relations = relation_paths
        .iter()
        .map(|(name, path)| load_relation(name, path, nodes.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRelationDataset { nodes, relations })
}

pub fn write_nodes(path: &Path, table: &NodeTable) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "id,label")?;
    for j in 0..table.feature_dim() {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for (id, row) in table.features().rows().into_iter().enumerate() {
        write!(out, "{id},{}", table.label(id))?;
        for x in row {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Undersamples the majority class so that `pos / neg` lands in
/// `[ratio_low, ratio_high]`. Inputs already in range are returned whole.
pub fn balance_sample(
    labels: &[u8],
    ratio_low: f64,
    ratio_high: f64,
    seed: u64,
) -> Result<BTreeSet<NodeId>> {
    if !(ratio_low > 0.0 && ratio_low <= 1.0 && ratio_high >= 1.0 && ratio_high.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ratio bounds [{ratio_low}, {ratio_high}] must satisfy 0 < low <= 1 <= high"
        )));
    }
    let pos: Vec<NodeId> = (0..labels.len()).filter(|&i| labels[i] == FRAUD).collect();
    let neg: Vec<NodeId> = (0..labels.len()).filter(|&i| labels[i] == LEGIT).collect();
    if pos.is_empty() {
        return Err(Error::EmptyClass(FRAUD));
    }
    if neg.is_empty() {
        return Err(Error::EmptyClass(LEGIT));
    }
    let ratio = pos.len() as f64 / neg.len() as f64;
    let mut rng = seed::rng(seed);
    let mut undersample = |ids: &[NodeId], keep: usize| -> Vec<NodeId> {
        index::sample(&mut rng, ids.len(), keep)
            .into_iter()
            .map(|i| ids[i])
            .collect()
    };
    let (pos, neg) = if ratio < ratio_low {
        let keep = ((pos.len() as f64 / ratio_low).floor() as usize).max(1);
        let neg = undersample(&neg, keep);
        (pos, neg)
    } else if ratio > ratio_high {
        let keep = ((neg.len() as f64 * ratio_high).floor() as usize).max(1);
        (undersample(&pos, keep), neg)
    } else {
        (pos, neg)
    };
    Ok(pos.into_iter().chain(neg).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: BTreeSet<NodeId>,
    pub test: BTreeSet<NodeId>,
    pub seed: u64,
}

/// Per-class shuffle-and-cut; each class contributes `ceil(train_frac * n_c)`
/// nodes to train.
pub fn stratified_split(
    sampled: &BTreeSet<NodeId>,
    labels: &[u8],
    train_frac: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    if sampled.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty node set".into(),
        ));
    }
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_frac}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    for class in [LEGIT, FRAUD] {
        let mut members: Vec<NodeId> = sampled
            .iter()
            .copied()
            .filter(|&i| labels[i] == class)
            .collect();
        members.shuffle(&mut rng);
        let n_train = ((train_frac * members.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let (tr, te) = members.split_at(n_train.min(members.len()));
        train.extend(tr);
        test.extend(te);
    }
    Ok(SplitAssignment { train, test, seed })
}

/// Dense feature matrix with one row per id in `order`, z-scored per column
/// using the statistics of the `train` rows. Constant columns map to zero.
pub fn standardized_features(
    table: &NodeTable,
    order: &[NodeId],
    train: &BTreeSet<NodeId>,
) -> Array2<f64> {
    let f = table.feature_dim();
    let mut x = Array2::zeros((order.len(), f));
    for (r, &id) in order.iter().enumerate() {
        x.row_mut(r).assign(&table.feature(id));
    }
    let stats_rows: Vec<NodeId> = train.iter().copied().collect();
    if stats_rows.is_empty() {
        return x;
    }
    let m = stats_rows.len() as f64;
    for j in 0..f {
        let mean = stats_rows
            .iter()
            .map(|&id| table.features()[[id, j]])
            .sum::<f64>()
            / m;
        let var = stats_rows
            .iter()
            .map(|&id| (table.features()[[id, j]] - mean).powi(2))
            .sum::<f64>()
            / m;
        let sd = var.sqrt();
        for r in 0..order.len() {
            x[[r, j]] = if sd > 1e-12 {
                (x[[r, j]] - mean) / sd
            } else {
                0.0
            };
        }
    }
    x
}
