//! Planted-partition multi-relation datasets.
//!
//! Each class forms a dense community, but each relation only "sees" a
//! random subset of the nodes: a same-label pair of nodes that are both
//! visible in a relation connects with the intra probability, every other
//! pair with the inter probability. Relations therefore hold different
//! slices of the class structure and their union reveals more than any one
//! of them.
//! Features are standard normal with the fraud class mean shifted by
//! `separation` (Euclidean distance between class means).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{self, ClientGraph, MultiRelationDataset, NodeId, NodeTable, FRAUD, LEGIT};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSpec {
    pub name: String,
    pub p_intra: f64,
    pub p_inter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub fraud_fraction: f64,
    pub relations: Vec<RelationSpec>,
    pub feature_dim: usize,
    pub separation: f64,
    /// Probability that a node takes part in its class community in a relation.
    pub visibility: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 1000,
            fraud_fraction: 0.3,
            relations: (0..3)
                .map(|i| RelationSpec {
                    name: format!("r{i}"),
                    p_intra: 0.08,
                    p_inter: 0.0005,
                })
                .collect(),
            feature_dim: 16,
            separation: 0.7,
            visibility: 0.3,
        }
    }
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} = {p} is not a probability"
        )))
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 10 {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 nodes, got {}",
                self.nodes
            )));
        }
        if self.relations.is_empty() {
            return Err(Error::InvalidArgument("need at least one relation".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be positive".into(),
            ));
        }
        if !self.separation.is_finite() {
            return Err(Error::InvalidArgument("separation must be finite".into()));
        }
        check_prob("fraud fraction", self.fraud_fraction)?;
        check_prob("visibility", self.visibility)?;
        let mut names = BTreeSet::new();
        for r in &self.relations {
            check_prob(&format!("{} intra probability", r.name), r.p_intra)?;
            check_prob(&format!("{} inter probability", r.name), r.p_inter)?;
            if r.name.is_empty() || r.name.contains(['/', '\\', ',']) || !names.insert(&r.name) {
                return Err(Error::InvalidArgument(format!(
                    "bad or duplicate relation name {:?}",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

/// Builds the dataset in memory.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<MultiRelationDataset> {
    spec.validate()?;
    let n = spec.nodes;
    let mut rng = seed::rng(seed::derive(seed, "synthetic/nodes"));
    let n_fraud = (spec.fraud_fraction * n as f64).round() as usize;
    let fraud: BTreeSet<NodeId> = index::sample(&mut rng, n, n_fraud).into_iter().collect();
    let labels: Vec<u8> = (0..n)
        .map(|i| if fraud.contains(&i) { FRAUD } else { LEGIT })
        .collect();

    let shift = spec.separation / (spec.feature_dim as f64).sqrt();
    let mut features = Array2::zeros((n, spec.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z + if labels[i] == FRAUD { shift } else { 0.0 };
        }
    }
    let nodes = Arc::new(NodeTable::new(features, labels.clone())?);

    let mut relations = Vec::with_capacity(spec.relations.len());
    for (k, rel) in spec.relations.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(seed, &format!("synthetic/relation/{k}")));
        let visible: Vec<bool> = labels
            .iter()
            .map(|_| rng.random::<f64>() < spec.visibility)
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if visible[u] && visible[v] && labels[u] == labels[v] {
                    rel.p_intra
                } else {
                    rel.p_inter
                };
                if rng.random::<f64>() < p {
                    edges.push((u, v, 1.0));
                }
            }
        }
        relations.push(ClientGraph::new(
            rel.name.clone(),
            nodes.clone(),
            0..n,
            edges,
        )?);
    }
    Ok(MultiRelationDataset { nodes, relations })
}

/// Paths written by [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub nodes: PathBuf,
    pub relations: Vec<(String, PathBuf)>,
}

/// Generates a dataset and writes it in the loader's CSV format:
/// `nodes.csv` plus one `<relation>.csv` per relation.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64, dir: &Path) -> Result<DatasetFiles> {
    let data = generate(spec, seed)?;
    std::fs::create_dir_all(dir)?;
    let nodes = dir.join("nodes.csv");
    graph::write_nodes(&nodes, &data.nodes)?;
    let mut relations = Vec::new();
    for g in &data.relations {
        let p = dir.join(format!("{}.csv", g.relation()));
        g.write_csv(&p)?;
        relations.push((g.relation().to_string(), p));
    }
    Ok(DatasetFiles { nodes, relations })
}

/// Newman's categorical assortativity of the labels across `graph`'s edges.
/// Positive when edges join same-label endpoints more often than chance.
pub fn label_assortativity(graph: &ClientGraph) -> f64 {
    let labels = graph.nodes().labels();
    let mut e = [[0.0f64; 2]; 2];
    let mut total = 0.0;
    for (u, v, _) in graph.edges() {
        let (a, b) = (labels[u] as usize, labels[v] as usize);
        e[a][b] += 1.0;
        e[b][a] += 1.0;
        total += 2.0;
    }
    if total == 0.0 {
        return 0.0;
    }
    let trace = (e[0][0] + e[1][1]) / total;
    let a0 = (e[0][0] + e[0][1]) / total;
    let a1 = (e[1][0] + e[1][1]) / total;
    let sq = a0 * a0 + a1 * a1;
    if (1.0 - sq).abs() < f64::EPSILON {
        0.0
    } else {
        (trace - sq) / (1.0 - sq)
    }
}
