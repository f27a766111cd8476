//! End-to-end experiment execution.
//!
//! For each seed the node set is balanced and split once; every arm then
//! trains from the same initial parameters on the same rows:
//!
//! * `2sfgl`: virtual fusion of all relations, then FedAvg on the fused graphs;
//! * `fedavg_only`: FedAvg on the raw relation graphs;
//! * `local_<r>`: a single client training on relation `r` alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::{resolve_arms, Arm, DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fedavg::{train_federation, ClientState};
use crate::fusion::{self, FusionConfig, FusionRound};
use crate::gnn::{GraphData, ModelParams};
use crate::graph::{self, ClientGraph, MultiRelationDataset, NodeId, SplitAssignment};
use crate::metrics::{self, RoundHistory, SummaryRow};
use crate::seed;
use crate::synthetic;

/// Per-seed view shared by all arms.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    /// Row order: sampled node ids, ascending.
    pub order: Vec<NodeId>,
    pub split: SplitAssignment,
    pub x: Array2<f64>,
    pub labels: Vec<u8>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Relation graphs restricted to the sampled nodes.
    pub clients: Vec<ClientGraph>,
}

pub fn prepare(data: &MultiRelationDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let labels_all = data.nodes.labels();
    let s = &cfg.sampling;
    let sampled = graph::balance_sample(
        labels_all,
        s.ratio_low,
        s.ratio_high,
        seed::derive(seed, "sample"),
    )?;
    let split = graph::stratified_split(
        &sampled,
        labels_all,
        s.train_frac,
        seed::derive(seed, "split"),
    )?;
    let order: Vec<NodeId> = sampled.iter().copied().collect();
    let rows_of = |ids: &BTreeSet<NodeId>| -> Vec<usize> {
        order
            .iter()
            .enumerate()
            .filter(|(_, id)| ids.contains(id))
            .map(|(r, _)| r)
            .collect()
    };
    Ok(Prepared {
        seed,
        x: graph::standardized_features(&data.nodes, &order, &split.train),
        labels: order.iter().map(|&id| labels_all[id]).collect(),
        train_rows: rows_of(&split.train),
        test_rows: rows_of(&split.test),
        clients: data.relations.iter().map(|g| g.induced(&sampled)).collect(),
        order,
        split,
    })
}

pub fn fusion_config(cfg: &ExperimentConfig, seed: u64) -> FusionConfig {
    FusionConfig {
        seed: seed::derive(seed, "fusion"),
        ..cfg.fusion
    }
}

pub fn run_fusion(prep: &Prepared, cfg: &ExperimentConfig) -> Result<FusionRound> {
    fusion::virtual_fusion_round(&prep.clients, &fusion_config(cfg, prep.seed), &cfg.psi)
}

pub fn initial_params(prep: &Prepared, cfg: &ExperimentConfig) -> ModelParams {
    ModelParams::init(
        cfg.arch,
        prep.x.ncols(),
        cfg.hidden,
        seed::derive(prep.seed, "init"),
    )
}

/// Trains a federation whose client `k` holds `graphs[k]` (client ids follow
/// `ids`).
pub fn train_on_graphs(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    graphs: &[(usize, &ClientGraph)],
    arm: &str,
) -> Result<RoundHistory> {
    let init = initial_params(prep, cfg);
    let mut clients = graphs
        .iter()
        .map(|&(id, g)| {
            ClientState::new(
                id,
                GraphData::new(g, &prep.order, prep.x.clone()),
                prep.labels.clone(),
                prep.train_rows.clone(),
                prep.test_rows.clone(),
                &init,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut history = train_federation(
        &mut clients,
        &init,
        &cfg.federation,
        arm,
        seed::derive(prep.seed, "train"),
    )?;
    history.seed = prep.seed;
    Ok(history)
}

pub fn run_arm(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    arm: &Arm,
    fused: Option<&FusionRound>,
) -> Result<RoundHistory> {
    let name = arm.to_string();
    match arm {
        Arm::TwoStage => {
            let owned;
            let round = match fused {
                Some(r) => r,
                None => {
                    owned = run_fusion(prep, cfg)?;
                    &owned
                }
            };
            let graphs: Vec<(usize, &ClientGraph)> =
                round.fused.iter().map(|f| f.graph()).enumerate().collect();
            train_on_graphs(prep, cfg, &graphs, &name)
        }
        Arm::FedAvgOnly => {
            let graphs: Vec<(usize, &ClientGraph)> = prep.clients.iter().enumerate().collect();
            train_on_graphs(prep, cfg, &graphs, &name)
        }
        Arm::Local(rel) => {
            let (id, g) = prep
                .clients
                .iter()
                .enumerate()
                .find(|(_, g)| g.relation() == rel)
                .ok_or_else(|| Error::Config(format!("no relation named {rel:?}")))?;
            train_on_graphs(prep, cfg, &[(id, g)], &name)
        }
    }
}

/// Loads the configured dataset. Synthetic data is first written to
/// `<out>/data/` and then read back through the CSV loader.
pub fn load_data(cfg: &ExperimentConfig) -> Result<MultiRelationDataset> {
    match &cfg.data {
        DataSource::Files { nodes, relations } => graph::load_dataset(nodes, relations),
        DataSource::Synthetic { spec, seed } => {
            let files = synthetic::generate_synthetic(spec, *seed, &cfg.out.join("data"))?;
            graph::load_dataset(&files.nodes, &files.relations)
        }
    }
}

pub fn history_path(out: &Path, arm: &str, seed: u64) -> PathBuf {
    out.join(format!("history_{arm}_{seed}.csv"))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub histories: Vec<RoundHistory>,
    pub summary: Vec<SummaryRow>,
}

fn stage_err(seed: u64, arm: &str, stage: &'static str) -> impl FnOnce(Error) -> Error {
    let arm = arm.to_string();
    move |e| Error::Experiment {
        seed,
        arm,
        stage,
        source: Box::new(e),
    }
}

/// Runs every (seed, arm) job and writes `history_<arm>_<seed>.csv`,
/// `summary.csv` and `table.txt` under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let data = load_data(cfg).map_err(stage_err(0, "-", "load"))?;
    let names: Vec<String> = data
        .relations
        .iter()
        .map(|g| g.relation().to_string())
        .collect();
    let arms = resolve_arms(&cfg.arms, &names)?;

    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RoundHistory>> {
            let prep = prepare(&data, cfg, seed).map_err(stage_err(seed, "-", "sample"))?;
            let fused = if arms.contains(&Arm::TwoStage) {
                Some(run_fusion(&prep, cfg).map_err(stage_err(seed, "2sfgl", "fusion"))?)
            } else {
                None
            };
            arms.par_iter()
                .map(|arm| {
                    let name = arm.to_string();
                    let h = run_arm(&prep, cfg, arm, fused.as_ref())
                        .map_err(stage_err(seed, &name, "train"))?;
                    h.write_csv(&history_path(&cfg.out, &name, seed))
                        .map_err(stage_err(seed, &name, "write"))?;
                    Ok(h)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let histories: Vec<RoundHistory> = per_seed.into_iter().flatten().collect();
    let (lo, hi) = cfg.window;
    let mut summary = metrics::summarize(&histories, lo, hi)?;
    sort_summary(&mut summary);
    metrics::write_report(&cfg.out, &cfg.arch.to_string().to_uppercase(), &summary)?;
    Ok(ExperimentOutput { histories, summary })
}

/// Reads every `history_<arm>_<seed>.csv` in `dir`, sorted by file name.
pub fn read_histories(dir: &Path) -> Result<Vec<RoundHistory>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("history_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let seed = stem
                .rsplit('_')
                .next()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            RoundHistory::from_csv(&std::fs::read_to_string(p)?, seed)
        })
        .collect()
}

/// Arms in canonical report order: 2sfgl, fedavg_only, then locals by name.
pub fn sort_summary(rows: &mut [SummaryRow]) {
    let rank = |arm: &str| match arm {
        "2sfgl" => 0,
        "fedavg_only" => 1,
        _ => 2,
    };
    rows.sort_by(|a, b| {
        rank(&a.arm)
            .cmp(&rank(&b.arm))
            .then_with(|| a.arm.cmp(&b.arm))
    });
}
