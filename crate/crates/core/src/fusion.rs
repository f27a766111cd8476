//! Virtual graph fusion.
//!
//! For every pair of parties the common vertices are found with PSI. The
//! sender then normalizes each common-to-common edge by the source vertex's
//! incident weight, optionally adds implied multi-hop shares, perturbs the
//! values with Laplace noise, and ships `(src, dst, value, hops)` records. The
//! receiver turns each record back into an edge weight scaled by its own
//! incident sum at `src`, capped by the threshold `lambda`:
//!
//! ```text
//! candidate = N / (1 - N) * sum        if N <  lambda
//!           = lambda / (1 - lambda) * sum  if N >= lambda
//! ```
//!
//! and keeps `max(local weight, candidates)` for the pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{ClientGraph, NodeId};
use crate::psi::{self, PsiBackend, PsiTranscript};
use crate::seed;

pub type ClientId = usize;

/// Upper clamp margin: normalized values never exceed `1 - CLAMP_DELTA`.
pub const CLAMP_DELTA: f64 = 1e-6;

/// Base used in place of a zero incident sum on the receiving side.
pub const ISOLATED_BASE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedShare {
    pub src: NodeId,
    pub dst: NodeId,
    pub value: f64,
    pub hops: u8,
    pub sender: ClientId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub lambda: f64,
    pub hops: u8,
    /// `f64::INFINITY` disables noise.
    pub dp_epsilon: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            hops: 1,
            dp_epsilon: f64::INFINITY,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must lie in (0, 1)",
                self.lambda
            )));
        }
        if !(1..=3).contains(&self.hops) {
            return Err(Error::InvalidArgument(format!(
                "hops {} must be 1, 2 or 3",
                self.hops
            )));
        }
        if self.dp_epsilon.is_nan() || self.dp_epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dp epsilon {} must be positive",
                self.dp_epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Local,
    Fused,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualFusedGraph {
    graph: ClientGraph,
    provenance: BTreeMap<(NodeId, NodeId), Provenance>,
}

impl VirtualFusedGraph {
    /// Wraps a graph with every edge tagged local.
    pub fn from_local(graph: ClientGraph) -> Self {
        let provenance = graph
            .edges()
            .map(|(u, v, _)| ((u, v), Provenance::Local))
            .collect();
        Self { graph, provenance }
    }

    pub fn graph(&self) -> &ClientGraph {
        &self.graph
    }

    pub fn into_graph(self) -> ClientGraph {
        self.graph
    }

    pub fn provenance(&self, u: NodeId, v: NodeId) -> Option<Provenance> {
        self.provenance.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn provenance_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for p in self.provenance.values() {
            c[*p as usize] += 1;
        }
        c
    }

    /// Edge list CSV readable by the relation loader, with a provenance
    /// summary in a leading comment.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let [local, fused, both] = self.provenance_counts();
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# provenance: local={local} fused={fused} both={both}")?;
        writeln!(out, "src,dst,weight")?;
        for (u, v, w) in self.graph.edges() {
            writeln!(out, "{u},{v},{w}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn clamp_share(x: f64) -> f64 {
    x.clamp(0.0, 1.0 - CLAMP_DELTA)
}

fn check_common(graph: &ClientGraph, common: &BTreeSet<NodeId>) -> Result<()> {
    match common.iter().find(|&&v| !graph.contains(v)) {
        Some(&v) => Err(Error::UnknownVertex(v)),
        None => Ok(()),
    }
}

/// Unclamped `E_ij / incident_sum(i)` for ordered common pairs with `E_ij > 0`.
pub fn normalized_weights(
    graph: &ClientGraph,
    common: &BTreeSet<NodeId>,
) -> Result<Vec<(NodeId, NodeId, f64)>> {
    check_common(graph, common)?;
    let mut out = Vec::new();
    for &i in common {
        let total = graph.incident_sum(i)?;
        for &(j, w) in graph.neighbors(i) {
            if w > 0.0 && common.contains(&j) {
                out.push((i, j, w / total));
            }
        }
    }
    Ok(out)
}

/// One-hop shares over the common vertices, clamped to `[0, 1 - δ]`.
pub fn normalize_edges(
    graph: &ClientGraph,
    common: &BTreeSet<NodeId>,
    sender: ClientId,
) -> Result<Vec<NormalizedShare>> {
    Ok(normalized_weights(graph, common)?
        .into_iter()
        .map(|(src, dst, n)| NormalizedShare {
            src,
            dst,
            value: clamp_share(n),
            hops: 1,
            sender,
        })
        .collect())
}

fn hop_normal(totals: &BTreeMap<NodeId, f64>, from: NodeId, w: f64) -> f64 {
    if w > 0.0 {
        w / totals[&from]
    } else {
        0.0
    }
}

/// Implied shares between common vertices that are not directly connected
/// but joined by a simple path of 2 (or, for `k = 3`, 3) edges. The value
/// is the best product of per-hop normalized weights over the shortest
/// such path length; `hops` records that length.
pub fn khop_shares(
    graph: &ClientGraph,
    common: &BTreeSet<NodeId>,
    k: u8,
    sender: ClientId,
) -> Result<Vec<NormalizedShare>> {
    if !(2..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "k-hop shares need k in {{2, 3}}, got {k}"
        )));
    }
    check_common(graph, common)?;
    let totals: BTreeMap<NodeId, f64> = graph
        .vertices()
        .iter()
        .map(|&v| (v, graph.neighbors(v).iter().map(|&(_, w)| w).sum()))
        .collect();
    let mut out = Vec::new();
    for &i in common {
        let mut best2: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut best3: BTreeMap<NodeId, f64> = BTreeMap::new();
        for &(m, w_im) in graph.neighbors(i) {
            let n_im = hop_normal(&totals, i, w_im);
            for &(a, w_ma) in graph.neighbors(m) {
                if a == i {
                    continue;
                }
                let p2 = n_im * hop_normal(&totals, m, w_ma);
                let e = best2.entry(a).or_insert(0.0);
                *e = e.max(p2);
                if k == 3 {
                    for &(j, w_aj) in graph.neighbors(a) {
                        if j == i || j == m {
                            continue;
                        }
                        let p3 = p2 * hop_normal(&totals, a, w_aj);
                        let e = best3.entry(j).or_insert(0.0);
                        *e = e.max(p3);
                    }
                }
            }
        }
        for &j in common {
            if j == i || graph.weight(i, j).is_some_and(|w| w > 0.0) {
                continue;
            }
            let found = match best2.get(&j) {
                Some(&v) => Some((2, v)),
                None => best3.get(&j).map(|&v| (3, v)),
            };
            if let Some((hops, v)) = found.filter(|&(_, v)| v > 0.0) {
                out.push(NormalizedShare {
                    src: i,
                    dst: j,
                    value: clamp_share(v),
                    hops,
                    sender,
                });
            }
        }
    }
    Ok(out)
}

/// Draws from Laplace(0, scale) by inverting the CDF.
pub fn laplace_noise<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u in (-0.5, 0.5); the open end keeps ln() finite.
    let u: f64 = loop {
        let u = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            break u;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds Laplace noise of scale `1 / epsilon` (sensitivity 1, since values
/// lie in [0, 1]) and re-clamps. Infinite epsilon is the identity.
pub fn apply_dp(
    shares: &[NormalizedShare],
    epsilon: f64,
    seed: u64,
) -> Result<Vec<NormalizedShare>> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "dp epsilon {epsilon} must be positive"
        )));
    }
    if epsilon.is_infinite() {
        return Ok(shares.to_vec());
    }
    let scale = 1.0 / epsilon;
    let mut rng = seed::rng(seed);
    Ok(shares
        .iter()
        .map(|s| NormalizedShare {
            value: clamp_share(s.value + laplace_noise(&mut rng, scale)),
            ..*s
        })
        .collect())
}

/// Turns a received normalized value into an edge weight on the receiver's
/// scale. A zero incident sum is replaced by [`ISOLATED_BASE`].
pub fn update_edge(n: f64, local_incident_sum: f64, lambda: f64) -> f64 {
    let base = if local_incident_sum == 0.0 {
        ISOLATED_BASE
    } else {
        local_incident_sum
    };
    if n < lambda {
        n / (1.0 - n) * base
    } else {
        lambda / (1.0 - lambda) * base
    }
}

/// Fuses incoming shares into a receiver's local graph.
pub fn fuse(
    local: &ClientGraph,
    incoming: &[NormalizedShare],
    cfg: &FusionConfig,
) -> Result<VirtualFusedGraph> {
    cfg.validate()?;
    let mut by_orientation: BTreeMap<(NodeId, NodeId), (f64, usize)> = BTreeMap::new();
    for s in incoming {
        for v in [s.src, s.dst] {
            if !local.contains(v) {
                return Err(Error::UnknownVertex(v));
            }
        }
        if s.src == s.dst {
            return Err(Error::InvalidArgument(format!(
                "share loops on vertex {}",
                s.src
            )));
        }
        if !s.value.is_finite() || !(0.0..=1.0 - CLAMP_DELTA).contains(&s.value) {
            return Err(Error::InvalidArgument(format!(
                "share ({}, {}) has out-of-range value {}",
                s.src, s.dst, s.value
            )));
        }
        let e = by_orientation.entry((s.src, s.dst)).or_insert((0.0, 0));
        e.0 += s.value;
        e.1 += 1;
    }

    let mut candidates: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for (&(src, dst), &(sum, count)) in &by_orientation {
        let n = sum / count as f64;
        let c = update_edge(n, local.incident_sum(src)?, cfg.lambda);
        let e = candidates
            .entry((src.min(dst), src.max(dst)))
            .or_insert(0.0);
        *e = e.max(c);
    }

    let mut provenance: BTreeMap<(NodeId, NodeId), Provenance> = local
        .edges()
        .map(|(u, v, _)| ((u, v), Provenance::Local))
        .collect();
    let mut weights: BTreeMap<(NodeId, NodeId), f64> =
        local.edges().map(|(u, v, w)| ((u, v), w)).collect();
    for (pair, c) in candidates {
        match weights.get_mut(&pair) {
            Some(w) => {
                *w = w.max(c);
                provenance.insert(pair, Provenance::Both);
            }
            // A zero candidate carries no structure; it is not materialized.
            None if c > 0.0 => {
                weights.insert(pair, c);
                provenance.insert(pair, Provenance::Fused);
            }
            None => {}
        }
    }
    let graph = ClientGraph::new(
        local.relation(),
        local.nodes().clone(),
        local.vertices().iter().copied(),
        weights.into_iter().map(|((u, v), w)| (u, v, w)),
    )?;
    Ok(VirtualFusedGraph { graph, provenance })
}

/// Everything one sender transmitted to one receiver in a round.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub sender: ClientId,
    pub receiver: ClientId,
    pub common: BTreeSet<NodeId>,
    pub shares: Vec<NormalizedShare>,
    pub transcript: PsiTranscript,
}

#[derive(Debug, Clone)]
pub struct FusionRound {
    pub fused: Vec<VirtualFusedGraph>,
    pub exchanges: Vec<Exchange>,
}

fn sender_shares(
    graph: &ClientGraph,
    common: &BTreeSet<NodeId>,
    sender: ClientId,
    receiver: ClientId,
    cfg: &FusionConfig,
) -> Result<Vec<NormalizedShare>> {
    let mut shares = normalize_edges(graph, common, sender)?;
    if cfg.hops >= 2 {
        shares.extend(khop_shares(graph, common, cfg.hops, sender)?);
    }
    let dp_seed = seed::derive(cfg.seed, &format!("dp/{sender}/{receiver}"));
    apply_dp(&shares, cfg.dp_epsilon, dp_seed)
}

/// One full stage-1 round: pairwise PSI, share emission, and per-receiver
/// fusion. Output graphs are in input order.
pub fn virtual_fusion_round(
    clients: &[ClientGraph],
    cfg: &FusionConfig,
    backend: &PsiBackend,
) -> Result<FusionRound> {
    if clients.len() < 2 {
        return Err(Error::InvalidArgument(
            "fusion needs at least two clients".into(),
        ));
    }
    cfg.validate()?;
    let k = clients.len();
    let pairs: Vec<(ClientId, ClientId)> = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .collect();

    let intersections = pairs
        .par_iter()
        .map(|&(a, b)| {
            let session = seed::derive(cfg.seed, &format!("psi/{a}/{b}"));
            psi::intersect(
                backend,
                clients[a].vertices(),
                clients[b].vertices(),
                session,
            )
            .map_err(|e| Error::Pair {
                sender: a,
                receiver: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let common_of: BTreeMap<(ClientId, ClientId), &(BTreeSet<NodeId>, PsiTranscript)> =
        pairs.iter().copied().zip(&intersections).collect();

    let ordered: Vec<(ClientId, ClientId)> = (0..k)
        .flat_map(|s| (0..k).filter(move |&r| r != s).map(move |r| (s, r)))
        .collect();
    let exchanges = ordered
        .par_iter()
        .map(|&(s, r)| {
            let (common, transcript) = common_of[&(s.min(r), s.max(r))];
            let shares =
                sender_shares(&clients[s], common, s, r, cfg).map_err(|e| Error::Pair {
                    sender: s,
                    receiver: r,
                    source: Box::new(e),
                })?;
            Ok(Exchange {
                sender: s,
                receiver: r,
                common: common.clone(),
                shares,
                transcript: transcript.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fused = (0..k)
        .into_par_iter()
        .map(|r| {
            let incoming: Vec<NormalizedShare> = exchanges
                .iter()
                .filter(|x| x.receiver == r)
                .flat_map(|x| x.shares.iter().copied())
                .collect();
            fuse(&clients[r], &incoming, cfg).map_err(|e| Error::Client {
                client: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FusionRound { fused, exchanges })
}

/// `sender,src,dst,hops,value` rows.
pub fn write_shares_csv(path: &Path, shares: &[NormalizedShare]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "sender,src,dst,hops,value")?;
    for s in shares {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.sender, s.src, s.dst, s.hops, s.value
        )?;
    }
    out.flush()?;
    Ok(())
}
