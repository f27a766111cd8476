//! Synchronous federated averaging.
//!
//! Each round the server broadcasts the global parameters, every client
//! takes its local full-batch Adam step(s) on its own graph and training
//! rows, and the server replaces the global parameters with the
//! sample-count-weighted mean of the client results. Adam moments never
//! leave the client.

use ndarray::Zip;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::ClientId;
use crate::gnn::{self, AdamState, GraphData, ModelParams, DEFAULT_FANOUT};
use crate::metrics::{EvalResult, Metrics, RoundHistory};
use crate::seed;

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: ClientId,
    pub data: GraphData,
    /// Label per row of `data`.
    pub labels: Vec<u8>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub params: ModelParams,
    pub adam: AdamState,
}

impl ClientState {
    pub fn new(
        id: ClientId,
        data: GraphData,
        labels: Vec<u8>,
        train_rows: Vec<usize>,
        test_rows: Vec<usize>,
        init: &ModelParams,
    ) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "client {id}: {} labels for {} rows",
                labels.len(),
                data.len()
            )));
        }
        if train_rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&r) = train_rows
            .iter()
            .chain(&test_rows)
            .find(|&&r| r >= data.len())
        {
            return Err(Error::InvalidArgument(format!(
                "client {id}: row {r} out of range"
            )));
        }
        Ok(Self {
            id,
            data,
            labels,
            train_rows,
            test_rows,
            params: init.clone(),
            adam: AdamState::new(init),
        })
    }

    pub fn sample_count(&self) -> usize {
        self.train_rows.len()
    }

    /// Runs `steps` full-batch Adam steps starting from `start`; returns the
    /// loss of the last step (NaN when `steps` is 0).
    pub fn local_train(
        &mut self,
        start: &ModelParams,
        steps: usize,
        fanout: usize,
        seed: u64,
    ) -> Result<f64> {
        start.check_shape(&self.params)?;
        self.params = start.clone();
        let mut loss = f64::NAN;
        for step in 0..steps {
            let step_seed = seed::derive_indexed(seed, "step", step as u64);
            let (logits, cache) = gnn::forward(&self.params, &self.data, fanout, step_seed)?;
            let (l, grads) = gnn::loss_and_grads(
                &self.params,
                &self.data,
                &logits,
                &cache,
                &self.labels,
                &self.train_rows,
            )?;
            gnn::adam_step(&mut self.params, &grads, &mut self.adam)?;
            loss = l;
        }
        Ok(loss)
    }

    /// Metrics of `params` on this client's test rows.
    pub fn evaluate(&self, params: &ModelParams, fanout: usize, seed: u64) -> Result<Metrics> {
        let (logits, _) = gnn::forward(params, &self.data, fanout, seed)?;
        let scores = gnn::fraud_scores(&logits);
        let result = EvalResult::new(
            self.test_rows.iter().map(|&r| scores[r]).collect(),
            self.test_rows.iter().map(|&r| self.labels[r]).collect(),
        )?;
        Metrics::evaluate(&result)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_steps: usize,
    pub fanout: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            local_steps: 1,
            fanout: DEFAULT_FANOUT,
        }
    }
}

/// Sample-count-weighted mean of client parameters.
///
/// Computed as a running weighted mean, so identical inputs reproduce their
/// value bit for bit, and clamped entry-wise to the client range.
pub fn aggregate(updates: &[(&ModelParams, usize)]) -> Result<ModelParams> {
    let (first, first_count) = *updates
        .first()
        .ok_or_else(|| Error::InvalidArgument("aggregate needs at least one update".into()))?;
    for (p, s) in updates {
        first.check_shape(p)?;
        if *s == 0 {
            return Err(Error::InvalidArgument("client with zero samples".into()));
        }
    }
    let mut out = first.clone();
    let mut lo = first.clone();
    let mut hi = first.clone();
    let mut seen = first_count as f64;
    for &(p, s) in &updates[1..] {
        seen += s as f64;
        let t = s as f64 / seen;
        for (((acc, x), l), h) in out
            .tensors_mut()
            .into_iter()
            .zip(p.tensors())
            .zip(lo.tensors_mut())
            .zip(hi.tensors_mut())
        {
            Zip::from(acc).and(x).and(l).and(h).for_each(|a, &x, l, h| {
                *a += t * (x - *a);
                *l = l.min(x);
                *h = h.max(x);
            });
        }
    }
    for ((acc, l), h) in out
        .tensors_mut()
        .into_iter()
        .zip(lo.tensors())
        .zip(hi.tensors())
    {
        Zip::from(acc)
            .and(l)
            .and(h)
            .for_each(|a, &l, &h| *a = a.clamp(l, h));
    }
    Ok(out)
}

/// Broadcast, local training, aggregation. Returns the new global
/// parameters and each client's last local training loss.
pub fn federated_round(
    clients: &mut [ClientState],
    global: &ModelParams,
    cfg: &FederationConfig,
    round_seed: u64,
) -> Result<(ModelParams, Vec<f64>)> {
    if clients.is_empty() {
        return Err(Error::InvalidArgument("federation has no clients".into()));
    }
    let losses = clients
        .par_iter_mut()
        .map(|c| {
            let client_seed = seed::derive_indexed(round_seed, "client", c.id as u64);
            c.local_train(global, cfg.local_steps, cfg.fanout, client_seed)
                .map_err(|e| Error::Client {
                    client: c.id,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    let updates: Vec<(&ModelParams, usize)> = clients
        .iter()
        .map(|c| (&c.params, c.sample_count()))
        .collect();
    Ok((aggregate(&updates)?, losses))
}

/// Mean over clients of the global model's test metrics.
pub fn evaluate_federation(
    clients: &[ClientState],
    params: &ModelParams,
    fanout: usize,
    seed: u64,
) -> Result<Metrics> {
    let per_client = clients
        .par_iter()
        .map(|c| {
            c.evaluate(
                params,
                fanout,
                seed::derive_indexed(seed, "client", c.id as u64),
            )
            .map_err(|e| Error::Client {
                client: c.id,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::mean(&per_client))
}

/// Trains from `init` for `cfg.rounds` rounds and records the global
/// model's averaged test metrics after every round (rounds numbered from 1).
pub fn train_federation(
    clients: &mut [ClientState],
    init: &ModelParams,
    cfg: &FederationConfig,
    arm: &str,
    seed: u64,
) -> Result<RoundHistory> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let mut history = RoundHistory::new(arm, seed);
    let mut global = init.clone();
    for round in 1..=cfg.rounds {
        let (next, _) = federated_round(
            clients,
            &global,
            cfg,
            seed::derive_indexed(seed, "round", round as u64),
        )?;
        global = next;
        let m = evaluate_federation(
            clients,
            &global,
            cfg.fanout,
            seed::derive_indexed(seed, "eval", round as u64),
        )?;
        history.rounds.push((round, m));
    }
    Ok(history)
}
