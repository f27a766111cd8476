//! Two-stage federated graph learning.
//!
//! Stage one fuses several parties' graphs without sharing raw edges:
//! parties find common vertices with private set intersection, exchange
//! normalized and noised edge shares, and each materializes a virtual
//! fused graph. Stage two trains GCN or GraphSAGE node classifiers on the
//! fused graphs with federated averaging.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fedavg;
pub mod fusion;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod psi;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
