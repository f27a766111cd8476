//! Experiment configuration.
//!
//! The file format is flat `key = value` lines with dotted section keys.
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file.
//!
//! ```text
//! # either dataset files ...
//! data.nodes = amazon/nodes.csv
//! data.relation.U-P-U = amazon/upu.csv
//! data.relation.U-S-U = amazon/usu.csv
//! # ... or a synthetic dataset
//! synthetic.nodes = 1000
//! synthetic.fraud_fraction = 0.3
//! synthetic.relations = r0, r1, r2
//! synthetic.p_intra = 0.08
//! synthetic.p_inter = 0.0005
//! synthetic.relation.r1.p_intra = 0.08   # per-relation override
//! synthetic.feature_dim = 16
//! synthetic.separation = 0.7
//! synthetic.visibility = 0.3
//! synthetic.seed = 0
//!
//! model.arch = gcn            # gcn | sage
//! model.hidden = 64
//! model.fanout = 5
//! fusion.lambda = 0.5
//! fusion.hops = 1             # 1 | 2 | 3
//! fusion.dp_epsilon = inf     # positive number or inf
//! psi.backend = ddh           # ddh | plain
//! psi.group = safe256         # safe256 | test64
//! federation.rounds = 100
//! federation.local_steps = 1
//! sampling.ratio_low = 0.5
//! sampling.ratio_high = 2.0
//! sampling.train_frac = 0.6
//! experiment.arms = 2sfgl, fedavg_only, local   # local = one arm per relation
//! experiment.seeds = 0, 1, 2, 3, 4
//! experiment.out = out
//! report.window = 60, 100
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fedavg::FederationConfig;
use crate::fusion::FusionConfig;
use crate::gnn::{Arch, HIDDEN_UNITS};
use crate::metrics::{WINDOW_HI, WINDOW_LO};
use crate::psi::{DdhGroup, PsiBackend};
use crate::synthetic::{RelationSpec, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        nodes: PathBuf,
        relations: Vec<(String, PathBuf)>,
    },
    Synthetic {
        spec: SyntheticSpec,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Arm {
    TwoStage,
    FedAvgOnly,
    Local(String),
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::TwoStage => f.write_str("2sfgl"),
            Arm::FedAvgOnly => f.write_str("fedavg_only"),
            Arm::Local(r) => write!(f, "local_{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArmSpec {
    One(Arm),
    /// One local arm per relation.
    AllLocal,
}

impl FromStr for ArmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2sfgl" => Ok(ArmSpec::One(Arm::TwoStage)),
            "fedavg_only" | "fedavg" => Ok(ArmSpec::One(Arm::FedAvgOnly)),
            "local" => Ok(ArmSpec::AllLocal),
            other => match other.strip_prefix("local_") {
                Some(r) if !r.is_empty() => Ok(ArmSpec::One(Arm::Local(r.to_string()))),
                _ => Err(Error::Config(format!("unknown arm {other:?}"))),
            },
        }
    }
}

/// Expands `local` and checks that named relations exist. Duplicates are
/// dropped, keeping first occurrence.
pub fn resolve_arms(specs: &[ArmSpec], relations: &[String]) -> Result<Vec<Arm>> {
    let mut out: Vec<Arm> = Vec::new();
    let mut push = |a: Arm| {
        if !out.contains(&a) {
            out.push(a);
        }
    };
    for s in specs {
        match s {
            ArmSpec::One(Arm::Local(r)) if !relations.contains(r) => {
                return Err(Error::Config(format!(
                    "arm local_{r}: no relation named {r:?}"
                )))
            }
            ArmSpec::One(a) => push(a.clone()),
            ArmSpec::AllLocal => relations.iter().for_each(|r| push(Arm::Local(r.clone()))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub train_frac: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            ratio_low: 0.5,
            ratio_high: 2.0,
            train_frac: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub arch: Arch,
    pub hidden: usize,
    /// `seed` is replaced per experiment seed.
    pub fusion: FusionConfig,
    pub psi: PsiBackend,
    pub federation: FederationConfig,
    pub sampling: SamplingConfig,
    pub arms: Vec<ArmSpec>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub window: (usize, usize),
}

impl ExperimentConfig {
    pub fn with_data(data: DataSource) -> Self {
        Self {
            data,
            arch: Arch::Gcn,
            hidden: HIDDEN_UNITS,
            fusion: FusionConfig::default(),
            psi: PsiBackend::Ddh(DdhGroup::safe256()),
            federation: FederationConfig::default(),
            sampling: SamplingConfig::default(),
            arms: vec![
                ArmSpec::One(Arm::TwoStage),
                ArmSpec::One(Arm::FedAvgOnly),
                ArmSpec::AllLocal,
            ],
            seeds: vec![0],
            out: PathBuf::from("out"),
            window: (WINDOW_LO, WINDOW_HI),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.hidden == 0 || self.federation.fanout == 0 || self.federation.rounds == 0 {
            return Err(Error::Config(
                "model.hidden, model.fanout and federation.rounds must be positive".into(),
            ));
        }
        let (lo, hi) = self.window;
        if lo == 0 || lo > hi || hi > self.federation.rounds {
            return Err(Error::Config(format!(
                "report.window [{lo}, {hi}] must lie within rounds 1..={}",
                self.federation.rounds
            )));
        }
        self.fusion
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        match &self.data {
            DataSource::Files { nodes, relations } => {
                if relations.is_empty() {
                    return Err(Error::Config("no data.relation.* entries".into()));
                }
                for p in std::iter::once(nodes).chain(relations.iter().map(|(_, p)| p)) {
                    if !p.is_file() {
                        return Err(Error::Config(format!(
                            "file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
            DataSource::Synthetic { spec, .. } => {
                spec.validate().map_err(|e| Error::Config(e.to_string()))?
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without checking that files exist.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let data = if let Some(nodes) = kv.take("data.nodes") {
            let relations: Vec<(String, PathBuf)> = kv
                .take_prefixed("data.relation.")
                .into_iter()
                .map(|(name, p)| (name, resolve(&p)))
                .collect();
            DataSource::Files {
                nodes: resolve(&nodes),
                relations,
            }
        } else {
            let mut spec = SyntheticSpec::default();
            if let Some(v) = kv.num("synthetic.nodes")? {
                spec.nodes = v;
            }
            if let Some(v) = kv.num("synthetic.fraud_fraction")? {
                spec.fraud_fraction = v;
            }
            if let Some(v) = kv.num("synthetic.feature_dim")? {
                spec.feature_dim = v;
            }
            if let Some(v) = kv.num("synthetic.separation")? {
                spec.separation = v;
            }
            if let Some(v) = kv.num("synthetic.visibility")? {
                spec.visibility = v;
            }
            let base = SyntheticSpec::default().relations.remove(0);
            let p_intra = kv.num("synthetic.p_intra")?.unwrap_or(base.p_intra);
            let p_inter = kv.num("synthetic.p_inter")?.unwrap_or(base.p_inter);
            let names: Vec<String> = match kv.take("synthetic.relations") {
                Some(list) => split_list(&list),
                None => spec.relations.iter().map(|r| r.name.clone()).collect(),
            };
            spec.relations = names
                .into_iter()
                .map(|name| RelationSpec {
                    name,
                    p_intra,
                    p_inter,
                })
                .collect();
            for r in &mut spec.relations {
                if let Some(v) = kv.num(&format!("synthetic.relation.{}.p_intra", r.name))? {
                    r.p_intra = v;
                }
                if let Some(v) = kv.num(&format!("synthetic.relation.{}.p_inter", r.name))? {
                    r.p_inter = v;
                }
            }
            let seed = kv.num("synthetic.seed")?.unwrap_or(0);
            DataSource::Synthetic { spec, seed }
        };

        let mut cfg = Self::with_data(data);
        if let Some(v) = kv.num::<Arch>("model.arch")? {
            cfg.arch = v;
        }
        if let Some(v) = kv.num("model.hidden")? {
            cfg.hidden = v;
        }
        if let Some(v) = kv.num("model.fanout")? {
            cfg.federation.fanout = v;
        }
        if let Some(v) = kv.num("fusion.lambda")? {
            cfg.fusion.lambda = v;
        }
        if let Some(v) = kv.num("fusion.hops")? {
            cfg.fusion.hops = v;
        }
        if let Some(v) = kv.num("fusion.dp_epsilon")? {
            cfg.fusion.dp_epsilon = v;
        }
        let group = match kv.take("psi.group") {
            Some(name) => DdhGroup::by_name(&name)
                .ok_or_else(|| Error::Config(format!("unknown psi.group {name:?}")))?,
            None => DdhGroup::safe256(),
        };
        cfg.psi = match kv.take("psi.backend").as_deref() {
            None | Some("ddh") => PsiBackend::Ddh(group),
            Some("plain") => PsiBackend::Plain,
            Some(other) => return Err(Error::Config(format!("unknown psi.backend {other:?}"))),
        };
        if let Some(v) = kv.num("federation.rounds")? {
            cfg.federation.rounds = v;
        }
        if let Some(v) = kv.num("federation.local_steps")? {
            cfg.federation.local_steps = v;
        }
        if let Some(v) = kv.num("sampling.ratio_low")? {
            cfg.sampling.ratio_low = v;
        }
        if let Some(v) = kv.num("sampling.ratio_high")? {
            cfg.sampling.ratio_high = v;
        }
        if let Some(v) = kv.num("sampling.train_frac")? {
            cfg.sampling.train_frac = v;
        }
        if let Some(list) = kv.take("experiment.arms") {
            cfg.arms = split_list(&list)
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?;
        }
        if let Some(list) = kv.take("experiment.seeds") {
            cfg.seeds = split_list(&list)
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("bad seed {s:?}")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(p) = kv.take("experiment.out") {
            cfg.out = resolve(&p);
        }
        if let Some(list) = kv.take("report.window") {
            let w: Vec<usize> = split_list(&list)
                .iter()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("bad window bound {s:?}")))
                })
                .collect::<Result<_>>()?;
            match w[..] {
                [lo, hi] => cfg.window = (lo, hi),
                _ => return Err(Error::Config("report.window takes two bounds".into())),
            }
        }
        kv.finish()?;
        Ok(cfg)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

/// Ordered key/value pairs with a record of what was consumed.
struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find(" #") {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries
                .insert(k.clone(), (n + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Removes and returns all `prefix<name>` entries in file order.
    fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let keys: Vec<String> = self
            .entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        let mut found: Vec<(usize, String, String)> = keys
            .into_iter()
            .map(|k| {
                let (line, v) = self.entries.remove(&k).expect("key listed");
                (line, k[prefix.len()..].to_string(), v)
            })
            .collect();
        found.sort();
        found.into_iter().map(|(_, k, v)| (k, v)).collect()
    }

    fn num<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: bad value {v:?} for {key}"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((k, (line, _))) => Err(Error::Config(format!("line {line}: unknown key {k}"))),
            None => Ok(()),
        }
    }
}
