use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fgl_core::config::{DataSource, ExperimentConfig};
use fgl_core::experiment::{self, history_path};
use fgl_core::gnn::Arch;
use fgl_core::metrics;
use fgl_core::psi::PsiBackend;
use fgl_core::{fusion, synthetic};

#[derive(Parser)]
#[command(
    name = "fgl",
    version,
    about = "Two-stage federated graph learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-relation dataset as CSV files.
    Gen(Common),
    /// Stage 1 only: PSI, share exchange and fusion; dumps fused graphs and shares.
    Fuse(Common),
    /// Stage 2 only: FedAvg over the configured relation graphs as given.
    Train {
        #[command(flatten)]
        common: Common,
        /// Arm name used in the history file.
        #[arg(long, default_value = "fedavg_only")]
        name: String,
    },
    /// Full experiment: every configured arm for every seed, plus the report.
    Run(Common),
    /// Window averages from the history files in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat `key = value`). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["gcn", "sage"])]
    arch: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::parse(&text, p.parent().unwrap_or(Path::new(".")))?
            }
            None => ExperimentConfig::parse("", Path::new("."))?,
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(a) = &self.arch {
            cfg.arch = a.parse::<Arch>()?;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(c) => gen(&c),
        Command::Fuse(c) => fuse(&c),
        Command::Train { common, name } => train(&common, &name),
        Command::Run(c) => run(&c),
        Command::Report(c) => report(&c),
    }
}

fn gen(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let DataSource::Synthetic { spec, seed } = &cfg.data else {
        bail!("gen needs a synthetic dataset config, not data.* files");
    };
    let seed = c.seed.unwrap_or(*seed);
    let files = synthetic::generate_synthetic(spec, seed, &cfg.out)?;
    println!("nodes: {}", files.nodes.display());
    for (name, p) in &files.relations {
        println!("{name}: {}", p.display());
    }
    Ok(())
}

fn fuse(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let data = experiment::load_data(&cfg)?;
    let seed = cfg.seeds[0];
    let prep = experiment::prepare(&data, &cfg, seed)?;
    let round =
        experiment::run_fusion(&prep, &cfg).with_context(|| format!("seed {seed}: fusion"))?;
    let name = |k: usize| prep.clients[k].relation().to_string();
    for (k, f) in round.fused.iter().enumerate() {
        let [local, fused, both] = f.provenance_counts();
        let path = cfg.out.join(format!("fused_{}.csv", name(k)));
        f.write_csv(&path)?;
        println!(
            "{}: local={local} fused={fused} both={both} -> {}",
            name(k),
            path.display()
        );
    }
    for x in &round.exchanges {
        let pair = format!("{}-{}", name(x.sender), name(x.receiver));
        fusion::write_shares_csv(&cfg.out.join(format!("shares_{pair}.csv")), &x.shares)?;
        if matches!(cfg.psi, PsiBackend::Ddh(_)) && x.sender < x.receiver {
            std::fs::write(
                cfg.out.join(format!("psi_{pair}.hex")),
                x.transcript.to_hex_lines(),
            )?;
        }
    }
    Ok(())
}

fn train(c: &Common, name: &str) -> Result<()> {
    let cfg = c.load()?;
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let data = experiment::load_data(&cfg)?;
    let mut histories = Vec::new();
    for &seed in &cfg.seeds {
        let prep = experiment::prepare(&data, &cfg, seed)?;
        let graphs: Vec<_> = prep.clients.iter().enumerate().collect();
        let h = experiment::train_on_graphs(&prep, &cfg, &graphs, name)
            .with_context(|| format!("seed {seed}, arm {name}: train"))?;
        h.write_csv(&history_path(&cfg.out, name, seed))?;
        histories.push(h);
    }
    write_summary(&cfg, histories)
}

fn run(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let out = experiment::run_experiment(&cfg)?;
    print!(
        "{}",
        metrics::summary_table(&cfg.arch.to_string().to_uppercase(), &out.summary)
    );
    Ok(())
}

fn report(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let histories = experiment::read_histories(&cfg.out)?;
    if histories.is_empty() {
        bail!("no history_*.csv files in {}", cfg.out.display());
    }
    write_summary(&cfg, histories)
}

fn write_summary(cfg: &ExperimentConfig, histories: Vec<metrics::RoundHistory>) -> Result<()> {
    let (lo, hi) = cfg.window;
    let mut rows = metrics::summarize(&histories, lo, hi)?;
    experiment::sort_summary(&mut rows);
    let model = cfg.arch.to_string().to_uppercase();
    metrics::write_report(&cfg.out, &model, &rows)?;
    print!("{}", metrics::summary_table(&model, &rows));
    Ok(())
}
