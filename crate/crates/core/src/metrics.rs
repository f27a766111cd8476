//! Binary classification metrics, per-round histories, and window summaries.
//!
//! Class 1 (fraud) is the positive class. Hard predictions threshold the
//! class-1 probability at 0.5.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const THRESHOLD: f64 = 0.5;

/// Scores and labels of the evaluated (masked) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl EvalResult {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self { scores, labels })
    }

    pub fn preds(&self) -> impl Iterator<Item = u8> + '_ {
        self.scores.iter().map(|&s| u8::from(s >= THRESHOLD))
    }

    fn confusion(&self) -> Confusion {
        let mut c = Confusion::default();
        for (p, &y) in self.preds().zip(&self.labels) {
            match (y, p) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fn_ += 1,
                (_, 1) => c.fp += 1,
                _ => c.tn += 1,
            }
        }
        c
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Confusion {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(r: &EvalResult) -> f64 {
    let c = r.confusion();
    ratio(c.tp + c.tn, r.labels.len())
}

/// Mean of per-class F1; a class with no true or predicted members scores 0.
pub fn macro_f1(r: &EvalResult) -> f64 {
    let c = r.confusion();
    let f1_pos = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let f1_neg = ratio(2 * c.tn, 2 * c.tn + c.fn_ + c.fp);
    (f1_pos + f1_neg) / 2.0
}

/// `sqrt(TPR * TNR)`; a recall over an empty class counts as 0.
pub fn gmean(r: &EvalResult) -> f64 {
    let c = r.confusion();
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let tnr = ratio(c.tn, c.tn + c.fp);
    (tpr * tnr).sqrt()
}

/// Mann-Whitney AUC with mid-ranks for ties. Ranks are kept doubled so the
/// statistic is an exact integer ratio.
pub fn auc(r: &EvalResult) -> Result<f64> {
    let n_pos = r.labels.iter().filter(|&&y| y == 1).count() as u128;
    let n_neg = r.labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..r.scores.len()).collect();
    order.sort_by(|&a, &b| r.scores[a].total_cmp(&r.scores[b]));
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && r.scores[order[j + 1]] == r.scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let midrank2 = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| r.labels[k] == 1).count() as u128;
        pos_rank_sum2 += midrank2 * pos_in_group;
        i = j + 1;
    }
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    MacroF1,
    Auc,
    GMean,
    Accuracy,
}

impl Metric {
    /// Report column order.
    pub const ALL: [Metric; 4] = [
        Metric::MacroF1,
        Metric::Auc,
        Metric::GMean,
        Metric::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MacroF1 => "macro_f1",
            Metric::Auc => "auc",
            Metric::GMean => "gmean",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::MacroF1 => "Macro-F1",
            Metric::Auc => "AUC",
            Metric::GMean => "GMean",
            Metric::Accuracy => "Accuracy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub macro_f1: f64,
    pub auc: f64,
    pub gmean: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn evaluate(r: &EvalResult) -> Result<Self> {
        Ok(Self {
            macro_f1: macro_f1(r),
            auc: auc(r)?,
            gmean: gmean(r),
            accuracy: accuracy(r),
        })
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::MacroF1 => self.macro_f1,
            Metric::Auc => self.auc,
            Metric::GMean => self.gmean,
            Metric::Accuracy => self.accuracy,
        }
    }

    fn get_mut(&mut self, m: Metric) -> &mut f64 {
        match m {
            Metric::MacroF1 => &mut self.macro_f1,
            Metric::Auc => &mut self.auc,
            Metric::GMean => &mut self.gmean,
            Metric::Accuracy => &mut self.accuracy,
        }
    }

    /// Element-wise mean, clamped to the range of the inputs so that equal
    /// inputs return their common value exactly. NaN for no inputs.
    pub fn mean(items: &[Metrics]) -> Metrics {
        let mut out = Metrics::default();
        if items.is_empty() {
            for m in Metric::ALL {
                *out.get_mut(m) = f64::NAN;
            }
            return out;
        }
        for m in Metric::ALL {
            let values = items.iter().map(|x| x.get(m));
            let lo = values.clone().fold(f64::INFINITY, f64::min);
            let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
            *out.get_mut(m) = (values.sum::<f64>() / items.len() as f64).clamp(lo, hi);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundHistory {
    pub arm: String,
    pub seed: u64,
    /// `(round, metrics)` in ascending round order.
    pub rounds: Vec<(usize, Metrics)>,
}

impl RoundHistory {
    pub fn new(arm: impl Into<String>, seed: u64) -> Self {
        Self {
            arm: arm.into(),
            seed,
            rounds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,arm,metric,value\n");
        for (round, m) in &self.rounds {
            for metric in Metric::ALL {
                let _ = writeln!(
                    s,
                    "{round},{},{},{}",
                    self.arm,
                    metric.name(),
                    m.get(metric)
                );
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the `round,arm,metric,value` format. The file must hold a
    /// single arm.
    pub fn from_csv(text: &str, seed: u64) -> Result<Self> {
        let mut arm: Option<String> = None;
        let mut by_round: BTreeMap<usize, Metrics> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("round")) {
                continue;
            }
            let bad = || Error::Decode(format!("history line {}: {line:?}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let round: usize = f[0].parse().map_err(|_| bad())?;
            match &arm {
                None => arm = Some(f[1].to_string()),
                Some(a) if a != f[1] => {
                    return Err(Error::Decode(format!("mixed arms {a} and {}", f[1])))
                }
                _ => {}
            }
            let metric = Metric::parse(f[2]).ok_or_else(bad)?;
            let value: f64 = f[3].parse().map_err(|_| bad())?;
            *by_round.entry(round).or_default().get_mut(metric) = value;
        }
        Ok(Self {
            arm: arm.unwrap_or_default(),
            seed,
            rounds: by_round.into_iter().collect(),
        })
    }
}

pub const WINDOW_LO: usize = 60;
pub const WINDOW_HI: usize = 100;

/// Mean of each metric over rounds `lo..=hi`.
pub fn window_average(history: &RoundHistory, lo: usize, hi: usize) -> Result<Metrics> {
    let available = history.rounds.last().map_or(0, |&(r, _)| r);
    let window: Vec<Metrics> = history
        .rounds
        .iter()
        .filter(|(r, _)| (lo..=hi).contains(r))
        .map(|&(_, m)| m)
        .collect();
    if lo > hi || window.len() != hi - lo + 1 {
        return Err(Error::InsufficientRounds { lo, hi, available });
    }
    Ok(Metrics::mean(&window))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub mean: Metrics,
    pub std: Metrics,
    pub seeds: usize,
}

/// Window averages per history, then mean and population standard
/// deviation across the histories of each arm. Arms keep first-seen order.
pub fn summarize(histories: &[RoundHistory], lo: usize, hi: usize) -> Result<Vec<SummaryRow>> {
    let mut arms: Vec<(String, Vec<Metrics>)> = Vec::new();
    for h in histories {
        let w = window_average(h, lo, hi)?;
        match arms.iter_mut().find(|(a, _)| *a == h.arm) {
            Some((_, v)) => v.push(w),
            None => arms.push((h.arm.clone(), vec![w])),
        }
    }
    Ok(arms
        .into_iter()
        .map(|(arm, ws)| {
            let mean = Metrics::mean(&ws);
            let mut std = Metrics::default();
            for m in Metric::ALL {
                let var = ws
                    .iter()
                    .map(|w| (w.get(m) - mean.get(m)).powi(2))
                    .sum::<f64>()
                    / ws.len() as f64;
                *std.get_mut(m) = var.sqrt();
            }
            SummaryRow {
                arm,
                mean,
                std,
                seeds: ws.len(),
            }
        })
        .collect())
}

/// `arm,metric,mean,std,seeds`
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("arm,metric,mean,std,seeds\n");
    for r in rows {
        for m in Metric::ALL {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.arm,
                m.name(),
                r.mean.get(m),
                r.std.get(m),
                r.seeds
            );
        }
    }
    s
}

/// Fixed-width text table: one row per arm, one column per metric.
pub fn summary_table(model: &str, rows: &[SummaryRow]) -> String {
    let arm_w = rows
        .iter()
        .map(|r| r.arm.len())
        .max()
        .unwrap_or(0)
        .max("Relationships".len());
    let gnn_w = model.len().max(3);
    let mut s = String::new();
    let _ = write!(s, "{:<gnn_w$} | {:<arm_w$}", "GNN", "Relationships");
    for m in Metric::ALL {
        let _ = write!(s, " | {:>8}", m.title());
    }
    s.push('\n');
    let _ = writeln!(
        s,
        "{}",
        "-".repeat(gnn_w + arm_w + 3 + Metric::ALL.len() * 11)
    );
    for r in rows {
        let _ = write!(s, "{:<gnn_w$} | {:<arm_w$}", model, r.arm);
        for m in Metric::ALL {
            let _ = write!(s, " | {:>8.4}", r.mean.get(m));
        }
        s.push('\n');
    }
    s
}

pub fn write_report(dir: &Path, model: &str, rows: &[SummaryRow]) -> Result<()> {
    std::fs::write(dir.join("summary.csv"), summary_csv(rows))?;
    let mut t = BufWriter::new(File::create(dir.join("table.txt"))?);
    t.write_all(summary_table(model, rows).as_bytes())?;
    t.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn res(scores: &[f64], labels: &[u8]) -> EvalResult {
        EvalResult::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let r = res(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]);
        assert_eq!(accuracy(&r), 1.0);
        assert_eq!(macro_f1(&r), 1.0);
        assert_eq!(gmean(&r), 1.0);
        assert_eq!(auc(&r).unwrap(), 1.0);
    }

    #[test]
    fn all_positive_predictions() {
        let r = res(&[0.9, 0.8, 0.7, 0.6], &[1, 1, 0, 0]);
        assert_eq!(gmean(&r), 0.0);
        assert_eq!(accuracy(&r), 0.5);
    }

    #[test]
    fn hand_confusion_matrix() {
        let r = res(&[0.9, 0.1, 0.2, 0.3], &[1, 1, 0, 0]);
        assert_eq!(accuracy(&r), 0.75);
        let expected = (0.8 + 2.0 / 3.0) / 2.0;
        assert!((macro_f1(&r) - expected).abs() < 1e-12);
        assert!((macro_f1(&r) - 0.733).abs() < 1e-3);
    }

    #[test]
    fn auc_ties_and_errors() {
        assert_eq!(auc(&res(&[0.5; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert!(matches!(
            auc(&res(&[0.1, 0.2], &[1, 1])),
            Err(Error::SingleClass)
        ));
        assert!(EvalResult::new(vec![], vec![]).is_err());
    }

    #[test]
    fn window_examples() {
        let mut h = RoundHistory::new("a", 0);
        for r in 0..=100 {
            let v = r as f64;
            h.rounds.push((
                r,
                Metrics {
                    macro_f1: v,
                    auc: 0.25,
                    gmean: v,
                    accuracy: v,
                },
            ));
        }
        let w = window_average(&h, 60, 100).unwrap();
        assert_eq!(w.macro_f1, 80.0);
        assert_eq!(w.auc, 0.25);
        assert!(matches!(
            window_average(&h, 60, 101),
            Err(Error::InsufficientRounds { .. })
        ));
    }

    #[test]
    fn history_csv_round_trip() {
        let mut h = RoundHistory::new("2sfgl", 3);
        h.rounds.push((
            1,
            Metrics {
                macro_f1: 0.5,
                auc: 0.6,
                gmean: 0.1,
                accuracy: 0.7,
            },
        ));
        h.rounds.push((
            2,
            Metrics {
                macro_f1: 0.55,
                auc: 0.65,
                gmean: 0.2,
                accuracy: 0.75,
            },
        ));
        assert_eq!(RoundHistory::from_csv(&h.to_csv(), 3).unwrap(), h);
    }

    #[test]
    fn table_layout() {
        let row = SummaryRow {
            arm: "2sfgl".into(),
            mean: Metrics {
                macro_f1: 0.99,
                auc: 1.0,
                gmean: 0.99,
                accuracy: 0.99,
            },
            std: Metrics::default(),
            seeds: 1,
        };
        let t = summary_table("GCN", &[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("Macro-F1") && lines[0].contains("Accuracy"));
        assert!(lines[2].starts_with("GCN | 2sfgl"));
        assert!(lines[2].contains("0.9900"));
    }

    fn scores_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..10).prop_map(|k| k as f64 / 10.0), n),
                proptest::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_order_free((scores, labels) in scores_labels()) {
            let r = EvalResult::new(scores.clone(), labels.clone()).unwrap();
            let mut rev_s = scores; rev_s.reverse();
            let mut rev_l = labels; rev_l.reverse();
            let rr = EvalResult::new(rev_s, rev_l).unwrap();
            for f in [accuracy, macro_f1, gmean] {
                let v = f(&r);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, f(&rr));
            }
            if let Ok(a) = auc(&r) {
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(a, auc(&rr).unwrap());
            }
        }

        #[test]
        fn auc_invariant_under_monotone_map((scores, labels) in scores_labels()) {
            let r = EvalResult::new(scores.clone(), labels.clone()).unwrap();
            let mapped = EvalResult::new(scores.iter().map(|s| (3.0 * s).exp()).collect(), labels).unwrap();
            if let Ok(a) = auc(&r) {
                prop_assert_eq!(a, auc(&mapped).unwrap());
            }
        }

        #[test]
        fn macro_f1_symmetric_under_class_swap((scores, labels) in scores_labels()) {
            // strict threshold away from 0.5 so flipped scores flip predictions
            let scores: Vec<f64> = scores.iter().map(|&s| if s == 0.5 { 0.45 } else { s }).collect();
            let r = EvalResult::new(scores.clone(), labels.clone()).unwrap();
            let swapped = EvalResult::new(
                scores.iter().map(|s| 1.0 - s).collect(),
                labels.iter().map(|l| 1 - l).collect(),
            ).unwrap();
            prop_assert!((macro_f1(&r) - macro_f1(&swapped)).abs() < 1e-12);
        }
    }
}
