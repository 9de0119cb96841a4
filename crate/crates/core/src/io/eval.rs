use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::gridworld::ExperimentReport;

/// One inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub n_demos: usize,
    pub threshold: f64,
    pub seed: u64,
    pub fp_rate: f64,
    pub final_kl: f64,
    pub n_selected: usize,
}

impl From<&ExperimentReport> for RunRow {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            n_demos: r.n_demos,
            threshold: r.threshold,
            seed: r.seed,
            fp_rate: r.fp_rate,
            final_kl: r.final_kl,
            n_selected: r.n_selected(),
        }
    }
}

/// Mean and standard error over the seeds of one `(n_demos, threshold)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_demos: usize,
    pub threshold: f64,
    pub runs: usize,
    pub fp_mean: f64,
    pub fp_se: f64,
    pub kl_mean: f64,
    pub kl_se: f64,
    pub n_selected_mean: f64,
}

/// Sample mean and standard error; the error is zero for a single value.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups runs by `(n_demos, threshold)` in ascending order.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, u64), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        // thresholds are non-negative, so the bit pattern orders them
        cells.entry((r.n_demos, r.threshold.to_bits())).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((n_demos, bits), runs)| {
            let fp: Vec<f64> = runs.iter().map(|r| r.fp_rate).collect();
            let kl: Vec<f64> = runs.iter().map(|r| r.final_kl).collect();
            let (fp_mean, fp_se) = mean_se(&fp);
            let (kl_mean, kl_se) = mean_se(&kl);
            SummaryRow {
                n_demos,
                threshold: f64::from_bits(bits),
                runs: runs.len(),
                fp_mean,
                fp_se,
                kl_mean,
                kl_se,
                n_selected_mean: runs.iter().map(|r| r.n_selected as f64).sum::<f64>() / runs.len() as f64,
            }
        })
        .collect()
}

pub fn write_runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from("n_demos,threshold,seed,fp_rate,final_kl,n_selected\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.n_demos, r.threshold, r.seed, r.fp_rate, r.final_kl, r.n_selected);
    }
    out
}

pub fn write_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("n_demos,threshold,runs,fp_mean,fp_se,kl_mean,kl_se,n_selected_mean\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n_demos, r.threshold, r.runs, r.fp_mean, r.fp_se, r.kl_mean, r.kl_se, r.n_selected_mean
        );
    }
    out
}
