//! Figure-data emitters: everything downstream plotting needs, as plain
//! CSV-shaped rows. No rendering here.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{TrainReport, WEIGHT_HIST_BINS};
use crate::error::{Error, Result};
use crate::online::MetricsRow;
use crate::seed;
use crate::stats;

/// Resamples used for learning-curve confidence intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
/// Two-sided coverage: 95% percentile intervals.
pub const BOOTSTRAP_ALPHA: f64 = 0.05;

/// One histogram cell of the weight distribution at one epoch, long-format:
/// weights fall in `[bin_low, bin_high)` (the top cell also includes 1.0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBinRow {
    pub epoch: usize,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
}

/// Unpack a training report's per-epoch weight histograms into long format.
pub fn weight_histogram_long(report: &TrainReport) -> Vec<HistBinRow> {
    let width = 1.0 / WEIGHT_HIST_BINS as f64;
    let mut rows = Vec::with_capacity(report.rows.len() * WEIGHT_HIST_BINS);
    for row in &report.rows {
        for (bin, &count) in row.weight_hist.iter().enumerate() {
            rows.push(HistBinRow {
                epoch: row.epoch,
                bin_low: bin as f64 * width,
                bin_high: (bin + 1) as f64 * width,
                count,
            });
        }
    }
    rows
}

/// Same, but starting from a `train_report.csv` on disk.
pub fn weight_histogram_long_from_csv(path: &Path) -> Result<Vec<HistBinRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(Error::Csv)?.clone();
    let hist_cols: Vec<usize> = (0..WEIGHT_HIST_BINS)
        .map(|b| {
            headers
                .iter()
                .position(|h| h == format!("hist_bin_{b}"))
                .ok_or_else(|| Error::Data(format!("{}: missing hist_bin_{b}", path.display())))
        })
        .collect::<Result<_>>()?;
    let epoch_col = headers
        .iter()
        .position(|h| h == "epoch")
        .ok_or_else(|| Error::Data(format!("{}: missing epoch column", path.display())))?;

    let width = 1.0 / WEIGHT_HIST_BINS as f64;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(Error::Csv)?;
        let field = |col: usize| -> Result<&str> {
            record
                .get(col)
                .ok_or_else(|| Error::Data(format!("{}: short record", path.display())))
        };
        let epoch: usize = field(epoch_col)?
            .parse()
            .map_err(|e| Error::Data(format!("{}: bad epoch: {e}", path.display())))?;
        for (bin, &col) in hist_cols.iter().enumerate() {
            let count: u64 = field(col)?
                .parse()
                .map_err(|e| Error::Data(format!("{}: bad histogram count: {e}", path.display())))?;
            rows.push(HistBinRow {
                epoch,
                bin_low: bin as f64 * width,
                bin_high: (bin + 1) as f64 * width,
                count,
            });
        }
    }
    Ok(rows)
}

/// One point of an online learning curve: a metric aggregated over seeds at
/// one iteration, with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub iteration: usize,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_seeds: usize,
}

/// Aggregate evaluation rows into learning curves: for every
/// (method, iteration, metric), the mean over seeds plus a 95% bootstrap
/// interval (10,000 resamples, percentile method). `success_given_plan`
/// only aggregates the seeds where it is defined. Each group's resampling
/// stream is derived from `master_seed` and the group's identity, so curve
/// generation does not depend on row order.
pub fn online_curves(rows: &[MetricsRow], master_seed: u64) -> Result<Vec<CurveRow>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize, &'static str), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let method = row.method.to_string();
        groups
            .entry((method.clone(), row.iteration, "frac_plans_reach_goal"))
            .or_default()
            .push(row.frac_plans_reach_goal);
        groups.entry((method.clone(), row.iteration, "success")).or_default().push(row.success);
        if let Some(v) = row.success_given_plan {
            groups.entry((method, row.iteration, "success_given_plan")).or_default().push(v);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((method, iteration, metric), mut values) in groups {
        // Canonicalize the group so resampling (and float accumulation)
        // sees the same sequence no matter how the input rows were ordered.
        values.sort_by(f64::total_cmp);
        let label = format!("bootstrap/{method}/{iteration}/{metric}");
        let (ci_low, ci_high) = stats::bootstrap_mean_ci(
            &values,
            BOOTSTRAP_RESAMPLES,
            BOOTSTRAP_ALPHA,
            seed::substream(master_seed, &label),
        )?;
        out.push(CurveRow {
            method,
            iteration,
            metric: metric.to_string(),
            mean: stats::mean(&values)?,
            ci_low,
            ci_high,
            n_seeds: values.len(),
        });
    }
    Ok(out)
}
