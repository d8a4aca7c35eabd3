//! Metrics CSV and summary emission.

use crate::fedcore::RoundMetrics;
use std::io::Write;

pub const METRICS_HEADER: &str =
    "round,selector,cohort,entropy_bits,entropy_true_bits,test_accuracy,test_loss,lr";

/// Write one run's per-round metrics. Cohort ids are `;`-joined, reals carry
/// six decimal places.
pub fn write_metrics_csv<W: Write>(
    writer: &mut W,
    selector: &str,
    rows: &[RoundMetrics],
) -> std::io::Result<()> {
    writeln!(writer, "{METRICS_HEADER}")?;
    for row in rows {
        let cohort: Vec<String> = row.cohort.iter().map(|id| id.to_string()).collect();
        writeln!(
            writer,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.round,
            selector,
            cohort.join(";"),
            row.entropy_bits,
            row.entropy_true_bits,
            row.test_accuracy,
            row.test_loss,
            row.lr
        )?;
    }
    Ok(())
}

/// Mean test accuracy over the last `window` rounds (all rounds if fewer).
pub fn trailing_mean_accuracy(rows: &[RoundMetrics], window: usize) -> f64 {
    let take = window.min(rows.len());
    if take == 0 {
        return 0.0;
    }
    let sum: f64 = rows[rows.len() - take..]
        .iter()
        .map(|r| r.test_accuracy)
        .sum();
    sum / take as f64
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}
