//! Structured-text export of study results: a summary table and plot-ready
//! histogram files for the coverage proportion and median width.

use crate::study::StudySummary;

/// Fixed-width summary table, one row per study.
pub fn summary_table(rows: &[(&str, &StudySummary)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>8} {:>10} {:>22} {:>22} {:>6}\n",
        "method", "alpha", "trials", "P(coverage >= 1-a)", "mean median width", "inf"
    ));
    for (label, summary) in rows {
        let a = &summary.aggregates;
        out.push_str(&format!(
            "{:<24} {:>8.3} {:>10} {:>12.4} ({:.4}) {:>13.4} ({:.4}) {:>6}\n",
            label,
            summary.alpha,
            a.n_trials,
            a.prob_target_coverage,
            a.se_prob,
            a.mean_median_width,
            a.se_median_width,
            a.infinite_width_trials,
        ));
    }
    out
}

/// Histogram as `lo,hi,count` CSV lines; a trailing `inf,inf,count` row
/// collects infinite values.
pub fn histogram(values: &[f64], n_bins: usize, lo: f64, hi: f64) -> String {
    let mut counts = vec![0usize; n_bins];
    let mut infinite = 0usize;
    let width = (hi - lo) / n_bins as f64;
    for &v in values {
        if !v.is_finite() {
            infinite += 1;
            continue;
        }
        let idx = (((v - lo) / width).floor() as isize).clamp(0, n_bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    let mut out = String::from("lo,hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        let b = lo + (i + 1) as f64 * width;
        out.push_str(&format!("{a},{b},{c}\n"));
    }
    out.push_str(&format!("inf,inf,{infinite}\n"));
    out
}

pub fn coverage_histogram(summary: &StudySummary, n_bins: usize) -> String {
    let values: Vec<f64> = summary.per_trial.iter().map(|m| m.coverage).collect();
    histogram(&values, n_bins, 0.0, 1.0)
}

pub fn width_histogram(summary: &StudySummary, n_bins: usize) -> String {
    let values: Vec<f64> = summary
        .per_trial
        .iter()
        .filter_map(|m| m.median_width)
        .collect();
    let hi = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max);
    histogram(&values, n_bins, 0.0, hi)
}
