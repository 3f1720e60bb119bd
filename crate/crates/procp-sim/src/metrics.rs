//! Per-trial evaluation of a rule against the hidden truth: coverage
//! proportion over the missing outcomes and the median set width.

use procp_core::{BinAssignment, PredictionRule, ScoreModel};

use crate::dgp::GeneratedInstance;
use crate::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    /// Fraction of missing outcomes inside their sets; one when nothing is
    /// missing.
    pub coverage: f64,
    /// Median set width over missing indices (infinite entries included);
    /// absent when nothing is missing.
    pub median_width: Option<f64>,
    /// Number of infinite-width sets.
    pub infinite_widths: usize,
    pub n_missing: usize,
    /// Coverage split by bin, when bins were supplied.
    pub per_bin_coverage: Vec<(i64, f64)>,
}

/// Median with infinities participating: the upper-middle average, so an
/// infinite half forces an infinite median.
fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn evaluate(
    rule: &PredictionRule<f64>,
    instance: &GeneratedInstance,
    score_model: &ScoreModel<f64>,
) -> Result<TrialMetrics, SimError> {
    evaluate_binned(rule, instance, score_model, None)
}

pub fn evaluate_with_bins(
    rule: &PredictionRule<f64>,
    instance: &GeneratedInstance,
    score_model: &ScoreModel<f64>,
    bins: &BinAssignment<f64>,
) -> Result<TrialMetrics, SimError> {
    evaluate_binned(rule, instance, score_model, Some(bins))
}

fn evaluate_binned(
    rule: &PredictionRule<f64>,
    instance: &GeneratedInstance,
    score_model: &ScoreModel<f64>,
    bins: Option<&BinAssignment<f64>>,
) -> Result<TrialMetrics, SimError> {
    let missing = instance.dataset.missing_indices();
    let keys: Vec<usize> = rule.thresholds().keys().copied().collect();
    if keys != missing {
        return Err(SimError::IndexMismatch {
            expected: missing.len(),
            got: keys.len(),
        });
    }
    if missing.is_empty() {
        return Ok(TrialMetrics {
            coverage: 1.0,
            median_width: None,
            infinite_widths: 0,
            n_missing: 0,
            per_bin_coverage: Vec::new(),
        });
    }
    let mut covered = 0usize;
    let mut widths = Vec::with_capacity(missing.len());
    let mut infinite = 0usize;
    let mut per_bin: std::collections::BTreeMap<i64, (usize, usize)> = Default::default();
    for &i in &missing {
        let t = rule.threshold(i).expect("keys checked");
        let s = score_model
            .score(instance.dataset.feature_row(i), instance.outcomes[i])
            .map_err(|e| SimError::Score(e.to_string()))?;
        let hit = s <= t;
        if hit {
            covered += 1;
        }
        if let Some(b) = bins {
            let e = per_bin.entry(b.bins()[i]).or_insert((0, 0));
            e.0 += 1;
            if hit {
                e.1 += 1;
            }
        }
        if t == f64::INFINITY {
            infinite += 1;
            widths.push(f64::INFINITY);
        } else {
            widths.push((2.0 * t).max(0.0));
        }
    }
    Ok(TrialMetrics {
        coverage: covered as f64 / missing.len() as f64,
        median_width: median(&mut widths),
        infinite_widths: infinite,
        n_missing: missing.len(),
        per_bin_coverage: per_bin
            .into_iter()
            .map(|(k, (n, c))| (k, c as f64 / n as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use procp_core::{MaskedDataset, MeanModel};

    fn instance(mask: &[bool], outcomes: &[f64]) -> GeneratedInstance {
        let rows: Vec<Vec<f64>> = (0..mask.len()).map(|i| vec![i as f64]).collect();
        let masked = mask
            .iter()
            .zip(outcomes)
            .map(|(&a, &y)| if a { Some(y) } else { None })
            .collect();
        GeneratedInstance {
            dataset: MaskedDataset::from_rows(rows, mask.to_vec(), masked).unwrap(),
            outcomes: outcomes.to_vec(),
            propensities: vec![0.5; mask.len()],
        }
    }

    #[test]
    fn counts_enter_as_expected() {
        // Built through a real constructor to avoid exposing internals.
        let inst = instance(&[true, false, false, false], &[0.0, 1.0, 5.0, -2.0]);
        let score_model = ScoreModel::Residual(MeanModel::new(0.0, vec![0.0]));
        let scores = vec![0.0, f64::NAN, f64::NAN, f64::NAN];
        let rule = procp_core::mcar_pac(&inst.dataset, &scores, 0.3, 0.9).unwrap();
        let m = evaluate(&rule, &inst, &score_model).unwrap();
        assert_eq!(m.n_missing, 3);
        // Threshold is the single observed score 0.0; |y| <= 0 only for no
        // missing outcome here.
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.median_width, Some(0.0));
    }

    #[test]
    fn vacuous_rule_scores_full_coverage() {
        let inst = instance(&[true, true], &[0.0, 1.0]);
        let score_model = ScoreModel::Residual(MeanModel::new(0.0, vec![0.0]));
        let scores = vec![0.0, 1.0];
        let rule = procp_core::mcar_pac(&inst.dataset, &scores, 0.3, 0.5).unwrap();
        let m = evaluate(&rule, &inst, &score_model).unwrap();
        assert_eq!(m.coverage, 1.0);
        assert_eq!(m.median_width, None);
    }

    #[test]
    fn median_with_infinities() {
        let mut w = vec![1.0, f64::INFINITY, 3.0];
        assert_eq!(median(&mut w), Some(3.0));
        let mut w = vec![1.0, f64::INFINITY, 3.0, f64::INFINITY];
        assert_eq!(median(&mut w), Some(f64::INFINITY));
        let mut w = vec![1.0, 3.0, 5.0, f64::INFINITY];
        assert_eq!(median(&mut w), Some(4.0));
    }

    #[test]
    fn index_mismatch_detected() {
        let inst = instance(&[true, false], &[0.0, 1.0]);
        let other = instance(&[false, true], &[0.0, 1.0]);
        let score_model = ScoreModel::Residual(MeanModel::new(0.0, vec![0.0]));
        let scores = vec![0.0, f64::NAN];
        let rule = procp_core::mcar_pac(&inst.dataset, &scores, 0.3, 0.5).unwrap();
        assert!(matches!(
            evaluate(&rule, &other, &score_model),
            Err(SimError::IndexMismatch { .. })
        ));
    }
}
