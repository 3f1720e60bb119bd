//! Treatment-effect sets: counterfactual prediction intervals shifted by
//! the observed control outcome at each untreated index.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::conformal::PredictionRule;
use crate::dataset::MaskedDataset;
use crate::real::Real;
use crate::scores::{Interval, ScoreModel, ScoreError};

#[derive(Debug, Error)]
pub enum IteError {
    #[error("no control outcome supplied for missing index {index}")]
    MissingControlOutcome { index: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Turns counterfactual prediction thresholds into treatment-effect
/// intervals: each missing index's interval `{ y : s(x, y) <= t }` is
/// shifted down by that unit's observed control outcome.
pub fn ite_sets<T: Real>(
    rule: &PredictionRule<T>,
    model: &ScoreModel<T>,
    cal: &MaskedDataset<T>,
    control_outcomes: &BTreeMap<usize, T>,
) -> Result<BTreeMap<usize, Interval<T>>, IteError> {
    let mut out = BTreeMap::new();
    for (&i, &t) in rule.thresholds() {
        let base = model.interval_from_threshold(cal.feature_row(i), t)?;
        let y0 = control_outcomes
            .get(&i)
            .copied()
            .ok_or(IteError::MissingControlOutcome { index: i })?;
        out.insert(i, base.shift_down(y0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::GuaranteeReport;
    use crate::scores::MeanModel;

    fn fixture() -> (PredictionRule<f64>, ScoreModel<f64>, MaskedDataset<f64>) {
        let ds = MaskedDataset::from_rows(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![true, false, false],
            vec![Some(1.0), None, None],
        )
        .unwrap();
        let model = ScoreModel::Residual(MeanModel::new(5.0, vec![0.0]));
        let report = GuaranteeReport::mean_coverage("pro-cp", 0.2, 0.1, 0.0);
        let thresholds = [(1usize, 2.0f64), (2usize, f64::INFINITY)]
            .into_iter()
            .collect();
        (PredictionRule::new(thresholds, report), model, ds)
    }

    #[test]
    fn shift_by_control_outcome() {
        let (rule, model, ds) = fixture();
        let controls = [(1usize, 2.0f64), (2usize, -1.0f64)].into_iter().collect();
        let sets = ite_sets(&rule, &model, &ds, &controls).unwrap();
        // Counterfactual interval [3, 7] shifted by 2 -> [1, 5].
        assert_eq!((sets[&1].lower, sets[&1].upper), (1.0, 5.0));
        // Infinite threshold stays the whole line.
        assert_eq!(sets[&2].lower, f64::NEG_INFINITY);
        assert_eq!(sets[&2].upper, f64::INFINITY);
    }

    #[test]
    fn shift_preserves_width() {
        let (rule, model, ds) = fixture();
        let controls = [(1usize, 17.5f64), (2usize, 0.0f64)].into_iter().collect();
        let sets = ite_sets(&rule, &model, &ds, &controls).unwrap();
        let base = model
            .interval_from_threshold(ds.feature_row(1), 2.0)
            .unwrap();
        assert_eq!(sets[&1].width(), base.width());
    }

    #[test]
    fn missing_control_outcome_errors() {
        let (rule, model, ds) = fixture();
        let controls = [(1usize, 2.0f64)].into_iter().collect();
        assert!(matches!(
            ite_sets(&rule, &model, &ds, &controls),
            Err(IteError::MissingControlOutcome { index: 2 })
        ));
    }
}
