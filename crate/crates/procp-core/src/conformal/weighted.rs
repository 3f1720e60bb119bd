//! Weighted split conformal baseline: per missing index, observed scores
//! are weighted by the propensity odds of their features, with the test
//! point's odds as mass at `+inf`, normalized per test point. Certifies
//! marginal (mean) coverage only.

use std::collections::BTreeMap;

use crate::conformal::{check_alpha, check_scores, ConformalError, GuaranteeReport, PredictionRule};
use crate::dataset::MaskedDataset;
use crate::dist::WeightedDiscreteDist;
use crate::propensity::PropensityModel;
use crate::real::Real;

pub fn weighted_split_conformal<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    propensity: &PropensityModel<T>,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    let probs: Vec<T> = (0..cal.n())
        .map(|i| propensity.prob(cal.feature_row(i)))
        .collect();
    weighted_split_conformal_from_probs(cal, scores, &probs, alpha)
}

/// Same construction with the per-row observation probabilities supplied
/// directly (e.g. from a known-propensity data column).
pub fn weighted_split_conformal_from_probs<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    probs: &[T],
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    if probs.len() != cal.n() {
        return Err(ConformalError::ScoreLength {
            got: probs.len(),
            expected: cal.n(),
        });
    }
    let report =
        GuaranteeReport::mean_coverage("weighted-split-conformal", alpha, T::zero(), T::zero());
    let missing = cal.missing_indices();
    if missing.is_empty() {
        return Ok(PredictionRule::new(BTreeMap::new(), report));
    }
    let observed = cal.observed_indices();
    if observed.is_empty() {
        return Err(ConformalError::NoObservedOutcomes);
    }
    let odds = |p: T| p / (T::one() - p);
    let obs_weights: Vec<T> = observed.iter().map(|&j| odds(probs[j])).collect();
    let obs_total: T = obs_weights.iter().copied().sum();
    let level = T::one() - alpha;
    let mut thresholds = BTreeMap::new();
    for &i in &missing {
        let w_test = odds(probs[i]);
        let denom = obs_total + w_test;
        let atoms = observed
            .iter()
            .zip(&obs_weights)
            .map(|(&j, &w)| (scores[j], w / denom))
            .chain(std::iter::once((T::infinity(), w_test / denom)));
        let dist = WeightedDiscreteDist::new(atoms)?;
        thresholds.insert(i, dist.quantile(level));
    }
    Ok(PredictionRule::new(thresholds, report))
}
