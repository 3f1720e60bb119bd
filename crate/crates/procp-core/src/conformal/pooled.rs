//! Mean-coverage constructors: per-group split conformal, the pooled
//! simultaneous set over discrete feature groups, its propensity-bin
//! variant, and partitioned refinements of both.

use std::collections::BTreeMap;

use crate::conformal::{
    check_alpha, check_scores, ConformalError, GuaranteeReport, IndexPartition, PredictionRule,
};
use crate::dataset::MaskedDataset;
use crate::discretize::{bin_stats, BinAssignment, BinStats};
use crate::dist::WeightedDiscreteDist;
use crate::real::Real;

/// The pooled quantile distribution over a set of rows: each observed score
/// in group `k` carries mass `n0_k / (n0 * n_k)` and the mass at `+inf` is
/// `sum_k (n0_k)^2 / (n0 * n_k)`, where `n0` counts missing rows among
/// `rows` and `n_k`, `n0_k` count group memberships.
///
/// Returns `None` when no row in `rows` is missing (the vacuous case).
pub fn pooled_distribution<T: Real>(
    bins: &[i64],
    mask: &[bool],
    scores: &[T],
    rows: &[usize],
) -> Result<Option<WeightedDiscreteDist<T>>, ConformalError> {
    #[derive(Default)]
    struct Group {
        observed: Vec<usize>,
        n: usize,
        n_missing: usize,
    }
    let mut groups: BTreeMap<i64, Group> = BTreeMap::new();
    let mut n_missing_total = 0usize;
    for &i in rows {
        let g = groups.entry(bins[i]).or_default();
        g.n += 1;
        if mask[i] {
            g.observed.push(i);
        } else {
            g.n_missing += 1;
            n_missing_total += 1;
        }
    }
    if n_missing_total == 0 {
        return Ok(None);
    }
    let n0 = T::cast(n_missing_total);
    let mut atoms: Vec<(T, T)> = Vec::new();
    let mut inf_mass = T::zero();
    for g in groups.values() {
        if g.n_missing == 0 {
            continue;
        }
        let gm = T::cast(g.n_missing);
        let gn = T::cast(g.n);
        let per_score = gm / (n0 * gn);
        for &i in &g.observed {
            atoms.push((scores[i], per_score));
        }
        inf_mass += gm * gm / (n0 * gn);
    }
    atoms.push((T::infinity(), inf_mass));
    Ok(Some(WeightedDiscreteDist::new(atoms)?))
}

fn constant_rule<T: Real>(
    missing: impl IntoIterator<Item = usize>,
    t: T,
    report: GuaranteeReport<T>,
) -> PredictionRule<T> {
    let thresholds = missing.into_iter().map(|i| (i, t)).collect();
    PredictionRule::new(thresholds, report)
}

/// Standard split conformal run separately on each discrete feature group:
/// the threshold for a missing row in group `k` is the `1-alpha` quantile of
/// the group's observed scores with uniform weights `1/(n1_k + 1)` plus the
/// same weight at `+inf`.
pub fn split_conformal_per_feature<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    bins: &BinAssignment<T>,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    check_bins(bins, cal.n())?;
    let stats = bin_stats(bins, cal.mask()).expect("lengths checked");
    let mut thresholds = BTreeMap::new();
    for group in stats.groups().values() {
        if group.missing.is_empty() {
            continue;
        }
        let w = T::one() / T::cast(group.n_observed() + 1);
        let mut atoms: Vec<(T, T)> = group
            .observed
            .iter()
            .map(|&i| (scores[i], w))
            .collect();
        atoms.push((T::infinity(), w));
        let dist = WeightedDiscreteDist::new(atoms)?;
        let t = dist.quantile(T::one() - alpha);
        for &i in &group.missing {
            thresholds.insert(i, t);
        }
    }
    let report = GuaranteeReport::mean_coverage("per-feature", alpha, T::zero(), T::zero());
    Ok(PredictionRule::new(thresholds, report))
}

/// Simultaneous prediction set for discrete features: one shared threshold,
/// the `1-alpha` quantile of the pooled distribution over all rows.
///
/// With no missing outcome the rule is empty and coverage counts as one.
pub fn simultaneous_discrete<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    bins: &BinAssignment<T>,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    check_bins(bins, cal.n())?;
    let report = GuaranteeReport::mean_coverage("simultaneous", alpha, T::zero(), T::zero());
    let rows: Vec<usize> = (0..cal.n()).collect();
    match pooled_distribution(bins.bins(), cal.mask(), scores, &rows)? {
        None => Ok(PredictionRule::new(BTreeMap::new(), report)),
        Some(dist) => {
            let t = dist.quantile(T::one() - alpha);
            Ok(constant_rule(cal.missing_indices(), t, report))
        }
    }
}

/// Propensity-score discretized conformal prediction: the pooled set over
/// epsilon-discretized bins, certifying mean coverage `1 - alpha - eps`.
pub fn pro_cp<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    stats: &BinStats<T>,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    if stats.n() != cal.n() {
        return Err(ConformalError::BinLength {
            got: stats.n(),
            expected: cal.n(),
        });
    }
    let epsilon = stats.epsilon().unwrap_or_else(T::zero);
    let report = GuaranteeReport::mean_coverage("pro-cp", alpha, epsilon, T::zero());
    let n0 = stats.n_missing();
    if n0 == 0 {
        return Ok(PredictionRule::new(BTreeMap::new(), report));
    }
    let n0_t = T::cast(n0);
    let mut atoms: Vec<(T, T)> = Vec::new();
    let mut inf_mass = T::zero();
    for group in stats.groups().values() {
        if group.n_missing() == 0 {
            continue;
        }
        let gm = T::cast(group.n_missing());
        let gn = T::cast(group.n());
        let per_score = gm / (n0_t * gn);
        for &i in &group.observed {
            atoms.push((scores[i], per_score));
        }
        inf_mass += gm * gm / (n0_t * gn);
    }
    atoms.push((T::infinity(), inf_mass));
    let dist = WeightedDiscreteDist::new(atoms)?;
    let t = dist.quantile(T::one() - alpha);
    Ok(constant_rule(cal.missing_indices(), t, report))
}

/// Which pooled constructor a partitioned run refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PooledMethod {
    /// Discrete-feature simultaneous set (identity bins).
    Simultaneous,
    /// Propensity-discretized set (epsilon bins).
    ProCp,
}

/// Partitioned refinement: for each block with at least one missing outcome,
/// the pooled constructor runs at level `alpha` on the block's missing rows
/// together with all observed rows, and each missing row inherits its
/// block's threshold.
pub fn partitioned<T: Real>(
    method: PooledMethod,
    cal: &MaskedDataset<T>,
    scores: &[T],
    bins: &BinAssignment<T>,
    partition: &IndexPartition,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    check_bins(bins, cal.n())?;
    if partition.n() != cal.n() {
        return Err(ConformalError::BadPartition(format!(
            "partition is over {} indices, dataset has {}",
            partition.n(),
            cal.n()
        )));
    }
    let observed = cal.observed_indices();
    let mut thresholds = BTreeMap::new();
    for block in partition.blocks() {
        let block_missing: Vec<usize> =
            block.iter().copied().filter(|&i| !cal.is_observed(i)).collect();
        if block_missing.is_empty() {
            continue;
        }
        let mut rows = block_missing.clone();
        rows.extend_from_slice(&observed);
        let dist = pooled_distribution(bins.bins(), cal.mask(), scores, &rows)?
            .expect("block has missing rows");
        let t = dist.quantile(T::one() - alpha);
        for i in block_missing {
            thresholds.insert(i, t);
        }
    }
    let (name, epsilon) = match method {
        PooledMethod::Simultaneous => ("simultaneous (partitioned)", T::zero()),
        PooledMethod::ProCp => ("pro-cp (partitioned)", bins.epsilon().unwrap_or_else(T::zero)),
    };
    let report = GuaranteeReport::mean_coverage(name, alpha, epsilon, T::zero());
    Ok(PredictionRule::new(thresholds, report))
}

fn check_bins<T: Real>(bins: &BinAssignment<T>, n: usize) -> Result<(), ConformalError> {
    if bins.len() != n {
        return Err(ConformalError::BinLength {
            got: bins.len(),
            expected: n,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::discrete_feature_bins;

    /// Dataset whose features are group labels; scores given per index
    /// (missing entries are placeholders).
    fn instance(
        groups: &[i64],
        mask: &[bool],
        scores: &[f64],
    ) -> (MaskedDataset<f64>, BinAssignment<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = groups.iter().map(|&g| vec![g as f64]).collect();
        let outcomes = mask
            .iter()
            .map(|&a| if a { Some(0.0) } else { None })
            .collect();
        let ds = MaskedDataset::from_rows(rows, mask.to_vec(), outcomes).unwrap();
        let bins = discrete_feature_bins(&ds);
        (ds, bins, scores.to_vec())
    }

    #[test]
    fn split_conformal_worked_example() {
        // One group of five: observed scores {1,2,3,4}, one missing.
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 0, 0],
            &[true, true, true, true, false],
            &[1.0, 2.0, 3.0, 4.0, f64::NAN],
        );
        let r = split_conformal_per_feature(&ds, &scores, &bins, 0.2).unwrap();
        assert_eq!(r.threshold(4), Some(4.0));
        let r = split_conformal_per_feature(&ds, &scores, &bins, 0.5).unwrap();
        assert_eq!(r.threshold(4), Some(3.0));
    }

    #[test]
    fn split_conformal_empty_group_is_infinite() {
        let (ds, bins, scores) = instance(
            &[0, 1, 1],
            &[false, true, true],
            &[f64::NAN, 1.0, 2.0],
        );
        let r = split_conformal_per_feature(&ds, &scores, &bins, 0.3).unwrap();
        assert_eq!(r.threshold(0), Some(f64::INFINITY));
    }

    #[test]
    fn simultaneous_worked_example() {
        // Groups: {n=3, observed scores {1,2}, one missing} and
        // {n=2, observed {5}, one missing}. Atoms: 1,2 at 1/6 each, 5 at 1/4,
        // +inf at 1/6 + 1/4; CDF at 5 is 7/12.
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 1, 1],
            &[true, true, false, true, false],
            &[1.0, 2.0, f64::NAN, 5.0, f64::NAN],
        );
        let r = simultaneous_discrete(&ds, &scores, &bins, 0.45).unwrap();
        assert_eq!(r.threshold(2), Some(5.0));
        assert_eq!(r.threshold(4), Some(5.0));
        let r = simultaneous_discrete(&ds, &scores, &bins, 0.4).unwrap();
        assert_eq!(r.threshold(2), Some(f64::INFINITY));
    }

    #[test]
    fn simultaneous_no_missing_is_empty_rule() {
        let (ds, bins, scores) = instance(&[0, 1], &[true, true], &[1.0, 2.0]);
        let r = simultaneous_discrete(&ds, &scores, &bins, 0.2).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn pro_cp_worked_example() {
        // Bin A: observed {1,2,3}, one missing (n=4); bin B: observed {4},
        // one missing (n=2). Atoms: 1,2,3 at 1/8 each, 4 at 1/4, inf at
        // 1/8 + 1/4 = 3/8; CDF at 4 is 5/8.
        let groups = [0i64, 0, 0, 0, 1, 1];
        let mask = [true, true, true, false, true, false];
        let scores = [1.0, 2.0, 3.0, f64::NAN, 4.0, f64::NAN];
        let (ds, bins, scores) = instance(&groups, &mask, &scores);
        let stats = bin_stats(&bins, ds.mask()).unwrap();
        let r = pro_cp(&ds, &scores, &stats, 0.5).unwrap();
        assert_eq!(r.threshold(3), Some(4.0));
        let r = pro_cp(&ds, &scores, &stats, 0.3).unwrap();
        assert_eq!(r.threshold(3), Some(f64::INFINITY));
    }

    #[test]
    fn pro_cp_all_observed_is_empty() {
        let (ds, bins, scores) = instance(&[0, 1], &[true, true], &[1.0, 2.0]);
        let stats = bin_stats(&bins, ds.mask()).unwrap();
        let r = pro_cp(&ds, &scores, &stats, 0.5).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.report().effective_level(), 0.5);
    }

    #[test]
    fn full_partition_matches_unpartitioned() {
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 1, 1, 2, 2, 2],
            &[true, false, true, true, false, false, true, true],
            &[0.3, f64::NAN, 1.7, 0.9, f64::NAN, f64::NAN, 2.4, 0.1],
        );
        let whole = IndexPartition::whole(ds.n());
        for alpha in [0.1, 0.25, 0.5, 0.8] {
            let a = simultaneous_discrete(&ds, &scores, &bins, alpha).unwrap();
            let b = partitioned(
                PooledMethod::Simultaneous,
                &ds,
                &scores,
                &bins,
                &whole,
                alpha,
            )
            .unwrap();
            assert_eq!(a.thresholds(), b.thresholds());
        }
    }

    #[test]
    fn singleton_partition_matches_per_feature_split() {
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 0, 1, 1, 1],
            &[true, true, false, true, true, false, true],
            &[0.5, 1.5, f64::NAN, 2.5, 3.5, f64::NAN, 4.5],
        );
        let singles = IndexPartition::singletons(ds.n());
        for alpha in [0.15, 0.4, 0.6] {
            let a = split_conformal_per_feature(&ds, &scores, &bins, alpha).unwrap();
            let b = partitioned(
                PooledMethod::Simultaneous,
                &ds,
                &scores,
                &bins,
                &singles,
                alpha,
            )
            .unwrap();
            assert_eq!(a.thresholds(), b.thresholds());
        }
    }

    #[test]
    fn two_block_partition_matches_manual_subinstances() {
        let groups = [0i64, 0, 1, 1, 1, 2, 2, 0, 1, 2];
        let mask = [true, false, true, false, true, true, false, true, true, true];
        let scores = [
            0.2, f64::NAN, 0.9, f64::NAN, 1.1, 0.4, f64::NAN, 0.8, 1.9, 0.6,
        ];
        let (ds, bins, scores) = instance(&groups, &mask, &scores);
        let partition =
            IndexPartition::new(vec![(0..5).collect(), (5..10).collect()], 10).unwrap();
        let rule = partitioned(
            PooledMethod::Simultaneous,
            &ds,
            &scores,
            &bins,
            &partition,
            0.35,
        )
        .unwrap();
        // Manual recomputation per block on block-missing + all observed.
        let observed = ds.observed_indices();
        for block in partition.blocks() {
            let missing: Vec<usize> = block.iter().copied().filter(|&i| !mask[i]).collect();
            if missing.is_empty() {
                continue;
            }
            let mut rows = missing.clone();
            rows.extend_from_slice(&observed);
            let dist = pooled_distribution(bins.bins(), ds.mask(), &scores, &rows)
                .unwrap()
                .unwrap();
            let t = dist.quantile(1.0 - 0.35);
            for i in missing {
                assert_eq!(rule.threshold(i), Some(t));
            }
        }
    }

    #[test]
    fn thresholds_monotone_in_alpha() {
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 1, 1],
            &[true, true, false, true, false],
            &[1.0, 2.0, f64::NAN, 5.0, f64::NAN],
        );
        let mut prev = f64::INFINITY;
        for alpha in [0.05, 0.2, 0.4, 0.6, 0.9] {
            let r = simultaneous_discrete(&ds, &scores, &bins, alpha).unwrap();
            let t = r.threshold(2).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn score_validation() {
        let (ds, bins, _) = instance(&[0, 0], &[true, false], &[1.0, f64::NAN]);
        let bad = vec![f64::NAN, f64::NAN];
        assert!(matches!(
            simultaneous_discrete(&ds, &bad, &bins, 0.2),
            Err(ConformalError::NonFiniteScore { index: 0 })
        ));
        let short = vec![1.0];
        assert!(matches!(
            simultaneous_discrete(&ds, &short, &bins, 0.2),
            Err(ConformalError::ScoreLength { .. })
        ));
    }
}
