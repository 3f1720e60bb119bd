//! PAC-type sets: the MCAR construction built on a hypergeometric rank
//! quantile, and a small-instance enumeration set for missing-at-random
//! data with discrete bins.

use std::collections::BTreeMap;

use crate::conformal::{check_scores, ConformalError, GuaranteeReport, PredictionRule};
use crate::dataset::MaskedDataset;
use crate::discretize::{bin_stats, BinAssignment};
use crate::dist::WeightedDiscreteDist;
use crate::hypergeom::hypergeom_pmf;
use crate::real::Real;

/// Default cap on the number of enumerated placements in
/// [`mar_pac_small`].
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

fn check_pac_levels<T: Real>(alpha: T, delta: T) -> Result<(), ConformalError> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(ConformalError::BadAlpha {
            alpha: alpha.to_f64().unwrap_or(f64::NAN),
            range: "[0,1)",
        });
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(ConformalError::BadDelta(delta.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

fn ceil_frac<T: Real>(count: usize, level: T) -> usize {
    let v = (T::cast(count) * level).ceil().to_usize().unwrap_or(0);
    v.max(1)
}

/// The rank `k` whose order statistic bounds the missing scores with
/// probability `1 - delta` under exchangeability, together with the largest
/// mass term entering the partial sum (the over-coverage slack).
///
/// `k` is the smallest rank such that
/// `(n0/n) * sum_{l < k} Hy(l; n-1, ceil(n0 (1-alpha)) + l - 1, n - n0)`
/// reaches `1 - delta`; when no rank reaches it, `n` is returned and the
/// threshold is `+inf`. Each summand is the exact probability, under a
/// uniform placement of the `n0` missing ranks, that exactly `l` observed
/// scores fall below the `ceil(n0 (1-alpha))`-th smallest missing score;
/// the `n0/n` factor normalizes the binomial in the denominator, and the
/// summands match exhaustive placement enumeration.
pub fn mcar_threshold_rank<T: Real>(
    n: usize,
    n_missing: usize,
    alpha: T,
    delta: T,
) -> Result<(usize, T), ConformalError> {
    check_pac_levels(alpha, delta)?;
    let n_obs = n - n_missing;
    let n_alpha = ceil_frac(n_missing, T::one() - alpha);
    let scale = T::cast(n_missing) / T::cast(n);
    let mut partial = T::zero();
    let mut p_max = T::zero();
    for k in 1..=n {
        let l = (k - 1) as i64;
        let pmf: T = hypergeom_pmf(
            l,
            (n - 1) as i64,
            n_alpha as i64 + l - 1,
            n_obs as i64,
        )?;
        let term = scale * pmf;
        p_max = p_max.max(term);
        partial += term;
        if partial >= T::one() - delta {
            return Ok((k, p_max));
        }
    }
    Ok((n, p_max))
}

/// PAC prediction set for outcomes missing completely at random: every
/// missing index gets the `k`-th smallest observed score as threshold, with
/// `k` from [`mcar_threshold_rank`]; coverage at least `1 - alpha` holds
/// with probability at least `1 - delta` conditional on the missing set.
pub fn mcar_pac<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    alpha: T,
    delta: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_pac_levels(alpha, delta)?;
    check_scores(scores, cal.mask())?;
    let report = GuaranteeReport::pac("mcar-pac", alpha, delta);
    let missing = cal.missing_indices();
    if missing.is_empty() {
        return Ok(PredictionRule::new(BTreeMap::new(), report));
    }
    let observed = cal.observed_indices();
    if observed.is_empty() {
        return Err(ConformalError::NoObservedOutcomes);
    }
    let (k, _) = mcar_threshold_rank(cal.n(), missing.len(), alpha, delta)?;
    let t = if k <= observed.len() {
        let mut obs_scores: Vec<T> = observed.iter().map(|&i| scores[i]).collect();
        obs_scores.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        obs_scores[k - 1]
    } else {
        T::infinity()
    };
    let thresholds = missing.into_iter().map(|i| (i, t)).collect();
    Ok(PredictionRule::new(thresholds, report))
}

/// Iterator over `choose(pool, k)` index combinations in lexicographic
/// order.
struct Combinations {
    pool: usize,
    k: usize,
    state: Option<Vec<usize>>,
}

impl Combinations {
    fn new(pool: usize, k: usize) -> Self {
        let state = if k <= pool {
            Some((0..k).collect())
        } else {
            None
        };
        Self { pool, k, state }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.state.clone()?;
        // Advance to the next combination.
        let mut next = current.clone();
        let mut i = self.k;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if next[i] < self.pool - (self.k - i) {
                next[i] += 1;
                for j in (i + 1)..self.k {
                    next[j] = next[j - 1] + 1;
                }
                self.state = Some(next);
                break;
            }
        }
        Some(current)
    }
}

fn choose_u128(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=k {
        acc = acc.checked_mul((n - k + j) as u128)? / j as u128;
    }
    Some(acc)
}

/// Small-instance PAC set under missing-at-random with discrete bins.
///
/// Enumerates every placement `J` of the per-bin missing counts, takes the
/// `ceil((1-alpha) n0)`-th smallest masked score over the indices in `J`
/// per placement, and thresholds at the `1 - delta` quantile of those order
/// statistics. Placements containing truly missing indices contribute their
/// `+inf` masked scores, making the enumeration conservative.
///
/// Refuses instances whose placement count exceeds `budget`.
pub fn mar_pac_small<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    bins: &BinAssignment<T>,
    alpha: T,
    delta: T,
    budget: u128,
) -> Result<PredictionRule<T>, ConformalError> {
    check_pac_levels(alpha, delta)?;
    check_scores(scores, cal.mask())?;
    if bins.len() != cal.n() {
        return Err(ConformalError::BinLength {
            got: bins.len(),
            expected: cal.n(),
        });
    }
    let report = GuaranteeReport::pac("mar-pac-small", alpha, delta);
    let n0 = cal.n_missing();
    if n0 == 0 {
        return Ok(PredictionRule::new(BTreeMap::new(), report));
    }
    let stats = bin_stats(bins, cal.mask()).expect("lengths checked");
    let mut required: u128 = 1;
    for group in stats.groups().values() {
        let c = choose_u128(group.n(), group.n_missing())
            .ok_or(ConformalError::BudgetExceeded {
                required: u128::MAX,
                budget,
            })?;
        required = required
            .checked_mul(c)
            .ok_or(ConformalError::BudgetExceeded {
                required: u128::MAX,
                budget,
            })?;
        if required > budget {
            return Err(ConformalError::BudgetExceeded { required, budget });
        }
    }
    let rank = ceil_frac(n0, T::one() - alpha);
    // Per-bin member lists and masked scores.
    let bins_members: Vec<(Vec<usize>, usize)> = stats
        .groups()
        .values()
        .filter(|g| g.n_missing() > 0 || g.n() > 0)
        .map(|g| {
            let mut members = g.observed.clone();
            members.extend_from_slice(&g.missing);
            members.sort_unstable();
            (members, g.n_missing())
        })
        .collect();
    let masked: Vec<T> = (0..cal.n())
        .map(|i| {
            if cal.is_observed(i) {
                scores[i]
            } else {
                T::infinity()
            }
        })
        .collect();
    let mut order_stats: Vec<T> = Vec::with_capacity(required as usize);
    let mut placement: Vec<T> = Vec::with_capacity(n0);
    enumerate_placements(&bins_members, &masked, 0, &mut placement, &mut |values| {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        order_stats.push(sorted[rank - 1]);
    });
    let weight = T::one() / T::cast(order_stats.len());
    let dist = WeightedDiscreteDist::new(order_stats.into_iter().map(|v| (v, weight)))?;
    let t = dist.quantile(T::one() - delta);
    let thresholds = cal.missing_indices().into_iter().map(|i| (i, t)).collect();
    Ok(PredictionRule::new(thresholds, report))
}

fn enumerate_placements<T: Real>(
    groups: &[(Vec<usize>, usize)],
    masked: &[T],
    depth: usize,
    placement: &mut Vec<T>,
    visit: &mut impl FnMut(&[T]),
) {
    if depth == groups.len() {
        visit(placement);
        return;
    }
    let (members, pick) = &groups[depth];
    if *pick == 0 {
        enumerate_placements(groups, masked, depth + 1, placement, visit);
        return;
    }
    for combo in Combinations::new(members.len(), *pick) {
        let start = placement.len();
        placement.extend(combo.iter().map(|&pos| masked[members[pos]]));
        enumerate_placements(groups, masked, depth + 1, placement, visit);
        placement.truncate(start);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::discrete_feature_bins;

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
    fn mcar_worked_example() {
        // n = 4, one missing, alpha = delta = 0.25. The missing rank is
        // uniform over the four placements, so each rank term has mass 1/4
        // and the partial sum first reaches 0.75 at k = 3; the threshold is
        // the third-smallest observed score.
        let (ds, _, scores) = instance(
            &[0, 0, 0, 0],
            &[true, true, false, true],
            &[2.0, 9.0, f64::NAN, 4.0],
        );
        let (k, p_max) = mcar_threshold_rank::<f64>(4, 1, 0.25, 0.25).unwrap();
        assert_eq!(k, 3);
        assert!((p_max - 0.25).abs() < 1e-12);
        let rule = mcar_pac(&ds, &scores, 0.25, 0.25).unwrap();
        assert_eq!(rule.threshold(2), Some(9.0));
        // A loose delta of 0.76 only needs one placement in four covered,
        // so the smallest observed score suffices.
        let rule = mcar_pac(&ds, &scores, 0.25, 0.76).unwrap();
        assert_eq!(rule.threshold(2), Some(2.0));
    }

    #[test]
    fn rank_grows_as_delta_shrinks() {
        let mut prev = 0usize;
        for delta in [0.5, 0.2, 0.1, 0.02, 0.005, 1e-6] {
            let (k, _) = mcar_threshold_rank(30, 6, 0.2f64, delta).unwrap();
            assert!(k >= prev);
            prev = k;
        }
        // Tiny delta eventually pushes the rank past the observed count and
        // the threshold to +inf.
        let (ds, _, scores) = instance(
            &[0, 0, 0, 0],
            &[true, true, false, true],
            &[2.0, 9.0, f64::NAN, 4.0],
        );
        let rule = mcar_pac(&ds, &scores, 0.25, 1e-9).unwrap();
        assert_eq!(rule.threshold(2), Some(f64::INFINITY));
    }

    #[test]
    fn mcar_empty_and_degenerate_cases() {
        let (ds, _, scores) = instance(&[0, 0], &[true, true], &[1.0, 2.0]);
        let rule = mcar_pac(&ds, &scores, 0.2, 0.1).unwrap();
        assert!(rule.is_empty());

        let (ds, _, scores) = instance(&[0, 0], &[false, false], &[f64::NAN, f64::NAN]);
        assert!(matches!(
            mcar_pac(&ds, &scores, 0.2, 0.1),
            Err(ConformalError::NoObservedOutcomes)
        ));
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let combos: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(
            combos,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(3, 0).count(), 1);
    }

    #[test]
    fn mar_small_single_bin_minima() {
        // One bin of four with one missing and alpha = 0: each placement
        // J = {i} contributes the masked score at i, so the enumerated
        // values are {1, 5, 9, inf} with equal weight.
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 0],
            &[true, true, false, true],
            &[5.0, 1.0, f64::NAN, 9.0],
        );
        let rule =
            mar_pac_small(&ds, &scores, &bins, 0.0, 0.30, DEFAULT_ENUMERATION_BUDGET).unwrap();
        // CDF: 1 -> 0.25, 5 -> 0.5, 9 -> 0.75 >= 0.7.
        assert_eq!(rule.threshold(2), Some(9.0));
        let rule =
            mar_pac_small(&ds, &scores, &bins, 0.0, 0.2, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(rule.threshold(2), Some(f64::INFINITY));
    }

    #[test]
    fn mar_small_no_missing_is_empty() {
        let (ds, bins, scores) = instance(&[0, 1], &[true, true], &[1.0, 2.0]);
        let rule =
            mar_pac_small(&ds, &scores, &bins, 0.1, 0.1, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert!(rule.is_empty());
    }

    #[test]
    fn mar_small_threshold_monotone_in_delta() {
        let (ds, bins, scores) = instance(
            &[0, 0, 0, 1, 1, 1, 1],
            &[true, false, true, true, false, true, true],
            &[0.4, f64::NAN, 1.9, 0.7, f64::NAN, 2.6, 0.2],
        );
        let mut prev = f64::NEG_INFINITY;
        for delta in [0.9, 0.5, 0.3, 0.1, 0.01] {
            let rule =
                mar_pac_small(&ds, &scores, &bins, 0.0, delta, DEFAULT_ENUMERATION_BUDGET)
                    .unwrap();
            let t = rule.threshold(1).unwrap();
            assert!(t >= prev, "threshold not monotone as delta decreases");
            prev = t;
        }
    }

    #[test]
    fn mar_small_budget_refusal() {
        let n = 40;
        let groups: Vec<i64> = vec![0; n];
        let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { i as f64 } else { f64::NAN })
            .collect();
        let (ds, bins, scores) = instance(&groups, &mask, &scores);
        let err = mar_pac_small(&ds, &scores, &bins, 0.1, 0.1, DEFAULT_ENUMERATION_BUDGET)
            .unwrap_err();
        assert!(matches!(err, ConformalError::BudgetExceeded { .. }));
    }
}
