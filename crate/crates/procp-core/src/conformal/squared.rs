//! Squared-coverage constructors. The quantile distribution mixes three
//! parts: per-point masses on the masked scores, within-bin ordered-pair
//! masses on pairwise minima, and cross-bin pair masses on pairwise minima,
//! taken at level `1 - alpha^2`. Masked scores are the observed score where
//! the outcome was observed and `+inf` where it is missing.
//!
//! Pair terms are materialized by a sorted sweep that aggregates by value in
//! `O(n log n)`, never by explicit pair enumeration.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::conformal::{
    check_alpha, check_scores, ConformalError, GuaranteeReport, IndexPartition, PredictionRule,
};
use crate::dataset::MaskedDataset;
use crate::discretize::{BinAssignment, BinStats};
use crate::dist::WeightedDiscreteDist;
use crate::real::Real;

/// The squared-coverage quantile distribution over the rows in `rows`.
///
/// Per-point masses are `n0_k / (n0^2 n_k)` at each masked score of bin `k`;
/// within-bin ordered pairs `i != j` carry
/// `n0_k (n0_k - 1) / (n0^2 n_k (n_k - 1))` at the pairwise minimum (zero
/// when `n_k = 1`); cross-bin pairs carry
/// `n0_k n0_k' / (n0^2 n_k n_k')` at the pairwise minimum.
///
/// Returns `None` when no row in `rows` is missing.
pub fn pro_cp2_distribution<T: Real>(
    bins: &[i64],
    mask: &[bool],
    scores: &[T],
    rows: &[usize],
) -> Result<Option<WeightedDiscreteDist<T>>, ConformalError> {
    struct Group<T> {
        n: usize,
        n_missing: usize,
        // Per-member weight n0_k / n_k and ordered-pair weight
        // n0_k (n0_k - 1) / (n_k (n_k - 1)).
        point_w: T,
        pair_w: T,
        // Members with masked score > current sweep value.
        above: usize,
    }
    let mut groups: BTreeMap<i64, Group<T>> = BTreeMap::new();
    let mut items: Vec<(T, i64)> = Vec::with_capacity(rows.len());
    let mut n_missing_total = 0usize;
    for &i in rows {
        let masked = if mask[i] { scores[i] } else { T::infinity() };
        items.push((masked, bins[i]));
        let g = groups.entry(bins[i]).or_insert(Group {
            n: 0,
            n_missing: 0,
            point_w: T::zero(),
            pair_w: T::zero(),
            above: 0,
        });
        g.n += 1;
        if !mask[i] {
            g.n_missing += 1;
            n_missing_total += 1;
        }
    }
    if n_missing_total == 0 {
        return Ok(None);
    }
    let n0 = T::cast(n_missing_total);
    let nu = T::one() / (n0 * n0);
    for g in groups.values_mut() {
        let gm = T::cast(g.n_missing);
        let gn = T::cast(g.n);
        g.point_w = gm / gn;
        g.pair_w = if g.n >= 2 {
            gm * (gm - T::one()) / (gn * (gn - T::one()))
        } else {
            T::zero()
        };
        g.above = g.n;
    }

    items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // Sweep distinct values in ascending order. With G(t) the point-weighted
    // count of members above t and c_k(t) the raw count above t per bin, the
    // pair-part CDF increment between consecutive values is
    //   (G_before^2 - G_after^2) - sum_k w_k^2 (c_before^2 - c_after^2)
    //   + sum_k pair_w_k (c_before (c_before - 1) - c_after (c_after - 1)),
    // all over n0^2; the subtraction removes same-bin products from the
    // cross-bin square and the last term restores them at the pair weight.
    let mut above_total = n0;
    let mut atoms: Vec<(T, T)> = Vec::new();
    let mut pos = 0;
    while pos < items.len() {
        let value = items[pos].0;
        let mut run_end = pos;
        while run_end < items.len() && items[run_end].0 == value {
            run_end += 1;
        }
        let mut touched: BTreeMap<i64, usize> = BTreeMap::new();
        for &(_, bin) in &items[pos..run_end] {
            *touched.entry(bin).or_insert(0) += 1;
        }
        let g_before = above_total;
        let mut point_mass = T::zero();
        let mut delta_same = T::zero();
        let mut delta_within = T::zero();
        for (&bin, &hits) in &touched {
            let g = groups.get_mut(&bin).expect("touched bin exists");
            let before = T::cast(g.above);
            g.above -= hits;
            let after = T::cast(g.above);
            point_mass += g.point_w * T::cast(hits) * nu;
            above_total = above_total - g.point_w * T::cast(hits);
            delta_same += g.point_w * g.point_w * (before * before - after * after);
            delta_within +=
                g.pair_w * (before * (before - T::one()) - after * (after - T::one()));
        }
        let delta_cross = (g_before * g_before - above_total * above_total) - delta_same;
        let pair_mass = ((delta_cross + delta_within) * nu).max(T::zero());
        atoms.push((value, point_mass + pair_mass));
        pos = run_end;
    }
    Ok(Some(WeightedDiscreteDist::new(atoms)?))
}

/// Propensity-discretized squared-coverage set: one shared threshold at the
/// `1 - alpha^2` quantile of the three-part distribution, certifying
/// `E[miscoverage^2] <= alpha^2 + 2 eps`.
pub fn pro_cp2<T: Real>(
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
    let report = GuaranteeReport::squared_coverage("pro-cp2", alpha, epsilon, T::zero());
    // Rebuild the per-index bin vector from the stats memberships.
    let mut bins = vec![0i64; cal.n()];
    for (&k, group) in stats.groups() {
        for &i in group.observed.iter().chain(group.missing.iter()) {
            bins[i] = k;
        }
    }
    let rows: Vec<usize> = (0..cal.n()).collect();
    match pro_cp2_distribution(&bins, cal.mask(), scores, &rows)? {
        None => Ok(PredictionRule::new(BTreeMap::new(), report)),
        Some(dist) => {
            let t = dist.quantile(T::one() - alpha * alpha);
            let thresholds = cal.missing_indices().into_iter().map(|i| (i, t)).collect();
            Ok(PredictionRule::new(thresholds, report))
        }
    }
}

/// Per-block levels distributing the error budget in proportion to each
/// block's missing count: `alpha_l = n0_l n0 alpha / sum_l' (n0_l')^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaAllocation<T> {
    /// Unclamped levels, zero for blocks without missing outcomes.
    pub raw: Vec<T>,
    /// Levels clamped into `[0, 1]`.
    pub levels: Vec<T>,
    /// How many blocks hit the clamp (their budget saturated).
    pub clamped_blocks: usize,
}

pub fn alpha_allocation<T: Real>(
    partition: &IndexPartition,
    mask: &[bool],
    alpha: T,
) -> Result<AlphaAllocation<T>, ConformalError> {
    check_alpha(alpha)?;
    if partition.n() != mask.len() {
        return Err(ConformalError::BadPartition(format!(
            "partition is over {} indices, mask has {}",
            partition.n(),
            mask.len()
        )));
    }
    let counts = partition.missing_counts(mask);
    let n0: usize = counts.iter().sum();
    if n0 == 0 {
        return Err(ConformalError::NoObservedMissing);
    }
    let sum_sq: T = counts.iter().map(|&c| T::cast(c) * T::cast(c)).sum();
    let raw: Vec<T> = counts
        .iter()
        .map(|&c| T::cast(c) * T::cast(n0) * alpha / sum_sq)
        .collect();
    let mut clamped_blocks = 0;
    let levels = raw
        .iter()
        .map(|&a| {
            if a > T::one() {
                clamped_blocks += 1;
                T::one()
            } else {
                a
            }
        })
        .collect();
    Ok(AlphaAllocation {
        raw,
        levels,
        clamped_blocks,
    })
}

/// Partitioned squared-coverage set: block `l` runs the squared constructor
/// on its missing rows plus all observed rows at level `alpha_l` from
/// [`alpha_allocation`].
pub fn pro_cp2_partitioned<T: Real>(
    cal: &MaskedDataset<T>,
    scores: &[T],
    bins: &BinAssignment<T>,
    partition: &IndexPartition,
    alpha: T,
) -> Result<PredictionRule<T>, ConformalError> {
    check_alpha(alpha)?;
    check_scores(scores, cal.mask())?;
    if bins.len() != cal.n() {
        return Err(ConformalError::BinLength {
            got: bins.len(),
            expected: cal.n(),
        });
    }
    if partition.n() != cal.n() {
        return Err(ConformalError::BadPartition(format!(
            "partition is over {} indices, dataset has {}",
            partition.n(),
            cal.n()
        )));
    }
    let epsilon = bins.epsilon().unwrap_or_else(T::zero);
    let report = GuaranteeReport::squared_coverage("pro-cp2 (partitioned)", alpha, epsilon, T::zero());
    if cal.n_missing() == 0 {
        return Ok(PredictionRule::new(BTreeMap::new(), report));
    }
    let allocation = alpha_allocation(partition, cal.mask(), alpha)?;
    let observed = cal.observed_indices();
    let mut thresholds = BTreeMap::new();
    for (block, &level) in partition.blocks().iter().zip(&allocation.levels) {
        let block_missing: Vec<usize> =
            block.iter().copied().filter(|&i| !cal.is_observed(i)).collect();
        if block_missing.is_empty() {
            continue;
        }
        let mut rows = block_missing.clone();
        rows.extend_from_slice(&observed);
        let dist = pro_cp2_distribution(bins.bins(), cal.mask(), scores, &rows)?
            .expect("block has missing rows");
        let t = dist.quantile(T::one() - level * level);
        for i in block_missing {
            thresholds.insert(i, t);
        }
    }
    Ok(PredictionRule::new(thresholds, report))
}
