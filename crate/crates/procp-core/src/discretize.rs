//! Propensity-score discretization onto the geometric odds grid
//! `z_k = (1+eps)^k`, plus identity binning for genuinely discrete
//! features, and the per-bin counting statistics the set constructors
//! consume.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::MaskedDataset;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum DiscretizeError {
    #[error("epsilon must be finite and > 0, got {0}")]
    BadEpsilon(f64),
    #[error("propensity {value} at index {index} is outside (0, 1); clamp upstream")]
    PropensityOutOfRange { index: usize, value: f64 },
    #[error("mask has length {got}, bin assignment has length {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Per-point bin indices. For propensity bins the index is the integer `k`
/// with `(1+eps)^k <= odds < (1+eps)^(k+1)`; for discrete-feature bins it is
/// a first-occurrence id and `epsilon` is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAssignment<T> {
    epsilon: Option<T>,
    bins: Vec<i64>,
}

impl<T: Real> BinAssignment<T> {
    pub fn epsilon(&self) -> Option<T> {
        self.epsilon
    }

    pub fn bins(&self) -> &[i64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Number of occupied bins.
    pub fn n_distinct(&self) -> usize {
        let mut seen: Vec<i64> = self.bins.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Assigns each propensity to its geometric odds bin: the unique `k` with
/// `(1+eps)^k <= p/(1-p) < (1+eps)^(k+1)`.
///
/// The index is computed as the floor of the log-odds ratio and then
/// corrected against the exact inequality with a neighbor check, so odds
/// exactly on a grid point land in the right half-open cell.
pub fn assign_bins<T: Real>(
    propensities: &[T],
    epsilon: T,
) -> Result<BinAssignment<T>, DiscretizeError> {
    if !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(DiscretizeError::BadEpsilon(
            epsilon.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let base = T::one() + epsilon;
    let log_base = epsilon.ln_1p();
    // Left edge of cell k, mapped into propensity space: the comparison in
    // p-space keeps grid points that round-trip exactly (like odds 1/(1+eps)
    // arising from p = 1/(2+eps)) on the correct side of the boundary.
    let edge = |k: i64| {
        let z = base.powi(k as i32);
        z / (T::one() + z)
    };
    let mut bins = Vec::with_capacity(propensities.len());
    for (index, &p) in propensities.iter().enumerate() {
        if !(p > T::zero() && p < T::one()) {
            return Err(DiscretizeError::PropensityOutOfRange {
                index,
                value: p.to_f64().unwrap_or(f64::NAN),
            });
        }
        let odds = p / (T::one() - p);
        let mut k = (odds.ln() / log_base).floor().to_i64().unwrap_or(0);
        // The log floor is within an ulp or two of the truth; one bounded
        // neighbor check settles the half-open boundary.
        for _ in 0..3 {
            if p < edge(k) {
                k -= 1;
            } else {
                break;
            }
        }
        for _ in 0..3 {
            if p >= edge(k + 1) {
                k += 1;
            } else {
                break;
            }
        }
        bins.push(k);
    }
    Ok(BinAssignment {
        epsilon: Some(epsilon),
        bins,
    })
}

/// Bins rows by exact feature-vector equality, with stable ids in order of
/// first occurrence.
pub fn discrete_feature_bins<T: Real>(dataset: &MaskedDataset<T>) -> BinAssignment<T> {
    let n = dataset.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_rows(dataset.feature_row(a), dataset.feature_row(b)));
    // Provisional group per sorted run, then relabel by first occurrence.
    let mut group = vec![0usize; n];
    let mut first_seen: Vec<usize> = Vec::new();
    let mut gid = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 {
            let prev = order[pos - 1];
            if cmp_rows(dataset.feature_row(prev), dataset.feature_row(i)) != Ordering::Equal {
                gid += 1;
            }
        }
        if gid == first_seen.len() {
            first_seen.push(i);
        } else {
            first_seen[gid] = first_seen[gid].min(i);
        }
        group[i] = gid;
    }
    let mut label_order: Vec<usize> = (0..first_seen.len()).collect();
    label_order.sort_by_key(|&g| first_seen[g]);
    let mut label = vec![0i64; first_seen.len()];
    for (rank, &g) in label_order.iter().enumerate() {
        label[g] = rank as i64;
    }
    BinAssignment {
        epsilon: None,
        bins: (0..n).map(|i| label[group[i]]).collect(),
    }
}

fn cmp_rows<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    Ordering::Equal
}

/// Member indices of one bin, split by missingness.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinGroup {
    pub observed: Vec<usize>,
    pub missing: Vec<usize>,
}

impl BinGroup {
    pub fn n(&self) -> usize {
        self.observed.len() + self.missing.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn n_missing(&self) -> usize {
        self.missing.len()
    }
}

/// Per-bin counts and memberships, plus the global totals.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats<T> {
    epsilon: Option<T>,
    groups: BTreeMap<i64, BinGroup>,
    n: usize,
}

impl<T: Real> BinStats<T> {
    pub fn epsilon(&self) -> Option<T> {
        self.epsilon
    }

    pub fn groups(&self) -> &BTreeMap<i64, BinGroup> {
        &self.groups
    }

    /// Number of occupied bins.
    pub fn n_bins(&self) -> usize {
        self.groups.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_missing(&self) -> usize {
        self.groups.values().map(BinGroup::n_missing).sum()
    }

    pub fn n_observed(&self) -> usize {
        self.groups.values().map(BinGroup::n_observed).sum()
    }
}

/// Counts bin memberships against a missingness mask.
pub fn bin_stats<T: Real>(
    assignment: &BinAssignment<T>,
    mask: &[bool],
) -> Result<BinStats<T>, DiscretizeError> {
    if mask.len() != assignment.len() {
        return Err(DiscretizeError::LengthMismatch {
            got: mask.len(),
            expected: assignment.len(),
        });
    }
    let mut groups: BTreeMap<i64, BinGroup> = BTreeMap::new();
    for (i, (&bin, &observed)) in assignment.bins().iter().zip(mask).enumerate() {
        let g = groups.entry(bin).or_default();
        if observed {
            g.observed.push(i);
        } else {
            g.missing.push(i);
        }
    }
    Ok(BinStats {
        epsilon: assignment.epsilon(),
        groups,
        n: assignment.len(),
    })
}
