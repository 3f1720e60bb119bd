//! Finite discrete distributions on the extended real line, with the
//! generalized (inf-CDF) quantile and the total-variation distance.
//!
//! Every prediction-set constructor in this crate reduces to a quantile of
//! such a distribution, so this type is the common denominator: a list of
//! `(value, weight)` atoms where values may include `+inf` and the weights
//! sum to one.

use std::cmp::Ordering;

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("distribution must have at least one atom")]
    Empty,
    #[error("atom value must be a real number or +inf, got {value}")]
    InvalidValue { value: f64 },
    #[error("negative or non-finite weight {weight} at atom value {value}")]
    InvalidWeight { value: f64, weight: f64 },
    #[error("weights sum to {sum}, outside the tolerance around 1")]
    MassNotOne { sum: f64 },
}

/// A finite mixture of point masses on `R ∪ {+inf}`.
///
/// Atoms are stored sorted by value with equal values merged, weights
/// normalized to sum to one; at most one atom sits at `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDiscreteDist<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Real> WeightedDiscreteDist<T> {
    /// Builds a distribution from `(value, weight)` pairs.
    ///
    /// Zero-weight atoms are dropped, equal values merged. The weight sum
    /// must be within the mass tolerance of one; it is then normalized away.
    pub fn new(atoms: impl IntoIterator<Item = (T, T)>) -> Result<Self, DistError> {
        let mut kept: Vec<(T, T)> = Vec::new();
        for (value, weight) in atoms {
            if value.is_nan() || value == T::neg_infinity() {
                return Err(DistError::InvalidValue {
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
            if weight.is_nan() || weight < T::zero() || weight == T::infinity() {
                return Err(DistError::InvalidWeight {
                    value: value.to_f64().unwrap_or(f64::NAN),
                    weight: weight.to_f64().unwrap_or(f64::NAN),
                });
            }
            if weight > T::zero() {
                kept.push((value, weight));
            }
        }
        if kept.is_empty() {
            return Err(DistError::Empty);
        }
        let sum: T = kept.iter().map(|&(_, w)| w).sum();
        if (sum - T::one()).abs() > T::mass_tolerance() {
            return Err(DistError::MassNotOne {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(kept.len());
        for (value, weight) in kept {
            match merged.last_mut() {
                Some(last) if last.0 == value => last.1 += weight,
                _ => merged.push((value, weight)),
            }
        }
        for atom in &mut merged {
            atom.1 /= sum;
        }
        Ok(Self { atoms: merged })
    }

    /// The distribution concentrated at a single value.
    pub fn point_mass(value: T) -> Result<Self, DistError> {
        Self::new([(value, T::one())])
    }

    /// Atoms sorted by value, weights summing to one.
    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    /// Probability mass at `+inf`.
    pub fn mass_at_infinity(&self) -> T {
        match self.atoms.last() {
            Some(&(v, w)) if v == T::infinity() => w,
            _ => T::zero(),
        }
    }

    /// `P(X <= t)`.
    pub fn cdf(&self, t: T) -> T {
        self.atoms
            .iter()
            .take_while(|&&(v, _)| v <= t)
            .map(|&(_, w)| w)
            .sum()
    }

    /// The generalized quantile `inf { t : P(X <= t) >= level }`.
    ///
    /// Levels at or below zero give `-inf`. A level above the total finite
    /// mass gives `+inf` when an infinite atom exists; otherwise the largest
    /// atom for levels up to one, and `+inf` beyond.
    pub fn quantile(&self, level: T) -> T {
        if level <= T::zero() {
            return T::neg_infinity();
        }
        let mut cum = T::zero();
        let mut last_finite = None;
        for &(v, w) in &self.atoms {
            if v == T::infinity() {
                return T::infinity();
            }
            cum += w;
            if cum >= level {
                return v;
            }
            last_finite = Some(v);
        }
        match last_finite {
            Some(v) if level <= T::one() => v,
            _ => T::infinity(),
        }
    }
}

/// The generalized `level`-quantile of `dist`. See
/// [`WeightedDiscreteDist::quantile`].
pub fn weighted_quantile<T: Real>(dist: &WeightedDiscreteDist<T>, level: T) -> T {
    dist.quantile(level)
}

/// Total-variation distance `sup_D |p(D) - q(D)| = (1/2) sum_v |p(v) - q(v)|`
/// over the union of the two supports.
pub fn tv_distance<T: Real>(p: &WeightedDiscreteDist<T>, q: &WeightedDiscreteDist<T>) -> T {
    let (pa, qa) = (p.atoms(), q.atoms());
    let (mut i, mut j) = (0, 0);
    let mut acc = T::zero();
    while i < pa.len() && j < qa.len() {
        match pa[i].0.partial_cmp(&qa[j].0).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {
                acc += (pa[i].1 - qa[j].1).abs();
                i += 1;
                j += 1;
            }
            Ordering::Less => {
                acc += pa[i].1;
                i += 1;
            }
            Ordering::Greater => {
                acc += qa[j].1;
                j += 1;
            }
        }
    }
    acc += pa[i..].iter().map(|&(_, w)| w).sum::<T>();
    acc += qa[j..].iter().map(|&(_, w)| w).sum::<T>();
    acc / T::cast(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(atoms: &[(f64, f64)]) -> WeightedDiscreteDist<f64> {
        WeightedDiscreteDist::new(atoms.iter().copied()).unwrap()
    }

    #[test]
    fn quantile_two_even_atoms() {
        let d = dist(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(d.quantile(0.5), 1.0);
    }

    #[test]
    fn quantile_hits_infinity_when_finite_mass_runs_out() {
        let d = dist(&[(3.0, 0.7), (f64::INFINITY, 0.3)]);
        assert_eq!(d.quantile(0.8), f64::INFINITY);
        assert_eq!(d.quantile(0.7), 3.0);
    }

    #[test]
    fn quantile_three_thirds() {
        // Hand-enumerated CDF: 1/3, 2/3, 1 at values 1, 2, 3.
        let third = 1.0 / 3.0;
        let d = dist(&[(1.0, third), (2.0, third), (3.0, third)]);
        assert_eq!(d.quantile(0.9), 3.0);
        assert_eq!(d.quantile(third), 1.0);
    }

    #[test]
    fn quantile_boundary_levels() {
        let d = dist(&[(1.0, 1.0)]);
        assert_eq!(d.quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(d.quantile(-2.0), f64::NEG_INFINITY);
        assert_eq!(d.quantile(1.0), 1.0);
        assert_eq!(d.quantile(1.5), f64::INFINITY);
    }

    #[test]
    fn duplicate_values_merge_and_normalize() {
        let d = dist(&[(2.0, 0.25), (2.0, 0.25), (1.0, 0.5)]);
        assert_eq!(d.atoms(), &[(1.0, 0.5), (2.0, 0.5)]);
        let d = dist(&[(f64::INFINITY, 0.5), (f64::INFINITY, 0.5)]);
        assert_eq!(d.atoms().len(), 1);
    }

    #[test]
    fn rejects_bad_mass_and_values() {
        assert!(matches!(
            WeightedDiscreteDist::new([(1.0, 0.5)]),
            Err(DistError::MassNotOne { .. })
        ));
        assert!(matches!(
            WeightedDiscreteDist::new([(f64::NEG_INFINITY, 1.0)]),
            Err(DistError::InvalidValue { .. })
        ));
        assert!(matches!(
            WeightedDiscreteDist::new([(1.0, -0.1), (2.0, 1.1)]),
            Err(DistError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(tv_distance(&p, &p), 0.0);
        let d0 = dist(&[(0.0, 1.0)]);
        let d1 = dist(&[(1.0, 1.0)]);
        assert_eq!(tv_distance(&d0, &d1), 1.0);
        let q = dist(&[(0.0, 0.8), (1.0, 0.2)]);
        assert!((tv_distance(&p, &q) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn works_for_f32() {
        let d =
            WeightedDiscreteDist::<f32>::new([(1.0f32, 0.25), (2.0, 0.25), (3.0, 0.5)]).unwrap();
        assert_eq!(d.quantile(0.5f32), 2.0f32);
    }
}
