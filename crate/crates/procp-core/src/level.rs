use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("alpha must lie in (0,1), got {0}")]
    Alpha(f64),
    #[error("epsilon must be finite and >= 0, got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0,1), got {0}")]
    Delta(f64),
}

/// Validated error budget: miscoverage level `alpha`, discretization level
/// `epsilon`, and PAC failure probability `delta`.
///
/// Effective guarantee levels are derived on demand, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level<T> {
    alpha: T,
    epsilon: T,
    delta: T,
}

impl<T: Real> Level<T> {
    pub fn new(alpha: T, epsilon: T, delta: T) -> Result<Self, LevelError> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(LevelError::Alpha(alpha.to_f64().unwrap_or(f64::NAN)));
        }
        if !(epsilon >= T::zero() && epsilon.is_finite()) {
            return Err(LevelError::Epsilon(epsilon.to_f64().unwrap_or(f64::NAN)));
        }
        if !(delta > T::zero() && delta < T::one()) {
            return Err(LevelError::Delta(delta.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self {
            alpha,
            epsilon,
            delta,
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Certified mean-coverage level of the discretized constructor,
    /// `1 - alpha - epsilon`.
    pub fn mean_coverage_level(&self) -> T {
        T::one() - self.alpha - self.epsilon
    }

    /// Certified bound on the squared miscoverage proportion,
    /// `alpha^2 + 2 epsilon`.
    pub fn squared_coverage_bound(&self) -> T {
        self.alpha * self.alpha + T::cast(2.0) * self.epsilon
    }

    /// PAC success probability `1 - delta`.
    pub fn pac_level(&self) -> T {
        T::one() - self.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_levels() {
        let level = Level::<f64>::new(0.2, 0.1, 0.05).unwrap();
        assert!((level.mean_coverage_level() - 0.7).abs() < 1e-15);
        assert!((level.squared_coverage_bound() - 0.24).abs() < 1e-15);
        assert!((level.pac_level() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn bounds_enforced() {
        assert!(Level::<f64>::new(0.0, 0.1, 0.5).is_err());
        assert!(Level::new(1.0, 0.1, 0.5).is_err());
        assert!(Level::new(0.2, -0.1, 0.5).is_err());
        assert!(Level::new(0.2, 0.1, 0.0).is_err());
        assert!(Level::new(0.2, 0.0, 0.5).is_ok());
    }
}
