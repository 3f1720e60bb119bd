//! Propensity scores `x -> P(observed | X = x)`: known closed forms,
//! a logistic fit via iteratively reweighted least squares, and a
//! Nadaraya-Watson kernel estimate with validation-split bandwidth
//! selection. Evaluations are clamped into `[eta, 1 - eta]` so odds and bin
//! indices stay finite.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::dataset::MaskedDataset;
use crate::linalg::solve_spd;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("clamp eta must lie in (0, 0.5), got {0}")]
    BadClamp(f64),
    #[error("training mask contains a single class; cannot fit")]
    SingleClass,
    #[error("apparent perfect separation (coefficient {coefficient} exceeded 1e3); clamp the design or use the kernel estimator")]
    PerfectSeparation { coefficient: usize },
    #[error("weighted design is ill-conditioned at column {column}")]
    IllConditioned { column: usize },
    #[error("bandwidth grid must be nonempty with positive entries")]
    BadBandwidthGrid,
    #[error("feature vector has {got} entries, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("no evaluation points supplied")]
    EmptyEvaluation,
    #[error("could not parse propensity model: {0}")]
    Parse(String),
}

const DEFAULT_CLAMP: f64 = 1e-3;
const SEPARATION_BOUND: f64 = 1e3;

enum Kind<T> {
    Known(Arc<dyn Fn(&[T]) -> T + Send + Sync>),
    Logistic {
        intercept: T,
        coefficients: Vec<T>,
        converged: bool,
        iterations: usize,
    },
    Kernel {
        features: Vec<T>,
        n: usize,
        dim: usize,
        mask: Vec<bool>,
        bandwidth: T,
        fallback: T,
        underflows: AtomicUsize,
    },
}

impl<T: Clone> Clone for Kind<T> {
    fn clone(&self) -> Self {
        match self {
            Kind::Known(f) => Kind::Known(f.clone()),
            Kind::Logistic {
                intercept,
                coefficients,
                converged,
                iterations,
            } => Kind::Logistic {
                intercept: intercept.clone(),
                coefficients: coefficients.clone(),
                converged: *converged,
                iterations: *iterations,
            },
            Kind::Kernel {
                features,
                n,
                dim,
                mask,
                bandwidth,
                fallback,
                underflows,
            } => Kind::Kernel {
                features: features.clone(),
                n: *n,
                dim: *dim,
                mask: mask.clone(),
                bandwidth: bandwidth.clone(),
                fallback: fallback.clone(),
                underflows: AtomicUsize::new(underflows.load(Ordering::Relaxed)),
            },
        }
    }
}

impl<T> std::fmt::Debug for Kind<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Known(_) => f.write_str("Known(<closure>)"),
            Kind::Logistic {
                intercept,
                coefficients,
                converged,
                iterations,
            } => f
                .debug_struct("Logistic")
                .field("intercept", intercept)
                .field("coefficients", coefficients)
                .field("converged", converged)
                .field("iterations", iterations)
                .finish(),
            Kind::Kernel { bandwidth, n, .. } => f
                .debug_struct("Kernel")
                .field("bandwidth", bandwidth)
                .field("n", n)
                .finish(),
        }
    }
}

/// A propensity model with a clamp keeping evaluations inside `(0, 1)`.
#[derive(Debug, Clone)]
pub struct PropensityModel<T> {
    kind: Kind<T>,
    clamp: T,
}

impl<T: Real> PropensityModel<T> {
    /// Wraps a known closed-form propensity function.
    pub fn known(f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self {
            kind: Kind::Known(Arc::new(f)),
            clamp: T::cast(DEFAULT_CLAMP),
        }
    }

    /// Replaces the clamp level; `eta` must lie in `(0, 0.5)`.
    pub fn with_clamp(mut self, eta: T) -> Result<Self, PropensityError> {
        if !(eta > T::zero() && eta < T::cast(0.5)) {
            return Err(PropensityError::BadClamp(eta.to_f64().unwrap_or(f64::NAN)));
        }
        self.clamp = eta;
        Ok(self)
    }

    pub fn clamp(&self) -> T {
        self.clamp
    }

    /// Clamped probability that the outcome at `x` is observed.
    pub fn prob(&self, x: &[T]) -> T {
        let raw = match &self.kind {
            Kind::Known(f) => f(x),
            Kind::Logistic {
                intercept,
                coefficients,
                ..
            } => {
                let mut eta = *intercept;
                for (&c, &v) in coefficients.iter().zip(x) {
                    eta = eta + c * v;
                }
                sigmoid(eta)
            }
            Kind::Kernel {
                features,
                n,
                dim,
                mask,
                bandwidth,
                fallback,
                underflows,
            } => {
                let mut num = T::zero();
                let mut den = T::zero();
                for i in 0..*n {
                    let row = &features[i * dim..(i + 1) * dim];
                    let mut d2 = T::zero();
                    for (&a, &b) in row.iter().zip(x) {
                        let diff = a - b;
                        d2 = d2 + diff * diff;
                    }
                    let w = (-d2 / (T::cast(2.0) * *bandwidth * *bandwidth)).exp();
                    den += w;
                    if mask[i] {
                        num += w;
                    }
                }
                if den > T::zero() {
                    num / den
                } else {
                    underflows.fetch_add(1, Ordering::Relaxed);
                    *fallback
                }
            }
        };
        raw.max(self.clamp).min(T::one() - self.clamp)
    }

    /// Clamped odds `p / (1 - p)`.
    pub fn odds(&self, x: &[T]) -> T {
        let p = self.prob(x);
        p / (T::one() - p)
    }

    /// Number of kernel evaluations that fell back to the training mask
    /// mean because every kernel weight underflowed.
    pub fn underflow_fallbacks(&self) -> usize {
        match &self.kind {
            Kind::Kernel { underflows, .. } => underflows.load(Ordering::Relaxed),
            _ => 0,
        }
    }

    /// Logistic coefficients `(intercept, slopes, converged, iterations)`.
    pub fn logistic_parts(&self) -> Option<(T, &[T], bool, usize)> {
        match &self.kind {
            Kind::Logistic {
                intercept,
                coefficients,
                converged,
                iterations,
            } => Some((*intercept, coefficients, *converged, *iterations)),
            _ => None,
        }
    }

    /// Selected kernel bandwidth.
    pub fn kernel_bandwidth(&self) -> Option<T> {
        match &self.kind {
            Kind::Kernel { bandwidth, .. } => Some(*bandwidth),
            _ => None,
        }
    }

    /// Key=value text record for CLI reuse (logistic and kernel kinds).
    pub fn to_text(&self) -> String {
        match &self.kind {
            Kind::Known(_) => "model=known\n".to_string(),
            Kind::Logistic {
                intercept,
                coefficients,
                converged,
                iterations,
            } => {
                let coeffs: Vec<String> = coefficients
                    .iter()
                    .map(|c| format!("{:?}", c.to_f64().unwrap_or(f64::NAN)))
                    .collect();
                format!(
                    "model=logistic\nintercept={:?}\ncoefficients={}\nconverged={}\niterations={}\nclamp={:?}\n",
                    intercept.to_f64().unwrap_or(f64::NAN),
                    coeffs.join(","),
                    converged,
                    iterations,
                    self.clamp.to_f64().unwrap_or(f64::NAN),
                )
            }
            Kind::Kernel { bandwidth, .. } => format!(
                "model=kernel\nbandwidth={:?}\nclamp={:?}\n",
                bandwidth.to_f64().unwrap_or(f64::NAN),
                self.clamp.to_f64().unwrap_or(f64::NAN),
            ),
        }
    }
}

fn worst_coefficient<T: Real>(beta: &[T]) -> usize {
    let mut worst = 0;
    for (j, b) in beta.iter().enumerate() {
        if b.abs() > beta[worst].abs() {
            worst = j;
        }
    }
    worst
}

fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// Maximum-likelihood logistic regression of the missingness indicator on
/// features, via iteratively reweighted least squares.
pub fn fit_logistic<T: Real>(
    train: &MaskedDataset<T>,
    max_iter: usize,
    tol: T,
) -> Result<PropensityModel<T>, PropensityError> {
    let n = train.n();
    let n1 = train.n_observed();
    if n1 == 0 || n1 == n {
        return Err(PropensityError::SingleClass);
    }
    let d = train.dim();
    let p = d + 1;
    let mut beta = vec![T::zero(); p];
    let mut converged = false;
    let mut iterations = 0;
    let w_floor = T::cast(1e-10);
    for iter in 1..=max_iter {
        iterations = iter;
        let mut gram = vec![T::zero(); p * p];
        let mut grad = vec![T::zero(); p];
        let mut max_resid = T::zero();
        for i in 0..n {
            let x = train.feature_row(i);
            let mut eta = beta[0];
            for (j, &v) in x.iter().enumerate() {
                eta = eta + beta[j + 1] * v;
            }
            let mu = sigmoid(eta);
            let w = (mu * (T::one() - mu)).max(w_floor);
            let a = if train.is_observed(i) {
                T::one()
            } else {
                T::zero()
            };
            let resid = a - mu;
            max_resid = max_resid.max(resid.abs());
            let mut row = Vec::with_capacity(p);
            row.push(T::one());
            row.extend_from_slice(x);
            for r in 0..p {
                grad[r] += row[r] * resid;
                for c in 0..p {
                    gram[r * p + c] += row[r] * row[c] * w;
                }
            }
        }
        // Every fitted probability within 1e-6 of its label means the data
        // are separated and the coefficients are diverging.
        if iter > 1 && max_resid < T::cast(1e-6) {
            let worst = worst_coefficient(&beta);
            return Err(PropensityError::PerfectSeparation { coefficient: worst });
        }
        let step =
            solve_spd(&gram, &grad, p).map_err(|column| PropensityError::IllConditioned { column })?;
        let mut max_change = T::zero();
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += *s;
            max_change = max_change.max(s.abs());
        }
        if beta.iter().any(|b| b.abs() > T::cast(SEPARATION_BOUND)) {
            let worst = worst_coefficient(&beta);
            return Err(PropensityError::PerfectSeparation { coefficient: worst });
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(PropensityModel {
        kind: Kind::Logistic {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
            converged,
            iterations,
        },
        clamp: T::cast(DEFAULT_CLAMP),
    })
}

/// Default bandwidth grid: 20 log-spaced values spanning
/// `[0.05, 5] x (mean per-column standard deviation)`.
pub fn default_bandwidth_grid<T: Real>(train: &MaskedDataset<T>) -> Vec<T> {
    let n = T::cast(train.n());
    let mut sd_sum = T::zero();
    for j in 0..train.dim() {
        let mut mean = T::zero();
        for i in 0..train.n() {
            mean += train.feature_row(i)[j];
        }
        mean /= n;
        let mut var = T::zero();
        for i in 0..train.n() {
            let c = train.feature_row(i)[j] - mean;
            var += c * c;
        }
        sd_sum += (var / n).sqrt();
    }
    let scale = (sd_sum / T::cast(train.dim())).max(T::cast(1e-12));
    let lo = (T::cast(0.05) * scale).ln();
    let hi = (T::cast(5.0) * scale).ln();
    (0..20)
        .map(|i| (lo + (hi - lo) * T::cast(i) / T::cast(19.0)).exp())
        .collect()
}

/// Nadaraya-Watson propensity estimate with a Gaussian kernel.
///
/// The bandwidth is chosen by splitting the training rows in half, fitting
/// on the first half, and minimizing the squared error of predicting the
/// mask on the second half; the returned model then uses the full training
/// set at the selected bandwidth.
pub fn fit_kernel<T: Real>(
    train: &MaskedDataset<T>,
    bandwidth_grid: &[T],
) -> Result<PropensityModel<T>, PropensityError> {
    if bandwidth_grid.is_empty() || bandwidth_grid.iter().any(|&h| !(h > T::zero())) {
        return Err(PropensityError::BadBandwidthGrid);
    }
    let n = train.n();
    let bandwidth = if n < 4 {
        bandwidth_grid[bandwidth_grid.len() / 2]
    } else {
        let split = n / 2;
        let fit_rows: Vec<usize> = (0..split).collect();
        let val_rows: Vec<usize> = (split..n).collect();
        let fit_mean = mask_mean(train, &fit_rows);
        let mut best = (T::infinity(), bandwidth_grid[0]);
        for &h in bandwidth_grid {
            let mut err = T::zero();
            for &i in &val_rows {
                let pred = nw_predict(train, &fit_rows, h, train.feature_row(i), fit_mean);
                let a = if train.is_observed(i) {
                    T::one()
                } else {
                    T::zero()
                };
                let r = a - pred;
                err += r * r;
            }
            if err < best.0 {
                best = (err, h);
            }
        }
        best.1
    };
    let all: Vec<usize> = (0..n).collect();
    let fallback = mask_mean(train, &all);
    let mut features = Vec::with_capacity(n * train.dim());
    for i in 0..n {
        features.extend_from_slice(train.feature_row(i));
    }
    Ok(PropensityModel {
        kind: Kind::Kernel {
            features,
            n,
            dim: train.dim(),
            mask: train.mask().to_vec(),
            bandwidth,
            fallback,
            underflows: AtomicUsize::new(0),
        },
        clamp: T::cast(DEFAULT_CLAMP),
    })
}

fn mask_mean<T: Real>(train: &MaskedDataset<T>, rows: &[usize]) -> T {
    let observed = rows.iter().filter(|&&i| train.is_observed(i)).count();
    T::cast(observed) / T::cast(rows.len().max(1))
}

fn nw_predict<T: Real>(
    train: &MaskedDataset<T>,
    rows: &[usize],
    h: T,
    x: &[T],
    fallback: T,
) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for &i in rows {
        let row = train.feature_row(i);
        let mut d2 = T::zero();
        for (&a, &b) in row.iter().zip(x) {
            let diff = a - b;
            d2 = d2 + diff * diff;
        }
        let w = (-d2 / (T::cast(2.0) * h * h)).exp();
        den += w;
        if train.is_observed(i) {
            num += w;
        }
    }
    if den > T::zero() {
        num / den
    } else {
        fallback
    }
}

/// Accuracy diagnostic for an estimated propensity: the sample maximum of
/// the absolute log odds ratio against the truth, and the induced coverage
/// slack `delta = e^(2 max) - 1`.
///
/// The maximum is over the supplied points only, hence a lower bound on the
/// population sup-norm; the implied guarantee is approximate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddsDiagnostic<T> {
    max_abs_log_f: T,
    delta_hat: T,
}

impl<T: Real> OddsDiagnostic<T> {
    pub fn from_max_abs_log_f(max_abs_log_f: T) -> Self {
        Self {
            max_abs_log_f,
            delta_hat: (T::cast(2.0) * max_abs_log_f).exp() - T::one(),
        }
    }

    pub fn max_abs_log_f(&self) -> T {
        self.max_abs_log_f
    }

    pub fn delta_hat(&self) -> T {
        self.delta_hat
    }
}

/// Evaluates the odds-ratio diagnostic of `estimate` against `truth` over
/// the given feature vectors.
pub fn odds_diagnostic<'a, T: Real + 'a>(
    truth: &PropensityModel<T>,
    estimate: &PropensityModel<T>,
    points: impl IntoIterator<Item = &'a [T]>,
) -> Result<OddsDiagnostic<T>, PropensityError> {
    let mut max_abs = None;
    for x in points {
        let log_f = (truth.odds(x) / estimate.odds(x)).ln();
        let abs = log_f.abs();
        max_abs = Some(max_abs.map_or(abs, |m: T| m.max(abs)));
    }
    let max_abs = max_abs.ok_or(PropensityError::EmptyEvaluation)?;
    Ok(OddsDiagnostic::from_max_abs_log_f(max_abs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(points: &[(f64, bool)]) -> MaskedDataset<f64> {
        MaskedDataset::from_rows(
            points.iter().map(|&(x, _)| vec![x]).collect(),
            points.iter().map(|&(_, a)| a).collect(),
            points
                .iter()
                .map(|&(_, a)| if a { Some(0.0) } else { None })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn known_model_clamps() {
        let model = PropensityModel::known(|_: &[f64]| 2.0);
        assert_eq!(model.prob(&[0.0]), 1.0 - 1e-3);
        let model = model.with_clamp(0.1).unwrap();
        assert_eq!(model.prob(&[0.0]), 0.9);
        assert!(PropensityModel::known(|_: &[f64]| 0.5)
            .with_clamp(0.5)
            .is_err());
    }

    #[test]
    fn logistic_balanced_independent_labels() {
        // Mask alternates independently of x; coefficients should be ~0.
        let pts: Vec<(f64, bool)> = (0..400)
            .map(|i| ((i / 2 % 20) as f64 * 0.5, i % 2 == 0))
            .collect();
        let model = fit_logistic(&ds(&pts), 50, 1e-10).unwrap();
        let (intercept, coeffs, converged, _) = model.logistic_parts().unwrap();
        assert!(converged);
        assert!(intercept.abs() < 1e-6);
        assert!(coeffs[0].abs() < 1e-6);
        assert!((model.prob(&[3.0]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn logistic_single_class_errors() {
        let pts: Vec<(f64, bool)> = (0..10).map(|i| (i as f64, true)).collect();
        assert!(matches!(
            fit_logistic(&ds(&pts), 25, 1e-8),
            Err(PropensityError::SingleClass)
        ));
    }

    #[test]
    fn logistic_separation_detected() {
        let pts: Vec<(f64, bool)> = (0..40).map(|i| (i as f64, i >= 20)).collect();
        assert!(matches!(
            fit_logistic(&ds(&pts), 200, 1e-12),
            Err(PropensityError::PerfectSeparation { .. })
        ));
    }

    #[test]
    fn kernel_constant_mask() {
        let pts: Vec<(f64, bool)> = (0..10).map(|i| (i as f64, true)).collect();
        let model = fit_kernel(&ds(&pts), &[0.5, 1.0]).unwrap();
        assert_eq!(model.prob(&[4.2]), 1.0 - 1e-3);
    }

    #[test]
    fn kernel_single_point() {
        let model = fit_kernel(&ds(&[(0.0, true)]), &[0.3, 0.5, 1.0]).unwrap();
        assert_eq!(model.prob(&[0.0]), 1.0 - 1e-3);
    }

    #[test]
    fn kernel_two_point_hand_value() {
        // Weights at x=0: K(0)=1 for the a=1 point, K(1)=e^{-2} for a=0,
        // with h = 0.5.
        let model = fit_kernel(&ds(&[(0.0, true), (1.0, false)]), &[0.5]).unwrap();
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((model.prob(&[0.0]) - expect).abs() < 1e-12);
    }

    #[test]
    fn kernel_underflow_falls_back_to_mask_mean() {
        let model = fit_kernel(&ds(&[(0.0, true), (0.1, false)]), &[1e-3]).unwrap();
        let p = model.prob(&[1e9]);
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(model.underflow_fallbacks(), 1);
    }

    #[test]
    fn kernel_interpolates_at_training_points_for_tiny_bandwidth() {
        let pts =
            [(0.0, true), (1.0, false), (2.0, true), (3.5, false)];
        let model = fit_kernel(&ds(&pts), &[1e-6]).unwrap();
        for &(x, a) in &pts {
            let want = if a { 1.0 - 1e-3 } else { 1e-3 };
            assert!((model.prob(&[x]) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn diagnostic_examples() {
        let truth = PropensityModel::known(|_: &[f64]| 0.5);
        let same = PropensityModel::known(|_: &[f64]| 0.5);
        let d = odds_diagnostic(&truth, &same, [[0.0f64].as_slice()]).unwrap();
        assert_eq!(d.delta_hat(), 0.0);

        let est = PropensityModel::known(|_: &[f64]| 0.6);
        let d = odds_diagnostic(&truth, &est, [[0.0f64].as_slice()]).unwrap();
        assert!((d.max_abs_log_f() - 1.5f64.ln()).abs() < 1e-12);

        let d = OddsDiagnostic::from_max_abs_log_f(0.1f64);
        assert_eq!(d.delta_hat(), (0.2f64).exp() - 1.0);
        assert!((d.delta_hat() - 0.2214).abs() < 1e-4);
    }

    #[test]
    fn diagnostic_needs_points() {
        let truth = PropensityModel::known(|_: &[f64]| 0.5);
        let est = PropensityModel::known(|_: &[f64]| 0.5);
        let empty: [&[f64]; 0] = [];
        assert!(matches!(
            odds_diagnostic(&truth, &est, empty),
            Err(PropensityError::EmptyEvaluation)
        ));
    }
}
