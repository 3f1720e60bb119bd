//! Score functions fit on a training split held apart from calibration:
//! an ordinary least-squares mean fit and the absolute-residual score
//! `s(x, y) = |y - mean(x)|`, behind a small pluggable interface.

use thiserror::Error;

use crate::dataset::MaskedDataset;
use crate::linalg::solve_spd;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("need at least {needed} observed rows to fit {dim} coefficients, got {got}")]
    TooFewObserved {
        needed: usize,
        got: usize,
        dim: usize,
    },
    #[error("rank-deficient design: column {column} carries no independent information")]
    RankDeficient { column: ColumnRef },
    #[error("feature vector has {got} entries, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("scores for this model come from a user-supplied table; {action}")]
    NotEvaluable { action: &'static str },
    #[error("could not parse mean model: {0}")]
    Parse(String),
}

/// Which design column a rank report points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRef {
    Intercept,
    Feature(usize),
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Intercept => write!(f, "intercept"),
            ColumnRef::Feature(j) => write!(f, "feature {j}"),
        }
    }
}

/// Fitted linear mean function `x -> intercept + coefficients . x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel<T> {
    intercept: T,
    coefficients: Vec<T>,
    ridge: Option<T>,
}

impl<T: Real> MeanModel<T> {
    pub fn new(intercept: T, coefficients: Vec<T>) -> Self {
        Self {
            intercept,
            coefficients,
            ridge: None,
        }
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// Ridge penalty applied during fitting, if the design was near-singular.
    pub fn ridge_penalty(&self) -> Option<T> {
        self.ridge
    }

    pub fn predict(&self, x: &[T]) -> Result<T, ScoreError> {
        if x.len() != self.coefficients.len() {
            return Err(ScoreError::DimensionMismatch {
                got: x.len(),
                expected: self.coefficients.len(),
            });
        }
        let mut acc = self.intercept;
        for (&c, &v) in self.coefficients.iter().zip(x) {
            acc = acc + c * v;
        }
        Ok(acc)
    }

    /// Key=value text record for CLI round-trips.
    pub fn to_text(&self) -> String {
        let coeffs: Vec<String> = self
            .coefficients
            .iter()
            .map(|c| format!("{:?}", c.to_f64().unwrap_or(f64::NAN)))
            .collect();
        let mut out = format!(
            "model=mean-lsq\nintercept={:?}\ncoefficients={}\n",
            self.intercept.to_f64().unwrap_or(f64::NAN),
            coeffs.join(",")
        );
        if let Some(r) = self.ridge {
            out.push_str(&format!("ridge={:?}\n", r.to_f64().unwrap_or(f64::NAN)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScoreError> {
        let mut intercept = None;
        let mut coefficients = None;
        let mut ridge = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ScoreError::Parse(format!("expected key=value, got '{line}'")))?;
            match key {
                "model" => {
                    if value != "mean-lsq" {
                        return Err(ScoreError::Parse(format!("unknown model kind '{value}'")));
                    }
                }
                "intercept" => {
                    intercept = Some(parse_real::<T>(value)?);
                }
                "coefficients" => {
                    let parsed: Result<Vec<T>, _> =
                        value.split(',').map(|v| parse_real::<T>(v.trim())).collect();
                    coefficients = Some(parsed?);
                }
                "ridge" => ridge = Some(parse_real::<T>(value)?),
                other => return Err(ScoreError::Parse(format!("unknown key '{other}'"))),
            }
        }
        let mut model = MeanModel::new(
            intercept.ok_or_else(|| ScoreError::Parse("missing intercept".into()))?,
            coefficients.ok_or_else(|| ScoreError::Parse("missing coefficients".into()))?,
        );
        model.ridge = ridge;
        Ok(model)
    }
}

fn parse_real<T: Real>(s: &str) -> Result<T, ScoreError> {
    s.parse::<f64>()
        .map(T::cast)
        .map_err(|e| ScoreError::Parse(format!("bad number '{s}': {e}")))
}

/// Nonconformity score: either the built-in absolute residual around a
/// fitted mean, or a marker for scores supplied directly by the caller.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreModel<T> {
    Residual(MeanModel<T>),
    UserTable,
}

impl<T: Real> ScoreModel<T> {
    /// `s(x, y)`; only the residual kind can evaluate pairs.
    pub fn score(&self, x: &[T], y: T) -> Result<T, ScoreError> {
        match self {
            ScoreModel::Residual(m) => Ok((y - m.predict(x)?).abs()),
            ScoreModel::UserTable => Err(ScoreError::NotEvaluable {
                action: "evaluate scores externally and pass them per index",
            }),
        }
    }

    /// Materializes `{ y : s(x, y) <= t }` as an interval around the fitted
    /// mean. An infinite threshold gives the whole line; a negative one the
    /// empty set.
    pub fn interval_from_threshold(&self, x: &[T], t: T) -> Result<Interval<T>, ScoreError> {
        match self {
            ScoreModel::Residual(m) => {
                if t < T::zero() {
                    return Ok(Interval::empty());
                }
                if t == T::infinity() {
                    return Ok(Interval::full());
                }
                let center = m.predict(x)?;
                Ok(Interval {
                    lower: center - t,
                    upper: center + t,
                })
            }
            ScoreModel::UserTable => Err(ScoreError::NotEvaluable {
                action: "the score set is not an interval; use the threshold directly",
            }),
        }
    }
}

/// Closed interval `[lower, upper]`; `lower > upper` encodes the empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> Interval<T> {
    pub fn empty() -> Self {
        Self {
            lower: T::infinity(),
            upper: T::neg_infinity(),
        }
    }

    pub fn full() -> Self {
        Self {
            lower: T::neg_infinity(),
            upper: T::infinity(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn contains(&self, y: T) -> bool {
        y >= self.lower && y <= self.upper
    }

    pub fn width(&self) -> T {
        if self.is_empty() {
            T::zero()
        } else {
            self.upper - self.lower
        }
    }

    /// Interval shifted left by `offset`: `{ v - offset : v in self }`.
    pub fn shift_down(&self, offset: T) -> Self {
        if self.is_empty() || (self.lower == T::neg_infinity() && self.upper == T::infinity()) {
            *self
        } else {
            Self {
                lower: self.lower - offset,
                upper: self.upper - offset,
            }
        }
    }
}

/// Ordinary least squares of observed outcomes on features (with intercept),
/// using only rows whose outcome was observed.
///
/// Near-singular designs are refit with a small ridge penalty recorded on
/// the model; exactly collinear designs report the offending column.
pub fn fit_mean_lsq<T: Real>(train: &MaskedDataset<T>) -> Result<MeanModel<T>, ScoreError> {
    let observed = train.observed_indices();
    let d = train.dim();
    let p = d + 1;
    if observed.len() < p {
        return Err(ScoreError::TooFewObserved {
            needed: p,
            got: observed.len(),
            dim: d,
        });
    }
    // Normal equations over the design [1, x].
    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    for &i in &observed {
        let x = train.feature_row(i);
        let y = train.outcome(i).expect("observed row has outcome");
        let mut row = Vec::with_capacity(p);
        row.push(T::one());
        row.extend_from_slice(x);
        for a in 0..p {
            rhs[a] += row[a] * y;
            for b in 0..p {
                gram[a * p + b] += row[a] * row[b];
            }
        }
    }
    // A feature column with no mass at all is unrecoverable; name it rather
    // than letting the ridge fallback absorb it.
    for j in 1..p {
        if gram[j * p + j] == T::zero() {
            return Err(ScoreError::RankDeficient {
                column: ColumnRef::Feature(j - 1),
            });
        }
    }
    match solve_spd(&gram, &rhs, p) {
        Ok(beta) => Ok(split_beta(beta, None)),
        Err(_) => {
            let trace: T = (0..p).map(|j| gram[j * p + j]).sum();
            let lambda = T::cast(1e-8) * trace / T::cast(p);
            let mut ridged = gram.clone();
            for j in 0..p {
                ridged[j * p + j] += lambda;
            }
            match solve_spd(&ridged, &rhs, p) {
                Ok(beta) => Ok(split_beta(beta, Some(lambda))),
                Err(col) => Err(ScoreError::RankDeficient {
                    column: if col == 0 {
                        ColumnRef::Intercept
                    } else {
                        ColumnRef::Feature(col - 1)
                    },
                }),
            }
        }
    }
}

fn split_beta<T: Real>(beta: Vec<T>, ridge: Option<T>) -> MeanModel<T> {
    let mut model = MeanModel::new(beta[0], beta[1..].to_vec());
    model.ridge = ridge;
    model
}
