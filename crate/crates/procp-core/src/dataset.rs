use thiserror::Error;

use crate::real::Real;

/// Errors raised while constructing or reading a [`MaskedDataset`].
#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must contain at least one row")]
    Empty,
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("row {row} is marked observed but has no outcome")]
    MissingObservedOutcome { row: usize },
    #[error("row {row} is marked missing but carries an outcome")]
    UnexpectedOutcome { row: usize },
    #[error("non-finite outcome at row {row}")]
    NonFiniteOutcome { row: usize },
    #[error("outcome requested at row {row}, which is missing")]
    OutcomeMissing { row: usize },
    #[error("row index {row} out of range for dataset of size {n}")]
    RowOutOfRange { row: usize, n: usize },
}

/// Rows of features with a missingness indicator per row; the outcome is
/// stored only where the indicator says it was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset<T> {
    features: Vec<T>,
    n: usize,
    dim: usize,
    mask: Vec<bool>,
    outcomes: Vec<Option<T>>,
}

impl<T: Real> MaskedDataset<T> {
    /// Builds a dataset from feature rows, an observed/missing mask, and
    /// per-row outcomes (`Some` exactly where the mask is true).
    pub fn from_rows(
        rows: Vec<Vec<T>>,
        mask: Vec<bool>,
        outcomes: Vec<Option<T>>,
    ) -> Result<Self, DataError> {
        let n = rows.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if mask.len() != n {
            return Err(DataError::LengthMismatch {
                what: "mask",
                got: mask.len(),
                expected: n,
            });
        }
        if outcomes.len() != n {
            return Err(DataError::LengthMismatch {
                what: "outcomes",
                got: outcomes.len(),
                expected: n,
            });
        }
        let dim = rows[0].len();
        let mut features = Vec::with_capacity(n * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(DataError::RaggedRow {
                    row,
                    got: r.len(),
                    expected: dim,
                });
            }
            for (column, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFiniteFeature { row, column });
                }
                features.push(v);
            }
        }
        for (row, (&observed, outcome)) in mask.iter().zip(outcomes.iter()).enumerate() {
            match (observed, outcome) {
                (true, None) => return Err(DataError::MissingObservedOutcome { row }),
                (false, Some(_)) => return Err(DataError::UnexpectedOutcome { row }),
                (true, Some(y)) if !y.is_finite() => {
                    return Err(DataError::NonFiniteOutcome { row })
                }
                _ => {}
            }
        }
        Ok(Self {
            features,
            n,
            dim,
            mask,
            outcomes,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, row: usize) -> bool {
        self.mask[row]
    }

    pub fn feature_row(&self, row: usize) -> &[T] {
        &self.features[row * self.dim..(row + 1) * self.dim]
    }

    /// Iterator over all feature rows in order.
    pub fn feature_rows(&self) -> impl Iterator<Item = &[T]> {
        self.features.chunks(self.dim.max(1)).take(self.n)
    }

    /// The outcome at `row`; an error if the outcome there is missing.
    pub fn outcome(&self, row: usize) -> Result<T, DataError> {
        if row >= self.n {
            return Err(DataError::RowOutOfRange { row, n: self.n });
        }
        self.outcomes[row].ok_or(DataError::OutcomeMissing { row })
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.mask[i]).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.mask[i]).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    pub fn n_missing(&self) -> usize {
        self.n - self.n_observed()
    }

    /// Dataset restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        let mut mask = Vec::with_capacity(rows.len());
        let mut outcomes = Vec::with_capacity(rows.len());
        for &row in rows {
            if row >= self.n {
                return Err(DataError::RowOutOfRange { row, n: self.n });
            }
            features.extend_from_slice(self.feature_row(row));
            mask.push(self.mask[row]);
            outcomes.push(self.outcomes[row]);
        }
        Ok(Self {
            features,
            n: rows.len(),
            dim: self.dim,
            mask,
            outcomes,
        })
    }
}
