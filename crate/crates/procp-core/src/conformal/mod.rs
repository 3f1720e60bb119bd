//! Prediction-set constructors for missing outcomes.
//!
//! Every constructor returns score thresholds, one per missing index: the
//! prediction set for index `i` is `{ y : s(X_i, y) <= t_i }`. Interval
//! materialization for residual scores lives in [`crate::scores`].

mod ite;
mod pac;
mod pooled;
mod squared;
mod weighted;

pub use ite::ite_sets;
pub use pac::{mar_pac_small, mcar_pac, mcar_threshold_rank, DEFAULT_ENUMERATION_BUDGET};
pub use pooled::{
    partitioned, pooled_distribution, pro_cp, simultaneous_discrete, split_conformal_per_feature,
    PooledMethod,
};
pub use squared::{alpha_allocation, pro_cp2, pro_cp2_distribution, pro_cp2_partitioned, AlphaAllocation};
pub use weighted::{weighted_split_conformal, weighted_split_conformal_from_probs};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dist::DistError;
use crate::hypergeom::HypergeomError;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("alpha must lie in {range}, got {alpha}")]
    BadAlpha { alpha: f64, range: &'static str },
    #[error("delta must lie in (0,1), got {0}")]
    BadDelta(f64),
    #[error("scores have length {got}, expected {expected}")]
    ScoreLength { got: usize, expected: usize },
    #[error("score at observed index {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("bin assignment has length {got}, expected {expected}")]
    BinLength { got: usize, expected: usize },
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("no observed outcomes to calibrate on")]
    NoObservedOutcomes,
    #[error("no missing outcomes; nothing to allocate or predict")]
    NoObservedMissing,
    #[error(
        "enumeration needs {required} placements, over the budget of {budget}; \
         use the MCAR PAC set or a squared-coverage constructor instead"
    )]
    BudgetExceeded { required: u128, budget: u128 },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Hypergeom(#[from] HypergeomError),
}

/// Which guarantee a constructor certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuaranteeKind {
    /// Expected coverage proportion at least the effective level.
    MeanCoverage,
    /// Expected squared miscoverage proportion at most the effective level.
    SquaredCoverage,
    /// Coverage proportion at least `1 - alpha` with probability at least
    /// the effective level.
    McarPac,
}

/// The certified guarantee attached to a rule, with its exact slack algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeReport<T> {
    method: String,
    kind: GuaranteeKind,
    alpha: T,
    delta: Option<T>,
    epsilon: T,
    propensity_slack: T,
    effective_level: T,
}

impl<T: Real> GuaranteeReport<T> {
    /// Mean-coverage guarantee at `1 - alpha - (eps + slack + eps*slack)`.
    pub fn mean_coverage(method: impl Into<String>, alpha: T, epsilon: T, slack: T) -> Self {
        let widening = epsilon + slack + epsilon * slack;
        Self {
            method: method.into(),
            kind: GuaranteeKind::MeanCoverage,
            alpha,
            delta: None,
            epsilon,
            propensity_slack: slack,
            effective_level: T::one() - alpha - widening,
        }
    }

    /// Squared-coverage bound `alpha^2 + 2 (eps + slack + eps*slack)`.
    pub fn squared_coverage(method: impl Into<String>, alpha: T, epsilon: T, slack: T) -> Self {
        let widening = epsilon + slack + epsilon * slack;
        Self {
            method: method.into(),
            kind: GuaranteeKind::SquaredCoverage,
            alpha,
            delta: None,
            epsilon,
            propensity_slack: slack,
            effective_level: alpha * alpha + T::cast(2.0) * widening,
        }
    }

    /// PAC guarantee holding with probability `1 - delta`.
    pub fn pac(method: impl Into<String>, alpha: T, delta: T) -> Self {
        Self {
            method: method.into(),
            kind: GuaranteeKind::McarPac,
            alpha,
            delta: Some(delta),
            epsilon: T::zero(),
            propensity_slack: T::zero(),
            effective_level: T::one() - delta,
        }
    }

    /// Recomputes the effective level with a propensity-estimation slack
    /// from an odds diagnostic.
    pub fn with_propensity_slack(self, slack: T) -> Self {
        match self.kind {
            GuaranteeKind::MeanCoverage => {
                Self::mean_coverage(self.method, self.alpha, self.epsilon, slack)
            }
            GuaranteeKind::SquaredCoverage => {
                Self::squared_coverage(self.method, self.alpha, self.epsilon, slack)
            }
            GuaranteeKind::McarPac => self,
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn kind(&self) -> GuaranteeKind {
        self.kind
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn delta(&self) -> Option<T> {
        self.delta
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn propensity_slack(&self) -> T {
        self.propensity_slack
    }

    /// The guarantee level: a coverage floor for mean-coverage and PAC
    /// kinds, an upper bound on `E[miscoverage^2]` for the squared kind.
    pub fn effective_level(&self) -> T {
        self.effective_level
    }
}

impl<T: Real> std::fmt::Display for GuaranteeReport<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "method={}", self.method)?;
        let kind = match self.kind {
            GuaranteeKind::MeanCoverage => "mean-coverage",
            GuaranteeKind::SquaredCoverage => "squared-coverage",
            GuaranteeKind::McarPac => "mcar-pac",
        };
        writeln!(f, "guarantee={kind}")?;
        writeln!(f, "alpha={}", self.alpha)?;
        if let Some(d) = self.delta {
            writeln!(f, "delta={d}")?;
        }
        writeln!(f, "epsilon={}", self.epsilon)?;
        writeln!(f, "propensity_slack={}", self.propensity_slack)?;
        write!(f, "effective_level={}", self.effective_level)
    }
}

/// Score thresholds for the missing indices, plus the certified guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRule<T> {
    thresholds: BTreeMap<usize, T>,
    score_model: String,
    report: GuaranteeReport<T>,
}

impl<T: Real> PredictionRule<T> {
    pub(crate) fn new(thresholds: BTreeMap<usize, T>, report: GuaranteeReport<T>) -> Self {
        Self {
            thresholds,
            score_model: "residual".to_string(),
            report,
        }
    }

    /// Thresholds keyed by missing index.
    pub fn thresholds(&self) -> &BTreeMap<usize, T> {
        &self.thresholds
    }

    pub fn threshold(&self, index: usize) -> Option<T> {
        self.thresholds.get(&index).copied()
    }

    /// True when there are no missing outcomes; coverage is vacuously one.
    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn report(&self) -> &GuaranteeReport<T> {
        &self.report
    }

    /// Identifier of the score model the thresholds refer to.
    pub fn score_model(&self) -> &str {
        &self.score_model
    }

    pub fn with_score_model(mut self, id: impl Into<String>) -> Self {
        self.score_model = id.into();
        self
    }

    pub fn with_report(mut self, report: GuaranteeReport<T>) -> Self {
        self.report = report;
        self
    }
}

/// A partition of `0..n` into disjoint covering blocks, in stable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPartition {
    blocks: Vec<Vec<usize>>,
    n: usize,
}

impl IndexPartition {
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self, ConformalError> {
        let mut seen = vec![false; n];
        let mut count = 0usize;
        for block in &blocks {
            for &i in block {
                if i >= n {
                    return Err(ConformalError::BadPartition(format!(
                        "index {i} out of range for n={n}"
                    )));
                }
                if seen[i] {
                    return Err(ConformalError::BadPartition(format!(
                        "index {i} appears in two blocks"
                    )));
                }
                seen[i] = true;
                count += 1;
            }
        }
        if count != n {
            return Err(ConformalError::BadPartition(format!(
                "blocks cover {count} of {n} indices"
            )));
        }
        Ok(Self { blocks, n })
    }

    /// Contiguous blocks of `block_size` consecutive indices (the last block
    /// may be shorter).
    pub fn contiguous(n: usize, block_size: usize) -> Result<Self, ConformalError> {
        if block_size == 0 {
            return Err(ConformalError::BadPartition(
                "block size must be positive".to_string(),
            ));
        }
        let blocks = (0..n)
            .step_by(block_size)
            .map(|start| (start..(start + block_size).min(n)).collect())
            .collect();
        Self::new(blocks, n)
    }

    /// One block per index.
    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
            n,
        }
    }

    /// The single block holding all indices.
    pub fn whole(n: usize) -> Self {
        Self {
            blocks: vec![(0..n).collect()],
            n,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of missing outcomes per block under `mask`.
    pub fn missing_counts(&self, mask: &[bool]) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| b.iter().filter(|&&i| !mask[i]).count())
            .collect()
    }
}

pub(crate) fn check_alpha<T: Real>(alpha: T) -> Result<(), ConformalError> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(ConformalError::BadAlpha {
            alpha: alpha.to_f64().unwrap_or(f64::NAN),
            range: "(0,1)",
        })
    }
}

/// Validates score entries: length n, finite at observed indices. Entries at
/// missing indices are ignored by every constructor.
pub(crate) fn check_scores<T: Real>(
    scores: &[T],
    mask: &[bool],
) -> Result<(), ConformalError> {
    if scores.len() != mask.len() {
        return Err(ConformalError::ScoreLength {
            got: scores.len(),
            expected: mask.len(),
        });
    }
    for (index, (&s, &observed)) in scores.iter().zip(mask).enumerate() {
        if observed && !s.is_finite() {
            return Err(ConformalError::NonFiniteScore { index });
        }
    }
    Ok(())
}
