//! Simultaneous distribution-free prediction sets for outcomes missing at
//! random.
//!
//! Given rows `(x_i, a_i, y_i a_i)` where `a_i` marks whether the outcome
//! was observed, the constructors in [`conformal`] build prediction sets
//! for every missing outcome at once, with coverage guarantees conditional
//! on the missingness pattern and on discretized feature information:
//!
//! - per-group and pooled simultaneous sets for discrete features;
//! - `pro_cp` / `pro_cp2`, which discretize the propensity score onto a
//!   geometric odds grid and certify mean coverage `1 - alpha - eps` or a
//!   squared-miscoverage bound `alpha^2 + 2 eps`;
//! - partitioned refinements that pool within blocks of missing indices;
//! - a weighted split-conformal baseline and PAC sets for the MCAR and
//!   small-instance MAR regimes.
//!
//! Everything numeric is generic over the scalar via [`real::Real`]
//! (`f32` or `f64`); the `*64` aliases below fix the common choice.

pub mod conformal;
pub mod dataset;
pub mod discretize;
pub mod dist;
pub mod hypergeom;
pub mod level;
mod linalg;
pub mod propensity;
pub mod real;
pub mod scores;

pub use conformal::{
    alpha_allocation, ite_sets, mar_pac_small, mcar_pac, mcar_threshold_rank, partitioned,
    pooled_distribution, pro_cp, pro_cp2, pro_cp2_distribution, pro_cp2_partitioned,
    simultaneous_discrete, split_conformal_per_feature, weighted_split_conformal,
    weighted_split_conformal_from_probs,
    AlphaAllocation, ConformalError, GuaranteeKind, GuaranteeReport, IndexPartition,
    PooledMethod, PredictionRule,
};
pub use dataset::{DataError, MaskedDataset};
pub use discretize::{assign_bins, bin_stats, discrete_feature_bins, BinAssignment, BinGroup, BinStats};
pub use dist::{tv_distance, weighted_quantile, DistError, WeightedDiscreteDist};
pub use hypergeom::{big_binomial, hypergeom_pmf, HypergeomError};
pub use level::{Level, LevelError};
pub use propensity::{
    default_bandwidth_grid, fit_kernel, fit_logistic, odds_diagnostic, OddsDiagnostic,
    PropensityError, PropensityModel,
};
pub use real::Real;
pub use scores::{fit_mean_lsq, Interval, MeanModel, ScoreError, ScoreModel};

pub type MaskedDataset64 = MaskedDataset<f64>;
pub type WeightedDiscreteDist64 = WeightedDiscreteDist<f64>;
pub type Level64 = Level<f64>;
pub type MeanModel64 = MeanModel<f64>;
pub type ScoreModel64 = ScoreModel<f64>;
pub type Interval64 = Interval<f64>;
pub type PropensityModel64 = PropensityModel<f64>;
pub type BinAssignment64 = BinAssignment<f64>;
pub type BinStats64 = BinStats<f64>;
pub type PredictionRule64 = PredictionRule<f64>;
pub type GuaranteeReport64 = GuaranteeReport<f64>;
