//! Multi-trial coverage studies: a score model and (optionally) a
//! propensity estimate are fit once on a training draw, then calibration
//! data are regenerated per trial, the configured constructor is applied,
//! and coverage/width metrics are aggregated with standard errors.
//!
//! Trials run in parallel over counter-based substreams of the master
//! seed, so parallel and serial runs produce identical results.

use procp_core::{
    assign_bins, bin_stats, discrete_feature_bins, fit_kernel, fit_logistic, fit_mean_lsq,
    mar_pac_small, mcar_pac, partitioned, pro_cp, pro_cp2, pro_cp2_partitioned,
    simultaneous_discrete, split_conformal_per_feature, weighted_split_conformal,
    default_bandwidth_grid, BinAssignment, IndexPartition, MaskedDataset, PooledMethod,
    PredictionRule, PropensityModel, ScoreModel,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dgp::{DgpModel, DgpSpec, GeneratedInstance};
use crate::metrics::{evaluate, TrialMetrics};
use crate::SimError;

const TRAIN_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PerFeature,
    Simultaneous,
    ProCp,
    ProCp2,
    Weighted,
    McarPac,
    MarPacSmall,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::PerFeature => "per-feature",
            Method::Simultaneous => "simultaneous",
            Method::ProCp => "pro-cp",
            Method::ProCp2 => "pro-cp2",
            Method::Weighted => "weighted",
            Method::McarPac => "mcar-pac",
            Method::MarPacSmall => "mar-pac-small",
        }
    }

    pub fn needs_propensity(&self) -> bool {
        matches!(
            self,
            Method::ProCp | Method::ProCp2 | Method::Weighted | Method::MarPacSmall
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensitySource {
    Known,
    Kernel,
    Logistic,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub method: Method,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    /// Contiguous partition block size; no partitioning when absent.
    pub block_size: Option<usize>,
    pub propensity: PropensitySource,
    pub train_n: usize,
    pub enumeration_budget: u128,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            method: Method::ProCp,
            alpha: 0.2,
            epsilon: 0.1,
            delta: None,
            block_size: Some(50),
            propensity: PropensitySource::Known,
            train_n: 500,
            enumeration_budget: procp_core::conformal::DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyAggregates {
    pub n_trials: usize,
    pub target_coverage: f64,
    pub mean_coverage: f64,
    pub se_coverage: f64,
    /// Empirical probability that the coverage proportion reaches the
    /// target, with its binomial standard error.
    pub prob_target_coverage: f64,
    pub se_prob: f64,
    pub mean_median_width: f64,
    pub se_median_width: f64,
    pub infinite_width_trials: usize,
}

#[derive(Debug, Clone)]
pub struct StudySummary {
    pub method: Method,
    pub alpha: f64,
    pub per_trial: Vec<TrialMetrics>,
    pub aggregates: StudyAggregates,
}

/// Order-invariant aggregation of per-trial metrics.
pub fn aggregate(per_trial: &[TrialMetrics], target_coverage: f64) -> StudyAggregates {
    let n = per_trial.len();
    let nf = n as f64;
    let mean_coverage = per_trial.iter().map(|m| m.coverage).sum::<f64>() / nf;
    let var_coverage = per_trial
        .iter()
        .map(|m| (m.coverage - mean_coverage).powi(2))
        .sum::<f64>()
        / (nf - 1.0).max(1.0);
    let hits = per_trial
        .iter()
        .filter(|m| m.coverage >= target_coverage)
        .count() as f64;
    let p = hits / nf;
    let widths: Vec<f64> = per_trial
        .iter()
        .filter_map(|m| m.median_width)
        .collect();
    let wn = widths.len() as f64;
    let mean_w = widths.iter().sum::<f64>() / wn.max(1.0);
    let var_w = if mean_w.is_finite() {
        widths.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / (wn - 1.0).max(1.0)
    } else {
        f64::NAN
    };
    StudyAggregates {
        n_trials: n,
        target_coverage,
        mean_coverage,
        se_coverage: (var_coverage / nf).sqrt(),
        prob_target_coverage: p,
        se_prob: (p * (1.0 - p) / nf).sqrt(),
        mean_median_width: mean_w,
        se_median_width: (var_w / wn.max(1.0)).sqrt(),
        infinite_width_trials: per_trial
            .iter()
            .filter(|m| m.median_width == Some(f64::INFINITY))
            .count(),
    }
}

/// Models fit once per study on the training stream.
pub struct FittedStudyModels {
    pub score_model: ScoreModel<f64>,
    pub propensity: PropensityModel<f64>,
    pub train: GeneratedInstance,
}

pub fn fit_study_models(
    model: &DgpModel,
    config: &StudyConfig,
    seed: u64,
) -> Result<FittedStudyModels, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    let train = model.sample_instance(config.train_n, &mut rng);
    let mean = fit_mean_lsq(&train.dataset).map_err(|e| SimError::Score(e.to_string()))?;
    let propensity = match config.propensity {
        PropensitySource::Known => model.propensity_model(),
        PropensitySource::Kernel => {
            let grid = default_bandwidth_grid(&train.dataset);
            fit_kernel(&train.dataset, &grid).map_err(|e| SimError::Propensity(e.to_string()))?
        }
        PropensitySource::Logistic => fit_logistic(&train.dataset, 100, 1e-8)
            .map_err(|e| SimError::Propensity(e.to_string()))?,
    };
    Ok(FittedStudyModels {
        score_model: ScoreModel::Residual(mean),
        propensity,
        train,
    })
}

/// Applies the configured constructor to one calibration instance.
pub fn build_rule(
    config: &StudyConfig,
    cal: &MaskedDataset<f64>,
    scores: &[f64],
    propensity: &PropensityModel<f64>,
    frozen_bins: Option<&BinAssignment<f64>>,
) -> Result<PredictionRule<f64>, SimError> {
    let n = cal.n();
    let partition = match config.block_size {
        Some(b) => Some(
            IndexPartition::contiguous(n, b).map_err(|e| SimError::Conformal(e.to_string()))?,
        ),
        None => None,
    };
    let eps_bins = |cal: &MaskedDataset<f64>| -> Result<BinAssignment<f64>, SimError> {
        if let Some(b) = frozen_bins {
            return Ok(b.clone());
        }
        let ps: Vec<f64> = (0..n).map(|i| propensity.prob(cal.feature_row(i))).collect();
        assign_bins(&ps, config.epsilon).map_err(|e| SimError::Conformal(e.to_string()))
    };
    let conformal = |e: procp_core::ConformalError| SimError::Conformal(e.to_string());
    let rule = match config.method {
        Method::PerFeature => {
            let bins = discrete_feature_bins(cal);
            split_conformal_per_feature(cal, scores, &bins, config.alpha).map_err(conformal)?
        }
        Method::Simultaneous => {
            let bins = discrete_feature_bins(cal);
            match &partition {
                Some(p) => {
                    partitioned(PooledMethod::Simultaneous, cal, scores, &bins, p, config.alpha)
                        .map_err(conformal)?
                }
                None => simultaneous_discrete(cal, scores, &bins, config.alpha)
                    .map_err(conformal)?,
            }
        }
        Method::ProCp => {
            let bins = eps_bins(cal)?;
            match &partition {
                Some(p) => partitioned(PooledMethod::ProCp, cal, scores, &bins, p, config.alpha)
                    .map_err(conformal)?,
                None => {
                    let stats =
                        bin_stats(&bins, cal.mask()).map_err(|e| SimError::Conformal(e.to_string()))?;
                    pro_cp(cal, scores, &stats, config.alpha).map_err(conformal)?
                }
            }
        }
        Method::ProCp2 => {
            let bins = eps_bins(cal)?;
            match &partition {
                Some(p) => pro_cp2_partitioned(cal, scores, &bins, p, config.alpha)
                    .map_err(conformal)?,
                None => {
                    let stats =
                        bin_stats(&bins, cal.mask()).map_err(|e| SimError::Conformal(e.to_string()))?;
                    pro_cp2(cal, scores, &stats, config.alpha).map_err(conformal)?
                }
            }
        }
        Method::Weighted => {
            weighted_split_conformal(cal, scores, propensity, config.alpha).map_err(conformal)?
        }
        Method::McarPac => {
            let delta = config.delta.ok_or(SimError::MissingDelta)?;
            mcar_pac(cal, scores, config.alpha, delta).map_err(conformal)?
        }
        Method::MarPacSmall => {
            let delta = config.delta.ok_or(SimError::MissingDelta)?;
            let bins = eps_bins(cal)?;
            mar_pac_small(
                cal,
                scores,
                &bins,
                config.alpha,
                delta,
                config.enumeration_budget,
            )
            .map_err(conformal)?
        }
    };
    Ok(rule)
}

/// Nonconformity scores for a calibration instance: defined at observed
/// indices, poisoned elsewhere so constructors cannot read them.
pub fn calibration_scores(
    instance: &GeneratedInstance,
    score_model: &ScoreModel<f64>,
) -> Result<Vec<f64>, SimError> {
    (0..instance.dataset.n())
        .map(|i| {
            if instance.dataset.is_observed(i) {
                score_model
                    .score(
                        instance.dataset.feature_row(i),
                        instance.dataset.outcome(i).expect("observed"),
                    )
                    .map_err(|e| SimError::Score(e.to_string()))
            } else {
                Ok(f64::NAN)
            }
        })
        .collect()
}

pub fn run_study(
    spec: &DgpSpec,
    config: &StudyConfig,
    n_trials: usize,
    seed: u64,
) -> Result<StudySummary, SimError> {
    if n_trials == 0 {
        return Err(SimError::BadSpec("need at least one trial".into()));
    }
    let spec = DgpSpec {
        kind: spec.kind.clone(),
        n: spec.n,
        seed,
    };
    let model = spec.model()?;
    let fitted = fit_study_models(&model, config, seed)?;
    let per_trial: Vec<TrialMetrics> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialMetrics, SimError> {
            let instance = spec.generate_stream(trial as u64 + 1)?;
            let scores = calibration_scores(&instance, &fitted.score_model)?;
            let rule = build_rule(
                config,
                &instance.dataset,
                &scores,
                &fitted.propensity,
                None,
            )?;
            evaluate(&rule, &instance, &fitted.score_model)
        })
        .collect::<Result<_, _>>()?;
    let aggregates = aggregate(&per_trial, 1.0 - config.alpha);
    Ok(StudySummary {
        method: config.method,
        alpha: config.alpha,
        per_trial,
        aggregates,
    })
}
