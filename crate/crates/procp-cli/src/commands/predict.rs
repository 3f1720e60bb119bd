use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use procp_core::{
    alpha_allocation, assign_bins, bin_stats, discrete_feature_bins, fit_kernel, fit_logistic,
    fit_mean_lsq, default_bandwidth_grid, mar_pac_small, mcar_pac, partitioned, pro_cp, pro_cp2,
    pro_cp2_partitioned, simultaneous_discrete, split_conformal_per_feature,
    weighted_split_conformal_from_probs, BinAssignment, IndexPartition, MaskedDataset, MeanModel,
    PooledMethod, PredictionRule, PropensityModel, ScoreModel,
};

use crate::csvio::ParsedCsv;
use crate::output::OutputStage;
use crate::{seeded_shuffle, MethodName, PropensityFlag};

pub struct PredictArgs {
    pub input: PathBuf,
    pub method: MethodName,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub block_size: Option<usize>,
    pub propensity: PropensityFlag,
    pub split_ratio: f64,
    pub shuffle_blocks: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub categorical: Vec<String>,
    pub mean_model: Option<PathBuf>,
    pub save_models: bool,
}

pub fn run(data: ParsedCsv, args: &PredictArgs) -> Result<()> {
    if !(args.split_ratio > 0.0 && args.split_ratio < 1.0) {
        bail!("--split-ratio must lie strictly between 0 and 1");
    }
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    if args.shuffle_blocks {
        seeded_shuffle(&mut order, args.seed);
    }
    let n_train = ((n as f64) * args.split_ratio).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let (train_idx, cal_idx) = order.split_at(n_train);
    let train = data.select(train_idx);
    let cal = data.select(cal_idx);
    let train_ds = train.dataset()?;
    let cal_ds = cal.dataset()?;

    let mean = match &args.mean_model {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading mean model {}", path.display()))?;
            MeanModel::from_text(&text).context("parsing mean model")?
        }
        None => fit_mean_lsq(&train_ds).context("fitting the mean model on the training split")?,
    };
    let score_model = ScoreModel::Residual(mean.clone());

    // Per-row observation probabilities on the calibration split, from the
    // declared source.
    let (cal_probs, prop_model, prop_desc) = propensity_source(args, &train, &cal, &train_ds, &cal_ds)?;

    let scores: Vec<f64> = (0..cal_ds.n())
        .map(|i| {
            if cal_ds.is_observed(i) {
                score_model
                    .score(cal_ds.feature_row(i), cal_ds.outcome(i).expect("observed"))
                    .map_err(anyhow::Error::from)
            } else {
                Ok(f64::NAN)
            }
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if data.ignored_outcomes > 0 {
        warnings.push(format!(
            "{} outcome cells on rows with a=0 were ignored",
            data.ignored_outcomes
        ));
    }
    let (rule, bins_used) = build_rule(args, &cal_ds, &scores, &cal_probs, &mut warnings)?;
    if let Some(model) = &prop_model {
        let underflows = model.underflow_fallbacks();
        if underflows > 0 {
            warnings.push(format!(
                "kernel evaluation fell back to the mask mean {underflows} times"
            ));
        }
    }

    let report = render_report(args, &cal_ds, &rule, &bins_used, &prop_desc, &warnings);
    let intervals = render_intervals(&cal, &cal_ds, &rule, &score_model)?;

    let mut stage = OutputStage::new();
    stage.stage(&args.out.join("report.txt"), &report)?;
    stage.stage(&args.out.join("intervals.csv"), &intervals)?;
    if args.save_models {
        stage.stage(&args.out.join("mean.model"), &mean.to_text())?;
        if let Some(model) = &prop_model {
            stage.stage(&args.out.join("propensity.model"), &model.to_text())?;
        }
    }
    stage.commit()?;
    println!("{report}");
    Ok(())
}

fn propensity_source(
    args: &PredictArgs,
    train: &ParsedCsv,
    cal: &ParsedCsv,
    train_ds: &MaskedDataset<f64>,
    cal_ds: &MaskedDataset<f64>,
) -> Result<(Option<Vec<f64>>, Option<PropensityModel<f64>>, String)> {
    if !needs_propensity(args.method) {
        return Ok((None, None, "none".to_string()));
    }
    match args.propensity {
        PropensityFlag::Column => {
            let probs = cal.propensity.clone().context(
                "--propensity column requires a 'p' column with values in (0,1)",
            )?;
            let _ = train;
            Ok((Some(probs), None, "column p".to_string()))
        }
        PropensityFlag::Logistic => {
            let model = fit_logistic(train_ds, 100, 1e-8)
                .context("fitting logistic propensity on the training split")?;
            let probs = (0..cal_ds.n())
                .map(|i| model.prob(cal_ds.feature_row(i)))
                .collect();
            let desc = match model.logistic_parts() {
                Some((_, _, true, iters)) => format!("logistic (converged in {iters} iterations)"),
                Some((_, _, false, iters)) => {
                    format!("logistic (not converged after {iters} iterations)")
                }
                None => "logistic".to_string(),
            };
            Ok((Some(probs), Some(model), desc))
        }
        PropensityFlag::Kernel => {
            let grid = default_bandwidth_grid(train_ds);
            let model = fit_kernel(train_ds, &grid)
                .context("fitting kernel propensity on the training split")?;
            let probs = (0..cal_ds.n())
                .map(|i| model.prob(cal_ds.feature_row(i)))
                .collect();
            let desc = format!(
                "kernel (bandwidth {:.6})",
                model.kernel_bandwidth().unwrap_or(f64::NAN)
            );
            Ok((Some(probs), Some(model), desc))
        }
        PropensityFlag::Known => {
            bail!("--propensity known applies only to `simulate`; use column, logistic, or kernel")
        }
    }
}

fn needs_propensity(method: MethodName) -> bool {
    matches!(
        method,
        MethodName::ProCp | MethodName::ProCp2 | MethodName::Weighted | MethodName::MarPacSmall
    )
}

fn build_rule(
    args: &PredictArgs,
    cal_ds: &MaskedDataset<f64>,
    scores: &[f64],
    cal_probs: &Option<Vec<f64>>,
    warnings: &mut Vec<String>,
) -> Result<(PredictionRule<f64>, Option<BinAssignment<f64>>)> {
    let n = cal_ds.n();
    let partition = match args.block_size {
        Some(b) => Some(IndexPartition::contiguous(n, b)?),
        None => None,
    };
    let eps_bins = || -> Result<BinAssignment<f64>> {
        let probs = cal_probs
            .as_ref()
            .context("this method needs a propensity source")?;
        Ok(assign_bins(probs, args.epsilon)?)
    };
    let need_delta = || -> Result<f64> {
        args.delta
            .context("this method needs --delta in (0,1)")
    };
    let rule = match args.method {
        MethodName::PerFeature => {
            let bins = discrete_feature_bins(cal_ds);
            let rule = split_conformal_per_feature(cal_ds, scores, &bins, args.alpha)?;
            return Ok((rule, Some(bins)));
        }
        MethodName::Simultaneous => {
            let bins = discrete_feature_bins(cal_ds);
            let rule = match &partition {
                Some(p) => partitioned(
                    PooledMethod::Simultaneous,
                    cal_ds,
                    scores,
                    &bins,
                    p,
                    args.alpha,
                )?,
                None => simultaneous_discrete(cal_ds, scores, &bins, args.alpha)?,
            };
            return Ok((rule, Some(bins)));
        }
        MethodName::ProCp => {
            let bins = eps_bins()?;
            let rule = match &partition {
                Some(p) => {
                    partitioned(PooledMethod::ProCp, cal_ds, scores, &bins, p, args.alpha)?
                }
                None => {
                    let stats = bin_stats(&bins, cal_ds.mask())?;
                    pro_cp(cal_ds, scores, &stats, args.alpha)?
                }
            };
            return Ok((rule, Some(bins)));
        }
        MethodName::ProCp2 => {
            let bins = eps_bins()?;
            let rule = match &partition {
                Some(p) => {
                    let allocation = alpha_allocation(p, cal_ds.mask(), args.alpha)?;
                    if allocation.clamped_blocks > 0 {
                        warnings.push(format!(
                            "{} block level(s) clamped to 1 (empty sets there)",
                            allocation.clamped_blocks
                        ));
                    }
                    pro_cp2_partitioned(cal_ds, scores, &bins, p, args.alpha)?
                }
                None => {
                    let stats = bin_stats(&bins, cal_ds.mask())?;
                    pro_cp2(cal_ds, scores, &stats, args.alpha)?
                }
            };
            return Ok((rule, Some(bins)));
        }
        MethodName::Weighted => {
            let probs = cal_probs
                .as_ref()
                .context("this method needs a propensity source")?;
            weighted_split_conformal_from_probs(cal_ds, scores, probs, args.alpha)?
        }
        MethodName::McarPac => mcar_pac(cal_ds, scores, args.alpha, need_delta()?)?,
        MethodName::MarPacSmall => {
            let bins = eps_bins()?;
            let rule = mar_pac_small(
                cal_ds,
                scores,
                &bins,
                args.alpha,
                need_delta()?,
                procp_core::conformal::DEFAULT_ENUMERATION_BUDGET,
            )?;
            return Ok((rule, Some(bins)));
        }
    };
    Ok((rule, None))
}

fn render_report(
    args: &PredictArgs,
    cal_ds: &MaskedDataset<f64>,
    rule: &PredictionRule<f64>,
    bins: &Option<BinAssignment<f64>>,
    propensity_desc: &str,
    warnings: &[String],
) -> String {
    let mut out = String::new();
    out.push_str("== run ==\n");
    out.push_str(&format!("input={}\n", args.input.display()));
    out.push_str(&format!("seed={}\n", args.seed));
    out.push_str(&format!("split_ratio={}\n", args.split_ratio));
    out.push_str(&format!("propensity_source={propensity_desc}\n"));
    if !args.categorical.is_empty() {
        out.push_str(&format!("categorical={}\n", args.categorical.join(",")));
    }
    if let Some(b) = args.block_size {
        out.push_str(&format!("block_size={b}\n"));
    }
    out.push_str("== data ==\n");
    out.push_str(&format!("calibration_rows={}\n", cal_ds.n()));
    out.push_str(&format!("observed={}\n", cal_ds.n_observed()));
    out.push_str(&format!("missing={}\n", cal_ds.n_missing()));
    if let Some(b) = bins {
        out.push_str(&format!("occupied_bins={}\n", b.n_distinct()));
    }
    out.push_str("== guarantee ==\n");
    out.push_str(&format!("{}\n", rule.report()));
    if rule.is_empty() {
        out.push_str("note=no missing outcomes; the run is vacuous and coverage is 1 by convention\n");
    }
    if !warnings.is_empty() {
        out.push_str("== warnings ==\n");
        for w in warnings {
            out.push_str(&format!("warning={w}\n"));
        }
    }
    out
}

fn render_intervals(
    cal: &ParsedCsv,
    cal_ds: &MaskedDataset<f64>,
    rule: &PredictionRule<f64>,
    score_model: &ScoreModel<f64>,
) -> Result<String> {
    let mut out = String::from("row,threshold,lower,upper\n");
    for (&i, &t) in rule.thresholds() {
        let interval = score_model.interval_from_threshold(cal_ds.feature_row(i), t)?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            cal.row_ids[i], t, interval.lower, interval.upper
        ));
    }
    Ok(out)
}

/// Thresholds and intervals for the missing rows keyed by input row id;
/// used by tests to compare against library-level runs.
pub fn intervals_by_row(path: &Path) -> Result<BTreeMap<usize, (f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            bail!("bad intervals line '{line}'");
        }
        out.insert(
            parts[0].parse()?,
            (parts[1].parse()?, parts[2].parse()?, parts[3].parse()?),
        );
    }
    Ok(out)
}
