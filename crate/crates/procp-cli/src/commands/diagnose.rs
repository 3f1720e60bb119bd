use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use procp_core::{
    default_bandwidth_grid, fit_kernel, fit_logistic, GuaranteeReport, OddsDiagnostic,
};

use crate::csvio::ParsedCsv;
use crate::output::OutputStage;

pub struct DiagnoseArgs {
    pub input: PathBuf,
    pub truth: String,
    pub estimate: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub out: Option<PathBuf>,
}

/// A propensity source for diagnosis: a data column or an estimator fit on
/// the input file itself.
enum Source {
    Column(Vec<f64>),
    Model(procp_core::PropensityModel<f64>),
}

impl Source {
    fn eval(&self, data: &ParsedCsv, row: usize) -> f64 {
        match self {
            Source::Column(values) => values[row],
            Source::Model(m) => m.prob(&data.rows[row]),
        }
    }
}

fn resolve_source(spec: &str, data: &ParsedCsv) -> Result<Source> {
    if let Some(name) = spec.strip_prefix("column:") {
        let column = data
            .extra_columns
            .get(name)
            .with_context(|| format!("column '{name}' not present"))?;
        let values: Vec<f64> = column
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.filter(|p| *p > 0.0 && *p < 1.0)
                    .with_context(|| format!("row {}: column '{name}' needs a value in (0,1)", i + 1))
            })
            .collect::<Result<_>>()?;
        return Ok(Source::Column(values));
    }
    let ds = data.dataset()?;
    match spec {
        "column" => resolve_source("column:p", data),
        "logistic" => Ok(Source::Model(
            fit_logistic(&ds, 100, 1e-8).context("fitting logistic estimate")?,
        )),
        "kernel" => {
            let grid = default_bandwidth_grid(&ds);
            Ok(Source::Model(
                fit_kernel(&ds, &grid).context("fitting kernel estimate")?,
            ))
        }
        other => bail!("unknown propensity source '{other}' (use column[:name], logistic, kernel)"),
    }
}

pub fn run(data: ParsedCsv, args: &DiagnoseArgs) -> Result<()> {
    let truth = resolve_source(&args.truth, &data)?;
    let estimate = resolve_source(&args.estimate, &data)?;
    let mut max_abs: Option<f64> = None;
    for i in 0..data.n() {
        let p = truth.eval(&data, i);
        let q = estimate.eval(&data, i);
        let log_f = ((p / (1.0 - p)) / (q / (1.0 - q))).ln();
        let abs = log_f.abs();
        max_abs = Some(max_abs.map_or(abs, |m| m.max(abs)));
    }
    let diagnostic =
        OddsDiagnostic::from_max_abs_log_f(max_abs.context("input file has no rows")?);
    let slack = diagnostic.delta_hat();
    let pro_cp = GuaranteeReport::mean_coverage("pro-cp", args.alpha, args.epsilon, slack);
    let pro_cp2 = GuaranteeReport::squared_coverage("pro-cp2", args.alpha, args.epsilon, slack);

    let mut text = String::new();
    text.push_str(&format!("input={}\n", args.input.display()));
    text.push_str(&format!("truth={}\nestimate={}\n", args.truth, args.estimate));
    text.push_str(&format!("rows={}\n", data.n()));
    text.push_str(&format!("max_abs_log_odds_ratio={}\n", diagnostic.max_abs_log_f()));
    text.push_str(&format!("delta_hat={slack}\n"));
    text.push_str(
        "note=the maximum is over the supplied rows only, a lower bound on the sup-norm; \
         the implied guarantees are approximate\n",
    );
    text.push_str(&format!(
        "pro_cp_effective_mean_coverage_level={}\n",
        pro_cp.effective_level()
    ));
    text.push_str(&format!(
        "pro_cp2_effective_squared_miscoverage_bound={}\n",
        pro_cp2.effective_level()
    ));
    if let Some(dir) = &args.out {
        let mut stage = OutputStage::new();
        stage.stage(&dir.join("diagnostic.txt"), &text)?;
        stage.commit()?;
    }
    println!("{text}");
    Ok(())
}
