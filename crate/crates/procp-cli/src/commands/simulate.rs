use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use procp_sim::{
    coverage_histogram, run_study, summary_table, width_histogram, DgpKind, DgpSpec, Method,
    PropensitySource, StudyConfig,
};

use crate::output::OutputStage;
use crate::{MethodName, PropensityFlag};

pub struct SimulateArgs {
    pub setting: String,
    pub method: MethodName,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub block_size: Option<usize>,
    pub propensity: PropensityFlag,
    pub n: usize,
    pub train_n: usize,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let kind = match args.setting.as_str() {
        "1" => DgpKind::Setting1,
        "2" => DgpKind::Setting2,
        "highdim" => DgpKind::HighDimLogistic,
        other => bail!("unknown setting '{other}' (use 1, 2, or highdim)"),
    };
    let method = match args.method {
        MethodName::PerFeature => Method::PerFeature,
        MethodName::Simultaneous => Method::Simultaneous,
        MethodName::ProCp => Method::ProCp,
        MethodName::ProCp2 => Method::ProCp2,
        MethodName::Weighted => Method::Weighted,
        MethodName::McarPac => Method::McarPac,
        MethodName::MarPacSmall => Method::MarPacSmall,
    };
    let propensity = match args.propensity {
        PropensityFlag::Known => PropensitySource::Known,
        PropensityFlag::Kernel => PropensitySource::Kernel,
        PropensityFlag::Logistic => PropensitySource::Logistic,
        PropensityFlag::Column => {
            bail!("--propensity column applies only to `predict`; use known, kernel, or logistic")
        }
    };
    let spec = DgpSpec::new(kind, args.n, args.seed);
    let config = StudyConfig {
        method,
        alpha: args.alpha,
        epsilon: args.epsilon,
        delta: args.delta,
        block_size: args.block_size,
        propensity,
        train_n: args.train_n,
        ..Default::default()
    };
    let summary = run_study(&spec, &config, args.trials, args.seed)
        .with_context(|| "running the study")?;

    let mut text = String::new();
    text.push_str(&format!(
        "setting={} n={} train_n={} trials={} seed={} epsilon={} block_size={:?}\n",
        args.setting, args.n, args.train_n, args.trials, args.seed, args.epsilon, args.block_size
    ));
    text.push_str(&summary_table(&[(method.name(), &summary)]));

    let mut stage = OutputStage::new();
    stage.stage(&args.out.join("summary.txt"), &text)?;
    stage.stage(
        &args.out.join("coverage_hist.csv"),
        &coverage_histogram(&summary, 25),
    )?;
    stage.stage(
        &args.out.join("width_hist.csv"),
        &width_histogram(&summary, 25),
    )?;
    stage.commit()?;
    println!("{text}");
    Ok(())
}
