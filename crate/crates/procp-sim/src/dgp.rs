//! Data-generating processes for the simulation studies, with hidden truth
//! (full outcomes and true propensities) kept alongside the masked data.

use procp_core::{MaskedDataset, PropensityModel};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::SimError;

/// Stream carrying population parameters (the high-dimensional outcome
/// coefficients), separate from every data stream.
const PARAM_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum DgpKind {
    /// 1-d: X ~ Unif[0,10], Y|X ~ N(x, (3+x)^2), observation probability
    /// 0.9 - 0.02 x.
    Setting1,
    /// Same feature and outcome law; observation probability
    /// 0.8 - 0.1 (1 + 0.1 x) sin(3x).
    Setting2,
    /// 30-d Gaussian features (mean 1, variance 2), linear outcome with
    /// heteroscedastic noise, logistic observation model with intercept 1.2
    /// and slopes (0.2, -0.3, 0.2, 0, ..., 0).
    HighDimLogistic,
    /// 1-d feature uniform on {0, ..., levels-1}; genuinely discrete.
    DiscreteUniform { levels: usize },
    /// 1-d linear observation probability `intercept + slope x` on
    /// [x_min, x_max]; must stay inside (0,1) on the whole range.
    CustomLinear {
        intercept: f64,
        slope: f64,
        x_min: f64,
        x_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

/// A spec with its population parameters materialized.
#[derive(Debug, Clone)]
pub struct DgpModel {
    kind: DgpKind,
    /// Outcome coefficients for the high-dimensional process.
    beta: Vec<f64>,
}

/// Masked data plus the hidden truth used only for evaluation.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub dataset: MaskedDataset<f64>,
    pub outcomes: Vec<f64>,
    pub propensities: Vec<f64>,
}

pub const HIGHDIM_DIM: usize = 30;

fn highdim_gamma() -> Vec<f64> {
    let mut g = vec![0.0; HIGHDIM_DIM];
    g[0] = 0.2;
    g[1] = -0.3;
    g[2] = 0.2;
    g
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    /// Materializes population parameters (deterministic per seed) and
    /// validates the spec.
    pub fn model(&self) -> Result<DgpModel, SimError> {
        if self.n == 0 {
            return Err(SimError::BadSpec("sample size must be positive".into()));
        }
        if let DgpKind::CustomLinear {
            intercept,
            slope,
            x_min,
            x_max,
        } = self.kind
        {
            if !(x_min < x_max) {
                return Err(SimError::BadSpec("empty feature range".into()));
            }
            for p in [intercept + slope * x_min, intercept + slope * x_max] {
                if !(p > 0.0 && p < 1.0) {
                    return Err(SimError::BadSpec(format!(
                        "observation probability {p} escapes (0,1) on the feature range"
                    )));
                }
            }
        }
        if let DgpKind::DiscreteUniform { levels } = self.kind {
            if levels == 0 || levels > 16 {
                return Err(SimError::BadSpec(
                    "discrete feature levels must lie in 1..=16".into(),
                ));
            }
        }
        let beta = if matches!(self.kind, DgpKind::HighDimLogistic) {
            let mut rng = self.rng(PARAM_STREAM);
            let u = Uniform::new(-2.0, 2.0).expect("valid range");
            (0..HIGHDIM_DIM).map(|_| u.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };
        Ok(DgpModel {
            kind: self.kind.clone(),
            beta,
        })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// One instance of size `n`, deterministic per (spec, seed).
    pub fn generate(&self) -> Result<GeneratedInstance, SimError> {
        self.generate_stream(1)
    }

    /// One instance drawn from the given substream of the spec's seed.
    pub fn generate_stream(&self, stream: u64) -> Result<GeneratedInstance, SimError> {
        let model = self.model()?;
        let mut rng = self.rng(stream);
        Ok(model.sample_instance(self.n, &mut rng))
    }
}

impl DgpModel {
    pub fn dim(&self) -> usize {
        match self.kind {
            DgpKind::HighDimLogistic => HIGHDIM_DIM,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &DgpKind {
        &self.kind
    }

    /// True observation probability at `x`.
    pub fn propensity(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DgpKind::Setting1 => 0.9 - 0.02 * x[0],
            DgpKind::Setting2 => 0.8 - 0.1 * (1.0 + 0.1 * x[0]) * (3.0 * x[0]).sin(),
            DgpKind::HighDimLogistic => {
                let g = highdim_gamma();
                let lin: f64 = 1.2 + g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                sigmoid(lin)
            }
            DgpKind::DiscreteUniform { levels } => 0.9 - 0.5 * x[0] / *levels as f64,
            DgpKind::CustomLinear {
                intercept, slope, ..
            } => intercept + slope * x[0],
        }
    }

    /// The true propensity wrapped as a model. The clamp is set far below
    /// the defaults so it never distorts these closed forms (Setting 2
    /// peaks above 1 - 1e-3).
    pub fn propensity_model(&self) -> PropensityModel<f64> {
        let this = self.clone();
        PropensityModel::known(move |x: &[f64]| this.propensity(x))
            .with_clamp(1e-9)
            .expect("valid clamp")
    }

    pub fn sample_x(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.kind {
            DgpKind::Setting1 | DgpKind::Setting2 => {
                vec![Uniform::new(0.0, 10.0).expect("valid").sample(rng)]
            }
            DgpKind::HighDimLogistic => {
                let normal = Normal::new(1.0, 2.0f64.sqrt()).expect("valid");
                (0..HIGHDIM_DIM).map(|_| normal.sample(rng)).collect()
            }
            DgpKind::DiscreteUniform { levels } => {
                vec![rng.random_range(0..*levels) as f64]
            }
            DgpKind::CustomLinear { x_min, x_max, .. } => {
                vec![Uniform::new(*x_min, *x_max).expect("valid").sample(rng)]
            }
        }
    }

    pub fn sample_y(&self, x: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        match &self.kind {
            DgpKind::Setting1 | DgpKind::Setting2 => {
                Normal::new(x[0], 3.0 + x[0]).expect("valid").sample(rng)
            }
            DgpKind::HighDimLogistic => {
                let mean: f64 =
                    5.0 + self.beta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                let sd = (norm_sq / HIGHDIM_DIM as f64).max(1e-6);
                Normal::new(mean, sd).expect("valid").sample(rng)
            }
            DgpKind::DiscreteUniform { .. } => Normal::new(x[0], 1.0 + 0.5 * x[0])
                .expect("valid")
                .sample(rng),
            DgpKind::CustomLinear { .. } => Normal::new(x[0], 3.0 + x[0].abs())
                .expect("valid")
                .sample(rng),
        }
    }

    pub fn sample_instance(&self, n: usize, rng: &mut ChaCha8Rng) -> GeneratedInstance {
        let mut rows = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        let mut propensities = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.sample_x(rng);
            let p = self.propensity(&x);
            let observed = rng.random::<f64>() < p;
            let y = self.sample_y(&x, rng);
            rows.push(x);
            mask.push(observed);
            outcomes.push(y);
            propensities.push(p);
        }
        let masked = mask
            .iter()
            .zip(&outcomes)
            .map(|(&a, &y)| if a { Some(y) } else { None })
            .collect();
        let dataset =
            MaskedDataset::from_rows(rows, mask, masked).expect("generated data is valid");
        GeneratedInstance {
            dataset,
            outcomes,
            propensities,
        }
    }

    /// Whether the observation probability is monotone in the (1-d)
    /// feature, making propensity bins feature intervals.
    pub fn has_interval_bins(&self) -> bool {
        matches!(
            self.kind,
            DgpKind::Setting1 | DgpKind::CustomLinear { .. }
        )
    }

    /// Feature range of the 1-d processes.
    fn x_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            DgpKind::Setting1 | DgpKind::Setting2 => Some((0.0, 10.0)),
            DgpKind::CustomLinear { x_min, x_max, .. } => Some((*x_min, *x_max)),
            _ => None,
        }
    }

    /// Inverse of a monotone linear observation probability.
    fn x_of_propensity(&self, p: f64) -> Option<f64> {
        match &self.kind {
            DgpKind::Setting1 => Some((0.9 - p) / 0.02),
            DgpKind::CustomLinear {
                intercept, slope, ..
            } => {
                if *slope == 0.0 {
                    None
                } else {
                    Some((p - intercept) / slope)
                }
            }
            _ => None,
        }
    }

    /// The feature interval mapped onto propensity cell `k` (monotone 1-d
    /// processes only), clipped to the feature range.
    pub fn bin_feature_interval(&self, bin: i64, epsilon: f64) -> Option<(f64, f64)> {
        if !self.has_interval_bins() {
            return None;
        }
        let (x_min, x_max) = self.x_range()?;
        let edge = |k: i64| {
            let z = (1.0 + epsilon).powi(k as i32);
            z / (1.0 + z)
        };
        let p_lo = edge(bin);
        let p_hi = edge(bin + 1);
        let a = self.x_of_propensity(p_lo)?;
        let b = self.x_of_propensity(p_hi)?;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo = lo.max(x_min);
        let hi = hi.min(x_max);
        if lo < hi {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// Uniform feature draw conditioned on the propensity cell of `x`,
    /// falling back to the original point when the cell interval collapses.
    pub fn resample_x_in_same_bin(
        &self,
        x: &[f64],
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let p = self.propensity(x);
        let odds = p / (1.0 - p);
        let k = (odds.ln() / epsilon.ln_1p()).floor() as i64;
        // Settle the boundary the same way bin assignment does.
        let edge = |k: i64| {
            let z = (1.0 + epsilon).powi(k as i32);
            z / (1.0 + z)
        };
        let mut k = k;
        for _ in 0..3 {
            if p < edge(k) {
                k -= 1;
            } else {
                break;
            }
        }
        for _ in 0..3 {
            if p >= edge(k + 1) {
                k += 1;
            } else {
                break;
            }
        }
        if let Some((lo, hi)) = self.bin_feature_interval(k, epsilon) {
            let u = Uniform::new(lo, hi).expect("nonempty interval");
            // Reject the rare boundary draws that round into a neighbor cell.
            for _ in 0..16 {
                let candidate = u.sample(rng);
                let pc = self.propensity(&[candidate]);
                if pc >= edge(k) && pc < edge(k + 1) {
                    return vec![candidate];
                }
            }
        }
        x.to_vec()
    }
}
