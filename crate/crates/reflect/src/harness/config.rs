//! JSON experiment configuration: schema, validation, and model building.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryFunction, ParabolicDomain, DEFAULT_X_GUARD};
use crate::model::{CoefficientModel, DiffusionField, DiffusionKind, ReflectionField};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A config file is either a single run or a bundle of runs executed in
/// order, sharing one output directory and summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Bundle { runs: Vec<RunConfig> },
    Single(RunConfig),
}

impl ConfigFile {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let parsed: ConfigFile =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for run in parsed.runs() {
            run.validate()?;
        }
        Ok(parsed)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn runs(&self) -> Vec<&RunConfig> {
        match self {
            ConfigFile::Bundle { runs } => runs.iter().collect(),
            ConfigFile::Single(run) => vec![run],
        }
    }

    /// Hash of the canonicalized (sorted-key) JSON bytes.
    pub fn canonical_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        // serde_json maps are BTree-backed, so serialization sorts keys.
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = Sha256::new();
        hasher.update(bytes.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Replaces every run's master seed.
    pub fn override_seed(&mut self, seed: u64) {
        match self {
            ConfigFile::Bundle { runs } => {
                for r in runs {
                    r.sim.seed = seed;
                }
            }
            ConfigFile::Single(run) => run.sim.seed = seed,
        }
    }
}

/// One experiment run: identifier, experiment payload, simulation block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub id: String,
    #[serde(flatten)]
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub sim: SimBlock,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.id.is_empty() {
            return Err(ConfigError::Invalid("id must be non-empty".into()));
        }
        if self.sim.n_paths < 1 {
            return Err(ConfigError::Invalid("sim.n_paths must be >= 1".into()));
        }
        if !(self.sim.dt > 0.0) {
            return Err(ConfigError::Invalid("sim.dt must be positive".into()));
        }
        if let Some(model) = self.model_config() {
            model.build()?;
        }
        if let ExperimentKind::Toy { toy, .. } = &self.experiment {
            if !(-1.0 < toy.beta && toy.beta < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "toy.beta must lie in (-1,1), got {}",
                    toy.beta
                )));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> Option<&ModelConfig> {
        match &self.experiment {
            ExperimentKind::Simulate { model, .. }
            | ExperimentKind::Ergodic { model, .. }
            | ExperimentKind::Clt { model, .. }
            | ExperimentKind::PhaseScan { model, .. }
            | ExperimentKind::Window { model, .. }
            | ExperimentKind::Lyapunov { model, .. }
            | ExperimentKind::Validate { model, .. }
            | ExperimentKind::Mixing { model, .. }
            | ExperimentKind::Engineering { model, .. } => Some(model),
            ExperimentKind::Toy { .. } => None,
        }
    }
}

/// The experiment discriminator and its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Ensemble on the parabolic domain; strong-law and local-time checks.
    Simulate {
        model: ModelConfig,
        #[serde(default)]
        analysis: SimulateAnalysis,
    },
    /// Ball-process time averaging for invariant-law moments.
    Ergodic {
        model: ModelConfig,
        #[serde(default)]
        analysis: ErgodicAnalysis,
    },
    /// Terminal-fluctuation CLT, normality, and independence checks.
    Clt {
        model: ModelConfig,
        #[serde(default)]
        analysis: CltAnalysis,
    },
    /// One-dimensional toy diffusion checks.
    Toy {
        toy: ToyBlock,
        #[serde(default)]
        analysis: ToyAnalysis,
    },
    /// Variance growth exponents across a beta grid.
    PhaseScan {
        model: ModelConfig,
        analysis: PhaseScanAnalysis,
    },
    /// Rescaled moving-window law against the cylinder limit.
    Window {
        model: ModelConfig,
        analysis: WindowAnalysis,
    },
    /// Deterministic Lyapunov formula checks.
    Lyapunov {
        model: ModelConfig,
        #[serde(default)]
        analysis: LyapunovAnalysis,
    },
    /// Assumption validator report.
    Validate {
        model: ModelConfig,
        #[serde(default = "default_true")]
        expect_valid: bool,
    },
    /// Total-variation mixing of the ball process from antipodal starts.
    Mixing {
        model: ModelConfig,
        analysis: MixingAnalysis,
    },
    /// Determinism and numerical-quality property checks.
    Engineering {
        model: ModelConfig,
        #[serde(default)]
        analysis: EngineeringAnalysis,
    },
}

pub fn default_true() -> bool {
    true
}

/// Simulation block shared by all stochastic experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimBlock {
    pub dt: f64,
    /// Horizon in model time.
    pub t: f64,
    pub n_paths: usize,
    /// Master seed; stream i drives path i. No wall-clock default.
    pub seed: u64,
    #[serde(default)]
    pub z0: Vec<f64>,
    /// Recording stride in steps: 0 keeps only endpoints, k keeps every k-th.
    #[serde(default)]
    pub stride: usize,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t: 1.0,
            n_paths: 1,
            seed: 0,
            z0: Vec::new(),
            stride: 0,
        }
    }
}

impl SimBlock {
    pub fn record_mode(&self) -> crate::engine::RecordMode {
        match self.stride {
            0 => crate::engine::RecordMode::TerminalOnly,
            1 => crate::engine::RecordMode::Full,
            k => crate::engine::RecordMode::Stride(k),
        }
    }
}

/// Model block: boundary family, transverse dimension, coefficient fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub boundary: BoundaryFunction,
    pub dim_y: usize,
    #[serde(default = "default_guard")]
    pub x_guard: f64,
    pub diffusion: DiffusionConfig,
    pub reflection: ReflectionField,
}

fn default_guard() -> f64 {
    DEFAULT_X_GUARD
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub kind: String,
    pub sigma_inf: Vec<Vec<f64>>,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub decay_exponent: f64,
}

impl ModelConfig {
    pub fn build(&self) -> Result<CoefficientModel, ConfigError> {
        // Re-run the constructor so hand-edited JSON cannot smuggle in an
        // invalid family.
        let boundary =
            BoundaryFunction::new(self.boundary.kind, self.boundary.beta, self.boundary.a_inf)
                .map_err(|e| ConfigError::Invalid(format!("model.boundary: {e}")))?;
        if self.dim_y < 1 {
            return Err(ConfigError::Invalid("model.dim_y must be >= 1".into()));
        }
        let domain = ParabolicDomain::new(boundary, self.dim_y, self.x_guard);
        let n = 1 + self.dim_y;
        if self.diffusion.sigma_inf.len() != n
            || self.diffusion.sigma_inf.iter().any(|r| r.len() != n)
        {
            return Err(ConfigError::Invalid(format!(
                "model.diffusion.sigma_inf must be a {n}x{n} matrix"
            )));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| self.diffusion.sigma_inf[i][j]);
        let kind = match self.diffusion.kind.as_str() {
            "constant" => DiffusionKind::Constant,
            "asymptotically_constant" => DiffusionKind::AsymptoticallyConstant {
                amplitude: self.diffusion.amplitude,
                decay_exponent: self.diffusion.decay_exponent,
            },
            other => {
                return Err(ConfigError::Invalid(format!(
                    "model.diffusion.kind: unknown kind {other:?}"
                )))
            }
        };
        let diffusion = DiffusionField::new(kind, sigma)
            .map_err(|e| ConfigError::Invalid(format!("model.diffusion: {e}")))?;
        if !(self.reflection.s0 > 0.0) {
            return Err(ConfigError::Invalid(
                "model.reflection.s0 must be positive".into(),
            ));
        }
        if !(self.reflection.c0 > 0.0) {
            return Err(ConfigError::Invalid(
                "model.reflection.c0 must be positive".into(),
            ));
        }
        CoefficientModel::new(domain, diffusion, self.reflection)
            .map_err(|e| ConfigError::Invalid(format!("model: {e}")))
    }

    /// Canonical model block of the given exponent and dimension; the unit
    /// building block of most reference configs.
    pub fn canonical(beta: f64, dim_y: usize) -> Self {
        let m = CoefficientModel::canonical(beta, dim_y);
        let n = 1 + dim_y;
        Self {
            boundary: m.domain.boundary.clone(),
            dim_y,
            x_guard: m.domain.x_guard,
            diffusion: DiffusionConfig {
                kind: "constant".into(),
                sigma_inf: (0..n)
                    .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
                amplitude: 0.0,
                decay_exponent: 0.0,
            },
            reflection: m.reflection,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimulateAnalysis {
    /// Relative tolerance on mean X_T/T^{1/(1+beta)} against c1.
    #[serde(default)]
    pub strong_law_tol: Option<f64>,
    /// Relative tolerance on L_T/T^{1/(1+beta)} against c1/s0 at the final
    /// time, plus the decreasing-balance check at T/4, T/2, T.
    #[serde(default)]
    pub local_time_c2_tol: Option<f64>,
    /// Number of leading paths dumped as full trace CSVs.
    #[serde(default)]
    pub trace_paths: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicAnalysis {
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Absolute tolerance on trace of the second moment against d/(d+2).
    #[serde(default)]
    pub second_moment_tol: Option<f64>,
}

impl Default for ErgodicAnalysis {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            second_moment_tol: None,
        }
    }
}

fn default_burn_in() -> f64 {
    crate::analysis::stats::DEFAULT_BURN_IN
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CltAnalysis {
    /// Relative tolerance on the fluctuation variance against Upsilon.
    #[serde(default)]
    pub var_tol: Option<f64>,
    #[serde(default)]
    pub ks_p_min: Option<f64>,
    /// Bound on |corr| between the fluctuation and the rescaled transverse
    /// coordinate.
    #[serde(default)]
    pub corr_max: Option<f64>,
    /// KS p threshold for Y_T/b(X_T) against Uniform(-1,1).
    #[serde(default)]
    pub y_law_p_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyBlock {
    pub c_prime: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ToyAnalysis {
    /// Relative tolerance on the normalized variance against
    /// (1+beta)/(1+3beta); requires beta > -1/3.
    #[serde(default)]
    pub var_tol: Option<f64>,
    /// Stabilization check: both A_t and the rescaled fluctuation change by
    /// less than `change_tol` between t/4 and t on at least `min_fraction`
    /// of paths.
    #[serde(default)]
    pub stabilization: Option<StabilizationCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationCheck {
    pub change_tol: f64,
    pub min_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScanAnalysis {
    pub betas: Vec<f64>,
    /// Geometric observation times; paths run to the maximum.
    pub times: Vec<f64>,
    #[serde(default)]
    pub slope_checks: Vec<SlopeCheck>,
    /// Also run the toy model at the same betas and compare slopes.
    #[serde(default)]
    pub toy_cross_check_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub beta: f64,
    pub target: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowAnalysis {
    /// Anchor times, increasing.
    pub anchors: Vec<f64>,
    pub s_max: f64,
    #[serde(default = "default_n_out")]
    pub n_out: usize,
    #[serde(default)]
    pub ks_p_min: Option<f64>,
    /// Require the KS statistic to be non-increasing across anchors.
    #[serde(default)]
    pub ks_nonincreasing: bool,
    /// Cylinder-oracle ensemble size for the x-increment comparison; 0 skips.
    #[serde(default)]
    pub oracle_n_paths: usize,
    #[serde(default)]
    pub oracle_seed: u64,
}

fn default_n_out() -> usize {
    11
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovAnalysis {
    #[serde(default = "default_x_lo")]
    pub x_lo: f64,
    #[serde(default = "default_x_hi")]
    pub x_hi: f64,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    #[serde(default = "default_n_dirs")]
    pub n_dirs: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_rel_tol: f64,
    /// Expect the three normalized deviations to vanish identically
    /// (exact cylinder model).
    #[serde(default)]
    pub expect_exact: bool,
}

impl Default for LyapunovAnalysis {
    fn default() -> Self {
        Self {
            x_lo: default_x_lo(),
            x_hi: default_x_hi(),
            n_x: default_n_x(),
            n_dirs: default_n_dirs(),
            grad_rel_tol: default_grad_tol(),
            expect_exact: false,
        }
    }
}

fn default_x_lo() -> f64 {
    1e2
}
fn default_x_hi() -> f64 {
    1e6
}
fn default_n_x() -> usize {
    17
}
fn default_n_dirs() -> usize {
    16
}
fn default_grad_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingAnalysis {
    pub t_grid: Vec<f64>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default)]
    pub tv_final_max: Option<f64>,
    /// Multiplier on the multinomial noise scale for the non-increase check.
    #[serde(default = "default_band")]
    pub noise_band_k: f64,
}

fn default_bins() -> usize {
    40
}
fn default_band() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineeringAnalysis {
    #[serde(default = "default_workers_compare")]
    pub workers_compare: Vec<usize>,
    #[serde(default = "default_residual")]
    pub sqrt_residual_max: f64,
    /// Step sizes for the coarse-to-fine ergodic-moment comparison,
    /// decreasing.
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_reps")]
    pub coverage_reps: usize,
    #[serde(default = "default_cov_min")]
    pub coverage_min: f64,
}

impl Default for EngineeringAnalysis {
    fn default() -> Self {
        Self {
            workers_compare: default_workers_compare(),
            sqrt_residual_max: default_residual(),
            dts: default_dts(),
            coverage_reps: default_reps(),
            coverage_min: default_cov_min(),
        }
    }
}

fn default_workers_compare() -> Vec<usize> {
    vec![1, 4]
}
fn default_residual() -> f64 {
    1e-10
}
fn default_dts() -> Vec<f64> {
    vec![4e-3, 2e-3, 1e-3]
}
fn default_reps() -> usize {
    200
}
fn default_cov_min() -> f64 {
    0.9
}
