//! Statistical estimators and deterministic checks that confront simulation
//! output with the limit theorems and closed-form constants.

pub mod checks;
pub mod ks;
pub mod lyapunov;
pub mod stats;

pub use checks::{
    additive_functional_check, clt_check, ergodic_moments, growth_exponent,
    local_time_consistency, strong_law_check, toy_clt_check, tv_mixing_estimate,
    uniform_ball_cdf_1d, window_law_check, y_law_check, y_law_self_test, AnalysisError,
    CltReport, LocalTimeRow, MuMoments, TvReport, WindowReport,
};
pub use ks::{kolmogorov_p, ks_one_sample, ks_two_sample};
pub use lyapunov::{
    g_derivatives, lyapunov_asymptotics_check, lyapunov_eval, DecayReport, DecayRow,
    LyapunovEval,
};
pub use stats::{batch_means, correlation, mean_iid, ols_slope, variance_iid, CiMethod, EstimateWithCI};
