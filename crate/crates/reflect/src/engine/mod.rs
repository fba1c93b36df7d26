//! Time-stepping integrators with oblique reflection and local-time
//! accounting, plus the deterministic parallel RNG contract.

pub mod rng;
pub mod sde;
pub mod step;
pub mod toy;
pub mod window;

pub use rng::{inverse_normal_cdf, normal_cdf, NoiseSource, RngStream, ZeroNoise};
pub use sde::{simulate_ball, simulate_cylinder, simulate_sder, RecordMode, ReflectedPath, SimConfig};
pub use step::{step_ball, step_reflected, EngineError, StepOutcome};
pub use toy::{simulate_toy, toy_diagnostics, toy_strong_law_constant};
pub use window::{default_s4, rescaled_window, window_schedule};
