//! A simulation and verification laboratory for obliquely reflected
//! diffusions in generalized parabolic domains.
//!
//! The crate simulates the reflected SDE on domains
//! `{(x, y): x >= 0, |y| <= b(x)}` with `b(x) ~ a_inf * x^beta`, estimates the
//! superdiffusive limit constants and laws by Monte Carlo, and evaluates the
//! deterministic formulas (Lyapunov functions, asymptotic constants) directly.
//!
//! The accompanying guide in `book/` walks through the concepts; the examples
//! there mirror the doc-tests below.
//!
//! ```
//! use reflect::model::CoefficientModel;
//!
//! // Identity diffusion, normal reflection, unit half-cylinder: the
//! // horizontal speed constant is 1/2.
//! let model = CoefficientModel::canonical(0.0, 1);
//! assert_eq!(model.c1_constant(), 0.5);
//! ```

pub mod analysis;
pub mod engine;
pub mod geometry;
pub mod harness;
pub mod model;
