//! Randomized invariants of the stepping engine and the harness plumbing.

use proptest::prelude::*;

use reflect::engine::{
    simulate_sder, step_ball, step_reflected, RecordMode, RngStream, SimConfig,
};
use reflect::harness::ConfigFile;
use reflect::model::{CoefficientModel, ReflectionField};

fn canonical(beta: f64) -> CoefficientModel {
    CoefficientModel::canonical(beta, 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// A single reflected step lands in the closed domain with a nonnegative
    /// local-time increment, and the increment is positive iff it reflected.
    #[test]
    fn reflected_step_stays_inside(
        beta_idx in 0usize..3,
        x in 2.0f64..50.0,
        yfrac in -0.995f64..0.995,
        dwx in -0.3f64..0.3,
        dwy in -0.6f64..0.6,
    ) {
        let model = canonical([-0.25, 0.0, 0.5][beta_idx]);
        let y = yfrac * model.domain.boundary.value(x);
        let out = step_reflected(&model, &[x, y], &[dwx, dwy], 8).unwrap();
        prop_assert!(model.domain.contains(&out.z_next), "landed outside: {:?}", out.z_next);
        prop_assert!(out.local_time_increment >= 0.0);
        prop_assert_eq!(out.reflected, out.local_time_increment > 0.0);
    }

    /// The ball step stays in the closed unit ball for normal reflection.
    #[test]
    fn ball_step_stays_inside(
        r in 0.0f64..0.999,
        angle in 0.0f64..std::f64::consts::TAU,
        dx in -0.5f64..0.5,
        dy in -0.5f64..0.5,
    ) {
        let refl = ReflectionField::normal(1.0, 1.0);
        let mut y = vec![r * angle.cos(), r * angle.sin()];
        let (dl, _) = step_ball(&refl, &mut y, &[dx, dy], 16).unwrap();
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= 1.0 + 1e-12, "|y| = {norm}");
        prop_assert!(dl >= 0.0);
    }

    /// Over a whole path: local time is nondecreasing and the horizontal
    /// coordinate satisfies X_T = x_0 + (martingale part) + s_0 L_T exactly.
    #[test]
    fn path_local_time_decomposition(seed in 0u64..500, beta_idx in 0usize..2) {
        let model = canonical([0.0, 0.5][beta_idx]);
        let cfg = SimConfig::new(0.01, 5.0, vec![10.0, 0.0], RecordMode::Stride(1));
        let mut rng = RngStream::new(seed, 0);
        let path = match simulate_sder(&model, &cfg, &mut rng) {
            Ok(p) => p,
            // The unconstrained x-noise can reach the origin guard for a few
            // seeds; those paths are simply not this property's subject.
            Err(_) => return Ok(()),
        };
        for w in path.local_time.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        let x_t = path.terminal_state()[0];
        let recon = 10.0 + path.martingale_x + model.reflection.s0 * path.terminal_local_time();
        prop_assert!((x_t - recon).abs() <= 1e-9 * x_t.abs().max(1.0));
    }

    /// Identical (seed, stream) pairs reproduce; distinct streams diverge.
    #[test]
    fn rng_streams_reproduce_and_separate(seed in 0u64..u64::MAX / 2, stream in 0u64..1000) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        let va: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        prop_assert_eq!(&va, &vb);
        let mut c = RngStream::new(seed, stream + 1);
        let vc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        prop_assert_ne!(&va, &vc);
    }

    /// CSV floats use the shortest round-trip form, so parsing them back
    /// recovers the exact bits.
    #[test]
    fn display_floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let parsed: f64 = format!("{v}").parse().unwrap();
        prop_assert_eq!(parsed.to_bits(), v.to_bits());
    }
}

/// The config hash canonicalizes key order.
#[test]
fn config_hash_ignores_key_order() {
    let a = ConfigFile::from_str(
        r#"{"id": "t", "experiment": "toy", "toy": {"c_prime": 1.0, "beta": 0.0},
            "sim": {"dt": 0.01, "t": 10.0, "n_paths": 50, "seed": 7, "z0": [1.0]},
            "analysis": {"var_tol": 0.5}}"#,
    )
    .unwrap();
    let b = ConfigFile::from_str(
        r#"{"experiment": "toy", "analysis": {"var_tol": 0.5},
            "sim": {"seed": 7, "z0": [1.0], "t": 10.0, "dt": 0.01, "n_paths": 50},
            "toy": {"beta": 0.0, "c_prime": 1.0}, "id": "t"}"#,
    )
    .unwrap();
    assert_eq!(a.canonical_hash(), b.canonical_hash());
}
