use proptest::prelude::*;
use spca_analysis::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lower_bound_monotone(delta in 0.05f64..5.0, r in 0.0f64..0.9, sigma in 0.0f64..3.0, t in 1.0f64..1e7) {
        let gamma = r * delta;
        let base = lower_bound_s(delta, gamma, sigma, t).unwrap().s;
        prop_assert!(base >= 0.0);
        prop_assert!(lower_bound_s(delta, gamma, sigma, t * 2.0).unwrap().s <= base);
        let g2 = (gamma * 1.1).min(0.95 * delta).max(gamma);
        prop_assert!(lower_bound_s(delta, g2, sigma, t).unwrap().s >= base);
        prop_assert!(lower_bound_s(delta, gamma, sigma * 1.2 + 1e-3, t).unwrap().s >= base);
    }

    #[test]
    fn excess_over_plateau_is_root_horizon_ratio(delta in 0.05f64..5.0, r in 1e-9f64..0.9, sigma in 0.01f64..3.0, m in 1.0f64..1e4) {
        let gamma = r * delta;
        let tstar = lower_bound_s(delta, gamma, sigma, 1.0).unwrap().t_star;
        let t = (tstar * m).max(1.0);
        let lb = lower_bound_s(delta, gamma, sigma, t).unwrap();
        let excess = lb.s / lb.plateau - 1.0;
        prop_assert!((excess - (tstar / t).sqrt()).abs() <= 1e-9 * (1.0 + excess));
        if t >= 400.0 * tstar {
            prop_assert!(excess <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn noise_bound_optimum(p in 1usize..200, logt in 1.0f64..30.0, g in 1e-9f64..1e-2, c in 0.1f64..5.0) {
        let t = logt.exp();
        let nb = noise_bound(p, t, 1.0, g, c).unwrap();
        let at = noise_bound(p, t, nb.b_star.max(1.0), g, c).unwrap();
        if nb.b_star >= 1.0 {
            prop_assert!((at.value - nb.min_value).abs() <= 1e-10 * nb.min_value);
        }
        prop_assert!(at.value >= nb.min_value * (1.0 - 1e-12));
    }

    #[test]
    fn hypothesis_angles_respect_drift(delta in 0.1f64..4.0, r in 0.0f64..0.5, sigma in 0.01f64..2.0, t in 1usize..3000) {
        let h = hypothesis_angles(delta, r * delta, sigma, t).unwrap();
        let step = (r).asin();
        for w in h.theta.windows(2) {
            prop_assert!(w[1] - w[0] <= step + 1e-15);
            prop_assert!(w[1] >= w[0]);
        }
    }
}

#[test]
fn ten_crossovers_is_not_within_five_percent() {
    // s(10 T*) / s(∞) − 1 = 1/√10 for every parameter choice.
    let lb0 = lower_bound_s(1.0, 1e-6, 1.0, 1.0).unwrap();
    let lb = lower_bound_s(1.0, 1e-6, 1.0, 10.0 * lb0.t_star).unwrap();
    let excess = lb.s / lb.plateau - 1.0;
    assert!((excess - 10f64.sqrt().recip()).abs() < 1e-9);
}

#[test]
fn stationary_report_serialises_with_spec_keys() {
    let r = check_assumptions(&BoundInputs::new(0.1, 1.0, 1.0, 0.0, 50, 1e6, 1.0).with_k(3));
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["s_lower", "t_star", "B", "L", "Delta", "eta", "phi", "a1", "a2", "a3", "a4", "margins", "C"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["t_star"].is_null());
}
