use fishbridge_core::model::uniform_grid;
use fishbridge_core::{
    duality_residual, eval_reversion, feller_check, weight_from_reversion, ApplicationParams, Reversion,
    ReversionSpec, Weight, WeightSpec,
};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ReversionSpec> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|c| ReversionSpec::PowerLaw { c }),
        (0.05f64..2.0).prop_map(|epsilon| ReversionSpec::Application { epsilon }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_weight_starts_at_one(spec in spec_strategy(), m in 0.3f64..3.0) {
        prop_assert_eq!(weight_from_reversion(&spec, 1.0, m, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn duality_holds_at_random_times(spec in spec_strategy(), m in 0.3f64..3.0, t in 0.01f64..0.99) {
        let scale = (m + 1.0) * weight_from_reversion(&spec, 1.0, m, t).unwrap().powf(1.0 / m);
        let r = duality_residual(&spec, 1.0, m, t).unwrap();
        prop_assert!((r / scale).abs() <= 1e-8, "residual {} scale {}", r, scale);
    }

    #[test]
    fn power_law_dual_matches_closed_form(c in 0.2f64..3.0, m in 0.3f64..3.0, t in 0.0f64..0.999, horizon in 0.5f64..3.0) {
        let t = t * horizon;
        let dual = weight_from_reversion(&ReversionSpec::PowerLaw { c }, horizon, m, t).unwrap();
        let closed = Weight::new(WeightSpec::PowerLaw { c, m }, m, horizon).unwrap().w(t).unwrap();
        prop_assert!(((dual - closed) / closed).abs() <= 1e-10, "{} vs {}", dual, closed);
    }

    #[test]
    fn application_dual_matches_closed_form(epsilon in 0.05f64..2.0, m in 0.3f64..3.0, t in 0.0f64..0.999) {
        let dual = weight_from_reversion(&ReversionSpec::Application { epsilon }, 1.0, m, t).unwrap();
        let closed = Weight::new(WeightSpec::ApplicationForm { epsilon, m }, m, 1.0).unwrap().w(t).unwrap();
        prop_assert!(((dual - closed) / closed).abs() <= 1e-10, "{} vs {}", dual, closed);
    }

    #[test]
    fn application_rate_dominates_unit_power_law(epsilon in 0.01f64..5.0, t in 0.0f64..0.9999) {
        let h = eval_reversion(&ReversionSpec::Application { epsilon }, 1.0, t).unwrap();
        prop_assert!(h >= 1.0 / (1.0 - t));
    }
}

/// `z = w^{1/m}` solves `z' = (h'/h - h/(m+1)) z`; checked with centred differences.
#[test]
fn dual_weight_solves_its_ode() {
    let cases = [
        (ReversionSpec::PowerLaw { c: 0.5 }, 2.0),
        (ReversionSpec::PowerLaw { c: 1.4 }, 0.5),
        (ReversionSpec::Application { epsilon: 0.1842 }, 1.0),
        (ReversionSpec::Application { epsilon: 0.137 }, 1.5),
    ];
    for (spec, m) in cases {
        let reversion = Reversion::new(spec.clone(), 1.0).unwrap();
        let weight = Weight::dual_to(&reversion, m).unwrap();
        let d = 1e-5;
        for k in 1..20 {
            let t = k as f64 / 20.0;
            let dz = (weight.z(t + d).unwrap() - weight.z(t - d).unwrap()) / (2.0 * d);
            let h = reversion.rate(t).unwrap();
            let dh = (reversion.rate(t + d).unwrap() - reversion.rate(t - d).unwrap()) / (2.0 * d);
            let z = weight.z(t).unwrap();
            let rhs = (dh / h - h / (m + 1.0)) * z;
            assert!((dz - rhs).abs() <= 1e-6 * z.abs(), "{spec:?} m={m} t={t}: {dz} vs {rhs}");
        }
    }
}

#[test]
fn identified_models_are_high_volatility_everywhere() {
    let grid: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
    for p in [ApplicationParams::IDENTIFIED_2023, ApplicationParams::IDENTIFIED_2024] {
        let report = feller_check(&p.model(1.0), &grid).unwrap();
        assert!(report.high_volatility);
        assert_eq!(report.first_violation, None);
    }
    assert_eq!(uniform_grid(1.0, 4), vec![0.0, 0.25, 0.5, 0.75]);
}
