use fishbridge_core::control::{cost_of_migration, optimal_control};
use fishbridge_core::moments::{mean_closed, var_closed};
use fishbridge_core::simulate::{
    coupled_difference, empirical_objective, run, simulate_bridge, simulate_controlled, NodeMoments, PathBounds,
    StepPlan, ZeroHits,
};
use fishbridge_core::stats::Moments;
use fishbridge_core::{ApplicationParams, BridgeModel};

fn z(a: &Moments, b: &Moments) -> f64 {
    (a.mean() - b.mean()).abs() / (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt()
}

#[test]
fn paths_are_non_negative_and_pinned() {
    let models = [
        ApplicationParams::IDENTIFIED_2023.model(1.0),
        ApplicationParams::IDENTIFIED_2024.model(1.0),
        BridgeModel::power_law(1.0, 3.0, 1.4, 2.0, 1.0),
    ];
    for model in &models {
        let plan = StepPlan::bridge(model, 1e-3 * model.horizon).unwrap();
        let b = run(&plan, 3000, 5, &PathBounds).unwrap();
        assert!(b.min >= 0.0);
        assert_eq!(b.max_abs_start, 0.0);
        assert_eq!(b.max_abs_end, 0.0);
    }
    let model = BridgeModel::power_law(1.0, 2.0, 1.0, 1.0, 1.0);
    let ens = simulate_controlled(&model, |t| Ok(5.0 + t), 200, 1e-3, 2, 0.7).unwrap();
    assert!(ens.paths().all(|p| p[0] == 0.7 && p.iter().all(|&x| x >= 0.0)));
}

#[test]
fn bridge_mean_matches_closed_form_mid_day() {
    let p = ApplicationParams::IDENTIFIED_2023;
    let plan = StepPlan::bridge(&p.model(1.0), 1e-4).unwrap();
    let nodes = vec![plan.node(0.25), plan.node(0.5), plan.node(0.75)];
    let acc = run(&plan, 20_000, 17, &NodeMoments { nodes: nodes.clone() }).unwrap();
    for (m, &k) in acc.iter().zip(&nodes) {
        let t = plan.time(k);
        let exact = mean_closed(&p, t).unwrap();
        assert!((m.mean() - exact).abs() <= 4.0 * m.standard_error(), "t={t}: {} vs {exact}", m.mean());
        let var = var_closed(&p, t).unwrap();
        let var_se = 2.0 * m.sd() * m.sd_standard_error();
        assert!((m.variance() - var).abs() <= 4.0 * var_se, "t={t}: {} ± {var_se} vs {var}", m.variance());
    }
}

#[test]
fn reversion_rate_as_control_reproduces_the_bridge() {
    let model = BridgeModel::power_law(1.0, 0.5, 1.0, 1.0, 1.0);
    let reversion = model.reversion().unwrap();
    let bridge = StepPlan::bridge(&model, 1e-4).unwrap();
    let controlled = StepPlan::controlled(&model, |t| reversion.rate(t), 1e-4, 0.0).unwrap();
    let nodes = vec![bridge.node(0.25), bridge.node(0.5), bridge.node(0.75), bridge.node(0.999)];
    let a = run(&bridge, 20_000, 1, &NodeMoments { nodes: nodes.clone() }).unwrap();
    let b = run(&controlled, 20_000, 2, &NodeMoments { nodes }).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(z(x, y) < 4.0, "{} vs {}", x.mean(), y.mean());
        let ratio = x.variance() / y.variance();
        assert!((ratio - 1.0).abs() < 0.1, "variance ratio {ratio}");
    }
}

#[test]
fn objective_under_reversion_rate_is_the_cost_of_migration() {
    // a = 1, sigma = 0.5, c = 1, m = 1: E[X_t] = (1 - t) ln(1 / (1 - t)) and the
    // running cost over the last step [T - dt, T] integrates in closed form to
    // sqrt(dt) (ln(1/dt) + 2), which the estimate leaves out.
    let model = BridgeModel::power_law(1.0, 0.5, 1.0, 1.0, 1.0);
    let c0 = cost_of_migration(&model, &[0.0]).unwrap()[0];
    assert!((c0 - 2.0).abs() < 1e-9);
    let reversion = model.reversion().unwrap();
    let weight = model.weight().unwrap();
    for (dt, n) in [(1e-3, 20_000), (1e-4, 20_000)] {
        let plan = StepPlan::controlled(&model, |t| reversion.rate(t), dt, 0.0).unwrap();
        let est = empirical_objective(&plan, &weight, None, n, 7).unwrap();
        let target = c0 - dt.sqrt() * ((1.0 / dt).ln() + 2.0);
        assert!(
            (est.running_mean - target).abs() <= 3.0 * est.running_se,
            "dt={dt}: {} ± {} vs {target}",
            est.running_mean,
            est.running_se
        );
    }
}

#[test]
fn optimal_control_beats_a_scaled_control() {
    let model = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let weight = model.weight().unwrap();
    for eta in [1e-2, 1e-3] {
        let ustar = |t: f64| optimal_control(&weight, Some(eta), t);
        let optimal = StepPlan::controlled(&model, ustar, 1e-4, 0.0).unwrap();
        let scaled = StepPlan::controlled(&model, |t| Ok(1.5 * ustar(t)?), 1e-4, 0.0).unwrap();
        let a = empirical_objective(&optimal, &weight, Some(eta), 10_000, 21).unwrap();
        let b = empirical_objective(&scaled, &weight, Some(eta), 10_000, 21).unwrap();
        let diffs: Vec<f64> = b.per_path.iter().zip(&a.per_path).map(|(x, y)| x - y).collect();
        let d = Moments::from_slice(&diffs);
        assert!(d.mean() > 3.0 * d.standard_error(), "eta={eta}: {} ± {}", d.mean(), d.standard_error());
    }
}

#[test]
fn terminal_state_shrinks_with_the_penalty() {
    let model = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let weight = model.weight().unwrap();
    let mut previous = f64::INFINITY;
    for eta in [1e-1, 1e-2, 1e-3] {
        let plan = StepPlan::controlled(&model, |t| optimal_control(&weight, Some(eta), t), 1e-4, 0.0).unwrap();
        let est = empirical_objective(&plan, &weight, Some(eta), 5_000, 4).unwrap();
        assert!(est.terminal_mean + 3.0 * est.terminal_se < previous, "eta={eta}: {}", est.terminal_mean);
        previous = est.terminal_mean;
    }
    assert!(previous < 0.01, "{previous}");
}

#[test]
fn interior_zeros_follow_the_volatility_regime() {
    let high = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let low = BridgeModel::power_law(1.0, 0.5, 0.5, 1.0, 1.0);
    let mut fractions = Vec::new();
    for model in [&high, &low] {
        let plan = StepPlan::bridge(model, 1e-4).unwrap();
        let observer = ZeroHits { first: plan.node(0.1), last: plan.node(0.9) };
        let (hits, total) = run(&plan, 2_000, 8, &observer).unwrap();
        fractions.push(hits as f64 / total as f64);
    }
    assert!(fractions[0] > 0.05, "{fractions:?}");
    assert!(fractions[1] < 1e-3, "{fractions:?}");
}

#[test]
fn discretization_bias_is_below_noise_mid_day() {
    let p = ApplicationParams::IDENTIFIED_2023;
    let model = p.model(1.0);
    let exact = mean_closed(&p, 0.5).unwrap();
    for dt in [5e-4, 2.5e-4] {
        let (diff, fine) = coupled_difference(&model, dt, 0.5, 200_000, 11).unwrap();
        assert!(diff.mean().abs() <= 3.0 * diff.standard_error(), "dt={dt}: {diff:?}");
        assert!((fine.mean() - exact).abs() <= 4.0 * fine.standard_error());
    }
    let near_end = coupled_difference(&model, 5e-4, 0.999, 10, 1);
    assert!(near_end.is_err());
}

#[test]
fn deterministic_and_degenerate_paths() {
    let model = BridgeModel::power_law(1.0, 0.0, 0.5, 1.0, 1.0);
    let ens = simulate_bridge(&model, 3, 1e-4, 0).unwrap();
    let k = (0.75 / ens.dt).round() as usize;
    for p in ens.paths() {
        assert!((p[k] - 0.5).abs() <= 2e-4, "{}", p[k]);
    }
    let free = simulate_controlled(&model, |_| Ok(0.0), 2, 1e-3, 0, 0.0).unwrap();
    let last = free.path(1)[free.width() - 1];
    assert!((last - 1.0).abs() < 1e-12);
}
