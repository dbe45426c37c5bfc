use chrono::{NaiveDate, NaiveTime};
use fishbridge_core::calibrate::*;
use fishbridge_core::moments::{mean_closed, var_closed};
use fishbridge_core::simulate::{simulate_bridge, StepPlan};
use fishbridge_core::ApplicationParams;

fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 5, d).unwrap()
}

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).unwrap()
}

fn day_records(d: u32, counts: &[u64]) -> Vec<RawRecord> {
    counts
        .iter()
        .enumerate()
        .map(|(j, &count)| RawRecord {
            date: date(d),
            bin_start: hm(5 + (j as u32 * 10) / 60, (j as u32 * 10) % 60),
            count,
        })
        .collect()
}

fn sun(d: u32, bins: u32) -> SunRecord {
    let end = 5 * 60 + bins * 10;
    SunRecord {
        date: date(d),
        sunrise: hm(5, 0),
        sunset: hm(end / 60, end % 60),
    }
}

fn interior_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

#[test]
fn uniform_day_normalizes_to_constant_fractions() {
    let raw = day_records(1, &[7; 84]);
    let data = normalize_days(&raw, &[sun(1, 84)], &NormalizeOptions::default()).unwrap();
    let day = &data.days[0];
    assert_eq!(day.t.len(), 84);
    assert!(day.normalized.iter().all(|&v| (v - 1.0 / 84.0).abs() < 1e-15));
    assert!((day.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((day.t[0] - 0.5 / 84.0).abs() < 1e-12);
    assert!(data.warnings.is_empty());
}

#[test]
fn zero_days_are_flagged_and_missing_sun_skipped() {
    let mut raw = day_records(1, &[0; 20]);
    raw.extend(day_records(2, &[3; 20]));
    raw.extend(day_records(3, &[3; 20]));
    let data = normalize_days(&raw, &[sun(1, 20), sun(2, 20)], &NormalizeOptions::default()).unwrap();
    assert_eq!(data.days.len(), 2);
    assert!(data.days[0].zero_total);
    assert_eq!(data.excluded(), 1);
    assert_eq!(data.retained().count(), 1);
    assert!(data.warnings.iter().any(|w| w.contains("2023-05-03")));
}

#[test]
fn inverted_daylight_is_rejected() {
    let bad = SunRecord {
        date: date(1),
        sunrise: hm(18, 0),
        sunset: hm(6, 0),
    };
    assert!(normalize_days(&day_records(1, &[1; 12]), &[bad], &NormalizeOptions::default()).is_err());
}

#[test]
fn csv_round_trip() {
    let raw = day_records(4, &[0, 5, 12, 3, 0, 1, 2, 2, 9, 4]);
    let mut buf = Vec::new();
    write_raw(&mut buf, &raw).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("date,bin_start,count\n2023-05-04,05:00,0\n"));
    assert_eq!(read_raw(buf.as_slice()).unwrap(), raw);
    let s = vec![sun(4, 10)];
    let mut buf = Vec::new();
    write_sun(&mut buf, &s).unwrap();
    assert_eq!(read_sun(buf.as_slice()).unwrap(), s);
}

#[test]
fn day_correlations() {
    let a = &normalize_days(&day_records(1, &[1, 4, 2, 8, 5, 7, 3, 9, 0, 6]), &[sun(1, 10)], &NormalizeOptions::default())
        .unwrap()
        .days[0];
    let flat = &normalize_days(&day_records(2, &[3; 10]), &[sun(2, 10)], &NormalizeOptions::default())
        .unwrap()
        .days[0];
    let grid: Vec<f64> = (0..10).map(|j| (j as f64 + 0.5) / 10.0).collect();
    assert!((day_correlation(a, a, &grid).unwrap() - 1.0).abs() < 1e-12);
    assert!(day_correlation(a, flat, &grid).is_none());
    let report = successive_day_correlation(&[a.clone(), flat.clone()], &grid);
    assert!(report.pairs.is_empty() && report.summary.is_none());
}

#[test]
fn independent_synthetic_days_are_uncorrelated() {
    let model = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let data = generate_synthetic(&model, 120, 84, 31, &SyntheticOptions::default()).unwrap();
    let norm = normalize_days(&data.raw, &data.sun, &NormalizeOptions::default()).unwrap();
    let grid = default_grid(&norm.days, 0.01, 0.99).unwrap();
    let report = successive_day_correlation(&norm.days, &grid);
    let s = report.summary.unwrap();
    assert!(s.n_pairs > 100);
    assert!(s.t_statistic.abs() <= 3.0, "{s:?}");
}

#[test]
fn generator_edge_cases() {
    let model = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let empty = generate_synthetic(&model, 0, 84, 1, &SyntheticOptions::default()).unwrap();
    assert!(empty.raw.is_empty() && empty.sun.is_empty());
    assert!(generate_synthetic(&model, 3, 9, 1, &SyntheticOptions::default()).is_err());

    let silent = ApplicationParams {
        a0: 0.0,
        a1: 0.0,
        ..ApplicationParams::IDENTIFIED_2023
    }
    .model(1.0);
    let data = generate_synthetic(&silent, 4, 20, 1, &SyntheticOptions::default()).unwrap();
    assert_eq!(data.raw.len(), 80);
    let norm = normalize_days(&data.raw, &data.sun, &NormalizeOptions::default()).unwrap();
    assert_eq!(norm.excluded(), 4);
}

#[test]
fn generator_is_reproducible() {
    let model = ApplicationParams::IDENTIFIED_2024.model(1.0);
    let a = generate_synthetic(&model, 5, 30, 9, &SyntheticOptions::default()).unwrap();
    let b = generate_synthetic(&model, 5, 30, 9, &SyntheticOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.sun[4].date, NaiveDate::from_ymd_opt(2023, 4, 5).unwrap());
}

#[test]
fn normalizing_generated_days_recovers_bin_averages() {
    let model = ApplicationParams::IDENTIFIED_2023.model(1.0);
    let opts = SyntheticOptions {
        count_scale: 1e9,
        dt: 1e-3,
        ..SyntheticOptions::default()
    };
    let bins = 50;
    let data = generate_synthetic(&model, 6, bins, 17, &opts).unwrap();
    let norm = normalize_days(
        &data.raw,
        &data.sun,
        &NormalizeOptions {
            unit_minutes: 10.0,
            normalization: Normalization::CountScale { scale: opts.count_scale },
        },
    )
    .unwrap();
    let paths = simulate_bridge(&model, 6, opts.dt, 17).unwrap();
    let grid = StepPlan::bridge(&model, opts.dt).unwrap().grid();
    for (i, day) in norm.days.iter().enumerate() {
        let path = paths.path(i);
        for (j, &v) in day.normalized.iter().enumerate() {
            // Bin average by the trapezoid rule on the (aligned) simulation grid.
            let (lo, hi) = (j * 20, (j + 1) * 20);
            let avg: f64 = (lo..hi).map(|k| 0.5 * (path[k] + path[k + 1]) * (grid[k + 1] - grid[k])).sum::<f64>()
                * bins as f64;
            assert!((v - avg).abs() <= 5.0 * (avg / opts.count_scale).sqrt() + 1e-12, "day {i} bin {j}: {v} vs {avg}");
        }
    }
}

#[test]
fn noiseless_moments_are_recovered() {
    let opts = FitOptions::default();
    let grid = interior_grid();
    for p in [ApplicationParams::IDENTIFIED_2023, ApplicationParams::IDENTIFIED_2024] {
        let mean: Vec<f64> = grid.iter().map(|&t| mean_closed(&p, t).unwrap()).collect();
        let sd: Vec<f64> = grid.iter().map(|&t| var_closed(&p, t).unwrap().sqrt()).collect();
        let s1 = fit_mean_stage(&grid, &mean, &opts).unwrap();
        let s2 = fit_var_stage(&grid, &sd, &s1, &opts).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(s1.a0, p.a0) < 1e-6 && rel(s1.a1, p.a1) < 1e-6 && rel(s1.epsilon, p.epsilon) < 1e-6, "{s1:?}");
        assert!(rel(s2.kappa0, p.kappa0) < 1e-6 && rel(s2.kappa1, p.kappa1) < 1e-6, "{s2:?}");
        assert!(s1.rmse < 1e-10 && s2.rmse < 1e-10);
        assert!(s1.diagnostics.converged && s2.diagnostics.converged);
        assert!(!s1.diagnostics.epsilon_at_bound);
    }
}

#[test]
fn zero_mean_is_degenerate_but_flagged() {
    let grid = interior_grid();
    let fit = fit_mean_stage(&grid, &vec![0.0; grid.len()], &FitOptions::default()).unwrap();
    assert_eq!((fit.a0, fit.a1), (0.0, 0.0));
    assert!(fit.diagnostics.epsilon_at_bound);
    assert!((fit.epsilon - 10.0).abs() < 1e-9);
}

#[test]
fn active_variance_bound_is_flagged() {
    let p = ApplicationParams {
        kappa0: 0.3,
        kappa1: -0.3,
        ..ApplicationParams::IDENTIFIED_2023
    };
    let grid = interior_grid();
    let mean: Vec<f64> = grid.iter().map(|&t| mean_closed(&p, t).unwrap()).collect();
    let sd: Vec<f64> = grid.iter().map(|&t| var_closed(&p, t).unwrap().sqrt()).collect();
    let opts = FitOptions::default();
    let s1 = fit_mean_stage(&grid, &mean, &opts).unwrap();
    let s2 = fit_var_stage(&grid, &sd, &s1, &opts).unwrap();
    assert!(s2.diagnostics.kappa1_lower_bound_active);
    assert!(!s2.diagnostics.kappa0_lower_bound_active);
    assert!((s2.kappa0 - 0.3).abs() < 1e-6 && (s2.kappa1 + s2.kappa0).abs() == 0.0);
}

#[test]
fn stage_two_never_changes_stage_one() {
    let model = ApplicationParams::IDENTIFIED_2024.model(1.0);
    let data = generate_synthetic(&model, 40, 84, 5, &SyntheticOptions::default()).unwrap();
    let norm = normalize_days(
        &data.raw,
        &data.sun,
        &NormalizeOptions {
            unit_minutes: 10.0,
            normalization: Normalization::CountScale { scale: 1e4 },
        },
    )
    .unwrap();
    let opts = FitOptions::default();
    let grid = default_grid(&norm.days, opts.grid_lo, opts.grid_hi).unwrap();
    let emp = empirical_moments(&norm.days, &grid).unwrap();
    let alone = fit_mean_stage(&emp.grid, &emp.mean, &opts).unwrap();
    let full = fit(&norm, &opts).unwrap();
    assert_eq!((full.a0, full.a1, full.epsilon), (alone.a0, alone.a1, alone.epsilon));
    let p = full.params();
    p.validate().unwrap();
    assert!(full.rmse_mean.is_finite() && full.rmse_sd.is_finite());
    assert_eq!(full.n_days, 40);
}
