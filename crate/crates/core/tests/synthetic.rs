use turbine_states::ingest::segment_epochs;
use turbine_states::synthetic::{read_labels_csv, write_labels_csv};
use turbine_states::{
    generate_dataset, generate_wind, inject_mismatch, pearson_matrix, simulate_turbine, ControllerSpec,
    OperationalState, SynthConfig, WindModel,
};

/// Closed-form Weibull CDF, independent of the generator's own helper.
fn weibull_cdf(v: f64, shape: f64, scale: f64) -> f64 {
    1.0 - (-(v / scale).powf(shape)).exp()
}

#[test]
fn wind_marginal_is_weibull() {
    let model = WindModel::default();
    let mut wind = generate_wind(100_000.0 * 10.0, 10.0, &model, 42).unwrap();
    assert_eq!(wind.len(), 100_000);
    wind.sort_by(f64::total_cmp);
    let n = wind.len() as f64;
    let ks = wind
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = weibull_cdf(v, model.weibull_shape, model.weibull_scale);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn wind_is_persistent() {
    let model = WindModel {
        persistence_time: 3600.0,
        ..WindModel::default()
    };
    let w = generate_wind(30.0 * 86_400.0, 10.0, &model, 1).unwrap();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let cov: f64 = w.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum::<f64>() / (n - 1.0);
    assert!(cov / var > 0.9, "lag-1 autocorrelation {}", cov / var);
}

#[test]
fn labels_follow_the_spec_without_filtering() {
    let mut spec = ControllerSpec::scaled(12.0);
    spec.regime_filter_time = 0.0;
    let wind = generate_wind(86_400.0, 10.0, &WindModel::default(), 5).unwrap();
    let t = simulate_turbine("wt", &wind, 0, 10, &spec, 5).unwrap();
    for (&w, r) in wind.iter().zip(&t.regimes) {
        let expected = if w < spec.v_on {
            None
        } else if w < spec.v1 {
            Some(OperationalState::FixedMinRpm)
        } else if w < spec.v2 {
            Some(OperationalState::Proportional)
        } else if w < spec.v_nom {
            Some(OperationalState::FixedNominalRpm)
        } else {
            Some(OperationalState::NominalPower)
        };
        assert_eq!(*r, expected, "wind {w}");
    }
}

#[test]
fn noiseless_proportional_epoch_is_rank_one_in_blocks() {
    let mut spec = ControllerSpec::scaled(12.0);
    spec.response_time = 0.0;
    spec.regime_filter_time = 0.0;
    spec.noise = turbine_states::NoiseLevels {
        power: 0.0,
        current: 0.0,
        rotor_rpm: 0.0,
        generator_rpm: 0.0,
        wind: 0.0,
        rpm_jitter: 0.0,
    };
    let wind: Vec<f64> = (0..180).map(|i| 6.5 + 1.5 * (i as f64 * 0.1).sin()).collect();
    let t = simulate_turbine("wt", &wind, 0, 10, &spec, 0).unwrap();
    let epoch = &segment_epochs(&t.grid, 180, 90).unwrap()[0];
    let c = pearson_matrix(epoch, 1e-12).unwrap().entries;
    // STANDARD_SIGNALS order: power, current, rotor, generator, wind
    for (i, j) in [(2, 3), (2, 4), (3, 4), (0, 1)] {
        assert!((c.get(i, j).abs() - 1.0).abs() < 1e-9, "({i},{j}) = {}", c.get(i, j));
    }
}

#[test]
fn dataset_is_deterministic_and_labels_roundtrip() {
    let cfg = SynthConfig {
        n_turbines: 2,
        days: 1.0,
        seed: 9,
        ..SynthConfig::default()
    };
    let a = generate_dataset(&cfg).unwrap();
    let b = generate_dataset(&cfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("labels.csv");
    write_labels_csv(&a.turbines[0], &p).unwrap();
    let back = read_labels_csv(&p).unwrap();
    assert_eq!(back.len(), a.turbines[0].regimes.len());
    assert!(back.iter().zip(&a.turbines[0].regimes).all(|((_, x), y)| x == y));
}

#[test]
fn injected_epochs_are_marked_and_mixed() {
    let cfg = SynthConfig {
        n_turbines: 1,
        days: 5.0,
        ..SynthConfig::default()
    };
    let clean = generate_dataset(&cfg).unwrap();
    let dirty = inject_mismatch(&clean, 0.1, 3).unwrap();
    let (c, d) = (&clean.turbines[0], &dirty.turbines[0]);
    assert!(!d.mismatched.is_empty());
    for &start in &d.mismatched {
        let e = ((start - c.grid.start) / c.grid.grid_step) as usize / 180;
        let cells = e * 180..((e + 1) * 180).min(c.regimes.len());
        let changed = cells.clone().filter(|&i| c.regimes[i] != d.regimes[i]).count();
        assert!(changed > 0, "epoch {start} has no forced cells");
        assert!(changed <= 90);
    }
}
