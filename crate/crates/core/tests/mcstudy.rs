use nalgebra::DVector;
use panelspec::mcstudy::{run_replication, write_study_csv, CSV_COLUMNS};
use panelspec::{
    contaminate_concentrated, contaminate_random, generate_alternative, generate_null, run_study,
    ContaminationConfig, DgpConfig, Error, Hypothesis, PanelDataset, RngStream, StudyScenario,
    TestKind, WleConfig,
};
use proptest::prelude::*;

fn composite_errors(ds: &PanelDataset, beta: &[f64]) -> DVector<f64> {
    ds.y_stacked() - ds.x_stacked() * DVector::from_column_slice(beta)
}

#[test]
fn same_seed_same_dataset() {
    let dgp = DgpConfig::null(20, 3, 99);
    let a = generate_null(&dgp, &mut RngStream::substream(99, 4)).unwrap();
    let b = generate_null(&dgp, &mut RngStream::substream(99, 4)).unwrap();
    assert_eq!(a, b);
    let c = generate_null(&dgp, &mut RngStream::substream(99, 5)).unwrap();
    assert_ne!(a, c);
    let alt = DgpConfig::alternative(20, 3, 99);
    assert_eq!(
        generate_alternative(&alt, &mut RngStream::new(1)).unwrap(),
        generate_alternative(&alt, &mut RngStream::new(1)).unwrap()
    );
}

#[test]
fn null_moments() {
    let dgp = DgpConfig::null(2000, 4, 12);
    let ds = generate_null(&dgp, &mut RngStream::new(12)).unwrap();
    let u = composite_errors(&ds, &dgp.beta);
    let mean = u.mean();
    let var = u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (u.len() - 1) as f64;
    assert!((1.8..=2.2).contains(&var), "variance {var}");
    // average cross-period covariance within a unit estimates the effect variance
    let mut cov = 0.0;
    let mut pairs = 0;
    for i in 0..2000 {
        for s in 0..4 {
            for r in s + 1..4 {
                cov += (u[i * 4 + s] - mean) * (u[i * 4 + r] - mean);
                pairs += 1;
            }
        }
    }
    let cov = cov / pairs as f64;
    assert!((cov - 1.0).abs() <= 0.15, "within-unit covariance {cov}");
}

#[test]
fn zero_tau_is_the_null_design() {
    let null = DgpConfig::null(30, 4, 5);
    let mut alt = null.clone();
    alt.hypothesis = Hypothesis::Alternative { tau: vec![0.0, 0.0] };
    let a = generate_null(&null, &mut RngStream::new(5)).unwrap();
    let b = generate_alternative(&alt, &mut RngStream::new(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn alternative_effects_correlate_with_regressor_means() {
    let dgp = DgpConfig::alternative(2000, 4, 6);
    let ds = generate_alternative(&dgp, &mut RngStream::new(6)).unwrap();
    let u = composite_errors(&ds, &dgp.beta);
    let effect: Vec<f64> = (0..2000).map(|i| (0..4).map(|s| u[i * 4 + s]).sum::<f64>() / 4.0).collect();
    let xbar: Vec<f64> = (0..2000).map(|i| (0..4).map(|s| ds.x(i, s, 0)).sum::<f64>() / 4.0).collect();
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (me, mx) = (m(&effect), m(&xbar));
    let sxy: f64 = effect.iter().zip(&xbar).map(|(a, b)| (a - me) * (b - mx)).sum();
    let sxx: f64 = xbar.iter().map(|b| (b - mx).powi(2)).sum();
    let syy: f64 = effect.iter().map(|a| (a - me).powi(2)).sum();
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr > 0.3, "correlation {corr}");
}

fn changed_cells(a: &PanelDataset, b: &PanelDataset) -> Vec<usize> {
    (0..a.n_obs()).filter(|&r| a.y_stacked()[r] != b.y_stacked()[r]).collect()
}

#[test]
fn random_contamination_replaces_exactly_m() {
    let dgp = DgpConfig::null(100, 3, 7);
    let mut stream = RngStream::new(7);
    let clean = generate_null(&dgp, &mut stream).unwrap();
    let snapshot = stream.clone();
    let dirty = contaminate_random(&clean, &ContaminationConfig::random(15), &mut stream).unwrap();
    let cells = changed_cells(&clean, &dirty);
    assert_eq!(cells.len(), 15);
    assert!(cells.iter().all(|&r| (10.0..=35.0).contains(&dirty.y_stacked()[r])));
    assert_eq!(dirty.x_stacked(), clean.x_stacked());
    let again = contaminate_random(&clean, &ContaminationConfig::random(15), &mut snapshot.clone()).unwrap();
    assert_eq!(again, dirty);
    let none = contaminate_random(&clean, &ContaminationConfig::random(0), &mut stream).unwrap();
    assert_eq!(none, clean);
}

#[test]
fn concentrated_blocks() {
    let dgp = DgpConfig::null(100, 3, 8);
    let mut stream = RngStream::new(8);
    let clean = generate_null(&dgp, &mut stream).unwrap();
    let dirty = contaminate_concentrated(&clean, &ContaminationConfig::concentrated(15), &mut stream).unwrap();
    let cells = changed_cells(&clean, &dirty);
    assert_eq!(cells.len(), 15);
    assert!(cells.iter().all(|&r| (17.0..=18.0).contains(&dirty.y_stacked()[r])));
    assert_eq!(dirty.x_stacked(), clean.x_stacked());
    let mut per_unit = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for r in cells {
        per_unit.entry(r / 3).or_default().push(r % 3);
    }
    let mut sizes: Vec<usize> = per_unit.values().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, [1, 2, 2, 2, 2, 2, 2, 2]);
    for periods in per_unit.values() {
        assert!(periods.windows(2).all(|w| w[1] == w[0] + 1), "block {periods:?} not consecutive");
    }
    let none = contaminate_concentrated(&clean, &ContaminationConfig::concentrated(0), &mut stream).unwrap();
    assert_eq!(none, clean);
}

#[test]
fn too_many_outliers() {
    let dgp = DgpConfig::null(100, 3, 9);
    let mut stream = RngStream::new(9);
    let clean = generate_null(&dgp, &mut stream).unwrap();
    assert_eq!(
        contaminate_random(&clean, &ContaminationConfig::random(301), &mut stream).unwrap_err(),
        Error::TooManyOutliers { requested: 301, max: 300 }
    );
    assert_eq!(
        contaminate_concentrated(&clean, &ContaminationConfig::concentrated(201), &mut stream).unwrap_err(),
        Error::TooManyOutliers { requested: 201, max: 200 }
    );
}

#[test]
fn study_is_independent_of_pool_size() {
    let scenario = StudyScenario {
        dgp: DgpConfig::alternative(40, 3, 77),
        contamination: ContaminationConfig::concentrated(12),
        s: 48,
        gamma_grid: vec![0.25, 0.01, 0.05, 0.05],
        wle: WleConfig::default(),
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scenario.run().unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(8));
    assert_eq!(a.gamma_grid, [0.01, 0.05, 0.25]);
    let first = run_replication(&scenario.dgp, &scenario.contamination, &scenario.wle, 0).unwrap();
    assert_eq!(a.series(TestKind::Hausman).statistics[0], first.hausman.0);

    let mut buf = Vec::new();
    write_study_csv(&[(scenario.clone(), a.clone())], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(lines.count(), 3 * 2);
}

#[test]
fn config_errors_propagate() {
    let dgp = DgpConfig::null(20, 3, 1);
    let cc = ContaminationConfig::none();
    let cfg = WleConfig::default();
    assert!(matches!(run_study(&dgp, &cc, 0, &[0.05], &cfg), Err(Error::InvalidConfig(_))));
    assert!(matches!(run_study(&dgp, &cc, 5, &[1.5], &cfg), Err(Error::InvalidConfig(_))));
    assert!(matches!(run_study(&dgp, &cc, 5, &[], &cfg), Err(Error::InvalidConfig(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rejection_curves_are_monotone(seed in any::<u64>(), alt in any::<bool>(), m in 0usize..20) {
        let dgp = if alt { DgpConfig::alternative(30, 3, seed) } else { DgpConfig::null(30, 3, seed) };
        let grid = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.5];
        let r = run_study(&dgp, &ContaminationConfig::random(m), 20, &grid, &WleConfig::default()).unwrap();
        for series in &r.tests {
            prop_assert!(series.rejection_rates.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn contamination_keeps_other_cells(seed in any::<u64>(), m in 0usize..60, concentrated in any::<bool>()) {
        let dgp = DgpConfig::null(40, 3, seed);
        let mut stream = RngStream::new(seed);
        let clean = generate_null(&dgp, &mut stream).unwrap();
        let dirty = if concentrated {
            contaminate_concentrated(&clean, &ContaminationConfig::concentrated(m), &mut stream).unwrap()
        } else {
            contaminate_random(&clean, &ContaminationConfig::random(m), &mut stream).unwrap()
        };
        prop_assert_eq!(dirty.x_stacked(), clean.x_stacked());
        prop_assert_eq!(changed_cells(&clean, &dirty).len(), m);
    }
}
