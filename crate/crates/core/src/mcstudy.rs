//! Monte Carlo size/power experiments for the two specification tests.
//!
//! Every replication draws from its own stream, seeded by mixing the master
//! seed with the replication index, so results do not depend on how
//! replications are scheduled across threads. Within a stream the draws
//! come in a fixed order: regressors (unit, period, column), then the unit
//! effects, then the idiosyncratic errors, then contamination.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::estimators::{fit_fixed_effects, fit_random_effects};
use crate::inference::{hausman_test, weighted_hausman_test, TestKind};
use crate::panel::PanelDataset;
use crate::wle::{fit_weighted_fixed_effects, WleConfig};

/// Deterministic uniform/normal source for one replication.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for replication `index` under `master` seed.
    pub fn substream(master: u64, index: u64) -> Self {
        Self::new(splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
    }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Standard normal by inverting the CDF of one uniform draw.
    pub fn normal(&mut self) -> f64 {
        let p = self.uniform();
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// First `m` entries of a partial Fisher-Yates shuffle of `0..n`.
    fn sample_without_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for j in 0..m {
            let r = j + self.index(n - j);
            pool.swap(j, r);
        }
        pool.truncate(m);
        pool
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    /// Unit effects independent of the regressors.
    Null,
    /// Unit effects equal `tau`-weighted regressor time means plus noise.
    Alternative { tau: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n_units: usize,
    pub n_periods: usize,
    pub beta: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub seed: u64,
}

impl DgpConfig {
    pub fn null(n_units: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            n_units,
            n_periods,
            beta: vec![1.0, -1.5],
            hypothesis: Hypothesis::Null,
            seed,
        }
    }

    pub fn alternative(n_units: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            hypothesis: Hypothesis::Alternative {
                tau: vec![1.0, 1.0],
            },
            ..Self::null(n_units, n_periods, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.beta.len();
        if k == 0 {
            return Err(Error::InvalidConfig("beta must be nonempty".into()));
        }
        if let Hypothesis::Alternative { tau } = &self.hypothesis {
            if tau.len() != k {
                return Err(Error::InvalidConfig(format!(
                    "tau has length {} but beta has length {k}",
                    tau.len()
                )));
            }
        }
        if self.n_units < 2 || self.n_periods < 2 || self.n_units * (self.n_periods - 1) <= k {
            return Err(Error::TooFewUnitsOrPeriods {
                n_units: self.n_units,
                n_periods: self.n_periods,
                n_regressors: k,
            });
        }
        Ok(())
    }
}

fn generate(cfg: &DgpConfig, tau: Option<&[f64]>, stream: &mut RngStream) -> Result<PanelDataset> {
    cfg.validate()?;
    let (n, t, k) = (cfg.n_units, cfg.n_periods, cfg.beta.len());
    let mut x = DMatrix::zeros(n * t, k);
    for row in 0..n * t {
        for c in 0..k {
            x[(row, c)] = stream.normal();
        }
    }
    let effects: Vec<f64> = (0..n)
        .map(|i| {
            let noise = stream.normal();
            match tau {
                Some(tau) => {
                    let mut lin = 0.0;
                    for s in 0..t {
                        for c in 0..k {
                            lin += x[(i * t + s, c)] * tau[c];
                        }
                    }
                    lin / t as f64 + noise
                }
                None => noise,
            }
        })
        .collect();
    let beta = DVector::from_column_slice(&cfg.beta);
    let xb = &x * &beta;
    let y = DVector::from_fn(n * t, |row, _| xb[row] + effects[row / t] + stream.normal());
    PanelDataset::from_stacked_unlabeled(n, t, y, x)
}

/// `y = X beta + alpha_i + eps` with `X`, `alpha`, `eps` iid standard normal.
pub fn generate_null(cfg: &DgpConfig, stream: &mut RngStream) -> Result<PanelDataset> {
    match cfg.hypothesis {
        Hypothesis::Null => generate(cfg, None, stream),
        _ => Err(Error::InvalidConfig("generate_null needs the null hypothesis".into())),
    }
}

/// Like [`generate_null`] but `alpha_i = mean_t(X_it' tau) + eta_i`.
pub fn generate_alternative(cfg: &DgpConfig, stream: &mut RngStream) -> Result<PanelDataset> {
    match &cfg.hypothesis {
        Hypothesis::Alternative { tau } => generate(cfg, Some(tau), stream),
        _ => Err(Error::InvalidConfig(
            "generate_alternative needs an alternative hypothesis".into(),
        )),
    }
}

/// Draws a dataset under whichever hypothesis `cfg` names.
pub fn generate_dataset(cfg: &DgpConfig, stream: &mut RngStream) -> Result<PanelDataset> {
    match &cfg.hypothesis {
        Hypothesis::Null => generate_null(cfg, stream),
        Hypothesis::Alternative { .. } => generate_alternative(cfg, stream),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contamination {
    None,
    /// Outlying responses scattered over all cells.
    RandomVertical { low: f64, high: f64 },
    /// Outlying responses in blocks covering at least half of selected units.
    ConcentratedVertical { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationConfig {
    pub scheme: Contamination,
    pub n_outliers: usize,
}

impl ContaminationConfig {
    pub fn none() -> Self {
        Self {
            scheme: Contamination::None,
            n_outliers: 0,
        }
    }

    /// `m` responses replaced by `U(10, 35)` draws.
    pub fn random(m: usize) -> Self {
        Self {
            scheme: Contamination::RandomVertical {
                low: 10.0,
                high: 35.0,
            },
            n_outliers: m,
        }
    }

    /// `m` responses replaced by `U(17, 18)` draws in per-unit blocks.
    pub fn concentrated(m: usize) -> Self {
        Self {
            scheme: Contamination::ConcentratedVertical {
                low: 17.0,
                high: 18.0,
            },
            n_outliers: m,
        }
    }

    /// Largest outlier count the scheme can place in an `n x t` panel.
    pub fn capacity(&self, n: usize, t: usize) -> usize {
        match self.scheme {
            Contamination::None => usize::MAX,
            Contamination::RandomVertical { .. } => n * t,
            Contamination::ConcentratedVertical { .. } => n * t.div_ceil(2),
        }
    }

    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        match self.scheme {
            Contamination::RandomVertical { low, high }
            | Contamination::ConcentratedVertical { low, high } => {
                if !(low <= high && low.is_finite() && high.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "contamination range [{low}, {high}] is invalid"
                    )));
                }
            }
            Contamination::None => {}
        }
        let max = self.capacity(n, t);
        if self.n_outliers > max {
            return Err(Error::TooManyOutliers {
                requested: self.n_outliers,
                max,
            });
        }
        Ok(())
    }
}

/// Replaces `m` responses, chosen uniformly without replacement among all
/// cells, with uniform draws on `[low, high]`.
pub fn contaminate_random(
    ds: &PanelDataset,
    cc: &ContaminationConfig,
    stream: &mut RngStream,
) -> Result<PanelDataset> {
    let Contamination::RandomVertical { low, high } = cc.scheme else {
        return Err(Error::InvalidConfig("expected random vertical contamination".into()));
    };
    cc.validate(ds.n_units(), ds.n_periods())?;
    let cells = stream.sample_without_replacement(ds.n_obs(), cc.n_outliers);
    let mut y = ds.y_stacked().clone();
    for cell in cells {
        y[cell] = stream.uniform_range(low, high);
    }
    ds.with_response(y)
}

/// Replaces `m` responses in blocks of `ceil(T/2)` consecutive periods within
/// randomly chosen units. When `m` is not a multiple of the block length the
/// last unit receives the shorter remainder block.
pub fn contaminate_concentrated(
    ds: &PanelDataset,
    cc: &ContaminationConfig,
    stream: &mut RngStream,
) -> Result<PanelDataset> {
    let Contamination::ConcentratedVertical { low, high } = cc.scheme else {
        return Err(Error::InvalidConfig(
            "expected concentrated vertical contamination".into(),
        ));
    };
    let (n, t) = (ds.n_units(), ds.n_periods());
    cc.validate(n, t)?;
    let block = t.div_ceil(2);
    let m = cc.n_outliers;
    let full = m / block;
    let rem = m % block;
    let units = stream.sample_without_replacement(n, full + usize::from(rem > 0));
    let mut y = ds.y_stacked().clone();
    for (j, unit) in units.into_iter().enumerate() {
        let len = if j < full { block } else { rem };
        let start = stream.index(t - len + 1);
        for s in start..start + len {
            y[unit * t + s] = stream.uniform_range(low, high);
        }
    }
    ds.with_response(y)
}

/// Applies whichever scheme `cc` names.
pub fn contaminate(
    ds: &PanelDataset,
    cc: &ContaminationConfig,
    stream: &mut RngStream,
) -> Result<PanelDataset> {
    match cc.scheme {
        Contamination::None => Ok(ds.clone()),
        Contamination::RandomVertical { .. } => contaminate_random(ds, cc, stream),
        Contamination::ConcentratedVertical { .. } => contaminate_concentrated(ds, cc, stream),
    }
}

/// Empirical rejection rates and realized statistics of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSeries {
    pub test: TestKind,
    /// Aligned with the study's gamma grid.
    pub rejection_rates: Vec<f64>,
    /// One per successful replication, in replication order.
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    /// Ascending.
    pub gamma_grid: Vec<f64>,
    pub s_replications: usize,
    /// Replications dropped because a fit failed.
    pub failures: usize,
    pub tests: Vec<TestSeries>,
}

impl StudyResult {
    pub fn series(&self, kind: TestKind) -> &TestSeries {
        self.tests
            .iter()
            .find(|s| s.test == kind)
            .expect("both test kinds are always present")
    }

    pub fn rate(&self, kind: TestKind, gamma: f64) -> Option<f64> {
        let idx = self.gamma_grid.iter().position(|g| (g - gamma).abs() < 1e-12)?;
        Some(self.series(kind).rejection_rates[idx])
    }
}

/// Statistic and p-value of both tests for one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub hausman: (f64, f64),
    pub weighted: (f64, f64),
}

/// Generates, contaminates, fits and tests one replication.
pub fn run_replication(
    dgp: &DgpConfig,
    cc: &ContaminationConfig,
    wle_cfg: &WleConfig,
    index: u64,
) -> Result<ReplicationOutcome> {
    let mut stream = RngStream::substream(dgp.seed, index);
    let clean = generate_dataset(dgp, &mut stream)?;
    let ds = contaminate(&clean, cc, &mut stream)?;
    let fe = fit_fixed_effects(&ds)?;
    let re = fit_random_effects(&ds)?;
    let wfe = fit_weighted_fixed_effects(&ds, wle_cfg)?;
    let h = hausman_test(&fe, &re)?;
    let w = weighted_hausman_test(&wfe, &re)?;
    Ok(ReplicationOutcome {
        hausman: (h.statistic, h.p_value),
        weighted: (w.statistic, w.p_value),
    })
}

/// Runs `s` replications and tabulates the fraction with `p < gamma` for
/// each gamma in the grid. Replications run in parallel on the current rayon
/// pool; the result is identical for any pool size.
pub fn run_study(
    dgp: &DgpConfig,
    cc: &ContaminationConfig,
    s: usize,
    gamma_grid: &[f64],
    wle_cfg: &WleConfig,
) -> Result<StudyResult> {
    if s == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(Error::InvalidConfig("gamma values must lie in (0, 1)".into()));
    }
    dgp.validate()?;
    cc.validate(dgp.n_units, dgp.n_periods)?;
    wle_cfg.validate()?;

    let mut grid = gamma_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let outcomes: Vec<Option<ReplicationOutcome>> = (0..s as u64)
        .into_par_iter()
        .map(|r| run_replication(dgp, cc, wle_cfg, r).ok())
        .collect();
    let ok: Vec<ReplicationOutcome> = outcomes.iter().flatten().copied().collect();
    let failures = s - ok.len();

    let series = |kind: TestKind, pick: fn(&ReplicationOutcome) -> (f64, f64)| {
        let pairs: Vec<(f64, f64)> = ok.iter().map(pick).collect();
        let denom = pairs.len() as f64;
        TestSeries {
            test: kind,
            rejection_rates: grid
                .iter()
                .map(|g| pairs.iter().filter(|(_, p)| p < g).count() as f64 / denom)
                .collect(),
            statistics: pairs.iter().map(|p| p.0).collect(),
            p_values: pairs.iter().map(|p| p.1).collect(),
        }
    };
    Ok(StudyResult {
        tests: vec![
            series(TestKind::Hausman, |o| o.hausman),
            series(TestKind::WeightedHausman, |o| o.weighted),
        ],
        gamma_grid: grid,
        s_replications: s,
        failures,
    })
}

/// One configured experiment: data design, contamination, replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyScenario {
    pub dgp: DgpConfig,
    pub contamination: ContaminationConfig,
    pub s: usize,
    pub gamma_grid: Vec<f64>,
    pub wle: WleConfig,
}

impl StudyScenario {
    pub fn run(&self) -> Result<StudyResult> {
        run_study(&self.dgp, &self.contamination, self.s, &self.gamma_grid, &self.wle)
    }
}

pub fn test_label(kind: TestKind) -> &'static str {
    match kind {
        TestKind::Hausman => "hausman",
        TestKind::WeightedHausman => "weighted",
    }
}

fn contamination_label(c: &Contamination) -> &'static str {
    match c {
        Contamination::None => "none",
        Contamination::RandomVertical { .. } => "random",
        Contamination::ConcentratedVertical { .. } => "concentrated",
    }
}

/// Header of the flat results table.
pub const CSV_COLUMNS: [&str; 10] = [
    "test",
    "gamma",
    "rejection_rate",
    "s",
    "failures",
    "n",
    "t",
    "hypothesis",
    "contamination",
    "m",
];

/// Flat CSV: one row per (scenario, test, gamma) with columns [`CSV_COLUMNS`].
pub fn write_study_csv<W: Write>(runs: &[(StudyScenario, StudyResult)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for (sc, res) in runs {
        let hyp = match sc.dgp.hypothesis {
            Hypothesis::Null => "null",
            Hypothesis::Alternative { .. } => "alt",
        };
        for series in &res.tests {
            for (g, rate) in res.gamma_grid.iter().zip(&series.rejection_rates) {
                w.write_record([
                    test_label(series.test).to_string(),
                    g.to_string(),
                    rate.to_string(),
                    res.s_replications.to_string(),
                    res.failures.to_string(),
                    sc.dgp.n_units.to_string(),
                    sc.dgp.n_periods.to_string(),
                    hyp.to_string(),
                    contamination_label(&sc.contamination.scheme).to_string(),
                    sc.contamination.n_outliers.to_string(),
                ])
                .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::substream(7, 3);
        let mut b = RngStream::substream(7, 3);
        let mut c = RngStream::substream(7, 4);
        let xa: Vec<f64> = (0..10).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..10).map(|_| c.normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_stays_open() {
        let mut s = RngStream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
            assert!(s.index(3) < 3);
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = DgpConfig::null(20, 3, 11);
        let a = generate_null(&cfg, &mut RngStream::new(5)).unwrap();
        let b = generate_null(&cfg, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(generate_alternative(&cfg, &mut RngStream::new(5)).is_err());
    }

    #[test]
    fn zero_tau_matches_null() {
        let null = DgpConfig::null(15, 4, 2);
        let alt = DgpConfig {
            hypothesis: Hypothesis::Alternative { tau: vec![0.0, 0.0] },
            ..null.clone()
        };
        let a = generate_null(&null, &mut RngStream::new(9)).unwrap();
        let b = generate_alternative(&alt, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tau_length_checked() {
        let cfg = DgpConfig {
            hypothesis: Hypothesis::Alternative { tau: vec![1.0] },
            ..DgpConfig::null(10, 3, 0)
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn random_contamination_counts() {
        let ds = generate_null(&DgpConfig::null(100, 3, 1), &mut RngStream::new(1)).unwrap();
        let out = contaminate_random(&ds, &ContaminationConfig::random(15), &mut RngStream::new(2)).unwrap();
        let diff: Vec<usize> = (0..300).filter(|&r| out.y_stacked()[r] != ds.y_stacked()[r]).collect();
        assert_eq!(diff.len(), 15);
        assert!(diff.iter().all(|&r| (10.0..=35.0).contains(&out.y_stacked()[r])));
        assert_eq!(out.x_stacked(), ds.x_stacked());

        let again = contaminate_random(&ds, &ContaminationConfig::random(15), &mut RngStream::new(2)).unwrap();
        assert_eq!(again, out);
        let none = contaminate_random(&ds, &ContaminationConfig::random(0), &mut RngStream::new(2)).unwrap();
        assert_eq!(none, ds);
        assert_eq!(
            contaminate_random(&ds, &ContaminationConfig::random(301), &mut RngStream::new(2)).unwrap_err(),
            Error::TooManyOutliers { requested: 301, max: 300 }
        );
    }

    #[test]
    fn concentrated_contamination_blocks() {
        let ds = generate_null(&DgpConfig::null(100, 3, 1), &mut RngStream::new(1)).unwrap();
        for m in [0usize, 15, 30] {
            let out = contaminate_concentrated(&ds, &ContaminationConfig::concentrated(m), &mut RngStream::new(4)).unwrap();
            assert_eq!(out.x_stacked(), ds.x_stacked());
            let mut per_unit = Vec::new();
            for i in 0..100 {
                let hit: Vec<usize> = (0..3).filter(|&s| out.y(i, s) != ds.y(i, s)).collect();
                if !hit.is_empty() {
                    // consecutive periods
                    assert_eq!(hit.last().unwrap() - hit[0] + 1, hit.len());
                    assert!(hit.iter().all(|&s| (17.0..=18.0).contains(&out.y(i, s))));
                    per_unit.push(hit.len());
                }
            }
            assert_eq!(per_unit.iter().sum::<usize>(), m);
            assert!(per_unit.iter().filter(|&&c| c < 2).count() <= 1);
        }
        // 15 = 7 full blocks of 2 plus one single-cell remainder
        let out = contaminate_concentrated(&ds, &ContaminationConfig::concentrated(15), &mut RngStream::new(4)).unwrap();
        let counts: Vec<usize> = (0..100)
            .map(|i| (0..3).filter(|&s| out.y(i, s) != ds.y(i, s)).count())
            .filter(|&c| c > 0)
            .collect();
        assert_eq!(counts.iter().filter(|&&c| c == 2).count(), 7);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 1);
        assert!(contaminate_concentrated(&ds, &ContaminationConfig::concentrated(201), &mut RngStream::new(4)).is_err());
    }

    #[test]
    fn small_study_rates_monotone() {
        let res = run_study(
            &DgpConfig::null(30, 3, 5),
            &ContaminationConfig::none(),
            40,
            &[0.2, 0.05, 0.1],
            &WleConfig::default(),
        )
        .unwrap();
        assert_eq!(res.gamma_grid, vec![0.05, 0.1, 0.2]);
        for s in &res.tests {
            assert!(s.rejection_rates.windows(2).all(|w| w[0] <= w[1]));
            assert!(s.rejection_rates.iter().all(|r| (0.0..=1.0).contains(r)));
            assert_eq!(s.statistics.len(), 40 - res.failures);
        }
    }

    #[test]
    fn study_config_errors() {
        let wle = WleConfig::default();
        let dgp = DgpConfig::null(100, 3, 1);
        assert!(run_study(&dgp, &ContaminationConfig::none(), 0, &[0.05], &wle).is_err());
        assert!(run_study(&dgp, &ContaminationConfig::none(), 5, &[1.5], &wle).is_err());
        assert!(matches!(
            run_study(&dgp, &ContaminationConfig::random(301), 5, &[0.05], &wle),
            Err(Error::TooManyOutliers { .. })
        ));
    }
}
