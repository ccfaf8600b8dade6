//! Balanced panel datasets, long-format CSV ingestion and the shared
//! estimate record.
//!
//! Observations are stored stacked unit-major: row `i * T + t` holds unit
//! `i` at period `t`. [`PanelDataset::to_stacked`] hands out exactly that
//! layout and [`PanelDataset::from_stacked`] is its inverse.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::VarianceComponents;

/// Column names of a long-format file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub unit_col: String,
    pub time_col: String,
    pub y_col: String,
    pub x_cols: Vec<String>,
}

impl ColumnSchema {
    pub fn new(
        unit_col: impl Into<String>,
        time_col: impl Into<String>,
        y_col: impl Into<String>,
        x_cols: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            unit_col: unit_col.into(),
            time_col: time_col.into(),
            y_col: y_col.into(),
            x_cols: x_cols.into_iter().map(Into::into).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.x_cols.is_empty() {
            return Err(Error::NoRegressors);
        }
        let mut seen: Vec<&str> = Vec::new();
        let all = [&self.unit_col, &self.time_col, &self.y_col]
            .into_iter()
            .chain(self.x_cols.iter());
        for name in all {
            if seen.contains(&name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
            seen.push(name);
        }
        Ok(())
    }
}

/// A balanced panel of `N` units observed over `T` periods with `K`
/// regressors. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
    regressor_names: Vec<String>,
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl PanelDataset {
    /// Builds a dataset from stacked (unit-major) response and regressors.
    pub fn from_stacked(
        unit_ids: Vec<String>,
        time_ids: Vec<String>,
        regressor_names: Vec<String>,
        y: DVector<f64>,
        x: DMatrix<f64>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let t = time_ids.len();
        let k = x.ncols();
        if n < 2 || t < 2 || k == 0 || n * (t - 1) <= k {
            return Err(Error::TooFewUnitsOrPeriods {
                n_units: n,
                n_periods: t,
                n_regressors: k,
            });
        }
        if y.len() != n * t || x.nrows() != n * t {
            return Err(Error::Shape(format!(
                "expected {} stacked rows, got y={} x={}",
                n * t,
                y.len(),
                x.nrows()
            )));
        }
        if regressor_names.len() != k {
            return Err(Error::Shape(format!(
                "{} regressor names for {} columns",
                regressor_names.len(),
                k
            )));
        }
        if let Some(dup) = first_duplicate(&unit_ids) {
            return Err(Error::DuplicateCell {
                unit: dup.to_string(),
                time: "*".into(),
            });
        }
        if let Some(dup) = first_duplicate(&time_ids) {
            return Err(Error::DuplicateCell {
                unit: "*".into(),
                time: dup.to_string(),
            });
        }
        let ds = Self {
            unit_ids,
            time_ids,
            regressor_names,
            y,
            x,
        };
        for row in 0..n * t {
            let (i, tt) = (row / t, row % t);
            let bad = |column: &str, v: f64| Error::NonNumericValue {
                column: column.to_string(),
                unit: ds.unit_ids[i].clone(),
                time: ds.time_ids[tt].clone(),
                value: v.to_string(),
            };
            if !ds.y[row].is_finite() {
                return Err(bad("y", ds.y[row]));
            }
            for c in 0..k {
                if !ds.x[(row, c)].is_finite() {
                    return Err(bad(&ds.regressor_names[c], ds.x[(row, c)]));
                }
            }
        }
        for c in 0..k {
            let col = ds.x.column(c);
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::InterceptColumn(ds.regressor_names[c].clone()));
            }
        }
        Ok(ds)
    }

    /// Builds a dataset with generated labels `u1..uN`, `1..T`, `x1..xK`.
    pub fn from_stacked_unlabeled(
        n_units: usize,
        n_periods: usize,
        y: DVector<f64>,
        x: DMatrix<f64>,
    ) -> Result<Self> {
        let k = x.ncols();
        Self::from_stacked(
            (1..=n_units).map(|i| format!("u{i}")).collect(),
            (1..=n_periods).map(|t| t.to_string()).collect(),
            (1..=k).map(|c| format!("x{c}")).collect(),
            y,
            x,
        )
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.time_ids.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    /// Response of unit `i` at period `t`.
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.n_periods() + t]
    }

    /// Regressor `k` of unit `i` at period `t`.
    pub fn x(&self, i: usize, t: usize, k: usize) -> f64 {
        self.x[(i * self.n_periods() + t, k)]
    }

    /// Response as an `N x T` matrix.
    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_units(), self.n_periods(), |i, t| self.y(i, t))
    }

    pub fn y_stacked(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x_stacked(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Stacked response (length `NT`) and regressors (`NT x K`), unit-major.
    pub fn to_stacked(&self) -> (DVector<f64>, DMatrix<f64>) {
        (self.y.clone(), self.x.clone())
    }

    /// Copy of this dataset with a different stacked response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::from_stacked(
            self.unit_ids.clone(),
            self.time_ids.clone(),
            self.regressor_names.clone(),
            y,
            self.x.clone(),
        )
    }

    /// Copy of this dataset with units reordered: unit `order[j]` becomes unit `j`.
    pub fn reorder_units(&self, order: &[usize]) -> Result<Self> {
        let t = self.n_periods();
        if order.len() != self.n_units() {
            return Err(Error::Shape("unit permutation has wrong length".into()));
        }
        let rows: Vec<usize> = order
            .iter()
            .flat_map(|&i| (0..t).map(move |s| i * t + s))
            .collect();
        Self::from_stacked(
            order.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            self.time_ids.clone(),
            self.regressor_names.clone(),
            self.y.select_rows(&rows),
            self.x.select_rows(&rows),
        )
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = std::collections::HashSet::new();
    ids.iter().find(|s| !seen.insert(s.as_str())).map(String::as_str)
}

/// Compares labels with runs of ASCII digits taken as numbers, so `u2`
/// sorts before `u10`.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(&cb) {
        let ord = if *da && *db {
            let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            sa.cmp(sb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

/// Orders labels numerically when every label parses as a number, in
/// natural order otherwise.
fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        }),
        None => labels.sort_by(|a, b| natural_cmp(a, b)),
    }
}

fn parse_value(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a long-format CSV (one row per unit/period) into a balanced panel.
///
/// Rows may arrive in any order: units and periods are both sorted, so any
/// permutation of the rows gives the same dataset.
pub fn load_long_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_long_csv(file, schema)
}

/// Same as [`load_long_csv`] but over any reader.
pub fn read_long_csv<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<PanelDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_idx = find(&schema.unit_col)?;
    let time_idx = find(&schema.time_col)?;
    let y_idx = find(&schema.y_col)?;
    let x_idx: Vec<usize> = schema.x_cols.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let k = x_idx.len();

    let mut units: Vec<String> = Vec::new();
    let mut unit_seen: HashSet<String> = HashSet::new();
    let mut times: Vec<String> = Vec::new();
    let mut time_seen: HashSet<String> = HashSet::new();
    let mut cells: HashMap<(String, String), (f64, Vec<f64>)> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let unit = field(unit_idx);
        let time = field(time_idx);
        let numeric = |col: &str, idx: usize| {
            let raw = field(idx);
            parse_value(&raw).ok_or_else(|| Error::NonNumericValue {
                column: col.to_string(),
                unit: unit.clone(),
                time: time.clone(),
                value: raw,
            })
        };
        let yv = numeric(&schema.y_col, y_idx)?;
        let xv: Vec<f64> = schema
            .x_cols
            .iter()
            .zip(&x_idx)
            .map(|(c, &idx)| numeric(c, idx))
            .collect::<Result<_>>()?;
        if unit_seen.insert(unit.clone()) {
            units.push(unit.clone());
        }
        if time_seen.insert(time.clone()) {
            times.push(time.clone());
        }
        let key = (unit.clone(), time.clone());
        if cells.contains_key(&key) {
            return Err(Error::DuplicateCell { unit, time });
        }
        cells.insert(key, (yv, xv));
    }

    sort_labels(&mut units);
    sort_labels(&mut times);
    let (n, t) = (units.len(), times.len());
    if n < 2 || t < 2 || n * (t - 1) <= k {
        return Err(Error::TooFewUnitsOrPeriods {
            n_units: n,
            n_periods: t,
            n_regressors: k,
        });
    }
    let mut y = DVector::zeros(n * t);
    let mut x = DMatrix::zeros(n * t, k);
    for (i, unit) in units.iter().enumerate() {
        for (s, time) in times.iter().enumerate() {
            let (yv, xv) = cells
                .get(&(unit.clone(), time.clone()))
                .ok_or_else(|| Error::MissingCell {
                    unit: unit.clone(),
                    time: time.clone(),
                })?;
            y[i * t + s] = *yv;
            for (c, v) in xv.iter().enumerate() {
                x[(i * t + s, c)] = *v;
            }
        }
    }
    PanelDataset::from_stacked(units, times, schema.x_cols.clone(), y, x)
}

/// Writes a dataset as long-format CSV with columns `unit,time,y,<regressors>`.
pub fn write_long_csv<W: std::io::Write>(ds: &PanelDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header = vec!["unit".to_string(), "time".to_string(), "y".to_string()];
    header.extend(ds.regressor_names().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.n_units() {
        for t in 0..ds.n_periods() {
            let mut row = vec![
                ds.unit_ids()[i].clone(),
                ds.time_ids()[t].clone(),
                format!("{:?}", ds.y(i, t)),
            ];
            row.extend((0..ds.n_regressors()).map(|k| format!("{:?}", ds.x(i, t, k))));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    PooledOls,
    FixedEffects,
    RandomEffects,
    WeightedFixedEffects,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::PooledOls => "pooled",
            Method::FixedEffects => "fe",
            Method::RandomEffects => "re",
            Method::WeightedFixedEffects => "wfe",
        };
        f.write_str(s)
    }
}

/// Output of any of the panel estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub method: Method,
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    pub sigma2_eps: f64,
    /// Zero for methods that do not estimate an individual-effect variance.
    pub sigma2_alpha: f64,
    /// `N x T` residuals on the transformed scale the method fits on.
    pub residuals: DMatrix<f64>,
    pub rss: f64,
    /// Total sum of squares of the transformed response around its mean.
    pub tss: f64,
    pub r_squared: f64,
    /// Final observation weights, `N x T`; only for weighted fits.
    pub weights: Option<DMatrix<f64>>,
    pub variance_components: Option<VarianceComponents>,
    pub converged: bool,
    pub iterations: usize,
}

impl EstimateResult {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.cov_beta.diagonal().map(|v| v.max(0.0).sqrt())
    }
}
