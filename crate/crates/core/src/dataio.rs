//! Time-series ingestion, normalization, splitting, MAE and synthetic data.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SearchRng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column '{name}' not found; available columns: {available}")]
    MissingTarget { name: String, available: String },
    #[error("row {row}, column '{column}': '{value}' is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("series has {len} rows, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid synthetic parameters: {0}")]
    Synth(String),
}

/// A multivariate series stored row-major. One column is the prediction
/// target, every other column is a network input in header order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: usize,
}

/// Inputs and targets split apart, ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    /// `inputs[t][k]`, one entry per non-target column.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

impl TimeSeries {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, target: usize) -> Result<Self, DataError> {
        if rows.len() < 2 {
            return Err(DataError::TooShort { len: rows.len(), min: 2 });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(DataError::LengthMismatch {
                left: bad.len(),
                right: names.len(),
            });
        }
        if target >= names.len() {
            return Err(DataError::MissingTarget {
                name: format!("#{target}"),
                available: names.join(", "),
            });
        }
        Ok(Self { names, rows, target })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn input_width(&self) -> usize {
        self.width() - 1
    }

    pub fn target_name(&self) -> &str {
        &self.names[self.target]
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.names
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.target)
            .map(|(_, n)| n.as_str())
            .collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.column(self.target)
    }

    pub fn sequence(&self) -> Sequence {
        let inputs = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != self.target)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        Sequence {
            inputs,
            targets: self.targets(),
        }
    }

    /// Contiguous split: the first `train_fraction` of rows, then the rest.
    pub fn split(&self, train_fraction: f64) -> Result<(TimeSeries, TimeSeries), DataError> {
        let cut = (self.len() as f64 * train_fraction).round() as usize;
        if !(0.0..=1.0).contains(&train_fraction) || cut < 2 || self.len() - cut < 2 {
            return Err(DataError::TooShort { len: self.len(), min: 4 });
        }
        let part = |rows: &[Vec<f64>]| TimeSeries {
            names: self.names.clone(),
            rows: rows.to_vec(),
            target: self.target,
        };
        Ok((part(&self.rows[..cut]), part(&self.rows[cut..])))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn read_csv<R: std::io::Read>(reader: R, target_column: &str) -> Result<TimeSeries, DataError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = names
        .iter()
        .position(|n| n == target_column)
        .ok_or_else(|| DataError::MissingTarget {
            name: target_column.to_string(),
            available: names.join(", "),
        })?;
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, after the header
        let row = i + 1;
        let mut values = Vec::with_capacity(names.len());
        for (k, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
                row,
                column: names.get(k).cloned().unwrap_or_default(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonNumeric {
                    row,
                    column: names[k].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(value);
        }
        rows.push(values);
    }
    TimeSeries::new(names, rows, target)
}

pub fn load_csv(path: &Path, target_column: &str) -> Result<TimeSeries, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file), target_column)
}

/// Per-column bounds used by [`min_max_normalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(series: &TimeSeries) -> Self {
        let mut min = vec![f64::INFINITY; series.width()];
        let mut max = vec![f64::NEG_INFINITY; series.width()];
        for row in &series.rows {
            for (k, &v) in row.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Self { min, max }
    }

    fn is_constant(&self, k: usize) -> bool {
        self.max[k] <= self.min[k]
    }

    pub fn apply(&self, series: &TimeSeries) -> TimeSeries {
        let rows = series
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        if self.is_constant(k) {
                            0.0
                        } else {
                            (v - self.min[k]) / (self.max[k] - self.min[k])
                        }
                    })
                    .collect()
            })
            .collect();
        TimeSeries {
            names: series.names.clone(),
            rows,
            target: series.target,
        }
    }

    pub fn invert(&self, series: &TimeSeries) -> TimeSeries {
        let rows = series
            .rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(k, &v)| self.invert_value(k, v)).collect())
            .collect();
        TimeSeries {
            names: series.names.clone(),
            rows,
            target: series.target,
        }
    }

    pub fn invert_value(&self, column: usize, value: f64) -> f64 {
        if self.is_constant(column) {
            self.min[column]
        } else {
            self.min[column] + value * (self.max[column] - self.min[column])
        }
    }
}

/// Maps every column onto `[0, 1]` using its own min and max over the whole
/// series. Constant columns become 0 and are reported with a warning.
pub fn min_max_normalize(series: &TimeSeries) -> (TimeSeries, MinMax) {
    let bounds = MinMax::fit(series);
    for k in (0..series.width()).filter(|&k| bounds.is_constant(k)) {
        log::warn!("column '{}' is constant; normalized to 0", series.names[k]);
    }
    (bounds.apply(series), bounds)
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64, DataError> {
    if predictions.len() != targets.len() {
        return Err(DataError::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(DataError::TooShort { len: 0, min: 1 });
    }
    Ok(mae_unchecked(predictions, targets))
}

pub(crate) fn mae_unchecked(predictions: &[f64], targets: &[f64]) -> f64 {
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    sum / targets.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    SineMix,
    MackeyGlassLike,
}

impl SynthKind {
    pub fn label(self) -> &'static str {
        match self {
            SynthKind::SineMix => "sine_mix",
            SynthKind::MackeyGlassLike => "mackey_glass_like",
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for SynthKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "sine_mix" | "sine" => Ok(SynthKind::SineMix),
            "mackey_glass_like" | "mackey_glass" => Ok(SynthKind::MackeyGlassLike),
            other => Err(DataError::Synth(format!("unknown kind '{other}'"))),
        }
    }
}

/// Parameters of a synthetic series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Rows.
    pub length: usize,
    /// Columns including the target.
    pub width: usize,
    /// Standard deviation of Gaussian noise added to the target.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::SineMix,
            length: 512,
            width: 5,
            noise: 0.02,
            seed: 1,
        }
    }
}

/// Period of sine-mix driver `k`.
pub fn sine_period(k: usize) -> usize {
    16 << (k % 4)
}

/// Period of a noiseless sine-mix series with `width` columns.
pub fn sine_mix_period(width: usize) -> usize {
    (0..width.saturating_sub(1)).map(sine_period).max().unwrap_or(1)
}

/// The target shared by both generators, built from lagged drivers.
/// `d(k, t)` must accept negative `t`.
fn lagged_target(drivers: usize, t: i64, d: impl Fn(usize, i64) -> f64) -> f64 {
    let last = drivers - 1;
    let second = 1 % drivers;
    0.6 * d(0, t - 1) + 0.3 * d(second, t - 2) * d(0, t - 3) + 0.4 * (2.0 * d(last, t - 4)).tanh()
}

pub const MACKEY_GLASS_TAU: usize = 17;
pub const MACKEY_GLASS_BETA: f64 = 0.2;
pub const MACKEY_GLASS_GAMMA: f64 = 0.1;
const MACKEY_GLASS_BURN_IN: usize = 500;

pub fn synth_series(spec: &SynthSpec) -> Result<TimeSeries, DataError> {
    if spec.length < 16 || spec.width < 2 {
        return Err(DataError::Synth(format!(
            "need length >= 16 and width >= 2, got {} and {}",
            spec.length, spec.width
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(DataError::Synth(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let mut rng = SearchRng::seed_from_u64(spec.seed);
    let drivers = spec.width - 1;
    let lead = 4i64;

    let driver_columns: Vec<Vec<f64>> = match spec.kind {
        SynthKind::SineMix => (0..drivers)
            .map(|k| {
                let period = sine_period(k) as i64;
                let offset = rng.random_range(0..period);
                (-lead..spec.length as i64)
                    .map(|t| {
                        let phase = (t + offset).rem_euclid(period) as f64 / period as f64;
                        (std::f64::consts::TAU * phase).sin()
                    })
                    .collect()
            })
            .collect(),
        SynthKind::MackeyGlassLike => (0..drivers)
            .map(|_| {
                let start = 0.5 + rng.random::<f64>();
                mackey_glass(start, MACKEY_GLASS_BURN_IN + lead as usize + spec.length)
                    [MACKEY_GLASS_BURN_IN..]
                    .to_vec()
            })
            .collect(),
    };
    // column index of time t is t + lead
    let d = |k: usize, t: i64| driver_columns[k][(t + lead) as usize];
    let noise = Normal::new(0.0, spec.noise).map_err(|e| DataError::Synth(e.to_string()))?;

    let rows = (0..spec.length as i64)
        .map(|t| {
            let mut row: Vec<f64> = (0..drivers).map(|k| d(k, t)).collect();
            let eps = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            row.push(lagged_target(drivers, t, d) + eps);
            row
        })
        .collect();
    let mut names: Vec<String> = (0..drivers).map(|k| format!("d{k}")).collect();
    names.push("y".to_string());
    TimeSeries::new(names, rows, drivers)
}

/// Discrete Mackey-Glass recursion with a constant initial history.
fn mackey_glass(start: f64, len: usize) -> Vec<f64> {
    let mut x = vec![start; MACKEY_GLASS_TAU + len];
    for t in MACKEY_GLASS_TAU..x.len() - 1 {
        let lagged = x[t - MACKEY_GLASS_TAU];
        x[t + 1] = x[t] + MACKEY_GLASS_BETA * lagged / (1.0 + lagged.powi(10)) - MACKEY_GLASS_GAMMA * x[t];
    }
    x.split_off(MACKEY_GLASS_TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_csv_loads() {
        let s = read_csv("x,y\n1,2\n3,4\n5,6\n".as_bytes(), "y").unwrap();
        assert_eq!((s.len(), s.width()), (3, 2));
        assert_eq!(s.targets(), vec![2.0, 4.0, 6.0]);
        assert_eq!(s.sequence().inputs, vec![vec![1.0], vec![3.0], vec![5.0]]);
    }

    #[test]
    fn missing_target_names_columns() {
        let err = read_csv("a,b\n1,2\n3,4\n".as_bytes(), "y").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'y'") && msg.contains("a, b"), "{msg}");
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let err = read_csv("a,y\n1,2\n3,oops\n".as_bytes(), "y").unwrap_err();
        match err {
            DataError::NonNumeric { row, column, .. } => assert_eq!((row, column.as_str()), (2, "y")),
            other => panic!("{other}"),
        }
        assert!(matches!(read_csv("a,y\n".as_bytes(), "y"), Err(DataError::TooShort { .. })));
    }

    #[test]
    fn thirteen_column_layout_loads() {
        let mut text: String = (1..=12).map(|i| format!("p{i},")).collect();
        text.push_str("flame\n");
        for t in 0..4 {
            let row: Vec<String> = (0..13).map(|k| format!("{}", t * 13 + k)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let s = read_csv(text.as_bytes(), "flame").unwrap();
        assert_eq!((s.width(), s.input_width(), s.target), (13, 12, 12));
    }

    #[test]
    fn normalization_examples() {
        let s = TimeSeries::new(
            vec!["a".into(), "c".into()],
            vec![vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]],
            1,
        )
        .unwrap();
        let (n, bounds) = min_max_normalize(&s);
        assert_eq!(n.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(n.column(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(bounds.invert(&n), s);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.3], &[0.1]).unwrap(), (0.3f64 - 0.1).abs());
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn split_is_contiguous() {
        let s = synth_series(&SynthSpec { length: 20, ..SynthSpec::default() }).unwrap();
        let (a, b) = s.split(0.5).unwrap();
        assert_eq!(a.rows, s.rows[..10]);
        assert_eq!(b.rows, s.rows[10..]);
        assert!(s.split(0.05).is_err());
    }

    #[test]
    fn noiseless_sine_mix_is_periodic() {
        for width in 2..7 {
            let p = sine_mix_period(width);
            let s = synth_series(&SynthSpec { width, noise: 0.0, length: 3 * p, ..SynthSpec::default() }).unwrap();
            for t in 0..s.len() - p {
                assert_eq!(s.rows[t], s.rows[t + p], "width {width} t {t}");
            }
        }
    }

    #[test]
    fn synth_is_seeded() {
        for kind in [SynthKind::SineMix, SynthKind::MackeyGlassLike] {
            let spec = SynthSpec { kind, ..SynthSpec::default() };
            assert_eq!(synth_series(&spec).unwrap(), synth_series(&spec).unwrap());
            let other = SynthSpec { seed: 2, ..spec.clone() };
            assert_ne!(synth_series(&spec).unwrap(), synth_series(&other).unwrap());
            assert!(synth_series(&spec).unwrap().rows.iter().flatten().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn sine_target_matches_generator_equation() {
        let s = synth_series(&SynthSpec { noise: 0.0, ..SynthSpec::default() }).unwrap();
        for t in 4..s.len() {
            let d = |k: usize, lag: usize| s.rows[t - lag][k];
            let want = 0.6 * d(0, 1) + 0.3 * d(1, 2) * d(0, 3) + 0.4 * (2.0 * d(3, 4)).tanh();
            assert!((s.rows[t][4] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let s = synth_series(&SynthSpec::default()).unwrap();
        let mut first = Vec::new();
        s.write_csv(&mut first).unwrap();
        let back = read_csv(first.as_slice(), "y").unwrap();
        assert_eq!(back, s);
        let mut second = Vec::new();
        back.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
    }

    proptest! {
        #[test]
        fn mae_sign_symmetric_and_scale_equivariant(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            a in -10f64..10.0,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = mae(&p, &t).unwrap();
            let neg_p: Vec<f64> = p.iter().map(|v| -v).collect();
            let neg_t: Vec<f64> = t.iter().map(|v| -v).collect();
            prop_assert!((mae(&neg_p, &neg_t).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
            let sp: Vec<f64> = p.iter().map(|v| a * v).collect();
            let st: Vec<f64> = t.iter().map(|v| a * v).collect();
            prop_assert!((mae(&sp, &st).unwrap() - a.abs() * base).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn normalization_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 2..30)) {
            let s = TimeSeries::new(vec!["a".into(), "b".into(), "y".into()], rows, 2).unwrap();
            let (n, bounds) = min_max_normalize(&s);
            prop_assert!(n.rows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            let back = bounds.invert(&n);
            for (r, o) in back.rows.iter().zip(&s.rows) {
                for (k, (x, y)) in r.iter().zip(o).enumerate() {
                    let scale = (bounds.max[k] - bounds.min[k]).max(y.abs());
                    prop_assert!((x - y).abs() <= 8.0 * f64::EPSILON * scale);
                }
            }
        }
    }
}
