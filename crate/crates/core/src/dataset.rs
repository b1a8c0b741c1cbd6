//! Tabular regression data: CSV loading, min-max normalization and
//! reproducible partitioning.
//!
//! Shuffled splits draw from `ChaCha8Rng::seed_from_u64(seed)` (the
//! `rand_chacha` crate) followed by a Fisher-Yates shuffle of `0..n`. That
//! generator is part of the reproducibility contract: the same seed gives
//! the same partitions on every platform.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which CSV column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetColumn::Name(n) => write!(f, "{n}"),
            TargetColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Unnormalized data as read from disk.
#[derive(Debug, Clone)]
pub struct RawData {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl RawData {
    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> RawData {
        RawData {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// A numeric CSV table: optional header plus an `n x c` matrix.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: Array2<f64>,
}

/// Reads every cell of a CSV file as a finite `f64`.
///
/// An empty file yields a `0 x 0` table; callers decide whether that is an
/// error.
pub fn read_table<P: AsRef<Path>>(path: P, has_header: bool) -> Result<Table> {
    let file = std::fs::File::open(path.as_ref())?;
    read_table_from(file, has_header)
}

pub fn read_table_from<R: std::io::Read>(reader: R, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = if has_header {
        let h = rdr.headers().map_err(csv_error)?;
        if h.is_empty() {
            None
        } else {
            Some(h.iter().map(str::to_string).collect::<Vec<_>>())
        }
    } else {
        None
    };

    let mut cells = Vec::new();
    let mut ncols = header.as_ref().map(Vec::len);
    let mut nrows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(r + 1);
        match ncols {
            Some(c) if c != rec.len() => {
                return Err(Error::Parse {
                    row,
                    column: rec.len().min(c) + 1,
                    message: format!("expected {c} fields, found {}", rec.len()),
                })
            }
            None => ncols = Some(rec.len()),
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { row, column: c + 1 });
            }
            cells.push(v);
        }
        nrows += 1;
    }
    let ncols = if nrows == 0 { 0 } else { ncols.unwrap_or(0) };
    let values = Array2::from_shape_vec((nrows, ncols), cells)
        .map_err(|e| Error::Schema(e.to_string()))?;
    Ok(Table { header, values })
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

impl Table {
    /// Resolves a target column against this table's header.
    pub fn column_index(&self, target: &TargetColumn) -> Result<usize> {
        match target {
            TargetColumn::Index(i) if *i < self.values.ncols() => Ok(*i),
            TargetColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingTarget(name.clone())),
            other => Err(Error::MissingTarget(other.to_string())),
        }
    }

    /// Removes one column, returning the remaining matrix and header.
    pub fn without_column(&self, col: usize) -> (Array2<f64>, Option<Vec<String>>) {
        let keep: Vec<usize> = (0..self.values.ncols()).filter(|&c| c != col).collect();
        let header = self
            .header
            .as_ref()
            .map(|h| keep.iter().map(|&c| h[c].clone()).collect());
        (self.values.select(Axis(1), &keep), header)
    }
}

/// Loads a regression table, splitting off the target column.
pub fn load_csv<P: AsRef<Path>>(path: P, target: &TargetColumn, has_header: bool) -> Result<RawData> {
    let table = read_table(path, has_header)?;
    raw_from_table(&table, target)
}

pub fn raw_from_table(table: &Table, target: &TargetColumn) -> Result<RawData> {
    if table.values.nrows() == 0 {
        return Err(Error::NoRows);
    }
    let col = table.column_index(target)?;
    if table.values.ncols() < 2 {
        return Err(Error::Schema("need at least one feature column besides the target".into()));
    }
    let targets = table.values.column(col).to_owned();
    let (features, feature_names) = table.without_column(col);
    Ok(RawData {
        features,
        targets,
        feature_names,
    })
}

/// Closed interval observed for one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    fn observe<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        ColumnRange { min, max }
    }

    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

/// Per-column min-max statistics for features and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub features: Vec<ColumnRange>,
    pub target: ColumnRange,
}

impl NormalizationTransform {
    /// Fits on the given rows of `raw` (all rows when `rows` is `None`).
    pub fn fit(raw: &RawData, rows: Option<&[usize]>) -> Self {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..raw.n_samples()).collect();
                &all
            }
        };
        let features = (0..raw.n_features())
            .map(|c| ColumnRange::observe(rows.iter().map(|&r| &raw.features[[r, c]])))
            .collect();
        let target = ColumnRange::observe(rows.iter().map(|&r| &raw.targets[r]));
        NormalizationTransform { features, target }
    }

    /// Identity transform for data that is already in the unit cube.
    pub fn identity(p: usize) -> Self {
        let unit = ColumnRange { min: 0.0, max: 1.0 };
        NormalizationTransform {
            features: vec![unit; p],
            target: unit,
        }
    }

    pub fn transform_features(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.features.len() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (c, range) in self.features.iter().enumerate() {
            out.column_mut(c).mapv_inplace(|v| range.forward(v));
        }
        Ok(out)
    }

    pub fn transform_targets(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| self.target.forward(v))
    }

    pub fn inverse_features(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (c, range) in self.features.iter().enumerate() {
            out.column_mut(c).mapv_inplace(|v| range.inverse(v));
        }
        out
    }

    pub fn inverse_targets(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| self.target.inverse(v))
    }

    /// Applies the transform to raw data. Rows outside the fitting rows may
    /// land outside `[0, 1]`; no clipping is performed.
    pub fn apply(&self, raw: &RawData) -> Result<Dataset> {
        let features = self.transform_features(&raw.features)?;
        let targets = self.transform_targets(&raw.targets);
        Ok(Dataset {
            features,
            targets,
            feature_names: raw.feature_names.clone(),
            norm: self.clone(),
        })
    }
}

/// Normalized regression data.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n x p`, row-major.
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub feature_names: Option<Vec<String>>,
    pub norm: NormalizationTransform,
}

impl Dataset {
    /// Wraps already-normalized data with an identity transform.
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::NoRows);
        }
        if features.ncols() == 0 {
            return Err(Error::Schema("dataset needs at least one feature".into()));
        }
        if features.nrows() != targets.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        let p = features.ncols();
        Ok(Dataset {
            features: features.as_standard_layout().into_owned(),
            targets,
            feature_names: None,
            norm: NormalizationTransform::identity(p),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            norm: self.norm.clone(),
        }
    }
}

/// Min-max normalizes every column of `raw` into `[0, 1]` using statistics
/// of all its rows. Constant columns map to `0.0`.
pub fn normalize(raw: &RawData) -> Dataset {
    let norm = NormalizationTransform::fit(raw, None);
    norm.apply(raw).expect("transform fitted on the same columns")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// 75% train, 25% test.
    Holdout75_25,
    /// 50% train, 25% validation, 25% test.
    Holdout50_25_25,
    KFold(usize),
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "75/25" => Ok(SplitMode::Holdout75_25),
            "50/25/25" => Ok(SplitMode::Holdout50_25_25),
            _ => {
                let k = s
                    .strip_prefix("cv:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))?;
                if k < 2 {
                    return Err(Error::Config("cv:<k> needs k >= 2".into()));
                }
                Ok(SplitMode::KFold(k))
            }
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Holdout75_25 => write!(f, "75/25"),
            SplitMode::Holdout50_25_25 => write!(f, "50/25/25"),
            SplitMode::KFold(k) => write!(f, "cv:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
}

/// Disjoint, exhaustive index sets over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partitions {
    Holdout {
        train: Vec<usize>,
        validation: Vec<usize>,
        test: Vec<usize>,
    },
    Folds(Vec<Vec<usize>>),
}

impl Partitions {
    /// Every index set, in a fixed order.
    pub fn parts(&self) -> Vec<&[usize]> {
        match self {
            Partitions::Holdout {
                train,
                validation,
                test,
            } => {
                let mut v: Vec<&[usize]> = vec![train];
                if !validation.is_empty() {
                    v.push(validation);
                }
                v.push(test);
                v
            }
            Partitions::Folds(f) => f.iter().map(Vec::as_slice).collect(),
        }
    }
}

pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx
}

/// Partitions `0..n` according to `spec`.
pub fn split(n: usize, spec: &SplitSpec) -> Result<Partitions> {
    let idx = shuffled_indices(n, spec.seed);
    match spec.mode {
        SplitMode::Holdout75_25 => {
            let n_test = n / 4;
            if n_test == 0 {
                return Err(Error::EmptyPartition("test"));
            }
            let (train, test) = idx.split_at(n - n_test);
            Ok(Partitions::Holdout {
                train: train.to_vec(),
                validation: Vec::new(),
                test: test.to_vec(),
            })
        }
        SplitMode::Holdout50_25_25 => {
            let quarter = n / 4;
            if quarter == 0 {
                return Err(Error::EmptyPartition("validation"));
            }
            let n_train = n - 2 * quarter;
            Ok(Partitions::Holdout {
                train: idx[..n_train].to_vec(),
                validation: idx[n_train..n_train + quarter].to_vec(),
                test: idx[n_train + quarter..].to_vec(),
            })
        }
        SplitMode::KFold(k) => {
            if k < 2 {
                return Err(Error::Config("k-fold needs k >= 2".into()));
            }
            if n < k {
                return Err(Error::EmptyPartition("fold"));
            }
            let mut folds = vec![Vec::new(); k];
            for (i, &j) in idx.iter().enumerate() {
                folds[i % k].push(j);
            }
            Ok(Partitions::Folds(folds))
        }
    }
}

/// Splits a dataset per `spec`, fitting normalization statistics on the
/// training rows only (train + validation for holdouts, all rows for
/// k-fold) and applying them to every row.
pub fn normalize_for_split(raw: &RawData, spec: &SplitSpec) -> Result<(Dataset, Partitions)> {
    let parts = split(raw.n_samples(), spec)?;
    let fit_rows: Vec<usize> = match &parts {
        Partitions::Holdout {
            train, validation, ..
        } => train.iter().chain(validation).copied().collect(),
        Partitions::Folds(_) => (0..raw.n_samples()).collect(),
    };
    let norm = NormalizationTransform::fit(raw, Some(&fit_rows));
    Ok((norm.apply(raw)?, parts))
}
