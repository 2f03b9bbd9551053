//! CSV ingestion, feature preprocessing and the train/test accuracy study.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::penalized::{post_lasso, PathConfig};
use crate::{Matrix, Vector};

/// Response column, by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    /// Integers are indices, anything else a name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse::<usize>()
            .map(ColumnRef::Index)
            .unwrap_or_else(|_| ColumnRef::Name(s.to_string())))
    }
}

/// A loaded table: dataset plus the covariate column names.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub data: Dataset,
    pub feature_names: Vec<String>,
}

/// Reads a comma-separated file with a header row and numeric cells.
pub fn load_csv(path: impl AsRef<Path>, response: &ColumnRef, family: GlmFamily) -> Result<LoadedTable> {
    let file = std::fs::File::open(path)?;
    read_csv(file, response, family)
}

pub fn read_csv<R: std::io::Read>(reader: R, response: &ColumnRef, family: GlmFamily) -> Result<LoadedTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = match response {
        ColumnRef::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        ColumnRef::Index(i) if *i < headers.len() => *i,
        ColumnRef::Index(i) => return Err(Error::MissingColumn(format!("#{i}"))),
    };
    if headers.len() < 2 {
        return Err(Error::InvalidDataset("need a response and at least one covariate".into()));
    }

    let p = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // Row numbers are 1-based counting the header as row 1.
        let row = r + 2;
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if c == y_col {
                ys.push(value);
            } else {
                xs.push(value);
            }
        }
    }
    let n = ys.len();
    let x = Matrix::from_row_slice(n, p, &xs);
    let data = Dataset::new(x, Vector::from_vec(ys), family)?;
    let feature_names = headers
        .into_iter()
        .enumerate()
        .filter(|&(c, _)| c != y_col)
        .map(|(_, h)| h)
        .collect();
    Ok(LoadedTable { data, feature_names })
}

/// Centers each column and divides by its sample standard deviation.
/// Constant columns are centered only.
pub fn standardize_columns(x: &Matrix) -> Matrix {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if sd > 0.0 {
            col /= sd;
        } else {
            log::warn!("constant column left unscaled during standardization");
        }
    }
    out
}

/// `[X, X^2]` with squares taken elementwise.
pub fn augment_quadratic(x: &Matrix) -> Matrix {
    let (n, p) = x.shape();
    Matrix::from_fn(n, 2 * p, |i, j| if j < p { x[(i, j)] } else { x[(i, j - p)].powi(2) })
}

/// Leading column of ones.
pub fn with_intercept(x: &Matrix) -> Matrix {
    x.clone().insert_column(0, 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub standardize: bool,
    pub quadratic: bool,
    pub intercept: bool,
}

impl Preprocess {
    /// Standardize, then append squares (standardized again when
    /// `standardize` is set), then prepend the intercept.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut m = if self.standardize { standardize_columns(x) } else { x.clone() };
        if self.quadratic {
            let p = m.ncols();
            let mut aug = augment_quadratic(&m);
            if self.standardize {
                let squares = standardize_columns(&aug.columns(p, p).into_owned());
                aug.columns_mut(p, p).copy_from(&squares);
            }
            m = aug;
        }
        if self.intercept {
            m = with_intercept(&m);
        }
        m
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        Dataset::new(self.apply(data.x()), data.y().clone(), data.family())
    }
}

/// `(train, test)` sizes: `floor(0.8 n)` training rows, the rest for testing.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let train = (4 * n) / 5;
    (train, n - train)
}

/// Mean test-set accuracy over seeded random 80/20 splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub runs: usize,
    pub test_size: usize,
    pub linear_accuracy: f64,
    pub quadratic_accuracy: f64,
    /// Per-run accuracies, `(linear, quadratic)`.
    pub per_run: Vec<(f64, f64)>,
}

fn classification_accuracy(train: &Dataset, test: &Dataset, seed: u64) -> Result<f64> {
    let fit = post_lasso(train, &PathConfig::with_seed(seed))?;
    let eta = test.x() * &fit.fit.beta;
    let correct = eta
        .iter()
        .zip(test.y().iter())
        .filter(|(&e, &y)| (e >= 0.0) == (y == 1.0))
        .count();
    Ok(correct as f64 / test.n() as f64)
}

/// Compares linear and quadratic logistic post-lasso models by held-out
/// accuracy. Features are preprocessed on the full table before splitting;
/// both models see the same split in each run.
pub fn compare_accuracy(raw: &Dataset, standardize: bool, runs: usize, seed: u64) -> Result<AccuracyReport> {
    if raw.family() != GlmFamily::BernoulliLogit {
        return Err(Error::InvalidArgument("accuracy comparison needs a 0/1 response".into()));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be >= 1".into()));
    }
    let linear = Preprocess { standardize, quadratic: false, intercept: false }.apply_dataset(raw)?;
    let quadratic = Preprocess { standardize, quadratic: true, intercept: false }.apply_dataset(raw)?;
    let n = raw.n();
    let (train_size, test_size) = split_sizes(n);

    let per_run: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (train, test) = order.split_at(train_size);
            let cv_seed = rng.next_u64();
            let lin = classification_accuracy(&linear.select_rows(train), &linear.select_rows(test), cv_seed)?;
            let quad = classification_accuracy(&quadratic.select_rows(train), &quadratic.select_rows(test), cv_seed)?;
            Ok((lin, quad))
        })
        .collect::<Result<_>>()?;
    let mean = |f: fn(&(f64, f64)) -> f64| per_run.iter().map(f).sum::<f64>() / runs as f64;
    Ok(AccuracyReport {
        runs,
        test_size,
        linear_accuracy: mean(|r| r.0),
        quadratic_accuracy: mean(|r| r.1),
        per_run,
    })
}
