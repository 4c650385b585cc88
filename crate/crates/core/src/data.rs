//! Datasets in sample-per-column layout, file loaders, standardization and
//! seeded synthetic generators.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Features (`d₀ × n`) and one-hot labels (`classes × n`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Matrix<T>,
    classes: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Matrix<T>, classes: Vec<String>) -> Result<Self> {
        if features.cols() != labels.cols() {
            return Err(mismatch("Dataset::new", features.cols(), labels.cols()));
        }
        if classes.len() != labels.rows() {
            return Err(mismatch("Dataset::new classes", labels.rows(), classes.len()));
        }
        for j in 0..labels.cols() {
            let mut sum = T::zero();
            for i in 0..labels.rows() {
                let v = labels.get(i, j);
                if v != T::zero() && v != T::one() {
                    return Err(Error::InvalidArgument(format!("label entry ({i}, {j}) is {v}")));
                }
                sum += v;
            }
            if sum != T::one() {
                return Err(Error::InvalidArgument(format!("label column {j} is not one-hot")));
            }
        }
        Ok(Self { features, labels, classes })
    }

    /// One-hot encodes class indices.
    pub fn from_class_indices(features: Matrix<T>, classes: &[usize], n_classes: usize) -> Result<Self> {
        if let Some(&bad) = classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidArgument(format!("class index {bad} ≥ {n_classes}")));
        }
        let mut labels = Matrix::zeros(n_classes, classes.len());
        for (j, &c) in classes.iter().enumerate() {
            labels.set(c, j, T::one());
        }
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::new(features, labels, names)
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &Matrix<T> {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_samples(&self) -> usize {
        self.features.cols()
    }

    pub fn n_features(&self) -> usize {
        self.features.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.rows()
    }

    /// Index of the hot entry in every label column.
    pub fn class_indices(&self) -> Vec<usize> {
        (0..self.n_samples())
            .map(|j| (0..self.n_classes()).position(|i| self.labels.get(i, j) == T::one()).unwrap_or(0))
            .collect()
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            features: self.features.columns(range.clone()),
            labels: self.labels.columns(range),
            classes: self.classes.clone(),
        }
    }

    /// Splits off the last `n_test` samples as a held-out set.
    pub fn split_off(&self, n_test: usize) -> Result<(Self, Self)> {
        let n = self.n_samples();
        if n_test == 0 || n_test >= n {
            return Err(Error::InvalidArgument(format!("cannot hold out {n_test} of {n} samples")));
        }
        Ok((self.columns(0..n - n_test), self.columns(n - n_test..n)))
    }

    /// Reorders samples by a seeded permutation.
    pub fn shuffled(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..self.n_samples()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |m: &Matrix<T>| Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, order[j]));
        Self { features: pick(&self.features), labels: pick(&self.labels), classes: self.classes.clone() }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |m: &Matrix<T>| m.as_slice().iter().map(|v| U::lit(v.as_f64())).collect::<Vec<_>>();
        Dataset {
            features: Matrix::from_raw(self.features.rows(), self.features.cols(), conv(&self.features)),
            labels: Matrix::from_raw(self.labels.rows(), self.labels.cols(), conv(&self.labels)),
            classes: self.classes.clone(),
        }
    }

    /// Writes one sample per line, features first and the class name last.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let idx = self.class_indices();
        for (j, &c) in idx.iter().enumerate() {
            for i in 0..self.n_features() {
                write!(out, "{},", self.features.get(i, j).as_f64())?;
            }
            writeln!(out, "{}", self.classes[c])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sorts class names numerically when every name parses as a number.
fn class_order(names: BTreeSet<String>) -> Vec<String> {
    let mut names: Vec<String> = names.into_iter().collect();
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    names
}

fn assemble(rows: Vec<Vec<f64>>, names: Vec<String>, n_features: usize) -> Result<Dataset<f64>> {
    let classes = class_order(names.iter().cloned().collect());
    let index: Vec<usize> = names
        .iter()
        .map(|n| classes.iter().position(|c| c == n).expect("class collected above"))
        .collect();
    let n = rows.len();
    let features = Matrix::from_fn(n_features, n, |i, j| rows[j].get(i).copied().unwrap_or(0.0));
    let mut labels = Matrix::zeros(classes.len(), n);
    for (j, &c) in index.iter().enumerate() {
        labels.set(c, j, 1.0);
    }
    Dataset::new(features, labels, classes)
}

/// Loads a numeric CSV with one sample per row.
pub fn load_csv(path: impl AsRef<Path>, label_column: usize, has_header: bool) -> Result<Dataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;
    let mut rows = Vec::new();
    let mut names = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if label_column >= record.len() {
            return Err(Error::Parse {
                line,
                message: format!("label column {label_column} out of range for {} fields", record.len()),
            });
        }
        let mut row = Vec::with_capacity(record.len() - 1);
        for (k, field) in record.iter().enumerate() {
            if k == label_column {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field {k}: '{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("field {k} is not finite") });
            }
            row.push(v);
        }
        rows.push(row);
        names.push(record[label_column].to_string());
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, message: "no data rows".into() });
    }
    let d = rows[0].len();
    assemble(rows, names, d)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Loads LibSVM sparse text (`label idx:value ...`, 1-based indices).
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut names = Vec::new();
    let mut n_features = 0;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k as u64 + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let label = parts.next().expect("non-empty line has a token").to_string();
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for tok in parts {
            let bad = || Error::Parse { line: lineno, message: format!("malformed pair '{tok}'") };
            let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 || !val.is_finite() {
                return Err(bad());
            }
            if pairs.iter().any(|&(i, _)| i == idx - 1) {
                return Err(Error::Parse { line: lineno, message: format!("duplicate index {idx}") });
            }
            pairs.push((idx - 1, val));
        }
        let width = pairs.iter().map(|&(i, _)| i + 1).max().unwrap_or(0);
        n_features = n_features.max(width);
        let mut row = vec![0.0; width];
        for (i, v) in pairs {
            row[i] = v;
        }
        rows.push(row);
        names.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, message: "no data rows".into() });
    }
    assemble(rows, names, n_features)
}

/// Per-feature affine map fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

const VARIANCE_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit<T: Scalar>(data: &Dataset<T>) -> Result<Self> {
        let x = data.features();
        if x.is_empty() {
            return Err(Error::InvalidArgument("cannot standardize an empty dataset".into()));
        }
        let n = x.cols() as f64;
        let mut mean = Vec::with_capacity(x.rows());
        let mut scale = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mu = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            let var = row.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>() / n;
            mean.push(mu);
            scale.push(var.max(VARIANCE_FLOOR).sqrt());
        }
        Ok(Self { mean, scale })
    }

    pub fn apply<T: Scalar>(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        let x = data.features();
        if x.rows() != self.mean.len() {
            return Err(mismatch("Standardizer::apply", self.mean.len(), x.rows()));
        }
        let features = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            T::lit((x.get(i, j).as_f64() - self.mean[i]) / self.scale[i])
        });
        Ok(Dataset { features, labels: data.labels.clone(), classes: data.classes.clone() })
    }
}

/// Standardizes every feature row to zero mean and unit variance.
pub fn normalize<T: Scalar>(data: &Dataset<T>) -> Result<(Dataset<T>, Standardizer)> {
    let s = Standardizer::fit(data)?;
    Ok((s.apply(data)?, s))
}

/// Isotropic unit-variance Gaussian clusters whose centers are `separation`
/// apart. Two classes sit at `±separation/2` along the all-ones diagonal; more
/// classes sit on scaled coordinate axes, recentered at the origin.
pub fn gen_blobs(n: usize, d: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset<f64>> {
    if classes < 2 || n < classes || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "gen_blobs needs classes ≥ 2, n ≥ classes, d ≥ 1 (n={n}, d={d}, classes={classes})"
        )));
    }
    if classes > 2 && classes > d {
        return Err(Error::InvalidArgument(format!("{classes} classes need at least {classes} dimensions")));
    }
    if !(separation >= 0.0) {
        return Err(Error::InvalidArgument("separation must be nonnegative".into()));
    }
    let centers: Vec<Vec<f64>> = if classes == 2 {
        let c = separation / 2.0 / (d as f64).sqrt();
        vec![vec![-c; d], vec![c; d]]
    } else {
        let s = separation / std::f64::consts::SQRT_2;
        let shift = s / classes as f64;
        (0..classes)
            .map(|k| (0..d).map(|i| if i == k { s - shift } else if i < classes { -shift } else { 0.0 }).collect())
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|j| j % classes).collect();
    let mut x = Matrix::zeros(d, n);
    for (j, &c) in labels.iter().enumerate() {
        for (i, &mu) in centers[c].iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            x.set(i, j, mu + noise);
        }
    }
    Dataset::from_class_indices(x, &labels, classes)
}

/// Noisy XOR: quadrant centers `(±1, ±1)`, class 1 when the signs differ.
pub fn gen_xor(n: usize, noise: f64, seed: u64) -> Result<Dataset<f64>> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("gen_xor needs n ≥ 4, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(2, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let q = j % 4;
        let sx = if q & 1 == 0 { 1.0 } else { -1.0 };
        let sy = if q & 2 == 0 { 1.0 } else { -1.0 };
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        x.set(0, j, sx + noise * ex);
        x.set(1, j, sy + noise * ey);
        labels.push(usize::from((sx > 0.0) != (sy > 0.0)));
    }
    Dataset::from_class_indices(x, &labels, 2)
}
