//! Per-iteration training metrics and the observer hook both trainers call.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{accuracy, Architecture};
use crate::data::Dataset;
use crate::scalar::Scalar;

pub const METRICS_HEADER: &str = "iter,wall_seconds,objective,train_acc,test_acc";

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    /// 1-based iteration (ADMM) or epoch (SGD).
    pub iteration: usize,
    /// Cumulative optimization time, excluding metric evaluation.
    pub wall_seconds: f64,
    pub objective: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

impl HistoryRow {
    pub fn to_csv_fields(&self) -> String {
        let test = self.test_accuracy.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.iteration, self.wall_seconds, self.objective, self.train_accuracy, test
        )
    }

    pub fn parse_csv_fields(fields: &[&str], line: u64) -> Result<Self> {
        let bad = |what: &str| Error::Parse { line, message: format!("bad {what}") };
        if fields.len() != 5 {
            return Err(Error::Parse { line, message: format!("expected 5 fields, found {}", fields.len()) });
        }
        Ok(Self {
            iteration: fields[0].parse().map_err(|_| bad("iter"))?,
            wall_seconds: fields[1].parse().map_err(|_| bad("wall_seconds"))?,
            objective: fields[2].parse().map_err(|_| bad("objective"))?,
            train_accuracy: fields[3].parse().map_err(|_| bad("train_acc"))?,
            test_accuracy: if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse().map_err(|_| bad("test_acc"))?)
            },
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.to_csv_fields())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == METRICS_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: "missing metrics header".into() }),
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            rows.push(HistoryRow::parse_csv_fields(&fields, k as u64 + 2)?);
        }
        Ok(Self { rows })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Called once per iteration with the freshly recorded row and current
/// weights. May fill in test metrics and request an early stop.
pub trait Observer<T> {
    fn observe(&mut self, row: &mut HistoryRow, arch: &Architecture<T>, weights: &[Matrix<T>]) -> Flow;
}

impl<T, F> Observer<T> for F
where
    F: FnMut(&mut HistoryRow, &Architecture<T>, &[Matrix<T>]) -> Flow,
{
    fn observe(&mut self, row: &mut HistoryRow, arch: &Architecture<T>, weights: &[Matrix<T>]) -> Flow {
        self(row, arch, weights)
    }
}

/// Observer that does nothing.
pub struct Silent;

impl<T> Observer<T> for Silent {
    fn observe(&mut self, _: &mut HistoryRow, _: &Architecture<T>, _: &[Matrix<T>]) -> Flow {
        Flow::Continue
    }
}

/// Scores a held-out set, optionally stops once test accuracy reaches a
/// threshold, and optionally keeps every weight iterate.
pub struct Evaluator<'a, T> {
    test: Option<&'a Dataset<T>>,
    stop_at: Option<f64>,
    keep_weights: bool,
    pub snapshots: Vec<Vec<Matrix<T>>>,
}

impl<'a, T: Scalar> Evaluator<'a, T> {
    pub fn new(test: Option<&'a Dataset<T>>) -> Self {
        Self { test, stop_at: None, keep_weights: false, snapshots: Vec::new() }
    }

    pub fn stop_at(mut self, threshold: Option<f64>) -> Self {
        self.stop_at = threshold;
        self
    }

    pub fn keep_weights(mut self) -> Self {
        self.keep_weights = true;
        self
    }
}

impl<T: Scalar> Observer<T> for Evaluator<'_, T> {
    fn observe(&mut self, row: &mut HistoryRow, arch: &Architecture<T>, weights: &[Matrix<T>]) -> Flow {
        if let Some(test) = self.test {
            row.test_accuracy = accuracy(arch, weights, test).ok();
        }
        if self.keep_weights {
            self.snapshots.push(weights.to_vec());
        }
        match self.stop_at {
            Some(t) if row.test_accuracy.unwrap_or(row.train_accuracy) >= t => Flow::Stop,
            _ => Flow::Continue,
        }
    }
}

/// Observer that appends each row to a metrics CSV as soon as it is recorded.
pub struct CsvSink<O> {
    out: BufWriter<File>,
    inner: O,
}

impl<O> CsvSink<O> {
    pub fn create(path: impl AsRef<Path>, inner: O) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(Self { out, inner })
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<T, O: Observer<T>> Observer<T> for CsvSink<O> {
    fn observe(&mut self, row: &mut HistoryRow, arch: &Architecture<T>, weights: &[Matrix<T>]) -> Flow {
        let flow = self.inner.observe(row, arch, weights);
        // a failed write surfaces when the caller re-reads the file
        let _ = writeln!(self.out, "{}", row.to_csv_fields()).and_then(|_| self.out.flush());
        flow
    }
}
