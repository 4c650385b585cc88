use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use admmnet::baseline_sgd::{train_sgd_with, SgdConfig};
use admmnet::data::{gen_blobs, gen_xor, load_csv, load_libsvm, Dataset, Standardizer};
use admmnet::distributed::{distributed_train_with, DistConfig};
use admmnet::history::{CsvSink, Evaluator, History};
use admmnet::network::{train_with, Architecture, Hyperparams, Model};
use admmnet::Activation;

use crate::config::{ActivationKind, ConfigError, DataSource, Format, RunConfig, Synthetic};

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<admmnet::Error> for CliError {
    fn from(e: admmnet::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn load_all(source: &DataSource, seed: u64) -> Result<Dataset<f64>> {
    match source {
        DataSource::File { path, format, label_column, header } => {
            let data = match format {
                Format::Csv => {
                    let col = match label_column {
                        Some(c) => *c,
                        None => csv_width(path)?.saturating_sub(1),
                    };
                    load_csv(path, col, *header)
                }
                Format::Libsvm => load_libsvm(path),
            };
            data.map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
        DataSource::Synthetic { generator, samples, features, classes, separation, noise } => match generator {
            Synthetic::Blobs => gen_blobs(*samples, *features, *classes, *separation, seed).map_err(config_err),
            Synthetic::Xor => gen_xor(*samples, *noise, seed).map_err(config_err),
        },
    }
}

fn csv_width(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(config_err)?;
        if !line.trim().is_empty() {
            return Ok(line.split(',').count());
        }
    }
    Err(config_err(format!("{} is empty", path.display())))
}

/// Train/test split after a seeded shuffle, with standardization fitted on
/// the training part.
struct Prepared {
    train: Dataset<f64>,
    test: Option<Dataset<f64>>,
    standardizer: Option<Standardizer>,
    load_seconds: f64,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let started = Instant::now();
    let data = load_all(&cfg.source, cfg.seed)?.shuffled(cfg.seed);
    let n_test = (cfg.test_fraction * data.n_samples() as f64).round() as usize;
    let (train, test) = if n_test == 0 {
        (data, None)
    } else {
        let (a, b) = data.split_off(n_test).map_err(config_err)?;
        (a, Some(b))
    };
    let (train, test, standardizer) = if cfg.normalize {
        let s = Standardizer::fit(&train)?;
        let test = test.map(|t| s.apply(&t)).transpose()?;
        (s.apply(&train)?, test, Some(s))
    } else {
        (train, test, None)
    };
    Ok(Prepared { train, test, standardizer, load_seconds: started.elapsed().as_secs_f64() })
}

fn architecture(cfg: &RunConfig, data: &Dataset<f64>) -> Result<Architecture<f64>> {
    let dims = cfg.arch.clone().unwrap_or_else(|| vec![data.n_features(), 16, data.n_classes()]);
    if dims[0] != data.n_features() || dims[dims.len() - 1] != data.n_classes() {
        return Err(config_err(format!(
            "arch {:?} does not fit data with {} features and {} classes",
            dims,
            data.n_features(),
            data.n_classes()
        )));
    }
    let act = match cfg.activation {
        ActivationKind::Relu => Activation::Relu,
        ActivationKind::Hardsig => Activation::HardSigmoid,
    };
    Architecture::uniform(dims, act).map_err(config_err)
}

fn hyperparams(cfg: &RunConfig, arch: &Architecture<f64>) -> Hyperparams<f64> {
    Hyperparams::uniform(arch, cfg.beta, cfg.gamma).with_iters(cfg.warmup, cfg.iters).with_seed(cfg.seed)
}

fn sgd_config(cfg: &RunConfig) -> SgdConfig {
    SgdConfig { learning_rate: cfg.lr, batch_size: cfg.batch_size, epochs: cfg.epochs, seed: cfg.seed }
}

/// Trained weights plus what is needed to score raw data with them.
#[derive(Serialize, Deserialize)]
struct SavedModel {
    model: Model<f64>,
    classes: Vec<String>,
    mean: Option<Vec<f64>>,
    scale: Option<Vec<f64>>,
}

fn save_model(path: &Path, model: &Model<f64>, prep: &Prepared) -> Result<()> {
    let saved = SavedModel {
        model: model.clone(),
        classes: prep.train.classes().to_vec(),
        mean: prep.standardizer.as_ref().map(|s| s.mean.clone()),
        scale: prep.standardizer.as_ref().map(|s| s.scale.clone()),
    };
    let out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(out, &saved).map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    version: &'a str,
    git_revision: &'a str,
    iterations: usize,
    final_objective: Option<f64>,
    final_train_accuracy: Option<f64>,
    final_test_accuracy: Option<f64>,
    train_seconds: f64,
    total_seconds: f64,
    train_samples: usize,
    test_samples: usize,
    config: &'a RunConfig,
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn write_summary(command: &str, cfg: &RunConfig, prep: &Prepared, history: &History, started: Instant) -> Result<()> {
    let last = history.last();
    let summary = Summary {
        command,
        version: env!("CARGO_PKG_VERSION"),
        git_revision: option_env!("ADMMNET_GIT_REVISION").unwrap_or("unknown"),
        iterations: history.len(),
        final_objective: last.map(|r| r.objective),
        final_train_accuracy: last.map(|r| r.train_accuracy),
        final_test_accuracy: last.and_then(|r| r.test_accuracy),
        train_seconds: last.map_or(0.0, |r| r.wall_seconds),
        total_seconds: started.elapsed().as_secs_f64() - prep.load_seconds,
        train_samples: prep.train.n_samples(),
        test_samples: prep.test.as_ref().map_or(0, |t| t.n_samples()),
        config: cfg,
    };
    let out = BufWriter::new(File::create(summary_path(&cfg.out))?);
    serde_json::to_writer_pretty(out, &summary).map_err(|e| CliError::Runtime(e.to_string()))
}

fn report(label: &str, history: &History) {
    if let Some(r) = history.last() {
        let test = r.test_accuracy.map_or(String::new(), |t| format!(", test accuracy {t:.4}"));
        eprintln!(
            "{label}: {} iterations in {:.3}s, train accuracy {:.4}{test}",
            r.iteration, r.wall_seconds, r.train_accuracy
        );
    }
}

/// Runs ADMM on the prepared split, single-node for one worker.
fn run_admm(
    prep: &Prepared,
    (arch, hp): &(Architecture<f64>, Hyperparams<f64>),
    workers: usize,
    observer: &mut impl admmnet::Observer<f64>,
) -> Result<(Model<f64>, History)> {
    if workers == 1 {
        let out = train_with(&prep.train, arch, hp, observer)?;
        Ok((out.model, out.history))
    } else {
        let out = distributed_train_with(&prep.train, arch, hp, &DistConfig::new(workers), observer)?;
        Ok((out.model, out.history))
    }
}

/// Architecture and hyperparameters, checked against the data and the
/// worker counts before any output file is created.
fn admm_setup(cfg: &RunConfig, prep: &Prepared, workers: &[usize]) -> Result<(Architecture<f64>, Hyperparams<f64>)> {
    let arch = architecture(cfg, &prep.train)?;
    let hp = hyperparams(cfg, &arch);
    hp.validate(&arch).map_err(config_err)?;
    let n = prep.train.n_samples();
    if let Some(w) = workers.iter().find(|&&w| w > n) {
        return Err(config_err(format!("{w} workers for {n} training samples")));
    }
    Ok((arch, hp))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let setup = admm_setup(cfg, &prep, &[cfg.workers])?;
    let eval = Evaluator::new(prep.test.as_ref()).stop_at(cfg.threshold);
    let mut sink = CsvSink::create(&cfg.out, eval)?;
    let (model, history) = run_admm(&prep, &setup, cfg.workers, &mut sink)?;
    write_summary("train", cfg, &prep, &history, started)?;
    if let Some(path) = &cfg.model_out {
        save_model(path, &model, &prep)?;
    }
    report("admm", &history);
    Ok(())
}

pub fn train_sgd(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let arch = architecture(cfg, &prep.train)?;
    let sgd = sgd_config(cfg);
    sgd.validate().map_err(config_err)?;
    let eval = Evaluator::new(prep.test.as_ref()).stop_at(cfg.threshold);
    let mut sink = CsvSink::create(&cfg.out, eval)?;
    let out = train_sgd_with(&prep.train, &arch, &sgd, &mut sink)?;
    write_summary("train-sgd", cfg, &prep, &out.history, started)?;
    if let Some(path) = &cfg.model_out {
        save_model(path, &out.model, &prep)?;
    }
    report("sgd", &out.history);
    Ok(())
}

/// Prints `{"accuracy": …, "samples": …}` for a saved model on a dataset.
pub fn eval(cfg: &RunConfig) -> Result<()> {
    let path = cfg.model.as_ref().ok_or_else(|| config_err("eval needs --model <path>"))?;
    let file = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let saved: SavedModel = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let data = load_all(&cfg.source, cfg.seed)?;
    if data.classes() != saved.classes.as_slice() {
        return Err(config_err(format!(
            "dataset classes {:?} differ from the model's {:?}",
            data.classes(),
            saved.classes
        )));
    }
    let data = match (saved.mean, saved.scale) {
        (Some(mean), Some(scale)) => Standardizer { mean, scale }.apply(&data).map_err(config_err)?,
        _ => data,
    };
    let accuracy = saved.model.accuracy(&data).map_err(config_err)?;
    println!("{}", serde_json::json!({ "accuracy": accuracy, "samples": data.n_samples() }));
    Ok(())
}

pub const SCALING_HEADER: &str = "workers,seconds_to_threshold,iterations";

/// For each worker count, trains until the test accuracy threshold (or the
/// iteration cap) and records the optimization time to reach it.
pub fn bench_scaling(cfg: &RunConfig) -> Result<()> {
    let threshold = cfg.threshold.ok_or_else(|| config_err("bench-scaling needs --threshold"))?;
    let prep = prepare(cfg)?;
    let setup = admm_setup(cfg, &prep, &cfg.worker_list)?;
    let mut out = BufWriter::new(File::create(&cfg.out)?);
    writeln!(out, "{SCALING_HEADER}")?;
    for &n in &cfg.worker_list {
        let mut eval = Evaluator::new(prep.test.as_ref()).stop_at(Some(threshold));
        let (_, history) = run_admm(&prep, &setup, n, &mut eval)?;
        let hit = history.rows.iter().find(|r| r.test_accuracy.unwrap_or(r.train_accuracy) >= threshold);
        match hit {
            Some(r) => writeln!(out, "{n},{},{}", r.wall_seconds, r.iteration)?,
            None => writeln!(out, "{n},,{}", history.len())?,
        }
        out.flush()?;
        eprintln!("workers {n}: {}", hit.map_or("threshold not reached".to_string(), |r| format!("{:.3}s", r.wall_seconds)));
    }
    Ok(())
}

pub const COMPARE_HEADER: &str = "method,iter,wall_seconds,objective,train_acc,test_acc";

/// ADMM and SGD on the same split, both histories in one file.
pub fn compare(cfg: &RunConfig) -> Result<()> {
    let prep = prepare(cfg)?;
    let setup = admm_setup(cfg, &prep, &[cfg.workers])?;
    let sgd = sgd_config(cfg);
    sgd.validate().map_err(config_err)?;

    let mut eval = Evaluator::new(prep.test.as_ref()).stop_at(cfg.threshold);
    let (_, admm) = run_admm(&prep, &setup, cfg.workers, &mut eval)?;
    let mut eval = Evaluator::new(prep.test.as_ref()).stop_at(cfg.threshold);
    let sgd_run = train_sgd_with(&prep.train, &setup.0, &sgd, &mut eval)?;

    let mut out = BufWriter::new(File::create(&cfg.out)?);
    writeln!(out, "{COMPARE_HEADER}")?;
    for (method, history) in [("admm", &admm), ("sgd", &sgd_run.history)] {
        for row in &history.rows {
            writeln!(out, "{method},{}", row.to_csv_fields())?;
        }
    }
    out.flush()?;
    report("admm", &admm);
    report("sgd", &sgd_run.history);
    Ok(())
}
