//! Run configuration: a TOML file overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use admmnet::network::{DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_WARMUP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Synthetic {
    Blobs,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Hardsig,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad list entry {p:?}")))
        .collect()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(transparent)]
pub struct UsizeList(pub Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(UsizeList)
    }
}

/// Every run option. All optional here so that a config file and the
/// command line can be layered.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with the same keys as the flags; flags override its entries
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Zero-based label column for CSV files (default: last)
    #[arg(long)]
    pub label_column: Option<usize>,
    /// CSV file starts with a header row
    #[arg(long)]
    pub header: Option<bool>,
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Feature count for synthetic blobs
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Distance between blob centers
    #[arg(long)]
    pub separation: Option<f64>,
    /// Noise level for synthetic XOR
    #[arg(long)]
    pub noise: Option<f64>,
    /// Standardize features using training-split statistics
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Layer widths d0,d1,...,dL (default: input,16,classes)
    #[arg(long, value_name = "D0,D1,...")]
    pub arch: Option<UsizeList>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationKind>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test accuracy at which training stops
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Where to save trained weights as JSON
    #[arg(long, value_name = "PATH")]
    pub model_out: Option<PathBuf>,
    /// Trained weights to evaluate
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Worker counts for bench-scaling
    #[arg(long, value_name = "N1,N2,...")]
    pub worker_list: Option<UsizeList>,
}

impl RunArgs {

    /// Reads a config file. Relative dataset and model paths resolve against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut args: Self = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut args.dataset, &mut args.model].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(args)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: RunArgs) -> RunArgs {
        macro_rules! pick {
            ($($f:ident),*) => { RunArgs { config: over.config.or(self.config), $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            dataset, format, label_column, header, synthetic, samples, features, classes, separation, noise,
            normalize, test_fraction, arch, activation, gamma, beta, warmup, iters, workers, seed, threshold, out,
            model_out, model, lr, batch_size, epochs, worker_list
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DataSource {
    File { path: PathBuf, format: Format, label_column: Option<usize>, header: bool },
    Synthetic { generator: Synthetic, samples: usize, features: usize, classes: usize, separation: f64, noise: f64 },
}

/// Fully resolved configuration; echoed into the run summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub source: DataSource,
    pub normalize: bool,
    pub test_fraction: f64,
    pub arch: Option<Vec<usize>>,
    pub activation: ActivationKind,
    pub gamma: f64,
    pub beta: f64,
    pub warmup: usize,
    pub iters: usize,
    pub workers: usize,
    pub seed: u64,
    pub threshold: Option<f64>,
    pub out: PathBuf,
    pub model_out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub worker_list: Vec<usize>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn resolve(flags: RunArgs, default_out: &str) -> Result<Self, ConfigError> {
        let args = match &flags.config {
            Some(path) => RunArgs::from_file(path).map_err(ConfigError)?.overlay(flags),
            None => flags,
        };
        let err = |m: String| ConfigError(m);

        let source = match (args.dataset, args.synthetic) {
            (Some(_), Some(_)) => return Err(err("give either --dataset or --synthetic, not both".into())),
            (None, None) => return Err(err("no data: give --dataset <path> or --synthetic blobs|xor".into())),
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(err(format!("dataset {} does not exist", path.display())));
                }
                let format = match args.format {
                    Some(f) => f,
                    None => match path.extension().and_then(|e| e.to_str()) {
                        Some("csv") => Format::Csv,
                        Some("svm" | "libsvm" | "txt") => Format::Libsvm,
                        _ => return Err(err(format!("cannot infer the format of {}; pass --format", path.display()))),
                    },
                };
                DataSource::File { path, format, label_column: args.label_column, header: args.header.unwrap_or(false) }
            }
            (None, Some(generator)) => DataSource::Synthetic {
                generator,
                samples: args.samples.unwrap_or(2000),
                features: args.features.unwrap_or(2),
                classes: args.classes.unwrap_or(2),
                separation: args.separation.unwrap_or(6.0),
                noise: args.noise.unwrap_or(0.25),
            },
        };

        let cfg = RunConfig {
            source,
            normalize: args.normalize.unwrap_or(true),
            test_fraction: args.test_fraction.unwrap_or(0.2),
            arch: args.arch.map(|a| a.0),
            activation: args.activation.unwrap_or(ActivationKind::Relu),
            gamma: args.gamma.unwrap_or(DEFAULT_GAMMA),
            beta: args.beta.unwrap_or(DEFAULT_BETA),
            warmup: args.warmup.unwrap_or(DEFAULT_WARMUP),
            iters: args.iters.unwrap_or(50),
            workers: args.workers.unwrap_or(1),
            seed: args.seed.unwrap_or(0),
            threshold: args.threshold,
            out: args.out.unwrap_or_else(|| PathBuf::from(default_out)),
            model_out: args.model_out,
            model: args.model,
            lr: args.lr.unwrap_or(0.05),
            batch_size: args.batch_size.unwrap_or(32),
            epochs: args.epochs.unwrap_or(20),
            worker_list: args.worker_list.map(|l| l.0).unwrap_or_else(|| vec![1, 2, 4, 8]),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_string()));
        if !(self.test_fraction >= 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must be in [0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("gamma and beta must be positive");
        }
        if self.workers == 0 || self.worker_list.contains(&0) {
            return bad("worker counts must be positive");
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad("threshold must be an accuracy in [0, 1]");
            }
        }
        if let Some(a) = &self.arch {
            if a.len() < 2 || a.contains(&0) {
                return bad("arch needs at least two positive widths");
            }
        }
        Ok(())
    }
}
