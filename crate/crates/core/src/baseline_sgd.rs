//! Mini-batch SGD with backpropagation, as a reference point for the
//! gradient-free trainer.
//!
//! Uses the same architectures, bias-free layers and hinge loss. The batch
//! loss is the per-sample hinge loss summed over output rows and averaged over
//! the batch. Kinks of ReLU, hard sigmoid and hinge get subgradient 0.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{mismatch, Error, Result};
use crate::history::{Flow, History, HistoryRow, Observer, Silent};
use crate::linalg::Matrix;
use crate::loss::{hinge, Label};
use crate::network::{check_data, hit_rate, predict, Architecture, Model, TrainOutcome};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch_size: 64, epochs: 20, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian weights with variance `1 / fan_in`.
pub fn init_weights<T: Scalar>(arch: &Architecture<T>, seed: u64) -> Vec<Matrix<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = arch.dims();
    (1..=arch.layers())
        .map(|l| {
            let sd = 1.0 / (dims[l - 1] as f64).sqrt();
            Matrix::from_fn(dims[l], dims[l - 1], |_, _| T::lit(sd * rng.sample::<f64, _>(StandardNormal)))
        })
        .collect()
}

/// Pre-activations `z_l` and post-activations `a_0 … a_{L−1}` of a forward pass.
struct Forward<T> {
    inputs: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
}

fn forward<T: Scalar>(arch: &Architecture<T>, weights: &[Matrix<T>], x: &Matrix<T>) -> Result<Forward<T>> {
    if weights.len() != arch.layers() {
        return Err(mismatch("sgd weights", arch.layers(), weights.len()));
    }
    let mut inputs = vec![x.clone()];
    let mut pre = Vec::with_capacity(arch.layers());
    for (k, w) in weights.iter().enumerate() {
        let z = w.matmul(inputs.last().expect("input"))?;
        if k + 1 < arch.layers() {
            inputs.push(arch.activation(k + 1).apply(&z));
        }
        pre.push(z);
    }
    Ok(Forward { inputs, pre })
}

fn hinge_slope<T: Scalar>(s: T, y: Label) -> T {
    match y {
        Label::Positive if s < T::one() => -T::one(),
        Label::Negative if s > T::zero() => T::one(),
        _ => T::zero(),
    }
}

/// Mean batch loss and its gradient with respect to every weight matrix.
pub fn loss_and_gradient<T: Scalar>(
    arch: &Architecture<T>,
    weights: &[Matrix<T>],
    x: &Matrix<T>,
    labels: &Matrix<T>,
) -> Result<(T, Vec<Matrix<T>>)> {
    let fwd = forward(arch, weights, x)?;
    let scores = fwd.pre.last().expect("at least one layer");
    if scores.shape() != labels.shape() {
        return Err(mismatch("sgd labels", format!("{:?}", scores.shape()), format!("{:?}", labels.shape())));
    }
    let n = T::lit(x.cols().max(1) as f64);
    let mut loss = T::zero();
    let mut delta = Vec::with_capacity(scores.as_slice().len());
    for (&s, &y) in scores.as_slice().iter().zip(labels.as_slice()) {
        let y = Label::from_value(y)?;
        loss += hinge(s, y);
        delta.push(hinge_slope(s, y) / n);
    }
    let mut delta = Matrix::from_raw(scores.rows(), scores.cols(), delta);

    let layers = arch.layers();
    let mut grads = vec![Matrix::zeros(0, 0); layers];
    for l in (1..=layers).rev() {
        grads[l - 1] = delta.matmul(&fwd.inputs[l - 1].transpose())?;
        if l > 1 {
            let back = weights[l - 1].t_matmul(&delta)?;
            let h = arch.activation(l - 1);
            delta = back.zip_map(&fwd.pre[l - 2], |d, z| d * h.derivative(z))?;
        }
    }
    Ok((loss / n, grads))
}

/// Mean per-sample hinge loss of the network on `x`.
pub fn mean_loss<T: Scalar>(arch: &Architecture<T>, weights: &[Matrix<T>], x: &Matrix<T>, labels: &Matrix<T>) -> Result<T> {
    let fwd = forward(arch, weights, x)?;
    let mut loss = T::zero();
    for (&s, &y) in fwd.pre.last().expect("layer").as_slice().iter().zip(labels.as_slice()) {
        loss += hinge(s, Label::from_value(y)?);
    }
    Ok(loss / T::lit(x.cols().max(1) as f64))
}

fn select_columns<T: Scalar>(m: &Matrix<T>, idx: &[usize]) -> Matrix<T> {
    Matrix::from_fn(m.rows(), idx.len(), |i, j| m.get(i, idx[j]))
}

pub fn train_sgd<T: Scalar>(data: &Dataset<T>, arch: &Architecture<T>, cfg: &SgdConfig) -> Result<TrainOutcome<T>> {
    train_sgd_with(data, arch, cfg, &mut Silent)
}

/// One history row per epoch; `objective` is the mean training hinge loss
/// after the epoch. Samples are reshuffled every epoch.
pub fn train_sgd_with<T: Scalar>(
    data: &Dataset<T>,
    arch: &Architecture<T>,
    cfg: &SgdConfig,
    observer: &mut impl Observer<T>,
) -> Result<TrainOutcome<T>> {
    check_data(arch, data)?;
    cfg.validate()?;
    let mut weights = init_weights(arch, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let lr = T::lit(cfg.learning_rate);
    let truth = data.class_indices();
    let mut order: Vec<usize> = (0..data.n_samples()).collect();
    let mut history = History::default();
    let mut elapsed = 0.0;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = select_columns(data.features(), batch);
            let y = select_columns(data.labels(), batch);
            let (loss, grads) = loss_and_gradient(arch, &weights, &x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for (w, g) in weights.iter_mut().zip(&grads) {
                *w = w.zip_map(g, |a, b| a - lr * b)?;
            }
        }
        elapsed += started.elapsed().as_secs_f64();

        let loss = mean_loss(arch, &weights, data.features(), data.labels())?;
        if !loss.is_finite() || weights.iter().any(|w| w.as_slice().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch });
        }
        let pred = predict(arch, &weights, data.features())?;
        let mut row = HistoryRow {
            iteration: epoch,
            wall_seconds: elapsed,
            objective: loss.as_f64(),
            train_accuracy: hit_rate(&pred, &truth),
            test_accuracy: None,
        };
        let flow = observer.observe(&mut row, arch, &weights);
        history.rows.push(row);
        if flow == Flow::Stop {
            break;
        }
    }
    Ok(TrainOutcome { model: Model { arch: arch.clone(), weights }, history })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Entries whose finite-difference stencil crosses a kink.
    pub excluded: usize,
}

pub const CHECK_STEP: f64 = 1e-5;
/// Denominator floor: gradients smaller than this are compared absolutely.
pub const CHECK_FLOOR: f64 = 1e-2;

/// Piece index of every pre-activation and of every hinge term.
fn kink_pattern(arch: &Architecture<f64>, weights: &[Matrix<f64>], x: &Matrix<f64>, labels: &Matrix<f64>) -> Result<Vec<usize>> {
    let fwd = forward(arch, weights, x)?;
    let layers = arch.layers();
    let mut out = Vec::new();
    for l in 1..layers {
        let h = arch.activation(l);
        out.extend(fwd.pre[l - 1].as_slice().iter().map(|&z| h.piece(z)));
    }
    for (&s, &y) in fwd.pre[layers - 1].as_slice().iter().zip(labels.as_slice()) {
        out.push(match Label::from_value(y)? {
            Label::Positive => usize::from(s < 1.0),
            Label::Negative => usize::from(s > 0.0),
        });
    }
    Ok(out)
}

/// Compares backprop gradients with central differences for every weight.
/// Entries whose stencil changes any activation piece or hinge branch are
/// skipped, since the loss is not differentiable across them.
pub fn gradient_check(
    arch: &Architecture<f64>,
    weights: &[Matrix<f64>],
    x: &Matrix<f64>,
    labels: &Matrix<f64>,
) -> Result<GradientCheck> {
    let (_, grads) = loss_and_gradient(arch, weights, x, labels)?;
    let base = kink_pattern(arch, weights, x, labels)?;
    let mut probe = weights.to_vec();
    let mut report = GradientCheck { max_relative_error: 0.0, checked: 0, excluded: 0 };
    for l in 0..weights.len() {
        for k in 0..weights[l].as_slice().len() {
            let orig = weights[l].as_slice()[k];
            probe[l].as_mut_slice()[k] = orig + CHECK_STEP;
            let plus = mean_loss(arch, &probe, x, labels)?;
            let plus_pattern = kink_pattern(arch, &probe, x, labels)?;
            probe[l].as_mut_slice()[k] = orig - CHECK_STEP;
            let minus = mean_loss(arch, &probe, x, labels)?;
            let minus_pattern = kink_pattern(arch, &probe, x, labels)?;
            probe[l].as_mut_slice()[k] = orig;
            if plus_pattern != base || minus_pattern != base {
                report.excluded += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * CHECK_STEP);
            let analytic = grads[l].as_slice()[k];
            let denom = analytic.abs().max(numeric.abs()).max(CHECK_FLOOR);
            report.max_relative_error = report.max_relative_error.max((analytic - numeric).abs() / denom);
            report.checked += 1;
        }
    }
    Ok(report)
}
