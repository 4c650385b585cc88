//! Single-node alternating minimization.
//!
//! The state splits every layer into weights `W_l`, pre-activations `z_l` and
//! activations `a_l`, and minimizes
//!
//! ```text
//! ℓ(z_L, y) + ⟨z_L, λ⟩ + β_L‖z_L − W_L a_{L−1}‖²
//!     + Σ_{l<L} γ_l‖a_l − h_l(z_l)‖² + β_l‖z_l − W_l a_{l−1}‖²
//! ```
//!
//! one block at a time. Each block update is an exact global minimization:
//! weights and activations are least-squares solves, pre-activations decouple
//! into scalar problems solved in closed form. Only the final-layer multiplier
//! `λ` carries dual information.
//!
//! Layers are indexed from 1 to `L` in this module's API, matching the usual
//! `W_1 … W_L` notation; `a_0` is the training input and is never modified.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::data::Dataset;
use crate::error::{mismatch, Error, Result};
use crate::history::{Flow, History, HistoryRow, Observer, Silent};
use crate::linalg::{cross_gram, factor_gram, gram, solve_left, solve_right, spd_factor, Matrix};
use crate::loss::{final_objective, hinge, solve_zl_hinge, Label};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture<T> {
    dims: Vec<usize>,
    activations: Vec<Activation<T>>,
}

impl<T: Scalar> Architecture<T> {
    /// `dims = [d₀, …, d_L]`; one activation per hidden layer. The last layer is linear.
    pub fn new(dims: Vec<usize>, activations: Vec<Activation<T>>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("architecture needs at least two dims".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("layer dims must be ≥ 1".into()));
        }
        if activations.len() != dims.len() - 2 {
            return Err(mismatch("Architecture::new activations", dims.len() - 2, activations.len()));
        }
        Ok(Self { dims, activations })
    }

    /// Same activation on every hidden layer.
    pub fn uniform(dims: Vec<usize>, activation: Activation<T>) -> Result<Self> {
        let hidden = dims.len().saturating_sub(2);
        Self::new(dims, vec![activation; hidden])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of weight matrices `L`.
    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Activation of hidden layer `l` (1-based, `l < L`).
    pub fn activation(&self, l: usize) -> &Activation<T> {
        &self.activations[l - 1]
    }
}

/// How the multiplier moves after each pass: `λ ← λ + step·(z_L − W_L a_{L−1})`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MultiplierStep {
    /// `step = 2β_L`, the gradient of the `β_L‖·‖²` penalty. Keeps `λ` in
    /// `−∂ℓ(z_L)` after every update.
    #[default]
    PenaltyGradient,
    /// `step = β_L`.
    Beta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams<T> {
    /// `β_1 … β_L`.
    pub beta: Vec<T>,
    /// `γ_1 … γ_{L−1}`.
    pub gamma: Vec<T>,
    pub warmup_iters: usize,
    pub train_iters: usize,
    /// Relative ridge: Gram matrices are regularized by `ridge·tr(G)/n`.
    pub ridge: T,
    pub seed: u64,
    pub multiplier_step: MultiplierStep,
}

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 10.0;
pub const DEFAULT_WARMUP: usize = 10;
pub const DEFAULT_RIDGE: f64 = 1e-8;

impl<T: Scalar> Hyperparams<T> {
    /// Scalar `β`, `γ` broadcast to every layer.
    pub fn uniform(arch: &Architecture<T>, beta: T, gamma: T) -> Self {
        let l = arch.layers();
        Self {
            beta: vec![beta; l],
            gamma: vec![gamma; l - 1],
            warmup_iters: DEFAULT_WARMUP,
            train_iters: 50,
            ridge: T::lit(DEFAULT_RIDGE),
            seed: 0,
            multiplier_step: MultiplierStep::default(),
        }
    }

    /// `γ = 10`, `β = 1`, 10 warm-start iterations.
    pub fn defaults(arch: &Architecture<T>) -> Self {
        Self::uniform(arch, T::lit(DEFAULT_BETA), T::lit(DEFAULT_GAMMA))
    }

    pub fn with_iters(mut self, warmup: usize, train: usize) -> Self {
        self.warmup_iters = warmup;
        self.train_iters = train;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, arch: &Architecture<T>) -> Result<()> {
        if self.beta.len() != arch.layers() {
            return Err(mismatch("Hyperparams beta", arch.layers(), self.beta.len()));
        }
        if self.gamma.len() != arch.layers() - 1 {
            return Err(mismatch("Hyperparams gamma", arch.layers() - 1, self.gamma.len()));
        }
        if let Some(v) = self.beta.iter().chain(&self.gamma).find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta and gamma must be positive, got {v}")));
        }
        if !(self.ridge >= T::zero()) || !self.ridge.is_finite() {
            return Err(Error::InvalidArgument(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        Ok(())
    }

    pub fn total_iters(&self) -> usize {
        self.warmup_iters + self.train_iters
    }

    fn beta(&self, l: usize) -> T {
        self.beta[l - 1]
    }

    fn gamma(&self, l: usize) -> T {
        self.gamma[l - 1]
    }

    fn multiplier_step(&self, l: usize) -> T {
        match self.multiplier_step {
            MultiplierStep::PenaltyGradient => self.beta(l) + self.beta(l),
            MultiplierStep::Beta => self.beta(l),
        }
    }
}

/// All variables of the augmented objective for one block of sample columns.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState<T> {
    weights: Vec<Matrix<T>>,
    /// `a_0 … a_{L−1}`.
    activations: Vec<Matrix<T>>,
    /// `z_1 … z_L`.
    outputs: Vec<Matrix<T>>,
    lambda: Matrix<T>,
    labels: Matrix<T>,
    input_gram: Option<Matrix<T>>,
}

impl<T: Scalar> NetworkState<T> {
    /// Builds a state from explicit parts. `weights` may be empty (not yet fitted).
    pub fn from_parts(
        arch: &Architecture<T>,
        input: Matrix<T>,
        labels: Matrix<T>,
        hidden: Vec<Matrix<T>>,
        outputs: Vec<Matrix<T>>,
        weights: Vec<Matrix<T>>,
        lambda: Matrix<T>,
    ) -> Result<Self> {
        let l = arch.layers();
        let n = input.cols();
        let dims = arch.dims();
        let expect = |what: &'static str, m: &Matrix<T>, rows: usize, cols: usize| {
            if m.shape() != (rows, cols) {
                Err(mismatch(what, format!("{:?}", (rows, cols)), format!("{:?}", m.shape())))
            } else {
                Ok(())
            }
        };
        expect("input", &input, dims[0], n)?;
        expect("labels", &labels, dims[l], n)?;
        expect("lambda", &lambda, dims[l], n)?;
        if hidden.len() != l - 1 || outputs.len() != l {
            return Err(mismatch("NetworkState layers", l, outputs.len()));
        }
        for (k, a) in hidden.iter().enumerate() {
            expect("activation", a, dims[k + 1], n)?;
        }
        for (k, z) in outputs.iter().enumerate() {
            expect("output", z, dims[k + 1], n)?;
        }
        if !weights.is_empty() {
            if weights.len() != l {
                return Err(mismatch("weights", l, weights.len()));
            }
            for (k, w) in weights.iter().enumerate() {
                expect("weight", w, dims[k + 1], dims[k])?;
            }
        }
        for &y in labels.as_slice() {
            Label::from_value(y)?;
        }
        let mut activations = Vec::with_capacity(l);
        activations.push(input);
        activations.extend(hidden);
        Ok(Self { weights, activations, outputs, lambda, labels, input_gram: None })
    }

    pub fn n_samples(&self) -> usize {
        self.activations[0].cols()
    }

    pub fn layers(&self) -> usize {
        self.outputs.len()
    }

    pub fn has_weights(&self) -> bool {
        !self.weights.is_empty()
    }

    pub fn weights(&self) -> &[Matrix<T>] {
        &self.weights
    }

    pub fn weight(&self, l: usize) -> &Matrix<T> {
        &self.weights[l - 1]
    }

    /// `a_l` for `0 ≤ l < L`.
    pub fn activation(&self, l: usize) -> &Matrix<T> {
        &self.activations[l]
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.activations[0]
    }

    /// `z_l` for `1 ≤ l ≤ L`.
    pub fn output(&self, l: usize) -> &Matrix<T> {
        &self.outputs[l - 1]
    }

    pub fn lambda(&self) -> &Matrix<T> {
        &self.lambda
    }

    pub fn labels(&self) -> &Matrix<T> {
        &self.labels
    }

    pub fn set_weight(&mut self, l: usize, w: Matrix<T>) -> Result<()> {
        let layers = self.layers();
        if self.weights.is_empty() {
            self.weights = (1..=layers)
                .map(|k| Matrix::zeros(self.outputs[k - 1].rows(), self.activations[k - 1].rows()))
                .collect();
        }
        let slot = &mut self.weights[l - 1];
        if slot.shape() != w.shape() {
            return Err(mismatch("set_weight", format!("{:?}", slot.shape()), format!("{:?}", w.shape())));
        }
        *slot = w;
        Ok(())
    }

    /// Replaces a hidden activation (`1 ≤ l < L`); `a_0` cannot be replaced.
    pub fn set_activation(&mut self, l: usize, a: Matrix<T>) -> Result<()> {
        if l == 0 || l >= self.layers() {
            return Err(Error::InvalidArgument(format!("activation index {l} is not a hidden layer")));
        }
        replace(&mut self.activations[l], a, "set_activation")
    }

    pub fn set_output(&mut self, l: usize, z: Matrix<T>) -> Result<()> {
        replace(&mut self.outputs[l - 1], z, "set_output")
    }

    pub fn set_lambda(&mut self, lambda: Matrix<T>) -> Result<()> {
        replace(&mut self.lambda, lambda, "set_lambda")
    }

    fn input_gram(&mut self) -> Result<&Matrix<T>> {
        if self.input_gram.is_none() {
            self.input_gram = Some(gram(&self.activations[0])?);
        }
        Ok(self.input_gram.as_ref().expect("filled above"))
    }

    /// `W_l a_{l−1}`.
    pub fn linear_prediction(&self, l: usize) -> Result<Matrix<T>> {
        self.weight(l).matmul(&self.activations[l - 1])
    }
}

fn replace<T: Scalar>(slot: &mut Matrix<T>, m: Matrix<T>, op: &'static str) -> Result<()> {
    if slot.shape() != m.shape() {
        return Err(mismatch(op, format!("{:?}", slot.shape()), format!("{:?}", m.shape())));
    }
    *slot = m;
    Ok(())
}

/// Draws `a_1 … a_{L−1}` then `z_1 … z_L`, each as a full row-major block of
/// unit Gaussians, in that order.
pub(crate) fn draw_hidden<T: Scalar>(
    arch: &Architecture<T>,
    n: usize,
    seed: u64,
) -> (Vec<Matrix<T>>, Vec<Matrix<T>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        Matrix::from_fn(rows, n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
    };
    let dims = arch.dims();
    let hidden: Vec<_> = (1..arch.layers()).map(|l| draw(dims[l])).collect();
    let outputs: Vec<_> = (1..=arch.layers()).map(|l| draw(dims[l])).collect();
    (hidden, outputs)
}

pub(crate) fn check_data<T: Scalar>(arch: &Architecture<T>, data: &Dataset<T>) -> Result<()> {
    if data.n_features() != arch.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} features, architecture expects {}",
            data.n_features(),
            arch.input_dim()
        )));
    }
    if data.n_classes() != arch.output_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, architecture has {} outputs",
            data.n_classes(),
            arch.output_dim()
        )));
    }
    Ok(())
}

/// Gaussian `a_l`, `z_l`, zero `λ`, and weights fitted by least squares to
/// the random draws. Weights are a function of the other variables, so no
/// separate weight initialization is involved.
pub fn init_state<T: Scalar>(
    arch: &Architecture<T>,
    data: &Dataset<T>,
    hp: &Hyperparams<T>,
) -> Result<NetworkState<T>> {
    let mut state = init_unfitted(arch, data, hp)?;
    for l in 1..=arch.layers() {
        weight_update(&mut state, hp, l)?;
    }
    Ok(state)
}

pub(crate) fn init_unfitted<T: Scalar>(
    arch: &Architecture<T>,
    data: &Dataset<T>,
    hp: &Hyperparams<T>,
) -> Result<NetworkState<T>> {
    check_data(arch, data)?;
    hp.validate(arch)?;
    let n = data.n_samples();
    let (hidden, outputs) = draw_hidden(arch, n, hp.seed);
    NetworkState::from_parts(
        arch,
        data.features().clone(),
        data.labels().clone(),
        hidden,
        outputs,
        Vec::new(),
        Matrix::zeros(arch.output_dim(), n),
    )
}

/// The two transpose-reduced products for layer `l`: `z_l a_{l−1}ᵀ` and
/// `a_{l−1} a_{l−1}ᵀ`. Their shapes depend only on the layer widths.
pub fn gram_pair<T: Scalar>(state: &mut NetworkState<T>, l: usize) -> Result<(Matrix<T>, Matrix<T>)> {
    check_layer(state, l, 1, state.layers())?;
    let c = cross_gram(&state.outputs[l - 1], &state.activations[l - 1])?;
    let g = if l == 1 {
        state.input_gram()?.clone()
    } else {
        gram(&state.activations[l - 1])?
    };
    Ok((c, g))
}

/// `W = C (G + εI)⁻¹` with the ridge policy of [`factor_gram`].
pub fn solve_weights<T: Scalar>(c: &Matrix<T>, g: &Matrix<T>, ridge: T) -> Result<Matrix<T>> {
    let (f, _) = factor_gram(g, ridge)?;
    solve_right(c, &f)
}

/// `W_l ← z_l a_{l−1}†` (ridge-regularized normal equations).
pub fn weight_update<T: Scalar>(state: &mut NetworkState<T>, hp: &Hyperparams<T>, l: usize) -> Result<()> {
    let (c, g) = gram_pair(state, l)?;
    let w = solve_weights(&c, &g, hp.ridge)?;
    state.set_weight(l, w)
}

/// `a_l ← (β_{l+1} W_{l+1}ᵀW_{l+1} + γ_l I)⁻¹ (β_{l+1} W_{l+1}ᵀ z_{l+1} + γ_l h_l(z_l))`.
pub fn activation_update<T: Scalar>(
    state: &mut NetworkState<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    l: usize,
) -> Result<()> {
    check_layer(state, l, 1, state.layers() - 1)?;
    let beta = hp.beta(l + 1);
    let gamma = hp.gamma(l);
    let w_next = state.weight(l + 1);
    let lhs = w_next.t_matmul(w_next)?.scale(beta);
    let factor = spd_factor(&lhs, gamma)?;
    let mut rhs = w_next.t_matmul(&state.outputs[l])?.scale(beta);
    let target = arch.activation(l).apply(&state.outputs[l - 1]);
    rhs.add_assign(&target.scale(gamma))?;
    let a = solve_left(&factor, &rhs)?;
    state.activations[l] = a;
    Ok(())
}

/// Entrywise `z_l ← argmin γ_l(a_l − h_l(z))² + β_l(z − W_l a_{l−1})²`.
pub fn output_update<T: Scalar>(
    state: &mut NetworkState<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    l: usize,
) -> Result<()> {
    check_layer(state, l, 1, state.layers() - 1)?;
    let w = state.linear_prediction(l)?;
    let z = arch
        .activation(l)
        .solve_output_matrix(&state.activations[l], &w, hp.gamma(l), hp.beta(l))?;
    state.outputs[l - 1] = z;
    Ok(())
}

/// Entrywise `z_L ← argmin ℓ(z, y) + λz + β_L(z − W_L a_{L−1})²`.
pub fn output_update_final<T: Scalar>(state: &mut NetworkState<T>, hp: &Hyperparams<T>) -> Result<()> {
    let l = state.layers();
    let w = state.linear_prediction(l)?;
    let beta = hp.beta(l);
    let mut z = Vec::with_capacity(w.as_slice().len());
    for ((&wi, &yi), &li) in w.as_slice().iter().zip(state.labels.as_slice()).zip(state.lambda.as_slice()) {
        z.push(solve_zl_hinge(wi, Label::from_value(yi)?, li, beta)?);
    }
    state.outputs[l - 1] = Matrix::from_raw(w.rows(), w.cols(), z);
    Ok(())
}

/// `λ ← λ + step·(z_L − W_L a_{L−1})`.
pub fn lagrange_update<T: Scalar>(state: &mut NetworkState<T>, hp: &Hyperparams<T>) -> Result<()> {
    let l = state.layers();
    let residual = state.outputs[l - 1].sub(&state.linear_prediction(l)?)?;
    let step = hp.multiplier_step(l);
    state.lambda.add_assign(&residual.scale(step))
}

/// One pass over all blocks in the fixed order: for each hidden layer the
/// weights, then activations, then outputs; then the last layer's weights and
/// outputs; then the multiplier if `update_lambda`.
pub fn admm_iteration<T: Scalar>(
    state: &mut NetworkState<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    update_lambda: bool,
) -> Result<()> {
    let layers = arch.layers();
    for l in 1..layers {
        weight_update(state, hp, l)?;
        activation_update(state, arch, hp, l)?;
        output_update(state, arch, hp, l)?;
    }
    weight_update(state, hp, layers)?;
    output_update_final(state, hp)?;
    if update_lambda {
        lagrange_update(state, hp)?;
    }
    Ok(())
}

/// Augmented objective with sums over entries; with `λ = 0` this is the pure
/// penalty objective.
pub fn objective<T: Scalar>(state: &NetworkState<T>, arch: &Architecture<T>, hp: &Hyperparams<T>) -> Result<T> {
    let layers = arch.layers();
    let mut total = T::zero();
    for l in 1..layers {
        let w = state.linear_prediction(l)?;
        let h = arch.activation(l);
        let (beta, gamma) = (hp.beta(l), hp.gamma(l));
        let z = &state.outputs[l - 1];
        let a = &state.activations[l];
        for ((&zi, &wi), &ai) in z.as_slice().iter().zip(w.as_slice()).zip(a.as_slice()) {
            total += h.objective(ai, wi, gamma, beta, zi);
        }
    }
    let w = state.linear_prediction(layers)?;
    let beta = hp.beta(layers);
    let z = &state.outputs[layers - 1];
    for (((&zi, &wi), &yi), &li) in z
        .as_slice()
        .iter()
        .zip(w.as_slice())
        .zip(state.labels.as_slice())
        .zip(state.lambda.as_slice())
    {
        total += final_objective(zi, wi, Label::from_value(yi)?, li, beta);
    }
    Ok(total)
}

/// Summed hinge loss of the forward pass on `state`'s inputs.
pub fn forward_loss<T: Scalar>(state: &NetworkState<T>, arch: &Architecture<T>) -> Result<T> {
    let scores = scores(arch, state.weights(), state.input())?;
    let mut sum = T::zero();
    for (&z, &y) in scores.as_slice().iter().zip(state.labels.as_slice()) {
        sum += hinge(z, Label::from_value(y)?);
    }
    Ok(sum)
}

fn check_layer<T: Scalar>(state: &NetworkState<T>, l: usize, lo: usize, hi: usize) -> Result<()> {
    if l < lo || l > hi {
        return Err(Error::InvalidArgument(format!("layer {l} outside {lo}..={hi}")));
    }
    if lo == 1 && hi < state.layers() && state.weights.is_empty() {
        return Err(Error::InvalidArgument("weights have not been fitted yet".into()));
    }
    Ok(())
}

/// Forward pass: `h_l(W_l a)` for hidden layers, then `W_L a`.
pub fn scores<T: Scalar>(arch: &Architecture<T>, weights: &[Matrix<T>], x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.rows() != arch.input_dim() {
        return Err(mismatch("predict input", arch.input_dim(), x.rows()));
    }
    if weights.len() != arch.layers() {
        return Err(mismatch("predict weights", arch.layers(), weights.len()));
    }
    let mut a = x.clone();
    for (k, w) in weights.iter().enumerate() {
        let z = w.matmul(&a)?;
        a = if k + 1 < arch.layers() { arch.activation(k + 1).apply(&z) } else { z };
    }
    Ok(a)
}

/// Row-argmax of the scores per sample; the lowest row wins ties.
pub fn predict<T: Scalar>(arch: &Architecture<T>, weights: &[Matrix<T>], x: &Matrix<T>) -> Result<Vec<usize>> {
    Ok(argmax_columns(&scores(arch, weights, x)?))
}

pub(crate) fn argmax_columns<T: Scalar>(s: &Matrix<T>) -> Vec<usize> {
    (0..s.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..s.rows() {
                if s.get(i, j) > s.get(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Fraction of samples whose predicted class matches the hot label.
pub fn accuracy<T: Scalar>(arch: &Architecture<T>, weights: &[Matrix<T>], data: &Dataset<T>) -> Result<f64> {
    let pred = predict(arch, weights, data.features())?;
    Ok(hit_rate(&pred, &data.class_indices()))
}

pub(crate) fn hit_rate(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Trained weights together with the architecture that interprets them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Model<T> {
    pub arch: Architecture<T>,
    pub weights: Vec<Matrix<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        predict(&self.arch, &self.weights, x)
    }

    pub fn accuracy(&self, data: &Dataset<T>) -> Result<f64> {
        accuracy(&self.arch, &self.weights, data)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: History,
}

pub fn train<T: Scalar>(data: &Dataset<T>, arch: &Architecture<T>, hp: &Hyperparams<T>) -> Result<TrainOutcome<T>> {
    train_with(data, arch, hp, &mut Silent)
}

/// Runs `warmup_iters` λ-free iterations followed by `train_iters` full ones,
/// recording one history row per iteration. Initialization and metric
/// evaluation are excluded from `wall_seconds`.
pub fn train_with<T: Scalar>(
    data: &Dataset<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    observer: &mut impl Observer<T>,
) -> Result<TrainOutcome<T>> {
    let mut state = init_state(arch, data, hp)?;
    let truth = data.class_indices();
    let mut history = History::default();
    let mut elapsed = 0.0;
    for k in 1..=hp.total_iters() {
        let started = Instant::now();
        admm_iteration(&mut state, arch, hp, k > hp.warmup_iters)?;
        elapsed += started.elapsed().as_secs_f64();

        let pred = predict(arch, state.weights(), data.features())?;
        let mut row = HistoryRow {
            iteration: k,
            wall_seconds: elapsed,
            objective: objective(&state, arch, hp)?.as_f64(),
            train_accuracy: hit_rate(&pred, &truth),
            test_accuracy: None,
        };
        let flow = observer.observe(&mut row, arch, state.weights());
        history.rows.push(row);
        if flow == Flow::Stop {
            break;
        }
    }
    Ok(TrainOutcome { model: Model { arch: arch.clone(), weights: state.weights }, history })
}
