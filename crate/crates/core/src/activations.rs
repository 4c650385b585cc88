//! Activation functions and the global one-dimensional solvers for the output
//! update `min_z γ(a − h(z))² + β(z − w)²`.
//!
//! For piecewise-linear `h` the objective is a quadratic on every linear piece,
//! so the global minimizer is the best of the per-piece clamped minimizers.
//! [`solve_z_grid`] evaluates the objective on a uniform grid and works for any
//! `h`; the closed-form solvers are tested against it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Activation sampled on a uniform grid, linearly interpolated between knots
/// and held constant outside `[lo, lo + step·(len−1)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tabulated<T> {
    lo: T,
    step: T,
    values: Vec<T>,
}

impl<T: Scalar> Tabulated<T> {
    pub fn new(lo: T, step: T, values: Vec<T>) -> Result<Self> {
        if !(step > T::zero()) || !lo.is_finite() || !step.is_finite() {
            return Err(Error::InvalidArgument("table needs finite lo and positive step".into()));
        }
        if values.len() < 2 {
            return Err(Error::InvalidArgument("table needs at least two samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("table values must be finite".into()));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!("table decreases between knots {k} and {}", k + 1)));
        }
        Ok(Self { lo, step, values })
    }

    /// Samples `f` at `n` knots spanning `[lo, hi]`.
    pub fn sample(lo: T, hi: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidArgument("sampling needs n ≥ 2 and hi > lo".into()));
        }
        let step = (hi - lo) / T::lit((n - 1) as f64);
        let values = (0..n).map(|i| f(lo + step * T::lit(i as f64))).collect();
        Self::new(lo, step, values)
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.knot(self.values.len() - 1)
    }

    fn knot(&self, k: usize) -> T {
        self.lo + self.step * T::lit(k as f64)
    }

    pub fn eval(&self, x: T) -> T {
        let last = self.values.len() - 1;
        if !(x > self.lo) {
            return self.values[0];
        }
        if x >= self.hi() {
            return self.values[last];
        }
        let pos = (x - self.lo) / self.step;
        let k = pos.floor().to_usize().unwrap_or(0).min(last - 1);
        let t = (x - self.knot(k)) / self.step;
        self.values[k] + (self.values[k + 1] - self.values[k]) * t
    }

    /// 0 below the table, `k + 1` inside segment `k`, `len` at or above the end.
    fn segment(&self, x: T) -> usize {
        let last = self.values.len() - 1;
        if !(x > self.lo) {
            return 0;
        }
        if x >= self.hi() {
            return last + 1;
        }
        let k = ((x - self.lo) / self.step).floor().to_usize().unwrap_or(0).min(last - 1);
        k + 1
    }

    fn slope(&self, x: T) -> T {
        match self.segment(x) {
            0 => T::zero(),
            s if s == self.values.len() => T::zero(),
            s => (self.values[s] - self.values[s - 1]) / self.step,
        }
    }

    fn solve(&self, a: T, w: T, gamma: T, beta: T) -> T {
        let obj = |z: T| objective_with(|x| self.eval(x), a, w, gamma, beta, z);
        let lo = self.lo;
        let hi = self.hi();
        let mut best = w.min(lo);
        let mut best_obj = obj(best);
        let mut consider = |z: T| {
            let v = obj(z);
            if v < best_obj {
                best = z;
                best_obj = v;
            }
        };
        for k in 0..self.values.len() - 1 {
            let x0 = self.knot(k);
            let x1 = self.knot(k + 1);
            let slope = (self.values[k + 1] - self.values[k]) / self.step;
            let offset = self.values[k] - slope * x0;
            // γ(a − offset − slope·z)² + β(z − w)² is quadratic in z
            let z = (gamma * slope * (a - offset) + beta * w) / (gamma * slope * slope + beta);
            consider(z.max(x0).min(x1));
        }
        consider(w.max(hi));
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation<T> {
    Relu,
    HardSigmoid,
    Tabulated(Tabulated<T>),
}

impl<T: Scalar> Activation<T> {
    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::HardSigmoid => {
                if x >= T::one() {
                    T::one()
                } else if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tabulated(t) => t.eval(x),
        }
    }

    /// Derivative where it exists; 0 at kinks.
    pub fn derivative(&self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::HardSigmoid => {
                if x > T::zero() && x < T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tabulated(t) => t.slope(x),
        }
    }

    /// Index of the linear piece containing `x`. Two points with the same
    /// piece see the same derivative.
    pub(crate) fn piece(&self, x: T) -> usize {
        match self {
            Activation::Relu => usize::from(x > T::zero()),
            Activation::HardSigmoid => {
                if x >= T::one() {
                    2
                } else {
                    usize::from(x > T::zero())
                }
            }
            Activation::Tabulated(t) => t.segment(x),
        }
    }

    pub fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        x.map(|v| self.eval(v))
    }

    /// Global minimizer of the output-update objective for one entry.
    pub fn solve_output(&self, a: T, w: T, gamma: T, beta: T) -> Result<T> {
        match self {
            Activation::Relu => solve_z_relu(a, w, gamma, beta),
            Activation::HardSigmoid => solve_z_hardsig(a, w, gamma, beta),
            Activation::Tabulated(t) => {
                check_inputs(a, w, gamma, beta)?;
                Ok(t.solve(a, w, gamma, beta))
            }
        }
    }

    /// Entrywise output update: `a` holds activation targets, `w` the linear
    /// predictions `W a_prev`.
    pub fn solve_output_matrix(
        &self,
        a: &Matrix<T>,
        w: &Matrix<T>,
        gamma: T,
        beta: T,
    ) -> Result<Matrix<T>> {
        if a.shape() != w.shape() {
            return Err(crate::error::mismatch(
                "solve_output_matrix",
                format!("{:?}", a.shape()),
                format!("{:?}", w.shape()),
            ));
        }
        let mut out = Vec::with_capacity(a.as_slice().len());
        for (&ai, &wi) in a.as_slice().iter().zip(w.as_slice()) {
            out.push(self.solve_output(ai, wi, gamma, beta)?);
        }
        Ok(Matrix::from_raw(a.rows(), a.cols(), out))
    }

    /// `γ(a − h(z))² + β(z − w)²`.
    pub fn objective(&self, a: T, w: T, gamma: T, beta: T, z: T) -> T {
        objective_with(|x| self.eval(x), a, w, gamma, beta, z)
    }
}

#[inline]
fn objective_with<T: Scalar>(h: impl Fn(T) -> T, a: T, w: T, gamma: T, beta: T, z: T) -> T {
    let fit = a - h(z);
    let pen = z - w;
    gamma * fit * fit + beta * pen * pen
}

fn check_inputs<T: Scalar>(a: T, w: T, gamma: T, beta: T) -> Result<()> {
    if !a.is_finite() || !w.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite input a={a}, w={w}")));
    }
    if !(gamma > T::zero()) || !(beta > T::zero()) || !gamma.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gamma and beta must be positive, got gamma={gamma}, beta={beta}"
        )));
    }
    Ok(())
}

/// Closed-form output update for ReLU. Ties go to the nonnegative branch.
pub fn solve_z_relu<T: Scalar>(a: T, w: T, gamma: T, beta: T) -> Result<T> {
    check_inputs(a, w, gamma, beta)?;
    let h = Activation::<T>::Relu;
    let pos = ((gamma * a + beta * w) / (gamma + beta)).max(T::zero());
    let neg = w.min(T::zero());
    let pos_obj = h.objective(a, w, gamma, beta, pos);
    let neg_obj = h.objective(a, w, gamma, beta, neg);
    Ok(if pos_obj <= neg_obj { pos } else { neg })
}

/// Closed-form output update for the hard sigmoid. Ties go to the middle
/// branch, then to the lower one.
pub fn solve_z_hardsig<T: Scalar>(a: T, w: T, gamma: T, beta: T) -> Result<T> {
    check_inputs(a, w, gamma, beta)?;
    let h = Activation::<T>::HardSigmoid;
    let mid = ((gamma * a + beta * w) / (gamma + beta)).max(T::zero()).min(T::one());
    let low = w.min(T::zero());
    let high = w.max(T::one());
    let mid_obj = h.objective(a, w, gamma, beta, mid);
    let low_obj = h.objective(a, w, gamma, beta, low);
    let high_obj = h.objective(a, w, gamma, beta, high);
    Ok(if mid_obj <= low_obj && mid_obj <= high_obj {
        mid
    } else if low_obj <= high_obj {
        low
    } else {
        high
    })
}

/// Grid search over `lo, lo + step, …, ≤ hi`. The lowest-index point wins ties.
#[allow(clippy::too_many_arguments)]
pub fn solve_z_grid<T: Scalar>(
    h: &Activation<T>,
    a: T,
    w: T,
    gamma: T,
    beta: T,
    lo: T,
    hi: T,
    step: T,
) -> Result<T> {
    check_inputs(a, w, gamma, beta)?;
    let points = grid_len(lo, hi, step)?;
    let mut best = lo;
    let mut best_obj = T::infinity();
    for i in 0..points {
        let z = lo + step * T::lit(i as f64);
        let v = h.objective(a, w, gamma, beta, z);
        if v < best_obj {
            best = z;
            best_obj = v;
        }
    }
    Ok(best)
}

pub(crate) fn grid_len<T: Scalar>(lo: T, hi: T, step: T) -> Result<usize> {
    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) || !(step > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "empty grid: lo={lo}, hi={hi}, step={step}"
        )));
    }
    let span = ((hi - lo) / step).as_f64();
    Ok((span + 1e-9).floor() as usize + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    // Independent brute force on [-5, 5] with step 1e-4.
    fn brute(h: impl Fn(f64) -> f64, a: f64, w: f64, g: f64, b: f64) -> (f64, f64) {
        let mut best = (f64::NAN, f64::INFINITY);
        for i in 0..=100_000 {
            let z = -5.0 + 1e-4 * i as f64;
            let v = g * (a - h(z)).powi(2) + b * (z - w).powi(2);
            if v < best.1 {
                best = (z, v);
            }
        }
        best
    }

    fn relu(x: f64) -> f64 {
        x.max(0.0)
    }

    fn hsig(x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    #[test]
    fn apply_examples() {
        let x = Matrix::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(Activation::Relu.apply(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let x = Matrix::from_rows(&[vec![-0.5, 0.5, 1.5]]).unwrap();
        assert_eq!(Activation::HardSigmoid.apply(&x).as_slice(), &[0.0, 0.5, 1.0]);
        let zero = Matrix::<f64>::zeros(2, 3);
        assert_eq!(Activation::Relu.apply(&zero), zero);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(solve_z_relu(1.0, 1.0, 10.0, 1.0).unwrap(), 1.0);
        assert_eq!(solve_z_relu(1.0, -1.0, 1.0, 1.0).unwrap(), -1.0);
        assert_eq!(solve_z_relu(-1.0, -2.0, 1.0, 1.0).unwrap(), -2.0);

        let (z, v) = brute(relu, 1.0, -1.0, 1.0, 1.0);
        assert!((z + 1.0).abs() < 1e-3 && (v - 1.0).abs() < 1e-9);
        let (z, v) = brute(relu, -1.0, -2.0, 1.0, 1.0);
        assert!((z + 2.0).abs() < 1e-3 && (v - 1.0).abs() < 1e-9);
        // clamped positive branch for (a=-1, w=-2): z=0, 1 + 4
        assert_eq!(Activation::Relu.objective(-1.0, -2.0, 1.0, 1.0, 0.0), 5.0);
    }

    #[test]
    fn hardsig_examples() {
        assert_eq!(solve_z_hardsig(0.5, 0.5, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(solve_z_hardsig(1.0, 2.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(solve_z_hardsig(0.0, 1.5, 1.0, 1.0).unwrap(), 1.5);
        let h = Activation::HardSigmoid;
        assert_eq!(h.objective(0.0, 1.5, 1.0, 1.0, 0.75), 1.125);
        assert_eq!(h.objective(0.0, 1.5, 1.0, 1.0, 0.0), 2.25);
        let (z, v) = brute(hsig, 0.0, 1.5, 1.0, 1.0);
        assert!((z - 1.5).abs() < 1e-3 && (v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_examples() {
        let z: f64 = solve_z_grid(&Activation::Relu, 1.0, 1.0, 1.0, 1.0, -5.0, 5.0, 1e-3).unwrap();
        assert!((z - 1.0).abs() < 1e-3);
        let z: f64 = solve_z_grid(&Activation::Relu, 1.0, -1.0, 1.0, 1.0, -5.0, 5.0, 1e-3).unwrap();
        assert!((z + 1.0).abs() < 1e-3);
        let z: f64 = solve_z_grid(&Activation::HardSigmoid, 0.0, 1.5, 1.0, 1.0, -5.0, 5.0, 1e-3).unwrap();
        assert!((z - 1.5).abs() < 1e-3);
        assert!(solve_z_grid(&Activation::Relu, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.1).is_err());
        assert!(solve_z_grid(&Activation::Relu, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_z_relu(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(solve_z_hardsig(0.0, f64::INFINITY, 1.0, 1.0).is_err());
        assert!(solve_z_relu(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(solve_z_relu(0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn closed_forms_beat_grid_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let a = rng.gen_range(-3.0..3.0);
            let w = rng.gen_range(-3.0..3.0);
            let g = rng.gen_range(0.1..10.0);
            let b = rng.gen_range(0.1..10.0);
            for (h, f) in [(Activation::Relu, relu as fn(f64) -> f64), (Activation::HardSigmoid, hsig)] {
                let z = h.solve_output(a, w, g, b).unwrap();
                let (_, best) = brute(f, a, w, g, b);
                assert!(h.objective(a, w, g, b, z) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn tabulated_interpolates_and_validates() {
        let t = Tabulated::new(0.0, 1.0, vec![0.0, 1.0, 1.5]).unwrap();
        assert_eq!(t.eval(-3.0), 0.0);
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(1.5), 1.25);
        assert_eq!(t.eval(9.0), 1.5);
        assert!(Tabulated::new(0.0, 1.0, vec![0.0, 2.0, 1.0]).is_err());
        assert!(Tabulated::new(0.0, 0.0, vec![0.0, 1.0]).is_err());
        assert!(Tabulated::new(0.0, 1.0, vec![0.0]).is_err());
    }

    #[test]
    fn tabulated_relu_matches_closed_form() {
        let t = Activation::Tabulated(Tabulated::sample(-6.0, 6.0, 13, |x: f64| x.max(0.0)).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = rng.gen_range(-3.0..3.0);
            let w = rng.gen_range(-3.0..3.0);
            let g = rng.gen_range(0.1..10.0);
            let b = rng.gen_range(0.1..10.0);
            let zt = t.solve_output(a, w, g, b).unwrap();
            let zr = solve_z_relu(a, w, g, b).unwrap();
            let ot = t.objective(a, w, g, b, zt);
            let or = Activation::Relu.objective(a, w, g, b, zr);
            assert!((ot - or).abs() < 1e-9, "{a} {w} {g} {b}: {ot} vs {or}");
        }
    }

    #[test]
    fn tabulated_smooth_sigmoid_beats_grid() {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let h = Activation::Tabulated(Tabulated::sample(-8.0, 8.0, 257, sig).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = rng.gen_range(0.0..1.0);
            let w = rng.gen_range(-3.0..3.0);
            let z = h.solve_output(a, w, 10.0, 1.0).unwrap();
            let zg = solve_z_grid(&h, a, w, 10.0, 1.0, -10.0, 10.0, 1e-3).unwrap();
            assert!(h.objective(a, w, 10.0, 1.0, z) <= h.objective(a, w, 10.0, 1.0, zg) + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn exact_fit_gives_zero_objective(w in -3.0f64..3.0) {
            let z = solve_z_relu(relu(w), w, 10.0, 1.0).unwrap();
            // linear pieces solve (γ + β) z = γ w + β w, exact up to rounding
            prop_assert!(Activation::Relu.objective(relu(w), w, 10.0, 1.0, z) <= 1e-28);
            if w > 0.0 {
                prop_assert!((z - w).abs() <= 4.0 * f64::EPSILON);
            }
            let z = solve_z_hardsig(hsig(w), w, 10.0, 1.0).unwrap();
            prop_assert!(Activation::HardSigmoid.objective(hsig(w), w, 10.0, 1.0, z) <= 1e-28);
            if w > 0.0 && w < 1.0 {
                prop_assert!((z - w).abs() <= 4.0 * f64::EPSILON);
            }
        }

        #[test]
        fn scaling_gamma_and_beta_keeps_minimizer(
            a in -3.0f64..3.0, w in -3.0f64..3.0, g in 0.1f64..10.0, b in 0.1f64..10.0, s in 0.1f64..10.0
        ) {
            for h in [Activation::Relu, Activation::HardSigmoid] {
                let z1 = h.solve_output(a, w, g, b).unwrap();
                let z2 = h.solve_output(a, w, g * s, b * s).unwrap();
                let o1 = h.objective(a, w, g, b, z1);
                let o2 = h.objective(a, w, g, b, z2);
                // a rounding-level change can flip between equal-valued branches
                prop_assert!((z1 - z2).abs() < 1e-9 || (o1 - o2).abs() < 1e-9 * (1.0 + o1));
            }
        }
    }
}
