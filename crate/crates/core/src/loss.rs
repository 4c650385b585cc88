//! Separable hinge loss and the closed-form final-layer output update.
//!
//! For a positive label the loss is `max(1 − z, 0)`, for a negative label
//! `max(z, 0)`. Multi-class targets are one-hot matrices and the loss is
//! applied entrywise.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_value<T: Scalar>(y: T) -> Result<Self> {
        if y == T::one() {
            Ok(Label::Positive)
        } else if y == T::zero() {
            Ok(Label::Negative)
        } else {
            Err(Error::InvalidArgument(format!("label must be 0 or 1, got {y}")))
        }
    }
}

pub fn hinge<T: Scalar>(z: T, y: Label) -> T {
    match y {
        Label::Positive => (T::one() - z).max(T::zero()),
        Label::Negative => z.max(T::zero()),
    }
}

/// `ℓ(z, y) + λz + β(z − w)²`.
pub fn final_objective<T: Scalar>(z: T, w: T, y: Label, lambda: T, beta: T) -> T {
    let pen = z - w;
    hinge(z, y) + lambda * z + beta * pen * pen
}

/// Global minimizer of `ℓ(z, y) + λz + β(z − w)²` over both affine pieces of
/// the hinge. On equal objectives the piece below the kink wins.
pub fn solve_zl_hinge<T: Scalar>(w: T, y: Label, lambda: T, beta: T) -> Result<T> {
    if !w.is_finite() || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite input w={w}, lambda={lambda}")));
    }
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let two_beta = beta + beta;
    let (kink, below, above) = match y {
        Label::Positive => (
            T::one(),
            w + (T::one() - lambda) / two_beta,
            w - lambda / two_beta,
        ),
        Label::Negative => (
            T::zero(),
            w - lambda / two_beta,
            w - (T::one() + lambda) / two_beta,
        ),
    };
    let below = below.min(kink);
    let above = above.max(kink);
    let below_obj = final_objective(below, w, y, lambda, beta);
    let above_obj = final_objective(above, w, y, lambda, beta);
    Ok(if below_obj <= above_obj { below } else { above })
}

/// Subdifferential of the hinge at `z`, as a closed interval.
pub fn hinge_subgradient_interval<T: Scalar>(z: T, y: Label) -> (T, T) {
    let one = T::one();
    let zero = T::zero();
    match y {
        Label::Positive => {
            if z < one {
                (-one, -one)
            } else if z > one {
                (zero, zero)
            } else {
                (-one, zero)
            }
        }
        Label::Negative => {
            if z < zero {
                (zero, zero)
            } else if z > zero {
                (one, one)
            } else {
                (zero, one)
            }
        }
    }
}

/// Summed hinge loss over a score matrix and a one-hot label matrix.
pub fn total_hinge<T: Scalar>(scores: &Matrix<T>, labels: &Matrix<T>) -> Result<T> {
    if scores.shape() != labels.shape() {
        return Err(crate::error::mismatch(
            "total_hinge",
            format!("{:?}", labels.shape()),
            format!("{:?}", scores.shape()),
        ));
    }
    let mut sum = T::zero();
    for (&z, &y) in scores.as_slice().iter().zip(labels.as_slice()) {
        sum += hinge(z, Label::from_value(y)?);
    }
    Ok(sum)
}
