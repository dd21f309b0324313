//! Scalar-generic numeric helpers.
//!
//! The similarity and scoring math is written against [`Real`] so it can be
//! exercised in `f32` as well as the default `f64` ([`crate::Score`]).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Tolerance used when checking domain bounds such as `|cos| <= 1`.
    fn domain_tolerance() -> Self;
}

impl Real for f32 {
    fn domain_tolerance() -> Self {
        1e-6
    }
}

impl Real for f64 {
    fn domain_tolerance() -> Self {
        1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ScalarError {
    #[error("cosine {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> Result<R, ScalarError> {
    if a.len() != b.len() {
        return Err(ScalarError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).fold(R::zero(), |acc, (x, y)| acc + *x * *y))
}

pub fn norm<R: Real>(a: &[R]) -> R {
    a.iter().fold(R::zero(), |acc, x| acc + *x * *x).sqrt()
}

/// Scales `v` to unit length.
pub fn normalize<R: Real>(v: &[R]) -> Result<Vec<R>, ScalarError> {
    let n = norm(v);
    if n <= R::zero() {
        return Err(ScalarError::ZeroNorm);
    }
    Ok(v.iter().map(|x| *x / n).collect())
}

/// Cosine of the angle between `a` and `b`, clamped into `[-1, 1]`.
///
/// Bitwise-identical inputs return exactly one.
pub fn cosine<R: Real>(a: &[R], b: &[R]) -> Result<R, ScalarError> {
    let d = dot(a, b)?;
    if a == b {
        return if norm(a) > R::zero() { Ok(R::one()) } else { Err(ScalarError::ZeroNorm) };
    }
    let denom = norm(a) * norm(b);
    if denom <= R::zero() {
        return Err(ScalarError::ZeroNorm);
    }
    Ok((d / denom).max(-R::one()).min(R::one()))
}

/// Maps a cosine in `[-1, 1]` onto the unit interval with `(raw + 1) / 2`.
///
/// Values slightly outside the domain (within [`Real::domain_tolerance`]) are
/// clamped; anything further out is rejected.
pub fn normalize_similarity<R: Real>(raw: R) -> Result<R, ScalarError> {
    let tol = R::domain_tolerance();
    if raw.is_nan() || raw > R::one() + tol || raw < -R::one() - tol {
        return Err(ScalarError::OutOfRange(raw.to_f64().unwrap_or(f64::NAN)));
    }
    let clamped = raw.max(-R::one()).min(R::one());
    let two = R::one() + R::one();
    Ok((clamped + R::one()) / two)
}

/// Weighted mix `alpha * a + (1 - alpha) * b`, renormalized to unit length.
pub fn unit_mix<R: Real>(a: &[R], b: &[R], alpha: R) -> Result<Vec<R>, ScalarError> {
    if a.len() != b.len() {
        return Err(ScalarError::LengthMismatch(a.len(), b.len()));
    }
    let mixed: Vec<R> = a
        .iter()
        .zip(b)
        .map(|(x, y)| alpha * *x + (R::one() - alpha) * *y)
        .collect();
    normalize(&mixed)
}

/// `correct / total`, zero for an empty total.
pub fn ratio<R: Real>(correct: usize, total: usize) -> R {
    if total == 0 {
        return R::zero();
    }
    R::from_usize(correct).unwrap_or_else(R::zero) / R::from_usize(total).unwrap_or_else(R::one)
}
