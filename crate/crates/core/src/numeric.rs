//! Scalar trait and the row-level softmax/argmax helpers shared by the tape
//! ops, the loss layer, and evaluation.
//!
//! Conventions used everywhere in the crate:
//! * natural logarithms;
//! * probabilities are clamped to `[eps, 1]` before any log;
//! * argmax ties resolve to the lowest class index.

use crate::error::Error;
use crate::Result;
use alloc::format;
use alloc::vec::Vec;
use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};
use num_traits::Float;

/// Element type of every tensor: `f32` for training, `f64` for gradient
/// checks and oracle comparisons.
pub trait Real:
    Float + Debug + Display + Sum + AddAssign + SubAssign + MulAssign + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into `T`. Panics only if the target type cannot
/// represent any approximation of the value, which cannot happen for the two
/// `Real` implementors.
pub fn real<T: Real>(x: f64) -> T {
    T::from(x).expect("f64 constant representable in Real type")
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// True when every element is finite.
pub fn all_finite<T: Real>(xs: &[T]) -> bool {
    xs.iter().all(|v| v.is_finite())
}

/// Clamps a probability to `[eps, 1]`.
pub fn clamp_prob<T: Real>(p: T, eps: T) -> T {
    if p < eps {
        eps
    } else if p > T::one() {
        T::one()
    } else {
        p
    }
}

/// Shift-stabilized log-softmax of one row: `z - max(z) - ln(sum exp(z - max))`.
/// Rejects non-finite inputs so a diverging model fails loudly.
pub fn log_softmax_row<T: Real>(row: &[T], out: &mut [T]) -> Result<()> {
    debug_assert_eq!(row.len(), out.len());
    if !all_finite(row) {
        return Err(Error::numeric(format!(
            "non-finite logit in log_softmax input: {row:?}"
        )));
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &z) in out.iter_mut().zip(row) {
        let e = (z - max).exp();
        *o = z - max;
        sum += e;
    }
    let log_sum = sum.ln();
    for o in out.iter_mut() {
        *o -= log_sum;
    }
    Ok(())
}

/// Softmax of one row, computed as `exp(log_softmax(row))`.
pub fn softmax_row<T: Real>(row: &[T], out: &mut [T]) -> Result<()> {
    log_softmax_row(row, out)?;
    for o in out.iter_mut() {
        *o = o.exp();
    }
    Ok(())
}

/// Temperature-softened softmax of one logit row: `softmax(row / t)`.
pub fn softmax_temp_row<T: Real>(row: &[T], t: T, out: &mut [T]) -> Result<()> {
    if !(t > T::zero()) {
        return Err(Error::config(format!("temperature must be > 0, got {t}")));
    }
    let scaled: Vec<T> = row.iter().map(|&z| z / t).collect();
    softmax_row(&scaled, out)
}

/// Temperature-softens a stored probability row without access to logits:
/// `p_k^(1/t)` renormalized, which equals `softmax(ln p / t)` exactly.
/// Entries are clamped to `[eps, 1]` before the power.
pub fn sharpen_row<T: Real>(probs: &[T], t: T, eps: T, out: &mut [T]) -> Result<()> {
    if !(t > T::zero()) {
        return Err(Error::config(format!("temperature must be > 0, got {t}")));
    }
    let inv_t = T::one() / t;
    let mut sum = T::zero();
    for (o, &p) in out.iter_mut().zip(probs) {
        let v = clamp_prob(p, eps).powf(inv_t);
        *o = v;
        sum += v;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
    Ok(())
}

/// Rank of `row[label]` under the top-k tie rule: the number of classes that
/// strictly beat the label, plus those that tie it at a lower index. The label
/// counts as a top-k hit when the rank is `< k`.
pub fn topk_rank<T: Real>(row: &[T], label: usize) -> usize {
    let target = row[label];
    let mut rank = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > target || (v == target && j < label) {
            rank += 1;
        }
    }
    rank
}
