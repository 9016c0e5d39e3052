//! Central-difference gradient checking against the tape's reverse pass.
//! Meant to run in `f64`; `f32` round-off drowns the comparison.

use crate::numeric::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::error::Error;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Worst relative error between the analytic gradient and the numeric
/// central-difference gradient of `f` over every coordinate of `inputs`.
///
/// `f` receives a fresh tape and one leaf per input tensor and must return a
/// scalar loss. The relative error per coordinate is
/// `|a - n| / max(1, |a|, |n|)`, so near-zero gradients are measured
/// absolutely instead of blowing up the ratio.
pub fn grad_check<T, F>(mut f: F, inputs: &[Tensor<T>], eps: T) -> Result<T>
where
    T: Real,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if !(eps > T::zero()) {
        return Err(Error::config(format!("grad_check eps must be > 0, got {eps}")));
    }

    // Analytic pass: every input becomes a gradient-tracked leaf.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    if tape.value(loss).numel() != 1 {
        return Err(Error::contract(format!(
            "grad_check loss must be scalar, shape is {:?}",
            tape.value(loss).shape()
        )));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<T>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![T::zero(); t.numel()])
        })
        .collect();

    // Numeric pass: perturb one coordinate at a time.
    let mut eval = |perturbed: &[Tensor<T>]| -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for t in work.iter_mut() {
        t.set_requires_grad(false);
    }
    let two = T::one() + T::one();
    let mut worst = T::zero();
    for ti in 0..work.len() {
        for ci in 0..work[ti].numel() {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let up = eval(&work)?;
            work[ti].data_mut()[ci] = orig - eps;
            let down = eval(&work)?;
            work[ti].data_mut()[ci] = orig;
            let numeric = (up - down) / (two * eps);
            let a = analytic[ti][ci];
            let denom = T::one().max(a.abs()).max(numeric.abs());
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
