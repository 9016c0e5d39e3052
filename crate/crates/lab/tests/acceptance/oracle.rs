//! Straight-line reference arithmetic for the blended losses, written
//! against plain `f64` slices: naive unshifted softmax, scalar loops, no
//! code shared with the tensor engine. The acceptance checks compare the
//! batched tape path against these row-by-row implementations.

/// Unshifted temperature softmax: `exp(z_i / t) / sum_j exp(z_j / t)`.
pub fn softmax_t(row: &[f64], t: f64) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|&z| (z / t).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

pub fn clamp(p: f64, eps: f64) -> f64 {
    p.max(eps).min(1.0)
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

pub fn ce_hard(pred: &[f64], label: usize, eps: f64) -> f64 {
    -clamp(pred[label], eps).ln()
}

pub fn ce_soft(pred: &[f64], target: &[f64], eps: f64) -> f64 {
    -target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| t * clamp(p, eps).ln())
        .sum::<f64>()
}

/// Temperature-sharpens a stored probability row: clamp, raise to `1/t`,
/// renormalize.
pub fn sharpen(probs: &[f64], t: f64, eps: f64) -> Vec<f64> {
    let powed: Vec<f64> = probs.iter().map(|&p| clamp(p, eps).powf(1.0 / t)).collect();
    let sum: f64 = powed.iter().sum();
    powed.into_iter().map(|v| v / sum).collect()
}

/// Confidence weight in its closed form: `p_w / (p_max + p_w)` on the
/// clamped row.
pub fn beta_closed(probs: &[f64], weak: usize, eps: f64) -> f64 {
    let p_max = clamp(probs[argmax(probs)], eps);
    let p_w = clamp(probs[weak], eps);
    p_w / (p_max + p_w)
}

/// The same weight as a softmax over the two cross-entropies:
/// `exp(ce_self) / (exp(ce_self) + exp(ce_weak))`.
pub fn beta_from_ce(probs: &[f64], weak: usize, eps: f64) -> f64 {
    let ce_self = ce_hard(probs, argmax(probs), eps);
    let ce_weak = ce_hard(probs, weak, eps);
    ce_self.exp() / (ce_self.exp() + ce_weak.exp())
}

/// One row's weak-teacher CE target: the full (sharpened) distribution or
/// the hard label alone.
pub enum WeakTarget<'a> {
    Soft(&'a [f64]),
    Hard(usize),
}

fn weak_ce(student: &[f64], target: &WeakTarget<'_>, t: f64, eps: f64) -> f64 {
    match target {
        WeakTarget::Soft(p) => ce_soft(student, &sharpen(p, t, eps), eps),
        WeakTarget::Hard(l) => ce_hard(student, *l, eps),
    }
}

/// Fixed blend, batch mean of
/// `t^2 * ((1 - alpha) * ce_weak + alpha * ce_self)` with the self label
/// taken as the argmax of the softened student row.
pub fn augconf(
    logits: &[Vec<f64>],
    targets: &[WeakTarget<'_>],
    alpha: f64,
    t: f64,
    eps: f64,
) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(row, tgt)| {
            let s = softmax_t(row, t);
            let cw = weak_ce(&s, tgt, t, eps);
            let cs = ce_hard(&s, argmax(&s), eps);
            t * t * ((1.0 - alpha) * cw + alpha * cs)
        })
        .sum();
    total / logits.len() as f64
}

/// Adaptive blend: alpha replaced per row by the confidence weight computed
/// from that row's softened distribution and the weak hard label.
pub fn adaptconf(
    logits: &[Vec<f64>],
    targets: &[WeakTarget<'_>],
    weak_hard: &[usize],
    t: f64,
    eps: f64,
) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .zip(weak_hard)
        .map(|((row, tgt), &w)| {
            let s = softmax_t(row, t);
            let b = beta_closed(&s, w, eps);
            let cw = weak_ce(&s, tgt, t, eps);
            let cs = ce_hard(&s, argmax(&s), eps);
            t * t * ((1.0 - b) * cw + b * cs)
        })
        .sum();
    total / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_normalizes_and_flattens_with_t() {
        let s1 = softmax_t(&[1.0, 2.0, 3.0], 1.0);
        let s4 = softmax_t(&[1.0, 2.0, 3.0], 4.0);
        assert!((s1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s4.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s4[0] > s1[0] && s4[2] < s1[2]);
    }

    #[test]
    fn beta_forms_agree_on_a_hand_case() {
        let probs = [0.6, 0.3, 0.1];
        // weak label 1: beta = 0.3 / (0.6 + 0.3) = 1/3.
        let b = beta_closed(&probs, 1, 1e-12);
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        assert!((b - beta_from_ce(&probs, 1, 1e-12)).abs() < 1e-12);
        // agreement pins the weight at exactly one half
        assert_eq!(beta_closed(&probs, 0, 1e-12), 0.5);
    }

    #[test]
    fn blend_endpoints_are_single_terms() {
        let logits = vec![vec![2.0, -1.0, 0.5], vec![-0.5, 1.5, 0.0]];
        let weak = [2usize, 1];
        let targets: Vec<WeakTarget<'_>> = weak.iter().map(|&l| WeakTarget::Hard(l)).collect();
        let a0 = augconf(&logits, &targets, 0.0, 2.0, 1e-12);
        let a1 = augconf(&logits, &targets, 1.0, 2.0, 1e-12);
        // alpha 0 is pure weak CE, alpha 1 pure self CE; both positive and
        // different for disagreeing labels.
        assert!(a0 > a1);
        let mid = augconf(&logits, &targets, 0.5, 2.0, 1e-12);
        assert!((mid - 0.5 * (a0 + a1)).abs() < 1e-12);
    }
}
