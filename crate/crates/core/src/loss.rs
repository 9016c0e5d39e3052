//! Distillation objectives: plain CE to weak labels, temperature-scaled KD,
//! and the two confidence-weighted blends (fixed mixing weight, and a
//! per-sample adaptive weight derived from the student's own confidence).
//!
//! Conventions, applied uniformly:
//! * cross-entropy is `-sum(target * ln(clamp(pred, eps, 1)))`, natural log;
//! * the temperature softens both student and teacher distributions in every
//!   CE term and inside the adaptive weight;
//! * temperature-softened CE terms are scaled by `T^2`; the adaptive weight
//!   itself is computed on unscaled CE values;
//! * the adaptive weight and the student's self-labels are detached: they
//!   are data as far as the gradient is concerned;
//! * teacher outputs never receive gradients.

use crate::error::Error;
use crate::numeric::{self, real, Real};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Distillation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Cross-entropy straight to the weak teacher's labels.
    Ce,
    /// KL(teacher || student) at temperature, times `T^2`.
    Kd,
    /// Fixed blend: `(1-alpha) * CE(student, teacher) + alpha * CE(student, self-label)`.
    AugConf,
    /// Per-sample blend with the confidence-derived weight in place of alpha.
    AdaptConf,
}

/// Which form of the teacher signal the CE-family losses target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TeacherTarget {
    /// Full soft distribution (temperature-softened). KD always uses this.
    Soft,
    /// Argmax label only.
    Hard,
}

/// Loss hyperparameters. `gt_weight` scales a CE term to ground-truth labels
/// at temperature 1; `distill_weight` scales the method term. Setting
/// `gt_weight` to 0 is the label-free regime.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossConfig {
    pub method: Method,
    pub alpha: f64,
    pub temperature: f64,
    pub gt_weight: f64,
    pub distill_weight: f64,
    pub prob_clamp: f64,
    pub teacher_target: TeacherTarget,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            method: Method::Ce,
            alpha: 0.5,
            temperature: 1.0,
            gt_weight: 1.0,
            distill_weight: 1.0,
            prob_clamp: 1e-12,
            teacher_target: TeacherTarget::Soft,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config(format!(
                "temperature must be a positive finite number, got {}",
                self.temperature
            )));
        }
        for (name, v) in [("gt_weight", self.gt_weight), ("distill_weight", self.distill_weight)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 1.0) {
            return Err(Error::config(format!(
                "prob_clamp must lie in (0, 1), got {}",
                self.prob_clamp
            )));
        }
        Ok(())
    }
}

/// Frozen weak-teacher predictions for a batch: the soft distribution at
/// temperature 1 and the hard argmax labels. Never gradient-tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSignal<T> {
    soft: Tensor<T>,
    hard: Vec<usize>,
}

impl<T: Real> TeacherSignal<T> {
    /// Softmax of raw logits, argmax with low-index tie-break.
    pub fn from_logits(logits: &Tensor<T>) -> Result<Self> {
        if logits.rank() != 2 {
            return Err(Error::contract(format!(
                "teacher logits must be [N,K], got {:?}",
                logits.shape()
            )));
        }
        let (n, k) = (logits.shape()[0], logits.shape()[1]);
        let mut soft = vec![T::zero(); n * k];
        let mut hard = Vec::with_capacity(n);
        for i in 0..n {
            let row = logits.row(i)?;
            numeric::softmax_row(row, &mut soft[i * k..(i + 1) * k])?;
            hard.push(numeric::argmax(row));
        }
        Ok(TeacherSignal {
            soft: Tensor::new(soft, [n, k])?,
            hard,
        })
    }

    /// Wraps stored probabilities; each row must be non-negative and sum to
    /// 1 within 1e-6.
    pub fn from_probs(probs: Tensor<T>) -> Result<Self> {
        if probs.rank() != 2 {
            return Err(Error::contract(format!(
                "teacher probabilities must be [N,K], got {:?}",
                probs.shape()
            )));
        }
        let (n, k) = (probs.shape()[0], probs.shape()[1]);
        let tol = real::<T>(1e-6);
        let mut hard = Vec::with_capacity(n);
        for i in 0..n {
            let row = probs.row(i)?;
            if row.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
                return Err(Error::numeric(format!(
                    "teacher probability row {i} has a negative or non-finite entry"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::numeric(format!(
                    "teacher probability row {i} sums to {sum}, expected 1 within 1e-6"
                )));
            }
            hard.push(numeric::argmax(row));
        }
        let _ = k;
        Ok(TeacherSignal { soft: probs, hard })
    }

    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.soft.shape()[1]
    }

    pub fn soft(&self) -> &Tensor<T> {
        &self.soft
    }

    pub fn hard(&self) -> &[usize] {
        &self.hard
    }

    /// Rows gathered by batch index, for chunked evaluation.
    pub fn gather(&self, rows: &[usize]) -> Result<Self> {
        Ok(TeacherSignal {
            soft: self.soft.gather_rows(rows)?,
            hard: rows.iter().map(|&r| self.hard[r]).collect(),
        })
    }
}

// ── building blocks ──────────────────────────────────────────────────────

/// Student distribution at temperature: `exp(log_softmax(logits / T))`.
pub fn softmax_t<T: Real>(tape: &mut Tape<T>, logits: Var, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::config(format!(
            "temperature must be a positive finite number, got {temperature}"
        )));
    }
    let scaled = tape.scale(logits, real::<T>(1.0 / temperature))?;
    let lsm = tape.log_softmax(scaled)?;
    tape.exp(lsm)
}

/// Per-row soft-target cross-entropy `[N]`: `-sum(target * ln(clamp(probs)))`.
/// The target enters as a constant; gradients flow only through `probs`.
pub fn ce_rows_soft<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    target: &Tensor<T>,
    clamp: f64,
) -> Result<Var> {
    if tape.value(probs).shape() != target.shape() {
        return Err(Error::shapes(
            "ce_rows_soft",
            tape.value(probs).shape(),
            target.shape(),
        ));
    }
    let lp = tape.clamp_log(probs, real::<T>(clamp))?;
    let mut tgt = target.clone();
    tgt.set_requires_grad(false);
    let tgt = tape.leaf(tgt);
    let weighted = tape.mul(lp, tgt)?;
    let sums = tape.row_sum(weighted)?;
    tape.scale(sums, -T::one())
}

/// Per-row hard-label cross-entropy `[N]`: `-ln(clamp(probs[i, label_i]))`.
pub fn ce_rows_hard<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    labels: &[usize],
    clamp: f64,
) -> Result<Var> {
    let lp = tape.clamp_log(probs, real::<T>(clamp))?;
    let picked = tape.pick(lp, labels)?;
    tape.scale(picked, -T::one())
}

/// Batch mean of a `[N]` vector as a rank-0 scalar.
pub fn mean_of<T: Real>(tape: &mut Tape<T>, rows: Var) -> Result<Var> {
    let n = tape.value(rows).numel();
    if n == 0 {
        return Err(Error::contract("mean of an empty vector"));
    }
    let total = tape.sum_all(rows)?;
    tape.scale(total, real::<T>(1.0 / n as f64))
}

fn t_squared<T: Real>(temperature: f64) -> T {
    real::<T>(temperature * temperature)
}

/// Teacher's soft rows sharpened to the configured temperature, as a plain
/// (constant) tensor.
fn sharpened_teacher<T: Real>(teacher: &TeacherSignal<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    let (n, k) = (teacher.len(), teacher.classes());
    let mut data = vec![T::zero(); n * k];
    for i in 0..n {
        let row = teacher.soft().row(i)?;
        numeric::sharpen_row(
            row,
            real::<T>(cfg.temperature),
            real::<T>(cfg.prob_clamp),
            &mut data[i * k..(i + 1) * k],
        )?;
    }
    Tensor::new(data, [n, k])
}

/// Detached argmax labels of the student's own distribution.
fn self_labels<T: Real>(probs: &Tensor<T>) -> Result<Vec<usize>> {
    let n = probs.shape()[0];
    (0..n).map(|i| Ok(numeric::argmax(probs.row(i)?))).collect()
}

fn check_student_teacher<T: Real>(
    tape: &Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
) -> Result<(usize, usize)> {
    let shape = tape.value(logits).shape();
    if shape.len() != 2 {
        return Err(Error::contract(format!(
            "student logits must be [N,K], got {shape:?}"
        )));
    }
    let (n, k) = (shape[0], shape[1]);
    if n == 0 {
        return Err(Error::contract("loss over an empty batch"));
    }
    if teacher.len() != n || teacher.classes() != k {
        return Err(Error::shapes(
            "student logits vs teacher signal",
            shape,
            teacher.soft().shape(),
        ));
    }
    Ok((n, k))
}

// ── confidence-weighted blends ───────────────────────────────────────────

/// Shared core of the fixed and adaptive blends. For sample `i` with
/// self-weight `w_i`:
///
/// `T^2 * [ (1 - w_i) * CE(student_T, teacher) + w_i * CE(student_T, self-label) ]`
///
/// averaged over the batch. The weights arrive as plain numbers (already
/// detached); the fixed blend passes `alpha` for every sample, the adaptive
/// blend passes the per-sample confidence weights.
pub fn confidence_blend<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
    self_weights: &[T],
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let (n, _k) = check_student_teacher(tape, logits, teacher)?;
    if self_weights.len() != n {
        return Err(Error::contract(format!(
            "blend got {} weights for {n} samples",
            self_weights.len()
        )));
    }
    let probs = softmax_t(tape, logits, cfg.temperature)?;
    let teacher_rows = match cfg.teacher_target {
        TeacherTarget::Soft => {
            let target = sharpened_teacher(teacher, cfg)?;
            ce_rows_soft(tape, probs, &target, cfg.prob_clamp)?
        }
        TeacherTarget::Hard => ce_rows_hard(tape, probs, teacher.hard(), cfg.prob_clamp)?,
    };
    let own = self_labels(tape.value(probs))?;
    let self_rows = ce_rows_hard(tape, probs, &own, cfg.prob_clamp)?;

    let t2 = t_squared::<T>(cfg.temperature);
    let teacher_coeff: Vec<T> = self_weights.iter().map(|&w| (T::one() - w) * t2).collect();
    let self_coeff: Vec<T> = self_weights.iter().map(|&w| w * t2).collect();
    let teacher_coeff = tape.constant(teacher_coeff, [n])?;
    let self_coeff = tape.constant(self_coeff, [n])?;
    let teacher_term = tape.mul(teacher_rows, teacher_coeff)?;
    let self_term = tape.mul(self_rows, self_coeff)?;
    let blended = tape.add(teacher_term, self_term)?;
    mean_of(tape, blended)
}

/// Fixed blend at `cfg.alpha`.
pub fn augconf_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
    cfg: &LossConfig,
) -> Result<Var> {
    if cfg.method != Method::AugConf {
        return Err(Error::config(format!(
            "augconf_loss called with method {:?}",
            cfg.method
        )));
    }
    let n = tape.value(logits).shape().first().copied().unwrap_or(0);
    let weights = vec![real::<T>(cfg.alpha); n];
    confidence_blend(tape, logits, teacher, &weights, cfg)
}

/// Adaptive blend: weights come from [`beta_weights`] on the student's own
/// temperature-softened distribution, detached from the gradient.
pub fn adaptconf_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
    cfg: &LossConfig,
) -> Result<Var> {
    if cfg.method != Method::AdaptConf {
        return Err(Error::config(format!(
            "adaptconf_loss called with method {:?}",
            cfg.method
        )));
    }
    check_student_teacher(tape, logits, teacher)?;
    let weights = beta_weights(tape.value(logits), teacher.hard(), cfg.temperature, cfg.prob_clamp)?;
    confidence_blend(tape, logits, teacher, &weights, cfg)
}

/// Method-CE distill term: `T^2 * CE(student_T, teacher target)`, batch mean.
/// Bit-compatible with the blends at their endpoints.
pub fn distill_ce_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let (n, _) = check_student_teacher(tape, logits, teacher)?;
    let probs = softmax_t(tape, logits, cfg.temperature)?;
    let rows = match cfg.teacher_target {
        TeacherTarget::Soft => {
            let target = sharpened_teacher(teacher, cfg)?;
            ce_rows_soft(tape, probs, &target, cfg.prob_clamp)?
        }
        TeacherTarget::Hard => ce_rows_hard(tape, probs, teacher.hard(), cfg.prob_clamp)?,
    };
    let coeff = tape.constant(vec![t_squared::<T>(cfg.temperature); n], [n])?;
    let scaled = tape.mul(rows, coeff)?;
    mean_of(tape, scaled)
}

/// Pure self-distillation term: `T^2 * CE(student_T, own argmax)`, batch mean.
pub fn self_ce_loss<T: Real>(tape: &mut Tape<T>, logits: Var, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.value(logits).shape();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::contract(format!(
            "student logits must be [N,K] with N >= 1, got {shape:?}"
        )));
    }
    let n = shape[0];
    let probs = softmax_t(tape, logits, cfg.temperature)?;
    let own = self_labels(tape.value(probs))?;
    let rows = ce_rows_hard(tape, probs, &own, cfg.prob_clamp)?;
    let coeff = tape.constant(vec![t_squared::<T>(cfg.temperature); n], [n])?;
    let scaled = tape.mul(rows, coeff)?;
    mean_of(tape, scaled)
}

/// Temperature-scaled distillation: `T^2 * KL(teacher_T || student_T)`,
/// batch mean. The teacher side is computed outside the tape (no gradient),
/// the student side differentiates through its log-softmax.
pub fn kd_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: &TeacherSignal<T>,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let (n, k) = check_student_teacher(tape, logits, teacher)?;
    // Teacher at temperature plus its (negative) entropy, both constants.
    let mut pt = vec![T::zero(); n * k];
    let mut neg_entropy = Vec::with_capacity(n);
    for i in 0..n {
        let row = teacher.soft().row(i)?;
        let out = &mut pt[i * k..(i + 1) * k];
        numeric::sharpen_row(row, real::<T>(cfg.temperature), real::<T>(cfg.prob_clamp), out)?;
        let mut acc = T::zero();
        for &p in out.iter() {
            if p > T::zero() {
                acc += p * p.ln();
            }
        }
        neg_entropy.push(acc);
    }
    let pt = tape.constant(pt, [n, k])?;
    let scaled = tape.scale(logits, real::<T>(1.0 / cfg.temperature))?;
    let ls = tape.log_softmax(scaled)?;
    let weighted = tape.mul(ls, pt)?;
    let cross = tape.row_sum(weighted)?;
    let neg_cross = tape.scale(cross, -T::one())?;
    let base = tape.constant(neg_entropy, [n])?;
    let kl = tape.add(base, neg_cross)?;
    let kl = tape.scale(kl, t_squared::<T>(cfg.temperature))?;
    mean_of(tape, kl)
}

// ── adaptive weight ──────────────────────────────────────────────────────

/// Confidence weight for one sample from its temperature-softened student
/// distribution and the weak hard label:
///
/// `beta = p_w / (p_max + p_w)` with both probabilities clamped to
/// `[eps, 1]`, the closed form of
/// `exp(CE_self) / (exp(CE_self) + exp(CE_weak))` under the clamped-CE
/// convention. Always in `(0, 0.5]`; equals 0.5 exactly when the clamped
/// probability of the weak label ties the maximum.
pub fn beta_weight<T: Real>(probs_row: &[T], weak_hard: usize, clamp: f64) -> T {
    let eps = real::<T>(clamp);
    let p_max = numeric::clamp_prob(probs_row[numeric::argmax(probs_row)], eps);
    let p_w = numeric::clamp_prob(probs_row[weak_hard], eps);
    p_w / (p_max + p_w)
}

/// Per-sample confidence weights for a whole logit batch.
pub fn beta_weights<T: Real>(
    logits: &Tensor<T>,
    weak_hard: &[usize],
    temperature: f64,
    clamp: f64,
) -> Result<Vec<T>> {
    if logits.rank() != 2 {
        return Err(Error::contract(format!(
            "beta_weights expects [N,K] logits, got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if weak_hard.len() != n {
        return Err(Error::contract(format!(
            "beta_weights got {} weak labels for {n} rows",
            weak_hard.len()
        )));
    }
    let t = real::<T>(temperature);
    let mut probs = vec![T::zero(); k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if weak_hard[i] >= k {
            return Err(Error::contract(format!(
                "weak label {} out of range for {k} classes (row {i})",
                weak_hard[i]
            )));
        }
        numeric::softmax_temp_row(logits.row(i)?, t, &mut probs)?;
        out.push(beta_weight(&probs, weak_hard[i], clamp));
    }
    Ok(out)
}

// ── combined objective ───────────────────────────────────────────────────

/// The trained objective:
///
/// `gt_weight * CE(student at T=1, labels) + distill_weight * method_term`.
///
/// A term is dropped when its weight is 0 or its inputs are absent; dropping
/// both is a configuration error. Methods other than plain CE require a
/// teacher.
pub fn total_objective<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    teacher: Option<&TeacherSignal<T>>,
    labels: Option<&[usize]>,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let gt_active = labels.is_some() && cfg.gt_weight > 0.0;
    let distill_active = cfg.distill_weight > 0.0 && (teacher.is_some() || cfg.method != Method::Ce);
    if distill_active && teacher.is_none() {
        return Err(Error::config(format!(
            "method {:?} requires a teacher signal",
            cfg.method
        )));
    }
    if !gt_active && !distill_active {
        return Err(Error::config(
            "objective has no terms: ground-truth term and distill term are both absent",
        ));
    }

    let gt_term = if gt_active {
        let labels = labels.unwrap();
        let probs = softmax_t(tape, logits, 1.0)?;
        let rows = ce_rows_hard(tape, probs, labels, cfg.prob_clamp)?;
        let mean = mean_of(tape, rows)?;
        Some(tape.scale(mean, real::<T>(cfg.gt_weight))?)
    } else {
        None
    };

    let distill_term = if distill_active {
        let teacher = teacher.unwrap();
        let raw = match cfg.method {
            Method::Ce => distill_ce_loss(tape, logits, teacher, cfg)?,
            Method::Kd => kd_loss(tape, logits, teacher, cfg)?,
            Method::AugConf => augconf_loss(tape, logits, teacher, cfg)?,
            Method::AdaptConf => adaptconf_loss(tape, logits, teacher, cfg)?,
        };
        Some(tape.scale(raw, real::<T>(cfg.distill_weight))?)
    } else {
        None
    };

    match (gt_term, distill_term) {
        (Some(g), Some(d)) => tape.add(g, d),
        (Some(g), None) => Ok(g),
        (None, Some(d)) => Ok(d),
        (None, None) => unreachable!("guarded above"),
    }
}

// ── adaptive-weight statistics ───────────────────────────────────────────

/// Snapshot of the adaptive weights over one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BetaRecord {
    pub epoch: usize,
    /// Per-sample weights in batch order.
    pub betas: Vec<f64>,
    /// Samples whose student argmax equals the weak hard label. This is the
    /// exact-agreement count; it coincides with `beta == 0.5` except on
    /// measure-zero probability ties.
    pub agree_count: usize,
    pub mean: f64,
    pub frac_at_half: f64,
    /// 20 equal bins over `(0, 0.5]`; bin `b` covers `(b/40, (b+1)/40]`.
    pub hist: Vec<u64>,
}

impl BetaRecord {
    pub fn from_samples(epoch: usize, betas: Vec<f64>, agree_count: usize) -> Result<Self> {
        use num_traits::Float;
        if betas.is_empty() {
            return Err(Error::contract(
                "beta statistics over an empty batch",
            ));
        }
        let n = betas.len();
        let mut hist = vec![0u64; 20];
        for &b in &betas {
            // beta in (0, 0.5]: ceil maps (b-1)/40 < x <= b/40 to bin b-1.
            let idx = (Float::ceil(b * 40.0) as usize).clamp(1, 20) - 1;
            hist[idx] += 1;
        }
        let mean = betas.iter().sum::<f64>() / n as f64;
        Ok(BetaRecord {
            epoch,
            betas,
            agree_count,
            mean,
            frac_at_half: agree_count as f64 / n as f64,
            hist,
        })
    }

    /// Folds another record (same epoch, later batch indices) into this one.
    pub fn merge(&mut self, other: &BetaRecord) {
        self.betas.extend_from_slice(&other.betas);
        self.agree_count += other.agree_count;
        let n = self.betas.len();
        self.mean = self.betas.iter().sum::<f64>() / n as f64;
        self.frac_at_half = self.agree_count as f64 / n as f64;
        for (h, o) in self.hist.iter_mut().zip(&other.hist) {
            *h += o;
        }
    }
}

/// Adaptive-weight statistics for a logit batch against a teacher signal.
pub fn beta_stats<T: Real>(
    logits: &Tensor<T>,
    teacher: &TeacherSignal<T>,
    cfg: &LossConfig,
    epoch: usize,
) -> Result<BetaRecord> {
    if logits.rank() != 2 || logits.shape()[0] == 0 {
        return Err(Error::contract(format!(
            "beta_stats expects a non-empty [N,K] batch, got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if teacher.len() != n || teacher.classes() != k {
        return Err(Error::shapes(
            "beta_stats logits vs teacher",
            logits.shape(),
            teacher.soft().shape(),
        ));
    }
    let t = real::<T>(cfg.temperature);
    let mut probs = vec![T::zero(); k];
    let mut betas = Vec::with_capacity(n);
    let mut agree = 0usize;
    for i in 0..n {
        numeric::softmax_temp_row(logits.row(i)?, t, &mut probs)?;
        let b = beta_weight(&probs, teacher.hard()[i], cfg.prob_clamp);
        betas.push(b.to_f64().unwrap_or(f64::NAN));
        if numeric::argmax(&probs) == teacher.hard()[i] {
            agree += 1;
        }
    }
    BetaRecord::from_samples(epoch, betas, agree)
}
