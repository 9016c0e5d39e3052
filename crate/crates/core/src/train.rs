//! Epoch-driven training loop tying models, batching, objectives, and the
//! optimizer together, with metric evaluation and abort-on-divergence.
//!
//! The loop is deterministic end to end: batch order comes from
//! `(seed, epoch)`, weight init from the model's own seed, and any teacher
//! is recomputed per batch from its frozen weights (the teacher never owns
//! tape gradients, so it cannot drift).

use crate::data::{make_batches, Dataset};
use crate::error::Error;
use crate::loss::{beta_stats, total_objective, BetaRecord, LossConfig, Method, TeacherSignal};
use crate::model::Model;
use crate::numeric::{self, argmax, Real};
use crate::optim::{sgd_step, OptimConfig, SgdState};
use crate::tape::Tape;
use crate::Result;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

/// Rows evaluated per forward chunk. Keeps peak memory flat on large splits.
const EVAL_CHUNK: usize = 512;

/// Everything the loop needs beyond the models and data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainSettings {
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub augment: bool,
    /// Leading epochs trained on plain label cross-entropy (weight 1) before
    /// the configured objective takes over.
    #[cfg_attr(feature = "serde", serde(default))]
    pub warmup_epochs: usize,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optim.validate()?;
        if self.warmup_epochs > self.optim.epochs {
            return Err(Error::config(format!(
                "warmup_epochs {} exceeds the run's {} epochs",
                self.warmup_epochs, self.optim.epochs
            )));
        }
        Ok(())
    }
}

/// Accuracy and loss over one split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
    /// Mean label cross-entropy at temperature 1.
    pub mean_loss: f64,
}

/// One epoch of the log.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean objective over the epoch's batches.
    pub train_loss: f64,
    pub eval: Metrics,
    /// Adaptive-weight statistics over the eval split, present only for the
    /// adaptive method once warmup has ended.
    pub beta: Option<BetaRecord>,
}

/// Completed-epoch log of a run (possibly truncated by a failure).
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
}

impl TrainReport {
    /// Metrics of the last completed epoch.
    pub fn final_metrics(&self) -> Option<&Metrics> {
        self.epochs.last().map(|e| &e.eval)
    }
}

/// A run that did not finish: the triggering error, the epoch it happened
/// in, and everything that completed before it.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub epoch: usize,
    pub completed: TrainReport,
}

impl core::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "training aborted in epoch {}: {}", self.epoch, self.error)
    }
}

fn check_pairing<T: Real>(model: &Model<T>, ds: &Dataset<T>, role: &str) -> Result<()> {
    ds.validate()?;
    if ds.sample_shape() != model.config().input_shape.as_slice() {
        return Err(Error::config(format!(
            "{role} data samples are {:?}, model expects {:?}",
            ds.sample_shape(),
            model.config().input_shape
        )));
    }
    if ds.num_classes != model.config().num_classes {
        return Err(Error::config(format!(
            "{role} data has {} classes, model emits {}",
            ds.num_classes,
            model.config().num_classes
        )));
    }
    Ok(())
}

/// Plain label cross-entropy with everything else carried over; used for
/// warmup epochs.
fn warmup_config(cfg: &LossConfig) -> LossConfig {
    LossConfig {
        method: Method::Ce,
        gt_weight: 1.0,
        distill_weight: 0.0,
        temperature: 1.0,
        ..cfg.clone()
    }
}

/// Trains `model` in place. The teacher, when given, supplies per-batch
/// soft and hard targets from its frozen weights. The caller owns the
/// optimizer state (usually `SgdState::new(&model)`), so momentum survives
/// the call for checkpointing even when the run aborts. Returns the epoch
/// log, or a [`TrainFailure`] carrying whatever completed when
/// configuration, shape, or numeric trouble stopped the run.
pub fn train<T: Real>(
    model: &mut Model<T>,
    train_ds: &Dataset<T>,
    eval_ds: &Dataset<T>,
    teacher: Option<&Model<T>>,
    settings: &TrainSettings,
    state: &mut SgdState<T>,
) -> core::result::Result<TrainReport, Box<TrainFailure>> {
    let mut report = TrainReport::default();
    let fail = |error: Error, epoch: usize, completed: TrainReport| {
        Err(Box::new(TrainFailure {
            error,
            epoch,
            completed,
        }))
    };

    if let Err(e) = settings.validate() {
        return fail(e, 0, report);
    }
    if let Err(e) = check_pairing(model, train_ds, "train") {
        return fail(e, 0, report);
    }
    if let Err(e) = check_pairing(model, eval_ds, "eval") {
        return fail(e, 0, report);
    }
    if let Some(t) = teacher {
        if let Err(e) = check_pairing(t, train_ds, "train") {
            return fail(
                Error::config(format!("teacher mismatch: {e}")),
                0,
                report,
            );
        }
    }
    let needs_teacher = settings.loss.method != Method::Ce
        || (settings.loss.distill_weight > 0.0 && teacher.is_some());
    if settings.loss.method != Method::Ce
        && settings.loss.distill_weight > 0.0
        && teacher.is_none()
        && settings.warmup_epochs < settings.optim.epochs
    {
        return fail(
            Error::config(format!(
                "method {:?} requires a teacher model",
                settings.loss.method
            )),
            0,
            report,
        );
    }

    if state.len() != model.params().len() {
        return fail(
            Error::config(format!(
                "optimizer state has {} buffers for {} parameters",
                state.len(),
                model.params().len()
            )),
            0,
            report,
        );
    }
    for epoch in 0..settings.optim.epochs {
        let warming = epoch < settings.warmup_epochs;
        let cfg = if warming {
            warmup_config(&settings.loss)
        } else {
            settings.loss.clone()
        };
        let lr = match settings.optim.lr_at(epoch) {
            Ok(lr) => lr,
            Err(e) => return fail(e, epoch, report),
        };
        let batches = match make_batches(
            train_ds,
            settings.optim.batch_size,
            settings.seed,
            epoch,
            settings.augment,
        ) {
            Ok(b) => b,
            Err(e) => return fail(e, epoch, report),
        };

        let mut loss_sum = 0.0f64;
        let mut sample_count = 0usize;
        for batch in &batches {
            let step = (|| -> Result<f64> {
                let signal = match teacher {
                    Some(t) if needs_teacher && !warming => {
                        Some(TeacherSignal::from_logits(&t.logits(&batch.images)?)?)
                    }
                    _ => None,
                };
                let mut tape = Tape::new();
                let params = model.bind(&mut tape, true);
                let input = tape.leaf(batch.images.clone());
                let (logits, _) = model.forward_on(&mut tape, &params, input)?;
                let loss = total_objective(
                    &mut tape,
                    logits,
                    signal.as_ref(),
                    Some(&batch.labels),
                    &cfg,
                )?;
                let value = tape.value(loss).item()?.to_f64().unwrap_or(f64::NAN);
                if !value.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite objective {value} (epoch {epoch})"
                    )));
                }
                tape.backward(loss)?;
                let mut grads: Vec<&[T]> = Vec::with_capacity(params.len());
                for (v, p) in params.iter().zip(model.params()) {
                    match tape.grad(*v) {
                        Some(g) => grads.push(g),
                        None => {
                            return Err(Error::contract(format!(
                                "parameter {} received no gradient",
                                p.name
                            )))
                        }
                    }
                }
                sgd_step(model.params_mut(), &grads, state, lr, &settings.optim)?;
                Ok(value)
            })();
            match step {
                Ok(value) => {
                    loss_sum += value * batch.labels.len() as f64;
                    sample_count += batch.labels.len();
                }
                Err(e) => return fail(e, epoch, report),
            }
        }

        let want_beta = cfg.method == Method::AdaptConf && teacher.is_some();
        let beta_ctx = if want_beta {
            teacher.map(|t| (t, &cfg, epoch))
        } else {
            None
        };
        let (eval, beta) = match eval_pass(model, eval_ds, beta_ctx) {
            Ok(v) => v,
            Err(e) => return fail(e, epoch, report),
        };
        report.epochs.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / sample_count.max(1) as f64,
            eval,
            beta,
        });
    }
    Ok(report)
}

/// Top-1/top-5 accuracy and mean label cross-entropy over a split,
/// evaluated in fixed-size chunks.
pub fn evaluate<T: Real>(model: &Model<T>, ds: &Dataset<T>) -> Result<Metrics> {
    eval_pass(model, ds, None).map(|(m, _)| m)
}

fn eval_pass<T: Real>(
    model: &Model<T>,
    ds: &Dataset<T>,
    beta_ctx: Option<(&Model<T>, &LossConfig, usize)>,
) -> Result<(Metrics, Option<BetaRecord>)> {
    check_pairing(model, ds, "eval")?;
    let n = ds.len();
    let k = ds.num_classes;
    let mut top1 = 0usize;
    let mut top5 = 0usize;
    let mut loss_sum = 0.0f64;
    let mut log_probs = alloc::vec![T::zero(); k];
    let mut merged: Option<BetaRecord> = None;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let images = ds.images.gather_rows(&rows)?;
        let logits = model.logits(&images)?;
        for (j, &row) in rows.iter().enumerate() {
            let z = logits.row(j)?;
            let label = ds.labels[row];
            if argmax(z) == label {
                top1 += 1;
            }
            if numeric::topk_rank(z, label) < 5 {
                top5 += 1;
            }
            numeric::log_softmax_row(z, &mut log_probs)?;
            loss_sum -= log_probs[label].to_f64().unwrap_or(f64::NAN);
        }
        if let Some((teacher, cfg, epoch)) = beta_ctx {
            let signal = TeacherSignal::from_logits(&teacher.logits(&images)?)?;
            let rec = beta_stats(&logits, &signal, cfg, epoch)?;
            match &mut merged {
                Some(m) => m.merge(&rec),
                None => merged = Some(rec),
            }
        }
        start = end;
    }
    Ok((
        Metrics {
            n,
            top1: top1 as f64 / n as f64,
            top5: top5 as f64 / n as f64,
            mean_loss: loss_sum / n as f64,
        },
        merged,
    ))
}
