//! The five config-driven pipelines behind the CLI.
//!
//! `scratch` trains the strong model on plain labels. `w2s_gt` and `w2s_nogt`
//! first fit a small teacher on a fraction of the training data, then distill
//! it into the strong student with the label term on (`w2s_gt`, compared
//! against a from-scratch reference) or off (`w2s_nogt`, compared against the
//! teacher itself). `noisy` corrupts the training labels first and evaluates
//! everything on the clean test split. `fewshot` distills an embedder on a
//! base class split and scores it with nearest-centroid episodes on held-out
//! novel classes.
//!
//! Every run is a pure function of (config, seed); an aborted run still
//! persists the completed seeds, a partial summary, and an abort checkpoint
//! carrying real momentum.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use w2s_core::data::{inject_noise, split_classes, Dataset, EpisodeSpec, NoiseKind, NoiseSpec};
use w2s_core::loss::{LossConfig, Method};
use w2s_core::model::{Model, ModelConfig};
use w2s_core::optim::SgdState;
use w2s_core::rng::SeededRng;
use w2s_core::train::{train, TrainFailure, TrainReport, TrainSettings};

use crate::checkpoint::save_checkpoint;
use crate::dataset::{DatasetSpec, LoadedData};
use crate::error::{LabError, Result};
use crate::fewshot::{eval_episodes, model_embedder};
use crate::report::{
    emit_report, mean_std, BetaEpoch, EpochPoint, NoiseSummary, ReportPaths, RunResult,
    SeedOutcome, Summary, FORMAT_VERSION,
};

/// Which pipeline a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Scratch,
    W2sGt,
    W2sNogt,
    Noisy,
    Fewshot,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Scratch => "scratch",
            Kind::W2sGt => "w2s_gt",
            Kind::W2sNogt => "w2s_nogt",
            Kind::Noisy => "noisy",
            Kind::Fewshot => "fewshot",
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_out_dir() -> String {
    "runs".to_string()
}

fn default_teacher_fraction() -> f64 {
    0.1
}

/// One experiment, as parsed from a JSON config file.
///
/// `loss.gt_weight` is owned by the regime where the regime defines it:
/// `w2s_gt` forces it to 1 and `w2s_nogt` to 0; the other kinds take it
/// from the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub dataset: DatasetSpec,
    /// The student (and the only model `scratch` trains).
    pub strong: ModelConfig,
    /// The teacher; required by every kind except `scratch`, and must have
    /// fewer parameters than `strong`.
    #[serde(default)]
    pub weak: Option<ModelConfig>,
    #[serde(default)]
    pub loss: LossConfig,
    pub optim: OptimForAll,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Fraction of the training split the teacher sees (`w2s_*` kinds).
    #[serde(default = "default_teacher_fraction")]
    pub teacher_fraction: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub episodes: Option<EpisodeSpec>,
    #[serde(default)]
    pub augment: bool,
    /// Student-side epochs trained on plain label loss before the
    /// distillation objective activates.
    #[serde(default)]
    pub warmup_epochs: usize,
}

/// Alias kept separate so config errors read as config errors.
pub type OptimForAll = w2s_core::optim::OptimConfig;

/// Model-init salts. The scratch reference shares the student's salt on
/// purpose: paired initializations make the Δ comparison less noisy.
const TEACHER_SALT: u64 = 0x7EAC;
const STUDENT_SALT: u64 = 0x57D0;

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Ce => "ce",
        Method::Kd => "kd",
        Method::AugConf => "aug_conf",
        Method::AdaptConf => "adapt_conf",
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LabError::config("seeds must be non-empty"));
        }
        self.strong.validate()?;
        if let Some(weak) = &self.weak {
            weak.validate()?;
        }
        self.dataset.validate()?;
        if !(self.teacher_fraction > 0.0 && self.teacher_fraction <= 1.0) {
            return Err(LabError::config(format!(
                "teacher_fraction must lie in (0, 1], got {}",
                self.teacher_fraction
            )));
        }

        let needs_weak = self.kind != Kind::Scratch;
        match (&self.weak, needs_weak) {
            (None, true) => {
                return Err(LabError::config(format!(
                    "kind {} needs a weak teacher model",
                    self.kind.name()
                )))
            }
            (Some(_), false) => {
                return Err(LabError::config(
                    "scratch trains one model; remove the weak config",
                ))
            }
            _ => {}
        }
        if let Some(weak) = &self.weak {
            let (wp, sp) = (weak.count_params()?, self.strong.count_params()?);
            if wp >= sp {
                return Err(LabError::config(format!(
                    "weak model has {wp} parameters, strong has {sp}; \
                     the teacher must be the smaller model"
                )));
            }
        }

        if self.kind == Kind::Scratch && self.loss.method != Method::Ce {
            return Err(LabError::config(
                "scratch trains on labels alone; loss.method must be \"ce\"",
            ));
        }
        if needs_weak && self.loss.method == Method::Ce {
            return Err(LabError::config(format!(
                "kind {} distills from a teacher; loss.method cannot be \"ce\"",
                self.kind.name()
            )));
        }

        if (self.kind == Kind::Noisy) != self.noise.is_some() {
            return Err(LabError::config(if self.kind == Kind::Noisy {
                "kind noisy needs a noise spec"
            } else {
                "noise is only meaningful for kind noisy"
            }));
        }
        if (self.kind == Kind::Fewshot) != self.episodes.is_some() {
            return Err(LabError::config(if self.kind == Kind::Fewshot {
                "kind fewshot needs an episodes spec"
            } else {
                "episodes are only meaningful for kind fewshot"
            }));
        }
        if let Some(ep) = &self.episodes {
            ep.validate()?;
        }
        if self.kind == Kind::W2sNogt && self.warmup_epochs > 0 {
            return Err(LabError::config(
                "w2s_nogt never sees labels; warmup_epochs must be 0",
            ));
        }
        Ok(())
    }

    /// Plain label training (teachers and scratch references).
    fn ce_settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            loss: LossConfig {
                method: Method::Ce,
                gt_weight: 1.0,
                ..self.loss.clone()
            },
            optim: self.optim.clone(),
            seed,
            augment: self.augment,
            warmup_epochs: 0,
        }
    }

    /// Student training; `gt_weight` is forced where the regime defines it.
    fn student_settings(&self, seed: u64, gt_weight: Option<f64>) -> TrainSettings {
        let mut loss = self.loss.clone();
        if let Some(w) = gt_weight {
            loss.gt_weight = w;
        }
        TrainSettings {
            loss,
            optim: self.optim.clone(),
            seed,
            augment: self.augment,
            warmup_epochs: self.warmup_epochs,
        }
    }
}

/// A finished experiment: the summary plus where its files landed.
#[derive(Debug)]
pub struct ExperimentRun {
    pub summary: Summary,
    pub paths: ReportPaths,
}

/// Runs one experiment end to end and writes `results.csv`, `summary.json`,
/// and (for adaptive runs) `beta_hist.csv` under `out`. On an aborted
/// training run the completed seeds, a `partial` summary, and an abort
/// checkpoint are still written before the error propagates.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    data_root: &Path,
) -> Result<ExperimentRun> {
    cfg.validate()?;
    let started = Instant::now();
    let data = cfg.dataset.load(data_root)?;
    let mut runner = Runner {
        cfg,
        out: out.to_path_buf(),
        runs: Vec::new(),
        noise: None,
        delta: None,
    };
    let outcome = runner.dispatch(&data);
    let summary = Summary {
        format_version: FORMAT_VERSION,
        kind: cfg.kind.name().to_string(),
        config: serde_json::to_value(cfg)
            .map_err(|e| LabError::config(format!("config not serializable: {e}")))?,
        seeds: cfg.seeds.clone(),
        runs: runner.runs,
        delta_top1: runner.delta,
        partial: outcome.is_err(),
        failure: outcome.as_ref().err().map(|e| e.to_string()),
        wall_clock_sec: started.elapsed().as_secs_f64(),
        train_data: data.train_report.clone(),
        test_data: data.test_report.clone(),
        noise: runner.noise,
    };
    let paths = emit_report(out, &summary)?;
    outcome?;
    Ok(ExperimentRun { summary, paths })
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    runs: Vec<RunResult>,
    noise: Option<NoiseSummary>,
    delta: Option<f64>,
}

/// What one `fit` produced; aborts keep the half-trained model and momentum
/// so a checkpoint can still be written.
enum FitOutput {
    Done {
        model: Model<f64>,
        state: SgdState<f64>,
        report: TrainReport,
    },
    Aborted {
        model: Model<f64>,
        state: SgdState<f64>,
        failure: Box<TrainFailure>,
    },
}

fn fit(
    config: &ModelConfig,
    init_seed: u64,
    train_ds: &Dataset<f64>,
    eval_ds: &Dataset<f64>,
    teacher: Option<&Model<f64>>,
    settings: &TrainSettings,
) -> Result<FitOutput> {
    let mut model = Model::build(config, init_seed)?;
    let mut state = SgdState::new(&model);
    match train(&mut model, train_ds, eval_ds, teacher, settings, &mut state) {
        Ok(report) => Ok(FitOutput::Done {
            model,
            state,
            report,
        }),
        Err(failure) => Ok(FitOutput::Aborted {
            model,
            state,
            failure,
        }),
    }
}

fn outcome_from(seed: u64, report: &TrainReport) -> SeedOutcome {
    let last = report.epochs.last();
    let series = report
        .epochs
        .iter()
        .map(|e| EpochPoint {
            epoch: e.epoch,
            lr: e.lr,
            train_loss: e.train_loss,
            top1: e.eval.top1,
            top5: e.eval.top5,
            loss: e.eval.mean_loss,
        })
        .collect();
    let beta: Vec<BetaEpoch> = report
        .epochs
        .iter()
        .filter_map(|e| {
            e.beta.as_ref().map(|b| BetaEpoch {
                epoch: e.epoch,
                n: b.betas.len(),
                mean: b.mean,
                frac_at_half: b.frac_at_half,
                agree_count: b.agree_count,
                hist: b.hist.clone(),
            })
        })
        .collect();
    let last_beta = last.and_then(|e| e.beta.as_ref());
    SeedOutcome {
        seed,
        epoch: last.map(|e| e.epoch).unwrap_or(0),
        top1: last.map(|e| e.eval.top1).unwrap_or(0.0),
        top5: last.map(|e| e.eval.top5),
        loss: last.map(|e| e.eval.mean_loss),
        beta_mean: last_beta.map(|b| b.mean),
        beta_frac_half: last_beta.map(|b| b.frac_at_half),
        ci95: None,
        norm_clamps: None,
        series,
        beta,
    }
}

fn run_mean_top1(run: &RunResult) -> f64 {
    let xs: Vec<f64> = run.seeds.iter().map(|s| s.top1).collect();
    mean_std(&xs).0
}

/// Per-seed data a role trains against. Owned variants let pipelines hand
/// each seed its own subset without cloning the common case.
enum RoleData<'a> {
    Shared(&'a Dataset<f64>),
    PerSeed(Vec<Dataset<f64>>),
}

impl RoleData<'_> {
    fn for_seed(&self, i: usize) -> &Dataset<f64> {
        match self {
            RoleData::Shared(ds) => ds,
            RoleData::PerSeed(v) => &v[i],
        }
    }
}

impl Runner<'_> {
    fn dispatch(&mut self, data: &LoadedData) -> Result<()> {
        match self.cfg.kind {
            Kind::Scratch => self.pipeline_scratch(data),
            Kind::W2sGt => self.pipeline_w2s(data, true),
            Kind::W2sNogt => self.pipeline_w2s(data, false),
            Kind::Noisy => self.pipeline_noisy(data),
            Kind::Fewshot => self.pipeline_fewshot(data),
        }
    }

    fn checkpoint_path(&self, role: &str, seed: u64, aborted: bool) -> Result<PathBuf> {
        let dir = self.out.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        let suffix = if aborted { "-aborted" } else { "" };
        Ok(dir.join(format!("{role}-seed{seed}{suffix}.w2sc")))
    }

    /// Trains `model_cfg` once per seed and pushes the role's `RunResult`.
    /// Returns the trained models (seed order). On abort: saves an abort
    /// checkpoint, records the seeds that did finish, and bubbles the error.
    #[allow(clippy::too_many_arguments)]
    fn train_role(
        &mut self,
        role: &str,
        method: Method,
        split: &str,
        model_cfg: &ModelConfig,
        salt: u64,
        data: &RoleData<'_>,
        eval_ds: &Dataset<f64>,
        teachers: Option<&[Model<f64>]>,
        settings_for: impl Fn(&ExperimentConfig, u64) -> TrainSettings,
    ) -> Result<Vec<Model<f64>>> {
        let run_id = format!("{}.{role}", self.cfg.kind.name());
        let mut outcomes = Vec::new();
        let mut models = Vec::new();
        for (i, &seed) in self.cfg.seeds.iter().enumerate() {
            let settings = settings_for(self.cfg, seed);
            let teacher = teachers.map(|t| &t[i]);
            let fitted = fit(
                model_cfg,
                seed ^ salt,
                data.for_seed(i),
                eval_ds,
                teacher,
                &settings,
            )?;
            match fitted {
                FitOutput::Done {
                    model,
                    state,
                    report,
                } => {
                    let path = self.checkpoint_path(role, seed, false)?;
                    save_checkpoint(&path, &model, &state, &settings.optim, report.epochs.len(), seed)?;
                    outcomes.push(outcome_from(seed, &report));
                    models.push(model);
                }
                FitOutput::Aborted {
                    model,
                    state,
                    failure,
                } => {
                    // Best effort: the run is already failing, so a broken
                    // checkpoint write must not mask the training error.
                    if let Ok(path) = self.checkpoint_path(role, seed, true) {
                        let _ = save_checkpoint(
                            &path,
                            &model,
                            &state,
                            &settings.optim,
                            failure.epoch,
                            seed,
                        );
                    }
                    self.runs.push(RunResult {
                        run_id,
                        kind: self.cfg.kind.name().to_string(),
                        method: method_name(method).to_string(),
                        split: split.to_string(),
                        seeds: outcomes,
                    });
                    return Err(LabError::from(failure));
                }
            }
        }
        self.runs.push(RunResult {
            run_id,
            kind: self.cfg.kind.name().to_string(),
            method: method_name(method).to_string(),
            split: split.to_string(),
            seeds: outcomes,
        });
        Ok(models)
    }

    fn pipeline_scratch(&mut self, data: &LoadedData) -> Result<()> {
        self.train_role(
            "model",
            Method::Ce,
            "test",
            &self.cfg.strong.clone(),
            STUDENT_SALT,
            &RoleData::Shared(&data.train),
            &data.test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;
        Ok(())
    }

    fn pipeline_w2s(&mut self, data: &LoadedData, with_gt: bool) -> Result<()> {
        let weak_cfg = self.cfg.weak.clone().expect("validated");
        let mut teacher_data = Vec::new();
        for &seed in &self.cfg.seeds {
            teacher_data.push(data.train.subset_fraction(self.cfg.teacher_fraction, seed)?);
        }
        let teachers = self.train_role(
            "teacher",
            Method::Ce,
            "test",
            &weak_cfg,
            TEACHER_SALT,
            &RoleData::PerSeed(teacher_data),
            &data.test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;
        let forced = Some(if with_gt { 1.0 } else { 0.0 });
        self.train_role(
            "student",
            self.cfg.loss.method,
            "test",
            &self.cfg.strong.clone(),
            STUDENT_SALT,
            &RoleData::Shared(&data.train),
            &data.test,
            Some(&teachers),
            move |cfg, s| cfg.student_settings(s, forced),
        )?;
        if with_gt {
            self.train_role(
                "scratch",
                Method::Ce,
                "test",
                &self.cfg.strong.clone(),
                STUDENT_SALT,
                &RoleData::Shared(&data.train),
                &data.test,
                None,
                |cfg, s| cfg.ce_settings(s),
            )?;
        }
        let student = run_mean_top1(&self.runs[1]);
        let reference = run_mean_top1(if with_gt { &self.runs[2] } else { &self.runs[0] });
        self.delta = Some(student - reference);
        Ok(())
    }

    fn pipeline_noisy(&mut self, data: &LoadedData) -> Result<()> {
        let spec = self.cfg.noise.clone().expect("validated");
        let (noisy_train, flips) = inject_noise(&data.train, &spec)?;
        self.noise = Some(NoiseSummary {
            kind: match spec.kind {
                NoiseKind::Symmetric => "symmetric".to_string(),
                NoiseKind::Asymmetric => "asymmetric".to_string(),
            },
            ratio: spec.ratio,
            selected: flips.selected.len(),
            changed: flips.changes.len(),
        });
        let weak_cfg = self.cfg.weak.clone().expect("validated");
        let teachers = self.train_role(
            "teacher",
            Method::Ce,
            "test",
            &weak_cfg,
            TEACHER_SALT,
            &RoleData::Shared(&noisy_train),
            &data.test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;
        self.train_role(
            "student",
            self.cfg.loss.method,
            "test",
            &self.cfg.strong.clone(),
            STUDENT_SALT,
            &RoleData::Shared(&noisy_train),
            &data.test,
            Some(&teachers),
            |cfg, s| cfg.student_settings(s, None),
        )?;
        self.train_role(
            "scratch",
            Method::Ce,
            "test",
            &self.cfg.strong.clone(),
            STUDENT_SALT,
            &RoleData::Shared(&noisy_train),
            &data.test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;
        self.delta = Some(run_mean_top1(&self.runs[1]) - run_mean_top1(&self.runs[2]));
        Ok(())
    }

    fn pipeline_fewshot(&mut self, data: &LoadedData) -> Result<()> {
        let episodes = self.cfg.episodes.clone().expect("validated");
        let (base, val, novel) = fewshot_class_lists(data.train.num_classes, episodes.seed)?;
        let lists = [base, val, novel];
        let train_splits = split_classes(&data.train, &lists)?;
        let test_splits = split_classes(&data.test, &lists)?;
        let base_train = &train_splits[0];
        let base_test = &test_splits[0];
        let novel_test = &test_splits[2];
        if episodes.n_way > novel_test.num_classes {
            return Err(LabError::config(format!(
                "n_way {} exceeds the {} novel classes",
                episodes.n_way, novel_test.num_classes
            )));
        }

        // Embedders classify the base split, whatever the config said.
        let base_k = base_train.num_classes;
        let weak_cfg = with_classes(self.cfg.weak.clone().expect("validated"), base_k);
        let strong_cfg = with_classes(self.cfg.strong.clone(), base_k);

        let teachers = self.train_role(
            "teacher",
            Method::Ce,
            "test",
            &weak_cfg,
            TEACHER_SALT,
            &RoleData::Shared(base_train),
            base_test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;
        let distilled = self.train_role(
            "distilled",
            self.cfg.loss.method,
            "episodes",
            &strong_cfg,
            STUDENT_SALT,
            &RoleData::Shared(base_train),
            base_test,
            Some(&teachers),
            |cfg, s| cfg.student_settings(s, None),
        )?;
        let scratch = self.train_role(
            "scratch",
            Method::Ce,
            "episodes",
            &strong_cfg,
            STUDENT_SALT,
            &RoleData::Shared(base_train),
            base_test,
            None,
            |cfg, s| cfg.ce_settings(s),
        )?;

        // Replace the classifier finals with episodic accuracy on the novel
        // classes; the training series stay in the summary.
        for (run_idx, models) in [(1usize, &distilled), (2usize, &scratch)] {
            for (outcome, model) in self.runs[run_idx].seeds.iter_mut().zip(models) {
                let few = eval_episodes(model_embedder(model), novel_test, &episodes)?;
                outcome.top1 = few.mean;
                outcome.top5 = None;
                outcome.loss = None;
                outcome.ci95 = Some(few.ci95);
                outcome.norm_clamps = Some(few.clamped_norms as u64);
            }
        }
        self.delta = Some(run_mean_top1(&self.runs[1]) - run_mean_top1(&self.runs[2]));
        Ok(())
    }
}

fn with_classes(mut cfg: ModelConfig, num_classes: usize) -> ModelConfig {
    cfg.num_classes = num_classes;
    cfg
}

/// Shuffles the class ids with `seed` and cuts base/val/novel splits in the
/// 64/16/20 ratio, each at least two classes. The val split is carved out to
/// keep the protocol's proportions but no pipeline stage trains on it.
pub fn fewshot_class_lists(
    num_classes: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let base = ((num_classes as f64 * 0.64).round() as usize).max(2);
    let val = ((num_classes as f64 * 0.16).round() as usize).max(2);
    if base + val + 2 > num_classes {
        return Err(LabError::config(format!(
            "few-shot needs enough classes for a 64/16/20 split with at \
             least 2 novel classes; {num_classes} is too few"
        )));
    }
    let perm = SeededRng::new(seed).permutation(num_classes);
    Ok((
        perm[..base].to_vec(),
        perm[base..base + val].to_vec(),
        perm[base + val..].to_vec(),
    ))
}
