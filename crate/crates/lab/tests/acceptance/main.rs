//! Acceptance suite: the numbered guarantees this lab makes, one test per
//! criterion, each printing a single `PASS criterion N` line with the
//! measured numbers once its assertions hold. The exact-arithmetic criteria
//! (1-4, 8-10) are checked against independent straight-line references in
//! [`oracle`]; the behavioural ones (5-7) run the real distillation
//! pipelines on clustered synthetic data at desk scale and gate on the
//! directional outcomes.

mod oracle;

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use w2s_core::data::{
    inject_noise, sample_episode, synth_blobs, Dataset, EpisodeSpec, NoiseKind, NoiseSpec,
};
use w2s_core::gradcheck::grad_check;
use w2s_core::loss::{
    adaptconf_loss, augconf_loss, beta_weight, beta_weights, ce_rows_hard, confidence_blend,
    distill_ce_loss, mean_of, self_ce_loss, softmax_t, total_objective, LossConfig, Method,
    TeacherSignal, TeacherTarget,
};
use w2s_core::model::{Family, ModelConfig};
use w2s_core::optim::{OptimConfig, Schedule};
use w2s_core::rng::SeededRng;
use w2s_core::tensor::Tensor;
use w2s_core::{Tape, Var};
use w2s_lab::checkpoint::{load_checkpoint, save_checkpoint};
use w2s_lab::cifar::{load_cifar10, load_cifar100, Split};
use w2s_lab::dataset::DatasetSpec;
use w2s_lab::experiment::{run_experiment, ExperimentConfig, Kind};
use w2s_lab::fewshot::{eval_episodes, identity_embedder};
use w2s_lab::idx::{load_idx_pair, read_idx_images, read_idx_labels};
use w2s_lab::report::{mean_ci95, mean_std, RunResult, Summary};

const EPS: f64 = 1e-12;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

fn rand_tensor(rng: &mut SeededRng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.range(-scale, scale)).collect();
    Tensor::new(data, shape).unwrap()
}

// ── criterion 1: gradients of every objective ────────────────────────────

/// Two-layer MLP on hand-held weight tensors: `relu(x W1 + b1) W2 + b2`.
fn mlp_forward(tape: &mut Tape<f64>, v: &[Var]) -> w2s_core::Result<Var> {
    let h = tape.matmul(v[0], v[1])?;
    let h = tape.bias_add(h, v[2])?;
    let h = tape.relu(h)?;
    let z = tape.matmul(h, v[3])?;
    tape.bias_add(z, v[4])
}

/// Base-point hidden pre-activations and logits, values only.
fn mlp_values(inputs: &[Tensor<f64>]) -> (Tensor<f64>, Tensor<f64>) {
    let mut tape = Tape::new();
    let v: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let h = tape.matmul(v[0], v[1]).unwrap();
    let pre = tape.bias_add(h, v[2]).unwrap();
    let r = tape.relu(pre).unwrap();
    let z = tape.matmul(r, v[3]).unwrap();
    let logits = tape.bias_add(z, v[4]).unwrap();
    (tape.value(pre).clone(), tape.value(logits).clone())
}

/// Scalar loss value plus the analytic gradient of every input.
fn eval_with_grads<F>(mut f: F, inputs: &[Tensor<f64>]) -> (f64, Vec<Vec<f64>>)
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> w2s_core::Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    let value = tape.value(loss).item().unwrap();
    let grads = vars
        .iter()
        .map(|&v| tape.grad(v).unwrap().to_vec())
        .collect();
    (value, grads)
}

#[test]
fn criterion_01_gradient_suite() {
    let started = Instant::now();
    let mut rng = SeededRng::new(41);
    let inputs = [
        rand_tensor(&mut rng, &[4, 6], 1.5),  // x
        rand_tensor(&mut rng, &[6, 7], 0.8),  // w1
        rand_tensor(&mut rng, &[7], 0.5),     // b1
        rand_tensor(&mut rng, &[7, 5], 0.8),  // w2
        rand_tensor(&mut rng, &[5], 0.5),     // b2
    ];
    let teacher_logits = rand_tensor(&mut rng, &[4, 5], 2.0);
    let teacher = TeacherSignal::from_logits(&teacher_logits).unwrap();
    let labels = [0usize, 3, 2, 4];

    // The self labels and the adaptive weights are argmax-derived data, and
    // relu has a kink at zero: all are discontinuities a central difference
    // must not straddle. Verify the base point keeps a margin that the
    // 1e-5 probes cannot cross.
    let (pre, base_logits) = mlp_values(&inputs);
    let min_pre = pre.data().iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    assert!(min_pre > 1e-3, "relu pre-activation {min_pre:.2e} too close to the kink");
    for i in 0..4 {
        let row = base_logits.row(i).unwrap();
        let mut sorted = row.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!(sorted[0] - sorted[1] > 1e-3, "logit row {i} nearly tied");
    }

    let base = LossConfig {
        temperature: 2.0,
        distill_weight: 1.0,
        teacher_target: TeacherTarget::Soft,
        ..LossConfig::default()
    };
    let cfg_ce = LossConfig { method: Method::Ce, gt_weight: 0.7, ..base.clone() };
    let cfg_kd = LossConfig { method: Method::Kd, temperature: 3.0, gt_weight: 0.5, ..base.clone() };
    let cfg_aug = LossConfig { method: Method::AugConf, alpha: 0.3, gt_weight: 0.25, ..base.clone() };
    let cfg_adapt = LossConfig { method: Method::AdaptConf, gt_weight: 0.4, ..base };

    let direct = |cfg: &LossConfig| -> f64 {
        grad_check(
            |tape, vars| {
                let logits = mlp_forward(tape, vars)?;
                total_objective(tape, logits, Some(&teacher), Some(&labels[..]), cfg)
            },
            &inputs,
            1e-5,
        )
        .unwrap()
    };
    let worst_ce = direct(&cfg_ce);
    let worst_kd = direct(&cfg_kd);
    let worst_aug = direct(&cfg_aug);

    // The adaptive weights are detached: the trained gradient treats them as
    // constants evaluated at the current point. A central difference that
    // re-derived them at each probe would differentiate a different
    // function, so the numeric side pins them at the base point; the pinned
    // composition is first shown bit-identical (value and every gradient)
    // to the real objective there.
    let betas = beta_weights(
        &base_logits,
        teacher.hard(),
        cfg_adapt.temperature,
        cfg_adapt.prob_clamp,
    )
    .unwrap();
    let pinned = |tape: &mut Tape<f64>, vars: &[Var]| -> w2s_core::Result<Var> {
        let logits = mlp_forward(tape, vars)?;
        let probs = softmax_t(tape, logits, 1.0)?;
        let rows = ce_rows_hard(tape, probs, &labels, cfg_adapt.prob_clamp)?;
        let mean = mean_of(tape, rows)?;
        let gt = tape.scale(mean, cfg_adapt.gt_weight)?;
        let blend = confidence_blend(tape, logits, &teacher, &betas, &cfg_adapt)?;
        let distill = tape.scale(blend, cfg_adapt.distill_weight)?;
        tape.add(gt, distill)
    };
    let (v_real, g_real) = eval_with_grads(
        |tape, vars| {
            let logits = mlp_forward(tape, vars)?;
            total_objective(tape, logits, Some(&teacher), Some(&labels[..]), &cfg_adapt)
        },
        &inputs,
    );
    let (v_pin, g_pin) = eval_with_grads(pinned, &inputs);
    assert_eq!(v_real.to_bits(), v_pin.to_bits(), "pinned-weight value drifted");
    for (ti, (a, b)) in g_real.iter().zip(&g_pin).enumerate() {
        assert_eq!(a.len(), b.len());
        for (ci, (x, y)) in a.iter().zip(b).enumerate() {
            assert_eq!(x.to_bits(), y.to_bits(), "gradient bit drift at tensor {ti} coord {ci}");
        }
    }
    let worst_adapt = grad_check(pinned, &inputs, 1e-5).unwrap();

    let worst = worst_ce.max(worst_kd).max(worst_aug).max(worst_adapt);
    assert!(worst <= 1e-5, "max rel err {worst:.3e} over 1e-5");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 10.0, "gradient suite took {secs:.1} s, budget 10");
    println!(
        "PASS criterion 1: gradient checks ce {worst_ce:.1e} kd {worst_kd:.1e} \
         aug {worst_aug:.1e} adapt {worst_adapt:.1e} (max {worst:.1e} <= 1e-5) in {secs:.2} s"
    );
}

// ── criterion 2: adaptive-weight invariants ──────────────────────────────

#[test]
fn criterion_02_beta_invariants() {
    let started = Instant::now();
    let mut rng = SeededRng::new(42);
    let mut agree = 0usize;
    let mut worst = 0.0f64;
    let trials = 100_000;
    for i in 0..trials {
        let k = 2 + rng.below(11);
        let logits: Vec<f64> = (0..k).map(|_| rng.range(-8.0, 8.0)).collect();
        let probs = oracle::softmax_t(&logits, 1.0);
        // Every tenth case forces agreement so both sides of the boundary
        // condition are exercised.
        let weak = if i % 10 == 0 { oracle::argmax(&probs) } else { rng.below(k) };

        let b = beta_weight(&probs, weak, EPS);
        assert!(b > 0.0 && b <= 0.5, "beta {b} outside (0, 0.5]");
        let same = oracle::argmax(&probs) == weak;
        assert_eq!(
            b == 0.5,
            same,
            "beta {b} vs agreement {same} on row {probs:?} weak {weak}"
        );
        if same {
            agree += 1;
        }
        worst = worst
            .max(rel_err(b, oracle::beta_closed(&probs, weak, EPS)))
            .max(rel_err(b, oracle::beta_from_ce(&probs, weak, EPS)));
    }
    assert!(worst <= 1e-6, "worst rel err {worst:.3e} over 1e-6");
    assert!(agree >= trials / 10 && agree < trials, "degenerate draw mix: {agree} agreements");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "beta suite took {secs:.1} s, budget 5");
    println!(
        "PASS criterion 2: {trials} weights in (0, 0.5], 0.5 iff agreement \
         ({agree} agree), closed vs CE form rel err {worst:.1e} <= 1e-6, in {secs:.2} s"
    );
}

// ── criterion 3: batched losses vs the scalar reference ──────────────────

fn eval_loss<F>(logits: &Tensor<f64>, f: F) -> f64
where
    F: FnOnce(&mut Tape<f64>, Var) -> w2s_core::Result<Var>,
{
    let mut tape = Tape::new();
    let lv = tape.leaf(logits.clone());
    let loss = f(&mut tape, lv).unwrap();
    tape.value(loss).item().unwrap()
}

#[test]
fn criterion_03_scalar_oracle_equivalence() {
    let mut rng = SeededRng::new(43);
    let temperatures = [0.5, 1.0, 2.0, 4.0];
    let mut worst_aug = 0.0f64;
    let mut worst_adapt = 0.0f64;
    for case in 0..1000 {
        let n = 1 + rng.below(6);
        let k = 2 + rng.below(9);
        let t = temperatures[rng.below(4)];
        let alpha = rng.range(0.0, 1.0);
        let soft = case % 2 == 0;

        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.range(-4.0, 4.0)).collect()).collect();
        let teacher_rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.range(0.05, 1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();

        let logits = Tensor::new(rows.concat(), [n, k]).unwrap();
        let teacher =
            TeacherSignal::from_probs(Tensor::new(teacher_rows.concat(), [n, k]).unwrap()).unwrap();
        let target = if soft { TeacherTarget::Soft } else { TeacherTarget::Hard };
        let cfg_aug = LossConfig {
            method: Method::AugConf,
            alpha,
            temperature: t,
            teacher_target: target,
            ..LossConfig::default()
        };
        let cfg_adapt = LossConfig { method: Method::AdaptConf, ..cfg_aug.clone() };
        let engine_aug = eval_loss(&logits, |tape, lv| augconf_loss(tape, lv, &teacher, &cfg_aug));
        let engine_adapt =
            eval_loss(&logits, |tape, lv| adaptconf_loss(tape, lv, &teacher, &cfg_adapt));

        let weak_hard: Vec<usize> = teacher_rows.iter().map(|r| oracle::argmax(r)).collect();
        let targets: Vec<oracle::WeakTarget<'_>> = if soft {
            teacher_rows.iter().map(|r| oracle::WeakTarget::Soft(r)).collect()
        } else {
            weak_hard.iter().map(|&l| oracle::WeakTarget::Hard(l)).collect()
        };
        worst_aug = worst_aug.max(rel_err(
            engine_aug,
            oracle::augconf(&rows, &targets, alpha, t, EPS),
        ));
        worst_adapt = worst_adapt.max(rel_err(
            engine_adapt,
            oracle::adaptconf(&rows, &targets, &weak_hard, t, EPS),
        ));
    }
    assert!(worst_aug <= 1e-6, "fixed blend drifted {worst_aug:.3e} from the reference");
    assert!(worst_adapt <= 1e-6, "adaptive blend drifted {worst_adapt:.3e} from the reference");
    println!(
        "PASS criterion 3: 1000 random cases, engine vs scalar reference rel err \
         fixed {worst_aug:.1e} adaptive {worst_adapt:.1e} (both <= 1e-6)"
    );
}

// ── criterion 4: endpoint and pinned-weight reductions, bitwise ──────────

#[test]
fn criterion_04_structural_reductions() {
    let mut rng = SeededRng::new(44);
    let n = 5;
    let logits = rand_tensor(&mut rng, &[n, 7], 3.0);
    let teacher_logits = rand_tensor(&mut rng, &[n, 7], 3.0);
    let teacher = TeacherSignal::from_logits(&teacher_logits).unwrap();

    let mut checked = 0;
    for t in [1.0, 2.5] {
        for target in [TeacherTarget::Soft, TeacherTarget::Hard] {
            let cfg = |method: Method, alpha: f64| LossConfig {
                method,
                alpha,
                temperature: t,
                teacher_target: target,
                ..LossConfig::default()
            };

            // alpha endpoints collapse to the single-term losses
            let c0 = cfg(Method::AugConf, 0.0);
            let aug0 = eval_loss(&logits, |tp, lv| augconf_loss(tp, lv, &teacher, &c0));
            let weak_only = eval_loss(&logits, |tp, lv| distill_ce_loss(tp, lv, &teacher, &c0));
            assert_eq!(aug0.to_bits(), weak_only.to_bits(), "alpha=0 endpoint at T={t}");

            let c1 = cfg(Method::AugConf, 1.0);
            let aug1 = eval_loss(&logits, |tp, lv| augconf_loss(tp, lv, &teacher, &c1));
            let self_only = eval_loss(&logits, |tp, lv| self_ce_loss(tp, lv, &c1));
            assert_eq!(aug1.to_bits(), self_only.to_bits(), "alpha=1 endpoint at T={t}");

            // the adaptive loss IS the blend with its naturally computed
            // weights pinned as data
            let ca = cfg(Method::AdaptConf, 0.5);
            let adapt = eval_loss(&logits, |tp, lv| adaptconf_loss(tp, lv, &teacher, &ca));
            let betas = beta_weights(&logits, teacher.hard(), t, ca.prob_clamp).unwrap();
            let pinned = eval_loss(&logits, |tp, lv| {
                confidence_blend(tp, lv, &teacher, &betas, &ca)
            });
            assert_eq!(adapt.to_bits(), pinned.to_bits(), "natural-weight pin at T={t}");

            // pinning every weight to one alpha reproduces the fixed blend
            let c_mid = cfg(Method::AugConf, 0.37);
            let aug_mid = eval_loss(&logits, |tp, lv| augconf_loss(tp, lv, &teacher, &c_mid));
            let uniform = vec![0.37; n];
            let pinned_mid = eval_loss(&logits, |tp, lv| {
                confidence_blend(tp, lv, &teacher, &uniform, &ca)
            });
            assert_eq!(aug_mid.to_bits(), pinned_mid.to_bits(), "uniform pin at T={t}");
            checked += 4;
        }
    }
    println!(
        "PASS criterion 4: {checked} structural reductions bitwise equal \
         (alpha endpoints, natural and uniform weight pins; soft and hard targets)"
    );
}

// ── criteria 5-7: the trained regimes (shared runs) ──────────────────────

struct Trained {
    summary: Summary,
    secs: f64,
}

/// The weak/strong pair both trained regimes share: a 1x32 MLP teacher
/// against a 2x256 student on 10-class Gaussian clusters. The two regimes
/// starve the teacher differently: the label-free run caps it at 10% of the
/// training data (an under-informed supervisor with headroom above it),
/// while the with-label run gives the weak architecture the full set, the
/// conventional distillation setup its baseline comparison expects.
fn blob_pair_config(kind: Kind, temperature: f64, teacher_fraction: f64) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        dataset: DatasetSpec::Synth {
            classes: 10,
            per_class: 200,
            eval_per_class: 100,
            shape: vec![64],
            spread: 0.3,
            seed: 11,
        },
        strong: ModelConfig {
            family: Family::Mlp { hidden: vec![256, 256] },
            input_shape: vec![64],
            num_classes: 10,
        },
        weak: Some(ModelConfig {
            family: Family::Mlp { hidden: vec![32] },
            input_shape: vec![64],
            num_classes: 10,
        }),
        loss: LossConfig {
            method: Method::AdaptConf,
            temperature,
            ..LossConfig::default()
        },
        optim: OptimConfig {
            lr_max: 0.1,
            lr_min: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: Schedule::Cosine,
            epochs: 24,
            batch_size: 64,
        },
        seeds: vec![0, 1, 2],
        out_dir: String::from("runs"),
        teacher_fraction,
        noise: None,
        episodes: None,
        augment: false,
        warmup_epochs: 0,
    }
}

fn train_pair(cfg: &ExperimentConfig) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let run = run_experiment(cfg, dir.path(), Path::new(".")).unwrap();
    Trained { summary: run.summary, secs: started.elapsed().as_secs_f64() }
}

fn nogt_run() -> &'static Trained {
    static NOGT: OnceLock<Trained> = OnceLock::new();
    NOGT.get_or_init(|| train_pair(&blob_pair_config(Kind::W2sNogt, 2.0, 0.1)))
}

fn withgt_run() -> &'static Trained {
    static WITHGT: OnceLock<Trained> = OnceLock::new();
    WITHGT.get_or_init(|| train_pair(&blob_pair_config(Kind::W2sGt, 3.0, 1.0)))
}

fn run_by_id<'a>(s: &'a Summary, id: &str) -> &'a RunResult {
    s.runs
        .iter()
        .find(|r| r.run_id == id)
        .unwrap_or_else(|| panic!("summary has no run {id}"))
}

fn mean_top1(r: &RunResult) -> f64 {
    let xs: Vec<f64> = r.seeds.iter().map(|s| s.top1).collect();
    mean_std(&xs).0
}

#[test]
fn criterion_05_label_free_student_beats_teacher() {
    let run = nogt_run();
    let teacher = mean_top1(run_by_id(&run.summary, "w2s_nogt.teacher"));
    let student = mean_top1(run_by_id(&run.summary, "w2s_nogt.student"));
    let delta = run.summary.delta_top1.expect("label-free regime reports a delta");
    assert!((delta - (student - teacher)).abs() < 1e-12);
    assert!(
        delta >= 0.010,
        "student {student:.4} vs teacher {teacher:.4}: delta {delta:+.4} under the +0.010 gate"
    );
    assert!(run.secs <= 1200.0, "pipeline took {:.0} s, budget 1200", run.secs);
    println!(
        "PASS criterion 5: label-free student {student:.4} over teacher {teacher:.4} \
         (delta {delta:+.4} >= +0.010, 3 seeds) in {:.0} s",
        run.secs
    );
}

#[test]
fn criterion_06_with_labels_never_regresses() {
    let run = withgt_run();
    let student = mean_top1(run_by_id(&run.summary, "w2s_gt.student"));
    let scratch = mean_top1(run_by_id(&run.summary, "w2s_gt.scratch"));
    let delta = run.summary.delta_top1.expect("with-label regime reports a delta");
    assert!((delta - (student - scratch)).abs() < 1e-12);
    assert!(
        delta >= -0.002,
        "student {student:.4} vs scratch {scratch:.4}: delta {delta:+.4} regresses past -0.002"
    );
    println!(
        "PASS criterion 6: with-label student {student:.4} vs scratch {scratch:.4} \
         (delta {delta:+.4} >= -0.002, 3 seeds)"
    );
}

#[test]
fn criterion_07_agreement_fraction_grows() {
    let run = nogt_run();
    let student = run_by_id(&run.summary, "w2s_nogt.student");
    let mut spans = Vec::new();
    for seed in &student.seeds {
        let first = seed.beta.first().expect("adaptive runs log their weights");
        let last = seed.beta.last().unwrap();
        assert!(seed.beta.len() >= 2, "seed {} logged {} epochs", seed.seed, seed.beta.len());
        assert!(
            last.frac_at_half > first.frac_at_half,
            "seed {}: fraction at 0.5 went {:.4} -> {:.4}",
            seed.seed,
            first.frac_at_half,
            last.frac_at_half
        );
        spans.push(format!(
            "seed {} {:.3}->{:.3}",
            seed.seed, first.frac_at_half, last.frac_at_half
        ));
    }
    println!(
        "PASS criterion 7: eval fraction at weight 0.5 rose every seed ({})",
        spans.join(", ")
    );
}

// ── criterion 8: label-noise machinery ───────────────────────────────────

#[test]
fn criterion_08_noise_machinery() {
    let started = Instant::now();
    let ds = synth_blobs::<f64>(6, 50, &[8], 0.3, 3).unwrap();

    for ratio in [0.2, 0.4] {
        let spec = NoiseSpec {
            kind: NoiseKind::Symmetric,
            ratio,
            seed: 17,
            flip_map: None,
            allow_original: false,
        };
        let (noisy, report) = inject_noise(&ds, &spec).unwrap();
        let expected = (ratio * ds.len() as f64).floor() as usize;
        assert_eq!(report.selected.len(), expected);
        assert_eq!(report.changes.len(), expected, "every selected row must flip");
        let flipped: HashSet<usize> = report.changes.iter().map(|c| c.index).collect();
        for c in &report.changes {
            assert_ne!(c.to, c.from, "symmetric flip reproduced the original at {}", c.index);
            assert_eq!(noisy.labels[c.index], c.to);
            assert_eq!(ds.labels[c.index], c.from);
        }
        for i in 0..ds.len() {
            if !flipped.contains(&i) {
                assert_eq!(noisy.labels[i], ds.labels[i], "unselected row {i} changed");
            }
        }
    }

    // Cyclic flips on a coarse-labelled fixture: 12 fine classes in 4
    // groups of 3; every flip must be the next member of its own group.
    let n = 240;
    let labels: Vec<usize> = (0..n).map(|i| i % 12).collect();
    let coarse: Vec<usize> = labels.iter().map(|&f| f / 3).collect();
    let images = Tensor::new(vec![0.0; n * 2], [n, 2]).unwrap();
    let grouped = Dataset::new("coarse-fixture", images, labels, Some(coarse), 12).unwrap();
    let spec = NoiseSpec {
        kind: NoiseKind::Asymmetric,
        ratio: 0.4,
        seed: 5,
        flip_map: None,
        allow_original: false,
    };
    let (_, report) = inject_noise(&grouped, &spec).unwrap();
    assert_eq!(report.changes.len(), 96);
    for c in &report.changes {
        assert_eq!(c.to / 3, c.from / 3, "flip {} -> {} left its group", c.from, c.to);
        let successor = (c.from / 3) * 3 + (c.from % 3 + 1) % 3;
        assert_eq!(c.to, successor, "flip is not the cyclic successor");
    }

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "noise suite took {secs:.1} s, budget 5");
    println!(
        "PASS criterion 8: floor(rN) symmetric flips never reproduce originals \
         (r 0.2/0.4), cyclic flips stay inside their coarse group, in {secs:.2} s"
    );
}

// ── criterion 9: episodic protocol ───────────────────────────────────────

#[test]
fn criterion_09_fewshot_protocol() {
    let ds = synth_blobs::<f64>(8, 40, &[16], 0.2, 9).unwrap();
    let mut episodes = 0;
    for (k_shot, q_query) in [(1, 5), (5, 5)] {
        let spec = EpisodeSpec { n_way: 5, k_shot, q_query, episode_count: 800, seed: 77 };
        for e in 0..spec.episode_count {
            let ep = sample_episode(&ds, &spec, e).unwrap();
            assert_eq!(ep.support.images.shape(), &[5 * k_shot, 16]);
            assert_eq!(ep.query.images.shape(), &[5 * q_query, 16]);
            assert_eq!(ep.classes.iter().collect::<HashSet<_>>().len(), 5);
            for slot in 0..5 {
                assert_eq!(ep.support.labels.iter().filter(|&&l| l == slot).count(), k_shot);
                assert_eq!(ep.query.labels.iter().filter(|&&l| l == slot).count(), q_query);
            }
            // slot labels must trace back to the episode's classes in the
            // dataset's own label space
            for (set, len) in [(&ep.support, 5 * k_shot), (&ep.query, 5 * q_query)] {
                assert_eq!(set.source_indices.len(), len);
                for (i, &src) in set.source_indices.iter().enumerate() {
                    assert_eq!(ds.labels[src], ep.classes[set.labels[i]]);
                }
            }
            let sup: HashSet<usize> = ep.support.source_indices.iter().copied().collect();
            let overlap = ep.query.source_indices.iter().filter(|i| sup.contains(i)).count();
            assert_eq!(overlap, 0, "support and query share {overlap} samples");
            episodes += 1;
        }
    }

    // interval arithmetic against the closed form
    let (m, ci) = mean_ci95(&[1.0, 0.5]);
    assert_eq!(m, 0.75);
    assert!((ci - 0.49).abs() <= 1e-12, "ci {ci} vs closed-form 0.49");
    let xs: Vec<f64> = (0..40).map(|i| 0.5 + 0.01 * i as f64).collect();
    let (hand_m, hand_ci) = {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        (mean, 1.96 * var.sqrt() / (xs.len() as f64).sqrt())
    };
    let (m40, ci40) = mean_ci95(&xs);
    assert!((m40 - hand_m).abs() <= 1e-12);
    assert!((ci40 - hand_ci).abs() <= 1e-12);

    // fully separated clusters leave the nearest-centroid rule no excuse
    let separable = synth_blobs::<f64>(8, 40, &[16], 0.01, 10).unwrap();
    let spec = EpisodeSpec { n_way: 5, k_shot: 5, q_query: 5, episode_count: 100, seed: 3 };
    let res = eval_episodes(identity_embedder, &separable, &spec).unwrap();
    assert_eq!(res.mean, 1.0, "separable fixture scored {:.4}", res.mean);
    assert_eq!(res.ci95, 0.0);

    println!(
        "PASS criterion 9: {episodes} episodes exact shapes and disjoint \
         support/query, interval matches closed form to 1e-12, separable fixture 100%"
    );
}

// ── criterion 10: determinism and binary formats ─────────────────────────

fn tiny_nogt_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: Kind::W2sNogt,
        dataset: DatasetSpec::Synth {
            classes: 4,
            per_class: 40,
            eval_per_class: 25,
            shape: vec![8],
            spread: 0.5,
            seed: 21,
        },
        strong: ModelConfig {
            family: Family::Mlp { hidden: vec![32] },
            input_shape: vec![8],
            num_classes: 4,
        },
        weak: Some(ModelConfig {
            family: Family::Mlp { hidden: vec![8] },
            input_shape: vec![8],
            num_classes: 4,
        }),
        loss: LossConfig {
            method: Method::AdaptConf,
            temperature: 2.0,
            ..LossConfig::default()
        },
        optim: OptimConfig {
            lr_max: 0.05,
            lr_min: 1e-3,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: Schedule::Cosine,
            epochs: 4,
            batch_size: 32,
        },
        seeds: vec![0, 1, 2],
        out_dir: String::from("runs"),
        teacher_fraction: 0.5,
        noise: None,
        episodes: None,
        augment: false,
        warmup_epochs: 0,
    }
}

#[test]
fn criterion_10_determinism_and_formats() {
    // identical config + seeds, twice, byte for byte
    let cfg = tiny_nogt_config();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir_a.path(), Path::new(".")).unwrap();
    run_experiment(&cfg, dir_b.path(), Path::new(".")).unwrap();
    let results_a = std::fs::read(dir_a.path().join("results.csv")).unwrap();
    let results_b = std::fs::read(dir_b.path().join("results.csv")).unwrap();
    assert_eq!(results_a, results_b, "results.csv differs between identical runs");
    let beta_a = std::fs::read(dir_a.path().join("beta_hist.csv")).unwrap();
    let beta_b = std::fs::read(dir_b.path().join("beta_hist.csv")).unwrap();
    assert_eq!(beta_a, beta_b, "beta_hist.csv differs between identical runs");

    // checkpoint load -> save reproduces the file exactly
    let ck_path = dir_a.path().join("checkpoints").join("student-seed0.w2sc");
    let original = std::fs::read(&ck_path).unwrap();
    let ck = load_checkpoint(&ck_path).unwrap();
    let resaved = dir_b.path().join("resaved.w2sc");
    save_checkpoint(&resaved, &ck.model, &ck.sgd_state().unwrap(), &ck.optim, ck.epoch, ck.seed)
        .unwrap();
    assert_eq!(original, std::fs::read(&resaved).unwrap(), "checkpoint roundtrip drifted");

    // golden image/label pair
    let dir = tempfile::tempdir().unwrap();
    let mut img = vec![0u8, 0, 8, 3];
    for dim in [2u32, 2, 2] {
        img.extend_from_slice(&dim.to_be_bytes());
    }
    img.extend_from_slice(&[0, 51, 102, 153, 204, 255, 0, 128]);
    let mut lbl = vec![0u8, 0, 8, 1];
    lbl.extend_from_slice(&2u32.to_be_bytes());
    lbl.extend_from_slice(&[1, 0]);
    let ip = dir.path().join("golden-images");
    let lp = dir.path().join("golden-labels");
    std::fs::write(&ip, &img).unwrap();
    std::fs::write(&lp, &lbl).unwrap();
    let pair = load_idx_pair(&ip, &lp, "golden").unwrap();
    assert_eq!(pair.images.shape(), &[2, 1, 2, 2]);
    assert_eq!(pair.images.data()[0], 0.0);
    assert_eq!(pair.images.data()[1], 51.0 / 255.0);
    assert_eq!(pair.images.data()[5], 1.0);
    assert_eq!(pair.images.data()[7], 128.0 / 255.0);
    assert_eq!(pair.labels, vec![1, 0]);

    // truncation and bad magic must be loud
    let trunc = dir.path().join("trunc-images");
    std::fs::write(&trunc, &img[..img.len() - 1]).unwrap();
    assert_eq!(read_idx_images(&trunc).unwrap_err().exit_code(), 2);
    let mut bad = img.clone();
    bad[2] = 9;
    let badp = dir.path().join("bad-magic");
    std::fs::write(&badp, &bad).unwrap();
    assert_eq!(read_idx_images(&badp).unwrap_err().exit_code(), 2);
    let mut lbl_long = lbl.clone();
    lbl_long.push(3);
    let llp = dir.path().join("trailing-labels");
    std::fs::write(&llp, &lbl_long).unwrap();
    assert_eq!(read_idx_labels(&llp).unwrap_err().exit_code(), 2);

    // 10-class batches: one record per train file, two in the test file
    let c10 = tempfile::tempdir().unwrap();
    let record10 = |label: u8, fill: u8| {
        let mut v = vec![label];
        v.extend(std::iter::repeat_n(fill, 3072));
        v
    };
    for i in 1..=5u8 {
        std::fs::write(
            c10.path().join(format!("data_batch_{i}.bin")),
            record10(i - 1, i * 10),
        )
        .unwrap();
    }
    std::fs::write(
        c10.path().join("test_batch.bin"),
        [record10(7, 1), record10(3, 2)].concat(),
    )
    .unwrap();
    let train = load_cifar10(c10.path(), Split::Train).unwrap();
    assert_eq!(train.images.shape(), &[5, 3, 32, 32]);
    assert_eq!(train.labels, vec![0, 1, 2, 3, 4]);
    assert_eq!(train.images.data()[0], 10.0 / 255.0);
    let test = load_cifar10(c10.path(), Split::Test).unwrap();
    assert_eq!(test.labels, vec![7, 3]);
    std::fs::write(c10.path().join("test_batch.bin"), &record10(1, 1)[..3000]).unwrap();
    assert_eq!(load_cifar10(c10.path(), Split::Test).unwrap_err().exit_code(), 2);
    std::fs::write(c10.path().join("test_batch.bin"), record10(10, 1)).unwrap();
    assert_eq!(load_cifar10(c10.path(), Split::Test).unwrap_err().exit_code(), 2);

    // 100-class records carry a coarse byte before the fine byte
    let c100 = tempfile::tempdir().unwrap();
    let record100 = |coarse: u8, fine: u8, fill: u8| {
        let mut v = vec![coarse, fine];
        v.extend(std::iter::repeat_n(fill, 3072));
        v
    };
    std::fs::write(
        c100.path().join("train.bin"),
        [record100(2, 30, 9), record100(19, 99, 8)].concat(),
    )
    .unwrap();
    let fine = load_cifar100(c100.path(), Split::Train).unwrap();
    assert_eq!(fine.labels, vec![30, 99]);
    assert_eq!(fine.coarse, Some(vec![2, 19]));
    assert_eq!(fine.num_classes, 100);
    std::fs::write(c100.path().join("test.bin"), record100(20, 0, 0)).unwrap();
    assert_eq!(load_cifar100(c100.path(), Split::Test).unwrap_err().exit_code(), 2);

    println!(
        "PASS criterion 10: identical reruns byte-identical (results and weight \
         histograms), checkpoint resave byte-identical, golden image/label and \
         batch fixtures parse with truncation and bad-magic rejection"
    );
}
