//! `w2s`: config-driven distillation experiments.
//!
//! Each training subcommand binds to the experiment kinds it may run and
//! takes the same global flags. Exit codes: 0 on success, 2 for config
//! problems (including CLI misuse), 3 when a training run aborted.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use w2s_lab::checkpoint::load_checkpoint;
use w2s_lab::dataset::data_root;
use w2s_lab::error::{LabError, Result};
use w2s_lab::experiment::{run_experiment, ExperimentConfig, ExperimentRun, Kind};
use w2s_lab::report::{emit_report, load_summary};

#[derive(Parser)]
#[command(
    name = "w2s",
    version,
    about = "Weak-to-strong distillation experiments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this one seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory; defaults to the config's out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dataset root; overrides the W2S_DATA_DIR environment variable.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the strong model on plain labels (kind: scratch).
    Train,
    /// Distill a weak teacher into the strong student (kind: w2s_gt, w2s_nogt).
    Distill,
    /// Distill under injected label noise, evaluated on clean labels (kind: noisy).
    Noise,
    /// Distill an embedder and score nearest-centroid episodes (kind: fewshot).
    Fewshot,
    /// Evaluate a checkpoint on the config's test split and print metrics JSON.
    Eval {
        /// Checkpoint file written by a training subcommand.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Rebuild results.csv and beta_hist.csv from summary.json in --out.
    Report,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let root = data_root(cli.data_dir.as_deref());
    match &cli.cmd {
        Cmd::Train => run_kinds(&cli, &root, &[Kind::Scratch]),
        Cmd::Distill => run_kinds(&cli, &root, &[Kind::W2sGt, Kind::W2sNogt]),
        Cmd::Noise => run_kinds(&cli, &root, &[Kind::Noisy]),
        Cmd::Fewshot => run_kinds(&cli, &root, &[Kind::Fewshot]),
        Cmd::Eval { checkpoint } => eval_checkpoint(&cli, &root, checkpoint),
        Cmd::Report => rebuild_report(&cli),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LabError::config("this subcommand needs --config <PATH>"))?;
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| LabError::parse(path, e.column().saturating_sub(1), e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

fn run_kinds(cli: &Cli, root: &Path, allowed: &[Kind]) -> Result<()> {
    let cfg = load_config(cli)?;
    if !allowed.contains(&cfg.kind) {
        let names: Vec<&str> = allowed.iter().map(|k| k.name()).collect();
        return Err(LabError::config(format!(
            "config kind {} does not belong to this subcommand (expected {})",
            cfg.kind.name(),
            names.join(" or ")
        )));
    }
    let out = out_dir(cli, &cfg);
    let run = run_experiment(&cfg, &out, root)?;
    describe(&run);
    Ok(())
}

fn describe(run: &ExperimentRun) {
    for r in &run.summary.runs {
        let top1: Vec<f64> = r.seeds.iter().map(|s| s.top1).collect();
        let mean = w2s_lab::report::mean_std(&top1).0;
        println!("{}: top1 {:.4} over {} seed(s)", r.run_id, mean, r.seeds.len());
    }
    if let Some(d) = run.summary.delta_top1 {
        println!("delta_top1 {:+.4}", d);
    }
    println!("wrote {}", run.paths.summary.display());
}

fn eval_checkpoint(cli: &Cli, root: &Path, checkpoint: &Path) -> Result<()> {
    let cfg = load_config(cli)?;
    let data = cfg.dataset.load(root)?;
    let ck = load_checkpoint(checkpoint)?;
    let metrics = w2s_core::train::evaluate(&ck.model, &data.test)?;
    let out = serde_json::json!({
        "checkpoint": checkpoint.display().to_string(),
        "epoch": ck.epoch,
        "dataset": data.test_report.name,
        "metrics": metrics,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("plain values"));
    Ok(())
}

fn rebuild_report(cli: &Cli) -> Result<()> {
    let out = match (&cli.out, &cli.config) {
        (Some(out), _) => out.clone(),
        (None, Some(_)) => out_dir(cli, &load_config(cli)?),
        (None, None) => {
            return Err(LabError::config("report needs --out (or --config for its out_dir)"))
        }
    };
    let summary = load_summary(&out.join("summary.json"))?;
    let paths = emit_report(&out, &summary)?;
    println!("wrote {}", paths.results.display());
    if let Some(b) = &paths.beta_hist {
        println!("wrote {}", b.display());
    }
    Ok(())
}
