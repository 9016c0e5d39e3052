//! Experiment outputs: `results.csv`, `beta_hist.csv`, and `summary.json`.
//!
//! The CSV carries only final numbers (one row per seed plus one aggregate
//! row); per-epoch series live in the JSON summary. Floats are printed with
//! the shortest round-trip form, so parsing a cell back gives the original
//! bits and the aggregate row can be recomputed exactly from the seed rows.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::LoadReport;
use crate::error::{LabError, Result};

/// Bumped when the summary layout changes shape.
pub const FORMAT_VERSION: u32 = 1;

/// Column order of `results.csv`.
pub const RESULTS_HEADER: &str =
    "run_id,kind,method,seed,epoch,split,top1,top5,loss,beta_mean,beta_frac_half";

/// Column order of `beta_hist.csv`. Bins partition (0, 0.5] into 20 equal
/// slices; counts are summed over seeds.
pub const BETA_HEADER: &str = "run_id,epoch,bin,lo,hi,count";

/// One evaluation point in a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub loss: f64,
}

/// Per-epoch adaptive-weight statistics, histogram included, raw samples
/// dropped to keep the summary small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEpoch {
    pub epoch: usize,
    pub n: usize,
    pub mean: f64,
    pub frac_at_half: f64,
    pub agree_count: usize,
    pub hist: Vec<u64>,
}

/// Final numbers for one seed of one run, plus its recorded series.
/// `top5` and `loss` are absent where they do not apply (episodic rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub epoch: usize,
    pub top1: f64,
    #[serde(default)]
    pub top5: Option<f64>,
    #[serde(default)]
    pub loss: Option<f64>,
    #[serde(default)]
    pub beta_mean: Option<f64>,
    #[serde(default)]
    pub beta_frac_half: Option<f64>,
    /// Episodic evaluations only: 95% half-width over episode accuracies.
    #[serde(default)]
    pub ci95: Option<f64>,
    /// Episodic evaluations only: norm clamps the cosine scoring needed.
    #[serde(default)]
    pub norm_clamps: Option<u64>,
    #[serde(default)]
    pub series: Vec<EpochPoint>,
    #[serde(default)]
    pub beta: Vec<BetaEpoch>,
}

/// One trained role (teacher, student, scratch reference) across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// `{kind}.{role}`, unique within a summary.
    pub run_id: String,
    pub kind: String,
    pub method: String,
    /// Which data the final numbers describe, e.g. `test` or `episodes`.
    pub split: String,
    pub seeds: Vec<SeedOutcome>,
}

/// Label-noise bookkeeping for runs that corrupt their training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub kind: String,
    pub ratio: f64,
    pub selected: usize,
    pub changed: usize,
}

/// Everything one experiment produced. `partial` marks summaries persisted
/// after an aborted run; completed seeds are still present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    /// Top-1 gain of the headline run over its reference, mean over seeds.
    #[serde(default)]
    pub delta_top1: Option<f64>,
    #[serde(default)]
    pub partial: bool,
    #[serde(default)]
    pub failure: Option<String>,
    pub wall_clock_sec: f64,
    pub train_data: LoadReport,
    pub test_data: LoadReport,
    #[serde(default)]
    pub noise: Option<NoiseSummary>,
}

/// Mean and sample standard deviation (n-1 denominator), taken in the given
/// order. Empty input gives (0, 0); a single sample has deviation 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Mean and 95% normal-approximation half-width `1.96 * std / sqrt(n)`.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let (mean, std) = mean_std(xs);
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    (mean, 1.96 * std / (xs.len() as f64).sqrt())
}

/// Shortest decimal form that parses back to the same bits.
fn fmt(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn mean_opt(xs: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = xs.iter().copied().flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(mean_std(&present).0)
    }
}

/// Renders the final-results table. Each run contributes its seed rows in
/// order, then one `seed=mean` aggregate row recomputed from those rows.
pub fn results_csv(runs: &[RunResult]) -> String {
    let mut out = String::with_capacity(256);
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for run in runs {
        for s in &run.seeds {
            let cells = [
                run.run_id.clone(),
                run.kind.clone(),
                run.method.clone(),
                s.seed.to_string(),
                s.epoch.to_string(),
                run.split.clone(),
                fmt(s.top1),
                fmt_opt(s.top5),
                fmt_opt(s.loss),
                fmt_opt(s.beta_mean),
                fmt_opt(s.beta_frac_half),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        if !run.seeds.is_empty() {
            let top1: Vec<f64> = run.seeds.iter().map(|s| s.top1).collect();
            let epoch = run.seeds.iter().map(|s| s.epoch).max().unwrap_or(0);
            let top5: Vec<_> = run.seeds.iter().map(|s| s.top5).collect();
            let loss: Vec<_> = run.seeds.iter().map(|s| s.loss).collect();
            let bm: Vec<_> = run.seeds.iter().map(|s| s.beta_mean).collect();
            let bf: Vec<_> = run.seeds.iter().map(|s| s.beta_frac_half).collect();
            let cells = [
                run.run_id.clone(),
                run.kind.clone(),
                run.method.clone(),
                "mean".to_string(),
                epoch.to_string(),
                run.split.clone(),
                fmt(mean_std(&top1).0),
                fmt_opt(mean_opt(&top5)),
                fmt_opt(mean_opt(&loss)),
                fmt_opt(mean_opt(&bm)),
                fmt_opt(mean_opt(&bf)),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

/// Renders the adaptive-weight histogram table: per run and epoch, 20 bins
/// over (0, 0.5] with counts summed across seeds. Runs without adaptive
/// statistics contribute nothing.
pub fn beta_hist_csv(runs: &[RunResult]) -> String {
    let mut out = String::with_capacity(256);
    out.push_str(BETA_HEADER);
    out.push('\n');
    for run in runs {
        let epochs = run
            .seeds
            .iter()
            .map(|s| s.beta.len())
            .max()
            .unwrap_or(0);
        for e in 0..epochs {
            let mut merged = [0u64; 20];
            let mut epoch_id = e;
            for s in &run.seeds {
                if let Some(be) = s.beta.get(e) {
                    epoch_id = be.epoch;
                    for (m, &c) in merged.iter_mut().zip(&be.hist) {
                        *m += c;
                    }
                }
            }
            for (b, &count) in merged.iter().enumerate() {
                let lo = b as f64 / 40.0;
                let hi = (b + 1) as f64 / 40.0;
                let cells = [
                    run.run_id.clone(),
                    epoch_id.to_string(),
                    b.to_string(),
                    fmt(lo),
                    fmt(hi),
                    count.to_string(),
                ];
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
    }
    out
}

/// Paths the emitter writes under one output directory.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub results: PathBuf,
    pub beta_hist: Option<PathBuf>,
    pub summary: PathBuf,
}

fn has_beta(runs: &[RunResult]) -> bool {
    runs.iter().any(|r| r.seeds.iter().any(|s| !s.beta.is_empty()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Writes `results.csv`, `summary.json`, and (when any run recorded
/// adaptive statistics) `beta_hist.csv` into `out`, creating it as needed.
/// Rewriting the same summary reproduces the same bytes.
pub fn emit_report(out: &Path, summary: &Summary) -> Result<ReportPaths> {
    std::fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let results = out.join("results.csv");
    write_text(&results, &results_csv(&summary.runs))?;
    let beta_hist = if has_beta(&summary.runs) {
        let p = out.join("beta_hist.csv");
        write_text(&p, &beta_hist_csv(&summary.runs))?;
        Some(p)
    } else {
        None
    };
    let summary_path = out.join("summary.json");
    let mut json = serde_json::to_string_pretty(summary)
        .map_err(|e| LabError::config(format!("summary not serializable: {e}")))?;
    json.push('\n');
    write_text(&summary_path, &json)?;
    Ok(ReportPaths {
        results,
        beta_hist,
        summary: summary_path,
    })
}

/// Reads a summary back; the `report` subcommand rebuilds CSVs from this.
pub fn load_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        LabError::parse(path, e.column().saturating_sub(1), format!("summary: {e}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(seed: u64, top1: f64) -> SeedOutcome {
        SeedOutcome {
            seed,
            epoch: 4,
            top1,
            top5: Some(top1 + 0.01),
            loss: Some(1.0 - top1),
            beta_mean: None,
            beta_frac_half: None,
            ci95: None,
            norm_clamps: None,
            series: Vec::new(),
            beta: Vec::new(),
        }
    }

    fn run(seeds: Vec<SeedOutcome>) -> RunResult {
        RunResult {
            run_id: "w2s_nogt.student".into(),
            kind: "w2s_nogt".into(),
            method: "adapt_conf".into(),
            split: "test".into(),
            seeds,
        }
    }

    #[test]
    fn three_seeds_make_header_plus_four_rows() {
        let csv = results_csv(&[run(vec![
            outcome(0, 0.9),
            outcome(1, 0.92),
            outcome(2, 0.91),
        ])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], RESULTS_HEADER);
        assert!(lines[1].starts_with("w2s_nogt.student,w2s_nogt,adapt_conf,0,4,test,0.9,"));
        assert!(lines[4].contains(",mean,"), "{}", lines[4]);
    }

    #[test]
    fn no_runs_is_header_only() {
        assert_eq!(results_csv(&[]), format!("{RESULTS_HEADER}\n"));
    }

    #[test]
    fn aggregate_recomputes_bitwise_from_seed_cells() {
        // Values chosen so the mean is not exactly representable.
        let csv = results_csv(&[run(vec![
            outcome(0, 0.1),
            outcome(1, 0.2),
            outcome(2, 0.7000000001),
        ])]);
        let lines: Vec<&str> = csv.lines().collect();
        let col = |line: &str, i: usize| line.split(',').nth(i).unwrap().to_string();
        let parsed: Vec<f64> = (1..=3)
            .map(|r| col(lines[r], 6).parse().unwrap())
            .collect();
        let stored: f64 = col(lines[4], 6).parse().unwrap();
        assert_eq!(mean_std(&parsed).0.to_bits(), stored.to_bits());
    }

    #[test]
    fn absent_metrics_are_empty_cells() {
        let mut s = outcome(0, 0.8);
        s.top5 = None;
        s.loss = None;
        let csv = results_csv(&[run(vec![s])]);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with("test,0.8,,,,"), "{line}");
    }

    #[test]
    fn beta_rows_merge_counts_across_seeds() {
        let mut a = outcome(0, 0.9);
        let mut b = outcome(1, 0.9);
        let mut hist_a = vec![0u64; 20];
        let mut hist_b = vec![0u64; 20];
        hist_a[19] = 3;
        hist_a[0] = 1;
        hist_b[19] = 2;
        for (s, hist) in [(&mut a, hist_a), (&mut b, hist_b)] {
            s.beta = (0..2)
                .map(|epoch| BetaEpoch {
                    epoch,
                    n: 4,
                    mean: 0.4,
                    frac_at_half: 0.5,
                    agree_count: 2,
                    hist: hist.clone(),
                })
                .collect();
        }
        let csv = beta_hist_csv(&[run(vec![a, b])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 20);
        // Last bin of epoch 0: 3 + 2 merged.
        let last = lines[1 + 19];
        assert_eq!(last, "w2s_nogt.student,0,19,0.475,0.5,5");
        let first = lines[1];
        assert_eq!(first, "w2s_nogt.student,0,0,0,0.025,1");
    }

    #[test]
    fn mean_std_follows_the_sample_convention() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn ci95_matches_the_closed_form() {
        let (m, ci) = mean_ci95(&[1.0, 0.5]);
        assert!((m - 0.75).abs() < 1e-12);
        assert!((ci - 0.49).abs() < 1e-12, "ci {ci}");
        assert_eq!(mean_ci95(&[0.7]).1, 0.0);
    }

    #[test]
    fn emitting_twice_reproduces_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let summary = Summary {
            format_version: FORMAT_VERSION,
            kind: "scratch".into(),
            config: serde_json::json!({"kind": "scratch"}),
            seeds: vec![0, 1],
            runs: vec![run(vec![outcome(0, 0.5), outcome(1, 0.6)])],
            delta_top1: None,
            partial: false,
            failure: None,
            wall_clock_sec: 1.25,
            train_data: LoadReport {
                name: "t".into(),
                n: 8,
                label_hist: vec![4, 4],
            },
            test_data: LoadReport {
                name: "e".into(),
                n: 4,
                label_hist: vec![2, 2],
            },
            noise: None,
        };
        let p1 = emit_report(dir.path(), &summary).unwrap();
        let bytes1 = std::fs::read(&p1.results).unwrap();
        let sum1 = std::fs::read(&p1.summary).unwrap();
        let p2 = emit_report(dir.path(), &summary).unwrap();
        assert_eq!(bytes1, std::fs::read(&p2.results).unwrap());
        assert_eq!(sum1, std::fs::read(&p2.summary).unwrap());
        assert!(p1.beta_hist.is_none());
        let back = load_summary(&p1.summary).unwrap();
        assert_eq!(back, summary);
    }
}
