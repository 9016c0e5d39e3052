//! Config-level dataset selection: a serializable spec naming where the
//! train/test splits come from, plus data-directory resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use w2s_core::data::{synth_blobs, Dataset};

use crate::cifar::{self, Split};
use crate::error::{LabError, Result};
use crate::idx;

/// Environment variable naming the dataset root; the CLI flag overrides it.
pub const DATA_DIR_VAR: &str = "W2S_DATA_DIR";

/// Where the pipelines get their data. File paths are joined onto the data
/// root, so configs stay relocatable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Deterministic Gaussian clusters; the test split redraws with its own
    /// seed from the same class means.
    Synth {
        classes: usize,
        per_class: usize,
        eval_per_class: usize,
        shape: Vec<usize>,
        spread: f64,
        seed: u64,
    },
    /// An IDX image/label file pair per split (the MNIST layout).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_idx_name")]
        name: String,
    },
    Cifar10,
    Cifar100,
}

fn default_idx_name() -> String {
    String::from("idx")
}

/// Per-split load summary: sample count and label histogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub name: String,
    pub n: usize,
    pub label_hist: Vec<usize>,
}

impl LoadReport {
    pub fn from_dataset(ds: &Dataset<f64>) -> Self {
        let mut hist = vec![0usize; ds.num_classes];
        for &l in &ds.labels {
            hist[l] += 1;
        }
        LoadReport {
            name: ds.name.clone(),
            n: ds.len(),
            label_hist: hist,
        }
    }
}

/// Both splits plus their load summaries.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub train_report: LoadReport,
    pub test_report: LoadReport,
}

/// Dataset root: explicit flag first, then `W2S_DATA_DIR`, then the working
/// directory.
pub fn data_root(flag: Option<&Path>) -> PathBuf {
    resolve_root(flag, std::env::var_os(DATA_DIR_VAR).map(PathBuf::from))
}

fn resolve_root(flag: Option<&Path>, env: Option<PathBuf>) -> PathBuf {
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    env.unwrap_or_else(|| PathBuf::from("."))
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if let DatasetSpec::Synth {
            classes,
            per_class,
            eval_per_class,
            spread,
            ..
        } = self
        {
            if *classes < 2 || *per_class == 0 || *eval_per_class == 0 {
                return Err(LabError::config(format!(
                    "synth spec needs classes >= 2 and nonzero per-class counts, \
                     got {classes} classes, {per_class} train, {eval_per_class} eval"
                )));
            }
            if !spread.is_finite() || *spread < 0.0 {
                return Err(LabError::config(format!(
                    "synth spread must be finite and >= 0, got {spread}"
                )));
            }
        }
        Ok(())
    }

    /// Loads (or generates) both splits under the given data root.
    pub fn load(&self, root: &Path) -> Result<LoadedData> {
        self.validate()?;
        let (train, test) = match self {
            DatasetSpec::Synth {
                classes,
                per_class,
                eval_per_class,
                shape,
                spread,
                seed,
            } => {
                let train = synth_blobs(*classes, *per_class, shape, *spread, *seed)?;
                // The eval split is a fresh draw from the same clusters.
                let mut test: Dataset<f64> =
                    synth_blobs(*classes, *eval_per_class, shape, *spread, seed.wrapping_add(1))?;
                test.name = String::from("synth_blobs-eval");
                (train, test)
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                name,
            } => {
                let mut train = idx::load_idx_pair(
                    &root.join(train_images),
                    &root.join(train_labels),
                    format!("{name}-train"),
                )?;
                let mut test = idx::load_idx_pair(
                    &root.join(test_images),
                    &root.join(test_labels),
                    format!("{name}-test"),
                )?;
                // Both splits must agree on the label space; a test split
                // missing the top class would otherwise shrink its K.
                let k = train.num_classes.max(test.num_classes);
                train.num_classes = k;
                test.num_classes = k;
                (train, test)
            }
            DatasetSpec::Cifar10 => (
                cifar::load_cifar10(root, Split::Train)?,
                cifar::load_cifar10(root, Split::Test)?,
            ),
            DatasetSpec::Cifar100 => (
                cifar::load_cifar100(root, Split::Train)?,
                cifar::load_cifar100(root, Split::Test)?,
            ),
        };
        let train_report = LoadReport::from_dataset(&train);
        let test_report = LoadReport::from_dataset(&test);
        Ok(LoadedData {
            train,
            test,
            train_report,
            test_report,
        })
    }
}
