//! Dataset machinery: in-memory datasets, synthetic Gaussian blobs, label
//! noise (symmetric and class-conditional), class splits for episodic work,
//! episode sampling, and shuffled mini-batches with optional augmentation.
//!
//! Everything here is deterministic given its seed. Independent concerns use
//! independent seeds; per-epoch and per-episode variation comes from the
//! generator's stream parameter, never from seed arithmetic.

use crate::error::Error;
use crate::numeric::{real, Real};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Labeled image set. `images` is `[N, ...sample shape]`; `coarse`, when
/// present, holds super-class ids in `[0, 20)` parallel to `labels`.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub name: String,
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub coarse: Option<Vec<usize>>,
    pub num_classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        images: Tensor<T>,
        labels: Vec<usize>,
        coarse: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            images,
            labels,
            coarse,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.rank() < 2 {
            return Err(Error::contract(format!(
                "dataset images must be [N, ...], got {:?}",
                self.images.shape()
            )));
        }
        let n = self.images.shape()[0];
        if n == 0 {
            return Err(Error::contract("dataset has no samples"));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.labels.len() != n {
            return Err(Error::contract(format!(
                "{} labels for {n} samples",
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        if let Some(coarse) = &self.coarse {
            if coarse.len() != n {
                return Err(Error::contract(format!(
                    "{} coarse labels for {n} samples",
                    coarse.len()
                )));
            }
            if let Some(&bad) = coarse.iter().find(|&&c| c >= 20) {
                return Err(Error::contract(format!(
                    "coarse label {bad} out of range [0, 20)"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample shape (everything after the batch axis).
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Row subset in the given order, keeping labels and coarse labels.
    pub fn gather(&self, rows: &[usize]) -> Result<Self> {
        let images = self.images.gather_rows(rows)?;
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let coarse = self
            .coarse
            .as_ref()
            .map(|c| rows.iter().map(|&r| c[r]).collect());
        Dataset::new(
            self.name.clone(),
            images,
            labels,
            coarse,
            self.num_classes,
        )
    }

    /// Deterministic fractional subset: the first `floor(fraction * N)` rows
    /// of a seeded permutation, re-sorted into original order.
    pub fn subset_fraction(&self, fraction: f64, seed: u64) -> Result<Self> {
        use num_traits::Float;
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!(
                "subset fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let count = Float::floor(fraction * self.len() as f64) as usize;
        if count == 0 {
            return Err(Error::config(format!(
                "subset fraction {fraction} of {} samples selects nothing",
                self.len()
            )));
        }
        let mut rows = SeededRng::new(seed).permutation(self.len());
        rows.truncate(count);
        rows.sort_unstable();
        let mut out = self.gather(&rows)?;
        out.name = format!("{}@{fraction}", self.name);
        Ok(out)
    }

    /// Sample indices grouped by label, each group in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

// ── synthetic blobs ──────────────────────────────────────────────────────

/// Gaussian class clusters with unit-separated means: class `k` is centered
/// on the `k`-th basis vector of the flattened sample space (so the sample
/// dimension must be at least the class count) with isotropic standard
/// deviation `spread`. Samples are laid out class-major.
pub fn synth_blobs<T: Real>(
    classes: usize,
    per_class: usize,
    sample_shape: &[usize],
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes < 2 {
        return Err(Error::config(format!(
            "synth_blobs needs >= 2 classes, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::config("synth_blobs needs per_class >= 1"));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::config(format!(
            "spread must be finite and >= 0, got {spread}"
        )));
    }
    let dim: usize = sample_shape.iter().product();
    if sample_shape.is_empty() || dim < classes {
        return Err(Error::config(format!(
            "sample shape {sample_shape:?} has {dim} elements; basis-vector \
             means need at least one per class ({classes})"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for k in 0..classes {
        for _ in 0..per_class {
            for d in 0..dim {
                let mean = if d == k { 1.0 } else { 0.0 };
                data.push(real::<T>(mean + spread * rng.normal()));
            }
            labels.push(k);
        }
    }
    let mut shape = vec![n];
    shape.extend_from_slice(sample_shape);
    Dataset::new(
        "synth_blobs",
        Tensor::new(data, shape)?,
        labels,
        None,
        classes,
    )
}

// ── label noise ──────────────────────────────────────────────────────────

/// Noise family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseKind {
    /// Uniform over the other classes (or all classes when `allow_original`).
    Symmetric,
    /// Class-conditional flips from an explicit map, or the cyclic
    /// within-super-class successor when coarse labels are available.
    Asymmetric,
}

/// Label corruption recipe. Exactly `floor(ratio * N)` samples are selected
/// by a seeded permutation; symmetric noise redraws their labels, asymmetric
/// noise applies the class map to them (unmapped classes stay untouched).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub flip_map: Option<BTreeMap<usize, usize>>,
    /// Symmetric only: draw the new label from all `K` classes instead of
    /// excluding the original (some protocols define the ratio that way).
    #[cfg_attr(feature = "serde", serde(default))]
    pub allow_original: bool,
}

/// One applied label change.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlipChange {
    pub index: usize,
    pub from: usize,
    pub to: usize,
}

/// What [`inject_noise`] did: which rows were selected (ascending) and which
/// labels actually changed.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlipReport {
    pub selected: Vec<usize>,
    pub changes: Vec<FlipChange>,
}

/// Cyclic successor within each super-class: fine classes sharing a coarse
/// label, in ascending order, map each to the next (wrapping). The
/// fine-to-coarse relation is read off the data and must be consistent.
pub fn coarse_cycle_map(ds: &Dataset<impl Real>) -> Result<BTreeMap<usize, usize>> {
    let coarse = ds.coarse.as_ref().ok_or_else(|| {
        Error::config("cyclic flip map needs coarse labels on the dataset")
    })?;
    let mut fine_to_coarse: BTreeMap<usize, usize> = BTreeMap::new();
    for (&fine, &c) in ds.labels.iter().zip(coarse) {
        match fine_to_coarse.get(&fine) {
            Some(&seen) if seen != c => {
                return Err(Error::contract(format!(
                    "fine class {fine} appears under coarse classes {seen} and {c}"
                )));
            }
            None => {
                fine_to_coarse.insert(fine, c);
            }
            _ => {}
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&fine, &c) in &fine_to_coarse {
        groups.entry(c).or_default().push(fine);
    }
    let mut map = BTreeMap::new();
    for members in groups.values() {
        // BTreeMap iteration gives members in ascending order already.
        for (i, &fine) in members.iter().enumerate() {
            map.insert(fine, members[(i + 1) % members.len()]);
        }
    }
    Ok(map)
}

/// Applies label noise, returning the corrupted dataset and a report of the
/// selection and every actual change.
pub fn inject_noise<T: Real>(ds: &Dataset<T>, spec: &NoiseSpec) -> Result<(Dataset<T>, FlipReport)> {
    use num_traits::Float;
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(Error::config(format!(
            "noise ratio must lie in [0, 1], got {}",
            spec.ratio
        )));
    }
    let k = ds.num_classes;
    if let Some(map) = &spec.flip_map {
        for (&from, &to) in map {
            if from >= k || to >= k {
                return Err(Error::config(format!(
                    "flip map entry {from} -> {to} out of range for {k} classes"
                )));
            }
        }
    }
    let count = Float::floor(spec.ratio * ds.len() as f64) as usize;
    let mut rng = SeededRng::new(spec.seed);
    let mut selected = rng.permutation(ds.len());
    selected.truncate(count);
    selected.sort_unstable();

    let mut labels = ds.labels.clone();
    let mut changes = Vec::new();
    match spec.kind {
        NoiseKind::Symmetric => {
            for &i in &selected {
                let old = labels[i];
                let new = if spec.allow_original {
                    rng.below(k)
                } else {
                    // Uniform over the K-1 other classes.
                    let d = rng.below(k - 1);
                    if d >= old {
                        d + 1
                    } else {
                        d
                    }
                };
                if new != old {
                    labels[i] = new;
                    changes.push(FlipChange {
                        index: i,
                        from: old,
                        to: new,
                    });
                }
            }
        }
        NoiseKind::Asymmetric => {
            let map = match &spec.flip_map {
                Some(m) => m.clone(),
                None => coarse_cycle_map(ds)?,
            };
            for &i in &selected {
                let old = labels[i];
                if let Some(&new) = map.get(&old) {
                    if new != old {
                        labels[i] = new;
                        changes.push(FlipChange {
                            index: i,
                            from: old,
                            to: new,
                        });
                    }
                }
            }
        }
    }
    let noisy = Dataset::new(
        format!("{}+noise", ds.name),
        ds.images.clone(),
        labels,
        ds.coarse.clone(),
        ds.num_classes,
    )?;
    Ok((noisy, FlipReport { selected, changes }))
}

// ── class splits and episodes ────────────────────────────────────────────

/// Partitions a dataset by class. Each list becomes one output dataset whose
/// labels are re-indexed densely in list order; a class may appear in at
/// most one list, and every list needs at least two classes.
pub fn split_classes<T: Real>(ds: &Dataset<T>, lists: &[Vec<usize>]) -> Result<Vec<Dataset<T>>> {
    let mut seen = vec![false; ds.num_classes];
    for list in lists {
        if list.len() < 2 {
            return Err(Error::config(format!(
                "each class split needs >= 2 classes, got {list:?}"
            )));
        }
        for &c in list {
            if c >= ds.num_classes {
                return Err(Error::config(format!(
                    "split lists class {c}, dataset has {} classes",
                    ds.num_classes
                )));
            }
            if seen[c] {
                return Err(Error::config(format!(
                    "class {c} appears in more than one split"
                )));
            }
            seen[c] = true;
        }
    }
    let mut out = Vec::with_capacity(lists.len());
    for (si, list) in lists.iter().enumerate() {
        let mut remap = BTreeMap::new();
        for (new, &c) in list.iter().enumerate() {
            remap.insert(c, new);
        }
        let rows: Vec<usize> = (0..ds.len())
            .filter(|&i| remap.contains_key(&ds.labels[i]))
            .collect();
        if rows.is_empty() {
            return Err(Error::config(format!(
                "split {si} ({list:?}) matches no samples"
            )));
        }
        let images = ds.images.gather_rows(&rows)?;
        let labels = rows.iter().map(|&i| remap[&ds.labels[i]]).collect();
        let coarse = ds
            .coarse
            .as_ref()
            .map(|c| rows.iter().map(|&i| c[i]).collect());
        out.push(Dataset::new(
            format!("{}/split{si}", ds.name),
            images,
            labels,
            coarse,
            list.len(),
        )?);
    }
    Ok(out)
}

/// Episodic sampling recipe: `n_way` classes, `k_shot` support and `q_query`
/// query samples per class, `episode_count` episodes from one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub episode_count: usize,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::config(format!("n_way must be >= 2, got {}", self.n_way)));
        }
        if self.k_shot == 0 || self.q_query == 0 {
            return Err(Error::config(
                "k_shot and q_query must both be >= 1",
            ));
        }
        if self.episode_count == 0 {
            return Err(Error::config("episode_count must be >= 1"));
        }
        Ok(())
    }
}

/// One side of an episode. Labels are episode-local (`0..n_way`, in drawn
/// class order); `source_indices` point back into the sampled dataset.
#[derive(Debug, Clone)]
pub struct EpisodeSet<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub source_indices: Vec<usize>,
}

/// A support/query episode plus the drawn class ids (dataset label space).
#[derive(Debug, Clone)]
pub struct Episode<T> {
    pub classes: Vec<usize>,
    pub support: EpisodeSet<T>,
    pub query: EpisodeSet<T>,
}

/// Draws episode `episode_index` of the spec: fully determined by
/// `(spec.seed, episode_index)` via the generator's stream parameter.
/// Support and query are disjoint by construction (one draw of
/// `k_shot + q_query` distinct samples per class, split in two).
pub fn sample_episode<T: Real>(
    ds: &Dataset<T>,
    spec: &EpisodeSpec,
    episode_index: usize,
) -> Result<Episode<T>> {
    spec.validate()?;
    if spec.n_way > ds.num_classes {
        return Err(Error::config(format!(
            "n_way {} exceeds the dataset's {} classes",
            spec.n_way, ds.num_classes
        )));
    }
    let mut rng = SeededRng::with_stream(spec.seed, episode_index as u64);
    let classes = rng.choose_k(ds.num_classes, spec.n_way);
    let by_class = ds.indices_by_class();
    let need = spec.k_shot + spec.q_query;
    let mut sup_rows = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut qry_rows = Vec::with_capacity(spec.n_way * spec.q_query);
    let mut sup_labels = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut qry_labels = Vec::with_capacity(spec.n_way * spec.q_query);
    for (slot, &class) in classes.iter().enumerate() {
        let pool = &by_class[class];
        if pool.len() < need {
            return Err(Error::config(format!(
                "class {class} has {} samples, episode needs {need}",
                pool.len()
            )));
        }
        let picks = rng.choose_k(pool.len(), need);
        for (j, &p) in picks.iter().enumerate() {
            if j < spec.k_shot {
                sup_rows.push(pool[p]);
                sup_labels.push(slot);
            } else {
                qry_rows.push(pool[p]);
                qry_labels.push(slot);
            }
        }
    }
    Ok(Episode {
        classes,
        support: EpisodeSet {
            images: ds.images.gather_rows(&sup_rows)?,
            labels: sup_labels,
            source_indices: sup_rows,
        },
        query: EpisodeSet {
            images: ds.images.gather_rows(&qry_rows)?,
            labels: qry_labels,
            source_indices: qry_rows,
        },
    })
}

// ── mini-batches ─────────────────────────────────────────────────────────

/// One training batch; `indices` point back into the source dataset.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Shuffled batches for one epoch. The shuffle (and any augmentation draws)
/// come from stream `epoch` of `seed`, so an epoch's batches are reproducible
/// in isolation. Augmentation is pad-4 random crop then horizontal flip with
/// probability one half, applied identically to however many channels the
/// images have; it requires `[N,C,H,W]` data.
pub fn make_batches<T: Real>(
    ds: &Dataset<T>,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    augment: bool,
) -> Result<Vec<Batch<T>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    if augment && ds.images.rank() != 4 {
        return Err(Error::config(format!(
            "augmentation requires [N,C,H,W] images, got {:?}",
            ds.images.shape()
        )));
    }
    let mut rng = SeededRng::with_stream(seed, epoch as u64);
    let perm = rng.permutation(ds.len());
    let mut out = Vec::with_capacity(ds.len().div_ceil(batch_size));
    for chunk in perm.chunks(batch_size) {
        let mut images = ds.images.gather_rows(chunk)?;
        let labels = chunk.iter().map(|&i| ds.labels[i]).collect();
        if augment {
            augment_batch(&mut images, &mut rng);
        }
        out.push(Batch {
            images,
            labels,
            indices: chunk.to_vec(),
        });
    }
    Ok(out)
}

/// Pad-4 random crop then coin-flip horizontal mirror, per sample. Draw
/// order per sample: crop dy, crop dx, flip coin.
fn augment_batch<T: Real>(images: &mut Tensor<T>, rng: &mut SeededRng) {
    const PAD: usize = 4;
    let shape = images.shape().to_vec();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let sample = c * h * w;
    for b in 0..n {
        let dy = rng.below(2 * PAD + 1);
        let dx = rng.below(2 * PAD + 1);
        let flip = rng.coin();
        let src: Vec<T> = images.data()[b * sample..(b + 1) * sample].to_vec();
        let dst = &mut images.data_mut()[b * sample..(b + 1) * sample];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    // Position in the padded image, then back to source.
                    let py = y + dy;
                    let px = if flip { w - 1 - x } else { x } + dx;
                    let v = if py >= PAD && py < h + PAD && px >= PAD && px < w + PAD {
                        src[(ch * h + (py - PAD)) * w + (px - PAD)]
                    } else {
                        T::zero()
                    };
                    dst[(ch * h + y) * w + x] = v;
                }
            }
        }
    }
}
