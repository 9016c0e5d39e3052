//! Nearest-centroid episodic evaluation over a frozen embedder.
//!
//! Support embeddings are averaged per class slot; each query goes to the
//! most cosine-similar centroid. No episode ever trains anything, so a run
//! is a pure function of the dataset, the embedder, and the episode spec.

use w2s_core::data::{sample_episode, Dataset, EpisodeSpec};
use w2s_core::model::Model;
use w2s_core::tensor::Tensor;

use crate::error::{LabError, Result};
use crate::report::mean_ci95;

/// Vector norms below this are clamped before dividing, so an all-zero
/// embedding scores 0 against everything instead of poisoning the run
/// with NaN.
pub const NORM_FLOOR: f64 = 1e-12;

/// Cosine similarity; bumps `clamped` once per side whose norm hit the floor.
fn cosine_sim(a: &[f64], b: &[f64], clamped: &mut usize) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let mut norm = |sq: f64| {
        let n = sq.sqrt();
        if n < NORM_FLOOR {
            *clamped += 1;
            NORM_FLOOR
        } else {
            n
        }
    };
    let d = norm(na) * norm(nb);
    dot / d
}

/// Scores one episode. `support`/`query` are `[rows, dim]` embeddings with
/// slot labels in `0..n_way`; ties between centroids go to the lowest slot.
/// Returns the query accuracy and how many norm clamps scoring needed.
pub fn episode_accuracy(
    support: &Tensor<f64>,
    support_labels: &[usize],
    query: &Tensor<f64>,
    query_labels: &[usize],
    n_way: usize,
) -> Result<(f64, usize)> {
    for (t, labels, side) in [
        (support, support_labels, "support"),
        (query, query_labels, "query"),
    ] {
        if t.rank() != 2 {
            return Err(LabError::config(format!(
                "{side} embeddings must be [rows, dim], got rank {}",
                t.rank()
            )));
        }
        if t.shape()[0] != labels.len() {
            return Err(LabError::config(format!(
                "{side}: {} rows but {} labels",
                t.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_way) {
            return Err(LabError::config(format!(
                "{side} label {bad} outside 0..{n_way}"
            )));
        }
    }
    if support.shape()[1] != query.shape()[1] {
        return Err(LabError::config(format!(
            "support dim {} != query dim {}",
            support.shape()[1],
            query.shape()[1]
        )));
    }
    if query_labels.is_empty() {
        return Err(LabError::config("episode has no query rows"));
    }

    let dim = support.shape()[1];
    let mut sums = vec![0.0f64; n_way * dim];
    let mut counts = vec![0usize; n_way];
    for (i, &slot) in support_labels.iter().enumerate() {
        counts[slot] += 1;
        let row = support.row(i)?;
        for (acc, &v) in sums[slot * dim..(slot + 1) * dim].iter_mut().zip(row) {
            *acc += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(LabError::config(format!("slot {empty} has no support rows")));
    }
    for (slot, &c) in counts.iter().enumerate() {
        let inv = 1.0 / c as f64;
        for v in &mut sums[slot * dim..(slot + 1) * dim] {
            *v *= inv;
        }
    }

    let mut clamped = 0usize;
    let mut correct = 0usize;
    for (i, &label) in query_labels.iter().enumerate() {
        let row = query.row(i)?;
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for slot in 0..n_way {
            let sim = cosine_sim(row, &sums[slot * dim..(slot + 1) * dim], &mut clamped);
            // Strict improvement only, so equal scores keep the lowest slot.
            if sim > best_sim {
                best_sim = sim;
                best = slot;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok((correct as f64 / query_labels.len() as f64, clamped))
}

/// Aggregate of an episodic run: accuracy per episode, their mean, the 95%
/// half-width `1.96 * sample_std / sqrt(episodes)`, and the total number of
/// norm clamps scoring needed.
#[derive(Debug, Clone, PartialEq)]
pub struct FewshotResult {
    pub per_episode: Vec<f64>,
    pub mean: f64,
    pub ci95: f64,
    pub clamped_norms: usize,
}

/// Draws and scores every episode of `spec` against `ds`. Episode `i` is a
/// function of `(spec.seed, i)` alone, so the whole result replays exactly.
pub fn eval_episodes<F>(mut embed: F, ds: &Dataset<f64>, spec: &EpisodeSpec) -> Result<FewshotResult>
where
    F: FnMut(&Tensor<f64>) -> w2s_core::Result<Tensor<f64>>,
{
    let mut per_episode = Vec::with_capacity(spec.episode_count);
    let mut clamped_norms = 0usize;
    for i in 0..spec.episode_count {
        let ep = sample_episode(ds, spec, i)?;
        let sup = embed(&ep.support.images)?;
        let qry = embed(&ep.query.images)?;
        let (acc, clamps) =
            episode_accuracy(&sup, &ep.support.labels, &qry, &ep.query.labels, spec.n_way)?;
        per_episode.push(acc);
        clamped_norms += clamps;
    }
    let (mean, ci95) = mean_ci95(&per_episode);
    Ok(FewshotResult {
        per_episode,
        mean,
        ci95,
        clamped_norms,
    })
}

/// Embeds batches with the model's penultimate-layer features.
pub fn model_embedder(
    model: &Model<f64>,
) -> impl FnMut(&Tensor<f64>) -> w2s_core::Result<Tensor<f64>> + '_ {
    move |batch| model.features(batch)
}

/// Flattens raw samples into feature vectors. The no-training baseline, and
/// exact on fixtures whose classes are separable in pixel space.
pub fn identity_embedder(batch: &Tensor<f64>) -> w2s_core::Result<Tensor<f64>> {
    let n = batch.shape().first().copied().unwrap_or(0);
    let d = batch.numel().checked_div(n).unwrap_or(0);
    batch.clone().reshaped([n, d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use w2s_core::data::synth_blobs;
    use w2s_core::model::{Model, ModelConfig};

    fn t2(rows: &[&[f64]]) -> Tensor<f64> {
        let dim = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(data, [rows.len(), dim]).unwrap()
    }

    #[test]
    fn orthogonal_centroids_split_cleanly() {
        let support = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let query = t2(&[&[0.9, 0.1], &[0.1, 0.9], &[2.0, 0.0]]);
        let (acc, clamps) =
            episode_accuracy(&support, &[0, 1], &query, &[0, 1, 0], 2).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(clamps, 0);
    }

    #[test]
    fn ties_go_to_the_lowest_slot() {
        let support = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        // Equidistant from both centroids.
        let query = t2(&[&[1.0, 1.0]]);
        let (acc_as_0, _) = episode_accuracy(&support, &[0, 1], &query, &[0], 2).unwrap();
        let (acc_as_1, _) = episode_accuracy(&support, &[0, 1], &query, &[1], 2).unwrap();
        assert_eq!(acc_as_0, 1.0);
        assert_eq!(acc_as_1, 0.0);
    }

    #[test]
    fn zero_vectors_clamp_instead_of_nan() {
        let support = t2(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let query = t2(&[&[0.0, 0.0]]);
        let (acc, clamps) = episode_accuracy(&support, &[0, 1], &query, &[0], 2).unwrap();
        // All-zero query ties every centroid at 0, so slot 0 wins.
        assert_eq!(acc, 1.0);
        assert!(acc.is_finite());
        // Query clamps against both centroids; the zero centroid clamps once.
        assert_eq!(clamps, 3);
    }

    #[test]
    fn empty_slots_and_shape_drift_are_rejected() {
        let support = t2(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let query = t2(&[&[1.0, 0.0]]);
        let err = episode_accuracy(&support, &[0, 0], &query, &[0], 2).unwrap_err();
        assert!(err.to_string().contains("slot 1"), "{err}");
        let wide = t2(&[&[1.0, 0.0, 0.0]]);
        let err = episode_accuracy(&support, &[0, 1], &wide, &[0], 2).unwrap_err();
        assert!(err.to_string().contains("dim"), "{err}");
    }

    #[test]
    fn identity_embedder_flattens_sample_dims() {
        let batch = Tensor::new((0..8).map(f64::from).collect(), [2, 1, 2, 2]).unwrap();
        let flat = identity_embedder(&batch).unwrap();
        assert_eq!(flat.shape(), [2, 4]);
        assert_eq!(flat.data()[4..], [4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn separable_blobs_score_perfectly_with_identity_features() {
        // Unit-basis means with tiny spread never cross class boundaries.
        let ds = synth_blobs::<f64>(5, 12, &[8], 0.01, 7).unwrap();
        let spec = EpisodeSpec {
            n_way: 3,
            k_shot: 2,
            q_query: 4,
            episode_count: 25,
            seed: 11,
        };
        let result = eval_episodes(identity_embedder, &ds, &spec).unwrap();
        assert_eq!(result.mean, 1.0);
        assert_eq!(result.ci95, 0.0);
        assert!(result.per_episode.iter().all(|&a| a == 1.0));
        assert_eq!(result.per_episode.len(), 25);
    }

    #[test]
    fn model_embedder_replays_bit_for_bit() {
        let ds = synth_blobs::<f64>(4, 10, &[6], 0.3, 3).unwrap();
        let cfg = ModelConfig::mlp(vec![6], vec![16], 4);
        let model = Model::build(&cfg, 21).unwrap();
        let spec = EpisodeSpec {
            n_way: 2,
            k_shot: 3,
            q_query: 3,
            episode_count: 10,
            seed: 5,
        };
        let a = eval_episodes(model_embedder(&model), &ds, &spec).unwrap();
        let b = eval_episodes(model_embedder(&model), &ds, &spec).unwrap();
        assert_eq!(a, b);
        let shifted = EpisodeSpec { seed: 6, ..spec };
        let c = eval_episodes(model_embedder(&model), &ds, &shifted).unwrap();
        assert_ne!(
            a.per_episode, c.per_episode,
            "episode seed had no effect on the draw"
        );
    }
}
