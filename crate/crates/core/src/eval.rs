//! Independent-critic evaluation, similarity statistics, the color
//! tolerance harness and similarity-vs-queries curves.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::canvas::{GrayCanvas, RgbCanvas};
use crate::objective::{cosine_similarity, ObjectiveError};
use crate::oracle::{Embedding, Oracle, OracleError};

/// Images per oracle call during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Equal-width histogram over `[-1, 1]`; `1.0` falls in the last bin.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn over_cosine_range(values: &[f64], bins: usize) -> Result<Self, EvalError> {
        if bins == 0 {
            return Err(EvalError::NoBins);
        }
        let edges = (0..=bins)
            .map(|i| -1.0 + 2.0 * i as f64 / bins as f64)
            .collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let t = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64;
            counts[(t as usize).min(bins - 1)] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Distribution {
    pub mean: f64,
    pub median: f64,
    pub histogram: Histogram,
}

impl Distribution {
    pub fn of(values: &[f64], bins: usize) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::Empty);
        }
        Ok(Self {
            mean: mean(values),
            median: median(values),
            histogram: Histogram::over_cosine_range(values, bins)?,
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Similarities of one (original, reconstruction) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalRow {
    /// Under the oracle the reconstruction was attacked against.
    pub attacked: f64,
    /// Under the independent critic.
    pub critic: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub attacked: Distribution,
    pub critic: Distribution,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, bins: usize) -> Result<Self, EvalError> {
        let attacked: Vec<f64> = rows.iter().map(|r| r.attacked).collect();
        let critic: Vec<f64> = rows.iter().map(|r| r.critic).collect();
        Ok(Self {
            attacked: Distribution::of(&attacked, bins)?,
            critic: Distribution::of(&critic, bins)?,
            rows,
        })
    }
}

fn embed_all<O: Oracle + ?Sized>(
    oracle: &O,
    images: &[GrayCanvas],
) -> Result<Vec<Embedding>, OracleError> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        out.extend(oracle.embed_batch(chunk)?);
    }
    Ok(out)
}

/// Pairwise similarity `s(embed(original), embed(reconstruction))` under
/// one oracle. Images are clamped to `[0, 1]` before embedding.
pub fn pair_similarities<O: Oracle + ?Sized>(
    oracle: &O,
    pairs: &[(GrayCanvas, GrayCanvas)],
) -> Result<Vec<f64>, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut images = Vec::with_capacity(2 * pairs.len());
    images.extend(pairs.iter().map(|(o, _)| o.clamp_unit()));
    images.extend(pairs.iter().map(|(_, r)| r.clamp_unit()));
    let embeddings = embed_all(oracle, &images)?;
    let (originals, reconstructions) = embeddings.split_at(pairs.len());
    originals
        .iter()
        .zip(reconstructions)
        .map(|(o, r)| Ok(cosine_similarity(o, r)?))
        .collect()
}

/// Scores reconstructions under the attacked oracle and an independent
/// critic.
pub fn evaluate_set<A, C>(
    attacked: &A,
    critic: &C,
    pairs: &[(GrayCanvas, GrayCanvas)],
    bins: usize,
) -> Result<EvalReport, EvalError>
where
    A: Oracle + ?Sized,
    C: Oracle + ?Sized,
{
    let a = pair_similarities(attacked, pairs)?;
    let c = pair_similarities(critic, pairs)?;
    let rows = a
        .into_iter()
        .zip(c)
        .map(|(attacked, critic)| EvalRow { attacked, critic })
        .collect();
    EvalReport::from_rows(rows, bins)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToleranceReport {
    pub similarities: Vec<f64>,
    pub distribution: Distribution,
}

/// For every image, the similarity between its embedding and that of its
/// luma conversion replicated to three channels. No quantization happens
/// in between.
pub fn gray_tolerance<O: Oracle + ?Sized>(
    oracle: &O,
    rgb_images: &[RgbCanvas],
    bins: usize,
) -> Result<ToleranceReport, EvalError> {
    if rgb_images.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut similarities = Vec::with_capacity(rgb_images.len());
    for chunk in rgb_images.chunks(EVAL_CHUNK / 2) {
        let mut batch = chunk.to_vec();
        batch.extend(chunk.iter().map(|img| RgbCanvas::from_gray(&img.to_luma())));
        let embeddings = oracle.embed_rgb_batch(&batch)?;
        let (color, gray) = embeddings.split_at(chunk.len());
        for (c, g) in color.iter().zip(gray) {
            similarities.push(cosine_similarity(c, g)?);
        }
    }
    Ok(ToleranceReport {
        distribution: Distribution::of(&similarities, bins)?,
        similarities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub iter: u64,
    /// Mean of the runs' cumulative query counts at this iteration.
    pub queries: f64,
    pub mean_cos: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    /// Length of every input run, in records.
    pub run_lengths: Vec<usize>,
    /// Set when runs had unequal lengths and were cut to the shortest.
    pub truncated: bool,
}

/// Mean similarity per iteration across runs, each given as its
/// `(queries, cos)` sequence. Runs are aligned by iteration index and cut
/// to the shortest one.
pub fn mean_curve(runs: &[Vec<(u64, f64)>]) -> Result<Curve, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::Empty);
    }
    let run_lengths: Vec<usize> = runs.iter().map(Vec::len).collect();
    let shortest = *run_lengths.iter().min().expect("non-empty");
    let truncated = run_lengths.iter().any(|&l| l != shortest);
    let n = runs.len() as f64;
    let points = (0..shortest)
        .map(|i| CurvePoint {
            iter: i as u64,
            queries: runs.iter().map(|r| r[i].0 as f64).sum::<f64>() / n,
            mean_cos: runs.iter().map(|r| r[i].1).sum::<f64>() / n,
        })
        .collect();
    Ok(Curve {
        points,
        run_lengths,
        truncated,
    })
}

/// Means of consecutive non-overlapping windows; a short tail is dropped.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    values.chunks_exact(window).map(mean).collect()
}
