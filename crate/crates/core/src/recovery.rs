//! Batched zero-order descent over Gaussian blobs.
//!
//! ```text
//! X <- 0;  G0 <- initialization
//! repeat floor((budget - init cost) / batch) times:
//!     sample blobs G_1..G_n
//!     candidates  clamp(X + G0 + G_j)
//!     j* = argmin loss(target, oracle(candidate_j))
//!     X <- X + G_j*;  G0 <- fade * G0
//! return X + G0
//! ```

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use thiserror::Error;

use crate::blobs::{
    build_dictionary, render_symmetric, BlobError, DictionaryGrid, GaussianBlob, Sampler,
    SamplerConfig,
};
use crate::canvas::{CanvasError, GrayCanvas};
use crate::objective::{cosine_similarity, loss, select_best, LossParams, ObjectiveError};
use crate::oracle::{Embedding, Oracle, OracleError};

/// Images per oracle call while scoring the dictionary.
pub const DICTIONARY_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoveryError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("query budget {budget} is below the initialization cost {init_cost}")]
    BudgetBelowInit { budget: u64, init_cost: u64 },
    #[error("face-image initialization needs an image")]
    MissingInitImage,
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum InitMode {
    /// Best-scoring blob of the symmetric dictionary.
    Dictionary,
    /// A caller-supplied image; switches the loss to cosine-only by default.
    FaceImage,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecoveryConfig {
    /// Total images the run may send, initialization included.
    pub query_budget: u64,
    /// Images per oracle call.
    pub batch_size: usize,
    pub loss: LossParams,
    /// The run seed replaces `sampler.seed`.
    pub sampler: SamplerConfig,
    /// Per-iteration decay of the initialization field.
    pub fade_factor: f64,
    pub init_mode: InitMode,
    pub dictionary: DictionaryGrid,
    pub canvas_width: usize,
    pub canvas_height: usize,
    /// `None` means cosine-only exactly when `init_mode` is `FaceImage`.
    pub cosine_only: Option<bool>,
    /// Put the unchanged state (a zero-amplitude blob) at batch slot 0.
    pub include_identity_candidate: bool,
    /// Keep every candidate loss in the trace records.
    pub record_batch_losses: bool,
    pub seed: u64,
}

impl RecoveryConfig {
    pub const DEFAULT_FADE: f64 = 0.99;
    pub const DEFAULT_BATCH: usize = 64;

    pub fn new(canvas_width: usize, canvas_height: usize) -> Self {
        Self {
            query_budget: 100_000,
            batch_size: Self::DEFAULT_BATCH,
            loss: LossParams::default(),
            sampler: SamplerConfig::for_canvas(canvas_width, canvas_height),
            fade_factor: Self::DEFAULT_FADE,
            init_mode: InitMode::Dictionary,
            dictionary: DictionaryGrid::default_for(canvas_width, canvas_height),
            canvas_width,
            canvas_height,
            cosine_only: None,
            include_identity_candidate: true,
            record_batch_losses: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RecoveryError> {
        let bad = |m: &str| Err(RecoveryError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.fade_factor > 0.0 && self.fade_factor <= 1.0) {
            return bad("fade_factor must lie in (0, 1]");
        }
        if !(self.loss.lambda.is_finite() && self.loss.lambda >= 0.0) {
            return bad("loss.lambda must be finite and >= 0");
        }
        if self.canvas_width == 0 || self.canvas_height == 0 {
            return bad("canvas dimensions must be non-zero");
        }
        self.sampler.validate()?;
        Ok(())
    }

    pub fn effective_loss(&self) -> LossParams {
        let cosine_only = self
            .cosine_only
            .unwrap_or(self.init_mode == InitMode::FaceImage);
        if cosine_only {
            LossParams::cosine_only()
        } else {
            self.loss
        }
    }

    /// Queries spent before the descent loop starts.
    pub fn init_cost(&self) -> u64 {
        match self.init_mode {
            InitMode::Dictionary => self.dictionary.len() as u64,
            InitMode::FaceImage => 0,
        }
    }

    /// Number of full batches the budget allows after initialization.
    pub fn iterations(&self) -> u64 {
        self.query_budget.saturating_sub(self.init_cost()) / self.batch_size.max(1) as u64
    }
}

/// One descent iteration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: u64,
    /// Cumulative, initialization included.
    pub queries: u64,
    /// Loss of the accepted candidate, the batch minimum.
    pub loss: f64,
    /// Cosine similarity of the accepted candidate to the target.
    pub cos: f64,
    /// Accepted blob as `[x0, y0, sigma1, sigma2, amplitude]`.
    pub blob: [f64; 5],
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Vec::is_empty")
    )]
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceSummary {
    pub total_queries: u64,
    pub init_queries: u64,
    pub iterations: u64,
    /// Similarity of the last scored image: the last accepted candidate, or
    /// the best dictionary entry when no iteration ran.
    pub final_similarity: Option<f64>,
    pub init_similarity: Option<f64>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
}

impl RunTrace {
    /// `(queries, cos)` per record.
    pub fn similarity_curve(&self) -> Vec<(u64, f64)> {
        self.records.iter().map(|r| (r.queries, r.cos)).collect()
    }

    /// Cumulative queries at the first record whose similarity reaches
    /// `threshold`.
    pub fn queries_to_reach(&self, threshold: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.cos >= threshold)
            .map(|r| r.queries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// `X + G0` after the last iteration, unclamped.
    pub reconstruction: GrayCanvas,
    /// The initialization field before any fading.
    pub initialization: GrayCanvas,
    pub trace: RunTrace,
}

/// A failed run. `partial` holds the state reached before an oracle or
/// objective failure; it is `None` when the run never started.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct RecoveryFailure {
    pub error: RecoveryError,
    pub partial: Option<Box<Recovery>>,
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for RecoveryFailure {
            fn from(e: $t) -> Self {
                Self {
                    error: e.into(),
                    partial: None,
                }
            }
        }
    )*};
}

failure_from!(
    RecoveryError,
    BlobError,
    CanvasError,
    OracleError,
    ObjectiveError
);

/// Result of scoring the initialization dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryChoice {
    pub field: GrayCanvas,
    pub index: usize,
    pub blob: GaussianBlob,
    pub similarity: f64,
    pub queries: u64,
}

/// Scores every dictionary blob (rendered symmetrically and clamped) by
/// cosine similarity to `target` and returns the best one, unclamped.
/// Ties go to the lowest index.
pub fn init_dictionary_search<O: Oracle + ?Sized>(
    oracle: &O,
    target: &Embedding,
    dictionary: &[GaussianBlob],
    canvas_size: (usize, usize),
) -> Result<DictionaryChoice, RecoveryError> {
    if dictionary.is_empty() {
        return Err(RecoveryError::Config("empty dictionary".into()));
    }
    let (w, h) = canvas_size;
    let mut best: Option<(usize, f64)> = None;
    let mut queries = 0u64;
    for (chunk_idx, chunk) in dictionary.chunks(DICTIONARY_CHUNK).enumerate() {
        let images = chunk
            .iter()
            .map(|b| Ok(render_symmetric(b, w, h)?.clamp_unit()))
            .collect::<Result<Vec<_>, BlobError>>()?;
        let embeddings = oracle.embed_batch(&images)?;
        queries += images.len() as u64;
        for (k, e) in embeddings.iter().enumerate() {
            let s = cosine_similarity(target, e)?;
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((chunk_idx * DICTIONARY_CHUNK + k, s));
            }
        }
    }
    let (index, similarity) = best.expect("non-empty dictionary");
    let blob = dictionary[index];
    Ok(DictionaryChoice {
        field: render_symmetric(&blob, w, h)?,
        index,
        blob,
        similarity,
        queries,
    })
}

/// Validates a caller-supplied initialization image.
pub fn init_face(
    image: &GrayCanvas,
    canvas_size: (usize, usize),
) -> Result<GrayCanvas, RecoveryError> {
    if image.size() != canvas_size {
        return Err(CanvasError::DimensionMismatch {
            expected: canvas_size,
            found: image.size(),
        }
        .into());
    }
    Ok(image.clone())
}

/// Runs the full recovery. `init_image` is required for
/// [`InitMode::FaceImage`] and ignored otherwise.
pub fn recover<O: Oracle + ?Sized>(
    oracle: &O,
    target: &Embedding,
    config: &RecoveryConfig,
    init_image: Option<&GrayCanvas>,
) -> Result<Recovery, RecoveryFailure> {
    recover_with_observer(oracle, target, config, init_image, |_| {})
}

/// [`recover`], calling `observe` after every iteration.
pub fn recover_with_observer<O, F>(
    oracle: &O,
    target: &Embedding,
    config: &RecoveryConfig,
    init_image: Option<&GrayCanvas>,
    mut observe: F,
) -> Result<Recovery, RecoveryFailure>
where
    O: Oracle + ?Sized,
    F: FnMut(&TraceRecord),
{
    config.validate()?;
    let size = (config.canvas_width, config.canvas_height);
    if oracle.input_size() != size {
        return Err(RecoveryError::Config(format!(
            "oracle expects {:?} images, canvas is {:?}",
            oracle.input_size(),
            size
        ))
        .into());
    }
    let init_cost = config.init_cost();
    if config.query_budget < init_cost {
        return Err(RecoveryError::BudgetBelowInit {
            budget: config.query_budget,
            init_cost,
        }
        .into());
    }
    let params = config.effective_loss();
    let mut sampler = Sampler::new(SamplerConfig {
        seed: config.seed,
        ..config.sampler.clone()
    })?;

    let mut summary = TraceSummary::default();
    let initialization = match config.init_mode {
        InitMode::Dictionary => {
            let dictionary = build_dictionary(&config.dictionary)?;
            let choice = init_dictionary_search(oracle, target, &dictionary, size)?;
            summary.init_queries = choice.queries;
            summary.init_similarity = Some(choice.similarity);
            summary.final_similarity = Some(choice.similarity);
            choice.field
        }
        InitMode::FaceImage => init_face(init_image.ok_or(RecoveryError::MissingInitImage)?, size)?,
    };
    summary.total_queries = summary.init_queries;

    let mut state = Descent {
        x: GrayCanvas::new(size.0, size.1)?,
        g0: initialization.clone(),
        records: Vec::new(),
    };
    let identity = GaussianBlob {
        x0: 0.0,
        y0: 0.0,
        sigma1: 1.0,
        sigma2: 1.0,
        amplitude: 0.0,
    };

    for iter in 0..config.iterations() {
        let step = (|| -> Result<TraceRecord, RecoveryError> {
            let base = state.x.add(&state.g0)?;
            let mut blobs = Vec::with_capacity(config.batch_size);
            if config.include_identity_candidate {
                blobs.push(identity);
            }
            let remaining = config.batch_size - blobs.len();
            if remaining > 0 {
                blobs.extend(sampler.sample_batch(remaining)?);
            }
            let fields = blobs
                .iter()
                .map(|b| sampler.render(b, size.0, size.1))
                .collect::<Result<Vec<_>, _>>()?;
            let candidates = fields
                .iter()
                .map(|f| {
                    let mut c = base.add(f)?;
                    c.clamp_unit_in_place();
                    Ok(c)
                })
                .collect::<Result<Vec<_>, CanvasError>>()?;
            let embeddings = oracle.embed_batch(&candidates)?;
            if embeddings.len() != candidates.len() {
                return Err(OracleError::Protocol(
                    "oracle returned the wrong number of embeddings".into(),
                )
                .into());
            }
            let losses = embeddings
                .iter()
                .map(|e| loss(target, e, params))
                .collect::<Result<Vec<_>, _>>()?;
            let best = select_best(&losses)?;
            let cos = cosine_similarity(target, &embeddings[best])?;

            state.x.add_assign(&fields[best])?;
            state.g0.scale_assign(config.fade_factor)?;
            Ok(TraceRecord {
                iter,
                queries: 0,
                loss: losses[best],
                cos,
                blob: blobs[best].params(),
                losses: if config.record_batch_losses {
                    losses
                } else {
                    Vec::new()
                },
            })
        })();
        match step {
            Ok(mut record) => {
                summary.total_queries += config.batch_size as u64;
                summary.iterations += 1;
                summary.final_similarity = Some(record.cos);
                record.queries = summary.total_queries;
                observe(&record);
                state.records.push(record);
            }
            Err(error) => {
                summary.aborted = Some(error.to_string());
                let partial = state.finish(initialization, summary);
                return Err(RecoveryFailure {
                    error,
                    partial: Some(Box::new(partial)),
                });
            }
        }
    }
    Ok(state.finish(initialization, summary))
}

struct Descent {
    x: GrayCanvas,
    g0: GrayCanvas,
    records: Vec<TraceRecord>,
}

impl Descent {
    fn finish(self, initialization: GrayCanvas, summary: TraceSummary) -> Recovery {
        let mut reconstruction = self.x;
        // Both are finite and equally sized; the sum only fails on overflow.
        if reconstruction.add_assign(&self.g0).is_err() {
            reconstruction = self.g0;
        }
        Recovery {
            reconstruction,
            initialization,
            trace: RunTrace {
                records: self.records,
                summary,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blobs::Interval;
    use crate::oracle::ProjectionOracle;
    use alloc::vec;
    use core::cell::{Cell, RefCell};

    fn small_config(w: usize, h: usize) -> RecoveryConfig {
        let mut c = RecoveryConfig::new(w, h);
        c.dictionary = DictionaryGrid {
            x0_values: vec![(w as f64 - 1.0) / 2.0, w as f64 / 4.0],
            y0_values: vec![h as f64 / 3.0, h as f64 / 2.0],
            sigma1_values: vec![3.0, 6.0],
            sigma2_values: vec![4.0],
            amplitude: 0.5,
        };
        c.batch_size = 8;
        c.query_budget = 8 + 8 * 10;
        c.seed = 3;
        c
    }

    fn target_image(w: usize, h: usize) -> GrayCanvas {
        let mut c = GrayCanvas::new(w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - (w as f64 - 1.0) / 2.0;
                let dy = y as f64 - h as f64 / 2.0;
                let v = if dx * dx / 30.0 + dy * dy / 50.0 < 1.0 {
                    0.8
                } else {
                    0.1
                };
                c.set(x, y, v).unwrap();
            }
        }
        c
    }

    /// Oracle whose embedding is fixed per call slot, to rig the argmin.
    struct Rigged {
        size: (usize, usize),
        calls: Cell<u64>,
        table: Vec<Vec<f64>>,
    }

    impl Oracle for Rigged {
        fn input_size(&self) -> (usize, usize) {
            self.size
        }
        fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
            self.calls.set(self.calls.get() + images.len() as u64);
            Ok((0..images.len())
                .map(|i| Embedding::new(self.table[i % self.table.len()].clone()).unwrap())
                .collect())
        }
        fn images_sent(&self) -> u64 {
            self.calls.get()
        }
    }

    #[test]
    fn budget_zero_face_init_returns_image() {
        let oracle = ProjectionOracle::new(1, 8, (10, 10), 1.0).unwrap();
        let face = target_image(10, 10);
        let mut cfg = small_config(10, 10);
        cfg.init_mode = InitMode::FaceImage;
        cfg.query_budget = 0;
        let target = oracle
            .embed_batch(core::slice::from_ref(&face))
            .unwrap()
            .remove(0);
        let before = oracle.images_sent();
        let out = recover(&oracle, &target, &cfg, Some(&face)).unwrap();
        assert_eq!(out.reconstruction, face);
        assert!(out.trace.records.is_empty());
        assert_eq!(oracle.images_sent(), before);
        assert_eq!(cfg.effective_loss(), LossParams::cosine_only());
    }

    #[test]
    fn face_init_requires_image_of_right_size() {
        let oracle = ProjectionOracle::new(1, 8, (10, 10), 1.0).unwrap();
        let target = Embedding::new(vec![1.0; 8]).unwrap();
        let mut cfg = small_config(10, 10);
        cfg.init_mode = InitMode::FaceImage;
        assert_eq!(
            recover(&oracle, &target, &cfg, None).unwrap_err().error,
            RecoveryError::MissingInitImage
        );
        let wrong = GrayCanvas::new(9, 10).unwrap();
        assert!(recover(&oracle, &target, &cfg, Some(&wrong)).is_err());
        let black = GrayCanvas::new(10, 10).unwrap();
        assert_eq!(init_face(&black, (10, 10)).unwrap(), black);
    }

    #[test]
    fn rigged_argmin_is_recorded() {
        let target = vec![1.0, 0.0, 0.0];
        let oracle = Rigged {
            size: (6, 6),
            calls: Cell::new(0),
            // Slot 2 points straight at the target with a matching norm.
            table: vec![
                vec![0.0, 1.0, 0.0],
                vec![-1.0, 0.2, 0.0],
                vec![1.0, 0.0, 0.0],
            ],
        };
        let mut cfg = small_config(6, 6);
        cfg.init_mode = InitMode::FaceImage;
        cfg.include_identity_candidate = false;
        cfg.batch_size = 3;
        cfg.query_budget = 3;
        let face = GrayCanvas::from_pixels(6, 6, vec![0.5; 36]).unwrap();
        let out = recover(&oracle, &Embedding::new(target).unwrap(), &cfg, Some(&face)).unwrap();
        assert_eq!(out.trace.records.len(), 1);
        let mut sampler = Sampler::new(SamplerConfig {
            seed: cfg.seed,
            ..cfg.sampler.clone()
        })
        .unwrap();
        let expected = sampler.sample_batch(3).unwrap()[2];
        assert_eq!(out.trace.records[0].blob, expected.params());
        assert_eq!(out.trace.records[0].loss, -1.0);
    }

    #[test]
    fn budget_below_init_cost_rejected() {
        let oracle = ProjectionOracle::new(1, 8, (10, 10), 1.0).unwrap();
        let target = Embedding::new(vec![1.0; 8]).unwrap();
        let mut cfg = small_config(10, 10);
        cfg.query_budget = 7;
        assert_eq!(
            recover(&oracle, &target, &cfg, None).unwrap_err().error,
            RecoveryError::BudgetBelowInit {
                budget: 7,
                init_cost: 8
            }
        );
        assert_eq!(oracle.images_sent(), 0);
    }

    #[test]
    fn partial_batch_budget_returns_initialization() {
        let oracle = ProjectionOracle::new(1, 8, (10, 10), 1.0).unwrap();
        let target = oracle
            .embed_batch(&[target_image(10, 10)])
            .unwrap()
            .remove(0);
        let mut cfg = small_config(10, 10);
        cfg.query_budget = 8 + 7;
        let out = recover(&oracle, &target, &cfg, None).unwrap();
        assert!(out.trace.records.is_empty());
        assert_eq!(out.reconstruction, out.initialization);
        assert_eq!(out.trace.summary.total_queries, 8);
    }

    #[test]
    fn dictionary_search_finds_planted_entry() {
        let (w, h) = (16, 16);
        let oracle = ProjectionOracle::new(5, 32, (w, h), 1.0).unwrap();
        let dictionary = build_dictionary(&DictionaryGrid::default_for(w, h)).unwrap();
        // Exhaustive: plant every 37th entry and check it is recovered.
        for k in (0..dictionary.len()).step_by(379) {
            let planted = render_symmetric(&dictionary[k], w, h).unwrap().clamp_unit();
            let target = oracle.embed_batch(&[planted]).unwrap().remove(0);
            let choice = init_dictionary_search(&oracle, &target, &dictionary, (w, h)).unwrap();
            assert_eq!(choice.similarity, 1.0);
            // Distinct entries can clamp to the same image; any of them
            // scoring exactly 1 before k would win the tie.
            assert!(choice.index <= k);
            assert_eq!(choice.queries, dictionary.len() as u64);
        }
    }

    #[test]
    fn dictionary_of_one() {
        let oracle = ProjectionOracle::new(5, 8, (8, 8), 0.0).unwrap();
        let blob = GaussianBlob::new(3.5, 4.0, 2.0, 2.0, 0.5).unwrap();
        let target = Embedding::new(vec![0.5; 8]).unwrap();
        let choice = init_dictionary_search(&oracle, &target, &[blob], (8, 8)).unwrap();
        assert_eq!(choice.index, 0);
        assert_eq!(choice.queries, 1);
        assert_eq!(oracle.images_sent(), 1);
        assert!(init_dictionary_search(&oracle, &target, &[], (8, 8)).is_err());
    }

    #[test]
    fn queries_are_conserved() {
        let oracle = ProjectionOracle::new(2, 16, (12, 12), 1.0).unwrap();
        let target = oracle
            .embed_batch(&[target_image(12, 12)])
            .unwrap()
            .remove(0);
        let cfg = small_config(12, 12);
        let before = oracle.images_sent();
        let out = recover(&oracle, &target, &cfg, None).unwrap();
        let delta = oracle.images_sent() - before;
        assert_eq!(out.trace.summary.total_queries, delta);
        assert_eq!(delta, 8 + 10 * 8);
        for (i, r) in out.trace.records.iter().enumerate() {
            assert_eq!(r.queries, 8 + 8 * (i as u64 + 1));
        }
    }

    #[test]
    fn fade_geometry_with_zero_amplitude() {
        let oracle = ProjectionOracle::new(2, 16, (12, 12), 1.0).unwrap();
        let target = oracle
            .embed_batch(&[target_image(12, 12)])
            .unwrap()
            .remove(0);
        let mut cfg = small_config(12, 12);
        cfg.sampler.amplitude_range = Interval::new(0.0, 0.0);
        cfg.query_budget = 8 + 8 * 25;
        let out = recover(&oracle, &target, &cfg, None).unwrap();
        assert_eq!(out.trace.summary.iterations, 25);
        let mut expected = out.initialization.clone();
        for _ in 0..25 {
            expected = expected.scale(0.99).unwrap();
        }
        assert_eq!(out.reconstruction, expected);
        let k = libm::pow(0.99, 25.0);
        for (r, g) in out
            .reconstruction
            .pixels()
            .iter()
            .zip(out.initialization.pixels())
        {
            assert!((r - k * g).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_candidate_keeps_loss_monotone_without_fade() {
        let oracle = ProjectionOracle::new(9, 24, (16, 16), 1.5).unwrap();
        let target = oracle
            .embed_batch(&[target_image(16, 16)])
            .unwrap()
            .remove(0);
        let mut cfg = small_config(16, 16);
        cfg.fade_factor = 1.0;
        cfg.query_budget = 8 + 8 * 40;
        cfg.record_batch_losses = true;
        let out = recover(&oracle, &target, &cfg, None).unwrap();
        let losses: Vec<f64> = out.trace.records.iter().map(|r| r.loss).collect();
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        for r in &out.trace.records {
            assert!(r.losses.iter().all(|&l| r.loss <= l));
            assert_eq!(r.losses.len(), 8);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let oracle = ProjectionOracle::new(2, 16, (12, 12), 1.0).unwrap();
        let target = oracle
            .embed_batch(&[target_image(12, 12)])
            .unwrap()
            .remove(0);
        let cfg = small_config(12, 12);
        let a = recover(&oracle, &target, &cfg, None).unwrap();
        let b = recover(&oracle, &target, &cfg, None).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 4;
        assert_ne!(
            recover(&oracle, &target, &other, None).unwrap().trace,
            a.trace
        );
    }

    /// Fails on the n-th call.
    struct Flaky {
        inner: ProjectionOracle,
        fail_at: u64,
        calls: RefCell<u64>,
    }

    impl Oracle for Flaky {
        fn input_size(&self) -> (usize, usize) {
            self.inner.input_size()
        }
        fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
            *self.calls.borrow_mut() += 1;
            if *self.calls.borrow() == self.fail_at {
                return Err(OracleError::Transport("connection reset".into()));
            }
            self.inner.embed_batch(images)
        }
        fn images_sent(&self) -> u64 {
            self.inner.images_sent()
        }
    }

    #[test]
    fn oracle_failure_returns_partial_trace() {
        let inner = ProjectionOracle::new(2, 16, (12, 12), 1.0).unwrap();
        let target = inner
            .embed_batch(&[target_image(12, 12)])
            .unwrap()
            .remove(0);
        let oracle = Flaky {
            inner,
            fail_at: 5,
            calls: RefCell::new(0),
        };
        let cfg = small_config(12, 12);
        let failure = recover(&oracle, &target, &cfg, None).unwrap_err();
        assert!(matches!(
            failure.error,
            RecoveryError::Oracle(OracleError::Transport(_))
        ));
        let partial = failure.partial.unwrap();
        // Call 1 is the dictionary; calls 2..=4 succeed.
        assert_eq!(partial.trace.records.len(), 3);
        assert!(partial.trace.summary.aborted.is_some());
        assert_eq!(partial.trace.summary.total_queries, 8 + 3 * 8);
    }

    #[test]
    fn mismatched_oracle_size_rejected() {
        let oracle = ProjectionOracle::new(2, 16, (12, 11), 1.0).unwrap();
        let target = Embedding::new(vec![1.0; 16]).unwrap();
        let failure = recover(&oracle, &target, &small_config(12, 12), None).unwrap_err();
        assert!(matches!(failure.error, RecoveryError::Config(_)));
        assert!(failure.partial.is_none());
    }
}
