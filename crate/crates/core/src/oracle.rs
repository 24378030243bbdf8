//! The black-box boundary.
//!
//! An [`Oracle`] maps image batches to embeddings and counts every image it
//! accepts. [`ProjectionOracle`] is the in-process stand-in for a face
//! recognition network: a Gaussian blur followed by a fixed random linear
//! projection, optionally preceded by an RGB channel mix.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use portable_atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::canvas::{luma, GrayCanvas, RgbCanvas};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("empty image batch")]
    EmptyBatch,
    #[error("image is {found:?}, oracle expects {expected:?}")]
    InputSize {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("pixel values must lie in [0, 1]")]
    PixelRange,
    #[error("oracle does not accept {0}")]
    Unsupported(&'static str),
    #[error("invalid oracle parameters: {0}")]
    InvalidParameters(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("embedding dimension changed from {expected} to {found}")]
    DimensionDrift { expected: usize, found: usize },
    #[error("embedding is empty or contains non-finite values")]
    InvalidEmbedding,
}

/// A feature vector returned by an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, OracleError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::InvalidEmbedding);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Monotone count of images consumed by an oracle.
#[derive(Debug, Default)]
pub struct QueryLedger(AtomicU64);

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, images: usize) {
        self.0.fetch_add(images as u64, Ordering::SeqCst);
    }

    pub fn images_sent(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Anything that embeds images. Implementations must record every image of
/// every successful call in their ledger, and nothing else.
pub trait Oracle {
    /// `(width, height)` of accepted images.
    fn input_size(&self) -> (usize, usize);

    /// One embedding per image, in order.
    fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError>;

    /// Embeds 3-channel images. Gray-only oracles refuse.
    fn embed_rgb_batch(&self, images: &[RgbCanvas]) -> Result<Vec<Embedding>, OracleError> {
        let _ = images;
        Err(OracleError::Unsupported("3-channel input"))
    }

    /// Total images embedded so far.
    fn images_sent(&self) -> u64;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn input_size(&self) -> (usize, usize) {
        (**self).input_size()
    }
    fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
        (**self).embed_batch(images)
    }
    fn embed_rgb_batch(&self, images: &[RgbCanvas]) -> Result<Vec<Embedding>, OracleError> {
        (**self).embed_rgb_batch(images)
    }
    fn images_sent(&self) -> u64 {
        (**self).images_sent()
    }
}

impl<O: Oracle + ?Sized> Oracle for alloc::boxed::Box<O> {
    fn input_size(&self) -> (usize, usize) {
        (**self).input_size()
    }
    fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
        (**self).embed_batch(images)
    }
    fn embed_rgb_batch(&self, images: &[RgbCanvas]) -> Result<Vec<Embedding>, OracleError> {
        (**self).embed_rgb_batch(images)
    }
    fn images_sent(&self) -> u64 {
        (**self).images_sent()
    }
}

/// Shared input validation for oracle implementations.
pub fn check_batch<I>(expected: (usize, usize), sizes: I) -> Result<(), OracleError>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut any = false;
    for found in sizes {
        any = true;
        if found != expected {
            return Err(OracleError::InputSize { expected, found });
        }
    }
    if any {
        Ok(())
    } else {
        Err(OracleError::EmptyBatch)
    }
}

/// How a projection oracle reduces RGB input to one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelMix {
    /// Single-channel oracle; RGB input is refused.
    Gray,
    /// Luma with the fixed 0.299/0.587/0.114 weights.
    Luma,
    /// Arbitrary channel weights, e.g. `[1, 0, 0]` for a red-only model.
    Weights([f64; 3]),
}

impl ChannelMix {
    fn apply(self, rgb: [f64; 3]) -> f64 {
        match self {
            ChannelMix::Gray | ChannelMix::Luma => luma(rgb),
            ChannelMix::Weights(w) => w[0] * rgb[0] + w[1] * rgb[1] + w[2] * rgb[2],
        }
    }
}

/// Normalized 1D Gaussian taps for `sigma`, radius `ceil(3 sigma)`.
/// `sigma == 0` yields the identity kernel.
pub fn blur_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * sigma) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| libm::exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Separable blur with zero padding outside the image.
pub fn blur(pixels: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    if radius == 0 {
        return pixels.iter().map(|p| p * kernel[0]).collect();
    }
    let (w, h) = (width as isize, height as isize);
    let mut rows = vec![0.0; pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, tap) in kernel.iter().enumerate() {
                let sx = x + k as isize - radius;
                if (0..w).contains(&sx) {
                    acc += tap * pixels[(y * w + sx) as usize];
                }
            }
            rows[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..h {
        for (k, tap) in kernel.iter().enumerate() {
            let sy = y + k as isize - radius;
            if !(0..h).contains(&sy) {
                continue;
            }
            let src = &rows[(sy * w) as usize..((sy + 1) * w) as usize];
            let dst = &mut out[(y * w) as usize..((y + 1) * w) as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += tap * s;
            }
        }
    }
    out
}

/// Blur-then-project synthetic oracle.
///
/// The projection matrix has `dim` rows of `width * height` entries, drawn
/// row-major from `ChaCha8Rng::seed_from_u64(seed)` as standard normals
/// divided by `sqrt(width * height)`. Embeddings are `P * blur(image)`,
/// never normalized. Since the blur is symmetric it is folded into the
/// matrix once at construction.
#[derive(Debug)]
pub struct ProjectionOracle {
    width: usize,
    height: usize,
    dim: usize,
    mix: ChannelMix,
    centered: bool,
    /// `dim x (width * height)`, row-major, blur folded in.
    weights: Vec<f64>,
    ledger: QueryLedger,
}

impl ProjectionOracle {
    pub fn new(
        seed: u64,
        dim: usize,
        input_size: (usize, usize),
        blur_sigma: f64,
    ) -> Result<Self, OracleError> {
        let (width, height) = input_size;
        if dim < 2 {
            return Err(OracleError::InvalidParameters(
                "dim must be at least 2".into(),
            ));
        }
        if !(blur_sigma.is_finite() && blur_sigma >= 0.0) {
            return Err(OracleError::InvalidParameters(
                "blur_sigma must be finite and >= 0".into(),
            ));
        }
        let npix = width
            .checked_mul(height)
            .filter(|&n| n > 0)
            .ok_or_else(|| OracleError::InvalidParameters("input size must be non-zero".into()))?;
        if dim.checked_mul(npix).is_none() {
            return Err(OracleError::InvalidParameters(
                "projection too large".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = libm::sqrt(npix as f64);
        let kernel = blur_kernel(blur_sigma);
        let mut weights = Vec::with_capacity(dim * npix);
        for _ in 0..dim {
            let row: Vec<f64> = (0..npix)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / scale
                })
                .collect();
            if blur_sigma == 0.0 {
                weights.extend(row);
            } else {
                weights.extend(blur(&row, width, height, &kernel));
            }
        }
        Ok(Self {
            width,
            height,
            dim,
            mix: ChannelMix::Gray,
            centered: false,
            weights,
            ledger: QueryLedger::new(),
        })
    }

    /// Projection oracle that takes 3-channel input and reduces it to luma
    /// first. RGB images and their luma conversions embed identically.
    pub fn luma(
        seed: u64,
        dim: usize,
        input_size: (usize, usize),
        blur_sigma: f64,
    ) -> Result<Self, OracleError> {
        Ok(Self::new(seed, dim, input_size, blur_sigma)?.with_channel_mix(ChannelMix::Luma))
    }

    pub fn with_channel_mix(mut self, mix: ChannelMix) -> Self {
        self.mix = mix;
        self
    }

    /// Subtracts each image's mean intensity before the blur. The map stays
    /// linear, but flat brightness no longer dominates the embedding, so
    /// similarity tracks structure rather than overall exposure.
    pub fn with_centering(mut self) -> Self {
        if self.centered {
            return self;
        }
        let npix = self.width * self.height;
        // Centering is symmetric, so it folds into the rows like the blur.
        for row in self.weights.chunks_exact_mut(npix) {
            let m = row.iter().sum::<f64>() / npix as f64;
            for w in row.iter_mut() {
                *w -= m;
            }
        }
        self.centered = true;
        self
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channel_mix(&self) -> ChannelMix {
        self.mix
    }

    /// `images` is `n` stacked row-major pixel buffers.
    fn project(&self, images: &[f64], n: usize) -> Vec<Embedding> {
        let npix = self.width * self.height;
        debug_assert_eq!(images.len(), n * npix);
        let mut out = vec![0.0; n * self.dim];
        // SAFETY: `weights` is dim x npix with row stride npix, `images` is
        // npix x n with column stride npix, `out` is dim x n with column
        // stride dim; all three buffers have exactly those extents.
        #[allow(unsafe_code)]
        unsafe {
            matrixmultiply::dgemm(
                self.dim,
                npix,
                n,
                1.0,
                self.weights.as_ptr(),
                npix as isize,
                1,
                images.as_ptr(),
                1,
                npix as isize,
                0.0,
                out.as_mut_ptr(),
                1,
                self.dim as isize,
            );
        }
        out.chunks_exact(self.dim)
            .map(|c| Embedding(c.to_vec()))
            .collect()
    }
}

impl Oracle for ProjectionOracle {
    fn input_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn embed_batch(&self, images: &[GrayCanvas]) -> Result<Vec<Embedding>, OracleError> {
        check_batch(self.input_size(), images.iter().map(GrayCanvas::size))?;
        let mut stacked = Vec::with_capacity(images.len() * self.width * self.height);
        for image in images {
            if image.pixels().iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(OracleError::PixelRange);
            }
            match self.mix {
                ChannelMix::Gray => stacked.extend_from_slice(image.pixels()),
                // Gray input is replicated into three channels first.
                mix => stacked.extend(image.pixels().iter().map(|&g| mix.apply([g, g, g]))),
            }
        }
        let out = self.project(&stacked, images.len());
        self.ledger.record(images.len());
        Ok(out)
    }

    fn embed_rgb_batch(&self, images: &[RgbCanvas]) -> Result<Vec<Embedding>, OracleError> {
        if self.mix == ChannelMix::Gray {
            return Err(OracleError::Unsupported("3-channel input"));
        }
        check_batch(self.input_size(), images.iter().map(RgbCanvas::size))?;
        let mut stacked = Vec::with_capacity(images.len() * self.width * self.height);
        for image in images {
            if image
                .pixels()
                .iter()
                .flatten()
                .any(|p| !(0.0..=1.0).contains(p))
            {
                return Err(OracleError::PixelRange);
            }
            stacked.extend(image.pixels().iter().map(|&rgb| self.mix.apply(rgb)));
        }
        let out = self.project(&stacked, images.len());
        self.ledger.record(images.len());
        Ok(out)
    }

    fn images_sent(&self) -> u64 {
        self.ledger.images_sent()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_image(seed: u64, w: usize, h: usize) -> GrayCanvas {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..w * h).map(|_| rng.random_range(0.0..=1.0)).collect();
        GrayCanvas::from_pixels(w, h, pixels).unwrap()
    }

    /// Straightforward matrix regenerated from the documented recipe.
    fn reference_matrix(seed: u64, dim: usize, npix: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim)
            .map(|_| {
                (0..npix)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z / (npix as f64).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Direct 2D blur, one output pixel at a time.
    fn reference_blur(img: &GrayCanvas, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as i64;
        let taps: Vec<f64> = (-r..=r)
            .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = taps.iter().sum();
        let (w, h) = (img.width() as i64, img.height() as i64);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx >= 0 && sx < w && sy >= 0 && sy < h {
                            let k =
                                taps[(dx + r) as usize] * taps[(dy + r) as usize] / (total * total);
                            acc += k * img.get(sx as usize, sy as usize);
                        }
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn unblurred_projection_matches_brute_force() {
        let img = GrayCanvas::from_pixels(2, 2, vec![0.1, 0.9, 0.4, 0.25]).unwrap();
        let oracle = ProjectionOracle::new(99, 4, (2, 2), 0.0).unwrap();
        let got = oracle.embed_batch(core::slice::from_ref(&img)).unwrap();
        let m = reference_matrix(99, 4, 4);
        for (i, row) in m.iter().enumerate() {
            let expected: f64 = row.iter().zip(img.pixels()).map(|(a, b)| a * b).sum();
            assert!((got[0].values()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn blurred_projection_matches_direct_blur() {
        let img = random_image(3, 13, 9);
        let oracle = ProjectionOracle::new(5, 6, (13, 9), 1.3).unwrap();
        let got = oracle.embed_batch(core::slice::from_ref(&img)).unwrap();
        let blurred = reference_blur(&img, 1.3);
        for (i, row) in reference_matrix(5, 6, 13 * 9).iter().enumerate() {
            let expected: f64 = row.iter().zip(&blurred).map(|(a, b)| a * b).sum();
            assert!((got[0].values()[i] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_image_embeds_to_zero() {
        let oracle = ProjectionOracle::new(1, 16, (8, 8), 2.0).unwrap();
        let e = oracle
            .embed_batch(&[GrayCanvas::new(8, 8).unwrap()])
            .unwrap();
        assert!(e[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ledger_counts_images() {
        let oracle = ProjectionOracle::new(1, 8, (6, 6), 1.0).unwrap();
        let batch: Vec<_> = (0..64).map(|s| random_image(s, 6, 6)).collect();
        oracle.embed_batch(&batch).unwrap();
        assert_eq!(oracle.images_sent(), 64);
        assert!(oracle.embed_batch(&[]).is_err());
        assert!(oracle
            .embed_batch(&[GrayCanvas::new(5, 6).unwrap()])
            .is_err());
        assert_eq!(oracle.images_sent(), 64);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let oracle = ProjectionOracle::new(1, 8, (2, 1), 0.0).unwrap();
        let img = GrayCanvas::from_pixels(2, 1, vec![0.5, 1.5]).unwrap();
        assert_eq!(oracle.embed_batch(&[img]), Err(OracleError::PixelRange));
        assert_eq!(oracle.images_sent(), 0);
    }

    #[test]
    fn parameters_validated() {
        assert!(ProjectionOracle::new(1, 1, (4, 4), 0.0).is_err());
        assert!(ProjectionOracle::new(1, 4, (0, 4), 0.0).is_err());
        assert!(ProjectionOracle::new(1, 4, (4, 4), -1.0).is_err());
        assert!(ProjectionOracle::new(1, 4, (4, 4), f64::NAN).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let img = random_image(8, 10, 10);
        let a = ProjectionOracle::new(11, 8, (10, 10), 1.0).unwrap();
        let b = ProjectionOracle::new(11, 8, (10, 10), 1.0).unwrap();
        let c = ProjectionOracle::new(12, 8, (10, 10), 1.0).unwrap();
        let ea = a.embed_batch(core::slice::from_ref(&img)).unwrap();
        assert_eq!(ea, a.embed_batch(core::slice::from_ref(&img)).unwrap());
        assert_eq!(ea, b.embed_batch(core::slice::from_ref(&img)).unwrap());
        assert_ne!(ea, c.embed_batch(&[img]).unwrap());
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let oracle = ProjectionOracle::new(2, 32, (20, 20), 2.0).unwrap();
        let batch: Vec<_> = (0..7).map(|s| random_image(s, 20, 20)).collect();
        let forward = oracle.embed_batch(&batch).unwrap();
        let reversed: Vec<_> = batch.iter().rev().cloned().collect();
        let backward = oracle.embed_batch(&reversed).unwrap();
        for (f, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(f, b);
        }
        let single = oracle.embed_batch(&batch[3..4]).unwrap();
        assert_eq!(single[0], forward[3]);
    }

    #[test]
    fn gray_oracle_refuses_rgb() {
        let oracle = ProjectionOracle::new(2, 4, (2, 2), 0.0).unwrap();
        let rgb = RgbCanvas::from_gray(&GrayCanvas::new(2, 2).unwrap());
        assert!(matches!(
            oracle.embed_rgb_batch(&[rgb]),
            Err(OracleError::Unsupported(_))
        ));
    }

    fn color_image(w: usize, h: usize) -> RgbCanvas {
        let pixels = (0..w * h)
            .map(|i| match i % 3 {
                0 => [1.0, 0.0, 0.0],
                1 => [0.0, 1.0, 0.2],
                _ => [0.3, 0.6, 0.9],
            })
            .collect();
        RgbCanvas::from_pixels(w, h, pixels).unwrap()
    }

    #[test]
    fn luma_oracle_ignores_color() {
        let oracle = ProjectionOracle::luma(4, 16, (9, 7), 1.0).unwrap();
        let rgb = color_image(9, 7);
        let gray = rgb.to_luma();
        let from_rgb = oracle.embed_rgb_batch(&[rgb]).unwrap();
        let from_gray = oracle.embed_batch(core::slice::from_ref(&gray)).unwrap();
        let from_replicated = oracle
            .embed_rgb_batch(&[RgbCanvas::from_gray(&gray)])
            .unwrap();
        assert_eq!(from_rgb, from_gray);
        assert_eq!(from_gray, from_replicated);
    }

    #[test]
    fn luma_oracle_equal_luma_colors_match() {
        // Pure red at intensity 1 and a green chosen to have the same luma.
        let g = 0.299 / 0.587;
        let red = RgbCanvas::from_pixels(2, 2, vec![[1.0, 0.0, 0.0]; 4]).unwrap();
        let green = RgbCanvas::from_pixels(2, 2, vec![[0.0, g, 0.0]; 4]).unwrap();
        let oracle = ProjectionOracle::luma(4, 8, (2, 2), 0.0).unwrap();
        let er = oracle.embed_rgb_batch(&[red]).unwrap();
        let eg = oracle.embed_rgb_batch(&[green]).unwrap();
        for (a, b) in er[0].values().iter().zip(eg[0].values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn projection_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let oracle = ProjectionOracle::new(17, 12, (11, 8), 1.5).unwrap();
            let i1 = random_image(s1, 11, 8);
            let i2 = random_image(s2, 11, 8);
            let mixed = i1.scale(a).unwrap().add(&i2.scale(b).unwrap()).unwrap();
            let e = oracle.embed_batch(&[i1, i2, mixed]).unwrap();
            for k in 0..12 {
                let expected = a * e[0].values()[k] + b * e[1].values()[k];
                prop_assert!((e[2].values()[k] - expected).abs() < 1e-6);
            }
        }
    }
}
