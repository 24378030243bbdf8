//! The Gaussian-blob primitive: rendering, mirror symmetrization, random
//! sampling and the initialization dictionary.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canvas::{CanvasError, GrayCanvas};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlobError {
    #[error("blob parameters must be finite with positive standard deviations: {0:?}")]
    InvalidBlob(GaussianBlob),
    #[error("invalid interval [{lo}, {hi}] for {name}")]
    InvalidInterval {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("dictionary value list `{0}` is empty")]
    EmptyValueList(&'static str),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
}

/// Anisotropic 2D Gaussian
/// `A * exp(-(x - x0)^2 / 2 sigma1^2) * exp(-(y - y0)^2 / 2 sigma2^2)`.
///
/// `x` is the column and `y` the row, so `sigma1` stretches the blob
/// horizontally and `sigma2` vertically.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianBlob {
    pub x0: f64,
    pub y0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub amplitude: f64,
}

impl GaussianBlob {
    pub fn new(
        x0: f64,
        y0: f64,
        sigma1: f64,
        sigma2: f64,
        amplitude: f64,
    ) -> Result<Self, BlobError> {
        let blob = Self {
            x0,
            y0,
            sigma1,
            sigma2,
            amplitude,
        };
        blob.validate()?;
        Ok(blob)
    }

    pub fn validate(&self) -> Result<(), BlobError> {
        let finite = self.params().iter().all(|v| v.is_finite());
        if !finite || self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(BlobError::InvalidBlob(*self));
        }
        Ok(())
    }

    /// `[x0, y0, sigma1, sigma2, amplitude]`
    pub fn params(&self) -> [f64; 5] {
        [self.x0, self.y0, self.sigma1, self.sigma2, self.amplitude]
    }

    /// Scalar evaluation at column `x`, row `y`.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.amplitude * axis_factor(x, self.x0, self.sigma1) * axis_factor(y, self.y0, self.sigma2)
    }
}

fn axis_factor(t: f64, center: f64, sigma: f64) -> f64 {
    let d = t - center;
    libm::exp(-(d * d) / (2.0 * sigma * sigma))
}

/// Renders `blob` on a `width x height` canvas.
pub fn render(blob: &GaussianBlob, width: usize, height: usize) -> Result<GrayCanvas, BlobError> {
    blob.validate()?;
    let mut canvas = GrayCanvas::new(width, height)?;
    if blob.amplitude == 0.0 {
        return Ok(canvas);
    }
    let gx: Vec<f64> = (0..width)
        .map(|x| axis_factor(x as f64, blob.x0, blob.sigma1))
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = blob.amplitude * axis_factor(y as f64, blob.y0, blob.sigma2);
        pixels.extend(gx.iter().map(|g| row * g));
    }
    canvas = GrayCanvas::from_pixels(width, height, pixels)?;
    Ok(canvas)
}

/// Mirror about the vertical center axis.
pub fn mirror_field(field: &GrayCanvas) -> GrayCanvas {
    field.mirror()
}

/// `render(blob) + mirror_field(render(blob))`.
pub fn render_symmetric(
    blob: &GaussianBlob,
    width: usize,
    height: usize,
) -> Result<GrayCanvas, BlobError> {
    let field = render(blob, width, height)?;
    Ok(field.add(&mirror_field(&field))?)
}

/// Closed interval `[lo, hi]`; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(from = "[f64; 2]", into = "[f64; 2]")
)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn check(&self, name: &'static str) -> Result<(), BlobError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(BlobError::InvalidInterval {
                name,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Sampling law for random blobs. Each parameter is drawn independently and
/// uniformly from its interval.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    pub x0_range: Interval,
    pub y0_range: Interval,
    /// Shared by both standard deviations.
    pub sigma_range: Interval,
    pub amplitude_range: Interval,
    /// Render every sampled blob together with its left-right mirror image.
    pub symmetric: bool,
    pub seed: u64,
}

impl SamplerConfig {
    /// Centers anywhere on the canvas, `sigma` in `[2, 30]` px at 112 px
    /// (the upper end scales with the shorter side), amplitude in
    /// `[-0.1, 0.1]`, symmetric.
    pub fn for_canvas(width: usize, height: usize) -> Self {
        let scale = width.min(height) as f64 / 112.0;
        Self {
            x0_range: Interval::new(0.0, (width - 1) as f64),
            y0_range: Interval::new(0.0, (height - 1) as f64),
            sigma_range: Interval::new(2.0, (30.0 * scale).max(2.0)),
            amplitude_range: Interval::new(-0.1, 0.1),
            symmetric: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BlobError> {
        self.x0_range.check("x0_range")?;
        self.y0_range.check("y0_range")?;
        self.sigma_range.check("sigma_range")?;
        self.amplitude_range.check("amplitude_range")?;
        if self.sigma_range.lo <= 0.0 {
            return Err(BlobError::InvalidInterval {
                name: "sigma_range",
                lo: self.sigma_range.lo,
                hi: self.sigma_range.hi,
            });
        }
        Ok(())
    }
}

/// Seeded blob sampler. Owns a private ChaCha8 stream; the output depends
/// only on the seed and the sequence of calls.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: SamplerConfig,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self, BlobError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, rng })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    fn draw(&mut self, range: Interval) -> f64 {
        if range.lo == range.hi {
            return range.lo;
        }
        self.rng.random_range(range.lo..=range.hi)
    }

    /// Draws `n` blobs. Parameters are drawn in the order
    /// `x0, y0, sigma1, sigma2, amplitude` for each blob.
    pub fn sample_batch(&mut self, n: usize) -> Result<Vec<GaussianBlob>, BlobError> {
        if n == 0 {
            return Err(BlobError::EmptyBatch);
        }
        let c = self.config.clone();
        let blobs = (0..n)
            .map(|_| GaussianBlob {
                x0: self.draw(c.x0_range),
                y0: self.draw(c.y0_range),
                sigma1: self.draw(c.sigma_range),
                sigma2: self.draw(c.sigma_range),
                amplitude: self.draw(c.amplitude_range),
            })
            .collect();
        Ok(blobs)
    }

    /// Renders `blob` in this sampler's mode (mirrored or plain).
    pub fn render(
        &self,
        blob: &GaussianBlob,
        width: usize,
        height: usize,
    ) -> Result<GrayCanvas, BlobError> {
        if self.config.symmetric {
            render_symmetric(blob, width, height)
        } else {
            render(blob, width, height)
        }
    }
}

/// Parameter grid for the initialization dictionary.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DictionaryGrid {
    pub x0_values: Vec<f64>,
    pub y0_values: Vec<f64>,
    pub sigma1_values: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub amplitude: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl DictionaryGrid {
    /// The default 8 x 10 x 7 x 8 = 4480 grid: `x0` over the central half of
    /// the columns, `y0` over row bands covering the full height,
    /// `sigma1` in `[8, 40]` and `sigma2` in `[8, 48]` px (at 112 px, scaled
    /// with the shorter side), amplitude 0.5.
    pub fn default_for(width: usize, height: usize) -> Self {
        let w = (width - 1) as f64;
        let scale = width.min(height) as f64 / 112.0;
        let rows = 10;
        Self {
            x0_values: linspace(0.25 * w, 0.75 * w, 8),
            y0_values: (0..rows)
                .map(|i| (i as f64 + 0.5) * height as f64 / rows as f64 - 0.5)
                .collect(),
            sigma1_values: linspace(8.0 * scale, 40.0 * scale, 7),
            sigma2_values: linspace(8.0 * scale, 48.0 * scale, 8),
            amplitude: 0.5,
        }
    }

    pub fn len(&self) -> usize {
        self.x0_values.len()
            * self.y0_values.len()
            * self.sigma1_values.len()
            * self.sigma2_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cartesian product of the grid, `x0` outermost and `sigma2` innermost.
pub fn build_dictionary(grid: &DictionaryGrid) -> Result<Vec<GaussianBlob>, BlobError> {
    let lists = [
        ("x0_values", &grid.x0_values),
        ("y0_values", &grid.y0_values),
        ("sigma1_values", &grid.sigma1_values),
        ("sigma2_values", &grid.sigma2_values),
    ];
    for (name, list) in lists {
        if list.is_empty() {
            return Err(BlobError::EmptyValueList(name));
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for &x0 in &grid.x0_values {
        for &y0 in &grid.y0_values {
            for &sigma1 in &grid.sigma1_values {
                for &sigma2 in &grid.sigma2_values {
                    out.push(GaussianBlob::new(x0, y0, sigma1, sigma2, grid.amplitude)?);
                }
            }
        }
    }
    Ok(out)
}
