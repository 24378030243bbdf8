//! Real-valued image accumulators.
//!
//! [`GrayCanvas`] is the reconstruction state. It is deliberately unbounded:
//! blobs add and subtract freely, and only copies headed for an oracle or a
//! file are clamped to `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Weights used to reduce RGB to luma.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CanvasError {
    #[error("invalid canvas dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("pixel buffer has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value")]
    NonFinite,
}

fn checked_len(width: usize, height: usize) -> Result<usize, CanvasError> {
    let bad = CanvasError::InvalidDimensions { width, height };
    if width == 0 || height == 0 {
        return Err(bad);
    }
    let len = width.checked_mul(height).ok_or(bad.clone())?;
    // Keep the byte size of the widest buffer (RGB f64) addressable.
    len.checked_mul(3 * core::mem::size_of::<f64>())
        .filter(|&bytes| bytes <= isize::MAX as usize)
        .ok_or(bad)?;
    Ok(len)
}

/// Grayscale image, row-major, `pixels[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayCanvas {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayCanvas {
    /// All-zero canvas.
    pub fn new(width: usize, height: usize) -> Result<Self, CanvasError> {
        let len = checked_len(width, height)?;
        Ok(Self {
            width,
            height,
            pixels: vec![0.0; len],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, CanvasError> {
        let len = checked_len(width, height)?;
        if pixels.len() != len {
            return Err(CanvasError::LengthMismatch {
                expected: len,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(CanvasError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Decodes 8-bit samples as `q / 255`.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self, CanvasError> {
        let pixels = bytes.iter().map(|&q| f64::from(q) / 255.0).collect();
        Self::from_pixels(width, height, pixels)
    }

    /// 8-bit quantization `round(clamp(p) * 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| libm::round(p.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Pixel at column `x`, row `y`.
    ///
    /// # Panics
    ///
    /// Panics if the coordinate lies outside the canvas.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) out of bounds"
        );
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) -> Result<(), CanvasError> {
        if !value.is_finite() {
            return Err(CanvasError::NonFinite);
        }
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) out of bounds"
        );
        self.pixels[y * self.width + x] = value;
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    fn check_same_size(&self, other: &GrayCanvas) -> Result<(), CanvasError> {
        if self.size() != other.size() {
            return Err(CanvasError::DimensionMismatch {
                expected: self.size(),
                found: other.size(),
            });
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, field: &GrayCanvas) -> Result<GrayCanvas, CanvasError> {
        let mut out = self.clone();
        out.add_assign(field)?;
        Ok(out)
    }

    pub(crate) fn add_assign(&mut self, field: &GrayCanvas) -> Result<(), CanvasError> {
        self.check_same_size(field)?;
        for (p, q) in self.pixels.iter_mut().zip(&field.pixels) {
            *p += q;
        }
        if self.pixels.iter().any(|p| !p.is_finite()) {
            return Err(CanvasError::NonFinite);
        }
        Ok(())
    }

    /// Every pixel multiplied by `factor`.
    pub fn scale(&self, factor: f64) -> Result<GrayCanvas, CanvasError> {
        let mut out = self.clone();
        out.scale_assign(factor)?;
        Ok(out)
    }

    pub(crate) fn scale_assign(&mut self, factor: f64) -> Result<(), CanvasError> {
        if !factor.is_finite() {
            return Err(CanvasError::NonFinite);
        }
        for p in &mut self.pixels {
            *p *= factor;
        }
        if self.pixels.iter().any(|p| !p.is_finite()) {
            return Err(CanvasError::NonFinite);
        }
        Ok(())
    }

    /// Copy with every pixel clamped to `[0, 1]`.
    pub fn clamp_unit(&self) -> GrayCanvas {
        let mut out = self.clone();
        out.clamp_unit_in_place();
        out
    }

    pub(crate) fn clamp_unit_in_place(&mut self) {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
    }

    /// Left-right mirror: `out(x, y) = in(width - 1 - x, y)`.
    pub fn mirror(&self) -> GrayCanvas {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks_exact(self.width) {
            pixels.extend(row.iter().rev());
        }
        GrayCanvas {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Three-channel image used by the color-tolerance harness.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbCanvas {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbCanvas {
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
    ) -> Result<Self, CanvasError> {
        let len = checked_len(width, height)?;
        if pixels.len() != len {
            return Err(CanvasError::LengthMismatch {
                expected: len,
                found: pixels.len(),
            });
        }
        if pixels.iter().flatten().any(|p| !p.is_finite()) {
            return Err(CanvasError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Gray replicated into all three channels.
    pub fn from_gray(gray: &GrayCanvas) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            pixels: gray.pixels.iter().map(|&g| [g, g, g]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    /// Reduces each pixel with `mix`.
    pub fn map_channels(&self, mix: impl Fn([f64; 3]) -> f64) -> GrayCanvas {
        GrayCanvas {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&rgb| mix(rgb)).collect(),
        }
    }

    /// Luma conversion with [`LUMA_WEIGHTS`]. Pixels whose channels are
    /// already equal pass through unchanged.
    pub fn to_luma(&self) -> GrayCanvas {
        self.map_channels(luma)
    }
}

/// Luma of one pixel; exact for pixels that are already gray.
pub fn luma([r, g, b]: [f64; 3]) -> f64 {
    if r == g && g == b {
        r
    } else {
        LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canvas(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> GrayCanvas {
        let mut pixels = Vec::new();
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayCanvas::from_pixels(width, height, pixels).unwrap()
    }

    #[test]
    fn new_canvas_is_zero() {
        let c = GrayCanvas::new(112, 112).unwrap();
        assert_eq!(c.pixels().len(), 12544);
        assert!(c.pixels().iter().all(|&p| p == 0.0));
        assert_eq!(c.sum(), 0.0);
        let one = GrayCanvas::new(1, 1).unwrap();
        assert_eq!(one.pixels(), &[0.0]);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(GrayCanvas::new(0, 5).is_err());
        assert!(GrayCanvas::new(5, 0).is_err());
        assert!(GrayCanvas::new(usize::MAX, 2).is_err());
        assert!(GrayCanvas::new(1 << 40, 1 << 40).is_err());
        assert!(GrayCanvas::from_pixels(2, 2, vec![0.0; 3]).is_err());
        assert_eq!(
            GrayCanvas::from_pixels(1, 1, vec![f64::NAN]),
            Err(CanvasError::NonFinite)
        );
    }

    #[test]
    fn add_is_pure_and_elementwise() {
        let mut a = GrayCanvas::new(8, 8).unwrap();
        let mut b = GrayCanvas::new(8, 8).unwrap();
        a.set(3, 3, 0.2).unwrap();
        b.set(3, 3, 0.5).unwrap();
        let sum = a.add(&b).unwrap();
        assert!((sum.get(3, 3) - 0.7).abs() < 1e-15);
        assert_eq!(a.get(3, 3), 0.2);
        assert_eq!(b.get(3, 3), 0.5);
        assert_eq!(a.add(&GrayCanvas::new(8, 8).unwrap()).unwrap(), a);
        assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
    }

    #[test]
    fn add_rejects_mismatch() {
        let a = GrayCanvas::new(4, 4).unwrap();
        let b = GrayCanvas::new(4, 5).unwrap();
        assert!(matches!(
            a.add(&b),
            Err(CanvasError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scale_cases() {
        let a = canvas(5, 4, |x, y| (x as f64) - 0.3 * y as f64);
        assert_eq!(a.scale(1.0).unwrap(), a);
        assert!(a.scale(0.0).unwrap().pixels().iter().all(|&p| p == 0.0));
        assert!(a.scale(f64::INFINITY).is_err());
        assert!(a.scale(f64::NAN).is_err());

        let mut one = GrayCanvas::from_pixels(1, 1, vec![1.0]).unwrap();
        for _ in 0..100 {
            one = one.scale(0.99).unwrap();
        }
        assert!((one.get(0, 0) - 0.366_032_341_273_229_3).abs() < 1e-12);
    }

    #[test]
    fn clamp_cases() {
        let c = GrayCanvas::from_pixels(3, 1, vec![-0.3, 1.7, 0.5])
            .unwrap()
            .clamp_unit();
        assert_eq!(c.pixels(), &[0.0, 1.0, 0.5]);
    }

    #[test]
    fn quantization_examples() {
        let c = GrayCanvas::from_pixels(3, 1, vec![1.0, 0.0, 0.5]).unwrap();
        let bytes = c.to_bytes();
        assert_eq!(bytes, vec![255, 0, 128]);
        let back = GrayCanvas::from_bytes(3, 1, &bytes).unwrap();
        assert_eq!(back.get(0, 0), 1.0);
        assert_eq!(back.get(1, 0), 0.0);
        assert!((back.get(2, 0) - 0.501_960_784_313_725_5).abs() < 1e-15);
    }

    #[test]
    fn luma_passes_gray_through() {
        assert_eq!(luma([0.3, 0.3, 0.3]), 0.3);
        assert!((luma([1.0, 0.0, 0.0]) - 0.299).abs() < 1e-15);
    }

    fn arb_pair() -> impl Strategy<Value = (GrayCanvas, GrayCanvas, f64)> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(-10.0f64..10.0, w * h),
                proptest::collection::vec(-10.0f64..10.0, w * h),
                -3.0f64..3.0,
            )
                .prop_map(move |(a, b, k)| {
                    (
                        GrayCanvas::from_pixels(w, h, a).unwrap(),
                        GrayCanvas::from_pixels(w, h, b).unwrap(),
                        k,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn scale_distributes_over_add((a, b, k) in arb_pair()) {
            let lhs = a.add(&b).unwrap().scale(k).unwrap();
            let rhs = a.scale(k).unwrap().add(&b.scale(k).unwrap()).unwrap();
            for (l, r) in lhs.pixels().iter().zip(rhs.pixels()) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
        }

        #[test]
        fn clamp_is_idempotent((a, _b, _k) in arb_pair()) {
            let once = a.clamp_unit();
            prop_assert_eq!(once.clamp_unit(), once.clone());
            prop_assert!(once.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn quantization_is_idempotent((a, _b, _k) in arb_pair()) {
            let bytes = a.to_bytes();
            let back = GrayCanvas::from_bytes(a.width(), a.height(), &bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for (p, q) in a.clamp_unit().pixels().iter().zip(back.pixels()) {
                prop_assert!((p - q).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
