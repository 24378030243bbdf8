//! 8-bit grayscale image files (binary PGM and PNG) and RGB loading.

use std::io::Cursor;
use std::path::Path;

use blobvert_core::canvas::{CanvasError, GrayCanvas, RgbCanvas};
use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("pixel values must be clamped to [0, 1] before saving")]
    OutOfRange,
    #[error("image is {found:?}, expected {expected:?}")]
    SizeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Canvas(#[from] CanvasError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, ImageIoError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(Self::Pgm),
            "png" => Ok(Self::Png),
            _ => Err(ImageIoError::UnsupportedFormat(path.display().to_string())),
        }
    }
}

fn malformed(e: impl std::fmt::Display) -> ImageIoError {
    ImageIoError::Malformed(e.to_string())
}

/// Encodes a canvas whose pixels already lie in `[0, 1]`.
pub fn encode_image(canvas: &GrayCanvas, format: ImageFormat) -> Result<Vec<u8>, ImageIoError> {
    if canvas.pixels().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(ImageIoError::OutOfRange);
    }
    let bytes = canvas.to_bytes();
    let (w, h) = (canvas.width() as u32, canvas.height() as u32);
    let mut out = Vec::new();
    match format {
        ImageFormat::Pgm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, ExtendedColorType::L8),
        ImageFormat::Png => {
            PngEncoder::new(&mut out).write_image(&bytes, w, h, ExtendedColorType::L8)
        }
    }
    .map_err(malformed)?;
    Ok(out)
}

fn guess(bytes: &[u8]) -> Result<image::ImageFormat, ImageIoError> {
    match bytes {
        [b'P', b'1'..=b'6', ..] => Ok(image::ImageFormat::Pnm),
        [0x89, b'P', b'N', b'G', ..] => Ok(image::ImageFormat::Png),
        _ => Err(ImageIoError::UnsupportedFormat(
            "unrecognized image header".into(),
        )),
    }
}

fn decode(bytes: &[u8]) -> Result<image::DynamicImage, ImageIoError> {
    let format = guess(bytes)?;
    image::ImageReader::with_format(Cursor::new(bytes), format)
        .decode()
        .map_err(malformed)
}

/// Decodes PGM or PNG bytes into a canvas with `q / 255` pixels. Color
/// files are reduced to luma by the decoder.
pub fn decode_image(bytes: &[u8]) -> Result<GrayCanvas, ImageIoError> {
    let gray = decode(bytes)?.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(GrayCanvas::from_bytes(
        w as usize,
        h as usize,
        gray.as_raw(),
    )?)
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbCanvas, ImageIoError> {
    let rgb = decode(bytes)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| p.0.map(|c| f64::from(c) / 255.0))
        .collect();
    Ok(RgbCanvas::from_pixels(w as usize, h as usize, pixels)?)
}

fn read(path: &Path) -> Result<Vec<u8>, ImageIoError> {
    std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_image(
    canvas: &GrayCanvas,
    path: &Path,
    format: ImageFormat,
) -> Result<(), ImageIoError> {
    let bytes = encode_image(canvas, format)?;
    std::fs::write(path, bytes).map_err(|source| ImageIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_image(path: &Path) -> Result<GrayCanvas, ImageIoError> {
    decode_image(&read(path)?)
}

pub fn load_rgb(path: &Path) -> Result<RgbCanvas, ImageIoError> {
    decode_rgb(&read(path)?)
}

/// Bilinear resize.
pub fn resize(
    canvas: &GrayCanvas,
    width: usize,
    height: usize,
) -> Result<GrayCanvas, ImageIoError> {
    if canvas.size() == (width, height) {
        return Ok(canvas.clone());
    }
    let data: Vec<f32> = canvas.pixels().iter().map(|&p| p as f32).collect();
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(canvas.width() as u32, canvas.height() as u32, data)
            .ok_or_else(|| malformed("buffer size"))?;
    let out = image::imageops::resize(
        &buf,
        width as u32,
        height as u32,
        image::imageops::FilterType::Triangle,
    );
    let pixels = out.into_raw().into_iter().map(f64::from).collect();
    Ok(GrayCanvas::from_pixels(width, height, pixels)?)
}

/// Loads an initialization image, resizing it only when `allow_resize` is
/// set.
pub fn load_init_image(
    path: &Path,
    size: (usize, usize),
    allow_resize: bool,
) -> Result<GrayCanvas, ImageIoError> {
    let image = load_image(path)?;
    if image.size() == size {
        Ok(image)
    } else if allow_resize {
        resize(&image, size.0, size.1)
    } else {
        Err(ImageIoError::SizeMismatch {
            expected: size,
            found: image.size(),
        })
    }
}
