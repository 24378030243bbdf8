//! JSON bodies of the embedding protocol.
//!
//! * `POST /embed` with `{"images": [base64 of PGM or PNG bytes, ...]}`
//!   answers `{"dim": n, "embeddings": [[f64, ...], ...]}`.
//! * `GET /ledger` answers `{"images_sent": n}`.
//! * Malformed batches get HTTP 400 with `{"error": "..."}`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use blobvert_core::canvas::GrayCanvas;
use serde::{Deserialize, Serialize};

use crate::image_io::{decode_image, encode_image, ImageFormat, ImageIoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerResponse {
    pub images_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// 8-bit PGM, base64-encoded.
pub fn encode_wire_image(canvas: &GrayCanvas) -> Result<String, ImageIoError> {
    Ok(STANDARD.encode(encode_image(canvas, ImageFormat::Pgm)?))
}

pub fn decode_wire_image(text: &str) -> Result<GrayCanvas, String> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| format!("invalid base64: {e}"))?;
    decode_image(&bytes).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_image_is_8_bit_exact() {
        let c = GrayCanvas::from_bytes(3, 2, &[0, 1, 2, 128, 254, 255]).unwrap();
        assert_eq!(
            decode_wire_image(&encode_wire_image(&c).unwrap()).unwrap(),
            c
        );
    }

    #[test]
    fn wire_accepts_png() {
        let c = GrayCanvas::from_bytes(2, 2, &[9, 8, 7, 6]).unwrap();
        let png = STANDARD.encode(encode_image(&c, ImageFormat::Png).unwrap());
        assert_eq!(decode_wire_image(&png).unwrap(), c);
        assert!(decode_wire_image("!!!").is_err());
    }

    #[test]
    fn json_shapes() {
        let r: EmbedResponse =
            serde_json::from_str(r#"{"dim": 2, "embeddings": [[1.0, 2.5]]}"#).unwrap();
        assert_eq!(r.embeddings[0], vec![1.0, 2.5]);
        assert_eq!(
            serde_json::to_string(&LedgerResponse { images_sent: 7 }).unwrap(),
            r#"{"images_sent":7}"#
        );
    }
}
