//! `.emb` embedding files: `b"EMB1"`, little-endian `u32` dimension, then
//! `dim` little-endian `f32` values.

use std::path::Path;

use blobvert_core::oracle::Embedding;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not an embedding file (bad magic)")]
    BadMagic,
    #[error("embedding file truncated or oversized: header says {dim} values, found {bytes} payload bytes")]
    Length { dim: usize, bytes: usize },
    #[error("embedding is empty or contains non-finite values")]
    Invalid,
}

pub fn encode_embedding(embedding: &Embedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * embedding.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(embedding.dim() as u32).to_le_bytes());
    for &v in embedding.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Embedding, EmbFileError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(EmbFileError::BadMagic);
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[8..];
    if payload.len() != dim * 4 {
        return Err(EmbFileError::Length {
            dim,
            bytes: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Embedding::new(values).map_err(|_| EmbFileError::Invalid)
}

pub fn write_embedding(path: &Path, embedding: &Embedding) -> Result<(), EmbFileError> {
    std::fs::write(path, encode_embedding(embedding)).map_err(|source| EmbFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_embedding(path: &Path) -> Result<Embedding, EmbFileError> {
    let bytes = std::fs::read(path).map_err(|source| EmbFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_embedding(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let e = Embedding::new(vec![1.0, -2.5]).unwrap();
        let bytes = encode_embedding(&e);
        assert_eq!(&bytes[..8], b"EMB1\x02\x00\x00\x00");
        assert_eq!(&bytes[8..12], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(
            decode_embedding(b"EMB2\x01\x00\x00\x00\x00\x00\x80\x3f"),
            Err(EmbFileError::BadMagic)
        ));
        assert!(matches!(
            decode_embedding(b"EMB1\x02\x00\x00\x00\x00\x00\x80\x3f"),
            Err(EmbFileError::Length { .. })
        ));
        assert!(matches!(
            decode_embedding(b"EMB1\x00\x00\x00\x00"),
            Err(EmbFileError::Invalid)
        ));
        let nan = [b"EMB1\x01\x00\x00\x00".as_slice(), &f32::NAN.to_le_bytes()].concat();
        assert!(matches!(decode_embedding(&nan), Err(EmbFileError::Invalid)));
    }

    proptest! {
        #[test]
        fn f32_values_round_trip(values in proptest::collection::vec(-1e6f32..1e6, 1..300)) {
            let e = Embedding::new(values.iter().map(|&v| f64::from(v)).collect()).unwrap();
            prop_assert_eq!(decode_embedding(&encode_embedding(&e)).unwrap(), e);
        }
    }
}
