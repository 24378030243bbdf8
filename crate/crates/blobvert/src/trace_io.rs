//! Run traces as line-delimited JSON, one record per iteration:
//! `{"iter":0,"queries":4544,"loss":-0.91,"cos":0.92,"blob":[x0,y0,s1,s2,A]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use blobvert_core::recovery::TraceRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceIoError + '_ {
    move |source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Appends records to a file as they arrive.
pub struct TraceWriter {
    out: BufWriter<File>,
    path: String,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, TraceIoError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<(), TraceIoError> {
        let line = serde_json::to_string(record).expect("trace records serialize");
        writeln!(self.out, "{line}").map_err(|source| TraceIoError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<(), TraceIoError> {
        self.out.flush().map_err(|source| TraceIoError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), TraceIoError> {
    let mut w = TraceWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| TraceIoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
