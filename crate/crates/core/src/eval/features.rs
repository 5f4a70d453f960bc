//! Feature matrices produced by an external embedding extractor.
//!
//! Binary layout (little endian): the magic `FEAT`, `N: u64`, `D: u64`, then
//! `N * D` `f32` values row by row. Any file without the magic is read as
//! headerless CSV with one row per line.

use std::path::Path;

use super::EvalError;
use crate::fsutil::write_atomic;
use crate::num::Real;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    pub source: String,
}

impl<T: Real> FeatureSet<T> {
    pub fn from_rows(rows: Vec<Vec<T>>, source: impl Into<String>) -> Result<Self, EvalError> {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(EvalError::Format(format!("row {i} has {} values, expected {d}", row.len())));
            }
            data.extend(row);
        }
        Self::from_flat(n, d, data, source)
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<T>, source: impl Into<String>) -> Result<Self, EvalError> {
        if data.len() != n * d {
            return Err(EvalError::Format(format!("{} values for {n}x{d}", data.len())));
        }
        if n < 2 {
            return Err(EvalError::Degenerate(format!("{n} feature rows, need at least 2")));
        }
        if d == 0 {
            return Err(EvalError::Degenerate("zero-dimensional features".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::Format(format!("non-finite value in row {}", pos / d)));
        }
        Ok(Self { n, d, data, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Real>(&self) -> FeatureSet<U> {
        FeatureSet {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            source: self.source.clone(),
        }
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, EvalError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_f64_lossy().to_string()))
                .map_err(|e| EvalError::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| EvalError::Format(e.to_string()))
    }

    /// Writes CSV for a `.csv` extension and the binary layout otherwise.
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.to_csv()?
        } else {
            self.to_binary()
        };
        Ok(write_atomic(path, &bytes)?)
    }
}

pub fn parse_features<T: Real>(bytes: &[u8], source: &str) -> Result<FeatureSet<T>, EvalError> {
    if bytes.starts_with(FEATURE_MAGIC) {
        parse_binary(bytes, source)
    } else {
        parse_csv(bytes, source)
    }
}

fn parse_binary<T: Real>(bytes: &[u8], source: &str) -> Result<FeatureSet<T>, EvalError> {
    let header = |at: usize| -> Result<usize, EvalError> {
        let b: [u8; 8] = bytes
            .get(at..at + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| EvalError::Format("truncated feature header".into()))?;
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| EvalError::Format("feature header overflows".into()))
    };
    let (n, d) = (header(4)?, header(12)?);
    let body = &bytes[20..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| EvalError::Format("feature header overflows".into()))?;
    if body.len() != expected {
        return Err(EvalError::Format(format!("{} payload bytes for {n}x{d} f32 values", body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    FeatureSet::from_flat(n, d, data, source)
}

fn parse_csv<T: Real>(bytes: &[u8], source: &str) -> Result<FeatureSet<T>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| EvalError::Format(format!("row {i}: {e}")))?;
        let row = rec
            .iter()
            .map(|f| {
                let v: f64 = f.parse().map_err(|_| EvalError::Format(format!("row {i}: bad value {f:?}")))?;
                if v.is_finite() {
                    Ok(T::lit(v))
                } else {
                    Err(EvalError::Format(format!("row {i}: non-finite value {f:?}")))
                }
            })
            .collect::<Result<Vec<T>, _>>()?;
        rows.push(row);
    }
    FeatureSet::from_rows(rows, source)
}

pub fn load_features<T: Real>(path: &Path) -> Result<FeatureSet<T>, EvalError> {
    parse_features(&std::fs::read(path)?, &path.display().to_string())
}
