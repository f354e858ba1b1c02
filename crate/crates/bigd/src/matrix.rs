//! Dense row-major feature matrix and the binary interchange format.
//!
//! The on-disk format is a little-endian 32-bit float matrix with a 16-byte
//! header: an 8-byte magic, the row count as `u32`, and the row dimension as
//! `u32`. It is shared by descriptor dumps and encoded-image matrices.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: [u8; 8] = *b"BIGDMAT1";

/// Row-major matrix of `f64` features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix {
            dim,
            data: Vec::new(),
        }
    }

    /// Wraps an existing row-major buffer; `data.len()` must be a multiple of
    /// `dim`.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be > 0".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(FeatureMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut m = FeatureMatrix::new(dim);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "row of length {} pushed into matrix of dim {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Writes a row-major `f64` buffer as an f32 matrix file.
pub fn write_f32_matrix(path: &Path, dim: usize, values: &[f64]) -> Result<()> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot write {} values as rows of dim {}",
            values.len(),
            dim
        )));
    }
    let rows = values.len() / dim;
    if rows > u32::MAX as usize || dim > u32::MAX as usize {
        return Err(Error::InvalidArgument("matrix too large for format".into()));
    }
    let mut bytes = Vec::with_capacity(16 + values.len() * 4);
    bytes.extend_from_slice(&MATRIX_MAGIC);
    bytes.extend_from_slice(&(rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads only the header of an f32 matrix file: `(rows, dim)`.
pub fn read_f32_header(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if header[..8] != MATRIX_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a matrix file (bad magic)",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    Ok((rows, dim))
}

/// Reads an f32 matrix file back into an `f64` [`FeatureMatrix`].
pub fn read_f32_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || bytes[..8] != MATRIX_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a matrix file (bad magic)",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + rows * dim * 4;
    if dim == 0 || bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {}x{} matrix, found {}",
            path.display(),
            expected,
            rows,
            dim,
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix { dim, data })
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
