//! Matrix files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! "MMDK" | 0x01 | kind (0 = distance, 1 = kernel) | n: u32
//! | n*n f64 values, row-major
//! | n ids, each as len: u32 followed by len UTF-8 bytes
//! ```
//!
//! The CSV mirror has a header `id,<id_1>,...,<id_n>` followed by one row per
//! id, the first column repeating the id.

use std::path::Path;

use nalgebra::DMatrix;

use super::matrix::{DistanceMatrix, KernelMatrix};
use crate::error::{Error, Result};
use crate::util::fmt_f64;

pub const MATRIX_MAGIC: &[u8; 4] = b"MMDK";
pub const MATRIX_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Distance = 0,
    Kernel = 1,
}

/// Raw matrix contents as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredMatrix {
    pub kind: MatrixKind,
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn encode_matrix(m: &StoredMatrix) -> Vec<u8> {
    let n = m.ids.len();
    let mut out = Vec::with_capacity(10 + n * n * 8 + n * 16);
    out.extend_from_slice(MATRIX_MAGIC);
    out.push(MATRIX_VERSION);
    out.push(m.kind as u8);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            out.extend_from_slice(&m.values[(i, j)].to_le_bytes());
        }
    }
    for id in &m.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<StoredMatrix> {
    let short = || Error::format(path, "truncated matrix file");
    if bytes.len() < 10 {
        return Err(short());
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(Error::format(path, "bad magic (expected \"MMDK\")"));
    }
    if bytes[4] != MATRIX_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
    }
    let kind = match bytes[5] {
        0 => MatrixKind::Distance,
        1 => MatrixKind::Kernel,
        f => return Err(Error::format(path, format!("unknown matrix kind flag {f}"))),
    };
    let n = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let mut pos = 10;
    let payload = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(short)?;
    if bytes.len() < pos + payload {
        return Err(short());
    }
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            values[(i, j)] = f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
            pos += 8;
        }
    }
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        if bytes.len() < pos + 4 {
            return Err(short());
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        pos += 4;
        if bytes.len() < pos + len {
            return Err(short());
        }
        let id = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|_| Error::format(path, "id is not UTF-8"))?;
        ids.push(id.to_string());
        pos += len;
    }
    if pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after id table"));
    }
    Ok(StoredMatrix { kind, ids, values })
}

pub fn matrix_to_csv(ids: &[String], values: &DMatrix<f64>) -> String {
    let mut out = String::from("id");
    for id in ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..ids.len() {
            out.push(',');
            out.push_str(&fmt_f64(values[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(path, "empty matrix CSV"))?;
    let ids: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let n = ids.len();
    let mut values = DMatrix::zeros(n, n);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if i >= n {
            return Err(Error::format(path, "more rows than ids"));
        }
        let mut cells = line.split(',');
        let row_id = cells.next().unwrap_or("").trim();
        if row_id != ids[i] {
            return Err(Error::format(
                path,
                format!("row {i} id {row_id:?} does not match header id {:?}", ids[i]),
            ));
        }
        let row: Vec<f64> = cells
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("row {i}: unparsable value")))?;
        if row.len() != n {
            return Err(Error::format(path, format!("row {i} has {} values", row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::format(path, format!("{rows} rows for {n} ids")));
    }
    Ok((ids, values))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false)
}

/// Reads a matrix file; `.csv` files use the CSV mirror (whose kind is
/// supplied by the caller since CSV carries no flag).
pub fn read_stored_matrix(path: impl AsRef<Path>, csv_kind: MatrixKind) -> Result<StoredMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
        let (ids, values) = matrix_from_csv(&text, path)?;
        Ok(StoredMatrix {
            kind: csv_kind,
            ids,
            values,
        })
    } else {
        decode_matrix(&bytes, path)
    }
}

pub fn write_distance(d: &DistanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        write_bytes(path, matrix_to_csv(d.ids(), d.values()).as_bytes())
    } else {
        let m = StoredMatrix {
            kind: MatrixKind::Distance,
            ids: d.ids().to_vec(),
            values: d.values().clone(),
        };
        write_bytes(path, &encode_matrix(&m))
    }
}

pub fn write_kernel(k: &KernelMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        write_bytes(path, matrix_to_csv(k.ids(), k.values()).as_bytes())
    } else {
        let m = StoredMatrix {
            kind: MatrixKind::Kernel,
            ids: k.ids().to_vec(),
            values: k.values().clone(),
        };
        write_bytes(path, &encode_matrix(&m))
    }
}

pub fn read_distance(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let m = read_stored_matrix(path, MatrixKind::Distance)?;
    if m.kind != MatrixKind::Distance {
        return Err(Error::format(path, "expected a distance matrix, found a kernel"));
    }
    DistanceMatrix::new(m.ids, m.values).map_err(|e| e.in_file(path))
}

/// Reads a kernel matrix; `gamma` is not part of the file format and must be
/// supplied from side metadata when known.
pub fn read_kernel(path: impl AsRef<Path>, gamma: Option<f64>) -> Result<KernelMatrix> {
    let path = path.as_ref();
    let m = read_stored_matrix(path, MatrixKind::Kernel)?;
    if m.kind != MatrixKind::Kernel {
        return Err(Error::format(path, "expected a kernel matrix, found a distance matrix"));
    }
    KernelMatrix::from_values(m.ids, gamma, m.values).map_err(|e| e.in_file(path))
}
