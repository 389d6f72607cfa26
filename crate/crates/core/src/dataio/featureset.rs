//! Feature sets and their binary / CSV encodings.
//!
//! Binary layout (little endian):
//!
//! ```text
//! "MMDF" | 0x01 | 0x00 | n: u32 | d: u32 | n*d f32 values, patch-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"MMDF";
pub const FEATURE_VERSION: u8 = 0x01;
/// Bytes preceding the payload.
pub const FEATURE_HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4;

/// One bag of patch feature vectors.
///
/// Values are held in single precision (the on-disk precision); all kernel
/// arithmetic widens them to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    id: String,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSet {
    /// Builds a set from row-major patch data, validating the invariants.
    pub fn new(id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 {
            return Err(Error::validation(format!("feature set {id:?}: dimension is 0")));
        }
        if data.is_empty() {
            return Err(Error::validation(format!("feature set {id:?}: no patches")));
        }
        if data.len() % dim != 0 {
            return Err(Error::validation(format!(
                "feature set {id:?}: {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature set {id:?}: non-finite value at patch {}, component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { id, dim, data })
    }

    /// Builds a set from a list of patches.
    pub fn from_patches<P: AsRef<[f32]>>(id: impl Into<String>, patches: &[P]) -> Result<Self> {
        let id = id.into();
        let dim = patches.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * patches.len());
        for (i, p) in patches.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::validation(format!(
                    "feature set {id:?}: patch {i} has {} components, expected {dim}",
                    p.len()
                )));
            }
            data.extend_from_slice(p);
        }
        Self::new(id, dim, data)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of patches N_I.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn patches(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Row-major patch data.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes the binary format from an in-memory buffer.
pub fn decode_featureset(id: &str, bytes: &[u8], path: &Path) -> Result<FeatureSet> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::format(path, "file shorter than header"));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "bad magic (expected \"MMDF\")"));
    }
    if bytes[4] != FEATURE_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != 0 {
        return Err(Error::format(path, "reserved byte must be 0"));
    }
    let n = read_u32(bytes, 6) as usize;
    let d = read_u32(bytes, 10) as usize;
    if n == 0 || d == 0 {
        return Err(Error::validation(format!(
            "{}: patch count {n} and dimension {d} must both be positive",
            path.display()
        )));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    let payload = &bytes[FEATURE_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    FeatureSet::new(id, d, data).map_err(|e| e.in_file(path))
}

/// Encodes a set in the binary format.
pub fn encode_featureset(set: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + set.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.push(FEATURE_VERSION);
    out.push(0);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim as u32).to_le_bytes());
    for v in &set.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_feature_csv(id: &str, text: &str, path: &Path) -> Result<FeatureSet> {
    let mut dim = None;
    let mut data = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f32 = cell.trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: cannot parse {cell:?}", lineno + 1))
            })?;
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(Error::format(
                    path,
                    format!("line {}: {count} values, expected {d}", lineno + 1),
                ))
            }
            _ => {}
        }
    }
    let dim = dim.ok_or_else(|| {
        Error::validation(format!("{}: feature CSV contains no patches", path.display()))
    })?;
    FeatureSet::new(id, dim, data).map_err(|e| e.in_file(path))
}

fn id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false)
}

/// Reads a feature set. Files ending in `.csv` use the CSV encoding; anything
/// else must be the binary format. The set id defaults to the file stem.
pub fn read_featureset(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let id = id_from_path(path);
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
        parse_feature_csv(&id, &text, path)
    } else {
        decode_featureset(&id, &bytes, path)
    }
}

/// Writes a feature set, choosing the encoding by extension as in
/// [`read_featureset`].
pub fn write_featureset(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = if is_csv(path) {
        // f32 Display is shortest round-trip
        set.patches().try_for_each(|p| {
            let line: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))
        })
    } else {
        w.write_all(&encode_featureset(set))
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
