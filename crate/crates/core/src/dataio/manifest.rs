//! Dataset manifests: `id,path,label,time,event` CSV files binding slide ids to
//! feature files and optional outcomes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::featureset::{read_featureset, FeatureSet};
use crate::error::{Error, Result};
use crate::util::fmt_f64;

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Path as written in the manifest (relative paths resolve against the
    /// manifest's directory).
    pub path: PathBuf,
    pub label: Option<u8>,
    /// Survival time in years.
    pub time: Option<f64>,
    pub event: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

/// A manifest together with its loaded feature sets, index-aligned.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub sets: Vec<FeatureSet>,
}

impl Manifest {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks id uniqueness and per-row outcome consistency.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() {
                return Err(Error::validation("empty id in manifest"));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if let Some(l) = e.label {
                if l > 1 {
                    return Err(Error::validation(format!("{}: label {l} is not binary", e.id)));
                }
            }
            if let Some(ev) = e.event {
                if ev > 1 {
                    return Err(Error::validation(format!("{}: event {ev} is not binary", e.id)));
                }
                if ev == 1 && e.time.is_none() {
                    return Err(Error::validation(format!(
                        "{}: event=1 requires a survival time",
                        e.id
                    )));
                }
            }
            if let Some(t) = e.time {
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::validation(format!("{}: invalid time {t}", e.id)));
                }
            }
        }
        Ok(())
    }

    /// Labels for every entry, failing if any is absent.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.entries
            .iter()
            .map(|e| {
                e.label
                    .ok_or_else(|| Error::validation(format!("{}: missing label", e.id)))
            })
            .collect()
    }

    /// `(time, event)` for every entry, failing if any is absent.
    pub fn outcomes(&self) -> Result<(Vec<f64>, Vec<bool>)> {
        let mut times = Vec::with_capacity(self.len());
        let mut events = Vec::with_capacity(self.len());
        for e in &self.entries {
            match (e.time, e.event) {
                (Some(t), Some(ev)) => {
                    times.push(t);
                    events.push(ev == 1);
                }
                _ => {
                    return Err(Error::validation(format!(
                        "{}: survival outcome (time and event) required",
                        e.id
                    )))
                }
            }
        }
        Ok((times, events))
    }
}

fn parse_opt<T: std::str::FromStr>(cell: Option<&str>, what: &str, row: usize) -> Result<Option<T>> {
    match cell.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| Error::validation(format!("row {row}: cannot parse {what} {s:?}"))),
    }
}

/// Parses manifest CSV text. Only `id` is mandatory among the columns; a
/// missing `path` column yields empty paths (useful for label/outcome files).
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(origin, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| Error::format(origin, "missing `id` column"))?;
    let (path_col, label_col, time_col, event_col) =
        (col("path"), col("label"), col("time"), col("event"));

    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
        let row = i + 2;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c));
        let id = rec.get(id_col).unwrap_or("").to_string();
        let path = PathBuf::from(get(path_col).unwrap_or(""));
        let label = parse_opt::<u8>(get(label_col), "label", row)?;
        let time = parse_opt::<f64>(get(time_col), "time", row)?;
        let event = parse_opt::<u8>(get(event_col), "event", row)?;
        entries.push(ManifestEntry {
            id,
            path,
            label,
            time,
            event,
        });
    }
    let manifest = Manifest { entries };
    manifest.validate().map_err(|e| e.in_file(origin))?;
    Ok(manifest)
}

/// Reads and validates a manifest without touching the feature files.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Loads a manifest and every referenced feature set (in parallel), keeping
/// manifest order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let sets: Vec<FeatureSet> = manifest
        .entries
        .par_iter()
        .map(|e| {
            if e.path.as_os_str().is_empty() {
                return Err(Error::validation(format!("{}: empty feature path", e.id)));
            }
            let p = base.join(&e.path);
            read_featureset(&p).map(|s| s.with_id(e.id.clone()))
        })
        .collect::<Result<_>>()?;
    if let Some(first) = sets.first() {
        let dim = first.dim();
        if let Some(bad) = sets.iter().find(|s| s.dim() != dim) {
            return Err(Error::validation(format!(
                "dimension mismatch: {:?} has d={}, {:?} has d={dim}",
                bad.id(),
                bad.dim(),
                first.id()
            ))
            .in_file(path));
        }
    }
    Ok(Dataset { manifest, sets })
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes a manifest with the canonical header.
pub fn manifest_to_csv(manifest: &Manifest) -> String {
    let mut out = String::from("id,path,label,time,event\n");
    for e in &manifest.entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.id,
            e.path.display(),
            opt_cell(e.label),
            e.time.map(fmt_f64).unwrap_or_default(),
            opt_cell(e.event)
        ));
    }
    out
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest_to_csv(manifest)).map_err(|e| Error::io(path, e))
}
