//! End-to-end pipelines behind the command-line subcommands.
//!
//! Each `cmd_*` function is a deterministic function of its inputs and seed
//! and writes its artifacts into an output directory.

mod classify;
mod survival;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{agglomerate, assignment_to_csv, cut, Dendrogram, Linkage};
use crate::dataio::{generate_synthetic, load_manifest, parse_manifest, write_synthetic, Dataset, Manifest, SynthSpec};
use crate::error::{Error, Result};
use crate::mmd::{
    distance_matrix, kernel_from_distance, median_inverse_gamma, read_distance, read_kernel, write_distance,
    write_kernel, DistanceMatrix, KernelMatrix, MmdEstimator, PatchKernelConfig, DEFAULT_BLOCK_SIZE, DEFAULT_GAMMA,
    DEFAULT_SIGMA,
};

pub use classify::{cmd_classify, ClassifyConfig, ClassifyOutcome};
pub use survival::{cmd_survival, RunResult, SurvivalConfig, SurvivalOutcome, DEFAULT_OOB_RUNS};

pub const KERNEL_META_FILE: &str = "kernel_meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    Fixed,
    Median,
}

impl FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(GammaMode::Fixed),
            "median" => Ok(GammaMode::Median),
            other => Err(Error::validation(format!("unknown gamma mode {other:?}"))),
        }
    }
}

/// How to turn feature sets into a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSettings {
    pub sigma: f64,
    pub gamma_mode: GammaMode,
    /// Used when `gamma_mode` is `Fixed`.
    pub gamma: f64,
    pub block_size: usize,
}

impl KernelSettings {
    pub fn classification() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            gamma_mode: GammaMode::Fixed,
            gamma: DEFAULT_GAMMA,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub fn survival() -> Self {
        Self {
            gamma_mode: GammaMode::Median,
            ..Self::classification()
        }
    }
}

/// Side metadata written next to kernel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub n: usize,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_mode: Option<GammaMode>,
    #[serde(default)]
    pub block_size: Option<usize>,
    pub min_eigenvalue: f64,
    pub jitter: f64,
}

pub struct KernelArtifacts {
    pub distance: DistanceMatrix,
    pub kernel: KernelMatrix,
    pub meta: KernelMeta,
}

pub fn build_kernel(dataset: &Dataset, settings: &KernelSettings) -> Result<KernelArtifacts> {
    let est = MmdEstimator::new(PatchKernelConfig::new(settings.sigma)?, settings.block_size)?;
    let distance = distance_matrix(&dataset.sets, &est)?;
    let gamma = match settings.gamma_mode {
        GammaMode::Fixed => settings.gamma,
        GammaMode::Median => median_inverse_gamma(&distance)?,
    };
    let kernel = kernel_from_distance(&distance, gamma)?;
    log::info!(
        "kernel over {} sets: gamma {gamma:e}, min eigenvalue {:e}, jitter {:e}",
        kernel.len(),
        kernel.min_eigenvalue(),
        kernel.jitter()
    );
    let meta = KernelMeta {
        n: kernel.len(),
        sigma: Some(settings.sigma),
        gamma: Some(gamma),
        gamma_mode: Some(settings.gamma_mode),
        block_size: Some(settings.block_size),
        min_eigenvalue: kernel.min_eigenvalue(),
        jitter: kernel.jitter(),
    };
    Ok(KernelArtifacts { distance, kernel, meta })
}

pub(crate) fn create_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Generates a synthetic dataset from a JSON generator file; `seed` overrides the file's seed.
pub fn cmd_synth(spec_path: &Path, seed: Option<u64>, out: &Path) -> Result<PathBuf> {
    let text = read_text(spec_path)?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| Error::format(spec_path, format!("synthetic spec: {e}")))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = generate_synthetic(&spec)?;
    create_out_dir(out)?;
    let manifest = write_synthetic(&data, out)?;
    log::info!("wrote {} synthetic sets to {}", data.dataset.sets.len(), out.display());
    Ok(manifest)
}

/// Writes `distance.{mmdk,csv}`, `kernel.{mmdk,csv}` and `kernel_meta.json`.
pub fn cmd_kernel(manifest: &Path, settings: &KernelSettings, out: &Path) -> Result<KernelMeta> {
    let dataset = load_manifest(manifest)?;
    let art = build_kernel(&dataset, settings)?;
    create_out_dir(out)?;
    write_distance(&art.distance, out.join("distance.mmdk"))?;
    write_distance(&art.distance, out.join("distance.csv"))?;
    write_kernel(&art.kernel, out.join("kernel.mmdk"))?;
    write_kernel(&art.kernel, out.join("kernel.csv"))?;
    write_text(&out.join(KERNEL_META_FILE), &to_json_pretty(&art.meta))?;
    Ok(art.meta)
}

/// Where a kernel (or the distance matrix behind it) comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    /// A matrix file previously written by [`cmd_kernel`].
    File(PathBuf),
    /// Computed from a manifest's feature sets.
    Manifest(PathBuf, KernelSettings),
}

/// Reads `kernel_meta.json` beside a kernel file, when present.
fn sibling_meta(kernel_path: &Path) -> Result<Option<KernelMeta>> {
    let p = kernel_path.with_file_name(KERNEL_META_FILE);
    if !p.exists() {
        return Ok(None);
    }
    let meta = serde_json::from_str(&read_text(&p)?).map_err(|e| Error::format(&p, e.to_string()))?;
    Ok(Some(meta))
}

pub(crate) struct LoadedKernel {
    pub kernel: KernelMatrix,
    pub meta: KernelMeta,
    /// Manifest rows when the kernel was computed from a manifest.
    pub manifest: Option<Manifest>,
}

pub(crate) fn obtain_kernel(source: &MatrixSource) -> Result<LoadedKernel> {
    match source {
        MatrixSource::File(path) => {
            let stored = sibling_meta(path)?;
            let kernel = read_kernel(path, stored.as_ref().and_then(|m| m.gamma))?;
            let meta = KernelMeta {
                n: kernel.len(),
                min_eigenvalue: kernel.min_eigenvalue(),
                jitter: kernel.jitter(),
                ..stored.unwrap_or(KernelMeta {
                    n: 0,
                    sigma: None,
                    gamma: None,
                    gamma_mode: None,
                    block_size: None,
                    min_eigenvalue: 0.0,
                    jitter: 0.0,
                })
            };
            Ok(LoadedKernel { kernel, meta, manifest: None })
        }
        MatrixSource::Manifest(path, settings) => {
            let dataset = load_manifest(path)?;
            let art = build_kernel(&dataset, settings)?;
            Ok(LoadedKernel {
                kernel: art.kernel,
                meta: art.meta,
                manifest: Some(dataset.manifest),
            })
        }
    }
}

/// Reads a CSV with an `id` column plus label/outcome columns.
pub(crate) fn read_table(path: &Path) -> Result<Manifest> {
    parse_manifest(&read_text(path)?, path).map_err(|e| e.in_file(path))
}

/// One id per line; blank lines are skipped.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !seen.insert(line.to_string()) {
            return Err(Error::DuplicateId(line.to_string()).in_file(path));
        }
        out.push(line.to_string());
    }
    if out.is_empty() {
        return Err(Error::validation("id list is empty").in_file(path));
    }
    Ok(out)
}

pub(crate) fn resolve_ids(kernel: &KernelMatrix, ids: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = kernel.ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    ids.iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| Error::UnknownId(id.clone())))
        .collect()
}

#[derive(Debug)]
pub struct ClusterOutcome {
    pub dendrogram: Dendrogram,
    pub assignment: Vec<usize>,
}

/// Writes `dendrogram.json` and `clusters.csv`.
pub fn cmd_cluster(source: &MatrixSource, linkage: Linkage, k: usize, out: &Path) -> Result<ClusterOutcome> {
    let d = match source {
        MatrixSource::File(p) => read_distance(p)?,
        MatrixSource::Manifest(p, settings) => build_kernel(&load_manifest(p)?, settings)?.distance,
    };
    let dendrogram = agglomerate(&d, linkage)?;
    let assignment = cut(&dendrogram, k)?;
    create_out_dir(out)?;
    let mut json = dendrogram.to_json();
    json.push('\n');
    write_text(&out.join("dendrogram.json"), &json)?;
    write_text(&out.join("clusters.csv"), &assignment_to_csv(d.ids(), &assignment))?;
    Ok(ClusterOutcome { dendrogram, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_mode_parse() {
        assert_eq!("median".parse::<GammaMode>().unwrap(), GammaMode::Median);
        assert!("auto".parse::<GammaMode>().is_err());
    }

    #[test]
    fn id_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.txt");
        std::fs::write(&p, "a\n\n b \n").unwrap();
        assert_eq!(read_id_list(&p).unwrap(), vec!["a", "b"]);
        std::fs::write(&p, "a\na\n").unwrap();
        assert!(read_id_list(&p).is_err());
        std::fs::write(&p, "\n").unwrap();
        assert!(read_id_list(&p).is_err());
    }
}
