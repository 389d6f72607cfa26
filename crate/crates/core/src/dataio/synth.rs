//! Seeded synthetic datasets: groups of feature sets drawn from per-group
//! Gaussians, with optional binary labels and exponential survival outcomes.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::featureset::{write_featureset, FeatureSet};
use super::manifest::{write_manifest, Dataset, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::util::rng_from_seed;

/// Default administrative censoring horizon (years).
pub const DEFAULT_CENSOR_HORIZON: f64 = 10.0;

/// One generating group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroup {
    pub n_sets: usize,
    /// Per-feature mean; a single value is broadcast to every feature.
    pub mean: Vec<f64>,
    /// Per-feature standard deviation; a single value is broadcast.
    pub scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    /// Exponential event rate (per year) for survival times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    /// Inclusive range of patches per set.
    pub patches_per_set: (usize, usize),
    pub groups: Vec<SynthGroup>,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub censor_horizon: f64,
    /// Rate of independent exponential censoring applied before the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censoring_rate: Option<f64>,
}

fn default_horizon() -> f64 {
    DEFAULT_CENSOR_HORIZON
}

/// A generated dataset plus the generating group of every set.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub groups: Vec<usize>,
}

fn broadcast(v: &[f64], dim: usize, what: &str, g: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(Error::validation(format!(
            "group {g}: {what} has {n} entries, expected 1 or {dim}"
        ))),
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("dim must be positive"));
        }
        let (lo, hi) = self.patches_per_set;
        if lo == 0 || lo > hi {
            return Err(Error::validation(format!(
                "patches_per_set range ({lo}, {hi}) is invalid"
            )));
        }
        if self.groups.is_empty() {
            return Err(Error::validation("at least one group is required"));
        }
        if !(self.censor_horizon > 0.0) {
            return Err(Error::validation("censor_horizon must be positive"));
        }
        if let Some(r) = self.censoring_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::validation("censoring_rate must be positive"));
            }
        }
        for (g, grp) in self.groups.iter().enumerate() {
            if grp.n_sets == 0 {
                return Err(Error::validation(format!("group {g} is empty")));
            }
            let mean = broadcast(&grp.mean, self.dim, "mean", g)?;
            let scale = broadcast(&grp.scale, self.dim, "scale", g)?;
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::validation(format!("group {g}: non-finite mean")));
            }
            // zero is a degenerate but valid scale: every patch equals the mean
            if scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::validation(format!(
                    "group {g}: scales must be finite and non-negative"
                )));
            }
            if let Some(l) = grp.label {
                if l > 1 {
                    return Err(Error::validation(format!("group {g}: label must be 0 or 1")));
                }
            }
            if let Some(h) = grp.hazard {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::validation(format!("group {g}: hazard must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Deterministically generates a dataset from `spec`.
///
/// Set ids are `g{group}_s{index}` and paths `features/{id}.mmdf`; nothing is
/// written to disk here (see [`write_synthetic`]).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let censor = spec.censoring_rate.map(|r| Exp::new(r).expect("validated rate"));
    let mut entries = Vec::new();
    let mut sets = Vec::new();
    let mut groups = Vec::new();

    for (g, grp) in spec.groups.iter().enumerate() {
        let mean = broadcast(&grp.mean, spec.dim, "mean", g)?;
        let scale = broadcast(&grp.scale, spec.dim, "scale", g)?;
        let event_dist = grp.hazard.map(|h| Exp::new(h).expect("validated hazard"));
        for s in 0..grp.n_sets {
            let id = format!("g{g}_s{s}");
            let n = rng.random_range(spec.patches_per_set.0..=spec.patches_per_set.1);
            let mut data = Vec::with_capacity(n * spec.dim);
            for _ in 0..n {
                for k in 0..spec.dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push((mean[k] + scale[k] * z) as f32);
                }
            }
            let (time, event) = match &event_dist {
                Some(dist) => {
                    let t_event = dist.sample(&mut rng);
                    let t_cens = censor
                        .as_ref()
                        .map(|c| c.sample(&mut rng))
                        .unwrap_or(f64::INFINITY)
                        .min(spec.censor_horizon);
                    if t_event <= t_cens {
                        (Some(t_event), Some(1))
                    } else {
                        (Some(t_cens), Some(0))
                    }
                }
                None => (None, None),
            };
            entries.push(ManifestEntry {
                id: id.clone(),
                path: PathBuf::from(format!("features/{id}.mmdf")),
                label: grp.label,
                time,
                event,
            });
            sets.push(FeatureSet::new(id, spec.dim, data)?);
            groups.push(g);
        }
    }
    Ok(SynthDataset {
        dataset: Dataset {
            manifest: Manifest { entries },
            sets,
        },
        groups,
    })
}

/// Writes `manifest.csv` and `features/*.mmdf` under `out_dir`.
pub fn write_synthetic(data: &SynthDataset, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let feat_dir = out_dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    for (entry, set) in data.dataset.manifest.entries.iter().zip(&data.dataset.sets) {
        write_featureset(set, out_dir.join(&entry.path))?;
    }
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&data.dataset.manifest, &manifest_path)?;
    Ok(manifest_path)
}
