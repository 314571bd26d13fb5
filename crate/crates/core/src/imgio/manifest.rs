//! Dataset manifests: a JSON array of per-image records.
//!
//! ```json
//! [{"image": "img/0001.png", "illuminant": [0.3, 0.5, 0.2],
//!   "black_level": 129, "saturation": 0.98, "mask": "masks/0001.pgm"}]
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PreprocessSpec, DEFAULT_SATURATION};
use crate::algorithms::Illuminant;
use crate::error::{Error, Result};

fn default_saturation() -> f64 {
    DEFAULT_SATURATION
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// On-disk form of one manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image: String,
    pub illuminant: [f64; 3],
    #[serde(default, skip_serializing_if = "is_zero")]
    pub black_level: f64,
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    /// Unit-norm ground-truth illuminant.
    pub ground_truth: Illuminant,
    pub black_level: f64,
    pub saturation_threshold: f64,
    pub mask_path: Option<PathBuf>,
    pub gamma_decode: Option<f64>,
}

impl ManifestEntry {
    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            black_level: self.black_level,
            saturation_threshold: self.saturation_threshold,
            mask_path: self.mask_path.clone(),
            gamma_decode: self.gamma_decode,
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn validate(rec: ManifestRecord, index: usize, base: &Path) -> std::result::Result<ManifestEntry, String> {
    if rec.illuminant.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(format!(
            "entry {index} ({}): illuminant components must be strictly positive, got {:?}",
            rec.image, rec.illuminant
        ));
    }
    if !(rec.saturation > 0.0 && rec.saturation <= 1.0) {
        return Err(format!(
            "entry {index} ({}): saturation must lie in (0, 1], got {}",
            rec.image, rec.saturation
        ));
    }
    if !(rec.black_level >= 0.0 && rec.black_level.is_finite()) {
        return Err(format!(
            "entry {index} ({}): black_level must be >= 0, got {}",
            rec.image, rec.black_level
        ));
    }
    if let Some(g) = rec.gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(format!("entry {index} ({}): gamma must be > 0", rec.image));
        }
    }
    let ground_truth = Illuminant::new(rec.illuminant).map_err(|e| e.to_string())?;
    Ok(ManifestEntry {
        image_path: resolve(base, &rec.image),
        ground_truth,
        black_level: rec.black_level,
        saturation_threshold: rec.saturation,
        mask_path: rec.mask.as_deref().map(|m| resolve(base, m)),
        gamma_decode: rec.gamma,
    })
}

/// Parses manifest text; `base` is the directory relative paths resolve against.
pub fn parse_manifest(text: &str, base: &Path) -> std::result::Result<Vec<ManifestEntry>, String> {
    let records: Vec<ManifestRecord> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| validate(r, i, base))
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).map_err(|msg| Error::Manifest {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)
        .map_err(|e| Error::config(format!("manifest serialization: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
