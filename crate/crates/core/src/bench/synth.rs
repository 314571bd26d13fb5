//! Seeded Mondrian scenes rendered under a random illuminant.
//!
//! A scene is a grid of flat patches with uniform random reflectances,
//! optionally one perfect white patch, multiplied channel-wise by the
//! illuminant (von Kries forward model). Gaussian noise and salt pixels
//! (every channel at 1.0) are then added. Scenes are bit-identical for a
//! given spec and seed.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::algorithms::Illuminant;
use crate::error::{Error, Result};
use crate::imgio::{save_image_16, write_manifest, Image, ManifestRecord};

/// Bounds on the illuminant's rg-chromaticity `(R, G) / (R + G + B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromaticityRange {
    pub r: [f64; 2],
    pub g: [f64; 2],
}

impl Default for ChromaticityRange {
    fn default() -> Self {
        Self {
            r: [0.2, 0.5],
            g: [0.25, 0.42],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    /// Patch grid as `[rows, cols]`.
    pub patch_grid: [usize; 2],
    pub illuminant_range: ChromaticityRange,
    /// Standard deviation of additive Gaussian noise, in `[0, 1)`.
    pub noise_sigma: f64,
    /// Fraction of pixels replaced by full-scale salt, in `[0, 1)`.
    pub salt_fraction: f64,
    pub include_white_patch: bool,
    /// Rendered value of the white patch's strongest channel.
    pub exposure: f64,
    /// Number of scenes written by [`write_corpus`]; scene `i` uses seed `seed + i`.
    pub count: usize,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            patch_grid: [8, 8],
            illuminant_range: ChromaticityRange::default(),
            noise_sigma: 0.0,
            salt_fraction: 0.0,
            include_white_patch: true,
            exposure: 0.9,
            count: 1,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [rows, cols] = self.patch_grid;
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("synthetic scene needs non-zero dimensions"));
        }
        if rows == 0 || cols == 0 || rows > self.height || cols > self.width {
            return Err(Error::config(format!(
                "patch grid {rows}x{cols} does not fit a {}x{} image",
                self.width, self.height
            )));
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("salt_fraction", self.salt_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.exposure > 0.0 && self.exposure <= 1.0) {
            return Err(Error::config(format!("exposure must lie in (0, 1], got {}", self.exposure)));
        }
        let ChromaticityRange { r, g } = self.illuminant_range;
        let ordered = |b: [f64; 2]| b[0] > 0.0 && b[0] <= b[1] && b[1] < 1.0;
        if !ordered(r) || !ordered(g) || r[1] + g[1] >= 1.0 {
            return Err(Error::config(
                "chromaticity bounds must satisfy 0 < lo <= hi and r_hi + g_hi < 1",
            ));
        }
        Ok(())
    }
}

/// Renders one scene and returns it with its unit ground-truth illuminant.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, seed: u64) -> Result<(Image, Illuminant)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let range = spec.illuminant_range;
    let r = rng.random_range(range.r[0]..=range.r[1]);
    let g = rng.random_range(range.g[0]..=range.g[1]);
    let truth = Illuminant::new([r, g, 1.0 - r - g])?;

    let [rows, cols] = spec.patch_grid;
    let mut reflectance: Vec<[f64; 3]> = (0..rows * cols)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    if spec.include_white_patch {
        let white = rng.random_range(0..rows * cols);
        reflectance[white] = [1.0; 3];
    }

    let e = truth.as_array();
    let peak = e.iter().copied().fold(0.0, f64::max);
    let gain = e.map(|v| spec.exposure * v / peak);
    let (w, h) = (spec.width, spec.height);
    let mut img = Image::from_fn(w, h, |x, y| {
        let patch = (y * rows / h) * cols + x * cols / w;
        let rho = reflectance[patch];
        [rho[0] * gain[0], rho[1] * gain[1], rho[2] * gain[2]]
    });

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated noise sigma");
        img = img.map_values(|_, v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0));
    }
    let salt = (spec.salt_fraction * (w * h) as f64).round() as usize;
    if salt > 0 {
        let mut picks = index::sample(&mut rng, w * h, salt).into_vec();
        picks.sort_unstable();
        for i in picks {
            img.set_pixel(i % w, i / w, [1.0; 3]);
        }
    }
    Ok((img, truth))
}

/// Writes `spec.count` scenes as 16-bit PPMs plus a `manifest.json` into `dir`.
pub fn write_corpus(spec: &SyntheticSceneSpec, seed: u64, dir: &Path) -> Result<Vec<ManifestRecord>> {
    spec.validate()?;
    if spec.count == 0 {
        return Err(Error::config("count must be >= 1"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let (img, truth) = generate_synthetic(spec, seed + i as u64)?;
        let name = format!("scene_{:04}.ppm", i);
        save_image_16(&img, &dir.join(&name))?;
        records.push(ManifestRecord {
            image: name,
            illuminant: truth.as_array(),
            black_level: 0.0,
            // Only full-scale pixels (salt, noise clipped at 1) are flagged as saturated on load.
            saturation: 1.0,
            mask: None,
            gamma: None,
        });
    }
    write_manifest(&dir.join("manifest.json"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSceneSpec {
            noise_sigma: 0.02,
            salt_fraction: 0.01,
            ..Default::default()
        };
        let (a, ea) = generate_synthetic(&spec, 7).unwrap();
        let (b, eb) = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
        let (c, _) = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clean_scene_has_exact_white_patch() {
        let spec = SyntheticSceneSpec::default();
        let (img, truth) = generate_synthetic(&spec, 3).unwrap();
        let max: [f64; 3] = std::array::from_fn(|c| img.channel(c).iter().copied().fold(0.0, f64::max));
        let est = Illuminant::new(max).unwrap().as_array();
        for (a, b) in est.iter().zip(truth.as_array()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((max.iter().copied().fold(0.0, f64::max) - spec.exposure).abs() < 1e-12);
    }

    #[test]
    fn salt_count_and_range() {
        let spec = SyntheticSceneSpec {
            salt_fraction: 0.005,
            noise_sigma: 0.02,
            ..Default::default()
        };
        let (img, truth) = generate_synthetic(&spec, 11).unwrap();
        let salt = (0..img.len())
            .filter(|&i| (0..3).all(|c| img.channel(c)[i] == 1.0))
            .count();
        assert!(salt >= 46);
        assert!(img.channels().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let [r, g, b] = truth.as_array();
        let s = r + g + b;
        assert!((0.2..=0.5).contains(&(r / s)) && (0.25..=0.42).contains(&(g / s)));
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSceneSpec { noise_sigma: 1.0, ..Default::default() },
            SyntheticSceneSpec { salt_fraction: -0.1, ..Default::default() },
            SyntheticSceneSpec { patch_grid: [0, 4], ..Default::default() },
            SyntheticSceneSpec { patch_grid: [200, 4], ..Default::default() },
            SyntheticSceneSpec { exposure: 0.0, ..Default::default() },
            SyntheticSceneSpec {
                illuminant_range: ChromaticityRange { r: [0.6, 0.7], g: [0.3, 0.4] },
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(generate_synthetic(&s, 0).is_err(), "{s:?}");
        }
    }
}
