//! Image loading, preprocessing and saving.
//!
//! Every image is normalized to linear `[0, 1]` reals at load time, so the
//! rest of the crate never sees bit depths. Pixels that cannot be trusted
//! (clipped, masked out) are carried in a validity mask instead of being
//! removed, which keeps the raster geometry intact for the filters.

mod manifest;
mod png_io;
mod pnm;

use std::fs;
use std::path::{Path, PathBuf};

use crate::algorithms::{correct_image, Illuminant};
use crate::error::{Error, Result};

pub use manifest::{load_manifest, write_manifest, ManifestEntry, ManifestRecord};

/// Default fraction of the sensor maximum above which a pixel counts as clipped.
pub const DEFAULT_SATURATION: f64 = 0.98;

/// Linear-light planar RGB raster with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: [Vec<f64>; 3],
    valid: Vec<bool>,
    bit_depth_origin: u8,
}

impl Image {
    /// Builds an image with every pixel valid. Values must be finite.
    pub fn new(width: usize, height: usize, channels: [Vec<f64>; 3]) -> Result<Self> {
        let valid = vec![true; width * height];
        Self::with_mask(width, height, channels, valid)
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        channels: [Vec<f64>; 3],
        valid: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("image dimensions must be at least 1x1"));
        }
        let n = width * height;
        if channels.iter().any(|c| c.len() != n) || valid.len() != n {
            return Err(Error::config(format!(
                "raster length mismatch for {width}x{height} image"
            )));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("image contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            channels,
            valid,
            bit_depth_origin: 16,
        })
    }

    /// Builds an all-valid image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let n = width * height;
        let mut channels = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    channels[c][y * width + x] = px[c];
                }
            }
        }
        Self::new(width, height, channels).expect("from_fn produced an invalid image")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn bit_depth_origin(&self) -> u8 {
        self.bit_depth_origin
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.channels[0][i], self.channels[1][i], self.channels[2][i]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [f64; 3]) {
        let i = y * self.width + x;
        for (c, v) in px.into_iter().enumerate() {
            self.channels[c][i] = v;
        }
    }

    pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
        self.valid[y * self.width + x] = valid;
    }

    /// Applies `f` to every channel value, keeping the mask.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Image {
        let mut out = self.clone();
        for (c, plane) in out.channels.iter_mut().enumerate() {
            for v in plane.iter_mut() {
                *v = f(c, *v);
            }
        }
        out
    }

    pub(crate) fn into_parts(self) -> (usize, usize, [Vec<f64>; 3], Vec<bool>) {
        (self.width, self.height, self.channels, self.valid)
    }

    pub(crate) fn with_bit_depth(mut self, depth: u8) -> Self {
        self.bit_depth_origin = depth;
        self
    }
}

/// Decoded samples in sensor units, before any normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub samples: [Vec<f64>; 3],
    /// Largest representable raw value (PNM maxval, or 2^depth - 1 for PNG).
    pub max_raw: f64,
    pub bit_depth: u8,
}

impl RawImage {
    /// Wraps already-normalized data (max_raw = 1) so it can be run through
    /// [`preprocess`] again.
    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width,
            height: img.height,
            samples: img.channels.clone(),
            max_raw: 1.0,
            bit_depth: img.bit_depth_origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSpec {
    /// Offset in raw units subtracted before normalization.
    pub black_level: f64,
    /// Fraction of `max_raw` at or above which a pixel is flagged as clipped.
    pub saturation_threshold: f64,
    pub mask_path: Option<PathBuf>,
    /// Exponent applied as `v^gamma` after normalization.
    pub gamma_decode: Option<f64>,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            black_level: 0.0,
            saturation_threshold: DEFAULT_SATURATION,
            mask_path: None,
            gamma_decode: None,
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.black_level >= 0.0 && self.black_level.is_finite()) {
            return Err(Error::config(format!(
                "black level must be >= 0, got {}",
                self.black_level
            )));
        }
        if !(self.saturation_threshold > 0.0 && self.saturation_threshold <= 1.0) {
            return Err(Error::config(format!(
                "saturation threshold must lie in (0, 1], got {}",
                self.saturation_threshold
            )));
        }
        if let Some(g) = self.gamma_decode {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!("gamma must be > 0, got {g}")));
            }
        }
        Ok(())
    }
}

/// Reads a PNM (P2/P3/P5/P6) or PNG file without normalizing it.
pub fn decode_raw(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(png_io::SIGNATURE) {
        png_io::decode(&bytes).map_err(|msg| Error::Decode {
            path: path.to_path_buf(),
            msg,
        })
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        match bytes[1] {
            b'2' | b'3' | b'5' | b'6' => pnm::decode(&bytes).map_err(|msg| Error::Decode {
                path: path.to_path_buf(),
                msg,
            }),
            other => Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                msg: format!("netpbm variant P{}", other as char),
            }),
        }
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: "expected PPM/PGM or PNG".into(),
        })
    }
}

/// Loads an exclusion mask: `true` marks pixels to drop (nonzero in any channel).
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let raw = decode_raw(path)?;
    let n = raw.width * raw.height;
    let excluded = (0..n)
        .map(|i| raw.samples.iter().any(|plane| plane[i] != 0.0))
        .collect();
    Ok((raw.width, raw.height, excluded))
}

/// Normalizes raw samples and builds the validity mask.
///
/// Saturation is judged on the raw values against `max_raw`; the black level
/// is then subtracted (clamped at zero) and the result divided by
/// `max_raw - black_level`. Gamma decoding runs last. The returned image may
/// have no valid pixels at all; [`load_image`] turns that into an error.
pub fn preprocess(raw: &RawImage, spec: &PreprocessSpec, exclude: Option<&[bool]>) -> Result<Image> {
    spec.validate()?;
    let n = raw.width * raw.height;
    if let Some(m) = exclude {
        if m.len() != n {
            return Err(Error::config("exclusion mask length does not match image"));
        }
    }
    let range = raw.max_raw - spec.black_level;
    if range <= 0.0 {
        return Err(Error::config(format!(
            "black level {} is not below the maximum raw value {}",
            spec.black_level, raw.max_raw
        )));
    }
    let clip = spec.saturation_threshold * raw.max_raw;

    let mut valid = vec![true; n];
    for (i, v) in valid.iter_mut().enumerate() {
        let saturated = raw.samples.iter().any(|plane| plane[i] >= clip);
        let masked = exclude.is_some_and(|m| m[i]);
        *v = !(saturated || masked);
    }

    let channels = raw.samples.clone().map(|plane| {
        plane
            .into_iter()
            .map(|s| {
                let v = ((s - spec.black_level).max(0.0) / range).min(1.0);
                match spec.gamma_decode {
                    Some(g) => v.powf(g),
                    None => v,
                }
            })
            .collect::<Vec<f64>>()
    });

    Ok(Image::with_mask(raw.width, raw.height, channels, valid)?.with_bit_depth(raw.bit_depth))
}

pub fn load_image(path: &Path, spec: &PreprocessSpec) -> Result<Image> {
    let raw = decode_raw(path)?;
    let exclude = match &spec.mask_path {
        Some(mask_path) => {
            let (w, h, m) = load_mask(mask_path)?;
            if w != raw.width || h != raw.height {
                return Err(Error::MaskDimensions {
                    path: mask_path.clone(),
                    mask_w: w,
                    mask_h: h,
                    img_w: raw.width,
                    img_h: raw.height,
                });
            }
            Some(m)
        }
        None => None,
    };
    let img = preprocess(&raw, spec, exclude.as_deref())?;
    if img.valid_count() == 0 {
        return Err(Error::AllPixelsInvalid {
            path: path.to_path_buf(),
        });
    }
    Ok(img)
}

/// Clamps to `[0, 1]` and rounds half up onto `0..=max`.
pub fn quantize(v: f64, max: u16) -> u16 {
    let m = f64::from(max);
    (v.clamp(0.0, 1.0) * m + 0.5).floor().min(m) as u16
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Writes an 8-bit PNG (`.png` extension) or binary PPM (anything else).
///
/// When `illum_applied` is given the image is von-Kries corrected by it first.
pub fn save_image(img: &Image, illum_applied: Option<&Illuminant>, path: &Path) -> Result<()> {
    let corrected;
    let img = match illum_applied {
        Some(e) => {
            corrected = correct_image(img, e)?;
            &corrected
        }
        None => img,
    };
    write_image(img, path, 8)
}

/// Writes a 16-bit PNG or PPM; used where 8-bit quantization would perturb results.
pub fn save_image_16(img: &Image, path: &Path) -> Result<()> {
    write_image(img, path, 16)
}

fn write_image(img: &Image, path: &Path, depth: u8) -> Result<()> {
    let bytes = if is_png(path) {
        png_io::encode_rgb(img, depth).map_err(|msg| Error::Decode {
            path: path.to_path_buf(),
            msg,
        })?
    } else {
        pnm::encode_ppm(img, depth)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a binary PGM, e.g. an exclusion mask (nonzero = excluded).
pub fn save_mask(width: usize, height: usize, excluded: &[bool], path: &Path) -> Result<()> {
    let bytes = pnm::encode_pgm_mask(width, height, excluded);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    fn ppm8(w: usize, h: usize, px: &[[u8; 3]]) -> Vec<u8> {
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for p in px {
            out.extend_from_slice(p);
        }
        out
    }

    #[test]
    fn saturated_everywhere_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "white.ppm", &ppm8(2, 2, &[[255, 255, 255]; 4]));
        let spec = PreprocessSpec::default();

        let raw = decode_raw(&p).unwrap();
        let img = preprocess(&raw, &spec, None).unwrap();
        assert!(img.channel(0).iter().all(|&v| v == 1.0));
        assert_eq!(img.valid_count(), 0);

        assert!(matches!(load_image(&p, &spec), Err(Error::AllPixelsInvalid { .. })));
    }

    #[test]
    fn eight_bit_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "px.ppm", &ppm8(1, 1, &[[128, 64, 32]]));
        let img = load_image(&p, &PreprocessSpec::default()).unwrap();
        let px = img.pixel(0, 0);
        for (got, want) in px.iter().zip([0.50196, 0.25098, 0.12549]) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        assert_eq!(px[0], 128.0 / 255.0);
        assert_eq!(img.bit_depth_origin(), 8);
    }

    #[test]
    fn sixteen_bit_black_level() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P6\n2 1\n65535\n".to_vec();
        for s in [129u16, 129, 129, 30000, 20000, 10000] {
            bytes.extend_from_slice(&s.to_be_bytes());
        }
        let p = write_tmp(&dir, "raw16.ppm", &bytes);
        let spec = PreprocessSpec {
            black_level: 129.0,
            ..Default::default()
        };
        let img = load_image(&p, &spec).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0; 3]);
        let want = (30000.0 - 129.0) / (65535.0 - 129.0);
        assert!((img.pixel(1, 0)[0] - want).abs() < 1e-15);
    }

    #[test]
    fn mask_excludes_and_checks_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = write_tmp(&dir, "a.ppm", &ppm8(2, 1, &[[10, 10, 10], [20, 20, 20]]));
        let mask_path = dir.path().join("m.pgm");
        save_mask(2, 1, &[true, false], &mask_path).unwrap();
        let spec = PreprocessSpec {
            mask_path: Some(mask_path),
            ..Default::default()
        };
        let img = load_image(&img_path, &spec).unwrap();
        assert_eq!(img.valid_mask(), &[false, true]);

        let bad_mask = dir.path().join("bad.pgm");
        save_mask(3, 1, &[false; 3], &bad_mask).unwrap();
        let spec = PreprocessSpec {
            mask_path: Some(bad_mask),
            ..Default::default()
        };
        assert!(matches!(
            load_image(&img_path, &spec),
            Err(Error::MaskDimensions { .. })
        ));
    }

    #[test]
    fn gamma_applies_after_normalization() {
        let raw = RawImage {
            width: 1,
            height: 1,
            samples: [vec![100.0], vec![50.0], vec![0.0]],
            max_raw: 200.0,
            bit_depth: 8,
        };
        let spec = PreprocessSpec {
            gamma_decode: Some(2.0),
            ..Default::default()
        };
        let img = preprocess(&raw, &spec, None).unwrap();
        assert_eq!(img.pixel(0, 0), [0.25, 0.0625, 0.0]);
    }

    #[test]
    fn quantization_rounds_half_up_and_clamps() {
        assert_eq!(quantize(1.0, 255), 255);
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(1.3, 255), 255);
        assert_eq!(quantize(-0.2, 255), 0);
    }

    #[test]
    fn unsupported_and_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "x.bmp", b"BM\0\0\0\0");
        assert!(matches!(
            decode_raw(&p),
            Err(Error::UnsupportedFormat { .. })
        ));
        let p = write_tmp(&dir, "x.pbm", b"P4\n1 1\n\0");
        assert!(matches!(
            decode_raw(&p),
            Err(Error::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            decode_raw(&dir.path().join("missing.ppm")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn save_with_illuminant_corrects() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(1, 1, |_, _| [0.2, 0.4, 0.4]);
        let e = Illuminant::new([0.2, 0.4, 0.4]).unwrap();
        let p = dir.path().join("c.png");
        save_image(&img, Some(&e), &p).unwrap();
        let back = load_image(&p, &PreprocessSpec { saturation_threshold: 1.0, ..Default::default() }).unwrap();
        let px = back.pixel(0, 0);
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
    }
}
