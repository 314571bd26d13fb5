//! Local contrast and the contrast-derived pooling percentage.
//!
//! Local contrast is the population standard deviation over a square window
//! of half-width `sigma`, clipped to the raster and restricted to valid
//! pixels. The pooling percentage of a channel is the mean, over valid
//! pixels, of the inverse contrast, in percent units. Flat regions have
//! near-zero contrast, so every per-pixel inverse is capped at `1 / c_min`
//! and the result is clamped to `[x_min, x_max]`.
//!
//! Note the direction: low-contrast images yield LARGE percentages (more
//! pooling), high-contrast images small ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FeatureMap;

/// Per-channel local standard deviation. Invalid where the source pixel is
/// invalid or fewer than two valid pixels fall inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMap {
    width: usize,
    height: usize,
    channels: [Vec<f64>; 3],
    valid: Vec<bool>,
}

impl ContrastMap {
    /// Wraps precomputed contrast values, e.g. for experiments on [`cvp_percentage`].
    pub fn new(width: usize, height: usize, channels: [Vec<f64>; 3], valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if channels.iter().any(|c| c.len() != n) || valid.len() != n {
            return Err(Error::config("contrast map raster length mismatch"));
        }
        if channels.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("contrast values must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            channels,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvpConfig {
    /// Half-width of the contrast window, in pixels.
    pub sigma: usize,
    /// Contrast floor; bounds each per-pixel inverse at `1 / c_min`.
    pub c_min: f64,
    /// Percentage bounds, `0 < x_min <= x_max <= 100`.
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for CvpConfig {
    fn default() -> Self {
        Self {
            sigma: 3,
            c_min: 0.01,
            x_min: 0.1,
            x_max: 100.0,
        }
    }
}

impl CvpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 1 {
            return Err(Error::config("contrast sigma must be >= 1"));
        }
        if !(self.c_min > 0.0 && self.c_min <= 0.5) {
            return Err(Error::config(format!("c_min must lie in (0, 0.5], got {}", self.c_min)));
        }
        if !(self.x_min > 0.0 && self.x_min <= self.x_max && self.x_max <= 100.0) {
            return Err(Error::config(format!(
                "need 0 < x_min <= x_max <= 100, got x_min={} x_max={}",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }
}

/// Local standard deviation of every channel of `map` over a `(2σ+1)²` window.
pub fn local_contrast(map: &FeatureMap, sigma: usize) -> Result<ContrastMap> {
    if sigma < 1 {
        return Err(Error::config("contrast sigma must be >= 1"));
    }
    let (w, h) = (map.width(), map.height());
    let mask = map.valid_mask();
    let mut valid = vec![false; w * h];
    let mut channels = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];

    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(sigma), (y + sigma).min(h - 1));
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(sigma), (x + sigma).min(w - 1));
            let count = (y0..=y1)
                .flat_map(|yy| (x0..=x1).map(move |xx| yy * w + xx))
                .filter(|&j| mask[j])
                .count();
            if count < 2 {
                continue;
            }
            valid[i] = true;
            for (c, out) in channels.iter_mut().enumerate() {
                let data = map.channel(c);
                let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let j = yy * w + xx;
                        if mask[j] {
                            let v = data[j];
                            sum += v;
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                }
                if lo == hi {
                    continue;
                }
                let mean = sum / count as f64;
                let mut ss = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let j = yy * w + xx;
                        if mask[j] {
                            let d = data[j] - mean;
                            ss += d * d;
                        }
                    }
                }
                out[i] = (ss / count as f64).sqrt();
            }
        }
    }
    ContrastMap::new(w, h, channels, valid)
}

/// Pooling percentage per channel, in percent.
pub fn cvp_percentage(cmap: &ContrastMap, cfg: &CvpConfig) -> Result<[f64; 3]> {
    cfg.validate()?;
    let cap = 1.0 / cfg.c_min;
    let mut out = [0.0; 3];
    for (c, x) in out.iter_mut().enumerate() {
        let (mut sum, mut n) = (0.0, 0usize);
        for (&v, &ok) in cmap.channel(c).iter().zip(cmap.valid_mask()) {
            if ok {
                sum += (1.0 / v.max(cfg.c_min)).min(cap);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::NoValidPixels { channel: c });
        }
        *x = (sum / n as f64).clamp(cfg.x_min, cfg.x_max);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_map(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMap {
        let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
        FeatureMap::from_gray(w, h, data).unwrap()
    }

    #[test]
    fn constant_has_exactly_zero_contrast() {
        let m = gray_map(9, 7, |_, _| 0.1);
        let c = local_contrast(&m, 2).unwrap();
        assert!(c.channel(0).iter().all(|&v| v == 0.0));
        assert!(c.valid_mask().iter().all(|&v| v));
    }

    #[test]
    fn checkerboard_interior() {
        let m = gray_map(8, 8, |x, y| ((x + y) % 2) as f64);
        let c = local_contrast(&m, 1).unwrap();
        let want = (20.0f64 / 81.0).sqrt();
        for y in 1..7 {
            for x in 1..7 {
                assert!((c.channel(2)[y * 8 + x] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_bright_pixel_is_local() {
        let m = gray_map(9, 9, |x, y| if (x, y) == (4, 4) { 1.0 } else { 0.0 });
        let c = local_contrast(&m, 1).unwrap();
        for y in 0..9usize {
            for x in 0..9usize {
                let near = x.abs_diff(4) <= 1 && y.abs_diff(4) <= 1;
                assert_eq!(c.channel(0)[y * 9 + x] > 0.0, near, "({x},{y})");
            }
        }
    }

    #[test]
    fn invalid_pixels_are_excluded() {
        // Bright pixel hidden by the mask contributes nothing.
        let data: Vec<f64> = (0..25).map(|i| if i == 12 { 1.0 } else { 0.2 }).collect();
        let mut valid = vec![true; 25];
        valid[12] = false;
        let m = FeatureMap::new(5, 5, [data.clone(), data.clone(), data], valid).unwrap();
        let c = local_contrast(&m, 1).unwrap();
        assert!(!c.valid_mask()[12]);
        assert!(c.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_valid_neighbours() {
        let mut valid = vec![false; 9];
        valid[0] = true;
        let m = FeatureMap::new(3, 3, [vec![0.5; 9], vec![0.5; 9], vec![0.5; 9]], valid).unwrap();
        let c = local_contrast(&m, 1).unwrap();
        assert!(c.valid_mask().iter().all(|&v| !v));
        assert!(matches!(
            cvp_percentage(&c, &CvpConfig::default()),
            Err(Error::NoValidPixels { channel: 0 })
        ));
    }

    #[test]
    fn rejects_zero_sigma() {
        assert!(local_contrast(&gray_map(3, 3, |_, _| 0.0), 0).is_err());
    }

    fn cmap(values: Vec<f64>) -> ContrastMap {
        let n = values.len();
        ContrastMap::new(n, 1, [values.clone(), values.clone(), values], vec![true; n]).unwrap()
    }

    #[test]
    fn percentage_at_ceiling_contrast() {
        let x = cvp_percentage(&cmap(vec![0.5; 10]), &CvpConfig::default()).unwrap();
        assert_eq!(x, [2.0; 3]);
    }

    #[test]
    fn percentage_flat_clamps_to_x_max() {
        let x = cvp_percentage(&cmap(vec![0.0; 10]), &CvpConfig::default()).unwrap();
        assert_eq!(x, [100.0; 3]);
    }

    #[test]
    fn percentage_mixed() {
        let x = cvp_percentage(&cmap(vec![0.5, 0.04, 0.5, 0.04]), &CvpConfig::default()).unwrap();
        // Oracle: mean(1/0.5, 1/0.04).
        let want = (1.0 / 0.5 + 1.0 / 0.04) / 2.0;
        assert!((x[0] - want).abs() < 1e-12);
        assert!((want - 13.5).abs() < 1e-12);
    }

    #[test]
    fn percentage_ignores_invalid() {
        let m = ContrastMap::new(
            2,
            1,
            [vec![0.5, 0.0], vec![0.5, 0.0], vec![0.5, 0.0]],
            vec![true, false],
        )
        .unwrap();
        assert_eq!(cvp_percentage(&m, &CvpConfig::default()).unwrap(), [2.0; 3]);
    }

    #[test]
    fn config_validation() {
        let bad = [
            CvpConfig { sigma: 0, ..Default::default() },
            CvpConfig { c_min: 0.0, ..Default::default() },
            CvpConfig { c_min: 0.6, ..Default::default() },
            CvpConfig { x_min: 0.0, ..Default::default() },
            CvpConfig { x_min: 50.0, x_max: 10.0, ..Default::default() },
            CvpConfig { x_max: 101.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        CvpConfig::default().validate().unwrap();
    }
}
