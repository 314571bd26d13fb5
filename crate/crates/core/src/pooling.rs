//! Pooling operators over feature maps: max, Minkowski power mean, top-x-percent
//! and contrast-variant pooling (top-x with x derived from local contrast).
//!
//! Top-x selection is exact: the pooled value of a channel is the mean of its
//! `N = max(1, round(x/100 · P))` largest valid values, where `P` counts valid
//! pixels. Values tied with the N-th largest are all pooled and counted, which
//! mirrors summing whole histogram bins and keeps the result independent of
//! input order. A 256-bin histogram variant is available for comparison with
//! binned implementations on 8-bit data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrast::{cvp_percentage, local_contrast, CvpConfig};
use crate::error::{Error, Result};
use crate::filters::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "Tagged")]
pub enum PoolingSpec {
    Max,
    Minkowski {
        p: f64,
    },
    TopX {
        /// Percent in (0, 100].
        x: f64,
        /// Histogram bin count; exact selection when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bins: Option<usize>,
    },
    Cvp(CvpConfig),
}

// Serde ignores `deny_unknown_fields` on tagged unit variants, so `max`
// deserializes through an empty struct variant instead.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Tagged {
    Max {},
    Minkowski {
        p: f64,
    },
    TopX {
        x: f64,
        #[serde(default)]
        bins: Option<usize>,
    },
    Cvp(CvpConfig),
}

impl From<Tagged> for PoolingSpec {
    fn from(t: Tagged) -> Self {
        match t {
            Tagged::Max {} => PoolingSpec::Max,
            Tagged::Minkowski { p } => PoolingSpec::Minkowski { p },
            Tagged::TopX { x, bins } => PoolingSpec::TopX { x, bins },
            Tagged::Cvp(cfg) => PoolingSpec::Cvp(cfg),
        }
    }
}

impl PoolingSpec {
    pub fn cvp() -> Self {
        PoolingSpec::Cvp(CvpConfig::default())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PoolingSpec::Max => Ok(()),
            PoolingSpec::Minkowski { p } => check_p(p),
            PoolingSpec::TopX { x, bins } => {
                check_x(x)?;
                match bins {
                    Some(b) if b < 2 => Err(Error::config("histogram needs at least 2 bins")),
                    _ => Ok(()),
                }
            }
            PoolingSpec::Cvp(cfg) => cfg.validate(),
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PoolingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolingSpec::Max => write!(f, "max"),
            PoolingSpec::Minkowski { p } => write!(f, "minkowski:{p}"),
            PoolingSpec::TopX { x, bins: None } => write!(f, "top_x:{x}"),
            PoolingSpec::TopX { x, bins: Some(b) } => write!(f, "top_x:{x}:{b}"),
            PoolingSpec::Cvp(cfg) if *cfg == CvpConfig::default() => write!(f, "cvp"),
            PoolingSpec::Cvp(cfg) => write!(f, "cvp:{}:{}:{}:{}", cfg.sigma, cfg.c_min, cfg.x_min, cfg.x_max),
        }
    }
}

/// Parses `max`, `minkowski:P`, `top_x:X[:BINS]`, `cvp` or
/// `cvp:SIGMA[:C_MIN[:X_MIN[:X_MAX]]]`.
impl FromStr for PoolingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize| -> Result<f64> {
            args[i]
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad number '{}' in pooling '{s}'", args[i])))
        };
        let spec = match (kind, args.len()) {
            ("max", 0) => PoolingSpec::Max,
            ("minkowski", 1) => PoolingSpec::Minkowski { p: num(0)? },
            ("top_x", 1) => PoolingSpec::TopX { x: num(0)?, bins: None },
            ("top_x", 2) => PoolingSpec::TopX {
                x: num(0)?,
                bins: Some(num(1)? as usize),
            },
            ("cvp", n) if n <= 4 => {
                let mut cfg = CvpConfig::default();
                if n > 0 {
                    cfg.sigma = args[0]
                        .parse()
                        .map_err(|_| Error::config(format!("bad contrast sigma in pooling '{s}'")))?;
                }
                if n > 1 {
                    cfg.c_min = num(1)?;
                }
                if n > 2 {
                    cfg.x_min = num(2)?;
                }
                if n > 3 {
                    cfg.x_max = num(3)?;
                }
                PoolingSpec::Cvp(cfg)
            }
            _ => return Err(Error::config(format!("unknown pooling '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of pooling one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelPool {
    pub value: f64,
    /// Smallest pooled value (top-x and cvp).
    pub threshold: Option<f64>,
    /// Number of pooled pixels, ties included (top-x and cvp).
    pub count: Option<usize>,
    /// Percentage used (top-x and cvp).
    pub x_percent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoolResult {
    pub channels: [ChannelPool; 3],
}

impl PoolResult {
    pub fn values(&self) -> [f64; 3] {
        self.channels.map(|c| c.value)
    }

    pub fn x_percent(&self) -> Option<[f64; 3]> {
        let [a, b, c] = self.channels.map(|c| c.x_percent);
        Some([a?, b?, c?])
    }

    pub fn counts(&self) -> Option<[usize; 3]> {
        let [a, b, c] = self.channels.map(|c| c.count);
        Some([a?, b?, c?])
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("Minkowski norm must be finite and >= 1, got {p}")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x <= 100.0 {
        Ok(())
    } else {
        Err(Error::config(format!("percentage must lie in (0, 100], got {x}")))
    }
}

fn channel_values(map: &FeatureMap) -> Result<[Vec<f64>; 3]> {
    let vals = [map.valid_values(0), map.valid_values(1), map.valid_values(2)];
    if let Some(c) = vals.iter().position(|v| v.is_empty()) {
        return Err(Error::NoValidPixels { channel: c });
    }
    Ok(vals)
}

pub fn pool_max(map: &FeatureMap) -> Result<PoolResult> {
    let vals = channel_values(map)?;
    let mut out = PoolResult::default();
    for (c, v) in vals.iter().enumerate() {
        out.channels[c].value = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(out)
}

/// Mean-normalized power mean `((1/N) Σ v^p)^(1/p)` over valid pixels.
pub fn pool_minkowski(map: &FeatureMap, p: f64) -> Result<PoolResult> {
    check_p(p)?;
    let vals = channel_values(map)?;
    let mut out = PoolResult::default();
    for (c, v) in vals.iter().enumerate() {
        out.channels[c].value = power_mean(v, p);
    }
    Ok(out)
}

fn power_mean(v: &[f64], p: f64) -> f64 {
    let n = v.len() as f64;
    if p == 1.0 {
        return v.iter().sum::<f64>() / n;
    }
    // Factor out the maximum so large p neither overflows nor underflows.
    let m = v.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|&x| (x / m).powf(p)).sum();
    m * (s / n).powf(1.0 / p)
}

/// Number of pixels to pool for `x` percent of `valid` pixels.
pub fn pooled_count(x: f64, valid: usize) -> usize {
    ((x / 100.0 * valid as f64).round() as usize).clamp(1, valid)
}

fn top_x_channel(mut v: Vec<f64>, x: f64) -> ChannelPool {
    let n = pooled_count(x, v.len());
    let (_, kth, _) = v.select_nth_unstable_by(n - 1, |a, b| b.total_cmp(a));
    let k = *kth;
    let (mut excess, mut count) = (0.0, 0usize);
    for &val in &v {
        if val >= k {
            excess += val - k;
            count += 1;
        }
    }
    ChannelPool {
        value: k + excess / count as f64,
        threshold: Some(k),
        count: Some(count),
        x_percent: Some(x),
    }
}

/// Mean of the top `x[c]` percent of valid values, per channel.
pub fn pool_top_x(map: &FeatureMap, x: [f64; 3]) -> Result<PoolResult> {
    for &xc in &x {
        check_x(xc)?;
    }
    let vals = channel_values(map)?;
    let mut out = PoolResult::default();
    for (c, v) in vals.into_iter().enumerate() {
        out.channels[c] = top_x_channel(v, x[c]);
    }
    Ok(out)
}

/// Histogram form of top-x pooling: values are binned on `[0, max(1, peak)]`
/// and whole bins are summed from the top until at least `N` pixels are in.
/// Pooled values are bin centres, so on data already quantized to the bin
/// grid this agrees with [`pool_top_x`].
pub fn pool_top_x_binned(map: &FeatureMap, x: [f64; 3], bins: usize) -> Result<PoolResult> {
    if bins < 2 {
        return Err(Error::config("histogram needs at least 2 bins"));
    }
    for &xc in &x {
        check_x(xc)?;
    }
    let vals = channel_values(map)?;
    let mut out = PoolResult::default();
    for (c, v) in vals.iter().enumerate() {
        let hi = v.iter().copied().fold(1.0, f64::max);
        let step = hi / (bins - 1) as f64;
        let mut hist = vec![0usize; bins];
        for &val in v {
            hist[((val / step).round() as usize).min(bins - 1)] += 1;
        }
        let n = pooled_count(x[c], v.len());
        let (mut count, mut sum, mut k) = (0usize, 0.0, bins - 1);
        for b in (0..bins).rev() {
            if hist[b] == 0 {
                continue;
            }
            count += hist[b];
            sum += b as f64 * step * hist[b] as f64;
            k = b;
            if count >= n {
                break;
            }
        }
        out.channels[c] = ChannelPool {
            value: sum / count as f64,
            threshold: Some(k as f64 * step),
            count: Some(count),
            x_percent: Some(x[c]),
        };
    }
    Ok(out)
}

/// Top-x pooling with each channel's x taken from its local contrast.
pub fn pool_cvp(map: &FeatureMap, cfg: &CvpConfig) -> Result<PoolResult> {
    cfg.validate()?;
    let contrast = local_contrast(map, cfg.sigma)?;
    let x = cvp_percentage(&contrast, cfg)?;
    pool_top_x(map, x)
}

pub fn pool(map: &FeatureMap, spec: &PoolingSpec) -> Result<PoolResult> {
    match *spec {
        PoolingSpec::Max => pool_max(map),
        PoolingSpec::Minkowski { p } => pool_minkowski(map, p),
        PoolingSpec::TopX { x, bins: None } => pool_top_x(map, [x; 3]),
        PoolingSpec::TopX { x, bins: Some(b) } => pool_top_x_binned(map, [x; 3], b),
        PoolingSpec::Cvp(cfg) => pool_cvp(map, &cfg),
    }
}
