//! Illuminant estimators and von Kries correction.
//!
//! Each estimator builds a feature map (intensities, Gaussian-derivative
//! magnitudes, or rectified Double-Opponency responses), pools it per channel
//! with a [`PoolingSpec`] and normalizes the pooled vector to unit length.
//!
//! The Double-Opponency pipeline is a reconstruction of the common
//! formulation: orthonormal opponent basis, DoG with surround three times the
//! centre, surround weight `k`, inverse opponent transform, then half-wave
//! rectification before pooling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{dog_response, edge_feature_map, kernel_radius, FeatureMap};
use crate::imgio::Image;
use crate::pooling::{pool, pool_minkowski, PoolResult, PoolingSpec};

/// Surround-to-centre scale of the Double-Opponency DoG.
pub const DO_SURROUND_RATIO: f64 = 3.0;

/// Feature maps whose peak is below this are treated as all-zero.
const DEGENERATE_PEAK: f64 = 1e-12;

/// Unit-norm RGB direction of the light source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    /// Normalizes `rgb` to unit length. Components must be finite and
    /// non-negative with at least one positive.
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!(
                "illuminant components must be finite and non-negative, got {rgb:?}"
            )));
        }
        let norm = rgb.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self(rgb.map(|v| v / norm)))
    }

    /// The neutral illuminant `(1, 1, 1) / √3`.
    pub fn neutral() -> Self {
        Self([1.0 / 3f64.sqrt(); 3])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn r(&self) -> f64 {
        self.0[0]
    }

    pub fn g(&self) -> f64 {
        self.0[1]
    }

    pub fn b(&self) -> f64 {
        self.0[2]
    }
}

impl fmt::Display for Illuminant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "white_patch")]
    WhitePatch,
    #[serde(rename = "grey_world")]
    GreyWorld,
    #[serde(rename = "grey_edge_1")]
    GreyEdge1,
    #[serde(rename = "grey_edge_2")]
    GreyEdge2,
    #[serde(rename = "double_opponency")]
    DoubleOpponency,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::WhitePatch,
        Method::GreyWorld,
        Method::GreyEdge1,
        Method::GreyEdge2,
        Method::DoubleOpponency,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::WhitePatch => "white_patch",
            Method::GreyWorld => "grey_world",
            Method::GreyEdge1 => "grey_edge_1",
            Method::GreyEdge2 => "grey_edge_2",
            Method::DoubleOpponency => "double_opponency",
        }
    }

    pub fn needs_sigma(&self) -> bool {
        matches!(self, Method::GreyEdge1 | Method::GreyEdge2 | Method::DoubleOpponency)
    }

    pub fn needs_k(&self) -> bool {
        matches!(self, Method::DoubleOpponency)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

/// A fully specified estimator: method, its free parameters and the pooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Double-Opponency surround weight in `[0, 1]`.
    #[serde(default, alias = "k", skip_serializing_if = "Option::is_none")]
    pub k_surround: Option<f64>,
    /// Omitted for Grey-World.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<PoolingSpec>,
}

impl EstimatorSpec {
    pub fn new(method: Method, pooling: PoolingSpec) -> Self {
        Self {
            method,
            sigma: None,
            k_surround: None,
            pooling: (method != Method::GreyWorld).then_some(pooling),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k_surround = Some(k);
        self
    }

    /// Rejects missing and contradictory parameters.
    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        match (m.needs_sigma(), self.sigma) {
            (true, None) => return Err(Error::config(format!("{m} requires sigma"))),
            (true, Some(s)) if !(s > 0.0 && s.is_finite()) => {
                return Err(Error::config(format!("{m}: sigma must be > 0, got {s}")))
            }
            (false, Some(_)) => return Err(Error::config(format!("{m} takes no sigma"))),
            _ => {}
        }
        match (m.needs_k(), self.k_surround) {
            (true, None) => return Err(Error::config(format!("{m} requires k"))),
            (true, Some(k)) if !(0.0..=1.0).contains(&k) => {
                return Err(Error::config(format!("{m}: k must lie in [0, 1], got {k}")))
            }
            (false, Some(_)) => return Err(Error::config(format!("{m} takes no k"))),
            _ => {}
        }
        match (m, self.pooling) {
            (Method::GreyWorld, None) | (Method::GreyWorld, Some(PoolingSpec::Minkowski { p: 1.0 })) => Ok(()),
            (Method::GreyWorld, Some(p)) => Err(Error::config(format!(
                "grey_world is Minkowski p=1 pooling by definition; pooling '{p}' contradicts it"
            ))),
            (_, None) => Err(Error::config(format!("{m} requires a pooling"))),
            (_, Some(p)) => p.validate(),
        }
    }

    pub fn pooling_label(&self) -> String {
        match (self.method, self.pooling) {
            (Method::GreyWorld, _) => "minkowski:1".into(),
            (_, Some(p)) => p.label(),
            (_, None) => String::new(),
        }
    }
}

/// An illuminant estimate together with the pooling details that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub illuminant: Illuminant,
    pub pool: PoolResult,
}

fn finish(pool: PoolResult) -> Result<Estimate> {
    let illuminant = Illuminant::new(pool.values()).map_err(|e| match e {
        Error::ZeroNorm => Error::DegenerateFeatureMap("pooled response is zero in every channel".into()),
        other => other,
    })?;
    Ok(Estimate { illuminant, pool })
}

fn check_map(map: &FeatureMap) -> Result<()> {
    if map.valid_count() == 0 {
        return Err(Error::DegenerateFeatureMap(
            "no valid pixels remain (image smaller than the kernel support?)".into(),
        ));
    }
    if map.max_valid() <= DEGENERATE_PEAK {
        return Err(Error::DegenerateFeatureMap("feature map is zero everywhere".into()));
    }
    Ok(())
}

/// Pools image intensities directly.
pub fn white_patch(img: &Image, pooling: &PoolingSpec) -> Result<Estimate> {
    pooling.validate()?;
    finish(pool(&FeatureMap::from_image(img), pooling)?)
}

pub fn grey_world(img: &Image) -> Result<Estimate> {
    finish(pool_minkowski(&FeatureMap::from_image(img), 1.0)?)
}

pub fn grey_edge(img: &Image, order: u8, sigma: f64, pooling: &PoolingSpec) -> Result<Estimate> {
    pooling.validate()?;
    let map = edge_feature_map(img, sigma, order)?;
    check_map(&map)?;
    finish(pool(&map, pooling)?)
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `(R−G)/√2, (R+G−2B)/√6, (R+G+B)/√3`.
pub fn opponent(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    [
        (r - g) * INV_SQRT2,
        (r + g - 2.0 * b) / 6f64.sqrt(),
        (r + g + b) / 3f64.sqrt(),
    ]
}

/// Inverse of [`opponent`] (its transpose, the basis being orthonormal).
pub fn inverse_opponent(o: [f64; 3]) -> [f64; 3] {
    let [o1, o2, o3] = o;
    let (s6, s3) = (6f64.sqrt(), 3f64.sqrt());
    [
        o1 * INV_SQRT2 + o2 / s6 + o3 / s3,
        -o1 * INV_SQRT2 + o2 / s6 + o3 / s3,
        -2.0 * o2 / s6 + o3 / s3,
    ]
}

/// Rectified RGB-indexed Double-Opponency response.
pub fn double_opponency_map(img: &Image, sigma: f64, k_surround: f64) -> Result<FeatureMap> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let mut opp = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let o = opponent([img.channel(0)[i], img.channel(1)[i], img.channel(2)[i]]);
        for c in 0..3 {
            opp[c][i] = o[c];
        }
    }
    let mut resp = Vec::with_capacity(3);
    for plane in &opp {
        resp.push(dog_response(plane, w, h, sigma, DO_SURROUND_RATIO, k_surround)?);
    }
    let mut rgb = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let back = inverse_opponent([resp[0][i], resp[1][i], resp[2][i]]);
        for c in 0..3 {
            rgb[c][i] = back[c].max(0.0);
        }
    }
    let mut map = FeatureMap::new(w, h, rgb, img.valid_mask().to_vec())?;
    let support = if k_surround > 0.0 {
        DO_SURROUND_RATIO * sigma
    } else {
        sigma
    };
    map.exclude_border(kernel_radius(support));
    Ok(map)
}

pub fn double_opponency(img: &Image, sigma: f64, k_surround: f64, pooling: &PoolingSpec) -> Result<Estimate> {
    pooling.validate()?;
    let map = double_opponency_map(img, sigma, k_surround)?;
    check_map(&map)?;
    finish(pool(&map, pooling)?)
}

/// Runs the estimator described by `spec`.
pub fn estimate(img: &Image, spec: &EstimatorSpec) -> Result<Estimate> {
    spec.validate()?;
    let sigma = spec.sigma.unwrap_or_default();
    let pooling = spec.pooling.unwrap_or(PoolingSpec::Minkowski { p: 1.0 });
    match spec.method {
        Method::WhitePatch => white_patch(img, &pooling),
        Method::GreyWorld => grey_world(img),
        Method::GreyEdge1 => grey_edge(img, 1, sigma, &pooling),
        Method::GreyEdge2 => grey_edge(img, 2, sigma, &pooling),
        Method::DoubleOpponency => double_opponency(img, sigma, spec.k_surround.unwrap_or_default(), &pooling),
    }
}

/// Von Kries correction mapping `e` to neutral: `out_c = in_c / (√3 · e_c)`.
///
/// Values may exceed 1; clamping happens only when saving.
pub fn correct_image(img: &Image, e: &Illuminant) -> Result<Image> {
    let ev = e.as_array();
    if let Some(c) = ev.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroIlluminant { channel: c });
    }
    let gain = ev.map(|v| 1.0 / (3f64.sqrt() * v));
    Ok(img.map_values(|c, v| v * gain[c]))
}
