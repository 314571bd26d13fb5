//! Angular error metrics and robust summary statistics.

use serde::Serialize;

use crate::error::{Error, Result};

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

// atan2(|a×b|, a·b) equals arccos of the normalized dot product but stays
// accurate near 0°, where arccos loses about half the significant digits.
fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm(cross).atan2(dot(a, b)).to_degrees()
}

/// Angle in degrees between the estimated and true illuminant.
///
/// Accepts arbitrary (non-normalized) vectors; both must be non-zero.
pub fn recovery_error(estimate: [f64; 3], truth: [f64; 3]) -> Result<f64> {
    let (ne, nt) = (norm(estimate), norm(truth));
    if ne == 0.0 || nt == 0.0 || !ne.is_finite() || !nt.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(angle_deg(estimate.map(|v| v / ne), truth.map(|v| v / nt)))
}

/// Angle in degrees between `truth ⊘ estimate` and the neutral axis.
pub fn reproduction_error(estimate: [f64; 3], truth: [f64; 3]) -> Result<f64> {
    if let Some(c) = estimate.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroIlluminant { channel: c });
    }
    let w = [truth[0] / estimate[0], truth[1] / estimate[1], truth[2] / estimate[2]];
    let nw = norm(w);
    if nw == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(angle_deg(w.map(|v| v / nw), [1.0; 3]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
}

/// Quantile of sorted data by linear interpolation at 1-based position
/// `1 + (n-1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if errors.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("non-finite error value"));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let median = quantile_sorted(&s, 0.5);
    let trimean = (quantile_sorted(&s, 0.25) + 2.0 * median + quantile_sorted(&s, 0.75)) / 4.0;
    let quarter = n.div_ceil(4);
    let best25 = s[..quarter].iter().sum::<f64>() / quarter as f64;
    let worst25 = s[n - quarter..].iter().sum::<f64>() / quarter as f64;
    Ok(ErrorStats {
        n,
        mean,
        median,
        trimean,
        best25,
        worst25,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_cases() {
        assert_eq!(recovery_error([0.2, 0.5, 0.3], [0.2, 0.5, 0.3]).unwrap(), 0.0);
        assert!((recovery_error([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!((recovery_error([1.0, 1.0, 0.0], [1.0, 0.0, 0.0]).unwrap() - 45.0).abs() < 1e-12);
        assert!(recovery_error([0.0; 3], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn recovery_clamps_rounding() {
        let v = [0.1, 0.7, 0.3];
        let e = recovery_error(v, v.map(|x| x * 3.0)).unwrap();
        assert!(e.is_finite() && e < 1e-12, "{e}");
    }

    #[test]
    fn reproduction_cases() {
        let t = [0.3, 0.5, 0.2];
        assert!(reproduction_error(t, t).unwrap() < 1e-6);
        assert!(reproduction_error(t.map(|v| 7.0 * v), t).unwrap() < 1e-6);
        let got = reproduction_error([1.0 / 3f64.sqrt(); 3], [1.0, 0.0, 0.0]).unwrap();
        // Oracle: arccos(1/√3) in degrees.
        assert!((got - 54.735_610_317_245_35).abs() < 1e-9, "{got}");
        assert!(reproduction_error([1.0, 0.0, 1.0], t).is_err());
    }

    #[test]
    fn summary_of_one_to_eight() {
        let s = summarize(&[8.0, 3.0, 1.0, 5.0, 2.0, 7.0, 4.0, 6.0]).unwrap();
        assert_eq!(s.median, 4.5);
        let sorted: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(quantile_sorted(&sorted, 0.25), 2.75);
        assert_eq!(quantile_sorted(&sorted, 0.75), 6.25);
        assert_eq!(s.trimean, 4.5);
        assert_eq!(s.best25, 1.5);
        assert_eq!(s.worst25, 7.5);
        assert_eq!(s.mean, 4.5);
    }

    #[test]
    fn summary_singleton_and_outlier() {
        let s = summarize(&[3.25]).unwrap();
        assert_eq!((s.mean, s.median, s.trimean, s.best25, s.worst25), (3.25, 3.25, 3.25, 3.25, 3.25));

        let s = summarize(&[0.0, 0.0, 0.0, 100.0]).unwrap();
        assert_eq!(s.median, 0.0);
        assert_eq!(s.mean, 25.0);

        assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
    }
}
