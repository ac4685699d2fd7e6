//! Local-linear pre-smoothing of noisy, irregularly sampled curves.

use crate::basis::{BasisError, Domain};

/// Default bandwidth constant on the unit interval.
pub const DEFAULT_BANDWIDTH_CONSTANT: f64 = 0.5;
/// Default number of evaluation points.
pub const DEFAULT_GRID: usize = 101;
/// Kernel mass below which the nearest sample is used instead.
pub const MIN_KERNEL_MASS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RawCurve {
    pub sample_id: usize,
    pub variable_id: usize,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Smoothed {
    pub values: Vec<f64>,
    /// Grid positions that fell back to the nearest sample.
    pub fallback: Vec<usize>,
}

/// `c · L^{-1/5}`.
pub fn default_bandwidth(samples: usize, c: f64) -> f64 {
    c * (samples as f64).powf(-0.2)
}

/// Gaussian-kernel local-linear estimate at every grid point.
pub fn local_linear_smooth(
    raw: &RawCurve,
    bandwidth: Option<f64>,
    grid: &[f64],
    domain: Domain,
) -> Result<Smoothed, BasisError> {
    let count = raw.samples.len();
    if count < 2 {
        return Err(BasisError::TooFewSamples { needed: 2, found: count });
    }
    for &(t, _) in &raw.samples {
        if !domain.contains(t) {
            return Err(BasisError::OutsideDomain {
                t,
                a: domain.a,
                b: domain.b,
            });
        }
    }
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(count, DEFAULT_BANDWIDTH_CONSTANT) * domain.length());
    if h.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(BasisError::Malformed(format!("bandwidth must be positive, got {h}")));
    }
    // a fixed summation order makes the result independent of the input order
    let mut sorted = raw.samples.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut values = Vec::with_capacity(grid.len());
    let mut fallback = Vec::new();
    for (gi, &u) in grid.iter().enumerate() {
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(t, w) in &sorted {
            let d = t - u;
            let k = (-0.5 * (d / h) * (d / h)).exp();
            s0 += k;
            s1 += k * d;
            s2 += k * d * d;
            r0 += k * w;
            r1 += k * d * w;
        }
        let det = s0 * s2 - s1 * s1;
        if s0 < MIN_KERNEL_MASS || det <= 1e-14 * s0 * s2 {
            let nearest = sorted
                .iter()
                .min_by(|a, b| (a.0 - u).abs().total_cmp(&(b.0 - u).abs()))
                .expect("at least two samples");
            values.push(nearest.1);
            fallback.push(gi);
            continue;
        }
        values.push((s2 * r0 - s1 * r1) / det);
    }
    if !fallback.is_empty() {
        log::warn!(
            "sample {} variable {}: nearest-neighbour fallback at {} grid points",
            raw.sample_id,
            raw.variable_id,
            fallback.len()
        );
    }
    Ok(Smoothed { values, fallback })
}
