//! Finite function systems on a closed interval and the coordinate mapping.
//!
//! A [`BasisSystem`] stores its Gram matrix `G` together with `G^{1/2}` and the
//! pseudo-inverse root `G^{†1/2}`; every inner product between curves in the
//! span is computed as `[x]ᵀ G [y]` on coordinate vectors.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Error, Debug)]
pub enum BasisError {
    #[error("invalid domain [{0}, {1}]: left end must be below right end")]
    InvalidDomain(f64, f64),

    #[error("spline degree must be at least 1")]
    InvalidDegree,

    #[error("basis must contain at least one function")]
    EmptyBasis,

    #[error("quadrature too coarse: need at least {required} points, got {provided}")]
    QuadratureTooCoarse { required: usize, provided: usize },

    #[error("Gram matrix asymmetric by {0:e}; quadrature is too coarse")]
    AsymmetricGram(f64),

    #[error("point {t} lies outside the domain [{a}, {b}]")]
    OutsideDomain { t: f64, a: f64, b: f64 },

    #[error("coordinate vector has length {found}, basis has {expected} functions")]
    LengthMismatch { expected: usize, found: usize },

    #[error("need at least {needed} samples to fit the basis, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Malformed(String),
}

/// Closed interval `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

impl Domain {
    pub fn new(a: f64, b: f64) -> Result<Self, BasisError> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(BasisError::InvalidDomain(a, b));
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * self.length();
        t >= self.a - slack && t <= self.b + slack
    }

    /// `count` equispaced points including both ends.
    pub fn grid(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![0.5 * (self.a + self.b)],
            _ => (0..count)
                .map(|i| self.a + self.length() * i as f64 / (count - 1) as f64)
                .collect(),
        }
    }
}

/// What to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisSpec {
    /// Clamped B-splines with equispaced interior knots.
    BSpline { interior_knots: usize, degree: usize },
    /// Orthonormal Fourier system `1, sin, cos, sin, cos, ...` of the given size.
    Fourier { size: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum BasisKind {
    BSpline {
        degree: usize,
        /// Full clamped knot vector (boundary knots repeated `degree + 1` times).
        knots: Vec<f64>,
    },
    Fourier,
}

#[derive(Clone, Debug)]
pub struct BasisSystem {
    pub kind: BasisKind,
    pub size: usize,
    pub domain: Domain,
    pub quad_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    pub gram: DMatrix<f64>,
    pub gram_sqrt: DMatrix<f64>,
    pub gram_pinv_sqrt: DMatrix<f64>,
}

const GRAM_CUT: f64 = 1e-10;

/// Build a basis system and its Gram caches.
///
/// B-spline Gram entries use composite Simpson on every knot span; the Fourier
/// system uses the periodic trapezoidal rule, which is exact for the products.
pub fn make_basis(
    spec: BasisSpec,
    domain: Domain,
    quadrature_points: usize,
) -> Result<BasisSystem, BasisError> {
    let domain = Domain::new(domain.a, domain.b)?;
    let (kind, size) = match spec {
        BasisSpec::BSpline {
            interior_knots,
            degree,
        } => {
            if degree < 1 {
                return Err(BasisError::InvalidDegree);
            }
            let mut knots = vec![domain.a; degree + 1];
            for i in 1..=interior_knots {
                knots.push(domain.a + domain.length() * i as f64 / (interior_knots + 1) as f64);
            }
            knots.extend(std::iter::repeat_n(domain.b, degree + 1));
            (BasisKind::BSpline { degree, knots }, interior_knots + degree + 1)
        }
        BasisSpec::Fourier { size } => {
            if size == 0 {
                return Err(BasisError::EmptyBasis);
            }
            (BasisKind::Fourier, size)
        }
    };
    let required = 2 * size;
    if quadrature_points < required {
        return Err(BasisError::QuadratureTooCoarse {
            required,
            provided: quadrature_points,
        });
    }

    let (quad_nodes, quad_weights) = match &kind {
        BasisKind::BSpline { knots, degree } => {
            let breaks: Vec<f64> = knots[*degree..knots.len() - degree].to_vec();
            simpson_rule(&breaks, quadrature_points)
        }
        BasisKind::Fourier => periodic_trapezoid(domain, quadrature_points),
    };

    let mut basis = BasisSystem {
        kind,
        size,
        domain,
        quad_nodes,
        quad_weights,
        gram: DMatrix::zeros(size, size),
        gram_sqrt: DMatrix::zeros(size, size),
        gram_pinv_sqrt: DMatrix::zeros(size, size),
    };

    let design = basis.design_matrix_unchecked(&basis.quad_nodes);
    let mut weighted = design.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= basis.quad_weights[i];
    }
    let gram = design.tr_mul(&weighted);
    let asym = (&gram - gram.transpose()).amax();
    if asym > 1e-10 {
        return Err(BasisError::AsymmetricGram(asym));
    }
    let gram = linalg::symmetrize(&gram);
    let (root, pinv_root) = linalg::sqrt_and_pinv_sqrt(&gram, GRAM_CUT);
    basis.gram = gram;
    basis.gram_sqrt = root;
    basis.gram_pinv_sqrt = pinv_root;
    Ok(basis)
}

/// Composite Simpson nodes and weights with an even number of panels per break interval.
fn simpson_rule(breaks: &[f64], total_points: usize) -> (Vec<f64>, Vec<f64>) {
    let spans = breaks.len() - 1;
    let mut per_span = (total_points.saturating_sub(1)).div_ceil(spans).max(2);
    if per_span % 2 == 1 {
        per_span += 1;
    }
    let mut nodes = Vec::with_capacity(spans * per_span + 1);
    let mut weights = Vec::with_capacity(spans * per_span + 1);
    for s in 0..spans {
        let (lo, hi) = (breaks[s], breaks[s + 1]);
        let h = (hi - lo) / per_span as f64;
        for m in 0..=per_span {
            let coef = if m == 0 || m == per_span {
                1.0
            } else if m % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let w = coef * h / 3.0;
            if m == 0 && s > 0 {
                *weights.last_mut().unwrap() += w;
                continue;
            }
            nodes.push(lo + h * m as f64);
            weights.push(w);
        }
    }
    (nodes, weights)
}

fn periodic_trapezoid(domain: Domain, points: usize) -> (Vec<f64>, Vec<f64>) {
    let h = domain.length() / points as f64;
    let nodes = (0..points).map(|i| domain.a + h * i as f64).collect();
    (nodes, vec![h; points])
}

impl BasisSystem {
    /// Values of all basis functions at `t` (no domain check).
    pub fn values_at(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.size);
        match &self.kind {
            BasisKind::BSpline { degree, knots } => {
                bspline_values(knots, *degree, t.clamp(self.domain.a, self.domain.b), &mut out)
            }
            BasisKind::Fourier => {
                let period = self.domain.length();
                let x = (t - self.domain.a) / period;
                out[0] = 1.0 / period.sqrt();
                let amp = (2.0 / period).sqrt();
                for idx in 1..self.size {
                    let freq = idx.div_ceil(2) as f64;
                    let arg = 2.0 * PI * freq * x;
                    out[idx] = if idx % 2 == 1 {
                        amp * arg.sin()
                    } else {
                        amp * arg.cos()
                    };
                }
            }
        }
        out
    }

    fn design_matrix_unchecked(&self, ts: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(ts.len(), self.size);
        for (i, &t) in ts.iter().enumerate() {
            m.set_row(i, &self.values_at(t).transpose());
        }
        m
    }

    /// `L × k_n` matrix of basis values at the given points.
    pub fn design_matrix(&self, ts: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        for &t in ts {
            self.check_point(t)?;
        }
        Ok(self.design_matrix_unchecked(ts))
    }

    fn check_point(&self, t: f64) -> Result<(), BasisError> {
        if !self.domain.contains(t) || !t.is_finite() {
            return Err(BasisError::OutsideDomain {
                t,
                a: self.domain.a,
                b: self.domain.b,
            });
        }
        Ok(())
    }

    /// `Σ_m c_m b_m(t)`.
    pub fn evaluate(&self, coords: &DVector<f64>, t: f64) -> Result<f64, BasisError> {
        self.check_len(coords.len())?;
        self.check_point(t)?;
        Ok(self.values_at(t).dot(coords))
    }

    fn check_len(&self, len: usize) -> Result<(), BasisError> {
        if len != self.size {
            return Err(BasisError::LengthMismatch {
                expected: self.size,
                found: len,
            });
        }
        Ok(())
    }

    /// `⟨x, y⟩ = [x]ᵀ G [y]`.
    pub fn inner_product(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram * y))
    }

    /// The same inner product by quadrature on the stored rule; used as a check.
    pub fn inner_product_quadrature(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.quad_nodes
            .iter()
            .zip(&self.quad_weights)
            .map(|(&t, &w)| {
                let v = self.values_at(t);
                w * v.dot(x) * v.dot(y)
            })
            .sum()
    }
}

/// Cox-de Boor evaluation of the `degree + 1` nonzero B-splines at `t`.
fn bspline_values(knots: &[f64], degree: usize, t: f64, out: &mut DVector<f64>) {
    let n_basis = knots.len() - degree - 1;
    // span index i with knots[i] <= t < knots[i+1], restricted to [degree, n_basis - 1]
    let mut span = degree;
    while span < n_basis - 1 && t >= knots[span + 1] {
        span += 1;
    }
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    let mut vals = vec![0.0; degree + 1];
    vals[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    for (r, v) in vals.into_iter().enumerate() {
        out[span - degree + r] = v;
    }
}

/// Result of a least-squares projection onto a basis.
#[derive(Clone, Debug)]
pub struct Projection {
    pub coords: DVector<f64>,
    /// Ridge penalty added to the normal equations when the design was rank deficient.
    pub ridge: Option<f64>,
}

/// Least-squares coordinates of a sampled curve.
pub fn project_curve(samples: &[(f64, f64)], basis: &BasisSystem) -> Result<Projection, BasisError> {
    if samples.len() < basis.size {
        return Err(BasisError::TooFewSamples {
            needed: basis.size,
            found: samples.len(),
        });
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let design = basis.design_matrix(&ts)?;
    let values = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let projector = GridProjector::from_design(design, distinct_count(&ts));
    Ok(Projection {
        coords: projector.project(&values),
        ridge: projector.ridge,
    })
}

fn distinct_count(ts: &[f64]) -> usize {
    let mut sorted = ts.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    sorted.len()
}

/// Cached least-squares solver for curves sampled on a fixed set of points.
#[derive(Clone, Debug)]
pub struct GridProjector {
    /// `(BᵀB + ρI)⁻¹ Bᵀ`
    solve: DMatrix<f64>,
    pub ridge: Option<f64>,
}

impl GridProjector {
    pub fn new(basis: &BasisSystem, grid: &[f64]) -> Result<Self, BasisError> {
        if grid.len() < basis.size {
            return Err(BasisError::TooFewSamples {
                needed: basis.size,
                found: grid.len(),
            });
        }
        let design = basis.design_matrix(grid)?;
        Ok(Self::from_design(design, distinct_count(grid)))
    }

    fn from_design(design: DMatrix<f64>, distinct: usize) -> Self {
        let k = design.ncols();
        let normal = design.tr_mul(&design);
        let mut ridge = None;
        let chol = if distinct >= k {
            normal.clone().cholesky().filter(|c| {
                // reject numerically singular factorizations
                let d = c.l_dirty().diagonal();
                let dmax = d.amax();
                d.iter().all(|&v| v > 1e-7 * dmax)
            })
        } else {
            None
        };
        let chol = match chol {
            Some(c) => c,
            None => {
                let lam = 1e-8 * normal.trace().max(f64::MIN_POSITIVE);
                log::warn!("rank-deficient projection design; ridge {lam:e} applied");
                ridge = Some(lam);
                (normal + DMatrix::identity(k, k) * lam)
                    .cholesky()
                    .expect("ridge-regularized normal matrix is positive definite")
            }
        };
        let solve = chol.solve(&design.transpose());
        Self { solve, ridge }
    }

    pub fn project(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.solve * values
    }

    /// Project every row of an `n × L` value matrix; returns `n × k_n`.
    pub fn project_rows(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        values * self.solve.transpose()
    }
}

/// `n × p` functional observations stored as coordinates in one shared basis.
#[derive(Clone, Debug)]
pub struct CurvePanel {
    pub basis: Arc<BasisSystem>,
    /// One `n × k_n` coordinate matrix per variable.
    pub coords: Vec<DMatrix<f64>>,
}

impl CurvePanel {
    pub fn new(basis: Arc<BasisSystem>, coords: Vec<DMatrix<f64>>) -> Result<Self, BasisError> {
        let n = coords.first().map(|c| c.nrows()).unwrap_or(0);
        for c in &coords {
            if c.ncols() != basis.size {
                return Err(BasisError::LengthMismatch {
                    expected: basis.size,
                    found: c.ncols(),
                });
            }
            if c.nrows() != n {
                return Err(BasisError::Malformed(format!(
                    "variables disagree on sample count ({} vs {n})",
                    c.nrows()
                )));
            }
        }
        Ok(Self { basis, coords })
    }

    pub fn n(&self) -> usize {
        self.coords.first().map(|c| c.nrows()).unwrap_or(0)
    }

    pub fn p(&self) -> usize {
        self.coords.len()
    }

    /// Mean coordinate vector `μ̂_j`.
    pub fn mean(&self, j: usize) -> DVector<f64> {
        linalg::column_means(&self.coords[j])
    }

    pub fn centered(&self, j: usize) -> DMatrix<f64> {
        linalg::center_rows(&self.coords[j], &self.mean(j))
    }
}

/// One row of the long-format curve CSV.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurveRecord {
    pub sample_id: usize,
    pub variable_id: usize,
    pub t: f64,
    pub value: f64,
}

/// One row of the coordinate-panel CSV.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoefRecord {
    pub sample_id: usize,
    pub variable_id: usize,
    pub coef_index: usize,
    pub coef_value: f64,
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRecord>, BasisError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_curve_csv(path: &Path, records: &[CurveRecord]) -> Result<(), BasisError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Group long-format records into per-(sample, variable) sample lists.
///
/// Ids are 0-based and must be dense: every sample has every variable.
pub fn group_curves(records: &[CurveRecord]) -> Result<Vec<Vec<Vec<(f64, f64)>>>, BasisError> {
    let n = records.iter().map(|r| r.sample_id + 1).max().unwrap_or(0);
    let p = records.iter().map(|r| r.variable_id + 1).max().unwrap_or(0);
    let mut grouped = vec![vec![Vec::new(); n]; p];
    for r in records {
        grouped[r.variable_id][r.sample_id].push((r.t, r.value));
    }
    for (j, per_var) in grouped.iter().enumerate() {
        for (i, s) in per_var.iter().enumerate() {
            if s.is_empty() {
                return Err(BasisError::Malformed(format!(
                    "no samples for sample {i}, variable {j}"
                )));
            }
        }
    }
    Ok(grouped)
}

/// Project long-format records onto `basis`, one least-squares fit per curve.
pub fn panel_from_records(
    records: &[CurveRecord],
    basis: Arc<BasisSystem>,
) -> Result<CurvePanel, BasisError> {
    let grouped = group_curves(records)?;
    let mut coords = Vec::with_capacity(grouped.len());
    for per_var in &grouped {
        let mut m = DMatrix::zeros(per_var.len(), basis.size);
        for (i, samples) in per_var.iter().enumerate() {
            let proj = project_curve(samples, &basis)?;
            m.set_row(i, &proj.coords.transpose());
        }
        coords.push(m);
    }
    CurvePanel::new(basis, coords)
}

pub fn write_coordinate_csv(path: &Path, panel: &CurvePanel) -> Result<(), BasisError> {
    let mut w = csv::Writer::from_path(path)?;
    for (j, m) in panel.coords.iter().enumerate() {
        for i in 0..m.nrows() {
            for c in 0..m.ncols() {
                w.serialize(CoefRecord {
                    sample_id: i,
                    variable_id: j,
                    coef_index: c,
                    coef_value: m[(i, c)],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> BasisSystem {
        make_basis(
            BasisSpec::BSpline {
                interior_knots: 3,
                degree: 3,
            },
            Domain::unit(),
            201,
        )
        .unwrap()
    }

    #[test]
    fn cubic_spline_size_is_seven() {
        assert_eq!(cubic().size, 7);
    }

    #[test]
    fn hat_function_gram() {
        let b = make_basis(
            BasisSpec::BSpline {
                interior_knots: 0,
                degree: 1,
            },
            Domain::unit(),
            201,
        )
        .unwrap();
        assert_eq!(b.size, 2);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]);
        assert!((&b.gram - expected).amax() < 1e-12);
    }

    #[test]
    fn fourier_gram_is_identity() {
        let b = make_basis(BasisSpec::Fourier { size: 25 }, Domain::unit(), 201).unwrap();
        assert!((&b.gram - DMatrix::identity(25, 25)).amax() < 1e-12);
    }

    #[test]
    fn fourier_first_function_value() {
        let b = make_basis(BasisSpec::Fourier { size: 5 }, Domain::unit(), 64).unwrap();
        let mut e1 = DVector::zeros(5);
        e1[0] = 1.0;
        assert!((b.evaluate(&e1, 0.25).unwrap() - 1.0).abs() < 1e-15);
        let mut e2 = DVector::zeros(5);
        e2[1] = 1.0;
        assert!((b.evaluate(&e2, 0.25).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_coords_evaluate_to_zero() {
        let b = cubic();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(b.evaluate(&DVector::zeros(7), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_domain_rejected() {
        assert!(matches!(
            make_basis(BasisSpec::Fourier { size: 3 }, Domain { a: 1.0, b: 1.0 }, 50),
            Err(BasisError::InvalidDomain(..))
        ));
    }

    #[test]
    fn coarse_quadrature_rejected() {
        let r = make_basis(
            BasisSpec::BSpline {
                interior_knots: 3,
                degree: 3,
            },
            Domain::unit(),
            10,
        );
        assert!(matches!(r, Err(BasisError::QuadratureTooCoarse { .. })));
    }

    #[test]
    fn outside_domain_is_error() {
        let b = cubic();
        assert!(matches!(
            b.evaluate(&DVector::zeros(7), 1.5),
            Err(BasisError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn partition_of_unity_projects_to_ones() {
        let b = cubic();
        let samples: Vec<(f64, f64)> = Domain::unit().grid(51).into_iter().map(|t| (t, 1.0)).collect();
        let p = project_curve(&samples, &b).unwrap();
        assert!(p.ridge.is_none());
        for c in p.coords.iter() {
            assert!((c - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn basis_function_projects_to_unit_vector() {
        let b = cubic();
        let grid = Domain::unit().grid(51);
        let samples: Vec<(f64, f64)> = grid.iter().map(|&t| (t, b.values_at(t)[2])).collect();
        let p = project_curve(&samples, &b).unwrap();
        for (i, c) in p.coords.iter().enumerate() {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-10, "{i}: {c}");
        }
        // evaluate on a fine grid matches b_3 itself
        for t in Domain::unit().grid(97) {
            assert!((b.evaluate(&p.coords, t).unwrap() - b.values_at(t)[2]).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_distinct_points_uses_ridge() {
        let b = cubic();
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (if i < 5 { 0.2 } else { 0.7 }, 1.0)).collect();
        let p = project_curve(&samples, &b).unwrap();
        assert!(p.ridge.is_some());
        assert!(p.coords.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn too_few_samples_is_error() {
        let b = cubic();
        assert!(matches!(
            project_curve(&[(0.1, 1.0), (0.5, 2.0)], &b),
            Err(BasisError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn group_curves_requires_dense_ids() {
        let recs = vec![
            CurveRecord { sample_id: 0, variable_id: 0, t: 0.0, value: 1.0 },
            CurveRecord { sample_id: 1, variable_id: 1, t: 0.0, value: 1.0 },
        ];
        assert!(group_curves(&recs).is_err());
    }
}
