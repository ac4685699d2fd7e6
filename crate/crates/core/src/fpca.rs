//! Empirical Karhunen-Loève expansion in coordinate space.
//!
//! For each variable the covariance operator is represented by
//! `M = n⁻¹ G^{1/2} (Σ_i [X_i][X_i]ᵀ) G^{1/2}` on centered coordinates. Its
//! eigenvectors `v_l` give eigenfunction coordinates `G^{†1/2} v_l` and scores
//! `[X_i]ᵀ G^{1/2} v_l`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{BasisError, BasisSystem, CurvePanel};
use crate::linalg;

/// Components whose eigenvalue is below this fraction of the leading one are
/// left out of score normalization.
pub const NULL_COMPONENT_CUT: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct VariableFpca {
    /// Nonincreasing, clipped at zero.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors of `M_j`, one per column.
    pub eigenvectors: DMatrix<f64>,
    /// Eigenfunction coordinates `[φ̂_l]`, one per column.
    pub eigenfunctions: DMatrix<f64>,
    /// `n × k_n` score matrix.
    pub scores: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Truncation level chosen by the cumulative-variance rule.
    pub truncation: usize,
    /// All eigenvalues were zero (identical curves).
    pub degenerate: bool,
}

impl VariableFpca {
    /// Number of components with eigenvalue above the null-space cut.
    pub fn usable_components(&self) -> usize {
        let lead = self.eigenvalues.get(0).cloned().unwrap_or(0.0);
        if lead <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&w| w >= NULL_COMPONENT_CUT * lead && w > 0.0)
            .count()
    }

    /// First `d` score columns.
    pub fn truncated_scores(&self, d: usize) -> DMatrix<f64> {
        self.scores.columns(0, d.min(self.scores.ncols())).into_owned()
    }
}

#[derive(Clone, Debug)]
pub struct FpcaModel {
    pub variables: Vec<VariableFpca>,
    pub fraction: f64,
}

impl FpcaModel {
    pub fn p(&self) -> usize {
        self.variables.len()
    }

    pub fn n(&self) -> usize {
        self.variables.first().map(|v| v.scores.nrows()).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.variables.first().map(|v| v.eigenvalues.len()).unwrap_or(0)
    }

    pub fn truncations(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.truncation).collect()
    }
}

/// Smallest `d ≥ 1` whose leading eigenvalues reach `fraction` of the total.
///
/// Returns `(d, degenerate)`; all-zero input yields `(1, true)`.
pub fn choose_truncation(eigenvalues: &[f64], fraction: f64) -> (usize, bool) {
    let total: f64 = eigenvalues.iter().map(|w| w.max(0.0)).sum();
    if total <= 0.0 || eigenvalues.is_empty() {
        return (1, true);
    }
    let mut acc = 0.0;
    for (i, w) in eigenvalues.iter().enumerate() {
        acc += w.max(0.0);
        if acc / total >= fraction - 1e-12 {
            return (i + 1, false);
        }
    }
    (eigenvalues.len(), false)
}

/// Fit one variable from its raw `n × k_n` coordinates.
pub fn fit_variable(coords: &DMatrix<f64>, basis: &BasisSystem, fraction: f64) -> VariableFpca {
    let n = coords.nrows().max(1) as f64;
    let mean = linalg::column_means(coords);
    let centered = linalg::center_rows(coords, &mean);
    let half = &centered * &basis.gram_sqrt;
    let m = half.tr_mul(&half) / n;
    let (mut values, mut vectors) = linalg::sym_eigen_desc(&m);
    linalg::fix_column_signs(&mut vectors);
    values.apply(|w| *w = w.max(0.0));
    let lead = values.get(0).cloned().unwrap_or(0.0);
    // exact zeros for numerically null directions keep degenerate panels clean
    let scale = 1.0 + mean.norm_squared() * basis.gram.amax();
    if lead <= 1e-20 * scale {
        values.fill(0.0);
    }
    let scores = &half * &vectors;
    let eigenfunctions = &basis.gram_pinv_sqrt * &vectors;
    let (truncation, degenerate) = choose_truncation(values.as_slice(), fraction);
    if degenerate {
        log::warn!("degenerate variable: all FPCA eigenvalues are zero");
    }
    VariableFpca {
        eigenvalues: values,
        eigenvectors: vectors,
        eigenfunctions,
        scores,
        mean,
        truncation,
        degenerate,
    }
}

/// Per-variable FPCA of a panel; `fraction` drives the truncation levels.
pub fn fit_fpca(panel: &CurvePanel, fraction: f64) -> Result<FpcaModel, BasisError> {
    if panel.n() < 2 {
        return Err(BasisError::TooFewSamples {
            needed: 2,
            found: panel.n(),
        });
    }
    let variables = panel
        .coords
        .iter()
        .map(|c| fit_variable(c, &panel.basis, fraction))
        .collect();
    Ok(FpcaModel {
        variables,
        fraction,
    })
}

/// Scores `⟨x − μ̂_j, φ̂_jl⟩` for `l < d`.
pub fn transform_scores(
    model: &FpcaModel,
    basis: &BasisSystem,
    coords: &DVector<f64>,
    j: usize,
    d: usize,
) -> Result<DVector<f64>, BasisError> {
    let var = &model.variables[j];
    if coords.len() != var.mean.len() {
        return Err(BasisError::LengthMismatch {
            expected: var.mean.len(),
            found: coords.len(),
        });
    }
    if d > var.eigenfunctions.ncols() {
        return Err(BasisError::LengthMismatch {
            expected: var.eigenfunctions.ncols(),
            found: d,
        });
    }
    let centered = coords - &var.mean;
    let g_x = &basis.gram * centered;
    Ok(DVector::from_iterator(
        d,
        (0..d).map(|l| var.eigenfunctions.column(l).dot(&g_x)),
    ))
}

#[derive(Serialize)]
struct EigenRow {
    variable_id: usize,
    component: usize,
    eigenvalue: f64,
}

#[derive(Serialize)]
struct EigenfunctionRow {
    variable_id: usize,
    component: usize,
    coef_index: usize,
    coef_value: f64,
}

/// Writes `variable_id, component, eigenvalue` to `eigen_path` and the
/// eigenfunction coordinates to `function_path`.
pub fn write_fpca_csv(
    model: &FpcaModel,
    eigen_path: &Path,
    function_path: &Path,
) -> Result<(), BasisError> {
    let mut w = csv::Writer::from_path(eigen_path)?;
    let mut f = csv::Writer::from_path(function_path)?;
    for (j, var) in model.variables.iter().enumerate() {
        for (l, &eigenvalue) in var.eigenvalues.iter().enumerate() {
            w.serialize(EigenRow {
                variable_id: j,
                component: l,
                eigenvalue,
            })?;
            for (c, &coef_value) in var.eigenfunctions.column(l).iter().enumerate() {
                f.serialize(EigenfunctionRow {
                    variable_id: j,
                    component: l,
                    coef_index: c,
                    coef_value,
                })?;
            }
        }
    }
    w.flush()?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, BasisSpec, Domain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn spline() -> Arc<BasisSystem> {
        Arc::new(
            make_basis(
                BasisSpec::BSpline {
                    interior_knots: 3,
                    degree: 3,
                },
                Domain::unit(),
                201,
            )
            .unwrap(),
        )
    }

    fn random_panel(n: usize, seed: u64) -> CurvePanel {
        let basis = spline();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = DMatrix::from_fn(n, basis.size, |_, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / (c + 1) as f64 + 0.3
        });
        CurvePanel::new(basis, vec![coords]).unwrap()
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(choose_truncation(&[9.0, 1.0], 0.9), (1, false));
        assert_eq!(choose_truncation(&[4.0, 3.0, 2.0, 1.0], 0.9), (3, false));
        assert_eq!(choose_truncation(&[1.0, 0.0, 0.0], 0.5), (1, false));
        assert_eq!(choose_truncation(&[1.0, 0.0, 0.0], 1.0), (1, false));
        assert_eq!(choose_truncation(&[0.0, 0.0], 0.9), (1, true));
    }

    #[test]
    fn identical_curves_are_degenerate() {
        let basis = spline();
        let row = DVector::from_fn(7, |i, _| i as f64 * 0.1 - 0.2);
        let coords = DMatrix::from_fn(12, 7, |_, c| row[c]);
        let panel = CurvePanel::new(basis, vec![coords]).unwrap();
        let model = fit_fpca(&panel, 0.9).unwrap();
        let v = &model.variables[0];
        assert!(v.degenerate);
        assert!(v.eigenvalues.iter().all(|&w| w == 0.0));
        assert!(v.scores.amax() < 1e-12);
    }

    #[test]
    fn eigen_trace_and_score_covariance_identities() {
        let panel = random_panel(80, 3);
        let model = fit_fpca(&panel, 0.9).unwrap();
        let v = &model.variables[0];
        let basis = &panel.basis;
        let centered = panel.centered(0);
        let half = &centered * &basis.gram_sqrt;
        let m = half.tr_mul(&half) / 80.0;
        assert!((v.eigenvalues.sum() - m.trace()).abs() / m.trace() < 1e-8);
        for w in v.eigenvalues.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let cov = v.scores.tr_mul(&v.scores) / 80.0;
        let diag = DMatrix::from_diagonal(&v.eigenvalues);
        assert!((cov - diag).amax() < 1e-8);
        for c in v.scores.column_iter() {
            assert!(c.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn eigenfunctions_orthonormal_under_gram() {
        let panel = random_panel(60, 5);
        let model = fit_fpca(&panel, 0.9).unwrap();
        let phi = &model.variables[0].eigenfunctions;
        let gram = phi.transpose() * &panel.basis.gram * phi;
        assert!((gram - DMatrix::identity(7, 7)).amax() < 1e-8);
    }

    #[test]
    fn scores_reconstruct_centered_coordinates() {
        let panel = random_panel(40, 9);
        let model = fit_fpca(&panel, 0.9).unwrap();
        let v = &model.variables[0];
        let recon = &v.scores * v.eigenfunctions.transpose();
        assert!((recon - panel.centered(0)).amax() < 1e-9);
    }

    #[test]
    fn transform_mean_and_eigenfunction() {
        let panel = random_panel(50, 11);
        let model = fit_fpca(&panel, 0.9).unwrap();
        let v = &model.variables[0];
        let zero = transform_scores(&model, &panel.basis, &v.mean, 0, 7).unwrap();
        assert!(zero.amax() < 1e-12);
        let curve = &v.mean + v.eigenfunctions.column(0) * 2.5;
        let s = transform_scores(&model, &panel.basis, &curve, 0, 3).unwrap();
        assert!((s[0] - 2.5).abs() < 1e-9);
        assert!(s[1].abs() < 1e-9 && s[2].abs() < 1e-9);
    }

    #[test]
    fn transform_matches_quadrature() {
        let panel = random_panel(50, 13);
        let model = fit_fpca(&panel, 0.9).unwrap();
        let v = &model.variables[0];
        let x = DVector::from_fn(7, |i, _| (i as f64 * 0.7).sin());
        let s = transform_scores(&model, &panel.basis, &x, 0, 7).unwrap();
        for l in 0..7 {
            let phi = v.eigenfunctions.column(l).into_owned();
            let q = panel.basis.inner_product_quadrature(&(&x - &v.mean), &phi);
            assert!((s[l] - q).abs() < 1e-6 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let panel = random_panel(30, 21);
        let a = fit_fpca(&panel, 0.9).unwrap();
        let b = fit_fpca(&panel, 0.9).unwrap();
        assert_eq!(a.variables[0].scores, b.variables[0].scores);
        assert_eq!(a.variables[0].eigenvalues, b.variables[0].eigenvalues);
    }
}
