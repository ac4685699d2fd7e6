//! Functional model-X knockoffs built in normalized-score space.
//!
//! Normalized FPC scores `ξ̂_ijl / ω̂_jl^{1/2}` are stacked into a `p·k_n`
//! vector per sample. Their sample correlation `Θ̂^S` is shrunk towards the
//! identity to give `Θ̂_C`; a diagonal `Θ̂_R` is then chosen so that
//! `2Θ̂_C − Θ̂_R ⪰ 0`, and knockoff scores are drawn from the Gaussian
//! conditional law with mean `(I − Θ̂_R Θ̂_C⁻¹) s_i` and covariance
//! `2Θ̂_R − Θ̂_R Θ̂_C⁻¹ Θ̂_R`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::basis::{BasisError, BasisSystem, CurvePanel};
use crate::fpca::{FpcaModel, NULL_COMPONENT_CUT};
use crate::linalg;

/// Lower clamp of the shrinkage intensity; keeps `Θ̂_C` invertible.
pub const GAMMA_MIN: f64 = 1e-3;

#[derive(Error, Debug)]
pub enum KnockoffError {
    #[error("Θ_C is not positive definite (λ_min = {0:e}); increase the shrinkage intensity")]
    NotPositiveDefinite(f64),

    #[error("Θ_R has not been solved")]
    Unsolved,

    #[error("Θ_R is infeasible: λ_min(2Θ_C − Θ_R) = {0:e}")]
    Infeasible(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("shrinkage intensity {0} outside [0, 1]")]
    BadGamma(f64),

    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Structure of the diagonal `Θ̂_R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One common `r`.
    E1,
    /// One `r_j` per variable.
    E2,
    /// One `r_jl` per component.
    E3,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::E1 => "E1",
            Variant::E2 => "E2",
            Variant::E3 => "E3",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct ThetaModel {
    pub p: usize,
    pub k: usize,
    pub theta_s: DMatrix<f64>,
    pub gamma: f64,
    pub theta_c: DMatrix<f64>,
    pub variant: Option<Variant>,
    /// Diagonal of `Θ̂_R`, length `p·k`.
    pub theta_r: Option<DVector<f64>>,
    /// `λ_min(2Θ̂_C − Θ̂_R)` for the stored `Θ̂_R`.
    pub slack_min_eig: Option<f64>,
    /// Flat indices of components left out of normalization.
    pub dropped: Vec<usize>,
}

impl ThetaModel {
    pub fn dim(&self) -> usize {
        self.p * self.k
    }

    /// Replace `Θ̂_R` by an arbitrary diagonal; checks feasibility.
    pub fn with_r(mut self, r: DVector<f64>, variant: Variant) -> Result<Self, KnockoffError> {
        if r.len() != self.dim() {
            return Err(KnockoffError::Shape(format!(
                "Θ_R diagonal has {} entries, expected {}",
                r.len(),
                self.dim()
            )));
        }
        let slack = slack_min_eig(&self.theta_c, &r);
        if slack < -1e-8 {
            return Err(KnockoffError::Infeasible(slack));
        }
        self.theta_r = Some(r);
        self.variant = Some(variant);
        self.slack_min_eig = Some(slack);
        Ok(self)
    }

    /// `Σ (1 − r)` over the free parameters of the variant.
    pub fn objective(&self) -> Option<f64> {
        let r = self.theta_r.as_ref()?;
        let groups = variant_groups(self.variant?, self.p, self.k);
        Some(groups.iter().map(|g| 1.0 - r[g[0]]).sum())
    }
}

/// `λ_min(2Θ_C − diag(r))`.
pub fn slack_min_eig(theta_c: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let mut s = theta_c * 2.0;
    for (i, v) in r.iter().enumerate() {
        s[(i, i)] -= v;
    }
    linalg::min_eigenvalue(&s)
}

/// Stacked normalized scores (`n × p·k`) and the flat indices of dropped components.
pub fn normalized_scores(fpca: &FpcaModel) -> (DMatrix<f64>, Vec<usize>) {
    let (n, p, k) = (fpca.n(), fpca.p(), fpca.k());
    let mut out = DMatrix::zeros(n, p * k);
    let mut dropped = Vec::new();
    for (j, var) in fpca.variables.iter().enumerate() {
        let lead = var.eigenvalues.get(0).cloned().unwrap_or(0.0);
        for l in 0..k {
            let w = var.eigenvalues[l];
            let col = j * k + l;
            if lead <= 0.0 || w < NULL_COMPONENT_CUT * lead || w <= 0.0 {
                dropped.push(col);
                continue;
            }
            let scores = var.scores.column(l);
            let mean = scores.sum() / n as f64;
            let scale = 1.0 / w.sqrt();
            for i in 0..n {
                out[(i, col)] = (scores[i] - mean) * scale;
            }
        }
    }
    if !dropped.is_empty() {
        log::warn!("{} null components left out of score normalization", dropped.len());
    }
    (out, dropped)
}

/// Schäfer-Strimmer-type shrinkage intensity for a correlation matrix.
///
/// With standardized columns `x_a` (divisor `n`) and `θ_ab = mean_i(x_ia x_ib)`,
/// the sampling variance of each off-diagonal entry is estimated as
/// `Σ_i (x_ia x_ib − θ_ab)² / (n(n−1))` and
/// `γ = Σ_{a≠b} Var̂(θ_ab) / Σ_{a≠b} θ_ab²`, clamped to `[GAMMA_MIN, 1]`.
pub fn shrinkage_intensity(normalized: &DMatrix<f64>, theta_s: &DMatrix<f64>) -> f64 {
    let n = normalized.nrows() as f64;
    if n < 2.0 {
        return 1.0;
    }
    let sq = normalized.map(|v| v * v);
    let fourth = sq.tr_mul(&sq);
    let dim = theta_s.nrows();
    let (mut var_sum, mut sq_sum) = (0.0, 0.0);
    for a in 0..dim {
        for b in 0..dim {
            if a == b {
                continue;
            }
            let t = theta_s[(a, b)];
            let ss = (fourth[(a, b)] - n * t * t).max(0.0);
            var_sum += ss / (n * (n - 1.0));
            sq_sum += t * t;
        }
    }
    if sq_sum <= 0.0 {
        return 1.0;
    }
    (var_sum / sq_sum).clamp(GAMMA_MIN, 1.0)
}

/// Sample correlation of normalized scores and its shrunk version.
pub fn estimate_theta_c(fpca: &FpcaModel, gamma: Option<f64>) -> Result<ThetaModel, KnockoffError> {
    let (p, k) = (fpca.p(), fpca.k());
    if fpca.variables.iter().any(|v| v.eigenvalues.len() != k) {
        return Err(KnockoffError::Shape("variables must share one basis size".into()));
    }
    let (normalized, dropped) = normalized_scores(fpca);
    let n = normalized.nrows() as f64;
    let mut theta_s = normalized.tr_mul(&normalized) / n;
    for &d in &dropped {
        theta_s.row_mut(d).fill(0.0);
        theta_s.column_mut(d).fill(0.0);
        theta_s[(d, d)] = 1.0;
    }
    let theta_s = linalg::symmetrize(&theta_s);
    let gamma = match gamma {
        Some(g) if !(0.0..=1.0).contains(&g) => return Err(KnockoffError::BadGamma(g)),
        Some(g) => g,
        None => shrinkage_intensity(&normalized, &theta_s),
    };
    let dim = p * k;
    let theta_c = &theta_s * (1.0 - gamma) + DMatrix::identity(dim, dim) * gamma;
    Ok(ThetaModel {
        p,
        k,
        theta_s,
        gamma,
        theta_c,
        variant: None,
        theta_r: None,
        slack_min_eig: None,
        dropped,
    })
}

/// Parameter groups: each entry lists the diagonal positions sharing one `r`.
fn variant_groups(variant: Variant, p: usize, k: usize) -> Vec<Vec<usize>> {
    match variant {
        Variant::E1 => vec![(0..p * k).collect()],
        Variant::E2 => (0..p).map(|j| (j * k..(j + 1) * k).collect()).collect(),
        Variant::E3 => (0..p * k).map(|i| vec![i]).collect(),
    }
}

/// Settings of the log-barrier interior-point solver.
#[derive(Clone, Copy, Debug)]
pub struct BarrierOptions {
    pub mu_start: f64,
    pub mu_end: f64,
    pub max_newton: usize,
    pub newton_tol: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            mu_start: 1.0,
            mu_end: 1e-6,
            max_newton: 60,
            newton_tol: 1e-12,
        }
    }
}

fn slack_matrix(theta_c2: &DMatrix<f64>, groups: &[Vec<usize>], r: &DVector<f64>) -> DMatrix<f64> {
    let mut s = theta_c2.clone();
    for (g, idx) in groups.iter().enumerate() {
        for &i in idx {
            s[(i, i)] -= r[g];
        }
    }
    s
}

fn chol(s: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    s.cholesky()
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Barrier value `−Σ r − μ(log det S + Σ log r + Σ log(1−r))`; `None` when infeasible.
fn barrier_value(theta_c2: &DMatrix<f64>, groups: &[Vec<usize>], r: &DVector<f64>, mu: f64) -> Option<f64> {
    if r.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return None;
    }
    let c = chol(slack_matrix(theta_c2, groups, r))?;
    let box_term: f64 = r.iter().map(|&v| v.ln() + (1.0 - v).ln()).sum();
    Some(-r.sum() - mu * (log_det(&c) + box_term))
}

/// Maximize `Σ_g r_g` subject to `r_g ∈ [0,1]` and `2Θ_C − Θ_R(r) ⪰ 0`.
fn barrier_solve(
    theta_c: &DMatrix<f64>,
    groups: &[Vec<usize>],
    start: DVector<f64>,
    opts: BarrierOptions,
) -> DVector<f64> {
    let theta_c2 = theta_c * 2.0;
    let m = groups.len();
    let mut r = start;
    let mut mu = opts.mu_start;
    loop {
        for _ in 0..opts.max_newton {
            let Some(c) = chol(slack_matrix(&theta_c2, groups, &r)) else {
                break;
            };
            let s_inv = c.inverse();
            let mut grad = DVector::zeros(m);
            let mut hess = DMatrix::zeros(m, m);
            for (g, idx) in groups.iter().enumerate() {
                let tr: f64 = idx.iter().map(|&a| s_inv[(a, a)]).sum();
                let rg = r[g];
                grad[g] = -1.0 + mu * tr - mu * (1.0 / rg - 1.0 / (1.0 - rg));
                hess[(g, g)] += mu * (1.0 / (rg * rg) + 1.0 / ((1.0 - rg) * (1.0 - rg)));
            }
            for (g, ig) in groups.iter().enumerate() {
                for (h, ih) in groups.iter().enumerate().skip(g) {
                    let mut acc = 0.0;
                    for &a in ig {
                        for &b in ih {
                            let v = s_inv[(a, b)];
                            acc += v * v;
                        }
                    }
                    hess[(g, h)] += mu * acc;
                    if h != g {
                        hess[(h, g)] += mu * acc;
                    }
                }
            }
            let step = match hess.clone().cholesky() {
                Some(hc) => -hc.solve(&grad),
                None => -&grad,
            };
            let decrement = -grad.dot(&step);
            if decrement / 2.0 < opts.newton_tol {
                break;
            }
            let f0 = barrier_value(&theta_c2, groups, &r, mu).unwrap_or(f64::INFINITY);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let cand = &r + &step * t;
                if let Some(f) = barrier_value(&theta_c2, groups, &cand, mu) {
                    if f <= f0 - 0.25 * t * decrement {
                        r = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if mu <= opts.mu_end {
            break;
        }
        mu *= 0.5;
    }
    r
}

/// Push each parameter up to its largest feasible value, holding the others fixed.
fn polish(theta_c: &DMatrix<f64>, groups: &[Vec<usize>], r: &mut DVector<f64>) {
    let theta_c2 = theta_c * 2.0;
    for _ in 0..2 {
        for (g, idx) in groups.iter().enumerate() {
            if r[g] >= 1.0 {
                continue;
            }
            let Some(c) = chol(slack_matrix(&theta_c2, groups, r)) else {
                return;
            };
            let s_inv = c.inverse();
            let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| s_inv[(idx[a], idx[b])]);
            let lmax = linalg::max_eigenvalue(&block);
            if lmax <= 0.0 {
                continue;
            }
            let room = (1.0 / lmax) * (1.0 - 1e-9);
            let old = r[g];
            r[g] = (old + room).min(1.0);
            if chol(slack_matrix(&theta_c2, groups, r)).is_none() {
                r[g] = old;
            }
        }
    }
}

fn expand(groups: &[Vec<usize>], r: &DVector<f64>, dim: usize) -> DVector<f64> {
    let mut full = DVector::zeros(dim);
    for (g, idx) in groups.iter().enumerate() {
        for &i in idx {
            full[i] = r[g];
        }
    }
    full
}

/// Solve for `Θ̂_R` under the chosen variant.
///
/// E1 is closed form, `r = min(1, 2λ_min(Θ̂_C))`. E2 and E3 run a log-barrier
/// Newton method followed by a coordinate-wise boundary push; the result is
/// never worse than the nested solution of the coarser variant.
pub fn solve_r(theta: &ThetaModel, variant: Variant) -> Result<ThetaModel, KnockoffError> {
    solve_r_with(theta, variant, BarrierOptions::default())
}

pub fn solve_r_with(
    theta: &ThetaModel,
    variant: Variant,
    opts: BarrierOptions,
) -> Result<ThetaModel, KnockoffError> {
    let dim = theta.dim();
    let lmin = linalg::min_eigenvalue(&theta.theta_c);
    if lmin <= 0.0 {
        return Err(KnockoffError::NotPositiveDefinite(lmin));
    }
    let r_e1 = (2.0 * lmin).min(1.0);
    let full = match variant {
        Variant::E1 => DVector::from_element(dim, r_e1),
        Variant::E2 | Variant::E3 => {
            let fallback = if variant == Variant::E3 {
                solve_r_with(theta, Variant::E2, opts)?.theta_r.expect("solved")
            } else {
                DVector::from_element(dim, r_e1)
            };
            let groups = variant_groups(variant, theta.p, theta.k);
            let start = DVector::from_element(groups.len(), (0.9 * r_e1).clamp(1e-6, 0.9));
            let mut r = barrier_solve(&theta.theta_c, &groups, start, opts);
            polish(&theta.theta_c, &groups, &mut r);
            let candidate = expand(&groups, &r, dim);
            if candidate.sum() >= fallback.sum() {
                candidate
            } else {
                fallback
            }
        }
    };
    let slack = slack_min_eig(&theta.theta_c, &full);
    let mut out = theta.clone();
    out.theta_r = Some(full);
    out.variant = Some(variant);
    out.slack_min_eig = Some(slack);
    if slack < -1e-8 {
        return Err(KnockoffError::Infeasible(slack));
    }
    Ok(out)
}

/// Sampled knockoffs for every variable.
#[derive(Clone, Debug)]
pub struct KnockoffPanel {
    /// `n × p·k` knockoff normalized scores.
    pub normalized: DMatrix<f64>,
    /// Per-variable `n × k` knockoff FPC scores `ξ̌_ijl`.
    pub scores: Vec<DMatrix<f64>>,
    /// Reconstructed knockoff curves `μ̂_j + Σ_l ξ̌_ijl φ̂_jl`.
    pub curves: CurvePanel,
    pub seed: u64,
    /// Most negative eigenvalue clipped from the conditional covariance.
    pub clipped: f64,
}

/// Knockoff normalized scores given the original ones (`n × p·k`).
///
/// Row `i` uses an independent ChaCha stream `i` of `seed`, so rows can be
/// drawn in parallel and regenerated individually.
pub fn sample_normalized(
    normalized: &DMatrix<f64>,
    theta_c: &DMatrix<f64>,
    theta_r: &DVector<f64>,
    seed: u64,
) -> Result<(DMatrix<f64>, f64), KnockoffError> {
    let dim = theta_c.nrows();
    if normalized.ncols() != dim || theta_r.len() != dim {
        return Err(KnockoffError::Shape("score and Θ dimensions differ".into()));
    }
    let c = theta_c
        .clone()
        .cholesky()
        .ok_or_else(|| KnockoffError::NotPositiveDefinite(linalg::min_eigenvalue(theta_c)))?;
    // C⁻¹ D
    let cinv_d = c.solve(&DMatrix::from_diagonal(theta_r));
    let d = DMatrix::from_diagonal(theta_r);
    let cond_cov = &d * 2.0 - &d * &cinv_d;
    let (root, clipped) = linalg::psd_sqrt(&cond_cov);
    if clipped < -1e-8 {
        log::warn!("conditional covariance clipped at eigenvalue {clipped:e}");
    }
    // row form of (I − D C⁻¹) s_i
    let mean = normalized - normalized * &cinv_d;
    let n = normalized.nrows();
    let rows: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)));
            &root * z
        })
        .collect();
    let mut out = mean;
    for (i, noise) in rows.iter().enumerate() {
        for a in 0..dim {
            out[(i, a)] += noise[a];
        }
    }
    Ok((out, clipped))
}

/// Draw knockoff scores and rebuild knockoff curves (all `k_n` components).
pub fn sample_knockoffs(
    fpca: &FpcaModel,
    theta: &ThetaModel,
    basis: Arc<BasisSystem>,
    seed: u64,
) -> Result<KnockoffPanel, KnockoffError> {
    let theta_r = theta.theta_r.as_ref().ok_or(KnockoffError::Unsolved)?;
    let (normalized, dropped) = normalized_scores(fpca);
    let (mut knock, clipped) = sample_normalized(&normalized, &theta.theta_c, theta_r, seed)?;
    for &d in &dropped {
        knock.column_mut(d).fill(0.0);
    }
    let k = fpca.k();
    let mut scores = Vec::with_capacity(fpca.p());
    let mut coords = Vec::with_capacity(fpca.p());
    for (j, var) in fpca.variables.iter().enumerate() {
        let mut xi = knock.columns(j * k, k).into_owned();
        for (l, mut col) in xi.column_iter_mut().enumerate() {
            col *= var.eigenvalues[l].max(0.0).sqrt();
        }
        let mut curve = &xi * var.eigenfunctions.transpose();
        for (c, mut col) in curve.column_iter_mut().enumerate() {
            col.add_scalar_mut(var.mean[c]);
        }
        scores.push(xi);
        coords.push(curve);
    }
    Ok(KnockoffPanel {
        normalized: knock,
        scores,
        curves: CurvePanel::new(basis, coords)?,
        seed,
        clipped,
    })
}

#[derive(Serialize)]
struct ThetaMeta {
    variant: String,
    gamma: f64,
    slack_min_eig: f64,
    p: usize,
    k: usize,
}

#[derive(Serialize)]
struct RRow {
    index: usize,
    variable_id: usize,
    component: usize,
    r: f64,
}

/// Writes `Θ̂_C` as a dense headerless CSV, a one-row metadata CSV and the `Θ̂_R` diagonal.
pub fn write_theta_csv(
    theta: &ThetaModel,
    matrix_path: &Path,
    meta_path: &Path,
    r_path: &Path,
) -> Result<(), BasisError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(matrix_path)?;
    for row in theta.theta_c.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    let mut m = csv::Writer::from_path(meta_path)?;
    m.serialize(ThetaMeta {
        variant: theta.variant.map(|v| v.to_string()).unwrap_or_default(),
        gamma: theta.gamma,
        slack_min_eig: theta.slack_min_eig.unwrap_or(f64::NAN),
        p: theta.p,
        k: theta.k,
    })?;
    m.flush()?;
    let mut rw = csv::Writer::from_path(r_path)?;
    if let Some(r) = &theta.theta_r {
        for (index, &v) in r.iter().enumerate() {
            rw.serialize(RRow {
                index,
                variable_id: index / theta.k,
                component: index % theta.k,
                r: v,
            })?;
        }
    }
    rw.flush()?;
    Ok(())
}

/// Build a bare `ThetaModel` around a given correlation matrix (no score data).
pub fn theta_from_matrix(theta_c: DMatrix<f64>, p: usize, k: usize) -> Result<ThetaModel, KnockoffError> {
    if theta_c.nrows() != p * k || theta_c.ncols() != p * k {
        return Err(KnockoffError::Shape(format!(
            "matrix is {}×{}, expected {}",
            theta_c.nrows(),
            theta_c.ncols(),
            p * k
        )));
    }
    Ok(ThetaModel {
        p,
        k,
        theta_s: theta_c.clone(),
        gamma: 0.0,
        theta_c,
        variant: None,
        theta_r: None,
        slack_min_eig: None,
        dropped: Vec::new(),
    })
}
