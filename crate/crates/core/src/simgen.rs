//! Synthetic data for the three models.
//!
//! Curves are `X_ij(u) = φ̃(u)ᵀθ_ij` in a 25-term Fourier system on `[0, 1]`,
//! with `θ_i ~ N(0, Λ)` for the regressions and sequential structural
//! equations along a random DAG for the graphical model. Because the Fourier
//! system is orthonormal, every integral `∫ β X` is an inner product of
//! coefficient vectors and is computed exactly.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::Serialize;
use thiserror::Error;

use crate::basis::{make_basis, BasisError, BasisSpec, BasisSystem, Domain};
use crate::linalg;
use crate::smoothing::RawCurve;

pub const FOURIER_SIZE: usize = 25;
/// Eigenvalue floor applied to `Λ`.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
/// Number of Fourier terms carrying the functional response error.
pub const RESPONSE_ERROR_TERMS: usize = 5;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("support size {support} exceeds p = {p}")]
    SupportTooLarge { support: usize, p: usize },

    #[error("graph generation needs p ≥ 3, got {0}")]
    GraphTooSmall(usize),

    #[error("ρ must lie in [0, 1), got {0}")]
    BadRho(f64),

    #[error("coefficient range [{0}, {1}] is invalid")]
    BadRange(f64, f64),

    #[error("covariance is not positive semidefinite after flooring (λ_min = {0:e})")]
    NotPsd(f64),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    Sflr,
    Fflr,
    Fggm,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Sflr => "sflr",
            Model::Fflr => "fflr",
            Model::Fggm => "fggm",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sflr" => Ok(Model::Sflr),
            "fflr" => Ok(Model::Fflr),
            "fggm" => Ok(Model::Fggm),
            other => Err(format!("unknown model '{other}' (expected sflr, fflr or fggm)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    /// Number of active regression variables; 0 gives the global null.
    pub support: usize,
    pub coef_range: (f64, f64),
    pub seed: u64,
}

impl SimConfig {
    pub fn new(model: Model, n: usize, p: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            p,
            rho: 0.5,
            support: 10.min(p),
            coef_range: (4.0, 6.0),
            seed,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SimError::BadRho(self.rho));
        }
        let (lo, hi) = self.coef_range;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(SimError::BadRange(lo, hi));
        }
        if self.n < 2 {
            return Err(SimError::TooFewSamples(self.n));
        }
        if self.model != Model::Fggm && self.support > self.p {
            return Err(SimError::SupportTooLarge {
                support: self.support,
                p: self.p,
            });
        }
        if self.model == Model::Fggm && self.p < 3 {
            return Err(SimError::GraphTooSmall(self.p));
        }
        Ok(())
    }
}

/// `Λ` with its sampling factor `F` (`F Fᵀ` is the floored `Λ`).
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    pub lambda: DMatrix<f64>,
    pub factor: DMatrix<f64>,
    /// Eigenvalues raised to the floor.
    pub floored: usize,
    /// `‖Λ_floored − Λ‖_F`.
    pub perturbation: f64,
    pub min_eigenvalue: f64,
}

impl CovarianceFactor {
    /// Eigen-factor of a symmetric matrix with eigenvalues below `floor` raised to `floor`.
    pub fn from_matrix(lambda: DMatrix<f64>, floor: f64) -> Result<Self, SimError> {
        let (values, vectors) = linalg::sym_eigen_desc(&lambda);
        let min_eigenvalue = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut floored = 0;
        let mut pert = 0.0;
        let roots = values.map(|v| {
            if v < floor {
                floored += 1;
                pert += (floor - v) * (floor - v);
                floor.sqrt()
            } else {
                v.sqrt()
            }
        });
        if roots.iter().any(|r| !r.is_finite()) {
            return Err(SimError::NotPsd(min_eigenvalue));
        }
        let mut factor = vectors;
        for (c, mut col) in factor.column_iter_mut().enumerate() {
            col *= roots[c];
        }
        Ok(Self {
            lambda,
            factor,
            floored,
            perturbation: pert.sqrt(),
            min_eigenvalue,
        })
    }
}

/// The block matrix `Λ` (size `25p`) without any flooring.
pub fn covariance_matrix(p: usize, rho: f64) -> DMatrix<f64> {
    let m = FOURIER_SIZE;
    DMatrix::from_fn(m * p, m * p, |r, c| {
        let (j, l) = (r / m, r % m + 1);
        let (k, mm) = (c / m, c % m + 1);
        if j == k {
            return if l == mm { 1.0 / (l * l) as f64 } else { 0.0 };
        }
        let decay = rho.powi(j.abs_diff(k) as i32);
        if l == mm {
            decay / (l * l) as f64
        } else {
            0.5 * decay / (l * mm) as f64
        }
    })
}

type CovCache = Mutex<HashMap<(usize, u64), Arc<CovarianceFactor>>>;

/// Floored `Λ` and its factor; cached per `(p, ρ)`.
pub fn gen_covariance(p: usize, rho: f64) -> Result<Arc<CovarianceFactor>, SimError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SimError::BadRho(rho));
    }
    static CACHE: OnceLock<CovCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (p, rho.to_bits());
    if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let cov = Arc::new(CovarianceFactor::from_matrix(covariance_matrix(p, rho), COVARIANCE_FLOOR)?);
    if cov.floored > 0 {
        log::info!(
            "Λ(p = {p}, ρ = {rho}): {} eigenvalues floored (λ_min {:.3e}, perturbation ‖·‖_F = {:.3e})",
            cov.floored,
            cov.min_eigenvalue,
            cov.perturbation
        );
    }
    cache.lock().expect("cache lock").insert(key, cov.clone());
    Ok(cov)
}

/// The 25-term Fourier system on `[0, 1]`.
pub fn fourier_basis() -> Arc<BasisSystem> {
    static BASIS: OnceLock<Arc<BasisSystem>> = OnceLock::new();
    BASIS
        .get_or_init(|| {
            Arc::new(
                make_basis(BasisSpec::Fourier { size: FOURIER_SIZE }, Domain::unit(), 4 * FOURIER_SIZE)
                    .expect("valid Fourier system"),
            )
        })
        .clone()
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major fill keeps each sample's draws contiguous in the stream
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Draw `n` coefficient vectors `θ_i ~ N(0, Λ)` and split them by variable.
pub fn gen_curves(n: usize, cov: &CovarianceFactor, rng: &mut impl Rng) -> Vec<DMatrix<f64>> {
    let dim = cov.factor.nrows();
    let z = normal_matrix(rng, n, dim);
    let theta = z * cov.factor.transpose();
    (0..dim / FOURIER_SIZE)
        .map(|j| theta.columns(j * FOURIER_SIZE, FOURIER_SIZE).into_owned())
        .collect()
}

/// Values of Fourier-coordinate curves on a grid: `n × L`.
pub fn curves_on_grid(theta: &DMatrix<f64>, grid: &[f64]) -> Result<DMatrix<f64>, SimError> {
    let design = fourier_basis().design_matrix(grid)?;
    Ok(theta * design.transpose())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    None,
    Scalar(DVector<f64>),
    /// Fourier coordinates of the response curves (`n × 25`).
    Curve(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Truth {
    Indices(Vec<usize>),
    Edges(Vec<(usize, usize)>),
}

#[derive(Clone, Debug)]
pub struct SimData {
    pub config: SimConfig,
    /// Per-variable Fourier coordinates, `n × 25`.
    pub theta: Vec<DMatrix<f64>>,
    pub response: Response,
    pub truth: Truth,
    /// Signal scales drawn for this data set, in generation order.
    pub coef_scales: Vec<f64>,
    /// Directed edges `(parent, child)` of the graphical model.
    pub dag: Vec<(usize, usize)>,
}

fn scale_draw(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        return range.0;
    }
    Uniform::new_inclusive(range.0, range.1).expect("valid range").sample(rng)
}

/// `b_l = (−1)^l c l⁻²`, `l = 1..25`.
pub fn sflr_coefficients(c: f64) -> DVector<f64> {
    DVector::from_fn(FOURIER_SIZE, |i, _| {
        let l = (i + 1) as f64;
        let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * c / (l * l)
    })
}

/// `B_lm = (−1)^{l+m} c (l+m)⁻²`.
pub fn fflr_coefficients(c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(FOURIER_SIZE, FOURIER_SIZE, |i, j| {
        let s = (i + 1 + j + 1) as f64;
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * c / (s * s)
    })
}

/// Scalar-on-function regression data.
pub fn gen_sflr(config: &SimConfig, rng: &mut impl Rng) -> Result<SimData, SimError> {
    config.validate()?;
    let cov = gen_covariance(config.p, config.rho)?;
    let theta = gen_curves(config.n, &cov, rng);
    let mut y = DVector::from_fn(config.n, |_, _| StandardNormal.sample(rng));
    let mut scales = Vec::with_capacity(config.support);
    for x in theta.iter().take(config.support) {
        let c = scale_draw(rng, config.coef_range);
        scales.push(c);
        y += x * sflr_coefficients(c);
    }
    Ok(SimData {
        config: config.clone(),
        theta,
        response: Response::Scalar(y),
        truth: Truth::Indices((0..config.support).collect()),
        coef_scales: scales,
        dag: Vec::new(),
    })
}

/// Function-on-function regression data.
pub fn gen_fflr(config: &SimConfig, rng: &mut impl Rng) -> Result<SimData, SimError> {
    config.validate()?;
    let cov = gen_covariance(config.p, config.rho)?;
    let theta = gen_curves(config.n, &cov, rng);
    let mut eta = DMatrix::zeros(config.n, FOURIER_SIZE);
    let g = normal_matrix(rng, config.n, RESPONSE_ERROR_TERMS);
    eta.columns_mut(0, RESPONSE_ERROR_TERMS).copy_from(&g);
    let mut scales = Vec::with_capacity(config.support);
    for x in theta.iter().take(config.support) {
        let c = scale_draw(rng, config.coef_range);
        scales.push(c);
        eta += x * fflr_coefficients(c);
    }
    Ok(SimData {
        config: config.clone(),
        theta,
        response: Response::Curve(eta),
        truth: Truth::Indices((0..config.support).collect()),
        coef_scales: scales,
        dag: Vec::new(),
    })
}

/// Random DAG over `0..p`: one parent per child among earlier nodes, then
/// `⌊p/3⌋` further distinct forward edges.
pub fn random_dag(p: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>, SimError> {
    if p < 3 {
        return Err(SimError::GraphTooSmall(p));
    }
    let mut edges = BTreeSet::new();
    for child in 1..p {
        edges.insert((rng.random_range(0..child), child));
    }
    let extra = p / 3;
    let mut added = 0;
    while added < extra {
        let a = rng.random_range(0..p);
        let b = rng.random_range(0..p);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if edges.insert(e) {
            added += 1;
        }
    }
    Ok(edges.into_iter().collect())
}

/// Undirected moral graph: every directed edge plus every pair of co-parents.
pub fn moralize(dag: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut parents: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut out = BTreeSet::new();
    for &(a, b) in dag {
        out.insert((a.min(b), a.max(b)));
        parents.entry(b).or_default().push(a);
    }
    for ps in parents.values() {
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out.into_iter().collect()
}

/// Graphical-model data generated along a random DAG.
pub fn gen_fggm(config: &SimConfig, rng: &mut impl Rng) -> Result<SimData, SimError> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let dag = random_dag(p, rng)?;
    let mut parents = vec![Vec::new(); p];
    for &(a, b) in &dag {
        parents[b].push(a);
    }
    let truth = moralize(&dag);
    // coefficient scale divides by the neighbourhood size in the moral graph
    let mut degree = vec![0usize; p];
    for &(a, b) in &truth {
        degree[a] += 1;
        degree[b] += 1;
    }
    let sd = DVector::from_fn(FOURIER_SIZE, |l, _| 1.0 / (l + 1) as f64);
    let mut theta: Vec<DMatrix<f64>> = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(dag.len());
    for (pa, deg) in parents.iter().zip(&degree) {
        let mut x = normal_matrix(rng, n, FOURIER_SIZE);
        for (c, mut col) in x.column_iter_mut().enumerate() {
            col *= sd[c];
        }
        let s = (*deg).max(1) as f64;
        for &k in pa {
            let c = scale_draw(rng, config.coef_range);
            scales.push(c);
            // row form of θ_j += B θ_k
            x += &theta[k] * fflr_coefficients(c / s).transpose();
        }
        theta.push(x);
    }
    Ok(SimData {
        config: config.clone(),
        theta,
        response: Response::None,
        truth: Truth::Edges(truth),
        coef_scales: scales,
        dag,
    })
}

/// Dispatch on the configured model.
pub fn generate(config: &SimConfig, rng: &mut impl Rng) -> Result<SimData, SimError> {
    match config.model {
        Model::Sflr => gen_sflr(config, rng),
        Model::Fflr => gen_fflr(config, rng),
        Model::Fggm => gen_fggm(config, rng),
    }
}

/// Noisy observations at `count` uniform time points per curve.
pub fn corrupt_partial(
    theta: &[DMatrix<f64>],
    count: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<RawCurve>>, SimError> {
    let basis = fourier_basis();
    let noise = Normal::new(0.0, noise_sd.max(0.0)).map_err(|e| BasisError::Malformed(e.to_string()))?;
    let mut out = Vec::with_capacity(theta.len());
    for (j, x) in theta.iter().enumerate() {
        let mut per_var = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let coords = x.row(i).transpose();
            let samples = (0..count)
                .map(|_| {
                    let t: f64 = rng.random::<f64>();
                    let v = basis.values_at(t).dot(&coords) + noise.sample(rng);
                    (t, v)
                })
                .collect();
            per_var.push(RawCurve {
                sample_id: i,
                variable_id: j,
                samples,
            });
        }
        out.push(per_var);
    }
    Ok(out)
}

/// Independent seeds for one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicateSeeds {
    pub replicate: u64,
    pub data: u64,
    pub knockoff: u64,
    pub corruption: u64,
}

/// Counter-based seeds: replicate `r` reads stream `r` of a ChaCha generator
/// keyed by the run seed, so adding replicates never changes earlier ones.
pub fn replicate_seeds(seed: u64, replicate: u64) -> ReplicateSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    ReplicateSeeds {
        replicate,
        data: rng.next_u64(),
        knockoff: rng.next_u64(),
        corruption: rng.next_u64(),
    }
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Serialize)]
struct TruthIndex {
    variable_id: usize,
}

#[derive(Serialize)]
struct TruthEdge {
    edge: String,
}

pub fn write_truth_csv(path: &Path, truth: &Truth) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path)?;
    match truth {
        Truth::Indices(v) => {
            if v.is_empty() {
                w.write_record(["variable_id"])?;
            }
            for &variable_id in v {
                w.serialize(TruthIndex { variable_id })?;
            }
        }
        Truth::Edges(v) => {
            if v.is_empty() {
                w.write_record(["edge"])?;
            }
            for &(a, b) in v {
                w.serialize(TruthEdge {
                    edge: format!("{a}-{b}"),
                })?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct ScalarRow {
    sample_id: usize,
    value: f64,
}

/// Writes the covariate curves on `grid` in long format, and the response
/// (`sample_id, value` or long format) when present.
pub fn write_sim_csv(
    data: &SimData,
    grid: &[f64],
    curve_path: &Path,
    response_path: Option<&Path>,
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(curve_path)?;
    for (j, x) in data.theta.iter().enumerate() {
        let values = curves_on_grid(x, grid)?;
        for i in 0..values.nrows() {
            for (l, &t) in grid.iter().enumerate() {
                w.serialize(crate::basis::CurveRecord {
                    sample_id: i,
                    variable_id: j,
                    t,
                    value: values[(i, l)],
                })?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    if let Some(rp) = response_path {
        let mut r = csv::Writer::from_path(rp)?;
        match &data.response {
            Response::Scalar(y) => {
                for (sample_id, &value) in y.iter().enumerate() {
                    r.serialize(ScalarRow { sample_id, value })?;
                }
            }
            Response::Curve(eta) => {
                let values = curves_on_grid(eta, grid)?;
                for i in 0..values.nrows() {
                    for (l, &t) in grid.iter().enumerate() {
                        r.serialize(crate::basis::CurveRecord {
                            sample_id: i,
                            variable_id: 0,
                            t,
                            value: values[(i, l)],
                        })?;
                    }
                }
            }
            Response::None => {}
        }
        r.flush().map_err(csv::Error::from)?;
    }
    Ok(())
}
