//! End-to-end experiments: simulate, smooth, FPCA, knockoffs, group lasso,
//! filter, and aggregate over replicates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{make_basis, BasisError, BasisSpec, BasisSystem, CurvePanel, Domain, GridProjector};
use crate::filter::{self, GraphFilter, Rule, SelectionResult};
use crate::fpca::{fit_fpca, fit_variable, FpcaModel};
use crate::grouplasso::{tune_lambda, GroupDesign, GroupLassoError};
use crate::knockoff::{estimate_theta_c, sample_knockoffs, solve_r, KnockoffError, Variant};
use crate::simgen::{self, Model, Response, SimConfig, SimData, SimError, Truth};
use crate::smoothing::{default_bandwidth, local_linear_smooth, DEFAULT_GRID};

#[derive(Error, Debug)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no replicate succeeded")]
    NoSuccess,

    #[error("io failure: {0}")]
    Io(String),
}

impl From<SimError> for ExperimentError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Csv(c) => ExperimentError::Io(c.to_string()),
            SimError::NotPsd(_) | SimError::Basis(_) => ExperimentError::Numerical(e.to_string()),
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<BasisError> for ExperimentError {
    fn from(e: BasisError) -> Self {
        match e {
            BasisError::Csv(_) | BasisError::Io(_) => ExperimentError::Io(e.to_string()),
            other => ExperimentError::Numerical(other.to_string()),
        }
    }
}

impl From<KnockoffError> for ExperimentError {
    fn from(e: KnockoffError) -> Self {
        ExperimentError::Numerical(e.to_string())
    }
}

impl From<GroupLassoError> for ExperimentError {
    fn from(e: GroupLassoError) -> Self {
        ExperimentError::Numerical(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Kf1,
    Kf2,
    Kf3,
    Gl,
}

impl Method {
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Kf1 => Some(Variant::E1),
            Method::Kf2 => Some(Variant::E2),
            Method::Kf3 => Some(Variant::E3),
            Method::Gl => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Kf1 => "KF1",
            Method::Kf2 => "KF2",
            Method::Kf3 => "KF3",
            Method::Gl => "GL",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "KF1" => Ok(Method::Kf1),
            "KF2" => Ok(Method::Kf2),
            "KF3" => Ok(Method::Kf3),
            "GL" => Ok(Method::Gl),
            other => Err(format!("unknown method '{other}' (expected KF1, KF2, KF3 or GL)")),
        }
    }
}

pub fn parse_rule(s: &str) -> Result<Rule, String> {
    match s.to_ascii_lowercase().as_str() {
        "and" => Ok(Rule::And),
        "or" => Ok(Rule::Or),
        other => Err(format!("unknown rule '{other}' (expected and or or)")),
    }
}

/// Settings of the partially observed setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialSpec {
    /// Observations per curve.
    pub count: usize,
    pub noise_sd: f64,
    /// Bandwidth constant `c` in `c·L^{-1/5}`.
    pub bandwidth_c: f64,
}

impl Default for PartialSpec {
    fn default() -> Self {
        Self {
            count: 51,
            noise_sd: 0.5,
            bandwidth_c: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub sim: SimConfig,
    pub method: Method,
    pub q: f64,
    pub delta: u8,
    pub rule: Rule,
    pub replicates: usize,
    pub fraction: f64,
    pub hbar: f64,
    pub gamma: Option<f64>,
    pub partial: Option<PartialSpec>,
    pub lambda_grid: usize,
    pub interior_knots: usize,
    pub eval_grid: usize,
    pub threads: usize,
    pub a: f64,
    pub c_a: f64,
}

/// HBIC multiplier used when none is configured. Multi-column responses
/// pay a larger degrees-of-freedom charge, so they get a smaller multiplier.
pub fn default_hbar(model: Model) -> f64 {
    match model {
        Model::Sflr => 1.0,
        Model::Fflr => 0.5,
        Model::Fggm => 0.1,
    }
}

impl ExperimentSpec {
    pub fn new(model: Model, method: Method, n: usize, p: usize, seed: u64) -> Self {
        Self {
            sim: SimConfig::new(model, n, p, seed),
            method,
            q: 0.2,
            delta: 0,
            rule: Rule::Or,
            replicates: 1,
            fraction: 0.9,
            hbar: default_hbar(model),
            gamma: None,
            partial: None,
            lambda_grid: 20,
            interior_knots: 3,
            eval_grid: DEFAULT_GRID,
            threads: 0,
            a: filter::DEFAULT_A,
            c_a: filter::DEFAULT_C_A,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q = {} outside [0, 1]", self.q));
        }
        if self.delta > 1 {
            return bad(format!("delta must be 0 or 1, got {}", self.delta));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad(format!("fraction = {} outside (0, 1]", self.fraction));
        }
        if !(0.1..=3.0).contains(&self.hbar) {
            return bad(format!("hbar = {} outside [0.1, 3]", self.hbar));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return bad(format!("gamma = {g} outside [0, 1]"));
            }
        }
        if self.lambda_grid < 2 {
            return bad("lambda grid needs at least 2 points".into());
        }
        if let Some(ps) = &self.partial {
            if ps.count < 2 || ps.noise_sd < 0.0 || ps.bandwidth_c <= 0.0 {
                return bad("partial observation needs L ≥ 2, noise sd ≥ 0 and a positive bandwidth".into());
            }
        }
        if self.sim.n < 2 || self.sim.p == 0 {
            return bad("need n ≥ 2 and p ≥ 1".into());
        }
        if self.sim.model == Model::Fggm && self.sim.p < 3 {
            return bad("graphical model needs p ≥ 3".into());
        }
        if self.sim.model != Model::Fggm && self.sim.support > self.sim.p {
            return bad(format!("support {} exceeds p = {}", self.sim.support, self.sim.p));
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ExperimentError> {
            v.parse()
                .map_err(|_| ExperimentError::Config(format!("invalid value '{v}' for '{key}'")))
        }
        let v = value.trim();
        match key.trim() {
            "model" => self.sim.model = v.parse().map_err(ExperimentError::Config)?,
            "method" => self.method = v.parse().map_err(ExperimentError::Config)?,
            "n" => self.sim.n = num(key, v)?,
            "p" => {
                self.sim.p = num(key, v)?;
                self.sim.support = self.sim.support.min(self.sim.p);
            }
            "rho" => self.sim.rho = num(key, v)?,
            "support" => self.sim.support = num(key, v)?,
            "coef_lo" => self.sim.coef_range.0 = num(key, v)?,
            "coef_hi" => self.sim.coef_range.1 = num(key, v)?,
            "seed" => self.sim.seed = num(key, v)?,
            "q" => self.q = num(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "rule" => self.rule = parse_rule(v).map_err(ExperimentError::Config)?,
            "replicates" => self.replicates = num(key, v)?,
            "fraction" => self.fraction = num(key, v)?,
            "hbar" => self.hbar = num(key, v)?,
            "gamma" => self.gamma = Some(num(key, v)?),
            "partial" => {
                let on: bool = num(key, v)?;
                self.partial = if on { Some(self.partial.unwrap_or_default()) } else { None };
            }
            "L" => self.partial.get_or_insert_with(PartialSpec::default).count = num(key, v)?,
            "noise_sd" => self.partial.get_or_insert_with(PartialSpec::default).noise_sd = num(key, v)?,
            "bandwidth_c" => self.partial.get_or_insert_with(PartialSpec::default).bandwidth_c = num(key, v)?,
            "lambda_grid" => self.lambda_grid = num(key, v)?,
            "interior_knots" => self.interior_knots = num(key, v)?,
            "eval_grid" => self.eval_grid = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "a" => self.a = num(key, v)?,
            "c_a" => self.c_a = num(key, v)?,
            other => return Err(ExperimentError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

/// Parse a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, ExperimentError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// One replicate's outcome.
#[derive(Clone, Debug)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub outcome: Result<SelectionResult, String>,
    pub seconds: f64,
}

impl ReplicateResult {
    pub fn selection(&self) -> Option<&SelectionResult> {
        self.outcome.as_ref().ok()
    }
}

/// Working B-spline basis used for every variable.
pub fn working_basis(interior_knots: usize) -> Result<Arc<BasisSystem>, ExperimentError> {
    let size = interior_knots + 4;
    Ok(Arc::new(make_basis(
        BasisSpec::BSpline {
            interior_knots,
            degree: 3,
        },
        Domain::unit(),
        (interior_knots + 1) * 20 + 2 * size,
    )?))
}

/// Covariate panel (and response panel for curve responses) in the working basis.
pub fn observed_panels(
    spec: &ExperimentSpec,
    data: &SimData,
    basis: Arc<BasisSystem>,
    corruption_seed: u64,
) -> Result<(CurvePanel, Option<CurvePanel>), ExperimentError> {
    let grid = Domain::unit().grid(spec.eval_grid);
    let projector = GridProjector::new(&basis, &grid)?;
    let coords: Vec<DMatrix<f64>> = match &spec.partial {
        None => data
            .theta
            .iter()
            .map(|x| Ok(projector.project_rows(&simgen::curves_on_grid(x, &grid)?)))
            .collect::<Result<_, ExperimentError>>()?,
        Some(ps) => {
            let mut rng = simgen::rng_from(corruption_seed);
            let raw = simgen::corrupt_partial(&data.theta, ps.count, ps.noise_sd, &mut rng)?;
            let h = default_bandwidth(ps.count, ps.bandwidth_c);
            raw.par_iter()
                .map(|per_var| {
                    let mut values = DMatrix::zeros(per_var.len(), grid.len());
                    for (i, curve) in per_var.iter().enumerate() {
                        let s = local_linear_smooth(curve, Some(h), &grid, Domain::unit())?;
                        values.set_row(i, &DVector::from_vec(s.values).transpose());
                    }
                    Ok(projector.project_rows(&values))
                })
                .collect::<Result<_, BasisError>>()?
        }
    };
    let panel = CurvePanel::new(basis.clone(), coords)?;
    let response = match &data.response {
        Response::Curve(eta) => {
            let values = simgen::curves_on_grid(eta, &grid)?;
            Some(CurvePanel::new(basis, vec![projector.project_rows(&values)])?)
        }
        _ => None,
    };
    Ok((panel, response))
}

/// Original (and knockoff) truncated score blocks per variable.
struct ScoreBlocks {
    original: Vec<DMatrix<f64>>,
    knockoff: Option<Vec<DMatrix<f64>>>,
}

fn score_blocks(
    spec: &ExperimentSpec,
    fpca: &FpcaModel,
    basis: Arc<BasisSystem>,
    knockoff_seed: u64,
) -> Result<ScoreBlocks, ExperimentError> {
    let truncs = fpca.truncations();
    let original: Vec<DMatrix<f64>> = fpca
        .variables
        .iter()
        .zip(&truncs)
        .map(|(v, &d)| v.truncated_scores(d))
        .collect();
    let knockoff = match spec.method.variant() {
        None => None,
        Some(variant) => {
            let theta = estimate_theta_c(fpca, spec.gamma)?;
            let solved = solve_r(&theta, variant)?;
            let panel = sample_knockoffs(fpca, &solved, basis, knockoff_seed)?;
            Some(
                panel
                    .scores
                    .iter()
                    .zip(&truncs)
                    .map(|(s, &d)| s.columns(0, d).into_owned())
                    .collect(),
            )
        }
    };
    Ok(ScoreBlocks { original, knockoff })
}

fn regression_selection(
    spec: &ExperimentSpec,
    blocks: &ScoreBlocks,
    y: &DMatrix<f64>,
    truth: &[usize],
) -> Result<SelectionResult, ExperimentError> {
    let mut all = blocks.original.clone();
    if let Some(k) = &blocks.knockoff {
        all.extend(k.iter().cloned());
    }
    let design = GroupDesign::from_blocks(&all, y)?;
    let (_, fit) = tune_lambda(&design, spec.lambda_grid, spec.hbar)?;
    let norms = fit.norms();
    Ok(match &blocks.knockoff {
        Some(_) => filter::select_regression(filter::regression_stats(&norms), spec.q, spec.delta, truth),
        None => active_selection(norms, spec, truth),
    })
}

/// Group-lasso-only selection: every group with a nonzero block.
fn active_selection(norms: Vec<f64>, spec: &ExperimentSpec, truth: &[usize]) -> SelectionResult {
    let selected: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] > 0.0).collect();
    let (fdp, power) = filter::evaluate_metrics(&selected, truth);
    SelectionResult {
        stats: filter::Statistics::Vector(norms),
        threshold: filter::Threshold::Scalar(f64::MIN_POSITIVE),
        delta: spec.delta,
        q: spec.q,
        rule: None,
        selected: filter::Selection::Indices(selected),
        fdp,
        power,
        feasible: None,
    }
}

fn graph_selection(
    spec: &ExperimentSpec,
    blocks: &ScoreBlocks,
    truth: &[(usize, usize)],
) -> Result<SelectionResult, ExperimentError> {
    let p = blocks.original.len();
    let rows: Vec<Result<Vec<f64>, ExperimentError>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let mut all: Vec<DMatrix<f64>> = others.iter().map(|&k| blocks.original[k].clone()).collect();
            if let Some(kn) = &blocks.knockoff {
                all.extend(others.iter().map(|&k| kn[k].clone()));
            }
            let design = GroupDesign::from_blocks(&all, &blocks.original[j])?;
            let (_, fit) = tune_lambda(&design, spec.lambda_grid, spec.hbar)?;
            let norms = fit.norms();
            let mut row = vec![0.0; p];
            for (slot, &k) in others.iter().enumerate() {
                row[k] = match &blocks.knockoff {
                    Some(_) => norms[slot] - norms[slot + others.len()],
                    None => norms[slot],
                };
            }
            Ok(row)
        })
        .collect();
    let mut w = DMatrix::zeros(p, p);
    for (j, row) in rows.into_iter().enumerate() {
        for (k, v) in row?.into_iter().enumerate() {
            w[(j, k)] = v;
        }
    }
    if blocks.knockoff.is_some() {
        let gf = GraphFilter {
            q: spec.q,
            rule: spec.rule,
            delta: spec.delta,
            a: spec.a,
            c_a: spec.c_a,
        };
        return Ok(filter::select_graph(w, &gf, truth));
    }
    let thresholds = vec![f64::MIN_POSITIVE; p];
    let edges = filter::fggm_edges(&thresholds, &w, spec.rule);
    let (fdp, power) = filter::evaluate_metrics(&edges, truth);
    Ok(SelectionResult {
        stats: filter::Statistics::Matrix(w),
        threshold: filter::Threshold::PerNode(thresholds),
        delta: spec.delta,
        q: spec.q,
        rule: Some(spec.rule),
        selected: filter::Selection::Edges(edges),
        fdp,
        power,
        feasible: None,
    })
}

/// One replicate end to end.
pub fn run_replicate(spec: &ExperimentSpec, replicate: usize) -> Result<SelectionResult, ExperimentError> {
    let seeds = simgen::replicate_seeds(spec.sim.seed, replicate as u64);
    let mut rng = simgen::rng_from(seeds.data);
    let data = simgen::generate(&spec.sim, &mut rng)?;
    let basis = working_basis(spec.interior_knots)?;
    let (panel, response) = observed_panels(spec, &data, basis.clone(), seeds.corruption)?;
    let fpca = fit_fpca(&panel, spec.fraction)?;
    let blocks = score_blocks(spec, &fpca, basis.clone(), seeds.knockoff)?;
    match (&data.truth, &data.response) {
        (Truth::Indices(truth), Response::Scalar(y)) => {
            let y = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
            regression_selection(spec, &blocks, &y, truth)
        }
        (Truth::Indices(truth), Response::Curve(_)) => {
            let rp = response.expect("curve response panel");
            let yf = fit_variable(&rp.coords[0], &basis, spec.fraction);
            let eta = yf.truncated_scores(yf.truncation);
            regression_selection(spec, &blocks, &eta, truth)
        }
        (Truth::Edges(truth), _) => graph_selection(spec, &blocks, truth),
        _ => Err(ExperimentError::Config("model and response disagree".into())),
    }
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        b = b.num_threads(threads);
    }
    b.build().map_err(|e| ExperimentError::Config(e.to_string()))
}

/// Every replicate of a spec; failures are recorded per replicate.
pub fn run_pipeline(spec: &ExperimentSpec) -> Result<Vec<ReplicateResult>, ExperimentError> {
    spec.validate()?;
    let pool = build_pool(spec.threads)?;
    let results = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let start = Instant::now();
                let outcome = run_replicate(spec, r).map_err(|e| {
                    log::warn!("replicate {r} failed: {e}");
                    e.to_string()
                });
                ReplicateResult {
                    replicate: r,
                    seed: simgen::replicate_seeds(spec.sim.seed, r as u64).data,
                    outcome,
                    seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect()
    });
    Ok(results)
}

/// One summary line per experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub method: String,
    pub p: usize,
    pub n: usize,
    pub q: f64,
    pub delta: u8,
    pub rule: String,
    pub fdr: f64,
    pub power: f64,
    pub n_replicates: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub fdr_sd: f64,
    #[serde(skip)]
    pub power_sd: f64,
}

fn rule_label(spec: &ExperimentSpec) -> String {
    if spec.sim.model == Model::Fggm {
        spec.rule.to_string()
    } else {
        "none".into()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Means (and sds) of FDP and power over the successful replicates.
pub fn aggregate(spec: &ExperimentSpec, results: &[ReplicateResult]) -> Result<Summary, ExperimentError> {
    let ok: Vec<&SelectionResult> = results.iter().filter_map(|r| r.selection()).collect();
    if ok.is_empty() {
        return Err(ExperimentError::NoSuccess);
    }
    let fdps: Vec<f64> = ok.iter().map(|s| s.fdp).collect();
    let pows: Vec<f64> = ok.iter().map(|s| s.power).collect();
    let (fdr, fdr_sd) = mean_sd(&fdps);
    let (power, power_sd) = mean_sd(&pows);
    Ok(Summary {
        model: spec.sim.model.to_string(),
        method: spec.method.to_string(),
        p: spec.sim.p,
        n: spec.sim.n,
        q: spec.q,
        delta: spec.delta,
        rule: rule_label(spec),
        fdr,
        power,
        n_replicates: ok.len(),
        seconds: results.iter().map(|r| r.seconds).sum(),
        fdr_sd,
        power_sd,
    })
}

/// One row of `details.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub model: String,
    pub method: String,
    pub p: usize,
    pub n: usize,
    pub q: f64,
    pub delta: u8,
    pub rule: String,
    pub replicate: usize,
    pub seed: u64,
    pub status: String,
    pub fdp: f64,
    pub power: f64,
    pub n_selected: usize,
}

pub fn detail_rows(spec: &ExperimentSpec, results: &[ReplicateResult]) -> Vec<DetailRow> {
    let mut rows: Vec<DetailRow> = results
        .iter()
        .map(|r| {
            let (status, fdp, power, n_selected) = match &r.outcome {
                Ok(s) => ("ok".to_string(), s.fdp, s.power, s.selected.len()),
                Err(e) => (format!("error: {e}"), f64::NAN, f64::NAN, 0),
            };
            DetailRow {
                model: spec.sim.model.to_string(),
                method: spec.method.to_string(),
                p: spec.sim.p,
                n: spec.sim.n,
                q: spec.q,
                delta: spec.delta,
                rule: rule_label(spec),
                replicate: r.replicate,
                seed: r.seed,
                status,
                fdp,
                power,
                n_selected,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.replicate);
    rows
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "model",
    "method",
    "p",
    "n",
    "q",
    "delta",
    "rule",
    "fdr",
    "power",
    "n_replicates",
    "seconds",
];

/// Writes `summary.csv` and `details.csv` into `dir`.
pub fn emit_report(summaries: &[Summary], details: &[DetailRow], dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| ExperimentError::Io(e.to_string()))?;
    let mut d = csv::Writer::from_path(dir.join("details.csv"))?;
    if details.is_empty() {
        d.write_record([
            "model", "method", "p", "n", "q", "delta", "rule", "replicate", "seed", "status", "fdp", "power",
            "n_selected",
        ])?;
    }
    for row in details {
        d.serialize(row)?;
    }
    d.flush().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(())
}

/// Read back a `summary.csv`.
pub fn read_summaries(path: &Path) -> Result<Vec<Summary>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Read back a `details.csv`.
pub fn read_details(path: &Path) -> Result<Vec<DetailRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Desk-scale grid: every `(n, p)` cell for the requested methods.
pub fn bench_specs(base: &ExperimentSpec, methods: &[Method], ns: &[usize], ps: &[usize]) -> Vec<ExperimentSpec> {
    let mut out = Vec::new();
    for &p in ps {
        for &n in ns {
            for &m in methods {
                let mut s = base.clone();
                s.sim.n = n;
                s.sim.p = p;
                s.sim.support = s.sim.support.min(p);
                s.method = m;
                out.push(s);
            }
        }
    }
    out
}
