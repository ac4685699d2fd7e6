//! Acceptance criteria, one pass/fail line each.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when the criterion passes. The process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fknockoff::basis::{CurvePanel, Domain, GridProjector};
use fknockoff::experiment::{run_pipeline, working_basis, ExperimentSpec, Method, PartialSpec, ReplicateResult};
use fknockoff::filter::{
    fggm_edges, fggm_global_thresholds, knockoff_threshold, GraphFilter, Rule, SelectionResult, Statistics,
};
use fknockoff::fpca::fit_fpca;
use fknockoff::grouplasso::{fit_group_lasso, lambda_max, GroupDesign};
use fknockoff::knockoff::{
    estimate_theta_c, normalized_scores, sample_knockoffs, slack_min_eig, solve_r, theta_from_matrix, Variant,
};
use fknockoff::simgen::{self, Model};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DESK_N: usize = 100;
const DESK_P: usize = 50;
const SEED: u64 = 20240611;

// criterion 1 / 2 / 3 / 11 bounds
const SFLR_FDR_MAX: f64 = 0.30;
const SFLR_POWER_MIN: f64 = 0.80;
const FFLR_FDR_MAX: f64 = 0.30;
const FFLR_POWER_MIN: f64 = 0.70;
const FGGM_FDR_MAX: f64 = 0.32;
const FGGM_POWER_MIN: f64 = 0.55;
const PARTIAL_FDR_MAX: f64 = 0.30;
const PARTIAL_POWER_GAP: f64 = 0.10;
// criterion 4
const BASELINE_WIN_SHARE: f64 = 0.80;
// criterion 5
const NULL_FDR_MAX: f64 = 0.25;
// criterion 6
const SIGN_SHARE_RANGE: (f64, f64) = (0.4, 0.6);
// criterion 7
const E1_TOL: f64 = 1e-8;
const SLACK_TOL: f64 = -1e-8;
const GRID_GAP_TOL: f64 = 1e-3;
// criterion 8
const EXCHANGE_TOL: f64 = 0.1;
// criterion 9
const KKT_TOL: f64 = 1e-6;
const ORACLE_OBJ_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Replicate outcomes are shared between criteria that reuse the same cells.
#[derive(Default)]
struct Cache {
    runs: BTreeMap<String, Vec<ReplicateResult>>,
}

impl Cache {
    fn run(&mut self, label: &str, spec: &ExperimentSpec) -> &[ReplicateResult] {
        self.runs
            .entry(label.to_string())
            .or_insert_with(|| run_pipeline(spec).expect("pipeline"))
    }
}

fn ok(results: &[ReplicateResult]) -> Vec<&SelectionResult> {
    results.iter().filter_map(|r| r.selection()).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c.max(1) as f64
}

fn rates(results: &[ReplicateResult]) -> (f64, f64, usize) {
    let sel = ok(results);
    (
        mean(sel.iter().map(|s| s.fdp)),
        mean(sel.iter().map(|s| s.power)),
        sel.len(),
    )
}

fn desk_spec(model: Model, method: Method, n: usize, p: usize, replicates: usize) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(model, method, n, p, SEED);
    s.replicates = replicates;
    s
}

fn c1_sflr(cache: &mut Cache) -> Outcome {
    let spec = desk_spec(Model::Sflr, Method::Kf1, DESK_N, DESK_P, 50);
    let (fdr, power, ok) = rates(cache.run("sflr-kf1-100-50", &spec));
    outcome(
        ok == 50 && fdr <= SFLR_FDR_MAX && power >= SFLR_POWER_MIN,
        format!("SFLR KF1 p=50 n=100, {ok}/50 replicates: FDR {fdr:.3} (≤ {SFLR_FDR_MAX}), power {power:.3} (≥ {SFLR_POWER_MIN})"),
    )
}

fn c2_fflr(cache: &mut Cache) -> Outcome {
    let spec = desk_spec(Model::Fflr, Method::Kf1, DESK_N, DESK_P, 50);
    let (fdr, power, ok) = rates(cache.run("fflr-kf1-100-50", &spec));
    outcome(
        ok == 50 && fdr <= FFLR_FDR_MAX && power >= FFLR_POWER_MIN,
        format!("FFLR KF1 p=50 n=100, {ok}/50 replicates: FDR {fdr:.3} (≤ {FFLR_FDR_MAX}), power {power:.3} (≥ {FFLR_POWER_MIN})"),
    )
}

fn c3_fggm(cache: &mut Cache) -> Outcome {
    let mut spec = desk_spec(Model::Fggm, Method::Kf1, DESK_N, DESK_P, 25);
    spec.rule = Rule::Or;
    let (fdr, power, ok) = rates(cache.run("fggm-kf1-100-50", &spec));
    outcome(
        ok == 25 && fdr <= FGGM_FDR_MAX && power >= FGGM_POWER_MIN,
        format!("FGGM KF1 OR p=50 n=100, {ok}/25 replicates: FDR {fdr:.3} (≤ {FGGM_FDR_MAX}), power {power:.3} (≥ {FGGM_POWER_MIN})"),
    )
}

fn c4_baseline(cache: &mut Cache) -> Outcome {
    let cells = [(100, 50), (200, 50), (100, 100), (200, 100)];
    let mut wins = 0;
    let mut notes = Vec::new();
    for (n, p) in cells {
        let kf = desk_spec(Model::Sflr, Method::Kf1, n, p, 50);
        let gl = desk_spec(Model::Sflr, Method::Gl, n, p, 50);
        let (kf_fdr, _, _) = rates(cache.run(&format!("sflr-kf1-{n}-{p}"), &kf));
        let (gl_fdr, _, _) = rates(cache.run(&format!("sflr-gl-{n}-{p}"), &gl));
        if gl_fdr > kf_fdr {
            wins += 1;
        }
        notes.push(format!("n={n} p={p}: GL {gl_fdr:.3} vs KF1 {kf_fdr:.3}"));
    }
    let share = wins as f64 / cells.len() as f64;
    outcome(
        share >= BASELINE_WIN_SHARE,
        format!("GL FDR above KF1 in {wins}/{} cells (share ≥ {BASELINE_WIN_SHARE}); {}", cells.len(), notes.join("; ")),
    )
}

fn c5_null(cache: &mut Cache) -> Outcome {
    let mut spec = desk_spec(Model::Sflr, Method::Kf1, DESK_N, DESK_P, 100);
    spec.sim.support = 0;
    spec.delta = 1;
    let (fdr, _, ok) = rates(cache.run("sflr-null", &spec));
    outcome(
        ok == 100 && fdr <= NULL_FDR_MAX,
        format!("global null, knockoff+, {ok}/100 replicates: FDR {fdr:.3} (≤ {NULL_FDR_MAX})"),
    )
}

fn c6_sign(cache: &mut Cache) -> Outcome {
    let spec = desk_spec(Model::Sflr, Method::Kf1, DESK_N, DESK_P, 50);
    let support = spec.sim.support;
    let (mut pos, mut nonzero) = (0usize, 0usize);
    for s in ok(cache.run("sflr-kf1-100-50", &spec)) {
        if let Statistics::Vector(w) = &s.stats {
            for &v in &w[support..] {
                if v != 0.0 {
                    nonzero += 1;
                    if v > 0.0 {
                        pos += 1;
                    }
                }
            }
        }
    }
    let share = pos as f64 / nonzero.max(1) as f64;
    outcome(
        nonzero > 0 && (SIGN_SHARE_RANGE.0..=SIGN_SHARE_RANGE.1).contains(&share),
        format!(
            "positive share of nonzero null statistics {share:.3} ({pos}/{nonzero}), range [{}, {}]",
            SIGN_SHARE_RANGE.0, SIGN_SHARE_RANGE.1
        ),
    )
}

/// Random correlation matrix from a Gaussian sample with `rows` rows.
fn random_correlation(dim: usize, rows: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mix: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let raw: DMatrix<f64> = DMatrix::from_fn(rows, dim, |_, _| StandardNormal.sample(rng));
    let z = raw * mix;
    let c = z.transpose() * &z;
    let d = DVector::from_fn(dim, |i, _| 1.0 / c[(i, i)].sqrt());
    DMatrix::from_fn(dim, dim, |i, j| c[(i, j)] * d[i] * d[j])
}

/// Positive semidefinite check by a pivot-free LDLᵀ with a small tolerance.
fn is_psd(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut a = m.clone();
    for k in 0..n {
        let pivot = a[(k, k)];
        if pivot < -1e-12 {
            return false;
        }
        if pivot <= 1e-12 {
            if (k + 1..n).any(|i| a[(i, k)].abs() > 1e-9) {
                return false;
            }
            continue;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            for j in k + 1..=i {
                a[(i, j)] -= f * a[(j, k)];
            }
        }
        for i in k + 1..n {
            for j in i + 1..n {
                a[(i, j)] = a[(j, i)];
            }
        }
    }
    true
}

/// Best `Σ (1 − r_g)` over a 21-point grid per free coordinate.
fn grid_best(theta_c: &DMatrix<f64>, groups: &[Vec<usize>]) -> f64 {
    let dim = theta_c.nrows();
    let steps = 21usize;
    let mut idx = vec![0usize; groups.len()];
    let mut best = f64::INFINITY;
    loop {
        let mut m = theta_c * 2.0;
        let mut obj = 0.0;
        for (g, &i) in groups.iter().zip(&idx) {
            let r = i as f64 / (steps - 1) as f64;
            obj += 1.0 - r;
            for &c in g {
                m[(c, c)] -= r;
            }
        }
        debug_assert_eq!(m.nrows(), dim);
        if obj < best && is_psd(&m) {
            best = obj;
        }
        let mut at = 0;
        loop {
            if at == idx.len() {
                return best;
            }
            idx[at] += 1;
            if idx[at] < steps {
                break;
            }
            idx[at] = 0;
            at += 1;
        }
    }
}

fn c7_sdp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let mut worst_e1 = 0.0f64;
    for _ in 0..20 {
        let (p, k) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let m = random_correlation(p * k, p * k + 3, &mut rng);
        let lmin = SymmetricEigen::new(m.clone()).eigenvalues.min();
        let theta = theta_from_matrix(m, p, k).expect("theta");
        let solved = solve_r(&theta, Variant::E1).expect("E1");
        let want = (2.0 * lmin).min(1.0);
        let r = solved.theta_r.expect("r");
        worst_e1 = worst_e1.max(r.iter().map(|v| (v - want).abs()).fold(0.0, f64::max));
    }
    let shapes = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 2), (1, 4), (2, 3), (3, 2), (6, 1), (1, 6)];
    let (mut min_slack, mut worst_gap, mut worst_nest) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(p, k) in &shapes {
        for _ in 0..2 {
            let m = random_correlation(p * k, p * k + 2, &mut rng);
            let theta = theta_from_matrix(m.clone(), p, k).expect("theta");
            let e1 = solve_r(&theta, Variant::E1).expect("E1");
            let e2 = solve_r(&theta, Variant::E2).expect("E2");
            let e3 = solve_r(&theta, Variant::E3).expect("E3");
            for s in [&e2, &e3] {
                min_slack = min_slack.min(slack_min_eig(&m, s.theta_r.as_ref().expect("r")));
            }
            let e2_groups: Vec<Vec<usize>> = (0..p).map(|j| (j * k..(j + 1) * k).collect()).collect();
            let e3_groups: Vec<Vec<usize>> = (0..p * k).map(|i| vec![i]).collect();
            let (o1, o2, o3) = (
                e1.objective().expect("obj"),
                e2.objective().expect("obj"),
                e3.objective().expect("obj"),
            );
            worst_gap = worst_gap.max(o2 - grid_best(&m, &e2_groups));
            worst_gap = worst_gap.max(o3 - grid_best(&m, &e3_groups));
            worst_nest = worst_nest.max(o2 - p as f64 * o1).max(o3 - k as f64 * o2);
        }
    }
    outcome(
        worst_e1 <= E1_TOL && min_slack >= SLACK_TOL && worst_gap <= GRID_GAP_TOL && worst_nest <= 1e-9,
        format!(
            "E1 max error {worst_e1:.2e} (≤ {E1_TOL:e}); E2/E3 min slack {min_slack:.2e} (≥ {SLACK_TOL:e}); \
             worst gap to grid search {worst_gap:.2e} (≤ {GRID_GAP_TOL:e}); worst nesting excess {worst_nest:.2e}"
        ),
    )
}

fn c8_exchangeability() -> Outcome {
    let (n, p) = (5000, 4);
    let seeds = simgen::replicate_seeds(SEED, 0);
    let mut rng = simgen::rng_from(seeds.data);
    let cov = simgen::gen_covariance(p, 0.5).expect("covariance");
    let theta_coords = simgen::gen_curves(n, &cov, &mut rng);
    let basis = working_basis(3).expect("basis");
    let grid = Domain::unit().grid(101);
    let projector = GridProjector::new(&basis, &grid).expect("projector");
    let coords = theta_coords
        .iter()
        .map(|x| projector.project_rows(&simgen::curves_on_grid(x, &grid).expect("grid")))
        .collect();
    let panel = CurvePanel::new(basis.clone(), coords).expect("panel");
    let fpca = fit_fpca(&panel, 0.9).expect("fpca");
    let theta = solve_r(&estimate_theta_c(&fpca, None).expect("theta"), Variant::E1).expect("E1");
    let knock = sample_knockoffs(&fpca, &theta, basis, seeds.knockoff).expect("knockoffs");
    let (orig, _) = normalized_scores(&fpca);
    let cross = orig.transpose() * &knock.normalized / n as f64;
    let mut target = theta.theta_c.clone();
    for (i, r) in theta.theta_r.as_ref().expect("r").iter().enumerate() {
        target[(i, i)] -= r;
    }
    let worst = (&cross - &target).abs().max();
    outcome(
        worst <= EXCHANGE_TOL,
        format!("n=5000 p=4: max |cross-covariance − (Θ_C − Θ_R)| = {worst:.4} (≤ {EXCHANGE_TOL}), γ = {:.4}", theta.gamma),
    )
}

/// Accelerated proximal gradient on the joint coefficient matrix.
fn proximal_gradient(design: &GroupDesign, lambda: f64) -> f64 {
    let n = design.n() as f64;
    let x = &design.x;
    let y = &design.y;
    let step = 1.0 / (SymmetricEigen::new(x.transpose() * x).eigenvalues.max() / n);
    let prox = |b: &DMatrix<f64>| {
        let mut out = b.clone();
        for g in &design.groups {
            let nb = b.rows(g.start, g.len()).norm();
            let shrink = if nb > 0.0 { (1.0 - step * lambda / nb).max(0.0) } else { 0.0 };
            out.rows_mut(g.start, g.len()).scale_mut(shrink);
        }
        out
    };
    let objective = |b: &DMatrix<f64>| {
        (y - x * b).norm_squared() / (2.0 * n)
            + lambda * design.groups.iter().map(|g| b.rows(g.start, g.len()).norm()).sum::<f64>()
    };
    let mut b = DMatrix::zeros(x.ncols(), y.ncols());
    let mut z = b.clone();
    let mut t = 1.0f64;
    for _ in 0..20000 {
        let grad = x.transpose() * (x * &z - y) / n;
        let next = prox(&(&z - grad * step));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &b) * ((t - 1.0) / t_next);
        b = next;
        t = t_next;
    }
    objective(&b)
}

fn c9_group_lasso() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 9);
    let (mut worst_kkt, mut worst_obj) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(15..40);
        let sizes: Vec<usize> = (0..rng.random_range(2..7)).map(|_| rng.random_range(1..5)).collect();
        let r = rng.random_range(1..4);
        let blocks: Vec<DMatrix<f64>> = sizes
            .iter()
            .map(|&d| DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let y = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
        let design = GroupDesign::from_blocks(&blocks, &y).expect("design");
        let lambda = lambda_max(&design) * rng.random_range(0.05..0.9);
        let fit = fit_group_lasso(&design, lambda, 1e-10, 200_000, None).expect("fit");
        worst_kkt = worst_kkt.max(fit.kkt_residual);
        let oracle = proximal_gradient(&design, lambda);
        worst_obj = worst_obj.max((fit.objective - oracle).abs());
    }
    outcome(
        worst_kkt <= KKT_TOL && worst_obj <= ORACLE_OBJ_TOL,
        format!("100 instances: max KKT residual {worst_kkt:.2e} (≤ {KKT_TOL:e}), max |objective − proximal oracle| {worst_obj:.2e} (≤ {ORACLE_OBJ_TOL:e})"),
    )
}

/// Smallest `t` among `|W|` such that the estimated FDP is at most `q`.
fn brute_threshold(w: &[f64], q: f64, delta: u8) -> f64 {
    let mut best = f64::INFINITY;
    for &t in w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect::<Vec<_>>().iter() {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        let fdp = (f64::from(delta) + neg as f64) / pos.max(1) as f64;
        if fdp <= q && t < best {
            best = t;
        }
    }
    best
}

/// Every threshold combination; the largest feasible edge count.
fn brute_graph(w: &DMatrix<f64>, filter: &GraphFilter) -> usize {
    let p = w.nrows();
    let cands: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut c: Vec<f64> = (0..p)
                .filter(|&k| k != j && w[(j, k)] != 0.0)
                .map(|k| w[(j, k)].abs())
                .collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c.push(f64::INFINITY);
            c
        })
        .collect();
    let mut idx = vec![0usize; p];
    let mut best = 0usize;
    loop {
        let t: Vec<f64> = (0..p).map(|j| cands[j][idx[j]]).collect();
        let edges = fggm_edges(&t, w, filter.rule).len();
        let bound = filter.bound(p) * edges.max(1) as f64;
        let feasible = (0..p).all(|j| {
            let neg = (0..p).filter(|&k| k != j && w[(j, k)] <= -t[j]).count();
            filter.a * f64::from(filter.delta) + neg as f64 <= bound + 1e-12
        });
        if feasible {
            best = best.max(edges);
        }
        let mut at = 0;
        loop {
            if at == p {
                return best;
            }
            idx[at] += 1;
            if idx[at] < cands[at].len() {
                break;
            }
            idx[at] = 0;
            at += 1;
        }
    }
}

fn c10_thresholds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 10);
    let mut vector_mismatch = 0;
    for _ in 0..1000 {
        let p = rng.random_range(1..=20);
        let w: Vec<f64> = (0..p)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                _ => (rng.random_range(-8i32..=12) as f64) / 4.0,
            })
            .collect();
        let q = rng.random_range(0.05..0.5);
        let delta = rng.random_range(0..=1u8);
        if knockoff_threshold(&w, q, delta) != brute_threshold(&w, q, delta) {
            vector_mismatch += 1;
        }
    }
    let mut graph_mismatch = 0;
    for _ in 0..100 {
        let p = rng.random_range(3..=4);
        let w = DMatrix::from_fn(p, p, |i, j| {
            if i == j || rng.random_range(0..5) == 0 {
                0.0
            } else {
                (rng.random_range(-6i32..=10) as f64) / 3.0
            }
        });
        let rule = if rng.random_bool(0.5) { Rule::And } else { Rule::Or };
        let filter = GraphFilter {
            q: rng.random_range(0.5..6.0),
            rule,
            delta: rng.random_range(0..=1u8),
            a: 1.0,
            c_a: 1.93,
        };
        let got = fggm_global_thresholds(&w, &filter);
        let want = brute_graph(&w, &filter);
        let feasible_zero = want == 0 && got.edges == 0;
        if !(got.edges == want && (got.feasible || feasible_zero)) {
            graph_mismatch += 1;
        }
    }
    outcome(
        vector_mismatch == 0 && graph_mismatch == 0,
        format!("knockoff threshold mismatches {vector_mismatch}/1000; graph search mismatches {graph_mismatch}/100"),
    )
}

fn c11_partial(cache: &mut Cache) -> Outcome {
    let full = desk_spec(Model::Sflr, Method::Kf1, DESK_N, DESK_P, 50);
    let mut partial = full.clone();
    partial.partial = Some(PartialSpec {
        count: 51,
        noise_sd: 0.5,
        ..PartialSpec::default()
    });
    let (_, full_power, _) = rates(cache.run("sflr-kf1-100-50", &full));
    let (fdr, power, ok) = rates(cache.run("sflr-partial", &partial));
    outcome(
        ok == 50 && fdr <= PARTIAL_FDR_MAX && (power - full_power).abs() <= PARTIAL_POWER_GAP,
        format!(
            "partial SFLR L=51 sd=0.5, {ok}/50 replicates: FDR {fdr:.3} (≤ {PARTIAL_FDR_MAX}), power {power:.3} vs fully observed {full_power:.3} (gap ≤ {PARTIAL_POWER_GAP})"
        ),
    )
}

fn main() {
    let mut cache = Cache::default();
    type Criterion<'a> = (usize, &'a str, Box<dyn FnMut(&mut Cache) -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "SFLR desk-scale FDR/power", Box::new(c1_sflr)),
        (2, "FFLR desk-scale FDR/power", Box::new(c2_fflr)),
        (3, "FGGM desk-scale OR rule", Box::new(c3_fggm)),
        (4, "baseline FDR inflation", Box::new(c4_baseline)),
        (5, "global null FDR control", Box::new(c5_null)),
        (6, "null sign symmetry", Box::new(c6_sign)),
        (7, "correlation SDP solutions", Box::new(|_: &mut Cache| c7_sdp())),
        (8, "second-moment exchangeability", Box::new(|_: &mut Cache| c8_exchangeability())),
        (9, "group lasso KKT and oracle", Box::new(|_: &mut Cache| c9_group_lasso())),
        (10, "threshold oracles", Box::new(|_: &mut Cache| c10_thresholds())),
        (11, "partially observed pipeline", Box::new(c11_partial)),
    ];
    let mut failed = Vec::new();
    for (id, name, mut run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run(&mut cache)));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        println!(
            "criterion {id:>2} {} {name}: {detail} [{secs:.1}s]",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
