//! Knockoff statistics, thresholds and selection sets.
//!
//! Regression models use one threshold over the vector `W`. The graphical
//! model uses one threshold per node, chosen jointly so that an estimate of
//! the false-edge fraction stays below the target under the AND or OR rule.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

/// Default `(a, c_a)` for the graph-level thresholds.
pub const DEFAULT_A: f64 = 1.0;
pub const DEFAULT_C_A: f64 = 1.93;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    And,
    Or,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::And => "and",
            Rule::Or => "or",
        })
    }
}

/// `W_j = Z_j − Z_{j+p}` from `2p` group importances.
pub fn regression_stats(norms: &[f64]) -> Vec<f64> {
    let p = norms.len() / 2;
    (0..p).map(|j| norms[j] - norms[j + p]).collect()
}

/// Distinct positive magnitudes of `w`, ascending.
fn candidates<'a>(w: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    let mut c: Vec<f64> = w.map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    c.dedup();
    c
}

/// Smallest `t ∈ {|W_j| > 0}` with `(δ + #{W_j ≤ −t}) / #{W_j ≥ t} ≤ q`, or `+∞`.
pub fn knockoff_threshold(w: &[f64], q: f64, delta: u8) -> f64 {
    let mut neg: Vec<f64> = w.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    let mut pos: Vec<f64> = w.iter().filter(|v| **v > 0.0).cloned().collect();
    neg.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    for t in candidates(w.iter()) {
        // counts of entries with magnitude ≥ t on each side
        let den = pos.len() - pos.partition_point(|v| *v < t);
        if den == 0 {
            continue;
        }
        let num = neg.len() - neg.partition_point(|v| *v < t);
        if (f64::from(delta) + num as f64) / den as f64 <= q {
            return t;
        }
    }
    f64::INFINITY
}

/// `{j : W_j ≥ T}` (0-based).
pub fn select(w: &[f64], threshold: f64) -> Vec<usize> {
    if threshold.is_infinite() {
        return Vec::new();
    }
    w.iter()
        .enumerate()
        .filter(|(_, v)| **v >= threshold)
        .map(|(j, _)| j)
        .collect()
}

/// Neighborhood `{k ≠ j : W_jk ≥ T_j}`.
fn neighborhood(w: &DMatrix<f64>, j: usize, t: f64) -> impl Iterator<Item = usize> + '_ {
    (0..w.ncols()).filter(move |&k| k != j && t.is_finite() && w[(j, k)] >= t)
}

fn negatives(w: &DMatrix<f64>, j: usize, t: f64) -> usize {
    if t.is_infinite() {
        return 0;
    }
    (0..w.ncols()).filter(|&k| k != j && w[(j, k)] <= -t).count()
}

/// Undirected edges `(min, max)` from per-node thresholds.
pub fn fggm_edges(thresholds: &[f64], w: &DMatrix<f64>, rule: Rule) -> Vec<(usize, usize)> {
    let p = w.nrows();
    let mut chosen = vec![vec![false; p]; p];
    for (j, &t) in thresholds.iter().enumerate() {
        for k in neighborhood(w, j, t) {
            chosen[j][k] = true;
        }
    }
    let mut edges = Vec::new();
    for j in 0..p {
        for k in j + 1..p {
            let keep = match rule {
                Rule::And => chosen[j][k] && chosen[k][j],
                Rule::Or => chosen[j][k] || chosen[k][j],
            };
            if keep {
                edges.push((j, k));
            }
        }
    }
    edges
}

/// Parameters of the graph-level threshold problem.
#[derive(Clone, Copy, Debug)]
pub struct GraphFilter {
    pub q: f64,
    pub rule: Rule,
    pub delta: u8,
    pub a: f64,
    pub c_a: f64,
}

impl GraphFilter {
    pub fn new(q: f64, rule: Rule, delta: u8) -> Self {
        Self {
            q,
            rule,
            delta,
            a: DEFAULT_A,
            c_a: DEFAULT_C_A,
        }
    }

    /// Right-hand side of the per-node constraint.
    pub fn bound(&self, p: usize) -> f64 {
        let base = self.q / (self.c_a * p as f64);
        match self.rule {
            Rule::And => 2.0 * base,
            Rule::Or => base,
        }
    }

    /// Per-node constraint excess `(aδ + |S⁻_j|)/(|E| ∨ 1) − bound`, plus `|E|`.
    pub fn violations(&self, w: &DMatrix<f64>, thresholds: &[f64]) -> (Vec<f64>, usize) {
        let p = w.nrows();
        let edges = fggm_edges(thresholds, w, self.rule).len();
        let denom = edges.max(1) as f64;
        let bound = self.bound(p);
        let v = (0..p)
            .map(|j| (self.a * f64::from(self.delta) + negatives(w, j, thresholds[j]) as f64) / denom - bound)
            .collect();
        (v, edges)
    }

    pub fn feasible(&self, w: &DMatrix<f64>, thresholds: &[f64]) -> bool {
        self.violations(w, thresholds).0.iter().all(|&v| v <= 1e-12)
    }
}

/// Per-node candidate lists: distinct positive `|W_jk|`, then `+∞`.
pub fn node_candidates(w: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..w.nrows())
        .map(|j| {
            let row: Vec<f64> = (0..w.ncols()).filter(|&k| k != j).map(|k| w[(j, k)]).collect();
            let mut c = candidates(row.iter());
            c.push(f64::INFINITY);
            c
        })
        .collect()
}

/// Result of a graph-level threshold search.
#[derive(Clone, Debug)]
pub struct GraphThresholds {
    pub thresholds: Vec<f64>,
    pub edges: usize,
    pub feasible: bool,
}

/// Monotone relaxation: start at the smallest candidates and raise the
/// threshold of the most violating node until every constraint holds.
pub fn fggm_relaxation(w: &DMatrix<f64>, filter: &GraphFilter) -> GraphThresholds {
    let cands = node_candidates(w);
    let p = w.nrows();
    let mut pos = vec![0usize; p];
    loop {
        let t: Vec<f64> = (0..p).map(|j| cands[j][pos[j]]).collect();
        let (viol, edges) = filter.violations(w, &t);
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..p {
            if viol[j] > 1e-12 && pos[j] + 1 < cands[j].len() && worst.is_none_or(|(_, v)| viol[j] > v) {
                worst = Some((j, viol[j]));
            }
        }
        match worst {
            Some((j, _)) => pos[j] += 1,
            None => {
                let feasible = viol.iter().all(|&v| v <= 1e-12);
                if feasible {
                    return GraphThresholds {
                        thresholds: t,
                        edges,
                        feasible,
                    };
                }
                return GraphThresholds {
                    thresholds: vec![f64::INFINITY; p],
                    edges: 0,
                    feasible: filter.feasible(w, &vec![f64::INFINITY; p]),
                };
            }
        }
    }
}

/// Enumerate every candidate vector; keeps the first feasible vector (in
/// lexicographic candidate order) with the most edges.
pub fn fggm_exhaustive(w: &DMatrix<f64>, filter: &GraphFilter) -> GraphThresholds {
    let cands = node_candidates(w);
    let p = w.nrows();
    let mut pos = vec![0usize; p];
    let mut best: Option<GraphThresholds> = None;
    loop {
        let t: Vec<f64> = (0..p).map(|j| cands[j][pos[j]]).collect();
        let (viol, edges) = filter.violations(w, &t);
        if viol.iter().all(|&v| v <= 1e-12) && best.as_ref().is_none_or(|b| edges > b.edges) {
            best = Some(GraphThresholds {
                thresholds: t,
                edges,
                feasible: true,
            });
        }
        // odometer increment
        let mut j = p;
        loop {
            if j == 0 {
                return best.unwrap_or(GraphThresholds {
                    thresholds: vec![f64::INFINITY; p],
                    edges: 0,
                    feasible: false,
                });
            }
            j -= 1;
            pos[j] += 1;
            if pos[j] < cands[j].len() {
                break;
            }
            pos[j] = 0;
        }
    }
}

/// Largest size handled by exhaustive enumeration.
pub const EXHAUSTIVE_MAX_P: usize = 4;

/// Graph-level thresholds: exhaustive for `p ≤ 4`, relaxation otherwise.
pub fn fggm_global_thresholds(w: &DMatrix<f64>, filter: &GraphFilter) -> GraphThresholds {
    if w.nrows() <= EXHAUSTIVE_MAX_P {
        fggm_exhaustive(w, filter)
    } else {
        fggm_relaxation(w, filter)
    }
}

/// Row-wise knockoff thresholds at level `q/p`. Kept for debugging only.
pub fn fggm_local_thresholds(w: &DMatrix<f64>, q: f64, delta: u8) -> Vec<f64> {
    let p = w.nrows();
    (0..p)
        .map(|j| {
            let row: Vec<f64> = (0..p).filter(|&k| k != j).map(|k| w[(j, k)]).collect();
            knockoff_threshold(&row, q / p as f64, delta)
        })
        .collect()
}

/// `(FDP, power)` of a selection against the truth.
pub fn evaluate_metrics<T: Ord + Clone>(selected: &[T], truth: &[T]) -> (f64, f64) {
    let s: BTreeSet<T> = selected.iter().cloned().collect();
    let t: BTreeSet<T> = truth.iter().cloned().collect();
    let hits = s.intersection(&t).count() as f64;
    let false_hits = s.len() as f64 - hits;
    (false_hits / s.len().max(1) as f64, hits / t.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statistics {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Threshold {
    Scalar(f64),
    PerNode(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Selection {
    Indices(Vec<usize>),
    Edges(Vec<(usize, usize)>),
}

impl Selection {
    pub fn len(&self) -> usize {
        match self {
            Selection::Indices(v) => v.len(),
            Selection::Edges(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub stats: Statistics,
    pub threshold: Threshold,
    pub delta: u8,
    pub q: f64,
    pub rule: Option<Rule>,
    pub selected: Selection,
    pub fdp: f64,
    pub power: f64,
    /// Constraint re-evaluation at the returned thresholds (graph models only).
    pub feasible: Option<bool>,
}

/// Regression selection end to end: threshold, select, score against `truth`.
pub fn select_regression(w: Vec<f64>, q: f64, delta: u8, truth: &[usize]) -> SelectionResult {
    let t = knockoff_threshold(&w, q, delta);
    let selected = select(&w, t);
    let (fdp, power) = evaluate_metrics(&selected, truth);
    SelectionResult {
        stats: Statistics::Vector(w),
        threshold: Threshold::Scalar(t),
        delta,
        q,
        rule: None,
        selected: Selection::Indices(selected),
        fdp,
        power,
        feasible: None,
    }
}

/// Graph selection end to end with graph-level thresholds.
pub fn select_graph(w: DMatrix<f64>, filter: &GraphFilter, truth: &[(usize, usize)]) -> SelectionResult {
    let found = fggm_global_thresholds(&w, filter);
    let edges = fggm_edges(&found.thresholds, &w, filter.rule);
    let feasible = filter.feasible(&w, &found.thresholds);
    let (fdp, power) = evaluate_metrics(&edges, truth);
    SelectionResult {
        stats: Statistics::Matrix(w),
        threshold: Threshold::PerNode(found.thresholds),
        delta: filter.delta,
        q: filter.q,
        rule: Some(filter.rule),
        selected: Selection::Edges(edges),
        fdp,
        power,
        feasible: Some(feasible),
    }
}

#[derive(Serialize)]
struct StatRow {
    index_or_edge: String,
    w_value: f64,
    selected_flag: u8,
}

#[derive(Serialize)]
struct MetricsRow {
    q: f64,
    delta: u8,
    rule: String,
    fdp: f64,
    power: f64,
    threshold: String,
}

fn fmt_threshold(t: &Threshold) -> String {
    match t {
        Threshold::Scalar(v) => v.to_string(),
        Threshold::PerNode(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
    }
}

/// Writes per-index (or per ordered pair) statistics and a one-line metrics file.
pub fn write_selection_csv(result: &SelectionResult, stats_path: &Path, metrics_path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(stats_path)?;
    match (&result.stats, &result.selected) {
        (Statistics::Vector(v), Selection::Indices(sel)) => {
            let set: BTreeSet<usize> = sel.iter().cloned().collect();
            for (j, &x) in v.iter().enumerate() {
                w.serialize(StatRow {
                    index_or_edge: j.to_string(),
                    w_value: x,
                    selected_flag: u8::from(set.contains(&j)),
                })?;
            }
        }
        (Statistics::Matrix(m), Selection::Edges(edges)) => {
            let set: BTreeSet<(usize, usize)> = edges.iter().cloned().collect();
            for j in 0..m.nrows() {
                for k in 0..m.ncols() {
                    if j == k {
                        continue;
                    }
                    let e = (j.min(k), j.max(k));
                    w.serialize(StatRow {
                        index_or_edge: format!("{j}-{k}"),
                        w_value: m[(j, k)],
                        selected_flag: u8::from(set.contains(&e)),
                    })?;
                }
            }
        }
        _ => {}
    }
    w.flush()?;
    let mut m = csv::Writer::from_path(metrics_path)?;
    m.serialize(MetricsRow {
        q: result.q,
        delta: result.delta,
        rule: result.rule.map(|r| r.to_string()).unwrap_or_else(|| "none".into()),
        fdp: result.fdp,
        power: result.power,
        threshold: fmt_threshold(&result.threshold),
    })?;
    m.flush()?;
    Ok(())
}
