//! The `d` statistic, empirical GSD relation and fronts.
//!
//! Sign convention: `d(first, second)` is the infimum over representations `u`
//! of `sum_z u(z) * (P_first(z) - P_second(z))`, so `first` empirically
//! GSD-dominates `second` iff `d(first, second) >= 0`. The test statistic
//! written with the challenger first, `d(C', C)`, is `d_statistic(C', C)`.

use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpDiagnostics, LpStatus, Sense};
use crate::prefsys::{self, build_constraints, ConstraintLimits, ConstraintSet, Margin};
use crate::table::{check_delta, EvaluationPoint, PerformanceTable, ScaleSpec};

/// Values of `d` within this band of zero count as `>= 0`.
pub const ZERO_BAND: f64 = 1e-9;

/// `d >= 0` up to [`ZERO_BAND`].
pub fn nonnegative(d: f64) -> bool {
    d >= -ZERO_BAND
}

/// Which points enter the constraint system behind `d`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointScope {
    /// Only the two compared classifiers' evaluations plus `0` and `1`.
    #[default]
    Pair,
    /// Every classifier's evaluations on the suite plus `0` and `1`.
    Suite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsdOptions {
    pub delta: f64,
    pub scope: PointScope,
    pub limits: ConstraintLimits,
}

impl Default for GsdOptions {
    fn default() -> Self {
        Self {
            delta: 0.0,
            scope: PointScope::Pair,
            limits: ConstraintLimits::default(),
        }
    }
}

impl GsdOptions {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }
}

/// Finite-support probability measure on evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub support: Vec<EvaluationPoint>,
    pub mass: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Each sample point gets mass `multiplicity / s`.
    pub fn from_sample(sample: &[EvaluationPoint]) -> Self {
        let mut counts: BTreeMap<&EvaluationPoint, usize> = BTreeMap::new();
        for p in sample {
            *counts.entry(p).or_default() += 1;
        }
        let s = sample.len() as f64;
        let (support, mass) = counts.into_iter().map(|(p, c)| (p.clone(), c as f64 / s)).unzip();
        Self { support, mass }
    }

    pub fn weighted(points: Vec<EvaluationPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be nonnegative, one per point".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, not 1")));
        }
        let mut merged: BTreeMap<EvaluationPoint, f64> = BTreeMap::new();
        for (p, w) in points.into_iter().zip(weights) {
            *merged.entry(p).or_default() += w;
        }
        let (support, mass) = merged.into_iter().unzip();
        Ok(Self { support, mass })
    }

    pub fn mass_of(&self, p: &EvaluationPoint) -> f64 {
        self.support.binary_search(p).map_or(0.0, |i| self.mass[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointUtility {
    pub point: EvaluationPoint,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub value: f64,
    pub delta: f64,
    pub mu_delta: f64,
    pub minimizing_assignment: Vec<PointUtility>,
    pub lp_diagnostics: LpDiagnostics,
}

/// A constraint system built once, reused for many objectives (resamples,
/// classifier pairs).
#[derive(Debug, Clone)]
pub struct StatisticEngine {
    cs: ConstraintSet,
    delta: f64,
    mu: f64,
}

impl StatisticEngine {
    pub fn new(points: &[EvaluationPoint], scale: &ScaleSpec, delta: f64, limits: ConstraintLimits) -> Result<Self> {
        check_delta(delta)?;
        let cs = build_constraints(points, scale, limits)?;
        let mu = if delta > 0.0 {
            prefsys::granularity(&cs)?.mu_of(delta)
        } else {
            0.0
        };
        Ok(Self { cs, delta, mu })
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.cs
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Variable index of every point, in order.
    pub fn indices(&self, points: &[EvaluationPoint]) -> Result<Vec<usize>> {
        points
            .iter()
            .map(|p| {
                self.cs
                    .index_of(p)
                    .ok_or_else(|| Error::InvalidArgument(format!("point {:?} not in system", p.values())))
            })
            .collect()
    }

    /// Objective coefficients for equally weighted samples given as variable indices.
    pub fn sample_objective(&self, first: &[usize], second: &[usize]) -> Vec<f64> {
        let m = self.cs.variables.len();
        let mut cf = vec![0usize; m];
        let mut cs = vec![0usize; m];
        for &i in first {
            cf[i] += 1;
        }
        for &i in second {
            cs[i] += 1;
        }
        let (nf, ns) = (first.len() as f64, second.len() as f64);
        (0..m)
            .map(|j| {
                let a = if cf[j] > 0 { cf[j] as f64 / nf } else { 0.0 };
                let b = if cs[j] > 0 { cs[j] as f64 / ns } else { 0.0 };
                a - b
            })
            .collect()
    }

    pub fn measure_objective(&self, first: &EmpiricalMeasure, second: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let mut obj = vec![0.0; self.cs.variables.len()];
        for (sign, m) in [(1.0, first), (-1.0, second)] {
            for (p, &w) in m.support.iter().zip(&m.mass) {
                let j = self
                    .cs
                    .index_of(p)
                    .ok_or_else(|| Error::InvalidArgument(format!("point {:?} not in system", p.values())))?;
                obj[j] += sign * w;
            }
        }
        Ok(obj)
    }

    /// Minimum of `objective . u` over the representations with margin `mu`.
    pub fn minimize(&self, objective: &[f64]) -> Result<StatisticResult> {
        let problem = self.cs.to_lp(Sense::Minimize, objective, Margin::Fixed(self.mu));
        let sol = lp::solve(&problem);
        match sol.status {
            LpStatus::Optimal => Ok(StatisticResult {
                value: sol.objective_value,
                delta: self.delta,
                mu_delta: self.mu,
                minimizing_assignment: self
                    .cs
                    .variables
                    .iter()
                    .zip(&sol.assignment)
                    .map(|(p, &u)| PointUtility {
                        point: p.clone(),
                        utility: u,
                    })
                    .collect(),
                lp_diagnostics: sol.diagnostics,
            }),
            status => Err(Error::lp(status, sol.diagnostics.note.unwrap_or_default())),
        }
    }

    /// `d` for two equally weighted samples of variable indices.
    pub fn statistic(&self, first: &[usize], second: &[usize]) -> Result<StatisticResult> {
        self.minimize(&self.sample_objective(first, second))
    }
}

/// `d(first, second)` on the pooled points of the two classifiers.
pub fn d_statistic(first: &str, second: &str, table: &PerformanceTable, delta: f64) -> Result<StatisticResult> {
    d_statistic_with(first, second, table, &GsdOptions::with_delta(delta))
}

pub fn d_statistic_with(
    first: &str,
    second: &str,
    table: &PerformanceTable,
    opts: &GsdOptions,
) -> Result<StatisticResult> {
    table.require_valid()?;
    let a = table.classifier_index(first)?;
    let b = table.classifier_index(second)?;
    let engine = engine_for(table, &[a, b], opts)?;
    let xs = engine.indices(&table.sample(a))?;
    let ys = engine.indices(&table.sample(b))?;
    engine.statistic(&xs, &ys)
}

fn engine_for(table: &PerformanceTable, classifiers: &[usize], opts: &GsdOptions) -> Result<StatisticEngine> {
    let points: Vec<EvaluationPoint> = match opts.scope {
        PointScope::Pair => classifiers.iter().flat_map(|&c| table.sample(c)).collect(),
        PointScope::Suite => (0..table.n_classifiers()).flat_map(|c| table.sample(c)).collect(),
    };
    StatisticEngine::new(&points, table.scale(), opts.delta, opts.limits)
}

/// All ordered-pair values `d(row, col)`; the diagonal is `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DMatrix {
    pub classifiers: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DMatrix {
    pub fn get(&self, first: usize, second: usize) -> f64 {
        self.values[first][second]
    }
}

pub fn d_matrix(table: &PerformanceTable, opts: &GsdOptions) -> Result<DMatrix> {
    table.require_valid()?;
    let k = table.n_classifiers();
    let samples: Vec<Vec<EvaluationPoint>> = (0..k).map(|c| table.sample(c)).collect();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let suite = match opts.scope {
        PointScope::Suite => Some(engine_for(table, &[], opts)?),
        PointScope::Pair => None,
    };
    let results: Vec<((usize, usize), f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let local;
            let engine = match &suite {
                Some(e) => e,
                None => {
                    local = engine_for(table, &[i, j], opts)?;
                    &local
                }
            };
            let xi = engine.indices(&samples[i])?;
            let xj = engine.indices(&samples[j])?;
            let dij = engine.statistic(&xi, &xj)?.value;
            let dji = engine.statistic(&xj, &xi)?.value;
            Ok(((i, j), dij, dji))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; k]; k];
    for ((i, j), dij, dji) in results {
        values[i][j] = dij;
        values[j][i] = dji;
    }
    Ok(DMatrix {
        classifiers: table.classifiers().to_vec(),
        values,
    })
}

/// Hasse graph of a dominance relation over classifiers. Equivalent
/// classifiers are collapsed into one class; edges connect classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceGraph {
    pub nodes: Vec<String>,
    /// Equivalence classes in order of their first member; singletons included.
    pub classes: Vec<Vec<String>>,
    /// Reduced strict edges `(winner class, loser class)`.
    pub strict_edges: Vec<(usize, usize)>,
}

impl DominanceGraph {
    /// Classes with at least two members.
    pub fn equivalences(&self) -> Vec<&[String]> {
        self.classes.iter().filter(|c| c.len() > 1).map(Vec::as_slice).collect()
    }

    /// Strict edges labelled by each class's first member.
    pub fn named_edges(&self) -> Vec<(&str, &str)> {
        self.strict_edges
            .iter()
            .map(|&(a, b)| (self.classes[a][0].as_str(), self.classes[b][0].as_str()))
            .collect()
    }

    fn class_of(&self, id: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.iter().any(|m| m == id))
    }

    /// Whether `winner` reaches `loser` through reduced strict edges.
    pub fn dominates(&self, winner: &str, loser: &str) -> bool {
        let (Some(a), Some(b)) = (self.class_of(winner), self.class_of(loser)) else {
            return false;
        };
        let mut stack = vec![a];
        let mut seen = vec![false; self.classes.len()];
        while let Some(x) = stack.pop() {
            for &(u, v) in &self.strict_edges {
                if u == x && !seen[v] {
                    if v == b {
                        return true;
                    }
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }

    /// Graphviz rendering with one node per class, in class order.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph gsd {\n  rankdir=TB;\n  node [shape=box];\n");
        for (i, class) in self.classes.iter().enumerate() {
            let label = class.join(", ").replace('"', "\\\"");
            let _ = writeln!(out, "  n{i} [label=\"{label}\"];");
        }
        for &(a, b) in &self.strict_edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the collapsed, transitively reduced graph from a `d` matrix.
pub fn dominance_graph(d: &DMatrix) -> Result<DominanceGraph> {
    let k = d.classifiers.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for i in 0..k {
        for j in i + 1..k {
            if nonnegative(d.get(i, j)) && nonnegative(d.get(j, i)) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut class_index = vec![usize::MAX; k];
    let mut classes: Vec<Vec<String>> = Vec::new();
    for i in 0..k {
        let r = root(&mut parent, i);
        if class_index[r] == usize::MAX {
            class_index[r] = classes.len();
            classes.push(Vec::new());
        }
        class_index[i] = class_index[r];
        classes[class_index[i]].push(d.classifiers[i].clone());
    }
    let nc = classes.len();
    let mut adj = vec![vec![false; nc]; nc];
    for i in 0..k {
        for j in 0..k {
            if i != j && nonnegative(d.get(i, j)) && !nonnegative(d.get(j, i)) {
                let (a, b) = (class_index[i], class_index[j]);
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
    }
    // Reachability by repeated DFS; a class reaching itself is a cycle.
    let reach: Vec<Vec<bool>> = (0..nc)
        .map(|s| {
            let mut seen = vec![false; nc];
            let mut stack: Vec<usize> = (0..nc).filter(|&v| adj[s][v]).collect();
            while let Some(x) = stack.pop() {
                if seen[x] {
                    continue;
                }
                seen[x] = true;
                stack.extend((0..nc).filter(|&v| adj[x][v] && !seen[v]));
            }
            seen
        })
        .collect();
    if let Some(c) = (0..nc).find(|&c| reach[c][c]) {
        return Err(Error::CyclicRelation(classes[c][0].clone()));
    }
    let mut strict_edges = Vec::new();
    for a in 0..nc {
        for b in 0..nc {
            if adj[a][b] && !(0..nc).any(|m| m != b && adj[a][m] && reach[m][b]) {
                strict_edges.push((a, b));
            }
        }
    }
    Ok(DominanceGraph {
        nodes: d.classifiers.clone(),
        classes,
        strict_edges,
    })
}

pub fn empirical_gsd_relation(table: &PerformanceTable, delta: f64) -> Result<DominanceGraph> {
    empirical_gsd_relation_with(table, &GsdOptions::with_delta(delta))
}

pub fn empirical_gsd_relation_with(table: &PerformanceTable, opts: &GsdOptions) -> Result<DominanceGraph> {
    dominance_graph(&d_matrix(table, opts)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrontKind {
    EGsd,
    Pareto,
    PopulationGsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontResult {
    /// Members in table order.
    pub members: Vec<String>,
    pub epsilon: f64,
    pub kind: FrontKind,
}

impl FrontResult {
    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    pub fn is_subset_of(&self, other: &FrontResult) -> bool {
        self.members.iter().all(|m| other.contains(m))
    }
}

/// Classifiers not excluded by any competitor `C'` with `d(C', C) >= -epsilon`
/// and `d(C, C') < 0`.
pub fn egsd_front_from(d: &DMatrix, epsilon: f64) -> FrontResult {
    let k = d.classifiers.len();
    let members = (0..k)
        .filter(|&c| !(0..k).any(|o| o != c && d.get(o, c) >= -epsilon - ZERO_BAND && !nonnegative(d.get(c, o))))
        .map(|c| d.classifiers[c].clone())
        .collect();
    FrontResult {
        members,
        epsilon,
        kind: FrontKind::EGsd,
    }
}

pub fn egsd_front(table: &PerformanceTable, epsilon: f64, delta: f64) -> Result<FrontResult> {
    egsd_front_with(table, epsilon, &GsdOptions::with_delta(delta))
}

pub fn egsd_front_with(table: &PerformanceTable, epsilon: f64, opts: &GsdOptions) -> Result<FrontResult> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in [0,1]")));
    }
    Ok(egsd_front_from(&d_matrix(table, opts)?, epsilon))
}

/// Classifiers not strictly componentwise dominated by one competitor on every dataset.
pub fn pareto_front(table: &PerformanceTable) -> Result<FrontResult> {
    table.require_valid()?;
    let k = table.n_classifiers();
    let strictly_above =
        |a: &EvaluationPoint, b: &EvaluationPoint| a != b && a.values().iter().zip(b.values()).all(|(x, y)| x >= y);
    let members = (0..k)
        .filter(|&c| {
            !(0..k).any(|o| o != c && (0..table.s()).all(|d| strictly_above(table.point(o, d), table.point(c, d))))
        })
        .map(|c| table.classifiers()[c].clone())
        .collect();
    Ok(FrontResult {
        members,
        epsilon: 0.0,
        kind: FrontKind::Pareto,
    })
}

/// `c / s^(1/4)`.
pub fn epsilon_schedule(s: usize, c: f64) -> f64 {
    c / (s as f64).sqrt().sqrt()
}
