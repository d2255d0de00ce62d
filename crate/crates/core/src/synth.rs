//! Synthetic populations with exactly computable fronts, table sampling, the
//! consistency experiment, and brute-force oracles for the `d` statistic.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsd::{
    dominance_graph, egsd_front, epsilon_schedule, nonnegative, DMatrix, EmpiricalMeasure, FrontKind, FrontResult,
    StatisticEngine,
};
use crate::prefsys::ConstraintLimits;
use crate::table::{check_delta, EvaluationPoint, MetricSpec, PerformanceTable, ScaleSpec};

/// Finite population of dataset types; each type fixes every classifier's evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    pub classifiers: Vec<String>,
    pub scale: ScaleSpec,
    /// `dataset_types[t][c]`.
    pub dataset_types: Vec<Vec<EvaluationPoint>>,
    pub probabilities: Vec<f64>,
}

impl PopulationModel {
    pub fn new(
        classifiers: Vec<String>,
        scale: ScaleSpec,
        dataset_types: Vec<Vec<EvaluationPoint>>,
        probabilities: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            classifiers,
            scale,
            dataset_types,
            probabilities,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() || self.dataset_types.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs classifiers and dataset types".into(),
            ));
        }
        if self.dataset_types.len() != self.probabilities.len() {
            return Err(Error::InvalidArgument("one probability per dataset type".into()));
        }
        if self.probabilities.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidArgument("probabilities must be nonnegative".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        for profile in &self.dataset_types {
            if profile.len() != self.classifiers.len() {
                return Err(Error::InvalidArgument(
                    "profile size differs from classifier count".into(),
                ));
            }
            for p in profile {
                if p.dim() != self.scale.n() || !p.in_unit_cube() {
                    return Err(Error::InvalidArgument(format!("bad profile point {:?}", p.values())));
                }
            }
        }
        Ok(())
    }

    /// Population distribution of one classifier's evaluation.
    pub fn measure(&self, classifier: usize) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::weighted(
            self.dataset_types.iter().map(|t| t[classifier].clone()).collect(),
            self.probabilities.clone(),
        )
    }

    /// The shipped model: one cardinal and two ordinal metrics on decile
    /// midpoints, four dataset types, front `{A, B}`.
    ///
    /// `C` is componentwise below `A` and `B` on every type. `A` wins only on
    /// `o1` in type 1 (mass 0.3) and `B` wins on `c` and `o2` elsewhere, so
    /// `D(B, A) = -0.3` and `D(A, B) = -0.7`.
    pub fn default_model() -> Self {
        let p = |v: [f64; 3]| EvaluationPoint::new(v.to_vec());
        let scale = ScaleSpec::new(vec![
            MetricSpec::cardinal("c"),
            MetricSpec::ordinal("o1"),
            MetricSpec::ordinal("o2"),
        ])
        .expect("valid scale");
        Self::new(
            vec!["A".into(), "B".into(), "C".into()],
            scale,
            vec![
                vec![p([0.5, 0.95, 0.45]), p([0.5, 0.05, 0.45]), p([0.4, 0.05, 0.35])],
                vec![p([0.6, 0.55, 0.15]), p([0.7, 0.55, 0.85]), p([0.5, 0.45, 0.15])],
                vec![p([0.3, 0.25, 0.25]), p([0.4, 0.25, 0.75]), p([0.2, 0.15, 0.15])],
                vec![p([0.8, 0.75, 0.35]), p([0.9, 0.75, 0.95]), p([0.7, 0.65, 0.25])],
            ],
            vec![0.3, 0.3, 0.25, 0.15],
        )
        .expect("valid default model")
    }
}

/// Population `D(row, col)` for every ordered pair, over all profile points.
pub fn population_d_matrix(model: &PopulationModel, delta: f64) -> Result<DMatrix> {
    model.validate()?;
    check_delta(delta)?;
    let points: Vec<EvaluationPoint> = model.dataset_types.iter().flatten().cloned().collect();
    let engine = StatisticEngine::new(&points, &model.scale, delta, ConstraintLimits::default())?;
    let k = model.classifiers.len();
    let measures: Vec<EmpiricalMeasure> = (0..k).map(|c| model.measure(c)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            Ok(engine
                .minimize(&engine.measure_objective(&measures[i], &measures[j])?)?
                .value)
        })
        .collect::<Result<_>>()?;
    let mut d = vec![vec![0.0; k]; k];
    for (&(i, j), v) in cells.iter().zip(values) {
        d[i][j] = v;
    }
    Ok(DMatrix {
        classifiers: model.classifiers.clone(),
        values: d,
    })
}

/// Classifiers not strictly dominated in the population.
pub fn population_gsd_front(model: &PopulationModel, delta: f64) -> Result<FrontResult> {
    let d = population_d_matrix(model, delta)?;
    let k = d.classifiers.len();
    let members = (0..k)
        .filter(|&c| !(0..k).any(|o| o != c && nonnegative(d.get(o, c)) && !nonnegative(d.get(c, o))))
        .map(|c| d.classifiers[c].clone())
        .collect();
    Ok(FrontResult {
        members,
        epsilon: 0.0,
        kind: FrontKind::PopulationGsd,
    })
}

/// `s` iid dataset types drawn with ChaCha8 seeded by `seed`.
pub fn sample_table(model: &PopulationModel, s: usize, seed: u64) -> Result<PerformanceTable> {
    model.validate()?;
    if s == 0 {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    let dist = WeightedIndex::new(&model.probabilities).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<usize> = (0..s).map(|_| dist.sample(&mut rng)).collect();
    let rows = (0..model.classifiers.len())
        .map(|c| draws.iter().map(|&t| model.dataset_types[t][c].clone()).collect())
        .collect();
    PerformanceTable::new(
        model.classifiers.clone(),
        (1..=s).map(|d| format!("D{d}")).collect(),
        model.scale.clone(),
        rows,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub s: usize,
    pub run: usize,
    pub recovered: bool,
    pub superset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub s: usize,
    pub epsilon: f64,
    pub recovery_rate: f64,
    pub superset_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub true_front: Vec<String>,
    pub runs: usize,
    pub epsilon_c: f64,
    pub seed: u64,
    pub summaries: Vec<SizeSummary>,
    pub records: Vec<RunRecord>,
}

impl ExperimentReport {
    /// Columns `s,run,recovered,superset`.
    pub fn records_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Seed of replication `run` at grid position `grid_index`.
pub fn replication_seed(master: u64, grid_index: usize, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((grid_index as u64) << 32) | run as u64);
    rng.next_u64()
}

/// Recovery and superset rates of the empirical front with `epsilon = epsilon_c / s^(1/4)`.
pub fn consistency_experiment(
    model: &PopulationModel,
    s_grid: &[usize],
    runs: usize,
    epsilon_c: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    let pd = population_d_matrix(model, 0.0)?;
    let k = model.classifiers.len();
    for i in 0..k {
        for j in i + 1..k {
            if nonnegative(pd.get(i, j)) && nonnegative(pd.get(j, i)) {
                return Err(Error::InvalidArgument(format!(
                    "population order is not antisymmetric: {} ~ {}",
                    model.classifiers[i], model.classifiers[j]
                )));
            }
        }
    }
    let truth = population_gsd_front(model, 0.0)?;
    if runs == 0 || s_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one run and one sample size".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..s_grid.len()).flat_map(|g| (0..runs).map(move |r| (g, r))).collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(g, run)| {
            let s = s_grid[g];
            let table = sample_table(model, s, replication_seed(seed, g, run))?;
            let front = egsd_front(&table, epsilon_schedule(s, epsilon_c).min(1.0), 0.0)?;
            Ok(RunRecord {
                s,
                run,
                recovered: front.members == truth.members,
                superset: truth.is_subset_of(&front),
            })
        })
        .collect::<Result<_>>()?;
    let summaries = s_grid
        .iter()
        .enumerate()
        .map(|(g, &s)| {
            let mine = &records[g * runs..(g + 1) * runs];
            let rate = |f: fn(&RunRecord) -> bool| mine.iter().filter(|r| f(r)).count() as f64 / runs as f64;
            SizeSummary {
                s,
                epsilon: epsilon_schedule(s, epsilon_c),
                recovery_rate: rate(|r| r.recovered),
                superset_rate: rate(|r| r.superset),
            }
        })
        .collect();
    Ok(ExperimentReport {
        true_front: truth.members,
        runs,
        epsilon_c,
        seed,
        summaries,
        records,
    })
}

/// Relation graph of the population model.
pub fn population_relation(model: &PopulationModel, delta: f64) -> Result<crate::gsd::DominanceGraph> {
    dominance_graph(&population_d_matrix(model, delta)?)
}

pub const GRID_MAX_POINTS: usize = 6;
pub const GRID_MAX_G: usize = 20;

fn ge_all(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Brute-force minimum of `sum (m1 - m2) u` over grid utilities `u in {0, 1/g, .., 1}`
/// that are monotone and respect every exchange comparison, checked directly on
/// all point pairs. Returns `+inf` when no grid utility qualifies.
pub fn grid_oracle_d(
    first: &EmpiricalMeasure,
    second: &EmpiricalMeasure,
    points: &[EvaluationPoint],
    scale: &ScaleSpec,
    g: usize,
) -> Result<f64> {
    if g == 0 || g > GRID_MAX_G {
        return Err(Error::InvalidArgument(format!(
            "grid resolution {g} not in 1..={GRID_MAX_G}"
        )));
    }
    let n = scale.n();
    let z = scale.z();
    let mut pts: Vec<Vec<f64>> = points
        .iter()
        .chain(&first.support)
        .chain(&second.support)
        .map(|p| p.values().to_vec())
        .chain([vec![0.0; n], vec![1.0; n]])
        .collect();
    // Lexicographic order puts every componentwise-smaller point first.
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup();
    let m = pts.len();
    if m - 2 > GRID_MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "{} free points exceed {GRID_MAX_POINTS}",
            m - 2
        )));
    }
    let weight: Vec<f64> = pts
        .iter()
        .map(|p| {
            let e = EvaluationPoint::new(p.clone());
            first.mass_of(&e) - second.mass_of(&e)
        })
        .collect();
    let exchange_ge = |a: usize, b: usize, c: usize, d: usize| {
        let (a, b, c, d) = (&pts[a], &pts[b], &pts[c], &pts[d]);
        (0..n).all(|j| {
            if j < z {
                (a[j] - b[j]) - (c[j] - d[j]) >= -1e-12
            } else {
                a[j] >= c[j] && c[j] >= d[j] && d[j] >= b[j]
            }
        })
    };
    // checks[i]: constraints whose largest index is i, as (a, b, c, d) meaning
    // u_a - u_b >= u_c - u_d (c = d encodes plain monotonicity).
    let mut checks: Vec<Vec<[usize; 4]>> = vec![Vec::new(); m];
    let ordered: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (0..m).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && ge_all(&pts[a], &pts[b]))
        .collect();
    for &(a, b) in &ordered {
        checks[a.max(b)].push([a, b, 0, 0]);
        for &(c, d) in &ordered {
            if exchange_ge(a, b, c, d) {
                checks[a.max(b).max(c).max(d)].push([a, b, c, d]);
            }
        }
    }
    // Anchors sit at the ends of the lexicographic order.
    let zero = 0;
    let mut u = vec![0.0; m];
    let mut best = f64::INFINITY;
    let grid = GridSearch {
        zero,
        g,
        weight: &weight,
        checks: &checks,
    };
    grid.search(0, &mut u, 0.0, &mut best);
    Ok(best)
}

/// Depth-first assignment of grid values in point order.
struct GridSearch<'a> {
    zero: usize,
    g: usize,
    weight: &'a [f64],
    checks: &'a [Vec<[usize; 4]>],
}

impl GridSearch<'_> {
    fn search(&self, i: usize, u: &mut [f64], partial: f64, best: &mut f64) {
        let m = u.len();
        if i == m {
            *best = best.min(partial);
            return;
        }
        let candidates: Vec<f64> = if i == self.zero {
            vec![0.0]
        } else if i == m - 1 {
            vec![1.0]
        } else {
            (0..=self.g).map(|k| k as f64 / self.g as f64).collect()
        };
        for v in candidates {
            u[i] = v;
            let ok = self.checks[i]
                .iter()
                .all(|&[a, b, c, d]| u[a] - u[b] - (u[c] - u[d]) >= -1e-12);
            if ok {
                self.search(i + 1, u, partial + self.weight[i] * v, best);
            }
        }
    }
}

/// Whether the ECDF of `x` lies weakly below that of `y` at every pooled point.
pub fn fsd_oracle(x: &[f64], y: &[f64]) -> bool {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    x.iter().chain(y).all(|&t| ecdf(x, t) <= ecdf(y, t))
}
