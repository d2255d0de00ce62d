//! Shared domain types: metric scales, evaluation points and the performance table.
//!
//! Every metric is stored higher-is-better in `[0, 1]`. Cardinal metrics come
//! first in a [`ScaleSpec`], ordinal metrics after them.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Cardinal,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub scale: Scale,
}

impl MetricSpec {
    pub fn cardinal(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            scale: Scale::Cardinal,
        }
    }

    pub fn ordinal(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            scale: Scale::Ordinal,
        }
    }
}

/// Ordered metric declarations with the cardinal metrics listed first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScaleSpec {
    metrics: Vec<MetricSpec>,
    #[serde(skip)]
    cardinal: usize,
}

impl ScaleSpec {
    pub fn new(metrics: Vec<MetricSpec>) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::InvalidScale("at least one metric is required".into()));
        }
        let mut seen = HashSet::new();
        for m in &metrics {
            if m.name.is_empty() {
                return Err(Error::InvalidScale("metric names must be nonempty".into()));
            }
            if !seen.insert(m.name.as_str()) {
                return Err(Error::InvalidScale(format!("duplicate metric name '{}'", m.name)));
            }
        }
        let cardinal = metrics.iter().take_while(|m| m.scale == Scale::Cardinal).count();
        if metrics[cardinal..].iter().any(|m| m.scale == Scale::Cardinal) {
            return Err(Error::InvalidScale(
                "cardinal metrics must precede ordinal metrics".into(),
            ));
        }
        Ok(Self { metrics, cardinal })
    }

    /// Reorders `metrics` so the cardinal ones come first (stable), returning the
    /// spec and, for each position of the new order, the index in the input.
    pub fn canonical(metrics: Vec<MetricSpec>) -> Result<(Self, Vec<usize>)> {
        let mut order: Vec<usize> = (0..metrics.len()).collect();
        order.sort_by_key(|&i| match metrics[i].scale {
            Scale::Cardinal => 0,
            Scale::Ordinal => 1,
        });
        let reordered = order.iter().map(|&i| metrics[i].clone()).collect();
        Ok((Self::new(reordered)?, order))
    }

    pub fn cardinal(names: &[&str]) -> Result<Self> {
        Self::new(names.iter().map(|n| MetricSpec::cardinal(*n)).collect())
    }

    pub fn ordinal(names: &[&str]) -> Result<Self> {
        Self::new(names.iter().map(|n| MetricSpec::ordinal(*n)).collect())
    }

    /// Builds `z` cardinal metrics followed by `n - z` ordinal ones, named `m1..mn`.
    pub fn mixed(n: usize, z: usize) -> Result<Self> {
        if z > n {
            return Err(Error::InvalidScale(format!("z = {z} exceeds n = {n}")));
        }
        Self::new(
            (0..n)
                .map(|j| MetricSpec {
                    name: format!("m{}", j + 1),
                    scale: if j < z { Scale::Cardinal } else { Scale::Ordinal },
                })
                .collect(),
        )
    }

    /// Same metric names with every metric treated as ordinal.
    pub fn as_all_ordinal(&self) -> Self {
        Self {
            metrics: self
                .metrics
                .iter()
                .map(|m| MetricSpec::ordinal(m.name.clone()))
                .collect(),
            cardinal: 0,
        }
    }

    pub fn metrics(&self) -> &[MetricSpec] {
        &self.metrics
    }

    /// Number of metrics.
    pub fn n(&self) -> usize {
        self.metrics.len()
    }

    /// Number of cardinal metrics.
    pub fn z(&self) -> usize {
        self.cardinal
    }

    pub fn is_cardinal(&self, j: usize) -> bool {
        j < self.cardinal
    }
}

impl<'de> Deserialize<'de> for ScaleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            metrics: Vec<MetricSpec>,
        }
        let raw = Raw::deserialize(de)?;
        ScaleSpec::new(raw.metrics).map_err(serde::de::Error::custom)
    }
}

/// A point of `[0,1]^n`. Equality, hashing and ordering are exact on the bit
/// pattern (with `-0.0` folded onto `0.0`), so equal points merge into one
/// utility variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvaluationPoint(Vec<f64>);

impl EvaluationPoint {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| if v == 0.0 { 0.0 } else { v }).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn in_unit_cube(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

impl From<Vec<f64>> for EvaluationPoint {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl PartialEq for EvaluationPoint {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for EvaluationPoint {}

impl Hash for EvaluationPoint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            v.to_bits().hash(state);
        }
    }
}

impl PartialOrd for EvaluationPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EvaluationPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// One defect found by [`validate_table`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewClassifiers(usize),
    NoDatasets,
    DuplicateClassifier(String),
    DuplicateDataset(String),
    EmptyId,
    Missing {
        classifier: String,
        dataset: String,
    },
    Dimension {
        classifier: String,
        dataset: String,
        expected: usize,
        actual: usize,
    },
    NotANumber {
        classifier: String,
        dataset: String,
        metric: String,
    },
    OutOfRange {
        classifier: String,
        dataset: String,
        metric: String,
        value: f64,
    },
    CellCount {
        expected: usize,
        actual: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewClassifiers(n) => {
                write!(f, "at least 2 classifiers required, found {n}")
            }
            Violation::NoDatasets => write!(f, "at least 1 dataset required"),
            Violation::DuplicateClassifier(c) => write!(f, "duplicate classifier id '{c}'"),
            Violation::DuplicateDataset(d) => write!(f, "duplicate dataset id '{d}'"),
            Violation::EmptyId => write!(f, "empty classifier or dataset id"),
            Violation::Missing { classifier, dataset } => write!(f, "missing evaluation ({classifier}, {dataset})"),
            Violation::Dimension {
                classifier,
                dataset,
                expected,
                actual,
            } => write!(
                f,
                "evaluation ({classifier}, {dataset}) has {actual} values, expected {expected}"
            ),
            Violation::NotANumber {
                classifier,
                dataset,
                metric,
            } => write!(f, "NaN at ({classifier}, {dataset}, metric {metric})"),
            Violation::OutOfRange {
                classifier,
                dataset,
                metric,
                ..
            } => write!(f, "value out of [0,1] at ({classifier}, {dataset}, metric {metric})"),
            Violation::CellCount { expected, actual } => {
                write!(f, "table has {actual} cells, expected {expected}")
            }
        }
    }
}

/// The `s x |C| x n` tensor of evaluations.
///
/// Construct through [`PerformanceTable::new`] (validating) or
/// [`PerformanceTable::from_cells`] (unchecked, for ingestion dry runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    classifiers: Vec<String>,
    datasets: Vec<String>,
    scale: ScaleSpec,
    /// Row-major by classifier: `cells[c * s + d]`.
    cells: Vec<Option<EvaluationPoint>>,
}

impl PerformanceTable {
    /// `rows[c][d]` is the evaluation of classifier `c` on dataset `d`.
    pub fn new(
        classifiers: Vec<String>,
        datasets: Vec<String>,
        scale: ScaleSpec,
        rows: Vec<Vec<EvaluationPoint>>,
    ) -> Result<Self> {
        let cells = rows.into_iter().flatten().map(Some).collect();
        let table = Self::from_cells(classifiers, datasets, scale, cells);
        table.require_valid()?;
        Ok(table)
    }

    pub fn from_cells(
        classifiers: Vec<String>,
        datasets: Vec<String>,
        scale: ScaleSpec,
        cells: Vec<Option<EvaluationPoint>>,
    ) -> Self {
        Self {
            classifiers,
            datasets,
            scale,
            cells,
        }
    }

    pub fn require_valid(&self) -> Result<()> {
        let violations = validate_table(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTable(violations))
        }
    }

    pub fn classifiers(&self) -> &[String] {
        &self.classifiers
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn scale(&self) -> &ScaleSpec {
        &self.scale
    }

    /// Number of datasets.
    pub fn s(&self) -> usize {
        self.datasets.len()
    }

    pub fn n_classifiers(&self) -> usize {
        self.classifiers.len()
    }

    pub fn classifier_index(&self, id: &str) -> Result<usize> {
        self.classifiers
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| Error::UnknownClassifier(id.to_string()))
    }

    pub fn cell(&self, classifier: usize, dataset: usize) -> Option<&EvaluationPoint> {
        self.cells
            .get(classifier * self.datasets.len() + dataset)
            .and_then(Option::as_ref)
    }

    /// Evaluation of a classifier on a dataset. Panics on a missing cell, which
    /// cannot happen for a validated table.
    pub fn point(&self, classifier: usize, dataset: usize) -> &EvaluationPoint {
        self.cell(classifier, dataset)
            .expect("point() called on an incomplete table")
    }

    /// All evaluations of one classifier, in dataset order.
    pub fn sample(&self, classifier: usize) -> Vec<EvaluationPoint> {
        (0..self.s()).map(|d| self.point(classifier, d).clone()).collect()
    }

    /// The same table with every metric treated as ordinal.
    pub fn as_all_ordinal(&self) -> Self {
        Self {
            scale: self.scale.as_all_ordinal(),
            ..self.clone()
        }
    }

    /// Restriction to a subset of classifiers (by index, in the given order).
    pub fn select_classifiers(&self, keep: &[usize]) -> Self {
        let s = self.s();
        let mut cells = Vec::with_capacity(keep.len() * s);
        for &c in keep {
            cells.extend_from_slice(&self.cells[c * s..(c + 1) * s]);
        }
        Self {
            classifiers: keep.iter().map(|&c| self.classifiers[c].clone()).collect(),
            datasets: self.datasets.clone(),
            scale: self.scale.clone(),
            cells,
        }
    }
}

/// Lists every broken table invariant; empty exactly when the table is valid.
pub fn validate_table(table: &PerformanceTable) -> Vec<Violation> {
    let mut out = Vec::new();
    if table.classifiers.len() < 2 {
        out.push(Violation::TooFewClassifiers(table.classifiers.len()));
    }
    if table.datasets.is_empty() {
        out.push(Violation::NoDatasets);
    }
    if table.classifiers.iter().chain(&table.datasets).any(String::is_empty) {
        out.push(Violation::EmptyId);
    }
    let mut seen = HashSet::new();
    for c in &table.classifiers {
        if !seen.insert(c) {
            out.push(Violation::DuplicateClassifier(c.clone()));
        }
    }
    let mut seen = HashSet::new();
    for d in &table.datasets {
        if !seen.insert(d) {
            out.push(Violation::DuplicateDataset(d.clone()));
        }
    }
    let expected = table.classifiers.len() * table.datasets.len();
    if table.cells.len() != expected {
        out.push(Violation::CellCount {
            expected,
            actual: table.cells.len(),
        });
        return out;
    }
    let n = table.scale.n();
    for (ci, c) in table.classifiers.iter().enumerate() {
        for (di, d) in table.datasets.iter().enumerate() {
            let Some(p) = table.cell(ci, di) else {
                out.push(Violation::Missing {
                    classifier: c.clone(),
                    dataset: d.clone(),
                });
                continue;
            };
            if p.dim() != n {
                out.push(Violation::Dimension {
                    classifier: c.clone(),
                    dataset: d.clone(),
                    expected: n,
                    actual: p.dim(),
                });
                continue;
            }
            for (j, &v) in p.values().iter().enumerate() {
                let metric = table.scale.metrics()[j].name.clone();
                if v.is_nan() {
                    out.push(Violation::NotANumber {
                        classifier: c.clone(),
                        dataset: d.clone(),
                        metric,
                    });
                } else if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::OutOfRange {
                        classifier: c.clone(),
                        dataset: d.clone(),
                        metric,
                        value: v,
                    });
                }
            }
        }
    }
    out
}

/// Parameters shared by the permutation tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_resamples: usize,
    pub delta: f64,
    pub seed: u64,
    /// Enumerate all `C(2s, s)` splits; `n_resamples` is then ignored.
    pub exhaustive: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_resamples: 1000,
            delta: 0.0,
            seed: 0,
            exhaustive: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if !self.exhaustive && self.n_resamples == 0 {
            return Err(Error::InvalidArgument("n_resamples must be positive".into()));
        }
        check_delta(self.delta)
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta {delta} not in [0,1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: [[f64; 3]; 2]) -> PerformanceTable {
        let scale = ScaleSpec::cardinal(&["accuracy"]).unwrap();
        let cells = values
            .iter()
            .flat_map(|row| row.iter().map(|&v| Some(EvaluationPoint::new(vec![v]))))
            .collect();
        PerformanceTable::from_cells(
            vec!["C1".into(), "C2".into()],
            vec!["D1".into(), "D2".into(), "D3".into()],
            scale,
            cells,
        )
    }

    #[test]
    fn complete_table_has_no_violations() {
        assert!(validate_table(&table([[0.1, 0.2, 0.3], [0.4, 0.5, 1.0]])).is_empty());
    }

    #[test]
    fn out_of_range_value_is_reported() {
        let v = validate_table(&table([[0.1, 1.2, 0.3], [0.4, 0.5, 0.6]]));
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert_eq!(msgs, ["value out of [0,1] at (C1, D2, metric accuracy)"]);
    }

    #[test]
    fn missing_cell_is_reported() {
        let mut t = table([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]);
        t.cells[5] = None;
        let msgs: Vec<String> = validate_table(&t).iter().map(ToString::to_string).collect();
        assert_eq!(msgs, ["missing evaluation (C2, D3)"]);
    }

    #[test]
    fn nan_and_single_classifier_are_reported() {
        let scale = ScaleSpec::cardinal(&["a"]).unwrap();
        let t = PerformanceTable::from_cells(
            vec!["C1".into()],
            vec!["D1".into()],
            scale,
            vec![Some(EvaluationPoint::new(vec![f64::NAN]))],
        );
        let v = validate_table(&t);
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::TooFewClassifiers(1)));
        assert!(matches!(v[1], Violation::NotANumber { .. }));
    }

    #[test]
    fn scale_requires_cardinal_first_and_unique_names() {
        assert!(ScaleSpec::new(vec![MetricSpec::ordinal("a"), MetricSpec::cardinal("b")]).is_err());
        assert!(ScaleSpec::new(vec![MetricSpec::cardinal("a"), MetricSpec::cardinal("a")]).is_err());
        assert!(ScaleSpec::new(vec![]).is_err());
        let (spec, order) = ScaleSpec::canonical(vec![MetricSpec::ordinal("t"), MetricSpec::cardinal("acc")]).unwrap();
        assert_eq!(order, [1, 0]);
        assert_eq!(spec.z(), 1);
        assert_eq!(spec.n(), 2);
    }

    #[test]
    fn negative_zero_merges_with_zero() {
        assert_eq!(
            EvaluationPoint::new(vec![-0.0, 0.5]),
            EvaluationPoint::new(vec![0.0, 0.5])
        );
    }
}
