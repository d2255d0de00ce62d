//! Contamination robustness of the permutation tests.
//!
//! With `k` of `s` suite members possibly contaminated, the observed p-value
//! of a pairwise test becomes
//! `f(k) = 1 - (1/N) #{I : d_I - observed > 2k / (s - k)}`,
//! computed from the same resample vector for every `k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsd::ZERO_BAND;
use crate::permtest::{challenger_outcomes, ResampleOutcome, ResamplingPlan};
use crate::table::PerformanceTable;

/// `f(k)`; differences within [`ZERO_BAND`] of the threshold do not exceed it.
pub fn contamination_pvalue(resampled: &[f64], observed: f64, k: usize, s: usize) -> Result<f64> {
    if k >= s {
        return Err(Error::InvalidArgument(format!("k = {k} must be below s = {s}")));
    }
    if resampled.is_empty() {
        return Err(Error::InvalidArgument("no resampled statistics".into()));
    }
    let threshold = 2.0 * k as f64 / (s - k) as f64;
    let above = resampled
        .iter()
        .filter(|&&d| d - observed > threshold + ZERO_BAND)
        .count();
    Ok((resampled.len() - above) as f64 / resampled.len() as f64)
}

/// `ceil(s / 4)`, kept below `s`.
pub fn default_k_max(s: usize) -> usize {
    s.div_ceil(4).min(s.saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationCurve {
    /// `None` for an aggregate over all challengers.
    pub candidate: Option<String>,
    pub target: String,
    pub s: usize,
    /// `values[k]` for `k = 0..=k_max`.
    pub values: Vec<f64>,
}

impl ContaminationCurve {
    pub fn from_outcome(
        candidate: Option<String>,
        target: &str,
        outcome: &ResampleOutcome,
        s: usize,
        k_max: usize,
    ) -> Result<Self> {
        let values = (0..=k_max)
            .map(|k| contamination_pvalue(&outcome.resampled, outcome.observed, k, s))
            .collect::<Result<_>>()?;
        Ok(Self {
            candidate,
            target: target.to_string(),
            s,
            values,
        })
    }

    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// `candidate>target`, or `F:target` for an aggregate.
    pub fn label(&self) -> String {
        match &self.candidate {
            Some(c) => format!("{c}>{}", self.target),
            None => format!("F:{}", self.target),
        }
    }
}

/// Pointwise maximum of challenger curves against one target.
pub fn aggregate_curve(curves: &[ContaminationCurve]) -> Result<ContaminationCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidArgument("no curves to aggregate".into()))?;
    if curves
        .iter()
        .any(|c| c.values.len() != first.values.len() || c.target != first.target || c.s != first.s)
    {
        return Err(Error::InvalidArgument("curves disagree on target, s or k_max".into()));
    }
    let values = (0..first.values.len())
        .map(|k| curves.iter().map(|c| c.values[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(ContaminationCurve {
        candidate: None,
        target: first.target.clone(),
        s: first.s,
        values,
    })
}

/// Curves of every challenger against `target`, in table order.
pub fn challenger_curves(
    target: &str,
    table: &PerformanceTable,
    plan: &ResamplingPlan,
    delta: f64,
    k_max: usize,
) -> Result<Vec<ContaminationCurve>> {
    let s = table.s();
    if k_max >= s {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} must be below s = {s}")));
    }
    challenger_outcomes(target, table, plan, delta)?
        .par_iter()
        .map(|(c, o)| ContaminationCurve::from_outcome(Some(c.clone()), target, o, s, k_max))
        .collect()
}

/// `F_C(k)`: the largest challenger `f(k)`.
pub fn aggregate_f(target: &str, table: &PerformanceTable, plan: &ResamplingPlan, delta: f64, k: usize) -> Result<f64> {
    Ok(aggregate_curve(&challenger_curves(target, table, plan, delta, k)?)?.at(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustStaticResult {
    pub target: String,
    pub k: usize,
    pub alpha: f64,
    pub aggregate: f64,
    pub curves: Vec<ContaminationCurve>,
    pub reject: bool,
}

pub fn robust_static_from_curves(curves: Vec<ContaminationCurve>, alpha: f64, k: usize) -> Result<RobustStaticResult> {
    let agg = aggregate_curve(&curves)?;
    if k > agg.k_max() {
        return Err(Error::InvalidArgument(format!("k = {k} beyond curve length")));
    }
    Ok(RobustStaticResult {
        target: agg.target.clone(),
        k,
        alpha,
        aggregate: agg.at(k),
        reject: agg.at(k) <= alpha,
        curves,
    })
}

/// Rejects iff `F_C(k) <= alpha`.
pub fn robustified_static_test(
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
    k: usize,
) -> Result<RobustStaticResult> {
    robust_static_from_curves(challenger_curves(target, table, plan, delta, k)?, alpha, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustDynamicResult {
    pub target: String,
    pub k: usize,
    pub alpha: f64,
    pub pairwise_level: f64,
    pub s_max: Vec<String>,
    pub curves: Vec<ContaminationCurve>,
}

pub fn robust_dynamic_from_curves(
    target: &str,
    curves: Vec<ContaminationCurve>,
    alpha: f64,
    k: usize,
) -> Result<RobustDynamicResult> {
    if curves.iter().any(|c| k > c.k_max()) {
        return Err(Error::InvalidArgument(format!("k = {k} beyond curve length")));
    }
    let level = alpha / curves.len() as f64;
    Ok(RobustDynamicResult {
        target: target.to_string(),
        k,
        alpha,
        pairwise_level: level,
        s_max: curves
            .iter()
            .filter(|c| c.at(k) <= level)
            .filter_map(|c| c.candidate.clone())
            .collect(),
        curves,
    })
}

/// Challengers whose `f(k) <= alpha / c`.
pub fn robustified_dynamic_test(
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
    k: usize,
) -> Result<RobustDynamicResult> {
    robust_dynamic_from_curves(target, challenger_curves(target, table, plan, delta, k)?, alpha, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub label: String,
    pub level: f64,
    pub k_max: usize,
    /// Largest `k <= k_max` with `curve(k) <= level`.
    pub k_star: Option<usize>,
}

/// Direct scan; does not assume the curve is monotone.
pub fn breakdown_from_curve(curve: &ContaminationCurve, level: f64) -> BreakdownReport {
    BreakdownReport {
        label: curve.label(),
        level,
        k_max: curve.k_max(),
        k_star: curve.values.iter().rposition(|&v| v <= level),
    }
}

/// Breakdown of the static decision for `target` (aggregate curve) at `level`.
pub fn breakdown(
    target: &str,
    table: &PerformanceTable,
    level: f64,
    plan: &ResamplingPlan,
    delta: f64,
    k_max: usize,
) -> Result<BreakdownReport> {
    let curves = challenger_curves(target, table, plan, delta, k_max)?;
    Ok(breakdown_from_curve(&aggregate_curve(&curves)?, level))
}

/// Long-format CSV with columns `pair,k,p_value`.
pub fn curves_to_csv(curves: &[ContaminationCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pair", "k", "p_value"])?;
    for c in curves {
        let label = c.label();
        for (k, v) in c.values.iter().enumerate() {
            w.write_record([label.as_str(), &k.to_string(), &v.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: Vec<f64>) -> ContaminationCurve {
        ContaminationCurve {
            candidate: Some("A".into()),
            target: "B".into(),
            s: 10,
            values,
        }
    }

    #[test]
    fn hand_evaluated_values() {
        let r = [-0.2, -0.1, 0.0, 0.1];
        assert_eq!(contamination_pvalue(&r, -0.3, 0, 10).unwrap(), 0.0);
        assert_eq!(contamination_pvalue(&r, -0.3, 1, 10).unwrap(), 0.5);
        assert!(contamination_pvalue(&r, -0.3, 10, 10).is_err());
        assert!(contamination_pvalue(&[], 0.0, 0, 10).is_err());
    }

    #[test]
    fn breakdown_scan() {
        let c = curve(vec![0.004, 0.004, 0.01, 0.2]);
        assert_eq!(breakdown_from_curve(&c, 0.0083).k_star, Some(1));
        assert_eq!(breakdown_from_curve(&curve(vec![0.5, 0.6]), 0.05).k_star, None);
        assert_eq!(breakdown_from_curve(&curve(vec![0.0; 4]), 0.05).k_star, Some(3));
    }

    #[test]
    fn clustered_resamples_break_down_after_one() {
        // Thresholds at s = 10: k=1 -> 2/9, k=2 -> 1/2.
        let observed = -0.4;
        let resampled: Vec<f64> = (0..40).map(|i| observed + 0.3 + 0.001 * i as f64).collect();
        let outcome = ResampleOutcome { observed, resampled };
        let c = ContaminationCurve::from_outcome(Some("A".into()), "B", &outcome, 10, 3).unwrap();
        assert_eq!(c.values[..3], [0.0, 0.0, 1.0]);
        assert_eq!(breakdown_from_curve(&c, 0.05).k_star, Some(1));
    }

    #[test]
    fn aggregate_is_pointwise_max() {
        let a = curve(vec![0.0, 0.2, 0.3]);
        let mut b = curve(vec![0.1, 0.1, 0.4]);
        b.candidate = Some("C".into());
        let f = aggregate_curve(&[a, b]).unwrap();
        assert_eq!(f.values, vec![0.1, 0.2, 0.4]);
        assert_eq!(f.label(), "F:B");
    }

    #[test]
    fn default_k_max_values() {
        assert_eq!(default_k_max(80), 20);
        assert_eq!(default_k_max(10), 3);
        assert_eq!(default_k_max(2), 1);
    }

    #[test]
    fn csv_export() {
        let text = curves_to_csv(&[curve(vec![0.0, 0.5])]).unwrap();
        assert_eq!(text, "pair,k,p_value\nA>B,0,0\nA>B,1,0.5\n");
    }
}
