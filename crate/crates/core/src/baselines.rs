//! Comparison methods: first-order stochastic dominance and the marginal
//! front from per-metric Friedman and Nemenyi tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gsd::{empirical_gsd_relation, DominanceGraph};
use crate::table::PerformanceTable;

/// Largest number of classifiers covered by [`STUDENTIZED_RANGE_Q`].
pub const MAX_GROUPS: usize = 20;

/// Levels covered by [`STUDENTIZED_RANGE_Q`].
pub const NEMENYI_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

/// Upper quantiles of the studentized range with infinite degrees of freedom,
/// rows by level as in [`NEMENYI_ALPHAS`], columns for `k = 2..=20` groups.
pub const STUDENTIZED_RANGE_Q: [[f64; 19]; 3] = [
    [
        3.642773, 4.120303, 4.402801, 4.602821, 4.757047, 4.882166, 4.987183, 5.077506, 5.156635, 5.226963, 5.290196,
        5.347592, 5.400105, 5.448476, 5.493291, 5.535020, 5.574047, 5.610690, 5.645215,
    ],
    [
        2.771808, 3.314493, 3.633160, 3.857656, 4.030092, 4.169554, 4.286309, 4.386509, 4.474124, 4.551864, 4.621655,
        4.684920, 4.742732, 4.795924, 4.845154, 4.890951, 4.933745, 4.973892, 5.011689,
    ],
    [
        2.326174, 2.902380, 3.240446, 3.478281, 3.660721, 3.808098, 3.931349, 4.037023, 4.129346, 4.211200, 4.284635,
        4.351158, 4.411913, 4.467782, 4.519464, 4.567519, 4.612403, 4.654494, 4.694104,
    ],
];

/// Studentized-range quantile `q_alpha` for `k` groups from the shipped table.
pub fn studentized_range_quantile(k: usize, alpha: f64) -> Result<f64> {
    if !(2..=MAX_GROUPS).contains(&k) {
        return Err(Error::QuantileTableLimit {
            groups: k,
            max: MAX_GROUPS,
        });
    }
    let row = NEMENYI_ALPHAS
        .iter()
        .position(|&a| (a - alpha).abs() < 1e-12)
        .ok_or(Error::QuantileAlpha(alpha))?;
    Ok(STUDENTIZED_RANGE_Q[row][k - 2])
}

/// `P(R <= q)` for the range of `k` iid standard normals, by Simpson quadrature of
/// `k * integral phi(z) (Phi(z) - Phi(z - q))^(k-1) dz`.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let normal = Normal::standard();
    let f = |z: f64| {
        let inner = normal.cdf(z) - normal.cdf(z - q);
        normal.pdf(z) * inner.max(0.0).powi(k as i32 - 1)
    };
    let (lo, hi, steps) = (-9.0, 9.0 + q, 4000usize);
    let h = (hi - lo) / steps as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    (k as f64 * acc * h / 3.0).clamp(0.0, 1.0)
}

/// The relation under first-order stochastic dominance: every metric treated as ordinal.
pub fn fsd_relation(table: &PerformanceTable, delta: f64) -> Result<DominanceGraph> {
    empirical_gsd_relation(&table.as_all_ordinal(), delta)
}

/// Per-dataset ranks on one metric, rank 1 = best, ties averaged; `ranks[d][c]`.
fn block_ranks(table: &PerformanceTable, metric: usize) -> Vec<Vec<f64>> {
    let k = table.n_classifiers();
    (0..table.s())
        .map(|d| {
            let v: Vec<f64> = (0..k).map(|c| table.point(c, d).values()[metric]).collect();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
            let mut ranks = vec![0.0; k];
            let mut i = 0;
            while i < k {
                let mut j = i;
                while j + 1 < k && v[order[j + 1]] == v[order[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0 + 1.0;
                order[i..=j].iter().for_each(|&c| ranks[c] = avg);
                i = j + 1;
            }
            ranks
        })
        .collect()
}

fn metric_checked(table: &PerformanceTable, metric: usize) -> Result<()> {
    table.require_valid()?;
    if metric >= table.scale().n() {
        return Err(Error::InvalidArgument(format!("metric index {metric} out of range")));
    }
    if table.s() < 2 || table.n_classifiers() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two datasets and two classifiers".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub metric: String,
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
    /// Rank 1 = best.
    pub mean_ranks: Vec<f64>,
}

/// Tie-corrected Friedman test with datasets as blocks.
pub fn friedman_test(table: &PerformanceTable, metric: usize) -> Result<FriedmanResult> {
    metric_checked(table, metric)?;
    let ranks = block_ranks(table, metric);
    let (k, n) = (table.n_classifiers() as f64, table.s() as f64);
    let sums: Vec<f64> = (0..table.n_classifiers())
        .map(|c| ranks.iter().map(|r| r[c]).sum())
        .collect();
    let ties: f64 = ranks
        .iter()
        .map(|r| {
            let mut sorted = r.clone();
            sorted.sort_by(f64::total_cmp);
            sorted
                .chunk_by(|a, b| a == b)
                .map(|g| {
                    let t = g.len() as f64;
                    t * t * t - t
                })
                .sum::<f64>()
        })
        .sum();
    let denom = 1.0 - ties / (n * (k * k * k - k));
    let raw = 12.0 / (n * k * (k + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * n * (k + 1.0);
    let df = table.n_classifiers() - 1;
    let (statistic, p_value) = if denom <= 1e-12 {
        (0.0, 1.0)
    } else {
        let stat = (raw / denom).max(0.0);
        let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (stat, chi.sf(stat))
    };
    Ok(FriedmanResult {
        metric: table.scale().metrics()[metric].name.clone(),
        statistic,
        p_value,
        df,
        mean_ranks: sums.iter().map(|s| s / n).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub metric: String,
    pub alpha: f64,
    pub critical_difference: f64,
    pub classifiers: Vec<String>,
    /// Rank 1 = best.
    pub mean_ranks: Vec<f64>,
    /// Symmetric; diagonal is 1.
    pub p_values: Vec<Vec<f64>>,
    /// Symmetric; `|mean rank difference| > critical_difference`.
    pub significant: Vec<Vec<bool>>,
    /// Whether the Friedman test rejects on this metric at `alpha`.
    pub friedman_rejected: bool,
}

impl NemenyiResult {
    /// `winner` has the better mean rank and the pair is significant.
    pub fn beats(&self, winner: usize, loser: usize) -> bool {
        self.significant[winner][loser] && self.mean_ranks[winner] < self.mean_ranks[loser]
    }
}

/// Nemenyi post-hoc comparison of all pairs on one metric.
pub fn nemenyi_pairwise(table: &PerformanceTable, metric: usize, alpha: f64) -> Result<NemenyiResult> {
    metric_checked(table, metric)?;
    let kc = table.n_classifiers();
    let q = studentized_range_quantile(kc, alpha)?;
    let friedman = friedman_test(table, metric)?;
    let (k, n) = (kc as f64, table.s() as f64);
    let se = (k * (k + 1.0) / (6.0 * n)).sqrt();
    let cd = q / std::f64::consts::SQRT_2 * se;
    let r = &friedman.mean_ranks;
    let mut p_values = vec![vec![1.0; kc]; kc];
    let mut significant = vec![vec![false; kc]; kc];
    for i in 0..kc {
        for j in i + 1..kc {
            let diff = (r[i] - r[j]).abs();
            let p = 1.0 - studentized_range_cdf(diff * std::f64::consts::SQRT_2 / se, kc);
            let sig = diff > cd;
            p_values[i][j] = p;
            p_values[j][i] = p;
            significant[i][j] = sig;
            significant[j][i] = sig;
        }
    }
    Ok(NemenyiResult {
        metric: friedman.metric,
        alpha,
        critical_difference: cd,
        classifiers: table.classifiers().to_vec(),
        mean_ranks: friedman.mean_ranks,
        p_values,
        significant,
        friedman_rejected: friedman.p_value <= alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanSummary {
    pub metric: String,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFrontResult {
    pub alpha: f64,
    pub friedman: Vec<FriedmanSummary>,
    pub nemenyi: Vec<NemenyiResult>,
    /// Table order.
    pub front: Vec<String>,
}

/// Excludes a classifier iff one competitor beats it significantly on every
/// metric. A metric counts only where its Friedman test rejects at `alpha`.
pub fn marginal_front(table: &PerformanceTable, alpha: f64) -> Result<MarginalFrontResult> {
    table.require_valid()?;
    let n = table.scale().n();
    let nemenyi: Vec<NemenyiResult> = (0..n)
        .into_par_iter()
        .map(|m| nemenyi_pairwise(table, m, alpha))
        .collect::<Result<_>>()?;
    let friedman: Vec<FriedmanSummary> = (0..n)
        .map(|m| {
            friedman_test(table, m).map(|f| FriedmanSummary {
                metric: f.metric,
                statistic: f.statistic,
                reject: f.p_value <= alpha,
                p_value: f.p_value,
            })
        })
        .collect::<Result<_>>()?;
    let k = table.n_classifiers();
    let front = (0..k)
        .filter(|&c| !(0..k).any(|o| o != c && nemenyi.iter().all(|r| r.friedman_rejected && r.beats(o, c))))
        .map(|c| table.classifiers()[c].clone())
        .collect();
    Ok(MarginalFrontResult {
        alpha,
        friedman,
        nemenyi,
        front,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{EvaluationPoint, ScaleSpec};

    fn one_metric(rows: &[Vec<f64>]) -> PerformanceTable {
        PerformanceTable::new(
            (0..rows.len()).map(|i| format!("C{i}")).collect(),
            (0..rows[0].len()).map(|i| format!("D{i}")).collect(),
            ScaleSpec::cardinal(&["acc"]).unwrap(),
            rows.iter()
                .map(|r| r.iter().map(|&v| EvaluationPoint::new(vec![v])).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn shipped_quantiles_match_quadrature() {
        for (row, &alpha) in NEMENYI_ALPHAS.iter().enumerate() {
            for k in 2..=MAX_GROUPS {
                let q = STUDENTIZED_RANGE_Q[row][k - 2];
                let p = studentized_range_cdf(q, k);
                assert!((p - (1.0 - alpha)).abs() < 2e-6, "k={k} alpha={alpha}: {p}");
            }
        }
    }

    #[test]
    fn two_group_range_is_scaled_normal() {
        // R = |Z1 - Z2| = sqrt(2)|N(0,1)|, so q_0.05 / sqrt(2) is the 97.5% normal quantile.
        assert!((studentized_range_quantile(2, 0.05).unwrap() / 2f64.sqrt() - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn quantile_table_limits() {
        assert!(matches!(
            studentized_range_quantile(21, 0.05),
            Err(Error::QuantileTableLimit { groups: 21, max: 20 })
        ));
        assert!(matches!(
            studentized_range_quantile(3, 0.2),
            Err(Error::QuantileAlpha(_))
        ));
    }

    #[test]
    fn identical_classifiers_are_degenerate() {
        let t = one_metric(&[vec![0.5, 0.7, 0.2], vec![0.5, 0.7, 0.2]]);
        let f = friedman_test(&t, 0).unwrap();
        assert_eq!((f.statistic, f.p_value), (0.0, 1.0));
        let nm = nemenyi_pairwise(&t, 0, 0.05).unwrap();
        assert!(!nm.significant[0][1]);
        assert_eq!(marginal_front(&t, 0.05).unwrap().front, vec!["C0", "C1"]);
    }

    #[test]
    fn dominant_classifier_is_detected() {
        // C0 best everywhere; C1 and C2 alternate.
        let s = 20;
        let c0 = vec![0.9; s];
        let c1: Vec<f64> = (0..s).map(|d| if d % 2 == 0 { 0.6 } else { 0.5 }).collect();
        let c2: Vec<f64> = (0..s).map(|d| if d % 2 == 0 { 0.5 } else { 0.6 }).collect();
        let t = one_metric(&[c0, c1, c2]);
        let f = friedman_test(&t, 0).unwrap();
        // sum R^2 = 400 + 2 * 2500; 0.05 * 5400 - 240 = 30
        assert!((f.statistic - 30.0).abs() < 1e-9);
        assert!(f.p_value < 0.01);
        assert_eq!(f.mean_ranks, vec![1.0, 2.5, 2.5]);
    }

    #[test]
    fn friedman_tie_correction() {
        // Two classifiers, one tie among four blocks.
        let t = one_metric(&[vec![0.9, 0.9, 0.9, 0.5], vec![0.1, 0.1, 0.1, 0.5]]);
        let f = friedman_test(&t, 0).unwrap();
        // R = (4.5, 7.5); raw = 12/24 * (20.25 + 56.25) - 36 = 2.25; denom = 1 - 6/24.
        assert!((f.statistic - 3.0).abs() < 1e-12);
    }
}
