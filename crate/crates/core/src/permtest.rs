//! Permutation tests of `H0: C' dominates C` and the static and dynamic
//! front tests built from them.
//!
//! The pooled sample is `w = (x_1..x_s, y_1..y_s)`; an index set `I` of size
//! `s` splits it into `w_I` (playing `C'`) and the complement (playing `C`).
//! The observed split is `I = {0..s-1}`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsd::{StatisticEngine, ZERO_BAND};
use crate::prefsys::ConstraintLimits;
use crate::table::{check_delta, EvaluationPoint, PerformanceTable, ScaleSpec};

/// Largest number of splits [`ResamplingMode::Exhaustive`] will enumerate by default.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSampler {
    /// Uniform draw without replacement; draw `t` uses ChaCha8 seeded by the
    /// master seed on stream `t`.
    Random,
    /// Draw `t` is the `(t mod C(2s,s))`-th split in lexicographic order.
    Enumerating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ResamplingMode {
    Exhaustive,
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplingPlan {
    pub mode: ResamplingMode,
    /// Appends the observed split to sampled draws; ignored when exhaustive.
    pub include_observed: bool,
    pub sampler: SplitSampler,
    pub exhaustive_limit: u128,
}

impl ResamplingPlan {
    pub fn exhaustive() -> Self {
        Self {
            mode: ResamplingMode::Exhaustive,
            include_observed: false,
            sampler: SplitSampler::Random,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }

    pub fn sampled(n: usize, seed: u64) -> Self {
        Self {
            mode: ResamplingMode::Sampled { n, seed },
            include_observed: true,
            sampler: SplitSampler::Random,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }

    pub fn with_sampler(mut self, sampler: SplitSampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_observed(mut self, include: bool) -> Self {
        self.include_observed = include;
        self
    }

    /// The index sets this plan evaluates for group size `s`, in evaluation order.
    pub fn splits(&self, s: usize) -> Result<Vec<Vec<usize>>> {
        if s < 2 {
            return Err(Error::InvalidArgument(format!("group size {s} < 2")));
        }
        let count = binomial(2 * s as u128, s as u128);
        match self.mode {
            ResamplingMode::Exhaustive => {
                if count > self.exhaustive_limit {
                    return Err(Error::ExhaustiveTooLarge {
                        count,
                        limit: self.exhaustive_limit,
                    });
                }
                Ok(Combinations::new(2 * s, s).collect())
            }
            ResamplingMode::Sampled { n, seed } => {
                if n == 0 {
                    return Err(Error::InvalidArgument("n_resamples must be positive".into()));
                }
                if self.sampler == SplitSampler::Enumerating && count == u128::MAX {
                    return Err(Error::InvalidArgument(format!("cannot enumerate splits for s = {s}")));
                }
                let mut out: Vec<Vec<usize>> = (0..n)
                    .map(|t| match self.sampler {
                        SplitSampler::Random => {
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            rng.set_stream(t as u64);
                            let mut idx = index::sample(&mut rng, 2 * s, s).into_vec();
                            idx.sort_unstable();
                            idx
                        }
                        SplitSampler::Enumerating => unrank(2 * s, s, t as u128 % count),
                    })
                    .collect();
                if self.include_observed {
                    out.push((0..s).collect());
                }
                Ok(out)
            }
        }
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by i + 1; divide first where possible to delay overflow.
        let g = gcd(acc, i + 1);
        let (a, d) = (acc / g, (i + 1) / g);
        match a.checked_mul((n - i) / d) {
            Some(v) if (n - i).is_multiple_of(d) => acc = v,
            _ => match a.checked_mul(n - i) {
                Some(v) => acc = v / d,
                None => return u128::MAX,
            },
        }
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    cur: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            cur: Some((0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.cur.clone()?;
        let c = self.cur.as_mut().expect("checked above");
        let k = c.len();
        match (0..k).rev().find(|&i| c[i] < self.n - k + i) {
            Some(i) => {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
            }
            None => self.cur = None,
        }
        Some(out)
    }
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = (k - slot - 1) as u128;
        let mut v = next;
        loop {
            let with_v = binomial((n - v - 1) as u128, remaining);
            if rank < with_v {
                break;
            }
            rank -= with_v;
            v += 1;
        }
        out.push(v);
        next = v + 1;
    }
    out
}

/// Observed statistic and the resampled ones for one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOutcome {
    pub observed: f64,
    /// Ascending.
    pub resampled: Vec<f64>,
}

/// Runs the permutation scheme for `d(x, y)`; the constraint system on the
/// pooled points is built once and reused for every split.
pub fn resample_pair(
    x: &[EvaluationPoint],
    y: &[EvaluationPoint],
    scale: &ScaleSpec,
    plan: &ResamplingPlan,
    delta: f64,
    limits: ConstraintLimits,
) -> Result<ResampleOutcome> {
    let s = x.len();
    if y.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            actual: y.len(),
        });
    }
    let splits = plan.splits(s)?;
    let pooled: Vec<EvaluationPoint> = x.iter().chain(y).cloned().collect();
    let engine = StatisticEngine::new(&pooled, scale, delta, limits)?;
    let w = engine.indices(&pooled)?;
    let observed = engine.statistic(&w[..s], &w[s..])?.value;
    let evaluated: Vec<Result<f64>> = splits
        .par_iter()
        .map(|set| {
            let mut inside = vec![false; 2 * s];
            set.iter().for_each(|&i| inside[i] = true);
            let first: Vec<usize> = set.iter().map(|&i| w[i]).collect();
            let second: Vec<usize> = (0..2 * s).filter(|&i| !inside[i]).map(|i| w[i]).collect();
            engine
                .statistic(&first, &second)
                .map(|r| r.value)
                .map_err(|e| Error::Resample {
                    index_set: set.clone(),
                    source: Box::new(e),
                })
        })
        .collect();
    let mut resampled = evaluated.into_iter().collect::<Result<Vec<f64>>>()?;
    resampled.sort_by(f64::total_cmp);
    Ok(ResampleOutcome { observed, resampled })
}

/// Sorted resampled statistics of `d(x, y)`.
pub fn resample_statistics(
    x: &[EvaluationPoint],
    y: &[EvaluationPoint],
    scale: &ScaleSpec,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<Vec<f64>> {
    Ok(resample_pair(x, y, scale, plan, delta, ConstraintLimits::default())?.resampled)
}

/// `#{d_I <= observed} / r`, with values inside [`ZERO_BAND`] of `observed` counted as ties.
pub fn ratio_p_value(resampled: &[f64], observed: f64) -> f64 {
    let hits = resampled.iter().filter(|&&d| d <= observed + ZERO_BAND).count();
    hits as f64 / resampled.len() as f64
}

/// `floor(alpha * r)`, guarded against representation error just below an integer.
pub fn order_statistic_index(alpha: f64, r: usize) -> usize {
    (alpha * r as f64 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTestResult {
    pub candidate: String,
    pub target: String,
    pub observed: f64,
    pub resampled: Vec<f64>,
    pub p_value: f64,
    /// `resampled[ell - 1]`; absent when `ell = 0`.
    pub critical_value: Option<f64>,
    pub ell: usize,
    pub reject: bool,
    /// `ell = 0`: too few resamples for this level.
    pub never_rejects: bool,
    pub alpha: f64,
    pub delta: f64,
    pub plan: ResamplingPlan,
}

impl PairwiseTestResult {
    fn decide(
        candidate: String,
        target: String,
        outcome: ResampleOutcome,
        alpha: f64,
        delta: f64,
        plan: ResamplingPlan,
    ) -> Self {
        let r = outcome.resampled.len();
        let ell = order_statistic_index(alpha, r);
        let critical_value = ell.checked_sub(1).map(|i| outcome.resampled[i]);
        // Ties (within the zero band) never reject.
        let reject = critical_value.is_some_and(|c| outcome.observed < c - ZERO_BAND);
        Self {
            candidate,
            target,
            observed: outcome.observed,
            p_value: ratio_p_value(&outcome.resampled, outcome.observed),
            resampled: outcome.resampled,
            critical_value,
            ell,
            reject,
            never_rejects: ell == 0,
            alpha,
            delta,
            plan,
        }
    }

    /// The same resamples judged at another level.
    pub fn at_level(&self, alpha: f64) -> Self {
        Self::decide(
            self.candidate.clone(),
            self.target.clone(),
            ResampleOutcome {
                observed: self.observed,
                resampled: self.resampled.clone(),
            },
            alpha,
            self.delta,
            self.plan,
        )
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} not in (0,1)")))
    }
}

/// Tests `H0: candidate dominates target`.
pub fn pairwise_test(
    candidate: &str,
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<PairwiseTestResult> {
    check_alpha(alpha)?;
    check_delta(delta)?;
    table.require_valid()?;
    let a = table.classifier_index(candidate)?;
    let b = table.classifier_index(target)?;
    let outcome = resample_pair(
        &table.sample(a),
        &table.sample(b),
        table.scale(),
        plan,
        delta,
        ConstraintLimits::default(),
    )?;
    Ok(PairwiseTestResult::decide(
        candidate.to_string(),
        target.to_string(),
        outcome,
        alpha,
        delta,
        *plan,
    ))
}

/// Observed and resampled `d(C', target)` for every challenger `C'`, in table order.
pub fn challenger_outcomes(
    target: &str,
    table: &PerformanceTable,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<Vec<(String, ResampleOutcome)>> {
    check_delta(delta)?;
    table.require_valid()?;
    let t = table.classifier_index(target)?;
    if table.n_classifiers() < 2 {
        return Err(Error::InvalidArgument("need at least two classifiers".into()));
    }
    let y = table.sample(t);
    let challengers: Vec<usize> = (0..table.n_classifiers()).filter(|&i| i != t).collect();
    let results: Vec<Result<(String, ResampleOutcome)>> = challengers
        .par_iter()
        .map(|&c| {
            let outcome = resample_pair(
                &table.sample(c),
                &y,
                table.scale(),
                plan,
                delta,
                ConstraintLimits::default(),
            )?;
            Ok((table.classifiers()[c].clone(), outcome))
        })
        .collect();
    results.into_iter().collect()
}

/// Pairwise tests of every challenger against `target`, in table order, at level `alpha`.
pub fn challenger_tests(
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<Vec<PairwiseTestResult>> {
    check_alpha(alpha)?;
    Ok(challenger_outcomes(target, table, plan, delta)?
        .into_iter()
        .map(|(c, o)| PairwiseTestResult::decide(c, target.to_string(), o, alpha, delta, *plan))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticTestResult {
    pub target: String,
    pub pairwise: Vec<PairwiseTestResult>,
    pub reject: bool,
}

pub fn static_from_pairwise(target: &str, pairwise: Vec<PairwiseTestResult>) -> StaticTestResult {
    StaticTestResult {
        target: target.to_string(),
        reject: pairwise.iter().all(|p| p.reject),
        pairwise,
    }
}

/// Rejects `H0: target is not in the front` iff every pairwise test rejects at `alpha`.
pub fn static_gsd_test(
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<StaticTestResult> {
    let pairwise = challenger_tests(target, table, alpha, plan, delta)?;
    Ok(static_from_pairwise(target, pairwise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicTestResult {
    pub target: String,
    pub alpha: f64,
    /// `alpha / (|C| - 1)`.
    pub pairwise_level: f64,
    pub s_max: Vec<String>,
    pub pairwise: Vec<PairwiseTestResult>,
}

pub fn dynamic_from_pairwise(target: &str, alpha: f64, pairwise: &[PairwiseTestResult]) -> DynamicTestResult {
    let level = alpha / pairwise.len() as f64;
    let pairwise: Vec<PairwiseTestResult> = pairwise.iter().map(|p| p.at_level(level)).collect();
    DynamicTestResult {
        target: target.to_string(),
        alpha,
        pairwise_level: level,
        s_max: pairwise
            .iter()
            .filter(|p| p.reject)
            .map(|p| p.candidate.clone())
            .collect(),
        pairwise,
    }
}

/// Pairwise tests at `alpha / c`; `s_max` collects the rejected challengers.
pub fn dynamic_gsd_test(
    target: &str,
    table: &PerformanceTable,
    alpha: f64,
    plan: &ResamplingPlan,
    delta: f64,
) -> Result<DynamicTestResult> {
    check_alpha(alpha)?;
    let pairwise = challenger_tests(target, table, alpha, plan, delta)?;
    Ok(dynamic_from_pairwise(target, alpha, &pairwise))
}
