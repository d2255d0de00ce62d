//! The preference system on `[0,1]^n` restricted to an observed point set.
//!
//! `R1` is the componentwise order. `R2` compares pairs of `R1`-ordered points:
//! on cardinal metrics the first pair's difference must be at least the
//! second's, on ordinal metrics the second pair must be nested inside the
//! first. [`build_constraints`] turns both relations into a linear system over
//! one utility variable per distinct point, with the anchors `u(0) = 0` and
//! `u(1) = 1`.
//!
//! The emitted system is reduced without changing its solution set for any
//! margin `xi >= 0`:
//! - strict `R1` constraints are emitted only for covering pairs;
//! - `R2` equivalence classes are tied by a chain of equalities;
//! - strict `R2` constraints are emitted only for covering classes, and
//!   dropped when already implied by `R1` (first pair encloses the second
//!   componentwise).

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpProblem, Relation, Sense};
use crate::table::{EvaluationPoint, ScaleSpec};

/// Absolute tolerance when comparing cardinal differences; far below the
/// finest ingestion rounding (12 decimals).
pub const DIFFERENCE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation3 {
    StrictlyGreater,
    Equal,
    StrictlyLess,
    Incomparable,
}

impl Relation3 {
    fn from_weak(ge: bool, le: bool) -> Self {
        match (ge, le) {
            (true, true) => Relation3::Equal,
            (true, false) => Relation3::StrictlyGreater,
            (false, true) => Relation3::StrictlyLess,
            (false, false) => Relation3::Incomparable,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Relation3::StrictlyGreater => Relation3::StrictlyLess,
            Relation3::StrictlyLess => Relation3::StrictlyGreater,
            other => other,
        }
    }
}

fn check_dim(p: &EvaluationPoint, n: usize) -> Result<()> {
    if p.dim() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: n,
            actual: p.dim(),
        })
    }
}

#[inline]
fn weakly_above(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a >= b)
}

/// `(a, b)` is at least as good an exchange as `(c, d)`.
#[inline]
fn pair_geq(a: &[f64], b: &[f64], c: &[f64], d: &[f64], z: usize) -> bool {
    for j in 0..z {
        if (a[j] - b[j]) - (c[j] - d[j]) < -DIFFERENCE_TOL {
            return false;
        }
    }
    for j in z..a.len() {
        if !(a[j] >= c[j] && c[j] >= d[j] && d[j] >= b[j]) {
            return false;
        }
    }
    true
}

/// Componentwise comparison of two points.
pub fn r1_compare(x: &EvaluationPoint, y: &EvaluationPoint, scale: &ScaleSpec) -> Result<Relation3> {
    check_dim(x, scale.n())?;
    check_dim(y, scale.n())?;
    Ok(Relation3::from_weak(
        weakly_above(x.values(), y.values()),
        weakly_above(y.values(), x.values()),
    ))
}

/// Compares two exchanges `pair1 = (a, b)` and `pair2 = (c, d)`; each pair
/// must satisfy `a >= b` componentwise.
pub fn r2_compare(
    pair1: (&EvaluationPoint, &EvaluationPoint),
    pair2: (&EvaluationPoint, &EvaluationPoint),
    scale: &ScaleSpec,
) -> Result<Relation3> {
    for p in [pair1.0, pair1.1, pair2.0, pair2.1] {
        check_dim(p, scale.n())?;
    }
    if !weakly_above(pair1.0.values(), pair1.1.values()) || !weakly_above(pair2.0.values(), pair2.1.values()) {
        return Err(Error::PairNotInR1);
    }
    let (a, b, c, d) = (pair1.0.values(), pair1.1.values(), pair2.0.values(), pair2.1.values());
    let z = scale.z();
    Ok(Relation3::from_weak(pair_geq(a, b, c, d, z), pair_geq(c, d, a, b, z)))
}

/// Sparse linear form over utility variables with small integer coefficients.
pub type LinearForm = Vec<(usize, i32)>;

fn canonical_form(terms: &[(usize, i32)]) -> LinearForm {
    let mut t = terms.to_vec();
    t.sort_by_key(|&(j, _)| j);
    let mut out: LinearForm = Vec::with_capacity(t.len());
    for (j, c) in t {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|&(_, c)| c != 0);
    out
}

/// Linear system describing the utility representations of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Distinct points in ascending order; always contains `0` and `1`.
    pub variables: Vec<EvaluationPoint>,
    pub zero: usize,
    pub one: usize,
    /// `form = 0`.
    pub equalities: Vec<LinearForm>,
    /// `form >= xi`, with the margin `xi` bound at solve time.
    pub margined: Vec<LinearForm>,
}

/// How the margin `xi` of the strict constraints is treated in an LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Fixed(f64),
    /// `xi` becomes an extra (last) LP variable in `[-2, 1]`.
    Free,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.equalities.len() + self.margined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, p: &EvaluationPoint) -> Option<usize> {
        self.variables.binary_search(p).ok()
    }

    /// Builds the LP `objective . u` (per-variable coefficients) over this system.
    pub fn to_lp(&self, sense: Sense, objective: &[f64], margin: Margin) -> LpProblem {
        let mut p = LpProblem::new(sense);
        for (j, _) in self.variables.iter().enumerate() {
            let (lo, hi) = if j == self.zero {
                (0.0, 0.0)
            } else if j == self.one {
                (1.0, 1.0)
            } else {
                (0.0, 1.0)
            };
            p.add_variable(format!("u{j}"), lo, hi);
        }
        let xi = match margin {
            Margin::Free => Some(p.add_variable("xi", -2.0, 1.0)),
            Margin::Fixed(_) => None,
        };
        p.set_objective(
            objective
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(j, &c)| (j, c))
                .collect(),
        );
        for form in &self.equalities {
            p.add_constraint(form.iter().map(|&(j, c)| (j, c as f64)).collect(), Relation::Eq, 0.0);
        }
        for form in &self.margined {
            let mut terms: Vec<(usize, f64)> = form.iter().map(|&(j, c)| (j, c as f64)).collect();
            let rhs = match (margin, xi) {
                (Margin::Fixed(v), _) => v,
                (Margin::Free, Some(x)) => {
                    terms.push((x, -1.0));
                    0.0
                }
                (Margin::Free, None) => unreachable!(),
            };
            p.add_constraint(terms, Relation::Ge, rhs);
        }
        p
    }

    /// Whether `u` satisfies every constraint at margin `xi` within `tol`.
    pub fn satisfied_by(&self, u: &[f64], xi: f64, tol: f64) -> bool {
        let eval = |f: &LinearForm| f.iter().map(|&(j, c)| c as f64 * u[j]).sum::<f64>();
        u.len() == self.variables.len()
            && (u[self.zero]).abs() <= tol
            && (u[self.one] - 1.0).abs() <= tol
            && u.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
            && self.equalities.iter().all(|f| eval(f).abs() <= tol)
            && self.margined.iter().all(|f| eval(f) >= xi - tol)
    }
}

/// Size limits for [`build_constraints`]. Exceeding one is an error; the
/// system is never silently subsampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintLimits {
    /// Maximum number of strictly ordered point pairs entering the `R2` scan.
    pub max_pairs: usize,
    pub max_constraints: usize,
}

impl Default for ConstraintLimits {
    fn default() -> Self {
        Self {
            max_pairs: 12_000,
            max_constraints: 4_000_000,
        }
    }
}

struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn from_rows(n: usize, rows: Vec<Vec<u64>>) -> Self {
        let words = n.div_ceil(64);
        let mut bits = Vec::with_capacity(n * words);
        for r in rows {
            debug_assert_eq!(r.len(), words);
            bits.extend(r);
        }
        Self { words, bits }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn transpose(&self, n: usize) -> Self {
        let mut rows = vec![vec![0u64; self.words]; n];
        for i in 0..n {
            for j in ones(self.row(i)) {
                rows[j][i / 64] |= 1 << (i % 64);
            }
        }
        Self::from_rows(n, rows)
    }
}

fn ones(row: &[u64]) -> impl Iterator<Item = usize> + '_ {
    row.iter().enumerate().flat_map(|(w, &word)| {
        let mut word = word;
        std::iter::from_fn(move || {
            if word == 0 {
                return None;
            }
            let t = word.trailing_zeros() as usize;
            word &= word - 1;
            Some(w * 64 + t)
        })
    })
}

fn intersects(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

/// Builds a strict relation matrix from a predicate, in parallel.
fn relation<F>(n: usize, pred: F) -> BitMatrix
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let words = n.div_ceil(64);
    let rows: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0u64; words];
            for j in 0..n {
                if i != j && pred(i, j) {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
            row
        })
        .collect();
    BitMatrix::from_rows(n, rows)
}

/// Covering pairs `(i, j)` of a strict partial order: no `k` with `i > k > j`.
fn covers(n: usize, strict: &BitMatrix) -> Vec<(usize, usize)> {
    let below = strict.transpose(n);
    (0..n)
        .into_par_iter()
        .map(|i| {
            ones(strict.row(i))
                .filter(|&j| !intersects(strict.row(i), below.row(j)))
                .map(|j| (i, j))
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Constraint system for the representations of `points` (plus `0` and `1`).
pub fn build_constraints(
    points: &[EvaluationPoint],
    scale: &ScaleSpec,
    limits: ConstraintLimits,
) -> Result<ConstraintSet> {
    let n = scale.n();
    let z = scale.z();
    for p in points {
        check_dim(p, n)?;
        if !p.in_unit_cube() {
            return Err(Error::InvalidArgument(format!(
                "point {:?} lies outside [0,1]^{n}",
                p.values()
            )));
        }
    }
    let vars: Vec<EvaluationPoint> = points
        .iter()
        .cloned()
        .chain([EvaluationPoint::zeros(n), EvaluationPoint::ones(n)])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = vars.len();
    let zero = vars.binary_search(&EvaluationPoint::zeros(n)).expect("anchor present");
    let one = vars.binary_search(&EvaluationPoint::ones(n)).expect("anchor present");
    let v = |i: usize| vars[i].values();

    // Strict componentwise order; points are distinct so weak == strict off the diagonal.
    let r1 = relation(m, |i, j| weakly_above(v(i), v(j)));
    let mut margined: BTreeSet<LinearForm> = covers(m, &r1)
        .into_iter()
        .map(|(i, j)| canonical_form(&[(i, 1), (j, -1)]))
        .collect();
    let mut equalities: BTreeSet<LinearForm> = BTreeSet::new();

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| ones(r1.row(i)).map(move |j| (i, j))).collect();
    if pairs.len() > limits.max_pairs {
        return Err(Error::ConstraintCap {
            what: "strictly ordered point pairs",
            count: pairs.len(),
            limit: limits.max_pairs,
        });
    }
    // Ordinal-only systems carry no R2 information beyond monotonicity.
    if z > 0 {
        let e = pairs.len();
        let ge = relation(e, |p, q| {
            let ((a, b), (c, d)) = (pairs[p], pairs[q]);
            pair_geq(v(a), v(b), v(c), v(d), z)
        });
        let mut parent: Vec<usize> = (0..e).collect();
        for p in 0..e {
            for q in ones(ge.row(p)).filter(|&q| q > p) {
                if ge.get(q, p) {
                    let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                    if rp != rq {
                        parent[rp.max(rq)] = rp.min(rq);
                    }
                }
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); e];
        for p in 0..e {
            let r = find(&mut parent, p);
            members[r].push(p);
        }
        let reps: Vec<usize> = (0..e).filter(|&p| !members[p].is_empty()).collect();
        let diff = |p: usize, sign: i32| {
            let (a, b) = pairs[p];
            [(a, sign), (b, -sign)]
        };
        for &r in &reps {
            for &p in &members[r][1..] {
                let mut f = canonical_form(&[diff(r, 1), diff(p, -1)].concat());
                if f.first().is_some_and(|&(_, c)| c < 0) {
                    f.iter_mut().for_each(|t| t.1 = -t.1);
                }
                if !f.is_empty() {
                    equalities.insert(f);
                }
            }
        }
        let k = reps.len();
        let strict = relation(k, |i, j| {
            let (p, q) = (reps[i], reps[j]);
            ge.get(p, q) && !ge.get(q, p)
        });
        let implied_by_r1 = |p: usize, q: usize| {
            let ((a, b), (c, d)) = (pairs[p], pairs[q]);
            weakly_above(v(a), v(c)) && weakly_above(v(d), v(b))
        };
        for (i, j) in covers(k, &strict) {
            let (rp, rq) = (reps[i], reps[j]);
            let implied = members[rp]
                .iter()
                .any(|&p| members[rq].iter().any(|&q| implied_by_r1(p, q)));
            if !implied {
                margined.insert(canonical_form(&[diff(rp, 1), diff(rq, -1)].concat()));
            }
            if margined.len() + equalities.len() > limits.max_constraints {
                return Err(Error::ConstraintCap {
                    what: "constraints",
                    count: margined.len() + equalities.len(),
                    limit: limits.max_constraints,
                });
            }
        }
    }

    Ok(ConstraintSet {
        variables: vars,
        zero,
        one,
        equalities: equalities.into_iter().collect(),
        margined: margined.into_iter().collect(),
    })
}

/// Largest feasible margin `xi*` of a constraint system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Granularity {
    pub xi_star: f64,
}

impl Granularity {
    /// `mu_delta = delta * xi*`.
    pub fn mu_of(&self, delta: f64) -> f64 {
        delta * self.xi_star
    }
}

/// Maximises the common margin of all strict constraints.
///
/// Fails with [`Error::Inconsistent`] when the system admits no utility at any
/// nonnegative margin.
pub fn granularity(cs: &ConstraintSet) -> Result<Granularity> {
    let objective = vec![0.0; cs.variables.len()];
    let mut problem = cs.to_lp(Sense::Maximize, &objective, Margin::Free);
    let xi = problem.variables.len() - 1;
    problem.set_objective(vec![(xi, 1.0)]);
    let sol = lp::solve(&problem);
    match sol.status {
        lp::LpStatus::Optimal => {
            let v = sol.objective_value;
            if v < -crate::gsd::ZERO_BAND {
                Err(Error::Inconsistent)
            } else {
                Ok(Granularity { xi_star: v.max(0.0) })
            }
        }
        lp::LpStatus::Infeasible => Err(Error::Inconsistent),
        status => Err(Error::lp(status, sol.diagnostics.note.unwrap_or_default())),
    }
}

/// True iff some utility satisfies every strict constraint with a positive margin.
pub fn check_consistency(cs: &ConstraintSet) -> bool {
    matches!(granularity(cs), Ok(g) if g.xi_star > crate::gsd::ZERO_BAND)
}
