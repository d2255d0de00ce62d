//! Dense tableau simplex applied to the dual of a bounded-variable LP.
//!
//! Primal (after shifting every variable to a zero lower bound and turning
//! `<=` rows into `>=` rows):
//!
//! ```text
//! min c.x   s.t.  G x >= g,  E x = e,  0 <= x <= U
//! ```
//!
//! Dual, one row per primal variable:
//!
//! ```text
//! max g.y + e.(w+ - w-) - U.t   s.t.  G'y + E'(w+ - w-) - t + sigma = c,  all >= 0
//! ```
//!
//! When every `U_j` is finite the slack `sigma_j` or the bound column `t_j`
//! gives a feasible starting basis directly; otherwise an artificial column
//! is added and a phase-one pass removes it.

use super::{LpDiagnostics, LpProblem, LpSolution, LpStatus, Relation, Sense, FEASIBILITY_TOL, OPTIMALITY_TOL};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const ZERO_TOL: f64 = 1e-14;
const DEGENERATE_STREAK: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Ge(usize),
    EqPlus(usize),
    EqMinus(usize),
    Bound(usize),
    Slack(usize),
    Artificial(usize),
}

struct Normalized {
    n: usize,
    lower: Vec<f64>,
    /// Upper bound after the shift; `INFINITY` when absent.
    width: Vec<f64>,
    cost: Vec<f64>,
    ge: Vec<(Vec<(usize, f64)>, f64)>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
}

fn merge_terms(terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut t: Vec<(usize, f64)> = terms.to_vec();
    t.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
    for (j, c) in t {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

fn normalize(p: &LpProblem) -> Normalized {
    let n = p.variables.len();
    let lower: Vec<f64> = p.variables.iter().map(|v| v.lower).collect();
    let width = p.variables.iter().map(|v| v.upper - v.lower).collect();
    let mut cost = vec![0.0; n];
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    for &(j, c) in &p.objective {
        cost[j] += sign * c;
    }
    let mut ge = Vec::new();
    let mut eq = Vec::new();
    for con in &p.constraints {
        let terms = merge_terms(&con.terms);
        let shift: f64 = terms.iter().map(|&(j, c)| c * lower[j]).sum();
        let rhs = con.rhs - shift;
        match con.relation {
            Relation::Ge => ge.push((terms, rhs)),
            Relation::Le => ge.push((terms.into_iter().map(|(j, c)| (j, -c)).collect(), -rhs)),
            Relation::Eq => eq.push((terms, rhs)),
        }
    }
    Normalized {
        n,
        lower,
        width,
        cost,
        ge,
        eq,
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs of the current phase (maximisation: improving when > 0).
    d: Vec<f64>,
    z: f64,
    banned: Vec<bool>,
    iterations: usize,
    scratch: Vec<f64>,
    nz: Vec<usize>,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    fn reset_costs(&mut self, profit: &[f64]) {
        self.d.copy_from_slice(profit);
        self.z = 0.0;
        for r in 0..self.rows {
            let pb = profit[self.basis[r]];
            if pb == 0.0 {
                continue;
            }
            let row = &self.a[r * self.cols..(r + 1) * self.cols];
            for (d, &x) in self.d.iter_mut().zip(row) {
                *d -= pb * x;
            }
            self.z += pb * self.rhs[r];
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.a[pr * cols + pc];
        self.scratch.clear();
        self.nz.clear();
        for c in 0..cols {
            let v = self.a[pr * cols + c] * inv;
            let v = if v.abs() < ZERO_TOL { 0.0 } else { v };
            self.a[pr * cols + c] = v;
            self.scratch.push(v);
            if v != 0.0 {
                self.nz.push(c);
            }
        }
        self.a[pr * cols + pc] = 1.0;
        self.scratch[pc] = 1.0;
        self.rhs[pr] *= inv;
        let theta = self.rhs[pr];
        let sparse = self.nz.len() * 3 < cols;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.a[r * cols + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[r * cols..(r + 1) * cols];
            if sparse {
                for &c in &self.nz {
                    let v = row[c] - f * self.scratch[c];
                    row[c] = if v.abs() < ZERO_TOL { 0.0 } else { v };
                }
            } else {
                for (x, &p) in row.iter_mut().zip(&self.scratch) {
                    let v = *x - f * p;
                    *x = if v.abs() < ZERO_TOL { 0.0 } else { v };
                }
            }
            row[pc] = 0.0;
            self.rhs[r] -= f * theta;
            if self.rhs[r].abs() < ZERO_TOL {
                self.rhs[r] = 0.0;
            }
        }
        let f = self.d[pc];
        if f != 0.0 {
            for &c in &self.nz {
                self.d[c] -= f * self.scratch[c];
            }
            self.d[pc] = 0.0;
            self.z += f * theta;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    fn run(&mut self, limit: usize) -> Outcome {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= limit {
                return Outcome::IterationLimit;
            }
            let bland = degenerate > DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = COST_TOL;
            for c in 0..self.cols {
                if self.banned[c] || self.d[c] <= COST_TOL {
                    continue;
                }
                if bland {
                    enter = Some(c);
                    break;
                }
                if self.d[c] > best {
                    best = self.d[c];
                    enter = Some(c);
                }
            }
            let Some(pc) = enter else {
                return Outcome::Optimal;
            };
            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..self.rows {
                let v = self.at(r, pc);
                if v <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs[r].max(0.0) / v;
                let better = match leave {
                    None => true,
                    Some((lr, lratio, lv)) => {
                        if ratio < lratio - 1e-12 {
                            true
                        } else if ratio <= lratio + 1e-12 {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                v > lv || (v == lv && self.basis[r] < self.basis[lr])
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio, v));
                }
            }
            let Some((pr, ratio, _)) = leave else {
                return Outcome::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }
}

/// Solves `B' pi = rhs` for the dense square matrix `b` (column-major by basis
/// position), with partial pivoting. Returns `None` if singular.
fn solve_transposed(n: usize, cols: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    // Row i of B' is column i of B.
    let mut m: Vec<f64> = Vec::with_capacity(n * (n + 1));
    for i in 0..n {
        m.extend_from_slice(&cols[i]);
        m.push(rhs[i]);
    }
    gauss(n, &mut m)
}

fn solve_direct(n: usize, cols: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let mut m = vec![0.0; n * (n + 1)];
    for (k, col) in cols.iter().enumerate() {
        for i in 0..n {
            m[i * (n + 1) + k] = col[i];
        }
    }
    for i in 0..n {
        m[i * (n + 1) + n] = rhs[i];
    }
    gauss(n, &mut m)
}

fn gauss(n: usize, m: &mut [f64]) -> Option<Vec<f64>> {
    let w = n + 1;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[i * w + k].abs() > m[p * w + k].abs() {
                p = i;
            }
        }
        if m[p * w + k].abs() < 1e-12 {
            return None;
        }
        if p != k {
            for c in 0..w {
                m.swap(k * w + c, p * w + c);
            }
        }
        let piv = m[k * w + k];
        for i in k + 1..n {
            let f = m[i * w + k] / piv;
            if f == 0.0 {
                continue;
            }
            for c in k..w {
                m[i * w + c] -= f * m[k * w + c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = m[k * w + n];
        for c in k + 1..n {
            s -= m[k * w + c] * x[c];
        }
        x[k] = s / m[k * w + k];
    }
    Some(x)
}

pub(super) fn solve_via_dual(problem: &LpProblem) -> LpSolution {
    let norm = normalize(problem);
    let n = norm.n;

    let mut kinds = Vec::new();
    for i in 0..norm.ge.len() {
        kinds.push(ColKind::Ge(i));
    }
    for k in 0..norm.eq.len() {
        kinds.push(ColKind::EqPlus(k));
        kinds.push(ColKind::EqMinus(k));
    }
    let mut bound_col = vec![None; n];
    for j in 0..n {
        if norm.width[j].is_finite() {
            bound_col[j] = Some(kinds.len());
            kinds.push(ColKind::Bound(j));
        }
    }
    let slack_base = kinds.len();
    for j in 0..n {
        kinds.push(ColKind::Slack(j));
    }
    let mut artificial_rows = Vec::new();
    for j in 0..n {
        if norm.cost[j] < 0.0 && bound_col[j].is_none() {
            artificial_rows.push(j);
            kinds.push(ColKind::Artificial(j));
        }
    }
    let cols = kinds.len();

    // Original dual columns (one entry per primal variable) and profits.
    let mut a = vec![0.0; n * cols];
    let mut profit = vec![0.0; cols];
    for (c, kind) in kinds.iter().enumerate() {
        match *kind {
            ColKind::Ge(i) => {
                for &(j, v) in &norm.ge[i].0 {
                    a[j * cols + c] += v;
                }
                profit[c] = norm.ge[i].1;
            }
            ColKind::EqPlus(k) => {
                for &(j, v) in &norm.eq[k].0 {
                    a[j * cols + c] += v;
                }
                profit[c] = norm.eq[k].1;
            }
            ColKind::EqMinus(k) => {
                for &(j, v) in &norm.eq[k].0 {
                    a[j * cols + c] -= v;
                }
                profit[c] = -norm.eq[k].1;
            }
            ColKind::Bound(j) => {
                a[j * cols + c] = -1.0;
                profit[c] = -norm.width[j];
            }
            ColKind::Slack(j) => a[j * cols + c] = 1.0,
            ColKind::Artificial(_) => {}
        }
    }
    let original_columns = |c: usize| -> Vec<f64> {
        match kinds[c] {
            ColKind::Artificial(j) => {
                let mut v = vec![0.0; n];
                // Artificial sits in a negated row, so its original column is -e_j.
                v[j] = -1.0;
                v
            }
            _ => (0..n).map(|r| a[r * cols + c]).collect(),
        }
    };

    let mut t = Tableau {
        rows: n,
        cols,
        a: a.clone(),
        rhs: norm.cost.clone(),
        basis: vec![0; n],
        d: vec![0.0; cols],
        z: 0.0,
        banned: vec![false; cols],
        iterations: 0,
        scratch: Vec::with_capacity(cols),
        nz: Vec::with_capacity(cols),
    };
    let mut art_iter = artificial_rows.iter().enumerate();
    let mut next_art = art_iter.next();
    for j in 0..n {
        if norm.cost[j] >= 0.0 {
            t.basis[j] = slack_base + j;
            continue;
        }
        for c in 0..cols {
            t.a[j * cols + c] = -t.a[j * cols + c];
        }
        t.rhs[j] = -t.rhs[j];
        if let Some(bc) = bound_col[j] {
            t.basis[j] = bc;
        } else {
            let (k, &row) = next_art.expect("artificial column allocated for this row");
            debug_assert_eq!(row, j);
            let col = slack_base + n + k;
            t.a[j * cols + col] = 1.0;
            t.basis[j] = col;
            next_art = art_iter.next();
        }
    }

    let limit = 10_000usize.max(20 * (n + cols));
    let fail = |status: LpStatus, iterations: usize, note: &str| LpSolution {
        status,
        objective_value: f64::NAN,
        assignment: Vec::new(),
        diagnostics: LpDiagnostics {
            iterations,
            note: Some(note.to_string()),
            ..Default::default()
        },
    };

    if !artificial_rows.is_empty() {
        let phase1: Vec<f64> = kinds
            .iter()
            .map(|k| if matches!(k, ColKind::Artificial(_)) { -1.0 } else { 0.0 })
            .collect();
        t.reset_costs(&phase1);
        match t.run(limit) {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return fail(LpStatus::NumericalFailure, t.iterations, "phase one reported unbounded")
            }
            Outcome::IterationLimit => {
                return fail(LpStatus::NumericalFailure, t.iterations, "iteration limit in phase one")
            }
        }
        if t.z < -1e-9 {
            return fail(
                LpStatus::Unbounded,
                t.iterations,
                "dual infeasible: the primal is unbounded (or infeasible)",
            );
        }
        for (c, k) in kinds.iter().enumerate() {
            if matches!(k, ColKind::Artificial(_)) {
                t.banned[c] = true;
            }
        }
        // Drive basic artificials out where a non-artificial column can replace them.
        for r in 0..n {
            if !t.banned[t.basis[r]] {
                continue;
            }
            if let Some(c) = (0..cols).find(|&c| !t.banned[c] && t.at(r, c).abs() > PIVOT_TOL) {
                t.pivot(r, c);
            }
        }
    }

    t.reset_costs(&profit);
    match t.run(limit) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return fail(
                LpStatus::Infeasible,
                t.iterations,
                "dual unbounded: constraints are infeasible",
            )
        }
        Outcome::IterationLimit => return fail(LpStatus::NumericalFailure, t.iterations, "iteration limit reached"),
    }

    // Primal values are the simplex multipliers of the optimal basis. Recompute
    // them from the original columns so drift in the tableau does not leak in.
    let basis_cols: Vec<Vec<f64>> = t.basis.iter().map(|&c| original_columns(c)).collect();
    let profit_b: Vec<f64> = t
        .basis
        .iter()
        .map(|&c| if t.banned[c] { 0.0 } else { profit[c] })
        .collect();
    let (pi, dual_obj, refined) = match (
        solve_transposed(n, &basis_cols, &profit_b),
        solve_direct(n, &basis_cols, &norm.cost),
    ) {
        (Some(pi), Some(xb)) => {
            let z: f64 = profit_b.iter().zip(&xb).map(|(p, x)| p * x).sum();
            (pi, z, true)
        }
        _ => {
            let pi = (0..n).map(|j| -t.d[slack_base + j]).collect();
            (pi, t.z, false)
        }
    };

    let assignment: Vec<f64> = (0..n)
        .map(|j| {
            let x = pi[j].max(0.0).min(norm.width[j]);
            let v = norm.lower[j] + x;
            // Keep exact bound values exact (fixed anchors stay 0 and 1).
            let var = &problem.variables[j];
            v.max(var.lower).min(var.upper)
        })
        .collect();
    let objective_value = problem.evaluate(&assignment);
    let shift: f64 = norm.cost.iter().zip(&norm.lower).map(|(c, l)| c * l).sum();
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let dual_objective = sign * (dual_obj + shift) + problem.objective_constant;
    let gap = (objective_value - dual_objective).abs();
    let max_violation = problem.max_violation(&assignment);
    let scale = 1.0 + objective_value.abs();
    let certified = max_violation <= FEASIBILITY_TOL && gap <= OPTIMALITY_TOL * scale;
    LpSolution {
        status: if certified {
            LpStatus::Optimal
        } else {
            LpStatus::NumericalFailure
        },
        objective_value,
        assignment,
        diagnostics: LpDiagnostics {
            iterations: t.iterations,
            max_violation,
            dual_objective: Some(dual_objective),
            duality_gap: Some(gap),
            note: if certified {
                (!refined).then(|| "basis refinement unavailable; multipliers read from tableau".into())
            } else {
                Some(format!(
                    "certificate failed: max violation {max_violation:e}, duality gap {gap:e}"
                ))
            },
        },
    }
}
