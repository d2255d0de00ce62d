//! Small dense linear programs.
//!
//! Problems here have few variables (one utility per distinct evaluation
//! point) and many sparse constraints, so [`solve`] runs the simplex method on
//! the dual, whose tableau has one row per primal variable. The primal
//! assignment is read back from the optimal basis and certified by
//! re-substitution and by comparing primal and dual objective values.

mod format;
mod simplex;

pub use format::write_lp_format;

use serde::{Deserialize, Serialize};

/// Absolute feasibility tolerance used when certifying a solution.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Tolerance on the gap between the primal and dual objective values.
pub const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The solver stopped (iteration limit) or could not certify its answer.
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    /// May be `f64::INFINITY`.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub constraints: Vec<LinearConstraint>,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = terms;
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(LinearConstraint { terms, relation, rhs });
    }

    /// Checks references and bounds. Lower bounds must be finite.
    pub fn check(&self) -> Result<(), String> {
        let nv = self.variables.len();
        for (j, v) in self.variables.iter().enumerate() {
            if !v.lower.is_finite() {
                return Err(format!("variable {j} ('{}') needs a finite lower bound", v.name));
            }
            if v.upper.is_nan() || v.upper < v.lower {
                return Err(format!("variable {j} ('{}') has empty bounds", v.name));
            }
        }
        let bad_term = |&(j, c): &(usize, f64)| j >= nv || !c.is_finite();
        if self.objective.iter().any(bad_term) || !self.objective_constant.is_finite() {
            return Err("objective references an undeclared variable or a non-finite coefficient".into());
        }
        for (i, con) in self.constraints.iter().enumerate() {
            if con.terms.iter().any(bad_term) || !con.rhs.is_finite() {
                return Err(format!("constraint {i} is malformed"));
            }
        }
        Ok(())
    }

    /// Objective value at `x`, including the constant.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xj) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xj).max(xj - v.upper);
        }
        for con in &self.constraints {
            let lhs: f64 = con.terms.iter().map(|&(j, c)| c * x[j]).sum();
            let viol = match con.relation {
                Relation::Ge => con.rhs - lhs,
                Relation::Le => lhs - con.rhs,
                Relation::Eq => (lhs - con.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostics {
    pub iterations: usize,
    /// Largest constraint or bound violation of the returned assignment.
    pub max_violation: f64,
    /// Objective value of the dual certificate, when one exists.
    pub dual_objective: Option<f64>,
    /// `|primal - dual|` at the returned assignment.
    pub duality_gap: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective evaluated at `assignment` (meaningful when optimal).
    pub objective_value: f64,
    pub assignment: Vec<f64>,
    pub diagnostics: LpDiagnostics,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves `problem`. Identical inputs give bitwise identical outputs.
pub fn solve(problem: &LpProblem) -> LpSolution {
    if let Err(msg) = problem.check() {
        return LpSolution {
            status: LpStatus::NumericalFailure,
            objective_value: f64::NAN,
            assignment: Vec::new(),
            diagnostics: LpDiagnostics {
                note: Some(format!("malformed problem: {msg}")),
                ..Default::default()
            },
        };
    }
    simplex::solve_via_dual(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn fixed_endpoints_give_unit_difference() {
        let mut p = LpProblem::new(Sense::Minimize);
        let u0 = p.add_variable("u0", 0.0, 0.0);
        let u1 = p.add_variable("u1", 1.0, 1.0);
        p.set_objective(vec![(u1, 1.0), (u0, -1.0)]);
        let sol = solve(&p);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective_value, 1.0);
    }

    #[test]
    fn single_active_margin() {
        let mut p = LpProblem::new(Sense::Minimize);
        let u0 = p.add_variable("u0", 0.0, 0.0);
        let ux = p.add_variable("ux", 0.0, 1.0);
        let u1 = p.add_variable("u1", 1.0, 1.0);
        p.set_objective(vec![(ux, 1.0)]);
        p.add_constraint(vec![(ux, 1.0), (u0, -1.0)], Relation::Ge, 0.3);
        p.add_constraint(vec![(u1, 1.0), (ux, -1.0)], Relation::Ge, 0.0);
        let sol = solve(&p);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(approx(sol.objective_value, 0.3), "{}", sol.objective_value);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut p = LpProblem::new(Sense::Minimize);
        let a = p.add_variable("a", 0.0, 1.0);
        p.set_objective(vec![(a, 1.0)]);
        p.add_constraint(vec![(a, 1.0)], Relation::Eq, 0.2);
        p.add_constraint(vec![(a, 1.0)], Relation::Eq, 0.4);
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_without_upper_bound() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_variable("x", 0.0, f64::INFINITY);
        let y = p.add_variable("y", 0.0, f64::INFINITY);
        p.set_objective(vec![(x, 1.0), (y, 1.0)]);
        p.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_variable("x", 0.0, f64::INFINITY);
        let y = p.add_variable("y", 0.0, f64::INFINITY);
        p.set_objective(vec![(x, 3.0), (y, 5.0)]);
        p.add_constraint(vec![(x, 1.0)], Relation::Le, 4.0);
        p.add_constraint(vec![(y, 2.0)], Relation::Le, 12.0);
        p.add_constraint(vec![(x, 3.0), (y, 2.0)], Relation::Le, 18.0);
        let sol = solve(&p);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(approx(sol.objective_value, 36.0));
        assert!(approx(sol.assignment[x], 2.0) && approx(sol.assignment[y], 6.0));
        assert!(sol.diagnostics.duality_gap.unwrap() < OPTIMALITY_TOL);
    }

    #[test]
    fn shifted_lower_bounds_and_objective_constant() {
        // min x + y + 2 with x in [1, 3], y in [-2, 5], x + y >= 0.5
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_variable("x", 1.0, 3.0);
        let y = p.add_variable("y", -2.0, 5.0);
        p.objective_constant = 2.0;
        p.set_objective(vec![(x, 1.0), (y, 1.0)]);
        p.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 0.5);
        let sol = solve(&p);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(approx(sol.objective_value, 2.5));
        assert!(sol.diagnostics.max_violation <= FEASIBILITY_TOL);
    }

    #[test]
    fn malformed_problem_is_reported() {
        let mut p = LpProblem::new(Sense::Minimize);
        p.add_variable("x", 0.0, 1.0);
        p.set_objective(vec![(3, 1.0)]);
        let sol = solve(&p);
        assert_eq!(sol.status, LpStatus::NumericalFailure);
    }
}
