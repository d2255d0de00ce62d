use std::fmt::Write;

use super::{LpProblem, Relation, Sense};

fn sanitize(name: &str, j: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    // LP-format names may not start with a digit; index suffix keeps them unique.
    format!("x{j}_{cleaned}")
}

fn write_terms(out: &mut String, names: &[String], terms: &[(usize, f64)]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names[0]);
        return;
    }
    for &(j, c) in terms {
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", c.abs(), names[j]);
    }
}

/// Renders a problem in CPLEX LP text format, one problem per file, for
/// cross-checking against external solvers.
pub fn write_lp_format(problem: &LpProblem) -> String {
    let names: Vec<String> = if problem.variables.is_empty() {
        vec!["dummy".into()]
    } else {
        problem
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| sanitize(&v.name, j))
            .collect()
    };
    let mut out = String::new();
    out.push_str(match problem.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, &names, &problem.objective);
    if problem.objective_constant != 0.0 {
        let _ = write!(out, " + {}", problem.objective_constant);
    }
    out.push_str("\nSubject To\n");
    for (i, con) in problem.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_terms(&mut out, &names, &con.terms);
        let op = match con.relation {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", con.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in problem.variables.iter().zip(&names) {
        if v.upper.is_finite() {
            let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
        } else {
            let _ = writeln!(out, " {name} >= {}", v.lower);
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut p = LpProblem::new(Sense::Minimize);
        let a = p.add_variable("u(0.5)", 0.0, 1.0);
        let b = p.add_variable("xi", -2.0, f64::INFINITY);
        p.set_objective(vec![(a, 0.5), (b, -1.0)]);
        p.add_constraint(vec![(a, 1.0), (b, -1.0)], Relation::Ge, 0.0);
        let text = write_lp_format(&p);
        assert!(text.starts_with("Minimize\n obj: + 0.5 x0_u_0_5_ - 1 x1_xi\n"));
        assert!(text.contains(" c0: + 1 x0_u_0_5_ - 1 x1_xi >= 0\n"));
        assert!(text.contains(" 0 <= x0_u_0_5_ <= 1\n"));
        assert!(text.contains(" x1_xi >= -2\n"));
        assert!(text.ends_with("End\n"));
    }
}
