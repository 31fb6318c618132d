use serde::{Deserialize, Serialize};

use super::posy::{Monomial, PosyMatrix, Posynomial, VarId, VarTable};
use crate::error::{Error, Result};

/// Standard-form GP: minimize `f₀` subject to `fᵢ ≤ 1` and `gⱼ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricProgram {
    pub vars: VarTable,
    pub objective: Posynomial,
    pub inequalities: Vec<Posynomial>,
    pub inequality_labels: Vec<String>,
    pub equalities: Vec<Monomial>,
    pub equality_labels: Vec<String>,
}

impl GeometricProgram {
    pub fn new(vars: VarTable, objective: Posynomial) -> Self {
        Self {
            vars,
            objective,
            inequalities: Vec::new(),
            inequality_labels: Vec::new(),
            equalities: Vec::new(),
            equality_labels: Vec::new(),
        }
    }

    pub fn add_le(&mut self, label: impl Into<String>, p: Posynomial) {
        self.inequalities.push(p);
        self.inequality_labels.push(label.into());
    }

    pub fn add_eq(&mut self, label: impl Into<String>, m: Monomial) {
        self.equalities.push(m);
        self.equality_labels.push(label.into());
    }

    /// One scalar row per nonzero entry, row-major.
    pub fn add_matrix_le(&mut self, label: &str, m: &PosyMatrix) {
        for (i, row) in m.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                if let Some(p) = p {
                    self.add_le(format!("{label}[{i},{j}]"), p.clone());
                }
            }
        }
    }

    pub fn add_matrix_eq(&mut self, label: &str, m: &[Vec<Option<Monomial>>]) {
        for (i, row) in m.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                if let Some(g) = g {
                    self.add_eq(format!("{label}[{i},{j}]"), g.clone());
                }
            }
        }
    }

    /// `lb ≤ x ≤ ub` as the monomial rows `lb/x ≤ 1` and `x/ub ≤ 1`.
    pub fn add_bounds(&mut self, id: VarId, lb: Option<f64>, ub: Option<f64>) -> Result<()> {
        let name = self.vars.name(id).to_string();
        if let Some(lb) = lb {
            self.add_le(format!("lb:{name}"), Monomial::new(lb, [(id, -1.0)])?.into());
        }
        if let Some(ub) = ub {
            self.add_le(format!("ub:{name}"), Monomial::new(1.0 / ub, [(id, 1.0)])?.into());
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        let check = |p: &Monomial| -> Result<()> {
            for (id, _) in p.exponents() {
                if id.0 >= n {
                    return Err(Error::MalformedProgram(format!("unregistered variable {id}")));
                }
            }
            Ok(())
        };
        for t in self.objective.terms() {
            check(t)?;
        }
        for p in &self.inequalities {
            for t in p.terms() {
                check(t)?;
            }
        }
        for g in &self.equalities {
            check(g)?;
        }
        if self.inequality_labels.len() != self.inequalities.len() || self.equality_labels.len() != self.equalities.len() {
            return Err(Error::MalformedProgram("label count differs from constraint count".into()));
        }
        Ok(())
    }

    /// Largest violation `max(fᵢ − 1, |gⱼ − 1|)` at `values`.
    pub fn max_violation(&self, values: &[f64]) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for p in &self.inequalities {
            worst = worst.max(p.evaluate(values)? - 1.0);
        }
        for g in &self.equalities {
            worst = worst.max((g.evaluate(values)? - 1.0).abs());
        }
        Ok(worst)
    }
}

/// Builds a scalar program from matrix-valued constraints, one row per entry.
pub fn flatten(
    vars: VarTable,
    objective: Posynomial,
    inequalities: &[(&str, PosyMatrix)],
    equalities: &[(&str, Vec<Vec<Option<Monomial>>>)],
) -> GeometricProgram {
    let mut gp = GeometricProgram::new(vars, objective);
    for (label, m) in inequalities {
        gp.add_matrix_le(label, m);
    }
    for (label, m) in equalities {
        gp.add_matrix_eq(label, m);
    }
    gp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_counts_entries() {
        let mut vars = VarTable::new();
        let x = vars.register("x").unwrap();
        let p = || Some(Posynomial::from(Monomial::var(x)));
        let gp = flatten(vars.clone(), Monomial::var(x).into(), &[("m", vec![vec![p(), p()], vec![p(), p()]])], &[]);
        assert_eq!(gp.inequalities.len(), 4);
        assert_eq!(gp.inequality_labels[2], "m[1,0]");
        let gp = flatten(vars, Monomial::var(x).into(), &[("m", vec![vec![p(), None]])], &[]);
        assert_eq!(gp.inequalities.len(), 1);
        assert!(gp.validate().is_ok());
    }

    #[test]
    fn unregistered_variables_are_rejected() {
        let vars = VarTable::new();
        let gp = GeometricProgram::new(vars, Monomial::var(VarId(3)).into());
        assert!(matches!(gp.validate(), Err(Error::MalformedProgram(_))));
    }
}
