//! Linear programs over bounded variables, plus a self-contained solver.
//!
//! Problems are stated as `min c'x  s.t.  A x = b,  lower <= x <= upper`,
//! with infinite bounds allowed. Inequality rows are accepted by the
//! builder and turned into equalities with named slack variables, so the
//! solver only ever sees the equality form.

mod simplex;

use std::fmt;
use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("variable {index} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("variable {index} has non-finite cost {cost}")]
    InvalidCost { index: usize, cost: f64 },
    #[error("row {row} has non-finite right-hand side {rhs}")]
    InvalidRhs { row: usize, rhs: f64 },
    #[error("row {row} references unknown variable {index}")]
    UnknownVariable { row: usize, index: usize },
    #[error("row {row} has non-finite coefficient on variable {index}")]
    InvalidCoefficient { row: usize, index: usize },
    #[error("variable range {start}..{end} is out of bounds for {vars} variables")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        vars: usize,
    },
    #[error("penalty weight must be finite and non-negative, got {weight}")]
    InvalidWeight { weight: f64 },
}

/// Terminal state of a solve. `Infeasible` and `Unbounded` are ordinary
/// outcomes, not errors; `NumericalFailure` means the solver could not
/// certify any of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::NumericalFailure => "numerical-failure",
        })
    }
}

/// Solve outcome. `x` and `objective` are populated only when the status
/// is [`LpStatus::Optimal`]; the objective is NaN otherwise.
#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Option<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

/// Solver tolerances. `feas_tol` bounds the equality residual and bound
/// violations of a reported optimum; `opt_tol` is the reduced-cost
/// threshold for optimality, scaled by the objective magnitude.
#[derive(Debug, Clone)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Pivot cap; `None` picks a generous default from the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iterations: None,
        }
    }
}

/// Equality-constrained LP with per-variable bounds.
///
/// Rows may list a variable more than once; coefficients are summed.
/// Variables carry names purely for diagnostics (dumps, error messages).
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.costs.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.costs[var] = cost;
    }

    /// Pins a variable to an exact value by collapsing its bounds.
    pub fn fix_var(&mut self, var: usize, value: f64) {
        self.lower[var] = value;
        self.upper[var] = value;
    }

    /// Replaces both bounds of a variable.
    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_eq(&mut self, coefficients: &[(usize, f64)], rhs: f64) {
        self.rows.push(coefficients.to_vec());
        self.rhs.push(rhs);
    }

    /// Adds `coefficients . x <= rhs` via a non-negative slack variable.
    pub fn add_le(&mut self, coefficients: &[(usize, f64)], rhs: f64) {
        let slack = self.add_var(
            format!("slack_r{}", self.rows.len()),
            0.0,
            f64::INFINITY,
            0.0,
        );
        let mut row = coefficients.to_vec();
        row.push((slack, 1.0));
        self.add_eq(&row, rhs);
    }

    /// Adds `coefficients . x >= rhs` via a non-negative surplus variable.
    pub fn add_ge(&mut self, coefficients: &[(usize, f64)], rhs: f64) {
        let surplus = self.add_var(
            format!("surplus_r{}", self.rows.len()),
            0.0,
            f64::INFINITY,
            0.0,
        );
        let mut row = coefficients.to_vec();
        row.push((surplus, -1.0));
        self.add_eq(&row, rhs);
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cost(&self, var: usize) -> f64 {
        self.costs[var]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, index: usize) -> &[(usize, f64)] {
        &self.rows[index]
    }

    /// Dense constraint matrix; duplicate indices within a row accumulate.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.num_rows(), self.num_vars());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        a
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (index, (&lo, &hi)) in self.lower.iter().zip(self.upper.iter()).enumerate() {
            let ordered = lo <= hi && lo < f64::INFINITY && hi > f64::NEG_INFINITY;
            if lo.is_nan() || hi.is_nan() || !ordered {
                return Err(LpError::InvalidBounds {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        for (index, &cost) in self.costs.iter().enumerate() {
            if !cost.is_finite() {
                return Err(LpError::InvalidCost { index, cost });
            }
        }
        for (row, &rhs) in self.rhs.iter().enumerate() {
            if !rhs.is_finite() {
                return Err(LpError::InvalidRhs { row, rhs });
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j >= self.num_vars() {
                    return Err(LpError::UnknownVariable { row: i, index: j });
                }
                if !v.is_finite() {
                    return Err(LpError::InvalidCoefficient { row: i, index: j });
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump in LP interchange style, for offline inspection.
    pub fn write_lp_format<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let ident = |name: &str, fallback: String| -> String {
            let cleaned: String = name
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit()) {
                fallback
            } else {
                cleaned
            }
        };
        let term = |j: usize, v: f64| -> String {
            let name = ident(&self.names[j], format!("x{j}"));
            if v < 0.0 {
                format!("- {} {}", fmt_num(-v), name)
            } else {
                format!("+ {} {}", fmt_num(v), name)
            }
        };
        fn fmt_num(v: f64) -> String {
            format!("{v}")
        }

        writeln!(out, "Minimize")?;
        let mut obj = String::from(" obj:");
        let mut any = false;
        for (j, &c) in self.costs.iter().enumerate() {
            if c != 0.0 {
                obj.push(' ');
                obj.push_str(&term(j, c));
                any = true;
            }
        }
        if !any {
            obj.push_str(" 0");
        }
        writeln!(out, "{obj}")?;
        writeln!(out, "Subject To")?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = format!(" r{i}:");
            if row.is_empty() {
                line.push_str(" 0");
            }
            for &(j, v) in row {
                line.push(' ');
                line.push_str(&term(j, v));
            }
            writeln!(out, "{line} = {}", fmt_num(self.rhs[i]))?;
        }
        writeln!(out, "Bounds")?;
        for j in 0..self.num_vars() {
            let name = ident(&self.names[j], format!("x{j}"));
            let (lo, hi) = (self.lower[j], self.upper[j]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) if lo == hi => writeln!(out, " {name} = {}", fmt_num(lo))?,
                (true, true) => writeln!(out, " {} <= {name} <= {}", fmt_num(lo), fmt_num(hi))?,
                (true, false) => writeln!(out, " {} <= {name}", fmt_num(lo))?,
                (false, true) => writeln!(out, " -inf <= {name} <= {}", fmt_num(hi))?,
                (false, false) => writeln!(out, " {name} free")?,
            }
        }
        writeln!(out, "End")
    }
}

/// Solves the LP with a bounded-variable revised simplex method. Malformed
/// problems error out; infeasible or unbounded ones come back as statuses.
pub fn solve_lp(lp: &LinearProgram, options: &LpOptions) -> Result<LpResult, LpError> {
    lp.validate()?;
    Ok(simplex::solve(lp, options))
}

/// Epigraph reformulation of an l1 penalty: for each variable x_j in
/// `vars`, appends s_j >= 0 with `-s_j <= x_j <= s_j` and adds
/// `weight * sum s_j` to the objective. With weight zero the optimum value
/// is unchanged; with positive weight each s_j equals |x_j| at the optimum.
pub fn l1_epigraph_augment(
    lp: &LinearProgram,
    vars: Range<usize>,
    weight: f64,
) -> Result<LinearProgram, LpError> {
    if vars.end > lp.num_vars() || vars.start > vars.end {
        return Err(LpError::RangeOutOfBounds {
            start: vars.start,
            end: vars.end,
            vars: lp.num_vars(),
        });
    }
    if !weight.is_finite() || weight < 0.0 {
        return Err(LpError::InvalidWeight { weight });
    }
    let mut augmented = lp.clone();
    let bounds: Vec<usize> = vars
        .clone()
        .map(|j| augmented.add_var(format!("abs({})", lp.name(j)), 0.0, f64::INFINITY, weight))
        .collect();
    for (j, &s) in vars.zip(bounds.iter()) {
        augmented.add_le(&[(j, 1.0), (s, -1.0)], 0.0);
        augmented.add_le(&[(j, -1.0), (s, -1.0)], 0.0);
    }
    Ok(augmented)
}

pub use self::verify::verify_optimum;

mod verify {
    use super::*;

    /// Recomputes feasibility residuals and the objective of a claimed
    /// optimum. Returns `(residual, max bound violation, objective)`.
    pub fn verify_optimum(lp: &LinearProgram, x: &DVector<f64>) -> (f64, f64, f64) {
        let a = lp.dense_matrix();
        let b = DVector::from_column_slice(lp.rhs());
        let residual = if lp.num_rows() == 0 {
            0.0
        } else {
            (a * x - b).amax()
        };
        let mut bound_violation = 0.0_f64;
        for j in 0..lp.num_vars() {
            let (lo, hi) = lp.bounds(j);
            bound_violation = bound_violation.max(lo - x[j]).max(x[j] - hi);
        }
        let objective = lp.costs().iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        (residual, bound_violation.max(0.0), objective)
    }
}
