//! Solver-agnostic linear models and the engines that solve them.
//!
//! [`LinearModel`] is a plain minimization MILP: a variable registry with
//! bounds, integrality and objective coefficients, plus sparse constraint
//! rows. Engines implement [`SolverEngine`]; the default engine is HiGHS,
//! which covers both mixed-integer solves and LP solves with duals. A pure
//! LP fallback backed by Clarabel is available for dual-only paths.
//!
//! Dual values follow the convention of a minimization Lagrangian
//! `c'x - sum_r y_r (a_r'x - rhs_r)`: duals of `>=` rows are nonnegative,
//! duals of `<=` rows are nonpositive, duals of `=` rows are free, and
//! `sum_r y_r rhs_r + sum(bound contributions) = objective` at optimality.

mod clarabel_engine;
mod highs_engine;

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

pub use clarabel_engine::ClarabelLp;
pub use highs_engine::HighsEngine;

/// Index of a registered variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a registered constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl std::fmt::Display for Sense {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A sparse mixed-integer linear minimization model.
#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    vars: Vec<Variable>,
    rows: Vec<Row>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_continuous(&mut self, lower: f64, upper: f64, objective: f64) -> VarId {
        self.add_var(lower, upper, false, objective)
    }

    pub fn add_integer(&mut self, lower: f64, upper: f64, objective: f64) -> VarId {
        self.add_var(lower, upper, true, objective)
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, integer: bool, objective: f64) -> VarId {
        assert!(lower <= upper, "variable bounds crossed: [{lower}, {upper}]");
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            lower,
            upper,
            integer,
            objective,
        });
        id
    }

    /// Adds a constraint row; terms referencing unknown variables panic.
    pub fn add_row(&mut self, sense: Sense, rhs: f64, terms: Vec<(VarId, f64)>) -> RowId {
        for (v, _) in &terms {
            assert!(v.0 < self.vars.len(), "row references unknown variable {}", v.0);
        }
        let id = RowId(self.rows.len());
        self.rows.push(Row { terms, sense, rhs });
        id
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn set_bounds(&mut self, id: VarId, lower: f64, upper: f64) {
        assert!(lower <= upper, "variable bounds crossed: [{lower}, {upper}]");
        self.vars[id.0].lower = lower;
        self.vars[id.0].upper = upper;
    }

    pub fn set_integer(&mut self, id: VarId, integer: bool) {
        self.vars[id.0].integer = integer;
    }

    pub fn has_integrality(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    /// Drops every integrality flag in place.
    pub fn relax_integrality(&mut self) {
        for v in &mut self.vars {
            v.integer = false;
        }
    }

    /// Objective value of a given point (no feasibility check).
    pub fn objective_at(&self, point: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(point)
            .map(|(v, x)| v.objective * x)
            .sum()
    }

    /// Writes the model in LP text format for debugging.
    pub fn write_lp(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        let mut first = true;
        for (k, v) in self.vars.iter().enumerate() {
            if v.objective != 0.0 {
                write_term(out, v.objective, k, first)?;
                first = false;
            }
        }
        if first {
            write!(out, " 0 x0")?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for (r, row) in self.rows.iter().enumerate() {
            write!(out, " c{r}:")?;
            let mut first = true;
            for &(VarId(k), coef) in &row.terms {
                write_term(out, coef, k, first)?;
                first = false;
            }
            if first {
                write!(out, " 0 x0")?;
            }
            writeln!(out, " {} {}", row.sense, row.rhs)?;
        }
        writeln!(out, "Bounds")?;
        for (k, v) in self.vars.iter().enumerate() {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) => writeln!(out, " {} <= x{k} <= {}", v.lower, v.upper)?,
                (true, false) => writeln!(out, " x{k} >= {}", v.lower)?,
                (false, true) => {
                    writeln!(out, " x{k} free")?;
                    writeln!(out, " x{k} <= {}", v.upper)?
                }
                (false, false) => writeln!(out, " x{k} free")?,
            }
        }
        if self.has_integrality() {
            writeln!(out, "General")?;
            for (k, v) in self.vars.iter().enumerate() {
                if v.integer {
                    writeln!(out, " x{k}")?;
                }
            }
        }
        writeln!(out, "End")
    }
}

fn write_term(out: &mut dyn std::io::Write, coef: f64, var: usize, first: bool) -> std::io::Result<()> {
    if coef < 0.0 {
        write!(out, " - {} x{var}", -coef)
    } else if first {
        write!(out, " {coef} x{var}")
    } else {
        write!(out, " + {coef} x{var}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped at the time limit with a feasible incumbent.
    TimeLimitFeasible,
    /// Stopped at the time limit without any feasible point.
    TimeLimitNoSolution,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }

    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::TimeLimitFeasible)
    }
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Meaningful only when `status.has_solution()`.
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Dual values by row, present only for optimal pure-LP solves.
    pub duals: Option<Vec<f64>>,
    pub wall_time: Duration,
    /// Relative MILP gap at termination; 0 for LP solves.
    pub gap: f64,
}

impl SolveOutcome {
    pub fn dual(&self, row: RowId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[row.0])
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    /// Relative MILP gap tolerance.
    pub gap_tol: f64,
    pub threads: u32,
    /// Advisory warm-start point, by variable id.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 1e-6,
            threads: 1,
            warm_start: None,
        }
    }
}

impl SolveOptions {
    pub fn with_gap(gap_tol: f64) -> Self {
        Self {
            gap_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver backend failure: {0}")]
    Backend(String),
    #[error("engine `{0}` does not solve mixed-integer models")]
    MilpUnsupported(&'static str),
}

/// A pluggable mixed-integer linear programming engine.
pub trait SolverEngine: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solves the model as given, honoring integrality.
    fn solve_milp(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError>;

    /// Solves the continuous relaxation and reports row duals.
    fn solve_lp_with_duals(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError>;
}

/// Engine selector used by configuration and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Highs,
    /// HiGHS for mixed-integer solves, Clarabel for dual-only LP solves.
    ClarabelLp,
}

impl Engine {
    pub fn solve_milp(
        self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        HighsEngine.solve_milp(model, options)
    }

    pub fn solve_lp_with_duals(
        self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        match self {
            Engine::Highs => HighsEngine.solve_lp_with_duals(model, options),
            Engine::ClarabelLp => ClarabelLp.solve_lp_with_duals(model, options),
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highs" => Ok(Engine::Highs),
            "clarabel-lp" => Ok(Engine::ClarabelLp),
            other => Err(format!(
                "unknown engine `{other}` (expected highs or clarabel-lp)"
            )),
        }
    }
}

/// Outcome for a model with no variables: objective 0, trivially optimal.
fn empty_outcome() -> SolveOutcome {
    SolveOutcome {
        status: SolveStatus::Optimal,
        objective: 0.0,
        primal: Vec::new(),
        duals: Some(Vec::new()),
        wall_time: Duration::ZERO,
        gap: 0.0,
    }
}
