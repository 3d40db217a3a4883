//! HiGHS-backed engine: mixed-integer solves and LP solves with duals.

use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense as HighsSense};

use super::{
    empty_outcome, LinearModel, Sense, SolveOptions, SolveOutcome, SolveStatus, SolverEngine,
    SolverError,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsEngine;

impl HighsEngine {
    fn solve(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
        relax: bool,
    ) -> Result<SolveOutcome, SolverError> {
        if model.num_vars() == 0 {
            return Ok(empty_outcome());
        }
        let started = Instant::now();

        let mut problem = RowProblem::new();
        let mut cols = Vec::with_capacity(model.num_vars());
        for v in model.variables() {
            let bounds = (
                std::ops::Bound::Included(v.lower),
                std::ops::Bound::Included(v.upper),
            );
            cols.push(problem.add_column_with_integrality(
                v.objective,
                bounds,
                v.integer && !relax,
            ));
        }
        for row in model.rows() {
            let terms: Vec<_> = row.terms.iter().map(|&(v, c)| (cols[v.0], c)).collect();
            match row.sense {
                Sense::Le => problem.add_row(..=row.rhs, terms),
                Sense::Eq => problem.add_row(row.rhs..=row.rhs, terms),
                Sense::Ge => problem.add_row(row.rhs.., terms),
            }
        }

        let mut solver = problem
            .try_optimise(HighsSense::Minimise)
            .map_err(|s| SolverError::Backend(format!("model load failed: {s:?}")))?;
        solver.make_quiet();
        solver.set_option("threads", options.threads as i32);
        if options.threads <= 1 {
            solver.set_option("parallel", "off");
        }
        solver.set_option("mip_rel_gap", options.gap_tol);
        if let Some(limit) = options.time_limit {
            solver.set_option("time_limit", limit.as_secs_f64());
        }
        if let Some(point) = &options.warm_start {
            if point.len() == model.num_vars() {
                solver.set_solution(Some(point), None, None, None);
            }
        }

        let solved = solver
            .try_solve()
            .map_err(|s| SolverError::Backend(format!("solve failed: {s:?}")))?;

        let is_lp = relax || !model.has_integrality();
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Unbounded
            }
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
                if solved.primal_solution_status() == HighsSolutionStatus::Feasible {
                    SolveStatus::TimeLimitFeasible
                } else {
                    SolveStatus::TimeLimitNoSolution
                }
            }
            other => {
                return Err(SolverError::Backend(format!(
                    "unexpected model status {other:?}"
                )))
            }
        };

        let wall_time = started.elapsed();
        if !status.has_solution() {
            return Ok(SolveOutcome {
                status,
                objective: f64::NAN,
                primal: Vec::new(),
                duals: None,
                wall_time,
                gap: f64::NAN,
            });
        }

        let solution = solved.get_solution();
        let duals = if is_lp && status.is_optimal() {
            Some(solution.dual_rows().to_vec())
        } else {
            None
        };
        let gap = if is_lp {
            0.0
        } else {
            let g = solved.mip_gap();
            if g.is_finite() {
                g
            } else {
                0.0
            }
        };
        Ok(SolveOutcome {
            status,
            objective: solved.objective_value(),
            primal: solution.columns().to_vec(),
            duals,
            wall_time,
            gap,
        })
    }
}

impl SolverEngine for HighsEngine {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_milp(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        self.solve(model, options, false)
    }

    fn solve_lp_with_duals(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        self.solve(model, options, true)
    }
}
