//! Pure-Rust LP fallback backed by Clarabel, for dual-only solve paths.
//!
//! Clarabel takes conic form `min q'x  s.t.  Ax + s = b, s in K`. Equality
//! rows map to the zero cone and inequalities to the nonnegative cone, with
//! `>=` rows negated. Finite variable bounds become extra inequality rows
//! whose duals are dropped; reported duals are indexed by model row.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{
    empty_outcome, LinearModel, Sense, SolveOptions, SolveOutcome, SolveStatus, SolverEngine,
    SolverError,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelLp;

/// Sign linking a Clarabel dual to the minimization-Lagrangian convention.
fn dual_sign(sense: Sense) -> f64 {
    match sense {
        Sense::Ge => 1.0,
        Sense::Le | Sense::Eq => -1.0,
    }
}

impl SolverEngine for ClarabelLp {
    fn name(&self) -> &'static str {
        "clarabel-lp"
    }

    fn solve_milp(
        &self,
        _model: &LinearModel,
        _options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        Err(SolverError::MilpUnsupported(self.name()))
    }

    fn solve_lp_with_duals(
        &self,
        model: &LinearModel,
        options: &SolveOptions,
    ) -> Result<SolveOutcome, SolverError> {
        if model.num_vars() == 0 {
            return Ok(empty_outcome());
        }
        let started = Instant::now();
        let n = model.num_vars();

        // Assemble rows: equality block first, then all inequalities.
        // Each entry is (model row or bound, scaled coefficients, rhs).
        struct ConicRow {
            model_row: Option<usize>,
            terms: Vec<(usize, f64)>,
            rhs: f64,
        }
        let mut eq_rows = Vec::new();
        let mut ineq_rows = Vec::new();
        for (r, row) in model.rows().iter().enumerate() {
            let sign = match row.sense {
                Sense::Ge => -1.0,
                _ => 1.0,
            };
            let conic = ConicRow {
                model_row: Some(r),
                terms: row.terms.iter().map(|&(v, c)| (v.0, sign * c)).collect(),
                rhs: sign * row.rhs,
            };
            match row.sense {
                Sense::Eq => eq_rows.push(conic),
                _ => ineq_rows.push(conic),
            }
        }
        for (k, v) in model.variables().iter().enumerate() {
            if v.upper.is_finite() {
                ineq_rows.push(ConicRow {
                    model_row: None,
                    terms: vec![(k, 1.0)],
                    rhs: v.upper,
                });
            }
            if v.lower.is_finite() {
                ineq_rows.push(ConicRow {
                    model_row: None,
                    terms: vec![(k, -1.0)],
                    rhs: -v.lower,
                });
            }
        }

        let cones = [
            SupportedConeT::ZeroConeT(eq_rows.len()),
            SupportedConeT::NonnegativeConeT(ineq_rows.len()),
        ];
        let all_rows: Vec<&ConicRow> = eq_rows.iter().chain(ineq_rows.iter()).collect();
        let m = all_rows.len();

        // Column-compressed constraint matrix from triplets.
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (r, row) in all_rows.iter().enumerate() {
            for &(c, v) in &row.terms {
                triplets.push((c, r, v));
            }
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval = Vec::with_capacity(triplets.len());
        colptr.push(0);
        let mut col = 0;
        for (c, r, v) in triplets {
            while col < c {
                colptr.push(rowval.len());
                col += 1;
            }
            rowval.push(r);
            nzval.push(v);
        }
        while col < n {
            colptr.push(rowval.len());
            col += 1;
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let b: Vec<f64> = all_rows.iter().map(|r| r.rhs).collect();
        let q: Vec<f64> = model.variables().iter().map(|v| v.objective).collect();
        let p = CscMatrix::zeros((n, n));

        let mut builder = DefaultSettingsBuilder::default();
        builder.verbose(false);
        if let Some(limit) = options.time_limit {
            builder.time_limit(limit.as_secs_f64());
        }
        let settings = builder
            .build()
            .map_err(|e| SolverError::Backend(format!("settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| SolverError::Backend(format!("model load failed: {e:?}")))?;
        solver.solve();
        let wall_time = started.elapsed();

        let solution = &solver.solution;
        let status = match solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::MaxTime | SolverStatus::MaxIterations => SolveStatus::TimeLimitNoSolution,
            other => return Err(SolverError::Backend(format!("solver status {other:?}"))),
        };
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

        let mut duals = vec![0.0; model.num_rows()];
        for (r, row) in all_rows.iter().enumerate() {
            if let Some(model_row) = row.model_row {
                duals[model_row] = dual_sign(model.rows()[model_row].sense) * solution.z[r];
            }
        }
        Ok(SolveOutcome {
            status,
            objective: solution.obj_val,
            primal: solution.x.clone(),
            duals: Some(duals),
            wall_time,
            gap: 0.0,
        })
    }
}
