//! Cutting-plane decomposition over revision schedules.
//!
//! The master problem picks a revision schedule and a cost estimate `theta`
//! bounded below by the multistage optimum. Each iteration solves the
//! relaxed subproblem at the schedule for a dual-based Benders cut, solves
//! the exact subproblem (gated by the relaxed upper bound) for an
//! integer L-shaped cut, then re-solves the master for the next schedule
//! and lower bound, until the relative gap closes.
//!
//! Two accelerations are on by default and disabled together by exact mode:
//! seeding the master with lower bounds on the revision counters from a
//! truncated-horizon solve, and gating exact subproblem solves on relaxed
//! improvement. With both off, the loop terminates finitely at an optimal
//! schedule; with either on, the incumbent may be heuristic.

use crate::model::{
    add_revision_block, build_ams, build_msp, fix_revisions, AmsOptions, AmspInstance, ModelError,
    RevisionSchedule,
};
use crate::solver::{
    Engine, LinearModel, Sense, SolveOptions, SolveStatus, SolverError, VarId,
};
use crate::tol;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{what} ended with status {status:?} instead of a usable solution")]
    UnexpectedStatus {
        what: &'static str,
        status: SolveStatus,
    },
    #[error("subproblem value {q} undercuts the multistage bound {l} beyond tolerance")]
    BoundViolation { q: f64, l: f64 },
    #[error("master problem infeasible with no heuristic cuts to drop")]
    MasterInfeasible,
    #[error("horizon cut {n} must satisfy 1 <= n <= {limit} (T - 1)")]
    InvalidHorizonCut { n: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    LShaped,
    Benders,
    Heuristic,
}

/// A linear inequality `theta_coef * theta + sum coef * r[i][t] >= constant`
/// over the master variables. Optimality cuts carry `theta_coef = 1`;
/// heuristic revision floors carry `theta_coef = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cut {
    pub kind: CutKind,
    pub theta_coef: f64,
    /// Coefficients keyed by (state index, stage).
    pub terms: Vec<(usize, usize, f64)>,
    pub constant: f64,
    /// Schedule whose subproblem produced the cut.
    pub generator: RevisionSchedule,
    /// Subproblem value at the generator: exact for L-shaped cuts, relaxed
    /// for Benders cuts, truncated-horizon counters for heuristic cuts.
    pub generator_objective: f64,
}

impl Cut {
    /// The bound this cut imposes on `theta` at a given schedule
    /// (`constant - sum coef * r`); meaningless for heuristic cuts.
    pub fn bound_at(&self, schedule: &RevisionSchedule) -> f64 {
        let linear: f64 = self
            .terms
            .iter()
            .map(|&(i, t, c)| c * schedule.counter(i, t) as f64)
            .sum();
        self.constant - linear
    }
}

/// Builds the integer L-shaped optimality cut for an exact subproblem value
/// `q` at `schedule`, with `l` the multistage lower bound. Values within
/// solver noise below `l` are clamped to `l`.
pub fn lshaped_cut(
    schedule: &RevisionSchedule,
    q: f64,
    l: f64,
) -> Result<Cut, DecompositionError> {
    if q < l - tol::objective_tol(q.abs().max(l.abs())) {
        return Err(DecompositionError::BoundViolation { q, l });
    }
    let q = q.max(l);
    let t_max = schedule.num_stages();
    let slope = q - l;
    let mut coef = vec![vec![0.0; t_max]; schedule.state_dim()];
    let mut revisions = 0usize;
    for i in 0..schedule.state_dim() {
        let revised = schedule.revision_stages(i);
        revisions += revised.len();
        for t in 2..=t_max {
            let sign = if revised.contains(&t) { 1.0 } else { -1.0 };
            coef[i][t - 1] += sign * slope;
            coef[i][t - 2] -= sign * slope;
        }
    }
    let terms: Vec<(usize, usize, f64)> = coef
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .filter(|&(_, c)| c != 0.0)
                .map(move |(t, c)| (i, t + 1, -c))
        })
        .collect();
    Ok(Cut {
        kind: CutKind::LShaped,
        theta_coef: 1.0,
        terms,
        constant: q - slope * revisions as f64,
        generator: schedule.clone(),
        generator_objective: q,
    })
}

/// Builds the Benders optimality cut from the duals of the relaxed
/// subproblem's NAC rows. The cut is the dual sensitivity bound in the
/// right-hand sides that the revision gaps enter, so it is tight at the
/// generator and valid for every feasible schedule.
pub fn benders_cut(
    schedule: &RevisionSchedule,
    relaxed_objective: f64,
    nac_duals: &[(crate::nac::NacConstraint, f64)],
) -> Cut {
    let t_max = schedule.num_stages();
    let mut coef = vec![vec![0.0; t_max]; schedule.state_dim()];
    let mut constant = relaxed_objective;
    for &(c, dual) in nac_duals {
        let pi = dual.max(0.0); // NAC rows are >=, duals nonnegative up to noise
        if pi == 0.0 {
            continue;
        }
        let gap = c.revision_gap(schedule.counters()) as f64;
        constant += pi * c.big_m * gap;
        coef[c.state][c.stage - 1] -= pi * c.big_m;
        coef[c.state][c.ancestor_stage - 1] += pi * c.big_m;
    }
    let terms: Vec<(usize, usize, f64)> = coef
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .filter(|&(_, c)| c != 0.0)
                .map(move |(t, c)| (i, t + 1, -c))
        })
        .collect();
    Cut {
        kind: CutKind::Benders,
        theta_coef: 1.0,
        terms,
        constant,
        generator: schedule.clone(),
        generator_objective: relaxed_objective,
    }
}

/// Result of the truncated-horizon preprocessing step.
#[derive(Debug, Clone)]
pub struct HeuristicCuts {
    pub cuts: Vec<Cut>,
    /// Schedule of the truncated solve, extended to the full horizon by
    /// holding counters constant; used as the initial master point.
    pub start: Option<RevisionSchedule>,
    pub warning: Option<String>,
}

/// Solves the reduced adaptive model on the tree truncated by `horizon_cut`
/// stages and returns revision floors `r[i][t] >= floor` for the kept stages.
/// A failed truncated solve degrades to no cuts with a warning.
pub fn heuristic_cuts(
    instance: &AmspInstance,
    horizon_cut: usize,
    engine: Engine,
    options: &SolveOptions,
) -> Result<HeuristicCuts, DecompositionError> {
    let t_max = instance.tree().num_stages();
    if horizon_cut == 0 || horizon_cut >= t_max {
        return Err(DecompositionError::InvalidHorizonCut {
            n: horizon_cut,
            limit: t_max - 1,
        });
    }
    let kept = t_max - horizon_cut;
    let truncated = instance.truncate(kept)?;
    let built = build_ams(&truncated, &AmsOptions::reduced())?;
    let short = match engine.solve_milp(&built.model, options) {
        Ok(out) if out.status.is_optimal() => built.revision_schedule_from(&out, truncated.mu())?,
        Ok(out) => {
            return Ok(HeuristicCuts {
                cuts: Vec::new(),
                start: None,
                warning: Some(format!(
                    "truncated-horizon solve ended with {:?}; continuing without heuristic cuts",
                    out.status
                )),
            })
        }
        Err(err) => {
            return Ok(HeuristicCuts {
                cuts: Vec::new(),
                start: None,
                warning: Some(format!(
                    "truncated-horizon solve failed ({err}); continuing without heuristic cuts"
                )),
            })
        }
    };
    let mut cuts = Vec::new();
    for i in 0..instance.state_dim() {
        for t in 2..=kept {
            let floor = short.counter(i, t);
            if floor > 0 {
                cuts.push(Cut {
                    kind: CutKind::Heuristic,
                    theta_coef: 0.0,
                    terms: vec![(i, t, 1.0)],
                    constant: floor as f64,
                    generator: extend_schedule(&short, t_max),
                    generator_objective: floor as f64,
                });
            }
        }
    }
    Ok(HeuristicCuts {
        cuts,
        start: Some(extend_schedule(&short, t_max)),
        warning: None,
    })
}

/// Extends a schedule to a longer horizon by holding counters constant.
fn extend_schedule(short: &RevisionSchedule, num_stages: usize) -> RevisionSchedule {
    let counters = short
        .counters()
        .iter()
        .map(|row| {
            let mut out = row.clone();
            out.resize(num_stages, *row.last().unwrap());
            out
        })
        .collect();
    RevisionSchedule::from_counters(counters, usize::MAX).expect("extension preserves validity")
}

/// L-shaped and Benders cut pools, in generation order.
#[derive(Debug, Clone, Default)]
pub struct CutPool {
    pub lshaped: Vec<Cut>,
    pub benders: Vec<Cut>,
    pub heuristic: Vec<Cut>,
}

impl CutPool {
    pub fn all(&self) -> impl Iterator<Item = &Cut> {
        self.lshaped
            .iter()
            .chain(self.benders.iter())
            .chain(self.heuristic.iter())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub schedule: String,
    pub relaxed_value: f64,
    pub exact_value: Option<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub relaxed_upper_bound: f64,
    pub gap: f64,
    pub lshaped_cuts: usize,
    pub benders_cuts: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    IterationLimit,
    TimeLimit,
}

/// Full bookkeeping of one decomposition run.
#[derive(Debug, Clone)]
pub struct DecompositionState {
    state_dim: usize,
    num_stages: usize,
    mu: usize,
    /// Multistage optimum, the global lower bound `L`.
    pub multistage_bound: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub relaxed_upper_bound: f64,
    pub incumbent: Option<RevisionSchedule>,
    pub epsilon: f64,
    pub cuts: CutPool,
    pub iterations: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    pub status: RunStatus,
    pub wall_time: Duration,
}

impl DecompositionState {
    fn new(state_dim: usize, num_stages: usize, mu: usize, l: f64, epsilon: f64) -> Self {
        Self {
            state_dim,
            num_stages,
            mu,
            multistage_bound: l,
            lower_bound: f64::NEG_INFINITY,
            upper_bound: f64::INFINITY,
            relaxed_upper_bound: f64::INFINITY,
            incumbent: None,
            epsilon,
            cuts: CutPool::default(),
            iterations: Vec::new(),
            warnings: Vec::new(),
            status: RunStatus::Converged,
            wall_time: Duration::ZERO,
        }
    }

    /// Relative optimality gap `1 - LB/UB`, with an absolute fallback when
    /// the upper bound sits at zero.
    pub fn gap(&self) -> f64 {
        if !self.upper_bound.is_finite() || !self.lower_bound.is_finite() {
            return f64::INFINITY;
        }
        if self.upper_bound.abs() <= tol::ABS_FLOOR {
            return (self.upper_bound - self.lower_bound).abs();
        }
        1.0 - self.lower_bound / self.upper_bound
    }
}

/// Master solve output.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub schedule: RevisionSchedule,
    pub lower_bound: f64,
    /// Set when contradictory heuristic cuts had to be dropped.
    pub dropped_heuristic: bool,
}

/// Minimizes `theta` over the revision polytope intersected with all cuts.
pub fn solve_master(
    state: &DecompositionState,
    engine: Engine,
    options: &SolveOptions,
) -> Result<MasterSolution, DecompositionError> {
    match solve_master_inner(state, engine, options, false) {
        Ok(solution) => Ok(solution),
        Err(DecompositionError::MasterInfeasible) if !state.cuts.heuristic.is_empty() => {
            let mut solution = solve_master_inner(state, engine, options, true)?;
            solution.dropped_heuristic = true;
            Ok(solution)
        }
        Err(err) => Err(err),
    }
}

fn solve_master_inner(
    state: &DecompositionState,
    engine: Engine,
    options: &SolveOptions,
    drop_heuristic: bool,
) -> Result<MasterSolution, DecompositionError> {
    let mut model = LinearModel::new();
    let theta = model.add_continuous(state.multistage_bound, f64::INFINITY, 1.0);
    let revision = add_revision_block(
        &mut model,
        state.state_dim,
        state.num_stages,
        state.mu,
        true,
    );
    let add_cut = |model: &mut LinearModel, cut: &Cut| {
        let mut terms: Vec<(VarId, f64)> = Vec::with_capacity(cut.terms.len() + 1);
        if cut.theta_coef != 0.0 {
            terms.push((theta, cut.theta_coef));
        }
        for &(i, t, c) in &cut.terms {
            terms.push((revision[i][t - 1], c));
        }
        model.add_row(Sense::Ge, cut.constant, terms);
    };
    for cut in state.cuts.lshaped.iter().chain(state.cuts.benders.iter()) {
        add_cut(&mut model, cut);
    }
    if !drop_heuristic {
        for cut in &state.cuts.heuristic {
            add_cut(&mut model, cut);
        }
    }

    let mut options = options.clone();
    if let Some(incumbent) = &state.incumbent {
        // advisory warm start at the incumbent schedule
        let mut point = vec![0.0; model.num_vars()];
        point[theta.0] = if state.upper_bound.is_finite() {
            state.upper_bound
        } else {
            state.multistage_bound
        };
        for i in 0..state.state_dim {
            for t in 1..=state.num_stages {
                point[revision[i][t - 1].0] = incumbent.counter(i, t) as f64;
            }
        }
        options.warm_start = Some(point);
    }

    let out = engine.solve_milp(&model, &options)?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(DecompositionError::MasterInfeasible),
        status => {
            return Err(DecompositionError::UnexpectedStatus {
                what: "master problem",
                status,
            })
        }
    }
    let counters = revision
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| out.primal[v.0].round().max(0.0) as u32)
                .collect()
        })
        .collect();
    let schedule = RevisionSchedule::from_counters(counters, state.mu)?;
    Ok(MasterSolution {
        schedule,
        lower_bound: out.objective,
        dropped_heuristic: false,
    })
}

/// Configuration of a decomposition run.
#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    /// Relative gap at which the loop stops.
    pub epsilon: f64,
    /// Stages removed for the truncated-horizon preprocessing solve.
    pub horizon_cut: usize,
    /// Seed the master with truncated-horizon revision floors.
    pub heuristic: bool,
    /// Solve the exact subproblem only when the relaxed value improves on
    /// the best relaxed value seen so far.
    pub rub_gate: bool,
    pub time_limit: Option<Duration>,
    pub max_iterations: usize,
    pub engine: Engine,
    pub solve_options: SolveOptions,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            horizon_cut: 2,
            heuristic: true,
            rub_gate: true,
            time_limit: None,
            max_iterations: 10_000,
            engine: Engine::Highs,
            solve_options: SolveOptions::default(),
        }
    }
}

impl DecompositionConfig {
    /// Both accelerations off: finite convergence to an optimal schedule.
    pub fn exact() -> Self {
        Self {
            heuristic: false,
            rub_gate: false,
            ..Self::default()
        }
    }
}

/// Runs the full decomposition loop on an instance.
pub fn run(
    instance: &AmspInstance,
    config: &DecompositionConfig,
) -> Result<DecompositionState, DecompositionError> {
    let started = Instant::now();
    let t_max = instance.tree().num_stages();
    let deadline = config.time_limit.map(|limit| started + limit);
    let per_solve = |deadline: Option<Instant>, base: &SolveOptions| -> SolveOptions {
        let mut opts = base.clone();
        if let Some(d) = deadline {
            let remaining = d.saturating_duration_since(Instant::now());
            opts.time_limit = Some(match opts.time_limit {
                Some(cap) => cap.min(remaining),
                None => remaining,
            });
        }
        opts
    };

    // Global lower bound from the fully flexible model.
    let msp = build_msp(instance);
    let msp_out = config
        .engine
        .solve_milp(&msp.model, &per_solve(deadline, &config.solve_options))?;
    if !msp_out.status.is_optimal() {
        return Err(DecompositionError::UnexpectedStatus {
            what: "multistage bound solve",
            status: msp_out.status,
        });
    }
    let l = msp_out.objective;

    let mut state = DecompositionState::new(
        instance.state_dim(),
        t_max,
        instance.mu(),
        l,
        config.epsilon,
    );

    let mut current = RevisionSchedule::zero(instance.state_dim(), t_max);
    if config.heuristic && t_max > 1 {
        let horizon_cut = config.horizon_cut.clamp(1, t_max - 1);
        let seeded = heuristic_cuts(
            instance,
            horizon_cut,
            config.engine,
            &per_solve(deadline, &config.solve_options),
        )?;
        if let Some(warning) = seeded.warning {
            state.warnings.push(warning);
        }
        state.cuts.heuristic = seeded.cuts;
        if let Some(start) = seeded.start {
            current = start;
        }
    }

    // Schedules already processed once. A schedule the master returns again
    // can no longer improve through Benders cuts alone, so the relaxed gate
    // is bypassed for it to guarantee progress.
    let mut seen: std::collections::HashSet<RevisionSchedule> = std::collections::HashSet::new();

    loop {
        let iteration = state.iterations.len() + 1;
        let revisit = !seen.insert(current.clone());

        // Relaxed subproblem: Benders cut at the current schedule.
        let rsp = fix_revisions(instance, &current, true)?;
        let rsp_out = config
            .engine
            .solve_lp_with_duals(&rsp.model, &per_solve(deadline, &config.solve_options))?;
        if !rsp_out.status.is_optimal() {
            return Err(DecompositionError::UnexpectedStatus {
                what: "relaxed subproblem",
                status: rsp_out.status,
            });
        }
        let relaxed_value = rsp_out.objective;
        let duals: Vec<(crate::nac::NacConstraint, f64)> = rsp
            .nac_rows
            .iter()
            .map(|&(row, c)| (c, rsp_out.dual(row).unwrap_or(0.0)))
            .collect();
        state
            .cuts
            .benders
            .push(benders_cut(&current, relaxed_value, &duals));

        // Exact subproblem, gated on relaxed improvement.
        let mut exact_value = None;
        if !config.rub_gate || revisit || relaxed_value <= state.relaxed_upper_bound {
            state.relaxed_upper_bound = state.relaxed_upper_bound.min(relaxed_value);
            let sp = fix_revisions(instance, &current, false)?;
            let sp_out = config
                .engine
                .solve_milp(&sp.model, &per_solve(deadline, &config.solve_options))?;
            if !sp_out.status.is_optimal() {
                return Err(DecompositionError::UnexpectedStatus {
                    what: "exact subproblem",
                    status: sp_out.status,
                });
            }
            let q = sp_out.objective;
            exact_value = Some(q);
            state.cuts.lshaped.push(lshaped_cut(&current, q, l)?);
            if q <= state.upper_bound {
                state.upper_bound = q;
                state.incumbent = Some(current.clone());
            }
        }

        // Master problem: next schedule and lower bound.
        let master = solve_master(
            &state,
            config.engine,
            &per_solve(deadline, &config.solve_options),
        )?;
        if master.dropped_heuristic {
            state
                .warnings
                .push("master infeasible; heuristic cuts dropped".into());
            state.cuts.heuristic.clear();
        }
        state.lower_bound = state.lower_bound.max(master.lower_bound);

        let gap = state.gap();
        state.iterations.push(IterationRecord {
            iteration,
            schedule: current.to_string(),
            relaxed_value,
            exact_value,
            lower_bound: state.lower_bound,
            upper_bound: state.upper_bound,
            relaxed_upper_bound: state.relaxed_upper_bound,
            gap,
            lshaped_cuts: state.cuts.lshaped.len(),
            benders_cuts: state.cuts.benders.len(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });

        if gap < config.epsilon {
            state.status = RunStatus::Converged;
            break;
        }
        if state.iterations.len() >= config.max_iterations {
            state.status = RunStatus::IterationLimit;
            break;
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                state.status = RunStatus::TimeLimit;
                break;
            }
        }
        current = master.schedule;
    }

    state.wall_time = started.elapsed();
    Ok(state)
}
