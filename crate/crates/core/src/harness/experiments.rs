//! Experiment commands: NAC counting, VAMS sweeps, fixed-schedule
//! enumeration, and method comparisons.

use crate::decomposition::{self, DecompositionConfig, DecompositionState};
use crate::model::{
    build_2sp, build_ams, build_msp, fix_revisions, vams, AmsOptions, AmspInstance,
    RevisionSchedule,
};
use crate::nac::{self, CellMatrix, NacRegime};
use crate::problems::{gep, lotsizing, ProblemError};
use crate::solver::{Engine, SolveOptions, SolveStatus, SolverError};
use crate::tree::ScenarioTree;
use crate::tol;
use rayon::prelude::*;
use std::io::Write;
use std::path::PathBuf;
use thiserror::Error;

use super::format::{FormatError, InstanceFile};
use super::report::{config_hash, ReportRow};

/// Largest number of schedules [`enumerate_revisions`] will solve.
pub const ENUMERATION_GUARD: u128 = 10_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("guard exceeded: {schedules} schedules (limit {limit})")]
    GuardExceeded { schedules: u128, limit: u128 },
    #[error("{what} solve ended with status {status:?}")]
    NonOptimal {
        what: &'static str,
        status: SolveStatus,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Nac(#[from] nac::NacError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Decomposition(#[from] decomposition::DecompositionError),
    #[error("report output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 parameter error, 3 solver failure, 4 guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parameter(_)
            | HarnessError::Model(_)
            | HarnessError::Nac(_)
            | HarnessError::Tree(_)
            | HarnessError::Problem(_)
            | HarnessError::Format(_)
            | HarnessError::Io(_) => 2,
            HarnessError::GuardExceeded { .. } => 4,
            HarnessError::NonOptimal { .. }
            | HarnessError::Solver(_)
            | HarnessError::Decomposition(_)
            | HarnessError::Csv(_) => 3,
        }
    }
}

/// Which problem an experiment instantiates.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    LotSizing {
        stages: usize,
        branching: usize,
        sources: usize,
    },
    Gep {
        stages: usize,
        branching: usize,
        overrides: gep::GepOverrides,
    },
    File {
        path: PathBuf,
    },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::LotSizing { .. } => "lotsizing",
            ProblemSpec::Gep { .. } => "gep",
            ProblemSpec::File { .. } => "file",
        }
    }

    /// Builds the instance for one seed and revision budget. File-backed
    /// instances ignore the seed and adopt the requested budget.
    pub fn instantiate(&self, seed: u64, mu: usize) -> Result<AmspInstance, HarnessError> {
        match self {
            ProblemSpec::LotSizing {
                stages,
                branching,
                sources,
            } => {
                let tree = ScenarioTree::uniform(*stages, *branching)?;
                Ok(lotsizing::generate(&tree, *sources, seed, mu)?)
            }
            ProblemSpec::Gep {
                stages,
                branching,
                overrides,
            } => {
                let tree = ScenarioTree::uniform(*stages, *branching)?;
                Ok(gep::generate(&tree, seed, overrides.clone(), mu)?)
            }
            ProblemSpec::File { path } => {
                let instance = InstanceFile::read_path(path)?.to_instance()?;
                Ok(instance.with_mu(mu)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DirectFull,
    DirectReduced,
    Decomposition,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DirectFull => "direct-full",
            Method::DirectReduced => "direct-reduced",
            Method::Decomposition => "decomposition",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct-full" => Ok(Method::DirectFull),
            "direct-reduced" => Ok(Method::DirectReduced),
            "decomposition" => Ok(Method::Decomposition),
            other => Err(format!(
                "unknown method `{other}` (expected direct-full, direct-reduced or decomposition)"
            )),
        }
    }
}

/// Shared experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub mu_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub decomposition: DecompositionConfig,
    pub engine: Engine,
    pub solve_options: SolveOptions,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        Self {
            problem,
            mu_values: vec![0],
            seeds: vec![0],
            method: Method::DirectReduced,
            decomposition: DecompositionConfig::default(),
            engine: Engine::default(),
            solve_options: SolveOptions::default(),
            workers: 1,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Parameter("at least one seed required".into()));
        }
        if self.mu_values.is_empty() {
            return Err(HarnessError::Parameter(
                "at least one revision budget required".into(),
            ));
        }
        Ok(())
    }

    fn hash(&self) -> String {
        config_hash(&(
            format!("{:?}", self.problem),
            &self.mu_values,
            self.method.name(),
            format!("{:?}", self.decomposition),
            format!("{:?}", self.engine),
            format!("{:?}", self.solve_options),
        ))
    }

    /// Runs `job` over the seeds on a bounded worker pool, preserving order.
    fn over_seeds<T: Send>(
        &self,
        job: impl Fn(u64) -> Result<T, HarnessError> + Sync,
    ) -> Result<Vec<T>, HarnessError> {
        if self.workers <= 1 {
            return self.seeds.iter().map(|&s| job(s)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| HarnessError::Parameter(format!("worker pool: {e}")))?;
        pool.install(|| self.seeds.par_iter().map(|&s| job(s)).collect())
    }
}

fn require_optimal(
    what: &'static str,
    out: &crate::solver::SolveOutcome,
) -> Result<(), HarnessError> {
    if out.status.is_optimal() {
        Ok(())
    } else {
        Err(HarnessError::NonOptimal {
            what,
            status: out.status,
        })
    }
}

/// NAC count matrix and totals for one tree shape and regime.
#[derive(Debug, Clone)]
pub struct NacCountReport {
    pub stages: usize,
    pub branching: usize,
    pub mu: usize,
    pub states: usize,
    pub regime: NacRegime,
    pub cells: CellMatrix,
    pub per_state_total: u64,
    pub total: u64,
}

/// Closed-form per-cell NAC counts; the `count-nacs` subcommand.
pub fn count_nacs(
    stages: usize,
    branching: usize,
    mu: usize,
    states: usize,
    regime: NacRegime,
) -> Result<NacCountReport, HarnessError> {
    let tree = ScenarioTree::uniform(stages, branching)?;
    let cells = nac::count_cells(&tree, regime, mu)?;
    let per_state_total = cells.total();
    let total = nac::count_total(&tree, regime, mu, states)?;
    Ok(NacCountReport {
        stages,
        branching,
        mu,
        states,
        regime,
        cells,
        per_state_total,
        total,
    })
}

impl NacCountReport {
    /// Wide CSV: one row per ancestor stage, one column per stage, plus row
    /// totals and a final column-total row. Counts are per state variable.
    pub fn write_csv(&self, writer: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let t = self.stages;
        let mut header = vec!["ancestor_stage".to_string()];
        header.extend((2..=t).map(|tp| format!("stage_{tp}")));
        header.push("row_total".into());
        w.write_record(&header)?;
        for ta in 1..t {
            let mut record = vec![ta.to_string()];
            let mut row_total = 0u64;
            for tp in 2..=t {
                let count = if tp > ta { self.cells.cell(ta, tp) } else { 0 };
                row_total += count;
                record.push(count.to_string());
            }
            record.push(row_total.to_string());
            w.write_record(&record)?;
        }
        let mut record = vec!["total".to_string()];
        for tp in 2..=t {
            let col: u64 = (1..tp).map(|ta| self.cells.cell(ta, tp)).sum();
            record.push(col.to_string());
        }
        record.push(self.per_state_total.to_string());
        w.write_record(&record)?;
        w.flush()?;
        Ok(())
    }
}

/// Reference optima shared by VAMS computations.
struct References {
    z_2sp: f64,
    z_msp: f64,
}

fn solve_references(
    instance: &AmspInstance,
    engine: Engine,
    options: &SolveOptions,
) -> Result<References, HarnessError> {
    let tsp = build_2sp(instance);
    let tsp_out = engine.solve_milp(&tsp.model, options)?;
    require_optimal("two-stage reference", &tsp_out)?;
    let msp = build_msp(instance);
    let msp_out = engine.solve_milp(&msp.model, options)?;
    require_optimal("multistage reference", &msp_out)?;
    Ok(References {
        z_2sp: tsp_out.objective,
        z_msp: msp_out.objective,
    })
}

/// One adaptive solve by the configured method.
struct AmsResult {
    objective: f64,
    schedule: String,
    status: SolveStatus,
    gap: f64,
    wall_seconds: f64,
    nac_count: u64,
    state: Option<DecompositionState>,
}

fn solve_ams(
    instance: &AmspInstance,
    method: Method,
    engine: Engine,
    options: &SolveOptions,
    decomposition_config: &DecompositionConfig,
) -> Result<AmsResult, HarnessError> {
    match method {
        Method::DirectFull | Method::DirectReduced => {
            let ams_options = if method == Method::DirectFull {
                AmsOptions::full()
            } else {
                AmsOptions::reduced()
            };
            let built = build_ams(instance, &ams_options)?;
            let nac_count = built.nac_rows.len() as u64;
            let out = engine.solve_milp(&built.model, options)?;
            require_optimal("adaptive solve", &out)?;
            let schedule = built
                .revision_schedule_from(&out, instance.mu())
                .map(|s| s.to_string())
                .unwrap_or_else(|_| "-".into());
            Ok(AmsResult {
                objective: out.objective,
                schedule,
                status: out.status,
                gap: out.gap,
                wall_seconds: out.wall_time.as_secs_f64(),
                nac_count,
                state: None,
            })
        }
        Method::Decomposition => {
            let mut config = decomposition_config.clone();
            config.engine = engine;
            config.solve_options = options.clone();
            let state = decomposition::run(instance, &config)?;
            let nac_count = nac::count_total(
                instance.tree(),
                NacRegime::Reduced,
                instance.mu(),
                instance.state_dim(),
            )?;
            Ok(AmsResult {
                objective: state.upper_bound,
                schedule: state
                    .incumbent
                    .as_ref()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "-".into()),
                status: match state.status {
                    decomposition::RunStatus::Converged => SolveStatus::Optimal,
                    _ => SolveStatus::TimeLimitFeasible,
                },
                gap: state.gap(),
                wall_seconds: state.wall_time.as_secs_f64(),
                nac_count,
                state: Some(state),
            })
        }
    }
}

/// Output of [`vams_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<ReportRow>,
    /// `(mu, mean VAMS, included seeds)` over rows with optimal references.
    pub averages: Vec<(usize, f64, usize)>,
    pub warnings: Vec<String>,
}

/// Solves the two references and the adaptive model per budget and seed,
/// reporting VAMS per row and per-budget averages; the `vams-sweep`
/// subcommand.
pub fn vams_sweep(config: &ExperimentConfig) -> Result<SweepOutput, HarnessError> {
    config.validate()?;
    let hash = config.hash();
    let per_seed = config.over_seeds(|seed| -> Result<(Vec<ReportRow>, Vec<String>), HarnessError> {
        let mut rows = Vec::new();
        let mut warnings = Vec::new();
        let base = config.problem.instantiate(seed, 0)?;
        let refs = solve_references(&base, config.engine, &config.solve_options)?;
        let mut last_vams = f64::NEG_INFINITY;
        for &mu in &config.mu_values {
            let instance = base.with_mu(mu)?;
            let result = solve_ams(
                &instance,
                config.method,
                config.engine,
                &config.solve_options,
                &config.decomposition,
            )?;
            let value = vams(refs.z_2sp, result.objective, refs.z_msp)?;
            let excluded = !result.status.is_optimal();
            if !excluded && value.percent + tol::REL * 100.0 < last_vams {
                warnings.push(format!(
                    "seed {seed}: VAMS decreased from {last_vams:.4} to {:.4} at mu={mu}",
                    value.percent
                ));
            }
            last_vams = last_vams.max(value.percent);
            rows.push(ReportRow {
                problem: config.problem.name().into(),
                method: config.method.name().into(),
                seed: seed.to_string(),
                stages: instance.tree().num_stages(),
                branching: instance.tree().branching(),
                states: instance.state_dim(),
                mu,
                schedule: result.schedule,
                objective: Some(result.objective),
                vams_percent: Some(value.percent),
                wall_seconds: result.wall_seconds,
                solver_status: format!("{:?}", result.status),
                solver_gap: Some(result.gap),
                nac_count: result.nac_count,
                config_hash: hash.clone(),
                excluded,
            });
        }
        Ok((rows, warnings))
    })?;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (r, w) in per_seed {
        rows.extend(r);
        warnings.extend(w);
    }
    let averages = config
        .mu_values
        .iter()
        .map(|&mu| {
            let included: Vec<f64> = rows
                .iter()
                .filter(|r| r.mu == mu && !r.excluded)
                .filter_map(|r| r.vams_percent)
                .collect();
            let mean = if included.is_empty() {
                f64::NAN
            } else {
                included.iter().sum::<f64>() / included.len() as f64
            };
            (mu, mean, included.len())
        })
        .collect();
    Ok(SweepOutput {
        rows,
        averages,
        warnings,
    })
}

/// Output of [`enumerate_revisions`].
#[derive(Debug, Clone)]
pub struct EnumerationOutput {
    pub rows: Vec<ReportRow>,
    /// Schedules attaining the best objective, as display strings.
    pub best_schedules: Vec<String>,
    pub best_objective: f64,
}

/// Solves the fixed-schedule model for every schedule with exactly `mu`
/// revisions per state variable; the `enumerate-revisions` subcommand.
/// Guarded to [`ENUMERATION_GUARD`] schedules.
pub fn enumerate_revisions(
    config: &ExperimentConfig,
    seed: u64,
    mu: usize,
) -> Result<EnumerationOutput, HarnessError> {
    let instance = config.problem.instantiate(seed, mu)?;
    let t = instance.tree().num_stages();
    let count = RevisionSchedule::count_exact(instance.state_dim(), t, mu);
    if count > ENUMERATION_GUARD {
        return Err(HarnessError::GuardExceeded {
            schedules: count,
            limit: ENUMERATION_GUARD,
        });
    }
    let refs = solve_references(&instance, config.engine, &config.solve_options)?;
    let hash = config.hash();
    let mut rows = Vec::new();
    let mut best_objective = f64::INFINITY;
    for schedule in RevisionSchedule::enumerate_exact(instance.state_dim(), t, mu) {
        let built = fix_revisions(&instance, &schedule, false)?;
        let out = config.engine.solve_milp(&built.model, &config.solve_options)?;
        require_optimal("fixed-schedule solve", &out)?;
        let value = vams(refs.z_2sp, out.objective, refs.z_msp)?;
        best_objective = best_objective.min(out.objective);
        rows.push(ReportRow {
            problem: config.problem.name().into(),
            method: "fixed-schedule".into(),
            seed: seed.to_string(),
            stages: t,
            branching: instance.tree().branching(),
            states: instance.state_dim(),
            mu,
            schedule: schedule.to_string(),
            objective: Some(out.objective),
            vams_percent: Some(value.percent),
            wall_seconds: out.wall_time.as_secs_f64(),
            solver_status: format!("{:?}", out.status),
            solver_gap: Some(out.gap),
            nac_count: built.nac_rows.len() as u64,
            config_hash: hash.clone(),
            excluded: false,
        });
    }
    let best_schedules = rows
        .iter()
        .filter(|r| {
            r.objective
                .map(|z| z <= best_objective + tol::objective_tol(best_objective))
                .unwrap_or(false)
        })
        .map(|r| r.schedule.clone())
        .collect();
    Ok(EnumerationOutput {
        rows,
        best_schedules,
        best_objective,
    })
}

/// Output of [`compare_methods`].
#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub rows: Vec<ReportRow>,
    /// Wall-time per method, summed over seeds and budgets.
    pub total_wall: Vec<(String, f64)>,
    /// Objective disagreements beyond tolerance, as human-readable notes.
    pub disagreements: Vec<String>,
}

/// Runs direct-full, direct-reduced, and the decomposition on the same
/// instances; the `compare` subcommand.
pub fn compare_methods(config: &ExperimentConfig) -> Result<CompareOutput, HarnessError> {
    config.validate()?;
    let hash = config.hash();
    let methods = [Method::DirectFull, Method::DirectReduced, Method::Decomposition];
    let per_seed = config.over_seeds(|seed| -> Result<Vec<ReportRow>, HarnessError> {
        let mut rows = Vec::new();
        for &mu in &config.mu_values {
            let instance = config.problem.instantiate(seed, mu)?;
            for method in methods {
                let result = solve_ams(
                    &instance,
                    method,
                    config.engine,
                    &config.solve_options,
                    &config.decomposition,
                )?;
                rows.push(ReportRow {
                    problem: config.problem.name().into(),
                    method: method.name().into(),
                    seed: seed.to_string(),
                    stages: instance.tree().num_stages(),
                    branching: instance.tree().branching(),
                    states: instance.state_dim(),
                    mu,
                    schedule: result.schedule,
                    objective: Some(result.objective),
                    vams_percent: None,
                    wall_seconds: result.wall_seconds,
                    solver_status: format!("{:?}", result.status),
                    solver_gap: Some(result.gap),
                    nac_count: result.nac_count,
                    config_hash: hash.clone(),
                    excluded: !result.status.is_optimal(),
                });
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<ReportRow> = per_seed.into_iter().flatten().collect();

    let mut disagreements = Vec::new();
    for chunk in rows.chunks(methods.len()) {
        let reference = chunk[0].objective.unwrap_or(f64::NAN);
        for row in &chunk[1..] {
            let z = row.objective.unwrap_or(f64::NAN);
            let tolerance = if row.method == Method::Decomposition.name() {
                // the loop stops at its epsilon, not at MILP precision
                config.decomposition.epsilon * reference.abs().max(1.0)
            } else {
                tol::objective_tol(reference)
            };
            if chunk.iter().all(|r| !r.excluded) && (z - reference).abs() > tolerance {
                disagreements.push(format!(
                    "seed {} mu {}: {} = {reference}, {} = {z}",
                    chunk[0].seed, chunk[0].mu, chunk[0].method, row.method
                ));
            }
        }
    }
    let total_wall = methods
        .iter()
        .map(|m| {
            let total: f64 = rows
                .iter()
                .filter(|r| r.method == m.name())
                .map(|r| r.wall_seconds)
                .sum();
            (m.name().to_string(), total)
        })
        .collect();
    Ok(CompareOutput {
        rows,
        total_wall,
        disagreements,
    })
}

/// Solves one instance with one method; the `solve` subcommand.
pub fn solve_one(
    config: &ExperimentConfig,
    seed: u64,
    mu: usize,
) -> Result<(ReportRow, Option<DecompositionState>), HarnessError> {
    let instance = config.problem.instantiate(seed, mu)?;
    let result = solve_ams(
        &instance,
        config.method,
        config.engine,
        &config.solve_options,
        &config.decomposition,
    )?;
    let row = ReportRow {
        problem: config.problem.name().into(),
        method: config.method.name().into(),
        seed: seed.to_string(),
        stages: instance.tree().num_stages(),
        branching: instance.tree().branching(),
        states: instance.state_dim(),
        mu,
        schedule: result.schedule,
        objective: Some(result.objective),
        vams_percent: None,
        wall_seconds: result.wall_seconds,
        solver_status: format!("{:?}", result.status),
        solver_gap: Some(result.gap),
        nac_count: result.nac_count,
        config_hash: config.hash(),
        excluded: false,
    };
    Ok((row, result.state))
}
