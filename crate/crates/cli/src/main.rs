//! Command-line interface: NAC counting, instance generation, solving, and
//! the experiment commands, all reporting CSV.
//!
//! Exit codes: 0 success, 2 parameter error, 3 solver failure, 4 guard
//! exceeded.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use amsp_core::decomposition::DecompositionConfig;
use amsp_core::harness::{
    compare_methods, count_nacs, enumerate_revisions, solve_one, vams_sweep, ExperimentConfig,
    HarnessError, InstanceFile, Method, ProblemSpec,
};
use amsp_core::nac::NacRegime;
use amsp_core::problems::gep::GepOverrides;
use amsp_core::solver::{Engine, SolveOptions};

#[derive(Parser)]
#[command(
    name = "amsp",
    about = "Adaptive multistage stochastic programming toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug)]
struct CommonOpts {
    /// Random seed(s), comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0", global = false)]
    seed: Vec<u64>,
    /// Revision budget(s): `2`, `0,1,3`, or an inclusive range `0..4`.
    #[arg(long, default_value = "1")]
    mu: String,
    /// direct-full | direct-reduced | decomposition
    #[arg(long, default_value = "direct-reduced")]
    method: String,
    /// Relative gap at which the decomposition stops.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Stages removed for the truncated-horizon heuristic cuts.
    #[arg(long, default_value_t = 2)]
    horizon_cut: usize,
    /// Disable both decomposition accelerations (finite-convergence mode).
    #[arg(long)]
    exact: bool,
    /// Disable only the heuristic cuts.
    #[arg(long)]
    no_heuristic: bool,
    /// Disable only the relaxed-upper-bound gate.
    #[arg(long)]
    no_rub_gate: bool,
    /// Wall-clock limit per run, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// MILP engine: highs | clarabel-lp (LP fallback for dual-only solves).
    #[arg(long, default_value = "highs")]
    engine: String,
    /// Relative MILP gap tolerance per solve.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Worker threads for seed-parallel experiments.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl CommonOpts {
    fn mu_values(&self, limit: Option<usize>) -> Result<Vec<usize>, HarnessError> {
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| HarnessError::Parameter(format!("invalid budget `{s}`")))
        };
        let values = if let Some((lo, hi)) = self.mu.split_once("..") {
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(HarnessError::Parameter(format!(
                    "empty budget range {lo}..{hi}"
                )));
            }
            (lo..=hi).collect()
        } else {
            self.mu
                .split(',')
                .map(parse)
                .collect::<Result<Vec<_>, _>>()?
        };
        if let Some(limit) = limit {
            for &mu in &values {
                if mu >= limit {
                    return Err(HarnessError::Parameter(format!(
                        "budget {mu} outside 0..={}",
                        limit - 1
                    )));
                }
            }
        }
        Ok(values)
    }

    fn method(&self) -> Result<Method, HarnessError> {
        self.method.parse().map_err(HarnessError::Parameter)
    }

    fn engine(&self) -> Result<Engine, HarnessError> {
        self.engine.parse().map_err(HarnessError::Parameter)
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            gap_tol: self.gap,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            ..SolveOptions::default()
        }
    }

    fn decomposition(&self) -> Result<DecompositionConfig, HarnessError> {
        Ok(DecompositionConfig {
            epsilon: self.epsilon,
            horizon_cut: self.horizon_cut,
            heuristic: !(self.exact || self.no_heuristic),
            rub_gate: !(self.exact || self.no_rub_gate),
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            engine: self.engine()?,
            solve_options: SolveOptions {
                gap_tol: self.gap,
                ..SolveOptions::default()
            },
            ..DecompositionConfig::default()
        })
    }
}

/// Problem selection shared by the instance-based subcommands.
#[derive(Args, Debug)]
struct ProblemOpts {
    /// lotsizing | gep | file
    #[arg(long, default_value = "lotsizing")]
    problem: String,
    #[arg(long, default_value_t = 5)]
    stages: usize,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    /// Production sources (lot-sizing only).
    #[arg(long, default_value_t = 1)]
    sources: usize,
    /// Instance file path (for --problem file).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Unserved-demand penalty, $/MWh (generation planning).
    #[arg(long)]
    penalty: Option<f64>,
    /// Per-node build limit per technology (generation planning).
    #[arg(long)]
    build_limit: Option<u32>,
    /// Yearly interest rate (generation planning).
    #[arg(long)]
    interest: Option<f64>,
    /// Root demand level, MW (generation planning).
    #[arg(long)]
    root_demand: Option<f64>,
}

impl ProblemOpts {
    fn spec(&self) -> Result<ProblemSpec, HarnessError> {
        match self.problem.as_str() {
            "lotsizing" => Ok(ProblemSpec::LotSizing {
                stages: self.stages,
                branching: self.branching,
                sources: self.sources,
            }),
            "gep" => {
                let mut overrides = GepOverrides::default();
                if let Some(v) = self.penalty {
                    overrides.unserved_penalty = v;
                }
                if let Some(v) = self.build_limit {
                    overrides.build_limit = v;
                }
                if let Some(v) = self.interest {
                    overrides.interest = v;
                }
                if let Some(v) = self.root_demand {
                    overrides.root_demand = v;
                }
                Ok(ProblemSpec::Gep {
                    stages: self.stages,
                    branching: self.branching,
                    overrides,
                })
            }
            "file" => {
                let path = self.instance.clone().ok_or_else(|| {
                    HarnessError::Parameter("--problem file requires --instance".into())
                })?;
                Ok(ProblemSpec::File { path })
            }
            other => Err(HarnessError::Parameter(format!(
                "unknown problem `{other}` (expected lotsizing, gep or file)"
            ))),
        }
    }

    fn stage_limit(&self) -> Option<usize> {
        match self.problem.as_str() {
            "file" => None, // taken from the file
            _ => Some(self.stages),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form NAC counts per (ancestor stage, stage) cell, as CSV.
    CountNacs {
        #[arg(long, default_value_t = 10)]
        stages: usize,
        #[arg(long, default_value_t = 2)]
        branching: usize,
        /// full | consecutive | ancestor | reduced
        #[arg(long, default_value = "reduced")]
        regime: String,
        /// Number of state variables scaling the total.
        #[arg(long, default_value_t = 1)]
        states: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Generate an instance and write it as a JSON document.
    Gen {
        #[command(flatten)]
        problem: ProblemOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve one instance with one method and report a CSV row.
    Solve {
        #[command(flatten)]
        problem: ProblemOpts,
        /// Write the model in LP text format before solving.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        /// Write the decomposition iteration log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve the references and the adaptive model over budgets and seeds.
    VamsSweep {
        #[command(flatten)]
        problem: ProblemOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve the frozen model for every schedule with exactly the given
    /// number of revisions.
    EnumerateRevisions {
        #[command(flatten)]
        problem: ProblemOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run direct-full, direct-reduced, and the decomposition on the same
    /// instances and report wall times.
    Compare {
        #[command(flatten)]
        problem: ProblemOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn experiment_config(
    problem: &ProblemOpts,
    common: &CommonOpts,
) -> Result<ExperimentConfig, HarnessError> {
    Ok(ExperimentConfig {
        problem: problem.spec()?,
        mu_values: common.mu_values(problem.stage_limit())?,
        seeds: common.seed.clone(),
        method: common.method()?,
        decomposition: common.decomposition()?,
        engine: common.engine()?,
        solve_options: common.solve_options(),
        workers: common.workers,
    })
}

fn write_rows(out: &Option<PathBuf>, rows: &[amsp_core::harness::ReportRow]) -> Result<(), HarnessError> {
    match out {
        Some(path) => amsp_core::harness::write_rows_path(path, rows)?,
        None => amsp_core::harness::write_rows(std::io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::CountNacs {
            stages,
            branching,
            regime,
            states,
            common,
        } => {
            let regime: NacRegime = regime.parse().map_err(HarnessError::Parameter)?;
            let mu_values = common.mu_values(Some(stages))?;
            let report = count_nacs(stages, branching, mu_values[0], states, regime)?;
            match &common.out {
                Some(path) => report.write_csv(std::fs::File::create(path)?)?,
                None => report.write_csv(std::io::stdout().lock())?,
            }
            eprintln!(
                "regime={} stages={} branching={} mu={} states={} total={}",
                report.regime.name(),
                report.stages,
                report.branching,
                report.mu,
                report.states,
                report.total
            );
            Ok(())
        }
        Command::Gen { problem, common } => {
            let spec = problem.spec()?;
            let mu_values = common.mu_values(problem.stage_limit())?;
            let instance = spec.instantiate(common.seed[0], mu_values[0])?;
            let file = InstanceFile::from_instance(&instance, None);
            match &common.out {
                Some(path) => file.write_path(path)?,
                None => file.write(std::io::stdout().lock())?,
            }
            eprintln!(
                "generated {} instance: stages={} branching={} states={} mu={}",
                spec.name(),
                instance.tree().num_stages(),
                instance.tree().branching(),
                instance.state_dim(),
                instance.mu()
            );
            Ok(())
        }
        Command::Solve {
            problem,
            dump_lp,
            log,
            common,
        } => {
            let config = experiment_config(&problem, &common)?;
            let seed = config.seeds[0];
            let mu = config.mu_values[0];
            if let Some(path) = &dump_lp {
                let instance = config.problem.instantiate(seed, mu)?;
                let built = match config.method {
                    Method::DirectFull => amsp_core::model::build_ams(
                        &instance,
                        &amsp_core::model::AmsOptions::full(),
                    )?,
                    _ => amsp_core::model::build_ams(
                        &instance,
                        &amsp_core::model::AmsOptions::reduced(),
                    )?,
                };
                built
                    .model
                    .write_lp(&mut std::io::BufWriter::new(std::fs::File::create(path)?))?;
            }
            let (row, state) = solve_one(&config, seed, mu)?;
            if let (Some(path), Some(state)) = (&log, &state) {
                amsp_core::harness::write_iteration_log_path(path, &state.iterations)?;
            }
            if let Some(state) = &state {
                for warning in &state.warnings {
                    eprintln!("warning: {warning}");
                }
            }
            write_rows(&common.out, &[row])?;
            Ok(())
        }
        Command::VamsSweep { problem, common } => {
            let config = experiment_config(&problem, &common)?;
            let output = vams_sweep(&config)?;
            write_rows(&common.out, &output.rows)?;
            for (mu, mean, n) in &output.averages {
                eprintln!("mu={mu}: mean VAMS {mean:.2}% over {n} seeds");
            }
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            Ok(())
        }
        Command::EnumerateRevisions { problem, common } => {
            let config = experiment_config(&problem, &common)?;
            let seed = config.seeds[0];
            let mu = config.mu_values[0];
            let output = enumerate_revisions(&config, seed, mu)?;
            write_rows(&common.out, &output.rows)?;
            eprintln!(
                "best objective {} at schedules: {}",
                output.best_objective,
                output.best_schedules.join(" ")
            );
            Ok(())
        }
        Command::Compare { problem, common } => {
            let config = experiment_config(&problem, &common)?;
            let output = compare_methods(&config)?;
            write_rows(&common.out, &output.rows)?;
            for (method, seconds) in &output.total_wall {
                eprintln!("{method}: total wall {seconds:.3}s");
            }
            for note in &output.disagreements {
                eprintln!("objective disagreement: {note}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
