//! Adaptive multistage stochastic programming over scenario trees.
//!
//! The library models sequential decisions whose revision moments are
//! themselves optimized: state decisions may change at a limited number of
//! stages, chosen by the model, while stage decisions adjust freely. It
//! provides:
//!
//! * [`tree`] - balanced scenario trees with ancestry and subtree queries;
//! * [`nac`] - generation and closed-form counting of the
//!   non-anticipativity constraints linking state decisions, in four
//!   regimes from the quadratic all-pairs family down to the fully
//!   reduced boundary-pair family;
//! * [`model`] - generic instances and builders for the multistage,
//!   two-stage, adaptive, and fixed-schedule formulations;
//! * [`solver`] - a solver-agnostic model type with a HiGHS engine and a
//!   pure-Rust LP fallback for dual-only paths;
//! * [`decomposition`] - a cutting-plane loop over revision schedules
//!   combining integer L-shaped cuts, Benders cuts from the relaxed
//!   subproblem, and optional truncated-horizon heuristic cuts;
//! * [`problems`] - seeded generators for stochastic lot-sizing and
//!   generation expansion planning;
//! * [`harness`] - instance files, experiment commands, and CSV reports.

pub mod decomposition;
pub mod harness;
pub mod model;
pub mod nac;
pub mod problems;
pub mod solver;
pub mod tree;

pub use model::{AmspInstance, RevisionSchedule};
pub use nac::{NacConstraint, NacRegime, NacSet};
pub use solver::{Engine, LinearModel, SolveOutcome, SolveStatus};
pub use tree::{NodeId, ScenarioTree};

/// Objective-comparison tolerances used across equality properties:
/// relative `1e-6` with an absolute floor of `1e-8`.
pub mod tol {
    pub const REL: f64 = 1e-6;
    pub const ABS_FLOOR: f64 = 1e-8;

    /// Tolerance for comparing objective values of magnitude `scale`.
    pub fn objective_tol(scale: f64) -> f64 {
        (REL * scale.abs().max(1.0)).max(ABS_FLOOR)
    }

    /// Whether two objective values agree up to solver tolerance.
    pub fn objectives_equal(a: f64, b: f64) -> bool {
        (a - b).abs() <= objective_tol(a.abs().max(b.abs()))
    }
}
