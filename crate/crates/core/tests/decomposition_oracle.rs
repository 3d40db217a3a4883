//! Brute-force validation of the decomposition: every generated cut is
//! checked against re-solved subproblem values over all enumerable
//! schedules, and full runs are checked against schedule enumeration.

mod support;

use amsp_core::decomposition::{run, CutKind, DecompositionConfig, RunStatus};
use amsp_core::model::{build_ams, fix_revisions, AmsOptions, RevisionSchedule};
use amsp_core::problems::lotsizing;
use amsp_core::tol;
use amsp_core::tree::ScenarioTree;
use support::optimum;

#[test]
fn exact_mode_matches_enumeration_minimum() {
    let tree = ScenarioTree::uniform(5, 2).unwrap();
    for seed in [1, 2] {
        let instance = lotsizing::generate(&tree, 1, seed, 1).unwrap();
        let state = run(&instance, &DecompositionConfig::exact()).unwrap();
        assert_eq!(state.status, RunStatus::Converged);

        let best = RevisionSchedule::enumerate_exact(1, 5, 1)
            .iter()
            .map(|s| optimum(&fix_revisions(&instance, s, false).unwrap().model))
            .fold(f64::INFINITY, f64::min);
        assert!(
            (state.upper_bound - best).abs() <= 1e-3 * best.abs().max(1.0),
            "seed {seed}: {} vs enumerated {best}",
            state.upper_bound
        );
        // termination contract: closed gap and incumbent value
        assert!(1.0 - state.lower_bound / state.upper_bound < state.epsilon);
        let incumbent = state.incumbent.clone().unwrap();
        let z_incumbent = optimum(&fix_revisions(&instance, &incumbent, false).unwrap().model);
        assert!(tol::objectives_equal(z_incumbent, state.upper_bound));
    }
}

#[test]
fn budgetless_run_terminates_in_one_iteration() {
    let tree = ScenarioTree::uniform(4, 2).unwrap();
    let instance = lotsizing::generate(&tree, 1, 4, 0).unwrap();
    let state = run(&instance, &DecompositionConfig::exact()).unwrap();
    assert_eq!(state.iterations.len(), 1);
    let z_2sp = optimum(&amsp_core::model::build_2sp(&instance).model);
    assert!(tol::objectives_equal(state.upper_bound, z_2sp));
}

#[test]
fn bounds_are_monotone_and_sandwiched() {
    let tree = ScenarioTree::uniform(5, 2).unwrap();
    let instance = lotsizing::generate(&tree, 1, 9, 2).unwrap();
    let state = run(&instance, &DecompositionConfig::exact()).unwrap();
    let z_ams = optimum(&build_ams(&instance, &AmsOptions::reduced()).unwrap().model);
    let mut last_lb = f64::NEG_INFINITY;
    let mut last_ub = f64::INFINITY;
    for record in &state.iterations {
        assert!(record.lower_bound >= last_lb - 1e-9);
        assert!(record.upper_bound <= last_ub + 1e-9);
        last_lb = record.lower_bound;
        last_ub = record.upper_bound;
        if record.upper_bound.is_finite() {
            assert!(state.multistage_bound <= record.upper_bound + 1e-9);
            assert!(z_ams <= record.upper_bound + tol::objective_tol(z_ams));
        }
        assert!(record.lower_bound <= z_ams + tol::objective_tol(z_ams));
    }
}

#[test]
fn all_cuts_valid_against_brute_force() {
    // every L-shaped cut bound must stay below the exact value, and every
    // Benders cut bound below the relaxed value, at every feasible schedule
    for (stages, mu, seed) in [(3, 1, 0), (4, 1, 1), (4, 2, 2)] {
        let tree = ScenarioTree::uniform(stages, 2).unwrap();
        let instance = lotsizing::generate(&tree, 1, seed, mu).unwrap();
        let state = run(&instance, &DecompositionConfig::exact()).unwrap();
        let schedules = RevisionSchedule::enumerate_up_to(1, stages, mu);
        for schedule in &schedules {
            let exact = optimum(&fix_revisions(&instance, schedule, false).unwrap().model);
            let relaxed = optimum(&fix_revisions(&instance, schedule, true).unwrap().model);
            for cut in &state.cuts.lshaped {
                assert!(
                    cut.bound_at(schedule) <= exact + tol::objective_tol(exact),
                    "T={stages} mu={mu} seed={seed}: L-shaped cut from {} exceeds Q at {schedule}",
                    cut.generator
                );
            }
            for cut in &state.cuts.benders {
                assert!(
                    cut.bound_at(schedule) <= relaxed + tol::objective_tol(relaxed),
                    "T={stages} mu={mu} seed={seed}: Benders cut from {} exceeds relaxed Q at {schedule}",
                    cut.generator
                );
            }
        }
        // cuts are tight at their generators
        for cut in state.cuts.lshaped.iter().chain(&state.cuts.benders) {
            assert!(
                (cut.bound_at(&cut.generator) - cut.generator_objective).abs()
                    <= tol::objective_tol(cut.generator_objective)
            );
        }
    }
}

#[test]
fn heuristic_mode_never_beats_and_often_matches_the_optimum() {
    // the accelerations are heuristic: the incumbent is always a feasible
    // schedule's exact value, hence never below the optimum, and it matches
    // the optimum whenever the truncated-horizon floors admit it
    let tree = ScenarioTree::uniform(5, 2).unwrap();
    let mut matched = 0;
    for seed in 0..5 {
        let instance = lotsizing::generate(&tree, 1, seed, 1).unwrap();
        let exact = run(&instance, &DecompositionConfig::exact()).unwrap();
        let default = run(&instance, &DecompositionConfig::default()).unwrap();
        assert!(
            default.upper_bound >= exact.upper_bound - tol::objective_tol(exact.upper_bound),
            "seed {seed}: heuristic incumbent {} beats the optimum {}",
            default.upper_bound,
            exact.upper_bound
        );
        let incumbent = default.incumbent.clone().unwrap();
        let z = optimum(&fix_revisions(&instance, &incumbent, false).unwrap().model);
        assert!(tol::objectives_equal(z, default.upper_bound));
        assert!(default
            .cuts
            .heuristic
            .iter()
            .all(|c| c.kind == CutKind::Heuristic));

        let floors_admit_optimum = {
            let best = exact.incumbent.clone().unwrap();
            default.cuts.heuristic.iter().all(|cut| {
                let (i, t, _) = cut.terms[0];
                best.counter(i, t) as f64 >= cut.constant - 1e-9
            })
        };
        if floors_admit_optimum {
            assert!(
                (default.upper_bound - exact.upper_bound).abs()
                    <= 1e-3 * exact.upper_bound.abs().max(1.0),
                "seed {seed}: floors admit the optimum but the run missed it"
            );
            matched += 1;
        }
    }
    assert!(matched >= 1, "floors excluded the optimum on every seed");
}

#[test]
fn heuristic_floors_come_from_kept_stages_only() {
    let tree = ScenarioTree::uniform(5, 2).unwrap();
    let instance = lotsizing::generate(&tree, 2, 1, 2).unwrap();
    let horizon_cut = 2;
    let seeded = amsp_core::decomposition::heuristic_cuts(
        &instance,
        horizon_cut,
        amsp_core::solver::Engine::Highs,
        &amsp_core::solver::SolveOptions::default(),
    )
    .unwrap();
    assert!(seeded.warning.is_none());
    for cut in &seeded.cuts {
        assert_eq!(cut.kind, CutKind::Heuristic);
        assert_eq!(cut.theta_coef, 0.0);
        let (_, t, coef) = cut.terms[0];
        assert!(t <= 5 - horizon_cut);
        assert_eq!(coef, 1.0);
        assert!(cut.constant >= 1.0 && cut.constant <= instance.mu() as f64);
    }
    // the extended start schedule is feasible for the full horizon
    let start = seeded.start.unwrap();
    assert_eq!(start.num_stages(), 5);
    assert!(start.revisions_used(0) <= instance.mu());
}

#[test]
fn removing_the_final_stage_keeps_the_loop_exact() {
    // heuristic cut with the largest horizon cut: the one-stage truncation
    // has no revisions at all, so the floors are vacuous and the run must
    // still reach the optimum
    let tree = ScenarioTree::uniform(4, 2).unwrap();
    let instance = lotsizing::generate(&tree, 1, 6, 1).unwrap();
    let seeded = amsp_core::decomposition::heuristic_cuts(
        &instance,
        3,
        amsp_core::solver::Engine::Highs,
        &amsp_core::solver::SolveOptions::default(),
    )
    .unwrap();
    assert!(seeded.cuts.is_empty());
    let config = DecompositionConfig {
        horizon_cut: 3,
        rub_gate: false,
        ..DecompositionConfig::default()
    };
    let state = run(&instance, &config).unwrap();
    let direct = optimum(&build_ams(&instance, &AmsOptions::reduced()).unwrap().model);
    assert!(
        (state.upper_bound - direct).abs() <= 1e-3 * direct.abs().max(1.0)
    );
}

#[test]
fn iteration_log_has_cut_counts_and_times() {
    let tree = ScenarioTree::uniform(4, 2).unwrap();
    let instance = lotsizing::generate(&tree, 1, 0, 1).unwrap();
    let state = run(&instance, &DecompositionConfig::exact()).unwrap();
    for (k, record) in state.iterations.iter().enumerate() {
        assert_eq!(record.iteration, k + 1);
        assert_eq!(record.benders_cuts, k + 1);
        assert!(record.elapsed_seconds >= 0.0);
    }
    assert_eq!(
        state.iterations.last().unwrap().benders_cuts,
        state.cuts.benders.len()
    );
}
