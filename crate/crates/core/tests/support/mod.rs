//! Shared helpers for solver-backed integration tests.
#![allow(dead_code)] // each test binary uses its own subset

use amsp_core::model::{
    AmspInstance, LinkRow, LinkTerm, NodeData, VarDomain, VarKind,
};
use amsp_core::solver::{Engine, Sense, SolveOptions};
use amsp_core::tree::ScenarioTree;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generic bounded instance with complete recourse: one stage variable per
/// node can always absorb the covering row on its own, so every revision
/// schedule is feasible. States are integer boxes `[0, 3]` unless
/// `continuous_states` is set.
pub fn random_instance(
    stages: usize,
    branching: usize,
    state_dim: usize,
    mu: usize,
    seed: u64,
    continuous_states: bool,
) -> AmspInstance {
    let tree = ScenarioTree::uniform(stages, branching).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = Uniform::new(0.5, 2.0).unwrap();
    let weight = Uniform::new(-1.0, 1.0).unwrap();
    let demand = Uniform::new(0.0, 4.0).unwrap();
    let node_data = tree
        .nodes()
        .map(|n| {
            let state_cost: Vec<f64> = (0..state_dim).map(|_| cost.sample(&mut rng)).collect();
            let stage_cost = vec![cost.sample(&mut rng)];
            let mut terms = vec![LinkTerm {
                node: n,
                kind: VarKind::Stage,
                index: 0,
                coef: 2.0,
            }];
            for i in 0..state_dim {
                terms.push(LinkTerm {
                    node: n,
                    kind: VarKind::State,
                    index: i,
                    coef: weight.sample(&mut rng),
                });
                if let Some(parent) = tree.parent(n) {
                    terms.push(LinkTerm {
                        node: parent,
                        kind: VarKind::State,
                        index: i,
                        coef: weight.sample(&mut rng),
                    });
                }
            }
            let rows = vec![LinkRow {
                terms,
                sense: Sense::Ge,
                rhs: demand.sample(&mut rng),
            }];
            let state_domain = if continuous_states {
                VarDomain::continuous(0.0, 3.0)
            } else {
                VarDomain::integer(0.0, 3.0)
            };
            NodeData {
                state_cost,
                stage_cost,
                rows,
                state_domains: vec![state_domain; state_dim],
                stage_domains: vec![VarDomain::continuous(0.0, 10.0)],
            }
        })
        .collect();
    AmspInstance::new(tree, state_dim, 1, node_data, vec![3.0; state_dim], mu).unwrap()
}

/// Solves a built model to optimality and returns the objective.
pub fn optimum(model: &amsp_core::solver::LinearModel) -> f64 {
    let out = Engine::Highs
        .solve_milp(model, &SolveOptions::with_gap(1e-9))
        .unwrap();
    assert!(
        out.status.is_optimal(),
        "expected optimal, got {:?}",
        out.status
    );
    out.objective
}
