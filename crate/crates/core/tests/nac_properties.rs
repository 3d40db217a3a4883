//! Structural properties of the NAC families: closed-form counts vs
//! enumeration, partition identities of the tree, and the equality closure
//! induced by active reduced constraints.

mod support;

use amsp_core::nac::{count_cells, generate, NacRegime};
use amsp_core::tree::{NodeId, ScenarioTree};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_counts_match_enumeration(
        stages in 1usize..7,
        branching in 1usize..4,
        mu_offset in 0usize..6,
        regime_pick in 0usize..4,
    ) {
        let tree = ScenarioTree::uniform(stages, branching).unwrap();
        let mu = mu_offset.min(stages - 1);
        let regime = NacRegime::ALL[regime_pick];
        let set = generate(&tree, regime, mu, &[1.0]).unwrap();
        let cells = count_cells(&tree, regime, mu).unwrap();
        prop_assert_eq!(set.len() as u64, cells.total());
        prop_assert_eq!(set.tally_cells(stages), cells);
    }

    #[test]
    fn subtree_slices_partition_stages(
        stages in 2usize..7,
        branching in 1usize..4,
    ) {
        let tree = ScenarioTree::uniform(stages, branching).unwrap();
        for t in 1..=stages {
            for tp in t..=stages {
                let mut covered = Vec::new();
                for l in tree.stage_nodes(t).unwrap() {
                    let slice = tree.subtree_stage_nodes(l, tp).unwrap();
                    prop_assert_eq!(slice.len(), branching.pow((tp - t) as u32));
                    covered.extend(slice.iter().map(|n| n.0));
                }
                let stage: Vec<usize> =
                    tree.stage_nodes(tp).unwrap().iter().map(|n| n.0).collect();
                prop_assert_eq!(covered, stage);
            }
        }
    }

    #[test]
    fn lca_stage_is_symmetric_and_below(
        branching in 2usize..4,
        pair_seed in 0usize..1000,
    ) {
        let stages = 4;
        let tree = ScenarioTree::uniform(stages, branching).unwrap();
        let leaves: Vec<NodeId> = tree.stage_nodes(stages).unwrap().into_iter().collect();
        let m = leaves[pair_seed % leaves.len()];
        let n = leaves[(pair_seed / leaves.len()) % leaves.len()];
        if m != n {
            let a = tree.lca_stage(m, n).unwrap();
            let b = tree.lca_stage(n, m).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a < stages);
        }
    }
}

/// Directed reachability over the constraints that are active (zero gap)
/// under a schedule. Mutual reachability of two nodes proves their state
/// values are forced equal by the chained inequalities.
fn mutually_reachable(
    edges: &[(usize, usize)],
    num_nodes: usize,
    from: usize,
    to: usize,
) -> bool {
    let reach = |a: usize, b: usize| {
        let mut adjacency = vec![Vec::new(); num_nodes + 1];
        for &(u, v) in edges {
            adjacency[u].push(v);
        }
        let mut seen = vec![false; num_nodes + 1];
        let mut stack = vec![a];
        while let Some(u) = stack.pop() {
            if u == b {
                return true;
            }
            if !std::mem::replace(&mut seen[u], true) {
                stack.extend(adjacency[u].iter().copied());
            }
        }
        false
    };
    reach(from, to) && reach(to, from)
}

/// Under any budget-binding schedule, the reduced constraints with zero
/// revision gap must chain exactly the node pairs that the unreduced
/// formulation would force equal: pairs whose last-common-ancestor stage
/// shows no revision up to the pair's stage.
#[test]
fn reduced_closure_matches_expected_equality_classes() {
    use amsp_core::model::RevisionSchedule;
    for (stages, branching, mu) in [(4, 2, 1), (4, 2, 2), (5, 2, 2), (4, 3, 1)] {
        let tree = ScenarioTree::uniform(stages, branching).unwrap();
        let set = generate(&tree, NacRegime::Reduced, mu, &[1.0]).unwrap();
        for schedule in RevisionSchedule::enumerate_exact(1, stages, mu) {
            let active: Vec<(usize, usize)> = set
                .constraints
                .iter()
                .filter(|c| schedule.gap(0, c.ancestor_stage, c.stage) == 0)
                .map(|c| (c.left.0, c.right.0))
                .collect();
            for t in 2..=stages {
                let nodes: Vec<NodeId> = tree.stage_nodes(t).unwrap().into_iter().collect();
                for &m in &nodes {
                    for &n in &nodes {
                        if m == n {
                            continue;
                        }
                        let lca = tree.lca_stage(m, n).unwrap();
                        let expect_equal = schedule.gap(0, lca, t) == 0;
                        let forced =
                            mutually_reachable(&active, tree.num_nodes(), m.0, n.0);
                        assert_eq!(
                            forced, expect_equal,
                            "T={stages} B={branching} mu={mu} schedule={schedule} pair=({m},{n})"
                        );
                    }
                }
            }
        }
    }
}

/// The budget window drops exactly the cells whose stage distance exceeds
/// `T - mu - 1`; at the maximum budget nothing remains.
#[test]
fn window_drops_far_cells() {
    let tree = ScenarioTree::uniform(6, 2).unwrap();
    for mu in 0..6 {
        let set = generate(&tree, NacRegime::Reduced, mu, &[1.0]).unwrap();
        let max_span = 6 - mu - 1;
        assert!(set
            .constraints
            .iter()
            .all(|c| c.stage - c.ancestor_stage <= max_span));
        if mu == 5 {
            assert!(set.is_empty());
        }
    }
}
