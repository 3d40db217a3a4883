//! Generation and counting of non-anticipativity constraints (NACs) linking
//! state variables across scenario-tree nodes.
//!
//! Four regimes are supported, from the quadratic all-pairs family to the
//! fully reduced family that survives all three elimination rules:
//!
//! * [`NacRegime::Full`] - every ordered node pair of every stage-`t_a`
//!   subtree, for every ancestor stage;
//! * [`NacRegime::Consecutive`] - only cyclically consecutive node pairs
//!   within each subtree slice;
//! * [`NacRegime::Ancestor`] - consecutive pairs attributed to the stage of
//!   their last common ancestor only;
//! * [`NacRegime::Reduced`] - additionally drops ancestor stages that the
//!   revision budget makes redundant, keeping `t' - t_a <= T - mu - 1`.
//!
//! Each constraint is stored in its canonical `>=` orientation
//! `x[i,left] >= x[i,right] - big_m * (r[i,stage] - r[i,ancestor_stage])`.
//! The paired `<=` variant of the full regime is represented by also emitting
//! the mirrored ordered pair, which is algebraically identical.

use crate::tree::{NodeId, ScenarioTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NacError {
    #[error("revision budget {mu} must satisfy 0 <= mu <= {limit} (T - 1)")]
    BudgetOutOfRange { mu: usize, limit: usize },
    #[error("at least one state variable is required")]
    NoStateVariables,
    #[error("state bound {value} for state {index} must be positive and finite")]
    InvalidBound { index: usize, value: f64 },
    #[error("constraint count overflows u64")]
    CountOverflow,
}

/// Which elimination rules are applied when generating or counting NACs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NacRegime {
    Full,
    Consecutive,
    Ancestor,
    Reduced,
}

impl NacRegime {
    pub const ALL: [NacRegime; 4] = [
        NacRegime::Full,
        NacRegime::Consecutive,
        NacRegime::Ancestor,
        NacRegime::Reduced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NacRegime::Full => "full",
            NacRegime::Consecutive => "consecutive",
            NacRegime::Ancestor => "ancestor",
            NacRegime::Reduced => "reduced",
        }
    }
}

impl std::str::FromStr for NacRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(NacRegime::Full),
            "consecutive" => Ok(NacRegime::Consecutive),
            "ancestor" => Ok(NacRegime::Ancestor),
            "reduced" => Ok(NacRegime::Reduced),
            other => Err(format!(
                "unknown NAC regime `{other}` (expected full, consecutive, ancestor or reduced)"
            )),
        }
    }
}

/// One linear non-anticipativity inequality in `>=` orientation:
///
/// `x[state,left] >= x[state,right] - big_m * (r[state,stage] - r[state,ancestor_stage])`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NacConstraint {
    /// State-variable index `i`, zero-based.
    pub state: usize,
    pub left: NodeId,
    pub right: NodeId,
    /// Stage `t'` of both nodes.
    pub stage: usize,
    /// Ancestor stage `t_a` whose revision counter deactivates the link.
    pub ancestor_stage: usize,
    /// Upper bound of the state variable, used as the big-M coefficient.
    pub big_m: f64,
}

impl NacConstraint {
    /// Gap `r[i,stage] - r[i,ancestor_stage]` of a fixed revision matrix,
    /// given as one row per state variable.
    pub fn revision_gap(&self, revisions: &[Vec<u32>]) -> u32 {
        let row = &revisions[self.state];
        row[self.stage - 1] - row[self.ancestor_stage - 1]
    }
}

/// A generated NAC collection together with its provenance.
#[derive(Debug, Clone)]
pub struct NacSet {
    pub regime: NacRegime,
    pub mu: usize,
    pub state_dim: usize,
    pub constraints: Vec<NacConstraint>,
}

impl NacSet {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Constraint count per (ancestor stage, stage) cell for one state
    /// variable, for comparison with [`count_cells`]. Counts must be uniform
    /// across state variables by construction.
    pub fn tally_cells(&self, num_stages: usize) -> CellMatrix {
        let mut m = CellMatrix::zero(num_stages);
        for c in self.constraints.iter().filter(|c| c.state == 0) {
            *m.cell_mut(c.ancestor_stage, c.stage) += 1;
        }
        m
    }
}

/// Ancestor stages whose NACs are kept for constraint stage `t'` under
/// revision budget `mu`: `max(1, t' - (T - mu) + 1) ..= t' - 1`, half-open.
pub fn ancestor_window(num_stages: usize, mu: usize, stage: usize) -> std::ops::Range<usize> {
    let lo = (stage + mu + 1).saturating_sub(num_stages).max(1);
    lo..stage
}

fn validate(tree: &ScenarioTree, mu: usize, state_bounds: &[f64]) -> Result<(), NacError> {
    let limit = tree.num_stages() - 1;
    if mu > limit {
        return Err(NacError::BudgetOutOfRange { mu, limit });
    }
    if state_bounds.is_empty() {
        return Err(NacError::NoStateVariables);
    }
    for (i, &b) in state_bounds.iter().enumerate() {
        if !(b > 0.0 && b.is_finite()) {
            return Err(NacError::InvalidBound { index: i, value: b });
        }
    }
    Ok(())
}

/// Generates the all-pairs NAC family of the unreduced adaptive formulation.
/// `state_bounds` supplies one big-M per state variable.
pub fn generate_full_nacs(
    tree: &ScenarioTree,
    mu: usize,
    state_bounds: &[f64],
) -> Result<NacSet, NacError> {
    generate(tree, NacRegime::Full, mu, state_bounds)
}

/// Generates the reduced NAC family: consecutive pairs, attributed to their
/// last-common-ancestor stage, restricted to the budget window.
pub fn generate_reduced_nacs(
    tree: &ScenarioTree,
    mu: usize,
    state_bounds: &[f64],
) -> Result<NacSet, NacError> {
    generate(tree, NacRegime::Reduced, mu, state_bounds)
}

/// Generates the NAC family of any regime.
pub fn generate(
    tree: &ScenarioTree,
    regime: NacRegime,
    mu: usize,
    state_bounds: &[f64],
) -> Result<NacSet, NacError> {
    validate(tree, mu, state_bounds)?;
    let t_max = tree.num_stages();
    let mut constraints = Vec::new();
    let mut push = |state: usize,
                    left: NodeId,
                    right: NodeId,
                    stage: usize,
                    ancestor_stage: usize,
                    big_m: f64| {
        if left != right {
            constraints.push(NacConstraint {
                state,
                left,
                right,
                stage,
                ancestor_stage,
                big_m,
            });
        }
    };

    for (state, &big_m) in state_bounds.iter().enumerate() {
        for stage in 2..=t_max {
            let ancestors: Vec<usize> = match regime {
                NacRegime::Full | NacRegime::Consecutive => (1..stage).collect(),
                NacRegime::Ancestor => ancestor_window(t_max, 0, stage).collect(),
                NacRegime::Reduced => ancestor_window(t_max, mu, stage).collect(),
            };
            for ta in ancestors {
                for l in tree.stage_nodes(ta).expect("valid stage") {
                    let slice = tree
                        .subtree_stage_nodes(l, stage)
                        .expect("stage below node");
                    match regime {
                        NacRegime::Full => {
                            for m in slice.iter() {
                                for n in slice.iter() {
                                    push(state, m, n, stage, ta, big_m);
                                }
                            }
                        }
                        NacRegime::Consecutive => {
                            // cyclic chain over the whole subtree slice
                            let mut nodes = slice.iter();
                            let first = nodes.next().expect("non-empty slice");
                            let mut prev = first;
                            for n in nodes {
                                push(state, prev, n, stage, ta, big_m);
                                prev = n;
                            }
                            push(state, prev, first, stage, ta, big_m);
                        }
                        NacRegime::Ancestor | NacRegime::Reduced => {
                            // One link per child-subtree boundary, cyclically
                            // closed, so every consecutive pair is attributed
                            // to exactly its last-common-ancestor stage.
                            let children: Vec<NodeId> = tree.children(l).collect();
                            let b = children.len();
                            for j in 0..b {
                                let cur = tree
                                    .subtree_stage_nodes(children[j], stage)
                                    .expect("stage below child");
                                let next = tree
                                    .subtree_stage_nodes(children[(j + 1) % b], stage)
                                    .expect("stage below child");
                                push(state, cur.last(), next.first(), stage, ta, big_m);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(NacSet {
        regime,
        mu,
        state_dim: state_bounds.len(),
        constraints,
    })
}

/// Per-(ancestor stage, stage) constraint counts for a single state variable.
///
/// Rows are ancestor stages `1..=T-1`, columns are constraint stages `2..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMatrix {
    num_stages: usize,
    cells: Vec<u64>,
}

impl CellMatrix {
    fn zero(num_stages: usize) -> Self {
        let side = num_stages.saturating_sub(1);
        Self {
            num_stages,
            cells: vec![0; side * side],
        }
    }

    fn pos(&self, ancestor: usize, stage: usize) -> usize {
        debug_assert!((1..self.num_stages).contains(&ancestor));
        debug_assert!((2..=self.num_stages).contains(&stage));
        (ancestor - 1) * (self.num_stages - 1) + (stage - 2)
    }

    pub fn num_stages(&self) -> usize {
        self.num_stages
    }

    pub fn cell(&self, ancestor: usize, stage: usize) -> u64 {
        self.cells[self.pos(ancestor, stage)]
    }

    fn cell_mut(&mut self, ancestor: usize, stage: usize) -> &mut u64 {
        let p = self.pos(ancestor, stage);
        &mut self.cells[p]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// Iterates `(ancestor_stage, stage, count)` over the upper triangle.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        let t = self.num_stages;
        (1..t).flat_map(move |ta| (ta + 1..=t).map(move |tp| (ta, tp, self.cell(ta, tp))))
    }
}

/// Closed-form constraint counts per (ancestor stage, stage) cell for one
/// state variable. Cells below the diagonal (`stage <= ancestor`) are zero.
///
/// A branching factor of 1 yields a chain tree with singleton stages, hence
/// zero constraints in every regime.
pub fn count_cells(tree: &ScenarioTree, regime: NacRegime, mu: usize) -> Result<CellMatrix, NacError> {
    validate(tree, mu, &[1.0])?;
    let t_max = tree.num_stages();
    let b = tree.branching() as u128;
    let mut m = CellMatrix::zero(t_max);
    if tree.branching() == 1 {
        return Ok(m);
    }
    for ta in 1..t_max {
        for tp in ta + 1..=t_max {
            let count: u128 = match regime {
                NacRegime::Full => {
                    // ordered pairs within each subtree slice
                    let k = b.pow((tp - ta) as u32);
                    b.pow((ta - 1) as u32) * k * (k - 1)
                }
                NacRegime::Consecutive => b.pow((tp - 1) as u32),
                NacRegime::Ancestor => b.pow(ta as u32),
                NacRegime::Reduced => {
                    if tp - ta <= t_max - mu - 1 {
                        b.pow(ta as u32)
                    } else {
                        0
                    }
                }
            };
            *m.cell_mut(ta, tp) = u64::try_from(count).map_err(|_| NacError::CountOverflow)?;
        }
    }
    Ok(m)
}

/// Total NAC count over all cells, scaled by the number of state variables.
pub fn count_total(
    tree: &ScenarioTree,
    regime: NacRegime,
    mu: usize,
    state_dim: usize,
) -> Result<u64, NacError> {
    if state_dim == 0 {
        return Err(NacError::NoStateVariables);
    }
    let per_state = count_cells(tree, regime, mu)?.total();
    per_state
        .checked_mul(state_dim as u64)
        .ok_or(NacError::CountOverflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(t: usize, b: usize) -> ScenarioTree {
        ScenarioTree::uniform(t, b).unwrap()
    }

    #[test]
    fn full_count_t5_b2() {
        assert_eq!(count_total(&tree(5, 2), NacRegime::Full, 0, 1).unwrap(), 522);
    }

    #[test]
    fn full_count_t10_b2() {
        assert_eq!(
            count_total(&tree(10, 2), NacRegime::Full, 0, 1).unwrap(),
            688_810
        );
    }

    #[test]
    fn full_count_t2_b2_is_one_pair_both_directions() {
        let set = generate_full_nacs(&tree(2, 2), 0, &[1.0]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.constraints[0].left, NodeId(2));
        assert_eq!(set.constraints[0].right, NodeId(3));
        assert_eq!(set.constraints[1].left, NodeId(3));
        assert_eq!(set.constraints[1].right, NodeId(2));
    }

    #[test]
    fn reduced_counts_match_reference_totals() {
        let cases = [
            (5, 2, 2, 44),
            (5, 2, 4, 0),
            (10, 2, 2, 2018),
            (10, 2, 4, 1974),
            (5, 3, 2, 159),
            (10, 3, 2, 44_256),
            (10, 3, 4, 44_097),
        ];
        for (t, b, mu, expected) in cases {
            assert_eq!(
                count_total(&tree(t, b), NacRegime::Reduced, mu, 1).unwrap(),
                expected,
                "T={t} B={b} mu={mu}"
            );
        }
    }

    #[test]
    fn consecutive_and_ancestor_totals_t10_b2() {
        assert_eq!(
            count_total(&tree(10, 2), NacRegime::Consecutive, 0, 1).unwrap(),
            8194
        );
        assert_eq!(
            count_total(&tree(10, 2), NacRegime::Ancestor, 0, 1).unwrap(),
            2026
        );
    }

    #[test]
    fn cell_values_match_reference_tables() {
        let t10 = tree(10, 2);
        let full = count_cells(&t10, NacRegime::Full, 0).unwrap();
        assert_eq!(full.cell(1, 3), 12);
        assert_eq!(full.cell(1, 2), 2);
        assert_eq!(full.cell(2, 4), 24);
        let anc = count_cells(&t10, NacRegime::Ancestor, 0).unwrap();
        assert_eq!(anc.cell(2, 10), 4);
        let red4 = count_cells(&t10, NacRegime::Reduced, 4).unwrap();
        assert_eq!(red4.cell(1, 7), 0);
        assert_eq!(red4.cell(1, 6), 2);
        assert_eq!(red4.cell(5, 10), 32);
    }

    #[test]
    fn generated_sets_match_closed_form_cells() {
        for (t, b) in [(2, 2), (4, 2), (5, 2), (4, 3), (3, 4), (5, 1)] {
            let tr = tree(t, b);
            for regime in NacRegime::ALL {
                for mu in 0..t {
                    let set = generate(&tr, regime, mu, &[1.0, 2.0]).unwrap();
                    let cells = count_cells(&tr, regime, mu).unwrap();
                    assert_eq!(
                        set.len() as u64,
                        2 * cells.total(),
                        "T={t} B={b} regime={} mu={mu}",
                        regime.name()
                    );
                    assert_eq!(set.tally_cells(t), cells);
                }
            }
        }
    }

    #[test]
    fn reduced_is_empty_at_maximum_budget() {
        for (t, b) in [(3, 2), (5, 2), (4, 3)] {
            let set = generate_reduced_nacs(&tree(t, b), t - 1, &[1.0]).unwrap();
            assert!(set.is_empty());
        }
    }

    #[test]
    fn ancestor_window_bounds() {
        // T = 10, mu = 4: keep t' - t_a <= 5
        assert_eq!(ancestor_window(10, 4, 7), 2..7);
        assert_eq!(ancestor_window(10, 4, 2), 1..2);
        // mu = T - 1 leaves no admissible ancestor stage
        assert!(ancestor_window(5, 4, 3).is_empty());
        // mu = 0 keeps the whole history
        assert_eq!(ancestor_window(5, 0, 4), 1..4);
    }

    #[test]
    fn reduced_links_cross_child_boundaries() {
        // stage 4 of the T=4, B=2 tree spans nodes 8..=15; the two subtrees
        // under the root children cover 8..=11 and 12..=15
        let set = generate(&tree(4, 2), NacRegime::Reduced, 0, &[1.0]).unwrap();
        let cell_1_4: Vec<(usize, usize)> = set
            .constraints
            .iter()
            .filter(|c| c.ancestor_stage == 1 && c.stage == 4)
            .map(|c| (c.left.0, c.right.0))
            .collect();
        assert_eq!(cell_1_4, vec![(11, 12), (15, 8)]);
    }

    #[test]
    fn constraints_carry_state_bounds() {
        let set = generate_reduced_nacs(&tree(3, 2), 1, &[1.0, 7.5]).unwrap();
        assert!(set
            .constraints
            .iter()
            .all(|c| (c.state == 0 && c.big_m == 1.0) || (c.state == 1 && c.big_m == 7.5)));
    }

    #[test]
    fn structural_invariants_hold() {
        let tr = tree(5, 2);
        for regime in NacRegime::ALL {
            let set = generate(&tr, regime, 2, &[1.0]).unwrap();
            for c in &set.constraints {
                assert!(c.ancestor_stage < c.stage);
                assert_ne!(c.left, c.right);
                assert_eq!(tr.stage_of(c.left), c.stage);
                assert_eq!(tr.stage_of(c.right), c.stage);
                // both nodes share an ancestor at the attributed stage
                let pl = tr.path_to_root(c.left).unwrap();
                let pr = tr.path_to_root(c.right).unwrap();
                assert_eq!(pl[c.ancestor_stage - 1], pr[c.ancestor_stage - 1]);
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        let tr = tree(4, 2);
        assert_eq!(
            generate_reduced_nacs(&tr, 4, &[1.0]).unwrap_err(),
            NacError::BudgetOutOfRange { mu: 4, limit: 3 }
        );
        assert_eq!(
            generate_full_nacs(&tr, 0, &[]).unwrap_err(),
            NacError::NoStateVariables
        );
        assert!(matches!(
            generate_full_nacs(&tr, 0, &[0.0]).unwrap_err(),
            NacError::InvalidBound { index: 0, .. }
        ));
    }
}
