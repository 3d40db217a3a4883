//! Generic adaptive-multistage instance data and formulation builders.
//!
//! An [`AmspInstance`] holds per-node costs, linking rows, and variable
//! domains over a scenario tree, split into a *state* block (decisions that
//! carry across stages and are subject to revision limits) and a *stage*
//! block (per-node recourse decisions). From one instance four families of
//! models are built:
//!
//! * [`build_msp`] - fully flexible multistage model, no NACs;
//! * [`build_2sp`] - state variables equal across every stage (chained);
//! * [`build_ams`] - adaptive model with integer revision counters and NACs
//!   from a chosen regime;
//! * [`fix_revisions`] - the adaptive model under a frozen revision schedule,
//!   optionally with integrality relaxed.

use crate::nac::{self, NacConstraint, NacRegime};
use crate::solver::{LinearModel, RowId, Sense, SolveOutcome, VarId};
use crate::tree::{NodeId, ScenarioTree};
use crate::tol;
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("revision budget {mu} must satisfy 0 <= mu <= {limit} (T - 1)")]
    BudgetOutOfRange { mu: usize, limit: usize },
    #[error("node {node}: expected {expected} {what} entries, got {got}")]
    DimensionMismatch {
        node: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {node} row {row} references node {referenced}, which is not on its root path")]
    RowReference {
        node: usize,
        row: usize,
        referenced: usize,
    },
    #[error("node {node} row {row} references {what} index {index} out of range")]
    RowIndex {
        node: usize,
        row: usize,
        what: &'static str,
        index: usize,
    },
    #[error("state {index}: bound {value} is not a positive finite number")]
    InvalidStateBound { index: usize, value: f64 },
    #[error("state {index} at node {node}: domain [{lower}, {upper}] must lie within [0, {bound}]")]
    StateDomain {
        index: usize,
        node: usize,
        lower: f64,
        upper: f64,
        bound: f64,
    },
    #[error("cannot truncate to {stages} stages; instance has {limit}")]
    InvalidTruncation { stages: usize, limit: usize },
    #[error("invalid revision schedule: {0}")]
    InvalidSchedule(String),
    #[error("objective ordering violated beyond tolerance: z_2sp={z_2sp}, z_ams={z_ams}, z_msp={z_msp}")]
    ObjectiveOrdering { z_2sp: f64, z_ams: f64, z_msp: f64 },
    #[error(transparent)]
    Nac(#[from] nac::NacError),
}

/// Box-plus-integrality domain of one variable at one node.
///
/// Infinite bounds serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarDomain {
    #[serde(with = "bound_serde::lower")]
    pub lower: f64,
    #[serde(with = "bound_serde::upper")]
    pub upper: f64,
    pub integer: bool,
}

mod bound_serde {
    macro_rules! bound_module {
        ($name:ident, $infinite:expr) => {
            pub mod $name {
                use serde::{Deserialize, Deserializer, Serializer};

                pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                    if v.is_finite() {
                        s.serialize_some(v)
                    } else {
                        s.serialize_none()
                    }
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                    Ok(Option::<f64>::deserialize(d)?.unwrap_or($infinite))
                }
            }
        };
    }

    bound_module!(lower, f64::NEG_INFINITY);
    bound_module!(upper, f64::INFINITY);
}

impl VarDomain {
    pub fn binary() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            integer: true,
        }
    }

    pub fn nonnegative() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
            integer: false,
        }
    }

    pub fn continuous(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            integer: false,
        }
    }

    pub fn integer(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            integer: true,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.integer && self.lower == 0.0 && self.upper == 1.0
    }
}

/// Which variable block a linking-row term refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    State,
    Stage,
}

/// One term of a linking row: a coefficient on variable `index` of `kind`
/// at `node`, which must lie on the root path of the owning node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkTerm {
    pub node: NodeId,
    pub kind: VarKind,
    pub index: usize,
    pub coef: f64,
}

/// A linking constraint owned by one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub terms: Vec<LinkTerm>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Data attached to one scenario-tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeData {
    /// Objective coefficients of the state block, length `I`.
    pub state_cost: Vec<f64>,
    /// Objective coefficients of the stage block, length `J`.
    pub stage_cost: Vec<f64>,
    pub rows: Vec<LinkRow>,
    pub state_domains: Vec<VarDomain>,
    pub stage_domains: Vec<VarDomain>,
}

/// A complete adaptive-multistage instance. Immutable once validated;
/// model building never mutates it.
#[derive(Debug, Clone)]
pub struct AmspInstance {
    tree: ScenarioTree,
    state_dim: usize,
    stage_dim: usize,
    node_data: Vec<NodeData>,
    /// Per-state upper bounds used as NAC big-M coefficients; forced to 1
    /// for states that are binary at every node.
    state_bounds: Vec<f64>,
    mu: usize,
}

impl AmspInstance {
    pub fn new(
        tree: ScenarioTree,
        state_dim: usize,
        stage_dim: usize,
        node_data: Vec<NodeData>,
        mut state_bounds: Vec<f64>,
        mu: usize,
    ) -> Result<Self, ModelError> {
        let limit = tree.num_stages() - 1;
        if mu > limit {
            return Err(ModelError::BudgetOutOfRange { mu, limit });
        }
        if node_data.len() != tree.num_nodes() {
            return Err(ModelError::DimensionMismatch {
                node: 0,
                what: "node data",
                expected: tree.num_nodes(),
                got: node_data.len(),
            });
        }
        if state_bounds.len() != state_dim {
            return Err(ModelError::DimensionMismatch {
                node: 0,
                what: "state bound",
                expected: state_dim,
                got: state_bounds.len(),
            });
        }
        for n in tree.nodes() {
            let data = &node_data[n.index()];
            for (what, expected, got) in [
                ("state cost", state_dim, data.state_cost.len()),
                ("stage cost", stage_dim, data.stage_cost.len()),
                ("state domain", state_dim, data.state_domains.len()),
                ("stage domain", stage_dim, data.stage_domains.len()),
            ] {
                if expected != got {
                    return Err(ModelError::DimensionMismatch {
                        node: n.0,
                        what,
                        expected,
                        got,
                    });
                }
            }
            let path = tree.path_to_root(n).expect("valid node");
            for (r, row) in data.rows.iter().enumerate() {
                for term in &row.terms {
                    if !path.contains(&term.node) {
                        return Err(ModelError::RowReference {
                            node: n.0,
                            row: r,
                            referenced: term.node.0,
                        });
                    }
                    let (what, dim) = match term.kind {
                        VarKind::State => ("state", state_dim),
                        VarKind::Stage => ("stage", stage_dim),
                    };
                    if term.index >= dim {
                        return Err(ModelError::RowIndex {
                            node: n.0,
                            row: r,
                            what,
                            index: term.index,
                        });
                    }
                }
            }
        }
        // Binary states take big-M 1; everything else must cover its domain.
        for i in 0..state_dim {
            if tree
                .nodes()
                .all(|n| node_data[n.index()].state_domains[i].is_binary())
            {
                state_bounds[i] = 1.0;
            }
            let bound = state_bounds[i];
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(ModelError::InvalidStateBound {
                    index: i,
                    value: bound,
                });
            }
            for n in tree.nodes() {
                let d = node_data[n.index()].state_domains[i];
                if d.lower < 0.0 || d.upper > bound {
                    return Err(ModelError::StateDomain {
                        index: i,
                        node: n.0,
                        lower: d.lower,
                        upper: d.upper,
                        bound,
                    });
                }
            }
        }
        Ok(Self {
            tree,
            state_dim,
            stage_dim,
            node_data,
            state_bounds,
            mu,
        })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn stage_dim(&self) -> usize {
        self.stage_dim
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn state_bounds(&self) -> &[f64] {
        &self.state_bounds
    }

    pub fn node_data(&self, n: NodeId) -> &NodeData {
        &self.node_data[n.index()]
    }

    pub fn node_data_all(&self) -> &[NodeData] {
        &self.node_data
    }

    /// Same instance with a different revision budget.
    pub fn with_mu(&self, mu: usize) -> Result<Self, ModelError> {
        let limit = self.tree.num_stages() - 1;
        if mu > limit {
            return Err(ModelError::BudgetOutOfRange { mu, limit });
        }
        let mut clone = self.clone();
        clone.mu = mu;
        Ok(clone)
    }

    /// Restriction of the instance to the first `stages` stages: nodes beyond
    /// the shortened horizon are removed together with their data, and the
    /// revision budget is capped at `stages - 1`.
    pub fn truncate(&self, stages: usize) -> Result<Self, ModelError> {
        if stages == 0 || stages > self.tree.num_stages() {
            return Err(ModelError::InvalidTruncation {
                stages,
                limit: self.tree.num_stages(),
            });
        }
        let tree = ScenarioTree::uniform(stages, self.tree.branching()).expect("valid tree");
        let kept = tree.num_nodes();
        let mut probabilities = Vec::with_capacity(kept);
        for n in tree.nodes() {
            probabilities.push(self.tree.probability(n));
        }
        let tree = ScenarioTree::with_probabilities(stages, self.tree.branching(), probabilities)
            .expect("prefix probabilities stay consistent");
        let node_data = self.node_data[..kept].to_vec();
        Self::new(
            tree,
            self.state_dim,
            self.stage_dim,
            node_data,
            self.state_bounds.clone(),
            self.mu.min(stages - 1),
        )
    }
}

/// The integer revision counters `r[i][t]`, one row per state variable.
///
/// Valid schedules start at zero, grow by at most one per stage, and use at
/// most `mu` revisions in total per state variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RevisionSchedule {
    counters: Vec<Vec<u32>>,
}

impl RevisionSchedule {
    pub fn from_counters(counters: Vec<Vec<u32>>, mu: usize) -> Result<Self, ModelError> {
        if counters.is_empty() || counters[0].is_empty() {
            return Err(ModelError::InvalidSchedule("empty matrix".into()));
        }
        let stages = counters[0].len();
        for (i, row) in counters.iter().enumerate() {
            if row.len() != stages {
                return Err(ModelError::InvalidSchedule(format!(
                    "row {i} has length {} instead of {stages}",
                    row.len()
                )));
            }
            if row[0] != 0 {
                return Err(ModelError::InvalidSchedule(format!(
                    "state {i} revises before any observation"
                )));
            }
            for t in 1..stages {
                if row[t] < row[t - 1] || row[t] - row[t - 1] > 1 {
                    return Err(ModelError::InvalidSchedule(format!(
                        "state {i} counter steps from {} to {} at stage {}",
                        row[t - 1],
                        row[t],
                        t + 1
                    )));
                }
            }
            if row[stages - 1] as usize > mu {
                return Err(ModelError::InvalidSchedule(format!(
                    "state {i} uses {} revisions, budget is {mu}",
                    row[stages - 1]
                )));
            }
        }
        Ok(Self { counters })
    }

    /// Builds the schedule revising state `i` exactly at `stages[i]`,
    /// each a strictly increasing subset of `2..=num_stages`.
    pub fn from_revision_stages(
        num_stages: usize,
        stages: &[Vec<usize>],
        mu: usize,
    ) -> Result<Self, ModelError> {
        let mut counters = Vec::with_capacity(stages.len());
        for per_state in stages {
            let mut row = vec![0u32; num_stages];
            for &t in per_state {
                if t < 2 || t > num_stages {
                    return Err(ModelError::InvalidSchedule(format!(
                        "revision stage {t} outside 2..={num_stages}"
                    )));
                }
                row[t - 1] += 1;
            }
            for t in 1..num_stages {
                if row[t] > 1 {
                    return Err(ModelError::InvalidSchedule(format!(
                        "duplicate revision stage {}",
                        t + 1
                    )));
                }
                row[t] += row[t - 1];
            }
            counters.push(row);
        }
        Self::from_counters(counters, mu)
    }

    /// The no-revision schedule (two-stage behavior).
    pub fn zero(state_dim: usize, num_stages: usize) -> Self {
        Self {
            counters: vec![vec![0; num_stages]; state_dim],
        }
    }

    /// Revises every state variable at each of the first `mu` observations.
    pub fn fully_flexible(state_dim: usize, num_stages: usize, mu: usize) -> Self {
        let row: Vec<u32> = (0..num_stages).map(|t| (t.min(mu)) as u32).collect();
        Self {
            counters: vec![row; state_dim],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.counters.len()
    }

    pub fn num_stages(&self) -> usize {
        self.counters[0].len()
    }

    pub fn counters(&self) -> &[Vec<u32>] {
        &self.counters
    }

    /// Counter value `r[i][t]` for stage `t` in `1..=T`.
    pub fn counter(&self, state: usize, stage: usize) -> u32 {
        self.counters[state][stage - 1]
    }

    /// `r[i][t'] - r[i][t_a]` for a NAC between the two stages.
    pub fn gap(&self, state: usize, ancestor_stage: usize, stage: usize) -> u32 {
        self.counter(state, stage) - self.counter(state, ancestor_stage)
    }

    /// The revision stages `Y_i = { t : r[i][t] - r[i][t-1] = 1 }`.
    pub fn revision_stages(&self, state: usize) -> Vec<usize> {
        let row = &self.counters[state];
        (1..row.len())
            .filter(|&t| row[t] > row[t - 1])
            .map(|t| t + 1)
            .collect()
    }

    /// Total number of revisions used by state `i`.
    pub fn revisions_used(&self, state: usize) -> usize {
        *self.counters[state].last().unwrap() as usize
    }

    /// All schedules revising every state variable exactly `mu` times:
    /// the cross product over states of the `C(T-1, mu)` stage subsets.
    pub fn enumerate_exact(state_dim: usize, num_stages: usize, mu: usize) -> Vec<Self> {
        Self::enumerate_sets(state_dim, num_stages, mu, true)
    }

    /// All schedules using at most `mu` revisions per state variable.
    pub fn enumerate_up_to(state_dim: usize, num_stages: usize, mu: usize) -> Vec<Self> {
        Self::enumerate_sets(state_dim, num_stages, mu, false)
    }

    fn enumerate_sets(state_dim: usize, num_stages: usize, mu: usize, exact: bool) -> Vec<Self> {
        let sizes: Vec<usize> = if exact {
            vec![mu]
        } else {
            (0..=mu).collect()
        };
        let per_state: Vec<Vec<usize>> = sizes
            .iter()
            .flat_map(|&k| (2..=num_stages).combinations(k))
            .collect();
        let mut out = Vec::new();
        let mut pick = vec![0usize; state_dim];
        loop {
            let stages: Vec<Vec<usize>> = pick.iter().map(|&p| per_state[p].clone()).collect();
            out.push(
                Self::from_revision_stages(num_stages, &stages, mu)
                    .expect("enumerated schedules are valid"),
            );
            // odometer over the per-state choices
            let mut k = 0;
            loop {
                if k == state_dim {
                    return out;
                }
                pick[k] += 1;
                if pick[k] < per_state.len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
    }

    /// Number of schedules [`enumerate_exact`] would produce.
    pub fn count_exact(state_dim: usize, num_stages: usize, mu: usize) -> u128 {
        binomial(num_stages as u128 - 1, mu as u128).pow(state_dim as u32)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out = 1u128;
    for j in 0..k {
        out = out * (n - j) / (j + 1);
    }
    out
}

impl std::fmt::Display for RevisionSchedule {
    /// Revision stages per state, e.g. `2,4|3` for two state variables.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.state_dim() {
            if i > 0 {
                f.write_str("|")?;
            }
            let stages = self.revision_stages(i);
            if stages.is_empty() {
                f.write_str("-")?;
            } else {
                write!(f, "{}", stages.iter().join(","))?;
            }
        }
        Ok(())
    }
}

/// Variable ids of a built model, addressable by instance coordinates.
#[derive(Debug, Clone)]
pub struct ModelVars {
    state: Vec<Vec<VarId>>,
    stage: Vec<Vec<VarId>>,
    revision: Option<Vec<Vec<VarId>>>,
}

impl ModelVars {
    pub fn state(&self, i: usize, n: NodeId) -> VarId {
        self.state[n.index()][i]
    }

    pub fn stage(&self, j: usize, n: NodeId) -> VarId {
        self.stage[n.index()][j]
    }

    /// Revision counter variable `r[i][t]`; present only in adaptive models.
    pub fn revision(&self, i: usize, t: usize) -> Option<VarId> {
        self.revision.as_ref().map(|r| r[i][t - 1])
    }

    pub fn has_revisions(&self) -> bool {
        self.revision.is_some()
    }
}

/// A formulation bound to solver variable ids.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: LinearModel,
    pub vars: ModelVars,
    /// NAC rows in emission order, for dual-based cut extraction.
    pub nac_rows: Vec<(RowId, NacConstraint)>,
}

impl BuiltModel {
    pub fn state_value(&self, outcome: &SolveOutcome, i: usize, n: NodeId) -> f64 {
        outcome.primal[self.vars.state(i, n).0]
    }

    pub fn stage_value(&self, outcome: &SolveOutcome, j: usize, n: NodeId) -> f64 {
        outcome.primal[self.vars.stage(j, n).0]
    }

    /// Reads the revision counters out of a solution, rounding to integers.
    pub fn revision_schedule_from(
        &self,
        outcome: &SolveOutcome,
        mu: usize,
    ) -> Result<RevisionSchedule, ModelError> {
        let rev = self
            .vars
            .revision
            .as_ref()
            .ok_or_else(|| ModelError::InvalidSchedule("model has no revision block".into()))?;
        let counters = rev
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| outcome.primal[v.0].round().max(0.0) as u32)
                    .collect()
            })
            .collect();
        RevisionSchedule::from_counters(counters, mu)
    }
}

/// Options for [`build_ams`].
#[derive(Debug, Clone)]
pub struct AmsOptions {
    pub regime: NacRegime,
    /// Drop integrality of the revision counters only.
    pub relax_revisions: bool,
    /// Force `r[i][T] = mu` as an equality for every state variable.
    pub bind_final: bool,
}

impl Default for AmsOptions {
    fn default() -> Self {
        Self {
            regime: NacRegime::Reduced,
            relax_revisions: false,
            bind_final: false,
        }
    }
}

impl AmsOptions {
    pub fn full() -> Self {
        Self {
            regime: NacRegime::Full,
            ..Self::default()
        }
    }

    pub fn reduced() -> Self {
        Self::default()
    }
}

/// Adds all per-node variables and linking rows shared by every formulation.
fn base_model(instance: &AmspInstance) -> (LinearModel, ModelVars) {
    let tree = instance.tree();
    let mut model = LinearModel::new();
    let mut state = Vec::with_capacity(tree.num_nodes());
    let mut stage = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let data = instance.node_data(n);
        let p = tree.probability(n);
        let state_ids: Vec<VarId> = data
            .state_domains
            .iter()
            .zip(&data.state_cost)
            .map(|(d, &c)| model.add_var(d.lower, d.upper, d.integer, p * c))
            .collect();
        let stage_ids: Vec<VarId> = data
            .stage_domains
            .iter()
            .zip(&data.stage_cost)
            .map(|(d, &c)| model.add_var(d.lower, d.upper, d.integer, p * c))
            .collect();
        state.push(state_ids);
        stage.push(stage_ids);
    }
    for n in tree.nodes() {
        for row in &instance.node_data(n).rows {
            let terms: Vec<(VarId, f64)> = row
                .terms
                .iter()
                .map(|t| {
                    let id = match t.kind {
                        VarKind::State => state[t.node.index()][t.index],
                        VarKind::Stage => stage[t.node.index()][t.index],
                    };
                    (id, t.coef)
                })
                .collect();
            model.add_row(row.sense, row.rhs, terms);
        }
    }
    (
        model,
        ModelVars {
            state,
            stage,
            revision: None,
        },
    )
}

/// Adds the revision-counter block `r[i][t]`: zero at the first stage,
/// nondecreasing with unit steps, capped at the budget.
pub(crate) fn add_revision_block(
    model: &mut LinearModel,
    state_dim: usize,
    num_stages: usize,
    mu: usize,
    integer: bool,
) -> Vec<Vec<VarId>> {
    let mut rows = Vec::with_capacity(state_dim);
    for _ in 0..state_dim {
        let mut row = Vec::with_capacity(num_stages);
        for t in 1..=num_stages {
            let upper = if t == 1 { 0.0 } else { mu as f64 };
            row.push(model.add_var(0.0, upper, integer, 0.0));
        }
        for t in 0..num_stages - 1 {
            model.add_row(Sense::Ge, 0.0, vec![(row[t + 1], 1.0), (row[t], -1.0)]);
            model.add_row(Sense::Le, 1.0, vec![(row[t + 1], 1.0), (row[t], -1.0)]);
        }
        rows.push(row);
    }
    rows
}

/// Fully flexible multistage model: per-node variables and linking rows only.
pub fn build_msp(instance: &AmspInstance) -> BuiltModel {
    let (model, vars) = base_model(instance);
    BuiltModel {
        model,
        vars,
        nac_rows: Vec::new(),
    }
}

/// Two-stage model: state variables chained to equality within every stage.
pub fn build_2sp(instance: &AmspInstance) -> BuiltModel {
    let (mut model, vars) = base_model(instance);
    let tree = instance.tree();
    for t in 1..=tree.num_stages() {
        let nodes: Vec<NodeId> = tree.stage_nodes(t).expect("valid stage").into_iter().collect();
        for w in nodes.windows(2) {
            for i in 0..instance.state_dim() {
                model.add_row(
                    Sense::Eq,
                    0.0,
                    vec![(vars.state(i, w[0]), 1.0), (vars.state(i, w[1]), -1.0)],
                );
            }
        }
    }
    BuiltModel {
        model,
        vars,
        nac_rows: Vec::new(),
    }
}

/// Adaptive multistage model with revision counters and NACs.
pub fn build_ams(instance: &AmspInstance, options: &AmsOptions) -> Result<BuiltModel, ModelError> {
    let (mut model, mut vars) = base_model(instance);
    let tree = instance.tree();
    let revision = add_revision_block(
        &mut model,
        instance.state_dim(),
        tree.num_stages(),
        instance.mu(),
        !options.relax_revisions,
    );
    if options.bind_final {
        for row in &revision {
            model.add_row(
                Sense::Eq,
                instance.mu() as f64,
                vec![(*row.last().unwrap(), 1.0)],
            );
        }
    }
    let set = nac::generate(tree, options.regime, instance.mu(), instance.state_bounds())?;
    let mut nac_rows = Vec::with_capacity(set.len());
    for c in set.constraints {
        let row = model.add_row(
            Sense::Ge,
            0.0,
            vec![
                (vars.state(c.state, c.left), 1.0),
                (vars.state(c.state, c.right), -1.0),
                (revision[c.state][c.stage - 1], c.big_m),
                (revision[c.state][c.ancestor_stage - 1], -c.big_m),
            ],
        );
        nac_rows.push((row, c));
    }
    vars.revision = Some(revision);
    Ok(BuiltModel {
        model,
        vars,
        nac_rows,
    })
}

/// The adaptive model under a frozen revision schedule: reduced NACs with
/// constant gaps. With `relaxed`, every integrality flag of the state and
/// stage blocks is dropped, giving the convex relaxation used for dual cuts.
pub fn fix_revisions(
    instance: &AmspInstance,
    schedule: &RevisionSchedule,
    relaxed: bool,
) -> Result<BuiltModel, ModelError> {
    if schedule.state_dim() != instance.state_dim()
        || schedule.num_stages() != instance.tree().num_stages()
    {
        return Err(ModelError::InvalidSchedule(format!(
            "schedule shape {}x{} does not match instance {}x{}",
            schedule.state_dim(),
            schedule.num_stages(),
            instance.state_dim(),
            instance.tree().num_stages()
        )));
    }
    if schedule
        .counters()
        .iter()
        .any(|row| *row.last().unwrap() as usize > instance.mu())
    {
        return Err(ModelError::InvalidSchedule(format!(
            "schedule exceeds the revision budget {}",
            instance.mu()
        )));
    }
    let (mut model, vars) = base_model(instance);
    if relaxed {
        model.relax_integrality();
    }
    let set = nac::generate_reduced_nacs(instance.tree(), instance.mu(), instance.state_bounds())?;
    let mut nac_rows = Vec::with_capacity(set.len());
    for c in set.constraints {
        let gap = c.revision_gap(schedule.counters()) as f64;
        let row = model.add_row(
            Sense::Ge,
            -c.big_m * gap,
            vec![
                (vars.state(c.state, c.left), 1.0),
                (vars.state(c.state, c.right), -1.0),
            ],
        );
        nac_rows.push((row, c));
    }
    Ok(BuiltModel {
        model,
        vars,
        nac_rows,
    })
}

/// Value of the adaptive solution relative to the two endpoints, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vams {
    pub percent: f64,
    /// Set when the two endpoints coincide and the ratio is conventionally
    /// 100: any schedule already attains the multistage bound.
    pub degenerate: bool,
}

/// `(z_2sp - z_ams) / (z_2sp - z_msp) * 100`, guarding the ordering
/// `z_2sp >= z_ams >= z_msp` up to solver tolerance.
pub fn vams(z_2sp: f64, z_ams: f64, z_msp: f64) -> Result<Vams, ModelError> {
    let scale = z_2sp.abs().max(z_ams.abs()).max(z_msp.abs());
    let tol = tol::objective_tol(scale);
    if z_ams > z_2sp + tol || z_msp > z_ams + tol {
        return Err(ModelError::ObjectiveOrdering {
            z_2sp,
            z_ams,
            z_msp,
        });
    }
    let denom = z_2sp - z_msp;
    if denom.abs() <= tol {
        return Ok(Vams {
            percent: 100.0,
            degenerate: true,
        });
    }
    Ok(Vams {
        percent: (z_2sp - z_ams) / denom * 100.0,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::ScenarioTree;

    /// Instance with one binary state and one continuous stage variable per
    /// node, linked by `y_n >= d_n - big * x_n` style rows.
    fn toy_instance(t: usize, b: usize, mu: usize) -> AmspInstance {
        let tree = ScenarioTree::uniform(t, b).unwrap();
        let node_data = tree
            .nodes()
            .map(|n| NodeData {
                state_cost: vec![10.0],
                stage_cost: vec![1.0],
                rows: vec![LinkRow {
                    terms: vec![
                        LinkTerm {
                            node: n,
                            kind: VarKind::Stage,
                            index: 0,
                            coef: 1.0,
                        },
                        LinkTerm {
                            node: n,
                            kind: VarKind::State,
                            index: 0,
                            coef: 5.0,
                        },
                    ],
                    sense: Sense::Ge,
                    rhs: 1.0,
                }],
                state_domains: vec![VarDomain::binary()],
                stage_domains: vec![VarDomain::nonnegative()],
            })
            .collect();
        AmspInstance::new(tree, 1, 1, node_data, vec![1.0], mu).unwrap()
    }

    #[test]
    fn msp_layout_counts() {
        let instance = toy_instance(2, 2, 1);
        let built = build_msp(&instance);
        // one state + one stage variable per node, one row per node
        assert_eq!(built.model.num_vars(), 6);
        assert_eq!(built.model.num_rows(), 3);
        assert!(built.nac_rows.is_empty());
        assert!(!built.vars.has_revisions());
    }

    #[test]
    fn two_stage_adds_chained_equalities() {
        let instance = toy_instance(3, 2, 0);
        let msp = build_msp(&instance);
        let tsp = build_2sp(&instance);
        // oracle: sum over stages of (|S_t| - 1) * I
        let expected: usize = (1..=3)
            .map(|t| instance.tree().stage_nodes(t).unwrap().len() - 1)
            .sum();
        assert_eq!(tsp.model.num_rows() - msp.model.num_rows(), expected);
        assert_eq!(expected, 4);
    }

    #[test]
    fn ams_reduced_at_max_budget_is_msp_plus_free_revisions() {
        let instance = toy_instance(3, 2, 2);
        let msp = build_msp(&instance);
        let ams = build_ams(&instance, &AmsOptions::reduced()).unwrap();
        assert!(ams.nac_rows.is_empty());
        // revision block: T vars and 2(T-1) step rows per state variable
        assert_eq!(ams.model.num_vars() - msp.model.num_vars(), 3);
        assert_eq!(ams.model.num_rows() - msp.model.num_rows(), 4);
        assert!(ams.vars.has_revisions());
    }

    #[test]
    fn ams_row_counts_match_nac_totals() {
        let instance = toy_instance(4, 2, 1);
        for (options, regime) in [
            (AmsOptions::full(), NacRegime::Full),
            (AmsOptions::reduced(), NacRegime::Reduced),
        ] {
            let built = build_ams(&instance, &options).unwrap();
            let expected = crate::nac::count_total(instance.tree(), regime, 1, 1).unwrap();
            assert_eq!(built.nac_rows.len() as u64, expected);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(RevisionSchedule::from_counters(vec![vec![0, 1, 1]], 1).is_ok());
        // starts nonzero
        assert!(RevisionSchedule::from_counters(vec![vec![1, 1, 1]], 2).is_err());
        // step of two
        assert!(RevisionSchedule::from_counters(vec![vec![0, 2, 2]], 2).is_err());
        // decreasing
        assert!(RevisionSchedule::from_counters(vec![vec![0, 1, 0]], 2).is_err());
        // over budget
        assert!(RevisionSchedule::from_counters(vec![vec![0, 1, 2]], 1).is_err());
    }

    #[test]
    fn schedule_from_stages() {
        let s = RevisionSchedule::from_revision_stages(5, &[vec![2, 4]], 2).unwrap();
        assert_eq!(s.counters()[0], vec![0, 1, 1, 2, 2]);
        assert_eq!(s.revision_stages(0), vec![2, 4]);
        assert_eq!(s.revisions_used(0), 2);
        assert_eq!(s.gap(0, 2, 4), 1);
        assert_eq!(s.to_string(), "2,4");
        assert!(RevisionSchedule::from_revision_stages(5, &[vec![1]], 2).is_err());
        assert!(RevisionSchedule::from_revision_stages(5, &[vec![6]], 2).is_err());
    }

    #[test]
    fn schedule_enumeration_counts() {
        // C(4, 2) = 6 subsets for one state variable
        let exact = RevisionSchedule::enumerate_exact(1, 5, 2);
        assert_eq!(exact.len(), 6);
        let stages: Vec<Vec<usize>> = exact.iter().map(|s| s.revision_stages(0)).collect();
        assert_eq!(
            stages,
            vec![
                vec![2, 3],
                vec![2, 4],
                vec![2, 5],
                vec![3, 4],
                vec![3, 5],
                vec![4, 5]
            ]
        );
        assert_eq!(RevisionSchedule::count_exact(1, 5, 2), 6);
        // subsets of size <= 1 over {2, 3}: empty, {2}, {3}
        let upto = RevisionSchedule::enumerate_up_to(1, 3, 1);
        assert_eq!(upto.len(), 3);
        // two state variables: cross product
        assert_eq!(RevisionSchedule::enumerate_exact(2, 5, 2).len(), 36);
    }

    #[test]
    fn fully_flexible_schedule_revises_early() {
        let s = RevisionSchedule::fully_flexible(1, 4, 3);
        assert_eq!(s.counters()[0], vec![0, 1, 2, 3]);
        let s = RevisionSchedule::fully_flexible(1, 4, 1);
        assert_eq!(s.counters()[0], vec![0, 1, 1, 1]);
    }

    #[test]
    fn fix_revisions_rejects_mismatched_schedules() {
        let instance = toy_instance(3, 2, 1);
        let wrong_shape = RevisionSchedule::zero(2, 3);
        assert!(fix_revisions(&instance, &wrong_shape, false).is_err());
        let over_budget = RevisionSchedule::from_counters(vec![vec![0, 1, 2]], 2).unwrap();
        assert!(fix_revisions(&instance, &over_budget, false).is_err());
    }

    #[test]
    fn vams_examples() {
        let v = vams(100.0, 75.0, 50.0).unwrap();
        assert_eq!(v.percent, 50.0);
        assert!(!v.degenerate);
        assert_eq!(vams(100.0, 100.0, 50.0).unwrap().percent, 0.0);
        assert_eq!(vams(100.0, 50.0, 50.0).unwrap().percent, 100.0);
        let v = vams(80.0, 80.0, 80.0).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.percent, 100.0);
        assert!(vams(100.0, 101.0, 50.0).is_err());
        assert!(vams(100.0, 49.0, 50.0).is_err());
    }

    #[test]
    fn binary_state_bound_is_forced_to_one() {
        let instance = toy_instance(2, 2, 1);
        assert_eq!(instance.state_bounds(), &[1.0]);
    }

    #[test]
    fn instance_rejects_off_path_references() {
        let tree = ScenarioTree::uniform(2, 2).unwrap();
        let mut node_data: Vec<NodeData> = tree
            .nodes()
            .map(|_| NodeData {
                state_cost: vec![1.0],
                stage_cost: vec![],
                rows: vec![],
                state_domains: vec![VarDomain::binary()],
                stage_domains: vec![],
            })
            .collect();
        // node 2 referencing its sibling node 3 is not on P(2)
        node_data[1].rows.push(LinkRow {
            terms: vec![LinkTerm {
                node: NodeId(3),
                kind: VarKind::State,
                index: 0,
                coef: 1.0,
            }],
            sense: Sense::Ge,
            rhs: 0.0,
        });
        let err = AmspInstance::new(tree, 1, 0, node_data, vec![1.0], 1).unwrap_err();
        assert!(matches!(err, ModelError::RowReference { node: 2, .. }));
    }

    #[test]
    fn truncate_keeps_prefix() {
        let instance = toy_instance(4, 2, 3);
        let short = instance.truncate(2).unwrap();
        assert_eq!(short.tree().num_stages(), 2);
        assert_eq!(short.tree().num_nodes(), 3);
        assert_eq!(short.mu(), 1); // capped at stages - 1
        assert_eq!(short.node_data(NodeId(2)), instance.node_data(NodeId(2)));
    }
}
