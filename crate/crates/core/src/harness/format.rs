//! JSON instance file format.
//!
//! The document carries the tree shape, the revision budget, variable
//! declarations with their NAC big-M values, default domains with sparse
//! per-node overrides, and per-node objective vectors and linking rows.
//! Row coefficients address variables as (kind, node, index); referenced
//! nodes must lie on the owning node's root path.

use crate::model::{AmspInstance, LinkRow, LinkTerm, NodeData, ModelError, VarDomain, VarKind};
use crate::solver::Sense;
use crate::tree::{NodeId, ScenarioTree, TreeError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node_data entry {index} addresses node {node}, expected {expected}")]
    NodeOrder {
        index: usize,
        node: usize,
        expected: usize,
    },
    #[error("override for node {0} is out of range")]
    OverrideNode(usize),
    #[error("override for {kind} variable {index} is out of range")]
    OverrideIndex { kind: &'static str, index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSection {
    pub stages: usize,
    pub branching: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateVarDecl {
    pub name: String,
    /// NAC big-M; ignored (forced to 1) when the variable is binary at
    /// every node.
    pub big_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageVarDecl {
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeBoundsOverride {
    pub node: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<usize, VarDomain>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stage: BTreeMap<usize, VarDomain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsSection {
    /// Default domain of each state variable, applied at every node.
    pub state: Vec<VarDomain>,
    /// Default domain of each stage variable, applied at every node.
    pub stage: Vec<VarDomain>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_overrides: Vec<NodeBoundsOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffSection {
    pub kind: VarKind,
    pub node: usize,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowSection {
    pub coeffs: Vec<CoeffSection>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSection {
    pub node: usize,
    /// Objective coefficients of the state block.
    pub a: Vec<f64>,
    /// Objective coefficients of the stage block.
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<RowSection>,
}

/// On-disk instance document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub tree: TreeSection,
    pub mu: usize,
    pub state_vars: Vec<StateVarDecl>,
    pub stage_vars: Vec<StageVarDecl>,
    pub bounds: BoundsSection,
    pub node_data: Vec<NodeSection>,
}

impl InstanceFile {
    pub fn to_instance(&self) -> Result<AmspInstance, FormatError> {
        let tree = match &self.tree.probabilities {
            Some(p) => {
                ScenarioTree::with_probabilities(self.tree.stages, self.tree.branching, p.clone())?
            }
            None => ScenarioTree::uniform(self.tree.stages, self.tree.branching)?,
        };
        let state_dim = self.state_vars.len();
        let stage_dim = self.stage_vars.len();

        let mut state_domains = vec![self.bounds.state.clone(); tree.num_nodes()];
        let mut stage_domains = vec![self.bounds.stage.clone(); tree.num_nodes()];
        for over in &self.bounds.node_overrides {
            if over.node < 1 || over.node > tree.num_nodes() {
                return Err(FormatError::OverrideNode(over.node));
            }
            for (&i, domain) in &over.state {
                *state_domains[over.node - 1]
                    .get_mut(i)
                    .ok_or(FormatError::OverrideIndex {
                        kind: "state",
                        index: i,
                    })? = *domain;
            }
            for (&j, domain) in &over.stage {
                *stage_domains[over.node - 1]
                    .get_mut(j)
                    .ok_or(FormatError::OverrideIndex {
                        kind: "stage",
                        index: j,
                    })? = *domain;
            }
        }

        let mut node_data = Vec::with_capacity(tree.num_nodes());
        for (index, section) in self.node_data.iter().enumerate() {
            if section.node != index + 1 {
                return Err(FormatError::NodeOrder {
                    index,
                    node: section.node,
                    expected: index + 1,
                });
            }
            let rows = section
                .rows
                .iter()
                .map(|row| LinkRow {
                    terms: row
                        .coeffs
                        .iter()
                        .map(|c| LinkTerm {
                            node: NodeId(c.node),
                            kind: c.kind,
                            index: c.index,
                            coef: c.value,
                        })
                        .collect(),
                    sense: row.sense,
                    rhs: row.rhs,
                })
                .collect();
            node_data.push(NodeData {
                state_cost: section.a.clone(),
                stage_cost: section.b.clone(),
                rows,
                state_domains: state_domains[index].clone(),
                stage_domains: stage_domains[index].clone(),
            });
        }

        let bounds = self.state_vars.iter().map(|v| v.big_m).collect();
        Ok(AmspInstance::new(
            tree, state_dim, stage_dim, node_data, bounds, self.mu,
        )?)
    }

    /// Serializes an instance, using root-node domains as the defaults and
    /// overriding only nodes that differ.
    pub fn from_instance(instance: &AmspInstance, names: Option<(&[String], &[String])>) -> Self {
        let tree = instance.tree();
        let root = instance.node_data(tree.root());
        let default_state = root.state_domains.clone();
        let default_stage = root.stage_domains.clone();

        let mut node_overrides = Vec::new();
        let mut node_data = Vec::with_capacity(tree.num_nodes());
        for n in tree.nodes() {
            let data = instance.node_data(n);
            let mut over = NodeBoundsOverride {
                node: n.0,
                state: BTreeMap::new(),
                stage: BTreeMap::new(),
            };
            for (i, d) in data.state_domains.iter().enumerate() {
                if *d != default_state[i] {
                    over.state.insert(i, *d);
                }
            }
            for (j, d) in data.stage_domains.iter().enumerate() {
                if *d != default_stage[j] {
                    over.stage.insert(j, *d);
                }
            }
            if !over.state.is_empty() || !over.stage.is_empty() {
                node_overrides.push(over);
            }
            node_data.push(NodeSection {
                node: n.0,
                a: data.state_cost.clone(),
                b: data.stage_cost.clone(),
                rows: data
                    .rows
                    .iter()
                    .map(|row| RowSection {
                        coeffs: row
                            .terms
                            .iter()
                            .map(|t| CoeffSection {
                                kind: t.kind,
                                node: t.node.0,
                                index: t.index,
                                value: t.coef,
                            })
                            .collect(),
                        sense: row.sense,
                        rhs: row.rhs,
                    })
                    .collect(),
            });
        }

        let state_vars = (0..instance.state_dim())
            .map(|i| StateVarDecl {
                name: names
                    .map(|(s, _)| s[i].clone())
                    .unwrap_or_else(|| format!("x{i}")),
                big_m: instance.state_bounds()[i],
            })
            .collect();
        let stage_vars = (0..instance.stage_dim())
            .map(|j| StageVarDecl {
                name: names
                    .map(|(_, s)| s[j].clone())
                    .unwrap_or_else(|| format!("y{j}")),
            })
            .collect();

        Self {
            tree: TreeSection {
                stages: tree.num_stages(),
                branching: tree.branching(),
                probabilities: Some(tree.probabilities().to_vec()),
            },
            mu: instance.mu(),
            state_vars,
            stage_vars,
            bounds: BoundsSection {
                state: default_state,
                stage: default_stage,
                node_overrides,
            },
            node_data,
        }
    }

    pub fn read(reader: impl Read) -> Result<Self, FormatError> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn write(&self, writer: impl Write) -> Result<(), FormatError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self, FormatError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write_path(&self, path: &std::path::Path) -> Result<(), FormatError> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
