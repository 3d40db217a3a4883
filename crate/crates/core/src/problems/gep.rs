//! Generation expansion planning over a scenario tree.
//!
//! Five generator technologies can be built in integer unit counts at every
//! node (the state block). Each stage splits into four demand subperiods;
//! dispatch and unserved energy per subperiod are stage decisions. Per node:
//!
//! * capacity coupling: `y[i][k] <= nominal_mw[i] * (initial_units[i] + sum of builds on the path)`;
//! * demand balance: `sum_i capacity_factor[i][k] * y[i][k] + u[k] >= demand[k]`;
//! * build limits as integer variable bounds, which also serve as the NAC
//!   big-M coefficients.
//!
//! Cost rates are taken from 2020 baseline figures quoted per kW (capital,
//! fixed O&M) and per MWh (variable O&M, fuel); the builder converts per-kW
//! rates to per-MW by a factor of 1000 and treats the nominal capacities as
//! MW per unit. Capital and fixed O&M are charged per unit built, with fixed
//! O&M accrued over the remaining horizon at the yearly interest rate;
//! dispatch costs are charged per MWh through the subperiod hour counts.
//! The whole objective is discounted to the first stage.

use crate::model::{AmspInstance, LinkRow, LinkTerm, NodeData, VarDomain, VarKind};
use crate::solver::Sense;
use crate::tree::ScenarioTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ProblemError;

pub const GENERATOR_COUNT: usize = 5;
pub const SUBPERIOD_COUNT: usize = 4;

pub const GENERATOR_NAMES: [&str; GENERATOR_COUNT] = [
    "combined-cycle",
    "combined-cycle-cc",
    "onshore-wind",
    "offshore-wind",
    "solar-pv",
];

/// Nominal capacity per unit, MW.
pub const NOMINAL_MW: [f64; GENERATOR_COUNT] = [418.0, 377.0, 200.0, 400.0, 150.0];
/// Baseline capital cost, $/kW.
pub const CAPITAL_PER_KW: [f64; GENERATOR_COUNT] = [1084.0, 2481.0, 1265.0, 4375.0, 1313.0];
/// Baseline fixed O&M, $/kW-year.
pub const FIXED_OM_PER_KW_YEAR: [f64; GENERATOR_COUNT] = [14.1, 27.6, 26.4, 110.0, 15.3];
/// Baseline variable O&M, $/MWh.
pub const VARIABLE_OM_PER_MWH: [f64; GENERATOR_COUNT] = [2.6, 5.8, 0.0, 0.0, 0.0];
/// Fuel price, $/MWh (0.04 $/kWh for the gas-fired types).
pub const FUEL_PER_MWH: [f64; GENERATOR_COUNT] = [40.0, 40.0, 0.0, 0.0, 0.0];
/// Yearly multiplier on capital cost (declining for renewables and capture).
pub const CAPITAL_ESCALATION: [f64; GENERATOR_COUNT] = [1.0, 0.95, 0.9, 0.9, 0.9];
/// Yearly multiplier on variable O&M and fuel (rising for the gas types).
pub const DISPATCH_ESCALATION: [f64; GENERATOR_COUNT] = [1.1, 1.1, 1.0, 1.0, 1.0];
/// Capacity-factor distribution (mean, sd); the gas types are dispatchable
/// at factor 1.
pub const CAPACITY_FACTOR: [(f64, f64); GENERATOR_COUNT] =
    [(1.0, 0.0), (1.0, 0.0), (0.30, 0.10), (0.60, 0.05), (0.20, 0.10)];

/// Demand weight of each subperiod relative to the node demand level.
pub const SUBPERIOD_WEIGHT: [f64; SUBPERIOD_COUNT] = [0.9, 1.1, 1.3, 1.5];
/// Share of the 8760-hour year spent in each subperiod.
pub const SUBPERIOD_SHARE: [f64; SUBPERIOD_COUNT] = [0.55, 0.40, 0.0495, 0.0005];
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Tunable scalars of the generator; defaults follow the baseline setup.
#[derive(Debug, Clone, PartialEq)]
pub struct GepOverrides {
    /// Demand level at the root node, MW.
    pub root_demand: f64,
    /// Mean and standard deviation of the yearly demand growth factor.
    pub growth_mean: f64,
    pub growth_sd: f64,
    /// Yearly interest rate used for discounting.
    pub interest: f64,
    /// Penalty for unserved demand, $/MWh (value-of-lost-load convention).
    pub unserved_penalty: f64,
    /// Maximum units of each type constructible per node; also the NAC
    /// big-M for the build counters.
    pub build_limit: u32,
}

impl Default for GepOverrides {
    fn default() -> Self {
        Self {
            root_demand: 1000.0,
            growth_mean: 0.05,
            growth_sd: 0.05,
            interest: 0.05,
            unserved_penalty: 10_000.0,
            build_limit: 20,
        }
    }
}

impl GepOverrides {
    fn validate(&self) -> Result<(), ProblemError> {
        for (what, value) in [
            ("root demand", self.root_demand),
            ("interest rate", self.interest),
            ("unserved penalty", self.unserved_penalty),
            ("build limit", self.build_limit as f64),
            ("growth standard deviation", self.growth_sd),
        ] {
            if value <= 0.0 {
                return Err(ProblemError::NonPositive { what, value });
            }
        }
        Ok(())
    }
}

/// Sampled stochastic inputs: per-subperiod demands and capacity factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GepData {
    /// `demand[node][k]`, MW.
    pub demand: Vec<[f64; SUBPERIOD_COUNT]>,
    /// `capacity_factor[node][i][k]`, clamped to `[0, 1]`.
    pub capacity_factor: Vec<[[f64; SUBPERIOD_COUNT]; GENERATOR_COUNT]>,
    pub overrides: GepOverrides,
}

impl GepData {
    /// Samples the scenario data: root demands are the weighted root level,
    /// every deeper node applies an independent normal growth factor to its
    /// parent per subperiod, and renewable capacity factors are drawn per
    /// (type, node, subperiod) and clamped into `[0, 1]`.
    ///
    /// The draw order per node is: growth factor then capacity factors per
    /// subperiod, from a ChaCha8 stream seeded with `seed`.
    pub fn sample(
        tree: &ScenarioTree,
        seed: u64,
        overrides: GepOverrides,
    ) -> Result<Self, ProblemError> {
        overrides.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let growth = Normal::new(overrides.growth_mean, overrides.growth_sd)
            .expect("valid growth distribution");
        let factor_dists: Vec<Option<Normal<f64>>> = CAPACITY_FACTOR
            .iter()
            .map(|&(mean, sd)| {
                if sd == 0.0 {
                    None
                } else {
                    Some(Normal::new(mean, sd).expect("valid factor distribution"))
                }
            })
            .collect();
        let sample_factors = |rng: &mut ChaCha8Rng| {
            let mut f = [[0.0; SUBPERIOD_COUNT]; GENERATOR_COUNT];
            for (i, dist) in factor_dists.iter().enumerate() {
                for k in 0..SUBPERIOD_COUNT {
                    f[i][k] = match dist {
                        Some(d) => d.sample(rng).clamp(0.0, 1.0),
                        None => CAPACITY_FACTOR[i].0,
                    };
                }
            }
            f
        };

        let n = tree.num_nodes();
        let mut demand = vec![[0.0; SUBPERIOD_COUNT]; n];
        let mut capacity_factor = Vec::with_capacity(n);
        for k in 0..SUBPERIOD_COUNT {
            demand[0][k] = SUBPERIOD_WEIGHT[k] * overrides.root_demand;
        }
        capacity_factor.push(sample_factors(&mut rng));
        for node in tree.nodes().skip(1) {
            let parent = tree.parent(node).expect("non-root node");
            for k in 0..SUBPERIOD_COUNT {
                let lambda = growth.sample(&mut rng);
                demand[node.index()][k] = (1.0 + lambda) * demand[parent.index()][k];
            }
            capacity_factor.push(sample_factors(&mut rng));
        }
        Ok(Self {
            demand,
            capacity_factor,
            overrides,
        })
    }

    /// Initial fleet: gas combined-cycle units only, enough nominal capacity
    /// to cover the duration-weighted mean demand at the root.
    pub fn initial_units(&self) -> [u32; GENERATOR_COUNT] {
        let mean_demand: f64 = (0..SUBPERIOD_COUNT)
            .map(|k| SUBPERIOD_SHARE[k] * self.demand[0][k])
            .sum();
        let mut units = [0u32; GENERATOR_COUNT];
        units[0] = (mean_demand / NOMINAL_MW[0]).ceil() as u32;
        units
    }

    /// Hours spent in subperiod `k` of any stage.
    pub fn hours(k: usize) -> f64 {
        SUBPERIOD_SHARE[k] * HOURS_PER_YEAR
    }
}

/// Stage-variable index of the dispatch of type `i` in subperiod `k`.
fn dispatch_index(i: usize, k: usize) -> usize {
    i * SUBPERIOD_COUNT + k
}

/// Stage-variable index of unserved demand in subperiod `k`.
fn unserved_index(k: usize) -> usize {
    GENERATOR_COUNT * SUBPERIOD_COUNT + k
}

/// Binds sampled data to the generic instance layout. The state block holds
/// the five integer build counts; the stage block holds the twenty dispatch
/// variables followed by the four unserved-demand variables.
pub fn instance(
    tree: &ScenarioTree,
    data: &GepData,
    mu: usize,
) -> Result<AmspInstance, ProblemError> {
    let o = &data.overrides;
    o.validate()?;
    let t_max = tree.num_stages();
    let initial = data.initial_units();
    let stage_dim = GENERATOR_COUNT * SUBPERIOD_COUNT + SUBPERIOD_COUNT;
    let per_kw = 1000.0; // $/kW -> $/MW

    let mut node_data = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let t = tree.stage_of(n);
        let years = (t - 1) as f64;
        let discount = (1.0 + o.interest).powf(-years);

        // capital plus remaining-horizon fixed O&M, per unit built here
        let state_cost: Vec<f64> = (0..GENERATOR_COUNT)
            .map(|i| {
                let capital = CAPITAL_PER_KW[i] * per_kw * CAPITAL_ESCALATION[i].powf(years);
                let fixed_annuity: f64 = (0..=(t_max - t))
                    .map(|tau| {
                        FIXED_OM_PER_KW_YEAR[i] * per_kw / (1.0 + o.interest).powf(tau as f64)
                    })
                    .sum();
                discount * (capital + fixed_annuity) * NOMINAL_MW[i]
            })
            .collect();

        let mut stage_cost = vec![0.0; stage_dim];
        for i in 0..GENERATOR_COUNT {
            let rate = (VARIABLE_OM_PER_MWH[i] + FUEL_PER_MWH[i])
                * DISPATCH_ESCALATION[i].powf(years);
            for k in 0..SUBPERIOD_COUNT {
                stage_cost[dispatch_index(i, k)] = discount * rate * GepData::hours(k);
            }
        }
        for k in 0..SUBPERIOD_COUNT {
            stage_cost[unserved_index(k)] = discount * o.unserved_penalty * GepData::hours(k);
        }

        let path = tree.path_to_root(n).expect("valid node");
        let mut rows = Vec::with_capacity(GENERATOR_COUNT * SUBPERIOD_COUNT + SUBPERIOD_COUNT);
        for i in 0..GENERATOR_COUNT {
            for k in 0..SUBPERIOD_COUNT {
                // y[i][k] - nominal * sum of builds <= nominal * initial
                let mut terms = vec![LinkTerm {
                    node: n,
                    kind: VarKind::Stage,
                    index: dispatch_index(i, k),
                    coef: 1.0,
                }];
                for &m in &path {
                    terms.push(LinkTerm {
                        node: m,
                        kind: VarKind::State,
                        index: i,
                        coef: -NOMINAL_MW[i],
                    });
                }
                rows.push(LinkRow {
                    terms,
                    sense: Sense::Le,
                    rhs: NOMINAL_MW[i] * initial[i] as f64,
                });
            }
        }
        for k in 0..SUBPERIOD_COUNT {
            let mut terms: Vec<LinkTerm> = (0..GENERATOR_COUNT)
                .map(|i| LinkTerm {
                    node: n,
                    kind: VarKind::Stage,
                    index: dispatch_index(i, k),
                    coef: data.capacity_factor[n.index()][i][k],
                })
                .collect();
            terms.push(LinkTerm {
                node: n,
                kind: VarKind::Stage,
                index: unserved_index(k),
                coef: 1.0,
            });
            rows.push(LinkRow {
                terms,
                sense: Sense::Ge,
                rhs: data.demand[n.index()][k],
            });
        }

        node_data.push(NodeData {
            state_cost,
            stage_cost,
            rows,
            state_domains: vec![VarDomain::integer(0.0, o.build_limit as f64); GENERATOR_COUNT],
            stage_domains: vec![VarDomain::nonnegative(); stage_dim],
        });
    }
    Ok(AmspInstance::new(
        tree.clone(),
        GENERATOR_COUNT,
        stage_dim,
        node_data,
        vec![o.build_limit as f64; GENERATOR_COUNT],
        mu,
    )?)
}

/// Samples and binds an instance in one step.
pub fn generate(
    tree: &ScenarioTree,
    seed: u64,
    overrides: GepOverrides,
    mu: usize,
) -> Result<AmspInstance, ProblemError> {
    let data = GepData::sample(tree, seed, overrides)?;
    instance(tree, &data, mu)
}
