//! Per-agent constants and admissible step sizes.
//!
//! For every agent `i`:
//!
//! ```text
//!   θ_i = sqrt(Σ_{j∈N_i} θ_{j,i}²)
//!   φ_i = Σ_{j∈N_i} θ_j² / ρ_i
//!   ℓ_i = Σ_{j∈N_i} θ_{i,j} θ_j / ρ_j
//!   ξ_i = Σ_{j∈N_i} Σ_{l∈N_j} θ_{l,j} θ_j / ρ_j
//!   γ_i < 1 / (½ φ_i + (3/2) Q (ℓ_i + ξ_i))
//! ```
//!
//! Agent `i`'s row only reads data of agents within two hops, which is what
//! makes the step-size choice decentralized. The computation goes through the
//! [`NeighborhoodData`] trait so that this locality can be observed.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problem::{coupling_lipschitz, Graph, Problem};

/// Default safety factor applied to the step-size bound (the bound is strict).
pub const DEFAULT_SAFETY: f64 = 0.99;

/// Which curvature divides the `φ_i` sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiDenominator {
    /// `ρ_i`, the owner's modulus (the formula as stated).
    #[default]
    Owner,
    /// `ρ_j`, the neighbor's modulus.
    Neighbor,
}

impl std::str::FromStr for PhiDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "owner" => Ok(Self::Owner),
            "neighbor" => Ok(Self::Neighbor),
            other => Err(Error::InvalidParameter(format!(
                "phi denominator must be owner or neighbor, got {other}"
            ))),
        }
    }
}

/// `θ_{i,j}` for every ordered pair with `j ∈ N_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThetaPairs {
    values: BTreeMap<(usize, usize), f64>,
}

impl ThetaPairs {
    pub fn from_problem(problem: &Problem) -> Self {
        let graph = problem.graph();
        let mut values = BTreeMap::new();
        for i in 0..graph.agent_count() {
            for &j in graph.neighbors(i) {
                values.insert((i, j), coupling_lipschitz(problem, i, j));
            }
        }
        Self { values }
    }

    pub fn insert(&mut self, i: usize, j: usize, theta: f64) {
        self.values.insert((i, j), theta);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(&(i, j)).copied()
    }

    /// Dense `N × N` view; zero off the edge set.
    pub fn matrix(&self, agent_count: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(agent_count, agent_count);
        for (&(i, j), &v) in &self.values {
            if i < agent_count && j < agent_count {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Read access to the data an agent may consult when computing its constants.
pub trait NeighborhoodData {
    fn neighbors(&self, i: usize) -> &[usize];
    /// `θ_{i,j}` for `j ∈ N_i`.
    fn theta_pair(&self, i: usize, j: usize) -> Result<f64>;
    fn rho(&self, i: usize) -> f64;
}

/// [`NeighborhoodData`] backed by a graph, a θ table and the moduli `ρ_i`.
pub struct TableNeighborhood<'a> {
    pub graph: &'a Graph,
    pub theta_pairs: &'a ThetaPairs,
    pub rho: &'a [f64],
}

impl NeighborhoodData for TableNeighborhood<'_> {
    fn neighbors(&self, i: usize) -> &[usize] {
        self.graph.neighbors(i)
    }

    fn theta_pair(&self, i: usize, j: usize) -> Result<f64> {
        self.theta_pairs.get(i, j).ok_or(Error::MissingTheta(i, j))
    }

    fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConstants {
    pub theta: f64,
    pub phi: f64,
    pub ell: f64,
    pub xi: f64,
}

/// `θ_j = sqrt(Σ_{l∈N_j} θ_{l,j}²)`.
fn column_theta(data: &impl NeighborhoodData, j: usize) -> Result<f64> {
    let mut sum = 0.0;
    for &l in data.neighbors(j) {
        sum += data.theta_pair(l, j)?.powi(2);
    }
    Ok(sum.sqrt())
}

/// Constants of one agent from its one- and two-hop neighborhood.
pub fn agent_constants(
    data: &impl NeighborhoodData,
    i: usize,
    phi_denominator: PhiDenominator,
) -> Result<AgentConstants> {
    let theta = column_theta(data, i)?;
    let (mut phi, mut ell, mut xi) = (0.0, 0.0, 0.0);
    for &j in data.neighbors(i) {
        let theta_j = column_theta(data, j)?;
        let rho_j = data.rho(j);
        phi += theta_j * theta_j
            / match phi_denominator {
                PhiDenominator::Owner => data.rho(i),
                PhiDenominator::Neighbor => rho_j,
            };
        ell += data.theta_pair(i, j)? * theta_j / rho_j;
        for &l in data.neighbors(j) {
            xi += data.theta_pair(l, j)? * theta_j / rho_j;
        }
    }
    Ok(AgentConstants { theta, phi, ell, xi })
}

/// Constants of every agent, plus step sizes once [`choose_gammas`] ran.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsTable {
    pub theta_pairs: ThetaPairs,
    pub agents: Vec<AgentConstants>,
    pub phi_denominator: PhiDenominator,
    /// Asynchrony bound the step sizes were chosen for.
    pub q: Option<u64>,
    pub gamma_max: Vec<f64>,
    pub gamma: Vec<f64>,
    pub safety: f64,
    pub scale: f64,
    /// Whether the chosen steps satisfy the strict bound.
    pub admissible: bool,
}

impl ConstantsTable {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn has_gammas(&self) -> bool {
        !self.gamma.is_empty()
    }

    pub fn gamma(&self, i: usize) -> f64 {
        self.gamma[i]
    }
}

/// Evaluates the constants for all agents (step sizes unset).
pub fn compute_agent_constants(
    problem: &Problem,
    theta_pairs: &ThetaPairs,
    phi_denominator: PhiDenominator,
) -> Result<ConstantsTable> {
    let rho: Vec<f64> = (0..problem.agent_count()).map(|i| problem.rho(i)).collect();
    let data = TableNeighborhood {
        graph: problem.graph(),
        theta_pairs,
        rho: &rho,
    };
    let agents = (0..problem.agent_count())
        .map(|i| agent_constants(&data, i, phi_denominator))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsTable {
        theta_pairs: theta_pairs.clone(),
        agents,
        phi_denominator,
        q: None,
        gamma_max: Vec::new(),
        gamma: Vec::new(),
        safety: f64::NAN,
        scale: f64::NAN,
        admissible: false,
    })
}

/// Convenience: θ table from the problem, then [`compute_agent_constants`].
pub fn constants_for(problem: &Problem, phi_denominator: PhiDenominator) -> Result<ConstantsTable> {
    compute_agent_constants(problem, &ThetaPairs::from_problem(problem), phi_denominator)
}

/// `1 / (½φ_i + (3/2) Q (ℓ_i + ξ_i))`, or `+∞` for a fully decoupled agent.
pub fn step_size_bound(constants: &ConstantsTable, i: usize, q: u64) -> Result<f64> {
    if q < 1 {
        return Err(Error::InvalidQ);
    }
    let c = constants.agents.get(i).ok_or(Error::AgentOutOfRange(i))?;
    let denom = 0.5 * c.phi + 1.5 * q as f64 * (c.ell + c.xi);
    Ok(if denom > 0.0 { 1.0 / denom } else { f64::INFINITY })
}

/// Sets `γ_i = scale · safety · γ_max_i(Q)`.
///
/// Agents with an infinite bound get `γ_i = scale · safety`. The table is
/// flagged admissible only when `scale · safety < 1`.
pub fn choose_gammas(constants: &ConstantsTable, q: u64, safety: f64, scale: f64) -> Result<ConstantsTable> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidParameter(format!("safety must lie in (0, 1], got {safety}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let gamma_max = (0..constants.agent_count())
        .map(|i| step_size_bound(constants, i, q))
        .collect::<Result<Vec<_>>>()?;
    let gamma = gamma_max
        .iter()
        .map(|&g| if g.is_finite() { scale * safety * g } else { scale * safety })
        .collect();
    Ok(ConstantsTable {
        q: Some(q),
        gamma_max,
        gamma,
        safety,
        scale,
        admissible: scale * safety < 1.0,
        ..constants.clone()
    })
}
