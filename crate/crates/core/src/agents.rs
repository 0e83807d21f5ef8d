//! Per-agent update rules.
//!
//! An agent never sees a neighbor's primal variable: each message carries the
//! sender's multiplier `y_j` and the sender-evaluated block `g_{i,j}(x_j)`.

use nalgebra::DVector;

use crate::constants::ConstantsTable;
use crate::error::{check_dim, Error, Result};
use crate::problem::{aggregate_dual_term, local_argmin, project_onto_cone, DualPoint, Problem};

/// Stale copy of one neighbor's data.
#[derive(Debug, Clone, PartialEq)]
pub struct MailboxEntry {
    /// `y_j` as last received.
    pub y: DVector<f64>,
    /// `g_{i,j}(x_j)`, evaluated by the sender `j`.
    pub g_block: DVector<f64>,
    /// Global counter at which the payload values were current.
    pub origin: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// One entry per neighbor, aligned with `graph().neighbors(i)`.
    pub mailbox: Vec<MailboxEntry>,
}

impl AgentState {
    /// Sum of the stale blocks `Σ_{j∈N_i} g_{i,j}(x_j(τ))`.
    pub fn stale_gradient(&self, m: usize) -> DVector<f64> {
        self.mailbox
            .iter()
            .fold(DVector::zeros(m), |acc, e| acc + &e.g_block)
    }
}

/// `y_i(0) = 0`, `x_i(0) = argmin f_i`, and mailboxes holding the exact
/// initial data of every neighbor with origin 0.
pub fn initial_states(problem: &Problem) -> Result<Vec<AgentState>> {
    let n = problem.agent_count();
    let x0: Vec<DVector<f64>> = (0..n)
        .map(|i| local_argmin(problem, i, &DVector::zeros(problem.n(i))))
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|i| {
            let mailbox = problem
                .graph()
                .neighbors(i)
                .iter()
                .zip(problem.couplings_of(i))
                .map(|(&j, blk)| MailboxEntry {
                    y: DVector::zeros(problem.m(j)),
                    g_block: blk.eval(&x0[j]),
                    origin: 0,
                })
                .collect();
            AgentState {
                x: x0[i].clone(),
                y: DVector::zeros(problem.m(i)),
                mailbox,
            }
        })
        .collect())
}

fn check_mailbox(problem: &Problem, i: usize, state: &AgentState) -> Result<()> {
    let neighbors = problem.graph().neighbors(i);
    if state.mailbox.len() != neighbors.len() {
        let missing = neighbors
            .get(state.mailbox.len())
            .copied()
            .unwrap_or(usize::MAX);
        return Err(Error::MissingMailboxEntry { agent: i, neighbor: missing });
    }
    check_dim("agent dual block", problem.m(i), state.y.len())?;
    for (&j, e) in neighbors.iter().zip(&state.mailbox) {
        check_dim("mailbox dual entry", problem.m(j), e.y.len())?;
        check_dim("mailbox coupling entry", problem.m(i), e.g_block.len())?;
    }
    Ok(())
}

fn gamma_of(constants: &ConstantsTable, i: usize) -> Result<f64> {
    let gamma = *constants
        .gamma
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("no step size chosen for agent {i}")))?;
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        Err(Error::InvalidParameter(format!("step size of agent {i} must be positive")))
    }
}

/// One asynchronous update from a mailbox snapshot.
///
/// `x_i⁺` minimizes `f_i` against the stale neighbor multipliers and `y_i⁺`
/// takes a projected step along the stale coupling blocks. The mailbox is
/// carried over unchanged.
pub fn async_agent_update(
    problem: &Problem,
    constants: &ConstantsTable,
    i: usize,
    state: &AgentState,
) -> Result<AgentState> {
    check_mailbox(problem, i, state)?;
    let gamma = gamma_of(constants, i)?;
    let (x, y) = update_from_parts(problem, i, gamma, &state.y, &state.stale_gradient(problem.m(i)), |slot| {
        &state.mailbox[slot].y
    })?;
    Ok(AgentState { x, y, mailbox: state.mailbox.clone() })
}

/// The update in terms of its inputs: the stale multipliers (by neighbor
/// slot) and the sum of the stale coupling blocks.
pub(crate) fn update_from_parts<'a>(
    problem: &Problem,
    i: usize,
    gamma: f64,
    y_i: &DVector<f64>,
    stale_gradient: &DVector<f64>,
    mut dual_at_slot: impl FnMut(usize) -> &'a DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let neighbors = problem.graph().neighbors(i);
    let lambda = aggregate_dual_term(problem, i, |j| {
        dual_at_slot(neighbors.binary_search(&j).expect("neighbor slot"))
    });
    let x = local_argmin(problem, i, &lambda)?;
    let y = project_onto_cone(problem.p(i), &(y_i + stale_gradient * gamma));
    Ok((x, y))
}

pub(crate) fn step_size(constants: &ConstantsTable, i: usize) -> Result<f64> {
    gamma_of(constants, i)
}

/// Blocks `g_{l,i}(x_i)` that agent `i` sends to each `l ∈ N_i`.
pub fn outgoing_payloads(problem: &Problem, i: usize, x_i: &DVector<f64>) -> Vec<(usize, DVector<f64>)> {
    problem
        .graph()
        .neighbors(i)
        .iter()
        .map(|&l| {
            let blk = problem.coupling(l, i).expect("symmetric graph");
            (l, blk.eval(x_i))
        })
        .collect()
}

/// Inactive step: iterates unchanged.
pub fn hold_step(state: &AgentState) -> AgentState {
    state.clone()
}

/// `s_i = (proj_Ω_i(y_i + γ_i Σ g_stale) − y_i) / γ_i` when active, zero otherwise.
pub fn update_residual(
    problem: &Problem,
    constants: &ConstantsTable,
    i: usize,
    state: &AgentState,
    was_active: bool,
) -> Result<DVector<f64>> {
    let gamma = gamma_of(constants, i)?;
    if !was_active {
        return Ok(DVector::zeros(problem.m(i)));
    }
    check_mailbox(problem, i, state)?;
    let step = &state.y + state.stale_gradient(problem.m(i)) * gamma;
    Ok((project_onto_cone(problem.p(i), &step) - &state.y) / gamma)
}

/// One synchronous distributed iteration with a common step.
///
/// First exchange: every agent minimizes against the current neighbor
/// multipliers. Second exchange: every agent collects `g_{i,j}(x_j⁺)` from its
/// neighbors and takes the projected step.
pub fn sync_iteration(problem: &Problem, gamma: f64, y: &DualPoint) -> Result<(Vec<DVector<f64>>, DualPoint)> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter("step size must be positive".into()));
    }
    let n = problem.agent_count();
    check_dim("dual point blocks", n, y.blocks.len())?;
    let x_next: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let lambda = aggregate_dual_term(problem, i, |j| &y.blocks[j]);
            local_argmin(problem, i, &lambda)
        })
        .collect::<Result<_>>()?;
    let mut inbox: Vec<DVector<f64>> = (0..n).map(|i| DVector::zeros(problem.m(i))).collect();
    for (j, xj) in x_next.iter().enumerate() {
        for (l, block) in outgoing_payloads(problem, j, xj) {
            inbox[l] += block;
        }
    }
    let blocks = (0..n)
        .map(|i| project_onto_cone(problem.p(i), &(&y.blocks[i] + &inbox[i] * gamma)))
        .collect();
    Ok((x_next, DualPoint { blocks }))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use nalgebra::DMatrix;

    use super::*;
    use crate::constants::{choose_gammas, constants_for, PhiDenominator};
    use crate::problem::{CouplingBlock, Graph, LocalCost};

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// One scalar agent, one constraint row owned by itself.
    fn scalar_agent(p: usize, r: usize, coeff: f64) -> Problem {
        let graph = Graph::new(1, &[]).unwrap();
        let blk = CouplingBlock::new(
            DMatrix::from_element(p, 1, coeff),
            DVector::zeros(p),
            DMatrix::from_element(r, 1, coeff),
            DVector::zeros(r),
        )
        .unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert((0, 0), blk);
        Problem::new(graph, vec![LocalCost::diagonal(&[1.0], &[-3.0]).unwrap()], vec![p], vec![r], blocks).unwrap()
    }

    fn table_with_gamma(problem: &Problem, gamma: f64) -> ConstantsTable {
        let mut t = constants_for(problem, PhiDenominator::Owner).unwrap();
        t.gamma = vec![gamma; problem.agent_count()];
        t
    }

    fn state(y: f64, g_sum: f64) -> AgentState {
        AgentState {
            x: dvec(&[0.0]),
            y: dvec(&[y]),
            mailbox: vec![MailboxEntry { y: dvec(&[0.0]), g_block: dvec(&[g_sum]), origin: 0 }],
        }
    }

    #[test]
    fn decoupled_agent_keeps_multiplier() {
        let prob = scalar_agent(0, 1, 0.0);
        let states = initial_states(&prob).unwrap();
        let t = table_with_gamma(&prob, 0.7);
        let next = async_agent_update(&prob, &t, 0, &states[0]).unwrap();
        assert_eq!(next.x, dvec(&[3.0]));
        assert_eq!(next.y, states[0].y);
    }

    #[test]
    fn projected_and_free_dual_steps() {
        let ineq = scalar_agent(1, 0, 1.0);
        let next = async_agent_update(&ineq, &table_with_gamma(&ineq, 1.0), 0, &state(0.0, -2.0)).unwrap();
        assert_eq!(next.y, dvec(&[0.0]));
        let eq = scalar_agent(0, 1, 1.0);
        let next = async_agent_update(&eq, &table_with_gamma(&eq, 0.5), 0, &state(0.0, 4.0)).unwrap();
        assert_eq!(next.y, dvec(&[2.0]));
    }

    #[test]
    fn update_requires_gammas_and_full_mailbox() {
        let prob = scalar_agent(0, 1, 1.0);
        let t = constants_for(&prob, PhiDenominator::Owner).unwrap();
        assert!(async_agent_update(&prob, &t, 0, &state(0.0, 1.0)).is_err());
        let mut s = state(0.0, 1.0);
        s.mailbox.clear();
        let err = async_agent_update(&prob, &table_with_gamma(&prob, 1.0), 0, &s).unwrap_err();
        assert_eq!(err, Error::MissingMailboxEntry { agent: 0, neighbor: 0 });
    }

    #[test]
    fn hold_keeps_iterates() {
        let s = state(1.5, -2.0);
        let once = hold_step(&s);
        assert_eq!(hold_step(&once), s);
        let mut delivered = once.clone();
        delivered.mailbox[0] = MailboxEntry { y: dvec(&[9.0]), g_block: dvec(&[1.0]), origin: 4 };
        let held = hold_step(&delivered);
        assert_eq!((held.x.clone(), held.y.clone()), (s.x.clone(), s.y.clone()));
        assert_eq!(held.mailbox[0].origin, 4);
    }

    #[test]
    fn residual_examples() {
        let ineq = scalar_agent(1, 0, 1.0);
        let t = table_with_gamma(&ineq, 1.0);
        assert_eq!(update_residual(&ineq, &t, 0, &state(0.3, 5.0), false).unwrap(), dvec(&[0.0]));
        assert_eq!(update_residual(&ineq, &t, 0, &state(0.0, -2.0), true).unwrap(), dvec(&[0.0]));
        assert_eq!(update_residual(&ineq, &t, 0, &state(2.0, 0.0), true).unwrap(), dvec(&[0.0]));
        assert!(update_residual(&ineq, &table_with_gamma(&ineq, 0.0), 0, &state(0.0, 0.0), true).is_err());
    }

    #[test]
    fn sync_small_step_limit() {
        let prob = scalar_agent(0, 1, 1.0);
        let y = DualPoint { blocks: vec![dvec(&[0.25])] };
        let (x, next) = sync_iteration(&prob, 1e-300, &y).unwrap();
        assert_eq!(x[0], dvec(&[2.75]));
        assert_eq!(next, y);
        assert!(sync_iteration(&prob, 0.0, &y).is_err());
    }

    #[test]
    fn sync_fixed_point_at_dual_optimum() {
        // min ½x² − 3x s.t. x = 0  →  y* = 3, x* = 0
        let prob = scalar_agent(0, 1, 1.0);
        let y = DualPoint { blocks: vec![dvec(&[3.0])] };
        let (x, next) = sync_iteration(&prob, 0.4, &y).unwrap();
        assert_eq!(x[0], dvec(&[0.0]));
        assert_eq!(next, y);
        let t = choose_gammas(&constants_for(&prob, PhiDenominator::Owner).unwrap(), 1, 0.99, 1.0).unwrap();
        assert!(t.gamma[0] > 0.0);
    }
}
