//! Instance generators: consensus, DC optimal power flow, a bundled 14-bus
//! case and well-conditioned random instances.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{CouplingBlock, Graph, LocalCost, Problem};

/// A generated problem with an optional strictly feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub problem: Problem,
    pub slater_candidate: Option<Vec<DVector<f64>>>,
    pub name: String,
    pub description: String,
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Agents hold `f_i = ½w_i(x_i − z_i)²` and must agree on a common value.
///
/// Row `i` of the graph Laplacian is owned by agent `i` for `i ≥ 1`; agent 0
/// owns no constraint. Connectedness makes the remaining rows independent.
pub fn gen_consensus_instance(minimizers: &[f64], weights: &[f64], graph: &Graph) -> Result<Instance> {
    let n = graph.agent_count();
    if minimizers.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch {
            context: "consensus data".into(),
            expected: n,
            found: minimizers.len().min(weights.len()),
        });
    }
    if !graph.is_connected() {
        return Err(Error::InvalidGraph("consensus needs a connected graph".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!("weights must be positive, got {w}")));
    }
    let costs = minimizers
        .iter()
        .zip(weights)
        .map(|(&z, &w)| Ok(LocalCost::diagonal(&[w], &[-w * z])?.with_constant(0.5 * w * z * z)))
        .collect::<Result<Vec<_>>>()?;
    let eq_dims: Vec<usize> = (0..n).map(|i| usize::from(i > 0)).collect();
    let mut blocks = BTreeMap::new();
    for i in 0..n {
        let degree = graph.neighbors(i).len() as f64 - 1.0;
        for &j in graph.neighbors(i) {
            let block = if i == 0 {
                CouplingBlock::zero(0, 0, 1)
            } else if i == j {
                CouplingBlock::equality(scalar(degree), DVector::zeros(1))?
            } else {
                CouplingBlock::equality(scalar(-1.0), DVector::zeros(1))?
            };
            blocks.insert((i, j), block);
        }
    }
    let problem = Problem::new(graph.clone(), costs, vec![0; n], eq_dims, blocks)?;
    let mean = minimizers.iter().zip(weights).map(|(z, w)| z * w).sum::<f64>() / weights.iter().sum::<f64>();
    Ok(Instance {
        problem,
        slater_candidate: Some(vec![DVector::from_element(1, mean); n]),
        name: format!("consensus-{n}"),
        description: "weighted consensus with Laplacian equality couplings".into(),
    })
}

/// Network data for a DC optimal power flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DcOpfSpec {
    pub bus_count: usize,
    /// `(a, b, B_ab)` with positive susceptance.
    pub lines: Vec<(usize, usize, f64)>,
    pub demand: Vec<f64>,
    pub capacity: Vec<f64>,
    pub cost_quadratic: Vec<f64>,
    pub cost_linear: Vec<f64>,
    /// Curvature on the phase angle.
    pub epsilon: f64,
}

/// Builds `x_i = (P_i, ψ_i)` with one balance equation per bus:
/// `P_i − P_i^d = Σ_j B_ij (ψ_i − ψ_j)`, `0 ≤ P_i ≤ cap_i`, and
/// `f_i = ½c_i P_i² + q_i P_i + ½εψ_i²`.
pub fn gen_dc_opf_instance(spec: &DcOpfSpec) -> Result<Instance> {
    let n = spec.bus_count;
    for (what, len) in [
        ("demand", spec.demand.len()),
        ("capacity", spec.capacity.len()),
        ("quadratic cost", spec.cost_quadratic.len()),
        ("linear cost", spec.cost_linear.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch { context: what.into(), expected: n, found: len });
        }
    }
    if !(spec.epsilon > 0.0) {
        return Err(Error::InvalidParameter("phase regularization must be positive".into()));
    }
    let mut susceptance: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(a, b, bab) in &spec.lines {
        if a == b || a >= n || b >= n {
            return Err(Error::InvalidGraph(format!("line ({a}, {b}) is invalid")));
        }
        if !(bab > 0.0 && bab.is_finite()) {
            return Err(Error::InvalidParameter(format!("line ({a}, {b}) needs a positive susceptance")));
        }
        *susceptance.entry((a.min(b), a.max(b))).or_insert(0.0) += bab;
    }
    let edges: Vec<(usize, usize)> = susceptance.keys().copied().collect();
    let graph = Graph::new(n, &edges)?;
    if !graph.is_connected() {
        return Err(Error::InvalidGraph("the network is disconnected".into()));
    }
    let total_demand: f64 = spec.demand.iter().sum();
    let total_cap: f64 = spec.capacity.iter().sum();
    if spec.capacity.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Infeasible("every capacity must be positive".into()));
    }
    if !(total_demand >= 0.0 && total_demand < total_cap) {
        return Err(Error::Infeasible(format!(
            "total demand {total_demand} must lie in [0, {total_cap})"
        )));
    }
    let b_of = |i: usize, j: usize| susceptance.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0);
    let costs = (0..n)
        .map(|i| {
            LocalCost::boxed(
                &[spec.cost_quadratic[i], spec.epsilon],
                &[spec.cost_linear[i], 0.0],
                &[0.0, f64::NEG_INFINITY],
                &[spec.capacity[i], f64::INFINITY],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = BTreeMap::new();
    for i in 0..n {
        let bsum: f64 = graph.neighbors(i).iter().filter(|&&j| j != i).map(|&j| b_of(i, j)).sum();
        for &j in graph.neighbors(i) {
            let block = if i == j {
                CouplingBlock::equality(DMatrix::from_row_slice(1, 2, &[1.0, -bsum]), DVector::from_element(1, spec.demand[i]))?
            } else {
                CouplingBlock::equality(DMatrix::from_row_slice(1, 2, &[0.0, b_of(i, j)]), DVector::zeros(1))?
            };
            blocks.insert((i, j), block);
        }
    }
    let problem = Problem::new(graph, costs, vec![0; n], vec![1; n], blocks)?;
    let slater_candidate = if total_demand > 0.0 { Some(dc_opf_slater(spec, &problem)?) } else { None };
    Ok(Instance {
        problem,
        slater_candidate,
        name: format!("dcopf-{n}"),
        description: "DC optimal power flow, x_i = (P_i, psi_i)".into(),
    })
}

/// Generation proportional to capacity, angles from the grounded Laplacian.
fn dc_opf_slater(spec: &DcOpfSpec, problem: &Problem) -> Result<Vec<DVector<f64>>> {
    let n = spec.bus_count;
    let total_demand: f64 = spec.demand.iter().sum();
    let total_cap: f64 = spec.capacity.iter().sum();
    let p: Vec<f64> = spec.capacity.iter().map(|c| c * total_demand / total_cap).collect();
    // L ψ = P − P^d with ψ_0 = 0
    let mut lap = DMatrix::zeros(n, n);
    for i in 0..n {
        for (&j, blk) in problem.graph().neighbors(i).iter().zip(problem.couplings_of(i)) {
            lap[(i, j)] = -blk.eq_matrix[(0, 1)];
        }
    }
    let mut psi = DVector::zeros(n);
    if n > 1 {
        let sub = lap.view((1, 1), (n - 1, n - 1)).into_owned();
        let rhs = DVector::from_iterator(n - 1, (1..n).map(|i| p[i] - spec.demand[i]));
        let sol = sub
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("grounded network Laplacian".into()))?;
        psi.rows_mut(1, n - 1).copy_from(&sol);
    }
    Ok((0..n).map(|i| DVector::from_column_slice(&[p[i], psi[i]])).collect())
}

/// Branch list `(from, to, reactance)` of the IEEE 14-bus test case (1-based).
pub const IEEE14_BRANCHES: [(usize, usize, f64); 20] = [
    (1, 2, 0.05917),
    (1, 5, 0.22304),
    (2, 3, 0.19797),
    (2, 4, 0.17632),
    (2, 5, 0.17388),
    (3, 4, 0.17103),
    (4, 5, 0.04211),
    (4, 7, 0.20912),
    (4, 9, 0.55618),
    (5, 6, 0.25202),
    (6, 11, 0.1989),
    (6, 12, 0.25581),
    (6, 13, 0.13027),
    (7, 8, 0.17615),
    (7, 9, 0.11001),
    (9, 10, 0.0845),
    (9, 14, 0.27038),
    (10, 11, 0.19207),
    (12, 13, 0.19988),
    (13, 14, 0.34802),
];

/// Active demand of the IEEE 14-bus case in MW.
pub const IEEE14_DEMAND_MW: [f64; 14] =
    [0.0, 21.7, 94.2, 47.8, 7.6, 11.2, 0.0, 0.0, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9];

/// Generator buses (0-based) and their maximum output in MW.
pub const IEEE14_GENERATORS: [(usize, f64); 5] = [(0, 332.4), (1, 140.0), (2, 100.0), (5, 100.0), (7, 100.0)];

pub const IEEE14_BASE_MVA: f64 = 100.0;

/// Susceptances are `1 / (x · IEEE14_SUSCEPTANCE_DIVISOR)`, angles are in
/// units of twenty radians. This keeps the coupling norms near one.
pub const IEEE14_SUSCEPTANCE_DIVISOR: f64 = 20.0;

/// Capacity of buses without a generator, in per unit.
pub const IEEE14_FLEX_CAPACITY: f64 = 0.5;

/// The bundled 14-bus case: public topology, reactances, demands and
/// generator limits; quadratic costs of 1 at generator buses and 2 elsewhere.
pub fn ieee14_spec() -> DcOpfSpec {
    let n = 14;
    let mut capacity = vec![IEEE14_FLEX_CAPACITY; n];
    let mut cost_quadratic = vec![2.0; n];
    for &(bus, pmax) in &IEEE14_GENERATORS {
        capacity[bus] = pmax / IEEE14_BASE_MVA;
        cost_quadratic[bus] = 1.0;
    }
    DcOpfSpec {
        bus_count: n,
        lines: IEEE14_BRANCHES
            .iter()
            .map(|&(a, b, x)| (a - 1, b - 1, 1.0 / (x * IEEE14_SUSCEPTANCE_DIVISOR)))
            .collect(),
        demand: IEEE14_DEMAND_MW.iter().map(|d| d / IEEE14_BASE_MVA).collect(),
        capacity,
        cost_quadratic,
        cost_linear: vec![0.0; n],
        epsilon: 1.0,
    }
}

pub fn ieee14_instance() -> Result<Instance> {
    let mut inst = gen_dc_opf_instance(&ieee14_spec())?;
    inst.name = "ieee14-dcopf".into();
    inst.description = format!(
        "IEEE 14-bus test case (public topology, reactances, demands and generator limits); \
         susceptance 1/({IEEE14_SUSCEPTANCE_DIVISOR}x), synthetic quadratic costs (1 at generator buses, 2 elsewhere), \
         non-generator capacity {IEEE14_FLEX_CAPACITY} p.u., phase regularization 1"
    );
    Ok(inst)
}

/// Shape of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub agent_count: usize,
    /// Extra undirected edges added on top of a ring.
    pub chords: usize,
    pub max_dim: usize,
    /// Include boxes and inequality couplings.
    pub general: bool,
    /// Magnitude of off-diagonal coupling entries relative to the own block.
    pub cross_coupling: f64,
}

impl RandomSpec {
    pub fn equality_only(agent_count: usize) -> Self {
        Self { agent_count, chords: 1, max_dim: 3, general: false, cross_coupling: 0.15 }
    }

    pub fn general(agent_count: usize) -> Self {
        Self { general: true, ..Self::equality_only(agent_count) }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, chords: usize) -> Result<Graph> {
    let mut edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if n > 2 {
        edges.push((n - 1, 0));
    }
    for _ in 0..chords {
        if n > 3 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, &edges)
}

/// Random instance with one coupling row per agent.
///
/// The own block dominates the neighbor blocks, and Hessians are close to
/// multiples of the identity, so the dual is well conditioned. In general
/// mode some agents carry boxes (with diagonal Hessians) and some rows are
/// inequalities; a strictly feasible point is constructed first and the
/// offsets are chosen around it.
pub fn random_instance(spec: &RandomSpec, seed: u64) -> Result<Instance> {
    let n = spec.agent_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = random_graph(&mut rng, n, spec.chords)?;
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..=spec.max_dim.max(1))).collect();
    let boxed: Vec<bool> = (0..n).map(|_| spec.general && rng.random_bool(0.5)).collect();
    let ineq: Vec<bool> = (0..n).map(|_| spec.general && rng.random_bool(0.4)).collect();

    let mut costs = Vec::with_capacity(n);
    let mut slater = Vec::with_capacity(n);
    for i in 0..n {
        let d = dims[i];
        let linear = DVector::from_fn(d, |_, _| uniform(&mut rng, -1.0, 1.0));
        let point = DVector::from_fn(d, |_, _| uniform(&mut rng, -0.5, 0.5));
        let cost = if boxed[i] {
            let h: Vec<f64> = (0..d).map(|_| uniform(&mut rng, 1.0, 1.5)).collect();
            let lo: Vec<f64> = point.iter().map(|p| p - uniform(&mut rng, 0.5, 1.5)).collect();
            let hi: Vec<f64> = point.iter().map(|p| p + uniform(&mut rng, 0.5, 1.5)).collect();
            LocalCost::boxed(&h, linear.as_slice(), &lo, &hi)?
        } else {
            let mut h = DMatrix::from_fn(d, d, |_, _| uniform(&mut rng, -0.1, 0.1));
            h = (&h + h.transpose()) * 0.5;
            for t in 0..d {
                h[(t, t)] += uniform(&mut rng, 1.0, 1.5);
            }
            LocalCost::new(crate::problem::Hessian::Full(h), linear, None)?
        };
        costs.push(cost);
        slater.push(point);
    }

    let mut blocks = BTreeMap::new();
    for i in 0..n {
        let mut value = 0.0;
        let mut own = DMatrix::zeros(1, dims[i]);
        for t in 0..dims[i] {
            own[(0, t)] = uniform(&mut rng, -1.0, 1.0);
        }
        own /= own.norm().max(1e-3);
        let mut rows = BTreeMap::new();
        for &j in graph.neighbors(i) {
            let row = if j == i {
                own.clone()
            } else {
                DMatrix::from_fn(1, dims[j], |_, _| spec.cross_coupling * uniform(&mut rng, -1.0, 1.0))
            };
            value += (&row * &slater[j])[(0, 0)];
            rows.insert(j, row);
        }
        for (j, row) in rows {
            let block = if ineq[i] {
                // C x + d ≤ 0 with slack at the candidate
                let d = if j == i { -value - uniform(&mut rng, 0.2, 0.6) } else { 0.0 };
                CouplingBlock::inequality(row, DVector::from_element(1, d))?
            } else {
                let b = if j == i { value } else { 0.0 };
                CouplingBlock::equality(row, DVector::from_element(1, b))?
            };
            blocks.insert((i, j), block);
        }
    }
    let ineq_dims: Vec<usize> = ineq.iter().map(|&b| usize::from(b)).collect();
    let eq_dims: Vec<usize> = ineq.iter().map(|&b| usize::from(!b)).collect();
    let problem = Problem::new(graph, costs, ineq_dims, eq_dims, blocks)?;
    Ok(Instance {
        problem,
        slater_candidate: Some(slater),
        name: format!("random-{n}-{seed}"),
        description: if spec.general {
            "random instance with boxes and inequality couplings".into()
        } else {
            "random equality-coupled instance".into()
        },
    })
}
