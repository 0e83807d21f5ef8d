//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use asyncdual::harness::generators::{ieee14_instance, random_instance, Instance, RandomSpec};
use asyncdual::{CouplingBlock, DVector, DualPoint, LocalCost, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Even seeds give general instances (boxes, inequalities), odd seeds
/// equality-only ones.
pub fn mixed_instance(seed: u64, agents: usize) -> Instance {
    let spec = if seed % 2 == 0 { RandomSpec::general(agents) } else { RandomSpec::equality_only(agents) };
    random_instance(&spec, seed).unwrap()
}

/// The bundled 14-bus case plus a handful of random instances.
pub fn test_instances() -> Vec<Instance> {
    let mut out = vec![ieee14_instance().unwrap()];
    out.extend((0..6).map(|s| mixed_instance(s, 4 + s as usize)));
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point of `Ω` with entries in `[-scale, scale]`.
pub fn random_dual(problem: &Problem, rng: &mut ChaCha8Rng, scale: f64) -> DualPoint {
    let blocks = (0..problem.agent_count())
        .map(|i| {
            DVector::from_fn(problem.m(i), |t, _| {
                let v = rng.random_range(-scale..scale);
                if t < problem.p(i) { v.abs() } else { v }
            })
        })
        .collect();
    DualPoint { blocks }
}

/// Copy of `problem` with the costs passed through `edit`.
pub fn with_costs(problem: &Problem, mut edit: impl FnMut(usize, &LocalCost) -> LocalCost) -> Problem {
    let n = problem.agent_count();
    let graph = problem.graph().clone();
    let costs = (0..n).map(|i| edit(i, problem.cost(i))).collect();
    let mut blocks: BTreeMap<(usize, usize), CouplingBlock> = BTreeMap::new();
    for i in 0..n {
        for &j in graph.neighbors(i) {
            blocks.insert((i, j), problem.coupling(i, j).unwrap().clone());
        }
    }
    let p = (0..n).map(|i| problem.p(i)).collect();
    let r = (0..n).map(|i| problem.r(i)).collect();
    Problem::new(graph, costs, p, r, blocks).unwrap()
}

pub fn dist(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()).sum::<f64>().sqrt()
}
