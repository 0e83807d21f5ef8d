//! The constraint-coupled program.
//!
//! Every agent `i` owns a strongly convex quadratic cost `f_i` (optionally
//! restricted to a box) and a block of coupling constraints
//!
//! ```text
//!   Σ_{j∈N_i} C_{i,j} x_j + d_{i,j} ≤ 0      (p_i rows)
//!   Σ_{j∈N_i} A_{i,j} x_j − b_{i,j} = 0      (r_i rows)
//! ```
//!
//! The multiplier of agent `i` lives in `Ω_i = R^{p_i}_{≥0} × R^{r_i}`. All
//! operations here are pure functions of their inputs.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Undirected communication graph with the convention that every agent is its
/// own neighbor. Neighbor lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from undirected edges; self-loops are added.
    pub fn new(agent_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut neighbors: Vec<Vec<usize>> = (0..agent_count).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a >= agent_count || b >= agent_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a missing agent"
                )));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    /// Takes neighbor lists verbatim (sorted and deduplicated, nothing else).
    /// Symmetry and self-loops are left for [`validate_problem`] to judge.
    pub fn from_neighbor_lists(mut neighbors: Vec<Vec<usize>>) -> Self {
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn path(agent_count: usize) -> Self {
        let edges: Vec<_> = (1..agent_count).map(|i| (i - 1, i)).collect();
        Self::new(agent_count, &edges).expect("path graph")
    }

    pub fn ring(agent_count: usize) -> Self {
        let mut edges: Vec<_> = (1..agent_count).map(|i| (i - 1, i)).collect();
        if agent_count > 2 {
            edges.push((agent_count - 1, 0));
        }
        Self::new(agent_count, &edges).expect("ring graph")
    }

    pub fn complete(agent_count: usize) -> Self {
        let mut edges = Vec::new();
        for a in 0..agent_count {
            for b in a + 1..agent_count {
                edges.push((a, b));
            }
        }
        Self::new(agent_count, &edges).expect("complete graph")
    }

    pub fn agent_count(&self) -> usize {
        self.neighbors.len()
    }

    /// `N_i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Position of `j` inside `N_i`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors.get(i)?.binary_search(&j).ok()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.slot(i, j).is_some()
    }

    /// Unordered edges `(a, b)` with `a < b`, self-loops excluded.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.neighbors.iter().enumerate() {
            for &b in list {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, list)| {
            list.iter()
                .all(|&j| j < self.agent_count() && self.contains(j, i))
        })
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.agent_count()).all(|i| self.contains(i, i))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.agent_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if j < n && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Agents within two hops of `i` (`N_i ∪ ⋃_{j∈N_i} N_j`), sorted.
    pub fn two_hop(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.neighbors[i]
            .iter()
            .flat_map(|&j| self.neighbors[j].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Curvature of a quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Diagonal(h) => h.len(),
            Hessian::Full(h) => h.nrows(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Hessian::Diagonal(h) => DMatrix::from_diagonal(h),
            Hessian::Full(h) => h.clone(),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Hessian::Diagonal(h) => h.component_mul(x),
            Hessian::Full(h) => h * x,
        }
    }
}

/// Box domain; infinite entries mean the side is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxBounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// `f_i(x) = ½ xᵀ H x + qᵀ x + constant`, restricted to an optional box.
#[derive(Debug, Clone)]
pub struct LocalCost {
    hessian: Hessian,
    linear: DVector<f64>,
    constant: f64,
    bounds: Option<BoxBounds>,
    rho: f64,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl PartialEq for LocalCost {
    fn eq(&self, other: &Self) -> bool {
        self.hessian == other.hessian
            && self.linear == other.linear
            && self.constant.to_bits() == other.constant.to_bits()
            && self.bounds == other.bounds
    }
}

impl LocalCost {
    /// Checks shapes and the diagonal-if-boxed rule. A Hessian that is not
    /// positive definite is accepted here (with `rho ≤ 0`) so that
    /// [`validate_problem`] can report it; the argmin refuses such costs.
    pub fn new(hessian: Hessian, linear: DVector<f64>, bounds: Option<BoxBounds>) -> Result<Self> {
        let n = hessian.dim();
        if n == 0 {
            return Err(Error::InvalidParameter("local dimension must be positive".into()));
        }
        check_dim("cost linear term", n, linear.len())?;
        let (rho, factor) = match &hessian {
            Hessian::Diagonal(h) => (h.iter().copied().fold(f64::INFINITY, f64::min), None),
            Hessian::Full(h) => {
                check_dim("hessian columns", n, h.ncols())?;
                let scale = h.amax().max(1.0);
                if (h - h.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::InvalidCost("hessian is not symmetric".into()));
                }
                let rho = h.clone().symmetric_eigenvalues().min();
                (rho, Cholesky::new(h.clone()))
            }
        };
        if let Some(b) = &bounds {
            if !matches!(hessian, Hessian::Diagonal(_)) {
                return Err(Error::InvalidCost(
                    "a box domain requires a diagonal hessian".into(),
                ));
            }
            check_dim("box lower bound", n, b.lower.len())?;
            check_dim("box upper bound", n, b.upper.len())?;
            for t in 0..n {
                let (lo, hi) = (b.lower[t], b.upper[t]);
                if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    return Err(Error::InvalidCost(format!(
                        "box has empty interior in coordinate {t}"
                    )));
                }
            }
        }
        Ok(Self {
            hessian,
            linear,
            constant: 0.0,
            bounds,
            rho,
            factor,
        })
    }

    pub fn diagonal(h: &[f64], q: &[f64]) -> Result<Self> {
        Self::new(
            Hessian::Diagonal(DVector::from_column_slice(h)),
            DVector::from_column_slice(q),
            None,
        )
    }

    pub fn boxed(h: &[f64], q: &[f64], lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            Hessian::Diagonal(DVector::from_column_slice(h)),
            DVector::from_column_slice(q),
            Some(BoxBounds::new(
                DVector::from_column_slice(lower),
                DVector::from_column_slice(upper),
            )),
        )
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn hessian(&self) -> &Hessian {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn bounds(&self) -> Option<&BoxBounds> {
        self.bounds.as_ref()
    }

    /// Strong convexity modulus (smallest Hessian eigenvalue).
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.hessian.apply(x)) + self.linear.dot(x) + self.constant
    }

    /// Minimizer of `f_i(x) + ⟨x, λ⟩` over the domain.
    pub fn argmin(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("aggregated dual term", self.dim(), lambda.len())?;
        if !(self.rho > 0.0) {
            return Err(Error::NotPositiveDefinite {
                agent: None,
                rho: self.rho,
            });
        }
        let rhs = -(&self.linear + lambda);
        match (&self.hessian, &self.factor) {
            (Hessian::Diagonal(h), _) => {
                let mut x = rhs.component_div(h);
                if let Some(b) = &self.bounds {
                    for t in 0..x.len() {
                        x[t] = x[t].clamp(b.lower[t], b.upper[t]);
                    }
                }
                Ok(x)
            }
            (Hessian::Full(_), Some(chol)) => Ok(chol.solve(&rhs)),
            (Hessian::Full(_), None) => Err(Error::NotPositiveDefinite {
                agent: None,
                rho: self.rho,
            }),
        }
    }
}

/// Affine coupling of agent `j`'s variable into agent `i`'s constraints:
/// `g_{i,j}(x_j) = col(C x_j + d, A x_j − b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_offset: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_offset: DVector<f64>,
}

impl CouplingBlock {
    pub fn new(
        ineq_matrix: DMatrix<f64>,
        ineq_offset: DVector<f64>,
        eq_matrix: DMatrix<f64>,
        eq_offset: DVector<f64>,
    ) -> Result<Self> {
        check_dim("inequality offset", ineq_matrix.nrows(), ineq_offset.len())?;
        check_dim("equality offset", eq_matrix.nrows(), eq_offset.len())?;
        check_dim("coupling source dimension", ineq_matrix.ncols(), eq_matrix.ncols())?;
        Ok(Self {
            ineq_matrix,
            ineq_offset,
            eq_matrix,
            eq_offset,
        })
    }

    pub fn zero(p: usize, r: usize, source_dim: usize) -> Self {
        Self {
            ineq_matrix: DMatrix::zeros(p, source_dim),
            ineq_offset: DVector::zeros(p),
            eq_matrix: DMatrix::zeros(r, source_dim),
            eq_offset: DVector::zeros(r),
        }
    }

    pub fn equality(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.ncols();
        Self::new(DMatrix::zeros(0, n), DVector::zeros(0), a, b)
    }

    pub fn inequality(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let n = c.ncols();
        Self::new(c, d, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn p(&self) -> usize {
        self.ineq_matrix.nrows()
    }

    pub fn r(&self) -> usize {
        self.eq_matrix.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.ineq_matrix.ncols()
    }

    /// `G_{i,j} = [C; A]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (p, r, n) = (self.p(), self.r(), self.source_dim());
        let mut g = DMatrix::zeros(p + r, n);
        g.rows_mut(0, p).copy_from(&self.ineq_matrix);
        g.rows_mut(p, r).copy_from(&self.eq_matrix);
        g
    }

    /// `col(d, −b)`, the constant part of `g_{i,j}`.
    pub fn stacked_offset(&self) -> DVector<f64> {
        let (p, r) = (self.p(), self.r());
        let mut h = DVector::zeros(p + r);
        h.rows_mut(0, p).copy_from(&self.ineq_offset);
        h.rows_mut(p, r).copy_from(&(-&self.eq_offset));
        h
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (p, r) = (self.p(), self.r());
        let mut out = DVector::zeros(p + r);
        out.rows_mut(0, p)
            .copy_from(&(&self.ineq_matrix * x + &self.ineq_offset));
        out.rows_mut(p, r)
            .copy_from(&(&self.eq_matrix * x - &self.eq_offset));
        out
    }

    /// `G_{i,j}ᵀ y`.
    pub fn transpose_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        self.ineq_matrix.tr_mul(&y.rows(0, p).into_owned())
            + self.eq_matrix.tr_mul(&y.rows(p, self.r()).into_owned())
    }

    /// Tight Lipschitz constant of the affine map, `‖[C; A]‖₂`.
    pub fn lipschitz(&self) -> f64 {
        linalg::spectral_norm(&self.stacked())
    }
}

/// Per-agent multiplier blocks `y_i ∈ R^{m_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub blocks: Vec<DVector<f64>>,
}

impl DualPoint {
    pub fn zeros(problem: &Problem) -> Self {
        Self {
            blocks: (0..problem.agent_count())
                .map(|i| DVector::zeros(problem.m(i)))
                .collect(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        linalg::stack(&self.blocks)
    }

    pub fn from_stacked(problem: &Problem, v: &DVector<f64>) -> Result<Self> {
        check_dim("stacked dual point", problem.total_m(), v.len())?;
        let mut at = 0;
        let blocks = (0..problem.agent_count())
            .map(|i| {
                let b = v.rows(at, problem.m(i)).into_owned();
                at += problem.m(i);
                b
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn block(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i]
    }

    /// Whether every inequality multiplier is nonnegative.
    pub fn is_in_omega(&self, problem: &Problem) -> bool {
        self.blocks
            .iter()
            .enumerate()
            .all(|(i, y)| y.rows(0, problem.p(i)).iter().all(|&v| v >= 0.0))
    }
}

/// The coupled program.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    graph: Graph,
    costs: Vec<LocalCost>,
    ineq_dims: Vec<usize>,
    eq_dims: Vec<usize>,
    /// `couplings[i][s]` is the block owned by `i` for source `graph.neighbors(i)[s]`.
    couplings: Vec<Vec<CouplingBlock>>,
}

impl Problem {
    /// Assembles a problem. Every pair `(i, j)` with `j ∈ N_i` needs a block
    /// (possibly zero); blocks for non-edges are rejected.
    pub fn new(
        graph: Graph,
        costs: Vec<LocalCost>,
        ineq_dims: Vec<usize>,
        eq_dims: Vec<usize>,
        mut blocks: BTreeMap<(usize, usize), CouplingBlock>,
    ) -> Result<Self> {
        let n = graph.agent_count();
        check_dim("number of local costs", n, costs.len())?;
        check_dim("number of inequality dimensions", n, ineq_dims.len())?;
        check_dim("number of equality dimensions", n, eq_dims.len())?;
        if let Some(&(owner, neighbor)) = blocks.keys().find(|&&(i, j)| !graph.contains(i, j)) {
            return Err(Error::CouplingOffGraph { owner, neighbor });
        }
        let mut couplings = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(graph.neighbors(i).len());
            for &j in graph.neighbors(i) {
                if j >= n {
                    return Err(Error::AgentOutOfRange(j));
                }
                let block = blocks
                    .remove(&(i, j))
                    .ok_or(Error::MissingCoupling { owner: i, neighbor: j })?;
                let ctx = format!("coupling ({i}, {j})");
                check_dim(&format!("{ctx} inequality rows"), ineq_dims[i], block.p())?;
                check_dim(&format!("{ctx} equality rows"), eq_dims[i], block.r())?;
                check_dim(&format!("{ctx} source dimension"), costs[j].dim(), block.source_dim())?;
                row.push(block);
            }
            couplings.push(row);
        }
        Ok(Self {
            graph,
            costs,
            ineq_dims,
            eq_dims,
            couplings,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn agent_count(&self) -> usize {
        self.graph.agent_count()
    }

    pub fn cost(&self, i: usize) -> &LocalCost {
        &self.costs[i]
    }

    pub fn costs(&self) -> &[LocalCost] {
        &self.costs
    }

    pub fn n(&self, i: usize) -> usize {
        self.costs[i].dim()
    }

    pub fn p(&self, i: usize) -> usize {
        self.ineq_dims[i]
    }

    pub fn r(&self, i: usize) -> usize {
        self.eq_dims[i]
    }

    pub fn m(&self, i: usize) -> usize {
        self.ineq_dims[i] + self.eq_dims[i]
    }

    pub fn total_n(&self) -> usize {
        self.costs.iter().map(LocalCost::dim).sum()
    }

    pub fn total_m(&self) -> usize {
        (0..self.agent_count()).map(|i| self.m(i)).sum()
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.costs[i].rho()
    }

    pub fn has_boxes(&self) -> bool {
        self.costs.iter().any(|c| c.bounds().is_some())
    }

    pub fn has_inequalities(&self) -> bool {
        self.ineq_dims.iter().any(|&p| p > 0)
    }

    /// Block `g_{i,j}`, or `None` when `j ∉ N_i`.
    pub fn coupling(&self, i: usize, j: usize) -> Option<&CouplingBlock> {
        self.graph.slot(i, j).map(|s| &self.couplings[i][s])
    }

    /// Blocks owned by `i`, aligned with `graph().neighbors(i)`.
    pub fn couplings_of(&self, i: usize) -> &[CouplingBlock] {
        &self.couplings[i]
    }

    pub fn primal_offsets(&self) -> Vec<usize> {
        offsets((0..self.agent_count()).map(|i| self.n(i)))
    }

    pub fn dual_offsets(&self) -> Vec<usize> {
        offsets((0..self.agent_count()).map(|i| self.m(i)))
    }

    /// `f(x) = Σ f_i(x_i)`.
    pub fn objective(&self, x: &[DVector<f64>]) -> f64 {
        self.costs.iter().zip(x).map(|(c, xi)| c.value(xi)).sum()
    }

    /// Constraint values `Σ_j g_{i,j}(x_j)` for every owner `i`.
    pub fn constraint_values(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        (0..self.agent_count())
            .map(|i| {
                self.graph
                    .neighbors(i)
                    .iter()
                    .zip(&self.couplings[i])
                    .fold(DVector::zeros(self.m(i)), |acc, (&j, blk)| acc + blk.eval(&x[j]))
            })
            .collect()
    }

    /// `‖max(0, ineq)‖ + ‖eq‖` over all agents.
    pub fn feasibility_residual(&self, x: &[DVector<f64>]) -> f64 {
        let mut ineq = 0.0;
        let mut eq = 0.0;
        for (i, g) in self.constraint_values(x).iter().enumerate() {
            let p = self.p(i);
            ineq += g.rows(0, p).iter().map(|v| v.max(0.0).powi(2)).sum::<f64>();
            eq += g.rows(p, self.r(i)).norm_squared();
        }
        ineq.sqrt() + eq.sqrt()
    }

    /// Global affine map `g(x) = G x + h` (`G` is `m × n`).
    pub fn global_coupling(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (po, doff) = (self.primal_offsets(), self.dual_offsets());
        let mut g = DMatrix::zeros(self.total_m(), self.total_n());
        let mut h = DVector::zeros(self.total_m());
        for i in 0..self.agent_count() {
            for (&j, blk) in self.graph.neighbors(i).iter().zip(&self.couplings[i]) {
                let mut view = g.view_mut((doff[i], po[j]), (self.m(i), self.n(j)));
                view += blk.stacked();
                let mut hv = h.rows_mut(doff[i], self.m(i));
                hv += blk.stacked_offset();
            }
        }
        (g, h)
    }

    /// Global equality system `A x = b` (rows ordered by owner).
    pub fn global_equality(&self) -> (DMatrix<f64>, DVector<f64>) {
        let po = self.primal_offsets();
        let rows: usize = self.eq_dims.iter().sum();
        let mut a = DMatrix::zeros(rows, self.total_n());
        let mut b = DVector::zeros(rows);
        let mut at = 0;
        for i in 0..self.agent_count() {
            let r = self.r(i);
            for (&j, blk) in self.graph.neighbors(i).iter().zip(&self.couplings[i]) {
                let mut view = a.view_mut((at, po[j]), (r, self.n(j)));
                view += &blk.eq_matrix;
                let mut bv = b.rows_mut(at, r);
                bv += &blk.eq_offset;
            }
            at += r;
        }
        (a, b)
    }

    /// Block-diagonal Hessian and stacked linear term of `f`.
    pub fn global_quadratic(&self) -> (DMatrix<f64>, DVector<f64>) {
        let po = self.primal_offsets();
        let n = self.total_n();
        let mut h = DMatrix::zeros(n, n);
        let mut q = DVector::zeros(n);
        for (i, c) in self.costs.iter().enumerate() {
            h.view_mut((po[i], po[i]), (c.dim(), c.dim()))
                .copy_from(&c.hessian().to_matrix());
            q.rows_mut(po[i], c.dim()).copy_from(c.linear());
        }
        (h, q)
    }
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut at = 0;
    dims.map(|d| {
        let o = at;
        at += d;
        o
    })
    .collect()
}

fn check_agent(problem: &Problem, i: usize) -> Result<()> {
    if i < problem.agent_count() {
        Ok(())
    } else {
        Err(Error::AgentOutOfRange(i))
    }
}

/// `g_{i,j}(x_j)`; the zero vector of `R^{m_i}` when `j ∉ N_i`.
pub fn eval_coupling(problem: &Problem, i: usize, j: usize, x_j: &DVector<f64>) -> Result<DVector<f64>> {
    check_agent(problem, i)?;
    check_agent(problem, j)?;
    check_dim("coupling argument", problem.n(j), x_j.len())?;
    Ok(match problem.coupling(i, j) {
        Some(blk) => blk.eval(x_j),
        None => DVector::zeros(problem.m(i)),
    })
}

/// Projection onto `Ω_i`: the first `p_i` entries are clamped at zero.
pub fn project_omega(problem: &Problem, i: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_agent(problem, i)?;
    check_dim("dual block", problem.m(i), v.len())?;
    Ok(project_onto_cone(problem.p(i), v))
}

pub(crate) fn project_onto_cone(p: usize, v: &DVector<f64>) -> DVector<f64> {
    let mut out = v.clone();
    for t in 0..p {
        out[t] = out[t].max(0.0);
    }
    out
}

/// `λ_i = Σ_{j∈N_i} G_{j,i}ᵀ y_j`, reading `y_j` through `dual_of(j)`.
pub fn aggregate_dual_term<'a>(
    problem: &Problem,
    i: usize,
    mut dual_of: impl FnMut(usize) -> &'a DVector<f64>,
) -> DVector<f64> {
    let mut lambda = DVector::zeros(problem.n(i));
    for &j in problem.graph().neighbors(i) {
        if let Some(blk) = problem.coupling(j, i) {
            lambda += blk.transpose_apply(dual_of(j));
        }
    }
    lambda
}

/// Unique minimizer of `f_i(x) + ⟨x, λ⟩`.
pub fn local_argmin(problem: &Problem, i: usize, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    check_agent(problem, i)?;
    problem
        .cost(i)
        .argmin(lambda)
        .map_err(|e| match e {
            Error::NotPositiveDefinite { rho, .. } => Error::NotPositiveDefinite { agent: Some(i), rho },
            other => other,
        })
}

/// `x*(y)`, computed agent by agent.
pub fn primal_response(problem: &Problem, y: &DualPoint) -> Result<Vec<DVector<f64>>> {
    check_dim("dual point blocks", problem.agent_count(), y.blocks.len())?;
    for (i, b) in y.blocks.iter().enumerate() {
        check_dim("dual block", problem.m(i), b.len())?;
    }
    (0..problem.agent_count())
        .map(|i| {
            let lambda = aggregate_dual_term(problem, i, |j| &y.blocks[j]);
            local_argmin(problem, i, &lambda)
        })
        .collect()
}

/// Dual value `q(y)` and gradient `∇q(y) = g(x*(y))` (stacked).
pub fn dual_value_and_gradient(problem: &Problem, y: &DualPoint) -> Result<(f64, DVector<f64>)> {
    let x = primal_response(problem, y)?;
    let g = problem.constraint_values(&x);
    let value = problem.objective(&x) + g.iter().zip(&y.blocks).map(|(gi, yi)| gi.dot(yi)).sum::<f64>();
    Ok((value, linalg::stack(&g)))
}

pub fn dual_value(problem: &Problem, y: &DualPoint) -> Result<f64> {
    dual_value_and_gradient(problem, y).map(|(v, _)| v)
}

/// `θ_{i,j}`: spectral norm of `[C_{i,j}; A_{i,j}]`, zero when `j ∉ N_i`.
pub fn coupling_lipschitz(problem: &Problem, i: usize, j: usize) -> f64 {
    problem.coupling(i, j).map_or(0.0, CouplingBlock::lipschitz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != CheckStatus::Fail)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.status)
    }

    fn push(&mut self, name: &'static str, ok: bool, detail: String) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.entries.push(CheckEntry { name, status, detail });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            let tag = match e.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Warn => "WARN",
                CheckStatus::Fail => "FAIL",
            };
            writeln!(f, "{tag} {}: {}", e.name, e.detail)?;
        }
        Ok(())
    }
}

pub const CHECK_STRONG_CONVEXITY: &str = "strong_convexity";
pub const CHECK_GRAPH: &str = "graph";
pub const CHECK_RANK: &str = "full_row_rank";
pub const CHECK_SLATER: &str = "slater";
pub const CHECK_SLATER_BOX: &str = "slater_box";
pub const CHECK_SLATER_INEQ: &str = "slater_inequality";
pub const CHECK_SLATER_EQ: &str = "slater_equality";

/// Tolerance on the Slater candidate's equality residual.
pub const SLATER_EQ_TOLERANCE: f64 = 1e-8;

/// Checks the regularity assumptions on a structurally valid problem.
pub fn validate_problem(problem: &Problem, slater_candidate: Option<&[DVector<f64>]>) -> ValidationReport {
    let mut report = ValidationReport::default();

    let bad: Vec<String> = (0..problem.agent_count())
        .filter(|&i| !(problem.rho(i) > 0.0))
        .map(|i| format!("{i} (rho={:e})", problem.rho(i)))
        .collect();
    let min_rho = (0..problem.agent_count())
        .map(|i| problem.rho(i))
        .fold(f64::INFINITY, f64::min);
    report.push(
        CHECK_STRONG_CONVEXITY,
        bad.is_empty(),
        if bad.is_empty() {
            format!("min rho = {min_rho:e}")
        } else {
            format!("non-positive curvature at agents {}", bad.join(", "))
        },
    );

    let sym = problem.graph().is_symmetric();
    let loops = problem.graph().has_self_loops();
    report.push(
        CHECK_GRAPH,
        sym && loops,
        format!("symmetric={sym}, self-loops={loops}"),
    );

    let (a, _) = problem.global_equality();
    if a.nrows() == 0 {
        report.push(CHECK_RANK, true, "no equality constraints".into());
    } else {
        let dependent = linalg::dependent_rows(&a);
        let rank = a.nrows() - dependent.len();
        report.push(
            CHECK_RANK,
            dependent.is_empty(),
            if dependent.is_empty() {
                format!("rank {rank} = {} rows", a.nrows())
            } else {
                format!(
                    "rank {rank} < {} rows; dependent rows {:?}",
                    a.nrows(),
                    dependent
                )
            },
        );
    }

    match slater_candidate {
        None => report.entries.push(CheckEntry {
            name: CHECK_SLATER,
            status: CheckStatus::Warn,
            detail: "no candidate point supplied; Slater condition not checked".into(),
        }),
        Some(x) => check_slater(problem, x, &mut report),
    }
    report
}

fn check_slater(problem: &Problem, x: &[DVector<f64>], report: &mut ValidationReport) {
    let shapes_ok = x.len() == problem.agent_count()
        && x.iter().enumerate().all(|(i, xi)| xi.len() == problem.n(i));
    if !shapes_ok {
        report.push(CHECK_SLATER, false, "candidate has the wrong shape".into());
        return;
    }

    let mut box_margin = f64::INFINITY;
    for (i, xi) in x.iter().enumerate() {
        if let Some(b) = problem.cost(i).bounds() {
            for t in 0..xi.len() {
                for gap in [xi[t] - b.lower[t], b.upper[t] - xi[t]] {
                    if gap.is_finite() {
                        box_margin = box_margin.min(gap);
                    }
                }
            }
        }
    }
    report.push(
        CHECK_SLATER_BOX,
        box_margin > 0.0,
        format!("interior margin {box_margin:e}"),
    );

    let g = problem.constraint_values(x);
    let mut ineq_margin = f64::INFINITY;
    let mut eq_residual: f64 = 0.0;
    for (i, gi) in g.iter().enumerate() {
        let p = problem.p(i);
        for v in gi.rows(0, p).iter() {
            ineq_margin = ineq_margin.min(-v);
        }
        eq_residual = eq_residual.max(gi.rows(p, problem.r(i)).amax());
    }
    report.push(
        CHECK_SLATER_INEQ,
        ineq_margin > 0.0,
        format!("strict margin {ineq_margin:e}"),
    );
    let (_, b) = problem.global_equality();
    let tol = SLATER_EQ_TOLERANCE * (1.0 + b.amax());
    report.push(
        CHECK_SLATER_EQ,
        eq_residual <= tol,
        format!("max residual {eq_residual:e} (tolerance {tol:e})"),
    );
}
