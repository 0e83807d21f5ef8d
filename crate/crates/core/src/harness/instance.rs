//! JSON instance files.
//!
//! Numbers are written in shortest round-trip form and read back exactly, so
//! `save` followed by `load` reproduces a problem bit for bit. Infinite box
//! bounds are written as `null` (lower: −∞, upper: +∞). Unknown fields are
//! reported as warnings and otherwise ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::generators::Instance;
use crate::problem::{BoxBounds, CouplingBlock, Graph, Hessian, LocalCost, Problem};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianFile {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFile {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFile {
    pub dim: usize,
    pub hessian: HessianFile,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxFile>,
    pub ineq_dim: usize,
    pub eq_dim: usize,
}

/// Block `g_{owner,neighbor}`; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingFile {
    pub owner: usize,
    pub neighbor: usize,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: u32,
    #[serde(default)]
    pub metadata: Metadata,
    pub agents: Vec<AgentFile>,
    pub edges: Vec<(usize, usize)>,
    pub couplings: Vec<CouplingFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slater_candidate: Option<Vec<Vec<f64>>>,
}

/// A loaded instance plus the paths of ignored fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub instance: Instance,
    pub warnings: Vec<String>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix(path: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(schema(path, format!("expected {nrows} rows, found {}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(schema(format!("{path}[{r}]"), format!("expected {ncols} entries, found {}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn vector(path: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(schema(path, format!("expected {len} entries, found {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let p = &inst.problem;
        let agents = p
            .costs()
            .iter()
            .enumerate()
            .map(|(i, c)| AgentFile {
                dim: c.dim(),
                hessian: match c.hessian() {
                    Hessian::Diagonal(h) => HessianFile::Diagonal(h.iter().copied().collect()),
                    Hessian::Full(h) => HessianFile::Full(rows_of(h)),
                },
                linear: c.linear().iter().copied().collect(),
                constant: c.constant(),
                bounds: c.bounds().map(|b| BoxFile {
                    lower: b.lower.iter().map(|&v| v.is_finite().then_some(v)).collect(),
                    upper: b.upper.iter().map(|&v| v.is_finite().then_some(v)).collect(),
                }),
                ineq_dim: p.p(i),
                eq_dim: p.r(i),
            })
            .collect();
        let mut couplings = Vec::new();
        for i in 0..p.agent_count() {
            for (&j, blk) in p.graph().neighbors(i).iter().zip(p.couplings_of(i)) {
                couplings.push(CouplingFile {
                    owner: i,
                    neighbor: j,
                    c: rows_of(&blk.ineq_matrix),
                    d: blk.ineq_offset.iter().copied().collect(),
                    a: rows_of(&blk.eq_matrix),
                    b: blk.eq_offset.iter().copied().collect(),
                });
            }
        }
        Self {
            version: FORMAT_VERSION,
            metadata: Metadata { name: inst.name.clone(), description: inst.description.clone() },
            agents,
            edges: p.graph().edges(),
            couplings,
            slater_candidate: inst
                .slater_candidate
                .as_ref()
                .map(|x| x.iter().map(|xi| xi.iter().copied().collect()).collect()),
        }
    }

    pub fn into_instance(self) -> Result<Instance> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Version { found: self.version, expected: FORMAT_VERSION });
        }
        let n = self.agents.len();
        if n == 0 {
            return Err(schema("agents", "at least one agent is required"));
        }
        let mut costs = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            let at = format!("agents[{i}]");
            let hessian = match &a.hessian {
                HessianFile::Diagonal(h) => Hessian::Diagonal(vector(&format!("{at}.hessian.diagonal"), h, a.dim)?),
                HessianFile::Full(rows) => Hessian::Full(matrix(&format!("{at}.hessian.full"), rows, a.dim, a.dim)?),
            };
            let linear = vector(&format!("{at}.linear"), &a.linear, a.dim)?;
            let bounds = match &a.bounds {
                None => None,
                Some(b) => {
                    let side = |name: &str, v: &[Option<f64>], inf: f64| -> Result<DVector<f64>> {
                        if v.len() != a.dim {
                            return Err(schema(format!("{at}.box.{name}"), format!("expected {} entries, found {}", a.dim, v.len())));
                        }
                        Ok(DVector::from_iterator(a.dim, v.iter().map(|x| x.unwrap_or(inf))))
                    };
                    Some(BoxBounds::new(side("lower", &b.lower, f64::NEG_INFINITY)?, side("upper", &b.upper, f64::INFINITY)?))
                }
            };
            let cost = LocalCost::new(hessian, linear, bounds).map_err(|e| schema(&at, e.to_string()))?;
            costs.push(cost.with_constant(a.constant));
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(schema(format!("edges[{e}]"), format!("edge ({a}, {b}) references a missing agent")));
            }
        }
        let graph = Graph::new(n, &self.edges)?;
        let mut blocks = BTreeMap::new();
        for (k, c) in self.couplings.iter().enumerate() {
            let at = format!("couplings[{k}]");
            if c.owner >= n || c.neighbor >= n {
                return Err(schema(&at, format!("block ({}, {}) references a missing agent", c.owner, c.neighbor)));
            }
            let (p, r, src) = (self.agents[c.owner].ineq_dim, self.agents[c.owner].eq_dim, self.agents[c.neighbor].dim);
            let block = CouplingBlock::new(
                matrix(&format!("{at}.C"), &c.c, p, src)?,
                vector(&format!("{at}.d"), &c.d, p)?,
                matrix(&format!("{at}.A"), &c.a, r, src)?,
                vector(&format!("{at}.b"), &c.b, r)?,
            )?;
            if blocks.insert((c.owner, c.neighbor), block).is_some() {
                return Err(schema(&at, format!("duplicate block ({}, {})", c.owner, c.neighbor)));
            }
        }
        let ineq_dims = self.agents.iter().map(|a| a.ineq_dim).collect();
        let eq_dims = self.agents.iter().map(|a| a.eq_dim).collect();
        let problem = Problem::new(graph, costs, ineq_dims, eq_dims, blocks)?;
        let slater_candidate = match self.slater_candidate {
            None => None,
            Some(rows) => {
                if rows.len() != n {
                    return Err(schema("slater_candidate", format!("expected {n} blocks, found {}", rows.len())));
                }
                Some(
                    rows.iter()
                        .enumerate()
                        .map(|(i, v)| vector(&format!("slater_candidate[{i}]"), v, problem.n(i)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        Ok(Instance {
            problem,
            slater_candidate,
            name: self.metadata.name,
            description: self.metadata.description,
        })
    }
}

/// Serializes an instance to pretty-printed JSON (LF line endings).
pub fn instance_to_string(inst: &Instance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst))
        .map_err(|e| schema("", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses an instance, collecting the paths of unknown fields.
pub fn instance_from_str(text: &str) -> Result<Loaded> {
    let mut warnings = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let mut on_ignored = |path: serde_ignored::Path| warnings.push(format!("ignored unknown field {path}"));
    let ignored = serde_ignored::Deserializer::new(&mut de, &mut on_ignored);
    let file: InstanceFile = serde_path_to_error::deserialize(ignored).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| schema("", e.to_string()))?;
    Ok(Loaded { instance: file.into_instance()?, warnings })
}

pub fn save_instance(inst: &Instance, path: &Path) -> Result<()> {
    fs::write(path, instance_to_string(inst)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    instance_from_str(&text)
}
