//! Per-counter run metrics and their CSV form.

use std::io::Write;

use crate::error::Result;

/// Column order of the run CSV.
pub const RUN_COLUMNS: [&str; 6] = ["k", "avg_updates", "dist", "dual", "feas", "residual"];

/// Metrics of the iterate after `k` events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub k: u64,
    /// Cumulative updates divided by the number of agents.
    pub avg_updates: f64,
    /// `‖x(k) − x*‖`, NaN without a reference solution.
    pub dist: f64,
    /// `q(y(k))`.
    pub dual: f64,
    /// `‖max(0, ineq)‖ + ‖eq residual‖` at `x(k)`.
    pub feas: f64,
    /// `‖s(k − 1)‖`, the scaled step that produced this iterate.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    pub mode: String,
    pub q: u64,
    pub seed: u64,
    pub gamma_scale: f64,
    pub gamma_safety: f64,
    pub admissible: bool,
    pub horizon: u64,
    pub agent_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    /// Metrics at `k = 0` (no step taken yet; residual is zero).
    pub initial: MetricsRow,
    pub rows: Vec<MetricsRow>,
}

impl RunRecord {
    pub fn last(&self) -> &MetricsRow {
        self.rows.last().unwrap_or(&self.initial)
    }

    /// Writes `#`-prefixed metadata lines, the header, then one row per
    /// recorded counter. Numbers use the shortest round-trip form.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let m = &self.meta;
        writeln!(out, "# mode={}", m.mode)?;
        writeln!(out, "# Q={}", m.q)?;
        writeln!(out, "# seed={}", m.seed)?;
        writeln!(out, "# gamma_scale={:e}", m.gamma_scale)?;
        writeln!(out, "# gamma_safety={:e}", m.gamma_safety)?;
        writeln!(out, "# admissible={}", m.admissible)?;
        writeln!(out, "# horizon={}", m.horizon)?;
        writeln!(out, "# agents={}", m.agent_count)?;
        writeln!(out, "# initial_dist={:e}", self.initial.dist)?;
        writeln!(out, "# initial_dual={:e}", self.initial.dual)?;
        writeln!(out, "{}", RUN_COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                r.k, r.avg_updates, r.dist, r.dual, r.feas, r.residual
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}
