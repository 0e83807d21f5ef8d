//! Realized update sets and staleness stamps, and the asynchrony bound `Q`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::problem::Graph;

/// Receives the event log of a replay.
pub trait TraceSink {
    /// Opens the next counter at `tick`.
    fn begin_step(&mut self, tick: u64);

    /// Records a completion at the current counter with stamps aligned to
    /// `graph.neighbors(agent)`.
    fn record(&mut self, agent: usize, stamps: &[u64]) -> Result<()>;
}

/// Full event log, stored as lags `k − τ` per completion and neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    graph: Graph,
    step_ticks: Vec<u64>,
    /// Index into `completions` of each step's first completion.
    step_first: Vec<u32>,
    completions: Vec<u32>,
    completion_first_lag: Vec<u32>,
    lags: Vec<u32>,
    update_counts: Vec<u64>,
}

/// One completion as seen by an external observer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub counter: u64,
    pub tick: u64,
    pub agent: usize,
    /// `(j, τ_{i,j}^k)` for every `j ∈ N_i`.
    pub stamps: Vec<(usize, u64)>,
}

impl TraceSink for Trace {
    fn begin_step(&mut self, tick: u64) {
        self.step_ticks.push(tick);
        self.step_first.push(self.completions.len() as u32);
    }

    fn record(&mut self, agent: usize, stamps: &[u64]) -> Result<()> {
        let k = self
            .horizon()
            .checked_sub(1)
            .ok_or_else(|| Error::InvalidSchedule("record before begin_step".into()))?;
        let expected = self.graph.neighbors(agent).len();
        if stamps.len() != expected {
            return Err(Error::DimensionMismatch { context: "trace stamps".into(), expected, found: stamps.len() });
        }
        if self.lags.len() + stamps.len() > u32::MAX as usize {
            return Err(Error::InvalidSchedule("trace exceeds 2^32 stamps".into()));
        }
        if let Some(&tau) = stamps.iter().find(|&&tau| tau > k) {
            return Err(Error::InvalidSchedule(format!("stamp {tau} exceeds counter {k}")));
        }
        self.completions.push(agent as u32);
        self.completion_first_lag.push(self.lags.len() as u32);
        self.lags.extend(stamps.iter().map(|&tau| (k - tau) as u32));
        self.update_counts[agent] += 1;
        Ok(())
    }
}

impl Trace {
    pub fn new(graph: Graph) -> Self {
        let n = graph.agent_count();
        Self {
            graph,
            step_ticks: Vec::new(),
            step_first: Vec::new(),
            completions: Vec::new(),
            completion_first_lag: Vec::new(),
            lags: Vec::new(),
            update_counts: vec![0; n],
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn horizon(&self) -> u64 {
        self.step_ticks.len() as u64
    }

    pub fn update_counts(&self) -> &[u64] {
        &self.update_counts
    }

    pub fn completion_count(&self) -> usize {
        self.completions.len()
    }

    fn completion_range(&self, step: usize) -> std::ops::Range<usize> {
        let start = self.step_first[step] as usize;
        let end = self.step_first.get(step + 1).map_or(self.completions.len(), |&v| v as usize);
        start..end
    }

    /// Calls `f(k, tick, agent, neighbor, τ)` for every recorded stamp.
    pub fn for_each_stamp(&self, mut f: impl FnMut(u64, u64, usize, usize, u64)) {
        for step in 0..self.step_ticks.len() {
            let k = step as u64;
            for c in self.completion_range(step) {
                let agent = self.completions[c] as usize;
                let first = self.completion_first_lag[c] as usize;
                for (s, &j) in self.graph.neighbors(agent).iter().enumerate() {
                    f(k, self.step_ticks[step], agent, j, k - self.lags[first + s] as u64);
                }
            }
        }
    }

    pub fn events(&self) -> impl Iterator<Item = TraceEvent> + '_ {
        (0..self.step_ticks.len()).flat_map(move |step| {
            self.completion_range(step).map(move |c| {
                let agent = self.completions[c] as usize;
                let first = self.completion_first_lag[c] as usize;
                let k = step as u64;
                TraceEvent {
                    counter: k,
                    tick: self.step_ticks[step],
                    agent,
                    stamps: self
                        .graph
                        .neighbors(agent)
                        .iter()
                        .enumerate()
                        .map(|(s, &j)| (j, k - self.lags[first + s] as u64))
                        .collect(),
                }
            })
        })
    }

    /// Counters at which each agent updated.
    pub fn update_sets(&self) -> Vec<Vec<u64>> {
        let mut sets = vec![Vec::new(); self.graph.agent_count()];
        for step in 0..self.step_ticks.len() {
            for c in self.completion_range(step) {
                sets[self.completions[c] as usize].push(step as u64);
            }
        }
        sets
    }

    pub fn max_lag(&self) -> u64 {
        self.lags.iter().copied().max().unwrap_or(0) as u64
    }

    /// CSV with columns `k,tick,agent,neighbor,tau`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "k,tick,agent,neighbor,tau")?;
        let mut result = Ok(());
        self.for_each_stamp(|k, tick, agent, j, tau| {
            if result.is_ok() {
                result = writeln!(out, "{k},{tick},{agent},{j},{tau}");
            }
        });
        result?;
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Streaming version of [`measure_q`] that stores nothing per event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMeter {
    steps: u64,
    first: Vec<Option<u64>>,
    last: Vec<u64>,
    max_gap: u64,
    max_lag: u64,
}

impl QMeter {
    pub fn new(agent_count: usize) -> Self {
        Self { steps: 0, first: vec![None; agent_count], last: vec![0; agent_count], max_gap: 0, max_lag: 0 }
    }

    pub fn finish(&self) -> Result<u64> {
        let mut q = self.max_gap.max(self.max_lag).max(1);
        for (i, first) in self.first.iter().enumerate() {
            let first = first.ok_or(Error::AgentNeverUpdates(i))?;
            q = q.max(first + 1).max(self.steps - self.last[i]);
        }
        Ok(q)
    }
}

impl TraceSink for QMeter {
    fn begin_step(&mut self, _tick: u64) {
        self.steps += 1;
    }

    fn record(&mut self, agent: usize, stamps: &[u64]) -> Result<()> {
        let k = self.steps - 1;
        match self.first[agent] {
            None => self.first[agent] = Some(k),
            Some(_) => self.max_gap = self.max_gap.max(k - self.last[agent]),
        }
        self.last[agent] = k;
        for &tau in stamps {
            self.max_lag = self.max_lag.max(k - tau);
        }
        Ok(())
    }
}

/// Smallest `Q` such that every window of `Q` consecutive counters inside
/// the horizon meets every update set and every stamp satisfies
/// `k − Q ≤ τ ≤ k`.
pub fn measure_q(trace: &Trace) -> Result<u64> {
    let horizon = trace.horizon();
    let mut q = 1u64;
    for (i, set) in trace.update_sets().iter().enumerate() {
        let (Some(&first), Some(&last)) = (set.first(), set.last()) else {
            return Err(Error::AgentNeverUpdates(i));
        };
        q = q.max(first + 1).max(horizon - last);
        for w in set.windows(2) {
            q = q.max(w[1] - w[0]);
        }
    }
    Ok(q.max(trace.max_lag()))
}
