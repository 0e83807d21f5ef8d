//! Local clocks, links and the event timeline they generate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentClock {
    pub update_period: u64,
    pub phase_offset: u64,
    pub compute_time: u64,
}

impl Default for AgentClock {
    fn default() -> Self {
        Self { update_period: 1, phase_offset: 0, compute_time: 0 }
    }
}

impl AgentClock {
    /// Tick of the first completion.
    pub fn first_completion(&self) -> u64 {
        self.phase_offset + self.compute_time
    }

    /// First completion tick at or after `tick`.
    pub fn next_completion_at_or_after(&self, tick: u64) -> u64 {
        let first = self.first_completion();
        if tick <= first {
            first
        } else {
            first + (tick - first).div_ceil(self.update_period) * self.update_period
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub delay_min: u64,
    pub delay_max: u64,
    pub drop_probability: f64,
    pub max_consecutive_drops: u32,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self { delay_min: 0, delay_max: 0, drop_probability: 0.0, max_consecutive_drops: 0 }
    }
}

/// Override for the directed link `from → to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    pub from: usize,
    pub to: usize,
    pub spec: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub clocks: Vec<AgentClock>,
    pub default_link: LinkSpec,
    #[serde(default)]
    pub links: Vec<LinkOverride>,
    pub rng_seed: u64,
    /// Number of global counters to generate.
    pub horizon: u64,
}

/// Delays above this many ticks are rejected.
pub const MAX_DELAY: u64 = 1 << 20;

impl ScheduleConfig {
    /// Every agent completes at every tick, messages arrive by the next tick.
    pub fn synchronous(agent_count: usize, horizon: u64) -> Self {
        Self {
            clocks: vec![AgentClock::default(); agent_count],
            default_link: LinkSpec::default(),
            links: Vec::new(),
            rng_seed: 0,
            horizon,
        }
    }

    /// Spec of the directed link `from → to`; the last matching override wins.
    pub fn link(&self, from: usize, to: usize) -> LinkSpec {
        self.links
            .iter()
            .rev()
            .find(|l| l.from == from && l.to == to)
            .map_or(self.default_link, |l| l.spec)
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if self.clocks.len() != graph.agent_count() {
            return Err(Error::InvalidSchedule(format!(
                "{} clocks for {} agents",
                self.clocks.len(),
                graph.agent_count()
            )));
        }
        if self.horizon > u32::MAX as u64 {
            return Err(Error::InvalidSchedule("horizon exceeds 2^32 - 1 counters".into()));
        }
        for (i, c) in self.clocks.iter().enumerate() {
            if c.update_period < 1 {
                return Err(Error::InvalidSchedule(format!("agent {i}: update_period must be >= 1")));
            }
            if c.compute_time >= c.update_period {
                return Err(Error::InvalidSchedule(format!(
                    "agent {i}: compute_time must be shorter than update_period"
                )));
            }
        }
        let check = |what: &str, s: &LinkSpec| -> Result<()> {
            if s.delay_min > s.delay_max {
                return Err(Error::InvalidSchedule(format!("{what}: delay_min > delay_max")));
            }
            if s.delay_max > MAX_DELAY {
                return Err(Error::InvalidSchedule(format!("{what}: delay_max exceeds {MAX_DELAY}")));
            }
            if !(0.0..1.0).contains(&s.drop_probability) {
                return Err(Error::InvalidSchedule(format!("{what}: drop_probability must lie in [0, 1)")));
            }
            Ok(())
        };
        check("default link", &self.default_link)?;
        for l in &self.links {
            if l.from == l.to || l.from >= graph.agent_count() || !graph.contains(l.from, l.to) {
                return Err(Error::InvalidSchedule(format!("link {} -> {} is not an edge", l.from, l.to)));
            }
            check(&format!("link {} -> {}", l.from, l.to), &l.spec)?;
        }
        Ok(())
    }

    /// Largest delay any link can draw.
    pub fn max_delay(&self) -> u64 {
        self.links
            .iter()
            .map(|l| l.spec.delay_max)
            .chain([self.default_link.delay_max])
            .max()
            .unwrap_or(0)
    }
}

/// A message that survives its link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Send {
    pub to: usize,
    pub available_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Completion {
    pub agent: usize,
    pub started_at: u64,
    pub sends: Vec<Send>,
}

/// All completions sharing one global counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub counter: u64,
    pub tick: u64,
    pub completions: Vec<Completion>,
}

/// A validated schedule on a graph.
///
/// The timeline is generated on demand from the seeded configuration, so it
/// costs no memory and every pass over it sees the same events.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    config: ScheduleConfig,
    graph: Graph,
}

/// Generates the event timeline of `config` on `graph`.
pub fn build_schedule(config: &ScheduleConfig, graph: &Graph) -> Result<Timeline> {
    config.validate(graph)?;
    Ok(Timeline { config: config.clone(), graph: graph.clone() })
}

impl Timeline {
    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn agent_count(&self) -> usize {
        self.graph.agent_count()
    }

    pub fn horizon(&self) -> u64 {
        self.config.horizon
    }

    pub(crate) fn generator(&self) -> StepGenerator<'_> {
        StepGenerator::new(&self.config, &self.graph)
    }

    /// Materialized steps, in counter order.
    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        let mut generator = self.generator();
        let mut agents = Vec::new();
        let mut sends = Vec::new();
        (0..self.config.horizon).map(move |counter| {
            let tick = generator.advance(&mut agents, &mut sends);
            let completions = agents
                .iter()
                .enumerate()
                .map(|(b, &agent)| Completion {
                    agent,
                    started_at: tick - self.config.clocks[agent].compute_time,
                    sends: sends
                        .iter()
                        .filter(|s| s.batch == b)
                        .map(|s| Send { to: s.to, available_at: s.available_at })
                        .collect(),
                })
                .collect();
            Step { counter, tick, completions }
        })
    }

    /// Counters at which each agent completes.
    pub fn update_sets(&self) -> Vec<Vec<u64>> {
        let mut sets = vec![Vec::new(); self.agent_count()];
        for s in self.steps() {
            for c in &s.completions {
                sets[c.agent].push(s.counter);
            }
        }
        sets
    }
}

/// A surviving message of the current step; `batch` indexes the sender in
/// the step's agent list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PendingSend {
    pub batch: usize,
    pub from: usize,
    pub to: usize,
    pub available_at: u64,
}

/// Streams the steps of a schedule without storing them.
///
/// Random draws happen in a fixed order: by tick, then sender ascending,
/// then receiver ascending; each surviving message draws its delay right
/// after its drop decision.
pub(crate) struct StepGenerator<'a> {
    config: &'a ScheduleConfig,
    graph: &'a Graph,
    rng: ChaCha8Rng,
    next_completion: Vec<u64>,
    links: Vec<Vec<LinkSpec>>,
    drop_streaks: Vec<Vec<u32>>,
}

impl<'a> StepGenerator<'a> {
    fn new(config: &'a ScheduleConfig, graph: &'a Graph) -> Self {
        let n = graph.agent_count();
        Self {
            config,
            graph,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            next_completion: config.clocks.iter().map(AgentClock::first_completion).collect(),
            links: (0..n)
                .map(|i| graph.neighbors(i).iter().map(|&l| config.link(i, l)).collect())
                .collect(),
            drop_streaks: (0..n).map(|i| vec![0; graph.neighbors(i).len()]).collect(),
        }
    }

    /// Tick of the next step.
    pub fn peek_tick(&self) -> u64 {
        self.next_completion.iter().copied().min().expect("at least one agent")
    }

    /// Tick at which `agent` will take its next snapshot.
    pub fn next_start(&self, agent: usize) -> u64 {
        self.next_completion[agent] - self.config.clocks[agent].compute_time
    }

    /// Produces the next step: completing agents (ascending) and surviving
    /// messages. Returns the tick.
    pub fn advance(&mut self, agents: &mut Vec<usize>, sends: &mut Vec<PendingSend>) -> u64 {
        let tick = self.peek_tick();
        agents.clear();
        sends.clear();
        for (i, next) in self.next_completion.iter_mut().enumerate() {
            if *next == tick {
                agents.push(i);
                *next += self.config.clocks[i].update_period;
            }
        }
        for (batch, &i) in agents.iter().enumerate() {
            for (s, &l) in self.graph.neighbors(i).iter().enumerate() {
                if l == i {
                    continue;
                }
                let spec = self.links[i][s];
                let streak = &mut self.drop_streaks[i][s];
                if spec.drop_probability > 0.0
                    && *streak < spec.max_consecutive_drops
                    && self.rng.random_bool(spec.drop_probability)
                {
                    *streak += 1;
                    continue;
                }
                *streak = 0;
                let delay = if spec.delay_max > spec.delay_min {
                    self.rng.random_range(spec.delay_min..=spec.delay_max)
                } else {
                    spec.delay_min
                };
                sends.push(PendingSend { batch, from: i, to: l, available_at: tick + delay.max(1) });
            }
        }
        tick
    }
}
