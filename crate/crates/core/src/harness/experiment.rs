//! Schedule presets, experiment sweeps and table output.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constants::{choose_gammas, constants_for, ConstantsTable, PhiDenominator, DEFAULT_SAFETY};
use crate::error::{Error, Result};
use crate::harness::record::RunRecord;
use crate::oracle::ReferenceSolution;
use crate::problem::{Graph, Problem};
use crate::sim::{
    build_schedule, dry_run, measure_timeline_q, run_async, run_sync, AgentClock, LinkSpec, RunDiagnostics, RunOptions,
    ScheduleConfig, Timeline, Trace,
};

/// A schedule together with its realized bound.
#[derive(Debug, Clone)]
pub struct PresetSchedule {
    pub config: ScheduleConfig,
    pub timeline: Timeline,
    pub realized_q: u64,
}

impl PresetSchedule {
    /// Full event log of the schedule.
    pub fn trace(&self) -> Result<Trace> {
        dry_run(&self.timeline)
    }
}

fn realize(config: ScheduleConfig, graph: &Graph) -> Result<PresetSchedule> {
    let timeline = build_schedule(&config, graph)?;
    // an empty run constrains nothing
    let realized_q = if config.horizon == 0 { 1 } else { measure_timeline_q(&timeline)? };
    Ok(PresetSchedule { config, timeline, realized_q })
}

/// Heuristic schedule whose realized `Q` is at most `target`.
///
/// `target = 1` is the fully synchronous schedule. Otherwise every agent
/// updates every one or two ticks, messages take up to `D` ticks and may be
/// dropped a few times in a row; `D` is the largest value found by bisection
/// whose realized bound fits. Agents keep updating often,
/// so the asynchrony comes mostly from stale messages.
pub fn preset_schedule(graph: &Graph, target: u64, seed: u64, horizon: u64) -> Result<PresetSchedule> {
    if target < 1 {
        return Err(Error::InvalidQ);
    }
    let n = graph.agent_count();
    let synchronous = || realize(ScheduleConfig { rng_seed: seed, ..ScheduleConfig::synchronous(n, horizon) }, graph);
    if target == 1 {
        return synchronous();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c10c);
    let clocks: Vec<AgentClock> = (0..n)
        .map(|_| {
            let update_period = rng.random_range(1..=2u64);
            AgentClock {
                update_period,
                phase_offset: rng.random_range(0..update_period),
                compute_time: rng.random_range(0..update_period),
            }
        })
        .collect();
    let (drop_probability, max_consecutive_drops) = if target >= 8 { (0.05, 2) } else { (0.0, 0) };
    let with_delay = |delay_max: u64, horizon: u64| {
        let config = ScheduleConfig {
            clocks: clocks.clone(),
            default_link: LinkSpec { delay_min: 0, delay_max, drop_probability, max_consecutive_drops },
            links: Vec::new(),
            rng_seed: seed,
            horizon,
        };
        realize(config, graph)
    };
    // bisect on a prefix, which is cheap and rarely shows a smaller bound
    let prefix = horizon.min(PRESET_SEARCH_PREFIX);
    if with_delay(0, prefix)?.realized_q > target {
        // periods and compute times alone exceed the target
        return synchronous();
    }
    // invariant: delay `lo` fits on the prefix, delay `hi` does not
    let (mut lo, mut hi) = (0u64, PRESET_MAX_DELAY_FACTOR * target + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if with_delay(mid, prefix)?.realized_q <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut delay = lo;
    loop {
        let preset = with_delay(delay, horizon)?;
        if preset.realized_q <= target {
            return Ok(preset);
        }
        if delay == 0 {
            return synchronous();
        }
        delay -= (delay / 10).max(1);
    }
}

/// Counters replayed per bisection probe in [`preset_schedule`].
const PRESET_SEARCH_PREFIX: u64 = 20_000;
/// Delays are searched in `[0, factor · target]`: the freshest of many
/// in-flight messages is usually much younger than the largest delay.
const PRESET_MAX_DELAY_FACTOR: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sync,
    Async,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" => Ok(Self::Sync),
            "async" => Ok(Self::Async),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?} (expected sync or async)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Ignored in synchronous mode.
    pub q_targets: Vec<u64>,
    pub safety: f64,
    pub scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    pub record_every: u64,
    pub phi_denominator: PhiDenominator,
    /// Track `min_k q(y(k)) − q(y(0))` at every counter (one dual
    /// evaluation per counter).
    pub monitor_dual: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Async,
            q_targets: vec![1, 25, 50, 100],
            safety: DEFAULT_SAFETY,
            scales: vec![1.0],
            seeds: vec![0],
            horizon: 200_000,
            record_every: 100,
            phi_denominator: PhiDenominator::Owner,
            monitor_dual: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: Mode,
    pub q_target: u64,
    pub realized_q: u64,
    pub scale: f64,
    pub seed: u64,
    pub admissible: bool,
    pub record: RunRecord,
    pub diagnostics: RunDiagnostics,
}

impl Scenario {
    pub fn final_dist(&self) -> f64 {
        self.record.last().dist
    }

    /// Final distance relative to the initial one.
    pub fn relative_dist(&self) -> f64 {
        self.final_dist() / self.record.initial.dist
    }

    pub fn label(&self) -> String {
        match self.mode {
            Mode::Sync => format!("sync_scale{}_seed{}", self.scale, self.seed),
            Mode::Async => format!("async_Q{}_scale{}_seed{}", self.q_target, self.scale, self.seed),
        }
    }
}

/// Synchronous step `safety / max_i φ_i`.
pub fn sync_step(table: &ConstantsTable, safety: f64) -> f64 {
    let phi = table.agents.iter().map(|a| a.phi).fold(0.0, f64::max);
    if phi > 0.0 { safety / phi } else { safety }
}

/// One asynchronous run on a preset schedule; `config.mode` and the grids
/// in `config` are ignored.
pub fn run_async_scenario(
    problem: &Problem,
    reference: &ReferenceSolution,
    table: &ConstantsTable,
    config: &ExperimentConfig,
    q_target: u64,
    scale: f64,
    seed: u64,
) -> Result<Scenario> {
    let preset = preset_schedule(problem.graph(), q_target, seed, config.horizon)?;
    let gammas = choose_gammas(table, preset.realized_q, config.safety, scale)?;
    let options = RunOptions {
        reference: Some(reference.x_star.clone()),
        record_every: config.record_every,
        monitor_dual: config.monitor_dual,
        seed,
        ..RunOptions::default()
    };
    let run = run_async(problem, &gammas, &preset.timeline, &options)?;
    Ok(Scenario {
        mode: Mode::Async,
        q_target,
        realized_q: preset.realized_q,
        scale,
        seed,
        admissible: gammas.admissible,
        record: run.record,
        diagnostics: run.diagnostics,
    })
}

/// Runs the `(Q, scale, seed)` grid in parallel; results keep grid order.
pub fn run_experiment(problem: &Problem, reference: &ReferenceSolution, config: &ExperimentConfig) -> Result<Vec<Scenario>> {
    let table = constants_for(problem, config.phi_denominator)?;
    match config.mode {
        Mode::Sync => {
            let grid: Vec<(f64, u64)> = config
                .scales
                .iter()
                .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
                .collect();
            grid.into_par_iter()
                .map(|(scale, seed)| {
                    let gamma = scale * sync_step(&table, config.safety);
                    let options = RunOptions {
                        reference: Some(reference.x_star.clone()),
                        record_every: config.record_every,
                        monitor_dual: config.monitor_dual,
                        seed,
                        ..RunOptions::default()
                    };
                    let mut run = run_sync(problem, gamma, config.horizon, &options)?;
                    run.record.meta.gamma_scale = scale;
                    run.record.meta.gamma_safety = config.safety;
                    run.record.meta.admissible = scale * config.safety < 1.0;
                    Ok(Scenario {
                        mode: Mode::Sync,
                        q_target: 1,
                        realized_q: 1,
                        scale,
                        seed,
                        admissible: run.record.meta.admissible,
                        record: run.record,
                        diagnostics: run.diagnostics,
                    })
                })
                .collect()
        }
        Mode::Async => {
            let grid: Vec<(u64, f64, u64)> = config
                .q_targets
                .iter()
                .flat_map(|&q| {
                    config
                        .scales
                        .iter()
                        .flat_map(move |&s| config.seeds.iter().map(move |&seed| (q, s, seed)))
                })
                .collect();
            grid.into_par_iter()
                .map(|(q, scale, seed)| {
                    run_async_scenario(problem, reference, &table, config, q, scale, seed)
                })
                .collect()
        }
    }
}

/// One line per scenario with the final distance to the optimum.
pub fn summary(scenarios: &[Scenario]) -> String {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&format!(
            "{:<32} Q={:<4} admissible={:<5} final_dist={:.3e} relative={:.3e}\n",
            s.label(),
            s.realized_q,
            s.admissible,
            s.final_dist(),
            s.relative_dist()
        ));
    }
    out
}

/// Per-agent constants as CSV: `agent,theta_i,phi_i,ell_i,xi_i,gamma_max,gamma`.
pub fn write_constants_csv(table: &ConstantsTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "agent,theta_i,phi_i,ell_i,xi_i,gamma_max,gamma")?;
    for (i, a) in table.agents.iter().enumerate() {
        let gmax = table.gamma_max.get(i).copied().unwrap_or(f64::NAN);
        let g = table.gamma.get(i).copied().unwrap_or(f64::NAN);
        writeln!(out, "{i},{:e},{:e},{:e},{:e},{:e},{:e}", a.theta, a.phi, a.ell, a.xi, gmax, g)?;
    }
    Ok(())
}
