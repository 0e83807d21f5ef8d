//! Numeric runs: the asynchronous algorithm along a timeline and the
//! synchronous baseline.

use std::rc::Rc;

use nalgebra::DVector;

use crate::agents::{initial_states, outgoing_payloads, step_size, sync_iteration, update_from_parts};
use crate::constants::ConstantsTable;
use crate::error::{Error, Result};
use crate::harness::record::{MetricsRow, RunMeta, RunRecord};
use crate::problem::{dual_value, primal_response, DualPoint, Problem};
use crate::sim::engine::replay;
use crate::sim::schedule::Timeline;
use crate::sim::trace::{QMeter, Trace};

/// Value-free pass over the timeline producing the full trace.
pub fn dry_run(timeline: &Timeline) -> Result<Trace> {
    let mut trace = Trace::new(timeline.graph().clone());
    replay(timeline, unit_mailboxes(timeline), &mut trace, |info, _, out| {
        out.resize(info.agents.len(), ());
        Ok(())
    })?;
    Ok(trace)
}

/// Realized `Q` of the timeline, computed without storing the trace.
pub fn measure_timeline_q(timeline: &Timeline) -> Result<u64> {
    let mut meter = QMeter::new(timeline.agent_count());
    replay(timeline, unit_mailboxes(timeline), &mut meter, |info, _, out| {
        out.resize(info.agents.len(), ());
        Ok(())
    })?;
    meter.finish()
}

fn unit_mailboxes(timeline: &Timeline) -> Vec<Vec<()>> {
    let g = timeline.graph();
    (0..g.agent_count()).map(|i| vec![(); g.neighbors(i).len()]).collect()
}

/// Options for the numeric runs.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reference primal solution for the distance column.
    pub reference: Option<Vec<DVector<f64>>>,
    /// Record a metrics row every this many counters (0 or 1: every counter).
    /// The final counter is always recorded.
    pub record_every: u64,
    /// Keep `(k, x(k), y(k))` every this many counters (0: never).
    pub history_every: u64,
    /// Evaluate `q(y(k))` after every counter, not only on recorded rows.
    pub monitor_dual: bool,
    pub seed: u64,
}

/// Quantities observed at every counter, recorded or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    /// Minimum over active steps of `⟨s_i, stale gradient⟩ − ‖s_i‖²`.
    pub descent_min_slack: f64,
    pub active_steps: u64,
    /// Whether every multiplier stayed in `Ω` after every update.
    pub dual_feasible: bool,
    /// Largest `‖s(k)‖` over the final hundredth of the horizon.
    pub tail_residual_max: f64,
    /// Smallest `q(y(k)) − q(y(0))` seen; only with `monitor_dual`.
    pub min_dual_change: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        Self {
            descent_min_slack: f64::INFINITY,
            active_steps: 0,
            dual_feasible: true,
            tail_residual_max: 0.0,
            min_dual_change: f64::INFINITY,
        }
    }
}

pub type HistoryEntry = (u64, Vec<DVector<f64>>, DualPoint);

#[derive(Debug, Clone)]
pub struct AsyncRun {
    pub trace: Trace,
    pub history: Vec<HistoryEntry>,
    pub record: RunRecord,
    pub diagnostics: RunDiagnostics,
    pub final_x: Vec<DVector<f64>>,
    pub final_y: DualPoint,
}

fn metrics(
    problem: &Problem,
    reference: Option<&[DVector<f64>]>,
    k: u64,
    updates: u64,
    x: &[DVector<f64>],
    y: &DualPoint,
    residual: f64,
) -> Result<MetricsRow> {
    let dist = reference.map_or(f64::NAN, |r| {
        x.iter().zip(r).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
    });
    Ok(MetricsRow {
        k,
        avg_updates: updates as f64 / problem.agent_count() as f64,
        dist,
        dual: dual_value(problem, y)?,
        feas: problem.feasibility_residual(x),
        residual,
    })
}

fn should_record(k: u64, every: u64, horizon: u64) -> bool {
    every <= 1 || k % every == 0 || k == horizon
}

/// First counter of the final hundredth of `horizon`.
pub fn tail_start(horizon: u64) -> u64 {
    horizon - horizon.div_ceil(100)
}

/// What an agent broadcasts after an update: its multiplier and the block
/// `g_{l,i}(x_i)` for every `l ∈ N_i` (by slot).
struct Output {
    y: DVector<f64>,
    blocks: Vec<DVector<f64>>,
}

fn output(problem: &Problem, i: usize, x: &DVector<f64>, y: DVector<f64>) -> Rc<Output> {
    Rc::new(Output { y, blocks: outgoing_payloads(problem, i, x).into_iter().map(|(_, g)| g).collect() })
}

/// Executes the asynchronous algorithm along `timeline`.
///
/// Starts from `y = 0` and `x_i = argmin f_i`; every mailbox initially holds
/// the exact data of counter 0.
pub fn run_async(problem: &Problem, constants: &ConstantsTable, timeline: &Timeline, options: &RunOptions) -> Result<AsyncRun> {
    let n = problem.agent_count();
    if timeline.graph() != problem.graph() {
        return Err(Error::InvalidSchedule(format!(
            "timeline has {} agents on a different graph than the problem ({n} agents)",
            timeline.agent_count()
        )));
    }
    let gammas = (0..n).map(|i| step_size(constants, i)).collect::<Result<Vec<_>>>()?;
    let graph = problem.graph();
    let horizon = timeline.horizon();
    let reference = options.reference.as_deref();

    let states = initial_states(problem)?;
    let mut x: Vec<DVector<f64>> = states.into_iter().map(|s| s.x).collect();
    let mut y = DualPoint::zeros(problem);
    let outputs0: Vec<Rc<Output>> = (0..n).map(|i| output(problem, i, &x[i], y.blocks[i].clone())).collect();
    let initial_mailboxes = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&j| outputs0[j].clone()).collect())
        .collect();
    // slot of `i` in the list of its `s`-th neighbor
    let reverse: Vec<Vec<usize>> = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&j| graph.slot(j, i).expect("symmetric graph")).collect())
        .collect();

    let mut trace = Trace::new(graph.clone());
    let mut diagnostics = RunDiagnostics::default();
    let mut updates = 0u64;
    let initial = metrics(problem, reference, 0, 0, &x, &y, 0.0)?;
    let mut rows = Vec::new();
    let mut history = Vec::new();
    if options.history_every > 0 {
        history.push((0, x.clone(), y.clone()));
    }
    let tail = tail_start(horizon);
    let mut staged: Vec<(usize, DVector<f64>, DVector<f64>)> = Vec::with_capacity(n);

    replay(timeline, initial_mailboxes, &mut trace, |info, snapshots, out| {
        staged.clear();
        let mut s_norm_sq = 0.0;
        for &i in info.agents {
            let snap = &snapshots[i];
            let mut stale = DVector::zeros(problem.m(i));
            for (s, slot) in snap.iter().enumerate() {
                stale += &slot.payload.blocks[reverse[i][s]];
            }
            let gamma = gammas[i];
            let (x_next, y_next) = update_from_parts(problem, i, gamma, &y.blocks[i], &stale, |s| &snap[s].payload.y)?;
            let s_i = (&y_next - &y.blocks[i]) / gamma;
            diagnostics.descent_min_slack = diagnostics.descent_min_slack.min(s_i.dot(&stale) - s_i.norm_squared());
            diagnostics.active_steps += 1;
            s_norm_sq += s_i.norm_squared();
            staged.push((i, x_next, y_next));
        }
        // simultaneous: every read above precedes every write below
        for (i, x_next, y_next) in staged.drain(..) {
            if y_next.rows(0, problem.p(i)).iter().any(|&v| v < 0.0) {
                diagnostics.dual_feasible = false;
            }
            out.push(output(problem, i, &x_next, y_next.clone()));
            x[i] = x_next;
            y.blocks[i] = y_next;
            updates += 1;
        }
        let residual = s_norm_sq.sqrt();
        if info.counter >= tail {
            diagnostics.tail_residual_max = diagnostics.tail_residual_max.max(residual);
        }
        let done = info.counter + 1;
        if options.monitor_dual {
            diagnostics.min_dual_change = diagnostics.min_dual_change.min(dual_value(problem, &y)? - initial.dual);
        }
        if should_record(done, options.record_every, horizon) {
            rows.push(metrics(problem, reference, done, updates, &x, &y, residual)?);
        }
        if options.history_every > 0 && (done % options.history_every == 0 || done == horizon) {
            history.push((done, x.clone(), y.clone()));
        }
        Ok(())
    })?;

    let record = RunRecord {
        meta: RunMeta {
            mode: "async".into(),
            q: constants.q.unwrap_or(0),
            seed: options.seed,
            gamma_scale: constants.scale,
            gamma_safety: constants.safety,
            admissible: constants.admissible,
            horizon,
            agent_count: n,
        },
        initial,
        rows,
    };
    Ok(AsyncRun { trace, history, record, diagnostics, final_x: x, final_y: y })
}

/// Result of the synchronous baseline.
#[derive(Debug, Clone)]
pub struct SyncRun {
    pub record: RunRecord,
    pub diagnostics: RunDiagnostics,
    pub final_x: Vec<DVector<f64>>,
    pub final_y: DualPoint,
}

/// Runs the synchronous distributed iteration for `horizon` steps with a
/// common step; every step counts as one update per agent.
pub fn run_sync(problem: &Problem, gamma: f64, horizon: u64, options: &RunOptions) -> Result<SyncRun> {
    let reference = options.reference.as_deref();
    let mut y = DualPoint::zeros(problem);
    let mut x = primal_response(problem, &y)?;
    let initial = metrics(problem, reference, 0, 0, &x, &y, 0.0)?;
    let n = problem.agent_count() as u64;
    let tail = tail_start(horizon);
    let mut diagnostics = RunDiagnostics::default();
    let mut rows = Vec::new();
    for k in 1..=horizon {
        let (x_next, y_next) = sync_iteration(problem, gamma, &y)?;
        let residual = (y_next.stacked() - y.stacked()).norm() / gamma;
        x = x_next;
        y = y_next;
        diagnostics.active_steps += n;
        if k - 1 >= tail {
            diagnostics.tail_residual_max = diagnostics.tail_residual_max.max(residual);
        }
        if options.monitor_dual {
            diagnostics.min_dual_change = diagnostics.min_dual_change.min(dual_value(problem, &y)? - initial.dual);
        }
        if should_record(k, options.record_every, horizon) {
            rows.push(metrics(problem, reference, k, k * n, &x, &y, residual)?);
        }
    }
    Ok(SyncRun {
        record: RunRecord {
            meta: RunMeta {
                mode: "sync".into(),
                q: 1,
                seed: options.seed,
                gamma_scale: 1.0,
                gamma_safety: f64::NAN,
                admissible: true,
                horizon,
                agent_count: problem.agent_count(),
            },
            initial,
            rows,
        },
        diagnostics,
        final_x: x,
        final_y: y,
    })
}
