//! Deterministic discrete-event engine for the partially asynchronous model.
//!
//! Time advances in integer ticks. Agent `i` starts an update at
//! `phase_offset + t·update_period`, snapshots its mailbox, and completes
//! `compute_time` ticks later. Every tick at which at least one agent
//! completes is one value of the global event counter `k`; all completions of
//! that tick form the update set at `k` and read pre-`k` state.
//!
//! A completing agent broadcasts `(y_i, g_{l,i}(x_i))` to each neighbor `l`.
//! A message sent at tick `t` with delay `d` is available from tick
//! `t + max(d, 1)`; it may be dropped, but never more than
//! `max_consecutive_drops` times in a row on one link. A mailbox entry is only
//! replaced by a message with a strictly newer origin counter.
//!
//! The timeline depends on the configuration alone, never on iterate values,
//! so a value-free dry pass yields the exact trace (and the realized
//! asynchrony bound `Q`) before any step size is fixed.
//!
//! Staleness stamps are the freshest valid index: data sent by `j` with
//! origin `c` equals `y_j(t)` for every `t` up to `j`'s next completion, so
//! the stamp is `min(k, first completion counter of j at or after c)`.

mod engine;
mod run;
mod schedule;
mod trace;

pub use run::{dry_run, measure_timeline_q, run_async, run_sync, tail_start, AsyncRun, HistoryEntry, RunDiagnostics, RunOptions, SyncRun};
pub use schedule::{build_schedule, AgentClock, Completion, LinkOverride, LinkSpec, ScheduleConfig, Send, Step, Timeline, MAX_DELAY};
pub use trace::{measure_q, QMeter, Trace, TraceEvent, TraceSink};
