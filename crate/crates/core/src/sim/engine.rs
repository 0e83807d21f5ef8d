//! Message delivery, mailboxes and staleness stamps, generic over the
//! payload so that the value-free pass and the numeric run share one code
//! path.

use crate::error::Result;
use crate::sim::schedule::{PendingSend, Timeline};
use crate::sim::trace::TraceSink;

/// A mailbox entry: payload plus the counter from which its values are
/// current.
#[derive(Debug, Clone)]
pub(crate) struct Slot<P> {
    pub origin: u64,
    pub payload: P,
}

pub(crate) struct StepInfo<'a> {
    pub counter: u64,
    /// Completing agents, ascending.
    pub agents: &'a [usize],
}

struct Message<P> {
    to: usize,
    slot: usize,
    origin: u64,
    available_at: u64,
    payload: P,
}

/// Replays `timeline`.
///
/// `initial[i][s]` is agent `i`'s mailbox entry for its `s`-th neighbor at
/// origin 0. For every step `on_step` receives the completing agents and the
/// per-agent snapshots (indexed by agent) and pushes one payload per
/// completing agent into `outputs`; that payload is broadcast to all of the
/// agent's neighbors and stored in its own mailbox.
pub(crate) fn replay<P: Clone>(
    timeline: &Timeline,
    initial: Vec<Vec<P>>,
    sink: &mut impl TraceSink,
    mut on_step: impl FnMut(&StepInfo<'_>, &[Vec<Slot<P>>], &mut Vec<P>) -> Result<()>,
) -> Result<()> {
    let graph = timeline.graph();
    let config = timeline.config();
    let n = graph.agent_count();
    let mut generator = timeline.generator();

    let mut mailboxes: Vec<Vec<Slot<P>>> = initial
        .into_iter()
        .map(|row| row.into_iter().map(|payload| Slot { origin: 0, payload }).collect())
        .collect();
    let mut snapshots: Vec<Vec<Slot<P>>> = vec![Vec::new(); n];
    let mut snapped = vec![false; n];
    // receiver slot of `from` in `to`'s list, per sender slot
    let reverse: Vec<Vec<usize>> = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&l| graph.slot(l, i).expect("symmetric graph")).collect())
        .collect();
    let self_slot: Vec<usize> = (0..n).map(|i| graph.slot(i, i).expect("self-loop")).collect();

    // calendar queue: a message for tick t sits in bucket t mod ring
    let ring = config.max_delay() as usize + 2;
    let mut buckets: Vec<Vec<Message<P>>> = (0..ring).map(|_| Vec::new()).collect();
    let mut delivered = 0u64;
    let deliver = |upto: u64, delivered: &mut u64, buckets: &mut Vec<Vec<Message<P>>>, mailboxes: &mut Vec<Vec<Slot<P>>>| {
        if upto <= *delivered {
            return;
        }
        let from = (*delivered + 1).max(upto.saturating_sub(ring as u64 - 1));
        for t in from..=upto {
            for m in buckets[(t % ring as u64) as usize].drain(..) {
                debug_assert!(m.available_at <= upto);
                let cell = &mut mailboxes[m.to][m.slot];
                if m.origin > cell.origin {
                    *cell = Slot { origin: m.origin, payload: m.payload };
                }
            }
        }
        *delivered = upto;
    };

    let mut step_ticks: Vec<u64> = Vec::with_capacity(config.horizon as usize);
    let mut agents = Vec::with_capacity(n);
    let mut sends: Vec<PendingSend> = Vec::new();
    let mut outputs: Vec<P> = Vec::with_capacity(n);
    let mut stamps: Vec<u64> = Vec::new();
    let mut starts: Vec<(u64, usize)> = Vec::with_capacity(n);

    for counter in 0..config.horizon {
        let tick = generator.peek_tick();
        // snapshots in start order, each after the deliveries due by then
        starts.clear();
        starts.extend((0..n).filter(|&i| !snapped[i]).map(|i| (generator.next_start(i), i)).filter(|&(s, _)| s <= tick));
        starts.sort_unstable();
        for &(start, i) in &starts {
            deliver(start, &mut delivered, &mut buckets, &mut mailboxes);
            snapshots[i].clone_from(&mailboxes[i]);
            snapped[i] = true;
        }
        deliver(tick, &mut delivered, &mut buckets, &mut mailboxes);
        generator.advance(&mut agents, &mut sends);
        step_ticks.push(tick);
        sink.begin_step(tick);

        for &i in &agents {
            stamps.clear();
            for (s, &j) in graph.neighbors(i).iter().enumerate() {
                // values sent with origin c stay current until j's next completion
                let c = snapshots[i][s].origin as usize;
                let next = config.clocks[j].next_completion_at_or_after(step_ticks[c]);
                let tau = if next >= tick {
                    counter
                } else {
                    step_ticks.binary_search(&next).expect("completion tick is a step tick") as u64
                };
                stamps.push(tau);
            }
            sink.record(i, &stamps)?;
        }

        outputs.clear();
        on_step(&StepInfo { counter, agents: &agents }, &snapshots, &mut outputs)?;
        debug_assert_eq!(outputs.len(), agents.len());

        let origin = counter + 1;
        for (b, &i) in agents.iter().enumerate() {
            mailboxes[i][self_slot[i]] = Slot { origin, payload: outputs[b].clone() };
            snapped[i] = false;
        }
        for s in &sends {
            let sender_slot = graph.slot(s.from, s.to).expect("send along an edge");
            buckets[(s.available_at % ring as u64) as usize].push(Message {
                to: s.to,
                slot: reverse[s.from][sender_slot],
                origin,
                available_at: s.available_at,
                payload: outputs[s.batch].clone(),
            });
        }
    }
    Ok(())
}
