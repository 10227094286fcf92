//! Fault-injection plans: selection x frequency sleep grids, escalating
//! delays and uniform startup delays.
//!
//! Plans are pure functions of (policies, seed) and produce ordinary
//! [`FaultEvent`] lists for [`crate::netsim::Simulation::inject_plan`]. A
//! "sleep" is modeled as a Pause - what matters for detection is the slowdown
//! of progress, not how it is produced.

use alloc::vec::Vec;

use crate::netsim::{FaultEvent, FaultKind};
use crate::rng::SplitMix64;
use crate::time::VirtualTime;
use crate::topology::{RankAddress, WorldConfig};

/// Which rank receives each injection.
#[derive(Clone, Debug)]
pub enum SelectionPolicy {
    /// The same rank every time.
    Constant(RankAddress),
    /// Each candidate in turn, cyclically.
    RoundRobin(Vec<RankAddress>),
    /// A seeded uniform pick per injection.
    Random(Vec<RankAddress>),
}

impl SelectionPolicy {
    /// Candidates with a fixed team rank across all teams (the solver-style
    /// grid varies the team, not the rank).
    pub fn candidates_across_teams(team_rank: usize, cfg: WorldConfig) -> Vec<RankAddress> {
        (0..cfg.num_teams())
            .map(|t| RankAddress::from_parts(t, team_rank, cfg).expect("team in range"))
            .collect()
    }

    fn pick(&self, index: usize, rng: &mut SplitMix64) -> RankAddress {
        match self {
            SelectionPolicy::Constant(a) => *a,
            SelectionPolicy::RoundRobin(c) => c[index % c.len()],
            SelectionPolicy::Random(c) => c[rng.below(c.len())],
        }
    }
}

/// Time between consecutive injections.
#[derive(Clone, Debug)]
pub enum FrequencyPolicy {
    /// Fixed gap.
    Constant(VirtualTime),
    /// Start at `initial` and shrink by `factor` each time. The sequence
    /// stops once the gap falls below `min_interval`, otherwise it would
    /// accumulate to a finite limit and never leave the window.
    Decreasing {
        initial: VirtualTime,
        factor: f64,
        min_interval: VirtualTime,
    },
    /// Seeded uniform gap in [lo, hi].
    Random { lo: VirtualTime, hi: VirtualTime },
}

impl FrequencyPolicy {
    /// Decreasing policy with the default cutoff of initial/32.
    pub fn decreasing(initial: VirtualTime, factor: f64) -> Self {
        debug_assert!(factor > 0.0 && factor < 1.0);
        FrequencyPolicy::Decreasing {
            initial,
            factor,
            min_interval: initial * (1.0 / 32.0),
        }
    }

    fn interval(&self, index: usize, rng: &mut SplitMix64) -> Option<VirtualTime> {
        match self {
            FrequencyPolicy::Constant(dt) => Some(*dt),
            FrequencyPolicy::Decreasing {
                initial,
                factor,
                min_interval,
            } => {
                let mut dt = *initial;
                for _ in 0..index {
                    dt = dt * *factor;
                }
                if dt.secs() < min_interval.secs() {
                    None
                } else {
                    Some(dt)
                }
            }
            FrequencyPolicy::Random { lo, hi } => {
                Some(VirtualTime::from_secs(rng.uniform(lo.secs(), hi.secs())))
            }
        }
    }
}

/// Deterministic pause plan: targets chosen by `sel`, times generated by
/// `freq`, all pauses `pause` long, confined to `window` (inclusive bounds).
pub fn schedule_injections(
    sel: &SelectionPolicy,
    freq: &FrequencyPolicy,
    pause: VirtualTime,
    window: (VirtualTime, VirtualTime),
    seed: u64,
) -> Vec<FaultEvent> {
    let (t0, t1) = window;
    let mut out = Vec::new();
    if t1.secs() < t0.secs() {
        return out;
    }
    let mut rng = SplitMix64::for_stream(seed, 0, 0x4641554c54); // "FAULT"
    let mut t = t0;
    let mut index = 0;
    loop {
        let Some(gap) = freq.interval(index, &mut rng) else {
            break;
        };
        t += gap;
        if t.secs() > t1.secs() {
            break;
        }
        let target = sel.pick(index, &mut rng);
        out.push(FaultEvent {
            kind: FaultKind::Pause(pause),
            target,
            at: t,
        });
        index += 1;
    }
    out
}

/// A failing node announcing itself: pauses whose durations grow by a fixed
/// increment, fired at the workload's heartbeat cadence.
#[derive(Clone, Debug)]
pub struct EscalatingDelayPlan {
    pub start_time: VirtualTime,
    pub initial_pause: VirtualTime,
    pub increment: VirtualTime,
    /// Gap between consecutive pauses (the heartbeat cadence).
    pub spacing: VirtualTime,
    pub target: RankAddress,
}

pub fn escalating_delay_plan(p: &EscalatingDelayPlan, run_end: VirtualTime) -> Vec<FaultEvent> {
    let mut out = Vec::new();
    let mut t = p.start_time;
    let mut k = 0u32;
    while t.secs() <= run_end.secs() {
        let duration = p.initial_pause + p.increment * k as f64;
        out.push(FaultEvent {
            kind: FaultKind::Pause(duration),
            target: p.target,
            at: t,
        });
        t += p.spacing;
        k += 1;
    }
    out
}

/// Delay the startup of one rank (team rank 0) of the given team by a seeded
/// uniform duration in [lo, hi].
pub fn startup_delay(
    team: usize,
    lo: VirtualTime,
    hi: VirtualTime,
    seed: u64,
    cfg: WorldConfig,
) -> FaultEvent {
    debug_assert!(lo.secs() <= hi.secs());
    let mut rng = SplitMix64::for_stream(seed, team as u64, 0x53544152545550); // "STARTUP"
    let duration = VirtualTime::from_secs(rng.uniform(lo.secs(), hi.secs()));
    FaultEvent {
        kind: FaultKind::Pause(duration),
        target: RankAddress::from_parts(team, 0, cfg).expect("team in range"),
        at: VirtualTime::ZERO,
    }
}
