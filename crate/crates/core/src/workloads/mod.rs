//! Built-in applications driving the stack: the ping-pong overhead
//! benchmark, the barrier-synchronised miniapp with single or dual
//! heartbeats, and a synthetic timestep solver with shareable prediction
//! tasks.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::heartbeat::{StatusChange, VoteResult};
use crate::metrics::{ChannelCounters, RankStats};
use crate::netsim::{Simulation, TraceEvent};
use crate::time::VirtualTime;
use crate::topology::RankAddress;

mod miniapp;
mod pingpong;
mod solver;

pub use miniapp::{run_miniapp, HeartbeatMode, MiniappConfig, MiniappReport};
pub use pingpong::{run_pingpong, BandwidthPoint, BandwidthReport, PingPongConfig, TeamBandwidth};
pub use solver::{run_solver, CorruptSpec, SolverConfig, SolverReport};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WorkloadError {
    /// The benchmark requires a specific team size.
    WrongTeamSize { expected: usize, got: usize },
    BadConfig(&'static str),
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::WrongTeamSize { expected, got } => {
                write!(f, "workload needs {expected} ranks per team, got {got}")
            }
            WorkloadError::BadConfig(what) => write!(f, "bad workload config: {what}"),
        }
    }
}

/// Flattened view of one interval series for reporting.
#[derive(Clone, Debug, Default)]
pub struct SeriesSummary {
    pub intervals: Vec<f64>,
    pub smoothed: Option<f64>,
}

impl SeriesSummary {
    pub fn max_interval(&self) -> f64 {
        self.intervals.iter().copied().fold(0.0, f64::max)
    }
}

/// Everything one rank contributes to a report.
#[derive(Clone, Debug)]
pub struct RankView {
    pub addr: RankAddress,
    pub alive: bool,
    pub finished: bool,
    pub stats: RankStats,
    pub status_log: Vec<StatusChange>,
    pub vote_log: Vec<VoteResult>,
    pub protocol_errors: u64,
    pub local_series: BTreeMap<u32, SeriesSummary>,
    /// Keyed by (replica team, tag).
    pub replica_series: BTreeMap<(usize, u32), SeriesSummary>,
    pub db_high_watermark: usize,
    pub db_bytes_high_watermark: usize,
    pub send_window_high_watermark: usize,
    pub send_window_suppressed: u64,
}

/// Common outputs of any run.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub counters: ChannelCounters,
    pub ranks: Vec<RankView>,
    pub trace: Vec<TraceEvent>,
    pub end_time: VirtualTime,
    pub all_finished: bool,
}

fn summarize(series: &crate::heartbeat::IntervalSeries) -> SeriesSummary {
    SeriesSummary {
        intervals: series.intervals().iter().map(|d| d.secs()).collect(),
        smoothed: series.smoothed(),
    }
}

pub(crate) fn collect_artifacts(sim: &Simulation) -> RunArtifacts {
    let world = sim.world();
    let mut ranks = Vec::with_capacity(world.world_size());
    for r in 0..world.world_size() {
        let monitor = sim.monitor(r);
        let mut local_series = BTreeMap::new();
        for tag in monitor.local_keys() {
            local_series.insert(tag, summarize(monitor.local_series(tag).expect("listed key")));
        }
        let mut replica_series = BTreeMap::new();
        for (team, tag) in monitor.replica_keys() {
            replica_series.insert(
                (team, tag),
                summarize(monitor.replica_series(team, tag).expect("listed key")),
            );
        }
        ranks.push(RankView {
            addr: crate::topology::map_world_rank(r, world).expect("in range"),
            alive: sim.is_alive(r),
            finished: sim.is_finished(r),
            stats: sim.rank_stats(r).clone(),
            status_log: monitor.status_log.clone(),
            vote_log: monitor.vote_log.clone(),
            protocol_errors: monitor.protocol_errors,
            local_series,
            replica_series,
            db_high_watermark: sim.db(r).high_watermark(),
            db_bytes_high_watermark: sim.db(r).bytes_high_watermark(),
            send_window_high_watermark: sim.send_window(r).high_watermark(),
            send_window_suppressed: sim.send_window(r).suppressed,
        });
    }
    RunArtifacts {
        counters: sim.counters().clone(),
        ranks,
        trace: sim.trace().to_vec(),
        end_time: sim.now(),
        all_finished: sim.all_finished(),
    }
}
