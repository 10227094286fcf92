//! Metric rows and counters sampled by runs. Serialisation to CSV/JSON lives
//! in the companion crate; the column orders below are the frozen contract.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::heartbeat::RankHealth;
use crate::time::VirtualTime;

/// One row per locally closed heartbeat interval.
/// CSV columns, in exactly this order:
/// virtual time, team, team_rank, tag, interval, smoothed, status.
#[derive(Clone, Debug, PartialEq)]
pub struct HeartbeatRow {
    pub time: VirtualTime,
    pub team: usize,
    pub team_rank: usize,
    pub tag: u32,
    pub interval: VirtualTime,
    pub smoothed: f64,
    /// Self-assessed health of the emitting rank at emission time.
    pub status: RankHealth,
}

/// One row per (step, team), aggregated over the team's ranks.
/// CSV columns, in exactly this order:
/// step, team, computed_count, reused_count, suppressed_shares,
/// db_high_watermark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRow {
    pub step: u64,
    pub team: usize,
    pub computed: u64,
    pub reused: u64,
    pub suppressed_shares: u64,
    /// Max over the team's ranks of the per-rank database high watermark
    /// observed during this step.
    pub db_high_watermark: usize,
}

/// Message accounting per channel class, for conservation and
/// non-interference checks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelCounters {
    pub sent_intra_team: u64,
    pub sent_heartbeat: u64,
    pub sent_task_share: u64,
    pub bytes_intra_team: u64,
    pub bytes_heartbeat: u64,
    pub bytes_task_share: u64,
    pub delivered: u64,
    pub dropped_dead_target: u64,
    pub refused_dead_sender: u64,
    /// IntraTeam sends broken down per team.
    pub intra_team_per_team: Vec<u64>,
}

impl ChannelCounters {
    pub fn sent_total(&self) -> u64 {
        self.sent_intra_team + self.sent_heartbeat + self.sent_task_share
    }
}

/// Per-step task statistics of a single rank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub computed: u64,
    pub reused: u64,
    pub suppressed_shares: u64,
    pub db_high_watermark: usize,
}

/// Everything one rank accumulated over a run.
#[derive(Clone, Debug, Default)]
pub struct RankStats {
    /// Charged compute cost in virtual CPU seconds (jitter not included).
    pub compute_cost: f64,
    /// Virtual time at which the rank's program finished, if it did.
    pub finished_at: Option<VirtualTime>,
    /// Start time of each timestep, in step order.
    pub step_starts: Vec<(u64, VirtualTime)>,
    pub per_step: BTreeMap<u64, StepStats>,
    /// Final output payload per data key (last write wins).
    pub outputs: BTreeMap<u64, Vec<u8>>,
    pub heartbeat_rows: Vec<HeartbeatRow>,
    pub heartbeats_emitted: u64,
    pub shares_sent: u64,
    pub share_recheck_skips: u64,
}
