//! Heartbeats: emission bookkeeping, in-between-time series, divergence,
//! slow/failed classification and hash-based consistency voting.
//!
//! Heartbeats are fire-and-forget inter-replica messages carrying a timestamp
//! and optionally a 64-bit hash of user-supplied consistency data. Detection
//! compares *in-between times*, never absolute clocks: a rank judges a
//! replica by folding the replica's emission timestamps into interval series
//! and comparing smoothed values against its own.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::time::VirtualTime;
use crate::topology::RankAddress;

/// FNV-1a 64-bit offset basis; also the hash of the empty byte sequence.
pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a canonical little-endian byte serialisation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One heartbeat emission as it travels between replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct HeartbeatRecord {
    /// Positive opens section |tag|, negative closes it, zero is
    /// single-heartbeat mode (close-and-open in one call).
    pub tag: i64,
    pub emit_time: VirtualTime,
    pub consistency_hash: Option<u64>,
    pub sender: RankAddress,
    /// Monotone per (sender, |tag|).
    pub seq: u64,
    /// Completion announcement: the sender's program ended normally. Carries
    /// no interval data and exempts the sender from the silence timeout.
    pub finalize: bool,
}

impl HeartbeatRecord {
    /// Simulated wire footprint: timestamp + seq, plus the hash if present.
    pub fn size_bytes(&self) -> u64 {
        if self.consistency_hash.is_some() {
            24
        } else {
            16
        }
    }
}

/// Health of a rank as judged from interval data. `Failed` is absorbing
/// within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RankHealth {
    Healthy,
    Slow,
    Failed,
}

impl fmt::Display for RankHealth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankHealth::Healthy => write!(f, "healthy"),
            RankHealth::Slow => write!(f, "slow"),
            RankHealth::Failed => write!(f, "failed"),
        }
    }
}

/// Knobs for the interval comparison. The smoothing/threshold constants are
/// deliberately configurable; the defaults are working values, not gospel.
#[derive(Clone, Copy, Debug)]
pub struct ClassifyParams {
    /// Exponential smoothing weight for new intervals.
    pub alpha: f64,
    /// Replica is Slow when its smoothed interval exceeds tol x ours.
    pub tol: f64,
    /// Replica is Failed when silent for timeout_mult x dt_hb.
    pub timeout_mult: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            alpha: 0.3,
            tol: 1.5,
            timeout_mult: 3.0,
        }
    }
}

/// Ordered in-between times for one (peer, |tag|) plus their exponentially
/// smoothed value: s <- alpha*dt + (1-alpha)*s.
#[derive(Clone, Debug, Default)]
pub struct IntervalSeries {
    intervals: Vec<VirtualTime>,
    smoothed: Option<f64>,
}

impl IntervalSeries {
    pub fn push(&mut self, dt: VirtualTime, alpha: f64) {
        debug_assert!(dt.secs() > 0.0, "in-between times are positive");
        self.smoothed = Some(match self.smoothed {
            None => dt.secs(),
            Some(s) => alpha * dt.secs() + (1.0 - alpha) * s,
        });
        self.intervals.push(dt);
    }

    pub fn smoothed(&self) -> Option<f64> {
        self.smoothed
    }

    pub fn intervals(&self) -> &[VirtualTime] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn max_interval(&self) -> Option<VirtualTime> {
        self.intervals
            .iter()
            .copied()
            .max_by(VirtualTime::total_cmp)
    }
}

/// Turns a stream of (tag, time) heartbeat events into closed intervals.
///
/// Used identically on the emitting side (local series) and on the observer
/// side (fold of received records).
#[derive(Clone, Debug, Default)]
pub struct SectionTracker {
    open_time: Option<VirtualTime>,
    last_single: Option<VirtualTime>,
    pub series: IntervalSeries,
}

impl SectionTracker {
    /// Feed one event; returns the interval it closed, if any.
    /// Closing a section that was never opened is a protocol error and
    /// returns `Err(())`; the caller surfaces it in metrics and carries on.
    pub fn feed(&mut self, tag: i64, now: VirtualTime, alpha: f64) -> Result<Option<VirtualTime>, ()> {
        if tag > 0 {
            self.open_time = Some(now);
            Ok(None)
        } else if tag < 0 {
            match self.open_time.take() {
                Some(open) => {
                    let dt = now - open;
                    if dt.secs() > 0.0 {
                        self.series.push(dt, alpha);
                        Ok(Some(dt))
                    } else {
                        Ok(None)
                    }
                }
                None => Err(()),
            }
        } else {
            let closed = match self.last_single {
                Some(prev) => {
                    let dt = now - prev;
                    if dt.secs() > 0.0 {
                        self.series.push(dt, alpha);
                        Some(dt)
                    } else {
                        None
                    }
                }
                None => None,
            };
            self.last_single = Some(now);
            Ok(closed)
        }
    }
}

/// Relative classification of one replica against the local series.
///
/// Only interval data and the time since the replica was last heard enter the
/// verdict; absolute clock offsets between teams are irrelevant.
pub fn classify(
    local: &IntervalSeries,
    replica: &IntervalSeries,
    now: VirtualTime,
    last_heard: Option<VirtualTime>,
    dt_hb: Option<VirtualTime>,
    params: &ClassifyParams,
) -> RankHealth {
    if let (Some(dt), Some(heard)) = (dt_hb, last_heard) {
        if (now - heard).secs() > params.timeout_mult * dt.secs() {
            return RankHealth::Failed;
        }
    }
    if let (Some(local_s), Some(replica_s)) = (local.smoothed(), replica.smoothed()) {
        if replica_s > params.tol * local_s {
            return RankHealth::Slow;
        }
    }
    RankHealth::Healthy
}

/// Gap between the start times of the same timestep on two teams.
pub fn divergence(t_a: VirtualTime, t_b: VirtualTime) -> VirtualTime {
    t_a.abs_diff(t_b)
}

/// Outcome of a hash comparison across all teams for one checkpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsistencyVerdict {
    Consistent,
    /// Two teams disagree; with K=2 there is no way to tell which is wrong.
    DetectedUnknownTeam,
    /// A strict majority agrees; the listed teams deviate from it.
    Faulty { teams: Vec<usize> },
    /// Mismatch without a strict majority.
    Unresolvable,
}

/// Majority vote over per-team hashes of the same checkpoint. `hashes` must
/// hold one entry per team.
pub fn vote(num_teams: usize, hashes: &BTreeMap<usize, u64>) -> ConsistencyVerdict {
    debug_assert_eq!(hashes.len(), num_teams);
    let first = *hashes.values().next().expect("at least one team");
    if hashes.values().all(|&h| h == first) {
        return ConsistencyVerdict::Consistent;
    }
    if num_teams == 2 {
        return ConsistencyVerdict::DetectedUnknownTeam;
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &h in hashes.values() {
        *counts.entry(h).or_default() += 1;
    }
    let (&majority_hash, &count) = counts
        .iter()
        .max_by_key(|(_, &c)| c)
        .expect("nonempty counts");
    if count * 2 > num_teams {
        let teams = hashes
            .iter()
            .filter(|(_, &h)| h != majority_hash)
            .map(|(&t, _)| t)
            .collect();
        ConsistencyVerdict::Faulty { teams }
    } else {
        ConsistencyVerdict::Unresolvable
    }
}

/// Drives the periodic self-rescheduling heartbeat task of one rank: emit as
/// soon as at least dt_hb has elapsed since the previous emission.
#[derive(Clone, Debug, Default)]
pub struct PeriodicEmitter {
    last_emit: VirtualTime,
}

impl PeriodicEmitter {
    /// True iff now - last_emit >= dt_hb; updates the stored timestamp on
    /// emission. The caller reschedules the task unconditionally.
    pub fn emit_if_due(&mut self, now: VirtualTime, dt_hb: VirtualTime) -> bool {
        if (now - self.last_emit).secs() >= dt_hb.secs() {
            self.last_emit = now;
            true
        } else {
            false
        }
    }

    pub fn last_emit(&self) -> VirtualTime {
        self.last_emit
    }
}

/// A logged change of a replica's health as seen from one observing rank.
#[derive(Clone, Debug, PartialEq)]
pub struct StatusChange {
    pub time: VirtualTime,
    pub target_team: usize,
    pub tag_abs: u32,
    pub health: RankHealth,
}

/// A completed consistency vote.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteResult {
    pub time: VirtualTime,
    pub tag_abs: u32,
    pub seq: u64,
    pub verdict: ConsistencyVerdict,
}

/// Per-rank heartbeat state: local emission bookkeeping plus the fold of all
/// replica records, classification and consistency votes.
#[derive(Debug)]
pub struct Monitor {
    own: RankAddress,
    num_teams: usize,
    params: ClassifyParams,
    dt_hb: Option<VirtualTime>,
    seqs: BTreeMap<u32, u64>,
    local: BTreeMap<u32, SectionTracker>,
    replicas: BTreeMap<(usize, u32), SectionTracker>,
    last_heard: BTreeMap<usize, VirtualTime>,
    finished_teams: alloc::collections::BTreeSet<usize>,
    health: BTreeMap<(usize, u32), RankHealth>,
    votes: BTreeMap<(u32, u64), BTreeMap<usize, u64>>,
    pub status_log: Vec<StatusChange>,
    pub vote_log: Vec<VoteResult>,
    pub protocol_errors: u64,
}

/// What an emission closed locally, for metrics rows.
#[derive(Clone, Debug)]
pub struct ClosedInterval {
    pub tag_abs: u32,
    pub interval: VirtualTime,
    pub smoothed: f64,
}

impl Monitor {
    pub fn new(own: RankAddress, num_teams: usize, params: ClassifyParams, dt_hb: Option<VirtualTime>) -> Self {
        Monitor {
            own,
            num_teams,
            params,
            dt_hb,
            seqs: BTreeMap::new(),
            local: BTreeMap::new(),
            replicas: BTreeMap::new(),
            last_heard: BTreeMap::new(),
            finished_teams: alloc::collections::BTreeSet::new(),
            health: BTreeMap::new(),
            votes: BTreeMap::new(),
            status_log: Vec::new(),
            vote_log: Vec::new(),
            protocol_errors: 0,
        }
    }

    /// Record a local heartbeat call and build the record to multicast.
    /// Returns the record plus the locally closed interval, if any.
    pub fn emit(
        &mut self,
        tag: i64,
        now: VirtualTime,
        buffer: Option<&[u8]>,
    ) -> (HeartbeatRecord, Option<ClosedInterval>) {
        let tag_abs = tag.unsigned_abs() as u32;
        let seq = {
            let s = self.seqs.entry(tag_abs).or_insert(0);
            *s += 1;
            *s
        };
        let hash = buffer.map(fnv1a64);
        if let Some(h) = hash {
            self.register_hash(self.own.team, tag_abs, seq, h, now);
        }
        let alpha = self.params.alpha;
        let tracker = self.local.entry(tag_abs).or_default();
        let closed = match tracker.feed(tag, now, alpha) {
            Ok(dt) => dt,
            Err(()) => {
                self.protocol_errors += 1;
                None
            }
        };
        let closed = closed.map(|interval| ClosedInterval {
            tag_abs,
            interval,
            smoothed: self.local[&tag_abs].series.smoothed().unwrap_or(0.0),
        });
        (
            HeartbeatRecord {
                tag,
                emit_time: now,
                consistency_hash: hash,
                sender: self.own,
                seq,
                finalize: false,
            },
            closed,
        )
    }

    /// The completion announcement multicast when the program finishes.
    pub fn emit_finalize(&mut self, now: VirtualTime) -> HeartbeatRecord {
        HeartbeatRecord {
            tag: 0,
            emit_time: now,
            consistency_hash: None,
            sender: self.own,
            seq: 0,
            finalize: true,
        }
    }

    /// Fold one delivered replica record into the series and vote tables.
    pub fn ingest(&mut self, rec: &HeartbeatRecord, now: VirtualTime) {
        let team = rec.sender.team;
        let tag_abs = rec.tag.unsigned_abs() as u32;
        self.last_heard
            .entry(team)
            .and_modify(|t| *t = t.max(now))
            .or_insert(now);
        if rec.finalize {
            self.finished_teams.insert(team);
            return;
        }
        let alpha = self.params.alpha;
        if self
            .replicas
            .entry((team, tag_abs))
            .or_default()
            .feed(rec.tag, rec.emit_time, alpha)
            .is_err()
        {
            self.protocol_errors += 1;
        }
        if let Some(h) = rec.consistency_hash {
            self.register_hash(team, tag_abs, rec.seq, h, now);
        }
    }

    fn register_hash(&mut self, team: usize, tag_abs: u32, seq: u64, hash: u64, now: VirtualTime) {
        let entry = self.votes.entry((tag_abs, seq)).or_default();
        entry.insert(team, hash);
        if entry.len() == self.num_teams {
            let hashes = self.votes.remove(&(tag_abs, seq)).expect("present");
            let verdict = vote(self.num_teams, &hashes);
            self.vote_log.push(VoteResult {
                time: now,
                tag_abs,
                seq,
                verdict,
            });
        }
    }

    /// Re-classify every replica (per tag) from current data; health changes
    /// are appended to the status log. Failed is absorbing.
    pub fn classify_all(&mut self, now: VirtualTime) {
        let keys: Vec<(usize, u32)> = self.replicas.keys().copied().collect();
        for (team, tag_abs) in keys {
            let local = self.local.entry(tag_abs).or_default();
            let replica = &self.replicas[&(team, tag_abs)];
            let silence_basis = if self.finished_teams.contains(&team) {
                None // completed normally; silence is not failure
            } else {
                self.last_heard.get(&team).copied()
            };
            let mut verdict = classify(
                &local.series,
                &replica.series,
                now,
                silence_basis,
                self.dt_hb,
                &self.params,
            );
            let slot = self.health.entry((team, tag_abs)).or_insert(RankHealth::Healthy);
            if *slot == RankHealth::Failed {
                verdict = RankHealth::Failed;
            }
            if verdict != *slot {
                *slot = verdict;
                self.status_log.push(StatusChange {
                    time: now,
                    target_team: team,
                    tag_abs,
                    health: verdict,
                });
            }
        }
    }

    /// Self-assessment: Slow when our own smoothed interval exceeds tol times
    /// the smoothed interval of some replica. A slow rank can thereby
    /// identify itself as diverging.
    pub fn self_status(&self, tag_abs: u32) -> RankHealth {
        let Some(local_s) = self.local.get(&tag_abs).and_then(|t| t.series.smoothed()) else {
            return RankHealth::Healthy;
        };
        let slow = self
            .replicas
            .iter()
            .filter(|((_, t), _)| *t == tag_abs)
            .filter_map(|(_, tr)| tr.series.smoothed())
            .any(|rep_s| local_s > self.params.tol * rep_s);
        if slow {
            RankHealth::Slow
        } else {
            RankHealth::Healthy
        }
    }

    pub fn local_series(&self, tag_abs: u32) -> Option<&IntervalSeries> {
        self.local.get(&tag_abs).map(|t| &t.series)
    }

    pub fn local_keys(&self) -> Vec<u32> {
        self.local.keys().copied().collect()
    }

    pub fn replica_keys(&self) -> Vec<(usize, u32)> {
        self.replicas.keys().copied().collect()
    }

    pub fn replica_series(&self, team: usize, tag_abs: u32) -> Option<&IntervalSeries> {
        self.replicas.get(&(team, tag_abs)).map(|t| &t.series)
    }

    pub fn health_of(&self, team: usize, tag_abs: u32) -> RankHealth {
        self.health
            .get(&(team, tag_abs))
            .copied()
            .unwrap_or(RankHealth::Healthy)
    }

    pub fn emission_count(&self) -> u64 {
        self.seqs.values().sum()
    }
}
