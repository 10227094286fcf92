//! Deterministic discrete-event core: virtual clock, per-rank execution
//! contexts, ordered message channels with an alpha/beta latency model, and
//! fault injection (pause/kill).
//!
//! Events are processed in non-decreasing time order with ties broken by
//! creation sequence, so identical (config, seed) pairs replay bit-identically.
//! One simulation instance is strictly single-threaded; instances are
//! self-contained values.
//!
//! Delivered task-share messages are folded into the receiving rank's outcome
//! database directly at delivery time, and delivered heartbeats become
//! pollable without any action by the receiver's compute tasks. This models
//! the dedicated communication-progression thread: communication advances
//! even while a rank computes, blocks or sits paused.

use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::fmt;

use crate::heartbeat::{ClassifyParams, HeartbeatRecord, Monitor, PeriodicEmitter};
use crate::metrics::{ChannelCounters, HeartbeatRow, RankStats};
use crate::rng::SplitMix64;
use crate::tasksharing::{outcome_payload, OutcomeDb, SendWindow, ShareableTask, TaskId};
use crate::time::VirtualTime;
use crate::topology::{replicas_of, RankAddress, WorldConfig};

/// Communication channel classes. Application traffic stays intra-team;
/// heartbeats and task shares travel only between replicas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    IntraTeam,
    HeartbeatInterReplica,
    TaskShareInterReplica,
}

impl Channel {
    fn index(self) -> usize {
        match self {
            Channel::IntraTeam => 0,
            Channel::HeartbeatInterReplica => 1,
            Channel::TaskShareInterReplica => 2,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::IntraTeam => write!(f, "intra_team"),
            Channel::HeartbeatInterReplica => write!(f, "heartbeat"),
            Channel::TaskShareInterReplica => write!(f, "task_share"),
        }
    }
}

/// Message payload. User data is opaque bytes; the two inter-replica
/// protocols carry their records in structured form.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Empty,
    Bytes(Vec<u8>),
    Heartbeat(HeartbeatRecord),
    TaskShare { id: TaskId, payload: Vec<u8> },
}

/// A unit of simulated communication.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub src: RankAddress,
    pub dst: RankAddress,
    pub channel: Channel,
    pub tag: i64,
    pub payload: Payload,
    pub size_bytes: u64,
    pub send_time: VirtualTime,
    pub deliver_time: VirtualTime,
}

/// What a sender hands to `post_send`.
#[derive(Clone, Debug)]
pub struct OutboundMessage {
    pub src: RankAddress,
    pub dst: RankAddress,
    pub channel: Channel,
    pub tag: i64,
    pub payload: Payload,
    pub size_bytes: u64,
}

/// latency(size) = alpha + size / beta.
#[derive(Clone, Copy, Debug)]
pub struct LatencyModel {
    /// Fixed per-message latency, virtual seconds.
    pub alpha: VirtualTime,
    /// Bandwidth in bytes per virtual second.
    pub beta: f64,
}

impl LatencyModel {
    pub fn new(alpha_secs: f64, beta_bytes_per_sec: f64) -> Self {
        debug_assert!(alpha_secs >= 0.0 && beta_bytes_per_sec > 0.0);
        LatencyModel {
            alpha: VirtualTime::from_secs(alpha_secs),
            beta: beta_bytes_per_sec,
        }
    }

    pub fn latency(&self, size_bytes: u64) -> VirtualTime {
        self.alpha + VirtualTime::from_secs(size_bytes as f64 / self.beta)
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        // small fixed cost, fast fabric
        LatencyModel::new(1e-6, 1e9)
    }
}

/// Pause a rank for a duration or remove it permanently.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultKind {
    Pause(VirtualTime),
    Kill,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultEvent {
    pub kind: FaultKind,
    pub target: RankAddress,
    pub at: VirtualTime,
}

/// Handle returned by `post_send`; resolves once the delivery event runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SendHandle(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendState {
    Pending,
    Delivered,
    /// Dropped for a dead target, or refused because the sender was dead.
    Undeliverable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NetError {
    /// Endpoints violate the channel class invariants.
    BadEndpoints,
    UnknownRank,
    FaultInPast,
    NonPositivePause,
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::BadEndpoints => write!(f, "message endpoints violate channel invariants"),
            NetError::UnknownRank => write!(f, "rank not part of this world"),
            NetError::FaultInPast => write!(f, "fault scheduled before current virtual time"),
            NetError::NonPositivePause => write!(f, "pause duration must be positive"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceKind {
    Send {
        dst: RankAddress,
        channel: Channel,
        tag: i64,
        size_bytes: u64,
    },
    Deliver {
        src: RankAddress,
        channel: Channel,
        tag: i64,
    },
    DropDeadTarget {
        src: RankAddress,
        channel: Channel,
        tag: i64,
    },
    SendRefusedDeadSender,
    HeartbeatEmit {
        tag: i64,
        seq: u64,
    },
    ComputeStart {
        cost: VirtualTime,
    },
    ComputeDone,
    TaskReused {
        id: TaskId,
    },
    TaskComputed {
        id: TaskId,
    },
    ShareSuppressed {
        id: TaskId,
    },
    ShareSkippedRecheck {
        id: TaskId,
    },
    BarrierJoin,
    BarrierRelease,
    Paused {
        duration: VirtualTime,
        until: VirtualTime,
    },
    Killed,
    StepStart {
        step: u64,
    },
    Finished,
}

/// One line of the event trace: time, rank, kind.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub time: VirtualTime,
    pub rank: RankAddress,
    pub kind: TraceKind,
}

/// What a program asks the engine to do next.
pub enum Step {
    /// Charge virtual compute time, then resume.
    Compute(VirtualTime),
    /// Fire-and-forget send; the program continues at the same instant.
    Send {
        dst: RankAddress,
        channel: Channel,
        tag: i64,
        payload: Payload,
        size_bytes: u64,
    },
    /// Block until a matching message is consumable.
    Recv {
        channel: Channel,
        tag: Option<i64>,
        src: Option<usize>,
    },
    /// Wait for all team members.
    Barrier,
    /// Heartbeat call: sign of tag opens/closes the section, zero is
    /// single-heartbeat mode. An attached buffer is hashed and piggybacked.
    Heartbeat {
        tag: i64,
        buffer: Option<Vec<u8>>,
    },
    /// Run a shareable task through the skip-or-compute wrapper.
    Shareable(ShareableTask),
    Done,
}

/// A rank's application code, resumed by the event loop one step at a time.
pub trait Program {
    fn resume(&mut self, ctx: &mut ProgramCtx<'_>) -> Step;
    fn as_any(&self) -> &dyn core::any::Any;
}

/// The view a program gets of its own rank while being resumed.
pub struct ProgramCtx<'a> {
    sim: &'a mut Simulation,
    rank: usize,
}

impl ProgramCtx<'_> {
    pub fn now(&self) -> VirtualTime {
        self.sim.now
    }

    pub fn addr(&self) -> RankAddress {
        self.sim.ranks[self.rank].addr
    }

    pub fn world(&self) -> WorldConfig {
        self.sim.cfg.world
    }

    /// The message consumed by the last completed `Recv`.
    pub fn take_received(&mut self) -> Option<Message> {
        self.sim.ranks[self.rank].last_recv.take()
    }

    /// Enter timestep `step`: records the start time, advances the rank's
    /// step counter and garbage-collects outcomes from past steps.
    pub fn begin_step(&mut self, step: u64) {
        let now = self.sim.now;
        let rank = &mut self.sim.ranks[self.rank];
        rank.current_step = step;
        rank.stats.step_starts.push((step, now));
        rank.db.garbage_collect(step);
        let entry = rank.stats.per_step.entry(step).or_default();
        entry.db_high_watermark = entry.db_high_watermark.max(rank.db.len());
        if self.sim.cfg.trace_enabled {
            let addr = rank.addr;
            self.sim.trace.push(TraceEvent {
                time: now,
                rank: addr,
                kind: TraceKind::StepStart { step },
            });
        }
    }

    /// Program-owned randomness, independent from engine jitter streams.
    pub fn rng(&mut self) -> &mut SplitMix64 {
        &mut self.sim.ranks[self.rank].prog_rng
    }

    /// FNV digest of this rank's current output payloads for a key range,
    /// e.g. to hand a step's solution state to a consistency heartbeat.
    pub fn output_digest(&self, keys: core::ops::Range<u64>) -> u64 {
        let rank = &self.sim.ranks[self.rank];
        let mut bytes = Vec::new();
        for key in keys {
            if let Some(p) = rank.stats.outputs.get(&key) {
                bytes.extend_from_slice(&key.to_le_bytes());
                bytes.extend_from_slice(p);
            }
        }
        crate::heartbeat::fnv1a64(&bytes)
    }
}

/// Engine knobs. `world` is the only mandatory field.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub latency: LatencyModel,
    pub seed: u64,
    /// Enables the periodic self-rescheduling heartbeat task at this cadence.
    pub dt_hb: Option<VirtualTime>,
    pub classify: ClassifyParams,
    /// Heartbeat tick fuzz as a fraction of dt_hb (scheduling is not
    /// real-time; intervals land in [dt_hb, (1+frac)*dt_hb]).
    pub hb_jitter_frac: f64,
    /// Per-task start fuzz as a fraction of the task's cost.
    pub task_jitter_frac: f64,
    pub send_window_limit: usize,
    /// Multicast computed task outcomes to replicas.
    pub sharing: bool,
    /// Fixed latency override for the task-share channel only, so outcome
    /// transfer cost can be swept independently of application traffic.
    pub share_alpha: Option<VirtualTime>,
    pub trace_enabled: bool,
}

impl SimConfig {
    pub fn new(world: WorldConfig) -> Self {
        SimConfig {
            world,
            latency: LatencyModel::default(),
            seed: 0,
            dt_hb: None,
            classify: ClassifyParams::default(),
            hb_jitter_frac: 0.05,
            task_jitter_frac: 0.0,
            send_window_limit: crate::tasksharing::DEFAULT_SEND_WINDOW_LIMIT,
            sharing: false,
            share_alpha: None,
            trace_enabled: false,
        }
    }
}

enum RunState {
    Idle,
    Computing {
        cost: VirtualTime,
        share: Option<ShareableTask>,
    },
    Blocked {
        channel: Channel,
        tag: Option<i64>,
        src: Option<usize>,
        woken: bool,
    },
    InBarrier,
}

struct Rank {
    addr: RankAddress,
    replicas: Vec<RankAddress>,
    alive: bool,
    killed_once: bool,
    finished: bool,
    paused_until: VirtualTime,
    state: RunState,
    mailbox: [VecDeque<Message>; 3],
    program: Option<Box<dyn Program>>,
    last_recv: Option<Message>,
    monitor: Monitor,
    emitter: PeriodicEmitter,
    db: OutcomeDb,
    window: SendWindow,
    current_step: u64,
    task_rng: SplitMix64,
    hb_rng: SplitMix64,
    prog_rng: SplitMix64,
    stats: RankStats,
}

struct InFlight {
    msg: Message,
    handle: u64,
    window_tracked: bool,
}

enum EventKind {
    Wake(usize),
    HbTick(usize),
    Deliver(Box<InFlight>),
    Fault(FaultEvent),
}

impl EventKind {
    /// Rank whose local schedule owns this event; pauses shift these.
    fn owner(&self) -> Option<usize> {
        match self {
            EventKind::Wake(r) | EventKind::HbTick(r) => Some(*r),
            _ => None,
        }
    }

    /// At equal timestamps, deliveries run before rank wakes: the
    /// communication thread files arrivals before the scheduler picks the
    /// next task (progression contract). Within a class, creation order.
    fn class(&self) -> u8 {
        match self {
            EventKind::Deliver(_) => 0,
            _ => 1,
        }
    }
}

struct Event {
    time: VirtualTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time) == Ordering::Equal && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.class().cmp(&other.kind.class()))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Barrier {
    arrived: Vec<bool>,
    count: usize,
}

/// One self-contained simulation instance.
pub struct Simulation {
    cfg: SimConfig,
    now: VirtualTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Event>>,
    ranks: Vec<Rank>,
    barriers: Vec<Barrier>,
    /// Per-link in-order delivery floor, keyed by (src, dst, channel).
    link_floor: alloc::collections::BTreeMap<(usize, usize, u8), VirtualTime>,
    send_states: Vec<SendState>,
    counters: ChannelCounters,
    trace: Vec<TraceEvent>,
}

const PURPOSE_TASK_JITTER: u64 = 1;
const PURPOSE_HB_JITTER: u64 = 2;
const PURPOSE_PROGRAM: u64 = 3;

impl Simulation {
    pub fn new(cfg: SimConfig) -> Self {
        let world = cfg.world;
        let ranks = world
            .addresses()
            .map(|addr| Rank {
                addr,
                replicas: replicas_of(addr, world).expect("address from world"),
                alive: true,
                killed_once: false,
                finished: false,
                paused_until: VirtualTime::ZERO,
                state: RunState::Idle,
                mailbox: [VecDeque::new(), VecDeque::new(), VecDeque::new()],
                program: None,
                last_recv: None,
                monitor: Monitor::new(addr, world.num_teams(), cfg.classify, cfg.dt_hb),
                emitter: PeriodicEmitter::default(),
                db: OutcomeDb::new(),
                window: SendWindow::new(cfg.send_window_limit),
                current_step: 0,
                task_rng: SplitMix64::for_stream(cfg.seed, addr.world_rank as u64, PURPOSE_TASK_JITTER),
                hb_rng: SplitMix64::for_stream(cfg.seed, addr.world_rank as u64, PURPOSE_HB_JITTER),
                prog_rng: SplitMix64::for_stream(cfg.seed, addr.world_rank as u64, PURPOSE_PROGRAM),
                stats: RankStats::default(),
            })
            .collect();
        let barriers = (0..world.num_teams())
            .map(|_| Barrier {
                arrived: alloc::vec![false; world.team_size()],
                count: 0,
            })
            .collect();
        Simulation {
            counters: ChannelCounters {
                intra_team_per_team: alloc::vec![0; world.num_teams()],
                ..ChannelCounters::default()
            },
            cfg,
            now: VirtualTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            ranks,
            barriers,
            link_floor: alloc::collections::BTreeMap::new(),
            send_states: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn world(&self) -> WorldConfig {
        self.cfg.world
    }

    /// Install the application program of one rank.
    pub fn install_program(&mut self, world_rank: usize, program: Box<dyn Program>) {
        self.ranks[world_rank].program = Some(program);
    }

    /// Schedule the initial wakes (and heartbeat ticks, if enabled).
    /// Call once after installing programs.
    pub fn start(&mut self) {
        for r in 0..self.ranks.len() {
            if self.ranks[r].program.is_some() {
                self.schedule(self.now, EventKind::Wake(r));
            }
        }
        if let Some(dt) = self.cfg.dt_hb {
            for r in 0..self.ranks.len() {
                let jitter = dt * (self.cfg.hb_jitter_frac * self.ranks[r].hb_rng.next_f64());
                let at = self.now + dt + jitter;
                self.schedule(at, EventKind::HbTick(r));
            }
        }
    }

    fn schedule(&mut self, time: VirtualTime, kind: EventKind) {
        if time.total_cmp(&self.now) == Ordering::Less {
            panic!(
                "internal invariant violated: event scheduled in the past ({} < {})",
                time, self.now
            );
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
    }

    /// Wake a rank no earlier than the end of its current pause.
    fn schedule_rank_wake(&mut self, rank: usize, time: VirtualTime) {
        let t = time.max(self.ranks[rank].paused_until);
        self.schedule(t, EventKind::Wake(rank));
    }

    fn push_trace(&mut self, rank: RankAddress, kind: TraceKind) {
        if self.cfg.trace_enabled {
            self.trace.push(TraceEvent {
                time: self.now,
                rank,
                kind,
            });
        }
    }

    // ------------------------------------------------------------------
    // messaging
    // ------------------------------------------------------------------

    fn validate_endpoints(&self, out: &OutboundMessage) -> Result<(), NetError> {
        let world = self.cfg.world;
        if out.src.world_rank >= world.world_size() || out.dst.world_rank >= world.world_size() {
            return Err(NetError::UnknownRank);
        }
        let ok = match out.channel {
            Channel::IntraTeam => out.src.team == out.dst.team,
            Channel::HeartbeatInterReplica | Channel::TaskShareInterReplica => {
                out.src.team != out.dst.team && out.src.team_rank == out.dst.team_rank
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NetError::BadEndpoints)
        }
    }

    /// Nonblocking fire-and-forget send. The sender proceeds immediately; the
    /// returned handle completes at delivery. Sending from a killed rank is a
    /// no-op flagged as undeliverable - the simulation never crashes on it.
    pub fn post_send(&mut self, out: OutboundMessage) -> Result<SendHandle, NetError> {
        self.validate_endpoints(&out)?;
        self.send_internal(out, false)
    }

    fn send_internal(
        &mut self,
        out: OutboundMessage,
        window_tracked: bool,
    ) -> Result<SendHandle, NetError> {
        let handle = SendHandle(self.send_states.len() as u64);
        if !self.ranks[out.src.world_rank].alive {
            self.send_states.push(SendState::Undeliverable);
            self.counters.refused_dead_sender += 1;
            self.push_trace(out.src, TraceKind::SendRefusedDeadSender);
            return Ok(handle);
        }
        self.send_states.push(SendState::Pending);

        match out.channel {
            Channel::IntraTeam => {
                self.counters.sent_intra_team += 1;
                self.counters.bytes_intra_team += out.size_bytes;
                self.counters.intra_team_per_team[out.src.team] += 1;
            }
            Channel::HeartbeatInterReplica => {
                self.counters.sent_heartbeat += 1;
                self.counters.bytes_heartbeat += out.size_bytes;
            }
            Channel::TaskShareInterReplica => {
                self.counters.sent_task_share += 1;
                self.counters.bytes_task_share += out.size_bytes;
            }
        }

        // per-link FIFO: a later message never overtakes an earlier one on
        // the same (src, dst, channel)
        let base_latency = match (out.channel, self.cfg.share_alpha) {
            (Channel::TaskShareInterReplica, Some(alpha)) => {
                alpha + VirtualTime::from_secs(out.size_bytes as f64 / self.cfg.latency.beta)
            }
            _ => self.cfg.latency.latency(out.size_bytes),
        };
        let raw = self.now + base_latency;
        let key = (
            out.src.world_rank,
            out.dst.world_rank,
            out.channel.index() as u8,
        );
        let floor = self.link_floor.get(&key).copied().unwrap_or(VirtualTime::ZERO);
        let deliver_time = raw.max(floor);
        self.link_floor.insert(key, deliver_time);

        self.push_trace(
            out.src,
            TraceKind::Send {
                dst: out.dst,
                channel: out.channel,
                tag: out.tag,
                size_bytes: out.size_bytes,
            },
        );
        let msg = Message {
            src: out.src,
            dst: out.dst,
            channel: out.channel,
            tag: out.tag,
            payload: out.payload,
            size_bytes: out.size_bytes,
            send_time: self.now,
            deliver_time,
        };
        self.schedule(
            deliver_time,
            EventKind::Deliver(Box::new(InFlight {
                msg,
                handle: handle.0,
                window_tracked,
            })),
        );
        Ok(handle)
    }

    pub fn send_state(&self, handle: SendHandle) -> SendState {
        self.send_states[handle.0 as usize]
    }

    /// Oldest delivered-but-unconsumed message matching (channel, tag
    /// filter), or None. Consuming removes it.
    pub fn poll_receive(
        &mut self,
        rank: RankAddress,
        channel: Channel,
        tag_filter: Option<i64>,
    ) -> Option<Message> {
        self.consume_matching(rank.world_rank, channel, tag_filter, None)
    }

    fn consume_matching(
        &mut self,
        rank: usize,
        channel: Channel,
        tag: Option<i64>,
        src: Option<usize>,
    ) -> Option<Message> {
        let mailbox = &mut self.ranks[rank].mailbox[channel.index()];
        let pos = mailbox.iter().position(|m| {
            tag.map_or(true, |t| m.tag == t) && src.map_or(true, |s| m.src.world_rank == s)
        })?;
        mailbox.remove(pos)
    }

    fn deliver(&mut self, flight: InFlight) {
        let InFlight {
            msg,
            handle,
            window_tracked,
        } = flight;
        if window_tracked {
            // the send request completes either way; free the slot
            self.ranks[msg.src.world_rank]
                .window
                .release(1);
        }
        let dst = msg.dst.world_rank;
        if !self.ranks[dst].alive {
            self.send_states[handle as usize] = SendState::Undeliverable;
            self.counters.dropped_dead_target += 1;
            self.push_trace(
                msg.dst,
                TraceKind::DropDeadTarget {
                    src: msg.src,
                    channel: msg.channel,
                    tag: msg.tag,
                },
            );
            return;
        }
        self.send_states[handle as usize] = SendState::Delivered;
        self.counters.delivered += 1;
        self.push_trace(
            msg.dst,
            TraceKind::Deliver {
                src: msg.src,
                channel: msg.channel,
                tag: msg.tag,
            },
        );

        match msg.channel {
            Channel::TaskShareInterReplica => {
                // progression contract: the communication thread files the
                // outcome into the database with no compute-task cooperation
                if let Payload::TaskShare { id, payload } = msg.payload {
                    let rank = &mut self.ranks[dst];
                    let step = rank.current_step;
                    rank.db.insert_received(id, payload, step);
                    let entry = rank.stats.per_step.entry(step).or_default();
                    entry.db_high_watermark = entry.db_high_watermark.max(rank.db.len());
                } else {
                    // byte payloads on the share channel are parked like any
                    // other message
                    self.enqueue_and_maybe_wake(dst, msg);
                }
            }
            Channel::HeartbeatInterReplica if self.ranks[dst].finished => {
                // the program is gone but the process sits in shutdown; the
                // progression thread folds arrivals so votes can complete
                if let Payload::Heartbeat(rec) = msg.payload {
                    let now = self.now;
                    self.ranks[dst].monitor.ingest(&rec, now);
                }
            }
            Channel::IntraTeam | Channel::HeartbeatInterReplica => {
                self.enqueue_and_maybe_wake(dst, msg);
            }
        }
    }

    fn enqueue_and_maybe_wake(&mut self, dst: usize, msg: Message) {
        let channel = msg.channel;
        let tag = msg.tag;
        let src_rank = msg.src.world_rank;
        self.ranks[dst].mailbox[channel.index()].push_back(msg);
        if let RunState::Blocked {
            channel: want_ch,
            tag: want_tag,
            src: want_src,
            woken,
        } = &mut self.ranks[dst].state
        {
            let matches = *want_ch == channel
                && want_tag.map_or(true, |t| t == tag)
                && want_src.map_or(true, |s| s == src_rank);
            if matches && !*woken {
                *woken = true;
                self.schedule_rank_wake(dst, self.now);
            }
        }
    }

    // ------------------------------------------------------------------
    // faults
    // ------------------------------------------------------------------

    /// Queue a fault for application at `f.at`.
    pub fn inject_fault(&mut self, f: FaultEvent) -> Result<(), NetError> {
        if f.target.world_rank >= self.cfg.world.world_size() {
            return Err(NetError::UnknownRank);
        }
        if f.at.total_cmp(&self.now) == Ordering::Less {
            return Err(NetError::FaultInPast);
        }
        if let FaultKind::Pause(d) = f.kind {
            if d.secs() <= 0.0 {
                return Err(NetError::NonPositivePause);
            }
        }
        self.schedule(f.at, EventKind::Fault(f));
        Ok(())
    }

    pub fn inject_plan(&mut self, plan: &[FaultEvent]) -> Result<(), NetError> {
        for f in plan {
            self.inject_fault(*f)?;
        }
        Ok(())
    }

    fn apply_fault(&mut self, f: FaultEvent) {
        let r = f.target.world_rank;
        match f.kind {
            FaultKind::Pause(d) => {
                if !self.ranks[r].alive {
                    return; // pausing a corpse does nothing
                }
                let base = self.ranks[r].paused_until.max(self.now);
                self.ranks[r].paused_until = base + d;
                let until = self.ranks[r].paused_until;
                // progress freezes: everything on the rank's own schedule
                // moves `d` later
                let events = core::mem::take(&mut self.heap).into_vec();
                let shifted = events
                    .into_iter()
                    .map(|Reverse(mut ev)| {
                        if ev.kind.owner() == Some(r) {
                            ev.time += d;
                        }
                        Reverse(ev)
                    })
                    .collect::<Vec<_>>();
                self.heap = BinaryHeap::from(shifted);
                self.push_trace(f.target, TraceKind::Paused { duration: d, until });
            }
            FaultKind::Kill => {
                if self.ranks[r].killed_once {
                    return;
                }
                self.ranks[r].killed_once = true;
                self.ranks[r].alive = false;
                self.push_trace(f.target, TraceKind::Killed);
            }
        }
    }

    // ------------------------------------------------------------------
    // heartbeats
    // ------------------------------------------------------------------

    fn fold_heartbeats(&mut self, r: usize) {
        loop {
            let msg = {
                let mailbox = &mut self.ranks[r].mailbox[Channel::HeartbeatInterReplica.index()];
                match mailbox.pop_front() {
                    Some(m) => m,
                    None => break,
                }
            };
            if let Payload::Heartbeat(rec) = msg.payload {
                let now = self.now;
                self.ranks[r].monitor.ingest(&rec, now);
            }
        }
    }

    /// The heartbeat call: fold delivered replica records, emit (timestamp
    /// plus optional buffer hash) to all replicas fire-and-forget, then
    /// re-classify.
    fn heartbeat_call(&mut self, r: usize, tag: i64, buffer: Option<&[u8]>) {
        self.fold_heartbeats(r);
        let now = self.now;
        let (record, closed) = self.ranks[r].monitor.emit(tag, now, buffer);
        self.ranks[r].stats.heartbeats_emitted += 1;
        let size = record.size_bytes();
        let seq = record.seq;
        let addr = self.ranks[r].addr;
        let replicas = self.ranks[r].replicas.clone();
        for rep in replicas {
            let _ = self.send_internal(
                OutboundMessage {
                    src: addr,
                    dst: rep,
                    channel: Channel::HeartbeatInterReplica,
                    tag,
                    payload: Payload::Heartbeat(record.clone()),
                    size_bytes: size,
                },
                false,
            );
        }
        self.push_trace(addr, TraceKind::HeartbeatEmit { tag, seq });
        self.ranks[r].monitor.classify_all(now);
        if let Some(ci) = closed {
            let status = self.ranks[r].monitor.self_status(ci.tag_abs);
            let row = HeartbeatRow {
                time: now,
                team: addr.team,
                team_rank: addr.team_rank,
                tag: ci.tag_abs,
                interval: ci.interval,
                smoothed: ci.smoothed,
                status,
            };
            self.ranks[r].stats.heartbeat_rows.push(row);
        }
    }

    fn hb_tick(&mut self, r: usize) {
        if !self.ranks[r].alive || self.ranks[r].finished {
            return; // task not rescheduled once the rank is gone
        }
        let dt = self.cfg.dt_hb.expect("ticks only exist with dt_hb");
        let due = self.ranks[r].emitter.emit_if_due(self.now, dt);
        if due {
            self.heartbeat_call(r, 0, None);
        } else {
            self.fold_heartbeats(r);
            let now = self.now;
            self.ranks[r].monitor.classify_all(now);
        }
        // reschedule: next invocation once dt_hb has elapsed again, plus
        // scheduling fuzz
        let jitter = dt * (self.cfg.hb_jitter_frac * self.ranks[r].hb_rng.next_f64());
        let base = self.ranks[r].emitter.last_emit() + dt;
        let next = base.max(self.now) + jitter;
        self.schedule(next, EventKind::HbTick(r));
    }

    // ------------------------------------------------------------------
    // program driving
    // ------------------------------------------------------------------

    fn process_wake(&mut self, r: usize) {
        if !self.ranks[r].alive || self.ranks[r].finished {
            return;
        }
        match core::mem::replace(&mut self.ranks[r].state, RunState::Idle) {
            RunState::Idle => {}
            RunState::InBarrier => {}
            RunState::Computing { cost, share } => {
                let shareable = share.is_some();
                self.finish_compute(r, cost, share);
                if shareable {
                    // yield before the next task's database check so that
                    // same-instant share deliveries become visible first
                    self.schedule_rank_wake(r, self.now);
                    return;
                }
            }
            RunState::Blocked {
                channel,
                tag,
                src,
                ..
            } => {
                match self.consume_matching(r, channel, tag, src) {
                    Some(msg) => {
                        self.ranks[r].last_recv = Some(msg);
                    }
                    None => {
                        // spurious wake; park again
                        self.ranks[r].state = RunState::Blocked {
                            channel,
                            tag,
                            src,
                            woken: false,
                        };
                        return;
                    }
                }
            }
        }
        self.drive(r);
    }

    fn finish_compute(&mut self, r: usize, cost: VirtualTime, share: Option<ShareableTask>) {
        self.ranks[r].stats.compute_cost += cost.secs();
        let addr = self.ranks[r].addr;
        self.push_trace(addr, TraceKind::ComputeDone);
        let Some(task) = share else { return };

        let payload = outcome_payload(task.id, task.outcome_size);
        let step = self.ranks[r].current_step;
        {
            let rank = &mut self.ranks[r];
            rank.stats.outputs.insert(task.id.data_key, payload.clone());
            rank.stats.per_step.entry(step).or_default().computed += 1;
        }
        self.push_trace(addr, TraceKind::TaskComputed { id: task.id });

        if !self.cfg.sharing || self.ranks[r].replicas.is_empty() {
            return;
        }
        // check once more before sending: if the outcome dropped in while we
        // computed, a replica is ahead and has already multicast it
        if self.ranks[r].db.contains(task.id) {
            self.ranks[r].stats.share_recheck_skips += 1;
            self.push_trace(addr, TraceKind::ShareSkippedRecheck { id: task.id });
            return;
        }
        let fanout = self.ranks[r].replicas.len();
        if !self.ranks[r].window.try_acquire(fanout) {
            self.ranks[r].stats.per_step.entry(step).or_default().suppressed_shares += 1;
            self.push_trace(addr, TraceKind::ShareSuppressed { id: task.id });
            return;
        }
        self.ranks[r].stats.shares_sent += 1;
        let replicas = self.ranks[r].replicas.clone();
        let size = payload.len() as u64 + 24; // id + step metadata envelope
        for rep in replicas {
            let _ = self.send_internal(
                OutboundMessage {
                    src: addr,
                    dst: rep,
                    channel: Channel::TaskShareInterReplica,
                    tag: 0,
                    payload: Payload::TaskShare {
                        id: task.id,
                        payload: payload.clone(),
                    },
                    size_bytes: size,
                },
                true,
            );
        }
    }

    fn drive(&mut self, r: usize) {
        loop {
            let Some(mut program) = self.ranks[r].program.take() else {
                return;
            };
            let step = program.resume(&mut ProgramCtx { sim: self, rank: r });
            self.ranks[r].program = Some(program);
            match step {
                Step::Compute(cost) => {
                    let jitter = cost
                        * (self.cfg.task_jitter_frac * self.ranks[r].task_rng.next_f64());
                    self.ranks[r].state = RunState::Computing { cost, share: None };
                    let addr = self.ranks[r].addr;
                    self.push_trace(addr, TraceKind::ComputeStart { cost });
                    let done = self.now + cost + jitter;
                    self.schedule(done, EventKind::Wake(r));
                    return;
                }
                Step::Shareable(task) => {
                    let step_no = self.ranks[r].current_step;
                    if let Some(payload) = self.ranks[r].db.take(task.id) {
                        // outcome computed by another team: roll it over and
                        // skip the computation entirely
                        let rank = &mut self.ranks[r];
                        rank.stats.outputs.insert(task.id.data_key, payload);
                        rank.stats.per_step.entry(step_no).or_default().reused += 1;
                        let addr = rank.addr;
                        self.push_trace(addr, TraceKind::TaskReused { id: task.id });
                        // yield to the loop so same-instant deliveries become
                        // visible before the next task's database check
                        self.schedule_rank_wake(r, self.now);
                        return;
                    }
                    let cost = task.compute_cost;
                    let jitter = cost
                        * (self.cfg.task_jitter_frac * self.ranks[r].task_rng.next_f64());
                    let addr = self.ranks[r].addr;
                    self.push_trace(addr, TraceKind::ComputeStart { cost });
                    self.ranks[r].state = RunState::Computing {
                        cost,
                        share: Some(task),
                    };
                    let done = self.now + cost + jitter;
                    self.schedule(done, EventKind::Wake(r));
                    return;
                }
                Step::Send {
                    dst,
                    channel,
                    tag,
                    payload,
                    size_bytes,
                } => {
                    let src = self.ranks[r].addr;
                    self.post_send(OutboundMessage {
                        src,
                        dst,
                        channel,
                        tag,
                        payload,
                        size_bytes,
                    })
                    .expect("program sent an invalid message");
                    continue;
                }
                Step::Recv { channel, tag, src } => {
                    match self.consume_matching(r, channel, tag, src) {
                        Some(msg) => {
                            self.ranks[r].last_recv = Some(msg);
                            continue;
                        }
                        None => {
                            self.ranks[r].state = RunState::Blocked {
                                channel,
                                tag,
                                src,
                                woken: false,
                            };
                            return;
                        }
                    }
                }
                Step::Barrier => {
                    let team = self.ranks[r].addr.team;
                    let team_rank = self.ranks[r].addr.team_rank;
                    let b = &mut self.barriers[team];
                    if !b.arrived[team_rank] {
                        b.arrived[team_rank] = true;
                        b.count += 1;
                    }
                    let addr = self.ranks[r].addr;
                    self.push_trace(addr, TraceKind::BarrierJoin);
                    self.ranks[r].state = RunState::InBarrier;
                    if self.barriers[team].count == self.cfg.world.team_size() {
                        let b = &mut self.barriers[team];
                        b.count = 0;
                        for f in b.arrived.iter_mut() {
                            *f = false;
                        }
                        self.push_trace(addr, TraceKind::BarrierRelease);
                        let size = self.cfg.world.team_size();
                        for tr in 0..size {
                            let member = team * size + tr;
                            self.schedule_rank_wake(member, self.now);
                        }
                    }
                    return;
                }
                Step::Heartbeat { tag, buffer } => {
                    self.heartbeat_call(r, tag, buffer.as_deref());
                    continue;
                }
                Step::Done => {
                    // drain any heartbeat backlog so pending consistency
                    // votes can still complete during shutdown
                    self.fold_heartbeats(r);
                    self.ranks[r].finished = true;
                    self.ranks[r].stats.finished_at = Some(self.now);
                    let addr = self.ranks[r].addr;
                    // completion announcement so replicas don't mistake the
                    // ensuing heartbeat silence for a failure
                    let now = self.now;
                    let record = self.ranks[r].monitor.emit_finalize(now);
                    let size = record.size_bytes();
                    let replicas = self.ranks[r].replicas.clone();
                    for rep in replicas {
                        let _ = self.send_internal(
                            OutboundMessage {
                                src: addr,
                                dst: rep,
                                channel: Channel::HeartbeatInterReplica,
                                tag: 0,
                                payload: Payload::Heartbeat(record.clone()),
                                size_bytes: size,
                            },
                            false,
                        );
                    }
                    self.push_trace(addr, TraceKind::Finished);
                    return;
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // event loop
    // ------------------------------------------------------------------

    fn dispatch(&mut self, ev: Event) {
        self.now = ev.time;
        match ev.kind {
            EventKind::Wake(r) => self.process_wake(r),
            EventKind::HbTick(r) => self.hb_tick(r),
            EventKind::Deliver(flight) => self.deliver(*flight),
            EventKind::Fault(f) => self.apply_fault(f),
        }
    }

    /// Process events in time order up to and including `clock_limit`, then
    /// advance the clock to the limit.
    pub fn run_until(&mut self, clock_limit: VirtualTime) {
        loop {
            let due = match self.heap.peek() {
                Some(Reverse(ev)) if ev.time.total_cmp(&clock_limit) != Ordering::Greater => true,
                _ => false,
            };
            if !due {
                break;
            }
            let Reverse(ev) = self.heap.pop().expect("peeked");
            self.dispatch(ev);
        }
        if self.now.total_cmp(&clock_limit) == Ordering::Less {
            self.now = clock_limit;
        }
    }

    /// Drain the event queue completely (bounded by a hard virtual-time cap
    /// against runaway schedules). Returns the number of events processed.
    pub fn run_to_quiescence(&mut self, hard_cap: VirtualTime) -> u64 {
        let mut n = 0;
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.time.total_cmp(&hard_cap) == Ordering::Greater {
                self.heap.push(Reverse(ev));
                break;
            }
            self.dispatch(ev);
            n += 1;
        }
        n
    }

    // ------------------------------------------------------------------
    // inspection
    // ------------------------------------------------------------------

    pub fn counters(&self) -> &ChannelCounters {
        &self.counters
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn rank_stats(&self, world_rank: usize) -> &RankStats {
        &self.ranks[world_rank].stats
    }

    pub fn monitor(&self, world_rank: usize) -> &Monitor {
        &self.ranks[world_rank].monitor
    }

    pub fn db(&self, world_rank: usize) -> &OutcomeDb {
        &self.ranks[world_rank].db
    }

    pub fn send_window(&self, world_rank: usize) -> &SendWindow {
        &self.ranks[world_rank].window
    }

    pub fn is_alive(&self, world_rank: usize) -> bool {
        self.ranks[world_rank].alive
    }

    pub fn is_finished(&self, world_rank: usize) -> bool {
        self.ranks[world_rank].finished
    }

    pub fn all_finished(&self) -> bool {
        self.ranks
            .iter()
            .all(|r| r.finished || r.program.is_none() || !r.alive)
    }

    pub fn program(&self, world_rank: usize) -> Option<&dyn Program> {
        self.ranks[world_rank].program.as_deref()
    }

    /// Deliveries still sitting in the event queue.
    pub fn pending_message_count(&self) -> u64 {
        self.heap
            .iter()
            .filter(|Reverse(ev)| matches!(ev.kind, EventKind::Deliver(_)))
            .count() as u64
    }
}
