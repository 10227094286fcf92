//! Task-outcome sharing between replicas: unique task ids, the received
//! outcome database with timestep garbage collection, the bounded send
//! window, and modulo-K execution shuffling.
//!
//! The skip-or-compute decision itself (run a shareable task only if its
//! outcome has not dropped in from another team) is wired into the event loop
//! in [`crate::netsim`]; this module owns the data structures and the pure
//! rules.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::SplitMix64;
use crate::time::VirtualTime;

/// Globally unique task identity: two tasks in different teams share an id
/// iff they perform the same action on the same data in the same time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId {
    /// Opaque key of the data the task works on (e.g. a cell index).
    pub data_key: u64,
    /// Small integer enumerating the task kind.
    pub action: u32,
    /// Timestep the task belongs to.
    pub step: u64,
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.data_key, self.action, self.step)
    }
}

/// Pure id construction: equal fields give equal ids, distinct triples give
/// distinct ids.
pub fn compute_unique_id(data_key: u64, action: u32, step: u64) -> TaskId {
    TaskId {
        data_key,
        action,
        step,
    }
}

/// A task eligible for outcome sharing: compute-heavy, off the critical path,
/// serialisable outcome, globally unique id.
#[derive(Clone, Debug)]
pub struct ShareableTask {
    pub id: TaskId,
    pub compute_cost: VirtualTime,
    pub outcome_size: u32,
}

/// The task outcome as a deterministic pure function of the id. Both teams
/// produce identical bytes for the same id, which is what makes reuse safe.
pub fn outcome_payload(id: TaskId, size: u32) -> Vec<u8> {
    let mut stream = SplitMix64::for_stream(
        id.data_key ^ 0x7461_736b_6f75_7463,
        id.step,
        id.action as u64,
    );
    let mut out = Vec::with_capacity(size as usize);
    while out.len() < size as usize {
        let word = stream.next_u64().to_le_bytes();
        let take = core::cmp::min(8, size as usize - out.len());
        out.extend_from_slice(&word[..take]);
    }
    out
}

/// What happened to an incoming shared outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiveOutcome {
    Inserted,
    /// Another copy was already present (two teams computed the task around
    /// the same time); the payload is discarded.
    DuplicateDropped,
    /// The task belongs to a past time step; dropped immediately.
    StaleDropped,
}

/// Per-rank map from task ids onto received outcome payloads.
///
/// Entries live until they are reused (consumed) or their task's step falls
/// behind the rank's current step, at which point garbage collection frees
/// them.
#[derive(Clone, Debug, Default)]
pub struct OutcomeDb {
    map: BTreeMap<TaskId, Vec<u8>>,
    high_watermark: usize,
    bytes: usize,
    bytes_high_watermark: usize,
}

impl OutcomeDb {
    pub fn new() -> Self {
        OutcomeDb::default()
    }

    /// Receive handler for one incoming (id, payload) share.
    pub fn insert_received(
        &mut self,
        id: TaskId,
        payload: Vec<u8>,
        current_step: u64,
    ) -> ReceiveOutcome {
        if id.step < current_step {
            return ReceiveOutcome::StaleDropped;
        }
        if self.map.contains_key(&id) {
            return ReceiveOutcome::DuplicateDropped;
        }
        self.bytes += payload.len();
        self.map.insert(id, payload);
        self.high_watermark = self.high_watermark.max(self.map.len());
        self.bytes_high_watermark = self.bytes_high_watermark.max(self.bytes);
        ReceiveOutcome::Inserted
    }

    /// Consume an entry for reuse; at most one reuse per entry.
    pub fn take(&mut self, id: TaskId) -> Option<Vec<u8>> {
        let payload = self.map.remove(&id)?;
        self.bytes -= payload.len();
        Some(payload)
    }

    pub fn contains(&self, id: TaskId) -> bool {
        self.map.contains_key(&id)
    }

    /// Drop every entry whose task step lies before `current_step`.
    /// Invoked once per timestep boundary per rank.
    pub fn garbage_collect(&mut self, current_step: u64) -> usize {
        let stale: Vec<TaskId> = self
            .map
            .keys()
            .filter(|id| id.step < current_step)
            .copied()
            .collect();
        let removed = stale.len();
        for id in stale {
            let payload = self.map.remove(&id).expect("key just listed");
            self.bytes -= payload.len();
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn high_watermark(&self) -> usize {
        self.high_watermark
    }

    pub fn bytes_high_watermark(&self) -> usize {
        self.bytes_high_watermark
    }
}

/// Bound on simultaneously outstanding outcome-share transmissions per rank.
/// A completed delivery returns its slot; when the window is full the share
/// is suppressed (the local result is still used, nothing is retried).
#[derive(Clone, Debug)]
pub struct SendWindow {
    open: usize,
    limit: usize,
    high_watermark: usize,
    pub suppressed: u64,
}

pub const DEFAULT_SEND_WINDOW_LIMIT: usize = 16;

impl SendWindow {
    pub fn new(limit: usize) -> Self {
        debug_assert!(limit > 0);
        SendWindow {
            open: 0,
            limit,
            high_watermark: 0,
            suppressed: 0,
        }
    }

    /// Reserve `n` slots for one multicast, or refuse the whole multicast.
    pub fn try_acquire(&mut self, n: usize) -> bool {
        if self.open + n <= self.limit {
            self.open += n;
            self.high_watermark = self.high_watermark.max(self.open);
            true
        } else {
            self.suppressed += 1;
            false
        }
    }

    /// A tracked send completed (delivered or dropped); free its slot.
    pub fn release(&mut self, n: usize) {
        debug_assert!(self.open >= n);
        self.open -= n;
    }

    pub fn open(&self) -> usize {
        self.open
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn high_watermark(&self) -> usize {
        self.high_watermark
    }
}

/// Sub-priority of the task at `spawn_idx` (0-based) for the given team:
/// team T schedules residue class T first, then T+1, wrapping modulo K.
/// Within a class the spawn order is kept.
pub fn class_rank(spawn_idx: usize, team: usize, k: usize) -> usize {
    debug_assert!(k > 0 && team < k);
    (spawn_idx % k + k - team % k) % k
}

/// Permute a team's shareable tasks modulo the number of teams. Stable within
/// each residue class.
pub fn shuffle_order<T>(tasks: Vec<T>, team: usize, k: usize) -> Vec<T> {
    debug_assert!(k > 0 && team < k);
    let mut indexed: Vec<(usize, usize, T)> = tasks
        .into_iter()
        .enumerate()
        .map(|(i, t)| (class_rank(i, team, k), i, t))
        .collect();
    indexed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    indexed.into_iter().map(|(_, _, t)| t).collect()
}
