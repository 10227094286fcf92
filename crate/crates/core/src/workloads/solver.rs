//! Synthetic timestep solver. Each rank owns a strip of cells; every step it
//! spawns one shareable prediction task per cell (ids shared with its
//! replicas), runs them through the skip-or-compute wrapper in team-shuffled
//! order, pays a non-shareable cost, and closes the step with a zero-size
//! ring exchange among team neighbours. Dual heartbeats bracket the task
//! region; the closing beat can carry a consistency digest of the step's
//! outcomes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{collect_artifacts, RunArtifacts, WorkloadError};
use crate::heartbeat::divergence;
use crate::metrics::StepRow;
use crate::netsim::{
    Channel, FaultEvent, FaultKind, Payload, Program, ProgramCtx, SimConfig, Simulation, Step,
};
use crate::tasksharing::{compute_unique_id, shuffle_order, ShareableTask};
use crate::time::VirtualTime;
use crate::topology::RankAddress;

/// Action id of the (only) shareable task kind.
pub const ACTION_PREDICT: u32 = 0;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub steps: u64,
    /// Shareable prediction tasks per rank per step.
    pub tasks_per_rank_per_step: u32,
    /// Cost of one prediction task.
    pub shareable_cost: VirtualTime,
    /// Per-step cost that can never be skipped.
    pub nonshareable_cost: VirtualTime,
    pub outcome_size: u32,
    /// Per-team-rank compute cost multiplier (load imbalance).
    pub imbalance: BTreeMap<usize, f64>,
    /// Attach a digest of the step's outcomes to the closing heartbeat.
    pub consistency_buffers: bool,
    /// Flip one bit in the digest buffer of one rank at one step.
    pub corrupt: Option<CorruptSpec>,
    /// Shuffle the spawn order itself (per rank, seeded) before the modulo-K
    /// permutation, modelling non-deterministic task spawning.
    pub shuffle_spawn_order: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            steps: 100,
            tasks_per_rank_per_step: 64,
            shareable_cost: VirtualTime::from_secs(0.05),
            nonshareable_cost: VirtualTime::from_secs(0.35),
            outcome_size: 64,
            imbalance: BTreeMap::new(),
            consistency_buffers: false,
            corrupt: None,
            shuffle_spawn_order: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorruptSpec {
    pub team: usize,
    pub team_rank: usize,
    pub step: u64,
    pub bit: u32,
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub artifacts: RunArtifacts,
    /// Frozen per-(step, team) metric rows.
    pub step_rows: Vec<StepRow>,
    /// [team][step]: start of the step, straggler-aware (max over ranks).
    pub team_step_starts: Vec<Vec<VirtualTime>>,
    /// Per step: max pairwise divergence between team start times.
    pub divergence: Vec<f64>,
    /// Charged compute per team, virtual CPU seconds.
    pub team_compute_cost: Vec<f64>,
    /// When each team's last rank finished.
    pub team_finish: Vec<VirtualTime>,
    /// Reused / (reused + computed) per team.
    pub reuse_fraction: Vec<f64>,
    /// Final outcome payloads per team, keyed by data key.
    pub final_outputs: Vec<BTreeMap<u64, Vec<u8>>>,
    /// FNV digest of each team's final outputs.
    pub output_digests: Vec<u64>,
}

fn cell_key(team_rank: usize, k: u32) -> u64 {
    ((team_rank as u64) << 32) | k as u64
}

enum SState {
    BeginStep,
    AfterOpenBeat,
    RunTasks,
    AfterTasks,
    AfterNonShare,
    AfterRingSend,
    AfterRingRecv,
}

struct Solver {
    cfg: SolverConfig,
    step: u64,
    state: SState,
    queue: Vec<ShareableTask>,
    next_task: usize,
    ring_next: Option<RankAddress>,
    ring_prev: Option<RankAddress>,
    cost_mult: f64,
    num_teams: usize,
}

impl Solver {
    fn spawn_tasks(&mut self, ctx: &mut ProgramCtx<'_>) {
        let n = self.cfg.tasks_per_rank_per_step;
        let addr = ctx.addr();
        let mut spawn: Vec<u32> = (0..n).collect();
        if self.cfg.shuffle_spawn_order {
            ctx.rng().shuffle(&mut spawn);
        }
        let ordered = shuffle_order(spawn, addr.team, self.num_teams);
        self.queue = ordered
            .into_iter()
            .map(|k| ShareableTask {
                id: compute_unique_id(cell_key(addr.team_rank, k), ACTION_PREDICT, self.step),
                compute_cost: self.cfg.shareable_cost * self.cost_mult,
                outcome_size: self.cfg.outcome_size,
            })
            .collect();
        self.next_task = 0;
    }

    fn closing_buffer(&self, ctx: &ProgramCtx<'_>) -> Option<Vec<u8>> {
        if !self.cfg.consistency_buffers {
            return None;
        }
        let addr = ctx.addr();
        let n = self.cfg.tasks_per_rank_per_step;
        let base = cell_key(addr.team_rank, 0);
        let digest = ctx.output_digest(base..base + n as u64);
        let mut buf = digest.to_le_bytes().to_vec();
        if let Some(c) = self.cfg.corrupt {
            if c.team == addr.team && c.team_rank == addr.team_rank && c.step == self.step {
                let bit = c.bit as usize % (buf.len() * 8);
                buf[bit / 8] ^= 1 << (bit % 8);
            }
        }
        Some(buf)
    }
}

impl Program for Solver {
    fn resume(&mut self, ctx: &mut ProgramCtx<'_>) -> Step {
        loop {
            match self.state {
                SState::BeginStep => {
                    if self.step == self.cfg.steps {
                        return Step::Done;
                    }
                    ctx.begin_step(self.step);
                    self.spawn_tasks(ctx);
                    self.state = SState::AfterOpenBeat;
                    return Step::Heartbeat {
                        tag: 1,
                        buffer: None,
                    };
                }
                SState::AfterOpenBeat => {
                    self.state = SState::RunTasks;
                }
                SState::RunTasks => {
                    if self.next_task < self.queue.len() {
                        let task = self.queue[self.next_task].clone();
                        self.next_task += 1;
                        return Step::Shareable(task);
                    }
                    self.state = SState::AfterTasks;
                    let buffer = self.closing_buffer(ctx);
                    return Step::Heartbeat { tag: -1, buffer };
                }
                SState::AfterTasks => {
                    self.state = SState::AfterNonShare;
                    return Step::Compute(self.cfg.nonshareable_cost * self.cost_mult);
                }
                SState::AfterNonShare => {
                    match self.ring_next {
                        Some(next) => {
                            self.state = SState::AfterRingSend;
                            return Step::Send {
                                dst: next,
                                channel: Channel::IntraTeam,
                                tag: self.step as i64,
                                payload: Payload::Empty,
                                size_bytes: 0,
                            };
                        }
                        None => {
                            self.step += 1;
                            self.state = SState::BeginStep;
                        }
                    }
                }
                SState::AfterRingSend => {
                    self.state = SState::AfterRingRecv;
                    return Step::Recv {
                        channel: Channel::IntraTeam,
                        tag: Some(self.step as i64),
                        src: self.ring_prev.map(|a| a.world_rank),
                    };
                }
                SState::AfterRingRecv => {
                    let _ = ctx.take_received();
                    self.step += 1;
                    self.state = SState::BeginStep;
                }
            }
        }
    }

    fn as_any(&self) -> &dyn core::any::Any {
        self
    }
}

/// Run the solver on the configured world with the given fault plan.
pub fn run_solver(
    cfg: &SolverConfig,
    sim_cfg: SimConfig,
    plan: &[FaultEvent],
) -> Result<SolverReport, WorkloadError> {
    if cfg.steps == 0 || cfg.tasks_per_rank_per_step == 0 {
        return Err(WorkloadError::BadConfig("steps and tasks must be positive"));
    }
    let world = sim_cfg.world;
    let mut sim = Simulation::new(sim_cfg);
    for r in 0..world.world_size() {
        let addr = crate::topology::map_world_rank(r, world).expect("in range");
        let ring = world.team_size() > 1;
        let next_rank = (addr.team_rank + 1) % world.team_size();
        let prev_rank = (addr.team_rank + world.team_size() - 1) % world.team_size();
        let cost_mult = cfg.imbalance.get(&addr.team_rank).copied().unwrap_or(1.0);
        sim.install_program(
            r,
            Box::new(Solver {
                cfg: cfg.clone(),
                step: 0,
                state: SState::BeginStep,
                queue: Vec::new(),
                next_task: 0,
                ring_next: ring
                    .then(|| RankAddress::from_parts(addr.team, next_rank, world).expect("ring")),
                ring_prev: ring
                    .then(|| RankAddress::from_parts(addr.team, prev_rank, world).expect("ring")),
                cost_mult,
                num_teams: world.num_teams(),
            }),
        );
    }
    // the plan goes in before the initial wakes so that t=0 faults (e.g.
    // startup delays) apply before any rank takes its first step
    sim.inject_plan(plan)
        .map_err(|_| WorkloadError::BadConfig("invalid fault plan"))?;
    sim.start();

    let n = cfg.tasks_per_rank_per_step as f64;
    let step_budget = n * cfg.shareable_cost.secs() + cfg.nonshareable_cost.secs() + 1e-3;
    let worst_mult = cfg
        .imbalance
        .values()
        .copied()
        .fold(1.0f64, f64::max);
    let pause_budget: f64 = plan
        .iter()
        .map(|f| match f.kind {
            FaultKind::Pause(d) => d.secs(),
            FaultKind::Kill => 0.0,
        })
        .sum();
    let cap = (cfg.steps as f64 + 2.0) * step_budget * worst_mult * 1.5 + pause_budget + 100.0;
    sim.run_to_quiescence(VirtualTime::from_secs(cap * 4.0));

    let artifacts = collect_artifacts(&sim);
    let teams = world.num_teams();

    let mut team_step_starts = alloc::vec![alloc::vec![VirtualTime::ZERO; cfg.steps as usize]; teams];
    let mut team_compute_cost = alloc::vec![0.0f64; teams];
    let mut team_finish = alloc::vec![VirtualTime::ZERO; teams];
    let mut reused = alloc::vec![0u64; teams];
    let mut computed = alloc::vec![0u64; teams];
    let mut step_rows: BTreeMap<(u64, usize), StepRow> = BTreeMap::new();
    let mut final_outputs: Vec<BTreeMap<u64, Vec<u8>>> = alloc::vec![BTreeMap::new(); teams];

    for view in &artifacts.ranks {
        let team = view.addr.team;
        team_compute_cost[team] += view.stats.compute_cost;
        if let Some(t) = view.stats.finished_at {
            team_finish[team] = team_finish[team].max(t);
        }
        for &(step, at) in &view.stats.step_starts {
            let slot = &mut team_step_starts[team][step as usize];
            *slot = slot.max(at);
        }
        for (&step, stats) in &view.stats.per_step {
            reused[team] += stats.reused;
            computed[team] += stats.computed;
            let row = step_rows.entry((step, team)).or_insert(StepRow {
                step,
                team,
                computed: 0,
                reused: 0,
                suppressed_shares: 0,
                db_high_watermark: 0,
            });
            row.computed += stats.computed;
            row.reused += stats.reused;
            row.suppressed_shares += stats.suppressed_shares;
            row.db_high_watermark = row.db_high_watermark.max(stats.db_high_watermark);
        }
        for (key, payload) in &view.stats.outputs {
            final_outputs[team].insert(*key, payload.clone());
        }
    }

    let mut div = Vec::with_capacity(cfg.steps as usize);
    for i in 0..cfg.steps as usize {
        let mut worst = 0.0f64;
        for a in 0..teams {
            for b in (a + 1)..teams {
                let d = divergence(team_step_starts[a][i], team_step_starts[b][i]).secs();
                worst = worst.max(d);
            }
        }
        div.push(worst);
    }

    let reuse_fraction = (0..teams)
        .map(|t| {
            let total = reused[t] + computed[t];
            if total == 0 {
                0.0
            } else {
                reused[t] as f64 / total as f64
            }
        })
        .collect();

    let output_digests = final_outputs
        .iter()
        .map(|m| {
            let mut bytes = Vec::new();
            for (k, v) in m {
                bytes.extend_from_slice(&k.to_le_bytes());
                bytes.extend_from_slice(v);
            }
            crate::heartbeat::fnv1a64(&bytes)
        })
        .collect();

    Ok(SolverReport {
        artifacts,
        step_rows: step_rows.into_values().collect(),
        team_step_starts,
        divergence: div,
        team_compute_cost,
        team_finish,
        reuse_fraction,
        final_outputs,
        output_digests,
    })
}
