//! Miniapp: barrier-synchronised iterations of pure compute, mimicking the
//! communication-then-computation shape of typical iterative codes.
//!
//! With a single heartbeat per iteration the measured interval spans the
//! whole barrier-to-barrier iteration, so a slow rank drags its teammates'
//! intervals along and only the team can be blamed. Dual heartbeats bracket
//! just the compute region, with no synchronisation in between, which singles
//! out the slow rank itself.

use alloc::boxed::Box;

use super::{collect_artifacts, RunArtifacts, WorkloadError};
use crate::netsim::{FaultEvent, Program, ProgramCtx, SimConfig, Simulation, Step};
use crate::time::VirtualTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeartbeatMode {
    Single,
    Dual,
}

#[derive(Clone, Debug)]
pub struct MiniappConfig {
    pub iterations: u32,
    pub work_per_iter: VirtualTime,
    pub heartbeat_mode: HeartbeatMode,
}

impl Default for MiniappConfig {
    fn default() -> Self {
        MiniappConfig {
            iterations: 100,
            work_per_iter: VirtualTime::from_secs(0.4),
            heartbeat_mode: HeartbeatMode::Dual,
        }
    }
}

pub type MiniappReport = RunArtifacts;

enum MaState {
    BeginIter,
    AfterBarrier,
    AfterOpen,
    AfterWork,
}

struct Miniapp {
    cfg: MiniappConfig,
    iter: u32,
    state: MaState,
}

impl Program for Miniapp {
    fn resume(&mut self, _ctx: &mut ProgramCtx<'_>) -> Step {
        loop {
            match self.state {
                MaState::BeginIter => {
                    if self.iter == self.cfg.iterations {
                        return Step::Done;
                    }
                    self.state = MaState::AfterBarrier;
                    return Step::Barrier;
                }
                MaState::AfterBarrier => {
                    self.state = MaState::AfterOpen;
                    let tag = match self.cfg.heartbeat_mode {
                        HeartbeatMode::Dual => 1,
                        HeartbeatMode::Single => 0,
                    };
                    return Step::Heartbeat { tag, buffer: None };
                }
                MaState::AfterOpen => {
                    self.state = MaState::AfterWork;
                    return Step::Compute(self.cfg.work_per_iter);
                }
                MaState::AfterWork => {
                    self.iter += 1;
                    self.state = MaState::BeginIter;
                    if self.cfg.heartbeat_mode == HeartbeatMode::Dual {
                        // close the compute section before the end barrier
                        // can couple us to slower teammates
                        return Step::Heartbeat {
                            tag: -1,
                            buffer: None,
                        };
                    }
                }
            }
        }
    }

    fn as_any(&self) -> &dyn core::any::Any {
        self
    }
}

/// Run the miniapp on every rank of the world under the given fault plan.
pub fn run_miniapp(
    cfg: &MiniappConfig,
    sim_cfg: SimConfig,
    plan: &[FaultEvent],
) -> Result<MiniappReport, WorkloadError> {
    if cfg.iterations == 0 {
        return Err(WorkloadError::BadConfig("iterations must be positive"));
    }
    let world = sim_cfg.world;
    let mut sim = Simulation::new(sim_cfg);
    for r in 0..world.world_size() {
        sim.install_program(
            r,
            Box::new(Miniapp {
                cfg: cfg.clone(),
                iter: 0,
                state: MaState::BeginIter,
            }),
        );
    }
    // the plan goes in before the initial wakes so that t=0 faults (e.g.
    // startup delays) apply before any rank takes its first step
    sim.inject_plan(plan)
        .map_err(|_| WorkloadError::BadConfig("invalid fault plan"))?;
    sim.start();
    let pause_budget: f64 = plan
        .iter()
        .map(|f| match f.kind {
            crate::netsim::FaultKind::Pause(d) => d.secs(),
            crate::netsim::FaultKind::Kill => 0.0,
        })
        .sum();
    let cap = (cfg.iterations as f64 + 2.0) * (cfg.work_per_iter.secs() * 1.2 + 1e-3)
        + pause_budget
        + 10.0;
    sim.run_to_quiescence(VirtualTime::from_secs(cap * 4.0));
    Ok(collect_artifacts(&sim))
}
