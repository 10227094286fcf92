//! Classic ping-pong bandwidth/latency benchmark: two ranks per team bounce
//! messages of doubling sizes; a heartbeat opens every trial. Used to show
//! that adding teams neither slows intra-team traffic nor adds anything but
//! heartbeats to the inter-replica channels.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{collect_artifacts, RunArtifacts, WorkloadError};
use crate::netsim::{Channel, Payload, Program, ProgramCtx, SimConfig, Simulation, Step};
use crate::time::VirtualTime;
use crate::topology::RankAddress;

#[derive(Clone, Debug)]
pub struct PingPongConfig {
    /// Smallest message size in bytes (sweep doubles up to n_max).
    pub n_min: u64,
    pub n_max: u64,
    /// Round trips per trial.
    pub i_max: u32,
    /// Repetitions per message size; the best result is reported.
    pub trials: u32,
}

impl Default for PingPongConfig {
    fn default() -> Self {
        PingPongConfig {
            n_min: 1,
            n_max: 1 << 20,
            i_max: 100,
            trials: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthPoint {
    pub size_bytes: u64,
    /// 2 * i_max * n / best elapsed, bytes per virtual second.
    pub bandwidth_bytes_per_sec: f64,
    /// 2 * i_max / best elapsed, messages per virtual second (the raw rate,
    /// reported alongside because the size-free form is also in use).
    pub message_rate_per_sec: f64,
    pub best_elapsed_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TeamBandwidth {
    pub team: usize,
    pub points: Vec<BandwidthPoint>,
}

#[derive(Clone, Debug)]
pub struct BandwidthReport {
    pub per_team: Vec<TeamBandwidth>,
    pub artifacts: RunArtifacts,
}

enum PpState {
    BeginTrial,
    BeginSize,
    AwaitReply,
    AfterReply,
}

struct Pinger {
    cfg: PingPongConfig,
    peer: RankAddress,
    trial: u32,
    size: u64,
    round: u32,
    timer_start: VirtualTime,
    state: PpState,
    /// (trial, size, elapsed)
    samples: Vec<(u32, u64, f64)>,
}

impl Program for Pinger {
    fn resume(&mut self, ctx: &mut ProgramCtx<'_>) -> Step {
        loop {
            match self.state {
                PpState::BeginTrial => {
                    if self.trial == self.cfg.trials {
                        return Step::Done;
                    }
                    self.size = self.cfg.n_min;
                    self.state = PpState::BeginSize;
                    return Step::Heartbeat {
                        tag: 0,
                        buffer: None,
                    };
                }
                PpState::BeginSize => {
                    self.timer_start = ctx.now();
                    self.round = 0;
                    self.state = PpState::AwaitReply;
                    return self.send_ping();
                }
                PpState::AwaitReply => {
                    self.state = PpState::AfterReply;
                    return Step::Recv {
                        channel: Channel::IntraTeam,
                        tag: Some(self.size as i64),
                        src: Some(self.peer.world_rank),
                    };
                }
                PpState::AfterReply => {
                    let _ = ctx.take_received();
                    self.round += 1;
                    if self.round < self.cfg.i_max {
                        self.state = PpState::AwaitReply;
                        return self.send_ping();
                    }
                    let elapsed = (ctx.now() - self.timer_start).secs();
                    self.samples.push((self.trial, self.size, elapsed));
                    self.size *= 2;
                    if self.size > self.cfg.n_max {
                        self.trial += 1;
                        self.state = PpState::BeginTrial;
                    } else {
                        self.state = PpState::BeginSize;
                    }
                }
            }
        }
    }

    fn as_any(&self) -> &dyn core::any::Any {
        self
    }
}

impl Pinger {
    fn send_ping(&self) -> Step {
        Step::Send {
            dst: self.peer,
            channel: Channel::IntraTeam,
            tag: self.size as i64,
            payload: Payload::Empty,
            size_bytes: self.size,
        }
    }
}

struct Ponger {
    cfg: PingPongConfig,
    peer: RankAddress,
    trial: u32,
    size: u64,
    round: u32,
    awaiting: bool,
    started: bool,
}

impl Program for Ponger {
    fn resume(&mut self, ctx: &mut ProgramCtx<'_>) -> Step {
        loop {
            if !self.started {
                if self.trial == self.cfg.trials {
                    return Step::Done;
                }
                self.started = true;
                self.size = self.cfg.n_min;
                self.round = 0;
                self.awaiting = true;
                return Step::Heartbeat {
                    tag: 0,
                    buffer: None,
                };
            }
            if self.awaiting {
                self.awaiting = false;
                return Step::Recv {
                    channel: Channel::IntraTeam,
                    tag: Some(self.size as i64),
                    src: Some(self.peer.world_rank),
                };
            }
            let _ = ctx.take_received();
            let reply = Step::Send {
                dst: self.peer,
                channel: Channel::IntraTeam,
                tag: self.size as i64,
                payload: Payload::Empty,
                size_bytes: self.size,
            };
            self.round += 1;
            if self.round < self.cfg.i_max {
                self.awaiting = true;
            } else {
                self.round = 0;
                self.size *= 2;
                self.awaiting = true;
                if self.size > self.cfg.n_max {
                    self.trial += 1;
                    self.started = false;
                }
            }
            return reply;
        }
    }

    fn as_any(&self) -> &dyn core::any::Any {
        self
    }
}

/// Run the benchmark over every team of the configured world.
pub fn run_pingpong(
    cfg: &PingPongConfig,
    sim_cfg: SimConfig,
) -> Result<BandwidthReport, WorkloadError> {
    if sim_cfg.world.team_size() != 2 {
        return Err(WorkloadError::WrongTeamSize {
            expected: 2,
            got: sim_cfg.world.team_size(),
        });
    }
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max || cfg.i_max == 0 {
        return Err(WorkloadError::BadConfig("size sweep or i_max out of range"));
    }
    let world = sim_cfg.world;
    let mut sim = Simulation::new(sim_cfg);
    for team in 0..world.num_teams() {
        let r0 = RankAddress::from_parts(team, 0, world).expect("team in range");
        let r1 = RankAddress::from_parts(team, 1, world).expect("team in range");
        sim.install_program(
            r0.world_rank,
            Box::new(Pinger {
                cfg: cfg.clone(),
                peer: r1,
                trial: 0,
                size: cfg.n_min,
                round: 0,
                timer_start: VirtualTime::ZERO,
                state: PpState::BeginTrial,
                samples: Vec::new(),
            }),
        );
        sim.install_program(
            r1.world_rank,
            Box::new(Ponger {
                cfg: cfg.clone(),
                peer: r0,
                trial: 0,
                size: cfg.n_min,
                round: 0,
                awaiting: true,
                started: false,
            }),
        );
    }
    sim.start();
    sim.run_to_quiescence(VirtualTime::from_secs(1e15));

    let mut per_team = Vec::new();
    for team in 0..world.num_teams() {
        let r0 = RankAddress::from_parts(team, 0, world).expect("team in range");
        let pinger = sim
            .program(r0.world_rank)
            .and_then(|p| p.as_any().downcast_ref::<Pinger>())
            .expect("pinger installed");
        let mut points: Vec<BandwidthPoint> = Vec::new();
        let mut size = cfg.n_min;
        while size <= cfg.n_max {
            let best = pinger
                .samples
                .iter()
                .filter(|(_, n, _)| *n == size)
                .map(|(_, _, e)| *e)
                .fold(f64::INFINITY, f64::min);
            let exchanged = 2.0 * cfg.i_max as f64;
            points.push(BandwidthPoint {
                size_bytes: size,
                bandwidth_bytes_per_sec: exchanged * size as f64 / best,
                message_rate_per_sec: exchanged / best,
                best_elapsed_secs: best,
            });
            size *= 2;
        }
        per_team.push(TeamBandwidth { team, points });
    }
    let artifacts = collect_artifacts(&sim);
    Ok(BandwidthReport {
        per_team,
        artifacts,
    })
}
