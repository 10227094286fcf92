//! Single vs dual heartbeats on the miniapp: a barrier-coupled team smears a
//! single rank's slowdown over everyone's iteration intervals, while dual
//! heartbeats bracket only the unsynchronised compute region and isolate the
//! offender.

use teamsim_core::faults::{schedule_injections, FrequencyPolicy, SelectionPolicy};
use teamsim_core::heartbeat::RankHealth;
use teamsim_core::netsim::{FaultEvent, SimConfig};
use teamsim_core::time::VirtualTime;
use teamsim_core::topology::{RankAddress, WorldConfig};
use teamsim_core::workloads::{run_miniapp, HeartbeatMode, MiniappConfig, MiniappReport};

fn vt(s: f64) -> VirtualTime {
    VirtualTime::from_secs(s)
}

const WORK: f64 = 0.4;

fn pause_plan(world: WorldConfig) -> Vec<FaultEvent> {
    // one-second sleep sent to rank 0 of team 0 every five seconds
    let target = RankAddress::from_parts(0, 0, world).unwrap();
    schedule_injections(
        &SelectionPolicy::Constant(target),
        &FrequencyPolicy::Constant(vt(5.0)),
        vt(1.0),
        (vt(0.0), vt(18.0)),
        5,
    )
}

fn run(mode: HeartbeatMode) -> MiniappReport {
    let world = WorldConfig::from_team_shape(2, 2).unwrap();
    let cfg = MiniappConfig {
        iterations: 60,
        work_per_iter: vt(WORK),
        heartbeat_mode: mode,
    };
    let mut sim_cfg = SimConfig::new(world);
    sim_cfg.seed = 23;
    sim_cfg.task_jitter_frac = 0.01;
    let plan = pause_plan(world);
    run_miniapp(&cfg, sim_cfg, &plan).unwrap()
}

fn max_observed(report: &MiniappReport, observer: usize, team: usize, tag: u32) -> f64 {
    report.ranks[observer]
        .replica_series
        .get(&(team, tag))
        .map(|s| s.max_interval())
        .unwrap_or(0.0)
}

fn saw_slow(report: &MiniappReport, observer: usize, team: usize) -> bool {
    report.ranks[observer]
        .status_log
        .iter()
        .any(|c| c.target_team == team && c.health == RankHealth::Slow)
}

#[test]
fn no_faults_keeps_intervals_at_iteration_time() {
    let world = WorldConfig::from_team_shape(2, 2).unwrap();
    let cfg = MiniappConfig {
        iterations: 30,
        work_per_iter: vt(WORK),
        heartbeat_mode: HeartbeatMode::Dual,
    };
    let mut sim_cfg = SimConfig::new(world);
    sim_cfg.task_jitter_frac = 0.01;
    let report = run_miniapp(&cfg, sim_cfg, &[]).unwrap();
    assert!(report.all_finished);
    for view in &report.ranks {
        let s = view.local_series.get(&1).unwrap();
        for dt in &s.intervals {
            assert!(
                (WORK..WORK * 1.05).contains(dt),
                "interval {dt} strayed from the work time"
            );
        }
        assert!(!view.status_log.iter().any(|c| c.health != RankHealth::Healthy));
    }
}

#[test]
fn single_heartbeat_smears_slowdown_over_the_whole_team() {
    let report = run(HeartbeatMode::Single);
    assert!(report.all_finished);
    // world ranks: 0,1 = team 0; 2,3 = team 1; observers judge tag 0
    // both members of team 0 show lengthened iteration intervals
    let lengthened = |observer: usize, team: usize| max_observed(&report, observer, team, 0);
    assert!(lengthened(2, 0) >= WORK + 0.9, "rank 0 iteration not smeared");
    assert!(lengthened(3, 0) >= WORK + 0.9, "rank 1 iteration not smeared");
    // and the observers actually flag the team as slow
    assert!(saw_slow(&report, 2, 0));
    assert!(saw_slow(&report, 3, 0));
    // the healthy team is never flagged by team 0
    assert!(!saw_slow(&report, 0, 1));
    assert!(!saw_slow(&report, 1, 1));
}

#[test]
fn dual_heartbeats_single_out_the_injected_rank() {
    let report = run(HeartbeatMode::Dual);
    assert!(report.all_finished);
    // compute-section intervals: only the injected rank (team 0, rank 0)
    // stretches; its teammate's sections stay at the work time
    assert!(max_observed(&report, 2, 0, 1) >= WORK + 0.9);
    assert!(max_observed(&report, 3, 0, 1) <= WORK * 1.10);
    assert!(saw_slow(&report, 2, 0), "replica of injected rank saw nothing");
    assert!(!saw_slow(&report, 3, 0), "innocent teammate was flagged");
    assert!(!saw_slow(&report, 0, 1));
    assert!(!saw_slow(&report, 1, 1));
    // self-identification: the slow rank's own rows eventually mark it slow
    assert!(report.ranks[0]
        .stats
        .heartbeat_rows
        .iter()
        .any(|row| row.status == RankHealth::Slow));
}

#[test]
fn heartbeat_rows_follow_the_frozen_column_semantics() {
    let report = run(HeartbeatMode::Dual);
    for view in &report.ranks {
        for row in &view.stats.heartbeat_rows {
            assert_eq!(row.team, view.addr.team);
            assert_eq!(row.team_rank, view.addr.team_rank);
            assert_eq!(row.tag, 1);
            assert!(row.interval.secs() > 0.0);
            assert!(row.smoothed > 0.0);
        }
    }
}
