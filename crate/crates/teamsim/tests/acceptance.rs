//! Acceptance suite. One test per criterion; each prints a PASS line with
//! the measured numbers (visible with --nocapture). Tolerances are pinned in
//! the assertions.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use teamsim::cost::speedup_ceiling;
use teamsim::presets::{ExperimentPreset, PresetName};
use teamsim::runner::render_preset;
use teamsim_core::faults::{schedule_injections, startup_delay, FrequencyPolicy, SelectionPolicy};
use teamsim_core::heartbeat::{ConsistencyVerdict, RankHealth};
use teamsim_core::netsim::{FaultEvent, LatencyModel, SimConfig};
use teamsim_core::rng::SplitMix64;
use teamsim_core::time::VirtualTime;
use teamsim_core::topology::{
    map_world_rank, protocol_message_count, replicas_of, ConsistencyProtocol, RankAddress,
    WorldConfig,
};
use teamsim_core::workloads::{
    run_miniapp, run_pingpong, run_solver, HeartbeatMode, MiniappConfig, PingPongConfig,
    SolverConfig, SolverReport,
};

fn vt(s: f64) -> VirtualTime {
    VirtualTime::from_secs(s)
}

/// Criterion 12 helper, applied to every solver run in this suite.
fn assert_memory_bounds(report: &SolverReport, tasks_per_step: u32, window_limit: usize) {
    for view in &report.artifacts.ranks {
        assert!(
            view.db_high_watermark <= 2 * tasks_per_step as usize,
            "rank {}: db high watermark {} exceeds 2x tasks-per-step {}",
            view.addr,
            view.db_high_watermark,
            2 * tasks_per_step
        );
        assert!(
            view.send_window_high_watermark <= window_limit,
            "rank {}: open sends peaked at {} with limit {}",
            view.addr,
            view.send_window_high_watermark,
            window_limit
        );
    }
}

// ---------------------------------------------------------------------
// 1. topology bijection and contiguity
// ---------------------------------------------------------------------

#[test]
fn c01_topology_bijection_and_contiguity() {
    let mut checked = 0;
    for num_teams in [1usize, 2, 3, 4, 5, 7, 8, 10, 16, 25, 50, 100] {
        for team_size in [1usize, 2, 3, 4, 5, 8, 9, 16, 28, 64, 100] {
            if num_teams * team_size > 10_000 {
                continue;
            }
            let cfg = WorldConfig::new(num_teams * team_size, num_teams).unwrap();
            let mut seen = BTreeSet::new();
            for r in 0..cfg.world_size() {
                let a = map_world_rank(r, cfg).unwrap();
                assert!(seen.insert((a.team, a.team_rank)), "duplicate address");
                assert_eq!(a.world_rank, a.team * team_size + a.team_rank, "contiguity");
                assert!(a.team < num_teams && a.team_rank < team_size);
            }
            assert_eq!(seen.len(), cfg.world_size(), "bijection");
            checked += 1;
        }
    }
    // the 8-rank / 2-team fat-tree layout: team 0 = world ranks 0..4
    let cfg = WorldConfig::new(8, 2).unwrap();
    for r in 0..4 {
        assert_eq!(map_world_rank(r, cfg).unwrap().team, 0);
    }
    for r in 4..8 {
        assert_eq!(map_world_rank(r, cfg).unwrap().team, 1);
    }
    let a = map_world_rank(5, cfg).unwrap();
    assert_eq!((a.team, a.team_rank), (1, 1));
    // replica symmetry on the same layout
    for r in 0..8 {
        let addr = map_world_rank(r, cfg).unwrap();
        for rep in replicas_of(addr, cfg).unwrap() {
            assert!(replicas_of(rep, cfg).unwrap().contains(&addr));
        }
    }
    println!("PASS criterion 1: topology bijection/contiguity on {checked} grid points");
}

// ---------------------------------------------------------------------
// 2. protocol accounting
// ---------------------------------------------------------------------

#[test]
fn c02_protocol_message_accounting() {
    let mut rng = SplitMix64::new(0x70726f746f);
    for _ in 0..10_000 {
        let m = rng.next_u64() % 100_000;
        let r = rng.next_u64() % 64;
        let c = rng.next_u64() % 100_000;
        assert_eq!(
            protocol_message_count(m, r, c, ConsistencyProtocol::Mirror),
            m * r * r + c
        );
        assert_eq!(
            protocol_message_count(m, r, c, ConsistencyProtocol::Parallel),
            m * r + c
        );
        if r >= 1 {
            assert!(
                protocol_message_count(m, r, c, ConsistencyProtocol::Mirror)
                    >= protocol_message_count(m, r, c, ConsistencyProtocol::Parallel)
            );
        }
    }
    println!("PASS criterion 2: mirror/parallel accounting on 10000 random triples");
}

// ---------------------------------------------------------------------
// 3. heartbeat detection under escalating delays (scaled)
// ---------------------------------------------------------------------

#[test]
fn c03_heartbeat_detection_variable_delay() {
    let wall = Instant::now();
    let mut p = ExperimentPreset::new(PresetName::VariableDelay);
    p.seed = 7;
    let run = render_preset(&p).unwrap();
    let report = run.solver.as_ref().unwrap();
    assert!(report.artifacts.all_finished);

    // first pause exceeding 0.5 * dt_hb
    let first_big = run
        .plan
        .iter()
        .find_map(|f| match f.kind {
            teamsim_core::netsim::FaultKind::Pause(d) if d.secs() > 0.5 * p.dt_hb => {
                Some(f.at.secs())
            }
            _ => None,
        })
        .expect("plan contains escalating pauses");

    // the injected rank (team 0, rank 0) is classified Slow by its replica
    let t_slow = report
        .artifacts
        .ranks
        .iter()
        .flat_map(|v| v.status_log.iter())
        .filter(|c| c.health == RankHealth::Slow && c.target_team == 0)
        .map(|c| c.time.secs())
        .fold(f64::INFINITY, f64::min);
    assert!(t_slow.is_finite(), "injected rank never classified Slow");

    // within 5 heartbeats of the injected rank after the first big pause
    let injected = &report.artifacts.ranks[0];
    let beats_between = injected
        .stats
        .heartbeat_rows
        .iter()
        .filter(|r| r.tag == 0 && r.time.secs() > first_big && r.time.secs() <= t_slow)
        .count();
    assert!(
        beats_between <= 5,
        "detection took {beats_between} heartbeats after the first >0.5s pause"
    );

    // nobody else is ever classified Slow or Failed
    for view in &report.artifacts.ranks {
        for change in &view.status_log {
            if change.health != RankHealth::Healthy {
                assert_eq!(
                    (view.addr.team, view.addr.team_rank, change.target_team),
                    (1, 0, 0),
                    "spurious verdict {:?} by {} on team {}",
                    change.health,
                    view.addr,
                    change.target_team
                );
            }
        }
    }

    // the delayed team posts strictly more heartbeats by run end
    let beats: Vec<u64> = (0..2)
        .map(|team| {
            report
                .artifacts
                .ranks
                .iter()
                .filter(|v| v.addr.team == team)
                .map(|v| v.stats.heartbeats_emitted)
                .sum()
        })
        .collect();
    assert!(
        beats[0] > beats[1],
        "delayed team emitted {} vs {}",
        beats[0],
        beats[1]
    );

    assert_memory_bounds(report, p.solver.tasks_per_rank_per_step, 16);
    let elapsed = wall.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 3 run took {elapsed:.2}s");
    println!(
        "PASS criterion 3: Slow at t={t_slow:.2} ({beats_between} beats after first big pause), \
         heartbeats {}>{} ({elapsed:.2}s wall)",
        beats[0], beats[1]
    );
}

// ---------------------------------------------------------------------
// 4. divergence persistence / decay (scaled)
// ---------------------------------------------------------------------

#[test]
fn c04_divergence_persistence_and_decay() {
    for seed in [1u64, 2, 3, 4, 5] {
        let wall = Instant::now();
        let mut p = ExperimentPreset::new(PresetName::Divergence);
        p.seed = seed;

        p.sharing = false;
        let off = render_preset(&p).unwrap();
        let delay = off.summary.applied_startup_delay.unwrap();
        assert!((4.5..=6.5).contains(&delay), "delay {delay} out of window");
        let d_off = &off.solver.as_ref().unwrap().divergence;
        for (i, d) in d_off.iter().enumerate().skip(5) {
            assert!(
                (d - delay).abs() <= 0.10 * delay,
                "seed {seed}: sharing off, step {i}: d_i={d} vs delay {delay}"
            );
        }

        p.sharing = true;
        let on = render_preset(&p).unwrap();
        let report = on.solver.as_ref().unwrap();
        let d_on = &report.divergence;
        let step_time = p.solver.step_time();
        let below = d_on
            .iter()
            .position(|&d| d < step_time)
            .expect("divergence never fell below one step time");
        assert!(below <= 30, "seed {seed}: caught up only at step {below}");
        let first_reuse = report
            .step_rows
            .iter()
            .filter(|r| r.team == 0 && r.reused > 0)
            .map(|r| r.step)
            .min()
            .expect("delayed team reused nothing") as usize;
        for i in first_reuse..d_on.len() - 1 {
            assert!(
                d_on[i + 1] <= d_on[i] + 0.05 * delay,
                "seed {seed}: divergence rose at step {i}: {} -> {}",
                d_on[i],
                d_on[i + 1]
            );
        }
        assert_memory_bounds(report, p.solver.tasks_per_rank_per_step, 16);
        let elapsed = wall.elapsed().as_secs_f64();
        assert!(elapsed < 10.0, "seed {seed} took {elapsed:.2}s");
        println!(
            "PASS criterion 4 (seed {seed}): delay {delay:.2}s persists (off) and decays below \
             {step_time:.2}s at step {below} (on), {elapsed:.2}s wall"
        );
    }
}

// ---------------------------------------------------------------------
// 5. reuse crossover
// ---------------------------------------------------------------------

#[test]
fn c05_reuse_crossover() {
    let mut p = ExperimentPreset::new(PresetName::SavedTasks);
    p.seed = 2;
    let run = render_preset(&p).unwrap();
    let report = run.solver.as_ref().unwrap();
    let steps = p.solver.steps;
    let per_step_total = (p.solver.tasks_per_rank_per_step as u64) * p.ranks_per_team as u64;
    let reuse_of = |team: usize| -> Vec<u64> {
        (0..steps)
            .map(|s| {
                report
                    .step_rows
                    .iter()
                    .find(|r| r.step == s && r.team == team)
                    .map(|r| r.reused)
                    .unwrap_or(0)
            })
            .collect()
    };
    let delayed = reuse_of(0);
    let steady = per_step_total / 2;
    let caught_up = delayed
        .iter()
        .position(|&x| x <= steady)
        .expect("delayed team never came down to the steady split");
    for i in caught_up..(steps as usize - 1) {
        assert!(
            delayed[i + 1] <= delayed[i] + per_step_total / 20,
            "delayed team reuse increased after catch-up at step {i}: {} -> {}",
            delayed[i],
            delayed[i + 1]
        );
    }
    for team in 0..2 {
        let series = reuse_of(team);
        let tail = &series[(steps as usize - 20)..];
        let avg = tail.iter().sum::<u64>() as f64 / tail.len() as f64;
        let frac = avg / per_step_total as f64;
        assert!(
            (frac - 0.5).abs() <= 0.10,
            "team {team} settled at reuse fraction {frac:.3}"
        );
    }
    println!(
        "PASS criterion 5: crossover at step {caught_up}, both teams at 50%±10% over last 20 steps"
    );
}

// ---------------------------------------------------------------------
// 6. ideal reuse law: oracle (independent enumeration) == engine
// ---------------------------------------------------------------------

mod reuse_oracle {
    use std::collections::BTreeSet;

    fn order(n: usize, team: usize, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for c in 0..k {
            let class = (team + c) % k;
            out.extend((0..n).filter(|i| i % k == class));
        }
        out
    }

    #[derive(Clone, PartialEq, Eq, Debug)]
    struct Team {
        order: Vec<usize>,
        pos: usize,
        db: BTreeSet<usize>,
        computing: Option<usize>,
        computed: usize,
        reused: usize,
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        fn go(rest: Vec<usize>, acc: Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest.is_empty() {
                out.push(acc);
                return;
            }
            for i in 0..rest.len() {
                let mut r = rest.clone();
                let x = r.remove(i);
                let mut a = acc.clone();
                a.push(x);
                go(r, a, out);
            }
        }
        let mut out = Vec::new();
        go((0..k).collect(), Vec::new(), &mut out);
        out
    }

    fn advance(state: &[Team], completions: &[usize], advances: &[usize]) -> Vec<Team> {
        let mut next = state.to_vec();
        for &t in completions {
            if let Some(task) = next[t].computing.take() {
                next[t].computed += 1;
                for o in 0..next.len() {
                    if o != t {
                        next[o].db.insert(task);
                    }
                }
            }
        }
        for &t in advances {
            while next[t].pos < next[t].order.len() {
                let task = next[t].order[next[t].pos];
                if next[t].db.remove(&task) {
                    next[t].reused += 1;
                    next[t].pos += 1;
                } else {
                    next[t].computing = Some(task);
                    next[t].pos += 1;
                    break;
                }
            }
        }
        next
    }

    /// Per-team (computed, reused) after enumerating all per-boundary
    /// interleavings and asserting they agree.
    pub fn counts(n: usize, k: usize) -> Vec<(usize, usize)> {
        let perms = permutations(k);
        let mut state: Vec<Team> = (0..k)
            .map(|t| Team {
                order: order(n, t, k),
                pos: 0,
                db: BTreeSet::new(),
                computing: None,
                computed: 0,
                reused: 0,
            })
            .collect();
        let mut guard = 0;
        while !state
            .iter()
            .all(|t| t.pos == t.order.len() && t.computing.is_none())
        {
            let canonical = advance(&state, &perms[0], &perms[0]);
            for pc in &perms {
                for pa in &perms {
                    assert_eq!(
                        advance(&state, pc, pa),
                        canonical,
                        "interleaving changed the outcome (n={n}, k={k})"
                    );
                }
            }
            state = canonical;
            guard += 1;
            assert!(guard <= 4 * n + 4);
        }
        state.iter().map(|t| (t.computed, t.reused)).collect()
    }
}

#[test]
fn c06_ideal_reuse_law_oracle_equals_engine() {
    for k in [2usize, 3] {
        for n in (k..=12).step_by(k) {
            // oracle first: exact (K-1)/K reuse fraction
            let oracle = reuse_oracle::counts(n, k);
            for (team, (computed, reused)) in oracle.iter().enumerate() {
                assert_eq!(*computed, n / k, "oracle n={n} k={k} team={team}");
                assert_eq!(*reused, n - n / k);
            }
            // engine under the law's preconditions: zero latency,
            // synchronized teams, one task at a time per rank
            let world = WorldConfig::new(k, k).unwrap();
            let mut sim_cfg = SimConfig::new(world);
            sim_cfg.latency = LatencyModel::new(0.0, 1e30);
            sim_cfg.sharing = true;
            sim_cfg.task_jitter_frac = 0.0;
            let cfg = SolverConfig {
                steps: 3,
                tasks_per_rank_per_step: n as u32,
                shareable_cost: vt(1.0),
                nonshareable_cost: vt(0.0),
                outcome_size: 8,
                ..SolverConfig::default()
            };
            let report = run_solver(&cfg, sim_cfg, &[]).unwrap();
            assert!(report.artifacts.all_finished);
            for row in &report.step_rows {
                assert_eq!(
                    (row.computed as usize, row.reused as usize),
                    oracle[row.team],
                    "engine diverged from oracle at n={n} k={k} step={} team={}",
                    row.step,
                    row.team
                );
            }
            let frac = (n - n / k) as f64 / n as f64;
            assert!((frac - (k as f64 - 1.0) / k as f64).abs() < 1e-12);
        }
    }
    println!("PASS criterion 6: oracle == engine, reuse fraction exactly (K-1)/K");
}

// ---------------------------------------------------------------------
// 7. cost law
// ---------------------------------------------------------------------

#[test]
fn c07_cost_law_and_speedup_ceiling() {
    let n = 60u32; // divisible by 2 and 3
    let d = 0.05;
    for k in [2usize, 3] {
        for f in [0.5f64, 0.8, 0.95] {
            let ns = n as f64 * d * (1.0 - f) / f;
            let cfg = SolverConfig {
                steps: 6,
                tasks_per_rank_per_step: n,
                shareable_cost: vt(d),
                nonshareable_cost: vt(ns),
                outcome_size: 32,
                ..SolverConfig::default()
            };
            let run = |teams: usize, sharing: bool| -> SolverReport {
                let world = WorldConfig::from_team_shape(2, teams).unwrap();
                let mut sim_cfg = SimConfig::new(world);
                sim_cfg.latency = LatencyModel::new(1e-6, 1e9); // cheap comm
                sim_cfg.sharing = sharing;
                sim_cfg.seed = 31;
                run_solver(&cfg, sim_cfg, &[]).unwrap()
            };
            let baseline = run(1, false);
            let shared = run(k, true);
            assert_memory_bounds(&shared, n, 16);
            let expected =
                baseline.team_compute_cost[0] * (1.0 - f * (k as f64 - 1.0) / k as f64);
            for t in 0..k {
                let got = shared.team_compute_cost[t];
                let rel = (got - expected).abs() / expected;
                assert!(
                    rel <= 0.10,
                    "K={k} f={f}: team {t} cost {got:.3} vs {expected:.3} (rel {rel:.3})"
                );
            }
            let wall_base = baseline.team_finish[0].secs();
            let wall_shared = shared
                .team_finish
                .iter()
                .map(|t| t.secs())
                .fold(0.0, f64::max);
            let speedup = wall_base / wall_shared;
            let ceiling = speedup_ceiling(f, k);
            assert!(
                speedup <= ceiling + 1e-9,
                "K={k} f={f}: speedup {speedup:.3} above ceiling {ceiling:.3}"
            );
        }
    }
    println!("PASS criterion 7: per-team cost within 10% of baseline*(1-f(K-1)/K), speedup under ceiling");
}

// ---------------------------------------------------------------------
// 8. breakdown under transfer latency
// ---------------------------------------------------------------------

#[test]
fn c08_breakdown_under_transfer_latency() {
    let mut p = ExperimentPreset::new(PresetName::Scaling);
    p.seed = 5;
    let run = render_preset(&p).unwrap();
    let sweep = &run.sweep;
    assert!(sweep.len() >= 8);
    let d = p.solver.shareable_cost;
    assert!((sweep.first().unwrap().transfer_latency - 0.01 * d).abs() < 1e-12);
    assert!((sweep.last().unwrap().transfer_latency - 100.0 * d).abs() < 1e-12);
    for w in sweep.windows(2) {
        assert!(
            w[1].reuse_fraction <= w[0].reuse_fraction + 1e-12,
            "reuse fraction rose with latency: {} -> {}",
            w[0].reuse_fraction,
            w[1].reuse_fraction
        );
    }
    let top = sweep.last().unwrap();
    assert!(top.reuse_fraction < 0.05, "top reuse {}", top.reuse_fraction);
    assert!(
        (top.speedup - 1.0).abs() <= 0.05,
        "top speedup {}",
        top.speedup
    );
    assert_memory_bounds(
        run.solver.as_ref().unwrap(),
        p.solver.tasks_per_rank_per_step,
        16,
    );
    println!(
        "PASS criterion 8: reuse monotone {:.3} -> {:.3}, top speedup {:.3}",
        sweep.first().unwrap().reuse_fraction,
        top.reuse_fraction,
        top.speedup
    );
}

// ---------------------------------------------------------------------
// 9. output determinism and non-interference
// ---------------------------------------------------------------------

#[test]
fn c09a_identical_preset_and_seed_give_identical_bytes() {
    let mut p = ExperimentPreset::new(PresetName::Divergence);
    p.seed = 7;
    p.trace = true;
    let a = render_preset(&p).unwrap();
    let b = render_preset(&p).unwrap();
    assert_eq!(a.files.keys().collect::<Vec<_>>(), b.files.keys().collect::<Vec<_>>());
    for (name, content) in &a.files {
        assert_eq!(content, &b.files[name], "{name} differs between runs");
    }
    // and they survive a disk round trip
    let dir = tempfile::tempdir().unwrap();
    teamsim::runner::run_preset(&p, dir.path()).unwrap();
    for (name, content) in &a.files {
        let on_disk = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(&on_disk, content, "{name} differs on disk");
    }
    println!(
        "PASS criterion 9a: byte-identical outputs over {} files",
        a.files.len()
    );
}

#[test]
fn c09b_solver_outputs_bit_identical_across_configs() {
    let cfg = SolverConfig {
        steps: 5,
        tasks_per_rank_per_step: 8,
        shareable_cost: vt(0.01),
        nonshareable_cost: vt(0.02),
        outcome_size: 48,
        ..SolverConfig::default()
    };
    let world2 = WorldConfig::from_team_shape(4, 2).unwrap();
    let pause_plan = schedule_injections(
        &SelectionPolicy::Constant(RankAddress::from_parts(0, 2, world2).unwrap()),
        &FrequencyPolicy::Constant(vt(0.1)),
        vt(0.05),
        (vt(0.0), vt(0.4)),
        3,
    );
    let run = |teams: usize, sharing: bool, plan: &[FaultEvent]| -> SolverReport {
        let world = WorldConfig::from_team_shape(4, teams).unwrap();
        let mut sim_cfg = SimConfig::new(world);
        sim_cfg.sharing = sharing;
        sim_cfg.seed = 9;
        sim_cfg.task_jitter_frac = 0.02;
        run_solver(&cfg, sim_cfg, plan).unwrap()
    };
    let reference = run(1, false, &[]).final_outputs[0].clone();
    assert!(!reference.is_empty());
    let mut variants = 0;
    for (teams, sharing) in [(1, false), (2, false), (2, true), (3, true)] {
        let r = run(teams, sharing, &[]);
        for t in 0..teams {
            assert_eq!(r.final_outputs[t], reference, "K={teams} sharing={sharing} team {t}");
            variants += 1;
        }
    }
    let mut with_startup = pause_plan.clone();
    with_startup.push(startup_delay(1, vt(0.2), vt(0.3), 4, world2));
    let r = run(2, true, &with_startup);
    for t in 0..2 {
        assert_eq!(r.final_outputs[t], reference, "pause plan team {t}");
        variants += 1;
    }
    println!("PASS criterion 9b: solver outcomes bit-identical over {variants} team instances");
}

#[test]
fn c09c_pingpong_channel_accounting() {
    let cfg = PingPongConfig {
        n_min: 1,
        n_max: 256,
        i_max: 30,
        trials: 3,
    };
    let run = |teams: usize| {
        let world = WorldConfig::from_team_shape(2, teams).unwrap();
        let mut sim_cfg = SimConfig::new(world);
        sim_cfg.seed = 11;
        run_pingpong(&cfg, sim_cfg).unwrap()
    };
    let one = run(1);
    let three = run(3);
    let c1 = &one.artifacts.counters;
    let c3 = &three.artifacts.counters;
    // inter-replica traffic is heartbeat messages only
    assert_eq!(c3.sent_task_share, 0);
    assert!(c3.sent_heartbeat > 0);
    // per-team intra-team counts equal the K=1 baseline
    for team in 0..3 {
        assert_eq!(c3.intra_team_per_team[team], c1.sent_intra_team);
    }
    assert_eq!(c3.sent_intra_team, 3 * c1.sent_intra_team);
    // and per-team bandwidth is bit-identical to the baseline
    for tb in &three.per_team {
        for (a, b) in tb.points.iter().zip(&one.per_team[0].points) {
            assert_eq!(a.bandwidth_bytes_per_sec.to_bits(), b.bandwidth_bytes_per_sec.to_bits());
        }
    }
    println!("PASS criterion 9c: inter-replica = heartbeats only; intra-team scales by K exactly");
}

// ---------------------------------------------------------------------
// 10. single vs dual heartbeat isolation
// ---------------------------------------------------------------------

#[test]
fn c10_single_vs_dual_heartbeat_isolation() {
    let world = WorldConfig::from_team_shape(2, 2).unwrap();
    let work = 0.4;
    let plan = schedule_injections(
        &SelectionPolicy::Constant(RankAddress::from_parts(0, 0, world).unwrap()),
        &FrequencyPolicy::Constant(vt(5.0)),
        vt(1.0),
        (vt(0.0), vt(18.0)),
        5,
    );
    let run = |mode: HeartbeatMode| {
        let cfg = MiniappConfig {
            iterations: 60,
            work_per_iter: vt(work),
            heartbeat_mode: mode,
        };
        let mut sim_cfg = SimConfig::new(world);
        sim_cfg.seed = 23;
        sim_cfg.task_jitter_frac = 0.01;
        run_miniapp(&cfg, sim_cfg, &plan).unwrap()
    };

    // Single: the whole team is smeared - both ranks of team 0 lengthened
    let single = run(HeartbeatMode::Single);
    let mut lengthened = 0;
    for observer in [2usize, 3] {
        let max = single.ranks[observer]
            .replica_series
            .get(&(0, 0))
            .map(|s| s.max_interval())
            .unwrap_or(0.0);
        if max >= work + 0.9 {
            lengthened += 1;
        }
    }
    assert!(lengthened >= 2, "single mode flagged only {lengthened} ranks");

    // Dual: exactly the injected rank
    let dual = run(HeartbeatMode::Dual);
    let slow_targets: BTreeSet<(usize, usize)> = dual
        .ranks
        .iter()
        .flat_map(|v| {
            v.status_log
                .iter()
                .filter(|c| c.health == RankHealth::Slow)
                .map(move |c| (c.target_team, v.addr.team_rank))
        })
        .collect();
    assert_eq!(
        slow_targets,
        BTreeSet::from([(0usize, 0usize)]),
        "dual mode must flag exactly team 0 rank 0"
    );
    let teammate_max = dual.ranks[3]
        .replica_series
        .get(&(0, 1))
        .map(|s| s.max_interval())
        .unwrap_or(0.0);
    assert!(
        teammate_max <= work * 1.10,
        "teammate compute sections lengthened: {teammate_max}"
    );
    println!("PASS criterion 10: single mode smears the team, dual mode isolates the rank");
}

// ---------------------------------------------------------------------
// 11. consistency voting
// ---------------------------------------------------------------------

#[test]
fn c11_consistency_voting() {
    let base_cfg = |corrupt| SolverConfig {
        steps: 3,
        tasks_per_rank_per_step: 6,
        shareable_cost: vt(0.01),
        nonshareable_cost: vt(0.01),
        outcome_size: 16,
        consistency_buffers: true,
        corrupt,
        ..SolverConfig::default()
    };
    let run = |teams: usize, corrupt| {
        let world = WorldConfig::from_team_shape(2, teams).unwrap();
        let mut sim_cfg = SimConfig::new(world);
        sim_cfg.sharing = false;
        sim_cfg.seed = 77;
        run_solver(&base_cfg(corrupt), sim_cfg, &[]).unwrap()
    };
    let mismatches = |r: &SolverReport| -> Vec<ConsistencyVerdict> {
        r.artifacts
            .ranks
            .iter()
            .flat_map(|v| v.vote_log.iter())
            .filter(|v| v.verdict != ConsistencyVerdict::Consistent)
            .map(|v| v.verdict.clone())
            .collect()
    };

    // clean runs: no false positives, every vote consistent
    for teams in [2usize, 3] {
        let r = run(teams, None);
        assert!(mismatches(&r).is_empty(), "false positive with K={teams}");
        assert!(r
            .artifacts
            .ranks
            .iter()
            .any(|v| !v.vote_log.is_empty()));
    }

    // K=2: detection without attribution
    let mut rng = SplitMix64::new(0xc11);
    for _ in 0..20 {
        let team = rng.below(2);
        let spec = teamsim_core::workloads::CorruptSpec {
            team,
            team_rank: rng.below(2),
            step: 1,
            bit: (rng.next_u64() % 64) as u32,
        };
        let r = run(2, Some(spec));
        let found = mismatches(&r);
        assert!(!found.is_empty(), "K=2 corruption went unnoticed");
        assert!(found
            .iter()
            .all(|v| *v == ConsistencyVerdict::DetectedUnknownTeam));
    }

    // K=3: majority vote names the corrupted team, 100/100 seeded trials
    for trial in 0..100u64 {
        let mut trial_rng = SplitMix64::new(trial.wrapping_mul(0x9e3779b9) + 1);
        let team = trial_rng.below(3);
        let spec = teamsim_core::workloads::CorruptSpec {
            team,
            team_rank: trial_rng.below(2),
            step: (trial % 3) as u64,
            bit: (trial_rng.next_u64() % 64) as u32,
        };
        let r = run(3, Some(spec));
        let found = mismatches(&r);
        assert!(!found.is_empty(), "trial {trial}: corruption went unnoticed");
        for v in &found {
            assert_eq!(
                *v,
                ConsistencyVerdict::Faulty { teams: vec![team] },
                "trial {trial}: wrong attribution"
            );
        }
    }
    println!("PASS criterion 11: K=2 detects, K=3 attributes 100/100, clean runs silent");
}

// ---------------------------------------------------------------------
// 12. memory bound (also enforced inside criteria 3, 4, 7, 8)
// ---------------------------------------------------------------------

#[test]
fn c12_memory_bound_on_heaviest_runs() {
    // the startup-delay catch-up run is where the database peaks
    let mut p = ExperimentPreset::new(PresetName::Divergence);
    for seed in [1u64, 5] {
        p.seed = seed;
        p.sharing = true;
        let run = render_preset(&p).unwrap();
        let report = run.solver.as_ref().unwrap();
        assert_memory_bounds(report, p.solver.tasks_per_rank_per_step, 16);
        let peak = report
            .artifacts
            .ranks
            .iter()
            .map(|v| v.db_high_watermark)
            .max()
            .unwrap();
        println!(
            "PASS criterion 12 (seed {seed}): db peak {peak} <= {}, window peak <= 16",
            2 * p.solver.tasks_per_rank_per_step
        );
    }
}
