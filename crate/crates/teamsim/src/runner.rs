//! Executes presets deterministically and renders their output files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use teamsim_core::faults::{
    escalating_delay_plan, schedule_injections, startup_delay, EscalatingDelayPlan,
    FrequencyPolicy, SelectionPolicy,
};
use teamsim_core::heartbeat::{ClassifyParams, ConsistencyVerdict};
use teamsim_core::metrics::HeartbeatRow;
use teamsim_core::netsim::{FaultEvent, FaultKind, LatencyModel, SimConfig};
use teamsim_core::time::VirtualTime;
use teamsim_core::topology::{RankAddress, WorldConfig};
use teamsim_core::workloads::{
    run_miniapp, run_pingpong, run_solver, HeartbeatMode, MiniappConfig, MiniappReport,
    PingPongConfig, RunArtifacts, SolverConfig, SolverReport, WorkloadError,
};

use crate::cost::{compute_speedup, CostReport, TeamCost};
use crate::output::{
    heartbeat_csv, plan_json, steps_csv, summary_json, trace_jsonl, BandwidthJson, DetectionJson,
    Summary, SweepPointJson, TotalsJson, VerdictJson,
};
use crate::presets::{ExperimentPreset, PresetName};

#[derive(Debug)]
pub enum HarnessError {
    Config { code: &'static str, msg: String },
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config { code, msg } => {
                write!(f, "error code={code} msg={msg:?}")
            }
            HarnessError::Io(e) => write!(f, "error code=io msg={:?}", e.to_string()),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

fn config_err(code: &'static str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        code,
        msg: msg.into(),
    }
}

fn from_workload(e: WorkloadError) -> HarnessError {
    config_err("workload", e.to_string())
}

/// Everything a preset run produced, with the output files rendered to bytes
/// before anything touches the filesystem.
pub struct RenderedRun {
    pub files: BTreeMap<String, String>,
    pub summary: Summary,
    pub cost: CostReport,
    pub plan: Vec<FaultEvent>,
    pub solver: Option<SolverReport>,
    pub baseline_solver: Option<SolverReport>,
    pub miniapp_cells: Vec<(String, MiniappReport)>,
    pub sweep: Vec<SweepPointJson>,
}

fn world_for(p: &ExperimentPreset) -> Result<WorldConfig, HarnessError> {
    WorldConfig::from_team_shape(p.ranks_per_team, p.teams)
        .map_err(|e| config_err("topology", e.to_string()))
}

fn sim_config(
    p: &ExperimentPreset,
    world: WorldConfig,
    periodic_hb: bool,
    sharing: bool,
) -> SimConfig {
    let mut cfg = SimConfig::new(world);
    cfg.latency = LatencyModel::new(p.alpha, p.beta);
    cfg.seed = p.seed;
    cfg.dt_hb = periodic_hb.then(|| VirtualTime::from_secs(p.dt_hb));
    cfg.classify = ClassifyParams {
        alpha: p.hb_alpha,
        tol: p.hb_tol,
        timeout_mult: p.hb_timeout_mult,
    };
    cfg.task_jitter_frac = p.solver.task_jitter_frac;
    cfg.sharing = sharing;
    cfg.trace_enabled = p.trace;
    cfg
}

fn solver_config(p: &ExperimentPreset, steps: u64) -> SolverConfig {
    SolverConfig {
        steps,
        tasks_per_rank_per_step: p.solver.tasks_per_rank_per_step,
        shareable_cost: VirtualTime::from_secs(p.solver.shareable_cost),
        nonshareable_cost: VirtualTime::from_secs(p.solver.nonshareable_cost),
        outcome_size: p.solver.outcome_size,
        ..SolverConfig::default()
    }
}

fn merged_heartbeat_rows(artifacts: &RunArtifacts) -> Vec<HeartbeatRow> {
    let mut rows: Vec<HeartbeatRow> = artifacts
        .ranks
        .iter()
        .flat_map(|r| r.stats.heartbeat_rows.iter().cloned())
        .collect();
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    rows
}

fn detections_of(artifacts: &RunArtifacts) -> Vec<DetectionJson> {
    let mut out = Vec::new();
    for view in &artifacts.ranks {
        for change in &view.status_log {
            out.push(DetectionJson {
                time: change.time.secs(),
                observer_team: view.addr.team,
                observer_team_rank: view.addr.team_rank,
                target_team: change.target_team,
                tag: change.tag_abs,
                health: change.health.to_string(),
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

fn verdicts_of(artifacts: &RunArtifacts) -> Vec<VerdictJson> {
    let mut out = Vec::new();
    for view in &artifacts.ranks {
        for v in &view.vote_log {
            let verdict = match &v.verdict {
                ConsistencyVerdict::Consistent => continue, // log mismatches only
                ConsistencyVerdict::DetectedUnknownTeam => "detected_unknown_team".to_string(),
                ConsistencyVerdict::Faulty { teams } => format!(
                    "faulty_team_{}",
                    teams
                        .iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join("_")
                ),
                ConsistencyVerdict::Unresolvable => "unresolvable".to_string(),
            };
            out.push(VerdictJson {
                time: v.time.secs(),
                team_rank: view.addr.team_rank,
                tag: v.tag_abs,
                seq: v.seq,
                verdict,
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

fn totals_of(artifacts: &RunArtifacts) -> TotalsJson {
    let c = &artifacts.counters;
    let mut computed = 0;
    let mut reused = 0;
    let mut suppressed = 0;
    let mut heartbeats = 0;
    let mut db_peak = 0;
    let mut window_peak = 0;
    let mut protocol_errors = 0;
    for r in &artifacts.ranks {
        heartbeats += r.stats.heartbeats_emitted;
        protocol_errors += r.protocol_errors;
        db_peak = db_peak.max(r.db_high_watermark);
        window_peak = window_peak.max(r.send_window_high_watermark);
        for s in r.stats.per_step.values() {
            computed += s.computed;
            reused += s.reused;
            suppressed += s.suppressed_shares;
        }
    }
    TotalsJson {
        heartbeats_emitted: heartbeats,
        messages_intra_team: c.sent_intra_team,
        messages_heartbeat: c.sent_heartbeat,
        messages_task_share: c.sent_task_share,
        tasks_computed: computed,
        tasks_reused: reused,
        shares_suppressed: suppressed,
        db_high_watermark: db_peak,
        send_window_high_watermark: window_peak,
        protocol_errors,
    }
}

fn solver_cost(
    p: &ExperimentPreset,
    fingerprint: &str,
    report: &SolverReport,
    teams: usize,
    fair: bool,
) -> CostReport {
    let share_msg_size = p.solver.outcome_size as u64 + 24;
    let per_team: Vec<TeamCost> = (0..teams)
        .map(|t| {
            let mut reused = 0;
            let mut computed = 0;
            let mut shares = 0;
            for view in report.artifacts.ranks.iter().filter(|v| v.addr.team == t) {
                shares += view.stats.shares_sent;
                for s in view.stats.per_step.values() {
                    reused += s.reused;
                    computed += s.computed;
                }
            }
            TeamCost {
                team: t,
                compute_cpu_s: report.team_compute_cost[t],
                reused,
                computed,
                shared_bytes: shares * (teams as u64 - 1) * share_msg_size,
            }
        })
        .collect();
    let wall = report
        .team_finish
        .iter()
        .map(|t| t.secs())
        .fold(0.0, f64::max);
    CostReport::new(
        fingerprint,
        p.scale,
        per_team,
        wall,
        fair,
        p.teams * p.ranks_per_team,
    )
}

fn base_summary(p: &ExperimentPreset, artifacts: &RunArtifacts, cost: CostReport) -> Summary {
    Summary {
        schema: 1,
        preset: p.name.to_string(),
        seed: p.seed,
        scale: p.scale,
        teams: p.teams,
        ranks_per_team: p.ranks_per_team,
        sharing: p.sharing,
        end_time: artifacts.end_time.secs(),
        all_finished: artifacts.all_finished,
        totals: totals_of(artifacts),
        cost,
        baseline_cost: None,
        speedup_vs_baseline: None,
        reuse_fraction_per_team: None,
        divergence: None,
        applied_startup_delay: None,
        first_slow_detection: None,
        detections: detections_of(artifacts),
        consistency_verdicts: verdicts_of(artifacts),
        bandwidth: None,
        sweep: None,
    }
}

fn solver_fingerprint(p: &ExperimentPreset, steps: u64) -> String {
    format!(
        "solver/steps={steps}/n={}/d={}/ns={}/ranks={}",
        p.solver.tasks_per_rank_per_step,
        p.solver.shareable_cost,
        p.solver.nonshareable_cost,
        p.ranks_per_team
    )
}

/// Run the single-team, sharing-off reference of a solver preset.
fn solver_baseline(p: &ExperimentPreset, steps: u64) -> Result<SolverReport, HarnessError> {
    let world = WorldConfig::from_team_shape(p.ranks_per_team, 1)
        .map_err(|e| config_err("topology", e.to_string()))?;
    let mut base = p.clone();
    base.teams = 1;
    let cfg = sim_config(&base, world, false, false);
    run_solver(&solver_config(p, steps), cfg, &[]).map_err(from_workload)
}

fn render_solver_preset(
    p: &ExperimentPreset,
    steps: u64,
    periodic_hb: bool,
    plan: Vec<FaultEvent>,
    with_baseline: bool,
    solver_cfg: SolverConfig,
) -> Result<RenderedRun, HarnessError> {
    let world = world_for(p)?;
    let sim_cfg = sim_config(p, world, periodic_hb, p.sharing);
    let report = run_solver(&solver_cfg, sim_cfg, &plan).map_err(from_workload)?;
    let fingerprint = solver_fingerprint(p, steps);
    let mut cost = solver_cost(p, &fingerprint, &report, p.teams, p.fair_baseline);

    let mut baseline = None;
    let mut speedup = None;
    if with_baseline {
        let base = solver_baseline(p, steps)?;
        let base_cost = solver_cost(p, &fingerprint, &base, 1, false);
        cost.normalize_against(&base_cost);
        speedup = compute_speedup(&cost, &base_cost).ok();
        baseline = Some((base, base_cost));
    }

    let mut summary = base_summary(p, &report.artifacts, cost.clone());
    summary.divergence = Some(report.divergence.clone());
    summary.reuse_fraction_per_team = Some(report.reuse_fraction.clone());
    summary.speedup_vs_baseline = speedup;
    summary.baseline_cost = baseline.as_ref().map(|(_, c)| c.clone());
    summary.first_slow_detection = summary
        .detections
        .iter()
        .find(|d| d.health == "slow")
        .cloned();
    if let Some(FaultKind::Pause(d)) = plan.first().map(|f| f.kind) {
        summary.applied_startup_delay = Some(d.secs());
    }

    let mut files = BTreeMap::new();
    files.insert(
        "metrics.csv".to_string(),
        heartbeat_csv(&merged_heartbeat_rows(&report.artifacts)),
    );
    files.insert("steps.csv".to_string(), steps_csv(&report.step_rows));
    files.insert("plan.json".to_string(), plan_json(&plan));
    files.insert("summary.json".to_string(), summary_json(&summary));
    if p.trace {
        files.insert(
            "trace.jsonl".to_string(),
            trace_jsonl(&report.artifacts.trace),
        );
    }
    Ok(RenderedRun {
        files,
        summary,
        cost,
        plan,
        solver: Some(report),
        baseline_solver: baseline.map(|(b, _)| b),
        miniapp_cells: Vec::new(),
        sweep: Vec::new(),
    })
}

fn render_pingpong(p: &ExperimentPreset) -> Result<RenderedRun, HarnessError> {
    let world = world_for(p)?;
    let cfg = PingPongConfig {
        n_min: p.pingpong.n_min,
        n_max: p.pingpong.n_max,
        i_max: p.pingpong.i_max,
        trials: p.pingpong.trials,
    };
    let report = run_pingpong(&cfg, sim_config(p, world, false, false)).map_err(from_workload)?;
    let wall = report.artifacts.end_time.secs();
    let cost = CostReport::new(
        format!("pingpong/i_max={}/trials={}", cfg.i_max, cfg.trials),
        p.scale,
        (0..p.teams)
            .map(|t| TeamCost {
                team: t,
                compute_cpu_s: 0.0,
                reused: 0,
                computed: 0,
                shared_bytes: 0,
            })
            .collect(),
        wall,
        p.fair_baseline,
        p.teams * p.ranks_per_team,
    );
    let mut summary = base_summary(p, &report.artifacts, cost.clone());
    summary.bandwidth = Some(
        report
            .per_team
            .iter()
            .flat_map(|tb| {
                tb.points.iter().map(|pt| BandwidthJson {
                    team: tb.team,
                    size_bytes: pt.size_bytes,
                    bandwidth_bytes_per_sec: pt.bandwidth_bytes_per_sec,
                    message_rate_per_sec: pt.message_rate_per_sec,
                })
            })
            .collect(),
    );
    let mut files = BTreeMap::new();
    files.insert(
        "metrics.csv".to_string(),
        heartbeat_csv(&merged_heartbeat_rows(&report.artifacts)),
    );
    files.insert("plan.json".to_string(), plan_json(&[]));
    files.insert("summary.json".to_string(), summary_json(&summary));
    if p.trace {
        files.insert(
            "trace.jsonl".to_string(),
            trace_jsonl(&report.artifacts.trace),
        );
    }
    Ok(RenderedRun {
        files,
        summary,
        cost,
        plan: Vec::new(),
        solver: None,
        baseline_solver: None,
        miniapp_cells: Vec::new(),
        sweep: Vec::new(),
    })
}

/// The 3x3 selection x frequency grid of sleep injections on the miniapp.
fn render_miniapp_grid(p: &ExperimentPreset) -> Result<RenderedRun, HarnessError> {
    let world = world_for(p)?;
    let mode = match p.miniapp.heartbeat_mode.as_str() {
        "single" => HeartbeatMode::Single,
        "dual" => HeartbeatMode::Dual,
        other => return Err(config_err("miniapp", format!("unknown heartbeat mode '{other}'"))),
    };
    let cfg = MiniappConfig {
        iterations: p.miniapp.iterations,
        work_per_iter: VirtualTime::from_secs(p.miniapp.work_per_iter),
        heartbeat_mode: mode,
    };
    let all_ranks: Vec<RankAddress> = world.addresses().collect();
    let span = p.miniapp.iterations as f64 * p.miniapp.work_per_iter * 0.75;
    let window = (VirtualTime::ZERO, VirtualTime::from_secs(span));
    let every = VirtualTime::from_secs(p.miniapp.sleep_every);
    let pause = VirtualTime::from_secs(p.miniapp.sleep);
    let selections: Vec<(&str, SelectionPolicy)> = vec![
        ("constant", SelectionPolicy::Constant(all_ranks[0])),
        ("round_robin", SelectionPolicy::RoundRobin(all_ranks.clone())),
        ("random", SelectionPolicy::Random(all_ranks.clone())),
    ];
    let frequencies: Vec<(&str, FrequencyPolicy)> = vec![
        ("constant", FrequencyPolicy::Constant(every)),
        ("decreasing", FrequencyPolicy::decreasing(every * 1.6, 0.5)),
        (
            "random",
            FrequencyPolicy::Random {
                lo: every * 0.5,
                hi: every * 1.5,
            },
        ),
    ];

    let mut files = BTreeMap::new();
    let mut cells = Vec::new();
    let mut all_detections = Vec::new();
    let mut first_plan = Vec::new();
    let mut first_artifacts: Option<RunArtifacts> = None;
    for (sname, sel) in &selections {
        for (fname, freq) in &frequencies {
            let plan = schedule_injections(sel, freq, pause, window, p.seed);
            let report = run_miniapp(&cfg, sim_config(p, world, false, false), &plan)
                .map_err(from_workload)?;
            let cell = format!("{sname}-{fname}");
            files.insert(
                format!("metrics-{cell}.csv"),
                heartbeat_csv(&merged_heartbeat_rows(&report)),
            );
            files.insert(format!("plan-{cell}.json"), plan_json(&plan));
            all_detections.extend(detections_of(&report));
            if first_artifacts.is_none() {
                first_artifacts = Some(report.clone());
                first_plan = plan.clone();
            }
            cells.push((cell, report));
        }
    }
    let headline = first_artifacts.expect("at least one cell");
    let cost = CostReport::new(
        format!(
            "miniapp/iters={}/work={}",
            p.miniapp.iterations, p.miniapp.work_per_iter
        ),
        p.scale,
        (0..p.teams)
            .map(|t| TeamCost {
                team: t,
                compute_cpu_s: headline
                    .ranks
                    .iter()
                    .filter(|v| v.addr.team == t)
                    .map(|v| v.stats.compute_cost)
                    .sum(),
                reused: 0,
                computed: 0,
                shared_bytes: 0,
            })
            .collect(),
        headline.end_time.secs(),
        p.fair_baseline,
        p.teams * p.ranks_per_team,
    );
    let mut summary = base_summary(p, &headline, cost.clone());
    summary.detections = all_detections;
    summary.first_slow_detection = summary
        .detections
        .iter()
        .find(|d| d.health == "slow")
        .cloned();
    // the headline constant/constant cell doubles as metrics.csv
    files.insert(
        "metrics.csv".to_string(),
        files.get("metrics-constant-constant.csv").cloned().unwrap(),
    );
    files.insert("plan.json".to_string(), plan_json(&first_plan));
    files.insert("summary.json".to_string(), summary_json(&summary));
    Ok(RenderedRun {
        files,
        summary,
        cost,
        plan: first_plan,
        solver: None,
        baseline_solver: None,
        miniapp_cells: cells,
        sweep: Vec::new(),
    })
}

fn render_scaling(p: &ExperimentPreset) -> Result<RenderedRun, HarnessError> {
    let world = world_for(p)?;
    let d = p.solver.shareable_cost;
    let multipliers = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];
    let steps = p.solver.steps;
    let base = solver_baseline(p, steps)?;
    let fingerprint = solver_fingerprint(p, steps);
    let base_cost = solver_cost(p, &fingerprint, &base, 1, false);

    let mut sweep = Vec::new();
    let mut last = None;
    for mult in multipliers {
        let mut cfg = sim_config(p, world, false, true);
        cfg.share_alpha = Some(VirtualTime::from_secs(mult * d));
        let report = run_solver(&solver_config(p, steps), cfg, &[]).map_err(from_workload)?;
        let cost = solver_cost(p, &fingerprint, &report, p.teams, p.fair_baseline);
        let speedup = compute_speedup(&cost, &base_cost)
            .map_err(|e| config_err("cost", e.to_string()))?;
        let total_tasks: u64 = cost.per_team.iter().map(|t| t.computed + t.reused).sum();
        let total_reused: u64 = cost.per_team.iter().map(|t| t.reused).sum();
        sweep.push(SweepPointJson {
            transfer_latency: mult * d,
            reuse_fraction: total_reused as f64 / total_tasks as f64,
            speedup,
        });
        last = Some((report, cost));
    }
    let (last_report, mut cost) = last.expect("nonempty sweep");
    cost.normalize_against(&base_cost);
    let mut summary = base_summary(p, &last_report.artifacts, cost.clone());
    summary.baseline_cost = Some(base_cost);
    summary.sweep = Some(sweep.clone());
    let mut files = BTreeMap::new();
    files.insert("plan.json".to_string(), plan_json(&[]));
    files.insert("summary.json".to_string(), summary_json(&summary));
    Ok(RenderedRun {
        files,
        summary,
        cost,
        plan: Vec::new(),
        solver: Some(last_report),
        baseline_solver: Some(base),
        miniapp_cells: Vec::new(),
        sweep,
    })
}

/// Render a preset without touching the filesystem.
pub fn render_preset(p: &ExperimentPreset) -> Result<RenderedRun, HarnessError> {
    if p.scale <= 0.0 {
        return Err(config_err("scale", "scale must be positive"));
    }
    match p.name {
        PresetName::Pingpong => render_pingpong(p),
        PresetName::MiniappGrid => render_miniapp_grid(p),
        PresetName::VariableDelay => {
            let world = world_for(p)?;
            let steps = p.variable_delay_steps();
            let start = p.injection_start();
            let plan = escalating_delay_plan(
                &EscalatingDelayPlan {
                    start_time: VirtualTime::from_secs(start),
                    initial_pause: VirtualTime::from_secs(0.1),
                    increment: VirtualTime::from_secs(0.1),
                    spacing: VirtualTime::from_secs(p.dt_hb),
                    target: RankAddress::from_parts(0, 0, world)
                        .map_err(|e| config_err("topology", e.to_string()))?,
                },
                VirtualTime::from_secs(2.0 * start),
            );
            render_solver_preset(p, steps, true, plan, false, solver_config(p, steps))
        }
        PresetName::Divergence | PresetName::SavedTasks => {
            let world = world_for(p)?;
            let mut q = p.clone();
            if p.name == PresetName::SavedTasks {
                q.sharing = true;
            }
            let (lo, hi) = p.startup_delay_window();
            let plan = vec![startup_delay(
                0,
                VirtualTime::from_secs(lo),
                VirtualTime::from_secs(hi),
                p.seed,
                world,
            )];
            let steps = q.solver.steps;
            render_solver_preset(&q, steps, true, plan, true, solver_config(&q, steps))
        }
        PresetName::Scaling => render_scaling(p),
        PresetName::Consistency => {
            if p.teams < 2 {
                return Err(config_err("consistency", "needs at least two teams"));
            }
            let steps = p.solver.steps;
            let mut cfg = solver_config(p, steps);
            cfg.consistency_buffers = true;
            cfg.corrupt = Some(teamsim_core::workloads::CorruptSpec {
                team: (p.seed % p.teams as u64) as usize,
                team_rank: (p.seed / 7 % p.ranks_per_team as u64) as usize,
                step: steps / 2,
                bit: (p.seed % 64) as u32,
            });
            render_solver_preset(p, steps, false, Vec::new(), false, cfg)
        }
    }
}

/// Render and write the output files into `out_dir`.
pub fn run_preset(p: &ExperimentPreset, out_dir: &Path) -> Result<RenderedRun, HarnessError> {
    let run = render_preset(p)?;
    fs::create_dir_all(out_dir)?;
    for (name, content) in &run.files {
        fs::write(out_dir.join(name), content)?;
    }
    Ok(run)
}
