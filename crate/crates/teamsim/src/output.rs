//! Deterministic file renderings: metrics.csv (heartbeat rows), steps.csv
//! (per-step task rows), plan.json, summary.json and the opt-in trace.jsonl.
//! Column orders are frozen; identical runs produce identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;
use teamsim_core::metrics::{HeartbeatRow, StepRow};
use teamsim_core::netsim::{FaultEvent, FaultKind, TraceEvent};

use crate::cost::CostReport;

/// Columns: virtual time, team, team_rank, tag, interval, smoothed, status.
pub fn heartbeat_csv(rows: &[HeartbeatRow]) -> String {
    let mut out = String::from("time,team,team_rank,tag,interval,smoothed,status\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.time, r.team, r.team_rank, r.tag, r.interval, r.smoothed, r.status
        )
        .expect("string write");
    }
    out
}

/// Columns: step, team, computed_count, reused_count, suppressed_shares,
/// db_high_watermark.
pub fn steps_csv(rows: &[StepRow]) -> String {
    let mut out =
        String::from("step,team,computed_count,reused_count,suppressed_shares,db_high_watermark\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step, r.team, r.computed, r.reused, r.suppressed_shares, r.db_high_watermark
        )
        .expect("string write");
    }
    out
}

/// One JSON object per applied fault, for audit alongside the metrics.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlanEntry {
    pub kind: String,
    pub at: f64,
    pub team: usize,
    pub team_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

pub fn plan_json(plan: &[FaultEvent]) -> String {
    let entries: Vec<PlanEntry> = plan
        .iter()
        .map(|f| match f.kind {
            FaultKind::Pause(d) => PlanEntry {
                kind: "pause".into(),
                at: f.at.secs(),
                team: f.target.team,
                team_rank: f.target.team_rank,
                duration: Some(d.secs()),
            },
            FaultKind::Kill => PlanEntry {
                kind: "kill".into(),
                at: f.at.secs(),
                team: f.target.team,
                team_rank: f.target.team_rank,
                duration: None,
            },
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("plan serialises");
    s.push('\n');
    s
}

/// One event per line: time, rank, kind (debug rendering of the detail).
pub fn trace_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in trace {
        let line = json!({
            "time": e.time.secs(),
            "rank": format!("{}", e.rank),
            "kind": format!("{:?}", e.kind),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionJson {
    pub time: f64,
    pub observer_team: usize,
    pub observer_team_rank: usize,
    pub target_team: usize,
    pub tag: u32,
    pub health: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictJson {
    pub time: f64,
    pub team_rank: usize,
    pub tag: u32,
    pub seq: u64,
    pub verdict: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandwidthJson {
    pub team: usize,
    pub size_bytes: u64,
    pub bandwidth_bytes_per_sec: f64,
    pub message_rate_per_sec: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPointJson {
    pub transfer_latency: f64,
    pub reuse_fraction: f64,
    pub speedup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TotalsJson {
    pub heartbeats_emitted: u64,
    pub messages_intra_team: u64,
    pub messages_heartbeat: u64,
    pub messages_task_share: u64,
    pub tasks_computed: u64,
    pub tasks_reused: u64,
    pub shares_suppressed: u64,
    pub db_high_watermark: usize,
    pub send_window_high_watermark: usize,
    pub protocol_errors: u64,
}

/// The versioned run summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub preset: String,
    pub seed: u64,
    pub scale: f64,
    pub teams: usize,
    pub ranks_per_team: usize,
    pub sharing: bool,
    pub end_time: f64,
    pub all_finished: bool,
    pub totals: TotalsJson,
    pub cost: CostReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_cost: Option<CostReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup_vs_baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reuse_fraction_per_team: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub applied_startup_delay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_slow_detection: Option<DetectionJson>,
    pub detections: Vec<DetectionJson>,
    pub consistency_verdicts: Vec<VerdictJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<Vec<BandwidthJson>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPointJson>>,
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serialises");
    s.push('\n');
    s
}
