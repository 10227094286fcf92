//! Cost and speedup accounting: virtual CPU seconds per team, normalisation
//! against a single-team baseline, and the time-to-solution speedup.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamCost {
    pub team: usize,
    /// Charged compute, virtual CPU seconds.
    pub compute_cpu_s: f64,
    pub reused: u64,
    pub computed: u64,
    pub shared_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Workload fingerprint; speedups only compare like against like.
    pub workload: String,
    pub scale: f64,
    pub teams: usize,
    pub per_team: Vec<TeamCost>,
    /// Virtual time-to-solution (latest rank finish).
    pub wall: f64,
    /// Total cost in virtual CPU seconds. With the fair-baseline flag the
    /// progression core is charged: one core's worth of wall time per rank.
    pub total_cost_cpu_s: f64,
    pub fair_baseline: bool,
    /// Total cost divided by the single-team baseline's; the baseline itself
    /// reports 1.0 by construction.
    pub normalized_total_cost: Option<f64>,
}

impl CostReport {
    pub fn new(
        workload: impl Into<String>,
        scale: f64,
        per_team: Vec<TeamCost>,
        wall: f64,
        fair_baseline: bool,
        ranks_total: usize,
    ) -> Self {
        let compute: f64 = per_team.iter().map(|t| t.compute_cpu_s).sum();
        let progression = if fair_baseline {
            ranks_total as f64 * wall
        } else {
            0.0
        };
        CostReport {
            workload: workload.into(),
            scale,
            teams: per_team.len(),
            per_team,
            wall,
            total_cost_cpu_s: compute + progression,
            fair_baseline,
            normalized_total_cost: None,
        }
    }

    pub fn normalize_against(&mut self, baseline: &CostReport) {
        if baseline.total_cost_cpu_s > 0.0 {
            self.normalized_total_cost = Some(self.total_cost_cpu_s / baseline.total_cost_cpu_s);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CostError {
    MismatchedWorkloads,
}

impl std::fmt::Display for CostError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostError::MismatchedWorkloads => {
                write!(f, "cost reports come from different workloads or scales")
            }
        }
    }
}

impl std::error::Error for CostError {}

/// Time-to-solution speedup of the sharing run over the baseline, in virtual
/// time. Both reports must describe the same workload at the same scale.
pub fn compute_speedup(sharing: &CostReport, baseline: &CostReport) -> Result<f64, CostError> {
    if sharing.workload != baseline.workload || sharing.scale != baseline.scale {
        return Err(CostError::MismatchedWorkloads);
    }
    Ok(baseline.wall / sharing.wall)
}

/// Upper bound on the achievable speedup when a fraction `f` of per-step
/// compute is shareable across `k` teams.
pub fn speedup_ceiling(f: f64, k: usize) -> f64 {
    1.0 / (1.0 - f * (k as f64 - 1.0) / k as f64)
}
