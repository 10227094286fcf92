//! Experiment presets. A preset plus a seed fully determines a run; presets
//! serialise to JSON and reload byte-identically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Pingpong,
    MiniappGrid,
    VariableDelay,
    Divergence,
    SavedTasks,
    Scaling,
    Consistency,
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PresetName::Pingpong => "pingpong",
            PresetName::MiniappGrid => "miniapp_grid",
            PresetName::VariableDelay => "variable_delay",
            PresetName::Divergence => "divergence",
            PresetName::SavedTasks => "saved_tasks",
            PresetName::Scaling => "scaling",
            PresetName::Consistency => "consistency",
        };
        write!(f, "{s}")
    }
}

impl FromStr for PresetName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pingpong" => PresetName::Pingpong,
            "miniapp_grid" => PresetName::MiniappGrid,
            "variable_delay" => PresetName::VariableDelay,
            "divergence" => PresetName::Divergence,
            "saved_tasks" => PresetName::SavedTasks,
            "scaling" => PresetName::Scaling,
            "consistency" => PresetName::Consistency,
            other => return Err(format!("unknown preset '{other}'")),
        })
    }
}

/// Solver knobs shared by the solver-backed presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverKnobs {
    pub steps: u64,
    pub tasks_per_rank_per_step: u32,
    pub shareable_cost: f64,
    pub nonshareable_cost: f64,
    pub outcome_size: u32,
    pub task_jitter_frac: f64,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        // desk scale: 2 teams x 8 ranks, 100 steps, 64 tasks/rank/step;
        // shareable fraction ~0.9, step time ~3.55 virtual s
        SolverKnobs {
            steps: 100,
            tasks_per_rank_per_step: 64,
            shareable_cost: 0.05,
            nonshareable_cost: 0.35,
            outcome_size: 64,
            task_jitter_frac: 0.02,
        }
    }
}

impl SolverKnobs {
    pub fn step_time(&self) -> f64 {
        self.tasks_per_rank_per_step as f64 * self.shareable_cost + self.nonshareable_cost
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PingPongKnobs {
    pub n_min: u64,
    pub n_max: u64,
    pub i_max: u32,
    pub trials: u32,
}

impl Default for PingPongKnobs {
    fn default() -> Self {
        PingPongKnobs {
            n_min: 1,
            n_max: 1 << 12,
            i_max: 200,
            trials: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiniappKnobs {
    pub iterations: u32,
    pub work_per_iter: f64,
    /// "single" or "dual".
    pub heartbeat_mode: String,
    /// Pause duration per injection, virtual seconds.
    pub sleep: f64,
    /// Base interval between injections.
    pub sleep_every: f64,
}

impl Default for MiniappKnobs {
    fn default() -> Self {
        MiniappKnobs {
            iterations: 60,
            work_per_iter: 0.4,
            heartbeat_mode: "dual".into(),
            sleep: 1.0,
            sleep_every: 5.0,
        }
    }
}

/// A fully bound experiment: preset name, topology, seed, scale and knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub teams: usize,
    pub ranks_per_team: usize,
    pub seed: u64,
    /// Paper schedule times (delay windows, injection start) divided by this.
    pub scale: f64,
    pub sharing: bool,
    /// Charge one core per rank for the communication-progression thread.
    pub fair_baseline: bool,
    pub trace: bool,
    pub solver: SolverKnobs,
    pub pingpong: PingPongKnobs,
    pub miniapp: MiniappKnobs,
    /// Heartbeat task cadence, virtual seconds (unscaled).
    pub dt_hb: f64,
    pub hb_alpha: f64,
    pub hb_tol: f64,
    pub hb_timeout_mult: f64,
    /// Latency model.
    pub alpha: f64,
    pub beta: f64,
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        let mut p = ExperimentPreset {
            name,
            teams: 2,
            ranks_per_team: 8,
            seed: 0,
            scale: 10.0,
            sharing: true,
            fair_baseline: false,
            trace: false,
            solver: SolverKnobs::default(),
            pingpong: PingPongKnobs::default(),
            miniapp: MiniappKnobs::default(),
            dt_hb: 1.0,
            hb_alpha: 0.3,
            hb_tol: 1.5,
            hb_timeout_mult: 3.0,
            alpha: 1e-6,
            beta: 1e9,
        };
        match name {
            PresetName::Pingpong => {
                p.ranks_per_team = 2;
                p.sharing = false;
            }
            PresetName::MiniappGrid => {
                p.ranks_per_team = 2;
                p.sharing = false;
            }
            PresetName::VariableDelay => {
                p.sharing = false;
                p.solver.steps = 8;
            }
            PresetName::Divergence | PresetName::SavedTasks => {
                p.solver.steps = 100;
            }
            PresetName::Scaling => {
                p.ranks_per_team = 2;
                p.solver.steps = 10;
                p.solver.tasks_per_rank_per_step = 32;
                p.solver.nonshareable_cost = 0.1;
                p.solver.task_jitter_frac = 0.0;
            }
            PresetName::Consistency => {
                p.ranks_per_team = 2;
                p.teams = 3;
                p.solver.steps = 4;
                p.solver.tasks_per_rank_per_step = 8;
                p.solver.shareable_cost = 0.01;
                p.solver.nonshareable_cost = 0.02;
            }
        }
        p
    }

    /// Scaled kick-in time of the escalating-delay scenario (paper: 100 s).
    pub fn injection_start(&self) -> f64 {
        100.0 / self.scale
    }

    /// Scaled startup-delay window (paper: [45, 65] s).
    pub fn startup_delay_window(&self) -> (f64, f64) {
        (45.0 / self.scale, 65.0 / self.scale)
    }

    /// Variable-delay runs need the schedule to span past the injections.
    pub fn variable_delay_steps(&self) -> u64 {
        let span = 2.8 * self.injection_start();
        (span / self.solver.step_time()).ceil().max(4.0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_byte_identically() {
        for name in [
            PresetName::Pingpong,
            PresetName::MiniappGrid,
            PresetName::VariableDelay,
            PresetName::Divergence,
            PresetName::SavedTasks,
            PresetName::Scaling,
            PresetName::Consistency,
        ] {
            let p = ExperimentPreset::new(name);
            let json = serde_json::to_string_pretty(&p).unwrap();
            let back: ExperimentPreset = serde_json::from_str(&json).unwrap();
            assert_eq!(back, p);
            let json2 = serde_json::to_string_pretty(&back).unwrap();
            assert_eq!(json, json2);
        }
    }

    #[test]
    fn scale_one_reproduces_paper_named_timings() {
        let mut p = ExperimentPreset::new(PresetName::Divergence);
        p.scale = 1.0;
        assert_eq!(p.startup_delay_window(), (45.0, 65.0));
        assert_eq!(p.injection_start(), 100.0);
        p.scale = 10.0;
        assert_eq!(p.startup_delay_window(), (4.5, 6.5));
        assert_eq!(p.injection_start(), 10.0);
    }
}
