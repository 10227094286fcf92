//! Harness around `teamsim-core`: experiment presets named after the figures
//! they reproduce, deterministic CSV/JSON emission, and the cost/speedup
//! calculator.

pub mod cost;
pub mod output;
pub mod presets;
pub mod runner;

pub use cost::{compute_speedup, CostReport, TeamCost};
pub use presets::{ExperimentPreset, PresetName};
pub use runner::{render_preset, run_preset, HarnessError, RenderedRun};
