//! Deterministic discrete-event simulation of team-replicated
//! message-passing programs.
//!
//! A flat pool of ranks is split into `K` teams of `R` ranks each. Every team
//! runs the same program against its own intra-team channel while replicas
//! (same team rank, different team) exchange asynchronous heartbeats and,
//! optionally, task outcomes. Everything runs in virtual time on a
//! single-threaded event loop, so identical seeds produce bit-identical runs.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live in
//! the companion `teamsim` crate.

#![no_std]

extern crate alloc;

pub mod faults;
pub mod heartbeat;
pub mod metrics;
pub mod netsim;
pub mod rng;
pub mod tasksharing;
pub mod time;
pub mod topology;
pub mod workloads;

pub use time::VirtualTime;
pub use topology::{RankAddress, WorldConfig};
