//! Cycle-level simulation of priority-aware, deflection-routed mesh NoCs,
//! plus the full learned congestion-control pipeline that runs on top of
//! them: feature collection at the sink queues, time-reversal labeling,
//! decision-tree training, and proactive source throttling, evaluated
//! against a reactive distress-signal baseline.

pub mod config;
pub mod controllers;
pub mod dtree;
pub mod engine;
pub mod error;
pub mod features;
pub mod labeling;
pub mod metrics;
pub mod topology;
pub mod trace;
pub mod traffic;

pub use error::{Error, Result};
