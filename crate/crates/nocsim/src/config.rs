//! Run configuration: one TOML file drives the whole pipeline.
//!
//! Every field has a documented default chosen so that an empty config file
//! reproduces the reference setup: a 6x6 mesh with two memory controllers,
//! ingress queues of depth 32, smoothing parameter 1/16, labeling window 5,
//! tree depth 4, and 600k cycles with a 100k warm-up. Unknown keys are
//! rejected. `desk()` rescales to 100k cycles total with a 20k warm-up for
//! fast local iteration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dtree::ClassWeighting;
use crate::error::{Error, Result};
use crate::topology::{MeshConfig, NodeId, Topology};

/// Controller policy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// No congestion control at all.
    #[default]
    None,
    /// Reactive distress hysteresis: any congested sink stops every source.
    Baseline,
    /// Decision trees at the sinks plus the local condition at
    /// highest-priority sources.
    Proposed,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Policy::None => "none",
            Policy::Baseline => "baseline",
            Policy::Proposed => "proposed",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Policy> {
        match s {
            "none" => Ok(Policy::None),
            "baseline" => Ok(Policy::Baseline),
            "proposed" => Ok(Policy::Proposed),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected none, baseline or proposed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub rows: usize,
    pub cols: usize,
    /// Memory controller nodes. Omitted: the default floorplan's two
    /// controllers. An explicit empty list means no MCs (hit-only traffic).
    pub memory_controllers: Option<Vec<usize>>,
    /// Traffic source (core) nodes. Omitted: the default floorplan, the
    /// left and right boundary columns minus the MCs.
    pub sources: Option<Vec<usize>>,
    /// Sources with highest injection priority. Omitted: the default
    /// floorplan's left-column cores.
    pub high_priority_sources: Option<Vec<usize>>,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            rows: 6,
            cols: 6,
            memory_controllers: None,
            sources: None,
            high_priority_sources: None,
        }
    }
}

impl MeshSection {
    pub fn mesh_config(&self) -> MeshConfig {
        let default = MeshConfig::default_floorplan(self.rows, self.cols);
        let ids = |v: &[usize]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        MeshConfig {
            rows: self.rows,
            cols: self.cols,
            memory_controller_nodes: match &self.memory_controllers {
                Some(list) => ids(list),
                None => default.memory_controller_nodes,
            },
            source_nodes: match &self.sources {
                Some(list) => ids(list),
                None => default.source_nodes,
            },
            highest_priority_sources: match &self.high_priority_sources {
                Some(list) => ids(list),
                None => default.highest_priority_sources,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueSection {
    /// Sink ingress queue depth.
    pub ingress_capacity: usize,
    /// Turn buffer depth at every node.
    pub turn_capacity: usize,
    /// Deterministic per-packet service time at LLC sinks.
    pub llc_service_cycles: u64,
    /// Service time at memory controllers; 0 means 4x the LLC time.
    pub mc_service_cycles: u64,
    /// Diagnostic abort threshold for a single packet's deflections.
    pub max_deflections: u32,
}

impl Default for QueueSection {
    fn default() -> Self {
        QueueSection {
            ingress_capacity: 32,
            turn_capacity: 8,
            llc_service_cycles: 2,
            mc_service_cycles: 0,
            max_deflections: 100_000,
        }
    }
}

impl QueueSection {
    pub fn mc_service(&self) -> u64 {
        if self.mc_service_cycles == 0 {
            4 * self.llc_service_cycles
        } else {
            self.mc_service_cycles
        }
    }
}

/// One phase of a multi-rate workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub cycles: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// Requests per cycle per core, in [0, 1]. Ignored while `phases` is
    /// non-empty.
    pub injection_rate: f64,
    /// Probability a request hits in the LLC.
    pub llc_hit_rate: f64,
    /// Phase schedule; repeats cyclically over the run. Empty means a
    /// single constant-rate phase.
    pub phases: Vec<Phase>,
    /// Coefficient-of-variation target for inter-generation gaps. Values
    /// above 1 enable the two-state bursty generator.
    pub burstiness: f64,
    pub request_bytes: u32,
    pub response_bytes: u32,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            injection_rate: 0.1,
            llc_hit_rate: 0.7,
            phases: Vec::new(),
            burstiness: 1.0,
            request_bytes: 8,
            response_bytes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub policy: Policy,
    /// Cycles before a sink's signal becomes visible at the sources.
    pub signal_delay: u64,
    /// EWMA mixing parameter.
    pub alpha: f64,
    /// Labeling window half-width.
    pub delta: i64,
    /// Tree depth used when training without a sweep.
    pub tree_depth: usize,
    pub min_leaf: usize,
    pub class_weighting: ClassWeighting,
    /// Target occupancy for the local condition is
    /// `ingress_capacity - n_target_margin`.
    pub n_target_margin: usize,
    /// Distress turns on above `baseline_on_fraction * capacity` ...
    pub baseline_on_fraction: f64,
    /// ... and off below `baseline_off_fraction * capacity`.
    pub baseline_off_fraction: f64,
    /// Enables the Little's-law local condition at highest-priority sources.
    pub local_condition: bool,
    /// Directory holding `sink_<id>.model` files (or `shared.model` when
    /// pooled). Required by the proposed policy.
    pub models_dir: Option<PathBuf>,
    /// Use one shared model for every sink.
    pub pooled_model: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            policy: Policy::None,
            signal_delay: 10,
            alpha: 1.0 / 16.0,
            delta: 5,
            tree_depth: 4,
            min_leaf: 8,
            class_weighting: ClassWeighting::default(),
            n_target_margin: 2,
            baseline_on_fraction: 0.75,
            baseline_off_fraction: 0.25,
            local_condition: true,
            models_dir: None,
            pooled_model: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub total_cycles: u64,
    pub warmup_cycles: u64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            total_cycles: 600_000,
            warmup_cycles: 100_000,
            seed: 1,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub queues: QueueSection,
    pub workload: WorkloadSection,
    pub controller: ControllerSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses and validates a TOML config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Scales the run down for fast local iteration: 100k cycles with a
    /// 20k warm-up.
    pub fn desk(mut self) -> RunConfig {
        self.run.total_cycles = 100_000;
        self.run.warmup_cycles = 20_000;
        self
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(&self.mesh.mesh_config())
    }

    /// Single-pass validation of every section.
    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        let q = &self.queues;
        if q.ingress_capacity == 0 || q.turn_capacity == 0 {
            return Err(Error::Config("queue capacities must be positive".into()));
        }
        if q.llc_service_cycles == 0 {
            return Err(Error::Config("LLC service time must be positive".into()));
        }
        let w = &self.workload;
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(w.injection_rate) {
            return Err(Error::Config(format!(
                "injection rate must be in [0, 1], got {}",
                w.injection_rate
            )));
        }
        if !rate_ok(w.llc_hit_rate) {
            return Err(Error::Config(format!(
                "LLC hit rate must be in [0, 1], got {}",
                w.llc_hit_rate
            )));
        }
        for (i, p) in w.phases.iter().enumerate() {
            if p.cycles == 0 {
                return Err(Error::Config(format!("phase {i} has zero duration")));
            }
            if !rate_ok(p.rate) {
                return Err(Error::Config(format!(
                    "phase {i} rate must be in [0, 1], got {}",
                    p.rate
                )));
            }
        }
        if w.burstiness < 0.0 {
            return Err(Error::Config("burstiness must be non-negative".into()));
        }
        if w.request_bytes == 0 || w.response_bytes == 0 {
            return Err(Error::Config("payload sizes must be positive".into()));
        }
        let c = &self.controller;
        if !(0.0..=1.0).contains(&c.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {}",
                c.alpha
            )));
        }
        if c.delta < 0 {
            return Err(Error::Config("delta must be non-negative".into()));
        }
        if c.tree_depth == 0 {
            return Err(Error::Config("tree depth must be at least 1".into()));
        }
        if c.n_target_margin >= q.ingress_capacity {
            return Err(Error::Config(
                "n_target_margin must leave a positive target occupancy".into(),
            ));
        }
        if !(c.baseline_off_fraction < c.baseline_on_fraction
            && c.baseline_on_fraction <= 1.0
            && c.baseline_off_fraction >= 0.0)
        {
            return Err(Error::Config(
                "baseline thresholds need 0 <= off < on <= 1".into(),
            ));
        }
        let r = &self.run;
        if r.total_cycles == 0 || r.warmup_cycles >= r.total_cycles {
            return Err(Error::Config(format!(
                "need warmup < total cycles, got {} / {}",
                r.warmup_cycles, r.total_cycles
            )));
        }
        Ok(())
    }
}
