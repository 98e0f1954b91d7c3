//! Runtime throttling policies and the delayed congestion-signal channel.
//!
//! Three policies share one interface:
//!
//! * **none** — every pending request may inject.
//! * **baseline** — reactive hysteresis. A sink whose occupancy crosses the
//!   on-threshold raises distress; distress clears below the off-threshold.
//!   While any sink's distress is visible, every source waits.
//! * **proposed** — each sink evaluates its decision tree every cycle and
//!   broadcasts a 1-bit congestion signal. A source skips pending requests
//!   whose destination is signaled and moves on to its next request; the
//!   skipped requests stay queued until the signal clears. Highest-priority
//!   sources additionally apply the local occupancy-forecast condition
//!   `N + lambda * t_avg > N_T` to their request's destination and throttle
//!   when it fires; the condition is never applied to lower-priority
//!   sources.
//!
//! Signals ride a dedicated channel with a fixed propagation delay: a value
//! published at cycle `t` becomes visible to the sources at
//! `t + propagation_delay`, never earlier.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use crate::config::Policy;
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::topology::{NodeId, Topology};

/// Per-sink state as seen over the signal channel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SinkSignal {
    /// The sink's decision tree predicted congestion (proposed policy).
    pub congested: bool,
    /// The sink's distress bit (baseline policy).
    pub distress: bool,
    /// Raw queue occupancy.
    pub occupancy: usize,
    /// Smoothed injection rate into the sink queue.
    pub lambda: f64,
}

/// What a sink reports each cycle before it goes onto the bus.
#[derive(Debug, Clone)]
pub struct SinkObservation {
    pub node: NodeId,
    pub occupancy: usize,
    pub lambda: f64,
    pub features: FeatureVector,
}

/// Fixed-delay broadcast channel: snapshots published at cycle `t` become
/// readable `propagation_delay` cycles later. Until the pipe fills, readers
/// see the all-clear default.
#[derive(Debug, Clone)]
pub struct CongestionSignalBus {
    delay: u64,
    history: VecDeque<Vec<SinkSignal>>,
    default: Vec<SinkSignal>,
}

impl CongestionSignalBus {
    pub fn new(delay: u64, sink_count: usize) -> CongestionSignalBus {
        CongestionSignalBus {
            delay,
            history: VecDeque::with_capacity(delay as usize + 1),
            default: vec![SinkSignal::default(); sink_count],
        }
    }

    /// Publishes this cycle's snapshot.
    pub fn publish(&mut self, snapshot: Vec<SinkSignal>) {
        self.history.push_back(snapshot);
        if self.history.len() > self.delay as usize + 1 {
            self.history.pop_front();
        }
    }

    /// The snapshot visible to sources this cycle: the one published
    /// `propagation_delay` cycles ago.
    pub fn visible(&self) -> &[SinkSignal] {
        if self.history.len() == self.delay as usize + 1 {
            self.history.front().unwrap()
        } else {
            &self.default
        }
    }
}

/// The Little's-law overflow forecast: the destination queue holds `n`
/// packets and admits `lambda` per cycle, so about `lambda * t_avg` more
/// arrive before this source decides again. Throttle when that forecast
/// overshoots the target occupancy.
pub fn local_condition(n: f64, lambda: f64, t_avg: f64, n_target: f64) -> bool {
    n + lambda * t_avg > n_target
}

/// Per-source state for the local condition: the decision cadence estimate.
#[derive(Debug, Clone)]
pub struct LocalConditionState {
    t_avg: f64,
    last_decision: Option<u64>,
    alpha: f64,
}

impl LocalConditionState {
    pub fn new(alpha: f64) -> LocalConditionState {
        LocalConditionState {
            t_avg: 1.0,
            last_decision: None,
            alpha,
        }
    }

    /// Called once per gating decision; tracks the smoothed gap between
    /// consecutive decisions.
    pub fn on_decision(&mut self, t: u64) {
        if let Some(prev) = self.last_decision {
            let gap = t.saturating_sub(prev).max(1) as f64;
            self.t_avg = self.alpha * gap + (1.0 - self.alpha) * self.t_avg;
        }
        self.last_decision = Some(t);
    }

    pub fn t_avg(&self) -> f64 {
        self.t_avg
    }
}

/// Hysteresis state of one sink under the baseline policy.
#[derive(Debug, Clone)]
pub struct BaselineState {
    pub on_threshold: usize,
    pub off_threshold: usize,
    pub distress: bool,
}

impl BaselineState {
    pub fn new(on_threshold: usize, off_threshold: usize) -> BaselineState {
        debug_assert!(off_threshold < on_threshold);
        BaselineState {
            on_threshold,
            off_threshold,
            distress: false,
        }
    }
}

/// One hysteresis update: distress turns on above the on-threshold, off
/// below the off-threshold, and holds in between.
pub fn baseline_decide(occupancy: usize, state: &mut BaselineState) -> bool {
    if occupancy > state.on_threshold {
        state.distress = true;
    } else if occupancy < state.off_threshold {
        state.distress = false;
    }
    state.distress
}

/// Throttle-or-allow decision for one (source, destination) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Throttle,
    Allow,
}

/// The end-to-end per-request decision: the local condition is consulted
/// first (it always reads false for lower-priority sources); otherwise the
/// destination sink's tree decides on its smoothed features.
#[allow(clippy::too_many_arguments)]
pub fn algorithm1_decide(
    is_highest_priority: bool,
    lc_enabled: bool,
    destination_occupancy: usize,
    destination_lambda: f64,
    lc: &LocalConditionState,
    n_target: f64,
    tree: &DecisionTree,
    features: &FeatureVector,
) -> Decision {
    let lc_fires = is_highest_priority
        && lc_enabled
        && local_condition(
            destination_occupancy as f64,
            destination_lambda,
            lc.t_avg(),
            n_target,
        );
    if lc_fires {
        return Decision::Throttle;
    }
    if tree.predict(features) == 1 {
        Decision::Throttle
    } else {
        Decision::Allow
    }
}

/// Parameters shared by every controller.
#[derive(Debug, Clone, Copy)]
pub struct ControllerParams {
    pub policy: Policy,
    pub delay: u64,
    pub alpha: f64,
    pub n_target: f64,
    pub baseline_on: usize,
    pub baseline_off: usize,
    pub local_condition: bool,
}

/// All controller state for a run: the bus, per-sink trees and hysteresis,
/// and per-source local-condition cadence.
#[derive(Debug)]
pub struct ControllerBank {
    params: ControllerParams,
    sink_index: Vec<Option<usize>>,
    trees: Vec<Option<DecisionTree>>,
    baseline: Vec<BaselineState>,
    bus: CongestionSignalBus,
    lc: Vec<LocalConditionState>,
}

impl ControllerBank {
    pub fn new(
        topology: &Topology,
        params: ControllerParams,
        models: Option<BTreeMap<NodeId, DecisionTree>>,
    ) -> Result<ControllerBank> {
        let sinks = topology.sinks();
        let mut sink_index = vec![None; topology.node_count()];
        for (i, &s) in sinks.iter().enumerate() {
            sink_index[s.index()] = Some(i);
        }
        let trees = match (params.policy, &models) {
            (Policy::Proposed, Some(models)) => sinks
                .iter()
                .map(|s| {
                    models.get(s).cloned().map(Some).ok_or_else(|| {
                        Error::Config(format!("no model for sink {s}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            (Policy::Proposed, None) => {
                return Err(Error::Config(
                    "proposed policy requires per-sink models".into(),
                ))
            }
            _ => vec![None; sinks.len()],
        };
        Ok(ControllerBank {
            bus: CongestionSignalBus::new(params.delay, sinks.len()),
            baseline: sinks
                .iter()
                .map(|_| BaselineState::new(params.baseline_on, params.baseline_off))
                .collect(),
            trees,
            sink_index,
            lc: (0..topology.node_count())
                .map(|_| LocalConditionState::new(params.alpha))
                .collect(),
            params,
        })
    }

    /// Computes this cycle's per-sink signals and publishes them.
    pub fn publish(&mut self, _t: u64, observations: &[SinkObservation]) {
        let snapshot: Vec<SinkSignal> = observations
            .iter()
            .enumerate()
            .map(|(i, obs)| {
                let congested = match (self.params.policy, &self.trees[i]) {
                    (Policy::Proposed, Some(tree)) => tree.predict(&obs.features) == 1,
                    _ => false,
                };
                let distress = if self.params.policy == Policy::Baseline {
                    baseline_decide(obs.occupancy, &mut self.baseline[i])
                } else {
                    false
                };
                SinkSignal {
                    congested,
                    distress,
                    occupancy: obs.occupancy,
                    lambda: obs.lambda,
                }
            })
            .collect();
        self.bus.publish(snapshot);
    }

    pub fn signal_for(&self, dst: NodeId) -> Option<&SinkSignal> {
        let i = self.sink_index.get(dst.index()).copied().flatten()?;
        self.bus.visible().get(i)
    }

    pub fn any_distress(&self) -> bool {
        self.bus.visible().iter().any(|s| s.distress)
    }

    /// Picks which pending packet (by position) a node may inject this
    /// cycle, or None to wait. `pending` pairs each scan position with the
    /// packet's destination.
    pub fn gate(
        &mut self,
        t: u64,
        node: NodeId,
        is_source: bool,
        is_highest_priority: bool,
        pending: &[(usize, NodeId)],
    ) -> Option<usize> {
        if pending.is_empty() {
            return None;
        }
        match self.params.policy {
            Policy::None => Some(pending[0].0),
            Policy::Baseline => {
                // Distress stops the traffic sources; sinks keep draining
                // their own egress (responses and forwards).
                if is_source && self.any_distress() {
                    None
                } else {
                    Some(pending[0].0)
                }
            }
            Policy::Proposed => {
                if is_source {
                    self.lc[node.index()].on_decision(t);
                }
                for &(position, dst) in pending {
                    let Some(signal) = self.signal_for(dst) else {
                        // Destinations without a sink queue (cores) are
                        // never signaled.
                        return Some(position);
                    };
                    if signal.congested {
                        continue;
                    }
                    if is_source
                        && is_highest_priority
                        && self.params.local_condition
                        && local_condition(
                            signal.occupancy as f64,
                            signal.lambda,
                            self.lc[node.index()].t_avg(),
                            self.params.n_target,
                        )
                    {
                        continue;
                    }
                    return Some(position);
                }
                None
            }
        }
    }
}

/// Loads the per-sink model files from a directory: `sink_<id>.model` per
/// sink, or one `shared.model` for every sink when pooled.
pub fn load_models(
    dir: &Path,
    sinks: &[NodeId],
    pooled: bool,
) -> Result<BTreeMap<NodeId, DecisionTree>> {
    let mut models = BTreeMap::new();
    if pooled {
        let path = dir.join("shared.model");
        if !path.exists() {
            return Err(Error::Config(format!(
                "pooled model {} not found",
                path.display()
            )));
        }
        let (tree, _) = crate::dtree::load_model(&path)?;
        for &s in sinks {
            models.insert(s, tree.clone());
        }
        return Ok(models);
    }
    let mut missing = Vec::new();
    for &s in sinks {
        let path = dir.join(format!("sink_{}.model", s.index()));
        if !path.exists() {
            missing.push(s.to_string());
            continue;
        }
        let (tree, _) = crate::dtree::load_model(&path)?;
        models.insert(s, tree);
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing model files for sinks: {} (looked in {})",
            missing.join(", "),
            dir.display()
        )));
    }
    Ok(models)
}
