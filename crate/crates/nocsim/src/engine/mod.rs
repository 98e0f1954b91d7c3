//! Deterministic cycle-level simulation kernel.
//!
//! Every cycle runs the same phases in the same order:
//!
//! 1. **move** — every in-flight packet advances one hop along its ring;
//!    rings rotate simultaneously, so packets never collide in transit and
//!    nothing in the network ever stalls.
//! 2. **arrivals** — packets positioned at their turning point try to enter
//!    the turn buffer (full buffer: keep circulating the column ring);
//!    packets at their destination either deliver (cores absorb responses
//!    immediately) or attempt the sink ingress queue (full queue: bounce
//!    and keep circulating). Two packets racing for one queue slot are
//!    ordered by longer in-flight age, then packet id.
//! 3. **service** — each sink queue completes at most one service; a
//!    serviced request spawns its follow-up packet (LLC response, miss
//!    forward, or memory response) into the local egress buffer.
//! 4. **publish** — sinks evaluate their congestion state and push it onto
//!    the delayed signal bus.
//! 5. **inject** — sources draw new transactions, turn buffers egress onto
//!    row rings, and egress buffers inject where the controller permits and
//!    the local ring slot is free. In-flight packets always win arbitration
//!    over injections.
//!
//! A run is a pure function of (config, seed): identical inputs produce a
//! byte-identical trace.

pub mod packet;

use std::collections::{BTreeMap, VecDeque};

use crate::config::{Policy, RunConfig};
use crate::controllers::{ControllerBank, ControllerParams, SinkObservation};
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::features::{AttemptOutcome, FeatureVector, SinkFeatureState};
use crate::labeling::SinkDataset;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::topology::{NodeId, NodeRole, Topology};
use crate::trace::{AttemptResult, TraceEvent, TraceLog};
use crate::traffic::{followup_blueprint, Transaction, TrafficGenerator};

use packet::{Packet, PacketClass, Priority};

/// How many egress entries the per-cycle injection scan may look at.
const EGRESS_SCAN_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlightPhase {
    Column,
    Row,
}

#[derive(Debug, Clone, Copy)]
struct Flight {
    phase: FlightPhase,
    turn: NodeId,
}

/// Finite ingress queue of a sink: resident packets in FIFO order, with the
/// head in service until `busy_until`.
#[derive(Debug, Clone)]
pub struct IngressQueue {
    capacity: usize,
    service_time: u64,
    resident: VecDeque<(u64, u64)>, // (packet id, arrival cycle)
    busy_until: Option<u64>,
}

/// Outcome of one sink attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinkAttemptOutcome {
    pub result: AttemptResult,
    pub packet_id: u64,
    pub time: u64,
}

impl IngressQueue {
    pub fn new(capacity: usize, service_time: u64) -> IngressQueue {
        IngressQueue {
            capacity,
            service_time,
            resident: VecDeque::new(),
            busy_until: None,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.resident.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.resident.len() >= self.capacity
    }

    /// Admits the packet unless the queue is full. A full queue bounces the
    /// packet and leaves the queue untouched.
    pub fn try_sink(&mut self, packet_id: u64, t: u64) -> SinkAttemptOutcome {
        let result = if self.is_full() {
            AttemptResult::Deflected
        } else {
            self.resident.push_back((packet_id, t));
            AttemptResult::Sunk
        };
        SinkAttemptOutcome {
            result,
            packet_id,
            time: t,
        }
    }
}

/// Running totals over a whole run (warm-up included).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunSummary {
    pub generated: u64,
    pub injected: u64,
    pub completed: u64,
    pub deflections: u64,
    pub final_in_flight: u64,
    pub final_egress_backlog: u64,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub trace: TraceLog,
    pub metrics: MetricsReport,
    pub datasets: Option<BTreeMap<NodeId, SinkDataset>>,
    pub summary: RunSummary,
}

/// Knobs beyond the config file: feature collection and in-memory models.
#[derive(Debug, Default)]
pub struct RunOptions {
    /// Record per-sink feature datasets over the measurement window.
    pub collect: bool,
    /// Per-sink trees for the proposed policy. When absent they are loaded
    /// from `controller.models_dir`.
    pub models: Option<BTreeMap<NodeId, DecisionTree>>,
}

pub struct Engine {
    topology: Topology,
    config: RunConfig,
    clock: u64,
    packets: Vec<Packet>,
    flights: Vec<Flight>,
    transactions: Vec<Transaction>,
    row_slots: Vec<Option<u64>>,
    col_slots: Vec<Option<u64>>,
    row_scratch: Vec<Option<u64>>,
    col_scratch: Vec<Option<u64>>,
    turn_queues: Vec<VecDeque<u64>>,
    turn_capacity: usize,
    ingress: Vec<Option<IngressQueue>>,
    egress: Vec<VecDeque<u64>>,
    features: Vec<Option<SinkFeatureState>>,
    generators: Vec<TrafficGenerator>,
    controllers: ControllerBank,
    sink_nodes: Vec<NodeId>,
    obs_buffer: Vec<SinkObservation>,
    datasets: Option<Vec<SinkDataset>>,
    trace: TraceLog,
    summary: RunSummary,
    retired: u64,
    livelocked: Option<u64>,
}

impl Engine {
    pub fn new(config: &RunConfig, options: RunOptions) -> Result<Engine> {
        config.validate()?;
        let topology = config.topology()?;
        if topology.memory_controllers().is_empty() && config.workload.llc_hit_rate < 1.0 {
            return Err(Error::Config(
                "miss traffic requires at least one memory controller".into(),
            ));
        }

        let models = match (config.controller.policy, options.models) {
            (Policy::Proposed, Some(models)) => Some(models),
            (Policy::Proposed, None) => {
                let dir = config.controller.models_dir.as_ref().ok_or_else(|| {
                    Error::Config(
                        "proposed policy needs controller.models_dir or in-memory models".into(),
                    )
                })?;
                Some(crate::controllers::load_models(
                    dir,
                    &topology.sinks(),
                    config.controller.pooled_model,
                )?)
            }
            (_, _) => None,
        };

        let count = topology.node_count();
        let mut ingress = Vec::with_capacity(count);
        let mut features = Vec::with_capacity(count);
        for n in 0..count {
            match topology.role(NodeId(n)) {
                NodeRole::Source => {
                    ingress.push(None);
                    features.push(None);
                }
                NodeRole::Llc => {
                    ingress.push(Some(IngressQueue::new(
                        config.queues.ingress_capacity,
                        config.queues.llc_service_cycles,
                    )));
                    features.push(Some(SinkFeatureState::new(config.controller.alpha)));
                }
                NodeRole::MemoryController => {
                    ingress.push(Some(IngressQueue::new(
                        config.queues.ingress_capacity,
                        config.queues.mc_service(),
                    )));
                    features.push(Some(SinkFeatureState::new(config.controller.alpha)));
                }
            }
        }

        let generators = topology
            .sources()
            .iter()
            .map(|&core| TrafficGenerator::new(core, &config.workload, config.run.seed))
            .collect();

        let sink_nodes = topology.sinks();
        let capacity = config.queues.ingress_capacity;
        let baseline_on =
            ((config.controller.baseline_on_fraction * capacity as f64) as usize).max(1);
        let baseline_off = ((config.controller.baseline_off_fraction * capacity as f64)
            as usize)
            .min(baseline_on - 1);
        let params = ControllerParams {
            policy: config.controller.policy,
            delay: config.controller.signal_delay,
            alpha: config.controller.alpha,
            n_target: (capacity - config.controller.n_target_margin) as f64,
            baseline_on,
            baseline_off,
            local_condition: config.controller.local_condition,
        };
        let controllers = ControllerBank::new(&topology, params, models)?;

        let datasets = options
            .collect
            .then(|| vec![SinkDataset::default(); count]);

        Ok(Engine {
            clock: 0,
            packets: Vec::new(),
            flights: Vec::new(),
            transactions: Vec::new(),
            row_slots: vec![None; count],
            col_slots: vec![None; count],
            row_scratch: vec![None; count],
            col_scratch: vec![None; count],
            turn_queues: vec![VecDeque::new(); count],
            turn_capacity: config.queues.turn_capacity,
            ingress,
            egress: vec![VecDeque::new(); count],
            features,
            generators,
            controllers,
            sink_nodes,
            obs_buffer: Vec::new(),
            datasets,
            trace: TraceLog::new(),
            summary: RunSummary::default(),
            retired: 0,
            livelocked: None,
            topology,
            config: config.clone(),
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    /// Advances the simulation by one cycle.
    pub fn step(&mut self) {
        let t = self.clock;
        self.move_phase();
        self.arrival_phase(t);
        self.service_phase(t);
        self.publish_phase(t);
        self.inject_phase(t);
        self.clock += 1;

        #[cfg(debug_assertions)]
        if self.clock % 4096 == 0 {
            debug_assert!(self.check_conservation(), "packet conservation violated");
        }
    }

    fn move_phase(&mut self) {
        let t = &self.topology;
        self.row_scratch.fill(None);
        self.col_scratch.fill(None);
        for n in 0..t.node_count() {
            if let Some(pid) = self.row_slots[n] {
                self.row_scratch[t.row_next(NodeId(n)).index()] = Some(pid);
            }
            if let Some(pid) = self.col_slots[n] {
                self.col_scratch[t.col_next(NodeId(n)).index()] = Some(pid);
            }
        }
        std::mem::swap(&mut self.row_slots, &mut self.row_scratch);
        std::mem::swap(&mut self.col_slots, &mut self.col_scratch);
    }

    fn arrival_phase(&mut self, t: u64) {
        for n in 0..self.topology.node_count() {
            let node = NodeId(n);
            // (packet, arrived on the row ring?)
            let mut sink_attempts: [Option<(u64, bool)>; 2] = [None, None];
            let mut attempt_count = 0;

            for (pid, from_row) in [
                (self.row_slots[n], true),
                (self.col_slots[n], false),
            ]
            .into_iter()
            .filter_map(|(slot, from_row)| slot.map(|pid| (pid, from_row)))
            {
                let dst = self.packets[pid as usize].dst;
                let turn = self.flights[pid as usize].turn;
                let at_dst = dst == node && (from_row || turn == dst);
                if at_dst {
                    if self.topology.role(node) == NodeRole::Source {
                        self.deliver(pid, node, t, from_row);
                    } else {
                        sink_attempts[attempt_count] = Some((pid, from_row));
                        attempt_count += 1;
                    }
                } else if !from_row && turn == node {
                    self.attempt_turn(pid, node, t);
                }
            }

            if attempt_count == 2 {
                // Longer in-flight age (older injection) wins; ties by id.
                let key = |pid: u64| {
                    let p = &self.packets[pid as usize];
                    (p.injection_time.unwrap_or(u64::MAX), p.id)
                };
                let (a, b) = (sink_attempts[0].unwrap(), sink_attempts[1].unwrap());
                if key(b.0) < key(a.0) {
                    sink_attempts.swap(0, 1);
                }
            }
            for slot in sink_attempts.into_iter().flatten() {
                self.attempt_sink(slot.0, node, t, slot.1);
            }
        }
    }

    fn deliver(&mut self, pid: u64, node: NodeId, t: u64, from_row: bool) {
        if from_row {
            self.row_slots[node.index()] = None;
        } else {
            self.col_slots[node.index()] = None;
        }
        let (class, bytes, txn_id) = {
            let p = &self.packets[pid as usize];
            (p.class, p.payload_bytes, p.transaction_id)
        };
        debug_assert!(class.is_response());
        self.trace.push(TraceEvent::Delivered {
            t,
            packet: pid,
            node,
            class,
            bytes,
        });
        let txn = &mut self.transactions[txn_id as usize];
        txn.completion_time = Some(t);
        self.trace.push(TraceEvent::Completed {
            t,
            txn: txn_id,
            core: txn.core,
            miss: txn.is_llc_miss,
            start: txn.start_time,
        });
        self.summary.completed += 1;
        self.retired += 1;
    }

    fn attempt_turn(&mut self, pid: u64, node: NodeId, t: u64) {
        let n = node.index();
        if self.turn_queues[n].len() >= self.turn_capacity {
            self.register_deflection(pid);
            self.trace.push(TraceEvent::TurnAttempt {
                t,
                packet: pid,
                node,
                result: AttemptResult::Deflected,
            });
            // Stays on the column ring and retries after a full orbit.
        } else {
            self.col_slots[n] = None;
            self.turn_queues[n].push_back(pid);
            self.trace.push(TraceEvent::TurnAttempt {
                t,
                packet: pid,
                node,
                result: AttemptResult::Sunk,
            });
        }
    }

    fn attempt_sink(&mut self, pid: u64, node: NodeId, t: u64, from_row: bool) {
        let n = node.index();
        let queue = self.ingress[n].as_mut().expect("sink has an ingress queue");
        let occupancy = queue.occupancy();
        let capacity = queue.capacity();
        let outcome = queue.try_sink(pid, t);
        let feature_outcome = match outcome.result {
            AttemptResult::Sunk => {
                if from_row {
                    self.row_slots[n] = None;
                } else {
                    self.col_slots[n] = None;
                }
                AttemptOutcome::Sunk
            }
            AttemptResult::Deflected => {
                self.register_deflection(pid);
                AttemptOutcome::Deflected
            }
        };
        self.trace.push(TraceEvent::SinkAttempt {
            t,
            packet: pid,
            node,
            result: outcome.result,
        });
        let sample = self.features[n]
            .as_mut()
            .expect("sink has feature state")
            .record_attempt(t, occupancy, capacity, feature_outcome);
        if let Some(datasets) = &mut self.datasets {
            if t >= self.config.run.warmup_cycles {
                let gen = (feature_outcome == AttemptOutcome::Deflected)
                    .then(|| self.packets[pid as usize].generation_time);
                datasets[n].push(sample.features, sample.t, gen);
            }
        }
    }

    fn register_deflection(&mut self, pid: u64) {
        let p = &mut self.packets[pid as usize];
        p.deflection_count += 1;
        self.summary.deflections += 1;
        if p.deflection_count > self.config.queues.max_deflections {
            self.livelocked = Some(pid);
        }
    }

    fn service_phase(&mut self, t: u64) {
        for i in 0..self.sink_nodes.len() {
            let node = self.sink_nodes[i];
            let n = node.index();
            let queue = self.ingress[n].as_mut().expect("sink queue");
            if queue.busy_until == Some(t) {
                let (pid, _arrival) = queue.resident.pop_front().expect("busy queue non-empty");
                queue.busy_until = None;
                let service_time = queue.service_time;
                self.trace.push(TraceEvent::Serviced {
                    t,
                    packet: pid,
                    node,
                });
                self.features[n]
                    .as_mut()
                    .expect("sink feature state")
                    .record_departure(t, service_time);
                self.spawn_followup(pid, t);
                self.retired += 1;
            }
            let queue = self.ingress[n].as_mut().expect("sink queue");
            if queue.busy_until.is_none() && !queue.resident.is_empty() {
                queue.busy_until = Some(t + queue.service_time);
            }
        }
    }

    fn spawn_followup(&mut self, serviced: u64, t: u64) {
        let (txn_id, class) = {
            let p = &self.packets[serviced as usize];
            (p.transaction_id, p.class)
        };
        let txn = &self.transactions[txn_id as usize];
        let blueprint = followup_blueprint(
            txn,
            class,
            self.config.workload.request_bytes,
            self.config.workload.response_bytes,
        )
        .expect("serviced packets are requests and spawn a follow-up");
        let pid = self.new_packet(
            txn_id,
            blueprint.src,
            blueprint.dst,
            blueprint.class,
            blueprint.payload_bytes,
            t,
        );
        self.transactions[txn_id as usize]
            .response_packet_ids
            .push(pid);
        self.egress[blueprint.src.index()].push_back(pid);
    }

    fn new_packet(
        &mut self,
        txn_id: u64,
        src: NodeId,
        dst: NodeId,
        class: PacketClass,
        bytes: u32,
        t: u64,
    ) -> u64 {
        let pid = self.packets.len() as u64;
        self.packets
            .push(Packet::new(pid, txn_id, src, dst, class, bytes, t));
        self.flights.push(Flight {
            phase: FlightPhase::Column,
            turn: src,
        });
        pid
    }

    fn publish_phase(&mut self, t: u64) {
        let proposed = self.config.controller.policy == Policy::Proposed;
        self.obs_buffer.clear();
        for &node in &self.sink_nodes {
            let n = node.index();
            let queue = self.ingress[n].as_ref().expect("sink queue");
            let state = self.features[n].as_ref().expect("sink feature state");
            self.obs_buffer.push(SinkObservation {
                node,
                occupancy: queue.occupancy(),
                lambda: state.lambda(),
                features: if proposed {
                    state.snapshot()
                } else {
                    FeatureVector::zeros()
                },
            });
        }
        self.controllers.publish(t, &self.obs_buffer);
    }

    fn inject_phase(&mut self, t: u64) {
        // New transactions.
        for i in 0..self.generators.len() {
            let id = self.transactions.len() as u64;
            let Some(mut txn) = self.generators[i].next_request(t, id, &self.topology) else {
                continue;
            };
            let core = txn.core;
            self.trace.push(TraceEvent::Generated {
                t,
                txn: id,
                core,
                miss: txn.is_llc_miss,
            });
            self.summary.generated += 1;
            let pid = self.new_packet(
                id,
                core,
                txn.llc_bank,
                PacketClass::LlcRequest,
                self.config.workload.request_bytes,
                t,
            );
            txn.request_packet_id = Some(pid);
            self.transactions.push(txn);
            self.egress[core.index()].push_back(pid);
        }

        // Turn buffers egress onto their row rings; in-network packets have
        // priority over fresh injections at the same node.
        for n in 0..self.topology.node_count() {
            if self.row_slots[n].is_some() {
                continue;
            }
            if let Some(pid) = self.turn_queues[n].pop_front() {
                self.flights[pid as usize].phase = FlightPhase::Row;
                self.row_slots[n] = Some(pid);
            }
        }

        // Egress injection, at most one packet per node per cycle.
        let mut pending: Vec<(usize, NodeId)> = Vec::with_capacity(EGRESS_SCAN_LIMIT);
        for n in 0..self.topology.node_count() {
            if self.egress[n].is_empty() {
                continue;
            }
            let node = NodeId(n);
            let is_source = self.topology.role(node) == NodeRole::Source;
            pending.clear();
            pending.extend(
                self.egress[n]
                    .iter()
                    .take(EGRESS_SCAN_LIMIT)
                    .enumerate()
                    .map(|(i, &pid)| (i, self.packets[pid as usize].dst)),
            );
            let is_high_priority = self.topology.is_highest_priority_source(node);
            let Some(choice) = self
                .controllers
                .gate(t, node, is_source, is_high_priority, &pending)
            else {
                continue;
            };
            let pid = self.egress[n][choice];
            let (src, dst) = {
                let p = &self.packets[pid as usize];
                (p.src, p.dst)
            };
            let same_row = self.topology.row_of(src) == self.topology.row_of(dst);
            let slot = if same_row {
                &mut self.row_slots[n]
            } else {
                &mut self.col_slots[n]
            };
            if slot.is_some() {
                continue; // a passing packet holds the slot; wait
            }
            *slot = Some(pid);
            self.egress[n].remove(choice);
            let turn = self
                .topology
                .node_at(self.topology.row_of(dst), self.topology.col_of(src));
            self.flights[pid as usize] = Flight {
                phase: if same_row {
                    FlightPhase::Row
                } else {
                    FlightPhase::Column
                },
                turn,
            };
            let p = &mut self.packets[pid as usize];
            p.injection_time = Some(t);
            p.priority = Priority::InNetwork;
            self.trace.push(TraceEvent::Injected {
                t,
                packet: pid,
                node,
            });
            self.summary.injected += 1;
        }
    }

    /// Every created packet is in exactly one place: an egress buffer, a
    /// ring slot, a turn buffer, a sink queue, or retired.
    pub fn check_conservation(&self) -> bool {
        let in_egress: usize = self.egress.iter().map(VecDeque::len).sum();
        let on_rings = self
            .row_slots
            .iter()
            .chain(&self.col_slots)
            .filter(|s| s.is_some())
            .count();
        let in_turns: usize = self.turn_queues.iter().map(VecDeque::len).sum();
        let in_queues: usize = self
            .ingress
            .iter()
            .flatten()
            .map(|q| q.resident.len())
            .sum();
        in_egress + on_rings + in_turns + in_queues + self.retired as usize
            == self.packets.len()
    }

    fn in_flight_count(&self) -> u64 {
        let on_rings = self
            .row_slots
            .iter()
            .chain(&self.col_slots)
            .filter(|s| s.is_some())
            .count();
        let in_turns: usize = self.turn_queues.iter().map(VecDeque::len).sum();
        let in_queues: usize = self
            .ingress
            .iter()
            .flatten()
            .map(|q| q.resident.len())
            .sum();
        (on_rings + in_turns + in_queues) as u64
    }

    /// Runs to the configured horizon and computes metrics over the
    /// measurement window.
    pub fn run_to_completion(mut self) -> Result<RunOutput> {
        let total = self.config.run.total_cycles;
        while self.clock < total {
            self.step();
            if let Some(pid) = self.livelocked {
                let p = &self.packets[pid as usize];
                return Err(Error::Diagnostic(format!(
                    "packet {pid} ({}->{}) deflected {} times by cycle {}; \
                     the network is livelocked under this configuration",
                    p.src, p.dst, p.deflection_count, self.clock
                )));
            }
        }
        debug_assert!(self.check_conservation());
        self.summary.final_in_flight = self.in_flight_count();
        self.summary.final_egress_backlog =
            self.egress.iter().map(|e| e.len() as u64).sum();

        let window = (self.config.run.warmup_cycles, self.config.run.total_cycles);
        let metrics = compute_metrics(
            &self.trace,
            window,
            self.topology.sources().len(),
            &self.config,
        );
        let datasets = self.datasets.map(|list| {
            list.into_iter()
                .enumerate()
                .filter(|(n, d)| self.topology.is_sink(NodeId(*n)) && !d.is_empty())
                .map(|(n, d)| (NodeId(n), d))
                .collect()
        });
        Ok(RunOutput {
            trace: self.trace,
            metrics,
            datasets,
            summary: self.summary,
        })
    }
}

/// Runs a configuration to completion.
pub fn run_with(config: &RunConfig, options: RunOptions) -> Result<RunOutput> {
    Engine::new(config, options)?.run_to_completion()
}

/// Runs a configuration and returns the trace with its metrics.
pub fn run(config: &RunConfig) -> Result<(TraceLog, MetricsReport)> {
    let output = run_with(config, RunOptions::default())?;
    Ok((output.trace, output.metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Phase;
    use crate::topology::yx_route;
    use crate::traffic::splitmix64;

    /// 4x4 mesh with a single source at node 0, one MC at node 15, LLC
    /// banks everywhere else. One generating core keeps tests uncontended.
    fn single_core_config() -> RunConfig {
        let mut config = RunConfig::default();
        config.mesh.rows = 4;
        config.mesh.cols = 4;
        config.mesh.sources = Some(vec![0]);
        config.mesh.high_priority_sources = Some(vec![0]);
        config.mesh.memory_controllers = Some(vec![15]);
        config.run.total_cycles = 2_000;
        config.run.warmup_cycles = 1;
        config
    }

    /// Exactly one transaction: rate 1 for one cycle, then silence.
    fn one_shot(mut config: RunConfig, hit_rate: f64) -> RunConfig {
        config.workload.llc_hit_rate = hit_rate;
        config.workload.phases = vec![
            Phase {
                cycles: 1,
                rate: 1.0,
            },
            Phase {
                cycles: 1_000_000,
                rate: 0.0,
            },
        ];
        config
    }

    fn route_len(topology: &Topology, a: NodeId, b: NodeId) -> u64 {
        yx_route(a, b, topology).unwrap().len() as u64
    }

    #[test]
    fn uncontended_hit_latency_is_exact() {
        let config = one_shot(single_core_config(), 1.0);
        let topology = config.topology().unwrap();
        let output = run_with(&config, RunOptions::default()).unwrap();
        assert_eq!(output.summary.generated, 1);
        assert_eq!(output.summary.completed, 1);
        assert_eq!(output.summary.deflections, 0);

        let bank =
            topology.llc_nodes()[(splitmix64(0) % topology.llc_nodes().len() as u64) as usize];
        let expected = route_len(&topology, NodeId(0), bank)
            + config.queues.llc_service_cycles
            + route_len(&topology, bank, NodeId(0));
        assert_eq!(output.metrics.avg_transaction_latency, expected as f64);
        assert_eq!(output.metrics.memory_read_bandwidth, 0.0);
    }

    #[test]
    fn uncontended_miss_takes_the_memory_leg() {
        let hit = run_with(&one_shot(single_core_config(), 1.0), RunOptions::default())
            .unwrap()
            .metrics
            .avg_transaction_latency;

        let config = one_shot(single_core_config(), 0.0);
        let topology = config.topology().unwrap();
        let output = run_with(&config, RunOptions::default()).unwrap();
        assert_eq!(output.summary.completed, 1);
        let bank =
            topology.llc_nodes()[(splitmix64(0) % topology.llc_nodes().len() as u64) as usize];
        let mc = topology.memory_controllers()[0];
        let expected = route_len(&topology, NodeId(0), bank)
            + config.queues.llc_service_cycles
            + route_len(&topology, bank, mc)
            + config.queues.mc_service()
            + route_len(&topology, mc, NodeId(0));
        assert_eq!(output.metrics.avg_transaction_latency, expected as f64);
        assert!(output.metrics.avg_transaction_latency > hit);
        assert_eq!(output.metrics.completed_miss_fraction, 100.0);
    }

    #[test]
    fn deflected_packet_retries_after_one_orbit() {
        // One LLC bank with a capacity-1 queue and slow service; every
        // request beyond the first bounces and re-arrives one ring orbit
        // later: cols cycles for row arrivals, rows cycles for pure-column
        // arrivals.
        let mut config = RunConfig::default();
        config.mesh.rows = 2;
        config.mesh.cols = 3;
        config.mesh.sources = Some(vec![0, 2, 3, 4, 5]);
        config.mesh.memory_controllers = Some(vec![]);
        config.queues.ingress_capacity = 1;
        config.queues.llc_service_cycles = 50;
        config.controller.n_target_margin = 0;
        config.run.total_cycles = 200;
        config.run.warmup_cycles = 1;
        let mut config = one_shot(config, 1.0);
        config.workload.phases[0].cycles = 2;

        let topology = config.topology().unwrap();
        assert_eq!(topology.llc_nodes(), [NodeId(1)]);
        let output = run_with(&config, RunOptions::default()).unwrap();
        assert!(output.summary.deflections > 0, "queue of 1 must bounce");

        // Per packet: gaps between consecutive sink attempts equal the
        // orbit length of the ring it arrived on.
        let mut last_attempt: std::collections::HashMap<u64, u64> = Default::default();
        let mut checked = 0;
        for event in output.trace.events() {
            if let TraceEvent::SinkAttempt { t, packet, .. } = *event {
                if let Some(prev) = last_attempt.insert(packet, t) {
                    let src = output_packet_src(&output, packet);
                    let orbit = if topology.col_of(src) == topology.col_of(NodeId(1)) {
                        topology.rows() as u64
                    } else {
                        topology.cols() as u64
                    };
                    assert_eq!(t - prev, orbit, "packet {packet} retry spacing");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    fn output_packet_src(output: &RunOutput, pid: u64) -> NodeId {
        // Injection event records the source node.
        output
            .trace
            .events()
            .iter()
            .find_map(|e| match *e {
                TraceEvent::Injected { packet, node, .. } if packet == pid => Some(node),
                _ => None,
            })
            .expect("packet was injected")
    }

    #[test]
    fn same_cycle_sink_race_favors_older_injection() {
        // Enumerate both ring assignments and both age orders.
        for (row_older, ages) in [(true, (3, 5)), (false, (5, 3))] {
            let mut config = single_core_config();
            config.workload.injection_rate = 0.0;
            config.queues.ingress_capacity = 1;
            config.controller.n_target_margin = 0;
            let mut engine = Engine::new(&config, RunOptions::default()).unwrap();
            let topology = engine.topology.clone();
            let sink = NodeId(5); // LLC at (1,1)

            // Row arriver: placed one row hop before the sink.
            let row_pid = engine.new_packet(
                0,
                NodeId(4),
                sink,
                PacketClass::LlcRequest,
                8,
                0,
            );
            engine.packets[row_pid as usize].injection_time = Some(ages.0);
            engine.flights[row_pid as usize] = Flight {
                phase: FlightPhase::Row,
                turn: NodeId(4),
            };
            engine.row_slots[topology.node_at(1, 0).index()] = Some(row_pid);

            // Column arriver on a pure-column route: one column hop before.
            let col_pid = engine.new_packet(
                1,
                NodeId(13),
                sink,
                PacketClass::LlcRequest,
                8,
                0,
            );
            engine.packets[col_pid as usize].injection_time = Some(ages.1);
            engine.flights[col_pid as usize] = Flight {
                phase: FlightPhase::Column,
                turn: sink,
            };
            engine.col_slots[topology.node_at(0, 1).index()] = Some(col_pid);

            engine.step();

            let winner = if row_older { row_pid } else { col_pid };
            let loser = if row_older { col_pid } else { row_pid };
            let queue = engine.ingress[sink.index()].as_ref().unwrap();
            assert_eq!(queue.occupancy(), 1);
            assert_eq!(queue.resident[0].0, winner);
            assert_eq!(engine.packets[loser as usize].deflection_count, 1);
            assert_eq!(engine.packets[winner as usize].deflection_count, 0);
            assert!(engine.check_conservation());
        }
    }

    #[test]
    fn injection_waits_for_a_passing_packet() {
        let mut config = single_core_config();
        config.workload.injection_rate = 0.0;
        let mut engine = Engine::new(&config, RunOptions::default()).unwrap();

        // A foreign packet that will pass over the source's column slot.
        let foreign = engine.new_packet(
            0,
            NodeId(12),
            NodeId(8),
            PacketClass::LlcRequest,
            8,
            0,
        );
        engine.packets[foreign as usize].injection_time = Some(0);
        engine.flights[foreign as usize] = Flight {
            phase: FlightPhase::Column,
            turn: NodeId(8),
        };
        engine.col_slots[12] = Some(foreign);

        // A request pending at source node 0 whose route starts on the
        // column ring.
        let pending = engine.new_packet(
            1,
            NodeId(0),
            NodeId(9),
            PacketClass::LlcRequest,
            8,
            0,
        );
        engine.egress[0].push_back(pending);

        engine.step();
        assert_eq!(
            engine.packets[pending as usize].injection_time, None,
            "in-flight packet holds the slot, injection must wait"
        );
        engine.step();
        assert_eq!(engine.packets[pending as usize].injection_time, Some(1));
        assert_eq!(engine.packets[pending as usize].priority, Priority::InNetwork);
    }

    #[test]
    fn zero_injection_rate_means_zero_everything() {
        let mut config = single_core_config();
        config.workload.injection_rate = 0.0;
        let output = run_with(&config, RunOptions::default()).unwrap();
        assert_eq!(output.summary.generated, 0);
        assert_eq!(output.metrics.throughput, 0.0);
        assert_eq!(output.metrics.avg_transaction_latency, 0.0);
        assert_eq!(output.trace.len(), 0);
    }

    #[test]
    fn identical_seed_and_config_reproduce_the_trace() {
        let mut config = RunConfig::default();
        config.run.total_cycles = 10_000;
        config.run.warmup_cycles = 2_000;
        config.run.seed = 42;
        let a = run_with(&config, RunOptions::default()).unwrap();
        let b = run_with(&config, RunOptions::default()).unwrap();
        assert_eq!(a.trace.digest(), b.trace.digest());
        assert_eq!(a.metrics, b.metrics);

        config.run.seed = 43;
        let c = run_with(&config, RunOptions::default()).unwrap();
        assert_ne!(a.trace.digest(), c.trace.digest());
    }

    #[test]
    fn conservation_and_throughput_bounds_hold() {
        let mut config = RunConfig::default();
        config.run.total_cycles = 8_000;
        config.run.warmup_cycles = 1_000;
        config.workload.injection_rate = 0.08;
        let mut engine = Engine::new(&config, RunOptions::default()).unwrap();
        for _ in 0..config.run.total_cycles {
            engine.step();
        }
        assert!(engine.check_conservation());
        let sources = engine.topology.sources().len() as f64;
        let output = engine.run_to_completion().unwrap();
        assert!(output.metrics.throughput <= config.workload.injection_rate * sources);
    }

    #[test]
    fn runaway_deflections_abort_with_a_diagnostic() {
        let mut config = RunConfig::default();
        config.queues.ingress_capacity = 1;
        config.queues.llc_service_cycles = 200;
        config.controller.n_target_margin = 0;
        config.queues.mc_service_cycles = 800;
        config.queues.max_deflections = 3;
        config.workload.injection_rate = 1.0;
        config.run.total_cycles = 5_000;
        config.run.warmup_cycles = 100;
        let err = run_with(&config, RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Diagnostic(_)), "got {err:?}");
    }
}
