//! Synthetic cache-coherency workloads.
//!
//! Each core draws new transactions from its own seeded RNG substream, so
//! the generated workload is identical across controller policies at the
//! same run seed. A transaction either hits in the distributed LLC
//! (core -> LLC -> core) or misses and takes the memory-controller leg
//! (core -> LLC -> MC -> core). The LLC bank and MC are picked by an
//! address-interleaving hash of the transaction id.
//!
//! Burstiness above 1 switches generation to a two-state modulated Bernoulli
//! process: bursts at an elevated rate separated by idle gaps, with the
//! marginal rate preserved.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Phase, WorkloadSection};
use crate::engine::packet::PacketClass;
use crate::topology::{NodeId, Topology};

/// Mean burst length, in cycles, of the bursty generator's on state.
const BURST_LENGTH: f64 = 16.0;

/// One read/write request round trip.
#[derive(Debug, Clone)]
pub struct Transaction {
    pub id: u64,
    pub core: NodeId,
    pub is_llc_miss: bool,
    pub llc_bank: NodeId,
    pub memory_controller: Option<NodeId>,
    pub start_time: u64,
    pub request_packet_id: Option<u64>,
    pub response_packet_ids: Vec<u64>,
    pub completion_time: Option<u64>,
}

/// The src/dst/class skeleton of one packet of a transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketBlueprint {
    pub src: NodeId,
    pub dst: NodeId,
    pub class: PacketClass,
    pub payload_bytes: u32,
}

/// 64-bit mix used for address interleaving.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// All packets a transaction will need, in flow order. Response packets are
/// only materialized by the engine once their predecessor has been serviced.
pub fn route_transaction(
    txn: &Transaction,
    topology: &Topology,
    request_bytes: u32,
    response_bytes: u32,
) -> Vec<PacketBlueprint> {
    debug_assert!(txn.core.index() < topology.node_count());
    debug_assert!(txn.llc_bank.index() < topology.node_count());
    let mut packets = vec![PacketBlueprint {
        src: txn.core,
        dst: txn.llc_bank,
        class: PacketClass::LlcRequest,
        payload_bytes: request_bytes,
    }];
    if txn.is_llc_miss {
        let mc = txn
            .memory_controller
            .expect("miss transaction has a memory controller");
        packets.push(PacketBlueprint {
            src: txn.llc_bank,
            dst: mc,
            class: PacketClass::MemRequest,
            payload_bytes: request_bytes,
        });
        packets.push(PacketBlueprint {
            src: mc,
            dst: txn.core,
            class: PacketClass::MemResponse,
            payload_bytes: response_bytes,
        });
    } else {
        packets.push(PacketBlueprint {
            src: txn.llc_bank,
            dst: txn.core,
            class: PacketClass::LlcResponse,
            payload_bytes: response_bytes,
        });
    }
    packets
}

/// The packet created when `serviced` finishes service, if any.
pub fn followup_blueprint(
    txn: &Transaction,
    serviced: PacketClass,
    request_bytes: u32,
    response_bytes: u32,
) -> Option<PacketBlueprint> {
    match serviced {
        PacketClass::LlcRequest if txn.is_llc_miss => Some(PacketBlueprint {
            src: txn.llc_bank,
            dst: txn.memory_controller?,
            class: PacketClass::MemRequest,
            payload_bytes: request_bytes,
        }),
        PacketClass::LlcRequest => Some(PacketBlueprint {
            src: txn.llc_bank,
            dst: txn.core,
            class: PacketClass::LlcResponse,
            payload_bytes: response_bytes,
        }),
        PacketClass::MemRequest => Some(PacketBlueprint {
            src: txn.memory_controller?,
            dst: txn.core,
            class: PacketClass::MemResponse,
            payload_bytes: response_bytes,
        }),
        PacketClass::LlcResponse | PacketClass::MemResponse => None,
    }
}

/// Per-core request stream.
#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    core: NodeId,
    rng: ChaCha8Rng,
    injection_rate: f64,
    llc_hit_rate: f64,
    phases: Vec<Phase>,
    phase_total: u64,
    burstiness: f64,
    burst_on: bool,
}

impl TrafficGenerator {
    pub fn new(core: NodeId, workload: &WorkloadSection, run_seed: u64) -> TrafficGenerator {
        let substream = splitmix64(run_seed ^ splitmix64(core.index() as u64 + 1));
        TrafficGenerator {
            core,
            rng: ChaCha8Rng::seed_from_u64(substream),
            injection_rate: workload.injection_rate,
            llc_hit_rate: workload.llc_hit_rate,
            phases: workload.phases.clone(),
            phase_total: workload.phases.iter().map(|p| p.cycles).sum(),
            burstiness: workload.burstiness,
            burst_on: true,
        }
    }

    /// Injection rate of the phase active at `clock`. The phase schedule
    /// repeats over the run.
    pub fn active_rate(&self, clock: u64) -> f64 {
        if self.phases.is_empty() || self.phase_total == 0 {
            return self.injection_rate;
        }
        let mut offset = clock % self.phase_total;
        for p in &self.phases {
            if offset < p.cycles {
                return p.rate;
            }
            offset -= p.cycles;
        }
        unreachable!("phase offset within total")
    }

    /// Draws at most one new transaction for this cycle. `id` must be the
    /// globally unique id the transaction will get if one is generated.
    pub fn next_request(
        &mut self,
        clock: u64,
        id: u64,
        topology: &Topology,
    ) -> Option<Transaction> {
        let rate = self.active_rate(clock);
        let effective = if self.burstiness > 1.0 {
            let on_rate = (rate * self.burstiness).min(1.0);
            let duty = if on_rate > 0.0 { rate / on_rate } else { 0.0 };
            let p_leave_on = 1.0 / BURST_LENGTH;
            if duty >= 1.0 {
                self.burst_on = true;
            } else {
                let p_enter_on = (p_leave_on * duty / (1.0 - duty)).min(1.0);
                let flip = if self.burst_on { p_leave_on } else { p_enter_on };
                if self.rng.random::<f64>() < flip {
                    self.burst_on = !self.burst_on;
                }
            }
            if self.burst_on {
                on_rate
            } else {
                0.0
            }
        } else {
            rate
        };

        if effective <= 0.0 || self.rng.random::<f64>() >= effective {
            return None;
        }
        let is_llc_miss = self.rng.random::<f64>() < 1.0 - self.llc_hit_rate;
        let hash = splitmix64(id);
        let llc = topology.llc_nodes();
        let llc_bank = llc[(hash % llc.len() as u64) as usize];
        let memory_controller = if is_llc_miss {
            let mcs = topology.memory_controllers();
            assert!(
                !mcs.is_empty(),
                "miss traffic requires at least one memory controller"
            );
            Some(mcs[(hash % mcs.len() as u64) as usize])
        } else {
            None
        };
        Some(Transaction {
            id,
            core: self.core,
            is_llc_miss,
            llc_bank,
            memory_controller,
            start_time: clock,
            request_packet_id: None,
            response_packet_ids: Vec::new(),
            completion_time: None,
        })
    }
}
