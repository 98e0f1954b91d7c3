//! Flit-level messages and their in-network lifecycle.

use crate::topology::NodeId;

/// Which leg of the cache-coherency flow a packet carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketClass {
    /// core -> LLC bank
    LlcRequest,
    /// LLC bank -> core (hit)
    LlcResponse,
    /// LLC bank -> memory controller (miss forward)
    MemRequest,
    /// memory controller -> core
    MemResponse,
}

impl PacketClass {
    pub fn is_response(self) -> bool {
        matches!(self, PacketClass::LlcResponse | PacketClass::MemResponse)
    }

    pub fn code(self) -> char {
        match self {
            PacketClass::LlcRequest => 'q',
            PacketClass::LlcResponse => 'r',
            PacketClass::MemRequest => 'm',
            PacketClass::MemResponse => 'p',
        }
    }
}

/// Packets waiting in an egress buffer lose arbitration to anything already
/// on a ring; the flip to `InNetwork` happens exactly at injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    Waiting,
    InNetwork,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub id: u64,
    pub transaction_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: PacketClass,
    pub payload_bytes: u32,
    /// Cycle the packet was created (for requests: when the core generated
    /// the transaction). This is the timestamp the labeling rule records
    /// when the packet later bounces.
    pub generation_time: u64,
    pub injection_time: Option<u64>,
    pub deflection_count: u32,
    pub priority: Priority,
}

impl Packet {
    pub fn new(
        id: u64,
        transaction_id: u64,
        src: NodeId,
        dst: NodeId,
        class: PacketClass,
        payload_bytes: u32,
        generation_time: u64,
    ) -> Packet {
        Packet {
            id,
            transaction_id,
            src,
            dst,
            class,
            payload_bytes,
            generation_time,
            injection_time: None,
            deflection_count: 0,
            priority: Priority::Waiting,
        }
    }
}
