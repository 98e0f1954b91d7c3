//! Append-only event log of a simulation run.
//!
//! The on-disk encoding (version `nocsim-trace v1`) is line-delimited text,
//! one event per line, comma-separated:
//!
//! ```text
//! G,<cycle>,<txn>,<core>,<0|1 miss>            transaction generated
//! I,<cycle>,<packet>,<node>                    packet entered a ring
//! S,<cycle>,<packet>,<node>,<K|D>              sink attempt: sunK or Deflected
//! T,<cycle>,<packet>,<node>,<K|D>              turn attempt: admitted or deflected
//! V,<cycle>,<packet>,<node>                    packet serviced at a sink
//! R,<cycle>,<packet>,<node>,<class>,<bytes>    response delivered to a core
//! C,<cycle>,<txn>,<core>,<0|1 miss>,<start>    transaction completed
//! ```
//!
//! Identical configuration and seed produce a byte-identical log.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::packet::PacketClass;
use crate::error::Result;
use crate::topology::NodeId;

pub const TRACE_FORMAT: &str = "nocsim-trace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptResult {
    Sunk,
    Deflected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEvent {
    Generated {
        t: u64,
        txn: u64,
        core: NodeId,
        miss: bool,
    },
    Injected {
        t: u64,
        packet: u64,
        node: NodeId,
    },
    SinkAttempt {
        t: u64,
        packet: u64,
        node: NodeId,
        result: AttemptResult,
    },
    TurnAttempt {
        t: u64,
        packet: u64,
        node: NodeId,
        result: AttemptResult,
    },
    Serviced {
        t: u64,
        packet: u64,
        node: NodeId,
    },
    Delivered {
        t: u64,
        packet: u64,
        node: NodeId,
        class: PacketClass,
        bytes: u32,
    },
    Completed {
        t: u64,
        txn: u64,
        core: NodeId,
        miss: bool,
        start: u64,
    },
}

impl TraceEvent {
    pub fn cycle(&self) -> u64 {
        match *self {
            TraceEvent::Generated { t, .. }
            | TraceEvent::Injected { t, .. }
            | TraceEvent::SinkAttempt { t, .. }
            | TraceEvent::TurnAttempt { t, .. }
            | TraceEvent::Serviced { t, .. }
            | TraceEvent::Delivered { t, .. }
            | TraceEvent::Completed { t, .. } => t,
        }
    }

    fn write_line(&self, out: &mut String) {
        use std::fmt::Write as _;
        let result_code = |r: AttemptResult| match r {
            AttemptResult::Sunk => 'K',
            AttemptResult::Deflected => 'D',
        };
        match *self {
            TraceEvent::Generated { t, txn, core, miss } => {
                let _ = write!(out, "G,{t},{txn},{core},{}", u8::from(miss));
            }
            TraceEvent::Injected { t, packet, node } => {
                let _ = write!(out, "I,{t},{packet},{node}");
            }
            TraceEvent::SinkAttempt {
                t,
                packet,
                node,
                result,
            } => {
                let _ = write!(out, "S,{t},{packet},{node},{}", result_code(result));
            }
            TraceEvent::TurnAttempt {
                t,
                packet,
                node,
                result,
            } => {
                let _ = write!(out, "T,{t},{packet},{node},{}", result_code(result));
            }
            TraceEvent::Serviced { t, packet, node } => {
                let _ = write!(out, "V,{t},{packet},{node}");
            }
            TraceEvent::Delivered {
                t,
                packet,
                node,
                class,
                bytes,
            } => {
                let _ = write!(out, "R,{t},{packet},{node},{},{bytes}", class.code());
            }
            TraceEvent::Completed {
                t,
                txn,
                core,
                miss,
                start,
            } => {
                let _ = write!(out, "C,{t},{txn},{core},{},{start}", u8::from(miss));
            }
        }
    }
}

/// In-memory event log, appended in simulation order.
#[derive(Debug, Default, Clone)]
pub struct TraceLog {
    events: Vec<TraceEvent>,
}

impl TraceLog {
    pub fn new() -> TraceLog {
        TraceLog::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// FNV-1a hash over the serialized log, header included. Two runs with
    /// the same digest wrote byte-identical logs.
    pub fn digest(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut line = String::with_capacity(64);
        let mut absorb = |s: &str| {
            for b in s.as_bytes() {
                hash ^= u64::from(*b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
            hash ^= u64::from(b'\n');
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        };
        absorb(TRACE_FORMAT);
        for event in &self.events {
            line.clear();
            event.write_line(&mut line);
            absorb(&line);
        }
        hash
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{TRACE_FORMAT}")?;
        let mut line = String::with_capacity(64);
        for event in &self.events {
            line.clear();
            event.write_line(&mut line);
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}
