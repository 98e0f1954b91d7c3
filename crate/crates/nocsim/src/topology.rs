//! Mesh topology and deterministic Y-X routing over unidirectional rings.
//!
//! Every row and every column of the mesh is a unidirectional ring in the
//! direction of increasing index (with wraparound). A packet that overshoots
//! or bounces keeps circulating its ring and comes back to the same point,
//! which is what deflection routing requires: nothing in the network ever
//! stalls. Routes are dimension-ordered, column (Y) segment first, then row
//! (X) segment.
//!
//! Node numbering is row-major starting at 0: node `r * cols + c` sits at
//! row `r`, column `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a mesh node, row-major from 0.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a node does in the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Traffic source (a core). Injects requests, absorbs responses.
    Source,
    /// A bank of the distributed last-level cache. Sink with an ingress queue.
    Llc,
    /// Memory controller. Sink with an ingress queue, slower service.
    MemoryController,
}

/// Mesh dimensions plus the node-role partition.
///
/// `memory_controller_nodes`, `source_nodes` and `highest_priority_sources`
/// must be disjoint from each other where required: MCs and sources are
/// disjoint sets, and every highest-priority source is a source. Every node
/// that is neither a source nor a memory controller hosts an LLC bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    pub memory_controller_nodes: Vec<NodeId>,
    pub source_nodes: Vec<NodeId>,
    pub highest_priority_sources: Vec<NodeId>,
}

impl MeshConfig {
    /// Default floorplan for the given dimensions: cores on the left and
    /// right boundary columns, two memory controllers replacing the two
    /// middle boundary nodes, LLC banks everywhere else. The left-column
    /// cores get highest priority. Needs at least 3 columns so that some
    /// interior LLC nodes exist.
    pub fn default_floorplan(rows: usize, cols: usize) -> Self {
        let node = |r: usize, c: usize| NodeId(r * cols + c);
        let mc = vec![node(rows / 2, 0), node(rows / 2, cols - 1)];
        let mut sources = Vec::new();
        let mut high = Vec::new();
        for r in 0..rows {
            for &c in &[0, cols - 1] {
                let n = node(r, c);
                if !mc.contains(&n) {
                    sources.push(n);
                    if c == 0 {
                        high.push(n);
                    }
                }
            }
        }
        MeshConfig {
            rows,
            cols,
            memory_controller_nodes: mc,
            source_nodes: sources,
            highest_priority_sources: high,
        }
    }
}

/// A dimension-ordered route: the column segment (if any) runs first, then
/// the row segment. `hops` excludes the source and ends at the destination.
///
/// `turning_point` is the node where column travel becomes row travel. For a
/// pure-row route it equals the source; for a pure-column route it equals the
/// destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub hops: Vec<NodeId>,
    pub turning_point: NodeId,
}

impl Route {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }
}

/// Immutable mesh description shared by the engine, traffic generator and
/// controllers.
#[derive(Debug, Clone)]
pub struct Topology {
    rows: usize,
    cols: usize,
    roles: Vec<NodeRole>,
    source_nodes: Vec<NodeId>,
    highest_priority_sources: Vec<NodeId>,
    memory_controller_nodes: Vec<NodeId>,
    llc_nodes: Vec<NodeId>,
}

/// Validates the mesh configuration and builds the ring adjacency.
pub fn build_mesh(config: &MeshConfig) -> Result<Topology> {
    Topology::new(config)
}

impl Topology {
    pub fn new(config: &MeshConfig) -> Result<Topology> {
        if config.rows < 2 || config.cols < 2 {
            return Err(Error::Config(format!(
                "mesh must be at least 2x2, got {}x{}",
                config.rows, config.cols
            )));
        }
        let count = config.rows * config.cols;
        let check_bounds = |ids: &[NodeId], what: &str| -> Result<()> {
            for id in ids {
                if id.index() >= count {
                    return Err(Error::Config(format!(
                        "{what} node {id} out of range for {}x{} mesh",
                        config.rows, config.cols
                    )));
                }
            }
            Ok(())
        };
        check_bounds(&config.memory_controller_nodes, "memory controller")?;
        check_bounds(&config.source_nodes, "source")?;
        check_bounds(&config.highest_priority_sources, "highest-priority source")?;

        let mut roles = vec![NodeRole::Llc; count];
        for &n in &config.source_nodes {
            roles[n.index()] = NodeRole::Source;
        }
        for &n in &config.memory_controller_nodes {
            if roles[n.index()] == NodeRole::Source {
                return Err(Error::Config(format!(
                    "node {n} is both a source and a memory controller"
                )));
            }
            roles[n.index()] = NodeRole::MemoryController;
        }
        for &n in &config.highest_priority_sources {
            if roles[n.index()] != NodeRole::Source {
                return Err(Error::Config(format!(
                    "highest-priority node {n} is not a source"
                )));
            }
        }
        if config.source_nodes.is_empty() {
            return Err(Error::Config("mesh has no source nodes".into()));
        }
        let llc_nodes: Vec<NodeId> = (0..count)
            .map(NodeId)
            .filter(|n| roles[n.index()] == NodeRole::Llc)
            .collect();
        if llc_nodes.is_empty() {
            return Err(Error::Config(
                "mesh has no LLC nodes (every node is a source or a memory controller)".into(),
            ));
        }

        let mut sources = config.source_nodes.clone();
        sources.sort_unstable();
        sources.dedup();
        let mut high = config.highest_priority_sources.clone();
        high.sort_unstable();
        high.dedup();
        let mut mcs = config.memory_controller_nodes.clone();
        mcs.sort_unstable();
        mcs.dedup();

        Ok(Topology {
            rows: config.rows,
            cols: config.cols,
            roles,
            source_nodes: sources,
            highest_priority_sources: high,
            memory_controller_nodes: mcs,
            llc_nodes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn row_of(&self, n: NodeId) -> usize {
        n.index() / self.cols
    }

    pub fn col_of(&self, n: NodeId) -> usize {
        n.index() % self.cols
    }

    pub fn node_at(&self, row: usize, col: usize) -> NodeId {
        debug_assert!(row < self.rows && col < self.cols);
        NodeId(row * self.cols + col)
    }

    pub fn role(&self, n: NodeId) -> NodeRole {
        self.roles[n.index()]
    }

    /// Sinks are the nodes with ingress queues: LLC banks and MCs.
    pub fn is_sink(&self, n: NodeId) -> bool {
        self.roles[n.index()] != NodeRole::Source
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.source_nodes
    }

    pub fn highest_priority_sources(&self) -> &[NodeId] {
        &self.highest_priority_sources
    }

    pub fn is_highest_priority_source(&self, n: NodeId) -> bool {
        self.highest_priority_sources.binary_search(&n).is_ok()
    }

    pub fn memory_controllers(&self) -> &[NodeId] {
        &self.memory_controller_nodes
    }

    pub fn llc_nodes(&self) -> &[NodeId] {
        &self.llc_nodes
    }

    /// All sinks (LLC banks then MCs), ascending node id within each group.
    pub fn sinks(&self) -> Vec<NodeId> {
        let mut s: Vec<NodeId> = (0..self.node_count())
            .map(NodeId)
            .filter(|&n| self.is_sink(n))
            .collect();
        s.sort_unstable();
        s
    }

    /// Next node on the row ring (increasing column, wrapping).
    pub fn row_next(&self, n: NodeId) -> NodeId {
        let r = self.row_of(n);
        let c = (self.col_of(n) + 1) % self.cols;
        self.node_at(r, c)
    }

    /// Next node on the column ring (increasing row, wrapping).
    pub fn col_next(&self, n: NodeId) -> NodeId {
        let r = (self.row_of(n) + 1) % self.rows;
        let c = self.col_of(n);
        self.node_at(r, c)
    }

    /// Hops needed along the column ring from `src`'s row to `dst_row`.
    pub fn col_ring_distance(&self, src: NodeId, dst_row: usize) -> usize {
        (dst_row + self.rows - self.row_of(src)) % self.rows
    }

    /// Hops needed along the row ring from `src`'s column to `dst_col`.
    pub fn row_ring_distance(&self, src: NodeId, dst_col: usize) -> usize {
        (dst_col + self.cols - self.col_of(src)) % self.cols
    }
}

/// Y-X route from `src` to `dst`: down the source's column ring to the node
/// at (row(dst), col(src)) — the turning point — then along that row ring to
/// the destination. Degenerates to a single segment when the endpoints share
/// a row or a column.
pub fn yx_route(src: NodeId, dst: NodeId, topology: &Topology) -> Result<Route> {
    if src == dst {
        return Err(Error::Routing(format!(
            "degenerate route: source and destination are both node {src}"
        )));
    }
    let count = topology.node_count();
    if src.index() >= count || dst.index() >= count {
        return Err(Error::Routing(format!(
            "route endpoints {src} -> {dst} out of range"
        )));
    }

    let mut hops = Vec::new();
    let mut cur = src;
    let dst_row = topology.row_of(dst);
    while topology.row_of(cur) != dst_row {
        cur = topology.col_next(cur);
        hops.push(cur);
    }
    let turning_point = cur;
    while cur != dst {
        cur = topology.row_next(cur);
        hops.push(cur);
    }
    Ok(Route {
        hops,
        turning_point,
    })
}

/// The full row-ring cycle starting and ending at `node`: the path a packet
/// deflected at its destination traverses before it can retry.
pub fn deflection_orbit(node: NodeId, topology: &Topology) -> Route {
    let mut hops = Vec::with_capacity(topology.cols());
    let mut cur = node;
    loop {
        cur = topology.row_next(cur);
        hops.push(cur);
        if cur == node {
            break;
        }
    }
    Route {
        hops,
        turning_point: node,
    }
}

/// The full column-ring cycle starting and ending at `node`: the path a
/// packet refused at its turning point traverses before it retries the turn.
pub fn column_orbit(node: NodeId, topology: &Topology) -> Route {
    let mut hops = Vec::with_capacity(topology.rows());
    let mut cur = node;
    loop {
        cur = topology.col_next(cur);
        hops.push(cur);
        if cur == node {
            break;
        }
    }
    Route {
        hops,
        turning_point: node,
    }
}
