//! Segmented ladder bus graph and its geometric predicates.
//!
//! The interconnect places two rows of tiles around `n` parallel segmented
//! bus lanes. Each lane is a chain of switches, one per tile column;
//! adjacent lanes are joined by vertical segments and every tile attaches
//! to the nearest outer lane through a single access segment. All placement
//! cost functions, conflict checks and routing run on this graph.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TileId = usize;
pub type NodeIndex = usize;
/// Ordered node sequence; consecutive entries must be adjacent in the graph.
pub type NodePath = Vec<NodeIndex>;

/// A vertex of the bus graph: either a tile or a lane switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Tile(TileId),
    Switch { lane: usize, col: usize },
}

/// A directed tile-to-tile communication link (a cluster link after mapping).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkEndpoints {
    #[serde(rename = "src")]
    pub src_tile: TileId,
    #[serde(rename = "dst")]
    pub dst_tile: TileId,
}

impl LinkEndpoints {
    pub fn new(src_tile: TileId, dst_tile: TileId) -> Result<Self> {
        if src_tile == dst_tile {
            return Err(Error::DegenerateLink(src_tile));
        }
        Ok(Self { src_tile, dst_tile })
    }

    /// True if the two links have a tile in common.
    pub fn shares_tile(&self, other: &LinkEndpoints) -> bool {
        self.src_tile == other.src_tile
            || self.src_tile == other.dst_tile
            || self.dst_tile == other.src_tile
            || self.dst_tile == other.dst_tile
    }
}

/// The ladder bus graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct LadderTopology {
    tile_count: usize,
    lane_count: usize,
    columns: usize,
    nodes: Vec<NodeId>,
    adjacency: Vec<Vec<NodeIndex>>,
    edges: Vec<(NodeIndex, NodeIndex)>,
    edge_index: HashMap<(NodeIndex, NodeIndex), usize>,
    tile_distance: Vec<u32>,
}

impl LadderTopology {
    /// Builds the graph for `tile_count` tiles (split into two equal rows)
    /// and `lane_count` parallel bus lanes.
    pub fn build(tile_count: usize, lane_count: usize) -> Result<Self> {
        if tile_count < 2 || !tile_count.is_multiple_of(2) {
            return Err(Error::InvalidTileCount(tile_count));
        }
        if lane_count < 1 {
            return Err(Error::InvalidLaneCount(lane_count));
        }
        let columns = tile_count / 2;

        let mut nodes = Vec::with_capacity(tile_count + lane_count * columns);
        for t in 0..tile_count {
            nodes.push(NodeId::Tile(t));
        }
        for lane in 0..lane_count {
            for col in 0..columns {
                nodes.push(NodeId::Switch { lane, col });
            }
        }

        let switch_at = |lane: usize, col: usize| tile_count + lane * columns + col;

        let mut edges = Vec::new();
        // Horizontal lane segments.
        for lane in 0..lane_count {
            for col in 0..columns.saturating_sub(1) {
                edges.push((switch_at(lane, col), switch_at(lane, col + 1)));
            }
        }
        // Vertical cross-lane segments.
        for lane in 0..lane_count.saturating_sub(1) {
            for col in 0..columns {
                edges.push((switch_at(lane, col), switch_at(lane + 1, col)));
            }
        }
        // Tile access segments: top row meets lane 0, bottom row lane n-1.
        for t in 0..tile_count {
            let col = t % columns;
            let lane = if t < columns { 0 } else { lane_count - 1 };
            edges.push((t.min(switch_at(lane, col)), t.max(switch_at(lane, col))));
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (i, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push(b);
            adjacency[b].push(a);
            edge_index.insert((a.min(b), a.max(b)), i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        let mut topo = Self {
            tile_count,
            lane_count,
            columns,
            nodes,
            adjacency,
            edges,
            edge_index,
            tile_distance: Vec::new(),
        };
        topo.tile_distance = topo.compute_tile_distances();
        Ok(topo)
    }

    fn compute_tile_distances(&self) -> Vec<u32> {
        let t = self.tile_count;
        let mut table = vec![u32::MAX; t * t];
        for src in 0..t {
            let dist = self.bfs_distances(src);
            for dst in 0..t {
                table[src * t + dst] = dist[dst];
            }
        }
        table
    }

    fn bfs_distances(&self, start: NodeIndex) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn tile_count(&self) -> usize {
        self.tile_count
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    /// Tile columns per row (`tile_count / 2`).
    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeIndex, NodeIndex)] {
        &self.edges
    }

    pub fn neighbors(&self, node: NodeIndex) -> &[NodeIndex] {
        &self.adjacency[node]
    }

    pub fn node(&self, idx: NodeIndex) -> NodeId {
        self.nodes[idx]
    }

    pub fn tile_node(&self, tile: TileId) -> NodeIndex {
        tile
    }

    pub fn switch_node(&self, lane: usize, col: usize) -> NodeIndex {
        self.tile_count + lane * self.columns + col
    }

    /// Row of a tile: 0 for the top row, 1 for the bottom row.
    pub fn row_of_tile(&self, tile: TileId) -> usize {
        usize::from(tile >= self.columns)
    }

    pub fn col_of_tile(&self, tile: TileId) -> usize {
        tile % self.columns
    }

    /// Column position of any node.
    pub fn col_of_node(&self, idx: NodeIndex) -> usize {
        match self.nodes[idx] {
            NodeId::Tile(t) => self.col_of_tile(t),
            NodeId::Switch { col, .. } => col,
        }
    }

    pub fn validate_tile(&self, tile: TileId) -> Result<()> {
        if tile >= self.tile_count {
            return Err(Error::InvalidTile {
                id: tile,
                tiles: self.tile_count,
            });
        }
        Ok(())
    }

    pub fn validate_link(&self, link: &LinkEndpoints) -> Result<()> {
        self.validate_tile(link.src_tile)?;
        self.validate_tile(link.dst_tile)?;
        if link.src_tile == link.dst_tile {
            return Err(Error::DegenerateLink(link.src_tile));
        }
        Ok(())
    }

    /// Shortest-path length in edges between two tiles, access segments
    /// included.
    pub fn distance(&self, a: TileId, b: TileId) -> Result<u32> {
        self.validate_tile(a)?;
        self.validate_tile(b)?;
        Ok(self.tile_distance[a * self.tile_count + b])
    }

    /// Distance lookup on pre-validated tile ids (hot search loops).
    pub(crate) fn tile_distance_unchecked(&self, a: TileId, b: TileId) -> u32 {
        self.tile_distance[a * self.tile_count + b]
    }

    /// Column interval `(lo, hi)` spanned by a link's endpoints.
    pub fn col_span(&self, link: &LinkEndpoints) -> (usize, usize) {
        let a = self.col_of_tile(link.src_tile);
        let b = self.col_of_tile(link.dst_tile);
        (a.min(b), a.max(b))
    }

    /// Compile-time crossing predicate: two links cross when their column
    /// intervals strictly interleave, or when they meet at a tile (a tile's
    /// single access segment cannot carry two simultaneous transmissions).
    /// Nested and disjoint intervals do not cross; they can occupy
    /// different lanes or different extents of the same lane.
    pub fn topological_cross(&self, p: &LinkEndpoints, q: &LinkEndpoints) -> bool {
        if p.shares_tile(q) {
            return true;
        }
        let (p_lo, p_hi) = self.col_span(p);
        let (q_lo, q_hi) = self.col_span(q);
        (p_lo < q_lo && q_lo < p_hi && p_hi < q_hi) || (q_lo < p_lo && p_lo < q_hi && q_hi < p_hi)
    }

    pub fn validate_path(&self, path: &[NodeIndex]) -> Result<()> {
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.edge_between(a, b).is_none() {
                return Err(Error::MalformedPath {
                    a: self.node_label(a),
                    b: self.node_label(b),
                });
            }
        }
        Ok(())
    }

    /// True when two node paths share any node or segment. Sharing a
    /// segment implies sharing both of its endpoints, so a node check
    /// covers both cases.
    pub fn path_cross(&self, path_p: &[NodeIndex], path_q: &[NodeIndex]) -> Result<bool> {
        self.validate_path(path_p)?;
        self.validate_path(path_q)?;
        let set: std::collections::HashSet<NodeIndex> = path_p.iter().copied().collect();
        Ok(path_q.iter().any(|n| set.contains(n)))
    }

    /// True when, at every gap between adjacent columns, at most
    /// `lane_count` link intervals cover the gap.
    pub fn lane_overlap_feasible(&self, links: &[LinkEndpoints]) -> bool {
        if self.columns < 2 {
            return true;
        }
        let mut coverage = vec![0usize; self.columns - 1];
        for link in links {
            let (lo, hi) = self.col_span(link);
            for covered in &mut coverage[lo..hi] {
                *covered += 1;
                if *covered > self.lane_count {
                    return false;
                }
            }
        }
        true
    }

    /// Index of the segment joining `a` and `b`, if one exists.
    pub fn edge_between(&self, a: NodeIndex, b: NodeIndex) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Canonical shortest path between two distinct tiles: breadth-first
    /// with neighbors visited in ascending node order, so equal inputs
    /// always yield the same path.
    pub fn canonical_shortest_path(&self, src: TileId, dst: TileId) -> Result<NodePath> {
        self.validate_tile(src)?;
        self.validate_tile(dst)?;
        if src == dst {
            return Err(Error::DegenerateLink(src));
        }
        let start = self.tile_node(src);
        let goal = self.tile_node(dst);
        let mut parent = vec![usize::MAX; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            if u == goal {
                break;
            }
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if !seen[goal] {
            return Err(Error::NoRoute { src, dst });
        }
        let mut path = vec![goal];
        let mut cur = goal;
        while cur != start {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        Ok(path)
    }

    /// Human-readable node label used in JSON artifacts: `T3`, `S1.2`.
    pub fn node_label(&self, idx: NodeIndex) -> String {
        match self.nodes[idx] {
            NodeId::Tile(t) => format!("T{t}"),
            NodeId::Switch { lane, col } => format!("S{lane}.{col}"),
        }
    }

    /// Parses a label produced by [`node_label`](Self::node_label).
    pub fn parse_node_label(&self, label: &str) -> Result<NodeIndex> {
        let malformed = || Error::MalformedPath {
            a: label.to_string(),
            b: String::new(),
        };
        if let Some(rest) = label.strip_prefix('T') {
            let t: usize = rest.parse().map_err(|_| malformed())?;
            self.validate_tile(t)?;
            return Ok(self.tile_node(t));
        }
        if let Some(rest) = label.strip_prefix('S') {
            let (lane, col) = rest.split_once('.').ok_or_else(malformed)?;
            let lane: usize = lane.parse().map_err(|_| malformed())?;
            let col: usize = col.parse().map_err(|_| malformed())?;
            if lane >= self.lane_count || col >= self.columns {
                return Err(malformed());
            }
            return Ok(self.switch_node(lane, col));
        }
        Err(malformed())
    }

    /// Debug dump of the graph structure.
    pub fn dump(&self) -> TopologyDump {
        TopologyDump {
            tiles: (0..self.tile_count).collect(),
            switches: self
                .nodes
                .iter()
                .filter_map(|n| match n {
                    NodeId::Switch { lane, col } => Some([*lane, *col]),
                    NodeId::Tile(_) => None,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| [self.node_label(a), self.node_label(b)])
                .collect(),
        }
    }
}

/// JSON-serializable view of the graph: `{"tiles": [...], "switches":
/// [[lane,col],...], "edges": [[nodeA,nodeB],...]}`.
#[derive(Debug, Serialize)]
pub struct TopologyDump {
    pub tiles: Vec<usize>,
    pub switches: Vec<[usize; 2]>,
    pub edges: Vec<[String; 2]>,
}
