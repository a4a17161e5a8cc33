//! Path routing for scheduled transmission groups.
//!
//! Links in a group are routed one after another, most constrained first:
//! same-row links, then links grouped by column orientation, then by
//! descending spike count. Each link takes the minimum-weight path found
//! by A* over node-entry costs; after a link is routed, every node on its
//! path gains the link's spike count so later links steer around busy
//! regions. Weights reset between groups, which occupy disjoint time
//! windows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{Schedule, ScheduleGroup, ScheduleStep, ScheduledLink};
use crate::topology::{LadderTopology, LinkEndpoints, NodeIndex, NodePath, TileId};

/// Per-node accumulated routing weight; starts at 1 everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightState {
    weights: Vec<u64>,
}

impl WeightState {
    pub fn uniform(topo: &LadderTopology) -> Self {
        Self {
            weights: vec![1; topo.node_count()],
        }
    }

    pub fn weight(&self, node: NodeIndex) -> u64 {
        self.weights[node]
    }

    pub fn set_weight(&mut self, node: NodeIndex, weight: u64) {
        self.weights[node] = weight;
    }

    /// Adds `spikes` to every node on the path.
    pub fn inflate_path(&mut self, path: &[NodeIndex], spikes: u64) {
        for &node in path {
            self.weights[node] += spikes;
        }
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().sum()
    }
}

/// Cost of a path under node-entry weights: the sum over all nodes after
/// the start.
pub fn path_weight(weights: &WeightState, path: &[NodeIndex]) -> u64 {
    path.iter().skip(1).map(|&n| weights.weight(n)).sum()
}

fn orientation_rank(topo: &LadderTopology, link: &LinkEndpoints) -> u8 {
    let src = topo.col_of_tile(link.src_tile);
    let dst = topo.col_of_tile(link.dst_tile);
    match dst.cmp(&src) {
        Ordering::Greater => 0, // left to right
        Ordering::Less => 1,    // right to left
        Ordering::Equal => 2,   // same column
    }
}

/// Routing priority: same-row links first (their shortest corridor along
/// one lane side is unique), then by orientation, then by descending
/// spikes; remaining ties by endpoint ids.
pub fn sort_links(topo: &LadderTopology, links: &[ScheduledLink]) -> Vec<ScheduledLink> {
    let mut sorted = links.to_vec();
    sorted.sort_by_key(|l| {
        let cross_row = topo.row_of_tile(l.endpoints.src_tile) != topo.row_of_tile(l.endpoints.dst_tile);
        (
            cross_row,
            orientation_rank(topo, &l.endpoints),
            std::cmp::Reverse(l.spikes),
            l.endpoints.src_tile,
            l.endpoints.dst_tile,
        )
    });
    sorted
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    f: u64,
    g: u64,
    node: NodeIndex,
}

// BinaryHeap is a max-heap; reverse so the smallest (f, node) pops first.
// Breaking f-ties by node id keeps expansion order deterministic.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-weight path between two tiles, where entering node `v` costs
/// `weights(v)` and the start tile is free. The heuristic is the column
/// distance to the destination, admissible because every column advance
/// enters at least one node of weight >= 1.
pub fn a_star(
    topo: &LadderTopology,
    weights: &WeightState,
    src: TileId,
    dst: TileId,
) -> Result<NodePath> {
    topo.validate_tile(src)?;
    topo.validate_tile(dst)?;
    if src == dst {
        return Err(Error::DegenerateLink(src));
    }
    let start = topo.tile_node(src);
    let goal = topo.tile_node(dst);
    let goal_col = topo.col_of_node(goal);
    let h = |node: NodeIndex| topo.col_of_node(node).abs_diff(goal_col) as u64;

    let mut g = vec![u64::MAX; topo.node_count()];
    let mut parent = vec![usize::MAX; topo.node_count()];
    let mut heap = BinaryHeap::new();
    g[start] = 0;
    heap.push(HeapEntry {
        f: h(start),
        g: 0,
        node: start,
    });

    while let Some(entry) = heap.pop() {
        if entry.g > g[entry.node] {
            continue; // stale
        }
        if entry.node == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Ok(path);
        }
        for &next in topo.neighbors(entry.node) {
            let ng = entry.g + weights.weight(next);
            if ng < g[next] {
                g[next] = ng;
                parent[next] = entry.node;
                heap.push(HeapEntry {
                    f: ng + h(next),
                    g: ng,
                    node: next,
                });
            }
        }
    }
    Err(Error::NoRoute { src, dst })
}

/// Routes one conflict-free group: links are processed in [`sort_links`]
/// order, each routed path inflates its nodes by the link's spikes, and
/// the paths are returned in the input links' order.
pub fn route_group(topo: &LadderTopology, links: &[ScheduledLink]) -> Result<Vec<NodePath>> {
    let mut order: Vec<usize> = (0..links.len()).collect();
    let sorted = sort_links(topo, links);
    // recover each sorted entry's original index; duplicates are impossible
    // within a conflict-free group, but resolve deterministically anyway
    let mut used = vec![false; links.len()];
    for (rank, link) in sorted.iter().enumerate() {
        let idx = links
            .iter()
            .enumerate()
            .position(|(i, l)| !used[i] && l == link)
            .expect("sorted entries come from the input");
        used[idx] = true;
        order[rank] = idx;
    }

    let mut weights = WeightState::uniform(topo);
    let mut paths: Vec<NodePath> = vec![Vec::new(); links.len()];
    for &idx in &order {
        let link = &links[idx];
        let path = a_star(topo, &weights, link.endpoints.src_tile, link.endpoints.dst_tile)?;
        weights.inflate_path(&path, link.spikes);
        paths[idx] = path;
    }
    Ok(paths)
}

/// One routed link inside a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkRoute {
    pub endpoints: LinkEndpoints,
    pub path: NodePath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteGroup {
    pub offset: u64,
    pub routes: Vec<LinkRoute>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteStep {
    pub t: u64,
    pub groups: Vec<RouteGroup>,
}

/// Node paths per (time step, group, link), aligned with a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTable {
    pub steps: Vec<RouteStep>,
}

impl RouteTable {
    pub fn to_json(&self, topo: &LadderTopology) -> String {
        let file = FileTable {
            steps: self
                .steps
                .iter()
                .map(|step| FileStep {
                    t: step.t,
                    groups: step
                        .groups
                        .iter()
                        .map(|group| FileGroup {
                            offset: group.offset,
                            routes: group
                                .routes
                                .iter()
                                .map(|r| FileRoute {
                                    src: r.endpoints.src_tile,
                                    dst: r.endpoints.dst_tile,
                                    path: r.path.iter().map(|&n| topo.node_label(n)).collect(),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("route serialization cannot fail")
    }

    pub fn from_json(bytes: &[u8], topo: &LadderTopology) -> Result<Self> {
        let file: FileTable = serde_json::from_slice(bytes)?;
        let mut steps = Vec::with_capacity(file.steps.len());
        for step in file.steps {
            let mut groups = Vec::with_capacity(step.groups.len());
            for group in step.groups {
                let mut routes = Vec::with_capacity(group.routes.len());
                for route in group.routes {
                    let path: NodePath = route
                        .path
                        .iter()
                        .map(|label| topo.parse_node_label(label))
                        .collect::<Result<_>>()?;
                    topo.validate_path(&path)?;
                    routes.push(LinkRoute {
                        endpoints: LinkEndpoints::new(route.src, route.dst)?,
                        path,
                    });
                }
                groups.push(RouteGroup {
                    offset: group.offset,
                    routes,
                });
            }
            steps.push(RouteStep {
                t: step.t,
                groups,
            });
        }
        Ok(Self { steps })
    }
}

#[derive(Serialize, Deserialize)]
struct FileTable {
    steps: Vec<FileStep>,
}

#[derive(Serialize, Deserialize)]
struct FileStep {
    t: u64,
    groups: Vec<FileGroup>,
}

#[derive(Serialize, Deserialize)]
struct FileGroup {
    offset: u64,
    routes: Vec<FileRoute>,
}

#[derive(Serialize, Deserialize)]
struct FileRoute {
    src: usize,
    dst: usize,
    path: Vec<String>,
}

/// Weighted routing of every scheduled group, fresh weights per group.
pub fn route_all(topo: &LadderTopology, schedule: &Schedule) -> Result<RouteTable> {
    let mut steps = Vec::with_capacity(schedule.steps.len());
    for step in &schedule.steps {
        let mut groups = Vec::with_capacity(step.groups.len());
        for group in &step.groups {
            let paths = route_group(topo, &group.links)?;
            groups.push(RouteGroup {
                offset: group.offset,
                routes: group
                    .links
                    .iter()
                    .zip(paths)
                    .map(|(l, path)| LinkRoute {
                        endpoints: l.endpoints,
                        path,
                    })
                    .collect(),
            });
        }
        steps.push(RouteStep {
            t: step.t,
            groups,
        });
    }
    Ok(RouteTable { steps })
}

/// Canonical shortest-path routes aligned with a schedule; used by the
/// pipeline variants that skip weighted routing.
pub fn canonical_routes(topo: &LadderTopology, schedule: &Schedule) -> Result<RouteTable> {
    let mut cache: std::collections::HashMap<LinkEndpoints, NodePath> =
        std::collections::HashMap::new();
    let mut steps = Vec::with_capacity(schedule.steps.len());
    for step in &schedule.steps {
        let mut groups = Vec::with_capacity(step.groups.len());
        for group in &step.groups {
            let mut routes = Vec::with_capacity(group.links.len());
            for link in &group.links {
                if let std::collections::hash_map::Entry::Vacant(slot) =
                    cache.entry(link.endpoints)
                {
                    let path = topo
                        .canonical_shortest_path(link.endpoints.src_tile, link.endpoints.dst_tile)?;
                    slot.insert(path);
                }
                routes.push(LinkRoute {
                    endpoints: link.endpoints,
                    path: cache[&link.endpoints].clone(),
                });
            }
            groups.push(RouteGroup {
                offset: group.offset,
                routes,
            });
        }
        steps.push(RouteStep {
            t: step.t,
            groups,
        });
    }
    Ok(RouteTable { steps })
}

/// Congestion scale used while routing repaired groups. Any conflict-free
/// path costs less than the node count, so inflating occupied nodes by at
/// least that much makes a single A* run an exact disjoint-route
/// feasibility test: the returned path touches an occupied node only when
/// no disjoint path exists. Inflation stays proportional to spikes.
const REPAIR_INFLATION_SCALE: u64 = 1 << 20;

/// A transmission group being assembled during repair, with the routing
/// state needed to test whether another link fits.
struct OpenGroup {
    links: Vec<ScheduledLink>,
    paths: Vec<NodePath>,
    weights: WeightState,
    node_mask: Vec<u64>,
    gap_coverage: Vec<usize>,
}

impl OpenGroup {
    fn new(topo: &LadderTopology) -> Self {
        Self {
            links: Vec::new(),
            paths: Vec::new(),
            weights: WeightState::uniform(topo),
            node_mask: vec![0; topo.node_count().div_ceil(64)],
            gap_coverage: vec![0; topo.columns().saturating_sub(1)],
        }
    }

    fn occupies(&self, node: NodeIndex) -> bool {
        self.node_mask[node / 64] & (1 << (node % 64)) != 0
    }

    fn accept(&mut self, topo: &LadderTopology, link: ScheduledLink, path: NodePath) {
        self.weights.inflate_path(&path, link.spikes * REPAIR_INFLATION_SCALE);
        for &node in &path {
            self.node_mask[node / 64] |= 1 << (node % 64);
        }
        let (lo, hi) = topo.col_span(&link.endpoints);
        for gap in lo..hi {
            self.gap_coverage[gap] += 1;
        }
        self.links.push(link);
        self.paths.push(path);
    }
}

/// Weighted routing with post-routing repair.
///
/// Links keep their scheduled wave order (group by group, most constrained
/// first within a group) but are re-packed first-fit: a link joins the
/// earliest group in which a route exists that shares no node with the
/// group's already-routed paths, and opens a new trailing group when none
/// accepts it. Endpoint-tile sharing and column-gap capacity prune groups
/// before the A* feasibility probe, since every path must cross each
/// column gap its link spans and there are only `lane_count` segments per
/// gap. Group offsets are recomputed afterwards, so the returned schedule
/// replaces the input for simulation.
pub fn route_all_with_repair(
    topo: &LadderTopology,
    schedule: &Schedule,
    spike_cycles: u64,
) -> Result<(Schedule, RouteTable)> {
    if spike_cycles == 0 {
        return Err(Error::InvalidSpikeCycles);
    }
    let mut out_sched_steps = Vec::with_capacity(schedule.steps.len());
    let mut out_route_steps = Vec::with_capacity(schedule.steps.len());

    for step in &schedule.steps {
        let mut open: Vec<OpenGroup> = Vec::new();
        for group in &step.groups {
            for link in sort_links(topo, &group.links) {
                let (lo, hi) = topo.col_span(&link.endpoints);
                let src = topo.tile_node(link.endpoints.src_tile);
                let dst = topo.tile_node(link.endpoints.dst_tile);
                let mut placed = false;
                for g in open.iter_mut() {
                    if g.occupies(src) || g.occupies(dst) {
                        continue;
                    }
                    if (lo..hi).any(|gap| g.gap_coverage[gap] >= topo.lane_count()) {
                        continue;
                    }
                    let path =
                        a_star(topo, &g.weights, link.endpoints.src_tile, link.endpoints.dst_tile)?;
                    if path.iter().any(|&n| g.occupies(n)) {
                        continue; // no disjoint route within this group
                    }
                    g.accept(topo, link, path);
                    placed = true;
                    break;
                }
                if !placed {
                    let mut fresh = OpenGroup::new(topo);
                    let path = a_star(
                        topo,
                        &fresh.weights,
                        link.endpoints.src_tile,
                        link.endpoints.dst_tile,
                    )?;
                    fresh.accept(topo, link, path);
                    open.push(fresh);
                }
            }
        }

        let mut offset = 0u64;
        let mut sched_groups = Vec::with_capacity(open.len());
        let mut route_groups = Vec::with_capacity(open.len());
        for g in open {
            let max_spikes = g.links.iter().map(|l| l.spikes).max().unwrap_or(0);
            route_groups.push(RouteGroup {
                offset,
                routes: g
                    .links
                    .iter()
                    .zip(&g.paths)
                    .map(|(l, path)| LinkRoute {
                        endpoints: l.endpoints,
                        path: path.clone(),
                    })
                    .collect(),
            });
            sched_groups.push(ScheduleGroup {
                offset,
                links: g.links,
            });
            offset += max_spikes * spike_cycles;
        }
        out_sched_steps.push(ScheduleStep {
            t: step.t,
            groups: sched_groups,
        });
        out_route_steps.push(RouteStep {
            t: step.t,
            groups: route_groups,
        });
    }

    Ok((
        Schedule {
            steps: out_sched_steps,
        },
        RouteTable {
            steps: out_route_steps,
        },
    ))
}
