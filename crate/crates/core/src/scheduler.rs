//! Conflict-aware spike traffic scheduling.
//!
//! For every trace time step the simultaneous links are partitioned into
//! groups that can transmit together: no two links in a group conflict
//! under the configured crossing check and the group never covers a column
//! gap with more links than there are bus lanes. Groups after the first
//! are delayed by the accumulated serialization time of their predecessors
//! (max spikes in the group times the cycles per spike).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::Mapping;
use crate::topology::{LadderTopology, LinkEndpoints, NodePath};
use crate::workload::SpikeTrace;

/// Which conflict predicate grouping uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingMode {
    /// Column-interval interleaving (or a shared tile) on mapped endpoints.
    Topological,
    /// Node sharing between the links' canonical shortest paths.
    ShortestPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub crossing_mode: CrossingMode,
    /// Cycles needed to serialize one spike onto the bus.
    pub spike_cycles: u64,
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spike_cycles == 0 {
            return Err(Error::InvalidSpikeCycles);
        }
        Ok(())
    }
}

/// One transmission: a mapped link and the spikes it sends this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledLink {
    #[serde(flatten)]
    pub endpoints: LinkEndpoints,
    pub spikes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleGroup {
    pub offset: u64,
    pub links: Vec<ScheduledLink>,
}

impl ScheduleGroup {
    pub fn max_spikes(&self) -> u64 {
        self.links.iter().map(|l| l.spikes).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub t: u64,
    pub groups: Vec<ScheduleGroup>,
}

/// Per-time-step transmission groups with cycle offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub steps: Vec<ScheduleStep>,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialization cannot fail")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let schedule: Schedule = serde_json::from_slice(bytes)?;
        for step in &schedule.steps {
            for group in &step.groups {
                for link in &group.links {
                    if link.endpoints.src_tile == link.endpoints.dst_tile {
                        return Err(Error::DegenerateLink(link.endpoints.src_tile));
                    }
                    if link.spikes == 0 {
                        return Err(Error::NonPositiveSpikes {
                            t: step.t,
                            src: link.endpoints.src_tile,
                            dst: link.endpoints.dst_tile,
                            spikes: 0,
                        });
                    }
                }
            }
        }
        Ok(schedule)
    }
}

/// Canonical shortest paths per link, shared by the shortest-path crossing
/// check and by the pipelines that route along them. Node sets are kept as
/// bitmasks so conflict checks avoid repeated path walks.
pub(crate) struct PathCache {
    paths: HashMap<LinkEndpoints, (NodePath, Vec<u64>)>,
    words: usize,
}

impl PathCache {
    pub(crate) fn new(topo: &LadderTopology) -> Self {
        Self {
            paths: HashMap::new(),
            words: topo.node_count().div_ceil(64),
        }
    }

    pub(crate) fn get(
        &mut self,
        topo: &LadderTopology,
        link: &LinkEndpoints,
    ) -> Result<&(NodePath, Vec<u64>)> {
        if let std::collections::hash_map::Entry::Vacant(slot) = self.paths.entry(*link) {
            let path = topo.canonical_shortest_path(link.src_tile, link.dst_tile)?;
            let mut mask = vec![0u64; self.words];
            for &node in &path {
                mask[node / 64] |= 1 << (node % 64);
            }
            slot.insert((path, mask));
        }
        Ok(&self.paths[link])
    }

    fn masks_intersect(a: &[u64], b: &[u64]) -> bool {
        a.iter().zip(b).any(|(x, y)| x & y != 0)
    }

    fn conflict(&mut self, topo: &LadderTopology, a: &LinkEndpoints, b: &LinkEndpoints) -> Result<bool> {
        self.get(topo, a)?;
        self.get(topo, b)?;
        Ok(Self::masks_intersect(&self.paths[a].1, &self.paths[b].1))
    }
}

fn links_conflict(
    topo: &LadderTopology,
    mode: CrossingMode,
    cache: &mut PathCache,
    a: &LinkEndpoints,
    b: &LinkEndpoints,
) -> Result<bool> {
    match mode {
        CrossingMode::Topological => Ok(topo.topological_cross(a, b)),
        CrossingMode::ShortestPath => cache.conflict(topo, a, b),
    }
}

fn map_events(
    events: &[crate::workload::SpikeEvent],
    mapping: &Mapping,
) -> Result<Vec<ScheduledLink>> {
    events
        .iter()
        .map(|e| {
            Ok(ScheduledLink {
                endpoints: mapping.map_link(e.src, e.dst)?,
                spikes: e.spikes,
            })
        })
        .collect()
}

/// Groups every time step's links first-fit in descending spike order
/// (ties by ascending endpoints) and assigns cycle offsets. A link joins
/// the first group where it conflicts with no member and the group stays
/// lane-feasible; otherwise it opens a new group.
pub fn schedule(
    trace: &SpikeTrace,
    mapping: &Mapping,
    topo: &LadderTopology,
    config: &SchedulerConfig,
) -> Result<Schedule> {
    config.validate()?;
    mapping.validate(mapping.cluster_count(), topo)?;
    let mut cache = PathCache::new(topo);
    let mut steps = Vec::new();
    for (t, events) in trace.steps() {
        let mut links = map_events(events, mapping)?;
        links.sort_by_key(|l| {
            (
                std::cmp::Reverse(l.spikes),
                l.endpoints.src_tile,
                l.endpoints.dst_tile,
            )
        });

        let mut groups: Vec<Vec<ScheduledLink>> = Vec::new();
        for link in links {
            let mut placed = false;
            for group in &mut groups {
                let mut crossed = false;
                for member in group.iter() {
                    if links_conflict(topo, config.crossing_mode, &mut cache, &link.endpoints, &member.endpoints)? {
                        crossed = true;
                        break;
                    }
                }
                if crossed {
                    continue;
                }
                let mut endpoints: Vec<LinkEndpoints> =
                    group.iter().map(|l| l.endpoints).collect();
                endpoints.push(link.endpoints);
                if !topo.lane_overlap_feasible(&endpoints) {
                    continue;
                }
                group.push(link);
                placed = true;
                break;
            }
            if !placed {
                groups.push(vec![link]);
            }
        }

        let mut offset = 0u64;
        let mut out_groups = Vec::with_capacity(groups.len());
        for links in groups {
            let max_spikes = links.iter().map(|l| l.spikes).max().unwrap_or(0);
            out_groups.push(ScheduleGroup { offset, links });
            offset += max_spikes * config.spike_cycles;
        }
        steps.push(ScheduleStep {
            t,
            groups: out_groups,
        });
    }
    Ok(Schedule { steps })
}

/// Degenerate schedule used by the unscheduled pipeline variants: every
/// step keeps all its links in one group at offset 0, in trace order.
pub fn unscheduled(trace: &SpikeTrace, mapping: &Mapping, topo: &LadderTopology) -> Result<Schedule> {
    mapping.validate(mapping.cluster_count(), topo)?;
    let mut steps = Vec::new();
    for (t, events) in trace.steps() {
        let links = map_events(events, mapping)?;
        steps.push(ScheduleStep {
            t,
            groups: vec![ScheduleGroup { offset: 0, links }],
        });
    }
    Ok(Schedule { steps })
}

/// Exact minimum number of conflict-free, lane-feasible groups for one
/// step's cluster links, by exhaustive set-partition search. Guarded to 12
/// links.
pub fn min_groups_oracle(
    links: &[(usize, usize, u64)],
    mapping: &Mapping,
    topo: &LadderTopology,
    config: &SchedulerConfig,
) -> Result<usize> {
    config.validate()?;
    if links.len() > 12 {
        return Err(Error::OracleTooLarge(links.len()));
    }
    let mapped: Vec<LinkEndpoints> = links
        .iter()
        .map(|&(src, dst, _)| mapping.map_link(src, dst))
        .collect::<Result<_>>()?;
    if mapped.is_empty() {
        return Ok(0);
    }

    let n = mapped.len();
    let mut cache = PathCache::new(topo);
    let mut conflicts = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                conflicts[i * n + j] =
                    links_conflict(topo, config.crossing_mode, &mut cache, &mapped[i], &mapped[j])?;
            }
        }
    }

    fn fits(
        candidate: usize,
        group: &[usize],
        mapped: &[LinkEndpoints],
        conflicts: &[bool],
        n: usize,
        topo: &LadderTopology,
    ) -> bool {
        if group.iter().any(|&m| conflicts[candidate * n + m]) {
            return false;
        }
        let mut endpoints: Vec<LinkEndpoints> = group.iter().map(|&m| mapped[m]).collect();
        endpoints.push(mapped[candidate]);
        topo.lane_overlap_feasible(&endpoints)
    }

    fn search(
        next: usize,
        groups: &mut Vec<Vec<usize>>,
        best: &mut usize,
        mapped: &[LinkEndpoints],
        conflicts: &[bool],
        n: usize,
        topo: &LadderTopology,
    ) {
        if groups.len() >= *best {
            return;
        }
        if next == n {
            *best = groups.len();
            return;
        }
        for g in 0..groups.len() {
            if fits(next, &groups[g], mapped, conflicts, n, topo) {
                groups[g].push(next);
                search(next + 1, groups, best, mapped, conflicts, n, topo);
                groups[g].pop();
            }
        }
        groups.push(vec![next]);
        search(next + 1, groups, best, mapped, conflicts, n, topo);
        groups.pop();
    }

    // Singleton groups are always feasible, so n is an achievable bound.
    let mut best = n;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    search(0, &mut groups, &mut best, &mapped, &conflicts, n, topo);
    Ok(best)
}

/// Longest per-step completion time: last group offset plus its
/// serialization span.
pub fn schedule_makespan(schedule: &Schedule, spike_cycles: u64) -> u64 {
    schedule
        .steps
        .iter()
        .filter_map(|step| {
            step.groups
                .last()
                .map(|g| g.offset + g.max_spikes() * spike_cycles)
        })
        .max()
        .unwrap_or(0)
}
