//! Deterministic discrete-event simulation of the bufferless bus.
//!
//! The simulator replays a trace under a mapping, schedule and route
//! table. Within a time step every group starts at its cycle offset and
//! each link holds all segments of its path for the full serialization of
//! its spikes. Links reserve segments in route order; a link that finds
//! any required segment already held over an overlapping interval drops
//! all of its spikes for that step, since the bufferless source cannot
//! interleave into an occupied circuit. Energy counts segment traversals
//! (partial up to the blocking segment for dropped traffic) plus switch
//! reconfigurations tracked across the whole run.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::{self, Mapping, MapperConfig};
use crate::router::{self, RouteTable};
use crate::scheduler::{self, Schedule, ScheduledLink, SchedulerConfig, CrossingMode};
use crate::topology::{LadderTopology, NodeId, NodeIndex};
use crate::workload::{ClusterGraph, SpikeTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Cycles to serialize one spike; must match the scheduler's value.
    pub spike_cycles: u64,
    /// Normalized energy per segment traversal per spike.
    pub energy_per_segment: f64,
    /// Normalized energy per switch reconfiguration.
    pub energy_per_switch_config: f64,
    /// Cycle budget per time step; a schedule that does not fit is an
    /// error, never a silent wraparound.
    pub cycles_per_time_step: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            spike_cycles: 1,
            energy_per_segment: 1.0,
            energy_per_switch_config: 1.0,
            cycles_per_time_step: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spike_cycles == 0 {
            return Err(Error::InvalidSpikeCycles);
        }
        if self.cycles_per_time_step == 0 {
            return Err(Error::InvalidSimConfig(
                "cycles_per_time_step must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("energy_per_segment", self.energy_per_segment),
            ("energy_per_switch_config", self.energy_per_switch_config),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSimConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: u64,
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub energy: f64,
}

/// Simulation metrics. `offered = delivered + dropped` always holds;
/// `energy_per_spike` is null when nothing was delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub spikes_offered: u64,
    pub spikes_delivered: u64,
    pub spikes_dropped: u64,
    pub spike_received_ratio: f64,
    pub avg_latency_cycles: f64,
    pub total_dynamic_energy: f64,
    pub energy_per_spike: Option<f64>,
    pub edp: f64,
    pub steps: Vec<StepReport>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

const PORT_UP: u8 = 0;
const PORT_DOWN: u8 = 1;
const PORT_EAST: u8 = 2;
const PORT_WEST: u8 = 3;

fn port_towards(topo: &LadderTopology, switch: NodeIndex, other: NodeIndex) -> u8 {
    let NodeId::Switch { lane, col } = topo.node(switch) else {
        unreachable!("interior path nodes are switches");
    };
    match topo.node(other) {
        NodeId::Switch { lane: l2, col: c2 } => {
            if l2 == lane {
                if c2 == col + 1 {
                    PORT_EAST
                } else {
                    PORT_WEST
                }
            } else if l2 < lane {
                PORT_UP
            } else {
                PORT_DOWN
            }
        }
        NodeId::Tile(t) => {
            if topo.row_of_tile(t) == 0 {
                PORT_UP
            } else {
                PORT_DOWN
            }
        }
    }
}

/// Unordered port pair a switch connects while carrying a path.
fn switch_connection(topo: &LadderTopology, prev: NodeIndex, sw: NodeIndex, next: NodeIndex) -> (u8, u8) {
    let a = port_towards(topo, sw, prev);
    let b = port_towards(topo, sw, next);
    (a.min(b), a.max(b))
}

/// Group offsets must accumulate earlier groups' serialization spans
/// under the simulator's cycles-per-spike value; a mismatch means the
/// schedule was built with a different `spike_cycles`.
fn check_offsets(schedule: &Schedule, spike_cycles: u64) -> Result<()> {
    for step in &schedule.steps {
        let mut expect = 0u64;
        for group in &step.groups {
            if group.offset != expect {
                return Err(Error::IncompleteSchedule(format!(
                    "step {}: group offset {} does not match the accumulated \
                     serialization time {} for spike_cycles {}",
                    step.t, group.offset, expect, spike_cycles
                )));
            }
            expect += group.max_spikes() * spike_cycles;
        }
    }
    Ok(())
}

fn check_coverage(
    trace: &SpikeTrace,
    mapping: &Mapping,
    schedule: &Schedule,
) -> Result<()> {
    let steps = trace.steps();
    if steps.len() != schedule.steps.len() {
        return Err(Error::IncompleteSchedule(format!(
            "trace has {} steps, schedule has {}",
            steps.len(),
            schedule.steps.len()
        )));
    }
    for ((t, events), step) in steps.iter().zip(&schedule.steps) {
        if *t != step.t {
            return Err(Error::IncompleteSchedule(format!(
                "trace step {t} does not match schedule step {}",
                step.t
            )));
        }
        let mut expected: Vec<ScheduledLink> = events
            .iter()
            .map(|e| {
                Ok(ScheduledLink {
                    endpoints: mapping.map_link(e.src, e.dst)?,
                    spikes: e.spikes,
                })
            })
            .collect::<Result<_>>()?;
        let mut scheduled: Vec<ScheduledLink> = step
            .groups
            .iter()
            .flat_map(|g| g.links.iter().copied())
            .collect();
        expected.sort_by_key(|l| (l.endpoints.src_tile, l.endpoints.dst_tile, l.spikes));
        scheduled.sort_by_key(|l| (l.endpoints.src_tile, l.endpoints.dst_tile, l.spikes));
        if expected != scheduled {
            return Err(Error::IncompleteSchedule(format!(
                "step {t}: scheduled links do not match the trace"
            )));
        }
    }
    Ok(())
}

fn check_routes(topo: &LadderTopology, schedule: &Schedule, routes: &RouteTable) -> Result<()> {
    if schedule.steps.len() != routes.steps.len() {
        return Err(Error::InconsistentRoutes(format!(
            "schedule has {} steps, routes have {}",
            schedule.steps.len(),
            routes.steps.len()
        )));
    }
    for (sstep, rstep) in schedule.steps.iter().zip(&routes.steps) {
        if sstep.t != rstep.t || sstep.groups.len() != rstep.groups.len() {
            return Err(Error::InconsistentRoutes(format!(
                "step {} structure mismatch",
                sstep.t
            )));
        }
        for (sg, rg) in sstep.groups.iter().zip(&rstep.groups) {
            if sg.offset != rg.offset || sg.links.len() != rg.routes.len() {
                return Err(Error::InconsistentRoutes(format!(
                    "step {} group shape mismatch",
                    sstep.t
                )));
            }
            for (link, route) in sg.links.iter().zip(&rg.routes) {
                if link.endpoints != route.endpoints {
                    return Err(Error::InconsistentRoutes(format!(
                        "step {}: link {:?} routed as {:?}",
                        sstep.t, link.endpoints, route.endpoints
                    )));
                }
                topo.validate_path(&route.path)?;
                let ok_ends = route.path.first() == Some(&topo.tile_node(link.endpoints.src_tile))
                    && route.path.last() == Some(&topo.tile_node(link.endpoints.dst_tile));
                if !ok_ends {
                    return Err(Error::InconsistentRoutes(format!(
                        "step {}: path endpoints do not match link {:?}",
                        sstep.t, link.endpoints
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                if !route.path.iter().all(|n| seen.insert(*n)) {
                    return Err(Error::InconsistentRoutes(format!(
                        "step {}: path for {:?} repeats a node",
                        sstep.t, link.endpoints
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Replays the trace and reports loss, latency, energy and EDP.
pub fn simulate(
    topo: &LadderTopology,
    trace: &SpikeTrace,
    mapping: &Mapping,
    schedule: &Schedule,
    routes: &RouteTable,
    config: &SimConfig,
) -> Result<SimReport> {
    config.validate()?;
    mapping.validate(mapping.cluster_count(), topo)?;
    check_offsets(schedule, config.spike_cycles)?;
    check_coverage(trace, mapping, schedule)?;
    check_routes(topo, schedule, routes)?;

    let n = config.spike_cycles;
    let overflowing: Vec<u64> = schedule
        .steps
        .iter()
        .filter(|step| {
            step.groups
                .last()
                .map(|g| g.offset + g.max_spikes() * n > config.cycles_per_time_step)
                .unwrap_or(false)
        })
        .map(|step| step.t)
        .collect();
    if !overflowing.is_empty() {
        return Err(Error::BudgetOverflow(overflowing));
    }

    let mut switch_state: Vec<Option<(u8, u8)>> = vec![None; topo.node_count()];
    let mut offered = 0u64;
    let mut delivered = 0u64;
    let mut dropped = 0u64;
    let mut latency_sum = 0u64;
    let mut segment_spikes_total = 0u64;
    let mut reconfigs_total = 0u64;
    let mut step_reports = Vec::with_capacity(schedule.steps.len());

    for (sstep, rstep) in schedule.steps.iter().zip(&routes.steps) {
        let mut reservations: HashMap<usize, Vec<(u64, u64)>> = HashMap::new();
        let mut step_offered = 0u64;
        let mut step_delivered = 0u64;
        let mut step_dropped = 0u64;
        let mut step_segment_spikes = 0u64;
        let mut step_reconfigs = 0u64;

        for (sg, rg) in sstep.groups.iter().zip(&rstep.groups) {
            for (link, route) in sg.links.iter().zip(&rg.routes) {
                let spikes = link.spikes;
                step_offered += spikes;
                let start = sg.offset;
                let end = start + spikes * n;
                let edges: Vec<usize> = route
                    .path
                    .windows(2)
                    .map(|w| topo.edge_between(w[0], w[1]).expect("validated path"))
                    .collect();

                let blocked_at = edges.iter().position(|edge| {
                    reservations
                        .get(edge)
                        .map(|held| held.iter().any(|&(s, e)| start < e && s < end))
                        .unwrap_or(false)
                });

                match blocked_at {
                    Some(k) => {
                        // whole-link drop: spikes traverse only the segments
                        // before the blocking one
                        step_dropped += spikes;
                        step_segment_spikes += spikes * k as u64;
                    }
                    None => {
                        for &edge in &edges {
                            reservations.entry(edge).or_default().push((start, end));
                        }
                        step_delivered += spikes;
                        let path_edges = edges.len() as u64;
                        latency_sum += spikes * (start + path_edges)
                            + n * (spikes * spikes.saturating_sub(1)) / 2;
                        step_segment_spikes += spikes * path_edges;
                        for w in route.path.windows(3) {
                            let connection = switch_connection(topo, w[0], w[1], w[2]);
                            match switch_state[w[1]] {
                                Some(current) if current == connection => {}
                                Some(_) => {
                                    step_reconfigs += 1;
                                    switch_state[w[1]] = Some(connection);
                                }
                                None => switch_state[w[1]] = Some(connection),
                            }
                        }
                    }
                }
            }
        }

        offered += step_offered;
        delivered += step_delivered;
        dropped += step_dropped;
        segment_spikes_total += step_segment_spikes;
        reconfigs_total += step_reconfigs;
        step_reports.push(StepReport {
            t: sstep.t,
            offered: step_offered,
            delivered: step_delivered,
            dropped: step_dropped,
            energy: config.energy_per_segment * step_segment_spikes as f64
                + config.energy_per_switch_config * step_reconfigs as f64,
        });
    }

    let total_dynamic_energy = config.energy_per_segment * segment_spikes_total as f64
        + config.energy_per_switch_config * reconfigs_total as f64;
    let spike_received_ratio = if offered == 0 {
        1.0
    } else {
        delivered as f64 / offered as f64
    };
    let avg_latency_cycles = if delivered == 0 {
        0.0
    } else {
        latency_sum as f64 / delivered as f64
    };
    Ok(SimReport {
        spikes_offered: offered,
        spikes_delivered: delivered,
        spikes_dropped: dropped,
        spike_received_ratio,
        avg_latency_cycles,
        total_dynamic_energy,
        energy_per_spike: (delivered > 0).then(|| total_dynamic_energy / delivered as f64),
        edp: total_dynamic_energy * avg_latency_cycles,
        steps: step_reports,
    })
}

/// Deployment pipeline presets.
///
/// All variants place clusters with hill climbing; `De` minimizes dynamic
/// energy, the rest minimize crossing weight. They differ in scheduling
/// (none, topological check, shortest-path check) and routing (canonical
/// shortest paths vs. weighted routing with repair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sl,
    De,
    Txs,
    Spxs,
    Sr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Sl,
        Variant::De,
        Variant::Txs,
        Variant::Spxs,
        Variant::Sr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sl => "sl",
            Variant::De => "de",
            Variant::Txs => "txs",
            Variant::Spxs => "spxs",
            Variant::Sr => "sr",
        }
    }

    /// Mapper cost weights (alpha, beta) for this variant.
    pub fn mapper_weights(&self) -> (f64, f64) {
        match self {
            Variant::De => (1.0, 0.0),
            _ => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sl" => Ok(Variant::Sl),
            "de" => Ok(Variant::De),
            "txs" => Ok(Variant::Txs),
            "spxs" => Ok(Variant::Spxs),
            "sr" => Ok(Variant::Sr),
            other => Err(format!(
                "unknown variant '{other}' (expected sl|de|txs|spxs|sr)"
            )),
        }
    }
}

/// Knobs shared by every pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub perturbations: usize,
    /// Local search iteration cap; `None` means the tile count.
    pub max_iterations: Option<usize>,
    pub mapper_seed: u64,
    pub spike_cycles: u64,
    pub energy_per_segment: f64,
    pub energy_per_switch_config: f64,
    pub cycles_per_time_step: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            perturbations: 4,
            max_iterations: None,
            mapper_seed: 1,
            spike_cycles: 1,
            energy_per_segment: 1.0,
            energy_per_switch_config: 1.0,
            cycles_per_time_step: 1_000_000,
        }
    }
}

impl PipelineOptions {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            spike_cycles: self.spike_cycles,
            energy_per_segment: self.energy_per_segment,
            energy_per_switch_config: self.energy_per_switch_config,
            cycles_per_time_step: self.cycles_per_time_step,
        }
    }

    pub fn mapper_config(&self, variant: Variant, topo: &LadderTopology) -> MapperConfig {
        let (alpha, beta) = variant.mapper_weights();
        MapperConfig {
            alpha,
            beta,
            perturbations: self.perturbations,
            max_iterations: self.max_iterations.unwrap_or_else(|| topo.tile_count()),
            seed: self.mapper_seed,
        }
    }
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub variant: Variant,
    pub mapping: Mapping,
    pub mapping_cost: f64,
    pub mapper_config: MapperConfig,
    pub schedule: Schedule,
    pub routes: RouteTable,
    pub report: SimReport,
}

/// Runs map -> schedule -> route -> simulate for one variant.
pub fn run_pipeline(
    graph: &ClusterGraph,
    trace: &SpikeTrace,
    topo: &LadderTopology,
    variant: Variant,
    opts: &PipelineOptions,
) -> Result<PipelineArtifacts> {
    let mapper_config = opts.mapper_config(variant, topo);
    let outcome = mapper::hill_climb(graph, topo, &mapper_config)?;
    let mapping = outcome.mapping;

    let (schedule, routes) = match variant {
        Variant::Sl | Variant::De => {
            let sched = scheduler::unscheduled(trace, &mapping, topo)?;
            let routes = router::canonical_routes(topo, &sched)?;
            (sched, routes)
        }
        Variant::Txs | Variant::Spxs => {
            let mode = if variant == Variant::Txs {
                CrossingMode::Topological
            } else {
                CrossingMode::ShortestPath
            };
            let sched = scheduler::schedule(
                trace,
                &mapping,
                topo,
                &SchedulerConfig {
                    crossing_mode: mode,
                    spike_cycles: opts.spike_cycles,
                },
            )?;
            let routes = router::canonical_routes(topo, &sched)?;
            (sched, routes)
        }
        Variant::Sr => {
            let sched = scheduler::schedule(
                trace,
                &mapping,
                topo,
                &SchedulerConfig {
                    crossing_mode: CrossingMode::Topological,
                    spike_cycles: opts.spike_cycles,
                },
            )?;
            router::route_all_with_repair(topo, &sched, opts.spike_cycles)?
        }
    };

    let report = simulate(topo, trace, &mapping, &schedule, &routes, &opts.sim_config())?;
    Ok(PipelineArtifacts {
        variant,
        mapping,
        mapping_cost: outcome.cost,
        mapper_config,
        schedule,
        routes,
        report,
    })
}
