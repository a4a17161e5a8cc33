//! Cluster communication graphs and timed spike traces.
//!
//! A workload is the pair (cluster graph, spike trace): the graph carries
//! the aggregate spike count per directed cluster link, the trace the exact
//! per-time-step firing events. Workloads are parsed from JSON, synthesized
//! from a seeded generator, and summarized into the connectivity statistics
//! that drive lane provisioning.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::partial_shuffle;

/// Directed cluster connectivity with total spike weight per link.
///
/// Link set and weights always agree with the trace they were derived
/// from: a link exists iff it fires at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGraph {
    cluster_count: usize,
    links: BTreeMap<(usize, usize), u64>,
}

impl ClusterGraph {
    /// Builds a graph from explicit links. Primarily for tests and tools;
    /// pipeline graphs come from [`parse_workload`] or [`synthesize`].
    pub fn from_links<I>(cluster_count: usize, links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, u64)>,
    {
        let mut map = BTreeMap::new();
        for (src, dst, spikes) in links {
            validate_link_ids(cluster_count, src, dst)?;
            if spikes == 0 {
                return Err(Error::NonPositiveSpikes {
                    t: 0,
                    src,
                    dst,
                    spikes: 0,
                });
            }
            *map.entry((src, dst)).or_insert(0) += spikes;
        }
        Ok(Self {
            cluster_count,
            links: map,
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Total spikes on link (src, dst) over the whole trace; 0 if inactive.
    pub fn spikes(&self, src: usize, dst: usize) -> u64 {
        self.links.get(&(src, dst)).copied().unwrap_or(0)
    }

    /// Active links in deterministic (src, dst) order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.links.iter().map(|(&(s, d), &w)| (s, d, w))
    }

    pub fn total_spikes(&self) -> u64 {
        self.links.values().sum()
    }
}

/// One aggregated firing: `spikes` spikes on link (src, dst) at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub t: u64,
    pub src: usize,
    pub dst: usize,
    pub spikes: u64,
}

/// Timed spike traffic, sorted by (t, src, dst) with unique keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrace {
    events: Vec<SpikeEvent>,
}

impl SpikeTrace {
    pub fn new(mut events: Vec<SpikeEvent>, cluster_count: usize) -> Result<Self> {
        for e in &events {
            validate_link_ids(cluster_count, e.src, e.dst)?;
            if e.spikes == 0 {
                return Err(Error::NonPositiveSpikes {
                    t: e.t,
                    src: e.src,
                    dst: e.dst,
                    spikes: 0,
                });
            }
        }
        events.sort_unstable_by_key(|e| (e.t, e.src, e.dst));
        for w in events.windows(2) {
            if (w[0].t, w[0].src, w[0].dst) == (w[1].t, w[1].src, w[1].dst) {
                return Err(Error::DuplicateEvent {
                    t: w[0].t,
                    src: w[0].src,
                    dst: w[0].dst,
                });
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_spikes(&self) -> u64 {
        self.events.iter().map(|e| e.spikes).sum()
    }

    /// Events grouped by time step, in ascending step order.
    pub fn steps(&self) -> Vec<(u64, &[SpikeEvent])> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.events.len() {
            let t = self.events[start].t;
            let mut end = start;
            while end < self.events.len() && self.events[end].t == t {
                end += 1;
            }
            out.push((t, &self.events[start..end]));
            start = end;
        }
        out
    }

    /// Aggregates the trace into its cluster graph.
    pub fn derive_graph(&self, cluster_count: usize) -> ClusterGraph {
        let mut links: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for e in &self.events {
            *links.entry((e.src, e.dst)).or_insert(0) += e.spikes;
        }
        ClusterGraph {
            cluster_count,
            links,
        }
    }
}

fn validate_link_ids(cluster_count: usize, src: usize, dst: usize) -> Result<()> {
    if src >= cluster_count {
        return Err(Error::InvalidCluster {
            id: src,
            clusters: cluster_count,
        });
    }
    if dst >= cluster_count {
        return Err(Error::InvalidCluster {
            id: dst,
            clusters: cluster_count,
        });
    }
    if src == dst {
        return Err(Error::SelfLink(src));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct WorkloadFile {
    clusters: usize,
    events: Vec<RawEvent>,
}

#[derive(Serialize, Deserialize)]
struct RawEvent {
    t: u64,
    src: usize,
    dst: usize,
    spikes: i64,
}

/// Parses the workload JSON schema
/// `{"clusters": n, "events": [{"t", "src", "dst", "spikes"}, ...]}`.
/// Events may arrive unsorted; the trace is canonicalized on load.
pub fn parse_workload(bytes: &[u8]) -> Result<(ClusterGraph, SpikeTrace)> {
    let file: WorkloadFile = serde_json::from_slice(bytes)?;
    let mut events = Vec::with_capacity(file.events.len());
    for raw in file.events {
        if raw.spikes <= 0 {
            return Err(Error::NonPositiveSpikes {
                t: raw.t,
                src: raw.src,
                dst: raw.dst,
                spikes: raw.spikes,
            });
        }
        events.push(SpikeEvent {
            t: raw.t,
            src: raw.src,
            dst: raw.dst,
            spikes: raw.spikes as u64,
        });
    }
    let trace = SpikeTrace::new(events, file.clusters)?;
    let graph = trace.derive_graph(file.clusters);
    Ok((graph, trace))
}

/// Serializes a workload back into the JSON schema accepted by
/// [`parse_workload`].
pub fn serialize_workload(cluster_count: usize, trace: &SpikeTrace) -> String {
    let file = WorkloadFile {
        clusters: cluster_count,
        events: trace
            .events()
            .iter()
            .map(|e| RawEvent {
                t: e.t,
                src: e.src,
                dst: e.dst,
                spikes: e.spikes as i64,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("workload serialization cannot fail")
}

/// Connectivity summary of a cluster graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub cluster_count: usize,
    pub link_count: usize,
    pub avg_degree: f64,
    pub density: f64,
    pub suggested_lanes: usize,
}

impl WorkloadStats {
    pub fn csv_header() -> &'static str {
        "clusters,links,avg_degree,density,suggested_lanes"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{}",
            self.cluster_count, self.link_count, self.avg_degree, self.density, self.suggested_lanes
        )
    }
}

/// Lane provisioning heuristic: smallest integer whose square covers the
/// cluster count.
pub fn suggested_lanes(cluster_count: usize) -> usize {
    let mut lanes = (cluster_count as f64).sqrt().ceil() as usize;
    while lanes * lanes < cluster_count {
        lanes += 1;
    }
    while lanes > 1 && (lanes - 1) * (lanes - 1) >= cluster_count {
        lanes -= 1;
    }
    lanes.max(1)
}

/// Computes average degree `|L|/|C|`, density `2|L|/(|C|(|C|-1))` and the
/// lane heuristic.
pub fn stats(graph: &ClusterGraph) -> Result<WorkloadStats> {
    let c = graph.cluster_count();
    if c < 2 {
        return Err(Error::TooFewClusters(c));
    }
    let l = graph.link_count();
    Ok(WorkloadStats {
        cluster_count: c,
        link_count: l,
        avg_degree: l as f64 / c as f64,
        density: 2.0 * l as f64 / (c as f64 * (c as f64 - 1.0)),
        suggested_lanes: suggested_lanes(c),
    })
}

const MAX_SPIKES_PER_EVENT: u64 = 10;

/// Generates a random workload: a directed graph with
/// `round(target_avg_degree * cluster_count)` distinct links and a trace of
/// `time_steps` active steps. `burstiness` in [0, 1] sets the fraction of
/// links firing together in a step; every link fires at least once so the
/// derived graph matches the link sample exactly. Fully reproducible from
/// `seed`.
pub fn synthesize(
    cluster_count: usize,
    target_avg_degree: f64,
    burstiness: f64,
    time_steps: u64,
    seed: u64,
) -> Result<(ClusterGraph, SpikeTrace)> {
    if cluster_count < 2 || time_steps < 1 {
        return Err(Error::InvalidGenerator);
    }
    if !(0.0..=1.0).contains(&burstiness) || !target_avg_degree.is_finite() || target_avg_degree < 0.0
    {
        return Err(Error::InvalidGenerator);
    }
    let link_target = (target_avg_degree * cluster_count as f64).round() as usize;
    let max_links = cluster_count * (cluster_count - 1);
    if link_target > max_links {
        return Err(Error::InfeasibleDegree {
            degree: target_avg_degree,
            clusters: cluster_count,
            links: link_target,
            max: max_links,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pairs = Vec::with_capacity(max_links);
    for src in 0..cluster_count {
        for dst in 0..cluster_count {
            if src != dst {
                pairs.push((src, dst));
            }
        }
    }
    partial_shuffle(&mut pairs, link_target, &mut rng);
    let links: Vec<(usize, usize)> = pairs[..link_target].to_vec();

    let mut events = Vec::new();
    if !links.is_empty() {
        // Coverage pass: spread each link's first firing round-robin over
        // the steps so the trace reproduces the sampled link set.
        let mut order = links.clone();
        let all = order.len();
        partial_shuffle(&mut order, all, &mut rng);
        let steps = time_steps as usize;
        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); steps];
        for (idx, link) in order.iter().enumerate() {
            members[idx % steps].push(*link);
        }
        let burst_target = ((burstiness * links.len() as f64).round() as usize).max(1);
        for (step, base) in members.iter_mut().enumerate() {
            if base.len() < burst_target {
                let mut extra: Vec<(usize, usize)> = links
                    .iter()
                    .filter(|l| !base.contains(l))
                    .copied()
                    .collect();
                let need = burst_target - base.len();
                partial_shuffle(&mut extra, need, &mut rng);
                base.extend_from_slice(&extra[..need.min(extra.len())]);
            }
            for &(src, dst) in base.iter() {
                events.push(SpikeEvent {
                    t: step as u64,
                    src,
                    dst,
                    spikes: rng.gen_range(1..=MAX_SPIKES_PER_EVENT),
                });
            }
        }
    }

    let trace = SpikeTrace::new(events, cluster_count)?;
    let graph = trace.derive_graph(cluster_count);
    debug_assert_eq!(graph.link_count(), links.len());
    Ok((graph, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn parse_minimal() {
        let input = br#"{"clusters": 2, "events": [{"t": 0, "src": 0, "dst": 1, "spikes": 5}]}"#;
        let (graph, trace) = parse_workload(input).unwrap();
        assert_eq!(graph.cluster_count(), 2);
        assert_eq!(graph.link_count(), 1);
        assert_eq!(graph.spikes(0, 1), 5);
        assert_eq!(trace.events().len(), 1);
    }

    #[test]
    fn parse_aggregates_over_time() {
        let input = br#"{"clusters": 2, "events": [
            {"t": 4, "src": 0, "dst": 1, "spikes": 2},
            {"t": 0, "src": 0, "dst": 1, "spikes": 3}]}"#;
        let (graph, trace) = parse_workload(input).unwrap();
        assert_eq!(graph.spikes(0, 1), 5);
        assert_eq!(trace.events().len(), 2);
        // canonicalized ordering
        assert_eq!(trace.events()[0].t, 0);
        assert_eq!(trace.events()[1].t, 4);
    }

    #[test]
    fn parse_rejects_self_link() {
        let input = br#"{"clusters": 3, "events": [{"t": 0, "src": 2, "dst": 2, "spikes": 1}]}"#;
        assert!(matches!(parse_workload(input), Err(Error::SelfLink(2))));
    }

    #[test]
    fn parse_rejects_duplicate_event() {
        let input = br#"{"clusters": 2, "events": [
            {"t": 1, "src": 0, "dst": 1, "spikes": 1},
            {"t": 1, "src": 0, "dst": 1, "spikes": 2}]}"#;
        assert!(matches!(
            parse_workload(input),
            Err(Error::DuplicateEvent { t: 1, src: 0, dst: 1 })
        ));
    }

    #[test]
    fn parse_rejects_non_positive_spikes() {
        for spikes in ["0", "-3"] {
            let input = format!(
                r#"{{"clusters": 2, "events": [{{"t": 0, "src": 0, "dst": 1, "spikes": {spikes}}}]}}"#
            );
            assert!(matches!(
                parse_workload(input.as_bytes()),
                Err(Error::NonPositiveSpikes { .. })
            ));
        }
    }

    #[test]
    fn parse_rejects_out_of_range_cluster() {
        let input = br#"{"clusters": 2, "events": [{"t": 0, "src": 0, "dst": 2, "spikes": 1}]}"#;
        assert!(matches!(
            parse_workload(input),
            Err(Error::InvalidCluster { id: 2, clusters: 2 })
        ));
    }

    #[test]
    fn serialize_parse_round_trip() {
        let (graph, trace) = synthesize(10, 2.0, 0.4, 20, 99).unwrap();
        let json = serialize_workload(10, &trace);
        let (graph2, trace2) = parse_workload(json.as_bytes()).unwrap();
        assert_eq!(graph, graph2);
        assert_eq!(trace, trace2);
        assert_eq!(json, serialize_workload(10, &trace2));
    }

    #[test]
    fn stats_reference_rows() {
        // 12 clusters / 18 links
        let links = first_links(12, 18);
        let graph = ClusterGraph::from_links(12, links).unwrap();
        let s = stats(&graph).unwrap();
        assert_eq!(round2(s.avg_degree), 1.50);
        assert_eq!(round2(s.density), 0.27);
        assert_eq!(s.suggested_lanes, 4);

        // 14 clusters / 41 links
        let graph = ClusterGraph::from_links(14, first_links(14, 41)).unwrap();
        let s = stats(&graph).unwrap();
        assert_eq!(round2(s.avg_degree), 2.93);
        assert_eq!(round2(s.density), 0.45);
        assert_eq!(s.suggested_lanes, 4);

        // trivial 2 clusters / 1 link
        let graph = ClusterGraph::from_links(2, [(0, 1, 1)]).unwrap();
        let s = stats(&graph).unwrap();
        assert_eq!(s.avg_degree, 0.5);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.suggested_lanes, 2);
    }

    #[test]
    fn stats_rejects_tiny_graphs() {
        let graph = ClusterGraph::from_links(1, []).unwrap();
        assert!(matches!(stats(&graph), Err(Error::TooFewClusters(1))));
    }

    fn first_links(clusters: usize, count: usize) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        'outer: for src in 0..clusters {
            for dst in 0..clusters {
                if src != dst {
                    out.push((src, dst, 1));
                    if out.len() == count {
                        break 'outer;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn synthesize_matches_reference_shape() {
        let (graph, trace) = synthesize(12, 1.5, 0.3, 100, 7).unwrap();
        let s = stats(&graph).unwrap();
        assert_eq!(round2(s.avg_degree), 1.50);
        assert_eq!(round2(s.density), 0.27);
        assert_eq!(s.suggested_lanes, 4);
        // aggregation invariant
        assert_eq!(trace.derive_graph(12), graph);
    }

    #[test]
    fn synthesize_minimal() {
        let (graph, trace) = synthesize(2, 0.5, 0.0, 1, 1).unwrap();
        assert_eq!(graph.link_count(), 1);
        assert_eq!(trace.events().len(), 1);
    }

    #[test]
    fn synthesize_is_deterministic() {
        let (_, trace_a) = synthesize(16, 3.0, 0.5, 50, 42).unwrap();
        let (_, trace_b) = synthesize(16, 3.0, 0.5, 50, 42).unwrap();
        assert_eq!(
            serialize_workload(16, &trace_a),
            serialize_workload(16, &trace_b)
        );
    }

    #[test]
    fn synthesize_rejects_infeasible_degree() {
        assert!(matches!(
            synthesize(4, 3.5, 0.0, 1, 0),
            Err(Error::InfeasibleDegree { .. })
        ));
    }

    #[test]
    fn synthesized_degree_tracks_target() {
        for seed in 0..20 {
            let clusters = 8 + (seed as usize % 5) * 7;
            let target = 1.5 + (seed as f64 % 4.0);
            let (graph, _) = synthesize(clusters, target, 0.3, 25, seed).unwrap();
            let s = stats(&graph).unwrap();
            assert!(
                (s.avg_degree - target).abs() <= 0.1,
                "avg degree {} vs target {target}",
                s.avg_degree
            );
        }
    }

    #[test]
    fn lane_heuristic_is_exact_ceil_sqrt() {
        let expect = [(2, 2), (12, 4), (14, 4), (24, 5), (25, 5), (30, 6), (96, 10)];
        for (c, lanes) in expect {
            assert_eq!(suggested_lanes(c), lanes, "clusters {c}");
        }
    }
}
