//! Cluster-to-tile placement: cost functions and search.
//!
//! Placement quality is scored by two costs. Dynamic energy sums, over all
//! links, spikes times the segment distance between the mapped tiles.
//! Crossing weight sums, over all unordered pairs of active links that
//! cross under the compile-time predicate, the two links' spike counts.
//! Both combine linearly as `alpha * E + beta * W` and are minimized by
//! steepest-descent hill climbing with fresh random restarts; exhaustive
//! and Monte Carlo baselines back the search in tests.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{LadderTopology, LinkEndpoints, TileId};
use crate::util::random_injective;
use crate::workload::ClusterGraph;

/// Injective cluster-to-tile assignment, indexed by cluster id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    tiles: Vec<TileId>,
}

impl Mapping {
    pub fn new(tiles: Vec<TileId>) -> Self {
        Self { tiles }
    }

    pub fn cluster_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn as_slice(&self) -> &[TileId] {
        &self.tiles
    }

    pub fn tile(&self, cluster: usize) -> Result<TileId> {
        self.tiles
            .get(cluster)
            .copied()
            .ok_or(Error::UnmappedCluster(cluster))
    }

    /// Checks that every cluster of a `cluster_count`-cluster graph has a
    /// distinct, valid tile.
    pub fn validate(&self, cluster_count: usize, topo: &LadderTopology) -> Result<()> {
        if self.tiles.len() < cluster_count {
            return Err(Error::UnmappedCluster(self.tiles.len()));
        }
        let mut used = vec![false; topo.tile_count()];
        for &tile in &self.tiles {
            topo.validate_tile(tile)?;
            if used[tile] {
                return Err(Error::DuplicateTile(tile));
            }
            used[tile] = true;
        }
        Ok(())
    }

    /// Tile-level endpoints of a cluster link under this mapping.
    pub fn map_link(&self, src: usize, dst: usize) -> Result<LinkEndpoints> {
        LinkEndpoints::new(self.tile(src)?, self.tile(dst)?)
    }
}

/// Search parameters: cost weights, restart count `perturbations`, local
/// iteration cap `max_iterations` and the RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub alpha: f64,
    pub beta: f64,
    pub perturbations: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl MapperConfig {
    /// Config with default search effort: 4 restarts and an iteration cap
    /// proportional to the tile count.
    pub fn for_tiles(alpha: f64, beta: f64, tile_count: usize, seed: u64) -> Self {
        Self {
            alpha,
            beta,
            perturbations: 4,
            max_iterations: tile_count.max(1),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidMapperConfig(format!(
                "weights must be non-negative with alpha + beta > 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.perturbations == 0 {
            return Err(Error::InvalidMapperConfig(
                "perturbations must be at least 1".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidMapperConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Dynamic energy: sum of spikes times tile distance over all links.
pub fn cost_energy(graph: &ClusterGraph, mapping: &Mapping, topo: &LadderTopology) -> Result<u64> {
    mapping.validate(graph.cluster_count(), topo)?;
    let mut total = 0u64;
    for (src, dst, spikes) in graph.links() {
        let d = topo.distance(mapping.tile(src)?, mapping.tile(dst)?)?;
        total += spikes * u64::from(d);
    }
    Ok(total)
}

/// Weighted crossed paths: for every unordered pair of distinct active
/// links whose mapped endpoints cross, add both links' spike counts.
pub fn cost_crossing(graph: &ClusterGraph, mapping: &Mapping, topo: &LadderTopology) -> Result<u64> {
    mapping.validate(graph.cluster_count(), topo)?;
    let links: Vec<(LinkEndpoints, u64)> = graph
        .links()
        .map(|(src, dst, spikes)| Ok((mapping.map_link(src, dst)?, spikes)))
        .collect::<Result<_>>()?;
    let mut total = 0u64;
    for i in 0..links.len() {
        for j in i + 1..links.len() {
            if topo.topological_cross(&links[i].0, &links[j].0) {
                total += links[i].1 + links[j].1;
            }
        }
    }
    Ok(total)
}

/// Combined placement cost `alpha * E + beta * W`.
pub fn cost(
    graph: &ClusterGraph,
    mapping: &Mapping,
    topo: &LadderTopology,
    config: &MapperConfig,
) -> Result<f64> {
    config.validate()?;
    let e = if config.alpha > 0.0 {
        cost_energy(graph, mapping, topo)?
    } else {
        mapping.validate(graph.cluster_count(), topo)?;
        0
    };
    let w = if config.beta > 0.0 {
        cost_crossing(graph, mapping, topo)?
    } else {
        0
    };
    Ok(config.alpha * e as f64 + config.beta * w as f64)
}

/// Hill climbing result: best mapping over all restarts, its cost, and the
/// per-restart cost trajectory (initial cost followed by each accepted
/// step).
#[derive(Debug, Clone)]
pub struct HillClimbOutcome {
    pub mapping: Mapping,
    pub cost: f64,
    pub history: Vec<Vec<f64>>,
}

/// Steepest-descent hill climbing with random restarts.
///
/// Each restart starts from a fresh uniform random injective mapping and
/// repeatedly applies the single swap (of two occupied tiles, or of a
/// cluster with a vacant tile) with the most negative cost change, until
/// no swap improves or `max_iterations` accepted moves were made. Swap
/// candidates are scanned in ascending index order and the first best
/// candidate wins ties, so equal inputs give equal outputs.
pub fn hill_climb(
    graph: &ClusterGraph,
    topo: &LadderTopology,
    config: &MapperConfig,
) -> Result<HillClimbOutcome> {
    config.validate()?;
    let clusters = graph.cluster_count();
    let tiles = topo.tile_count();
    if clusters > tiles {
        return Err(Error::TooManyClusters { clusters, tiles });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = SearchState::new(graph, topo, config.alpha, config.beta);
    let mut best: Option<(f64, Vec<TileId>)> = None;
    let mut history = Vec::with_capacity(config.perturbations);

    for _ in 0..config.perturbations {
        let start = random_injective(clusters, tiles, &mut rng);
        state.reset(start);
        let mut trajectory = vec![state.cost()];
        for _ in 0..config.max_iterations {
            match state.best_move() {
                Some(mv) => {
                    state.apply(mv);
                    trajectory.push(state.cost());
                }
                None => break,
            }
        }
        let final_cost = state.cost();
        if best.as_ref().is_none_or(|(c, _)| final_cost < *c) {
            best = Some((final_cost, state.assignment().to_vec()));
        }
        history.push(trajectory);
    }

    let (cost, tiles) = best.expect("at least one restart");
    Ok(HillClimbOutcome {
        mapping: Mapping::new(tiles),
        cost,
        history,
    })
}

/// Monte Carlo baseline over uniform random injective mappings.
#[derive(Debug, Clone)]
pub struct MonteCarloOutcome {
    pub min_cost: f64,
    pub mean_cost: f64,
    pub best_mapping: Mapping,
}

pub fn monte_carlo(
    graph: &ClusterGraph,
    topo: &LadderTopology,
    config: &MapperConfig,
    samples: usize,
) -> Result<MonteCarloOutcome> {
    config.validate()?;
    if samples == 0 {
        return Err(Error::InvalidMapperConfig(
            "monte carlo needs at least 1 sample".into(),
        ));
    }
    let clusters = graph.cluster_count();
    let tiles = topo.tile_count();
    if clusters > tiles {
        return Err(Error::TooManyClusters { clusters, tiles });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Mapping)> = None;
    let mut sum = 0.0;
    for _ in 0..samples {
        let mapping = Mapping::new(random_injective(clusters, tiles, &mut rng));
        let c = cost(graph, &mapping, topo, config)?;
        sum += c;
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, mapping));
        }
    }
    let (min_cost, best_mapping) = best.expect("samples >= 1");
    Ok(MonteCarloOutcome {
        min_cost,
        mean_cost: sum / samples as f64,
        best_mapping,
    })
}

/// Exhaustive search outcome; `evaluated` counts enumerated assignments.
#[derive(Debug, Clone)]
pub struct BruteForceOutcome {
    pub mapping: Mapping,
    pub cost: f64,
    pub evaluated: usize,
}

/// Enumerates every injective assignment and returns the optimum. Guarded
/// to 8 tiles; the assignment count is factorial.
pub fn brute_force(
    graph: &ClusterGraph,
    topo: &LadderTopology,
    config: &MapperConfig,
) -> Result<BruteForceOutcome> {
    config.validate()?;
    let clusters = graph.cluster_count();
    let tiles = topo.tile_count();
    if tiles > 8 {
        return Err(Error::BruteForceTooLarge(tiles));
    }
    if clusters > tiles {
        return Err(Error::TooManyClusters { clusters, tiles });
    }

    struct Search<'a> {
        graph: &'a ClusterGraph,
        topo: &'a LadderTopology,
        config: &'a MapperConfig,
        assignment: Vec<usize>,
        used: Vec<bool>,
        best: Option<(f64, Vec<TileId>)>,
        evaluated: usize,
    }

    impl Search<'_> {
        fn recurse(&mut self, cluster: usize) -> Result<()> {
            if cluster == self.assignment.len() {
                self.evaluated += 1;
                let mapping = Mapping::new(self.assignment.clone());
                let c = cost(self.graph, &mapping, self.topo, self.config)?;
                if self.best.as_ref().is_none_or(|(b, _)| c < *b) {
                    self.best = Some((c, self.assignment.clone()));
                }
                return Ok(());
            }
            for tile in 0..self.used.len() {
                if !self.used[tile] {
                    self.used[tile] = true;
                    self.assignment[cluster] = tile;
                    self.recurse(cluster + 1)?;
                    self.used[tile] = false;
                }
            }
            Ok(())
        }
    }

    let mut search = Search {
        graph,
        topo,
        config,
        assignment: vec![0usize; clusters],
        used: vec![false; tiles],
        best: None,
        evaluated: 0,
    };
    search.recurse(0)?;
    let (cost, tiles) = search.best.expect("at least the empty assignment");
    Ok(BruteForceOutcome {
        mapping: Mapping::new(tiles),
        cost,
        evaluated: search.evaluated,
    })
}

/// Mapping file schema: `{"mapping": {"<cluster>": tile, ...}, "cost": c,
/// "alpha": a, "beta": b}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappingArtifact {
    pub mapping: BTreeMap<usize, usize>,
    pub cost: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl MappingArtifact {
    pub fn new(mapping: &Mapping, cost: f64, alpha: f64, beta: f64) -> Self {
        Self {
            mapping: mapping
                .as_slice()
                .iter()
                .enumerate()
                .map(|(c, &t)| (c, t))
                .collect(),
            cost,
            alpha,
            beta,
        }
    }

    /// Reconstructs the dense mapping; clusters 0..n must all be present.
    pub fn to_mapping(&self) -> Result<Mapping> {
        let mut tiles = Vec::with_capacity(self.mapping.len());
        for (expect, (&cluster, &tile)) in self.mapping.iter().enumerate() {
            if cluster != expect {
                return Err(Error::UnmappedCluster(expect));
            }
            tiles.push(tile);
        }
        Ok(Mapping::new(tiles))
    }
}

// ---------------------------------------------------------------------------
// Incremental search state.
//
// A full neighborhood sweep evaluates O(T^2) swaps per iteration; the
// crossing cost would make each evaluation O(L^2) if recomputed. Two facts
// keep sweeps cheap:
//  - links that share a cluster cross under every injective mapping, and
//    links that do not share a cluster can never share a tile. That splits
//    W into a mapping-invariant part and a strict-interval-interleave part.
//  - interleave counts are rectangle queries over (lo, hi) column spans,
//    answered in O(1) from 2D prefix sums rebuilt once per accepted move.
// A swap then costs O(|moved links|) index queries plus O(|moved links|^2)
// pairwise corrections.
// ---------------------------------------------------------------------------

type Span = (usize, usize);

fn interleaves(a: Span, b: Span) -> bool {
    (a.0 < b.0 && b.0 < a.1 && a.1 < b.1) || (b.0 < a.0 && a.0 < b.1 && b.1 < a.1)
}

/// 2D prefix sums over link column spans; answers "how many links (and how
/// much spike weight) strictly interleave a query span" in O(1).
struct CrossIndex {
    cols: usize,
    cnt: Vec<u64>,
    spk: Vec<u64>,
}

impl CrossIndex {
    fn build(cols: usize, spans: &[Span], spikes: &[u64]) -> Self {
        let stride = cols + 1;
        let mut cnt = vec![0u64; stride * stride];
        let mut spk = vec![0u64; stride * stride];
        for (i, &(lo, hi)) in spans.iter().enumerate() {
            cnt[(lo + 1) * stride + (hi + 1)] += 1;
            spk[(lo + 1) * stride + (hi + 1)] += spikes[i];
        }
        for lo in 1..stride {
            for hi in 1..stride {
                let idx = lo * stride + hi;
                cnt[idx] = cnt[idx] + cnt[idx - stride] + cnt[idx - 1] - cnt[idx - stride - 1];
                spk[idx] = spk[idx] + spk[idx - stride] + spk[idx - 1] - spk[idx - stride - 1];
            }
        }
        Self { cols, cnt, spk }
    }

    /// Inclusive rectangle sum over stored spans with lo in [lo0, lo1] and
    /// hi in [hi0, hi1].
    fn rect(&self, lo0: usize, lo1: usize, hi0: usize, hi1: usize) -> (u64, u64) {
        if lo0 > lo1 || hi0 > hi1 || lo0 >= self.cols || hi0 >= self.cols {
            return (0, 0);
        }
        let lo1 = lo1.min(self.cols - 1);
        let hi1 = hi1.min(self.cols - 1);
        let stride = self.cols + 1;
        let sum = |grid: &[u64]| {
            grid[(lo1 + 1) * stride + (hi1 + 1)] + grid[lo0 * stride + hi0]
                - grid[lo0 * stride + (hi1 + 1)]
                - grid[(lo1 + 1) * stride + hi0]
        };
        (sum(&self.cnt), sum(&self.spk))
    }

    /// Count and spike weight of stored spans strictly interleaving
    /// `(lo, hi)`.
    fn interleave(&self, (lo, hi): Span) -> (u64, u64) {
        if hi <= lo + 1 {
            // no integer strictly inside a span of width <= 1
            return (0, 0);
        }
        // stored span opens inside the query and closes after it
        let (c_a, s_a) = self.rect(lo + 1, hi - 1, hi + 1, self.cols - 1);
        // stored span opens before the query and closes inside it
        let (c_b, s_b) = if lo >= 1 {
            self.rect(0, lo - 1, lo + 1, hi - 1)
        } else {
            (0, 0)
        };
        (c_a + c_b, s_a + s_b)
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    /// Swap the tiles of two clusters.
    Swap(usize, usize),
    /// Move a cluster onto a vacant tile.
    Relocate(usize, TileId),
}

struct LinkRec {
    src: usize,
    dst: usize,
    spikes: u64,
}

struct SearchState<'a> {
    topo: &'a LadderTopology,
    alpha: f64,
    beta: f64,
    links: Vec<LinkRec>,
    incident: Vec<Vec<usize>>,
    /// Crossing weight from links sharing a cluster; identical under every
    /// injective mapping.
    shared_w: u64,
    tiles: Vec<TileId>,
    cluster_at: Vec<Option<usize>>,
    spans: Vec<Span>,
    energy: u64,
    interleave_w: u64,
    index: Option<CrossIndex>,
    moved_scratch: Vec<usize>,
    mark: Vec<u64>,
    epoch: u64,
}

impl<'a> SearchState<'a> {
    fn new(graph: &ClusterGraph, topo: &'a LadderTopology, alpha: f64, beta: f64) -> Self {
        let links: Vec<LinkRec> = graph
            .links()
            .map(|(src, dst, spikes)| LinkRec { src, dst, spikes })
            .collect();
        let mut incident = vec![Vec::new(); graph.cluster_count()];
        for (i, l) in links.iter().enumerate() {
            incident[l.src].push(i);
            incident[l.dst].push(i);
        }

        // Pairs sharing one cluster appear in exactly one incidence list
        // together; reverse-orientation pairs share two clusters and appear
        // in two, so subtract them once.
        let mut shared_w = 0u64;
        for list in &incident {
            for i in 0..list.len() {
                for j in i + 1..list.len() {
                    shared_w += links[list[i]].spikes + links[list[j]].spikes;
                }
            }
        }
        for (i, l) in links.iter().enumerate() {
            if l.src < l.dst {
                if let Some(j) = links
                    .iter()
                    .position(|m| m.src == l.dst && m.dst == l.src)
                {
                    shared_w -= links[i].spikes + links[j].spikes;
                }
            }
        }

        let n_links = links.len();
        Self {
            topo,
            alpha,
            beta,
            links,
            incident,
            shared_w,
            tiles: Vec::new(),
            cluster_at: vec![None; topo.tile_count()],
            spans: vec![(0, 0); n_links],
            energy: 0,
            interleave_w: 0,
            index: None,
            moved_scratch: Vec::new(),
            mark: vec![0; n_links],
            epoch: 0,
        }
    }

    fn assignment(&self) -> &[TileId] {
        &self.tiles
    }

    fn cost(&self) -> f64 {
        self.alpha * self.energy as f64 + self.beta * (self.shared_w + self.interleave_w) as f64
    }

    fn reset(&mut self, tiles: Vec<TileId>) {
        self.cluster_at.iter_mut().for_each(|c| *c = None);
        for (cluster, &tile) in tiles.iter().enumerate() {
            self.cluster_at[tile] = Some(cluster);
        }
        self.tiles = tiles;

        self.energy = 0;
        for l in &self.links {
            let d = self.topo.tile_distance_unchecked(self.tiles[l.src], self.tiles[l.dst]);
            self.energy += l.spikes * u64::from(d);
        }

        for (i, l) in self.links.iter().enumerate() {
            self.spans[i] = self.span_of(self.tiles[l.src], self.tiles[l.dst]);
        }
        if self.beta > 0.0 {
            self.rebuild_index();
        }
    }

    fn span_of(&self, a: TileId, b: TileId) -> Span {
        let ca = self.topo.col_of_tile(a);
        let cb = self.topo.col_of_tile(b);
        (ca.min(cb), ca.max(cb))
    }

    fn rebuild_index(&mut self) {
        let spikes: Vec<u64> = self.links.iter().map(|l| l.spikes).collect();
        let index = CrossIndex::build(self.topo.columns(), &self.spans, &spikes);
        // W_il = half the sum of per-link interleave contributions.
        let mut doubled = 0u64;
        for (i, &span) in self.spans.iter().enumerate() {
            let (cnt, spk) = index.interleave(span);
            doubled += self.links[i].spikes * cnt + spk;
        }
        debug_assert_eq!(doubled % 2, 0);
        self.interleave_w = doubled / 2;
        self.index = Some(index);
    }

    /// Links incident to `a` (and `b`), deduplicated, into `moved_scratch`.
    fn collect_moved(&mut self, a: usize, b: Option<usize>) {
        self.epoch += 1;
        self.moved_scratch.clear();
        for &e in &self.incident[a] {
            if self.mark[e] != self.epoch {
                self.mark[e] = self.epoch;
                self.moved_scratch.push(e);
            }
        }
        if let Some(b) = b {
            for &e in &self.incident[b] {
                if self.mark[e] != self.epoch {
                    self.mark[e] = self.epoch;
                    self.moved_scratch.push(e);
                }
            }
        }
    }

    /// Hypothetical tile of a cluster under `mv`.
    fn tile_under(&self, cluster: usize, mv: Move) -> TileId {
        match mv {
            Move::Swap(a, b) => {
                if cluster == a {
                    self.tiles[b]
                } else if cluster == b {
                    self.tiles[a]
                } else {
                    self.tiles[cluster]
                }
            }
            Move::Relocate(a, target) => {
                if cluster == a {
                    target
                } else {
                    self.tiles[cluster]
                }
            }
        }
    }

    /// Exact (energy, crossing) change of applying `mv`, leaving the state
    /// untouched. Crossing deltas query the old-world index with old and
    /// new spans, then fix up the moved-x-moved pairs the bulk queries
    /// mishandle.
    fn move_deltas(&mut self, mv: Move) -> (i64, i64) {
        let (a, b) = match mv {
            Move::Swap(a, b) => (a, Some(b)),
            Move::Relocate(a, _) => (a, None),
        };
        self.collect_moved(a, b);
        let moved = std::mem::take(&mut self.moved_scratch);

        let mut d_energy = 0i64;
        for &e in &moved {
            let l = &self.links[e];
            let old = self
                .topo
                .tile_distance_unchecked(self.tiles[l.src], self.tiles[l.dst]);
            let new = self
                .topo
                .tile_distance_unchecked(self.tile_under(l.src, mv), self.tile_under(l.dst, mv));
            d_energy += l.spikes as i64 * (i64::from(new) - i64::from(old));
        }

        let mut d_cross = 0i64;
        if self.beta > 0.0 {
            let index = self.index.as_ref().expect("index built when beta > 0");
            for &e in &moved {
                let l = &self.links[e];
                let new_span =
                    self.span_of(self.tile_under(l.src, mv), self.tile_under(l.dst, mv));
                let (c_new, s_new) = index.interleave(new_span);
                let (c_old, s_old) = index.interleave(self.spans[e]);
                d_cross += (l.spikes * c_new + s_new) as i64 - (l.spikes * c_old + s_old) as i64;
            }
            for &e in &moved {
                let le = &self.links[e];
                let e_new = self.span_of(self.tile_under(le.src, mv), self.tile_under(le.dst, mv));
                for &f in &moved {
                    let lf = &self.links[f];
                    let pair = (le.spikes + lf.spikes) as i64;
                    // remove the ordered new-vs-old term the query included
                    if interleaves(e_new, self.spans[f]) {
                        d_cross -= pair;
                    }
                    if e < f {
                        let f_new =
                            self.span_of(self.tile_under(lf.src, mv), self.tile_under(lf.dst, mv));
                        if interleaves(e_new, f_new) {
                            d_cross += pair;
                        }
                        if interleaves(self.spans[e], self.spans[f]) {
                            d_cross += pair;
                        }
                    }
                }
            }
        }

        self.moved_scratch = moved;
        (d_energy, d_cross)
    }

    /// Exact cost change of applying `mv` to the current mapping.
    fn delta(&mut self, mv: Move) -> f64 {
        let (d_energy, d_cross) = self.move_deltas(mv);
        self.alpha * d_energy as f64 + self.beta * d_cross as f64
    }

    /// Steepest strictly-improving move, if any. Cluster-pair swaps are
    /// scanned before vacancy relocations, both in ascending index order;
    /// the first best candidate wins ties.
    fn best_move(&mut self) -> Option<Move> {
        let clusters = self.tiles.len();
        let mut best: Option<(f64, Move)> = None;
        let consider = |delta: f64, mv: Move, best: &mut Option<(f64, Move)>| {
            if delta < 0.0 && best.as_ref().is_none_or(|(d, _)| delta < *d) {
                *best = Some((delta, mv));
            }
        };
        for a in 0..clusters {
            for b in a + 1..clusters {
                let mv = Move::Swap(a, b);
                let d = self.delta(mv);
                consider(d, mv, &mut best);
            }
        }
        for a in 0..clusters {
            for tile in 0..self.topo.tile_count() {
                if self.cluster_at[tile].is_none() {
                    let mv = Move::Relocate(a, tile);
                    let d = self.delta(mv);
                    consider(d, mv, &mut best);
                }
            }
        }
        best.map(|(_, mv)| mv)
    }

    fn apply(&mut self, mv: Move) {
        let (d_energy, d_cross) = self.move_deltas(mv);

        // Commit the assignment change.
        match mv {
            Move::Swap(a, b) => {
                let (ta, tb) = (self.tiles[a], self.tiles[b]);
                self.tiles[a] = tb;
                self.tiles[b] = ta;
                self.cluster_at[ta] = Some(b);
                self.cluster_at[tb] = Some(a);
            }
            Move::Relocate(a, target) => {
                let ta = self.tiles[a];
                self.cluster_at[ta] = None;
                self.cluster_at[target] = Some(a);
                self.tiles[a] = target;
            }
        }
        // moved_scratch still holds this move's link set
        let moved = std::mem::take(&mut self.moved_scratch);
        for &e in &moved {
            let l = &self.links[e];
            self.spans[e] = self.span_of(self.tiles[l.src], self.tiles[l.dst]);
        }
        self.moved_scratch = moved;
        self.energy = (self.energy as i64 + d_energy) as u64;
        if self.beta > 0.0 {
            self.interleave_w = (self.interleave_w as i64 + d_cross) as u64;
            self.rebuild_index();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn topo8() -> LadderTopology {
        LadderTopology::build(8, 3).unwrap()
    }

    fn chain_graph(clusters: usize) -> ClusterGraph {
        let links: Vec<(usize, usize, u64)> =
            (0..clusters - 1).map(|i| (i, i + 1, (i + 1) as u64)).collect();
        ClusterGraph::from_links(clusters, links).unwrap()
    }

    fn config(alpha: f64, beta: f64, seed: u64) -> MapperConfig {
        MapperConfig {
            alpha,
            beta,
            perturbations: 50,
            max_iterations: 64,
            seed,
        }
    }

    fn random_graph(clusters: usize, links: usize, seed: u64) -> ClusterGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = std::collections::BTreeMap::new();
        while set.len() < links {
            let src = rng.gen_range(0..clusters);
            let dst = rng.gen_range(0..clusters);
            if src != dst {
                set.entry((src, dst)).or_insert(rng.gen_range(1..=9u64));
            }
        }
        ClusterGraph::from_links(clusters, set.into_iter().map(|((s, d), w)| (s, d, w))).unwrap()
    }

    #[test]
    fn energy_examples() {
        let topo = topo8();
        let empty = ClusterGraph::from_links(2, []).unwrap();
        let mapping = Mapping::new(vec![0, 1]);
        assert_eq!(cost_energy(&empty, &mapping, &topo).unwrap(), 0);

        // one link with 5 spikes between tiles at distance 3
        let graph = ClusterGraph::from_links(2, [(0, 1, 5)]).unwrap();
        assert_eq!(topo.distance(0, 1).unwrap(), 3);
        assert_eq!(cost_energy(&graph, &mapping, &topo).unwrap(), 15);
    }

    #[test]
    fn energy_matches_direct_sum() {
        let topo = topo8();
        let graph = random_graph(8, 18, 3);
        let mapping = Mapping::new(vec![3, 1, 7, 0, 6, 2, 5, 4]);
        let mut expect = 0u64;
        for (src, dst, spikes) in graph.links() {
            expect += spikes
                * u64::from(
                    topo.distance(mapping.tile(src).unwrap(), mapping.tile(dst).unwrap())
                        .unwrap(),
                );
        }
        assert_eq!(cost_energy(&graph, &mapping, &topo).unwrap(), expect);
    }

    #[test]
    fn crossing_examples() {
        let topo = LadderTopology::build(12, 3).unwrap();
        // tiles 0..6 are the top row; identity mapping keeps columns equal
        // to cluster ids
        let identity = Mapping::new((0..6).collect());

        let disjoint = ClusterGraph::from_links(6, [(0, 1, 2), (2, 3, 3)]).unwrap();
        assert_eq!(cost_crossing(&disjoint, &identity, &topo).unwrap(), 0);

        let crossing = ClusterGraph::from_links(6, [(0, 2, 2), (1, 3, 3)]).unwrap();
        assert_eq!(cost_crossing(&crossing, &identity, &topo).unwrap(), 5);

        // three mutually interleaving links, spikes 1/2/3:
        // (1+2) + (1+3) + (2+3) = 12
        let triple = ClusterGraph::from_links(6, [(0, 3, 1), (1, 4, 2), (2, 5, 3)]).unwrap();
        assert_eq!(cost_crossing(&triple, &identity, &topo).unwrap(), 12);

        // shared endpoint counts as crossing
        let shared = ClusterGraph::from_links(6, [(0, 2, 1), (0, 5, 1)]).unwrap();
        assert_eq!(cost_crossing(&shared, &identity, &topo).unwrap(), 2);
    }

    #[test]
    fn cost_combines_linearly() {
        let topo = topo8();
        let graph = random_graph(6, 10, 11);
        let mapping = Mapping::new(vec![0, 2, 4, 1, 3, 5]);
        let e = cost_energy(&graph, &mapping, &topo).unwrap() as f64;
        let w = cost_crossing(&graph, &mapping, &topo).unwrap() as f64;
        let cfg = |alpha, beta| MapperConfig {
            alpha,
            beta,
            perturbations: 1,
            max_iterations: 1,
            seed: 0,
        };
        assert_eq!(cost(&graph, &mapping, &topo, &cfg(1.0, 0.0)).unwrap(), e);
        assert_eq!(cost(&graph, &mapping, &topo, &cfg(0.0, 1.0)).unwrap(), w);
        assert_eq!(
            cost(&graph, &mapping, &topo, &cfg(2.0, 3.0)).unwrap(),
            2.0 * e + 3.0 * w
        );
    }

    #[test]
    fn shared_plus_interleave_decomposition_matches_naive() {
        let topo = LadderTopology::build(12, 3).unwrap();
        for seed in 0..10 {
            let graph = random_graph(9, 16, seed);
            let mut state = SearchState::new(&graph, &topo, 0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
            for _ in 0..5 {
                let tiles = random_injective(9, 12, &mut rng);
                let mapping = Mapping::new(tiles.clone());
                state.reset(tiles);
                let naive = cost_crossing(&graph, &mapping, &topo).unwrap();
                assert_eq!(state.shared_w + state.interleave_w, naive, "seed {seed}");
            }
        }
    }

    #[test]
    fn delta_matches_full_recompute() {
        let topo = LadderTopology::build(10, 3).unwrap();
        for seed in 0..8 {
            let graph = random_graph(7, 12, seed + 100);
            let mut state = SearchState::new(&graph, &topo, 1.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            state.reset(random_injective(7, 10, &mut rng));
            let cfg = MapperConfig {
                alpha: 1.0,
                beta: 1.0,
                perturbations: 1,
                max_iterations: 1,
                seed: 0,
            };
            // exercise both move kinds against a from-scratch evaluation
            let mut moves: Vec<Move> = Vec::new();
            for a in 0..7 {
                for b in a + 1..7 {
                    moves.push(Move::Swap(a, b));
                }
            }
            for tile in 0..10 {
                if state.cluster_at[tile].is_none() {
                    moves.push(Move::Relocate(3, tile));
                }
            }
            for mv in moves {
                let before = cost(&graph, &Mapping::new(state.tiles.clone()), &topo, &cfg).unwrap();
                let predicted = state.delta(mv);
                let mut hypothetical = state.tiles.clone();
                match mv {
                    Move::Swap(a, b) => hypothetical.swap(a, b),
                    Move::Relocate(a, t) => hypothetical[a] = t,
                }
                let after = cost(&graph, &Mapping::new(hypothetical), &topo, &cfg).unwrap();
                assert_eq!(predicted, after - before, "seed {seed} move {mv:?}");
            }
        }
    }

    #[test]
    fn hill_climb_single_cluster_is_trivial() {
        let topo = topo8();
        let graph = ClusterGraph::from_links(1, []).unwrap();
        let cfg = MapperConfig {
            alpha: 1.0,
            beta: 1.0,
            perturbations: 1,
            max_iterations: 8,
            seed: 5,
        };
        let out = hill_climb(&graph, &topo, &cfg).unwrap();
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.history, vec![vec![0.0]]);
    }

    #[test]
    fn hill_climb_reaches_exhaustive_optimum_on_chain() {
        let topo = LadderTopology::build(4, 2).unwrap();
        let graph = chain_graph(4);
        let cfg = config(1.0, 0.0, 9);
        let climbed = hill_climb(&graph, &topo, &cfg).unwrap();
        let exact = brute_force(&graph, &topo, &cfg).unwrap();
        assert_eq!(climbed.cost, exact.cost);
    }

    #[test]
    fn hill_climb_history_is_non_increasing() {
        let topo = topo8();
        for seed in 0..6 {
            let graph = random_graph(6, 12, seed + 40);
            let cfg = MapperConfig {
                alpha: 1.0,
                beta: 2.0,
                perturbations: 5,
                max_iterations: 32,
                seed,
            };
            let out = hill_climb(&graph, &topo, &cfg).unwrap();
            for restart in &out.history {
                for pair in restart.windows(2) {
                    assert!(pair[1] < pair[0], "accepted step must strictly improve");
                }
                assert!(out.cost <= restart[0], "result beats every restart start");
            }
            // final cost agrees with a from-scratch evaluation
            assert_eq!(out.cost, cost(&graph, &out.mapping, &topo, &cfg).unwrap());
        }
    }

    #[test]
    fn hill_climb_rejects_oversized_instance() {
        let topo = LadderTopology::build(4, 2).unwrap();
        let graph = chain_graph(5);
        assert!(matches!(
            hill_climb(&graph, &topo, &config(1.0, 0.0, 0)),
            Err(Error::TooManyClusters { clusters: 5, tiles: 4 })
        ));
    }

    #[test]
    fn brute_force_counts_assignments() {
        let topo = LadderTopology::build(2, 1).unwrap();
        let graph = chain_graph(2);
        let out = brute_force(&graph, &topo, &config(1.0, 0.0, 0)).unwrap();
        assert_eq!(out.evaluated, 2);

        let topo6 = LadderTopology::build(6, 2).unwrap();
        let graph5 = chain_graph(5);
        let out = brute_force(&graph5, &topo6, &config(1.0, 0.0, 0)).unwrap();
        assert_eq!(out.evaluated, 720); // 6!/1!

        let topo10 = LadderTopology::build(10, 2).unwrap();
        assert!(matches!(
            brute_force(&graph5, &topo10, &config(1.0, 0.0, 0)),
            Err(Error::BruteForceTooLarge(10))
        ));
    }

    #[test]
    fn brute_force_argmin_is_scale_invariant() {
        let topo = LadderTopology::build(6, 2).unwrap();
        let graph = random_graph(5, 9, 21);
        let a = brute_force(&graph, &topo, &config(1.0, 2.0, 0)).unwrap();
        let b = brute_force(&graph, &topo, &config(3.0, 6.0, 0)).unwrap();
        assert_eq!(a.mapping, b.mapping);
        assert!((b.cost - 3.0 * a.cost).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_examples() {
        let topo = topo8();
        let graph = random_graph(6, 10, 31);
        let cfg = config(1.0, 1.0, 17);
        let single = monte_carlo(&graph, &topo, &cfg, 1).unwrap();
        assert_eq!(single.min_cost, single.mean_cost);

        let lone = ClusterGraph::from_links(1, []).unwrap();
        let out = monte_carlo(&lone, &topo, &cfg, 20).unwrap();
        assert_eq!(out.min_cost, 0.0);
        assert_eq!(out.mean_cost, 0.0);

        let topo6 = LadderTopology::build(6, 2).unwrap();
        let exact = brute_force(&graph, &topo6, &cfg).unwrap();
        let mc = monte_carlo(&graph, &topo6, &cfg, 250).unwrap();
        assert!(mc.min_cost >= exact.cost);
    }

    #[test]
    fn mapping_artifact_round_trips() {
        let mapping = Mapping::new(vec![4, 0, 7]);
        let artifact = MappingArtifact::new(&mapping, 12.5, 0.0, 1.0);
        let json = serde_json::to_string(&artifact).unwrap();
        let parsed: MappingArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.to_mapping().unwrap(), mapping);
        assert_eq!(parsed.cost, 12.5);
    }

    #[test]
    fn mapping_validation() {
        let topo = topo8();
        let dup = Mapping::new(vec![1, 1]);
        assert!(matches!(dup.validate(2, &topo), Err(Error::DuplicateTile(1))));
        let short = Mapping::new(vec![0]);
        assert!(matches!(
            short.validate(2, &topo),
            Err(Error::UnmappedCluster(1))
        ));
        let oob = Mapping::new(vec![0, 9]);
        assert!(oob.validate(2, &topo).is_err());
    }
}
