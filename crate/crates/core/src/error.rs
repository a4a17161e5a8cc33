//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tile count must be a positive even integer, got {0}")]
    InvalidTileCount(usize),

    #[error("lane count must be at least 1, got {0}")]
    InvalidLaneCount(usize),

    #[error("tile id {id} out of range for {tiles} tiles")]
    InvalidTile { id: usize, tiles: usize },

    #[error("link endpoints must be distinct tiles, got {0} -> {0}")]
    DegenerateLink(usize),

    #[error("malformed path: consecutive nodes {a} and {b} are not adjacent")]
    MalformedPath { a: String, b: String },

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cluster id {id} out of range for {clusters} clusters")]
    InvalidCluster { id: usize, clusters: usize },

    #[error("self-link {0} -> {0} not allowed")]
    SelfLink(usize),

    #[error("duplicate event for (t={t}, src={src}, dst={dst})")]
    DuplicateEvent { t: u64, src: usize, dst: usize },

    #[error("spike count must be positive, got {spikes} for (t={t}, {src} -> {dst})")]
    NonPositiveSpikes {
        t: u64,
        src: usize,
        dst: usize,
        spikes: i64,
    },

    #[error("statistics undefined for fewer than 2 clusters, got {0}")]
    TooFewClusters(usize),

    #[error("infeasible degree target {degree} for {clusters} clusters ({links} links > {max} possible)")]
    InfeasibleDegree {
        degree: f64,
        clusters: usize,
        links: usize,
        max: usize,
    },

    #[error("generator requires at least 2 clusters and 1 time step")]
    InvalidGenerator,

    #[error("cluster {0} has no assigned tile")]
    UnmappedCluster(usize),

    #[error("mapping is not injective: tile {0} assigned more than once")]
    DuplicateTile(usize),

    #[error("cannot place {clusters} clusters on {tiles} tiles")]
    TooManyClusters { clusters: usize, tiles: usize },

    #[error("mapper config invalid: {0}")]
    InvalidMapperConfig(String),

    #[error("exhaustive search limited to 8 tiles, got {0}")]
    BruteForceTooLarge(usize),

    #[error("exact grouping oracle limited to 12 links, got {0}")]
    OracleTooLarge(usize),

    #[error("spike cycles must be at least 1")]
    InvalidSpikeCycles,

    #[error("no route between tiles {src} and {dst}")]
    NoRoute { src: usize, dst: usize },

    #[error("schedule and route table disagree: {0}")]
    InconsistentRoutes(String),

    #[error("schedule does not cover the trace: {0}")]
    IncompleteSchedule(String),

    #[error("schedule exceeds the cycle budget per time step in steps {0:?}")]
    BudgetOverflow(Vec<u64>),

    #[error("simulator config invalid: {0}")]
    InvalidSimConfig(String),
}
