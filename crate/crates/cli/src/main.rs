//! Command-line driver for the ladder bus deployment toolchain.
//!
//! Stages can run individually (`gen`, `map`, `schedule`, `route`,
//! `simulate`) with JSON artifacts on disk between them, or end to end via
//! `pipeline`, which materializes every stage artifact per variant plus a
//! summary CSV. `compare` merges report files into a baseline-normalized
//! CSV.
//!
//! Exit codes: 0 success, 1 input error, 2 stage failure, 3 cycle-budget
//! overflow.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ladderbus::error::Error as CoreError;
use ladderbus::mapper::{hill_climb, MapperConfig, Mapping, MappingArtifact};
use ladderbus::router::{route_all, RouteTable};
use ladderbus::scheduler::{schedule, CrossingMode, Schedule, SchedulerConfig};
use ladderbus::simulator::{
    run_pipeline, simulate, PipelineOptions, SimConfig, SimReport, Variant,
};
use ladderbus::topology::LadderTopology;
use ladderbus::workload::{
    parse_workload, serialize_workload, stats, suggested_lanes, synthesize, ClusterGraph,
    SpikeTrace,
};

#[derive(Parser)]
#[command(
    name = "ladderbus",
    version,
    about = "Map, schedule, route and simulate spiking cluster traffic on a segmented ladder bus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload file.
    Gen(GenArgs),
    /// Place clusters onto tiles by hill climbing.
    Map(MapArgs),
    /// Group simultaneous links into conflict-free transmission waves.
    Schedule(ScheduleArgs),
    /// Route every scheduled group over the bus graph.
    Route(RouteArgs),
    /// Replay a routed schedule on the bus simulator.
    Simulate(SimulateArgs),
    /// Run the full staged pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Merge report files into a baseline-normalized comparison CSV.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    clusters: usize,
    /// Target average out-degree.
    #[arg(long)]
    degree: f64,
    /// Fraction of links firing together per step, in [0, 1].
    #[arg(long, default_value_t = 0.3)]
    burstiness: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also print the workload statistics CSV to stdout.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    tiles: usize,
    #[arg(long)]
    lanes: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Random restarts.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Local search iteration cap; defaults to the tile count.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    /// Crossing check: `tx` (topological) or `spx` (shortest path).
    #[arg(long)]
    mode: String,
    #[arg(long = "spike-cycles", default_value_t = 1)]
    spike_cycles: u64,
    /// Tile count; defaults to the smallest even count covering the
    /// workload's clusters.
    #[arg(long)]
    tiles: Option<usize>,
    /// Lane count; defaults to ceil(sqrt(clusters)).
    #[arg(long)]
    lanes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    tiles: usize,
    #[arg(long)]
    lanes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    routes: PathBuf,
    #[arg(long)]
    tiles: usize,
    #[arg(long)]
    lanes: usize,
    /// Simulator config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Run config JSON (see README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Restrict to these variants, overriding the config list.
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Override the config's output directory.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more report JSON files for the same workload.
    reports: Vec<PathBuf>,
    /// Variant every metric is normalized against.
    #[arg(long, default_value = "sl")]
    baseline: String,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Input(String),
    Stage {
        stage: &'static str,
        source: CoreError,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Stage { source, .. } => match source {
                CoreError::BudgetOverflow(_) => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Stage { stage, source } => write!(f, "{stage} stage failed: {source}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input_err<E: fmt::Display>(context: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn stage(stage: &'static str) -> impl Fn(CoreError) -> CliError {
    move |source| CliError::Stage { stage, source }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(input_err(&format!("cannot read {}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(input_err(&format!("cannot create {}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(input_err(&format!("cannot write {}", path.display())))
}

fn load_workload(path: &Path) -> CliResult<(ClusterGraph, SpikeTrace)> {
    let bytes = read_file(path)?;
    parse_workload(&bytes).map_err(input_err(&format!("invalid workload {}", path.display())))
}

fn load_mapping(path: &Path) -> CliResult<Mapping> {
    let bytes = read_file(path)?;
    let artifact: MappingArtifact = serde_json::from_slice(&bytes)
        .map_err(input_err(&format!("invalid mapping {}", path.display())))?;
    artifact
        .to_mapping()
        .map_err(input_err(&format!("invalid mapping {}", path.display())))
}

fn build_topology(tiles: usize, lanes: usize) -> CliResult<LadderTopology> {
    LadderTopology::build(tiles, lanes)
        .map_err(|e| CliError::Input(format!("invalid topology parameters: {e}")))
}

fn next_even(x: usize) -> usize {
    x + x % 2
}

fn parse_mode(mode: &str) -> CliResult<CrossingMode> {
    match mode {
        "tx" => Ok(CrossingMode::Topological),
        "spx" => Ok(CrossingMode::ShortestPath),
        other => Err(CliError::Input(format!(
            "unknown mode '{other}' (expected tx|spx)"
        ))),
    }
}

/// Report artifact: workload id and variant alongside the metrics, so
/// reports from different runs can be matched and compared.
#[derive(Serialize, Deserialize)]
struct ReportArtifact {
    workload: String,
    variant: String,
    #[serde(flatten)]
    report: SimReport,
}

const SUMMARY_HEADER: &str =
    "workload,variant,offered,delivered,dropped,received_ratio,avg_latency,energy,energy_per_spike,edp";

fn summary_row(workload: &str, variant: &str, report: &SimReport) -> String {
    format!(
        "{},{},{},{},{},{:.6},{:.4},{:.4},{},{:.4}",
        workload,
        variant,
        report.spikes_offered,
        report.spikes_delivered,
        report.spikes_dropped,
        report.spike_received_ratio,
        report.avg_latency_cycles,
        report.total_dynamic_energy,
        report
            .energy_per_spike
            .map(|e| format!("{e:.4}"))
            .unwrap_or_default(),
        report.edp,
    )
}

// --- pipeline config -------------------------------------------------------

#[derive(Deserialize)]
struct RunConfig {
    workload: WorkloadSource,
    #[serde(default)]
    tile_count: Option<usize>,
    #[serde(default)]
    lane_count: Option<usize>,
    #[serde(default)]
    mapper: MapperSection,
    #[serde(default)]
    scheduler: SchedulerSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default = "all_variant_names")]
    variants: Vec<String>,
    out_dir: PathBuf,
    #[serde(default)]
    seed: u64,
}

fn all_variant_names() -> Vec<String> {
    Variant::ALL.iter().map(|v| v.name().to_string()).collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WorkloadSource {
    File { file: PathBuf },
    Generator { generator: GeneratorParams },
}

#[derive(Deserialize)]
struct GeneratorParams {
    clusters: usize,
    degree: f64,
    #[serde(default = "default_burstiness")]
    burstiness: f64,
    steps: u64,
}

fn default_burstiness() -> f64 {
    0.3
}

#[derive(Deserialize)]
#[serde(default)]
struct MapperSection {
    perturbations: usize,
    max_iterations: Option<usize>,
}

impl Default for MapperSection {
    fn default() -> Self {
        Self {
            perturbations: 4,
            max_iterations: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct SchedulerSection {
    spike_cycles: u64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self { spike_cycles: 1 }
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct SimSection {
    energy_per_segment: f64,
    energy_per_switch_config: f64,
    cycles_per_time_step: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            energy_per_segment: d.energy_per_segment,
            energy_per_switch_config: d.energy_per_switch_config,
            cycles_per_time_step: d.cycles_per_time_step,
        }
    }
}

/// Seed derivation: the generator consumes the master seed itself and the
/// mapper uses master + 1 (recorded in run_meta.json).
const MAPPER_SEED_OFFSET: u64 = 1;

#[derive(Serialize)]
struct RunMeta {
    workload: String,
    clusters: usize,
    link_count: usize,
    requested_tile_count: Option<usize>,
    tile_count: usize,
    lane_count: usize,
    seed: u64,
    mapper_seed: u64,
    variants: Vec<String>,
}

fn cmd_pipeline(args: PipelineArgs) -> CliResult<()> {
    let bytes = read_file(&args.config)?;
    let config: RunConfig = serde_json::from_slice(&bytes)
        .map_err(input_err(&format!("invalid config {}", args.config.display())))?;
    let out_dir = args.out_dir.unwrap_or_else(|| config.out_dir.clone());

    let variant_names = if args.variants.is_empty() {
        config.variants.clone()
    } else {
        args.variants.clone()
    };
    let variants: Vec<Variant> = variant_names
        .iter()
        .map(|name| name.parse().map_err(|e: String| CliError::Input(e)))
        .collect::<CliResult<_>>()?;

    let (workload_id, graph, trace) = match &config.workload {
        WorkloadSource::File { file } => {
            let (graph, trace) = load_workload(file)?;
            let id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "workload".to_string());
            (id, graph, trace)
        }
        WorkloadSource::Generator { generator } => {
            let (graph, trace) = synthesize(
                generator.clusters,
                generator.degree,
                generator.burstiness,
                generator.steps,
                config.seed,
            )
            .map_err(input_err("generator"))?;
            let id = format!(
                "gen-c{}-d{}-b{}-s{}-k{}",
                generator.clusters, generator.degree, generator.burstiness, generator.steps, config.seed
            );
            (id, graph, trace)
        }
    };

    let clusters = graph.cluster_count();
    let tiles = next_even(config.tile_count.unwrap_or(clusters).max(clusters));
    let lanes = config.lane_count.unwrap_or_else(|| suggested_lanes(clusters));
    let topo = build_topology(tiles, lanes)?;

    write_file(
        &out_dir.join("workload.json"),
        &serialize_workload(clusters, &trace),
    )?;
    write_file(
        &out_dir.join("topology.json"),
        &serde_json::to_string_pretty(&topo.dump()).expect("dump serialization"),
    )?;
    let meta = RunMeta {
        workload: workload_id.clone(),
        clusters,
        link_count: graph.link_count(),
        requested_tile_count: config.tile_count,
        tile_count: tiles,
        lane_count: lanes,
        seed: config.seed,
        mapper_seed: config.seed + MAPPER_SEED_OFFSET,
        variants: variant_names.clone(),
    };
    write_file(
        &out_dir.join("run_meta.json"),
        &serde_json::to_string_pretty(&meta).expect("meta serialization"),
    )?;

    let opts = PipelineOptions {
        perturbations: config.mapper.perturbations,
        max_iterations: config.mapper.max_iterations,
        mapper_seed: config.seed + MAPPER_SEED_OFFSET,
        spike_cycles: config.scheduler.spike_cycles,
        energy_per_segment: config.sim.energy_per_segment,
        energy_per_switch_config: config.sim.energy_per_switch_config,
        cycles_per_time_step: config.sim.cycles_per_time_step,
    };

    let mut summary = vec![SUMMARY_HEADER.to_string()];
    for variant in variants {
        let artifacts =
            run_pipeline(&graph, &trace, &topo, variant, &opts).map_err(stage(variant.name()))?;
        let dir = out_dir.join(variant.name());
        let mapping = MappingArtifact::new(
            &artifacts.mapping,
            artifacts.mapping_cost,
            artifacts.mapper_config.alpha,
            artifacts.mapper_config.beta,
        );
        write_file(
            &dir.join("mapping.json"),
            &serde_json::to_string_pretty(&mapping).expect("mapping serialization"),
        )?;
        write_file(&dir.join("schedule.json"), &artifacts.schedule.to_json())?;
        write_file(&dir.join("routes.json"), &artifacts.routes.to_json(&topo))?;
        let report = ReportArtifact {
            workload: workload_id.clone(),
            variant: variant.name().to_string(),
            report: artifacts.report,
        };
        write_file(
            &dir.join("report.json"),
            &serde_json::to_string_pretty(&report).expect("report serialization"),
        )?;
        summary.push(summary_row(&workload_id, variant.name(), &report.report));
        println!(
            "{}: ratio {:.4}, latency {:.2}, energy {:.2}",
            variant.name(),
            report.report.spike_received_ratio,
            report.report.avg_latency_cycles,
            report.report.total_dynamic_energy
        );
    }
    write_file(&out_dir.join("summary.csv"), &(summary.join("\n") + "\n"))?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let (graph, trace) = synthesize(args.clusters, args.degree, args.burstiness, args.steps, args.seed)
        .map_err(input_err("generator"))?;
    write_file(&args.out, &serialize_workload(args.clusters, &trace))?;
    if args.stats {
        let s = stats(&graph).map_err(stage("stats"))?;
        println!("{}", ladderbus::workload::WorkloadStats::csv_header());
        println!("{}", s.csv_row());
    }
    Ok(())
}

fn cmd_map(args: MapArgs) -> CliResult<()> {
    let (graph, _) = load_workload(&args.workload)?;
    let topo = build_topology(args.tiles, args.lanes)?;
    let config = MapperConfig {
        alpha: args.alpha,
        beta: args.beta,
        perturbations: args.restarts,
        max_iterations: args.iterations.unwrap_or(args.tiles),
        seed: args.seed,
    };
    let outcome = hill_climb(&graph, &topo, &config).map_err(stage("map"))?;
    let artifact = MappingArtifact::new(&outcome.mapping, outcome.cost, args.alpha, args.beta);
    write_file(
        &args.out,
        &serde_json::to_string_pretty(&artifact).expect("mapping serialization"),
    )
}

fn cmd_schedule(args: ScheduleArgs) -> CliResult<()> {
    let (graph, trace) = load_workload(&args.workload)?;
    let mapping = load_mapping(&args.mapping)?;
    let clusters = graph.cluster_count();
    let tiles = args.tiles.unwrap_or_else(|| next_even(clusters));
    let lanes = args.lanes.unwrap_or_else(|| suggested_lanes(clusters));
    let topo = build_topology(tiles, lanes)?;
    let config = SchedulerConfig {
        crossing_mode: parse_mode(&args.mode)?,
        spike_cycles: args.spike_cycles,
    };
    let sched = schedule(&trace, &mapping, &topo, &config).map_err(stage("schedule"))?;
    write_file(&args.out, &sched.to_json())
}

fn cmd_route(args: RouteArgs) -> CliResult<()> {
    let topo = build_topology(args.tiles, args.lanes)?;
    let bytes = read_file(&args.schedule)?;
    let sched = Schedule::from_json(&bytes)
        .map_err(input_err(&format!("invalid schedule {}", args.schedule.display())))?;
    let routes = route_all(&topo, &sched).map_err(stage("route"))?;
    write_file(&args.out, &routes.to_json(&topo))
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let (_, trace) = load_workload(&args.workload)?;
    let mapping = load_mapping(&args.mapping)?;
    let topo = build_topology(args.tiles, args.lanes)?;
    let sched = Schedule::from_json(&read_file(&args.schedule)?)
        .map_err(input_err(&format!("invalid schedule {}", args.schedule.display())))?;
    let routes = RouteTable::from_json(&read_file(&args.routes)?, &topo)
        .map_err(input_err(&format!("invalid routes {}", args.routes.display())))?;
    let config = match &args.config {
        Some(path) => serde_json::from_slice(&read_file(path)?)
            .map_err(input_err(&format!("invalid sim config {}", path.display())))?,
        None => SimConfig::default(),
    };
    let report =
        simulate(&topo, &trace, &mapping, &sched, &routes, &config).map_err(stage("simulate"))?;
    let workload_id = args
        .workload
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "workload".to_string());
    let artifact = ReportArtifact {
        workload: workload_id,
        variant: "custom".to_string(),
        report,
    };
    write_file(
        &args.out,
        &serde_json::to_string_pretty(&artifact).expect("report serialization"),
    )
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    if args.reports.len() < 2 {
        return Err(CliError::Input(
            "compare needs at least two report files".into(),
        ));
    }
    let mut loaded = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let artifact: ReportArtifact = serde_json::from_slice(&read_file(path)?)
            .map_err(input_err(&format!("invalid report {}", path.display())))?;
        loaded.push(artifact);
    }
    let workload = loaded[0].workload.clone();
    if let Some(other) = loaded.iter().find(|r| r.workload != workload) {
        return Err(CliError::Input(format!(
            "workload mismatch: '{}' vs '{}'",
            workload, other.workload
        )));
    }
    let baseline = loaded
        .iter()
        .find(|r| r.variant == args.baseline)
        .ok_or_else(|| {
            CliError::Input(format!("baseline variant '{}' not among reports", args.baseline))
        })?;
    let base = &baseline.report;

    let norm = |value: f64, base: f64| {
        if base == 0.0 {
            String::new()
        } else {
            format!("{:.4}", value / base)
        }
    };
    let mut lines = vec![
        "workload,variant,received_ratio,norm_received_ratio,avg_latency,norm_latency,energy,norm_energy,energy_per_spike,norm_energy_per_spike,edp,norm_edp"
            .to_string(),
    ];
    for r in &loaded {
        let m = &r.report;
        let eps = m.energy_per_spike;
        lines.push(format!(
            "{},{},{:.6},{},{:.4},{},{:.4},{},{},{},{:.4},{}",
            r.workload,
            r.variant,
            m.spike_received_ratio,
            norm(m.spike_received_ratio, base.spike_received_ratio),
            m.avg_latency_cycles,
            norm(m.avg_latency_cycles, base.avg_latency_cycles),
            m.total_dynamic_energy,
            norm(m.total_dynamic_energy, base.total_dynamic_energy),
            eps.map(|e| format!("{e:.4}")).unwrap_or_default(),
            match (eps, base.energy_per_spike) {
                (Some(e), Some(b)) => norm(e, b),
                _ => String::new(),
            },
            m.edp,
            norm(m.edp, base.edp),
        ));
    }
    let csv = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Map(args) => cmd_map(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::Route(args) => cmd_route(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
