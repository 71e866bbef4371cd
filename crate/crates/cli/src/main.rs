use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;

use mcrt_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, Model, Report};
use mcrt_core::map::{build_adjacency_bruteforce, face_census, DEFAULT_ORACLE_CAP};
use mcrt_core::resistance::effective_resistance;
use mcrt_core::seed::stream_rng;
use mcrt_core::transfer::{energy_transfer_bound, TransferSpec};
use mcrt_core::{build_adjacency, generate_walk, planar_order, CorrelatedWalk, MatedCrtGraph, MultiGraph, WalkParams};

/// Mated-CRT map simulation and verification experiments.
#[derive(Parser)]
#[command(name = "mcrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a correlated two-sided walk and save it.
    Gen(GenArgs),
    /// Build the mated-CRT graph of a saved walk.
    Build(BuildArgs),
    /// Effective resistance of a single network, or the Green log-law experiment.
    Resist(ResistArgs),
    /// Spectral dimension from exact return probabilities.
    Specdim(SpecdimArgs),
    /// Displacement exponent, optionally with the volume reciprocity check.
    Displace(DisplaceArgs),
    /// Volume growth exponent of metric balls.
    Volume(VolumeArgs),
    /// Energy transfer bound for given graphs, or the randomized sweep.
    Transfer(TransferArgs),
    /// Lazy-walk, root-coupling and monotonicity checks on small graphs.
    Appendixa(AppendixArgs),
    /// Run any experiment from a config file, or summarize a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    gamma: f64,
    #[arg(long, default_value_t = 100_000)]
    window: u64,
    #[arg(long, default_value_t = 1)]
    mesh: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    walk: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the graph as a text edge list.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Compare against the quadratic brute-force builder.
    #[arg(long)]
    verify: bool,
    /// Trace faces and report the census.
    #[arg(long)]
    census: bool,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// TOML config to start from; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long)]
    mesh: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run on a square lattice of this (odd) side instead of mated-CRT maps.
    #[arg(long)]
    lattice: Option<usize>,
    /// Directory for report.json, config.toml and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResistArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Binary graph file for a single resistance query.
    #[arg(long, conflicts_with = "edge_list")]
    graph: Option<PathBuf>,
    /// Text edge list for a single resistance query.
    #[arg(long)]
    edge_list: Option<PathBuf>,
    #[arg(long)]
    source: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sinks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<u32>>,
    #[arg(long)]
    tol: Option<f64>,
    /// Walkers for the Monte Carlo cross-check.
    #[arg(long)]
    walkers: Option<u64>,
}

#[derive(Args)]
struct SpecdimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    trunc: Option<f64>,
    #[arg(long)]
    fit_lo: Option<usize>,
    #[arg(long)]
    fit_hi: Option<usize>,
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long)]
    synthetic: bool,
}

#[derive(Args)]
struct DisplaceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    t_min: Option<u64>,
    #[arg(long)]
    t_max: Option<u64>,
    #[arg(long)]
    walkers: Option<usize>,
    /// Radius cap for the volume fit (0 disables it).
    #[arg(long)]
    volume_r_max: Option<u32>,
}

#[derive(Args)]
struct VolumeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    r_max: Option<u32>,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Source graph (edge list).
    #[arg(long, requires_all = ["g2", "spec"])]
    g1: Option<PathBuf>,
    /// Target graph (edge list).
    #[arg(long)]
    g2: Option<PathBuf>,
    /// Vertex map and path system file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Test function on the target graph, one value per line (default: random).
    #[arg(long)]
    f: Option<PathBuf>,
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Args)]
struct AppendixArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment config (TOML) to run.
    #[arg(required_unless_present = "show")]
    config: Option<PathBuf>,
    /// Summarize an existing report.json instead.
    #[arg(long, conflicts_with = "config")]
    show: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(a) => {
            let walk = generate_walk(&WalkParams::new(a.gamma, a.window, a.mesh, a.seed)?)?;
            walk.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!("wrote walk with {} samples to {}", walk.samples_l().len(), a.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Build(a) => build(a),
        Command::Resist(a) => resist(a),
        Command::Specdim(a) => {
            let mut cfg = base_config(&a.common, ExperimentKind::Specdim)?;
            let s = &mut cfg.specdim;
            set(&mut s.n_max, a.n_max);
            set(&mut s.tau, a.trunc);
            set(&mut s.fit_lo, a.fit_lo);
            set(&mut s.fit_hi, a.fit_hi);
            set(&mut s.accuracy, a.accuracy);
            s.synthetic |= a.synthetic;
            execute(&cfg, a.common.out.as_deref())
        }
        Command::Displace(a) => {
            let mut cfg = base_config(&a.common, ExperimentKind::Displacement)?;
            let d = &mut cfg.displacement;
            set(&mut d.t_min, a.t_min);
            set(&mut d.t_max, a.t_max);
            set(&mut d.walkers, a.walkers);
            set(&mut d.volume_r_max, a.volume_r_max);
            execute(&cfg, a.common.out.as_deref())
        }
        Command::Volume(a) => {
            let mut cfg = base_config(&a.common, ExperimentKind::Volume)?;
            set(&mut cfg.volume.r_max, a.r_max);
            execute(&cfg, a.common.out.as_deref())
        }
        Command::Transfer(a) => transfer(a),
        Command::Appendixa(a) => {
            let mut cfg = base_config(&a.common, ExperimentKind::AppendixA)?;
            set(&mut cfg.appendix_a.instances, a.instances);
            execute(&cfg, a.common.out.as_deref())
        }
        Command::Report(a) => {
            if let Some(path) = a.show {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let report: Report = serde_json::from_str(&text).context("parsing report")?;
                print_summary(&report);
                return Ok(exit_for(&report));
            }
            let path = a.config.expect("clap enforces config or --show");
            let cfg = ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
            execute(&cfg, a.out.as_deref())
        }
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn base_config(c: &CommonArgs, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            if cfg.kind != kind {
                bail!("config kind is '{}', expected '{}'", cfg.kind.name(), kind.name());
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    set(&mut cfg.gamma, c.gamma);
    set(&mut cfg.window_n, c.window);
    set(&mut cfg.mesh_k, c.mesh);
    set(&mut cfg.samples, c.samples);
    set(&mut cfg.seed, c.seed);
    if let Some(side) = c.lattice {
        cfg.model = Model::SquareLattice;
        cfg.lattice_side = side;
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode> {
    let output = run_experiment(cfg)?;
    if let Some(dir) = out {
        write_output(&output, cfg, dir)?;
    }
    print_summary(&output.report);
    Ok(exit_for(&output.report))
}

fn write_output(output: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    output.write(dir).with_context(|| format!("writing into {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn exit_for(report: &Report) -> ExitCode {
    if report.passed && report.complete {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_summary(report: &Report) {
    let invalid = report.samples.iter().filter(|s| !s.valid).count();
    println!(
        "{} ({} samples, {} aborted){}",
        report.config.kind.name(),
        report.samples.len(),
        invalid,
        if report.complete { "" } else { " [incomplete]" }
    );
    for s in report.samples.iter().filter(|s| !s.valid) {
        println!("  sample {}: {}", s.index, s.reason.as_deref().unwrap_or("aborted"));
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn build(a: BuildArgs) -> Result<ExitCode> {
    let walk = CorrelatedWalk::load(&a.walk).with_context(|| format!("loading {}", a.walk.display()))?;
    let map = build_adjacency(&walk)?;
    println!("{} vertices, {} edges", map.vertex_count(), map.graph.edge_count());
    let mut ok = true;
    if a.verify {
        if map.vertex_count() > DEFAULT_ORACLE_CAP {
            bail!("--verify is limited to {DEFAULT_ORACLE_CAP} vertices");
        }
        let brute = build_adjacency_bruteforce(&walk)?;
        let same = sorted_labeled(&map) == sorted_labeled(&brute);
        println!("{} brute-force agreement", if same { "PASS" } else { "FAIL" });
        ok &= same;
    }
    if a.census {
        let rot = planar_order(&map)?;
        let census = face_census(&map, &rot);
        println!(
            "faces {}, inner {}, inner non-triangles {}, euler characteristic {}",
            census.faces, census.inner_faces, census.inner_non_triangles, census.euler_characteristic
        );
        if let Some(d) = map.bulk_mean_degree(map.vertex_count() / 10) {
            println!("bulk mean degree {d:.4}");
        }
        ok &= census.inner_non_triangles == 0;
    }
    if let Some(out) = &a.out {
        map.save(out).with_context(|| format!("writing {}", out.display()))?;
    }
    if let Some(path) = &a.edges {
        fs::write(path, map.graph.to_edge_list())?;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn sorted_labeled(m: &MatedCrtGraph) -> Vec<(i64, i64, u8)> {
    let mut v: Vec<_> = m.labeled_edges().into_iter().map(|(a, b, l)| (a, b, l as u8)).collect();
    v.sort_unstable();
    v
}

fn load_edge_list(path: &Path) -> Result<MultiGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(MultiGraph::parse_edge_list(&text)?)
}

fn resist(a: ResistArgs) -> Result<ExitCode> {
    let single = match (&a.graph, &a.edge_list) {
        (Some(p), _) => Some(MatedCrtGraph::load(p).with_context(|| format!("loading {}", p.display()))?.graph),
        (None, Some(p)) => Some(load_edge_list(p)?),
        (None, None) => None,
    };
    if let Some(g) = single {
        let source = a.source.context("--source is required with a graph file")?;
        if a.sinks.is_empty() {
            bail!("--sinks is required with a graph file");
        }
        let r = effective_resistance(&g, source, &a.sinks, a.tol.unwrap_or(1e-12))?;
        println!("{r:.15e}");
        return Ok(ExitCode::SUCCESS);
    }
    let mut cfg = base_config(&a.common, ExperimentKind::GreenLoglaw)?;
    set(&mut cfg.green_loglaw.radii, a.radii);
    set(&mut cfg.green_loglaw.tol, a.tol);
    set(&mut cfg.green_loglaw.mc_walkers, a.walkers);
    execute(&cfg, a.common.out.as_deref())
}

fn transfer(a: TransferArgs) -> Result<ExitCode> {
    if let (Some(p1), Some(p2), Some(ps)) = (&a.g1, &a.g2, &a.spec) {
        let g1 = load_edge_list(p1)?;
        let g2 = load_edge_list(p2)?;
        let spec = TransferSpec::parse(&fs::read_to_string(ps).with_context(|| format!("reading {}", ps.display()))?)?;
        let f: Vec<f64> = match &a.f {
            Some(p) => fs::read_to_string(p)?
                .split_whitespace()
                .map(|t| t.parse::<f64>().with_context(|| format!("bad value '{t}'")))
                .collect::<Result<_>>()?,
            None => {
                let mut rng = stream_rng(a.common.seed.unwrap_or(0), 0);
                (0..g2.vertex_count()).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        };
        let b = energy_transfer_bound(&g1, &g2, &spec.phi, &spec.paths, &f)?;
        println!("{}", serde_json::to_string_pretty(&b)?);
        println!("{} energy transfer inequality", if b.holds { "PASS" } else { "FAIL" });
        return Ok(if b.holds { ExitCode::SUCCESS } else { ExitCode::from(2) });
    }
    let mut cfg = base_config(&a.common, ExperimentKind::TransferSweep)?;
    set(&mut cfg.transfer_sweep.instances, a.instances);
    execute(&cfg, a.common.out.as_deref())
}
