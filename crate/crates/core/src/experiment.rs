//! Experiment configuration, execution and reports.
//!
//! A configuration names one experiment kind plus the map parameters; every
//! kind runs its samples in parallel on a dedicated thread pool and returns a
//! JSON report together with plot-ready CSV tables. Reports carry no clock
//! readings, so identical configurations give identical output bytes.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{domain, Error, Result};
use crate::estimators::{
    displacement_exponent, dyadic_grid, fit_loglaw, loglog_fit, mean_by_abscissa, spectral_dimension, volume_exponent,
};
use crate::graph::generators::{grid, random_connected};
use crate::graph::{bfs_ball_with, induced_subgraph, BfsScratch, Ball, MultiGraph};
use crate::map::{build_adjacency, GRAPH_FORMAT_VERSION};
use crate::resistance::{
    current_flow, dense_resistance, effective_resistance, expected_exit_time, harmonic_solve, validate_unit_flow,
    BoundaryCondition,
};
use crate::seed::{derive_seed, stream_rng, streams};
use crate::transfer::{
    energy_transfer_bound, hoeffding_check, lazy_equivalence_check, midpoint_root_coupling, reweight_root,
    rough_isometry_audit, subdivide, PathSystem, VertexMapPair,
};
use crate::walk::{generate_walk, WalkParams, WALK_FORMAT_VERSION};
use crate::walker::{green_mc, return_prob_exact_with, return_prob_rational, EvolveOptions, ReturnProbSeries, Stop, Walker, Z99};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "MCRT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "green-loglaw")]
    GreenLoglaw,
    #[serde(rename = "specdim")]
    Specdim,
    #[serde(rename = "displacement")]
    Displacement,
    #[serde(rename = "volume")]
    Volume,
    #[serde(rename = "resistance-triple")]
    ResistanceTriple,
    #[serde(rename = "appendixA")]
    AppendixA,
    #[serde(rename = "transfer-sweep")]
    TransferSweep,
    #[serde(rename = "exit-time")]
    ExitTime,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GreenLoglaw => "green-loglaw",
            Self::Specdim => "specdim",
            Self::Displacement => "displacement",
            Self::Volume => "volume",
            Self::ResistanceTriple => "resistance-triple",
            Self::AppendixA => "appendixA",
            Self::TransferSweep => "transfer-sweep",
            Self::ExitTime => "exit-time",
        }
    }
}

/// Graph family the map-based kinds run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    MatedCrt,
    /// `lattice_side x lattice_side` grid rooted at its centre; the border
    /// plays the role of the window boundary.
    SquareLattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenLoglawParams {
    pub radii: Vec<u32>,
    pub tol: f64,
    /// Walkers for the Monte Carlo Green's function cross-check (0 = skip).
    pub mc_walkers: u64,
    pub min_r_squared: f64,
}

impl Default for GreenLoglawParams {
    fn default() -> Self {
        Self { radii: vec![8, 16, 32, 64, 128, 256], tol: 1e-10, mc_walkers: 0, min_r_squared: 0.98 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecdimParams {
    pub n_max: usize,
    pub tau: f64,
    pub fit_lo: usize,
    pub fit_hi: usize,
    /// Required truncation bound on every reported `P(2n)` (0 = unchecked).
    pub accuracy: f64,
    pub band: [f64; 2],
    /// Replace the evolution by the exact series `P(2n) = 1 / (n + 1)`-style
    /// `c / n` law (smoke mode).
    pub synthetic: bool,
}

impl Default for SpecdimParams {
    fn default() -> Self {
        Self { n_max: 4096, tau: 1e-15, fit_lo: 256, fit_hi: 4096, accuracy: 1e-9, band: [1.7, 2.3], synthetic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplacementParams {
    pub t_min: u64,
    pub t_max: u64,
    pub walkers: usize,
    /// Also measure volume growth up to this radius on the same maps and
    /// check `|beta * d - 1|` (0 = off).
    pub volume_r_max: u32,
    pub volume_band: [f64; 2],
    pub reciprocity_tol: f64,
}

impl Default for DisplacementParams {
    fn default() -> Self {
        Self { t_min: 4, t_max: 65536, walkers: 10_000, volume_r_max: 64, volume_band: [3.5, 4.5], reciprocity_tol: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeParams {
    pub r_max: u32,
    pub band: [f64; 2],
}

impl Default for VolumeParams {
    fn default() -> Self {
        Self { r_max: 64, band: [3.5, 4.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResistanceTripleParams {
    pub instances: usize,
    pub max_vertices: usize,
    pub walkers: u64,
    pub rel_tol: f64,
    pub min_covered: usize,
}

impl Default for ResistanceTripleParams {
    fn default() -> Self {
        Self { instances: 200, max_vertices: 50, walkers: 100_000, rel_tol: 1e-8, min_covered: 195 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixParams {
    pub instances: usize,
    pub max_vertices: usize,
    pub max_edges: usize,
    pub max_steps: usize,
    pub tv_tol: f64,
    /// Largest `n` for the exact rational `P(2n)` monotonicity check.
    pub monotone_n: usize,
    pub hoeffding_steps: usize,
    pub hoeffding_eps: f64,
    pub hoeffding_trials: usize,
}

impl Default for AppendixParams {
    fn default() -> Self {
        Self {
            instances: 100,
            max_vertices: 20,
            max_edges: 50,
            max_steps: 50,
            tv_tol: 1e-12,
            monotone_n: 12,
            hoeffding_steps: 200,
            hoeffding_eps: 0.1,
            hoeffding_trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferParams {
    pub instances: usize,
    pub max_vertices: usize,
    pub max_detour: usize,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self { instances: 500, max_vertices: 30, max_detour: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitTimeParams {
    pub radii: Vec<u32>,
    pub walkers: usize,
    /// Small random graphs checked by exact solves (0 = skip).
    pub small_instances: usize,
    pub tol: f64,
}

impl Default for ExitTimeParams {
    fn default() -> Self {
        Self { radii: vec![16, 64], walkers: 400, small_instances: 100, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub model: Model,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_window")]
    pub window_n: u64,
    #[serde(default = "default_mesh")]
    pub mesh_k: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub lattice_side: usize,
    #[serde(default, rename = "green-loglaw")]
    pub green_loglaw: GreenLoglawParams,
    #[serde(default)]
    pub specdim: SpecdimParams,
    #[serde(default)]
    pub displacement: DisplacementParams,
    #[serde(default)]
    pub volume: VolumeParams,
    #[serde(default, rename = "resistance-triple")]
    pub resistance_triple: ResistanceTripleParams,
    #[serde(default, rename = "appendixA")]
    pub appendix_a: AppendixParams,
    #[serde(default, rename = "transfer-sweep")]
    pub transfer_sweep: TransferParams,
    #[serde(default, rename = "exit-time")]
    pub exit_time: ExitTimeParams,
}

fn default_gamma() -> f64 {
    std::f64::consts::SQRT_2
}
fn default_window() -> u64 {
    100_000
}
fn default_mesh() -> u32 {
    1
}
fn default_samples() -> usize {
    1
}
fn default_side() -> usize {
    401
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            model: Model::default(),
            gamma: default_gamma(),
            window_n: default_window(),
            mesh_k: default_mesh(),
            samples: default_samples(),
            seed: 0,
            lattice_side: default_side(),
            green_loglaw: Default::default(),
            specdim: Default::default(),
            displacement: Default::default(),
            volume: Default::default(),
            resistance_triple: Default::default(),
            appendix_a: Default::default(),
            transfer_sweep: Default::default(),
            exit_time: Default::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.uses_maps() {
            match self.model {
                Model::MatedCrt => {
                    WalkParams::new(self.gamma, self.window_n, self.mesh_k, self.seed)?;
                }
                Model::SquareLattice => {
                    if self.lattice_side < 3 || self.lattice_side % 2 == 0 {
                        return domain("lattice_side must be odd and at least 3");
                    }
                }
            }
            if self.samples == 0 && self.kind != ExperimentKind::ExitTime {
                return domain("samples must be positive");
            }
        }
        let g = &self.green_loglaw;
        if g.radii.is_empty() || g.radii.windows(2).any(|w| w[0] >= w[1]) || !(g.tol > 0.0) {
            return domain("green-loglaw: radii must be strictly increasing and tol positive");
        }
        let s = &self.specdim;
        if s.fit_lo == 0 || s.fit_lo > s.fit_hi || s.fit_hi > s.n_max || !(s.tau >= 0.0) || !(s.accuracy >= 0.0) {
            return domain("specdim: need 0 < fit_lo <= fit_hi <= n_max, tau >= 0, accuracy >= 0");
        }
        let d = &self.displacement;
        if d.t_min == 0 || d.t_min > d.t_max || d.walkers == 0 {
            return domain("displacement: need 0 < t_min <= t_max and walkers > 0");
        }
        if self.volume.r_max < 8 {
            return domain("volume: r_max must be at least 8");
        }
        let e = &self.exit_time;
        if e.radii.windows(2).any(|w| w[0] >= w[1]) || e.walkers < 2 {
            return domain("exit-time: radii must be strictly increasing and walkers >= 2");
        }
        let rt = &self.resistance_triple;
        if rt.max_vertices < 2 || rt.walkers < 2 {
            return domain("resistance-triple: need max_vertices >= 2 and walkers >= 2");
        }
        let a = &self.appendix_a;
        if a.max_vertices < 1 || a.max_edges < a.max_vertices.saturating_sub(1) {
            return domain("appendixA: max_edges must allow a spanning tree");
        }
        if self.transfer_sweep.max_vertices < 2 {
            return domain("transfer-sweep: max_vertices must be at least 2");
        }
        Ok(())
    }

    fn uses_maps(&self) -> bool {
        matches!(
            self.kind,
            ExperimentKind::GreenLoglaw
                | ExperimentKind::Specdim
                | ExperimentKind::Displacement
                | ExperimentKind::Volume
                | ExperimentKind::ExitTime
        )
    }

    /// Seed of sample `i`; also the walk seed for mated-CRT samples.
    pub fn sample_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, streams::SAMPLE_BASE + i as u64)
    }
}

/// One acceptance check of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub valid: bool,
    pub reason: Option<String>,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub tool_version: String,
    pub report_format: u32,
    pub walk_format: u32,
    pub graph_format: u32,
    pub config: ExperimentConfig,
    pub samples: Vec<SampleRecord>,
    pub aggregate: Value,
    pub checks: Vec<Check>,
    /// False when some sample was aborted.
    pub complete: bool,
    pub passed: bool,
}

/// A report plus named CSV bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub tables: Vec<(String, String)>,
}

impl ExperimentOutput {
    /// Writes `report.json` and the CSV tables into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.report)? + "\n")?;
        for (name, body) in &self.tables {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Thread count from `MCRT_THREADS`, if set.
pub fn env_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Domain(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool capped by `MCRT_THREADS` (default: all cores).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = env_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    with_pool(|| match config.kind {
        ExperimentKind::GreenLoglaw => run_green(config),
        ExperimentKind::Specdim => run_specdim(config),
        ExperimentKind::Displacement => run_displacement(config),
        ExperimentKind::Volume => run_volume(config),
        ExperimentKind::ResistanceTriple => run_triple(config),
        ExperimentKind::AppendixA => run_appendix(config),
        ExperimentKind::TransferSweep => run_transfer(config),
        ExperimentKind::ExitTime => run_exit_time(config),
    })?
}

fn finish(config: &ExperimentConfig, samples: Vec<SampleRecord>, aggregate: Value, checks: Vec<Check>) -> Report {
    let complete = samples.iter().all(|s| s.valid);
    let passed = checks.iter().all(|c| c.passed);
    Report {
        tool: "mcrt".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        report_format: REPORT_FORMAT_VERSION,
        walk_format: WALK_FORMAT_VERSION,
        graph_format: GRAPH_FORMAT_VERSION,
        config: config.clone(),
        samples,
        aggregate,
        checks,
        complete,
        passed,
    }
}

fn csv_table<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A sampled graph with its root and window-contamination mask.
pub struct SampleGraph {
    pub graph: MultiGraph,
    pub root: usize,
    pub flagged: Vec<bool>,
    pub seed: u64,
}

pub fn build_sample(config: &ExperimentConfig, index: usize) -> Result<SampleGraph> {
    let seed = config.sample_seed(index);
    match config.model {
        Model::MatedCrt => {
            let walk = generate_walk(&WalkParams::new(config.gamma, config.window_n, config.mesh_k, seed)?)?;
            let map = build_adjacency(&walk)?;
            drop(walk);
            let root = map.root()?;
            let flagged = map.exposed();
            Ok(SampleGraph { graph: map.graph, root, flagged, seed })
        }
        Model::SquareLattice => {
            let s = config.lattice_side;
            let flagged = (0..s * s).map(|v| v % s == 0 || v % s == s - 1 || v / s == 0 || v / s == s - 1).collect();
            Ok(SampleGraph { graph: grid(s, s), root: (s / 2) * s + s / 2, flagged, seed })
        }
    }
}

fn run_samples<T: Send>(
    config: &ExperimentConfig,
    f: impl Fn(usize, SampleGraph) -> Result<T> + Sync,
) -> Vec<(usize, u64, Result<T>)> {
    (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let seed = config.sample_seed(i);
            (i, seed, build_sample(config, i).and_then(|sg| f(i, sg)))
        })
        .collect()
}

// Aborted samples keep their reason; other errors abort the run.
fn record<T: Serialize>(i: usize, seed: u64, res: Result<T>) -> Result<(SampleRecord, Option<T>)> {
    match res {
        Ok(v) => Ok((SampleRecord { index: i, seed, valid: true, reason: None, data: serde_json::to_value(&v)? }, Some(v))),
        Err(e @ (Error::Contaminated(_) | Error::Accuracy { .. } | Error::Resource { .. })) => Ok((
            SampleRecord { index: i, seed, valid: false, reason: Some(e.to_string()), data: Value::Null },
            None,
        )),
        Err(e) => Err(e),
    }
}

fn ball_subgraph(g: &MultiGraph, ball: &Ball, with_outside: bool) -> MultiGraph {
    let mut members = ball.members.clone();
    if with_outside {
        members.extend_from_slice(&ball.outside);
    }
    induced_subgraph(g, &members).0
}

// Local ids of `set` inside a subgraph built from `members` (+ `outside`).
fn local_ids(ball: &Ball, set: &[u32], with_outside: bool) -> Vec<usize> {
    let mut pos = std::collections::HashMap::new();
    let all = ball.members.iter().chain(if with_outside { ball.outside.iter() } else { [].iter() });
    for (i, &v) in all.enumerate() {
        pos.insert(v, i);
    }
    set.iter().map(|v| pos[v]).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GreenPoint {
    radius: u32,
    ball_size: usize,
    boundary_size: usize,
    valid: bool,
    reason: Option<String>,
    /// `R(root <-> inner boundary of B_r)`.
    r_boundary: Option<f64>,
    /// `R(root <-> vertices at distance r + 1)` = `Gr_{sigma_r}(root, root) / deg(root)`.
    r_exit: Option<f64>,
    green_mc: Option<f64>,
    green_mc_std_err: Option<f64>,
}

#[derive(Debug, Serialize)]
struct GreenRow {
    sample: usize,
    seed: u64,
    root: usize,
    radius: u32,
    value: Option<f64>,
    r_exit: Option<f64>,
    residual: Option<f64>,
    ball_size: usize,
    valid: bool,
}

fn run_green(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.green_loglaw;
    let results = run_samples(config, |_, sg| {
        let mut scratch = BfsScratch::new(sg.graph.vertex_count());
        let deg_root = sg.graph.degree(sg.root) as f64;
        let mut points = Vec::with_capacity(p.radii.len());
        for &r in &p.radii {
            let ball = bfs_ball_with(&sg.graph, sg.root, r, Some(&sg.flagged), &mut scratch)?;
            let mut pt = GreenPoint {
                radius: r,
                ball_size: ball.len(),
                boundary_size: ball.boundary.len(),
                valid: false,
                reason: None,
                r_boundary: None,
                r_exit: None,
                green_mc: None,
                green_mc_std_err: None,
            };
            if ball.contaminated {
                pt.reason = Some("ball reaches the window boundary".into());
            } else if ball.boundary.is_empty() {
                pt.reason = Some("ball covers the whole component".into());
            } else {
                let inner = ball_subgraph(&sg.graph, &ball, false);
                let sinks = local_ids(&ball, &ball.boundary, false);
                pt.r_boundary = Some(effective_resistance(&inner, 0, &sinks, p.tol)?);
                let outer = ball_subgraph(&sg.graph, &ball, true);
                let exits = local_ids(&ball, &ball.outside, true);
                pt.r_exit = Some(effective_resistance(&outer, 0, &exits, p.tol)?);
                if p.mc_walkers > 0 {
                    let est = green_mc(&outer, 0, &Stop::Hit(exits), p.mc_walkers, derive_seed(sg.seed, r as u64))?;
                    pt.green_mc = Some(est.mean / deg_root);
                    pt.green_mc_std_err = Some(est.std_err / deg_root);
                }
                pt.valid = true;
            }
            points.push(pt);
        }
        Ok(json!({ "root": sg.root, "deg_root": deg_root, "points": points }))
    });
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    let mut exit_pairs = Vec::new();
    let mut invalid_points = 0usize;
    let mut mc_outside = 0usize;
    let mut mc_total = 0usize;
    for (i, seed, res) in results {
        let (rec, data) = record(i, seed, res)?;
        if let Some(data) = data {
            let root = data["root"].as_u64().unwrap_or(0) as usize;
            let points: Vec<GreenPoint> = serde_json::from_value(data["points"].clone())?;
            for pt in &points {
                if let (Some(rb), Some(re)) = (pt.r_boundary, pt.r_exit) {
                    pairs.push((pt.radius as f64, rb));
                    exit_pairs.push((pt.radius as f64, re));
                    if let (Some(m), Some(se)) = (pt.green_mc, pt.green_mc_std_err) {
                        mc_total += 1;
                        if (m - re).abs() > Z99 * se {
                            mc_outside += 1;
                        }
                    }
                } else {
                    invalid_points += 1;
                }
                rows.push(GreenRow {
                    sample: i,
                    seed,
                    root,
                    radius: pt.radius,
                    value: pt.r_boundary,
                    r_exit: pt.r_exit,
                    residual: None,
                    ball_size: pt.ball_size,
                    valid: pt.valid,
                });
            }
        } else {
            invalid_points += p.radii.len();
        }
        samples.push(rec);
    }
    let means = mean_by_abscissa(&pairs);
    let exit_means = mean_by_abscissa(&exit_pairs);
    let expected_points = config.samples * p.radii.len();
    let mut checks = vec![Check::new(
        "all (sample, radius) points valid",
        invalid_points == 0,
        format!("{invalid_points} of {expected_points} points invalid"),
    )];
    let mut aggregate = json!({ "mean_r_boundary": means, "mean_r_exit": exit_means, "invalid_points": invalid_points });
    let radii_covered = means.len() == p.radii.len();
    if means.len() >= 2 {
        let fit = fit_loglaw(&means)?;
        let exit_fit = fit_loglaw(&exit_means)?;
        checks.push(Check::new(
            "log fit R^2",
            radii_covered && fit.log_fit.r_squared >= p.min_r_squared,
            format!(
                "R^2 = {:.4} over {} radii (needs >= {} over {})",
                fit.log_fit.r_squared,
                means.len(),
                p.min_r_squared,
                p.radii.len()
            ),
        ));
        checks.push(Check::new("positive slope", fit.log_fit.slope > 0.0, format!("slope = {:.4}", fit.log_fit.slope)));
        checks.push(Check::new(
            "log model beats power law",
            fit.log_beats_power,
            format!("rss log = {:.3e}, power = {:?}", fit.log_rss, fit.power_rss),
        ));
        aggregate["fit"] = serde_json::to_value(&fit)?;
        aggregate["exit_fit"] = serde_json::to_value(&exit_fit)?;
        for row in rows.iter_mut() {
            if let Some(v) = row.value {
                row.residual = Some(v - fit.log_fit.predict((row.radius as f64).ln()));
            }
        }
    } else {
        checks.push(Check::new("log fit", false, format!("only {} radii with valid data", means.len())));
    }
    if mc_total > 0 {
        aggregate["mc_points"] = json!(mc_total);
        aggregate["mc_outside_99"] = json!(mc_outside);
    }
    let report = finish(config, samples, aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("resistance.csv".into(), csv_table(rows)?)] })
}

#[derive(Debug, Serialize)]
struct SeriesRow {
    sample: usize,
    n: usize,
    #[serde(rename = "P2n")]
    p2n: f64,
    trunc_bound: f64,
    #[serde(rename = "Gr")]
    gr: f64,
}

fn run_specdim(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.specdim;
    let evolve = |sg: &SampleGraph| -> Result<ReturnProbSeries> {
        if p.synthetic {
            let series: Vec<f64> = (0..=p.n_max).map(|n| if n == 0 { 1.0 } else { 0.25 / n as f64 }).collect();
            return Ok(ReturnProbSeries::from_even(sg.root, &series));
        }
        let opts = EvolveOptions {
            accuracy: (p.accuracy > 0.0).then_some(p.accuracy),
            flagged: Some(&sg.flagged),
        };
        return_prob_exact_with(&sg.graph, sg.root, p.n_max, p.tau, opts)
    };
    let results = run_samples(config, |_, sg| {
        let series = evolve(&sg)?;
        let fit = spectral_dimension(&series, p.fit_lo, p.fit_hi)?;
        Ok(json!({
            "root": sg.root,
            "deg_root": sg.graph.degree(sg.root),
            "peak_support": series.peak_support,
            "final_bound": series.dropped.last().copied().unwrap_or(0.0),
            "fit": fit,
            "series": series,
        }))
    });
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut ds = Vec::new();
    for (i, seed, res) in results {
        let (mut rec, data) = record(i, seed, res)?;
        if let Some(data) = data {
            let series: ReturnProbSeries = serde_json::from_value(data["series"].clone())?;
            let deg = data["deg_root"].as_u64().unwrap_or(1) as usize;
            let gr = crate::walker::green_cumulative(&series, deg);
            for n in 0..=series.n_max {
                rows.push(SeriesRow { sample: i, n, p2n: series.p2n(n), trunc_bound: series.bound(n), gr: gr.gr[n] });
            }
            ds.push(data["fit"]["d_s"].as_f64().unwrap_or(f64::NAN));
            rec.data = json!({
                "root": data["root"],
                "peak_support": data["peak_support"],
                "final_bound": data["final_bound"],
                "fit": data["fit"],
            });
        }
        samples.push(rec);
    }
    let valid = ds.len();
    let mean = ds.iter().sum::<f64>() / valid.max(1) as f64;
    let mut checks = vec![Check::new(
        "all samples valid",
        valid == config.samples,
        format!("{valid} of {} samples completed", config.samples),
    )];
    checks.push(Check::new(
        "mean d_s in band",
        valid > 0 && (p.band[0]..=p.band[1]).contains(&mean),
        format!("mean d_s = {mean:.4} (band [{}, {}])", p.band[0], p.band[1]),
    ));
    let aggregate = json!({ "d_s": ds, "mean_d_s": if valid > 0 { json!(mean) } else { Value::Null } });
    let report = finish(config, samples, aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("series.csv".into(), csv_table(rows)?)] })
}

#[derive(Debug, Serialize)]
struct DisplacementRow {
    sample: usize,
    n: u64,
    median: f64,
}

#[derive(Debug, Serialize)]
struct VolumeRow {
    sample: usize,
    radius: u64,
    count: usize,
}

// Over the abscissae every sample covers (a common prefix).
fn geometric_means(per_sample: &[Vec<f64>]) -> Vec<f64> {
    let k = per_sample.iter().map(Vec::len).min().unwrap_or(0);
    (0..k)
        .map(|j| (per_sample.iter().map(|v| v[j].ln()).sum::<f64>() / per_sample.len() as f64).exp())
        .collect()
}

fn run_displacement(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.displacement;
    let times = dyadic_grid(p.t_min, p.t_max);
    if times.len() < 2 {
        return domain("displacement: the time grid needs at least two dyadic points");
    }
    let results = run_samples(config, |_, sg| {
        let volume = if p.volume_r_max > 0 {
            Some(volume_exponent(&sg.graph, sg.root, p.volume_r_max, Some(&sg.flagged))?)
        } else {
            None
        };
        let disp = displacement_exponent(
            &sg.graph,
            sg.root,
            &times,
            p.walkers,
            derive_seed(sg.seed, 1),
            Some(&sg.flagged),
        )?;
        Ok(json!({ "root": sg.root, "displacement": disp, "volume": volume }))
    });
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut vrows = Vec::new();
    let mut medians = Vec::new();
    let mut counts = Vec::new();
    let mut radii = Vec::new();
    for (i, seed, res) in results {
        let (rec, data) = record(i, seed, res)?;
        if let Some(data) = data {
            let m: Vec<f64> = serde_json::from_value(data["displacement"]["medians"].clone())?;
            for (&n, &med) in times.iter().zip(&m) {
                rows.push(DisplacementRow { sample: i, n, median: med });
            }
            medians.push(m);
            if !data["volume"].is_null() {
                let c: Vec<f64> = serde_json::from_value(data["volume"]["counts"].clone())?;
                let r: Vec<u64> = serde_json::from_value(data["volume"]["radii"].clone())?;
                if r.len() > radii.len() {
                    radii = r;
                }
                for (&r, &cnt) in radii.iter().zip(&c) {
                    vrows.push(VolumeRow { sample: i, radius: r, count: cnt as usize });
                }
                counts.push(c);
            }
        }
        samples.push(rec);
    }
    let valid = medians.len();
    let mut checks = vec![Check::new(
        "all samples valid",
        valid == config.samples,
        format!("{valid} of {} samples completed", config.samples),
    )];
    let mut aggregate = json!({ "times": times });
    if valid > 0 {
        let means = geometric_means(&medians);
        let xs: Vec<f64> = times[..means.len()].iter().map(|&t| t as f64).collect();
        aggregate["fit_times"] = json!(&times[..means.len()]);
        let beta = loglog_fit(&xs, &means)?;
        aggregate["beta"] = json!(beta.slope);
        aggregate["displacement_fit"] = serde_json::to_value(&beta)?;
        if !counts.is_empty() {
            let means = geometric_means(&counts);
            if means.len() < 2 {
                return Err(Error::Consistency("volume profiles shorter than two radii".into()));
            }
            let rs: Vec<f64> = radii[..means.len()].iter().map(|&r| r as f64).collect();
            aggregate["volume_fit_radii"] = json!(&radii[..means.len()]);
            let vol = loglog_fit(&rs, &means)?;
            let product = beta.slope * vol.slope;
            aggregate["d"] = json!(vol.slope);
            aggregate["volume_fit"] = serde_json::to_value(&vol)?;
            aggregate["beta_times_d"] = json!(product);
            checks.push(Check::new(
                "volume slope in band",
                (p.volume_band[0]..=p.volume_band[1]).contains(&vol.slope),
                format!(
                    "d = {:.4} over r = {:?} (band [{}, {}])",
                    vol.slope,
                    &radii[..means.len()],
                    p.volume_band[0],
                    p.volume_band[1]
                ),
            ));
            checks.push(Check::new(
                "reciprocity",
                (product - 1.0).abs() <= p.reciprocity_tol,
                format!(
                    "beta * d = {:.4} (beta = {:.4} over n <= {}, tolerance {})",
                    product,
                    beta.slope,
                    times[xs.len() - 1],
                    p.reciprocity_tol
                ),
            ));
        }
    }
    let report = finish(config, samples, aggregate, checks);
    let mut tables = vec![("displacement.csv".into(), csv_table(rows)?)];
    if !vrows.is_empty() {
        tables.push(("volume.csv".into(), csv_table(vrows)?));
    }
    Ok(ExperimentOutput { report, tables })
}

fn run_volume(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.volume;
    let results = run_samples(config, |_, sg| volume_exponent(&sg.graph, sg.root, p.r_max, Some(&sg.flagged)));
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    let mut radii = Vec::new();
    for (i, seed, res) in results {
        let (rec, data) = record(i, seed, res)?;
        if let Some(v) = data {
            for (&r, &c) in v.radii.iter().zip(&v.counts) {
                rows.push(VolumeRow { sample: i, radius: r, count: c });
            }
            if v.radii.len() > radii.len() {
                radii = v.radii.clone();
            }
            counts.push(v.counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        }
        samples.push(rec);
    }
    let valid = counts.len();
    let mut checks = vec![Check::new(
        "all samples valid",
        valid == config.samples,
        format!("{valid} of {} samples completed", config.samples),
    )];
    let mut aggregate = json!({ "radii": radii });
    if valid > 0 {
        let means = geometric_means(&counts);
        let rs: Vec<f64> = radii[..means.len()].iter().map(|&r| r as f64).collect();
        aggregate["fit_radii"] = json!(&radii[..means.len()]);
        let fit = loglog_fit(&rs, &means)?;
        checks.push(Check::new(
            "volume slope in band",
            (p.band[0]..=p.band[1]).contains(&fit.slope),
            format!("d = {:.4} over r = {:?} (band [{}, {}])", fit.slope, &radii[..means.len()], p.band[0], p.band[1]),
        ));
        aggregate["d"] = json!(fit.slope);
        aggregate["fit"] = serde_json::to_value(&fit)?;
    }
    let report = finish(config, samples, aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("volume.csv".into(), csv_table(rows)?)] })
}

/// Random multigraph for instance `i` of a sweep: connected, with between
/// `lo` and `max_n` vertices, some parallel edges and optionally self-loops.
fn sweep_graph(seed: u64, i: usize, lo: usize, max_n: usize, max_edges: Option<usize>, loops: bool) -> (MultiGraph, rand_chacha::ChaCha8Rng) {
    let mut rng = stream_rng(seed, streams::SAMPLE_BASE + i as u64);
    let n = rng.random_range(lo.min(max_n)..=max_n);
    let cap = max_edges.unwrap_or(3 * n).max(n - 1);
    let extra = rng.random_range(0..=cap - (n - 1));
    (random_connected(&mut rng, n, extra, loops), rng)
}

#[derive(Debug, Serialize, Deserialize)]
struct TripleRow {
    instance: usize,
    vertices: usize,
    edges: usize,
    source: usize,
    sinks: usize,
    dirichlet: f64,
    thomson: f64,
    dense: f64,
    mc: f64,
    mc_std_err: f64,
    max_rel_dev: f64,
    mc_covered: bool,
}

fn run_triple(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.resistance_triple;
    let rows: Vec<TripleRow> = (0..p.instances)
        .into_par_iter()
        .map(|i| -> Result<TripleRow> {
            let (g, mut rng) = sweep_graph(config.seed, i, 2, p.max_vertices, None, false);
            let n = g.vertex_count();
            let source = rng.random_range(0..n);
            let k = rng.random_range(1..=(n - 1).min(3));
            let mut sinks = Vec::new();
            while sinks.len() < k {
                let v = rng.random_range(0..n);
                if v != source && !sinks.contains(&v) {
                    sinks.push(v);
                }
            }
            let bc = BoundaryCondition::new(source, sinks.clone());
            let pf = harmonic_solve(&g, &bc, 1e-13)?;
            let dirichlet = 1.0 / crate::resistance::dirichlet_energy(&g, &pf.values);
            let flow = current_flow(&g, &pf, &bc)?;
            let thomson = validate_unit_flow(&g, &flow).energy;
            let dense = dense_resistance(&g, source, &sinks)?;
            let est = green_mc(&g, source, &Stop::Hit(sinks.clone()), p.walkers, derive_seed(config.seed, i as u64))?;
            let deg = g.degree(source) as f64;
            let (mc, se) = (est.mean / deg, est.std_err / deg);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
            Ok(TripleRow {
                instance: i,
                vertices: n,
                edges: g.edge_count(),
                source,
                sinks: sinks.len(),
                dirichlet,
                thomson,
                dense,
                mc,
                mc_std_err: se,
                max_rel_dev: rel(dirichlet, dense).max(rel(thomson, dense)).max(rel(dirichlet, thomson)),
                // zero-variance estimates are exact up to rounding
                mc_covered: (mc - dense).abs() <= Z99 * se + 1e-12 * dense,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = rows.iter().map(|r| r.max_rel_dev).fold(0.0, f64::max);
    let covered = rows.iter().filter(|r| r.mc_covered).count();
    let checks = vec![
        Check::new(
            "deterministic routes agree",
            worst <= p.rel_tol,
            format!("max relative deviation {worst:.3e} (tolerance {:e})", p.rel_tol),
        ),
        Check::new(
            "Monte Carlo 99% coverage",
            covered >= p.min_covered,
            format!("{covered} of {} instances covered (need {})", rows.len(), p.min_covered),
        ),
    ];
    let aggregate = json!({ "max_rel_dev": worst, "mc_covered": covered, "instances": rows.len() });
    let report = finish(config, Vec::new(), aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("triple.csv".into(), csv_table(rows)?)] })
}

#[derive(Debug, Serialize)]
struct AppendixRow {
    instance: usize,
    vertices: usize,
    edges: usize,
    self_loops: usize,
    steps: usize,
    tv: f64,
    coupling_exact: bool,
    monotone: bool,
}

fn run_appendix(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.appendix_a;
    let rows: Vec<AppendixRow> = (0..p.instances)
        .into_par_iter()
        .map(|i| -> Result<AppendixRow> {
            let (g, mut rng) = sweep_graph(config.seed, i, 1, p.max_vertices, Some(p.max_edges), true);
            let root = rng.random_range(0..g.vertex_count());
            let steps = rng.random_range(0..=p.max_steps);
            let tv = lazy_equivalence_check(&g, root, steps)?;
            let coupling = midpoint_root_coupling(&g)?;
            let weights = reweight_root(&g)?;
            let stay_ok = (0..g.vertex_count()).all(|v| {
                coupling.stay[v] == num_rational::Rational64::new(2, 2 + g.degree(v) as i64)
            });
            let probs = return_prob_rational(&g, root, p.monotone_n)?;
            let monotone = probs.windows(2).all(|w| w[1] <= w[0]);
            Ok(AppendixRow {
                instance: i,
                vertices: g.vertex_count(),
                edges: g.edge_count(),
                self_loops: g.edges().iter().filter(|e| e.0 == e.1).count(),
                steps,
                tv,
                coupling_exact: coupling.marginal == weights && stay_ok,
                monotone,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_tv = rows.iter().map(|r| r.tv).fold(0.0, f64::max);
    let coupling_fail = rows.iter().filter(|r| !r.coupling_exact).count();
    let mono_fail = rows.iter().filter(|r| !r.monotone).count();
    let hoeffding = {
        let (g, mut rng) = sweep_graph(config.seed, p.instances, 2, p.max_vertices, Some(p.max_edges), true);
        let root = rng.random_range(0..g.vertex_count());
        hoeffding_check(&g, root, p.hoeffding_steps, p.hoeffding_eps, p.hoeffding_trials, config.seed)?
    };
    let checks = vec![
        Check::new("lazy walk equivalence", worst_tv <= p.tv_tol, format!("max TV {worst_tv:.3e} (tolerance {:e})", p.tv_tol)),
        Check::new("root coupling exact", coupling_fail == 0, format!("{coupling_fail} mismatches")),
        Check::new("P(2n) monotone", mono_fail == 0, format!("{mono_fail} violations")),
        Check::new(
            "moving-step counts",
            hoeffding.consistent,
            format!("{} of {} trials outside the band, bound {:.3e}", hoeffding.failures, hoeffding.trials, hoeffding.bound),
        ),
    ];
    let aggregate = json!({ "max_tv": worst_tv, "hoeffding": hoeffding });
    let report = finish(config, Vec::new(), aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("appendix.csv".into(), csv_table(rows)?)] })
}

#[derive(Debug, Serialize)]
struct TransferRow {
    instance: usize,
    lhs: f64,
    energy: f64,
    l_max: usize,
    c_max: usize,
    rhs: f64,
    holds: bool,
    isometry_factor: f64,
}

fn run_transfer(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.transfer_sweep;
    let rows: Vec<TransferRow> = (0..p.instances)
        .into_par_iter()
        .map(|i| -> Result<TransferRow> {
            let (g1, mut rng) = sweep_graph(config.seed, i, 2, p.max_vertices, None, true);
            let (g2, phi, paths) = if i % 5 == 0 {
                // subdivision instances with their natural map and paths
                let sub = subdivide(&g1);
                let maps = sub.maps(&g1);
                let paths = sub.paths(&g1);
                (sub.graph, maps.phi, paths)
            } else {
                let (g2, _) = sweep_graph(config.seed ^ 0x9e37_79b9, i, 2, p.max_vertices, None, true);
                let phi: Vec<usize> = (0..g1.vertex_count()).map(|_| rng.random_range(0..g2.vertex_count())).collect();
                let paths = PathSystem::random(&mut rng, &g1, &g2, &phi, p.max_detour)?;
                (g2, phi, paths)
            };
            let f: Vec<f64> = (0..g2.vertex_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = energy_transfer_bound(&g1, &g2, &phi, &paths, &f)?;
            let psi: Vec<usize> = (0..g2.vertex_count()).map(|_| rng.random_range(0..g1.vertex_count())).collect();
            let pairs1: Vec<(usize, usize)> =
                (0..20).map(|_| (rng.random_range(0..g1.vertex_count()), rng.random_range(0..g1.vertex_count()))).collect();
            let pairs2: Vec<(usize, usize)> =
                (0..20).map(|_| (rng.random_range(0..g2.vertex_count()), rng.random_range(0..g2.vertex_count()))).collect();
            let audit = rough_isometry_audit(&g1, &g2, &VertexMapPair { phi, psi }, &pairs1, &pairs2)?;
            Ok(TransferRow {
                instance: i,
                lhs: b.lhs,
                energy: b.energy,
                l_max: b.l_max,
                c_max: b.c_max,
                rhs: b.rhs,
                holds: b.holds,
                isometry_factor: audit.factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = rows.iter().filter(|r| !r.holds).count();
    let bad_factor = rows.iter().filter(|r| !(r.isometry_factor >= 1.0)).count();
    let checks = vec![
        Check::new("energy transfer inequality", violations == 0, format!("{violations} violations in {} instances", rows.len())),
        Check::new("isometry factor at least 1", bad_factor == 0, format!("{bad_factor} instances below 1")),
    ];
    let aggregate = json!({ "violations": violations, "instances": rows.len() });
    let report = finish(config, Vec::new(), aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("transfer.csv".into(), csv_table(rows)?)] })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExitPoint {
    radius: u32,
    valid: bool,
    reason: Option<String>,
    ball_size: usize,
    degree_sum: usize,
    exact_mean: Option<f64>,
    mc_mean: Option<f64>,
    mc_std_err: Option<f64>,
    /// `R(root <-> exit set) * sum of degrees over the ball`.
    bound: Option<f64>,
    /// Same product with the inner boundary in place of the exit set.
    inner_bound: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ExitRow {
    source: String,
    index: usize,
    radius: u32,
    exact_mean: Option<f64>,
    mc_mean: Option<f64>,
    bound: Option<f64>,
    inner_bound: Option<f64>,
    valid: bool,
}

fn exit_point(g: &MultiGraph, root: usize, ball: &Ball, tol: f64) -> Result<(f64, f64, Option<f64>)> {
    let outer = ball_subgraph(g, ball, true);
    let exits = local_ids(ball, &ball.outside, true);
    let exact = expected_exit_time(&outer, 0, &exits)?;
    let r_exit = effective_resistance(&outer, 0, &exits, tol)?;
    let deg_sum = ball.degree_sum(g) as f64;
    let inner = if ball.boundary.is_empty() || ball.boundary == [root as u32] {
        None
    } else {
        let sub = ball_subgraph(g, ball, false);
        let sinks = local_ids(ball, &ball.boundary, false);
        Some(effective_resistance(&sub, 0, &sinks, tol)? * deg_sum)
    };
    Ok((exact, r_exit * deg_sum, inner))
}

fn run_exit_time(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.exit_time;
    let within = |a: f64, b: f64| a <= b * (1.0 + 1e-9);
    let mut rows = Vec::new();
    let mut small_fail = 0usize;
    let mut small_inner_fail = 0usize;
    let small: Vec<(usize, u32, f64, f64, Option<f64>)> = (0..p.small_instances)
        .into_par_iter()
        .map(|i| -> Result<Option<(usize, u32, f64, f64, Option<f64>)>> {
            let (g, mut rng) = sweep_graph(config.seed, i, 4, 40, None, false);
            let root = rng.random_range(0..g.vertex_count());
            let ecc = crate::graph::bfs_distances(&g, root).into_iter().max().unwrap_or(0);
            if ecc < 1 {
                return Ok(None);
            }
            let r = rng.random_range(0..ecc);
            let ball = crate::graph::bfs_ball(&g, root, r)?;
            let (exact, bound, inner) = exit_point(&g, root, &ball, p.tol)?;
            Ok(Some((i, r, exact, bound, inner)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    for &(i, r, exact, bound, inner) in &small {
        if !within(exact, bound) {
            small_fail += 1;
        }
        if inner.is_some_and(|b| !within(exact, b)) {
            small_inner_fail += 1;
        }
        rows.push(ExitRow {
            source: "small".into(),
            index: i,
            radius: r,
            exact_mean: Some(exact),
            mc_mean: None,
            bound: Some(bound),
            inner_bound: inner,
            valid: true,
        });
    }
    let results = if config.samples > 0 && !p.radii.is_empty() {
        run_samples(config, |_, sg| {
            let mut scratch = BfsScratch::new(sg.graph.vertex_count());
            let walker = Walker::new(&sg.graph, sg.root)?.with_flagged(&sg.flagged);
            let mut points = Vec::new();
            for &r in &p.radii {
                let ball = bfs_ball_with(&sg.graph, sg.root, r, Some(&sg.flagged), &mut scratch)?;
                let mut pt = ExitPoint {
                    radius: r,
                    valid: false,
                    reason: None,
                    ball_size: ball.len(),
                    degree_sum: ball.degree_sum(&sg.graph),
                    exact_mean: None,
                    mc_mean: None,
                    mc_std_err: None,
                    bound: None,
                    inner_bound: None,
                };
                if ball.contaminated {
                    pt.reason = Some("ball reaches the window boundary".into());
                } else if ball.outside.is_empty() {
                    pt.reason = Some("ball covers the whole component".into());
                } else {
                    let (exact, bound, inner) = exit_point(&sg.graph, sg.root, &ball, p.tol)?;
                    let times = walker.exit_time_samples(r, p.walkers, derive_seed(sg.seed, r as u64), u64::MAX)?;
                    let n = times.len() as f64;
                    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / n;
                    let var = times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    pt.exact_mean = Some(exact);
                    pt.mc_mean = Some(mean);
                    pt.mc_std_err = Some((var / n).sqrt());
                    pt.bound = Some(bound);
                    pt.inner_bound = inner;
                    pt.valid = true;
                }
                points.push(pt);
            }
            Ok(points)
        })
    } else {
        Vec::new()
    };
    let mut samples = Vec::new();
    let mut map_fail = 0usize;
    let mut map_invalid = 0usize;
    let mut map_points = 0usize;
    for (i, seed, res) in results {
        let (rec, data) = record(i, seed, res)?;
        match data {
            Some(points) => {
                for pt in points {
                    map_points += 1;
                    if let (Some(mc), Some(se), Some(exact), Some(bound)) = (pt.mc_mean, pt.mc_std_err, pt.exact_mean, pt.bound) {
                        if mc - Z99 * se > bound || !within(exact, bound) {
                            map_fail += 1;
                        }
                    } else {
                        map_invalid += 1;
                    }
                    rows.push(ExitRow {
                        source: "map".into(),
                        index: i,
                        radius: pt.radius,
                        exact_mean: pt.exact_mean,
                        mc_mean: pt.mc_mean,
                        bound: pt.bound,
                        inner_bound: pt.inner_bound,
                        valid: pt.valid,
                    });
                }
            }
            None => {
                map_points += p.radii.len();
                map_invalid += p.radii.len();
            }
        }
        samples.push(rec);
    }
    let mut checks = Vec::new();
    if p.small_instances > 0 {
        checks.push(Check::new(
            "exact inequality on small graphs",
            small_fail == 0,
            format!("{small_fail} violations in {} instances", small.len()),
        ));
    }
    if map_points > 0 {
        checks.push(Check::new(
            "map samples within Monte Carlo CI",
            map_fail == 0 && map_invalid == 0,
            format!("{map_fail} violations, {map_invalid} invalid of {map_points} points"),
        ));
    }
    let aggregate = json!({
        "small_instances": small.len(),
        "small_violations": small_fail,
        "small_inner_boundary_violations": small_inner_fail,
        "map_points": map_points,
        "map_violations": map_fail,
        "map_invalid": map_invalid,
    });
    let report = finish(config, samples, aggregate, checks);
    Ok(ExperimentOutput { report, tables: vec![("exit_time.csv".into(), csv_table(rows)?)] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GreenLoglaw);
        cfg.gamma = 1.2345678901234567;
        cfg.green_loglaw.radii = vec![8, 16];
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let parsed = ExperimentConfig::from_toml("kind = \"specdim\"\nsamples = 3\n[specdim]\nn_max = 64\nfit_lo = 8\nfit_hi = 64\n").unwrap();
        assert_eq!(parsed.kind, ExperimentKind::Specdim);
        assert_eq!(parsed.specdim.tau, 1e-15);
        assert!(ExperimentConfig::from_toml("kind = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"volume\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"volume\"\ngamma = 2.5").is_err());
    }

    #[test]
    fn synthetic_specdim_is_exact() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Specdim);
        cfg.window_n = 50;
        cfg.specdim.synthetic = true;
        cfg.specdim.n_max = 256;
        cfg.specdim.fit_lo = 4;
        cfg.specdim.fit_hi = 256;
        let out = run_experiment(&cfg).unwrap();
        let ds = out.report.aggregate["mean_d_s"].as_f64().unwrap();
        assert!((ds - 2.0).abs() < 1e-12);
        assert!(out.report.passed);
    }

    #[test]
    fn small_green_run_is_deterministic() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GreenLoglaw);
        cfg.window_n = 20_000;
        cfg.samples = 2;
        cfg.green_loglaw.radii = vec![2, 4, 8];
        cfg.green_loglaw.mc_walkers = 2000;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.samples.len(), 2);
        assert!(a.tables[0].1.starts_with("sample,seed,root,radius,value"));
    }

    #[test]
    fn small_sweeps_pass() {
        for kind in [ExperimentKind::AppendixA, ExperimentKind::TransferSweep] {
            let mut cfg = ExperimentConfig::new(kind);
            cfg.appendix_a.instances = 10;
            cfg.transfer_sweep.instances = 20;
            let out = run_experiment(&cfg).unwrap();
            assert!(out.report.passed, "{:?}", out.report.checks);
        }
        let mut cfg = ExperimentConfig::new(ExperimentKind::ResistanceTriple);
        cfg.resistance_triple.instances = 5;
        cfg.resistance_triple.walkers = 20_000;
        cfg.resistance_triple.min_covered = 4;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.checks[0].passed, "{:?}", out.report.checks);
    }

    #[test]
    fn lattice_model_runs() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Volume);
        cfg.model = Model::SquareLattice;
        cfg.lattice_side = 201;
        cfg.volume.r_max = 64;
        cfg.volume.band = [1.9, 2.1];
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.passed, "{:?}", out.report.checks);
    }

    #[test]
    fn exit_time_small_graphs() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::ExitTime);
        cfg.samples = 0;
        cfg.exit_time.small_instances = 30;
        cfg.exit_time.radii = vec![];
        let out = run_experiment(&cfg).unwrap();
        assert!(out.report.passed, "{:?}", out.report.checks);
    }
}
