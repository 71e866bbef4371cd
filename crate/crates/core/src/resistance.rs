//! Electrical-network quantities on unit-conductance multigraphs.
//!
//! `R(x <-> V) = 1 / Energy(f_V)` where `f_V` is 1 at `x`, 0 on `V` and
//! harmonic elsewhere; the current flow of `f_V`, normalised to unit
//! divergence at `x`, is the energy-minimising unit flow and has energy
//! `R(x <-> V)`. Parallel edges carry independent flow values.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::graph::{bfs_distances, MultiGraph};
use crate::seed::stream_rng;
use crate::solver::{solve_region, SolverOptions};

/// Source `x` held at 1, sink set `V` held at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryCondition {
    pub source: usize,
    pub sinks: Vec<usize>,
}

impl BoundaryCondition {
    pub fn new(source: usize, sinks: impl Into<Vec<usize>>) -> Self {
        Self { source, sinks: sinks.into() }
    }

    pub fn validate(&self, g: &MultiGraph) -> Result<()> {
        g.check_vertex(self.source)?;
        if self.sinks.is_empty() {
            return domain("sink set is empty");
        }
        for &v in &self.sinks {
            g.check_vertex(v)?;
            if v == self.source {
                return domain("source belongs to the sink set");
            }
        }
        Ok(())
    }

    fn fixed_values(&self, n: usize) -> Vec<f64> {
        let mut fixed = vec![f64::NAN; n];
        for &v in &self.sinks {
            fixed[v] = 0.0;
        }
        fixed[self.source] = 1.0;
        fixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub values: Vec<f64>,
    /// Relative residual reached by the solver.
    pub residual: f64,
    pub iterations: usize,
}

pub fn harmonic_solve(g: &MultiGraph, bc: &BoundaryCondition, tol: f64) -> Result<PotentialField> {
    harmonic_solve_with(g, bc, SolverOptions::with_tol(tol))
}

pub fn harmonic_solve_with(
    g: &MultiGraph,
    bc: &BoundaryCondition,
    opts: SolverOptions,
) -> Result<PotentialField> {
    bc.validate(g)?;
    if !(opts.tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let fixed = bc.fixed_values(g.vertex_count());
    let sol = solve_region(g, bc.source, &fixed, |_| 0.0, opts)?;
    if !sol.touched_fixed {
        return Err(Error::Topology(format!(
            "source {} is not connected to the sink set",
            bc.source
        )));
    }
    // maximum principle: anything outside [0, 1] is rounding
    let values = sol.values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(PotentialField { values, residual: sol.residual, iterations: sol.iterations })
}

/// Largest graph accepted by [`dense_resistance`].
pub const DENSE_ORACLE_CAP: usize = 2000;

/// Effective resistance by a dense direct solve of the grounded Laplacian,
/// for cross-checking the iterative solver on small graphs.
pub fn dense_resistance(g: &MultiGraph, x: usize, sinks: &[usize]) -> Result<f64> {
    let bc = BoundaryCondition::new(x, sinks.to_vec());
    bc.validate(g)?;
    let n = g.vertex_count();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::OracleCap { vertices: n, cap: DENSE_ORACLE_CAP });
    }
    let dist = bfs_distances(g, x);
    if sinks.iter().all(|&v| dist[v] == u32::MAX) {
        return Err(Error::Topology(format!("source {x} is not connected to the sink set")));
    }
    // free vertices: those in the source's component that are not sinks
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for v in 0..n {
        if dist[v] != u32::MAX && !sinks.contains(&v) {
            index[v] = free.len();
            free.push(v);
        }
    }
    let m = free.len();
    let mut lap = nalgebra::DMatrix::<f64>::zeros(m, m);
    for &(a, b) in g.edges() {
        let (a, b) = (a as usize, b as usize);
        if a == b {
            continue;
        }
        for (u, w) in [(a, b), (b, a)] {
            if index[u] != usize::MAX {
                lap[(index[u], index[u])] += 1.0;
                if index[w] != usize::MAX {
                    lap[(index[u], index[w])] -= 1.0;
                }
            }
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    rhs[index[x]] = 1.0;
    let chol = lap
        .cholesky()
        .ok_or_else(|| Error::Consistency("grounded Laplacian is not positive definite".into()))?;
    Ok(chol.solve(&rhs)[index[x]])
}

/// Sum over edge instances of `(f(u) - f(v))^2`; self-loops contribute 0.
pub fn dirichlet_energy(g: &MultiGraph, f: &[f64]) -> f64 {
    g.edges()
        .iter()
        .map(|&(a, b)| {
            let d = f[a as usize] - f[b as usize];
            d * d
        })
        .sum()
}

pub fn effective_resistance(g: &MultiGraph, x: usize, sinks: &[usize], tol: f64) -> Result<f64> {
    let pf = harmonic_solve(g, &BoundaryCondition::new(x, sinks), tol)?;
    Ok(1.0 / dirichlet_energy(g, &pf.values))
}

/// Antisymmetric edge function; `values[e]` is the flow along edge `e` in its
/// stored orientation `g.edge(e).0 -> g.edge(e).1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFlow {
    pub source: usize,
    pub sinks: Vec<usize>,
    pub values: Vec<f64>,
}

impl UnitFlow {
    pub fn zero(g: &MultiGraph, source: usize, sinks: Vec<usize>) -> Self {
        Self { source, sinks, values: vec![0.0; g.edge_count()] }
    }

    /// Sum over unoriented edge instances of `theta(e)^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|t| t * t).sum()
    }

    /// Net outflow at every vertex.
    pub fn divergence(&self, g: &MultiGraph) -> Vec<f64> {
        let mut div = vec![0.0; g.vertex_count()];
        for (e, &t) in self.values.iter().enumerate() {
            let (a, b) = g.edge(e);
            if a != b {
                div[a] += t;
                div[b] -= t;
            }
        }
        div
    }

    /// Adds `amount` along half-edge `h` (from its owner towards its target).
    fn push_along(&mut self, g: &MultiGraph, from: usize, h: usize, amount: f64) {
        let e = g.half_edge_edge(h);
        if g.edge(e).0 == from {
            self.values[e] += amount;
        } else {
            self.values[e] -= amount;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    /// Largest `|divergence|` off the source and sinks.
    pub max_interior_divergence: f64,
    /// `|divergence(source) - 1|`.
    pub source_deviation: f64,
    pub energy: f64,
}

impl FlowDiagnostics {
    pub fn is_unit_flow(&self, tol: f64) -> bool {
        self.max_interior_divergence <= tol && self.source_deviation <= tol
    }
}

pub fn validate_unit_flow(g: &MultiGraph, theta: &UnitFlow) -> FlowDiagnostics {
    let div = theta.divergence(g);
    let sinks: HashSet<usize> = theta.sinks.iter().copied().collect();
    let max_interior_divergence = div
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != theta.source && !sinks.contains(&v))
        .map(|(_, d)| d.abs())
        .fold(0.0, f64::max);
    FlowDiagnostics {
        max_interior_divergence,
        source_deviation: (div[theta.source] - 1.0).abs(),
        energy: theta.energy(),
    }
}

/// Current flow of a potential, scaled to unit divergence at the source.
pub fn current_flow(g: &MultiGraph, pf: &PotentialField, bc: &BoundaryCondition) -> Result<UnitFlow> {
    bc.validate(g)?;
    let f = &pf.values;
    let values: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(a, b)| f[a as usize] - f[b as usize])
        .collect();
    let mut flow = UnitFlow { source: bc.source, sinks: bc.sinks.clone(), values };
    let out = flow.divergence(g)[bc.source];
    if !(out.abs() > 0.0) {
        return domain("potential carries no current out of the source");
    }
    for t in &mut flow.values {
        *t /= out;
    }
    Ok(flow)
}

/// Distribution over source-to-sink paths whose averaged traversal defines a flow.
#[derive(Debug, Clone, PartialEq)]
pub enum PathPolicy {
    /// Explicit vertex paths with nonnegative weights (normalised internally).
    Explicit(Vec<(Vec<usize>, f64)>),
    /// One breadth-first geodesic (lowest-index predecessor, lowest edge id)
    /// to each sink, sinks weighted uniformly. Above `sample_threshold` sinks,
    /// that many targets are drawn uniformly with replacement instead.
    BoundaryGeodesics { sample_threshold: usize, seed: u64 },
}

impl PathPolicy {
    pub fn boundary_geodesics(seed: u64) -> Self {
        Self::BoundaryGeodesics { sample_threshold: 4096, seed }
    }
}

/// `theta(e) = P(path crosses e forwards) - P(path crosses e backwards)`.
pub fn path_flow(g: &MultiGraph, x: usize, sinks: &[usize], policy: &PathPolicy) -> Result<UnitFlow> {
    BoundaryCondition::new(x, sinks).validate(g)?;
    let mut flow = UnitFlow::zero(g, x, sinks.to_vec());
    match policy {
        PathPolicy::Explicit(paths) => {
            let total: f64 = paths.iter().map(|p| p.1).sum();
            if paths.is_empty() || !(total > 0.0) || paths.iter().any(|p| p.1 < 0.0) {
                return domain("empty or non-positive path family");
            }
            let sink_set: HashSet<usize> = sinks.iter().copied().collect();
            for (path, w) in paths {
                if path.first() != Some(&x) || !path.last().is_some_and(|v| sink_set.contains(v)) {
                    return domain("path must start at the source and end in the sink set");
                }
                for step in path.windows(2) {
                    let h = lowest_edge_half(g, step[0], step[1])
                        .ok_or_else(|| Error::Domain(format!("{} and {} are not adjacent", step[0], step[1])))?;
                    flow.push_along(g, step[0], h, w / total);
                }
            }
        }
        PathPolicy::BoundaryGeodesics { sample_threshold, seed } => {
            let dist = bfs_distances(g, x);
            let mut targets: Vec<usize> = sinks.iter().copied().filter(|&v| dist[v] != u32::MAX).collect();
            if targets.is_empty() {
                return domain("no sink is reachable: empty path family");
            }
            if targets.len() > *sample_threshold {
                let mut rng = stream_rng(*seed, 0);
                targets = (0..*sample_threshold)
                    .map(|_| targets[rng.random_range(0..targets.len())])
                    .collect();
            }
            let weight = 1.0 / targets.len() as f64;
            let mut load = vec![0.0f64; g.vertex_count()];
            for &t in &targets {
                load[t] += weight;
            }
            // predecessor half-edge (owned by the predecessor) for every reached vertex
            let mut order: Vec<usize> = (0..g.vertex_count()).filter(|&v| dist[v] != u32::MAX).collect();
            order.sort_by_key(|&v| (dist[v], v));
            for &v in order.iter().rev() {
                if v == x || load[v] == 0.0 {
                    continue;
                }
                let pred = g
                    .neighbors(v)
                    .iter()
                    .map(|&w| w as usize)
                    .filter(|&w| dist[w] + 1 == dist[v])
                    .min()
                    .expect("reached vertex has a predecessor");
                let h = lowest_edge_half(g, pred, v).expect("adjacent");
                flow.push_along(g, pred, h, load[v]);
                load[pred] += load[v];
            }
        }
    }
    Ok(flow)
}

// Half-edge at `from` pointing to `to` with the smallest edge id.
fn lowest_edge_half(g: &MultiGraph, from: usize, to: usize) -> Option<usize> {
    g.half_edges(from)
        .filter(|&h| g.half_edge_target(h) == to)
        .min_by_key(|&h| g.half_edge_edge(h))
}

/// Expected hitting time of `boundary` from `root`:
/// `u = 1 + mean of u over neighbours` off the boundary, `u = 0` on it.
pub fn expected_exit_time(g: &MultiGraph, root: usize, boundary: &[usize]) -> Result<f64> {
    expected_exit_time_with(g, root, boundary, SolverOptions::default())
}

pub fn expected_exit_time_with(
    g: &MultiGraph,
    root: usize,
    boundary: &[usize],
    opts: SolverOptions,
) -> Result<f64> {
    g.check_vertex(root)?;
    if boundary.is_empty() {
        return domain("boundary is empty");
    }
    let mut fixed = vec![f64::NAN; g.vertex_count()];
    for &v in boundary {
        g.check_vertex(v)?;
        fixed[v] = 0.0;
    }
    if !fixed[root].is_nan() {
        return Ok(0.0);
    }
    let sol = solve_region(g, root, &fixed, |v| g.degree(v) as f64, opts)?;
    Ok(sol.values[root])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn path_potential_and_resistance() {
        let g = path(3);
        let bc = BoundaryCondition::new(0, vec![2]);
        let pf = harmonic_solve(&g, &bc, TOL).unwrap();
        assert_eq!(pf.values[0], 1.0);
        assert!((pf.values[1] - 0.5).abs() < 1e-12);
        assert_eq!(pf.values[2], 0.0);
        assert!((dirichlet_energy(&g, &pf.values) - 0.5).abs() < 1e-12);
        assert!((effective_resistance(&g, 0, &[2], TOL).unwrap() - 2.0).abs() < 1e-10);
        let flow = current_flow(&g, &pf, &bc).unwrap();
        assert!(flow.values.iter().all(|&t| (t - 1.0).abs() < 1e-10));
        assert!((flow.energy() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn cycle_and_complete() {
        let c4 = cycle(4);
        assert!((effective_resistance(&c4, 0, &[2], TOL).unwrap() - 1.0).abs() < 1e-10);
        let bc = BoundaryCondition::new(0, vec![2]);
        let pf = harmonic_solve(&c4, &bc, TOL).unwrap();
        let flow = current_flow(&c4, &pf, &bc).unwrap();
        assert!(flow.values.iter().all(|&t| (t.abs() - 0.5).abs() < 1e-10));
        assert!((flow.energy() - 1.0).abs() < 1e-10);

        let k4 = complete(4);
        let pf = harmonic_solve(&k4, &BoundaryCondition::new(0, vec![1]), TOL).unwrap();
        assert!((pf.values[2] - 0.5).abs() < 1e-12 && (pf.values[3] - 0.5).abs() < 1e-12);
        assert!((effective_resistance(&k4, 0, &[1], TOL).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn double_edge_has_no_interior() {
        let g = MultiGraph::from_edges(2, vec![(0, 1), (0, 1)]).unwrap();
        let pf = harmonic_solve(&g, &BoundaryCondition::new(0, vec![1]), TOL).unwrap();
        assert_eq!(pf.values, vec![1.0, 0.0]);
        assert_eq!(dirichlet_energy(&g, &pf.values), 2.0);
        assert_eq!(pf.iterations, 0);
    }

    #[test]
    fn energy_conventions() {
        let g = MultiGraph::from_edges(2, vec![(0, 1), (0, 0)]).unwrap();
        assert_eq!(dirichlet_energy(&g, &[3.0, 3.0]), 0.0);
        assert_eq!(dirichlet_energy(&g, &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn boundary_condition_errors() {
        let g = path(3);
        assert!(harmonic_solve(&g, &BoundaryCondition::new(0, vec![]), TOL).is_err());
        assert!(harmonic_solve(&g, &BoundaryCondition::new(0, vec![0]), TOL).is_err());
        assert!(harmonic_solve(&g, &BoundaryCondition::new(0, vec![2]), -1.0).is_err());
        let split = MultiGraph::from_edges(4, vec![(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            harmonic_solve(&split, &BoundaryCondition::new(0, vec![3]), TOL),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn convergence_error_reports_residual() {
        let g = path(200);
        let bc = BoundaryCondition::new(0, vec![199]);
        let opts = SolverOptions { tol: 1e-14, iter_factor: 0 };
        match harmonic_solve_with(&g, &bc, opts) {
            Err(Error::Convergence { residual, .. }) => assert!(residual > 1e-14),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn path_flows() {
        let c4 = cycle(4);
        let policy = PathPolicy::Explicit(vec![(vec![0, 1, 2], 1.0), (vec![0, 3, 2], 1.0)]);
        let flow = path_flow(&c4, 0, &[2], &policy).unwrap();
        assert!((flow.energy() - 1.0).abs() < 1e-15);
        let d = validate_unit_flow(&c4, &flow);
        assert!(d.is_unit_flow(1e-15));

        let g = path(5);
        let flow = path_flow(&g, 0, &[4], &PathPolicy::Explicit(vec![(vec![0, 1, 2, 3, 4], 1.0)])).unwrap();
        assert_eq!(flow.energy(), 4.0);
        let geo = path_flow(&g, 0, &[4], &PathPolicy::boundary_geodesics(0)).unwrap();
        assert_eq!(geo, flow);

        assert!(path_flow(&g, 0, &[4], &PathPolicy::Explicit(vec![])).is_err());
        assert!(path_flow(&g, 0, &[4], &PathPolicy::Explicit(vec![(vec![0, 2, 4], 1.0)])).is_err());
    }

    #[test]
    fn geodesic_flow_sampling_is_still_a_unit_flow() {
        let g = grid(41, 41);
        let center = 20 * 41 + 20;
        let ring: Vec<usize> = (0..g.vertex_count())
            .filter(|&v| {
                let (i, j) = ((v % 41) as i64 - 20, (v / 41) as i64 - 20);
                i.abs() + j.abs() == 15
            })
            .collect();
        let policy = PathPolicy::BoundaryGeodesics { sample_threshold: 10, seed: 3 };
        let flow = path_flow(&g, center, &ring, &policy).unwrap();
        let d = validate_unit_flow(&g, &flow);
        assert!(d.is_unit_flow(1e-12));
        let r = effective_resistance(&g, center, &ring, TOL).unwrap();
        assert!(d.energy >= r);
    }

    #[test]
    fn flow_diagnostics() {
        let g = path(3);
        let zero = UnitFlow::zero(&g, 0, vec![2]);
        let d = validate_unit_flow(&g, &zero);
        assert_eq!(d.source_deviation, 1.0);
        assert_eq!(d.energy, 0.0);
        let hand = UnitFlow { source: 0, sinks: vec![2], values: vec![1.0, 1.0] };
        let d = validate_unit_flow(&g, &hand);
        assert_eq!(d.max_interior_divergence, 0.0);
        assert_eq!(d.source_deviation, 0.0);
    }

    #[test]
    fn exit_time_examples() {
        let g = path(3);
        assert!((expected_exit_time(&g, 0, &[2]).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(expected_exit_time(&g, 2, &[2]).unwrap(), 0.0);
        let r = effective_resistance(&g, 0, &[2], TOL).unwrap();
        assert!(r * 3.0 >= 4.0);
        let split = MultiGraph::from_edges(3, vec![(0, 1)]).unwrap();
        assert!(matches!(expected_exit_time(&split, 0, &[2]), Err(Error::Topology(_))));
    }

    #[test]
    fn dense_oracle_examples() {
        assert!((dense_resistance(&path(3), 0, &[2]).unwrap() - 2.0).abs() < 1e-12);
        assert!((dense_resistance(&cycle(4), 0, &[2]).unwrap() - 1.0).abs() < 1e-12);
        assert!((dense_resistance(&complete(4), 0, &[1]).unwrap() - 0.5).abs() < 1e-12);
        let split = MultiGraph::from_edges(3, vec![(0, 1)]).unwrap();
        assert!(matches!(dense_resistance(&split, 0, &[2]), Err(Error::Topology(_))));
    }

    #[test]
    fn rayleigh_monotonicity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let g = random_connected(&mut rng, 12, 10, false);
            let r = effective_resistance(&g, 0, &[11], TOL).unwrap();
            for e in 0..g.edge_count() {
                let h = g.without_edge(e);
                match effective_resistance(&h, 0, &[11], TOL) {
                    Ok(rh) => assert!(rh >= r * (1.0 - 1e-9)),
                    Err(Error::Topology(_)) => {}
                    Err(err) => panic!("{err}"),
                }
            }
        }
    }
}
