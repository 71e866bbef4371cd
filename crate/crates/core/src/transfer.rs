//! Comparison machinery between two graphs: Dirichlet-energy transfer along
//! path systems, rough-isometry audits, and the subdivision / root
//! reweighting / lazy-walk identities.

use std::collections::HashMap;

use num_rational::Rational64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::graph::{bfs_distances, MultiGraph};
use crate::seed::{stream_rng, streams};
use crate::walker::exact_distribution;

/// Relative slack allowed for rounding when checking the energy inequality.
pub const ENERGY_ROUNDING_SLACK: f64 = 1e-12;

/// For each edge `{u, v}` of a source graph, a vertex path in the target graph
/// from `phi(u)` to `phi(v)`. Parallel source edges take one entry each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathSystem {
    pub paths: Vec<(usize, usize, Vec<usize>)>,
}

/// A path system together with its vertex map, as stored in text files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferSpec {
    pub phi: Vec<usize>,
    pub paths: PathSystem,
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Format(format!("line {line}: bad vertex '{tok}'")))
}

impl TransferSpec {
    /// Parses `v -> x` map lines and `edge u v : x0 x1 ... xk` path lines.
    /// Blank lines and `#` comments are ignored. The map must cover `0..n`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut paths = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            let ln = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("edge ") {
                let (head, tail) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("line {ln}: missing ':'")))?;
                let ends: Vec<&str> = head.split_whitespace().collect();
                if ends.len() != 2 {
                    return Err(Error::Format(format!("line {ln}: expected 'edge u v'")));
                }
                let path = tail.split_whitespace().map(|t| parse_usize(t, ln)).collect::<Result<Vec<_>>>()?;
                if path.is_empty() {
                    return Err(Error::Format(format!("line {ln}: empty path")));
                }
                paths.push((parse_usize(ends[0], ln)?, parse_usize(ends[1], ln)?, path));
            } else if let Some((v, x)) = line.split_once("->") {
                let v = parse_usize(v.trim(), ln)?;
                if map.insert(v, parse_usize(x.trim(), ln)?).is_some() {
                    return Err(Error::Format(format!("line {ln}: vertex {v} mapped twice")));
                }
            } else {
                return Err(Error::Format(format!("line {ln}: unrecognised line")));
            }
        }
        let phi = (0..map.len())
            .map(|v| map.get(&v).copied().ok_or_else(|| Error::Format(format!("map misses vertex {v}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { phi, paths: PathSystem { paths } })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (v, x) in self.phi.iter().enumerate() {
            out.push_str(&format!("{v} -> {x}\n"));
        }
        for (u, v, p) in &self.paths.paths {
            let body: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("edge {u} {v} : {}\n", body.join(" ")));
        }
        out
    }
}

fn check_map(g1: &MultiGraph, g2: &MultiGraph, phi: &[usize]) -> Result<()> {
    if phi.len() != g1.vertex_count() {
        return domain(format!("map has {} entries for {} vertices", phi.len(), g1.vertex_count()));
    }
    if let Some(&x) = phi.iter().find(|&&x| x >= g2.vertex_count()) {
        return domain(format!("map target {x} out of range"));
    }
    Ok(())
}

// BFS tree path with the lowest-index predecessor (first discovery).
fn bfs_path(g: &MultiGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = g.vertex_count();
    let mut pred = vec![usize::MAX; n];
    pred[from] = from;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in g.neighbors(v) {
            let w = w as usize;
            if pred[w] == usize::MAX {
                pred[w] = v;
                queue.push_back(w);
            }
        }
    }
    if pred[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut v = to;
    while v != from {
        v = pred[v];
        path.push(v);
    }
    path.reverse();
    Some(path)
}

impl PathSystem {
    /// Geodesic paths for every edge of `g1`.
    pub fn geodesic(g1: &MultiGraph, g2: &MultiGraph, phi: &[usize]) -> Result<Self> {
        check_map(g1, g2, phi)?;
        let paths = g1
            .edges()
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (a as usize, b as usize);
                bfs_path(g2, phi[a], phi[b])
                    .map(|p| (a, b, p))
                    .ok_or_else(|| Error::Topology(format!("no path from {} to {}", phi[a], phi[b])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { paths })
    }

    /// Paths that wander for up to `max_detour` random steps before heading
    /// to the target along a geodesic.
    pub fn random<R: Rng>(rng: &mut R, g1: &MultiGraph, g2: &MultiGraph, phi: &[usize], max_detour: usize) -> Result<Self> {
        check_map(g1, g2, phi)?;
        let mut paths = Vec::with_capacity(g1.edge_count());
        for &(a, b) in g1.edges() {
            let (a, b) = (a as usize, b as usize);
            let mut path = vec![phi[a]];
            let detour = rng.random_range(0..=max_detour);
            for _ in 0..detour {
                let nbrs = g2.neighbors(*path.last().unwrap());
                if nbrs.is_empty() {
                    break;
                }
                path.push(nbrs[rng.random_range(0..nbrs.len())] as usize);
            }
            let tail = bfs_path(g2, *path.last().unwrap(), phi[b])
                .ok_or_else(|| Error::Topology(format!("no path to {}", phi[b])))?;
            path.extend_from_slice(&tail[1..]);
            paths.push((a, b, path));
        }
        Ok(Self { paths })
    }

    /// Resolves each edge instance of `g1` to its sequence of `g2` edge
    /// instances (the lowest-id instance between consecutive vertices).
    pub fn resolve(&self, g1: &MultiGraph, g2: &MultiGraph, phi: &[usize]) -> Result<Vec<Vec<usize>>> {
        check_map(g1, g2, phi)?;
        let mut pool: HashMap<(usize, usize), std::collections::VecDeque<usize>> = HashMap::new();
        for (i, &(u, v, _)) in self.paths.iter().enumerate() {
            pool.entry((u.min(v), u.max(v))).or_default().push_back(i);
        }
        let mut out = Vec::with_capacity(g1.edge_count());
        for &(a, b) in g1.edges() {
            let (a, b) = (a as usize, b as usize);
            let idx = pool
                .get_mut(&(a.min(b), a.max(b)))
                .and_then(|q| q.pop_front())
                .ok_or_else(|| Error::Domain(format!("edge {{{a}, {b}}} has no path")))?;
            let (u, _, ref p) = self.paths[idx];
            let path: Vec<usize> = if u == a { p.clone() } else { p.iter().rev().copied().collect() };
            if path[0] != phi[a] || *path.last().unwrap() != phi[b] {
                return domain(format!("path for edge {{{a}, {b}}} does not join the mapped endpoints"));
            }
            let mut edges = Vec::with_capacity(path.len() - 1);
            for w in path.windows(2) {
                if w[0] >= g2.vertex_count() || w[1] >= g2.vertex_count() {
                    return domain(format!("path vertex out of range in edge {{{a}, {b}}}"));
                }
                let e = g2
                    .half_edges(w[0])
                    .filter(|&h| g2.half_edge_target(h) == w[1])
                    .map(|h| g2.half_edge_edge(h))
                    .min()
                    .ok_or_else(|| Error::Domain(format!("path step {} - {} is not an edge", w[0], w[1])))?;
                edges.push(e);
            }
            out.push(edges);
        }
        if let Some((&(u, v), _)) = pool.iter().find(|(_, q)| !q.is_empty()) {
            return domain(format!("path given for {{{u}, {v}}} which has no matching edge"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBound {
    /// `Energy(f o phi; G1)`.
    pub lhs: f64,
    /// `sum_e |P_e| * sum_{e' in P_e} (grad f(e'))^2`, the middle of the chain.
    pub middle: f64,
    /// `Energy(f; G2)`.
    pub energy: f64,
    pub l_max: usize,
    pub c_max: usize,
    /// `l_max * c_max * energy`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `Energy(f o phi; G1) <= L_max * C_max * Energy(f; G2)` and the
/// intermediate Cauchy-Schwarz step.
pub fn energy_transfer_bound(
    g1: &MultiGraph,
    g2: &MultiGraph,
    phi: &[usize],
    paths: &PathSystem,
    f: &[f64],
) -> Result<TransferBound> {
    if f.len() != g2.vertex_count() {
        return domain("function length does not match the target graph");
    }
    let resolved = paths.resolve(g1, g2, phi)?;
    let grad2 = |e: usize| {
        let (a, b) = g2.edge(e);
        (f[a] - f[b]).powi(2)
    };
    let mut congestion = vec![0usize; g2.edge_count()];
    let mut lhs = 0.0;
    let mut middle = 0.0;
    let mut l_max = 0;
    for (&(a, b), es) in g1.edges().iter().zip(&resolved) {
        lhs += (f[phi[a as usize]] - f[phi[b as usize]]).powi(2);
        middle += es.len() as f64 * es.iter().map(|&e| grad2(e)).sum::<f64>();
        l_max = l_max.max(es.len());
        for &e in es {
            congestion[e] += 1;
        }
    }
    let c_max = congestion.iter().copied().max().unwrap_or(0);
    let energy: f64 = (0..g2.edge_count()).map(grad2).sum();
    let rhs = (l_max * c_max) as f64 * energy;
    let within = |a: f64, b: f64| a <= b + ENERGY_ROUNDING_SLACK * b.abs().max(f64::MIN_POSITIVE);
    let holds = within(lhs, middle) && within(middle, rhs);
    Ok(TransferBound { lhs, middle, energy, l_max, c_max, rhs, holds })
}

/// Vertex maps in both directions between two graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexMapPair {
    pub phi: Vec<usize>,
    pub psi: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionStats {
    pub pairs: usize,
    /// Largest `d_target / d_source`.
    pub max_expansion: f64,
    /// Largest `d_source / (d_target + 2)`.
    pub max_contraction: f64,
    /// Median, 90th and 99th percentile of `d_target / d_source`.
    pub ratio_quantiles: [f64; 3],
    /// Smallest `K >= 1` with `d_s / K - 2 <= d_t <= K d_s` on every pair.
    pub factor: f64,
}

fn distortion(g_src: &MultiGraph, g_dst: &MultiGraph, map: &[usize], pairs: &[(usize, usize)]) -> Result<DistortionStats> {
    check_map(g_src, g_dst, map)?;
    let mut cache_src: HashMap<usize, Vec<u32>> = HashMap::new();
    let mut cache_dst: HashMap<usize, Vec<u32>> = HashMap::new();
    let mut ratios = Vec::with_capacity(pairs.len());
    let (mut expand, mut contract) = (0.0f64, 0.0f64);
    for &(u, v) in pairs {
        g_src.check_vertex(u)?;
        g_src.check_vertex(v)?;
        if u == v {
            continue;
        }
        let ds = cache_src.entry(u).or_insert_with(|| bfs_distances(g_src, u))[v];
        let dt = cache_dst.entry(map[u]).or_insert_with(|| bfs_distances(g_dst, map[u]))[map[v]];
        if ds == u32::MAX || dt == u32::MAX {
            return Err(Error::Topology(format!("pair ({u}, {v}) is not connected")));
        }
        let (ds, dt) = (ds as f64, dt as f64);
        ratios.push(dt / ds);
        expand = expand.max(dt / ds);
        contract = contract.max(ds / (dt + 2.0));
    }
    ratios.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if ratios.is_empty() {
            f64::NAN
        } else {
            ratios[((ratios.len() - 1) as f64 * p).round() as usize]
        }
    };
    Ok(DistortionStats {
        pairs: ratios.len(),
        max_expansion: expand,
        max_contraction: contract,
        ratio_quantiles: [q(0.5), q(0.9), q(0.99)],
        factor: expand.max(contract).max(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughIsometryAudit {
    pub phi: DistortionStats,
    pub psi: DistortionStats,
    pub factor: f64,
}

/// Audits `phi: G1 -> G2` on `pairs1` and `psi: G2 -> G1` on `pairs2`.
pub fn rough_isometry_audit(
    g1: &MultiGraph,
    g2: &MultiGraph,
    maps: &VertexMapPair,
    pairs1: &[(usize, usize)],
    pairs2: &[(usize, usize)],
) -> Result<RoughIsometryAudit> {
    let phi = distortion(g1, g2, &maps.phi, pairs1)?;
    let psi = distortion(g2, g1, &maps.psi, pairs2)?;
    let factor = phi.factor.max(psi.factor);
    Ok(RoughIsometryAudit { phi, psi, factor })
}

/// A graph with a midpoint inserted on every edge. Original vertices keep
/// their ids; the midpoint of edge `e` is vertex `n + e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subdivision {
    pub graph: MultiGraph,
    pub original: usize,
}

impl Subdivision {
    pub fn midpoint(&self, e: usize) -> usize {
        self.original + e
    }

    /// `phi` (identity on originals) and `psi` (midpoints to their lower
    /// endpoint).
    pub fn maps(&self, g: &MultiGraph) -> VertexMapPair {
        let phi = (0..self.original).collect();
        let psi = (0..self.original)
            .chain(g.edges().iter().map(|&(a, b)| a.min(b) as usize))
            .collect();
        VertexMapPair { phi, psi }
    }

    /// Length-2 paths through each midpoint.
    pub fn paths(&self, g: &MultiGraph) -> PathSystem {
        let paths = g
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(a, b))| (a as usize, b as usize, vec![a as usize, self.midpoint(e), b as usize]))
            .collect();
        PathSystem { paths }
    }
}

/// Replaces every edge by two edges through a fresh midpoint; a self-loop
/// becomes a double edge to its midpoint.
pub fn subdivide(g: &MultiGraph) -> Subdivision {
    let n = g.vertex_count();
    let mut edges = Vec::with_capacity(2 * g.edge_count());
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        let m = (n + e) as u32;
        edges.push((a, m));
        edges.push((b, m));
    }
    let graph = MultiGraph::from_edges(n + g.edge_count(), edges).expect("subdivision stays in range");
    Subdivision { graph, original: n }
}

/// Root law proportional to `1 + deg / 2`.
pub fn reweight_root(g: &MultiGraph) -> Result<Vec<Rational64>> {
    let total = 2 * (g.vertex_count() + g.edge_count()) as i64;
    if total == 0 {
        return domain("empty graph");
    }
    Ok((0..g.vertex_count()).map(|v| Rational64::new(2 + g.degree(v) as i64, total)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootCoupling {
    /// `P[v_hat = a, v' = b]` as `(a, b, p)`, with `v_hat` uniform on the
    /// subdivided vertices and a midpoint sent to a uniform endpoint.
    pub joint: Vec<(usize, usize, Rational64)>,
    /// Law of `v'`.
    pub marginal: Vec<Rational64>,
    /// `P[v_hat = v' | v']`.
    pub stay: Vec<Rational64>,
}

pub fn midpoint_root_coupling(g: &MultiGraph) -> Result<RootCoupling> {
    let n = g.vertex_count();
    let total = (n + g.edge_count()) as i64;
    if total == 0 {
        return domain("empty graph");
    }
    let unit = Rational64::new(1, total);
    let half = unit / 2;
    let mut joint = Vec::new();
    let mut marginal = vec![Rational64::from_integer(0); n];
    for v in 0..n {
        joint.push((v, v, unit));
        marginal[v] += unit;
    }
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        for end in [a as usize, b as usize] {
            joint.push((n + e, end, half));
            marginal[end] += half;
        }
    }
    let stay = marginal.iter().map(|&m| unit / m).collect();
    Ok(RootCoupling { joint, marginal, stay })
}

/// Exact law of the lazy walk (stay with probability 1/2, otherwise one
/// simple-walk step) after `steps` steps.
pub fn lazy_distribution(g: &MultiGraph, root: usize, steps: usize) -> Result<Vec<f64>> {
    g.check_vertex(root)?;
    let n = g.vertex_count();
    let mut cur = vec![0.0; n];
    cur[root] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for v in 0..n {
            if cur[v] == 0.0 {
                continue;
            }
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                next[v] += cur[v];
                continue;
            }
            next[v] += 0.5 * cur[v];
            let share = 0.5 * cur[v] / nbrs.len() as f64;
            for &w in nbrs {
                next[w as usize] += share;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Total-variation distance between the subdivided walk at time `2 m` and
/// the lazy walk at time `m`, both started at `root`.
pub fn lazy_equivalence_check(g: &MultiGraph, root: usize, m: usize) -> Result<f64> {
    let sub = subdivide(g);
    let fine = exact_distribution(&sub.graph, root, 2 * m)?;
    let lazy = lazy_distribution(g, root, m)?;
    let on_originals: f64 = (0..g.vertex_count()).map(|v| (fine[v] - lazy[v]).abs()).sum();
    let on_midpoints: f64 = fine[g.vertex_count()..].iter().sum();
    Ok(0.5 * (on_originals + on_midpoints))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingReport {
    pub lazy_steps: usize,
    pub epsilon: f64,
    pub trials: usize,
    /// Trials whose count of moving steps left `[(1/2 - eps) m, (1/2 + eps) m]`.
    pub failures: usize,
    /// `2 exp(-2 eps^2 m)`.
    pub bound: f64,
    pub empirical_rate: f64,
    /// Failure count within the bound plus a 99% binomial allowance.
    pub consistent: bool,
}

/// Simulates the subdivided walk for `2 m` steps per trial and counts lazy
/// steps that move, i.e. leave a midpoint through the other edge instance.
pub fn hoeffding_check(g: &MultiGraph, root: usize, m: usize, epsilon: f64, trials: usize, seed: u64) -> Result<HoeffdingReport> {
    g.check_vertex(root)?;
    if m == 0 || trials == 0 || !(epsilon > 0.0) {
        return domain("need m > 0, trials > 0 and epsilon > 0");
    }
    if g.degree(root) == 0 {
        return domain("root is isolated");
    }
    let sub = subdivide(g);
    let sg = &sub.graph;
    let mut failures = 0;
    for t in 0..trials {
        let mut rng = stream_rng(seed, streams::SHARD_BASE + t as u64);
        let mut v = root;
        let mut moved = 0usize;
        for _ in 0..m {
            let hs = sg.half_edges(v);
            let h_in = hs.start + rng.random_range(0..hs.len());
            let mid = sg.half_edge_target(h_in);
            let arrived = sg.half_edge_edge(h_in);
            let ms = sg.half_edges(mid);
            let h_out = ms.start + rng.random_range(0..ms.len());
            if sg.half_edge_edge(h_out) != arrived {
                moved += 1;
            }
            v = sg.half_edge_target(h_out);
        }
        let lo = (0.5 - epsilon) * m as f64;
        let hi = (0.5 + epsilon) * m as f64;
        if (moved as f64) < lo || (moved as f64) > hi {
            failures += 1;
        }
    }
    let bound = (2.0 * (-2.0 * epsilon * epsilon * m as f64).exp()).min(1.0);
    let tf = trials as f64;
    let allowance = tf * bound + crate::walker::Z99 * (tf * bound * (1.0 - bound)).sqrt();
    Ok(HoeffdingReport {
        lazy_steps: m,
        epsilon,
        trials,
        failures,
        bound,
        empirical_rate: failures as f64 / tf,
        consistent: failures as f64 <= allowance,
    })
}
