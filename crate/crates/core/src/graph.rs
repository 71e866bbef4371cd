//! Immutable multigraphs, breadth-first metric balls and induced subgraphs.

use std::collections::VecDeque;
use std::ops::Range;

use crate::error::{domain, Error, Result};

/// Undirected multigraph in compressed adjacency form.
///
/// Every edge instance `e = (a, b)` owns two half-edges, one in the list of
/// `a` and one in the list of `b`; a self-loop owns two half-edges in the same
/// list and therefore contributes 2 to the degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    half_edge_ids: Vec<u32>,
    edges: Vec<(u32, u32)>,
}

impl MultiGraph {
    /// Builds the graph; parallel edges are given by repetition.
    pub fn from_edges(n: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        if n > u32::MAX as usize || edges.len() > u32::MAX as usize / 2 {
            return domain("graph too large for 32-bit vertex/edge ids");
        }
        let mut offsets = vec![0usize; n + 1];
        for &(a, b) in &edges {
            if a as usize >= n || b as usize >= n {
                return domain(format!("edge ({a}, {b}) out of range for {n} vertices"));
            }
            offsets[a as usize + 1] += 1;
            offsets[b as usize + 1] += 1;
        }
        for v in 0..n {
            offsets[v + 1] += offsets[v];
        }
        let total = offsets[n];
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; total];
        let mut half_edge_ids = vec![0u32; total];
        for (e, &(a, b)) in edges.iter().enumerate() {
            let ha = fill[a as usize];
            fill[a as usize] += 1;
            targets[ha] = b;
            half_edge_ids[ha] = e as u32;
            let hb = fill[b as usize];
            fill[b as usize] += 1;
            targets[hb] = a;
            half_edge_ids[hb] = e as u32;
        }
        Ok(Self { offsets, targets, half_edge_ids, edges })
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of edge instances, counting multiplicity and self-loops.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of incident edge-ends; a self-loop counts twice.
    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbour list of `v`, one entry per edge-end.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn half_edges(&self, v: usize) -> Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    #[inline]
    pub fn half_edge_target(&self, h: usize) -> usize {
        self.targets[h] as usize
    }

    #[inline]
    pub fn half_edge_edge(&self, h: usize) -> usize {
        self.half_edge_ids[h] as usize
    }

    pub fn half_edge_count(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let (a, b) = self.edges[e];
        (a as usize, b as usize)
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.vertex_count() {
            return domain(format!("vertex {v} out of range ({} vertices)", self.vertex_count()));
        }
        Ok(())
    }

    /// Copy with edge instance `e` removed.
    pub fn without_edge(&self, e: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.remove(e);
        Self::from_edges(self.vertex_count(), edges).expect("subset of a valid edge list")
    }

    /// Component label per vertex, labels assigned in order of first vertex.
    pub fn components(&self) -> Vec<u32> {
        let n = self.vertex_count();
        let mut label = vec![u32::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != u32::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in self.neighbors(v) {
                    if label[w as usize] == u32::MAX {
                        label[w as usize] = next;
                        stack.push(w as usize);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Parses the plain-text edge-list format: one `u v multiplicity` triple per
    /// line, `#` starts a comment, self-loops are written `u u m`.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("line {}: expected `u v multiplicity`, got {raw:?}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let u: u32 = fields[0].parse().map_err(|_| bad())?;
            let v: u32 = fields[1].parse().map_err(|_| bad())?;
            let m: u32 = fields[2].parse().map_err(|_| bad())?;
            n = n.max(u as usize + 1).max(v as usize + 1);
            edges.extend(std::iter::repeat_n((u, v), m as usize));
        }
        Self::from_edges(n, edges)
    }

    /// Inverse of [`MultiGraph::parse_edge_list`]; parallel edges are merged
    /// into one line with their multiplicity.
    pub fn to_edge_list(&self) -> String {
        let mut pairs: Vec<(u32, u32)> = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        let mut out = format!("# {} vertices\n", self.vertex_count());
        let mut i = 0;
        while i < pairs.len() {
            let mut j = i;
            while j < pairs.len() && pairs[j] == pairs[i] {
                j += 1;
            }
            out.push_str(&format!("{} {} {}\n", pairs[i].0, pairs[i].1, j - i));
            i = j;
        }
        out
    }
}

/// Reusable breadth-first search buffers.
///
/// Only the entries touched by a search are reset, so one scratch can serve
/// many small searches on a large graph.
#[derive(Debug, Clone)]
pub struct BfsScratch {
    dist: Vec<u32>,
    touched: Vec<u32>,
    queue: VecDeque<u32>,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        Self { dist: vec![u32::MAX; n], touched: Vec::new(), queue: VecDeque::new() }
    }

    fn reset(&mut self, n: usize) {
        if self.dist.len() != n {
            self.dist = vec![u32::MAX; n];
            self.touched.clear();
        }
        for &v in &self.touched {
            self.dist[v as usize] = u32::MAX;
        }
        self.touched.clear();
        self.queue.clear();
    }

    /// Distance of `v` from the last search root, if reached.
    pub fn distance(&self, v: usize) -> Option<u32> {
        match self.dist[v] {
            u32::MAX => None,
            d => Some(d),
        }
    }

    /// Vertices reached by the last search, in breadth-first order.
    pub fn reached(&self) -> &[u32] {
        &self.touched
    }

    /// Breadth-first search from `root` that stops expanding at `max_dist`.
    pub fn run(&mut self, g: &MultiGraph, root: usize, max_dist: u32) {
        self.reset(g.vertex_count());
        self.dist[root] = 0;
        self.touched.push(root as u32);
        self.queue.push_back(root as u32);
        while let Some(v) = self.queue.pop_front() {
            let d = self.dist[v as usize];
            if d >= max_dist {
                continue;
            }
            for &w in g.neighbors(v as usize) {
                if self.dist[w as usize] == u32::MAX {
                    self.dist[w as usize] = d + 1;
                    self.touched.push(w);
                    self.queue.push_back(w);
                }
            }
        }
    }
}

/// Full hop-distance field from `root`; unreachable vertices get `u32::MAX`.
pub fn bfs_distances(g: &MultiGraph, root: usize) -> Vec<u32> {
    let mut scratch = BfsScratch::new(g.vertex_count());
    scratch.run(g, root, u32::MAX - 1);
    scratch.dist
}

/// Metric ball `B_r(root)` with its inner boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ball {
    pub root: usize,
    pub radius: u32,
    /// Members in breadth-first order.
    pub members: Vec<u32>,
    /// Hop distance of each entry of `members`.
    pub member_dist: Vec<u32>,
    /// Members adjacent to at least one non-member.
    pub boundary: Vec<u32>,
    /// Vertices at distance `radius + 1` (where an exiting walk lands).
    pub outside: Vec<u32>,
    /// Set when a flagged vertex lies within distance `radius`.
    pub contaminated: bool,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member count at each distance `0..=radius`, cumulative.
    pub fn cumulative_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.radius as usize + 1];
        for &d in &self.member_dist {
            counts[d as usize] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        counts
    }

    pub fn degree_sum(&self, g: &MultiGraph) -> usize {
        self.members.iter().map(|&v| g.degree(v as usize)).sum()
    }
}

pub fn bfs_ball(g: &MultiGraph, root: usize, r: u32) -> Result<Ball> {
    let mut scratch = BfsScratch::new(g.vertex_count());
    bfs_ball_with(g, root, r, None, &mut scratch)
}

/// Ball computation with a caller-owned scratch and an optional mask of
/// flagged (window-contaminated) vertices.
pub fn bfs_ball_with(
    g: &MultiGraph,
    root: usize,
    r: u32,
    flagged: Option<&[bool]>,
    scratch: &mut BfsScratch,
) -> Result<Ball> {
    g.check_vertex(root)?;
    scratch.run(g, root, r.saturating_add(1));
    let mut members = Vec::new();
    let mut member_dist = Vec::new();
    let mut outside = Vec::new();
    for &v in scratch.reached() {
        let d = scratch.dist[v as usize];
        if d <= r {
            members.push(v);
            member_dist.push(d);
        } else {
            outside.push(v);
        }
    }
    let boundary = members
        .iter()
        .zip(&member_dist)
        .filter(|&(_, &d)| d == r)
        .map(|(&v, _)| v)
        .filter(|&v| g.neighbors(v as usize).iter().any(|&w| scratch.dist[w as usize] > r))
        .collect();
    let contaminated = flagged.is_some_and(|mask| members.iter().any(|&v| mask[v as usize]));
    Ok(Ball { root, radius: r, members, member_dist, boundary, outside, contaminated })
}

/// Induced subgraph on `members` (with multiplicities) and the map from new to
/// old vertex ids.
pub fn induced_subgraph(g: &MultiGraph, members: &[u32]) -> (MultiGraph, Vec<u32>) {
    let mut new_id = vec![u32::MAX; g.vertex_count()];
    for (i, &v) in members.iter().enumerate() {
        new_id[v as usize] = i as u32;
    }
    let mut edges = Vec::new();
    for &v in members {
        for h in g.half_edges(v as usize) {
            let w = g.half_edge_target(h);
            let e = g.half_edge_edge(h);
            // keep each edge once: from its first endpoint in the stored orientation
            let (a, _) = g.edge(e);
            if a == v as usize && new_id[w] != u32::MAX {
                if w == v as usize {
                    // self-loop: both half-edges live here, take the first
                    if g.half_edges(v as usize).find(|&k| g.half_edge_edge(k) == e) != Some(h) {
                        continue;
                    }
                }
                edges.push((new_id[v as usize], new_id[w]));
            }
        }
    }
    let sub = MultiGraph::from_edges(members.len(), edges).expect("ids in range");
    (sub, members.to_vec())
}

pub fn degree(g: &MultiGraph, v: usize) -> usize {
    g.degree(v)
}

/// Small deterministic and random graph families for tests and controls.
pub mod generators {
    use rand::Rng;

    use super::MultiGraph;

    pub fn path(n: usize) -> MultiGraph {
        let edges = (1..n as u32).map(|i| (i - 1, i)).collect();
        MultiGraph::from_edges(n, edges).unwrap()
    }

    pub fn cycle(n: usize) -> MultiGraph {
        let edges = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
        MultiGraph::from_edges(n, edges).unwrap()
    }

    pub fn complete(n: usize) -> MultiGraph {
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                edges.push((a, b));
            }
        }
        MultiGraph::from_edges(n, edges).unwrap()
    }

    /// `w x h` square grid; vertex `(i, j)` has id `j * w + i`.
    pub fn grid(w: usize, h: usize) -> MultiGraph {
        let mut edges = Vec::new();
        for j in 0..h {
            for i in 0..w {
                let v = (j * w + i) as u32;
                if i + 1 < w {
                    edges.push((v, v + 1));
                }
                if j + 1 < h {
                    edges.push((v, v + w as u32));
                }
            }
        }
        MultiGraph::from_edges(w * h, edges).unwrap()
    }

    /// Connected random multigraph: a random spanning tree plus `extra` random
    /// edges, which may be parallel edges or (if `loops`) self-loops.
    pub fn random_connected<R: Rng>(rng: &mut R, n: usize, extra: usize, loops: bool) -> MultiGraph {
        let mut edges = Vec::with_capacity(n + extra);
        for v in 1..n as u32 {
            edges.push((rng.random_range(0..v), v));
        }
        while edges.len() < n.saturating_sub(1) + extra {
            let a = rng.random_range(0..n as u32);
            let b = rng.random_range(0..n as u32);
            if a != b || loops {
                edges.push((a, b));
            }
        }
        MultiGraph::from_edges(n, edges).unwrap()
    }
}
