//! Mated-CRT multigraph construction and its planar structure.
//!
//! Vertex `x` is the unit cell `[x-1, x]` of the driving walk. Two cells
//! `x1 < x2` with `x2 - x1 > 1` are joined by an L-chord when
//! `max(m_L(x1), m_L(x2)) <= min L over [x1, x2-1]`, where `m_L(x)` is the
//! minimum of `L` over the cell, and likewise for R. Consecutive cells are
//! joined by exactly one edge.
//!
//! Neighbouring cells share an endpoint sample, so a cell minimum sitting on
//! that shared sample would otherwise tie with the minimum of the middle
//! interval and produce crossing chords. A minimum attained only at a cell's
//! left endpoint is treated as lying infinitesimally above that sample, which
//! is the limit of splitting the shared point between the two cells.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::graph::MultiGraph;
use crate::walk::{read_array, read_exact, CorrelatedWalk, WalkSamples};

pub const GRAPH_MAGIC: &[u8; 8] = b"MCRTGRAF";
pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ORACLE_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum EdgeLabel {
    Consecutive = 0,
    LChord = 1,
    RChord = 2,
}

impl EdgeLabel {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Consecutive),
            1 => Ok(Self::LChord),
            2 => Ok(Self::RChord),
            _ => Err(Error::Format(format!("unknown edge label {b}"))),
        }
    }
}

/// Per-cell minima of both coordinates. Entry `i` is cell `x = first + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMinima {
    pub first: i64,
    pub m_l: Vec<f64>,
    pub m_r: Vec<f64>,
    /// Minimum attained only at the cell's left endpoint.
    pub left_l: Vec<bool>,
    pub left_r: Vec<bool>,
}

pub fn cell_minima(samples: &WalkSamples) -> CellMinima {
    let k = samples.mesh_k as usize;
    let cells = samples.cell_count();
    let minima = |xs: &[f64]| -> (Vec<f64>, Vec<bool>) {
        (0..cells)
            .map(|i| {
                let rest = xs[i * k + 1..=(i + 1) * k].iter().copied().fold(f64::INFINITY, f64::min);
                let left = xs[i * k];
                (left.min(rest), left < rest)
            })
            .unzip()
    };
    let (m_l, left_l) = minima(&samples.l);
    let (m_r, left_r) = minima(&samples.r);
    CellMinima { first: samples.start + 1, m_l, m_r, left_l, left_r }
}

// Whether a cell minimum lies above the walk value `v`.
#[inline]
fn above(m: f64, left: bool, v: f64) -> bool {
    m > v || (left && m == v)
}

/// Provenance of a built graph, carried through the graph file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub window_n: u64,
    pub mesh_k: u32,
    pub gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatedCrtGraph {
    pub meta: GraphMeta,
    /// Vertex id of internal index 0.
    pub first_id: i64,
    pub graph: MultiGraph,
    /// Label of each edge instance, indexed like `graph.edges()`.
    pub labels: Vec<EdgeLabel>,
}

impl MatedCrtGraph {
    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn id_of(&self, index: usize) -> i64 {
        self.first_id + index as i64
    }

    pub fn index_of(&self, id: i64) -> Option<usize> {
        let i = id - self.first_id;
        (i >= 0 && (i as usize) < self.vertex_count()).then_some(i as usize)
    }

    /// Internal index of vertex 0, the root.
    pub fn root(&self) -> Result<usize> {
        self.index_of(0)
            .ok_or_else(|| Error::Domain("vertex 0 is outside the window".into()))
    }

    /// Labeled edges `(x1, x2, label)` with `x1 < x2`, sorted.
    pub fn labeled_edges(&self) -> Vec<(i64, i64, EdgeLabel)> {
        let mut out: Vec<_> = self
            .graph
            .edges()
            .iter()
            .zip(&self.labels)
            .map(|(&(a, b), &lab)| (self.id_of(a as usize), self.id_of(b as usize), lab))
            .collect();
        out.sort_unstable();
        out
    }

    /// Vertices whose neighbourhood may be truncated by the finite window.
    ///
    /// A vertex can only have a neighbour outside the window if it is not
    /// strictly enclosed by any chord on at least one side, i.e. if it lies on
    /// the outer face of the planar drawing. Those vertices are flagged.
    pub fn exposed(&self) -> Vec<bool> {
        let n = self.vertex_count();
        let mut cover_l = vec![0i64; n + 1];
        let mut cover_r = vec![0i64; n + 1];
        for (&(a, b), &lab) in self.graph.edges().iter().zip(&self.labels) {
            let (a, b) = (a.min(b) as usize, a.max(b) as usize);
            if b - a < 2 {
                continue;
            }
            let cover = match lab {
                EdgeLabel::LChord => &mut cover_l,
                EdgeLabel::RChord => &mut cover_r,
                EdgeLabel::Consecutive => continue,
            };
            cover[a + 1] += 1;
            cover[b] -= 1;
        }
        let (mut cl, mut cr) = (0i64, 0i64);
        (0..n)
            .map(|v| {
                cl += cover_l[v];
                cr += cover_r[v];
                cl == 0 || cr == 0
            })
            .collect()
    }

    /// Mean degree over vertices farther than `margin` (in time) from both window ends.
    pub fn bulk_mean_degree(&self, margin: usize) -> Option<f64> {
        let n = self.vertex_count();
        if 2 * margin + 1 > n {
            return None;
        }
        let range = margin..n - margin;
        let count = range.len();
        let total: usize = range.map(|v| self.graph.degree(v)).sum();
        Some(total as f64 / count as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes the graph file. Vertex ids are implied by the window: the first
    /// vertex is `1 - window_n`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.first_id != 1 - self.meta.window_n as i64 {
            return domain("graph file requires a symmetric window (first vertex 1 - window_n)");
        }
        let adj = self.canonical_adjacency();
        let n = self.vertex_count();
        w.write_all(GRAPH_MAGIC)?;
        w.write_all(&GRAPH_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.meta.window_n.to_le_bytes())?;
        w.write_all(&self.meta.mesh_k.to_le_bytes())?;
        w.write_all(&self.meta.gamma.to_le_bytes())?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        let mut off = 0u64;
        w.write_all(&off.to_le_bytes())?;
        for list in &adj {
            off += list.len() as u64;
            w.write_all(&off.to_le_bytes())?;
        }
        for list in &adj {
            for &(id, lab) in list {
                w.write_all(&id.to_le_bytes())?;
                w.write_all(&[lab as u8])?;
            }
        }
        Ok(())
    }

    // Per-vertex (neighbour id, label) lists sorted by (id, label).
    fn canonical_adjacency(&self) -> Vec<Vec<(i64, EdgeLabel)>> {
        let g = &self.graph;
        (0..g.vertex_count())
            .map(|v| {
                let mut list: Vec<_> = g
                    .half_edges(v)
                    .map(|h| (self.id_of(g.half_edge_target(h)), self.labels[g.half_edge_edge(h)]))
                    .collect();
                list.sort_unstable();
                list
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != GRAPH_MAGIC {
            return Err(Error::Format("bad graph magic".into()));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != GRAPH_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported graph version {version}")));
        }
        let meta = GraphMeta {
            window_n: u64::from_le_bytes(read_array(r)?),
            mesh_k: u32::from_le_bytes(read_array(r)?),
            gamma: f64::from_le_bytes(read_array(r)?),
            seed: u64::from_le_bytes(read_array(r)?),
        };
        let n = u64::from_le_bytes(read_array(r)?) as usize;
        let first_id = 1 - meta.window_n as i64;
        if n > u32::MAX as usize {
            return Err(Error::Format("vertex count too large".into()));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(u64::from_le_bytes(read_array(r)?) as usize);
        }
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("offsets not monotone".into()));
        }
        let total = offsets[n];
        let mut edges = Vec::with_capacity(total / 2);
        let mut labels = Vec::with_capacity(total / 2);
        let mut lists: Vec<Vec<(i64, EdgeLabel)>> = Vec::with_capacity(n);
        for v in 0..n {
            let mut list = Vec::with_capacity(offsets[v + 1] - offsets[v]);
            for _ in offsets[v]..offsets[v + 1] {
                let id = i64::from_le_bytes(read_array(r)?);
                let lab = EdgeLabel::from_u8(read_array::<_, 1>(r)?[0])?;
                let w = id - first_id;
                if w < 0 || w as usize >= n || w as usize == v {
                    return Err(Error::Format(format!("neighbour id {id} invalid")));
                }
                if w as usize > v {
                    edges.push((v as u32, w as u32));
                    labels.push(lab);
                }
                list.push((id, lab));
            }
            lists.push(list);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after adjacency".into()));
        }
        let graph = MultiGraph::from_edges(n, edges)?;
        let out = Self { meta, first_id, graph, labels };
        if out.canonical_adjacency() != lists {
            return Err(Error::Format("adjacency is not symmetric or not canonical".into()));
        }
        Ok(out)
    }
}

fn assemble(
    samples: &WalkSamples,
    meta: GraphMeta,
    mut raw: Vec<(u32, u32, EdgeLabel)>,
) -> Result<MatedCrtGraph> {
    let n = samples.cell_count();
    raw.extend((1..n as u32).map(|i| (i - 1, i, EdgeLabel::Consecutive)));
    raw.sort_unstable();
    let labels = raw.iter().map(|e| e.2).collect();
    let edges = raw.into_iter().map(|(a, b, _)| (a, b)).collect();
    Ok(MatedCrtGraph {
        meta,
        first_id: samples.start + 1,
        graph: MultiGraph::from_edges(n, edges)?,
        labels,
    })
}

pub fn meta_of(walk: &CorrelatedWalk) -> GraphMeta {
    GraphMeta {
        window_n: walk.params.window_n,
        mesh_k: walk.params.mesh_k,
        gamma: walk.params.gamma,
        seed: walk.params.seed,
    }
}

/// Linear-time construction by a monotone-stack sweep per coordinate.
pub fn build_adjacency(walk: &CorrelatedWalk) -> Result<MatedCrtGraph> {
    build_adjacency_samples(&walk.samples, meta_of(walk))
}

pub fn build_adjacency_samples(samples: &WalkSamples, meta: GraphMeta) -> Result<MatedCrtGraph> {
    if samples.cell_count() < 3 {
        return domain(format!("window too small: {} cells", samples.cell_count()));
    }
    let minima = cell_minima(samples);
    let k = samples.mesh_k as usize;
    let (mut chords_l, mut chords_r) = rayon::join(
        || sweep_chords(&samples.l, &minima.m_l, &minima.left_l, k, EdgeLabel::LChord),
        || sweep_chords(&samples.r, &minima.m_r, &minima.left_r, k, EdgeLabel::RChord),
    );
    chords_l.append(&mut chords_r);
    assemble(samples, meta, chords_l)
}

/// One coordinate's chords.
///
/// Invariant at step `i2`: the stack holds exactly the cells `i1 < i2` whose
/// minimum does not exceed the walk over `[x1, x2-1]`; their minima increase
/// towards the top. `seg` of an entry is the walk minimum from that cell to the
/// next entry up (the top's runs to `x2-1`), so folding segments from the top
/// down yields `min over [x1, x2-1]` for every entry.
fn sweep_chords(xs: &[f64], m: &[f64], left: &[bool], k: usize, label: EdgeLabel) -> Vec<(u32, u32, EdgeLabel)> {
    struct Entry {
        cell: u32,
        seg: f64,
    }
    let cells = m.len();
    let mut stack: Vec<Entry> = Vec::new();
    let mut out = Vec::new();
    for i2 in 0..cells {
        let mut run = f64::INFINITY;
        for e in stack.iter().rev() {
            run = run.min(e.seg);
            if above(m[i2], left[i2], run) {
                break;
            }
            if i2 - e.cell as usize > 1 {
                out.push((e.cell, i2 as u32, label));
            }
        }
        // extend every middle interval by the samples in (x2-1, x2]
        let mu = xs[i2 * k + 1..=(i2 + 1) * k].iter().copied().fold(f64::INFINITY, f64::min);
        let mut carry = mu;
        while let Some(top) = stack.last() {
            let c = top.cell as usize;
            if !above(m[c], left[c], mu) {
                break;
            }
            carry = carry.min(top.seg);
            stack.pop();
        }
        if let Some(top) = stack.last_mut() {
            top.seg = top.seg.min(carry);
        }
        stack.push(Entry { cell: i2 as u32, seg: xs[(i2 + 1) * k] });
    }
    out
}

/// Quadratic reference construction evaluating the inequality for every pair.
pub fn build_adjacency_bruteforce(walk: &CorrelatedWalk) -> Result<MatedCrtGraph> {
    build_adjacency_bruteforce_samples(&walk.samples, meta_of(walk), DEFAULT_ORACLE_CAP)
}

/// `cap` bounds the window half-width, i.e. at most `2 * cap` cells.
pub fn build_adjacency_bruteforce_samples(
    samples: &WalkSamples,
    meta: GraphMeta,
    cap: usize,
) -> Result<MatedCrtGraph> {
    let n = samples.cell_count();
    if n > 2 * cap {
        return Err(Error::OracleCap { vertices: n, cap: 2 * cap });
    }
    let minima = cell_minima(samples);
    let k = samples.mesh_k as usize;
    let mut raw = Vec::new();
    for (xs, m, left, label) in [
        (&samples.l, &minima.m_l, &minima.left_l, EdgeLabel::LChord),
        (&samples.r, &minima.m_r, &minima.left_r, EdgeLabel::RChord),
    ] {
        for i1 in 0..n {
            // running min over samples of times [x1, x2-1]
            let mut mid = xs[(i1 + 1) * k];
            for i2 in i1 + 1..n {
                if i2 > i1 + 1 {
                    for s in (i2 - 1) * k + 1..=i2 * k {
                        mid = mid.min(xs[s]);
                    }
                    if !above(m[i1], left[i1], mid) && !above(m[i2], left[i2], mid) {
                        raw.push((i1 as u32, i2 as u32, label));
                    }
                }
            }
        }
    }
    assemble(samples, meta, raw)
}

/// Cyclic (counter-clockwise) order of half-edges around every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationSystem {
    /// Half-edge ids, grouped per vertex with the graph's offsets.
    order: Vec<u32>,
    /// Position of each half-edge inside `order`.
    rank: Vec<u32>,
    twin: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceCensus {
    pub faces: usize,
    /// Degree of each face (number of edge sides on its boundary).
    pub degrees: Vec<usize>,
    pub outer_face: usize,
    /// Faces other than the outer face whose degree is not 3.
    pub inner_non_triangles: usize,
    pub inner_faces: usize,
    /// `V - E + F`.
    pub euler_characteristic: i64,
}

impl RotationSystem {
    /// Rotation order of vertex `v` as half-edge ids.
    pub fn around<'a>(&'a self, g: &MultiGraph, v: usize) -> &'a [u32] {
        &self.order[g.half_edges(v)]
    }

    // Counter-clockwise successor of half-edge h around its own vertex.
    fn succ(&self, g: &MultiGraph, v: usize, h: usize) -> usize {
        let range = g.half_edges(v);
        let pos = self.rank[h] as usize;
        let next = if pos + 1 == range.end { range.start } else { pos + 1 };
        self.order[next] as usize
    }

    /// Traces every face. A face is followed by the rule
    /// `next(h) = succ(twin(h))`, which consumes every half-edge exactly once.
    pub fn faces(&self, g: &MultiGraph) -> Vec<Vec<usize>> {
        let mut owner = vec![u32::MAX; g.half_edge_count()];
        let mut faces = Vec::new();
        for start in 0..g.half_edge_count() {
            if owner[start] != u32::MAX {
                continue;
            }
            let id = faces.len() as u32;
            let mut face = Vec::new();
            let mut h = start;
            while owner[h] == u32::MAX {
                owner[h] = id;
                face.push(h);
                let t = self.twin[h] as usize;
                h = self.succ(g, g.half_edge_target(h), t);
            }
            faces.push(face);
        }
        faces
    }

    fn source_of(g: &MultiGraph, h: usize) -> usize {
        // offsets are monotone; binary search the owning vertex
        let n = g.vertex_count();
        let (mut lo, mut hi) = (0usize, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if g.half_edges(mid).start <= h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Total order key of half-edge `h` at vertex `v` (counter-clockwise from east).
fn rotation_key(v: usize, w: usize, label: EdgeLabel) -> (u8, i64) {
    let (v, w) = (v as i64, w as i64);
    match label {
        EdgeLabel::Consecutive if w > v => (0, 0),
        EdgeLabel::RChord if w > v => (1, w),
        EdgeLabel::RChord => (2, w),
        EdgeLabel::Consecutive => (3, 0),
        EdgeLabel::LChord if w < v => (4, -w),
        EdgeLabel::LChord => (5, -w),
    }
}

fn check_laminar(chords: &mut [(u32, u32)], side: &str) -> Result<()> {
    chords.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut open: Vec<(u32, u32)> = Vec::new();
    for &(a, b) in chords.iter() {
        while open.last().is_some_and(|top| top.1 <= a) {
            open.pop();
        }
        if let Some(top) = open.last() {
            if b > top.1 {
                return Err(Error::Consistency(format!(
                    "{side} chords ({}, {}) and ({a}, {b}) cross",
                    top.0, top.1
                )));
            }
        }
        open.push((a, b));
    }
    Ok(())
}

/// Planar rotation system: R-chords above the vertex line, L-chords below.
///
/// Around `x`, counter-clockwise from east: the edge to `x+1`, R-chords to the
/// right (inner first), R-chords to the left (outer first), the edge to `x-1`,
/// L-chords to the left (inner first), L-chords to the right (outer first).
pub fn planar_order(m: &MatedCrtGraph) -> Result<RotationSystem> {
    let g = &m.graph;
    let mut l = Vec::new();
    let mut r = Vec::new();
    for (&(a, b), &lab) in g.edges().iter().zip(&m.labels) {
        match lab {
            EdgeLabel::LChord => l.push((a.min(b), a.max(b))),
            EdgeLabel::RChord => r.push((a.min(b), a.max(b))),
            EdgeLabel::Consecutive => {
                if a.abs_diff(b) != 1 {
                    return Err(Error::Consistency(format!("consecutive edge ({a}, {b}) spans a gap")));
                }
            }
        }
    }
    check_laminar(&mut l, "L")?;
    check_laminar(&mut r, "R")?;

    let mut order: Vec<u32> = (0..g.half_edge_count() as u32).collect();
    for v in 0..g.vertex_count() {
        let range = g.half_edges(v);
        order[range].sort_by_key(|&h| {
            let h = h as usize;
            rotation_key(v, g.half_edge_target(h), m.labels[g.half_edge_edge(h)])
        });
    }
    let mut rank = vec![0u32; order.len()];
    for (pos, &h) in order.iter().enumerate() {
        rank[h as usize] = pos as u32;
    }
    let mut first_end = vec![u32::MAX; g.edge_count()];
    let mut twin = vec![0u32; g.half_edge_count()];
    for h in 0..g.half_edge_count() {
        let e = g.half_edge_edge(h);
        if first_end[e] == u32::MAX {
            first_end[e] = h as u32;
        } else {
            let o = first_end[e] as usize;
            twin[h] = o as u32;
            twin[o] = h as u32;
        }
    }
    Ok(RotationSystem { order, rank, twin })
}

/// Face census of the planar drawing.
///
/// The outer face is the one passing through the western corner of the
/// leftmost vertex (between its last upper and first lower half-edge).
pub fn face_census(m: &MatedCrtGraph, rot: &RotationSystem) -> FaceCensus {
    let g = &m.graph;
    let faces = rot.faces(g);
    let mut face_of = vec![0usize; g.half_edge_count()];
    for (i, f) in faces.iter().enumerate() {
        for &h in f {
            face_of[h] = i;
        }
    }
    let around = rot.around(g, 0);
    let upper = around
        .iter()
        .take_while(|&&h| m.labels[g.half_edge_edge(h as usize)] != EdgeLabel::LChord)
        .count();
    // corner (around[upper-1], around[upper]) is traversed by the dart leaving along around[upper]
    let outgoing = around[upper % around.len()] as usize;
    debug_assert_eq!(RotationSystem::source_of(g, outgoing), 0);
    let outer_face = face_of[outgoing];
    let degrees: Vec<usize> = faces.iter().map(|f| f.len()).collect();
    let inner_non_triangles = degrees
        .iter()
        .enumerate()
        .filter(|&(i, &d)| i != outer_face && d != 3)
        .count();
    FaceCensus {
        faces: faces.len(),
        inner_faces: faces.len() - 1,
        inner_non_triangles,
        outer_face,
        euler_characteristic: g.vertex_count() as i64 - g.edge_count() as i64 + faces.len() as i64,
        degrees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{generate_walk, WalkParams};

    fn meta() -> GraphMeta {
        GraphMeta { window_n: 0, mesh_k: 1, gamma: 1.0, seed: 0 }
    }

    fn samples(l: &[f64], r: &[f64]) -> WalkSamples {
        WalkSamples::new(0, 1, l.to_vec(), r.to_vec()).unwrap()
    }

    fn triangle_samples() -> WalkSamples {
        samples(&[5.0, 1.0, 3.0, 0.0], &[10.0, 9.0, 8.0, 7.0])
    }

    #[test]
    fn minima_examples() {
        let m = cell_minima(&triangle_samples());
        assert_eq!(m.first, 1);
        assert_eq!(m.m_l, vec![1.0, 1.0, 0.0]);
        let c = cell_minima(&samples(&[2.0; 5], &[2.0; 5]));
        assert!(c.m_l.iter().chain(&c.m_r).all(|&v| v == 2.0));
    }

    #[test]
    fn finer_mesh_lowers_minima() {
        let fine = generate_walk(&WalkParams::new(1.0, 30, 4, 2).unwrap()).unwrap();
        let coarse_l: Vec<f64> = fine.samples.l.iter().step_by(4).copied().collect();
        let coarse_r: Vec<f64> = fine.samples.r.iter().step_by(4).copied().collect();
        let coarse = WalkSamples::new(-30, 1, coarse_l, coarse_r).unwrap();
        let (mf, mc) = (cell_minima(&fine.samples), cell_minima(&coarse));
        for i in 0..mf.m_l.len() {
            assert!(mf.m_l[i] <= mc.m_l[i] && mf.m_r[i] <= mc.m_r[i]);
        }
    }

    #[test]
    fn triangle_instance() {
        let s = triangle_samples();
        for g in [
            build_adjacency_samples(&s, meta()).unwrap(),
            build_adjacency_bruteforce_samples(&s, meta(), 10).unwrap(),
        ] {
            assert_eq!(
                g.labeled_edges(),
                vec![
                    (1, 2, EdgeLabel::Consecutive),
                    (1, 3, EdgeLabel::LChord),
                    (2, 3, EdgeLabel::Consecutive)
                ]
            );
            let census = face_census(&g, &planar_order(&g).unwrap());
            assert_eq!(census.inner_faces, 1);
            assert_eq!(census.inner_non_triangles, 0);
            assert_eq!(census.euler_characteristic, 2);
        }
    }

    #[test]
    fn decreasing_walk_gives_path() {
        let l: Vec<f64> = (0..12).map(|i| -(i as f64)).collect();
        let r: Vec<f64> = (0..12).map(|i| -2.0 * i as f64).collect();
        let s = samples(&l, &r);
        for g in [
            build_adjacency_samples(&s, meta()).unwrap(),
            build_adjacency_bruteforce_samples(&s, meta(), 10).unwrap(),
        ] {
            assert_eq!(g.graph.edge_count(), 10);
            assert!(g.labels.iter().all(|&l| l == EdgeLabel::Consecutive));
            let census = face_census(&g, &planar_order(&g).unwrap());
            assert_eq!(census.faces, 1);
            assert_eq!(census.inner_faces, 0);
        }
    }

    #[test]
    fn single_vertex_and_small_windows() {
        let s = samples(&[0.0, 1.0], &[0.0, 1.0]);
        let g = build_adjacency_bruteforce_samples(&s, meta(), 10).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.graph.edge_count(), 0);
        assert!(matches!(build_adjacency_samples(&s, meta()), Err(Error::Domain(_))));
        let w = generate_walk(&WalkParams::new(1.0, 1, 1, 0).unwrap()).unwrap();
        assert!(build_adjacency(&w).is_err());
    }

    #[test]
    fn oracle_cap_refuses() {
        let w = generate_walk(&WalkParams::new(1.0, 30, 1, 0).unwrap()).unwrap();
        let err = build_adjacency_bruteforce_samples(&w.samples, meta_of(&w), 10).unwrap_err();
        assert!(matches!(err, Error::OracleCap { .. }));
    }

    #[test]
    fn stack_matches_bruteforce_with_mesh() {
        for seed in 0..20 {
            for k in [1, 3] {
                let w = generate_walk(&WalkParams::new(1.2, 150, k, seed).unwrap()).unwrap();
                let a = build_adjacency(&w).unwrap();
                let b = build_adjacency_bruteforce(&w).unwrap();
                assert_eq!(a.labeled_edges(), b.labeled_edges(), "seed {seed} k {k}");
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn structural_invariants() {
        let w = generate_walk(&WalkParams::new(1.5, 400, 1, 77).unwrap()).unwrap();
        let g = build_adjacency(&w).unwrap();
        let edges = g.labeled_edges();
        let n = g.vertex_count();
        let consecutive = edges.iter().filter(|e| e.2 == EdgeLabel::Consecutive).count();
        assert_eq!(consecutive, n - 1);
        let mut pairs = std::collections::HashMap::new();
        for &(a, b, lab) in &edges {
            assert!(a < b);
            pairs.entry((a, b)).or_insert_with(Vec::new).push(lab);
        }
        for ((a, b), labs) in pairs {
            if b - a == 1 {
                assert_eq!(labs, vec![EdgeLabel::Consecutive]);
            } else {
                assert!(labs == vec![EdgeLabel::LChord]
                    || labs == vec![EdgeLabel::RChord]
                    || labs == vec![EdgeLabel::LChord, EdgeLabel::RChord]);
            }
        }
        for lab in [EdgeLabel::LChord, EdgeLabel::RChord] {
            let count = edges.iter().filter(|e| e.2 == lab).count();
            assert!(count <= 2 * n);
        }
        assert!(g.graph.is_connected());
        assert_eq!(g.root().unwrap(), 399);
    }

    #[test]
    fn exposed_contains_window_ends() {
        let w = generate_walk(&WalkParams::new(1.0, 300, 1, 8).unwrap()).unwrap();
        let g = build_adjacency(&w).unwrap();
        let ex = g.exposed();
        assert!(ex[0] && ex[g.vertex_count() - 1]);
        assert!(ex.iter().filter(|&&b| b).count() < g.vertex_count() / 2);
    }

    #[test]
    fn exposed_vertices_are_the_only_ones_affected_by_the_window() {
        // compare each inner vertex's neighbourhood against a wider window
        let small = generate_walk(&WalkParams::new(1.3, 200, 1, 4).unwrap()).unwrap();
        let big = generate_walk(&WalkParams::new(1.3, 600, 1, 4).unwrap()).unwrap();
        let gs = build_adjacency(&small).unwrap();
        let gb = build_adjacency(&big).unwrap();
        let ex = gs.exposed();
        let nbrs = |g: &MatedCrtGraph, id: i64| {
            let v = g.index_of(id).unwrap();
            let mut l: Vec<i64> = g.graph.neighbors(v).iter().map(|&w| g.id_of(w as usize)).collect();
            l.sort();
            l
        };
        for v in 0..gs.vertex_count() {
            if !ex[v] {
                let id = gs.id_of(v);
                assert_eq!(nbrs(&gs, id), nbrs(&gb, id), "vertex {id}");
            }
        }
    }

    #[test]
    fn crossing_chords_rejected() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (1, 3)];
        let labels = vec![
            EdgeLabel::Consecutive,
            EdgeLabel::Consecutive,
            EdgeLabel::Consecutive,
            EdgeLabel::Consecutive,
            EdgeLabel::LChord,
            EdgeLabel::LChord,
        ];
        let g = MatedCrtGraph {
            meta: meta(),
            first_id: 0,
            graph: MultiGraph::from_edges(5, edges).unwrap(),
            labels,
        };
        assert!(matches!(planar_order(&g), Err(Error::Consistency(_))));
    }

    #[test]
    fn random_maps_are_triangulations() {
        for seed in 0..5 {
            let w = generate_walk(&WalkParams::new(1.4, 500, 1, seed).unwrap()).unwrap();
            let g = build_adjacency(&w).unwrap();
            let rot = planar_order(&g).unwrap();
            let census = face_census(&g, &rot);
            assert_eq!(census.inner_non_triangles, 0, "seed {seed}");
            assert_eq!(census.euler_characteristic, 2);
            assert_eq!(census.degrees.iter().sum::<usize>(), 2 * g.graph.edge_count());
        }
    }

    #[test]
    fn graph_file_round_trip() {
        let w = generate_walk(&WalkParams::new(1.1, 120, 2, 6).unwrap()).unwrap();
        let g = build_adjacency(&w).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = MatedCrtGraph::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.labeled_edges(), g.labeled_edges());
        assert_eq!(back, g);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);

        let mut bad = buf.clone();
        bad[3] = b'!';
        assert!(matches!(MatedCrtGraph::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(MatedCrtGraph::read_from(&mut &cut[..]), Err(Error::Format(_))));
    }
}
