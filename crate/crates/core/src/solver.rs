//! Jacobi-preconditioned conjugate gradients for Dirichlet problems on the
//! graph Laplacian.
//!
//! A problem fixes values on some vertices and asks for `u` on the free
//! vertices reachable from a start vertex with `(L u)(v) = rhs(v)`, where
//! `(L u)(v) = sum over edge-ends (u(v) - u(w))`. Self-loops drop out.

use crate::error::{Error, Result};
use crate::graph::MultiGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `|r| / |b|`.
    pub tol: f64,
    /// Iteration cap as a multiple of the number of unknowns.
    pub iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, iter_factor: 50 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// Solution on every vertex; fixed vertices carry their fixed value and
    /// vertices outside the solved region carry 0.
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Whether the region reachable from the start touched a vertex fixed at
    /// something other than the start itself.
    pub touched_fixed: bool,
}

/// Solves on the free region reachable from `start` without crossing fixed
/// vertices. `fixed[v]` is NaN for free vertices.
pub(crate) fn solve_region(
    g: &MultiGraph,
    start: usize,
    fixed: &[f64],
    rhs: impl Fn(usize) -> f64,
    opts: SolverOptions,
) -> Result<Solution> {
    let n = g.vertex_count();
    let mut local = vec![u32::MAX; n];
    let mut free = Vec::new();
    let mut touched_fixed = false;
    let mut stack = vec![start];
    if fixed[start].is_nan() {
        local[start] = 0;
        free.push(start as u32);
    }
    let mut seen_fixed = vec![false; n];
    seen_fixed[start] = true;
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            let w = w as usize;
            if fixed[w].is_nan() {
                if local[w] == u32::MAX {
                    local[w] = free.len() as u32;
                    free.push(w as u32);
                    stack.push(w);
                }
            } else if !seen_fixed[w] {
                seen_fixed[w] = true;
                touched_fixed = true;
            }
        }
    }
    drop(seen_fixed);
    if !touched_fixed && !free.is_empty() {
        return Err(Error::Topology("no fixed vertex is reachable from the start".into()));
    }

    // local system in compressed rows
    let m = free.len();
    let mut row_start = Vec::with_capacity(m + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut diag = vec![0.0f64; m];
    let mut b = vec![0.0f64; m];
    row_start.push(0usize);
    for (i, &v) in free.iter().enumerate() {
        let v = v as usize;
        b[i] = rhs(v);
        for &w in g.neighbors(v) {
            let w = w as usize;
            if w == v {
                continue;
            }
            diag[i] += 1.0;
            if fixed[w].is_nan() {
                cols.push(local[w]);
            } else {
                b[i] += fixed[w];
            }
        }
        row_start.push(cols.len());
    }

    let (x, residual, iterations) = pcg(&row_start, &cols, &diag, &b, opts)?;

    let mut values: Vec<f64> = fixed.iter().map(|&f| if f.is_nan() { 0.0 } else { f }).collect();
    for (i, &v) in free.iter().enumerate() {
        values[v as usize] = x[i];
    }
    Ok(Solution { values, residual, iterations, touched_fixed })
}

fn matvec(row_start: &[usize], cols: &[u32], diag: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..diag.len() {
        let mut acc = diag[i] * x[i];
        for &j in &cols[row_start[i]..row_start[i + 1]] {
            acc -= x[j as usize];
        }
        y[i] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(
    row_start: &[usize],
    cols: &[u32],
    diag: &[f64],
    b: &[f64],
    opts: SolverOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let m = b.len();
    let mut x = vec![0.0; m];
    let b_norm = dot(b, b).sqrt();
    if m == 0 || b_norm == 0.0 {
        return Ok((x, 0.0, 0));
    }
    if diag.iter().any(|&d| d == 0.0) {
        return Err(Error::Topology("free vertex without neighbours".into()));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    let cap = opts.iter_factor.saturating_mul(m).max(10);
    let mut residual = 1.0;
    for it in 1..=cap {
        matvec(row_start, cols, diag, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Convergence { iterations: it, residual });
        }
        let alpha = rz / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= opts.tol {
            return Ok((x, residual, it));
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence { iterations: cap, residual })
}
