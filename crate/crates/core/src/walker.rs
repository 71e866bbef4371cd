//! Simple random walk: trajectories, Monte Carlo Green's functions and exact
//! return probabilities by truncated evolution of the walk distribution.
//!
//! A step picks one of the `deg(v)` edge-ends at `v` uniformly, so parallel
//! edges weight the choice and a self-loop (two ends) keeps the walker in
//! place with probability `2 / deg(v)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::graph::{bfs_distances, MultiGraph};
use crate::seed::{stream_rng, streams};

/// Number of Monte Carlo shards. Fixed, so results do not depend on the
/// thread count.
pub const MC_SHARDS: usize = 64;

/// Two-sided normal quantiles.
pub const Z95: f64 = 1.959_963_984_540_054;
pub const Z99: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkRun {
    pub root: usize,
    pub steps: u64,
    pub seed: u64,
    pub radii: Vec<u32>,
    /// First time the walk is outside `B_r(root)`, per radius; `None` if not
    /// within the step budget.
    pub exit_times: Vec<Option<u64>>,
    /// Visits to the root at times `0..=steps` (time 0 included).
    pub root_visits: u64,
    pub sample_times: Vec<u64>,
    /// `dist(X_t, root)` at each sample time.
    pub displacements: Vec<u32>,
}

#[inline]
fn step<R: Rng>(g: &MultiGraph, v: usize, rng: &mut R) -> usize {
    let nbrs = g.neighbors(v);
    if nbrs.is_empty() {
        v
    } else {
        nbrs[rng.random_range(0..nbrs.len())] as usize
    }
}

/// Walk engine over one graph and root with a precomputed distance field.
pub struct Walker<'a> {
    g: &'a MultiGraph,
    root: usize,
    dist: Vec<u32>,
    flagged: Option<&'a [bool]>,
}

impl<'a> Walker<'a> {
    pub fn new(g: &'a MultiGraph, root: usize) -> Result<Self> {
        g.check_vertex(root)?;
        Ok(Self { g, root, dist: bfs_distances(g, root), flagged: None })
    }

    /// Walkers that step onto a flagged vertex abort with
    /// [`Error::Contaminated`].
    pub fn with_flagged(mut self, flagged: &'a [bool]) -> Self {
        self.flagged = Some(flagged);
        self
    }

    pub fn distances(&self) -> &[u32] {
        &self.dist
    }

    #[inline]
    fn check(&self, v: usize) -> Result<()> {
        if self.flagged.is_some_and(|f| f[v]) {
            return Err(Error::Contaminated(format!("walk from {} reached flagged vertex {v}", self.root)));
        }
        Ok(())
    }

    /// With flagged vertices, the ball of the largest radius must avoid them.
    pub fn run(&self, steps: u64, radii: &[u32], sample_times: &[u64], seed: u64) -> Result<WalkRun> {
        if let (Some(mask), Some(&r)) = (self.flagged, radii.iter().max()) {
            if let Some(v) = (0..mask.len()).find(|&v| mask[v] && self.dist[v] <= r) {
                return Err(Error::Contaminated(format!("ball of radius {r} meets flagged vertex {v}")));
            }
        }
        let mut rng = stream_rng(seed, 0);
        self.run_with(&mut rng, steps, radii, sample_times, seed, false)
    }

    fn run_with(
        &self,
        rng: &mut ChaCha8Rng,
        steps: u64,
        radii: &[u32],
        sample_times: &[u64],
        seed: u64,
        stop_at_flag: bool,
    ) -> Result<WalkRun> {
        if radii.windows(2).any(|w| w[0] > w[1]) || sample_times.windows(2).any(|w| w[0] > w[1]) {
            return domain("radii and sample times must be ascending");
        }
        let mut exit_times = vec![None; radii.len()];
        let mut displacements = Vec::with_capacity(sample_times.len());
        let mut next_radius = 0;
        let mut next_sample = 0;
        let mut root_visits = 1u64;
        let mut v = self.root;
        while next_sample < sample_times.len() && sample_times[next_sample] == 0 {
            displacements.push(0);
            next_sample += 1;
        }
        for t in 1..=steps {
            v = step(self.g, v, rng);
            if stop_at_flag && self.flagged.is_some_and(|f| f[v]) {
                break;
            }
            self.check(v)?;
            let d = self.dist[v];
            if v == self.root {
                root_visits += 1;
            }
            while next_radius < radii.len() && d > radii[next_radius] {
                exit_times[next_radius] = Some(t);
                next_radius += 1;
            }
            while next_sample < sample_times.len() && sample_times[next_sample] == t {
                displacements.push(d);
                next_sample += 1;
            }
        }
        if next_sample < sample_times.len() && !stop_at_flag {
            return domain("sample time beyond the step budget");
        }
        Ok(WalkRun {
            root: self.root,
            steps,
            seed,
            radii: radii.to_vec(),
            exit_times,
            root_visits,
            sample_times: sample_times.to_vec(),
            displacements,
        })
    }

    /// Distances `dist(X_t, root)` at `times` for `walkers` independent walks,
    /// as `[walker][time]`. Walker `i` uses substream `i` of `seed`. A walker
    /// that steps onto a flagged vertex stops there, so its row only covers
    /// the sample times before that step.
    pub fn displacement_samples(&self, times: &[u64], walkers: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
        let steps = times.last().copied().unwrap_or(0);
        (0..walkers)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, streams::SHARD_BASE + i as u64);
                self.run_with(&mut rng, steps, &[], times, seed, true).map(|r| r.displacements)
            })
            .collect()
    }

    /// Exit time from `B_radius(root)` for `walkers` independent walks.
    pub fn exit_time_samples(&self, radius: u32, walkers: usize, seed: u64, max_steps: u64) -> Result<Vec<u64>> {
        (0..walkers)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, streams::SHARD_BASE + i as u64);
                let mut v = self.root;
                for t in 1..=max_steps {
                    v = step(self.g, v, &mut rng);
                    if self.dist[v] > radius {
                        return Ok(t);
                    }
                    self.check(v)?;
                }
                Err(Error::Domain(format!("walker {i} did not exit within {max_steps} steps")))
            })
            .collect()
    }
}

pub fn simulate_walk(g: &MultiGraph, root: usize, steps: u64, radii: &[u32], sample_times: &[u64], seed: u64) -> Result<WalkRun> {
    Walker::new(g, root)?.run(steps, radii, sample_times, seed)
}

/// When a Green's-function count stops.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    /// Count visits at times `0..=n`.
    Time(u64),
    /// Count visits strictly before the first hit of the set.
    Hit(Vec<usize>),
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl McEstimate {
    fn from_sums(sum: u128, sum_sq: u128, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum as f64 / nf;
        let var = if n > 1 { ((sum_sq as f64) - nf * mean * mean).max(0.0) / (nf - 1.0) } else { 0.0 };
        Self { mean, std_err: (var / nf).sqrt(), samples: n }
    }

    /// Normal-approximation interval `mean +- z * std_err`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_err, self.mean + z * self.std_err)
    }

    pub fn contains(&self, value: f64, z: f64) -> bool {
        let (lo, hi) = self.interval(z);
        lo <= value && value <= hi
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { mean: self.mean * factor, std_err: self.std_err * factor.abs(), samples: self.samples }
    }
}

/// Monte Carlo estimate of the Green's function `Gr_stop(root, root)`.
///
/// Walkers are split over [`MC_SHARDS`] shards seeded from `(seed, shard)`;
/// shard sums are integers, so the reduction is exact and order-free.
pub fn green_mc(g: &MultiGraph, root: usize, stop: &Stop, walkers: u64, seed: u64) -> Result<McEstimate> {
    g.check_vertex(root)?;
    if walkers == 0 {
        return domain("at least one walker is required");
    }
    let mut stop_mask = vec![false; g.vertex_count()];
    if let Stop::Hit(set) = stop {
        if set.is_empty() {
            return domain("empty stopping set");
        }
        for &v in set {
            g.check_vertex(v)?;
            stop_mask[v] = true;
        }
        if stop_mask[root] {
            return Ok(McEstimate { mean: 0.0, std_err: 0.0, samples: walkers });
        }
        let dist = bfs_distances(g, root);
        if !set.iter().any(|&v| dist[v] != u32::MAX) {
            return Err(Error::Topology("stopping set is not reachable".into()));
        }
    }
    let sums: Vec<(u128, u128)> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let lo = walkers * shard as u64 / MC_SHARDS as u64;
            let hi = walkers * (shard as u64 + 1) / MC_SHARDS as u64;
            let mut rng = stream_rng(seed, streams::SHARD_BASE + shard as u64);
            let (mut s, mut s2) = (0u128, 0u128);
            for _ in lo..hi {
                let visits = match stop {
                    Stop::Time(n) => {
                        let mut v = root;
                        let mut c = 1u64;
                        for _ in 0..*n {
                            v = step(g, v, &mut rng);
                            c += (v == root) as u64;
                        }
                        c
                    }
                    Stop::Hit(_) => {
                        let mut v = root;
                        let mut c = 1u64;
                        loop {
                            v = step(g, v, &mut rng);
                            if stop_mask[v] {
                                break;
                            }
                            c += (v == root) as u64;
                        }
                        c
                    }
                };
                s += visits as u128;
                s2 += (visits as u128) * (visits as u128);
            }
            (s, s2)
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0u128, 0u128), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    Ok(McEstimate::from_sums(sum, sum_sq, walkers))
}

/// Exact return probabilities from truncated distribution evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbSeries {
    pub root: usize,
    pub n_max: usize,
    pub tau: f64,
    /// `P(X_t = root)` for `t = 0..=2 n_max` (underestimates).
    pub probs: Vec<f64>,
    /// Total mass dropped up to and including time `t`; the exact value lies
    /// in `[probs[t], probs[t] + dropped[t]]`.
    pub dropped: Vec<f64>,
    /// Largest support size seen.
    pub peak_support: usize,
}

impl ReturnProbSeries {
    pub fn p2n(&self, n: usize) -> f64 {
        self.probs[2 * n]
    }

    pub fn bound(&self, n: usize) -> f64 {
        self.dropped[2 * n]
    }

    pub fn even_probs(&self) -> Vec<f64> {
        self.probs.iter().step_by(2).copied().collect()
    }

    /// Largest excess `P(2n+2) - P(2n) - bound(2n)`; non-positive when the
    /// monotone decrease holds within the truncation bounds.
    pub fn monotonicity_excess(&self) -> f64 {
        (0..self.n_max)
            .map(|n| self.p2n(n + 1) - self.p2n(n) - self.bound(n))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Builds a series from given even-time values (no truncation), e.g. for
    /// synthetic inputs to the estimators. Odd times are set to 0.
    pub fn from_even(root: usize, p2n: &[f64]) -> Self {
        let n_max = p2n.len().saturating_sub(1);
        let mut probs = vec![0.0; 2 * n_max + 1];
        for (n, &p) in p2n.iter().enumerate() {
            probs[2 * n] = p;
        }
        Self { root, n_max, tau: 0.0, dropped: vec![0.0; probs.len()], probs, peak_support: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveOptions<'a> {
    /// Fail with [`Error::Accuracy`] as soon as the truncation bound exceeds this.
    pub accuracy: Option<f64>,
    /// Fail with [`Error::Contaminated`] if kept mass reaches a flagged vertex.
    pub flagged: Option<&'a [bool]>,
}

pub fn return_prob_exact(g: &MultiGraph, root: usize, n_max: usize, tau: f64) -> Result<ReturnProbSeries> {
    return_prob_exact_with(g, root, n_max, tau, EvolveOptions::default())
}

/// Evolves the walk distribution for `2 n_max` steps, keeping only the
/// reachable support and dropping entries below `tau` after every step.
pub fn return_prob_exact_with(
    g: &MultiGraph,
    root: usize,
    n_max: usize,
    tau: f64,
    opts: EvolveOptions<'_>,
) -> Result<ReturnProbSeries> {
    g.check_vertex(root)?;
    if !(tau >= 0.0) {
        return domain("truncation threshold must be nonnegative");
    }
    let n = g.vertex_count();
    let steps = 2 * n_max;
    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut stamp = vec![u32::MAX; n];
    let mut support = vec![root as u32];
    let mut new_support: Vec<u32> = Vec::new();
    cur[root] = 1.0;
    let mut probs = Vec::with_capacity(steps + 1);
    let mut dropped = Vec::with_capacity(steps + 1);
    probs.push(1.0);
    dropped.push(0.0);
    let mut total_dropped = 0.0f64;
    let mut peak_support = 1;
    for t in 1..=steps {
        new_support.clear();
        for &v in &support {
            let v = v as usize;
            let p = cur[v];
            cur[v] = 0.0;
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                if stamp[v] != t as u32 {
                    stamp[v] = t as u32;
                    new_support.push(v as u32);
                    next[v] = 0.0;
                }
                next[v] += p;
                continue;
            }
            let share = p / nbrs.len() as f64;
            for &w in nbrs {
                let wi = w as usize;
                if stamp[wi] != t as u32 {
                    stamp[wi] = t as u32;
                    new_support.push(w);
                    next[wi] = 0.0;
                }
                next[wi] += share;
            }
        }
        let mut lost = 0.0;
        new_support.retain(|&w| {
            let p = next[w as usize];
            if p < tau {
                lost += p;
                next[w as usize] = 0.0;
                false
            } else {
                true
            }
        });
        if let Some(mask) = opts.flagged {
            if let Some(&w) = new_support.iter().find(|&&w| mask[w as usize]) {
                return Err(Error::Contaminated(format!(
                    "mass above {tau:e} reached flagged vertex {w} at time {t}"
                )));
            }
        }
        total_dropped += lost;
        if let Some(acc) = opts.accuracy {
            if total_dropped > acc {
                return Err(Error::Accuracy { achieved: total_dropped, requested: acc });
            }
        }
        probs.push(if stamp[root] == t as u32 { next[root] } else { 0.0 });
        dropped.push(total_dropped);
        peak_support = peak_support.max(new_support.len());
        std::mem::swap(&mut cur, &mut next);
        std::mem::swap(&mut support, &mut new_support);
    }
    Ok(ReturnProbSeries { root, n_max, tau, probs, dropped, peak_support })
}

/// Cumulative Green's function at even times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenSeries {
    /// `Gr_{2n}(root, root) = sum_{j <= 2n} P(X_j = root)` for `n = 0..=n_max`.
    pub gr: Vec<f64>,
    /// `gr / deg(root)`.
    pub normalized: Vec<f64>,
}

pub fn green_cumulative(series: &ReturnProbSeries, deg_root: usize) -> GreenSeries {
    let mut acc = 0.0;
    let mut gr = Vec::with_capacity(series.n_max + 1);
    for (t, &p) in series.probs.iter().enumerate() {
        acc += p;
        if t % 2 == 0 {
            gr.push(acc);
        }
    }
    let d = deg_root.max(1) as f64;
    let normalized = gr.iter().map(|g| g / d).collect();
    GreenSeries { gr, normalized }
}

/// Terms of the reversibility/Cauchy-Schwarz lower bound on `P(X_2n = root)`:
/// `(P(X_2n = root), deg(root) * sum_B P(X_n = v)^2 / deg(v),
///   deg(root) * P(X_n in B)^2 / sum_B deg)`, which must be non-increasing.
pub fn cauchy_schwarz_chain(g: &MultiGraph, root: usize, n: usize, ball: &[u32]) -> Result<(f64, f64, f64)> {
    let dist_n = exact_distribution(g, root, n)?;
    let dist_2n = exact_distribution(g, root, 2 * n)?;
    let deg_root = g.degree(root) as f64;
    let mut weighted = 0.0;
    let mut mass = 0.0;
    let mut deg_sum = 0.0;
    for &v in ball {
        let v = v as usize;
        let d = g.degree(v) as f64;
        weighted += dist_n[v] * dist_n[v] / d;
        mass += dist_n[v];
        deg_sum += d;
    }
    Ok((dist_2n[root], deg_root * weighted, deg_root * mass * mass / deg_sum))
}

/// Exact (untruncated) distribution of `X_t` started at `root`.
pub fn exact_distribution(g: &MultiGraph, root: usize, t: usize) -> Result<Vec<f64>> {
    g.check_vertex(root)?;
    let n = g.vertex_count();
    let mut cur = vec![0.0; n];
    cur[root] = 1.0;
    for _ in 0..t {
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
            let share = cur[v] / nbrs.len() as f64;
            for &w in nbrs {
                next[w as usize] += share;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Exact rational `P(X_2n = root)` for `n = 0..=n_max`, for small graphs.
pub fn return_prob_rational(g: &MultiGraph, root: usize, n_max: usize) -> Result<Vec<BigRational>> {
    g.check_vertex(root)?;
    let n = g.vertex_count();
    let zero = BigRational::zero();
    let mut cur = vec![zero.clone(); n];
    cur[root] = BigRational::one();
    let mut out = vec![BigRational::one()];
    for t in 1..=2 * n_max {
        let mut next = vec![zero.clone(); n];
        for v in 0..n {
            if cur[v].is_zero() {
                continue;
            }
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                next[v] += &cur[v];
                continue;
            }
            let share = &cur[v] / BigRational::from_integer(BigInt::from(nbrs.len()));
            for &w in nbrs {
                next[w as usize] += &share;
            }
        }
        cur = next;
        if t % 2 == 0 {
            out.push(cur[root].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;

    #[test]
    fn k2_exits_immediately() {
        let g = path(2);
        for root in 0..2 {
            let run = simulate_walk(&g, root, 10, &[0], &[], 5).unwrap();
            assert_eq!(run.exit_times, vec![Some(1)]);
        }
    }

    #[test]
    fn walk_run_is_deterministic() {
        let g = grid(9, 9);
        let a = simulate_walk(&g, 40, 500, &[1, 2, 4], &[0, 10, 100, 500], 77).unwrap();
        let b = simulate_walk(&g, 40, 500, &[1, 2, 4], &[0, 10, 100, 500], 77).unwrap();
        assert_eq!(a, b);
        assert!(a.root_visits >= 1);
        let exits: Vec<u64> = a.exit_times.iter().flatten().copied().collect();
        assert!(exits.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.displacements[0], 0);
    }

    #[test]
    fn path_exit_time_mc() {
        let g = path(3);
        let w = Walker::new(&g, 0).unwrap();
        let samples = w.exit_time_samples(1, 100_000, 3, 10_000).unwrap();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<u64>() as f64 / n;
        let var = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let half = Z99 * (var / n).sqrt();
        assert!((mean - 4.0).abs() <= half, "mean {mean} +- {half}");
    }

    #[test]
    fn green_mc_examples() {
        let g = path(3);
        let est = green_mc(&g, 0, &Stop::Hit(vec![2]), 100_000, 1).unwrap();
        assert!(est.contains(2.0, Z99), "{est:?}");
        let zero = green_mc(&g, 0, &Stop::Time(0), 10, 1).unwrap();
        assert_eq!(zero.mean, 1.0);
        assert_eq!(zero.std_err, 0.0);
        assert!(green_mc(&g, 0, &Stop::Time(3), 0, 1).is_err());
        let split = MultiGraph::from_edges(3, vec![(0, 1)]).unwrap();
        assert!(matches!(green_mc(&split, 0, &Stop::Hit(vec![2]), 10, 1), Err(Error::Topology(_))));
    }

    #[test]
    fn green_mc_independent_of_thread_count() {
        let g = cycle(7);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| green_mc(&g, 0, &Stop::Time(30), 5000, 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn return_probability_examples() {
        let lp = MultiGraph::from_edges(1, vec![(0, 0)]).unwrap();
        let s = return_prob_exact(&lp, 0, 10, 0.0).unwrap();
        assert!(s.even_probs().iter().all(|&p| p == 1.0));
        let gr = green_cumulative(&s, 2);
        for (n, &v) in gr.gr.iter().enumerate() {
            assert_eq!(v, (2 * n + 1) as f64);
        }

        let c4 = cycle(4);
        let s = return_prob_exact(&c4, 0, 3, 0.0).unwrap();
        assert_eq!(s.p2n(1), 0.5);

        let k2 = path(2);
        let s = return_prob_exact(&k2, 0, 6, 0.0).unwrap();
        let gr = green_cumulative(&s, 1);
        for (n, &v) in gr.gr.iter().enumerate() {
            assert_eq!(v, (n + 1) as f64);
        }
    }

    #[test]
    fn path_return_probability_is_central_binomial() {
        let n_max = 40;
        let g = path(2 * n_max + 11);
        let s = return_prob_exact(&g, n_max + 5, n_max, 0.0).unwrap();
        let mut expected = 1.0f64;
        for n in 0..=n_max {
            if n > 0 {
                // C(2n, n) / 4^n recurrence
                expected *= (2 * n - 1) as f64 / (2 * n) as f64;
            }
            assert!((s.p2n(n) - expected).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn truncation_is_accounted() {
        let g = grid(30, 30);
        let exact = return_prob_exact(&g, 465, 60, 0.0).unwrap();
        let cut = return_prob_exact(&g, 465, 60, 1e-6).unwrap();
        for t in 0..exact.probs.len() {
            assert!(cut.probs[t] <= exact.probs[t] + 1e-15);
            assert!(exact.probs[t] <= cut.probs[t] + cut.dropped[t] + 1e-15);
        }
        assert!(cut.dropped.last().unwrap() > &0.0);
        let err = return_prob_exact_with(&g, 465, 60, 1e-6, EvolveOptions { accuracy: Some(1e-12), flagged: None });
        assert!(matches!(err, Err(Error::Accuracy { .. })));
    }

    #[test]
    fn green_bounds_return_probability() {
        let g = grid(15, 15);
        let s = return_prob_exact(&g, 112, 50, 0.0).unwrap();
        let gr = green_cumulative(&s, 4);
        for n in 1..=50 {
            assert!(s.p2n(n) <= gr.gr[n] / n as f64);
        }
        assert!(s.monotonicity_excess() <= 1e-15);
    }

    #[test]
    fn rational_return_probabilities() {
        let p = return_prob_rational(&cycle(4), 0, 3).unwrap();
        assert_eq!(p[1], BigRational::new(1.into(), 2.into()));
        let mut rng = stream_rng(1, 0);
        let g = random_connected(&mut rng, 9, 7, true);
        let p = return_prob_rational(&g, 0, 12).unwrap();
        assert!(p.windows(2).all(|w| w[1] <= w[0]));
        let f = return_prob_exact(&g, 0, 12, 0.0).unwrap();
        for (n, q) in p.iter().enumerate() {
            let approx = q.numer().to_string().parse::<f64>().unwrap() / q.denom().to_string().parse::<f64>().unwrap();
            assert!((approx - f.p2n(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn flagged_support_aborts() {
        let g = path(20);
        let mut mask = vec![false; 20];
        mask[19] = true;
        let opts = EvolveOptions { accuracy: None, flagged: Some(&mask) };
        assert!(return_prob_exact_with(&g, 10, 3, 0.0, opts).is_ok());
        assert!(matches!(return_prob_exact_with(&g, 10, 5, 0.0, opts), Err(Error::Contaminated(_))));
    }
}
