//! Least-squares fits for the growth laws: spectral dimension, volume growth,
//! displacement exponent and the logarithmic Green's function law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::graph::{BfsScratch, MultiGraph};
use crate::seed::{stream_rng, streams};
use crate::walker::{ReturnProbSeries, Walker};

/// Bootstrap replicates for the displacement slope.
pub const BOOTSTRAP_REPLICATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Coefficient of determination, in `[0, 1]`.
    pub r_squared: f64,
    /// Range of the raw abscissa (before any log transform).
    pub window: (f64, f64),
    pub points: usize,
    /// Residual sum of squares in the fitted coordinates.
    pub rss: f64,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of `ys` on `xs`. `window` is the abscissa range
/// recorded in the result.
pub fn ols(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return domain("x and y lengths differ");
    }
    let n = xs.len();
    if n < 2 {
        return domain("at least two points are required");
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return domain("non-finite value in fit input");
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return domain("abscissa values are all equal");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let slope_stderr = if n > 2 { (rss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(FitResult { slope, intercept, slope_stderr, r_squared, window, points: n, rss })
}

/// Fit of `ln y` against `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return domain("log-log fit needs positive values");
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly, range_of(xs))
}

fn range_of(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Powers of two in `[lo, hi]`.
pub fn dyadic_grid(lo: u64, hi: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 1u64;
    while p <= hi {
        if p >= lo {
            out.push(p);
        }
        match p.checked_mul(2) {
            Some(q) => p = q,
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub fit: FitResult,
    /// `-2 * slope`.
    pub d_s: f64,
    pub d_s_stderr: f64,
}

/// Spectral dimension from `P(2n)` over the dyadic `n` in `[lo, hi]`.
pub fn spectral_dimension(series: &ReturnProbSeries, lo: usize, hi: usize) -> Result<SpectralFit> {
    if hi > series.n_max || lo == 0 || lo > hi {
        return domain(format!("window [{lo}, {hi}] not within 1..={}", series.n_max));
    }
    let ns = dyadic_grid(lo as u64, hi as u64);
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = ns.iter().map(|&n| series.p2n(n as usize)).collect();
    if let Some(n) = ns.iter().zip(&ys).find(|(_, &p)| !(p > 0.0)).map(|(n, _)| n) {
        return domain(format!("P(2n) is not positive at n = {n}"));
    }
    let fit = loglog_fit(&xs, &ys)?;
    Ok(SpectralFit { d_s: -2.0 * fit.slope, d_s_stderr: 2.0 * fit.slope_stderr, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub radii: Vec<u64>,
    pub counts: Vec<usize>,
    pub fit: FitResult,
    /// Radii left out because their ball meets a flagged vertex.
    #[serde(default)]
    pub excluded: Vec<u64>,
}

/// Slope of `ln #B_r` against `ln r` over dyadic `r` in `[4, r_max]`.
///
/// With `flagged`, radii whose ball meets a flagged vertex are excluded from
/// the fit; fewer than two remaining radii is an [`Error::Contaminated`].
pub fn volume_exponent(g: &MultiGraph, root: usize, r_max: u32, flagged: Option<&[bool]>) -> Result<VolumeProfile> {
    g.check_vertex(root)?;
    let mut radii = dyadic_grid(4, r_max as u64);
    if radii.len() < 2 {
        return domain("r_max must be at least 8");
    }
    let mut scratch = BfsScratch::new(g.vertex_count());
    scratch.run(g, root, r_max);
    let mut excluded = Vec::new();
    if let Some(mask) = flagged {
        let first = scratch.reached().iter().find(|&&v| mask[v as usize]).copied();
        if let Some(v) = first {
            let d = scratch.distance(v as usize).unwrap() as u64;
            excluded = radii.split_off(radii.partition_point(|&r| r < d));
            if radii.len() < 2 {
                return Err(Error::Contaminated(format!("ball of radius {d} reaches flagged vertex {v}")));
            }
        }
    }
    let mut hist = vec![0usize; r_max as usize + 1];
    for &v in scratch.reached() {
        hist[scratch.distance(v as usize).unwrap() as usize] += 1;
    }
    for i in 1..hist.len() {
        hist[i] += hist[i - 1];
    }
    let counts: Vec<usize> = radii.iter().map(|&r| hist[r as usize]).collect();
    let xs: Vec<f64> = radii.iter().map(|&r| r as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let fit = loglog_fit(&xs, &ys)?;
    Ok(VolumeProfile { radii, counts, fit, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementFit {
    pub times: Vec<u64>,
    pub medians: Vec<f64>,
    pub fit: FitResult,
    /// Bootstrap standard error of the slope (walkers resampled).
    pub bootstrap_stderr: f64,
    /// Times left out because some walker had stepped onto a flagged vertex.
    #[serde(default)]
    pub excluded: Vec<u64>,
}

fn median(xs: &mut [u32]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (_, &mut hi, _) = xs.select_nth_unstable(mid);
    if n % 2 == 1 {
        hi as f64
    } else {
        let lo = *xs[..mid].iter().max().unwrap();
        (lo as f64 + hi as f64) / 2.0
    }
}

/// Median-displacement fit from samples laid out as `[walker][time]`.
pub fn displacement_fit(times: &[u64], samples: &[Vec<u32>], seed: u64) -> Result<DisplacementFit> {
    if samples.is_empty() {
        return domain("no walkers");
    }
    let columns: Vec<Vec<u32>> = (0..times.len()).map(|j| samples.iter().map(|s| s[j]).collect()).collect();
    let medians: Vec<f64> = columns.iter().map(|c| median(&mut c.clone())).collect();
    let xs: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let fit = loglog_fit(&xs, &medians)?;
    let mut rng = stream_rng(seed, streams::BOOTSTRAP);
    let w = samples.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    let mut picks = vec![0usize; w];
    let mut buf = vec![0u32; w];
    for _ in 0..BOOTSTRAP_REPLICATES {
        for p in picks.iter_mut() {
            *p = rng.random_range(0..w);
        }
        let meds: Vec<f64> = columns
            .iter()
            .map(|c| {
                for (b, &p) in buf.iter_mut().zip(&picks) {
                    *b = c[p];
                }
                median(&mut buf)
            })
            .collect();
        if let Ok(f) = loglog_fit(&xs, &meds) {
            slopes.push(f.slope);
        }
    }
    let bootstrap_stderr = if slopes.len() > 1 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(DisplacementFit { times: times.to_vec(), medians, fit, bootstrap_stderr, excluded: Vec::new() })
}

/// Slope of `ln median dist(X_n, root)` against `ln n` over `times`.
///
/// With `flagged`, the fit stops before the first sample time at which any
/// walker has stepped onto a flagged vertex.
pub fn displacement_exponent(
    g: &MultiGraph,
    root: usize,
    times: &[u64],
    walkers: usize,
    seed: u64,
    flagged: Option<&[bool]>,
) -> Result<DisplacementFit> {
    if times.is_empty() || times[0] == 0 {
        return domain("time grid must be nonempty and positive");
    }
    let mut walker = Walker::new(g, root)?;
    if let Some(mask) = flagged {
        walker = walker.with_flagged(mask);
    }
    let mut samples = walker.displacement_samples(times, walkers, seed)?;
    let k = samples.iter().map(Vec::len).min().unwrap_or(0);
    if k < 2 {
        return Err(Error::Contaminated(format!("walkers reach flagged vertices before n = {}", times[k.min(1)])));
    }
    for s in samples.iter_mut() {
        s.truncate(k);
    }
    let mut out = displacement_fit(&times[..k], &samples, seed)?;
    out.excluded = times[k..].to_vec();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLawFit {
    /// `value` against `ln r`.
    pub log_fit: FitResult,
    /// `ln value` against `ln r`, when all values are positive.
    pub power_fit: Option<FitResult>,
    /// Residual sums of squares of both models, measured on `value`.
    pub log_rss: f64,
    pub power_rss: Option<f64>,
    pub log_beats_power: bool,
}

/// Fits `value = a + b ln r` and compares it with the best `value = c r^d`.
pub fn fit_loglaw(pairs: &[(f64, f64)]) -> Result<LogLawFit> {
    if pairs.len() < 2 {
        return domain("at least two points are required");
    }
    if pairs.iter().any(|&(r, _)| !(r > 0.0)) {
        return domain("radii must be positive");
    }
    let rs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lr: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let log_fit = ols(&lr, &vs, range_of(&rs))?;
    let log_rss = log_fit.rss;
    let power_fit = loglog_fit(&rs, &vs).ok();
    let power_rss = power_fit.as_ref().map(|f| {
        lr.iter().zip(&vs).map(|(x, v)| (v - f.predict(*x).exp()).powi(2)).sum::<f64>()
    });
    let log_beats_power = power_rss.is_none_or(|p| log_rss < p);
    Ok(LogLawFit { log_fit, power_fit, log_rss, power_rss, log_beats_power })
}

/// Averages values sharing the same abscissa, in ascending abscissa order.
pub fn mean_by_abscissa(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => out.push((x, y, 1)),
        }
    }
    out.into_iter().map(|(x, s, c)| (x, s / c as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::{grid, path};
    use crate::walker::return_prob_exact;

    #[test]
    fn synthetic_power_laws() {
        let p: Vec<f64> = (0..=64).map(|n| if n == 0 { 1.0 } else { 0.3 / n as f64 }).collect();
        let s = ReturnProbSeries::from_even(0, &p);
        let fit = spectral_dimension(&s, 4, 64).unwrap();
        assert!((fit.d_s - 2.0).abs() < 1e-12);
        assert!((fit.fit.r_squared - 1.0).abs() < 1e-12);
        let p: Vec<f64> = (0..=64).map(|n| if n == 0 { 1.0 } else { (n as f64).powf(-0.5) }).collect();
        let fit = spectral_dimension(&ReturnProbSeries::from_even(0, &p), 1, 64).unwrap();
        assert!((fit.d_s - 1.0).abs() < 1e-12);
        let mut p = p;
        p[8] = 0.0;
        assert!(spectral_dimension(&ReturnProbSeries::from_even(0, &p), 1, 64).is_err());
    }

    #[test]
    fn loglaw_examples() {
        let pairs: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0].iter().map(|&r: &f64| (r, 2.0 * r.ln() + 1.0)).collect();
        let f = fit_loglaw(&pairs).unwrap();
        assert!((f.log_fit.slope - 2.0).abs() < 1e-12);
        assert!((f.log_fit.intercept - 1.0).abs() < 1e-12);
        assert!((f.log_fit.r_squared - 1.0).abs() < 1e-12);
        assert!(f.log_beats_power);
        let flat = fit_loglaw(&[(2.0, 3.0), (4.0, 3.0), (8.0, 3.0)]).unwrap();
        assert_eq!(flat.log_fit.slope, 0.0);
        assert!(fit_loglaw(&[(2.0, 1.0)]).is_err());
        let power: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|&r: &f64| (r, 3.0 * r.powf(1.5))).collect();
        assert!(!fit_loglaw(&power).unwrap().log_beats_power);
    }

    #[test]
    fn fits_are_order_invariant() {
        let pairs = vec![(8.0, 1.1), (16.0, 1.9), (32.0, 2.4), (64.0, 3.3)];
        let mut rev = pairs.clone();
        rev.reverse();
        let a = fit_loglaw(&pairs).unwrap();
        let b = fit_loglaw(&rev).unwrap();
        assert!((a.log_fit.slope - b.log_fit.slope).abs() < 1e-12);
        assert!((a.log_fit.r_squared - b.log_fit.r_squared).abs() < 1e-12);
    }

    #[test]
    fn volume_examples() {
        let g = path(1001);
        let v = volume_exponent(&g, 500, 256, None).unwrap();
        assert_eq!(v.counts[0], 9);
        assert!((v.fit.slope - 1.0).abs() < 0.05);
        let g = grid(301, 301);
        let v = volume_exponent(&g, 150 * 301 + 150, 64, None).unwrap();
        for (&r, &c) in v.radii.iter().zip(&v.counts) {
            assert_eq!(c as u64, 2 * r * r + 2 * r + 1);
        }
        assert!((v.fit.slope - 2.0).abs() < 0.1);
        let mut mask = vec![false; 301 * 301];
        mask[150 * 301 + 160] = true;
        let v = volume_exponent(&g, 150 * 301 + 150, 64, Some(&mask)).unwrap();
        assert_eq!((v.radii, v.excluded), (vec![4, 8], vec![16, 32, 64]));
        mask[150 * 301 + 156] = true;
        assert!(matches!(volume_exponent(&g, 150 * 301 + 150, 64, Some(&mask)), Err(Error::Contaminated(_))));
        assert!(volume_exponent(&g, 150 * 301 + 150, 128, None).is_ok());
    }

    #[test]
    fn displacement_examples() {
        let times = dyadic_grid(16, 1024);
        let g = path(4001);
        let d = displacement_exponent(&g, 2000, &times, 4000, 1, None).unwrap();
        assert!((d.fit.slope - 0.5).abs() < 0.05, "{}", d.fit.slope);
        let g = grid(201, 201);
        let d = displacement_exponent(&g, 100 * 201 + 100, &times, 4000, 2, None).unwrap();
        assert!((d.fit.slope - 0.5).abs() < 0.05, "{}", d.fit.slope);
        assert!(d.bootstrap_stderr > 0.0);
        let root = 100 * 201 + 100;
        let dist = crate::graph::bfs_distances(&g, root);
        let mask: Vec<bool> = dist.iter().map(|&d| d == 40).collect();
        let d = displacement_exponent(&g, root, &times, 4000, 2, Some(&mask)).unwrap();
        assert!(!d.excluded.is_empty() && d.times.len() >= 2);
        assert_eq!(d.times.len() + d.excluded.len(), times.len());
        let far: Vec<bool> = dist.iter().map(|&d| d == 2).collect();
        assert!(matches!(displacement_exponent(&g, root, &times, 100, 2, Some(&far)), Err(Error::Contaminated(_))));
    }

    #[test]
    fn bootstrap_stderr_shrinks_with_more_walkers() {
        use rand_distr::{Distribution, Normal};
        let times = dyadic_grid(1, 64);
        let synth = |walkers: usize, seed: u64| {
            let mut rng = stream_rng(seed, 0);
            let normal = Normal::<f64>::new(0.0, 0.3).unwrap();
            let samples: Vec<Vec<u32>> = (0..walkers)
                .map(|_| {
                    times
                        .iter()
                        .map(|&t| ((t as f64).sqrt() * 100.0 * normal.sample(&mut rng).exp()) as u32)
                        .collect()
                })
                .collect();
            displacement_fit(&times, &samples, seed).unwrap().bootstrap_stderr
        };
        let small: f64 = (0..4).map(|s| synth(1000, s)).sum();
        let large: f64 = (0..4).map(|s| synth(4000, s)).sum();
        let ratio = small / large;
        assert!((1.4..2.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lattice_spectral_dimension() {
        let g = grid(200, 200);
        let s = return_prob_exact(&g, 100 * 200 + 100, 1024, 0.0).unwrap();
        let fit = spectral_dimension(&s, 64, 1024).unwrap();
        assert!((1.9..=2.1).contains(&fit.d_s), "{}", fit.d_s);
    }

    #[test]
    fn dyadic() {
        assert_eq!(dyadic_grid(3, 40), vec![4, 8, 16, 32]);
        assert_eq!(dyadic_grid(1, 1), vec![1]);
    }

    #[test]
    fn mean_by_abscissa_groups() {
        let m = mean_by_abscissa(&[(2.0, 1.0), (1.0, 5.0), (2.0, 3.0)]);
        assert_eq!(m, vec![(1.0, 5.0), (2.0, 2.0)]);
    }
}
