//! Correlated two-dimensional Gaussian walks driving the map construction.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::seed::{stream_rng, streams};

pub const WALK_MAGIC: &[u8; 8] = b"MCRTWALK";
pub const WALK_FORMAT_VERSION: u32 = 1;

/// Correlation of the two coordinates' increments for a given `gamma`.
///
/// `Cov(L_t, R_t) = -cos(pi gamma^2 / 4) |t|`, which sweeps `(-1, 1)` as
/// gamma sweeps `(0, 2)`.
pub fn correlation_of(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return domain(format!("gamma must lie in (0, 2), got {gamma}"));
    }
    if gamma == std::f64::consts::SQRT_2 {
        return Ok(0.0);
    }
    Ok(-(PI * gamma * gamma / 4.0).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub gamma: f64,
    /// Integer times span `[-window_n, window_n]`.
    pub window_n: u64,
    /// Sub-steps per unit time.
    pub mesh_k: u32,
    pub seed: u64,
}

impl WalkParams {
    pub fn new(gamma: f64, window_n: u64, mesh_k: u32, seed: u64) -> Result<Self> {
        let params = Self { gamma, window_n, mesh_k, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        correlation_of(self.gamma)?;
        if self.window_n < 1 {
            return domain("window_n must be at least 1");
        }
        if self.mesh_k < 1 {
            return domain("mesh_k must be at least 1");
        }
        Ok(())
    }

    /// Number of mesh samples per coordinate, `2 * window_n * mesh_k + 1`.
    pub fn sample_len(&self) -> Result<usize> {
        (self.window_n as u128 * self.mesh_k as u128)
            .checked_mul(2)
            .map(|v| v + 1)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| Error::Resource {
                what: "walk samples".into(),
                required_bytes: u64::MAX,
            })
    }
}

/// Mesh samples of a two-coordinate path, as consumed by the map builders.
///
/// Sample `i` sits at time `start + i / mesh_k`; `start` is an integer time.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkSamples {
    pub start: i64,
    pub mesh_k: u32,
    pub l: Vec<f64>,
    pub r: Vec<f64>,
}

impl WalkSamples {
    pub fn new(start: i64, mesh_k: u32, l: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if mesh_k == 0 {
            return domain("mesh_k must be at least 1");
        }
        if l.len() != r.len() {
            return domain("coordinate sequences differ in length");
        }
        if l.is_empty() || (l.len() - 1) % mesh_k as usize != 0 {
            return domain("sample count must be 1 + a multiple of mesh_k");
        }
        Ok(Self { start, mesh_k, l, r })
    }

    /// Last integer time covered.
    pub fn end(&self) -> i64 {
        self.start + ((self.l.len() - 1) / self.mesh_k as usize) as i64
    }

    /// Integer-time cells `[x-1, x]` available, i.e. vertex ids `start+1 ..= end`.
    pub fn cell_count(&self) -> usize {
        (self.end() - self.start) as usize
    }

    /// Sample index of integer time `t`.
    #[inline]
    pub fn index_of(&self, t: i64) -> usize {
        ((t - self.start) as usize) * self.mesh_k as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedWalk {
    pub params: WalkParams,
    pub rho: f64,
    pub samples: WalkSamples,
}

impl CorrelatedWalk {
    pub fn samples_l(&self) -> &[f64] {
        &self.samples.l
    }

    pub fn samples_r(&self) -> &[f64] {
        &self.samples.r
    }

    /// Index of time 0 in the sample arrays.
    pub fn origin_index(&self) -> usize {
        self.samples.index_of(0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let p = &self.params;
        w.write_all(WALK_MAGIC)?;
        w.write_all(&WALK_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&p.gamma.to_le_bytes())?;
        w.write_all(&p.window_n.to_le_bytes())?;
        w.write_all(&p.mesh_k.to_le_bytes())?;
        w.write_all(&p.seed.to_le_bytes())?;
        for v in self.samples.l.iter().chain(self.samples.r.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != WALK_MAGIC {
            return Err(Error::Format("bad walk magic".into()));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != WALK_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported walk version {version}")));
        }
        let gamma = f64::from_le_bytes(read_array(r)?);
        let window_n = u64::from_le_bytes(read_array(r)?);
        let mesh_k = u32::from_le_bytes(read_array(r)?);
        let seed = u64::from_le_bytes(read_array(r)?);
        let params = WalkParams { gamma, window_n, mesh_k, seed };
        params
            .validate()
            .map_err(|e| Error::Format(format!("invalid walk header: {e}")))?;
        let len = params.sample_len()?;
        let l = read_f64s(r, len)?;
        let rr = read_f64s(r, len)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after walk samples".into()));
        }
        let samples = WalkSamples::new(-(window_n as i64), mesh_k, l, rr)?;
        let origin = samples.index_of(0);
        if samples.l[origin] != 0.0 || samples.r[origin] != 0.0 {
            return Err(Error::Format("walk is not anchored at the origin".into()));
        }
        Ok(Self { rho: correlation_of(gamma)?, params, samples })
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file truncated".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = try_alloc::<f64>(len, "walk samples")?;
    for _ in 0..len {
        out.push(f64::from_le_bytes(read_array(r)?));
    }
    Ok(out)
}

pub(crate) fn try_alloc<T>(len: usize, what: &str) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::Resource {
        what: what.to_string(),
        required_bytes: (len as u64).saturating_mul(std::mem::size_of::<T>() as u64),
    })?;
    Ok(v)
}

/// Samples a two-sided correlated walk.
///
/// Each mesh increment is `sqrt(1/k) * (z1, rho z1 + sqrt(1 - rho^2) z2)` with
/// `z1, z2` independent standard normals. The positive and negative time halves
/// use independent substreams, so growing the window leaves the inner walk intact.
pub fn generate_walk(params: &WalkParams) -> Result<CorrelatedWalk> {
    params.validate()?;
    let rho = correlation_of(params.gamma)?;
    let len = params.sample_len()?;
    let mut l = try_alloc::<f64>(len, "walk samples (L)")?;
    let mut r = try_alloc::<f64>(len, "walk samples (R)")?;
    l.resize(len, 0.0);
    r.resize(len, 0.0);

    let half = len / 2;
    let scale = (1.0 / params.mesh_k as f64).sqrt();
    let ortho = (1.0 - rho * rho).sqrt();
    {
        let (l_neg, l_pos) = l.split_at_mut(half);
        let (r_neg, r_pos) = r.split_at_mut(half);
        let step = Step { rho, ortho, scale };
        rayon::join(
            // slot 0 of the positive half is the origin itself
            || step.fill(l_pos.iter_mut().skip(1), r_pos.iter_mut().skip(1), params.seed, streams::WALK_POSITIVE),
            || step.fill(l_neg.iter_mut().rev(), r_neg.iter_mut().rev(), params.seed, streams::WALK_NEGATIVE),
        );
    }
    let samples = WalkSamples::new(-(params.window_n as i64), params.mesh_k, l, r)?;
    Ok(CorrelatedWalk { params: *params, rho, samples })
}

#[derive(Clone, Copy)]
struct Step {
    rho: f64,
    ortho: f64,
    scale: f64,
}

impl Step {
    fn fill<'a>(
        self,
        l: impl Iterator<Item = &'a mut f64>,
        r: impl Iterator<Item = &'a mut f64>,
        seed: u64,
        stream: u64,
    ) {
        let mut rng = stream_rng(seed, stream);
        let (mut cl, mut cr) = (0.0f64, 0.0f64);
        for (sl, sr) in l.zip(r) {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            cl += self.scale * z1;
            cr += self.scale * (self.rho * z1 + self.ortho * z2);
            *sl = cl;
            *sr = cr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        assert_eq!(correlation_of(std::f64::consts::SQRT_2).unwrap(), 0.0);
        let c = correlation_of((8.0f64 / 3.0).sqrt()).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        let c = correlation_of(1.0).unwrap();
        assert!((c + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(correlation_of(0.0).is_err());
        assert!(correlation_of(2.0).is_err());
        assert!(correlation_of(f64::NAN).is_err());
    }

    #[test]
    fn correlation_increasing() {
        let mut prev = -1.0;
        for i in 1..200 {
            let c = correlation_of(i as f64 / 100.0).unwrap();
            assert!(c > prev && c < 1.0);
            prev = c;
        }
    }

    #[test]
    fn small_window_shape() {
        let w = generate_walk(&WalkParams::new(1.0, 3, 1, 9).unwrap()).unwrap();
        assert_eq!(w.samples_l().len(), 7);
        assert_eq!(w.samples_r().len(), 7);
        assert_eq!(w.samples_l()[3], 0.0);
        assert_eq!(w.samples_r()[3], 0.0);
        assert_eq!(w.samples.start, -3);
        assert_eq!(w.samples.end(), 3);
    }

    #[test]
    fn deterministic() {
        let p = WalkParams::new(1.3, 500, 3, 42).unwrap();
        assert_eq!(generate_walk(&p).unwrap(), generate_walk(&p).unwrap());
    }

    #[test]
    fn extending_window_keeps_inner_walk() {
        let small = generate_walk(&WalkParams::new(1.0, 50, 2, 5).unwrap()).unwrap();
        let big = generate_walk(&WalkParams::new(1.0, 80, 2, 5).unwrap()).unwrap();
        let off = big.origin_index() - small.origin_index();
        assert_eq!(&big.samples_l()[off..off + small.samples_l().len()], small.samples_l());
        assert_eq!(&big.samples_r()[off..off + small.samples_r().len()], small.samples_r());
    }

    #[test]
    fn invalid_params() {
        assert!(WalkParams::new(1.0, 0, 1, 0).is_err());
        assert!(WalkParams::new(1.0, 1, 0, 0).is_err());
        assert!(WalkParams::new(2.5, 1, 1, 0).is_err());
    }

    #[test]
    fn oversized_window_reports_resource() {
        let p = WalkParams { gamma: 1.0, window_n: u64::MAX / 4, mesh_k: 8, seed: 0 };
        assert!(matches!(generate_walk(&p), Err(Error::Resource { .. })));
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let w = generate_walk(&WalkParams::new(1.2, 40, 2, 3).unwrap()).unwrap();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        let back = CorrelatedWalk::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, w);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(CorrelatedWalk::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(CorrelatedWalk::read_from(&mut &short[..]), Err(Error::Format(_))));
        let mut ver = buf.clone();
        ver[8] = 2;
        assert!(matches!(CorrelatedWalk::read_from(&mut ver.as_slice()), Err(Error::Format(_))));
    }
}
