//! Seeded collocation and boundary point sets.
//!
//! Every draw comes from ChaCha8 (a counter-based stream cipher generator)
//! keyed by the run seed, with one stream per point kind. The output is
//! therefore a pure function of (geometry, config, seed) on every platform.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolarBoundary};
use crate::registry::Registry;

/// Consecutive band rejections tolerated before giving up.
pub const MAX_BAND_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_interior_raw: usize,
    pub band_fraction: f64,
    pub band_width: f64,
    pub n_outer: usize,
    pub n_inner_per_geometry: usize,
    pub seed: u64,
    /// Name of the registered boundary sampler used for the inner points.
    pub boundary_sampler: String,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_interior_raw: 15_000,
            band_fraction: 0.5,
            band_width: 0.01,
            n_outer: 20_000,
            n_inner_per_geometry: 2_000,
            seed: 0,
            boundary_sampler: "uniform-theta".into(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_width > 0.0 && self.band_width < 0.1) {
            return Err(Error::Config(format!(
                "band_width must lie in (0, 0.1), got {}",
                self.band_width
            )));
        }
        if !(self.band_fraction >= 0.0) || !self.band_fraction.is_finite() {
            return Err(Error::Config("band_fraction must be finite and >= 0".into()));
        }
        boundary_samplers().get(&self.boundary_sampler)?;
        Ok(())
    }

    /// True when the two configs draw different point budgets.
    pub fn budget_differs(&self, other: &Self) -> bool {
        self.n_interior_raw != other.n_interior_raw
            || self.band_fraction != other.band_fraction
            || self.band_width != other.band_width
            || self.n_outer != other.n_outer
            || self.n_inner_per_geometry != other.n_inner_per_geometry
            || self.boundary_sampler != other.boundary_sampler
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Interior = 1,
    Band = 2,
    Outer = 3,
    Inner = 4,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// A point with an attached unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub p: Point,
    pub n: Point,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<Point>,
    pub band: Vec<Point>,
    pub outer: Vec<OrientedPoint>,
    pub inner: Vec<OrientedPoint>,
}

/// Uniform points on the unit square, keeping those outside the inclusion.
pub fn sample_interior(geom: &PolarBoundary, cfg: &SamplerConfig) -> Vec<Point> {
    let mut r = rng(cfg.seed, Stream::Interior);
    (0..cfg.n_interior_raw)
        .map(|_| [r.random::<f64>(), r.random::<f64>()])
        .filter(|&p| geom.sdf(p) > 0.0)
        .collect()
}

/// Points uniform in the one-sided band `0 < phi < band_width`, drawn by
/// rejection from the annulus that contains it.
pub fn sample_band(geom: &PolarBoundary, cfg: &SamplerConfig, retained: usize) -> Result<Vec<Point>> {
    let target = (cfg.band_fraction * retained as f64).ceil() as usize;
    let mut out = Vec::with_capacity(target);
    if target == 0 {
        return Ok(out);
    }
    let (lo, hi) = geom.radius_bounds();
    let (r2lo, r2hi) = (lo * lo, (hi + cfg.band_width).powi(2));
    let mut r = rng(cfg.seed, Stream::Band);
    let mut rejections = 0usize;
    while out.len() < target {
        let t = TAU * r.random::<f64>();
        let rad = (r2lo + r.random::<f64>() * (r2hi - r2lo)).sqrt();
        let p = [
            geom.center[0] + rad * t.cos(),
            geom.center[1] + rad * t.sin(),
        ];
        let phi = geom.sdf(p);
        let in_square = (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        if phi > 0.0 && phi < cfg.band_width && in_square {
            out.push(p);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections > MAX_BAND_REJECTIONS {
                return Err(Error::SamplingExhausted { rejections });
            }
        }
    }
    Ok(out)
}

/// Uniform points on the unit-square perimeter with outward normals.
/// Exact corner draws are discarded and redrawn.
pub fn sample_outer(cfg: &SamplerConfig) -> Vec<OrientedPoint> {
    let mut r = rng(cfg.seed, Stream::Outer);
    let mut out = Vec::with_capacity(cfg.n_outer);
    while out.len() < cfg.n_outer {
        let t = 4.0 * r.random::<f64>();
        let edge = t.floor();
        let s = t - edge;
        if s == 0.0 {
            continue;
        }
        out.push(perimeter_point(edge as usize, s));
    }
    out
}

/// Edge 0 bottom, 1 right, 2 top, 3 left, traversed counterclockwise.
fn perimeter_point(edge: usize, s: f64) -> OrientedPoint {
    match edge {
        0 => OrientedPoint {
            p: [s, 0.0],
            n: [0.0, -1.0],
        },
        1 => OrientedPoint {
            p: [1.0, s],
            n: [1.0, 0.0],
        },
        2 => OrientedPoint {
            p: [1.0 - s, 1.0],
            n: [0.0, 1.0],
        },
        _ => OrientedPoint {
            p: [0.0, 1.0 - s],
            n: [-1.0, 0.0],
        },
    }
}

/// Points on the inclusion boundary with normals pointing into the medium.
pub fn sample_inner(geom: &PolarBoundary, cfg: &SamplerConfig) -> Result<Vec<OrientedPoint>> {
    let sampler = boundary_samplers().get(&cfg.boundary_sampler)?;
    let mut r = rng(cfg.seed, Stream::Inner);
    let thetas = sampler.sample_angles(geom, cfg.n_inner_per_geometry, &mut r);
    Ok(thetas
        .into_iter()
        .map(|t| OrientedPoint {
            p: geom.boundary_point(t),
            n: geom.boundary_normal(t),
        })
        .collect())
}

pub fn sample_collocation(geom: &PolarBoundary, cfg: &SamplerConfig) -> Result<CollocationSet> {
    cfg.validate()?;
    let interior = sample_interior(geom, cfg);
    let band = sample_band(geom, cfg, interior.len())?;
    Ok(CollocationSet {
        band,
        outer: sample_outer(cfg),
        inner: sample_inner(geom, cfg)?,
        interior,
    })
}

/// Strategy for placing boundary angles.
pub trait BoundarySampler: Send + Sync {
    fn sample_angles(&self, geom: &PolarBoundary, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Angles uniform in `[0, 2 pi)`.
pub struct UniformTheta;

impl BoundarySampler for UniformTheta {
    fn sample_angles(&self, _geom: &PolarBoundary, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| TAU * rng.random::<f64>()).collect()
    }
}

/// Angles whose boundary points are uniform in arc length, by inverting a
/// tabulated cumulative length.
pub struct ArcLength {
    pub table_size: usize,
}

impl BoundarySampler for ArcLength {
    fn sample_angles(&self, geom: &PolarBoundary, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let m = self.table_size.max(16);
        let h = TAU / m as f64;
        let speed = |t: f64| {
            let [r, dr, _, _] = geom.radius_derivs(t);
            r.hypot(dr)
        };
        let mut cum = vec![0.0; m + 1];
        for i in 0..m {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            cum[i + 1] = cum[i] + 0.5 * h * (speed(a) + speed(b));
        }
        let total = cum[m];
        (0..n)
            .map(|_| {
                let s = total * rng.random::<f64>();
                let i = cum.partition_point(|&c| c <= s).clamp(1, m) - 1;
                let frac = (s - cum[i]) / (cum[i + 1] - cum[i]);
                (i as f64 + frac) * h
            })
            .collect()
    }
}

pub fn boundary_samplers() -> &'static Registry<dyn BoundarySampler> {
    static REG: OnceLock<Registry<dyn BoundarySampler>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn BoundarySampler> = Registry::new("boundary sampler");
        r.register("uniform-theta", Arc::new(UniformTheta));
        r.register("arc-length", Arc::new(ArcLength { table_size: 4096 }));
        r
    })
}

impl CollocationSet {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "x", "y", "nx", "ny"])?;
        let mut row = |kind: &str, p: Point, n: Point| -> Result<()> {
            w.write_record([
                kind.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                n[0].to_string(),
                n[1].to_string(),
            ])?;
            Ok(())
        };
        for &p in &self.interior {
            row("interior", p, [0.0, 0.0])?;
        }
        for &p in &self.band {
            row("band", p, [0.0, 0.0])?;
        }
        for op in &self.outer {
            row("outer", op.p, op.n)?;
        }
        for op in &self.inner {
            row("inner", op.p, op.n)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut set = Self::default();
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                reason: format!("bad collocation row {rec:?}"),
            };
            let num = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)
            };
            let p = [num(1)?, num(2)?];
            let n = [num(3)?, num(4)?];
            match rec.get(0).map(str::trim) {
                Some("interior") => set.interior.push(p),
                Some("band") => set.band.push(p),
                Some("outer") => set.outer.push(OrientedPoint { p, n }),
                Some("inner") => set.inner.push(OrientedPoint { p, n }),
                _ => return Err(bad()),
            }
        }
        Ok(set)
    }
}
