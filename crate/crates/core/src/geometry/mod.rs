//! Star-shaped inclusion family, its radial signed distance and the probe
//! encoding consumed by the branch network.
//!
//! The boundary is the polar curve `R(theta) = r0 (1 + sum_k a_k cos(k (theta - alpha)))`
//! about a fixed center. The distance used throughout is the radial one,
//! `phi(p) = |p - c| - R(atan2(p - c))`: negative inside the inclusion,
//! positive in the surrounding medium, zero on the boundary.

mod taylor;

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use taylor::Taylor2;

pub type Point = [f64; 2];

/// Below this distance from the center `sdf` falls back to `-R(0)`.
pub const CENTER_EPS: f64 = 1e-12;
/// Below this distance from the center `sdf_jet` refuses to differentiate.
pub const JET_CENTER_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub frequency: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarBoundary {
    pub center: Point,
    pub base_radius: f64,
    pub harmonics: Vec<Harmonic>,
    /// Rotation angle in radians.
    pub rotation: f64,
}

impl Default for PolarBoundary {
    fn default() -> Self {
        Self {
            center: [0.5, 0.5],
            base_radius: 0.2,
            harmonics: vec![
                Harmonic {
                    frequency: 2,
                    amplitude: 0.08,
                },
                Harmonic {
                    frequency: 3,
                    amplitude: 0.23,
                },
                Harmonic {
                    frequency: 5,
                    amplitude: 0.11,
                },
            ],
            rotation: 0.0,
        }
    }
}

impl PolarBoundary {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_radius > 0.0) {
            return Err(Error::Config("base_radius must be positive".into()));
        }
        let (lo, _) = self.radius_bounds();
        if !(lo > 0.0) {
            return Err(Error::Config(format!(
                "harmonic amplitudes allow a non-positive radius (lower bound {lo})"
            )));
        }
        if !self.rotation.is_finite() || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("geometry must be finite".into()));
        }
        Ok(())
    }

    /// Same shape rotated by `alpha` radians about its center.
    pub fn rotated(&self, alpha: f64) -> Self {
        Self {
            rotation: self.rotation + alpha,
            ..self.clone()
        }
    }

    /// Same shape with absolute rotation `deg` degrees.
    pub fn with_rotation_deg(&self, deg: f64) -> Self {
        Self {
            rotation: deg.to_radians(),
            ..self.clone()
        }
    }

    /// `R^(n)(theta)` for `n = 0..=3`.
    pub fn radius_derivs(&self, theta: f64) -> [f64; 4] {
        let mut out = [1.0, 0.0, 0.0, 0.0];
        for h in &self.harmonics {
            let k = h.frequency as f64;
            let (s, c) = (k * (theta - self.rotation)).sin_cos();
            out[0] += h.amplitude * c;
            out[1] -= h.amplitude * k * s;
            out[2] -= h.amplitude * k * k * c;
            out[3] += h.amplitude * k * k * k * s;
        }
        out.map(|v| v * self.base_radius)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        let mut acc = 1.0;
        for h in &self.harmonics {
            acc += h.amplitude * (h.frequency as f64 * (theta - self.rotation)).cos();
        }
        self.base_radius * acc
    }

    /// Guaranteed `(min, max)` bounds on `R`, from the triangle inequality.
    pub fn radius_bounds(&self) -> (f64, f64) {
        let s: f64 = self.harmonics.iter().map(|h| h.amplitude.abs()).sum();
        (self.base_radius * (1.0 - s), self.base_radius * (1.0 + s))
    }

    /// Polar coordinates of `p` about the center.
    pub fn polar(&self, p: Point) -> (f64, f64) {
        let u = p[0] - self.center[0];
        let v = p[1] - self.center[1];
        (u.hypot(v), v.atan2(u))
    }

    pub fn sdf(&self, p: Point) -> f64 {
        self.sdf_flagged(p).0
    }

    /// Signed radial distance plus a flag raised when `p` sits on the center,
    /// where the angle is undefined and `-R(0)` is returned instead.
    pub fn sdf_flagged(&self, p: Point) -> (f64, bool) {
        let (r, theta) = self.polar(p);
        if r < CENTER_EPS {
            return (-self.radius(0.0), true);
        }
        (r - self.radius(theta), false)
    }

    pub fn sdf_jet(&self, p: Point, order: JetOrder) -> Result<SdfJet> {
        let u = p[0] - self.center[0];
        let v = p[1] - self.center[1];
        let dist = u.hypot(v);
        if dist < JET_CENTER_EPS {
            return Err(Error::DegenerateCenter {
                x: p[0],
                y: p[1],
                dist,
            });
        }
        let du = Taylor2::var_x(u);
        let dv = Taylor2::var_y(v);
        let r = du.mul(&du).add(&dv.mul(&dv)).sqrt();
        let theta = Taylor2::polar_angle(u, v);
        let radius = theta.compose(self.radius_derivs(theta.value()));
        let phi = r.sub(&radius);
        Ok(SdfJet::from_taylor(&phi, order))
    }

    pub fn boundary_point(&self, theta: f64) -> Point {
        let r = self.radius(theta);
        let (s, c) = theta.sin_cos();
        [self.center[0] + r * c, self.center[1] + r * s]
    }

    /// Derivative of `boundary_point` with respect to `theta`.
    pub fn boundary_tangent(&self, theta: f64) -> Point {
        let [r, dr, _, _] = self.radius_derivs(theta);
        let (s, c) = theta.sin_cos();
        [dr * c - r * s, dr * s + r * c]
    }

    /// Unit normal at `boundary_point(theta)`, pointing out of the inclusion.
    pub fn boundary_normal(&self, theta: f64) -> Point {
        let [r, dr, _, _] = self.radius_derivs(theta);
        let (s, c) = theta.sin_cos();
        let g = [c + dr * s / r, s - dr * c / r];
        let n = g[0].hypot(g[1]);
        [g[0] / n, g[1] / n]
    }

    /// Inclusion area `1/2 int R^2 dtheta`, evaluated with the periodic
    /// trapezoidal rule (spectrally accurate for trigonometric polynomials).
    pub fn inclusion_area(&self) -> f64 {
        let n = 4096;
        let h = TAU / n as f64;
        0.5 * h * (0..n).map(|i| self.radius(i as f64 * h).powi(2)).sum::<f64>()
    }

    /// Angle of the boundary point of minimal radius, the mouth of the
    /// deepest concavity.
    pub fn min_radius_angle(&self) -> f64 {
        let n = 7200;
        let h = TAU / n as f64;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..n {
            let t = self.rotation + i as f64 * h;
            let r = self.radius(t);
            if r < best.1 {
                best = (t, r);
            }
        }
        // Newton polish on R'(theta) = 0.
        let mut t = best.0;
        for _ in 0..20 {
            let [_, d1, d2, _] = self.radius_derivs(t);
            if d2 <= 0.0 {
                break;
            }
            let step = d1 / d2;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        t.rem_euclid(TAU)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JetOrder {
    First,
    Second,
    Third,
}

impl JetOrder {
    pub fn from_int(order: u8) -> Result<Self> {
        match order {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            3 => Ok(Self::Third),
            o => Err(Error::Config(format!("sdf jet order must be 1, 2 or 3, got {o}"))),
        }
    }
}

/// Value and spatial derivatives of the radial distance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfJet {
    pub value: f64,
    pub grad: [f64; 2],
    /// Full symmetric Hessian. Zero when only first order was requested.
    pub hess: [[f64; 2]; 2],
    /// `(xxx, xxy, xyy, yyy)` when third order was requested.
    pub third: Option<[f64; 4]>,
}

impl SdfJet {
    fn from_taylor(t: &Taylor2, order: JetOrder) -> Self {
        let grad = [t.partial(1, 0), t.partial(0, 1)];
        let hess = if order == JetOrder::First {
            [[0.0; 2]; 2]
        } else {
            let xy = t.partial(1, 1);
            [[t.partial(2, 0), xy], [xy, t.partial(0, 2)]]
        };
        let third = (order == JetOrder::Third).then(|| {
            [
                t.partial(3, 0),
                t.partial(2, 1),
                t.partial(1, 2),
                t.partial(0, 3),
            ]
        });
        Self {
            value: t.value(),
            grad,
            hess,
            third,
        }
    }

    pub fn unit_normal(&self) -> Point {
        let n = self.grad[0].hypot(self.grad[1]);
        [self.grad[0] / n, self.grad[1] / n]
    }
}

/// Fixed probe locations at which the distance is sampled for the branch input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub points: Vec<Point>,
}

impl ProbeSet {
    /// `n` probes equally spaced in angle on a ring about `center`,
    /// starting at angle zero.
    pub fn ring(center: Point, radius: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("probe count must be at least 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config("probe ring radius must be positive".into()));
        }
        let points = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("probe set is empty".into()));
        }
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                if a == b {
                    return Err(Error::Config(format!("duplicate probe at {a:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "x", "y"])?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([i.to_string(), p[0].to_string(), p[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows: Vec<(usize, Point)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        reason: format!("bad probe row {rec:?}"),
                    })
            };
            rows.push((parse(0)? as usize, [parse(1)?, parse(2)?]));
        }
        rows.sort_by_key(|r| r.0);
        let set = Self {
            points: rows.into_iter().map(|r| r.1).collect(),
        };
        set.validate()?;
        Ok(set)
    }
}

/// Branch input: the distance at every probe, in probe order.
pub fn probe_encoding(geom: &PolarBoundary, probes: &ProbeSet) -> Vec<f64> {
    probes.points.iter().map(|&p| geom.sdf(p)).collect()
}

/// Rotates `p` by `alpha` about `center`.
pub fn rotate_about(p: Point, center: Point, alpha: f64) -> Point {
    let (s, c) = alpha.sin_cos();
    let u = p[0] - center[0];
    let v = p[1] - center[1];
    [center[0] + c * u - s * v, center[1] + s * u + c * v]
}

/// Smallest pairwise L-infinity gap between encodings of `geoms`.
pub fn min_encoding_gap(geoms: &[PolarBoundary], probes: &ProbeSet) -> f64 {
    let enc: Vec<Vec<f64>> = geoms.iter().map(|g| probe_encoding(g, probes)).collect();
    let mut gap = f64::INFINITY;
    for i in 0..enc.len() {
        for j in i + 1..enc.len() {
            let d = enc[i]
                .iter()
                .zip(&enc[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            gap = gap.min(d);
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn base() -> PolarBoundary {
        PolarBoundary::default()
    }

    #[test]
    fn radius_examples() {
        let g = base();
        assert!((g.radius(0.0) - 0.284).abs() < 1e-15);
        assert!((g.radius(PI) - 0.148).abs() < 1e-15);
        let a = 0.37;
        assert!((g.rotated(a).radius(a) - g.radius(0.0)).abs() < 1e-15);
    }

    #[test]
    fn radius_is_periodic_and_positive() {
        let g = base().rotated(0.3);
        for i in 0..1000 {
            let t = -7.0 + 0.014 * i as f64;
            let r = g.radius(t);
            assert!(r >= 0.116 - 1e-15);
            assert!((r - g.radius(t + TAU)).abs() < 1e-14);
        }
        let (lo, hi) = g.radius_bounds();
        assert!((lo - 0.116).abs() < 1e-15 && (hi - 0.284).abs() < 1e-15);
    }

    #[test]
    fn sdf_examples() {
        let g = base();
        assert!((g.sdf([0.9, 0.5]) - 0.116).abs() < 1e-15);
        for i in 0..50 {
            let t = 0.13 * i as f64;
            assert!(g.sdf(g.boundary_point(t)).abs() < 1e-15);
        }
        let (v, flag) = g.sdf_flagged([0.5, 0.5]);
        assert!((v + 0.284).abs() < 1e-15);
        assert!(flag);
        assert!(!g.sdf_flagged([0.6, 0.5]).1);
    }

    #[test]
    fn boundary_point_and_normal_at_zero() {
        let g = base();
        let p = g.boundary_point(0.0);
        assert!((p[0] - 0.784).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let q = g.boundary_point(PI / 2.0);
        assert!((q[1] - (0.5 + g.radius(PI / 2.0))).abs() < 1e-15);
        let n = g.boundary_normal(0.0);
        assert!((n[0] - 1.0).abs() < 1e-15 && n[1].abs() < 1e-15);
    }

    #[test]
    fn normal_is_unit_and_orthogonal_to_tangent() {
        let g = base().rotated(0.4);
        for i in 0..720 {
            let t = TAU * i as f64 / 720.0;
            let n = g.boundary_normal(t);
            let tan = g.boundary_tangent(t);
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
            assert!((n[0] * tan[0] + n[1] * tan[1]).abs() < 1e-10);
            // Outward: stepping along n leaves the inclusion.
            let p = g.boundary_point(t);
            assert!(g.sdf([p[0] + 1e-6 * n[0], p[1] + 1e-6 * n[1]]) > 0.0);
        }
    }

    #[test]
    fn jet_gradient_closed_form_and_normal_on_boundary() {
        let g = base();
        let j = g.sdf_jet([0.784, 0.5], JetOrder::First).unwrap();
        assert!((j.grad[0] - 1.0).abs() < 1e-14 && j.grad[1].abs() < 1e-14);
        let p = [0.31, 0.77];
        let (r, t) = g.polar(p);
        let [_, dr, _, _] = g.radius_derivs(t);
        let j = g.sdf_jet(p, JetOrder::Third).unwrap();
        assert!((j.grad[0] - (t.cos() + dr / r * t.sin())).abs() < 1e-14);
        assert!((j.grad[1] - (t.sin() - dr / r * t.cos())).abs() < 1e-14);
        assert_eq!(j.hess[0][1], j.hess[1][0]);
        let th = 2.1;
        let jb = g.sdf_jet(g.boundary_point(th), JetOrder::First).unwrap();
        let n = jb.unit_normal();
        let nb = g.boundary_normal(th);
        assert!((n[0] - nb[0]).abs() < 1e-12 && (n[1] - nb[1]).abs() < 1e-12);
    }

    #[test]
    fn jet_rejects_center() {
        let g = base();
        assert!(matches!(
            g.sdf_jet([0.5, 0.5 + 1e-10], JetOrder::First),
            Err(Error::DegenerateCenter { .. })
        ));
    }

    #[test]
    fn probe_encoding_on_default_ring() {
        let g = base();
        let probes = ProbeSet::ring(g.center, 0.3, 10).unwrap();
        let e = probe_encoding(&g, &probes);
        for (i, v) in e.iter().enumerate() {
            let expect = 0.3 - g.radius(TAU * i as f64 / 10.0);
            assert!((v - expect).abs() < 1e-14);
            assert!(*v > 0.0);
        }
        // A 36 degree rotation shifts the encoding by one slot.
        let r = probe_encoding(&g.with_rotation_deg(36.0), &probes);
        for i in 0..10 {
            assert!((r[i] - e[(i + 9) % 10]).abs() < 1e-14);
        }
        assert_eq!(e, probe_encoding(&base(), &probes));
    }

    #[test]
    fn probes_outside_every_rotation() {
        let probes = ProbeSet::ring([0.5, 0.5], 0.3, 10).unwrap();
        for d in -180..180 {
            let g = base().with_rotation_deg(d as f64);
            assert!(probe_encoding(&g, &probes).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn rotation_covariance() {
        let g = base();
        for (k, alpha) in [0.1, -0.7, 2.5].into_iter().enumerate() {
            let gr = g.rotated(alpha);
            for i in 0..100 {
                let p = [
                    0.05 + 0.009 * i as f64,
                    0.95 - 0.0085 * ((i * 7 + k) % 100) as f64,
                ];
                let q = rotate_about(p, g.center, alpha);
                assert!((gr.sdf(q) - g.sdf(p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concavity_mouth_of_base_shape() {
        let g = base();
        assert!((g.min_radius_angle() - PI).abs() < 1e-9);
        let a = 0.2;
        assert!((g.rotated(a).min_radius_angle() - (PI + a)).abs() < 1e-9);
    }

    #[test]
    fn probe_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probes.csv");
        let probes = ProbeSet::ring([0.5, 0.5], 0.3, 10).unwrap();
        probes.write_csv(&path).unwrap();
        assert_eq!(ProbeSet::read_csv(&path).unwrap(), probes);
    }
}
