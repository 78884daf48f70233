//! Reference finite-element solver on a boundary-fitted structured mesh.
//!
//! The mesh is a transfinite polar grid between the inclusion boundary and
//! the unit square: node `(j, k)` sits at radius
//! `R(theta_j) + s_k^gamma (rho_out(theta_j) - R(theta_j))` about the
//! inclusion center, where `rho_out` is the distance to the square along the
//! ray. The grading exponent `gamma` clusters rings near the inclusion.

mod assembly;
mod export;
mod solve;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolarBoundary};

pub use assembly::{assemble, assemble_with_data, p1_element, BoundaryData, ComplexSparseSystem, CsrMatrix};
pub use export::{write_mesh_csv, write_solution_csv};
pub use solve::{solve, solve_mms, solve_system, FemField, FemSolution, MmsReport, RESIDUAL_TOL};

/// Mesh resolution. The defaults give 2,784 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n_theta: usize,
    pub n_s: usize,
    pub grading: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            n_theta: 96,
            n_s: 28,
            grading: 2.0,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 8 || self.n_s < 2 {
            return Err(Error::Config(format!(
                "mesh needs n_theta >= 8 and n_s >= 2 (got {} and {})",
                self.n_theta, self.n_s
            )));
        }
        if !(self.grading >= 1.0) {
            return Err(Error::Config(format!("mesh grading must be >= 1 (got {})", self.grading)));
        }
        Ok(())
    }

    /// Both directions refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_theta: self.n_theta * factor,
            n_s: self.n_s * factor,
            grading: self.grading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeTag {
    /// Inclusion boundary.
    Gamma,
    /// Outer square.
    GammaOut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: EdgeTag,
    /// Unit normal pointing out of the meshed region.
    pub normal: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<BoundaryEdge>,
    geom: PolarBoundary,
    config: MeshConfig,
}

/// Distance from `c` to the boundary of the unit square along direction `theta`.
pub fn ray_to_square(c: Point, theta: f64) -> f64 {
    let (s, co) = theta.sin_cos();
    let mut t = f64::INFINITY;
    for (d, x) in [(co, c[0]), (s, c[1])] {
        if d > 0.0 {
            t = t.min((1.0 - x) / d);
        } else if d < 0.0 {
            t = t.min(-x / d);
        }
    }
    t
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

pub fn build_mesh(geom: &PolarBoundary, cfg: &MeshConfig) -> Result<Mesh> {
    cfg.validate()?;
    geom.validate()?;
    let c = geom.center;
    if !(c[0] > 0.0 && c[0] < 1.0 && c[1] > 0.0 && c[1] < 1.0) {
        return Err(Error::Config("inclusion center must lie inside the unit square".into()));
    }
    let (nt, ns) = (cfg.n_theta, cfg.n_s);
    let mut nodes = Vec::with_capacity(nt * (ns + 1));
    for j in 0..nt {
        let theta = TAU * j as f64 / nt as f64;
        let r_in = geom.radius(theta);
        let r_out = ray_to_square(c, theta);
        let (s, co) = theta.sin_cos();
        for k in 0..=ns {
            let sk = (k as f64 / ns as f64).powf(cfg.grading);
            let r = r_in + sk * (r_out - r_in);
            nodes.push([c[0] + r * co, c[1] + r * s]);
        }
        // Snap the outer ring exactly onto the square.
        let p = &mut nodes[j * (ns + 1) + ns];
        for v in p.iter_mut() {
            if (*v - 1.0).abs() < 1e-12 {
                *v = 1.0;
            } else if v.abs() < 1e-12 {
                *v = 0.0;
            }
        }
    }
    let id = |j: usize, k: usize| (j % nt) * (ns + 1) + k;
    let mut triangles = Vec::with_capacity(2 * nt * ns);
    for j in 0..nt {
        for k in 0..ns {
            let (a, b, cc, d) = (id(j, k), id(j + 1, k), id(j + 1, k + 1), id(j, k + 1));
            for t in [[a, cc, b], [a, d, cc]] {
                let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
                if !(area > 0.0) {
                    return Err(Error::DegenerateCell { j, k, area });
                }
                triangles.push(t);
            }
        }
    }
    let mut edges = Vec::with_capacity(2 * nt);
    for j in 0..nt {
        for (k, tag) in [(0, EdgeTag::Gamma), (ns, EdgeTag::GammaOut)] {
            let (a, b) = (id(j, k), id(j + 1, k));
            let (pa, pb) = (nodes[a], nodes[b]);
            let t = [pb[0] - pa[0], pb[1] - pa[1]];
            let l = t[0].hypot(t[1]);
            // Along increasing theta the meshed region lies to the left of
            // the outer ring and to the right of the inner ring.
            let normal = match tag {
                EdgeTag::GammaOut => [t[1] / l, -t[0] / l],
                EdgeTag::Gamma => [-t[1] / l, t[0] / l],
            };
            edges.push(BoundaryEdge {
                nodes: [a, b],
                tag,
                normal,
            });
        }
    }
    Ok(Mesh {
        nodes,
        triangles,
        edges,
        geom: geom.clone(),
        config: *cfg,
    })
}

impl Mesh {
    pub fn geometry(&self) -> &PolarBoundary {
        &self.geom
    }

    pub fn config(&self) -> MeshConfig {
        self.config
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node index of grid position `(j, k)`.
    pub fn node_at(&self, j: usize, k: usize) -> usize {
        (j % self.config.n_theta) * (self.config.n_s + 1) + k
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let area = signed_area(a, b, c);
        [
            signed_area(p, b, c) / area,
            signed_area(a, p, c) / area,
            signed_area(a, b, p) / area,
        ]
    }

    /// Triangle containing `p` and its barycentric coordinates.
    ///
    /// The cell is guessed from the inverse of the grid map and confirmed by
    /// searching outward through neighbouring cells. Points of the domain
    /// that fall between a boundary chord and the curved boundary are
    /// assigned to the nearest cell.
    pub fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        let outside = || Error::OutsideMesh { x: p[0], y: p[1] };
        let tol = 1e-12;
        if !p.iter().all(|v| v.is_finite() && *v >= -tol && *v <= 1.0 + tol) {
            return Err(outside());
        }
        let (nt, ns) = (self.config.n_theta, self.config.n_s);
        let (r, theta) = self.geom.polar(p);
        let theta = theta.rem_euclid(TAU);
        let j0 = ((theta / TAU * nt as f64).floor() as usize).min(nt - 1);
        let r_in = self.geom.radius(theta);
        let r_out = ray_to_square(self.geom.center, theta);
        let frac = ((r - r_in) / (r_out - r_in)).clamp(0.0, 1.0);
        let k0 = ((frac.powf(1.0 / self.config.grading) * ns as f64).floor() as usize).min(ns - 1);
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for radius in 0..=3usize {
            let ri = radius as isize;
            for dj in -ri..=ri {
                for dk in -ri..=ri {
                    if dj.abs().max(dk.abs()) != ri {
                        continue;
                    }
                    let k = k0 as isize + dk;
                    if k < 0 || k >= ns as isize {
                        continue;
                    }
                    let j = (j0 as isize + dj).rem_euclid(nt as isize) as usize;
                    let cell = 2 * (j * ns + k as usize);
                    for t in [cell, cell + 1] {
                        let l = self.barycentric(t, p);
                        let worst = l.iter().fold(0.0f64, |m, &v| m.max(-v));
                        if worst <= tol {
                            return Ok((t, l));
                        }
                        if best.is_none_or(|b| worst < b.0) {
                            best = Some((worst, t, l));
                        }
                    }
                }
            }
        }
        let (_, t, l) = best.ok_or_else(outside)?;
        if self.geom.sdf(p) < -1e-9 {
            return Err(outside());
        }
        let clamped = l.map(|v| v.max(0.0));
        let s: f64 = clamped.iter().sum();
        Ok((t, clamped.map(|v| v / s)))
    }
}
