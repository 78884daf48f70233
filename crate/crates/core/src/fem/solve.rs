use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use super::assembly::{assemble, assemble_with_data, BoundaryData, ComplexSparseSystem};
use super::{build_mesh, Mesh, MeshConfig};
use crate::error::{Error, Result};
use crate::geometry::{Point, PolarBoundary};
use crate::operator::ComplexSample;
use crate::physics::{FieldEvaluator, WaveParams};

pub const RESIDUAL_TOL: f64 = 1e-10;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Sparse LU solve followed by a residual check.
pub fn solve_system(system: &ComplexSparseSystem) -> Result<Vec<Complex64>> {
    let a = &system.matrix;
    let n = a.n;
    if system.rhs.len() != n {
        return Err(Error::Dimension {
            context: "right-hand side",
            expected: n,
            got: system.rhs.len(),
        });
    }
    let b_norm = norm(&system.rhs);
    if b_norm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let trip: Vec<_> = a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let m = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Singular { detail: format!("{e:?}") })?;
    let lu = m.sp_lu().map_err(|e| Error::Singular { detail: format!("{e:?}") })?;
    let b = Mat::<Complex64>::from_fn(n, 1, |i, _| system.rhs[i]);
    let x = lu.solve(&b);
    let x: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Singular {
            detail: format!("non-finite solution entry {i}; the factorization met a zero pivot"),
        });
    }
    let ax = a.mul_vec(&x);
    let r: Vec<Complex64> = ax.iter().zip(&system.rhs).map(|(p, q)| p - q).collect();
    let residual = norm(&r) / b_norm;
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::SolveResidual {
            residual,
            tolerance: RESIDUAL_TOL,
        });
    }
    Ok(x)
}

/// Nodal values of the scattered field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub mesh: Mesh,
    pub values: Vec<Complex64>,
}

/// Assembles and solves the scattering problem for `geom`.
pub fn solve(geom: &PolarBoundary, cfg: &MeshConfig, wp: &WaveParams) -> Result<FemSolution> {
    let mesh = build_mesh(geom, cfg)?;
    let values = solve_system(&assemble(&mesh, wp)?)?;
    Ok(FemSolution { mesh, values })
}

impl FemSolution {
    pub fn field_at(&self, p: Point) -> Result<Complex64> {
        let (t, l) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[t];
        Ok((0..3).map(|i| self.values[tri[i]] * l[i]).sum())
    }

    /// Scattered field at every node.
    pub fn nodal(&self) -> &[Complex64] {
        &self.values
    }
}

/// A manufactured-solution run.
#[derive(Debug, Clone)]
pub struct MmsReport {
    pub solution: FemSolution,
    /// Nodal relative L2 error `|W_h - W| / |W|`.
    pub relative_error: f64,
}

struct Manufactured<'a> {
    exact: &'a dyn FieldEvaluator,
    k0: f64,
}

impl Manufactured<'_> {
    fn grad(&self, p: Point) -> (Complex64, [Complex64; 2]) {
        let s = self.exact.sample(p).expect("exact field must be defined on the boundary");
        (s.value, s.grad.expect("exact field must provide a gradient"))
    }
}

impl BoundaryData for Manufactured<'_> {
    fn neumann(&self, p: Point, nu: Point) -> Complex64 {
        let (_, g) = self.grad(p);
        g[0] * nu[0] + g[1] * nu[1]
    }

    fn robin(&self, p: Point, nu: Point) -> Complex64 {
        let (w, g) = self.grad(p);
        g[0] * nu[0] + g[1] * nu[1] - Complex64::new(0.0, self.k0) * w
    }
}

/// Solves with boundary data taken from `exact`, a Helmholtz solution with
/// gradient, and measures the nodal error.
pub fn solve_mms(mesh: &Mesh, wp: &WaveParams, exact: &dyn FieldEvaluator) -> Result<MmsReport> {
    wp.validate()?;
    let data = Manufactured { exact, k0: wp.k0() };
    let values = solve_system(&assemble_with_data(mesh, wp, &data)?)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, v) in mesh.nodes.iter().zip(&values) {
        let w = exact.sample(*p)?.value;
        num += (v - w).norm_sqr();
        den += w.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(MmsReport {
        solution: FemSolution {
            mesh: mesh.clone(),
            values,
        },
        relative_error: (num / den).sqrt(),
    })
}

/// The interpolated solution as a field with finite-difference
/// derivatives. `step` should span a few cells, since the interpolant is
/// only piecewise linear.
pub struct FemField<'a> {
    pub solution: &'a FemSolution,
    pub step: f64,
}

impl FieldEvaluator for FemField<'_> {
    fn sample(&self, p: Point) -> Result<ComplexSample> {
        let h = self.step;
        let f = |dx: f64, dy: f64| self.solution.field_at([p[0] + dx, p[1] + dy]);
        let c = f(0.0, 0.0)?;
        let (xp, xm, yp, ym) = (f(h, 0.0)?, f(-h, 0.0)?, f(0.0, h)?, f(0.0, -h)?);
        Ok(ComplexSample {
            value: c,
            grad: Some([(xp - xm) / (2.0 * h), (yp - ym) / (2.0 * h)]),
            lap: Some((xp + xm + yp + ym - 4.0 * c) / (h * h)),
        })
    }
}
