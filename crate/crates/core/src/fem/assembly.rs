use num_complex::Complex64;

use super::{EdgeTag, Mesh};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::physics::{incident_field, WaveParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Row-compressed complex matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl CsrMatrix {
    /// Sums duplicate entries in the order given.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, Complex64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let row = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[row.clone()].binary_search(&c) {
            Ok(i) => self.vals[row.start + i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|i| self.vals[i] * x[self.cols[i]])
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.vals.len());
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push((self.cols[i], r, self.vals[i]));
            }
        }
        Self::from_triplets(self.n, t)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.cols[i], self.vals[i])))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<Complex64>,
}

impl ComplexSparseSystem {
    /// Entrywise complex conjugate of matrix and right-hand side.
    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.matrix.vals.iter_mut().for_each(|v| *v = v.conj());
        out.rhs.iter_mut().for_each(|v| *v = v.conj());
        out
    }
}

/// Boundary data of the weak form, with `nu` the unit normal pointing out
/// of the meshed region.
pub trait BoundaryData {
    /// Neumann data `d W / d nu` on the inclusion boundary.
    fn neumann(&self, p: Point, nu: Point) -> Complex64;
    /// Robin data `d W / d nu - i k0 W` on the outer square.
    fn robin(&self, p: Point, nu: Point) -> Complex64;
}

/// Data of the scattering problem: the scattered field cancels the normal
/// derivative of the incident wave on the inclusion and is absorbed at
/// the square.
struct Scattering<'a>(&'a WaveParams);

impl BoundaryData for Scattering<'_> {
    fn neumann(&self, p: Point, nu: Point) -> Complex64 {
        let (_, g) = incident_field(self.0, p);
        -(g[0] * nu[0] + g[1] * nu[1])
    }

    fn robin(&self, _p: Point, _nu: Point) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

/// Stiffness `int grad phi_i . grad phi_j` and mass `int phi_i phi_j` of a
/// linear triangle.
pub fn p1_element(p: [Point; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
    let mut grad = [[0.0; 2]; 3];
    for i in 0..3 {
        let (b, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        grad[i] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    (k, m)
}

fn check_boundary(mesh: &Mesh) -> Result<()> {
    let mut count = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
        }
    }
    let tagged: std::collections::HashSet<_> = mesh
        .edges
        .iter()
        .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
        .collect();
    let mut open: Vec<_> = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
    open.sort_unstable();
    match open.into_iter().find(|e| !tagged.contains(e)) {
        Some((a, b)) => Err(Error::UntaggedEdge { a, b }),
        None => Ok(()),
    }
}

/// The scattering system `(rho w^2 M - mu K + i mu k0 M_out) W = b`.
pub fn assemble(mesh: &Mesh, wp: &WaveParams) -> Result<ComplexSparseSystem> {
    assemble_with_data(mesh, wp, &Scattering(wp))
}

/// Same operator with general boundary data: `b = -mu int_out g phi - mu int_Gamma h phi`.
pub fn assemble_with_data(mesh: &Mesh, wp: &WaveParams, data: &dyn BoundaryData) -> Result<ComplexSparseSystem> {
    wp.validate()?;
    check_boundary(mesh)?;
    let mu = wp.mu0;
    let rw2 = wp.rho0 * wp.omega * wp.omega;
    let k0 = wp.k0();
    let n = mesh.node_count();
    let mut t = Vec::with_capacity(9 * mesh.triangles.len() + 4 * mesh.edges.len());
    for tri in &mesh.triangles {
        let (k, m) = p1_element(tri.map(|i| mesh.nodes[i]));
        for a in 0..3 {
            for b in 0..3 {
                t.push((tri[a], tri[b], Complex64::new(rw2 * m[a][b] - mu * k[a][b], 0.0)));
            }
        }
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    let g = 0.5 / 3f64.sqrt();
    for e in &mesh.edges {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        if e.tag == EdgeTag::GammaOut {
            let c = I * mu * k0 * len / 6.0;
            t.push((a, a, 2.0 * c));
            t.push((a, b, c));
            t.push((b, a, c));
            t.push((b, b, 2.0 * c));
        }
        for s in [0.5 - g, 0.5 + g] {
            let p = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let v = match e.tag {
                EdgeTag::Gamma => data.neumann(p, e.normal),
                EdgeTag::GammaOut => data.robin(p, e.normal),
            };
            let w = -mu * v * (0.5 * len);
            rhs[a] += w * (1.0 - s);
            rhs[b] += w * s;
        }
    }
    Ok(ComplexSparseSystem {
        matrix: CsrMatrix::from_triplets(n, t),
        rhs,
    })
}
