//! Incident plane wave, residual operators of the scattering problem, the
//! training loss and the flux diagnostic.
//!
//! The scattered field `W` obeys `mu lap W + rho omega^2 W = 0` in the medium,
//! `mu (dW/dn + dW_inc/dn) = 0` on the rigid inclusion boundary and the
//! first-order absorbing condition `dW/dn - i k0 W = 0` on the square.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diffcore::batch::{CH_LAP, CH_VALUE, CH_X, CH_Y};
use crate::diffcore::{BatchInput, Channels, HiddenTape, Precision, Real};
use crate::error::{Error, Result};
use crate::geometry::{Point, PolarBoundary};
use crate::operator::{merge_adjoint, trunk_batch_input, ComplexSample, DeepOnetModel, MergeGrad, SpatialMode, CHUNK_ROWS};
use crate::sampling::{CollocationSet, OrientedPoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on `|phi|` for points said to lie on the inclusion boundary.
pub const ON_BOUNDARY_TOL: f64 = 1e-8;
const ON_PERIMETER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveParams {
    pub mu0: f64,
    pub rho0: f64,
    /// Carried for completeness; the antiplane problem does not use it.
    pub lambda0: f64,
    pub omega: f64,
    pub amp: f64,
    /// Propagation direction of the incident wave, degrees from the x axis.
    pub direction_deg: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            rho0: 1.0,
            lambda0: 1.0,
            omega: std::f64::consts::TAU,
            amp: 1.0,
            direction_deg: 0.0,
        }
    }
}

impl WaveParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu0", self.mu0), ("rho0", self.rho0), ("omega", self.omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.amp.is_finite() || !self.direction_deg.is_finite() {
            return Err(Error::Config("amp and direction_deg must be finite".into()));
        }
        Ok(())
    }

    /// Shear wavenumber `omega sqrt(rho0 / mu0)`.
    pub fn k0(&self) -> f64 {
        self.omega * (self.rho0 / self.mu0).sqrt()
    }

    /// Unit propagation direction.
    pub fn direction(&self) -> Point {
        let t = self.direction_deg.to_radians();
        [t.cos(), t.sin()]
    }

    /// Parameters with wavenumber `k0` at unit density and modulus.
    pub fn with_k0(k0: f64) -> Self {
        Self {
            omega: k0,
            ..Self::default()
        }
    }
}

/// Plane wave `amp exp(i k0 d.p)` and its gradient.
pub fn incident_field(wp: &WaveParams, p: Point) -> (Complex64, [Complex64; 2]) {
    let d = wp.direction();
    let k0 = wp.k0();
    let v = wp.amp * Complex64::from_polar(1.0, k0 * (d[0] * p[0] + d[1] * p[1]));
    (v, [I * k0 * d[0] * v, I * k0 * d[1] * v])
}

/// Anything that yields a field value with gradient and Laplacian at a point.
pub trait FieldEvaluator {
    fn sample(&self, p: Point) -> Result<ComplexSample>;
}

/// Closed-form plane wave `amp exp(i k d.p)`, an exact Helmholtz solution.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub k: f64,
    pub d: Point,
    pub amp: f64,
}

impl PlaneWave {
    pub fn incident(wp: &WaveParams) -> Self {
        Self {
            k: wp.k0(),
            d: wp.direction(),
            amp: wp.amp,
        }
    }

    pub fn at(&self, p: Point) -> ComplexSample {
        let v = self.amp * Complex64::from_polar(1.0, self.k * (self.d[0] * p[0] + self.d[1] * p[1]));
        ComplexSample {
            value: v,
            grad: Some([I * self.k * self.d[0] * v, I * self.k * self.d[1] * v]),
            lap: Some(-self.k * self.k * v),
        }
    }
}

impl FieldEvaluator for PlaneWave {
    fn sample(&self, p: Point) -> Result<ComplexSample> {
        Ok(self.at(p))
    }
}

/// A trained model restricted to one geometry.
pub struct ModelField<'a> {
    pub model: &'a DeepOnetModel,
    pub geom: &'a PolarBoundary,
    pub encoding: Vec<f64>,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a DeepOnetModel, geom: &'a PolarBoundary) -> Self {
        Self {
            model,
            geom,
            encoding: model.encode(geom),
        }
    }
}

impl FieldEvaluator for ModelField<'_> {
    fn sample(&self, p: Point) -> Result<ComplexSample> {
        self.model.evaluate_with_derivatives(self.geom, &self.encoding, p)
    }
}

fn need_grad(s: &ComplexSample) -> [Complex64; 2] {
    s.grad.expect("field sample without gradient")
}

/// `mu lap W + rho omega^2 W`.
pub fn helmholtz_residual(wp: &WaveParams, s: &ComplexSample) -> Complex64 {
    wp.mu0 * s.lap.expect("field sample without Laplacian") + wp.rho0 * wp.omega * wp.omega * s.value
}

/// `mu (dW/dn + dW_inc/dn)` at boundary point `p` with unit normal `n`.
pub fn rigid_residual(wp: &WaveParams, s: &ComplexSample, p: Point, n: Point) -> Complex64 {
    let g = need_grad(s);
    let (_, gi) = incident_field(wp, p);
    wp.mu0 * (n[0] * (g[0] + gi[0]) + n[1] * (g[1] + gi[1]))
}

/// `dW/dn - i k0 W` with outward unit normal `n`.
pub fn absorbing_residual(wp: &WaveParams, s: &ComplexSample, n: Point) -> Complex64 {
    let g = need_grad(s);
    n[0] * g[0] + n[1] * g[1] - I * wp.k0() * s.value
}

pub fn pde_residual(field: &dyn FieldEvaluator, geom: &PolarBoundary, wp: &WaveParams, p: Point) -> Result<Complex64> {
    let phi = geom.sdf(p);
    if !(phi > 0.0) {
        return Err(Error::InsideInclusion { x: p[0], y: p[1], phi });
    }
    Ok(helmholtz_residual(wp, &field.sample(p)?))
}

pub fn rigid_bc_residual(
    field: &dyn FieldEvaluator,
    geom: &PolarBoundary,
    wp: &WaveParams,
    p: Point,
    n: Point,
) -> Result<Complex64> {
    let phi = geom.sdf(p);
    if phi.abs() > ON_BOUNDARY_TOL {
        return Err(Error::OffBoundary { x: p[0], y: p[1], phi: phi.abs() });
    }
    Ok(rigid_residual(wp, &field.sample(p)?, p, n))
}

pub fn on_perimeter(p: Point) -> bool {
    let inside = p.iter().all(|&c| (-ON_PERIMETER_TOL..=1.0 + ON_PERIMETER_TOL).contains(&c));
    let dist = p[0].min(p[1]).min(1.0 - p[0]).min(1.0 - p[1]).abs();
    inside && dist <= ON_PERIMETER_TOL
}

pub fn absorbing_bc_residual(field: &dyn FieldEvaluator, wp: &WaveParams, p: Point, n: Point) -> Result<Complex64> {
    if !on_perimeter(p) {
        return Err(Error::OffPerimeter { x: p[0], y: p[1] });
    }
    Ok(absorbing_residual(wp, &field.sample(p)?, n))
}

/// Divergence of the flux `J = conj(W) mu grad W - W mu grad conj(W)`.
///
/// `J` is purely imaginary, and the gradient cross terms cancel, so
/// `div J = i 2 mu Im(conj(W) lap W)`. The returned real number is the
/// coefficient of `i`.
pub fn flux_divergence(field: &dyn FieldEvaluator, wp: &WaveParams, p: Point) -> Result<f64> {
    let s = field.sample(p)?;
    let lap = s.lap.expect("field sample without Laplacian");
    Ok(2.0 * wp.mu0 * (s.value.conj() * lap).im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pde: f64,
    pub gamma: f64,
    pub gamma_out: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pde: 1.0,
            gamma: 1.0,
            gamma_out: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub pde: f64,
    pub gamma: f64,
    pub gamma_out: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossReport {
    fn new(pde: f64, gamma: f64, gamma_out: f64, weights: LossWeights) -> Self {
        Self {
            pde,
            gamma,
            gamma_out,
            total: weights.pde * pde + weights.gamma * gamma + weights.gamma_out * gamma_out,
            weights,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.pde, self.gamma, self.gamma_out, self.total].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
/// One tape per term keeps buffer sizes stable from chunk to chunk.
enum Term {
    Pde,
    Gamma,
    GammaOut,
}

/// One batch of points of a single kind.
#[derive(Debug, Clone)]
struct Chunk {
    term: Term,
    input: BatchInput,
    input32: Option<BatchInput<f32>>,
    normals: Vec<Point>,
    /// `i k0 (d.n) W_inc` at each rigid-boundary point.
    incident_flux: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct GeometryBatch {
    encoding: Vec<f64>,
    chunks: Vec<Chunk>,
}

/// The physics loss over a fixed family of geometries and point sets, with
/// trunk inputs precomputed in batches.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    wp: WaveParams,
    weights: LossWeights,
    mode: SpatialMode,
    precision: Precision,
    geoms: Vec<GeometryBatch>,
    counts: [usize; 3],
}

impl TrainingProblem {
    pub fn new(
        model: &DeepOnetModel,
        sets: &[(PolarBoundary, CollocationSet)],
        wp: &WaveParams,
        weights: LossWeights,
    ) -> Result<Self> {
        wp.validate()?;
        let mode = model.spatial_mode();
        let k0 = wp.k0();
        let d = wp.direction();
        let mut counts = [0; 3];
        let mut geoms = Vec::with_capacity(sets.len());
        for (geom, set) in sets {
            let mut chunks = Vec::new();
            let pde: Vec<Point> = set.interior.iter().chain(&set.band).copied().collect();
            counts[0] += pde.len();
            counts[1] += set.inner.len();
            counts[2] += set.outer.len();
            for c in pde.chunks(CHUNK_ROWS) {
                chunks.push(Chunk {
                    term: Term::Pde,
                    input: trunk_batch_input(geom, c, Channels::Laplacian, mode)?,
                    input32: None,
                    normals: Vec::new(),
                    incident_flux: Vec::new(),
                });
            }
            for (term, pts) in [(Term::Gamma, &set.inner), (Term::GammaOut, &set.outer)] {
                for c in pts.chunks(CHUNK_ROWS) {
                    let p: Vec<Point> = c.iter().map(|o| o.p).collect();
                    let incident_flux = if term == Term::Gamma {
                        c.iter()
                            .map(|o: &OrientedPoint| {
                                let (w, _) = incident_field(wp, o.p);
                                I * k0 * (d[0] * o.n[0] + d[1] * o.n[1]) * w
                            })
                            .collect()
                    } else {
                        Vec::new()
                    };
                    chunks.push(Chunk {
                        term,
                        input: trunk_batch_input(geom, &p, Channels::Gradient, mode)?,
                        input32: None,
                        normals: c.iter().map(|o| o.n).collect(),
                        incident_flux,
                    });
                }
            }
            geoms.push(GeometryBatch {
                encoding: model.encode(geom),
                chunks,
            });
        }
        let enabled = [
            (weights.pde, counts[0], "interior"),
            (weights.gamma, counts[1], "inner boundary"),
            (weights.gamma_out, counts[2], "outer boundary"),
        ];
        for (w, n, what) in enabled {
            if w != 0.0 && n == 0 {
                return Err(Error::EmptyPointSet { what });
            }
        }
        Ok(Self {
            wp: wp.clone(),
            weights,
            mode,
            precision: Precision::F64,
            geoms,
            counts,
        })
    }

    /// Selects the arithmetic of the trunk hidden layers. Everything else,
    /// including the collapsed final layer and all accumulations, stays f64.
    pub fn with_precision(mut self, precision: Precision) -> Self {
        for c in self.geoms.iter_mut().flat_map(|g| g.chunks.iter_mut()) {
            c.input32 = match precision {
                Precision::F64 => None,
                Precision::F32 => Some(c.input.cast()),
            };
        }
        self.precision = precision;
        self
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// Point counts for the pde, gamma and gamma_out terms.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn loss(&self, model: &DeepOnetModel) -> Result<LossReport> {
        self.run(model, None)
    }

    /// Loss and its gradient with respect to every model parameter.
    /// `grad` is overwritten.
    pub fn loss_and_grad(&self, model: &DeepOnetModel, grad: &mut [f64]) -> Result<LossReport> {
        if grad.len() != model.param_count() {
            return Err(Error::Dimension {
                context: "gradient buffer",
                expected: model.param_count(),
                got: grad.len(),
            });
        }
        grad.fill(0.0);
        self.run(model, Some(grad))
    }

    fn run(&self, model: &DeepOnetModel, grad: Option<&mut [f64]>) -> Result<LossReport> {
        if model.spatial_mode() != self.mode {
            return Err(Error::Config(format!(
                "training problem was built for {} mode but the model uses {} mode",
                self.mode,
                model.spatial_mode()
            )));
        }
        match self.precision {
            Precision::F64 => self.run_with(model, model.trunk_params(), |c| &c.input, grad),
            Precision::F32 => {
                let tp: Vec<f32> = model.trunk_params().iter().map(|&v| v as f32).collect();
                self.run_with(model, &tp, |c| c.input32.as_ref().expect("f32 inputs"), grad)
            }
        }
    }

    fn run_with<T: Real>(
        &self,
        model: &DeepOnetModel,
        trunk_params: &[T],
        input: impl Fn(&Chunk) -> &BatchInput<T>,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossReport> {
        let wp = &self.wp;
        let mu = wp.mu0;
        let rw2 = wp.rho0 * wp.omega * wp.omega;
        let k0 = wp.k0();
        let w = self.weights;
        let scale = |n: usize, wt: f64| if n == 0 { 0.0 } else { 2.0 * wt / n as f64 };
        let s_pde = scale(self.counts[0], w.pde);
        let s_gam = scale(self.counts[1], w.gamma);
        let s_out = scale(self.counts[2], w.gamma_out);
        let mut sums = [0.0; 3];
        let mut tapes: [HiddenTape<T>; 3] = Default::default();
        let mut h_adj = Vec::new();
        let mut trunk_grad = vec![T::ZERO; if grad.is_some() { trunk_params.len() } else { 0 }];
        for g in &self.geoms {
            let mut pass = model.branch_pass(&g.encoding)?;
            let merge = model.merge(&pass.beta);
            let mut acc = MergeGrad::zeros(merge.hidden_width());
            for c in &g.chunks {
                let inp = input(c);
                let tape = &mut tapes[c.term as usize];
                let rows = inp.rows;
                let n_ch = inp.channels.count();
                tape.forward(model.trunk(), trunk_params, inp);
                let (re, im) = merge.apply(tape.last_hidden(), rows, n_ch);
                let at = |v: &[f64], ch: usize, r: usize| v[ch * rows + r];
                let mut adj_re = vec![0.0; rows * n_ch];
                let mut adj_im = vec![0.0; rows * n_ch];
                let mut sum = 0.0;
                match c.term {
                    Term::Pde => {
                        for r in 0..rows {
                            let rr = mu * at(&re, CH_LAP, r) + rw2 * at(&re, CH_VALUE, r);
                            let ri = mu * at(&im, CH_LAP, r) + rw2 * at(&im, CH_VALUE, r);
                            sum += rr * rr + ri * ri;
                            adj_re[CH_VALUE * rows + r] = s_pde * rr * rw2;
                            adj_re[CH_LAP * rows + r] = s_pde * rr * mu;
                            adj_im[CH_VALUE * rows + r] = s_pde * ri * rw2;
                            adj_im[CH_LAP * rows + r] = s_pde * ri * mu;
                        }
                        sums[0] += sum;
                    }
                    Term::Gamma => {
                        for r in 0..rows {
                            let [nx, ny] = c.normals[r];
                            let f = c.incident_flux[r];
                            let rr = mu * (nx * at(&re, CH_X, r) + ny * at(&re, CH_Y, r) + f.re);
                            let ri = mu * (nx * at(&im, CH_X, r) + ny * at(&im, CH_Y, r) + f.im);
                            sum += rr * rr + ri * ri;
                            adj_re[CH_X * rows + r] = s_gam * rr * mu * nx;
                            adj_re[CH_Y * rows + r] = s_gam * rr * mu * ny;
                            adj_im[CH_X * rows + r] = s_gam * ri * mu * nx;
                            adj_im[CH_Y * rows + r] = s_gam * ri * mu * ny;
                        }
                        sums[1] += sum;
                    }
                    Term::GammaOut => {
                        for r in 0..rows {
                            let [nx, ny] = c.normals[r];
                            let dn_re = nx * at(&re, CH_X, r) + ny * at(&re, CH_Y, r);
                            let dn_im = nx * at(&im, CH_X, r) + ny * at(&im, CH_Y, r);
                            let rr = dn_re + k0 * at(&im, CH_VALUE, r);
                            let ri = dn_im - k0 * at(&re, CH_VALUE, r);
                            sum += rr * rr + ri * ri;
                            adj_re[CH_X * rows + r] = s_out * rr * nx;
                            adj_re[CH_Y * rows + r] = s_out * rr * ny;
                            adj_im[CH_VALUE * rows + r] = s_out * rr * k0;
                            adj_im[CH_X * rows + r] = s_out * ri * nx;
                            adj_im[CH_Y * rows + r] = s_out * ri * ny;
                            adj_re[CH_VALUE * rows + r] = -s_out * ri * k0;
                        }
                        sums[2] += sum;
                    }
                }
                if grad.is_some() {
                    merge_adjoint(&merge, tape.last_hidden(), &adj_re, &adj_im, rows, &mut acc, &mut h_adj);
                    tape.backward(model.trunk(), trunk_params, &h_adj, &mut trunk_grad);
                }
            }
            if let Some(grad) = grad.as_deref_mut() {
                let d_beta = model.merge_backward(&pass.beta, &acc, grad);
                model.branch_backward(&mut pass, &d_beta, grad);
            }
        }
        if let Some(grad) = grad {
            for (g, v) in grad[model.trunk_range()].iter_mut().zip(&trunk_grad) {
                *g += v.to_f64();
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        Ok(LossReport::new(
            mean(sums[0], self.counts[0]),
            mean(sums[1], self.counts[1]),
            mean(sums[2], self.counts[2]),
            w,
        ))
    }
}

/// The physics loss of `model` over the given geometries and point sets.
pub fn total_loss(
    model: &DeepOnetModel,
    sets: &[(PolarBoundary, CollocationSet)],
    wp: &WaveParams,
    weights: LossWeights,
) -> Result<LossReport> {
    TrainingProblem::new(model, sets, wp, weights)?.loss(model)
}

/// Point-by-point loss through the generic jet engine. Slow; used as an
/// independent check of the batched path.
pub fn total_loss_pointwise(
    model: &DeepOnetModel,
    sets: &[(PolarBoundary, CollocationSet)],
    wp: &WaveParams,
    weights: LossWeights,
) -> Result<LossReport> {
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (geom, set) in sets {
        let field = ModelField::new(model, geom);
        for &p in set.interior.iter().chain(&set.band) {
            sums[0] += pde_residual(&field, geom, wp, p)?.norm_sqr();
            counts[0] += 1;
        }
        for o in &set.inner {
            sums[1] += rigid_residual(wp, &field.sample(o.p)?, o.p, o.n).norm_sqr();
            counts[1] += 1;
        }
        for o in &set.outer {
            sums[2] += absorbing_bc_residual(&field, wp, o.p, o.n)?.norm_sqr();
            counts[2] += 1;
        }
    }
    let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 };
    Ok(LossReport::new(mean(0), mean(1), mean(2), weights))
}

#[cfg(test)]
mod tests;
