//! The geometry-to-field operator network.
//!
//! A branch MLP reads the probe encoding of a geometry, a trunk MLP reads
//! local features `(x, y, phi, phi_x, phi_y)` of a query point, and the two
//! latent vectors of width `2p` are merged by two dot products: the first
//! `p` slots give the real part of the scattered field, the last `p` the
//! imaginary part.

mod batched;
mod checkpoint;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Jet2, Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::geometry::{probe_encoding, JetOrder, Point, PolarBoundary, ProbeSet};

pub use batched::{merge_adjoint, trunk_batch_input, BranchPass, Merge, MergeGrad, CHUNK_ROWS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, CHECKPOINT_VERSION};

pub const TRUNK_INPUTS: usize = 5;

/// How spatial derivatives treat the distance features of the trunk input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialMode {
    /// Differentiate with respect to the raw coordinates only.
    #[default]
    Partial,
    /// Chain rule through `phi` and its gradient as well.
    Total,
}

impl fmt::Display for SpatialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpatialMode::Partial => "partial",
            SpatialMode::Total => "total",
        })
    }
}

impl FromStr for SpatialMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial" => Ok(SpatialMode::Partial),
            "total" => Ok(SpatialMode::Total),
            other => Err(Error::Config(format!("unknown spatial mode `{other}` (expected partial or total)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    /// `p`: each of the two field channels uses `p` latent slots.
    pub latent: usize,
    pub activation: String,
    pub spatial_mode: SpatialMode,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            branch_hidden: vec![100; 4],
            trunk_hidden: vec![100; 4],
            latent: 100,
            activation: "tanh".into(),
            spatial_mode: SpatialMode::Partial,
        }
    }
}

impl ModelSpec {
    /// Uniform hidden width for both networks.
    pub fn uniform(width: usize, depth: usize, latent: usize) -> Self {
        Self {
            branch_hidden: vec![width; depth],
            trunk_hidden: vec![width; depth],
            latent,
            ..Self::default()
        }
    }

    pub fn branch_spec(&self, n_probes: usize) -> MlpSpec {
        let mut w = vec![n_probes];
        w.extend(&self.branch_hidden);
        w.push(2 * self.latent);
        MlpSpec::new(w, self.activation.clone())
    }

    pub fn trunk_spec(&self) -> MlpSpec {
        let mut w = vec![TRUNK_INPUTS];
        w.extend(&self.trunk_hidden);
        w.push(2 * self.latent);
        MlpSpec::new(w, self.activation.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 {
            return Err(Error::Config("latent width p must be positive".into()));
        }
        if self.branch_hidden.is_empty() || self.trunk_hidden.is_empty() {
            return Err(Error::Config("branch and trunk need at least one hidden layer".into()));
        }
        self.branch_spec(1).validate()?;
        self.trunk_spec().validate()
    }
}

/// Local trunk input at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrunkFeatures {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub phi_x: f64,
    pub phi_y: f64,
}

impl TrunkFeatures {
    pub fn at(geom: &PolarBoundary, p: Point) -> Result<Self> {
        let j = geom.sdf_jet(p, JetOrder::First)?;
        Ok(Self {
            x: p[0],
            y: p[1],
            phi: j.value,
            phi_x: j.grad[0],
            phi_y: j.grad[1],
        })
    }

    pub fn to_array(self) -> [f64; TRUNK_INPUTS] {
        [self.x, self.y, self.phi, self.phi_x, self.phi_y]
    }
}

/// Field value with optional spatial gradient and Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexSample {
    pub value: Complex64,
    pub grad: Option<[Complex64; 2]>,
    pub lap: Option<Complex64>,
}

impl ComplexSample {
    pub fn value_only(value: Complex64) -> Self {
        Self {
            value,
            grad: None,
            lap: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        let f = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        f(self.value) && self.grad.is_none_or(|g| f(g[0]) && f(g[1])) && self.lap.is_none_or(f)
    }
}

/// Trunk input jets with respect to `(x, y)`.
///
/// In partial mode only the coordinates carry derivatives. In total mode the
/// distance features are differentiated too, which needs the distance to
/// third order.
pub fn trunk_input_jets(geom: &PolarBoundary, p: Point, mode: SpatialMode) -> Result<Vec<Jet2>> {
    match mode {
        SpatialMode::Partial => {
            let f = TrunkFeatures::at(geom, p)?;
            Ok(vec![
                Jet2::variable(f.x, 0, 2),
                Jet2::variable(f.y, 1, 2),
                Jet2::constant(f.phi, 2),
                Jet2::constant(f.phi_x, 2),
                Jet2::constant(f.phi_y, 2),
            ])
        }
        SpatialMode::Total => {
            let s = geom.sdf_jet(p, JetOrder::Third)?;
            let h = s.hess;
            let t = s.third.expect("third order requested");
            let jet = |value: f64, d: [f64; 2], d2: [f64; 4]| Jet2 {
                value,
                d: d.to_vec(),
                d2: d2.to_vec(),
            };
            Ok(vec![
                Jet2::variable(p[0], 0, 2),
                Jet2::variable(p[1], 1, 2),
                jet(s.value, s.grad, [h[0][0], h[0][1], h[1][0], h[1][1]]),
                jet(s.grad[0], [h[0][0], h[0][1]], [t[0], t[1], t[1], t[2]]),
                jet(s.grad[1], [h[1][0], h[1][1]], [t[1], t[2], t[2], t[3]]),
            ])
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeepOnetModel {
    spec: ModelSpec,
    probes: ProbeSet,
    branch: Mlp,
    trunk: Mlp,
    /// Branch parameters, then trunk parameters, then the two output biases.
    params: Vec<f64>,
    seed: u64,
}

impl DeepOnetModel {
    /// A model with every parameter zero.
    pub fn zeros(spec: ModelSpec, probes: ProbeSet) -> Result<Self> {
        spec.validate()?;
        probes.validate()?;
        let branch = Mlp::new(spec.branch_spec(probes.len()))?;
        let trunk = Mlp::new(spec.trunk_spec())?;
        let n = branch.param_count() + trunk.param_count() + 2;
        Ok(Self {
            spec,
            probes,
            branch,
            trunk,
            params: vec![0.0; n],
            seed: 0,
        })
    }

    /// Uniform weights with variance `gain^2 * 2 / (fan_in + fan_out)`,
    /// zero biases. The activation gain is used on hidden layers, 1 on the
    /// output layers.
    pub fn init(spec: ModelSpec, probes: ProbeSet, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(spec, probes)?;
        m.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(16);
        let gain = m.branch.activation().init_gain();
        let b_off = m.branch.param_count();
        for (net, off) in [(&m.branch, 0), (&m.trunk, b_off)] {
            let last = net.layers().len() - 1;
            for (l, sh) in net.layers().iter().enumerate() {
                let g = if l < last { gain } else { 1.0 };
                let a = g * (6.0 / (sh.n_in + sh.n_out) as f64).sqrt();
                for w in &mut m.params[off + sh.w_offset..off + sh.b_offset] {
                    *w = a * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn probes(&self) -> &ProbeSet {
        &self.probes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spatial_mode(&self) -> SpatialMode {
        self.spec.spatial_mode
    }

    pub fn set_spatial_mode(&mut self, mode: SpatialMode) {
        self.spec.spatial_mode = mode;
    }

    pub fn latent(&self) -> usize {
        self.spec.latent
    }

    pub fn branch(&self) -> &Mlp {
        &self.branch
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "model parameters",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn branch_range(&self) -> std::ops::Range<usize> {
        0..self.branch.param_count()
    }

    pub fn trunk_range(&self) -> std::ops::Range<usize> {
        let b = self.branch.param_count();
        b..b + self.trunk.param_count()
    }

    /// Offset of `(bias_re, bias_im)`.
    pub fn bias_offset(&self) -> usize {
        self.params.len() - 2
    }

    pub fn branch_params(&self) -> &[f64] {
        &self.params[self.branch_range()]
    }

    pub fn trunk_params(&self) -> &[f64] {
        &self.params[self.trunk_range()]
    }

    pub fn bias(&self) -> [f64; 2] {
        let o = self.bias_offset();
        [self.params[o], self.params[o + 1]]
    }

    pub fn encode(&self, geom: &PolarBoundary) -> Vec<f64> {
        probe_encoding(geom, &self.probes)
    }

    fn check_encoding(&self, encoding: &[f64]) -> Result<()> {
        if encoding.len() != self.probes.len() {
            return Err(Error::Dimension {
                context: "branch encoding",
                expected: self.probes.len(),
                got: encoding.len(),
            });
        }
        Ok(())
    }

    /// Branch latent vector of length `2p`.
    pub fn branch_latent(&self, encoding: &[f64]) -> Result<Vec<f64>> {
        self.check_encoding(encoding)?;
        self.branch.forward(self.branch_params(), encoding)
    }

    pub fn evaluate(&self, encoding: &[f64], feats: &TrunkFeatures) -> Result<ComplexSample> {
        let b = self.branch_latent(encoding)?;
        let t = self.trunk.forward(self.trunk_params(), &feats.to_array())?;
        let p = self.spec.latent;
        let [br, bi] = self.bias();
        let re = b[..p].iter().zip(&t[..p]).map(|(u, v)| u * v).sum::<f64>() + br;
        let im = b[p..].iter().zip(&t[p..]).map(|(u, v)| u * v).sum::<f64>() + bi;
        Ok(ComplexSample::value_only(Complex64::new(re, im)))
    }

    /// Value, gradient and Laplacian at `p` in the model's spatial mode.
    pub fn evaluate_with_derivatives(&self, geom: &PolarBoundary, encoding: &[f64], p: Point) -> Result<ComplexSample> {
        self.evaluate_with_derivatives_in(geom, encoding, p, self.spec.spatial_mode)
    }

    pub fn evaluate_with_derivatives_in(
        &self,
        geom: &PolarBoundary,
        encoding: &[f64],
        p: Point,
        mode: SpatialMode,
    ) -> Result<ComplexSample> {
        let b = self.branch_latent(encoding)?;
        let jets = trunk_input_jets(geom, p, mode)?;
        let t = self.trunk.forward_jet(self.trunk_params(), &jets)?;
        let q = self.spec.latent;
        let [br, bi] = self.bias();
        let merge = |range: std::ops::Range<usize>, f: &dyn Fn(&Jet2) -> f64| -> f64 {
            range.map(|j| b[j] * f(&t[j])).sum()
        };
        let ch = |f: &dyn Fn(&Jet2) -> f64| Complex64::new(merge(0..q, f), merge(q..2 * q, f));
        let value = ch(&|j| j.value) + Complex64::new(br, bi);
        let grad = [ch(&|j| j.d[0]), ch(&|j| j.d[1])];
        let lap = ch(&|j| j.laplacian());
        Ok(ComplexSample {
            value,
            grad: Some(grad),
            lap: Some(lap),
        })
    }

    /// Field values at many points, evaluated in fixed-size batches.
    pub fn evaluate_points(&self, geom: &PolarBoundary, points: &[Point]) -> Result<Vec<Complex64>> {
        let encoding = self.encode(geom);
        let branch = self.branch_pass(&encoding)?;
        let merge = self.merge(&branch.beta);
        let mut tape = crate::diffcore::HiddenTape::new();
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK_ROWS) {
            let input = trunk_batch_input(geom, chunk, crate::diffcore::Channels::Value, self.spec.spatial_mode)?;
            tape.forward(&self.trunk, self.trunk_params(), &input);
            let (re, im) = merge.apply(tape.last_hidden(), chunk.len(), 1);
            out.extend(re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)));
        }
        Ok(out)
    }
}
