use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::activation::{activations, Activation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: String,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: impl Into<String>) -> Self {
        Self {
            layer_widths,
            activation: activation.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least an input and an output width".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        activations().get(&self.activation)?;
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameters: for every layer the `out x in` weight matrix (row-major)
/// followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub w_offset: usize,
    pub b_offset: usize,
}

/// An `MlpSpec` with its activation resolved and layer offsets precomputed.
#[derive(Clone)]
pub struct Mlp {
    spec: MlpSpec,
    act: Arc<dyn Activation>,
    layers: Vec<LayerShape>,
}

impl std::fmt::Debug for Mlp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mlp").field("spec", &self.spec).finish()
    }
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let act = activations().get(&spec.activation)?;
        let mut layers = Vec::with_capacity(spec.n_layers());
        let mut off = 0;
        for w in spec.layer_widths.windows(2) {
            layers.push(LayerShape {
                n_in: w[0],
                n_out: w[1],
                w_offset: off,
                b_offset: off + w[0] * w[1],
            });
            off += w[0] * w[1] + w[1];
        }
        Ok(Self { spec, act, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn activation(&self) -> &dyn Activation {
        self.act.as_ref()
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "MLP parameters",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if input.len() != self.spec.input_width() {
            return Err(Error::Dimension {
                context: "MLP input",
                expected: self.spec.input_width(),
                got: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        for (l, sh) in self.layers.iter().enumerate() {
            let w = &params[sh.w_offset..sh.b_offset];
            let b = &params[sh.b_offset..sh.b_offset + sh.n_out];
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * sh.n_in..(o + 1) * sh.n_in];
                *zo += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if l < last {
                for zo in &mut z {
                    *zo = self.act.value(*zo);
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Propagates value/gradient/Hessian jets through the network.
    pub fn forward_jet(&self, params: &[f64], inputs: &[Jet2]) -> Result<Vec<Jet2>> {
        Ok(self.jet_tape(params, inputs)?.outputs())
    }

    pub(crate) fn jet_tape(&self, params: &[f64], inputs: &[Jet2]) -> Result<JetTape> {
        self.check_params(params)?;
        if inputs.len() != self.spec.input_width() {
            return Err(Error::Dimension {
                context: "MLP jet input",
                expected: self.spec.input_width(),
                got: inputs.len(),
            });
        }
        let k = inputs[0].d.len();
        if inputs.iter().any(|j| j.d.len() != k || j.d2.len() != k * k) {
            return Err(Error::Config("input jets must share one derivative dimension".into()));
        }
        let mut a = JetBlock::from_jets(inputs, k);
        let last = self.layers.len() - 1;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, sh) in self.layers.iter().enumerate() {
            let w = &params[sh.w_offset..sh.b_offset];
            let b = &params[sh.b_offset..sh.b_offset + sh.n_out];
            let z = a.affine(w, b, sh.n_out);
            let (out, sig) = if l < last {
                let sig: Vec<[f64; 4]> = z.value.iter().map(|&v| self.act.derivs(v)).collect();
                (z.activate(&sig), Some(sig))
            } else {
                (z.clone(), None)
            };
            layers.push(JetLayer { input: a, z, sig });
            a = out;
        }
        Ok(JetTape { k, layers, output: a })
    }
}

/// Value, first partials and full second partials with respect to `k`
/// designated inputs. `d2` is `k x k`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d: Vec<f64>,
    pub d2: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, k: usize) -> Self {
        Self {
            value,
            d: vec![0.0; k],
            d2: vec![0.0; k * k],
        }
    }

    /// The `i`-th of `k` independent variables, with unit first derivative.
    pub fn variable(value: f64, i: usize, k: usize) -> Self {
        let mut j = Self::constant(value, k);
        j.d[i] = 1.0;
        j
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn d2(&self, i: usize, j: usize) -> f64 {
        self.d2[i * self.k() + j]
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.k()).map(|i| self.d2(i, i)).sum()
    }
}

/// A layer's worth of jets in structure-of-arrays form.
#[derive(Debug, Clone)]
pub(crate) struct JetBlock {
    pub k: usize,
    pub value: Vec<f64>,
    pub d: Vec<f64>,
    pub d2: Vec<f64>,
}

impl JetBlock {
    fn zeros(width: usize, k: usize) -> Self {
        Self {
            k,
            value: vec![0.0; width],
            d: vec![0.0; width * k],
            d2: vec![0.0; width * k * k],
        }
    }

    fn from_jets(jets: &[Jet2], k: usize) -> Self {
        let mut b = Self::zeros(jets.len(), k);
        for (i, j) in jets.iter().enumerate() {
            b.value[i] = j.value;
            b.d[i * k..(i + 1) * k].copy_from_slice(&j.d);
            b.d2[i * k * k..(i + 1) * k * k].copy_from_slice(&j.d2);
        }
        b
    }

    fn width(&self) -> usize {
        self.value.len()
    }

    fn jet(&self, i: usize) -> Jet2 {
        let k = self.k;
        Jet2 {
            value: self.value[i],
            d: self.d[i * k..(i + 1) * k].to_vec(),
            d2: self.d2[i * k * k..(i + 1) * k * k].to_vec(),
        }
    }

    fn affine(&self, w: &[f64], b: &[f64], n_out: usize) -> Self {
        let n_in = self.width();
        let k = self.k;
        let kk = k * k;
        let mut z = Self::zeros(n_out, k);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut v = b[o];
            for (i, &wi) in row.iter().enumerate() {
                v += wi * self.value[i];
                for c in 0..k {
                    z.d[o * k + c] += wi * self.d[i * k + c];
                }
                for c in 0..kk {
                    z.d2[o * kk + c] += wi * self.d2[i * kk + c];
                }
            }
            z.value[o] = v;
        }
        z
    }

    fn activate(&self, sig: &[[f64; 4]]) -> Self {
        let k = self.k;
        let kk = k * k;
        let mut a = Self::zeros(self.width(), k);
        for (u, s) in sig.iter().enumerate() {
            a.value[u] = s[0];
            let zd = &self.d[u * k..(u + 1) * k];
            for c in 0..k {
                a.d[u * k + c] = s[1] * zd[c];
            }
            for i in 0..k {
                for j in 0..k {
                    a.d2[u * kk + i * k + j] = s[2] * zd[i] * zd[j] + s[1] * self.d2[u * kk + i * k + j];
                }
            }
        }
        a
    }
}

pub(crate) struct JetLayer {
    pub input: JetBlock,
    pub z: JetBlock,
    /// Activation derivatives at `z.value`; `None` on the final affine layer.
    pub sig: Option<Vec<[f64; 4]>>,
}

pub(crate) struct JetTape {
    pub k: usize,
    pub layers: Vec<JetLayer>,
    pub output: JetBlock,
}

/// Adjoints of a jet block's entries, same layout as `JetBlock`.
pub(crate) type JetAdjoint = JetBlock;

impl JetTape {
    pub fn outputs(&self) -> Vec<Jet2> {
        (0..self.output.width()).map(|i| self.output.jet(i)).collect()
    }

    pub fn output_adjoint(&self) -> JetAdjoint {
        JetBlock::zeros(self.output.width(), self.k)
    }

    /// Accumulates parameter gradients given adjoints of the output jets.
    /// Returns the adjoints of the input jets.
    pub fn backward(&self, mlp: &Mlp, params: &[f64], out_adj: JetAdjoint, grad: &mut [f64]) -> JetAdjoint {
        let k = self.k;
        let kk = k * k;
        let mut adj = out_adj;
        for (layer, sh) in self.layers.iter().zip(mlp.layers()).rev() {
            // Through the activation: adj currently holds adjoints of the
            // layer output; convert to adjoints of z.
            let zadj = match &layer.sig {
                None => adj,
                Some(sig) => {
                    let z = &layer.z;
                    let mut za = JetBlock::zeros(z.width(), k);
                    for (u, s) in sig.iter().enumerate() {
                        let zd = &z.d[u * k..(u + 1) * k];
                        let zd2 = &z.d2[u * kk..(u + 1) * kk];
                        let ad = &adj.d[u * k..(u + 1) * k];
                        let ad2 = &adj.d2[u * kk..(u + 1) * kk];
                        let mut v = s[1] * adj.value[u];
                        for c in 0..k {
                            v += s[2] * zd[c] * ad[c];
                            za.d[u * k + c] += s[1] * ad[c];
                        }
                        for i in 0..k {
                            for j in 0..k {
                                let a2 = ad2[i * k + j];
                                v += (s[3] * zd[i] * zd[j] + s[2] * zd2[i * k + j]) * a2;
                                za.d[u * k + i] += s[2] * zd[j] * a2;
                                za.d[u * k + j] += s[2] * zd[i] * a2;
                                za.d2[u * kk + i * k + j] = s[1] * a2;
                            }
                        }
                        za.value[u] = v;
                    }
                    za
                }
            };
            // Through the affine map.
            let a = &layer.input;
            let n_in = sh.n_in;
            let w = &params[sh.w_offset..sh.b_offset];
            let mut in_adj = JetBlock::zeros(n_in, k);
            for o in 0..sh.n_out {
                let zv = zadj.value[o];
                let zd = &zadj.d[o * k..(o + 1) * k];
                let zd2 = &zadj.d2[o * kk..(o + 1) * kk];
                grad[sh.b_offset + o] += zv;
                for i in 0..n_in {
                    let mut g = zv * a.value[i];
                    for c in 0..k {
                        g += zd[c] * a.d[i * k + c];
                    }
                    for c in 0..kk {
                        g += zd2[c] * a.d2[i * kk + c];
                    }
                    grad[sh.w_offset + o * n_in + i] += g;
                    let wi = w[o * n_in + i];
                    in_adj.value[i] += wi * zv;
                    for c in 0..k {
                        in_adj.d[i * k + c] += wi * zd[c];
                    }
                    for c in 0..kk {
                        in_adj.d2[i * kk + c] += wi * zd2[c];
                    }
                }
            }
            adj = in_adj;
        }
        adj
    }
}
