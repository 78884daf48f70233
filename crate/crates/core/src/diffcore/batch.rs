//! Batched jet propagation through the activated layers of an MLP.
//!
//! Rows of a batch are stacked channel-major: channel `c` occupies rows
//! `c * rows .. (c + 1) * rows`. The channels are the value, the two first
//! spatial partials and, for PDE points, the Laplacian. Because the
//! Laplacian is linear in the second partials it can be carried as a single
//! channel: `lap(sigma(z)) = sigma''(z) |grad z|^2 + sigma'(z) lap(z)`.
//!
//! Every affine map acts on all channels with one matrix product, and the
//! reverse pass accumulates weight gradients with one more product per layer.
//! The engine runs in either `f64` or `f32`.

use super::gemm::{matmul_nn, matmul_nt, matmul_tn};
use super::mlp::Mlp;
use super::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Value,
    Gradient,
    Laplacian,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Value => 1,
            Channels::Gradient => 3,
            Channels::Laplacian => 4,
        }
    }
}

pub const CH_VALUE: usize = 0;
pub const CH_X: usize = 1;
pub const CH_Y: usize = 2;
pub const CH_LAP: usize = 3;

/// Network inputs for a batch, stacked by channel. The value channel holds
/// the inputs, the others their spatial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput<T = f64> {
    pub rows: usize,
    pub width: usize,
    pub channels: Channels,
    pub data: Vec<T>,
}

impl<T: Real> BatchInput<T> {
    pub fn zeros(rows: usize, width: usize, channels: Channels) -> Self {
        Self {
            rows,
            width,
            channels,
            data: vec![T::ZERO; rows * width * channels.count()],
        }
    }

    pub fn row_mut(&mut self, channel: usize, row: usize) -> &mut [T] {
        let o = (channel * self.rows + row) * self.width;
        &mut self.data[o..o + self.width]
    }

    pub fn row(&self, channel: usize, row: usize) -> &[T] {
        let o = (channel * self.rows + row) * self.width;
        &self.data[o..o + self.width]
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.width, self.channels);
        for c in 0..self.channels.count() {
            for (dst, &src) in rows.iter().enumerate() {
                out.row_mut(c, dst).copy_from_slice(self.row(c, src));
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> BatchInput<U> {
        BatchInput {
            rows: self.rows,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Saved forward state of the activated layers, reusable across calls.
#[derive(Debug)]
pub struct HiddenTape<T = f64> {
    rows: usize,
    n_ch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of activated layer `l`.
    acts: Vec<Vec<T>>,
    zs: Vec<Vec<T>>,
    /// `sigma', sigma'', sigma'''` at the value channel of every layer.
    sig: Vec<[Vec<T>; 3]>,
    scratch: Vec<T>,
    adj: Vec<T>,
    zadj: Vec<T>,
}

impl<T: Real> Default for HiddenTape<T> {
    fn default() -> Self {
        Self {
            rows: 0,
            n_ch: 0,
            acts: Vec::new(),
            zs: Vec::new(),
            sig: Vec::new(),
            scratch: Vec::new(),
            adj: Vec::new(),
            zadj: Vec::new(),
        }
    }
}

impl<T: Real> HiddenTape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Stacked output of the last activated layer.
    pub fn last_hidden(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Runs every layer except the final affine map.
    pub fn forward(&mut self, mlp: &Mlp, params: &[T], input: &BatchInput<T>) {
        let layers = mlp.layers();
        let n_act = layers.len() - 1;
        assert_eq!(input.width, layers[0].n_in, "batch input width");
        let rows = input.rows;
        let n_ch = input.channels.count();
        self.rows = rows;
        self.n_ch = n_ch;
        self.acts.resize_with(n_act + 1, Vec::new);
        self.zs.resize_with(n_act, Vec::new);
        self.sig.resize_with(n_act, Default::default);
        self.acts[0].clear();
        self.acts[0].extend_from_slice(&input.data);
        let act = mlp.activation();
        for l in 0..n_act {
            let sh = layers[l];
            let m = rows * n_ch;
            let w = &params[sh.w_offset..sh.b_offset];
            let b = &params[sh.b_offset..sh.b_offset + sh.n_out];
            let (before, after) = self.acts.split_at_mut(l + 1);
            let a_in = &before[l];
            let a_out = &mut after[0];
            let z = &mut self.zs[l];
            z.resize(m * sh.n_out, T::ZERO);
            matmul_nt(m, sh.n_in, sh.n_out, a_in, w, z, T::ZERO);
            let n = sh.n_out;
            for r in 0..rows {
                for (zi, &bi) in z[r * n..(r + 1) * n].iter_mut().zip(b) {
                    *zi += bi;
                }
            }
            let vn = rows * n;
            a_out.resize(m * n, T::ZERO);
            let [s1, s2, s3] = &mut self.sig[l];
            s1.resize(vn, T::ZERO);
            s2.resize(vn, T::ZERO);
            s3.resize(vn, T::ZERO);
            T::activate(act, &z[..vn], [&mut a_out[..vn], s1, s2, s3]);
            let (s1, s2) = (&s1[..vn], &s2[..vn]);
            if n_ch >= 3 {
                for ch in [CH_X, CH_Y] {
                    let o = ch * vn;
                    let (zc, ac) = (&z[o..o + vn], &mut a_out[o..o + vn]);
                    for ((a, &d1), &zi) in ac.iter_mut().zip(s1).zip(zc) {
                        *a = d1 * zi;
                    }
                }
            }
            if n_ch == 4 {
                let zx = &z[CH_X * vn..(CH_X + 1) * vn];
                let zy = &z[CH_Y * vn..(CH_Y + 1) * vn];
                let zl = &z[CH_LAP * vn..(CH_LAP + 1) * vn];
                let al = &mut a_out[CH_LAP * vn..(CH_LAP + 1) * vn];
                for i in 0..vn {
                    al[i] = s2[i] * (zx[i] * zx[i] + zy[i] * zy[i]) + s1[i] * zl[i];
                }
            }
        }
    }

    /// Reverse pass. `last_adj` holds adjoints of `last_hidden()`; parameter
    /// gradients of the activated layers are added to `grad`.
    pub fn backward(&mut self, mlp: &Mlp, params: &[T], last_adj: &[T], grad: &mut [T]) {
        let layers = mlp.layers();
        let n_act = layers.len() - 1;
        let rows = self.rows;
        let n_ch = self.n_ch;
        let m = rows * n_ch;
        let two = T::from_f64(2.0);
        self.adj.clear();
        self.adj.extend_from_slice(last_adj);
        for l in (0..n_act).rev() {
            let sh = layers[l];
            let n = sh.n_out;
            let vn = rows * n;
            let z = &self.zs[l];
            let [s1, s2, s3] = &self.sig[l];
            let adj = &self.adj;
            let za = &mut self.zadj;
            za.resize(m * n, T::ZERO);
            let (s1, s2, s3) = (&s1[..vn], &s2[..vn], &s3[..vn]);
            let (za0, za_rest) = za.split_at_mut(vn);
            for ((o, &d1), &a) in za0.iter_mut().zip(s1).zip(&adj[..vn]) {
                *o = d1 * a;
            }
            if n_ch >= 3 {
                for ch in [CH_X, CH_Y] {
                    let o = ch * vn;
                    let (zc, ac) = (&z[o..o + vn], &adj[o..o + vn]);
                    let zac = &mut za_rest[o - vn..o];
                    for i in 0..vn {
                        za0[i] += s2[i] * zc[i] * ac[i];
                        zac[i] = s1[i] * ac[i];
                    }
                }
            }
            if n_ch == 4 {
                let zx = &z[CH_X * vn..(CH_X + 1) * vn];
                let zy = &z[CH_Y * vn..(CH_Y + 1) * vn];
                let zl = &z[CH_LAP * vn..(CH_LAP + 1) * vn];
                let al = &adj[CH_LAP * vn..(CH_LAP + 1) * vn];
                let (zax, rest) = za_rest.split_at_mut(vn);
                let (zay, zal) = rest.split_at_mut(vn);
                let zal = &mut zal[..vn];
                for i in 0..vn {
                    let a = al[i];
                    za0[i] += (s3[i] * (zx[i] * zx[i] + zy[i] * zy[i]) + s2[i] * zl[i]) * a;
                    zax[i] += two * s2[i] * zx[i] * a;
                    zay[i] += two * s2[i] * zy[i] * a;
                    zal[i] = s1[i] * a;
                }
            }
            let a_in = &self.acts[l];
            let gw = &mut grad[sh.w_offset..sh.b_offset];
            matmul_tn(n, m, sh.n_in, za, a_in, gw, T::from_f64(1.0));
            let gb = &mut grad[sh.b_offset..sh.b_offset + n];
            for r in 0..rows {
                for (g, &v) in gb.iter_mut().zip(&za[r * n..(r + 1) * n]) {
                    *g += v;
                }
            }
            if l > 0 {
                let w = &params[sh.w_offset..sh.b_offset];
                let next = &mut self.scratch;
                next.resize(m * sh.n_in, T::ZERO);
                matmul_nn(m, n, sh.n_in, za, w, next, T::ZERO);
                std::mem::swap(&mut self.adj, &mut self.scratch);
            }
        }
    }
}
