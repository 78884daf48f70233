//! Batched evaluation pieces shared by inference and training.
//!
//! For one geometry the branch latent `beta` is fixed, so the final trunk
//! layer and the dot-product merge collapse into two vectors over the last
//! trunk hidden layer: `Re W = c_re . h + k_re` with
//! `c_re = W_last[..p]^T beta[..p]` and `k_re = beta[..p] . b_last[..p] + bias_re`,
//! and likewise for the imaginary part. Derivative channels only see `c`.

use super::{DeepOnetModel, SpatialMode, TRUNK_INPUTS};
use crate::diffcore::batch::{CH_LAP, CH_VALUE, CH_X, CH_Y};
use crate::diffcore::{BatchInput, Channels, HiddenTape, Real};
use crate::error::Result;
use crate::geometry::{JetOrder, Point, PolarBoundary};

/// Rows per trunk batch. Bounds memory of the saved forward state.
pub const CHUNK_ROWS: usize = 1024;

/// Trunk inputs for a set of points, stacked by channel.
pub fn trunk_batch_input(geom: &PolarBoundary, points: &[Point], channels: Channels, mode: SpatialMode) -> Result<BatchInput> {
    let mut input = BatchInput::zeros(points.len(), TRUNK_INPUTS, channels);
    let n_ch = channels.count();
    let order = match (mode, channels) {
        (SpatialMode::Partial, _) | (_, Channels::Value) => JetOrder::First,
        (SpatialMode::Total, Channels::Gradient) => JetOrder::Second,
        (SpatialMode::Total, Channels::Laplacian) => JetOrder::Third,
    };
    for (row, &p) in points.iter().enumerate() {
        let s = geom.sdf_jet(p, order)?;
        input
            .row_mut(CH_VALUE, row)
            .copy_from_slice(&[p[0], p[1], s.value, s.grad[0], s.grad[1]]);
        if n_ch < 3 {
            continue;
        }
        let h = s.hess;
        let (dx, dy) = match mode {
            SpatialMode::Partial => ([1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]),
            SpatialMode::Total => (
                [1.0, 0.0, s.grad[0], h[0][0], h[0][1]],
                [0.0, 1.0, s.grad[1], h[1][0], h[1][1]],
            ),
        };
        input.row_mut(CH_X, row).copy_from_slice(&dx);
        input.row_mut(CH_Y, row).copy_from_slice(&dy);
        if n_ch == 4 && mode == SpatialMode::Total {
            let t = s.third.expect("third order requested");
            let lap = [0.0, 0.0, h[0][0] + h[1][1], t[0] + t[2], t[1] + t[3]];
            input.row_mut(CH_LAP, row).copy_from_slice(&lap);
        }
    }
    Ok(input)
}

/// Forward state of the branch network for one encoding.
#[derive(Debug)]
pub struct BranchPass {
    tape: HiddenTape,
    pub beta: Vec<f64>,
}

/// Collapsed final trunk layer and merge for one geometry.
#[derive(Debug, Clone)]
pub struct Merge {
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub k_re: f64,
    pub k_im: f64,
}

/// Accumulated adjoints of a `Merge` over all batches of one geometry.
#[derive(Debug, Clone)]
pub struct MergeGrad {
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub k_re: f64,
    pub k_im: f64,
}

impl MergeGrad {
    pub fn zeros(h: usize) -> Self {
        Self {
            c_re: vec![0.0; h],
            c_im: vec![0.0; h],
            k_re: 0.0,
            k_im: 0.0,
        }
    }
}

impl Merge {
    pub fn hidden_width(&self) -> usize {
        self.c_re.len()
    }

    /// Field channels from the stacked last hidden layer. The constant
    /// offset enters the value channel only.
    pub fn apply<T: Real>(&self, hidden: &[T], rows: usize, n_ch: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden_width();
        let m = rows * n_ch;
        let mut re = vec![0.0; m];
        let mut im = vec![0.0; m];
        for r in 0..m {
            let row = &hidden[r * h..(r + 1) * h];
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..h {
                let v = row[i].to_f64();
                a += v * self.c_re[i];
                b += v * self.c_im[i];
            }
            if r < rows {
                a += self.k_re;
                b += self.k_im;
            }
            re[r] = a;
            im[r] = b;
        }
        (re, im)
    }
}

/// Reverse of `Merge::apply`. Writes the hidden-layer adjoint into
/// `hidden_adj` and accumulates merge adjoints into `acc`.
pub fn merge_adjoint<T: Real>(
    merge: &Merge,
    hidden: &[T],
    adj_re: &[f64],
    adj_im: &[f64],
    rows: usize,
    acc: &mut MergeGrad,
    hidden_adj: &mut Vec<T>,
) {
    let h = merge.hidden_width();
    let m = adj_re.len();
    hidden_adj.resize(m * h, T::ZERO);
    for r in 0..m {
        let (ar, ai) = (adj_re[r], adj_im[r]);
        let row = &hidden[r * h..(r + 1) * h];
        let out = &mut hidden_adj[r * h..(r + 1) * h];
        for i in 0..h {
            let v = row[i].to_f64();
            out[i] = T::from_f64(ar * merge.c_re[i] + ai * merge.c_im[i]);
            acc.c_re[i] += ar * v;
            acc.c_im[i] += ai * v;
        }
        if r < rows {
            acc.k_re += ar;
            acc.k_im += ai;
        }
    }
}

impl DeepOnetModel {
    pub fn branch_pass(&self, encoding: &[f64]) -> Result<BranchPass> {
        self.check_encoding(encoding)?;
        let mut input = BatchInput::zeros(1, encoding.len(), Channels::Value);
        input.data.copy_from_slice(encoding);
        let mut tape = HiddenTape::new();
        let params = self.branch_params();
        tape.forward(&self.branch, params, &input);
        let sh = *self.branch.layers().last().unwrap();
        let hidden = tape.last_hidden();
        let w = &params[sh.w_offset..sh.b_offset];
        let beta = (0..sh.n_out)
            .map(|o| {
                let row = &w[o * sh.n_in..(o + 1) * sh.n_in];
                params[sh.b_offset + o] + row.iter().zip(hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(BranchPass { tape, beta })
    }

    /// Adds the branch parameter gradient for latent adjoint `d_beta` to `grad`.
    pub fn branch_backward(&self, pass: &mut BranchPass, d_beta: &[f64], grad: &mut [f64]) {
        let params = self.branch_params();
        let range = self.branch_range();
        let g = &mut grad[range];
        let sh = *self.branch.layers().last().unwrap();
        let hidden = pass.tape.last_hidden().to_vec();
        let mut h_adj = vec![0.0; sh.n_in];
        for (o, &db) in d_beta.iter().enumerate() {
            let wo = sh.w_offset + o * sh.n_in;
            for i in 0..sh.n_in {
                g[wo + i] += db * hidden[i];
                h_adj[i] += db * params[wo + i];
            }
            g[sh.b_offset + o] += db;
        }
        pass.tape.backward(&self.branch, params, &h_adj, g);
    }

    pub fn merge(&self, beta: &[f64]) -> Merge {
        let p = self.spec.latent;
        let tp = self.trunk_params();
        let sh = *self.trunk.layers().last().unwrap();
        let h = sh.n_in;
        let [br, bi] = self.bias();
        let mut m = Merge {
            c_re: vec![0.0; h],
            c_im: vec![0.0; h],
            k_re: br,
            k_im: bi,
        };
        for j in 0..2 * p {
            let row = &tp[sh.w_offset + j * h..sh.w_offset + (j + 1) * h];
            let (c, k) = if j < p { (&mut m.c_re, &mut m.k_re) } else { (&mut m.c_im, &mut m.k_im) };
            for i in 0..h {
                c[i] += beta[j] * row[i];
            }
            *k += beta[j] * tp[sh.b_offset + j];
        }
        m
    }

    /// Distributes merge adjoints onto the final trunk layer and the output
    /// biases, returning the adjoint of the branch latent.
    pub fn merge_backward(&self, beta: &[f64], acc: &MergeGrad, grad: &mut [f64]) -> Vec<f64> {
        let p = self.spec.latent;
        let tp = self.trunk_params();
        let sh = *self.trunk.layers().last().unwrap();
        let h = sh.n_in;
        let bo = self.bias_offset();
        grad[bo] += acc.k_re;
        grad[bo + 1] += acc.k_im;
        let g = &mut grad[self.trunk_range()];
        let mut d_beta = vec![0.0; 2 * p];
        for j in 0..2 * p {
            let (gc, gk) = if j < p { (&acc.c_re, acc.k_re) } else { (&acc.c_im, acc.k_im) };
            let wo = sh.w_offset + j * h;
            let mut d = tp[sh.b_offset + j] * gk;
            for i in 0..h {
                g[wo + i] += beta[j] * gc[i];
                d += tp[wo + i] * gc[i];
            }
            g[sh.b_offset + j] += beta[j] * gk;
            d_beta[j] = d;
        }
        d_beta
    }
}
