use std::sync::{Arc, OnceLock};

use super::real::{tanh_derivs_f32, tanh_derivs_f64};
use crate::registry::Registry;

/// A smooth scalar nonlinearity together with its first three derivatives.
///
/// The third derivative is needed because parameter gradients of a loss
/// that contains second spatial derivatives differentiate `sigma''` once more.
pub trait Activation: Send + Sync {
    fn name(&self) -> &'static str;

    /// `[sigma, sigma', sigma'', sigma''']` at `z`.
    fn derivs(&self, z: f64) -> [f64; 4];

    fn value(&self, z: f64) -> f64 {
        self.derivs(z)[0]
    }

    /// Evaluates `derivs` over a slice. `out[i]` receives the i-th derivative.
    fn derivs_slice(&self, z: &[f64], out: [&mut [f64]; 4]) {
        let [s0, s1, s2, s3] = out;
        for (i, &zi) in z.iter().enumerate() {
            let d = self.derivs(zi);
            s0[i] = d[0];
            s1[i] = d[1];
            s2[i] = d[2];
            s3[i] = d[3];
        }
    }

    /// Single-precision slice evaluation.
    fn derivs_slice_f32(&self, z: &[f32], out: [&mut [f32]; 4]) {
        let [s0, s1, s2, s3] = out;
        for (i, &zi) in z.iter().enumerate() {
            let d = self.derivs(zi as f64);
            s0[i] = d[0] as f32;
            s1[i] = d[1] as f32;
            s2[i] = d[2] as f32;
            s3[i] = d[3] as f32;
        }
    }

    /// Multiplier on the variance-scaled initial weights.
    fn init_gain(&self) -> f64 {
        1.0
    }
}

pub struct Tanh;

impl Activation for Tanh {
    fn name(&self) -> &'static str {
        "tanh"
    }

    fn derivs(&self, z: f64) -> [f64; 4] {
        let t = z.tanh();
        let s1 = 1.0 - t * t;
        [t, s1, -2.0 * t * s1, s1 * (4.0 * t * t - 2.0 * s1)]
    }

    fn derivs_slice(&self, z: &[f64], out: [&mut [f64]; 4]) {
        tanh_derivs_f64(z, out)
    }

    fn derivs_slice_f32(&self, z: &[f32], out: [&mut [f32]; 4]) {
        tanh_derivs_f32(z, out)
    }

    fn init_gain(&self) -> f64 {
        5.0 / 3.0
    }
}

pub struct Sine;

impl Activation for Sine {
    fn name(&self) -> &'static str {
        "sin"
    }

    fn derivs(&self, z: f64) -> [f64; 4] {
        let (s, c) = z.sin_cos();
        [s, c, -s, -c]
    }
}

/// Linear bypass, useful for checking that affine networks have zero curvature.
pub struct Identity;

impl Activation for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn derivs(&self, z: f64) -> [f64; 4] {
        [z, 1.0, 0.0, 0.0]
    }
}

/// `z + z^2 / 2`, a polynomial stand-in under which jets are exact.
pub struct Quadratic;

impl Activation for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn derivs(&self, z: f64) -> [f64; 4] {
        [z + 0.5 * z * z, 1.0 + z, 1.0, 0.0]
    }
}

pub fn activations() -> &'static Registry<dyn Activation> {
    static REG: OnceLock<Registry<dyn Activation>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Activation> = Registry::new("activation");
        let all: [Arc<dyn Activation>; 4] =
            [Arc::new(Tanh), Arc::new(Sine), Arc::new(Identity), Arc::new(Quadratic)];
        for a in all {
            r.register(a.name(), a);
        }
        r
    })
}
