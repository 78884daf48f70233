//! Scalar losses over a batch of network jets and their exact parameter
//! gradients (reverse pass over the forward jet computation).
//!
//! Losses are expression trees over a closed set of primitives. Anything
//! outside the set is rejected before evaluation.

use super::mlp::{Jet2, JetAdjoint, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetEntry {
    Value,
    D(usize),
    D2(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossExpr {
    Const(f64),
    /// One entry of one output jet of one batch sample.
    Entry {
        sample: usize,
        output: usize,
        entry: JetEntry,
    },
    Sum(Vec<LossExpr>),
    Mul(Box<LossExpr>, Box<LossExpr>),
    Powi(Box<LossExpr>, i32),
    /// Squared modulus of a real quantity.
    Abs2(Box<LossExpr>),
    Mean(Vec<LossExpr>),
    /// Named primitive, e.g. from a serialized loss description.
    Op { name: String, args: Vec<LossExpr> },
}

/// Named primitives accepted in `LossExpr::Op`, with their arity.
pub const SUPPORTED_OPS: &[(&str, usize)] = &[("neg", 1), ("sub", 2), ("square", 1)];

impl LossExpr {
    pub fn entry(sample: usize, output: usize, entry: JetEntry) -> Self {
        Self::Entry {
            sample,
            output,
            entry,
        }
    }

    pub fn mul(a: LossExpr, b: LossExpr) -> Self {
        Self::Mul(Box::new(a), Box::new(b))
    }

    pub fn abs2(a: LossExpr) -> Self {
        Self::Abs2(Box::new(a))
    }

    pub fn powi(a: LossExpr, n: i32) -> Self {
        Self::Powi(Box::new(a), n)
    }

    pub fn op(name: &str, args: Vec<LossExpr>) -> Self {
        Self::Op {
            name: name.to_string(),
            args,
        }
    }

    /// Rejects unsupported primitives and out-of-range references.
    pub fn validate(&self, n_samples: usize, n_outputs: usize, k: usize) -> Result<()> {
        match self {
            Self::Const(_) => Ok(()),
            Self::Entry {
                sample,
                output,
                entry,
            } => {
                if *sample >= n_samples {
                    return Err(Error::Dimension {
                        context: "loss sample index",
                        expected: n_samples,
                        got: *sample,
                    });
                }
                if *output >= n_outputs {
                    return Err(Error::Dimension {
                        context: "loss output index",
                        expected: n_outputs,
                        got: *output,
                    });
                }
                let ok = match entry {
                    JetEntry::Value => true,
                    JetEntry::D(i) => *i < k,
                    JetEntry::D2(i, j) => *i < k && *j < k,
                };
                if !ok {
                    return Err(Error::Dimension {
                        context: "loss derivative index",
                        expected: k,
                        got: k,
                    });
                }
                Ok(())
            }
            Self::Sum(v) | Self::Mean(v) => v.iter().try_for_each(|e| e.validate(n_samples, n_outputs, k)),
            Self::Mul(a, b) => {
                a.validate(n_samples, n_outputs, k)?;
                b.validate(n_samples, n_outputs, k)
            }
            Self::Powi(a, _) | Self::Abs2(a) => a.validate(n_samples, n_outputs, k),
            Self::Op { name, args } => {
                match SUPPORTED_OPS.iter().find(|(n, _)| n == name) {
                    Some((_, arity)) if *arity == args.len() => {}
                    _ => return Err(Error::UnsupportedPrimitive(name.clone())),
                }
                args.iter().try_for_each(|e| e.validate(n_samples, n_outputs, k))
            }
        }
    }

    fn eval(&self, out: &[Vec<Jet2>]) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Entry {
                sample,
                output,
                entry,
            } => {
                let j = &out[*sample][*output];
                match entry {
                    JetEntry::Value => j.value,
                    JetEntry::D(i) => j.d[*i],
                    JetEntry::D2(i, l) => j.d2(*i, *l),
                }
            }
            Self::Sum(v) => v.iter().map(|e| e.eval(out)).sum(),
            Self::Mean(v) => {
                if v.is_empty() {
                    0.0
                } else {
                    v.iter().map(|e| e.eval(out)).sum::<f64>() / v.len() as f64
                }
            }
            Self::Mul(a, b) => a.eval(out) * b.eval(out),
            Self::Powi(a, n) => a.eval(out).powi(*n),
            Self::Abs2(a) => a.eval(out).powi(2),
            Self::Op { name, args } => match name.as_str() {
                "neg" => -args[0].eval(out),
                "sub" => args[0].eval(out) - args[1].eval(out),
                "square" => args[0].eval(out).powi(2),
                _ => unreachable!("validated"),
            },
        }
    }

    fn backward(&self, out: &[Vec<Jet2>], adj: f64, seeds: &mut [JetAdjoint]) {
        if adj == 0.0 {
            return;
        }
        match self {
            Self::Const(_) => {}
            Self::Entry {
                sample,
                output,
                entry,
            } => {
                let s = &mut seeds[*sample];
                let k = s.k;
                match entry {
                    JetEntry::Value => s.value[*output] += adj,
                    JetEntry::D(i) => s.d[*output * k + i] += adj,
                    JetEntry::D2(i, l) => s.d2[*output * k * k + i * k + l] += adj,
                }
            }
            Self::Sum(v) => v.iter().for_each(|e| e.backward(out, adj, seeds)),
            Self::Mean(v) => {
                let a = adj / v.len().max(1) as f64;
                v.iter().for_each(|e| e.backward(out, a, seeds));
            }
            Self::Mul(a, b) => {
                let (va, vb) = (a.eval(out), b.eval(out));
                a.backward(out, adj * vb, seeds);
                b.backward(out, adj * va, seeds);
            }
            Self::Powi(a, n) => {
                let v = a.eval(out);
                a.backward(out, adj * *n as f64 * v.powi(n - 1), seeds);
            }
            Self::Abs2(a) => {
                let v = a.eval(out);
                a.backward(out, adj * 2.0 * v, seeds);
            }
            Self::Op { name, args } => match name.as_str() {
                "neg" => args[0].backward(out, -adj, seeds),
                "sub" => {
                    args[0].backward(out, adj, seeds);
                    args[1].backward(out, -adj, seeds);
                }
                "square" => {
                    let v = args[0].eval(out);
                    args[0].backward(out, adj * 2.0 * v, seeds);
                }
                _ => unreachable!("validated"),
            },
        }
    }
}

/// Evaluates `loss` over the network outputs for every sample's input jets
/// and returns the loss value with its exact gradient over all parameters.
pub fn param_gradient(mlp: &Mlp, params: &[f64], batch: &[Vec<Jet2>], loss: &LossExpr) -> Result<(f64, Vec<f64>)> {
    let k = batch.first().and_then(|s| s.first()).map_or(0, |j| j.k());
    loss.validate(batch.len(), mlp.spec().output_width(), k)?;
    let tapes = batch
        .iter()
        .map(|inputs| mlp.jet_tape(params, inputs))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<Vec<Jet2>> = tapes.iter().map(|t| t.outputs()).collect();
    let value = loss.eval(&outputs);
    let mut seeds: Vec<JetAdjoint> = tapes.iter().map(|t| t.output_adjoint()).collect();
    loss.backward(&outputs, 1.0, &mut seeds);
    let mut grad = vec![0.0; mlp.param_count()];
    for (tape, seed) in tapes.iter().zip(seeds) {
        tape.backward(mlp, params, seed, &mut grad);
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::mlp::MlpSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(widths: Vec<usize>, seed: u64) -> (Mlp, Vec<f64>) {
        let spec = MlpSpec::new(widths, "tanh");
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p = (0..spec.param_count()).map(|_| 0.8 * (2.0 * r.random::<f64>() - 1.0)).collect();
        (Mlp::new(spec).unwrap(), p)
    }

    fn xy_batch(points: &[[f64; 2]]) -> Vec<Vec<Jet2>> {
        points
            .iter()
            .map(|p| vec![Jet2::variable(p[0], 0, 2), Jet2::variable(p[1], 1, 2)])
            .collect()
    }

    fn fd_check(mlp: &Mlp, p: &[f64], batch: &[Vec<Jet2>], loss: &LossExpr, tol: f64) {
        let (_, g) = param_gradient(mlp, p, batch, loss).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut pp = p.to_vec();
            pp[i] += h;
            let lp = param_gradient(mlp, &pp, batch, loss).unwrap().0;
            pp[i] -= 2.0 * h;
            let lm = param_gradient(mlp, &pp, batch, loss).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(1e-3);
            assert!(rel < tol, "param {i}: fd {fd} ad {}", g[i]);
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let (mlp, p) = setup(vec![2, 4, 1], 1);
        let (v, g) = param_gradient(&mlp, &p, &xy_batch(&[[0.1, 0.2]]), &LossExpr::Const(3.5)).unwrap();
        assert_eq!(v, 3.5);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_squared_norm_matches_finite_differences() {
        let (mlp, p) = setup(vec![2, 6, 6, 3], 2);
        let loss = LossExpr::mul(
            LossExpr::Const(0.5),
            LossExpr::Sum((0..3).map(|o| LossExpr::abs2(LossExpr::entry(0, o, JetEntry::Value))).collect()),
        );
        fd_check(&mlp, &p, &xy_batch(&[[0.3, -0.4]]), &loss, 1e-4);
    }

    #[test]
    fn laplacian_loss_matches_finite_differences() {
        let (mlp, p) = setup(vec![2, 8, 8, 8, 1], 3);
        let pts = [[0.1, 0.2], [-0.5, 0.7], [0.9, -0.3]];
        let lap = |s: usize| {
            LossExpr::Sum(vec![
                LossExpr::entry(s, 0, JetEntry::D2(0, 0)),
                LossExpr::entry(s, 0, JetEntry::D2(1, 1)),
                LossExpr::mul(LossExpr::Const(4.0), LossExpr::entry(s, 0, JetEntry::Value)),
            ])
        };
        let loss = LossExpr::Mean((0..pts.len()).map(|s| LossExpr::abs2(lap(s))).collect());
        fd_check(&mlp, &p, &xy_batch(&pts), &loss, 1e-4);
    }

    #[test]
    fn mixed_primitives_match_finite_differences() {
        let (mlp, p) = setup(vec![2, 5, 2], 4);
        let loss = LossExpr::Sum(vec![
            LossExpr::powi(LossExpr::entry(0, 1, JetEntry::D(0)), 3),
            LossExpr::op(
                "sub",
                vec![
                    LossExpr::op("square", vec![LossExpr::entry(0, 0, JetEntry::D2(0, 1))]),
                    LossExpr::op("neg", vec![LossExpr::entry(0, 1, JetEntry::D(1))]),
                ],
            ),
        ]);
        fd_check(&mlp, &p, &xy_batch(&[[0.25, 0.5]]), &loss, 1e-4);
    }

    #[test]
    fn unsupported_primitive_is_rejected() {
        let (mlp, p) = setup(vec![2, 3, 1], 5);
        let loss = LossExpr::op("exp", vec![LossExpr::entry(0, 0, JetEntry::Value)]);
        assert!(matches!(
            param_gradient(&mlp, &p, &xy_batch(&[[0.0, 0.0]]), &loss),
            Err(Error::UnsupportedPrimitive(n)) if n == "exp"
        ));
        let bad_arity = LossExpr::op("neg", vec![]);
        assert!(param_gradient(&mlp, &p, &xy_batch(&[[0.0, 0.0]]), &bad_arity).is_err());
    }

    #[test]
    fn directional_derivatives_agree_with_gradient() {
        let (mlp, p) = setup(vec![2, 8, 8, 1], 6);
        let batch = xy_batch(&[[0.2, 0.1], [0.4, -0.6]]);
        let loss = LossExpr::Mean(
            (0..2)
                .map(|s| {
                    LossExpr::abs2(LossExpr::Sum(vec![
                        LossExpr::entry(s, 0, JetEntry::D2(0, 0)),
                        LossExpr::entry(s, 0, JetEntry::D2(1, 1)),
                    ]))
                })
                .collect(),
        );
        let (_, g) = param_gradient(&mlp, &p, &batch, &loss).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for _ in 0..20 {
            let v: Vec<f64> = (0..p.len()).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
            let shift = |s: f64| -> Vec<f64> { p.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
            let lp = param_gradient(&mlp, &shift(h), &batch, &loss).unwrap().0;
            let lm = param_gradient(&mlp, &shift(-h), &batch, &loss).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((fd - dot).abs() / dot.abs().max(1e-8) < 1e-4);
        }
    }
}
