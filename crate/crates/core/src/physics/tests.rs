use std::f64::consts::{PI, TAU};

use super::*;
use crate::geometry::{rotate_about, ProbeSet};
use crate::operator::{ModelSpec, SpatialMode};
use crate::sampling::{sample_collocation, SamplerConfig};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn probes() -> ProbeSet {
    ProbeSet::ring([0.5, 0.5], 0.3, 10).unwrap()
}

fn small_spec(mode: SpatialMode) -> ModelSpec {
    ModelSpec {
        branch_hidden: vec![9, 9],
        trunk_hidden: vec![8, 8],
        latent: 3,
        activation: "tanh".into(),
        spatial_mode: mode,
    }
}

fn zero_model() -> DeepOnetModel {
    DeepOnetModel::zeros(small_spec(SpatialMode::Partial), probes()).unwrap()
}

fn random_model(mode: SpatialMode, seed: u64) -> DeepOnetModel {
    let mut m = DeepOnetModel::init(small_spec(mode), probes(), seed).unwrap();
    let n = m.param_count();
    for (i, p) in m.params_mut().iter_mut().enumerate() {
        *p *= 0.7;
        if i % 5 == 0 {
            *p += 0.02 * ((i as f64) / n as f64 - 0.5);
        }
    }
    m
}

fn small_sets(angles: &[f64]) -> Vec<(PolarBoundary, CollocationSet)> {
    let cfg = SamplerConfig {
        n_interior_raw: 60,
        n_outer: 40,
        n_inner_per_geometry: 30,
        seed: 3,
        ..SamplerConfig::default()
    };
    angles
        .iter()
        .map(|&a| {
            let g = PolarBoundary::default().with_rotation_deg(a);
            let s = sample_collocation(&g, &cfg).unwrap();
            (g, s)
        })
        .collect()
}

/// A field given by a closure, for feeding synthetic fields through the
/// residual machinery.
struct Synthetic<F: Fn(Point) -> ComplexSample>(F);

impl<F: Fn(Point) -> ComplexSample> FieldEvaluator for Synthetic<F> {
    fn sample(&self, p: Point) -> Result<ComplexSample> {
        Ok((self.0)(p))
    }
}

#[test]
fn incident_wave_has_constant_modulus() {
    let wp = WaveParams {
        amp: 1.7,
        direction_deg: 23.0,
        ..WaveParams::default()
    };
    for i in 0..200 {
        let p = [(i as f64 * 0.137).fract(), (i as f64 * 0.291).fract()];
        assert!((incident_field(&wp, p).0.norm() - 1.7).abs() < 1e-14);
    }
}

#[test]
fn incident_wave_at_half_is_minus_one() {
    let wp = WaveParams::default();
    for y in [0.0, 0.3, 0.9] {
        let (v, _) = incident_field(&wp, [0.5, y]);
        assert!((v - c(-1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn incident_gradient_matches_finite_differences() {
    let wp = WaveParams {
        direction_deg: -35.0,
        ..WaveParams::default()
    };
    let h = 1e-6;
    for p in [[0.1, 0.2], [0.77, 0.41]] {
        let (_, g) = incident_field(&wp, p);
        let fx = (incident_field(&wp, [p[0] + h, p[1]]).0 - incident_field(&wp, [p[0] - h, p[1]]).0) / (2.0 * h);
        let fy = (incident_field(&wp, [p[0], p[1] + h]).0 - incident_field(&wp, [p[0], p[1] - h]).0) / (2.0 * h);
        assert!((fx - g[0]).norm() < 1e-8 * g[0].norm().max(1.0));
        assert!((fy - g[1]).norm() < 1e-8 * g[1].norm().max(1.0));
    }
}

#[test]
fn zero_model_has_zero_pde_and_absorbing_residuals() {
    let m = zero_model();
    let g = PolarBoundary::default();
    let f = ModelField::new(&m, &g);
    let wp = WaveParams::default();
    assert_eq!(pde_residual(&f, &g, &wp, [0.1, 0.1]).unwrap(), c(0.0, 0.0));
    assert_eq!(absorbing_bc_residual(&f, &wp, [1.0, 0.3], [1.0, 0.0]).unwrap(), c(0.0, 0.0));
}

#[test]
fn plane_wave_solves_the_residual_formula() {
    let g = PolarBoundary::default();
    for k0 in [PI, TAU, 2.0 * TAU] {
        let wp = WaveParams::with_k0(k0);
        let pw = PlaneWave::incident(&wp);
        for i in 0..1000 {
            let p = [(0.5 + i as f64 * 0.618_034).fract(), (0.1 + i as f64 * 0.414_214).fract()];
            if g.sdf(p) <= 0.0 {
                continue;
            }
            assert!(pde_residual(&pw, &g, &wp, p).unwrap().norm() < 1e-8);
        }
    }
}

#[test]
fn constant_field_residual_is_rho_omega_squared_c() {
    let mut m = zero_model();
    let o = m.bias_offset();
    m.params_mut()[o] = 0.3;
    m.params_mut()[o + 1] = -1.2;
    let g = PolarBoundary::default();
    let f = ModelField::new(&m, &g);
    let wp = WaveParams::default();
    let r = pde_residual(&f, &g, &wp, [0.2, 0.85]).unwrap();
    let expect = wp.rho0 * wp.omega * wp.omega * c(0.3, -1.2);
    assert!((r - expect).norm() < 1e-12);
}

#[test]
fn pde_residual_rejects_inclusion_points() {
    let m = zero_model();
    let g = PolarBoundary::default();
    let f = ModelField::new(&m, &g);
    let r = pde_residual(&f, &g, &WaveParams::default(), [0.5, 0.55]);
    assert!(matches!(r, Err(Error::InsideInclusion { .. })));
}

#[test]
fn rigid_residual_cases() {
    let wp = WaveParams::default();
    let g = PolarBoundary::default();
    // Scattered field cancelling the incident wave.
    let cancel = Synthetic(|p| {
        let s = PlaneWave::incident(&wp).at(p);
        ComplexSample {
            value: -s.value,
            grad: s.grad.map(|g| [-g[0], -g[1]]),
            lap: s.lap.map(|l| -l),
        }
    });
    for t in [0.3, 1.9, 4.0] {
        let p = g.boundary_point(t);
        let n = g.boundary_normal(t);
        assert!(rigid_bc_residual(&cancel, &g, &wp, p, n).unwrap().norm() < 1e-12);
    }
    let m = zero_model();
    let f = ModelField::new(&m, &g);
    // Grazing incidence: d.n = 0 at the top of the inclusion where the normal is vertical.
    let top = g.boundary_point(PI / 2.0);
    assert_eq!(rigid_bc_residual(&f, &g, &wp, top, [0.0, 1.0]).unwrap(), c(0.0, 0.0));
    let p = [0.784, 0.5];
    let r = rigid_bc_residual(&f, &g, &wp, p, [1.0, 0.0]).unwrap();
    let expect = c(0.0, TAU) * Complex64::from_polar(1.0, TAU * 0.784);
    assert!((r - expect).norm() < 1e-12);
    assert!(matches!(
        rigid_bc_residual(&f, &g, &wp, [0.9, 0.5], [1.0, 0.0]),
        Err(Error::OffBoundary { .. })
    ));
}

#[test]
fn absorbing_residual_cases() {
    let wp = WaveParams::default();
    let k0 = wp.k0();
    let pw = PlaneWave::incident(&wp);
    assert!(absorbing_bc_residual(&pw, &wp, [1.0, 0.37], [1.0, 0.0]).unwrap().norm() < 1e-14);
    let x = 0.42;
    let r = absorbing_bc_residual(&pw, &wp, [x, 1.0], [0.0, 1.0]).unwrap();
    let expect = -c(0.0, k0) * Complex64::from_polar(1.0, k0 * x);
    assert!((r - expect).norm() < 1e-14);
    assert!(matches!(
        absorbing_bc_residual(&pw, &wp, [0.5, 0.5], [1.0, 0.0]),
        Err(Error::OffPerimeter { .. })
    ));
}

#[test]
fn zero_model_loss_is_incident_flux_only() {
    let sets = small_sets(&[0.0, 20.0]);
    let wp = WaveParams::default();
    let r = total_loss(&zero_model(), &sets, &wp, LossWeights::default()).unwrap();
    assert_eq!(r.pde, 0.0);
    assert_eq!(r.gamma_out, 0.0);
    let k0 = wp.k0();
    let d = wp.direction();
    let dn: Vec<f64> = sets
        .iter()
        .flat_map(|(_, s)| s.inner.iter().map(|o| (d[0] * o.n[0] + d[1] * o.n[1]).powi(2)))
        .collect();
    let expect = k0 * k0 * wp.amp * wp.amp * dn.iter().sum::<f64>() / dn.len() as f64;
    assert!((r.gamma - expect).abs() < 1e-12 * expect);
    assert_eq!(r.total, r.gamma);
}

#[test]
fn loss_is_linear_in_weights() {
    let sets = small_sets(&[-10.0]);
    let wp = WaveParams::default();
    let m = random_model(SpatialMode::Partial, 4);
    let zero = LossWeights {
        pde: 0.0,
        gamma: 0.0,
        gamma_out: 0.0,
    };
    assert_eq!(total_loss(&m, &sets, &wp, zero).unwrap().total, 0.0);
    let one = total_loss(&m, &sets, &wp, LossWeights::default()).unwrap();
    let two = total_loss(&m, &sets, &wp, LossWeights { pde: 2.0, ..LossWeights::default() }).unwrap();
    assert!(one.pde > 0.0 && one.gamma > 0.0 && one.gamma_out > 0.0);
    assert_eq!(two.pde, one.pde);
    assert_eq!(two.weights.pde * two.pde, 2.0 * (one.weights.pde * one.pde));
    assert!((two.total - one.total - one.pde).abs() < 1e-12 * two.total);
}

#[test]
fn empty_enabled_term_is_an_error() {
    let mut sets = small_sets(&[0.0]);
    sets[0].1.inner.clear();
    let r = total_loss(&zero_model(), &sets, &WaveParams::default(), LossWeights::default());
    assert!(matches!(r, Err(Error::EmptyPointSet { .. })));
    let w = LossWeights {
        gamma: 0.0,
        ..LossWeights::default()
    };
    assert!(total_loss(&zero_model(), &sets, &WaveParams::default(), w).is_ok());
}

#[test]
fn batched_loss_matches_pointwise_loss() {
    let sets = small_sets(&[-30.0, 10.0]);
    let wp = WaveParams {
        direction_deg: 15.0,
        ..WaveParams::default()
    };
    for mode in [SpatialMode::Partial, SpatialMode::Total] {
        let m = random_model(mode, 5);
        let a = total_loss(&m, &sets, &wp, LossWeights::default()).unwrap();
        let b = total_loss_pointwise(&m, &sets, &wp, LossWeights::default()).unwrap();
        for (x, y) in [(a.pde, b.pde), (a.gamma, b.gamma), (a.gamma_out, b.gamma_out)] {
            assert!((x - y).abs() < 1e-10 * y.abs().max(1e-300), "{mode}: {x} vs {y}");
        }
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let sets = small_sets(&[0.0, 30.0]);
    let wp = WaveParams::default();
    let w = LossWeights {
        pde: 0.01,
        gamma: 0.7,
        gamma_out: 1.3,
    };
    for mode in [SpatialMode::Partial, SpatialMode::Total] {
        let m = random_model(mode, 6);
        let prob = TrainingProblem::new(&m, &sets, &wp, w).unwrap();
        let mut grad = vec![0.0; m.param_count()];
        let rep = prob.loss_and_grad(&m, &mut grad).unwrap();
        assert_eq!(rep, prob.loss(&m).unwrap());
        let h = 1e-6;
        let n = m.param_count();
        for i in (0..n).step_by(11).chain([n - 2, n - 1]) {
            let mut a = m.clone();
            a.params_mut()[i] += h;
            let mut b = m.clone();
            b.params_mut()[i] -= h;
            let fd = (prob.loss(&a).unwrap().total - prob.loss(&b).unwrap().total) / (2.0 * h);
            let scale = grad[i].abs().max(1e-3 * rep.total);
            assert!((fd - grad[i]).abs() < 1e-5 * scale, "{mode} param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}

#[test]
fn single_precision_trunk_tracks_double_precision() {
    let sets = small_sets(&[-10.0, 30.0]);
    let wp = WaveParams::default();
    for mode in [SpatialMode::Partial, SpatialMode::Total] {
        let m = random_model(mode, 8);
        let p64 = TrainingProblem::new(&m, &sets, &wp, LossWeights::default()).unwrap();
        let p32 = p64.clone().with_precision(Precision::F32);
        assert_eq!(p32.precision(), Precision::F32);
        let mut g64 = vec![0.0; m.param_count()];
        let mut g32 = vec![0.0; m.param_count()];
        let a = p64.loss_and_grad(&m, &mut g64).unwrap();
        let b = p32.loss_and_grad(&m, &mut g32).unwrap();
        assert!((a.total - b.total).abs() < 1e-5 * a.total, "{mode}: {} vs {}", a.total, b.total);
        let norm = g64.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = g64.iter().zip(&g32).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(diff < 1e-4 * norm, "{mode}: gradient differs by {diff} of {norm}");
        let back = p32.with_precision(Precision::F64);
        assert_eq!(back.loss(&m).unwrap(), a);
    }
}

#[test]
fn mode_mismatch_is_rejected() {
    let sets = small_sets(&[0.0]);
    let m = random_model(SpatialMode::Partial, 7);
    let prob = TrainingProblem::new(&m, &sets, &WaveParams::default(), LossWeights::default()).unwrap();
    let mut t = m.clone();
    t.set_spatial_mode(SpatialMode::Total);
    assert!(prob.loss(&t).is_err());
}

#[test]
fn zero_model_rigid_residual_is_rotation_covariant() {
    let base = PolarBoundary::default();
    let wp = WaveParams::default();
    let m = zero_model();
    let alpha = 0.4;
    let rot = base.rotated(alpha);
    let wp_rot = WaveParams {
        direction_deg: wp.direction_deg + alpha.to_degrees(),
        ..wp.clone()
    };
    let f0 = ModelField::new(&m, &base);
    let f1 = ModelField::new(&m, &rot);
    for t in [0.1, 1.3, 2.9, 5.0] {
        let p = base.boundary_point(t);
        let n = base.boundary_normal(t);
        let pr = rotate_about(p, base.center, alpha);
        let nr = rotate_about(n, [0.0, 0.0], alpha);
        let a = rigid_bc_residual(&f0, &base, &wp, p, n).unwrap().norm();
        let b = rigid_bc_residual(&f1, &rot, &wp_rot, pr, nr).unwrap().norm();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn flux_divergence_vanishes_for_plane_waves_and_real_fields() {
    let wp = WaveParams::default();
    for k in [PI, TAU, 2.0 * TAU] {
        let pw = PlaneWave {
            k,
            d: [0.6, 0.8],
            amp: 1.3,
        };
        for p in [[0.1, 0.2], [0.9, 0.5], [0.33, 0.77]] {
            assert!(flux_divergence(&pw, &wp, p).unwrap().abs() < 1e-10);
        }
    }
    let real = Synthetic(|p: Point| ComplexSample {
        value: c((3.0 * p[0]).sin() * p[1], 0.0),
        grad: Some([c(3.0 * (3.0 * p[0]).cos() * p[1], 0.0), c((3.0 * p[0]).sin(), 0.0)]),
        lap: Some(c(-9.0 * (3.0 * p[0]).sin() * p[1], 0.0)),
    });
    for p in [[0.1, 0.2], [0.9, 0.5]] {
        assert_eq!(flux_divergence(&real, &wp, p).unwrap(), 0.0);
    }
}
