use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::fem::build_mesh;
use crate::geometry::ProbeSet;
use crate::operator::ModelSpec;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn identical_fields_have_zero_error() {
    let v = vec![c(1.0, -2.0), c(0.3, 0.4)];
    for mode in [ErrorMode::Complex, ErrorMode::Amplitude] {
        assert_eq!(relative_error(&v, &v, mode).unwrap(), 0.0);
    }
}

#[test]
fn doubled_prediction_has_unit_error() {
    let r = vec![c(1.0, -2.0), c(0.3, 0.4), c(-5.0, 0.0)];
    let p: Vec<_> = r.iter().map(|z| 2.0 * z).collect();
    assert!((relative_error(&p, &r, ErrorMode::Complex).unwrap() - 1.0).abs() < 1e-15);
    assert!((relative_error(&p, &r, ErrorMode::Amplitude).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn hand_computed_error() {
    let p = [c(1.0, 0.0), c(0.0, 0.0)];
    let r = [c(1.0, 0.0), c(1.0, 0.0)];
    assert_eq!(relative_error(&p, &r, ErrorMode::Complex).unwrap(), 0.5);
    // A pure phase error is invisible in amplitude mode.
    let p = [c(0.0, 1.0), c(-1.0, 0.0)];
    assert_eq!(relative_error(&p, &r, ErrorMode::Amplitude).unwrap(), 0.0);
    assert_eq!(relative_error(&p, &r, ErrorMode::Complex).unwrap(), (2f64.sqrt() + 2.0) / 2.0);
}

#[test]
fn bad_error_inputs() {
    let z = [c(0.0, 0.0); 3];
    assert!(matches!(relative_error(&z, &z, ErrorMode::Complex), Err(Error::ZeroReference)));
    assert!(matches!(
        relative_error(&z[..2], &[c(1.0, 0.0); 3], ErrorMode::Complex),
        Err(Error::Dimension { .. })
    ));
}

fn field() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..40)
}

proptest! {
    #[test]
    fn error_is_invariant_under_joint_scaling(v in field(), s in 0.01..100.0f64) {
        prop_assume!(v.iter().any(|t| t.0 != 0.0 || t.1 != 0.0));
        let r: Vec<_> = v.iter().map(|t| c(t.0, t.1)).collect();
        let p: Vec<_> = v.iter().map(|t| c(t.0 + t.2, t.1 + t.3)).collect();
        for mode in [ErrorMode::Complex, ErrorMode::Amplitude] {
            let e = relative_error(&p, &r, mode).unwrap();
            let rs: Vec<_> = r.iter().map(|z| z * s).collect();
            let ps: Vec<_> = p.iter().map(|z| z * s).collect();
            let es = relative_error(&ps, &rs, mode).unwrap();
            prop_assert!((e - es).abs() <= 1e-12 * e.max(1.0));
            prop_assert!(e >= 0.0);
        }
    }

    #[test]
    fn error_is_linear_in_the_deviation(v in field(), t in 0.0..10.0f64) {
        prop_assume!(v.iter().any(|q| q.0 != 0.0 || q.1 != 0.0));
        let r: Vec<_> = v.iter().map(|q| c(q.0, q.1)).collect();
        let at = |s: f64| {
            let p: Vec<_> = v.iter().map(|q| c(q.0 + s * q.2, q.1 + s * q.3)).collect();
            relative_error(&p, &r, ErrorMode::Complex).unwrap()
        };
        prop_assert!((at(t) - t * at(1.0)).abs() <= 1e-12 * at(t).max(1.0));
    }
}

#[test]
fn default_subdomain_follows_the_concavity() {
    let s = SubdomainSpec::default();
    let g = PolarBoundary::default();
    let c0 = s.center_for(&g);
    assert!((c0[0] - (0.5 - g.radius(std::f64::consts::PI))).abs() < 1e-12);
    assert!((c0[1] - 0.5).abs() < 1e-9);
    let gr = g.with_rotation_deg(30.0);
    let c1 = s.center_for(&gr);
    let expect = crate::geometry::rotate_about(c0, g.center, 30f64.to_radians());
    assert!((c1[0] - expect[0]).abs() < 1e-9 && (c1[1] - expect[1]).abs() < 1e-9);
    assert!(gr.sdf(c1).abs() < 1e-12);

    let fixed = SubdomainSpec {
        center: Some([0.1, 0.2]),
        radius: 0.05,
    };
    assert_eq!(fixed.center_for(&gr), [0.1, 0.2]);
    assert!(fixed.contains(&gr, [0.12, 0.2]) && !fixed.contains(&gr, [0.2, 0.2]));
    assert!(SubdomainSpec { radius: 0.0, ..fixed }.validate().is_err());
}

fn small_mesh() -> MeshConfig {
    MeshConfig {
        n_theta: 32,
        n_s: 8,
        grading: 2.0,
    }
}

fn small_model(seed: u64) -> DeepOnetModel {
    let probes = ProbeSet::ring([0.5, 0.5], 0.3, 10).unwrap();
    DeepOnetModel::init(ModelSpec::uniform(8, 2, 4), probes, seed).unwrap()
}

const TRAIN: [f64; 5] = [-30.0, -10.0, 0.0, 10.0, 30.0];

fn sweep(model: &DeepOnetModel, base: &PolarBoundary, angles: &[f64], train: &[f64], threads: usize) -> Vec<SweepRow> {
    let wp = WaveParams::default();
    let mesh = small_mesh();
    let sub = SubdomainSpec::default();
    let setup = SweepSetup {
        model,
        base,
        wp: &wp,
        mesh: &mesh,
        subdomain: &sub,
        training_angles_deg: train,
    };
    angle_sweep(&setup, angles, threads).unwrap()
}

#[test]
fn sweep_over_training_angles() {
    let model = small_model(3);
    let rows = sweep(&model, &PolarBoundary::default(), &TRAIN, &TRAIN, 1);
    assert_eq!(rows.len(), 5);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.angle_deg, TRAIN[k]);
        assert!(r.failure.is_none());
        for e in [r.err_global, r.err_global_amp, r.err_d2, r.err_d2_amp] {
            assert!(e.is_finite() && e >= 0.0);
        }
        assert_eq!(r.cross.len(), 5);
        assert_eq!(r.cross[k], r.err_global);
        assert_eq!(r.fem_gap[k], 0.0);
        assert!(r.fem_gap.iter().all(|&g| g.is_finite() && g >= 0.0));
        assert!(r.cross.iter().all(|&g| g.is_finite() && g >= 0.0));
    }
}

#[test]
fn cross_error_at_own_angle_matches_global_error_for_unseen_angles() {
    // A sweep angle that is also listed as a reference angle is solved once
    // and the two errors coincide by construction.
    let model = small_model(4);
    let rows = sweep(&model, &PolarBoundary::default(), &[5.0, 20.0], &[20.0, 5.0], 1);
    assert_eq!(rows[0].cross[1], rows[0].err_global);
    assert_eq!(rows[1].cross[0], rows[1].err_global);
}

#[test]
fn fem_gap_grows_with_angular_distance() {
    let model = small_model(5);
    let rows = sweep(&model, &PolarBoundary::default(), &[0.0], &[0.0, 5.0, 30.0], 1);
    let g = &rows[0].fem_gap;
    assert!(g[1] > 0.0 && g[1] < g[2], "{g:?}");
}

#[test]
fn threaded_sweep_keeps_input_order() {
    let model = small_model(6);
    let base = PolarBoundary::default();
    let angles = [12.0, -7.0, 3.0, 0.0];
    let a = sweep(&model, &base, &angles, &TRAIN[1..4], 1);
    let b = sweep(&model, &base, &angles, &TRAIN[1..4], 3);
    assert_eq!(a, b);
}

#[test]
fn failed_reference_marks_only_its_row() {
    // Off center, the largest lobe reaches past the square for some angles.
    let base = PolarBoundary {
        center: [0.25, 0.5],
        ..PolarBoundary::default()
    };
    let candidates: Vec<f64> = (-18..=18).map(|k| 10.0 * k as f64).collect();
    let ok: Vec<bool> = candidates
        .iter()
        .map(|&a| build_mesh(&base.rotated(a.to_radians()), &small_mesh()).is_ok())
        .collect();
    assert!(ok.iter().any(|&v| v) && ok.iter().any(|&v| !v));
    let model = small_model(7);
    let rows = sweep(&model, &base, &candidates, &[], 1);
    for ((r, &good), &a) in rows.iter().zip(&ok).zip(&candidates) {
        assert_eq!(r.angle_deg, a);
        assert_eq!(r.failure.is_none(), good, "angle {a}");
        if !good {
            assert!(r.err_global.is_nan());
        }
    }
}

#[test]
fn sweep_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let base = PolarBoundary::default();
    let angles = [-40.0, 15.0];
    let mut bytes = Vec::new();
    for run in 0..2 {
        let model = small_model(8);
        let rows = sweep(&model, &base, &angles, &TRAIN, 1);
        let path = dir.path().join(format!("sweep{run}.csv"));
        write_sweep_csv(&rows, &TRAIN, &path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 6 + 2 * TRAIN.len() + 1);
    assert!(header.contains("err_vs_fem_-30"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn masked_cells_track_the_inclusion_area() {
    let g = PolarBoundary::default();
    let model = small_model(9);
    let grid = export_field_grid(&FieldSource::Model(&model), &g, 256, None).unwrap();
    let frac = grid.masked_count() as f64 / (256.0 * 256.0);
    let area = g.inclusion_area();
    assert!((frac - area).abs() / area < 0.05, "{frac} vs {area}");
    assert!(grid.get(0, 0).is_some());
    assert!(grid.get(128, 128).is_none());
}

#[test]
fn fem_grid_is_deterministic_and_well_formed() {
    let g = PolarBoundary::default();
    let wp = WaveParams::default();
    let dir = tempfile::tempdir().unwrap();
    let mut pgms = Vec::new();
    for run in 0..2 {
        let sol = crate::fem::solve(&g, &small_mesh(), &wp).unwrap();
        let grid = export_field_grid(&FieldSource::Fem(&sol), &g, 40, Some(&wp)).unwrap();
        let files = grid.write(dir.path(), &format!("f{run}")).unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 40 * 40 + 1);
        pgms.push((std::fs::read(&files[0]).unwrap(), std::fs::read(&files[1]).unwrap()));
        let scale = std::fs::read_to_string(&files[2]).unwrap();
        let (lo, hi) = grid.amplitude_range().unwrap();
        assert!(scale.contains(&format!("min {lo:.9e}")) && scale.contains(&format!("max {hi:.9e}")));
    }
    assert_eq!(pgms[0], pgms[1]);
    let pgm = &pgms[0].1;
    let head = b"P5\n40 40\n255\n";
    assert_eq!(&pgm[..head.len()], head);
    assert_eq!(pgm.len(), head.len() + 40 * 40);
    let body = &pgm[head.len()..];
    assert!(body.contains(&0) && body.contains(&1) && body.contains(&255));
}

#[test]
fn incident_wave_is_added_on_request() {
    let g = PolarBoundary::default();
    let wp = WaveParams::default();
    let model = small_model(10);
    let w = export_field_grid(&FieldSource::Model(&model), &g, 8, None).unwrap();
    let t = export_field_grid(&FieldSource::Model(&model), &g, 8, Some(&wp)).unwrap();
    for j in 0..8 {
        for i in 0..8 {
            if let (Some(a), Some(b)) = (w.get(i, j), t.get(i, j)) {
                let inc = crate::physics::incident_field(&wp, w.cell_center(i, j)).0;
                assert!((b - a - inc).norm() < 1e-14);
            }
        }
    }
    assert!(export_field_grid(&FieldSource::Model(&model), &g, 1, None).is_err());
}

#[test]
fn default_diagnostics_pass_and_report_measurements() {
    let report = run_diagnostics(&CheckContext::new(0), &[]).unwrap();
    assert_eq!(report.rows.len(), checks().len());
    assert!(report.all_passed(), "{report}");
    for r in &report.rows {
        assert!(r.outcome.measured.is_finite());
        assert!(r.outcome.tolerance.is_finite());
    }
    let text = report.to_string();
    assert_eq!(text.lines().count(), report.rows.len());
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn corrupted_distance_gradient_is_caught() {
    let bad: SdfJetFn = Arc::new(|g: &PolarBoundary, p, o| {
        let mut j = g.sdf_jet(p, o)?;
        j.grad[0] *= 1.001;
        Ok(j)
    });
    let ctx = CheckContext::new(0).with_sdf_jet(bad);
    let names = vec!["sdf-jet-fd".to_string(), "encoding-injectivity".to_string()];
    let report = run_diagnostics(&ctx, &names).unwrap();
    assert!(!report.get("sdf-jet-fd").unwrap().passed);
    assert!(report.get("sdf-jet-fd").unwrap().measured > 1e-4);
    assert!(report.get("encoding-injectivity").unwrap().passed);
    assert!(!report.all_passed());
}

#[test]
fn unknown_check_is_a_config_error() {
    let err = run_diagnostics(&CheckContext::new(0), &["nope".into()]).unwrap_err();
    assert_eq!(err.class(), crate::error::ErrorClass::Config);
}

#[test]
fn diagnostics_csv_has_one_row_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let names = vec!["flux-real-field".to_string(), "plane-wave-absorbing".to_string()];
    let report = run_diagnostics(&CheckContext::new(1), &names).unwrap();
    let path = dir.path().join("checks.csv");
    report.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("flux-real-field,pass,0.000000e0"));
}
