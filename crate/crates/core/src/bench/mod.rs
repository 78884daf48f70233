//! Error metrics against the finite-element reference, angle sweeps, field
//! exports and the diagnostics suite.

mod diagnostics;
mod grid;

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{solve, FemSolution, MeshConfig};
use crate::geometry::{Point, PolarBoundary};
use crate::operator::DeepOnetModel;
use crate::physics::WaveParams;

pub use diagnostics::{checks, run_diagnostics, Check, CheckContext, CheckOutcome, CheckRow, DiagnosticsReport, SdfJetFn};
pub use grid::{export_field_grid, FieldGrid, FieldSource};

/// Points within this distance inside an inclusion still count as exterior.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    /// Differences of moduli.
    Amplitude,
    /// Modulus of the complex difference.
    Complex,
}

/// `sum |pred_i - ref_i| / sum |ref_i|`.
pub fn relative_error(pred: &[Complex64], reference: &[Complex64], mode: ErrorMode) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Dimension {
            context: "relative error",
            expected: reference.len(),
            got: pred.len(),
        });
    }
    let den: f64 = reference.iter().map(|z| z.norm()).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| match mode {
            ErrorMode::Complex => (p - r).norm(),
            ErrorMode::Amplitude => (p.norm() - r.norm()).abs(),
        })
        .sum();
    Ok(num / den)
}

/// Disk on which the local error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubdomainSpec {
    /// Fixed center. `None` follows the concavity mouth of each geometry.
    pub center: Option<Point>,
    pub radius: f64,
}

impl Default for SubdomainSpec {
    fn default() -> Self {
        Self {
            center: None,
            radius: 0.15,
        }
    }
}

impl SubdomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("subdomain radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    pub fn center_for(&self, geom: &PolarBoundary) -> Point {
        self.center
            .unwrap_or_else(|| geom.boundary_point(geom.min_radius_angle()))
    }

    pub fn contains(&self, geom: &PolarBoundary, p: Point) -> bool {
        let c = self.center_for(geom);
        (p[0] - c[0]).hypot(p[1] - c[1]) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub angles_deg: Vec<f64>,
    pub subdomain: SubdomainSpec,
    /// Worker threads. Rows come out in input order either way.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angles_deg: (-60..=60).map(f64::from).collect(),
            subdomain: SubdomainSpec::default(),
            threads: 1,
        }
    }
}

/// Errors of the model at one rotation angle, all in complex mode unless
/// suffixed `_amp`. A row whose reference solve failed carries `failure`
/// and NaN errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub nodes: usize,
    pub err_global: f64,
    pub err_global_amp: f64,
    pub err_d2: f64,
    pub err_d2_amp: f64,
    /// Model at this angle against the reference at each training angle.
    pub cross: Vec<f64>,
    /// Reference at each training angle against the reference at this angle.
    pub fem_gap: Vec<f64>,
    pub failure: Option<String>,
}

impl SweepRow {
    fn failed(angle_deg: f64, n_train: usize, e: &Error) -> Self {
        Self {
            angle_deg,
            nodes: 0,
            err_global: f64::NAN,
            err_global_amp: f64::NAN,
            err_d2: f64::NAN,
            err_d2_amp: f64::NAN,
            cross: vec![f64::NAN; n_train],
            fem_gap: vec![f64::NAN; n_train],
            failure: Some(e.to_string()),
        }
    }
}

/// Everything a sweep row needs besides its own angle.
pub struct SweepSetup<'a> {
    pub model: &'a DeepOnetModel,
    pub base: &'a PolarBoundary,
    pub wp: &'a WaveParams,
    pub mesh: &'a MeshConfig,
    pub subdomain: &'a SubdomainSpec,
    pub training_angles_deg: &'a [f64],
}

struct Reference {
    angle_deg: f64,
    geom: PolarBoundary,
    solution: FemSolution,
}

fn reference_at(setup: &SweepSetup, angle_deg: f64) -> Result<Reference> {
    let geom = setup.base.rotated(angle_deg.to_radians());
    let solution = solve(&geom, setup.mesh, setup.wp)?;
    Ok(Reference {
        angle_deg,
        geom,
        solution,
    })
}

fn sweep_row(setup: &SweepSetup, train: &[Reference], angle_deg: f64) -> Result<SweepRow> {
    let own;
    let here = match train.iter().find(|r| r.angle_deg == angle_deg) {
        Some(r) => r,
        None => {
            own = reference_at(setup, angle_deg)?;
            &own
        }
    };
    let geom = &here.geom;
    let nodes = &here.solution.mesh.nodes;
    let reference = here.solution.nodal();
    let pred = setup.model.evaluate_points(geom, nodes)?;
    let err_global = relative_error(&pred, reference, ErrorMode::Complex)?;
    let err_global_amp = relative_error(&pred, reference, ErrorMode::Amplitude)?;

    let local: Vec<usize> = (0..nodes.len())
        .filter(|&i| setup.subdomain.contains(geom, nodes[i]))
        .collect();
    if local.is_empty() {
        return Err(Error::Config(format!("subdomain holds no mesh nodes at {angle_deg} degrees")));
    }
    let pick = |v: &[Complex64]| local.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let (pl, rl) = (pick(&pred), pick(reference));
    let err_d2 = relative_error(&pl, &rl, ErrorMode::Complex)?;
    let err_d2_amp = relative_error(&pl, &rl, ErrorMode::Amplitude)?;

    let mut cross = Vec::with_capacity(train.len());
    let mut fem_gap = Vec::with_capacity(train.len());
    for t in train {
        if std::ptr::eq(t, here) {
            cross.push(err_global);
            fem_gap.push(0.0);
            continue;
        }
        // Model here against the training reference, on that mesh's nodes
        // that lie outside this inclusion.
        let idx: Vec<usize> = (0..t.solution.mesh.nodes.len())
            .filter(|&i| geom.sdf(t.solution.mesh.nodes[i]) >= -BOUNDARY_SLACK)
            .collect();
        let pts: Vec<Point> = idx.iter().map(|&i| t.solution.mesh.nodes[i]).collect();
        let p = setup.model.evaluate_points(geom, &pts)?;
        let r: Vec<Complex64> = idx.iter().map(|&i| t.solution.values[i]).collect();
        cross.push(relative_error(&p, &r, ErrorMode::Complex)?);

        // Training reference against this reference, on this mesh's nodes
        // that lie outside the training inclusion.
        let mut other = Vec::with_capacity(nodes.len());
        let mut mine = Vec::with_capacity(nodes.len());
        for (i, &q) in nodes.iter().enumerate() {
            if t.geom.sdf(q) >= -BOUNDARY_SLACK {
                other.push(t.solution.field_at(q)?);
                mine.push(reference[i]);
            }
        }
        fem_gap.push(relative_error(&other, &mine, ErrorMode::Complex)?);
    }
    Ok(SweepRow {
        angle_deg,
        nodes: nodes.len(),
        err_global,
        err_global_amp,
        err_d2,
        err_d2_amp,
        cross,
        fem_gap,
        failure: None,
    })
}

/// Evaluates the model against the reference solution at every angle.
///
/// The training references are solved once up front; a failure there
/// aborts the sweep since every row depends on them. A failed solve at a
/// sweep angle only marks that row.
pub fn angle_sweep(setup: &SweepSetup, angles_deg: &[f64], threads: usize) -> Result<Vec<SweepRow>> {
    setup.subdomain.validate()?;
    setup.mesh.validate()?;
    setup.wp.validate()?;
    if angles_deg.iter().any(|a| !a.is_finite()) {
        return Err(Error::Config("sweep angles must be finite".into()));
    }
    let train = setup
        .training_angles_deg
        .iter()
        .map(|&a| reference_at(setup, a))
        .collect::<Result<Vec<_>>>()?;
    let n_train = train.len();
    let row = |a: f64| sweep_row(setup, &train, a).unwrap_or_else(|e| SweepRow::failed(a, n_train, &e));
    let threads = threads.clamp(1, angles_deg.len().max(1));
    if threads == 1 {
        return Ok(angles_deg.iter().map(|&a| row(a)).collect());
    }
    let mut done: HashMap<usize, SweepRow> = HashMap::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let row = &row;
                s.spawn(move || {
                    (w..angles_deg.len())
                        .step_by(threads)
                        .map(|i| (i, row(angles_deg[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            done.extend(h.join().expect("sweep worker panicked"));
        }
    });
    Ok((0..angles_deg.len()).map(|i| done.remove(&i).unwrap()).collect())
}

fn fmt_err(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.9e}")
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], training_angles_deg: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["angle_deg", "nodes", "err_global", "err_global_amp", "err_d2", "err_d2_amp"]
        .map(String::from)
        .to_vec();
    header.extend(training_angles_deg.iter().map(|b| format!("err_vs_fem_{b}")));
    header.extend(training_angles_deg.iter().map(|b| format!("fem_gap_{b}")));
    header.push("failure".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.angle_deg.to_string(), r.nodes.to_string()];
        rec.extend([r.err_global, r.err_global_amp, r.err_d2, r.err_d2_amp].map(fmt_err));
        rec.extend(r.cross.iter().map(|&v| fmt_err(v)));
        rec.extend(r.fem_gap.iter().map(|&v| fmt_err(v)));
        rec.push(r.failure.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
