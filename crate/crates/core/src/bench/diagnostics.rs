use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::loss::{param_gradient, JetEntry, LossExpr};
use crate::diffcore::{Jet2, Mlp, MlpSpec};
use crate::error::Result;
use crate::fem::{build_mesh, solve_mms, MeshConfig};
use crate::geometry::{min_encoding_gap, JetOrder, Point, PolarBoundary, ProbeSet, SdfJet};
use crate::operator::ComplexSample;
use crate::physics::{absorbing_residual, flux_divergence, helmholtz_residual, FieldEvaluator, PlaneWave, WaveParams};
use crate::registry::Registry;

pub type SdfJetFn = Arc<dyn Fn(&PolarBoundary, Point, JetOrder) -> Result<SdfJet> + Send + Sync>;

/// Inputs shared by every check. `sdf_jet` can be swapped out to verify
/// that the geometry check notices a wrong derivative.
#[derive(Clone)]
pub struct CheckContext {
    pub seed: u64,
    pub geom: PolarBoundary,
    pub mesh: MeshConfig,
    pub sdf_jet: SdfJetFn,
}

impl CheckContext {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            geom: PolarBoundary::default(),
            mesh: MeshConfig::default(),
            sdf_jet: Arc::new(|g: &PolarBoundary, p, o| g.sdf_jet(p, o)),
        }
    }

    pub fn with_sdf_jet(mut self, f: SdfJetFn) -> Self {
        self.sdf_jet = f;
        self
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    /// Passes when `measured < tolerance`.
    fn below(measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            measured,
            tolerance,
            passed: measured < tolerance,
            detail: detail.into(),
        }
    }
}

pub trait Check: Send + Sync {
    fn description(&self) -> &'static str;
    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome>;
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn random_mlp(rng: &mut ChaCha8Rng) -> (Mlp, Vec<f64>) {
    let spec = MlpSpec::new(vec![2, 32, 32, 32, 32, 1], "tanh");
    let mlp = Mlp::new(spec.clone()).expect("valid spec");
    let params = mlp
        .layers()
        .iter()
        .flat_map(|l| {
            let s = (1.0 / l.n_in as f64).sqrt();
            let n = l.n_in * l.n_out;
            (0..n + l.n_out).map(move |i| if i < n { s } else { 0.1 }).collect::<Vec<_>>()
        })
        .map(|s| s * (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt())
        .collect::<Vec<_>>();
    (mlp, params)
}

fn xy(p: Point) -> [Jet2; 2] {
    [Jet2::variable(p[0], 0, 2), Jet2::variable(p[1], 1, 2)]
}

struct MlpJetFd;

impl Check for MlpJetFd {
    fn description(&self) -> &'static str {
        "network jets against central differences, 200 points"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(1);
        let (mlp, params) = random_mlp(&mut rng);
        let h = 1e-4;
        let jet = |p: Point| -> Result<Jet2> { Ok(mlp.forward_jet(&params, &xy(p))?.remove(0)) };
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let j = jet(p)?;
            for a in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[a] += h;
                pm[a] -= h;
                let (jp, jm) = (jet(pp)?, jet(pm)?);
                worst = worst.max(rel(j.d[a], (jp.value - jm.value) / (2.0 * h), 1e-2));
                for b in 0..2 {
                    worst = worst.max(rel(j.d2(a, b), (jp.d[b] - jm.d[b]) / (2.0 * h), 1e-2));
                }
            }
        }
        Ok(CheckOutcome::below(worst, 1e-5, "max relative error of first and second derivatives"))
    }
}

struct ParamGradientFd;

impl Check for ParamGradientFd {
    fn description(&self) -> &'static str {
        "parameter gradient of a Laplacian loss against central differences"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(2);
        let (mlp, params) = random_mlp(&mut rng);
        let batch: Vec<Vec<Jet2>> = (0..8)
            .map(|_| xy([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).to_vec())
            .collect();
        let residual = |s: usize| {
            LossExpr::Sum(vec![
                LossExpr::entry(s, 0, JetEntry::D2(0, 0)),
                LossExpr::entry(s, 0, JetEntry::D2(1, 1)),
                LossExpr::mul(LossExpr::Const(4.0), LossExpr::entry(s, 0, JetEntry::Value)),
            ])
        };
        let loss = LossExpr::Mean((0..batch.len()).map(|s| LossExpr::abs2(residual(s))).collect());
        let (_, grad) = param_gradient(&mlp, &params, &batch, &loss)?;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let n = params.len();
        for _ in 0..60 {
            let i = rng.random_range(0..n);
            let mut p = params.clone();
            p[i] += h;
            let lp = param_gradient(&mlp, &p, &batch, &loss)?.0;
            p[i] -= 2.0 * h;
            let lm = param_gradient(&mlp, &p, &batch, &loss)?.0;
            worst = worst.max(rel(grad[i], (lp - lm) / (2.0 * h), 1e-3 * scale));
        }
        Ok(CheckOutcome::below(worst, 1e-4, format!("max relative error over 60 of {n} parameters")))
    }
}

/// A point at least `r_min` from the inclusion center, inside the unit square.
fn away_from_center(rng: &mut ChaCha8Rng, g: &PolarBoundary, r_min: f64) -> Point {
    loop {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if (p[0] - g.center[0]).hypot(p[1] - g.center[1]) > r_min {
            return p;
        }
    }
}

struct SdfJetFd;

impl Check for SdfJetFd {
    fn description(&self) -> &'static str {
        "distance derivatives of orders 1 to 3 against differences of the order below"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(3);
        let g = &ctx.geom;
        let jet = |p: Point| (ctx.sdf_jet)(g, p, JetOrder::Third);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = away_from_center(&mut rng, g, 0.05);
            let j = jet(p)?;
            let third = j.third.expect("third order requested");
            for a in 0..2 {
                let shifted = |s: f64| {
                    let mut q = p;
                    q[a] += s * h;
                    jet(q)
                };
                let st = [shifted(-2.0)?, shifted(-1.0)?, shifted(1.0)?, shifted(2.0)?];
                // Fourth-order central difference.
                let fd = |f: &dyn Fn(&SdfJet) -> f64| {
                    (8.0 * (f(&st[2]) - f(&st[1])) - (f(&st[3]) - f(&st[0]))) / (12.0 * h)
                };
                worst = worst.max(rel(j.grad[a], fd(&|s| s.value), 1.0));
                for b in 0..2 {
                    worst = worst.max(rel(j.hess[a][b], fd(&|s| s.grad[b]), 1.0));
                    for c in 0..2 {
                        // Index into (xxx, xxy, xyy, yyy) by the number of y's.
                        let t = third[a + b + c];
                        worst = worst.max(rel(t, fd(&|s| s.hess[b][c]), 1.0));
                    }
                }
            }
        }
        Ok(CheckOutcome::below(worst, 1e-6, "max relative error over 1000 points with r > 0.05"))
    }
}

struct BoundaryNormal;

impl Check for BoundaryNormal {
    fn description(&self) -> &'static str {
        "distance gradient on the boundary is orthogonal to the tangent"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let g = &ctx.geom;
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let t = TAU * i as f64 / 1000.0;
            let n = (ctx.sdf_jet)(g, g.boundary_point(t), JetOrder::First)?.unit_normal();
            let tan = g.boundary_tangent(t);
            let l = tan[0].hypot(tan[1]);
            worst = worst.max(((n[0] * tan[0] + n[1] * tan[1]) / l).abs());
        }
        Ok(CheckOutcome::below(worst, 1e-10, "max |n . t| over 1000 boundary points"))
    }
}

struct PlaneWaveResidual;

impl Check for PlaneWaveResidual {
    fn description(&self) -> &'static str {
        "Helmholtz residual of exact plane waves at k0 = pi, 2 pi, 4 pi"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(4);
        let mut worst: f64 = 0.0;
        for k0 in [PI, TAU, 2.0 * TAU] {
            let wp = WaveParams {
                direction_deg: rng.random_range(0.0..360.0),
                ..WaveParams::with_k0(k0)
            };
            let wave = PlaneWave::incident(&wp);
            for _ in 0..1000 {
                let p = [rng.random::<f64>(), rng.random::<f64>()];
                worst = worst.max(helmholtz_residual(&wp, &wave.at(p)).norm());
            }
        }
        Ok(CheckOutcome::below(worst, 1e-8, "max |residual| over 1000 points per wavenumber"))
    }
}

struct PlaneWaveAbsorbing;

impl Check for PlaneWaveAbsorbing {
    fn description(&self) -> &'static str {
        "absorbing residual of a plane wave leaving through the facing edge"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(5);
        let mut worst: f64 = 0.0;
        for k0 in [PI, TAU, 2.0 * TAU] {
            for (deg, n) in [(0.0, [1.0, 0.0]), (90.0, [0.0, 1.0]), (180.0, [-1.0, 0.0]), (270.0, [0.0, -1.0])] {
                let wp = WaveParams {
                    direction_deg: deg,
                    ..WaveParams::with_k0(k0)
                };
                // The exact unit vector, free of rounding in cos and sin.
                let wave = PlaneWave { d: n, ..PlaneWave::incident(&wp) };
                for _ in 0..250 {
                    let s = rng.random::<f64>();
                    let p = match deg as u32 {
                        0 => [1.0, s],
                        90 => [s, 1.0],
                        180 => [0.0, s],
                        _ => [s, 0.0],
                    };
                    worst = worst.max(absorbing_residual(&wp, &wave.at(p), n).norm());
                }
            }
        }
        Ok(CheckOutcome {
            measured: worst,
            tolerance: 0.0,
            passed: worst == 0.0,
            detail: "max |residual| on the edge whose normal is the propagation direction".into(),
        })
    }
}

struct EncodingInjectivity;

impl Check for EncodingInjectivity {
    fn description(&self) -> &'static str {
        "probe encodings of 1 degree rotations over [-60, 60] are distinct"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let probes = ProbeSet::ring(ctx.geom.center, 0.3, 10)?;
        let geoms: Vec<_> = (-60..=60).map(|d| ctx.geom.with_rotation_deg(d as f64)).collect();
        let gap = min_encoding_gap(&geoms, &probes);
        Ok(CheckOutcome {
            measured: gap,
            tolerance: 1e-4,
            passed: gap > 1e-4,
            detail: "min pairwise L-infinity gap, must exceed the tolerance".into(),
        })
    }
}

fn mms_wave() -> (WaveParams, PlaneWave) {
    let wp = WaveParams::default();
    let exact = PlaneWave::incident(&WaveParams {
        direction_deg: 20.0,
        ..wp.clone()
    });
    (wp, exact)
}

struct FemMms;

impl Check for FemMms {
    fn description(&self) -> &'static str {
        "finite-element error for an exact plane wave at k0 = 2 pi"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let (wp, exact) = mms_wave();
        let mesh = build_mesh(&ctx.geom, &ctx.mesh)?;
        let e = solve_mms(&mesh, &wp, &exact)?.relative_error;
        Ok(CheckOutcome::below(e, 1e-2, format!("nodal relative L2 error on {} nodes", mesh.node_count())))
    }
}

struct FemMmsRefinement;

impl Check for FemMmsRefinement {
    fn description(&self) -> &'static str {
        "finite-element error ratio under one uniform refinement"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let (wp, exact) = mms_wave();
        let coarse = solve_mms(&build_mesh(&ctx.geom, &ctx.mesh)?, &wp, &exact)?.relative_error;
        let fine = solve_mms(&build_mesh(&ctx.geom, &ctx.mesh.refined(2))?, &wp, &exact)?.relative_error;
        let ratio = coarse / fine;
        Ok(CheckOutcome {
            measured: ratio,
            tolerance: 3.0,
            passed: (3.0..=5.0).contains(&ratio),
            detail: format!("error ratio {coarse:.3e} / {fine:.3e}, must lie in [3, 5]"),
        })
    }
}

struct FluxPlaneWave;

impl Check for FluxPlaneWave {
    fn description(&self) -> &'static str {
        "flux divergence of an exact plane wave"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(6);
        let wp = WaveParams::default();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let wave = PlaneWave {
                d: {
                    let t: f64 = rng.random_range(0.0..TAU);
                    [t.cos(), t.sin()]
                },
                ..PlaneWave::incident(&wp)
            };
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            worst = worst.max(flux_divergence(&wave, &wp, p)?.abs());
        }
        Ok(CheckOutcome::below(worst, 1e-10, "max |div J| over 1000 points"))
    }
}

/// A real standing wave `cos(k x) cos(k y)` with arbitrary amplitude.
struct RealField {
    k: f64,
    amp: f64,
}

impl FieldEvaluator for RealField {
    fn sample(&self, p: Point) -> Result<ComplexSample> {
        let (cx, cy) = ((self.k * p[0]).cos(), (self.k * p[1]).cos());
        let (sx, sy) = ((self.k * p[0]).sin(), (self.k * p[1]).sin());
        let v = self.amp * cx * cy;
        Ok(ComplexSample {
            value: v.into(),
            grad: Some([(-self.amp * self.k * sx * cy).into(), (-self.amp * self.k * cx * sy).into()]),
            lap: Some((-2.0 * self.k * self.k * v).into()),
        })
    }
}

struct FluxRealField;

impl Check for FluxRealField {
    fn description(&self) -> &'static str {
        "flux divergence of real fields"
    }

    fn run(&self, ctx: &CheckContext) -> Result<CheckOutcome> {
        let mut rng = ctx.rng(7);
        let wp = WaveParams::default();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let f = RealField {
                k: rng.random_range(0.5..20.0),
                amp: rng.random_range(-3.0..3.0),
            };
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            worst = worst.max(flux_divergence(&f, &wp, p)?.abs());
        }
        Ok(CheckOutcome {
            measured: worst,
            tolerance: 0.0,
            passed: worst == 0.0,
            detail: "max |div J| over 1000 random real fields".into(),
        })
    }
}

pub fn checks() -> &'static Registry<dyn Check> {
    static REG: OnceLock<Registry<dyn Check>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Check> = Registry::new("check");
        r.register("mlp-jet-fd", Arc::new(MlpJetFd))
            .register("param-gradient-fd", Arc::new(ParamGradientFd))
            .register("sdf-jet-fd", Arc::new(SdfJetFd))
            .register("boundary-normal", Arc::new(BoundaryNormal))
            .register("plane-wave-residual", Arc::new(PlaneWaveResidual))
            .register("plane-wave-absorbing", Arc::new(PlaneWaveAbsorbing))
            .register("encoding-injectivity", Arc::new(EncodingInjectivity))
            .register("fem-mms", Arc::new(FemMms))
            .register("fem-mms-refinement", Arc::new(FemMmsRefinement))
            .register("flux-plane-wave", Arc::new(FluxPlaneWave))
            .register("flux-real-field", Arc::new(FluxRealField));
        r
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsReport {
    pub rows: Vec<CheckRow>,
}

impl DiagnosticsReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.outcome)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["check", "status", "measured", "tolerance", "detail"])?;
        for r in &self.rows {
            let o = &r.outcome;
            w.write_record([
                r.name.as_str(),
                if o.passed { "pass" } else { "fail" },
                &format!("{:.6e}", o.measured),
                &format!("{:.6e}", o.tolerance),
                &o.detail,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            let o = &r.outcome;
            writeln!(
                f,
                "{} {:<22} measured {:.3e} tolerance {:.3e}  {}",
                if o.passed { "PASS" } else { "FAIL" },
                r.name,
                o.measured,
                o.tolerance,
                o.detail
            )?;
        }
        Ok(())
    }
}

/// Runs the named checks, or all registered checks when `only` is empty.
/// A check that errors is reported as failed with the error as detail.
pub fn run_diagnostics(ctx: &CheckContext, only: &[String]) -> Result<DiagnosticsReport> {
    let reg = checks();
    let names = if only.is_empty() { reg.names() } else { only.to_vec() };
    let mut rows = Vec::with_capacity(names.len());
    for name in names {
        let check = reg.get(&name)?;
        log::info!("check {name}: {}", check.description());
        let outcome = check.run(ctx).unwrap_or_else(|e| CheckOutcome {
            measured: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            detail: e.to_string(),
        });
        rows.push(CheckRow { name, outcome });
    }
    Ok(DiagnosticsReport { rows })
}
