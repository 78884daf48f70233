//! Full-batch Adam training against the physics loss.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Precision;
use crate::error::{Error, Result};
use crate::geometry::PolarBoundary;
use crate::operator::{save_checkpoint, Checkpoint, DeepOnetModel, OptimizerState};
use crate::physics::{LossReport, LossWeights, TrainingProblem, WaveParams};
use crate::sampling::{sample_collocation, CollocationSet, SamplerConfig};

/// Minibatch draws use streams from here on, clear of the sampler's.
const MINIBATCH_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub log_every: u64,
    pub seed: u64,
    pub training_angles_deg: Vec<f64>,
    pub weights: LossWeights,
    /// Save a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    /// Draw fresh collocation sets every this many iterations (0 keeps them fixed).
    pub resample_every: u64,
    /// Record elapsed seconds in the log. Off gives byte-reproducible logs.
    pub log_wall_time: bool,
    /// Arithmetic of the trunk hidden layers during training.
    pub precision: Precision,
    /// Points drawn from each point family of each geometry per step,
    /// without replacement. Zero uses every point.
    pub minibatch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            log_every: 100,
            seed: 0,
            training_angles_deg: vec![-30.0, -10.0, 0.0, 10.0, 30.0],
            weights: LossWeights::default(),
            checkpoint_every: 0,
            resample_every: 0,
            log_wall_time: true,
            precision: Precision::F64,
            minibatch: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.training_angles_deg.is_empty() {
            return Err(Error::Config("at least one training angle is required".into()));
        }
        if self.training_angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("training angles must be finite".into()));
        }
        Ok(())
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients
/// before touching any state.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() || state.v.len() != grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} parameters, {} gradient entries, {}/{} moment entries",
            params.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        log::error!("non-finite gradient entry {i} = {} at step {}", grad[i], state.t);
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: state.t,
        });
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub pde: f64,
    pub gamma: f64,
    pub gamma_out: f64,
    pub total: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub const HEADER: [&'static str; 6] = ["iteration", "pde", "gamma", "gamma_out", "total", "wall_time_s"];

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.pde.to_string(),
                r.gamma.to_string(),
                r.gamma_out.to_string(),
                r.total.to_string(),
                r.wall_time_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    reason: format!("bad field {i} in row {}", rows.len() + 1),
                })
            };
            rows.push(LogRow {
                iteration: f(0)? as u64,
                pde: f(1)?,
                gamma: f(2)?,
                gamma_out: f(3)?,
                total: f(4)?,
                wall_time_s: f(5)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn first(&self) -> Option<&LogRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn at(&self, iteration: u64) -> Option<&LogRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }
}

/// Where checkpoints go during training.
#[derive(Debug, Clone, Default)]
pub struct TrainIo {
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepOnetModel,
    pub log: TrainLog,
    pub optimizer: OptimizerState,
    /// Total completed iterations, including those before a resume.
    pub iteration: u64,
}

impl TrainOutcome {
    pub fn checkpoint(&self, sampler: &SamplerConfig, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            iteration: self.iteration,
            optimizer: Some(self.optimizer.clone()),
            sampler: Some(sampler.clone()),
            training_angles_deg: Some(cfg.training_angles_deg.clone()),
        }
    }
}

/// Training geometries: the base boundary rotated by each training angle.
pub fn training_geometries(base: &PolarBoundary, angles_deg: &[f64]) -> Vec<PolarBoundary> {
    angles_deg.iter().map(|&a| base.rotated(a.to_radians())).collect()
}

fn sample_sets(geoms: &[PolarBoundary], sampler: &SamplerConfig, epoch: u64) -> Result<Vec<(PolarBoundary, CollocationSet)>> {
    let cfg = SamplerConfig {
        seed: sampler.seed.wrapping_add(epoch),
        ..sampler.clone()
    };
    geoms
        .iter()
        .map(|g| Ok((g.clone(), sample_collocation(g, &cfg)?)))
        .collect()
}

/// Trains a freshly initialised or given model from iteration zero.
pub fn train(
    model: DeepOnetModel,
    base: &PolarBoundary,
    wp: &WaveParams,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    io: &TrainIo,
) -> Result<TrainOutcome> {
    let n = model.param_count();
    run(model, OptimizerState::zeros(n), 0, base, wp, sampler, cfg, io)
}

/// Continues from a checkpoint for `cfg.iterations` further iterations.
pub fn resume(
    ck: Checkpoint,
    base: &PolarBoundary,
    wp: &WaveParams,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    io: &TrainIo,
) -> Result<TrainOutcome> {
    let opt = ck.optimizer.ok_or_else(|| Error::Checkpoint {
        path: io.checkpoint.clone().unwrap_or_default(),
        reason: "no optimizer state stored; cannot resume".into(),
    })?;
    if opt.m.len() != ck.model.param_count() || opt.v.len() != ck.model.param_count() {
        return Err(Error::ShapeMismatch("optimizer state does not match the model".into()));
    }
    if opt.m.iter().chain(&opt.v).any(|x| !x.is_finite()) || opt.v.iter().any(|&x| x < 0.0) {
        return Err(Error::Checkpoint {
            path: io.checkpoint.clone().unwrap_or_default(),
            reason: "optimizer moments are corrupt".into(),
        });
    }
    if let Some(prev) = &ck.sampler {
        if prev.budget_differs(sampler) {
            log::warn!("point budget differs from the checkpoint; sampling new collocation sets");
        }
    }
    if let Some(prev) = &ck.training_angles_deg {
        if prev != &cfg.training_angles_deg {
            log::warn!("training angles differ from the checkpoint ({prev:?} vs {:?})", cfg.training_angles_deg);
        }
    }
    run(ck.model, opt, ck.iteration, base, wp, sampler, cfg, io)
}

fn pick<T: Copy>(v: &[T], size: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if v.len() <= size {
        return v.to_vec();
    }
    let mut idx = rand::seq::index::sample(rng, v.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| v[i]).collect()
}

/// Seeded random subsets of every point family, drawn afresh at each step.
fn minibatch_sets(sets: &[(PolarBoundary, CollocationSet)], size: usize, seed: u64, step: u64) -> Vec<(PolarBoundary, CollocationSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MINIBATCH_STREAM + step);
    sets.iter()
        .map(|(g, s)| {
            let set = CollocationSet {
                interior: pick(&s.interior, size, &mut rng),
                band: pick(&s.band, size, &mut rng),
                outer: pick(&s.outer, size, &mut rng),
                inner: pick(&s.inner, size, &mut rng),
            };
            (g.clone(), set)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run(
    mut model: DeepOnetModel,
    mut opt: OptimizerState,
    start: u64,
    base: &PolarBoundary,
    wp: &WaveParams,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    io: &TrainIo,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    sampler.validate()?;
    let geoms = training_geometries(base, &cfg.training_angles_deg);
    let epoch_of = |t: u64| if cfg.resample_every == 0 { 0 } else { t / cfg.resample_every };
    let mut epoch = epoch_of(start);
    let mut sets = sample_sets(&geoms, sampler, epoch)?;
    let mut problem = TrainingProblem::new(&model, &sets, wp, cfg.weights)?.with_precision(cfg.precision);
    let end = start + cfg.iterations;
    let mut grad = vec![0.0; model.param_count()];
    let mut log = TrainLog::default();
    let clock = Instant::now();
    let ck_of = |model: &DeepOnetModel, opt: &OptimizerState, t: u64| Checkpoint {
        model: model.clone(),
        iteration: t,
        optimizer: Some(opt.clone()),
        sampler: Some(sampler.clone()),
        training_angles_deg: Some(cfg.training_angles_deg.clone()),
    };
    for t in start..=end {
        if epoch_of(t) != epoch {
            epoch = epoch_of(t);
            sets = sample_sets(&geoms, sampler, epoch)?;
            problem = TrainingProblem::new(&model, &sets, wp, cfg.weights)?.with_precision(cfg.precision);
        }
        let resumed_start = t == start && start > 0;
        let logging = (t % cfg.log_every == 0 || t == end) && !resumed_start;
        let report = if t == end {
            problem.loss(&model)?
        } else if cfg.minibatch == 0 {
            problem.loss_and_grad(&model, &mut grad)?
        } else {
            let mini = TrainingProblem::new(&model, &minibatch_sets(&sets, cfg.minibatch, cfg.seed, t), wp, cfg.weights)?
                .with_precision(cfg.precision);
            let r = mini.loss_and_grad(&model, &mut grad)?;
            // Logged losses are always over the full sets.
            if logging {
                problem.loss(&model)?
            } else {
                r
            }
        };
        if !report.is_finite() || (t < end && grad.iter().any(|g| !g.is_finite())) {
            dump_diverged(&ck_of(&model, &opt, t), io);
            return Err(Error::NonFinite {
                what: "loss",
                iteration: t,
            });
        }
        if logging {
            log.rows.push(row(t, &report, cfg.log_wall_time.then(|| clock.elapsed().as_secs_f64())));
            log::info!(
                "iter {t:>7}  total {:.4e}  pde {:.3e}  gamma {:.3e}  gamma_out {:.3e}",
                report.total,
                report.pde,
                report.gamma,
                report.gamma_out
            );
        }
        if t == end {
            break;
        }
        adam_step(model.params_mut(), &grad, &mut opt, cfg)?;
        if cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 {
            if let Some(path) = &io.checkpoint {
                save_checkpoint(&ck_of(&model, &opt, t + 1), path)?;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        optimizer: opt,
        iteration: end,
    })
}

fn row(t: u64, r: &LossReport, wall: Option<f64>) -> LogRow {
    LogRow {
        iteration: t,
        pde: r.pde,
        gamma: r.gamma,
        gamma_out: r.gamma_out,
        total: r.total,
        wall_time_s: wall.unwrap_or(0.0),
    }
}

/// Writes the diverged state next to the regular checkpoint, leaving the
/// last good checkpoint untouched.
fn dump_diverged(ck: &Checkpoint, io: &TrainIo) {
    let Some(path) = &io.checkpoint else {
        log::error!("training diverged at iteration {}; no checkpoint path configured", ck.iteration);
        return;
    };
    let dump = path.with_extension("diverged.ckpt");
    match save_checkpoint(ck, &dump) {
        Ok(()) => log::error!("training diverged at iteration {}; state dumped to {}", ck.iteration, dump.display()),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "failed to dump diverged state: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProbeSet;
    use crate::operator::ModelSpec;

    fn cfg() -> TrainConfig {
        TrainConfig {
            iterations: 20,
            log_every: 5,
            log_wall_time: false,
            training_angles_deg: vec![-10.0, 10.0],
            ..TrainConfig::default()
        }
    }

    fn tiny_model(seed: u64) -> DeepOnetModel {
        DeepOnetModel::init(ModelSpec::uniform(8, 2, 4), ProbeSet::ring([0.5, 0.5], 0.3, 10).unwrap(), seed).unwrap()
    }

    fn tiny_sampler() -> SamplerConfig {
        SamplerConfig {
            n_interior_raw: 80,
            n_outer: 40,
            n_inner_per_geometry: 20,
            seed: 9,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = vec![0.5, -1.0];
        let mut s = OptimizerState::zeros(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &TrainConfig::default()).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let c = TrainConfig::default();
        let mut p = vec![0.0];
        let mut s = OptimizerState::zeros(1);
        adam_step(&mut p, &[1.0], &mut s, &c).unwrap();
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-18);
        for g in [0.5, 3.0, 1e4] {
            let mut q = vec![0.0];
            let mut s = OptimizerState::zeros(1);
            adam_step(&mut q, &[g], &mut s, &c).unwrap();
            assert!((q[0].abs() - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = vec![1.0, 2.0];
        let mut s = OptimizerState::zeros(2);
        let r = adam_step(&mut p, &[0.1, f64::NAN], &mut s, &TrainConfig::default());
        assert!(matches!(r, Err(Error::NonFinite { .. })));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn zero_iterations_returns_model_unchanged() {
        let m = tiny_model(1);
        let c = TrainConfig { iterations: 0, ..cfg() };
        let out = train(m.clone(), &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &c, &TrainIo::default()).unwrap();
        assert_eq!(out.model.params(), m.params());
        assert_eq!(out.log.rows.len(), 1);
        assert_eq!(out.log.rows[0].iteration, 0);
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let run = || {
            train(tiny_model(2), &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &cfg(), &TrainIo::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params(), b.model.params());
        let its: Vec<u64> = a.log.rows.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 5, 10, 15, 20]);
    }

    #[test]
    fn logged_losses_equal_total_loss_at_that_state() {
        let base = PolarBoundary::default();
        let wp = WaveParams::default();
        let c = TrainConfig { iterations: 5, ..cfg() };
        let out = train(tiny_model(3), &base, &wp, &tiny_sampler(), &c, &TrainIo::default()).unwrap();
        let sets = sample_sets(&training_geometries(&base, &c.training_angles_deg), &tiny_sampler(), 0).unwrap();
        let r = crate::physics::total_loss(&out.model, &sets, &wp, c.weights).unwrap();
        let last = out.log.last().unwrap();
        assert_eq!((last.pde, last.gamma, last.gamma_out, last.total), (r.pde, r.gamma, r.gamma_out, r.total));
    }

    #[test]
    fn minibatch_covering_every_family_matches_full_batch() {
        let base = PolarBoundary::default();
        let wp = WaveParams::default();
        let run = |mb: usize| {
            let c = TrainConfig { iterations: 6, minibatch: mb, ..cfg() };
            train(tiny_model(4), &base, &wp, &tiny_sampler(), &c, &TrainIo::default()).unwrap()
        };
        let full = run(0);
        assert_eq!(run(1_000_000).model.params(), full.model.params());
        let mini = run(8);
        assert_ne!(mini.model.params(), full.model.params());
        assert_eq!(run(8).model.params(), mini.model.params());
    }

    fn ordered_subset<T: PartialEq>(sub: &[T], all: &[T], size: usize) {
        assert_eq!(sub.len(), all.len().min(size));
        let idx: Vec<usize> = sub.iter().map(|p| all.iter().position(|q| q == p).unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn minibatch_draws_distinct_points_per_step() {
        let base = PolarBoundary::default();
        let sets = sample_sets(&training_geometries(&base, &[0.0, 10.0]), &tiny_sampler(), 0).unwrap();
        let a = minibatch_sets(&sets, 5, 9, 1);
        let b = minibatch_sets(&sets, 5, 9, 2);
        assert_eq!(a, minibatch_sets(&sets, 5, 9, 1));
        assert_ne!(a, b);
        for ((_, m), (_, s)) in a.iter().zip(&sets) {
            ordered_subset(&m.interior, &s.interior, 5);
            ordered_subset(&m.band, &s.band, 5);
            ordered_subset(&m.outer, &s.outer, 5);
            ordered_subset(&m.inner, &s.inner, 5);
        }
    }

    #[test]
    fn minibatch_logged_losses_are_full_batch() {
        let base = PolarBoundary::default();
        let wp = WaveParams::default();
        let c = TrainConfig { iterations: 5, minibatch: 6, ..cfg() };
        let out = train(tiny_model(3), &base, &wp, &tiny_sampler(), &c, &TrainIo::default()).unwrap();
        let sets = sample_sets(&training_geometries(&base, &c.training_angles_deg), &tiny_sampler(), 0).unwrap();
        let r = crate::physics::total_loss(&out.model, &sets, &wp, c.weights).unwrap();
        assert_eq!(out.log.last().unwrap().total, r.total);
    }

    #[test]
    fn resume_is_bitwise_continuation() {
        let base = PolarBoundary::default();
        let wp = WaveParams::default();
        let dir = tempfile::tempdir().unwrap();
        let io = TrainIo {
            checkpoint: Some(dir.path().join("a.ckpt")),
        };
        for resample_every in [0, 7] {
            let full_cfg = TrainConfig { resample_every, ..cfg() };
            let full = train(tiny_model(4), &base, &wp, &tiny_sampler(), &full_cfg, &io).unwrap();
            let half_cfg = TrainConfig {
                iterations: 10,
                ..full_cfg.clone()
            };
            let first = train(tiny_model(4), &base, &wp, &tiny_sampler(), &half_cfg, &io).unwrap();
            let path = dir.path().join("half.ckpt");
            save_checkpoint(&first.checkpoint(&tiny_sampler(), &half_cfg), &path).unwrap();
            let ck = crate::operator::load_checkpoint(&path).unwrap();
            let second = resume(ck, &base, &wp, &tiny_sampler(), &half_cfg, &io).unwrap();
            assert_eq!(second.model.params(), full.model.params());
            assert_eq!(second.optimizer, full.optimizer);
            let mut joined = first.log.clone();
            joined.extend(second.log);
            assert_eq!(joined, full.log);
        }
    }

    #[test]
    fn resume_without_optimizer_state_fails() {
        let ck = Checkpoint {
            model: tiny_model(5),
            iteration: 3,
            optimizer: None,
            sampler: None,
            training_angles_deg: None,
        };
        let r = resume(ck, &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &cfg(), &TrainIo::default());
        assert!(matches!(r, Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn corrupt_moments_are_rejected() {
        let m = tiny_model(6);
        let n = m.param_count();
        let mut opt = OptimizerState::zeros(n);
        opt.v[3] = -1.0;
        let ck = Checkpoint {
            model: m,
            iteration: 3,
            optimizer: Some(opt),
            sampler: None,
            training_angles_deg: None,
        };
        let r = resume(ck, &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &cfg(), &TrainIo::default());
        assert!(matches!(r, Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn divergence_aborts_and_dumps_state() {
        let dir = tempfile::tempdir().unwrap();
        let io = TrainIo {
            checkpoint: Some(dir.path().join("run.ckpt")),
        };
        let mut m = tiny_model(7);
        m.params_mut()[0] = f64::NAN;
        let r = train(m, &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &cfg(), &io);
        assert!(matches!(r, Err(Error::NonFinite { iteration: 0, .. })));
        assert!(dir.path().join("run.diverged.ckpt").exists());
        assert!(!dir.path().join("run.ckpt").exists());
    }

    #[test]
    fn log_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let out = train(tiny_model(8), &PolarBoundary::default(), &WaveParams::default(), &tiny_sampler(), &cfg(), &TrainIo::default())
            .unwrap();
        out.log.write_csv(&path).unwrap();
        assert_eq!(TrainLog::read_csv(&path).unwrap(), out.log);
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("iteration,pde,gamma,gamma_out,total,wall_time_s\n"));
    }
}
