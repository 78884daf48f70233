use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sdfonet::bench::{
    angle_sweep, export_field_grid, relative_error, run_diagnostics, write_sweep_csv, CheckContext, ErrorMode, FieldSource,
    SweepSetup,
};
use sdfonet::config::Config;
use sdfonet::error::{Error, ErrorClass, Result};
use sdfonet::fem::{solve, write_mesh_csv, write_solution_csv};
use sdfonet::operator::{load_checkpoint, save_checkpoint, Checkpoint, DeepOnetModel};
use sdfonet::trainer::{resume, train, TrainIo};

#[derive(Parser)]
#[command(name = "sdfonet", version, about = "Geometry-aware operator network for scattered shear waves")]
struct Cli {
    /// TOML configuration file. Missing sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for initial weights, collocation draws and diagnostics.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Model,
    Fem,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network and write `log.csv` and `model.ckpt`.
    Train {
        /// Continue from this checkpoint instead of a fresh initialisation.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare the trained model with the reference solution at one angle.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle: f64,
    },
    /// Solve the reference problem and write the mesh and nodal solution.
    Fem {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle: f64,
    },
    /// Errors against the reference solution over the configured angles.
    Sweep {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sample a field on a regular grid as CSV and PGM.
    ExportField {
        #[arg(long, value_enum, default_value = "fem")]
        source: Source,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle: f64,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// Add the incident wave to the scattered field.
        #[arg(long)]
        total: bool,
    },
    /// Run the numerical self-checks.
    Check {
        /// Run only these checks.
        #[arg(long = "only")]
        only: Vec<String>,
        /// List the registered checks and exit.
        #[arg(long)]
        list: bool,
    },
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(cfg: &Config, path: &Path) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.check_shape(&cfg.model, cfg.geometry.probes()?.len())?;
    ck.warn_on_mode_mismatch(cfg.model.spatial_mode);
    Ok(ck)
}

fn checkpoint_path(cli: &Cli, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cli.out_dir.join("model.ckpt"))
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let out = &cli.out_dir;
    std::fs::create_dir_all(out)?;
    let base = cfg.geometry.boundary()?;
    match &cli.command {
        Command::Train { resume: from } => {
            let ck_path = out.join("model.ckpt");
            let io = TrainIo {
                checkpoint: Some(ck_path.clone()),
            };
            let outcome = match from {
                Some(p) => resume(load_model(&cfg, p)?, &base, &cfg.physics, &cfg.sampling, &cfg.train, &io)?,
                None => {
                    let model = DeepOnetModel::init(cfg.model.clone(), cfg.geometry.probes()?, cfg.train.seed)?;
                    train(model, &base, &cfg.physics, &cfg.sampling, &cfg.train, &io)?
                }
            };
            save_checkpoint(&outcome.checkpoint(&cfg.sampling, &cfg.train), &ck_path)?;
            outcome.log.write_csv(&out.join("log.csv"))?;
            if let Some(last) = outcome.log.last() {
                println!(
                    "iteration {}: total {:.6e} (pde {:.3e}, gamma {:.3e}, gamma_out {:.3e})",
                    last.iteration, last.total, last.pde, last.gamma, last.gamma_out
                );
            }
            println!("wrote {} and {}", ck_path.display(), out.join("log.csv").display());
        }
        Command::Eval { checkpoint, angle } => {
            let ck = load_model(&cfg, &checkpoint_path(cli, checkpoint))?;
            let geom = base.rotated(angle.to_radians());
            let sol = solve(&geom, &cfg.fem, &cfg.physics)?;
            let pred = ck.model.evaluate_points(&geom, &sol.mesh.nodes)?;
            let path = out.join(format!("eval_{angle}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
            w.write_record(["node_id", "x", "y", "model_re", "model_im", "fem_re", "fem_im"])
                .map_err(Error::from)?;
            for (i, ((p, m), f)) in sol.mesh.nodes.iter().zip(&pred).zip(sol.nodal()).enumerate() {
                w.write_record([
                    i.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    format!("{:.9e}", m.re),
                    format!("{:.9e}", m.im),
                    format!("{:.9e}", f.re),
                    format!("{:.9e}", f.im),
                ])
                .map_err(Error::from)?;
            }
            w.flush()?;
            println!(
                "angle {angle}: relative error {:.6e} (complex), {:.6e} (amplitude) over {} nodes",
                relative_error(&pred, sol.nodal(), ErrorMode::Complex)?,
                relative_error(&pred, sol.nodal(), ErrorMode::Amplitude)?,
                pred.len()
            );
            println!("wrote {}", path.display());
        }
        Command::Fem { angle } => {
            let geom = base.rotated(angle.to_radians());
            let sol = solve(&geom, &cfg.fem, &cfg.physics)?;
            write_mesh_csv(&sol.mesh, out)?;
            write_solution_csv(&sol, &out.join("solution.csv"))?;
            println!(
                "{} nodes, {} triangles; wrote mesh and solution to {}",
                sol.mesh.node_count(),
                sol.mesh.triangles.len(),
                out.display()
            );
        }
        Command::Sweep { checkpoint } => {
            let ck = load_model(&cfg, &checkpoint_path(cli, checkpoint))?;
            let training = ck
                .training_angles_deg
                .clone()
                .unwrap_or_else(|| cfg.train.training_angles_deg.clone());
            let setup = SweepSetup {
                model: &ck.model,
                base: &base,
                wp: &cfg.physics,
                mesh: &cfg.fem,
                subdomain: &cfg.sweep.subdomain,
                training_angles_deg: &training,
            };
            let rows = angle_sweep(&setup, &cfg.sweep.angles_deg, cfg.sweep.threads)?;
            let path = out.join("sweep.csv");
            write_sweep_csv(&rows, &training, &path)?;
            let failed = rows.iter().filter(|r| r.failure.is_some()).count();
            if failed > 0 {
                log::warn!("{failed} of {} sweep rows failed", rows.len());
            }
            println!("{} rows; wrote {}", rows.len(), path.display());
        }
        Command::ExportField {
            source,
            checkpoint,
            angle,
            resolution,
            total,
        } => {
            let geom = base.rotated(angle.to_radians());
            let incident = total.then_some(&cfg.physics);
            let (grid, stem) = match source {
                Source::Model => {
                    let ck = load_model(&cfg, &checkpoint_path(cli, checkpoint))?;
                    (export_field_grid(&FieldSource::Model(&ck.model), &geom, *resolution, incident)?, "field_model")
                }
                Source::Fem => {
                    let sol = solve(&geom, &cfg.fem, &cfg.physics)?;
                    (export_field_grid(&FieldSource::Fem(&sol), &geom, *resolution, incident)?, "field_fem")
                }
            };
            for p in grid.write(out, stem)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Check { only, list } => {
            if *list {
                for (name, check) in sdfonet::bench::checks().iter() {
                    println!("{name:<22} {}", check.description());
                }
                return Ok(Outcome::Done);
            }
            let ctx = CheckContext {
                geom: base,
                mesh: cfg.fem,
                ..CheckContext::new(cfg.train.seed)
            };
            let report = run_diagnostics(&ctx, only)?;
            report.write_csv(&out.join("checks.csv"))?;
            print!("{report}");
            if !report.all_passed() {
                return Ok(Outcome::ChecksFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config | ErrorClass::Io => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
