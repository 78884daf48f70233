//! Run configuration read from a TOML file with one table per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::SweepConfig;
use crate::error::{Error, Result};
use crate::fem::MeshConfig;
use crate::geometry::{Harmonic, PolarBoundary, ProbeSet};
use crate::operator::ModelSpec;
use crate::physics::WaveParams;
use crate::sampling::SamplerConfig;
use crate::trainer::TrainConfig;

/// Base inclusion shape and where its distance is probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub center: [f64; 2],
    pub base_radius: f64,
    pub harmonics: Vec<Harmonic>,
    pub rotation_deg: f64,
    pub probe_radius: f64,
    pub probe_count: usize,
    /// Explicit probe locations, overriding the ring.
    pub probes_csv: Option<PathBuf>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let b = PolarBoundary::default();
        Self {
            center: b.center,
            base_radius: b.base_radius,
            harmonics: b.harmonics,
            rotation_deg: 0.0,
            probe_radius: 0.3,
            probe_count: 10,
            probes_csv: None,
        }
    }
}

impl GeometryConfig {
    pub fn boundary(&self) -> Result<PolarBoundary> {
        let b = PolarBoundary {
            center: self.center,
            base_radius: self.base_radius,
            harmonics: self.harmonics.clone(),
            rotation: self.rotation_deg.to_radians(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn probes(&self) -> Result<ProbeSet> {
        match &self.probes_csv {
            Some(path) => ProbeSet::read_csv(path),
            None => ProbeSet::ring(self.center, self.probe_radius, self.probe_count),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometryConfig,
    pub physics: WaveParams,
    pub sampling: SamplerConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub fem: MeshConfig,
    pub sweep: SweepConfig,
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// One seed for the initial weights, the collocation draws and the
    /// diagnostics.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.sampling.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.boundary()?;
        self.geometry.probes()?.validate()?;
        self.physics.validate()?;
        self.sampling.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.fem.validate()?;
        self.sweep.subdomain.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("", Path::new("x.toml")).unwrap();
        assert_eq!(c, Config::default());
        c.validate().unwrap();
        assert_eq!(c.geometry.boundary().unwrap(), PolarBoundary::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = Config::default();
        c.train.iterations = 7;
        c.train.precision = crate::diffcore::Precision::F32;
        c.fem.n_theta = 64;
        c.sweep.subdomain.center = Some([0.2, 0.3]);
        c.set_seed(11);
        let back = Config::from_toml_str(&c.to_toml_string(), Path::new("x.toml")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
            [geometry]
            rotation_deg = 15.0
            probe_count = 12

            [physics]
            omega = 3.0

            [train]
            iterations = 50
            precision = "f32"
            training_angles_deg = [-5.0, 5.0]

            [sweep]
            angles_deg = [0.0, 1.0]
            subdomain = { radius = 0.1 }
        "#;
        let c = Config::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(c.train.iterations, 50);
        assert_eq!(c.train.training_angles_deg, vec![-5.0, 5.0]);
        assert_eq!(c.physics.omega, 3.0);
        assert_eq!(c.geometry.probes().unwrap().len(), 12);
        assert!((c.geometry.boundary().unwrap().rotation - 15f64.to_radians()).abs() < 1e-15);
        assert_eq!(c.sweep.subdomain.radius, 0.1);
        assert_eq!(c.sweep.subdomain.center, None);
        assert_eq!(c.model, ModelSpec::default());
    }

    #[test]
    fn typos_and_bad_values_are_rejected() {
        let bad = Config::from_toml_str("[train]\niteration = 5\n", Path::new("a.toml"));
        assert!(matches!(bad, Err(Error::Parse { .. })));
        let bad = Config::from_toml_str("[solver]\n", Path::new("a.toml"));
        assert!(matches!(bad, Err(Error::Parse { .. })));
        let c = Config::from_toml_str("[physics]\nomega = -1.0\n", Path::new("a.toml")).unwrap();
        assert_eq!(c.validate().unwrap_err().class(), crate::error::ErrorClass::Config);
        assert!(matches!(Config::load(Path::new("/nonexistent/c.toml")), Err(Error::Parse { .. })));
    }
}
