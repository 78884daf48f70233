//! Checkpoint files: a magic line, one JSON header line, then little-endian
//! f64 arrays (parameters, then Adam first and second moments if present).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DeepOnetModel, ModelSpec, SpatialMode};
use crate::error::{Error, Result};
use crate::geometry::ProbeSet;
use crate::sampling::SamplerConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "sdfonet-checkpoint";

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn zeros(n: usize) -> Self {
        Self {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: DeepOnetModel,
    /// Completed optimizer iterations.
    pub iteration: u64,
    pub optimizer: Option<OptimizerState>,
    pub sampler: Option<SamplerConfig>,
    pub training_angles_deg: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelSpec,
    probes: ProbeSet,
    seed: u64,
    param_count: usize,
    iteration: u64,
    adam_t: Option<u64>,
    sampler: Option<SamplerConfig>,
    training_angles_deg: Option<Vec<f64>>,
    checksum: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let n = ck.model.param_count();
    let mut data = Vec::with_capacity(8 * n * 3);
    let mut push = |xs: &[f64]| {
        for x in xs {
            data.extend_from_slice(&x.to_le_bytes());
        }
    };
    push(ck.model.params());
    if let Some(opt) = &ck.optimizer {
        if opt.m.len() != n || opt.v.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "optimizer state has {}/{} entries for {n} parameters",
                opt.m.len(),
                opt.v.len()
            )));
        }
        push(&opt.m);
        push(&opt.v);
    }
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        model: ck.model.spec().clone(),
        probes: ck.model.probes().clone(),
        seed: ck.model.seed(),
        param_count: n,
        iteration: ck.iteration,
        adam_t: ck.optimizer.as_ref().map(|o| o.t),
        sampler: ck.sampler.clone(),
        training_angles_deg: ck.training_angles_deg.clone(),
        checksum: format!("{:016x}", fnv1a(&data)),
    };
    let json = serde_json::to_string(&header).map_err(|e| bad(path, e.to_string()))?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        writeln!(f, "{MAGIC}")?;
        writeln!(f, "{json}")?;
        f.write_all(&data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| bad(path, e.to_string()))?;
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC.as_bytes() {
        return Err(bad(path, "not a checkpoint file"));
    }
    let header_line = lines.next().ok_or_else(|| bad(path, "missing header"))?;
    let data = lines.next().ok_or_else(|| bad(path, "missing data section"))?;
    let header: Header = serde_json::from_slice(header_line).map_err(|e| bad(path, format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad(
            path,
            format!("format version {} (expected {CHECKPOINT_VERSION})", header.format_version),
        ));
    }
    let mut model = DeepOnetModel::zeros(header.model, header.probes)?;
    let n = model.param_count();
    if header.param_count != n {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint declares {} parameters but its network shape implies {n}",
            header.param_count
        )));
    }
    let arrays = if header.adam_t.is_some() { 3 } else { 1 };
    if data.len() != 8 * n * arrays {
        return Err(bad(path, format!("data section has {} bytes, expected {}", data.len(), 8 * n * arrays)));
    }
    if format!("{:016x}", fnv1a(data)) != header.checksum {
        return Err(bad(path, "checksum mismatch"));
    }
    let read = |k: usize| -> Vec<f64> {
        data[8 * n * k..8 * n * (k + 1)]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    model.set_params(read(0))?;
    model.seed = header.seed;
    let optimizer = header.adam_t.map(|t| OptimizerState { t, m: read(1), v: read(2) });
    Ok(Checkpoint {
        model,
        iteration: header.iteration,
        optimizer,
        sampler: header.sampler,
        training_angles_deg: header.training_angles_deg,
    })
}

impl Checkpoint {
    /// Errors when the stored networks differ in shape from `spec`.
    pub fn check_shape(&self, spec: &ModelSpec, n_probes: usize) -> Result<()> {
        let have = self.model.spec();
        let same = have.branch_hidden == spec.branch_hidden
            && have.trunk_hidden == spec.trunk_hidden
            && have.latent == spec.latent
            && have.activation == spec.activation
            && self.model.probes().len() == n_probes;
        if !same {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has branch {:?}, trunk {:?}, p = {}, {} probes, {}; configuration asks for branch {:?}, trunk {:?}, p = {}, {n_probes} probes, {}",
                have.branch_hidden,
                have.trunk_hidden,
                have.latent,
                self.model.probes().len(),
                have.activation,
                spec.branch_hidden,
                spec.trunk_hidden,
                spec.latent,
                spec.activation
            )));
        }
        Ok(())
    }

    /// Warns when the stored spatial mode differs from the configured one.
    /// Returns whether they differ.
    pub fn warn_on_mode_mismatch(&self, configured: SpatialMode) -> bool {
        let stored = self.model.spatial_mode();
        if stored != configured {
            log::warn!("checkpoint was trained in {stored} mode but the configuration selects {configured} mode");
            return true;
        }
        false
    }
}
