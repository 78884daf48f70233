use std::path::Path;

use super::{EdgeTag, FemSolution, Mesh};
use crate::error::Result;

/// Writes `nodes.csv`, `triangles.csv` and `edges.csv` into `dir`.
pub fn write_mesh_csv(mesh: &Mesh, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("nodes.csv"))?;
    w.write_record(["node_id", "x", "y"])?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        w.write_record([i.to_string(), p[0].to_string(), p[1].to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("triangles.csv"))?;
    w.write_record(["triangle_id", "a", "b", "c"])?;
    for (i, t) in mesh.triangles.iter().enumerate() {
        w.write_record([i.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
    w.write_record(["a", "b", "tag", "nx", "ny"])?;
    for e in &mesh.edges {
        let tag = match e.tag {
            EdgeTag::Gamma => "gamma",
            EdgeTag::GammaOut => "gamma_out",
        };
        w.write_record([
            e.nodes[0].to_string(),
            e.nodes[1].to_string(),
            tag.to_string(),
            e.normal[0].to_string(),
            e.normal[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per node: `node_id, x, y, re, im, abs` of the scattered field.
pub fn write_solution_csv(sol: &FemSolution, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "x", "y", "re", "im", "abs"])?;
    for (i, (p, v)) in sol.mesh.nodes.iter().zip(&sol.values).enumerate() {
        w.write_record([
            i.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            v.re.to_string(),
            v.im.to_string(),
            v.norm().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
