use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::FemSolution;
use crate::geometry::{Point, PolarBoundary};
use crate::operator::DeepOnetModel;
use crate::physics::{incident_field, WaveParams};

pub enum FieldSource<'a> {
    Model(&'a DeepOnetModel),
    Fem(&'a FemSolution),
}

/// Field sampled at the centers of an `n x n` grid of cells over the unit
/// square. Row `0` is the bottom row; cells inside the inclusion are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub n: usize,
    pub values: Vec<Option<Complex64>>,
}

impl FieldGrid {
    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        let h = 1.0 / self.n as f64;
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Complex64> {
        self.values[j * self.n + i]
    }

    pub fn masked_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Smallest and largest `|W|` over unmasked cells.
    pub fn amplitude_range(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().map(|z| z.norm()).fold(None, |acc, a| match acc {
            None => Some((a, a)),
            Some((lo, hi)) => Some((lo.min(a), hi.max(a))),
        })
    }

    /// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.scale.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let pgm_path = dir.join(format!("{stem}.pgm"));
        let txt_path = dir.join(format!("{stem}.scale.txt"));

        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["x", "y", "re", "im", "abs"])?;
        for j in 0..self.n {
            for i in 0..self.n {
                let [x, y] = self.cell_center(i, j);
                let vals = match self.get(i, j) {
                    Some(z) => [z.re, z.im, z.norm()].map(|v| format!("{v:.9e}")),
                    None => Default::default(),
                };
                w.write_record([x.to_string(), y.to_string(), vals[0].clone(), vals[1].clone(), vals[2].clone()])?;
            }
        }
        w.flush()?;

        // Masked cells are black; field values span grey levels 1 to 255.
        let (lo, hi) = self.amplitude_range().unwrap_or((0.0, 0.0));
        let span = hi - lo;
        let mut f = BufWriter::new(File::create(&pgm_path)?);
        write!(f, "P5\n{} {}\n255\n", self.n, self.n)?;
        let mut row = vec![0u8; self.n];
        for j in (0..self.n).rev() {
            for (i, px) in row.iter_mut().enumerate() {
                *px = match self.get(i, j) {
                    None => 0,
                    Some(z) if span > 0.0 => 1 + ((z.norm() - lo) / span * 254.0).round() as u8,
                    Some(_) => 128,
                };
            }
            f.write_all(&row)?;
        }
        f.flush()?;

        let mut t = BufWriter::new(File::create(&txt_path)?);
        writeln!(t, "quantity abs")?;
        writeln!(t, "width {}", self.n)?;
        writeln!(t, "height {}", self.n)?;
        writeln!(t, "min {lo:.9e}")?;
        writeln!(t, "max {hi:.9e}")?;
        writeln!(t, "levels 1 255")?;
        writeln!(t, "masked 0 {}", self.masked_count())?;
        t.flush()?;
        Ok(vec![csv_path, pgm_path, txt_path])
    }
}

/// Samples the scattered field, plus the incident wave if `wp` is given.
pub fn export_field_grid(source: &FieldSource, geom: &PolarBoundary, n: usize, incident: Option<&WaveParams>) -> Result<FieldGrid> {
    if n < 2 {
        return Err(Error::Config(format!("grid resolution must be at least 2, got {n}")));
    }
    let mut grid = FieldGrid {
        n,
        values: vec![None; n * n],
    };
    let mut idx = Vec::new();
    let mut pts = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let p = grid.cell_center(i, j);
            if geom.sdf(p) >= 0.0 {
                idx.push(j * n + i);
                pts.push(p);
            }
        }
    }
    let vals = match source {
        FieldSource::Model(m) => m.evaluate_points(geom, &pts)?,
        FieldSource::Fem(s) => pts.iter().map(|&p| s.field_at(p)).collect::<Result<_>>()?,
    };
    for ((k, p), v) in idx.into_iter().zip(pts).zip(vals) {
        let inc = incident.map_or(Complex64::new(0.0, 0.0), |wp| incident_field(wp, p).0);
        grid.values[k] = Some(v + inc);
    }
    Ok(grid)
}
