//! Classical reference solutions and the error metric.

mod diffusion;
mod transport;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diffusion::{diffusion_fd_1d, diffusion_fd_2d};
pub use transport::sn_transport_1d;

/// Uniform 1D cell-centered grid with a fixed time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub cells: usize,
    pub dt: f64,
}

/// Uniform 2D cell-centered grid with a fixed time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub cells_x: usize,
    pub cells_y: usize,
    pub dt: f64,
}

impl Grid1D {
    /// 400 cells and 2000 time steps over `[t0, t1]`.
    pub fn default_for(time: [f64; 2]) -> Self {
        Grid1D {
            cells: 400,
            dt: (time[1] - time[0]) / 2000.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells < 2 || !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Solver(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

impl Grid2D {
    /// 128² cells and 2000 time steps over `[t0, t1]`.
    pub fn default_for(time: [f64; 2]) -> Self {
        Grid2D {
            cells_x: 128,
            cells_y: 128,
            dt: (time[1] - time[0]) / 2000.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells_x < 2 || self.cells_y < 2 || !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Solver(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

/// Descriptive metadata stored next to a reference CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub problem: String,
    pub scheme: String,
    pub grid: String,
}

/// Snapshots of ρ on cell centers. For 2D fields values are stored with x
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceField {
    pub meta: ReferenceMeta,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
}

fn centers(cells: usize, [a, b]: [f64; 2]) -> Vec<f64> {
    let h = (b - a) / cells as f64;
    (0..cells).map(|i| a + (i as f64 + 0.5) * h).collect()
}

/// Clamps `snapshots` into `(t0, t1]` order and checks them.
pub(crate) fn check_snapshots(snapshots: &[f64], time: [f64; 2]) -> Result<()> {
    for w in snapshots.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Solver("snapshot times must be increasing".into()));
        }
    }
    if let (Some(&first), Some(&last)) = (snapshots.first(), snapshots.last()) {
        if first < time[0] || last > time[1] + 1e-12 {
            return Err(Error::Solver(format!(
                "snapshots {snapshots:?} outside the time interval {time:?}"
            )));
        }
    }
    Ok(())
}

/// Time stepping helper: number of steps to reach `t` from `t0` with step
/// close to `dt`, and the exact step that lands on `t`.
pub(crate) fn steps_to(t0: f64, t: f64, dt: f64) -> (usize, f64) {
    let span = t - t0;
    if span <= 0.0 {
        return (0, dt);
    }
    let n = (span / dt).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

impl ReferenceField {
    pub fn dimension(&self) -> usize {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    /// Number of spatial points per snapshot.
    pub fn len(&self) -> usize {
        self.x.len() * self.y.as_ref().map_or(1, |y| y.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial points of one snapshot, in storage order.
    pub fn points(&self) -> Vec<[f64; 2]> {
        match &self.y {
            None => self.x.iter().map(|&x| [x, 0.0]).collect(),
            Some(ys) => ys.iter().flat_map(|&y| self.x.iter().map(move |&x| [x, y])).collect(),
        }
    }

    /// Index of the snapshot at time `t` (to 1e-9).
    pub fn snapshot_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| {
                Error::MissingReference(format!("no snapshot at t = {t}; available: {:?}", self.times))
            })
    }

    pub fn snapshot(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.rho[self.snapshot_index(t)?])
    }

    /// Linear interpolation of a 1D snapshot at `x`, constant beyond the
    /// outer cell centers.
    pub fn interpolate_1d(&self, snapshot: usize, x: f64) -> f64 {
        let xs = &self.x;
        let v = &self.rho[snapshot];
        if x <= xs[0] {
            return v[0];
        }
        if x >= xs[xs.len() - 1] {
            return v[v.len() - 1];
        }
        let i = xs.partition_point(|&c| c <= x) - 1;
        let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
        (1.0 - w) * v[i] + w * v[i + 1]
    }

    fn validate(&self) -> Result<()> {
        if self.x.is_empty() || self.y.as_ref().is_some_and(|y| y.is_empty()) {
            return Err(Error::Data("reference grid is empty".into()));
        }
        if self.rho.len() != self.times.len() {
            return Err(Error::Data("one ρ array per snapshot is required".into()));
        }
        for r in &self.rho {
            if r.len() != self.len() {
                return Err(Error::Data(format!(
                    "snapshot has {} values, grid has {}",
                    r.len(),
                    self.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite value in reference".into()));
            }
        }
        Ok(())
    }

    /// Path of the metadata file that accompanies `csv`.
    pub fn meta_path(csv: &Path) -> PathBuf {
        let mut p = csv.as_os_str().to_owned();
        p.push(".meta.toml");
        PathBuf::from(p)
    }

    /// Writes `t,x[,y],rho` rows and the metadata sidecar.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = csv::Writer::from_path(csv_path)?;
        let pts = self.points();
        if self.y.is_some() {
            w.write_record(["t", "x", "y", "rho"])?;
        } else {
            w.write_record(["t", "x", "rho"])?;
        }
        for (t, snap) in self.times.iter().zip(&self.rho) {
            for (p, v) in pts.iter().zip(snap) {
                let mut rec = vec![format!("{t}"), format!("{}", p[0])];
                if self.y.is_some() {
                    rec.push(format!("{}", p[1]));
                }
                rec.push(format!("{v:e}"));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(Self::meta_path(csv_path), meta)?;
        Ok(())
    }

    /// Reads a field written by [`ReferenceField::write`]. The sidecar is
    /// optional.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(csv_path)
            .map_err(|e| Error::MissingReference(format!("{}: {e}", csv_path.display())))?;
        let headers = r.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let two_d = match names.as_slice() {
            ["t", "x", "rho"] => false,
            ["t", "x", "y", "rho"] => true,
            _ => {
                return Err(Error::Data(format!(
                    "{}: expected header t,x,rho or t,x,y,rho, found {}",
                    csv_path.display(),
                    names.join(",")
                )))
            }
        };
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Data(format!("line {}: missing column {}", line + 2, i + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("line {}, column {}: {e}", line + 2, i + 1)))
            };
            if two_d {
                rows.push((field(0)?, field(1)?, field(2)?, field(3)?));
            } else {
                rows.push((field(0)?, field(1)?, 0.0, field(2)?));
            }
        }
        if rows.is_empty() {
            return Err(Error::Data(format!("{}: no data rows", csv_path.display())));
        }
        let mut times: Vec<f64> = Vec::new();
        for row in &rows {
            if times.last() != Some(&row.0) {
                if times.contains(&row.0) {
                    return Err(Error::Data("rows of a snapshot must be contiguous".into()));
                }
                times.push(row.0);
            }
        }
        let per = rows.len() / times.len();
        if per * times.len() != rows.len() {
            return Err(Error::Data("snapshots have different sizes".into()));
        }
        let first = &rows[..per];
        let mut x: Vec<f64> = Vec::new();
        let mut y: Vec<f64> = Vec::new();
        for r in first {
            if !x.contains(&r.1) {
                x.push(r.1);
            }
            if !y.contains(&r.2) {
                y.push(r.2);
            }
        }
        let rho = rows.chunks(per).map(|c| c.iter().map(|r| r.3).collect()).collect();
        let meta_path = Self::meta_path(csv_path);
        let meta = if meta_path.exists() {
            toml::from_str(&fs::read_to_string(&meta_path)?)
                .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?
        } else {
            ReferenceMeta {
                problem: String::new(),
                scheme: "unknown".into(),
                grid: String::new(),
            }
        };
        let field = ReferenceField {
            meta,
            times,
            x,
            y: two_d.then_some(y),
            rho,
        };
        field.validate()?;
        Ok(field)
    }
}

/// `‖pred − ref‖₂ / ‖ref‖₂`, with optional quadrature weights.
pub fn l2_relative_error(pred: &[f64], reference: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if pred.len() != reference.len() || weights.is_some_and(|w| w.len() != pred.len()) {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: pred.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pred.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        num += w * (pred[i] - reference[i]).powi(2);
        den += w * reference[i].powi(2);
    }
    if den == 0.0 {
        return Err(Error::Data("reference norm is zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Relative error over several snapshots at once (space-time norm).
pub fn space_time_l2_relative_error(pred: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: pred.len(),
        });
    }
    let p: Vec<f64> = pred.iter().flatten().copied().collect();
    let r: Vec<f64> = reference.iter().flatten().copied().collect();
    l2_relative_error(&p, &r, None)
}

/// Manufactured solution of UQ Problem I at `(t, x, μ, z)`: `(f, ρ, E ρ)`.
pub fn manufactured_uq(t: f64, x: f64, mu: f64, z: &[f64]) -> (f64, f64, f64) {
    let q = t * x * (1.0 - x);
    let s: f64 = z.iter().sum();
    (q * (mu + 11.0 + s) / 22.0, q * (11.0 + s) / 22.0, 0.5 * q)
}

/// Exact `E ρ` of UQ Problem I on a grid, as a reference field.
pub fn manufactured_uq_reference(cells: usize, domain: [f64; 2], times: &[f64]) -> ReferenceField {
    let x = centers(cells, domain);
    let rho = times
        .iter()
        .map(|&t| x.iter().map(|&xi| manufactured_uq(t, xi, 0.0, &[]).2).collect())
        .collect();
    ReferenceField {
        meta: ReferenceMeta {
            problem: "uq_problem_1".into(),
            scheme: "exact".into(),
            grid: format!("{cells} cells"),
        },
        times: times.to_vec(),
        x,
        y: None,
        rho,
    }
}

pub(crate) fn cell_centers(cells: usize, domain: [f64; 2]) -> Vec<f64> {
    centers(cells, domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metric_examples() {
        let r = [1.0, 2.0, -3.0];
        assert_eq!(l2_relative_error(&r, &r, None).unwrap(), 0.0);
        let p: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        assert!((l2_relative_error(&p, &r, None).unwrap() - 0.1).abs() < 1e-15);
        let c = [2.0; 4];
        let pc = [2.5; 4];
        assert!((l2_relative_error(&pc, &c, None).unwrap() - 0.25).abs() < 1e-15);
        assert!(l2_relative_error(&[1.0], &[0.0], None).is_err());
        assert!(l2_relative_error(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn manufactured_values() {
        assert!((manufactured_uq(0.4, 0.5, 0.3, &[0.1; 10]).2 - 0.05).abs() < 1e-16);
        let z = [-1.1; 10];
        assert!(manufactured_uq(0.4, 0.5, 0.0, &z).1.abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = ReferenceField {
            meta: ReferenceMeta {
                problem: "p".into(),
                scheme: "s".into(),
                grid: "g".into(),
            },
            times: vec![0.5, 1.0],
            x: vec![0.25, 0.75],
            y: Some(vec![0.1, 0.2, 0.3]),
            rho: vec![(0..6).map(|i| i as f64 * 0.1).collect(), vec![1.0 / 3.0; 6]],
        };
        let path = dir.path().join("r.csv");
        f.write(&path).unwrap();
        let g = ReferenceField::read(&path).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn interpolation() {
        let f = manufactured_uq_reference(10, [0.0, 1.0], &[1.0]);
        let v = f.interpolate_1d(0, 0.5);
        assert!((v - 0.5 * (0.45 * 0.55 + 0.55 * 0.45) / 2.0).abs() < 1e-15);
        assert_eq!(f.interpolate_1d(0, -1.0), f.rho[0][0]);
    }
}
