//! Discretely sampled `(Y, X)` trajectories on a uniform grid, and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the grid spacing when ingesting a path.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    dt: f64,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl PathGrid {
    pub fn new(dt: f64, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::DegeneratePath(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if y.len() != x.len() {
            return Err(Error::DegeneratePath(format!(
                "y has {} points but x has {}",
                y.len(),
                x.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::DegeneratePath("a path needs at least two points".into()));
        }
        if let Some(k) = y.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::DegeneratePath(format!(
                "y must be strictly positive, y[{k}] = {}",
                y[k]
            )));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegeneratePath(format!("x[{k}] is not finite")));
        }
        Ok(PathGrid { dt, y, x })
    }

    pub(crate) fn from_parts_unchecked(dt: f64, y: Vec<f64>, x: Vec<f64>) -> Self {
        debug_assert!(y.len() == x.len() && y.len() >= 2);
        PathGrid { dt, y, x }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Number of steps `n`; the path has `n + 1` points.
    pub fn steps(&self) -> usize {
        self.y.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn min_y(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The sub-path on grid indices `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Result<PathGrid> {
        if to <= from || to >= self.y.len() {
            return Err(Error::DegeneratePath(format!(
                "invalid slice {from}..={to} of a path with {} points",
                self.y.len()
            )));
        }
        Ok(PathGrid {
            dt: self.dt,
            y: self.y[from..=to].to_vec(),
            x: self.x[from..=to].to_vec(),
        })
    }

    /// Every `factor`-th point, giving the same path on a grid `factor` times coarser.
    pub fn subsample(&self, factor: usize) -> Result<PathGrid> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::DegeneratePath(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        Ok(PathGrid {
            dt: self.dt * factor as f64,
            y: self.y.iter().step_by(factor).copied().collect(),
            x: self.x.iter().step_by(factor).copied().collect(),
        })
    }

    pub fn into_parts(self) -> (f64, Vec<f64>, Vec<f64>) {
        (self.dt, self.y, self.x)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (k, (y, x)) in self.y.iter().zip(&self.x).enumerate() {
            let row = CsvRow {
                t: k as f64 * self.dt,
                y: *y,
                x: *x,
            };
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,y,x` CSV. The time column must form a uniform grid
    /// (every spacing within [`GRID_TOLERANCE`] relative of the mean spacing).
    pub fn read_csv<R: Read>(reader: R) -> Result<PathGrid> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "y", "x"] {
            return Err(Error::Csv(format!(
                "expected header `t,y,x`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut x = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            let row = row.map_err(csv_err)?;
            t.push(row.t);
            y.push(row.y);
            x.push(row.x);
        }
        if t.len() < 2 {
            return Err(Error::DegeneratePath("a path needs at least two points".into()));
        }
        let n = t.len() - 1;
        let dt = (t[n] - t[0]) / n as f64;
        if !(dt > 0.0) {
            return Err(Error::Csv("time column must be increasing".into()));
        }
        for (k, w) in t.windows(2).enumerate() {
            let step = w[1] - w[0];
            if ((step - dt) / dt).abs() > GRID_TOLERANCE {
                return Err(Error::Csv(format!(
                    "non-uniform grid at row {}: step {step} differs from {dt}",
                    k + 1
                )));
            }
        }
        PathGrid::new(dt, y, x)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    y: f64,
    x: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}
