//! Plane slices as delimited text. Masked voxels are written as `masked`.

use std::fmt::Write as _;
use std::path::Path;

use mre_core::grid::Grid;
use mre_core::inversion::{Elastogram, SpectralField};
use mre_core::newmark::DisplacementHistory;

use crate::error::{HarnessError, Result};

pub const MASKED: &str = "masked";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Plane {
    /// Axis normal to the plane: 0, 1 or 2.
    pub axis: usize,
    pub index: usize,
}

impl Plane {
    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.axis > 2 {
            return Err(HarnessError::Config(format!("slice axis must be 0, 1 or 2, got {}", self.axis)));
        }
        let n = grid.nodes_per_axis()[self.axis];
        if self.index >= n {
            return Err(HarnessError::Config(format!(
                "slice index {} out of range for axis {} with {} nodes",
                self.index, self.axis, n
            )));
        }
        Ok(())
    }

    /// Nodes of the plane, first in-plane axis fastest.
    pub fn nodes(&self, grid: &Grid) -> Vec<usize> {
        let dims = grid.nodes_per_axis();
        let (a, b) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut out = Vec::with_capacity(dims[a] * dims[b]);
        for j in 0..dims[b] {
            for i in 0..dims[a] {
                let mut ijk = [0; 3];
                ijk[self.axis] = self.index;
                ijk[a] = i;
                ijk[b] = j;
                out.push(grid.node_index(ijk));
            }
        }
        out
    }
}

fn table(grid: &Grid, plane: Plane, header: &[&str], row: impl Fn(usize) -> Vec<Option<f64>>) -> Result<String> {
    plane.check(grid)?;
    let mut s = String::from("x,y,z");
    for h in header {
        s.push(',');
        s.push_str(h);
    }
    s.push('\n');
    for node in plane.nodes(grid) {
        let x = grid.node_position(node);
        write!(s, "{:e},{:e},{:e}", x[0], x[1], x[2]).expect("string write");
        for v in row(node) {
            match v {
                Some(v) => write!(s, ",{v:e}").expect("string write"),
                None => write!(s, ",{MASKED}").expect("string write"),
            }
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn elastogram_slice(e: &Elastogram, plane: Plane) -> Result<String> {
    table(&e.grid, plane, &["storage", "loss"], |n| vec![e.storage(n), e.loss(n)])
}

pub fn spectral_slice(s: &SpectralField, plane: Plane) -> Result<String> {
    table(&s.grid, plane, &["magnitude"], |n| {
        vec![Some(s.values[n].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())]
    })
}

pub fn history_slice(h: &DisplacementHistory, sample: usize, plane: Plane) -> Result<String> {
    let snap = h.snapshots.get(sample).ok_or_else(|| {
        HarnessError::Config(format!("sample {sample} out of range for {} samples", h.snapshots.len()))
    })?;
    table(&h.grid, plane, &["magnitude"], |n| {
        let u = snap.node_value(n);
        vec![Some((u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())]
    })
}

pub fn write_table(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
