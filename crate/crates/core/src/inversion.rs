//! Algebraic direct inversion of a single-frequency displacement field.
//!
//! Sign convention: with `rho w^2 u + G* Lap u = 0`, the estimate is
//! `G* = -rho w^2 sum_j u_j conj(Lap u_j) / sum_j |Lap u_j|^2`, which gives
//! `G' > 0` and `G'' > 0` for a Kelvin–Voigt plane wave.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Vec3};
use crate::material::MaterialField;
use crate::newmark::DisplacementHistory;
use crate::vessel::VesselSpec;

pub type CVec3 = [Complex64; 3];

const ZERO3: CVec3 = [Complex64::new(0.0, 0.0); 3];

/// Relative cutoff on `sum_j |Lap u_j|^2` below which a voxel is masked.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    /// rad/s
    pub omega: f64,
    pub values: Vec<CVec3>,
}

impl SpectralField {
    pub fn new(grid: Grid, omega: f64, values: Vec<CVec3>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "spectral field has {} nodes, grid has {}",
                values.len(),
                grid.node_count()
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidHistory(format!("angular frequency must be > 0, got {omega}")));
        }
        if values.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidHistory("spectral field contains non-finite entries".into()));
        }
        Ok(Self { grid, omega, values })
    }

    pub fn from_fn(grid: Grid, omega: f64, f: impl Fn(Vec3) -> CVec3 + Sync) -> Result<Self> {
        let values = (0..grid.node_count()).into_par_iter().map(|n| f(grid.node_position(n))).collect();
        Self::new(grid, omega, values)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let values = self.values.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect();
        Self { grid: self.grid, omega: self.omega, values }
    }
}

/// Complex amplitude `c = (2/N) sum_n u(t_n) exp(-i w t_n)` over the window.
pub fn extract_harmonic(history: &DisplacementHistory, omega: f64) -> Result<SpectralField> {
    let n = history.times.len();
    if n < 2 || history.snapshots.len() != n {
        return Err(Error::InvalidHistory(format!(
            "history needs matching times and snapshots, got {} and {}",
            n,
            history.snapshots.len()
        )));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidHistory(format!("angular frequency must be > 0, got {omega}")));
    }
    let dt = (history.times[n - 1] - history.times[0]) / (n - 1) as f64;
    let uniform = history.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
    if !(dt > 0.0 && uniform) {
        return Err(Error::InvalidHistory("sample times are not uniformly spaced".into()));
    }
    let per_period = 2.0 * PI / (omega * dt);
    if per_period < 4.0 - 1e-9 {
        return Err(Error::InvalidHistory(format!(
            "{per_period:.3} samples per period, at least 4 required"
        )));
    }
    let periods = n as f64 / per_period;
    if (periods - periods.round()).abs() > 1e-6 || periods.round() < 1.0 {
        return Err(Error::InvalidHistory(format!(
            "window spans {periods:.6} drive periods, an integer number is required"
        )));
    }
    let grid = history.grid;
    let phases: Vec<Complex64> =
        history.times.iter().map(|&t| Complex64::from_polar(2.0 / n as f64, -omega * t)).collect();
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let mut c = ZERO3;
            for (snap, e) in history.snapshots.iter().zip(&phases) {
                let u = snap.node_value(node);
                for j in 0..3 {
                    c[j] += e * u[j];
                }
            }
            c
        })
        .collect();
    SpectralField::new(grid, omega, values)
}

/// Central differences inside, one-sided at the ends, per axis.
pub fn gradient(grid: &Grid, values: &[Complex64]) -> Vec<CVec3> {
    let [nx, ny, nz] = grid.nodes_per_axis();
    let dims = [nx, ny, nz];
    let h = grid.spacing();
    (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let ijk = grid.node_ijk(node);
            let mut g = ZERO3;
            for axis in 0..3 {
                let i = ijk[axis];
                let at = |k: usize| {
                    let mut p = ijk;
                    p[axis] = k;
                    values[grid.node_index(p)]
                };
                let n = dims[axis];
                g[axis] = if n < 2 {
                    Complex64::new(0.0, 0.0)
                } else if i == 0 {
                    (at(1) - at(0)) / h[axis]
                } else if i == n - 1 {
                    (at(n - 1) - at(n - 2)) / h[axis]
                } else {
                    (at(i + 1) - at(i - 1)) / (2.0 * h[axis])
                };
            }
            g
        })
        .collect()
}

/// `q = curl u` from the central-difference gradient.
pub fn curl_filter(spectral: &SpectralField) -> Result<SpectralField> {
    let grid = &spectral.grid;
    if grid.nodes_per_axis().iter().any(|&n| n < 3) {
        return Err(Error::FieldTooSmall(format!(
            "curl needs at least 3 nodes per axis, grid has {:?}",
            grid.nodes_per_axis()
        )));
    }
    let comp = |j: usize| -> Vec<Complex64> { spectral.values.iter().map(|v| v[j]).collect() };
    let gx = gradient(grid, &comp(0));
    let gy = gradient(grid, &comp(1));
    let gz = gradient(grid, &comp(2));
    let values = (0..grid.node_count())
        .map(|n| [gz[n][1] - gy[n][2], gx[n][2] - gz[n][0], gy[n][0] - gx[n][1]])
        .collect();
    SpectralField::new(*grid, spectral.omega, values)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilKind {
    /// `(u(x+h) - 2u(x) + u(x-h)) / h^2`
    Standard,
    /// `(u(x+2h) - 2u(x) + u(x-2h)) / (4h^2)`
    #[default]
    Nested,
}

impl StencilKind {
    /// Node layers the stencil needs on each side.
    pub fn reach(self) -> usize {
        match self {
            StencilKind::Standard => 1,
            StencilKind::Nested => 2,
        }
    }

    /// Stencil value on `exp(ikx)` divided by the exact `-k^2`.
    pub fn symbol_ratio(self, kh: f64) -> f64 {
        match self {
            StencilKind::Standard => (2.0 * (kh / 2.0).sin() / kh).powi(2),
            StencilKind::Nested => (kh.sin() / kh).powi(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianField {
    pub grid: Grid,
    pub values: Vec<CVec3>,
    pub valid: Vec<bool>,
}

impl LaplacianField {
    /// Exact Laplacian supplied by the caller, valid everywhere.
    pub fn analytic(grid: Grid, f: impl Fn(Vec3) -> CVec3 + Sync) -> Self {
        let values = (0..grid.node_count()).into_par_iter().map(|n| f(grid.node_position(n))).collect();
        Self { grid, values, valid: vec![true; grid.node_count()] }
    }

    pub fn get(&self, node: usize) -> Option<CVec3> {
        self.valid[node].then(|| self.values[node])
    }
}

/// Whether every axis index of the node lies at least `margin` from both ends.
pub fn interior(grid: &Grid, node: usize, margin: usize) -> bool {
    let ijk = grid.node_ijk(node);
    let dims = grid.nodes_per_axis();
    (0..3).all(|a| ijk[a] >= margin && ijk[a] + margin < dims[a])
}

pub fn laplacian(spectral: &SpectralField, kind: StencilKind) -> LaplacianField {
    let grid = spectral.grid;
    let h = grid.spacing();
    let r = kind.reach();
    let u = &spectral.values;
    let results: Vec<(CVec3, bool)> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            if !interior(&grid, node, r) {
                return (ZERO3, false);
            }
            let ijk = grid.node_ijk(node);
            let mut out = ZERO3;
            for axis in 0..3 {
                let shifted = |d: isize| {
                    let mut p = ijk;
                    p[axis] = (p[axis] as isize + d) as usize;
                    &u[grid.node_index(p)]
                };
                let (plus, minus) = (shifted(r as isize), shifted(-(r as isize)));
                let denom = (r as f64 * h[axis]).powi(2);
                for j in 0..3 {
                    out[j] += (plus[j] - 2.0 * u[node][j] + minus[j]) / denom;
                }
            }
            (out, true)
        })
        .collect();
    let (values, valid) = results.into_iter().unzip();
    LaplacianField { grid, values, valid }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Elastogram {
    pub grid: Grid,
    pub omega: f64,
    pub stencil: Option<StencilKind>,
    /// `None` marks a masked voxel.
    pub values: Vec<Option<Complex64>>,
}

impl Elastogram {
    pub fn storage(&self, node: usize) -> Option<f64> {
        self.values[node].map(|g| g.re)
    }

    pub fn loss(&self, node: usize) -> Option<f64> {
        self.values[node].map(|g| g.im)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Per-voxel least-squares estimate over the three components.
pub fn invert(
    spectral: &SpectralField,
    lap: &LaplacianField,
    rho: &[f64],
    mask: Option<&[bool]>,
) -> Result<Elastogram> {
    let grid = spectral.grid;
    let n = grid.node_count();
    if lap.grid != grid || lap.values.len() != n || rho.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::DimensionMismatch("spectral, Laplacian, density and mask sizes differ".into()));
    }
    let w2 = spectral.omega * spectral.omega;
    let denom: Vec<f64> = lap.values.iter().map(|v| v.iter().map(|c| c.norm_sqr()).sum()).collect();
    let max_denom = (0..n).filter(|&i| lap.valid[i]).map(|i| denom[i]).fold(0.0, f64::max);
    let cutoff = DENOMINATOR_THRESHOLD * max_denom;
    let values: Vec<Option<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if !lap.valid[i] || mask.is_some_and(|m| !m[i]) || denom[i] <= cutoff || max_denom == 0.0 {
                return None;
            }
            let u = &spectral.values[i];
            let l = &lap.values[i];
            let num: Complex64 = (0..3).map(|j| u[j] * l[j].conj()).sum();
            Some(-rho[i] * w2 * num / denom[i])
        })
        .collect();
    if values.iter().all(|v| v.is_none()) {
        return Err(Error::FullyMasked);
    }
    Ok(Elastogram { grid, omega: spectral.omega, stencil: None, values })
}

/// Harmonic extraction, optional curl, Laplacian and inversion in one call.
pub fn invert_history(
    history: &DisplacementHistory,
    material: &MaterialField,
    stencil: StencilKind,
    curl: bool,
) -> Result<Elastogram> {
    let omega = 2.0 * PI * history.drive_frequency;
    let mut spectral = extract_harmonic(history, omega)?;
    if curl {
        spectral = curl_filter(&spectral)?;
    }
    let lap = laplacian(&spectral, stencil);
    let rho: Vec<f64> = (0..history.grid.node_count()).map(|n| material.node_density(n)).collect();
    let mut e = invert(&spectral, &lap, &rho, None)?;
    e.stencil = Some(stencil);
    Ok(e)
}

/// Nodes within `layers` element layers of a zone interface.
pub fn interface_exclusion(material: &MaterialField, layers: usize) -> Vec<bool> {
    (0..material.grid().node_count()).map(|n| material.near_interface(n, layers)).collect()
}

/// Nodes closer than `radius + margin` to any vessel centerline.
pub fn vessel_exclusion(grid: &Grid, vessels: &[VesselSpec], margin: f64) -> Vec<bool> {
    (0..grid.node_count())
        .map(|n| {
            let x = grid.node_position(n);
            vessels.iter().any(|v| v.distance_to_centerline(x) < v.radius + margin)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub voxels: usize,
    pub mean_storage: f64,
    pub mean_loss: f64,
    /// Percent, unsigned.
    pub delta_storage: f64,
    pub delta_loss: f64,
    /// Percent, `(G_ex - G_in) / G_in`.
    pub signed_storage: f64,
    pub signed_loss: f64,
}

/// Mean over valid voxels of `region` that are at least `boundary_margin`
/// extra node layers inside the stencil reach and not `excluded`.
pub fn region_stats(
    elastogram: &Elastogram,
    region: &[bool],
    boundary_margin: usize,
    excluded: Option<&[bool]>,
    reference: Complex64,
) -> Result<RegionStats> {
    let grid = &elastogram.grid;
    let n = grid.node_count();
    if region.len() != n || excluded.is_some_and(|e| e.len() != n) {
        return Err(Error::DimensionMismatch("region mask size differs from the grid".into()));
    }
    let reach = elastogram.stencil.map_or(0, StencilKind::reach);
    let mut count = 0usize;
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, g) in elastogram.values.iter().enumerate() {
        let Some(g) = g else { continue };
        if !region[i] || excluded.is_some_and(|e| e[i]) || !interior(grid, i, reach + boundary_margin) {
            continue;
        }
        count += 1;
        sum += g;
    }
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    let mean = sum / count as f64;
    let rel = |ex: f64, input: f64| if input != 0.0 { (ex - input) / input * 100.0 } else { f64::NAN };
    let signed_storage = rel(mean.re, reference.re);
    let signed_loss = rel(mean.im, reference.im);
    Ok(RegionStats {
        voxels: count,
        mean_storage: mean.re,
        mean_loss: mean.im,
        delta_storage: signed_storage.abs(),
        delta_loss: signed_loss.abs(),
        signed_storage,
        signed_loss,
    })
}
