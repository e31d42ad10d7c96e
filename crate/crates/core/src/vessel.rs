//! Pulsating vessel loads.
//!
//! A vessel is a polyline centerline with a radius. Its internal pressure acts
//! on the surrounding tissue through the lateral surface of a virtual cylinder:
//! the traction on the tissue is `p(t) * n_v`, with `n_v` pointing from the
//! vessel into the tissue, integrated against the trilinear basis by point
//! quadrature. The cylinder has no end caps and carries no material of its own.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{eval_shape, Grid, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselSpec {
    pub centerline: Vec<Vec3>,
    /// m
    pub radius: f64,
    /// Pa
    pub p_mean: f64,
    /// Pa
    pub p_amp: f64,
    /// Hz
    pub f_pulse: f64,
    /// Phase offset of the pulsation, rad.
    #[serde(default)]
    pub phase: f64,
    /// Hold the pressure at this pulsation phase for the whole run.
    #[serde(default)]
    pub frozen_phase: Option<f64>,
}

impl VesselSpec {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.centerline.len() < 2 {
            return Err(Error::InvalidVessel("centerline needs at least two points".into()));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidVessel(format!("radius must be > 0, got {}", self.radius)));
        }
        if !(self.p_amp >= 0.0 && self.p_mean >= self.p_amp && self.p_mean.is_finite()) {
            return Err(Error::InvalidVessel(format!(
                "need p_mean >= p_amp >= 0, got p_mean = {}, p_amp = {}",
                self.p_mean, self.p_amp
            )));
        }
        if self.frozen_phase.is_none() && !(self.f_pulse.is_finite() && self.f_pulse > 0.0) {
            return Err(Error::InvalidVessel(format!("pulse frequency must be > 0, got {}", self.f_pulse)));
        }
        for p in &self.centerline {
            if !grid.contains(*p) {
                return Err(Error::InvalidVessel(format!("centerline point {p:?} lies outside the domain")));
            }
        }
        let extent = grid.extent();
        for seg in self.centerline.windows(2) {
            let d = direction(seg[0], seg[1])
                .ok_or_else(|| Error::InvalidVessel("centerline has a zero-length segment".into()))?;
            // lateral reach of the cylinder along each axis
            for a in 0..3 {
                let reach = self.radius * (1.0 - d[a] * d[a]).max(0.0).sqrt();
                if reach == 0.0 {
                    continue;
                }
                for p in seg {
                    if p[a] - reach <= 0.0 || p[a] + reach >= extent[a] {
                        return Err(Error::InvalidVessel(format!(
                            "radius {} reaches the domain boundary along axis {a} at {p:?}",
                            self.radius
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Length of the centerline, m.
    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|s| dist(s[0], s[1])).sum()
    }

    /// Shortest distance from `x` to the centerline.
    pub fn distance_to_centerline(&self, x: Vec3) -> f64 {
        self.centerline
            .windows(2)
            .map(|s| {
                let d = sub(s[1], s[0]);
                let len2 = dot(d, d);
                let t = if len2 > 0.0 { (dot(sub(x, s[0]), d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let q = [0, 1, 2].map(|a| s[0][a] + t * d[a]);
                dist(x, q)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `p(t) = p_mean + p_amp * sin(2 pi f_pulse t + phase)`, or the frozen value.
pub fn pressure(spec: &VesselSpec, t: f64) -> f64 {
    match spec.frozen_phase {
        Some(phi) => spec.p_mean + spec.p_amp * phi.sin(),
        None => spec.p_mean + spec.p_amp * (2.0 * PI * spec.f_pulse * t + spec.phase).sin(),
    }
}

/// Points, unit normals and area weights on the vessel's lateral surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceQuadrature {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Containing element and local coordinate of each point.
    pub locations: Vec<(usize, Vec3)>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    dot(sub(a, b), sub(a, b)).sqrt()
}

fn direction(a: Vec3, b: Vec3) -> Option<Vec3> {
    let d = sub(b, a);
    let n = dot(d, d).sqrt();
    (n > 0.0).then(|| d.map(|v| v / n))
}

/// Number of elements a segment passes through (grid planes crossed plus one).
fn elements_crossed(grid: &Grid, a: Vec3, b: Vec3) -> usize {
    let h = grid.spacing();
    let mut count = 1;
    for d in 0..3 {
        let lo = a[d].min(b[d]) / h[d];
        let hi = a[d].max(b[d]) / h[d];
        let first = lo.floor() as i64 + 1;
        let last = hi.ceil() as i64 - 1;
        if last >= first {
            count += (last - first + 1) as usize;
        }
    }
    count
}

/// Builds the lateral-surface quadrature: `n_axial` stations per crossed
/// element along each segment, `n_circumferential` angles per station.
pub fn discretize_vessel(
    grid: &Grid,
    spec: &VesselSpec,
    n_axial: usize,
    n_circumferential: usize,
) -> Result<SurfaceQuadrature> {
    spec.validate(grid)?;
    if n_axial == 0 || n_circumferential < 3 {
        return Err(Error::InvalidVessel("need n_axial >= 1 and n_circumferential >= 3".into()));
    }
    let h_min = grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    if spec.radius < h_min {
        warn!("vessel radius {} m is below the element size {} m", spec.radius, h_min);
    }
    let mut q = SurfaceQuadrature { points: vec![], normals: vec![], weights: vec![], locations: vec![] };
    for seg in spec.centerline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d = direction(a, b).expect("validated");
        let len = dist(a, b);
        let helper = {
            let mut e = [0.0; 3];
            let k = (0..3).min_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs())).unwrap_or(0);
            e[k] = 1.0;
            e
        };
        let e1 = {
            let c = cross(d, helper);
            let n = dot(c, c).sqrt();
            c.map(|v| v / n)
        };
        let e2 = cross(d, e1);
        let stations = n_axial * elements_crossed(grid, a, b);
        let w = 2.0 * PI * spec.radius / n_circumferential as f64 * len / stations as f64;
        for s in 0..stations {
            let t = (s as f64 + 0.5) / stations as f64;
            let c = [0, 1, 2].map(|k| a[k] + t * (b[k] - a[k]));
            for j in 0..n_circumferential {
                let theta = 2.0 * PI * j as f64 / n_circumferential as f64;
                let (sn, cs) = theta.sin_cos();
                let n = [0, 1, 2].map(|k| cs * e1[k] + sn * e2[k]);
                let x = [0, 1, 2].map(|k| c[k] + spec.radius * n[k]);
                let loc = grid.locate_point(x).map_err(|_| {
                    Error::InvalidVessel(format!("vessel surface point {x:?} escapes the domain"))
                })?;
                q.points.push(x);
                q.normals.push(n);
                q.weights.push(w);
                q.locations.push(loc);
            }
        }
    }
    Ok(q)
}

/// Nodal load for unit pressure: `f_a = sum_q w_q n_v(q) N_a(q)`.
pub fn unit_vessel_load(grid: &Grid, quad: &SurfaceQuadrature) -> Vec<f64> {
    let mut f = vec![0.0; grid.dof_count()];
    for i in 0..quad.len() {
        let (element, xi) = quad.locations[i];
        let shape = eval_shape(xi, grid.spacing());
        let nodes = grid.element_nodes(element);
        for (a, &node) in nodes.iter().enumerate() {
            let s = quad.weights[i] * shape.values[a];
            for c in 0..3 {
                f[3 * node + c] += s * quad.normals[i][c];
            }
        }
    }
    f
}

/// Nodal force from the vessel traction at time `t`.
pub fn vessel_load(grid: &Grid, quad: &SurfaceQuadrature, spec: &VesselSpec, t: f64) -> Vec<f64> {
    let p = pressure(spec, t);
    let mut f = unit_vessel_load(grid, quad);
    f.iter_mut().for_each(|v| *v *= p);
    f
}

/// A vessel ready for time stepping: its spec and precomputed unit load.
#[derive(Clone, Debug)]
pub struct Vessel {
    pub spec: VesselSpec,
    pub quadrature: SurfaceQuadrature,
    unit_load: Vec<f64>,
}

impl Vessel {
    pub fn new(grid: &Grid, spec: VesselSpec, n_axial: usize, n_circumferential: usize) -> Result<Self> {
        let quadrature = discretize_vessel(grid, &spec, n_axial, n_circumferential)?;
        let unit_load = unit_vessel_load(grid, &quadrature);
        Ok(Self { spec, quadrature, unit_load })
    }

    pub fn add_load_into(&self, t: f64, f: &mut [f64]) {
        let p = pressure(&self.spec, t);
        if p == 0.0 {
            return;
        }
        for (fi, u) in f.iter_mut().zip(&self.unit_load) {
            *fi += p * u;
        }
    }

    pub fn unit_load(&self) -> &[f64] {
        &self.unit_load
    }
}
