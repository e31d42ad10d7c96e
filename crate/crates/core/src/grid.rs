//! Structured hexahedral discretization of a cuboid.
//!
//! Nodes are numbered with `x` fastest: `node = (iz * ny + iy) * nx + ix`.
//! Elements follow the same rule on the `(nx-1, ny-1, nz-1)` cell lattice.
//! Within an element the eight local nodes are numbered by corner bits,
//! `a = bx + 2*by + 4*bz`, where bit 0 sits at `xi = -1` on that axis.
//! Both orderings are relied on by every binary export.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Corner signs of the reference hexahedron in local node order.
pub const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    extent: Vec3,
    nodes_per_axis: [usize; 3],
    spacing: Vec3,
}

impl Grid {
    /// Builds a uniform grid over `[0, extent]` with the given node counts.
    pub fn new(extent: Vec3, nodes_per_axis: [usize; 3]) -> Result<Self> {
        for axis in 0..3 {
            if !(extent[axis].is_finite() && extent[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {axis} must be positive, got {}",
                    extent[axis]
                )));
            }
            if nodes_per_axis[axis] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 2 nodes along axis {axis}, got {}",
                    nodes_per_axis[axis]
                )));
            }
        }
        if nodes_per_axis.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
            return Err(Error::InvalidGrid("node count overflows".into()));
        }
        let spacing = [0, 1, 2].map(|a| extent[a] / (nodes_per_axis[a] - 1) as f64);
        Ok(Self { extent, nodes_per_axis, spacing })
    }

    pub fn extent(&self) -> Vec3 {
        self.extent
    }

    pub fn nodes_per_axis(&self) -> [usize; 3] {
        self.nodes_per_axis
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn elements_per_axis(&self) -> [usize; 3] {
        self.nodes_per_axis.map(|n| n - 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.iter().product()
    }

    pub fn element_count(&self) -> usize {
        self.elements_per_axis().iter().product()
    }

    pub fn dof_count(&self) -> usize {
        3 * self.node_count()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    #[inline]
    pub fn node_index(&self, ijk: [usize; 3]) -> usize {
        let [nx, ny, _] = self.nodes_per_axis;
        (ijk[2] * ny + ijk[1]) * nx + ijk[0]
    }

    #[inline]
    pub fn node_ijk(&self, node: usize) -> [usize; 3] {
        let [nx, ny, _] = self.nodes_per_axis;
        [node % nx, (node / nx) % ny, node / (nx * ny)]
    }

    #[inline]
    pub fn node_position(&self, node: usize) -> Vec3 {
        let ijk = self.node_ijk(node);
        [0, 1, 2].map(|a| ijk[a] as f64 * self.spacing[a])
    }

    #[inline]
    pub fn element_index(&self, ijk: [usize; 3]) -> usize {
        let [ex, ey, _] = self.elements_per_axis();
        (ijk[2] * ey + ijk[1]) * ex + ijk[0]
    }

    #[inline]
    pub fn element_ijk(&self, element: usize) -> [usize; 3] {
        let [ex, ey, _] = self.elements_per_axis();
        [element % ex, (element / ex) % ey, element / (ex * ey)]
    }

    /// Global node indices of an element in local corner order.
    #[inline]
    pub fn element_nodes(&self, element: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(element);
        let mut out = [0; 8];
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = self.node_index([i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1)]);
        }
        out
    }

    pub fn element_centroid(&self, element: usize) -> Vec3 {
        let ijk = self.element_ijk(element);
        [0, 1, 2].map(|a| (ijk[a] as f64 + 0.5) * self.spacing[a])
    }

    /// Maps a local coordinate inside `element` to physical space.
    pub fn local_to_global(&self, element: usize, xi: Vec3) -> Vec3 {
        let ijk = self.element_ijk(element);
        [0, 1, 2].map(|a| (ijk[a] as f64 + 0.5 * (xi[a] + 1.0)) * self.spacing[a])
    }

    /// Number of node layers between `node` and the nearest outer face.
    pub fn boundary_distance(&self, node: usize) -> usize {
        let ijk = self.node_ijk(node);
        (0..3)
            .map(|a| ijk[a].min(self.nodes_per_axis[a] - 1 - ijk[a]))
            .min()
            .unwrap_or(0)
    }

    /// Finds the element containing `x` and its local coordinate.
    ///
    /// Points on a shared face resolve to the lower-index element.
    pub fn locate_point(&self, x: Vec3) -> Result<(usize, Vec3)> {
        let mut ijk = [0usize; 3];
        let mut xi = [0.0; 3];
        for a in 0..3 {
            let tol = 1e-12 * self.extent[a];
            if !x[a].is_finite() || x[a] < -tol || x[a] > self.extent[a] + tol {
                return Err(Error::OutOfDomain { x: x[0], y: x[1], z: x[2] });
            }
            let s = (x[a] / self.spacing[a]).max(0.0);
            let cells = self.nodes_per_axis[a] - 1;
            let i = (s.ceil() as usize).saturating_sub(1).min(cells - 1);
            ijk[a] = i;
            xi[a] = (2.0 * (s - i as f64) - 1.0).clamp(-1.0, 1.0);
        }
        Ok((self.element_index(ijk), xi))
    }

    /// Whether the point lies in the closed domain.
    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|a| x[a] >= 0.0 && x[a] <= self.extent[a])
    }
}

/// One of the six outer faces of the cuboid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    /// Distance from a point to the plane of this face.
    pub fn distance(self, grid: &Grid, x: Vec3) -> f64 {
        let a = self.axis();
        if self.is_max() {
            grid.extent()[a] - x[a]
        } else {
            x[a]
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::XMin => "x_min",
            Face::XMax => "x_max",
            Face::YMin => "y_min",
            Face::YMax => "y_max",
            Face::ZMin => "z_min",
            Face::ZMax => "z_max",
        }
    }
}

/// Trilinear shape-function values and physical gradients at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeEval {
    pub values: [f64; 8],
    pub gradients: [Vec3; 8],
}

/// Evaluates the trilinear basis at `xi` for an axis-aligned element of the given spacing.
pub fn eval_shape(xi: Vec3, spacing: Vec3) -> ShapeEval {
    let mut values = [0.0; 8];
    let mut gradients = [[0.0; 3]; 8];
    for a in 0..8 {
        let s = CORNER_SIGNS[a];
        let f = [0, 1, 2].map(|d| 0.5 * (1.0 + s[d] * xi[d]));
        values[a] = f[0] * f[1] * f[2];
        // dN/dx_d = (2/h_d) * dN/dxi_d
        gradients[a] = [
            (s[0] / spacing[0]) * f[1] * f[2],
            (s[1] / spacing[1]) * f[0] * f[2],
            (s[2] / spacing[2]) * f[0] * f[1],
        ];
    }
    ShapeEval { values, gradients }
}

/// Per-node 3-vector field, interleaved as `3 * node + component`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalVectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl NodalVectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { values: vec![0.0; grid.dof_count()], grid }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.dof_count() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                grid.dof_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut values = Vec::with_capacity(grid.dof_count());
        for node in 0..grid.node_count() {
            values.extend_from_slice(&f(grid.node_position(node)));
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn node_value(&self, node: usize) -> Vec3 {
        [self.values[3 * node], self.values[3 * node + 1], self.values[3 * node + 2]]
    }

    /// Trilinear interpolation inside `element` at local coordinate `xi`.
    pub fn interpolate(&self, element: usize, xi: Vec3) -> Vec3 {
        let shape = eval_shape(xi, self.grid.spacing());
        let nodes = self.grid.element_nodes(element);
        let mut out = [0.0; 3];
        for (a, &node) in nodes.iter().enumerate() {
            let v = self.node_value(node);
            for c in 0..3 {
                out[c] += shape.values[a] * v[c];
            }
        }
        out
    }

    /// Interpolates at an arbitrary physical point.
    pub fn sample(&self, x: Vec3) -> Result<Vec3> {
        let (element, xi) = self.grid.locate_point(x)?;
        Ok(self.interpolate(element, xi))
    }
}
