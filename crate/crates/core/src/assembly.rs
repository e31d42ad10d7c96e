//! Mass, damping and stiffness matrices for trilinear hexahedra, plus the
//! penalty Dirichlet terms and the viscous absorbing layer.
//!
//! Local DOF order inside an element is `3 * a + c` (node `a`, component `c`).
//! Every element of a structured grid has the same geometry, so the global
//! matrices are built from two reference blocks (`rho = 1` mass, `mu = 1`
//! stiffness) scaled per element. Damping uses the stiffness block scaled by
//! `eta`, since both integrate `2 * coef * eps(N_a) : eps(N_b)`.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{eval_shape, Face, Grid, Vec3};
use crate::material::{KelvinVoigt, MaterialField};
use crate::sparse::{SparseSymMatrix, SparsityPattern};

pub type ElementBlock = [[f64; 24]; 24];

/// Tensor-product Gauss–Legendre rule on `[-1, 1]^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    pub points: Vec<(Vec3, f64)>,
}

pub(crate) fn gauss_1d(order: usize) -> Vec<(f64, f64)> {
    match order {
        1 => vec![(0.0, 2.0)],
        2 => {
            let p = 1.0 / 3f64.sqrt();
            vec![(-p, 1.0), (p, 1.0)]
        }
        3 => {
            let p = (0.6f64).sqrt();
            vec![(-p, 5.0 / 9.0), (0.0, 8.0 / 9.0), (p, 5.0 / 9.0)]
        }
        _ => panic!("unsupported Gauss order {order}"),
    }
}

impl Quadrature {
    pub fn gauss(order: usize) -> Self {
        let g = gauss_1d(order);
        let mut points = Vec::with_capacity(g.len().pow(3));
        for &(z, wz) in &g {
            for &(y, wy) in &g {
                for &(x, wx) in &g {
                    points.push(([x, y, z], wx * wy * wz));
                }
            }
        }
        Self { points }
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::gauss(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementMatrices {
    pub mass: ElementBlock,
    pub damping: ElementBlock,
    pub stiffness: ElementBlock,
}

fn check_spacing(spacing: Vec3) -> Result<()> {
    if spacing.iter().all(|h| h.is_finite() && *h > 0.0) {
        Ok(())
    } else {
        Err(Error::DegenerateElement(spacing))
    }
}

/// `int N_a N_b` times the identity per component (unit density).
pub fn reference_mass(spacing: Vec3, quad: &Quadrature) -> Result<ElementBlock> {
    check_spacing(spacing)?;
    let jac = spacing.iter().product::<f64>() / 8.0;
    let mut m = [[0.0; 24]; 24];
    for (xi, w) in &quad.points {
        let s = eval_shape(*xi, spacing);
        for a in 0..8 {
            for b in 0..8 {
                let v = w * jac * s.values[a] * s.values[b];
                for c in 0..3 {
                    m[3 * a + c][3 * b + c] += v;
                }
            }
        }
    }
    Ok(m)
}

/// `int 2 eps(N_a e_i) : eps(N_b e_j)` (unit shear modulus).
///
/// With `eps(N e_i) = sym(e_i ⊗ grad N)` the integrand expands to
/// `delta_ij grad N_a · grad N_b + d_j N_a d_i N_b`.
pub fn reference_stiffness(spacing: Vec3, quad: &Quadrature) -> Result<ElementBlock> {
    check_spacing(spacing)?;
    let jac = spacing.iter().product::<f64>() / 8.0;
    let mut k = [[0.0; 24]; 24];
    for (xi, w) in &quad.points {
        let s = eval_shape(*xi, spacing);
        let g = &s.gradients;
        for a in 0..8 {
            for b in 0..8 {
                let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2];
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = g[a][j] * g[b][i];
                        if i == j {
                            v += dot;
                        }
                        k[3 * a + i][3 * b + j] += w * jac * v;
                    }
                }
            }
        }
    }
    Ok(k)
}

fn scaled(block: &ElementBlock, factor: f64) -> ElementBlock {
    block.map(|row| row.map(|v| v * factor))
}

/// Element mass, damping and stiffness for one Kelvin–Voigt element.
pub fn element_matrices(spacing: Vec3, material: &KelvinVoigt, quad: &Quadrature) -> Result<ElementMatrices> {
    material.validate()?;
    let m = reference_mass(spacing, quad)?;
    let k = reference_stiffness(spacing, quad)?;
    Ok(ElementMatrices {
        mass: scaled(&m, material.rho),
        damping: scaled(&k, material.eta),
        stiffness: scaled(&k, material.mu),
    })
}

/// DOF-level pattern coupling every node with its 27-node neighbourhood.
pub fn grid_pattern(grid: &Grid) -> Arc<SparsityPattern> {
    let n = grid.nodes_per_axis();
    let mut row_ptr = Vec::with_capacity(grid.dof_count() + 1);
    row_ptr.push(0);
    let mut cols: Vec<u32> = Vec::new();
    let mut neighbors = Vec::with_capacity(27);
    for node in 0..grid.node_count() {
        let [i, j, k] = grid.node_ijk(node);
        neighbors.clear();
        for kk in k.saturating_sub(1)..=(k + 1).min(n[2] - 1) {
            for jj in j.saturating_sub(1)..=(j + 1).min(n[1] - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(n[0] - 1) {
                    neighbors.push(grid.node_index([ii, jj, kk]) as u32);
                }
            }
        }
        for _ in 0..3 {
            for &m in &neighbors {
                cols.extend_from_slice(&[3 * m, 3 * m + 1, 3 * m + 2]);
            }
            row_ptr.push(cols.len());
        }
    }
    Arc::new(SparsityPattern::from_parts(grid.dof_count(), row_ptr, cols))
}

/// Assembles `sum_e factor(e) * reference` on `pattern`.
///
/// Each node row is owned by one task and accumulates its adjacent elements
/// in a fixed order, so the result does not depend on scheduling.
pub fn assemble_scaled(
    grid: &Grid,
    pattern: &Arc<SparsityPattern>,
    reference: &ElementBlock,
    factor: impl Fn(usize) -> f64 + Sync,
) -> SparseSymMatrix {
    let mut values = vec![0.0; pattern.nnz()];
    let row_ptr = pattern.row_ptr();
    let mut node_slices: Vec<&mut [f64]> = Vec::with_capacity(grid.node_count());
    let mut rest = values.as_mut_slice();
    for node in 0..grid.node_count() {
        let len = row_ptr[3 * node + 3] - row_ptr[3 * node];
        let (head, tail) = rest.split_at_mut(len);
        node_slices.push(head);
        rest = tail;
    }
    let cells = grid.elements_per_axis();
    node_slices.into_par_iter().enumerate().for_each(|(node, out)| {
        let ijk = grid.node_ijk(node);
        let base = row_ptr[3 * node];
        // elements around the node, in increasing element index
        for local_in_elem in (0..8).rev() {
            let mut e = [0usize; 3];
            let mut inside = true;
            for d in 0..3 {
                let shift = (local_in_elem >> d) & 1;
                if ijk[d] < shift || ijk[d] - shift >= cells[d] {
                    inside = false;
                    break;
                }
                e[d] = ijk[d] - shift;
            }
            if !inside {
                continue;
            }
            let element = grid.element_index(e);
            let f = factor(element);
            if f == 0.0 {
                continue;
            }
            let nodes = grid.element_nodes(element);
            let a = local_in_elem;
            for (b, &m) in nodes.iter().enumerate() {
                for i in 0..3 {
                    let row = 3 * node + i;
                    let pos = pattern.position(row, 3 * m).expect("neighbour in pattern") - base;
                    for j in 0..3 {
                        out[pos + j] += f * reference[3 * a + i][3 * b + j];
                    }
                }
            }
        }
    });
    SparseSymMatrix::from_values(pattern.clone(), values)
}

#[derive(Clone, Debug)]
pub struct GlobalMatrices {
    pub mass: SparseSymMatrix,
    pub damping: SparseSymMatrix,
    pub stiffness: SparseSymMatrix,
}

/// Global `M`, `C`, `K` on a shared pattern (2x2x2 Gauss).
pub fn assemble_global(grid: &Grid, material: &MaterialField) -> Result<GlobalMatrices> {
    let quad = Quadrature::default();
    let m_ref = reference_mass(grid.spacing(), &quad)?;
    let k_ref = reference_stiffness(grid.spacing(), &quad)?;
    let pattern = grid_pattern(grid);
    Ok(GlobalMatrices {
        mass: assemble_scaled(grid, &pattern, &m_ref, |e| material.element(e).rho),
        damping: assemble_scaled(grid, &pattern, &k_ref, |e| material.element(e).eta),
        stiffness: assemble_scaled(grid, &pattern, &k_ref, |e| material.element(e).mu),
    })
}

/// Default `alpha_pen`; keeps the boundary trace error below 0.1% of the amplitude.
pub const DEFAULT_PENALTY: f64 = 1e7;

/// Default `alpha_abs` for the viscous sponge.
pub const DEFAULT_ABSORBING_ALPHA: f64 = 0.1;

/// Harmonic displacement `g(t) = amplitude * sin(omega t)` imposed by penalty on one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletSpec {
    pub face: Face,
    /// m
    pub amplitude: Vec3,
    /// rad/s
    pub omega: f64,
    pub penalty: f64,
}

impl DirichletSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(Error::InvalidBoundary(format!("penalty must be > 0, got {}", self.penalty)));
        }
        if self.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidBoundary("amplitude must be finite".into()));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidBoundary(format!("angular frequency must be > 0, got {}", self.omega)));
        }
        Ok(())
    }
}

/// `K_pen` on the constrained face and the unit-phase load for `f_pen(t)`.
#[derive(Clone, Debug)]
pub struct PenaltyTerms {
    pub stiffness: SparseSymMatrix,
    unit_force: Vec<f64>,
    omega: f64,
    /// Face element size used in the `alpha / h` scaling.
    pub h: f64,
}

impl PenaltyTerms {
    /// `f_pen(t) = sin(omega t) * (alpha/h) int A N_a`.
    pub fn force(&self, t: f64) -> Vec<f64> {
        let s = (self.omega * t).sin();
        self.unit_force.iter().map(|v| v * s).collect()
    }

    pub fn add_force_into(&self, t: f64, f: &mut [f64]) {
        let s = (self.omega * t).sin();
        for (fi, u) in f.iter_mut().zip(&self.unit_force) {
            *fi += s * u;
        }
    }

    pub fn unit_force(&self) -> &[f64] {
        &self.unit_force
    }
}

/// Face elements, their corner nodes, and the 2x2 Gauss points on the face.
fn face_quadrature(grid: &Grid, face: Face) -> (Vec<usize>, Vec<(Vec3, f64)>, f64) {
    let axis = face.axis();
    let cells = grid.elements_per_axis();
    let h = grid.spacing();
    let others: Vec<usize> = (0..3).filter(|&d| d != axis).collect();
    let area_jac = h[others[0]] * h[others[1]] / 4.0;
    let layer = if face.is_max() { cells[axis] - 1 } else { 0 };
    let elements = (0..grid.element_count()).filter(|&e| grid.element_ijk(e)[axis] == layer).collect();
    let g = gauss_1d(2);
    let mut pts = Vec::new();
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            let mut xi = [0.0; 3];
            xi[axis] = if face.is_max() { 1.0 } else { -1.0 };
            xi[others[0]] = u;
            xi[others[1]] = v;
            pts.push((xi, wu * wv * area_jac));
        }
    }
    (elements, pts, (h[others[0]] * h[others[1]]).sqrt())
}

/// Penalty stiffness `(alpha/h) int N_a N_b` and load for the Dirichlet face.
pub fn penalty_contributions(grid: &Grid, spec: &DirichletSpec) -> Result<PenaltyTerms> {
    spec.validate()?;
    let (elements, pts, h) = face_quadrature(grid, spec.face);
    if elements.is_empty() || h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidBoundary("Dirichlet face has zero measure".into()));
    }
    let scale = spec.penalty / h;
    let mut triplets = Vec::new();
    let mut unit_force = vec![0.0; grid.dof_count()];
    for &e in &elements {
        let nodes = grid.element_nodes(e);
        for &(xi, w) in &pts {
            let s = eval_shape(xi, grid.spacing());
            for a in 0..8 {
                if s.values[a].abs() < 1e-14 {
                    continue;
                }
                for c in 0..3 {
                    unit_force[3 * nodes[a] + c] += scale * w * s.values[a] * spec.amplitude[c];
                }
                for b in a..8 {
                    if s.values[b].abs() < 1e-14 {
                        continue;
                    }
                    let v = scale * w * s.values[a] * s.values[b];
                    for c in 0..3 {
                        triplets.push((3 * nodes[a] + c, 3 * nodes[b] + c, v));
                    }
                }
            }
        }
    }
    // the canonical (min,max) key sums a-b and b-a once; diagonal pairs added once too
    let stiffness = SparseSymMatrix::from_triplets(grid.dof_count(), triplets)?;
    Ok(PenaltyTerms { stiffness, unit_force, omega: spec.omega, h })
}

/// Viscous sponge: damping of elements near the covered faces is raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingSpec {
    /// Layer thickness `H_l`, m.
    pub thickness: f64,
    /// Scaling `alpha_abs`; layer damping becomes `(1 + alpha_abs / H_l) * C`.
    pub alpha: f64,
    pub faces: Vec<Face>,
}

impl AbsorbingSpec {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let min_extent = grid.extent().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(self.thickness > 0.0 && self.thickness < 0.5 * min_extent) {
            return Err(Error::InvalidBoundary(format!(
                "absorbing layer thickness must lie in (0, {}), got {}",
                0.5 * min_extent,
                self.thickness
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidBoundary(format!("alpha_abs must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Damping multiplier inside the layer.
    pub fn layer_factor(&self) -> f64 {
        1.0 + self.alpha / self.thickness
    }
}

/// Elements whose centroid lies closer than `H_l` to a covered face.
pub fn layer_elements(grid: &Grid, spec: &AbsorbingSpec) -> Vec<bool> {
    (0..grid.element_count())
        .map(|e| {
            let c = grid.element_centroid(e);
            spec.faces.iter().any(|f| f.distance(grid, c) < spec.thickness)
        })
        .collect()
}

/// Whether a node sits inside the absorbing layer (closer than `H_l` to a covered face).
pub fn node_in_layer(grid: &Grid, spec: &AbsorbingSpec, node: usize) -> bool {
    let x = grid.node_position(node);
    spec.faces.iter().any(|f| f.distance(grid, x) < spec.thickness)
}

/// `C <- C + alpha_abs * C_layer` with `C_layer = C_e / H_l` on layer elements.
pub fn absorbing_augment(
    damping: SparseSymMatrix,
    grid: &Grid,
    material: &MaterialField,
    spec: &AbsorbingSpec,
) -> Result<SparseSymMatrix> {
    spec.validate(grid)?;
    let layer = layer_elements(grid, spec);
    let count = layer.iter().filter(|&&b| b).count();
    if count == 0 {
        warn!("absorbing layer of {} m contains no elements", spec.thickness);
    }
    if spec.alpha == 0.0 || count == 0 {
        return Ok(damping);
    }
    let k_ref = reference_stiffness(grid.spacing(), &Quadrature::default())?;
    let extra = assemble_scaled(grid, damping.pattern(), &k_ref, |e| {
        if layer[e] {
            material.element(e).eta
        } else {
            0.0
        }
    });
    let mut out = damping;
    out.add_scaled(spec.alpha / spec.thickness, &extra)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::uniform_material;
    use approx::assert_relative_eq;

    fn matvec24(m: &ElementBlock, d: &[f64; 24]) -> [f64; 24] {
        let mut out = [0.0; 24];
        for i in 0..24 {
            out[i] = (0..24).map(|j| m[i][j] * d[j]).sum();
        }
        out
    }

    #[test]
    fn unit_cube_mass_totals_volume() {
        let m = reference_mass([1.0; 3], &Quadrature::default()).unwrap();
        for c in 0..3 {
            let total: f64 = (0..8).flat_map(|a| (0..8).map(move |b| (a, b))).map(|(a, b)| m[3 * a + c][3 * b + c]).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        }
        // exact integral of products of trilinear functions: (1/27) * 8 on the diagonal
        assert_relative_eq!(m[0][0], 1.0 / 27.0, max_relative = 1e-14);
        // opposite corners: (1/6)^3 * 8 / 8 = 1/216
        assert_relative_eq!(m[0][21], 1.0 / 216.0, max_relative = 1e-14);
    }

    #[test]
    fn two_point_gauss_is_exact_for_mass() {
        let h = [0.3, 0.2, 0.7];
        let m2 = reference_mass(h, &Quadrature::gauss(2)).unwrap();
        let m3 = reference_mass(h, &Quadrature::gauss(3)).unwrap();
        for i in 0..24 {
            for j in 0..24 {
                assert_relative_eq!(m2[i][j], m3[i][j], epsilon = 1e-16, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn rigid_modes_are_in_the_kernel() {
        let h = [0.3, 0.2, 0.7];
        let k = reference_stiffness(h, &Quadrature::default()).unwrap();
        let scale = k.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let corners: Vec<Vec3> = crate::grid::CORNER_SIGNS.iter().map(|s| [0, 1, 2].map(|d| 0.5 * (s[d] + 1.0) * h[d])).collect();
        let mut modes: Vec<[f64; 24]> = Vec::new();
        for c in 0..3 {
            let mut d = [0.0; 24];
            for a in 0..8 {
                d[3 * a + c] = 1.0;
            }
            modes.push(d);
        }
        for (p, q) in [(0, 1), (1, 2), (2, 0)] {
            let mut d = [0.0; 24];
            for a in 0..8 {
                d[3 * a + p] = -corners[a][q];
                d[3 * a + q] = corners[a][p];
            }
            modes.push(d);
        }
        for d in &modes {
            let r = matvec24(&k, d);
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rn <= 1e-12 * scale * dn, "residual {rn}");
        }
    }

    #[test]
    fn element_blocks_are_symmetric_and_damping_proportional() {
        let mat = KelvinVoigt { mu: 2500.0, eta: 1.5, rho: 1000.0 };
        let e = element_matrices([0.01; 3], &mat, &Quadrature::default()).unwrap();
        for i in 0..24 {
            for j in 0..24 {
                assert_relative_eq!(e.stiffness[i][j], e.stiffness[j][i], epsilon = 1e-12);
                assert_relative_eq!(e.mass[i][j], e.mass[j][i], epsilon = 1e-18);
                assert_relative_eq!(e.damping[i][j], e.stiffness[i][j] * 1.5 / 2500.0, epsilon = 1e-14);
            }
        }
        assert!(element_matrices([0.01, 0.0, 0.01], &mat, &Quadrature::default()).is_err());
    }

    #[test]
    fn single_element_global_equals_element_block() {
        let g = Grid::new([0.02, 0.03, 0.01], [2; 3]).unwrap();
        let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
        let glob = assemble_global(&g, &mat).unwrap();
        let e = element_matrices(g.spacing(), &KelvinVoigt::BASELINE, &Quadrature::default()).unwrap();
        let k = glob.stiffness.to_dense();
        let m = glob.mass.to_dense();
        for i in 0..24 {
            for j in 0..24 {
                assert_relative_eq!(k[i][j], e.stiffness[i][j], epsilon = 1e-12);
                assert_relative_eq!(m[i][j], e.mass[i][j], epsilon = 1e-18);
            }
        }
    }

    #[test]
    fn two_element_shared_face_sums_both_blocks() {
        let g = Grid::new([2.0, 1.0, 1.0], [3, 2, 2]).unwrap();
        let mat = uniform_material(&g, KelvinVoigt { mu: 3.0, eta: 0.0, rho: 2.0 }).unwrap();
        let glob = assemble_global(&g, &mat).unwrap();
        let e = element_matrices([1.0; 3], &mat.element(0).clone(), &Quadrature::default()).unwrap();
        // hand assembly into a dense 36x36
        let n = g.dof_count();
        let mut dense = vec![vec![0.0; n]; n];
        for el in 0..2 {
            let nodes = g.element_nodes(el);
            for a in 0..8 {
                for b in 0..8 {
                    for i in 0..3 {
                        for j in 0..3 {
                            dense[3 * nodes[a] + i][3 * nodes[b] + j] += e.stiffness[3 * a + i][3 * b + j];
                        }
                    }
                }
            }
        }
        let k = glob.stiffness.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert_relative_eq!(k[i][j], dense[i][j], epsilon = 1e-12);
            }
        }
        // a node on the shared face (node 1) collects both diagonal contributions
        assert_relative_eq!(k[3][3], 2.0 * e.stiffness[3][3], epsilon = 1e-12);
    }

    #[test]
    fn total_mass_is_rho_volume() {
        let g = Grid::new([0.1, 0.05, 0.08], [5, 4, 6]).unwrap();
        let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
        let glob = assemble_global(&g, &mat).unwrap();
        let ones_x: Vec<f64> = (0..g.dof_count()).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let mx = glob.mass.mul_vec(&ones_x);
        let total: f64 = mx.iter().sum();
        assert_relative_eq!(total, 1000.0 * g.volume(), max_relative = 1e-12);
    }

    fn penalty_spec(alpha: f64, amp: f64) -> DirichletSpec {
        DirichletSpec { face: Face::XMin, amplitude: [0.0, 0.0, amp], omega: 100.0, penalty: alpha }
    }

    #[test]
    fn penalty_force_is_lumped_face_area() {
        let g = Grid::new([0.1, 0.2, 0.3], [3, 5, 4]).unwrap();
        let p = penalty_contributions(&g, &penalty_spec(1e4, 2e-4)).unwrap();
        let h = (0.05f64 * 0.1).sqrt();
        assert_relative_eq!(p.h, h, max_relative = 1e-14);
        // sin(omega t) = 1
        let f = p.force(std::f64::consts::FRAC_PI_2 / 100.0);
        let total_z: f64 = f.iter().skip(2).step_by(3).sum();
        assert_relative_eq!(total_z, 1e4 / h * 2e-4 * 0.2 * 0.3, max_relative = 1e-12);
        assert!(f.iter().step_by(3).all(|&v| v == 0.0));
        // corner node of the face has a quarter cell area, interior node a full cell
        let corner = g.node_index([0, 0, 0]);
        let interior = g.node_index([0, 2, 1]);
        assert_relative_eq!(f[3 * corner + 2], 1e4 / h * 2e-4 * 0.05 * 0.1 / 4.0, max_relative = 1e-12);
        assert_relative_eq!(f[3 * interior + 2], 1e4 / h * 2e-4 * 0.05 * 0.1, max_relative = 1e-12);
        // only x = 0 nodes are touched
        for node in 0..g.node_count() {
            if g.node_ijk(node)[0] != 0 {
                assert_eq!(f[3 * node + 2], 0.0);
            }
        }
    }

    #[test]
    fn penalty_scales_linearly_and_vanishes_without_amplitude() {
        let g = Grid::new([0.1; 3], [3; 3]).unwrap();
        let p0 = penalty_contributions(&g, &penalty_spec(1e4, 0.0)).unwrap();
        assert!(p0.force(0.0123).iter().all(|&v| v == 0.0));
        let p1 = penalty_contributions(&g, &penalty_spec(1e4, 1e-4)).unwrap();
        let p2 = penalty_contributions(&g, &penalty_spec(2e4, 1e-4)).unwrap();
        assert_eq!(p0.stiffness, p1.stiffness);
        for (a, b) in p1.stiffness.values().iter().zip(p2.stiffness.values()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-15);
        }
        for (a, b) in p1.force(0.01).iter().zip(p2.force(0.01)) {
            assert_relative_eq!(2.0 * a, b, max_relative = 1e-15);
        }
        // face mass rows sum to the face area per component
        let ones: Vec<f64> = vec![1.0; g.dof_count()];
        let row = p1.stiffness.mul_vec(&ones);
        let total: f64 = row.iter().sum();
        assert_relative_eq!(total, 3.0 * 1e4 / p1.h * 0.01, max_relative = 1e-12);
        assert!(penalty_contributions(&g, &penalty_spec(0.0, 1e-4)).is_err());
    }

    #[test]
    fn absorbing_layer_covers_requested_sheets() {
        let g = Grid::new([0.1; 3], [11; 3]).unwrap();
        let spec = AbsorbingSpec { thickness: 0.02, alpha: 0.05, faces: vec![Face::XMax] };
        let layer = layer_elements(&g, &spec);
        for (e, &inside) in layer.iter().enumerate() {
            assert_eq!(inside, g.element_ijk(e)[0] >= 8, "element {e}");
        }
        let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
        let glob = assemble_global(&g, &mat).unwrap();
        let same = absorbing_augment(glob.damping.clone(), &g, &mat, &AbsorbingSpec { alpha: 0.0, ..spec.clone() }).unwrap();
        assert_eq!(same, glob.damping);
        let aug = absorbing_augment(glob.damping.clone(), &g, &mat, &spec).unwrap();
        // a DOF deep inside the layer sees the full factor, one far away is unchanged
        let deep = 3 * g.node_index([10, 5, 5]);
        let far = 3 * g.node_index([2, 5, 5]);
        assert_relative_eq!(aug.get(deep, deep), glob.damping.get(deep, deep) * spec.layer_factor(), max_relative = 1e-12);
        assert_eq!(aug.get(far, far), glob.damping.get(far, far));
    }

    #[test]
    fn absorbing_spec_validation() {
        let g = Grid::new([0.1; 3], [5; 3]).unwrap();
        let bad = AbsorbingSpec { thickness: 0.06, alpha: 1.0, faces: vec![Face::XMax] };
        assert!(bad.validate(&g).is_err());
        let neg = AbsorbingSpec { thickness: 0.01, alpha: -1.0, faces: vec![Face::XMax] };
        assert!(neg.validate(&g).is_err());
    }
}
