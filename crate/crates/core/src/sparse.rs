//! Symmetric sparse matrices on a shared CSR pattern, and a Jacobi-preconditioned
//! conjugate-gradient solver.
//!
//! Both triangles are stored so that products parallelize by row. Entries are
//! only ever written through symmetric updates (`(r, c)` and `(c, r)` together,
//! keyed canonically as `(min, max)`), so symmetry holds by construction.
//! Reductions use fixed-size chunks summed in order, which keeps results
//! bit-identical regardless of thread count.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row sorted, deduplicated column lists.
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols }
    }

    pub(crate) fn from_parts(dim: usize, row_ptr: Vec<usize>, cols: Vec<u32>) -> Self {
        debug_assert_eq!(row_ptr.len(), dim + 1);
        Self { dim, row_ptr, cols }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.row_ptr[row]..self.row_ptr[row + 1]
    }

    pub fn row_cols(&self, row: usize) -> &[u32] {
        &self.cols[self.row_range(row)]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Position of `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        self.row_cols(row).binary_search(&(col as u32)).ok().map(|k| start + k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Wraps values laid out on `pattern`. The caller guarantees symmetry.
    pub(crate) fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Self {
        debug_assert_eq!(pattern.nnz(), values.len());
        Self { pattern, values }
    }

    /// Builds a matrix from `(row, col, value)` contributions. Each pair is
    /// canonicalized to `row <= col` and summed; off-diagonal sums are mirrored.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut upper: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch(format!("entry ({r}, {c}) outside a {dim}x{dim} matrix")));
            }
            *upper.entry((r.min(c), r.max(c))).or_insert(0.0) += v;
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for (&(r, c), &v) in &upper {
            rows[r].push((c as u32, v));
            if r != c {
                rows[c].push((r as u32, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { pattern: Arc::new(SparsityPattern::from_parts(dim, row_ptr, cols)), values })
    }

    /// Off-diagonal entries must be symmetric for the result to be meaningful.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().skip(i) {
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.position(row, col).map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.get(r, r)).collect()
    }

    pub fn same_pattern(&self, other: &SparseSymMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * other`, where `other`'s pattern is a subset of ours.
    pub fn add_scaled(&mut self, alpha: f64, other: &SparseSymMatrix) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch("matrix dimensions differ".into()));
        }
        if Arc::ptr_eq(&self.pattern, &other.pattern) {
            self.values.par_iter_mut().zip(other.values.par_iter()).for_each(|(a, b)| *a += alpha * b);
            return Ok(());
        }
        for row in 0..other.dim() {
            for (k, &c) in other.pattern.row_cols(row).iter().enumerate() {
                let v = other.values[other.pattern.row_ptr[row] + k];
                let pos = self.pattern.position(row, c as usize).ok_or_else(|| {
                    Error::DimensionMismatch(format!("entry ({row}, {c}) not in target pattern"))
                })?;
                self.values[pos] += alpha * v;
            }
        }
        Ok(())
    }

    /// Linear combination `sum_i w_i * A_i` of matrices sharing one pattern.
    pub fn combine(terms: &[(f64, &SparseSymMatrix)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or_else(|| Error::DimensionMismatch("empty combination".into()))?;
        if terms.iter().any(|(_, m)| !m.same_pattern(first)) {
            return Err(Error::DimensionMismatch("matrices do not share a pattern".into()));
        }
        let mut values = vec![0.0; first.values.len()];
        values.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
            let base = ci * CHUNK;
            for (k, o) in out.iter_mut().enumerate() {
                *o = terms.iter().map(|(w, m)| w * m.values[base + k]).sum();
            }
        });
        Ok(Self { pattern: first.pattern.clone(), values })
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let p = &*self.pattern;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
            let base = ci * CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let r = base + k;
                let range = p.row_range(r);
                let mut acc = 0.0;
                for (c, v) in p.cols[range.clone()].iter().zip(&self.values[range]) {
                    acc += v * x[*c as usize];
                }
                *yi = acc;
            }
        });
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A x + B z` in one sweep; `A` and `B` must share a pattern.
    pub fn fused_mul_add(a: &SparseSymMatrix, x: &[f64], b: &SparseSymMatrix, z: &[f64], y: &mut [f64]) {
        assert!(a.same_pattern(b));
        let p = &*a.pattern;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
            let base = ci * CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let r = base + k;
                let range = p.row_range(r);
                let cols = &p.cols[range.clone()];
                let av = &a.values[range.clone()];
                let bv = &b.values[range];
                let mut acc = 0.0;
                for i in 0..cols.len() {
                    let c = cols[i] as usize;
                    acc += av[i] * x[c] + bv[i] * z[c];
                }
                *yi = acc;
            }
        });
    }

    /// Maximum relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for r in 0..self.dim() {
            for (k, &c) in self.pattern.row_cols(r).iter().enumerate() {
                let v = self.values[self.pattern.row_ptr[r] + k];
                worst = worst.max((v - self.get(c as usize, r)).abs());
            }
        }
        worst / scale
    }

    /// Dense copy, for small matrices in tests and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (r, row) in d.iter_mut().enumerate() {
            for (k, &c) in self.pattern.row_cols(r).iter().enumerate() {
                row[c as usize] = self.values[self.pattern.row_ptr[r] + k];
            }
        }
        d
    }
}

/// Deterministic parallel dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += alpha * xi;
        }
    });
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
#[derive(Clone, Debug)]
pub struct PcgSolver {
    matrix: SparseSymMatrix,
    inv_diag: Vec<f64>,
    settings: CgSettings,
}

impl PcgSolver {
    pub fn new(matrix: SparseSymMatrix, settings: CgSettings) -> Result<Self> {
        let diag = matrix.diagonal();
        if diag.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::SingularOperator);
        }
        let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
        Ok(Self { matrix, inv_diag, settings })
    }

    pub fn matrix(&self) -> &SparseSymMatrix {
        &self.matrix
    }

    pub fn settings(&self) -> CgSettings {
        self.settings
    }

    /// Solves `A x = b`, starting from the contents of `x`.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) -> Result<CgOutcome> {
        let n = self.matrix.dim();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgOutcome { iterations: 0, rel_residual: 0.0 });
        }
        let target = self.settings.rel_tol * b_norm;

        let mut r = self.matrix.mul_vec(x);
        r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
        let mut res = norm(&r);
        if res <= target {
            return Ok(CgOutcome { iterations: 0, rel_residual: res / b_norm });
        }
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];

        for it in 1..=self.settings.max_iter {
            self.matrix.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !pap.is_finite() || pap <= 0.0 {
                return Err(Error::SingularOperator);
            }
            let alpha = rz / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            res = norm(&r);
            if res <= target {
                return Ok(CgOutcome { iterations: it, rel_residual: res / b_norm });
            }
            z.par_chunks_mut(CHUNK)
                .zip(r.par_chunks(CHUNK))
                .zip(self.inv_diag.par_chunks(CHUNK))
                .for_each(|((zc, rc), dc)| {
                    for ((zi, ri), di) in zc.iter_mut().zip(rc).zip(dc) {
                        *zi = ri * di;
                    }
                });
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_chunks_mut(CHUNK).zip(z.par_chunks(CHUNK)).for_each(|(pc, zc)| {
                for (pi, zi) in pc.iter_mut().zip(zc) {
                    *pi = zi + beta * *pi;
                }
            });
        }
        Err(Error::SolverNotConverged { iterations: self.settings.max_iter, residual: res / b_norm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, CgOutcome)> {
        let mut x = vec![0.0; b.len()];
        let out = self.solve_into(b, &mut x)?;
        Ok((x, out))
    }
}
