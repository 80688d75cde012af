//! Compressed sparse row matrices and a sparse LU backend.
//!
//! Assembly and matrix-vector products use the small [`CsrMatrix`] type
//! defined here; factorizations are delegated to `faer`'s sparse LU with
//! partial pivoting, followed by a few sweeps of iterative refinement.
//! Every factorization runs single-threaded so results do not depend on the
//! machine's core count.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Par};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve broke down (relative residual {relative_residual:e})")]
    Breakdown { relative_residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in the order they appear, and every listed position stays a stored
    /// entry even when its value sums to zero.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CsrMatrix { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: diag.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        let ay = self.mul_vec(y);
        dot(x, &ay)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    /// Largest `|a_ij − a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.iter().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            dense[r][c] += v;
        }
        dense
    }

    fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows && self.ncols == other.ncols && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinearSolveError> {
        // CSR of Aᵀ is CSC of A.
        let t = self.transpose();
        let symbolic = SymbolicSparseColMat::new_checked(self.nrows, self.ncols, t.row_ptr, None, t.col_idx);
        Ok(SparseColMat::new(symbolic, t.values))
    }
}

/// Accumulates triplets for block-structured systems.
#[derive(Debug, Default, Clone)]
pub struct TripletBuilder {
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    /// Adds `scale * block` with its top-left corner at `(row, col)`.
    pub fn add_block(&mut self, block: &CsrMatrix, row: usize, col: usize, scale: f64) {
        for (r, c, v) in block.iter() {
            self.entries.push((row + r, col + c, scale * v));
        }
    }

    /// Adds `scale * block` with rows and columns relabelled through maps.
    pub fn add_mapped(&mut self, block: &CsrMatrix, rows: impl Fn(usize) -> usize, cols: impl Fn(usize) -> usize, scale: f64) {
        for (r, c, v) in block.iter() {
            self.entries.push((rows(r), cols(c), scale * v));
        }
    }

    pub fn build(&self, n: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n, n, &self.entries)
    }
}

/// Sparse LU of a square matrix with iterative refinement on solve.
pub struct SparseLu {
    matrix: CsrMatrix,
    /// `‖A‖_∞`.
    norm: f64,
    symbolic: Arc<SymbolicLu<usize>>,
    numeric: NumericLu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.matrix.nrows).field("nnz", &self.matrix.nnz()).finish()
    }
}

impl SparseLu {
    pub fn factor(matrix: CsrMatrix) -> Result<Self, LinearSolveError> {
        let mut cache = SymbolicCache::default();
        cache.factor(matrix)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `A x = b`, refining until the residual stops improving.
    /// Fails when the normwise backward error `‖b − Ax‖ / (‖A‖‖x‖ + ‖b‖)`
    /// stays above `1e-8`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        let n = self.matrix.nrows;
        assert_eq!(rhs.len(), n);
        if norm_inf(rhs) == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = self.raw_solve(rhs);
        let scale = |x: &[f64]| (self.norm * norm_inf(x) + norm_inf(rhs)).max(f64::MIN_POSITIVE);
        let mut residual = self.residual(&x, rhs);
        let mut res_norm = norm_inf(&residual);
        for _ in 0..4 {
            if res_norm <= 1e-16 * scale(&x) {
                break;
            }
            let correction = self.raw_solve(&residual);
            let trial: Vec<f64> = x.iter().zip(&correction).map(|(a, b)| a + b).collect();
            let trial_res = self.residual(&trial, rhs);
            let trial_norm = norm_inf(&trial_res);
            if !(trial_norm < res_norm) {
                break;
            }
            x = trial;
            residual = trial_res;
            res_norm = trial_norm;
        }
        let relative_residual = res_norm / scale(&x);
        if !x.iter().all(|v| v.is_finite()) || !(relative_residual <= 1e-8) {
            return Err(LinearSolveError::Breakdown { relative_residual });
        }
        Ok(x)
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        let ax = self.matrix.mul_vec(x);
        rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        // Safety: `numeric` was produced from `symbolic` in `SymbolicCache::factor`.
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        lu.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut buf));
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Reuses the symbolic analysis across matrices sharing a sparsity pattern,
/// as Newton iterations do.
#[derive(Default)]
pub struct SymbolicCache {
    entry: Option<(CsrMatrix, Arc<SymbolicLu<usize>>)>,
}

impl SymbolicCache {
    pub fn factor(&mut self, matrix: CsrMatrix) -> Result<SparseLu, LinearSolveError> {
        let faer_mat = matrix.to_faer()?;
        let reuse = matches!(&self.entry, Some((pattern, _)) if pattern.same_pattern(&matrix));
        if !reuse {
            let params = LuSymbolicParams { supernodal_flop_ratio_threshold: LU_MODE, ..Default::default() };
            let symbolic = factorize_symbolic_lu(faer_mat.symbolic(), params)
                .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
            let mut pattern = matrix.clone();
            pattern.values.clear();
            self.entry = Some((pattern, Arc::new(symbolic)));
        }
        let symbolic = Arc::clone(&self.entry.as_ref().unwrap().1);
        let mut numeric = NumericLu::new();
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_lu(&mut numeric, faer_mat.as_ref(), Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
        let norm = (0..matrix.nrows)
            .map(|r| matrix.values[matrix.row_ptr[r]..matrix.row_ptr[r + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(SparseLu { matrix, norm, symbolic, numeric })
    }
}

const LU_MODE: SupernodalThreshold = SupernodalThreshold::FORCE_SUPERNODAL;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
