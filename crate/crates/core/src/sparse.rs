//! Compressed sparse row matrices, block composition and a residual-checked
//! direct solver.
//!
//! Factorization is delegated to faer's sparse LU with partial pivoting. Every
//! solve measures `||Ax - b|| / ||b||` against the stored matrix and fails with
//! [`Error::SolverFailure`] unless it is within the tolerance.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::{Error, Result};

pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;

/// Accumulator for `(row, col, value)` contributions; duplicates are summed on
/// compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { entries: Vec::with_capacity(n) }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn append(&mut self, other: &mut TripletBuffer) {
        self.entries.append(&mut other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Sorts and sums a triplet buffer into CSR form.
pub fn compress(buffer: &TripletBuffer, nrows: usize, ncols: usize) -> Result<SparseMatrix> {
    for &(row, col, _) in &buffer.entries {
        if row >= nrows || col >= ncols {
            return Err(Error::IndexOutOfRange { row, col, nrows, ncols });
        }
    }
    let mut counts = vec![0usize; nrows + 1];
    for &(row, _, _) in &buffer.entries {
        counts[row + 1] += 1;
    }
    for i in 0..nrows {
        counts[i + 1] += counts[i];
    }
    // bucket by row, keeping insertion order within a row
    let mut next = counts.clone();
    let mut cols = vec![0usize; buffer.len()];
    let mut vals = vec![0.0; buffer.len()];
    for &(row, col, value) in &buffer.entries {
        let slot = next[row];
        cols[slot] = col;
        vals[slot] = value;
        next[row] += 1;
    }

    let mut row_offsets = Vec::with_capacity(nrows + 1);
    let mut col_indices = Vec::with_capacity(buffer.len());
    let mut values = Vec::with_capacity(buffer.len());
    row_offsets.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for i in 0..nrows {
        scratch.clear();
        scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
        // stable sort keeps summation order deterministic
        scratch.sort_by_key(|&(c, _)| c);
        let mut k = 0;
        while k < scratch.len() {
            let c = scratch[k].0;
            let mut sum = 0.0;
            while k < scratch.len() && scratch[k].0 == c {
                sum += scratch[k].1;
                k += 1;
            }
            col_indices.push(c);
            values.push(sum);
        }
        row_offsets.push(col_indices.len());
    }
    Ok(SparseMatrix { nrows, ncols, row_offsets, col_indices, values })
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
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

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns and values stored in row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut buf = TripletBuffer::with_capacity(self.nnz());
        for (i, j, v) in self.triplets() {
            buf.push(j, i, v);
        }
        compress(&buf, self.ncols, self.nrows).expect("transpose indices in range")
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a * self + b * other` for equally shaped matrices.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut buf = TripletBuffer::with_capacity(self.nnz() + other.nnz());
        buf.entries.extend(self.triplets().map(|(i, j, v)| (i, j, a * v)));
        buf.entries.extend(other.triplets().map(|(i, j, v)| (i, j, b * v)));
        compress(&buf, self.nrows, self.ncols)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }

    /// Largest absolute entry of `self - self^T`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip).map_err(|e| Error::SolverFailure {
            reason: format!("matrix conversion failed: {e:?}"),
            residual: f64::NAN,
        })
    }
}

/// One block of a block matrix: `scaling * matrix`, or an empty block.
pub type Block<'a> = Option<(&'a SparseMatrix, f64)>;

/// Assembles a block matrix. Row heights are taken from the first present
/// block in each block row, column widths from the first present block in each
/// block column; every present block must conform.
pub fn block_compose(blocks: &[Vec<Block<'_>>]) -> Result<SparseMatrix> {
    let nbr = blocks.len();
    let nbc = blocks.first().map_or(0, |r| r.len());
    if blocks.iter().any(|r| r.len() != nbc) {
        return Err(Error::DimensionMismatch("ragged block grid".into()));
    }
    let mut heights = vec![None; nbr];
    let mut widths = vec![None; nbc];
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some((m, _)) = blk {
                for (slot, size, what) in [(&mut heights[bi], m.nrows, "rows"), (&mut widths[bj], m.ncols, "cols")] {
                    match slot {
                        None => *slot = Some(size),
                        Some(s) if *s != size => {
                            return Err(Error::DimensionMismatch(format!(
                                "block ({bi},{bj}) has {size} {what}, expected {s}"
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    let heights: Vec<usize> = heights
        .into_iter()
        .enumerate()
        .map(|(i, h)| h.ok_or_else(|| Error::DimensionMismatch(format!("block row {i} is empty"))))
        .collect::<Result<_>>()?;
    let widths: Vec<usize> = widths
        .into_iter()
        .enumerate()
        .map(|(j, w)| w.ok_or_else(|| Error::DimensionMismatch(format!("block column {j} is empty"))))
        .collect::<Result<_>>()?;
    let row_off: Vec<usize> = std::iter::once(0).chain(heights.iter().scan(0, |s, h| { *s += h; Some(*s) })).collect();
    let col_off: Vec<usize> = std::iter::once(0).chain(widths.iter().scan(0, |s, w| { *s += w; Some(*s) })).collect();

    let mut buf = TripletBuffer::new();
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some((m, s)) = blk {
                if *s == 0.0 {
                    continue;
                }
                buf.entries.extend(m.triplets().map(|(i, j, v)| (row_off[bi] + i, col_off[bj] + j, s * v)));
            }
        }
    }
    compress(&buf, row_off[nbr], col_off[nbc])
}

/// A square system together with the residual bound its solution must meet.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub tolerance: f64,
}

impl SparseSystem {
    pub fn new(matrix: SparseMatrix, rhs: Vec<f64>) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::DimensionMismatch(format!(
                "system matrix is {}x{}",
                matrix.nrows, matrix.ncols
            )));
        }
        if rhs.len() != matrix.nrows {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} vs dimension {}",
                rhs.len(),
                matrix.nrows
            )));
        }
        Ok(Self { matrix, rhs, tolerance: DEFAULT_SOLVE_TOL })
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Factorize and solve once.
pub fn solve(system: &SparseSystem) -> Result<Vec<f64>> {
    let lu = LuSolver::new(&system.matrix, system.tolerance)?;
    lu.solve(&system.rhs).map(|(x, _)| x)
}

/// A cached sparse LU factorization with residual-checked solves.
pub struct LuSolver {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    pub tolerance: f64,
}

const MAX_REFINEMENT_STEPS: usize = 3;

impl LuSolver {
    pub fn new(matrix: &SparseMatrix, tolerance: f64) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::DimensionMismatch(format!(
                "cannot factor a {}x{} matrix",
                matrix.nrows, matrix.ncols
            )));
        }
        let lu = matrix.to_faer()?.sp_lu().map_err(|e| Error::SolverFailure {
            reason: format!("sparse LU failed: {e:?}"),
            residual: f64::NAN,
        })?;
        Ok(Self { matrix: matrix.clone(), lu, tolerance })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        b.col_as_slice(0).to_vec()
    }

    /// Solves `A x = b`, applying a few steps of iterative refinement if the
    /// first residual misses the tolerance. Returns `x` and the achieved
    /// relative residual.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} vs dimension {}",
                rhs.len(),
                self.dim()
            )));
        }
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return Ok((vec![0.0; rhs.len()], 0.0));
        }
        let mut x = self.apply_inverse(rhs);
        let mut rel = f64::INFINITY;
        for step in 0..=MAX_REFINEMENT_STEPS {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = norm2(&r) / bnorm;
            if !rel.is_finite() {
                break;
            }
            if rel <= self.tolerance {
                return Ok((x, rel));
            }
            if step < MAX_REFINEMENT_STEPS {
                let dx = self.apply_inverse(&r);
                x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            }
        }
        Err(Error::SolverFailure {
            reason: "residual bound not met".into(),
            residual: rel,
        })
    }
}
