//! Dense kernels shared by every pursuit: the sensing-matrix container,
//! column normalization, Householder least squares on a column subset and
//! the closed-form two-column projection.
//!
//! All inner products go through [`dot`], which sums in fixed blocks of
//! [`DOT_BLOCK`] entries. The result for a given pair of slices therefore
//! never depends on who calls it or from which thread.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Block length of the fixed-order summation used by [`dot`].
pub const DOT_BLOCK: usize = 64;

/// Columns whose norm is at or below this value are treated as zero.
pub const ZERO_COLUMN_NORM: f64 = 1e-300;

/// Relative rank tolerance applied to factor diagonals.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Pairs with `1 - g^2` below this are considered collinear.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-10;

/// A two-column residual at or below this fraction of `||r||^2` is reported
/// as an exact fit. It sits a few hundred ulps above the cancellation error
/// of the closed-form expression.
pub const EXACT_FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix shape {rows}x{cols} does not match {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("support {support:?} has effective rank {rank}; column {column} is dependent")]
    RankDeficient {
        support: Vec<usize>,
        rank: usize,
        /// First column (in support order) found to be dependent on its predecessors.
        column: usize,
    },
    #[error("column pair is numerically collinear (1 - g^2 = {gap:e})")]
    NearCollinearPair { gap: f64 },
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of bounds for dimension {dimension}")]
    IndexOutOfBounds { index: usize, dimension: usize },
    #[error("support indices must be strictly increasing")]
    UnsortedSupport,
    #[error("support and values differ in length ({support} vs {values})")]
    LengthMismatch { support: usize, values: usize },
    #[error("value at support index {0} is zero or non-finite")]
    InvalidValue(usize),
    #[error("support must not be empty")]
    EmptySupport,
}

/// Inner product with fixed blocked summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = 0.0;
    for (ca, cb) in a.chunks(DOT_BLOCK).zip(b.chunks(DOT_BLOCK)) {
        total += block_dot(ca, cb);
    }
    total
}

#[inline]
fn block_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xa = a.chunks_exact(8);
    let xb = b.chunks_exact(8);
    let (ra, rb) = (xa.remainder(), xb.remainder());
    for (x, y) in xa.zip(xb) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense real `rows x cols` matrix stored column-major, with the column
/// norms of the matrix it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    column_norms: Vec<f64>,
    normalized: bool,
}

impl SensingMatrix {
    /// Builds a matrix from column-major storage.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(LinalgError::Shape { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos % rows, col: pos / rows });
        }
        let column_norms = data.chunks_exact(rows).map(norm).collect();
        Ok(Self { rows, cols, data, column_norms, normalized: false })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(LinalgError::Shape { rows, cols, len: data.len() });
        }
        let mut col_major = vec![0.0; data.len()];
        for r in 0..rows {
            for c in 0..cols {
                col_major[c * rows + r] = data[r * cols + c];
            }
        }
        Self::from_column_major(rows, cols, col_major)
    }

    /// Builds a matrix from a list of equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(LinalgError::Shape { rows, cols: c + 1, len: data.len() + col.len() });
            }
            data.extend_from_slice(col);
        }
        Self::from_column_major(rows, columns.len(), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_column_major(n, n, data).expect("identity of positive size")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.data[index * self.rows..(index + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    /// Euclidean norms of the columns; for a normalized matrix these are the
    /// norms before normalization.
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.cols {
            for r in 0..self.rows {
                out[r * self.cols + c] = self.data[c * self.rows + r];
            }
        }
        out
    }

    /// `Phi x` for a dense coefficient vector.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        let mut out = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                axpy(&mut out, xc, self.column(c));
            }
        }
        out
    }

    /// `Phi x` for a sparse signal.
    pub fn apply_sparse(&self, x: &SparseSignal) -> Vec<f64> {
        assert_eq!(x.dimension(), self.cols, "signal dimension");
        let mut out = vec![0.0; self.rows];
        for (&i, &v) in x.support().iter().zip(x.values()) {
            axpy(&mut out, v, self.column(i));
        }
        out
    }

    /// All column correlations `phi_i^T r`.
    pub fn correlations(&self, r: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.rows).map(|col| dot(col, r)).collect()
    }

    /// Upper triangle of `Phi^T Phi`.
    pub fn gram(&self, parallel: bool) -> PackedGram {
        PackedGram::compute(self, parallel)
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Strict upper triangle of a Gram matrix, row-packed so that row `i`
/// (entries `j > i`) is contiguous. The diagonal is kept separately.
#[derive(Debug, Clone)]
pub struct PackedGram {
    n: usize,
    diagonal: Vec<f64>,
    upper: Vec<f64>,
}

const GRAM_TILE: usize = 32;

impl PackedGram {
    fn row_offset(n: usize, i: usize) -> usize {
        i * n - i * (i + 1) / 2
    }

    pub fn compute(matrix: &SensingMatrix, parallel: bool) -> Self {
        let n = matrix.cols();
        let diagonal: Vec<f64> = (0..n).map(|i| dot(matrix.column(i), matrix.column(i))).collect();
        let mut upper = vec![0.0; n * n.saturating_sub(1) / 2];

        // Carve the packed storage into one mutable segment per row tile.
        let mut segments = Vec::new();
        let mut rest = upper.as_mut_slice();
        let mut start = 0;
        while start < n {
            let end = (start + GRAM_TILE).min(n);
            let len = Self::row_offset(n, end) - Self::row_offset(n, start);
            let (head, tail) = rest.split_at_mut(len);
            segments.push((start, end, head));
            rest = tail;
            start = end;
        }

        let fill = |(i0, i1, seg): (usize, usize, &mut [f64])| {
            let base = Self::row_offset(n, i0);
            let mut j0 = i0;
            while j0 < n {
                let j1 = (j0 + GRAM_TILE).min(n);
                for i in i0..i1 {
                    let col_i = matrix.column(i);
                    let row = Self::row_offset(n, i) - base;
                    for j in j0.max(i + 1)..j1 {
                        seg[row + (j - i - 1)] = dot(col_i, matrix.column(j));
                    }
                }
                j0 = j1;
            }
        };
        if parallel {
            segments.into_par_iter().for_each(fill);
        } else {
            segments.into_iter().for_each(fill);
        }
        Self { n, diagonal, upper }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    /// Off-diagonal entry; `i != j`, order irrelevant.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.upper[Self::row_offset(self.n, a) + (b - a - 1)]
    }

    /// Entries `(i, j)` for `j > i`, in increasing `j`.
    pub fn row(&self, i: usize) -> &[f64] {
        let start = Self::row_offset(self.n, i);
        &self.upper[start..start + (self.n - i - 1)]
    }
}

/// Signal with explicit support and nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseSignalRepr")]
pub struct SparseSignal {
    dimension: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct SparseSignalRepr {
    dimension: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<SparseSignalRepr> for SparseSignal {
    type Error = LinalgError;

    fn try_from(r: SparseSignalRepr) -> Result<Self, LinalgError> {
        Self::new(r.dimension, r.support, r.values)
    }
}

impl SparseSignal {
    /// Support must be strictly increasing and every value finite and nonzero.
    /// An empty support is allowed: it is how an all-zero estimate is represented.
    pub fn new(dimension: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if support.len() != values.len() {
            return Err(LinalgError::LengthMismatch { support: support.len(), values: values.len() });
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LinalgError::UnsortedSupport);
        }
        if let Some(&index) = support.iter().find(|&&i| i >= dimension) {
            return Err(LinalgError::IndexOutOfBounds { index, dimension });
        }
        if let Some(k) = values.iter().position(|v| *v == 0.0 || !v.is_finite()) {
            return Err(LinalgError::InvalidValue(support[k]));
        }
        Ok(Self { dimension, support, values })
    }

    pub fn zeros(dimension: usize) -> Self {
        Self { dimension, support: Vec::new(), values: Vec::new() }
    }

    /// Keeps every nonzero entry of a dense vector.
    pub fn from_dense(x: &[f64]) -> Self {
        let (support, values) = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).unzip();
        Self { dimension: x.len(), support, values }
    }

    /// Builds from unsorted `(index, value)` pairs, dropping exact zeros.
    pub(crate) fn from_pairs(dimension: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.retain(|(_, v)| *v != 0.0);
        pairs.sort_by_key(|(i, _)| *i);
        let (support, values) = pairs.into_iter().unzip();
        Self { dimension, support, values }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.support.binary_search(&index).map_or(0.0, |k| self.values[k])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }

    pub fn min_abs_value(&self) -> Option<f64> {
        self.values.iter().map(|v| v.abs()).min_by(f64::total_cmp)
    }
}

/// A residual vector together with its cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    vector: Vec<f64>,
    norm_sq: f64,
}

impl Residual {
    pub fn new(vector: Vec<f64>) -> Self {
        let norm_sq = dot(&vector, &vector);
        Self { vector, norm_sq }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.vector
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

/// Returns a copy of `matrix` with unit columns. The copy remembers the
/// norms of the columns before any normalization, so normalizing twice
/// still records the original norms.
pub fn normalize_columns(matrix: &SensingMatrix) -> Result<SensingMatrix, LinalgError> {
    let rows = matrix.rows;
    let mut data = matrix.data.clone();
    let mut original = Vec::with_capacity(matrix.cols);
    for (c, col) in data.chunks_exact_mut(rows).enumerate() {
        let current = norm(col);
        if current <= ZERO_COLUMN_NORM {
            return Err(LinalgError::ZeroColumn(c));
        }
        for v in col.iter_mut() {
            *v /= current;
        }
        original.push(if matrix.normalized { matrix.column_norms[c] * current } else { current });
    }
    Ok(SensingMatrix { rows, cols: matrix.cols, data, column_norms: original, normalized: true })
}

/// Thin Householder factorization of a column subset, kept only as long as
/// needed for one least-squares solve.
struct HouseholderQr {
    rows: usize,
    cols: usize,
    /// Column-major; strictly upper part holds `R`, below-diagonal part the reflectors.
    packed: Vec<f64>,
    diag: Vec<f64>,
}

impl HouseholderQr {
    fn factor(rows: usize, cols: usize, mut packed: Vec<f64>, rhs: &mut [f64]) -> Self {
        let mut diag = vec![0.0; cols];
        let mut reflector = vec![0.0; rows];
        for p in 0..cols.min(rows) {
            let (head, tail) = packed.split_at_mut((p + 1) * rows);
            let col = &mut head[p * rows..];
            let alpha_norm = norm(&col[p..]);
            if alpha_norm == 0.0 {
                continue;
            }
            let alpha = if col[p] > 0.0 { -alpha_norm } else { alpha_norm };
            col[p] -= alpha;
            let v = &mut reflector[..rows - p];
            v.copy_from_slice(&col[p..]);
            let v_sq = dot(v, v);
            diag[p] = alpha;
            if v_sq == 0.0 {
                continue;
            }
            for other in tail.chunks_exact_mut(rows) {
                let seg = &mut other[p..];
                let scale = 2.0 * dot(v, seg) / v_sq;
                axpy(seg, -scale, v);
            }
            let seg = &mut rhs[p..];
            let scale = 2.0 * dot(v, seg) / v_sq;
            axpy(seg, -scale, v);
        }
        Self { rows, cols, packed, diag }
    }

    fn r(&self, row: usize, col: usize) -> f64 {
        self.packed[col * self.rows + row]
    }

    /// First position whose diagonal falls below the relative rank tolerance,
    /// plus the numerical rank.
    fn rank_check(&self) -> (Option<usize>, usize) {
        let largest = self.diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        let tol = RANK_TOLERANCE * largest;
        let mut first = None;
        let mut rank = 0;
        for (p, d) in self.diag.iter().enumerate() {
            if d.abs() > tol && d.abs() > ZERO_COLUMN_NORM {
                rank += 1;
            } else if first.is_none() {
                first = Some(p);
            }
        }
        (first, rank)
    }

    fn solve(&self, qtb: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.cols];
        for p in (0..self.cols).rev() {
            let mut acc = qtb[p];
            for q in p + 1..self.cols {
                acc -= self.r(p, q) * c[q];
            }
            c[p] = acc / self.diag[p];
        }
        c
    }
}

/// Least-squares coefficients of `b` on the columns listed in `support`
/// (in that order), via Householder QR. The residual is `b - Phi_S c`.
pub fn least_squares_on_support(
    matrix: &SensingMatrix,
    support: &[usize],
    b: &[f64],
) -> Result<(Vec<f64>, Residual), LinalgError> {
    let m = matrix.rows();
    if b.len() != m {
        return Err(LinalgError::DimensionMismatch { expected: m, found: b.len() });
    }
    if support.is_empty() {
        return Err(LinalgError::EmptySupport);
    }
    if let Some(&index) = support.iter().find(|&&i| i >= matrix.cols()) {
        return Err(LinalgError::IndexOutOfBounds { index, dimension: matrix.cols() });
    }
    let k = support.len();
    let mut packed = Vec::with_capacity(m * k);
    for &i in support {
        packed.extend_from_slice(matrix.column(i));
    }
    let mut qtb = b.to_vec();
    let qr = HouseholderQr::factor(m, k, packed, &mut qtb);
    let (first_dependent, rank) = qr.rank_check();
    if let Some(p) = first_dependent {
        return Err(LinalgError::RankDeficient { support: support.to_vec(), rank, column: support[p] });
    }
    let coefficients = qr.solve(&qtb);
    let mut r = b.to_vec();
    for (&i, &c) in support.iter().zip(&coefficients) {
        axpy(&mut r, -c, matrix.column(i));
    }
    Ok((coefficients, Residual::new(r)))
}

/// Gram entry and correlations for a column pair, with the collinearity guard.
fn pair_products(col_i: &[f64], col_j: &[f64], r: &Residual) -> Result<(f64, f64, f64), LinalgError> {
    if col_i.len() != r.len() || col_j.len() != r.len() {
        return Err(LinalgError::DimensionMismatch { expected: r.len(), found: col_i.len().min(col_j.len()) });
    }
    let g = dot(col_i, col_j);
    let gap = 1.0 - g * g;
    if !(gap >= COLLINEARITY_TOLERANCE) {
        return Err(LinalgError::NearCollinearPair { gap });
    }
    Ok((g, dot(col_i, r.as_slice()), dot(col_j, r.as_slice())))
}

/// Coefficients `(u, v)` of the best approximation of `r` by `u col_i + v col_j`
/// for unit columns.
pub fn pair_projection_coefficients(col_i: &[f64], col_j: &[f64], r: &Residual) -> Result<(f64, f64), LinalgError> {
    let (g, ci, cj) = pair_products(col_i, col_j, r)?;
    let gap = 1.0 - g * g;
    Ok(((ci - g * cj) / gap, (cj - g * ci) / gap))
}

/// `min_{u,v} ||u col_i + v col_j - r||^2` for unit columns.
pub fn pair_residual_sq(col_i: &[f64], col_j: &[f64], r: &Residual) -> Result<f64, LinalgError> {
    let (g, ci, cj) = pair_products(col_i, col_j, r)?;
    Ok(pair_residual_from_products(r.norm_sq(), g, ci, cj).expect("gap checked"))
}

/// Closed-form pair residual from precomputed products; `None` for collinear pairs.
/// Symmetric in `(ci, cj)` bit for bit.
#[inline]
pub(crate) fn pair_residual_from_products(norm_sq: f64, g: f64, ci: f64, cj: f64) -> Option<f64> {
    let gap = 1.0 - g * g;
    if !(gap >= COLLINEARITY_TOLERANCE) {
        return None;
    }
    let captured = (ci * ci + cj * cj - 2.0 * g * (ci * cj)) / gap;
    let res = norm_sq - captured;
    Some(if res <= EXACT_FIT_FLOOR * norm_sq { 0.0 } else { res })
}
