//! Greedy recovery algorithms: OMP, generalized OMP (`N` indices per step)
//! and quasi-orthogonal matching pursuit (best column pair per step), plus
//! the greedy-QR support refinement applied to QOMP's oversized support.
//!
//! Every algorithm works on unit columns internally and reports
//! coefficients for the matrix as passed in. After each step the estimate is
//! refit by least squares on the whole selected support, so `r_k` is the
//! residual of `b` after projection onto `span(Phi_{S_k})`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    axpy, dot, least_squares_on_support, norm, normalize_columns, LinalgError, Residual, SensingMatrix, SparseSignal,
    RANK_TOLERANCE, ZERO_COLUMN_NORM,
};
use crate::pair_search::{ExclusionSet, PairSearch, PairSearchConfig, PairSearchError};

/// Default stopping tolerance, relative to `||b||`.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PursuitError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    PairSearch(#[from] PairSearchError),
    #[error("measurement has length {found}, matrix has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{algorithm}: {max_iterations} iterations exceed the limit of {limit}")]
    IterationBudget { algorithm: &'static str, max_iterations: usize, limit: usize },
    #[error("indices per iteration must be positive")]
    ZeroGroupSize,
    #[error("qomp needs at least two rows")]
    TooFewRows,
    #[error("support index {index} out of bounds for {columns} columns")]
    IndexOutOfBounds { index: usize, columns: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iterations: usize,
    /// Absolute, in the units of `||b||`.
    pub residual_tolerance: f64,
}

impl StoppingRule {
    pub fn new(max_iterations: usize, residual_tolerance: f64) -> Self {
        Self { max_iterations, residual_tolerance }
    }

    /// `max_iterations` with the default tolerance `1e-9 ||b||`.
    pub fn relative_to(max_iterations: usize, b: &[f64]) -> Self {
        Self::new(max_iterations, DEFAULT_RELATIVE_TOLERANCE * norm(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Selected indices minus rank-deficiency drops, increasing.
    pub support: Vec<usize>,
    /// Least-squares estimate on `support`, zero elsewhere.
    pub estimate: SparseSignal,
    pub iterations_run: usize,
    /// Indices added per iteration, each entry increasing.
    pub selection_history: Vec<Vec<usize>>,
    /// `||r_0|| = ||b||`, then `||r_k||` after every iteration.
    pub residual_history: Vec<f64>,
    /// Columns removed from the refit because they were numerically dependent.
    pub dropped: Vec<usize>,
}

impl RecoveryResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history starts with ||b||")
    }

    /// Largest increase between consecutive residual norms (0 when monotone).
    pub fn max_residual_increase(&self) -> f64 {
        self.residual_history.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Unit-column working copy plus the factors that map its coefficients back.
struct Prepared<'a> {
    matrix: std::borrow::Cow<'a, SensingMatrix>,
    scale: Vec<f64>,
}

fn prepare(matrix: &SensingMatrix) -> Result<Prepared<'_>, LinalgError> {
    if matrix.is_normalized() {
        Ok(Prepared { matrix: std::borrow::Cow::Borrowed(matrix), scale: vec![1.0; matrix.cols()] })
    } else {
        let unit = normalize_columns(matrix)?;
        let scale = unit.column_norms().to_vec();
        Ok(Prepared { matrix: std::borrow::Cow::Owned(unit), scale })
    }
}

/// Support in selection order, refit after every step.
struct Refit {
    active: Vec<usize>,
    dropped: Vec<usize>,
    coefficients: Vec<f64>,
    residual: Residual,
}

impl Refit {
    fn new(b: &[f64]) -> Self {
        Self { active: Vec::new(), dropped: Vec::new(), coefficients: Vec::new(), residual: Residual::new(b.to_vec()) }
    }

    /// Adds `indices` and refits. A column that makes the system rank
    /// deficient is removed (the first dependent one in selection order,
    /// hence never older than the columns it depends on) and the fit retried.
    fn extend(&mut self, matrix: &SensingMatrix, indices: &[usize], b: &[f64]) -> Result<(), LinalgError> {
        self.active.extend_from_slice(indices);
        loop {
            if self.active.is_empty() {
                self.coefficients.clear();
                self.residual = Residual::new(b.to_vec());
                return Ok(());
            }
            match least_squares_on_support(matrix, &self.active, b) {
                Ok((c, r)) => {
                    self.coefficients = c;
                    self.residual = r;
                    return Ok(());
                }
                Err(LinalgError::RankDeficient { column, .. }) => {
                    self.active.retain(|&i| i != column);
                    self.dropped.push(column);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn finish(self, n: usize, scale: &[f64], iterations_run: usize, selection_history: Vec<Vec<usize>>, residual_history: Vec<f64>) -> RecoveryResult {
        let pairs = self.active.iter().zip(&self.coefficients).map(|(&i, &c)| (i, c / scale[i])).collect();
        let estimate = SparseSignal::from_pairs(n, pairs);
        let mut support = self.active;
        support.sort_unstable();
        RecoveryResult { support, estimate, iterations_run, selection_history, residual_history, dropped: self.dropped }
    }
}

fn check_measurement(matrix: &SensingMatrix, b: &[f64]) -> Result<(), PursuitError> {
    if b.len() != matrix.rows() {
        return Err(PursuitError::DimensionMismatch { expected: matrix.rows(), found: b.len() });
    }
    Ok(())
}

/// Shared OMP/GOMP loop: per step add the `group` fresh indices with the
/// largest `|phi_i^T r|`, ties to the lower index.
fn greedy_pursuit(matrix: &SensingMatrix, b: &[f64], group: usize, stop: &StoppingRule) -> Result<RecoveryResult, PursuitError> {
    let prep = prepare(matrix)?;
    let unit = prep.matrix.as_ref();
    let n = unit.cols();
    let mut used = vec![false; n];
    let mut fresh_left = n;
    let mut refit = Refit::new(b);
    let mut selection_history = Vec::new();
    let mut residual_history = vec![refit.residual.norm()];
    let mut k = 0;

    while k < stop.max_iterations && refit.residual.norm() > stop.residual_tolerance && fresh_left > 0 {
        k += 1;
        let r = refit.residual.as_slice();
        let mut candidates: Vec<(f64, usize)> =
            (0..n).filter(|&i| !used[i]).map(|i| (dot(unit.column(i), r).abs(), i)).collect();
        let take = group.min(candidates.len());
        // Descending |correlation|, ascending index on ties.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = candidates[..take].iter().map(|&(_, i)| i).collect();
        for &i in &chosen {
            used[i] = true;
        }
        fresh_left -= take;
        refit.extend(unit, &chosen, b)?;
        chosen.sort_unstable();
        selection_history.push(chosen);
        residual_history.push(refit.residual.norm());
    }
    Ok(refit.finish(n, &prep.scale, k, selection_history, residual_history))
}

/// Orthogonal matching pursuit. Requires `max_iterations < m`.
pub fn omp(matrix: &SensingMatrix, b: &[f64], stop: &StoppingRule) -> Result<RecoveryResult, PursuitError> {
    check_measurement(matrix, b)?;
    if stop.max_iterations >= matrix.rows() && stop.max_iterations > 0 {
        return Err(PursuitError::IterationBudget {
            algorithm: "omp",
            max_iterations: stop.max_iterations,
            limit: matrix.rows().saturating_sub(1),
        });
    }
    greedy_pursuit(matrix, b, 1, stop)
}

/// Generalized OMP adding `group` indices per iteration. Requires
/// `group * max_iterations <= m`. When fewer than `group` unused columns
/// remain, the rest are added and the run ends after that refit.
pub fn gomp(matrix: &SensingMatrix, b: &[f64], group: usize, stop: &StoppingRule) -> Result<RecoveryResult, PursuitError> {
    check_measurement(matrix, b)?;
    if group == 0 {
        return Err(PursuitError::ZeroGroupSize);
    }
    if group.saturating_mul(stop.max_iterations) > matrix.rows() {
        return Err(PursuitError::IterationBudget {
            algorithm: "gomp",
            max_iterations: stop.max_iterations,
            limit: matrix.rows() / group,
        });
    }
    greedy_pursuit(matrix, b, group, stop)
}

/// Quasi-orthogonal matching pursuit with a serial pair search.
pub fn qomp(matrix: &SensingMatrix, b: &[f64], stop: &StoppingRule) -> Result<RecoveryResult, PursuitError> {
    qomp_with(matrix, b, stop, &PairSearchConfig::default())
}

/// Quasi-orthogonal matching pursuit: each iteration adds the column pair
/// with the smallest two-column residual against `r_{k-1}`, excludes both
/// from later searches and refits on the full support. For an `s`-sparse
/// target the customary budget is `s` iterations (`2s` columns).
///
/// Requires `m >= 2` and `2 * max_iterations <= m`. Stops early, returning
/// what it has, once no admissible pair is left.
pub fn qomp_with(
    matrix: &SensingMatrix,
    b: &[f64],
    stop: &StoppingRule,
    config: &PairSearchConfig,
) -> Result<RecoveryResult, PursuitError> {
    check_measurement(matrix, b)?;
    if matrix.rows() < 2 {
        return Err(PursuitError::TooFewRows);
    }
    if stop.max_iterations.saturating_mul(2) > matrix.rows() {
        return Err(PursuitError::IterationBudget {
            algorithm: "qomp",
            max_iterations: stop.max_iterations,
            limit: matrix.rows() / 2,
        });
    }
    let prep = prepare(matrix)?;
    let unit = prep.matrix.as_ref();
    let n = unit.cols();
    let search = PairSearch::new(unit, config.clone())?;
    let mut excluded = ExclusionSet::new(n);
    let mut refit = Refit::new(b);
    let mut selection_history = Vec::new();
    let mut residual_history = vec![refit.residual.norm()];
    let mut k = 0;

    while k < stop.max_iterations && refit.residual.norm() > stop.residual_tolerance {
        let pair = match search.select_best_pair(&refit.residual, &excluded) {
            Ok(p) => p,
            Err(PairSearchError::NoAdmissiblePair { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        k += 1;
        excluded.insert(pair.i);
        excluded.insert(pair.j);
        refit.extend(unit, &[pair.i, pair.j], b)?;
        selection_history.push(vec![pair.i, pair.j]);
        residual_history.push(refit.residual.norm());
    }
    Ok(refit.finish(n, &prep.scale, k, selection_history, residual_history))
}

/// Sparse least squares on a candidate support by greedy QR.
///
/// Columns of `Phi_S` are orthogonalized one at a time, always taking the
/// column whose orthogonal component removes the most of the remaining
/// residual. Columns whose remaining component falls below the rank
/// tolerance are discarded, so the result has exactly `rank(Phi_S)` nonzeros
/// (barring coefficients that come out exactly zero).
pub fn refine_support(matrix: &SensingMatrix, support: &[usize], b: &[f64]) -> Result<SparseSignal, PursuitError> {
    check_measurement(matrix, b)?;
    let n = matrix.cols();
    if let Some(&index) = support.iter().find(|&&i| i >= n) {
        return Err(PursuitError::IndexOutOfBounds { index, columns: n });
    }
    let mut candidates: Vec<usize> = support.to_vec();
    candidates.sort_unstable();
    candidates.dedup();

    let m = matrix.rows();
    // Working copies: unit-normalized columns, progressively orthogonalized.
    let mut scale = Vec::with_capacity(candidates.len());
    let mut work: Vec<Vec<f64>> = Vec::with_capacity(candidates.len());
    let mut keep = Vec::with_capacity(candidates.len());
    for &i in &candidates {
        let col = matrix.column(i);
        let nrm = norm(col);
        if nrm <= ZERO_COLUMN_NORM {
            continue;
        }
        scale.push(nrm);
        work.push(col.iter().map(|v| v / nrm).collect());
        keep.push(i);
    }
    let candidates = keep;
    // proj[c][t]: coefficient of basis vector t in candidate c.
    let mut proj: Vec<Vec<f64>> = vec![Vec::new(); candidates.len()];
    let mut alive: Vec<bool> = vec![true; candidates.len()];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut picked: Vec<usize> = Vec::new();
    let mut r_diag: Vec<f64> = Vec::new();
    let mut qtb: Vec<f64> = Vec::new();
    let mut r = b.to_vec();
    let tol = RANK_TOLERANCE; // leading diagonal is 1 for unit columns

    loop {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..candidates.len() {
            if !alive[c] {
                continue;
            }
            let wn = norm(&work[c]);
            if wn <= tol {
                alive[c] = false;
                continue;
            }
            let gain = dot(&work[c], &r).powi(2) / (wn * wn);
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, c));
            }
        }
        let Some((_, c)) = best else { break };
        alive[c] = false;

        // Second orthogonalization pass against the current basis.
        let mut w = std::mem::take(&mut work[c]);
        for (t, q) in basis.iter().enumerate() {
            let s = dot(q, &w);
            axpy(&mut w, -s, q);
            proj[c][t] += s;
        }
        let wn = norm(&w);
        if wn <= tol {
            continue;
        }
        for v in w.iter_mut() {
            *v /= wn;
        }
        let q = w;
        let z = dot(&q, &r);
        axpy(&mut r, -z, &q);
        qtb.push(z);
        r_diag.push(wn);
        picked.push(c);
        for d in 0..candidates.len() {
            if alive[d] {
                let s = dot(&q, &work[d]);
                axpy(&mut work[d], -s, &q);
                proj[d].push(s);
            }
        }
        basis.push(q);
        if basis.len() == m {
            break;
        }
    }

    // Back substitution on the triangular factor in pick order.
    let rank = picked.len();
    let mut coef = vec![0.0; rank];
    for t in (0..rank).rev() {
        let mut acc = qtb[t];
        for u in t + 1..rank {
            acc -= proj[picked[u]][t] * coef[u];
        }
        coef[t] = acc / r_diag[t];
    }
    let pairs = picked.iter().zip(&coef).map(|(&c, &v)| (candidates[c], v / scale[c])).collect();
    Ok(SparseSignal::from_pairs(n, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(rows: usize, cols: usize, seed: u64) -> SensingMatrix {
        let mut state = seed.wrapping_add(12345);
        let data = (0..rows * cols)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        SensingMatrix::from_column_major(rows, cols, data).unwrap()
    }

    #[test]
    fn omp_on_identity() {
        let m = SensingMatrix::identity(4);
        let b = [0.0, 7.0, 0.0, -1.0];
        let res = omp(&m, &b, &StoppingRule::relative_to(2, &b)).unwrap();
        assert_eq!(res.support, vec![1, 3]);
        assert_eq!(res.iterations_run, 2);
        assert_eq!(res.final_residual(), 0.0);
        assert_eq!(res.estimate.to_dense(), b.to_vec());
        assert_eq!(res.selection_history, vec![vec![1], vec![3]]);
    }

    #[test]
    fn zero_measurement_stops_immediately() {
        let m = test_matrix(5, 8, 1);
        let b = [0.0; 5];
        for res in [
            omp(&m, &b, &StoppingRule::relative_to(3, &b)).unwrap(),
            gomp(&m, &b, 2, &StoppingRule::relative_to(2, &b)).unwrap(),
            qomp(&m, &b, &StoppingRule::relative_to(2, &b)).unwrap(),
        ] {
            assert_eq!(res.iterations_run, 0);
            assert!(res.support.is_empty());
            assert_eq!(res.estimate.sparsity(), 0);
            assert_eq!(res.residual_history, vec![0.0]);
        }
    }

    #[test]
    fn budgets_are_enforced() {
        let m = test_matrix(6, 10, 2);
        let b = [1.0; 6];
        assert!(matches!(omp(&m, &b, &StoppingRule::new(6, 0.0)), Err(PursuitError::IterationBudget { limit: 5, .. })));
        assert!(matches!(gomp(&m, &b, 2, &StoppingRule::new(4, 0.0)), Err(PursuitError::IterationBudget { limit: 3, .. })));
        assert!(matches!(qomp(&m, &b, &StoppingRule::new(4, 0.0)), Err(PursuitError::IterationBudget { limit: 3, .. })));
        assert_eq!(gomp(&m, &b, 0, &StoppingRule::new(1, 0.0)).unwrap_err(), PursuitError::ZeroGroupSize);
        assert!(matches!(omp(&m, &[1.0; 5], &StoppingRule::new(1, 0.0)), Err(PursuitError::DimensionMismatch { .. })));
        let tall = test_matrix(1, 3, 0);
        assert_eq!(qomp(&tall, &[1.0], &StoppingRule::new(0, 0.0)).unwrap_err(), PursuitError::TooFewRows);
    }

    #[test]
    fn gomp_with_one_index_is_omp() {
        let m = test_matrix(8, 12, 3);
        let b: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5).sin()).collect();
        let stop = StoppingRule::relative_to(5, &b);
        let a = omp(&m, &b, &stop).unwrap();
        let g = gomp(&m, &b, 1, &stop).unwrap();
        assert_eq!(a, g);
    }

    #[test]
    fn gomp_exhausts_columns_gracefully() {
        let m = test_matrix(8, 5, 4);
        let b: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let res = gomp(&m, &b, 2, &StoppingRule::new(4, 0.0)).unwrap();
        assert_eq!(res.iterations_run, 3);
        assert_eq!(res.selection_history.last().unwrap().len(), 1);
        assert_eq!(res.support, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn qomp_finds_representable_pair() {
        let m = test_matrix(10, 14, 5);
        let unit = normalize_columns(&m).unwrap();
        let b: Vec<f64> = unit.column(5).iter().zip(unit.column(9)).map(|(x, y)| 2.0 * x + 3.0 * y).collect();
        let res = qomp(&m, &b, &StoppingRule::relative_to(2, &b)).unwrap();
        assert_eq!(res.selection_history[0], vec![5, 9]);
        assert_eq!(res.iterations_run, 1);
        let norms = m.column_norms();
        assert!((res.estimate.get(5) - 2.0 / norms[5]).abs() < 1e-12);
        assert!((res.estimate.get(9) - 3.0 / norms[9]).abs() < 1e-12);
    }

    #[test]
    fn qomp_stops_when_pairs_run_out() {
        let m = test_matrix(8, 5, 6);
        let b: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let res = qomp(&m, &b, &StoppingRule::new(4, 0.0)).unwrap();
        assert_eq!(res.iterations_run, 2);
        assert_eq!(res.support.len(), 4);
    }

    #[test]
    fn duplicate_column_is_dropped_from_refit() {
        let base = test_matrix(6, 4, 7);
        let mut cols: Vec<Vec<f64>> = (0..4).map(|i| base.column(i).to_vec()).collect();
        cols.push(cols[1].iter().map(|v| -2.0 * v).collect());
        let m = SensingMatrix::from_columns(&cols).unwrap();
        let b = cols[1].clone();
        // OMP picks column 1 or 4 first (|corr| tie), then the other is collinear.
        let res = gomp(&m, &b, 3, &StoppingRule::new(2, 0.0)).unwrap();
        assert_eq!(res.dropped.len(), 1);
        assert!(res.dropped[0] == 1 || res.dropped[0] == 4);
        assert!(!res.support.contains(&res.dropped[0]));
        let all: Vec<usize> = res.selection_history.concat();
        assert!(all.contains(&res.dropped[0]));
    }

    #[test]
    fn refine_reproduces_exact_signal() {
        let m = test_matrix(12, 20, 8);
        let x = SparseSignal::new(20, vec![2, 7, 11], vec![1.5, -0.7, 2.2]).unwrap();
        let b = m.apply_sparse(&x);
        let est = refine_support(&m, &[11, 2, 7], &b).unwrap();
        assert_eq!(est.support(), x.support());
        for (a, e) in est.values().iter().zip(x.values()) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn refine_drops_duplicate_column() {
        let base = test_matrix(8, 5, 9);
        let mut cols: Vec<Vec<f64>> = (0..5).map(|i| base.column(i).to_vec()).collect();
        cols.push(cols[2].clone());
        let m = SensingMatrix::from_columns(&cols).unwrap();
        let b: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let est = refine_support(&m, &[0, 2, 3, 5], &b).unwrap();
        assert_eq!(est.sparsity(), 3);
        assert!(est.support().contains(&0) && est.support().contains(&3));
    }

    #[test]
    fn refine_rejects_bad_index() {
        let m = test_matrix(4, 4, 1);
        assert!(matches!(refine_support(&m, &[9], &[0.0; 4]), Err(PursuitError::IndexOutOfBounds { index: 9, .. })));
    }
}
