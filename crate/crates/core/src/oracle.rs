//! Ground truth for tiny problems: the best `s`-column least-squares fit
//! found by trying every support.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{least_squares_on_support, LinalgError, SensingMatrix, SparseSignal};

/// Largest number of supports the oracle will enumerate.
pub const ENUMERATION_LIMIT: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("C({n}, {s}) supports exceed the enumeration limit of {limit}")]
    TooManySupports { n: usize, s: usize, limit: u64 },
    #[error("measurement has length {found}, matrix has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparsity {s} exceeds the number of columns {n}")]
    SparsityTooLarge { s: usize, n: usize },
    #[error("no support of size {0} has full column rank")]
    NoFullRankSupport(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub support: Vec<usize>,
    pub estimate: SparseSignal,
    pub residual_norm: f64,
    pub supports_evaluated: u64,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n as u128 - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Best `s`-support by exhaustive search. Rank-deficient supports are
/// skipped; among equal residuals the lexicographically first support wins.
pub fn best_support(matrix: &SensingMatrix, b: &[f64], s: usize) -> Result<OracleResult, OracleError> {
    let (m, n) = (matrix.rows(), matrix.cols());
    if b.len() != m {
        return Err(OracleError::DimensionMismatch { expected: m, found: b.len() });
    }
    if s > n {
        return Err(OracleError::SparsityTooLarge { s, n });
    }
    if binomial(n, s) > ENUMERATION_LIMIT {
        return Err(OracleError::TooManySupports { n, s, limit: ENUMERATION_LIMIT });
    }
    let mut idx: Vec<usize> = (0..s).collect();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut evaluated = 0u64;
    loop {
        evaluated += 1;
        let fit = if s == 0 {
            Ok((Vec::new(), crate::linalg::Residual::new(b.to_vec())))
        } else {
            least_squares_on_support(matrix, &idx, b)
        };
        match fit {
            Ok((coef, r)) => {
                if best.as_ref().is_none_or(|(v, _, _)| r.norm_sq() < *v) {
                    best = Some((r.norm_sq(), idx.clone(), coef));
                }
            }
            Err(LinalgError::RankDeficient { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        // Next combination in lexicographic order.
        let Some(p) = (0..s).rev().find(|&p| idx[p] < n - s + p) else { break };
        idx[p] += 1;
        for q in p + 1..s {
            idx[q] = idx[q - 1] + 1;
        }
    }
    let (norm_sq, support, coef) = best.ok_or(OracleError::NoFullRankSupport(s))?;
    let pairs = support.iter().copied().zip(coef).collect();
    Ok(OracleResult {
        estimate: SparseSignal::from_pairs(n, pairs),
        support,
        residual_norm: norm_sq.sqrt(),
        supports_evaluated: evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(12, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(128, 6), 5_423_611_200);
        assert_eq!(binomial(1000, 500), u64::MAX);
    }

    #[test]
    fn identity_picks_largest_entries() {
        let id = SensingMatrix::identity(6);
        let b = [0.5, -4.0, 1.0, 3.0, -0.25, 2.0];
        let r = best_support(&id, &b, 3).unwrap();
        assert_eq!(r.support, vec![1, 3, 5]);
        assert_eq!(r.supports_evaluated, 20);
        assert!((r.residual_norm - (0.25f64 + 1.0 + 0.0625).sqrt()).abs() < 1e-15);
        assert_eq!(r.estimate.to_dense(), vec![0.0, -4.0, 0.0, 3.0, 0.0, 2.0]);
    }

    #[test]
    fn guard_and_errors() {
        let a = SensingMatrix::from_column_major(1, 128, vec![1.0; 128]).unwrap();
        assert!(matches!(best_support(&a, &[1.0], 6), Err(OracleError::TooManySupports { .. })));
        assert!(matches!(best_support(&a, &[1.0, 2.0], 1), Err(OracleError::DimensionMismatch { .. })));
        let id = SensingMatrix::identity(2);
        assert!(matches!(best_support(&id, &[1.0, 2.0], 3), Err(OracleError::SparsityTooLarge { .. })));
        let flat = SensingMatrix::from_column_major(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(best_support(&flat, &[1.0], 2).unwrap_err(), OracleError::NoFullRankSupport(2));
        let z = best_support(&id, &[1.0, 2.0], 0).unwrap();
        assert!(z.support.is_empty());
        assert!((z.residual_norm - 5f64.sqrt()).abs() < 1e-15);
    }
}
