//! Coherence and RIP diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{generate_gaussian_matrix, mix_seed};
use crate::linalg::{normalize_columns, LinalgError, PackedGram, SensingMatrix, ZERO_COLUMN_NORM};
use crate::pursuit::RecoveryResult;

/// Residual ratios whose previous squared norm is below this are skipped.
pub const DECAY_RATIO_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("need at least two columns, got {0}")]
    TooFewColumns(usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<LinalgError> for AnalyticsError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::ZeroColumn(i) => AnalyticsError::ZeroColumn(i),
            other => AnalyticsError::InvalidArgument(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    pub argmax_pair: (usize, usize),
    pub welch_lower: f64,
    pub f_value: f64,
    pub mu_times_f: f64,
}

/// `f(m) = sqrt(m) / ln m`, the reference decay rate for coherence.
pub fn decay_function(m: usize) -> f64 {
    let m = m as f64;
    m.sqrt() / m.ln()
}

/// Lower bound on the coherence of any `m x n` unit-norm frame:
/// `sqrt((n - m) / (m (n - 1)))` for `n > m`, zero otherwise.
pub fn welch_lower_bound(m: usize, n: usize) -> f64 {
    if n <= m || n < 2 || m == 0 {
        return 0.0;
    }
    let (m, n) = (m as f64, n as f64);
    ((n - m) / (m * (n - 1.0))).sqrt()
}

fn check_columns(matrix: &SensingMatrix) -> Result<(), AnalyticsError> {
    if matrix.cols() < 2 {
        return Err(AnalyticsError::TooFewColumns(matrix.cols()));
    }
    if let Some(i) = matrix.column_norms().iter().position(|&v| v <= ZERO_COLUMN_NORM) {
        return Err(AnalyticsError::ZeroColumn(i));
    }
    Ok(())
}

/// Scans every pair of a Gram matrix, keeping the largest `score`, first
/// pair in `(i, j)` order on ties. Rows are split across threads and merged
/// with the same total order, so the result does not depend on scheduling.
fn max_over_pairs<F>(gram: &PackedGram, score: F) -> (f64, (usize, usize))
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    let n = gram.dim();
    let pick = |a: (f64, (usize, usize)), b: (f64, (usize, usize))| {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    (0..n.saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, (i, i + 1));
            for (off, &g) in gram.row(i).iter().enumerate() {
                let j = i + 1 + off;
                let v = score(i, j, g);
                if v > best.0 {
                    best = (v, (i, j));
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, (usize::MAX, usize::MAX)), pick)
}

/// Largest absolute cosine between two distinct columns.
pub fn mutual_coherence(matrix: &SensingMatrix) -> Result<CoherenceReport, AnalyticsError> {
    check_columns(matrix)?;
    let gram = matrix.gram(true);
    let (mu, argmax_pair) = max_over_pairs(&gram, |i, j, g| {
        let c = g.abs() / (gram.diagonal(i) * gram.diagonal(j)).sqrt();
        c.min(1.0)
    });
    let (m, n) = (matrix.rows(), matrix.cols());
    let f_value = decay_function(m);
    Ok(CoherenceReport { m, n, mu, argmax_pair, welch_lower: welch_lower_bound(m, n), f_value, mu_times_f: mu * f_value })
}

/// Largest deviation of the eigenvalues of `[[a, g], [g, d]]` from 1.
fn gram2_deviation(a: f64, g: f64, d: f64) -> f64 {
    let mean = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d) * (a - d) + g * g).sqrt();
    ((mean + half_gap) - 1.0).abs().max(((mean - half_gap) - 1.0).abs())
}

/// Restricted isometry constant of order 2, computed over every column pair
/// of the unit-normalized matrix. For unit columns the 2x2 Gram
/// `[[1, g], [g, 1]]` has eigenvalues `1 +- g`, so this coincides with the
/// mutual coherence.
pub fn exact_delta2(matrix: &SensingMatrix) -> Result<f64, AnalyticsError> {
    check_columns(matrix)?;
    let unit;
    let m = if matrix.is_normalized() {
        matrix
    } else {
        unit = normalize_columns(matrix)?;
        &unit
    };
    let gram = m.gram(true);
    let (delta, _) = max_over_pairs(&gram, |i, j, g| gram2_deviation(gram.diagonal(i), g, gram.diagonal(j)));
    Ok(delta)
}

/// Guaranteed per-iteration contraction factor of the squared residual:
/// `1 - (1 - delta2)(1 - mu)(n - 2K - m + 2) / (4m(n - 2K + 1))`.
///
/// Requires `n >= 2m` and `1 <= K <= m/2`; under these the value lies in
/// `(0, 1)` unless `delta2` or `mu` equals 1, where it degenerates to 1.
pub fn theoretical_alpha(m: usize, n: usize, k: usize, delta2: f64, mu: f64) -> Result<f64, AnalyticsError> {
    if m == 0 || n < 2 * m {
        return Err(AnalyticsError::PreconditionViolated(format!("need n >= 2m, got m={m}, n={n}")));
    }
    if k == 0 || 2 * k > m {
        return Err(AnalyticsError::PreconditionViolated(format!("need 1 <= K <= m/2, got K={k}, m={m}")));
    }
    for (name, v) in [("delta2", delta2), ("mu", mu)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(AnalyticsError::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let (m, n, k) = (m as f64, n as f64, k as f64);
    let num = (1.0 - delta2) * (1.0 - mu) * (n - 2.0 * k - m + 2.0);
    let den = 4.0 * m * (n - 2.0 * k + 1.0);
    Ok(1.0 - num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRateReport {
    /// Largest observed `||r_k||^2 / ||r_{k-1}||^2`.
    pub empirical_alpha: f64,
    /// `None` when the shape or `K` falls outside the bound's preconditions.
    pub theoretical_alpha: Option<f64>,
    pub k: usize,
    pub delta2: f64,
    pub mu: f64,
}

/// Largest squared-norm ratio between consecutive residuals; 0 when every
/// step either starts below the floor or ends at zero.
pub fn empirical_alpha(residual_history: &[f64]) -> f64 {
    residual_history
        .windows(2)
        .filter(|w| w[0] * w[0] >= DECAY_RATIO_FLOOR)
        .map(|w| (w[1] * w[1]) / (w[0] * w[0]))
        .fold(0.0, f64::max)
}

/// Observed contraction versus the guaranteed rate for a QOMP run of `k`
/// iterations. The bound is evaluated with the coherence of the full matrix
/// standing in for the coherence of the residual-augmented column set.
pub fn residual_decay_report(result: &RecoveryResult, matrix: &SensingMatrix, k: usize) -> Result<DecayRateReport, AnalyticsError> {
    let mu = mutual_coherence(matrix)?.mu;
    let delta2 = exact_delta2(matrix)?;
    Ok(decay_report_with(&result.residual_history, matrix.rows(), matrix.cols(), k, delta2, mu))
}

/// As [`residual_decay_report`], with `delta2` and `mu` precomputed.
pub fn decay_report_with(residual_history: &[f64], m: usize, n: usize, k: usize, delta2: f64, mu: f64) -> DecayRateReport {
    DecayRateReport {
        empirical_alpha: empirical_alpha(residual_history),
        theoretical_alpha: theoretical_alpha(m, n, k, delta2, mu).ok(),
        k,
        delta2,
        mu,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceDecayRow {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub mean_mu: f64,
    pub mean_mu_times_f: f64,
    /// Share of trials with `mu * f(m) <= 1`.
    pub fraction_within: f64,
    pub min_mu: f64,
    pub welch_lower: f64,
}

/// Monte Carlo coherence of normalized `m x (aspect m)` Gaussian matrices,
/// one row per entry of `m_values`.
pub fn coherence_decay_check(m_values: &[usize], aspect: usize, trials: usize, seed: u64) -> Result<Vec<CoherenceDecayRow>, AnalyticsError> {
    if aspect == 0 {
        return Err(AnalyticsError::InvalidArgument("aspect must be at least 1".into()));
    }
    if let Some(&m) = m_values.iter().find(|&&m| m < 8) {
        return Err(AnalyticsError::InvalidArgument(format!("m = {m} below 8")));
    }
    m_values.iter().map(|&m| coherence_trials(m, aspect * m, trials, seed)).collect()
}

/// Coherence statistics of `trials` normalized `m x n` Gaussian matrices.
/// Trial `t` uses seed `mix_seed(seed, m, n, t)`.
pub fn coherence_trials(m: usize, n: usize, trials: usize, seed: u64) -> Result<CoherenceDecayRow, AnalyticsError> {
    if trials == 0 {
        return Err(AnalyticsError::InvalidArgument("trials must be at least 1".into()));
    }
    if m < 2 {
        return Err(AnalyticsError::InvalidArgument(format!("m = {m} below 2")));
    }
    let f = decay_function(m);
    let mus: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let a = generate_gaussian_matrix(m, n, mix_seed(seed, m as u64, n as u64, t as u64));
            mutual_coherence(&a).map(|r| r.mu)
        })
        .collect::<Result<_, _>>()?;
    // Sequential sums over the collected vector keep this bit-stable.
    let mean_mu = mus.iter().sum::<f64>() / trials as f64;
    let mean_mu_times_f = mus.iter().map(|mu| mu * f).sum::<f64>() / trials as f64;
    let within = mus.iter().filter(|&&mu| mu * f <= 1.0).count();
    Ok(CoherenceDecayRow {
        m,
        n,
        trials,
        mean_mu,
        mean_mu_times_f,
        fraction_within: within as f64 / trials as f64,
        min_mu: mus.iter().copied().fold(f64::INFINITY, f64::min),
        welch_lower: welch_lower_bound(m, n),
    })
}
