//! Seeded problem generation and the Monte Carlo recovery harness.
//!
//! Randomness comes from ChaCha8 keyed by a 64-bit seed, with separate
//! streams for the matrix, the signal and the noise. Grid cells derive their
//! seed from `(base_seed, n_ratio, s, trial)` alone, so any cell can be
//! regenerated in isolation and the outcome does not depend on how trials
//! are scheduled across threads.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{decay_report_with, exact_delta2, mutual_coherence, AnalyticsError, DecayRateReport};
use crate::linalg::{norm, SensingMatrix, SparseSignal};
use crate::pursuit::{gomp, omp, qomp, refine_support, PursuitError, RecoveryResult, StoppingRule};

const MATRIX_STREAM: u64 = 0;
const SIGNAL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Nonzeros smaller than this are redrawn.
pub const MIN_NONZERO: f64 = 1e-12;
/// Noiseless success: `||x_hat - x|| <= EXACT_RELATIVE_TOLERANCE * ||x||`.
pub const EXACT_RELATIVE_TOLERANCE: f64 = 1e-6;
/// Allowed growth between consecutive residual norms before a step counts
/// as a monotonicity violation.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-10;

pub const SEED_RULE: &str = "splitmix64 chain over (base_seed, n_ratio, s, trial); ChaCha8 streams 0=matrix 1=signal 2=noise";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pursuit(#[from] PursuitError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for one grid cell.
pub fn mix_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(base);
    for v in [a, b, c] {
        h = splitmix64(h ^ v);
    }
    h
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `m x n` matrix with i.i.d. standard normal entries, filled column by column.
pub fn generate_gaussian_matrix(m: usize, n: usize, seed: u64) -> SensingMatrix {
    let mut r = rng(seed, MATRIX_STREAM);
    let data: Vec<f64> = (0..m * n).map(|_| r.sample(StandardNormal)).collect();
    SensingMatrix::from_column_major(m, n, data).expect("finite gaussian entries")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDistribution {
    #[default]
    Gaussian,
    Rademacher,
}

impl fmt::Display for ValueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueDistribution::Gaussian => "gaussian",
            ValueDistribution::Rademacher => "rademacher",
        })
    }
}

/// `s`-sparse signal with Gaussian nonzeros on a uniformly drawn support.
pub fn generate_sparse_signal(n: usize, s: usize, seed: u64) -> SparseSignal {
    generate_sparse_signal_with(n, s, seed, ValueDistribution::Gaussian)
}

pub fn generate_sparse_signal_with(n: usize, s: usize, seed: u64, values: ValueDistribution) -> SparseSignal {
    assert!(s <= n, "sparsity {s} exceeds dimension {n}");
    let mut r = rng(seed, SIGNAL_STREAM);
    let mut support = rand::seq::index::sample(&mut r, n, s).into_vec();
    support.sort_unstable();
    let vals = (0..s)
        .map(|_| match values {
            ValueDistribution::Gaussian => loop {
                let v: f64 = r.sample(StandardNormal);
                if v.abs() >= MIN_NONZERO {
                    break v;
                }
            },
            ValueDistribution::Rademacher => {
                if r.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    SparseSignal::new(n, support, vals).expect("valid sparse signal")
}

/// `b + v` with `v` Gaussian, rescaled so that `||v|| = eps`.
pub fn add_noise(b: &[f64], eps: f64, seed: u64) -> Vec<f64> {
    assert!(eps >= 0.0 && eps.is_finite(), "noise level must be finite and nonnegative");
    if eps == 0.0 || b.is_empty() {
        return b.to_vec();
    }
    let mut r = rng(seed, NOISE_STREAM);
    let v: Vec<f64> = loop {
        let v: Vec<f64> = (0..b.len()).map(|_| r.sample(StandardNormal)).collect();
        if norm(&v) > 0.0 {
            break v;
        }
    };
    let scale = eps / norm(&v);
    b.iter().zip(&v).map(|(bi, vi)| bi + scale * vi).collect()
}

/// How the noise level of an instance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    #[default]
    None,
    /// `||v|| = eps`.
    Absolute { eps: f64 },
    /// `||v|| = ratio * min_i |x_i|`, pinning the signal-to-noise margin.
    RelativeToMinEntry { ratio: f64 },
}

impl NoiseModel {
    pub fn is_noiseless(&self) -> bool {
        match *self {
            NoiseModel::None => true,
            NoiseModel::Absolute { eps } => eps == 0.0,
            NoiseModel::RelativeToMinEntry { ratio } => ratio == 0.0,
        }
    }

    fn eps_for(&self, truth: &SparseSignal) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Absolute { eps } => eps,
            NoiseModel::RelativeToMinEntry { ratio } => ratio * truth.min_abs_value().unwrap_or(0.0),
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let v = match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Absolute { eps } => eps,
            NoiseModel::RelativeToMinEntry { ratio } => ratio,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ExperimentError::InvalidConfig(format!("noise level {v} must be finite and nonnegative")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub matrix: SensingMatrix,
    pub truth: SparseSignal,
    pub measurement: Vec<f64>,
    pub noise_eps: f64,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn generate(m: usize, n: usize, s: usize, noise: NoiseModel, values: ValueDistribution, seed: u64) -> Self {
        let matrix = generate_gaussian_matrix(m, n, seed);
        let truth = generate_sparse_signal_with(n, s, seed, values);
        let clean = matrix.apply_sparse(&truth);
        let noise_eps = noise.eps_for(&truth);
        let measurement = add_noise(&clean, noise_eps, seed);
        Self { matrix, truth, measurement, noise_eps, seed }
    }

    /// Hash of everything the algorithms see, used to show that every
    /// algorithm in a cell ran on the same instance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = splitmix64(self.seed);
        let mut feed = |v: u64| h = splitmix64(h ^ v);
        feed(self.matrix.rows() as u64);
        feed(self.matrix.cols() as u64);
        for v in self.matrix.as_column_major().iter().chain(&self.measurement) {
            feed(v.to_bits());
        }
        for (&i, v) in self.truth.support().iter().zip(self.truth.values()) {
            feed(i as u64);
            feed(v.to_bits());
        }
        h
    }
}

/// Success predicate. Noiseless: relative error at most 1e-6. Noisy: the
/// true support is contained in the estimate's support.
pub fn exact_recovery(estimate: &SparseSignal, truth: &SparseSignal, noiseless: bool) -> bool {
    assert_eq!(estimate.dimension(), truth.dimension(), "dimension mismatch");
    if noiseless {
        let err: Vec<f64> = estimate.to_dense().iter().zip(truth.to_dense()).map(|(a, b)| a - b).collect();
        norm(&err) <= EXACT_RELATIVE_TOLERANCE * norm(truth.values())
    } else {
        truth.support().iter().all(|i| estimate.support().binary_search(i).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// OMP with `s` iterations.
    #[serde(rename = "omp_s")]
    OmpS,
    /// OMP with `2s` iterations.
    #[serde(rename = "omp_2s")]
    Omp2s,
    /// GOMP, two indices per step, `s` iterations.
    #[serde(rename = "gomp2_s")]
    Gomp2S,
    /// GOMP, two indices per step, `2s` iterations capped at `floor(m/2)`.
    #[serde(rename = "gomp2_2s")]
    Gomp2_2s,
    /// QOMP, `s` iterations, followed by support refinement.
    #[serde(rename = "qomp_s")]
    QompS,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::OmpS, Algorithm::Omp2s, Algorithm::Gomp2S, Algorithm::Gomp2_2s, Algorithm::QompS];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OmpS => "omp_s",
            Algorithm::Omp2s => "omp_2s",
            Algorithm::Gomp2S => "gomp2_s",
            Algorithm::Gomp2_2s => "gomp2_2s",
            Algorithm::QompS => "qomp_s",
        }
    }

    pub fn budget(self, s: usize, m: usize) -> usize {
        match self {
            Algorithm::Omp2s => 2 * s,
            Algorithm::Gomp2_2s => (2 * s).min(m / 2),
            _ => s,
        }
    }

    /// Runs the algorithm and returns its raw result plus the estimate the
    /// success predicate is applied to.
    pub fn run(self, matrix: &SensingMatrix, b: &[f64], s: usize) -> Result<(RecoveryResult, SparseSignal), PursuitError> {
        let stop = StoppingRule::relative_to(self.budget(s, matrix.rows()), b);
        let res = match self {
            Algorithm::OmpS | Algorithm::Omp2s => omp(matrix, b, &stop)?,
            Algorithm::Gomp2S | Algorithm::Gomp2_2s => gomp(matrix, b, 2, &stop)?,
            Algorithm::QompS => qomp(matrix, b, &stop)?,
        };
        let estimate = match self {
            Algorithm::QompS => refine_support(matrix, &res.support, b)?,
            _ => res.estimate.clone(),
        };
        Ok((res, estimate))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected one of omp_s, omp_2s, gomp2_s, gomp2_2s, qomp_s)"))
    }
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n_ratios: Vec<usize>,
    pub sparsity_min: usize,
    pub sparsity_max: usize,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub values: ValueDistribution,
    pub base_seed: u64,
    /// Worker count. Not echoed into reports, which are identical for any value.
    #[serde(skip_serializing, default = "default_threads")]
    pub threads: usize,
    /// Wall-clock timing makes reports run-dependent, so it is opt-in.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Noiseless grid over `s = 2..=floor(0.4 m)`.
    pub fn new(m: usize, n_ratios: Vec<usize>, trials: usize, algorithms: Vec<Algorithm>, base_seed: u64) -> Self {
        Self {
            m,
            n_ratios,
            sparsity_min: 2,
            sparsity_max: (2 * m) / 5,
            trials,
            algorithms,
            noise: NoiseModel::None,
            values: ValueDistribution::Gaussian,
            base_seed,
            threads: 1,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.m < 2 {
            return bad(format!("m = {} must be at least 2", self.m));
        }
        if self.n_ratios.is_empty() || self.n_ratios.contains(&0) {
            return bad("ratios must be a nonempty list of positive integers".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.sparsity_min == 0 || self.sparsity_min > self.sparsity_max {
            return bad(format!("sparsity range {}..={} is empty or starts at 0", self.sparsity_min, self.sparsity_max));
        }
        if self.sparsity_max > self.m {
            return bad(format!("sparsity {} exceeds m = {}", self.sparsity_max, self.m));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub algorithm: Algorithm,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub trials: usize,
    pub success_count: usize,
    pub frequency: f64,
    pub mean_iterations: f64,
    pub mean_runtime_ms: Option<f64>,
    /// Trials where the algorithm returned an error (counted as failures).
    pub errors: usize,
    /// Order-independent digest of the instances this cell ran on; equal
    /// across algorithms for the same `(n, s)`.
    pub instance_digest: String,
    pub monotonicity_violations: usize,
    pub max_residual_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_seed: u64,
    pub seed_rule: String,
    pub predicate: String,
    pub value_distribution: ValueDistribution,
    pub software_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn cell(&self, algorithm: Algorithm, n: usize, s: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.n == n && c.s == s)
    }

    /// Largest residual growth seen in any trial of any cell.
    pub fn max_residual_increase(&self) -> f64 {
        self.cells.iter().map(|c| c.max_residual_increase).fold(0.0, f64::max)
    }
}

struct TrialOutcome {
    success: bool,
    error: bool,
    iterations: usize,
    runtime_ms: f64,
    max_increase: f64,
}

fn run_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;
    Ok(pool.install(job))
}

/// Runs every `(n_ratio, s, trial)` cell once per configured algorithm, all
/// algorithms sharing the same instance.
pub fn run_frequency_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let m = config.m;
    let noiseless = config.noise.is_noiseless();
    let sparsities: Vec<usize> = (config.sparsity_min..=config.sparsity_max).collect();
    let work: Vec<(usize, usize, usize)> = config
        .n_ratios
        .iter()
        .flat_map(|&ratio| sparsities.iter().flat_map(move |&s| (0..config.trials).map(move |t| (ratio, s, t))))
        .collect();

    let run_one = |&(ratio, s, t): &(usize, usize, usize)| {
        let seed = mix_seed(config.base_seed, ratio as u64, s as u64, t as u64);
        let inst = ProblemInstance::generate(m, ratio * m, s, config.noise, config.values, seed);
        let outcomes: Vec<TrialOutcome> = config
            .algorithms
            .iter()
            .map(|alg| {
                let start = config.record_timing.then(Instant::now);
                let out = alg.run(&inst.matrix, &inst.measurement, s);
                let runtime_ms = start.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
                match out {
                    Ok((res, est)) => TrialOutcome {
                        success: exact_recovery(&est, &inst.truth, noiseless),
                        error: false,
                        iterations: res.iterations_run,
                        runtime_ms,
                        max_increase: res.max_residual_increase(),
                    },
                    Err(_) => TrialOutcome { success: false, error: true, iterations: 0, runtime_ms, max_increase: 0.0 },
                }
            })
            .collect();
        (inst.fingerprint(), outcomes)
    };
    let results: Vec<(u64, Vec<TrialOutcome>)> = run_pool(config.threads, || work.par_iter().map(run_one).collect())?;

    let mut cells = Vec::new();
    let per_cell = config.trials;
    for (block, chunk) in results.chunks(per_cell).enumerate() {
        let (ratio, s, _) = work[block * per_cell];
        let digest = chunk.iter().fold(0u64, |acc, (fp, _)| acc.wrapping_add(*fp));
        for (a, &alg) in config.algorithms.iter().enumerate() {
            let outs = chunk.iter().map(|(_, o)| &o[a]);
            let success_count = outs.clone().filter(|o| o.success).count();
            let errors = outs.clone().filter(|o| o.error).count();
            let iterations: usize = outs.clone().map(|o| o.iterations).sum();
            let runtime: f64 = outs.clone().map(|o| o.runtime_ms).sum();
            let violations = outs.clone().filter(|o| o.max_increase > MONOTONICITY_TOLERANCE).count();
            let max_increase = outs.map(|o| o.max_increase).fold(0.0, f64::max);
            cells.push(CellReport {
                algorithm: alg,
                m,
                n: ratio * m,
                s,
                trials: per_cell,
                success_count,
                frequency: success_count as f64 / per_cell as f64,
                mean_iterations: iterations as f64 / per_cell as f64,
                mean_runtime_ms: config.record_timing.then(|| runtime / per_cell as f64),
                errors,
                instance_digest: format!("{digest:016x}"),
                monotonicity_violations: violations,
                max_residual_increase: max_increase,
            });
        }
    }

    let predicate = if noiseless {
        format!("noiseless: ||x_hat - x||_2 <= {EXACT_RELATIVE_TOLERANCE:e} * ||x||_2; qomp_s estimate refined by greedy QR")
    } else {
        "noisy: support(x) subset of support(x_hat); qomp_s estimate refined by greedy QR".to_string()
    };
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
        provenance: Provenance {
            base_seed: config.base_seed,
            seed_rule: SEED_RULE.to_string(),
            predicate,
            value_distribution: config.values,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrial {
    pub seed: u64,
    /// The refined QOMP estimate passed the noiseless predicate.
    pub recovered: bool,
    pub iterations: usize,
    /// `||r_K|| / ||b||`.
    pub final_relative_residual: f64,
    pub residual_history: Vec<f64>,
    pub report: DecayRateReport,
}

/// QOMP with budget `s` on `trials` noiseless Gaussian instances, recording
/// observed versus guaranteed residual contraction.
pub fn run_decay_experiment(m: usize, n: usize, s: usize, trials: usize, base_seed: u64) -> Result<Vec<DecayTrial>, ExperimentError> {
    run_decay_experiment_with(m, n, s, trials, base_seed, 1)
}

pub fn run_decay_experiment_with(
    m: usize,
    n: usize,
    s: usize,
    trials: usize,
    base_seed: u64,
    threads: usize,
) -> Result<Vec<DecayTrial>, ExperimentError> {
    if n < 2 * m || s == 0 || 2 * s > m {
        return Err(ExperimentError::InvalidConfig(format!("need n >= 2m and 1 <= s <= m/2, got m={m}, n={n}, s={s}")));
    }
    if threads == 0 {
        return Err(ExperimentError::InvalidConfig("threads must be at least 1".into()));
    }
    let one = |t: usize| -> Result<DecayTrial, ExperimentError> {
        let seed = mix_seed(base_seed, n as u64, s as u64, t as u64);
        let inst = ProblemInstance::generate(m, n, s, NoiseModel::None, ValueDistribution::Gaussian, seed);
        let (res, est) = Algorithm::QompS.run(&inst.matrix, &inst.measurement, s)?;
        let mu = mutual_coherence(&inst.matrix)?.mu;
        let delta2 = exact_delta2(&inst.matrix)?;
        let b_norm = norm(&inst.measurement);
        Ok(DecayTrial {
            seed,
            recovered: exact_recovery(&est, &inst.truth, true),
            iterations: res.iterations_run,
            final_relative_residual: if b_norm > 0.0 { res.final_residual() / b_norm } else { 0.0 },
            report: decay_report_with(&res.residual_history, m, n, s, delta2, mu),
            residual_history: res.residual_history,
        })
    };
    run_pool(threads, || (0..trials).into_par_iter().map(one).collect())?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(mix_seed(1, 2, 3, 4), mix_seed(1, 2, 3, 4));
        assert_ne!(mix_seed(1, 2, 3, 4), mix_seed(1, 2, 4, 3));
        assert_ne!(mix_seed(0, 0, 0, 0), mix_seed(0, 0, 0, 1));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(generate_gaussian_matrix(4, 6, 11), generate_gaussian_matrix(4, 6, 11));
        assert_ne!(generate_gaussian_matrix(4, 6, 11), generate_gaussian_matrix(4, 6, 12));
        assert_eq!(generate_sparse_signal(30, 5, 3), generate_sparse_signal(30, 5, 3));
        let full = generate_sparse_signal(7, 7, 1);
        assert_eq!(full.support(), &[0, 1, 2, 3, 4, 5, 6]);
        let r = generate_sparse_signal_with(20, 4, 2, ValueDistribution::Rademacher);
        assert!(r.values().iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn noise_has_exact_norm() {
        let b = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(add_noise(&b, 0.0, 5), b);
        for eps in [1e-6, 0.3, 10.0] {
            let y = add_noise(&b, eps, 5);
            let d: Vec<f64> = y.iter().zip(&b).map(|(a, c)| a - c).collect();
            assert!((norm(&d) - eps).abs() < 1e-12);
            assert_eq!(y, add_noise(&b, eps, 5));
        }
    }

    #[test]
    fn recovery_predicate() {
        let x = SparseSignal::new(5, vec![1, 3], vec![2.0, -1.0]).unwrap();
        assert!(exact_recovery(&x, &x, true));
        assert!(!exact_recovery(&SparseSignal::zeros(5), &x, true));
        let off = SparseSignal::new(5, vec![1, 3], vec![2.0 + 2.2e-3, -1.0]).unwrap();
        assert!(!exact_recovery(&off, &x, true));
        assert!(exact_recovery(&off, &x, false));
        let sup = SparseSignal::new(5, vec![0, 1, 3], vec![0.1, 1.0, 1.0]).unwrap();
        assert!(exact_recovery(&sup, &x, false));
        let miss = SparseSignal::new(5, vec![1, 4], vec![1.0, 1.0]).unwrap();
        assert!(!exact_recovery(&miss, &x, false));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("omp".parse::<Algorithm>().is_err());
    }

    #[test]
    fn small_grid_is_reproducible() {
        let mut cfg = ExperimentConfig::new(12, vec![2, 3], 3, Algorithm::ALL.to_vec(), 7);
        cfg.sparsity_max = 3;
        let a = run_frequency_experiment(&cfg).unwrap();
        let b = run_frequency_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2 * 2 * 5);
        for c in &a.cells {
            assert!(c.success_count <= c.trials);
            assert_eq!(c.mean_runtime_ms, None);
            let twin = a.cell(Algorithm::QompS, c.n, c.s).unwrap();
            assert_eq!(c.instance_digest, twin.instance_digest);
        }
    }

    #[test]
    fn config_validation() {
        let good = ExperimentConfig::new(32, vec![4], 1, vec![Algorithm::QompS], 0);
        assert_eq!(good.sparsity_max, 12);
        assert!(good.validate().is_ok());
        let mut c = good.clone();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.sparsity_min = 13;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.noise = NoiseModel::Absolute { eps: -1.0 };
        assert!(c.validate().is_err());
        let mut c = good;
        c.algorithms.clear();
        assert!(c.validate().is_err());
    }
}
