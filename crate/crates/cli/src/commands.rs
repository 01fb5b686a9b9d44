use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use qomp::analytics::{coherence_decay_check, coherence_trials, mutual_coherence, CoherenceDecayRow};
use qomp::experiments::{run_frequency_experiment, Algorithm, ExperimentConfig, NoiseModel, ProblemInstance, ValueDistribution};
use qomp::io::{self, MatrixFormat};
use qomp::oracle::{best_support, OracleError};
use qomp::pursuit::{gomp, omp, qomp_with, refine_support, PursuitError, StoppingRule};
use qomp::{PairSearchConfig, SparseSignal};

use crate::{Algo, BenchArgs, CoherenceArgs, GenerateArgs, OracleArgs, RecoverArgs, Values};

pub enum CliError {
    Input(String),
    DeadEnd(String),
    Guard(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::DeadEnd(_) => 3,
            CliError::Guard(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::DeadEnd(m) | CliError::Guard(m) => f.write_str(m),
        }
    }
}

impl From<io::FormatError> for CliError {
    fn from(e: io::FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PursuitError> for CliError {
    fn from(e: PursuitError) -> Self {
        match e {
            PursuitError::DimensionMismatch { .. } | PursuitError::IterationBudget { .. } | PursuitError::ZeroGroupSize | PursuitError::TooFewRows => {
                CliError::Input(e.to_string())
            }
            _ => CliError::DeadEnd(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Entry {
    index: usize,
    value: f64,
}

fn entries(x: &SparseSignal) -> Vec<Entry> {
    x.support().iter().zip(x.values()).map(|(&index, &value)| Entry { index, value }).collect()
}

#[derive(Serialize)]
struct RecoverOutput {
    algorithm: &'static str,
    m: usize,
    n: usize,
    support: Vec<usize>,
    estimate: Vec<Entry>,
    iterations_run: usize,
    selection_history: Vec<Vec<usize>>,
    residual_history: Vec<f64>,
    dropped: Vec<usize>,
    /// QOMP only: greedy-QR least squares on the selected support.
    #[serde(skip_serializing_if = "Option::is_none")]
    refined_estimate: Option<Vec<Entry>>,
}

pub fn recover(a: RecoverArgs) -> Result<()> {
    let matrix = io::read_matrix(&a.matrix)?;
    let b = io::read_measurement(&a.measurement)?;
    if b.len() != matrix.rows() {
        return Err(CliError::Input(format!("measurement has {} entries, matrix has {} rows", b.len(), matrix.rows())));
    }
    let m = matrix.rows();
    let limit = match a.algo {
        Algo::Omp => m.saturating_sub(1),
        Algo::Gomp => m / a.gomp_n.max(1),
        Algo::Qomp => m / 2,
    };
    let iterations = a.max_iters.unwrap_or(a.sparsity.min(limit));
    let stop = match a.tol {
        Some(t) if !(t >= 0.0 && t.is_finite()) => return Err(CliError::Input(format!("--tol {t} must be finite and nonnegative"))),
        Some(t) => StoppingRule::new(iterations, t),
        None => StoppingRule::relative_to(iterations, &b),
    };
    let (name, result) = match a.algo {
        Algo::Omp => ("omp", omp(&matrix, &b, &stop)?),
        Algo::Gomp => ("gomp", gomp(&matrix, &b, a.gomp_n, &stop)?),
        Algo::Qomp => ("qomp", qomp_with(&matrix, &b, &stop, &PairSearchConfig::default())?),
    };
    let refined_estimate = match a.algo {
        Algo::Qomp => Some(entries(&refine_support(&matrix, &result.support, &b)?)),
        _ => None,
    };
    let out = RecoverOutput {
        algorithm: name,
        m,
        n: matrix.cols(),
        estimate: entries(&result.estimate),
        support: result.support,
        iterations_run: result.iterations_run,
        selection_history: result.selection_history,
        residual_history: result.residual_history,
        dropped: result.dropped,
        refined_estimate,
    };
    emit(&to_json(&out), a.output.as_deref())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let algorithms = a
        .algos
        .iter()
        .map(|s| s.trim().parse::<Algorithm>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(CliError::Input)?;
    let noise = match (a.noise_eps, a.noise_ratio) {
        (Some(eps), _) => NoiseModel::Absolute { eps },
        (None, Some(ratio)) => NoiseModel::RelativeToMinEntry { ratio },
        (None, None) => NoiseModel::None,
    };
    let config = ExperimentConfig {
        m: a.m,
        n_ratios: a.ratios,
        sparsity_min: a.sparsity_min,
        sparsity_max: a.sparsity_max.unwrap_or(2 * a.m / 5),
        trials: a.trials,
        algorithms,
        noise,
        values: match a.values {
            Values::Gaussian => ValueDistribution::Gaussian,
            Values::Rademacher => ValueDistribution::Rademacher,
        },
        base_seed: a.seed,
        threads: a.threads,
        record_timing: a.record_timing,
    };
    let report = run_frequency_experiment(&config).map_err(|e| CliError::Input(e.to_string()))?;
    emit(&io::report_to_json(&report), Some(&a.output))?;
    if let Some(csv) = &a.csv {
        emit(&io::frequency_csv(&report), Some(csv))?;
    }
    eprintln!("qomp: {} cells written to {}", report.cells.len(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct CoherenceTable {
    trials: usize,
    seed: u64,
    rows: Vec<CoherenceDecayRow>,
}

pub fn coherence(a: CoherenceArgs) -> Result<()> {
    let input = |e: qomp::analytics::AnalyticsError| CliError::Input(e.to_string());
    if let Some(path) = &a.matrix {
        let matrix = io::read_matrix(path)?;
        let report = mutual_coherence(&matrix).map_err(input)?;
        return emit(&to_json(&report), None);
    }
    let rows = match (a.n, a.aspect) {
        (Some(n), _) => {
            let [m] = a.m[..] else {
                return Err(CliError::Input("--n takes a single --m value".into()));
            };
            vec![coherence_trials(m, n, a.trials, a.seed).map_err(input)?]
        }
        (None, aspect) => coherence_decay_check(&a.m, aspect.unwrap_or(4), a.trials, a.seed).map_err(input)?,
    };
    emit(&to_json(&CoherenceTable { trials: a.trials, seed: a.seed, rows }), None)
}

#[derive(Serialize)]
struct OracleOutput {
    support: Vec<usize>,
    estimate: Vec<Entry>,
    residual_norm: f64,
    supports_evaluated: u64,
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    let matrix = io::read_matrix(&a.matrix)?;
    let b = io::read_measurement(&a.measurement)?;
    let res = best_support(&matrix, &b, a.sparsity).map_err(|e| match e {
        OracleError::TooManySupports { .. } => CliError::Guard(e.to_string()),
        OracleError::NoFullRankSupport(_) => CliError::DeadEnd(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;
    let out = OracleOutput {
        estimate: entries(&res.estimate),
        support: res.support,
        residual_norm: res.residual_norm,
        supports_evaluated: res.supports_evaluated,
    };
    emit(&to_json(&out), a.output.as_deref())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.m == 0 || a.n == 0 || a.sparsity > a.n {
        return Err(CliError::Input(format!("need m, n >= 1 and sparsity <= n, got m={}, n={}, s={}", a.m, a.n, a.sparsity)));
    }
    let noise = match a.noise_eps {
        Some(eps) if !(eps >= 0.0 && eps.is_finite()) => return Err(CliError::Input(format!("--noise-eps {eps} must be finite and nonnegative"))),
        Some(eps) => NoiseModel::Absolute { eps },
        None => NoiseModel::None,
    };
    let inst = ProblemInstance::generate(a.m, a.n, a.sparsity, noise, ValueDistribution::Gaussian, a.seed);
    let format = if a.binary { MatrixFormat::Binary } else { MatrixFormat::Text };
    io::write_matrix(&a.matrix_out, &inst.matrix, format)?;
    io::write_measurement(&a.measurement_out, &inst.measurement, format)?;
    if let Some(p) = &a.truth_out {
        emit(&to_json(&entries(&inst.truth)), Some(p))?;
    }
    Ok(())
}
