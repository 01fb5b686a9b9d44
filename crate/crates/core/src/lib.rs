//! Sparse recovery by greedy pursuit.
//!
//! The centerpiece is quasi-orthogonal matching pursuit ([`pursuit::qomp`]),
//! which grows the support two columns at a time by choosing the pair whose
//! joint projection leaves the smallest residual. OMP and generalized OMP are
//! provided as baselines, together with coherence/RIP analytics, a seeded
//! Monte Carlo harness and an exhaustive-search oracle for tiny problems.

pub mod analytics;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod pair_search;
pub mod pursuit;

pub use linalg::{LinalgError, Residual, SensingMatrix, SparseSignal};
pub use pair_search::{GramCache, PairSearch, PairSearchConfig, PairSelection};
pub use pursuit::{gomp, omp, qomp, qomp_with, refine_support, PursuitError, RecoveryResult, StoppingRule};
