//! Exhaustive search for the column pair that best explains a residual.
//!
//! Admissible columns are those outside the [`ExclusionSet`]. Their pairs
//! `(a, b)`, `a < b` in admissible-list positions, are enumerated in
//! lexicographic order and addressed by a linear rank; a [`PairRange`] is a
//! contiguous slice of that enumeration.
//!
//! Each pair's residual is computed from the same precomputed products no
//! matter which chunk it falls in, and chunk minima are merged with a total
//! order on `(residual, i, j)`. The selected pair is therefore independent of
//! chunk size and thread count, bit for bit.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, pair_residual_from_products, PackedGram, Residual, SensingMatrix};

/// Largest `n` for which [`GramCache::Auto`] keeps the Gram matrix.
pub const GRAM_CACHE_AUTO_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PairSearchError {
    #[error("pair search requires a normalized matrix")]
    NotNormalized,
    #[error("no admissible pair among {admissible} admissible columns")]
    NoAdmissiblePair { admissible: usize },
    #[error("residual has length {found}, matrix has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("exclusion set is sized for {found} columns, matrix has {expected}")]
    ExclusionSize { expected: usize, found: usize },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramCache {
    /// On when `n <= GRAM_CACHE_AUTO_LIMIT`.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSearchConfig {
    pub gram_cache: GramCache,
    /// Pairs per work item.
    pub chunk_size: usize,
    /// 1 evaluates serially on the calling thread.
    pub max_threads: usize,
}

impl Default for PairSearchConfig {
    fn default() -> Self {
        Self { gram_cache: GramCache::Auto, chunk_size: 1 << 14, max_threads: 1 }
    }
}

/// Winning pair, `i < j` as column indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub i: usize,
    pub j: usize,
    pub residual_sq: f64,
}

impl PairSelection {
    fn order(&self, other: &Self) -> Ordering {
        self.residual_sq
            .total_cmp(&other.residual_sq)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }

    fn better(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if y.order(&x) == Ordering::Less { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        }
    }
}

/// Columns barred from selection. Only grows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionSet {
    mask: Vec<bool>,
    count: usize,
}

impl ExclusionSet {
    pub fn new(columns: usize) -> Self {
        Self { mask: vec![false; columns], count: 0 }
    }

    /// Returns whether the index was newly added. Panics when out of range.
    pub fn insert(&mut self, index: usize) -> bool {
        let fresh = !std::mem::replace(&mut self.mask[index], true);
        self.count += usize::from(fresh);
        fresh
    }

    pub fn contains(&self, index: usize) -> bool {
        self.mask.get(index).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn columns(&self) -> usize {
        self.mask.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i)
    }

    /// Non-excluded columns in increasing order.
    pub fn admissible(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &x)| !x).map(|(i, _)| i).collect()
    }
}

/// Half-open range `[start, end)` of pair ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRange {
    pub start: usize,
    pub end: usize,
}

impl PairRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One evaluated pair; collinear pairs carry `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    pub i: usize,
    pub j: usize,
    pub residual_sq: f64,
}

/// Number of pairs among `k` admissible columns.
pub fn pair_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Position pair `(a, b)`, `a < b < k`, of lexicographic rank `rank`.
pub fn unrank_pair(k: usize, rank: usize) -> (usize, usize) {
    debug_assert!(rank < pair_count(k));
    let mut a = 0;
    let mut offset = 0;
    loop {
        let row = k - 1 - a;
        if rank < offset + row {
            return (a, a + 1 + (rank - offset));
        }
        offset += row;
        a += 1;
    }
}

/// Per-call snapshot: admissible columns and their correlations with the residual.
struct Snapshot<'r> {
    active: Vec<usize>,
    corr: Vec<f64>,
    residual: &'r Residual,
}

/// Reusable search context over one normalized matrix. Building it computes
/// the Gram cache when enabled; each `select_best_pair` call then costs
/// `O(mn)` for correlations plus `O(n^2)` pair evaluations.
pub struct PairSearch<'a> {
    matrix: &'a SensingMatrix,
    gram: Option<PackedGram>,
    config: PairSearchConfig,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> PairSearch<'a> {
    pub fn new(matrix: &'a SensingMatrix, config: PairSearchConfig) -> Result<Self, PairSearchError> {
        if !matrix.is_normalized() {
            return Err(PairSearchError::NotNormalized);
        }
        let use_gram = match config.gram_cache {
            GramCache::On => true,
            GramCache::Off => false,
            GramCache::Auto => matrix.cols() <= GRAM_CACHE_AUTO_LIMIT,
        };
        let pool = if config.max_threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.max_threads)
                    .build()
                    .map_err(|e| PairSearchError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };
        let gram = use_gram.then(|| match &pool {
            Some(p) => p.install(|| matrix.gram(true)),
            None => matrix.gram(false),
        });
        Ok(Self { matrix, gram, config, pool })
    }

    pub fn matrix(&self) -> &SensingMatrix {
        self.matrix
    }

    pub fn uses_gram_cache(&self) -> bool {
        self.gram.is_some()
    }

    fn snapshot<'r>(&self, residual: &'r Residual, excluded: &ExclusionSet) -> Result<Snapshot<'r>, PairSearchError> {
        let m = self.matrix.rows();
        if residual.len() != m {
            return Err(PairSearchError::DimensionMismatch { expected: m, found: residual.len() });
        }
        if excluded.columns() != self.matrix.cols() {
            return Err(PairSearchError::ExclusionSize { expected: self.matrix.cols(), found: excluded.columns() });
        }
        let active = excluded.admissible();
        let mut corr = vec![0.0; self.matrix.cols()];
        for &i in &active {
            corr[i] = dot(self.matrix.column(i), residual.as_slice());
        }
        Ok(Snapshot { active, corr, residual })
    }

    #[inline]
    fn gram_entry(&self, i: usize, j: usize) -> f64 {
        match &self.gram {
            Some(g) => g.get(i, j),
            None => dot(self.matrix.column(i), self.matrix.column(j)),
        }
    }

    /// Walks the pairs of `range` in order, calling `visit` with each
    /// evaluation (`None` residual for collinear pairs).
    fn walk(&self, snap: &Snapshot<'_>, range: PairRange, mut visit: impl FnMut(usize, usize, Option<f64>)) {
        let k = snap.active.len();
        let end = range.end.min(pair_count(k));
        if range.start >= end {
            return;
        }
        let rr = snap.residual.norm_sq();
        let (mut a, mut b) = unrank_pair(k, range.start);
        for _ in range.start..end {
            let (i, j) = (snap.active[a], snap.active[b]);
            let g = self.gram_entry(i, j);
            visit(i, j, pair_residual_from_products(rr, g, snap.corr[i], snap.corr[j]));
            b += 1;
            if b == k {
                a += 1;
                b = a + 1;
            }
        }
    }

    fn best_in_range(&self, snap: &Snapshot<'_>, range: PairRange) -> Option<PairSelection> {
        let mut best: Option<PairSelection> = None;
        self.walk(snap, range, |i, j, res| {
            if let Some(residual_sq) = res {
                // Ranks increase lexicographically, so strict improvement keeps the first tie.
                if best.is_none_or(|b| residual_sq < b.residual_sq) {
                    best = Some(PairSelection { i, j, residual_sq });
                }
            }
        });
        best
    }

    /// Residuals for a contiguous chunk of the pair enumeration.
    pub fn evaluate_pair_block(
        &self,
        residual: &Residual,
        excluded: &ExclusionSet,
        range: PairRange,
    ) -> Result<Vec<PairEvaluation>, PairSearchError> {
        let snap = self.snapshot(residual, excluded)?;
        let mut out = Vec::with_capacity(range.len());
        self.walk(&snap, range, |i, j, res| {
            out.push(PairEvaluation { i, j, residual_sq: res.unwrap_or(f64::INFINITY) });
        });
        Ok(out)
    }

    /// Admissible, non-collinear pair with the smallest two-column residual.
    /// Ties go to the lexicographically smallest `(i, j)`.
    pub fn select_best_pair(&self, residual: &Residual, excluded: &ExclusionSet) -> Result<PairSelection, PairSearchError> {
        let snap = self.snapshot(residual, excluded)?;
        let total = pair_count(snap.active.len());
        let chunk = self.config.chunk_size.max(1);
        let ranges: Vec<PairRange> =
            (0..total).step_by(chunk).map(|s| PairRange::new(s, (s + chunk).min(total))).collect();
        let best = match &self.pool {
            Some(pool) => pool.install(|| {
                ranges
                    .par_iter()
                    .map(|&r| self.best_in_range(&snap, r))
                    .reduce(|| None, PairSelection::better)
            }),
            None => ranges.iter().map(|&r| self.best_in_range(&snap, r)).fold(None, PairSelection::better),
        };
        best.ok_or(PairSearchError::NoAdmissiblePair { admissible: snap.active.len() })
    }
}

/// One-shot search with the default configuration.
pub fn select_best_pair(
    matrix: &SensingMatrix,
    residual: &Residual,
    excluded: &ExclusionSet,
) -> Result<PairSelection, PairSearchError> {
    PairSearch::new(matrix, PairSearchConfig::default())?.select_best_pair(residual, excluded)
}

/// One-shot block evaluation over the full column set.
pub fn evaluate_pair_block(
    matrix: &SensingMatrix,
    residual: &Residual,
    range: PairRange,
) -> Result<Vec<PairEvaluation>, PairSearchError> {
    let config = PairSearchConfig { gram_cache: GramCache::Off, ..PairSearchConfig::default() };
    PairSearch::new(matrix, config)?.evaluate_pair_block(residual, &ExclusionSet::new(matrix.cols()), range)
}
