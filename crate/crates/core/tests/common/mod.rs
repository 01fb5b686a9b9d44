#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qomp::experiments::generate_gaussian_matrix;
use qomp::linalg::normalize_columns;
use qomp::SensingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)
}

pub fn gaussian_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.sample(rand_distr::StandardNormal)).collect()
}

pub fn unit_gaussian(m: usize, n: usize, seed: u64) -> SensingMatrix {
    normalize_columns(&generate_gaussian_matrix(m, n, seed)).unwrap()
}

pub fn to_na(a: &SensingMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), a.as_column_major())
}

/// Least squares through the normal equations, solved by Cholesky.
pub fn normal_equations(a: &SensingMatrix, support: &[usize], b: &[f64]) -> Vec<f64> {
    let full = to_na(a);
    let sub = full.select_columns(support);
    let gram = sub.transpose() * &sub;
    let rhs = sub.transpose() * DVector::from_column_slice(b);
    gram.cholesky().expect("full rank").solve(&rhs).iter().copied().collect()
}

/// `||r - P r||^2` with `P` the orthogonal projector onto the given columns,
/// built from an SVD of the submatrix.
pub fn projection_residual_sq(cols: &[&[f64]], r: &[f64]) -> f64 {
    let m = r.len();
    let sub = DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]);
    let svd = sub.svd(true, false);
    let u = svd.u.unwrap();
    let rv = DVector::from_column_slice(r);
    let mut proj = DVector::zeros(m);
    for k in 0..cols.len() {
        if svd.singular_values[k] > 1e-12 {
            let uk = u.column(k);
            proj += uk * uk.dot(&rv);
        }
    }
    (rv - proj).norm_squared()
}

/// Exhaustive double loop over admissible pairs with explicit projection.
pub fn brute_force_pair(a: &SensingMatrix, r: &[f64], excluded: &[usize]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..a.cols() {
        for j in i + 1..a.cols() {
            if excluded.contains(&i) || excluded.contains(&j) {
                continue;
            }
            let g: f64 = a.column(i).iter().zip(a.column(j)).map(|(x, y)| x * y).sum();
            if 1.0 - g * g < 1e-10 {
                continue;
            }
            let v = projection_residual_sq(&[a.column(i), a.column(j)], r);
            if best.is_none_or(|(_, _, b)| v < b) {
                best = Some((i, j, v));
            }
        }
    }
    best
}

/// Orthonormal columns from Gram-Schmidt on a Gaussian `m x n` draw, `n <= m`.
pub fn random_orthonormal(m: usize, n: usize, seed: u64) -> SensingMatrix {
    let mut r = rng(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = gaussian_vec(&mut r, m);
        for _ in 0..2 {
            for q in &cols {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
    SensingMatrix::from_columns(&cols).unwrap()
}
