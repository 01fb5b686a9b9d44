mod common;

use common::*;
use proptest::prelude::*;
use qomp::analytics::{exact_delta2, mutual_coherence, theoretical_alpha, welch_lower_bound};
use qomp::experiments::{add_noise, generate_gaussian_matrix, generate_sparse_signal, run_frequency_experiment, Algorithm, ExperimentConfig};
use qomp::io::{frequency_csv, matrix_to_binary, matrix_to_text, parse_matrix, report_from_json, report_to_json};
use qomp::linalg::{dot, least_squares_on_support, norm, normalize_columns, pair_residual_sq};
use qomp::pair_search::{ExclusionSet, GramCache, PairSearch, PairSearchConfig};
use qomp::pursuit::{gomp, omp, qomp, StoppingRule};
use qomp::{Residual, SensingMatrix};

fn matrix_strategy(max_m: usize, max_n: usize) -> impl Strategy<Value = SensingMatrix> {
    (2..=max_m, 2..=max_n)
        .prop_flat_map(|(m, n)| (Just(m), Just(n), prop::collection::vec(-10.0f64..10.0, m * n)))
        .prop_filter_map("zero column", |(m, n, data)| {
            let a = SensingMatrix::from_column_major(m, n, data).ok()?;
            a.column_norms().iter().all(|&v| v > 1e-3).then_some(a)
        })
}

fn instance(max_m: usize, max_n: usize) -> impl Strategy<Value = (SensingMatrix, Vec<f64>)> {
    matrix_strategy(max_m, max_n).prop_flat_map(|a| {
        let m = a.rows();
        (Just(a), prop::collection::vec(-5.0f64..5.0, m))
    })
}

fn monotone(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] <= w[0] + 1e-10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pair_residual_is_bounded_and_symmetric((a, r) in instance(12, 6)) {
        let u = normalize_columns(&a).unwrap();
        let res = Residual::new(r);
        for i in 0..u.cols() {
            for j in i + 1..u.cols() {
                let (Ok(x), Ok(y)) = (pair_residual_sq(u.column(i), u.column(j), &res), pair_residual_sq(u.column(j), u.column(i), &res)) else { continue };
                prop_assert_eq!(x.to_bits(), y.to_bits());
                prop_assert!(x >= 0.0 && x <= res.norm_sq() + 1e-10);
            }
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal((a, b) in instance(12, 8)) {
        let k = (a.cols().min(a.rows())).min(3);
        let support: Vec<usize> = (0..k).collect();
        if let Ok((_, r)) = least_squares_on_support(&a, &support, &b) {
            for &i in &support {
                prop_assert!(dot(a.column(i), r.as_slice()).abs() <= 1e-8 * (1.0 + norm(a.column(i)) * norm(&b)));
            }
            prop_assert!((r.norm_sq() - norm(r.as_slice()).powi(2)).abs() <= 1e-10 * r.norm_sq().max(1e-300));
        }
    }

    #[test]
    fn normalization_is_idempotent(a in matrix_strategy(8, 8)) {
        let once = normalize_columns(&a).unwrap();
        let twice = normalize_columns(&once).unwrap();
        for (x, y) in once.as_column_major().iter().zip(twice.as_column_major()) {
            prop_assert!((x - y).abs() <= 1e-14);
        }
        for (x, y) in a.column_norms().iter().zip(twice.column_norms()) {
            prop_assert!((x - y).abs() <= 1e-12 * x);
        }
    }

    #[test]
    fn pair_search_is_independent_of_chunking((a, r) in instance(10, 24), chunk in 1usize..50, threads in 1usize..4, cache in any::<bool>()) {
        let u = normalize_columns(&a).unwrap();
        let res = Residual::new(r);
        let excl = ExclusionSet::new(u.cols());
        let serial = PairSearch::new(&u, PairSearchConfig::default()).unwrap().select_best_pair(&res, &excl);
        let cfg = PairSearchConfig { gram_cache: if cache { GramCache::On } else { GramCache::Off }, chunk_size: chunk, max_threads: threads };
        let other = PairSearch::new(&u, cfg).unwrap().select_best_pair(&res, &excl);
        match (serial, other) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!((x.i, x.j), (y.i, y.j));
                prop_assert_eq!(x.residual_sq.to_bits(), y.residual_sq.to_bits());
            }
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn pursuit_invariants((a, b) in instance(10, 16)) {
        let m = a.rows();
        let stop = StoppingRule::relative_to(m / 2, &b);
        for (res, per_step) in [
            (omp(&a, &b, &StoppingRule::relative_to(m - 1, &b)).unwrap(), 1),
            (gomp(&a, &b, 2, &stop).unwrap(), 2),
            (qomp(&a, &b, &stop).unwrap(), 2),
        ] {
            prop_assert!(monotone(&res.residual_history));
            prop_assert_eq!(res.residual_history.len(), res.iterations_run + 1);
            let mut all: Vec<usize> = res.selection_history.concat();
            let picked = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), picked, "re-selection");
            prop_assert!(res.selection_history.iter().all(|s| s.len() <= per_step && s.windows(2).all(|w| w[0] < w[1])));
            let mut expect: Vec<usize> = all.iter().copied().filter(|i| !res.dropped.contains(i)).collect();
            expect.sort_unstable();
            prop_assert_eq!(&res.support, &expect);
            prop_assert!(res.estimate.support().iter().all(|i| res.support.binary_search(i).is_ok()));
            // Refit residual is orthogonal to the kept columns.
            let fit = a.apply_sparse(&res.estimate);
            let r: Vec<f64> = b.iter().zip(&fit).map(|(x, y)| x - y).collect();
            for &i in &res.support {
                prop_assert!(dot(a.column(i), &r).abs() / norm(a.column(i)) <= 1e-8 * (1.0 + norm(&b)));
            }
        }
    }

    #[test]
    fn qomp_adds_two_columns_per_iteration((a, b) in instance(12, 20)) {
        let res = qomp(&a, &b, &StoppingRule::new(a.rows() / 2, 0.0)).unwrap();
        prop_assert!(res.selection_history.iter().all(|s| s.len() == 2));
        prop_assert_eq!(res.support.len() + res.dropped.len(), 2 * res.iterations_run);
    }

    #[test]
    fn gomp_one_is_omp((a, b) in instance(10, 16)) {
        let stop = StoppingRule::relative_to(a.rows() - 1, &b);
        prop_assert_eq!(omp(&a, &b, &stop).unwrap(), gomp(&a, &b, 1, &stop).unwrap());
    }

    #[test]
    fn coherence_respects_welch_and_delta2(seed in any::<u64>(), m in 2usize..16, extra in 1usize..24) {
        let n = m + extra;
        let a = generate_gaussian_matrix(m, n, seed);
        let mu = mutual_coherence(&a).unwrap().mu;
        prop_assert!(mu >= welch_lower_bound(m, n) - 1e-12);
        let u = normalize_columns(&a).unwrap();
        prop_assert!((exact_delta2(&u).unwrap() - mu).abs() <= 1e-12);
    }

    #[test]
    fn theoretical_alpha_is_monotone(m in 2usize..64, extra in 0usize..128, k in 1usize..32, d in 0.0f64..0.99, mu in 0.0f64..0.99, step in 0.0f64..0.01) {
        let n = 2 * m + extra;
        prop_assume!(2 * (k + 1) <= m);
        let a = theoretical_alpha(m, n, k, d, mu).unwrap();
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(theoretical_alpha(m, n, k, d + step, mu).unwrap() >= a);
        prop_assert!(theoretical_alpha(m, n, k, d, mu + step).unwrap() >= a);
        prop_assert!(theoretical_alpha(m, n, k + 1, d, mu).unwrap() >= a);
    }

    #[test]
    fn matrix_files_round_trip(a in matrix_strategy(6, 6), scale in -300i32..300) {
        let data: Vec<f64> = a.as_column_major().iter().map(|v| v * 10f64.powi(scale)).filter(|v| v.is_finite()).collect();
        prop_assume!(data.len() == a.rows() * a.cols());
        let a = SensingMatrix::from_column_major(a.rows(), a.cols(), data).unwrap();
        let back = parse_matrix(matrix_to_text(&a).as_bytes()).unwrap();
        prop_assert_eq!(back.as_column_major(), a.as_column_major());
        let back = parse_matrix(&matrix_to_binary(&a)).unwrap();
        prop_assert_eq!(back.as_column_major(), a.as_column_major());
    }

    #[test]
    fn noise_norm_is_exact(b in prop::collection::vec(-100.0f64..100.0, 1..40), eps in 0.0f64..50.0, seed in any::<u64>()) {
        let y = add_noise(&b, eps, seed);
        let d: Vec<f64> = y.iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!((norm(&d) - eps).abs() <= 1e-12 * (1.0 + eps + norm(&b)));
    }

    #[test]
    fn sparse_signals_are_valid(n in 1usize..200, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let s = ((n as f64 * frac) as usize).max(1);
        let x = generate_sparse_signal(n, s, seed);
        prop_assert_eq!(x.sparsity(), s);
        prop_assert!(x.values().iter().all(|v| v.abs() >= 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reports_round_trip_and_bound_frequencies(seed in any::<u64>(), trials in 1usize..4) {
        let mut cfg = ExperimentConfig::new(10, vec![2, 3], trials, Algorithm::ALL.to_vec(), seed);
        cfg.sparsity_max = 3;
        let report = run_frequency_experiment(&cfg).unwrap();
        for c in &report.cells {
            prop_assert!(c.success_count <= c.trials);
            prop_assert_eq!(c.frequency, c.success_count as f64 / c.trials as f64);
            prop_assert_eq!(c.monotonicity_violations, 0);
        }
        let json = report_to_json(&report);
        let back = report_from_json(&json).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(report_to_json(&back), json);
        let csv = frequency_csv(&report);
        prop_assert_eq!(csv.lines().count(), report.cells.len() + 1);
    }
}

#[test]
fn orthonormal_helper_is_orthonormal() {
    let q = random_orthonormal(9, 7, 1);
    for i in 0..7 {
        for j in 0..7 {
            let d = dot(q.column(i), q.column(j));
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}
