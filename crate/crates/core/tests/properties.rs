use dimred::data::{split, standardize};
use dimred::ingest::{knn_impute, ImputeConfig};
use dimred::lle::lle_weights;
use dimred::metrics::{correlation_matrix, trustworthiness};
use dimred::neighbors::knn_points;
use dimred::som::{update_codes, SomGrid};
use dimred::tsne::kl_between;
use dimred::umap::{cross_entropy, fuzzy_graph};
use dimred::{DataMatrix, Metric, RngStream, SplitSpec};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = RngStream::new(seed);
    Array2::from_shape_fn((n, p), |_| rng.normal())
}

fn distribution(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn standardize_is_idempotent(n in 3usize..40, p in 1usize..6, seed in any::<u64>()) {
        let d = DataMatrix::from_values(matrix(n, p, seed)).unwrap();
        let (once, _, _) = standardize(&d).unwrap();
        let (twice, _, _) = standardize(&once).unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn split_parts_reassemble(n in 10usize..200, seed in any::<u64>()) {
        let d = DataMatrix::from_values(matrix(n, 2, 1)).unwrap();
        let s = split(&d, &SplitSpec::new(0.6, 0.2, 0.2, seed).unwrap()).unwrap();
        let mut rows: Vec<usize> = s.train.rows.iter().chain(&s.test.rows).chain(&s.validation.rows).copied().collect();
        rows.sort_unstable();
        prop_assert_eq!(rows, (0..n).collect::<Vec<_>>());
        for (part, idx) in [(&s.train.data, &s.train.rows), (&s.test.data, &s.test.rows)] {
            for (r, &src) in idx.iter().enumerate() {
                prop_assert_eq!(part.row(r), d.row(src));
            }
        }
    }

    #[test]
    fn lle_weight_rows_sum_to_one(n in 12usize..60, p in 1usize..5, k in 2usize..10, seed in any::<u64>()) {
        let x = matrix(n, p, seed);
        let g = knn_points(x.view(), k, Metric::Euclidean).unwrap();
        let w = lle_weights(x.view(), &g).unwrap();
        for row in w.weights.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn kl_is_nonnegative(raw in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..20)) {
        let (p, q): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
        prop_assert!(kl_between(&distribution(&p), &distribution(&q)) >= -1e-12);
    }

    #[test]
    fn umap_cross_entropy_is_nonnegative(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..30)) {
        let (h, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(cross_entropy(&h, &l) >= 0.0);
    }

    #[test]
    fn fuzzy_graph_is_symmetric(n in 8usize..60, k in 2usize..7, seed in any::<u64>()) {
        let x = matrix(n, 3, seed);
        let g = fuzzy_graph(&knn_points(x.view(), k, Metric::Euclidean).unwrap());
        for i in 0..n {
            for &(j, w) in g.row(i) {
                prop_assert_eq!(g.get(j, i), w);
                prop_assert!(w > 0.0 && w <= 1.0);
            }
        }
    }

    #[test]
    fn som_update_stays_between_code_and_input(alpha in 0.0001f64..0.9999, sigma in 0.01f64..5.0, seed in any::<u64>()) {
        let codes = matrix(9, 3, seed);
        let mut grid = SomGrid::new(3, 3, codes.clone()).unwrap();
        let x = matrix(1, 3, seed ^ 1);
        update_codes(&mut grid, x.row(0), 4, alpha, sigma);
        for ((j, c), &new) in grid.codes.indexed_iter() {
            let (lo, hi) = (codes[[j, c]].min(x[[0, c]]), codes[[j, c]].max(x[[0, c]]));
            prop_assert!(new >= lo - 1e-12 && new <= hi + 1e-12);
        }
    }

    #[test]
    fn correlation_invariant_to_positive_affine(seed in any::<u64>(), scale in 0.1f64..50.0, shift in -100.0f64..100.0) {
        let x = matrix(25, 4, seed);
        let mut y = x.clone();
        y.column_mut(2).mapv_inplace(|v| scale * v + shift);
        let a = correlation_matrix(&DataMatrix::from_values(x).unwrap()).unwrap();
        let b = correlation_matrix(&DataMatrix::from_values(y).unwrap()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn trustworthiness_in_unit_interval(n in 10usize..40, seed in any::<u64>()) {
        let x = matrix(n, 4, seed);
        let y = matrix(n, 2, seed ^ 7);
        let k = (n - 1) / 2 - 1;
        let t = trustworthiness(x.view(), y.view(), k.max(1)).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn imputation_keeps_observed_cells(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = RngStream::new(seed);
        let values = matrix(30, 4, seed);
        let mask = Array2::from_shape_fn((30, 4), |(i, j)| j == i % 4 && rand::Rng::random_bool(&mut rng, 0.4));
        let names = (1..=4).map(|j| format!("V{j}")).collect();
        let d = DataMatrix::with_missing(values.clone(), names, mask.clone()).unwrap();
        let out = knn_impute(&d, &ImputeConfig { k, ..Default::default() }).unwrap();
        prop_assert!(!out.has_missing());
        for ((i, j), &m) in mask.indexed_iter() {
            if !m {
                prop_assert_eq!(out.values()[[i, j]], values[[i, j]]);
            }
        }
    }
}
