mod common;

use common::random_matrix;
use dimred::data::make_gaussian_clusters;
use dimred::som::{
    fcm_codes, find_bmu, kmeans, kmeans_codes, map_observations, som_train, ExpDecay, SomConfig, SomGrid,
};
use dimred::RngStream;
use ndarray::Array2;
use rand::Rng;

#[test]
fn bmu_matches_linear_scan() {
    let codes = random_matrix(100, 4, 1);
    let grid = SomGrid::new(10, 10, codes.clone()).unwrap();
    let probes = random_matrix(50, 4, 2);
    for x in probes.rows() {
        let mut best = (f64::INFINITY, 0);
        for j in 0..100 {
            let d: f64 = (0..4).map(|c| (codes[[j, c]] - x[c]).powi(2)).sum::<f64>().sqrt();
            if d < best.0 {
                best = (d, j);
            }
        }
        assert_eq!(find_bmu(&grid, x), best.1);
    }
}

#[test]
fn two_clusters_converge_to_cluster_means() {
    let (data, labels) = make_gaussian_clusters(50, &[vec![5.0, 5.0, 5.0], vec![-5.0, -5.0, -5.0]], 0.5, 3).unwrap();
    let x = data.values();
    let grid0 = SomGrid::from_data(2, 1, x, 4).unwrap();
    let cfg = SomConfig {
        rlen: 200,
        seed: 5,
        ..Default::default()
    };
    let (grid, _) = som_train(x, &grid0, &cfg).unwrap();
    let mapping = map_observations(&grid, x);
    for cluster in 0..2u32 {
        let rows: Vec<usize> = (0..100).filter(|&i| labels[i] == cluster).collect();
        let node = mapping.assignments[rows[0]];
        assert!(rows.iter().all(|&i| mapping.assignments[i] == node));
        for c in 0..3 {
            let mean = rows.iter().map(|&i| x[[i, c]]).sum::<f64>() / rows.len() as f64;
            assert!((grid.codes[[node, c]] - mean).abs() < 0.5);
        }
    }
    assert_ne!(mapping.assignments[0], mapping.assignments[99]);
}

#[test]
fn alpha_schedule_endpoints() {
    for t_end in [1.0, 99.0, 49_999.0] {
        let s = ExpDecay {
            start: 0.1,
            end: 0.001,
            t_end,
        };
        assert!((s.at(0.0) - 0.1).abs() < 1e-9);
        assert!((s.at(t_end) - 0.001).abs() < 1e-9);
    }
}

#[test]
fn trace_settles_over_training() {
    let x = random_matrix(100, 3, 6);
    let grid0 = SomGrid::from_data(5, 5, x.view(), 7).unwrap();
    let cfg = SomConfig {
        rlen: 500,
        seed: 8,
        ..Default::default()
    };
    let (_, trace) = som_train(x.view(), &grid0, &cfg).unwrap();
    let t = &trace.mean_bmu_distance;
    assert_eq!(t.len(), 500);
    assert!(t.iter().all(|v| *v >= 0.0));
    let first: f64 = t[..50].iter().sum::<f64>() / 50.0;
    let last: f64 = t[450..].iter().sum::<f64>() / 50.0;
    assert!(last <= first, "first {first} last {last}");
}

#[test]
fn training_is_seeded() {
    let x = random_matrix(40, 3, 9);
    let grid0 = SomGrid::from_data(3, 3, x.view(), 1).unwrap();
    let cfg = |seed| SomConfig {
        rlen: 20,
        seed,
        ..Default::default()
    };
    let a = som_train(x.view(), &grid0, &cfg(1)).unwrap();
    let b = som_train(x.view(), &grid0, &cfg(1)).unwrap();
    let c = som_train(x.view(), &grid0, &cfg(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0.codes, c.0.codes);
}

#[test]
fn mapping_is_pure_and_handles_duplicates() {
    let x = random_matrix(30, 2, 10);
    let grid = SomGrid::from_data(3, 3, x.view(), 2).unwrap();
    let mut dup = x.clone();
    dup.row_mut(5).assign(&x.row(4));
    let a = map_observations(&grid, dup.view());
    let b = map_observations(&grid, dup.view());
    assert_eq!(a, b);
    assert_eq!(a.assignments[4], a.assignments[5]);
    assert_eq!(a.counts.iter().sum::<usize>(), 30);
}

#[test]
fn kmeans_beats_random_partitions() {
    let codes = random_matrix(40, 3, 11);
    let r = kmeans(codes.view(), 3, 12).unwrap();
    let mut rng = RngStream::new(13);
    for _ in 0..100 {
        let labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
        let mut ss = 0.0;
        for c in 0..3 {
            let members: Vec<usize> = (0..40).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for col in 0..3 {
                let mean = members.iter().map(|&i| codes[[i, col]]).sum::<f64>() / members.len() as f64;
                ss += members.iter().map(|&i| (codes[[i, col]] - mean).powi(2)).sum::<f64>();
            }
        }
        assert!(r.within_ss <= ss);
    }
}

#[test]
fn kmeans_on_grid_codes_splits_blobs() {
    let mut codes = Array2::zeros((6, 2));
    for i in 0..6 {
        let base = if i < 3 { 0.0 } else { 20.0 };
        codes[[i, 0]] = base + 0.01 * i as f64;
        codes[[i, 1]] = base;
    }
    let grid = SomGrid::new(2, 3, codes).unwrap();
    let r = kmeans_codes(&grid, 2, 1).unwrap();
    assert!(r.labels[..3].iter().all(|&l| l == r.labels[0]));
    assert!(r.labels[3..].iter().all(|&l| l == r.labels[3]));
    assert_ne!(r.labels[0], r.labels[3]);
}

#[test]
fn fcm_memberships_on_codes() {
    let grid = SomGrid::new(4, 4, random_matrix(16, 3, 14)).unwrap();
    let r = fcm_codes(&grid, 3, 2.0, 15).unwrap();
    assert_eq!(r.memberships.dim(), (16, 3));
    for row in r.memberships.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-8);
        assert!(row.iter().all(|&u| (0.0..=1.0).contains(&u)));
    }
}
