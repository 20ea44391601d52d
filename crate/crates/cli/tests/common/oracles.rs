//! Independent reference computations. Deliberately naive; no library code.

use dimred::RngStream;
use ndarray::{Array1, Array2, ArrayView2};

pub fn random_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = RngStream::new(seed);
    Array2::from_shape_fn((n, p), |_| rng.normal())
}

/// Cyclic Jacobi on a symmetric matrix; eigenvalues descending with
/// matching eigenvector columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[[i, j]] * m[[i, j]];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[[y, y]].total_cmp(&m[[x, x]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Sample covariance (divisor n−1), optionally of standardized columns.
pub fn covariance(x: ArrayView2<f64>, standardize: bool) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut z = x.to_owned();
    for j in 0..p {
        let mean = (0..n).map(|i| x[[i, j]]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[[i, j]] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = if standardize { var.sqrt() } else { 1.0 };
        for i in 0..n {
            z[[i, j]] = (x[[i, j]] - mean) / sd;
        }
    }
    let mut c = Array2::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            c[[a, b]] = (0..n).map(|i| z[[i, a]] * z[[i, b]]).sum::<f64>() / (n - 1) as f64;
        }
    }
    c
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = a.nrows();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap();
        if piv != col {
            for k in 0..n {
                a.swap([col, k], [piv, k]);
            }
            b.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = a[[r, col]] / a[[col, col]];
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    x
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fraction of points whose nearest embedding neighbor shares their label.
pub fn one_nn_purity(y: ArrayView2<f64>, labels: &[u32]) -> f64 {
    let n = y.nrows();
    let rows: Vec<Vec<f64>> = y.rows().into_iter().map(|r| r.to_vec()).collect();
    let hits = (0..n)
        .filter(|&i| {
            let nn = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| dist(&rows[i], &rows[a]).total_cmp(&dist(&rows[i], &rows[b])))
                .unwrap();
            labels[nn] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}

/// Spearman correlation for tie-free samples.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}
