//! Locally linear embedding.
//!
//! Each point is written as an affine combination of its neighbors
//! (weights sum to one), then the embedding is the set of low-dimensional
//! coordinates best reconstructed by those same weights: the bottom
//! eigenvectors of `(I − W)ᵀ(I − W)`, skipping the constant one.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::data::{DataMatrix, Embedding};
use crate::error::{Error, Result};
use crate::metrics::rho_projection;
use crate::neighbors::{knn_points, Metric, NeighborGraph};

/// Ridge added to each local Gram matrix, relative to its trace.
pub const REGULARIZATION: f64 = 1e-3;

/// Sparse reconstruction weights: row i is nonzero only on its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct LleWeights {
    pub k: usize,
    /// n×k neighbor indices.
    pub indices: Array2<usize>,
    /// n×k weights aligned with `indices`.
    pub weights: Array2<f64>,
    /// Mean squared reconstruction residual.
    pub rss: f64,
}

impl LleWeights {
    pub fn n_rows(&self) -> usize {
        self.indices.nrows()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n_rows();
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            for s in 0..self.k {
                w[[i, self.indices[[i, s]]]] += self.weights[[i, s]];
            }
        }
        w
    }
}

#[derive(Debug, Clone)]
pub struct LleModel {
    pub k: usize,
    pub weights: LleWeights,
    pub embedding: Embedding,
    pub rss: f64,
}

fn local_weights(x: ArrayView2<f64>, i: usize, nbrs: &[usize]) -> Result<Vec<f64>> {
    let k = nbrs.len();
    let p = x.ncols();
    let xi = x.row(i);
    let z = DMatrix::from_fn(k, p, |a, c| x[[nbrs[a], c]] - xi[c]);
    let mut gram = &z * z.transpose();
    let trace = gram.trace();
    let ridge = if trace > 0.0 { REGULARIZATION * trace } else { REGULARIZATION };
    for a in 0..k {
        gram[(a, a)] += ridge;
    }
    let ones = DVector::from_element(k, 1.0);
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&ones),
        None => gram.lu().solve(&ones).ok_or(Error::SingularLocalSystem(i))?,
    };
    let sum = w.sum();
    if !sum.is_finite() || sum.abs() < f64::EPSILON {
        return Err(Error::SingularLocalSystem(i));
    }
    Ok(w.iter().map(|v| v / sum).collect())
}

/// Solves the sum-to-one reconstruction weights for every row.
pub fn lle_weights(data: ArrayView2<f64>, graph: &NeighborGraph) -> Result<LleWeights> {
    let n = data.nrows();
    if graph.n_rows() != n {
        return Err(Error::LengthMismatch {
            left: graph.n_rows(),
            right: n,
        });
    }
    let k = graph.k;
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.indices.row(i).to_vec();
            if nbrs.contains(&i) {
                return Err(Error::InvalidArgument(format!("row {i} lists itself as a neighbor")));
            }
            let w = local_weights(data, i, &nbrs)?;
            let resid: f64 = (0..data.ncols())
                .map(|c| {
                    let recon: f64 = nbrs.iter().zip(&w).map(|(&j, wj)| wj * data[[j, c]]).sum();
                    (data[[i, c]] - recon).powi(2)
                })
                .sum();
            Ok((w, resid))
        })
        .collect::<Result<_>>()?;
    let mut weights = Array2::zeros((n, k));
    let mut total = 0.0;
    for (i, (w, r)) in rows.into_iter().enumerate() {
        for (s, v) in w.into_iter().enumerate() {
            weights[[i, s]] = v;
        }
        total += r;
    }
    Ok(LleWeights {
        k,
        indices: graph.indices.clone(),
        weights,
        rss: total / n as f64,
    })
}

/// `(I − W)ᵀ(I − W)` as a dense matrix.
fn cost_matrix(w: &LleWeights) -> DMatrix<f64> {
    let n = w.n_rows();
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for s in 0..w.k {
            let j = w.indices[[i, s]];
            let wij = w.weights[[i, s]];
            m[(i, j)] -= wij;
            m[(j, i)] -= wij;
            for t in 0..w.k {
                m[(j, w.indices[[i, t]])] += wij * w.weights[[i, t]];
            }
        }
    }
    m
}

/// Bottom eigenvectors 2..=d+1 of the reconstruction cost, scaled by √n.
pub fn lle_embed(weights: &LleWeights, d: usize) -> Result<Embedding> {
    let n = weights.n_rows();
    if d == 0 || d + 1 > n {
        return Err(Error::InvalidArgument(format!("embedding dimension {d} must be in 1..{n}")));
    }
    let m = cost_matrix(weights);
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = (n as f64).sqrt();
    let mut coords = Array2::zeros((n, d));
    for (c, &src) in order[1..=d].iter().enumerate() {
        for r in 0..n {
            coords[[r, c]] = eig.eigenvectors[(r, src)] * scale;
        }
    }
    crate::pca::fix_signs(&mut coords);
    Embedding::new(coords, "lle")
}

/// Full fit: kNN graph, weights, embedding.
pub fn fit_lle(data: &DataMatrix, k: usize, d: usize) -> Result<LleModel> {
    let x = data.complete_values()?;
    let graph = knn_points(x, k, Metric::Euclidean)?;
    let weights = lle_weights(x, &graph)?;
    let embedding = lle_embed(&weights, d)?;
    Ok(LleModel {
        k,
        rss: weights.rss,
        weights,
        embedding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KScanEntry {
    pub k: usize,
    /// `None` when the fit failed for this k.
    pub rho: Option<f64>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KScanResult {
    pub entries: Vec<KScanEntry>,
    pub best_k: usize,
}

impl KScanResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "rho", "score"])?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for e in &self.entries {
            w.write_record([e.k.to_string(), fmt(e.rho), fmt(e.score)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pair budget for the distance correlation in [`calc_k`].
pub const CALC_K_MAX_PAIRS: usize = 2000;

/// Scans neighborhood sizes and keeps the one whose embedding distances
/// correlate best with the data distances (minimum `1 − ρ²`).
pub fn calc_k(data: &DataMatrix, ks: &[usize], d: usize, seed: u64) -> Result<KScanResult> {
    let x = data.complete_values()?;
    let n = x.nrows();
    if ks.is_empty() {
        return Err(Error::InvalidArgument("no candidate k".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::KTooLarge { k, n });
    }
    let entries: Vec<KScanEntry> = ks
        .par_iter()
        .map(|&k| {
            let fit = fit_lle(data, k, d).and_then(|m| rho_projection(x, m.embedding.coords(), CALC_K_MAX_PAIRS, seed));
            match fit {
                Ok(r) => KScanEntry {
                    k,
                    rho: Some(r.rho),
                    score: Some(r.one_minus_rho_sq.clamp(0.0, 1.0)),
                },
                Err(e) => {
                    log::warn!("calc_k: k = {k} skipped: {e}");
                    KScanEntry { k, rho: None, score: None }
                }
            }
        })
        .collect();
    let best_k = entries
        .iter()
        .filter_map(|e| e.score.map(|s| (s, e.k)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, k)| k)
        .ok_or_else(|| Error::EigenFailure("every candidate k failed".into()))?;
    Ok(KScanResult { entries, best_k })
}
