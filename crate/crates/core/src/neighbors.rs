//! Distance metrics and exact brute-force k-nearest-neighbor graphs.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    /// Distance without length checks.
    #[inline]
    pub fn eval(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(Metric::Euclidean.eval(ArrayView1::from(a), ArrayView1::from(b)))
}

pub fn manhattan(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(Metric::Manhattan.eval(ArrayView1::from(a), ArrayView1::from(b)))
}

/// Per-row k nearest neighbors, distances ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    pub indices: Array2<usize>,
    pub distances: Array2<f64>,
    pub metric: Metric,
}

impl NeighborGraph {
    pub fn n_rows(&self) -> usize {
        self.indices.nrows()
    }

    pub fn neighbors(&self, i: usize) -> ArrayView1<'_, usize> {
        self.indices.row(i)
    }

    pub fn row_distances(&self, i: usize) -> ArrayView1<'_, f64> {
        self.distances.row(i)
    }
}

/// Exact kNN graph of a complete data matrix.
pub fn knn_exact(data: &DataMatrix, k: usize, metric: Metric) -> Result<NeighborGraph> {
    knn_points(data.complete_values()?, k, metric)
}

/// Exact kNN graph over raw points (rows). Ties at equal distance go to the
/// lower row index.
pub fn knn_points(points: ArrayView2<f64>, k: usize, metric: Metric) -> Result<NeighborGraph> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (metric.eval(xi, points.row(j)), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand
        })
        .collect();
    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    for (i, row) in rows.into_iter().enumerate() {
        for (slot, (d, j)) in row.into_iter().enumerate() {
            indices[[i, slot]] = j;
            distances[[i, slot]] = d;
        }
    }
    Ok(NeighborGraph {
        k,
        indices,
        distances,
        metric,
    })
}

/// Dense symmetric n×n distance matrix.
pub fn pairwise_distances(points: ArrayView2<f64>, metric: Metric) -> Array2<f64> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| metric.eval(points.row(i), points.row(j))).collect())
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, d) in row.into_iter().enumerate() {
            out[[i, j]] = d;
        }
    }
    out
}
