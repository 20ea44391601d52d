//! Embedding-quality scores and correlation summaries.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{DataMatrix, RngStream};
use crate::error::{Error, Result};

/// Pearson correlation. Zero when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Ranks starting at 1, ties get their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// p×p Pearson correlation matrix of the features.
pub fn correlation_matrix(data: &DataMatrix) -> Result<Array2<f64>> {
    let x = data.complete_values()?;
    let p = x.ncols();
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    for (j, c) in cols.iter().enumerate() {
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::ConstantFeature(data.feature_names()[j].clone()));
        }
    }
    let mut out = Array2::eye(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let r = pearson(&cols[i], &cols[j]);
            out[[i, j]] = r;
            out[[j, i]] = r;
        }
    }
    Ok(out)
}

/// Correlations of every other feature with `focus`, most negative first.
pub fn focus_correlations(names: &[String], corr: &Array2<f64>, focus: &str) -> Result<Vec<(String, f64)>> {
    let f = names
        .iter()
        .position(|n| n == focus)
        .ok_or_else(|| Error::MissingColumn(focus.to_string()))?;
    let mut out: Vec<(String, f64)> = names
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != f)
        .map(|(j, n)| (n.clone(), corr[[f, j]]))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of all other rows sorted by distance from row `i`, ties by index.
fn ordering(points: ArrayView2<f64>, i: usize) -> Vec<usize> {
    let d: Vec<f64> = points.rows().into_iter().map(|r| sq_dist(points.row(i), r)).collect();
    let mut idx: Vec<usize> = (0..points.nrows()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx
}

/// Rank-based penalty for embedding neighbors that are not neighbors in
/// the data space. 1 means every embedding k-neighborhood is faithful.
pub fn trustworthiness(data: ArrayView2<f64>, embedding: ArrayView2<f64>, k: usize) -> Result<f64> {
    let n = data.nrows();
    if embedding.nrows() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: embedding.nrows(),
        });
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let penalties: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let high = ordering(data, i);
            let mut rank = vec![0usize; n];
            for (r, &j) in high.iter().enumerate() {
                rank[j] = r + 1;
            }
            ordering(embedding, i)
                .into_iter()
                .take(k)
                .filter(|&j| rank[j] > k)
                .map(|j| (rank[j] - k) as f64)
                .sum()
        })
        .collect();
    let total: f64 = penalties.iter().sum();
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total)
}

/// Trustworthiness with the roles of the two spaces swapped: penalizes data
/// neighbors that the embedding pulled apart.
pub fn continuity(data: ArrayView2<f64>, embedding: ArrayView2<f64>, k: usize) -> Result<f64> {
    trustworthiness(embedding, data, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoResult {
    pub rho: f64,
    pub one_minus_rho_sq: f64,
    pub pairs: usize,
}

/// Correlation between data-space and embedding-space pairwise distances.
///
/// All pairs are used when `max_pairs` covers them; otherwise `max_pairs`
/// pairs are drawn with a seeded stream.
pub fn rho_projection(data: ArrayView2<f64>, embedding: ArrayView2<f64>, max_pairs: usize, seed: u64) -> Result<RhoResult> {
    let n = data.nrows();
    if embedding.nrows() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: embedding.nrows(),
        });
    }
    let total = n * n.saturating_sub(1) / 2;
    let pairs: Vec<(usize, usize)> = if max_pairs >= total {
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = RngStream::new(seed);
        (0..max_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };
    let (high, low): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .map(|&(i, j)| {
            (
                sq_dist(data.row(i), data.row(j)).sqrt(),
                sq_dist(embedding.row(i), embedding.row(j)).sqrt(),
            )
        })
        .unzip();
    let rho = pearson(&high, &low);
    Ok(RhoResult {
        rho,
        one_minus_rho_sq: 1.0 - rho * rho,
        pairs: pairs.len(),
    })
}

/// Quality summary of one embedding run, serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub status: String,
    pub algo_tag: String,
    pub trustworthiness: Option<f64>,
    pub continuity: Option<f64>,
    pub rho: Option<f64>,
    pub one_minus_rho_sq: Option<f64>,
    pub runtime_seconds: f64,
    pub quality_k: usize,
    pub config: BTreeMap<String, String>,
    /// Algorithm-specific scalars such as a selected k or a test accuracy.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EmbeddingReport {
    pub fn failed(algo_tag: &str, config: BTreeMap<String, String>, runtime_seconds: f64, error: String) -> Self {
        Self {
            status: "failed".into(),
            algo_tag: algo_tag.into(),
            trustworthiness: None,
            continuity: None,
            rho: None,
            one_minus_rho_sq: None,
            runtime_seconds,
            quality_k: 0,
            config,
            extra: BTreeMap::new(),
            error: Some(error),
        }
    }
}

/// Default neighborhood for the quality scores: 12, shrunk for small n.
pub fn default_quality_k(n: usize) -> usize {
    12.min(n.saturating_sub(1) / 2).max(1)
}

pub fn evaluate(
    data: ArrayView2<f64>,
    embedding: ArrayView2<f64>,
    algo_tag: &str,
    k: usize,
    max_pairs: usize,
    seed: u64,
) -> Result<EmbeddingReport> {
    let rho = rho_projection(data, embedding, max_pairs, seed)?;
    let (t, c) = if 2 * k < data.nrows() {
        (Some(trustworthiness(data, embedding, k)?), Some(continuity(data, embedding, k)?))
    } else {
        (None, None)
    };
    Ok(EmbeddingReport {
        status: "ok".into(),
        algo_tag: algo_tag.into(),
        trustworthiness: t,
        continuity: c,
        rho: Some(rho.rho),
        one_minus_rho_sq: Some(rho.one_minus_rho_sq),
        runtime_seconds: 0.0,
        quality_k: k,
        config: BTreeMap::new(),
        extra: BTreeMap::new(),
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn correlation_basics() {
        let d = DataMatrix::from_values(array![[1.0, -1.0, 3.0], [2.0, -2.0, 1.0], [3.0, -3.0, 2.0]]).unwrap();
        let c = correlation_matrix(&d).unwrap();
        assert_eq!(c[[0, 0]], 1.0);
        assert!((c[[0, 1]] + 1.0).abs() < 1e-12);
        assert_eq!(c[[0, 2]], c[[2, 0]]);
        let focus = focus_correlations(d.feature_names(), &c, "V1").unwrap();
        assert_eq!(focus[0].0, "V2");
    }

    #[test]
    fn constant_feature_rejected() {
        let d = DataMatrix::from_values(array![[1.0, 5.0], [2.0, 5.0]]).unwrap();
        assert!(matches!(correlation_matrix(&d), Err(Error::ConstantFeature(_))));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_trustworthy() {
        let x = array![[0.0, 0.0], [1.0, 0.3], [2.0, 1.0], [0.5, 2.0], [3.0, 3.0], [4.0, 0.0], [1.5, 1.5]];
        assert!((trustworthiness(x.view(), x.view(), 2).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(trustworthiness(x.view(), x.view(), 4), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn isometric_rho() {
        let x = array![[0.0, 0.0], [1.0, 0.3], [2.0, 1.0], [0.5, 2.0]];
        let rot = x.dot(&array![[0.0, 1.0], [-1.0, 0.0]]) + 5.0;
        let r = rho_projection(x.view(), rot.view(), 100, 0).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-8 && r.one_minus_rho_sq.abs() < 1e-8);
        assert_eq!(r.pairs, 6);
    }
}
