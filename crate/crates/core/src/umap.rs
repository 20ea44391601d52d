//! Uniform manifold approximation and projection.
//!
//! Builds a fuzzy graph from smoothed kNN distances, symmetrizes it with
//! the probabilistic union, and lays it out by stochastic gradient descent
//! on the binary cross-entropy between graph memberships and the
//! low-dimensional similarity curve `1 / (1 + a·d^{2b})`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::data::{DataMatrix, Embedding, RngStream};
use crate::error::{Error, Result};
use crate::neighbors::{knn_points, Metric, NeighborGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct UmapConfig {
    pub k: usize,
    pub epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub d: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            k: 15,
            epochs: 200,
            min_dist: 0.1,
            spread: 1.0,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            d: 2,
            seed: 0,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || self.k >= n {
            return Err(Error::KTooLarge { k: self.k, n });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.spread > 0.0) || !(self.min_dist >= 0.0) {
            return Err(Error::InvalidArgument("need spread > 0 and min_dist >= 0".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        Ok(())
    }
}

/// Smoothed memberships of one point's neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothKnnRow {
    /// Distance to the nearest neighbor.
    pub rho: f64,
    /// Bandwidth; zero for degenerate rows.
    pub sigma: f64,
    pub memberships: Vec<f64>,
    /// Ties at `rho` already exceed the `log2(k)` target, so no bandwidth
    /// solves it; memberships are 1 on the ties and 0 elsewhere.
    pub degenerate: bool,
}

const SMOOTH_KNN_ITERS: usize = 64;
const SMOOTH_KNN_TOL: f64 = 1e-6;

/// Solves `Σⱼ exp(−max(0, dⱼ − ρ)/σ) = log2(k)` for σ by bisection,
/// where `distances` are one row's k neighbor distances in ascending order.
pub fn smooth_knn(distances: &[f64]) -> SmoothKnnRow {
    let k = distances.len();
    let target = (k as f64).log2();
    let rho = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let gaps: Vec<f64> = distances.iter().map(|d| (d - rho).max(0.0)).collect();
    let ties = gaps.iter().filter(|g| **g == 0.0).count();
    if ties as f64 >= target + SMOOTH_KNN_TOL {
        return SmoothKnnRow {
            rho,
            sigma: 0.0,
            memberships: gaps.iter().map(|g| if *g == 0.0 { 1.0 } else { 0.0 }).collect(),
            degenerate: true,
        };
    }
    let sum_at = |sigma: f64| gaps.iter().map(|g| (-g / sigma).exp()).sum::<f64>();
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SMOOTH_KNN_ITERS {
        let s = sum_at(mid);
        if (s - target).abs() < SMOOTH_KNN_TOL {
            break;
        }
        if s > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
        }
    }
    SmoothKnnRow {
        rho,
        sigma: mid,
        memberships: gaps.iter().map(|g| (-g / mid).exp()).collect(),
        degenerate: false,
    }
}

/// Probabilistic t-conorm `a + b − a·b`.
#[inline]
pub fn fuzzy_union_pair(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Symmetric graph with memberships in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    rows: Vec<Vec<(usize, f64)>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl FuzzyGraph {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |pos| self.rows[i][pos].1)
    }

    /// Undirected edges `(i, j, μ)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |e| e.0 > i).map(move |&(j, w)| (i, j, w)))
            .collect()
    }
}

/// Symmetrizes directed memberships; `directed[i]` lists `(j, x_{j|i})`.
pub fn fuzzy_union(directed: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    let n = directed.len();
    let lookup = |i: usize, j: usize| directed[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in directed.iter().enumerate() {
        for &(j, a) in row {
            if j == i {
                continue;
            }
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            if rows[lo].iter().any(|e| e.0 == hi) {
                continue;
            }
            let b = lookup(j, i);
            let mu = if i < j { fuzzy_union_pair(a, b) } else { fuzzy_union_pair(b, a) };
            if mu > 0.0 {
                rows[lo].push((hi, mu));
                rows[hi].push((lo, mu));
            }
        }
    }
    for row in &mut rows {
        row.sort_by_key(|e| e.0);
    }
    rows
}

pub fn fuzzy_graph(knn: &NeighborGraph) -> FuzzyGraph {
    let smoothed: Vec<SmoothKnnRow> = (0..knn.n_rows())
        .into_par_iter()
        .map(|i| smooth_knn(knn.distances.row(i).as_slice().expect("row-major")))
        .collect();
    let directed: Vec<Vec<(usize, f64)>> = smoothed
        .iter()
        .enumerate()
        .map(|(i, s)| knn.indices.row(i).iter().copied().zip(s.memberships.iter().copied()).collect())
        .collect();
    FuzzyGraph {
        rows: fuzzy_union(&directed),
        rho: smoothed.iter().map(|s| s.rho).collect(),
        sigma: smoothed.iter().map(|s| s.sigma).collect(),
        degenerate: smoothed.iter().map(|s| s.degenerate).collect(),
    }
}

const CE_CLAMP: f64 = 1e-12;

/// Σ over edges of the attractive term `x_h·ln(x_h/x_l)` plus the
/// repulsive term `(1−x_h)·ln((1−x_h)/(1−x_l))`.
pub fn cross_entropy(high: &[f64], low: &[f64]) -> f64 {
    high.iter()
        .zip(low)
        .map(|(&h, &l)| {
            let h = h.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            let l = l.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            h * (h / l).ln() + (1.0 - h) * ((1.0 - h) / (1.0 - l)).ln()
        })
        .sum()
}

/// Low-dimensional membership `1 / (1 + a·d^{2b})` for squared distance `d2`.
#[inline]
pub fn low_membership(d2: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * d2.powf(b))
}

/// Cross-entropy of an embedding against the graph, over its edges.
pub fn graph_cross_entropy(graph: &FuzzyGraph, y: ArrayView2<f64>, a: f64, b: f64) -> f64 {
    let (high, low): (Vec<f64>, Vec<f64>) = graph
        .edges()
        .into_iter()
        .map(|(i, j, w)| {
            let d2: f64 = y.row(i).iter().zip(y.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            (w, low_membership(d2, a, b))
        })
        .unzip();
    cross_entropy(&high, &low)
}

fn target_curve(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x < min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

/// Least-squares fit of `(a, b)` so that `1/(1 + a·x^{2b})` follows the
/// `min_dist`/`spread` target curve on `[0, 3·spread]`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target_curve(x, min_dist, spread)).collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    // Levenberg–Marquardt from (1, 1)
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let xp = x.powf(2.0 * b);
            let denom = 1.0 + a * xp;
            let r = 1.0 / denom - y;
            let ja = -xp / (denom * denom);
            let jb = -a * xp * 2.0 * x.ln() / (denom * denom);
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + da, b + db);
            let c = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
            if c < cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                a = na;
                b = nb;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone)]
pub struct UmapResult {
    pub embedding: Embedding,
    pub graph: FuzzyGraph,
    pub a: f64,
    pub b: f64,
}

#[inline]
fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

/// Edge-sampled SGD layout of a fuzzy graph starting from `y`.
pub fn optimize_layout(graph: &FuzzyGraph, y: &mut Array2<f64>, cfg: &UmapConfig, a: f64, b: f64, rng: &mut RngStream) -> Result<()> {
    let n = graph.n();
    let d = y.ncols();
    let max_w = graph.rows.iter().flatten().map(|e| e.1).fold(0.0f64, f64::max);
    if max_w <= 0.0 {
        return Ok(());
    }
    let cutoff = max_w / cfg.epochs as f64;
    let edges: Vec<(usize, usize, f64)> = graph
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
        .filter(|e| e.2 >= cutoff)
        .collect();
    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate.max(f64::MIN_POSITIVE)).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut delta = vec![0.0; d];
    for epoch in 0..cfg.epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64);
        let now = epoch as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2: f64 = (0..d).map(|c| (y[[i, c]] - y[[j, c]]).powi(2)).sum();
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b))
            } else {
                0.0
            };
            for c in 0..d {
                delta[c] = clip(coeff * (y[[i, c]] - y[[j, c]])) * alpha;
            }
            for c in 0..d {
                y[[i, c]] += delta[c];
                y[[j, c]] -= delta[c];
            }
            next_sample[e] += epochs_per_sample[e];

            if cfg.negative_sample_rate > 0 {
                let n_neg = ((now - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.random_range(0..n);
                    if k == i {
                        continue;
                    }
                    let d2: f64 = (0..d).map(|c| (y[[i, c]] - y[[k, c]]).powi(2)).sum();
                    let coeff = if d2 > 0.0 {
                        2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)))
                    } else {
                        0.0
                    };
                    for c in 0..d {
                        let g = if coeff > 0.0 { clip(coeff * (y[[i, c]] - y[[k, c]])) } else { 4.0 };
                        y[[i, c]] += g * alpha;
                    }
                }
                next_negative[e] += n_neg as f64 * epochs_per_negative[e];
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDivergence(format!("non-finite coordinate in epoch {epoch}")));
        }
    }
    Ok(())
}

pub fn umap_run(data: &DataMatrix, cfg: &UmapConfig) -> Result<UmapResult> {
    let x = data.complete_values()?;
    let n = x.nrows();
    cfg.validate(n)?;
    let knn = knn_points(x, cfg.k, Metric::Euclidean)?;
    let graph = fuzzy_graph(&knn);
    let (a, b) = fit_ab(cfg.min_dist, cfg.spread);
    let mut rng = RngStream::new(cfg.seed);
    let mut y = Array2::from_shape_fn((n, cfg.d), |_| rng.random_range(-10.0..10.0));
    optimize_layout(&graph, &mut y, cfg, a, b, &mut rng)?;
    Ok(UmapResult {
        embedding: Embedding::new(y, "umap")?,
        graph,
        a,
        b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_has_full_membership() {
        let r = smooth_knn(&[0.5, 0.9, 1.4, 2.0, 2.2]);
        assert_eq!(r.memberships[0], 1.0);
        assert!(!r.degenerate);
        assert!((r.memberships.iter().sum::<f64>() - 5f64.log2()).abs() < 1e-4);
    }

    #[test]
    fn equal_distances_are_degenerate() {
        let r = smooth_knn(&[1.0; 4]);
        assert!(r.degenerate);
        assert!(r.memberships.iter().all(|m| *m == 1.0));
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union_pair(1.0, 0.5), 1.0);
        assert_eq!(fuzzy_union_pair(0.5, 0.5), 0.75);
        assert_eq!(fuzzy_union_pair(0.3, 0.0), 0.3);
        let rows = fuzzy_union(&[vec![(1, 0.5)], vec![(0, 0.5), (2, 1.0)], vec![]]);
        assert_eq!(rows[0], vec![(1, 0.75)]);
        assert_eq!(rows[2], vec![(1, 1.0)]);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(&[0.3, 0.9], &[0.3, 0.9]).abs() < 1e-12);
        assert!((cross_entropy(&[1.0], &[0.5]) - 2f64.ln()).abs() < 1e-9);
        assert!(cross_entropy(&[0.2, 0.7, 1.0], &[0.9, 0.1, 0.4]) > 0.0);
    }

    #[test]
    fn validate_bounds() {
        let cfg = UmapConfig {
            k: 1,
            ..Default::default()
        };
        assert!(cfg.validate(10).is_err());
        let cfg = UmapConfig {
            k: 10,
            ..Default::default()
        };
        assert!(cfg.validate(10).is_err());
    }
}
