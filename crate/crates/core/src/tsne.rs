//! t-distributed stochastic neighbor embedding.
//!
//! Input affinities come from per-point Gaussian kernels whose bandwidth is
//! calibrated to a target perplexity; the embedding uses a Student-t
//! kernel and is optimized by momentum gradient descent on the KL
//! divergence. `theta = 0` uses the exact O(n²) gradient; `theta > 0` uses
//! a Barnes–Hut quadtree for the repulsive forces and restricts input
//! affinities to the `3·perplexity` nearest neighbors.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::{DataMatrix, Embedding, RngStream};
use crate::error::{Error, Result};
use crate::neighbors::{knn_points, Metric};

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub theta: f64,
    pub max_iter: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub d: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            theta: 0.5,
            max_iter: 1000,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            d: 2,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity > 0.0) {
            return Err(Error::InvalidArgument("perplexity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument("theta must be in [0, 1]".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        if self.theta > 0.0 && self.d != 2 {
            return Err(Error::InvalidArgument("Barnes-Hut (theta > 0) needs d = 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if n >= 1 && self.perplexity >= (n as f64 - 1.0) / 3.0 {
            log::warn!("perplexity {} is large for n = {n}", self.perplexity);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub conditionals: Vec<f64>,
    pub iterations: usize,
}

const MAX_CALIBRATION_ITERS: usize = 64;
const PERPLEXITY_TOL: f64 = 1e-7;

/// Finds the Gaussian bandwidth for one point whose conditional
/// distribution over `distances` has the requested perplexity.
pub fn perplexity_calibration(distances: &[f64], perplexity: f64) -> Result<Calibration> {
    if distances.len() < 2 || distances.iter().any(|d| !d.is_finite()) || !(perplexity > 0.0) {
        return Err(Error::CalibrationFailure(0));
    }
    let min_sq = distances.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = distances.iter().map(|d| d * d - min_sq).collect();
    let target = perplexity.ln();

    // entropy in nats at log-bandwidth `ln_sigma`
    let entropy = |ln_sigma: f64, out: &mut Vec<f64>| -> f64 {
        let beta = 0.5 * (-2.0 * ln_sigma).exp();
        out.clear();
        out.extend(shifted.iter().map(|s| (-s * beta).exp()));
        let sum: f64 = out.iter().sum();
        let weighted: f64 = out.iter().zip(&shifted).map(|(p, s)| p * s).sum();
        for p in out.iter_mut() {
            *p /= sum;
        }
        sum.ln() + beta * weighted / sum
    };

    let (mut lo, mut hi) = (1e-20f64.ln(), 1e20f64.ln());
    let mut probs = Vec::with_capacity(shifted.len());
    let h_lo = entropy(lo, &mut probs);
    let h_hi = entropy(hi, &mut probs);
    let tol = PERPLEXITY_TOL / perplexity;
    if target < h_lo - tol || target > h_hi + tol {
        return Err(Error::CalibrationFailure(0));
    }
    let mut mid = 0.0f64.clamp(lo, hi);
    let mut iterations = 0;
    for _ in 0..MAX_CALIBRATION_ITERS {
        iterations += 1;
        let h = entropy(mid, &mut probs);
        if (h - target).abs() < tol {
            break;
        }
        if h > target {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = 0.5 * (lo + hi);
    }
    let _ = entropy(mid, &mut probs);
    Ok(Calibration {
        sigma: mid.exp(),
        conditionals: probs,
        iterations,
    })
}

/// Symmetric joint probabilities, stored as sorted sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

/// Smallest stored joint probability.
pub const AFFINITY_FLOOR: f64 = 1e-12;

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |pos| self.rows[i][pos].1)
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().flatten().map(|e| e.1).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`, floored and renormalized to sum 1.
///
/// `conditionals[i]` lists `(j, p_{j|i})` pairs.
pub fn joint_affinities(conditionals: &[Vec<(usize, f64)>]) -> AffinityMatrix {
    let n = conditionals.len();
    let scale = 1.0 / (2.0 * n as f64);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in conditionals.iter().enumerate() {
        for &(j, v) in row {
            if i == j {
                continue;
            }
            triplets.push((i, j, v * scale));
            triplets.push((j, i, v * scale));
        }
    }
    triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in triplets {
        match rows[i].last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => rows[i].push((j, v)),
        }
    }
    for e in rows.iter_mut().flatten() {
        e.1 = e.1.max(AFFINITY_FLOOR);
    }
    let total: f64 = rows.iter().flatten().map(|e| e.1).sum();
    for e in rows.iter_mut().flatten() {
        e.1 /= total;
    }
    AffinityMatrix { rows }
}

/// Σ p log(p/q) in nats, with 0·log 0 = 0.
pub fn kl_between(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

#[inline]
fn sq_dist(y: &[f64], d: usize, i: usize, j: usize) -> f64 {
    y[i * d..(i + 1) * d].iter().zip(&y[j * d..(j + 1) * d]).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Exact KL(P‖Q) with Q the normalized Student-t kernel over all pairs.
pub fn kl_divergence(p: &AffinityMatrix, y: ArrayView2<f64>) -> f64 {
    let (_, z) = repulsion_exact(y);
    kl_from_parts(p, y, z)
}

/// KL using a known normalizer `z = Σ_{i≠j} (1 + ‖yᵢ − yⱼ‖²)⁻¹`.
fn kl_from_parts(p: &AffinityMatrix, y: ArrayView2<f64>, z: f64) -> f64 {
    let d = y.ncols();
    let y = y.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let mut kl = 0.0;
    let mut mass = 0.0;
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, pij) in row {
            let q_unnorm = 1.0 / (1.0 + sq_dist(y, d, i, j));
            kl += pij * (pij / q_unnorm).ln();
            mass += pij;
        }
    }
    kl + mass * z.ln()
}

/// Attractive term Σⱼ pᵢⱼ qᵢⱼ' (yᵢ − yⱼ) with unnormalized q'.
fn attraction(p: &AffinityMatrix, y: ArrayView2<f64>) -> Array2<f64> {
    let d = y.ncols();
    let y = y.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let rows: Vec<Vec<f64>> = (0..p.n())
        .into_par_iter()
        .map(|i| {
            let mut f = vec![0.0; d];
            for &(j, pij) in &p.rows[i] {
                let q = 1.0 / (1.0 + sq_dist(y, d, i, j));
                for c in 0..d {
                    f[c] += pij * q * (y[i * d + c] - y[j * d + c]);
                }
            }
            f
        })
        .collect();
    stack(rows, d)
}

fn stack(rows: Vec<Vec<f64>>, d: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("n×d")
}

/// Unnormalized repulsion Σⱼ q'ᵢⱼ² (yᵢ − yⱼ) and the normalizer Z.
fn repulsion_exact(y: ArrayView2<f64>) -> (Array2<f64>, f64) {
    let (n, d) = y.dim();
    let y = y.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut f = vec![0.0; d];
            let mut z = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let q = 1.0 / (1.0 + sq_dist(y, d, i, j));
                z += q;
                for c in 0..d {
                    f[c] += q * q * (y[i * d + c] - y[j * d + c]);
                }
            }
            (f, z)
        })
        .collect();
    let z = rows.iter().map(|r| r.1).sum();
    (stack(rows.into_iter().map(|r| r.0).collect(), d), z)
}

fn combine(attr: Array2<f64>, rep: Array2<f64>, z: f64, exaggeration: f64) -> Array2<f64> {
    (attr * exaggeration - rep / z) * 4.0
}

/// Exact gradient of KL(exaggeration·P ‖ Q) with respect to the embedding.
pub fn gradient_exact(p: &AffinityMatrix, y: ArrayView2<f64>, exaggeration: f64) -> Array2<f64> {
    let (rep, z) = repulsion_exact(y);
    combine(attraction(p, y), rep, z, exaggeration)
}

/// Barnes–Hut approximation of [`gradient_exact`] (2-D embeddings only).
pub fn gradient_barnes_hut(p: &AffinityMatrix, y: ArrayView2<f64>, theta: f64, exaggeration: f64) -> Array2<f64> {
    let tree = QuadTree::build(y);
    let (rep, z) = tree.repulsion(y, theta);
    combine(attraction(p, y), rep, z, exaggeration)
}

const MAX_TREE_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct QuadNode {
    half: f64,
    com: [f64; 2],
    count: usize,
    /// Children occupy `first_child..first_child + 4`; 0 marks a leaf.
    first_child: usize,
    /// Range of this cell's points in `QuadTree::order`.
    lo: usize,
    hi: usize,
}

/// Region quadtree over 2-D points with per-cell centers of mass. Each
/// cell owns a contiguous range of a permutation of the point indices.
#[derive(Debug, Clone)]
struct QuadTree {
    nodes: Vec<QuadNode>,
    order: Vec<usize>,
    pts: Vec<[f64; 2]>,
}

impl QuadTree {
    fn build(y: ArrayView2<f64>) -> Self {
        let pts: Vec<[f64; 2]> = (0..y.nrows()).map(|i| [y[[i, 0]], y[[i, 1]]]).collect();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &pts {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 1e-9) + 1e-12;
        let mut tree = QuadTree {
            nodes: Vec::with_capacity(2 * pts.len() + 1),
            order: (0..pts.len()).collect(),
            pts,
        };
        tree.nodes.push(QuadNode {
            half,
            com: [0.0; 2],
            count: 0,
            first_child: 0,
            lo: 0,
            hi: tree.order.len(),
        });
        tree.split(0, center, 0);
        tree
    }

    fn split(&mut self, idx: usize, center: [f64; 2], depth: usize) {
        let (lo, hi, half) = (self.nodes[idx].lo, self.nodes[idx].hi, self.nodes[idx].half);
        let mut com = [0.0; 2];
        for &j in &self.order[lo..hi] {
            com[0] += self.pts[j][0];
            com[1] += self.pts[j][1];
        }
        let count = hi - lo;
        if count > 0 {
            com = [com[0] / count as f64, com[1] / count as f64];
        }
        self.nodes[idx].com = com;
        self.nodes[idx].count = count;
        let first = self.pts[self.order[lo.min(hi.saturating_sub(1))]];
        let coincident = self.order[lo..hi].iter().all(|&j| self.pts[j] == first);
        if count <= 1 || coincident || depth >= MAX_TREE_DEPTH {
            return;
        }
        let pts = &self.pts;
        let quadrant = |j: usize| usize::from(pts[j][0] > center[0]) + 2 * usize::from(pts[j][1] > center[1]);
        self.order[lo..hi].sort_by_key(|&j| quadrant(j));
        let mut bounds = [hi; 5];
        bounds[0] = lo;
        let mut pos = lo;
        for (q, b) in bounds.iter_mut().enumerate().skip(1) {
            while pos < hi && quadrant(self.order[pos]) < q {
                pos += 1;
            }
            *b = pos;
        }
        let first_child = self.nodes.len();
        self.nodes[idx].first_child = first_child;
        let h = 0.5 * half;
        for q in 0..4 {
            self.nodes.push(QuadNode {
                half: h,
                com: [0.0; 2],
                count: 0,
                first_child: 0,
                lo: bounds[q],
                hi: bounds[q + 1],
            });
        }
        for q in 0..4 {
            let cx = center[0] + if q & 1 == 1 { h } else { -h };
            let cy = center[1] + if q & 2 == 2 { h } else { -h };
            if bounds[q] < bounds[q + 1] {
                self.split(first_child + q, [cx, cy], depth + 1);
            }
        }
    }

    fn repulsion(&self, y: ArrayView2<f64>, theta: f64) -> (Array2<f64>, f64) {
        let n = y.nrows();
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(256),
                |stack: &mut Vec<usize>, i| {
                    let yi = self.pts[i];
                    let mut f = [0.0; 2];
                    let mut z = 0.0;
                    stack.clear();
                    stack.push(0);
                    while let Some(idx) = stack.pop() {
                        let node = &self.nodes[idx];
                        if node.first_child == 0 {
                            for &j in &self.order[node.lo..node.hi] {
                                if j == i {
                                    continue;
                                }
                                let dx = [yi[0] - self.pts[j][0], yi[1] - self.pts[j][1]];
                                let q = 1.0 / (1.0 + dx[0] * dx[0] + dx[1] * dx[1]);
                                z += q;
                                f[0] += q * q * dx[0];
                                f[1] += q * q * dx[1];
                            }
                            continue;
                        }
                        let dx = [yi[0] - node.com[0], yi[1] - node.com[1]];
                        let d2 = dx[0] * dx[0] + dx[1] * dx[1];
                        if d2 > 0.0 && 2.0 * node.half < theta * d2.sqrt() {
                            let q = 1.0 / (1.0 + d2);
                            let m = node.count as f64;
                            z += m * q;
                            f[0] += m * q * q * dx[0];
                            f[1] += m * q * q * dx[1];
                        } else {
                            let first = node.first_child;
                            stack.extend((first..first + 4).filter(|&c| self.nodes[c].count > 0));
                        }
                    }
                    (f.to_vec(), z)
                },
            )
            .collect();
        let z = rows.iter().map(|r| r.1).sum();
        (stack(rows.into_iter().map(|r| r.0).collect(), 2), z)
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Embedding,
    /// KL(P‖Q) before each update, against the unexaggerated P.
    pub kl_trace: Vec<f64>,
    pub affinities: AffinityMatrix,
}

impl TsneResult {
    pub fn write_kl_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "kl"])?;
        for (i, kl) in self.kl_trace.iter().enumerate() {
            w.write_record([(i + 1).to_string(), kl.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Input affinities for `points`: exact (all pairs) when `theta == 0`,
/// otherwise over the `3·perplexity` nearest neighbors.
pub fn input_affinities(points: ArrayView2<f64>, perplexity: f64, theta: f64) -> Result<AffinityMatrix> {
    let n = points.nrows();
    let k = if theta > 0.0 {
        ((3.0 * perplexity).floor() as usize).clamp(1, n - 1)
    } else {
        n - 1
    };
    let graph = knn_points(points, k, Metric::Euclidean)?;
    let conditionals: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = graph.distances.row(i).to_vec();
            let cal = perplexity_calibration(&d, perplexity).map_err(|_| Error::CalibrationFailure(i))?;
            Ok(graph.indices.row(i).iter().copied().zip(cal.conditionals).collect())
        })
        .collect::<Result<_>>()?;
    Ok(joint_affinities(&conditionals))
}

pub fn tsne_run(data: &DataMatrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let x = data.complete_values()?;
    let n = x.nrows();
    if n < 4 {
        return Err(Error::TooFewRows { needed: 4, got: n });
    }
    cfg.validate(n)?;
    let p = input_affinities(x, cfg.perplexity, cfg.theta)?;

    let mut rng = RngStream::new(cfg.seed);
    let d = cfg.d;
    let mut y = Array2::from_shape_fn((n, d), |_| 1e-4 * rng.normal());
    let mut velocity = Array2::<f64>::zeros((n, d));
    let mut gains = Array2::<f64>::ones((n, d));
    let mut kl_trace = Vec::with_capacity(cfg.max_iter);

    for iter in 0..cfg.max_iter {
        let exaggeration = if iter < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if iter < cfg.momentum_switch_iter { cfg.momentum } else { cfg.final_momentum };
        let (rep, z) = if cfg.theta > 0.0 {
            QuadTree::build(y.view()).repulsion(y.view(), cfg.theta)
        } else {
            repulsion_exact(y.view())
        };
        let kl = kl_from_parts(&p, y.view(), z);
        if !kl.is_finite() {
            return Err(Error::NumericalDivergence(format!("KL is {kl} at iteration {iter}")));
        }
        kl_trace.push(kl);
        let grad = combine(attraction(&p, y.view()), rep, z, exaggeration);

        for ((g, v), gain) in grad.iter().zip(velocity.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*v > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            *v = momentum * *v - cfg.learning_rate * *gain * g;
        }
        y += &velocity;
        let mean = y.mean_axis(Axis(0)).expect("n >= 4");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDivergence(format!("non-finite coordinate at iteration {iter}")));
        }
    }
    Ok(TsneResult {
        embedding: Embedding::new(y, "tsne")?,
        kl_trace,
        affinities: p,
    })
}
