//! Self-organizing maps on a rectangular lattice, plus k-means and fuzzy
//! c-means clustering of the trained codes.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::data::{DataMatrix, RngStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    pub rows: usize,
    pub cols: usize,
    /// (rows·cols)×p code vectors; node index = row·cols + col.
    pub codes: Array2<f64>,
    /// Lattice coordinates (row, col) per node.
    pub node_xy: Array2<f64>,
}

impl SomGrid {
    pub fn new(rows: usize, cols: usize, codes: Array2<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("lattice must be at least 1x1".into()));
        }
        if codes.nrows() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: codes.nrows(),
            });
        }
        if codes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("codes must be finite".into()));
        }
        let node_xy = Array2::from_shape_fn((rows * cols, 2), |(i, c)| if c == 0 { (i / cols) as f64 } else { (i % cols) as f64 });
        Ok(Self {
            rows,
            cols,
            codes,
            node_xy,
        })
    }

    /// Codes drawn from distinct data rows (with replacement only when the
    /// lattice has more nodes than the data has rows).
    pub fn from_data(rows: usize, cols: usize, data: ArrayView2<f64>, seed: u64) -> Result<Self> {
        let nodes = rows * cols;
        let n = data.nrows();
        if n == 0 {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let mut rng = RngStream::new(seed);
        let picks: Vec<usize> = if nodes <= n {
            index::sample(&mut rng, n, nodes).into_vec()
        } else {
            (0..nodes).map(|_| rng.random_range(0..n)).collect()
        };
        let codes = Array2::from_shape_fn((nodes, data.ncols()), |(i, j)| data[[picks[i], j]]);
        Self::new(rows, cols, codes)
    }

    pub fn n_nodes(&self) -> usize {
        self.codes.nrows()
    }

    /// Half the lattice diagonal, at least 1.
    pub fn default_radius(&self) -> f64 {
        let r = (self.rows - 1) as f64;
        let c = (self.cols - 1) as f64;
        (0.5 * (r * r + c * c).sqrt()).max(1.0)
    }

    pub fn write_codes_csv<W: Write>(&self, feature_names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node_row".to_string(), "node_col".to_string()];
        header.extend(feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, code) in self.codes.rows().into_iter().enumerate() {
            let mut rec = vec![(i / self.cols).to_string(), (i % self.cols).to_string()];
            rec.extend(code.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best matching unit: the node whose code is nearest `x` (lowest index on ties).
pub fn find_bmu(grid: &SomGrid, x: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, code) in grid.codes.rows().into_iter().enumerate() {
        let d = sq_dist(code, x);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Gaussian cooperation `exp(−d²/2σ²)` over lattice distance.
pub fn neighborhood_factor(grid: &SomGrid, bmu: usize, node: usize, sigma: f64) -> f64 {
    let d2 = sq_dist(grid.node_xy.row(bmu), grid.node_xy.row(node));
    (-d2 / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomConfig {
    /// Passes over the data.
    pub rlen: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// `None` uses half the lattice diagonal.
    pub radius_start: Option<f64>,
    pub radius_end: f64,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            rlen: 100,
            alpha_start: 0.1,
            alpha_end: 0.001,
            radius_start: None,
            radius_end: 1e-3,
            seed: 0,
        }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha_end && self.alpha_end <= self.alpha_start && self.alpha_start < 1.0) {
            return Err(Error::InvalidArgument("need 0 < alpha_end <= alpha_start < 1".into()));
        }
        if !(self.radius_end > 0.0) || self.radius_start.is_some_and(|r| !(r >= self.radius_end)) {
            return Err(Error::InvalidArgument("need radius_start >= radius_end > 0".into()));
        }
        if self.rlen == 0 {
            return Err(Error::InvalidArgument("rlen must be >= 1".into()));
        }
        Ok(())
    }
}

/// `start·exp(−t/V)` with `V = t_end / ln(start/end)`, so the schedule
/// passes through `start` at t = 0 and `end` at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecay {
    pub start: f64,
    pub end: f64,
    pub t_end: f64,
}

impl ExpDecay {
    pub fn time_constant(&self) -> f64 {
        let ratio = (self.start / self.end).ln();
        if self.t_end <= 0.0 || ratio <= 0.0 {
            f64::INFINITY
        } else {
            self.t_end / ratio
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.start * (-t / self.time_constant()).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomTrace {
    /// Mean distance of each presented observation to its BMU, per pass.
    pub mean_bmu_distance: Vec<f64>,
}

impl SomTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_bmu_distance"])?;
        for (i, d) in self.mean_bmu_distance.iter().enumerate() {
            w.write_record([(i + 1).to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Moves every code toward `x` by `alpha·h(bmu, j)`.
pub fn update_codes(grid: &mut SomGrid, x: ArrayView1<f64>, bmu: usize, alpha: f64, sigma: f64) {
    for j in 0..grid.n_nodes() {
        let h = neighborhood_factor(grid, bmu, j, sigma);
        let step = alpha * h;
        if step == 0.0 {
            continue;
        }
        let mut code = grid.codes.row_mut(j);
        for (w, xv) in code.iter_mut().zip(x) {
            *w += step * (xv - *w);
        }
    }
}

/// Online training: `rlen` shuffled passes, decaying learning rate and
/// neighborhood radius on the same exponential schedule.
pub fn som_train(data: ArrayView2<f64>, grid0: &SomGrid, cfg: &SomConfig) -> Result<(SomGrid, SomTrace)> {
    cfg.validate()?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if data.ncols() != grid0.codes.ncols() {
        return Err(Error::DimensionMismatch {
            expected: grid0.codes.ncols(),
            got: data.ncols(),
        });
    }
    let mut grid = grid0.clone();
    let t_end = (cfg.rlen * n - 1) as f64;
    let alpha = ExpDecay {
        start: cfg.alpha_start,
        end: cfg.alpha_end,
        t_end,
    };
    let radius = ExpDecay {
        start: cfg.radius_start.unwrap_or_else(|| grid.default_radius()),
        end: cfg.radius_end,
        t_end,
    };
    let mut rng = RngStream::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.rlen);
    let mut t = 0usize;
    for _ in 0..cfg.rlen {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let x = data.row(i);
            let bmu = find_bmu(&grid, x);
            total += sq_dist(grid.codes.row(bmu), x).sqrt();
            update_codes(&mut grid, x, bmu, alpha.at(t as f64), radius.at(t as f64));
            t += 1;
        }
        trace.push(total / n as f64);
    }
    Ok((grid, SomTrace { mean_bmu_distance: trace }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub assignments: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Mapping {
    pub fn write_csv<W: Write>(&self, grid: &SomGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row_id", "node", "node_row", "node_col"])?;
        for (i, &node) in self.assignments.iter().enumerate() {
            w.write_record([
                i.to_string(),
                node.to_string(),
                (node / grid.cols).to_string(),
                (node % grid.cols).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn map_observations(grid: &SomGrid, data: ArrayView2<f64>) -> Mapping {
    let assignments: Vec<usize> = data.rows().into_iter().map(|x| find_bmu(grid, x)).collect();
    let mut counts = vec![0; grid.n_nodes()];
    for &a in &assignments {
        counts[a] += 1;
    }
    Mapping { assignments, counts }
}

/// Convenience: map a data matrix onto a trained grid.
pub fn map_matrix(grid: &SomGrid, data: &DataMatrix) -> Result<Mapping> {
    Ok(map_observations(grid, data.complete_values()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub within_ss: f64,
    /// How many times an emptied cluster was re-seeded at the farthest point.
    pub empty_resolved: usize,
}

pub const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITER: usize = 300;

fn within_ss(points: ArrayView2<f64>, centers: &Array2<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centers.row(c)))
        .sum()
}

fn kmeans_once(points: ArrayView2<f64>, k: usize, rng: &mut RngStream) -> KMeansResult {
    let (n, p) = points.dim();
    // k-means++ seeding
    let mut centers = Array2::zeros((k, p));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut empty_resolved = 0;
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(points.row(i), centers.row(a)).total_cmp(&sq_dist(points.row(i), centers.row(b)))
                })
                .expect("k >= 1");
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros((k, p));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &points.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed at the point farthest from its own center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points.row(a), centers.row(labels[a]))
                            .total_cmp(&sq_dist(points.row(b), centers.row(labels[b])))
                    })
                    .expect("n >= 1");
                centers.row_mut(c).assign(&points.row(far));
                labels[far] = c;
                empty_resolved += 1;
                changed = true;
            } else {
                let mean = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    let within = within_ss(points, &centers, &labels);
    KMeansResult {
        labels,
        centers,
        within_ss: within,
        empty_resolved,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of
/// [`KMEANS_RESTARTS`] restarts by within-cluster sum of squares.
pub fn kmeans(points: ArrayView2<f64>, n_clusters: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::InvalidArgument(format!("n_clusters must be in 1..={n}")));
    }
    let mut rng = RngStream::new(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let r = kmeans_once(points, n_clusters, &mut rng);
        if best.as_ref().is_none_or(|b| r.within_ss < b.within_ss) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans_codes(grid: &SomGrid, n_clusters: usize, seed: u64) -> Result<KMeansResult> {
    kmeans(grid.codes.view(), n_clusters, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    /// nodes×clusters, rows sum to 1.
    pub memberships: Array2<f64>,
    pub centers: Array2<f64>,
    pub iterations: usize,
}

const FCM_TOL: f64 = 1e-6;
const FCM_MAX_ITER: usize = 500;

/// Fuzzy memberships of `points` to fixed `centers`. A point that sits
/// exactly on one or more centers is split evenly among those.
pub fn fcm_memberships(points: ArrayView2<f64>, centers: ArrayView2<f64>, m: f64) -> Array2<f64> {
    let (n, c) = (points.nrows(), centers.nrows());
    let exponent = 1.0 / (m - 1.0);
    let mut u = Array2::zeros((n, c));
    for i in 0..n {
        let d2: Vec<f64> = (0..c).map(|k| sq_dist(points.row(i), centers.row(k))).collect();
        let zeros: Vec<usize> = (0..c).filter(|&k| d2[k] == 0.0).collect();
        if !zeros.is_empty() {
            for &k in &zeros {
                u[[i, k]] = 1.0 / zeros.len() as f64;
            }
            continue;
        }
        // u_ik = 1 / Σ_j (d_ik / d_ij)^{2/(m−1)}, written with squared distances
        for k in 0..c {
            let s: f64 = (0..c).map(|j| (d2[k] / d2[j]).powf(exponent)).sum();
            u[[i, k]] = 1.0 / s;
        }
    }
    u
}

/// Fuzzy c-means with alternating center and membership updates.
pub fn fcm(points: ArrayView2<f64>, n_clusters: usize, m: f64, seed: u64) -> Result<FcmResult> {
    let (n, p) = points.dim();
    if n_clusters < 2 || n_clusters > n {
        return Err(Error::InvalidArgument(format!("n_clusters must be in 2..={n}")));
    }
    if !(m > 1.0) {
        return Err(Error::InvalidArgument("fuzzifier must exceed 1".into()));
    }
    let mut rng = RngStream::new(seed);
    let mut u = Array2::from_shape_fn((n, n_clusters), |_| rng.random::<f64>() + 1e-3);
    for mut row in u.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut centers = Array2::<f64>::zeros((n_clusters, p));
    let mut iterations = 0;
    for it in 0..FCM_MAX_ITER {
        iterations = it + 1;
        let mut next = Array2::<f64>::zeros((n_clusters, p));
        for k in 0..n_clusters {
            let mut wsum = 0.0;
            for i in 0..n {
                let w = u[[i, k]].powf(m);
                next.row_mut(k).scaled_add(w, &points.row(i));
                wsum += w;
            }
            if wsum > 0.0 {
                next.row_mut(k).mapv_inplace(|v| v / wsum);
            }
        }
        let drift = (0..n_clusters)
            .map(|k| sq_dist(next.row(k), centers.row(k)).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        u = fcm_memberships(points, centers.view(), m);
        if it > 0 && drift < FCM_TOL {
            break;
        }
    }
    Ok(FcmResult {
        memberships: u,
        centers,
        iterations,
    })
}

pub fn fcm_codes(grid: &SomGrid, n_clusters: usize, m: f64, seed: u64) -> Result<FcmResult> {
    fcm(grid.codes.view(), n_clusters, m, seed)
}
