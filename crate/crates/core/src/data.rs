//! Shared data model: numeric tables, embeddings, seeded random streams,
//! standardization, train/test/validation splits and synthetic datasets.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// An n×p table of reals with feature names and a per-cell missing mask.
///
/// Missing cells hold `NaN` in `values`; every observed cell is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    feature_names: Vec<String>,
    missing: Array2<bool>,
}

impl DataMatrix {
    /// Builds a complete matrix. Every cell must be finite.
    pub fn new(values: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        let missing = Array2::from_elem(values.raw_dim(), false);
        Self::with_missing(values, feature_names, missing)
    }

    /// Builds a matrix with default names `V1..Vp`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("V{j}")).collect();
        Self::new(values, names)
    }

    pub fn with_missing(mut values: Array2<f64>, feature_names: Vec<String>, missing: Array2<bool>) -> Result<Self> {
        let (n, p) = values.dim();
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!("empty data matrix ({n}x{p})")));
        }
        if feature_names.len() != p {
            return Err(Error::LengthMismatch {
                left: feature_names.len(),
                right: p,
            });
        }
        if missing.dim() != (n, p) {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: missing.len(),
            });
        }
        for ((i, j), v) in values.indexed_iter_mut() {
            if missing[[i, j]] {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at row {i}, column `{}`",
                    feature_names[j]
                )));
            }
        }
        Ok(Self {
            values,
            feature_names,
            missing,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn missing_mask(&self) -> ArrayView2<'_, bool> {
        self.missing.view()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[[row, col]]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Returns the values, failing if any cell is missing.
    pub fn complete_values(&self) -> Result<ArrayView2<'_, f64>> {
        if self.has_missing() {
            return Err(Error::MissingData);
        }
        Ok(self.values.view())
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            missing: self.missing.select(Axis(0), rows),
        }
    }
}

/// n×d coordinates produced by a reduction algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: Array2<f64>,
    labels: Option<Vec<u32>>,
    algo_tag: String,
}

impl Embedding {
    pub fn new(coords: Array2<f64>, algo_tag: impl Into<String>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding needs d >= 1".into()));
        }
        if let Some(((i, j), _)) = coords.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NumericalDivergence(format!("non-finite coordinate at ({i}, {j})")));
        }
        Ok(Self {
            coords,
            labels: None,
            algo_tag: algo_tag.into(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.coords.nrows() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: self.coords.nrows(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn into_coords(self) -> Array2<f64> {
        self.coords
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn algo_tag(&self) -> &str {
        &self.algo_tag
    }

    pub fn n_rows(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Seeded pseudo-random stream. Every module draws from this one generator
/// family (ChaCha8), so a seed reproduces a run on any platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for worker `index`.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::new(derive_seed(self.seed, index))
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mixes a base seed with an index (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Centers every column and divides by its sample (n−1) standard deviation.
///
/// Returns the transformed matrix together with the centers and scales.
pub fn standardize(data: &DataMatrix) -> Result<(DataMatrix, Array1<f64>, Array1<f64>)> {
    let x = data.complete_values()?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let centers = x.mean_axis(Axis(0)).expect("n >= 2");
    let scales = x.std_axis(Axis(0), 1.0);
    for (j, &s) in scales.iter().enumerate() {
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::ConstantFeature(data.feature_names[j].clone()));
        }
    }
    let z = (&x - &centers) / &scales;
    let out = DataMatrix::new(z, data.feature_names.clone())?;
    Ok((out, centers, scales))
}

/// Train/test/validation fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, test: f64, validation: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train,
            test,
            validation,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.test, self.validation];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::BadFractions(format!("{parts:?} must be nonnegative")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::BadFractions(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SplitPart {
    pub data: DataMatrix,
    /// Row indices into the original matrix.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: SplitPart,
    pub test: SplitPart,
    pub validation: SplitPart,
}

/// Seeded shuffle into three disjoint parts. Test and validation sizes are
/// floored; the remainder goes to train.
pub fn split(data: &DataMatrix, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = data.n_rows();
    if n < 5 {
        return Err(Error::TooFewRows { needed: 5, got: n });
    }
    let sizes = split_sizes(n, spec);
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::BadFractions(format!("sizes {sizes:?} leave an empty part for n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(spec.seed));
    let (train, rest) = order.split_at(sizes[0]);
    let (test, validation) = rest.split_at(sizes[1]);
    let part = |rows: &[usize]| SplitPart {
        data: data.select_rows(rows),
        rows: rows.to_vec(),
    };
    Ok(Split {
        train: part(train),
        test: part(test),
        validation: part(validation),
    })
}

fn split_sizes(n: usize, spec: &SplitSpec) -> [usize; 3] {
    // the epsilon keeps exact products like 10 * 0.2 from flooring to 1
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let test = floor(spec.test);
    let validation = floor(spec.validation);
    [n - test - validation, test, validation]
}

/// Point on the S-curve for arc parameter `t` and depth `y`.
pub fn s_curve_point(t: f64, y: f64) -> [f64; 3] {
    [t.sin(), y, t.signum() * (t.cos() - 1.0)]
}

/// Samples the 3-D S-curve manifold. Returns the points and their arc
/// parameter `t` ∈ [−3π/2, 3π/2].
pub fn make_s_curve(n: usize, noise: f64, seed: u64) -> Result<(DataMatrix, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be nonnegative".into()));
    }
    let mut rng = RngStream::new(seed);
    let mut values = Array2::zeros((n, 3));
    let mut arc = Vec::with_capacity(n);
    for i in 0..n {
        let t = 3.0 * PI * (rng.random::<f64>() - 0.5);
        let y = 2.0 * rng.random::<f64>();
        let point = s_curve_point(t, y);
        for (j, v) in point.into_iter().enumerate() {
            values[[i, j]] = v;
        }
        arc.push(t);
    }
    if noise > 0.0 {
        values.mapv_inplace(|v| v + noise * rng.normal());
    }
    let names = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    Ok((DataMatrix::new(values, names)?, arc))
}

/// Isotropic Gaussian blobs, `n_per` points around each center. Labels are
/// the center indices. `sd = 0` places every point exactly on its center.
pub fn make_gaussian_clusters(
    n_per: usize,
    centers: &[Vec<f64>],
    sd: f64,
    seed: u64,
) -> Result<(DataMatrix, Vec<u32>)> {
    if centers.len() < 2 {
        return Err(Error::InvalidArgument("need at least two centers".into()));
    }
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::InvalidArgument("sd must be finite and nonnegative".into()));
    }
    let p = centers[0].len();
    if let Some(bad) = centers.iter().find(|c| c.len() != p) {
        return Err(Error::LengthMismatch {
            left: bad.len(),
            right: p,
        });
    }
    let mut rng = RngStream::new(seed);
    let n = n_per * centers.len();
    let mut values = Array2::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for r in 0..n_per {
            let i = c * n_per + r;
            for j in 0..p {
                let jitter = if sd > 0.0 { sd * rng.normal() } else { 0.0 };
                values[[i, j]] = center[j] + jitter;
            }
            labels.push(c as u32);
        }
    }
    Ok((DataMatrix::from_values(values)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn column(v: &[f64]) -> DataMatrix {
        DataMatrix::from_values(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn standardize_three_points() {
        let (z, c, s) = standardize(&column(&[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(z.values().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(c[0], 4.0);
        assert_eq!(s[0], 2.0);
    }

    #[test]
    fn standardize_constant_column() {
        let err = standardize(&column(&[5.0, 5.0, 5.0])).unwrap_err();
        assert!(matches!(err, Error::ConstantFeature(name) if name == "V1"));
    }

    #[test]
    fn standardize_rejects_missing() {
        let mask = array![[false], [true], [false]];
        let m = DataMatrix::with_missing(array![[1.0], [0.0], [3.0]], vec!["a".into()], mask).unwrap();
        assert!(matches!(standardize(&m), Err(Error::MissingData)));
        assert!(m.values()[[1, 0]].is_nan());
    }

    #[test]
    fn standardize_random_matrix_moments() {
        let mut rng = RngStream::new(3);
        let x = Array2::from_shape_fn((50, 4), |(_, j)| 10.0 * j as f64 + (j + 1) as f64 * rng.normal());
        let (z, _, _) = standardize(&DataMatrix::from_values(x).unwrap()).unwrap();
        for col in z.values().columns() {
            let mean = col.sum() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
            assert!(mean.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 1).unwrap();
        assert_eq!(split_sizes(10, &spec), [6, 2, 2]);
        assert_eq!(split_sizes(11, &spec), [7, 2, 2]);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let x = Array2::from_shape_fn((11, 2), |(i, j)| (i * 2 + j) as f64);
        let data = DataMatrix::from_values(x).unwrap();
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 42).unwrap();
        let a = split(&data, &spec).unwrap();
        let b = split(&data, &spec).unwrap();
        assert_eq!(a.train.rows, b.train.rows);
        assert_eq!(a.test.rows, b.test.rows);
        let mut all: Vec<usize> = [a.train.rows, a.test.rows, a.validation.rows].concat();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(matches!(SplitSpec::new(0.6, 0.3, 0.2, 0), Err(Error::BadFractions(_))));
        assert!(matches!(SplitSpec::new(1.2, -0.2, 0.0, 0), Err(Error::BadFractions(_))));
    }

    #[test]
    fn s_curve_geometry() {
        assert_eq!(s_curve_point(0.0, 1.3), [0.0, 1.3, 0.0]);
        let (data, arc) = make_s_curve(1000, 0.0, 7).unwrap();
        let bound = 1.5 * PI;
        assert!(arc.iter().all(|t| (-bound..=bound).contains(t)));
        for (row, t) in data.values().rows().into_iter().zip(&arc) {
            assert!(row[0].abs() <= 1.0);
            assert!((row[0] - t.sin()).abs() < 1e-12);
            assert!((0.0..=2.0).contains(&row[1]));
        }
    }

    #[test]
    fn clusters_classify_by_nearest_center() {
        let centers = vec![vec![10.0; 10], vec![-10.0; 10]];
        let (data, labels) = make_gaussian_clusters(100, &centers, 1.0, 5).unwrap();
        for (row, &label) in data.values().rows().into_iter().zip(&labels) {
            let d: Vec<f64> = centers
                .iter()
                .map(|c| row.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let nearest = if d[0] <= d[1] { 0 } else { 1 };
            assert_eq!(nearest, label);
        }
    }

    #[test]
    fn clusters_zero_sd_and_determinism() {
        let centers = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let (data, _) = make_gaussian_clusters(3, &centers, 0.0, 1).unwrap();
        assert_eq!(data.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(data.row(5).to_vec(), vec![3.0, 4.0]);
        let a = make_gaussian_clusters(20, &centers, 0.5, 9).unwrap();
        let b = make_gaussian_clusters(20, &centers, 0.5, 9).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(1, 5), derive_seed(1, 5));
    }
}
