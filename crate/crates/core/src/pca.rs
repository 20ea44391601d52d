//! Principal components analysis through the singular value decomposition
//! of the centered (and optionally scaled) data matrix.

use std::io::Write;

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::data::{DataMatrix, Embedding};
use crate::error::{Error, Result};

/// A fitted PCA. Loading columns are the principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// p×p, column j = component j.
    pub loadings: Array2<f64>,
    /// Descending; length p (zero-padded when n < p).
    pub singular_values: Array1<f64>,
    pub centers: Array1<f64>,
    pub scales: Array1<f64>,
    pub feature_names: Vec<String>,
    pub n_fit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub sdev: Vec<f64>,
    pub pve: Vec<f64>,
    pub cpve: Vec<f64>,
}

impl VarianceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component", "sdev", "pve", "cpve"])?;
        for i in 0..self.sdev.len() {
            w.write_record([
                (i + 1).to_string(),
                self.sdev[i].to_string(),
                self.pve[i].to_string(),
                self.cpve[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn fit_pca(data: &DataMatrix, standardize: bool) -> Result<PcaModel> {
    let x = data.complete_values()?;
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::DegenerateMatrix(format!("PCA needs n >= 2, got {n}")));
    }
    let centers = x.mean_axis(Axis(0)).expect("n >= 2");
    let scales = if standardize {
        let sd = x.std_axis(Axis(0), 1.0);
        if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::ConstantFeature(data.feature_names()[j].clone()));
        }
        sd
    } else {
        Array1::ones(p)
    };
    let z = (&x - &centers) / &scales;

    // Zero rows leave ZᵀZ unchanged and give a full p×p right basis when n < p.
    let rows = n.max(p);
    let mut m = DMatrix::<f64>::zeros(rows, p);
    for ((i, j), v) in z.indexed_iter() {
        m[(i, j)] = *v;
    }
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::EigenFailure("SVD did not return right singular vectors".into()))?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut loadings = Array2::zeros((p, p));
    let mut singular_values = Array1::zeros(p);
    for (col, &src) in order.iter().enumerate() {
        singular_values[col] = svd.singular_values[src].max(0.0);
        for r in 0..p {
            loadings[[r, col]] = v_t[(src, r)];
        }
    }
    fix_signs(&mut loadings);

    Ok(PcaModel {
        loadings,
        singular_values,
        centers,
        scales,
        feature_names: data.feature_names().to_vec(),
        n_fit: n,
    })
}

/// Flips each column so its largest-magnitude entry is positive.
pub(crate) fn fix_signs(columns: &mut Array2<f64>) {
    for mut col in columns.columns_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.loadings.nrows()
    }

    /// Component variances σᵢ²/(n−1).
    pub fn component_variances(&self) -> Vec<f64> {
        let denom = (self.n_fit - 1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }

    fn prepare(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok((&x - &self.centers) / &self.scales)
    }

    /// Scores on the first `n_components` components.
    pub fn scores(&self, x: ArrayView2<f64>, n_components: usize) -> Result<Array2<f64>> {
        if n_components == 0 || n_components > self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "n_components must be in 1..={}, got {n_components}",
                self.n_features()
            )));
        }
        let z = self.prepare(x)?;
        Ok(z.dot(&self.loadings.slice(s![.., ..n_components])))
    }

    /// Maps scores back to the original units.
    pub fn inverse_transform(&self, scores: ArrayView2<f64>) -> Result<Array2<f64>> {
        let q = scores.ncols();
        if q == 0 || q > self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: q,
            });
        }
        let z = scores.dot(&self.loadings.slice(s![.., ..q]).t());
        Ok(z * &self.scales + &self.centers)
    }

    pub fn write_loadings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend((1..=self.n_features()).map(|j| format!("PC{j}")));
        w.write_record(&header)?;
        for (name, row) in self.feature_names.iter().zip(self.loadings.rows()) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn transform(model: &PcaModel, data: &DataMatrix, n_components: usize) -> Result<Embedding> {
    let scores = model.scores(data.complete_values()?, n_components)?;
    Embedding::new(scores, "pca")
}

pub fn variance_report(model: &PcaModel) -> VarianceReport {
    let denom = ((model.n_fit - 1) as f64).sqrt();
    let sdev: Vec<f64> = model.singular_values.iter().map(|s| s / denom).collect();
    let total: f64 = model.singular_values.iter().map(|s| s * s).sum();
    let pve: Vec<f64> = model
        .singular_values
        .iter()
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect();
    let cpve = pve
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    VarianceReport { sdev, pve, cpve }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;
    use ndarray::array;

    fn random(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = RngStream::new(seed);
        DataMatrix::from_values(Array2::from_shape_fn((n, p), |_| rng.normal())).unwrap()
    }

    #[test]
    fn rank_one_data() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [5.0, 10.0]];
        let m = fit_pca(&DataMatrix::from_values(x).unwrap(), true).unwrap();
        let r = variance_report(&m);
        assert!((r.pve[0] - 1.0).abs() < 1e-12);
        assert!(r.pve[1].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_split_variance() {
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let r = variance_report(&fit_pca(&DataMatrix::from_values(x).unwrap(), true).unwrap());
        assert!((r.pve[0] - 0.5).abs() < 1e-12 && (r.pve[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction() {
        let d = random(20, 4, 1);
        let m = fit_pca(&d, true).unwrap();
        let scores = m.scores(d.values(), 4).unwrap();
        let back = m.inverse_transform(scores.view()).unwrap();
        for (a, b) in back.iter().zip(d.values().iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_row_scores_zero() {
        let d = random(15, 3, 2);
        let m = fit_pca(&d, true).unwrap();
        let means = m.centers.clone().insert_axis(Axis(0));
        let s = m.scores(means.view(), 3).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn score_variance_matches_component_variance() {
        let d = random(40, 5, 3);
        let m = fit_pca(&d, true).unwrap();
        let scores = m.scores(d.values(), 5).unwrap();
        let vars = scores.var_axis(Axis(0), 1.0);
        for (v, cv) in vars.iter().zip(m.component_variances()) {
            assert!((v - cv).abs() < 1e-8);
        }
    }

    #[test]
    fn more_features_than_rows() {
        let d = random(3, 6, 4);
        let m = fit_pca(&d, false).unwrap();
        let gram = m.loadings.t().dot(&m.loadings);
        for ((i, j), v) in gram.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-8);
        }
        assert!(m.singular_values.slice(s![3..]).iter().all(|s| s.abs() < 1e-10));
    }

    #[test]
    fn errors() {
        let one = DataMatrix::from_values(array![[1.0, 2.0]]).unwrap();
        assert!(matches!(fit_pca(&one, false), Err(Error::DegenerateMatrix(_))));
        let m = fit_pca(&random(10, 3, 5), true).unwrap();
        let wrong = random(4, 2, 6);
        assert!(matches!(transform(&m, &wrong, 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sign_convention() {
        let m = fit_pca(&random(25, 4, 7), true).unwrap();
        for col in m.loadings.columns() {
            let big = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }
}
