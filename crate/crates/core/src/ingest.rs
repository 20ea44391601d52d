//! CSV ingestion, missing-value recoding, kNN imputation and per-feature
//! summary tables.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::neighbors::Metric;

/// Which columns to read and how missing values are spelled.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub select: Vec<String>,
    pub label_column: Option<String>,
    pub missing_tokens: Vec<String>,
    pub sentinel_values: Vec<f64>,
}

impl CsvSchema {
    pub fn new(select: Vec<String>) -> Self {
        Self {
            select,
            label_column: None,
            missing_tokens: vec!["NA".to_string(), String::new()],
            sentinel_values: Vec::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label_column = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.select.is_empty() {
            return Err(Error::InvalidArgument("no columns selected".into()));
        }
        if let Some(label) = &self.label_column {
            if self.select.contains(label) {
                return Err(Error::InvalidArgument(format!("label column `{label}` is also selected")));
            }
        }
        Ok(())
    }

    fn is_missing_token(&self, text: &str) -> bool {
        let t = text.trim();
        self.missing_tokens.iter().any(|m| m == t)
    }
}

/// Categorical label column: `ids[i]` indexes into `levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub ids: Vec<u32>,
    pub levels: Vec<String>,
}

impl Labels {
    /// Levels sorted numerically when every value parses as a number,
    /// lexically otherwise. So a 0/1 column keeps ids 0 and 1.
    pub fn from_strings(values: Vec<String>) -> Self {
        let mut levels: Vec<String> = values.clone();
        levels.sort();
        levels.dedup();
        let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
        if let Some(nums) = numeric {
            let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            levels = pairs.into_iter().map(|(_, s)| s).collect();
        }
        let ids = values
            .iter()
            .map(|v| levels.iter().position(|l| l == v).expect("level present") as u32)
            .collect();
        Self { ids, levels }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub data: DataMatrix,
    pub labels: Option<Labels>,
}

/// Column names from the header row of a CSV file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedTable> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_from_reader(file, schema)
}

pub fn load_csv_from_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedTable> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cols: Vec<usize> = schema.select.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let label_col = schema.label_column.as_deref().map(find).transpose()?;

    let p = cols.len();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut label_text = Vec::new();
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (&c, name) in cols.iter().zip(&schema.select) {
            let text = record.get(c).unwrap_or("");
            if schema.is_missing_token(text) {
                values.push(f64::NAN);
                mask.push(true);
                continue;
            }
            let v: f64 = text.trim().parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                text: text.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.clone(),
                    text: text.to_string(),
                });
            }
            let sentinel = schema.sentinel_values.iter().any(|s| *s == v);
            values.push(if sentinel { f64::NAN } else { v });
            mask.push(sentinel);
        }
        if let Some(c) = label_col {
            let text = record.get(c).unwrap_or("").trim();
            if schema.is_missing_token(text) {
                return Err(Error::Parse {
                    row,
                    column: schema.label_column.clone().unwrap_or_default(),
                    text: text.to_string(),
                });
            }
            label_text.push(text.to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let values = Array2::from_shape_vec((n, p), values).expect("row-major fill");
    let mask = Array2::from_shape_vec((n, p), mask).expect("row-major fill");
    let data = DataMatrix::with_missing(values, schema.select.clone(), mask)?;
    let labels = label_col.map(|_| Labels::from_strings(label_text));
    Ok(LoadedTable { data, labels })
}

/// Writes a data matrix (missing cells as `NA`), optionally with a label column.
pub fn write_csv<W: Write>(out: W, data: &DataMatrix, labels: Option<(&str, &Labels)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = data.feature_names().to_vec();
    if let Some((name, _)) = labels {
        header.push(name.to_string());
    }
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = (0..data.n_cols())
            .map(|j| {
                if data.is_missing(i, j) {
                    "NA".to_string()
                } else {
                    data.values()[[i, j]].to_string()
                }
            })
            .collect();
        if let Some((_, l)) = labels {
            rec.push(l.levels[l.ids[i] as usize].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Statistics of one feature over its observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub feature: String,
    /// Percentage of observed cells, 0–100.
    pub complete_pct: f64,
    /// `None` when the feature has no observed values.
    pub stats: Option<FeatureStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    /// Sample standard deviation; NaN with a single observation.
    pub sd: f64,
    pub min: f64,
    pub q2: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<FeatureSummary>,
}

impl SummaryTable {
    pub fn get(&self, feature: &str) -> Option<&FeatureSummary> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    pub const HEADER: [&'static str; 9] = ["feature", "complete", "mean", "sd", "min", "q2", "median", "q3", "max"];

    fn record(row: &FeatureSummary, feature: &str) -> Vec<String> {
        let fmt = |v: f64| if v.is_finite() { format!("{v:.2}") } else { "NA".to_string() };
        let mut rec = vec![feature.to_string(), format!("{:.1}", row.complete_pct)];
        match &row.stats {
            Some(s) => rec.extend([s.mean, s.sd, s.min, s.q2, s.median, s.q3, s.max].map(fmt)),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 7)),
        }
        rec
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for row in &self.rows {
            w.write_record(Self::record(row, &row.feature))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Interleaves raw and imputed rows per feature, labelled
    /// `<feature> (raw)` and `<feature> (imputed)`.
    pub fn write_comparison_csv<W: Write>(raw: &SummaryTable, imputed: &SummaryTable, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for (a, b) in raw.rows.iter().zip(&imputed.rows) {
            w.write_record(Self::record(a, &format!("{} (raw)", a.feature)))?;
            w.write_record(Self::record(b, &format!("{} (imputed)", b.feature)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(data: &DataMatrix) -> SummaryTable {
    let n = data.n_rows();
    let rows = (0..data.n_cols())
        .map(|j| {
            let mut obs: Vec<f64> = (0..n)
                .filter(|&i| !data.is_missing(i, j))
                .map(|i| data.values()[[i, j]])
                .collect();
            let complete_pct = 100.0 * obs.len() as f64 / n as f64;
            let stats = (!obs.is_empty()).then(|| {
                obs.sort_by(f64::total_cmp);
                let m = obs.len() as f64;
                let mean = obs.iter().sum::<f64>() / m;
                let sd = if obs.len() > 1 {
                    (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                } else {
                    f64::NAN
                };
                FeatureStats {
                    mean,
                    sd,
                    min: obs[0],
                    q2: quantile_sorted(&obs, 0.25),
                    median: quantile_sorted(&obs, 0.5),
                    q3: quantile_sorted(&obs, 0.75),
                    max: obs[obs.len() - 1],
                }
            });
            FeatureSummary {
                feature: data.feature_names()[j].clone(),
                complete_pct,
                stats,
            }
        })
        .collect();
    SummaryTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputeConfig {
    pub k: usize,
    pub distance: Metric,
    /// Reserved; neighbor ties are broken by row index, so the result
    /// does not depend on it.
    pub seed: u64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            k: 5,
            distance: Metric::Euclidean,
            seed: 0,
        }
    }
}

/// Fills every missing cell with the mean of its k nearest donor rows.
///
/// Distances are taken on per-feature standardized values over the
/// coordinates both rows observe, rescaled by `p / shared` so rows with
/// different amounts of missingness stay comparable. Donors are rows that
/// observe the target feature; observed cells are copied unchanged.
/// Single-pass: each missing cell gets exactly one value, not a set of
/// draws as in multiple imputation.
pub fn knn_impute(data: &DataMatrix, cfg: &ImputeConfig) -> Result<DataMatrix> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let (n, p) = (data.n_rows(), data.n_cols());
    let x = data.values();
    if let Some(i) = (0..n).find(|&i| (0..p).all(|j| data.is_missing(i, j))) {
        return Err(Error::AllMissingRow(i));
    }
    if let Some(j) = (0..p).find(|&j| (0..n).all(|i| data.is_missing(i, j))) {
        return Err(Error::AllMissingFeature(data.feature_names()[j].clone()));
    }
    if !data.has_missing() {
        return Ok(data.clone());
    }

    // observed-only standardization
    let mut z = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        let obs: Vec<f64> = (0..n).filter(|&i| !data.is_missing(i, j)).map(|i| x[[i, j]]).collect();
        let m = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / m;
        let var = if obs.len() > 1 {
            obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            z[[i, j]] = (x[[i, j]] - mean) / scale;
        }
    }
    let mask = data.missing_mask();

    let fills: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let targets: Vec<usize> = (0..p).filter(|&j| mask[[i, j]]).collect();
            if targets.is_empty() {
                return Vec::new();
            }
            let dist: Vec<f64> = (0..n)
                .map(|r| {
                    if r == i {
                        return f64::INFINITY;
                    }
                    let mut acc = 0.0;
                    let mut shared = 0usize;
                    for j in 0..p {
                        if mask[[i, j]] || mask[[r, j]] {
                            continue;
                        }
                        let d = z[[i, j]] - z[[r, j]];
                        acc += match cfg.distance {
                            Metric::Euclidean => d * d,
                            Metric::Manhattan => d.abs(),
                        };
                        shared += 1;
                    }
                    if shared == 0 {
                        return f64::INFINITY;
                    }
                    let scaled = acc * p as f64 / shared as f64;
                    match cfg.distance {
                        Metric::Euclidean => scaled.sqrt(),
                        Metric::Manhattan => scaled,
                    }
                })
                .collect();
            targets
                .into_iter()
                .map(|j| {
                    let mut donors: Vec<usize> = (0..n).filter(|&r| r != i && !mask[[r, j]]).collect();
                    donors.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
                    if donors.len() < cfg.k {
                        log::warn!(
                            "feature `{}`: only {} donors for k = {}",
                            data.feature_names()[j],
                            donors.len(),
                            cfg.k
                        );
                    }
                    let chosen = &donors[..cfg.k.min(donors.len())];
                    let mean = chosen.iter().map(|&r| x[[r, j]]).sum::<f64>() / chosen.len() as f64;
                    (j, mean)
                })
                .collect()
        })
        .collect();

    let mut out = x.to_owned();
    for (i, row) in fills.into_iter().enumerate() {
        for (j, v) in row {
            out[[i, j]] = v;
        }
    }
    DataMatrix::new(out, data.feature_names().to_vec())
}
