//! Cartesian-product parameter sweeps with one output directory per cell.

use std::fs;
use std::path::PathBuf;

use dimred::data::derive_seed;
use dimred::metrics::EmbeddingReport;
use rayon::prelude::*;

use crate::params::{Algorithm, RunConfig};
use crate::run::{load_input, run_loaded};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub algorithm: Algorithm,
    /// Parameter name and its candidate values, in command-line order.
    pub axes: Vec<(String, Vec<String>)>,
    pub workers: usize,
}

impl GridSpec {
    /// Parses `name=v1,v2,...` items.
    pub fn parse(algorithm: Algorithm, items: &[String], workers: usize) -> Result<Self, CliError> {
        if items.is_empty() {
            return Err(CliError::usage("grid needs at least one --param name=v1,v2,..."));
        }
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for item in items {
            let (name, values) = item
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--param '{item}' is not name=v1,v2,...")))?;
            let name = name.trim().replace('-', "_");
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(CliError::usage(format!("--param {name} has an empty value list")));
            }
            if axes.iter().any(|(n, _)| *n == name) {
                return Err(CliError::usage(format!("--param {name} given twice")));
            }
            axes.push((name, values));
        }
        algorithm.check_params(axes.iter().map(|(n, _)| n))?;
        if workers == 0 {
            return Err(CliError::usage("--workers must be >= 1"));
        }
        Ok(Self {
            algorithm,
            axes,
            workers,
        })
    }

    /// Every cell as (name, value) pairs; the first axis varies slowest.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (name, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

pub fn cell_name(cell: &[(String, String)]) -> String {
    cell.iter()
        .map(|(k, v)| format!("{k}={}", v.replace(['/', '\\'], "-")))
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub dir: PathBuf,
    pub seed: u64,
    pub report: EmbeddingReport,
}

/// Runs every cell of `spec` on the input of `base`, writing
/// `<out>/<cell>/…` and `<out>/grid_summary.csv`.
pub fn run_grid(spec: &GridSpec, base: &RunConfig) -> Result<Vec<CellOutcome>, CliError> {
    base.algorithm.check_params(base.params.keys())?;
    let table = load_input(&base.input, base.select.as_deref(), base.label.as_deref())?;
    fs::create_dir_all(&base.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", base.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} workers: {e}", spec.workers)))?;
    let cells = spec.cells();
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(idx, cell)| {
                let name = cell_name(cell);
                let mut cfg = base.clone();
                for (k, v) in cell {
                    cfg.params.insert(k.clone(), v.clone());
                }
                cfg.seed = derive_seed(base.seed, idx as u64);
                cfg.out = base.out.join(&name);
                let report = match run_loaded(&cfg, &table) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("cell {name} failed: {}", e.message);
                        let mut r = EmbeddingReport::failed(cfg.algorithm.id(), cfg.echo(), 0.0, e.message);
                        r.extra.insert("exit_code".into(), f64::from(e.code));
                        r
                    }
                };
                CellOutcome {
                    name,
                    params: cell.clone(),
                    dir: cfg.out,
                    seed: cfg.seed,
                    report,
                }
            })
            .collect()
    });
    write_summary(spec, base, &outcomes)?;
    Ok(outcomes)
}

fn write_summary(spec: &GridSpec, base: &RunConfig, outcomes: &[CellOutcome]) -> Result<(), CliError> {
    let path = base.out.join("grid_summary.csv");
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec!["cell".to_string()];
    header.extend(spec.axes.iter().map(|(n, _)| n.clone()));
    header.extend(["seed", "status", "trustworthiness", "rho", "runtime_seconds", "error"].map(String::from));
    let io = |e: csv::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
    w.write_record(&header).map_err(io)?;
    for o in outcomes {
        let mut rec = vec![o.name.clone()];
        rec.extend(o.params.iter().map(|(_, v)| v.clone()));
        rec.push(o.seed.to_string());
        rec.push(o.report.status.clone());
        rec.push(fmt(o.report.trustworthiness));
        rec.push(fmt(o.report.rho));
        rec.push(o.report.runtime_seconds.to_string());
        rec.push(o.report.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cartesian_cells() {
        let spec = GridSpec::parse(Algorithm::Tsne, &items(&["perplexity=25,50,100", "theta=0.1,0.5,0.9"]), 2).unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 9);
        assert_eq!(cell_name(&cells[0]), "perplexity=25_theta=0.1");
        assert_eq!(cell_name(&cells[8]), "perplexity=100_theta=0.9");
    }

    #[test]
    fn bad_specs_are_usage_errors() {
        for bad in [vec!["k="], vec!["bogus=1"], vec!["k"], vec!["k=1", "k=2"]] {
            let err = GridSpec::parse(Algorithm::Umap, &items(&bad), 1).unwrap_err();
            assert_eq!(err.code, 1, "{bad:?}");
        }
        assert_eq!(GridSpec::parse(Algorithm::Umap, &[], 1).unwrap_err().code, 1);
    }
}
