//! Command-line front-end: CSV in, embeddings, reports, grids and SVG
//! scatter plots out.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

pub mod grid;
pub mod params;
pub mod run;
pub mod svg;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dimred::ingest::{self, knn_impute, summarize, ImputeConfig, SummaryTable};
use dimred::metrics::{correlation_matrix, focus_correlations};
use dimred::{ErrorKind, Metric};

use params::{read_config_file, Algorithm, Params, RunConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<dimred::Error> for CliError {
    fn from(e: dimred::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dimred", version, about = "Dimension reduction toolkit for tabular data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Input CSV with a header row.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Feature columns: `a,b,c` or `@file`. Defaults to every column but the label.
    #[arg(long, global = true)]
    pub select: Option<String>,
    /// Categorical label column used for coloring and classification.
    #[arg(long, global = true)]
    pub label: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Standardize features before fitting (default true).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Flat `key=value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Extra `key=value` algorithm parameters.
#[derive(Debug, Args, Default)]
pub struct SetArgs {
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill missing cells from k nearest donor rows and compare summaries.
    Impute {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        metric: Option<String>,
    },
    /// Per-feature summary table and correlation matrix.
    Summarize {
        /// Also list correlations against this feature.
        #[arg(long)]
        focus: Option<String>,
    },
    Pca {
        #[arg(long)]
        components: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    Lle {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dims: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    /// Scan LLE neighborhood sizes by 1 − ρ² and embed with the best.
    CalcK {
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        dims: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    Tsne {
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        dims: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    Umap {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_dist: Option<f64>,
        #[arg(long)]
        spread: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        dims: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    Som {
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        rlen: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[command(flatten)]
        extra: SetArgs,
    },
    Autoencoder {
        /// Hidden layer sizes, e.g. `16` or `16;8;16`.
        #[arg(long)]
        hidden: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        denoise_sd: Option<f64>,
        #[arg(long)]
        activation: Option<String>,
        #[arg(long)]
        overcomplete_ok: bool,
        #[command(flatten)]
        extra: SetArgs,
    },
    /// Run one algorithm over the Cartesian product of parameter values.
    Grid {
        #[arg(long)]
        algorithm: String,
        /// `name=v1,v2,...`; repeat for more axes.
        #[arg(long = "param", value_name = "NAME=V1,V2,...")]
        params: Vec<String>,
        /// Cells run concurrently (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn put<T: ToString>(m: &mut Params, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.to_string());
    }
}

fn apply_set(m: &mut Params, set: &SetArgs) -> Result<(), CliError> {
    for item in &set.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set '{item}' is not key=value")))?;
        m.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(())
}

/// Global options merged from the command line over the config file.
struct Resolved {
    input: Option<PathBuf>,
    select: Option<Vec<String>>,
    label: Option<String>,
    seed: u64,
    out: PathBuf,
    standardize: bool,
    file: Params,
    /// Config-file entries that are not global options.
    file_params: Params,
}

const GLOBAL_KEYS: [&str; 6] = ["input", "select", "label", "seed", "out", "standardize"];

fn resolve(global: &GlobalArgs) -> Result<Resolved, CliError> {
    let file = match &global.config {
        Some(p) => read_config_file(p)?,
        None => Params::new(),
    };
    let from_file = |k: &str| file.get(k).cloned();
    let seed = match (global.seed, from_file("seed")) {
        (Some(s), _) => s,
        (None, Some(s)) => s.parse().map_err(|_| CliError::usage(format!("config seed '{s}' is not an integer")))?,
        (None, None) => 0,
    };
    let standardize = match (global.standardize, from_file("standardize")) {
        (Some(b), _) => b,
        (None, Some(s)) => s.parse().map_err(|_| CliError::usage(format!("config standardize '{s}' is not true/false")))?,
        (None, None) => true,
    };
    let select = match global.select.clone().or_else(|| from_file("select")) {
        Some(s) => Some(params::parse_select(&s)?),
        None => None,
    };
    let file_params = file
        .iter()
        .filter(|(k, _)| !GLOBAL_KEYS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(Resolved {
        input: global.input.clone().or_else(|| from_file("input").map(PathBuf::from)),
        select,
        label: global.label.clone().or_else(|| from_file("label")),
        seed,
        out: global.out.clone().or_else(|| from_file("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("dimred_out")),
        standardize,
        file,
        file_params,
    })
}

impl Resolved {
    fn input(&self) -> Result<&Path, CliError> {
        self.input.as_deref().ok_or_else(|| CliError::usage("--input is required"))
    }

    fn run_config(&self, algorithm: Algorithm, cli_params: Params) -> Result<RunConfig, CliError> {
        let mut params = self.file_params.clone();
        params.extend(cli_params);
        Ok(RunConfig {
            input: self.input()?.to_path_buf(),
            select: self.select.clone(),
            label: self.label.clone(),
            algorithm,
            params,
            out: self.out.clone(),
            seed: self.seed,
            standardize: self.standardize,
            config_file: self.file.clone(),
        })
    }
}

fn write_out(dir: &Path, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn buffer(f: impl FnOnce(&mut Vec<u8>) -> dimred::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut b = Vec::new();
    f(&mut b)?;
    Ok(b)
}

fn impute_cmd(r: &Resolved, k: Option<usize>, metric: Option<&str>) -> Result<(), CliError> {
    let k = k.or(r.file_params.get("k").map(|v| v.parse()).transpose().map_err(|_| CliError::usage("config k is not an integer"))?);
    let mut cfg = ImputeConfig {
        seed: r.seed,
        ..Default::default()
    };
    if let Some(k) = k {
        if k == 0 {
            return Err(CliError::usage("--k must be at least 1"));
        }
        cfg.k = k;
    }
    if let Some(m) = metric.or(r.file_params.get("metric").map(String::as_str)) {
        cfg.distance = m.parse::<Metric>()?;
    }
    let table = run::load_input(r.input()?, r.select.as_deref(), r.label.as_deref())?;
    let imputed = knn_impute(&table.data, &cfg)?;
    fs::create_dir_all(&r.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", r.out.display())))?;
    let labels = r.label.as_deref().zip(table.labels.as_ref());
    write_out(&r.out, "imputed.csv", buffer(|b| ingest::write_csv(b, &imputed, labels))?)?;
    let raw_summary = summarize(&table.data);
    let imputed_summary = summarize(&imputed);
    write_out(&r.out, "summary_raw.csv", buffer(|b| raw_summary.write_csv(b))?)?;
    write_out(&r.out, "summary_imputed.csv", buffer(|b| imputed_summary.write_csv(b))?)?;
    write_out(
        &r.out,
        "summary_comparison.csv",
        buffer(|b| SummaryTable::write_comparison_csv(&raw_summary, &imputed_summary, b))?,
    )
}

fn summarize_cmd(r: &Resolved, focus: Option<&str>) -> Result<(), CliError> {
    let table = run::load_input(r.input()?, r.select.as_deref(), r.label.as_deref())?;
    fs::create_dir_all(&r.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", r.out.display())))?;
    write_out(&r.out, "summary.csv", buffer(|b| summarize(&table.data).write_csv(b))?)?;
    if table.data.has_missing() {
        log::warn!("input has missing cells; skipping the correlation matrix");
        return Ok(());
    }
    let corr = correlation_matrix(&table.data)?;
    let names = table.data.feature_names();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["feature".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(dimred::Error::from)?;
    for (name, row) in names.iter().zip(corr.rows()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(dimred::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    write_out(&r.out, "correlation.csv", bytes)?;
    if let Some(f) = focus {
        let pairs = focus_correlations(names, &corr, f)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "r"]).map_err(dimred::Error::from)?;
        for (name, v) in pairs {
            w.write_record([name, v.to_string()]).map_err(dimred::Error::from)?;
        }
        write_out(&r.out, "focus_correlations.csv", w.into_inner().map_err(|e| CliError::data(e.to_string()))?)?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let r = resolve(&cli.global)?;
    let mut m = Params::new();
    let algorithm = match &cli.command {
        Command::Impute { k, metric } => return impute_cmd(&r, *k, metric.as_deref()),
        Command::Summarize { focus } => return summarize_cmd(&r, focus.as_deref()),
        Command::Grid {
            algorithm,
            params,
            workers,
        } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let spec = grid::GridSpec::parse(algorithm, params, workers)?;
            let base = r.run_config(algorithm, Params::new())?;
            let outcomes = grid::run_grid(&spec, &base)?;
            let failed = outcomes.iter().filter(|o| o.report.status != "ok").count();
            if failed > 0 {
                eprintln!("{failed} of {} grid cells failed; see grid_summary.csv", outcomes.len());
            }
            return Ok(());
        }
        Command::Pca { components, extra } => {
            put(&mut m, "components", components);
            apply_set(&mut m, extra)?;
            Algorithm::Pca
        }
        Command::Lle { k, dims, extra } => {
            put(&mut m, "k", k);
            put(&mut m, "dims", dims);
            apply_set(&mut m, extra)?;
            Algorithm::Lle
        }
        Command::CalcK { k_min, k_max, dims, extra } => {
            put(&mut m, "k_min", k_min);
            put(&mut m, "k_max", k_max);
            put(&mut m, "dims", dims);
            apply_set(&mut m, extra)?;
            Algorithm::CalcK
        }
        Command::Tsne {
            perplexity,
            theta,
            max_iter,
            learning_rate,
            dims,
            extra,
        } => {
            put(&mut m, "perplexity", perplexity);
            put(&mut m, "theta", theta);
            put(&mut m, "max_iter", max_iter);
            put(&mut m, "learning_rate", learning_rate);
            put(&mut m, "dims", dims);
            apply_set(&mut m, extra)?;
            Algorithm::Tsne
        }
        Command::Umap {
            k,
            epochs,
            min_dist,
            spread,
            learning_rate,
            dims,
            extra,
        } => {
            put(&mut m, "k", k);
            put(&mut m, "epochs", epochs);
            put(&mut m, "min_dist", min_dist);
            put(&mut m, "spread", spread);
            put(&mut m, "learning_rate", learning_rate);
            put(&mut m, "dims", dims);
            apply_set(&mut m, extra)?;
            Algorithm::Umap
        }
        Command::Som {
            rows,
            cols,
            rlen,
            clusters,
            extra,
        } => {
            put(&mut m, "rows", rows);
            put(&mut m, "cols", cols);
            put(&mut m, "rlen", rlen);
            put(&mut m, "clusters", clusters);
            apply_set(&mut m, extra)?;
            Algorithm::Som
        }
        Command::Autoencoder {
            hidden,
            epochs,
            learning_rate,
            denoise_sd,
            activation,
            overcomplete_ok,
            extra,
        } => {
            put(&mut m, "hidden", hidden);
            put(&mut m, "epochs", epochs);
            put(&mut m, "learning_rate", learning_rate);
            put(&mut m, "denoise_sd", denoise_sd);
            put(&mut m, "activation", activation);
            if *overcomplete_ok {
                m.insert("overcomplete_ok".into(), "true".into());
            }
            apply_set(&mut m, extra)?;
            Algorithm::Autoencoder
        }
    };
    let cfg = r.run_config(algorithm, m)?;
    run::run(&cfg).map(|_| ())
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
