//! Run configuration: algorithm ids, string parameter maps, config files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pca,
    Lle,
    CalcK,
    Tsne,
    Umap,
    Som,
    Autoencoder,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Pca,
        Algorithm::Lle,
        Algorithm::CalcK,
        Algorithm::Tsne,
        Algorithm::Umap,
        Algorithm::Som,
        Algorithm::Autoencoder,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Pca => "pca",
            Algorithm::Lle => "lle",
            Algorithm::CalcK => "calc-k",
            Algorithm::Tsne => "tsne",
            Algorithm::Umap => "umap",
            Algorithm::Som => "som",
            Algorithm::Autoencoder => "autoencoder",
        }
    }

    pub fn known_params(self) -> &'static [&'static str] {
        match self {
            Algorithm::Pca => &["components"],
            Algorithm::Lle => &["k", "dims"],
            Algorithm::CalcK => &["k_min", "k_max", "dims"],
            Algorithm::Tsne => &[
                "perplexity",
                "theta",
                "max_iter",
                "learning_rate",
                "momentum",
                "final_momentum",
                "momentum_switch_iter",
                "early_exaggeration",
                "exaggeration_iters",
                "dims",
            ],
            Algorithm::Umap => &["k", "epochs", "min_dist", "spread", "learning_rate", "negative_sample_rate", "dims"],
            Algorithm::Som => &[
                "rows",
                "cols",
                "rlen",
                "alpha_start",
                "alpha_end",
                "radius_start",
                "radius_end",
                "clusters",
                "fuzzifier",
            ],
            Algorithm::Autoencoder => &[
                "hidden",
                "epochs",
                "batch_size",
                "learning_rate",
                "optimizer",
                "denoise_sd",
                "activation",
                "overcomplete_ok",
                "layer",
                "classify",
                "classifier_hidden",
                "classifier_epochs",
                "importance_repeats",
            ],
        }
    }

    pub fn check_params<'a>(self, keys: impl IntoIterator<Item = &'a String>) -> Result<(), CliError> {
        for key in keys {
            if !self.known_params().contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "unknown parameter '{key}' for {}; expected one of: {}",
                    self.id(),
                    self.known_params().join(", ")
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s || (s == "calc_k" && *a == Algorithm::CalcK))
            .ok_or_else(|| CliError::usage(format!("unknown algorithm '{s}'")))
    }
}

/// Typed access to a parameter map with defaults.
pub struct ParamReader<'a>(pub &'a Params);

impl ParamReader<'_> {
    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|e| CliError::usage(format!("parameter {key}='{raw}': {e}"))),
        }
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .trim()
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("parameter {key}='{raw}': {e}"))),
        }
    }

    pub fn list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        match self.0.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => parse_usize_list(raw).map_err(|e| CliError::usage(format!("parameter {key}: {e}"))),
        }
    }
}

/// Comma- or semicolon-separated positive integers, e.g. `16` or `16;8;16`.
pub fn parse_usize_list(raw: &str) -> Result<Vec<usize>, String> {
    let items: Result<Vec<usize>, _> = raw
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err("empty list".into()),
        Err(e) => Err(format!("'{raw}': {e}")),
    }
}

/// `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<Params, CliError> {
    let mut out = Params::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got '{line}'", lineno + 1)))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", lineno + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Params, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// `a,b,c` or `@file` listing names separated by commas or newlines.
pub fn parse_select(spec: &str) -> Result<Vec<String>, CliError> {
    let text = match spec.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read column list {path}: {e}")))?,
        None => spec.to_string(),
    };
    let names: Vec<String> = text
        .split([',', '\n', '\r'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(CliError::usage("--select names no columns"));
    }
    Ok(names)
}

/// Everything needed to run one algorithm on one input file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub select: Option<Vec<String>>,
    pub label: Option<String>,
    pub algorithm: Algorithm,
    pub params: Params,
    pub out: PathBuf,
    pub seed: u64,
    pub standardize: bool,
    /// Entries read from a config file, echoed into the report.
    pub config_file: Params,
}

impl RunConfig {
    /// Flat view of the configuration for `report.json`.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for (k, v) in &self.config_file {
            m.insert(format!("config_file.{k}"), v.clone());
        }
        for (k, v) in &self.params {
            m.insert(k.clone(), v.clone());
        }
        m.insert("algorithm".into(), self.algorithm.id().into());
        m.insert("input".into(), self.input.display().to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("standardize".into(), self.standardize.to_string());
        if let Some(l) = &self.label {
            m.insert("label".into(), l.clone());
        }
        if let Some(s) = &self.select {
            m.insert("select".into(), s.join(","));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text() {
        let p = parse_config_text("# c\nperplexity = 30\n\nmax-iter=10\n").unwrap();
        assert_eq!(p["perplexity"], "30");
        assert_eq!(p["max_iter"], "10");
        assert!(parse_config_text("novalue").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_usize_list("16;8 ; 16").unwrap(), vec![16, 8, 16]);
        assert!(parse_usize_list("").is_err());
        assert!(parse_usize_list("a").is_err());
    }

    #[test]
    fn unknown_params_rejected() {
        let keys = vec!["perplexity".to_string(), "bogus".to_string()];
        let err = Algorithm::Tsne.check_params(&keys).unwrap_err();
        assert_eq!(err.code, 1);
        assert!(Algorithm::Tsne.check_params(&keys[..1]).is_ok());
    }

    #[test]
    fn algorithm_ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
    }

    #[test]
    fn select_list() {
        assert_eq!(parse_select("a, b,c").unwrap(), vec!["a", "b", "c"]);
        assert!(parse_select(" , ").is_err());
    }
}
