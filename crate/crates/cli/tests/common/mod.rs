#![allow(dead_code)]

pub mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dimred::data::make_gaussian_clusters;
use dimred::DataMatrix;

/// Two labeled blobs at ±`offset` in `p` dimensions, written as CSV with a
/// `party` label column (values 0 and 1).
pub fn write_two_clusters(path: &Path, n_per: usize, p: usize, offset: f64, seed: u64) {
    let centers = vec![vec![-offset; p], vec![offset; p]];
    let (data, labels) = make_gaussian_clusters(n_per, &centers, 1.0, seed).unwrap();
    write_labeled(path, &data, &labels, "party");
}

pub fn write_labeled(path: &Path, data: &DataMatrix, labels: &[u32], label_name: &str) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push(label_name.into());
    w.write_record(&header).unwrap();
    for (i, row) in data.values().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(labels[i].to_string());
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

pub fn dimred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimred")).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn subdirs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    v.sort();
    v
}

pub fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}
