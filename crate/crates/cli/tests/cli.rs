mod common;

use std::fs;

use common::{code, dimred, report, s, subdirs, write_two_clusters};

const FAST: &[(&str, &[&str])] = &[
    ("pca", &[]),
    ("lle", &["--k", "8"]),
    ("calc-k", &["--k-min", "4", "--k-max", "8"]),
    ("tsne", &["--perplexity", "10", "--max-iter", "300"]),
    ("umap", &["--k", "10", "--epochs", "100"]),
    ("som", &["--rows", "4", "--cols", "4", "--rlen", "20"]),
    ("autoencoder", &["--hidden", "4", "--epochs", "30"]),
];

fn run_algo(input: &str, out: &str, algo: &str, extra: &[&str], seed: &str) -> i32 {
    let mut args = vec!["--input", input, "--label", "party", "--out", out, "--seed", seed, algo];
    args.extend_from_slice(extra);
    let o = dimred(&args);
    if !o.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    code(&o)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&dimred(&["--help"])), 0);
    assert_eq!(code(&dimred(&["--version"])), 0);
    assert_eq!(code(&dimred(&["tsne", "--help"])), 0);
}

#[test]
fn parse_errors_exit_one() {
    assert_eq!(code(&dimred(&["tsne", "--no-such-flag"])), 1);
    assert_eq!(code(&dimred(&[])), 1);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 20, 4, 5.0, 1);
    let out = dir.path().join("o");
    let o = dimred(&["--input", s(&input), "--out", s(&out), "tsne", "--set", "bogus=1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn every_algorithm_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 40, 6, 4.0, 3);
    for (algo, extra) in FAST {
        let a = dir.path().join(format!("{algo}_a"));
        let b = dir.path().join(format!("{algo}_b"));
        assert_eq!(run_algo(s(&input), s(&a), algo, extra, "7"), 0, "{algo}");
        assert_eq!(run_algo(s(&input), s(&b), algo, extra, "7"), 0, "{algo}");
        for f in ["embedding.csv", "scatter.svg"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{algo} {f}");
        }
        assert_eq!(report(&a)["status"], "ok", "{algo}");
    }
}

#[test]
fn stochastic_algorithms_depend_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 40, 6, 4.0, 3);
    for (algo, extra) in FAST.iter().filter(|(a, _)| ["tsne", "som", "umap"].contains(a)) {
        let a = dir.path().join(format!("{algo}_1"));
        let b = dir.path().join(format!("{algo}_2"));
        assert_eq!(run_algo(s(&input), s(&a), algo, extra, "1"), 0);
        assert_eq!(run_algo(s(&input), s(&b), algo, extra, "2"), 0);
        assert_ne!(fs::read(a.join("embedding.csv")).unwrap(), fs::read(b.join("embedding.csv")).unwrap(), "{algo}");
    }
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("o");
    let o = dimred(&["--input", s(&missing), "--out", s(&out), "pca"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
    let r = report(&out);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["extra"]["exit_code"], 2.0);
}

#[test]
fn bad_grid_specs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 20, 4, 5.0, 1);
    let out = dir.path().join("g");
    for param in ["perplexity=", "nope=1,2", "perplexity"] {
        let o = dimred(&["--input", s(&input), "--out", s(&out), "grid", "--algorithm", "tsne", "--param", param]);
        assert_eq!(code(&o), 1, "{param}");
    }
    let o = dimred(&["--input", s(&input), "--out", s(&out), "grid", "--algorithm", "tsne"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 30, 4, 5.0, 1);
    let out = dir.path().join("o");
    let o = dimred(&[
        "--input", s(&input), "--out", s(&out), "autoencoder", "--hidden", "2", "--epochs", "50", "--learning-rate", "1e6",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "failed");
    assert!(r["error"].as_str().unwrap().len() > 0);
}

#[test]
fn pca_axes_carry_variance_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 30, 5, 3.0, 2);
    let out = dir.path().join("o");
    assert_eq!(run_algo(s(&input), s(&out), "pca", &[], "0"), 0);
    let svg = fs::read_to_string(out.join("scatter.svg")).unwrap();
    let pve1 = report(&out)["extra"]["pve1"].as_f64().unwrap();
    assert!(svg.contains(&format!("PC1 ({:.1}%)", 100.0 * pve1)));
    assert!(svg.contains("#2166ac") && svg.contains("#b2182b"));
    let scree = fs::read_to_string(out.join("scree.csv")).unwrap();
    assert_eq!(scree.lines().count(), 6);
}

#[test]
fn imputing_a_complete_file_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 15, 3, 2.0, 4);
    let out = dir.path().join("o");
    let o = dimred(&["--input", s(&input), "--label", "party", "--out", s(&out), "impute", "--k", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let parse = |p: &std::path::Path| -> Vec<Vec<f64>> {
        let mut r = csv::Reader::from_path(p).unwrap();
        r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect()
    };
    assert_eq!(parse(&input), parse(&out.join("imputed.csv")));
    for f in ["summary_raw.csv", "summary_imputed.csv", "summary_comparison.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = dimred(&["--input", s(&input), "--out", s(&out), "impute", "--k", "0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn imputation_fills_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("m.csv");
    fs::write(&input, "a,b\n1,10\n1,10\n5,\n9,90\n").unwrap();
    let out = dir.path().join("o");
    let o = dimred(&["--input", s(&input), "--out", s(&out), "--standardize", "false", "impute", "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("imputed.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(3).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row, vec![5.0, 10.0]);
}

#[test]
fn summarize_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 15, 3, 2.0, 4);
    let out = dir.path().join("o");
    let o = dimred(&["--input", s(&input), "--label", "party", "--out", s(&out), "summarize", "--focus", "V1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let corr = fs::read_to_string(out.join("correlation.csv")).unwrap();
    assert_eq!(corr.lines().count(), 4);
    assert!(out.join("focus_correlations.csv").is_file());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 20, 4, 4.0, 5);
    let out = dir.path().join("o");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("# umap run\ninput = {}\nseed = 11\nk = 6\nepochs = 40\n", s(&input))).unwrap();
    let o = dimred(&["--config", s(&cfg), "--out", s(&out), "umap", "--epochs", "50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["seed"], "11");
    assert_eq!(r["config"]["k"], "6");
    assert_eq!(r["config"]["epochs"], "50");
    assert_eq!(r["config"]["config_file.epochs"], "40");
}

#[test]
fn grid_writes_one_directory_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_two_clusters(&input, 25, 4, 4.0, 6);
    let out = dir.path().join("g");
    let o = dimred(&[
        "--input", s(&input), "--out", s(&out), "--seed", "3", "grid", "--algorithm", "umap", "--param", "k=5,10",
        "--param", "epochs=20,40", "--workers", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dirs = subdirs(&out);
    assert_eq!(dirs.len(), 4);
    assert!(out.join("k=5_epochs=20").join("embedding.csv").is_file());
    let summary = fs::read_to_string(out.join("grid_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().next().unwrap().starts_with("cell,k,epochs,seed,status"));

    // rerunning with a different worker count reproduces every cell
    let again = dir.path().join("g2");
    let o = dimred(&[
        "--input", s(&input), "--out", s(&again), "--seed", "3", "grid", "--algorithm", "umap", "--param", "k=5,10",
        "--param", "epochs=20,40", "--workers", "1",
    ]);
    assert_eq!(code(&o), 0);
    for d in dirs {
        let name = d.file_name().unwrap();
        assert_eq!(fs::read(d.join("embedding.csv")).unwrap(), fs::read(again.join(name).join("embedding.csv")).unwrap());
    }
}
