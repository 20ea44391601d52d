//! Single runs: load a CSV, fit one algorithm, write its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use dimred::autoencoder::{
    classification_pipeline, deep_features, train_autoencoder, write_importance_csv, AeConfig, ClassifierConfig,
    PipelineConfig,
};
use dimred::data::standardize;
use dimred::ingest::{self, CsvSchema, Labels, LoadedTable};
use dimred::lle::{calc_k, fit_lle};
use dimred::metrics::{default_quality_k, evaluate, EmbeddingReport};
use dimred::pca::{fit_pca, transform, variance_report};
use dimred::som::{fcm_codes, kmeans_codes, map_observations, som_train, SomConfig, SomGrid};
use dimred::tsne::{tsne_run, TsneConfig};
use dimred::umap::{umap_run, UmapConfig};
use dimred::{DataMatrix, Embedding};
use ndarray::{Array2, ArrayView2};

use crate::params::{Algorithm, ParamReader, RunConfig};
use crate::svg::{scatter, ScatterLabels};
use crate::CliError;

/// Pairs sampled for the ρ statistic in reports.
pub const REPORT_MAX_PAIRS: usize = 10_000;

pub fn load_input(input: &Path, select: Option<&[String]>, label: Option<&str>) -> Result<LoadedTable, CliError> {
    if !input.is_file() {
        return Err(CliError::data(format!("input file not found: {}", input.display())));
    }
    let wrap = |e: dimred::Error| {
        let code = CliError::from(e);
        CliError {
            code: code.code,
            message: format!("{}: {}", input.display(), code.message),
        }
    };
    let select = match select {
        Some(s) => s.to_vec(),
        None => ingest::read_header(input)
            .map_err(wrap)?
            .into_iter()
            .filter(|h| Some(h.as_str()) != label)
            .collect(),
    };
    let mut schema = CsvSchema::new(select);
    if let Some(l) = label {
        schema = schema.with_label(l);
    }
    ingest::load_csv(input, &schema).map_err(wrap)
}

/// What an algorithm hands back for writing.
struct Fitted {
    embedding: Embedding,
    /// Data-space matrix the quality scores compare against.
    reference: Array2<f64>,
    axis_labels: (String, String),
    files: Vec<(&'static str, Vec<u8>)>,
    extra: BTreeMap<String, f64>,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> dimred::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn dim_labels(prefix: &str) -> (String, String) {
    (format!("{prefix} 1"), format!("{prefix} 2"))
}

fn prepared(data: &DataMatrix, standardize_flag: bool) -> Result<DataMatrix, CliError> {
    data.complete_values()
        .map_err(|_| CliError::data("input has missing values; run `dimred impute` first"))?;
    if standardize_flag {
        Ok(standardize(data)?.0)
    } else {
        Ok(data.clone())
    }
}

fn fit(cfg: &RunConfig, table: &LoadedTable) -> Result<Fitted, CliError> {
    let p = ParamReader(&cfg.params);
    let raw = &table.data;
    match cfg.algorithm {
        Algorithm::Pca => {
            raw.complete_values()
                .map_err(|_| CliError::data("input has missing values; run `dimred impute` first"))?;
            let q: usize = p.get("components", 2)?;
            let model = fit_pca(raw, cfg.standardize)?;
            let embedding = transform(&model, raw, q)?;
            let report = variance_report(&model);
            let pct = |i: usize| report.pve.get(i).map_or(0.0, |v| 100.0 * v);
            let reference = prepared(raw, cfg.standardize)?.into_values();
            let mut extra = BTreeMap::new();
            extra.insert("pve1".into(), report.pve[0]);
            if report.pve.len() > 1 {
                extra.insert("cpve2".into(), report.cpve[1]);
            }
            Ok(Fitted {
                embedding,
                reference,
                axis_labels: (format!("PC1 ({:.1}%)", pct(0)), format!("PC2 ({:.1}%)", pct(1))),
                files: vec![
                    ("scree.csv", csv_bytes(|b| report.write_csv(b))?),
                    ("loadings.csv", csv_bytes(|b| model.write_loadings_csv(b))?),
                ],
                extra,
            })
        }
        Algorithm::Lle => {
            let x = prepared(raw, cfg.standardize)?;
            let model = fit_lle(&x, p.get("k", 12)?, p.get("dims", 2)?)?;
            let mut extra = BTreeMap::new();
            extra.insert("rss".into(), model.rss);
            Ok(Fitted {
                embedding: model.embedding,
                reference: x.into_values(),
                axis_labels: dim_labels("LLE"),
                files: Vec::new(),
                extra,
            })
        }
        Algorithm::CalcK => {
            let x = prepared(raw, cfg.standardize)?;
            let (lo, hi): (usize, usize) = (p.get("k_min", 1)?, p.get("k_max", 20)?);
            if lo == 0 || hi < lo {
                return Err(CliError::usage(format!("need 1 <= k_min <= k_max, got {lo}..{hi}")));
            }
            let ks: Vec<usize> = (lo..=hi).collect();
            let dims = p.get("dims", 2)?;
            let scan = calc_k(&x, &ks, dims, cfg.seed)?;
            let model = fit_lle(&x, scan.best_k, dims)?;
            let mut extra = BTreeMap::new();
            extra.insert("best_k".into(), scan.best_k as f64);
            extra.insert("rss".into(), model.rss);
            Ok(Fitted {
                embedding: model.embedding,
                reference: x.into_values(),
                axis_labels: dim_labels("LLE"),
                files: vec![("calc_k.csv", csv_bytes(|b| scan.write_csv(b))?)],
                extra,
            })
        }
        Algorithm::Tsne => {
            let x = prepared(raw, cfg.standardize)?;
            let d = TsneConfig::default();
            let tcfg = TsneConfig {
                perplexity: p.get("perplexity", d.perplexity)?,
                theta: p.get("theta", d.theta)?,
                max_iter: p.get("max_iter", d.max_iter)?,
                learning_rate: p.get("learning_rate", d.learning_rate)?,
                momentum: p.get("momentum", d.momentum)?,
                final_momentum: p.get("final_momentum", d.final_momentum)?,
                momentum_switch_iter: p.get("momentum_switch_iter", d.momentum_switch_iter)?,
                early_exaggeration: p.get("early_exaggeration", d.early_exaggeration)?,
                exaggeration_iters: p.get("exaggeration_iters", d.exaggeration_iters)?,
                d: p.get("dims", d.d)?,
                seed: cfg.seed,
            };
            let result = tsne_run(&x, &tcfg)?;
            let mut extra = BTreeMap::new();
            if let Some(kl) = result.kl_trace.last() {
                extra.insert("final_kl".into(), *kl);
            }
            Ok(Fitted {
                files: vec![("kl_trace.csv", csv_bytes(|b| result.write_kl_trace_csv(b))?)],
                embedding: result.embedding,
                reference: x.into_values(),
                axis_labels: dim_labels("t-SNE"),
                extra,
            })
        }
        Algorithm::Umap => {
            let x = prepared(raw, cfg.standardize)?;
            let d = UmapConfig::default();
            let ucfg = UmapConfig {
                k: p.get("k", d.k)?,
                epochs: p.get("epochs", d.epochs)?,
                min_dist: p.get("min_dist", d.min_dist)?,
                spread: p.get("spread", d.spread)?,
                learning_rate: p.get("learning_rate", d.learning_rate)?,
                negative_sample_rate: p.get("negative_sample_rate", d.negative_sample_rate)?,
                d: p.get("dims", d.d)?,
                seed: cfg.seed,
            };
            let result = umap_run(&x, &ucfg)?;
            let mut extra = BTreeMap::new();
            extra.insert("a".into(), result.a);
            extra.insert("b".into(), result.b);
            Ok(Fitted {
                embedding: result.embedding,
                reference: x.into_values(),
                axis_labels: dim_labels("UMAP"),
                files: Vec::new(),
                extra,
            })
        }
        Algorithm::Som => fit_som(cfg, &p, raw),
        Algorithm::Autoencoder => fit_autoencoder(cfg, &p, table),
    }
}

fn fit_som(cfg: &RunConfig, p: &ParamReader<'_>, raw: &DataMatrix) -> Result<Fitted, CliError> {
    let x = prepared(raw, cfg.standardize)?;
    let (rows, cols): (usize, usize) = (p.get("rows", 10)?, p.get("cols", 10)?);
    let d = SomConfig::default();
    let scfg = SomConfig {
        rlen: p.get("rlen", d.rlen)?,
        alpha_start: p.get("alpha_start", d.alpha_start)?,
        alpha_end: p.get("alpha_end", d.alpha_end)?,
        radius_start: p.optional("radius_start")?,
        radius_end: p.get("radius_end", d.radius_end)?,
        seed: dimred::data::derive_seed(cfg.seed, 1),
    };
    let grid0 = SomGrid::from_data(rows, cols, x.values(), dimred::data::derive_seed(cfg.seed, 0))?;
    let (grid, trace) = som_train(x.values(), &grid0, &scfg)?;
    let mapping = map_observations(&grid, x.values());
    let coords = Array2::from_shape_fn((x.n_rows(), 2), |(i, c)| grid.node_xy[[mapping.assignments[i], c]]);

    let mut files = vec![
        ("codes.csv", csv_bytes(|b| grid.write_codes_csv(x.feature_names(), b))?),
        ("trace.csv", csv_bytes(|b| trace.write_csv(b))?),
        ("assignments.csv", csv_bytes(|b| mapping.write_csv(&grid, b))?),
    ];
    let clusters: usize = p.get("clusters", 3)?;
    let mut extra = BTreeMap::new();
    if clusters >= 2 && clusters <= grid.n_nodes() {
        let km = kmeans_codes(&grid, clusters, dimred::data::derive_seed(cfg.seed, 2))?;
        let fcm = fcm_codes(&grid, clusters, p.get("fuzzifier", 2.0)?, dimred::data::derive_seed(cfg.seed, 3))?;
        extra.insert("kmeans_within_ss".into(), km.within_ss);
        files.push((
            "node_clusters.csv",
            csv_bytes(|b| {
                let mut w = csv::Writer::from_writer(b);
                let mut header = vec!["node".to_string(), "node_row".into(), "node_col".into(), "kmeans".into()];
                header.extend((1..=clusters).map(|c| format!("fcm{c}")));
                w.write_record(&header)?;
                for node in 0..grid.n_nodes() {
                    let mut rec = vec![
                        node.to_string(),
                        (node / grid.cols).to_string(),
                        (node % grid.cols).to_string(),
                        km.labels[node].to_string(),
                    ];
                    rec.extend(fcm.memberships.row(node).iter().map(|u| u.to_string()));
                    w.write_record(&rec)?;
                }
                w.flush()?;
                Ok(())
            })?,
        ));
    }
    if let Some(last) = trace.mean_bmu_distance.last() {
        extra.insert("final_mean_bmu_distance".into(), *last);
    }
    Ok(Fitted {
        embedding: Embedding::new(coords, "som")?,
        reference: x.into_values(),
        axis_labels: ("node row".into(), "node column".into()),
        files,
        extra,
    })
}

fn fit_autoencoder(cfg: &RunConfig, p: &ParamReader<'_>, table: &LoadedTable) -> Result<Fitted, CliError> {
    let raw = &table.data;
    let x = prepared(raw, cfg.standardize)?;
    let d = AeConfig::default();
    let ae = AeConfig {
        hidden_sizes: p.list("hidden", &d.hidden_sizes)?,
        epochs: p.get("epochs", d.epochs)?,
        batch_size: p.get("batch_size", d.batch_size)?,
        learning_rate: p.get("learning_rate", d.learning_rate)?,
        optimizer: p.get("optimizer", d.optimizer)?,
        denoise_sd: p.get("denoise_sd", d.denoise_sd)?,
        activation: p.get("activation", d.activation)?,
        overcomplete_ok: p.get("overcomplete_ok", false)?,
        seed: cfg.seed,
    };
    let layer: usize = p.get("layer", ae.hidden_sizes.len().div_ceil(2))?;
    let binary = table.labels.as_ref().filter(|l| l.levels.len() == 2);
    let classify: bool = p.get("classify", binary.is_some())?;
    let mut extra = BTreeMap::new();
    let mut files = Vec::new();

    let features = match (classify, binary) {
        (true, Some(labels)) => {
            let dc = ClassifierConfig::default();
            let pcfg = PipelineConfig {
                autoencoder: ae,
                classifier: ClassifierConfig {
                    hidden_sizes: p.list("classifier_hidden", &dc.hidden_sizes)?,
                    epochs: p.get("classifier_epochs", dc.epochs)?,
                    ..dc
                },
                feature_layer: layer,
                importance_repeats: p.get("importance_repeats", 5)?,
                seed: cfg.seed,
            };
            // the pipeline standardizes with training-part statistics itself
            let r = classification_pipeline(raw, &labels.ids, &pcfg)?;
            extra.insert("test_accuracy".into(), r.test_accuracy);
            let names = (&labels.levels[1], &labels.levels[0]);
            files.push(("loss_curve.csv", csv_bytes(|b| r.ae_report.write_csv(b))?));
            files.push(("confusion.csv", csv_bytes(|b| r.confusion.write_csv(names.0, names.1, b))?));
            files.push(("importance.csv", csv_bytes(|b| write_importance_csv(&r.importance, b))?));
            r.features
        }
        (true, None) => {
            return Err(CliError::usage("classify=true needs a binary --label column"));
        }
        (false, _) => {
            let (params, report) = train_autoencoder(x.values(), None, &ae)?;
            files.push(("loss_curve.csv", csv_bytes(|b| report.write_csv(b))?));
            deep_features(&params, x.values(), layer)?
        }
    };
    files.push(("deep_features.csv", csv_bytes(|b| ingest::write_csv(b, &features, None))?));
    Ok(Fitted {
        embedding: Embedding::new(features.values().to_owned(), "autoencoder")?,
        reference: x.into_values(),
        axis_labels: (features.feature_names()[0].clone(), features.feature_names().get(1).cloned().unwrap_or_default()),
        files,
        extra,
    })
}

pub fn write_embedding_csv<W: std::io::Write>(out: W, coords: ArrayView2<f64>, labels: Option<&Labels>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row_id".to_string()];
    header.extend((1..=coords.ncols()).map(|j| format!("dim{j}")));
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(dimred::Error::from)?;
    for (i, row) in coords.rows().into_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        if let Some(l) = labels {
            rec.push(l.levels[l.ids[i] as usize].clone());
        }
        w.write_record(&rec).map_err(dimred::Error::from)?;
    }
    w.flush().map_err(dimred::Error::from)?;
    Ok(())
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn write_report(dir: &Path, report: &EmbeddingReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(dir, "report.json", format!("{json}\n").as_bytes())
}

/// Runs one configuration against already-loaded data. A failure still
/// leaves a `report.json` with status "failed" in the output directory.
pub fn run_loaded(cfg: &RunConfig, table: &LoadedTable) -> Result<EmbeddingReport, CliError> {
    cfg.algorithm.check_params(cfg.params.keys())?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out.display())))?;
    let start = Instant::now();
    match run_inner(cfg, table, start) {
        Ok(report) => Ok(report),
        Err(err) => {
            let mut report = EmbeddingReport::failed(cfg.algorithm.id(), cfg.echo(), start.elapsed().as_secs_f64(), err.message.clone());
            report.extra.insert("exit_code".into(), f64::from(err.code));
            write_report(&cfg.out, &report)?;
            Err(err)
        }
    }
}

fn run_inner(cfg: &RunConfig, table: &LoadedTable, start: Instant) -> Result<EmbeddingReport, CliError> {
    let fitted = fit(cfg, table)?;
    let runtime = start.elapsed().as_secs_f64();
    let coords = fitted.embedding.coords();
    let n = coords.nrows();
    let quality_k = default_quality_k(n);
    let mut report = evaluate(
        fitted.reference.view(),
        coords,
        fitted.embedding.algo_tag(),
        quality_k,
        REPORT_MAX_PAIRS,
        cfg.seed,
    )?;
    report.runtime_seconds = runtime;
    report.config = cfg.echo();
    report.extra = fitted.extra;

    let mut emb = Vec::new();
    write_embedding_csv(&mut emb, coords, table.labels.as_ref())?;
    write_file(&cfg.out, "embedding.csv", &emb)?;
    for (name, bytes) in &fitted.files {
        write_file(&cfg.out, name, bytes)?;
    }
    let labels = table.labels.as_ref().map(|l| ScatterLabels {
        ids: &l.ids,
        levels: &l.levels,
    });
    let svg = scatter(coords, labels, &fitted.axis_labels.0, &fitted.axis_labels.1, cfg.algorithm.id());
    write_file(&cfg.out, "scatter.svg", svg.as_bytes())?;
    write_report(&cfg.out, &report)?;
    Ok(report)
}

pub fn run(cfg: &RunConfig) -> Result<EmbeddingReport, CliError> {
    let table = match load_input(&cfg.input, cfg.select.as_deref(), cfg.label.as_deref()) {
        Ok(t) => t,
        Err(err) => {
            // best effort: the load error is what the caller needs to see
            if fs::create_dir_all(&cfg.out).is_ok() {
                let mut report = EmbeddingReport::failed(cfg.algorithm.id(), cfg.echo(), 0.0, err.message.clone());
                report.extra.insert("exit_code".into(), f64::from(err.code));
                let _ = write_report(&cfg.out, &report);
            }
            return Err(err);
        }
    };
    run_loaded(cfg, &table)
}
