use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::manifest::{Job, JobKind, MANIFEST_FILE};
use super::{CliError, Strategy};
use crate::attention::Encoder;
use crate::augment::{
    apply_feature_exchange, before_after_report, plan_edge_adding, plan_edge_removing, plan_feature_exchange,
    write_exchange_report, EdgeOverlay,
};
use crate::autodiff::{read_checkpoint, write_checkpoint};
use crate::config::{Precision, RunConfig};
use crate::graph::io::{load_dataset, write_dataset, Dataset};
use crate::graph::{generate_synthetic, NodeRef, NodeTypeId, Skeleton, SplitSpec};
use crate::metrics::{ari, kmeans, nmi, ConfusionTally};
use crate::scalar::Scalar;
use crate::train::{train, write_log_tsv, TrainError};

pub const CHECKPOINT_FILE: &str = "checkpoint.hgmc";
pub const METRICS_FILE: &str = "metrics.tsv";

pub fn execute(job: &Job, out: &Path, force: bool) -> Result<(), CliError> {
    job.config.validate()?;
    prepare_out(out, force)?;
    match job.config.precision {
        Precision::F32 => dispatch::<f32>(job, out)?,
        Precision::F64 => dispatch::<f64>(job, out)?,
    }
    job.write(out)
}

fn dispatch<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    match job.kind {
        JobKind::Generate => generate::<S>(job, out),
        JobKind::Train => train_cmd::<S>(job, out),
        JobKind::Eval => eval::<S>(job, out),
        JobKind::Augment => augment::<S>(job, out),
        JobKind::Analyze => analyze::<S>(job, out),
        JobKind::ExportEmbeddings => export::<S>(job, out),
    }
}

fn prepare_out(out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty (pass --force to reuse it)",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn create(path: PathBuf) -> Result<BufWriter<fs::File>, CliError> {
    let f = fs::File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

/// The configured dataset and a short name for reports.
fn load<S: Scalar>(cfg: &RunConfig) -> Result<(Dataset<S>, String), CliError> {
    if cfg.data_dir.is_empty() {
        return Ok((generate_synthetic(&cfg.synth_spec())?, "synthetic".into()));
    }
    let dir = Path::new(&cfg.data_dir);
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.data_dir.clone());
    Ok((load_dataset(dir)?, name))
}

fn namer<S>(ds: &Dataset<S>) -> impl Fn(NodeRef) -> String + '_ {
    |n: NodeRef| ds.ids[n.ty.index()][n.idx].clone()
}

struct TrainedRun<S> {
    config: RunConfig,
    dataset: Dataset<S>,
    split: SplitSpec,
    encoder: Encoder<S>,
}

/// Loads a run directory written by `train`. `data` overrides the dataset
/// recorded in its manifest.
fn load_run<S: Scalar>(run: &Path, data: Option<&str>) -> Result<TrainedRun<S>, CliError> {
    let job = Job::read(&run.join(MANIFEST_FILE))?;
    if job.kind != JobKind::Train {
        return Err(CliError::Config(format!("{} is not a training run", run.display())));
    }
    let mut config = job.config;
    if let Some(d) = data {
        config.data_dir = d.to_string();
    }
    let (dataset, _) = load::<S>(&config)?;
    let split = dataset.split_or(config.split, config.seed)?;
    let (_, params) = read_checkpoint(&run.join(CHECKPOINT_FILE))?;
    let enc_cfg = config.train_config(dataset.labels.num_classes).encoder;
    let encoder = Encoder::from_params(enc_cfg, dataset.graph.schema(), dataset.labels.target, &params.cast())?;
    Ok(TrainedRun {
        config,
        dataset,
        split,
        encoder,
    })
}

fn generate<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let ds = generate_synthetic::<S>(&job.config.synth_spec())?;
    write_dataset(out, &ds)?;
    print!("{}", ds.summary());
    Ok(())
}

fn train_cmd<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let cfg = &job.config;
    let (ds, _) = load::<S>(cfg)?;
    let split = ds.split_or(cfg.split, cfg.seed)?;
    let tc = cfg.train_config(ds.labels.num_classes);
    let outcome = match train(&ds.graph, &ds.labels, &split, &tc) {
        Ok(o) => o,
        Err(TrainError::Diverged {
            epoch,
            reason,
            last_good,
        }) => {
            write_checkpoint(&out.join(CHECKPOINT_FILE), &*last_good)?;
            return Err(CliError::Runtime(format!(
                "training diverged at epoch {epoch}: {reason}; last good parameters saved to {}",
                out.join(CHECKPOINT_FILE).display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_log_tsv(create(out.join(METRICS_FILE))?, &outcome.log)?;
    write_checkpoint(&out.join(CHECKPOINT_FILE), outcome.encoder.params())?;
    let encoded = outcome.encoder.encode(&ds.graph, &[])?;
    let (_, test_micro, test_macro) = crate::train::evaluate_split(&encoded, &ds.labels, &split.test);
    println!(
        "epochs\t{}\tbest_epoch\t{}\ttest_micro_f1\t{test_micro:.4}\ttest_macro_f1\t{test_macro:.4}",
        outcome.log.len(),
        outcome.best_epoch
    );
    Ok(())
}

/// Test-split classification and clustering scores of one run.
fn score_run<S: Scalar>(run: &TrainedRun<S>) -> Result<[f64; 4], CliError> {
    let ds = &run.dataset;
    let test = &run.split.test;
    if test.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }
    let encoded = run.encoder.encode(&ds.graph, &[])?;
    let pred_all = encoded.predictions();
    let truth: Vec<usize> = test.iter().map(|&i| ds.labels.get(i).expect("test nodes are labeled")).collect();
    let pred: Vec<usize> = test.iter().map(|&i| pred_all[i]).collect();
    let tally = ConfusionTally::new(&pred, &truth, ds.labels.num_classes)?;
    let states = &encoded.final_states()[ds.labels.target.index()];
    let points: Vec<Vec<f64>> = test
        .iter()
        .map(|&i| states.row(i).iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let km = kmeans(&points, ds.labels.num_classes, run.config.restarts, run.config.seed)?;
    Ok([
        tally.macro_f1(),
        tally.micro_f1(),
        nmi(&km.assignment, &truth)?,
        ari(&km.assignment, &truth)?,
    ])
}

fn eval<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let data = job.arg("data");
    let mut rows = Vec::new();
    for run in job.args_named("run") {
        let path = Path::new(run);
        let scores = score_run(&load_run::<S>(path, data)?)?;
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| run.to_string());
        rows.push((id, scores));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 4];
    for (_, s) in &rows {
        for k in 0..4 {
            mean[k] += s[k] / n;
        }
    }
    let mut std = [0.0; 4];
    if rows.len() > 1 {
        for k in 0..4 {
            let ss: f64 = rows.iter().map(|(_, s)| (s[k] - mean[k]).powi(2)).sum();
            std[k] = (ss / (n - 1.0)).sqrt();
        }
    }
    let mut text = String::from("run_id\tmacro_f1\tmicro_f1\tnmi\tari\n");
    let fmt = |id: &str, s: &[f64; 4]| format!("{id}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n", s[0], s[1], s[2], s[3]);
    for (id, s) in &rows {
        text.push_str(&fmt(id, s));
    }
    text.push_str(&fmt("mean", &mean));
    text.push_str(&fmt("std", &std));
    fs::write(out.join("eval.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

fn augment<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let strategy = job
        .arg("strategy")
        .and_then(Strategy::parse)
        .ok_or_else(|| CliError::Config("missing or unknown strategy".into()))?;
    let cfg = &job.config;
    let (ds, name) = load::<S>(cfg)?;
    let encoder = match job.arg("run") {
        Some(run) => load_run::<S>(Path::new(run), Some(&cfg.data_dir).filter(|d| !d.is_empty()).map(|d| d.as_str()))?.encoder,
        None => Encoder::new(
            cfg.train_config(ds.labels.num_classes).encoder,
            ds.graph.schema(),
            ds.labels.target,
            cfg.seed,
        )?,
    };
    let g = &ds.graph;
    let target = ds.labels.target;
    let encoded = encoder.encode(g, &[])?;
    let targets: Vec<usize> = (0..g.node_count(target)).collect();
    let name_of = namer(&ds);
    if strategy == Strategy::FeatureExchange {
        let (plans, skipped) = plan_feature_exchange(g, &targets, cfg.k_ratio, &encoded, target)?;
        let _ = apply_feature_exchange(&plans);
        let mut w = create(out.join("exchange.tsv"))?;
        write_exchange_report(&mut w, &plans, &name_of)?;
        w.flush()?;
        println!("planned\t{}\tskipped\t{skipped}", plans.len());
        return Ok(());
    }
    let sk = Skeleton::from_graph(g);
    let plan = |add: bool| -> Result<EdgeOverlay, CliError> {
        let (ov, _) = if add {
            plan_edge_adding(g, &sk, target, &targets, cfg.k_ratio, &encoded.attention)?
        } else {
            plan_edge_removing(g, &sk, target, &targets, cfg.k_ratio, &encoded.attention)?
        };
        Ok(ov)
    };
    let overlay = match strategy {
        Strategy::EdgeAdd => plan(true)?,
        Strategy::EdgeRemove => plan(false)?,
        _ => plan(true)?.merge(plan(false)?),
    };
    let mut w = create(out.join("overlay.tsv"))?;
    overlay.write_tsv(&mut w, g.schema(), target, &name_of)?;
    w.flush()?;
    let after = Skeleton::from_graph(&overlay.apply(g)?);
    let report = before_after_report(&name, &sk, &after);
    report.write_tsv(create(out.join("report.tsv"))?)?;
    println!("added\t{}\tremoved\t{}", overlay.added.len(), overlay.removed.len());
    print!("{}\n{}\n", crate::augment::BeforeAfter::header(), report.row());
    Ok(())
}

fn analyze<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let (ds, name) = load::<S>(&job.config)?;
    let g = &ds.graph;
    let before = Skeleton::from_graph(g);
    let after = match job.arg("overlay") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            let index: Vec<HashMap<&str, usize>> = ds
                .ids
                .iter()
                .map(|ids| ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect())
                .collect();
            let lookup = |t: NodeTypeId, id: &str| index[t.index()].get(id).copied();
            let overlay = EdgeOverlay::read_tsv(&text, g.schema(), ds.labels.target, lookup)
                .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
            Skeleton::from_graph(&overlay.apply(g).map_err(|e| CliError::Data(format!("{path}: {e}")))?)
        }
        None => before.clone(),
    };
    let report = before_after_report(&name, &before, &after);
    report.write_tsv(create(out.join("report.tsv"))?)?;
    print!("{}\n{}\n", crate::augment::BeforeAfter::header(), report.row());
    Ok(())
}

fn export<S: Scalar>(job: &Job, out: &Path) -> Result<(), CliError> {
    let run = job.arg("run").ok_or_else(|| CliError::Config("missing run".into()))?;
    let trained = load_run::<S>(Path::new(run), job.arg("data"))?;
    let ds = &trained.dataset;
    let encoded = trained.encoder.encode(&ds.graph, &[])?;
    let schema = ds.graph.schema();
    let mut w = create(out.join("embeddings.tsv"))?;
    let dim = trained.encoder.config().hidden;
    let cols: Vec<String> = (0..dim).map(|k| format!("h{k}")).collect();
    writeln!(w, "node_type\tid\t{}", cols.join("\t"))?;
    for t in schema.node_type_ids() {
        let states = &encoded.final_states()[t.index()];
        for (i, id) in ds.ids[t.index()].iter().enumerate() {
            let vals: Vec<String> = states.row(i).iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
            writeln!(w, "{}\t{id}\t{}", schema.node_type(t).name, vals.join("\t"))?;
        }
    }
    w.flush()?;
    let mut a = create(out.join("attention.tsv"))?;
    encoded.attention.write_tsv(&mut a, schema, Some(&ds.ids))?;
    a.flush()?;
    Ok(())
}
