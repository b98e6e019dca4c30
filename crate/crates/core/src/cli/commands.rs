use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CliError, RunConfig};
use crate::clustering::FeatureOrdering;
use crate::data::{apply_normalizer, fit_normalizer, load_csv, synth_generate, window, Dataset, SeriesTable};
use crate::explainer::{contributions_svg, Aggregation, Explanation};
use crate::framing::write_atomic;
use crate::model::HdlcnnModel;
use crate::pipeline::{evaluate_dataset, explain_class, fit_with_ordering, order_features};

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write(path, &text)
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<HdlcnnModel, CliError> {
    HdlcnnModel::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = synth_generate(&cfg.synth)?;
    out.train.save(&cfg.paths.train)?;
    out.test.save(&cfg.paths.test)?;
    write_json(&cfg.paths.ground_truth, &out.ground_truth)?;
    println!(
        "simulated {} train and {} test windows of {} features x {} steps -> {}, {}",
        out.train.len(),
        out.test.len(),
        out.train.n_features(),
        out.train.n_timesteps(),
        cfg.paths.train.display(),
        cfg.paths.test.display()
    );
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let ing = &cfg.ingest;
    if ing.class_names.len() < 2 || ing.train.is_empty() || ing.test.is_empty() {
        return Err(CliError::Config(
            "ingest needs at least two class_names and non-empty train and test file lists".into(),
        ));
    }
    if let Some(bad) = ing.train.iter().chain(&ing.test).find(|f| f.class >= ing.class_names.len()) {
        return Err(CliError::Config(format!(
            "{}: class {} but only {} class_names",
            bad.path.display(),
            bad.class,
            ing.class_names.len()
        )));
    }
    let stride = ing.stride.unwrap_or(ing.window);
    let read = |files: &[super::LabeledCsv]| -> Result<Vec<(SeriesTable, usize)>, CliError> {
        files
            .iter()
            .map(|f| {
                load_csv(&f.path)
                    .map(|t| (t, f.class))
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", f.path.display())))
            })
            .collect()
    };
    let train_tables = read(&ing.train)?;
    let test_tables = read(&ing.test)?;
    let names = train_tables[0].0.names.clone();
    if let Some((t, _)) = train_tables.iter().chain(&test_tables).find(|(t, _)| t.names != names) {
        return Err(CliError::Runtime(format!(
            "CSV columns {:?} differ from the first training file's {:?}",
            t.names, names
        )));
    }
    let refs: Vec<&SeriesTable> = train_tables.iter().map(|(t, _)| t).collect();
    let stats = fit_normalizer(&SeriesTable::concat(&refs)?);
    let build = |tables: &[(SeriesTable, usize)]| -> Result<Dataset, CliError> {
        let mut samples = Vec::new();
        for (t, class) in tables {
            samples.extend(window(&apply_normalizer(t, &stats)?, ing.window, stride, *class)?);
        }
        Ok(Dataset::new(samples, ing.class_names.clone(), names.clone(), stats.clone())?)
    };
    let (train, test) = (build(&train_tables)?, build(&test_tables)?);
    train.save(&cfg.paths.train)?;
    test.save(&cfg.paths.test)?;
    println!("ingested {} train and {} test windows", train.len(), test.len());
    Ok(())
}

/// Ordering file: the ordering itself plus the two clusters for reading.
#[derive(Serialize, Deserialize)]
struct OrderingFile {
    #[serde(flatten)]
    ordering: FeatureOrdering,
    clusters: Vec<Vec<String>>,
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    let train = load_dataset(&cfg.paths.train)?;
    let (dendrogram, ordering) = order_features(&train, &cfg.model)?;
    if let Some(d) = &dendrogram {
        write(&cfg.paths.reports.join("dendrogram.csv"), &d.to_csv())?;
    }
    let named = |ids: &[usize]| ids.iter().map(|&i| train.feature_names[i].clone()).collect::<Vec<_>>();
    let (first, second) = ordering.permutation.split_at(ordering.boundary);
    let clusters = vec![named(first), named(second)];
    println!("feature clusters: {:?} | {:?}", clusters[0], clusters[1]);
    write_json(&cfg.paths.ordering, &OrderingFile { ordering, clusters })
}

fn read_ordering(path: &Path) -> Result<FeatureOrdering, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(format!("cannot read ordering {} (run `hdlcnn cluster` first): {e}", path.display()))
    })?;
    let file: OrderingFile =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(file.ordering)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let train = load_dataset(&cfg.paths.train)?;
    let ordering = read_ordering(&cfg.paths.ordering)?;
    if ordering.len() != train.n_features() {
        return Err(CliError::Runtime(format!(
            "ordering covers {} features but the training set has {}",
            ordering.len(),
            train.n_features()
        )));
    }
    let (model, history) = fit_with_ordering(&train, ordering, &cfg.model, &cfg.train, cfg.seed)?;
    model.save(&cfg.paths.model)?;
    let mut csv = String::from("epoch,loss,train_acc\n");
    for h in &history {
        let _ = writeln!(csv, "{},{},{}", h.epoch, h.loss, h.accuracy);
    }
    write(&cfg.paths.reports.join("history.csv"), &csv)?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs: loss {:.4}, train accuracy {:.3} -> {}",
            history.len(),
            last.loss,
            last.accuracy,
            cfg.paths.model.display()
        );
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(&cfg.paths.model)?;
    let test = load_dataset(&cfg.paths.test)?;
    let metrics = evaluate_dataset(&model, &test)?;
    write_json(&cfg.paths.reports.join("metrics.json"), &metrics)?;
    write(&cfg.paths.reports.join("confusion.csv"), &metrics.confusion_csv(&test.class_names))?;
    println!("test accuracy {:.4} on {} windows", metrics.overall_accuracy, test.len());
    Ok(())
}

#[derive(Serialize)]
struct ImportanceReport<'a> {
    target_class: usize,
    class_name: &'a str,
    aggregation: Aggregation,
    n_samples_used: usize,
    feature_names: &'a [String],
    values: &'a [f64],
    ranking: &'a [usize],
    root_cause: usize,
    root_cause_name: &'a str,
}

fn contributions_csv(e: &Explanation) -> String {
    let t = e.contributions.shape()[1];
    let mut out = (0..t).map(|j| j.to_string()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in e.contributions.data().chunks(t) {
        out += &row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        out.push('\n');
    }
    out
}

fn dir_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn explain(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(&cfg.paths.model)?;
    let train = load_dataset(&cfg.paths.train)?;
    let test = load_dataset(&cfg.paths.test)?;
    let n_classes = test.n_classes();
    let targets: Vec<usize> = match cfg.explain.target_class {
        Some(k) if k >= n_classes => {
            return Err(CliError::Config(format!("target_class {k} but the data has {n_classes} classes")))
        }
        Some(k) => vec![k],
        None => (1..n_classes).collect(),
    };
    for target in targets {
        let report = explain_class(&model, &train, &test, target, &cfg.explain, cfg.seed)?;
        let class_name = &test.class_names[target];
        let dir = cfg.paths.reports.join("explain").join(dir_name(class_name));
        for e in &report.explanations {
            write(&dir.join(format!("sample_{}.csv", e.sample_id)), &contributions_csv(e))?;
            if cfg.explain.heatmaps {
                let title = format!("{class_name} sample {}", e.sample_id);
                let svg = contributions_svg(&e.contributions, &test.feature_names, &title);
                write(&dir.join(format!("sample_{}.svg", e.sample_id)), &svg)?;
            }
        }
        let root = report.root_cause.feature;
        write_json(
            &dir.join("importance.json"),
            &ImportanceReport {
                target_class: target,
                class_name,
                aggregation: report.importance.aggregation,
                n_samples_used: report.importance.n_samples_used,
                feature_names: &test.feature_names,
                values: &report.importance.phi,
                ranking: &report.root_cause.ranking,
                root_cause: root,
                root_cause_name: &test.feature_names[root],
            },
        )?;
        println!(
            "{class_name}: root cause {} (feature {root}) over {} windows",
            test.feature_names[root], report.importance.n_samples_used
        );
    }
    Ok(())
}
