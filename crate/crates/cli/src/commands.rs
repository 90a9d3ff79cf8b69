//! Command implementations. Every command validates its full
//! configuration and inputs before creating any output file.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cmpagg::compare::{ComparisonKind, ALL_KINDS};
use cmpagg::data::{
    generate_synthetic, instance_json, load_dataset, write_jsonl, LoadMode, MatchInstance,
    TaskShape,
};
use cmpagg::embedding::{EmbeddingTable, Vocabulary};
use cmpagg::error::{Error, Result};
use cmpagg::metrics::map_mrr;
use cmpagg::model::{Model, ModelConfig};
use cmpagg::train::{eval_accuracy, scored_questions, train, Checkpoint};

use crate::args::{AblateArgs, EvalArgs, GenDataArgs, InspectArgs, TrainArgs};
use crate::config::{RunConfig, SyntheticSpec};

/// Where the instances come from: a JSON-Lines file or an in-process
/// synthetic generator.
enum DataSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DataSource {
    fn resolve(file: Option<&PathBuf>, synthetic: Option<&str>, what: &str) -> Result<Self> {
        match (file, synthetic) {
            (Some(path), None) => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "{what} file {} does not exist",
                        path.display()
                    )));
                }
                Ok(DataSource::File(path.clone()))
            }
            (None, Some(spec)) => Ok(DataSource::Synthetic(SyntheticSpec::parse(spec)?)),
            (Some(_), Some(_)) => Err(Error::Config(format!(
                "give either a {what} file or --synthetic, not both"
            ))),
            (None, None) => Err(Error::Config(format!(
                "no {what} data: pass a dataset file or --synthetic"
            ))),
        }
    }

    /// Task shape implied by the source, reconciled with an explicit
    /// request or a checkpoint's shape if present.
    fn shape(&self, explicit: Option<TaskShape>) -> Result<TaskShape> {
        match self {
            DataSource::Synthetic(spec) => {
                let shape = spec.task.shape();
                if let Some(requested) = explicit {
                    if requested != shape {
                        return Err(Error::Config(format!(
                            "task shape {requested} conflicts with synthetic task {} ({shape})",
                            spec.task
                        )));
                    }
                }
                Ok(shape)
            }
            DataSource::File(_) => Ok(explicit.unwrap_or(TaskShape::SelectFromK)),
        }
    }

    fn load(&self, shape: TaskShape, lenient: bool, fallback_seed: u64) -> Result<Vec<MatchInstance>> {
        match self {
            DataSource::File(path) => {
                let mode = if lenient {
                    LoadMode::Lenient
                } else {
                    LoadMode::Strict
                };
                let loaded = load_dataset(path, shape, mode)?;
                for warning in &loaded.warnings {
                    eprintln!("warning: {}: {warning}", path.display());
                }
                if loaded.instances.is_empty() {
                    return Err(Error::Format(format!(
                        "{} contains no usable instances",
                        path.display()
                    )));
                }
                Ok(loaded.instances)
            }
            DataSource::Synthetic(spec) => generate_synthetic(
                spec.task,
                spec.n,
                spec.vocab_size,
                spec.seed.unwrap_or(fallback_seed),
            ),
        }
    }
}

enum EmbeddingSource {
    File(PathBuf),
    Random { dim: usize },
}

impl EmbeddingSource {
    fn resolve(file: Option<&PathBuf>, random: bool, dim: usize) -> Result<Self> {
        match (file, random) {
            (Some(path), false) => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "embedding file {} does not exist",
                        path.display()
                    )));
                }
                Ok(EmbeddingSource::File(path.clone()))
            }
            (None, true) => Ok(EmbeddingSource::Random { dim }),
            (Some(_), true) => Err(Error::Config(
                "--embeddings and --random-embeddings are mutually exclusive".into(),
            )),
            (None, false) => Err(Error::Config(
                "no embeddings: pass --embeddings FILE or --random-embeddings".into(),
            )),
        }
    }

    fn load(&self, vocab: &Vocabulary, seed: u64) -> Result<EmbeddingTable> {
        match self {
            EmbeddingSource::File(path) => EmbeddingTable::load_pretrained(path, vocab),
            EmbeddingSource::Random { dim } => EmbeddingTable::random(*dim, vocab, seed),
        }
    }
}

fn classes_in(data: &[MatchInstance], shape: TaskShape) -> usize {
    match shape {
        TaskShape::ClassifyPair => data
            .iter()
            .map(|i| i.label.primary_index() + 1)
            .max()
            .unwrap_or(2)
            .max(2),
        _ => 2,
    }
}

fn build_model(
    run: &RunConfig,
    shape: TaskShape,
    data: &[MatchInstance],
    embeddings: &EmbeddingSource,
) -> Result<Model> {
    let vocab = Vocabulary::from_tokens(data.iter().flat_map(|i| i.all_tokens()));
    let table = embeddings.load(&vocab, run.train.seed)?;
    let cfg = ModelConfig {
        comparison: run.train.comparison,
        windows: run.train.windows.clone(),
        hidden_dim: run.train.hidden_dim,
        task_shape: shape,
        num_classes: classes_in(data, shape),
    };
    Model::init(&cfg, vocab, table, run.train.seed)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_metrics_log(path: &Path, history: &[cmpagg::train::EpochRecord]) -> Result<()> {
    let mut file = File::create(path)?;
    for record in history {
        let line = serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let run = RunConfig::resolve(&args.shared)?;
    let mut cfg = run.train.clone();
    cfg.log_accuracy = args.log_accuracy;
    let source = DataSource::resolve(args.train.as_ref(), args.shared.synthetic.as_deref(), "train")?;
    let embeddings =
        EmbeddingSource::resolve(args.embeddings.as_ref(), args.random_embeddings, run.embed_dim)?;
    let shape = source.shape(run.task_shape)?;
    let data = source.load(shape, args.lenient, cfg.seed)?;

    let mut model = build_model(&run, shape, &data, &embeddings)?;
    let outcome = train(&cfg, &mut model, &data)?;

    ensure_out_dir(&run.out_dir)?;
    let ckpt_path = run.out_dir.join("checkpoint.json");
    Checkpoint::from_model(&model, Some(&outcome.opt_state)).save(&ckpt_path)?;
    let metrics_path = run.out_dir.join("metrics.jsonl");
    write_metrics_log(&metrics_path, &outcome.history)?;

    let final_loss = outcome.history.last().map(|r| r.mean_loss);
    println!(
        "trained {} for {} epochs on {} instances ({shape})",
        cfg.comparison,
        outcome.history.len(),
        data.len()
    );
    if let Some(loss) = final_loss {
        println!("final mean loss {loss:.6}");
    }
    if args.log_accuracy {
        if let Some(acc) = outcome.history.last().and_then(|r| r.train_accuracy) {
            println!("final train accuracy {acc:.4}");
        }
    }
    println!("checkpoint -> {}", ckpt_path.display());
    println!("metrics    -> {}", metrics_path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    task_shape: String,
    comparison: String,
    instances: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mrr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    questions_skipped: Option<usize>,
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{what} file {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let run = RunConfig::resolve(&args.shared)?;
    require_file(&args.checkpoint, "checkpoint")?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if let Some(name) = &args.shared.comparison {
        ckpt.ensure_comparison(name.parse()?)?;
    }
    if let Some(shape) = run.task_shape {
        ckpt.ensure_task_shape(shape)?;
    }
    let source = DataSource::resolve(args.data.as_ref(), args.shared.synthetic.as_deref(), "eval")?;
    let shape = source.shape(Some(ckpt.task_shape))?;
    ckpt.ensure_task_shape(shape)?;
    let data = source.load(shape, args.lenient, run.train.seed)?;
    let (model, _) = ckpt.into_model()?;

    let accuracy = eval_accuracy(&model, &data)?;
    let mut report = EvalReport {
        task_shape: shape.name().into(),
        comparison: model.params.comparison.name().into(),
        instances: data.len(),
        accuracy,
        map: None,
        mrr: None,
        questions_skipped: None,
    };
    if shape != TaskShape::ClassifyPair {
        let ranking = map_mrr(&scored_questions(&model, &data)?)?;
        if ranking.skipped > 0 {
            eprintln!(
                "warning: {} question(s) without a correct candidate were skipped",
                ranking.skipped
            );
        }
        report.map = Some(ranking.map);
        report.mrr = Some(ranking.mrr);
        report.questions_skipped = Some(ranking.skipped);
    }

    ensure_out_dir(&run.out_dir)?;
    let path = run.out_dir.join("eval.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, json.as_bytes())?;
    println!("{json}");
    println!("report -> {}", path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationRow {
    comparison: String,
    status: String,
    epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_mean_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_accuracy: Option<f64>,
}

fn parse_kinds(text: Option<&str>) -> Result<Vec<ComparisonKind>> {
    match text {
        None => Ok(ALL_KINDS.to_vec()),
        Some(list) => {
            let kinds: Vec<ComparisonKind> = list
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_>>()?;
            if kinds.is_empty() {
                return Err(Error::Config("no comparison kinds given".into()));
            }
            Ok(kinds)
        }
    }
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let run = RunConfig::resolve(&args.shared)?;
    let kinds = parse_kinds(args.kinds.as_deref())?;
    let source = DataSource::resolve(args.train.as_ref(), args.shared.synthetic.as_deref(), "train")?;
    let embeddings =
        EmbeddingSource::resolve(args.embeddings.as_ref(), args.random_embeddings, run.embed_dim)?;
    let shape = source.shape(run.task_shape)?;
    let data = source.load(shape, args.lenient, run.train.seed)?;

    let mut rows = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut cfg = run.train.clone();
        cfg.comparison = kind;
        let per_kind = RunConfig {
            train: cfg.clone(),
            ..run.clone()
        };
        let result = build_model(&per_kind, shape, &data, &embeddings).and_then(|mut model| {
            let outcome = train(&cfg, &mut model, &data)?;
            let accuracy = eval_accuracy(&model, &data)?;
            Ok((outcome, accuracy))
        });
        let row = match result {
            Ok((outcome, accuracy)) => AblationRow {
                comparison: kind.name().into(),
                status: "ok".into(),
                epochs: outcome.history.len(),
                final_mean_loss: outcome.history.last().map(|r| r.mean_loss),
                train_accuracy: Some(accuracy),
            },
            Err(err) => AblationRow {
                comparison: kind.name().into(),
                status: err.to_string(),
                epochs: 0,
                final_mean_loss: None,
                train_accuracy: None,
            },
        };
        rows.push(row);
    }

    ensure_out_dir(&run.out_dir)?;
    let path = run.out_dir.join("ablation.json");
    let json = serde_json::to_string_pretty(&rows).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, json.as_bytes())?;

    println!(
        "{:<12} {:>8} {:>12} {:>10}  status",
        "comparison", "epochs", "mean_loss", "train_acc"
    );
    for row in &rows {
        println!(
            "{:<12} {:>8} {:>12} {:>10}  {}",
            row.comparison,
            row.epochs,
            row.final_mean_loss
                .map_or_else(|| "-".into(), |l| format!("{l:.4}")),
            row.train_accuracy
                .map_or_else(|| "-".into(), |a| format!("{a:.3}")),
            row.status
        );
    }
    println!("table -> {}", path.display());
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let run = RunConfig::resolve(&args.shared)?;
    require_file(&args.checkpoint, "checkpoint")?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let source = DataSource::resolve(args.data.as_ref(), args.shared.synthetic.as_deref(), "inspect")?;
    let shape = source.shape(Some(ckpt.task_shape))?;
    ckpt.ensure_task_shape(shape)?;
    let data = source.load(shape, args.lenient, run.train.seed)?;
    let (model, _) = ckpt.into_model()?;

    let selected: Vec<&MatchInstance> = match args.ids.as_deref() {
        None => data.iter().collect(),
        Some(list) => {
            let mut picked = Vec::new();
            for id in list.split(',').map(str::trim) {
                match data.iter().find(|inst| inst.id == id) {
                    Some(inst) => picked.push(inst),
                    None => {
                        let available: Vec<&str> =
                            data.iter().take(20).map(|i| i.id.as_str()).collect();
                        return Err(Error::Input(format!(
                            "unknown example id {id:?}; available ids include {}",
                            available.join(", ")
                        )));
                    }
                }
            }
            picked
        }
    };

    ensure_out_dir(&run.out_dir)?;
    let path = run.out_dir.join("activations.jsonl");
    let mut file = File::create(&path)?;
    for inst in &selected {
        let report = model.activations(inst)?;
        let line = serde_json::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    println!(
        "wrote activation reports for {} example(s) -> {}",
        selected.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let run = RunConfig::resolve(&args.shared)?;
    let spec = match args.shared.synthetic.as_deref() {
        Some(text) => SyntheticSpec::parse(text)?,
        None => {
            return Err(Error::Config(
                "gen-data needs --synthetic task:n[:seed=S][:vocab=V]".into(),
            ))
        }
    };
    let data = generate_synthetic(
        spec.task,
        spec.n,
        spec.vocab_size,
        spec.seed.unwrap_or(run.train.seed),
    )?;
    let shape = spec.task.shape();
    let path = match &args.out {
        Some(path) => path.clone(),
        None => {
            ensure_out_dir(&run.out_dir)?;
            run.out_dir.join(format!("{}.jsonl", spec.task))
        }
    };
    write_jsonl(&path, &data, shape)?;
    println!(
        "wrote {} {} instance(s) ({shape}) -> {}",
        data.len(),
        spec.task,
        path.display()
    );
    // a taste of the format on stdout
    if let Some(first) = data.first() {
        println!("first: {}", instance_json(first, shape));
    }
    Ok(())
}
