use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tabemb::codec::sha256;
use tabemb::colgraph::{build_graph_pool, load_pool, pool_config_hash, pool_file_name, save_pool, GraphPool, PoolParams};
use tabemb::embed::{EmbeddingBackend, EmbeddingCache, LocalHashBackend};
use tabemb::eval::{
    attention_heatmap, embeddings_tsv, freq_stratified_f1, generate_synthetic, run_ablation_sweep, EvalReport,
    FrequencyBin, SweepAxis, SweepSpec, SynthConfig,
};
use tabemb::nn::Variant;
use tabemb::pipeline::{load_model, predict_table, save_model, PredictOptions, PredictionRecord, TrainedModel};
use tabemb::table::{load_dataset, load_dataset_all, read_tables, Dataset, Split, Task};
use tabemb::{Error, Result};
use tracing::info;

use crate::config::{
    embed_settings_bytes, resolve_train, run_hash, train_config_bytes, BackendSettings, EmbedArgs, EmbedSettings,
    FileConfig, TrainArgs,
};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Probability that a non-anchor column holds an ambiguous type.
    #[arg(long)]
    pub ambiguity: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub valid: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub null_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL tables to annotate (dataset record shape; labels are ignored).
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL of `{"table_id": .., "pairs": [[subject, object], ..]}` restricting CPA output.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Also write raw logits to this JSONL file.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Proceed when the backend differs from the training backend but has the same width.
    #[arg(long)]
    pub allow_backend_mismatch: bool,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated axes: variant, depth, m.
    #[arg(long, default_value = "variant,depth,m")]
    pub axes: String,
    #[arg(long, default_value = "cta")]
    pub tasks: String,
    #[arg(long, default_value = "gat,gcn,ggnn,none")]
    pub variants: String,
    #[arg(long, default_value = "1,2,3,4")]
    pub depths: String,
    #[arg(long, default_value = "5,15,25")]
    pub ms: String,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct ModelReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

fn list<T: std::str::FromStr<Err = Error>>(text: &str) -> Result<Vec<T>> {
    text.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect()
}

fn numbers(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::invalid(format!("{what}: {s:?} is not a number"))))
        .collect()
}

fn open_cache(dir: Option<&Path>, backend: &dyn EmbeddingBackend) -> Result<Option<EmbeddingCache>> {
    dir.map(|d| EmbeddingCache::open(d, backend.backend_id(), backend.dim())).transpose()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(fs::write(path, bytes)?)
}

/// Reads `path` line by line, skipping blank lines, with 1-based line numbers.
fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        train_tables: args.train.unwrap_or(d.train_tables),
        valid_tables: args.valid.unwrap_or(d.valid_tables),
        test_tables: args.test.unwrap_or(d.test_tables),
        topics: args.topics.unwrap_or(d.topics),
        ambiguity_rate: args.ambiguity.unwrap_or(d.ambiguity_rate),
        null_rate: args.null_rate.unwrap_or(d.null_rate),
        seed: args.seed.unwrap_or(d.seed),
        ..d
    };
    let dataset = generate_synthetic(&config)?;
    tabemb::table::write_dataset(&args.out, &dataset)?;
    println!(
        "wrote {} train, {} valid, {} test tables to {}",
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len(),
        args.out.display()
    );
    Ok(())
}

fn expected_pool(dataset: &Dataset, split: Split, backend: &dyn EmbeddingBackend, params: &PoolParams) -> [u8; 32] {
    pool_config_hash(dataset.split(split), &dataset.labels, backend.backend_id(), backend.dim(), params)
}

pub fn embed(data: &Path, out: &Path, flags: &EmbedArgs, file: &FileConfig) -> Result<()> {
    let settings = EmbedSettings::resolve(flags, file)?;
    let dataset = load_dataset_all(data)?;
    let backend = settings.backend()?;
    let cache_dir = settings.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let cache = EmbeddingCache::open(&cache_dir, backend.backend_id(), backend.dim())?;
    let before = cache.len();
    let params = settings.pool_params();
    for split in Split::ALL {
        let tables = dataset.split(split);
        if tables.is_empty() {
            continue;
        }
        let columns: usize = tables.iter().map(|t| t.table.n_columns()).sum();
        let hash = expected_pool(&dataset, split, backend.as_ref(), &params);
        let path = out.join(pool_file_name(split.as_str(), &hash));
        if load_pool(&path).is_ok_and(|p| p.meta.config_hash == hash) {
            println!("{split}: {} tables, {columns} columns, up to date: {}", tables.len(), path.display());
            continue;
        }
        let pool = build_graph_pool(tables, &dataset.labels, backend.as_ref(), &params, Some(&cache))?;
        let path = save_pool(out, split.as_str(), &pool)?;
        println!("{split}: {} tables, {columns} columns -> {}", pool.len(), path.display());
    }
    match cache.len() - before {
        0 => println!("cache hit, 0 embeddings computed"),
        n => println!("{n} embeddings computed"),
    }
    Ok(())
}

fn find_pool(dir: &Path, split: Split, hash: &[u8; 32]) -> Result<GraphPool> {
    let path = dir.join(pool_file_name(split.as_str(), hash));
    if !path.exists() {
        return Err(Error::validation(format!(
            "no {split} pool matching the current dataset and embedding settings ({} not found); \
             run `tabemb embed` with the same settings",
            path.display()
        )));
    }
    let pool = load_pool(&path)?;
    if &pool.meta.config_hash != hash {
        return Err(Error::validation(format!("{}: pool config hash mismatch", path.display())));
    }
    Ok(pool)
}

pub fn train(
    data: &Path,
    pools: &Path,
    task: &str,
    out: &Path,
    embed_flags: &EmbedArgs,
    train_flags: &TrainArgs,
    file: &FileConfig,
) -> Result<()> {
    let task: Task = task.parse()?;
    let settings = EmbedSettings::resolve(embed_flags, file)?;
    let config = resolve_train(task, train_flags, file, &settings)?;
    let dataset = load_dataset(data, task)?;
    let labels = dataset.labels.require(task)?;
    let backend = settings.backend()?;
    let params = settings.pool_params();

    let train_pool = find_pool(pools, Split::Train, &expected_pool(&dataset, Split::Train, backend.as_ref(), &params))?;
    let valid_pool = if dataset.valid.is_empty() {
        None
    } else {
        Some(find_pool(pools, Split::Valid, &expected_pool(&dataset, Split::Valid, backend.as_ref(), &params))?)
    };
    let (model, log) = tabemb::pipeline::train(&train_pool, labels, &config, valid_pool.as_ref())?;

    let h = run_hash(&[&train_pool.meta.config_hash, &train_config_bytes(&config)]);
    let stem = format!("{task}-{}-{h}", config.variant);
    let ckpt = out.join(format!("model-{stem}.ckpt"));
    let log_path = out.join(format!("train-log-{stem}.json"));
    fs::create_dir_all(out)?;
    save_model(&ckpt, &model)?;
    let json = serde_json::to_string_pretty(&log).map_err(|e| Error::format(e.to_string()))?;
    write_file(&log_path, json + "\n")?;
    if log.ablation {
        println!("ablation mode: no message passing");
    }
    let best = log.epochs.get(log.selected_epoch - 1).and_then(|e| e.valid_micro_f1);
    println!(
        "selected epoch {} of {}{}",
        log.selected_epoch,
        log.epochs.len(),
        best.map(|f| format!(" (validation micro-F1 {f:.4})")).unwrap_or_default()
    );
    println!("checkpoint: {}", ckpt.display());
    println!("log: {}", log_path.display());
    Ok(())
}

/// The backend a checkpoint was trained with. Local backends are rebuilt from
/// the recorded id unless the flags or config name a backend explicitly.
fn model_backend(model: &TrainedModel, flags: &EmbedArgs, file: &FileConfig) -> Result<(EmbedSettings, Box<dyn EmbeddingBackend>)> {
    let mut settings = EmbedSettings::resolve(flags, file)?;
    let explicit = flags.backend.is_some() || file.embed.backend.is_some() || flags.dim.is_some() || file.embed.dim.is_some();
    if !explicit {
        if let Some(local) = LocalHashBackend::from_backend_id(&model.backend_id) {
            settings.backend = BackendSettings::Local { dim: local.dim() };
            return Ok((settings, Box::new(local)));
        }
    }
    let backend = settings.backend()?;
    Ok((settings, backend))
}

#[derive(Deserialize)]
struct PairsLine {
    table_id: String,
    pairs: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct LogitsLine<'a> {
    table_id: &'a str,
    logits: Vec<Vec<f64>>,
}

pub fn predict(args: &PredictArgs, file: &FileConfig) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let (settings, backend) = model_backend(&model, &args.embed, file)?;
    let cache = open_cache(settings.cache_dir.as_deref(), backend.as_ref())?;
    let mut pairs: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    if let Some(path) = &args.pairs {
        if model.task() != Task::Cpa {
            return Err(Error::invalid(format!("--pairs only applies to cpa models, this one is {}", model.task())));
        }
        for (_, line) in jsonl::<PairsLine>(path)? {
            pairs.entry(line.table_id).or_default().extend(line.pairs);
        }
    }
    let records = read_tables(&args.input)?;
    let (mut out, mut logits_out) = (String::new(), String::new());
    for raw in &records {
        let table = raw.to_table()?;
        let options = PredictOptions {
            pairs: pairs.get(table.id()).cloned(),
            allow_backend_mismatch: args.allow_backend_mismatch,
        };
        let (prediction, logits) = predict_table(&table, &model, backend.as_ref(), cache.as_ref(), &options)?;
        let rec = PredictionRecord::new(table.id(), &prediction, &model.labels, None);
        out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::format(e.to_string()))?);
        out.push('\n');
        if args.logits.is_some() {
            let line = LogitsLine {
                table_id: table.id(),
                logits: logits.to_rows(),
            };
            logits_out.push_str(&serde_json::to_string(&line).map_err(|e| Error::format(e.to_string()))?);
            logits_out.push('\n');
        }
    }
    write_file(&args.out, out)?;
    if let Some(path) = &args.logits {
        write_file(path, logits_out)?;
    }
    println!("{} predictions -> {}", records.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    report: &'a EvalReport,
    frequency_bins: Option<&'a [FrequencyBin; 3]>,
}

pub fn eval(data: &Path, split: &str, task: &str, predictions: &Path, out: &Path) -> Result<()> {
    let task: Task = task.parse()?;
    let split: Split = split.parse()?;
    let dataset = load_dataset(data, task)?;
    let labels = dataset.labels.require(task)?;
    let by_id: HashMap<String, PredictionRecord> = jsonl::<PredictionRecord>(predictions)?
        .into_iter()
        .map(|(_, r)| (r.table_id.clone(), r))
        .collect();
    let ordinal = |id: &str, name: &str| {
        labels
            .ordinal(name)
            .ok_or_else(|| Error::validation(format!("table {id}: predicted label {name:?} is not a {task} label")))
    };
    let missing = |id: &str| Error::validation(format!("no {task} prediction for table {id}"));

    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    for t in dataset.split(split) {
        let id = t.table.id();
        let rec = by_id.get(id);
        match task {
            Task::Cta => {
                let Some(cols) = &t.cta else { continue };
                let got = rec.and_then(|r| r.cta.as_ref()).ok_or_else(|| missing(id))?;
                if got.len() != cols.len() {
                    return Err(Error::validation(format!(
                        "table {id}: {} column predictions for {} columns",
                        got.len(),
                        cols.len()
                    )));
                }
                for (gold, name) in cols.iter().zip(got) {
                    if let Some(g) = gold {
                        preds.push(ordinal(id, name)?);
                        golds.push(*g);
                    }
                }
            }
            Task::Cpa => {
                for pair in t.cpa.iter().flatten() {
                    let got = rec.and_then(|r| r.cpa.as_ref()).ok_or_else(|| missing(id))?;
                    let (_, _, name) = got
                        .iter()
                        .find(|(s, o, _)| (*s, *o) == (pair.subject, pair.object))
                        .ok_or_else(|| {
                            Error::validation(format!("table {id}: no prediction for pair ({}, {})", pair.subject, pair.object))
                        })?;
                    preds.push(ordinal(id, name)?);
                    golds.push(pair.label);
                }
            }
            Task::Tta => {
                let Some(g) = t.tta else { continue };
                let name = rec.and_then(|r| r.tta.as_ref()).ok_or_else(|| missing(id))?;
                preds.push(ordinal(id, name)?);
                golds.push(g);
            }
        }
    }
    if golds.is_empty() {
        return Err(Error::validation(format!("{split} split has no {task} labels")));
    }
    let report = EvalReport::new(&preds, &golds, labels)?;
    let bins = if labels.len() >= 3 {
        Some(freq_stratified_f1(&preds, &golds, &dataset.train_frequencies(task))?)
    } else {
        None
    };
    let mut md = report.to_markdown();
    if let Some(bins) = &bins {
        md.push_str("\n| frequency bin | classes | mean F1 | excluded (no test support) |\n|---|---|---|---|\n");
        for b in bins {
            let f1 = b.mean_f1.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            md.push_str(&format!("| {} | {} | {f1} | {} |\n", b.name, b.classes.len(), b.excluded.len()));
        }
    }
    let h = run_hash(&[&fs::read(predictions)?, &labels.fingerprint(), split.as_str().as_bytes()]);
    let stem = out.join(format!("eval-{task}-{split}-{h}"));
    let json = serde_json::to_string_pretty(&EvalOutput {
        report: &report,
        frequency_bins: bins.as_ref(),
    })
    .map_err(|e| Error::format(e.to_string()))?;
    write_file(&stem.with_extension("md"), &md)?;
    write_file(&stem.with_extension("json"), json + "\n")?;
    print!("{md}");
    println!("\nreport: {}", stem.with_extension("md").display());
    Ok(())
}

pub fn sweep(args: &SweepArgs, file: &FileConfig) -> Result<()> {
    let tasks: Vec<Task> = list(&args.tasks)?;
    let Some(&first) = tasks.first() else {
        return Err(Error::invalid("--tasks is empty"));
    };
    let spec = SweepSpec {
        axes: list::<SweepAxis>(&args.axes)?,
        tasks,
        variants: list::<Variant>(&args.variants)?,
        depths: numbers(&args.depths, "--depths")?,
        ms: numbers(&args.ms, "--ms")?,
    };
    if spec.axes.is_empty() {
        return Err(Error::invalid("--axes is empty"));
    }
    let settings = EmbedSettings::resolve(&args.embed, file)?;
    let base = resolve_train(first, &args.train, file, &settings)?;
    let dataset = load_dataset_all(&args.data)?;
    let backend = settings.backend()?;
    let cache = open_cache(settings.cache_dir.as_deref(), backend.as_ref())?;
    let report = run_ablation_sweep(&dataset, &base, &spec, backend.as_ref(), cache.as_ref())?;

    let data_hash = expected_pool(&dataset, Split::Train, backend.as_ref(), &settings.pool_params());
    let spec_text = format!("{} {} {} {} {}", args.axes, args.tasks, args.variants, args.depths, args.ms);
    let h = run_hash(&[&data_hash, &embed_settings_bytes(&settings), &train_config_bytes(&base), spec_text.as_bytes()]);
    let stem = args.out.join(format!("sweep-{h}"));
    write_file(&stem.with_extension("csv"), report.to_csv())?;
    write_file(&stem.with_extension("md"), report.to_markdown())?;
    print!("{}", report.to_markdown());
    println!("\nreport: {}", stem.with_extension("csv").display());
    Ok(())
}

/// Loads the checkpoint and embeds one split with the checkpoint's sampling settings.
fn model_and_pool(args: &ModelReportArgs, file: &FileConfig) -> Result<(TrainedModel, GraphPool, Dataset, String)> {
    let model = load_model(&args.checkpoint)?;
    let (settings, backend) = model_backend(&model, &args.embed, file)?;
    if backend.backend_id() != model.backend_id {
        return Err(Error::validation(format!(
            "model was trained on backend {} but {} was configured",
            model.backend_id,
            backend.backend_id()
        )));
    }
    let split: Split = args.split.parse()?;
    let dataset = load_dataset_all(&args.data)?;
    if dataset.split(split).is_empty() {
        return Err(Error::validation(format!("{split} split is empty")));
    }
    let cache = open_cache(settings.cache_dir.as_deref(), backend.as_ref())?;
    let params = PoolParams {
        m: model.config.m,
        seed: model.config.seed,
        block_size: model.config.block_size,
    };
    let pool = build_graph_pool(dataset.split(split), &dataset.labels, backend.as_ref(), &params, cache.as_ref())?;
    info!(tables = pool.len(), "embedded {split} split");
    let h = run_hash(&[&sha256(&fs::read(&args.checkpoint)?), &pool.meta.config_hash]);
    Ok((model, pool, dataset, format!("{split}-{h}")))
}

pub fn heatmap(args: &ModelReportArgs, file: &FileConfig) -> Result<()> {
    let (model, pool, dataset, stem) = model_and_pool(args, file)?;
    let labels = dataset.labels.require(Task::Cta)?;
    let matrix = attention_heatmap(&model.network, &pool, labels)?;
    let path = args.out.join(format!("heatmap-{stem}.csv"));
    write_file(&path, matrix.to_csv())?;
    println!("heatmap: {}", path.display());
    Ok(())
}

pub fn export_embeddings(args: &ModelReportArgs, file: &FileConfig) -> Result<()> {
    let (model, pool, dataset, stem) = model_and_pool(args, file)?;
    let tsv = embeddings_tsv(&model.network, &pool, dataset.labels.get(Task::Cta))?;
    let path = args.out.join(format!("embeddings-{stem}.tsv"));
    write_file(&path, tsv)?;
    println!("embeddings: {}", path.display());
    Ok(())
}
