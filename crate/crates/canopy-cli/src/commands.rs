//! Command implementations.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use canopy::data::{
    ingest_csv, open_dataset, write_dataset, DataFormat, DatasetHandle, ScratchStore, Task,
    TaskKind,
};
use canopy::error::{Error, Result};
use canopy::forest::{
    build_big_forest, build_standard_forest, build_subsets_forest, load_forest, save_forest,
    ForestConfig, ForestModel, Scheme, TrainStats,
};
use canopy::splits::FeatureSelect;
use canopy::synth::{generate as synth_generate, SynthKind};
use canopy::tree::LeafLabel;

use crate::report::{BenchRow, MetricsReport, BENCH_HEADER};
use crate::{ReportFormat, StoreArg, TrainOpts};

pub fn ingest(input: &Path, output: &Path, kind: TaskKind) -> Result<()> {
    let summary = ingest_csv(input, output, kind)?;
    println!(
        "rows={} features={} classes={}",
        summary.n_rows, summary.n_features, summary.k
    );
    Ok(())
}

pub fn generate(kind: &str, rows: u64, output: &Path, seed: u64) -> Result<()> {
    let kind = SynthKind::parse(kind)
        .ok_or_else(|| Error::Config(format!("unknown synthetic kind {kind:?}")))?;
    if rows < 1 {
        return Err(Error::Config("--rows must be >= 1".into()));
    }
    let (block, task) = synth_generate(kind, rows, seed);
    write_dataset(output, task, &block)?;
    println!(
        "kind={} rows={} features={} classes={} seed={}",
        kind.name(),
        rows,
        block.n_features(),
        task.n_classes(),
        seed
    );
    Ok(())
}

/// Open a dataset by sniffing the binary magic; non-binary files are
/// treated as CSV and converted on the fly (requires a task).
fn open_input(path: &Path, task: Option<TaskKind>, chunk_size: usize) -> Result<DatasetHandle> {
    let mut magic = [0u8; 4];
    let is_binary = File::open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Parse {
                row: 0,
                msg: format!("cannot open {}: file not found", path.display()),
            },
            _ => Error::Io(e),
        })?
        .read_exact(&mut magic)
        .map(|_| magic == *canopy::data::DATASET_MAGIC.as_slice())
        .unwrap_or(false);
    if is_binary {
        open_dataset(path, DataFormat::Binary, task, chunk_size)
    } else {
        open_dataset(path, DataFormat::Csv, task, chunk_size)
    }
}

/// Resolve (n_top, n_b) from the tree-count flags for a scheme.
fn resolve_shape(scheme: Scheme, opts: &TrainOpts) -> Result<(usize, usize)> {
    if opts.trees < 1 {
        return Err(Error::Config("--trees must be >= 1".into()));
    }
    match scheme {
        Scheme::Woody => {
            if opts.top_trees < 1 {
                return Err(Error::Config("--top-trees must be >= 1".into()));
            }
            let n_b = match opts.bottom_per_top {
                Some(b) => {
                    if opts.top_trees * b != opts.trees {
                        return Err(Error::Config(format!(
                            "--top-trees {} x --bottom-per-top {b} != --trees {}",
                            opts.top_trees, opts.trees
                        )));
                    }
                    b
                }
                None => {
                    if !opts.trees.is_multiple_of(opts.top_trees) {
                        return Err(Error::Config(format!(
                            "--trees {} is not a multiple of --top-trees {}",
                            opts.trees, opts.top_trees
                        )));
                    }
                    opts.trees / opts.top_trees
                }
            };
            Ok((opts.top_trees, n_b))
        }
        Scheme::Subsets | Scheme::Standard => Ok((opts.trees, 1)),
    }
}

fn forest_config(scheme: Scheme, opts: &TrainOpts, seed: u64) -> Result<ForestConfig> {
    let (n_top, n_b) = resolve_shape(scheme, opts)?;
    Ok(ForestConfig {
        n_top,
        n_b,
        subset_size: opts.subset_size,
        leaf_bucket_size: opts.leaf_bucket_size,
        lambda: opts.lambda,
        chunk_size: opts.chunk_size,
        seed,
        jobs: opts.jobs,
        bootstrap: !opts.no_bootstrap,
        features_per_node: opts.max_features,
        hard_cap_multiplier: (opts.hard_cap_multiplier > 0).then_some(opts.hard_cap_multiplier),
        top_purity_stop: opts.top_purity_stop,
    })
}

fn scratch_root(opts: &TrainOpts) -> PathBuf {
    opts.scratch_dir
        .clone()
        .or_else(|| std::env::var_os("CANOPY_SCRATCH").map(PathBuf::from))
        .unwrap_or_else(std::env::temp_dir)
}

fn run_scheme(
    scheme: Scheme,
    handle: &DatasetHandle,
    config: &ForestConfig,
    opts: &TrainOpts,
) -> Result<(ForestModel, TrainStats)> {
    match scheme {
        Scheme::Standard => build_standard_forest(handle, config),
        _ => {
            let store = match opts.store {
                StoreArg::Memory => ScratchStore::in_memory(),
                StoreArg::Disk => {
                    let run_id = format!(
                        "run-{}-{}-{}",
                        scheme.name(),
                        config.seed,
                        std::process::id()
                    );
                    ScratchStore::on_disk(&scratch_root(opts), &run_id)?
                }
            };
            let result = match scheme {
                Scheme::Woody => build_big_forest(handle, &store, config),
                Scheme::Subsets => build_subsets_forest(handle, &store, config),
                Scheme::Standard => unreachable!(),
            };
            // Scratch contents are per-run; drop them once training ends.
            let _ = store.cleanup();
            result
        }
    }
}

fn feature_select_name(f: FeatureSelect) -> String {
    match f {
        FeatureSelect::All => "all".to_string(),
        FeatureSelect::Sqrt => "sqrt".to_string(),
        FeatureSelect::Count(c) => c.to_string(),
    }
}

fn config_echo(config: &ForestConfig, stats: &TrainStats) -> Vec<(String, String)> {
    // Store kind and jobs are omitted on purpose: they do not affect the
    // trained model bytes.
    vec![
        ("config.seed".into(), config.seed.to_string()),
        ("config.lambda".into(), config.lambda.to_string()),
        ("config.n_top".into(), stats.n_top.to_string()),
        ("config.n_b".into(), stats.n_b.to_string()),
        ("config.subset_size".into(), stats.subset_size.to_string()),
        (
            "config.leaf_bucket_size".into(),
            stats.leaf_bucket_size.to_string(),
        ),
        ("config.chunk_size".into(), config.chunk_size.to_string()),
        ("config.bootstrap".into(), config.bootstrap.to_string()),
        (
            "config.max_features".into(),
            feature_select_name(config.features_per_node),
        ),
    ]
}

/// Streamed evaluation; optionally writes one predicted label per line.
fn evaluate_stream(
    model: &ForestModel,
    data: &DatasetHandle,
    mut sink: Option<&mut dyn Write>,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut hits = 0u64;
    let mut sq_err = 0.0f64;
    let mut total = 0u64;
    for chunk in data.chunks() {
        let chunk = chunk?;
        let predictions = model.predict_block(&chunk.rows)?;
        for (i, p) in predictions.iter().enumerate() {
            match p {
                LeafLabel::Class(c) => {
                    if *c == chunk.rows.labels().class(i) {
                        hits += 1;
                    }
                    if let Some(w) = sink.as_deref_mut() {
                        writeln!(w, "{c}")?;
                    }
                }
                LeafLabel::Value(v) => {
                    let e = v - chunk.rows.labels().value(i);
                    sq_err += e * e;
                    if let Some(w) = sink.as_deref_mut() {
                        writeln!(w, "{v}")?;
                    }
                }
            }
        }
        total += predictions.len() as u64;
    }
    if total == 0 {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    match model.task {
        Task::Classification { .. } => Ok((Some(hits as f64 / total as f64), None)),
        Task::Regression => Ok((None, Some(sq_err / total as f64))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    data: &Path,
    task: Option<TaskKind>,
    scheme: Scheme,
    output: &Path,
    test: Option<&Path>,
    report: Option<&Path>,
    format: ReportFormat,
    opts: &TrainOpts,
) -> Result<()> {
    let config = forest_config(scheme, opts, opts.seed)?;
    let handle = open_input(data, task, opts.chunk_size)?;
    let started = Instant::now();
    let (model, stats) = run_scheme(scheme, &handle, &config, opts)?;
    let total_secs = started.elapsed().as_secs_f64();

    save_forest(output, &model, &config_echo(&config, &stats))?;

    let mut metrics = MetricsReport::from_stats(
        &stats,
        handle.n_features(),
        handle.task().n_classes(),
        opts.chunk_size,
        match opts.store {
            StoreArg::Memory => "memory",
            StoreArg::Disk => "disk",
        },
        opts.jobs,
        total_secs,
    );
    metrics.seed = opts.seed;
    if let Some(test_path) = test {
        let test_handle = open_input(test_path, task, opts.chunk_size)?;
        let (acc, mse) = evaluate_stream(&model, &test_handle, None)?;
        metrics.accuracy = acc;
        metrics.mse = mse;
    }

    let line = match format {
        ReportFormat::Jsonl => metrics.to_json_line(),
        ReportFormat::Csv => format!("{}\n{}", MetricsReport::csv_header(), metrics.to_csv_row()),
    };
    println!("{line}");
    if let Some(report_path) = report {
        let mut f = BufWriter::new(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(report_path)?,
        );
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn predict(model_path: &Path, data: &Path, output: &Path, chunk_size: usize) -> Result<()> {
    let (model, _) = load_forest(model_path)?;
    let handle = open_input(data, None, chunk_size)?;
    check_arity(&model, &handle)?;
    let mut out = BufWriter::new(File::create(output)?);
    for chunk in handle.chunks() {
        let chunk = chunk?;
        for p in model.predict_block(&chunk.rows)? {
            match p {
                LeafLabel::Class(c) => writeln!(out, "{c}")?,
                LeafLabel::Value(v) => writeln!(out, "{v}")?,
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn check_arity(model: &ForestModel, data: &DatasetHandle) -> Result<()> {
    if model.n_features != data.n_features() {
        return Err(Error::Domain(format!(
            "model expects {} features, dataset has {}",
            model.n_features,
            data.n_features()
        )));
    }
    if model.task.kind() != data.task().kind() {
        return Err(Error::Domain(
            "model task does not match dataset task".into(),
        ));
    }
    Ok(())
}

pub fn evaluate(
    model_path: &Path,
    data: &Path,
    predictions: Option<&Path>,
    chunk_size: usize,
) -> Result<()> {
    let (model, _) = load_forest(model_path)?;
    let handle = open_input(data, None, chunk_size)?;
    check_arity(&model, &handle)?;
    let mut sink: Option<BufWriter<File>> = match predictions {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let (acc, mse) = evaluate_stream(&model, &handle, sink.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = sink {
        w.flush()?;
    }
    match (acc, mse) {
        (Some(a), _) => println!("accuracy {a:.6}"),
        (_, Some(m)) => println!("mse {m:.6}"),
        _ => unreachable!(),
    }
    Ok(())
}

pub fn benchmark(
    data: &Path,
    test: &Path,
    schemes: &[String],
    train_sizes: &[u64],
    seeds: &[u64],
    output: &Path,
    opts: &TrainOpts,
) -> Result<()> {
    if train_sizes.is_empty() {
        return Err(Error::Config("--train-sizes must not be empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("--seeds must not be empty".into()));
    }
    let parsed: Vec<Scheme> = schemes
        .iter()
        .map(|s| Scheme::parse(s).ok_or_else(|| Error::Config(format!("unknown scheme {s:?}"))))
        .collect::<Result<_>>()?;

    let full = open_input(data, None, opts.chunk_size)?;
    let test_handle = open_input(test, None, opts.chunk_size)?;
    let mut out = BufWriter::new(File::create(output)?);
    writeln!(out, "{BENCH_HEADER}")?;

    for &scheme in &parsed {
        for &n in train_sizes {
            for &seed in seeds {
                let handle = full.clone().prefix(n);
                let started = Instant::now();
                let row = match forest_config(scheme, opts, seed)
                    .and_then(|config| run_scheme(scheme, &handle, &config, opts))
                    .and_then(|(model, stats)| {
                        let (acc, mse) = evaluate_stream(&model, &test_handle, None)?;
                        Ok((stats, acc.or(mse)))
                    }) {
                    Ok((stats, score)) => BenchRow {
                        scheme: scheme.name().to_string(),
                        n_train: handle.n_rows(),
                        seed,
                        stats: Some(stats),
                        total_secs: started.elapsed().as_secs_f64(),
                        accuracy: score,
                        error: None,
                    },
                    Err(e) => BenchRow {
                        scheme: scheme.name().to_string(),
                        n_train: handle.n_rows(),
                        seed,
                        stats: None,
                        total_secs: started.elapsed().as_secs_f64(),
                        accuracy: None,
                        error: Some(e.to_string()),
                    },
                };
                writeln!(out, "{}", row.to_csv_row())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
