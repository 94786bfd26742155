//! `canopy` command line: ingest datasets, train forests, predict,
//! evaluate, run benchmark grids, and generate synthetic datasets.
//!
//! Exit codes: 1 for data errors (parsing, malformed files), 2 for
//! configuration errors (invalid flags, shape mismatches), 3 for storage
//! and runtime failures.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use canopy::Error;

#[derive(Parser)]
#[command(name = "canopy", version, about = "Out-of-core random forest training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classification,
    Regression,
}

impl TaskArg {
    fn kind(self) -> canopy::data::TaskKind {
        match self {
            TaskArg::Classification => canopy::data::TaskKind::Classification,
            TaskArg::Regression => canopy::data::TaskKind::Regression,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StoreArg {
    Memory,
    Disk,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Woody,
    Subsets,
    Standard,
}

impl SchemeArg {
    fn scheme(self) -> canopy::forest::Scheme {
        match self {
            SchemeArg::Woody => canopy::forest::Scheme::Woody,
            SchemeArg::Subsets => canopy::forest::Scheme::Subsets,
            SchemeArg::Standard => canopy::forest::Scheme::Standard,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Jsonl,
    Csv,
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("lambda {v} outside [0, 1]"))
    }
}

fn parse_max_features(s: &str) -> Result<canopy::splits::FeatureSelect, String> {
    match s {
        "sqrt" => Ok(canopy::splits::FeatureSelect::Sqrt),
        "all" => Ok(canopy::splits::FeatureSelect::All),
        other => other
            .parse::<usize>()
            .map(canopy::splits::FeatureSelect::Count)
            .map_err(|_| format!("{other:?} is not sqrt, all, or a count")),
    }
}

/// Training flags shared by `train` and `benchmark`.
#[derive(Args, Clone)]
struct TrainOpts {
    /// Total number of trees in the ensemble.
    #[arg(long, default_value_t = 24)]
    trees: usize,

    /// Number of top trees (woody scheme).
    #[arg(long = "top-trees", default_value_t = 6)]
    top_trees: usize,

    /// Bottom trees per top tree; inferred as trees / top-trees when omitted.
    #[arg(long = "bottom-per-top")]
    bottom_per_top: Option<usize>,

    /// Balance regularization for top-tree splits, in [0, 1].
    #[arg(long, default_value_t = 1.0, value_parser = parse_lambda)]
    lambda: f64,

    /// Random subset size R (defaults to min(500000, n, max(100 sqrt n, 100000))).
    #[arg(long = "subset-size")]
    subset_size: Option<u64>,

    /// Desired leaf bucket size M after distribution (same default as R).
    #[arg(long = "leaf-bucket-size")]
    leaf_bucket_size: Option<u64>,

    /// Streaming chunk size C in rows.
    #[arg(long = "chunk-size", default_value_t = 1_000_000)]
    chunk_size: usize,

    /// Where leaf buckets live during training.
    #[arg(long, value_enum, default_value_t = StoreArg::Memory)]
    store: StoreArg,

    /// Scratch directory for the disk store (falls back to CANOPY_SCRATCH,
    /// then the system temp dir).
    #[arg(long = "scratch-dir")]
    scratch_dir: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker pool width.
    #[arg(long, default_value_t = 4)]
    jobs: usize,

    /// Features examined per node split: sqrt, all, or a count.
    #[arg(long = "max-features", default_value = "sqrt", value_parser = parse_max_features)]
    max_features: canopy::splits::FeatureSelect,

    /// Disable bootstrap multiplicities for bottom / flat trees.
    #[arg(long = "no-bootstrap")]
    no_bootstrap: bool,

    /// Re-split buckets larger than this multiple of M (0 disables).
    #[arg(long = "hard-cap-multiplier", default_value_t = 8)]
    hard_cap_multiplier: u32,

    /// Stop top-tree growth on pure nodes (naive partitioning; diagnostic).
    #[arg(long = "top-purity-stop")]
    top_purity_stop: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CSV file (numeric columns, label last, optional header)
    /// to the binary dataset format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
    },

    /// Write a synthetic dataset.
    Generate {
        /// rare-class, skewed, or gaussian-mixture.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        rows: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Train a forest and write the model container.
    Train {
        /// Training dataset (binary, or CSV with --task).
        #[arg(long)]
        data: PathBuf,
        /// Task for CSV inputs (binary files are self-describing).
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Woody)]
        scheme: SchemeArg,
        #[arg(long)]
        output: PathBuf,
        /// Optional held-out set; fills the accuracy / mse report fields.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Append the metrics report to this file as well as stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Report format on stdout and in --report.
        #[arg(long, value_enum, default_value_t = ReportFormat::Jsonl)]
        format: ReportFormat,
        #[command(flatten)]
        opts: TrainOpts,
    },

    /// Write one predicted label per input row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "chunk-size", default_value_t = 1_000_000)]
        chunk_size: usize,
    },

    /// Print accuracy (classification) or MSE (regression) on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the predictions, one label per line.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long = "chunk-size", default_value_t = 1_000_000)]
        chunk_size: usize,
    },

    /// Run a scheme x train-size x seed grid and emit one CSV row per run.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated schemes (woody, subsets, standard).
        #[arg(long, value_delimiter = ',', default_value = "woody,subsets")]
        schemes: Vec<String>,
        /// Comma-separated training-set sizes (prefixes of --data).
        #[arg(long = "train-sizes", value_delimiter = ',')]
        train_sizes: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::Schema(_)
        | Error::Truncated { .. }
        | Error::Stream { .. }
        | Error::Format(_) => 1,
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Io(_) | Error::Storage { .. } | Error::UnknownBucket(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            input,
            output,
            task,
        } => commands::ingest(&input, &output, task.kind()),
        Command::Generate {
            kind,
            rows,
            output,
            seed,
        } => commands::generate(&kind, rows, &output, seed),
        Command::Train {
            data,
            task,
            scheme,
            output,
            test,
            report,
            format,
            opts,
        } => commands::train(
            &data,
            task.map(TaskArg::kind),
            scheme.scheme(),
            &output,
            test.as_deref(),
            report.as_deref(),
            format,
            &opts,
        ),
        Command::Predict {
            model,
            data,
            output,
            chunk_size,
        } => commands::predict(&model, &data, &output, chunk_size),
        Command::Evaluate {
            model,
            data,
            predictions,
            chunk_size,
        } => commands::evaluate(&model, &data, predictions.as_deref(), chunk_size),
        Command::Benchmark {
            data,
            test,
            schemes,
            train_sizes,
            seeds,
            output,
            opts,
        } => commands::benchmark(&data, &test, &schemes, &train_sizes, &seeds, &output, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
