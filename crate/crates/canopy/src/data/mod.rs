//! Dataset representation, chunked streaming, random subsets, and the
//! scratch store for leaf buckets.
//!
//! A dataset is row-major: each row holds `n_features` `f32` feature values
//! and one label (`u32` class index or `f64` regression target). Rows are
//! read either from an in-memory block or from a binary file in fixed-size
//! chunks, so a consumer never needs more than one chunk resident.

mod binary;
mod csv_ingest;
mod sample;
mod store;

pub use binary::{write_dataset, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};
pub use csv_ingest::{ingest_csv, IngestSummary};
pub use sample::{reservoir_sample, reservoir_sample_many, RandomSubset};
pub use store::{BucketChunks, BucketData, BucketId, ScratchStore, StoreKind};

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gauge::{RowGauge, RowGuard};

/// Learning task of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Labels are class indices in `[0, n_classes)`.
    Classification { n_classes: u32 },
    /// Labels are real-valued targets.
    Regression,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Classification { .. } => TaskKind::Classification,
            Task::Regression => TaskKind::Regression,
        }
    }

    /// Class count; 0 for regression.
    pub fn n_classes(&self) -> u32 {
        match self {
            Task::Classification { n_classes } => *n_classes,
            Task::Regression => 0,
        }
    }
}

/// Task without the class count (known only after scanning the labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Classification => write!(f, "classification"),
            TaskKind::Regression => write!(f, "regression"),
        }
    }
}

/// Label storage for a block of rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Class(Vec<u32>),
    Value(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Value(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, i: usize) -> u32 {
        match self {
            Labels::Class(v) => v[i],
            Labels::Value(_) => panic!("class label requested from regression block"),
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Labels::Value(v) => v[i],
            Labels::Class(_) => panic!("regression label requested from classification block"),
        }
    }

    pub(crate) fn new_like(&self) -> Labels {
        match self {
            Labels::Class(_) => Labels::Class(Vec::new()),
            Labels::Value(_) => Labels::Value(Vec::new()),
        }
    }

    fn push_from(&mut self, other: &Labels, i: usize) {
        match (self, other) {
            (Labels::Class(dst), Labels::Class(src)) => dst.push(src[i]),
            (Labels::Value(dst), Labels::Value(src)) => dst.push(src[i]),
            _ => panic!("mixed label kinds"),
        }
    }
}

/// An owned, in-memory block of rows (a whole small dataset, one chunk,
/// one reservoir, or one bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    features: Vec<f32>,
    labels: Labels,
    n_features: usize,
}

impl RowBlock {
    pub fn new(n_features: usize, labels: Labels) -> Self {
        RowBlock {
            features: Vec::new(),
            labels,
            n_features,
        }
    }

    pub fn from_parts(n_features: usize, features: Vec<f32>, labels: Labels) -> Self {
        assert_eq!(features.len(), labels.len() * n_features);
        RowBlock {
            features,
            labels,
            n_features,
        }
    }

    /// Convenience constructor for classification tests and examples.
    pub fn from_rows_class(rows: &[(&[f32], u32)]) -> Self {
        let d = rows.first().map_or(0, |(x, _)| x.len());
        let mut features = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(rows.len());
        for (x, y) in rows {
            assert_eq!(x.len(), d);
            features.extend_from_slice(x);
            labels.push(*y);
        }
        RowBlock::from_parts(d, features, Labels::Class(labels))
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn feature(&self, row: usize, f: usize) -> f32 {
        self.features[row * self.n_features + f]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn push_row(&mut self, x: &[f32], label_src: &Labels, label_idx: usize) {
        assert_eq!(x.len(), self.n_features);
        self.features.extend_from_slice(x);
        self.labels.push_from(label_src, label_idx);
    }

    /// Append row `i` of `other`.
    pub fn push_from(&mut self, other: &RowBlock, i: usize) {
        self.push_row(other.row(i), &other.labels, i);
    }

    /// Overwrite row `slot` with row `i` of `other` (same shape required).
    pub fn replace_from(&mut self, slot: usize, other: &RowBlock, i: usize) {
        let d = self.n_features;
        self.features[slot * d..(slot + 1) * d].copy_from_slice(other.row(i));
        match (&mut self.labels, &other.labels) {
            (Labels::Class(dst), Labels::Class(src)) => dst[slot] = src[i],
            (Labels::Value(dst), Labels::Value(src)) => dst[slot] = src[i],
            _ => panic!("mixed label kinds"),
        }
    }

    pub fn reserve(&mut self, rows: usize) {
        self.features.reserve(rows * self.n_features);
        match &mut self.labels {
            Labels::Class(v) => v.reserve(rows),
            Labels::Value(v) => v.reserve(rows),
        }
    }

    pub(crate) fn slice_rows(&self, start: usize, end: usize) -> RowBlock {
        let d = self.n_features;
        let features = self.features[start * d..end * d].to_vec();
        let labels = match &self.labels {
            Labels::Class(v) => Labels::Class(v[start..end].to_vec()),
            Labels::Value(v) => Labels::Value(v[start..end].to_vec()),
        };
        RowBlock {
            features,
            labels,
            n_features: d,
        }
    }
}

/// One chunk of rows yielded by streaming iteration.
#[derive(Debug)]
pub struct Chunk {
    pub rows: RowBlock,
    /// Global index of the chunk's first row within the dataset.
    pub start_row: u64,
    _guard: Option<RowGuard>,
}

enum Source {
    Memory(Arc<RowBlock>),
    File(PathBuf),
}

impl Clone for Source {
    fn clone(&self) -> Self {
        match self {
            Source::Memory(b) => Source::Memory(Arc::clone(b)),
            Source::File(p) => Source::File(p.clone()),
        }
    }
}

/// Handle on a row-major numeric dataset, readable in fixed-size chunks.
///
/// Handles are cheap to clone and read-only; independent chunk streams over
/// the same handle are allowed.
#[derive(Clone)]
pub struct DatasetHandle {
    source: Source,
    task: Task,
    n_rows: u64,
    n_features: u32,
    chunk_size: usize,
    gauge: Option<Arc<RowGauge>>,
    // Keeps temp files (csv conversions) alive for the handle's lifetime.
    _owned: Option<Arc<OwnedFile>>,
}

#[derive(Debug)]
struct OwnedFile(PathBuf);

impl Drop for OwnedFile {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Input format accepted by [`open_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

/// Open a dataset file. CSV inputs are converted once to the binary chunk
/// format (streamed row by row into a temporary file); training always
/// reads the binary layout.
pub fn open_dataset(
    path: &Path,
    format: DataFormat,
    task: Option<TaskKind>,
    chunk_size: usize,
) -> Result<DatasetHandle> {
    if chunk_size == 0 {
        return Err(Error::config("chunk_size must be >= 1"));
    }
    match format {
        DataFormat::Binary => {
            let header = binary::validate_file(path)?;
            if let Some(kind) = task {
                if header.task.kind() != kind {
                    return Err(Error::schema(format!(
                        "file is a {} dataset but {} was requested",
                        header.task.kind(),
                        kind
                    )));
                }
            }
            Ok(DatasetHandle {
                source: Source::File(path.to_path_buf()),
                task: header.task,
                n_rows: header.n_rows,
                n_features: header.n_features,
                chunk_size,
                gauge: None,
                _owned: None,
            })
        }
        DataFormat::Csv => {
            let kind = task.ok_or_else(|| Error::config("csv input requires a task"))?;
            let tmp = temp_binary_path(path);
            let summary = ingest_csv(path, &tmp, kind)?;
            let mut handle = open_dataset(&tmp, DataFormat::Binary, Some(kind), chunk_size)?;
            handle._owned = Some(Arc::new(OwnedFile(tmp)));
            debug_assert_eq!(handle.n_rows, summary.n_rows);
            Ok(handle)
        }
    }
}

fn temp_binary_path(input: &Path) -> PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    std::env::temp_dir().join(format!(
        "canopy-{}-{}-{}.cnpy",
        stem,
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ))
}

impl DatasetHandle {
    /// Wrap an in-memory block as a dataset.
    pub fn from_block(block: RowBlock, task: Task, chunk_size: usize) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::domain("dataset must contain at least one row"));
        }
        if chunk_size == 0 {
            return Err(Error::config("chunk_size must be >= 1"));
        }
        validate_block(&block, task)?;
        Ok(DatasetHandle {
            n_rows: block.n_rows() as u64,
            n_features: block.n_features() as u32,
            source: Source::Memory(Arc::new(block)),
            task,
            chunk_size,
            gauge: None,
            _owned: None,
        })
    }

    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        assert!(chunk_size >= 1);
        self.chunk_size = chunk_size;
        self
    }

    /// Restrict the handle to the first `n` rows (used by benchmark grids).
    pub fn prefix(mut self, n: u64) -> Self {
        self.n_rows = self.n_rows.min(n.max(1));
        self
    }

    /// Attach a resident-row gauge; chunks and samples drawn through this
    /// handle are counted while they are alive.
    pub fn with_gauge(mut self, gauge: Arc<RowGauge>) -> Self {
        self.gauge = Some(gauge);
        self
    }

    pub(crate) fn gauge(&self) -> Option<&Arc<RowGauge>> {
        self.gauge.as_ref()
    }

    /// Stream the dataset in chunks of `chunk_size` rows (last may be short).
    pub fn chunks(&self) -> ChunkIter {
        ChunkIter::new(self)
    }

    /// Read the whole dataset into one block. Intended for datasets that
    /// fit in memory (the `standard` scheme and tests).
    pub fn read_all(&self) -> Result<RowBlock> {
        match &self.source {
            Source::Memory(block) => {
                if self.n_rows == block.n_rows() as u64 {
                    Ok((**block).clone())
                } else {
                    Ok(block.slice_rows(0, self.n_rows as usize))
                }
            }
            Source::File(_) => {
                let mut all = RowBlock::new(
                    self.n_features as usize,
                    match self.task {
                        Task::Classification { .. } => Labels::Class(Vec::new()),
                        Task::Regression => Labels::Value(Vec::new()),
                    },
                );
                all.reserve(self.n_rows as usize);
                for chunk in self.chunks() {
                    let chunk = chunk?;
                    for i in 0..chunk.rows.n_rows() {
                        all.push_from(&chunk.rows, i);
                    }
                }
                Ok(all)
            }
        }
    }
}

fn validate_block(block: &RowBlock, task: Task) -> Result<()> {
    match (task, block.labels()) {
        (Task::Classification { n_classes }, Labels::Class(v)) => {
            if let Some(bad) = v.iter().find(|&&c| c >= n_classes) {
                return Err(Error::schema(format!(
                    "class label {bad} outside [0, {n_classes})"
                )));
            }
            Ok(())
        }
        (Task::Regression, Labels::Value(_)) => Ok(()),
        _ => Err(Error::schema("label storage does not match task")),
    }
}

/// Iterator over dataset chunks.
pub struct ChunkIter {
    inner: ChunkIterInner,
    task: Task,
    n_features: usize,
    chunk_size: usize,
    remaining: u64,
    next_row: u64,
    gauge: Option<Arc<RowGauge>>,
    failed: bool,
}

enum ChunkIterInner {
    Memory(Arc<RowBlock>),
    File(Option<binary::ChunkReader>, PathBuf),
}

impl ChunkIter {
    fn new(handle: &DatasetHandle) -> Self {
        let inner = match &handle.source {
            Source::Memory(block) => ChunkIterInner::Memory(Arc::clone(block)),
            Source::File(path) => ChunkIterInner::File(None, path.clone()),
        };
        ChunkIter {
            inner,
            task: handle.task,
            n_features: handle.n_features as usize,
            chunk_size: handle.chunk_size,
            remaining: handle.n_rows,
            next_row: 0,
            gauge: handle.gauge.clone(),
            failed: false,
        }
    }
}

impl Iterator for ChunkIter {
    type Item = Result<Chunk>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.remaining == 0 {
            return None;
        }
        let take = self.chunk_size.min(self.remaining as usize);
        let rows = match &mut self.inner {
            ChunkIterInner::Memory(block) => {
                let start = self.next_row as usize;
                block.slice_rows(start, start + take)
            }
            ChunkIterInner::File(reader, path) => {
                if reader.is_none() {
                    match binary::ChunkReader::open(path) {
                        Ok(r) => *reader = Some(r),
                        Err(e) => {
                            self.failed = true;
                            return Some(Err(e));
                        }
                    }
                }
                match reader.as_mut().unwrap().read_rows(take) {
                    Ok(rows) => rows,
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(e));
                    }
                }
            }
        };
        debug_assert_eq!(rows.n_rows(), take);
        debug_assert_eq!(rows.n_features(), self.n_features);
        debug_assert_eq!(
            self.task.kind() == TaskKind::Classification,
            matches!(rows.labels(), Labels::Class(_))
        );
        let guard = self.gauge.as_ref().map(|g| g.acquire(take));
        let chunk = Chunk {
            rows,
            start_row: self.next_row,
            _guard: guard,
        };
        self.next_row += take as u64;
        self.remaining -= take as u64;
        Some(Ok(chunk))
    }
}
