//! Scratch storage for leaf buckets.
//!
//! During the distribution pass every training row is appended to the
//! bucket of the top-tree leaf it falls into, together with its bootstrap
//! multiplicities (`n_b` `u32` weights per row). Buckets live either in
//! memory or on disk under `<scratch>/<run-id>/toptree-<t>/bucket-<leaf>.bin`.
//!
//! Disk buckets are written incrementally: rows are appended to the bucket
//! file behind a placeholder header while weights collect in a `.wts`
//! sidecar; `finalize` moves the weights to the end of the bucket file and
//! patches the row count, leaving a self-describing file (dataset layout
//! plus trailing weights). A store reopened on an existing run directory
//! picks up the finalized buckets, so one training run can resume after a
//! restart.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::binary::{self, DatasetHeader, HEADER_LEN};
use crate::data::{RowBlock, Task};
use crate::error::{Error, Result};
use crate::gauge::{RowGauge, RowGuard};

/// Identifies one leaf bucket: the top tree it belongs to and the leaf index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketId {
    pub top: u32,
    pub leaf: u64,
}

impl BucketId {
    pub fn new(top: u32, leaf: u64) -> Self {
        BucketId { top, leaf }
    }
}

impl fmt::Display for BucketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "toptree-{}/bucket-{}", self.top, self.leaf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Memory,
    Disk,
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreKind::Memory => write!(f, "memory"),
            StoreKind::Disk => write!(f, "disk"),
        }
    }
}

/// A fully loaded bucket: rows plus per-row bootstrap weights
/// (`weights[row * n_b + slot]`).
#[derive(Debug)]
pub struct BucketData {
    pub rows: Arc<RowBlock>,
    pub weights: Arc<Vec<u32>>,
    pub n_b: usize,
    _guard: Option<RowGuard>,
}

#[derive(Debug, Clone, Copy)]
struct StoreMeta {
    task: Task,
    n_features: u32,
}

enum BucketState {
    MemOpen {
        rows: RowBlock,
        weights: Vec<u32>,
        n_b: Option<usize>,
        guard: Option<RowGuard>,
    },
    MemFinal {
        rows: Arc<RowBlock>,
        weights: Arc<Vec<u32>>,
        n_b: usize,
        _guard: Option<RowGuard>,
    },
    DiskOpen {
        rows_written: u64,
        n_b: Option<usize>,
    },
    DiskFinal {
        n_rows: u64,
        n_b: usize,
    },
}

struct Inner {
    meta: Option<StoreMeta>,
    buckets: BTreeMap<BucketId, BucketState>,
    gauge: Option<Arc<RowGauge>>,
}

/// Bucket storage backend, in memory or on disk.
pub struct ScratchStore {
    kind: StoreKind,
    run_dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl ScratchStore {
    pub fn in_memory() -> Self {
        ScratchStore {
            kind: StoreKind::Memory,
            run_dir: None,
            inner: Mutex::new(Inner {
                meta: None,
                buckets: BTreeMap::new(),
                gauge: None,
            }),
        }
    }

    /// Open (or reopen) a disk store rooted at `<scratch_root>/<run_id>`.
    pub fn on_disk(scratch_root: &Path, run_id: &str) -> Result<Self> {
        let run_dir = scratch_root.join(run_id);
        std::fs::create_dir_all(&run_dir).map_err(|e| Error::Storage {
            path: run_dir.clone(),
            source: e,
        })?;
        let store = ScratchStore {
            kind: StoreKind::Disk,
            run_dir: Some(run_dir),
            inner: Mutex::new(Inner {
                meta: None,
                buckets: BTreeMap::new(),
                gauge: None,
            }),
        };
        store.scan_existing()?;
        Ok(store)
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.run_dir.as_deref()
    }

    pub fn set_gauge(&self, gauge: Arc<RowGauge>) {
        self.inner.lock().unwrap().gauge = Some(gauge);
    }

    /// Declare the dataset shape once per run; appends check against it.
    pub fn configure(&self, task: Task, n_features: u32) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        match inner.meta {
            None => {
                inner.meta = Some(StoreMeta { task, n_features });
                Ok(())
            }
            Some(meta) if meta.task == task && meta.n_features == n_features => Ok(()),
            Some(_) => Err(Error::config(
                "scratch store already configured with a different shape",
            )),
        }
    }

    fn scan_existing(&self) -> Result<()> {
        let run_dir = self.run_dir.as_ref().unwrap();
        let mut inner = self.inner.lock().unwrap();
        let entries = match std::fs::read_dir(run_dir) {
            Ok(e) => e,
            Err(_) => return Ok(()),
        };
        for top_entry in entries.flatten() {
            let name = top_entry.file_name().to_string_lossy().into_owned();
            let Some(top) = name
                .strip_prefix("toptree-")
                .and_then(|s| s.parse::<u32>().ok())
            else {
                continue;
            };
            let Ok(buckets) = std::fs::read_dir(top_entry.path()) else {
                continue;
            };
            for bucket_entry in buckets.flatten() {
                let fname = bucket_entry.file_name().to_string_lossy().into_owned();
                let Some(leaf) = fname
                    .strip_prefix("bucket-")
                    .and_then(|s| s.strip_suffix(".bin"))
                    .and_then(|s| s.parse::<u64>().ok())
                else {
                    continue;
                };
                let path = bucket_entry.path();
                if let Ok((header, n_b)) = read_bucket_header(&path) {
                    if header.n_rows > 0 {
                        inner.buckets.insert(
                            BucketId::new(top, leaf),
                            BucketState::DiskFinal {
                                n_rows: header.n_rows,
                                n_b,
                            },
                        );
                        if inner.meta.is_none() {
                            inner.meta = Some(StoreMeta {
                                task: header.task,
                                n_features: header.n_features,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn bucket_path(&self, id: BucketId) -> PathBuf {
        self.run_dir
            .as_ref()
            .expect("disk store has a run dir")
            .join(format!("toptree-{}", id.top))
            .join(format!("bucket-{}.bin", id.leaf))
    }

    fn wts_path(&self, id: BucketId) -> PathBuf {
        self.bucket_path(id).with_extension("wts")
    }

    /// Append rows (with `rows.n_rows() * n_b` weights) to a bucket,
    /// creating it if needed. Appends to distinct buckets may run
    /// concurrently; one bucket has a single writer at a time.
    pub fn append(&self, id: BucketId, rows: &RowBlock, weights: &[u32]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let n_b = if weights.is_empty() {
            0
        } else {
            if !weights.len().is_multiple_of(rows.n_rows()) {
                return Err(Error::config("weight count is not a multiple of row count"));
            }
            weights.len() / rows.n_rows()
        };
        let mut inner = self.inner.lock().unwrap();
        let meta = inner
            .meta
            .ok_or_else(|| Error::config("scratch store not configured"))?;
        if rows.n_features() as u32 != meta.n_features {
            return Err(Error::config(
                "row arity does not match store configuration",
            ));
        }
        let gauge = inner.gauge.clone();
        match self.kind {
            StoreKind::Memory => {
                let state = inner
                    .buckets
                    .entry(id)
                    .or_insert_with(|| BucketState::MemOpen {
                        rows: RowBlock::new(rows.n_features(), rows.labels().new_like()),
                        weights: Vec::new(),
                        n_b: None,
                        guard: gauge.as_ref().map(|g| g.acquire(0)),
                    });
                match state {
                    BucketState::MemOpen {
                        rows: dst,
                        weights: wdst,
                        n_b: slot_nb,
                        guard,
                    } => {
                        check_n_b(slot_nb, n_b, id)?;
                        for i in 0..rows.n_rows() {
                            dst.push_from(rows, i);
                        }
                        wdst.extend_from_slice(weights);
                        if let Some(g) = guard.as_mut() {
                            g.grow(rows.n_rows());
                        }
                        Ok(())
                    }
                    _ => Err(Error::config(format!("bucket {id} already finalized"))),
                }
            }
            StoreKind::Disk => {
                let path = self.bucket_path(id);
                let state = inner.buckets.entry(id).or_insert(BucketState::DiskOpen {
                    rows_written: 0,
                    n_b: None,
                });
                let rows_written = match state {
                    BucketState::DiskOpen {
                        rows_written,
                        n_b: slot_nb,
                    } => {
                        check_n_b(slot_nb, n_b, id)?;
                        rows_written
                    }
                    _ => return Err(Error::config(format!("bucket {id} already finalized"))),
                };
                if *rows_written == 0 {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent).map_err(|e| storage_err(parent, e))?;
                    }
                    let mut w =
                        BufWriter::new(File::create(&path).map_err(|e| storage_err(&path, e))?);
                    binary::write_header(
                        &mut w,
                        &DatasetHeader {
                            task: meta.task,
                            n_rows: 0,
                            n_features: meta.n_features,
                        },
                    )?;
                    binary::write_rows(&mut w, rows)?;
                    w.flush().map_err(|e| storage_err(&path, e))?;
                } else {
                    let mut w = BufWriter::new(
                        OpenOptions::new()
                            .append(true)
                            .open(&path)
                            .map_err(|e| storage_err(&path, e))?,
                    );
                    binary::write_rows(&mut w, rows)?;
                    w.flush().map_err(|e| storage_err(&path, e))?;
                }
                if n_b > 0 {
                    let wts = self.wts_path(id);
                    let mut w = BufWriter::new(
                        OpenOptions::new()
                            .append(true)
                            .create(true)
                            .open(&wts)
                            .map_err(|e| storage_err(&wts, e))?,
                    );
                    for &weight in weights {
                        w.write_u32::<LittleEndian>(weight)?;
                    }
                    w.flush().map_err(|e| storage_err(&wts, e))?;
                }
                *rows_written += rows.n_rows() as u64;
                Ok(())
            }
        }
    }

    /// Seal all open buckets: disk buckets get their weights appended and
    /// the header row count patched; memory buckets become immutable.
    pub fn finalize(&self) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let ids: Vec<BucketId> = inner.buckets.keys().copied().collect();
        for id in ids {
            let state = inner.buckets.remove(&id).unwrap();
            let final_state = match state {
                BucketState::MemOpen {
                    rows,
                    weights,
                    n_b,
                    guard,
                } => BucketState::MemFinal {
                    n_b: n_b.unwrap_or(0),
                    rows: Arc::new(rows),
                    weights: Arc::new(weights),
                    _guard: guard,
                },
                BucketState::DiskOpen { rows_written, n_b } => {
                    let n_b = n_b.unwrap_or(0);
                    let path = self.bucket_path(id);
                    if n_b > 0 {
                        let wts = self.wts_path(id);
                        let mut dst = OpenOptions::new()
                            .append(true)
                            .open(&path)
                            .map_err(|e| storage_err(&path, e))?;
                        let mut src = File::open(&wts).map_err(|e| storage_err(&wts, e))?;
                        std::io::copy(&mut src, &mut dst).map_err(|e| storage_err(&path, e))?;
                        std::fs::remove_file(&wts).map_err(|e| storage_err(&wts, e))?;
                    }
                    let mut file = OpenOptions::new()
                        .write(true)
                        .open(&path)
                        .map_err(|e| storage_err(&path, e))?;
                    file.seek(SeekFrom::Start(7))?;
                    file.write_u64::<LittleEndian>(rows_written)?;
                    file.sync_data().map_err(|e| storage_err(&path, e))?;
                    BucketState::DiskFinal {
                        n_rows: rows_written,
                        n_b,
                    }
                }
                sealed => sealed,
            };
            inner.buckets.insert(id, final_state);
        }
        Ok(())
    }

    /// One-shot write of a complete bucket.
    pub fn write_bucket(&self, id: BucketId, rows: &RowBlock, weights: &[u32]) -> Result<()> {
        {
            let inner = self.inner.lock().unwrap();
            if inner.buckets.contains_key(&id) {
                return Err(Error::config(format!("bucket {id} already exists")));
            }
        }
        self.append(id, rows, weights)?;
        self.finalize_one(id)
    }

    fn finalize_one(&self, id: BucketId) -> Result<()> {
        // finalize() seals everything currently open; restricting to one id
        // is only needed by write_bucket, where the caller interleaves with
        // an ongoing distribution only in tests. Seal just this bucket.
        let mut inner = self.inner.lock().unwrap();
        let Some(state) = inner.buckets.remove(&id) else {
            return Err(Error::UnknownBucket(id));
        };
        let sealed = match state {
            BucketState::MemOpen {
                rows,
                weights,
                n_b,
                guard,
            } => BucketState::MemFinal {
                n_b: n_b.unwrap_or(0),
                rows: Arc::new(rows),
                weights: Arc::new(weights),
                _guard: guard,
            },
            BucketState::DiskOpen { rows_written, n_b } => {
                let n_b = n_b.unwrap_or(0);
                let path = self.bucket_path(id);
                if n_b > 0 {
                    let wts = self.wts_path(id);
                    let mut dst = OpenOptions::new()
                        .append(true)
                        .open(&path)
                        .map_err(|e| storage_err(&path, e))?;
                    let mut src = File::open(&wts).map_err(|e| storage_err(&wts, e))?;
                    std::io::copy(&mut src, &mut dst).map_err(|e| storage_err(&path, e))?;
                    std::fs::remove_file(&wts).map_err(|e| storage_err(&wts, e))?;
                }
                let mut file = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(|e| storage_err(&path, e))?;
                file.seek(SeekFrom::Start(7))?;
                file.write_u64::<LittleEndian>(rows_written)?;
                file.sync_data().map_err(|e| storage_err(&path, e))?;
                BucketState::DiskFinal {
                    n_rows: rows_written,
                    n_b,
                }
            }
            sealed => sealed,
        };
        inner.buckets.insert(id, sealed);
        Ok(())
    }

    /// Load a finalized bucket completely.
    pub fn read_bucket(&self, id: BucketId) -> Result<BucketData> {
        let (meta, gauge, state) = {
            let inner = self.inner.lock().unwrap();
            let meta = inner.meta;
            let gauge = inner.gauge.clone();
            match inner.buckets.get(&id) {
                None => return Err(Error::UnknownBucket(id)),
                Some(BucketState::MemFinal {
                    rows, weights, n_b, ..
                }) => {
                    return Ok(BucketData {
                        rows: Arc::clone(rows),
                        weights: Arc::clone(weights),
                        n_b: *n_b,
                        _guard: None,
                    })
                }
                Some(BucketState::DiskFinal { n_rows, n_b }) => (meta, gauge, (*n_rows, *n_b)),
                Some(_) => return Err(Error::config(format!("bucket {id} is not finalized"))),
            }
        };
        let (n_rows, n_b) = state;
        let meta = meta.ok_or_else(|| Error::config("scratch store not configured"))?;
        let path = self.bucket_path(id);
        let mut reader = binary::ChunkReader::open(&path)?;
        let rows = reader.read_rows(n_rows as usize)?;
        let raw = reader.read_trailing(n_rows as usize * n_b * 4)?;
        let mut weights = Vec::with_capacity(n_rows as usize * n_b);
        for w in raw.chunks_exact(4) {
            weights.push(u32::from_le_bytes(w.try_into().unwrap()));
        }
        debug_assert_eq!(rows.n_features() as u32, meta.n_features);
        let guard = gauge.map(|g| g.acquire(rows.n_rows()));
        Ok(BucketData {
            rows: Arc::new(rows),
            weights: Arc::new(weights),
            n_b,
            _guard: guard,
        })
    }

    /// Stream a finalized bucket in chunks of `chunk_size` rows, each with
    /// its slice of weights.
    pub fn bucket_chunks(&self, id: BucketId, chunk_size: usize) -> Result<BucketChunks> {
        assert!(chunk_size >= 1);
        let inner = self.inner.lock().unwrap();
        match inner.buckets.get(&id) {
            None => Err(Error::UnknownBucket(id)),
            Some(BucketState::MemFinal {
                rows, weights, n_b, ..
            }) => Ok(BucketChunks {
                n_b: *n_b,
                chunk_size,
                next_row: 0,
                n_rows: rows.n_rows() as u64,
                gauge: inner.gauge.clone(),
                source: BucketChunkSource::Memory {
                    rows: Arc::clone(rows),
                    weights: Arc::clone(weights),
                },
            }),
            Some(BucketState::DiskFinal { n_rows, n_b }) => Ok(BucketChunks {
                n_b: *n_b,
                chunk_size,
                next_row: 0,
                n_rows: *n_rows,
                gauge: inner.gauge.clone(),
                source: BucketChunkSource::Disk {
                    rows_path: self.bucket_path(id),
                    readers: None,
                },
            }),
            Some(_) => Err(Error::config(format!("bucket {id} is not finalized"))),
        }
    }

    pub fn bucket_row_count(&self, id: BucketId) -> Result<u64> {
        let inner = self.inner.lock().unwrap();
        match inner.buckets.get(&id) {
            None => Err(Error::UnknownBucket(id)),
            Some(BucketState::MemFinal { rows, .. }) => Ok(rows.n_rows() as u64),
            Some(BucketState::MemOpen { rows, .. }) => Ok(rows.n_rows() as u64),
            Some(BucketState::DiskFinal { n_rows, .. }) => Ok(*n_rows),
            Some(BucketState::DiskOpen { rows_written, .. }) => Ok(*rows_written),
        }
    }

    pub fn bucket_ids(&self) -> Vec<BucketId> {
        self.inner.lock().unwrap().buckets.keys().copied().collect()
    }

    pub fn remove_bucket(&self, id: BucketId) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let Some(state) = inner.buckets.remove(&id) else {
            return Err(Error::UnknownBucket(id));
        };
        if matches!(
            state,
            BucketState::DiskOpen { .. } | BucketState::DiskFinal { .. }
        ) {
            let path = self.bucket_path(id);
            std::fs::remove_file(&path).map_err(|e| storage_err(&path, e))?;
            let _ = std::fs::remove_file(self.wts_path(id));
        }
        Ok(())
    }

    /// Rekey a finalized bucket (used when leaf indices are renumbered).
    pub fn rename_bucket(&self, from: BucketId, to: BucketId) -> Result<()> {
        if from == to {
            return Ok(());
        }
        let mut inner = self.inner.lock().unwrap();
        if inner.buckets.contains_key(&to) {
            return Err(Error::config(format!("bucket {to} already exists")));
        }
        let Some(state) = inner.buckets.remove(&from) else {
            return Err(Error::UnknownBucket(from));
        };
        if matches!(
            state,
            BucketState::DiskOpen { .. } | BucketState::DiskFinal { .. }
        ) {
            let src = self.bucket_path(from);
            let dst = self.bucket_path(to);
            if let Some(parent) = dst.parent() {
                std::fs::create_dir_all(parent).map_err(|e| storage_err(parent, e))?;
            }
            std::fs::rename(&src, &dst).map_err(|e| storage_err(&src, e))?;
        }
        inner.buckets.insert(to, state);
        Ok(())
    }

    /// Delete the run directory (disk) or drop all buckets (memory).
    pub fn cleanup(&self) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        inner.buckets.clear();
        if let Some(run_dir) = &self.run_dir {
            if run_dir.exists() {
                std::fs::remove_dir_all(run_dir).map_err(|e| storage_err(run_dir, e))?;
            }
        }
        Ok(())
    }
}

fn check_n_b(slot: &mut Option<usize>, n_b: usize, id: BucketId) -> Result<()> {
    match slot {
        None => {
            *slot = Some(n_b);
            Ok(())
        }
        Some(existing) if *existing == n_b => Ok(()),
        Some(_) => Err(Error::config(format!(
            "bucket {id}: inconsistent weights-per-row across appends"
        ))),
    }
}

fn storage_err(path: &Path, source: std::io::Error) -> Error {
    Error::Storage {
        path: path.to_path_buf(),
        source,
    }
}

/// Read header and infer `n_b` from a finalized bucket file's length.
fn read_bucket_header(path: &Path) -> Result<(DatasetHeader, usize)> {
    let mut file = File::open(path)?;
    let header = binary::read_header(&mut file)?;
    let actual = file.metadata()?.len();
    let base = HEADER_LEN + header.payload_len();
    if actual < base {
        return Err(Error::Truncated {
            expected: base,
            actual,
        });
    }
    let trailing = actual - base;
    if header.n_rows == 0 {
        return Ok((header, 0));
    }
    if !trailing.is_multiple_of(4 * header.n_rows) {
        return Err(Error::format("bucket weight block has inconsistent length"));
    }
    Ok((header, (trailing / (4 * header.n_rows)) as usize))
}

enum BucketChunkSource {
    Memory {
        rows: Arc<RowBlock>,
        weights: Arc<Vec<u32>>,
    },
    Disk {
        rows_path: PathBuf,
        readers: Option<(binary::ChunkReader, BufReader<File>)>,
    },
}

/// Streaming reader over one bucket's rows and weights.
pub struct BucketChunks {
    n_b: usize,
    chunk_size: usize,
    next_row: u64,
    n_rows: u64,
    gauge: Option<Arc<RowGauge>>,
    source: BucketChunkSource,
}

impl BucketChunks {
    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }
}

pub struct BucketChunk {
    pub rows: RowBlock,
    pub weights: Vec<u32>,
    _guard: Option<RowGuard>,
}

impl Iterator for BucketChunks {
    type Item = Result<BucketChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.n_rows - self.next_row;
        if remaining == 0 {
            return None;
        }
        let take = self.chunk_size.min(remaining as usize);
        let result = match &mut self.source {
            BucketChunkSource::Memory { rows, weights } => {
                let start = self.next_row as usize;
                let sub = rows.slice_rows(start, start + take);
                let w = weights[start * self.n_b..(start + take) * self.n_b].to_vec();
                Ok((sub, w))
            }
            BucketChunkSource::Disk { rows_path, readers } => (|| {
                if readers.is_none() {
                    let row_reader = binary::ChunkReader::open(rows_path)?;
                    let mut wfile = BufReader::new(File::open(&*rows_path)?);
                    let header = *row_reader.header();
                    wfile.seek(SeekFrom::Start(HEADER_LEN + header.payload_len()))?;
                    *readers = Some((row_reader, wfile));
                }
                let (row_reader, wfile) = readers.as_mut().unwrap();
                let rows = row_reader.read_rows(take)?;
                let mut weights = Vec::with_capacity(take * self.n_b);
                for _ in 0..take * self.n_b {
                    weights.push(wfile.read_u32::<LittleEndian>()?);
                }
                Ok((rows, weights))
            })(),
        };
        match result {
            Ok((rows, weights)) => {
                let guard = self.gauge.as_ref().map(|g| g.acquire(take));
                self.next_row += take as u64;
                Some(Ok(BucketChunk {
                    rows,
                    weights,
                    _guard: guard,
                }))
            }
            Err(e) => {
                self.next_row = self.n_rows;
                Some(Err(e))
            }
        }
    }
}
