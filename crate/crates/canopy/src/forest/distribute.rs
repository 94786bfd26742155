//! The distribution pass: one streaming sweep over the dataset routes
//! every row through every top tree to its leaf bucket, drawing the
//! bootstrap multiplicities for the bucket's future bottom trees as it
//! goes.
//!
//! Weights come from per-`(bucket, slot)` RNG streams, consumed in bucket
//! append order. Append order is the dataset's chunk/row order, so the
//! result is byte-deterministic no matter how routing is parallelized.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::data::{BucketId, DatasetHandle, RowBlock, ScratchStore};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, StreamKind};
use crate::tree::{TreeMode, TreeModel};

/// Row counts per bucket after a distribution pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketManifest {
    pub entries: Vec<BucketEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketEntry {
    pub id: BucketId,
    pub rows: u64,
    /// Bucket file path, or "memory" / "-" (empty bucket).
    pub location: String,
}

impl BucketManifest {
    pub fn rows_for_top(&self, top: u32) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.id.top == top)
            .map(|e| e.rows)
            .sum()
    }

    pub fn max_bucket_rows(&self) -> u64 {
        self.entries.iter().map(|e| e.rows).max().unwrap_or(0)
    }

    pub fn n_buckets(&self) -> usize {
        self.entries.len()
    }
}

/// Build the manifest for `top_trees` from the store's current counts,
/// including empty buckets (leaves that received no rows).
pub(crate) fn manifest_from_store(top_trees: &[TreeModel], store: &ScratchStore) -> BucketManifest {
    let mut entries = Vec::new();
    for (t, tree) in top_trees.iter().enumerate() {
        for leaf in 0..tree.n_leaves() as u64 {
            let id = BucketId::new(t as u32, leaf);
            let rows = store.bucket_row_count(id).unwrap_or(0);
            let location = if rows == 0 {
                "-".to_string()
            } else {
                match store.run_dir() {
                    Some(dir) => dir
                        .join(format!("toptree-{t}"))
                        .join(format!("bucket-{leaf}.bin"))
                        .display()
                        .to_string(),
                    None => "memory".to_string(),
                }
            };
            entries.push(BucketEntry { id, rows, location });
        }
    }
    BucketManifest { entries }
}

/// Per-bucket bootstrap weight streams: one Poisson(1) stream per
/// `(top tree, leaf, bottom slot)`.
pub(crate) struct WeightStreams {
    streams: Vec<Vec<ChaCha8Rng>>, // [bucket flat index][slot]
    offsets: Vec<usize>,           // start of each top tree's buckets
    n_b: usize,
    poisson: Option<Poisson<f64>>,
}

impl WeightStreams {
    pub(crate) fn new(top_trees: &[TreeModel], n_b: usize, seed: u64, bootstrap: bool) -> Self {
        let mut streams = Vec::new();
        let mut offsets = Vec::with_capacity(top_trees.len());
        for (t, tree) in top_trees.iter().enumerate() {
            offsets.push(streams.len());
            for leaf in 0..tree.n_leaves() as u64 {
                streams.push(
                    (0..n_b)
                        .map(|slot| {
                            derive_rng(seed, StreamKind::Bootstrap, t as u64, leaf, slot as u64)
                        })
                        .collect(),
                );
            }
        }
        WeightStreams {
            streams,
            offsets,
            n_b,
            poisson: bootstrap.then(|| Poisson::new(1.0).unwrap()),
        }
    }

    /// Draw the `n_b` multiplicities for one row appended to `(top, leaf)`.
    fn draw_row(&mut self, top: usize, leaf: u64, out: &mut Vec<u32>) {
        let Some(poisson) = &self.poisson else {
            return; // no bootstrap: buckets carry no weight block
        };
        let bucket = self.offsets[top] + leaf as usize;
        for slot in 0..self.n_b {
            let w = poisson.sample(&mut self.streams[bucket][slot]);
            out.push(w as u32);
        }
    }
}

/// Route every dataset row to its leaf bucket in each top tree, in one
/// streaming pass, appending rows and bootstrap weights to the store.
///
/// On storage failure the pass aborts; buckets completed so far remain
/// readable in the store for diagnostics.
pub fn distribute(
    top_trees: &[TreeModel],
    dataset: &DatasetHandle,
    store: &ScratchStore,
    n_b: usize,
    seed: u64,
) -> Result<BucketManifest> {
    distribute_with(top_trees, dataset, store, n_b, seed, true)
}

pub(crate) fn distribute_with(
    top_trees: &[TreeModel],
    dataset: &DatasetHandle,
    store: &ScratchStore,
    n_b: usize,
    seed: u64,
    bootstrap: bool,
) -> Result<BucketManifest> {
    if top_trees.is_empty() {
        return Err(Error::config("distribute requires at least one top tree"));
    }
    for tree in top_trees {
        if tree.mode() != TreeMode::TopTree {
            return Err(Error::config("distribute requires top-mode trees"));
        }
        if tree.n_features() != dataset.n_features() {
            return Err(Error::config("top tree arity does not match dataset"));
        }
    }
    store.configure(dataset.task(), dataset.n_features())?;
    let mut streams = WeightStreams::new(top_trees, n_b, seed, bootstrap);

    let mut groups: Vec<Vec<Vec<u32>>> = top_trees
        .iter()
        .map(|t| vec![Vec::new(); t.n_leaves()])
        .collect();
    let mut weight_buf: Vec<u32> = Vec::new();

    for chunk in dataset.chunks() {
        let chunk = chunk?;
        let rows = &chunk.rows;

        // Route the chunk through every top tree (fan out across trees).
        let leaf_of: Vec<Vec<u64>> = rayon_route(top_trees, rows)?;

        for (t, leaves) in leaf_of.iter().enumerate() {
            for group in groups[t].iter_mut() {
                group.clear();
            }
            for (i, &leaf) in leaves.iter().enumerate() {
                groups[t][leaf as usize].push(i as u32);
            }
            for (leaf, members) in groups[t].iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                // The gather buffer is resident until appended to the store.
                let _buffer_guard = dataset.gauge().map(|g| g.acquire(members.len()));
                let mut buffer = RowBlock::new(rows.n_features(), rows.labels().new_like());
                buffer.reserve(members.len());
                weight_buf.clear();
                for &i in members {
                    buffer.push_from(rows, i as usize);
                    streams.draw_row(t, leaf as u64, &mut weight_buf);
                }
                store.append(BucketId::new(t as u32, leaf as u64), &buffer, &weight_buf)?;
            }
        }
    }

    store.finalize()?;
    let manifest = manifest_from_store(top_trees, store);
    debug_assert!(manifest
        .entries
        .iter()
        .map(|e| e.id.top)
        .all(|t| (t as usize) < top_trees.len()));
    Ok(manifest)
}

fn rayon_route(top_trees: &[TreeModel], rows: &RowBlock) -> Result<Vec<Vec<u64>>> {
    let route_one = |tree: &TreeModel| -> Result<Vec<u64>> {
        let mut leaves = Vec::with_capacity(rows.n_rows());
        for i in 0..rows.n_rows() {
            leaves.push(tree.predict_leaf_index(rows.row(i))?);
        }
        Ok(leaves)
    };
    if top_trees.len() == 1 {
        Ok(vec![route_one(&top_trees[0])?])
    } else {
        top_trees.par_iter().map(route_one).collect()
    }
}
