//! The three training entry points: the three-phase scheme, the
//! subsets baseline, and the standard in-memory forest.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::data::{reservoir_sample_many, BucketId, DatasetHandle, RowBlock, ScratchStore, Task};
use crate::error::{Error, Result};
use crate::forest::distribute::{distribute_with, manifest_from_store, BucketManifest};
use crate::forest::{bottom_params, ForestConfig, ForestMembers, ForestModel, Scheme, TopUnit};
use crate::gauge::RowGauge;
use crate::rng::{derive_rng, StreamKind};
use crate::splits::{summarize, FeatureSelect, GainConfig, ImpurityMeasure, LabelSummary};
use crate::tree::{
    build_top_tree, build_tree, constant_tree, BuildParams, LeafLabel, TopTreeParams, TreeModel,
};

/// Per-phase timings and instrumentation of one training run.
#[derive(Debug, Clone)]
pub struct TrainStats {
    pub scheme: Scheme,
    pub n_rows: u64,
    pub total_trees: usize,
    pub n_top: usize,
    pub n_b: usize,
    pub subset_size: u64,
    /// Desired bucket size M (0 for the flat schemes).
    pub leaf_bucket_size: u64,
    pub lambda: f64,
    pub phase_sample_top_secs: f64,
    pub phase_distribute_secs: f64,
    pub phase_bottom_secs: f64,
    pub peak_resident_rows_phase12: i64,
    pub peak_resident_rows_phase3: i64,
    pub peak_resident_rows: i64,
    pub max_bucket_rows: u64,
    pub n_buckets: usize,
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))
}

fn unweighted_majority(rows: &RowBlock, n_classes: u32) -> LeafLabel {
    match summarize(rows, None, &[], n_classes) {
        LabelSummary::Classes(counts) => {
            LeafLabel::Class(crate::forest::vote_argmax(&counts) as u32)
        }
        LabelSummary::Moments { weight, sum, .. } => LeafLabel::Value(sum / weight as f64),
    }
}

fn poisson_weights(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let poisson = Poisson::new(1.0).unwrap();
    (0..n).map(|_| poisson.sample(rng) as u32).collect()
}

/// Build one bucket's `n_b` bottom trees. Buckets with no rows fall back
/// to a constant tree predicting the top-tree leaf's subset majority; a
/// bottom tree whose bootstrap weights sum to zero falls back to the
/// bucket's unweighted majority.
#[allow(clippy::too_many_arguments)]
fn build_bucket_trees(
    store: &ScratchStore,
    id: BucketId,
    n_b: usize,
    params: &BuildParams,
    task: Task,
    seed: u64,
    d: u32,
    leaf_majority: LeafLabel,
) -> Result<Vec<TreeModel>> {
    let k = task.n_classes();
    let bucket = match store.read_bucket(id) {
        Ok(bucket) => bucket,
        Err(Error::UnknownBucket(_)) => {
            // Leaf received no rows during distribution.
            return Ok((0..n_b)
                .map(|_| constant_tree(leaf_majority, d, k))
                .collect());
        }
        Err(e) => return Err(e),
    };
    let rows = &*bucket.rows;
    let mut trees = Vec::with_capacity(n_b);
    for slot in 0..n_b {
        let weights: Vec<u32> = if bucket.n_b == 0 {
            Vec::new()
        } else {
            (0..rows.n_rows())
                .map(|i| bucket.weights[i * bucket.n_b + slot])
                .collect()
        };
        let total: u64 = if weights.is_empty() {
            rows.n_rows() as u64
        } else {
            weights.iter().map(|&w| w as u64).sum()
        };
        if total == 0 {
            trees.push(constant_tree(unweighted_majority(rows, k), d, k));
            continue;
        }
        let mut rng = derive_rng(
            seed,
            StreamKind::BottomTree,
            id.top as u64,
            id.leaf,
            slot as u64,
        );
        trees.push(build_tree(rows, &weights, task, params, &mut rng)?);
    }
    Ok(trees)
}

/// Train with the three-phase scheme: draw `n_top` subsets in one pass and
/// build balance-regularized top trees on them, distribute every row to
/// the top trees' leaf buckets in a second pass, then grow `n_b` standard
/// bottom trees per bucket in parallel.
pub fn build_big_forest(
    dataset: &DatasetHandle,
    store: &ScratchStore,
    config: &ForestConfig,
) -> Result<(ForestModel, TrainStats)> {
    let sizes = config.resolve(dataset.n_rows())?;
    let task = dataset.task();
    let gauge = RowGauge::new();
    let handle = dataset
        .clone()
        .with_chunk_size(config.chunk_size)
        .with_gauge(gauge.clone());
    store.set_gauge(gauge.clone());
    store.configure(task, handle.n_features())?;
    let pool = worker_pool(config.jobs)?;

    // Phase 1: one pass extracts all subsets; top trees are built on them.
    let t_sample = Instant::now();
    let subsets = reservoir_sample_many(&handle, sizes.r as usize, config.n_top, config.seed)?;
    let top_params = TopTreeParams {
        leaf_threshold: sizes.m_bar,
        gain: GainConfig {
            lambda: config.lambda,
            measure: ImpurityMeasure::default_for(task),
            features_per_node: FeatureSelect::All,
        },
        stop_on_pure: config.top_purity_stop,
    };
    let outcomes = pool.install(|| {
        subsets
            .par_iter()
            .enumerate()
            .map(|(t, subset)| {
                let mut rng = derive_rng(config.seed, StreamKind::TopTree, t as u64, 0, 0);
                build_top_tree(&subset.rows, task, &top_params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut tops: Vec<TreeModel> = Vec::with_capacity(outcomes.len());
    let mut majorities: Vec<Vec<LeafLabel>> = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        tops.push(outcome.model);
        majorities.push(outcome.majorities);
    }
    drop(subsets);
    let phase_sample_top_secs = t_sample.elapsed().as_secs_f64();

    // Phase 2: distribute all rows, then re-split any oversized bucket.
    let t_distribute = Instant::now();
    let mut manifest = pool.install(|| {
        distribute_with(
            &tops,
            &handle,
            store,
            config.n_b,
            config.seed,
            config.bootstrap,
        )
    })?;
    if let Some(cap) = sizes.hard_cap {
        manifest = resolve_oversized(
            &mut tops,
            &mut majorities,
            manifest,
            store,
            config,
            sizes.r,
            sizes.m,
            cap,
            task,
        )?;
    }
    let phase_distribute_secs = t_distribute.elapsed().as_secs_f64();
    let peak_resident_rows_phase12 = gauge.peak();
    gauge.reset_peak();

    // Phase 3: bottom trees, parallel across buckets; each bucket's n_b
    // trees build sequentially inside one worker.
    let t_bottom = Instant::now();
    let params = bottom_params(task, config.features_per_node);
    let d = handle.n_features();
    let tasks: Vec<BucketId> = manifest.entries.iter().map(|e| e.id).collect();
    let groups: Vec<Vec<TreeModel>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&id| {
                build_bucket_trees(
                    store,
                    id,
                    config.n_b,
                    &params,
                    task,
                    config.seed,
                    d,
                    majorities[id.top as usize][id.leaf as usize],
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let phase_bottom_secs = t_bottom.elapsed().as_secs_f64();
    let peak_resident_rows_phase3 = gauge.peak();

    // Assemble: groups arrive in manifest order (top, leaf ascending).
    let mut units: Vec<TopUnit> = tops
        .into_iter()
        .map(|top| TopUnit {
            top,
            leaf_trees: Vec::new(),
        })
        .collect();
    for (entry, trees) in manifest.entries.iter().zip(groups) {
        debug_assert_eq!(
            entry.id.leaf as usize,
            units[entry.id.top as usize].leaf_trees.len()
        );
        units[entry.id.top as usize].leaf_trees.push(trees);
    }

    let model = ForestModel {
        scheme: Scheme::Woody,
        task,
        n_features: d,
        members: ForestMembers::Layered(units),
    };
    model.validate()?;
    let stats = TrainStats {
        scheme: Scheme::Woody,
        n_rows: handle.n_rows(),
        total_trees: model.n_trees(),
        n_top: config.n_top,
        n_b: config.n_b,
        subset_size: sizes.r,
        leaf_bucket_size: sizes.m,
        lambda: config.lambda,
        phase_sample_top_secs,
        phase_distribute_secs,
        phase_bottom_secs,
        peak_resident_rows_phase12,
        peak_resident_rows_phase3,
        peak_resident_rows: peak_resident_rows_phase12.max(peak_resident_rows_phase3),
        max_bucket_rows: manifest.max_bucket_rows(),
        n_buckets: manifest.n_buckets(),
    };
    Ok((model, stats))
}

const STAGE_BASE: u64 = 1 << 40;
const TMP_BASE: u64 = 1 << 41;

/// Re-split buckets that exceed the hard cap: sample the bucket, build a
/// top tree for it, re-distribute its rows (keeping the already-drawn
/// bootstrap weights), graft the sub-tree into the owning top tree, and
/// renumber buckets densely. Buckets whose rows cannot be split (all
/// identical) are accepted as-is.
#[allow(clippy::too_many_arguments)]
fn resolve_oversized(
    tops: &mut [TreeModel],
    majorities: &mut [Vec<LeafLabel>],
    mut manifest: BucketManifest,
    store: &ScratchStore,
    config: &ForestConfig,
    r: u64,
    m: u64,
    cap: u64,
    task: Task,
) -> Result<BucketManifest> {
    let mut given_up: Vec<BucketId> = Vec::new();
    let mut graft_counter: u64 = 0;

    for _round in 0..4 {
        let mut pending: Vec<BucketId> = manifest
            .entries
            .iter()
            .filter(|e| e.rows > cap && !given_up.contains(&e.id))
            .map(|e| e.id)
            .collect();
        if pending.is_empty() {
            break;
        }
        let mut progressed = false;
        while let Some(id) = pending.pop() {
            graft_counter += 1;
            if graft_counter > 64 {
                return Ok(manifest);
            }
            let bucket_rows = store.bucket_row_count(id)?;
            let r_sub = r.min(bucket_rows);
            let m_bar = crate::tree::estimate_leaf_threshold(m, r_sub, bucket_rows)?;

            // Reservoir over the bucket's own chunk stream.
            let sample = bucket_reservoir(
                store,
                id,
                r_sub as usize,
                config.chunk_size,
                derive_rng(
                    config.seed,
                    StreamKind::Subset,
                    id.top as u64,
                    id.leaf + 1,
                    graft_counter,
                ),
            )?;
            let sub = build_top_tree(
                &sample,
                task,
                &TopTreeParams {
                    leaf_threshold: m_bar,
                    gain: GainConfig {
                        lambda: config.lambda,
                        measure: ImpurityMeasure::default_for(task),
                        features_per_node: FeatureSelect::All,
                    },
                    stop_on_pure: false,
                },
                &mut derive_rng(
                    config.seed,
                    StreamKind::TopTree,
                    id.top as u64,
                    id.leaf + 1,
                    graft_counter,
                ),
            )?;
            drop(sample);
            if sub.model.n_leaves() < 2 {
                given_up.push(id);
                continue;
            }

            // Stage the bucket's rows into sub-leaf buckets.
            let n_sub_leaves = sub.model.n_leaves();
            let mut chunks = store.bucket_chunks(id, config.chunk_size)?;
            let weights_per_row = chunks.n_b();
            let mut groups: Vec<Vec<u32>> = vec![Vec::new(); n_sub_leaves];
            loop {
                let Some(chunk) = chunks.next() else { break };
                let chunk = chunk?;
                for group in groups.iter_mut() {
                    group.clear();
                }
                for i in 0..chunk.rows.n_rows() {
                    let leaf = sub.model.predict_leaf_index(chunk.rows.row(i))? as usize;
                    groups[leaf].push(i as u32);
                }
                for (j, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let mut buffer =
                        RowBlock::new(chunk.rows.n_features(), chunk.rows.labels().new_like());
                    buffer.reserve(members.len());
                    let mut wts = Vec::with_capacity(members.len() * weights_per_row);
                    for &i in members {
                        buffer.push_from(&chunk.rows, i as usize);
                        let base = i as usize * weights_per_row;
                        wts.extend_from_slice(&chunk.weights[base..base + weights_per_row]);
                    }
                    store.append(BucketId::new(id.top, STAGE_BASE + j as u64), &buffer, &wts)?;
                }
            }
            drop(chunks);
            store.finalize()?;
            store.remove_bucket(id)?;

            // Graft and renumber, then move every bucket of this tree to
            // its new leaf index (via a temp namespace to avoid clashes).
            let t = id.top as usize;
            let remap = tops[t].graft_top_tree(id.leaf, &sub.model);
            let old_map: HashMap<u64, u64> = remap.old_to_new.iter().copied().collect();
            let mut new_majorities: Vec<Option<LeafLabel>> = vec![None; tops[t].n_leaves()];
            for &(old, new) in &remap.old_to_new {
                new_majorities[new as usize] = Some(majorities[t][old as usize]);
            }
            for &(j, new) in &remap.graft_to_new {
                new_majorities[new as usize] = Some(sub.majorities[j as usize]);
            }
            majorities[t] = new_majorities
                .into_iter()
                .map(|m| m.expect("every leaf has a majority"))
                .collect();

            for &(old, new) in &remap.old_to_new {
                let from = BucketId::new(id.top, old);
                if store.bucket_row_count(from).is_ok() {
                    store.rename_bucket(from, BucketId::new(id.top, TMP_BASE + new))?;
                }
            }
            for &(j, new) in &remap.graft_to_new {
                let from = BucketId::new(id.top, STAGE_BASE + j);
                if store.bucket_row_count(from).is_ok() {
                    store.rename_bucket(from, BucketId::new(id.top, TMP_BASE + new))?;
                }
            }
            for staged in store.bucket_ids() {
                if staged.top == id.top && staged.leaf >= TMP_BASE {
                    store
                        .rename_bucket(staged, BucketId::new(staged.top, staged.leaf - TMP_BASE))?;
                }
            }

            // Remap the ids we still plan to visit.
            let update = |v: &mut Vec<BucketId>| {
                for b in v.iter_mut() {
                    if b.top == id.top {
                        if let Some(&new) = old_map.get(&b.leaf) {
                            b.leaf = new;
                        }
                    }
                }
            };
            update(&mut pending);
            update(&mut given_up);
            progressed = true;
            manifest = manifest_from_store(tops, store);
        }
        manifest = manifest_from_store(tops, store);
        if !progressed {
            break;
        }
    }
    Ok(manifest)
}

/// Algorithm-R reservoir over a bucket's chunk stream (rows only).
fn bucket_reservoir(
    store: &ScratchStore,
    id: BucketId,
    r: usize,
    chunk_size: usize,
    mut rng: rand_chacha::ChaCha8Rng,
) -> Result<RowBlock> {
    let mut chunks = store.bucket_chunks(id, chunk_size)?;
    let mut reservoir: Option<RowBlock> = None;
    let mut seen: u64 = 0;
    loop {
        let Some(chunk) = chunks.next() else { break };
        let chunk = chunk?;
        let rows = &chunk.rows;
        let res = reservoir.get_or_insert_with(|| {
            let mut b = RowBlock::new(rows.n_features(), rows.labels().new_like());
            b.reserve(r);
            b
        });
        for i in 0..rows.n_rows() {
            if (seen as usize) < r {
                res.push_from(rows, i);
            } else {
                let j = rng.gen_range(0..=seen);
                if (j as usize) < r {
                    res.replace_from(j as usize, rows, i);
                }
            }
            seen += 1;
        }
    }
    reservoir.ok_or_else(|| Error::domain("reservoir over an empty bucket"))
}

/// Train the subsets baseline: draw `n_top * n_b` independent random
/// subsets in one streaming pass, park them in the scratch store, and
/// build one standard tree per subset. Rows outside the subsets are
/// discarded.
pub fn build_subsets_forest(
    dataset: &DatasetHandle,
    store: &ScratchStore,
    config: &ForestConfig,
) -> Result<(ForestModel, TrainStats)> {
    config.validate()?;
    let task = dataset.task();
    let n = dataset.n_rows();
    let total_trees = config.n_top * config.n_b;
    let r = config.subset_size.unwrap_or(500_000.min(n)).min(n).max(1);
    let gauge = RowGauge::new();
    let handle = dataset
        .clone()
        .with_chunk_size(config.chunk_size)
        .with_gauge(gauge.clone());
    store.set_gauge(gauge.clone());
    store.configure(task, handle.n_features())?;
    let pool = worker_pool(config.jobs)?;

    let t_sample = Instant::now();
    let subsets = reservoir_sample_many(&handle, r as usize, total_trees, config.seed)?;
    for (i, subset) in subsets.iter().enumerate() {
        store.write_bucket(BucketId::new(i as u32, 0), &subset.rows, &[])?;
    }
    drop(subsets);
    let phase_sample_top_secs = t_sample.elapsed().as_secs_f64();
    let peak_resident_rows_phase12 = gauge.peak();
    gauge.reset_peak();

    let t_bottom = Instant::now();
    let params = bottom_params(task, config.features_per_node);
    let trees: Vec<TreeModel> = pool.install(|| {
        (0..total_trees)
            .into_par_iter()
            .map(|i| {
                let bucket = store.read_bucket(BucketId::new(i as u32, 0))?;
                let rows = &*bucket.rows;
                let weights = if config.bootstrap {
                    let mut rng = derive_rng(config.seed, StreamKind::Bootstrap, i as u64, 0, 0);
                    poisson_weights(rows.n_rows(), &mut rng)
                } else {
                    Vec::new()
                };
                if !weights.is_empty() && weights.iter().all(|&w| w == 0) {
                    return Ok(constant_tree(
                        unweighted_majority(rows, task.n_classes()),
                        handle.n_features(),
                        task.n_classes(),
                    ));
                }
                let mut rng = derive_rng(config.seed, StreamKind::FlatTree, i as u64, 0, 0);
                build_tree(rows, &weights, task, &params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let phase_bottom_secs = t_bottom.elapsed().as_secs_f64();
    let peak_resident_rows_phase3 = gauge.peak();

    let model = ForestModel {
        scheme: Scheme::Subsets,
        task,
        n_features: handle.n_features(),
        members: ForestMembers::Flat(trees),
    };
    model.validate()?;
    let stats = TrainStats {
        scheme: Scheme::Subsets,
        n_rows: n,
        total_trees,
        n_top: config.n_top,
        n_b: config.n_b,
        subset_size: r,
        leaf_bucket_size: 0,
        lambda: config.lambda,
        phase_sample_top_secs,
        phase_distribute_secs: 0.0,
        phase_bottom_secs,
        peak_resident_rows_phase12,
        peak_resident_rows_phase3,
        peak_resident_rows: peak_resident_rows_phase12.max(peak_resident_rows_phase3),
        max_bucket_rows: r,
        n_buckets: total_trees,
    };
    Ok((model, stats))
}

/// Train a standard random forest entirely in memory: every tree sees the
/// full dataset through its own bootstrap weights.
pub fn build_standard_forest(
    dataset: &DatasetHandle,
    config: &ForestConfig,
) -> Result<(ForestModel, TrainStats)> {
    config.validate()?;
    let task = dataset.task();
    let gauge = RowGauge::new();
    let pool = worker_pool(config.jobs)?;
    let total_trees = config.n_top * config.n_b;

    let t_bottom = Instant::now();
    let block = dataset.read_all()?;
    let _block_guard = gauge.acquire(block.n_rows());
    let params = bottom_params(task, config.features_per_node);
    let d = dataset.n_features();
    let trees: Vec<TreeModel> = pool.install(|| {
        (0..total_trees)
            .into_par_iter()
            .map(|i| {
                let weights = if config.bootstrap {
                    let mut rng = derive_rng(config.seed, StreamKind::Bootstrap, i as u64, 0, 0);
                    poisson_weights(block.n_rows(), &mut rng)
                } else {
                    Vec::new()
                };
                if !weights.is_empty() && weights.iter().all(|&w| w == 0) {
                    return Ok(constant_tree(
                        unweighted_majority(&block, task.n_classes()),
                        d,
                        task.n_classes(),
                    ));
                }
                let mut rng = derive_rng(config.seed, StreamKind::FlatTree, i as u64, 0, 0);
                build_tree(&block, &weights, task, &params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let phase_bottom_secs = t_bottom.elapsed().as_secs_f64();

    let model = ForestModel {
        scheme: Scheme::Standard,
        task,
        n_features: d,
        members: ForestMembers::Flat(trees),
    };
    model.validate()?;
    let stats = TrainStats {
        scheme: Scheme::Standard,
        n_rows: dataset.n_rows(),
        total_trees,
        n_top: config.n_top,
        n_b: config.n_b,
        subset_size: dataset.n_rows(),
        leaf_bucket_size: 0,
        lambda: config.lambda,
        phase_sample_top_secs: 0.0,
        phase_distribute_secs: 0.0,
        phase_bottom_secs,
        peak_resident_rows_phase12: 0,
        peak_resident_rows_phase3: gauge.peak(),
        peak_resident_rows: gauge.peak(),
        max_bucket_rows: dataset.n_rows(),
        n_buckets: 1,
    };
    Ok((model, stats))
}
