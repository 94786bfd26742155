//! Array-encoded binary decision trees: standard fully-grown CART
//! construction, the size-bounded top-tree construction that defines leaf
//! buckets, prediction, and serialization.

mod codec;

pub use codec::{deserialize, serialize, TREE_MAGIC, TREE_VERSION};

use std::sync::Arc;

use rand::Rng;

use crate::data::{Labels, RowBlock, Task};
use crate::error::{Error, Result};
use crate::splits::{summarize, GainConfig, LabelSummary, ScanRequest, SplitScanner};

/// Leaf contents.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafPayload {
    /// Weighted class counts (classification).
    Histogram(Box<[u64]>),
    /// Weighted label mean (regression).
    Mean { mean: f64, weight: u64 },
    /// Leaf bucket index (top-tree mode).
    Bucket(u64),
}

/// One node of the array encoding. The root is node 0; children are
/// explicit indices into the node array.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf(LeafPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    Standard,
    TopTree,
}

/// A label produced by a leaf (forest combiners work on these).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafLabel {
    Class(u32),
    Value(f64),
}

/// An immutable trained tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    n_features: u32,
    n_classes: u32,
    mode: TreeMode,
    depth: u32,
}

impl TreeModel {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    /// Maximum root-to-leaf depth (0 for a single leaf). Diagnostic only.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf(_)))
            .count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LeafPayload> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf(p) => Some(p),
            _ => None,
        })
    }

    fn descend(&self, pattern: &[f32]) -> Result<&LeafPayload> {
        if pattern.len() != self.n_features as usize {
            return Err(Error::domain(format!(
                "pattern has {} features, tree expects {}",
                pattern.len(),
                self.n_features
            )));
        }
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if pattern[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf(payload) => return Ok(payload),
            }
        }
    }

    /// Class prediction: argmax of the leaf histogram, ties broken toward
    /// the lowest class index.
    pub fn predict_class(&self, pattern: &[f32]) -> Result<u32> {
        match self.descend(pattern)? {
            LeafPayload::Histogram(counts) => Ok(argmax_u64(counts) as u32),
            _ => Err(Error::domain("tree has no class leaves")),
        }
    }

    pub fn predict_value(&self, pattern: &[f32]) -> Result<f64> {
        match self.descend(pattern)? {
            LeafPayload::Mean { mean, .. } => Ok(*mean),
            _ => Err(Error::domain("tree has no regression leaves")),
        }
    }

    pub fn predict_label(&self, pattern: &[f32]) -> Result<LeafLabel> {
        match self.descend(pattern)? {
            LeafPayload::Histogram(counts) => Ok(LeafLabel::Class(argmax_u64(counts) as u32)),
            LeafPayload::Mean { mean, .. } => Ok(LeafLabel::Value(*mean)),
            LeafPayload::Bucket(_) => Err(Error::domain("top tree queried for a label")),
        }
    }

    /// Bucket index of the leaf the pattern falls into (top-tree mode).
    pub fn predict_leaf_index(&self, pattern: &[f32]) -> Result<u64> {
        match self.descend(pattern)? {
            LeafPayload::Bucket(i) => Ok(*i),
            _ => Err(Error::domain("leaf index queried on a standard tree")),
        }
    }

    pub(crate) fn from_nodes(
        nodes: Vec<TreeNode>,
        n_features: u32,
        n_classes: u32,
        mode: TreeMode,
    ) -> Self {
        let depth = compute_depth(&nodes);
        TreeModel {
            nodes,
            n_features,
            n_classes,
            mode,
            depth,
        }
    }

    /// Replace the leaf carrying bucket `leaf_index` with another top
    /// tree's structure (used when an oversized bucket is re-split), then
    /// renumber all leaves densely in node-array order. The returned maps
    /// translate surviving old bucket indices and graft-local leaf indices
    /// to the new numbering.
    pub(crate) fn graft_top_tree(&mut self, leaf_index: u64, graft: &TreeModel) -> GraftRemap {
        debug_assert_eq!(self.mode, TreeMode::TopTree);
        debug_assert_eq!(graft.mode, TreeMode::TopTree);
        let slot = self
            .nodes
            .iter()
            .position(|n| matches!(n, TreeNode::Leaf(LeafPayload::Bucket(i)) if *i == leaf_index))
            .expect("graft target leaf exists");
        let offset = self.nodes.len() as u32;
        // Copy the graft's nodes after the existing array, shifting child
        // indices; its root lands in the replaced leaf's slot.
        let adjust = |node: &TreeNode| -> TreeNode {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => TreeNode::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: shift_child(*left, offset),
                    right: shift_child(*right, offset),
                },
                TreeNode::Leaf(LeafPayload::Bucket(i)) => {
                    // Tag grafted leaves so renumbering can tell them apart.
                    TreeNode::Leaf(LeafPayload::Bucket(GRAFT_TAG + i))
                }
                TreeNode::Leaf(other) => TreeNode::Leaf(other.clone()),
            }
        };
        self.nodes[slot] = adjust(&graft.nodes[0]);
        for node in &graft.nodes[1..] {
            self.nodes.push(adjust(node));
        }
        // Dense renumbering in node-array order.
        let mut old_to_new = Vec::new();
        let mut graft_to_new = Vec::new();
        let mut next = 0u64;
        for node in &mut self.nodes {
            if let TreeNode::Leaf(LeafPayload::Bucket(i)) = node {
                if *i >= GRAFT_TAG {
                    graft_to_new.push((*i - GRAFT_TAG, next));
                } else {
                    old_to_new.push((*i, next));
                }
                *i = next;
                next += 1;
            }
        }
        self.depth = compute_depth(&self.nodes);
        GraftRemap {
            old_to_new,
            graft_to_new,
        }
    }
}

const GRAFT_TAG: u64 = 1 << 62;

fn shift_child(child: u32, offset: u32) -> u32 {
    // Child 0 can never occur inside a well-formed graft (the root is not
    // anyone's child), so every index shifts; the graft root itself is
    // relocated into the replaced slot and handled separately.
    if child == 0 {
        0
    } else {
        child + offset - 1
    }
}

/// Bucket-index remapping produced by grafting.
pub(crate) struct GraftRemap {
    /// (old bucket index, new bucket index) for untouched leaves.
    pub old_to_new: Vec<(u64, u64)>,
    /// (graft-local bucket index, new bucket index) for new leaves.
    pub graft_to_new: Vec<(u64, u64)>,
}

fn argmax_u64(counts: &[u64]) -> usize {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn compute_depth(nodes: &[TreeNode]) -> u32 {
    let mut depth = 0u32;
    let mut stack = vec![(0u32, 0u32)];
    while let Some((node, d)) = stack.pop() {
        match &nodes[node as usize] {
            TreeNode::Internal { left, right, .. } => {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
            TreeNode::Leaf(_) => depth = depth.max(d),
        }
    }
    depth
}

/// Parameters for standard (bottom / flat) tree construction.
#[derive(Debug, Clone)]
pub struct BuildParams {
    pub gain: GainConfig,
    /// Minimum weighted count per leaf.
    pub min_samples_leaf: u64,
    /// Minimum weighted count to attempt a split.
    pub min_samples_split: u64,
    /// `None` grows the tree fully (until purity or unsplittable nodes).
    pub max_depth: Option<u32>,
}

impl BuildParams {
    pub fn fully_grown(gain: GainConfig) -> Self {
        BuildParams {
            gain,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_depth: None,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.gain.validate(d)?;
        if self.min_samples_leaf < 1 {
            return Err(Error::config("min_samples_leaf must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split must be >= 2"));
        }
        Ok(())
    }
}

/// Parameters for top-tree construction.
#[derive(Debug, Clone)]
pub struct TopTreeParams {
    /// Size threshold: a node with fewer instances than this becomes a
    /// leaf (strict `<`). At least 2.
    pub leaf_threshold: f64,
    /// Gain configuration; top trees evaluate all features, so
    /// `features_per_node` should be `All`.
    pub gain: GainConfig,
    /// Also stop on pure nodes (the naive scheme; off for the
    /// size-bounded construction, which keeps splitting pure nodes).
    pub stop_on_pure: bool,
}

impl TopTreeParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        self.gain.validate(d)?;
        if self.leaf_threshold < 2.0 {
            return Err(Error::config("top-tree leaf threshold must be >= 2"));
        }
        Ok(())
    }
}

/// Subset-scale estimate of the leaf-size threshold:
/// `max(2, M * R / n)`.
pub fn estimate_leaf_threshold(m: u64, r: u64, n: u64) -> Result<f64> {
    if m < 1 {
        return Err(Error::config("leaf bucket size M must be >= 1"));
    }
    if r < 1 || n < 1 {
        return Err(Error::config("R and n must be >= 1"));
    }
    if r > n {
        return Err(Error::config(format!(
            "subset size R = {r} exceeds n = {n}"
        )));
    }
    Ok((m as f64 * r as f64 / n as f64).max(2.0))
}

/// A trained top tree together with its per-leaf subset statistics
/// (majority labels back empty buckets at assembly time).
#[derive(Debug, Clone)]
pub struct TopTreeOutcome {
    pub model: TreeModel,
    /// Indexed by bucket index: majority class / mean label of the subset
    /// rows that formed the leaf.
    pub majorities: Vec<LeafLabel>,
}

struct Frame {
    parent: Option<(usize, bool)>,
    start: usize,
    end: usize,
    depth: u32,
    mask: Arc<Vec<u64>>,
}

struct Builder<'a> {
    block: &'a RowBlock,
    weights: &'a [u32],
    n_classes: u32,
    idx: Vec<u32>,
    scratch_left: Vec<u32>,
    scratch_right: Vec<u32>,
    feature_scratch: Vec<usize>,
    scanner: SplitScanner,
    nodes: Vec<TreeNode>,
}

impl<'a> Builder<'a> {
    fn new(block: &'a RowBlock, weights: &'a [u32], n_classes: u32) -> Result<Self> {
        if !weights.is_empty() && weights.len() != block.n_rows() {
            return Err(Error::domain("weights length does not match row count"));
        }
        let idx: Vec<u32> = (0..block.n_rows() as u32)
            .filter(|&r| weights.is_empty() || weights[r as usize] > 0)
            .collect();
        if idx.is_empty() {
            return Err(Error::domain("zero total weight"));
        }
        Ok(Builder {
            block,
            weights,
            n_classes,
            idx,
            scratch_left: Vec::new(),
            scratch_right: Vec::new(),
            feature_scratch: Vec::new(),
            scanner: SplitScanner::default(),
            nodes: Vec::new(),
        })
    }

    fn summary(&self, start: usize, end: usize) -> LabelSummary {
        summarize(
            self.block,
            Some(&self.idx[start..end]),
            self.weights,
            self.n_classes,
        )
    }

    fn is_pure(&self, summary: &LabelSummary, start: usize, end: usize) -> bool {
        match summary {
            LabelSummary::Classes(_) => summary.is_pure(),
            LabelSummary::Moments { .. } => {
                // Exact check: all labels in the range bit-identical.
                let labels = match self.block.labels() {
                    Labels::Value(v) => v,
                    _ => unreachable!(),
                };
                let first = labels[self.idx[start] as usize].to_bits();
                self.idx[start..end]
                    .iter()
                    .all(|&r| labels[r as usize].to_bits() == first)
            }
        }
    }

    fn leaf_payload(&self, summary: &LabelSummary) -> LeafPayload {
        match summary {
            LabelSummary::Classes(counts) => {
                LeafPayload::Histogram(counts.clone().into_boxed_slice())
            }
            LabelSummary::Moments { weight, sum, .. } => LeafPayload::Mean {
                mean: sum / *weight as f64,
                weight: *weight,
            },
        }
    }

    fn majority(&self, summary: &LabelSummary) -> LeafLabel {
        match summary {
            LabelSummary::Classes(counts) => LeafLabel::Class(argmax_u64(counts) as u32),
            LabelSummary::Moments { weight, sum, .. } => LeafLabel::Value(sum / *weight as f64),
        }
    }

    /// Stable in-place partition of `idx[start..end]` by
    /// `x[feature] <= threshold`; returns the split point.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f32) -> usize {
        self.scratch_left.clear();
        self.scratch_right.clear();
        for &row in &self.idx[start..end] {
            if self.block.feature(row as usize, feature) <= threshold {
                self.scratch_left.push(row);
            } else {
                self.scratch_right.push(row);
            }
        }
        let mid = start + self.scratch_left.len();
        self.idx[start..mid].copy_from_slice(&self.scratch_left);
        self.idx[mid..end].copy_from_slice(&self.scratch_right);
        mid
    }

    fn alloc_node(&mut self, parent: Option<(usize, bool)>) -> usize {
        let slot = self.nodes.len();
        self.nodes
            .push(TreeNode::Leaf(LeafPayload::Bucket(u64::MAX)));
        if let Some((parent_slot, is_right)) = parent {
            if let TreeNode::Internal { left, right, .. } = &mut self.nodes[parent_slot] {
                if is_right {
                    *right = slot as u32;
                } else {
                    *left = slot as u32;
                }
            }
        }
        slot
    }

    fn candidates(&mut self, mask: &[u64], count: usize, rng: &mut impl Rng) -> Vec<usize> {
        let d = self.block.n_features();
        let sampled = crate::splits::sample_features(d, count, rng, &mut self.feature_scratch);
        if mask.iter().all(|&w| w == 0) {
            return sampled;
        }
        sampled
            .into_iter()
            .filter(|&f| mask[f / 64] & (1 << (f % 64)) == 0)
            .collect()
    }
}

fn extend_mask(mask: &Arc<Vec<u64>>, found: &[usize]) -> Arc<Vec<u64>> {
    if found.is_empty() {
        return Arc::clone(mask);
    }
    let mut next = (**mask).clone();
    for &f in found {
        next[f / 64] |= 1 << (f % 64);
    }
    Arc::new(next)
}

/// Build a standard tree (depth-first recursion realized with an explicit
/// stack; node layout is pre-order). Recursion stops when a node is
/// weighted-pure, has fewer than `min_samples_split` samples, hits
/// `max_depth`, or no sampled feature admits a split. Leaves store the
/// weighted class histogram or the weighted label mean.
pub fn build_tree(
    rows: &RowBlock,
    weights: &[u32],
    task: Task,
    params: &BuildParams,
    rng: &mut impl Rng,
) -> Result<TreeModel> {
    let d = rows.n_features();
    params.validate(d)?;
    if params.gain.measure.is_classification() != matches!(task, Task::Classification { .. }) {
        return Err(Error::domain("impurity measure does not match task"));
    }
    let mut builder = Builder::new(rows, weights, task.n_classes())?;
    let feature_count = params.gain.features_per_node.resolve(d);
    let mask_words = d.div_ceil(64);

    let mut stack = vec![Frame {
        parent: None,
        start: 0,
        end: builder.idx.len(),
        depth: 0,
        mask: Arc::new(vec![0u64; mask_words]),
    }];
    while let Some(frame) = stack.pop() {
        let slot = builder.alloc_node(frame.parent);
        let summary = builder.summary(frame.start, frame.end);
        let weight = summary.total_weight();

        let depth_capped = params.max_depth.is_some_and(|m| frame.depth >= m);
        if weight < params.min_samples_split
            || depth_capped
            || builder.is_pure(&summary, frame.start, frame.end)
        {
            builder.nodes[slot] = TreeNode::Leaf(builder.leaf_payload(&summary));
            continue;
        }

        let candidates = builder.candidates(&frame.mask, feature_count, rng);
        let mut found_constant = Vec::new();
        let split = builder.scanner.best_split(
            &ScanRequest {
                block: rows,
                idx: &builder.idx[frame.start..frame.end],
                weights,
                parent: &summary,
                candidates: &candidates,
                measure: params.gain.measure,
                lambda: params.gain.lambda,
                min_leaf_weight: params.min_samples_leaf,
            },
            &mut found_constant,
        );
        let Some(split) = split else {
            builder.nodes[slot] = TreeNode::Leaf(builder.leaf_payload(&summary));
            continue;
        };

        let mid = builder.partition(frame.start, frame.end, split.feature, split.threshold);
        debug_assert!(mid > frame.start && mid < frame.end);
        builder.nodes[slot] = TreeNode::Internal {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: 0,
            right: 0,
        };
        let child_mask = extend_mask(&frame.mask, &found_constant);
        stack.push(Frame {
            parent: Some((slot, true)),
            start: mid,
            end: frame.end,
            depth: frame.depth + 1,
            mask: Arc::clone(&child_mask),
        });
        stack.push(Frame {
            parent: Some((slot, false)),
            start: frame.start,
            end: mid,
            depth: frame.depth + 1,
            mask: child_mask,
        });
    }

    Ok(TreeModel::from_nodes(
        builder.nodes,
        d as u32,
        task.n_classes(),
        TreeMode::Standard,
    ))
}

/// Build a top tree: explicit-stack construction where a node becomes a
/// leaf only when its instance count drops below `leaf_threshold` (purity
/// does not stop splitting unless `stop_on_pure` is set) or when no
/// feature admits a split. Rows are unweighted. Leaves are numbered
/// densely `0..N` in construction order and store their bucket index.
pub fn build_top_tree(
    subset: &RowBlock,
    task: Task,
    params: &TopTreeParams,
    rng: &mut impl Rng,
) -> Result<TopTreeOutcome> {
    let d = subset.n_features();
    params.validate(d)?;
    if params.gain.measure.is_classification() != matches!(task, Task::Classification { .. }) {
        return Err(Error::domain("impurity measure does not match task"));
    }
    let mut builder = Builder::new(subset, &[], task.n_classes())?;
    let feature_count = params.gain.features_per_node.resolve(d);
    let mask_words = d.div_ceil(64);
    let mut majorities = Vec::new();

    let mut stack = vec![Frame {
        parent: None,
        start: 0,
        end: builder.idx.len(),
        depth: 0,
        mask: Arc::new(vec![0u64; mask_words]),
    }];
    while let Some(frame) = stack.pop() {
        let slot = builder.alloc_node(frame.parent);
        let count = frame.end - frame.start;
        let summary = builder.summary(frame.start, frame.end);

        let mut split = None;
        let mut found_constant = Vec::new();
        let stop = (count as f64) < params.leaf_threshold
            || (params.stop_on_pure && builder.is_pure(&summary, frame.start, frame.end));
        if !stop {
            let candidates = builder.candidates(&frame.mask, feature_count, rng);
            split = builder.scanner.best_split(
                &ScanRequest {
                    block: subset,
                    idx: &builder.idx[frame.start..frame.end],
                    weights: &[],
                    parent: &summary,
                    candidates: &candidates,
                    measure: params.gain.measure,
                    lambda: params.gain.lambda,
                    min_leaf_weight: 1,
                },
                &mut found_constant,
            );
        }

        match split {
            Some(split) => {
                let mid = builder.partition(frame.start, frame.end, split.feature, split.threshold);
                debug_assert!(mid > frame.start && mid < frame.end);
                builder.nodes[slot] = TreeNode::Internal {
                    feature: split.feature as u32,
                    threshold: split.threshold,
                    left: 0,
                    right: 0,
                };
                let child_mask = extend_mask(&frame.mask, &found_constant);
                stack.push(Frame {
                    parent: Some((slot, true)),
                    start: mid,
                    end: frame.end,
                    depth: frame.depth + 1,
                    mask: Arc::clone(&child_mask),
                });
                stack.push(Frame {
                    parent: Some((slot, false)),
                    start: frame.start,
                    end: mid,
                    depth: frame.depth + 1,
                    mask: child_mask,
                });
            }
            None => {
                // Below threshold, pure (naive mode), or unsplittable.
                let bucket = majorities.len() as u64;
                majorities.push(builder.majority(&summary));
                builder.nodes[slot] = TreeNode::Leaf(LeafPayload::Bucket(bucket));
            }
        }
    }

    Ok(TopTreeOutcome {
        model: TreeModel::from_nodes(builder.nodes, d as u32, task.n_classes(), TreeMode::TopTree),
        majorities,
    })
}

/// Build the single-leaf standard tree that predicts a fixed label
/// (used for buckets that receive no rows).
pub fn constant_tree(label: LeafLabel, n_features: u32, n_classes: u32) -> TreeModel {
    let payload = match label {
        LeafLabel::Class(c) => {
            let mut counts = vec![0u64; n_classes as usize];
            counts[c as usize] = 1;
            LeafPayload::Histogram(counts.into_boxed_slice())
        }
        LeafLabel::Value(v) => LeafPayload::Mean { mean: v, weight: 1 },
    };
    TreeModel::from_nodes(
        vec![TreeNode::Leaf(payload)],
        n_features,
        n_classes,
        TreeMode::Standard,
    )
}
