//! Forest orchestration: the three-phase construction (sample and build
//! top trees, distribute all rows to leaf buckets, build bottom trees per
//! bucket), the flat baselines, the ensemble combiner, and model
//! serialization.

mod codec;
mod distribute;
mod train;

pub use codec::{
    load_forest, read_forest, save_forest, write_forest, FOREST_MAGIC, FOREST_VERSION,
};
pub use distribute::{distribute, BucketEntry, BucketManifest};
pub use train::{build_big_forest, build_standard_forest, build_subsets_forest, TrainStats};

use crate::data::{Labels, RowBlock, Task};
use crate::error::{Error, Result};
use crate::splits::{FeatureSelect, ImpurityMeasure};
use crate::tree::{LeafLabel, TreeMode, TreeModel};

/// Training scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Three-phase construction with top trees and leaf buckets.
    Woody,
    /// One standard tree per random subset; remaining rows are discarded.
    Subsets,
    /// Standard in-memory random forest over the full data.
    Standard,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "woody" => Some(Scheme::Woody),
            "subsets" => Some(Scheme::Subsets),
            "standard" => Some(Scheme::Standard),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Woody => "woody",
            Scheme::Subsets => "subsets",
            Scheme::Standard => "standard",
        }
    }
}

/// Default subset size R and leaf bucket size M for a dataset of `n`
/// rows: `min(500_000, n, max(100 * sqrt(n), 100_000))`.
pub fn default_subset_and_leaf_size(n: u64) -> (u64, u64) {
    let sqrt_term = (100.0 * (n as f64).sqrt()).floor() as u64;
    let v = 500_000.min(n).min(sqrt_term.max(100_000));
    (v, v)
}

/// Configuration of one training run.
#[derive(Debug, Clone)]
pub struct ForestConfig {
    /// Number of top trees (woody) or, times `n_b`, total trees (flat
    /// schemes).
    pub n_top: usize,
    /// Bottom trees per leaf bucket.
    pub n_b: usize,
    /// Subset size R; defaults to the size formula (woody) or
    /// `min(500_000, n)` (subsets baseline).
    pub subset_size: Option<u64>,
    /// Desired post-distribution bucket size M; defaults to the formula.
    pub leaf_bucket_size: Option<u64>,
    /// Balance regularization for top trees.
    pub lambda: f64,
    /// Streaming chunk size C.
    pub chunk_size: usize,
    pub seed: u64,
    /// Worker pool width for tree building.
    pub jobs: usize,
    /// Draw bootstrap multiplicities for bottom / flat trees.
    pub bootstrap: bool,
    /// Features examined per node in bottom / flat trees.
    pub features_per_node: FeatureSelect,
    /// Oversized-bucket fallback threshold, as a multiple of M; `None`
    /// disables re-splitting.
    pub hard_cap_multiplier: Option<u32>,
    /// Stop top-tree growth on pure nodes (the naive scheme; diagnostic).
    pub top_purity_stop: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_top: 1,
            n_b: 1,
            subset_size: None,
            leaf_bucket_size: None,
            lambda: 1.0,
            chunk_size: 1_000_000,
            seed: 0,
            jobs: 4,
            bootstrap: true,
            features_per_node: FeatureSelect::Sqrt,
            hard_cap_multiplier: Some(8),
            top_purity_stop: false,
        }
    }
}

/// Config resolved against a concrete dataset size.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedSizes {
    /// Effective subset size (clamped to n).
    pub r: u64,
    /// Desired bucket size M.
    pub m: u64,
    /// Top-tree stopping threshold `max(2, M * R / n)`.
    pub m_bar: f64,
    /// Oversized-bucket cap in rows, when enabled.
    pub hard_cap: Option<u64>,
    pub total_trees: usize,
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_top < 1 {
            return Err(Error::config("n_top must be >= 1"));
        }
        if self.n_b < 1 {
            return Err(Error::config("bottom trees per bucket must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.chunk_size < 1 {
            return Err(Error::config("chunk_size must be >= 1"));
        }
        if self.jobs < 1 {
            return Err(Error::config("jobs must be >= 1"));
        }
        if let Some(m) = self.leaf_bucket_size {
            if m < 2 {
                return Err(Error::config("leaf bucket size M must be >= 2"));
            }
        }
        if let Some(r) = self.subset_size {
            if r < 1 {
                return Err(Error::config("subset size R must be >= 1"));
            }
        }
        Ok(())
    }

    /// Resolve R, M and the stopping threshold for a dataset of `n` rows.
    pub fn resolve(&self, n: u64) -> Result<ResolvedSizes> {
        self.validate()?;
        let (default_r, default_m) = default_subset_and_leaf_size(n);
        let r = self.subset_size.unwrap_or(default_r).min(n).max(1);
        let m = self.leaf_bucket_size.unwrap_or(default_m).max(2);
        let m_bar = crate::tree::estimate_leaf_threshold(m, r, n)?;
        Ok(ResolvedSizes {
            r,
            m,
            m_bar,
            hard_cap: self.hard_cap_multiplier.map(|f| f as u64 * m),
            total_trees: self.n_top * self.n_b,
        })
    }
}

/// One top tree with its attached bottom trees, `leaf_trees[leaf][slot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopUnit {
    pub top: TreeModel,
    pub leaf_trees: Vec<Vec<TreeModel>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForestMembers {
    Flat(Vec<TreeModel>),
    Layered(Vec<TopUnit>),
}

/// A trained ensemble. Classification combines the member trees' votes by
/// argmax; regression averages their predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub scheme: Scheme,
    pub task: Task,
    pub n_features: u32,
    pub members: ForestMembers,
}

impl ForestModel {
    /// Number of ensemble members (votes per pattern). A layered unit
    /// contributes `n_b` members: each shares the unit's top tree and uses
    /// one bottom-tree slot per leaf.
    pub fn n_trees(&self) -> usize {
        match &self.members {
            ForestMembers::Flat(trees) => trees.len(),
            ForestMembers::Layered(units) => units
                .iter()
                .map(|u| u.leaf_trees.first().map(Vec::len).unwrap_or(0))
                .sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_tree = |tree: &TreeModel, mode: TreeMode| -> Result<()> {
            if tree.n_features() != self.n_features {
                return Err(Error::format("member tree arity mismatch"));
            }
            if tree.mode() != mode {
                return Err(Error::format("member tree has the wrong mode"));
            }
            if tree.n_classes() != self.task.n_classes() {
                return Err(Error::format("member tree class count mismatch"));
            }
            Ok(())
        };
        match &self.members {
            ForestMembers::Flat(trees) => {
                if trees.is_empty() {
                    return Err(Error::format("forest has no trees"));
                }
                for tree in trees {
                    check_tree(tree, TreeMode::Standard)?;
                }
            }
            ForestMembers::Layered(units) => {
                if units.is_empty() {
                    return Err(Error::format("forest has no top trees"));
                }
                let n_b = units
                    .first()
                    .and_then(|u| u.leaf_trees.first())
                    .map(Vec::len)
                    .unwrap_or(0);
                if n_b == 0 {
                    return Err(Error::format("top unit without bottom trees"));
                }
                for unit in units {
                    if unit.top.n_features() != self.n_features {
                        return Err(Error::format("top tree arity mismatch"));
                    }
                    if unit.top.mode() != TreeMode::TopTree {
                        return Err(Error::format("top unit root is not a top tree"));
                    }
                    if unit.leaf_trees.len() != unit.top.n_leaves() {
                        return Err(Error::format(
                            "bottom tree groups do not match top tree leaves",
                        ));
                    }
                    for group in &unit.leaf_trees {
                        if group.len() != n_b {
                            return Err(Error::format("uneven bottom trees per leaf"));
                        }
                        for tree in group {
                            check_tree(tree, TreeMode::Standard)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Predict one pattern: route through every member tree and combine.
    pub fn predict(&self, pattern: &[f32]) -> Result<LeafLabel> {
        if pattern.len() != self.n_features as usize {
            return Err(Error::domain(format!(
                "pattern has {} features, model expects {}",
                pattern.len(),
                self.n_features
            )));
        }
        match self.task {
            Task::Classification { n_classes } => {
                let mut votes = vec![0u64; n_classes as usize];
                self.for_each_member_label(pattern, |label| match label {
                    LeafLabel::Class(c) => votes[c as usize] += 1,
                    LeafLabel::Value(_) => unreachable!(),
                })?;
                Ok(LeafLabel::Class(vote_argmax(&votes) as u32))
            }
            Task::Regression => {
                let mut sum = 0.0f64;
                let mut count = 0u64;
                self.for_each_member_label(pattern, |label| match label {
                    LeafLabel::Value(v) => {
                        sum += v;
                        count += 1;
                    }
                    LeafLabel::Class(_) => unreachable!(),
                })?;
                Ok(LeafLabel::Value(sum / count as f64))
            }
        }
    }

    fn for_each_member_label(&self, pattern: &[f32], mut f: impl FnMut(LeafLabel)) -> Result<()> {
        match &self.members {
            ForestMembers::Flat(trees) => {
                for tree in trees {
                    f(tree.predict_label(pattern)?);
                }
            }
            ForestMembers::Layered(units) => {
                for unit in units {
                    let leaf = unit.top.predict_leaf_index(pattern)? as usize;
                    for tree in &unit.leaf_trees[leaf] {
                        f(tree.predict_label(pattern)?);
                    }
                }
            }
        }
        Ok(())
    }

    /// Predict a block of patterns (labels in the block are ignored).
    pub fn predict_block(&self, block: &RowBlock) -> Result<Vec<LeafLabel>> {
        let mut out = Vec::with_capacity(block.n_rows());
        for i in 0..block.n_rows() {
            out.push(self.predict(block.row(i))?);
        }
        Ok(out)
    }
}

/// Fully-grown build parameters for bottom and flat trees: the task's
/// default impurity, no depth cap, `min_samples_leaf` 1.
pub fn bottom_params(task: Task, features_per_node: FeatureSelect) -> crate::tree::BuildParams {
    crate::tree::BuildParams::fully_grown(crate::splits::GainConfig::standard(
        ImpurityMeasure::default_for(task),
        features_per_node,
    ))
}

/// Argmax over per-class vote counts; ties break toward the lowest class.
pub fn vote_argmax(votes: &[u64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions matching the block's class labels.
pub fn accuracy(predictions: &[LeafLabel], labels: &Labels) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::domain("prediction / label length mismatch"));
    }
    let mut hits = 0u64;
    for (i, p) in predictions.iter().enumerate() {
        match p {
            LeafLabel::Class(c) => {
                if *c == labels.class(i) {
                    hits += 1;
                }
            }
            LeafLabel::Value(_) => return Err(Error::domain("accuracy of regression output")),
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

/// Mean squared error against the block's regression labels.
pub fn mean_squared_error(predictions: &[LeafLabel], labels: &Labels) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::domain("prediction / label length mismatch"));
    }
    let mut acc = 0.0f64;
    for (i, p) in predictions.iter().enumerate() {
        match p {
            LeafLabel::Value(v) => {
                let e = v - labels.value(i);
                acc += e * e;
            }
            LeafLabel::Class(_) => return Err(Error::domain("mse of classification output")),
        }
    }
    Ok(acc / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes_match_the_formula() {
        // 100 sqrt(464809) ~ 68_177 < 100_000, capped by the floor.
        assert_eq!(default_subset_and_leaf_size(464_809), (100_000, 100_000));
        // 100 sqrt(1e8) = 1_000_000, capped by 500_000.
        assert_eq!(
            default_subset_and_leaf_size(100_000_000),
            (500_000, 500_000)
        );
        // Clamped by n.
        assert_eq!(default_subset_and_leaf_size(50_000), (50_000, 50_000));
    }

    #[test]
    fn vote_argmax_tie_breaks_low() {
        assert_eq!(vote_argmax(&[0, 5, 0]), 1);
        assert_eq!(vote_argmax(&[3, 3]), 0);
        assert_eq!(vote_argmax(&[1, 2, 2]), 1);
    }

    #[test]
    fn config_validation() {
        let cfg = ForestConfig {
            lambda: 1.5,
            ..ForestConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ForestConfig {
            n_b: 0,
            ..ForestConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn resolve_clamps_r_to_n() {
        let cfg = ForestConfig {
            subset_size: Some(1_000_000),
            leaf_bucket_size: Some(100),
            ..ForestConfig::default()
        };
        let sizes = cfg.resolve(5_000).unwrap();
        assert_eq!(sizes.r, 5_000);
        // R = n: threshold equals M.
        assert_eq!(sizes.m_bar, 100.0);
        assert_eq!(sizes.hard_cap, Some(800));
    }
}
