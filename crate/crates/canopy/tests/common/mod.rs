//! Shared test helpers: an independent brute-force CART oracle and small
//! dataset generators.
//!
//! The oracle deliberately avoids the library's split-search machinery:
//! it keeps rows as `Vec<Vec<f32>>`, recurses, and evaluates every
//! (feature, midpoint) pair by rescanning the node's rows. It shares only
//! the contracts: midpoint thresholds, `x <= threshold` goes left,
//! lowest-feature-then-lowest-threshold tie-breaking, and leaves that are
//! pure, smaller than `min_samples_split`, or unsplittable.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use rand::Rng;

pub enum OracleNode {
    Leaf {
        histogram: Vec<u64>,
    },
    Split {
        feature: usize,
        threshold: f32,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

pub struct OracleTree {
    pub root: OracleNode,
    pub n_classes: usize,
}

fn gini_of(counts: &[u64], total: u64) -> f64 {
    let t = total as f64;
    let mut acc = 0.0;
    for &c in counts {
        let p = c as f64 / t;
        acc += p * p;
    }
    1.0 - acc
}

fn oracle_midpoint(a: f32, b: f32) -> f32 {
    let mid = ((a as f64 + b as f64) * 0.5) as f32;
    if mid >= b {
        a
    } else {
        mid
    }
}

fn histogram(labels: &[u32], members: &[usize], k: usize) -> Vec<u64> {
    let mut counts = vec![0u64; k];
    for &i in members {
        counts[labels[i] as usize] += 1;
    }
    counts
}

fn exhaustive_best_split(
    rows: &[Vec<f32>],
    labels: &[u32],
    members: &[usize],
    k: usize,
) -> Option<(usize, f32, f64)> {
    let d = rows[0].len();
    let parent = histogram(labels, members, k);
    let total = members.len() as u64;
    let q_s = gini_of(&parent, total);
    let mut best: Option<(usize, f32, f64)> = None;
    for feature in 0..d {
        let mut values: Vec<f32> = members.iter().map(|&i| rows[i][feature]).collect();
        values.sort_by(f32::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let theta = oracle_midpoint(pair[0], pair[1]);
            let mut left = vec![0u64; k];
            let mut n_left = 0u64;
            for &i in members {
                if rows[i][feature] <= theta {
                    left[labels[i] as usize] += 1;
                    n_left += 1;
                }
            }
            let n_right = total - n_left;
            if n_left == 0 || n_right == 0 {
                continue;
            }
            let right: Vec<u64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
            let gain = q_s
                - (n_left as f64 / total as f64) * gini_of(&left, n_left)
                - (n_right as f64 / total as f64) * gini_of(&right, n_right);
            let better = match &best {
                None => true,
                Some((_, _, best_gain)) => gain > *best_gain,
            };
            if better {
                best = Some((feature, theta, gain));
            }
        }
    }
    best
}

fn build_node(rows: &[Vec<f32>], labels: &[u32], members: &[usize], k: usize) -> OracleNode {
    let counts = histogram(labels, members, k);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || members.len() < 2 {
        return OracleNode::Leaf { histogram: counts };
    }
    match exhaustive_best_split(rows, labels, members, k) {
        None => OracleNode::Leaf { histogram: counts },
        Some((feature, threshold, _)) => {
            let (left, right): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| rows[i][feature] <= threshold);
            OracleNode::Split {
                feature,
                threshold,
                left: Box::new(build_node(rows, labels, &left, k)),
                right: Box::new(build_node(rows, labels, &right, k)),
            }
        }
    }
}

pub fn build_oracle_tree(rows: &[Vec<f32>], labels: &[u32], n_classes: usize) -> OracleTree {
    assert_eq!(rows.len(), labels.len());
    let members: Vec<usize> = (0..rows.len()).collect();
    OracleTree {
        root: build_node(rows, labels, &members, n_classes),
        n_classes,
    }
}

impl OracleTree {
    pub fn predict(&self, pattern: &[f32]) -> u32 {
        let mut node = &self.root;
        loop {
            match node {
                OracleNode::Leaf { histogram } => {
                    let mut best = 0usize;
                    for (c, &v) in histogram.iter().enumerate() {
                        if v > histogram[best] {
                            best = c;
                        }
                    }
                    return best as u32;
                }
                OracleNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if pattern[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn best_root_split(
        rows: &[Vec<f32>],
        labels: &[u32],
        n_classes: usize,
    ) -> Option<(usize, f32, f64)> {
        let members: Vec<usize> = (0..rows.len()).collect();
        exhaustive_best_split(rows, labels, &members, n_classes)
    }
}

/// Random classification dataset. Even dataset indices use coarse grid
/// features (heavy value ties, conflicting duplicate rows likely); odd
/// ones use continuous features.
pub fn random_dataset(
    rng: &mut impl Rng,
    max_rows: usize,
    max_features: usize,
    coarse: bool,
) -> (Vec<Vec<f32>>, Vec<u32>, usize) {
    let n = rng.gen_range(20..=max_rows);
    let d = rng.gen_range(2..=max_features);
    let k = rng.gen_range(2..=4);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f32> = (0..d)
            .map(|_| {
                if coarse {
                    rng.gen_range(0..5) as f32 * 0.25
                } else {
                    rng.gen::<f32>() * 10.0 - 5.0
                }
            })
            .collect();
        rows.push(row);
        labels.push(rng.gen_range(0..k) as u32);
    }
    (rows, labels, k)
}

pub fn to_block(rows: &[Vec<f32>], labels: &[u32]) -> canopy::data::RowBlock {
    let pairs: Vec<(&[f32], u32)> = rows
        .iter()
        .zip(labels.iter())
        .map(|(r, &l)| (r.as_slice(), l))
        .collect();
    canopy::data::RowBlock::from_rows_class(&pairs)
}
