//! Impurity measures, information gain, the balance-regularized gain used
//! by top trees, and best-split search over a node's rows.
//!
//! Split semantics: a split `(feature, threshold)` sends rows with
//! `x[feature] <= threshold` left and the rest right. Candidate thresholds
//! are midpoints between consecutive distinct sorted feature values.
//! Bootstrap multiplicities enter every count and histogram as weights.

use rand::Rng;

use crate::data::{Labels, RowBlock, Task};
use crate::error::{Error, Result};

/// Node impurity measure `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpurityMeasure {
    Gini,
    Entropy,
    /// Population variance of the labels (regression).
    Variance,
}

impl ImpurityMeasure {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification { .. } => ImpurityMeasure::Gini,
            Task::Regression => ImpurityMeasure::Variance,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, ImpurityMeasure::Variance)
    }
}

/// Sufficient label statistics of a (weighted) set of rows.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelSummary {
    /// Weighted count per class.
    Classes(Vec<u64>),
    /// Weighted count, weighted label sum, weighted sum of squared labels.
    Moments { weight: u64, sum: f64, sum_sq: f64 },
}

impl LabelSummary {
    pub fn total_weight(&self) -> u64 {
        match self {
            LabelSummary::Classes(counts) => counts.iter().sum(),
            LabelSummary::Moments { weight, .. } => *weight,
        }
    }

    /// True when all weight sits on one label (classification) or the
    /// weight is concentrated on a single point (variance zero is checked
    /// through the impurity, not here).
    pub fn is_pure(&self) -> bool {
        match self {
            LabelSummary::Classes(counts) => counts.iter().filter(|&&c| c > 0).count() <= 1,
            LabelSummary::Moments {
                weight,
                sum,
                sum_sq,
            } => {
                if *weight == 0 {
                    return true;
                }
                let w = *weight as f64;
                let mean = sum / w;
                (sum_sq / w - mean * mean).max(0.0) == 0.0
            }
        }
    }

    /// Accumulate one weighted observation.
    pub fn add_class(&mut self, class: u32, weight: u64) {
        match self {
            LabelSummary::Classes(counts) => counts[class as usize] += weight,
            _ => panic!("class observation on a regression summary"),
        }
    }

    pub fn add_value(&mut self, value: f64, weight: u64) {
        match self {
            LabelSummary::Moments {
                weight: w,
                sum,
                sum_sq,
            } => {
                *w += weight;
                let wf = weight as f64;
                *sum += wf * value;
                *sum_sq += wf * value * value;
            }
            _ => panic!("value observation on a classification summary"),
        }
    }
}

/// Summarize the labels of rows `idx` (all rows when `idx` is `None`),
/// weighting each row by its multiplicity (`weights` empty means 1).
pub fn summarize(
    block: &RowBlock,
    idx: Option<&[u32]>,
    weights: &[u32],
    n_classes: u32,
) -> LabelSummary {
    let weight_of = |row: usize| -> u64 {
        if weights.is_empty() {
            1
        } else {
            weights[row] as u64
        }
    };
    match block.labels() {
        Labels::Class(labels) => {
            let mut counts = vec![0u64; n_classes as usize];
            match idx {
                Some(idx) => {
                    for &row in idx {
                        counts[labels[row as usize] as usize] += weight_of(row as usize);
                    }
                }
                None => {
                    for (row, &label) in labels.iter().enumerate() {
                        counts[label as usize] += weight_of(row);
                    }
                }
            }
            LabelSummary::Classes(counts)
        }
        Labels::Value(labels) => {
            let mut summary = LabelSummary::Moments {
                weight: 0,
                sum: 0.0,
                sum_sq: 0.0,
            };
            match idx {
                Some(idx) => {
                    for &row in idx {
                        summary.add_value(labels[row as usize], weight_of(row as usize));
                    }
                }
                None => {
                    for (row, &label) in labels.iter().enumerate() {
                        summary.add_value(label, weight_of(row));
                    }
                }
            }
            summary
        }
    }
}

fn gini(counts: &[u64], total: u64) -> f64 {
    let t = total as f64;
    let mut acc = 0.0;
    for &c in counts {
        let p = c as f64 / t;
        acc += p * p;
    }
    1.0 - acc
}

fn entropy(counts: &[u64], total: u64) -> f64 {
    let t = total as f64;
    let mut acc = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / t;
            acc -= p * p.log2();
        }
    }
    acc
}

fn variance(weight: u64, sum: f64, sum_sq: f64) -> f64 {
    let w = weight as f64;
    let mean = sum / w;
    (sum_sq / w - mean * mean).max(0.0)
}

/// Impurity `Q(S)` of a label summary.
///
/// gini = `1 - sum p_c^2`, entropy = `-sum p_c log2 p_c` (with `0 log 0 = 0`),
/// variance = mean squared deviation of the labels.
pub fn impurity(measure: ImpurityMeasure, summary: &LabelSummary) -> Result<f64> {
    if summary.total_weight() == 0 {
        return Err(Error::domain("impurity of an empty summary"));
    }
    match (measure, summary) {
        (ImpurityMeasure::Gini, LabelSummary::Classes(counts)) => {
            Ok(gini(counts, counts.iter().sum()))
        }
        (ImpurityMeasure::Entropy, LabelSummary::Classes(counts)) => {
            Ok(entropy(counts, counts.iter().sum()))
        }
        (
            ImpurityMeasure::Variance,
            LabelSummary::Moments {
                weight,
                sum,
                sum_sq,
            },
        ) => Ok(variance(*weight, *sum, *sum_sq)),
        _ => Err(Error::domain(
            "impurity measure does not match summary kind",
        )),
    }
}

fn weighted_gain(q_s: f64, w_s: f64, q_l: f64, w_l: f64, q_r: f64, w_r: f64) -> f64 {
    q_s - (w_l / w_s) * q_l - (w_r / w_s) * q_r
}

/// Information gain `G = Q(S) - |L|/|S| Q(L) - |R|/|S| Q(R)`.
pub fn gain(
    parent: &LabelSummary,
    left: &LabelSummary,
    right: &LabelSummary,
    measure: ImpurityMeasure,
) -> Result<f64> {
    let (ws, wl, wr) = (
        parent.total_weight(),
        left.total_weight(),
        right.total_weight(),
    );
    if wl == 0 || wr == 0 {
        return Err(Error::domain("gain with an empty split side"));
    }
    if wl + wr != ws {
        return Err(Error::domain("split sides do not partition the parent"));
    }
    let q_s = impurity(measure, parent)?;
    let q_l = impurity(measure, left)?;
    let q_r = impurity(measure, right)?;
    Ok(weighted_gain(
        q_s, ws as f64, q_l, wl as f64, q_r, wr as f64,
    ))
}

fn balance_penalty(w_l: f64, w_r: f64, w_s: f64) -> f64 {
    (w_l - w_r).abs() / w_s
}

/// Balance-regularized gain
/// `(1 - lambda) * G - lambda * | |L| - |R| | / |S|`.
///
/// `lambda = 0` reduces to the plain gain; `lambda = 1` ignores labels and
/// scores only the size balance of the partition.
pub fn adapted_gain(
    parent: &LabelSummary,
    left: &LabelSummary,
    right: &LabelSummary,
    measure: ImpurityMeasure,
    lambda: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda {lambda} outside [0, 1]")));
    }
    let g = gain(parent, left, right, measure)?;
    let pen = balance_penalty(
        left.total_weight() as f64,
        right.total_weight() as f64,
        parent.total_weight() as f64,
    );
    Ok((1.0 - lambda) * g - lambda * pen)
}

/// How many features to examine per node split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSelect {
    All,
    /// `max(1, floor(sqrt(d)))` features.
    Sqrt,
    Count(usize),
}

impl FeatureSelect {
    pub fn resolve(&self, d: usize) -> usize {
        match self {
            FeatureSelect::All => d,
            FeatureSelect::Sqrt => ((d as f64).sqrt().floor() as usize).clamp(1, d),
            FeatureSelect::Count(c) => *c,
        }
    }
}

/// Split scoring configuration for one tree.
#[derive(Debug, Clone)]
pub struct GainConfig {
    pub lambda: f64,
    pub measure: ImpurityMeasure,
    pub features_per_node: FeatureSelect,
}

impl GainConfig {
    pub fn standard(measure: ImpurityMeasure, features_per_node: FeatureSelect) -> Self {
        GainConfig {
            lambda: 0.0,
            measure,
            features_per_node,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if let FeatureSelect::Count(c) = self.features_per_node {
            if c == 0 || c > d {
                return Err(Error::config(format!(
                    "features_per_node {c} outside [1, {d}]"
                )));
            }
        }
        Ok(())
    }
}

/// The best split found for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f32,
    /// Weighted count of rows with `x[feature] <= threshold`.
    pub left_weight: u64,
    pub right_weight: u64,
    /// Value of the configured gain (plain or balance-regularized).
    pub gain: f64,
}

/// Threshold between two consecutive distinct sorted values: their
/// midpoint, rounded down to `a` if rounding would reach `b` (so the
/// partition induced by `x <= threshold` always separates `a` from `b`).
pub fn split_midpoint(a: f32, b: f32) -> f32 {
    debug_assert!(a < b);
    let mid = ((a as f64) + (b as f64)) * 0.5;
    let mid = mid as f32;
    if mid >= b {
        a
    } else {
        mid
    }
}

/// Draw `count` distinct features from `0..d`, returned in ascending order
/// so that equal-gain ties resolve toward the lowest feature index.
pub(crate) fn sample_features(
    d: usize,
    count: usize,
    rng: &mut impl Rng,
    scratch: &mut Vec<usize>,
) -> Vec<usize> {
    if count >= d {
        return (0..d).collect();
    }
    scratch.clear();
    scratch.extend(0..d);
    for i in 0..count {
        let j = rng.gen_range(i..d);
        scratch.swap(i, j);
    }
    let mut picked: Vec<usize> = scratch[..count].to_vec();
    picked.sort_unstable();
    picked
}

/// Reusable scratch state for split scanning.
#[derive(Debug, Default)]
pub(crate) struct SplitScanner {
    pairs: Vec<(f32, u32)>,
    left_counts: Vec<u64>,
    right_counts: Vec<u64>,
}

pub(crate) struct ScanRequest<'a> {
    pub block: &'a RowBlock,
    pub idx: &'a [u32],
    /// Per-block-row multiplicities; empty means weight 1 everywhere.
    pub weights: &'a [u32],
    pub parent: &'a LabelSummary,
    /// Candidate feature indices in ascending order.
    pub candidates: &'a [usize],
    pub measure: ImpurityMeasure,
    pub lambda: f64,
    pub min_leaf_weight: u64,
}

impl SplitScanner {
    /// Exhaustively scan all candidate features and midpoint thresholds,
    /// returning the candidate with the maximum configured gain. Ties keep
    /// the first maximum, i.e. the lowest feature index and then the
    /// lowest threshold. Features found locally constant are appended to
    /// `found_constant`.
    // Negated `<` comparisons are load-bearing: they treat NaN pairs as
    // non-boundaries instead of panicking or splitting on them.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub(crate) fn best_split(
        &mut self,
        req: &ScanRequest<'_>,
        found_constant: &mut Vec<usize>,
    ) -> Option<SplitCandidate> {
        let total_weight = req.parent.total_weight();
        if req.idx.len() < 2 || total_weight < 2 {
            return None;
        }
        let q_s = impurity(req.measure, req.parent).ok()?;
        let w_s = total_weight as f64;
        let use_balance = req.lambda > 0.0;
        let mut best: Option<SplitCandidate> = None;

        for &feature in req.candidates {
            self.pairs.clear();
            for &row in req.idx {
                self.pairs
                    .push((req.block.feature(row as usize, feature), row));
            }
            self.pairs
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if !(self.pairs[0].0 < self.pairs[self.pairs.len() - 1].0) {
                found_constant.push(feature);
                continue;
            }

            match req.parent {
                LabelSummary::Classes(total_counts) => {
                    self.left_counts.clear();
                    self.left_counts.resize(total_counts.len(), 0);
                    self.right_counts.clear();
                    self.right_counts.resize(total_counts.len(), 0);
                    let mut left_weight = 0u64;
                    for i in 0..self.pairs.len() - 1 {
                        let (value, row) = self.pairs[i];
                        let w = row_weight(req.weights, row);
                        let label = req.block.labels().class(row as usize);
                        self.left_counts[label as usize] += w;
                        left_weight += w;
                        let next = self.pairs[i + 1].0;
                        if !(value < next) {
                            continue;
                        }
                        let right_weight = total_weight - left_weight;
                        if left_weight < req.min_leaf_weight || right_weight < req.min_leaf_weight {
                            continue;
                        }
                        let score = if req.lambda >= 1.0 {
                            // Labels do not matter at lambda = 1.
                            -balance_penalty(left_weight as f64, right_weight as f64, w_s)
                        } else {
                            for (r, (&t, &l)) in self
                                .right_counts
                                .iter_mut()
                                .zip(total_counts.iter().zip(self.left_counts.iter()))
                            {
                                *r = t - l;
                            }
                            let q_l = gini_or_entropy(req.measure, &self.left_counts, left_weight);
                            let q_r =
                                gini_or_entropy(req.measure, &self.right_counts, right_weight);
                            let g = weighted_gain(
                                q_s,
                                w_s,
                                q_l,
                                left_weight as f64,
                                q_r,
                                right_weight as f64,
                            );
                            if use_balance {
                                (1.0 - req.lambda) * g
                                    - req.lambda
                                        * balance_penalty(
                                            left_weight as f64,
                                            right_weight as f64,
                                            w_s,
                                        )
                            } else {
                                g
                            }
                        };
                        update_best(
                            &mut best,
                            score,
                            feature,
                            value,
                            next,
                            left_weight,
                            right_weight,
                        );
                    }
                }
                LabelSummary::Moments {
                    weight: _,
                    sum: total_sum,
                    sum_sq: total_sum_sq,
                } => {
                    let mut left_weight = 0u64;
                    let mut left_sum = 0.0f64;
                    let mut left_sum_sq = 0.0f64;
                    for i in 0..self.pairs.len() - 1 {
                        let (value, row) = self.pairs[i];
                        let w = row_weight(req.weights, row);
                        let y = req.block.labels().value(row as usize);
                        let wf = w as f64;
                        left_weight += w;
                        left_sum += wf * y;
                        left_sum_sq += wf * y * y;
                        let next = self.pairs[i + 1].0;
                        if !(value < next) {
                            continue;
                        }
                        let right_weight = total_weight - left_weight;
                        if left_weight < req.min_leaf_weight || right_weight < req.min_leaf_weight {
                            continue;
                        }
                        let score = if req.lambda >= 1.0 {
                            -balance_penalty(left_weight as f64, right_weight as f64, w_s)
                        } else {
                            let q_l = variance(left_weight, left_sum, left_sum_sq);
                            let q_r = variance(
                                right_weight,
                                total_sum - left_sum,
                                total_sum_sq - left_sum_sq,
                            );
                            let g = weighted_gain(
                                q_s,
                                w_s,
                                q_l,
                                left_weight as f64,
                                q_r,
                                right_weight as f64,
                            );
                            if use_balance {
                                (1.0 - req.lambda) * g
                                    - req.lambda
                                        * balance_penalty(
                                            left_weight as f64,
                                            right_weight as f64,
                                            w_s,
                                        )
                            } else {
                                g
                            }
                        };
                        update_best(
                            &mut best,
                            score,
                            feature,
                            value,
                            next,
                            left_weight,
                            right_weight,
                        );
                    }
                }
            }
        }
        best
    }
}

fn gini_or_entropy(measure: ImpurityMeasure, counts: &[u64], total: u64) -> f64 {
    match measure {
        ImpurityMeasure::Gini => gini(counts, total),
        ImpurityMeasure::Entropy => entropy(counts, total),
        ImpurityMeasure::Variance => unreachable!("variance on class counts"),
    }
}

fn row_weight(weights: &[u32], row: u32) -> u64 {
    if weights.is_empty() {
        1
    } else {
        weights[row as usize] as u64
    }
}

#[allow(clippy::too_many_arguments)]
fn update_best(
    best: &mut Option<SplitCandidate>,
    score: f64,
    feature: usize,
    value: f32,
    next: f32,
    left_weight: u64,
    right_weight: u64,
) {
    let better = match best {
        None => true,
        Some(b) => score > b.gain,
    };
    if better {
        *best = Some(SplitCandidate {
            feature,
            threshold: split_midpoint(value, next),
            left_weight,
            right_weight,
            gain: score,
        });
    }
}

/// Search the best split of a whole block of rows.
///
/// Samples `config.features_per_node` features without replacement,
/// evaluates every midpoint threshold of each sampled feature, and returns
/// the candidate maximizing the configured gain (`adapted_gain` when
/// `lambda > 0`), or `None` when no sampled feature admits a split.
pub fn best_split(
    rows: &RowBlock,
    weights: &[u32],
    task: Task,
    config: &GainConfig,
    rng: &mut impl Rng,
) -> Result<Option<SplitCandidate>> {
    let d = rows.n_features();
    config.validate(d)?;
    if !weights.is_empty() && weights.len() != rows.n_rows() {
        return Err(Error::domain("weights length does not match row count"));
    }
    if config.measure.is_classification() != matches!(task, Task::Classification { .. }) {
        return Err(Error::domain("impurity measure does not match task"));
    }
    let idx: Vec<u32> = (0..rows.n_rows() as u32)
        .filter(|&r| row_weight(weights, r) > 0)
        .collect();
    let parent = summarize(rows, Some(&idx), weights, task.n_classes());
    let count = config.features_per_node.resolve(d);
    let mut scratch = Vec::new();
    let candidates = sample_features(d, count, rng, &mut scratch);
    let mut scanner = SplitScanner::default();
    let mut found_constant = Vec::new();
    Ok(scanner.best_split(
        &ScanRequest {
            block: rows,
            idx: &idx,
            weights,
            parent: &parent,
            candidates: &candidates,
            measure: config.measure,
            lambda: config.lambda,
            min_leaf_weight: 1,
        },
        &mut found_constant,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, StreamKind};

    fn classes(counts: &[u64]) -> LabelSummary {
        LabelSummary::Classes(counts.to_vec())
    }

    #[test]
    fn gini_frozen_values() {
        assert_eq!(
            impurity(ImpurityMeasure::Gini, &classes(&[10, 0])).unwrap(),
            0.0
        );
        assert_eq!(
            impurity(ImpurityMeasure::Gini, &classes(&[5, 5])).unwrap(),
            0.5
        );
        // Direct formula: 1 - (1^2 + 2^2 + 3^2) / 6^2 = 22/36.
        let got = impurity(ImpurityMeasure::Gini, &classes(&[1, 2, 3])).unwrap();
        assert!((got - 22.0 / 36.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn entropy_frozen_value() {
        // -(1/4 log2 1/4 + 3/4 log2 3/4) = 0.8112781244591328 bits.
        let got = impurity(ImpurityMeasure::Entropy, &classes(&[1, 3])).unwrap();
        assert!((got - 0.8112781244591328).abs() < 1e-12, "{got}");
        // 0 log 0 = 0.
        assert_eq!(
            impurity(ImpurityMeasure::Entropy, &classes(&[4, 0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn variance_frozen_value() {
        // Labels {1, 2, 3}: population variance 2/3.
        let mut m = LabelSummary::Moments {
            weight: 0,
            sum: 0.0,
            sum_sq: 0.0,
        };
        for y in [1.0, 2.0, 3.0] {
            m.add_value(y, 1);
        }
        let got = impurity(ImpurityMeasure::Variance, &m).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn empty_summary_is_domain_error() {
        let err = impurity(ImpurityMeasure::Gini, &classes(&[0, 0]));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn gain_frozen_values() {
        let g = gain(
            &classes(&[5, 5]),
            &classes(&[5, 0]),
            &classes(&[0, 5]),
            ImpurityMeasure::Gini,
        )
        .unwrap();
        assert_eq!(g, 0.5);

        // Pure parent: all splits have zero gain.
        let g = gain(
            &classes(&[8, 0]),
            &classes(&[5, 0]),
            &classes(&[3, 0]),
            ImpurityMeasure::Gini,
        )
        .unwrap();
        assert_eq!(g, 0.0);

        // 0.5 - 0.5 * 0.375 - 0.5 * 0.375 = 0.125.
        let g = gain(
            &classes(&[4, 4]),
            &classes(&[3, 1]),
            &classes(&[1, 3]),
            ImpurityMeasure::Gini,
        )
        .unwrap();
        assert!((g - 0.125).abs() < 1e-15, "{g}");
    }

    #[test]
    fn gain_rejects_empty_side() {
        let err = gain(
            &classes(&[4, 0]),
            &classes(&[4, 0]),
            &classes(&[0, 0]),
            ImpurityMeasure::Gini,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn adapted_gain_endpoints() {
        let parent = classes(&[6, 4]);
        let left = classes(&[4, 0]);
        let right = classes(&[2, 4]);
        let g = gain(&parent, &left, &right, ImpurityMeasure::Gini).unwrap();
        let a0 = adapted_gain(&parent, &left, &right, ImpurityMeasure::Gini, 0.0).unwrap();
        assert_eq!(a0, g);

        // lambda = 1 with |L| = 4, |R| = 6, |S| = 10 is -0.2 regardless of labels.
        let parent = classes(&[7, 3]);
        let left = classes(&[1, 3]);
        let right = classes(&[6, 0]);
        let a1 = adapted_gain(&parent, &left, &right, ImpurityMeasure::Gini, 1.0).unwrap();
        assert_eq!(a1, -0.2);

        // Balanced split at lambda = 1 scores exactly zero.
        let parent = classes(&[4, 4]);
        let left = classes(&[3, 1]);
        let right = classes(&[1, 3]);
        let a1 = adapted_gain(&parent, &left, &right, ImpurityMeasure::Gini, 1.0).unwrap();
        assert_eq!(a1, 0.0);
    }

    #[test]
    fn adapted_gain_validates_lambda() {
        let parent = classes(&[2, 2]);
        let side = classes(&[1, 1]);
        let err = adapted_gain(&parent, &side, &side, ImpurityMeasure::Gini, 1.5);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    fn test_rng() -> rand_chacha::ChaCha8Rng {
        derive_rng(7, StreamKind::FlatTree, 0, 0, 0)
    }

    #[test]
    fn best_split_four_rows() {
        let rows = RowBlock::from_rows_class(&[(&[1.0], 0), (&[2.0], 0), (&[3.0], 1), (&[4.0], 1)]);
        let cfg = GainConfig::standard(ImpurityMeasure::Gini, FeatureSelect::All);
        let split = best_split(
            &rows,
            &[],
            Task::Classification { n_classes: 2 },
            &cfg,
            &mut test_rng(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.threshold, 2.5);
        assert_eq!(split.gain, 0.5);
        assert_eq!((split.left_weight, split.right_weight), (2, 2));
    }

    #[test]
    fn constant_rows_give_no_split() {
        let rows =
            RowBlock::from_rows_class(&[(&[3.0, 1.0], 0), (&[3.0, 1.0], 1), (&[3.0, 1.0], 0)]);
        let cfg = GainConfig::standard(ImpurityMeasure::Gini, FeatureSelect::All);
        let split = best_split(
            &rows,
            &[],
            Task::Classification { n_classes: 2 },
            &cfg,
            &mut test_rng(),
        )
        .unwrap();
        assert!(split.is_none());
    }

    #[test]
    fn lambda_one_picks_most_balanced_threshold() {
        // 10 distinct values; labels chosen so plain gain would prefer an
        // unbalanced 1|9 split, but lambda = 1 must pick the 5|5 midpoint.
        let rows = RowBlock::from_rows_class(&[
            (&[1.0], 1),
            (&[2.0], 0),
            (&[3.0], 0),
            (&[4.0], 0),
            (&[5.0], 0),
            (&[6.0], 0),
            (&[7.0], 0),
            (&[8.0], 0),
            (&[9.0], 0),
            (&[10.0], 0),
        ]);
        let cfg = GainConfig {
            lambda: 1.0,
            measure: ImpurityMeasure::Gini,
            features_per_node: FeatureSelect::All,
        };
        let split = best_split(
            &rows,
            &[],
            Task::Classification { n_classes: 2 },
            &cfg,
            &mut test_rng(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(split.threshold, 5.5);
        assert_eq!(split.gain, 0.0);
        assert_eq!((split.left_weight, split.right_weight), (5, 5));
    }

    #[test]
    fn weights_shift_the_threshold() {
        // Multiplicities act exactly like duplicated rows.
        let rows = RowBlock::from_rows_class(&[(&[1.0], 0), (&[2.0], 0), (&[3.0], 1)]);
        let dup = RowBlock::from_rows_class(&[
            (&[1.0], 0),
            (&[2.0], 0),
            (&[2.0], 0),
            (&[2.0], 0),
            (&[3.0], 1),
        ]);
        let cfg = GainConfig::standard(ImpurityMeasure::Gini, FeatureSelect::All);
        let task = Task::Classification { n_classes: 2 };
        let a = best_split(&rows, &[1, 3, 1], task, &cfg, &mut test_rng())
            .unwrap()
            .unwrap();
        let b = best_split(&dup, &[], task, &cfg, &mut test_rng())
            .unwrap()
            .unwrap();
        assert_eq!(a.threshold, b.threshold);
        assert_eq!(a.gain, b.gain);
        assert_eq!(a.left_weight, b.left_weight);
    }

    #[test]
    fn midpoint_never_reaches_the_upper_value() {
        let pairs = [
            (1.0f32, 2.0f32),
            (-1.0, 1.0),
            (1.0e30, 1.1e30),
            (f32::from_bits(0x3f800000), f32::from_bits(0x3f800001)), // adjacent
            (-0.0, 1.0),
        ];
        for (a, b) in pairs {
            let m = split_midpoint(a, b);
            assert!(m >= a && m < b, "midpoint({a}, {b}) = {m}");
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let rows = RowBlock::from_rows_class(&[
            (&[1.0], 0),
            (&[2.0], 1), // weight 0: must not influence the split
            (&[3.0], 0),
            (&[4.0], 1),
        ]);
        let cfg = GainConfig::standard(ImpurityMeasure::Gini, FeatureSelect::All);
        let split = best_split(
            &rows,
            &[1, 0, 1, 1],
            Task::Classification { n_classes: 2 },
            &cfg,
            &mut test_rng(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(split.threshold, 3.5);
    }
}
