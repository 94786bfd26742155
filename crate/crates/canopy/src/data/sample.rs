//! Single-pass uniform sampling without replacement (algorithm R).
//!
//! Several subsets can be drawn in the same pass, one reservoir per
//! subset, each fed from its own derived RNG stream. Peak residency is
//! the reservoirs plus the chunk currently streamed.

use rand::Rng;

use crate::data::{DatasetHandle, Labels, RowBlock, Task};
use crate::error::{Error, Result};
use crate::gauge::RowGuard;
use crate::rng::{derive_rng, StreamKind};

/// A materialized random subset of a dataset.
#[derive(Debug)]
pub struct RandomSubset {
    pub rows: RowBlock,
    /// The requested size R (the subset is smaller only when R > n).
    pub requested: u64,
    pub seed: u64,
    _guard: Option<RowGuard>,
}

struct Reservoir {
    rows: RowBlock,
    capacity: usize,
    seen: u64,
    rng: rand_chacha::ChaCha8Rng,
    guard: Option<RowGuard>,
}

impl Reservoir {
    fn new(handle: &DatasetHandle, capacity: usize, seed: u64, stream: u64) -> Self {
        let labels = match handle.task() {
            Task::Classification { .. } => Labels::Class(Vec::new()),
            Task::Regression => Labels::Value(Vec::new()),
        };
        let mut rows = RowBlock::new(handle.n_features() as usize, labels);
        rows.reserve(capacity.min(handle.n_rows() as usize));
        Reservoir {
            rows,
            capacity,
            seen: 0,
            rng: derive_rng(seed, StreamKind::Subset, stream, 0, 0),
            guard: handle.gauge().map(|g| g.acquire(0)),
        }
    }

    fn observe(&mut self, chunk: &RowBlock) {
        for i in 0..chunk.n_rows() {
            if (self.seen as usize) < self.capacity {
                self.rows.push_from(chunk, i);
                if let Some(g) = self.guard.as_mut() {
                    g.grow(1);
                }
            } else {
                let j = self.rng.gen_range(0..=self.seen);
                if (j as usize) < self.capacity {
                    self.rows.replace_from(j as usize, chunk, i);
                }
            }
            self.seen += 1;
        }
    }

    fn finish(self, requested: u64, seed: u64) -> RandomSubset {
        RandomSubset {
            rows: self.rows,
            requested,
            seed,
            _guard: self.guard,
        }
    }
}

/// Draw one uniform subset of `r` rows in a single streaming pass.
pub fn reservoir_sample(handle: &DatasetHandle, r: usize, seed: u64) -> Result<RandomSubset> {
    let mut subsets = reservoir_sample_many(handle, r, 1, seed)?;
    Ok(subsets.pop().unwrap())
}

/// Draw `count` independent uniform subsets of `r` rows each, sharing one
/// pass over the data. Subset `i` uses the RNG stream `(seed, Subset, i)`,
/// so `reservoir_sample_many(h, r, k, s)[0] == reservoir_sample(h, r, s)`.
pub fn reservoir_sample_many(
    handle: &DatasetHandle,
    r: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<RandomSubset>> {
    if r == 0 {
        return Err(Error::config("subset size R must be >= 1"));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut reservoirs: Vec<Reservoir> = (0..count)
        .map(|i| Reservoir::new(handle, r, seed, i as u64))
        .collect();
    for chunk in handle.chunks() {
        let chunk = chunk?;
        for reservoir in &mut reservoirs {
            reservoir.observe(&chunk.rows);
        }
    }
    Ok(reservoirs
        .into_iter()
        .map(|res| res.finish(r as u64, seed))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::gauge::RowGauge;

    fn toy_handle(n: usize, chunk: usize) -> DatasetHandle {
        let mut features = Vec::with_capacity(n);
        let labels = vec![0u32; n];
        for i in 0..n {
            features.push(i as f32);
        }
        let block = RowBlock::from_parts(1, features, Labels::Class(labels));
        DatasetHandle::from_block(block, Task::Classification { n_classes: 1 }, chunk).unwrap()
    }

    #[test]
    fn r_at_least_n_returns_all_rows() {
        let handle = toy_handle(10, 3);
        let subset = reservoir_sample(&handle, 25, 7).unwrap();
        assert_eq!(subset.rows.n_rows(), 10);
        let mut seen: Vec<f32> = (0..10).map(|i| subset.rows.feature(i, 0)).collect();
        seen.sort_by(f32::total_cmp);
        assert_eq!(seen, (0..10).map(|i| i as f32).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_subset() {
        let handle = toy_handle(1000, 64);
        let a = reservoir_sample(&handle, 50, 99).unwrap();
        let b = reservoir_sample(&handle, 50, 99).unwrap();
        assert_eq!(a.rows, b.rows);
        let c = reservoir_sample(&handle, 50, 100).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn subsets_have_no_duplicates() {
        let handle = toy_handle(500, 41);
        for seed in 0..5 {
            let subset = reservoir_sample(&handle, 100, seed).unwrap();
            assert_eq!(subset.rows.n_rows(), 100);
            let mut ids: Vec<i64> = (0..100).map(|i| subset.rows.feature(i, 0) as i64).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 100, "duplicate row in subset (seed {seed})");
        }
    }

    #[test]
    fn many_matches_single_for_stream_zero() {
        let handle = toy_handle(300, 50);
        let single = reservoir_sample(&handle, 40, 5).unwrap();
        let many = reservoir_sample_many(&handle, 40, 3, 5).unwrap();
        assert_eq!(single.rows, many[0].rows);
        assert_ne!(many[0].rows, many[1].rows);
    }

    #[test]
    fn residency_stays_within_r_plus_chunk() {
        let gauge = RowGauge::new();
        let handle = toy_handle(2000, 128).with_gauge(gauge.clone());
        let subset = reservoir_sample(&handle, 200, 3).unwrap();
        assert_eq!(subset.rows.n_rows(), 200);
        assert!(
            gauge.peak() <= 200 + 128,
            "peak {} exceeds R + C",
            gauge.peak()
        );
        drop(subset);
        assert_eq!(gauge.current(), 0);
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        // Monte-Carlo check: with n = 10_000, R = 100 and 2_000 repetitions
        // the per-row inclusion frequency is Binomial(2000, 0.01). Binomial
        // 3-sigma coverage is ~99.7%, so we require at least 99% of rows
        // inside 3 sigma and every row inside 5 sigma.
        let n = 10_000usize;
        let reps = 2000u32;
        let r = 100usize;
        let handle = toy_handle(n, 4096);
        let mut counts = vec![0u32; n];
        for rep in 0..reps {
            let subset = reservoir_sample(&handle, r, 1_000 + rep as u64).unwrap();
            for i in 0..subset.rows.n_rows() {
                counts[subset.rows.feature(i, 0) as usize] += 1;
            }
        }
        let p = r as f64 / n as f64;
        let sigma = (p * (1.0 - p) / reps as f64).sqrt();
        let mut outside3 = 0usize;
        for &c in &counts {
            let freq = c as f64 / reps as f64;
            let dev = (freq - p).abs();
            assert!(
                dev <= 5.0 * sigma,
                "row frequency {freq} deviates more than 5 sigma from {p}"
            );
            if dev > 3.0 * sigma {
                outside3 += 1;
            }
        }
        assert!(
            (outside3 as f64) < 0.01 * n as f64,
            "{outside3} rows outside 3 sigma"
        );
    }
}
