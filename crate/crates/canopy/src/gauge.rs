//! Resident-row accounting.
//!
//! Training keeps a running count of materialized training rows (chunks,
//! reservoirs, bucket buffers, loaded buckets) so the memory contract of
//! the streaming passes can be asserted rather than assumed. Counting is
//! in rows, not bytes: the contract is expressed in rows and a row's byte
//! size is constant per dataset.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

/// Shared counter of currently resident rows with a high-water mark.
#[derive(Debug, Default)]
pub struct RowGauge {
    current: AtomicI64,
    peak: AtomicI64,
}

impl RowGauge {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Mark `n` rows resident; the returned guard releases them on drop.
    pub fn acquire(self: &Arc<Self>, n: usize) -> RowGuard {
        self.add(n as i64);
        RowGuard {
            gauge: Arc::clone(self),
            rows: n as i64,
        }
    }

    fn add(&self, n: i64) {
        let cur = self.current.fetch_add(n, Ordering::Relaxed) + n;
        self.peak.fetch_max(cur, Ordering::Relaxed);
    }

    pub fn current(&self) -> i64 {
        self.current.load(Ordering::Relaxed)
    }

    /// High-water mark since construction or the last `reset_peak`.
    pub fn peak(&self) -> i64 {
        self.peak.load(Ordering::Relaxed)
    }

    /// Start a new measurement window: the peak becomes the current level.
    pub fn reset_peak(&self) {
        self.peak.store(self.current(), Ordering::Relaxed);
    }
}

/// RAII lease on a number of resident rows.
#[derive(Debug)]
pub struct RowGuard {
    gauge: Arc<RowGauge>,
    rows: i64,
}

impl RowGuard {
    /// Account for `n` additional rows under this guard.
    pub fn grow(&mut self, n: usize) {
        self.gauge.add(n as i64);
        self.rows += n as i64;
    }

    pub fn rows(&self) -> i64 {
        self.rows
    }
}

impl Drop for RowGuard {
    fn drop(&mut self) {
        self.gauge.add(-self.rows);
    }
}
