//! Machine-readable training reports: JSON lines for single runs, CSV for
//! benchmark grids.

use canopy::forest::TrainStats;

#[derive(serde::Serialize)]
pub struct MetricsReport {
    pub scheme: String,
    pub n_train: u64,
    pub n_features: u32,
    pub n_classes: u32,
    pub total_trees: usize,
    pub n_top: usize,
    pub n_b: usize,
    pub lambda: f64,
    pub subset_size: u64,
    pub leaf_bucket_size: u64,
    pub chunk_size: usize,
    pub store: String,
    pub seed: u64,
    pub jobs: usize,
    pub phase_sample_top_secs: f64,
    pub phase_distribute_secs: f64,
    pub phase_bottom_secs: f64,
    pub total_secs: f64,
    pub peak_resident_rows: i64,
    pub peak_resident_rows_phase12: i64,
    pub peak_resident_rows_phase3: i64,
    pub max_bucket_rows: u64,
    pub n_buckets: usize,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
}

impl MetricsReport {
    pub fn from_stats(
        stats: &TrainStats,
        n_features: u32,
        n_classes: u32,
        chunk_size: usize,
        store: &str,
        jobs: usize,
        total_secs: f64,
    ) -> Self {
        MetricsReport {
            scheme: stats.scheme.name().to_string(),
            n_train: stats.n_rows,
            n_features,
            n_classes,
            total_trees: stats.total_trees,
            n_top: stats.n_top,
            n_b: stats.n_b,
            lambda: stats.lambda,
            subset_size: stats.subset_size,
            leaf_bucket_size: stats.leaf_bucket_size,
            chunk_size,
            store: store.to_string(),
            seed: 0,
            jobs,
            phase_sample_top_secs: stats.phase_sample_top_secs,
            phase_distribute_secs: stats.phase_distribute_secs,
            phase_bottom_secs: stats.phase_bottom_secs,
            total_secs,
            peak_resident_rows: stats.peak_resident_rows,
            peak_resident_rows_phase12: stats.peak_resident_rows_phase12,
            peak_resident_rows_phase3: stats.peak_resident_rows_phase3,
            max_bucket_rows: stats.max_bucket_rows,
            n_buckets: stats.n_buckets,
            accuracy: None,
            mse: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn csv_header() -> String {
        "scheme,n_train,n_features,n_classes,total_trees,n_top,n_b,lambda,subset_size,\
         leaf_bucket_size,chunk_size,store,seed,jobs,phase_sample_top_secs,\
         phase_distribute_secs,phase_bottom_secs,total_secs,peak_resident_rows,\
         peak_resident_rows_phase12,peak_resident_rows_phase3,max_bucket_rows,n_buckets,\
         accuracy,mse"
            .replace([' ', '\n'], "")
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.scheme,
            self.n_train,
            self.n_features,
            self.n_classes,
            self.total_trees,
            self.n_top,
            self.n_b,
            self.lambda,
            self.subset_size,
            self.leaf_bucket_size,
            self.chunk_size,
            self.store,
            self.seed,
            self.jobs,
            self.phase_sample_top_secs,
            self.phase_distribute_secs,
            self.phase_bottom_secs,
            self.total_secs,
            self.peak_resident_rows,
            self.peak_resident_rows_phase12,
            self.peak_resident_rows_phase3,
            self.max_bucket_rows,
            self.n_buckets,
            opt(self.accuracy),
            opt(self.mse),
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Fixed column set of the benchmark grid CSV.
pub const BENCH_HEADER: &str = "scheme,n_train,total_trees,n_top,n_b,lambda,subset_size,\
leaf_bucket_size,seed,sample_top_secs,distribute_secs,bottom_secs,total_secs,\
peak_resident_rows,max_bucket_rows,accuracy,error";

pub struct BenchRow {
    pub scheme: String,
    pub n_train: u64,
    pub seed: u64,
    pub stats: Option<TrainStats>,
    pub total_secs: f64,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn to_csv_row(&self) -> String {
        let error = self
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n'], ";");
        match &self.stats {
            Some(s) => format!(
                "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
                self.scheme,
                self.n_train,
                s.total_trees,
                s.n_top,
                s.n_b,
                s.lambda,
                s.subset_size,
                s.leaf_bucket_size,
                self.seed,
                s.phase_sample_top_secs,
                s.phase_distribute_secs,
                s.phase_bottom_secs,
                self.total_secs,
                s.peak_resident_rows,
                s.max_bucket_rows,
                opt(self.accuracy),
                error,
            ),
            None => format!(
                "{},{},,,,,,,{},,,,{:.6},,,{},{}",
                self.scheme,
                self.n_train,
                self.seed,
                self.total_secs,
                opt(self.accuracy),
                error,
            ),
        }
    }
}
