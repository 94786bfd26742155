//! Synthetic dataset generators for benchmarks and property checks.
//!
//! All three generators are deterministic in `(kind, n_rows, seed)`: the
//! blob geometry is fixed per kind, only the row sampling follows the
//! seed. Generating a train and a test set is done with two seeds.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Labels, RowBlock, Task};
use crate::rng::{derive_rng, StreamKind};

/// Shape of the generated classification problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Two classes; 99.5% of mass in three broad blobs (class 0), 0.5% in
    /// one tight, spatially separated cluster (class 1).
    RareClass,
    /// Two classes; 99% of mass in one tight blob (class 0), 1% spread
    /// uniformly far around it (class 1). Produces strongly unbalanced
    /// trees under purity-driven splitting.
    Skewed,
    /// Five moderately overlapping Gaussian blobs in eight dimensions,
    /// one class each.
    GaussianMixture,
}

impl SynthKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rare-class" => Some(SynthKind::RareClass),
            "skewed" => Some(SynthKind::Skewed),
            "gaussian-mixture" => Some(SynthKind::GaussianMixture),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::RareClass => "rare-class",
            SynthKind::Skewed => "skewed",
            SynthKind::GaussianMixture => "gaussian-mixture",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            SynthKind::RareClass | SynthKind::Skewed => 2,
            SynthKind::GaussianMixture => 8,
        }
    }

    pub fn n_classes(&self) -> u32 {
        match self {
            SynthKind::RareClass | SynthKind::Skewed => 2,
            SynthKind::GaussianMixture => 5,
        }
    }
}

/// Index of the rare class produced by [`SynthKind::RareClass`].
pub const RARE_CLASS: u32 = 1;

/// Fraction of rare-class rows in [`SynthKind::RareClass`].
pub const RARE_FRACTION: f64 = 0.005;

const RARE_DOMINANT_CENTERS: [[f32; 2]; 3] = [[-2.0, -2.0], [2.0, -2.0], [0.0, 2.0]];
const RARE_CLUSTER_CENTER: [f32; 2] = [10.0, 10.0];

pub fn generate(kind: SynthKind, n_rows: u64, seed: u64) -> (RowBlock, Task) {
    let mut rng = derive_rng(seed, StreamKind::Synth, kind as u64, 0, 0);
    let d = kind.n_features();
    let mut features: Vec<f32> = Vec::with_capacity(n_rows as usize * d);
    let mut labels: Vec<u32> = Vec::with_capacity(n_rows as usize);
    let normal = StandardNormal;

    match kind {
        SynthKind::RareClass => {
            for _ in 0..n_rows {
                if rng.gen::<f64>() < RARE_FRACTION {
                    for c in RARE_CLUSTER_CENTER {
                        let z: f32 = normal.sample(&mut rng);
                        features.push(c + 0.25 * z);
                    }
                    labels.push(RARE_CLASS);
                } else {
                    let blob = RARE_DOMINANT_CENTERS[rng.gen_range(0..3)];
                    for c in blob {
                        let z: f32 = normal.sample(&mut rng);
                        features.push(c + 1.0 * z);
                    }
                    labels.push(0);
                }
            }
        }
        SynthKind::Skewed => {
            for _ in 0..n_rows {
                if rng.gen::<f64>() < 0.01 {
                    // Uniform over [-10, 10]^2 minus the central square the
                    // dominant blob occupies.
                    loop {
                        let x = rng.gen_range(-10.0f32..10.0);
                        let y = rng.gen_range(-10.0f32..10.0);
                        if x.abs() > 2.0 || y.abs() > 2.0 {
                            features.push(x);
                            features.push(y);
                            break;
                        }
                    }
                    labels.push(1);
                } else {
                    for _ in 0..2 {
                        let z: f32 = normal.sample(&mut rng);
                        features.push(0.4 * z);
                    }
                    labels.push(0);
                }
            }
        }
        SynthKind::GaussianMixture => {
            let centers = mixture_centers();
            for _ in 0..n_rows {
                let class = rng.gen_range(0..centers.len());
                for &c in &centers[class] {
                    let z: f32 = normal.sample(&mut rng);
                    features.push(c + 1.3 * z);
                }
                labels.push(class as u32);
            }
        }
    }

    let task = Task::Classification {
        n_classes: kind.n_classes(),
    };
    (
        RowBlock::from_parts(d, features, Labels::Class(labels)),
        task,
    )
}

/// Fixed centers for the 8-D mixture; drawn once from a geometry stream
/// that does not depend on the caller's seed.
fn mixture_centers() -> Vec<[f32; 8]> {
    const GEOMETRY_SEED: u64 = 0x637e;
    let mut rng = derive_rng(GEOMETRY_SEED, StreamKind::Synth, 99, 0, 0);
    let normal = StandardNormal;
    (0..5)
        .map(|_| {
            let mut c = [0f32; 8];
            for v in &mut c {
                let z: f32 = normal.sample(&mut rng);
                *v = 2.0 * z;
            }
            c
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        for kind in [
            SynthKind::RareClass,
            SynthKind::Skewed,
            SynthKind::GaussianMixture,
        ] {
            let (a, _) = generate(kind, 500, 7);
            let (b, _) = generate(kind, 500, 7);
            assert_eq!(a, b);
            let (c, _) = generate(kind, 500, 8);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rare_class_fraction_is_near_half_percent() {
        let (block, task) = generate(SynthKind::RareClass, 100_000, 3);
        assert_eq!(task.n_classes(), 2);
        let rare = (0..block.n_rows())
            .filter(|&i| block.labels().class(i) == RARE_CLASS)
            .count();
        let frac = rare as f64 / block.n_rows() as f64;
        assert!((frac - RARE_FRACTION).abs() < 0.002, "rare fraction {frac}");
    }

    #[test]
    fn skewed_dominant_mass_is_tight() {
        let (block, _) = generate(SynthKind::Skewed, 20_000, 5);
        let mut dominant_in_core = 0usize;
        let mut dominant = 0usize;
        for i in 0..block.n_rows() {
            if block.labels().class(i) == 0 {
                dominant += 1;
                let r = block.row(i);
                if r[0].abs() <= 2.0 && r[1].abs() <= 2.0 {
                    dominant_in_core += 1;
                }
            }
        }
        assert!(dominant as f64 >= 0.98 * block.n_rows() as f64);
        // The dominant blob lives almost entirely inside the core square
        // the sparse class avoids.
        assert!((dominant_in_core as f64) >= 0.999 * dominant as f64);
    }

    #[test]
    fn mixture_has_all_classes() {
        let (block, task) = generate(SynthKind::GaussianMixture, 5_000, 1);
        let k = task.n_classes();
        let mut seen = vec![0usize; k as usize];
        for i in 0..block.n_rows() {
            seen[block.labels().class(i) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 500), "{seen:?}");
    }
}
