//! Seeded experiment drivers, statistics and reports.

pub mod benchtop;
pub mod config;
pub mod numerical;
pub mod report;
pub mod stats;

pub use benchtop::run_benchtop_sim;
pub use config::{ExperimentConfig, ExperimentKind, SceneParams};
pub use numerical::run_numerical_analysis;
pub use report::Report;
pub use stats::{f_test_two_tailed, summarize};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Mixes `parts` into `base` with the SplitMix64 finalizer so that nearby
/// indices give unrelated streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = splitmix(z ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    splitmix(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Evaluates `f(0..n)` on `workers` threads and returns the results in index
/// order. Each call must depend only on its index.
pub(crate) fn run_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let go = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        None => go(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
    }
}
