//! Deterministic reductions and seeded substreams for Monte Carlo work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Mean of a Monte Carlo estimator together with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Pairwise summation. The split points depend only on the length, so the
/// result is reproducible regardless of how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return Estimate { mean, stderr: 0.0 };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    Estimate { mean, stderr: (var / n as f64).sqrt() }
}

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const BATCH: usize = 256;

/// Runs `job(rng, first_sample, count)` over fixed-size batches, each with
/// its own substream, and concatenates the outputs in batch order. The
/// output is independent of the thread count.
pub fn batched<T, F>(samples: usize, seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize, usize) -> Vec<T> + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let parts: Vec<Vec<T>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let count = BATCH.min(samples - start);
            let mut rng = substream(seed, b as u64);
            job(&mut rng, start, count)
        })
        .collect();
    parts.into_iter().flatten().collect()
}
