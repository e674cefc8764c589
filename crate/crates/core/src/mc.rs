//! Seeded, batch-parallel Monte Carlo engine.
//!
//! Samples are grouped in fixed-size batches; batch `b` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `b`, so the set of draws is a
//! function of `(seed, n_samples)` alone. Batch statistics are merged by a
//! pairwise tree in batch order, which makes the result independent of the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type McRng = ChaCha8Rng;

/// How batches are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Rayon data-parallel over batches (sequential when the `parallel`
    /// feature is off).
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub execution: Execution,
    pub batch_size: u64,
    /// Tail exponent `δ` of the radial proposals (`ρ^{-1-δ}` beyond the scale).
    pub delta_tail: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            execution: Execution::Parallel,
            batch_size: 4096,
            delta_tail: 1.0,
        }
    }
}

/// A Monte Carlo value with its sampling error and tail diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub acceptance: f64,
    pub seed: u64,
    /// Hill estimate of the weight tail index, when enough positive weights
    /// were seen.
    pub tail_index: Option<f64>,
    /// Set when the tail index suggests infinite variance (below 2).
    pub heavy_tail: bool,
}

impl McEstimate {
    pub fn zero(n_samples: u64, seed: u64) -> Self {
        Self {
            value: 0.0,
            std_error: 0.0,
            n_samples,
            acceptance: 0.0,
            seed,
            tail_index: None,
            heavy_tail: false,
        }
    }

    pub fn relative_error(&self) -> f64 {
        self.std_error / self.value.abs()
    }

    /// `self * c` for a deterministic factor `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.std_error *= c.abs();
        self
    }
}

/// `|a - b|` in units of the joint standard error.
pub fn joint_z(a: &McEstimate, b: &McEstimate) -> f64 {
    let se = a.std_error.hypot(b.std_error);
    if se == 0.0 {
        if a.value == b.value {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a.value - b.value).abs() / se
    }
}

const TOP_PER_BATCH: usize = 32;

#[derive(Debug, Clone, Default)]
struct Stats {
    n: u64,
    accepted: u64,
    mean: f64,
    m2: f64,
    top: Vec<f64>,
}

impl Stats {
    fn push(&mut self, x: f64, accepted: bool) {
        self.n += 1;
        if accepted {
            self.accepted += 1;
        }
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        let ax = x.abs();
        if ax > 0.0 {
            if self.top.len() < TOP_PER_BATCH {
                self.top.push(ax);
            } else if let Some((i, &min)) = self
                .top
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            {
                if ax > min {
                    self.top[i] = ax;
                }
            }
        }
    }

    fn merge(mut a: Stats, b: Stats) -> Stats {
        if b.n == 0 {
            return a;
        }
        if a.n == 0 {
            return b;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        let mean = a.mean + d * (b.n as f64 / n as f64);
        let m2 = a.m2 + b.m2 + d * d * (a.n as f64 * b.n as f64 / n as f64);
        a.top.extend(b.top);
        Stats {
            n,
            accepted: a.accepted + b.accepted,
            mean,
            m2,
            top: a.top,
        }
    }
}

fn merge_tree(mut v: Vec<Stats>) -> Stats {
    while v.len() > 1 {
        let mut next = Vec::with_capacity(v.len().div_ceil(2));
        let mut it = v.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(Stats::merge(a, b)),
                None => next.push(a),
            }
        }
        v = next;
    }
    v.pop().unwrap_or_default()
}

/// Hill estimator on the largest weights.
fn hill(mut top: Vec<f64>, n: u64) -> Option<f64> {
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((n as f64).sqrt() as usize).clamp(10, 1000).min(top.len().saturating_sub(1));
    if k < 10 {
        return None;
    }
    let xk = top[k];
    let s: f64 = top[..k].iter().map(|x| (x / xk).ln()).sum();
    if s > 0.0 {
        Some(k as f64 / s)
    } else {
        None
    }
}

/// One draw of the estimator: `Some(weight)` for an accepted sample,
/// `None` for a rejection (weight 0).
pub trait Draw: Sync {
    type State;
    fn state(&self) -> Self::State;
    fn draw(&self, state: &mut Self::State, rng: &mut McRng) -> Option<f64>;
}

fn run_batch<D: Draw>(d: &D, seed: u64, batch: u64, count: u64) -> Stats {
    let mut rng = McRng::seed_from_u64(seed);
    rng.set_stream(batch);
    let mut state = d.state();
    let mut s = Stats::default();
    for _ in 0..count {
        match d.draw(&mut state, &mut rng) {
            Some(x) => s.push(x, true),
            None => s.push(0.0, false),
        }
    }
    s
}

/// Maps `f` over `0..count` in index order under the chosen execution.
pub fn map_indexed<T, F>(count: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Runs `n_samples` draws of `d` and returns the sample mean of the weights.
pub fn estimate<D: Draw>(d: &D, n_samples: u64, seed: u64, opts: &McOptions) -> McEstimate {
    if n_samples == 0 {
        return McEstimate::zero(0, seed);
    }
    let bs = opts.batch_size.max(1);
    let batches = n_samples.div_ceil(bs);
    let stats = map_indexed(batches as usize, opts.execution, |b| {
        let b = b as u64;
        let count = bs.min(n_samples - b * bs);
        run_batch(d, seed, b, count)
    });
    let total = merge_tree(stats);
    let var = if total.n > 1 {
        total.m2 / (total.n - 1) as f64
    } else {
        0.0
    };
    let tail_index = hill(total.top, total.n);
    McEstimate {
        value: total.mean,
        std_error: (var / total.n as f64).sqrt(),
        n_samples: total.n,
        acceptance: total.accepted as f64 / total.n as f64,
        seed,
        tail_index,
        heavy_tail: tail_index.is_some_and(|a| a < 2.0),
    }
}

/// Seed for the `index`-th independent sub-run of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Caps the global rayon pool; a no-op without the `parallel` feature or
/// when the pool is already built.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
