//! Trial-parallel Monte Carlo driver.
//!
//! Trials are cut into fixed batches of [`BATCH_SIZE`]. Each batch is folded
//! sequentially into its own accumulator and the batch accumulators are merged
//! in batch order, so the result is bit-identical whether batches run on one
//! thread, many threads, or with the `parallel` feature disabled.

use num_complex::Complex64;

use crate::rng::SeedSpec;

pub const BATCH_SIZE: u64 = 1024;

/// How batches are scheduled. `Parallel` uses the current rayon pool and
/// degrades to `Sequential` when the crate is built without `parallel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Trial budget, seed and scheduling for one Monte Carlo job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub trials: u64,
    pub seed: SeedSpec,
    pub execution: Execution,
}

impl MonteCarlo {
    pub fn new(trials: u64, seed: SeedSpec) -> Self {
        Self { trials, seed, execution: Execution::default() }
    }

    pub fn with_execution(self, execution: Execution) -> Self {
        Self { execution, ..self }
    }

    /// Same budget and scheduling, seed replaced by a labelled child seed.
    pub fn derive(&self, label: &str) -> Self {
        Self { seed: self.seed.derive(label), ..*self }
    }

    pub fn derive_index(&self, label: &str, index: u64) -> Self {
        Self { seed: self.seed.derive_index(label, index), ..*self }
    }
}

pub trait Accumulator: Default + Send {
    fn merge(&mut self, other: Self);
}

/// Fold `trial(index, acc)` over `0..trials` with deterministic batching.
pub fn fold_trials<A, F>(trials: u64, execution: Execution, trial: F) -> A
where
    A: Accumulator,
    F: Fn(u64, &mut A) + Sync,
{
    let batches = trials.div_ceil(BATCH_SIZE);
    let run_batch = |b: u64| {
        let mut acc = A::default();
        let end = ((b + 1) * BATCH_SIZE).min(trials);
        for i in b * BATCH_SIZE..end {
            trial(i, &mut acc);
        }
        acc
    };
    let parts: Vec<A> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..batches).into_par_iter().map(run_batch).collect()
        }
        _ => (0..batches).map(run_batch).collect(),
    };
    let mut total = A::default();
    for part in parts {
        total.merge(part);
    }
    total
}

/// Running mean and variance (Welford, Chan merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl Accumulator for Moments {
    fn merge(&mut self, other: Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }
}

/// Componentwise moments of a complex-valued statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexMoments {
    pub re: Moments,
    pub im: Moments,
}

impl ComplexMoments {
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    /// Standard error of the modulus of the mean's deviation:
    /// `sqrt(se_re^2 + se_im^2)`.
    pub fn std_error(&self) -> f64 {
        self.re.std_error().hypot(self.im.std_error())
    }
}

impl Accumulator for ComplexMoments {
    fn merge(&mut self, other: Self) {
        self.re.merge(other.re);
        self.im.merge(other.im);
    }
}

/// Integer event counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts(pub Vec<u64>);

impl Counts {
    pub fn bump(&mut self, index: usize) {
        if self.0.len() <= index {
            self.0.resize(index + 1, 0);
        }
        self.0[index] += 1;
    }
}

impl Accumulator for Counts {
    fn merge(&mut self, other: Self) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), 0);
        }
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Accumulator + Clone> Accumulator for Vec<A> {
    fn merge(&mut self, other: Self) {
        if self.len() < other.len() {
            self.resize(other.len(), A::default());
        }
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}
