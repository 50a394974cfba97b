//! Seeded multinomial and Poissonized histogram sampling.
//!
//! Every sampler is driven by a [`ChaCha8Rng`] seeded from a 64-bit value, so
//! a fixed seed gives bit-identical histograms on every platform.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use super::DiscreteDistribution;
use crate::{Error, Result};

/// Bin counts from one sample, together with the sample size the estimators
/// should normalize by.
///
/// `nominal_size` equals `total` for a fixed-size (multinomial) sample and is
/// the Poisson mean for a Poissonized one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleHistogram {
    counts: Vec<u64>,
    total: u64,
    nominal_size: u64,
}

impl SampleHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total = checked_total(&counts)?;
        Ok(Self {
            counts,
            total,
            nominal_size: total,
        })
    }

    pub fn with_nominal_size(counts: Vec<u64>, nominal_size: u64) -> Result<Self> {
        let total = checked_total(&counts)?;
        Ok(Self {
            counts,
            total,
            nominal_size,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn nominal_size(&self) -> u64 {
        self.nominal_size
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    /// Extends the alphabet with empty bins up to `k`.
    pub fn padded(&self, k: usize) -> Result<Self> {
        if k < self.counts.len() {
            return Err(Error::invalid(format!(
                "histogram has {} bins, cannot shrink to {k}",
                self.counts.len()
            )));
        }
        let mut counts = self.counts.clone();
        counts.resize(k, 0);
        Ok(Self {
            counts,
            total: self.total,
            nominal_size: self.nominal_size,
        })
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.counts.len() {
            return Err(Error::invalid(
                "permutation length differs from alphabet size",
            ));
        }
        Ok(Self {
            counts: perm.iter().map(|&j| self.counts[j]).collect(),
            total: self.total,
            nominal_size: self.nominal_size,
        })
    }
}

fn checked_total(counts: &[u64]) -> Result<u64> {
    if counts.is_empty() {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .ok_or_else(|| Error::invalid("histogram total overflows u64"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitMode {
    /// One fixed-size sample used both for branch selection and estimation.
    MultinomialReuse,
    /// Two independent Poissonized samples: one selects, one estimates.
    PoissonizedSplit,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial-reuse" | "reuse" => Ok(SplitMode::MultinomialReuse),
            "poissonized-split" | "split" => Ok(SplitMode::PoissonizedSplit),
            other => Err(Error::invalid(format!("unknown split mode `{other}`"))),
        }
    }
}

/// The estimation histogram and the selection histogram of one side.
#[derive(Debug, Clone)]
pub struct SplitSamples {
    first: Arc<SampleHistogram>,
    second: Arc<SampleHistogram>,
    mode: SplitMode,
}

impl SplitSamples {
    pub fn reuse(hist: SampleHistogram) -> Self {
        let shared = Arc::new(hist);
        Self {
            first: Arc::clone(&shared),
            second: shared,
            mode: SplitMode::MultinomialReuse,
        }
    }

    pub fn split(first: SampleHistogram, second: SampleHistogram) -> Result<Self> {
        if first.alphabet_size() != second.alphabet_size() {
            return Err(Error::invalid("split histograms have different alphabets"));
        }
        Ok(Self {
            first: Arc::new(first),
            second: Arc::new(second),
            mode: SplitMode::PoissonizedSplit,
        })
    }

    /// Histogram used for estimation.
    pub fn first(&self) -> &SampleHistogram {
        &self.first
    }

    /// Histogram used to choose between the polynomial and plug-in branches.
    pub fn second(&self) -> &SampleHistogram {
        &self.second
    }

    pub fn mode(&self) -> SplitMode {
        self.mode
    }

    pub fn shares_sample(&self) -> bool {
        Arc::ptr_eq(&self.first, &self.second)
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed: `h <- splitmix64(h ^ w)` starting
/// from `h = 0`, one round per word.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |h, &w| splitmix64(h ^ w))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multinomial(`sample_size`, `p`) counts.
pub fn sample_histogram(
    p: &DiscreteDistribution,
    sample_size: u64,
    rng_seed: u64,
) -> SampleHistogram {
    sample_histogram_with(p, sample_size, &mut rng_from_seed(rng_seed))
}

/// Multinomial draw by sequential conditional binomials: bin `i` receives
/// `Binomial(remaining, p_i / remaining_mass)`; the last bin with positive
/// mass takes whatever is left.
pub fn sample_histogram_with<R: rand::Rng + ?Sized>(
    p: &DiscreteDistribution,
    sample_size: u64,
    rng: &mut R,
) -> SampleHistogram {
    let probs = p.probs();
    let k = probs.len();
    // suffix[i] = sum of probs[i..]
    let mut suffix = vec![0.0f64; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + probs[i];
    }
    let mut counts = vec![0u64; k];
    let mut remaining = sample_size;
    for i in 0..k {
        if remaining == 0 {
            break;
        }
        let cond = if suffix[i + 1] == 0.0 {
            1.0
        } else {
            (probs[i] / suffix[i]).clamp(0.0, 1.0)
        };
        let draw = if cond == 0.0 {
            0
        } else if cond == 1.0 {
            remaining
        } else {
            Binomial::new(remaining, cond)
                .expect("conditional probability lies in (0, 1)")
                .sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
    }
    SampleHistogram {
        total: sample_size,
        nominal_size: sample_size,
        counts,
    }
}

/// Independent `Poisson(mean_size * p_i)` counts per bin.
pub fn sample_poissonized(
    p: &DiscreteDistribution,
    mean_size: u64,
    rng_seed: u64,
) -> SampleHistogram {
    sample_poissonized_with(p, mean_size, &mut rng_from_seed(rng_seed))
}

pub fn sample_poissonized_with<R: rand::Rng + ?Sized>(
    p: &DiscreteDistribution,
    mean_size: u64,
    rng: &mut R,
) -> SampleHistogram {
    let counts: Vec<u64> = p
        .probs()
        .iter()
        .map(|&pi| {
            let lambda = pi * mean_size as f64;
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .expect("positive finite Poisson mean")
                    .sample(rng) as u64
            } else {
                0
            }
        })
        .collect();
    SampleHistogram {
        total: counts.iter().sum(),
        nominal_size: mean_size,
        counts,
    }
}

/// Draws the estimation/selection histograms for one side.
///
/// Split mode uses seeds `mix_seed(&[seed, 0])` and `mix_seed(&[seed, 1])`
/// for the two Poissonized draws.
pub fn make_split(
    p: &DiscreteDistribution,
    mean_size: u64,
    mode: SplitMode,
    rng_seed: u64,
) -> SplitSamples {
    match mode {
        SplitMode::MultinomialReuse => {
            SplitSamples::reuse(sample_histogram(p, mean_size, rng_seed))
        }
        SplitMode::PoissonizedSplit => SplitSamples {
            first: Arc::new(sample_poissonized(p, mean_size, mix_seed(&[rng_seed, 0]))),
            second: Arc::new(sample_poissonized(p, mean_size, mix_seed(&[rng_seed, 1]))),
            mode,
        },
    }
}
