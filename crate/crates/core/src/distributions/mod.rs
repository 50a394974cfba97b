//! Discrete distributions, exact functionals, adversarial families and
//! seeded sampling.
//!
//! Divergences that are undefined because `P` is not absolutely continuous
//! with respect to `Q` are reported as `f64::INFINITY` rather than as an
//! error, so sweeps can record them.

mod families;
pub mod io;
mod sampling;

pub use families::{
    make_inconsistency_pair, make_twopoint_variance_m, make_twopoint_variance_n, make_uniform,
    make_worst_case_pair, make_worst_case_pair_bias_i, make_worst_case_pair_bias_ii,
    make_worst_case_pair_bias_ii_unchecked, make_zipf,
};
pub use sampling::{
    make_split, mix_seed, rng_from_seed, sample_histogram, sample_histogram_with,
    sample_poissonized, sample_poissonized_with, SampleHistogram, SplitMode, SplitSamples,
};

use crate::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Relative slack allowed when verifying `P_i <= f * Q_i`.
const RATIO_SLACK: f64 = 1e-12;

/// A probability vector over the alphabet `{0, .., k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates `probs` as given: non-empty, finite, non-negative, summing
    /// to one within [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution needs at least one bin"));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::invalid(format!("probability {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights by their computed sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::invalid("weights must have positive sum"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Applies `perm` so that bin `i` of the result is bin `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k() {
            return Err(Error::invalid("permutation length differs from k"));
        }
        Ok(Self {
            probs: perm.iter().map(|&j| self.probs[j]).collect(),
        })
    }
}

/// Two distributions on the same alphabet with no ratio constraint.
///
/// Used for constructions that deliberately escape every fixed ratio bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPair {
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
}

impl DistributionPair {
    pub fn new(p: DiscreteDistribution, q: DiscreteDistribution) -> Result<Self> {
        check_same_k(&p, &q)?;
        Ok(Self { p, q })
    }

    pub fn divergence(&self) -> f64 {
        kl_unchecked(&self.p, &self.q)
    }
}

/// A pair `(P, Q)` with `P_i <= f Q_i` for every bin, i.e. a member of the
/// class of pairs whose density ratio is bounded by `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedRatioPair {
    p: DiscreteDistribution,
    q: DiscreteDistribution,
    ratio_bound: f64,
}

impl BoundedRatioPair {
    pub fn new(p: DiscreteDistribution, q: DiscreteDistribution, ratio_bound: f64) -> Result<Self> {
        check_same_k(&p, &q)?;
        if !(ratio_bound >= 1.0) || !ratio_bound.is_finite() {
            return Err(Error::invalid(format!(
                "ratio bound must be a finite value >= 1, got {ratio_bound}"
            )));
        }
        for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
            if pi > ratio_bound * qi * (1.0 + RATIO_SLACK) {
                return Err(Error::invalid(format!(
                    "bin {i}: P = {pi} exceeds {ratio_bound} * Q = {}",
                    ratio_bound * qi
                )));
            }
        }
        Ok(Self { p, q, ratio_bound })
    }

    pub fn p(&self) -> &DiscreteDistribution {
        &self.p
    }

    pub fn q(&self) -> &DiscreteDistribution {
        &self.q
    }

    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    pub fn k(&self) -> usize {
        self.p.k()
    }

    pub fn divergence(&self) -> f64 {
        kl_unchecked(&self.p, &self.q)
    }

    pub fn into_pair(self) -> DistributionPair {
        DistributionPair {
            p: self.p,
            q: self.q,
        }
    }
}

fn check_same_k(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.k() != q.k() {
        return Err(Error::invalid(format!(
            "alphabet sizes differ: {} vs {}",
            p.k(),
            q.k()
        )));
    }
    Ok(())
}

/// `sum_i P_i ln(P_i / Q_i)` with `0 ln 0 = 0`; infinite when some
/// `P_i > 0 = Q_i`.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_same_k(p, q)?;
    Ok(kl_unchecked(p, q))
}

fn kl_unchecked(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total
}

/// Shannon entropy `-sum_i P_i ln P_i`.
pub fn entropy(p: &DiscreteDistribution) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.ln())
        .sum::<f64>()
}

/// `max_{i: P_i > 0} P_i / Q_i`; infinite when some `P_i > 0 = Q_i`.
pub fn density_ratio_max(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_same_k(p, q)?;
    let mut best: f64 = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        best = best.max(pi / qi);
    }
    Ok(best)
}
