//! Exact moments of the estimators on small instances, and the risk-rate
//! expressions with their hidden constants exposed as multipliers.
//!
//! Moments are computed by enumerating sample outcomes:
//!
//! - multinomial sampling enumerates compositions of `m` (and `n`) into `k`
//!   parts;
//! - Poissonized sampling truncates each bin's Poisson law once the upper
//!   tail mass drops below a threshold (`1e-14` by default).
//!
//! Estimators that are a sum of per-bin terms (the augmented plug-in and the
//! optimal estimator) only need the composition of `m` plus marginal and
//! pairwise laws of `N`, which keeps them exact on instances where the full
//! joint enumeration would be far too large.

use crate::approx::FactorialCoeffs;
use crate::distributions::{BoundedRatioPair, SampleHistogram, SplitMode};
use crate::estimators::{
    aplugin_kl, plugin_entropy, plugin_kl, EstimatorConfig, Method, OptimalEstimator,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    AugmentedPlugin,
    Minimax,
}

/// Multipliers for the three terms of a risk rate; all default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub bias: f64,
    pub variance_m: f64,
    pub variance_n: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        Self {
            bias: 1.0,
            variance_m: 1.0,
            variance_n: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRate {
    pub bias_sq_term: f64,
    pub variance_m_term: f64,
    pub variance_n_term: f64,
    pub total: f64,
    pub kind: RateKind,
}

fn check_rate_inputs(k: usize, m: f64, n: f64, f: f64) -> Result<()> {
    if k == 0 || !(m > 0.0) || !(n > 0.0) || !(f > 0.0) {
        return Err(Error::invalid(
            "rate inputs k, m, n, f must all be positive",
        ));
    }
    Ok(())
}

fn assemble(bias: f64, f: f64, m: f64, n: f64, c: &RateConstants, kind: RateKind) -> RiskRate {
    let bias_sq_term = c.bias * bias * bias;
    let variance_m_term = c.variance_m * f.ln().powi(2) / m;
    let variance_n_term = c.variance_n * f / n;
    RiskRate {
        bias_sq_term,
        variance_m_term,
        variance_n_term,
        total: bias_sq_term + variance_m_term + variance_n_term,
        kind,
    }
}

/// `(k f / n + k / m)^2 + ln^2 f / m + f / n`.
pub fn rate_aplugin(k: usize, m: f64, n: f64, f: f64) -> Result<RiskRate> {
    rate_aplugin_with(k, m, n, f, &RateConstants::default())
}

pub fn rate_aplugin_with(k: usize, m: f64, n: f64, f: f64, c: &RateConstants) -> Result<RiskRate> {
    check_rate_inputs(k, m, n, f)?;
    let k = k as f64;
    Ok(assemble(
        k * f / n + k / m,
        f,
        m,
        n,
        c,
        RateKind::AugmentedPlugin,
    ))
}

/// `(k / (m ln k) + k f / (n ln k))^2 + ln^2 f / m + f / n`.
pub fn rate_minimax(k: usize, m: f64, n: f64, f: f64) -> Result<RiskRate> {
    rate_minimax_with(k, m, n, f, &RateConstants::default())
}

pub fn rate_minimax_with(k: usize, m: f64, n: f64, f: f64, c: &RateConstants) -> Result<RiskRate> {
    check_rate_inputs(k, m, n, f)?;
    if k < 2 {
        return Err(Error::invalid("the minimax rate needs k >= 2"));
    }
    let kf = k as f64;
    let ln_k = kf.ln();
    Ok(assemble(
        (kf / m + kf * f / n) / ln_k,
        f,
        m,
        n,
        c,
        RateKind::Minimax,
    ))
}

/// Exact (up to truncation) first two moments of an estimator.
///
/// Outcomes on which the estimator is infinite or undefined (an empty
/// sample under Poissonization) are removed; their total probability is
/// `excluded_probability` and the moments are conditional on the remaining
/// event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    pub expectation: f64,
    pub second_moment: f64,
    pub truncation_mass_dropped: f64,
    pub excluded_probability: f64,
}

impl ExactMoments {
    pub fn variance(&self) -> f64 {
        (self.second_moment - self.expectation * self.expectation).max(0.0)
    }

    pub fn bias(&self, truth: f64) -> f64 {
        self.expectation - truth
    }

    pub fn mse(&self, truth: f64) -> f64 {
        self.second_moment - 2.0 * truth * self.expectation + truth * truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleEstimator {
    Plugin,
    AugmentedPlugin,
    Optimal,
    /// Always returns the given value.
    Constant(f64),
}

impl From<Method> for OracleEstimator {
    fn from(m: Method) -> Self {
        match m {
            Method::Plugin => OracleEstimator::Plugin,
            Method::AugmentedPlugin => OracleEstimator::AugmentedPlugin,
            Method::Optimal => OracleEstimator::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Multinomial,
    Poissonized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Upper-tail mass below which a Poisson law is truncated.
    pub tail: f64,
    /// Feasibility guard on the number of enumerated outcomes.
    pub max_outcomes: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tail: 1e-14,
            max_outcomes: 1e7,
        }
    }
}

pub fn exact_estimator_moments(
    pair: &BoundedRatioPair,
    m: u64,
    n: u64,
    estimator: OracleEstimator,
    config: &EstimatorConfig,
    sampling: Sampling,
) -> Result<ExactMoments> {
    exact_estimator_moments_with(
        pair,
        m,
        n,
        estimator,
        config,
        sampling,
        &OracleOptions::default(),
    )
}

pub fn exact_estimator_moments_with(
    pair: &BoundedRatioPair,
    m: u64,
    n: u64,
    estimator: OracleEstimator,
    config: &EstimatorConfig,
    sampling: Sampling,
    options: &OracleOptions,
) -> Result<ExactMoments> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    if !(options.tail > 0.0 && options.tail < 1e-6) {
        return Err(Error::invalid("truncation tail must lie in (0, 1e-6)"));
    }
    config.validate()?;
    let p = pair.p().probs();
    let q = pair.q().probs();
    match (estimator, sampling) {
        (OracleEstimator::Constant(v), _) => Ok(ExactMoments {
            expectation: v,
            second_moment: v * v,
            truncation_mass_dropped: 0.0,
            excluded_probability: 0.0,
        }),
        (OracleEstimator::Plugin, Sampling::Multinomial) => {
            let ms = multinomial_outcomes(p, m, options)?;
            let ns = multinomial_outcomes(q, n, options)?;
            joint_moments(&ms, &ns, 0.0, options, plugin_kl)
        }
        (OracleEstimator::AugmentedPlugin, Sampling::Multinomial) => {
            let c = config.add_constant;
            let denom = n as f64 + p.len() as f64 * c;
            let h: Vec<f64> = (0..=n).map(|v| ((v as f64 + c) / denom).ln()).collect();
            separable_multinomial(p, q, m, n, &h, options, |hist| Ok(-plugin_entropy(hist)?))
        }
        (OracleEstimator::Optimal, Sampling::Multinomial) => {
            if config.split_mode != SplitMode::MultinomialReuse {
                return Err(Error::invalid(
                    "split selection histograms need Poissonized sampling",
                ));
            }
            let est = OptimalEstimator::new(p.len(), m, n, config)?;
            let h = (0..=n)
                .map(|v| est.cross_factor(v, v).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            separable_multinomial(p, q, m, n, &h, options, |hist| {
                hist.counts()
                    .iter()
                    .map(|&c| est.entropy_term(c, c).map(|r| r.0))
                    .sum()
            })
        }
        (OracleEstimator::Plugin | OracleEstimator::AugmentedPlugin, Sampling::Poissonized) => {
            let (ms, dm) = poisson_outcomes(p, m, options)?;
            let (ns, dn) = poisson_outcomes(q, n, options)?;
            let dropped = dm + dn;
            if estimator == OracleEstimator::Plugin {
                joint_moments(&ms, &ns, dropped, options, plugin_kl)
            } else {
                joint_moments(&ms, &ns, dropped, options, |a, b| aplugin_kl(a, b, config))
            }
        }
        (OracleEstimator::Optimal, Sampling::Poissonized) => {
            poissonized_optimal(p, q, m, n, config, options)
        }
    }
}

/// `sum_N Poi(nq)(N) g(N)`.
///
/// The Poisson law is cut where its upper tail drops below `1e-30` rather
/// than `1e-14`: `g` grows like `N^(L-1)`, so a `1e-14` tail can still carry
/// mass times `g` well above `1e-8` for moderate `L` and `nq`.
pub fn exact_gl_expectation(fc: &FactorialCoeffs, q: f64, n: u64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1], got {q}")));
    }
    let lambda = n as f64 * q;
    if lambda > 1e4 {
        return Err(Error::invalid(format!("n q = {lambda} exceeds 1e4")));
    }
    let law = poisson_truncated(lambda, 1e-30);
    let mut acc = Compensated::default();
    for (count, &w) in law.pmf.iter().enumerate() {
        if w > 0.0 {
            acc.add(w * fc.eval(count as u64)?);
        }
    }
    Ok(acc.value())
}

#[derive(Debug, Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn ln_factorials(max: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(max as usize + 1);
    let mut acc = 0.0f64;
    table.push(0.0);
    for i in 1..=max {
        acc += (i as f64).ln();
        table.push(acc);
    }
    table
}

/// `count * ln(p)` with `0 * ln 0 = 0`.
fn count_ln(count: u64, ln_p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * ln_p
    }
}

fn binomial_coefficient(n: f64, r: usize) -> f64 {
    (1..=r).fold(1.0, |acc, i| acc * (n - r as f64 + i as f64) / i as f64)
}

fn too_large(outcomes: f64, options: &OracleOptions) -> Result<()> {
    if outcomes > options.max_outcomes {
        return Err(Error::TooLarge {
            outcomes,
            limit: options.max_outcomes,
        });
    }
    Ok(())
}

/// Calls `visit(counts, probability)` for every composition of `total` into
/// `probs.len()` parts with positive probability, in stars-and-bars order.
fn for_each_composition(
    probs: &[f64],
    total: u64,
    mut visit: impl FnMut(&[u64], f64) -> Result<()>,
) -> Result<()> {
    let lnf = ln_factorials(total);
    let ln_p: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut counts = vec![0u64; probs.len()];

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        i: usize,
        remaining: u64,
        log_prob: f64,
        counts: &mut [u64],
        ln_p: &[f64],
        lnf: &[f64],
        visit: &mut dyn FnMut(&[u64], f64) -> Result<()>,
    ) -> Result<()> {
        let last = counts.len() - 1;
        if i == last {
            let term = count_ln(remaining, ln_p[i]);
            if term == f64::NEG_INFINITY {
                return Ok(());
            }
            counts[i] = remaining;
            let lp = log_prob + term - lnf[remaining as usize];
            return visit(counts, lp.exp());
        }
        for c in 0..=remaining {
            let term = count_ln(c, ln_p[i]);
            if term == f64::NEG_INFINITY {
                break;
            }
            counts[i] = c;
            recurse(
                i + 1,
                remaining - c,
                log_prob + term - lnf[c as usize],
                counts,
                ln_p,
                lnf,
                visit,
            )?;
        }
        counts[i] = 0;
        Ok(())
    }

    recurse(
        0,
        total,
        lnf[total as usize],
        &mut counts,
        &ln_p,
        &lnf,
        &mut visit,
    )
}

fn multinomial_outcomes(
    probs: &[f64],
    total: u64,
    options: &OracleOptions,
) -> Result<Vec<(SampleHistogram, f64)>> {
    let k = probs.len();
    too_large(
        binomial_coefficient((total as usize + k - 1) as f64, k - 1),
        options,
    )?;
    let mut out = Vec::new();
    for_each_composition(probs, total, |counts, w| {
        out.push((SampleHistogram::from_counts(counts.to_vec())?, w));
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone)]
struct TruncatedPoisson {
    pmf: Vec<f64>,
    dropped: f64,
}

/// Poisson(`lambda`) probabilities on `0..=K`, where `K >= lambda` is the
/// first point with `P(X > K) <= pmf(K+1) / (1 - lambda/(K+2)) < tail`.
///
/// Weights come from the ratio recurrence outward from the mode and are
/// normalized over the support, which avoids the cancellation in
/// `-lambda + x ln lambda - ln x!` for large `lambda`.
fn poisson_truncated(lambda: f64, tail: f64) -> TruncatedPoisson {
    if lambda == 0.0 {
        return TruncatedPoisson {
            pmf: vec![1.0],
            dropped: 0.0,
        };
    }
    let mode = lambda.floor() as usize;
    let mut w = vec![0.0f64; mode + 1];
    w[mode] = 1.0;
    for x in (1..=mode).rev() {
        w[x - 1] = w[x] * x as f64 / lambda;
    }
    let mut sum: f64 = w.iter().sum();
    let mut x = mode;
    loop {
        let next = w[x] * lambda / (x + 1) as f64;
        if x as f64 >= lambda {
            let bound = next / (1.0 - lambda / (x as f64 + 2.0)) / sum;
            if bound < tail {
                let pmf = w.iter().map(|v| v / sum).collect();
                return TruncatedPoisson {
                    pmf,
                    dropped: bound,
                };
            }
        }
        w.push(next);
        sum += next;
        x += 1;
    }
}

/// Cartesian product of per-bin truncated Poisson laws.
fn poisson_outcomes(
    probs: &[f64],
    mean: u64,
    options: &OracleOptions,
) -> Result<(Vec<(SampleHistogram, f64)>, f64)> {
    let laws: Vec<TruncatedPoisson> = probs
        .iter()
        .map(|&p| poisson_truncated(p * mean as f64, options.tail))
        .collect();
    too_large(laws.iter().map(|l| l.pmf.len() as f64).product(), options)?;
    let dropped = laws.iter().map(|l| l.dropped).sum();
    let mut out = vec![(Vec::new(), 1.0f64)];
    for law in &laws {
        let mut next = Vec::with_capacity(out.len() * law.pmf.len());
        for (counts, w) in &out {
            for (c, &pc) in law.pmf.iter().enumerate() {
                let mut v: Vec<u64> = counts.clone();
                v.push(c as u64);
                next.push((v, w * pc));
            }
        }
        out = next;
    }
    let hists = out
        .into_iter()
        .map(|(counts, w)| Ok((SampleHistogram::with_nominal_size(counts, mean)?, w)))
        .collect::<Result<Vec<_>>>()?;
    Ok((hists, dropped))
}

#[derive(Debug, Default)]
struct MomentAccumulator {
    finite_mass: Compensated,
    excluded_mass: Compensated,
    s1: Compensated,
    s2: Compensated,
}

impl MomentAccumulator {
    fn add(&mut self, w: f64, value: Option<f64>) {
        match value {
            Some(v) if v.is_finite() => {
                self.finite_mass.add(w);
                self.s1.add(w * v);
                self.s2.add(w * v * v);
            }
            _ => self.excluded_mass.add(w),
        }
    }

    fn finish(&self, dropped: f64) -> ExactMoments {
        let mass = self.finite_mass.value();
        let (expectation, second_moment) = if mass > 0.0 {
            (self.s1.value() / mass, self.s2.value() / mass)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        ExactMoments {
            expectation,
            second_moment,
            truncation_mass_dropped: dropped,
            excluded_probability: self.excluded_mass.value(),
        }
    }
}

fn joint_moments(
    ms: &[(SampleHistogram, f64)],
    ns: &[(SampleHistogram, f64)],
    dropped: f64,
    options: &OracleOptions,
    eval: impl Fn(&SampleHistogram, &SampleHistogram) -> Result<f64>,
) -> Result<ExactMoments> {
    too_large(ms.len() as f64 * ns.len() as f64, options)?;
    let mut acc = MomentAccumulator::default();
    for (mh, wm) in ms {
        for (nh, wn) in ns {
            let w = wm * wn;
            if w == 0.0 {
                continue;
            }
            // empty Poissonized samples have no estimate: counted as excluded
            let value = if mh.total() == 0 || nh.total() == 0 {
                None
            } else {
                Some(eval(mh, nh)?)
            };
            acc.add(w, value);
        }
    }
    Ok(acc.finish(dropped))
}

/// Moments of `X(M) - sum_i (M_i / m) h(N_i)` under multinomial sampling,
/// where `h` is tabulated on `0..=n`.
fn separable_multinomial(
    p: &[f64],
    q: &[f64],
    m: u64,
    n: u64,
    h: &[f64],
    options: &OracleOptions,
    x_of: impl Fn(&SampleHistogram) -> Result<f64>,
) -> Result<ExactMoments> {
    let k = p.len();
    too_large(
        binomial_coefficient((m as usize + k - 1) as f64, k - 1),
        options,
    )?;
    let pairs = (k * (k - 1) / 2) as f64 * ((n + 1) * (n + 2) / 2) as f64;
    too_large(pairs / 100.0, options)?;

    let mf = m as f64;
    // M side: E[X], E[X^2], E[X W_i] by enumeration; E[W_i W_j] in closed form
    let mut ex = Compensated::default();
    let mut ex2 = Compensated::default();
    let mut exw = vec![Compensated::default(); k];
    for_each_composition(p, m, |counts, w| {
        let hist = SampleHistogram::from_counts(counts.to_vec())?;
        let x = x_of(&hist)?;
        ex.add(w * x);
        ex2.add(w * x * x);
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                exw[i].add(w * x * c as f64 / mf);
            }
        }
        Ok(())
    })?;
    let eww = |i: usize, j: usize| -> f64 {
        if i == j {
            (mf * p[i] * (1.0 - p[i]) + mf * mf * p[i] * p[i]) / (mf * mf)
        } else {
            (mf - 1.0) * p[i] * p[j] / mf
        }
    };

    // N side: marginal and pairwise laws of the counts
    let lnf = ln_factorials(n);
    let ln_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut eh = vec![0.0f64; k];
    let mut ehh = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        let ln_rest = (1.0 - q[i]).max(0.0).ln();
        let (mut s1, mut s2) = (Compensated::default(), Compensated::default());
        for a in 0..=n {
            let lw = lnf[n as usize] - lnf[a as usize] - lnf[(n - a) as usize]
                + count_ln(a, ln_q[i])
                + count_ln(n - a, ln_rest);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let w = lw.exp();
            s1.add(w * h[a as usize]);
            s2.add(w * h[a as usize] * h[a as usize]);
        }
        eh[i] = s1.value();
        ehh[i][i] = s2.value();
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let ln_rest = (1.0 - q[i] - q[j]).max(0.0).ln();
            let mut s = Compensated::default();
            for a in 0..=n {
                let la = count_ln(a, ln_q[i]);
                if la == f64::NEG_INFINITY {
                    break;
                }
                for b in 0..=(n - a) {
                    let lb = count_ln(b, ln_q[j]);
                    if lb == f64::NEG_INFINITY {
                        break;
                    }
                    let rest = n - a - b;
                    let lw =
                        lnf[n as usize] - lnf[a as usize] - lnf[b as usize] - lnf[rest as usize]
                            + la
                            + lb
                            + count_ln(rest, ln_rest);
                    if lw == f64::NEG_INFINITY {
                        continue;
                    }
                    s.add(lw.exp() * h[a as usize] * h[b as usize]);
                }
            }
            ehh[i][j] = s.value();
            ehh[j][i] = ehh[i][j];
        }
    }

    let mut first = Compensated::default();
    first.add(ex.value());
    let mut second = Compensated::default();
    second.add(ex2.value());
    for i in 0..k {
        first.add(-p[i] * eh[i]);
        second.add(-2.0 * exw[i].value() * eh[i]);
        for (j, h) in ehh[i].iter().enumerate() {
            second.add(eww(i, j) * h);
        }
    }
    Ok(ExactMoments {
        expectation: first.value(),
        second_moment: second.value(),
        truncation_mass_dropped: 0.0,
        excluded_probability: 0.0,
    })
}

/// Bins are independent under Poissonization, so the moments of
/// `sum_i t_i` follow from per-bin moments of
/// `t_i = e(M_i, M'_i) - (M_i / m) h(N_i, N'_i)`.
fn poissonized_optimal(
    p: &[f64],
    q: &[f64],
    m: u64,
    n: u64,
    config: &EstimatorConfig,
    options: &OracleOptions,
) -> Result<ExactMoments> {
    let est = OptimalEstimator::new(p.len(), m, n, config)?;
    let split = config.split_mode == SplitMode::PoissonizedSplit;
    let mf = m as f64;
    let mut mean = Compensated::default();
    let mut var = Compensated::default();
    let mut dropped = 0.0;

    for (&pi, &qi) in p.iter().zip(q) {
        let lm = poisson_truncated(pi * mf, options.tail);
        let ln = poisson_truncated(qi * n as f64, options.tail);
        dropped += if split {
            2.0 * (lm.dropped + ln.dropped)
        } else {
            lm.dropped + ln.dropped
        };
        let work = if split {
            (lm.pmf.len().pow(2) + ln.pmf.len().pow(2)) as f64
        } else {
            (lm.pmf.len() + ln.pmf.len()) as f64
        };
        too_large(work, options)?;

        // (E[e], E[e^2], E[e w], E[w], E[w^2]) with w = M / m
        let mut side_m = [Compensated::default(); 5];
        for (a, &wa) in lm.pmf.iter().enumerate() {
            let w_count = a as f64 / mf;
            let mut visit = |sel: u64, weight: f64| -> Result<()> {
                let (e, _) = est.entropy_term(a as u64, sel)?;
                side_m[0].add(weight * e);
                side_m[1].add(weight * e * e);
                side_m[2].add(weight * e * w_count);
                side_m[3].add(weight * w_count);
                side_m[4].add(weight * w_count * w_count);
                Ok(())
            };
            if split {
                for (b, &wb) in lm.pmf.iter().enumerate() {
                    visit(b as u64, wa * wb)?;
                }
            } else {
                visit(a as u64, wa)?;
            }
        }
        // (E[h], E[h^2])
        let mut side_n = [Compensated::default(); 2];
        for (a, &wa) in ln.pmf.iter().enumerate() {
            let mut visit = |sel: u64, weight: f64| -> Result<()> {
                let (h, _) = est.cross_factor(a as u64, sel)?;
                side_n[0].add(weight * h);
                side_n[1].add(weight * h * h);
                Ok(())
            };
            if split {
                for (b, &wb) in ln.pmf.iter().enumerate() {
                    visit(b as u64, wa * wb)?;
                }
            } else {
                visit(a as u64, wa)?;
            }
        }
        let [ee, ee2, eew, ew, eww] = side_m.map(|c| c.value());
        let [eh, eh2] = side_n.map(|c| c.value());
        let t1 = ee - ew * eh;
        let t2 = ee2 - 2.0 * eew * eh + eww * eh2;
        mean.add(t1);
        var.add(t2 - t1 * t1);
    }
    let expectation = mean.value();
    Ok(ExactMoments {
        expectation,
        second_moment: var.value().max(0.0) + expectation * expectation,
        truncation_mass_dropped: dropped,
        excluded_probability: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{drop_zero_degree, gl_coefficients, remez_xlogx_cached, rescale_gamma};
    use crate::distributions::{make_uniform, DiscreteDistribution};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pair(p: &[f64], q: &[f64], f: f64) -> BoundedRatioPair {
        BoundedRatioPair::new(
            DiscreteDistribution::new(p.to_vec()).unwrap(),
            DiscreteDistribution::new(q.to_vec()).unwrap(),
            f,
        )
        .unwrap()
    }

    #[test]
    fn rate_examples() {
        let a = rate_aplugin(100, 1000.0, 10_000.0, 10.0).unwrap();
        assert_relative_eq!(a.bias_sq_term, 0.04, max_relative = 1e-12);
        assert_relative_eq!(a.total, 0.0463019, epsilon = 1e-7);
        assert_relative_eq!(
            a.total,
            a.bias_sq_term + a.variance_m_term + a.variance_n_term
        );
        let b = rate_minimax(100, 1000.0, 10_000.0, 10.0).unwrap();
        // 0.0081879 to the displayed precision
        assert_relative_eq!(b.total, 0.0081879, epsilon = 2e-7);
        assert_eq!(b.kind, RateKind::Minimax);
        assert!(rate_minimax(1, 1.0, 1.0, 1.0).is_err());
        assert!(rate_aplugin(10, 0.0, 1.0, 1.0).is_err());

        let flat = rate_aplugin(10, 100.0, 100.0, 1.0).unwrap();
        assert_eq!(flat.variance_m_term, 0.0);
        let doubled = rate_aplugin(10, 200.0, 200.0, 1.0).unwrap();
        assert_relative_eq!(
            doubled.bias_sq_term,
            flat.bias_sq_term / 4.0,
            max_relative = 1e-14
        );

        let entropy_like = rate_minimax(50, 100.0, 1e300, 1.0).unwrap();
        let r = 50.0 / (100.0 * 50f64.ln());
        assert_relative_eq!(entropy_like.total, r * r, max_relative = 1e-12);

        let c = RateConstants {
            bias: 2.0,
            variance_m: 3.0,
            variance_n: 4.0,
        };
        let s = rate_aplugin_with(100, 1000.0, 10_000.0, 10.0, &c).unwrap();
        assert_relative_eq!(s.bias_sq_term, 0.08, max_relative = 1e-12);
        assert_relative_eq!(s.variance_n_term, 0.004, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn minimax_bias_below_aplugin_bias(
            k in 3usize..100_000,
            m in 1.0f64..1e7,
            n in 1.0f64..1e7,
            f in 1.0f64..1e3,
        ) {
            let a = rate_aplugin(k, m, n, f).unwrap();
            let b = rate_minimax(k, m, n, f).unwrap();
            prop_assert!(b.bias_sq_term <= a.bias_sq_term);
            let ln_k = (k as f64).ln();
            prop_assert!((b.bias_sq_term * ln_k * ln_k - a.bias_sq_term).abs() <= 1e-12 * a.bias_sq_term);
            prop_assert!(a.variance_m_term >= 0.0 && a.variance_n_term >= 0.0);
        }
    }

    #[test]
    fn poisson_truncation_is_tight() {
        for lambda in [0.01, 0.5, 3.0, 40.0, 900.0] {
            let law = poisson_truncated(lambda, 1e-30);
            let total: f64 = law.pmf.iter().sum();
            assert!(law.dropped < 1e-14);
            assert!((1.0 - total).abs() < 1e-12, "lambda {lambda}: {total}");
        }
    }

    #[test]
    fn composition_probabilities_sum_to_one() {
        let p = [0.2, 0.0, 0.5, 0.3];
        let mut mass = 0.0;
        let mut visited = 0;
        for_each_composition(&p, 7, |c, w| {
            assert_eq!(c[1], 0);
            assert_eq!(c.iter().sum::<u64>(), 7);
            mass += w;
            visited += 1;
            Ok(())
        })
        .unwrap();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-13);
        assert_eq!(visited, 36);
    }

    #[test]
    fn constant_estimator_has_no_spread() {
        let bp = pair(&[0.7, 0.3], &[0.5, 0.5], 2.0);
        let truth = bp.divergence();
        for s in [Sampling::Multinomial, Sampling::Poissonized] {
            let mo = exact_estimator_moments(
                &bp,
                4,
                4,
                OracleEstimator::Constant(truth),
                &EstimatorConfig::default(),
                s,
            )
            .unwrap();
            assert_eq!(mo.bias(truth), 0.0);
            assert_eq!(mo.variance(), 0.0);
        }
    }

    #[test]
    fn aplugin_uniform_bias_positive() {
        let bp = pair(&[0.5, 0.5], &[0.5, 0.5], 1.0);
        let mo = exact_estimator_moments(
            &bp,
            4,
            4,
            OracleEstimator::AugmentedPlugin,
            &EstimatorConfig::default(),
            Sampling::Multinomial,
        )
        .unwrap();
        assert!(mo.expectation > 0.0);
        assert!(mo.second_moment >= mo.expectation * mo.expectation);
    }

    // Brute force over the 5 x 5 grid of (M_1, N_1) for k = 2.
    fn brute_force_k2(
        p: f64,
        q: f64,
        m: u64,
        n: u64,
        eval: impl Fn(&[u64], &[u64]) -> f64,
    ) -> (f64, f64) {
        let binom = |t: u64, x: u64, pr: f64| -> f64 {
            let c = (1..=x).fold(1.0, |a, i| a * (t - x + i) as f64 / i as f64);
            c * pr.powi(x as i32) * (1.0 - pr).powi((t - x) as i32)
        };
        let (mut e1, mut e2) = (0.0, 0.0);
        for a in 0..=m {
            for b in 0..=n {
                let w = binom(m, a, p) * binom(n, b, q);
                let v = eval(&[a, m - a], &[b, n - b]);
                e1 += w * v;
                e2 += w * v * v;
            }
        }
        (e1, e2)
    }

    #[test]
    fn separable_paths_match_brute_force() {
        let cfg = EstimatorConfig::default();
        let bp = pair(&[0.7, 0.3], &[0.5, 0.5], 2.0);
        let h = |c: &[u64]| SampleHistogram::from_counts(c.to_vec()).unwrap();
        let (e1, e2) = brute_force_k2(0.7, 0.5, 4, 4, |a, b| {
            aplugin_kl(&h(a), &h(b), &cfg).unwrap()
        });
        let mo = exact_estimator_moments(
            &bp,
            4,
            4,
            OracleEstimator::AugmentedPlugin,
            &cfg,
            Sampling::Multinomial,
        )
        .unwrap();
        assert_relative_eq!(mo.expectation, e1, max_relative = 1e-12);
        assert_relative_eq!(mo.second_moment, e2, max_relative = 1e-12);

        let (e1, e2) = brute_force_k2(0.7, 0.5, 4, 6, |a, b| {
            crate::estimators::opt_kl_reuse(&h(a), &h(b), &cfg)
                .unwrap()
                .value
        });
        let mo = exact_estimator_moments(
            &bp,
            4,
            6,
            OracleEstimator::Optimal,
            &cfg,
            Sampling::Multinomial,
        )
        .unwrap();
        assert_relative_eq!(mo.expectation, e1, max_relative = 1e-12);
        assert_relative_eq!(mo.second_moment, e2, max_relative = 1e-12);
    }

    #[test]
    fn separable_matches_joint_enumeration() {
        let cfg = EstimatorConfig::default();
        let bp = pair(&[0.5, 0.2, 0.2, 0.1], &[0.25, 0.25, 0.25, 0.25], 2.0);
        let ms = multinomial_outcomes(bp.p().probs(), 5, &OracleOptions::default()).unwrap();
        let ns = multinomial_outcomes(bp.q().probs(), 7, &OracleOptions::default()).unwrap();
        let joint = joint_moments(&ms, &ns, 0.0, &OracleOptions::default(), |a, b| {
            aplugin_kl(a, b, &cfg)
        })
        .unwrap();
        let sep = exact_estimator_moments(
            &bp,
            5,
            7,
            OracleEstimator::AugmentedPlugin,
            &cfg,
            Sampling::Multinomial,
        )
        .unwrap();
        assert_relative_eq!(sep.expectation, joint.expectation, max_relative = 1e-12);
        assert_relative_eq!(sep.second_moment, joint.second_moment, max_relative = 1e-12);

        let joint = joint_moments(&ms, &ns, 0.0, &OracleOptions::default(), |a, b| {
            crate::estimators::opt_kl_reuse(a, b, &cfg).map(|e| e.value)
        })
        .unwrap();
        let sep = exact_estimator_moments(
            &bp,
            5,
            7,
            OracleEstimator::Optimal,
            &cfg,
            Sampling::Multinomial,
        )
        .unwrap();
        assert_relative_eq!(sep.expectation, joint.expectation, max_relative = 1e-12);
        assert_relative_eq!(sep.second_moment, joint.second_moment, max_relative = 1e-12);
    }

    #[test]
    fn plugin_reports_infinite_mass() {
        let bp = pair(&[0.5, 0.5], &[0.5, 0.5], 1.0);
        let mo = exact_estimator_moments(
            &bp,
            4,
            4,
            OracleEstimator::Plugin,
            &EstimatorConfig::default(),
            Sampling::Multinomial,
        )
        .unwrap();
        // infinite iff N_1 in {0, 4} while M_1 is not 0 or 4 respectively
        let expected = 2.0 * (1.0 / 16.0) * (15.0 / 16.0);
        assert_relative_eq!(mo.excluded_probability, expected, max_relative = 1e-12);
        assert!(mo.expectation.is_finite());
    }

    #[test]
    fn guard_rejects_large_instances() {
        let u = make_uniform(30).unwrap();
        let bp = BoundedRatioPair::new(u.clone(), u, 1.0).unwrap();
        let err = exact_estimator_moments(
            &bp,
            40,
            40,
            OracleEstimator::Plugin,
            &EstimatorConfig::default(),
            Sampling::Multinomial,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }

    #[test]
    fn poissonized_paths_agree_and_converge() {
        let cfg = EstimatorConfig::default();
        let bp = pair(&[0.7, 0.3], &[0.5, 0.5], 2.0);
        for est in [
            OracleEstimator::AugmentedPlugin,
            OracleEstimator::Optimal,
            OracleEstimator::Plugin,
        ] {
            let a = exact_estimator_moments(&bp, 4, 4, est, &cfg, Sampling::Poissonized).unwrap();
            let tight = OracleOptions {
                tail: 5e-15,
                ..Default::default()
            };
            let b =
                exact_estimator_moments_with(&bp, 4, 4, est, &cfg, Sampling::Poissonized, &tight)
                    .unwrap();
            assert!(a.truncation_mass_dropped < 1e-12);
            assert!((a.expectation - b.expectation).abs() < 1e-10, "{est:?}");
            assert!((a.second_moment - b.second_moment).abs() < 1e-10, "{est:?}");
        }
        let split = EstimatorConfig {
            split_mode: SplitMode::PoissonizedSplit,
            ..cfg
        };
        let s = exact_estimator_moments(
            &bp,
            4,
            4,
            OracleEstimator::Optimal,
            &split,
            Sampling::Poissonized,
        )
        .unwrap();
        assert!(s.second_moment >= s.expectation * s.expectation);
        assert!(exact_estimator_moments(
            &bp,
            4,
            4,
            OracleEstimator::Optimal,
            &split,
            Sampling::Multinomial
        )
        .is_err());
    }

    #[test]
    fn gl_expectation_identities() {
        let w = 0.37;
        let first = FactorialCoeffs::new(vec![0.0, w], 0.0);
        assert_relative_eq!(
            exact_gl_expectation(&first, 0.01, 500).unwrap(),
            w * 5.0,
            max_relative = 1e-12
        );
        let second = FactorialCoeffs::new(vec![0.0, 0.0, w], 0.0);
        assert_relative_eq!(
            exact_gl_expectation(&second, 0.01, 500).unwrap(),
            w * 25.0,
            max_relative = 1e-12
        );

        let base = remez_xlogx_cached(1).unwrap();
        let mu = drop_zero_degree(&rescale_gamma(base, 500, 10, 0.2).unwrap()).unwrap();
        let fc = gl_coefficients(&mu, 500).unwrap();
        for q in [0.001, 0.2, 1.0] {
            assert_relative_eq!(
                exact_gl_expectation(&fc, q, 500).unwrap(),
                fc.offset,
                max_relative = 1e-12
            );
        }
        assert!(exact_gl_expectation(&fc, 0.0, 500).is_err());
    }

    #[test]
    fn gl_expectation_matches_mu_over_q() {
        let (n, k) = (500u64, 1000usize);
        let base = remez_xlogx_cached(3).unwrap();
        let mu = drop_zero_degree(&rescale_gamma(base, n, k, 0.2).unwrap()).unwrap();
        let fc = gl_coefficients(&mu, n).unwrap();
        let q = 0.01;
        let got = exact_gl_expectation(&fc, q, n).unwrap();
        assert!((got - mu.eval_monomial(q) / q).abs() < 1e-8);
    }
}
