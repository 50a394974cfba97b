//! Divergence and entropy estimators.
//!
//! - [`plugin_kl`]: the empirical divergence `D(P_hat || Q_hat)`, infinite as
//!   soon as a symbol seen from `P` is unseen from `Q`.
//! - [`aplugin_kl`]: the augmented plug-in estimator, which smooths the
//!   `Q` side with add-`c` counts `(N_i + c) / (n + k c)` and is always finite.
//! - [`opt_kl`]: the polynomial-approximation estimator. Per bin it switches
//!   between a factorial-moment estimator of a polynomial approximation (small
//!   counts) and a bias-corrected plug-in term (large counts), separately for
//!   the `sum P ln P` part and the `sum P ln Q` part.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use crate::approx::{
    drop_zero_degree, eval_factorial_estimator, gl_coefficients, glprime_coefficients,
    remez_xlogx_cached, rescale_gamma_wide, FactorialCoeffs, MAX_DEGREE,
};
use crate::distributions::{SampleHistogram, SplitMode, SplitSamples};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Add-constant `c` of the augmented plug-in estimator.
    pub add_constant: f64,
    /// Degree constant: `L = max(floor(c0 ln k), 1)`.
    pub c0: f64,
    /// Interval constant: the polynomial covers `[0, c1 ln k / n]`.
    pub c1: f64,
    /// Threshold constant: counts `<= c2 ln k` take the polynomial branch.
    pub c2: f64,
    pub c0_prime: f64,
    pub c1_prime: f64,
    pub c2_prime: f64,
    /// When set, the optimal estimator is clipped to `[0, ln f]`.
    pub clip_bound_f: Option<f64>,
    pub split_mode: SplitMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            add_constant: 1.0,
            c0: 1.2,
            c1: 0.2,
            c2: 0.1,
            c0_prime: 1.2,
            c1_prime: 0.2,
            c2_prime: 0.1,
            clip_bound_f: None,
            split_mode: SplitMode::MultinomialReuse,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c", self.add_constant),
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c0_prime", self.c0_prime),
            ("c1_prime", self.c1_prime),
            ("c2_prime", self.c2_prime),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.c2 > self.c1 || self.c2_prime > self.c1_prime {
            return Err(Error::invalid("threshold constant c2 must not exceed c1"));
        }
        if let Some(f) = self.clip_bound_f {
            if !(f >= 1.0) || !f.is_finite() {
                return Err(Error::invalid(format!(
                    "clip bound f must be >= 1, got {f}"
                )));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    ///
    /// Keys: `c`, `c0`, `c1`, `c2`, `c0_prime`, `c1_prime`, `c2_prime`,
    /// `clip_bound_f`, `split_mode`. Unset `c1` follows `2 c2`, and unset
    /// primed constants follow their unprimed counterparts.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut seen: HashMap<String, String> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key=value", idx + 1))
            })?;
            seen.insert(key.trim().to_string(), value.trim().to_string());
        }
        let num = |key: &str| -> Result<Option<f64>> {
            seen.get(key)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::invalid(format!("config `{key}`: `{v}` is not a number"))
                    })
                })
                .transpose()
        };
        const KNOWN: [&str; 9] = [
            "c",
            "c0",
            "c1",
            "c2",
            "c0_prime",
            "c1_prime",
            "c2_prime",
            "clip_bound_f",
            "split_mode",
        ];
        if let Some(bad) = seen.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::invalid(format!("unknown config key `{bad}`")));
        }

        let base = Self::default();
        let c0 = num("c0")?.unwrap_or(base.c0);
        let c2 = num("c2")?.unwrap_or(base.c2);
        let c1 = num("c1")?.unwrap_or(2.0 * c2);
        let c2_prime = num("c2_prime")?.unwrap_or(c2);
        let config = Self {
            add_constant: num("c")?.unwrap_or(base.add_constant),
            c0,
            c1,
            c2,
            c0_prime: num("c0_prime")?.unwrap_or(c0),
            c1_prime: num("c1_prime")?.unwrap_or(if seen.contains_key("c2_prime") {
                2.0 * c2_prime
            } else {
                c1
            }),
            c2_prime,
            clip_bound_f: num("clip_bound_f")?,
            split_mode: match seen.get("split_mode") {
                Some(v) => v.parse()?,
                None => base.split_mode,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// `L = max(floor(c0 ln k), 1)`, capped at the largest supported degree.
pub fn polynomial_degree(c0: f64, k: usize) -> usize {
    let raw = (c0 * (k.max(1) as f64).ln()).floor();
    (raw.max(1.0) as usize).min(MAX_DEGREE)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchCounts {
    pub poly: usize,
    pub plugin: usize,
}

impl BranchCounts {
    fn record(&mut self, branch: Branch) {
        match branch {
            Branch::Poly => self.poly += 1,
            Branch::Plugin => self.plugin += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Poly,
    Plugin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    /// Estimate of `sum P_i ln P_i`.
    pub d1_part: f64,
    /// Estimate of `sum P_i ln Q_i`.
    pub d2_part: f64,
    pub clipped: bool,
    pub entropy_branches: BranchCounts,
    pub cross_branches: BranchCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Plugin,
    AugmentedPlugin,
    Optimal,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Plugin, Method::AugmentedPlugin, Method::Optimal];

    pub fn name(self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::AugmentedPlugin => "aplugin",
            Method::Optimal => "opt",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(Method::Plugin),
            "aplugin" => Ok(Method::AugmentedPlugin),
            "opt" => Ok(Method::Optimal),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected plugin, aplugin or opt)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_alphabets(a: &SampleHistogram, b: &SampleHistogram) -> Result<()> {
    if a.alphabet_size() != b.alphabet_size() {
        return Err(Error::invalid(format!(
            "alphabet sizes differ: {} vs {}",
            a.alphabet_size(),
            b.alphabet_size()
        )));
    }
    Ok(())
}

/// `D(P_hat || Q_hat)` of the empirical distributions.
pub fn plugin_kl(m_hist: &SampleHistogram, n_hist: &SampleHistogram) -> Result<f64> {
    check_alphabets(m_hist, n_hist)?;
    if m_hist.total() == 0 || n_hist.total() == 0 {
        return Err(Error::invalid("plug-in estimator needs non-empty samples"));
    }
    let (m, n) = (m_hist.total() as f64, n_hist.total() as f64);
    let mut total = 0.0;
    for (&mi, &ni) in m_hist.counts().iter().zip(n_hist.counts()) {
        if mi == 0 {
            continue;
        }
        if ni == 0 {
            return Ok(f64::INFINITY);
        }
        let p = mi as f64 / m;
        total += p * (p / (ni as f64 / n)).ln();
    }
    Ok(total)
}

/// `sum_i (M_i/m) ln[(M_i/m) / ((N_i + c)/(n + k c))]`.
pub fn aplugin_kl(
    m_hist: &SampleHistogram,
    n_hist: &SampleHistogram,
    config: &EstimatorConfig,
) -> Result<f64> {
    check_alphabets(m_hist, n_hist)?;
    if m_hist.total() == 0 {
        return Err(Error::invalid("augmented plug-in estimator needs m >= 1"));
    }
    let c = config.add_constant;
    if !(c > 0.0) {
        return Err(Error::invalid("add-constant c must be positive"));
    }
    let k = m_hist.alphabet_size() as f64;
    let m = m_hist.total() as f64;
    let denom = n_hist.total() as f64 + k * c;
    Ok(m_hist
        .counts()
        .iter()
        .zip(n_hist.counts())
        .filter(|(&mi, _)| mi > 0)
        .map(|(&mi, &ni)| {
            let p = mi as f64 / m;
            p * (p / ((ni as f64 + c) / denom)).ln()
        })
        .sum())
}

/// `-sum_i (M_i/m) ln(M_i/m)`.
pub fn plugin_entropy(m_hist: &SampleHistogram) -> Result<f64> {
    if m_hist.total() == 0 {
        return Err(Error::invalid("plug-in entropy needs m >= 1"));
    }
    let m = m_hist.total() as f64;
    Ok(-m_hist
        .counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / m;
            p * p.ln()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Side {
    Cross,
    Entropy,
}

type CacheKey = (Side, usize, u64, usize, u64);

fn coefficient_cache() -> &'static RwLock<HashMap<CacheKey, Arc<FactorialCoeffs>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<FactorialCoeffs>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Factorial-moment coefficients memoized per (side, degree, sample size,
/// k, interval constant).
fn cached_coefficients(
    side: Side,
    degree: usize,
    size: u64,
    k: usize,
    c1: f64,
) -> Result<Arc<FactorialCoeffs>> {
    let key = (side, degree, size, k, c1.to_bits());
    if let Some(hit) = coefficient_cache().read().expect("cache lock").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let base = remez_xlogx_cached(degree)?;
    let fc = match side {
        Side::Cross => gl_coefficients(
            &drop_zero_degree(&rescale_gamma_wide(base, size, k, c1)?)?,
            size,
        )?,
        Side::Entropy => glprime_coefficients(base, size, k, c1)?,
    };
    let fc = Arc::new(fc);
    let mut guard = coefficient_cache().write().expect("cache lock");
    Ok(Arc::clone(guard.entry(key).or_insert(fc)))
}

/// The per-bin pieces of the polynomial-approximation estimator for fixed
/// `(k, m, n, config)`.
///
/// `entropy_term` returns bin `i`'s contribution to the `sum P ln P`
/// estimate; `cross_factor` returns `h` such that bin `i` contributes
/// `(M_i / m) h` to the `sum P ln Q` estimate.
#[derive(Debug, Clone)]
pub struct OptimalEstimator {
    k: usize,
    m: u64,
    n: u64,
    entropy_threshold: f64,
    cross_threshold: f64,
    entropy_coeffs: Option<Arc<FactorialCoeffs>>,
    cross_coeffs: Option<Arc<FactorialCoeffs>>,
}

impl OptimalEstimator {
    pub fn new(k: usize, m: u64, n: u64, config: &EstimatorConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::invalid("alphabet size must be positive"));
        }
        if m == 0 || n == 0 {
            return Err(Error::invalid("optimal estimator needs m >= 1 and n >= 1"));
        }
        let ln_k = (k as f64).ln();
        // with k = 1 the polynomial interval collapses to a point; only empty
        // bins can then take the polynomial branch
        let (entropy_coeffs, cross_coeffs) = if k >= 2 {
            (
                Some(cached_coefficients(
                    Side::Entropy,
                    polynomial_degree(config.c0_prime, k),
                    m,
                    k,
                    config.c1_prime,
                )?),
                Some(cached_coefficients(
                    Side::Cross,
                    polynomial_degree(config.c0, k),
                    n,
                    k,
                    config.c1,
                )?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            k,
            m,
            n,
            entropy_threshold: config.c2_prime * ln_k,
            cross_threshold: config.c2 * ln_k,
            entropy_coeffs,
            cross_coeffs,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn cross_coefficients(&self) -> Option<&FactorialCoeffs> {
        self.cross_coeffs.as_deref()
    }

    pub fn entropy_coefficients(&self) -> Option<&FactorialCoeffs> {
        self.entropy_coeffs.as_deref()
    }

    /// `g'(M_i)` if `M'_i <= c2' ln k`, else `(M_i/m) ln(M_i/m) - 1/(2m)`.
    pub fn entropy_term(&self, count: u64, select: u64) -> Result<(f64, Branch)> {
        if select as f64 <= self.entropy_threshold {
            let value = match (&self.entropy_coeffs, count) {
                (_, 0) => 0.0,
                (Some(fc), c) => eval_factorial_estimator(fc, c)?,
                (None, _) => {
                    return Err(Error::invalid(
                        "polynomial branch needs k >= 2 for a non-empty bin",
                    ))
                }
            };
            Ok((value, Branch::Poly))
        } else {
            let m = self.m as f64;
            let p = count as f64 / m;
            let plug = if count == 0 { 0.0 } else { p * p.ln() };
            Ok((plug - 1.0 / (2.0 * m), Branch::Plugin))
        }
    }

    /// `g_L(N_i)` if `N'_i <= c2 ln k`, else `ln((N_i+1)/n) - 1/(2(N_i+1))`.
    pub fn cross_factor(&self, count: u64, select: u64) -> Result<(f64, Branch)> {
        if select as f64 <= self.cross_threshold {
            match &self.cross_coeffs {
                Some(fc) => Ok((eval_factorial_estimator(fc, count)?, Branch::Poly)),
                None => Err(Error::invalid(
                    "polynomial branch needs k >= 2 for a non-empty bin",
                )),
            }
        } else {
            let c1 = count as f64 + 1.0;
            Ok(((c1 / self.n as f64).ln() - 1.0 / (2.0 * c1), Branch::Plugin))
        }
    }
}

/// Estimate of `sum_i P_i ln Q_i` from `M` (counts from `P`), `N` (counts
/// from `Q`) and the selection histogram `N'`.
pub fn opt_cross_part(
    m_hist: &SampleHistogram,
    n_hist: &SampleHistogram,
    n_select: &SampleHistogram,
    config: &EstimatorConfig,
    n: u64,
    k: usize,
) -> Result<(f64, BranchCounts)> {
    check_alphabets(m_hist, n_hist)?;
    check_alphabets(n_hist, n_select)?;
    let est = OptimalEstimator::new(k, m_hist.nominal_size().max(1), n, config)?;
    cross_part_with(&est, m_hist, n_hist, n_select)
}

fn cross_part_with(
    est: &OptimalEstimator,
    m_hist: &SampleHistogram,
    n_hist: &SampleHistogram,
    n_select: &SampleHistogram,
) -> Result<(f64, BranchCounts)> {
    let m = m_hist.nominal_size() as f64;
    let mut branches = BranchCounts::default();
    let mut total = 0.0;
    for ((&mi, &ni), &si) in m_hist
        .counts()
        .iter()
        .zip(n_hist.counts())
        .zip(n_select.counts())
    {
        if mi == 0 {
            // the term vanishes; only the branch is recorded
            let branch = if si as f64 <= est.cross_threshold {
                Branch::Poly
            } else {
                Branch::Plugin
            };
            branches.record(branch);
            continue;
        }
        let (h, branch) = est.cross_factor(ni, si)?;
        branches.record(branch);
        total += (mi as f64 / m) * h;
    }
    Ok((total, branches))
}

/// Estimate of `sum_i P_i ln P_i` from `M` and the selection histogram `M'`.
pub fn opt_entropy_part(
    m_hist: &SampleHistogram,
    m_select: &SampleHistogram,
    config: &EstimatorConfig,
    m: u64,
    k: usize,
) -> Result<(f64, BranchCounts)> {
    check_alphabets(m_hist, m_select)?;
    let est = OptimalEstimator::new(k, m, 1, config)?;
    entropy_part_with(&est, m_hist, m_select)
}

fn entropy_part_with(
    est: &OptimalEstimator,
    m_hist: &SampleHistogram,
    m_select: &SampleHistogram,
) -> Result<(f64, BranchCounts)> {
    let mut branches = BranchCounts::default();
    let mut total = 0.0;
    for (&mi, &si) in m_hist.counts().iter().zip(m_select.counts()) {
        let (v, branch) = est.entropy_term(mi, si)?;
        branches.record(branch);
        total += v;
    }
    Ok((total, branches))
}

/// Clips `raw` to `[0, ln f]`.
pub fn clip_to_bound(raw: f64, f: f64) -> f64 {
    raw.max(0.0).min(f.ln())
}

/// The polynomial-approximation divergence estimator.
///
/// `p_side` / `q_side` hold the estimation histogram (`first`) and the
/// branch-selection histogram (`second`) for each distribution; `m` and `n`
/// are their nominal sample sizes.
pub fn opt_kl(
    p_side: &SplitSamples,
    q_side: &SplitSamples,
    config: &EstimatorConfig,
    k: usize,
) -> Result<DivergenceEstimate> {
    for h in [
        p_side.first(),
        p_side.second(),
        q_side.first(),
        q_side.second(),
    ] {
        if h.alphabet_size() != k {
            return Err(Error::invalid(format!(
                "histogram has {} bins, expected k = {k}",
                h.alphabet_size()
            )));
        }
    }
    let m = p_side.first().nominal_size();
    let n = q_side.first().nominal_size();
    let est = OptimalEstimator::new(k, m, n, config)?;
    let (d1, entropy_branches) = entropy_part_with(&est, p_side.first(), p_side.second())?;
    let (d2, cross_branches) =
        cross_part_with(&est, p_side.first(), q_side.first(), q_side.second())?;
    let raw = d1 - d2;
    let (value, clipped) = match config.clip_bound_f {
        Some(f) => {
            let v = clip_to_bound(raw, f);
            (v, v != raw)
        }
        None => (raw, false),
    };
    Ok(DivergenceEstimate {
        value,
        d1_part: d1,
        d2_part: d2,
        clipped,
        entropy_branches,
        cross_branches,
    })
}

/// [`opt_kl`] with each histogram used both for selection and estimation.
pub fn opt_kl_reuse(
    m_hist: &SampleHistogram,
    n_hist: &SampleHistogram,
    config: &EstimatorConfig,
) -> Result<DivergenceEstimate> {
    check_alphabets(m_hist, n_hist)?;
    opt_kl(
        &SplitSamples::reuse(m_hist.clone()),
        &SplitSamples::reuse(n_hist.clone()),
        config,
        m_hist.alphabet_size(),
    )
}
