//! Rescaled approximations on `[0, a]` and the factorial-moment estimators
//! built from them.
//!
//! If `p` is the best approximation of `x ln x` on `[0, 1]`, then
//! `gamma(x) = a p(x / a) + x ln a` is the best approximation on `[0, a]`,
//! with residual `a` times the base residual. Dropping its constant term gives
//! `mu`, for which `mu(x) / x` is again a polynomial. Under Poisson sampling
//! `E[(N)_j] = lambda^j`, so a polynomial in the Poisson mean has an unbiased
//! estimator that is linear in the falling factorials of the count.

use std::sync::Arc;

use super::remez::{xlogx, ApproxPolynomial};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyKind {
    /// Best approximation on `[0, a]`, constant term included.
    Gamma,
    /// `Gamma` with its constant term removed.
    Mu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPoly {
    coeffs: Vec<f64>,
    upper: f64,
    kind: PolyKind,
    base: Arc<ApproxPolynomial>,
}

impl RescaledPoly {
    /// Monomial coefficients in `x`, ascending degree.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn interval(&self) -> (f64, f64) {
        (0.0, self.upper)
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn kind(&self) -> PolyKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn base(&self) -> &ApproxPolynomial {
        &self.base
    }

    /// The constant term `a_0 a` that separates `gamma` from `mu`.
    pub fn zero_degree_term(&self) -> f64 {
        self.base.coeffs()[0] * self.upper
    }

    /// Evaluates through the base polynomial's Chebyshev form.
    pub fn eval(&self, x: f64) -> f64 {
        let a = self.upper;
        let gamma = a * self.base.eval(x / a) + x * a.ln();
        match self.kind {
            PolyKind::Gamma => gamma,
            PolyKind::Mu if x == 0.0 => 0.0,
            PolyKind::Mu => gamma - self.zero_degree_term(),
        }
    }

    /// Horner evaluation of the monomial coefficients.
    pub fn eval_monomial(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn residual(&self, x: f64) -> f64 {
        self.eval(x) - xlogx(x)
    }
}

/// Scale factor `a = c1 ln k / n` of the interval the polynomial branch covers.
pub fn interval_upper(n: u64, k: usize, c1: f64) -> Result<f64> {
    if n == 0 || k < 2 || !(c1 > 0.0) {
        return Err(Error::invalid(format!(
            "rescaling needs n >= 1, k >= 2 and c1 > 0, got n = {n}, k = {k}, c1 = {c1}"
        )));
    }
    Ok(c1 * (k as f64).ln() / n as f64)
}

fn check_base(base: &ApproxPolynomial) -> Result<()> {
    if base.interval() != (0.0, 1.0) {
        return Err(Error::invalid("base approximation must live on [0, 1]"));
    }
    Ok(())
}

/// Rescales onto `[0, a]` with `a = c1 ln k / n`.
///
/// Returns [`Error::DomainWarning`] when `a >= 1`; use
/// [`rescale_gamma_wide`] to accept such intervals.
pub fn rescale_gamma(
    base: Arc<ApproxPolynomial>,
    n: u64,
    k: usize,
    c1: f64,
) -> Result<RescaledPoly> {
    let a = interval_upper(n, k, c1)?;
    if a >= 1.0 {
        return Err(Error::DomainWarning { upper: a });
    }
    rescale_to(base, a)
}

/// Like [`rescale_gamma`] but accepts `a >= 1`, logging a warning. Small
/// desk-scale samples routinely land here.
pub fn rescale_gamma_wide(
    base: Arc<ApproxPolynomial>,
    n: u64,
    k: usize,
    c1: f64,
) -> Result<RescaledPoly> {
    let a = interval_upper(n, k, c1)?;
    if a >= 1.0 {
        log::warn!("polynomial interval [0, {a}] does not shrink [0, 1] (n = {n}, k = {k})");
    }
    rescale_to(base, a)
}

/// `gamma(x) = a p(x / a) + x ln a` for an explicit `a > 0`.
pub fn rescale_to(base: Arc<ApproxPolynomial>, a: f64) -> Result<RescaledPoly> {
    check_base(&base)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!(
            "interval upper end must be positive, got {a}"
        )));
    }
    // a_j n^{j-1} / (c1 ln k)^{j-1} = a_j a^{1-j}
    let mut coeffs: Vec<f64> = base
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, &aj)| aj * a.powi(1 - j as i32))
        .collect();
    if coeffs.len() < 2 {
        coeffs.push(0.0);
    }
    coeffs[1] += a.ln();
    Ok(RescaledPoly {
        coeffs,
        upper: a,
        kind: PolyKind::Gamma,
        base,
    })
}

/// Removes the constant term of a gamma-form polynomial.
pub fn drop_zero_degree(gamma: &RescaledPoly) -> Result<RescaledPoly> {
    if gamma.kind != PolyKind::Gamma {
        return Err(Error::invalid(
            "drop_zero_degree expects a gamma-form polynomial",
        ));
    }
    let mut coeffs = gamma.coeffs.clone();
    coeffs[0] = 0.0;
    Ok(RescaledPoly {
        coeffs,
        upper: gamma.upper,
        kind: PolyKind::Mu,
        base: Arc::clone(&gamma.base),
    })
}

/// Which functional a [`FactorialCoeffs`] estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorialKind {
    /// `g_L(N)`, unbiased for `mu(Q) / Q` with `N ~ Poi(nQ)`.
    LogApprox,
    /// `g'_L(M)`, unbiased for `mu(P)` with `M ~ Poi(mP)`.
    XlogxApprox,
}

/// An estimator `sum_i weights[i] (count)_i + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialCoeffs {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub kind: FactorialKind,
    /// Upper end `a` of the interval of the generating polynomial.
    pub upper: f64,
}

impl FactorialCoeffs {
    pub fn new(weights: Vec<f64>, offset: f64) -> Self {
        Self {
            weights,
            offset,
            kind: FactorialKind::LogApprox,
            upper: f64::NAN,
        }
    }

    pub fn eval(&self, count: u64) -> Result<f64> {
        eval_factorial_estimator(self, count)
    }
}

/// `g_L(N) = sum_{j=1}^L a_j / (c1 ln k)^{j-1} (N)_{j-1} - ln(n / (c1 ln k))`.
///
/// `weights[j - 1]` carries `a_j / (c1 ln k)^{j-1}` and `offset` carries
/// `ln a`. The scale `c1 ln k` is recovered from `mu` as `n a`.
pub fn gl_coefficients(mu: &RescaledPoly, n: u64) -> Result<FactorialCoeffs> {
    if mu.kind != PolyKind::Mu {
        return Err(Error::invalid(
            "gl_coefficients expects a mu-form polynomial",
        ));
    }
    let scale = n as f64 * mu.upper;
    let base = mu.base.coeffs();
    let degree = base.len() - 1;
    let weights = (1..=degree)
        .map(|j| base[j] / scale.powi(j as i32 - 1))
        .collect();
    Ok(FactorialCoeffs {
        weights,
        offset: mu.upper.ln(),
        kind: FactorialKind::LogApprox,
        upper: mu.upper,
    })
}

/// `g'_L(M) = (1/m) [ sum_{j=1}^L a_j (M)_j / (c1' ln k)^{j-1} - ln(m / (c1' ln k)) M ]`.
///
/// `weights[j]` multiplies `(M)_j`; `weights[0] = 0` so an empty bin
/// contributes nothing. Its Poisson expectation is `mu(P)`, the rescaled best
/// approximation of `P ln P` without its constant term.
pub fn glprime_coefficients(
    base: Arc<ApproxPolynomial>,
    m: u64,
    k: usize,
    c1_prime: f64,
) -> Result<FactorialCoeffs> {
    let gamma = rescale_gamma_wide(base, m, k, c1_prime)?;
    glprime_from_gamma(&gamma, m)
}

pub(crate) fn glprime_from_gamma(gamma: &RescaledPoly, m: u64) -> Result<FactorialCoeffs> {
    let mf = m as f64;
    let scale = mf * gamma.upper;
    let base = gamma.base.coeffs();
    let degree = base.len() - 1;
    let mut weights = vec![0.0; degree + 1];
    for j in 1..=degree {
        weights[j] = base[j] / (mf * scale.powi(j as i32 - 1));
    }
    if degree == 0 {
        weights.push(0.0);
    }
    weights[1] += gamma.upper.ln() / mf;
    Ok(FactorialCoeffs {
        weights,
        offset: 0.0,
        kind: FactorialKind::XlogxApprox,
        upper: gamma.upper,
    })
}

/// Falling factorial `(count)_order = count! / (count - order)!`, zero when
/// `order > count`.
pub fn falling_factorial(count: u64, order: usize) -> Result<f64> {
    if order as u64 > count {
        return Ok(0.0);
    }
    let mut acc = 1.0f64;
    for i in 0..order as u64 {
        acc *= (count - i) as f64;
        if !acc.is_finite() {
            return Err(Error::Overflow { count, order });
        }
    }
    Ok(acc)
}

/// `sum_i weights[i] (count)_i + offset`.
pub fn eval_factorial_estimator(fc: &FactorialCoeffs, count: u64) -> Result<f64> {
    let mut total = fc.offset;
    let mut ff = 1.0f64;
    for (order, &w) in fc.weights.iter().enumerate() {
        if order as u64 > count {
            break;
        }
        if order > 0 {
            ff *= (count - (order as u64 - 1)) as f64;
        }
        let term = w * ff;
        if !ff.is_finite() || !term.is_finite() {
            return Err(Error::Overflow { count, order });
        }
        total += term;
    }
    Ok(total)
}
