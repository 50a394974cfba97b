//! Best uniform polynomial approximation of `x ln x` on `[0, 1]`.
//!
//! The leveled-error systems are solved in the Chebyshev basis of `t = 2x - 1`
//! and only converted to monomials once the iteration has converged. Residual
//! extrema are located on a Chebyshev-clustered grid and polished with a
//! golden-section search, because `x ln x` has an unbounded derivative at 0.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Grid size used to locate residual extrema and certify the sup error.
pub const GRID_POINTS: usize = 100_000;
pub const MAX_DEGREE: usize = 64;
const MAX_ITERATIONS: usize = 100;
const CONVERGENCE_GAP: f64 = 1e-10;
/// Once the level gap is this small, rounding noise can keep it from reaching
/// `CONVERGENCE_GAP`; the iteration then stops when it no longer improves.
const STALL_GAP: f64 = 1e-8;
const STALL_ROUNDS: usize = 4;

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Evaluates `sum_j c_j T_j(t)` by Clenshaw's recurrence.
pub fn clenshaw(cheb: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in cheb.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + cheb.first().copied().unwrap_or(0.0)
}

/// `n` points on `[0, 1]` clustered like Chebyshev extrema:
/// `x_g = (1 - cos(pi g / (n - 1))) / 2`.
pub fn chebyshev_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let last = (n - 1) as f64;
    (0..n)
        .map(|g| {
            if g == 0 {
                0.0
            } else if g == n - 1 {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * g as f64 / last).cos())
            }
        })
        .collect()
}

/// Monomial coefficients (in `x`) of `sum_j c_j T_j(2x - 1)`.
pub fn chebyshev_to_monomial(cheb: &[f64]) -> Vec<f64> {
    let n = cheb.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let mut prev = vec![1.0];
    out[0] += cheb[0];
    if n == 1 {
        return out;
    }
    let mut cur = vec![-1.0, 2.0];
    for (i, &c) in cur.iter().enumerate() {
        out[i] += cheb[1] * c;
    }
    for &cj in &cheb[2..] {
        // T_{j+1} = 2 (2x - 1) T_j - T_{j-1}
        let mut next = vec![0.0; cur.len() + 1];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += 4.0 * c;
            next[i] -= 2.0 * c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= c;
        }
        for (i, &c) in next.iter().enumerate() {
            out[i] += cj * c;
        }
        prev = cur;
        cur = next;
    }
    out
}

/// A best uniform approximation of `x ln x` on its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxPolynomial {
    coeffs: Vec<f64>,
    cheb: Vec<f64>,
    interval: (f64, f64),
    sup_error: f64,
    extrema: Vec<f64>,
    iterations: usize,
}

impl ApproxPolynomial {
    /// Monomial coefficients `a_0..a_L` in ascending degree.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Chebyshev coefficients in the variable mapped to `[-1, 1]`.
    pub fn chebyshev_coeffs(&self) -> &[f64] {
        &self.cheb
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Certified `max |p(x) - x ln x|` over the dense grid and the polished
    /// extrema.
    pub fn sup_error(&self) -> f64 {
        self.sup_error
    }

    /// The `L + 2` alternation points of the final residual.
    pub fn extrema(&self) -> &[f64] {
        &self.extrema
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn to_unit(&self, x: f64) -> f64 {
        let (lo, hi) = self.interval;
        2.0 * (x - lo) / (hi - lo) - 1.0
    }

    /// Evaluates the polynomial through its Chebyshev representation.
    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.cheb, self.to_unit(x))
    }

    /// Evaluates the monomial form by Horner's rule. Loses accuracy at high
    /// degree; kept as an independent route for cross-checks.
    pub fn eval_monomial(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn residual(&self, x: f64) -> f64 {
        self.eval(x) - xlogx(x)
    }
}

/// Magnitude bound `2 e^{-1} 2^{3L}` on the monomial coefficients of the
/// degree-`L` best approximation.
pub fn coefficient_bound(degree: usize) -> f64 {
    2.0 * (-1f64).exp() * 2f64.powi(3 * degree as i32)
}

fn solve_leveled(reference: &[f64], degree: usize) -> Result<(Vec<f64>, f64)> {
    let n = degree + 2;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, &x) in reference.iter().enumerate() {
        let t = 2.0 * x - 1.0;
        let (mut t0, mut t1) = (1.0, t);
        a[(i, 0)] = 1.0;
        if degree >= 1 {
            a[(i, 1)] = t;
        }
        for j in 2..=degree {
            let t2 = 2.0 * t * t1 - t0;
            a[(i, j)] = t2;
            t0 = t1;
            t1 = t2;
        }
        a[(i, degree + 1)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        rhs[i] = xlogx(x);
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("singular leveled-error system"))?;
    let cheb = sol.as_slice()[..=degree].to_vec();
    Ok((cheb, sol[degree + 1]))
}

/// Maximizes `sign * r(x)` on `[lo, hi]` by golden-section search.
fn golden_max(r: &impl Fn(f64) -> f64, sign: f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = sign * r(x1);
    let mut f2 = sign * r(x2);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = sign * r(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = sign * r(x1);
        }
    }
    if f1 > f2 {
        (x1, sign * f1)
    } else {
        (x2, sign * f2)
    }
}

/// One signed extremum per maximal run of constant residual sign, polished
/// with golden-section search inside the neighbouring grid cells.
fn alternating_extrema(grid: &[f64], r: &impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let values: Vec<f64> = grid.iter().map(|&x| r(x)).collect();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut run_start = 0;
    let sign_of = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    for g in 1..=grid.len() {
        let run_ends = g == grid.len() || sign_of(values[g]) != sign_of(values[run_start]);
        if !run_ends {
            continue;
        }
        let sign = sign_of(values[run_start]);
        let best = (run_start..g)
            .max_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()))
            .expect("non-empty run");
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(grid.len() - 1)];
        let (mut x, mut v) = (grid[best], values[best]);
        if hi > lo {
            let (gx, gv) = golden_max(r, sign, lo, hi);
            if sign * gv > sign * v {
                x = gx;
                v = gv;
            }
        }
        out.push((x, v));
        run_start = g;
    }
    out
}

/// Degree-`degree` best uniform approximation of `x ln x` on `[0, 1]`.
///
/// Multi-point Remez exchange started from the `L + 2` Chebyshev extrema.
/// Converges when `(max |r| - |E|) / |E| < 1e-10`, where `E` is the leveled
/// error; if rounding noise holds the gap above that but below `1e-8` for
/// several rounds the current iterate is accepted.
pub fn remez_xlogx(degree: usize) -> Result<ApproxPolynomial> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::invalid(format!(
            "degree must be in 1..={MAX_DEGREE}, got {degree}"
        )));
    }
    let grid = chebyshev_grid(GRID_POINTS);
    let npts = degree + 2;
    let mut reference: Vec<f64> = chebyshev_grid(npts);
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0;
    let mut last: Option<ApproxPolynomial> = None;

    for iteration in 1..=MAX_ITERATIONS {
        let (cheb, level) = solve_leveled(&reference, degree)?;
        let r = |x: f64| clenshaw(&cheb, 2.0 * x - 1.0) - xlogx(x);
        let mut ext = alternating_extrema(&grid, &r);
        while ext.len() > npts {
            let (first, last) = (ext[0].1.abs(), ext[ext.len() - 1].1.abs());
            if first < last {
                ext.remove(0);
            } else {
                ext.pop();
            }
        }
        if ext.len() < npts {
            return Err(Error::invalid(format!(
                "residual shows only {} alternations at degree {degree}",
                ext.len()
            )));
        }
        let max_abs = ext.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        let level = level.abs();
        let gap = (max_abs - level) / level;

        let current = ApproxPolynomial {
            coeffs: chebyshev_to_monomial(&cheb),
            cheb: cheb.clone(),
            interval: (0.0, 1.0),
            sup_error: max_abs,
            extrema: ext.iter().map(|e| e.0).collect(),
            iterations: iteration,
        };

        if gap < best_gap * 0.5 {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best_gap = best_gap.min(gap);

        if gap < CONVERGENCE_GAP || (gap < STALL_GAP && stalled >= STALL_ROUNDS) {
            check_coefficients(&current)?;
            return Ok(current);
        }
        reference = current.extrema.clone();
        last = Some(current);
    }
    let last = last.expect("at least one iteration ran");
    Err(Error::ConvergenceFailure {
        iterations: MAX_ITERATIONS,
        relative_gap: (last.sup_error - level_of(&last)) / level_of(&last),
        last: Box::new(last),
    })
}

fn level_of(p: &ApproxPolynomial) -> f64 {
    p.extrema
        .iter()
        .map(|&x| p.residual(x).abs())
        .fold(f64::INFINITY, f64::min)
}

fn check_coefficients(p: &ApproxPolynomial) -> Result<()> {
    let bound = coefficient_bound(p.degree());
    match p.coeffs.iter().enumerate().find(|(_, c)| c.abs() > bound) {
        Some((index, &value)) => Err(Error::CoefficientBound {
            index,
            value,
            bound,
        }),
        None => Ok(()),
    }
}

fn cache() -> &'static RwLock<HashMap<usize, Arc<ApproxPolynomial>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<ApproxPolynomial>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`remez_xlogx`] memoized per degree for the lifetime of the process.
pub fn remez_xlogx_cached(degree: usize) -> Result<Arc<ApproxPolynomial>> {
    if let Some(hit) = cache().read().expect("cache lock").get(&degree) {
        return Ok(Arc::clone(hit));
    }
    let fresh = Arc::new(remez_xlogx(degree)?);
    let mut guard = cache().write().expect("cache lock");
    Ok(Arc::clone(guard.entry(degree).or_insert(fresh)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clenshaw_matches_definition() {
        let cheb = [0.5, -1.0, 0.25, 2.0];
        for &t in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            let direct = 0.5 - t + 0.25 * (2.0 * t * t - 1.0) + 2.0 * (4.0 * t * t * t - 3.0 * t);
            assert!((clenshaw(&cheb, t) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn monomial_conversion_agrees_with_clenshaw() {
        let cheb = [0.3, -0.2, 0.1, 0.05, -0.01, 0.002];
        let mono = chebyshev_to_monomial(&cheb);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let h = mono.iter().rev().fold(0.0, |acc, &c| acc * x + c);
            assert!((h - clenshaw(&cheb, 2.0 * x - 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn degree_one_closed_form() {
        let p = remez_xlogx(1).unwrap();
        let half_inv_e = 0.5 * (-1f64).exp();
        assert!(
            (p.coeffs()[0] + half_inv_e).abs() < 1e-9,
            "{:?}",
            p.coeffs()
        );
        assert!(p.coeffs()[1].abs() < 1e-9);
        assert!((p.sup_error() - half_inv_e).abs() < 1e-9);
        // alternation at {0, 1/e, 1}
        let ext = p.extrema();
        assert_eq!(ext.len(), 3);
        assert!(ext[0].abs() < 1e-12 && (ext[2] - 1.0).abs() < 1e-12);
        assert!((ext[1] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn endpoint_residual_within_sup_error() {
        for l in [1, 2, 5, 9, 13] {
            let p = remez_xlogx(l).unwrap();
            assert!(p.coeffs()[0].abs() <= p.sup_error() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_bad_degree() {
        assert!(remez_xlogx(0).is_err());
        assert!(remez_xlogx(MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn cached_is_shared() {
        let a = remez_xlogx_cached(3).unwrap();
        let b = remez_xlogx_cached(3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
