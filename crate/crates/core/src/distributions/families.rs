//! Named distribution families: uniform, Zipf, and the extremal pairs used to
//! probe estimator bias and variance.

use super::{BoundedRatioPair, DiscreteDistribution, DistributionPair};
use crate::{Error, Result};

pub fn make_uniform(k: usize) -> Result<DiscreteDistribution> {
    if k == 0 {
        return Err(Error::invalid("alphabet size must be positive"));
    }
    DiscreteDistribution::from_weights(vec![1.0; k])
}

/// `P_i ∝ i^{-alpha}` for `i = 1..=k`.
pub fn make_zipf(k: usize, alpha: f64) -> Result<DiscreteDistribution> {
    if k == 0 {
        return Err(Error::invalid("alphabet size must be positive"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "zipf exponent must be >= 0, got {alpha}"
        )));
    }
    DiscreteDistribution::from_weights((1..=k).map(|i| (i as f64).powf(-alpha)).collect())
}

/// Uniform `P` against `Q = (s/(kf), .., s/(kf), 1 - s(k-1)/(kf))`.
///
/// `spread = 1` is the pair used in the large-alphabet experiments (ratio `f`
/// on all but the last bin); `spread = 10` is the positive-bias extremal pair
/// returned by [`make_worst_case_pair_bias_i`]. The pair is labelled with
/// ratio bound `f`, and construction fails if that bound does not hold.
pub fn make_worst_case_pair(k: usize, f: f64, spread: f64) -> Result<BoundedRatioPair> {
    if k == 0 {
        return Err(Error::invalid("alphabet size must be positive"));
    }
    if !(spread > 0.0) || !(f >= 1.0) {
        return Err(Error::invalid(format!(
            "need spread > 0 and f >= 1, got spread = {spread}, f = {f}"
        )));
    }
    let kf = k as f64;
    let small = spread / (kf * f);
    let last = 1.0 - small * (kf - 1.0);
    if last < 0.0 {
        return Err(Error::invalid(format!(
            "spread {spread} with k = {k}, f = {f} leaves negative mass on the last bin"
        )));
    }
    let mut q = vec![small; k];
    q[k - 1] = last;
    let p = make_uniform(k)?;
    BoundedRatioPair::new(p, DiscreteDistribution::from_weights(q)?, f)
}

/// Uniform `P`, `Q = (10/(kf), .., 10/(kf), 1 - 10(k-1)/(kf))`; valid for `f >= 10`.
pub fn make_worst_case_pair_bias_i(k: usize, f: f64) -> Result<BoundedRatioPair> {
    if !(f >= 10.0) {
        return Err(Error::invalid(format!(
            "construction needs f >= 10, got {f}"
        )));
    }
    make_worst_case_pair(k, f, 10.0)
}

/// `P = (f/(4n), .., 1 - (k-1)f/(4n))`, `Q = (1/(4n), .., 1 - (k-1)/(4n))`;
/// valid for `n >= 10 k f`.
pub fn make_worst_case_pair_bias_ii(k: usize, n: u64, f: f64) -> Result<BoundedRatioPair> {
    let (kf, nf) = (k as f64, n as f64);
    if nf < 10.0 * kf * f {
        return Err(Error::invalid(format!(
            "construction needs n >= 10 k f = {}, got n = {n}",
            10.0 * kf * f
        )));
    }
    make_worst_case_pair_bias_ii_unchecked(k, n, f)
}

/// Same shape as [`make_worst_case_pair_bias_ii`] without the `n >= 10 k f`
/// condition. The probabilities must still be valid and the ratio bound
/// must hold; use it for small-sample analogs of the construction.
pub fn make_worst_case_pair_bias_ii_unchecked(
    k: usize,
    n: u64,
    f: f64,
) -> Result<BoundedRatioPair> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("alphabet and sample size must be positive"));
    }
    if !(f >= 1.0) {
        return Err(Error::invalid(format!("ratio bound must be >= 1, got {f}")));
    }
    let (kf, nf) = (k as f64, n as f64);
    let last_p = 1.0 - (kf - 1.0) * f / (4.0 * nf);
    if last_p < 0.0 {
        return Err(Error::invalid(format!(
            "k = {k}, n = {n}, f = {f} leaves negative mass on the last bin"
        )));
    }
    let mut p = vec![f / (4.0 * nf); k];
    p[k - 1] = last_p;
    let mut q = vec![1.0 / (4.0 * nf); k];
    q[k - 1] = 1.0 - (kf - 1.0) / (4.0 * nf);
    BoundedRatioPair::new(
        DiscreteDistribution::from_weights(p)?,
        DiscreteDistribution::from_weights(q)?,
        f,
    )
}

/// Two pairs sharing `Q` whose `P` differ by an `eps = 1/sqrt(m)`
/// perturbation of the bulk mass:
///
/// `P1 = (1/(3(k-1)), .., 2/3)`, `P2 = ((1-eps)/(3(k-1)), .., (2+eps)/3)`,
/// `Q = (1/(3(k-1)f), .., 1 - 1/(3f))`.
pub fn make_twopoint_variance_m(
    k: usize,
    f: f64,
    m: u64,
) -> Result<(BoundedRatioPair, BoundedRatioPair)> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "construction needs k >= 2, got {k}"
        )));
    }
    if m < 9 {
        return Err(Error::invalid(format!(
            "construction needs m >= 9, got {m}"
        )));
    }
    if !(f >= 1.0) {
        return Err(Error::invalid(format!("ratio bound must be >= 1, got {f}")));
    }
    let eps = 1.0 / (m as f64).sqrt();
    let km1 = (k - 1) as f64;
    let with_last = |body: f64, last: f64| {
        let mut v = vec![body; k];
        v[k - 1] = last;
        DiscreteDistribution::from_weights(v)
    };
    let p1 = with_last(1.0 / (3.0 * km1), 2.0 / 3.0)?;
    let p2 = with_last((1.0 - eps) / (3.0 * km1), (2.0 + eps) / 3.0)?;
    let q = with_last(1.0 / (3.0 * km1 * f), 1.0 - 1.0 / (3.0 * f))?;
    Ok((
        BoundedRatioPair::new(p1, q.clone(), f)?,
        BoundedRatioPair::new(p2, q, f)?,
    ))
}

/// Two pairs sharing `P` whose `Q` differ by an alternating
/// `eps = sqrt(f/n)` perturbation:
///
/// `P = (1/(3(k-1)), 0, 1/(3(k-1)), 0, .., 5/6)`,
/// `Q1 = (1/(2(k-1)f), .., 1 - 1/(2f))`,
/// `Q2 = ((1-eps)/(2(k-1)f), (1+eps)/(2(k-1)f), .., 1 - 1/(2f))`.
///
/// Requires `k - 1` even and `eps < 1/3`.
pub fn make_twopoint_variance_n(
    k: usize,
    f: f64,
    n: u64,
) -> Result<(BoundedRatioPair, BoundedRatioPair)> {
    if k < 3 || !(k - 1).is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "construction needs k >= 3 with k - 1 even, got k = {k}"
        )));
    }
    if !(f >= 1.0) {
        return Err(Error::invalid(format!("ratio bound must be >= 1, got {f}")));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let eps = (f / n as f64).sqrt();
    if !(eps < 1.0 / 3.0) {
        return Err(Error::invalid(format!(
            "perturbation sqrt(f/n) = {eps} must be < 1/3"
        )));
    }
    let km1 = (k - 1) as f64;
    let mut p = vec![0.0; k];
    let mut q1 = vec![1.0 / (2.0 * km1 * f); k];
    let mut q2 = vec![0.0; k];
    for i in 0..k - 1 {
        if i % 2 == 0 {
            p[i] = 1.0 / (3.0 * km1);
            q2[i] = (1.0 - eps) / (2.0 * km1 * f);
        } else {
            q2[i] = (1.0 + eps) / (2.0 * km1 * f);
        }
    }
    p[k - 1] = 5.0 / 6.0;
    q1[k - 1] = 1.0 - 1.0 / (2.0 * f);
    q2[k - 1] = 1.0 - 1.0 / (2.0 * f);
    let p = DiscreteDistribution::from_weights(p)?;
    Ok((
        BoundedRatioPair::new(p.clone(), DiscreteDistribution::from_weights(q1)?, f)?,
        BoundedRatioPair::new(p, DiscreteDistribution::from_weights(q2)?, f)?,
    ))
}

/// Binary pairs with identical `P = (1/2, 1/2)` and
/// `Q1 = (e^{-s}, 1 - e^{-s})`, `Q2 = (1/(2s), 1 - 1/(2s))`.
///
/// The two `Q` become indistinguishable while the divergences separate as
/// `s` grows, so no ratio bound is attached.
pub fn make_inconsistency_pair(s: f64) -> Result<(DistributionPair, DistributionPair)> {
    if !(s > 0.5) || !s.is_finite() {
        return Err(Error::invalid(format!(
            "construction needs s > 1/2, got {s}"
        )));
    }
    let p = DiscreteDistribution::new(vec![0.5, 0.5])?;
    let e = (-s).exp();
    let q1 = DiscreteDistribution::from_weights(vec![e, 1.0 - e])?;
    let h = 1.0 / (2.0 * s);
    let q2 = DiscreteDistribution::from_weights(vec![h, 1.0 - h])?;
    Ok((
        DistributionPair::new(p.clone(), q1)?,
        DistributionPair::new(p, q2)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{density_ratio_max, kl_divergence, SUM_TOLERANCE};
    use approx::assert_relative_eq;

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol, "{actual:?} vs {expected:?}");
        }
    }

    fn check_sum(d: &DiscreteDistribution) {
        let s: f64 = d.probs().iter().sum();
        assert!((s - 1.0).abs() <= SUM_TOLERANCE);
    }

    #[test]
    fn uniform() {
        assert_eq!(make_uniform(1).unwrap().probs(), &[1.0]);
        assert_eq!(make_uniform(4).unwrap().probs(), &[0.25; 4]);
        check_sum(&make_uniform(3).unwrap());
        assert!(make_uniform(0).is_err());
    }

    #[test]
    fn zipf() {
        let z = make_zipf(3, 1.0).unwrap();
        assert_close(z.probs(), &[6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0], 1e-15);
        assert_close(make_zipf(5, 0.0).unwrap().probs(), &[0.2; 5], 1e-15);
        assert_close(
            make_zipf(2, 1.0).unwrap().probs(),
            &[2.0 / 3.0, 1.0 / 3.0],
            1e-15,
        );
        assert!(make_zipf(0, 1.0).is_err());
        assert!(make_zipf(3, -1.0).is_err());
    }

    #[test]
    fn bias_i_pair() {
        let eq = make_worst_case_pair_bias_i(10, 10.0).unwrap();
        assert_close(eq.q().probs(), &[0.1; 10], 1e-15);
        assert!(eq.divergence().abs() < 1e-15);

        let pair = make_worst_case_pair_bias_i(10, 20.0).unwrap();
        let mut q = vec![0.05; 10];
        q[9] = 0.55;
        assert_close(pair.q().probs(), &q, 1e-15);
        let expected = 0.9 * 2f64.ln() + 0.1 * (0.1f64 / 0.55).ln();
        assert_relative_eq!(pair.divergence(), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 0.453357, epsilon = 1e-6);
        assert!(density_ratio_max(pair.p(), pair.q()).unwrap() <= 20.0);

        assert!(make_worst_case_pair_bias_i(10, 9.99).is_err());
    }

    #[test]
    fn experiment_pair_has_ratio_f() {
        let pair = make_worst_case_pair(1000, 5.0, 1.0).unwrap();
        assert_relative_eq!(
            density_ratio_max(pair.p(), pair.q()).unwrap(),
            5.0,
            max_relative = 1e-12
        );
        assert!(make_worst_case_pair(10, 1.0, 10.0).is_err());
    }

    #[test]
    fn bias_ii_pair() {
        let pair = make_worst_case_pair_bias_ii(3, 120, 4.0).unwrap();
        assert_relative_eq!(
            pair.p().probs()[0] / pair.q().probs()[0],
            4.0,
            max_relative = 1e-14
        );
        // n = 100 < 10 k f = 120 is outside the validity range
        assert!(make_worst_case_pair_bias_ii(3, 100, 4.0).is_err());
        let same = make_worst_case_pair_bias_ii(4, 1000, 1.0).unwrap();
        assert_eq!(same.p(), same.q());
        assert_eq!(same.divergence(), 0.0);
    }

    #[test]
    fn bias_ii_substitution_values() {
        // k = 3, n = 100, f = 4 sits below the validity threshold 10 k f = 120
        let pair = make_worst_case_pair_bias_ii_unchecked(3, 100, 4.0).unwrap();
        assert_close(pair.p().probs(), &[0.01, 0.01, 0.98], 1e-15);
        assert_close(pair.q().probs(), &[0.0025, 0.0025, 0.995], 1e-15);
        assert_relative_eq!(
            pair.p().probs()[0] / pair.q().probs()[0],
            4.0,
            max_relative = 1e-14
        );
        assert!(make_worst_case_pair_bias_ii_unchecked(3, 1, 4.0).is_err());
    }

    #[test]
    fn twopoint_m() {
        let (a, b) = make_twopoint_variance_m(3, 5.0, 100).unwrap();
        assert_close(b.p().probs(), &[0.15, 0.15, 0.7], 1e-15);
        assert_eq!(a.q(), b.q());
        for pair in [&a, &b] {
            assert!(density_ratio_max(pair.p(), pair.q()).unwrap() <= 5.0 * (1.0 + 1e-12));
        }
        let (a, b) = make_twopoint_variance_m(4, 5.0, u64::MAX).unwrap();
        assert_close(a.p().probs(), b.p().probs(), 1e-9);
        assert!(make_twopoint_variance_m(1, 5.0, 100).is_err());
        assert!(make_twopoint_variance_m(3, 5.0, 8).is_err());
    }

    #[test]
    fn twopoint_n() {
        let (a, b) = make_twopoint_variance_n(5, 4.0, 400).unwrap();
        assert_eq!(a.p(), b.p());
        let d = kl_divergence(a.q(), b.q()).unwrap();
        let closed = (1.0 / 16.0) * (1.0 / (1.0 - 0.01f64)).ln();
        assert_relative_eq!(d, closed, max_relative = 1e-10);
        assert_relative_eq!(d, 0.000628, epsilon = 1e-6);
        assert!(d < 1.0 / 400.0);
        for pair in [&a, &b] {
            assert!(density_ratio_max(pair.p(), pair.q()).unwrap() <= 4.0 * (1.0 + 1e-12));
        }
        let (a, b) = make_twopoint_variance_n(5, 4.0, u64::MAX).unwrap();
        assert_close(a.q().probs(), b.q().probs(), 1e-9);
        // eps = sqrt(4/36) = 1/3 is rejected
        assert!(make_twopoint_variance_n(5, 4.0, 36).is_err());
        assert!(make_twopoint_variance_n(4, 4.0, 400).is_err());
    }

    #[test]
    fn twopoint_n_closed_form_below_one_over_n() {
        for &(k, f, n) in &[
            (3usize, 2.0, 19u64),
            (7, 10.0, 91),
            (21, 4.0, 1000),
            (5, 50.0, 451),
        ] {
            let (a, b) = make_twopoint_variance_n(k, f, n).unwrap();
            let d = kl_divergence(a.q(), b.q()).unwrap();
            assert!(d < 1.0 / n as f64, "k={k} f={f} n={n}: {d}");
        }
    }

    #[test]
    fn inconsistency() {
        let (a, b) = make_inconsistency_pair(1.0).unwrap();
        assert_close(a.q.probs(), &[(-1f64).exp(), 1.0 - (-1f64).exp()], 1e-15);
        assert_close(a.q.probs(), &[0.367879, 0.632121], 1e-6);
        assert_close(b.q.probs(), &[0.5, 0.5], 1e-15);
        assert_eq!(a.p.probs(), &[0.5, 0.5]);
        assert_eq!(b.p.probs(), &[0.5, 0.5]);

        let gap = |s: f64| {
            let (a, b) = make_inconsistency_pair(s).unwrap();
            a.divergence() - b.divergence()
        };
        let gaps: Vec<f64> = [5.0, 10.0, 20.0].iter().map(|&s| gap(s)).collect();
        assert!(gaps[0] > 0.0);
        assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
        assert!(make_inconsistency_pair(0.5).is_err());
    }

    #[test]
    fn constructors_sum_to_one() {
        let pairs = [
            make_worst_case_pair_bias_i(37, 13.0).unwrap(),
            make_worst_case_pair(999, 5.0, 1.0).unwrap(),
            make_worst_case_pair_bias_ii(17, 10_000, 7.0).unwrap(),
            make_twopoint_variance_m(11, 3.0, 50).unwrap().1,
            make_twopoint_variance_n(11, 3.0, 500).unwrap().1,
        ];
        for pair in &pairs {
            check_sum(pair.p());
            check_sum(pair.q());
            let r = density_ratio_max(pair.p(), pair.q()).unwrap();
            assert!(r <= pair.ratio_bound() * (1.0 + 1e-12));
        }
        check_sum(&make_zipf(1000, 1.3).unwrap());
    }
}
