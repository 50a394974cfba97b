//! Polynomial approximation of `x ln x` and the factorial-moment estimators
//! derived from it.

mod remez;
mod rescale;

pub use remez::{
    chebyshev_grid, chebyshev_to_monomial, clenshaw, coefficient_bound, remez_xlogx,
    remez_xlogx_cached, xlogx, ApproxPolynomial, GRID_POINTS, MAX_DEGREE,
};
pub use rescale::{
    drop_zero_degree, eval_factorial_estimator, falling_factorial, gl_coefficients,
    glprime_coefficients, interval_upper, rescale_gamma, rescale_gamma_wide, rescale_to,
    FactorialCoeffs, FactorialKind, PolyKind, RescaledPoly,
};
