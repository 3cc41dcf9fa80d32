//! Independent reference implementations used by the test suites to
//! cross-check the production kernels.
//!
//! Everything here favors literal textbook evaluation over speed: explicit
//! inverses, direct mixture sums, explicit transform-domain round trips.
//! None of it runs on a recovery path.

use nalgebra::{DMatrix, DVector};

use crate::signal::SignalPrior;

/// Posterior mean and variance of a ternary symbol from the raw
/// three-component Gaussian mixture, evaluated as shifted log-weights.
///
/// This is the un-simplified posterior the closed hyperbolic forms are
/// derived from, so it serves as their oracle. The only concession to
/// floating point is subtracting the largest log-weight before
/// exponentiation, which is algebraically neutral.
pub fn mixture_posterior(x_tilde: f64, sigma_sq: f64, prior: &SignalPrior) -> (f64, f64) {
    let s = prior.sparsity() as f64;
    let l = prior.len() as f64;
    if prior.sparsity() == 0 {
        return (0.0, 0.0);
    }
    let half = 0.5 / sigma_sq;
    // Unnormalized log posterior weights of the symbols +1, -1, 0.
    let lw_plus = (s / 2.0).ln() - (x_tilde - 1.0) * (x_tilde - 1.0) * half;
    let lw_minus = (s / 2.0).ln() - (x_tilde + 1.0) * (x_tilde + 1.0) * half;
    let lw_zero = (l - s).ln() - x_tilde * x_tilde * half;
    let m = lw_plus.max(lw_minus).max(lw_zero);
    let w_plus = (lw_plus - m).exp();
    let w_minus = (lw_minus - m).exp();
    let w_zero = (lw_zero - m).exp();
    let total = w_plus + w_minus + w_zero;
    let mean = (w_plus - w_minus) / total;
    let second_moment = (w_plus + w_minus) / total;
    (mean, second_moment - mean * mean)
}

/// Bias-corrected linear MMSE estimate evaluated literally with an explicit
/// Gram inverse. Returns the estimate and the cascade diagonal.
pub fn dense_unbiased_estimate(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    x_hat_prior: &DVector<f64>,
    sigma_d_sq: &DVector<f64>,
    sigma_n_sq: f64,
) -> (DVector<f64>, DVector<f64>) {
    let (k, l) = (a.nrows(), a.ncols());
    let phi = DMatrix::from_diagonal(sigma_d_sq);
    let mut g = a * &phi * a.transpose();
    for j in 0..k {
        g[(j, j)] += sigma_n_sq;
    }
    let g_inv = g.try_inverse().expect("oracle Gram system must be invertible");
    let b = &phi * a.transpose() * &g_inv;
    let k_mat = &b * a;
    let correction = &b * (y - a * x_hat_prior);
    let mut x_tilde = DVector::zeros(l);
    let mut k_diag = DVector::zeros(l);
    for i in 0..l {
        k_diag[i] = k_mat[(i, i)];
        x_tilde[i] = x_hat_prior[i] + correction[i] / k_mat[(i, i)];
    }
    (x_tilde, k_diag)
}

/// One turbo estimation update carried out in the transform domain and
/// mapped back.
///
/// With unit column scaling the auxiliary variable is the orthogonal
/// transform of the signal, the channel only sees selected entries of it,
/// and the update is a scaled residual scatter. Used to confirm that the
/// direct update is the same linear map.
pub fn z_domain_turbo_update(
    m: &DMatrix<f64>,
    rows: &[usize],
    y: &DVector<f64>,
    x_pri: &DVector<f64>,
    sigma_pri_sq: f64,
    sigma_n_sq: f64,
) -> DVector<f64> {
    let z_pri = m * x_pri;
    // Selected entries of z, as the selection matrix would produce.
    let mut residual = y.clone();
    for (j, &row) in rows.iter().enumerate() {
        residual[j] -= z_pri[row];
    }
    let gain = sigma_pri_sq / (sigma_pri_sq + sigma_n_sq);
    let mut z_post = z_pri;
    for (j, &row) in rows.iter().enumerate() {
        z_post[row] += gain * residual[j];
    }
    m.transpose() * z_post
}
