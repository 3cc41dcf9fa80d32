//! Estimation kernels shared by the recovery algorithms: the bias-corrected
//! linear MMSE step, the ternary soft-feedback denoiser, Gaussian extrinsic
//! combining, and the thresholding operators used by the baselines.

use nalgebra::{DMatrix, DVector};

use crate::signal::{top_magnitude_indices, SignalPrior};
use crate::{Error, Result, VARIANCE_FLOOR};

/// Largest f64 strictly below 1. Soft values are clamped into
/// `[-ONE_BELOW, ONE_BELOW]` so the strict bound |x̂| < 1 survives rounding.
const ONE_BELOW: f64 = f64::from_bits(0x3FEF_FFFF_FFFF_FFFF);

/// Effective-precision threshold below which extrinsic combining is treated
/// as carrying no information.
pub const NO_GAIN_EPS: f64 = 1e-12;

/// Variance substituted for the extrinsic output when combining is clamped.
pub const NO_GAIN_VARIANCE: f64 = 1e12;

/// Output of one bias-corrected linear MMSE estimation step.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseStepResult {
    /// Bias-corrected estimate, length L.
    pub x_tilde: DVector<f64>,
    /// Per-element error variances of `x_tilde`, length L, strictly positive.
    pub sigma_e_sq: DVector<f64>,
    /// Diagonal of the estimator cascade, length L, in (0, 1) for positive
    /// noise variance. Retained for diagnostics.
    pub k_diag: DVector<f64>,
}

/// Posterior means and variances produced by the soft-feedback denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResult {
    pub x_hat: DVector<f64>,
    pub sigma_d_sq: DVector<f64>,
}

/// Output of [`extrinsic_combine`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicResult {
    pub x_ext: DVector<f64>,
    pub sigma_ext_sq: f64,
    /// True when the posterior was no sharper than the prior and the output
    /// was clamped; the caller decides whether to stop.
    pub no_gain: bool,
}

/// Linear MMSE estimation of `x` from `y = A·x + n` around the prior mean
/// `x_hat_prior` with per-element prior variances `sigma_d_sq`, followed by
/// removal of the estimator bias.
///
/// The Gram system `(A·Φ·Aᵀ + σ_n²·I)` is factored once per call (Cholesky)
/// and both the estimate and the cascade diagonal are obtained from
/// triangular solves; no matrix is inverted explicitly. Cost is
/// O(K³ + K²·L).
pub fn mmse_step(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    x_hat_prior: &DVector<f64>,
    sigma_d_sq: &DVector<f64>,
    sigma_n_sq: f64,
) -> Result<MmseStepResult> {
    let (k, l) = (a.nrows(), a.ncols());
    if y.len() != k || x_hat_prior.len() != l || sigma_d_sq.len() != l {
        return Err(Error::invalid(format!(
            "dimension mismatch: A is {k}x{l}, y has {}, prior has {}, variances have {}",
            y.len(),
            x_hat_prior.len(),
            sigma_d_sq.len()
        )));
    }
    if !(sigma_n_sq > 0.0) || !sigma_n_sq.is_finite() {
        return Err(Error::invalid("noise variance must be positive and finite"));
    }
    if sigma_d_sq.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid("prior variances must be finite and >= 0"));
    }

    let phi: DVector<f64> = sigma_d_sq.map(|p| p.max(VARIANCE_FLOOR));

    // G = A Phi At + sigma_n^2 I, symmetric positive definite.
    let mut a_phi = a.clone();
    for i in 0..l {
        a_phi.column_mut(i).scale_mut(phi[i]);
    }
    let mut g = &a_phi * a.transpose();
    for j in 0..k {
        g[(j, j)] += sigma_n_sq;
    }
    let chol = nalgebra::linalg::Cholesky::new(g).ok_or_else(|| {
        Error::NumericalBreakdown("Gram system is not positive definite".into())
    })?;
    let lower = chol.l();

    // V = L^-1 A gives the cascade diagonal as scaled column norms, and the
    // same factor maps the residual into the whitened domain.
    let mut v = a.clone();
    if !lower.solve_lower_triangular_mut(&mut v) {
        return Err(Error::NumericalBreakdown(
            "forward substitution failed".into(),
        ));
    }
    let mut w = y - a * x_hat_prior;
    if !lower.solve_lower_triangular_mut(&mut w) {
        return Err(Error::NumericalBreakdown(
            "forward substitution failed".into(),
        ));
    }

    let mut x_tilde = DVector::zeros(l);
    let mut sigma_e_sq = DVector::zeros(l);
    let mut k_diag = DVector::zeros(l);
    for i in 0..l {
        let col = v.column(i);
        let norm_sq = col.norm_squared();
        let k_ii = phi[i] * norm_sq;
        if !(k_ii > 0.0) || !k_ii.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "cascade diagonal {k_ii} at element {i}"
            )));
        }
        // Bias removal scales the update by 1/K_ii; the prior variance
        // cancels out of the estimate itself.
        x_tilde[i] = x_hat_prior[i] + col.dot(&w) / norm_sq;
        sigma_e_sq[i] = (phi[i] * (1.0 - k_ii) / k_ii).max(VARIANCE_FLOOR);
        k_diag[i] = k_ii;
    }

    Ok(MmseStepResult {
        x_tilde,
        sigma_e_sq,
        k_diag,
    })
}

/// Full error correlation matrix of the bias-corrected MMSE estimate,
/// evaluated term by term with an explicit inverse.
///
/// This is the verification oracle for the per-element variance shortcut in
/// [`mmse_step`]; it is never on a hot path.
pub fn full_error_covariance(
    a: &DMatrix<f64>,
    sigma_d_sq: &DVector<f64>,
    sigma_n_sq: f64,
) -> Result<DMatrix<f64>> {
    let (k, l) = (a.nrows(), a.ncols());
    if sigma_d_sq.len() != l {
        return Err(Error::invalid("variance length does not match columns"));
    }
    if !(sigma_n_sq > 0.0) || !sigma_n_sq.is_finite() {
        return Err(Error::invalid("noise variance must be positive and finite"));
    }
    let phi_vec: DVector<f64> = sigma_d_sq.map(|p| p.max(VARIANCE_FLOOR));
    let phi = DMatrix::from_diagonal(&phi_vec);

    let mut g = a * &phi * a.transpose();
    for j in 0..k {
        g[(j, j)] += sigma_n_sq;
    }
    let g_inv = g.try_inverse().ok_or_else(|| {
        Error::NumericalBreakdown("Gram system is not invertible".into())
    })?;

    let k_mat = &phi * a.transpose() * &g_inv * a;
    let mut w_diag = DVector::zeros(l);
    for i in 0..l {
        let k_ii = k_mat[(i, i)];
        if !(k_ii > 0.0) || !k_ii.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "cascade diagonal {k_ii} at element {i}"
            )));
        }
        w_diag[i] = 1.0 / k_ii;
    }
    let w = DMatrix::from_diagonal(&w_diag);

    let wk = &w * &k_mat;
    let phi_ee = &phi + &wk * &phi * w.transpose()
        - &wk * &phi
        - phi.transpose() * k_mat.transpose() * w.transpose();
    Ok(phi_ee)
}

/// Posterior mean and variance of one ternary symbol observed through
/// additive Gaussian noise of variance `sigma_e_sq`.
///
/// Evaluated in a shifted-exponential form: the naive hyperbolic expression
/// overflows once `exp(1/(2σ²))` leaves the f64 range, which already happens
/// at σ² = 0.01 scales. Subtracting the dominant exponent keeps every
/// intermediate in [0, 1] for any positive variance.
pub fn soft_feedback(x_tilde: f64, sigma_e_sq: f64, prior: &SignalPrior) -> Result<(f64, f64)> {
    if !(sigma_e_sq > 0.0) || !sigma_e_sq.is_finite() {
        return Err(Error::invalid("error variance must be positive and finite"));
    }
    if x_tilde.is_nan() {
        return Err(Error::invalid("estimate must not be NaN"));
    }
    let s = prior.sparsity();
    if s == 0 {
        return Ok((0.0, 0.0));
    }
    let l = prior.len();
    let ratio = (l - s) as f64 / s as f64;

    let a = x_tilde / sigma_e_sq;
    if !a.is_finite() {
        // Saturated likelihood: the decision is the sign with certainty.
        return Ok((a.signum() * ONE_BELOW, 0.0));
    }
    // ln of the zero-symbol weight b = ratio * exp(1/(2 sigma^2)); -inf when
    // the prior has no zero mass (s = L), which the shifts absorb.
    let ln_b = 0.5 / sigma_e_sq + ratio.ln();
    let m = a.abs().max(ln_b);

    let e_pos = (a - m).exp();
    let e_neg = (-a - m).exp();
    let e_zero = (ln_b - m).exp();
    // denom = e^-m (cosh a + b) >= 1/2 by choice of m.
    let denom = 0.5 * (e_pos + e_neg) + e_zero;
    let num_mean = 0.5 * (e_pos - e_neg);
    let x_hat = (num_mean / denom).clamp(-ONE_BELOW, ONE_BELOW);

    // var = (1 + b cosh a) / (cosh a + b)^2, shifted by e^-2m throughout.
    let num_var = (-2.0 * m).exp() + e_zero * 0.5 * (e_pos + e_neg);
    let sigma_d_sq = (num_var / (denom * denom)).clamp(0.0, 1.0);
    Ok((x_hat, sigma_d_sq))
}

/// Applies [`soft_feedback`] per element.
pub fn soft_feedback_vec(
    x_tilde: &DVector<f64>,
    sigma_e_sq: &DVector<f64>,
    prior: &SignalPrior,
) -> Result<FeedbackResult> {
    if x_tilde.len() != sigma_e_sq.len() {
        return Err(Error::invalid("estimate and variance lengths differ"));
    }
    let n = x_tilde.len();
    let mut x_hat = DVector::zeros(n);
    let mut sigma_d_sq = DVector::zeros(n);
    for i in 0..n {
        let (mean, var) = soft_feedback(x_tilde[i], sigma_e_sq[i], prior)?;
        x_hat[i] = mean;
        sigma_d_sq[i] = var;
    }
    Ok(FeedbackResult { x_hat, sigma_d_sq })
}

/// Removes the prior information from a posterior under Gaussian combining:
/// precisions subtract and precision-weighted means subtract.
///
/// When the posterior is no sharper than the prior the result would have
/// non-positive precision; the output is then clamped to an effectively
/// uninformative Gaussian around the posterior mean and flagged, so callers
/// can record divergence instead of crashing.
pub fn extrinsic_combine(
    x_post: &DVector<f64>,
    sigma_post_sq: f64,
    x_pri: &DVector<f64>,
    sigma_pri_sq: f64,
) -> Result<ExtrinsicResult> {
    if x_post.len() != x_pri.len() {
        return Err(Error::invalid("posterior and prior lengths differ"));
    }
    if !(sigma_post_sq > 0.0) || !(sigma_pri_sq > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    let precision = 1.0 / sigma_post_sq - 1.0 / sigma_pri_sq;
    if precision <= NO_GAIN_EPS {
        return Ok(ExtrinsicResult {
            x_ext: x_post.clone(),
            sigma_ext_sq: NO_GAIN_VARIANCE,
            no_gain: true,
        });
    }
    let sigma_ext_sq = 1.0 / precision;
    let x_ext = (x_post / sigma_post_sq - x_pri / sigma_pri_sq) * sigma_ext_sq;
    Ok(ExtrinsicResult {
        x_ext,
        sigma_ext_sq,
        no_gain: false,
    })
}

/// Keeps the `s` largest-magnitude entries unchanged and zeroes the rest;
/// magnitude ties go to the lower index.
pub fn threshold_hard(v: &DVector<f64>, s: usize) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for i in top_magnitude_indices(v, s) {
        out[i] = v[i];
    }
    out
}

/// Soft thresholding: shrinks every entry toward zero by `tau`, clipping at
/// zero.
pub fn threshold_soft(v: &DVector<f64>, tau: f64) -> DVector<f64> {
    assert!(tau >= 0.0, "threshold must be non-negative");
    v.map(|x| x.signum() * (x.abs() - tau).max(0.0))
}
