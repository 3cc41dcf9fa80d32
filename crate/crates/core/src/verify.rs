//! Deterministic cross-checks of the fast numerical paths against
//! independent reference implementations. Each check reports the worst
//! deviation it saw; the command-line `verify` subcommand prints them and
//! the integration gate asserts them.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algorithms::{tsr_q, RecoveryConfig, RecoveryTrace};
use crate::estimators::{full_error_covariance, mmse_step, soft_feedback};
use crate::measurement::{apply_channel, MeasurementEnsemble};
use crate::oracles::{mixture_posterior, z_domain_turbo_update};
use crate::signal::{generate_sparse_signal, SignalPrior};
use crate::Result;

/// Result of one equivalence check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Individual comparisons performed.
    pub cases: usize,
    /// Worst absolute deviation observed; infinite if anything was
    /// non-finite or a case failed outright.
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_deviation.is_finite() && self.max_deviation <= self.tolerance
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} over {} cases, max deviation {:.3e} (tolerance {:.0e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.cases,
            self.max_deviation,
            self.tolerance
        )
    }
}

/// Per-element error variances from the triangular-solve path must match
/// the diagonal of the explicitly assembled error covariance.
pub fn check_error_variance_shortcut(seed: u64) -> Result<CheckOutcome> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let cases = 100;
    let mut max_deviation = 0.0f64;
    for _ in 0..cases {
        let k = r.random_range(2..=20);
        let l = r.random_range(2..=20);
        let a = DMatrix::from_fn(k, l, |_, _| StandardNormal.sample(&mut r));
        // Prior variances in (0, 1], noise variance in [1e-3, 1].
        let sigma_d_sq = DVector::from_fn(l, |_, _| 1.0 - r.random::<f64>());
        let sigma_n_sq = r.random_range(1e-3..=1.0);
        let x_hat = DVector::from_fn(l, |_, _| r.random_range(-1.0..=1.0));
        let y = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut r));

        let step = mmse_step(&y, &a, &x_hat, &sigma_d_sq, sigma_n_sq)?;
        let full = full_error_covariance(&a, &sigma_d_sq, sigma_n_sq)?;
        for i in 0..l {
            let d = (step.sigma_e_sq[i] - full[(i, i)]).abs();
            max_deviation = if d.is_finite() {
                max_deviation.max(d)
            } else {
                f64::INFINITY
            };
        }
    }
    Ok(CheckOutcome {
        name: "error variance vs full covariance diagonal",
        cases,
        max_deviation,
        tolerance: 1e-10,
    })
}

/// The closed-form symbol-wise denoiser must match the log-domain
/// mixture-posterior reference on a dense grid, and stay finite and inside
/// its bounds for variances down to 1e-12.
pub fn check_feedback_closed_forms() -> Result<CheckOutcome> {
    let prior = SignalPrior::ternary(258, 20)?;
    let mut max_deviation = 0.0f64;
    let mut cases = 0;

    let grid = 200;
    for i in 0..grid {
        let x_tilde = -5.0 + 10.0 * i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let t = j as f64 / (grid - 1) as f64;
            let sigma_sq = (1e-6f64.ln() + t * (10.0f64.ln() - 1e-6f64.ln())).exp();
            let (mean, var) = soft_feedback(x_tilde, sigma_sq, &prior)?;
            let (mean_ref, var_ref) = mixture_posterior(x_tilde, sigma_sq, &prior);
            let d = (mean - mean_ref).abs().max((var - var_ref).abs());
            max_deviation = if d.is_finite() {
                max_deviation.max(d)
            } else {
                f64::INFINITY
            };
            cases += 1;
        }
    }

    // Finiteness sweep into the hard-decision regime; the reference is not
    // required here, only boundedness of the closed forms.
    for i in 0..50 {
        let x_tilde = -5.0 + 10.0 * i as f64 / 49.0;
        for j in 0..50 {
            let t = j as f64 / 49.0;
            let sigma_sq = (1e-12f64.ln() + t * (1e-6f64.ln() - 1e-12f64.ln())).exp();
            let (mean, var) = soft_feedback(x_tilde, sigma_sq, &prior)?;
            let ok = mean.is_finite() && var.is_finite() && mean.abs() < 1.0 && (0.0..=1.0).contains(&var);
            if !ok {
                max_deviation = f64::INFINITY;
            }
            cases += 1;
        }
    }

    Ok(CheckOutcome {
        name: "soft feedback vs mixture posterior",
        cases,
        max_deviation,
        tolerance: 1e-12,
    })
}

/// With unit column scalings the turbo linear stage must coincide with the
/// update carried out in the orthogonal transform domain.
pub fn check_turbo_transform_equivalence(seed: u64) -> Result<CheckOutcome> {
    let mut max_deviation = 0.0f64;
    let mut cases = 0;
    for instance in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(instance));
        let l = 16;
        let k = 10;
        let g = DMatrix::from_fn(l, l, |_, _| StandardNormal.sample(&mut r));
        let m = g.svd(true, false).u.expect("square SVD");
        let mut rows: Vec<usize> = sample(&mut r, l, k).into_iter().collect();
        rows.sort_unstable();
        let u = DMatrix::from_fn(k, l, |j, i| m[(rows[j], i)]);
        let ensemble = MeasurementEnsemble::from_parts(u, DVector::from_element(l, 1.0))?;

        let prior = SignalPrior::ternary(l, 3)?;
        let x = generate_sparse_signal(&prior, &mut r);
        let sigma_n_sq = 0.01;
        let out = apply_channel(&ensemble, &x, sigma_n_sq, &mut r)?;
        let config = RecoveryConfig {
            collect_trace: true,
            max_iters: 8,
            ..RecoveryConfig::default()
        };
        let res = tsr_q(&out.y, &ensemble, sigma_n_sq, &prior, &config)?;
        let Some(RecoveryTrace::Tsr(entries)) = res.trace else {
            max_deviation = f64::INFINITY;
            continue;
        };
        for entry in &entries {
            let reference = z_domain_turbo_update(
                &m,
                &rows,
                &out.y,
                &entry.x_a_pri,
                entry.sigma_a_pri_sq,
                sigma_n_sq,
            );
            let d = (&entry.x_a_post - reference).amax();
            max_deviation = if d.is_finite() {
                max_deviation.max(d)
            } else {
                f64::INFINITY
            };
            cases += 1;
        }
    }
    Ok(CheckOutcome {
        name: "turbo linear stage vs transform domain",
        cases,
        max_deviation,
        tolerance: 1e-10,
    })
}

/// An identity measurement with unit prior variances must pass the
/// observation straight through: estimate y, error variance the noise
/// variance.
pub fn check_identity_collapse(seed: u64) -> Result<CheckOutcome> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let cases = 10;
    let mut max_deviation = 0.0f64;
    for _ in 0..cases {
        let l = r.random_range(4..=12);
        let ensemble =
            MeasurementEnsemble::from_parts(DMatrix::identity(l, l), DVector::from_element(l, 1.0))?;
        let sigma_n_sq = r.random_range(1e-3..=1.0);
        let y = DVector::from_fn(l, |_, _| StandardNormal.sample(&mut r));
        let x_hat = DVector::from_fn(l, |_, _| r.random_range(-1.0..=1.0));
        let ones = DVector::from_element(l, 1.0);

        let step = mmse_step(&y, ensemble.matrix(), &x_hat, &ones, sigma_n_sq)?;
        for i in 0..l {
            let d = (step.x_tilde[i] - y[i])
                .abs()
                .max((step.sigma_e_sq[i] - sigma_n_sq).abs());
            max_deviation = if d.is_finite() {
                max_deviation.max(d)
            } else {
                f64::INFINITY
            };
        }
    }
    Ok(CheckOutcome {
        name: "identity measurement pass-through",
        cases,
        max_deviation,
        tolerance: 1e-13,
    })
}

/// Runs every check with seeds derived from `seed`.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_error_variance_shortcut(seed)?,
        check_feedback_closed_forms()?,
        check_turbo_transform_equivalence(seed.wrapping_add(1))?,
        check_identity_collapse(seed.wrapping_add(2))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_variance_shortcut_matches() {
        let outcome = check_error_variance_shortcut(11).unwrap();
        assert!(outcome.passed(), "{outcome}");
        assert_eq!(outcome.cases, 100);
    }

    #[test]
    fn feedback_closed_forms_match() {
        let outcome = check_feedback_closed_forms().unwrap();
        assert!(outcome.passed(), "{outcome}");
        assert_eq!(outcome.cases, 200 * 200 + 50 * 50);
    }

    #[test]
    fn turbo_transform_equivalence_holds() {
        let outcome = check_turbo_transform_equivalence(11).unwrap();
        assert!(outcome.passed(), "{outcome}");
        assert!(outcome.cases > 0);
    }

    #[test]
    fn identity_collapse_holds() {
        let outcome = check_identity_collapse(11).unwrap();
        assert!(outcome.passed(), "{outcome}");
    }

    #[test]
    fn run_all_reports_every_check() {
        let outcomes = run_all(3).unwrap();
        assert_eq!(outcomes.len(), 4);
        for outcome in &outcomes {
            assert!(outcome.passed(), "{outcome}");
            assert!(outcome.to_string().contains("PASS"));
        }
    }
}
