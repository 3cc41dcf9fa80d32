//! Baseline recovery algorithms: iterative hard/soft thresholding on the
//! residual correlation, and orthogonal matching pursuit, each with a final
//! quantization onto the ternary alphabet.

use nalgebra::{DMatrix, DVector};

use crate::estimators::{threshold_hard, threshold_soft};
use crate::signal::{quantize_elementwise, quantize_sparsity_matched, SignalPrior, SparseSignal};
use crate::{Error, Result};

use super::{require_ternary, RecoveryConfig, RecoveryResult};

fn check_dims(y: &DVector<f64>, a: &DMatrix<f64>, prior: &SignalPrior) -> Result<()> {
    require_ternary(prior)?;
    if y.len() != a.nrows() {
        return Err(Error::invalid("observation length does not match matrix"));
    }
    if prior.len() != a.ncols() {
        return Err(Error::invalid("prior length does not match matrix"));
    }
    Ok(())
}

/// Landweber-style iteration shared by the thresholding baselines: a
/// residual-correlation update followed by the given thresholding. Stops
/// early (flagged) if the iterate leaves the finite range, keeping the last
/// finite iterate.
fn thresholding_loop<F>(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    max_iters: usize,
    threshold: F,
) -> (DVector<f64>, usize, bool)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = DVector::zeros(a.ncols());
    let mut iters_run = 0;
    for _ in 0..max_iters {
        let step = threshold(&(&x + a.transpose() * (y - a * &x)));
        if step.iter().any(|v| !v.is_finite()) {
            return (x, iters_run, true);
        }
        x = step;
        iters_run += 1;
    }
    (x, iters_run, false)
}

/// Iterative hard thresholding: keeps the `s` strongest entries of the
/// residual-correlation update each round, with a final elementwise
/// quantization.
pub fn iht_q(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    prior: &SignalPrior,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    check_dims(y, a, prior)?;
    let s = prior.sparsity();
    let (x, iters_run, diverged) =
        thresholding_loop(y, a, config.max_iters, |v| threshold_hard(v, s));
    Ok(RecoveryResult {
        x_hat_discrete: SparseSignal::from_vector(quantize_elementwise(&x, prior.alphabet()))?,
        x_soft_final: x,
        iters_run,
        diverged,
        trace: None,
    })
}

/// Iterative soft thresholding with shrinkage `config.ist_tau`. Soft
/// thresholding does not control the support size, so the final
/// quantization is sparsity-matched.
pub fn ist_q(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    prior: &SignalPrior,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    check_dims(y, a, prior)?;
    let tau = config
        .ist_tau
        .ok_or_else(|| Error::invalid("soft thresholding requires ist_tau"))?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("ist_tau must be finite and >= 0"));
    }
    let (x, iters_run, diverged) =
        thresholding_loop(y, a, config.max_iters, |v| threshold_soft(v, tau));
    Ok(RecoveryResult {
        x_hat_discrete: quantize_sparsity_matched(&x, prior.sparsity())?,
        x_soft_final: x,
        iters_run,
        diverged,
        trace: None,
    })
}

/// Orthogonal matching pursuit: greedily selects the column most correlated
/// with the residual and re-fits least squares on the selected support,
/// for `config.omp_iters` steps.
///
/// Quantization maps the support coefficients to their nearest symbols,
/// then keeps only the `s` strongest if more survived; entries are never
/// promoted to reach `s`. A rank-deficient refit stops the loop early with
/// the flag set.
pub fn omp_q(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    prior: &SignalPrior,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    check_dims(y, a, prior)?;
    let steps = config
        .omp_iters
        .ok_or_else(|| Error::invalid("matching pursuit requires omp_iters"))?;
    let l = a.ncols();
    let mut support: Vec<usize> = Vec::new();
    let mut selected = vec![false; l];
    let mut coeffs = DVector::zeros(0);
    let mut residual = y.clone();
    let mut diverged = false;
    let mut iters_run = 0;

    for _ in 0..steps.min(l) {
        let corr = a.transpose() * &residual;
        let mut best_idx = None;
        let mut best_val = -1.0;
        for i in 0..l {
            if !selected[i] && corr[i].abs() > best_val {
                best_val = corr[i].abs();
                best_idx = Some(i);
            }
        }
        let Some(pick) = best_idx else { break };

        let mut sub = DMatrix::zeros(a.nrows(), support.len() + 1);
        for (j, &col) in support.iter().enumerate() {
            sub.set_column(j, &a.column(col));
        }
        sub.set_column(support.len(), &a.column(pick));
        let gram = sub.transpose() * &sub;
        let Some(chol) = nalgebra::linalg::Cholesky::new(gram) else {
            // The candidate column is linearly dependent on the selection.
            diverged = true;
            break;
        };
        let refit = chol.solve(&(sub.transpose() * y));
        if refit.iter().any(|v| !v.is_finite()) {
            // A zero pivot can survive factorization as infinities.
            diverged = true;
            break;
        }
        support.push(pick);
        selected[pick] = true;
        coeffs = refit;
        residual = y - &sub * &coeffs;
        iters_run += 1;
    }

    let mut x = DVector::zeros(l);
    for (j, &col) in support.iter().enumerate() {
        x[col] = coeffs[j];
    }

    let mut discrete = quantize_elementwise(&x, prior.alphabet());
    let mut nonzero: Vec<usize> = (0..l).filter(|&i| discrete[i] != 0.0).collect();
    if nonzero.len() > prior.sparsity() {
        // Keep the strongest coefficients, judged on the soft values.
        nonzero.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
        for &i in nonzero.iter().skip(prior.sparsity()) {
            discrete[i] = 0.0;
        }
    }

    Ok(RecoveryResult {
        x_hat_discrete: SparseSignal::from_vector(discrete)?,
        x_soft_final: x,
        iters_run,
        diverged,
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{apply_channel, build_svd_ensemble};
    use crate::signal::generate_sparse_signal;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    // --- hard thresholding ---

    #[test]
    fn iht_true_signal_is_a_fixed_point() {
        // Noiseless observation of an s-sparse signal: the residual is zero,
        // so one update maps the signal to itself.
        let mut r = rng(1);
        let ensemble = build_svd_ensemble(8, 12, &mut r).unwrap();
        let prior = SignalPrior::ternary(12, 3).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let a = ensemble.matrix();
        let y = a * x.values();
        let update = x.values() + a.transpose() * (&y - a * x.values());
        assert_eq!(threshold_hard(&update, 3), *x.values());
    }

    #[test]
    fn iht_first_iterate_matches_direct_evaluation() {
        let mut r = rng(11);
        let ensemble = build_svd_ensemble(8, 12, &mut r).unwrap();
        let prior = SignalPrior::ternary(12, 3).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
        let config = RecoveryConfig {
            max_iters: 1,
            ..RecoveryConfig::default()
        };
        let res = iht_q(&out.y, ensemble.matrix(), &prior, &config).unwrap();
        let first = threshold_hard(&(ensemble.matrix().transpose() * &out.y), 3);
        assert_eq!(res.x_soft_final, first);
    }

    #[test]
    fn iht_zero_sparsity_returns_zero() {
        let mut r = rng(2);
        let ensemble = build_svd_ensemble(6, 9, &mut r).unwrap();
        let prior = SignalPrior::ternary(9, 0).unwrap();
        let y = DVector::from_element(6, 1.0);
        let res = iht_q(&y, ensemble.matrix(), &prior, &RecoveryConfig::default()).unwrap();
        assert_eq!(res.x_hat_discrete.support_size(), 0);
        assert_eq!(res.x_soft_final, DVector::zeros(9));
    }

    #[test]
    fn iht_recovers_easy_noiseless_instances() {
        let mut hits = 0;
        for seed in 0..10 {
            let mut r = rng(300 + seed);
            let ensemble = build_svd_ensemble(20, 24, &mut r).unwrap();
            let prior = SignalPrior::ternary(24, 2).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let y = ensemble.matrix() * x.values();
            let res = iht_q(&y, ensemble.matrix(), &prior, &RecoveryConfig::default()).unwrap();
            if res.x_hat_discrete == x {
                hits += 1;
            }
        }
        assert!(hits >= 8, "recovered only {hits}/10");
    }

    // --- soft thresholding ---

    #[test]
    fn ist_orthogonal_noiseless_is_one_step_exact() {
        let mut r = rng(4);
        let ensemble = build_svd_ensemble(10, 10, &mut r).unwrap();
        let prior = SignalPrior::ternary(10, 2).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let y = ensemble.matrix() * x.values();
        let config = RecoveryConfig {
            ist_tau: Some(0.0),
            ..RecoveryConfig::default()
        };
        let res = ist_q(&y, ensemble.matrix(), &prior, &config).unwrap();
        assert_eq!(res.x_hat_discrete, x);
        assert!((res.x_soft_final - x.values()).amax() < 1e-9);
    }

    #[test]
    fn ist_huge_threshold_kills_the_iterate() {
        let mut r = rng(5);
        let ensemble = build_svd_ensemble(6, 9, &mut r).unwrap();
        let prior = SignalPrior::ternary(9, 2).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.01, &mut r).unwrap();
        let config = RecoveryConfig {
            ist_tau: Some(1e6),
            ..RecoveryConfig::default()
        };
        let res = ist_q(&out.y, ensemble.matrix(), &prior, &config).unwrap();
        // The soft iterate collapses to zero; the discrete output still
        // carries exactly s symbols by the sparsity-matched contract.
        assert_eq!(res.x_soft_final, DVector::zeros(9));
        assert_eq!(res.x_hat_discrete.support_size(), 2);
    }

    #[test]
    fn ist_requires_tau() {
        let mut r = rng(6);
        let ensemble = build_svd_ensemble(6, 9, &mut r).unwrap();
        let prior = SignalPrior::ternary(9, 2).unwrap();
        let y = DVector::zeros(6);
        assert!(ist_q(&y, ensemble.matrix(), &prior, &RecoveryConfig::default()).is_err());
        let bad = RecoveryConfig {
            ist_tau: Some(-0.1),
            ..RecoveryConfig::default()
        };
        assert!(ist_q(&y, ensemble.matrix(), &prior, &bad).is_err());
    }

    // --- matching pursuit ---

    #[test]
    fn omp_zero_steps_returns_zero() {
        let mut r = rng(7);
        let ensemble = build_svd_ensemble(6, 9, &mut r).unwrap();
        let prior = SignalPrior::ternary(9, 2).unwrap();
        let y = DVector::from_element(6, 1.0);
        let config = RecoveryConfig {
            omp_iters: Some(0),
            ..RecoveryConfig::default()
        };
        let res = omp_q(&y, ensemble.matrix(), &prior, &config).unwrap();
        assert_eq!(res.x_hat_discrete.support_size(), 0);
        assert_eq!(res.iters_run, 0);
    }

    #[test]
    fn omp_requires_step_count() {
        let mut r = rng(8);
        let ensemble = build_svd_ensemble(6, 9, &mut r).unwrap();
        let prior = SignalPrior::ternary(9, 2).unwrap();
        let y = DVector::zeros(6);
        assert!(omp_q(&y, ensemble.matrix(), &prior, &RecoveryConfig::default()).is_err());
    }

    #[test]
    fn omp_noiseless_recovers_with_enough_steps() {
        let mut hits = 0;
        for seed in 0..10 {
            let mut r = rng(500 + seed);
            let ensemble = build_svd_ensemble(20, 40, &mut r).unwrap();
            let prior = SignalPrior::ternary(40, 3).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let y = ensemble.matrix() * x.values();
            let config = RecoveryConfig {
                omp_iters: Some(3),
                ..RecoveryConfig::default()
            };
            let res = omp_q(&y, ensemble.matrix(), &prior, &config).unwrap();
            if res.x_hat_discrete == x {
                hits += 1;
            }
        }
        assert!(hits >= 8, "recovered only {hits}/10");
    }

    #[test]
    fn omp_support_never_exceeds_sparsity() {
        // More greedy steps than s: quantization must reduce, not promote.
        for seed in 0..10 {
            let mut r = rng(600 + seed);
            let ensemble = build_svd_ensemble(12, 24, &mut r).unwrap();
            let prior = SignalPrior::ternary(24, 3).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
            let config = RecoveryConfig {
                omp_iters: Some(8),
                ..RecoveryConfig::default()
            };
            let res = omp_q(&out.y, ensemble.matrix(), &prior, &config).unwrap();
            assert!(res.x_hat_discrete.support_size() <= 3);
            assert_eq!(res.iters_run, 8);
        }
    }

    #[test]
    fn omp_flags_dependent_selection() {
        // Integer-exact duplicate column: once the first copy is fitted the
        // duplicate is the only remaining candidate and its refit is
        // singular.
        let a = dmatrix![1.0, 1.0; 0.0, 0.0];
        let prior = SignalPrior::ternary(2, 1).unwrap();
        let y = DVector::from_vec(vec![1.0, 0.0]);
        let config = RecoveryConfig {
            omp_iters: Some(2),
            ..RecoveryConfig::default()
        };
        let res = omp_q(&y, &a, &prior, &config).unwrap();
        assert!(res.diverged);
        assert_eq!(res.iters_run, 1);
        assert_eq!(res.x_hat_discrete.values()[0], 1.0);
    }
}
