//! Iterative MMSE estimation with ternary soft feedback.

use log::warn;
use nalgebra::DVector;

use crate::estimators::{mmse_step, soft_feedback_vec};
use crate::measurement::MeasurementEnsemble;
use crate::signal::{quantize_elementwise, quantize_sparsity_matched, SignalPrior, SparseSignal};
use crate::{Error, Result, VARIANCE_FLOOR};

use super::{
    require_ternary, FinalQuantizer, GenieMode, ImsIterTrace, RecoveryConfig, RecoveryResult,
    RecoveryTrace,
};

/// Recovers a ternary sparse vector by alternating a bias-corrected linear
/// MMSE step with per-element soft feedback, then quantizing.
///
/// Deterministic given its inputs. A zero noise variance is substituted by
/// a tiny floor with a warning; the linear step needs strict positivity.
pub fn ims_q(
    y: &DVector<f64>,
    ensemble: &MeasurementEnsemble,
    sigma_n_sq: f64,
    prior: &SignalPrior,
    config: &RecoveryConfig,
) -> Result<RecoveryResult> {
    if config.genie_mode != GenieMode::None {
        return Err(Error::invalid(
            "genie modes require the genie-aided entry point",
        ));
    }
    run(y, ensemble, sigma_n_sq, prior, config, None)
}

/// [`ims_q`] with true error variances substituted per `config.genie_mode`.
/// With mode `None` the run is bit-identical to the plain algorithm; the
/// true signal is only read when a substitution is active.
pub fn ims_q_genie(
    y: &DVector<f64>,
    ensemble: &MeasurementEnsemble,
    sigma_n_sq: f64,
    prior: &SignalPrior,
    config: &RecoveryConfig,
    x_true: &SparseSignal,
) -> Result<RecoveryResult> {
    if x_true.len() != ensemble.l() {
        return Err(Error::invalid("true signal length does not match ensemble"));
    }
    run(y, ensemble, sigma_n_sq, prior, config, Some(x_true.values()))
}

fn run(
    y: &DVector<f64>,
    ensemble: &MeasurementEnsemble,
    sigma_n_sq: f64,
    prior: &SignalPrior,
    config: &RecoveryConfig,
    x_true: Option<&DVector<f64>>,
) -> Result<RecoveryResult> {
    config.validate()?;
    require_ternary(prior)?;
    let a = ensemble.matrix();
    let l = ensemble.l();
    if prior.len() != l {
        return Err(Error::invalid("prior length does not match ensemble"));
    }
    if y.len() != ensemble.k() {
        return Err(Error::invalid("observation length does not match ensemble"));
    }
    if sigma_n_sq < 0.0 || !sigma_n_sq.is_finite() {
        return Err(Error::invalid("noise variance must be finite and >= 0"));
    }
    let sigma_n_sq = if sigma_n_sq == 0.0 {
        warn!("noiseless observation: regularizing with variance floor {VARIANCE_FLOOR:e}");
        VARIANCE_FLOOR
    } else {
        sigma_n_sq
    };

    let substitute_ee = x_true.is_some()
        && matches!(config.genie_mode, GenieMode::TrueEe | GenieMode::Both);
    let substitute_dd = x_true.is_some()
        && matches!(config.genie_mode, GenieMode::TrueDd | GenieMode::Both);

    let mut x_hat = DVector::zeros(l);
    let mut sigma_d_sq = DVector::from_element(l, prior.nonzero_ratio());
    let mut trace = config.collect_trace.then(Vec::new);
    let mut iters_run = 0;

    for _ in 0..config.max_iters {
        let step = mmse_step(y, a, &x_hat, &sigma_d_sq, sigma_n_sq)?;
        let mut sigma_e_sq = step.sigma_e_sq;
        if substitute_ee {
            let truth = x_true.unwrap();
            for i in 0..l {
                let err = step.x_tilde[i] - truth[i];
                sigma_e_sq[i] = (err * err).max(VARIANCE_FLOOR);
            }
        }

        let fb = soft_feedback_vec(&step.x_tilde, &sigma_e_sq, prior)?;
        let mut next_sigma_d_sq = fb.sigma_d_sq;
        if substitute_dd {
            let truth = x_true.unwrap();
            for i in 0..l {
                let err = fb.x_hat[i] - truth[i];
                next_sigma_d_sq[i] = (err * err).max(VARIANCE_FLOOR);
            }
        }

        let delta = (&fb.x_hat - &x_hat).amax();
        x_hat = fb.x_hat;
        sigma_d_sq = next_sigma_d_sq;
        iters_run += 1;
        if let Some(entries) = trace.as_mut() {
            entries.push(ImsIterTrace {
                x_tilde: step.x_tilde,
                sigma_e_sq,
                x_hat: x_hat.clone(),
                sigma_d_sq: sigma_d_sq.clone(),
            });
        }
        if config.early_exit_tol.is_some_and(|tol| delta < tol) {
            break;
        }
    }

    let x_hat_discrete = match config.final_quantizer {
        FinalQuantizer::Elementwise => {
            SparseSignal::from_vector(quantize_elementwise(&x_hat, prior.alphabet()))?
        }
        FinalQuantizer::SparsityMatched => quantize_sparsity_matched(&x_hat, prior.sparsity())?,
    };
    Ok(RecoveryResult {
        x_hat_discrete,
        x_soft_final: x_hat,
        iters_run,
        diverged: false,
        trace: trace.map(RecoveryTrace::Ims),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{apply_channel, build_svd_ensemble};
    use crate::signal::generate_sparse_signal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn near_noiseless_square_system_recovers_exactly() {
        // K = L makes the system invertible; with negligible noise the
        // quantized output must match the generated signal.
        for seed in 0..10 {
            let mut r = rng(seed);
            let ensemble = build_svd_ensemble(12, 12, &mut r).unwrap();
            let prior = SignalPrior::ternary(12, 3).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let out = apply_channel(&ensemble, &x, 1e-8, &mut r).unwrap();
            let config = RecoveryConfig::default();
            let res = ims_q(&out.y, &ensemble, 1e-8, &prior, &config).unwrap();
            assert_eq!(res.x_hat_discrete, x, "seed {seed}");
            assert!(!res.diverged);
        }
    }

    #[test]
    fn empty_prior_returns_zero_vector() {
        let mut r = rng(3);
        let ensemble = build_svd_ensemble(6, 10, &mut r).unwrap();
        let prior = SignalPrior::ternary(10, 0).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.01, &mut r).unwrap();
        let res = ims_q(&out.y, &ensemble, 0.01, &prior, &RecoveryConfig::default()).unwrap();
        assert_eq!(res.x_hat_discrete.support_size(), 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut r = rng(9);
        let ensemble = build_svd_ensemble(10, 20, &mut r).unwrap();
        let prior = SignalPrior::ternary(20, 4).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.02, &mut r).unwrap();
        let config = RecoveryConfig::default();
        let a = ims_q(&out.y, &ensemble, 0.02, &prior, &config).unwrap();
        let b = ims_q(&out.y, &ensemble, 0.02, &prior, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn genie_mode_none_is_bit_identical() {
        let mut r = rng(14);
        let ensemble = build_svd_ensemble(10, 20, &mut r).unwrap();
        let prior = SignalPrior::ternary(20, 4).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
        let config = RecoveryConfig {
            collect_trace: true,
            ..RecoveryConfig::default()
        };
        let plain = ims_q(&out.y, &ensemble, 0.05, &prior, &config).unwrap();
        let genie = ims_q_genie(&out.y, &ensemble, 0.05, &prior, &config, &x).unwrap();
        assert_eq!(plain, genie);
    }

    #[test]
    fn genie_variants_run_and_quantize() {
        let mut r = rng(21);
        let ensemble = build_svd_ensemble(10, 20, &mut r).unwrap();
        let prior = SignalPrior::ternary(20, 4).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
        for mode in [GenieMode::TrueEe, GenieMode::TrueDd, GenieMode::Both] {
            let config = RecoveryConfig {
                genie_mode: mode,
                ..RecoveryConfig::default()
            };
            let res = ims_q_genie(&out.y, &ensemble, 0.05, &prior, &config, &x).unwrap();
            assert!(res.iters_run >= 1);
            assert!(res
                .x_hat_discrete
                .values()
                .iter()
                .all(|&v| v == 0.0 || v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn plain_entry_point_rejects_genie_config() {
        let mut r = rng(2);
        let ensemble = build_svd_ensemble(4, 8, &mut r).unwrap();
        let prior = SignalPrior::ternary(8, 2).unwrap();
        let y = DVector::zeros(4);
        let config = RecoveryConfig {
            genie_mode: GenieMode::Both,
            ..RecoveryConfig::default()
        };
        assert!(ims_q(&y, &ensemble, 0.01, &prior, &config).is_err());
    }

    #[test]
    fn zero_noise_is_regularized_not_rejected() {
        let mut r = rng(4);
        let ensemble = build_svd_ensemble(8, 8, &mut r).unwrap();
        let prior = SignalPrior::ternary(8, 2).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.0, &mut r).unwrap();
        let res = ims_q(&out.y, &ensemble, 0.0, &prior, &RecoveryConfig::default()).unwrap();
        assert_eq!(res.x_hat_discrete, x);
    }

    #[test]
    fn trace_records_each_iteration() {
        let mut r = rng(6);
        let ensemble = build_svd_ensemble(6, 12, &mut r).unwrap();
        let prior = SignalPrior::ternary(12, 2).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
        let config = RecoveryConfig {
            collect_trace: true,
            max_iters: 7,
            early_exit_tol: None,
            ..RecoveryConfig::default()
        };
        let res = ims_q(&out.y, &ensemble, 0.05, &prior, &config).unwrap();
        assert_eq!(res.iters_run, 7);
        match res.trace {
            Some(RecoveryTrace::Ims(entries)) => {
                assert_eq!(entries.len(), 7);
                for e in &entries {
                    assert!(e.sigma_d_sq.iter().all(|&v| (1e-12..=1.0).contains(&v)));
                    assert!(e.sigma_e_sq.iter().all(|&v| v > 0.0));
                    assert!(e.x_hat.iter().all(|v| v.abs() < 1.0));
                }
            }
            other => panic!("expected soft-feedback trace, got {other:?}"),
        }
    }

    #[test]
    fn early_exit_runs_fewer_iterations() {
        let mut r = rng(8);
        let ensemble = build_svd_ensemble(12, 12, &mut r).unwrap();
        let prior = SignalPrior::ternary(12, 2).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 1e-6, &mut r).unwrap();
        let config = RecoveryConfig::default();
        let res = ims_q(&out.y, &ensemble, 1e-6, &prior, &config).unwrap();
        assert!(res.iters_run < 50, "converged run should exit early");
        let full = RecoveryConfig {
            early_exit_tol: None,
            ..RecoveryConfig::default()
        };
        let res_full = ims_q(&out.y, &ensemble, 1e-6, &prior, &full).unwrap();
        assert_eq!(res_full.iters_run, 50);
        assert_eq!(res.x_hat_discrete, res_full.x_hat_discrete);
    }

    #[test]
    fn sparsity_matched_quantizer_is_honored() {
        let mut r = rng(11);
        let ensemble = build_svd_ensemble(8, 16, &mut r).unwrap();
        let prior = SignalPrior::ternary(16, 3).unwrap();
        let x = generate_sparse_signal(&prior, &mut r);
        let out = apply_channel(&ensemble, &x, 0.5, &mut r).unwrap();
        let config = RecoveryConfig {
            final_quantizer: FinalQuantizer::SparsityMatched,
            ..RecoveryConfig::default()
        };
        let res = ims_q(&out.y, &ensemble, 0.5, &prior, &config).unwrap();
        assert_eq!(res.x_hat_discrete.support_size(), 3);
    }
}
