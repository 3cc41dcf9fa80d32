//! Seeded Monte Carlo driver: runs the configured algorithms over a noise
//! grid on identical per-trial instances and aggregates symbol error rates
//! with confidence intervals.
//!
//! Reproducibility contract: every trial derives its own seed from the
//! master seed by a fixed splitting rule, so any single trial can be
//! replayed in isolation and parallel execution cannot change the counts.

pub mod config;
pub mod report;

pub use config::{Algorithm, AlgorithmEntry, EnsembleMode, ExperimentConfig};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algorithms::{
    iht_q, ims_q, ims_q_genie, ist_q, ml_oracle, omp_q, tsr_q, RecoveryConfig,
};
use crate::measurement::{
    apply_channel, build_svd_ensemble, noise_level_db_to_variance, MeasurementEnsemble,
};
use crate::signal::{generate_sparse_signal, SignalPrior, SparseSignal};
use crate::{Error, Result};

/// Aggregated outcome for one algorithm at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SerPoint {
    pub algorithm: String,
    pub noise_db: f64,
    /// Trials that produced a usable estimate (failures excluded).
    pub trials: u64,
    pub errors: u64,
    /// `trials * L`.
    pub total: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Runs that terminated abnormally but still produced an estimate.
    pub diverged: u64,
    /// Trials excluded because the algorithm returned an error.
    pub failures: u64,
}

/// A full sweep: one point per (algorithm, noise level).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SerCurve {
    pub points: Vec<SerPoint>,
}

impl SerCurve {
    /// The point for an algorithm label at a noise level, if present.
    pub fn point(&self, algorithm: &str, noise_db: f64) -> Option<&SerPoint> {
        self.points
            .iter()
            .find(|p| p.algorithm == algorithm && (p.noise_db - noise_db).abs() < 1e-9)
    }

    /// All points of one algorithm, in grid order.
    pub fn algorithm_points(&self, algorithm: &str) -> Vec<&SerPoint> {
        self.points
            .iter()
            .filter(|p| p.algorithm == algorithm)
            .collect()
    }
}

/// Counts mismatched symbols between an estimate and the truth.
pub fn ser(x_hat: &SparseSignal, x_true: &SparseSignal) -> Result<(u64, u64)> {
    if x_hat.len() != x_true.len() {
        return Err(Error::invalid("estimate and truth lengths differ"));
    }
    let errors = x_hat
        .values()
        .iter()
        .zip(x_true.values().iter())
        .filter(|(a, b)| a != b)
        .count() as u64;
    Ok((errors, x_true.len() as u64))
}

/// One step of the splitmix64 mixing function.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for a child stream: `splitmix64(base + splitmix64(index))`.
///
/// Trial seeds are derived in two hops, `derive_seed(derive_seed(master,
/// level_index), trial_index)`, so a single trial is reproducible without
/// replaying anything else.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(splitmix64(index)))
}

/// Stream index reserved for the fixed-ensemble draw.
const FIXED_ENSEMBLE_STREAM: u64 = u64::MAX;
/// Stream offset separating tuning trials from measurement trials.
const TUNING_STREAM: u64 = u64::MAX - 1;

/// Two-sided 95% Wilson score interval for `errors` out of `total`.
pub fn wilson_interval(errors: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, Default)]
struct AlgoOutcome {
    errors: u64,
    diverged: bool,
    failed: bool,
}

fn run_algorithm(
    entry_algorithm: &Algorithm,
    config: &RecoveryConfig,
    y: &DVector<f64>,
    ensemble: &MeasurementEnsemble,
    sigma_n_sq: f64,
    prior: &SignalPrior,
    x_true: &SparseSignal,
) -> Result<(SparseSignal, bool)> {
    let res = match entry_algorithm {
        Algorithm::ImsQ => ims_q(y, ensemble, sigma_n_sq, prior, config)?,
        Algorithm::ImsQGenie(_) => ims_q_genie(y, ensemble, sigma_n_sq, prior, config, x_true)?,
        Algorithm::TsrQ => tsr_q(y, ensemble, sigma_n_sq, prior, config)?,
        Algorithm::IhtQ => iht_q(y, ensemble.matrix(), prior, config)?,
        Algorithm::IstQ => ist_q(y, ensemble.matrix(), prior, config)?,
        Algorithm::OmpQ => omp_q(y, ensemble.matrix(), prior, config)?,
        Algorithm::MlOracle => {
            let x = ml_oracle(y, ensemble.matrix(), prior)?;
            return Ok((x, false));
        }
    };
    Ok((res.x_hat_discrete, res.diverged))
}

fn run_trial(
    trial_seed: u64,
    cfg: &ExperimentConfig,
    resolved: &[(Algorithm, RecoveryConfig)],
    sigma_n_sq: f64,
    prior: &SignalPrior,
    fixed: Option<&MeasurementEnsemble>,
) -> Vec<AlgoOutcome> {
    let failed_all = || vec![AlgoOutcome { failed: true, ..Default::default() }; resolved.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    // Consumption order is part of the reproducibility contract:
    // ensemble (fresh mode), then signal, then noise.
    let built;
    let ensemble = match fixed {
        Some(e) => e,
        None => match build_svd_ensemble(cfg.k, cfg.l, &mut rng) {
            Ok(e) => {
                built = e;
                &built
            }
            Err(_) => return failed_all(),
        },
    };
    let x = generate_sparse_signal(prior, &mut rng);
    let out = match apply_channel(ensemble, &x, sigma_n_sq, &mut rng) {
        Ok(o) => o,
        Err(_) => return failed_all(),
    };

    resolved
        .iter()
        .map(|(algorithm, config)| {
            match run_algorithm(algorithm, config, &out.y, ensemble, sigma_n_sq, prior, &x) {
                Ok((x_hat, diverged)) => match ser(&x_hat, &x) {
                    Ok((errors, _)) => AlgoOutcome { errors, diverged, failed: false },
                    Err(_) => AlgoOutcome { failed: true, ..Default::default() },
                },
                Err(_) => AlgoOutcome { failed: true, ..Default::default() },
            }
        })
        .collect()
}

/// Runs the full sweep described by the config. Trials execute in parallel;
/// per-trial outcomes are collected in trial order and reduced sequentially,
/// so thread scheduling cannot affect the counts.
pub fn run_curve(cfg: &ExperimentConfig) -> Result<SerCurve> {
    cfg.validate()?;
    let prior = SignalPrior::ternary(cfg.l, cfg.s)?;
    let fixed = match cfg.ensemble_mode {
        EnsembleMode::FreshPerTrial => None,
        EnsembleMode::Fixed => {
            let seed = derive_seed(cfg.master_seed, FIXED_ENSEMBLE_STREAM);
            Some(build_svd_ensemble(
                cfg.k,
                cfg.l,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?)
        }
    };

    let mut curve = SerCurve::default();
    for (level_index, &level_db) in cfg.noise_levels_db.iter().enumerate() {
        let sigma_n_sq = noise_level_db_to_variance(level_db);
        let resolved = cfg.resolve_configs(level_db)?;
        let level_seed = derive_seed(cfg.master_seed, level_index as u64);

        let outcomes: Vec<Vec<AlgoOutcome>> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| {
                run_trial(
                    derive_seed(level_seed, trial),
                    cfg,
                    &resolved,
                    sigma_n_sq,
                    &prior,
                    fixed.as_ref(),
                )
            })
            .collect();

        for (ai, (algorithm, _)) in resolved.iter().enumerate() {
            let mut errors = 0u64;
            let mut diverged = 0u64;
            let mut failures = 0u64;
            for trial_outcomes in &outcomes {
                let o = trial_outcomes[ai];
                if o.failed {
                    failures += 1;
                } else {
                    errors += o.errors;
                    diverged += u64::from(o.diverged);
                }
            }
            if failures > 0 {
                log::warn!(
                    "{} at {level_db} dB: excluded {failures} failed trials",
                    algorithm.label()
                );
            }
            let trials = cfg.trials as u64 - failures;
            let total = trials * cfg.l as u64;
            let ser = if total == 0 { 0.0 } else { errors as f64 / total as f64 };
            let (ci_low, ci_high) = wilson_interval(errors, total);
            curve.points.push(SerPoint {
                algorithm: algorithm.label().to_string(),
                noise_db: level_db,
                trials,
                errors,
                total,
                ser,
                ci_low,
                ci_high,
                diverged,
                failures,
            });
        }
    }
    Ok(curve)
}

/// Grid-searches the soft-thresholding shrinkage per noise level on
/// held-out trials: candidates `0.05·k·σ_n` for `k = 1..=40`, 200 trials
/// per level, every candidate judged on the same instances, ties to the
/// smaller value. Returns `(level_db, tau)` pairs in grid order.
pub fn tune_ist_tau(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let prior = SignalPrior::ternary(cfg.l, cfg.s)?;
    let tuning_trials = 200u64;
    let mut table = Vec::with_capacity(cfg.noise_levels_db.len());
    let tuning_base = derive_seed(cfg.master_seed, TUNING_STREAM);

    for (level_index, &level_db) in cfg.noise_levels_db.iter().enumerate() {
        let sigma_n_sq = noise_level_db_to_variance(level_db);
        let sigma_n = sigma_n_sq.sqrt();
        let taus: Vec<f64> = (1..=40).map(|k| 0.05 * k as f64 * sigma_n).collect();
        let level_seed = derive_seed(tuning_base, level_index as u64);

        let error_sums: Vec<u64> = (0..tuning_trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(level_seed, trial));
                let mut per_tau = vec![0u64; taus.len()];
                let Ok(ensemble) = build_svd_ensemble(cfg.k, cfg.l, &mut rng) else {
                    return per_tau;
                };
                let x = generate_sparse_signal(&prior, &mut rng);
                let Ok(out) = apply_channel(&ensemble, &x, sigma_n_sq, &mut rng) else {
                    return per_tau;
                };
                for (ti, &tau) in taus.iter().enumerate() {
                    let config = RecoveryConfig {
                        ist_tau: Some(tau),
                        ..RecoveryConfig::default()
                    };
                    if let Ok(res) = ist_q(&out.y, ensemble.matrix(), &prior, &config) {
                        if let Ok((errors, _)) = ser(&res.x_hat_discrete, &x) {
                            per_tau[ti] = errors;
                        }
                    }
                }
                per_tau
            })
            .reduce(
                || vec![0u64; taus.len()],
                |mut acc, item| {
                    for (a, b) in acc.iter_mut().zip(item) {
                        *a += b;
                    }
                    acc
                },
            );

        let best = taus
            .iter()
            .zip(&error_sums)
            .min_by(|(ta, ea), (tb, eb)| ea.cmp(eb).then(ta.total_cmp(tb)))
            .map(|(t, _)| *t)
            .expect("candidate grid is non-empty");
        table.push((level_db, best));
    }
    Ok(table)
}
