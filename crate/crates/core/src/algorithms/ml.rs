//! Exhaustive maximum-likelihood search over all `s`-sparse sign vectors.
//! Reference quality at desk scale; guarded by a candidate budget.

use nalgebra::{DMatrix, DVector};

use crate::signal::{SignalPrior, SparseSignal};
use crate::{Error, Result};

use super::require_ternary;

/// Default cap on enumerated candidates, `C(L,s)·2^s`.
pub const DEFAULT_ML_BUDGET: u128 = 1_000_000;

/// Exact binomial coefficient, `None` on overflow.
fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        // Dividing after multiplying keeps every intermediate integral.
        c = c.checked_mul(n - k + i)? / i;
    }
    Some(c)
}

/// Lexicographic successor of an ascending index combination out of `l`.
fn next_combination(idx: &mut [usize], l: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if idx[i] != i + l - s {
            idx[i] += 1;
            for j in i + 1..s {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// [`ml_oracle_with_budget`] at the default budget.
pub fn ml_oracle(y: &DVector<f64>, a: &DMatrix<f64>, prior: &SignalPrior) -> Result<SparseSignal> {
    ml_oracle_with_budget(y, a, prior, DEFAULT_ML_BUDGET)
}

/// Returns the `s`-sparse ternary vector minimizing the squared residual by
/// full enumeration: supports in lexicographic order, sign patterns in
/// lexicographic order within each support (minus before plus). Strict
/// improvement keeps the first minimizer in that order, so ties resolve
/// deterministically.
pub fn ml_oracle_with_budget(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    prior: &SignalPrior,
    budget: u128,
) -> Result<SparseSignal> {
    require_ternary(prior)?;
    if y.len() != a.nrows() || prior.len() != a.ncols() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let l = prior.len();
    let s = prior.sparsity();
    let candidates = binomial(l as u128, s as u128)
        .and_then(|c| c.checked_mul(1u128.checked_shl(s as u32)?))
        .ok_or(Error::BudgetExceeded {
            candidates: u128::MAX,
            budget,
        })?;
    if candidates > budget {
        return Err(Error::BudgetExceeded { candidates, budget });
    }

    let mut support: Vec<usize> = (0..s).collect();
    let mut best: Option<(f64, Vec<usize>, u64)> = None;
    let mut residual = DVector::zeros(y.len());
    loop {
        for signs in 0..(1u64 << s) {
            residual.copy_from(y);
            for (j, &col) in support.iter().enumerate() {
                // Bit 0 of the pattern belongs to the last support slot so
                // ascending integers enumerate sign vectors lexicographically.
                let symbol = if (signs >> (s - 1 - j)) & 1 == 0 {
                    -1.0
                } else {
                    1.0
                };
                residual.axpy(-symbol, &a.column(col), 1.0);
            }
            let cost = residual.norm_squared();
            if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
                best = Some((cost, support.clone(), signs));
            }
        }
        if !next_combination(&mut support, l) {
            break;
        }
    }

    let (_, sup, signs) = best.expect("enumeration visits at least one candidate");
    let mut x = DVector::zeros(l);
    for (j, &col) in sup.iter().enumerate() {
        x[col] = if (signs >> (s - 1 - j)) & 1 == 0 {
            -1.0
        } else {
            1.0
        };
    }
    SparseSignal::from_vector(x)
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
    fn binomial_values() {
        assert_eq!(binomial(8, 2), Some(28));
        assert_eq!(binomial(258, 1), Some(258));
        assert_eq!(binomial(5, 0), Some(1));
        assert_eq!(binomial(4, 5), Some(0));
    }

    #[test]
    fn combination_enumeration_is_complete() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn noiseless_returns_the_true_signal() {
        for seed in 0..10 {
            let mut r = rng(seed);
            let ensemble = build_svd_ensemble(6, 8, &mut r).unwrap();
            let prior = SignalPrior::ternary(8, 2).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let y = ensemble.matrix() * x.values();
            let best = ml_oracle(&y, ensemble.matrix(), &prior).unwrap();
            assert_eq!(best, x, "seed {seed}");
        }
    }

    #[test]
    fn zero_sparsity_returns_zero() {
        let mut r = rng(3);
        let ensemble = build_svd_ensemble(6, 8, &mut r).unwrap();
        let prior = SignalPrior::ternary(8, 0).unwrap();
        let y = DVector::from_element(6, 0.7);
        let best = ml_oracle(&y, ensemble.matrix(), &prior).unwrap();
        assert_eq!(best.support_size(), 0);
    }

    #[test]
    fn agrees_with_reversed_enumeration() {
        // Re-enumerate every candidate in reversed order; with a generic
        // noisy observation the minimizer is unique, so both orders must
        // land on the same vector.
        for seed in 0..5 {
            let mut r = rng(100 + seed);
            let ensemble = build_svd_ensemble(6, 8, &mut r).unwrap();
            let prior = SignalPrior::ternary(8, 2).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let out = apply_channel(&ensemble, &x, 0.05, &mut r).unwrap();
            let forward = ml_oracle(&out.y, ensemble.matrix(), &prior).unwrap();

            let mut all = Vec::new();
            let mut support = vec![0usize, 1];
            loop {
                for signs in 0..4u64 {
                    all.push((support.clone(), signs));
                }
                if !next_combination(&mut support, 8) {
                    break;
                }
            }
            let mut best: Option<(f64, DVector<f64>)> = None;
            for (sup, signs) in all.into_iter().rev() {
                let mut cand = DVector::zeros(8);
                for (j, &col) in sup.iter().enumerate() {
                    cand[col] = if (signs >> (1 - j)) & 1 == 0 { -1.0 } else { 1.0 };
                }
                let cost = (&out.y - ensemble.matrix() * &cand).norm_squared();
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, cand));
                }
            }
            assert_eq!(*forward.values(), best.unwrap().1, "seed {seed}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut r = rng(9);
        let ensemble = build_svd_ensemble(10, 30, &mut r).unwrap();
        let prior = SignalPrior::ternary(30, 10).unwrap();
        let y = DVector::zeros(10);
        let err = ml_oracle(&y, ensemble.matrix(), &prior).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { candidates, budget }
            if candidates > budget));
    }

    #[test]
    fn high_snr_soft_feedback_recovery_matches_exhaustive_search() {
        let mut agree = 0;
        let trials = 50;
        for seed in 0..trials {
            let mut r = rng(1000 + seed);
            let ensemble = build_svd_ensemble(6, 8, &mut r).unwrap();
            let prior = SignalPrior::ternary(8, 2).unwrap();
            let x = generate_sparse_signal(&prior, &mut r);
            let sigma_n_sq = crate::measurement::noise_level_db_to_variance(25.0);
            let out = apply_channel(&ensemble, &x, sigma_n_sq, &mut r).unwrap();
            let ml = ml_oracle(&out.y, ensemble.matrix(), &prior).unwrap();
            let ims = crate::algorithms::ims_q(
                &out.y,
                &ensemble,
                sigma_n_sq,
                &prior,
                &super::super::RecoveryConfig::default(),
            )
            .unwrap();
            if ims.x_hat_discrete == ml {
                agree += 1;
            }
        }
        assert!(agree * 100 >= trials * 96, "agreement {agree}/{trials}");
    }
}
