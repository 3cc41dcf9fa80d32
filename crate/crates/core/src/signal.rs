//! Ternary sparse signal model: the prior over `{-1, 0, +1}`, signal
//! generation, and the quantizers that map real vectors back to the alphabet.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;

use crate::{Error, Result};

/// The ternary alphabet `{-1, 0, +1}`.
pub const TERNARY_ALPHABET: [f64; 3] = [-1.0, 0.0, 1.0];

/// Prior of an `s`-sparse vector of length `L` whose nonzero entries are
/// uniform over the symmetric nonzero symbols of the alphabet.
///
/// Per element the prior puts mass `(s/2)/L` on `-1`, `(L-s)/L` on `0` and
/// `(s/2)/L` on `+1`, so the per-element mean is `0` and the variance `s/L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPrior {
    len: usize,
    sparsity: usize,
    alphabet: Vec<f64>,
}

impl SignalPrior {
    /// Ternary prior over `{-1, 0, +1}` with length `len` and exactly
    /// `sparsity` nonzeros.
    pub fn ternary(len: usize, sparsity: usize) -> Result<Self> {
        Self::with_alphabet(len, sparsity, TERNARY_ALPHABET.to_vec())
    }

    /// Prior with an explicit alphabet. The alphabet must contain `0` and at
    /// least one nonzero symbol; only the ternary alphabet is exercised by
    /// the estimation kernels.
    pub fn with_alphabet(len: usize, sparsity: usize, alphabet: Vec<f64>) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("signal length must be positive"));
        }
        if sparsity > len {
            return Err(Error::invalid(format!(
                "sparsity {sparsity} exceeds length {len}"
            )));
        }
        if !alphabet.contains(&0.0) || alphabet.iter().all(|&c| c == 0.0) {
            return Err(Error::invalid(
                "alphabet must contain 0 and at least one nonzero symbol",
            ));
        }
        let mut alphabet = alphabet;
        alphabet.sort_by(f64::total_cmp);
        alphabet.dedup();
        Ok(SignalPrior { len, sparsity, alphabet })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// The full alphabet including `0`, sorted ascending.
    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    /// The nonzero symbols of the alphabet.
    pub fn nonzero_symbols(&self) -> impl Iterator<Item = f64> + '_ {
        self.alphabet.iter().copied().filter(|&c| c != 0.0)
    }

    /// Fraction of nonzero entries, `s/L`. Also the per-element prior
    /// variance for the ternary alphabet.
    pub fn nonzero_ratio(&self) -> f64 {
        self.sparsity as f64 / self.len as f64
    }
}

/// An exactly `s`-sparse vector whose nonzero entries lie in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: DVector<f64>,
}

impl SparseSignal {
    /// Wraps a vector, checking that every entry is a valid symbol.
    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        if values
            .iter()
            .any(|&v| v != 0.0 && v != 1.0 && v != -1.0)
        {
            return Err(Error::invalid("entries must lie in {-1, 0, +1}"));
        }
        Ok(SparseSignal { values })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// Number of nonzero entries.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Indices of the nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] != 0.0)
            .collect()
    }
}

/// Draws an exactly `s`-sparse signal: the support is uniform over all
/// size-`s` index subsets and each nonzero is uniform over the nonzero
/// symbols, independently. Deterministic given the generator state.
pub fn generate_sparse_signal<R: Rng + ?Sized>(prior: &SignalPrior, rng: &mut R) -> SparseSignal {
    let symbols: Vec<f64> = prior.nonzero_symbols().collect();
    let mut values = DVector::zeros(prior.len());
    for idx in sample(rng, prior.len(), prior.sparsity()) {
        values[idx] = symbols[rng.random_range(0..symbols.len())];
    }
    SparseSignal { values }
}

/// Maps each entry to the nearest alphabet symbol.
///
/// Ties go to the symbol of smaller magnitude, then to the more negative
/// symbol, so the midpoint `0.5` maps to `0` and the quantizer commutes with
/// sign flips on a symmetric alphabet.
pub fn quantize_elementwise(v: &DVector<f64>, alphabet: &[f64]) -> DVector<f64> {
    assert!(!alphabet.is_empty(), "alphabet must be non-empty");
    v.map(|x| {
        let mut best = alphabet[0];
        let mut best_key = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for &c in alphabet {
            let key = ((x - c).abs(), c.abs(), c);
            if (key.0, key.1, key.2) < best_key {
                best = c;
                best_key = key;
            }
        }
        best
    })
}

/// Keeps the `s` entries of largest magnitude, replacing each by its sign,
/// and zeroes the rest: the quantization threshold adapts so the output has
/// exactly `s` nonzeros.
///
/// Magnitude ties are broken toward the lower index. A selected entry that
/// is exactly zero maps to `+1` so the sparsity contract holds even for
/// degenerate inputs.
pub fn quantize_sparsity_matched(v: &DVector<f64>, s: usize) -> Result<SparseSignal> {
    let n = v.len();
    if s > n {
        return Err(Error::invalid(format!(
            "requested sparsity {s} exceeds vector length {n}"
        )));
    }
    let mut values = DVector::zeros(n);
    for i in top_magnitude_indices(v, s) {
        values[i] = if v[i] < 0.0 { -1.0 } else { 1.0 };
    }
    Ok(SparseSignal { values })
}

/// Indices of the `s` largest-magnitude entries, ties toward the lower
/// index. Shared by the sparsity-matched quantizer and hard thresholding so
/// both resolve ties identically.
pub(crate) fn top_magnitude_indices(v: &DVector<f64>, s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    order.truncate(s.min(v.len()));
    order
}
