//! Measurement ensembles in factored form `A = U·C` and the noisy linear
//! channel `y = A·x + n`.
//!
//! `U` holds `K` distinct rows of an orthogonal `L×L` matrix, so `U·Uᵀ = I`.
//! The diagonal `C` rescales columns to unit norm; keeping the factors (not
//! just the product) is what lets the turbo recovery path work in the
//! orthogonal domain.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::signal::SparseSignal;
use crate::{Error, Result};

/// A `K×L` measurement matrix together with its factorization `A = U·C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    a: DMatrix<f64>,
    u: DMatrix<f64>,
    c: DVector<f64>,
    c_bar_sq: f64,
}

/// One observation of the channel `y = A·x + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    pub y: DVector<f64>,
    pub sigma_n_sq: f64,
}

impl MeasurementEnsemble {
    /// Assembles the ensemble from row-selected orthogonal rows `U`,
    /// deriving the unit-norm column scaling. Errors on an all-zero column.
    fn from_rows(u: DMatrix<f64>) -> Result<Self> {
        let l = u.ncols();
        let mut c = DVector::zeros(l);
        for i in 0..l {
            let sum_sq = u.column(i).norm_squared();
            if sum_sq == 0.0 {
                return Err(Error::DegenerateColumn(i));
            }
            c[i] = 1.0 / sum_sq.sqrt();
        }
        let mut a = u.clone();
        for i in 0..l {
            a.column_mut(i).scale_mut(c[i]);
        }
        let c_bar_sq = c.iter().map(|ci| ci * ci).sum::<f64>() / l as f64;
        Ok(MeasurementEnsemble { a, u, c, c_bar_sq })
    }

    /// Assembles an ensemble from explicit factors, e.g. with `C = I` to
    /// keep the raw orthogonal rows. The unit-column-norm property only
    /// holds for the derived scaling; everything else works unchanged.
    pub fn from_parts(u: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let (k, l) = (u.nrows(), u.ncols());
        check_dims(k, l)?;
        if c.len() != l {
            return Err(Error::invalid(format!(
                "scaling length {} does not match L={l}",
                c.len()
            )));
        }
        if c.iter().any(|&ci| !(ci > 0.0) || !ci.is_finite()) {
            return Err(Error::invalid("column scalings must be positive and finite"));
        }
        let mut a = u.clone();
        for i in 0..l {
            a.column_mut(i).scale_mut(c[i]);
        }
        let c_bar_sq = c.iter().map(|ci| ci * ci).sum::<f64>() / l as f64;
        Ok(MeasurementEnsemble { a, u, c, c_bar_sq })
    }

    /// The assembled measurement matrix `A = U·C`, `K×L`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The selected orthogonal rows, `K×L`, with `U·Uᵀ = I`.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Per-column scaling factors `c_i` (the diagonal of `C`).
    pub fn column_scaling(&self) -> &DVector<f64> {
        &self.c
    }

    /// Mean squared column scaling, `c̄² = (1/L)·Σ c_i²`.
    pub fn c_bar_sq(&self) -> f64 {
        self.c_bar_sq
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn l(&self) -> usize {
        self.a.ncols()
    }

    /// Writes the ensemble in the textual exchange format (see `read`).
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = String::new();
        buf.push_str("# dcs-ensemble v1\n");
        let _ = writeln!(buf, "{} {}", self.k(), self.l());
        for (i, ci) in self.c.iter().enumerate() {
            if i > 0 {
                buf.push(' ');
            }
            let _ = write!(buf, "{ci}");
        }
        buf.push('\n');
        for j in 0..self.k() {
            for i in 0..self.l() {
                if i > 0 {
                    buf.push(' ');
                }
                let _ = write!(buf, "{}", self.u[(j, i)]);
            }
            buf.push('\n');
        }
        w.write_all(buf.as_bytes())
    }

    /// Reads the textual format written by [`MeasurementEnsemble::write`]:
    /// a `# dcs-ensemble v1` header line, a `K L` dimension line, one line
    /// with the `L` column scalings, then `K` lines with the rows of `U`.
    /// Values round-trip exactly through the default float formatting.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::Config {
            line,
            message: message.to_string(),
        };
        let mut lines = r.lines().enumerate();
        let mut next_line = || -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(text))) => Ok((n + 1, text)),
                Some((n, Err(e))) => Err(Error::Config {
                    line: n + 1,
                    message: format!("read failed: {e}"),
                }),
                None => Err(Error::Config {
                    line: 0,
                    message: "unexpected end of file".to_string(),
                }),
            }
        };

        let (n, header) = next_line()?;
        if header.trim() != "# dcs-ensemble v1" {
            return Err(bad(n, "expected header '# dcs-ensemble v1'"));
        }
        let (n, dims) = next_line()?;
        let mut it = dims.split_whitespace();
        let k: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(n, "expected K"))?;
        let l: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(n, "expected L"))?;
        if it.next().is_some() {
            return Err(bad(n, "trailing tokens after dimensions"));
        }
        if k == 0 || l == 0 || k > l {
            return Err(bad(n, "dimensions must satisfy 0 < K <= L"));
        }

        let parse_row = |n: usize, text: &str, want: usize| -> Result<Vec<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                text.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| Error::Config {
                line: n,
                message: format!("bad number: {e}"),
            })?;
            if vals.len() != want {
                return Err(Error::Config {
                    line: n,
                    message: format!("expected {want} values, found {}", vals.len()),
                });
            }
            Ok(vals)
        };

        let (n, c_line) = next_line()?;
        let c = parse_row(n, &c_line, l)?;
        if c.iter().any(|&ci| !(ci > 0.0) || !ci.is_finite()) {
            return Err(bad(n, "column scalings must be positive and finite"));
        }
        let mut u = DMatrix::zeros(k, l);
        for j in 0..k {
            let (n, row) = next_line()?;
            let vals = parse_row(n, &row, l)?;
            for i in 0..l {
                u[(j, i)] = vals[i];
            }
        }

        let c = DVector::from_vec(c);
        let mut a = u.clone();
        for i in 0..l {
            a.column_mut(i).scale_mut(c[i]);
        }
        let c_bar_sq = c.iter().map(|ci| ci * ci).sum::<f64>() / l as f64;
        Ok(MeasurementEnsemble { a, u, c, c_bar_sq })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(&mut file).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn check_dims(k: usize, l: usize) -> Result<()> {
    if k == 0 || k > l {
        return Err(Error::invalid(format!(
            "need 0 < K <= L, got K={k}, L={l}"
        )));
    }
    Ok(())
}

/// Selects `k` distinct row indices uniformly at random, ascending.
fn select_rows<R: Rng + ?Sized>(k: usize, l: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = sample(rng, l, k).into_iter().collect();
    idx.sort_unstable();
    idx
}

/// Builds an ensemble from the left orthogonal SVD factor of an `L×L`
/// standard Gaussian matrix: `K` distinct rows of that factor are selected
/// uniformly at random and the columns rescaled to unit norm.
pub fn build_svd_ensemble<R: Rng + ?Sized>(
    k: usize,
    l: usize,
    rng: &mut R,
) -> Result<MeasurementEnsemble> {
    check_dims(k, l)?;
    let g = DMatrix::from_fn(l, l, |_, _| StandardNormal.sample(rng));
    let svd = g.svd(true, false);
    let m = svd
        .u
        .ok_or_else(|| Error::NumericalBreakdown("SVD did not produce an orthogonal factor".into()))?;
    let rows = select_rows(k, l, rng);
    let u = DMatrix::from_fn(k, l, |j, i| m[(rows[j], i)]);
    MeasurementEnsemble::from_rows(u)
}

/// Builds an ensemble from a random row subset of the orthonormal DCT-II
/// matrix instead of a random orthogonal factor. Provided for structured
/// transforms; not used by the default experiments.
pub fn build_dct_ensemble<R: Rng + ?Sized>(
    k: usize,
    l: usize,
    rng: &mut R,
) -> Result<MeasurementEnsemble> {
    check_dims(k, l)?;
    let rows = select_rows(k, l, rng);
    let ln = l as f64;
    let u = DMatrix::from_fn(k, l, |j, i| {
        let r = rows[j] as f64;
        let scale = if rows[j] == 0 { (1.0 / ln).sqrt() } else { (2.0 / ln).sqrt() };
        scale * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * r / (2.0 * ln)).cos()
    });
    MeasurementEnsemble::from_rows(u)
}

/// Applies the channel: `y = A·x + n` with i.i.d. zero-mean Gaussian noise
/// of the given per-component variance.
pub fn apply_channel<R: Rng + ?Sized>(
    ensemble: &MeasurementEnsemble,
    x: &SparseSignal,
    sigma_n_sq: f64,
    rng: &mut R,
) -> Result<ChannelOutput> {
    if x.len() != ensemble.l() {
        return Err(Error::invalid(format!(
            "signal length {} does not match ensemble L={}",
            x.len(),
            ensemble.l()
        )));
    }
    if sigma_n_sq < 0.0 || !sigma_n_sq.is_finite() {
        return Err(Error::invalid("noise variance must be finite and >= 0"));
    }
    let mut y = ensemble.matrix() * x.values();
    if sigma_n_sq > 0.0 {
        let sigma = sigma_n_sq.sqrt();
        for v in y.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *v += sigma * n;
        }
    }
    Ok(ChannelOutput { y, sigma_n_sq })
}

/// Converts a noise level `1/σ_n²` in dB to the linear variance σ_n².
pub fn noise_level_db_to_variance(level_db: f64) -> f64 {
    10f64.powf(-level_db / 10.0)
}
