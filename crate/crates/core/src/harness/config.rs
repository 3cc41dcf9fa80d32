//! Experiment description: problem shape, noise grid, algorithm roster, and
//! the versioned text format that stores it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::algorithms::{GenieMode, RecoveryConfig};
use crate::{Error, Result};

/// Recovery algorithms the driver can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    ImsQ,
    ImsQGenie(GenieMode),
    TsrQ,
    IhtQ,
    IstQ,
    OmpQ,
    MlOracle,
}

impl Algorithm {
    /// Stable identifier used in config files, CSV output, and plot legends.
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::ImsQ => "ims_q",
            Algorithm::ImsQGenie(GenieMode::None) => "ims_q_genie_none",
            Algorithm::ImsQGenie(GenieMode::TrueEe) => "ims_q_genie_ee",
            Algorithm::ImsQGenie(GenieMode::TrueDd) => "ims_q_genie_dd",
            Algorithm::ImsQGenie(GenieMode::Both) => "ims_q_genie_both",
            Algorithm::TsrQ => "tsr_q",
            Algorithm::IhtQ => "iht_q",
            Algorithm::IstQ => "ist_q",
            Algorithm::OmpQ => "omp_q",
            Algorithm::MlOracle => "ml_oracle",
        }
    }

    /// Every label accepted by [`Algorithm::from_str`].
    pub fn all_labels() -> &'static [&'static str] {
        &[
            "ims_q",
            "ims_q_genie_none",
            "ims_q_genie_ee",
            "ims_q_genie_dd",
            "ims_q_genie_both",
            "tsr_q",
            "iht_q",
            "ist_q",
            "omp_q",
            "ml_oracle",
        ]
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ims_q" => Algorithm::ImsQ,
            "ims_q_genie_none" => Algorithm::ImsQGenie(GenieMode::None),
            "ims_q_genie_ee" => Algorithm::ImsQGenie(GenieMode::TrueEe),
            "ims_q_genie_dd" => Algorithm::ImsQGenie(GenieMode::TrueDd),
            "ims_q_genie_both" => Algorithm::ImsQGenie(GenieMode::Both),
            "tsr_q" => Algorithm::TsrQ,
            "iht_q" => Algorithm::IhtQ,
            "ist_q" => Algorithm::IstQ,
            "omp_q" => Algorithm::OmpQ,
            "ml_oracle" => Algorithm::MlOracle,
            other => return Err(Error::invalid(format!("unknown algorithm `{other}`"))),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One roster slot: an algorithm plus its knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmEntry {
    pub algorithm: Algorithm,
    pub config: RecoveryConfig,
}

impl AlgorithmEntry {
    pub fn new(algorithm: Algorithm) -> Self {
        let mut config = RecoveryConfig::default();
        if let Algorithm::ImsQGenie(mode) = algorithm {
            config.genie_mode = mode;
        }
        AlgorithmEntry { algorithm, config }
    }

    pub fn with_genie(mode: GenieMode) -> Self {
        Self::new(Algorithm::ImsQGenie(mode))
    }

    pub fn with_config(algorithm: Algorithm, config: RecoveryConfig) -> Self {
        AlgorithmEntry { algorithm, config }
    }
}

/// Whether each trial draws its own measurement matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    /// Independent matrix per trial; the reported rate averages over the
    /// ensemble.
    #[default]
    FreshPerTrial,
    /// One matrix, derived from the master seed, shared by all trials.
    Fixed,
}

/// Greedy-baseline iteration counts for the stock noise grid, chosen so the
/// pursuit can always pick slightly more atoms than the expected support.
pub const DEFAULT_OMP_ITERS: [(f64, usize); 7] = [
    (15.0, 23),
    (16.0, 25),
    (17.0, 26),
    (18.0, 28),
    (19.0, 30),
    (20.0, 31),
    (21.0, 33),
];

/// Full description of one Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Signal length.
    pub l: usize,
    /// Measurement count.
    pub k: usize,
    /// Number of nonzero symbols.
    pub s: usize,
    /// Noise levels in dB; the noise variance is `10^(-dB/10)`.
    pub noise_levels_db: Vec<f64>,
    /// Trials per noise level.
    pub trials: usize,
    pub algorithms: Vec<AlgorithmEntry>,
    pub master_seed: u64,
    pub ensemble_mode: EnsembleMode,
    /// Per-level soft-threshold shrinkage `(level_db, tau)`; consulted when
    /// an entry does not pin `ist_tau` itself.
    pub ist_tau_table: Vec<(f64, f64)>,
    /// Per-level greedy iteration counts `(level_db, iters)`; the nearest
    /// level is used when an entry does not pin `omp_iters` itself.
    pub omp_iters_table: Vec<(f64, usize)>,
    pub csv_path: Option<PathBuf>,
    pub svg_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        l: usize,
        k: usize,
        s: usize,
        noise_levels_db: Vec<f64>,
        trials: usize,
        master_seed: u64,
    ) -> Self {
        ExperimentConfig {
            l,
            k,
            s,
            noise_levels_db,
            trials,
            algorithms: Vec::new(),
            master_seed,
            ensemble_mode: EnsembleMode::default(),
            ist_tau_table: Vec::new(),
            omp_iters_table: DEFAULT_OMP_ITERS.to_vec(),
            csv_path: None,
            svg_path: None,
        }
    }

    /// The stock noise grid: 15 dB through 21 dB in 1 dB steps.
    pub fn default_grid() -> Vec<f64> {
        (15..=21).map(f64::from).collect()
    }

    /// The reference problem shape: half-rate measurement of a length-258
    /// vector with 20 nonzero symbols, 2000 trials per level.
    pub fn reference_experiment(master_seed: u64) -> Self {
        let mut cfg = ExperimentConfig::new(258, 129, 20, Self::default_grid(), 2000, master_seed);
        cfg.algorithms = vec![
            AlgorithmEntry::new(Algorithm::ImsQ),
            AlgorithmEntry::new(Algorithm::TsrQ),
            AlgorithmEntry::new(Algorithm::IhtQ),
            AlgorithmEntry::new(Algorithm::IstQ),
            AlgorithmEntry::new(Algorithm::OmpQ),
        ];
        cfg
    }

    /// Sanity checks that do not require running anything.
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.k == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.s > self.l {
            return Err(Error::invalid("sparsity exceeds signal length"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if self.noise_levels_db.is_empty() {
            return Err(Error::invalid("noise grid is empty"));
        }
        if self.noise_levels_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("noise levels must be finite"));
        }
        for entry in &self.algorithms {
            entry.config.validate()?;
            if let Algorithm::ImsQGenie(mode) = entry.algorithm {
                if entry.config.genie_mode != mode {
                    return Err(Error::invalid(
                        "genie entry disagrees with its config genie_mode",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Final per-algorithm configs for one noise level: fills the shrinkage
    /// and greedy iteration knobs from the per-level tables where an entry
    /// left them open.
    pub fn resolve_configs(&self, level_db: f64) -> Result<Vec<(Algorithm, RecoveryConfig)>> {
        self.algorithms
            .iter()
            .map(|entry| {
                let mut config = entry.config.clone();
                match entry.algorithm {
                    Algorithm::ImsQ => config.genie_mode = GenieMode::None,
                    Algorithm::ImsQGenie(mode) => config.genie_mode = mode,
                    Algorithm::IstQ => {
                        if config.ist_tau.is_none() {
                            let tau = self
                                .ist_tau_table
                                .iter()
                                .find(|(db, _)| (db - level_db).abs() < 1e-9)
                                .map(|(_, tau)| *tau)
                                .ok_or_else(|| {
                                    Error::invalid(format!(
                                        "no shrinkage configured for {level_db} dB; \
                                         run the tuner or set ist_tau"
                                    ))
                                })?;
                            config.ist_tau = Some(tau);
                        }
                    }
                    Algorithm::OmpQ => {
                        if config.omp_iters.is_none() {
                            let iters = self
                                .omp_iters_table
                                .iter()
                                .min_by(|(a, _), (b, _)| {
                                    (a - level_db)
                                        .abs()
                                        .total_cmp(&(b - level_db).abs())
                                        .then(a.total_cmp(b))
                                })
                                .map(|(_, iters)| *iters)
                                .ok_or_else(|| {
                                    Error::invalid(format!(
                                        "no greedy iteration count configured for {level_db} dB"
                                    ))
                                })?;
                            config.omp_iters = Some(iters);
                        }
                    }
                    _ => {}
                }
                Ok((entry.algorithm, config))
            })
            .collect()
    }

    /// Parses the versioned key-value text format. See the repository
    /// README for the schema.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config { line: 1, message: "empty config".into() })?;
        if header.1.trim() != "# dcs-config v1" {
            return Err(Error::Config {
                line: 1,
                message: "expected header `# dcs-config v1`".into(),
            });
        }

        let mut l = None;
        let mut k = None;
        let mut s = None;
        let mut trials = None;
        let mut master_seed = None;
        let mut noise_levels_db = None;
        let mut algorithms = None;
        let mut ensemble_mode = None;
        let mut max_iters = None;
        let mut early_exit_tol: Option<Option<f64>> = None;
        let mut ist_tau_table = None;
        let mut omp_iters_table = None;
        let mut csv_path = None;
        let mut svg_path = None;
        let mut seen = BTreeSet::new();

        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let bad = |message: String| Error::Config { line: line_no, message };
            match key {
                "l" => l = Some(parse_num::<usize>(value).map_err(bad)?),
                "k" => k = Some(parse_num::<usize>(value).map_err(bad)?),
                "s" => s = Some(parse_num::<usize>(value).map_err(bad)?),
                "trials" => trials = Some(parse_num::<usize>(value).map_err(bad)?),
                "master_seed" => master_seed = Some(parse_num::<u64>(value).map_err(bad)?),
                "noise_levels_db" => {
                    noise_levels_db = Some(parse_f64_list(value).map_err(bad)?);
                }
                "algorithms" => {
                    let entries: Result<Vec<_>> = value
                        .split(',')
                        .map(|item| Algorithm::from_str(item.trim()).map(AlgorithmEntry::new))
                        .collect();
                    algorithms = Some(entries.map_err(|e| bad(e.to_string()))?);
                }
                "ensemble_mode" => {
                    ensemble_mode = Some(match value {
                        "fresh_per_trial" => EnsembleMode::FreshPerTrial,
                        "fixed" => EnsembleMode::Fixed,
                        other => {
                            return Err(bad(format!(
                                "unknown ensemble mode `{other}` \
                                 (expected fresh_per_trial or fixed)"
                            )))
                        }
                    });
                }
                "max_iters" => max_iters = Some(parse_num::<usize>(value).map_err(bad)?),
                "early_exit_tol" => {
                    early_exit_tol = Some(if value == "none" {
                        None
                    } else {
                        Some(parse_num::<f64>(value).map_err(bad)?)
                    });
                }
                "ist_tau_table" => {
                    ist_tau_table = Some(
                        parse_pairs(value, parse_num::<f64>)
                            .map_err(bad)?,
                    );
                }
                "omp_iters_table" => {
                    omp_iters_table = Some(
                        parse_pairs(value, parse_num::<usize>)
                            .map_err(bad)?,
                    );
                }
                "csv" => csv_path = Some(PathBuf::from(value)),
                "svg" => svg_path = Some(PathBuf::from(value)),
                other => {
                    return Err(bad(format!("unknown key `{other}`")));
                }
            }
        }

        let missing = |name: &str| Error::Config {
            line: 1,
            message: format!("missing required key `{name}`"),
        };
        let mut cfg = ExperimentConfig::new(
            l.ok_or_else(|| missing("l"))?,
            k.ok_or_else(|| missing("k"))?,
            s.ok_or_else(|| missing("s"))?,
            noise_levels_db.unwrap_or_else(Self::default_grid),
            trials.ok_or_else(|| missing("trials"))?,
            master_seed.ok_or_else(|| missing("master_seed"))?,
        );
        cfg.algorithms = algorithms.unwrap_or_else(|| {
            ExperimentConfig::reference_experiment(0).algorithms
        });
        if let Some(mode) = ensemble_mode {
            cfg.ensemble_mode = mode;
        }
        if let Some(table) = ist_tau_table {
            cfg.ist_tau_table = table;
        }
        if let Some(table) = omp_iters_table {
            cfg.omp_iters_table = table;
        }
        for entry in &mut cfg.algorithms {
            if let Some(iters) = max_iters {
                entry.config.max_iters = iters;
            }
            if let Some(tol) = early_exit_tol {
                entry.config.early_exit_tol = tol;
            }
        }
        cfg.csv_path = csv_path;
        cfg.svg_path = svg_path;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file in the format produced by [`Self::from_text`]'s
    /// inverse; see the README for the schema.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_num<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("invalid value `{value}`: {e}"))
}

fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|item| parse_num::<f64>(item.trim())).collect()
}

/// Parses `level:value, level:value, ...` pairs.
fn parse_pairs<T>(
    value: &str,
    parse_value: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<(f64, T)>, String> {
    value
        .split(',')
        .map(|item| {
            let (db, v) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("expected `level:value`, got `{item}`"))?;
            Ok((parse_num::<f64>(db.trim())?, parse_value(v.trim())?))
        })
        .collect()
}
