//! Experiment configuration files (TOML, flat keys, `schema_version = 1`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::RhoParams;
use crate::error::{Error, Result};
use crate::theory::optimal_rho_plus;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Histogram,
    SweepEps,
    SweepRho,
    SweepGamma,
    EstimateNoise,
    Multiclass,
    RealData,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Histogram => "histogram",
            ExperimentKind::SweepEps => "sweep-eps",
            ExperimentKind::SweepRho => "sweep-rho",
            ExperimentKind::SweepGamma => "sweep-gamma",
            ExperimentKind::EstimateNoise => "estimate-noise",
            ExperimentKind::Multiclass => "multiclass",
            ExperimentKind::RealData => "real-data",
        }
    }

    fn needs_grid(self) -> bool {
        matches!(
            self,
            ExperimentKind::SweepEps
                | ExperimentKind::SweepRho
                | ExperimentKind::SweepGamma
                | ExperimentKind::EstimateNoise
        )
    }

    fn uses_variants(self) -> bool {
        matches!(
            self,
            ExperimentKind::Histogram
                | ExperimentKind::SweepEps
                | ExperimentKind::SweepGamma
                | ExperimentKind::RealData
        )
    }
}

/// A classifier choice. Written in config files as `naive`, `unbiased`,
/// `optimized`, `oracle` or `custom(rho_plus, rho_minus)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Naive,
    /// `rho = eps`.
    Unbiased,
    /// `rho_plus` at the closed-form optimum, `rho_minus = 0`.
    Optimized,
    /// Trained on the clean labels.
    Oracle,
    Custom {
        rho_plus: f64,
        rho_minus: f64,
    },
}

impl Variant {
    pub const TABLE: [Variant; 4] = [Variant::Naive, Variant::Unbiased, Variant::Optimized, Variant::Oracle];

    /// `None` for the oracle, which trains with naive targets on clean labels.
    pub fn rho(&self, pi1: f64, eps_plus: f64, eps_minus: f64) -> Result<Option<RhoParams>> {
        Ok(match *self {
            Variant::Naive => Some(RhoParams::naive()),
            Variant::Unbiased => Some(RhoParams::unbiased(eps_plus, eps_minus)?),
            Variant::Optimized => Some(RhoParams::new(optimal_rho_plus(pi1, eps_plus, eps_minus, 0.0)?, 0.0)?),
            Variant::Oracle => None,
            Variant::Custom { rho_plus, rho_minus } => Some(RhoParams::new(rho_plus, rho_minus)?),
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Naive => f.write_str("naive"),
            Variant::Unbiased => f.write_str("unbiased"),
            Variant::Optimized => f.write_str("optimized"),
            Variant::Oracle => f.write_str("oracle"),
            Variant::Custom { rho_plus, rho_minus } => write!(f, "custom({rho_plus},{rho_minus})"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "naive" => return Ok(Variant::Naive),
            "unbiased" => return Ok(Variant::Unbiased),
            "optimized" => return Ok(Variant::Optimized),
            "oracle" => return Ok(Variant::Oracle),
            _ => {}
        }
        let bad = || Error::Config(format!("unknown variant '{s}'"));
        let inner = s
            .strip_prefix("custom(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        Ok(Variant::Custom {
            rho_plus: parse(a)?,
            rho_minus: parse(b)?,
        })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Squared,
    Bce,
}

/// Resolved experiment description. Every field except `experiment` and
/// `schema_version` has a default; see [`ExperimentConfig::defaults`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub n: usize,
    pub p: usize,
    pub pi1: f64,
    pub snr: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    /// Ridge parameter; ignored when `optimal_gamma` is set.
    pub gamma: f64,
    /// Pick gamma by maximizing the predicted oracle accuracy.
    pub optimal_gamma: bool,
    pub variants: Vec<Variant>,
    /// `eps_plus`, `rho_plus`, `gamma`, true `eps_plus` or `tau` values, by experiment.
    pub grid: Vec<f64>,
    /// Fixed `rho_minus` of the `rho_plus` sweep.
    pub rho_minus: f64,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub bins: usize,
    pub loss: Loss,
    pub learning_rate: f64,
    pub iters: usize,
    /// Two `[rho_plus, rho_minus]` probe couples.
    pub probes: Vec<[f64; 2]>,
    /// Replace `pi1` and `snr` by estimates from the standardized data.
    pub estimate_moments: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    /// Header name or zero-based index of the label field.
    pub label_column: String,
    pub has_header: bool,
    pub test_fraction: f64,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_pi: Option<Vec<f64>>,
    /// `flip_matrix[a][b] = P(noisy = a | true = b)`, zero-based classes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip_matrix: Option<Vec<Vec<f64>>>,
    pub grid_size: usize,
    pub box_half_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_seeds: Option<Vec<u64>>,
    pub candidate_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::defaults(ExperimentKind::Histogram)
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment,
            n: 1000,
            p: 100,
            pi1: 0.5,
            snr: 2.0,
            eps_plus: 0.0,
            eps_minus: 0.0,
            gamma: 1.0,
            optimal_gamma: false,
            variants: Variant::TABLE.to_vec(),
            grid: Vec::new(),
            rho_minus: 0.0,
            seeds: vec![1],
            n_test: 10_000,
            bins: 60,
            loss: Loss::Squared,
            learning_rate: 0.1,
            iters: 2000,
            probes: vec![[0.0, 0.1], [0.0, 0.4]],
            estimate_moments: false,
            data_path: None,
            label_column: "label".into(),
            has_header: true,
            test_fraction: 0.25,
            k: 3,
            class_pi: None,
            flip_matrix: None,
            grid_size: 5000,
            box_half_width: 2.0,
            validation_seeds: None,
            candidate_seed: 0xAB,
            out: None,
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for key in ["schema_version", "experiment"] {
            if !table.contains_key(key) {
                return Err(Error::Config(format!("missing required key '{key}'")));
            }
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative data paths are read from the config's directory
        if let (Some(data), Some(dir)) = (&cfg.data_path, path.parent()) {
            if data.is_relative() {
                cfg.data_path = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n < 2 || self.p < 1 {
            return bad("need n >= 2 and p >= 1".into());
        }
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return bad(format!("pi1 = {} must lie in (0, 1)", self.pi1));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return bad(format!("snr = {} must be finite and >= 0", self.snr));
        }
        if !(self.eps_plus >= 0.0 && self.eps_minus >= 0.0 && self.eps_plus + self.eps_minus < 1.0) {
            return bad("noise rates need eps_plus, eps_minus >= 0 and eps_plus + eps_minus < 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must be > 0", self.gamma));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.experiment.needs_grid() && self.grid.is_empty() {
            return bad(format!("{} needs a nonempty grid", self.experiment.as_str()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("grid must be finite and strictly increasing".into());
        }
        if self.experiment == ExperimentKind::SweepGamma && self.grid.iter().any(|&g| g <= 0.0) {
            return bad("gamma grid values must be > 0".into());
        }
        if self.experiment.uses_variants() && self.variants.is_empty() {
            return bad("variants must be nonempty".into());
        }
        if self.n_test < 2 || self.bins == 0 {
            return bad("need n_test >= 2 and bins >= 1".into());
        }
        if !(self.learning_rate > 0.0) || self.iters == 0 {
            return bad("need learning_rate > 0 and iters >= 1".into());
        }
        if self.probes.len() != 2 {
            return bad(format!("expected 2 probes, got {}", self.probes.len()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)".into());
        }
        if self.experiment == ExperimentKind::Multiclass {
            if self.k < 2 || self.grid_size == 0 {
                return bad("multiclass needs k >= 2 and grid_size >= 1".into());
            }
            if !(self.box_half_width > 0.0) {
                return bad("box_half_width must be > 0".into());
            }
            if matches!(&self.validation_seeds, Some(v) if v.is_empty()) {
                return bad("validation_seeds must be nonempty".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }

    /// Ridge parameter used for training and theory.
    pub fn resolved_gamma(&self) -> Result<f64> {
        if self.optimal_gamma {
            crate::theory::optimal_gamma(self.p as f64 / self.n as f64, self.pi1, self.snr)
        } else {
            Ok(self.gamma)
        }
    }

    /// Tau grid of the multiclass path: `grid`, or `0, 0.1, ..., 1`.
    pub fn tau_grid(&self) -> Vec<f64> {
        if self.grid.is_empty() {
            (0..=10).map(|i| i as f64 / 10.0).collect()
        } else {
            self.grid.clone()
        }
    }

    /// SHA-256 of the canonical serialization without `out` and `threads`,
    /// which do not change results.
    pub fn hash(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            out: None,
            threads: None,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_text_round_trip() {
        for v in [
            Variant::Naive,
            Variant::Unbiased,
            Variant::Optimized,
            Variant::Oracle,
            Variant::Custom {
                rho_plus: 0.2,
                rho_minus: 0.0,
            },
        ] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            " custom( 1.5 , -0.25 ) ".parse::<Variant>().unwrap(),
            Variant::Custom {
                rho_plus: 1.5,
                rho_minus: -0.25
            }
        );
        assert!("custom(1)".parse::<Variant>().is_err());
        assert!("best".parse::<Variant>().is_err());
    }

    #[test]
    fn parses_minimal_and_full_files() {
        let cfg = ExperimentConfig::from_toml("schema_version = 1\nexperiment = \"histogram\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(ExperimentKind::Histogram));
        let text = r#"
            schema_version = 1
            experiment = "sweep-eps"
            n = 100
            p = 50
            pi1 = 0.3333
            eps_minus = 0.2
            gamma = 10.0
            variants = ["naive", "custom(0.2,0)"]
            grid = [0.0, 0.1, 0.2]
            seeds = [1, 2, 3]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::SweepEps);
        assert_eq!(
            cfg.variants[1],
            Variant::Custom {
                rho_plus: 0.2,
                rho_minus: 0.0
            }
        );
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_invalid_files() {
        let base = "schema_version = 1\nexperiment = \"sweep-eps\"\n";
        for extra in [
            "",
            "grid = [0.2, 0.1]",
            "grid = [0.1]\nseeds = []",
            "grid = [0.1]\nvariants = []",
            "grid = [0.1]\nunknown_key = 3",
            "grid = [0.1]\neps_plus = 0.6\neps_minus = 0.5",
            "grid = [0.1]\nvariants = [\"best\"]",
        ] {
            let text = format!("{base}{extra}\n");
            assert!(
                matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))),
                "{extra}"
            );
        }
        assert!(ExperimentConfig::from_toml("schema_version = 2\nexperiment = \"histogram\"\n").is_err());
        assert!(ExperimentConfig::from_toml("schema_version = 1\n").is_err());
    }

    #[test]
    fn hash_ignores_output_and_threads_only() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Histogram);
        let h = cfg.hash().unwrap();
        assert_eq!(h.len(), 64);
        let moved = ExperimentConfig {
            out: Some("elsewhere".into()),
            threads: Some(3),
            ..cfg.clone()
        };
        assert_eq!(moved.hash().unwrap(), h);
        let changed = ExperimentConfig {
            snr: 2.0000001,
            ..cfg.clone()
        };
        assert_ne!(changed.hash().unwrap(), h);
        let seeds = ExperimentConfig {
            seeds: vec![1, 2],
            ..cfg
        };
        assert_ne!(seeds.hash().unwrap(), h);
    }

    #[test]
    fn optimized_variant_uses_closed_form() {
        let rho = Variant::Optimized.rho(0.3, 0.4, 0.3).unwrap().unwrap();
        assert!((rho.rho_plus() - optimal_rho_plus(0.3, 0.4, 0.3, 0.0).unwrap()).abs() < 1e-15);
        assert_eq!(Variant::Oracle.rho(0.3, 0.4, 0.3).unwrap(), None);
    }
}
