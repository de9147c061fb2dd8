//! Experiment configuration, read from TOML.
//!
//! Every field has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use intsense_core::design::{Acceleration, ConstraintScaling, SvtConfig};
use intsense_core::transforms::{max_levels, WaveletFamily};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub design: DesignConfig,
    pub evaluate: EvaluateConfig,
    pub heatmap: HeatmapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    /// Side length test images are area-resampled to; 0 keeps the source size.
    pub working_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub block_side: usize,
    pub wavelet: String,
    /// Decomposition depth; the maximum for the block size when absent.
    pub levels: Option<usize>,
    pub beta_grid: Vec<f64>,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccelerationChoice {
    None,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingChoice {
    None,
    RowNorm,
    DataNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Allowed failure probability; the guarantee level is `1 − eps`.
    pub eps: f64,
    pub n_components: usize,
    pub quantile: f64,
    /// Replace the corpus targets by `δ = 0` (exact interpolation).
    pub zero_delta: bool,
    pub tau: Option<f64>,
    pub tau_factor: f64,
    pub step_factor: f64,
    pub max_iterations: usize,
    /// Feasibility tolerance as a fraction of `max_i ‖b_i‖`.
    pub feas_tol: f64,
    pub rel_tol: f64,
    pub power_iterations: usize,
    pub acceleration: AccelerationChoice,
    pub scaling: ScalingChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub ranks: Vec<usize>,
    pub filters: Vec<usize>,
    pub pca_baseline: bool,
    pub identity_row: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatmapOperator {
    Design,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    /// Test image id; the first test image when absent.
    pub image: Option<String>,
    /// Design rank used; half the design rank when absent.
    pub rank: Option<usize>,
    pub filter: usize,
    pub operator: HeatmapOperator,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            design: DesignConfig::default(),
            evaluate: EvaluateConfig::default(),
            heatmap: HeatmapConfig::default(),
        }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train: PathBuf::from("corpus/train"),
            test: PathBuf::from("corpus/test"),
            working_size: 0,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            block_side: 8,
            wavelet: "db4".into(),
            levels: None,
            beta_grid: vec![0.3, 0.4, 0.5, 0.6, 0.68, 0.7, 0.8, 0.9, 1.0],
            histogram_bins: intsense_core::ggd::DEFAULT_HISTOGRAM_BINS,
        }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        let svt = SvtConfig::default();
        Self {
            eps: 0.05,
            n_components: 10,
            quantile: 0.95,
            zero_delta: false,
            tau: None,
            tau_factor: svt.tau_factor,
            step_factor: svt.step_factor,
            max_iterations: svt.max_iterations,
            feas_tol: 1e-6,
            rel_tol: svt.rel_tol,
            power_iterations: svt.power_iterations,
            acceleration: AccelerationChoice::Nesterov,
            scaling: ScalingChoice::DataNorm,
        }
    }
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            ranks: vec![2, 4, 6, 8],
            filters: vec![3, 5, 7],
            pca_baseline: true,
            identity_row: true,
        }
    }
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            image: None,
            rank: None,
            filter: 7,
            operator: HeatmapOperator::Design,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let config: Config = toml::from_str(&text).map_err(|source| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.model.block_side;
        if f < 2 || !f.is_power_of_two() {
            return Err(HarnessError::Config(format!(
                "block_side must be a power of two >= 2, got {f}"
            )));
        }
        self.wavelet()?;
        if let Some(l) = self.model.levels {
            if l == 0 || l > max_levels(f) {
                return Err(HarnessError::Config(format!(
                    "levels must lie in 1..={}, got {l}",
                    max_levels(f)
                )));
            }
        }
        if self.model.beta_grid.is_empty() || self.model.beta_grid.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(HarnessError::Config(
                "beta_grid must be non-empty with entries in (0, 1]".into(),
            ));
        }
        let d = &self.design;
        if !(d.eps > 0.0 && d.eps < 1.0) {
            return Err(HarnessError::Config(format!("eps must lie in (0, 1), got {}", d.eps)));
        }
        if d.n_components == 0 || d.n_components >= f * f {
            return Err(HarnessError::Config(format!("n_components must lie in 1..{}", f * f)));
        }
        if !(d.feas_tol > 0.0) || !(d.rel_tol > 0.0) || !(d.step_factor > 0.0 && d.step_factor <= 2.0) {
            return Err(HarnessError::Config(
                "tolerances must be positive and step_factor in (0, 2]".into(),
            ));
        }
        if let Some(k) = self
            .evaluate
            .filters
            .iter()
            .chain([&self.heatmap.filter])
            .find(|k| *k % 2 == 0)
        {
            return Err(HarnessError::Config(format!("filter sizes must be odd, got {k}")));
        }
        Ok(())
    }

    pub fn wavelet(&self) -> Result<WaveletFamily> {
        self.model
            .wavelet
            .parse()
            .map_err(|e: intsense_core::Error| HarnessError::Config(e.to_string()))
    }

    pub fn levels(&self) -> usize {
        self.model.levels.unwrap_or_else(|| max_levels(self.model.block_side))
    }

    /// Solver settings; `max_b_norm` turns the relative feasibility tolerance
    /// into an absolute one.
    pub fn svt(&self, max_b_norm: f64) -> SvtConfig {
        let d = &self.design;
        SvtConfig {
            tau: d.tau,
            tau_factor: d.tau_factor,
            step_factor: d.step_factor,
            power_iterations: d.power_iterations,
            seed: self.seed,
            max_iterations: d.max_iterations,
            feas_tol: d.feas_tol * max_b_norm,
            rel_tol: d.rel_tol,
            acceleration: match d.acceleration {
                AccelerationChoice::None => Acceleration::None,
                AccelerationChoice::Nesterov => Acceleration::Nesterov,
            },
            scaling: match d.scaling {
                ScalingChoice::None => ConstraintScaling::None,
                ScalingChoice::RowNorm => ConstraintScaling::RowNorm,
                ScalingChoice::DataNorm => ConstraintScaling::DataNorm,
            },
            ..SvtConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        c.validate().unwrap();
    }

    #[test]
    fn roundtrip_and_overrides() {
        let text = "seed = 9\n[model]\nblock_side = 4\nwavelet = \"haar\"\n[design]\nacceleration = \"none\"\nscaling = \"row-norm\"\n";
        let c: Config = toml::from_str(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.block_side, 4);
        assert_eq!(c.design.acceleration, AccelerationChoice::None);
        let back: Config = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.svt(2.0).feas_tol, 2e-6);
        assert_eq!(c.svt(2.0).scaling, ConstraintScaling::RowNorm);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
        let mut c = Config::default();
        c.model.block_side = 6;
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.evaluate.filters = vec![3, 4];
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.model.wavelet = "coif2".into();
        assert!(c.validate().is_err());
    }
}
