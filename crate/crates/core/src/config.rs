//! Run configuration in TOML.
//!
//! Every field is optional. Sample ranges, combinations and fusion default by
//! mode; the resolved form serializes back to a file that parses to itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LfMode;
use crate::dispnet::{DispNetConfig, Sampling};
use crate::error::{io_err, Error, Result};
use crate::fusion::{FusionConfig, FusionStrategy, OcclusionHandling};
use crate::lightfield::AuxiliaryViews;
use crate::occlusion::OccNetConfig;
use crate::pipeline::PipelineConfig;
use crate::samples::SampleRange;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    coarse: Option<SampleRange>,
    residual: Option<SampleRange>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInference {
    offsets: Option<Vec<usize>>,
    aux: Option<AuxiliaryViews>,
    exclude_input_views: Option<bool>,
    strategy: Option<FusionStrategy>,
    occlusion: Option<OcclusionHandling>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<LfMode>,
    #[serde(default)]
    sampling: RawSampling,
    #[serde(default)]
    inference: RawInference,
    #[serde(default)]
    dispnet: DispNetConfig,
    #[serde(default)]
    occnet: OccNetConfig,
    #[serde(default)]
    train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub coarse: SampleRange,
    pub residual: SampleRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Baselines of the row and column combinations.
    pub offsets: Vec<usize>,
    pub aux: AuxiliaryViews,
    pub exclude_input_views: bool,
    pub strategy: FusionStrategy,
    pub occlusion: OcclusionHandling,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub mode: LfMode,
    pub sampling: SamplingConfig,
    pub inference: InferenceConfig,
    pub dispnet: DispNetConfig,
    pub occnet: OccNetConfig,
    pub train: TrainConfig,
}

fn range(min: f64, max: f64, interval: f64) -> SampleRange {
    SampleRange { min, max, interval }
}

impl Config {
    /// All defaults for `mode`.
    pub fn for_mode(mode: LfMode) -> Self {
        Self::resolve(RawConfig::default(), Some(mode))
    }

    fn resolve(raw: RawConfig, mode_override: Option<LfMode>) -> Self {
        let mode = mode_override.or(raw.mode).unwrap_or(LfMode::Dense);
        let (coarse, residual, offsets, strategy) = match mode {
            LfMode::Dense => (
                range(-12.0, 12.0, 1.0),
                range(-1.0, 1.0, 0.1),
                vec![2, 3],
                FusionStrategy::Weighted { n: 2 },
            ),
            LfMode::Sparse => (range(-20.0, 20.0, 1.2), range(-2.0, 2.0, 0.12), vec![1], FusionStrategy::MinError),
        };
        let fusion = FusionConfig::default();
        let inf = raw.inference;
        Self {
            mode,
            sampling: SamplingConfig {
                coarse: raw.sampling.coarse.unwrap_or(coarse),
                residual: raw.sampling.residual.unwrap_or(residual),
            },
            inference: InferenceConfig {
                offsets: inf.offsets.unwrap_or(offsets),
                aux: inf.aux.unwrap_or_default(),
                exclude_input_views: inf.exclude_input_views.unwrap_or(true),
                strategy: inf.strategy.unwrap_or(strategy),
                occlusion: inf.occlusion.unwrap_or(fusion.occlusion),
            },
            dispnet: raw.dispnet,
            occnet: raw.occnet,
            train: raw.train,
        }
    }

    /// Parses TOML text; `mode_override` beats the file's `mode`.
    pub fn from_toml(text: &str, mode_override: Option<LfMode>) -> std::result::Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        Ok(Self::resolve(raw, mode_override))
    }

    pub fn load(path: &Path, mode_override: Option<LfMode>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, mode_override).map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Writes the resolved configuration.
    pub fn echo(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(io_err(path))
    }

    pub fn sampling(&self) -> Result<Sampling> {
        Sampling::from_ranges(&self.sampling.coarse, &self.sampling.residual)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            sampling: self.sampling()?,
            offsets: self.inference.offsets.clone(),
            aux: self.inference.aux.clone(),
            exclude_input_views: self.inference.exclude_input_views,
            fusion: FusionConfig {
                strategy: self.inference.strategy,
                occlusion: self.inference.occlusion,
            },
        })
    }
}
