use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{AdamWConfig, MlpArchitecture};
use crate::param::ParamOptions;

/// Target-size presets for the fine network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "50KB")]
    Kb50,
    #[serde(rename = "85KB")]
    Kb85,
    #[serde(rename = "165KB")]
    Kb165,
    #[serde(rename = "260KB")]
    Kb260,
    /// Use `custom_hidden_layers` / `custom_hidden_width`.
    #[serde(rename = "custom")]
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Kb50, Preset::Kb85, Preset::Kb165, Preset::Kb260];

    /// `(hidden layers, hidden width)` of the fine network.
    pub fn fine_shape(self) -> Option<(usize, usize)> {
        match self {
            Preset::Kb50 => Some((18, 36)),
            Preset::Kb85 => Some((20, 44)),
            Preset::Kb165 => Some((24, 58)),
            Preset::Kb260 => Some((28, 68)),
            Preset::Custom => None,
        }
    }

    /// Nominal compressed size in bytes (1 KB = 1000 B).
    pub fn label_bytes(self) -> Option<usize> {
        match self {
            Preset::Kb50 => Some(50_000),
            Preset::Kb85 => Some(85_000),
            Preset::Kb165 => Some(165_000),
            Preset::Kb260 => Some(260_000),
            Preset::Custom => None,
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        match s.to_ascii_uppercase().as_str() {
            "50KB" | "50" => Some(Preset::Kb50),
            "85KB" | "85" => Some(Preset::Kb85),
            "165KB" | "165" => Some(Preset::Kb165),
            "260KB" | "260" => Some(Preset::Kb260),
            "CUSTOM" => Some(Preset::Custom),
            _ => None,
        }
    }
}

/// How fine-stage training points are drawn on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineSampling {
    /// Icosphere faces weighted by the coarse map's distortion ratio.
    Distortion,
    /// Uniform directions on the unit sphere.
    UniformSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub coarse_iterations: usize,
    pub fine_iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub preset: Preset,
    pub custom_hidden_layers: Option<usize>,
    pub custom_hidden_width: Option<usize>,
    pub positional_levels: usize,
    /// Icosphere level the distortion table is built on.
    pub distortion_level: usize,
    /// Multiply distortion weights by true icosphere face area.
    pub area_weighted_distortion: bool,
    pub fine_sampling: FineSampling,
    pub smoothing_iterations: usize,
    pub smoothing_lambda: f64,
    pub quantize: bool,
    pub adamw: AdamWConfig,
    pub parameterization: ParamOptions,
    /// Emit one progress record per this many iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            coarse_iterations: 50_000,
            fine_iterations: 15_000,
            batch_size: 2048,
            learning_rate: 1e-3,
            seed: 0,
            preset: Preset::Kb50,
            custom_hidden_layers: None,
            custom_hidden_width: None,
            positional_levels: 10,
            distortion_level: 5,
            area_weighted_distortion: false,
            fine_sampling: FineSampling::Distortion,
            smoothing_iterations: 30,
            smoothing_lambda: 0.5,
            quantize: true,
            adamw: AdamWConfig::default(),
            parameterization: ParamOptions::default(),
            log_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn coarse_architecture(&self) -> MlpArchitecture {
        MlpArchitecture::COARSE
    }

    pub fn fine_architecture(&self) -> Result<MlpArchitecture, TrainError> {
        let (h, w) = match self.preset.fine_shape() {
            Some(shape) => shape,
            None => match (self.custom_hidden_layers, self.custom_hidden_width) {
                (Some(h), Some(w)) => (h, w),
                _ => {
                    return Err(TrainError::InvalidConfig(
                        "custom preset needs custom_hidden_layers and custom_hidden_width".into(),
                    ))
                }
            },
        };
        Ok(MlpArchitecture::new(h, w, self.positional_levels))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.smoothing_iterations > u16::MAX as usize {
            return bad(format!(
                "smoothing iterations {} exceed {}",
                self.smoothing_iterations,
                u16::MAX
            ));
        }
        if !(self.smoothing_lambda > 0.0 && self.smoothing_lambda <= 1.0) {
            return bad(format!("smoothing lambda {} must be in (0, 1]", self.smoothing_lambda));
        }
        if self.distortion_level > 8 {
            return bad(format!("distortion level {} is above 8", self.distortion_level));
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        let arch = self.fine_architecture()?;
        arch.validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        if [arch.input_dim, arch.hidden_layers, arch.hidden_width]
            .iter()
            .any(|&v| v > u16::MAX as usize)
        {
            return bad("fine architecture does not fit the container".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Fine,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
        })
    }
}

/// Mean loss over the iterations since the previous record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Progress {
    pub stage: Stage,
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
}

pub trait ProgressSink {
    fn record(&mut self, progress: &Progress);
}

impl<F: FnMut(&Progress)> ProgressSink for F {
    fn record(&mut self, progress: &Progress) {
        self(progress)
    }
}

/// Discards progress records.
pub struct Silent;

impl ProgressSink for Silent {
    fn record(&mut self, _: &Progress) {}
}

/// Writes one JSON object per record.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> ProgressSink for JsonLines<W> {
    fn record(&mut self, progress: &Progress) {
        if let Ok(line) = serde_json::to_string(progress) {
            let _ = writeln!(self.0, "{line}");
        }
    }
}
