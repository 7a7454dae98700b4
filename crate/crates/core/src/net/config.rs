use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::polyfilter::{ConvVariant, Degree};

/// Where tanh sits relative to pooling inside a trunk block. Both orders give
/// the same values since tanh is monotone; they differ only in cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TanhPlacement {
    #[default]
    BeforePool,
    AfterPool,
}

/// Architecture of a [`Network`](super::Network).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub in_channels: usize,
    /// Output width of each PolyConv block, finest level first.
    pub conv_widths: Vec<usize>,
    /// Hidden FC widths; each is followed by batch norm and ReLU.
    pub fc_widths: Vec<usize>,
    pub classes: usize,
    pub variant: ConvVariant,
    pub degree: Degree,
    #[serde(default)]
    pub tanh: TanhPlacement,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        if self.conv_widths.is_empty() {
            return Err(Error::Config("at least one conv layer is required".into()));
        }
        if self.conv_widths.iter().chain(&self.fc_widths).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the initial rate towards zero over the run.
    #[default]
    Cosine,
}

/// Training hyperparameters plus the dataset-independent part of the
/// architecture. Missing keys in a file fall back to a caller-chosen base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub conv_widths: Vec<usize>,
    pub fc_widths: Vec<usize>,
    pub variant: ConvVariant,
    pub degree: Degree,
    pub tanh: TanhPlacement,
    /// Defaults by variant when absent: 1e-2 squeezed, 1e-3 unsqueezed.
    pub lr: Option<f64>,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Mesh classification: squeezed, degree 2, batch 100.
    pub fn mesh_default() -> Self {
        Self {
            conv_widths: vec![64, 128, 256, 512],
            fc_widths: vec![256, 128],
            variant: ConvVariant::Squeezed,
            degree: Degree::TWO,
            tanh: TanhPlacement::BeforePool,
            lr: None,
            schedule: LrSchedule::Cosine,
            batch_size: 100,
            epochs: 50,
            seed: 0,
        }
    }

    /// Graph classification: unsqueezed, degree 2, batch 10.
    pub fn graph_default() -> Self {
        Self {
            conv_widths: vec![256, 256, 256],
            fc_widths: vec![1024, 1024],
            variant: ConvVariant::Unsqueezed,
            degree: Degree::TWO,
            tanh: TanhPlacement::BeforePool,
            lr: None,
            schedule: LrSchedule::Cosine,
            batch_size: 10,
            epochs: 20,
            seed: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.variant {
            ConvVariant::Squeezed => 1e-2,
            ConvVariant::Unsqueezed => 1e-3,
        })
    }

    /// Learning rate for 1-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let lr = self.learning_rate();
        match self.schedule {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => {
                let t = epoch.saturating_sub(1) as f64 / self.epochs.max(1) as f64;
                0.5 * lr * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    pub fn net_config(&self, in_channels: usize, classes: usize) -> NetConfig {
        NetConfig {
            in_channels,
            conv_widths: self.conv_widths.clone(),
            fc_widths: self.fc_widths.clone(),
            classes,
            variant: self.variant,
            degree: self.degree,
            tanh: self.tanh,
        }
    }

    /// Replaces the fields named in `overrides` (a JSON object); unknown keys
    /// are rejected.
    pub fn overlay(&self, overrides: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(overrides) = overrides else {
            return Err(Error::Config("config overrides must be a table".into()));
        };
        let mut merged = serde_json::to_value(self)?;
        let obj = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in overrides {
            obj.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML (`.toml`) or JSON file on top of `base`.
    pub fn load(path: &Path, base: &Self) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value = if path.extension().is_some_and(|e| e == "toml") {
            let t: toml::Value = toml::from_str(&text)?;
            serde_json::to_value(t)?
        } else {
            serde_json::from_str(&text)?
        };
        base.overlay(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for batch norm".into()));
        }
        if let Some(lr) = self.lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("invalid learning rate {lr}")));
            }
        }
        Ok(())
    }
}
