use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Multimodal,
    StructuredOnly,
    TextOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Multimodal, Mode::StructuredOnly, Mode::TextOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Multimodal => "multimodal",
            Mode::StructuredOnly => "structured_only",
            Mode::TextOnly => "text_only",
        }
    }

    pub fn uses_temporal(self) -> bool {
        self != Mode::TextOnly
    }

    pub fn uses_text(self) -> bool {
        self != Mode::StructuredOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub text_in: usize,
    pub proj_dim: usize,
    /// Kept for configuration compatibility; the gate is a single affine map.
    pub fusion_hidden: usize,
    pub clf_hidden: usize,
    pub attention_heads: usize,
    pub mode: Mode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 26,
            lstm_hidden: 128,
            lstm_layers: 2,
            dropout: 0.3,
            text_in: 768,
            proj_dim: 256,
            fusion_hidden: 128,
            clf_hidden: 64,
            attention_heads: 1,
            mode: Mode::Multimodal,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn temporal_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Width of the fused representation fed to the classifier.
    pub fn fused_dim(&self) -> usize {
        match self.mode {
            Mode::TextOnly => self.proj_dim,
            _ => self.temporal_dim(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.input_dim,
            self.lstm_hidden,
            self.lstm_layers,
            self.text_in,
            self.proj_dim,
            self.clf_hidden,
            self.attention_heads,
        ];
        if dims.contains(&0) {
            return Err(ModelError::Config("all dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.mode == Mode::Multimodal && self.proj_dim != self.temporal_dim() {
            return Err(ModelError::Config(format!(
                "proj_dim {} must equal 2 × lstm_hidden = {} for gated fusion",
                self.proj_dim,
                self.temporal_dim()
            )));
        }
        Ok(())
    }

    /// `key=value` lines with a `model.` prefix.
    pub fn to_kv(&self) -> String {
        format!(
            "model.input_dim={}\nmodel.lstm_hidden={}\nmodel.lstm_layers={}\nmodel.dropout={}\nmodel.text_in={}\n\
             model.proj_dim={}\nmodel.fusion_hidden={}\nmodel.clf_hidden={}\nmodel.attention_heads={}\nmodel.mode={}\n",
            self.input_dim,
            self.lstm_hidden,
            self.lstm_layers,
            self.dropout,
            self.text_in,
            self.proj_dim,
            self.fusion_hidden,
            self.clf_hidden,
            self.attention_heads,
            self.mode
        )
    }

    /// Applies one `model.*` key; returns false for keys outside the section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ModelError> {
        let bad = || ModelError::Config(format!("bad value `{value}` for {key}"));
        let usize_of = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match key {
            "model.input_dim" => self.input_dim = usize_of(value)?,
            "model.lstm_hidden" => self.lstm_hidden = usize_of(value)?,
            "model.lstm_layers" => self.lstm_layers = usize_of(value)?,
            "model.dropout" => self.dropout = value.parse().map_err(|_| bad())?,
            "model.text_in" => self.text_in = usize_of(value)?,
            "model.proj_dim" => self.proj_dim = usize_of(value)?,
            "model.fusion_hidden" => self.fusion_hidden = usize_of(value)?,
            "model.clf_hidden" => self.clf_hidden = usize_of(value)?,
            "model.attention_heads" => self.attention_heads = usize_of(value)?,
            "model.mode" => self.mode = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut cfg = ModelConfig::default();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v.trim())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig {
            lstm_hidden: 16,
            proj_dim: 32,
            mode: Mode::TextOnly,
            ..Default::default()
        };
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn fusion_requires_matching_widths() {
        let cfg = ModelConfig {
            proj_dim: 100,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(cfg.clone().with_mode(Mode::StructuredOnly).validate().is_ok());
    }
}
