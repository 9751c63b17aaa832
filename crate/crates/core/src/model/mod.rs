//! The model zoo: baseline CNN+ConvLSTM, the saliency variants
//! (attention / confidence / combined, over spatial and temporal
//! dimensions), and their non-contextual ablations.

mod modules;
mod net;
mod params;

pub use modules::{
    conv_lstm_step, noncontextual_spatial_forward, spatial_attention_forward,
    spatial_attention_widths, subsample_grid, temporal_attention_forward,
    temporal_confidence_weights, ConvLstmVars, ConvVars, NormVars, SpatialAttentionVars,
    TemporalAttentionVars,
};
pub use net::{
    build_model, downscale_factor, encoded_dims, predict, ForwardArtifacts, MaskSource, Model,
};
pub use params::ParamStore;

use crate::autodiff::Tensor;
use crate::error::{Result, SalvetError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SaliencyType {
    #[serde(rename = "NONE")]
    None,
    A,
    C,
    CA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SaliencyDims {
    #[serde(rename = "NONE")]
    None,
    S,
    T,
    ST,
}

impl SaliencyDims {
    pub fn has_spatial(self) -> bool {
        matches!(self, SaliencyDims::S | SaliencyDims::ST)
    }

    pub fn has_temporal(self) -> bool {
        matches!(self, SaliencyDims::T | SaliencyDims::ST)
    }

    /// True when `other` covers every dimension present in `self`.
    pub fn subset_of(self, other: SaliencyDims) -> bool {
        (!self.has_spatial() || other.has_spatial())
            && (!self.has_temporal() || other.has_temporal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "TINY")]
    Tiny,
    #[serde(rename = "SQUEEZE_STYLE")]
    SqueezeStyle,
}

/// A (type, dims) pair naming one of the nine result-table configurations.
/// Unlike [`ModelSpec`], labels admit all nine combinations (including
/// CA-S and CA-T, which appear in published results but are not separately
/// buildable architectures).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfigLabel {
    pub saliency_type: SaliencyType,
    pub saliency_dims: SaliencyDims,
}

impl Serialize for ConfigLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for ConfigLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ConfigLabel::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl ConfigLabel {
    pub const BASELINE: ConfigLabel = ConfigLabel {
        saliency_type: SaliencyType::None,
        saliency_dims: SaliencyDims::None,
    };

    pub fn new(saliency_type: SaliencyType, saliency_dims: SaliencyDims) -> Self {
        ConfigLabel {
            saliency_type,
            saliency_dims,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "B" {
            return Ok(ConfigLabel::BASELINE);
        }
        let (t, d) = s.split_once('-').ok_or_else(|| {
            SalvetError::Config(format!(
                "bad config label {s:?}: expected \"B\" or \"<type>-<dims>\" like \"C-S\""
            ))
        })?;
        let saliency_type = match t {
            "A" => SaliencyType::A,
            "C" => SaliencyType::C,
            "CA" => SaliencyType::CA,
            _ => {
                return Err(SalvetError::Config(format!(
                    "unknown saliency type {t:?} in label {s:?}"
                )))
            }
        };
        let saliency_dims = match d {
            "S" => SaliencyDims::S,
            "T" => SaliencyDims::T,
            "ST" => SaliencyDims::ST,
            _ => {
                return Err(SalvetError::Config(format!(
                    "unknown saliency dims {d:?} in label {s:?}"
                )))
            }
        };
        Ok(ConfigLabel::new(saliency_type, saliency_dims))
    }

    /// Sort key: type first, then dimension (A < C < CA, S < T < ST).
    pub fn order_key(&self) -> (u8, u8) {
        let t = match self.saliency_type {
            SaliencyType::None => 0,
            SaliencyType::A => 1,
            SaliencyType::C => 2,
            SaliencyType::CA => 3,
        };
        let d = match self.saliency_dims {
            SaliencyDims::None => 0,
            SaliencyDims::S => 1,
            SaliencyDims::T => 2,
            SaliencyDims::ST => 3,
        };
        (t, d)
    }
}

impl std::fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == ConfigLabel::BASELINE {
            return write!(f, "B");
        }
        let t = match self.saliency_type {
            SaliencyType::None => "NONE",
            SaliencyType::A => "A",
            SaliencyType::C => "C",
            SaliencyType::CA => "CA",
        };
        let d = match self.saliency_dims {
            SaliencyDims::None => "NONE",
            SaliencyDims::S => "S",
            SaliencyDims::T => "T",
            SaliencyDims::ST => "ST",
        };
        write!(f, "{t}-{d}")
    }
}

/// Buildable model configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "saliencyType")]
    pub saliency_type: SaliencyType,
    #[serde(rename = "saliencyDims")]
    pub saliency_dims: SaliencyDims,
    #[serde(rename = "spatialContextual", default = "default_true")]
    pub spatial_contextual: bool,
    #[serde(rename = "temporalContextual", default = "default_true")]
    pub temporal_contextual: bool,
    #[serde(default = "default_backbone")]
    pub backbone: Backbone,
    #[serde(rename = "hiddenSize", default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(rename = "kernelSize", default = "default_kernel")]
    pub kernel_size: usize,
}

fn default_true() -> bool {
    true
}
fn default_backbone() -> Backbone {
    Backbone::Tiny
}
fn default_hidden() -> usize {
    128
}
fn default_kernel() -> usize {
    5
}

impl ModelSpec {
    /// Full-scale configuration (hidden 128, kernel 5, SqueezeNet-style
    /// trunk), contextual on both dimensions.
    pub fn full_scale(saliency_type: SaliencyType, saliency_dims: SaliencyDims) -> Self {
        ModelSpec {
            saliency_type,
            saliency_dims,
            spatial_contextual: true,
            temporal_contextual: true,
            backbone: Backbone::SqueezeStyle,
            hidden_size: 128,
            kernel_size: 5,
        }
    }

    /// Desk-scale configuration (hidden 16, kernel 3, TINY trunk).
    pub fn desk(saliency_type: SaliencyType, saliency_dims: SaliencyDims) -> Self {
        ModelSpec {
            saliency_type,
            saliency_dims,
            spatial_contextual: true,
            temporal_contextual: true,
            backbone: Backbone::Tiny,
            hidden_size: 16,
            kernel_size: 3,
        }
    }

    pub fn label(&self) -> ConfigLabel {
        ConfigLabel::new(self.saliency_type, self.saliency_dims)
    }

    /// Short identifier used in run ids and file names, e.g. "C-S",
    /// "C-S.ncs" for a spatially non-contextual variant.
    pub fn code(&self) -> String {
        let mut s = self.label().to_string();
        match (self.spatial_contextual, self.temporal_contextual) {
            (true, true) => {}
            (false, true) => s.push_str(".ncs"),
            (true, false) => s.push_str(".nct"),
            (false, false) => s.push_str(".ncst"),
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.saliency_type == SaliencyType::CA && self.saliency_dims != SaliencyDims::ST {
            return Err(SalvetError::Config(
                "saliencyType CA requires saliencyDims ST".into(),
            ));
        }
        if (self.saliency_type == SaliencyType::None) != (self.saliency_dims == SaliencyDims::None)
        {
            return Err(SalvetError::Config(
                "saliencyType is NONE iff saliencyDims is NONE".into(),
            ));
        }
        if self.hidden_size == 0 {
            return Err(SalvetError::Config("hiddenSize must be positive".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(SalvetError::Config(
                "kernelSize must be a positive odd integer".into(),
            ));
        }
        Ok(())
    }

    pub fn has_spatial_saliency(&self) -> bool {
        self.saliency_dims.has_spatial()
    }

    pub fn has_temporal_saliency(&self) -> bool {
        self.saliency_dims.has_temporal()
    }

    /// Spatial saliency mechanism: attention for A, confidence for C/CA.
    pub fn spatial_is_attention(&self) -> bool {
        self.saliency_type == SaliencyType::A
    }

    /// Temporal saliency mechanism: attention for A/CA, confidence for C.
    pub fn temporal_is_attention(&self) -> bool {
        matches!(self.saliency_type, SaliencyType::A | SaliencyType::CA)
    }

    /// Whether the backbone carries the extra confidence channel.
    pub fn has_confidence_channel(&self) -> bool {
        matches!(self.saliency_type, SaliencyType::C | SaliencyType::CA)
    }
}

/// Per-frame saliency mask over the encoded spatial grid, values in
/// [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMask {
    values: Tensor,
}

impl SpatialMask {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(SalvetError::InvalidArgument(format!(
                "spatial mask must be rank 2, got shape {:?}",
                values.shape()
            )));
        }
        if !values.all_finite() || values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SalvetError::InvalidArgument(
                "spatial mask values must be finite and in [0,1]".into(),
            ));
        }
        Ok(SpatialMask { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Per-frame temporal saliency weights. Attention-derived weights are
/// normalized to sum 1; confidence-derived weights are per-frame mask
/// means in [0,1] with no sum constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeights {
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl TemporalWeights {
    pub fn new(weights: Vec<f64>, normalized: bool) -> Result<Self> {
        if weights.is_empty() {
            return Err(SalvetError::InvalidArgument(
                "temporal weights must be non-empty".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(SalvetError::InvalidArgument(
                "temporal weights must be finite and nonnegative".into(),
            ));
        }
        if normalized {
            let s: f64 = weights.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(SalvetError::InvalidArgument(format!(
                    "normalized temporal weights must sum to 1, got {s}"
                )));
            }
        } else if weights.iter().any(|&w| w > 1.0) {
            return Err(SalvetError::InvalidArgument(
                "confidence-derived temporal weights must lie in [0,1]".into(),
            ));
        }
        Ok(TemporalWeights {
            weights,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Output of [`predict`]: the unit-norm illuminant estimate plus the
/// saliency artifacts captured during the forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub illuminant: [f64; 3],
    pub captured_spatial_masks: Vec<SpatialMask>,
    pub captured_temporal_weights: Option<TemporalWeights>,
}
