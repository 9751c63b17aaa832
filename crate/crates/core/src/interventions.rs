//! Saliency-weight interventions used by the faithfulness tests:
//! freezing saliency to input-independent uniform noise, capturing the
//! masks a model actually used, and transplanting captured masks into
//! a non-contextual host model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::FrameSequence;
use crate::error::{Result, SalvetError};
use crate::model::{predict, MaskSource, Model, SaliencyDims, SpatialMask, TemporalWeights};

/// Where a run's saliency weights come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WeightSource {
    #[serde(rename = "LEARNED")]
    Learned,
    #[serde(rename = "UNIFORM_FROZEN")]
    UniformFrozen { seed: u64 },
    #[serde(rename = "TRANSPLANTED_CONTEXTUAL")]
    TransplantedContextual {
        #[serde(rename = "donorRunId")]
        donor_run_id: String,
    },
}

impl WeightSource {
    /// Short token used inside run identifiers.
    pub fn code(&self) -> String {
        match self {
            WeightSource::Learned => "learned".into(),
            WeightSource::UniformFrozen { seed } => format!("uniform{seed}"),
            WeightSource::TransplantedContextual { donor_run_id } => {
                format!("transplant-{donor_run_id}")
            }
        }
    }
}

/// Replace the model's saliency on `dims` with per-sequence frozen
/// U(0,1) draws, leaving any other saliency dimension and all learned
/// parameters untouched.
pub fn freeze_uniform(model: &Model, dims: SaliencyDims, seed: u64) -> Result<Model> {
    if dims == SaliencyDims::None {
        return Err(SalvetError::Config(
            "freezing needs at least one saliency dimension".into(),
        ));
    }
    if !dims.subset_of(model.spec().saliency_dims) {
        return Err(SalvetError::Config(format!(
            "cannot freeze {dims:?}: model {} has saliency {:?}",
            model.spec().code(),
            model.spec().saliency_dims
        )));
    }
    let mut frozen = model.clone();
    frozen.set_mask_source(MaskSource::FrozenUniform { dims, seed });
    Ok(frozen)
}

/// Run the model on one sequence and return the masks it used, exactly
/// as applied in that forward pass.
pub fn capture_masks(
    model: &Model,
    seq: &FrameSequence,
) -> Result<(Vec<SpatialMask>, Option<TemporalWeights>)> {
    if model.spec().saliency_dims == SaliencyDims::None {
        return Err(SalvetError::Config(format!(
            "model {} has no saliency modules to capture",
            model.spec().code()
        )));
    }
    let pred = predict(model, &seq.frames, &seq.id, true)?;
    Ok((pred.captured_spatial_masks, pred.captured_temporal_weights))
}

/// Masks captured from a donor model, keyed by sequence id, ready to
/// transplant into a host.
#[derive(Debug, Clone)]
pub struct DonorMasks {
    pub donor_run_id: String,
    pub dims: SaliencyDims,
    pub spatial: BTreeMap<String, Vec<SpatialMask>>,
    pub temporal: BTreeMap<String, TemporalWeights>,
}

/// Capture the donor's masks for every given sequence. The donor's own
/// saliency dimensions decide which mask kinds are collected.
pub fn capture_donor_masks(
    donor: &Model,
    seqs: &[FrameSequence],
    donor_run_id: impl Into<String>,
) -> Result<DonorMasks> {
    let dims = donor.spec().saliency_dims;
    let mut out = DonorMasks {
        donor_run_id: donor_run_id.into(),
        dims,
        spatial: BTreeMap::new(),
        temporal: BTreeMap::new(),
    };
    for seq in seqs {
        let (spatial, temporal) = capture_masks(donor, seq)?;
        if dims.has_spatial() {
            out.spatial.insert(seq.id.clone(), spatial);
        }
        if let (true, Some(w)) = (dims.has_temporal(), temporal) {
            out.temporal.insert(seq.id.clone(), w);
        }
    }
    Ok(out)
}

/// Override the host's saliency with the donor's captured masks. The
/// host must be non-contextual on every transplanted dimension and
/// must itself carry saliency there; spatial masks are bilinearly
/// resized at inference if the hosts' mask grids differ.
pub fn transplant(host: &Model, donor: &DonorMasks) -> Result<Model> {
    let dims = donor.dims;
    let spec = host.spec();
    if dims == SaliencyDims::None {
        return Err(SalvetError::Config(
            "donor masks cover no saliency dimension".into(),
        ));
    }
    if !dims.subset_of(spec.saliency_dims) {
        return Err(SalvetError::Config(format!(
            "donor covers {dims:?} but host {} has saliency {:?}",
            spec.code(),
            spec.saliency_dims
        )));
    }
    if dims.has_spatial() && spec.spatial_contextual {
        return Err(SalvetError::Config(format!(
            "host {} is contextual on the spatial dimension",
            spec.code()
        )));
    }
    if dims.has_temporal() && spec.temporal_contextual {
        return Err(SalvetError::Config(format!(
            "host {} is contextual on the temporal dimension",
            spec.code()
        )));
    }
    if dims.has_spatial() != !donor.spatial.is_empty()
        || dims.has_temporal() != !donor.temporal.is_empty()
    {
        return Err(SalvetError::Config(format!(
            "donor mask payload does not match its declared dimensions {dims:?}"
        )));
    }

    let spatial = donor
        .spatial
        .iter()
        .map(|(id, masks)| {
            (
                id.clone(),
                masks.iter().map(|m| m.values().clone()).collect(),
            )
        })
        .collect();
    let temporal = donor
        .temporal
        .iter()
        .map(|(id, w)| (id.clone(), w.weights.clone()))
        .collect();

    let mut grafted = host.clone();
    grafted.set_mask_source(MaskSource::Transplanted {
        dims,
        donor_run_id: donor.donor_run_id.clone(),
        spatial,
        temporal,
    });
    Ok(grafted)
}
