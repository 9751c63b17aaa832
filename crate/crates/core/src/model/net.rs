//! Model assembly: parameter construction per configuration, the
//! sequence forward pass, inference, and checkpoint files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{resize_bilinear, Graph, Tensor, Var};
use crate::error::{Result, SalvetError};
use crate::model::modules::{
    conv_lstm_step, noncontextual_spatial_forward, spatial_attention_forward,
    spatial_attention_widths, subsample_grid, temporal_attention_forward, ConvLstmVars, ConvVars,
    NormVars, SpatialAttentionVars, TemporalAttentionVars,
};
use crate::model::params::{Init, ParamStore};
use crate::model::{
    Backbone, ModelSpec, Prediction, SaliencyDims, SpatialMask, TemporalWeights,
};

/// Overall spatial downscale of each trunk; also the grid step the
/// non-contextual encoder subsamples at.
pub fn downscale_factor(b: Backbone) -> usize {
    match b {
        Backbone::Tiny => 8,
        Backbone::SqueezeStyle => 4,
    }
}

/// Encoded grid size for an (h, w) input.
pub fn encoded_dims(spec: &ModelSpec, h: usize, w: usize) -> (usize, usize) {
    let f = downscale_factor(spec.backbone);
    (h.div_ceil(f), w.div_ceil(f))
}

/// Where the saliency masks entering the forward pass come from.
#[derive(Debug, Clone)]
pub enum MaskSource {
    /// Computed by the model's own saliency modules.
    Learned,
    /// Input-independent uniform draws, re-seeded per sequence so the
    /// same item always sees the same masks.
    FrozenUniform { dims: SaliencyDims, seed: u64 },
    /// Masks captured from a donor run, keyed by sequence id.
    Transplanted {
        dims: SaliencyDims,
        donor_run_id: String,
        spatial: BTreeMap<String, Vec<Tensor>>,
        temporal: BTreeMap<String, Vec<f64>>,
    },
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-sequence stream key for frozen masks: campaign seed folded with
/// a hash of the sequence id.
pub(crate) fn frozen_stream_seed(seed: u64, seq_id: &str) -> u64 {
    seed ^ fnv1a(seq_id.as_bytes())
}

/// Draw the frozen masks for one sequence: spatial maps frame by frame
/// first, then the temporal vector, all U(0,1). Attention-style
/// temporal weights are renormalized to sum 1; confidence-style stay
/// raw.
pub(crate) fn frozen_draws(
    seed: u64,
    seq_id: &str,
    dims: SaliencyDims,
    t: usize,
    eh: usize,
    ew: usize,
    renormalize_temporal: bool,
) -> (Option<Vec<Tensor>>, Option<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(frozen_stream_seed(seed, seq_id));
    let spatial = if dims.has_spatial() {
        Some(
            (0..t)
                .map(|_| {
                    let data: Vec<f64> =
                        (0..eh * ew).map(|_| rng.random_range(0.0..1.0)).collect();
                    Tensor::new(&[eh, ew], data)
                })
                .collect(),
        )
    } else {
        None
    };
    let temporal = if dims.has_temporal() {
        let mut v: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        if renormalize_temporal {
            let s: f64 = v.iter().sum();
            if s > 1e-12 {
                for x in &mut v {
                    *x /= s;
                }
            } else {
                v = vec![1.0 / t as f64; t];
            }
        }
        Some(v)
    } else {
        None
    };
    (spatial, temporal)
}

struct ResolvedOverride {
    spatial: Option<Vec<Tensor>>,
    temporal: Option<Vec<f64>>,
}

/// A buildable configuration with its parameters and the mask source
/// used at forward time.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
    mask_source: MaskSource,
}

/// Everything the training loop needs from one forward pass: the tape,
/// the raw head output, the saliency nodes, and the leaf bound to each
/// parameter.
pub struct ForwardArtifacts {
    pub graph: Graph,
    pub prediction: Var,
    pub spatial_masks: Vec<Var>,
    pub temporal_weights: Option<Var>,
    pub temporal_normalized: bool,
    pub param_vars: BTreeMap<String, Var>,
}

/// Construct a model with freshly initialized parameters. The same
/// (spec, seed) pair always yields bit-identical parameters.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let h = spec.hidden_size;
    let k = spec.kernel_size;
    let out_last = h + usize::from(spec.has_confidence_channel());
    let mut store = ParamStore::new();
    let mut init = Init::new(seed);

    if spec.spatial_contextual {
        match spec.backbone {
            Backbone::Tiny => {
                let c1 = (h / 2).max(1);
                init.conv(&mut store, "backbone.conv1", c1, 3, k);
                init.conv(&mut store, "backbone.conv2", h, c1, k);
                init.conv(&mut store, "backbone.conv3", out_last, h, k);
            }
            Backbone::SqueezeStyle => {
                let sq = (h / 2).max(1);
                init.conv(&mut store, "backbone.conv1", h, 3, k);
                init.conv(&mut store, "backbone.conv2", sq, h, 1);
                init.conv(&mut store, "backbone.conv3", h, sq, k);
                init.conv(&mut store, "backbone.conv4", h, h, k);
                init.conv(&mut store, "backbone.conv5", out_last, h, k);
            }
        }
    } else {
        init.conv(&mut store, "ncs.affine", out_last, 3, 1);
    }

    if spec.has_spatial_saliency() && spec.spatial_is_attention() {
        let (c1, c2) = spatial_attention_widths(h);
        init.conv(&mut store, "sattn.conv1", c1, h, 3);
        init.norm(&mut store, "sattn.norm1", c1);
        init.conv(&mut store, "sattn.conv2", c2, c1, 3);
        init.norm(&mut store, "sattn.norm2", c2);
        init.conv(&mut store, "sattn.conv3", 1, c2, 3);
    }
    if spec.has_temporal_saliency() && spec.temporal_is_attention() {
        init.linear(&mut store, "tattn.f1", h, 2 * h);
        init.linear(&mut store, "tattn.f2", 1, h);
    }

    if spec.temporal_contextual {
        init.conv(&mut store, "lstm.wx", 4 * h, h, k);
        init.conv(&mut store, "lstm.wh", 4 * h, h, k);
        // start with the forget gate open
        let bx = store.get_mut("lstm.wx.b");
        for v in &mut bx.data_mut()[h..2 * h] {
            *v = 1.0;
        }
    } else {
        init.conv(&mut store, "nct.step", h, h, 1);
    }

    init.linear(&mut store, "head.fc", 3, h);
    *store.get_mut("head.fc.b") = Tensor::full(&[3], 1.0);

    Ok(Model {
        spec: spec.clone(),
        params: store,
        mask_source: MaskSource::Learned,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn checksum(&self) -> u64 {
        self.params.checksum()
    }

    pub fn mask_source(&self) -> &MaskSource {
        &self.mask_source
    }

    pub(crate) fn set_mask_source(&mut self, s: MaskSource) {
        self.mask_source = s;
    }

    fn resolve_override(
        &self,
        seq_id: &str,
        t: usize,
        eh: usize,
        ew: usize,
    ) -> Result<ResolvedOverride> {
        match &self.mask_source {
            MaskSource::Learned => Ok(ResolvedOverride {
                spatial: None,
                temporal: None,
            }),
            MaskSource::FrozenUniform { dims, seed } => {
                let (spatial, temporal) = frozen_draws(
                    *seed,
                    seq_id,
                    *dims,
                    t,
                    eh,
                    ew,
                    self.spec.temporal_is_attention(),
                );
                Ok(ResolvedOverride { spatial, temporal })
            }
            MaskSource::Transplanted {
                dims,
                donor_run_id,
                spatial,
                temporal,
            } => {
                let mut out = ResolvedOverride {
                    spatial: None,
                    temporal: None,
                };
                if dims.has_spatial() {
                    let masks = spatial.get(seq_id).ok_or_else(|| {
                        SalvetError::InvalidArgument(format!(
                            "donor run {donor_run_id} has no spatial masks for sequence {seq_id:?}"
                        ))
                    })?;
                    if masks.len() != t {
                        return Err(SalvetError::InvalidArgument(format!(
                            "donor spatial masks cover {} frames but sequence {seq_id:?} has {t}",
                            masks.len()
                        )));
                    }
                    out.spatial = Some(masks.iter().map(|m| resize_bilinear(m, eh, ew)).collect());
                }
                if dims.has_temporal() {
                    let w = temporal.get(seq_id).ok_or_else(|| {
                        SalvetError::InvalidArgument(format!(
                            "donor run {donor_run_id} has no temporal weights for sequence {seq_id:?}"
                        ))
                    })?;
                    if w.len() != t {
                        return Err(SalvetError::InvalidArgument(format!(
                            "donor temporal weights cover {} frames but sequence {seq_id:?} has {t}",
                            w.len()
                        )));
                    }
                    out.temporal = Some(w.clone());
                }
                Ok(out)
            }
        }
    }

    /// Run the full sequence pipeline and return the open tape.
    pub fn forward(&self, frames: &[Tensor], seq_id: &str) -> Result<ForwardArtifacts> {
        if frames.is_empty() {
            return Err(SalvetError::InvalidArgument(format!(
                "sequence {seq_id:?} has no frames"
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.shape().len() != 3 || f.shape()[0] != 3 {
                return Err(SalvetError::InvalidArgument(format!(
                    "frame {i} of sequence {seq_id:?} must have shape (3,H,W), got {:?}",
                    f.shape()
                )));
            }
            if f.shape() != frames[0].shape() {
                return Err(SalvetError::InvalidArgument(format!(
                    "frames of sequence {seq_id:?} have mixed shapes"
                )));
            }
            if !f.all_finite() {
                return Err(SalvetError::InvalidArgument(format!(
                    "frame {i} of sequence {seq_id:?} has non-finite values"
                )));
            }
        }
        let t_len = frames.len();
        let (ih, iw) = (frames[0].shape()[1], frames[0].shape()[2]);
        let (eh, ew) = encoded_dims(&self.spec, ih, iw);
        let ov = self.resolve_override(seq_id, t_len, eh, ew)?;
        let hsz = self.spec.hidden_size;
        let factor = downscale_factor(self.spec.backbone);

        let mut g = Graph::new();
        let mut param_vars: BTreeMap<String, Var> = BTreeMap::new();
        for (name, tensor) in self.params.iter() {
            param_vars.insert(name.clone(), g.leaf(tensor.clone()));
        }
        let p = |n: &str| -> Var {
            *param_vars
                .get(n)
                .unwrap_or_else(|| panic!("parameter {n} not built for {}", self.spec.code()))
        };

        // encode every frame; split off the confidence channel if present
        let mut feats: Vec<Var> = Vec::with_capacity(t_len);
        let mut conf: Vec<Option<Var>> = Vec::with_capacity(t_len);
        for f in frames {
            let full = if self.spec.spatial_contextual {
                let plan: &[(&str, usize)] = match self.spec.backbone {
                    Backbone::Tiny => &[
                        ("backbone.conv1", 2),
                        ("backbone.conv2", 2),
                        ("backbone.conv3", 2),
                    ],
                    Backbone::SqueezeStyle => &[
                        ("backbone.conv1", 2),
                        ("backbone.conv2", 1),
                        ("backbone.conv3", 1),
                        ("backbone.conv4", 2),
                        ("backbone.conv5", 1),
                    ],
                };
                let mut x = g.leaf(f.clone());
                for (name, stride) in plan {
                    let w = p(&format!("{name}.w"));
                    let b = p(&format!("{name}.b"));
                    let k = g.value(w).shape()[2];
                    x = g.conv2d(x, w, b, *stride, (k - 1) / 2);
                    x = g.relu(x);
                }
                x
            } else {
                let sub = subsample_grid(f, factor);
                let x = g.leaf(sub);
                let aff = ConvVars {
                    w: p("ncs.affine.w"),
                    b: p("ncs.affine.b"),
                };
                noncontextual_spatial_forward(&mut g, x, &aff)
            };
            if self.spec.has_confidence_channel() {
                let fe = g.slice_channels(full, 0, hsz);
                let mut cr = g.slice_channels(full, hsz, hsz + 1);
                if !self.spec.spatial_contextual {
                    // contextual trunks end in a ReLU already
                    cr = g.relu(cr);
                }
                feats.push(fe);
                conf.push(Some(cr));
            } else {
                feats.push(full);
                conf.push(None);
            }
        }

        // spatial saliency: weight the feature maps, remember what to
        // expose as the captured mask
        let has_s = self.spec.has_spatial_saliency();
        let mut captured_spatial: Vec<Var> = Vec::new();
        let mut xms: Vec<Var>;
        if has_s {
            xms = Vec::with_capacity(t_len);
            if let Some(masks) = &ov.spatial {
                for (t, &f) in feats.iter().enumerate() {
                    let m = g.leaf(masks[t].clone());
                    captured_spatial.push(m);
                    xms.push(g.mask_mul(f, m));
                }
            } else if self.spec.spatial_is_attention() {
                let sp = SpatialAttentionVars {
                    conv1: ConvVars {
                        w: p("sattn.conv1.w"),
                        b: p("sattn.conv1.b"),
                    },
                    norm1: NormVars {
                        gamma: p("sattn.norm1.gamma"),
                        beta: p("sattn.norm1.beta"),
                    },
                    conv2: ConvVars {
                        w: p("sattn.conv2.w"),
                        b: p("sattn.conv2.b"),
                    },
                    norm2: NormVars {
                        gamma: p("sattn.norm2.gamma"),
                        beta: p("sattn.norm2.beta"),
                    },
                    conv3: ConvVars {
                        w: p("sattn.conv3.w"),
                        b: p("sattn.conv3.b"),
                    },
                };
                for &f in &feats {
                    let m = spatial_attention_forward(&mut g, f, &sp);
                    captured_spatial.push(m);
                    xms.push(g.mask_mul(f, m));
                }
            } else {
                // confidence: raw values weight the features, the
                // captured mask is the per-frame min-max rescale
                for (&f, c) in feats.iter().zip(conf.iter().copied()) {
                    let cr = c.expect("confidence channel present");
                    let raw = g.reshape(cr, &[eh, ew]);
                    let cap = g.minmax_rescale(raw);
                    captured_spatial.push(cap);
                    xms.push(g.mask_mul(f, raw));
                }
            }
        } else {
            xms = feats.clone();
        }

        let has_t = self.spec.has_temporal_saliency();
        let t_attn = self.spec.temporal_is_attention();
        let ov_temporal_leaf: Option<Var> =
            ov.temporal.as_ref().map(|v| g.leaf(Tensor::vector(v)));
        let mut temporal_var: Option<Var> = None;
        let mut temporal_normalized = false;

        // confidence-style temporal weights: per-frame means of the
        // rescaled confidence maps (or of the override masks)
        if has_t && !t_attn {
            let mt = if let Some(l) = ov_temporal_leaf {
                l
            } else {
                let rescaled: Vec<Var> = if has_s {
                    captured_spatial.clone()
                } else {
                    conf.iter()
                        .copied()
                        .map(|c| {
                            let cr = c.expect("confidence channel present");
                            let raw = g.reshape(cr, &[eh, ew]);
                            g.minmax_rescale(raw)
                        })
                        .collect()
                };
                let means: Vec<Var> = rescaled.iter().map(|&m| g.mean_all(m)).collect();
                g.stack_scalars(&means)
            };
            temporal_var = Some(mt);
            temporal_normalized = false;
        }

        let tattn_vars = if has_t && t_attn {
            Some(TemporalAttentionVars {
                f1: ConvVars {
                    w: p("tattn.f1.w"),
                    b: p("tattn.f1.b"),
                },
                f2: ConvVars {
                    w: p("tattn.f2.w"),
                    b: p("tattn.f2.b"),
                },
            })
        } else {
            None
        };

        // attention-style temporal weights without recurrence score
        // once against an all-zero context and never mix the inputs
        if has_t && t_attn && !self.spec.temporal_contextual {
            let mt = if let Some(l) = ov_temporal_leaf {
                l
            } else {
                let zeros = g.leaf(Tensor::zeros(&[hsz, eh, ew]));
                let (w, _) =
                    temporal_attention_forward(&mut g, &xms, zeros, tattn_vars.as_ref().unwrap());
                w
            };
            temporal_var = Some(mt);
            temporal_normalized = true;
        }

        // recurrence (or its per-step stand-in)
        let mut ys: Vec<Var> = Vec::with_capacity(t_len);
        if self.spec.temporal_contextual {
            let lstm = ConvLstmVars {
                wx: ConvVars {
                    w: p("lstm.wx.w"),
                    b: p("lstm.wx.b"),
                },
                wh: ConvVars {
                    w: p("lstm.wh.w"),
                    b: p("lstm.wh.b"),
                },
            };
            let mut hh = g.leaf(Tensor::zeros(&[hsz, eh, ew]));
            let mut cc = g.leaf(Tensor::zeros(&[hsz, eh, ew]));
            for t in 0..t_len {
                let input = if has_t && t_attn {
                    if let Some(l) = ov_temporal_leaf {
                        // one override distribution drives every step
                        if t == t_len - 1 {
                            temporal_var = Some(l);
                            temporal_normalized = true;
                        }
                        g.weighted_sum(&xms, l)
                    } else {
                        let (w, mixed) = temporal_attention_forward(
                            &mut g,
                            &xms,
                            hh,
                            tattn_vars.as_ref().unwrap(),
                        );
                        if t == t_len - 1 {
                            temporal_var = Some(w);
                            temporal_normalized = true;
                        }
                        mixed
                    }
                } else {
                    xms[t]
                };
                let (h2, c2) = conv_lstm_step(&mut g, input, hh, cc, &lstm);
                hh = h2;
                cc = c2;
                ys.push(hh);
            }
        } else {
            let w = p("nct.step.w");
            let b = p("nct.step.b");
            for t in 0..t_len {
                ys.push(g.conv2d(xms[t], w, b, 1, 0));
            }
        }

        let z = match temporal_var {
            Some(mt) => g.weighted_sum(&ys, mt),
            None => *ys.last().unwrap(),
        };
        let pooled = g.global_avg_pool(z);
        let prediction = g.linear(pooled, p("head.fc.w"), p("head.fc.b"));

        Ok(ForwardArtifacts {
            graph: g,
            prediction,
            spatial_masks: captured_spatial,
            temporal_weights: temporal_var,
            temporal_normalized,
            param_vars,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|(n, t)| ParamMeta {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let mut bytes =
            serde_json::to_vec(&header).map_err(|e| SalvetError::Parse(e.to_string()))?;
        bytes.push(b'\n');
        for (_, t) in self.params.iter() {
            for v in t.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| SalvetError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| SalvetError::io(path, e))?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Model> {
        let bytes = std::fs::read(path).map_err(|e| SalvetError::io(path, e))?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| {
            SalvetError::Parse(format!("{}: missing checkpoint header line", path.display()))
        })?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| SalvetError::Parse(format!("{}: bad header: {e}", path.display())))?;
        header.spec.validate()?;

        let mut store = ParamStore::new();
        let mut off = nl + 1;
        for m in &header.params {
            let n = m
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| {
                    SalvetError::Parse(format!("parameter {} has an absurd shape", m.name))
                })?;
            let end = n
                .checked_mul(8)
                .and_then(|sz| off.checked_add(sz))
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| {
                    SalvetError::Parse(format!(
                        "{}: payload truncated at parameter {}",
                        path.display(),
                        m.name
                    ))
                })?;
            let data: Vec<f64> = bytes[off..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if !data.iter().all(|v| v.is_finite()) {
                return Err(SalvetError::Parse(format!(
                    "parameter {} holds non-finite values",
                    m.name
                )));
            }
            store.insert(m.name.clone(), Tensor::new(&m.shape, data));
            off = end;
        }
        if off != bytes.len() {
            return Err(SalvetError::Parse(format!(
                "{}: trailing bytes after parameters",
                path.display()
            )));
        }

        // the stored inventory must match what the configuration builds
        let fresh = build_model(&header.spec, 0)?;
        for (name, t) in fresh.params.iter() {
            if !store.contains(name) || store.get(name).shape() != t.shape() {
                return Err(SalvetError::Parse(format!(
                    "checkpoint does not provide parameter {name} with shape {:?}",
                    t.shape()
                )));
            }
        }
        if store.param_count() != fresh.params.param_count() {
            return Err(SalvetError::Parse(
                "checkpoint carries parameters the configuration does not use".into(),
            ));
        }

        Ok(Model {
            spec: header.spec,
            params: store,
            mask_source: MaskSource::Learned,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ModelSpec,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

/// Inference: clamp the head output to nonnegative, normalize to unit
/// length, and optionally capture the saliency artifacts.
pub fn predict(
    model: &Model,
    frames: &[Tensor],
    seq_id: &str,
    capture: bool,
) -> Result<Prediction> {
    let art = model.forward(frames, seq_id)?;
    let v = art.graph.value(art.prediction);
    if !v.all_finite() {
        return Err(SalvetError::Numeric(format!(
            "non-finite prediction for sequence {seq_id:?}"
        )));
    }
    let mut c = [
        v.data()[0].max(0.0),
        v.data()[1].max(0.0),
        v.data()[2].max(0.0),
    ];
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if n <= 0.0 {
        return Err(SalvetError::Numeric(format!(
            "prediction collapsed to the zero vector for sequence {seq_id:?}"
        )));
    }
    for x in &mut c {
        *x /= n;
    }

    let mut captured_spatial_masks = Vec::new();
    let mut captured_temporal_weights = None;
    if capture {
        for &m in &art.spatial_masks {
            captured_spatial_masks.push(SpatialMask::new(art.graph.value(m).clone())?);
        }
        if let Some(w) = art.temporal_weights {
            captured_temporal_weights = Some(TemporalWeights::new(
                art.graph.value(w).data().to_vec(),
                art.temporal_normalized,
            )?);
        }
    }
    Ok(Prediction {
        illuminant: c,
        captured_spatial_masks,
        captured_temporal_weights,
    })
}
