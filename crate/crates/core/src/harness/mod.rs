//! Experiment harness: the training loop, run persistence, and the
//! cross-validated campaign drivers living in [`campaign`].

pub mod campaign;
pub mod heatmap;

pub use campaign::{
    export_csv, export_json, generate_report, import_json, replay, run_wp1, run_wp2,
    CampaignManifest, CampaignOutput, ReplayFixture, Wp1Campaign, Wp2Campaign,
};
pub use heatmap::render_heatmap;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataio::{augment, write_tensor, DatasetManifest, Dtype, FrameSequence};
use crate::error::{Result, SalvetError};
use crate::interventions::WeightSource;
use crate::metrics::{angular_error, summarize_errors, ErrorSummary};
use crate::model::{
    build_model, predict, Model, ModelSpec, ParamStore, SaliencyDims, SpatialMask,
    TemporalWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    #[default]
    #[serde(rename = "RMSPROP")]
    RmsProp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossKind {
    #[default]
    #[serde(rename = "ANGULAR")]
    Angular,
}

/// Training hyperparameters. The defaults are the full-scale settings;
/// [`TrainConfig::desk`] is the small-profile variant sized for CPU
/// runs on the synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: LossKind,
    /// Apply the random augmentation pipeline to each training
    /// sequence (one fresh draw per sequence per epoch).
    #[serde(default = "default_true")]
    pub augment: bool,
}

fn default_epochs() -> usize {
    500
}
fn default_lr() -> f64 {
    3e-5
}
fn default_batch() -> usize {
    1
}
fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            optimizer: Optimizer::RmsProp,
            learning_rate: default_lr(),
            batch_size: default_batch(),
            seed: 0,
            loss: LossKind::Angular,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn full(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }

    /// Desk profile: 200 epochs and a learning rate sized for the tiny
    /// trunk, where the full-scale 3e-5 barely moves the weights.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 2e-3,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(SalvetError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SalvetError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SalvetError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// RMSprop with the usual square-gradient accumulator.
pub struct RmsProp {
    lr: f64,
    rho: f64,
    eps: f64,
    cache: BTreeMap<String, Tensor>,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        RmsProp {
            lr,
            rho: 0.99,
            eps: 1e-8,
            cache: BTreeMap::new(),
        }
    }

    /// Apply one update. Parameters that received no gradient are left
    /// untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        for (name, g) in grads {
            let cache = self
                .cache
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let p = params.get_mut(name);
            let (pv, cv) = (p.data_mut(), cache.data_mut());
            for ((w, c), &gi) in pv.iter_mut().zip(cv.iter_mut()).zip(g.iter()) {
                *c = self.rho * *c + (1.0 - self.rho) * gi * gi;
                *w -= self.lr * gi / (c.sqrt() + self.eps);
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic sub-seed for one named stream of randomness.
fn stream_seed(tag: &str, parts: &[u64]) -> u64 {
    let mut key = tag.to_string();
    for p in parts {
        key.push('/');
        key.push_str(&p.to_string());
    }
    fnv1a(key.as_bytes())
}

/// The named RNG streams one run consumes, recorded for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSeeds {
    pub model: u64,
    pub shuffle: u64,
    pub augment: u64,
}

impl RunSeeds {
    fn from_config(cfg: &TrainConfig) -> Self {
        RunSeeds {
            model: cfg.seed,
            shuffle: stream_seed("shuffle", &[cfg.seed]),
            augment: stream_seed("augment", &[cfg.seed]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemError {
    pub id: String,
    pub error: f64,
}

/// Everything persisted about one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run_id: String,
    pub spec: ModelSpec,
    pub weight_source: WeightSource,
    pub fold: usize,
    pub per_item_errors: Vec<ItemError>,
    pub summary: ErrorSummary,
    pub mask_refs: Vec<String>,
    pub wall_time_secs: f64,
    pub seeds: RunSeeds,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        let errors: Vec<f64> = self.per_item_errors.iter().map(|e| e.error).collect();
        if !self.summary.matches_exactly(&errors) {
            return Err(SalvetError::Parse(format!(
                "run {}: stored summary does not match its per-item errors",
                self.run_id
            )));
        }
        Ok(())
    }
}

pub fn run_id(spec: &ModelSpec, source: &WeightSource, fold: usize, seed: u64) -> String {
    format!("{}-{}-fold{fold}-seed{seed}", spec.code(), source.code())
}

/// On-disk results store: one JSON record per run, checkpoints, and
/// captured mask tensors, all committed atomically (write-temp then
/// rename) so interrupted campaigns never leave half records behind.
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["runs", "checkpoints", "masks", "reports"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| SalvetError::io(dir, e))?;
        }
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.json"))
    }

    pub fn checkpoint_path(&self, run_id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{run_id}.ckpt"))
    }

    pub fn masks_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("masks").join(run_id)
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn has_record(&self, run_id: &str) -> bool {
        self.record_path(run_id).is_file()
    }

    pub fn save_record(&self, record: &RunRecord) -> Result<()> {
        record.validate()?;
        let path = self.record_path(&record.run_id);
        let body = serde_json::to_string_pretty(record)
            .map_err(|e| SalvetError::Parse(format!("record encoding failed: {e}")))?;
        atomic_write(&path, format!("{body}\n").as_bytes())
    }

    /// Load and re-validate a record (the summary must still match the
    /// per-item errors bit for bit).
    pub fn load_record(&self, run_id: &str) -> Result<RunRecord> {
        let path = self.record_path(run_id);
        let body = std::fs::read_to_string(&path).map_err(|e| SalvetError::io(path, e))?;
        let record: RunRecord = serde_json::from_str(&body)
            .map_err(|e| SalvetError::Parse(format!("run record {run_id}: {e}")))?;
        if record.run_id != run_id {
            return Err(SalvetError::Parse(format!(
                "run record file {run_id} contains id {}",
                record.run_id
            )));
        }
        record.validate()?;
        Ok(record)
    }

    pub fn load_model(&self, run_id: &str) -> Result<Model> {
        Model::load_checkpoint(&self.checkpoint_path(run_id))
    }

    pub fn list_run_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("runs");
        let mut ids = Vec::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| SalvetError::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| SalvetError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e: std::io::Error| SalvetError::io(path, e);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp.partial");
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// One model's evaluation over a set of sequences: per-item angular
/// errors plus whatever saliency artifacts the model exposes.
pub struct Evaluation {
    pub per_item: Vec<ItemError>,
    pub summary: ErrorSummary,
    pub mask_refs: Vec<String>,
    pub spatial_masks: BTreeMap<String, Vec<SpatialMask>>,
    pub temporal_weights: BTreeMap<String, TemporalWeights>,
}

/// Evaluate `model` on the named sequences (sorted by id). When
/// `persist` names a store and run id, captured masks are written
/// under `masks/<run_id>/` and referenced in the result.
pub fn evaluate_on(
    model: &Model,
    manifest: &DatasetManifest,
    ids: &[String],
    persist: Option<(&RunStore, &str)>,
) -> Result<Evaluation> {
    if ids.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "evaluation needs at least one sequence".into(),
        ));
    }
    let mut sorted_ids = ids.to_vec();
    sorted_ids.sort();
    let capture = model.spec().saliency_dims != SaliencyDims::None;

    let mut per_item = Vec::with_capacity(sorted_ids.len());
    let mut mask_refs = Vec::new();
    let mut spatial_masks = BTreeMap::new();
    let mut temporal_weights = BTreeMap::new();
    for id in &sorted_ids {
        let seq = manifest.load_sequence(id)?;
        let pred = predict(model, &seq.frames, id, capture)?;
        let err = angular_error(&pred.illuminant, &seq.illuminant.rgb())?;
        per_item.push(ItemError {
            id: id.clone(),
            error: err,
        });
        if capture {
            if let Some((store, run_id)) = persist {
                mask_refs.extend(persist_masks(store, run_id, id, &pred.captured_spatial_masks, pred.captured_temporal_weights.as_ref())?);
            }
            if !pred.captured_spatial_masks.is_empty() {
                spatial_masks.insert(id.clone(), pred.captured_spatial_masks);
            }
            if let Some(w) = pred.captured_temporal_weights {
                temporal_weights.insert(id.clone(), w);
            }
        }
    }
    let errors: Vec<f64> = per_item.iter().map(|e| e.error).collect();
    let summary = summarize_errors(&errors)?;
    Ok(Evaluation {
        per_item,
        summary,
        mask_refs,
        spatial_masks,
        temporal_weights,
    })
}

fn persist_masks(
    store: &RunStore,
    run_id: &str,
    seq_id: &str,
    spatial: &[SpatialMask],
    temporal: Option<&TemporalWeights>,
) -> Result<Vec<String>> {
    let dir = store.masks_dir(run_id);
    std::fs::create_dir_all(&dir).map_err(|e| SalvetError::io(&dir, e))?;
    let mut refs = Vec::new();
    if !spatial.is_empty() {
        let (h, w) = (spatial[0].height(), spatial[0].width());
        let mut values = Vec::with_capacity(spatial.len() * h * w);
        for m in spatial {
            values.extend(m.values().iter().copied());
        }
        let path = dir.join(format!("{seq_id}.spatial.tsr"));
        write_tensor(&path, &[spatial.len(), h, w], Dtype::F32, &values)?;
        refs.push(format!("masks/{run_id}/{seq_id}.spatial.tsr"));
    }
    if let Some(tw) = temporal {
        let path = dir.join(format!("{seq_id}.temporal.tsr"));
        write_tensor(&path, &[tw.weights.len()], Dtype::F32, &tw.weights)?;
        refs.push(format!("masks/{run_id}/{seq_id}.temporal.tsr"));
    }
    Ok(refs)
}

/// Train `spec` on every fold except `fold`, evaluate on `fold`,
/// persist the checkpoint and record, and return the record. If the
/// store already holds this run (same id, checkpoint present) the
/// stored record is returned unchanged, which is what makes campaigns
/// resumable.
pub fn train(
    spec: &ModelSpec,
    manifest: &DatasetManifest,
    fold: usize,
    cfg: &TrainConfig,
    store: &RunStore,
) -> Result<RunRecord> {
    cfg.validate()?;
    spec.validate()?;
    let id = run_id(spec, &WeightSource::Learned, fold, cfg.seed);
    if store.has_record(&id) && store.checkpoint_path(&id).is_file() {
        return store.load_record(&id);
    }
    let started = Instant::now();
    let (train_ids, test_ids) = manifest.fold_ids(fold)?;
    if train_ids.is_empty() {
        return Err(SalvetError::InvalidArgument(format!(
            "fold {fold} leaves no training sequences"
        )));
    }

    let mut train_seqs = Vec::with_capacity(train_ids.len());
    for sid in &train_ids {
        train_seqs.push(manifest.load_sequence(sid)?);
    }

    let mut model = build_model(spec, cfg.seed)?;
    let seeds = RunSeeds::from_config(cfg);
    fit(&mut model, &train_seqs, cfg, &seeds)?;

    let eval = evaluate_on(&model, manifest, &test_ids, Some((store, &id)))?;
    model.save_checkpoint(&store.checkpoint_path(&id))?;
    let record = RunRecord {
        run_id: id,
        spec: spec.clone(),
        weight_source: WeightSource::Learned,
        fold,
        per_item_errors: eval.per_item,
        summary: eval.summary,
        mask_refs: eval.mask_refs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seeds,
    };
    store.save_record(&record)?;
    Ok(record)
}

/// The bare optimization loop, exposed for overfit checks: mutates
/// `model` in place over `cfg.epochs` passes of the given sequences.
pub fn fit(
    model: &mut Model,
    train_seqs: &[FrameSequence],
    cfg: &TrainConfig,
    seeds: &RunSeeds,
) -> Result<()> {
    cfg.validate()?;
    if train_seqs.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "training needs at least one sequence".into(),
        ));
    }
    let mut opt = RmsProp::new(cfg.learning_rate);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream_seed("epoch-order", &[seeds.shuffle, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(cfg.batch_size) {
            let mut batch_grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for &i in chunk {
                let seq = &train_seqs[i];
                let seq_input;
                let input = if cfg.augment {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        "augment-draw",
                        &[seeds.augment, epoch as u64, fnv1a(seq.id.as_bytes())],
                    ));
                    seq_input = augment(seq, &mut rng)?;
                    &seq_input
                } else {
                    seq
                };
                let mut art = model.forward(&input.frames, &input.id)?;
                if !art.graph.value(art.prediction).all_finite() {
                    return Err(SalvetError::Numeric(format!(
                        "training diverged: non-finite prediction at epoch {epoch}, sequence {:?}",
                        input.id
                    )));
                }
                let loss = art
                    .graph
                    .angular_loss_deg(art.prediction, input.illuminant.rgb());
                let loss_val = art.graph.value(loss).item();
                if !loss_val.is_finite() {
                    return Err(SalvetError::Numeric(format!(
                        "training diverged: non-finite loss at epoch {epoch}, sequence {:?}",
                        input.id
                    )));
                }
                let grads = art.graph.backward(loss);
                for (name, var) in &art.param_vars {
                    if let Some(g) = grads.get(*var) {
                        batch_grads
                            .entry(name.clone())
                            .and_modify(|acc| {
                                for (a, &b) in acc.data_mut().iter_mut().zip(g.iter()) {
                                    *a += b;
                                }
                            })
                            .or_insert_with(|| g.clone());
                    }
                }
            }
            if chunk.len() > 1 {
                let scale = 1.0 / chunk.len() as f64;
                for g in batch_grads.values_mut() {
                    for v in g.data_mut() {
                        *v *= scale;
                    }
                }
            }
            opt.step(model.params_mut(), &batch_grads);
        }
    }
    Ok(())
}

/// Evaluate an already-trained model under a different weight source
/// (frozen-uniform or transplanted masks) and persist the run. The
/// model passed in must already carry the override.
pub fn record_evaluation(
    model: &Model,
    source: WeightSource,
    manifest: &DatasetManifest,
    fold: usize,
    cfg: &TrainConfig,
    store: &RunStore,
) -> Result<RunRecord> {
    let id = run_id(model.spec(), &source, fold, cfg.seed);
    if store.has_record(&id) {
        return store.load_record(&id);
    }
    let started = Instant::now();
    let (_, test_ids) = manifest.fold_ids(fold)?;
    let eval = evaluate_on(model, manifest, &test_ids, Some((store, &id)))?;
    let record = RunRecord {
        run_id: id,
        spec: model.spec().clone(),
        weight_source: source,
        fold,
        per_item_errors: eval.per_item,
        summary: eval.summary,
        mask_refs: eval.mask_refs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seeds: RunSeeds::from_config(cfg),
    };
    store.save_record(&record)?;
    Ok(record)
}
