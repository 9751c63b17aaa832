//! Cross-validated faithfulness campaigns, summary-statistic replay,
//! report generation, and results export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    atomic_write, record_evaluation, train, RunRecord, RunStore, TrainConfig,
};
use crate::dataio::DatasetManifest;
use crate::error::{Result, SalvetError};
use crate::interventions::{capture_donor_masks, freeze_uniform, transplant, WeightSource};
use crate::metrics::{divergence_report, DivergenceMode, DivergenceReport};
use crate::model::{ConfigLabel, ModelSpec, SaliencyDims};
use crate::stats::welch_t;
use crate::verdicts::{
    calibrate_threshold, four_point_sample, summary_comparison, summary_report, wp1_verdicts,
    wp1_verdicts_from_summaries, wp2_verdict, AccuracyComparison, Comparison,
    DivergenceThresholds, Report, SummaryStat, VerdictRecord, Wp1Input, Wp1SummaryInput,
    Wp2Samples,
};

/// Test-1 campaign: per spec and fold, learned weights against a
/// frozen-uniform intervention on the same trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Wp1Campaign {
    #[serde(default = "default_wp1_name")]
    pub name: String,
    pub specs: Vec<ModelSpec>,
    /// Optional saliency-free spec anchoring the accuracy column.
    #[serde(default)]
    pub baseline: Option<ModelSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub freeze_seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_wp1_name() -> String {
    "wp1".into()
}
fn default_wp2_name() -> String {
    "wp2".into()
}
fn default_alpha() -> f64 {
    0.05
}

/// Test-2 campaign: per contextual spec, the transplant triad (host
/// with own saliency, host with donor saliency, uniform contextual)
/// plus mask divergences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Wp2Campaign {
    #[serde(default = "default_wp2_name")]
    pub name: String,
    pub specs: Vec<ModelSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub freeze_seed: u64,
    #[serde(default = "default_mode")]
    pub divergence_mode: DivergenceMode,
    #[serde(default)]
    pub thresholds: DivergenceThresholds,
    /// Derive a missing spatial threshold from a second-seed retrain
    /// of each host (10th percentile of the per-item divergences).
    #[serde(default = "default_true")]
    pub calibrate_spatial: bool,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_mode() -> DivergenceMode {
    DivergenceMode::Bounded
}
fn default_true() -> bool {
    true
}

/// Accuracy-column provenance: which persisted runs feed one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccuracyRuns {
    pub config: ConfigLabel,
    pub config_runs: Vec<String>,
    pub baseline_runs: Vec<String>,
}

/// Everything a campaign persists besides the run records themselves.
/// Reports are regenerated from this file plus the records it names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CampaignManifest {
    pub name: String,
    pub alpha: f64,
    pub run_ids: Vec<String>,
    pub verdicts: Vec<VerdictRecord>,
    #[serde(default)]
    pub accuracy: Vec<AccuracyRuns>,
}

pub struct CampaignOutput {
    pub manifest: CampaignManifest,
    pub report: Report,
}

fn campaign_file(store: &RunStore, name: &str) -> std::path::PathBuf {
    store.report_path(&format!("{name}.campaign.json"))
}

fn save_campaign(store: &RunStore, manifest: &CampaignManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| SalvetError::Parse(format!("campaign encoding failed: {e}")))?;
    atomic_write(&campaign_file(store, &manifest.name), format!("{body}\n").as_bytes())
}

pub fn load_campaign(store: &RunStore, name: &str) -> Result<CampaignManifest> {
    let path = campaign_file(store, name);
    let body = std::fs::read_to_string(&path).map_err(|e| SalvetError::io(path, e))?;
    serde_json::from_str(&body)
        .map_err(|e| SalvetError::Parse(format!("campaign {name}: {e}")))
}

fn check_folds(data: &DatasetManifest) -> Result<usize> {
    let k = data.num_folds();
    if k < 2 {
        return Err(SalvetError::InvalidArgument(
            "campaigns need a dataset with at least 2 assigned folds".into(),
        ));
    }
    Ok(k)
}

/// Run (or resume) a test-1 campaign over the dataset's folds, persist
/// every run and the campaign manifest, and build the report.
pub fn run_wp1(
    campaign: &Wp1Campaign,
    data: &DatasetManifest,
    store: &RunStore,
) -> Result<CampaignOutput> {
    if campaign.specs.is_empty() {
        return Err(SalvetError::Config("campaign has no specs".into()));
    }
    for spec in &campaign.specs {
        if spec.saliency_dims == SaliencyDims::None {
            return Err(SalvetError::Config(format!(
                "spec {} has no saliency to intervene on",
                spec.code()
            )));
        }
    }
    let folds = check_folds(data)?;

    let mut run_ids = Vec::new();
    let mut inputs = Vec::new();
    let mut learned_ids: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for spec in &campaign.specs {
        let mut learned = Vec::with_capacity(folds);
        let mut uniform = Vec::with_capacity(folds);
        for fold in 0..folds {
            let rec = train(spec, data, fold, &campaign.train, store)?;
            let model = store.load_model(&rec.run_id)?;
            let frozen = freeze_uniform(&model, spec.saliency_dims, campaign.freeze_seed)?;
            let frozen_rec = record_evaluation(
                &frozen,
                WeightSource::UniformFrozen {
                    seed: campaign.freeze_seed,
                },
                data,
                fold,
                &campaign.train,
                store,
            )?;
            learned.push(rec.summary.mean);
            uniform.push(frozen_rec.summary.mean);
            learned_ids
                .entry(spec.code())
                .or_default()
                .push(rec.run_id.clone());
            run_ids.push(rec.run_id);
            run_ids.push(frozen_rec.run_id);
        }
        inputs.push(Wp1Input {
            config: spec.label(),
            learned,
            uniform,
        });
    }
    let verdicts = wp1_verdicts(&inputs, campaign.alpha)?;

    let mut accuracy = Vec::new();
    if let Some(base) = &campaign.baseline {
        let mut baseline_runs = Vec::with_capacity(folds);
        for fold in 0..folds {
            let rec = train(base, data, fold, &campaign.train, store)?;
            baseline_runs.push(rec.run_id.clone());
            run_ids.push(rec.run_id);
        }
        for spec in &campaign.specs {
            accuracy.push(AccuracyRuns {
                config: spec.label(),
                config_runs: learned_ids[&spec.code()].clone(),
                baseline_runs: baseline_runs.clone(),
            });
        }
    }

    let manifest = CampaignManifest {
        name: campaign.name.clone(),
        alpha: campaign.alpha,
        run_ids,
        verdicts,
        accuracy,
    };
    save_campaign(store, &manifest)?;
    let report = generate_report(store, &campaign.name)?;
    Ok(CampaignOutput { manifest, report })
}

/// The non-contextual host for a donor spec: contextuality switched
/// off exactly on the saliency dimensions under test.
pub fn host_spec_for(donor: &ModelSpec) -> ModelSpec {
    ModelSpec {
        spatial_contextual: !donor.saliency_dims.has_spatial(),
        temporal_contextual: !donor.saliency_dims.has_temporal(),
        ..donor.clone()
    }
}

/// Mean of per-item divergence reports (fields averaged; per-frame
/// vectors averaged elementwise when lengths agree, else dropped).
fn mean_divergence(reports: &[DivergenceReport]) -> Option<DivergenceReport> {
    if reports.is_empty() {
        return None;
    }
    let avg = |take: fn(&DivergenceReport) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = reports.iter().filter_map(take).collect();
        if vals.len() == reports.len() {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        } else {
            None
        }
    };
    let mut out = DivergenceReport {
        temporal: avg(|r| r.temporal),
        spatial: avg(|r| r.spatial),
        spatiotemporal: None,
        per_frame_spatial: Vec::new(),
    };
    if let (Some(s), Some(t)) = (out.spatial, out.temporal) {
        out.spatiotemporal = Some(s + t);
    }
    let t_len = reports[0].per_frame_spatial.len();
    if t_len > 0 && reports.iter().all(|r| r.per_frame_spatial.len() == t_len) {
        out.per_frame_spatial = (0..t_len)
            .map(|i| {
                reports.iter().map(|r| r.per_frame_spatial[i]).sum::<f64>()
                    / reports.len() as f64
            })
            .collect();
    }
    Some(out)
}

struct MaskSet {
    spatial: BTreeMap<String, Vec<crate::model::SpatialMask>>,
    temporal: BTreeMap<String, crate::model::TemporalWeights>,
}

fn capture_set(
    model: &crate::model::Model,
    data: &DatasetManifest,
    ids: &[String],
) -> Result<MaskSet> {
    let eval = super::evaluate_on(model, data, ids, None)?;
    Ok(MaskSet {
        spatial: eval.spatial_masks,
        temporal: eval
            .temporal_weights
            .into_iter()
            .collect(),
    })
}

/// Per-item divergences between two mask sets over the given ids.
fn item_divergences(
    a: &MaskSet,
    b: &MaskSet,
    ids: &[String],
    dims: SaliencyDims,
    mode: DivergenceMode,
) -> Result<Vec<DivergenceReport>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let spatial_data: Option<(Vec<_>, Vec<_>)> = if dims.has_spatial() {
            let ma = a.spatial.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!("no spatial masks captured for {id:?}"))
            })?;
            let mb = b.spatial.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!("no spatial masks captured for {id:?}"))
            })?;
            let ta: Vec<_> = ma.iter().map(|m| m.values().clone()).collect();
            let tb: Vec<_> = mb
                .iter()
                .map(|m| {
                    let t = m.values();
                    if ma.is_empty() || t.shape() == ma[0].values().shape() {
                        t.clone()
                    } else {
                        crate::autodiff::resize_bilinear(
                            t,
                            ma[0].height(),
                            ma[0].width(),
                        )
                    }
                })
                .collect();
            Some((ta, tb))
        } else {
            None
        };
        let temporal_data: Option<(&[f64], &[f64])> = if dims.has_temporal() {
            let wa = a.temporal.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!("no temporal weights captured for {id:?}"))
            })?;
            let wb = b.temporal.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!("no temporal weights captured for {id:?}"))
            })?;
            Some((&wa.weights, &wb.weights))
        } else {
            None
        };
        out.push(divergence_report(
            spatial_data
                .as_ref()
                .map(|(x, y)| (x.as_slice(), y.as_slice())),
            temporal_data,
            mode,
        )?);
    }
    Ok(out)
}

/// Run (or resume) a test-2 campaign. Per spec and fold this trains
/// the contextual donor and the non-contextual host, evaluates the
/// triad, measures host-vs-donor mask divergence on the test items,
/// and judges the spec.
pub fn run_wp2(
    campaign: &Wp2Campaign,
    data: &DatasetManifest,
    store: &RunStore,
) -> Result<CampaignOutput> {
    if campaign.specs.is_empty() {
        return Err(SalvetError::Config("campaign has no specs".into()));
    }
    for spec in &campaign.specs {
        if spec.saliency_dims == SaliencyDims::None {
            return Err(SalvetError::Config(format!(
                "spec {} has no saliency to transplant",
                spec.code()
            )));
        }
        if !spec.spatial_contextual || !spec.temporal_contextual {
            return Err(SalvetError::Config(format!(
                "donor spec {} must be contextual; hosts are derived automatically",
                spec.code()
            )));
        }
    }
    let folds = check_folds(data)?;

    let needs_spatial = campaign
        .specs
        .iter()
        .any(|s| s.saliency_dims.has_spatial());
    let mut thresholds = campaign.thresholds;
    let mut calibration_ids = Vec::new();
    if needs_spatial && thresholds.spatial.is_none() {
        if !campaign.calibrate_spatial {
            return Err(SalvetError::Config(
                "spatial divergence threshold missing and calibration disabled".into(),
            ));
        }
        let (spatial, ids) = calibrate_spatial_threshold(campaign, data, store, folds)?;
        thresholds.spatial = Some(spatial);
        calibration_ids = ids;
    }

    let mut run_ids = calibration_ids;
    let mut verdicts = Vec::new();
    for spec in &campaign.specs {
        let dims = spec.saliency_dims;
        let host_spec = host_spec_for(spec);
        let mut host_own = Vec::with_capacity(folds);
        let mut transplanted = Vec::with_capacity(folds);
        let mut uniform_contextual = Vec::with_capacity(folds);
        let mut divergences = Vec::new();
        for fold in 0..folds {
            let donor_rec = train(spec, data, fold, &campaign.train, store)?;
            let donor = store.load_model(&donor_rec.run_id)?;
            let host_rec = train(&host_spec, data, fold, &campaign.train, store)?;
            let host = store.load_model(&host_rec.run_id)?;

            let frozen = freeze_uniform(&donor, dims, campaign.freeze_seed)?;
            let frozen_rec = record_evaluation(
                &frozen,
                WeightSource::UniformFrozen {
                    seed: campaign.freeze_seed,
                },
                data,
                fold,
                &campaign.train,
                store,
            )?;

            let (_, test_ids) = data.fold_ids(fold)?;
            let mut test_seqs = Vec::with_capacity(test_ids.len());
            for id in &test_ids {
                test_seqs.push(data.load_sequence(id)?);
            }
            let donor_masks = capture_donor_masks(&donor, &test_seqs, &donor_rec.run_id)?;
            let grafted = transplant(&host, &donor_masks)?;
            let grafted_rec = record_evaluation(
                &grafted,
                WeightSource::TransplantedContextual {
                    donor_run_id: donor_rec.run_id.clone(),
                },
                data,
                fold,
                &campaign.train,
                store,
            )?;

            let host_masks = capture_set(&host, data, &test_ids)?;
            let donor_set = MaskSet {
                spatial: donor_masks.spatial.clone(),
                temporal: donor_masks.temporal.clone(),
            };
            divergences.extend(item_divergences(
                &host_masks,
                &donor_set,
                &test_ids,
                dims,
                campaign.divergence_mode,
            )?);

            host_own.push(host_rec.summary.mean);
            transplanted.push(grafted_rec.summary.mean);
            uniform_contextual.push(frozen_rec.summary.mean);
            run_ids.extend([
                donor_rec.run_id,
                host_rec.run_id,
                frozen_rec.run_id,
                grafted_rec.run_id,
            ]);
        }
        let divergence = mean_divergence(&divergences).ok_or_else(|| {
            SalvetError::InvalidArgument(format!(
                "spec {} produced no divergence measurements",
                spec.code()
            ))
        })?;
        verdicts.push(wp2_verdict(
            spec.label(),
            &Wp2Samples {
                host_own,
                transplanted,
                uniform_contextual,
            },
            Some(&divergence),
            &thresholds,
            campaign.alpha,
        )?);
    }

    let manifest = CampaignManifest {
        name: campaign.name.clone(),
        alpha: campaign.alpha,
        run_ids,
        verdicts,
        accuracy: Vec::new(),
    };
    save_campaign(store, &manifest)?;
    let report = generate_report(store, &campaign.name)?;
    Ok(CampaignOutput { manifest, report })
}

/// Spatial screening threshold from run-to-run noise: retrain each
/// spatial host under a second seed and take the 10th percentile of
/// the per-item divergences between the two runs' masks.
fn calibrate_spatial_threshold(
    campaign: &Wp2Campaign,
    data: &DatasetManifest,
    store: &RunStore,
    folds: usize,
) -> Result<(f64, Vec<String>)> {
    let alt_cfg = TrainConfig {
        seed: campaign.train.seed.wrapping_add(1),
        ..campaign.train.clone()
    };
    let mut divergences = Vec::new();
    let mut run_ids = Vec::new();
    for spec in &campaign.specs {
        if !spec.saliency_dims.has_spatial() {
            continue;
        }
        let host_spec = host_spec_for(spec);
        for fold in 0..folds {
            let rec_a = train(&host_spec, data, fold, &campaign.train, store)?;
            let rec_b = train(&host_spec, data, fold, &alt_cfg, store)?;
            let model_a = store.load_model(&rec_a.run_id)?;
            let model_b = store.load_model(&rec_b.run_id)?;
            let (_, test_ids) = data.fold_ids(fold)?;
            let masks_a = capture_set(&model_a, data, &test_ids)?;
            let masks_b = capture_set(&model_b, data, &test_ids)?;
            let reports = item_divergences(
                &masks_a,
                &masks_b,
                &test_ids,
                SaliencyDims::S,
                campaign.divergence_mode,
            )?;
            divergences.extend(reports.iter().filter_map(|r| r.spatial));
            run_ids.extend([rec_a.run_id, rec_b.run_id]);
        }
    }
    Ok((calibrate_threshold(&divergences)?, run_ids))
}

/// Rebuild a campaign's report from its manifest and the persisted run
/// records it references. A missing record is an error naming the run,
/// never a silent recomputation.
pub fn generate_report(store: &RunStore, name: &str) -> Result<Report> {
    let manifest = load_campaign(store, name)?;
    let mut records: BTreeMap<String, RunRecord> = BTreeMap::new();
    for id in &manifest.run_ids {
        if !store.has_record(id) {
            return Err(SalvetError::InvalidArgument(format!(
                "report {name}: run record {id} is missing from the store"
            )));
        }
        records.insert(id.clone(), store.load_record(id)?);
    }
    let mut accuracy = Vec::new();
    for plan in &manifest.accuracy {
        let mut config_means = Vec::with_capacity(plan.config_runs.len());
        for id in &plan.config_runs {
            let rec = records.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!(
                    "report {name}: accuracy row references unlisted run {id}"
                ))
            })?;
            config_means.push(rec.summary.mean);
        }
        let mut baseline_means = Vec::with_capacity(plan.baseline_runs.len());
        for id in &plan.baseline_runs {
            let rec = records.get(id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!(
                    "report {name}: accuracy row references unlisted run {id}"
                ))
            })?;
            baseline_means.push(rec.summary.mean);
        }
        let t = welch_t(&config_means, &baseline_means)?;
        accuracy.push(AccuracyComparison {
            config: plan.config,
            config_mean: config_means.iter().sum::<f64>() / config_means.len() as f64,
            baseline_mean: baseline_means.iter().sum::<f64>() / baseline_means.len() as f64,
            comparison: Comparison {
                label: "learned vs baseline".into(),
                statistic: t.statistic,
                df: t.df,
                p: t.p,
                adjusted_p: None,
                effect_size: None,
            },
        });
    }
    let report = summary_report(&manifest.verdicts, &accuracy)?;
    let json = report.to_json()?;
    atomic_write(
        &store.report_path(&format!("{name}.report.json")),
        format!("{json}\n").as_bytes(),
    )?;
    atomic_write(
        &store.report_path(&format!("{name}.report.txt")),
        report.render_text().as_bytes(),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayWp1Row {
    pub config: String,
    pub learned: SummaryStat,
    pub uniform: SummaryStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayWp2Row {
    pub config: String,
    pub host_own: SummaryStat,
    pub transplanted: SummaryStat,
    pub uniform_contextual: SummaryStat,
    #[serde(default)]
    pub divergence: Option<DivergenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayAccuracyRow {
    pub config: String,
    pub summary: SummaryStat,
    pub baseline: SummaryStat,
}

/// Summary-statistic replay input: verdicts without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayFixture {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub thresholds: DivergenceThresholds,
    #[serde(default)]
    pub wp1: Vec<ReplayWp1Row>,
    #[serde(default)]
    pub wp2: Vec<ReplayWp2Row>,
    #[serde(default)]
    pub accuracy: Vec<ReplayAccuracyRow>,
}

impl ReplayFixture {
    pub fn from_path(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| SalvetError::io(path, e))?;
        serde_json::from_str(&body)
            .map_err(|e| SalvetError::Parse(format!("{}: {e}", path.display())))
    }

    /// The bundled fixture holding the published summary rows.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../fixtures/replay.json"))
            .expect("bundled replay fixture is valid")
    }
}

/// Judge a replay fixture: test-1 rows through the summary route,
/// test-2 rows through canonical 4-point reconstruction, accuracy rows
/// through a summary t-test.
pub fn replay(fixture: &ReplayFixture) -> Result<(Vec<VerdictRecord>, Report)> {
    let mut verdicts = Vec::new();
    if !fixture.wp1.is_empty() {
        let inputs: Vec<Wp1SummaryInput> = fixture
            .wp1
            .iter()
            .map(|row| {
                Ok(Wp1SummaryInput {
                    config: ConfigLabel::parse(&row.config)?,
                    learned: row.learned,
                    uniform: row.uniform,
                })
            })
            .collect::<Result<_>>()?;
        verdicts.extend(wp1_verdicts_from_summaries(&inputs, fixture.alpha)?);
    }
    for row in &fixture.wp2 {
        let config = ConfigLabel::parse(&row.config)?;
        let samples = Wp2Samples {
            host_own: four_point_sample(&row.host_own)?,
            transplanted: four_point_sample(&row.transplanted)?,
            uniform_contextual: four_point_sample(&row.uniform_contextual)?,
        };
        verdicts.push(wp2_verdict(
            config,
            &samples,
            row.divergence.as_ref(),
            &fixture.thresholds,
            fixture.alpha,
        )?);
    }
    let mut accuracy = Vec::new();
    for row in &fixture.accuracy {
        let config = ConfigLabel::parse(&row.config)?;
        accuracy.push(AccuracyComparison {
            config,
            config_mean: row.summary.mean,
            baseline_mean: row.baseline.mean,
            comparison: summary_comparison("learned vs baseline", &row.summary, &row.baseline)?,
        });
    }
    let report = summary_report(&verdicts, &accuracy)?;
    Ok((verdicts, report))
}

/// Export records as a pretty JSON array; every id must exist.
pub fn export_json(store: &RunStore, run_ids: &[String], out: &Path) -> Result<()> {
    let records = collect_records(store, run_ids)?;
    let body = serde_json::to_string_pretty(&records)
        .map_err(|e| SalvetError::Parse(format!("export encoding failed: {e}")))?;
    atomic_write(out, format!("{body}\n").as_bytes())
}

/// Import records exported by [`export_json`], re-validating each
/// summary against its per-item errors.
pub fn import_json(path: &Path) -> Result<Vec<RunRecord>> {
    let body = std::fs::read_to_string(path).map_err(|e| SalvetError::io(path, e))?;
    let records: Vec<RunRecord> = serde_json::from_str(&body)
        .map_err(|e| SalvetError::Parse(format!("{}: {e}", path.display())))?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

/// Export one CSV row per record, flattening the summary panel.
pub fn export_csv(store: &RunStore, run_ids: &[String], out: &Path) -> Result<()> {
    let records = collect_records(store, run_ids)?;
    let mut body = String::from(
        "runId,spec,weightSource,fold,n,mean,median,trimean,best25,worst25,worst5\n",
    );
    for r in &records {
        let s = &r.summary;
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id,
            r.spec.code(),
            r.weight_source.code(),
            r.fold,
            s.n,
            s.mean,
            s.median,
            s.trimean,
            s.best25,
            s.worst25,
            s.worst5
        ));
    }
    atomic_write(out, body.as_bytes())
}

fn collect_records(store: &RunStore, run_ids: &[String]) -> Result<Vec<RunRecord>> {
    let mut records = Vec::with_capacity(run_ids.len());
    for id in run_ids {
        if !store.has_record(id) {
            return Err(SalvetError::InvalidArgument(format!("unknown run id {id:?}")));
        }
        records.push(store.load_record(id)?);
    }
    Ok(records)
}
