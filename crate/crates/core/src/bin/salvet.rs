use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use salvet::autodiff::Tensor;
use salvet::dataio::{
    generate_dataset, kfold_split, read_tensor, DatasetManifest, EvidenceMode, SynthConfig,
};
use salvet::error::{Result, SalvetError};
use salvet::harness::{
    export_csv, export_json, generate_report, render_heatmap, replay, run_wp1, run_wp2,
    ReplayFixture, RunStore, TrainConfig, Wp1Campaign, Wp2Campaign,
};
use salvet::metrics::DivergenceMode;
use salvet::model::{Backbone, ConfigLabel, ModelSpec, SpatialMask};
use salvet::verdicts::DivergenceThresholds;

#[derive(Parser)]
#[command(
    name = "salvet",
    version,
    about = "Sequence colour-constancy models with mechanized saliency-faithfulness audits"
)]
struct Cli {
    /// TOML file with train/model/synth/wp1/wp2 sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the training seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results store root (runs, checkpoints, masks, reports)
    #[arg(long, global = true, default_value = "salvet-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic planted-evidence dataset
    Synth(SynthArgs),
    /// Train one spec on one fold and persist the run
    Train {
        /// Dataset directory (containing dataset.json)
        #[arg(long)]
        data: PathBuf,
        /// Spec code such as B, C-S, A-ST, C-S.ncs
        #[arg(long)]
        spec: Option<String>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Assign folds before training (overrides stored assignment)
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Run the learned-vs-frozen-uniform campaign
    Wp1 {
        #[arg(long)]
        data: PathBuf,
        /// Spec codes, comma separated (overrides the config)
        #[arg(long)]
        specs: Option<String>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Run the transplant campaign
    Wp2 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        specs: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Judge a summary-statistic fixture without training
    Replay {
        /// Fixture path; the bundled published-results fixture when absent
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Emit the report as JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Regenerate a campaign report from persisted records
    Report {
        /// Campaign name (as configured when it ran)
        name: String,
        /// Also export the campaign's run records as JSON
        #[arg(long)]
        export_json: Option<PathBuf>,
        /// Also export the campaign's run records as CSV
        #[arg(long)]
        export_csv: Option<PathBuf>,
    },
    /// Blend a saliency mask over a frame and write a PNG
    Heatmap {
        /// Frame image (PNG)
        #[arg(long)]
        frame: PathBuf,
        /// Mask tensor file (rank 2, or rank 3 with --frame-index)
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Print to stdout, exiting quietly if the reader has gone away
/// (e.g. piped into `head`).
fn emit(args: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if out.write_fmt(args).is_err() {
        std::process::exit(0);
    }
}

macro_rules! say {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! sayln {
    () => { emit(format_args!("\n")) };
    ($($t:tt)*) => {{ emit(format_args!($($t)*)); emit(format_args!("\n")); }};
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output dataset directory
    out: PathBuf,
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// GLOBAL, SPATIAL_PATCH, or KEY_FRAME
    #[arg(long)]
    mode: Option<String>,
    /// Assign this many cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ModelSection {
    /// "desk" (default) or "full"
    profile: Option<String>,
    hidden_size: Option<usize>,
    kernel_size: Option<usize>,
    /// "TINY" or "SQUEEZE_STYLE"
    backbone: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SynthSection {
    num_sequences: usize,
    t: usize,
    h: usize,
    w: usize,
    evidence_mode: String,
    folds: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Wp1Section {
    name: Option<String>,
    #[serde(default)]
    specs: Vec<String>,
    baseline: Option<String>,
    alpha: Option<f64>,
    freeze_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Wp2Section {
    name: Option<String>,
    #[serde(default)]
    specs: Vec<String>,
    alpha: Option<f64>,
    freeze_seed: Option<u64>,
    temporal_threshold: Option<f64>,
    spatial_threshold: Option<f64>,
    calibrate_spatial: Option<bool>,
    /// "BOUNDED" or "PAPER_SCALE"
    divergence_mode: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    train: Option<TrainConfig>,
    #[serde(default)]
    model: ModelSection,
    synth: Option<SynthSection>,
    wp1: Option<Wp1Section>,
    wp2: Option<Wp2Section>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| SalvetError::io(path, e))?;
        toml::from_str(&body)
            .map_err(|e| SalvetError::Parse(format!("{}: {e}", path.display())))
    }
}

/// Resolved defaults: config file overlaid with global CLI flags.
struct Ctx {
    cfg: FileConfig,
    train: TrainConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let mut train = cfg.train.clone().unwrap_or_else(|| TrainConfig::desk(0));
        if let Some(seed) = cfg.seed {
            train.seed = seed;
        }
        if let Some(seed) = cli.seed {
            train.seed = seed;
        }
        train.validate()?;
        Ok(Ctx {
            cfg,
            train,
            out_dir: cli.out_dir.clone(),
        })
    }

    fn store(&self) -> Result<RunStore> {
        RunStore::open(&self.out_dir)
    }

    fn spec_from_code(&self, code: &str) -> Result<ModelSpec> {
        let (base, suffix) = match code.split_once('.') {
            Some((b, s)) => (b, Some(s)),
            None => (code, None),
        };
        let label = ConfigLabel::parse(base)?;
        let section = &self.cfg.model;
        let profile = section.profile.as_deref().unwrap_or("desk");
        let mut spec = match profile {
            "desk" => ModelSpec::desk(label.saliency_type, label.saliency_dims),
            "full" => ModelSpec::full_scale(label.saliency_type, label.saliency_dims),
            other => {
                return Err(SalvetError::Config(format!(
                    "unknown model profile {other:?}; expected \"desk\" or \"full\""
                )))
            }
        };
        match suffix {
            None => {}
            Some("ncs") => spec.spatial_contextual = false,
            Some("nct") => spec.temporal_contextual = false,
            Some("ncst") => {
                spec.spatial_contextual = false;
                spec.temporal_contextual = false;
            }
            Some(other) => {
                return Err(SalvetError::InvalidArgument(format!(
                    "unknown spec suffix {other:?} in {code:?}"
                )))
            }
        }
        if let Some(h) = section.hidden_size {
            spec.hidden_size = h;
        }
        if let Some(k) = section.kernel_size {
            spec.kernel_size = k;
        }
        if let Some(b) = &section.backbone {
            spec.backbone = parse_backbone(b)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn spec_list(&self, arg: &Option<String>, section: &[String]) -> Result<Vec<ModelSpec>> {
        let codes: Vec<String> = match arg {
            Some(s) => s.split(',').map(|c| c.trim().to_string()).collect(),
            None => section.to_vec(),
        };
        if codes.is_empty() {
            return Err(SalvetError::Config(
                "no specs given; pass --specs or list them in the config".into(),
            ));
        }
        codes.iter().map(|c| self.spec_from_code(c)).collect()
    }

    fn manifest(&self, data: &Path, folds: Option<usize>) -> Result<DatasetManifest> {
        let manifest = DatasetManifest::load(&data.join("dataset.json"))?;
        match folds {
            Some(k) => kfold_split(&manifest, k, self.train.seed),
            None => Ok(manifest),
        }
    }
}

fn parse_backbone(s: &str) -> Result<Backbone> {
    match s {
        "TINY" => Ok(Backbone::Tiny),
        "SQUEEZE_STYLE" => Ok(Backbone::SqueezeStyle),
        other => Err(SalvetError::Config(format!(
            "unknown backbone {other:?}; expected TINY or SQUEEZE_STYLE"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<EvidenceMode> {
    match s {
        "GLOBAL" => Ok(EvidenceMode::Global),
        "SPATIAL_PATCH" => Ok(EvidenceMode::SpatialPatch),
        "KEY_FRAME" => Ok(EvidenceMode::KeyFrame),
        other => Err(SalvetError::InvalidArgument(format!(
            "unknown evidence mode {other:?}; expected GLOBAL, SPATIAL_PATCH, or KEY_FRAME"
        ))),
    }
}

fn mode_name(mode: EvidenceMode) -> &'static str {
    match mode {
        EvidenceMode::Global => "GLOBAL",
        EvidenceMode::SpatialPatch => "SPATIAL_PATCH",
        EvidenceMode::KeyFrame => "KEY_FRAME",
    }
}

fn parse_divergence_mode(s: &str) -> Result<DivergenceMode> {
    match s {
        "BOUNDED" => Ok(DivergenceMode::Bounded),
        "PAPER_SCALE" => Ok(DivergenceMode::PaperScale),
        other => Err(SalvetError::Config(format!(
            "unknown divergence mode {other:?}; expected BOUNDED or PAPER_SCALE"
        ))),
    }
}

fn cmd_synth(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    let out = &args.out;
    let section = ctx.cfg.synth.as_ref();
    let cfg = SynthConfig {
        num_sequences: args
            .sequences
            .or(section.map(|s| s.num_sequences))
            .unwrap_or(16),
        t: args.frames.or(section.map(|s| s.t)).unwrap_or(5),
        h: args.height.or(section.map(|s| s.h)).unwrap_or(32),
        w: args.width.or(section.map(|s| s.w)).unwrap_or(32),
        evidence_mode: match &args.mode {
            Some(m) => parse_mode(m)?,
            None => match section {
                Some(s) => parse_mode(&s.evidence_mode)?,
                None => EvidenceMode::Global,
            },
        },
    };
    let (manifest, _) = generate_dataset(&cfg, ctx.train.seed, out)?;
    let folds = args.folds.or(section.and_then(|s| s.folds));
    let manifest = match folds {
        Some(k) => {
            let split = kfold_split(&manifest, k, ctx.train.seed)?;
            split.save(&out.join("dataset.json"))?;
            split
        }
        None => manifest,
    };
    sayln!(
        "wrote {} sequences ({}x{}x{}, {}) to {}{}",
        cfg.num_sequences,
        cfg.t,
        cfg.h,
        cfg.w,
        mode_name(cfg.evidence_mode),
        out.display(),
        match folds {
            Some(k) => format!(", {k} folds assigned"),
            None => String::new(),
        }
    );
    let _ = manifest;
    Ok(())
}

fn cmd_train(ctx: &Ctx, data: &Path, spec_arg: Option<&str>, fold: usize, folds: Option<usize>) -> Result<()> {
    let code = match spec_arg {
        Some(c) => c.to_string(),
        None => {
            return Err(SalvetError::Config(
                "no spec given; pass --spec (e.g. --spec C-S)".into(),
            ))
        }
    };
    let spec = ctx.spec_from_code(&code)?;
    let manifest = ctx.manifest(data, folds)?;
    let store = ctx.store()?;
    let record = salvet::harness::train(&spec, &manifest, fold, &ctx.train, &store)?;
    sayln!(
        "run {}: test MAE {:.3} deg over {} items ({:.1}s)",
        record.run_id, record.summary.mean, record.summary.n, record.wall_time_secs
    );
    Ok(())
}

fn cmd_wp1(
    ctx: &Ctx,
    data: &Path,
    specs: &Option<String>,
    baseline: &Option<String>,
    folds: Option<usize>,
) -> Result<()> {
    let section = ctx.cfg.wp1.clone();
    let section_specs = section.as_ref().map(|s| s.specs.clone()).unwrap_or_default();
    let campaign = Wp1Campaign {
        name: section
            .as_ref()
            .and_then(|s| s.name.clone())
            .unwrap_or_else(|| "wp1".into()),
        specs: ctx.spec_list(specs, &section_specs)?,
        baseline: match baseline
            .clone()
            .or(section.as_ref().and_then(|s| s.baseline.clone()))
        {
            Some(code) => Some(ctx.spec_from_code(&code)?),
            None => None,
        },
        alpha: section.as_ref().and_then(|s| s.alpha).unwrap_or(0.05),
        freeze_seed: section.as_ref().and_then(|s| s.freeze_seed).unwrap_or(0),
        train: ctx.train.clone(),
    };
    let manifest = ctx.manifest(data, folds)?;
    let store = ctx.store()?;
    let out = run_wp1(&campaign, &manifest, &store)?;
    for v in &out.manifest.verdicts {
        sayln!("{} {:?}: {}", v.config, v.test, v.outcome);
    }
    say!("{}", out.report.render_text());
    sayln!("report written to {}", store.report_path(&format!("{}.report.json", campaign.name)).display());
    Ok(())
}

fn cmd_wp2(ctx: &Ctx, data: &Path, specs: &Option<String>, folds: Option<usize>) -> Result<()> {
    let section = ctx.cfg.wp2.clone();
    let section_specs = section.as_ref().map(|s| s.specs.clone()).unwrap_or_default();
    let campaign = Wp2Campaign {
        name: section
            .as_ref()
            .and_then(|s| s.name.clone())
            .unwrap_or_else(|| "wp2".into()),
        specs: ctx.spec_list(specs, &section_specs)?,
        alpha: section.as_ref().and_then(|s| s.alpha).unwrap_or(0.05),
        freeze_seed: section.as_ref().and_then(|s| s.freeze_seed).unwrap_or(0),
        divergence_mode: match section.as_ref().and_then(|s| s.divergence_mode.clone()) {
            Some(m) => parse_divergence_mode(&m)?,
            None => DivergenceMode::Bounded,
        },
        thresholds: DivergenceThresholds {
            temporal: section
                .as_ref()
                .and_then(|s| s.temporal_threshold)
                .unwrap_or(0.7),
            spatial: section.as_ref().and_then(|s| s.spatial_threshold),
        },
        calibrate_spatial: section
            .as_ref()
            .and_then(|s| s.calibrate_spatial)
            .unwrap_or(true),
        train: ctx.train.clone(),
    };
    let manifest = ctx.manifest(data, folds)?;
    let store = ctx.store()?;
    let out = run_wp2(&campaign, &manifest, &store)?;
    for v in &out.manifest.verdicts {
        sayln!("{} {:?}: {} ({})", v.config, v.test, v.outcome, v.rationale);
    }
    say!("{}", out.report.render_text());
    Ok(())
}

fn cmd_replay(fixture: Option<&Path>, json: bool) -> Result<()> {
    let fixture = match fixture {
        Some(path) => ReplayFixture::from_path(path)?,
        None => ReplayFixture::builtin(),
    };
    let (verdicts, report) = replay(&fixture)?;
    if json {
        sayln!("{}", report.to_json()?);
    } else {
        for v in &verdicts {
            sayln!("{} {:?}: {}", v.config, v.test, v.outcome);
        }
        say!("{}", report.render_text());
    }
    Ok(())
}

fn cmd_report(
    ctx: &Ctx,
    name: &str,
    export_json_path: Option<&Path>,
    export_csv_path: Option<&Path>,
) -> Result<()> {
    let store = ctx.store()?;
    let report = generate_report(&store, name)?;
    say!("{}", report.render_text());
    if export_json_path.is_some() || export_csv_path.is_some() {
        let campaign = salvet::harness::campaign::load_campaign(&store, name)?;
        if let Some(path) = export_json_path {
            export_json(&store, &campaign.run_ids, path)?;
            sayln!("exported {} records to {}", campaign.run_ids.len(), path.display());
        }
        if let Some(path) = export_csv_path {
            export_csv(&store, &campaign.run_ids, path)?;
            sayln!("exported {} records to {}", campaign.run_ids.len(), path.display());
        }
    }
    Ok(())
}

fn cmd_heatmap(frame: &Path, mask: &Path, frame_index: usize, out: &Path) -> Result<()> {
    let img = image::open(frame)
        .map_err(|e| SalvetError::io(frame, std::io::Error::other(e)))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = px.0[c] as f64 / 255.0;
        }
    }
    let frame_tensor = Tensor::new(&[3, h, w], data);

    let tensor = read_tensor(mask)?;
    let mask_tensor = match tensor.shape.len() {
        2 => Tensor::new(&tensor.shape, tensor.values),
        3 => {
            let (t, mh, mw) = (tensor.shape[0], tensor.shape[1], tensor.shape[2]);
            if frame_index >= t {
                return Err(SalvetError::InvalidArgument(format!(
                    "frame index {frame_index} out of range for a {t}-frame mask file"
                )));
            }
            let plane = tensor.values[frame_index * mh * mw..(frame_index + 1) * mh * mw].to_vec();
            Tensor::new(&[mh, mw], plane)
        }
        other => {
            return Err(SalvetError::InvalidArgument(format!(
                "mask tensor must be rank 2 or 3, got rank {other}"
            )))
        }
    };
    render_heatmap(&frame_tensor, &SpatialMask::new(mask_tensor)?, out)?;
    sayln!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.cmd {
        Cmd::Synth(args) => cmd_synth(&ctx, args),
        Cmd::Train {
            data,
            spec,
            fold,
            folds,
        } => cmd_train(&ctx, data, spec.as_deref(), *fold, *folds),
        Cmd::Wp1 {
            data,
            specs,
            baseline,
            folds,
        } => cmd_wp1(&ctx, data, specs, baseline, *folds),
        Cmd::Wp2 { data, specs, folds } => cmd_wp2(&ctx, data, specs, *folds),
        Cmd::Replay { fixture, json } => cmd_replay(fixture.as_deref(), *json),
        Cmd::Report {
            name,
            export_json,
            export_csv,
        } => cmd_report(&ctx, name, export_json.as_deref(), export_csv.as_deref()),
        Cmd::Heatmap {
            frame,
            mask,
            frame_index,
            out,
        } => cmd_heatmap(frame, mask, *frame_index, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
