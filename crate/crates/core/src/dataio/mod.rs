//! Dataset layout, frame decoding, augmentation, fold splitting, the
//! synthetic planted-evidence generator, and the tensor file format.
//!
//! A dataset is a directory of sequence subdirectories. Each sequence
//! holds its frames as PNG files in filename order plus a
//! `ground_truth.json` of the form `{"illuminant": [r, g, b]}`.

pub mod augment;
pub mod synth;
pub mod tensorfile;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Result, SalvetError};

pub use augment::{apply_augmentation, augment, draw_augmentation, AugmentDraw};
pub use synth::{
    generate_dataset, generate_sequences, load_evidence, Evidence, EvidenceMode, SynthConfig,
};
pub use tensorfile::{read_tensor, write_tensor, Dtype, TensorData};

/// Unit-normalized nonnegative RGB light-source colour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Illuminant {
    rgb: [f64; 3],
}

impl Illuminant {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SalvetError::InvalidArgument(format!(
                "illuminant components must be finite and nonnegative, got {rgb:?}"
            )));
        }
        let norm = rgb.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SalvetError::InvalidArgument(
                "illuminant cannot be the zero vector".into(),
            ));
        }
        Ok(Illuminant {
            rgb: [rgb[0] / norm, rgb[1] / norm, rgb[2] / norm],
        })
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = SalvetError;
    fn try_from(rgb: [f64; 3]) -> Result<Self> {
        Illuminant::new(rgb)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(i: Illuminant) -> [f64; 3] {
        i.rgb
    }
}

/// A video sequence with the ground truth attached to its last frame.
/// Frames are [3, H, W] tensors with values in [0, 1].
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub id: String,
    pub frames: Vec<Tensor>,
    pub illuminant: Illuminant,
}

impl FrameSequence {
    pub fn new(id: impl Into<String>, frames: Vec<Tensor>, illuminant: Illuminant) -> Result<Self> {
        let id = id.into();
        if frames.is_empty() {
            return Err(SalvetError::InvalidArgument(format!(
                "sequence {id:?} has no frames"
            )));
        }
        let shape = frames[0].shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 || shape[1] == 0 || shape[2] == 0 {
            return Err(SalvetError::InvalidArgument(format!(
                "sequence {id:?}: frames must be [3, H, W], got {shape:?}"
            )));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != shape.as_slice() {
                return Err(SalvetError::InvalidArgument(format!(
                    "sequence {id:?}: frame {t} shape {:?} differs from {shape:?}",
                    f.shape()
                )));
            }
            if f.data().iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
                return Err(SalvetError::InvalidArgument(format!(
                    "sequence {id:?}: frame {t} has values outside [0, 1]"
                )));
            }
        }
        Ok(FrameSequence { id, frames, illuminant })
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SequenceEntry {
    pub id: String,
    pub frame_count: usize,
}

/// Index of a dataset directory: sequence ids, frame counts, and
/// (once assigned) fold memberships. The root path is contextual and
/// is not persisted; loading fills it from the manifest's location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub sequences: Vec<SequenceEntry>,
    #[serde(default)]
    pub folds: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sequences.iter().map(|s| s.id.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| SalvetError::Parse(format!("manifest encoding failed: {e}")))?;
        bytes.push(b'\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, &bytes).map_err(|e| SalvetError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| SalvetError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SalvetError::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_slice(&bytes)
            .map_err(|e| SalvetError::Parse(format!("{}: bad manifest: {e}", path.display())))?;
        m.root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(m)
    }

    pub fn load_sequence(&self, id: &str) -> Result<FrameSequence> {
        load_sequence(&self.root, id)
    }

    /// Number of assigned folds, 0 before any split.
    pub fn num_folds(&self) -> usize {
        self.folds.values().max().map(|m| m + 1).unwrap_or(0)
    }

    /// Ids evaluated (`test`) and trained on (`train`) for one fold.
    pub fn fold_ids(&self, fold: usize) -> Result<(Vec<String>, Vec<String>)> {
        if self.folds.is_empty() {
            return Err(SalvetError::InvalidArgument(
                "manifest has no fold assignments; run kfold_split first".into(),
            ));
        }
        let max = *self.folds.values().max().unwrap();
        if fold > max {
            return Err(SalvetError::InvalidArgument(format!(
                "fold {fold} out of range, assignments go up to {max}"
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in &self.sequences {
            let f = *self.folds.get(&s.id).ok_or_else(|| {
                SalvetError::InvalidArgument(format!("sequence {:?} has no fold", s.id))
            })?;
            if f == fold {
                test.push(s.id.clone());
            } else {
                train.push(s.id.clone());
            }
        }
        Ok((train, test))
    }
}

/// One sequence that failed validation during a dataset scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadIssue {
    pub id: String,
    pub message: String,
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| SalvetError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    illuminant: [f64; 3],
}

fn read_ground_truth(dir: &Path) -> Result<Illuminant> {
    let path = dir.join("ground_truth.json");
    let bytes = fs::read(&path).map_err(|e| SalvetError::io(&path, e))?;
    let gt: GroundTruthFile = serde_json::from_slice(&bytes)
        .map_err(|e| SalvetError::Parse(format!("{}: {e}", path.display())))?;
    Illuminant::new(gt.illuminant)
}

/// Scan a dataset directory. Sequences that fail validation (missing
/// ground truth, unreadable frames, inconsistent sizes) are excluded
/// from the manifest and reported as issues instead of failing the
/// whole load.
pub fn load_dataset(root: &Path) -> Result<(DatasetManifest, Vec<LoadIssue>)> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| SalvetError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut sequences = Vec::new();
    let mut issues = Vec::new();
    for dir in dirs {
        let id = dir.file_name().unwrap().to_string_lossy().into_owned();
        match validate_sequence_dir(&dir) {
            Ok(frame_count) => sequences.push(SequenceEntry { id, frame_count }),
            Err(e) => issues.push(LoadIssue {
                id,
                message: e.to_string(),
            }),
        }
    }
    Ok((
        DatasetManifest {
            root: root.to_path_buf(),
            sequences,
            folds: BTreeMap::new(),
        },
        issues,
    ))
}

fn validate_sequence_dir(dir: &Path) -> Result<usize> {
    read_ground_truth(dir)?;
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(SalvetError::InvalidArgument("no frame files".into()));
    }
    let mut dims = None;
    for f in &files {
        let (w, h) = image::image_dimensions(f)
            .map_err(|e| SalvetError::Parse(format!("{}: {e}", f.display())))?;
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(SalvetError::InvalidArgument(format!(
                    "{}: frame is {w}x{h}, earlier frames are {}x{}",
                    f.display(),
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
    }
    Ok(files.len())
}

/// Decode one sequence to [3, H, W] tensors with values in [0, 1].
pub fn load_sequence(root: &Path, id: &str) -> Result<FrameSequence> {
    let dir = root.join(id);
    let illuminant = read_ground_truth(&dir)?;
    let files = frame_files(&dir)?;
    if files.is_empty() {
        return Err(SalvetError::InvalidArgument(format!(
            "sequence {id:?} has no frame files"
        )));
    }
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let img = image::open(f)
            .map_err(|e| SalvetError::Parse(format!("{}: {e}", f.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            let (x, y) = (x as usize, y as usize);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px[c] as f64 / 255.0;
            }
        }
        frames.push(Tensor::new(&[3, h, w], data));
    }
    FrameSequence::new(id, frames, illuminant)
}

/// Assign sequences to `k` folds: seeded shuffle, then round-robin,
/// so fold sizes differ by at most one.
pub fn kfold_split(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<DatasetManifest> {
    let n = manifest.sequences.len();
    if k < 2 || k > n {
        return Err(SalvetError::InvalidArgument(format!(
            "fold count must satisfy 2 <= k <= {n}, got {k}"
        )));
    }
    let mut ids: Vec<&str> = manifest.ids().collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let folds = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    Ok(DatasetManifest {
        folds,
        ..manifest.clone()
    })
}
