//! Synthetic planted-evidence datasets. Every sequence is achromatic
//! content multiplied by a known illuminant cast, so the cast is
//! recoverable by construction; the evidence mode controls *where* it
//! is recoverable from, and that location is persisted so faithfulness
//! probes know where a model should be looking.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Result, SalvetError};
use crate::metrics::angular_error;

use super::{DatasetManifest, FrameSequence, GroundTruthFile, Illuminant, SequenceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceMode {
    /// The cast covers every pixel of every frame.
    #[serde(rename = "GLOBAL")]
    Global,
    /// Only a square patch (same position in all frames) is achromatic
    /// under the cast; the rest of the image carries a colour bias.
    #[serde(rename = "SPATIAL_PATCH")]
    SpatialPatch,
    /// Only one designated frame is achromatic under the cast.
    #[serde(rename = "KEY_FRAME")]
    KeyFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SynthConfig {
    pub num_sequences: usize,
    /// frames per sequence
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub evidence_mode: EvidenceMode,
}

/// Where the planted cast can be recovered from, persisted per
/// sequence as `evidence.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum Evidence {
    #[serde(rename = "GLOBAL")]
    Global,
    #[serde(rename = "SPATIAL_PATCH")]
    SpatialPatch { x: usize, y: usize, side: usize },
    #[serde(rename = "KEY_FRAME")]
    KeyFrame { frame: usize },
}

fn validate(cfg: &SynthConfig) -> Result<usize> {
    if cfg.num_sequences == 0 || cfg.t == 0 || cfg.h == 0 || cfg.w == 0 {
        return Err(SalvetError::InvalidArgument(format!(
            "synthetic config needs positive counts and dims, got {cfg:?}"
        )));
    }
    let side = (cfg.h.min(cfg.w) / 4).max(4);
    if cfg.evidence_mode == EvidenceMode::SpatialPatch && side > cfg.h.min(cfg.w) {
        return Err(SalvetError::InvalidArgument(format!(
            "evidence patch side {side} does not fit {}x{} frames",
            cfg.h, cfg.w
        )));
    }
    Ok(side)
}

/// A colour bias that, multiplied into the cast, lands more than 15
/// degrees away from the true illuminant; applied to regions that must
/// not leak the cast.
fn draw_bias(rng: &mut ChaCha8Rng, cast: &[f64; 3]) -> Result<[f64; 3]> {
    for _ in 0..10_000 {
        let b = [
            rng.random_range(0.25..=1.0),
            rng.random_range(0.25..=1.0),
            rng.random_range(0.25..=1.0),
        ];
        let tinted = [cast[0] * b[0], cast[1] * b[1], cast[2] * b[2]];
        if angular_error(&tinted, cast)? > 15.0 {
            return Ok(b);
        }
    }
    Err(SalvetError::Numeric(
        "could not draw a sufficiently off-cast colour bias".into(),
    ))
}

pub fn generate_sequences(cfg: &SynthConfig, seed: u64) -> Result<Vec<(FrameSequence, Evidence)>> {
    let side = validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, h, w) = (cfg.t, cfg.h, cfg.w);
    let mut out = Vec::with_capacity(cfg.num_sequences);
    for i in 0..cfg.num_sequences {
        let raw: [f64; 3] = [
            rng.random_range(0.3..=1.0),
            rng.random_range(0.3..=1.0),
            rng.random_range(0.3..=1.0),
        ];
        let max = raw[0].max(raw[1]).max(raw[2]);
        let cast = [raw[0] / max, raw[1] / max, raw[2] / max];

        let evidence = match cfg.evidence_mode {
            EvidenceMode::Global => Evidence::Global,
            EvidenceMode::SpatialPatch => Evidence::SpatialPatch {
                x: rng.random_range(0..=w - side),
                y: rng.random_range(0..=h - side),
                side,
            },
            EvidenceMode::KeyFrame => Evidence::KeyFrame {
                frame: rng.random_range(0..t),
            },
        };
        let bias = match evidence {
            Evidence::Global => [1.0; 3],
            _ => draw_bias(&mut rng, &cast)?,
        };

        let carries_cast = |frame: usize, y: usize, x: usize| match evidence {
            Evidence::Global => true,
            Evidence::SpatialPatch { x: px, y: py, side } => {
                x >= px && x < px + side && y >= py && y < py + side
            }
            Evidence::KeyFrame { frame: kf } => frame == kf,
        };

        let mut frames = Vec::with_capacity(t);
        for ft in 0..t {
            let mut data = vec![0.0; 3 * h * w];
            for y in 0..h {
                for x in 0..w {
                    let base: f64 = rng.random_range(0.2..=0.95);
                    let tint = if carries_cast(ft, y, x) { [1.0; 3] } else { bias };
                    for c in 0..3 {
                        data[(c * h + y) * w + x] = base * cast[c] * tint[c];
                    }
                }
            }
            frames.push(Tensor::new(&[3, h, w], data));
        }
        let seq = FrameSequence::new(format!("seq{i:04}"), frames, Illuminant::new(cast)?)?;
        out.push((seq, evidence));
    }
    Ok(out)
}

/// Generate and persist a dataset: PNG frames, per-sequence ground
/// truth and evidence records, and a manifest at `dataset.json`.
pub fn generate_dataset(
    cfg: &SynthConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<(DatasetManifest, Vec<Evidence>)> {
    let sequences = generate_sequences(cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| SalvetError::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(sequences.len());
    let mut evidences = Vec::with_capacity(sequences.len());
    for (seq, evidence) in &sequences {
        let dir = out_dir.join(&seq.id);
        fs::create_dir_all(&dir).map_err(|e| SalvetError::io(&dir, e))?;
        for (t, frame) in seq.frames.iter().enumerate() {
            let (h, w) = (frame.shape()[1], frame.shape()[2]);
            let src = frame.data();
            let mut img = image::RgbImage::new(w as u32, h as u32);
            for (x, y, px) in img.enumerate_pixels_mut() {
                let (x, y) = (x as usize, y as usize);
                for c in 0..3 {
                    px[c] = (src[(c * h + y) * w + x] * 255.0).round() as u8;
                }
            }
            let path = dir.join(format!("{t:04}.png"));
            img.save(&path)
                .map_err(|e| SalvetError::Parse(format!("{}: png encode: {e}", path.display())))?;
        }
        write_json(
            &dir.join("ground_truth.json"),
            &GroundTruthFile {
                illuminant: seq.illuminant.rgb(),
            },
        )?;
        write_json(&dir.join("evidence.json"), evidence)?;
        entries.push(SequenceEntry {
            id: seq.id.clone(),
            frame_count: seq.frames.len(),
        });
        evidences.push(*evidence);
    }

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        sequences: entries,
        folds: Default::default(),
    };
    manifest.save(&out_dir.join("dataset.json"))?;
    Ok((manifest, evidences))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| SalvetError::Parse(format!("json encoding failed: {e}")))?;
    bytes.push(b'\n');
    fs::write(path, &bytes).map_err(|e| SalvetError::io(path, e))
}

/// Load the evidence record persisted next to a sequence's frames.
pub fn load_evidence(root: &Path, id: &str) -> Result<Evidence> {
    let path = root.join(id).join("evidence.json");
    let bytes = fs::read(&path).map_err(|e| SalvetError::io(&path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| SalvetError::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::load_sequence;
    use std::path::PathBuf;

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("salvet-synth-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn gray_world(frame: &Tensor, keep: impl Fn(usize, usize) -> bool) -> [f64; 3] {
        let (h, w) = (frame.shape()[1], frame.shape()[2]);
        let d = frame.data();
        let mut sums = [0.0; 3];
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                if keep(y, x) {
                    n += 1;
                    for c in 0..3 {
                        sums[c] += d[(c * h + y) * w + x];
                    }
                }
            }
        }
        assert!(n > 0);
        [sums[0], sums[1], sums[2]]
    }

    fn cfg(mode: EvidenceMode) -> SynthConfig {
        SynthConfig {
            num_sequences: 4,
            t: 3,
            h: 32,
            w: 32,
            evidence_mode: mode,
        }
    }

    #[test]
    fn global_mode_gray_world_recovers_the_cast() {
        let dir = tmp_dir("global");
        let (manifest, evidences) = generate_dataset(&cfg(EvidenceMode::Global), 11, &dir).unwrap();
        assert_eq!(manifest.sequences.len(), 4);
        assert!(evidences.iter().all(|e| *e == Evidence::Global));
        for entry in &manifest.sequences {
            let seq = load_sequence(&manifest.root, &entry.id).unwrap();
            let est = gray_world(seq.frames.last().unwrap(), |_, _| true);
            let err = angular_error(&est, &seq.illuminant.rgb()).unwrap();
            assert!(err < 2.0, "{}: gray-world off by {err}", entry.id);
        }
    }

    #[test]
    fn spatial_patch_mode_localizes_the_evidence() {
        let dir = tmp_dir("patch");
        let (manifest, evidences) =
            generate_dataset(&cfg(EvidenceMode::SpatialPatch), 12, &dir).unwrap();
        for (entry, ev) in manifest.sequences.iter().zip(&evidences) {
            let &Evidence::SpatialPatch { x, y, side } = ev else {
                panic!("wrong evidence kind")
            };
            assert_eq!(side, 8);
            assert!(x + side <= 32 && y + side <= 32);
            assert_eq!(super::load_evidence(&manifest.root, &entry.id).unwrap(), *ev);

            let seq = load_sequence(&manifest.root, &entry.id).unwrap();
            let last = seq.frames.last().unwrap();
            let inside = |py: usize, px: usize| px >= x && px < x + side && py >= y && py < y + side;
            let on_patch = gray_world(last, inside);
            let off_patch = gray_world(last, |py, px| !inside(py, px));
            let truth = seq.illuminant.rgb();
            let err_in = angular_error(&on_patch, &truth).unwrap();
            let err_out = angular_error(&off_patch, &truth).unwrap();
            assert!(err_in < 1.0, "{}: patch estimate off by {err_in}", entry.id);
            assert!(err_out > 10.0, "{}: complement leaks ({err_out})", entry.id);
        }
    }

    #[test]
    fn key_frame_mode_localizes_the_evidence() {
        let dir = tmp_dir("keyframe");
        let (manifest, evidences) =
            generate_dataset(&cfg(EvidenceMode::KeyFrame), 13, &dir).unwrap();
        for (entry, ev) in manifest.sequences.iter().zip(&evidences) {
            let &Evidence::KeyFrame { frame } = ev else {
                panic!("wrong evidence kind")
            };
            assert!(frame < 3);
            let seq = load_sequence(&manifest.root, &entry.id).unwrap();
            let truth = seq.illuminant.rgb();
            for (t, f) in seq.frames.iter().enumerate() {
                let est = gray_world(f, |_, _| true);
                let err = angular_error(&est, &truth).unwrap();
                if t == frame {
                    assert!(err < 2.0, "{} frame {t}: {err}", entry.id);
                } else {
                    assert!(err > 10.0, "{} frame {t} leaks ({err})", entry.id);
                }
            }
        }
    }

    #[test]
    fn generation_is_byte_identical_per_seed() {
        let (d1, d2, d3) = (tmp_dir("det1"), tmp_dir("det2"), tmp_dir("det3"));
        generate_dataset(&cfg(EvidenceMode::SpatialPatch), 21, &d1).unwrap();
        generate_dataset(&cfg(EvidenceMode::SpatialPatch), 21, &d2).unwrap();
        generate_dataset(&cfg(EvidenceMode::SpatialPatch), 22, &d3).unwrap();

        let collect = |root: &Path| {
            let mut files = Vec::new();
            for entry in walk(root) {
                files.push((
                    entry.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&entry).unwrap(),
                ));
            }
            files.sort();
            files
        };
        let (f1, f2, f3) = (collect(&d1), collect(&d2), collect(&d3));
        assert!(!f1.is_empty());
        assert_eq!(f1, f2);
        assert_ne!(f1, f3);
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn ground_truths_are_unit_normalized_and_positive() {
        let seqs = generate_sequences(&cfg(EvidenceMode::Global), 31).unwrap();
        for (seq, _) in &seqs {
            let rgb = seq.illuminant.rgb();
            let norm: f64 = rgb.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(rgb.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg(EvidenceMode::SpatialPatch);
        c.h = 3;
        c.w = 3;
        assert!(matches!(
            generate_sequences(&c, 1),
            Err(SalvetError::InvalidArgument(_))
        ));
        let mut c = cfg(EvidenceMode::Global);
        c.num_sequences = 0;
        assert!(generate_sequences(&c, 1).is_err());
        let mut c = cfg(EvidenceMode::Global);
        c.t = 0;
        assert!(generate_sequences(&c, 1).is_err());
    }

    #[test]
    fn evidence_serialization_is_tagged() {
        let e = Evidence::SpatialPatch { x: 3, y: 5, side: 8 };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"mode\":\"SPATIAL_PATCH\""));
        assert_eq!(serde_json::from_str::<Evidence>(&json).unwrap(), e);
        let g: Evidence = serde_json::from_str("{\"mode\":\"GLOBAL\"}").unwrap();
        assert_eq!(g, Evidence::Global);
    }
}
