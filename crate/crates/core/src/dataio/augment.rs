//! Training-time augmentation: one random rotation, square crop, and
//! horizontal-flip decision drawn per sequence and applied to every
//! frame, keeping the frames mutually aligned. The ground truth is
//! untouched since these transforms do not change the scene's light.

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Result, SalvetError};

use super::FrameSequence;

/// The per-sequence random draw, split out from the transform so the
/// sampling distribution and the geometry can be tested separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    /// degrees, uniform in [-30, 30]
    pub angle_deg: f64,
    /// crop side as a proportion of the shorter frame side, uniform in [0.8, 1.0]
    pub crop_prop: f64,
    /// horizontal placement of the crop window, uniform in [0, 1]
    pub crop_x: f64,
    /// vertical placement of the crop window, uniform in [0, 1]
    pub crop_y: f64,
    pub flip: bool,
}

/// Draw order is pinned: angle, crop proportion, crop x, crop y, flip.
pub fn draw_augmentation(rng: &mut impl Rng) -> AugmentDraw {
    AugmentDraw {
        angle_deg: rng.random_range(-30.0..=30.0),
        crop_prop: rng.random_range(0.8..=1.0),
        crop_x: rng.random_range(0.0..=1.0),
        crop_y: rng.random_range(0.0..=1.0),
        flip: rng.random::<f64>() < 0.5,
    }
}

pub fn augment(seq: &FrameSequence, rng: &mut impl Rng) -> Result<FrameSequence> {
    apply_augmentation(seq, &draw_augmentation(rng))
}

/// Reflect an index into [0, n): symmetric, edge-inclusive, so -1
/// maps to 0 and n maps to n-1.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

fn rotate_frame(f: &Tensor, angle_deg: f64) -> Tensor {
    let (h, w) = (f.shape()[1], f.shape()[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let rad = angle_deg.to_radians();
    let (sin, cos) = rad.sin_cos();
    let src = f.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = cx + dx * cos + dy * sin;
            let sy = cy - dx * sin + dy * cos;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let xs = [reflect(x0 as i64, w), reflect(x0 as i64 + 1, w)];
            let ys = [reflect(y0 as i64, h), reflect(y0 as i64 + 1, h)];
            let wts = [
                (1.0 - fy) * (1.0 - fx),
                (1.0 - fy) * fx,
                fy * (1.0 - fx),
                fy * fx,
            ];
            for c in 0..3 {
                let plane = c * h * w;
                let v = wts[0] * src[plane + ys[0] * w + xs[0]]
                    + wts[1] * src[plane + ys[0] * w + xs[1]]
                    + wts[2] * src[plane + ys[1] * w + xs[0]]
                    + wts[3] * src[plane + ys[1] * w + xs[1]];
                // weights sum to 1 only up to rounding; keep saturated
                // pixels inside the sequence's [0, 1] contract
                out[plane + y * w + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(f.shape(), out)
}

fn crop_frame(f: &Tensor, y0: usize, x0: usize, side: usize) -> Tensor {
    let (h, w) = (f.shape()[1], f.shape()[2]);
    let src = f.data();
    let mut out = vec![0.0; 3 * side * side];
    for c in 0..3 {
        for y in 0..side {
            for x in 0..side {
                out[(c * side + y) * side + x] = src[(c * h + y0 + y) * w + x0 + x];
            }
        }
    }
    Tensor::new(&[3, side, side], out)
}

fn flip_frame(f: &Tensor) -> Tensor {
    let (h, w) = (f.shape()[1], f.shape()[2]);
    let src = f.data();
    let mut out = vec![0.0; src.len()];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out[(c * h + y) * w + x] = src[(c * h + y) * w + (w - 1 - x)];
            }
        }
    }
    Tensor::new(f.shape(), out)
}

/// Apply one draw to every frame: rotate about the centre (bilinear,
/// reflected edges; an exact no-op at angle 0), take the square crop,
/// then flip if drawn.
pub fn apply_augmentation(seq: &FrameSequence, draw: &AugmentDraw) -> Result<FrameSequence> {
    let (h, w) = (seq.height(), seq.width());
    let side = (draw.crop_prop * h.min(w) as f64).round() as usize;
    if side < 1 {
        return Err(SalvetError::InvalidArgument(format!(
            "crop proportion {} of {h}x{w} frames leaves no pixels",
            draw.crop_prop
        )));
    }
    if side > h.min(w) {
        return Err(SalvetError::InvalidArgument(format!(
            "crop side {side} exceeds frame dims {h}x{w}"
        )));
    }
    let y0 = (draw.crop_y * (h - side) as f64).round() as usize;
    let x0 = (draw.crop_x * (w - side) as f64).round() as usize;

    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let rotated = if draw.angle_deg == 0.0 {
                f.clone()
            } else {
                rotate_frame(f, draw.angle_deg)
            };
            let cropped = crop_frame(&rotated, y0, x0, side);
            if draw.flip {
                flip_frame(&cropped)
            } else {
                cropped
            }
        })
        .collect();
    FrameSequence::new(seq.id.clone(), frames, seq.illuminant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Illuminant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(id: &str, t: usize, h: usize, w: usize, seed: u64) -> FrameSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..t)
            .map(|_| {
                let data = (0..3 * h * w).map(|_| rng.random::<f64>()).collect();
                Tensor::new(&[3, h, w], data)
            })
            .collect();
        FrameSequence::new(id, frames, Illuminant::new([1.0, 2.0, 3.0]).unwrap()).unwrap()
    }

    const IDENTITY: AugmentDraw = AugmentDraw {
        angle_deg: 0.0,
        crop_prop: 1.0,
        crop_x: 0.0,
        crop_y: 0.0,
        flip: false,
    };

    #[test]
    fn identity_draw_is_pixel_exact_on_square_frames() {
        let seq = random_seq("sq", 3, 8, 8, 1);
        let out = apply_augmentation(&seq, &IDENTITY).unwrap();
        for (a, b) in out.frames.iter().zip(&seq.frames) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(out.illuminant, seq.illuminant);
    }

    #[test]
    fn flip_reverses_columns() {
        let seq = random_seq("f", 1, 4, 4, 2);
        let draw = AugmentDraw { flip: true, ..IDENTITY };
        let out = apply_augmentation(&seq, &draw).unwrap();
        let (src, dst) = (seq.frames[0].data(), out.frames[0].data());
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(dst[(c * 4 + y) * 4 + x], src[(c * 4 + y) * 4 + (3 - x)]);
                }
            }
        }
    }

    #[test]
    fn crop_takes_the_requested_window() {
        let seq = random_seq("c", 1, 6, 9, 3);
        let draw = AugmentDraw {
            crop_prop: 0.5,
            crop_x: 1.0,
            crop_y: 0.0,
            ..IDENTITY
        };
        let out = apply_augmentation(&seq, &draw).unwrap();
        // side = round(0.5 * 6) = 3, x0 = 9 - 3 = 6, y0 = 0
        assert_eq!(out.frames[0].shape(), &[3, 3, 3]);
        let (src, dst) = (seq.frames[0].data(), out.frames[0].data());
        assert_eq!(dst[0], src[6]);
        assert_eq!(dst[3], src[9 + 6]);
    }

    #[test]
    fn rotation_stays_in_value_range_and_preserves_constants() {
        let seq = random_seq("r", 2, 7, 11, 4);
        let draw = AugmentDraw { angle_deg: 17.3, ..IDENTITY };
        let out = apply_augmentation(&seq, &draw).unwrap();
        for f in &out.frames {
            assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        let flat = FrameSequence::new(
            "flat",
            vec![Tensor::new(&[3, 5, 5], vec![0.25; 75])],
            Illuminant::new([1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let out = apply_augmentation(&flat, &draw).unwrap();
        for v in out.frames[0].data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_gives_identical_output() {
        let seq = random_seq("d", 3, 9, 7, 5);
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let a = augment(&seq, &mut r1).unwrap();
        let b = augment(&seq, &mut r2).unwrap();
        assert_eq!(a.frames.len(), b.frames.len());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.data(), fb.data());
        }
        let mut r3 = ChaCha8Rng::seed_from_u64(100);
        let c = augment(&seq, &mut r3).unwrap();
        assert_ne!(a.frames[0].data(), c.frames[0].data());
    }

    #[test]
    fn draws_follow_declared_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut flips = 0usize;
        for _ in 0..n {
            let d = draw_augmentation(&mut rng);
            assert!((-30.0..=30.0).contains(&d.angle_deg));
            assert!((0.8..=1.0).contains(&d.crop_prop));
            assert!((0.0..=1.0).contains(&d.crop_x));
            assert!((0.0..=1.0).contains(&d.crop_y));
            flips += d.flip as usize;
        }
        let freq = flips as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "flip frequency {freq}");
    }

    #[test]
    fn degenerate_crop_is_rejected() {
        let seq = random_seq("z", 1, 4, 4, 6);
        let draw = AugmentDraw { crop_prop: 0.0, ..IDENTITY };
        assert!(matches!(
            apply_augmentation(&seq, &draw),
            Err(SalvetError::InvalidArgument(_))
        ));
    }
}
