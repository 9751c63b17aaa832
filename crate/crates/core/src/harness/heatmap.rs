//! Saliency heatmap rendering: mask upsampled to the frame, mapped
//! through a fixed perceptually-uniform colormap, alpha-blended over
//! the frame, written as PNG.

use std::path::Path;

use crate::autodiff::{resize_bilinear, Tensor};
use crate::error::{Result, SalvetError};
use crate::model::SpatialMask;

/// Ten-anchor dark-violet-to-yellow ramp (the widely mirrored discrete
/// form of the matplotlib default), linearly interpolated between
/// anchors.
const RAMP: [[u8; 3]; 10] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x28, 0x78],
    [0x3e, 0x49, 0x89],
    [0x31, 0x68, 0x8e],
    [0x26, 0x82, 0x8e],
    [0x1f, 0x9e, 0x89],
    [0x35, 0xb7, 0x79],
    [0x6e, 0xce, 0x58],
    [0xb5, 0xde, 0x2b],
    [0xfd, 0xe7, 0x25],
];

/// Map t in [0,1] to the ramp colour, components in [0,1].
pub fn colormap(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let lo = t.floor() as usize;
    let hi = t.ceil() as usize;
    let frac = t - lo as f64;
    let mut out = [0.0; 3];
    for c in 0..3 {
        let a = RAMP[lo][c] as f64 / 255.0;
        let b = RAMP[hi][c] as f64 / 255.0;
        out[c] = a + frac * (b - a);
    }
    out
}

const ALPHA: f64 = 0.5;

/// Blend the colour-mapped mask over the frame and return the blended
/// RGB image as a (3, H, W) tensor in [0,1].
pub fn blend_heatmap(frame: &Tensor, mask: &SpatialMask) -> Result<Tensor> {
    if frame.shape().len() != 3 || frame.shape()[0] != 3 {
        return Err(SalvetError::InvalidArgument(format!(
            "heatmap frame must have shape (3,H,W), got {:?}",
            frame.shape()
        )));
    }
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let up = resize_bilinear(mask.values(), h, w);
    let mut out = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let color = colormap(up.data()[y * w + x]);
            for c in 0..3 {
                let f = frame.at3(c, y, x).clamp(0.0, 1.0);
                out[c * h * w + y * w + x] = (1.0 - ALPHA) * f + ALPHA * color[c];
            }
        }
    }
    Ok(Tensor::new(&[3, h, w], out))
}

/// Render the blended heatmap to a PNG file with the same dimensions
/// as the frame. Identical inputs produce byte-identical files.
pub fn render_heatmap(frame: &Tensor, mask: &SpatialMask, out: &Path) -> Result<()> {
    let blended = blend_heatmap(frame, mask)?;
    let (h, w) = (blended.shape()[1], blended.shape()[2]);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (xi, yi) = (x as usize, y as usize);
        for c in 0..3 {
            px.0[c] = (blended.at3(c, yi, xi) * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| SalvetError::io(parent, e))?;
        }
    }
    img.save(out)
        .map_err(|e| SalvetError::io(out, std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(h: usize, w: usize, v: f64) -> SpatialMask {
        SpatialMask::new(Tensor::full(&[h, w], v)).unwrap()
    }

    #[test]
    fn ramp_endpoints_and_interior() {
        assert_eq!(colormap(0.0), [0x44 as f64 / 255.0, 0x01 as f64 / 255.0, 0x54 as f64 / 255.0]);
        assert_eq!(colormap(1.0), [0xfd as f64 / 255.0, 0xe7 as f64 / 255.0, 0x25 as f64 / 255.0]);
        // low end is cold (blue-dominant over red and green weak)
        let c = colormap(0.0);
        assert!(c[2] > c[1] && c[2] > c[0]);
        // high end is warm
        let c = colormap(1.0);
        assert!(c[0] > c[2] && c[1] > c[2]);
        // monotone green channel through the mid ramp
        let g: Vec<f64> = (0..=10).map(|i| colormap(i as f64 / 10.0)[1]).collect();
        assert!(g.windows(2).all(|p| p[1] >= p[0]), "{g:?}");
    }

    #[test]
    fn output_matches_frame_dimensions_and_constant_mask_is_uniform() {
        let dir = std::env::temp_dir().join(format!("salvet-heat-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let frame = Tensor::full(&[3, 24, 17], 0.5);
        let out = dir.join("zero.png");
        render_heatmap(&frame, &mask(3, 3, 0.0), &out).unwrap();
        let img = image::open(&out).unwrap().to_rgb8();
        assert_eq!((img.width(), img.height()), (17, 24));
        let first = *img.get_pixel(0, 0);
        assert!(img.pixels().all(|p| *p == first));
        // cold overlay: blue channel above red
        assert!(first.0[2] > first.0[0]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rendering_is_byte_identical() {
        let dir = std::env::temp_dir().join(format!("salvet-heat2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let vals: Vec<f64> = (0..3 * 20 * 20).map(|i| (i % 97) as f64 / 96.0).collect();
        let frame = Tensor::new(&[3, 20, 20], vals);
        let mvals: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
        let m = SpatialMask::new(Tensor::new(&[5, 5], mvals)).unwrap();
        let (a, b) = (dir.join("a.png"), dir.join("b.png"));
        render_heatmap(&frame, &m, &a).unwrap();
        render_heatmap(&frame, &m, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_frame_shape_is_rejected() {
        let frame = Tensor::full(&[1, 4, 4], 0.5);
        assert!(blend_heatmap(&frame, &mask(2, 2, 0.3)).is_err());
    }
}
