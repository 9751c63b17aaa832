//! Evaluation metrics: angular error and its summary statistics, plus
//! the mask-divergence family (JSD, BCE, SSIM, soft IoU) used to
//! compare saliency artifacts between runs.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Result, SalvetError};

/// Angle between two RGB vectors in degrees, insensitive to scale.
pub fn angular_error(a: &[f64; 3], b: &[f64; 3]) -> Result<f64> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(SalvetError::InvalidArgument(
            "angular error needs finite vectors".into(),
        ));
    }
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SalvetError::InvalidArgument(
            "angular error undefined for zero vectors".into(),
        ));
    }
    let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// The six-statistic panel over a set of per-item errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
    pub worst5: f64,
    pub n: usize,
}

pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summarize errors: mean, linear-interpolated median, trimean
/// (Q1 + 2*Q2 + Q3)/4, and means of the best 25%, worst 25%, and worst
/// 5% tails (tail size rounded up).
pub fn summarize_errors(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "cannot summarize an empty error set".into(),
        ));
    }
    if errors.iter().any(|v| !v.is_finite()) {
        return Err(SalvetError::InvalidArgument(
            "cannot summarize non-finite errors".into(),
        ));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let q1 = quantile(&sorted, 0.25);
    let q2 = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let k4 = n.div_ceil(4);
    let k20 = n.div_ceil(20);
    Ok(ErrorSummary {
        mean: mean(&sorted),
        median: q2,
        trimean: (q1 + 2.0 * q2 + q3) / 4.0,
        best25: mean(&sorted[..k4]),
        worst25: mean(&sorted[n - k4..]),
        worst5: mean(&sorted[n - k20..]),
        n,
    })
}

impl ErrorSummary {
    /// Bit-exact check against a recomputation from raw errors; used
    /// when importing run records.
    pub fn matches_exactly(&self, errors: &[f64]) -> bool {
        summarize_errors(errors).map(|s| s == *self).unwrap_or(false)
    }
}

/// Jensen-Shannon divergence (natural log) between two nonnegative
/// weight vectors. Inputs are normalized to distributions first; an
/// all-zero vector falls back to uniform. Bounded by ln 2.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(SalvetError::InvalidArgument(format!(
            "jsd needs equal lengths, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(SalvetError::InvalidArgument("jsd of empty vectors".into()));
    }
    let normalize = |v: &[f64]| -> Result<Vec<f64>> {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(SalvetError::InvalidArgument(
                "jsd needs finite nonnegative weights".into(),
            ));
        }
        let s: f64 = v.iter().sum();
        if s <= 0.0 {
            Ok(vec![1.0 / v.len() as f64; v.len()])
        } else {
            Ok(v.iter().map(|x| x / s).collect())
        }
    };
    let pn = normalize(p)?;
    let qn = normalize(q)?;
    let mut acc = 0.0;
    for (pi, qi) in pn.iter().zip(&qn) {
        let m = 0.5 * (pi + qi);
        if *pi > 0.0 {
            acc += 0.5 * pi * (pi / m).ln();
        }
        if *qi > 0.0 {
            acc += 0.5 * qi * (qi / m).ln();
        }
    }
    // guard the tiny negative residue floating point can leave
    Ok(acc.max(0.0))
}

fn check_mask_pair(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(SalvetError::InvalidArgument(format!(
            "{what} compares rank-2 masks, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.shape() != b.shape() {
        return Err(SalvetError::InvalidArgument(format!(
            "{what} needs equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(SalvetError::InvalidArgument(format!("{what} of empty masks")));
    }
    for t in [a, b] {
        if !t.all_finite() || t.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SalvetError::InvalidArgument(format!(
                "{what} needs mask values in [0,1]"
            )));
        }
    }
    Ok(())
}

const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy averaged over pixels, with `pred` clamped away
/// from the log singularities. Asymmetric: `reference` supplies the
/// target weights, `pred` lives in the log domain.
pub fn bce(pred: &Tensor, reference: &Tensor) -> Result<f64> {
    check_mask_pair(pred, reference, "bce")?;
    let mut acc = 0.0;
    for (&p, &r) in pred.iter().zip(reference.iter()) {
        let cp = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        acc -= r * cp.ln() + (1.0 - r) * (1.0 - cp).ln();
    }
    Ok(acc / pred.len() as f64)
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_WINDOW: usize = 11;

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size - 1) as f64 / 2.0;
    let mut w = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            w.push((-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Structural similarity with a Gaussian-weighted sliding window
/// (sigma 1.5, nominal size 11 shrunk to the largest odd size that
/// fits), averaged over fully interior window positions.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_mask_pair(a, b, "ssim")?;
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let mut win = SSIM_WINDOW.min(h).min(w);
    if win % 2 == 0 {
        win -= 1;
    }
    let g = gaussian_window(win);
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - win) {
        for x0 in 0..=(w - win) {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in 0..win {
                for wx in 0..win {
                    let gw = g[wy * win + wx];
                    let va = a.data()[(y0 + wy) * w + (x0 + wx)];
                    let vb = b.data()[(y0 + wy) * w + (x0 + wx)];
                    ma += gw * va;
                    mb += gw * vb;
                    saa += gw * va * va;
                    sbb += gw * vb * vb;
                    sab += gw * va * vb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let s = ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            acc += s;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Soft intersection-over-union: sum of elementwise minima over sum of
/// maxima. Two all-zero masks count as identical (1).
pub fn soft_iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_mask_pair(a, b, "soft_iou")?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        num += x.min(y);
        den += x.max(y);
    }
    if den == 0.0 {
        Ok(1.0)
    } else {
        Ok(num / den)
    }
}

/// Scale convention for spatial divergence totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceMode {
    /// Per-frame terms use pixel-averaged BCE; the total is the mean
    /// over frames.
    #[serde(rename = "BOUNDED")]
    Bounded,
    /// Per-frame terms use pixel-summed BCE; the total is the sum over
    /// frames.
    #[serde(rename = "PAPER_SCALE")]
    PaperScale,
}

/// Per-frame spatial divergence d_f = bce + (1 - ssim) + (1 - iou),
/// aggregated per `mode`. Returns (total, per-frame values).
pub fn spatial_divergence(
    pred: &[Tensor],
    reference: &[Tensor],
    mode: DivergenceMode,
) -> Result<(f64, Vec<f64>)> {
    if pred.len() != reference.len() {
        return Err(SalvetError::InvalidArgument(format!(
            "spatial divergence needs matching frame counts, got {} and {}",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "spatial divergence of empty mask sequences".into(),
        ));
    }
    let mut per_frame = Vec::with_capacity(pred.len());
    for (p, r) in pred.iter().zip(reference) {
        let b = bce(p, r)?;
        let b = match mode {
            DivergenceMode::Bounded => b,
            DivergenceMode::PaperScale => b * p.len() as f64,
        };
        let d = b + (1.0 - ssim(p, r)?) + (1.0 - soft_iou(p, r)?);
        per_frame.push(d);
    }
    let total = match mode {
        DivergenceMode::Bounded => mean(&per_frame),
        DivergenceMode::PaperScale => per_frame.iter().sum(),
    };
    Ok((total, per_frame))
}

/// Temporal divergence between two weight vectors: JSD after
/// normalization.
pub fn temporal_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    jsd(p, q)
}

/// Divergence panel for one item pair. `spatiotemporal` is the sum of
/// the two component divergences and is present only when both are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temporal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatiotemporal: Option<f64>,
    #[serde(rename = "perFrameSpatial", default)]
    pub per_frame_spatial: Vec<f64>,
}

/// Build the divergence panel from whichever artifact pairs exist.
pub fn divergence_report(
    spatial_pair: Option<(&[Tensor], &[Tensor])>,
    temporal_pair: Option<(&[f64], &[f64])>,
    mode: DivergenceMode,
) -> Result<DivergenceReport> {
    if spatial_pair.is_none() && temporal_pair.is_none() {
        return Err(SalvetError::InvalidArgument(
            "divergence report needs at least one artifact pair".into(),
        ));
    }
    let mut report = DivergenceReport {
        temporal: None,
        spatial: None,
        spatiotemporal: None,
        per_frame_spatial: Vec::new(),
    };
    if let Some((p, r)) = spatial_pair {
        let (total, per_frame) = spatial_divergence(p, r, mode)?;
        report.spatial = Some(total);
        report.per_frame_spatial = per_frame;
    }
    if let Some((p, q)) = temporal_pair {
        report.temporal = Some(temporal_divergence(p, q)?);
    }
    if let (Some(s), Some(t)) = (report.spatial, report.temporal) {
        report.spatiotemporal = Some(s + t);
    }
    Ok(report)
}
