//! Mechanized faithfulness verdicts. Test 1 asks whether learned
//! saliency beats frozen uniform saliency on the same architecture;
//! test 2 asks whether saliency transplanted from a contextual model
//! improves a non-contextual host beyond both the host's own saliency
//! and a uniform-weight contextual baseline, using mask divergence to
//! separate "weights ignored" from "needs further analysis" when the
//! accuracy comparison is flat.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SalvetError};
use crate::metrics::{quantile, DivergenceReport};
use crate::model::ConfigLabel;
use crate::stats::{
    anova, benjamini_hochberg, cohens_d, cohens_d_summary, t_from_summary, tukey_hsd, welch_t,
    AnovaFactor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestKind {
    WP1,
    WP2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// One labeled significance test inside a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub label: String,
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjusted_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub effect_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerdictRecord {
    pub config: ConfigLabel,
    pub test: TestKind,
    pub outcome: Outcome,
    pub comparisons: Vec<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub divergence: Option<DivergenceReport>,
    pub rationale: String,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(SalvetError::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sorted copy, so every permutation of the per-fold errors yields
/// bitwise identical statistics.
fn canonical(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Per-fold mean angular errors for one configuration under learned
/// and frozen-uniform saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct Wp1Input {
    pub config: ConfigLabel,
    pub learned: Vec<f64>,
    pub uniform: Vec<f64>,
}

/// (mean, sd, n) of per-fold errors, for replaying published summary
/// rows without the raw folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Wp1SummaryInput {
    pub config: ConfigLabel,
    pub learned: SummaryStat,
    pub uniform: SummaryStat,
}

/// Offsets with exact zero mean and exact unit sample deviation, so a
/// reconstructed 4-point sample reproduces (mean, sd) identically.
const FOUR_POINT_OFFSETS: [f64; 4] = [
    -1.1180339887498949,
    -0.5,
    0.5,
    1.1180339887498949,
];

/// Reconstruct a canonical 4-point sample realizing a summary row.
pub fn four_point_sample(stat: &SummaryStat) -> Result<Vec<f64>> {
    if stat.n != 4 {
        return Err(SalvetError::InvalidArgument(format!(
            "canonical reconstruction is defined for n = 4, got n = {}",
            stat.n
        )));
    }
    if !stat.mean.is_finite() || !stat.sd.is_finite() || stat.sd < 0.0 {
        return Err(SalvetError::InvalidArgument(format!(
            "bad summary statistics: mean {}, sd {}",
            stat.mean, stat.sd
        )));
    }
    Ok(FOUR_POINT_OFFSETS
        .iter()
        .map(|o| stat.mean + stat.sd * o)
        .collect())
}

/// Welch comparison of two summarized samples, packaged as a labeled
/// comparison row (no family adjustment, no effect size).
pub fn summary_comparison(label: &str, a: &SummaryStat, b: &SummaryStat) -> Result<Comparison> {
    let t = t_from_summary(a.mean, a.sd, a.n, b.mean, b.sd, b.n)?;
    Ok(Comparison {
        label: label.into(),
        statistic: t.statistic,
        df: t.df,
        p: t.p,
        adjusted_p: None,
        effect_size: None,
    })
}

struct Wp1Stats {
    config: ConfigLabel,
    learned_mean: f64,
    uniform_mean: f64,
    statistic: f64,
    df: f64,
    p: f64,
    effect: f64,
}

fn wp1_records(stats: Vec<Wp1Stats>, alpha: f64) -> Result<Vec<VerdictRecord>> {
    let ps: Vec<f64> = stats.iter().map(|s| s.p).collect();
    let bh = benjamini_hochberg(&ps, alpha)?;
    Ok(stats
        .into_iter()
        .zip(bh)
        .map(|(s, adj)| {
            let direction_ok = s.uniform_mean > s.learned_mean;
            let significant = adj.adjusted_p < alpha;
            let outcome = if direction_ok && significant {
                Outcome::Pass
            } else {
                Outcome::Fail
            };
            let rationale = match (direction_ok, significant) {
                (true, true) => format!(
                    "uniform saliency degrades the error ({:.3} vs {:.3}) and the gap is \
                     significant (adjusted p = {:.4} < {alpha})",
                    s.uniform_mean, s.learned_mean, adj.adjusted_p
                ),
                (true, false) => format!(
                    "uniform saliency looks worse ({:.3} vs {:.3}) but not significantly \
                     (adjusted p = {:.4} >= {alpha})",
                    s.uniform_mean, s.learned_mean, adj.adjusted_p
                ),
                (false, _) => format!(
                    "uniform saliency does not degrade the error ({:.3} vs {:.3}), so the \
                     learned weights show no accuracy contribution",
                    s.uniform_mean, s.learned_mean
                ),
            };
            VerdictRecord {
                config: s.config,
                test: TestKind::WP1,
                outcome,
                comparisons: vec![Comparison {
                    label: "learned vs uniform".into(),
                    statistic: s.statistic,
                    df: s.df,
                    p: s.p,
                    adjusted_p: Some(adj.adjusted_p),
                    effect_size: Some(s.effect),
                }],
                divergence: None,
                rationale,
            }
        })
        .collect())
}

/// Judge a family of configurations at once; the multiple-comparison
/// adjustment spans exactly the given family.
pub fn wp1_verdicts(inputs: &[Wp1Input], alpha: f64) -> Result<Vec<VerdictRecord>> {
    check_alpha(alpha)?;
    if inputs.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "wp1 needs at least one configuration".into(),
        ));
    }
    let mut stats = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let learned = canonical(&inp.learned);
        let uniform = canonical(&inp.uniform);
        let t = welch_t(&learned, &uniform)?;
        let d = cohens_d(&learned, &uniform)?;
        stats.push(Wp1Stats {
            config: inp.config,
            learned_mean: mean(&learned),
            uniform_mean: mean(&uniform),
            statistic: t.statistic,
            df: t.df,
            p: t.p,
            effect: d,
        });
    }
    wp1_records(stats, alpha)
}

/// Single-configuration convenience wrapper (family of one).
pub fn wp1_verdict(
    config: ConfigLabel,
    learned: &[f64],
    uniform: &[f64],
    alpha: f64,
) -> Result<VerdictRecord> {
    let mut v = wp1_verdicts(
        &[Wp1Input {
            config,
            learned: learned.to_vec(),
            uniform: uniform.to_vec(),
        }],
        alpha,
    )?;
    Ok(v.pop().unwrap())
}

/// Summary-statistic replay of a family of configurations.
pub fn wp1_verdicts_from_summaries(
    inputs: &[Wp1SummaryInput],
    alpha: f64,
) -> Result<Vec<VerdictRecord>> {
    check_alpha(alpha)?;
    if inputs.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "wp1 needs at least one configuration".into(),
        ));
    }
    let mut stats = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let (l, u) = (inp.learned, inp.uniform);
        let t = t_from_summary(l.mean, l.sd, l.n, u.mean, u.sd, u.n)?;
        let d = cohens_d_summary(l.mean, l.sd, u.mean, u.sd)?;
        stats.push(Wp1Stats {
            config: inp.config,
            learned_mean: l.mean,
            uniform_mean: u.mean,
            statistic: t.statistic,
            df: t.df,
            p: t.p,
            effect: d,
        });
    }
    wp1_records(stats, alpha)
}

/// Per-fold mean angular errors of the three models test 2 compares.
#[derive(Debug, Clone, PartialEq)]
pub struct Wp2Samples {
    /// non-contextual host using its own learned saliency
    pub host_own: Vec<f64>,
    /// non-contextual host driven by transplanted contextual saliency
    pub transplanted: Vec<f64>,
    /// contextual model running on frozen uniform saliency
    pub uniform_contextual: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DivergenceThresholds {
    pub temporal: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spatial: Option<f64>,
}

impl Default for DivergenceThresholds {
    fn default() -> Self {
        DivergenceThresholds {
            temporal: 0.7,
            spatial: None,
        }
    }
}

/// Which divergence dimensions exceed their thresholds; errors when a
/// needed value or threshold is missing.
fn divergence_high(
    config: ConfigLabel,
    div: &DivergenceReport,
    thresholds: &DivergenceThresholds,
) -> Result<(bool, String)> {
    let dims = config.saliency_dims;
    let mut all_above = true;
    let mut notes = Vec::new();
    if dims.has_temporal() {
        let v = div.temporal.ok_or_else(|| {
            SalvetError::InvalidArgument(format!(
                "config {config} needs a temporal divergence value"
            ))
        })?;
        let above = v > thresholds.temporal;
        all_above &= above;
        notes.push(format!(
            "temporal divergence {v:.3} {} threshold {:.3}",
            if above { "above" } else { "below" },
            thresholds.temporal
        ));
    }
    if dims.has_spatial() {
        let thr = thresholds.spatial.ok_or_else(|| {
            SalvetError::Config(
                "spatial divergence threshold is required; set one or calibrate it".into(),
            )
        })?;
        let v = div.spatial.ok_or_else(|| {
            SalvetError::InvalidArgument(format!(
                "config {config} needs a spatial divergence value"
            ))
        })?;
        let above = v > thr;
        all_above &= above;
        notes.push(format!(
            "spatial divergence {v:.3} {} threshold {thr:.3}",
            if above { "above" } else { "below" }
        ));
    }
    if notes.is_empty() {
        return Err(SalvetError::InvalidArgument(format!(
            "config {config} has no saliency dimension to screen"
        )));
    }
    Ok((all_above, notes.join(", ")))
}

/// Decision procedure for test 2 on one configuration.
///
/// Step 1 asks whether the transplanted saliency significantly
/// improves on the host's own. If it does not, the mask divergence
/// decides between FAIL (masks differ strongly on every saliency
/// dimension, so the host evidently ignores them) and INCONCLUSIVE
/// (masks barely differ, so nothing can be concluded). If it does,
/// step 2 requires the transplanted host to also beat the
/// uniform-weight contextual baseline.
pub fn wp2_verdict(
    config: ConfigLabel,
    samples: &Wp2Samples,
    divergence: Option<&DivergenceReport>,
    thresholds: &DivergenceThresholds,
    alpha: f64,
) -> Result<VerdictRecord> {
    check_alpha(alpha)?;
    let groups = [
        canonical(&samples.host_own),
        canonical(&samples.transplanted),
        canonical(&samples.uniform_contextual),
    ];
    let pairs = tukey_hsd(&groups)?;
    let pair = |i: usize, j: usize| pairs.iter().find(|p| p.i == i && p.j == j).unwrap();
    let nu = (groups.iter().map(|g| g.len()).sum::<usize>() - 3) as f64;

    let mut comparisons = Vec::new();
    if groups[0].len() == groups[1].len() && groups[1].len() == groups[2].len() {
        let mut obs = Vec::new();
        for (level, g) in groups.iter().enumerate() {
            obs.extend(g.iter().map(|&v| (vec![level], v)));
        }
        let table = anova(
            &[AnovaFactor {
                name: "weightSource".into(),
                levels: 3,
            }],
            &obs,
        )?;
        let eff = &table.effects[0];
        comparisons.push(Comparison {
            label: "anova across weight sources".into(),
            statistic: eff.f,
            df: table.residual_df as f64,
            p: eff.p,
            adjusted_p: None,
            effect_size: None,
        });
    }

    let means = [mean(&groups[0]), mean(&groups[1]), mean(&groups[2])];
    let p_own = pair(0, 1);
    let p_unif = pair(1, 2);
    let sig_i = means[1] < means[0] && p_own.p < alpha;
    let sig_ii = means[1] < means[2] && p_unif.p < alpha;
    comparisons.push(Comparison {
        label: "(i) transplanted vs host's own saliency".into(),
        statistic: p_own.q,
        df: nu,
        p: p_own.p,
        adjusted_p: Some(p_own.p),
        effect_size: Some(cohens_d(&groups[1], &groups[0]).unwrap_or(0.0)),
    });
    comparisons.push(Comparison {
        label: "(ii) transplanted vs uniform contextual".into(),
        statistic: p_unif.q,
        df: nu,
        p: p_unif.p,
        adjusted_p: Some(p_unif.p),
        effect_size: Some(cohens_d(&groups[1], &groups[2]).unwrap_or(0.0)),
    });

    let (outcome, rationale) = if sig_i {
        if sig_ii {
            (
                Outcome::Pass,
                format!(
                    "transplanted saliency beats the host's own weights (p = {:.4}) and the \
                     uniform contextual baseline (p = {:.4})",
                    p_own.p, p_unif.p
                ),
            )
        } else {
            (
                Outcome::Fail,
                format!(
                    "transplanted saliency beats the host's own weights (p = {:.4}) but not \
                     the uniform contextual baseline (p = {:.4})",
                    p_own.p, p_unif.p
                ),
            )
        }
    } else {
        let div = divergence.ok_or_else(|| {
            SalvetError::InvalidArgument(format!(
                "config {config}: mask divergence is required when the transplant shows no \
                 significant accuracy gain"
            ))
        })?;
        let (all_above, notes) = divergence_high(config, div, thresholds)?;
        if all_above {
            (
                Outcome::Fail,
                format!(
                    "no significant gain from transplanted saliency (p = {:.4}) although the \
                     masks differ strongly ({notes}); the host's output does not depend on \
                     those weights",
                    p_own.p
                ),
            )
        } else {
            (
                Outcome::Inconclusive,
                format!(
                    "no significant gain from transplanted saliency (p = {:.4}) and the masks \
                     are too similar to separate the explanations ({notes})",
                    p_own.p
                ),
            )
        }
    };

    Ok(VerdictRecord {
        config,
        test: TestKind::WP2,
        outcome,
        comparisons,
        divergence: divergence.cloned(),
        rationale,
    })
}

/// 10th percentile of the per-item divergences observed between two
/// independently seeded retrainings: differences below it are within
/// run-to-run noise, so it serves as the screening threshold.
pub fn calibrate_threshold(divergences: &[f64]) -> Result<f64> {
    if divergences.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "threshold calibration needs at least one divergence value".into(),
        ));
    }
    if divergences.iter().any(|v| !v.is_finite()) {
        return Err(SalvetError::InvalidArgument(
            "divergence values must be finite".into(),
        ));
    }
    let mut sorted = divergences.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile(&sorted, 0.10))
}

/// Accuracy-vs-baseline cell for the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccuracyComparison {
    pub config: ConfigLabel,
    pub config_mean: f64,
    pub baseline_mean: f64,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportRow {
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<AccuracyComparison>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wp1: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wp2: Option<Outcome>,
}

/// The rendered summary: one row per configuration plus the verdicts
/// the cells were read from. Rendering is a pure function of the
/// records, so regenerating from persisted verdicts is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<VerdictRecord>,
}

pub fn summary_report(
    verdicts: &[VerdictRecord],
    accuracy: &[AccuracyComparison],
) -> Result<Report> {
    let mut seen = std::collections::BTreeSet::new();
    for v in verdicts {
        if !seen.insert((v.config.order_key(), v.test)) {
            return Err(SalvetError::InvalidArgument(format!(
                "duplicate verdict for ({}, {:?})",
                v.config, v.test
            )));
        }
    }
    let mut seen_acc = std::collections::BTreeSet::new();
    for a in accuracy {
        if !seen_acc.insert(a.config.order_key()) {
            return Err(SalvetError::InvalidArgument(format!(
                "duplicate accuracy comparison for {}",
                a.config
            )));
        }
    }

    let mut configs: Vec<ConfigLabel> = Vec::new();
    for c in verdicts
        .iter()
        .map(|v| v.config)
        .chain(accuracy.iter().map(|a| a.config))
    {
        if !configs.contains(&c) {
            configs.push(c);
        }
    }
    configs.sort_by_key(|c| c.order_key());

    let rows = configs
        .iter()
        .map(|&c| ReportRow {
            config: c.to_string(),
            accuracy: accuracy.iter().find(|a| a.config == c).cloned(),
            wp1: verdicts
                .iter()
                .find(|v| v.config == c && v.test == TestKind::WP1)
                .map(|v| v.outcome),
            wp2: verdicts
                .iter()
                .find(|v| v.config == c && v.test == TestKind::WP2)
                .map(|v| v.outcome),
        })
        .collect();

    let mut sorted_verdicts = verdicts.to_vec();
    sorted_verdicts.sort_by_key(|v| (v.config.order_key(), v.test));
    Ok(Report {
        rows,
        verdicts: sorted_verdicts,
    })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| SalvetError::Parse(format!("report encoding failed: {e}")))
    }

    /// Plain-text table, deterministic for identical inputs.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:<28} {:<13} {:<13}\n",
            "config", "accuracy vs baseline", "WP1", "WP2"
        ));
        for row in &self.rows {
            let acc = row
                .accuracy
                .as_ref()
                .map(|a| {
                    format!(
                        "{:.2} vs {:.2} (p = {:.4})",
                        a.config_mean, a.baseline_mean, a.comparison.p
                    )
                })
                .unwrap_or_else(|| "-".into());
            let wp1 = row.wp1.map(|o| o.to_string()).unwrap_or_else(|| "-".into());
            let wp2 = row.wp2.map(|o| o.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<8} {:<28} {:<13} {:<13}\n",
                row.config, acc, wp1, wp2
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SaliencyDims, SaliencyType};

    fn label(code: &str) -> ConfigLabel {
        ConfigLabel::parse(code).unwrap()
    }

    fn stat(mean: f64, sd: f64) -> SummaryStat {
        SummaryStat { mean, sd, n: 4 }
    }

    /// The published per-fold (mean, sd) of learned vs uniform weights
    /// for all nine configurations, n = 4.
    fn published_wp1_rows() -> Vec<Wp1SummaryInput> {
        [
            ("A-ST", 2.83, 0.27, 3.66, 0.34),
            ("A-S", 2.32, 0.14, 2.74, 0.06),
            ("A-T", 2.22, 0.18, 2.90, 0.21),
            ("C-ST", 2.90, 0.52, 12.16, 3.34),
            ("C-S", 2.64, 0.37, 10.43, 4.47),
            ("C-T", 2.28, 0.08, 2.94, 0.38),
            ("CA-ST", 2.84, 0.27, 9.97, 0.38),
            ("CA-S", 2.45, 0.07, 11.70, 2.71),
            ("CA-T", 2.60, 0.22, 5.23, 1.00),
        ]
        .iter()
        .map(|&(code, lm, ls, um, us)| Wp1SummaryInput {
            config: label(code),
            learned: stat(lm, ls),
            uniform: stat(um, us),
        })
        .collect()
    }

    #[test]
    fn four_point_samples_reproduce_their_summaries() {
        let s = stat(2.83, 0.27);
        let xs = four_point_sample(&s).unwrap();
        let m = xs.iter().sum::<f64>() / 4.0;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0;
        assert!((m - 2.83).abs() < 1e-12);
        assert!((var.sqrt() - 0.27).abs() < 1e-12);
        assert!(four_point_sample(&SummaryStat { mean: 1.0, sd: 0.1, n: 5 }).is_err());
    }

    #[test]
    fn published_rows_replay_to_nine_passes() {
        let verdicts = wp1_verdicts_from_summaries(&published_wp1_rows(), 0.05).unwrap();
        assert_eq!(verdicts.len(), 9);
        for v in &verdicts {
            assert_eq!(v.outcome, Outcome::Pass, "{} failed: {}", v.config, v.rationale);
            let c = &v.comparisons[0];
            assert!(c.adjusted_p.unwrap() < 0.05, "{}: {:?}", v.config, c);
            assert!(c.effect_size.unwrap() > 1.0, "{}: {:?}", v.config, c);
            assert!(c.adjusted_p.unwrap() >= c.p - 1e-15);
        }
    }

    #[test]
    fn summary_and_sample_routes_agree() {
        let rows = published_wp1_rows();
        let from_summaries = wp1_verdicts_from_summaries(&rows, 0.05).unwrap();
        let sample_inputs: Vec<Wp1Input> = rows
            .iter()
            .map(|r| Wp1Input {
                config: r.config,
                learned: four_point_sample(&r.learned).unwrap(),
                uniform: four_point_sample(&r.uniform).unwrap(),
            })
            .collect();
        let from_samples = wp1_verdicts(&sample_inputs, 0.05).unwrap();
        for (a, b) in from_summaries.iter().zip(&from_samples) {
            assert_eq!(a.outcome, b.outcome);
            let (ca, cb) = (&a.comparisons[0], &b.comparisons[0]);
            assert!((ca.statistic - cb.statistic).abs() < 1e-9, "{}", a.config);
            assert!((ca.p - cb.p).abs() < 1e-9);
            assert!((ca.effect_size.unwrap() - cb.effect_size.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn wp1_requires_direction_and_significance() {
        let cfg = label("C-S");
        // identical samples: p = 1, direction flat
        let v = wp1_verdict(cfg, &[2.0, 2.1, 1.9, 2.05], &[2.0, 2.1, 1.9, 2.05], 0.05).unwrap();
        assert_eq!(v.outcome, Outcome::Fail);
        assert!((v.comparisons[0].p - 1.0).abs() < 1e-9);

        // uniform better than learned: direction gate fails even at tiny p
        let v = wp1_verdict(
            cfg,
            &[5.0, 5.1, 4.9, 5.05],
            &[2.0, 2.1, 1.9, 2.05],
            0.05,
        )
        .unwrap();
        assert_eq!(v.outcome, Outcome::Fail);
        assert!(v.comparisons[0].p < 0.001);

        // clear pass
        let v = wp1_verdict(
            cfg,
            &[2.0, 2.1, 1.9, 2.05],
            &[5.0, 5.1, 4.9, 5.05],
            0.05,
        )
        .unwrap();
        assert_eq!(v.outcome, Outcome::Pass);

        assert!(wp1_verdict(cfg, &[1.0], &[1.0, 2.0], 0.05).is_err());
        assert!(wp1_verdict(cfg, &[1.0, 2.0], &[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn wp1_is_invariant_under_fold_order() {
        let cfg = label("A-T");
        let a = wp1_verdict(cfg, &[2.0, 2.2, 1.8, 2.1], &[3.0, 2.8, 3.1, 2.9], 0.05).unwrap();
        let b = wp1_verdict(cfg, &[1.8, 2.2, 2.1, 2.0], &[2.9, 3.1, 2.8, 3.0], 0.05).unwrap();
        assert_eq!(a, b);
    }

    fn div(temporal: Option<f64>, spatial: Option<f64>) -> DivergenceReport {
        DivergenceReport {
            temporal,
            spatial,
            spatiotemporal: match (temporal, spatial) {
                (Some(t), Some(s)) => Some(t + s),
                _ => None,
            },
            per_frame_spatial: Vec::new(),
        }
    }

    fn thr() -> DivergenceThresholds {
        DivergenceThresholds {
            temporal: 0.7,
            spatial: Some(0.5),
        }
    }

    // per-fold samples built as mean + sd * canonical offsets
    fn folds(mean: f64) -> Vec<f64> {
        four_point_sample(&stat(mean, 0.2)).unwrap()
    }

    #[test]
    fn wp2_follows_the_decision_tree() {
        let alpha = 0.05;
        // (i) and (ii) both hold
        let v = wp2_verdict(
            label("C-S"),
            &Wp2Samples {
                host_own: folds(3.0),
                transplanted: folds(2.0),
                uniform_contextual: folds(3.0),
            },
            None,
            &thr(),
            alpha,
        )
        .unwrap();
        assert_eq!(v.outcome, Outcome::Pass);

        // (i) holds, (ii) fails
        let v = wp2_verdict(
            label("A-S"),
            &Wp2Samples {
                host_own: folds(3.0),
                transplanted: folds(2.0),
                uniform_contextual: folds(2.05),
            },
            None,
            &thr(),
            alpha,
        )
        .unwrap();
        assert_eq!(v.outcome, Outcome::Fail);
        // failed at the second gate: the first comparison was significant
        assert!(v.comparisons.iter().any(|c| c.label.starts_with("(i)") && c.p < alpha));

        // (i) flat, divergence above threshold on the relevant dimension
        let flat = Wp2Samples {
            host_own: folds(3.0),
            transplanted: folds(3.0),
            uniform_contextual: folds(3.0),
        };
        let v = wp2_verdict(label("A-T"), &flat, Some(&div(Some(0.85), None)), &thr(), alpha)
            .unwrap();
        assert_eq!(v.outcome, Outcome::Fail);

        // (i) flat, divergence below threshold
        let v = wp2_verdict(label("A-T"), &flat, Some(&div(Some(0.1), None)), &thr(), alpha)
            .unwrap();
        assert_eq!(v.outcome, Outcome::Inconclusive);

        // missing divergence at the flat branch is an input error
        assert!(matches!(
            wp2_verdict(label("A-T"), &flat, None, &thr(), alpha),
            Err(SalvetError::InvalidArgument(_))
        ));

        // ST config with one dimension above and one below stays inconclusive
        let v = wp2_verdict(
            label("A-ST"),
            &flat,
            Some(&div(Some(0.85), Some(0.1))),
            &thr(),
            alpha,
        )
        .unwrap();
        assert_eq!(v.outcome, Outcome::Inconclusive);

        // spatial screening without a spatial threshold is a config error
        assert!(matches!(
            wp2_verdict(
                label("A-S"),
                &flat,
                Some(&div(None, Some(2.0))),
                &DivergenceThresholds::default(),
                alpha,
            ),
            Err(SalvetError::Config(_))
        ));
    }

    #[test]
    fn wp2_never_passes_without_the_first_gate() {
        // transplanted beats the uniform baseline decisively, but not
        // the host's own weights
        let v = wp2_verdict(
            label("C-ST"),
            &Wp2Samples {
                host_own: folds(2.0),
                transplanted: folds(2.02),
                uniform_contextual: folds(9.0),
            },
            Some(&div(Some(0.9), Some(2.0))),
            &thr(),
            0.05,
        )
        .unwrap();
        assert_ne!(v.outcome, Outcome::Pass);
    }

    /// Synthesized per-config samples realizing the documented
    /// significance/divergence pattern of the original experiments.
    fn replay_wp2_cases() -> Vec<(ConfigLabel, Wp2Samples, Option<DivergenceReport>)> {
        let step2_pass = |c: &str| {
            (
                label(c),
                Wp2Samples {
                    host_own: folds(3.0),
                    transplanted: folds(2.0),
                    uniform_contextual: folds(3.0),
                },
                None,
            )
        };
        let step2_fail = |c: &str| {
            (
                label(c),
                Wp2Samples {
                    host_own: folds(3.0),
                    transplanted: folds(2.0),
                    uniform_contextual: folds(2.05),
                },
                None,
            )
        };
        let step1_fail = |c: &str, t: Option<f64>, s: Option<f64>| {
            (
                label(c),
                Wp2Samples {
                    host_own: folds(3.0),
                    transplanted: folds(3.0),
                    uniform_contextual: folds(3.0),
                },
                Some(div(t, s)),
            )
        };
        vec![
            step2_fail("A-S"),
            step1_fail("A-T", Some(0.85), None),
            step1_fail("A-ST", Some(0.88), Some(1.2)),
            step2_pass("C-S"),
            step1_fail("C-T", Some(0.82), None),
            step2_pass("C-ST"),
            step2_pass("CA-S"),
            step1_fail("CA-T", Some(0.9), None),
            step1_fail("CA-ST", Some(0.86), Some(1.4)),
        ]
    }

    #[test]
    fn replay_pattern_reproduces_the_documented_outcome() {
        let mut verdicts = Vec::new();
        for (config, samples, divergence) in replay_wp2_cases() {
            verdicts.push(
                wp2_verdict(config, &samples, divergence.as_ref(), &thr(), 0.05).unwrap(),
            );
        }
        let outcomes: Vec<(String, Outcome)> = verdicts
            .iter()
            .map(|v| (v.config.to_string(), v.outcome))
            .collect();
        let passes: Vec<&str> = outcomes
            .iter()
            .filter(|(_, o)| *o == Outcome::Pass)
            .map(|(c, _)| c.as_str())
            .collect();
        assert_eq!(passes, ["C-S", "C-ST", "CA-S"]);
        for (c, o) in &outcomes {
            if !passes.contains(&c.as_str()) {
                assert_eq!(*o, Outcome::Fail, "{c}");
            }
        }
        // the spatial-attention config is the only failure at gate two
        for v in &verdicts {
            let gate_one_significant = v
                .comparisons
                .iter()
                .any(|c| c.label.starts_with("(i)") && c.p < 0.05);
            if v.config.to_string() == "A-S" {
                assert!(gate_one_significant && v.outcome == Outcome::Fail);
            } else if v.outcome == Outcome::Fail {
                assert!(!gate_one_significant, "{} should fail at gate one", v.config);
            }
        }
    }

    #[test]
    fn calibration_takes_the_low_tail() {
        let vals: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let t = calibrate_threshold(&vals).unwrap();
        assert!((t - 1.9).abs() < 1e-12);
        assert!(calibrate_threshold(&[]).is_err());
        assert!(calibrate_threshold(&[f64::NAN]).is_err());
    }

    #[test]
    fn report_orders_and_validates() {
        let wp1 = wp1_verdicts_from_summaries(&published_wp1_rows(), 0.05).unwrap();
        let mut verdicts = wp1.clone();
        for (config, samples, divergence) in replay_wp2_cases() {
            verdicts.push(
                wp2_verdict(config, &samples, divergence.as_ref(), &thr(), 0.05).unwrap(),
            );
        }
        let accuracy = vec![AccuracyComparison {
            config: label("A-T"),
            config_mean: 2.22,
            baseline_mean: 2.28,
            comparison: Comparison {
                label: "learned vs baseline".into(),
                statistic: -0.4,
                df: 5.7,
                p: 0.7,
                adjusted_p: None,
                effect_size: None,
            },
        }];
        let report = summary_report(&verdicts, &accuracy).unwrap();
        assert_eq!(report.rows.len(), 9);
        let names: Vec<&str> = report.rows.iter().map(|r| r.config.as_str()).collect();
        assert_eq!(
            names,
            ["A-S", "A-T", "A-ST", "C-S", "C-T", "C-ST", "CA-S", "CA-T", "CA-ST"]
        );
        assert!(report.rows.iter().all(|r| r.wp1 == Some(Outcome::Pass)));
        let wp2_passes: Vec<&str> = report
            .rows
            .iter()
            .filter(|r| r.wp2 == Some(Outcome::Pass))
            .map(|r| r.config.as_str())
            .collect();
        assert_eq!(wp2_passes, ["C-S", "C-ST", "CA-S"]);

        // regeneration is byte-identical
        let again = summary_report(&verdicts, &accuracy).unwrap();
        assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
        assert_eq!(report.render_text(), again.render_text());
        assert!(report.render_text().contains("2.22 vs 2.28"));

        // duplicates rejected
        let mut dup = verdicts.clone();
        dup.push(verdicts[0].clone());
        assert!(summary_report(&dup, &accuracy).is_err());

        // empty input: empty table, no error
        let empty = summary_report(&[], &[]).unwrap();
        assert!(empty.rows.is_empty());
    }

    #[test]
    fn baseline_accuracy_comparison_is_flat() {
        // baseline summary vs the best single-saliency row
        let t = crate::stats::t_from_summary(2.22, 0.18, 4, 2.28, 0.24, 4).unwrap();
        assert!(t.p > 0.05, "p = {}", t.p);
        let _ = (SaliencyType::A, SaliencyDims::T);
    }

    #[test]
    fn verdict_records_serialize_stably() {
        let v = wp1_verdict(
            label("C-S"),
            &[2.0, 2.1, 1.9, 2.05],
            &[5.0, 5.1, 4.9, 5.05],
            0.05,
        )
        .unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"test\":\"WP1\""));
        assert!(json.contains("\"outcome\":\"PASS\""));
        assert!(json.contains("\"adjustedP\""));
        let back: VerdictRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
