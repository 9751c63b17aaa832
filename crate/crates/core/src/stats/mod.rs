//! Statistical testing: Welch's t, Benjamini-Hochberg control, effect
//! sizes, balanced N-way ANOVA, and Tukey-HSD pairwise comparisons.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SalvetError};
use special::{f_sf, studentized_range_cdf, t_sf_two_sided};

/// Outcome of a single significance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

fn check_sample(xs: &[f64], side: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(SalvetError::InvalidArgument(format!(
            "{side} sample needs at least 2 observations, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(SalvetError::InvalidArgument(format!(
            "{side} sample contains non-finite values"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn welch_from_moments(
    mean_a: f64,
    var_a: f64,
    n_a: usize,
    mean_b: f64,
    var_b: f64,
    n_b: usize,
) -> Result<TestResult> {
    if var_a == 0.0 && var_b == 0.0 {
        return Err(SalvetError::InvalidArgument(
            "both samples have zero variance; the t statistic is undefined".into(),
        ));
    }
    let sa = var_a / n_a as f64;
    let sb = var_b / n_b as f64;
    let se2 = sa + sb;
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (n_a - 1) as f64 + sb * sb / (n_b - 1) as f64);
    let p = t_sf_two_sided(t, df);
    Ok(TestResult { statistic: t, df, p })
}

/// Welch's unequal-variance two-sided t test.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_sample(a, "first")?;
    check_sample(b, "second")?;
    welch_from_moments(mean(a), sample_var(a), a.len(), mean(b), sample_var(b), b.len())
}

/// Welch's t test from summary statistics (means, sample standard
/// deviations, counts).
pub fn t_from_summary(
    mean_a: f64,
    sd_a: f64,
    n_a: usize,
    mean_b: f64,
    sd_b: f64,
    n_b: usize,
) -> Result<TestResult> {
    if n_a < 2 || n_b < 2 {
        return Err(SalvetError::InvalidArgument(
            "summary t test needs n >= 2 on both sides".into(),
        ));
    }
    for v in [mean_a, sd_a, mean_b, sd_b] {
        if !v.is_finite() {
            return Err(SalvetError::InvalidArgument(
                "summary t test needs finite statistics".into(),
            ));
        }
    }
    if sd_a < 0.0 || sd_b < 0.0 {
        return Err(SalvetError::InvalidArgument(
            "standard deviations cannot be negative".into(),
        ));
    }
    welch_from_moments(mean_a, sd_a * sd_a, n_a, mean_b, sd_b * sd_b, n_b)
}

/// One p-value's fate under Benjamini-Hochberg control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BhOutcome {
    pub p: f64,
    #[serde(rename = "adjustedP")]
    pub adjusted_p: f64,
    pub significant: bool,
}

/// Benjamini-Hochberg step-up procedure at level `alpha`. The output
/// preserves the input order.
pub fn benjamini_hochberg(ps: &[f64], alpha: f64) -> Result<Vec<BhOutcome>> {
    if ps.is_empty() {
        return Err(SalvetError::InvalidArgument(
            "benjamini_hochberg needs at least one p-value".into(),
        ));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(SalvetError::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if ps.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
        return Err(SalvetError::InvalidArgument(
            "p-values must lie in [0,1]".into(),
        ));
    }
    let m = ps.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| ps[i].partial_cmp(&ps[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let candidate = ps[idx] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate).min(1.0);
        adjusted[idx] = running;
    }
    Ok(ps
        .iter()
        .zip(&adjusted)
        .map(|(&p, &adjusted_p)| BhOutcome {
            p,
            adjusted_p,
            significant: adjusted_p <= alpha,
        })
        .collect())
}

/// Cohen's d from summary statistics, with the unpooled-average
/// denominator sqrt((sd_a^2 + sd_b^2) / 2). Two zero-spread samples
/// with equal means give 0; with different means the effect size is
/// undefined.
pub fn cohens_d_summary(mean_a: f64, sd_a: f64, mean_b: f64, sd_b: f64) -> Result<f64> {
    for v in [mean_a, sd_a, mean_b, sd_b] {
        if !v.is_finite() {
            return Err(SalvetError::InvalidArgument(
                "effect size needs finite statistics".into(),
            ));
        }
    }
    if sd_a < 0.0 || sd_b < 0.0 {
        return Err(SalvetError::InvalidArgument(
            "standard deviations cannot be negative".into(),
        ));
    }
    if sd_a == 0.0 && sd_b == 0.0 {
        if mean_a == mean_b {
            return Ok(0.0);
        }
        return Err(SalvetError::InvalidArgument(
            "zero spread with unequal means; effect size is unbounded".into(),
        ));
    }
    Ok((mean_a - mean_b).abs() / ((sd_a * sd_a + sd_b * sd_b) / 2.0).sqrt())
}

/// Cohen's d of two raw samples.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample(a, "first")?;
    check_sample(b, "second")?;
    cohens_d_summary(mean(a), sample_var(a).sqrt(), mean(b), sample_var(b).sqrt())
}

/// Paired two-sided t test on per-index differences. The campaign
/// pipeline uses Welch's unpaired form; this variant exists for
/// designs where the folds are shared between the two conditions.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_sample(a, "first")?;
    check_sample(b, "second")?;
    if a.len() != b.len() {
        return Err(SalvetError::InvalidArgument(format!(
            "paired samples must have equal length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let var = sample_var(&diffs);
    if var == 0.0 {
        return Err(SalvetError::InvalidArgument(
            "differences have zero variance; the paired t statistic is undefined".into(),
        ));
    }
    let n = diffs.len() as f64;
    let t = mean(&diffs) / (var / n).sqrt();
    let df = n - 1.0;
    Ok(TestResult {
        statistic: t,
        df,
        p: t_sf_two_sided(t, df),
    })
}

/// A named factor with its level count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnovaFactor {
    pub name: String,
    pub levels: usize,
}

/// One row of the ANOVA table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEffect {
    pub name: String,
    pub df: usize,
    pub ss: f64,
    pub ms: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub effects: Vec<AnovaEffect>,
    #[serde(rename = "residualDf")]
    pub residual_df: usize,
    #[serde(rename = "residualSs")]
    pub residual_ss: f64,
    #[serde(rename = "totalSs")]
    pub total_ss: f64,
}

/// Balanced N-way ANOVA with main effects and two-way interactions;
/// everything else pools into the residual. Requires a fully crossed
/// design with an equal number (>= 2) of replicates per cell.
pub fn anova(factors: &[AnovaFactor], observations: &[(Vec<usize>, f64)]) -> Result<AnovaTable> {
    if factors.is_empty() {
        return Err(SalvetError::InvalidArgument("anova needs factors".into()));
    }
    for f in factors {
        if f.levels < 2 {
            return Err(SalvetError::InvalidArgument(format!(
                "factor {:?} has fewer than 2 levels",
                f.name
            )));
        }
    }
    let n = observations.len();
    let cells: usize = factors.iter().map(|f| f.levels).product();
    if n == 0 || n % cells != 0 {
        return Err(SalvetError::InvalidArgument(format!(
            "design is unbalanced: {n} observations over {cells} cells"
        )));
    }
    let reps = n / cells;
    if reps < 2 {
        return Err(SalvetError::InvalidArgument(
            "anova needs at least 2 replicates per cell".into(),
        ));
    }

    let linear_index = |levels: &[usize]| -> Result<usize> {
        if levels.len() != factors.len() {
            return Err(SalvetError::InvalidArgument(format!(
                "observation indexes {} factors, design has {}",
                levels.len(),
                factors.len()
            )));
        }
        let mut idx = 0;
        for (l, f) in levels.iter().zip(factors) {
            if *l >= f.levels {
                return Err(SalvetError::InvalidArgument(format!(
                    "level {l} out of range for factor {:?}",
                    f.name
                )));
            }
            idx = idx * f.levels + l;
        }
        Ok(idx)
    };

    let mut cell_count = vec![0usize; cells];
    for (levels, v) in observations {
        if !v.is_finite() {
            return Err(SalvetError::InvalidArgument(
                "anova observations must be finite".into(),
            ));
        }
        cell_count[linear_index(levels)?] += 1;
    }
    if cell_count.iter().any(|&c| c != reps) {
        return Err(SalvetError::InvalidArgument(
            "design is unbalanced: cells have unequal replicate counts".into(),
        ));
    }

    let grand = observations.iter().map(|(_, v)| v).sum::<f64>() / n as f64;
    let total_ss: f64 = observations
        .iter()
        .map(|(_, v)| (v - grand) * (v - grand))
        .sum();

    // marginal means per factor level and per factor pair
    let k = factors.len();
    let mut effects: Vec<AnovaEffect> = Vec::new();
    let mut main_ss = vec![0.0; k];
    for i in 0..k {
        let li = factors[i].levels;
        let mut sums = vec![0.0; li];
        for (levels, v) in observations {
            sums[levels[i]] += v;
        }
        let per = (n / li) as f64;
        let ss: f64 = sums
            .iter()
            .map(|s| {
                let m = s / per;
                per * (m - grand) * (m - grand)
            })
            .sum();
        main_ss[i] = ss;
        effects.push(AnovaEffect {
            name: factors[i].name.clone(),
            df: li - 1,
            ss,
            ms: 0.0,
            f: 0.0,
            p: 0.0,
        });
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let (li, lj) = (factors[i].levels, factors[j].levels);
            let mut sums = vec![0.0; li * lj];
            for (levels, v) in observations {
                sums[levels[i] * lj + levels[j]] += v;
            }
            let per = (n / (li * lj)) as f64;
            let cell_ss: f64 = sums
                .iter()
                .map(|s| {
                    let m = s / per;
                    per * (m - grand) * (m - grand)
                })
                .sum();
            let ss = (cell_ss - main_ss[i] - main_ss[j]).max(0.0);
            effects.push(AnovaEffect {
                name: format!("{}x{}", factors[i].name, factors[j].name),
                df: (li - 1) * (lj - 1),
                ss,
                ms: 0.0,
                f: 0.0,
                p: 0.0,
            });
        }
    }

    let model_ss: f64 = effects.iter().map(|e| e.ss).sum();
    let model_df: usize = effects.iter().map(|e| e.df).sum();
    let residual_df = n - 1 - model_df;
    let residual_ss = (total_ss - model_ss).max(0.0);
    if residual_df == 0 {
        return Err(SalvetError::InvalidArgument(
            "no residual degrees of freedom".into(),
        ));
    }
    let ms_resid = residual_ss / residual_df as f64;
    if ms_resid == 0.0 {
        // constant data carries no effects at all; anything else with a
        // perfectly explained response has no testable F
        if total_ss != 0.0 || effects.iter().any(|e| e.ss != 0.0) {
            return Err(SalvetError::Numeric(
                "zero residual variance; F statistics are undefined".into(),
            ));
        }
        for e in &mut effects {
            e.p = 1.0;
        }
    } else {
        for e in &mut effects {
            e.ms = e.ss / e.df as f64;
            e.f = e.ms / ms_resid;
            e.p = f_sf(e.f, e.df as f64, residual_df as f64);
        }
    }

    Ok(AnovaTable {
        effects,
        residual_df,
        residual_ss,
        total_ss,
    })
}

/// One Tukey-HSD pairwise comparison (group indices into the input).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    pub diff: f64,
    pub q: f64,
    pub p: f64,
}

/// Tukey-HSD (Tukey-Kramer for unequal sizes) over all group pairs,
/// with p-values from the studentized range distribution.
pub fn tukey_hsd(groups: &[Vec<f64>]) -> Result<Vec<TukeyPair>> {
    if groups.len() < 2 {
        return Err(SalvetError::InvalidArgument(
            "tukey_hsd needs at least 2 groups".into(),
        ));
    }
    for (gi, g) in groups.iter().enumerate() {
        check_sample(g, &format!("group {gi}"))?;
    }
    let k = groups.len();
    let nu: usize = groups.iter().map(|g| g.len() - 1).sum();
    let within_ss: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        })
        .sum();
    let ms_w = within_ss / nu as f64;
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = means[i] - means[j];
            let (q, p) = if ms_w == 0.0 {
                // internally constant groups: coincident means compare
                // as trivially equal, separated means have no scale
                if diff != 0.0 {
                    return Err(SalvetError::Numeric(
                        "zero within-group variance with unequal means".into(),
                    ));
                }
                (0.0, 1.0)
            } else {
                let se = (ms_w / 2.0
                    * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64))
                    .sqrt();
                let q = diff.abs() / se;
                (q, 1.0 - studentized_range_cdf(q, k, nu as f64))
            };
            pairs.push(TukeyPair { i, j, diff, q, p });
        }
    }
    Ok(pairs)
}
