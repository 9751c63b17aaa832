//! Special functions backing the statistical tests: log-gamma,
//! regularized incomplete beta/gamma, the normal distribution, and the
//! studentized range distribution evaluated by fixed Gauss-Legendre
//! quadrature.

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0 && x.is_finite(), "ln_gamma domain: x > 0");
    if x < 0.5 {
        let s = (std::f64::consts::PI * x).sin();
        return (std::f64::consts::PI / s).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

const FPMIN: f64 = 1e-300;
const CF_EPS: f64 = 1e-15;
const CF_MAX_IT: usize = 300;

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_IT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "betai needs positive shape parameters");
    assert!((0.0..=1.0).contains(&x), "betai domain: 0 <= x <= 1");
    if x == 0.0 || x == 1.0 {
        return x;
    }
    let ln_bt =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..CF_MAX_IT {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * CF_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=CF_MAX_IT {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gammp(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gammp domain: a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let v = gammp(0.5, x * x);
    if x > 0.0 {
        v
    } else {
        -v
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Two-sided p-value of a t statistic with `nu` degrees of freedom.
pub fn t_sf_two_sided(t: f64, nu: f64) -> f64 {
    assert!(nu > 0.0 && t.is_finite(), "t distribution needs nu > 0");
    betai(nu / 2.0, 0.5, nu / (nu + t * t))
}

/// CDF of the F distribution.
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    assert!(d1 > 0.0 && d2 > 0.0, "F distribution needs positive dfs");
    if f <= 0.0 {
        return 0.0;
    }
    betai(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))
}

/// Upper tail of the F distribution, computed directly for precision.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    assert!(d1 > 0.0 && d2 > 0.0, "F distribution needs positive dfs");
    if f <= 0.0 {
        return 1.0;
    }
    betai(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

// 16-point Gauss-Legendre rule (positive half; the rule is symmetric).
const GL_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003_0,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

fn gl_integrate(lo: f64, hi: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let width = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        let half = width / 2.0;
        for i in 0..8 {
            acc += GL_W[i] * half * (f(mid + half * GL_X[i]) + f(mid - half * GL_X[i]));
        }
    }
    acc
}

/// CDF of the range of `k` independent standard normals.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as f64;
    let v = k as f64
        * gl_integrate(-9.0, 9.0, 18, |u| {
            normal_pdf(u) * (normal_cdf(u + w) - normal_cdf(u)).powf(km1)
        });
    v.clamp(0.0, 1.0)
}

/// CDF of the studentized range with `k` groups and `nu` error degrees
/// of freedom. The chi-scale integral runs over [0, 6] narrowed to the
/// region where the scale density has mass.
pub fn studentized_range_cdf(q: f64, k: usize, nu: f64) -> f64 {
    assert!(k >= 2, "studentized range needs k >= 2 groups");
    assert!(nu > 0.0, "studentized range needs nu > 0");
    if q <= 0.0 {
        return 0.0;
    }
    let half_width = 12.0 / (2.0 * nu).sqrt();
    let lo = (1.0 - half_width).max(0.0);
    let hi = (1.0 + half_width).min(6.0);
    let ln_norm = std::f64::consts::LN_2 + (nu / 2.0) * (nu / 2.0).ln() - ln_gamma(nu / 2.0);
    let v = gl_integrate(lo, hi, 24, |s| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_fs = ln_norm + (nu - 1.0) * s.ln() - nu * s * s / 2.0;
        ln_fs.exp() * normal_range_cdf(q * s, k)
    });
    v.clamp(0.0, 1.0)
}

/// Critical value: the q with CDF(q; k, nu) = p, found by bisection.
pub fn studentized_range_crit(p: f64, k: usize, nu: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && p > 0.0, "crit needs 0 < p < 1");
    let mut hi = 10.0;
    while studentized_range_cdf(hi, k, nu) < p {
        hi *= 2.0;
        assert!(hi < 1e4, "studentized range critical value out of range");
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, nu) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson, used only to build oracles that share no code
    /// with the implementations above.
    fn simpson_rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        eps: f64,
        whole: f64,
        fa: f64,
        fb: f64,
        fm: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            simpson_rec(f, a, m, eps / 2.0, left, fa, fm, flm, depth - 1)
                + simpson_rec(f, m, b, eps / 2.0, right, fm, fb, frm, depth - 1)
        }
    }

    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
        let m = 0.5 * (a + b);
        let (fa, fb, fm) = (f(a), f(b), f(m));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        simpson_rec(f, a, b, eps, whole, fa, fb, fm, 40)
    }

    /// Two-sided t p-value from raw quadrature over the unnormalized
    /// density with a tangent substitution, normalized numerically.
    fn t_p_oracle(t: f64, nu: f64) -> f64 {
        let half = std::f64::consts::FRAC_PI_2 - 1e-12;
        let g = move |theta: f64| -> f64 {
            let x = theta.tan();
            let sec2 = 1.0 + x * x;
            (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0) * sec2
        };
        let z = 2.0 * integrate(&g, 0.0, half, 1e-13);
        let tail = integrate(&g, t.abs().atan(), half, 1e-13);
        2.0 * tail / z
    }

    #[test]
    fn ln_gamma_matches_factorials_and_half_integers() {
        for (x, want) in [
            (1.0, 0.0),
            (2.0, 0.0),
            (5.0, 24.0f64.ln()),
            (11.0, 3_628_800.0f64.ln()),
        ] {
            assert!((ln_gamma(x) - want).abs() < 1e-11, "ln_gamma({x})");
        }
        let half = ln_gamma(0.5);
        assert!((half - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        // recurrence gamma(x+1) = x gamma(x)
        for x in [0.3, 1.7, 6.2, 14.9] {
            let lhs = ln_gamma(x + 1.0);
            let rhs = ln_gamma(x) + x.ln();
            assert!((lhs - rhs).abs() < 1e-11);
        }
    }

    #[test]
    fn erf_and_normal_cdf_basics() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert!((erf(-1.0) + erf(1.0)).abs() < 1e-15);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
        assert!(normal_cdf(9.0) <= 1.0);
    }

    #[test]
    fn betai_complement_identity() {
        for (a, b, x) in [(2.0, 3.0, 0.4), (0.5, 0.5, 0.7), (5.0, 1.5, 0.2)] {
            let lhs = betai(a, b, x);
            let rhs = 1.0 - betai(b, a, 1.0 - x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert_eq!(betai(2.0, 2.0, 0.0), 0.0);
        assert_eq!(betai(2.0, 2.0, 1.0), 1.0);
        // I_x(1,1) = x
        assert!((betai(1.0, 1.0, 0.37) - 0.37).abs() < 1e-13);
    }

    #[test]
    fn t_p_values_match_quadrature_oracle_on_one_hundred_cases() {
        let mut worst = 0.0f64;
        for i in 0..10 {
            let nu = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 24.0, 60.0][i];
            for j in 0..10 {
                let t = 0.1 + 0.52 * j as f64;
                let got = t_sf_two_sided(t, nu);
                let want = t_p_oracle(t, nu);
                worst = worst.max((got - want).abs());
            }
        }
        assert!(worst < 1e-6, "worst |Delta p| = {worst}");
    }

    #[test]
    fn f_distribution_agrees_with_squared_t() {
        for nu in [3.0, 8.0, 20.0] {
            for t in [0.5, 1.3, 2.7] {
                let p_t = t_sf_two_sided(t, nu);
                let p_f = f_sf(t * t, 1.0, nu);
                assert!((p_t - p_f).abs() < 1e-9, "nu={nu} t={t}");
            }
        }
        assert_eq!(f_cdf(0.0, 2.0, 5.0), 0.0);
        for (f, d1, d2) in [(1.4, 2.0, 10.0), (0.3, 5.0, 5.0)] {
            assert!((f_cdf(f, d1, d2) + f_sf(f, d1, d2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn studentized_range_matches_t_at_two_groups() {
        // with k = 2 the studentized range is sqrt(2)|t|
        for nu in [4.0, 10.0, 24.0] {
            for t in [0.6, 1.5, 2.8] {
                let q = std::f64::consts::SQRT_2 * t;
                let lhs = studentized_range_cdf(q, 2, nu);
                let rhs = 1.0 - t_sf_two_sided(t, nu);
                assert!((lhs - rhs).abs() < 1e-9, "nu={nu} t={t}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn studentized_range_critical_values_match_tables() {
        let q = studentized_range_crit(0.95, 3, 12.0);
        assert!((q - 3.77).abs() < 0.01, "q*(3,12,0.05) = {q}");
        let q2 = studentized_range_crit(0.95, 2, 10.0);
        // k=2: q* = sqrt(2) t*(0.975, 10), t* = 2.228138852
        assert!((q2 - std::f64::consts::SQRT_2 * 2.228_138_852).abs() < 1e-6);
    }

    #[test]
    fn studentized_range_cdf_shape() {
        assert_eq!(studentized_range_cdf(0.0, 3, 10.0), 0.0);
        let a = studentized_range_cdf(1.0, 3, 10.0);
        let b = studentized_range_cdf(2.0, 3, 10.0);
        let c = studentized_range_cdf(4.0, 3, 10.0);
        assert!(a < b && b < c && c < 1.0);
        assert!(studentized_range_cdf(40.0, 3, 10.0) > 0.999_999);
    }
}
