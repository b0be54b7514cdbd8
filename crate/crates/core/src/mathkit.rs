//! Numeric kernels shared by the estimators and the efficiency analytics.
//!
//! Everything here is a pure function of its arguments. Probabilities close to
//! 0 or 1 are handled through `ln_1p`/`exp_m1` so that the power transforms
//! `(1 - x)^{1/k}` and `(1 - θ)^k` keep full relative precision in the
//! rare-exceedance regime.

use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Relative tolerance of the incomplete-beta continued fraction.
const BETA_CF_TOL: f64 = 1e-14;
const BETA_CF_MAX_ITER: usize = 300;
const BETA_CF_TINY: f64 = 1e-300;

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("{name} = {x} is outside [0, 1]")));
    }
    Ok(())
}

fn check_set_size(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::domain("set size k must be at least 1"));
    }
    Ok(())
}

/// `(1 - x)^e` evaluated as `exp(e * ln1p(-x))`.
#[inline]
fn one_minus_pow(x: f64, e: f64) -> f64 {
    (e * (-x).ln_1p()).exp()
}

/// `1 - (1 - x)^e` without cancellation for small `x`.
#[inline]
fn one_minus_one_minus_pow(x: f64, e: f64) -> f64 {
    -(e * (-x).ln_1p()).exp_m1()
}

/// Exceedance probability of the maximum of `k` independent units,
/// `q_k(θ) = 1 - (1 - θ)^k`.
pub fn q_k(theta: f64, k: u32) -> Result<f64> {
    check_unit_interval("theta", theta)?;
    check_set_size(k)?;
    Ok(one_minus_one_minus_pow(theta, f64::from(k)))
}

/// Calibration map `g_k(x) = 1 - (1 - x)^{1/k}`, the inverse of [`q_k`].
pub fn g_k(x: f64, k: u32) -> Result<f64> {
    check_unit_interval("x", x)?;
    check_set_size(k)?;
    Ok(one_minus_one_minus_pow(x, 1.0 / f64::from(k)))
}

/// First and second derivatives of [`g_k`] at `x`.
pub fn g_k_derivs(x: f64, k: u32) -> Result<(f64, f64)> {
    check_unit_interval("x", x)?;
    check_set_size(k)?;
    if x >= 1.0 {
        return Err(Error::domain("g_k derivatives are singular at x = 1"));
    }
    let kf = f64::from(k);
    let d1 = one_minus_pow(x, 1.0 / kf - 1.0) / kf;
    let d2 = (kf - 1.0) / (kf * kf) * one_minus_pow(x, 1.0 / kf - 2.0);
    Ok((d1, d2))
}

/// Natural log of the complete beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_c(alpha, beta)`.
///
/// Evaluated by the modified Lentz continued fraction, switching to
/// `1 - I_{1-c}(beta, alpha)` when `c > (alpha + 1) / (alpha + beta + 2)` so the
/// fraction always converges quickly.
pub fn reg_inc_beta(c: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!(
            "beta shapes must be positive and finite (alpha = {alpha}, beta = {beta})"
        )));
    }
    check_unit_interval("c", c)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    if c == 1.0 {
        return Ok(1.0);
    }
    let value = if c > (alpha + 1.0) / (alpha + beta + 2.0) {
        1.0 - beta_cf_ratio(1.0 - c, beta, alpha)?
    } else {
        beta_cf_ratio(c, alpha, beta)?
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `x^a (1-x)^b / (a B(a,b))` times the continued fraction; valid (fast) for
/// `x < (a+1)/(a+b+2)`.
fn beta_cf_ratio(x: f64, a: f64, b: f64) -> Result<f64> {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < BETA_CF_TINY {
        d = BETA_CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < BETA_CF_TOL {
            return Ok(front * h);
        }
    }
    Err(Error::Convergence {
        iterations: BETA_CF_MAX_ITER,
        width: f64::NAN,
    })
}

fn check_binomial(n: u64, p: f64) -> Result<()> {
    check_unit_interval("p", p)?;
    if n > (1u64 << 52) {
        return Err(Error::domain(format!("binomial size {n} is too large")));
    }
    Ok(())
}

/// Binomial probability mass `Pr(X = r)` for `X ~ Binomial(n, p)`, evaluated in
/// log space.
pub fn binom_pmf(n: u64, p: f64, r: u64) -> Result<f64> {
    check_binomial(n, p)?;
    if r > n {
        return Err(Error::domain(format!("r = {r} exceeds n = {n}")));
    }
    Ok(pmf_unchecked(n, p, r))
}

fn pmf_unchecked(n: u64, p: f64, r: u64) -> f64 {
    if p == 0.0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if r == n { 1.0 } else { 0.0 };
    }
    let ln = ln_binomial(n, r) + r as f64 * p.ln() + (n - r) as f64 * (-p).ln_1p();
    ln.exp()
}

/// Mass and cumulative probability `(Pr(X = r), Pr(X <= r))`.
pub fn binom_pmf_cdf(n: u64, p: f64, r: u64) -> Result<(f64, f64)> {
    let pmf = binom_pmf(n, p, r)?;
    // Sum the shorter tail.
    let cdf = if r <= n / 2 {
        (0..=r).map(|j| pmf_unchecked(n, p, j)).sum::<f64>()
    } else {
        1.0 - ((r + 1)..=n).map(|j| pmf_unchecked(n, p, j)).sum::<f64>()
    };
    Ok((pmf, cdf.clamp(0.0, 1.0)))
}

/// The full mass vector `[Pr(X = 0), ..., Pr(X = n)]`.
pub fn binom_pmf_vec(n: u64, p: f64) -> Result<Vec<f64>> {
    check_binomial(n, p)?;
    Ok((0..=n).map(|r| pmf_unchecked(n, p, r)).collect())
}

/// `Pr(p_{r:k} > c)` for the `r`-th smallest of `k` independent units each
/// exceeding with probability `theta`.
///
/// The `r`-th order statistic exceeds `c` iff at least `k - r + 1` of the `k`
/// units do, so this is an upper binomial tail. It is nondecreasing in `r`.
pub fn order_stat_exceed(r: u32, k: u32, theta: f64) -> Result<f64> {
    check_order_stat(r, k)?;
    check_unit_interval("theta", theta)?;
    let need = u64::from(k - r + 1);
    let k = u64::from(k);
    Ok((need..=k)
        .map(|j| pmf_unchecked(k, theta, j))
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

/// Derivative of [`order_stat_exceed`] with respect to `theta`.
///
/// `d/dθ Pr(Bin(k, θ) >= m) = k C(k-1, m-1) θ^{m-1} (1-θ)^{k-m}`.
pub fn order_stat_exceed_slope(r: u32, k: u32, theta: f64) -> Result<f64> {
    check_order_stat(r, k)?;
    check_unit_interval("theta", theta)?;
    let m = u64::from(k - r + 1);
    let k = u64::from(k);
    Ok(k as f64 * pmf_unchecked(k - 1, theta, m - 1))
}

/// Second derivative of [`order_stat_exceed`] with respect to `theta`.
pub fn order_stat_exceed_curvature(r: u32, k: u32, theta: f64) -> Result<f64> {
    check_order_stat(r, k)?;
    check_unit_interval("theta", theta)?;
    let m = u64::from(k - r + 1);
    let k = u64::from(k);
    if k == 1 {
        return Ok(0.0);
    }
    // d/dθ [k B(k-1, m-1; θ)] with B the binomial mass; for the mass
    // d/dθ B(n, j; θ) = n [B(n-1, j-1; θ) - B(n-1, j; θ)].
    let n = k - 1;
    let j = m - 1;
    let lower = if j >= 1 {
        pmf_unchecked(n - 1, theta, j - 1)
    } else {
        0.0
    };
    let upper = if j < n {
        pmf_unchecked(n - 1, theta, j)
    } else {
        0.0
    };
    Ok((k * n) as f64 * (lower - upper))
}

fn check_order_stat(r: u32, k: u32) -> Result<()> {
    check_set_size(k)?;
    if r == 0 || r > k {
        return Err(Error::domain(format!(
            "order index r = {r} outside 1..={k}"
        )));
    }
    Ok(())
}

/// Mean of the zero-truncated binomial `ZTBin(nu, rho)`, summed term by term.
pub fn ztbin_mean(nu: u32, rho: f64) -> Result<f64> {
    if nu == 0 {
        return Err(Error::domain("ZTBin requires nu >= 1"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::domain(format!(
            "ZTBin requires 0 < rho <= 1, got {rho}"
        )));
    }
    let nu = u64::from(nu);
    let untruncated = one_minus_one_minus_pow(rho, nu as f64);
    let mean = (1..=nu)
        .map(|l| l as f64 * pmf_unchecked(nu, rho, l))
        .sum::<f64>()
        / untruncated;
    Ok(mean)
}

/// Bracket and stopping rule for [`solve_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolveSpec {
    pub lower: f64,
    pub upper: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl RootSolveSpec {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

impl Default for RootSolveSpec {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            abs_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Finds a root of `f` inside `[spec.lower, spec.upper]`.
///
/// Secant steps are taken while they stay inside the bracket and shrink it by
/// at least half; otherwise the step falls back to bisection, so convergence
/// is guaranteed for any continuous `f` with a sign change.
pub fn solve_root<F>(mut f: F, spec: &RootSolveSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let RootSolveSpec {
        lower,
        upper,
        abs_tol,
        max_iter,
    } = *spec;
    if !(lower < upper) || !(abs_tol > 0.0) || max_iter == 0 {
        return Err(Error::argument(format!(
            "invalid root bracket [{lower}, {upper}] / tolerance {abs_tol}"
        )));
    }

    let (mut a, mut b) = (lower, upper);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lower,
            upper,
            f_lower: fa,
            f_upper: fb,
        });
    }

    let mut force_bisect = false;
    for _ in 0..max_iter {
        let width = b - a;
        if width <= abs_tol {
            break;
        }
        let mid = a + 0.5 * width;
        let x = if force_bisect {
            mid
        } else {
            let s = b - fb * (b - a) / (fb - fa);
            if s > a && s < b {
                s
            } else {
                mid
            }
        };
        if x <= a || x >= b {
            // bracket cannot shrink further in floating point
            break;
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        force_bisect = !force_bisect && (b - a) > 0.5 * width;
    }

    if b - a > abs_tol && (b - a) > 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
        return Err(Error::Convergence {
            iterations: max_iter,
            width: b - a,
        });
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom_sum_oracle(c: f64, a: u64, b: u64) -> f64 {
        // I_c(a, b) = Pr(Bin(a + b - 1, c) >= a) for integer shapes.
        let n = a + b - 1;
        (a..=n)
            .map(|j| {
                let mut coef = 1.0;
                for i in 0..j {
                    coef *= (n - i) as f64 / (i + 1) as f64;
                }
                coef * c.powi(j as i32) * (1.0 - c).powi((n - j) as i32)
            })
            .sum()
    }

    #[test]
    fn g_k_fixed_points() {
        for k in 1..6 {
            assert_eq!(g_k(0.0, k).unwrap(), 0.0);
            assert_eq!(g_k(1.0, k).unwrap(), 1.0);
        }
        let v = g_k(0.5, 3).unwrap();
        assert!((v - (1.0 - 0.5f64.powf(1.0 / 3.0))).abs() < 1e-15);
        assert!((v - 0.206299).abs() < 1e-6);
        assert!(g_k(1.2, 2).is_err());
        assert!(g_k(-0.1, 2).is_err());
        assert!(g_k(0.5, 0).is_err());
    }

    #[test]
    fn g_k_derivs_values() {
        for &x in &[0.0, 0.3, 0.9] {
            assert_eq!(g_k_derivs(x, 1).unwrap(), (1.0, 0.0));
        }
        let (d1, d2) = g_k_derivs(0.0, 2).unwrap();
        assert!((d1 - 0.5).abs() < 1e-15);
        assert!((d2 - 0.25).abs() < 1e-15);
        assert!(matches!(g_k_derivs(1.0, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn g_k_derivative_matches_central_difference() {
        let h = 1e-5;
        for &(x, k) in &[(0.19, 2), (0.05, 3), (0.6, 5)] {
            let fd = (g_k(x + h, k).unwrap() - g_k(x - h, k).unwrap()) / (2.0 * h);
            let fd2 = (g_k(x + h, k).unwrap() - 2.0 * g_k(x, k).unwrap() + g_k(x - h, k).unwrap())
                / (h * h);
            let (d1, d2) = g_k_derivs(x, k).unwrap();
            assert!((fd - d1).abs() < 1e-6, "x={x} k={k}: {fd} vs {d1}");
            assert!((fd2 - d2).abs() < 1e-3, "x={x} k={k}: {fd2} vs {d2}");
        }
    }

    #[test]
    fn g_k_inverts_q_k() {
        for k in 1..=10 {
            for i in 0..=100 {
                let theta = i as f64 / 100.0;
                let back = g_k(q_k(theta, k).unwrap(), k).unwrap();
                // Past θ ≈ 0.6 the rounding of q_k itself (ε relative to 1 - q_k)
                // is amplified by g_k' = (1 - q)^{1/k - 1} / k.
                let conditioning = 4.0 * f64::EPSILON * (1.0 - theta).powi(1 - k as i32) / k as f64;
                let tol = if theta <= 0.6 {
                    1e-12
                } else {
                    1e-12 + conditioning
                };
                assert!((back - theta).abs() <= tol, "k={k} theta={theta}");
            }
        }
    }

    #[test]
    fn reg_inc_beta_known_values() {
        assert!((reg_inc_beta(0.37, 1.0, 1.0).unwrap() - 0.37).abs() < 1e-14);
        assert!((reg_inc_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-14);
        // 6(0.09)(0.49) + 4(0.027)(0.7) + 0.0081
        let v = reg_inc_beta(0.3, 2.0, 3.0).unwrap();
        assert!((v - 0.3483).abs() < 1e-12, "{v}");
        assert_eq!(reg_inc_beta(0.0, 2.0, 5.0).unwrap(), 0.0);
        assert_eq!(reg_inc_beta(1.0, 2.0, 5.0).unwrap(), 1.0);
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 1.0, -2.0).is_err());
        assert!(reg_inc_beta(1.5, 1.0, 2.0).is_err());
    }

    #[test]
    fn reg_inc_beta_matches_binomial_sums() {
        for a in 1..=8u64 {
            for b in 1..=8u64 {
                for i in 1..=9 {
                    let c = i as f64 / 10.0;
                    let got = reg_inc_beta(c, a as f64, b as f64).unwrap();
                    let want = binom_sum_oracle(c, a, b);
                    assert!(
                        (got - want).abs() < 1e-12,
                        "I_{c}({a},{b}) = {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn reg_inc_beta_reflection() {
        for &(c, a, b) in &[(0.2, 0.5, 3.0), (0.77, 12.0, 1.5), (0.041, 30.0, 700.0)] {
            let s = reg_inc_beta(c, a, b).unwrap() + reg_inc_beta(1.0 - c, b, a).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_mass_and_cdf() {
        assert_eq!(binom_pmf_cdf(10, 0.0, 0).unwrap(), (1.0, 1.0));
        let (pmf, _) = binom_pmf_cdf(4, 0.5, 2).unwrap();
        assert!((pmf - 0.375).abs() < 1e-14);
        let total: f64 = binom_pmf_vec(50, 0.19).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut last = 0.0;
        for r in 0..=50 {
            let (_, cdf) = binom_pmf_cdf(50, 0.19, r).unwrap();
            assert!(cdf >= last - 1e-15);
            last = cdf;
        }
        assert!((last - 1.0).abs() < 1e-12);
        assert!(binom_pmf_cdf(3, 0.5, 4).is_err());
        assert!(binom_pmf_cdf(3, 1.5, 1).is_err());
    }

    #[test]
    fn order_statistic_exceedance() {
        let v = order_stat_exceed(3, 3, 0.2).unwrap();
        assert!((v - 0.488).abs() < 1e-14);
        assert!((order_stat_exceed(1, 4, 0.3).unwrap() - 0.3f64.powi(4)).abs() < 1e-15);

        // brute force over the 8 outcomes of three fair coins
        let mut hits = 0;
        for mask in 0u32..8 {
            if mask.count_ones() >= 2 {
                hits += 1;
            }
        }
        assert!((order_stat_exceed(2, 3, 0.5).unwrap() - hits as f64 / 8.0).abs() < 1e-15);
        assert!(order_stat_exceed(0, 3, 0.5).is_err());
        assert!(order_stat_exceed(4, 3, 0.5).is_err());
    }

    #[test]
    fn order_statistic_slope_and_curvature_match_finite_differences() {
        let h = 1e-5;
        for k in 1..=5 {
            for r in 1..=k {
                for &t in &[0.1, 0.35, 0.8] {
                    let f = |x: f64| order_stat_exceed(r, k, x).unwrap();
                    let fd1 = (f(t + h) - f(t - h)) / (2.0 * h);
                    let fd2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
                    let d1 = order_stat_exceed_slope(r, k, t).unwrap();
                    let d2 = order_stat_exceed_curvature(r, k, t).unwrap();
                    assert!((fd1 - d1).abs() < 1e-7, "r={r} k={k} t={t}");
                    assert!((fd2 - d2).abs() < 1e-3, "r={r} k={k} t={t}: {fd2} vs {d2}");
                }
            }
        }
    }

    #[test]
    fn zero_truncated_binomial_mean() {
        assert!((ztbin_mean(1, 0.37).unwrap() - 1.0).abs() < 1e-15);
        assert!((ztbin_mean(5, 1.0).unwrap() - 5.0).abs() < 1e-14);
        assert!((ztbin_mean(2, 0.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        for &(nu, rho) in &[(7u32, 0.2), (30, 0.05), (12, 0.9)] {
            let closed = nu as f64 * rho / (1.0 - (1.0 - rho).powi(nu as i32));
            assert!((ztbin_mean(nu, rho).unwrap() - closed).abs() < 1e-12);
        }
        assert!(ztbin_mean(3, 0.0).is_err());
        assert!(ztbin_mean(0, 0.5).is_err());
    }

    #[test]
    fn root_finder_examples() {
        let r = solve_root(|x| x - 0.3, &RootSolveSpec::default()).unwrap();
        assert!((r - 0.3).abs() < 1e-10);
        let r = solve_root(|x| x * x - 2.0, &RootSolveSpec::new(1.0, 2.0)).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-8);
        let err = solve_root(|x| x + 1.0, &RootSolveSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn root_finder_reports_non_convergence() {
        let spec = RootSolveSpec {
            max_iter: 3,
            abs_tol: 1e-14,
            ..RootSolveSpec::default()
        };
        let err = solve_root(|x| (x - 0.123456789).powi(3), &spec).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn root_finder_handles_flat_secant_regions() {
        // steep on one side, flat on the other: secant alone would crawl
        let f = |x: f64| {
            if x < 0.7 {
                -1e-12 * (0.7 - x)
            } else {
                1e6 * (x - 0.7)
            }
        };
        let r = solve_root(f, &RootSolveSpec::default().with_tol(1e-12)).unwrap();
        assert!((r - 0.7).abs() < 1e-11);
    }
}
