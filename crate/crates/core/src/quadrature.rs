//! Deterministic quadrature for endpoint-singular integrands.
//!
//! The workhorse is a tanh-sinh (double exponential) rule on `[a, b]` whose
//! integrand receives the distances to both endpoints as well as the
//! abscissa, so that factors like `(b - x)^p` can be formed without
//! cancellation. [`integrate_singular_1d`] additionally absorbs algebraic
//! endpoint powers by the substitution `u = s^{1/(1+p)}`, which keeps the
//! rule effective for exponents close to `-1`.
//!
//! On top of it sit the two integral routes used as oracles: the Θ integral
//! with its delta resolved in the cosine variable, and the reduced
//! two-dimensional form of the three-fold Δ integral.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{domain, Error, Result};
use crate::specfun::{gamma_ln, gamma_ratio, hyp2f1};

// nodes reach within ~1e-167 of the endpoints
const T_MAX: f64 = 5.5;
const MAX_LEVEL: usize = 12;
const MIN_LEVEL: usize = 3;
/// Absolute agreement accepted by [`tanh_sinh`] near the subnormal range.
pub const ABS_FLOOR: f64 = 1e-300;

/// Tanh-sinh rule on `[a, b]`.
///
/// `f` is called as `f(x, x - a, b - x)`; the two distances are accurate
/// near the endpoints. Refinement halves the step until two successive
/// estimates agree to `tol` relative, or differ by less than
/// [`ABS_FLOOR`] (values that small carry no relative precision).
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let (a, b, sign) = if b < a { (b, a, -1.0) } else { (a, b, 1.0) };
    let reversed = sign < 0.0;
    let mut f = move |x: f64, dl: f64, dr: f64| if reversed { f(x, dr, dl) } else { f(x, dl, dr) };
    let width = b - a;
    let half = 0.5 * width;

    let mut term = |t: f64| -> Result<f64> {
        let s = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * s.abs()).exp();
        let near = half * 2.0 * e / (1.0 + e);
        if near <= 0.0 {
            return Ok(0.0);
        }
        let far = width - near;
        let w = half * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let v = if t >= 0.0 {
            f(b - near, far, near)
        } else {
            f(a + near, near, far)
        };
        let out = w * v;
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::QuadratureFailed {
                last: f64::NAN,
                previous: f64::NAN,
            })
        }
    };

    // level 0: unit step, also fixes how far out each tail matters
    let mut sum = term(0.0)?;
    let mut pos = Vec::with_capacity(7);
    let mut neg = Vec::with_capacity(7);
    let mut k = 1.0;
    while k <= T_MAX {
        pos.push(term(k)?);
        neg.push(term(-k)?);
        k += 1.0;
    }
    sum += pos.iter().sum::<f64>() + neg.iter().sum::<f64>();
    let cutoff = |terms: &[f64], total: f64| -> f64 {
        let mut last = 0usize;
        for (i, t) in terms.iter().enumerate() {
            if t.abs() > 1e-19 * total.abs() {
                last = i + 1;
            }
        }
        ((last + 1) as f64).min(T_MAX)
    };
    let hi = cutoff(&pos, sum);
    let lo = cutoff(&neg, sum);

    let mut h = 1.0;
    let mut estimate = sum;
    let mut previous = f64::NAN;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut t = h;
        while t <= hi {
            sum += term(t)?;
            t += 2.0 * h;
        }
        let mut t = -h;
        while t >= -lo {
            sum += term(t)?;
            t -= 2.0 * h;
        }
        previous = estimate;
        estimate = h * sum;
        let diff = (estimate - previous).abs();
        if level >= MIN_LEVEL && (diff <= tol * estimate.abs() || diff < ABS_FLOOR) {
            return Ok(sign * estimate);
        }
    }
    Err(Error::QuadratureFailed {
        last: estimate,
        previous,
    })
}

/// [`tanh_sinh`] on `[a, b]` for integrands that vary on the length
/// `scale` near `a`: the interval is cut at `a + scale·16^k`.
pub fn tanh_sinh_graded<F>(mut f: F, a: f64, b: f64, scale: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let width = b - a;
    if !(scale > 0.0) || scale >= 0.25 * width {
        return tanh_sinh(f, a, b, tol);
    }
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = scale;
    loop {
        let last = hi >= 0.25 * width;
        let top = if last { width } else { hi };
        // distances from a are exact offsets; the right distance is only
        // needed accurately on the last piece
        total += tanh_sinh(
            |_, dl, dr| {
                let off = lo + dl;
                let right = if last { dr } else { width - off };
                f(a + off, off, right)
            },
            lo,
            top,
            tol,
        )?;
        if last {
            return Ok(total);
        }
        lo = hi;
        hi *= 16.0;
    }
}

/// `∫₀¹ u^p (1-u)^q g(u) du` with integrable endpoint powers.
///
/// `smooth_factor` is called as `g(u, 1 - u)` with both arguments accurate.
#[derive(Clone, Copy)]
pub struct SingularIntegral1D<F> {
    pub exponent_left: f64,
    pub exponent_right: f64,
    pub smooth_factor: F,
}

impl<F> SingularIntegral1D<F>
where
    F: Fn(f64, f64) -> f64,
{
    pub fn new(exponent_left: f64, exponent_right: f64, smooth_factor: F) -> Result<Self> {
        if !(exponent_left > -1.0 && exponent_right > -1.0) {
            return domain(format!(
                "endpoint exponents must exceed -1, got ({exponent_left}, {exponent_right})"
            ));
        }
        Ok(Self {
            exponent_left,
            exponent_right,
            smooth_factor,
        })
    }

    fn full(&self, u: f64, omu: f64) -> f64 {
        u.powf(self.exponent_left) * omu.powf(self.exponent_right) * (self.smooth_factor)(u, omu)
    }
}

/// Integrates a [`SingularIntegral1D`] to relative tolerance `tol`.
pub fn integrate_singular_1d<F>(integral: &SingularIntegral1D<F>, tol: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_singular_1d_split(integral, &[], tol)
}

/// As [`integrate_singular_1d`], with extra interior breakpoints (sorted or
/// not, duplicates ignored) placed at nearly singular features.
pub fn integrate_singular_1d_split<F>(
    integral: &SingularIntegral1D<F>,
    breakpoints: &[f64],
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < 1.0)
        .collect();
    if cuts.is_empty() {
        cuts.push(0.5);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let p = integral.exponent_left;
    let q = integral.exponent_right;
    let g = &integral.smooth_factor;

    // [0, first]: u = first * s^{1/(1+p)}
    let first = cuts[0];
    let kappa = 1.0 / (1.0 + p);
    let left = tanh_sinh(
        |_, s, _| {
            let u = first * s.powf(kappa);
            (1.0 - u).powf(q) * g(u, 1.0 - u)
        },
        0.0,
        1.0,
        tol,
    )? * first.powf(1.0 + p)
        / (1.0 + p);

    let mut middle = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        middle += tanh_sinh(
            |u, _, dr| {
                let omu = (1.0 - hi) + dr;
                integral.full(u, omu)
            },
            lo,
            hi,
            tol,
        )?;
    }

    // [last, 1]: 1 - u = (1 - last) * s^{1/(1+q)}
    let last = *cuts.last().unwrap();
    let span = 1.0 - last;
    let kappa = 1.0 / (1.0 + q);
    let right = tanh_sinh(
        |_, s, _| {
            let omu = span * s.powf(kappa);
            let u = 1.0 - omu;
            u.powf(p) * g(u, omu)
        },
        0.0,
        1.0,
        tol,
    )? * span.powf(1.0 + q)
        / (1.0 + q);

    Ok(left + middle + right)
}

/// `|S^{k}|`, the surface area of the unit sphere in `R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    let d = (k + 1) as f64;
    2.0 * PI.powf(0.5 * d) / crate::specfun::gamma(0.5 * d)
}

fn check_theta_params(n: usize, alpha: f64, lambda: f64) -> Result<()> {
    let nf = n as f64;
    if n < 2 {
        return domain(format!("dimension n must be >= 2, got {n}"));
    }
    if !(alpha > 0.0 && lambda > 0.0) {
        return domain(format!("exponents must be positive, got alpha={alpha}, lambda={lambda}"));
    }
    if !(alpha + lambda > nf - 1.0) {
        return domain(format!(
            "alpha + lambda > n - 1 required for convergence, got {}",
            alpha + lambda
        ));
    }
    Ok(())
}

/// Θ_n(|w|) by direct quadrature: the delta is resolved in the cosine
/// variable `u* = (1+|w|²)/(2|w| r)` and the remaining integral over
/// `r >= r₀ = (1+|w|²)/(2|w|)` is mapped to `[0, 1]` by
/// `r = r₀ + r₀ t/(1-t)`.
pub fn theta_oracle(n: usize, alpha: f64, lambda: f64, wnorm: f64, tol: f64) -> Result<f64> {
    check_theta_params(n, alpha, lambda)?;
    if !(wnorm > 0.0) || !wnorm.is_finite() {
        return domain(format!("theta_oracle requires |w| > 0, got {wnorm}"));
    }
    let nf = n as f64;
    let sigma = alpha + lambda + 2.0 - nf;
    let r0 = (1.0 + wnorm * wnorm) / (2.0 * wnorm);
    let gap = (1.0 - wnorm) * (1.0 + wnorm) / (2.0 * wnorm);
    let d = gap * gap; // r0^2 - 1 without cancellation
    let s = r0;
    let on_unit_sphere = d == 0.0;

    let half_pow = 0.5 * (nf - 3.0);
    let mut exp_left = half_pow;
    if on_unit_sphere {
        exp_left -= 0.5 * alpha;
        if exp_left <= -1.0 {
            return Err(Error::DivergentAtOne(format!(
                "Theta_{n} at |w| = 1 diverges for alpha = {alpha}"
            )));
        }
    }
    let exp_right = alpha + lambda - nf;

    let smooth = |t: f64, omt: f64| -> f64 {
        let p = 2.0 * r0 * omt + s * t;
        let rt = r0 * omt + s * t;
        let nn = if on_unit_sphere {
            s * p
        } else {
            d * omt * omt + s * t * p
        };
        s * (s * p).powf(half_pow) * rt.powf(1.0 - lambda) * nn.powf(-0.5 * alpha)
    };
    let integral = SingularIntegral1D::new(exp_left, exp_right, smooth)?;

    // (r^2 - 1) is nearly singular at t ~ d / (2 r0 s) when |w| is close to 1
    let mut cuts = Vec::new();
    if !on_unit_sphere {
        let mut tb = d / (2.0 * r0 * s);
        while tb < 0.25 {
            cuts.push(tb);
            tb *= 16.0;
        }
    }
    let value = integrate_singular_1d_split(&integral, &cuts, tol)?;
    let pref = sphere_area(n - 2) * wnorm.powf(sigma - 1.0) / 2.0;
    Ok(pref * value)
}

/// Parameters of the three-fold form `Δ_n(w)` with exponents `α₁` on `x`,
/// `α₂` on `z` and `λ` on the distinguished variable `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta3Params {
    pub n: usize,
    pub a1: f64,
    pub a2: f64,
    pub lambda: f64,
}

impl Delta3Params {
    pub fn sigma(&self) -> f64 {
        2.0 + self.a1 + self.a2 + self.lambda - 2.0 * self.n as f64
    }

    fn check(&self) -> Result<()> {
        let nf = self.n as f64;
        if self.n < 2 {
            return domain(format!("dimension n must be >= 2, got {}", self.n));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.lambda > 0.0) {
            return domain("exponents must be positive");
        }
        if !(self.a1 < nf && self.a2 < nf) {
            return domain("alpha_1, alpha_2 < n required for local integrability");
        }
        if !(self.lambda + self.a2 > nf - 1.0) {
            return domain("lambda + alpha_2 > n - 1 required");
        }
        Ok(())
    }
}

/// The `u`-integral kernel of the reduced Δ integrand.
#[derive(Clone, Copy)]
enum InnerKernel {
    /// `B(b, (n-1)/2) ₂F₁(α₂/2, b; c; β)`.
    Exact { a: f64, b: f64, c: f64, coef: f64 },
    /// `Γ(b)Γ((n-1+2γ-α₂)/2)/Γ((λ+2γ)/2) (1-β)^{-γ}`.
    Majorant { gamma: f64, coef: f64 },
}

impl InnerKernel {
    fn eval(&self, beta: f64, one_minus_beta: f64) -> Result<f64> {
        match *self {
            InnerKernel::Exact { a, b, c, coef } => {
                Ok(coef * hyp2f1(a, b, c, beta.min(1.0), one_minus_beta)?)
            }
            InnerKernel::Majorant { gamma, coef } => Ok(coef * one_minus_beta.powf(-gamma)),
        }
    }
}

/// First error raised inside a quadrature callback.
struct ErrorSlot(std::cell::RefCell<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        Self(std::cell::RefCell::new(None))
    }

    fn take(&self, r: Result<f64>) -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self.0.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn delta3_integrate(p: &Delta3Params, kernel: InnerKernel, d: f64, tol: f64) -> Result<f64> {
    let nf = p.n as f64;
    let sigma = p.sigma();
    let s_n = sphere_area(p.n - 2);
    let h = (1.0 + d * d) / (2.0 * d);
    // s_n from the reduced integrand and s_n from the polar Jacobian
    let pref = 2f64.powf(p.lambda + p.a2 - nf - 1.0) * s_n * d.powf(sigma) * s_n;
    let inner_tol = 0.1 * tol;
    let e_s = p.lambda + p.a2 - 1.0;
    let e_a = nf - 1.0 - p.lambda - p.a2;
    let sin_pow = nf - 2.0;

    // x-integrand at (s, θ) with s^{n-1} sin^{n-2}θ included; `gap_d` is
    // |s - d|, `hs` is sin(θ/2) and `plane` is 1 + d² - 2sd cos θ, all
    // supplied accurately by the caller
    let point = |s: f64, gap_d: f64, theta: f64, hs: f64, plane: f64| -> Result<f64> {
        let q = gap_d.hypot(2.0 * (s * d).sqrt() * hs);
        // A = 1 + q² + s² and B = 1 + q² scaled by mx² to survive huge s
        let mx = s.max(q).max(1.0);
        let (u, qs, ss) = (1.0 / mx, q / mx, s / mx);
        let b_sc = u * u + qs * qs;
        let a_sc = b_sc + ss * ss;
        let ratio = plane * u * u / a_sc;
        // below the smallest normal the integrand's neighbourhood has no weight
        let omb = (ratio * ratio).max(f64::MIN_POSITIVE);
        let beta = (4.0 * ss * ss * b_sc / (a_sc * a_sc)).min(1.0);
        let k = kernel.eval(beta, omb)?;
        let ln_pow = e_s * s.ln() - p.a1 * q.ln() + e_a * (2.0 * mx.ln() + a_sc.ln());
        Ok(ln_pow.exp() * theta.sin().powf(sin_pow) * k)
    };

    // θ-integral at fixed s; `gap_h` = h - s (signed)
    let inner = |s: f64, gap_d: f64, gap_h: f64| -> Result<f64> {
        let slot = ErrorSlot::new();
        let mut scale = gap_d / (s * d).sqrt();
        if gap_h > 0.0 {
            scale = scale.min((gap_h / s).sqrt());
        }
        let total = if gap_h > 0.0 {
            tanh_sinh_graded(
                |th, off, _| {
                    let hs = (0.5 * off).sin();
                    let plane = 2.0 * d * (gap_h + 2.0 * s * hs * hs);
                    slot.take(point(s, gap_d, th, hs, plane))
                },
                0.0,
                PI,
                scale,
                inner_tol,
            )?
        } else {
            // 1 - cos θ* = (s - h)/s, kept exact for s just above h
            let vers = (-gap_h / s).min(2.0);
            let cos_star = 1.0 - vers;
            let star = 2.0 * (0.5 * vers).sqrt().asin();
            let sin_star = (vers * (2.0 - vers)).sqrt();
            // plane in terms of the signed offset δ = θ - θ*
            let plane_at = |delta: f64| {
                let hd = (0.5 * delta).sin();
                2.0 * d * s * (cos_star * 2.0 * hd * hd + sin_star * delta.sin())
            };
            let left = tanh_sinh_graded(
                |th, off, to_star| {
                    let hs = (0.5 * off).sin();
                    slot.take(point(s, gap_d, th, hs, plane_at(-to_star)))
                },
                0.0,
                star,
                scale,
                inner_tol,
            )?;
            let right = tanh_sinh(
                |th, from_star, _| {
                    let hs = (0.5 * th).sin();
                    slot.take(point(s, gap_d, th, hs, plane_at(from_star)))
                },
                star,
                PI,
                inner_tol,
            )?;
            left + right
        };
        slot.check()?;
        Ok(total)
    };

    let slot = ErrorSlot::new();
    let mut total = 0.0;
    let (lo_cut, hi_cut) = (d.min(h), d.max(h));
    // h - d without cancellation
    let hd = (1.0 - d) * (1.0 + d) / (2.0 * d);
    let below = d <= 1.0;
    total += tanh_sinh(
        |s, _, to_cut| {
            let (gd, gh) = if below { (to_cut, hd + to_cut) } else { (to_cut - hd, to_cut) };
            slot.take(inner(s, gd, gh))
        },
        0.0,
        lo_cut,
        tol,
    )?;
    if hi_cut > lo_cut {
        total += tanh_sinh(
            |s, from_lo, to_hi| {
                let (gd, gh) = if below { (from_lo, to_hi) } else { (to_hi, -from_lo) };
                slot.take(inner(s, gd, gh))
            },
            lo_cut,
            hi_cut,
            tol,
        )?;
    }
    total += tanh_sinh(
        |s, from_hi, _| {
            let (gd, gh) = if below { (from_hi + hd, -from_hi) } else { (from_hi, -(from_hi - hd)) };
            slot.take(inner(s, gd, gh))
        },
        hi_cut,
        2.0 * hi_cut,
        tol,
    )?;
    // tail: s = 2 hi_cut / v, ds = s dv / v
    let far = 2.0 * hi_cut;
    total += tanh_sinh(
        |v, _, _| {
            let s = far / v;
            if !s.is_finite() {
                return 0.0;
            }
            slot.take(inner(s, s - d, h - s)) * s / v
        },
        0.0,
        1.0,
        tol,
    )?;
    slot.check()?;
    Ok(pref * total)
}

fn delta3_norm(n: usize, w: &[f64]) -> Result<f64> {
    if w.len() != n {
        return domain(format!("w has {} components, expected {n}", w.len()));
    }
    let d = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(d > 0.0) || !d.is_finite() {
        return domain("delta3 requires w != 0");
    }
    Ok(d)
}

/// `Δ_n(w)` through its reduced `n`-dimensional integral with the interior
/// `₂F₁`, itself reduced to `(s, θ)` by rotation about `w`.
pub fn delta3_reduced(n: usize, a1: f64, a2: f64, lambda: f64, w: &[f64], tol: f64) -> Result<f64> {
    let p = Delta3Params { n, a1, a2, lambda };
    p.check()?;
    let d = delta3_norm(n, w)?;
    delta3_reduced_at(&p, d, tol)
}

/// `Δ_n` as a function of `d = |w|`.
pub fn delta3_reduced_at(p: &Delta3Params, d: f64, tol: f64) -> Result<f64> {
    p.check()?;
    let nf = p.n as f64;
    let a = 0.5 * p.a2;
    let b = 0.5 * (p.lambda + p.a2 - nf + 1.0);
    let c = 0.5 * (p.lambda + p.a2);
    let coef = gamma_ratio(&[b, 0.5 * (nf - 1.0)], &[c]);
    delta3_integrate(p, InnerKernel::Exact { a, b, c, coef }, d, tol)
}

/// Open window `(lo, hi)` for `2γ` in the Step-2 estimate, or the name of
/// the binding constraint when it is empty.
pub fn step2_window(n: usize, a1: f64, a2: f64, lambda: f64) -> Result<(f64, f64)> {
    let nf = n as f64;
    let uppers = [
        (nf - a1, "n - alpha_1"),
        (a1 + a2 + lambda - 2.0 * (nf - 1.0), "alpha_1 + alpha_2 + lambda - 2(n-1)"),
        (1.0, "1"),
        (a2, "alpha_2"),
    ];
    let lowers = [
        (1.0 - a2, "1 - alpha_2"),
        (a2 - (nf - 1.0), "alpha_2 - (n-1)"),
        (0.0, "0"),
    ];
    let (hi, hi_name) = uppers
        .iter()
        .copied()
        .fold((f64::INFINITY, ""), |acc, x| if x.0 < acc.0 { x } else { acc });
    let (lo, lo_name) = lowers
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, ""), |acc, x| if x.0 > acc.0 { x } else { acc });
    if !(hi > lo) {
        return domain(format!(
            "empty gamma window: upper bound {hi_name} = {hi} <= lower bound {lo_name} = {lo}"
        ));
    }
    Ok((lo, hi))
}

/// The Step-2 majorant of `Δ_n(w)`: `(1 - βu)^{-α₂/2}` replaced by
/// `(1-β)^{-γ}(1-u)^{-(α₂-2γ)/2}` before the `u`-integration.
pub fn delta3_step2_regularized(
    n: usize,
    a1: f64,
    a2: f64,
    lambda: f64,
    gamma: f64,
    w: &[f64],
    tol: f64,
) -> Result<f64> {
    let p = Delta3Params { n, a1, a2, lambda };
    p.check()?;
    let (lo, hi) = step2_window(n, a1, a2, lambda)?;
    if !(2.0 * gamma > lo && 2.0 * gamma < hi) {
        return domain(format!("2 gamma = {} outside the window ({lo}, {hi})", 2.0 * gamma));
    }
    let d = delta3_norm(n, w)?;
    let nf = n as f64;
    let b = 0.5 * (lambda + a2 - nf + 1.0);
    let coef = gamma_ratio(&[b, 0.5 * (nf - 1.0 + 2.0 * gamma - a2)], &[0.5 * (lambda + 2.0 * gamma)]);
    delta3_integrate(&p, InnerKernel::Majorant { gamma, coef }, d, tol)
}

/// `ln B(a, b)` helper for tests and oracles.
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    Ok(gamma_ln(a)? + gamma_ln(b)? - gamma_ln(a + b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tanh_sinh_polynomial_and_reversed() {
        let v = tanh_sinh(|x, _, _| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert_relative_eq!(v, 9.0, max_relative = 1e-12);
        let v = tanh_sinh(|x, _, _| x * x, 3.0, 0.0, 1e-12).unwrap();
        assert_relative_eq!(v, -9.0, max_relative = 1e-12);
    }

    #[test]
    fn beta_half_half_is_pi() {
        let i = SingularIntegral1D::new(-0.5, -0.5, |_, _| 1.0).unwrap();
        assert_relative_eq!(integrate_singular_1d(&i, 1e-12).unwrap(), PI, max_relative = 1e-12);
    }

    #[test]
    fn strong_endpoint_singularity() {
        // ∫ u^{-0.97} du = 1/0.03
        let i = SingularIntegral1D::new(-0.97, 0.0, |_, _| 1.0).unwrap();
        assert_relative_eq!(integrate_singular_1d(&i, 1e-12).unwrap(), 1.0 / 0.03, max_relative = 1e-10);
    }

    #[test]
    fn rejects_nonintegrable_exponents() {
        assert!(SingularIntegral1D::new(-1.0, 0.0, |_, _| 1.0).is_err());
    }

    #[test]
    fn step2_window_cases() {
        let (lo, hi) = step2_window(3, 1.5, 2.2, 1.0).unwrap();
        assert_relative_eq!(lo, 0.2, max_relative = 1e-12);
        assert_relative_eq!(hi, 0.7, max_relative = 1e-12);
        let err = step2_window(3, 2.9, 2.9, 0.1).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("n - alpha_1")));
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(0), 2.0, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(1), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-14);
    }
    #[test]
    fn u_integral_matches_hypergeometric() {
        let (n, a, l, beta) = (3.0, 1.2, 1.4, 0.9);
        let p = 0.5 * (a + l - n + 1.0) - 1.0;
        let i = SingularIntegral1D::new(p, 0.5 * (n - 3.0), |u, _| (1.0 - beta * u).powf(-0.5 * a)).unwrap();
        let got = integrate_singular_1d(&i, 1e-12).unwrap();
        let b = 0.5 * (a + l - n + 1.0);
        let expect = gamma_ratio(&[b, 0.5 * (n - 1.0)], &[0.5 * (a + l)])
            * hyp2f1(0.5 * a, b, 0.5 * (a + l), beta, 1.0 - beta).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-9);
    }

    #[test]
    fn theta_oracle_matches_closed_form() {
        use crate::potentials::{elliptic_theta_2d, theta_closed_form};
        let cases = [
            (3, 1.2, 1.4, 2.0),
            (3, 1.2, 1.4, 1.0),
            (3, 1.2, 1.4, 0.999),
            (2, 0.9, 0.2, 0.01),
            (4, 0.3, 3.2, 100.0),
            (5, 3.6, 2.0, 1.001),
            (5, 0.4, 3.7, 0.5),
        ];
        for (n, a, l, w) in cases {
            let o = theta_oracle(n, a, l, w, 1e-10).unwrap();
            let c = theta_closed_form(n, a, l, w).unwrap();
            assert_relative_eq!(o, c, max_relative = 1e-7);
        }
        let o = theta_oracle(2, 1.0, 1.0, 3.0, 1e-10).unwrap();
        assert_relative_eq!(o, elliptic_theta_2d(3.0).unwrap(), max_relative = 1e-7);
    }

    #[test]
    fn theta_oracle_small_w_below_bound() {
        use crate::potentials::theta_upper_bound;
        let o = theta_oracle(3, 1.2, 1.4, 1e-3, 1e-10).unwrap();
        assert!(o > 0.0 && o < theta_upper_bound(3, 1.2, 1.4, 1e-3).unwrap());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(20))]
        #[test]
        fn beta_integrals(a in 0.05f64..3.0, b in 0.05f64..3.0) {
            let i = SingularIntegral1D::new(a - 1.0, b - 1.0, |_, _| 1.0).unwrap();
            let got = integrate_singular_1d(&i, 1e-12).unwrap();
            let expect = ln_beta(a, b).unwrap().exp();
            proptest::prop_assert!((got - expect).abs() <= 1e-10 * expect);
        }
    }
    #[test]
    fn delta3_swap_symmetry() {
        let tol = 1e-8;
        let w = [2.0, 0.0, 0.0];
        let a = delta3_reduced(3, 1.3, 2.2, 1.6, &w, tol).unwrap();
        let b = delta3_reduced(3, 2.2, 1.3, 1.6, &w, tol).unwrap();
        assert!((a - b).abs() <= 2.0 * tol * a, "{a} vs {b}");
    }

    #[test]
    fn delta3_uniform_at_unit_w_is_finite() {
        let v = delta3_reduced(3, 2.0, 2.0, 2.0, &[1.0, 0.0, 0.0], 1e-7).unwrap();
        assert!(v.is_finite() && v > 0.0, "{v}");
    }

    #[test]
    fn delta3_depends_on_norm_only() {
        let tol = 1e-8;
        let a = delta3_reduced(3, 1.5, 1.6, 1.7, &[0.0, 0.7, 0.0], tol).unwrap();
        let b = delta3_reduced(3, 1.5, 1.6, 1.7, &[0.7f64.sqrt() * 0.7f64.sqrt(), 0.0, 0.0], tol).unwrap();
        assert!((a - b).abs() <= 2.0 * tol * a);
    }

    #[test]
    fn step2_majorant_dominates() {
        let (lo, hi) = step2_window(3, 1.5, 2.2, 1.0).unwrap();
        let g = 0.25 * (lo + hi);
        let w = [1.0, 0.0, 0.0];
        let maj = delta3_step2_regularized(3, 1.5, 2.2, 1.0, g, &w, 1e-7).unwrap();
        let red = delta3_reduced(3, 1.5, 2.2, 1.0, &w, 1e-7).unwrap();
        assert!(maj.is_finite() && maj >= red, "{maj} < {red}");
    }
}
