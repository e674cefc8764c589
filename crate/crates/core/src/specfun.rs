//! Special functions used by the closed forms: log-Gamma, digamma, Beta,
//! the Gauss hypergeometric function on `[0, 1]` and the complete elliptic
//! integral of the first kind.
//!
//! `₂F₁` is evaluated by its power series for `x <= 1/2` and through the
//! `1 - x` connection formulas above that. When `c - a - b` is an integer
//! the connection coefficients have poles and the logarithmic limit
//! formulas (digamma series) take over. Within `1e-4` of an integer the
//! value is obtained by five-point Lagrange interpolation in `c` between
//! the exact logarithmic node and regular nodes at a safe distance, which
//! avoids the `eps / |c - a - b - m|` cancellation of the regular formula.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `|c - a - b - round(c - a - b)|` below which the logarithmic regime flag
/// is raised.
pub const LOG_REGIME_TOL: f64 = 1e-6;

const INTERP_BAND: f64 = 1e-4;
const INTERP_STEP: f64 = 2e-4;
const SERIES_MAX_TERMS: usize = 200_000;

/// `sin(pi x)` with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r < 0.5 {
        (PI * r).sin()
    } else if r < 1.5 {
        -(PI * (r - 1.0)).sin()
    } else {
        (PI * (r - 2.0)).sin()
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// `ln Γ(z)` for `z > 0` by the Lanczos approximation (g = 7, 9 terms).
pub fn gamma_ln(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return domain(format!("gamma_ln requires z > 0, got {z}"));
    }
    Ok(ln_gamma_pos(z))
}

fn ln_gamma_pos(z: f64) -> f64 {
    if z < 0.5 {
        return ln_gamma_pos(z + 1.0) - z.ln();
    }
    let z = z - 1.0;
    let mut x = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `(ln |Γ(x)|, sign Γ(x))` for any real `x` that is not a pole.
fn ln_gamma_signed(x: f64) -> (f64, f64) {
    if x > 0.0 {
        return (ln_gamma_pos(x), 1.0);
    }
    // reflection: Γ(x) Γ(1-x) = π / sin(πx)
    let s = sin_pi(x);
    let (lg, _) = ln_gamma_signed(1.0 - x);
    ((PI / s.abs()).ln() - lg, s.signum())
}

/// Γ(x) for real `x`; `inf` at the poles.
pub fn gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::INFINITY;
    }
    let (lg, s) = ln_gamma_signed(x);
    s * lg.exp()
}

/// 1/Γ(x); zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    let (lg, s) = ln_gamma_signed(x);
    s * (-lg).exp()
}

/// `∏Γ(num) / ∏Γ(den)` evaluated in log space. Poles in `den` give 0.
pub fn gamma_ratio(num: &[f64], den: &[f64]) -> f64 {
    if den.iter().any(|&d| is_nonpositive_integer(d)) {
        return 0.0;
    }
    if num.iter().any(|&d| is_nonpositive_integer(d)) {
        return f64::INFINITY;
    }
    let mut lg = 0.0;
    let mut sign = 1.0;
    for &x in num {
        let (l, s) = ln_gamma_signed(x);
        lg += l;
        sign *= s;
    }
    for &x in den {
        let (l, s) = ln_gamma_signed(x);
        lg -= l;
        sign *= s;
    }
    sign * lg.exp()
}

/// Beta function `B(a, b) = Γ(a)Γ(b)/Γ(a+b)` for positive arguments.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("beta requires positive arguments, got ({a}, {b})"));
    }
    Ok((ln_gamma_pos(a) + ln_gamma_pos(b) - ln_gamma_pos(a + b)).exp())
}

/// Digamma ψ(x) for real `x` away from the poles.
pub fn digamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::NAN;
    }
    if x < 0.5 {
        // ψ(1-x) - ψ(x) = π cot(πx)
        let s = sin_pi(x);
        let c = sin_pi(x + 0.5);
        return digamma(1.0 - x) - PI * c / s;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: 1/12, -1/120, 1/252, -1/240, 1/132, -691/32760
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Parameters of `₂F₁(a, b; c; x)` restricted to the real interval `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeomParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x: f64,
}

impl HypergeomParams {
    pub fn new(a: f64, b: f64, c: f64, x: f64) -> Result<Self> {
        if !(c > 0.0) {
            return domain(format!("2F1 requires c > 0, got {c}"));
        }
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("2F1 argument must lie in [0, 1], got {x}"));
        }
        Ok(Self { a, b, c, x })
    }

    /// True when `c - a - b` sits within [`LOG_REGIME_TOL`] of a nonpositive
    /// integer.
    pub fn log_regime(&self) -> bool {
        let d = self.c - self.a - self.b;
        let m = d.round();
        m <= 0.0 && (d - m).abs() < LOG_REGIME_TOL
    }
}

/// `₂F₁(a, b; c; x)` for `x ∈ [0, 1]`.
pub fn gauss_2f1(p: &HypergeomParams) -> Result<f64> {
    hyp2f1(p.a, p.b, p.c, p.x, 1.0 - p.x)
}

/// `₂F₁(a, b; c; x)` with the complement `1 - x` supplied by the caller.
///
/// Near `x = 1` the complement usually has a cancellation-free closed form
/// (e.g. `1 - β(w) = ((1-|w|²)/(1+|w|²))²`), and the connection formulas are
/// driven by it.
pub fn hyp2f1(a: f64, b: f64, c: f64, x: f64, one_minus_x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || one_minus_x < 0.0 {
        return domain(format!("2F1 argument must lie in [0, 1], got {x}"));
    }
    if is_nonpositive_integer(c) {
        return domain(format!("2F1 undefined for c = {c}"));
    }
    // symmetric in (a, b): canonical order makes F(a,b) == F(b,a) exact
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if x == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    if is_nonpositive_integer(a) || is_nonpositive_integer(b) {
        return Ok(series(a, b, c, x));
    }
    if one_minus_x == 0.0 {
        return gauss_summation(a, b, c);
    }
    if x <= 0.5 {
        return Ok(series(a, b, c, x));
    }
    Ok(near_one(a, b, c, one_minus_x))
}

/// `₂F₁(a, b; c; 1) = Γ(c)Γ(c-a-b) / (Γ(c-a)Γ(c-b))`, valid for `c-a-b > 0`.
pub fn gauss_summation(a: f64, b: f64, c: f64) -> Result<f64> {
    let d = c - a - b;
    if !(d > 0.0) {
        return Err(Error::DivergentAtOne(format!(
            "2F1({a}, {b}; {c}; 1) diverges: c - a - b = {d} <= 0"
        )));
    }
    Ok(gamma_ratio(&[c, d], &[c - a, c - b]))
}

/// Direct power series. Converges for `|x| < 1`; used for `x <= 1/2` and
/// for the `1 - x` series of the connection formulas.
pub(crate) fn series(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut small = 0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * x;
        sum += term;
        if term == 0.0 {
            break;
        }
        if term.abs() <= 1e-17 * sum.abs() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    sum
}

/// Regular `1 - x` connection formula; requires non-integer `c - a - b`.
pub(crate) fn connection(a: f64, b: f64, c: f64, y: f64) -> f64 {
    let d = c - a - b;
    let ca = gamma_ratio(&[c, d], &[c - a, c - b]);
    let cb = gamma_ratio(&[c, -d], &[a, b]);
    let mut value = 0.0;
    if ca != 0.0 {
        value += ca * series(a, b, 1.0 - d, y);
    }
    if cb != 0.0 {
        value += cb * y.powf(d) * series(c - a, c - b, 1.0 + d, y);
    }
    value
}

/// Logarithmic connection formula for `c = a + b + m`, `m` a nonnegative
/// integer.
pub(crate) fn log_connection(a: f64, b: f64, m: u32, y: f64) -> f64 {
    let mf = m as f64;
    let c = a + b + mf;
    let mut finite = 0.0;
    if m > 0 {
        let lead = gamma_ratio(&[mf, c], &[a + mf, b + mf]);
        let mut term = 1.0;
        let mut s = 0.0;
        for k in 0..m {
            s += term;
            let kf = k as f64;
            term *= (a + kf) * (b + kf) / ((kf + 1.0) * (1.0 - mf + kf)) * y;
        }
        finite = lead * s;
    }
    let lead = gamma_ratio(&[c], &[a, b]);
    if lead == 0.0 {
        return finite;
    }
    let ln_y = y.ln();
    // running ψ(k+1), ψ(k+m+1), ψ(a+k+m), ψ(b+k+m)
    let mut psi_k1 = digamma(1.0);
    let mut psi_km1 = digamma(mf + 1.0);
    let mut psi_a = digamma(a + mf);
    let mut psi_b = digamma(b + mf);
    // (a+m)_k (b+m)_k / (k! (k+m)!) y^k, starting at 1/m!
    let mut coef = rgamma(mf + 1.0);
    let mut sum = 0.0;
    let mut small = 0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        let t = coef * (ln_y - psi_k1 - psi_km1 + psi_a + psi_b);
        sum += t;
        if t.abs() <= 1e-17 * sum.abs() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        coef *= (a + mf + kf) * (b + mf + kf) / ((kf + 1.0) * (kf + mf + 1.0)) * y;
        psi_k1 += 1.0 / (kf + 1.0);
        psi_km1 += 1.0 / (kf + mf + 1.0);
        psi_a += 1.0 / (a + mf + kf);
        psi_b += 1.0 / (b + mf + kf);
        if coef == 0.0 {
            break;
        }
    }
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    finite - sign * lead * y.powi(m as i32) * sum
}

/// Evaluation for `x > 1/2` given `y = 1 - x`.
fn near_one(a: f64, b: f64, c: f64, y: f64) -> f64 {
    let d = c - a - b;
    let m = d.round();
    let scale = 1.0 + a.abs() + b.abs() + c.abs();
    let offset = d - m;
    if offset.abs() <= 8.0 * f64::EPSILON * scale {
        return exact_integer_case(a, b, m as i64, y);
    }
    if offset.abs() < INTERP_BAND {
        // five nodes c_j = a + b + m + j h, j = -2..=2; the j = 0 node uses
        // the exact logarithmic formula
        let s = offset / INTERP_STEP;
        let mut value = 0.0;
        for j in -2i32..=2 {
            let node = if j == 0 {
                exact_integer_case(a, b, m as i64, y)
            } else {
                let cj = a + b + m + j as f64 * INTERP_STEP;
                connection(a, b, cj, y)
            };
            let mut weight = 1.0;
            for i in -2i32..=2 {
                if i != j {
                    weight *= (s - i as f64) / (j - i) as f64;
                }
            }
            value += weight * node;
        }
        return value;
    }
    connection(a, b, c, y)
}

fn exact_integer_case(a: f64, b: f64, m: i64, y: f64) -> f64 {
    if m >= 0 {
        log_connection(a, b, m as u32, y)
    } else {
        // Euler transformation: F(a,b;c;x) = (1-x)^{c-a-b} F(c-a, c-b; c; x)
        let c = a + b + m as f64;
        let (a2, b2) = (c - a, c - b);
        if is_nonpositive_integer(a2) || is_nonpositive_integer(b2) {
            return y.powi(m as i32) * series(a2, b2, c, 1.0 - y);
        }
        y.powi(m as i32) * log_connection(a2, b2, (-m) as u32, y)
    }
}

/// Complete elliptic integral of the first kind `K(k)`, `0 <= k < 1`, by the
/// arithmetic-geometric mean.
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return domain(format!("elliptic K requires 0 <= k < 1, got {k}"));
    }
    Ok(elliptic_k_complement(((1.0 - k) * (1.0 + k)).sqrt()))
}

/// `K` as a function of the complementary modulus `k' = sqrt(1 - k²)`.
pub fn elliptic_k_complement(kp: f64) -> f64 {
    if kp <= 0.0 {
        return f64::INFINITY;
    }
    let (mut a, mut g) = (1.0_f64, kp);
    for _ in 0..64 {
        if (a - g).abs() <= 1e-16 * a {
            break;
        }
        let an = 0.5 * (a + g);
        g = (a * g).sqrt();
        a = an;
    }
    PI / (2.0 * a)
}
