//! Parameter bookkeeping and the closed-form quantities: Riesz constants,
//! the Θ_n hypergeometric closed form and its uniform bound, the 2D
//! elliptic form, and hypothesis validation for Theorems 1 to 4.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::{elliptic_k_complement, gamma_ratio, hyp2f1};

/// Margin applied to every strict inequality in [`validate_spec`].
pub const STRICT_MARGIN: f64 = 1e-9;

/// Dimensions and exponents of an `m`-fold surface convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionSpec {
    pub m: usize,
    pub n: usize,
    pub alphas: Vec<f64>,
    #[serde(default = "one")]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

impl ConvolutionSpec {
    pub fn new(n: usize, alphas: Vec<f64>, tau: f64) -> Result<Self> {
        let m = alphas.len();
        if m < 2 {
            return domain(format!("need at least two factors, got m = {m}"));
        }
        if n < 2 {
            return domain(format!("dimension n must be >= 2, got {n}"));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return domain(format!("tau must be finite and >= 0, got {tau}"));
        }
        for (k, &a) in alphas.iter().enumerate() {
            if !(a > 0.0 && a < n as f64) {
                return domain(format!("alpha_{} = {a} outside (0, n = {n})", k + 1));
            }
        }
        Ok(Self { m, n, alphas, tau })
    }

    /// `α_k = n - 1` for all `k`.
    pub fn uniform(n: usize, m: usize, tau: f64) -> Result<Self> {
        Self::new(n, vec![(n - 1) as f64; m], tau)
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// `ρ = 2 + α - (m-1)n`, the homogeneous exponent of `|w|`.
    pub fn rho(&self) -> f64 {
        2.0 + self.alpha_sum() - ((self.m - 1) * self.n) as f64
    }

    /// `σ = α + λ + 2 - n` for `m = 2` with `λ = α_m`; equals [`Self::rho`]
    /// in that case.
    pub fn sigma_w2(&self) -> f64 {
        let lambda = *self.alphas.last().unwrap();
        let alpha: f64 = self.alphas[..self.m - 1].iter().sum();
        alpha + lambda + 2.0 - self.n as f64
    }

    pub fn is_uniform(&self) -> bool {
        let u = (self.n - 1) as f64;
        self.alphas.iter().all(|&a| (a - u).abs() <= 1e-12)
    }
}

/// Exponents of the embedding chain: `1/p + 1/q = 1`, `1/p* + 1/(rq) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndices {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub p_star: f64,
}

impl EmbeddingIndices {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return domain(format!("p must lie in (1, inf), got {p}"));
        }
        if !(r >= 1.0) {
            return domain(format!("r must be >= 1, got {r}"));
        }
        let q = p / (p - 1.0);
        if r * q < 2.0 {
            return domain(format!("rq = {} must be >= 2", r * q));
        }
        let p_star = 1.0 / (1.0 - 1.0 / (r * q));
        Ok(Self { p, q, r, p_star })
    }
}

/// The `ℓ`-fold tail of the reduction inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpec {
    pub ell: usize,
    pub beta_lm: f64,
    pub sigma_ell: f64,
}

impl ReductionSpec {
    pub fn new(spec: &ConvolutionSpec, ell: usize) -> Result<Self> {
        if !(ell >= 2 && ell < spec.m) {
            return domain(format!("reduction requires m > ell >= 2, got m = {}, ell = {ell}", spec.m));
        }
        let beta_lm: f64 = spec.alphas[spec.m - ell..].iter().sum();
        let sigma_ell = 2.0 + beta_lm - ((ell - 1) * spec.n) as f64;
        Ok(Self {
            ell,
            beta_lm,
            sigma_ell,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    T1 { ell: usize },
    T2,
    T3,
    T4,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub hypothesis: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub theorem: Theorem,
    pub checks: Vec<HypothesisCheck>,
    pub sigma: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.hypothesis.as_str())
            .collect()
    }
}

struct Checker {
    checks: Vec<HypothesisCheck>,
}

impl Checker {
    /// Records `lhs < rhs` with the strict margin.
    fn lt(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.checks.push(HypothesisCheck {
            hypothesis: name.to_string(),
            passed: lhs < rhs - STRICT_MARGIN,
            detail: format!("{lhs} < {rhs}"),
        });
    }

    fn holds(&mut self, name: &str, ok: bool, detail: String) {
        self.checks.push(HypothesisCheck {
            hypothesis: name.to_string(),
            passed: ok,
            detail,
        });
    }
}

/// Checks the hypotheses of the chosen theorem and names each violated
/// inequality.
pub fn validate_spec(spec: &ConvolutionSpec, theorem: Theorem) -> ValidationReport {
    let n = spec.n as f64;
    let m = spec.m;
    let mut c = Checker { checks: Vec::new() };
    for (k, &a) in spec.alphas.iter().enumerate() {
        c.lt(&format!("0<alpha_{}", k + 1), 0.0, a);
        c.lt(&format!("alpha_{}<n", k + 1), a, n);
    }
    let mut sigma = None;
    match theorem {
        Theorem::T1 { ell } => {
            c.holds("m>ell>=2", ell >= 2 && ell < m, format!("m = {m}, ell = {ell}"));
            if ell >= 2 && ell < m {
                let beta: f64 = spec.alphas[m - ell..].iter().sum();
                c.lt("ell*n-2>beta_lm", beta, ell as f64 * n - 2.0);
                c.lt("beta_lm>(ell-1)n-2", (ell as f64 - 1.0) * n - 2.0, beta);
                sigma = Some(2.0 + beta - (ell as f64 - 1.0) * n);
            }
        }
        Theorem::T2 => {
            c.holds("m=2", m == 2, format!("m = {m}"));
            if m == 2 {
                let (a, l) = (spec.alphas[0], spec.alphas[1]);
                c.lt("0<alpha<n-1", a, n - 1.0);
                c.lt("lambda>0", 0.0, l);
                c.lt("2(n-1)>alpha+lambda", a + l, 2.0 * (n - 1.0));
                c.lt("alpha+lambda>n-1", n - 1.0, a + l);
                sigma = Some(a + l + 2.0 - n);
            }
        }
        Theorem::T3 => {
            c.holds("m=3", m == 3, format!("m = {m}"));
            if m == 3 {
                let (a1, a2, l) = (spec.alphas[0], spec.alphas[1], spec.alphas[2]);
                c.lt("3n-2>alpha_1+alpha_2+lambda", a1 + a2 + l, 3.0 * n - 2.0);
                c.lt("alpha_1+alpha_2+lambda>2n-2", 2.0 * n - 2.0, a1 + a2 + l);
                c.lt("alpha_1+lambda>n-1", n - 1.0, a1 + l);
                c.lt("alpha_2+lambda>n-1", n - 1.0, a2 + l);
                c.lt("2n-1>alpha_1+alpha_2", a1 + a2, 2.0 * n - 1.0);
                sigma = Some(2.0 + a1 + a2 + l - 2.0 * n);
            }
        }
        Theorem::T4 => {
            c.holds(
                "alpha_k=n-1",
                spec.is_uniform(),
                format!("alphas = {:?}", spec.alphas),
            );
            c.holds("3<=m<=n+1", m >= 3 && m <= spec.n + 1, format!("m = {m}, n = {}", spec.n));
            sigma = Some(2.0 + n - m as f64);
        }
    }
    ValidationReport {
        theorem,
        checks: c.checks,
        sigma,
    }
}

/// `π^{-n/2+λ} Γ((n-λ)/2) / Γ(λ/2)`: the transform of `|x|^{-λ}` on `R^n`
/// is this constant times `|ξ|^{λ-n}`.
pub fn riesz_fourier_constant(n: usize, lambda: f64) -> Result<f64> {
    let nf = n as f64;
    if !(lambda > 0.0 && lambda < nf) {
        return domain(format!("Riesz exponent lambda = {lambda} outside (0, {n})"));
    }
    Ok(PI.powf(lambda - 0.5 * nf) * gamma_ratio(&[0.5 * (nf - lambda)], &[0.5 * lambda]))
}

/// `c` in `∫ |x|^{-g1} |w-x|^{-g2} dx = c |w|^{n-g1-g2}`.
pub fn riesz_composition_constant(n: usize, g1: f64, g2: f64) -> Result<f64> {
    let nf = n as f64;
    if !(g1 + g2 > nf) {
        return domain(format!("g1 + g2 = {} must exceed n = {n}", g1 + g2));
    }
    let r1 = riesz_fourier_constant(n, g1).map_err(|e| name_exponent(e, "g1"))?;
    let r2 = riesz_fourier_constant(n, g2).map_err(|e| name_exponent(e, "g2"))?;
    let r12 = riesz_fourier_constant(n, g1 + g2 - nf).map_err(|e| name_exponent(e, "g1+g2-n"))?;
    Ok(r1 * r2 / r12)
}

fn name_exponent(e: Error, which: &str) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{which}: {m}")),
        other => other,
    }
}

/// `|w|²/(1+|w|²)`, `1/(1+|w|²)`, `β(w)` and `1 - β(w)`, all without
/// cancellation or overflow.
#[derive(Debug, Clone, Copy)]
pub struct BetaParts {
    pub t: f64,
    pub one_minus_t: f64,
    pub beta: f64,
    pub one_minus_beta: f64,
}

impl BetaParts {
    pub fn new(wnorm: f64) -> Self {
        let (t, one_minus_t) = if wnorm <= 1.0 {
            let w2 = wnorm * wnorm;
            (w2 / (1.0 + w2), 1.0 / (1.0 + w2))
        } else {
            let iw2 = (1.0 / wnorm) * (1.0 / wnorm);
            (1.0 / (1.0 + iw2), iw2 / (1.0 + iw2))
        };
        let diff = if wnorm <= 1.0 {
            (1.0 - wnorm) * (1.0 + wnorm) * one_minus_t
        } else {
            let iw = 1.0 / wnorm;
            (1.0 - iw) * (1.0 + iw) * t
        };
        Self {
            t,
            one_minus_t,
            beta: (4.0 * t * one_minus_t).min(1.0),
            one_minus_beta: diff * diff,
        }
    }
}

fn check_theta(n: usize, alpha: f64, lambda: f64, wnorm: f64) -> Result<()> {
    let nf = n as f64;
    if n < 2 {
        return domain(format!("dimension n must be >= 2, got {n}"));
    }
    if !(alpha > 0.0 && lambda > 0.0) {
        return domain(format!("alpha = {alpha} and lambda = {lambda} must be positive"));
    }
    if !(alpha + lambda > nf - 1.0) {
        return domain(format!("alpha + lambda = {} must exceed n - 1", alpha + lambda));
    }
    if !(wnorm >= 0.0) || wnorm.is_infinite() {
        return domain(format!("|w| must be finite and >= 0, got {wnorm}"));
    }
    Ok(())
}

/// `C_n = 2^{α+λ-n} π^{(n-1)/2} Γ((α+λ-n+1)/2) / Γ((α+λ)/2)`.
pub fn theta_prefactor(n: usize, alpha: f64, lambda: f64) -> f64 {
    let nf = n as f64;
    2f64.powf(alpha + lambda - nf)
        * PI.powf(0.5 * (nf - 1.0))
        * gamma_ratio(&[0.5 * (alpha + lambda - nf + 1.0)], &[0.5 * (alpha + lambda)])
}

/// Θ_n(|w|) = C_n [|w|²/(1+|w|²)]^{α+λ-n+1} ₂F₁(α/2, (α+λ-n+1)/2; (α+λ)/2; β(w)).
pub fn theta_closed_form(n: usize, alpha: f64, lambda: f64, wnorm: f64) -> Result<f64> {
    check_theta(n, alpha, lambda, wnorm)?;
    if wnorm == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let parts = BetaParts::new(wnorm);
    let e = alpha + lambda - nf + 1.0;
    let f = hyp2f1(
        0.5 * alpha,
        0.5 * e,
        0.5 * (alpha + lambda),
        parts.beta,
        parts.one_minus_beta,
    )
    .map_err(|err| match err {
        Error::DivergentAtOne(_) => Error::DivergentAtOne(format!(
            "Theta_{n} at |w| = {wnorm} with alpha = {alpha} >= n - 1"
        )),
        other => other,
    })?;
    Ok(theta_prefactor(n, alpha, lambda) * parts.t.powf(e) * f)
}

/// The `|w|`-independent coefficient of [`theta_upper_bound`].
pub fn theta_bound_coefficient(n: usize, alpha: f64, lambda: f64) -> Result<f64> {
    let nf = n as f64;
    if !(alpha < nf - 1.0) {
        return domain(format!("upper bound requires alpha < n - 1, got alpha = {alpha}"));
    }
    Ok(2f64.powf(alpha + lambda - nf)
        * PI.powf(0.5 * (nf - 1.0))
        * gamma_ratio(
            &[0.5 * (alpha + lambda - nf + 1.0), 0.5 * (nf - 1.0 - alpha)],
            &[0.5 * (nf - 1.0), 0.5 * lambda],
        ))
}

/// The uniform bound obtained from Gauss summation at `β = 1`.
pub fn theta_upper_bound(n: usize, alpha: f64, lambda: f64, wnorm: f64) -> Result<f64> {
    check_theta(n, alpha, lambda, wnorm)?;
    let coef = theta_bound_coefficient(n, alpha, lambda)?;
    if wnorm == 0.0 {
        return Ok(0.0);
    }
    let parts = BetaParts::new(wnorm);
    Ok(coef * parts.t.powf(alpha + lambda - n as f64 + 1.0))
}

/// `(2|w|²/(1+|w|²)) K(√β(w))`, the `n = 2`, `α = λ = 1` case.
pub fn elliptic_theta_2d(wnorm: f64) -> Result<f64> {
    if !(wnorm >= 0.0) || wnorm.is_infinite() {
        return domain(format!("|w| must be finite and >= 0, got {wnorm}"));
    }
    if wnorm == 0.0 {
        return Ok(0.0);
    }
    if wnorm == 1.0 {
        return Err(Error::DivergentAtOne(
            "elliptic form at |w| = 1: K diverges at beta = 1".into(),
        ));
    }
    let parts = BetaParts::new(wnorm);
    Ok(2.0 * parts.t * elliptic_k_complement(parts.one_minus_beta.sqrt()))
}

/// Exponent `e` with `Form(w, τ) = τ^e Form(w/√τ, 1)` for the
/// `|w|^σ`-weighted `m`-fold form: `e = [(m-1)n - α - 2 + σ]/2`.
pub fn tau_exponent(spec: &ConvolutionSpec, sigma: f64) -> f64 {
    // written against ρ so that σ = ρ gives exactly 0
    0.5 * (sigma - spec.rho())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_singular_1d, tanh_sinh, tanh_sinh_graded, SingularIntegral1D};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn riesz_self_dual() {
        for n in 1..6 {
            assert_relative_eq!(riesz_fourier_constant(n, n as f64 / 2.0).unwrap(), 1.0, max_relative = 1e-14);
        }
        assert!(riesz_fourier_constant(3, 3.0).is_err());
        assert!(riesz_fourier_constant(3, 0.0).is_err());
    }

    #[test]
    fn riesz_n3_lambda1_against_mollified_transform() {
        // transform of e^{-εr}/r in R^3 at |ξ| = ρ: (2/ρ) ∫₀^∞ e^{-εr} sin(2πρr) dr,
        // integrated period by period; the mollifier contributes k²/(k²+ε²)
        let (eps, rho) = (0.3f64, 0.7f64);
        let k = 2.0 * PI * rho;
        let period = PI / k;
        let mut total = 0.0;
        let mut a = 0.0;
        while (-eps * a).exp() > 1e-18 {
            total += tanh_sinh(|r, _, _| (-eps * r).exp() * (k * r).sin(), a, a + period, 1e-13).unwrap();
            a += period;
        }
        let transform = 2.0 / rho * total;
        let limit = transform * (k * k + eps * eps) / (k * k);
        let predicted = riesz_fourier_constant(3, 1.0).unwrap() * rho.powf(1.0 - 3.0);
        assert_relative_eq!(limit, predicted, max_relative = 1e-9);
    }

    #[test]
    fn composition_n1_against_quadrature() {
        // ∫_R |x|^{-3/4} |1-x|^{-3/4} dx split as [0,1] plus twice the tail (x = 1/u)
        let inner = SingularIntegral1D::new(-0.75, -0.75, |_, _| 1.0).unwrap();
        let tail = SingularIntegral1D::new(-0.5, -0.75, |_, _| 1.0).unwrap();
        let direct = integrate_singular_1d(&inner, 1e-13).unwrap() + 2.0 * integrate_singular_1d(&tail, 1e-13).unwrap();
        let c = riesz_composition_constant(1, 0.75, 0.75).unwrap();
        assert_relative_eq!(c, direct, max_relative = 1e-8);
    }

    #[test]
    fn composition_n2_against_polar_quadrature() {
        let (g1, g2) = (1.2, 1.3);
        // w = e1, x = (r cos θ, r sin θ); the θ-integral is doubled by symmetry
        // gap = |r - 1| is passed separately so it stays accurate near r = 1
        let angular = |r: f64, gap: f64| {
            tanh_sinh_graded(
                |_, dl, _| {
                    let hs = (0.5 * dl).sin();
                    gap.hypot(2.0 * r.sqrt() * hs).powf(-g2)
                },
                0.0,
                PI,
                gap,
                1e-12,
            )
            .unwrap()
        };
        let radial = |r: f64, gap: f64| 2.0 * r.powf(1.0 - g1) * angular(r, gap);
        let mut total = 0.0;
        total += tanh_sinh(|r, _, dr| radial(r, dr), 0.0, 1.0, 1e-10).unwrap();
        total += tanh_sinh(|r, dl, _| radial(r, dl), 1.0, 2.0, 1e-10).unwrap();
        total += tanh_sinh(
            |v, _, _| {
                let r = 2.0 / v;
                if r.is_finite() { radial(r, r - 1.0) * 2.0 / (v * v) } else { 0.0 }
            },
            0.0,
            1.0,
            1e-10,
        )
        .unwrap();
        let c = riesz_composition_constant(2, g1, g2).unwrap();
        assert_relative_eq!(c, total, max_relative = 1e-6);
    }

    #[test]
    fn composition_errors_name_the_exponent() {
        let err = riesz_composition_constant(3, 3.5, 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.starts_with("g1")));
        assert!(riesz_composition_constant(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn theta_at_zero_and_bound_at_infinity() {
        assert_eq!(theta_closed_form(3, 1.2, 1.4, 0.0).unwrap(), 0.0);
        assert_eq!(theta_upper_bound(3, 1.2, 1.4, 0.0).unwrap(), 0.0);
        let coef = theta_bound_coefficient(3, 1.2, 1.4).unwrap();
        let far = theta_upper_bound(3, 1.2, 1.4, 1e6).unwrap();
        assert!((far - coef).abs() <= 1e-4 * coef);
        assert!(theta_upper_bound(3, 2.0, 1.4, 1.0).is_err());
    }

    #[test]
    fn theta_diverges_at_one_for_large_alpha() {
        assert!(matches!(theta_closed_form(3, 2.5, 0.8, 1.0), Err(Error::DivergentAtOne(_))));
        assert!(theta_closed_form(3, 2.5, 0.8, 1.01).unwrap().is_finite());
    }

    #[test]
    fn elliptic_form_matches_hypergeometric() {
        for &w in &[0.1, 0.5, 0.9, 1.1, 3.0, 50.0] {
            let e = elliptic_theta_2d(w).unwrap();
            let t = theta_closed_form(2, 1.0, 1.0, w).unwrap();
            assert_relative_eq!(e, t, max_relative = 1e-11);
        }
        assert_eq!(elliptic_theta_2d(0.0).unwrap(), 0.0);
        assert!(matches!(elliptic_theta_2d(1.0), Err(Error::DivergentAtOne(_))));
    }

    #[test]
    fn validation_examples() {
        let s = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        let r = validate_spec(&s, Theorem::T4);
        assert!(r.passed());
        assert_eq!(r.sigma, Some(2.0));

        let s = ConvolutionSpec::new(3, vec![2.5, 0.1], 1.0).unwrap();
        let r = validate_spec(&s, Theorem::T2);
        assert!(r.failures().contains(&"0<alpha<n-1"));

        let s = ConvolutionSpec::new(3, vec![1.0, 2.0, 2.0], 1.0).unwrap();
        let r = validate_spec(&s, Theorem::T1 { ell: 2 });
        assert_eq!(r.failures(), vec!["ell*n-2>beta_lm"]);
    }

    #[test]
    fn embedding_indices() {
        let e = EmbeddingIndices::new(2.0, 1.0).unwrap();
        assert_relative_eq!(1.0 / e.p + 1.0 / e.q, 1.0, epsilon = 1e-12);
        assert_relative_eq!(1.0 / e.p_star + 1.0 / (e.r * e.q), 1.0, epsilon = 1e-12);
        assert!(EmbeddingIndices::new(3.0, 1.0).is_err());
    }

    #[test]
    fn tau_exponent_examples() {
        let s = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        assert_eq!(tau_exponent(&s, s.rho()), 0.0);
        assert_relative_eq!(tau_exponent(&s, s.rho() + 1.0), 0.5, epsilon = 1e-14);
        let s = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        assert_eq!(tau_exponent(&s, 2.0), 0.0);
    }

    #[test]
    fn reduction_spec_rejects_ell_equal_m() {
        let s = ConvolutionSpec::new(3, vec![1.5, 1.6, 1.7], 1.0).unwrap();
        assert!(ReductionSpec::new(&s, 3).is_err());
        let r = ReductionSpec::new(&s, 2).unwrap();
        assert_relative_eq!(r.beta_lm, 3.3, epsilon = 1e-12);
        assert_relative_eq!(r.sigma_ell, 2.3, epsilon = 1e-12);
    }

    fn admissible() -> impl Strategy<Value = (usize, f64, f64, f64)> {
        (2usize..=5, 0.02f64..0.98, 0.02f64..0.98, -3.0f64..3.0).prop_map(|(n, fa, fs, lw)| {
            let nm1 = (n - 1) as f64;
            let alpha = nm1 * fa;
            let lambda = nm1 * (1.0 + fs) - alpha;
            (n, alpha, lambda, 10f64.powf(lw))
        })
    }

    proptest! {
        #[test]
        fn bound_dominates((n, a, l, w) in admissible()) {
            let v = theta_closed_form(n, a, l, w).unwrap();
            let b = theta_upper_bound(n, a, l, w).unwrap();
            prop_assert!(v > 0.0 && v <= b * (1.0 + 1e-12), "{v} > {b}");
        }

        #[test]
        fn sigma_rho_consistent(n in 2usize..6, fa in 0.05f64..0.95, fl in 0.05f64..0.95) {
            let s = ConvolutionSpec::new(n, vec![fa * n as f64, fl * n as f64], 1.0).unwrap();
            prop_assert!((s.rho() - s.sigma_w2()).abs() <= 1e-12);
        }

        #[test]
        fn uniform_sigma_reproduces_rho(n in 2usize..7, extra in 0usize..5) {
            let m = 3 + extra.min(n.saturating_sub(2));
            let s = ConvolutionSpec::uniform(n, m, 1.0).unwrap();
            prop_assert!((s.rho() - (2.0 + n as f64 - m as f64)).abs() <= 1e-12);
        }

        #[test]
        fn composition_symmetric(n in 1usize..6, f1 in 0.1f64..0.95, f2 in 0.1f64..0.95) {
            let nf = n as f64;
            let (g1, g2) = (nf * f1, nf * f2);
            prop_assume!(g1 + g2 > nf + 1e-6);
            let a = riesz_composition_constant(n, g1, g2).unwrap();
            let b = riesz_composition_constant(n, g2, g1).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * a.abs());
        }
    }

    #[test]
    fn small_w_slope() {
        let (n, a, l) = (3, 1.2, 1.4);
        let x: Vec<f64> = (0..9).map(|i| -4.0 + 0.25 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&lx| theta_closed_form(n, a, l, 10f64.powf(lx)).unwrap().log10())
            .collect();
        let slope = (y[8] - y[0]) / (x[8] - x[0]);
        assert_relative_eq!(slope, 2.0 * (a + l - 3.0 + 1.0), max_relative = 1e-2);
    }
}
