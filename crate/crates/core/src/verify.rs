//! Verification harness: sup scans with a saturation verdict, small-`|w|`
//! decay fits, the reduction inequality, τ-homogeneity measurements and
//! the dual inequality.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{derive_seed, estimate, map_indexed, Draw, Execution, McEstimate, McOptions, McRng};
use crate::potentials::{
    elliptic_theta_2d, riesz_composition_constant, tau_exponent, theta_bound_coefficient, theta_closed_form,
    theta_upper_bound, validate_spec, ConvolutionSpec, EmbeddingIndices, ReductionSpec, Theorem,
};
use crate::quadrature::{delta3_reduced_at, sphere_area, tanh_sinh, theta_oracle, Delta3Params};
use crate::surface_mc::{estimate_form_with, SurfaceSampler};

/// `count` points from `lo` to `hi`, equally spaced in `log10`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return domain(format!("log grid needs 0 < lo <= hi < inf, got {lo}:{hi}"));
    }
    if count == 0 {
        return domain("log grid needs at least one point");
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    let step = (b - a) / (count - 1) as f64;
    Ok((0..count).map(|i| 10f64.powf(a + step * i as f64)).collect())
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_std_error: f64,
    /// Weighted residual sum of squares per degree of freedom (1 when the
    /// weights are exact inverse variances and the model holds).
    pub chi2_per_dof: f64,
}

/// Weighted line fit; `sigma` are per-point standard errors of `y`
/// (unit weights when `None`).
pub fn fit_line(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LineFit> {
    let k = x.len();
    if k < 2 || y.len() != k {
        return domain(format!("line fit needs >= 2 matched points, got {k}"));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s).max(f64::MIN_POSITIVE)).collect(),
        None => vec![1.0; k],
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..k {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return domain("line fit needs distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let dof = (k - 2).max(1) as f64;
    let chi2_per_dof = rss / dof;
    let slope_std_error = match sigma {
        Some(_) => (1.0 / sxx).sqrt(),
        None => (chi2_per_dof / sxx).sqrt(),
    };
    Ok(LineFit {
        slope,
        intercept,
        r2,
        slope_std_error,
        chi2_per_dof,
    })
}

/// How the scanned quantity is evaluated at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// The hypergeometric closed form (`m = 2`).
    ClosedForm,
    /// Direct quadrature (`m = 2`) or the reduced Δ quadrature (`m = 3`).
    Quadrature,
    /// Surface Monte Carlo (any `m`).
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub n_samples: u64,
    pub seed: u64,
    pub tol: f64,
    pub execution: Execution,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            seed: 1,
            tol: 1e-10,
            execution: Execution::Parallel,
        }
    }
}

/// One evaluated grid point of `|w|^ρ Form(w, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub w_norm: f64,
    pub tau: f64,
    pub value: f64,
    /// Zero for deterministic evaluators.
    pub std_error: f64,
    pub closed_form: Option<f64>,
    pub upper_bound: Option<f64>,
    /// Set when the point is divergent; `value` is then infinite.
    pub divergence: Option<String>,
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    /// The sup over the full grid exceeds the inner-grid sup by more than 5%.
    Unsaturated { sup_all: f64, sup_inner: f64 },
    UnboundedAt { w_norm: f64, tau: f64, reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Bounded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub sigma: f64,
    pub grid: Vec<ScanPoint>,
    pub running_sup: f64,
    pub inner_sup: f64,
    /// Fit of `ln value` against `ln(|w|/√τ)` on the points with
    /// `|w|/√τ <= SMALL_RATIO`, when there are at least three.
    pub decay_fit: Option<LineFit>,
    /// Violated hypotheses and per-point warnings.
    pub violations: Vec<String>,
    pub verdict: Verdict,
}

/// Upper end of the small-`|w|` asymptotic sub-grid.
pub const SMALL_RATIO: f64 = 1e-2;
/// Allowed excess of the full-grid sup over the inner-grid sup.
pub const SATURATION: f64 = 0.05;

fn scan_theorem(spec: &ConvolutionSpec) -> Theorem {
    if spec.is_uniform() && spec.m >= 3 {
        Theorem::T4
    } else {
        match spec.m {
            2 => Theorem::T2,
            3 => Theorem::T3,
            _ => Theorem::T1 { ell: 2 },
        }
    }
}

fn axis_inner(values: &[f64]) -> Vec<bool> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min).ln();
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ln();
    let mid = 0.5 * (lo + hi);
    let half = 0.25 * (hi - lo);
    values
        .iter()
        .map(|v| (v.ln() - mid).abs() <= half * (1.0 + 1e-12) + 1e-12)
        .collect()
}

fn first_axis(n: usize, r: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[0] = r;
    w
}

fn eval_point(
    spec: &ConvolutionSpec,
    evaluator: Evaluator,
    w_norm: f64,
    tau: f64,
    seed: u64,
    settings: &ScanSettings,
) -> Result<ScanPoint> {
    let n = spec.n;
    let sigma = spec.rho();
    let ratio = w_norm / tau.sqrt();
    let pair = (spec.m == 2).then(|| (spec.alphas[0], spec.alphas[1]));
    let closed_form = pair.and_then(|(a, l)| theta_closed_form(n, a, l, ratio).ok());
    let upper_bound = pair.and_then(|(a, l)| theta_upper_bound(n, a, l, ratio).ok());
    let mut point = ScanPoint {
        w_norm,
        tau,
        value: 0.0,
        std_error: 0.0,
        closed_form,
        upper_bound,
        divergence: None,
        heavy_tail: false,
    };
    let value = match (evaluator, spec.m) {
        (Evaluator::ClosedForm, 2) => {
            let (a, l) = pair.unwrap();
            theta_closed_form(n, a, l, ratio)
        }
        (Evaluator::ClosedForm, m) => {
            return domain(format!("closed form covers m = 2 only, got m = {m}"));
        }
        (Evaluator::Quadrature, 2) => {
            let (a, l) = pair.unwrap();
            theta_oracle(n, a, l, ratio, settings.tol)
        }
        (Evaluator::Quadrature, 3) => {
            let p = Delta3Params {
                n,
                a1: spec.alphas[0],
                a2: spec.alphas[1],
                lambda: spec.alphas[2],
            };
            delta3_reduced_at(&p, ratio, settings.tol)
        }
        (Evaluator::Quadrature, m) => {
            return domain(format!("quadrature covers m = 2 and m = 3, got m = {m}"));
        }
        (Evaluator::Mc, _) => {
            let opts = McOptions {
                execution: settings.execution,
                ..Default::default()
            };
            let w = first_axis(n, w_norm);
            estimate_form_with(spec, &w, tau, None, settings.n_samples, seed, &opts).map(|e| {
                let e = e.scaled(w_norm.powf(sigma));
                point.std_error = e.std_error;
                point.heavy_tail = e.heavy_tail;
                e.value
            })
        }
    };
    match value {
        Ok(v) if v.is_finite() => point.value = v,
        Ok(v) => {
            point.value = f64::INFINITY;
            point.divergence = Some(format!("non-finite value {v}"));
        }
        Err(Error::DivergentAtOne(msg)) => {
            point.value = f64::INFINITY;
            point.divergence = Some(msg);
        }
        Err(e) => return Err(e),
    }
    Ok(point)
}

/// Evaluates `|w|^ρ Form(w, τ)` over `w_grid × tau_grid` (with `w` along
/// the first axis) and decides boundedness by sup saturation: the sup over
/// the whole grid must be within [`SATURATION`] of the sup over the inner
/// half of the log-ranges, up to 3 standard errors on each side.
pub fn sup_scan(
    spec: &ConvolutionSpec,
    evaluator: Evaluator,
    w_grid: &[f64],
    tau_grid: &[f64],
    settings: &ScanSettings,
) -> Result<ScanReport> {
    if w_grid.is_empty() || tau_grid.is_empty() {
        return domain("scan grids must be non-empty");
    }
    if w_grid.iter().chain(tau_grid).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return domain("scan grid values must be positive and finite");
    }
    let mut violations: Vec<String> = validate_spec(spec, scan_theorem(spec))
        .failures()
        .into_iter()
        .map(|f| format!("hypothesis {f} violated"))
        .collect();
    let cells: Vec<(usize, usize)> = (0..w_grid.len())
        .flat_map(|i| (0..tau_grid.len()).map(move |j| (i, j)))
        .collect();
    let points = map_indexed(cells.len(), settings.execution, |k| {
        let (i, j) = cells[k];
        eval_point(
            spec,
            evaluator,
            w_grid[i],
            tau_grid[j],
            derive_seed(settings.seed, k as u64),
            settings,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let w_inner = axis_inner(w_grid);
    let t_inner = axis_inner(tau_grid);
    let mut sup_all: Option<&ScanPoint> = None;
    let mut sup_inner: Option<&ScanPoint> = None;
    for (k, p) in points.iter().enumerate() {
        if p.heavy_tail {
            violations.push(format!(
                "heavy-tailed weights at |w| = {}, tau = {}",
                p.w_norm, p.tau
            ));
        }
        if sup_all.is_none_or(|s| p.value > s.value) {
            sup_all = Some(p);
        }
        let (i, j) = cells[k];
        if w_inner[i] && t_inner[j] && sup_inner.is_none_or(|s| p.value > s.value) {
            sup_inner = Some(p);
        }
    }
    let sup_all = sup_all.unwrap();
    let sup_inner = sup_inner.unwrap_or(sup_all);
    let verdict = if let Some(p) = points.iter().find(|p| p.divergence.is_some()) {
        Verdict::UnboundedAt {
            w_norm: p.w_norm,
            tau: p.tau,
            reason: p.divergence.clone().unwrap(),
        }
    } else if sup_all.value - 3.0 * sup_all.std_error
        <= (1.0 + SATURATION) * (sup_inner.value + 3.0 * sup_inner.std_error)
    {
        Verdict::Bounded
    } else {
        Verdict::Unsaturated {
            sup_all: sup_all.value,
            sup_inner: sup_inner.value,
        }
    };

    let small: Vec<&ScanPoint> = points
        .iter()
        .filter(|p| p.w_norm / p.tau.sqrt() <= SMALL_RATIO && p.value > 0.0 && p.value.is_finite())
        .collect();
    let decay_fit = if small.len() >= 3 {
        let x: Vec<f64> = small.iter().map(|p| (p.w_norm / p.tau.sqrt()).ln()).collect();
        let y: Vec<f64> = small.iter().map(|p| p.value.ln()).collect();
        fit_line(&x, &y, None).ok()
    } else {
        None
    };

    Ok(ScanReport {
        sigma: spec.rho(),
        running_sup: sup_all.value,
        inner_sup: sup_inner.value,
        grid: points,
        decay_fit,
        violations,
        verdict,
    })
}

/// Minimum `r²` accepted by [`decay_exponent`].
pub const MIN_R2: f64 = 0.999;

/// Slope of `ln Θ_n` against `ln |w|` on a small-`|w|` grid.
pub fn decay_exponent(n: usize, alpha: f64, lambda: f64, small_w_grid: &[f64]) -> Result<LineFit> {
    let elliptic = n == 2 && alpha == 1.0 && lambda == 1.0;
    let mut x = Vec::with_capacity(small_w_grid.len());
    let mut y = Vec::with_capacity(small_w_grid.len());
    for &r in small_w_grid {
        let v = if elliptic {
            elliptic_theta_2d(r)?
        } else {
            theta_closed_form(n, alpha, lambda, r)?
        };
        if !(v > 0.0) {
            return domain(format!("Theta is not positive at |w| = {r}"));
        }
        x.push(r.ln());
        y.push(v.ln());
    }
    let fit = fit_line(&x, &y, None)?;
    if fit.r2 < MIN_R2 {
        return Err(Error::FitFailed { r2: fit.r2 });
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPoint {
    pub w_norm: f64,
    pub lhs: McEstimate,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rho: f64,
    pub sigma_ell: f64,
    pub constant: f64,
    /// `n - α₁ - σ_ℓ + ρ`, zero when the exponents are consistent.
    pub exponent_identity_residual: f64,
    /// Sup of the two-fold tail over the scan grid.
    pub rhs_sup: f64,
    /// Gauss-summation bound on the same sup, when `α_{m-1} < n - 1`.
    pub rhs_bound: Option<f64>,
    pub rhs_scan: ScanReport,
    pub points: Vec<ReductionPoint>,
    pub holds: bool,
}

/// `|w|^ρ Form_m(w, 1) <= C · sup_{w,τ} |w|^σ Form_ℓ(w, τ)` at each point of
/// `w_grid`, for `m = 3`, `ℓ = 2`. `C` is the Riesz composition constant of
/// `(α₁, σ_ℓ)`; the sup is scanned with the closed form on `sup_grid × sup_grid`.
pub fn reduction_check(
    spec: &ConvolutionSpec,
    red: &ReductionSpec,
    w_grid: &[f64],
    sup_grid: &[f64],
    settings: &ScanSettings,
) -> Result<ReductionReport> {
    if spec.m != 3 || red.ell != 2 {
        return domain(format!(
            "reduction check is implemented for m = 3, ell = 2, got m = {}, ell = {}",
            spec.m, red.ell
        ));
    }
    let n = spec.n;
    let constant = riesz_composition_constant(n, spec.alphas[0], red.sigma_ell)?;
    let report = validate_spec(spec, Theorem::T1 { ell: red.ell });
    if !report.passed() {
        return domain(format!("hypotheses violated: {}", report.failures().join(", ")));
    }
    let rho = spec.rho();
    let residual = n as f64 - spec.alphas[0] - red.sigma_ell + rho;
    let tail = ConvolutionSpec::new(n, spec.alphas[1..].to_vec(), 1.0)?;
    let rhs_scan = sup_scan(&tail, Evaluator::ClosedForm, sup_grid, sup_grid, settings)?;
    if let Verdict::UnboundedAt { w_norm, tau, reason } = &rhs_scan.verdict {
        return domain(format!(
            "two-fold sup is unbounded at |w| = {w_norm}, tau = {tau}: {reason}"
        ));
    }
    let rhs_sup = rhs_scan.running_sup;
    let rhs_bound = theta_bound_coefficient(n, tail.alphas[0], tail.alphas[1]).ok();
    let bound = constant * rhs_sup;
    let opts = McOptions {
        execution: settings.execution,
        ..Default::default()
    };
    let points = w_grid
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let w = first_axis(n, r);
            let lhs = estimate_form_with(
                spec,
                &w,
                1.0,
                None,
                settings.n_samples,
                derive_seed(settings.seed, i as u64),
                &opts,
            )?
            .scaled(r.powf(rho));
            Ok(ReductionPoint {
                w_norm: r,
                holds: lhs.value <= bound + 3.0 * lhs.std_error,
                lhs,
                bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReductionReport {
        rho,
        sigma_ell: red.sigma_ell,
        constant,
        exponent_identity_residual: residual,
        rhs_sup,
        rhs_bound,
        holds: points.iter().all(|p| p.holds),
        rhs_scan,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityMeasurement {
    pub scale: f64,
    pub exponent: f64,
    pub std_error: f64,
    /// `(measured - predicted) / std_error`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub predicted: f64,
    pub measurements: Vec<HomogeneityMeasurement>,
    /// Every measurement within 3 standard errors of the prediction.
    pub consistent: bool,
}

/// Scales at which [`tau_homogeneity`] measures.
pub const HOMOGENEITY_SCALES: [f64; 2] = [0.25, 4.0];

/// Measures `e` in `F(w, s) = s^e F(w/√s, 1)` for `F = |w|^σ Form`, by
/// two independent MC runs per scale, and compares it with the
/// dimension count [`tau_exponent`]. A disagreement beyond 5 standard
/// errors is an error.
pub fn tau_homogeneity(
    spec: &ConvolutionSpec,
    sigma: f64,
    w: &[f64],
    settings: &ScanSettings,
) -> Result<HomogeneityReport> {
    let predicted = tau_exponent(spec, sigma);
    let opts = McOptions {
        execution: settings.execution,
        ..Default::default()
    };
    let weighted = |x: &[f64], tau: f64, seed: u64| -> Result<McEstimate> {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        Ok(estimate_form_with(spec, x, tau, None, settings.n_samples, seed, &opts)?.scaled(r.powf(sigma)))
    };
    let mut measurements = Vec::new();
    for (i, &s) in HOMOGENEITY_SCALES.iter().enumerate() {
        let a = weighted(w, s, derive_seed(settings.seed, 2 * i as u64))?;
        let scaled: Vec<f64> = w.iter().map(|x| x / s.sqrt()).collect();
        let b = weighted(&scaled, 1.0, derive_seed(settings.seed, 2 * i as u64 + 1))?;
        let exponent = (a.value / b.value).ln() / s.ln();
        let std_error = a.relative_error().hypot(b.relative_error()) / s.ln().abs();
        let z = (exponent - predicted) / std_error;
        if !(z.abs() <= 5.0) {
            return Err(Error::HomogeneityViolated(format!(
                "scale {s}: measured {exponent} ± {std_error}, predicted {predicted}"
            )));
        }
        measurements.push(HomogeneityMeasurement {
            scale: s,
            exponent,
            std_error,
            z,
        });
    }
    Ok(HomogeneityReport {
        predicted,
        consistent: measurements.iter().all(|m| m.z.abs() <= 3.0),
        measurements,
    })
}

/// Nonnegative test functions `g(w, τ)` on `R^n × R_+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `exp(-s²|w|² - s²τ)`.
    Gaussian { scale: f64 },
    /// `exp(-|w - w₀|²/(2ε_w²) - (τ - τ₀)²/(2ε_τ²))`.
    Mollifier {
        center: Vec<f64>,
        tau0: f64,
        width_w: f64,
        width_tau: f64,
    },
    Zero,
}

impl TestFunction {
    pub fn value(&self, w: &[f64], tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match self {
            TestFunction::Gaussian { scale } => {
                let s2 = scale * scale;
                (-s2 * (w.iter().map(|x| x * x).sum::<f64>() + tau)).exp()
            }
            TestFunction::Mollifier {
                center,
                tau0,
                width_w,
                width_tau,
            } => {
                let d2: f64 = w.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                let dt = tau - tau0;
                (-0.5 * d2 / (width_w * width_w) - 0.5 * dt * dt / (width_tau * width_tau)).exp()
            }
            TestFunction::Zero => 0.0,
        }
    }

    /// `g_s(w, τ) = g(s w, s² τ)`.
    pub fn dilated(&self, s: f64) -> Self {
        match self {
            TestFunction::Gaussian { scale } => TestFunction::Gaussian { scale: scale * s },
            TestFunction::Mollifier {
                center,
                tau0,
                width_w,
                width_tau,
            } => TestFunction::Mollifier {
                center: center.iter().map(|c| c / s).collect(),
                tau0: tau0 / (s * s),
                width_w: width_w / s,
                width_tau: width_tau / (s * s),
            },
            TestFunction::Zero => TestFunction::Zero,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            TestFunction::Gaussian { scale } if !(*scale > 0.0) => {
                domain(format!("Gaussian scale must be positive, got {scale}"))
            }
            TestFunction::Mollifier {
                center,
                width_w,
                width_tau,
                ..
            } => {
                if center.len() != n {
                    return domain(format!("mollifier centre has {} components, expected {n}", center.len()));
                }
                if !(*width_w > 0.0 && *width_tau > 0.0) {
                    return domain("mollifier widths must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `∫_{R^n × R_+} |g|^p dw dτ` by quadrature of the radial and τ factors.
    pub fn norm_pow(&self, n: usize, p: f64) -> Result<f64> {
        self.check(n)?;
        let tol = 1e-12;
        // ∫_0^∞ f(x) dx through x = t/(1-t)
        let half_line = |f: &dyn Fn(f64) -> f64| {
            tanh_sinh(
                |t, _, rest| {
                    let x = t / rest;
                    if !x.is_finite() {
                        return 0.0;
                    }
                    f(x) / (rest * rest)
                },
                0.0,
                1.0,
                tol,
            )
        };
        let radial = |a: f64| -> Result<f64> {
            // ∫_{R^n} exp(-a|x|²) dx
            Ok(sphere_area(n - 1) * half_line(&|r| r.powi(n as i32 - 1) * (-a * r * r).exp())?)
        };
        match self {
            TestFunction::Gaussian { scale } => {
                let a = p * scale * scale;
                Ok(radial(a)? * half_line(&|t| (-a * t).exp())?)
            }
            TestFunction::Mollifier {
                tau0,
                width_w,
                width_tau,
                ..
            } => {
                let aw = 0.5 * p / (width_w * width_w);
                let at = 0.5 * p / (width_tau * width_tau);
                let tau_part = half_line(&|t| (-at * (t - tau0) * (t - tau0)).exp())?;
                Ok(radial(aw)? * tau_part)
            }
            TestFunction::Zero => Ok(0.0),
        }
    }

    /// Draws `(w, τ)` with density proportional to `|g|^p` (ignoring the
    /// `τ >= 0` truncation) and returns that density.
    fn sample(&self, p: f64, rng: &mut McRng, w: &mut [f64]) -> (f64, f64) {
        let n = w.len() as f64;
        let gauss = |rng: &mut McRng, var: f64, w: &mut [f64], c: Option<&[f64]>| -> f64 {
            let sd = var.sqrt();
            let mut q = 0.0;
            for (i, x) in w.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *x = sd * z + c.map_or(0.0, |c| c[i]);
                q += z * z;
            }
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * var).powf(0.5 * n)
        };
        match self {
            TestFunction::Gaussian { scale } => {
                let rate = p * scale * scale;
                let qw = gauss(rng, 0.5 / rate, w, None);
                let u: f64 = rng.random();
                let tau = -(1.0 - u).ln() / rate;
                (tau, qw * rate * (-rate * tau).exp())
            }
            TestFunction::Mollifier {
                center,
                tau0,
                width_w,
                width_tau,
            } => {
                let qw = gauss(rng, width_w * width_w / p, w, Some(center));
                let var_t = width_tau * width_tau / p;
                let z: f64 = rng.sample(StandardNormal);
                let tau = tau0 + var_t.sqrt() * z;
                let qt = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * var_t).sqrt();
                (tau, qw * qt)
            }
            TestFunction::Zero => (0.0, 1.0),
        }
    }
}

/// `∫ |g(w, τ)|^p |w|^σ Form(w, τ) dw dτ` as one Monte Carlo over `R^{mn}`:
/// `(w, τ)` is drawn from the `|g|^p` proposal and the remaining
/// `mn - n - 1` dimensions from the surface sampler at `(w, τ)`.
struct DualDraw<'a> {
    spec: &'a ConvolutionSpec,
    g: &'a TestFunction,
    p: f64,
    sigma: f64,
    opts: McOptions,
}

impl Draw for DualDraw<'_> {
    type State = Vec<f64>;

    fn state(&self) -> Vec<f64> {
        vec![0.0; self.spec.n]
    }

    fn draw(&self, w: &mut Vec<f64>, rng: &mut McRng) -> Option<f64> {
        let (tau, q) = self.g.sample(self.p, rng, w);
        if !(tau > 0.0) || !(q > 0.0) {
            return None;
        }
        let gp = self.g.value(w, tau).powf(self.p);
        let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sampler = SurfaceSampler::new(self.spec, w, tau, &self.opts).ok()?;
        let mut st = sampler.state();
        let inner = sampler.draw(&mut st, rng)?;
        Some(gp * r.powf(self.sigma) * inner / q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub dilation: f64,
    /// Estimate of the `p`-th power of the left side.
    pub lhs: McEstimate,
    /// `∫ |g_s|^p dw dτ`.
    pub rhs: f64,
    /// `(lhs/rhs)^{1/p}`; absent when `g ≡ 0`.
    pub ratio: Option<f64>,
    pub ratio_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub sigma: f64,
    pub p: f64,
    pub points: Vec<DualPoint>,
    /// Ratios finite and within a factor of 2 of each other.
    pub stable: bool,
    pub heavy_tail: bool,
}

/// Dilations compared by [`dual_check`].
pub const DUAL_DILATIONS: [f64; 3] = [0.25, 1.0, 4.0];

/// Ratio of the two sides of the dual inequality for uniform potentials
/// and `σ = 2 + n - m`, over the dilations `g(s w, s² τ)`.
pub fn dual_check(
    n: usize,
    m: usize,
    indices: &EmbeddingIndices,
    g: &TestFunction,
    dilations: &[f64],
    settings: &ScanSettings,
) -> Result<DualReport> {
    let spec = ConvolutionSpec::uniform(n, m, 1.0)?;
    let report = validate_spec(&spec, Theorem::T4);
    if !report.passed() {
        return domain(format!("hypotheses violated: {}", report.failures().join(", ")));
    }
    g.check(n)?;
    let sigma = report.sigma.unwrap();
    let p = indices.p;
    let opts = McOptions {
        execution: settings.execution,
        ..Default::default()
    };
    let mut points = Vec::with_capacity(dilations.len());
    for (i, &s) in dilations.iter().enumerate() {
        let gs = g.dilated(s);
        let rhs = gs.norm_pow(n, p)?;
        let seed = derive_seed(settings.seed, i as u64);
        let lhs = if matches!(gs, TestFunction::Zero) {
            McEstimate::zero(settings.n_samples, seed)
        } else {
            let d = DualDraw {
                spec: &spec,
                g: &gs,
                p,
                sigma,
                opts,
            };
            estimate(&d, settings.n_samples, seed, &opts)
        };
        let (ratio, ratio_std_error) = if rhs > 0.0 {
            let r = (lhs.value / rhs).powf(1.0 / p);
            (Some(r), r * lhs.relative_error() / p)
        } else {
            (None, 0.0)
        };
        points.push(DualPoint {
            dilation: s,
            lhs,
            rhs,
            ratio,
            ratio_std_error,
        });
    }
    let ratios: Vec<f64> = points.iter().filter_map(|p| p.ratio).collect();
    let stable = if ratios.is_empty() {
        points.iter().all(|p| p.lhs.value == 0.0 && p.rhs == 0.0)
    } else {
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        ratios.len() == points.len() && ratios.iter().all(|r| r.is_finite()) && lo > 0.0 && hi <= 2.0 * lo
    };
    Ok(DualReport {
        sigma,
        p,
        heavy_tail: points.iter().any(|p| p.lhs.heavy_tail),
        points,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface_mc::estimate_form;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quick() -> ScanSettings {
        ScanSettings {
            n_samples: 100_000,
            seed: 5,
            tol: 1e-10,
            execution: Execution::Parallel,
        }
    }

    #[test]
    fn log_grid_hits_decades() {
        let g = log_grid(1e-3, 1e3, 25).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g[12], 1.0);
        assert_relative_eq!(g[0], 1e-3, max_relative = 1e-15);
        assert_relative_eq!(g[24], 1e3, max_relative = 1e-14);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 1.5 * x - 2.0).collect();
        let f = fit_line(&x, &y, None).unwrap();
        assert_relative_eq!(f.slope, 1.5, max_relative = 1e-14);
        assert_relative_eq!(f.intercept, -2.0, max_relative = 1e-14);
        assert_relative_eq!(f.r2, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn theta_scan_saturates() {
        let spec = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        let grid = log_grid(1e-3, 1e3, 25).unwrap();
        let r = sup_scan(&spec, Evaluator::ClosedForm, &grid, &[1.0], &quick()).unwrap();
        assert_eq!(r.verdict, Verdict::Bounded);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        let fit = r.decay_fit.unwrap();
        assert_relative_eq!(fit.slope, 1.2, max_relative = 1e-2);
        for p in &r.grid {
            assert!(p.value <= p.upper_bound.unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn theta_scan_divergent_outside_window() {
        let spec = ConvolutionSpec::new(3, vec![2.5, 1.4], 1.0).unwrap();
        let grid = log_grid(1e-3, 1e3, 25).unwrap();
        let r = sup_scan(&spec, Evaluator::ClosedForm, &grid, &[1.0], &quick()).unwrap();
        match r.verdict {
            Verdict::UnboundedAt { w_norm, .. } => assert_eq!(w_norm, 1.0),
            v => panic!("expected divergence, got {v:?}"),
        }
        assert!(r.violations.iter().any(|v| v.contains("0<alpha<n-1")));
    }

    #[test]
    fn closed_form_and_quadrature_scans_agree() {
        let spec = ConvolutionSpec::new(4, vec![1.7, 2.1], 1.0).unwrap();
        let grid = log_grid(1e-2, 1e2, 9).unwrap();
        let taus = [0.5, 2.0];
        let a = sup_scan(&spec, Evaluator::ClosedForm, &grid, &taus, &quick()).unwrap();
        let b = sup_scan(&spec, Evaluator::Quadrature, &grid, &taus, &quick()).unwrap();
        for (p, q) in a.grid.iter().zip(&b.grid) {
            assert_relative_eq!(p.value, q.value, max_relative = 1e-6);
        }
    }

    #[test]
    fn delta_uniform_quadrature_scan_bounded() {
        let spec = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        let grid = log_grid(1e-3, 1e3, 7).unwrap();
        let r = sup_scan(&spec, Evaluator::Quadrature, &grid, &grid, &quick()).unwrap();
        assert_eq!(r.verdict, Verdict::Bounded);
    }

    #[test]
    fn mc_scan_is_deterministic_and_brackets_closed_form() {
        let spec = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        let grid = [0.3, 3.0];
        let s = ScanSettings {
            n_samples: 200_000,
            ..quick()
        };
        let a = sup_scan(&spec, Evaluator::Mc, &grid, &[1.0, 2.0], &s).unwrap();
        let b = sup_scan(
            &spec,
            Evaluator::Mc,
            &grid,
            &[1.0, 2.0],
            &ScanSettings {
                execution: Execution::Sequential,
                ..s
            },
        )
        .unwrap();
        assert_eq!(a, b);
        for p in &a.grid {
            let cf = p.closed_form.unwrap();
            assert!((p.value - cf).abs() < 4.0 * p.std_error, "{p:?}");
            assert!(p.value <= a.running_sup);
        }
    }

    #[test]
    fn decay_exponents() {
        let small = log_grid(1e-3, 1e-2, 8).unwrap();
        let f = decay_exponent(3, 1.2, 1.4, &small).unwrap();
        assert_relative_eq!(f.slope, 1.2, max_relative = 1e-2);
        let f = decay_exponent(2, 1.0, 1.0, &small).unwrap();
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-2);
        let shifted: Vec<f64> = small.iter().map(|w| 2.0 * w).collect();
        let g = decay_exponent(3, 1.2, 1.4, &shifted).unwrap();
        let base = decay_exponent(3, 1.2, 1.4, &small).unwrap();
        assert_relative_eq!(g.slope, base.slope, max_relative = 5e-3);
    }

    #[test]
    fn decay_fit_fails_across_the_peak() {
        let grid = log_grid(1e-2, 1e2, 9).unwrap();
        assert!(matches!(
            decay_exponent(3, 1.2, 1.4, &grid),
            Err(Error::FitFailed { .. })
        ));
    }

    #[test]
    fn reduction_rejects_ell_equal_m() {
        let spec = ConvolutionSpec::new(3, vec![1.5, 1.6, 1.7], 1.0).unwrap();
        assert!(ReductionSpec::new(&spec, 3).is_err());
    }

    #[test]
    fn reduction_uniform_names_riesz_exponent() {
        let spec = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        let red = ReductionSpec::new(&spec, 2).unwrap();
        let grid = [1.0];
        match reduction_check(&spec, &red, &grid, &grid, &quick()) {
            Err(Error::Domain(msg)) => assert!(msg.starts_with("g2"), "{msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn reduction_small_run_holds() {
        let spec = ConvolutionSpec::new(3, vec![1.5, 1.6, 1.7], 1.0).unwrap();
        let red = ReductionSpec::new(&spec, 2).unwrap();
        let sup_grid = log_grid(1e-3, 1e3, 25).unwrap();
        let r = reduction_check(&spec, &red, &[0.3, 3.0], &sup_grid, &quick()).unwrap();
        assert!(r.holds);
        assert!(r.exponent_identity_residual.abs() < 1e-12);
        assert_relative_eq!(r.constant, riesz_composition_constant(3, 1.5, 2.3).unwrap());
        assert!(r.rhs_sup <= r.rhs_bound.unwrap());
    }

    #[test]
    fn homogeneity_m2() {
        let spec = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        let sigma = spec.sigma_w2();
        let w = [0.7, 0.0, 0.0];
        let r = tau_homogeneity(&spec, sigma, &w, &quick()).unwrap();
        assert_eq!(r.predicted, 0.0);
        assert!(r.consistent, "{r:?}");
        let r = tau_homogeneity(&spec, sigma + 1.0, &w, &quick()).unwrap();
        assert_eq!(r.predicted, 0.5);
        assert!(r.consistent, "{r:?}");
    }

    #[test]
    fn gaussian_norms() {
        for n in 2..5 {
            for &(s, p) in &[(1.0, 2.0), (0.25, 2.0), (4.0, 1.5)] {
                let g = TestFunction::Gaussian { scale: s };
                let a = p * s * s;
                let exact = (std::f64::consts::PI / a).powf(0.5 * n as f64) / a;
                assert_relative_eq!(g.norm_pow(n, p).unwrap(), exact, max_relative = 1e-10);
            }
        }
        assert_eq!(TestFunction::Zero.norm_pow(3, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn dual_zero() {
        let idx = EmbeddingIndices::new(2.0, 1.0).unwrap();
        let r = dual_check(3, 3, &idx, &TestFunction::Zero, &DUAL_DILATIONS, &quick()).unwrap();
        assert!(r.stable);
        for p in &r.points {
            assert_eq!(p.lhs.value, 0.0);
            assert_eq!(p.rhs, 0.0);
        }
    }

    #[test]
    fn dual_rejects_non_uniform_range() {
        let idx = EmbeddingIndices::new(2.0, 1.0).unwrap();
        let g = TestFunction::Gaussian { scale: 1.0 };
        assert!(dual_check(2, 4, &idx, &g, &[1.0], &quick()).is_err());
    }

    #[test]
    fn mollifier_reproduces_pointwise_form() {
        let (n, m) = (3, 3);
        let w0 = vec![0.8, 0.0, 0.0];
        let tau0 = 1.0;
        let spec = ConvolutionSpec::uniform(n, m, tau0).unwrap();
        let s = ScanSettings {
            n_samples: 400_000,
            ..quick()
        };
        let point = estimate_form(&spec, &w0, tau0, None, 400_000, 17)
            .unwrap()
            .scaled(0.8f64.powf(2.0));
        let idx = EmbeddingIndices::new(1.5, 2.0).unwrap();
        for width in [0.04, 0.02] {
            let g = TestFunction::Mollifier {
                center: w0.clone(),
                tau0,
                width_w: width,
                width_tau: width,
            };
            let r = dual_check(n, m, &idx, &g, &[1.0], &s).unwrap();
            let pt = &r.points[0];
            // the p-th power of g is again a mollifier
            let avg = pt.lhs.scaled(1.0 / pt.rhs);
            let z = crate::mc::joint_z(&avg, &point);
            assert!(z < 3.0, "width {width}: {} vs {}", avg.value, point.value);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn homogeneous_sigma_has_zero_exponent(
            n in 2usize..6,
            m in 2usize..5,
            frac in proptest::collection::vec(0.05f64..0.95, 4),
        ) {
            let alphas: Vec<f64> = frac[..m].iter().map(|f| f * n as f64).collect();
            let spec = ConvolutionSpec::new(n, alphas, 1.0).unwrap();
            prop_assert_eq!(tau_exponent(&spec, spec.rho()), 0.0);
        }

        #[test]
        fn reduction_exponent_identity(
            a in proptest::collection::vec(0.3f64..2.9, 3),
        ) {
            let spec = ConvolutionSpec::new(3, a.clone(), 1.0).unwrap();
            let red = ReductionSpec::new(&spec, 2).unwrap();
            let residual = 3.0 - a[0] - red.sigma_ell + spec.rho();
            prop_assert!(residual.abs() < 1e-12);
        }
    }
}
