//! Stein–Weiss kernels built on the uniform-potential surface measure:
//!
//! `K(w, v) = ∫ ∏|x_k|^{-(n-1)} [|w - u| |v - u|]^b δ(τ + Σ′|x_k|² - |x_m|²) dx`,
//! `u = Σx_k`, for fixed `τ > 0` (`K_τ`), `τ = 0` (`K_0`) or `τ` averaged
//! against a profile `φ` (`K_φ`).
//!
//! By the coarea formula the `mn`-fold integral is `∫ du [..]^b F(u, τ)` with
//! `F` the surface form at `(u, τ)`. Each draw samples `u` from a mixture
//! centred at `w`, `v` and the origin, then one surface point at `(u, τ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{derive_seed, estimate, Draw, McEstimate, McOptions, McRng};
use crate::potentials::ConvolutionSpec;
use crate::quadrature::{sphere_area, tanh_sinh};
use crate::surface_mc::{norm, scale_set, unit_vector, Proposal, RadialComponent, SurfaceSampler};
use crate::verify::{fit_line, LineFit};

/// Nonnegative profile on `R_+` with unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `rate · e^{-rate t}`.
    Exponential { rate: f64 },
    /// `e^{-(t - τ₀)/width} / width` for `t >= τ₀`.
    Window { tau0: f64, width: f64 },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Exponential { rate: 1.0 }
    }
}

impl Profile {
    pub fn density(&self, t: f64) -> f64 {
        match *self {
            Profile::Exponential { rate } if t >= 0.0 => rate * (-rate * t).exp(),
            Profile::Window { tau0, width } if t >= tau0 => (-(t - tau0) / width).exp() / width,
            _ => 0.0,
        }
    }

    fn sample(&self, rng: &mut McRng) -> f64 {
        let e = -(1.0 - rng.random::<f64>()).ln();
        match *self {
            Profile::Exponential { rate } => e / rate,
            Profile::Window { tau0, width } => tau0 + width * e,
        }
    }

    /// Checks positivity of the parameters and `∫₀^∞ φ = 1` by quadrature.
    pub fn validate(&self) -> Result<()> {
        let (start, ok) = match *self {
            Profile::Exponential { rate } => (0.0, rate > 0.0 && rate.is_finite()),
            Profile::Window { tau0, width } => (tau0, tau0 >= 0.0 && width > 0.0 && width.is_finite()),
        };
        if !ok {
            return domain(format!("invalid profile parameters {self:?}"));
        }
        let mass = tanh_sinh(
            |t, _, rest| {
                let x = start + t / rest;
                if !x.is_finite() {
                    return 0.0;
                }
                self.density(x) / (rest * rest)
            },
            0.0,
            1.0,
            1e-12,
        )?;
        if (mass - 1.0).abs() > 1e-8 {
            return domain(format!("profile integrates to {mass}, expected 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelVariant {
    Tau { tau: f64 },
    Zero,
    Phi { profile: Profile },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub m: usize,
    pub n: usize,
    pub bracket_exponent: f64,
}

impl KernelSpec {
    /// `b = -(n+m)/2 + 1`.
    pub fn tau(n: usize, m: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return domain(format!("K_tau needs tau > 0, got {tau}"));
        }
        Self::build(KernelVariant::Tau { tau }, n, m, 1.0 - 0.5 * (n + m) as f64)
    }

    pub fn zero(n: usize, m: usize) -> Result<Self> {
        Self::build(KernelVariant::Zero, n, m, 1.0 - 0.5 * (n + m) as f64)
    }

    /// `b = -(n+1)/2 + 1`.
    pub fn phi(n: usize, m: usize, profile: Profile) -> Result<Self> {
        profile.validate()?;
        Self::build(KernelVariant::Phi { profile }, n, m, 1.0 - 0.5 * (n + 1) as f64)
    }

    pub fn with_bracket_exponent(mut self, b: f64) -> Self {
        self.bracket_exponent = b;
        self
    }

    fn build(variant: KernelVariant, n: usize, m: usize, b: f64) -> Result<Self> {
        let k = Self {
            variant,
            m,
            n,
            bracket_exponent: b,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n < 2 || m < 3 || m > n + 1 {
            return domain(format!("kernels need n >= 2 and 3 <= m <= n + 1, got n = {n}, m = {m}"));
        }
        let b = self.bracket_exponent;
        let nf = n as f64;
        if !(b > -nf) {
            return domain(format!("bracket exponent {b} is not locally integrable in R^{n}"));
        }
        // F(u, τ) ~ |u|^{-σ} for large |u|, so the u-integral needs 2b - σ < -n
        let sigma = (2 + n - m) as f64;
        if !(2.0 * b - sigma < -nf) {
            return domain(format!(
                "u-integral diverges at infinity: 2b - sigma = {} >= -n = {}",
                2.0 * b - sigma,
                -nf
            ));
        }
        if let KernelVariant::Phi { profile } = self.variant {
            profile.validate()?;
        }
        Ok(())
    }

    /// Dimension count for `K_0(sw, sv) = s^d K_0(w, v)`: `d = m + 2b - 2`,
    /// which is `-n` for the default bracket exponent.
    pub fn predicted_degree(&self) -> f64 {
        self.m as f64 + 2.0 * self.bracket_exponent - 2.0
    }

    /// `σ = 2 + n - m`.
    pub fn sigma(&self) -> f64 {
        (2 + self.n - self.m) as f64
    }

    /// Exponent of `|w - v|` at the diagonal when negative, else 0.
    fn diagonal_exponent(&self) -> f64 {
        (self.n as f64 + 2.0 * self.bracket_exponent).min(0.0)
    }
}

/// Single-draw kernel estimator at arbitrary `(w, v)`.
struct KernelCore {
    k: KernelSpec,
    surface: ConvolutionSpec,
    opts: McOptions,
}

impl KernelCore {
    fn new(k: &KernelSpec, opts: &McOptions) -> Result<Self> {
        k.validate()?;
        Ok(Self {
            k: *k,
            surface: ConvolutionSpec::uniform(k.n, k.m, 1.0)?,
            opts: *opts,
        })
    }

    fn u_proposal(&self, w: &[f64], v: &[f64], tau: f64) -> Result<Proposal> {
        let n = self.k.n;
        let b = self.k.bracket_exponent;
        let gap: f64 = w.iter().zip(v).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        let scales = scale_set(&[tau.sqrt(), norm(w), norm(v), gap]);
        let per = 1.0 / scales.len() as f64;
        let delta = self.opts.delta_tail;
        let mut comps = Vec::with_capacity(3 * scales.len());
        for &s in &scales {
            comps.push((0.25 * per, RadialComponent::new(n, Some(w.to_vec()), s, -b, delta)?));
            comps.push((0.25 * per, RadialComponent::new(n, Some(v.to_vec()), s, -b, delta)?));
            comps.push((0.5 * per, RadialComponent::new(n, None, s, self.k.sigma(), delta)?));
        }
        Proposal::new(comps)
    }

    fn draw_at(&self, w: &[f64], v: &[f64], u: &mut [f64], rng: &mut McRng) -> Option<f64> {
        let tau = match self.k.variant {
            KernelVariant::Tau { tau } => tau,
            KernelVariant::Zero => 0.0,
            // τ drawn from φ itself, so φ cancels from the weight
            KernelVariant::Phi { profile } => profile.sample(rng),
        };
        let prop = self.u_proposal(w, v, tau).ok()?;
        let q = prop.sample(rng, u);
        let dw: f64 = w.iter().zip(u.iter()).map(|(a, c)| (a - c) * (a - c)).sum();
        let dv: f64 = v.iter().zip(u.iter()).map(|(a, c)| (a - c) * (a - c)).sum();
        let bracket = (dw * dv).powf(0.5 * self.k.bracket_exponent);
        let sampler = SurfaceSampler::new(&self.surface, u, tau, &self.opts).ok()?;
        let mut st = sampler.state();
        let inner = sampler.draw(&mut st, rng)?;
        let out = bracket * inner / q;
        out.is_finite().then_some(out)
    }
}

struct PairDraw<'a> {
    core: &'a KernelCore,
    w: &'a [f64],
    v: &'a [f64],
}

impl Draw for PairDraw<'_> {
    type State = Vec<f64>;

    fn state(&self) -> Vec<f64> {
        vec![0.0; self.core.k.n]
    }

    fn draw(&self, u: &mut Vec<f64>, rng: &mut McRng) -> Option<f64> {
        self.core.draw_at(self.w, self.v, u, rng)
    }
}

fn check_pair(k: &KernelSpec, w: &[f64], v: &[f64]) -> Result<()> {
    if w.len() != k.n || v.len() != k.n {
        return domain(format!("w and v must have {} components", k.n));
    }
    if w == v && k.diagonal_exponent() < 0.0 {
        return domain(format!(
            "diagonal: K(w, w) diverges like |w - v|^{}",
            k.diagonal_exponent()
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of `K(w, v)`.
pub fn kernel_eval(k: &KernelSpec, w: &[f64], v: &[f64], n_samples: u64, seed: u64) -> Result<McEstimate> {
    kernel_eval_with(k, w, v, n_samples, seed, &McOptions::default())
}

pub fn kernel_eval_with(
    k: &KernelSpec,
    w: &[f64],
    v: &[f64],
    n_samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    check_pair(k, w, v)?;
    let core = KernelCore::new(k, opts)?;
    Ok(estimate(&PairDraw { core: &core, w, v }, n_samples, seed, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityFit {
    pub degree: f64,
    pub std_error: f64,
    pub r2: f64,
    pub chi2_per_dof: f64,
    pub predicted: f64,
    pub points: Vec<(f64, McEstimate)>,
}

impl HomogeneityFit {
    /// `|degree - predicted|` in standard errors.
    pub fn z(&self) -> f64 {
        (self.degree - self.predicted).abs() / self.std_error
    }
}

/// Fits `d` in `K_0(sw, sv) = s^d K_0(w, v)` by weighted log-log
/// regression over `scales` (at least four), one independent MC run per
/// scale. A point further than 3 standard errors from the line is an error.
pub fn homogeneity_degree(
    k: &KernelSpec,
    w: &[f64],
    v: &[f64],
    scales: &[f64],
    n_samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<HomogeneityFit> {
    if k.variant != KernelVariant::Zero {
        return domain("homogeneity is only defined for K_0");
    }
    if scales.len() < 4 {
        return domain(format!("need at least 4 scales, got {}", scales.len()));
    }
    let mut points = Vec::with_capacity(scales.len());
    for (i, &s) in scales.iter().enumerate() {
        let ws: Vec<f64> = w.iter().map(|x| s * x).collect();
        let vs: Vec<f64> = v.iter().map(|x| s * x).collect();
        let e = kernel_eval_with(k, &ws, &vs, n_samples, derive_seed(seed, i as u64), opts)?;
        points.push((s, e));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.value.ln()).collect();
    let sig: Vec<f64> = points.iter().map(|p| p.1.relative_error()).collect();
    let fit: LineFit = fit_line(&x, &y, Some(&sig))?;
    for i in 0..x.len() {
        let r = (y[i] - fit.slope * x[i] - fit.intercept) / sig[i];
        if r.abs() > 3.0 {
            return Err(Error::HomogeneityViolated(format!(
                "not-homogeneous: scale {} is {r:.2} standard errors off the power law",
                scales[i]
            )));
        }
    }
    Ok(HomogeneityFit {
        degree: fit.slope,
        std_error: fit.slope_std_error,
        r2: fit.r2,
        chi2_per_dof: fit.chi2_per_dof,
        predicted: k.predicted_degree(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurReport {
    pub value: McEstimate,
    /// Measured power of `K_0(w, ê₁)|w|^{-n/2}` as `|w| → 0`.
    pub exponent_at_zero: f64,
    /// The same as `|w| → ∞`.
    pub exponent_at_infinity: f64,
}

/// Radii used to measure the end behaviour of the Schur integrand.
pub const SCHUR_SMALL: [f64; 3] = [1e-3, 3e-3, 1e-2];
pub const SCHUR_LARGE: [f64; 3] = [1e2, 3e2, 1e3];

/// Draws `w` and integrates `K_0(w, ê₁)|w|^{-n/2}` jointly with the kernel.
/// `w` is rotated into the `(ê₁, ê₂)` half-plane before the kernel draw.
struct SchurDraw {
    core: KernelCore,
    prop: Proposal,
    e1: Vec<f64>,
}

impl Draw for SchurDraw {
    type State = (Vec<f64>, Vec<f64>, Vec<f64>);

    fn state(&self) -> Self::State {
        let n = self.e1.len();
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }

    fn draw(&self, st: &mut Self::State, rng: &mut McRng) -> Option<f64> {
        let (w, plane, u) = st;
        let q = self.prop.sample(rng, w);
        let r = norm(w);
        if !(r > 0.0) {
            return None;
        }
        let perp = (r * r - w[0] * w[0]).max(0.0).sqrt();
        plane.iter_mut().for_each(|x| *x = 0.0);
        plane[0] = w[0];
        plane[1] = perp;
        let k = self.core.draw_at(plane, &self.e1, u, rng)?;
        Some(k * r.powf(-0.5 * self.e1.len() as f64) / q)
    }
}

/// `A = ∫ K_0(w, ê₁)|w|^{-n/2} dw` after checking that the integrand decays
/// faster than `|w|^{-n}` at infinity and slower at zero.
pub fn schur_constant(k: &KernelSpec, n_samples: u64, seed: u64, opts: &McOptions) -> Result<SchurReport> {
    if k.variant != KernelVariant::Zero {
        return domain("the Schur constant is defined for K_0");
    }
    let n = k.n;
    let nf = n as f64;
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let slope = |radii: &[f64], tag: u64| -> Result<f64> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, &r) in radii.iter().enumerate() {
            let mut w = vec![0.0; n];
            w[1] = r;
            let e = kernel_eval_with(k, &w, &e1, n_samples / 20 + 1, derive_seed(seed, tag + i as u64), opts)?;
            x.push(r.ln());
            y.push(e.value.ln() - 0.5 * nf * r.ln());
        }
        Ok(fit_line(&x, &y, None)?.slope)
    };
    let at_zero = slope(&SCHUR_SMALL, 100)?;
    let at_infinity = slope(&SCHUR_LARGE, 200)?;
    if !(at_zero > -nf && at_infinity < -nf) {
        return Err(Error::SchurDivergent {
            at_zero,
            at_infinity,
        });
    }
    // proposal exponents matched to the integrand at 0, at ê₁ and at ∞
    let m = k.m as f64;
    let core = KernelCore::new(k, opts)?;
    let near_zero = (0.5 * nf - (nf + k.bracket_exponent - k.sigma()).min(0.0)).min(nf - 0.25);
    let near_e1 = -k.diagonal_exponent();
    let tail = (0.5 * m - 1.0).clamp(0.1, 1.0);
    let prop = Proposal::new(vec![
        (0.5, RadialComponent::new(n, None, 1.0, near_zero, tail)?),
        (0.5, RadialComponent::new(n, Some(e1.clone()), 0.5, near_e1, tail)?),
    ])?;
    let d = SchurDraw { core, prop, e1 };
    let value = estimate(&d, n_samples, seed, opts);
    Ok(SchurReport {
        value,
        exponent_at_zero: at_zero,
        exponent_at_infinity: at_infinity,
    })
}

/// Nonnegative function on a cubic grid of `count^n` cells of side
/// `spacing`, centred at the origin, constant on each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub n: usize,
    pub count: usize,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(n: usize, count: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if n == 0 || count == 0 || !(spacing > 0.0) {
            return domain("grid needs n >= 1, count >= 1 and spacing > 0");
        }
        if values.len() != count.pow(n as u32) {
            return domain(format!("grid needs {} values, got {}", count.pow(n as u32), values.len()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return domain("grid values must be finite and nonnegative");
        }
        Ok(Self {
            n,
            count,
            spacing,
            values,
        })
    }

    /// Samples `f` at the cell centres of `[-half_width, half_width]^n`.
    pub fn from_fn(n: usize, half_width: f64, count: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let spacing = 2.0 * half_width / count as f64;
        let total = count.pow(n as u32);
        let mut x = vec![0.0; n];
        let values = (0..total)
            .map(|i| {
                Self::center_into(n, count, spacing, i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(n, count, spacing, values)
    }

    fn center_into(n: usize, count: usize, spacing: f64, mut index: usize, out: &mut [f64]) {
        let offset = 0.5 * count as f64;
        for o in out.iter_mut().take(n) {
            let c = index % count;
            index /= count;
            *o = (c as f64 + 0.5 - offset) * spacing;
        }
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        Self::center_into(self.n, self.count, self.spacing, index, &mut x);
        x
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.n as i32)
    }

    /// `‖f‖²` of the piecewise-constant function.
    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticReport {
    /// `Σ_{i≠j}` cell pairs.
    pub off_diagonal: McEstimate,
    /// Same-cell pairs.
    pub diagonal: McEstimate,
    pub total: f64,
    pub total_std_error: f64,
    pub norm2: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
    pub diagonal_share: f64,
}

/// Largest same-cell share of the form accepted by [`quadratic_form`].
pub const MAX_DIAGONAL_SHARE: f64 = 0.2;

/// Inverse CDF table for drawing cells.
struct CellTable {
    cum: Vec<f64>,
}

impl CellTable {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        cum.iter_mut().for_each(|c| *c /= acc);
        Self { cum }
    }

    fn pick(&self, rng: &mut McRng) -> usize {
        let u: f64 = rng.random();
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

struct FormDraw<'a> {
    core: &'a KernelCore,
    f: &'a GridFunction,
    table: CellTable,
    /// `(Σ f_i h^n)²` for pairs, `Σ f_i² h^{2n}` for the diagonal.
    mass: f64,
    diagonal: bool,
}

impl FormDraw<'_> {
    fn point_in_cell(&self, cell: usize, rng: &mut McRng, out: &mut [f64]) {
        GridFunction::center_into(self.f.n, self.f.count, self.f.spacing, cell, out);
        out.iter_mut()
            .for_each(|o| *o += self.f.spacing * (rng.random::<f64>() - 0.5));
    }

    fn inside(&self, cell: usize, x: &[f64]) -> bool {
        let mut c = vec![0.0; self.f.n];
        GridFunction::center_into(self.f.n, self.f.count, self.f.spacing, cell, &mut c);
        x.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 0.5 * self.f.spacing)
    }
}

impl Draw for FormDraw<'_> {
    type State = (Vec<f64>, Vec<f64>, Vec<f64>);

    fn state(&self) -> Self::State {
        let n = self.f.n;
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }

    fn draw(&self, st: &mut Self::State, rng: &mut McRng) -> Option<f64> {
        let (w, v, u) = st;
        let n = self.f.n;
        let i = self.table.pick(rng);
        self.point_in_cell(i, rng, w);
        if !self.diagonal {
            let j = self.table.pick(rng);
            if i == j {
                return None;
            }
            self.point_in_cell(j, rng, v);
            let k = self.core.draw_at(w, v, u, rng)?;
            return Some(self.mass * k);
        }
        // v - w from ∝ ρ^{-a} on the ball of radius √n h, kept if inside the cell
        let a = -self.core.k.diagonal_exponent();
        let nf = n as f64;
        let radius = self.f.spacing * nf.sqrt();
        let rho = radius * (1.0 - rng.random::<f64>()).powf(1.0 / (nf - a));
        unit_vector(rng, v);
        v.iter_mut().zip(w.iter()).for_each(|(x, c)| *x = c + rho * *x);
        if !self.inside(i, v) {
            return None;
        }
        let q = (nf - a) * rho.powf(-a) / (radius.powf(nf - a) * sphere_area(n - 1));
        let k = self.core.draw_at(w, v, u, rng)?;
        // w uniform in the cell: density h^{-n}, folded into the mass
        Some(self.mass * k / (q * self.f.cell_volume()))
    }
}

/// `∫∫ f(w) K(w, v) f(v) dw dv` for the piecewise-constant `f`, split into
/// distinct-cell and same-cell parts, each estimated with `n_samples` draws.
/// Fails with `GridTooCoarse` when the same-cell part exceeds
/// [`MAX_DIAGONAL_SHARE`] of the total.
pub fn quadratic_form(
    k: &KernelSpec,
    f: &GridFunction,
    n_samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<QuadraticReport> {
    if f.n != k.n {
        return domain(format!("grid dimension {} differs from kernel dimension {}", f.n, k.n));
    }
    let core = KernelCore::new(k, opts)?;
    let norm2 = f.norm2();
    if norm2 == 0.0 {
        let z = McEstimate::zero(n_samples, seed);
        return Ok(QuadraticReport {
            off_diagonal: z,
            diagonal: z,
            total: 0.0,
            total_std_error: 0.0,
            norm2,
            ratio: 0.0,
            ratio_std_error: 0.0,
            diagonal_share: 0.0,
        });
    }
    let vol = f.cell_volume();
    let sum_f: f64 = f.values.iter().sum();
    let sum_f2: f64 = f.values.iter().map(|v| v * v).sum();
    let pairs = FormDraw {
        core: &core,
        f,
        table: CellTable::new(f.values.iter().copied()),
        mass: (sum_f * vol).powi(2),
        diagonal: false,
    };
    let off = estimate(&pairs, n_samples, derive_seed(seed, 0), opts);
    let same = FormDraw {
        core: &core,
        f,
        table: CellTable::new(f.values.iter().map(|v| v * v)),
        mass: sum_f2 * vol * vol,
        diagonal: true,
    };
    let diag = estimate(&same, n_samples, derive_seed(seed, 1), opts);
    let total = off.value + diag.value;
    let total_std_error = off.std_error.hypot(diag.std_error);
    let share = if total > 0.0 { diag.value / total } else { 0.0 };
    if share > MAX_DIAGONAL_SHARE {
        return Err(Error::GridTooCoarse { share });
    }
    Ok(QuadraticReport {
        off_diagonal: off,
        diagonal: diag,
        total,
        total_std_error,
        norm2,
        ratio: total / norm2,
        ratio_std_error: total_std_error / norm2,
        diagonal_share: share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::joint_z;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn opts() -> McOptions {
        McOptions::default()
    }

    #[test]
    fn profiles_normalised() {
        Profile::Exponential { rate: 1.0 }.validate().unwrap();
        Profile::Window { tau0: 1.0, width: 0.01 }.validate().unwrap();
        assert!(Profile::Exponential { rate: -1.0 }.validate().is_err());
        let mut rng = McRng::seed_from_u64(3);
        let p = Profile::Window { tau0: 2.0, width: 0.5 };
        let mean: f64 = (0..20000).map(|_| p.sample(&mut rng)).sum::<f64>() / 20000.0;
        assert!((mean - 2.5).abs() < 0.02);
    }

    #[test]
    fn spec_exponents_and_ranges() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        assert_eq!(k.bracket_exponent, -2.0);
        let k = KernelSpec::phi(3, 3, Profile::default()).unwrap();
        assert_eq!(k.bracket_exponent, -1.0);
        assert_eq!(KernelSpec::zero(3, 3).unwrap().predicted_degree(), -3.0);
        assert_eq!(KernelSpec::zero(2, 3).unwrap().predicted_degree(), -2.0);
        assert!(KernelSpec::tau(3, 5, 1.0).is_err());
        assert!(KernelSpec::tau(3, 2, 1.0).is_err());
        assert!(KernelSpec::tau(3, 3, 0.0).is_err());
        // K_φ at m = n + 1 diverges logarithmically at infinity
        assert!(KernelSpec::phi(3, 4, Profile::default()).is_err());
    }

    #[test]
    fn diagonal_flagged() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let w = [1.0, 0.0, 0.0];
        assert!(kernel_eval(&k, &w, &w, 1000, 1).is_err());
    }

    #[test]
    fn kernel_symmetry() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let w = [1.0, 0.0, 0.0];
        let v = [0.0, 2.0, 0.0];
        let a = kernel_eval(&k, &w, &v, 200_000, 1).unwrap();
        let b = kernel_eval(&k, &v, &w, 200_000, 2).unwrap();
        assert!(joint_z(&a, &b) < 3.0, "{a:?} {b:?}");
        assert!(a.value > 0.0 && a.relative_error() < 0.05);
    }

    #[test]
    fn kernel_opposite_points_finite() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let e = kernel_eval(&k, &[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], 100_000, 4).unwrap();
        assert!(e.value.is_finite() && e.value > 0.0);
    }

    #[test]
    fn grid_function_layout() {
        let f = GridFunction::from_fn(2, 1.0, 4, |x| x[0] + 2.0).unwrap();
        assert_eq!(f.values.len(), 16);
        assert_eq!(f.spacing, 0.5);
        assert_eq!(f.center(0), vec![-0.75, -0.75]);
        assert_eq!(f.center(5), vec![-0.25, -0.25]);
        assert_relative_eq!(f.values[3], 2.75);
        assert!(GridFunction::new(2, 2, 1.0, vec![1.0, -1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_function_gives_zero() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let f = GridFunction::from_fn(3, 1.0, 4, |_| 0.0).unwrap();
        let r = quadratic_form(&k, &f, 1000, 1, &opts()).unwrap();
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn quadratic_ratio_scale_invariant() {
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let f = GridFunction::from_fn(3, 2.0, 4, |x| (-x.iter().map(|a| a * a).sum::<f64>()).exp()).unwrap();
        let a = quadratic_form(&k, &f, 20_000, 9, &opts()).unwrap();
        let b = quadratic_form(&k, &f.scaled(4.0), 20_000, 9, &opts()).unwrap();
        assert_eq!(a.ratio, b.ratio);
    }

    #[test]
    fn coarse_grid_rejected() {
        // one cell holds all the mass
        let k = KernelSpec::tau(3, 3, 1.0).unwrap();
        let f = GridFunction::new(3, 1, 1.0, vec![1.0]).unwrap();
        assert!(matches!(
            quadratic_form(&k, &f, 20_000, 1, &opts()),
            Err(Error::GridTooCoarse { .. })
        ));
    }
}
