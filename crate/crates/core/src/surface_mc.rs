//! Monte Carlo estimation of the `m`-fold surface integrals
//!
//! `∫ ∏|x_k|^{-α_k} · extra · δ(τ + Σ′|x_k|² - |x_m|²) δ(w - Σx_k) dx₁…dx_m`.
//!
//! The vector delta is removed by `x_m = w - Σ_{k<m} x_k`. One of the first
//! `m - 1` points is written `rω`; for fixed other points the scalar
//! constraint is linear in `r`, `r = (|v|² - τ - S) / (2 v·ω)`, which leaves
//! the Jacobian `1/|2 v·ω|`. The remaining points are drawn from radial
//! power-law mixtures matched to their `|x|^{-α}` singularities and `ω` from
//! a mixture that puts extra mass near the grazing set `v·ω = 0`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{estimate, Draw, McEstimate, McOptions, McRng};
use crate::potentials::ConvolutionSpec;
use crate::quadrature::sphere_area;

/// Rays with `|v·ω|` below this are rejected.
pub const GRAZING: f64 = 1e-14;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn unit_vector(rng: &mut McRng, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            s += g * g;
        }
        if s > 1e-300 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}

/// Density `∝ ρ^{n-1-a}` on `(0, L]` and `∝ ρ^{-1-δ}` beyond, in
/// `ρ = |x - center|`, with a uniform direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialComponent {
    pub center: Option<Vec<f64>>,
    pub scale: f64,
    pub a: f64,
    pub delta: f64,
    n: usize,
    p_inner: f64,
    log_norm: f64,
}

impl RadialComponent {
    pub fn new(n: usize, center: Option<Vec<f64>>, scale: f64, a: f64, delta: f64) -> Result<Self> {
        let nf = n as f64;
        if !(a < nf) || !(scale > 0.0) || !(delta > 0.0) {
            return domain(format!(
                "radial proposal needs a < n, scale > 0, delta > 0 (a = {a}, scale = {scale}, delta = {delta})"
            ));
        }
        let inner = 1.0 / (nf - a);
        let outer = 1.0 / delta;
        // log of Z · |S^{n-1}| with Z = L^{n-a}(1/(n-a) + 1/δ)
        let log_norm = (nf - a) * scale.ln() + (inner + outer).ln() + sphere_area(n - 1).ln();
        Ok(Self {
            center,
            scale,
            a,
            delta,
            n,
            p_inner: inner / (inner + outer),
            log_norm,
        })
    }

    fn sample(&self, rng: &mut McRng, out: &mut [f64]) {
        let nf = self.n as f64;
        let u: f64 = rng.random();
        let v: f64 = 1.0 - rng.random::<f64>();
        let rho = if u < self.p_inner {
            self.scale * v.powf(1.0 / (nf - self.a))
        } else {
            self.scale * v.powf(-1.0 / self.delta)
        };
        unit_vector(rng, out);
        out.iter_mut().for_each(|o| *o *= rho);
        if let Some(c) = &self.center {
            out.iter_mut().zip(c).for_each(|(o, c)| *o += c);
        }
    }

    fn density(&self, x: &[f64]) -> f64 {
        let rho = match &self.center {
            Some(c) => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            None => norm(x),
        };
        let nf = self.n as f64;
        // q(x) = p(ρ) / (|S^{n-1}| ρ^{n-1})
        let log_p = if rho <= self.scale {
            -self.a * rho.ln()
        } else {
            (nf - 1.0 - self.a) * self.scale.ln() - (1.0 + self.delta) * (rho / self.scale).ln()
                - (nf - 1.0) * rho.ln()
        };
        (log_p - self.log_norm).exp()
    }
}

/// Finite mixture of [`RadialComponent`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub components: Vec<(f64, RadialComponent)>,
}

impl Proposal {
    pub fn new(components: Vec<(f64, RadialComponent)>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.is_empty() || !(total > 0.0) {
            return domain("proposal needs at least one component with positive weight");
        }
        Ok(Self {
            components: components.into_iter().map(|(w, c)| (w / total, c)).collect(),
        })
    }

    /// Components at the origin with exponent `a` at each of `scales`.
    pub fn at_origin(n: usize, a: f64, scales: &[f64], delta: f64) -> Result<Self> {
        let comps = scales
            .iter()
            .map(|&s| RadialComponent::new(n, None, s, a, delta).map(|c| (1.0, c)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn sample(&self, rng: &mut McRng, out: &mut [f64]) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &self.components[self.components.len() - 1].1;
        for (w, c) in &self.components {
            acc += w;
            if u < acc {
                chosen = c;
                break;
            }
        }
        chosen.sample(rng, out);
        self.density(out)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|(w, c)| w * c.density(x)).sum()
    }
}

/// Distinct positive scales, merging ones within a factor 2.
pub fn scale_set(candidates: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = candidates.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::new();
    for x in s {
        if out.last().is_none_or(|&l| x > 2.0 * l) {
            out.push(x);
        }
    }
    if out.is_empty() {
        out.push(1.0);
    }
    out
}

/// Sampler for `ω` relative to a given axis: half uniform on the sphere,
/// half with `u = ω·axis` drawn from `∝ |u|^{-κ}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DirectionSampler {
    n: usize,
    kappa: f64,
    area: f64,
    area_minus: f64,
}

impl DirectionSampler {
    pub(crate) fn new(n: usize, kappa: f64) -> Self {
        Self {
            n,
            kappa,
            area: sphere_area(n - 1),
            area_minus: sphere_area(n - 2),
        }
    }

    /// Draws `ω` into `out` and returns `(u, 1/q(ω))`.
    pub(crate) fn sample(&self, rng: &mut McRng, axis: &[f64], out: &mut [f64]) -> (f64, f64) {
        if self.kappa <= 0.0 {
            unit_vector(rng, out);
            return (dot(axis, out), self.area);
        }
        let pick: f64 = rng.random();
        if pick < 0.5 {
            unit_vector(rng, out);
        } else {
            let v: f64 = 1.0 - rng.random::<f64>();
            let mag = v.powf(1.0 / (1.0 - self.kappa));
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let u = sign * mag;
            // η uniform on the sphere orthogonal to the axis
            loop {
                unit_vector(rng, out);
                let c = dot(axis, out);
                out.iter_mut().zip(axis).for_each(|(o, a)| *o -= c * a);
                let l = norm(out);
                if l > 1e-8 {
                    let s = (1.0 - u * u).max(0.0).sqrt() / l;
                    out.iter_mut().zip(axis).for_each(|(o, a)| *o = *o * s + u * a);
                    break;
                }
            }
        }
        // recomputed so that the radial solve sees exactly the stored ω
        let u = dot(axis, out);
        (u, self.inverse_density(u))
    }

    fn inverse_density(&self, u: f64) -> f64 {
        let nf = self.n as f64;
        let one_m = ((1.0 - u) * (1.0 + u)).max(0.0);
        let jac = one_m.powf(0.5 * (nf - 3.0));
        let g_pow = 0.5 * (1.0 - self.kappa) * u.abs().powf(-self.kappa);
        // |S^{n-2}| jac / g(u), with jac divided through
        self.area_minus / (0.5 * self.area_minus / self.area + 0.5 * g_pow / jac)
    }
}

/// One accepted point of the constrained surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub free_points: Vec<Vec<f64>>,
    pub direction: Vec<f64>,
    pub resolved_radius: f64,
    pub last_point: Vec<f64>,
    pub jacobian: f64,
    pub importance_weight: f64,
    /// All `m` points in their original order (free, resolved and last).
    pub points: Vec<Vec<f64>>,
}

impl SurfaceSample {
    /// `τ + Σ′|x_k|² - |x_m|²` relative to `|x_m|²`.
    pub fn constraint_residual(&self, tau: f64) -> f64 {
        let m = self.points.len();
        let s: f64 = self.points[..m - 1].iter().map(|x| dot(x, x)).sum();
        let last = dot(&self.points[m - 1], &self.points[m - 1]);
        (tau + s - last).abs() / last.max(tau).max(f64::MIN_POSITIVE)
    }
}

/// Weighted extra factor, called with the `m` points laid out flat
/// (`m·n` values, point `k` at `[k n, (k+1) n)`).
pub type ExtraFactor<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

/// The configured sampler for one `(w, τ)`.
pub struct SurfaceSampler<'a> {
    n: usize,
    m: usize,
    alphas: Vec<f64>,
    w: Vec<f64>,
    tau: f64,
    /// Slot written as `rω`.
    resolved: usize,
    free: Vec<(usize, Proposal)>,
    direction: DirectionSampler,
    fold: bool,
    extra: Option<&'a ExtraFactor<'a>>,
}

pub struct SamplerState {
    pts: Vec<f64>,
    v: Vec<f64>,
    axis: Vec<f64>,
    omega: Vec<f64>,
}

impl<'a> SurfaceSampler<'a> {
    /// Default proposals: every free point from the origin-centred mixture
    /// with exponent `α_k` at scales `{√τ, |w|}`.
    pub fn new(spec: &ConvolutionSpec, w: &[f64], tau: f64, opts: &McOptions) -> Result<Self> {
        let scales = scale_set(&[tau.sqrt(), norm(w)]);
        let n = spec.n;
        let resolved = Self::resolved_slot(&spec.alphas);
        let free = (0..spec.m - 1)
            .filter(|&k| k != resolved)
            .map(|k| Ok((k, Proposal::at_origin(n, spec.alphas[k], &scales, opts.delta_tail)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_proposals(spec, w, tau, resolved, free)
    }

    /// The slot among the first `m - 1` with the largest exponent.
    pub fn resolved_slot(alphas: &[f64]) -> usize {
        let m = alphas.len();
        let mut best = 0;
        for k in 1..m - 1 {
            if alphas[k] > alphas[best] {
                best = k;
            }
        }
        best
    }

    pub fn with_proposals(
        spec: &ConvolutionSpec,
        w: &[f64],
        tau: f64,
        resolved: usize,
        free: Vec<(usize, Proposal)>,
    ) -> Result<Self> {
        let (n, m) = (spec.n, spec.m);
        if m < 2 {
            return domain(format!("surface sampling needs m >= 2, got {m}"));
        }
        if w.len() != n {
            return domain(format!("w has {} components, expected {n}", w.len()));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return domain(format!("tau must be finite and >= 0, got {tau}"));
        }
        if m == 2 {
            let w2 = dot(w, w);
            if (w2 - tau).abs() <= 1e-14 * w2.max(tau) {
                return Err(Error::DegenerateSurface(format!(
                    "m = 2 with |w|^2 = tau = {tau}: the resolved radius vanishes identically"
                )));
            }
        }
        if resolved >= m - 1 || free.len() != m - 2 {
            return domain("inconsistent free/resolved slot layout");
        }
        // weight ~ |v·ω|^{-p} near grazing rays, p = n - α_res - α_m
        let p = n as f64 - spec.alphas[resolved] - spec.alphas[m - 1];
        let kappa = if p > 0.0 { p.min(0.9) } else { 0.0 };
        Ok(Self {
            n,
            m,
            alphas: spec.alphas.clone(),
            w: w.to_vec(),
            tau,
            resolved,
            free,
            direction: DirectionSampler::new(n, kappa),
            fold: m == 2,
            extra: None,
        })
    }

    pub fn with_extra(mut self, extra: &'a ExtraFactor<'a>) -> Self {
        self.extra = Some(extra);
        self
    }

    pub fn new_state(&self) -> SamplerState {
        SamplerState {
            pts: vec![0.0; self.m * self.n],
            v: vec![0.0; self.n],
            axis: vec![0.0; self.n],
            omega: vec![0.0; self.n],
        }
    }

    /// One draw; on acceptance the points are left in `st.pts` and the
    /// weight (excluding `extra`) is returned with `(r, 1/|2v·ω|)`.
    fn draw_raw(&self, st: &mut SamplerState, rng: &mut McRng) -> Option<(f64, f64, f64)> {
        let n = self.n;
        st.v.copy_from_slice(&self.w);
        let mut s = 0.0;
        let mut weight = 1.0;
        for (k, prop) in &self.free {
            let x = &mut st.pts[k * n..(k + 1) * n];
            let q = prop.sample(rng, x);
            let r2 = dot(x, x);
            weight *= r2.powf(-0.5 * self.alphas[*k]) / q;
            s += r2;
            st.v.iter_mut().zip(x.iter()).for_each(|(v, x)| *v -= x);
        }
        let vn = norm(&st.v);
        if !(vn > 0.0) {
            return None;
        }
        st.axis.iter_mut().zip(&st.v).for_each(|(a, v)| *a = v / vn);
        let numer = vn * vn - self.tau - s;
        let (mut u, mut inv_q) = self.direction.sample(rng, &st.axis, &mut st.omega);
        if self.fold {
            // the sign of v·ω must match the sign of the numerator
            if (u > 0.0) != (numer > 0.0) {
                st.omega.iter_mut().for_each(|o| *o = -*o);
                u = -u;
            }
            inv_q *= 0.5;
        }
        let vdot = vn * u;
        if vdot.abs() < GRAZING {
            return None;
        }
        let r = numer / (2.0 * vdot);
        if !(r > 0.0) || !r.is_finite() {
            return None;
        }
        let res = self.resolved;
        let m = self.m;
        for i in 0..n {
            let xr = r * st.omega[i];
            st.pts[res * n + i] = xr;
            st.pts[(m - 1) * n + i] = st.v[i] - xr;
        }
        let last = norm(&st.pts[(m - 1) * n..]);
        let jac = 1.0 / (2.0 * vdot.abs());
        weight *= inv_q
            * r.powf(n as f64 - 1.0 - self.alphas[res])
            * last.powf(-self.alphas[m - 1])
            * jac;
        Some((weight, r, jac))
    }

    fn draw_weight(&self, st: &mut SamplerState, rng: &mut McRng) -> Option<f64> {
        let (w, _, _) = self.draw_raw(st, rng)?;
        let e = match self.extra {
            Some(f) => f(&st.pts),
            None => 1.0,
        };
        Some(w * e)
    }

    /// A full [`SurfaceSample`] record, or `None` on rejection.
    pub fn sample(&self, rng: &mut McRng) -> Option<SurfaceSample> {
        let mut st = self.new_state();
        let (w, r, jac) = self.draw_raw(&mut st, rng)?;
        let e = self.extra.map_or(1.0, |f| f(&st.pts));
        let n = self.n;
        let points: Vec<Vec<f64>> = st.pts.chunks(n).map(|c| c.to_vec()).collect();
        Some(SurfaceSample {
            free_points: self.free.iter().map(|(k, _)| points[*k].clone()).collect(),
            direction: st.omega.clone(),
            resolved_radius: r,
            last_point: points[self.m - 1].clone(),
            jacobian: jac,
            importance_weight: w * e,
            points,
        })
    }

    pub fn estimate(&self, n_samples: u64, seed: u64, opts: &McOptions) -> McEstimate {
        estimate(self, n_samples, seed, opts)
    }
}

impl Draw for SurfaceSampler<'_> {
    type State = SamplerState;

    fn state(&self) -> SamplerState {
        self.new_state()
    }

    fn draw(&self, st: &mut SamplerState, rng: &mut McRng) -> Option<f64> {
        self.draw_weight(st, rng)
    }
}

/// One draw from the surface measure at `(w, τ)` with the default proposals.
pub fn sample_surface(
    spec: &ConvolutionSpec,
    w: &[f64],
    tau: f64,
    seed: u64,
) -> Result<Option<SurfaceSample>> {
    use rand::SeedableRng;
    let sampler = SurfaceSampler::new(spec, w, tau, &McOptions::default())?;
    let mut rng = McRng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}

/// Estimates `∫ ∏|x_k|^{-α_k} · extra · dν` at `(w, τ)`.
pub fn estimate_form(
    spec: &ConvolutionSpec,
    w: &[f64],
    tau: f64,
    extra: Option<&ExtraFactor>,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    estimate_form_with(spec, w, tau, extra, n_samples, seed, &McOptions::default())
}

pub fn estimate_form_with(
    spec: &ConvolutionSpec,
    w: &[f64],
    tau: f64,
    extra: Option<&ExtraFactor>,
    n_samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    let mut sampler = SurfaceSampler::new(spec, w, tau, opts)?;
    if let Some(e) = extra {
        sampler = sampler.with_extra(e);
    }
    Ok(sampler.estimate(n_samples, seed, opts))
}

/// Which prefactored uniform-potential form [`km_form`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KmVariant {
    /// `m = n` factors, prefactor `|w|²`.
    Full,
    /// `m = 3` factors, prefactor `|w|^{n-1}`.
    Triple,
}

/// The uniform-potential forms with their boundedness prefactors.
pub fn km_form(n: usize, m: usize, w: &[f64], tau: f64, n_samples: u64, seed: u64) -> Result<McEstimate> {
    km_form_with(n, m, w, tau, n_samples, seed, &McOptions::default())
}

pub fn km_form_with(
    n: usize,
    m: usize,
    w: &[f64],
    tau: f64,
    n_samples: u64,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    let pref_exp = if m == 3 {
        (n - 1) as f64
    } else if m == n {
        2.0
    } else {
        return domain(format!("km_form covers m = n or m = 3, got n = {n}, m = {m}"));
    };
    let spec = ConvolutionSpec::uniform(n, m, tau)?;
    let e = estimate_form_with(&spec, w, tau, None, n_samples, seed, opts)?;
    Ok(e.scaled(norm(w).powf(pref_exp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::joint_z;
    use crate::potentials::theta_closed_form;
    use rand::SeedableRng;

    #[test]
    fn m2_residual_and_radius() {
        let spec = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        let w = [0.3, -1.1, 0.8];
        let sampler = SurfaceSampler::new(&spec, &w, 1.0, &McOptions::default()).unwrap();
        let mut rng = McRng::seed_from_u64(5);
        for _ in 0..1000 {
            let s = sampler.sample(&mut rng).expect("folded m = 2 always accepts");
            let w2 = dot(&w, &w);
            let expect = (w2 - 1.0) / (2.0 * dot(&w, &s.direction));
            assert!((s.resolved_radius - expect).abs() <= 1e-12 * expect.abs());
            let d: Vec<f64> = w.iter().zip(&s.direction).map(|(a, b)| a - s.resolved_radius * b).collect();
            let res = 1.0 + s.resolved_radius.powi(2) - dot(&d, &d);
            assert!(res.abs() <= 1e-12 * dot(&d, &d).max(1.0));
        }
    }

    #[test]
    fn m3_invariants() {
        let spec = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        let w = [1.0, 0.0, 0.0];
        let mut accepted = 0;
        for seed in 0..200 {
            if let Some(s) = sample_surface(&spec, &w, 1.0, seed).unwrap() {
                accepted += 1;
                let sum: Vec<f64> = (0..3).map(|i| s.points.iter().map(|p| p[i]).sum()).collect();
                for i in 0..3 {
                    assert!((sum[i] - w[i]).abs() < 1e-12);
                }
                assert!(s.constraint_residual(1.0) <= 1e-10);
                assert!(s.resolved_radius > 0.0 && s.importance_weight > 0.0);
            }
        }
        assert!(accepted > 0 && accepted < 200);
    }

    #[test]
    fn degenerate_m2() {
        let spec = ConvolutionSpec::new(3, vec![1.2, 1.4], 1.0).unwrap();
        assert!(matches!(
            SurfaceSampler::new(&spec, &[1.0, 0.0, 0.0], 1.0, &McOptions::default()),
            Err(Error::DegenerateSurface(_))
        ));
    }

    #[test]
    fn m2_matches_closed_form() {
        let (n, a, l) = (3, 1.2, 1.4);
        let spec = ConvolutionSpec::new(n, vec![a, l], 1.0).unwrap();
        let sigma = spec.rho();
        for &d in &[0.3, 2.0] {
            let w = [d, 0.0, 0.0];
            let e = estimate_form(&spec, &w, 1.0, None, 400_000, 11).unwrap().scaled(d.powf(sigma));
            let c = theta_closed_form(n, a, l, d).unwrap();
            assert!((e.value - c).abs() < 4.0 * e.std_error, "{e:?} vs {c}");
            assert!(e.relative_error() < 0.02);
        }
    }

    #[test]
    fn proposal_density_integrates_to_one() {
        // radial integral of q over R^3 via the ρ-density
        let c = RadialComponent::new(3, None, 2.0, 1.5, 1.0).unwrap();
        let f = |rho: f64| c.density(&[rho, 0.0, 0.0]) * sphere_area(2) * rho * rho;
        let inner = crate::quadrature::tanh_sinh(|r, _, _| f(r), 0.0, 2.0, 1e-12).unwrap();
        let outer = crate::quadrature::tanh_sinh(|v, _, _| f(2.0 / v) * 2.0 / (v * v), 0.0, 1.0, 1e-12).unwrap();
        assert!((inner + outer - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance_m3() {
        let spec = ConvolutionSpec::uniform(3, 3, 1.0).unwrap();
        let a = estimate_form(&spec, &[1.5, 0.0, 0.0], 1.0, None, 200_000, 1).unwrap();
        let b = estimate_form(&spec, &[0.0, 0.9, 1.2], 1.0, None, 200_000, 2).unwrap();
        assert!(joint_z(&a, &b) < 4.0, "{a:?} {b:?}");
    }
}
