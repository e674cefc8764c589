//! Quadrature against surface Monte Carlo for the three-fold form, and
//! the profile-averaged kernel against its fixed-τ limit.

use hsconv::kernels::{kernel_eval, KernelSpec, Profile};
use hsconv::mc::joint_z;
use hsconv::potentials::ConvolutionSpec;
use hsconv::quadrature::delta3_reduced;
use hsconv::surface_mc::estimate_form;

fn mc_delta(n: usize, a: [f64; 3], d: f64, samples: u64, seed: u64) -> (f64, f64) {
    let mut w = vec![0.0; n];
    w[0] = d;
    let spec = ConvolutionSpec::new(n, a.to_vec(), 1.0).unwrap();
    let sigma = 2.0 + a.iter().sum::<f64>() - 2.0 * n as f64;
    let e = estimate_form(&spec, &w, 1.0, None, samples, seed)
        .unwrap()
        .scaled(d.powf(sigma));
    (e.value, e.std_error)
}

fn check(n: usize, a: [f64; 3], d: f64) {
    let mut w = vec![0.0; n];
    w[0] = d;
    let q = delta3_reduced(n, a[0], a[1], a[2], &w, 1e-8).unwrap();
    let (v, se) = mc_delta(n, a, d, 400_000, 11);
    let z = (v - q) / se;
    assert!(z.abs() < 4.0, "n={n} a={a:?} d={d}: quad {q}, mc {v} ± {se}");
    assert!(se / v < 0.02, "relative error {}", se / v);
}

#[test]
fn delta_n3_generic() {
    check(3, [1.5, 1.6, 1.7], 1.0);
}

#[test]
fn delta_n3_uniform_at_unit_norm() {
    check(3, [2.0, 2.0, 2.0], 1.0);
}

#[test]
fn delta_n3_large_alpha2() {
    check(3, [1.3, 2.2, 1.6], 2.0);
}

#[test]
fn delta_prefactor_in_other_dimensions() {
    check(2, [0.8, 0.9, 1.0], 0.7);
    check(4, [2.0, 2.5, 2.5], 1.3);
}

#[test]
fn phi_kernel_concentrates_on_fixed_tau() {
    let (w, v) = ([1.0, 0.0, 0.0], [0.0, 2.0, 0.0]);
    let narrow = KernelSpec::phi(3, 3, Profile::Window { tau0: 1.0, width: 0.01 }).unwrap();
    let fixed = KernelSpec::tau(3, 3, 1.0)
        .unwrap()
        .with_bracket_exponent(narrow.bracket_exponent);
    let a = kernel_eval(&narrow, &w, &v, 400_000, 21).unwrap();
    let b = kernel_eval(&fixed, &w, &v, 400_000, 22).unwrap();
    assert!(joint_z(&a, &b).abs() < 4.0, "{a:?} vs {b:?}");
}
