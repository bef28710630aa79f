mod common;

use std::f64::consts::PI;

use common::{direct_grid, direct_integral, mag_sq, random, rel};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbf::spectral::io::{field_from_json, field_from_json_standalone, field_to_json, read_field_binary, write_field_binary};
use scbf::spectral::{
    check_interpolation, dual_norm, field_norms, galerkin_truncate, leray_project, norm, random_divfree_field,
    smoothing_projection, stokes_apply, stokes_inverse, weighted_h_norm,
};
use scbf::{make_domain, Error, Norm, SpectralField};

fn z(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Hermitian field with random coefficients in every direction, so it is
/// generally not divergence-free.
fn rough_field(d: &scbf::Domain, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(d);
    for idx in 0..d.len() {
        if d.is_active(idx) && d.conjugate_index(idx) > idx {
            let v: Vec<Complex64> = (0..d.dim()).map(|_| z(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            u.set_mode(d.wavenumber(idx), &v).unwrap();
        }
    }
    u
}

/// Quadrature resolution for integrands of degree `p`: oversampled, and at
/// least `p/2` times the base grid.
fn grid(d: &scbf::Domain, p: f64) -> usize {
    d.oversample().max((p / 2.0).ceil() as usize) * d.resolution()
}

#[test]
fn domain_wavenumbers_and_eigenvalues() {
    let d = make_domain(2, 8, 2).unwrap();
    assert_eq!(d.len(), 64);
    for idx in 0..d.len() {
        assert!(d.wavenumber(idx).iter().all(|&k| (-3..=4).contains(&k)));
    }
    assert_eq!(d.lambda1(), 1.0);
    assert_eq!(d.eigenvalues()[0], 1.0);

    let d3 = make_domain(3, 16, 2).unwrap();
    assert_eq!(d3.len(), 16 * 16 * 16);
    let ev = d3.eigenvalues();
    assert!(ev[..6].iter().all(|&l| l == 1.0));
    assert_eq!(ev[6], 2.0);
}

#[test]
fn domain_preconditions() {
    for (dim, n, os) in [(2, 7, 2), (2, 6, 2), (4, 8, 2), (1, 8, 2), (2, 8, 1)] {
        assert!(matches!(make_domain(dim, n, os), Err(Error::Config(_))), "{dim} {n} {os}");
    }
}

#[test]
fn leray_projection_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let mut g = SpectralField::zeros(&d);
    g.set_mode(&[1, 0], &[z(1.0, 0.0), z(0.0, 0.0)]).unwrap();
    assert!(leray_project(&g).is_zero());
    let mut s = SpectralField::zeros(&d);
    s.set_mode(&[1, 0], &[z(0.0, 0.0), z(1.0, 0.0)]).unwrap();
    assert_eq!(leray_project(&s), s);

    for seed in 0..5 {
        let u = rough_field(&d, seed);
        let p = leray_project(&u);
        assert!(p.max_divergence() < 1e-14);
        assert!(leray_project(&p).max_abs_diff(&p) < 1e-15);
        assert!(p.norm_h_sq() <= u.norm_h_sq());
    }
}

#[test]
fn stokes_operator_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let mut u = SpectralField::zeros(&d);
    u.set_mode(&[1, 0], &[z(0.0, 0.0), z(0.5, 0.0)]).unwrap();
    assert_eq!(stokes_apply(&u), u);
    let mut w = SpectralField::zeros(&d);
    w.set_mode(&[2, 1], &[z(0.2, -0.1), z(-0.4, 0.2)]).unwrap();
    assert!(stokes_apply(&w).max_abs_diff(&w.scale(5.0)) < 1e-15);
    for seed in 0..10 {
        let r = random(&d, 1.0, seed);
        let au = stokes_apply(&r);
        assert!(rel(au.inner(&r), r.norm_v_sq()) < 1e-13);
        assert!(au.inner(&r) >= d.lambda1() * r.norm_h_sq() * (1.0 - 1e-14));
        assert!(stokes_inverse(&au).max_abs_diff(&r) < 1e-14);
        // ‖u‖_{V'} = ‖A^{-1/2} u‖_H ≤ ‖u‖_H
        assert!(dual_norm(&r) <= r.norm_h_sq().sqrt() * (1.0 + 1e-14));
    }
}

#[test]
fn cosine_shear_norms_match_closed_forms() {
    let d = make_domain(2, 8, 4).unwrap();
    let u = SpectralField::shear(&d, 1.0, 1).unwrap();
    assert!(rel(norm(&u, Norm::H).unwrap().powi(2), 2.0 * PI * PI) < 1e-14);
    assert!(rel(norm(&u, Norm::Lp(4.0)).unwrap().powi(4), 1.5 * PI * PI) < 1e-13);
    assert!(rel(norm(&u, Norm::V).unwrap(), norm(&u, Norm::H).unwrap()) < 1e-15);
    assert!(norm(&u, Norm::Lp(0.5)).is_err());
    let all = field_norms(&u, &[2.0, 4.0]).unwrap();
    assert!(rel(all.lp[0].1, all.h) < 1e-13);
}

#[test]
fn lp_norms_match_direct_quadrature() {
    let d = make_domain(2, 8, 2).unwrap();
    for seed in 0..4 {
        let u = random(&d, 3.0, seed);
        for p in [2.0, 3.0, 4.0, 6.0] {
            let oracle = direct_integral(&u, grid(&d, p), |v| mag_sq(v).powf(p / 2.0)).powf(1.0 / p);
            assert!(rel(norm(&u, Norm::Lp(p)).unwrap(), oracle) < 1e-8, "p = {p}");
        }
    }
}

#[test]
fn weighted_norm_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let w = random(&d, 2.0, 1);
    assert_eq!(weighted_h_norm(&w, &SpectralField::zeros(&d), 3.0).unwrap(), 0.0);

    let d3 = make_domain(3, 8, 2).unwrap();
    let unit = SpectralField::beltrami(&d3, 1.0).unwrap();
    let w3 = random(&d3, 2.0, 2);
    for r in [3.0, 4.5, 5.0] {
        assert!(rel(weighted_h_norm(&w3, &unit, r).unwrap(), w3.norm_h_sq()) < 1e-12);
    }

    for seed in 0..3 {
        let v = random(&d, 3.0, 10 + seed);
        let w = random(&d, 2.0, 20 + seed);
        for r in [3.0, 4.0, 5.0] {
            let m = grid(&d, r + 1.0);
            let gv = direct_grid(&v, m);
            let gw = direct_grid(&w, m);
            let cell = (2.0 * PI / m as f64).powi(2);
            let oracle: f64 =
                gv.iter().zip(&gw).map(|(a, b)| mag_sq(a).powf((r - 1.0) / 2.0) * mag_sq(b)).sum::<f64>() * cell;
            assert!(rel(weighted_h_norm(&w, &v, r).unwrap(), oracle) < 1e-8, "r = {r}");
        }
    }
}

#[test]
fn smoothing_projection_examples() {
    let d = make_domain(2, 16, 2).unwrap();
    let u = SpectralField::shear(&d, 1.0, 1).unwrap();
    let p2 = smoothing_projection(&u, 2).unwrap();
    assert!(p2.max_abs_diff(&u.scale((-0.5f64).exp())) < 1e-16);
    // λ = 1 is not below n² = 1
    assert!(smoothing_projection(&u, 1).unwrap().is_zero());
    assert!(smoothing_projection(&u, 0).is_err());

    let r = random(&d, 2.0, 5);
    let mut prev = f64::INFINITY;
    for n in [1, 2, 3, 5, 8, 13, 100, 10_000, 1_000_000] {
        let p = smoothing_projection(&r, n).unwrap();
        assert!(p.norm_h_sq() <= r.norm_h_sq());
        let rest = (&r - &p).norm_h_sq().sqrt();
        assert!(rest <= prev * (1.0 + 1e-14));
        prev = rest;
    }
    assert!(prev < 1e-3 * r.norm_h_sq().sqrt());
}

#[test]
fn galerkin_truncation_examples() {
    let d = make_domain(2, 16, 2).unwrap();
    let u = random(&d, 2.0, 6);
    assert_eq!(galerkin_truncate(&u, 8), u);
    assert_eq!(galerkin_truncate(&u, 100), u);
    assert!(galerkin_truncate(&u, 0).is_zero());
    let mut prev = f64::INFINITY;
    for k in 1..=7 {
        let err = norm(&(&galerkin_truncate(&u, k) - &u), Norm::Lp(4.0)).unwrap();
        assert!(err < prev, "k = {k}");
        prev = err;
    }
}

#[test]
fn random_field_examples() {
    let d = make_domain(3, 8, 2).unwrap();
    let a = random_divfree_field(&d, 2.5, 1.0, 42).unwrap();
    let b = random_divfree_field(&d, 2.5, 1.0, 42).unwrap();
    assert_eq!(a, b);
    assert!(leray_project(&a).max_abs_diff(&a) < 1e-14);
    assert!(a.max_divergence() < 1e-13);
    assert!(random_divfree_field(&d, 2.5, 0.0, 42).unwrap().is_zero());
    assert!(random_divfree_field(&d, 1.5, 1.0, 42).is_err());
    assert_ne!(a, random_divfree_field(&d, 2.5, 1.0, 43).unwrap());
}

#[test]
fn interpolation_examples() {
    let d = make_domain(2, 8, 4).unwrap();
    let u = SpectralField::shear(&d, 1.0, 1).unwrap();
    let eq = check_interpolation(&u, 3.0, 3.0, 3.0).unwrap();
    assert_eq!(eq.gap, 0.0);
    let c = check_interpolation(&u, 2.0, 3.0, 4.0).unwrap();
    assert!((c.theta - 1.0 / 3.0).abs() < 1e-15);
    assert!(c.gap >= 0.0);
    let lp = |p: f64| direct_integral(&u, grid(&d, p), |v| mag_sq(v).powf(p / 2.0)).powf(1.0 / p);
    assert!(rel(c.lhs, lp(3.0)) < 1e-8);
    assert!(rel(c.rhs, lp(2.0).powf(1.0 / 3.0) * lp(4.0).powf(2.0 / 3.0)) < 1e-8);
    assert!(check_interpolation(&u, 4.0, 3.0, 2.0).is_err());

    let d = make_domain(2, 8, 2).unwrap();
    for seed in 0..1000 {
        let u = random_divfree_field(&d, 2.0 + (seed % 4) as f64 * 0.5, 0.5 + (seed % 7) as f64, seed).unwrap();
        let c = check_interpolation(&u, 2.0, 3.0 + (seed % 3) as f64 * 0.5, 6.0).unwrap();
        assert!(c.gap >= -1e-9 * c.rhs.max(1.0), "seed {seed}: {c:?}");
    }
}

#[test]
fn serialization_round_trips_bit_exactly() {
    for dim in [2, 3] {
        let d = make_domain(dim, 8, 2).unwrap();
        let u = random(&d, 1.7, 9);
        let text = field_to_json(&u).unwrap();
        assert_eq!(field_from_json(&d, &text).unwrap(), u);
        assert_eq!(field_from_json_standalone(&text, 2).unwrap(), u);
        let mut bytes = Vec::new();
        write_field_binary(&u, &mut bytes).unwrap();
        assert_eq!(read_field_binary(&d, bytes.as_slice()).unwrap(), u);
        let other = make_domain(dim, 16, 2).unwrap();
        assert!(field_from_json(&other, &text).is_err());
    }
}

#[test]
fn mismatched_domains_are_refused() {
    let a = make_domain(2, 8, 2).unwrap();
    let b = make_domain(2, 16, 2).unwrap();
    let u = random(&a, 1.0, 1);
    let v = random(&b, 1.0, 1);
    assert!(matches!(u.compatible(&v), Err(Error::DomainMismatch)));
    assert!(weighted_h_norm(&u, &v, 3.0).is_err());
}

#[test]
fn leray_projection_is_self_adjoint() {
    let d = make_domain(3, 8, 2).unwrap();
    for seed in 0..10 {
        let u = rough_field(&d, 2 * seed);
        let v = rough_field(&d, 2 * seed + 1);
        let a = leray_project(&u).inner(&v);
        let b = u.inner(&leray_project(&v));
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "seed {seed}");
    }
}

#[test]
fn parseval_matches_grid_quadrature() {
    for dim in [2, 3] {
        let d = make_domain(dim, 8, 2).unwrap();
        for seed in 0..3 {
            let u = random(&d, 2.0, seed);
            let oracle = direct_integral(&u, 8, mag_sq);
            assert!(rel(u.norm_h_sq(), oracle) < 1e-12, "{dim}D seed {seed}");
            assert!(u.norm_h_sq() <= u.norm_v_sq());
        }
    }
}
