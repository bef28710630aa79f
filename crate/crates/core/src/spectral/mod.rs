//! Torus domain, divergence-free Fourier fields and the linear operators that
//! act diagonally on them.

mod domain;
mod field;
pub mod io;
pub(crate) mod transform;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub use domain::{make_domain, Domain, TorusDomain};
pub use field::SpectralField;

use crate::error::{Error, Result};

/// Which norm [`norm`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    /// `‖u‖_H = (∫|u|²)^{1/2}`.
    H,
    /// `‖u‖_V = ‖∇u‖_H`.
    V,
    /// `‖u‖_{L^p}` by oversampled rectangle-rule quadrature.
    Lp(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldNorms {
    pub h: f64,
    pub v: f64,
    /// `(p, ‖u‖_{L^p})` pairs in the order requested.
    pub lp: Vec<(f64, f64)>,
}

/// Helmholtz–Hodge projection, mode-wise `(I − kkᵀ/|k|²) û_k`.
pub fn leray_project(u: &SpectralField) -> SpectralField {
    let mut out = u.clone();
    leray_project_in_place(&mut out);
    out
}

pub(crate) fn leray_project_in_place(u: &mut SpectralField) {
    let domain = u.domain().clone();
    let dim = domain.dim();
    let comps = u.components_mut();
    for idx in 0..domain.len() {
        if !domain.is_active(idx) {
            continue;
        }
        let k = domain.wavenumber(idx);
        let k_sq = domain.k_sq(idx);
        let mut dot = Complex64::new(0.0, 0.0);
        for (c, &kc) in comps.iter().zip(k) {
            dot += c[idx] * kc as f64;
        }
        if dot.re == 0.0 && dot.im == 0.0 {
            continue;
        }
        let s = dot / k_sq;
        for j in 0..dim {
            comps[j][idx] -= s * k[j] as f64;
        }
    }
}

/// The Stokes operator `A = −P_H Δ`, i.e. `û_k ↦ |k|² û_k`.
pub fn stokes_apply(u: &SpectralField) -> SpectralField {
    let d = u.domain().clone();
    u.map_modes(|idx| d.k_sq(idx))
}

/// `A^{-1}`; zero on the mean.
pub fn stokes_inverse(u: &SpectralField) -> SpectralField {
    let d = u.domain().clone();
    u.map_modes(|idx| {
        let k = d.k_sq(idx);
        if k > 0.0 {
            1.0 / k
        } else {
            0.0
        }
    })
}

/// Discrete `V'` norm `‖A^{-1/2} u‖_H`.
pub fn dual_norm(u: &SpectralField) -> f64 {
    let d = u.domain().clone();
    let vol = d.volume();
    let s: f64 = u
        .components()
        .iter()
        .flat_map(|c| c.iter().enumerate())
        .filter(|(idx, _)| d.k_sq(*idx) > 0.0)
        .map(|(idx, z)| z.norm_sqr() / d.k_sq(idx))
        .sum();
    (s * vol).sqrt()
}

/// Quadrature grid for integrands of degree `p` in `u`: `max(oversample,
/// ⌈p/2⌉) · N` points per axis, exact when `p` is an even integer.
pub fn lp_grid(domain: &TorusDomain, p: f64) -> usize {
    let need = (p / 2.0).ceil() as usize;
    domain.oversample().max(need) * domain.resolution()
}

/// `∫ |u|^p dx` on the `m`-grid.
pub fn lp_integral(u: &SpectralField, p: f64, m: usize) -> f64 {
    let g = u.to_grid(m);
    let len = g[0].len();
    let dim = u.dim();
    transform::grid_integral(
        dim,
        m,
        (0..len).map(|q| crate::operators::pow_from_sq(g.iter().map(|c| c[q] * c[q]).sum(), p)),
    )
}

pub fn norm(u: &SpectralField, which: Norm) -> Result<f64> {
    match which {
        Norm::H => Ok(u.norm_h_sq().sqrt()),
        Norm::V => Ok(u.norm_v_sq().sqrt()),
        Norm::Lp(p) => {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::config(format!("L^p norm needs 1 ≤ p < ∞, got {p}")));
            }
            let m = lp_grid(u.domain(), p);
            Ok(lp_integral(u, p, m).powf(1.0 / p))
        }
    }
}

pub fn field_norms(u: &SpectralField, exponents: &[f64]) -> Result<FieldNorms> {
    let lp = exponents
        .iter()
        .map(|&p| norm(u, Norm::Lp(p)).map(|v| (p, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldNorms {
        h: u.norm_h_sq().sqrt(),
        v: u.norm_v_sq().sqrt(),
        lp,
    })
}

/// `∫ |v(x)|^{r−1} |w(x)|² dx`, the weighted quantity in the monotonicity
/// estimates.
pub fn weighted_h_norm(w: &SpectralField, v: &SpectralField, r: f64) -> Result<f64> {
    w.compatible(v)?;
    if r < 1.0 {
        return Err(Error::config(format!(
            "weight exponent needs r ≥ 1, got {r}"
        )));
    }
    let m = lp_grid(w.domain(), r + 1.0);
    Ok(weighted_integral(&w.to_grid(m), &v.to_grid(m), r, m))
}

pub(crate) fn weighted_integral(w: &[Vec<f64>], v: &[Vec<f64>], r: f64, m: usize) -> f64 {
    let dim = w.len();
    let sq = |g: &[Vec<f64>], q: usize| g.iter().map(|c| c[q] * c[q]).sum::<f64>();
    transform::grid_integral(
        dim,
        m,
        (0..w[0].len()).map(|q| crate::operators::pow_from_sq(sq(v, q), r - 1.0) * sq(w, q)),
    )
}

/// Smoothing projection `P_{1/n}`: `û_k ↦ e^{−λ_k/n} û_k` for `λ_k < n²`,
/// zero otherwise.
pub fn smoothing_projection(u: &SpectralField, n: usize) -> Result<SpectralField> {
    if n == 0 {
        return Err(Error::config("smoothing projection needs n ≥ 1"));
    }
    let d = u.domain().clone();
    let nf = n as f64;
    Ok(u.map_modes(|idx| {
        let lam = d.k_sq(idx);
        if lam < nf * nf {
            (-lam / nf).exp()
        } else {
            0.0
        }
    }))
}

/// Galerkin truncation `R_k`: zeroes every mode with some `|k_i| > kmax`.
pub fn galerkin_truncate(u: &SpectralField, kmax: usize) -> SpectralField {
    let d = u.domain().clone();
    let km = kmax as i32;
    u.map_modes(|idx| {
        if d.wavenumber(idx).iter().all(|c| c.abs() <= km) {
            1.0
        } else {
            0.0
        }
    })
}

/// Seeded random solenoidal field with `|û_k| = amplitude · |k|^{−decay}` and
/// uniformly random complex directions orthogonal to `k`.
pub fn random_divfree_field(
    domain: &Domain,
    decay: f64,
    amplitude: f64,
    seed: u64,
) -> Result<SpectralField> {
    let dim = domain.dim();
    if decay <= dim as f64 / 2.0 {
        return Err(Error::config(format!(
            "spectral decay must exceed dim/2 = {}, got {decay}",
            dim as f64 / 2.0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(domain);
    if amplitude == 0.0 {
        return Ok(u);
    }
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    for idx in 0..domain.len() {
        if !domain.is_active(idx) || domain.conjugate_index(idx) < idx {
            continue;
        }
        let k = domain.wavenumber(idx).to_vec();
        let k_sq = domain.k_sq(idx);
        loop {
            for z in v.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *z = Complex64::new(re, im);
            }
            let dot: Complex64 = v.iter().zip(&k).map(|(z, &kc)| z * kc as f64).sum();
            for (z, &kc) in v.iter_mut().zip(&k) {
                *z -= dot * kc as f64 / k_sq;
            }
            let len = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if len > 1e-8 {
                let s = amplitude * k_sq.powf(-decay / 2.0) / len;
                for z in v.iter_mut() {
                    *z *= s;
                }
                break;
            }
        }
        u.set_mode(&k, &v)?;
    }
    Ok(u)
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationCheck {
    pub theta: f64,
    /// `‖u‖_{L^r}`
    pub lhs: f64,
    /// `‖u‖^θ_{L^s} ‖u‖^{1−θ}_{L^t}`
    pub rhs: f64,
    /// `rhs − lhs`; nonnegative up to quadrature error.
    pub gap: f64,
}

/// Evaluates both sides of `‖u‖_{L^r} ≤ ‖u‖^θ_{L^s} ‖u‖^{1−θ}_{L^t}` with
/// `1/r = θ/s + (1−θ)/t`.
pub fn check_interpolation(
    u: &SpectralField,
    s: f64,
    r: f64,
    t: f64,
) -> Result<InterpolationCheck> {
    if !(1.0 <= s && s <= r && r <= t && t.is_finite()) {
        return Err(Error::config(format!(
            "interpolation exponents need 1 ≤ s ≤ r ≤ t < ∞, got s={s}, r={r}, t={t}"
        )));
    }
    let theta = if s == t {
        1.0
    } else {
        (1.0 / r - 1.0 / t) / (1.0 / s - 1.0 / t)
    };
    let ns = norm(u, Norm::Lp(s))?;
    let nr = norm(u, Norm::Lp(r))?;
    let nt = norm(u, Norm::Lp(t))?;
    let rhs = ns.powf(theta) * nt.powf(1.0 - theta);
    Ok(InterpolationCheck {
        theta,
        lhs: nr,
        rhs,
        gap: rhs - nr,
    })
}
