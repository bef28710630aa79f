#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use scbf::spectral::random_divfree_field;
use scbf::{Domain, SpectralField};

/// Point values of `u` by direct summation of its Fourier series on an
/// `m`-point-per-axis grid, one vector of `|u|²`-ready components per point.
pub fn direct_grid(u: &SpectralField, m: usize) -> Vec<Vec<f64>> {
    let d = u.domain();
    let dim = d.dim();
    let modes: Vec<(Vec<i32>, Vec<Complex64>)> = (0..d.len())
        .filter_map(|idx| {
            let c: Vec<Complex64> = u.components().iter().map(|comp| comp[idx]).collect();
            c.iter().any(|z| z.norm_sqr() > 0.0).then(|| (d.wavenumber(idx).to_vec(), c))
        })
        .collect();
    let h = 2.0 * PI / m as f64;
    let total = m.pow(dim as u32);
    (0..total)
        .map(|q| {
            let mut x = vec![0.0; dim];
            let mut rem = q;
            for axis in (0..dim).rev() {
                x[axis] = (rem % m) as f64 * h;
                rem /= m;
            }
            let mut val = vec![0.0; dim];
            for (k, c) in &modes {
                let phase: f64 = k.iter().zip(&x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                let e = Complex64::from_polar(1.0, phase);
                for (v, ci) in val.iter_mut().zip(c) {
                    *v += (ci * e).re;
                }
            }
            val
        })
        .collect()
}

/// Rectangle-rule `∫ f(u(x)) dx` over the torus from direct point values.
pub fn direct_integral(u: &SpectralField, m: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let dim = u.dim();
    let cell = (2.0 * PI / m as f64).powi(dim as i32);
    direct_grid(u, m).iter().map(|v| f(v)).sum::<f64>() * cell
}

pub fn mag_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Random solenoidal field scaled to `‖u‖_H = norm`.
pub fn random(d: &Domain, norm: f64, seed: u64) -> SpectralField {
    let u = random_divfree_field(d, d.dim() as f64 / 2.0 + 1.5, 1.0, seed).unwrap();
    u.scale(norm / u.norm_h_sq().sqrt())
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Point values of `∂_j u_i` by direct summation, stored as `i * dim + j`.
pub fn direct_gradient(u: &SpectralField, m: usize) -> Vec<Vec<f64>> {
    let d = u.domain();
    let dim = d.dim();
    let h = 2.0 * PI / m as f64;
    let total = m.pow(dim as u32);
    let modes: Vec<(Vec<i32>, Vec<Complex64>)> = (0..d.len())
        .filter_map(|idx| {
            let c: Vec<Complex64> = u.components().iter().map(|comp| comp[idx]).collect();
            c.iter().any(|z| z.norm_sqr() > 0.0).then(|| (d.wavenumber(idx).to_vec(), c))
        })
        .collect();
    (0..total)
        .map(|q| {
            let mut x = vec![0.0; dim];
            let mut rem = q;
            for axis in (0..dim).rev() {
                x[axis] = (rem % m) as f64 * h;
                rem /= m;
            }
            let mut g = vec![0.0; dim * dim];
            for (k, c) in &modes {
                let phase: f64 = k.iter().zip(&x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                let e = Complex64::from_polar(1.0, phase);
                for i in 0..dim {
                    for j in 0..dim {
                        g[i * dim + j] += (Complex64::new(0.0, k[j] as f64) * c[i] * e).re;
                    }
                }
            }
            g
        })
        .collect()
}

/// `∫ (u·∇)v · w` by direct summation on an `m`-grid.
pub fn direct_trilinear(u: &SpectralField, v: &SpectralField, w: &SpectralField, m: usize) -> f64 {
    let dim = u.dim();
    let gu = direct_grid(u, m);
    let gv = direct_gradient(v, m);
    let gw = direct_grid(w, m);
    let cell = (2.0 * PI / m as f64).powi(dim as i32);
    let mut acc = 0.0;
    for q in 0..gu.len() {
        for i in 0..dim {
            let conv: f64 = (0..dim).map(|j| gu[q][j] * gv[q][i * dim + j]).sum();
            acc += conv * gw[q][i];
        }
    }
    acc * cell
}
