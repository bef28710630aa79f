//! Transforms between Fourier coefficients on the resolved mode set and
//! point values on an `m^dim` physical grid (`m ≥ N`, zero-padded).
//!
//! Two real components are packed into one complex transform: `u₀ + i·u₁`
//! synthesizes both at once because each has Hermitian coefficients, and the
//! analysis step separates them again through `Z(k)` and `conj(Z(-k))`.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::domain::TorusDomain;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(m: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap_or_else(|e| e.into_inner());
    if inverse {
        p.plan_fft_inverse(m)
    } else {
        p.plan_fft_forward(m)
    }
}

/// Unnormalized multi-dimensional FFT over a row-major `m^dim` buffer.
pub(crate) fn fft_nd(buf: &mut [Complex64], dim: usize, m: usize, inverse: bool) {
    let fft = plan(m, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(buf, &mut scratch);
    if dim == 1 {
        return;
    }
    let total = buf.len();
    let mut lines = vec![Complex64::new(0.0, 0.0); total];
    let mut stride = m;
    for _ in 1..dim {
        let block = m * stride;
        let outer_count = total / block;
        let mut line = 0;
        for outer in 0..outer_count {
            let base = outer * block;
            for inner in 0..stride {
                let dst = &mut lines[line * m..(line + 1) * m];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = buf[base + j * stride + inner];
                }
                line += 1;
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        let mut line = 0;
        for outer in 0..outer_count {
            let base = outer * block;
            for inner in 0..stride {
                let src = &lines[line * m..(line + 1) * m];
                for (j, s) in src.iter().enumerate() {
                    buf[base + j * stride + inner] = *s;
                }
                line += 1;
            }
        }
        stride *= m;
    }
}

/// Flat index on the `m`-grid of every domain mode (padding placement).
pub(crate) fn grid_indices(domain: &TorusDomain, m: usize) -> Vec<usize> {
    let dim = domain.dim();
    (0..domain.len())
        .map(|idx| {
            let k = domain.wavenumber(idx);
            let mut g = 0usize;
            for &c in k.iter().take(dim) {
                let i = c.rem_euclid(m as i32) as usize;
                g = g * m + i;
            }
            g
        })
        .collect()
}

/// Point values of each coefficient array on the `m^dim` grid, at
/// `x_j = 2πj/m`: `u(x) = Σ_k û_k e^{ik·x}`.
pub(crate) fn synthesize(domain: &TorusDomain, comps: &[&[Complex64]], m: usize) -> Vec<Vec<f64>> {
    let dim = domain.dim();
    let total = m.pow(dim as u32);
    let map = grid_indices(domain, m);
    let mut out = Vec::with_capacity(comps.len());
    let i = Complex64::new(0.0, 1.0);
    for pair in comps.chunks(2) {
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for (idx, &g) in map.iter().enumerate() {
            if !domain.is_active(idx) {
                continue;
            }
            let mut z = pair[0][idx];
            if pair.len() == 2 {
                z += i * pair[1][idx];
            }
            buf[g] = z;
        }
        fft_nd(&mut buf, dim, m, true);
        out.push(buf.iter().map(|z| z.re).collect());
        if pair.len() == 2 {
            out.push(buf.iter().map(|z| z.im).collect());
        }
    }
    out
}

/// Fourier coefficients of real grid functions, restricted to the active
/// modes of `domain` (mean and Nyquist coefficients dropped).
pub(crate) fn analyze(domain: &TorusDomain, values: &[Vec<f64>], m: usize) -> Vec<Vec<Complex64>> {
    let dim = domain.dim();
    let total = m.pow(dim as u32);
    let map = grid_indices(domain, m);
    let scale = 1.0 / total as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(values.len());
    for pair in values.chunks(2) {
        let mut buf: Vec<Complex64> = if pair.len() == 2 {
            pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect()
        } else {
            pair[0].iter().map(|&a| Complex64::new(a, 0.0)).collect()
        };
        debug_assert_eq!(buf.len(), total);
        fft_nd(&mut buf, dim, m, false);
        let mut a = vec![zero; domain.len()];
        let mut b = vec![zero; domain.len()];
        for idx in 0..domain.len() {
            if !domain.is_active(idx) {
                continue;
            }
            let zk = buf[map[idx]] * scale;
            let zm = buf[map[domain.conjugate_index(idx)]].conj() * scale;
            a[idx] = (zk + zm) * 0.5;
            b[idx] = (zk - zm) * Complex64::new(0.0, -0.5);
        }
        out.push(a);
        if pair.len() == 2 {
            out.push(b);
        }
    }
    out
}

/// Rectangle-rule integral over the torus of grid values on an `m`-grid.
pub(crate) fn grid_integral(dim: usize, m: usize, values: impl Iterator<Item = f64>) -> f64 {
    let cell = (2.0 * std::f64::consts::PI / m as f64).powi(dim as i32);
    values.sum::<f64>() * cell
}
