use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared handle to a domain; fields keep one and compare by value.
pub type Domain = Arc<TorusDomain>;

/// The periodic box `[0, 2π]^dim` resolved with `N` Fourier modes per axis.
///
/// Wavenumbers per axis run over `-N/2 < k ≤ N/2` and are laid out in FFT
/// order (`0, 1, …, N/2, -N/2+1, …, -1`), with axis 0 slowest. The Nyquist
/// wavenumber `k = N/2` has no conjugate partner inside the set, so fields
/// keep those coefficients at zero; every other nonzero wavenumber is
/// "active".
#[derive(Debug)]
pub struct TorusDomain {
    dim: usize,
    n: usize,
    oversample: usize,
    wavenumbers: Vec<[i32; 3]>,
    k_sq: Vec<f64>,
    active: Vec<bool>,
}

impl PartialEq for TorusDomain {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.oversample == other.oversample
    }
}

/// Builds a torus domain, validating `dim ∈ {2,3}`, even `N ≥ 8` and
/// `oversample ≥ 2`.
pub fn make_domain(dim: usize, resolution: usize, oversample: usize) -> Result<Domain> {
    if dim != 2 && dim != 3 {
        return Err(Error::config(format!("dim must be 2 or 3, got {dim}")));
    }
    if resolution < 8 || resolution % 2 != 0 {
        return Err(Error::config(format!(
            "resolution must be even and at least 8, got {resolution}"
        )));
    }
    if oversample < 2 {
        return Err(Error::config(format!(
            "oversample factor must be at least 2, got {oversample}"
        )));
    }
    let n = resolution;
    let len = n.pow(dim as u32);
    let half = (n / 2) as i32;
    let mut wavenumbers = Vec::with_capacity(len);
    let mut k_sq = Vec::with_capacity(len);
    let mut active = Vec::with_capacity(len);
    for idx in 0..len {
        let mut k = [0i32; 3];
        let mut rem = idx;
        for axis in (0..dim).rev() {
            let i = (rem % n) as i32;
            rem /= n;
            k[axis] = if i <= half { i } else { i - n as i32 };
        }
        let sq: i32 = k.iter().map(|c| c * c).sum();
        wavenumbers.push(k);
        k_sq.push(sq as f64);
        active.push(sq != 0 && k.iter().all(|c| c.abs() < half));
    }
    Ok(Arc::new(TorusDomain {
        dim,
        n,
        oversample,
        wavenumbers,
        k_sq,
        active,
    }))
}

impl TorusDomain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Modes per axis, `N`.
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// Number of coefficients per velocity component, `N^dim`.
    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    /// Side length of the torus, fixed at 2π.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }

    /// Lebesgue measure of the torus, `(2π)^dim`.
    pub fn volume(&self) -> f64 {
        self.period().powi(self.dim as i32)
    }

    /// Wavenumber at a flat index; unused trailing axes are zero.
    pub fn wavenumber(&self, idx: usize) -> &[i32] {
        &self.wavenumbers[idx][..self.dim]
    }

    /// `|k|²`, the Stokes eigenvalue of the mode at `idx`.
    pub fn k_sq(&self, idx: usize) -> f64 {
        self.k_sq[idx]
    }

    pub fn k_sq_all(&self) -> &[f64] {
        &self.k_sq
    }

    /// Whether coefficients at `idx` may be nonzero (not the mean, no Nyquist
    /// component).
    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    /// Flat index of wavenumber `k`, if it lies in the resolved set.
    pub fn index_of(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let half = (self.n / 2) as i32;
        let mut idx = 0usize;
        for &c in k {
            if c <= -half || c > half {
                return None;
            }
            let i = if c >= 0 { c } else { c + self.n as i32 } as usize;
            idx = idx * self.n + i;
        }
        Some(idx)
    }

    /// Flat index of `-k` for an active mode.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.n;
        let mut out = 0usize;
        let mut stride = 1usize;
        let mut rem = idx;
        for _ in 0..self.dim {
            let i = rem % n;
            rem /= n;
            let j = (n - i) % n;
            out += j * stride;
            stride *= n;
        }
        out
    }

    /// Smallest nonzero Stokes eigenvalue; 1 on the zero-mean 2π-torus.
    pub fn lambda1(&self) -> f64 {
        1.0
    }

    /// Nonzero Stokes eigenvalues `|k|²` over the full wavenumber set, in
    /// nondecreasing order (with multiplicity).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.k_sq.iter().copied().filter(|&v| v > 0.0).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Grid size used for `L^p` quadrature: `oversample · N` points per axis.
    pub fn quadrature_grid(&self) -> usize {
        self.oversample * self.n
    }

    pub(crate) fn same_as(&self, other: &TorusDomain) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_2d_domain() {
        let d = make_domain(2, 8, 2).unwrap();
        assert_eq!(d.len(), 64);
        let mut xs: Vec<i32> = (0..d.len()).map(|i| d.wavenumber(i)[0]).collect();
        xs.sort();
        xs.dedup();
        assert_eq!(xs, (-3..=4).collect::<Vec<_>>());
        assert_eq!(d.eigenvalues()[0], 1.0);
        assert_eq!(d.lambda1(), 1.0);
    }

    #[test]
    fn unit_shell_multiplicity_3d() {
        let d = make_domain(3, 16, 2).unwrap();
        assert_eq!(d.len(), 16 * 16 * 16);
        let ev = d.eigenvalues();
        assert_eq!(&ev[..6], &[1.0; 6]);
        assert_eq!(ev[6], 2.0);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(matches!(make_domain(2, 7, 2), Err(Error::Config(_))));
        assert!(make_domain(2, 6, 2).is_err());
        assert!(make_domain(4, 8, 2).is_err());
        assert!(make_domain(2, 8, 1).is_err());
    }

    #[test]
    fn index_roundtrip_and_conjugates() {
        let d = make_domain(3, 8, 2).unwrap();
        for idx in 0..d.len() {
            let k = d.wavenumber(idx).to_vec();
            assert_eq!(d.index_of(&k), Some(idx));
            if d.is_active(idx) {
                let c = d.conjugate_index(idx);
                let kc: Vec<i32> = d.wavenumber(c).to_vec();
                assert_eq!(kc, k.iter().map(|x| -x).collect::<Vec<_>>());
                assert!(d.is_active(c));
            }
        }
        assert_eq!(d.index_of(&[-4, 0, 0]), None);
        assert!(!d.is_active(d.index_of(&[4, 1, 0]).unwrap()));
    }
}
