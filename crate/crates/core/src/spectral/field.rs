use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::domain::Domain;
use super::transform;
use crate::error::{Error, Result};

/// A real velocity field on the torus stored as Fourier coefficients,
/// `u(x) = Σ_k û_k e^{ik·x}`, one coefficient array per component.
///
/// Coefficients obey `û_{-k} = conj(û_k)`, the mean `û_0` is zero and
/// non-active (Nyquist) coefficients are zero. Divergence-freeness is not
/// enforced by the type; [`super::leray_project`] establishes it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    domain: Domain,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(domain: &Domain) -> Self {
        let comps = vec![vec![Complex64::new(0.0, 0.0); domain.len()]; domain.dim()];
        Self {
            domain: domain.clone(),
            comps,
        }
    }

    /// Builds a field from raw coefficient arrays, zeroing the mean and
    /// non-active modes.
    pub fn from_components(domain: &Domain, mut comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.len() != domain.dim() || comps.iter().any(|c| c.len() != domain.len()) {
            return Err(Error::config("coefficient arrays do not match the domain"));
        }
        for c in comps.iter_mut() {
            for (idx, z) in c.iter_mut().enumerate() {
                if !domain.is_active(idx) {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(Self {
            domain: domain.clone(),
            comps,
        })
    }

    /// `(sin z, cos z, 0)` scaled by `amplitude`: divergence-free, `|u| ≡ amplitude`,
    /// a Stokes eigenfunction with `λ = 1`, and `B(u) = 0`.
    pub fn beltrami(domain: &Domain, amplitude: f64) -> Result<Self> {
        if domain.dim() != 3 {
            return Err(Error::config("the Beltrami field is three-dimensional"));
        }
        let mut u = Self::zeros(domain);
        let z = Complex64::new;
        u.set_mode(
            &[0, 0, 1],
            &[
                z(0.0, -0.5 * amplitude),
                z(0.5 * amplitude, 0.0),
                z(0.0, 0.0),
            ],
        )?;
        Ok(u)
    }

    /// The shear flow `(0, amplitude·cos(q x))` in 2D or `(0, amplitude·cos(q x), 0)` in 3D.
    pub fn shear(domain: &Domain, amplitude: f64, q: i32) -> Result<Self> {
        let mut u = Self::zeros(domain);
        let mut k = vec![0; domain.dim()];
        k[0] = q;
        let mut v = vec![Complex64::new(0.0, 0.0); domain.dim()];
        v[1] = Complex64::new(0.5 * amplitude, 0.0);
        u.set_mode(&k, &v)?;
        Ok(u)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub(crate) fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.comps
    }

    pub fn coeff(&self, comp: usize, idx: usize) -> Complex64 {
        self.comps[comp][idx]
    }

    /// Coefficient vector at wavenumber `k` (zero if `k` is unresolved).
    pub fn mode(&self, k: &[i32]) -> Vec<Complex64> {
        match self.domain.index_of(k) {
            Some(idx) => self.comps.iter().map(|c| c[idx]).collect(),
            None => vec![Complex64::new(0.0, 0.0); self.dim()],
        }
    }

    /// Sets `û_k = value` and `û_{-k} = conj(value)`.
    pub fn set_mode(&mut self, k: &[i32], value: &[Complex64]) -> Result<()> {
        let idx = self
            .domain
            .index_of(k)
            .ok_or_else(|| Error::config(format!("wavenumber {k:?} is not resolved")))?;
        if !self.domain.is_active(idx) {
            return Err(Error::config(format!(
                "wavenumber {k:?} is the mean or a Nyquist mode"
            )));
        }
        if value.len() != self.dim() {
            return Err(Error::config("mode vector has the wrong length"));
        }
        let cidx = self.domain.conjugate_index(idx);
        for (c, v) in self.comps.iter_mut().zip(value) {
            c[idx] = *v;
            c[cidx] = v.conj();
        }
        Ok(())
    }

    pub fn compatible(&self, other: &SpectralField) -> Result<()> {
        if self.domain.same_as(&other.domain) {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps
            .iter()
            .flatten()
            .all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// `self + a·x`, in place.
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert!(self.domain.same_as(&x.domain));
        for (c, xc) in self.comps.iter_mut().zip(&x.comps) {
            for (z, xz) in c.iter_mut().zip(xc) {
                *z += xz * a;
            }
        }
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for z in self.comps.iter_mut().flatten() {
            *z *= a;
        }
    }

    /// Mode-wise map `û_k ↦ f(idx) · û_k` for a real multiplier.
    pub fn map_modes(&self, f: impl Fn(usize) -> f64) -> SpectralField {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (idx, z) in c.iter_mut().enumerate() {
                *z *= f(idx);
            }
        }
        out
    }

    /// `L²` inner product `(u, v) = ∫ u·v dx = (2π)^d Σ_k Re(û_k · conj(v̂_k))`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(self.domain.same_as(&other.domain));
        let s: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .sum();
        s * self.domain.volume()
    }

    /// Squared `H` norm via Parseval.
    pub fn norm_h_sq(&self) -> f64 {
        self.inner(self)
    }

    /// Squared `V` norm `‖∇u‖²_H = (2π)^d Σ |k|² |û_k|²`.
    pub fn norm_v_sq(&self) -> f64 {
        let k_sq = self.domain.k_sq_all();
        let s: f64 = self
            .comps
            .iter()
            .flat_map(|c| c.iter().zip(k_sq))
            .map(|(z, k)| k * z.norm_sqr())
            .sum();
        s * self.domain.volume()
    }

    /// Largest coefficient-wise difference, for exactness checks.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|k · û_k|` over all modes.
    pub fn max_divergence(&self) -> f64 {
        (0..self.domain.len())
            .map(|idx| {
                let k = self.domain.wavenumber(idx);
                let mut s = Complex64::new(0.0, 0.0);
                for (c, &kc) in self.comps.iter().zip(k) {
                    s += c[idx] * kc as f64;
                }
                s.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of Hermitian symmetry and of the zero-mean constraint.
    pub fn max_symmetry_defect(&self) -> f64 {
        let d = &self.domain;
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            worst = worst.max(c[0].norm());
            for idx in 0..d.len() {
                if d.is_active(idx) {
                    worst = worst.max((c[idx] - c[d.conjugate_index(idx)].conj()).norm());
                } else {
                    worst = worst.max(c[idx].norm());
                }
            }
        }
        worst
    }

    /// Point values on an `m^dim` grid, one array per component.
    pub fn to_grid(&self, m: usize) -> Vec<Vec<f64>> {
        let refs: Vec<&[Complex64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        transform::synthesize(&self.domain, &refs, m)
    }

    /// Gradient components `∂_j u_i` on an `m^dim` grid, ordered `i·dim + j`.
    pub(crate) fn gradient_grid(&self, m: usize) -> Vec<Vec<f64>> {
        let d = &self.domain;
        let dim = d.dim();
        let mut arrays = Vec::with_capacity(dim * dim);
        for c in &self.comps {
            for j in 0..dim {
                arrays.push(
                    (0..d.len())
                        .map(|idx| c[idx] * Complex64::new(0.0, d.wavenumber(idx)[j] as f64))
                        .collect::<Vec<_>>(),
                );
            }
        }
        let refs: Vec<&[Complex64]> = arrays.iter().map(|c| c.as_slice()).collect();
        transform::synthesize(d, &refs, m)
    }

    /// Projects real grid values back onto the resolved modes.
    pub(crate) fn from_grid(domain: &Domain, values: &[Vec<f64>], m: usize) -> SpectralField {
        let comps = transform::analyze(domain, values, m);
        SpectralField {
            domain: domain.clone(),
            comps,
        }
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<&SpectralField> for f64 {
    type Output = SpectralField;
    fn mul(self, rhs: &SpectralField) -> SpectralField {
        rhs.scale(self)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}
