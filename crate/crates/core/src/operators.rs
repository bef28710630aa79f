//! The Brinkman–Forchheimer operator calculus: `B(u, v) = P_H (u·∇)v`,
//! `C(u) = P_H(|u|^{r−1}u)` and `G(u) = μAu + B(u) + βC(u)`, together with the
//! monotonicity shift `η` and numerical checkers for the associated
//! inequalities.
//!
//! Products are formed on zero-padded physical grids. `B` uses a `3N/2` grid
//! (exact for quadratic products on the retained modes); `C` uses
//! `max(oversample, ⌈(r+1)/2⌉) · N` points per axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    self, random_divfree_field, stokes_apply, transform, Domain, Norm, SpectralField, TorusDomain,
};

/// Physical constants of the model. The Darcy coefficient is fixed at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfParameters {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
}

impl CbfParameters {
    pub fn new(mu: f64, beta: f64, r: f64) -> Result<Self> {
        let p = CbfParameters { mu, beta, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!(
                "viscosity mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.r >= 3.0 && self.r.is_finite()) {
            return Err(Error::config(format!(
                "absorption exponent r must be ≥ 3, got {}",
                self.r
            )));
        }
        Ok(())
    }

    /// Darcy coefficient α; always zero in this model.
    pub fn alpha(&self) -> f64 {
        0.0
    }

    /// Critical exponent with `2βμ ≥ 1`: `G` is globally monotone.
    pub fn is_globally_monotone(&self) -> bool {
        self.r == 3.0 && 2.0 * self.beta * self.mu >= 1.0
    }

    /// Fails unless a monotonicity constant exists (`r > 3`, or `r = 3` with
    /// `2βμ ≥ 1`).
    pub fn require_monotone(&self) -> Result<()> {
        if self.r == 3.0 && 2.0 * self.beta * self.mu < 1.0 {
            return Err(Error::admissibility(
                "2βμ ≥ 1",
                format!("r = 3 with 2βμ = {}", 2.0 * self.beta * self.mu),
            ));
        }
        Ok(())
    }
}

/// Grid size for `C` with exponent `r`.
pub fn c_grid(domain: &TorusDomain, r: f64) -> usize {
    spectral::lp_grid(domain, r + 1.0)
}

fn b_grid(domain: &TorusDomain) -> usize {
    3 * domain.resolution() / 2
}

/// `|u|^e` from `|u|²`, exact for even integer `e`.
#[inline]
pub(crate) fn pow_from_sq(mag_sq: f64, e: f64) -> f64 {
    let half = e / 2.0;
    if half == half.trunc() && half.abs() < 64.0 {
        mag_sq.powi(half as i32)
    } else {
        mag_sq.powf(half)
    }
}

/// Convective term `(u·∇)v` on the grid, component `i` = `Σ_j u_j ∂_j v_i`.
fn convection_grid(ug: &[Vec<f64>], grad_v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = ug.len();
    let len = ug[0].len();
    (0..dim)
        .map(|i| {
            (0..len)
                .map(|p| (0..dim).map(|j| ug[j][p] * grad_v[i * dim + j][p]).sum())
                .collect()
        })
        .collect()
}

/// `B(u, v) = P_H (u·∇)v`, dealiased.
pub fn bilinear_b(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.compatible(v)?;
    let m = b_grid(u.domain());
    let conv = convection_grid(&u.to_grid(m), &v.gradient_grid(m));
    let mut out = SpectralField::from_grid(u.domain(), &conv, m);
    spectral::leray_project_in_place(&mut out);
    Ok(out)
}

/// `B(u) = B(u, u)`.
pub fn convective_b(u: &SpectralField) -> SpectralField {
    bilinear_b(u, u).expect("a field shares its own domain")
}

/// `C(u) = P_H(|u|^{r−1}u)`.
pub fn nonlinear_c(u: &SpectralField, r: f64) -> SpectralField {
    let m = c_grid(u.domain(), r);
    let mut g = u.to_grid(m);
    let len = g[0].len();
    for p in 0..len {
        let sq: f64 = g.iter().map(|c| c[p] * c[p]).sum();
        let w = pow_from_sq(sq, r - 1.0);
        for c in g.iter_mut() {
            c[p] *= w;
        }
    }
    let mut out = SpectralField::from_grid(u.domain(), &g, m);
    spectral::leray_project_in_place(&mut out);
    out
}

/// `B(u) + βC(u)` in one pass, plus `∫|u|^{r+1}` on the same grid.
///
/// The grid is the `C` grid, which is at least `2N` and therefore also
/// dealiases the quadratic convective product.
pub(crate) fn drift_nonlinearity(u: &SpectralField, p: &CbfParameters) -> (SpectralField, f64) {
    let d = u.domain();
    let m = c_grid(d, p.r).max(b_grid(d));
    let ug = u.to_grid(m);
    let grad = u.gradient_grid(m);
    let mut out = convection_grid(&ug, &grad);
    let len = ug[0].len();
    let mut lr1 = 0.0;
    for q in 0..len {
        let sq: f64 = ug.iter().map(|c| c[q] * c[q]).sum();
        let w = pow_from_sq(sq, p.r - 1.0);
        lr1 += w * sq;
        for (o, c) in out.iter_mut().zip(&ug) {
            o[q] += p.beta * w * c[q];
        }
    }
    let lr1 = transform::grid_integral(d.dim(), m, std::iter::once(lr1));
    let mut field = SpectralField::from_grid(d, &out, m);
    spectral::leray_project_in_place(&mut field);
    (field, lr1)
}

/// `G(u) − f = μAu + B(u) + βC(u) − f`.
pub fn full_g(u: &SpectralField, p: &CbfParameters, f: &SpectralField) -> Result<SpectralField> {
    u.compatible(f)?;
    let mut g = stokes_apply(u).scale(p.mu);
    g.axpy(1.0, &convective_b(u));
    g.axpy(p.beta, &nonlinear_c(u, p.r));
    g.axpy(-1.0, f);
    Ok(g)
}

fn g_of(u: &SpectralField, p: &CbfParameters) -> SpectralField {
    let mut g = stokes_apply(u).scale(p.mu);
    g.axpy(1.0, &convective_b(u));
    g.axpy(p.beta, &nonlinear_c(u, p.r));
    g
}

/// Monotonicity shift: for `r > 3`,
/// `η = (r−3)/(2μ(r−1)) · (2/(βμ(r−1)))^{2/(r−3)}`; zero for `r = 3` when
/// `2βμ ≥ 1`.
pub fn eta_constant(p: &CbfParameters) -> Result<f64> {
    p.validate()?;
    if p.r == 3.0 {
        p.require_monotone()?;
        return Ok(0.0);
    }
    let r = p.r;
    let base = 2.0 / (p.beta * p.mu * (r - 1.0));
    Ok((r - 3.0) / (2.0 * p.mu * (r - 1.0)) * base.powf(2.0 / (r - 3.0)))
}

/// Absolute tolerance for inequality checks on a pair of fields.
pub fn inequality_tolerance(u: &SpectralField, v: &SpectralField) -> f64 {
    1e-9 * (1.0 + u.norm_v_sq() + v.norm_v_sq())
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    /// `⟨G(u) − G(v), u − v⟩`
    pub lhs: f64,
    /// `η ‖u − v‖²_H`
    pub eta_term: f64,
    /// `(μ/2)‖u − v‖²_V` for `r > 3`; `½(β − 1/(2μ)) ‖|v|(u − v)‖²_H` for `r = 3`.
    pub rhs_bound: f64,
    /// `lhs + eta_term − rhs_bound`
    pub gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluates the shifted monotonicity inequality for `G` on one pair.
pub fn monotonicity_gap(
    u: &SpectralField,
    v: &SpectralField,
    p: &CbfParameters,
) -> Result<MonotonicityReport> {
    u.compatible(v)?;
    let eta = eta_constant(p)?;
    let w = u - v;
    let lhs = (&g_of(u, p) - &g_of(v, p)).inner(&w);
    let eta_term = eta * w.norm_h_sq();
    let rhs_bound = if p.r == 3.0 {
        0.5 * (p.beta - 1.0 / (2.0 * p.mu)) * spectral::weighted_h_norm(&w, v, 3.0)?
    } else {
        0.5 * p.mu * w.norm_v_sq()
    };
    let gap = lhs + eta_term - rhs_bound;
    let tolerance = inequality_tolerance(u, v);
    Ok(MonotonicityReport {
        lhs,
        eta_term,
        rhs_bound,
        gap,
        tolerance,
        passed: gap >= -tolerance,
    })
}

/// `⟨C(u) − C(v), u − v⟩ − ½[‖|u|^{(r−1)/2}(u−v)‖² + ‖|v|^{(r−1)/2}(u−v)‖²]`.
///
/// Pointwise this equals `½(|u|^{r−1} − |v|^{r−1})(|u|² − |v|²) ≥ 0`.
pub fn c_monotonicity_gap(u: &SpectralField, v: &SpectralField, r: f64) -> Result<f64> {
    u.compatible(v)?;
    if r < 1.0 {
        return Err(Error::config(format!("C needs r ≥ 1, got {r}")));
    }
    let w = u - v;
    let m = c_grid(u.domain(), r);
    let ug = u.to_grid(m);
    let vg = v.to_grid(m);
    let wg = w.to_grid(m);
    let len = ug[0].len();
    let mut acc = 0.0;
    for q in 0..len {
        let us: f64 = ug.iter().map(|c| c[q] * c[q]).sum();
        let vs: f64 = vg.iter().map(|c| c[q] * c[q]).sum();
        let ws: f64 = wg.iter().map(|c| c[q] * c[q]).sum();
        let uw = pow_from_sq(us, r - 1.0);
        let vw = pow_from_sq(vs, r - 1.0);
        let cdot: f64 = (0..ug.len())
            .map(|c| (uw * ug[c][q] - vw * vg[c][q]) * wg[c][q])
            .sum();
        acc += cdot - 0.5 * (uw + vw) * ws;
    }
    Ok(transform::grid_integral(u.dim(), m, std::iter::once(acc)))
}

/// `|⟨G(u + λv) − G(u), w⟩|` for each `λ`.
pub fn hemicontinuity_probe(
    u: &SpectralField,
    v: &SpectralField,
    w: &SpectralField,
    p: &CbfParameters,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    u.compatible(v)?;
    u.compatible(w)?;
    let gu = g_of(u, p);
    Ok(lambdas
        .iter()
        .map(|&lam| {
            let mut shifted = u.clone();
            shifted.axpy(lam, v);
            (&g_of(&shifted, p) - &gu).inner(w).abs()
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicInequalityReport {
    /// `∫|∇u|²|u|^{r−1}`
    pub grad_weighted: f64,
    /// `∫|u|^{r−1} u·Au`
    pub stokes_weighted: f64,
    /// `stokes_weighted − grad_weighted`, must be ≥ −tol.
    pub lower_gap: f64,
    /// `r·grad_weighted − stokes_weighted`, must be ≥ −tol.
    pub upper_gap: f64,
    /// `‖u‖^{r+1}_{L^{3(r+1)}} / ∫|∇u|²|u|^{r−1}`; `None` for the zero field.
    pub embedding_ratio: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the weighted-gradient sandwich and records the empirical constant
/// of the `L^{3(r+1)}` embedding, for a periodic field.
pub fn check_periodic_inequalities(u: &SpectralField, r: f64) -> Result<PeriodicInequalityReport> {
    if r < 1.0 {
        return Err(Error::config(format!(
            "weighted inequalities need r ≥ 1, got {r}"
        )));
    }
    let d = u.domain();
    let m = c_grid(d, r).max(d.quadrature_grid());
    let ug = u.to_grid(m);
    let grad = u.gradient_grid(m);
    let au = stokes_apply(u).to_grid(m);
    let dim = d.dim();
    let len = ug[0].len();
    let (mut gw, mut sw, mut hi) = (0.0, 0.0, 0.0);
    let p_hi = 3.0 * (r + 1.0);
    for q in 0..len {
        let sq: f64 = ug.iter().map(|c| c[q] * c[q]).sum();
        let w = pow_from_sq(sq, r - 1.0);
        let g2: f64 = grad.iter().map(|c| c[q] * c[q]).sum();
        let ua: f64 = (0..dim).map(|c| ug[c][q] * au[c][q]).sum();
        gw += w * g2;
        sw += w * ua;
        hi += pow_from_sq(sq, p_hi);
    }
    let gw = transform::grid_integral(dim, m, std::iter::once(gw));
    let sw = transform::grid_integral(dim, m, std::iter::once(sw));
    let hi = transform::grid_integral(dim, m, std::iter::once(hi));
    let tolerance = 1e-8 * (1.0 + gw.abs());
    let lower_gap = sw - gw;
    let upper_gap = r * gw - sw;
    let embedding_ratio = if gw > 0.0 {
        Some(hi.powf((r + 1.0) / p_hi) / gw)
    } else {
        None
    };
    Ok(PeriodicInequalityReport {
        grad_weighted: gw,
        stokes_weighted: sw,
        lower_gap,
        upper_gap,
        embedding_ratio,
        tolerance,
        passed: lower_gap >= -tolerance && upper_gap >= -tolerance,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorIdentities {
    /// `|⟨B(u), u⟩| / (‖u‖²_{L⁴} ‖u‖_V)`
    pub b_skew_relative: f64,
    /// `(r, |⟨C(u), u⟩ − ‖u‖^{r+1}_{L^{r+1}}| / ‖u‖^{r+1}_{L^{r+1}})`
    pub c_identity_relative: Vec<(f64, f64)>,
    /// `|⟨Au, u⟩ − ‖u‖²_V| / ‖u‖²_V`
    pub stokes_relative: f64,
}

/// The three structural identities of the operator calculus on one field.
pub fn operator_identities(u: &SpectralField, exponents: &[f64]) -> Result<OperatorIdentities> {
    let l4 = spectral::norm(u, Norm::Lp(4.0))?;
    let v = u.norm_v_sq();
    let b = convective_b(u).inner(u);
    let scale = l4 * l4 * v.sqrt();
    let b_skew_relative = if scale > 0.0 {
        b.abs() / scale
    } else {
        b.abs()
    };
    let c_identity_relative = exponents
        .iter()
        .map(|&r| {
            let lhs = nonlinear_c(u, r).inner(u);
            let rhs = spectral::norm(u, Norm::Lp(r + 1.0))?.powf(r + 1.0);
            let rel = if rhs > 0.0 {
                (lhs - rhs).abs() / rhs
            } else {
                lhs.abs()
            };
            Ok((r, rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let a = stokes_apply(u).inner(u);
    let stokes_relative = if v > 0.0 { (a - v).abs() / v } else { a.abs() };
    Ok(OperatorIdentities {
        b_skew_relative,
        c_identity_relative,
        stokes_relative,
    })
}

/// Seeded random field for fuzzing: log-uniform amplitude in `[0.1, 3]` and
/// spectral decay in `[dim/2 + 0.5, dim/2 + 2]`.
pub fn fuzz_field(domain: &Domain, seed: u64) -> Result<SpectralField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
    let amp = (rng.random_range(0.1f64.ln()..3.0f64.ln())).exp();
    let half = domain.dim() as f64 / 2.0;
    let decay = rng.random_range(half + 0.5..half + 2.0);
    random_divfree_field(domain, decay, amp, seed)
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzCase {
    pub seed: u64,
    pub r: f64,
    pub mu: f64,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub passed: bool,
}

/// Monotonicity inequality on `cases` seeded random pairs.
pub fn monotonicity_fuzz(
    domain: &Domain,
    p: &CbfParameters,
    cases: usize,
    seed0: u64,
) -> Result<Vec<FuzzCase>> {
    p.require_monotone()?;
    (0..cases as u64)
        .map(|i| {
            let seed = seed0.wrapping_add(i);
            let u = fuzz_field(domain, seed.wrapping_mul(2))?;
            let v = fuzz_field(domain, seed.wrapping_mul(2).wrapping_add(1))?;
            let rep = monotonicity_gap(&u, &v, p)?;
            Ok(FuzzCase {
                seed,
                r: p.r,
                mu: p.mu,
                beta: p.beta,
                lhs: rep.lhs + rep.eta_term,
                rhs: rep.rhs_bound,
                gap: rep.gap,
                passed: rep.passed,
            })
        })
        .collect()
}

/// The `C`-monotonicity lower bound on `cases` seeded random pairs.
pub fn c_monotonicity_fuzz(
    domain: &Domain,
    r: f64,
    cases: usize,
    seed0: u64,
) -> Result<Vec<FuzzCase>> {
    (0..cases as u64)
        .map(|i| {
            let seed = seed0.wrapping_add(i);
            let u = fuzz_field(domain, seed.wrapping_mul(2))?;
            let v = fuzz_field(domain, seed.wrapping_mul(2).wrapping_add(1))?;
            let gap = c_monotonicity_gap(&u, &v, r)?;
            let tol = inequality_tolerance(&u, &v);
            Ok(FuzzCase {
                seed,
                r,
                mu: f64::NAN,
                beta: f64::NAN,
                lhs: gap,
                rhs: 0.0,
                gap,
                passed: gap >= -tol,
            })
        })
        .collect()
}
