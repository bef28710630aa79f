//! The stationary problem `μAu + B(u) + βC(u) = f` on the Galerkin space:
//! damped Stokes-preconditioned fixed point with optional Newton–GMRES
//! refinement, a uniqueness probe and the deterministic decay experiment.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{integrate_coupled, NodeKind, SimulationConfig};
use crate::operators::{eta_constant, full_g, CbfParameters};
use crate::spectral::{dual_norm, random_divfree_field, stokes_inverse, SpectralField};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StationaryOptions {
    pub omega: f64,
    pub omega_floor: f64,
    pub max_iter: usize,
    /// Switch to Newton–GMRES once the fixed point stalls or hits the cap.
    pub newton: bool,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            omega: 0.5,
            omega_floor: 1.0 / 64.0,
            max_iter: 10_000,
            newton: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StationaryState {
    pub u_inf: SpectralField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub converged: bool,
    /// Accepted residuals, one per iteration.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRecord {
    pub residual_norm: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl StationaryState {
    pub fn record(&self) -> ConvergenceRecord {
        ConvergenceRecord {
            residual_norm: self.residual_norm,
            iterations: self.iterations,
            newton_steps: self.newton_steps,
            converged: self.converged,
            history: self.history.clone(),
        }
    }

    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.residual_norm,
            })
        }
    }
}

/// `‖A^{−1/2}(μAu + B(u) + βC(u) − f)‖_H`.
pub fn stationary_residual(u: &SpectralField, p: &CbfParameters, f: &SpectralField) -> Result<f64> {
    Ok(dual_norm(&full_g(u, p, f)?))
}

pub fn solve_stationary(
    p: &CbfParameters,
    f: &SpectralField,
    init: &SpectralField,
    tol: f64,
) -> Result<StationaryState> {
    solve_stationary_with(p, f, init, tol, &StationaryOptions::default())
}

pub fn solve_stationary_with(
    p: &CbfParameters,
    f: &SpectralField,
    init: &SpectralField,
    tol: f64,
    opts: &StationaryOptions,
) -> Result<StationaryState> {
    p.validate()?;
    f.compatible(init)?;
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance must be positive, got {tol}")));
    }
    let mut u = init.clone();
    let mut res = stationary_residual(&u, p, f)?;
    let mut history = vec![res];
    let mut omega = opts.omega;
    let mut iterations = 0;
    let mut stalled = 0;
    while res > tol && iterations < opts.max_iter {
        iterations += 1;
        let g = full_g(&u, p, f)?;
        // u − ω(μA)^{-1}G(u) = (1−ω)u + ω(μA)^{-1}(f − B − βC)
        let mut cand = u.clone();
        cand.axpy(-omega / p.mu, &stokes_inverse(&g));
        let cand_res = stationary_residual(&cand, p, f)?;
        if !(cand_res <= res) {
            if omega > opts.omega_floor {
                omega = (omega * 0.5).max(opts.omega_floor);
                continue;
            }
            break;
        }
        if cand_res >= res * (1.0 - 1e-3) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        u = cand;
        res = cand_res;
        history.push(res);
        if opts.newton && stalled >= 20 {
            break;
        }
    }
    let mut newton_steps = 0;
    if opts.newton && res > tol {
        let mut step_cap = 50;
        while res > tol && step_cap > 0 {
            step_cap -= 1;
            let Some(next) = newton_step(&u, p, f, res)? else { break };
            let next_res = stationary_residual(&next, p, f)?;
            if !(next_res < res) {
                break;
            }
            newton_steps += 1;
            u = next;
            res = next_res;
            history.push(res);
        }
    }
    Ok(StationaryState {
        u_inf: u,
        residual_norm: res,
        iterations,
        newton_steps,
        converged: res <= tol,
        history,
    })
}

/// One Newton step with a finite-difference Jacobian and GMRES on the
/// Stokes-preconditioned system, with step halving.
fn newton_step(
    u: &SpectralField,
    p: &CbfParameters,
    f: &SpectralField,
    res: f64,
) -> Result<Option<SpectralField>> {
    let g0 = full_g(u, p, f)?;
    let precond = |x: &SpectralField| stokes_inverse(x).scale(1.0 / p.mu);
    let scale = u.norm_h_sq().sqrt().max(1.0);
    let apply = |v: &SpectralField| -> Result<SpectralField> {
        let nv = v.norm_h_sq().sqrt();
        if nv == 0.0 {
            return Ok(SpectralField::zeros(v.domain()));
        }
        let eps = 1e-7 * scale / nv;
        let mut shifted = u.clone();
        shifted.axpy(eps, v);
        Ok(precond(&(&full_g(&shifted, p, f)? - &g0)).scale(1.0 / eps))
    };
    let rhs = precond(&g0).scale(-1.0);
    let delta = gmres(&apply, &rhs, 40, 1e-10)?;
    let mut lam = 1.0;
    for _ in 0..10 {
        let mut cand = u.clone();
        cand.axpy(lam, &delta);
        if stationary_residual(&cand, p, f)? < res {
            return Ok(Some(cand));
        }
        lam *= 0.5;
    }
    Ok(None)
}

/// Unrestarted GMRES for `A x = b` with at most `m` iterations.
fn gmres(
    apply: &dyn Fn(&SpectralField) -> Result<SpectralField>,
    b: &SpectralField,
    m: usize,
    rtol: f64,
) -> Result<SpectralField> {
    let beta = b.inner(b).sqrt();
    let mut x = SpectralField::zeros(b.domain());
    if beta == 0.0 {
        return Ok(x);
    }
    let mut basis = vec![b.scale(1.0 / beta)];
    let mut h = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];
    g[0] = beta;
    let mut k_used = 0;
    for j in 0..m {
        let mut w = apply(&basis[j])?;
        for (i, v) in basis.iter().enumerate() {
            h[i][j] = w.inner(v);
            w.axpy(-h[i][j], v);
        }
        let hn = w.inner(&w).sqrt();
        h[j + 1][j] = hn;
        for i in 0..j {
            let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
            h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
            h[i][j] = t;
        }
        let denom = h[j][j].hypot(h[j + 1][j]);
        cs[j] = h[j][j] / denom;
        sn[j] = h[j + 1][j] / denom;
        h[j][j] = denom;
        h[j + 1][j] = 0.0;
        g[j + 1] = -sn[j] * g[j];
        g[j] *= cs[j];
        k_used = j + 1;
        if g[j + 1].abs() <= rtol * beta || hn == 0.0 {
            break;
        }
        basis.push(w.scale(1.0 / hn));
    }
    let mut y = vec![0.0; k_used];
    for i in (0..k_used).rev() {
        let s: f64 = (i + 1..k_used).map(|c| h[i][c] * y[c]).sum();
        y[i] = (g[i] - s) / h[i][i];
    }
    for (yi, v) in y.iter().zip(&basis) {
        x.axpy(*yi, v);
    }
    Ok(x)
}

/// Fails unless the stationary solution is known to be unique: `μ > 2η/λ₁`
/// for `r > 3`, `2βμ ≥ 1` for `r = 3`.
pub fn require_uniqueness_regime(p: &CbfParameters) -> Result<f64> {
    let eta = eta_constant(p)?;
    if p.r > 3.0 && !(p.mu > 2.0 * eta) {
        return Err(Error::admissibility(
            "μ > 2η/λ₁",
            format!("μ = {}, 2η = {}", p.mu, 2.0 * eta),
        ));
    }
    Ok(eta)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub max_distance: f64,
    pub converged: usize,
    pub attempted: usize,
    pub residuals: Vec<f64>,
    /// Some solve failed to converge, so the distance says nothing.
    pub inconclusive: bool,
}

/// Solves from `n_inits` random initial guesses and reports the largest
/// pairwise `H` distance among converged states.
pub fn uniqueness_probe(
    p: &CbfParameters,
    f: &SpectralField,
    n_inits: usize,
    seed: u64,
    tol: f64,
) -> Result<UniquenessReport> {
    require_uniqueness_regime(p)?;
    let d = f.domain();
    let decay = d.dim() as f64 / 2.0 + 1.0;
    let scale = f.norm_h_sq().sqrt().max(1.0) / d.volume().sqrt();
    let states = crate::integrator::ensemble(n_inits, |i| {
        let amp = scale * 10f64.powf(i as f64 / n_inits.max(1) as f64 * 2.0 - 1.0);
        let init = random_divfree_field(d, decay, amp, seed.wrapping_add(i))?;
        solve_stationary(p, f, &init, tol)
    })?;
    let ok: Vec<&StationaryState> = states.iter().filter(|s| s.converged).collect();
    let mut max_distance: f64 = 0.0;
    for i in 0..ok.len() {
        for j in i + 1..ok.len() {
            max_distance = max_distance.max((&ok[i].u_inf - &ok[j].u_inf).norm_h_sq().sqrt());
        }
    }
    Ok(UniquenessReport {
        max_distance,
        converged: ok.len(),
        attempted: n_inits,
        residuals: states.iter().map(|s| s.residual_norm).collect(),
        inconclusive: ok.len() < n_inits,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeterministicDecayReport {
    pub kappa: f64,
    pub times: Vec<f64>,
    /// `‖u(t) − u∞‖²_H`
    pub distance_sq: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Least-squares slope of `log s(t)`; `None` when `s ≡ 0`.
    pub fitted_slope: Option<f64>,
    pub first_violation: Option<f64>,
    pub passed: bool,
}

/// Runs the noiseless flow from `u0` and checks
/// `‖u(t) − u∞‖² ≤ ‖u₀ − u∞‖² e^{−κt}(1 + tol)` with `κ = λ₁μ − 2η`.
pub fn deterministic_decay_experiment(
    p: &CbfParameters,
    f: &SpectralField,
    u0: &SpectralField,
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<DeterministicDecayReport> {
    let eta = require_uniqueness_regime(p)?;
    let kappa = p.mu - 2.0 * eta;
    let u_inf = if f.is_zero() {
        SpectralField::zeros(f.domain())
    } else {
        solve_stationary(p, f, &SpectralField::zeros(f.domain()), 1e-12)?.into_result()?.u_inf
    };
    let mut cfg = SimulationConfig::new(f.domain(), *p, u0.clone(), horizon, dt);
    cfg.forcing = f.clone();
    let mut times = Vec::new();
    let mut distance_sq = Vec::new();
    integrate_coupled(&cfg, std::slice::from_ref(u0), &[], |node, s| {
        if matches!(node.kind, NodeKind::Initial | NodeKind::Base(_)) {
            times.push(node.t);
            distance_sq.push((&s[0] - &u_inf).norm_h_sq());
        }
        Ok(())
    })?;
    let s0 = distance_sq[0];
    let envelope: Vec<f64> = times.iter().map(|t| s0 * (-kappa * t).exp()).collect();
    let first_violation = times
        .iter()
        .zip(distance_sq.iter().zip(&envelope))
        .find(|(_, (s, e))| **s > **e * (1.0 + tol))
        .map(|(t, _)| *t);
    let (lt, ls): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&distance_sq)
        .filter(|(_, s)| **s > 0.0 && s.is_finite())
        .map(|(t, s)| (*t, s.ln()))
        .unzip();
    let fitted_slope = (lt.len() >= 2).then(|| crate::stats::slope(&lt, &ls));
    Ok(DeterministicDecayReport {
        kappa,
        times,
        distance_sq,
        envelope,
        fitted_slope,
        first_violation,
        passed: first_violation.is_none(),
    })
}
