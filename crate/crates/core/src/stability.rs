//! Stochastic stability experiments: mean-square and pathwise decay to the
//! stationary state, stabilization by multiplicative jumps, and contraction
//! of synchronously coupled trajectories.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{ensemble, integrate_coupled, NodeKind, SimulationConfig};
use crate::noise::{self, Coefficient, JumpModel};
use crate::operators::{eta_constant, CbfParameters};
use crate::spectral::{dual_norm, SpectralField};
use crate::stationary::stationary_residual;
use crate::stats::{mean_stderr, median, slope};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Admissibility {
    /// `κ > 0`
    pub deterministic: bool,
    /// `μλ₁ > 2η + L`
    pub meansquare: bool,
    /// `μλ₁ > 2η + 6L`
    pub pathwise: bool,
    /// `ρ > 0` and `ζ > 0`
    pub stabilization: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityConstants {
    pub eta: f64,
    pub k: f64,
    pub l: f64,
    pub rho: Option<f64>,
    /// `λ₁μ − 2η`
    pub kappa: f64,
    /// `μλ₁ − (2η + L)`
    pub theta: f64,
    /// `μλ₁ − (2η + 6L)`
    pub theta_strict: f64,
    /// `μλ₁ − η + ρ`
    pub zeta: Option<f64>,
    pub admissible: Admissibility,
}

pub fn stability_constants(p: &CbfParameters, model: Option<&JumpModel>) -> Result<StabilityConstants> {
    let eta = eta_constant(p)?;
    let (k, l, rho) = model.map_or((0.0, 0.0, None), |m| {
        let c = m.constants();
        (c.k, c.l, c.rho)
    });
    let lambda1 = 1.0;
    let kappa = lambda1 * p.mu - 2.0 * eta;
    let theta = p.mu * lambda1 - (2.0 * eta + l);
    let theta_strict = p.mu * lambda1 - (2.0 * eta + 6.0 * l);
    let zeta = rho.map(|rho| p.mu * lambda1 - eta + rho);
    Ok(StabilityConstants {
        eta,
        k,
        l,
        rho,
        kappa,
        theta,
        theta_strict,
        zeta,
        admissible: Admissibility {
            deterministic: kappa > 0.0,
            meansquare: theta > 0.0,
            pathwise: theta_strict > 0.0,
            stabilization: matches!((rho, zeta), (Some(r), Some(z)) if r > 0.0 && z > 0.0),
        },
    })
}

/// The anchor of a stabilizing model (zero without noise), checked to solve
/// the stationary problem.
fn stationary_anchor(cfg: &SimulationConfig) -> Result<SpectralField> {
    let anchor = match &cfg.noise {
        None => SpectralField::zeros(&cfg.domain),
        Some(m) => match m.coefficient() {
            Coefficient::Stabilizing { anchor, .. } => anchor.clone(),
            Coefficient::LinearMultiplicative { .. } => SpectralField::zeros(&cfg.domain),
            c => {
                return Err(Error::admissibility(
                    "γ(t, u∞, z) = 0",
                    format!("{} noise does not vanish at the stationary state", c.family()),
                ))
            }
        },
    };
    let res = stationary_residual(&anchor, &cfg.params, &cfg.forcing)?;
    let scale = 1.0 + dual_norm(&cfg.forcing);
    if res > 1e-8 * scale {
        return Err(Error::admissibility(
            "u∞ solves the stationary problem",
            format!("anchor residual {res:e}"),
        ));
    }
    Ok(anchor)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub rate: f64,
    pub times: Vec<f64>,
    pub ms_distance: Vec<f64>,
    pub envelope: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fitted_slope: Option<f64>,
    pub tolerance: f64,
    pub paths: usize,
    pub first_violation: Option<f64>,
    pub pass: bool,
}

impl DecayReport {
    fn build(rate: f64, s0: f64, times: Vec<f64>, series: &[Vec<f64>], tol: f64) -> Self {
        let n = times.len();
        let mut ms = Vec::with_capacity(n);
        let mut se = Vec::with_capacity(n);
        for i in 0..n {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            let (m, e) = mean_stderr(&col);
            ms.push(m);
            se.push(e);
        }
        let envelope: Vec<f64> = times.iter().map(|t| s0 * (-rate * t).exp()).collect();
        let first_violation = (0..n)
            .find(|&i| !(ms[i] <= envelope[i] * (1.0 + tol) + 3.0 * se[i]))
            .map(|i| times[i]);
        let (lt, lm): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&ms)
            .filter(|(_, m)| **m > 0.0)
            .map(|(t, m)| (*t, m.ln()))
            .unzip();
        DecayReport {
            rate,
            fitted_slope: (lt.len() >= 2).then(|| slope(&lt, &lm)),
            times,
            ms_distance: ms,
            envelope,
            stderr: se,
            tolerance: tol,
            paths: series.len(),
            first_violation,
            pass: first_violation.is_none(),
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,ms_distance,envelope,stderr")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.times[i], self.ms_distance[i], self.envelope[i], self.stderr[i]
            )?;
        }
        Ok(())
    }
}

/// Per-path series of `‖u(t) − reference‖²` (one state) or `‖u(t) − v(t)‖²`
/// (two coupled states) at the recorded base times.
fn distance_series(
    cfg: &SimulationConfig,
    states: &[SpectralField],
    reference: Option<&SpectralField>,
    paths: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut times = Vec::new();
    for n in 0..=cfg.steps() {
        if n == 0 || n % cfg.record_every == 0 || n == cfg.steps() {
            times.push(if n == cfg.steps() { cfg.horizon } else { n as f64 * cfg.dt });
        }
    }
    let series = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let mut out = Vec::with_capacity(times.len());
        integrate_coupled(cfg, states, &events, |node, s| {
            let keep = match node.kind {
                NodeKind::Initial => true,
                NodeKind::Base(n) => n % cfg.record_every == 0 || n == cfg.steps(),
                _ => false,
            };
            if keep {
                let d = match reference {
                    Some(r) => (&s[0] - r).norm_h_sq(),
                    None => (&s[0] - &s[1]).norm_h_sq(),
                };
                out.push(d);
            }
            Ok(())
        })?;
        Ok(out)
    })?;
    Ok((times, series))
}

/// `E‖u(t) − u∞‖² ≤ e^{−θt} E‖u₀ − u∞‖² (1 + tol) + 3·stderr`.
pub fn meansquare_decay_experiment(cfg: &SimulationConfig, paths: usize, tol: f64) -> Result<DecayReport> {
    let c = stability_constants(&cfg.params, cfg.noise.as_ref())?;
    if !c.admissible.meansquare {
        return Err(Error::admissibility(
            "μλ₁ > 2η + L",
            format!("θ = {}", c.theta),
        ));
    }
    let anchor = stationary_anchor(cfg)?;
    let (times, series) = distance_series(cfg, std::slice::from_ref(&cfg.initial), Some(&anchor), paths)?;
    let s0 = (&cfg.initial - &anchor).norm_h_sq();
    Ok(DecayReport::build(c.theta, s0, times, &series, tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct PathwiseReport {
    pub theta: f64,
    pub eps: f64,
    pub window: f64,
    pub windows: usize,
    /// Smallest window index after which the envelope always holds; `None`
    /// if it fails in the final quarter of the horizon.
    pub n0: Vec<Option<usize>>,
    pub blowups: usize,
    pub fraction_finite: f64,
    pub pass: bool,
}

/// Windowed sup bound `sup_{nh≤t≤(n+1)h} ‖u(t) − u∞‖ ≤ e^{−½(θ−ε)nh}`.
pub fn pathwise_decay_experiment(
    cfg: &SimulationConfig,
    paths: usize,
    window: f64,
    eps: f64,
    required_fraction: f64,
) -> Result<PathwiseReport> {
    let c = stability_constants(&cfg.params, cfg.noise.as_ref())?;
    if !c.admissible.pathwise {
        return Err(Error::admissibility(
            "μλ₁ > 2η + 6L",
            format!("μλ₁ − (2η + 6L) = {}", c.theta_strict),
        ));
    }
    if !(eps > 0.0 && eps < c.theta) {
        return Err(Error::config(format!("need 0 < ε < θ = {}, got {eps}", c.theta)));
    }
    if !(window > 0.0 && window <= cfg.horizon) {
        return Err(Error::config(format!("window must lie in (0, T], got {window}")));
    }
    let anchor = stationary_anchor(cfg)?;
    let windows = (cfg.horizon / window + 1e-9).floor() as usize;
    let rate = 0.5 * (c.theta - eps);
    let results = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let mut sup = vec![0.0f64; windows];
        let run = integrate_coupled(cfg, std::slice::from_ref(&cfg.initial), &events, |node, s| {
            let d = (&s[0] - &anchor).norm_h_sq().sqrt();
            let x = node.t / window;
            let n = x.floor() as usize;
            if n < windows {
                sup[n] = sup[n].max(d);
            }
            // a node on a window edge belongs to both windows
            if x == x.floor() && n >= 1 && n - 1 < windows {
                sup[n - 1] = sup[n - 1].max(d);
            }
            Ok(())
        });
        match run {
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
            Ok(_) => Ok(Some(sup)),
        }
    })?;
    let cutoff = (0.75 * windows as f64).floor() as usize;
    let mut blowups = 0;
    let n0: Vec<Option<usize>> = results
        .iter()
        .map(|r| match r {
            None => {
                blowups += 1;
                None
            }
            Some(sup) => {
                let mut n0 = windows;
                for n in (0..windows).rev() {
                    if sup[n] <= (-rate * n as f64 * window).exp() {
                        n0 = n;
                    } else {
                        break;
                    }
                }
                (n0 <= cutoff).then_some(n0)
            }
        })
        .collect();
    let finite = n0.iter().filter(|x| x.is_some()).count();
    let fraction_finite = finite as f64 / paths.max(1) as f64;
    Ok(PathwiseReport {
        theta: c.theta,
        eps,
        window,
        windows,
        n0,
        blowups,
        fraction_finite,
        pass: fraction_finite >= required_fraction,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleDiagnostic {
    pub horizon: f64,
    /// Median over seeds of `|M(T)/T|` and `|M(10T)/(10T)|`
    pub median_short: f64,
    pub median_long: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilizationReport {
    pub zeta: f64,
    pub rho: f64,
    pub slack: f64,
    /// `max_{t ≥ 3T/4} (1/t) log‖u(t) − u∞‖²` per path; `None` on blow-up.
    pub final_slopes: Vec<Option<f64>>,
    pub blowups: usize,
    pub fraction_passing: f64,
    pub martingale: MartingaleDiagnostic,
    pub pass: bool,
}

/// Per-seed `M(t)/t = (1/t)[Σ_i log(1 + g(z_i)) − t ∫ log(1 + g) dλ]` at
/// `t = T` and `t = 10T`.
pub fn martingale_diagnostic(model: &JumpModel, horizon: f64, seeds: usize, seed: u64) -> Result<MartingaleDiagnostic> {
    let drift = model.marks().integrate(|z| model.scalar(z).ln_1p());
    let at = |t: f64| -> Result<Vec<f64>> {
        (0..seeds as u64)
            .map(|i| {
                let ev = noise::sample_jump_events(model.marks(), t, &mut noise::stream(seed, i))?;
                let sum: f64 = ev.iter().map(|e| model.scalar(e.mark).ln_1p()).sum();
                Ok(((sum - t * drift) / t).abs())
            })
            .collect()
    };
    let short = median(&at(horizon)?);
    let long = median(&at(10.0 * horizon)?);
    Ok(MartingaleDiagnostic {
        horizon,
        median_short: short,
        median_long: long,
        ratio: long / short,
    })
}

/// Per-path asymptotic log-slope of `‖u(t) − u∞‖²` against `−ζ`.
pub fn stabilization_experiment(
    cfg: &SimulationConfig,
    paths: usize,
    slack: f64,
    required_fraction: f64,
) -> Result<StabilizationReport> {
    let model = cfg
        .noise
        .as_ref()
        .ok_or_else(|| Error::admissibility("ρ > 0", "stabilization needs jump noise"))?;
    let rho = model.require_stabilizing()?;
    let c = stability_constants(&cfg.params, Some(model))?;
    let zeta = c.zeta.unwrap_or(f64::NAN);
    if !(zeta > 0.0) {
        return Err(Error::admissibility("ζ = μλ₁ − η + ρ > 0", format!("ζ = {zeta}")));
    }
    let anchor = stationary_anchor(cfg)?;
    let from = 0.75 * cfg.horizon;
    let slopes = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let mut worst = f64::NEG_INFINITY;
        let run = integrate_coupled(cfg, std::slice::from_ref(&cfg.initial), &events, |node, s| {
            if node.t >= from && node.t > 0.0 {
                let d = (&s[0] - &anchor).norm_h_sq();
                worst = worst.max(d.ln() / node.t);
            }
            Ok(())
        });
        match run {
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
            Ok(_) => Ok(Some(worst)),
        }
    })?;
    let blowups = slopes.iter().filter(|s| s.is_none()).count();
    let ok = slopes
        .iter()
        .filter(|s| matches!(s, Some(v) if *v <= -zeta + slack))
        .count();
    let fraction_passing = ok as f64 / paths.max(1) as f64;
    let martingale = martingale_diagnostic(model, cfg.horizon, paths.max(20), cfg.seed)?;
    Ok(StabilizationReport {
        zeta,
        rho,
        slack,
        final_slopes: slopes,
        blowups,
        fraction_passing,
        pass: fraction_passing >= required_fraction && martingale.ratio <= 0.5,
        martingale,
    })
}

/// `E‖u(t) − v(t)‖² ≤ ‖u₀ − v₀‖² e^{−(μλ₁ − (2η + L))t}(1 + tol) + 3·stderr`
/// under synchronous coupling.
pub fn coupling_decay_experiment(
    cfg: &SimulationConfig,
    u0: &SpectralField,
    v0: &SpectralField,
    paths: usize,
    tol: f64,
) -> Result<DecayReport> {
    let c = stability_constants(&cfg.params, cfg.noise.as_ref())?;
    if !c.admissible.meansquare {
        return Err(Error::admissibility(
            "μλ₁ > 2η + L",
            format!("θ = {}", c.theta),
        ));
    }
    u0.compatible(v0)?;
    let (times, series) = distance_series(cfg, &[u0.clone(), v0.clone()], None, paths)?;
    Ok(DecayReport::build(c.theta, (u0 - v0).norm_h_sq(), times, &series, tol))
}

/// Largest change of `u − v` across any jump of one coupled path; zero up
/// to rounding for additive noise.
pub fn coupled_jump_defect(cfg: &SimulationConfig, u0: &SpectralField, v0: &SpectralField, index: u64) -> Result<f64> {
    let events = cfg.path_events(index)?;
    let mut before: Option<SpectralField> = None;
    let mut worst: f64 = 0.0;
    integrate_coupled(cfg, &[u0.clone(), v0.clone()], &events, |node, s| {
        match node.kind {
            NodeKind::PreJump(_) => before = Some(&s[0] - &s[1]),
            NodeKind::Jump(_) => {
                let b = before.take().expect("a jump follows its left limit");
                worst = worst.max((&(&s[0] - &s[1]) - &b).norm_h_sq().sqrt());
            }
            _ => {}
        }
        Ok(())
    })?;
    Ok(worst)
}
