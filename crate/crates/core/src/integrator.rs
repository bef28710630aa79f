//! Jump-adapted exponential Euler integration of the Galerkin system and the
//! per-path Itô energy ledger.
//!
//! Between jumps each mode advances as
//! `û ↦ e^{−μ|k|²h} û + h φ₁(−μ|k|²h) N̂` with
//! `N = −B(u) − βC(u) + f − ∫γ(u, z)λ(dz)`. Jump times are inserted into the
//! time grid and jumps are applied exactly, `u ↦ u + γ(u−, z)`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{self, JumpEvent, JumpModel};
use crate::operators::{c_grid, drift_nonlinearity, CbfParameters};
use crate::spectral::{lp_integral, Domain, SpectralField};

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub domain: Domain,
    pub params: CbfParameters,
    pub forcing: SpectralField,
    pub noise: Option<JumpModel>,
    /// Modes with any `|k_i| > galerkin_modes` are removed.
    pub galerkin_modes: usize,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    pub seed: u64,
    pub initial: SpectralField,
}

impl SimulationConfig {
    /// Noise-free configuration with zero forcing, full Galerkin space and a
    /// snapshot every step.
    pub fn new(
        domain: &Domain,
        params: CbfParameters,
        initial: SpectralField,
        horizon: f64,
        dt: f64,
    ) -> Self {
        SimulationConfig {
            domain: domain.clone(),
            params,
            forcing: SpectralField::zeros(domain),
            noise: None,
            galerkin_modes: domain.resolution() / 2,
            horizon,
            dt,
            record_every: 1,
            seed: 0,
            initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.dt <= self.horizon) {
            return Err(Error::config(format!(
                "need dt ≤ T, got dt = {} and T = {}",
                self.dt, self.horizon
            )));
        }
        let n = self.domain.resolution();
        if self.galerkin_modes == 0 || self.galerkin_modes > n / 2 {
            return Err(Error::config(format!(
                "galerkin_modes must lie in 1..={}, got {}",
                n / 2,
                self.galerkin_modes
            )));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        let probe = SpectralField::zeros(&self.domain);
        probe.compatible(&self.forcing)?;
        probe.compatible(&self.initial)?;
        if let Some(m) = &self.noise {
            m.base_field(&probe)?;
        }
        Ok(())
    }

    /// Number of base steps; the last one is shortened to end at `T`.
    pub fn steps(&self) -> usize {
        let n = (self.horizon / self.dt).ceil() as usize;
        if n > 1 && (n - 1) as f64 * self.dt >= self.horizon * (1.0 - 1e-12) {
            n - 1
        } else {
            n.max(1)
        }
    }

    fn base_time(&self, n: usize) -> f64 {
        if n >= self.steps() {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    /// Jump events of trajectory `index`.
    pub fn path_events(&self, index: u64) -> Result<Vec<JumpEvent>> {
        match &self.noise {
            None => Ok(Vec::new()),
            Some(m) => noise::sample_jump_events(
                m.marks(),
                self.horizon,
                &mut noise::stream(self.seed, index),
            ),
        }
    }
}

/// Terms of the pathwise energy balance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub kinetic_delta: f64,
    pub viscous: f64,
    pub damping: f64,
    pub forcing_work: f64,
    pub jump_qv: f64,
    pub martingale_term: f64,
    pub residual: f64,
}

impl EnergyLedger {
    fn close(&mut self, initial: f64, last: f64) {
        self.kinetic_delta = last - initial;
        self.residual = self.kinetic_delta + self.viscous + self.damping
            - self.forcing_work
            - self.jump_qv
            - self.martingale_term;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Initial,
    /// End of base step `n` (1-based).
    Base(usize),
    /// Left limit just before event `i`.
    PreJump(usize),
    /// Post-jump state after event `i`.
    Jump(usize),
}

#[derive(Clone, Debug)]
pub struct NodeInfo {
    pub t: f64,
    pub kind: NodeKind,
    /// `‖γ(u(τ−), z)‖_H` per state at a jump node; empty otherwise.
    pub gamma_norms: Vec<f64>,
}

impl NodeInfo {
    fn plain(t: f64, kind: NodeKind) -> Self {
        NodeInfo {
            t,
            kind,
            gamma_norms: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub mark: f64,
    /// `‖γ(u(τ−), z)‖_H`
    pub gamma_norm: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norm_h: Vec<f64>,
    pub norm_v: Vec<f64>,
    pub norm_lr1: Vec<f64>,
    pub is_jump: Vec<bool>,
    pub jumps: Vec<JumpRecord>,
    #[serde(skip)]
    pub snapshots: Vec<SpectralField>,
}

impl Trajectory {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,norm_H,norm_V,norm_Lr1,is_jump")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[i],
                self.norm_h[i],
                self.norm_v[i],
                self.norm_lr1[i],
                self.is_jump[i] as u8
            )?;
        }
        Ok(())
    }

    pub fn write_jump_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "tau,z,gamma_norm_H")?;
        for j in &self.jumps {
            writeln!(w, "{},{},{}", j.time, j.mark, j.gamma_norm)?;
        }
        Ok(())
    }
}

/// Precomputed per-configuration data for stepping.
struct Stepper<'a> {
    cfg: &'a SimulationConfig,
    decay: Vec<f64>,
    keep: Option<Vec<bool>>,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimulationConfig) -> Self {
        let d = &cfg.domain;
        let decay = d.k_sq_all().iter().map(|k2| cfg.params.mu * k2).collect();
        let kmax = cfg.galerkin_modes as i32;
        let keep = if cfg.galerkin_modes >= d.resolution() / 2 - 1 {
            None
        } else {
            Some(
                (0..d.len())
                    .map(|i| d.wavenumber(i).iter().all(|c| c.abs() <= kmax))
                    .collect(),
            )
        };
        Stepper { cfg, decay, keep }
    }

    fn truncate(&self, u: &mut SpectralField) {
        if let Some(keep) = &self.keep {
            for c in u.components_mut() {
                for (z, &k) in c.iter_mut().zip(keep) {
                    if !k {
                        *z = num_complex::Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// One exponential Euler step of length `h`; ledger terms use the left
    /// endpoint.
    fn step(&self, u: &mut SpectralField, h: f64, ledger: Option<&mut EnergyLedger>) -> Result<()> {
        let p = &self.cfg.params;
        let (nl, lr1) = drift_nonlinearity(u, p);
        let mut rhs = nl.scale(-1.0);
        rhs.axpy(1.0, &self.cfg.forcing);
        let mut comp_inner = 0.0;
        if let Some(m) = &self.cfg.noise {
            let b = m.base_field(u)?;
            rhs.axpy(-m.mean_scalar(), &b);
            comp_inner = m.mean_scalar() * b.inner(u);
        }
        if let Some(l) = ledger {
            l.viscous += 2.0 * p.mu * u.norm_v_sq() * h;
            l.damping += 2.0 * p.beta * lr1 * h;
            l.forcing_work += 2.0 * self.cfg.forcing.inner(u) * h;
            l.martingale_term -= 2.0 * comp_inner * h;
        }
        let d = u.domain().clone();
        let rc = rhs.components();
        let uc = u.components_mut();
        for idx in 0..d.len() {
            if !d.is_active(idx) {
                continue;
            }
            let x = self.decay[idx] * h;
            let e = (-x).exp();
            let phi = if x < 1e-8 {
                1.0 - 0.5 * x
            } else {
                -(-x).exp_m1() / x
            };
            for (c, r) in uc.iter_mut().zip(rc) {
                c[idx] = c[idx] * e + r[idx] * (h * phi);
            }
        }
        self.truncate(u);
        Ok(())
    }

    fn jump(
        &self,
        u: &mut SpectralField,
        z: f64,
        ledger: Option<&mut EnergyLedger>,
    ) -> Result<f64> {
        let m = self
            .cfg
            .noise
            .as_ref()
            .expect("jumps require a noise model");
        let gamma = noise::noise_coefficient(m, u, z)?;
        let g2 = gamma.norm_h_sq();
        if let Some(l) = ledger {
            l.jump_qv += g2;
            l.martingale_term += 2.0 * gamma.inner(u);
        }
        u.axpy(1.0, &gamma);
        self.truncate(u);
        Ok(g2.sqrt())
    }
}

/// One deterministic exponential Euler step of length `dt` (jumps excluded,
/// compensator drift included).
pub fn deterministic_step(
    u: &SpectralField,
    dt: f64,
    cfg: &SimulationConfig,
) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    u.compatible(&cfg.forcing)?;
    let mut out = u.clone();
    Stepper::new(cfg).step(&mut out, dt, None)?;
    Ok(out)
}

/// `u + γ(u, z)`.
/// Amplitude at time `t` of the noiseless, unforced flow started from the
/// Beltrami field of amplitude `a0`:
/// `a(t) = [(a0^{1−r} + β/μ) e^{(r−1)μt} − β/μ]^{−1/(r−1)}`.
pub fn bernoulli_amplitude(a0: f64, p: &CbfParameters, t: f64) -> f64 {
    if a0 == 0.0 {
        return 0.0;
    }
    let (m, b, r) = (p.mu, p.beta, p.r);
    let y = (a0.abs().powf(1.0 - r) + b / m) * ((r - 1.0) * m * t).exp() - b / m;
    a0.signum() * y.powf(-1.0 / (r - 1.0))
}

pub fn apply_jump(u: &SpectralField, model: &JumpModel, z: f64) -> Result<SpectralField> {
    let mut out = u.clone();
    out.axpy(1.0, &noise::noise_coefficient(model, u, z)?);
    Ok(out)
}

fn blow_up_limit(cfg: &SimulationConfig, u0s: &[SpectralField]) -> f64 {
    let mut scale = cfg.forcing.norm_h_sq().sqrt().max(1.0);
    for u in u0s {
        scale = scale.max(u.norm_h_sq().sqrt());
    }
    if let Some(m) = &cfg.noise {
        if let Some(a) = m.anchor() {
            scale = scale.max(a.norm_h_sq().sqrt());
        }
        if let crate::noise::Coefficient::Additive { shape, .. } = m.coefficient() {
            scale = scale.max(shape.norm_h_sq().sqrt());
        }
    }
    1e6 * scale
}

/// Integrates several initial states under one shared noise realization.
///
/// `visit` sees every grid node: the initial state, each base step end and
/// the left limit and post-jump state at each jump, with all coupled states
/// at that node. Returns one energy ledger per state.
pub fn integrate_coupled(
    cfg: &SimulationConfig,
    initial: &[SpectralField],
    events: &[JumpEvent],
    mut visit: impl FnMut(&NodeInfo, &[SpectralField]) -> Result<()>,
) -> Result<Vec<EnergyLedger>> {
    cfg.validate()?;
    if !events.is_empty() && cfg.noise.is_none() {
        return Err(Error::config("jump events given without a noise model"));
    }
    let stepper = Stepper::new(cfg);
    let mut states: Vec<SpectralField> = initial
        .iter()
        .map(|u| {
            cfg.domain
                .as_ref()
                .eq(u.domain().as_ref())
                .then_some(())
                .ok_or(Error::DomainMismatch)?;
            let mut u = u.clone();
            stepper.truncate(&mut u);
            Ok(u)
        })
        .collect::<Result<_>>()?;
    let e0: Vec<f64> = states.iter().map(|u| u.norm_h_sq()).collect();
    let mut ledgers = vec![EnergyLedger::default(); states.len()];
    let limit = blow_up_limit(cfg, &states);
    visit(&NodeInfo::plain(0.0, NodeKind::Initial), &states)?;
    let mut t = 0.0;
    let mut next_event = 0;
    let steps = cfg.steps();
    for n in 1..=steps {
        let t_end = cfg.base_time(n);
        while next_event < events.len() && events[next_event].time <= t_end {
            let ev = events[next_event];
            if ev.time > t {
                let h = ev.time - t;
                for (u, l) in states.iter_mut().zip(ledgers.iter_mut()) {
                    stepper.step(u, h, Some(l))?;
                }
                t = ev.time;
            }
            visit(&NodeInfo::plain(t, NodeKind::PreJump(next_event)), &states)?;
            let gamma_norms = states
                .iter_mut()
                .zip(ledgers.iter_mut())
                .map(|(u, l)| stepper.jump(u, ev.mark, Some(l)))
                .collect::<Result<Vec<_>>>()?;
            guard(&states, t, limit)?;
            let node = NodeInfo {
                t,
                kind: NodeKind::Jump(next_event),
                gamma_norms,
            };
            visit(&node, &states)?;
            next_event += 1;
        }
        if t_end > t {
            let h = t_end - t;
            for (u, l) in states.iter_mut().zip(ledgers.iter_mut()) {
                stepper.step(u, h, Some(l))?;
            }
            t = t_end;
        }
        guard(&states, t, limit)?;
        visit(&NodeInfo::plain(t, NodeKind::Base(n)), &states)?;
    }
    for ((l, u), e) in ledgers.iter_mut().zip(&states).zip(&e0) {
        l.close(*e, u.norm_h_sq());
    }
    Ok(ledgers)
}

fn guard(states: &[SpectralField], t: f64, limit: f64) -> Result<()> {
    for u in states {
        let h = u.norm_h_sq().sqrt();
        if !h.is_finite() || h > limit {
            return Err(Error::BlowUp {
                time: t,
                norm_h: h,
                limit,
            });
        }
    }
    Ok(())
}

/// Integrates `cfg.initial` along trajectory `index`, recording norms every
/// `record_every` base steps and at every jump.
pub fn simulate_path(cfg: &SimulationConfig, index: u64) -> Result<(Trajectory, EnergyLedger)> {
    simulate_path_with(cfg, index, false)
}

/// As [`simulate_path`], optionally keeping a field snapshot at every
/// recorded time.
pub fn simulate_path_with(
    cfg: &SimulationConfig,
    index: u64,
    snapshots: bool,
) -> Result<(Trajectory, EnergyLedger)> {
    let events = cfg.path_events(index)?;
    let r = cfg.params.r;
    let m = c_grid(&cfg.domain, r);
    let mut traj = Trajectory::default();
    let ledgers = integrate_coupled(
        cfg,
        std::slice::from_ref(&cfg.initial),
        &events,
        |node, states| {
            let u = &states[0];
            let record = match node.kind {
                NodeKind::Initial => true,
                NodeKind::Base(n) => n % cfg.record_every == 0 || n == cfg.steps(),
                NodeKind::PreJump(_) => false,
                NodeKind::Jump(i) => {
                    traj.jumps.push(JumpRecord {
                        time: events[i].time,
                        mark: events[i].mark,
                        gamma_norm: node.gamma_norms[0],
                    });
                    true
                }
            };
            if record {
                traj.times.push(node.t);
                traj.norm_h.push(u.norm_h_sq().sqrt());
                traj.norm_v.push(u.norm_v_sq().sqrt());
                traj.norm_lr1
                    .push(lp_integral(u, r + 1.0, m).powf(1.0 / (r + 1.0)));
                traj.is_jump.push(matches!(node.kind, NodeKind::Jump(_)));
                if snapshots {
                    traj.snapshots.push(u.clone());
                }
            }
            Ok(())
        },
    )?;
    Ok((traj, ledgers[0]))
}

/// Runs `f` on trajectory indices `0..paths` in parallel; results are in
/// index order.
pub fn ensemble<T: Send>(paths: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..paths as u64).into_par_iter().map(f).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyEstimateReport {
    /// Monte Carlo mean of `sup‖u‖² + 4μ∫‖u‖²_V + 4β∫‖u‖^{r+1}_{L^{r+1}}`
    pub estimate: f64,
    pub stderr: f64,
    /// `(2E‖u₀‖² + 14KT)e^{28KT}`
    pub bound: f64,
    pub k: f64,
    pub paths: usize,
    pub passed: bool,
}

/// Monte Carlo check of the a priori energy estimate for unforced flow.
pub fn energy_estimate_check(cfg: &SimulationConfig, paths: usize) -> Result<EnergyEstimateReport> {
    if !cfg.forcing.is_zero() {
        return Err(Error::config(
            "the energy estimate check requires zero forcing",
        ));
    }
    if paths == 0 {
        return Err(Error::config("need at least one path"));
    }
    let k = cfg.noise.as_ref().map_or(0.0, |m| m.k());
    let t = cfg.horizon;
    let bound = (2.0 * cfg.initial.norm_h_sq() + 14.0 * k * t) * (28.0 * k * t).exp();
    let samples = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let mut sup: f64 = 0.0;
        let ledger =
            integrate_coupled(cfg, std::slice::from_ref(&cfg.initial), &events, |_, s| {
                sup = sup.max(s[0].norm_h_sq());
                Ok(())
            })?[0];
        Ok(sup + 2.0 * ledger.viscous + 2.0 * ledger.damping)
    })?;
    let (estimate, stderr) = crate::stats::mean_stderr(&samples);
    Ok(EnergyEstimateReport {
        estimate,
        stderr,
        bound,
        k,
        paths,
        passed: estimate < bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Coefficient, MarkDistribution, MarkFn};
    use crate::spectral::make_domain;

    #[test]
    fn heat_decay_of_a_unit_mode_is_exact() {
        let d = make_domain(2, 8, 2).unwrap();
        let p = CbfParameters::new(0.7, 1.0, 3.0).unwrap();
        let cfg = SimulationConfig::new(&d, p, SpectralField::zeros(&d), 1.0, 0.1);
        // cubic damping is ~1e-200 relative at this amplitude
        let u = SpectralField::shear(&d, 1e-100, 1).unwrap();
        let next = deterministic_step(&u, 0.1, &cfg).unwrap();
        let want = u.scale((-0.07f64).exp());
        assert!(next.max_abs_diff(&want) <= 1e-16 * 1e-100);
    }

    #[test]
    fn steps_end_exactly_at_horizon() {
        let d = make_domain(2, 8, 2).unwrap();
        let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();
        let cfg = SimulationConfig::new(&d, p, SpectralField::zeros(&d), 1.0, 0.1);
        assert_eq!(cfg.steps(), 10);
        assert_eq!(cfg.base_time(10), 1.0);
        let cfg = SimulationConfig::new(&d, p, SpectralField::zeros(&d), 1.0, 0.3);
        assert_eq!(cfg.steps(), 4);
        assert_eq!(cfg.base_time(4), 1.0);
    }

    #[test]
    fn jump_examples() {
        let d = make_domain(2, 8, 2).unwrap();
        let u = SpectralField::shear(&d, 1.0, 1).unwrap();
        let lm = JumpModel::new(
            MarkDistribution::single(1.0, 1.0).unwrap(),
            Coefficient::LinearMultiplicative {
                sigma: MarkFn::Constant(1.0),
            },
        )
        .unwrap();
        assert!(
            apply_jump(&u, &lm, 1.0)
                .unwrap()
                .max_abs_diff(&u.scale(2.0))
                == 0.0
        );
        let st = JumpModel::new(
            MarkDistribution::single(1.0, 1.0).unwrap(),
            Coefficient::Stabilizing {
                g: MarkFn::Identity,
                anchor: u.clone(),
            },
        )
        .unwrap();
        assert_eq!(apply_jump(&u, &st, 1.0).unwrap(), u);
        let phi = SpectralField::shear(&d, 0.5, 2).unwrap();
        let add = JumpModel::new(
            MarkDistribution::single(1.0, 1.0).unwrap(),
            Coefficient::Additive {
                h: MarkFn::Constant(1.0),
                shape: phi.clone(),
            },
        )
        .unwrap();
        assert!(
            apply_jump(&u, &add, 1.0)
                .unwrap()
                .max_abs_diff(&(&u + &phi))
                < 1e-16
        );
    }

    #[test]
    fn rejects_bad_config() {
        let d = make_domain(2, 8, 2).unwrap();
        let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();
        let mut cfg = SimulationConfig::new(&d, p, SpectralField::zeros(&d), 1.0, 2.0);
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        cfg.galerkin_modes = 5;
        assert!(cfg.validate().is_err());
        cfg.galerkin_modes = 4;
        assert!(cfg.validate().is_ok());
    }
}
