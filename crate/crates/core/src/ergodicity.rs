//! Invariant-measure experiments: long-run time averages, the time-averaged
//! `V`-norm tightness bound, cross-checks of averages from different initial
//! states, and the exponential mixing gap under synchronous coupling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{ensemble, integrate_coupled, NodeKind, SimulationConfig};
use crate::operators::c_grid;
use crate::spectral::{lp_integral, SpectralField};
use crate::stability::stability_constants;
use crate::stats::{mean_stderr, running_average, slope};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    #[serde(rename = "norm_H_sq")]
    NormHSq,
    #[serde(rename = "norm_V_sq")]
    NormVSq,
    /// `(2π)^dim |û_k|²`
    ModeEnergy(Vec<i32>),
    /// `‖u‖_{L^{r+1}}`
    #[serde(rename = "norm_Lr1")]
    NormLr1,
}

impl Observable {
    pub fn id(&self) -> String {
        match self {
            Observable::NormHSq => "norm_H_sq".into(),
            Observable::NormVSq => "norm_V_sq".into(),
            Observable::ModeEnergy(k) => {
                let parts: Vec<String> = k.iter().map(|c| c.to_string()).collect();
                format!("mode_energy_{}", parts.join("_"))
            }
            Observable::NormLr1 => "norm_Lr1".into(),
        }
    }

    pub fn eval(&self, u: &SpectralField, r: f64) -> f64 {
        match self {
            Observable::NormHSq => u.norm_h_sq(),
            Observable::NormVSq => u.norm_v_sq(),
            Observable::ModeEnergy(k) => {
                u.domain().volume() * u.mode(k).iter().map(|z| z.norm_sqr()).sum::<f64>()
            }
            Observable::NormLr1 => {
                lp_integral(u, r + 1.0, c_grid(u.domain(), r)).powf(1.0 / (r + 1.0))
            }
        }
    }

    fn check(&self, cfg: &SimulationConfig) -> Result<()> {
        if let Observable::ModeEnergy(k) = self {
            let d = &cfg.domain;
            if k.len() != d.dim() || d.index_of(k).is_none_or(|i| !d.is_active(i)) {
                return Err(Error::config(format!("mode {k:?} is not an active wavenumber")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Running average from the end of burn-in; NaN before it.
    pub running_avg: Vec<f64>,
}

impl ObservableSeries {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,value,running_avg")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.values[i], self.running_avg[i])?;
        }
        Ok(())
    }

    /// Final running average.
    pub fn average(&self) -> f64 {
        *self.running_avg.last().unwrap_or(&f64::NAN)
    }
}

fn require_zero_forcing(cfg: &SimulationConfig) -> Result<()> {
    if !cfg.forcing.is_zero() {
        return Err(Error::config("invariant-measure experiments require zero forcing"));
    }
    Ok(())
}

/// `μ > K/(2λ₁)`
fn require_energy_gate(cfg: &SimulationConfig) -> Result<f64> {
    let k = cfg.noise.as_ref().map_or(0.0, |m| m.k());
    if !(cfg.params.mu > k / 2.0) {
        return Err(Error::admissibility(
            "μ > K/(2λ₁)",
            format!("μ = {}, K/2 = {}", cfg.params.mu, k / 2.0),
        ));
    }
    Ok(k)
}

/// Observable values of trajectory `index` from `u0` at the recorded times.
fn observe_path(
    cfg: &SimulationConfig,
    u0: &SpectralField,
    index: u64,
    observables: &[Observable],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let events = cfg.path_events(index)?;
    let mut times = Vec::new();
    let mut values = vec![Vec::new(); observables.len()];
    let r = cfg.params.r;
    integrate_coupled(cfg, std::slice::from_ref(u0), &events, |node, s| {
        let keep = match node.kind {
            NodeKind::Initial => true,
            NodeKind::Base(n) => n % cfg.record_every == 0 || n == cfg.steps(),
            _ => false,
        };
        if keep {
            times.push(node.t);
            for (o, v) in observables.iter().zip(values.iter_mut()) {
                v.push(o.eval(&s[0], r));
            }
        }
        Ok(())
    })?;
    Ok((times, values))
}

fn burn_index(times: &[f64], burn_in: f64) -> usize {
    let t0 = burn_in * times.last().copied().unwrap_or(0.0);
    times.iter().position(|&t| t >= t0).unwrap_or(0)
}

fn series_with_burn_in(id: String, times: Vec<f64>, values: Vec<f64>, burn_in: f64) -> ObservableSeries {
    let b = burn_index(&times, burn_in);
    let mut running_avg = vec![f64::NAN; b];
    running_avg.extend(running_average(&times[b..], &values[b..]));
    ObservableSeries {
        id,
        times,
        values,
        running_avg,
    }
}

/// Left-endpoint time average of `values` over `[times[a], times[b]]`.
fn window_average(times: &[f64], values: &[f64], a: usize, b: usize) -> f64 {
    if b <= a {
        return values[a];
    }
    let integral: f64 = (a..b).map(|i| values[i] * (times[i + 1] - times[i])).sum();
    integral / (times[b] - times[a])
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeAverageReport {
    pub series: Vec<ObservableSeries>,
    /// Relative change of the running average over the last half of the
    /// post-burn-in window.
    pub last_half_change: Vec<f64>,
    /// Relative gap between the averages over the two halves of the
    /// post-burn-in window.
    pub halves_gap: Vec<f64>,
    pub tolerance: f64,
    pub stabilized: bool,
}

/// One long trajectory from `cfg.initial`; running averages after burn-in.
pub fn time_average_experiment(
    cfg: &SimulationConfig,
    observables: &[Observable],
    burn_in: f64,
    tol: f64,
) -> Result<TimeAverageReport> {
    require_zero_forcing(cfg)?;
    require_energy_gate(cfg)?;
    for o in observables {
        o.check(cfg)?;
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::config(format!("burn-in fraction must lie in [0, 1), got {burn_in}")));
    }
    let (times, values) = observe_path(cfg, &cfg.initial, 0, observables)?;
    let b = burn_index(&times, burn_in);
    let last = times.len() - 1;
    let mid = b + (last - b) / 2;
    let mut last_half_change = Vec::new();
    let mut halves_gap = Vec::new();
    let mut series = Vec::new();
    for (o, v) in observables.iter().zip(values) {
        let s = series_with_burn_in(o.id(), times.clone(), v, burn_in);
        // averages below 1e-6 of the initial value count as settled at zero
        let floor = 1e-6 * s.values[0].abs();
        let change = |a: f64, c: f64| if a.abs().max(c.abs()) <= floor { 0.0 } else { relative(a, c) };
        last_half_change.push(change(s.running_avg[mid], s.running_avg[last]));
        halves_gap.push(change(
            window_average(&s.times, &s.values, b, mid),
            window_average(&s.times, &s.values, mid, last),
        ));
        series.push(s);
    }
    let stabilized = last_half_change.iter().all(|&c| c <= tol);
    Ok(TimeAverageReport {
        series,
        last_half_change,
        halves_gap,
        tolerance: tol,
        stabilized,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TightnessReport {
    /// `(2μ − K/λ₁) E[(1/T)∫₀ᵀ‖u‖²_V]`
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `E‖u₀‖²/T + K`
    pub bound: f64,
    /// `lhs / bound`, zero when both vanish.
    pub ratio: f64,
    pub pass: bool,
}

/// The time-averaged `V`-norm bound behind tightness of the averaged laws.
pub fn tightness_diagnostic(cfg: &SimulationConfig, paths: usize, slack: f64) -> Result<TightnessReport> {
    require_zero_forcing(cfg)?;
    let k = require_energy_gate(cfg)?;
    let mu = cfg.params.mu;
    let t = cfg.horizon;
    let samples = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let ledger = integrate_coupled(cfg, std::slice::from_ref(&cfg.initial), &events, |_, _| Ok(()))?[0];
        // ledger.viscous = 2μ∫‖u‖²_V
        Ok((2.0 * mu - k) * ledger.viscous / (2.0 * mu * t))
    })?;
    let (lhs, lhs_stderr) = mean_stderr(&samples);
    let bound = cfg.initial.norm_h_sq() / t + k;
    let ratio = if bound == 0.0 && lhs == 0.0 { 0.0 } else { lhs / bound };
    let se_ratio = if bound > 0.0 { lhs_stderr / bound } else { 0.0 };
    Ok(TightnessReport {
        lhs,
        lhs_stderr,
        bound,
        ratio,
        pass: ratio <= 1.0 + slack + 3.0 * se_ratio,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossCheckReport {
    pub observable: String,
    /// Post-burn-in time average per initial state.
    pub averages: Vec<f64>,
    /// Relative gap between the two halves of each run.
    pub self_errors: Vec<f64>,
    pub max_relative_gap: f64,
    /// Max gap within twice the combined self-consistency error.
    pub consistent: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Long-run averages of one observable from several initial states, each on
/// its own noise stream (trajectory index = position in `u0_list`).
pub fn ergodicity_cross_check(
    cfg: &SimulationConfig,
    u0_list: &[SpectralField],
    observable: &Observable,
    burn_in: f64,
    tol: f64,
) -> Result<CrossCheckReport> {
    let c = stability_constants(&cfg.params, cfg.noise.as_ref())?;
    if !c.admissible.meansquare {
        return Err(Error::admissibility("μλ₁ > 2η + L", format!("θ = {}", c.theta)));
    }
    observable.check(cfg)?;
    let runs = ensemble(u0_list.len(), |i| {
        let (times, mut values) = observe_path(cfg, &u0_list[i as usize], i, std::slice::from_ref(observable))?;
        let v = values.remove(0);
        let b = burn_index(&times, burn_in);
        let last = times.len() - 1;
        let mid = b + (last - b) / 2;
        let avg = window_average(&times, &v, b, last);
        let halves = relative(window_average(&times, &v, b, mid), window_average(&times, &v, mid, last));
        Ok((avg, halves))
    })?;
    let averages: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let self_errors: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let mut max_relative_gap: f64 = 0.0;
    let mut consistent = true;
    for i in 0..averages.len() {
        for j in i + 1..averages.len() {
            let g = relative(averages[i], averages[j]);
            max_relative_gap = max_relative_gap.max(g);
            consistent &= g <= 2.0 * (self_errors[i] + self_errors[j]);
        }
    }
    Ok(CrossCheckReport {
        observable: observable.id(),
        averages,
        self_errors,
        max_relative_gap,
        consistent,
        tolerance: tol,
        pass: max_relative_gap <= tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub cap: f64,
    pub rate: f64,
    pub times: Vec<f64>,
    /// `|E φ(u(t)) − E φ(v(t))|`
    pub gap: Vec<f64>,
    pub gap_stderr: Vec<f64>,
    /// `E‖u(t) − v(t)‖_H`
    pub coupling_distance: Vec<f64>,
    pub envelope: Vec<f64>,
    /// `−slope` of `log E‖u − v‖_H`
    pub fitted_rate: Option<f64>,
    /// The gap never exceeds the coupling distance.
    pub lipschitz_bound_holds: bool,
    pub first_violation: Option<f64>,
    pub pass: bool,
}

impl MixingReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,gap,stderr,coupling_distance,envelope")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[i], self.gap[i], self.gap_stderr[i], self.coupling_distance[i], self.envelope[i]
            )?;
        }
        Ok(())
    }
}

/// Mixing gap of `φ(u) = min(‖u‖_H, cap)` under synchronous coupling
/// against `‖u₀ − v₀‖_H e^{−(μλ₁ − (2η + L))t/2}`.
pub fn mixing_rate_experiment(
    cfg: &SimulationConfig,
    u0: &SpectralField,
    v0: &SpectralField,
    paths: usize,
    cap: f64,
    tol: f64,
) -> Result<MixingReport> {
    let c = stability_constants(&cfg.params, cfg.noise.as_ref())?;
    if !c.admissible.meansquare {
        return Err(Error::admissibility("μλ₁ > 2η + L", format!("θ = {}", c.theta)));
    }
    u0.compatible(v0)?;
    if !(cap > 0.0) {
        return Err(Error::config("observable cap must be positive"));
    }
    let phi = |u: &SpectralField| u.norm_h_sq().sqrt().min(cap);
    let mut times = Vec::new();
    for n in 0..=cfg.steps() {
        if n == 0 || n % cfg.record_every == 0 || n == cfg.steps() {
            times.push(if n == cfg.steps() { cfg.horizon } else { n as f64 * cfg.dt });
        }
    }
    let states = [u0.clone(), v0.clone()];
    let per_path = ensemble(paths, |i| {
        let events = cfg.path_events(i)?;
        let mut diffs = Vec::with_capacity(times.len());
        let mut dists = Vec::with_capacity(times.len());
        integrate_coupled(cfg, &states, &events, |node, s| {
            let keep = match node.kind {
                NodeKind::Initial => true,
                NodeKind::Base(n) => n % cfg.record_every == 0 || n == cfg.steps(),
                _ => false,
            };
            if keep {
                diffs.push(phi(&s[0]) - phi(&s[1]));
                dists.push((&s[0] - &s[1]).norm_h_sq().sqrt());
            }
            Ok(())
        })?;
        Ok((diffs, dists))
    })?;
    let rate = 0.5 * c.theta;
    let d0 = (u0 - v0).norm_h_sq().sqrt();
    let n = times.len();
    let (mut gap, mut gap_stderr, mut coupling_distance, mut envelope) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let d: Vec<f64> = per_path.iter().map(|p| p.0[i]).collect();
        let (m, se) = mean_stderr(&d);
        gap.push(m.abs());
        gap_stderr.push(se);
        coupling_distance.push(per_path.iter().map(|p| p.1[i]).sum::<f64>() / paths as f64);
        envelope.push(d0 * (-rate * times[i]).exp());
    }
    let lipschitz_bound_holds = (0..n).all(|i| gap[i] <= coupling_distance[i] * (1.0 + 1e-12) + 1e-300);
    let first_violation = (0..n)
        .find(|&i| !(gap[i] <= envelope[i] * (1.0 + tol) + 3.0 * gap_stderr[i]))
        .map(|i| times[i]);
    let (lt, ld): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&coupling_distance)
        .filter(|(_, d)| **d > 0.0)
        .map(|(t, d)| (*t, d.ln()))
        .unzip();
    Ok(MixingReport {
        cap,
        rate,
        fitted_rate: (lt.len() >= 2).then(|| -slope(&lt, &ld)),
        times,
        gap,
        gap_stderr,
        coupling_distance,
        envelope,
        lipschitz_bound_holds,
        first_violation,
        pass: first_violation.is_none() && lipschitz_bound_holds,
    })
}
