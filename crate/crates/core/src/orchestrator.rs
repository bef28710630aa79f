//! Experiment dispatch. A run reads a configuration, writes `manifest.json`
//! with the resolved configuration, runs the command inside a work pool of
//! the requested size and leaves CSV series plus a `verdict.json` (or a
//! `failure.json`) in the output directory.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_config, FieldSpec, RunConfig, StabilityMode};
use crate::ergodicity::{ergodicity_cross_check, mixing_rate_experiment, tightness_diagnostic, time_average_experiment};
use crate::error::{Error, Result};
use crate::integrator::{bernoulli_amplitude, ensemble, simulate_path, SimulationConfig};
use crate::operators::{c_monotonicity_fuzz, eta_constant, fuzz_field, monotonicity_fuzz, operator_identities};
use crate::noise::{compensated_mean_check, ito_isometry_estimate, poisson_count_fit};
use crate::stability::{
    coupling_decay_experiment, meansquare_decay_experiment, pathwise_decay_experiment, stability_constants,
    stabilization_experiment,
};
use crate::stationary::{deterministic_decay_experiment, require_uniqueness_regime, solve_stationary, uniqueness_probe};
use crate::spectral::io::field_to_json;
use crate::spectral::SpectralField;

/// Bounds of the operator identity suite.
const B_SKEW_TOL: f64 = 1e-10;
const C_IDENTITY_TOL: f64 = 1e-8;
const STOKES_TOL: f64 = 1e-12;
/// Closed-form comparison tolerance for Beltrami runs.
const ORACLE_TOL: f64 = 1e-3;
/// Relative tolerance on time averages.
const AVERAGE_TOL: f64 = 0.05;
const UNIQUENESS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    VerifyOperators,
    Stationary,
    Stability,
    Stabilize,
    Ergodicity,
    Isometry,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::VerifyOperators,
        Command::Stationary,
        Command::Stability,
        Command::Stabilize,
        Command::Ergodicity,
        Command::Isometry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyOperators => "verify-operators",
            Command::Stationary => "stationary",
            Command::Stability => "stability",
            Command::Stabilize => "stabilize",
            Command::Ergodicity => "ergodicity",
            Command::Isometry => "isometry",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides `ensemble.seed`.
    pub seed: Option<u64>,
    /// Work-pool size; `None` lets the pool pick.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub command: Command,
    pub passed: bool,
    pub verdict: Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    command: Command,
    seed: u64,
    config: &'a RunConfig,
}

/// Process exit status: 0 when every asserted bound holds, 1 when a bound
/// fails, 2 on error.
pub fn exit_status(outcome: &Result<Outcome>) -> i32 {
    match outcome {
        Ok(o) if o.passed => 0,
        Ok(_) => 1,
        Err(_) => 2,
    }
}

/// Runs the experiment. Errors are also recorded in `failure.json` when the
/// output directory is writable.
pub fn run(spec: &ExperimentSpec) -> Result<Outcome> {
    fs::create_dir_all(&spec.out)?;
    let result = run_inner(spec);
    match &result {
        Ok(o) => write_json(&spec.out.join("verdict.json"), o)?,
        Err(e) => write_failure(&spec.out, spec.command, e)?,
    }
    result
}

fn write_failure(out: &Path, command: Command, e: &Error) -> Result<()> {
    let mut v = json!({
        "command": command,
        "kind": e.kind(),
        "message": e.to_string(),
    });
    match e {
        Error::Admissibility { condition, .. } => v["condition"] = json!(condition),
        Error::Parse { line, column, .. } => {
            v["line"] = json!(line);
            v["column"] = json!(column);
        }
        _ => {}
    }
    write_json(&out.join("failure.json"), &v)
}

fn run_inner(spec: &ExperimentSpec) -> Result<Outcome> {
    let mut raw = parse_config(&spec.config)?;
    if let Some(seed) = spec.seed {
        raw.ensemble.seed = seed;
    }
    let cfg = raw.resolve()?;
    write_json(
        &spec.out.join("manifest.json"),
        &Manifest {
            artifact: "scbf",
            version: env!("CARGO_PKG_VERSION"),
            command: spec.command,
            seed: cfg.ensemble.seed,
            config: &cfg,
        },
    )?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::config(format!("cannot build work pool: {e}")))?;
    let (passed, verdict) = pool.install(|| dispatch(spec.command, &cfg, &spec.out))?;
    Ok(Outcome {
        command: spec.command,
        passed,
        verdict,
    })
}

fn dispatch(command: Command, cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    match command {
        Command::VerifyOperators => verify_operators(cfg, out),
        _ => {
            let sim = cfg.build()?;
            match command {
                Command::Simulate => simulate(cfg, &sim, out),
                Command::Stationary => stationary(cfg, &sim, out),
                Command::Stability => stability(cfg, &sim, out),
                Command::Stabilize => stabilize(cfg, &sim, out),
                Command::Ergodicity => ergodicity(cfg, &sim, out),
                Command::Isometry => isometry(cfg, &sim),
                Command::VerifyOperators => unreachable!(),
            }
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn simulate(cfg: &RunConfig, sim: &SimulationConfig, out: &Path) -> Result<(bool, Value)> {
    let paths = cfg.ensemble.paths;
    let runs = ensemble(paths, |i| simulate_path(sim, i))?;
    let mut ledgers = Vec::with_capacity(paths);
    for (i, (traj, ledger)) in runs.iter().enumerate() {
        traj.write_csv(create(&out.join(format!("trajectory_{i:04}.csv")))?)?;
        if sim.noise.is_some() {
            traj.write_jump_csv(create(&out.join(format!("jumps_{i:04}.csv")))?)?;
        }
        ledgers.push(ledger);
    }
    write_json(&out.join("ledger.json"), &ledgers)?;
    let mut verdict = json!({ "paths": paths });
    let mut passed = true;
    let oracle = match cfg.initial {
        FieldSpec::Beltrami { amplitude } if sim.noise.is_none() && sim.forcing.is_zero() => Some(amplitude),
        _ => None,
    };
    if let Some(amplitude) = oracle {
        let traj = &runs[0].0;
        let scale = sim.domain.volume().sqrt();
        let mut w = create(&out.join("oracle.csv"))?;
        writeln!(w, "t,norm_H,oracle_norm_H,rel_error")?;
        let mut max_rel: f64 = 0.0;
        for (t, h) in traj.times.iter().zip(&traj.norm_h) {
            let exact = scale * bernoulli_amplitude(amplitude, &sim.params, *t).abs();
            let rel = if exact > 0.0 { (h - exact).abs() / exact } else { h.abs() };
            max_rel = max_rel.max(rel);
            writeln!(w, "{t},{h},{exact},{rel}")?;
        }
        w.flush()?;
        passed = max_rel <= ORACLE_TOL;
        verdict["oracle"] = json!({ "max_relative_error": max_rel, "tolerance": ORACLE_TOL, "passed": passed });
    }
    Ok((passed, verdict))
}

fn verify_operators(cfg: &RunConfig, out: &Path) -> Result<(bool, Value)> {
    cfg.params.validate()?;
    eta_constant(&cfg.params)?;
    let domain = cfg.build_domain()?;
    let n = cfg.experiment.fuzz_cases;
    let seed = cfg.ensemble.seed;
    let cases = monotonicity_fuzz(&domain, &cfg.params, n, seed)?;
    let c_cases = c_monotonicity_fuzz(&domain, cfg.params.r, n, seed)?;
    let exps = &cfg.experiment.identity_exponents;
    let ids = ensemble(n, |i| operator_identities(&fuzz_field(&domain, seed.wrapping_add(i))?, exps))?;
    let max_b = ids.iter().map(|x| x.b_skew_relative).fold(0.0, f64::max);
    let max_a = ids.iter().map(|x| x.stokes_relative).fold(0.0, f64::max);
    let max_c: Vec<(f64, f64)> = exps
        .iter()
        .enumerate()
        .map(|(j, &r)| (r, ids.iter().map(|x| x.c_identity_relative[j].1).fold(0.0, f64::max)))
        .collect();
    write_json(&out.join("fuzz.json"), &cases)?;
    write_json(&out.join("fuzz_c.json"), &c_cases)?;
    let identities_ok = max_b <= B_SKEW_TOL && max_a <= STOKES_TOL && max_c.iter().all(|c| c.1 <= C_IDENTITY_TOL);
    let fuzz_ok = cases.iter().all(|c| c.passed);
    let c_ok = c_cases.iter().all(|c| c.passed);
    let verdict = json!({
        "cases": n,
        "monotonicity_passed": cases.iter().filter(|c| c.passed).count(),
        "c_monotonicity_passed": c_cases.iter().filter(|c| c.passed).count(),
        "identities": {
            "b_skew_relative": max_b,
            "c_identity_relative": max_c,
            "stokes_relative": max_a,
            "passed": identities_ok,
        },
    });
    Ok((fuzz_ok && c_ok && identities_ok, verdict))
}

fn stationary(cfg: &RunConfig, sim: &SimulationConfig, out: &Path) -> Result<(bool, Value)> {
    let tol = cfg.experiment.stationary_tol;
    let state = solve_stationary(&sim.params, &sim.forcing, &SpectralField::zeros(&sim.domain), tol)?;
    fs::write(out.join("stationary_field.json"), field_to_json(&state.u_inf)?)?;
    write_json(&out.join("convergence.json"), &state.record())?;
    let mut passed = state.converged;
    let mut verdict = json!({ "convergence": state.record() });
    match require_uniqueness_regime(&sim.params) {
        Ok(_) => {
            let probe = uniqueness_probe(&sim.params, &sim.forcing, cfg.experiment.uniqueness_inits, cfg.ensemble.seed, tol)?;
            let ok = !probe.inconclusive && probe.max_distance <= UNIQUENESS_TOL;
            passed &= ok;
            verdict["uniqueness"] = to_value(&probe)?;
            verdict["uniqueness"]["passed"] = json!(ok);
            let decay = deterministic_decay_experiment(
                &sim.params,
                &sim.forcing,
                &sim.initial,
                sim.horizon,
                sim.dt,
                cfg.experiment.tolerance,
            )?;
            let mut w = create(&out.join("decay.csv"))?;
            writeln!(w, "t,distance_sq,envelope")?;
            for i in 0..decay.times.len() {
                writeln!(w, "{},{},{}", decay.times[i], decay.distance_sq[i], decay.envelope[i])?;
            }
            w.flush()?;
            passed &= decay.passed;
            verdict["decay"] = to_value(&decay)?;
        }
        Err(e) => verdict["uniqueness"] = json!({ "skipped": e.to_string() }),
    }
    Ok((passed, verdict))
}

fn compare_field(cfg: &RunConfig, sim: &SimulationConfig) -> Result<SpectralField> {
    cfg.experiment
        .compare
        .as_ref()
        .ok_or_else(|| Error::config("this experiment needs `experiment.compare`"))?
        .build(&sim.domain, None)
}

fn stability(cfg: &RunConfig, sim: &SimulationConfig, out: &Path) -> Result<(bool, Value)> {
    let x = &cfg.experiment;
    let paths = cfg.ensemble.paths;
    let constants = stability_constants(&sim.params, sim.noise.as_ref())?;
    let (passed, mut verdict) = match x.mode {
        StabilityMode::Meansquare | StabilityMode::Coupling => {
            let rep = if x.mode == StabilityMode::Meansquare {
                meansquare_decay_experiment(sim, paths, x.tolerance)?
            } else {
                coupling_decay_experiment(sim, &sim.initial, &compare_field(cfg, sim)?, paths, x.tolerance)?
            };
            rep.write_csv(create(&out.join("decay.csv"))?)?;
            (rep.pass, to_value(&rep)?)
        }
        StabilityMode::Pathwise => {
            let eps = x.epsilon.unwrap_or(0.5 * constants.theta);
            let rep = pathwise_decay_experiment(sim, paths, x.window, eps, x.required_fraction)?;
            (rep.pass, to_value(&rep)?)
        }
    };
    verdict["constants"] = to_value(&constants)?;
    Ok((passed, verdict))
}

fn stabilize(cfg: &RunConfig, sim: &SimulationConfig, out: &Path) -> Result<(bool, Value)> {
    let x = &cfg.experiment;
    let rep = stabilization_experiment(sim, cfg.ensemble.paths, x.slack, x.required_fraction)?;
    let mut w = create(&out.join("final_slopes.csv"))?;
    writeln!(w, "path,final_slope")?;
    for (i, s) in rep.final_slopes.iter().enumerate() {
        match s {
            Some(s) => writeln!(w, "{i},{s}")?,
            None => writeln!(w, "{i},")?,
        }
    }
    w.flush()?;
    Ok((rep.pass, to_value(&rep)?))
}

fn ergodicity(cfg: &RunConfig, sim: &SimulationConfig, out: &Path) -> Result<(bool, Value)> {
    let x = &cfg.experiment;
    let avg = time_average_experiment(sim, &x.observables, x.burn_in, AVERAGE_TOL)?;
    for s in &avg.series {
        s.write_csv(create(&out.join(format!("observable_{}.csv", s.id)))?)?;
    }
    let tight = tightness_diagnostic(sim, cfg.ensemble.paths, x.slack)?;
    let mut passed = avg.stabilized && tight.pass;
    let mut verdict = json!({
        "time_average": {
            "observables": avg.series.iter().map(|s| &s.id).collect::<Vec<_>>(),
            "averages": avg.series.iter().map(|s| s.average()).collect::<Vec<_>>(),
            "last_half_change": avg.last_half_change,
            "halves_gap": avg.halves_gap,
            "stabilized": avg.stabilized,
        },
        "tightness": to_value(&tight)?,
    });
    if !x.initials.is_empty() {
        let mut starts = vec![sim.initial.clone()];
        for f in &x.initials {
            starts.push(f.build(&sim.domain, None)?);
        }
        let obs = x.observables.first().ok_or_else(|| Error::config("no observable given"))?;
        let rep = ergodicity_cross_check(sim, &starts, obs, x.burn_in, AVERAGE_TOL)?;
        passed &= rep.pass;
        verdict["cross_check"] = to_value(&rep)?;
    }
    if x.compare.is_some() {
        let rep = mixing_rate_experiment(sim, &sim.initial, &compare_field(cfg, sim)?, cfg.ensemble.paths, x.cap, x.tolerance)?;
        rep.write_csv(create(&out.join("mixing.csv"))?)?;
        passed &= rep.pass;
        let mut v = to_value(&rep)?;
        for key in ["times", "gap", "gap_stderr", "coupling_distance", "envelope"] {
            v.as_object_mut().expect("struct").remove(key);
        }
        verdict["mixing"] = v;
    }
    Ok((passed, verdict))
}

fn isometry(cfg: &RunConfig, sim: &SimulationConfig) -> Result<(bool, Value)> {
    let model = sim
        .noise
        .as_ref()
        .ok_or_else(|| Error::config("the isometry check needs a noise model"))?;
    let (t, paths, seed) = (sim.horizon, cfg.ensemble.paths, cfg.ensemble.seed);
    let iso = ito_isometry_estimate(model, &sim.initial, t, paths, seed)?;
    let mean = compensated_mean_check(model, &sim.initial, t, paths, seed.wrapping_add(1))?;
    let fit = poisson_count_fit(model.marks(), t, cfg.experiment.count_samples, seed.wrapping_add(2), cfg.experiment.alpha)?;
    let iso_ok = iso.within(3.0);
    let mean_ok = mean.mean_norm <= 3.0 * mean.stderr;
    let verdict = json!({
        "isometry": { "estimate": to_value(&iso)?, "passed": iso_ok },
        "compensated_mean": { "estimate": to_value(&mean)?, "passed": mean_ok },
        "poisson_counts": to_value(&fit)?,
    });
    Ok((iso_ok && mean_ok && fit.passed, verdict))
}
