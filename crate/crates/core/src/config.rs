//! JSON run configuration. Parsing rejects unknown keys and reports the line
//! and column of schema violations; [`RunConfig::resolve`] fills every
//! default in explicitly so the resolved form can be written to a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ergodicity::Observable;
use crate::error::{Error, Result};
use crate::integrator::SimulationConfig;
use crate::noise::{Atom, Coefficient, JumpModel, MarkDistribution, MarkFn};
use crate::operators::CbfParameters;
use crate::spectral::io::{field_from_json, read_field_binary, ModeRecord};
use crate::spectral::{make_domain, random_divfree_field, Domain, SpectralField};
use crate::stability::stability_constants;
use crate::stationary::solve_stationary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Galerkin cutoff; defaults to `N/2`.
    #[serde(default)]
    pub galerkin_modes: Option<usize>,
}

fn default_oversample() -> usize {
    4
}

/// A velocity field given in the configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    /// Explicit Fourier coefficients; missing conjugates are filled in.
    Atoms { atoms: Vec<ModeRecord> },
    /// A field file, JSON or (with extension `.bin`) binary.
    File { path: PathBuf },
    Random { amplitude: f64, decay: f64, seed: u64 },
    Beltrami { amplitude: f64 },
    Shear { amplitude: f64, q: i32 },
    /// The solution of the stationary problem with the configured forcing.
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    LinearMultiplicative,
    Stabilizing,
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    /// Discrete mark atoms; exactly one of `atoms` and `uniform` is given.
    #[serde(default)]
    pub atoms: Option<Vec<Atom>>,
    /// Uniform marks on `[lo, hi]`.
    #[serde(default)]
    pub uniform: Option<[f64; 2]>,
    pub rate: f64,
    #[serde(default)]
    pub sigma: Option<MarkFn>,
    #[serde(default)]
    pub g: Option<MarkFn>,
    #[serde(default)]
    pub h: Option<MarkFn>,
    /// Stabilizing anchor; defaults to the stationary solution.
    #[serde(default)]
    pub anchor: Option<FieldSpec>,
    #[serde(default)]
    pub shape: Option<FieldSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default = "one")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec { paths: 1, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    #[default]
    Meansquare,
    Pathwise,
    Coupling,
}

/// Options of the individual experiments. Each command reads the subset it
/// needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    pub fuzz_cases: usize,
    /// Exponents of the `⟨C(u), u⟩` identity check.
    pub identity_exponents: Vec<f64>,
    pub stationary_tol: f64,
    pub uniqueness_inits: usize,
    pub mode: StabilityMode,
    /// Relative slack on decay envelopes.
    pub tolerance: f64,
    pub window: f64,
    /// Pathwise rate margin; defaults to half of `μλ₁ − (2η + L)`.
    pub epsilon: Option<f64>,
    pub required_fraction: f64,
    /// Slack on the stabilization log-slope.
    pub slack: f64,
    pub observables: Vec<Observable>,
    pub burn_in: f64,
    /// Extra initial states for the ergodicity cross-check.
    pub initials: Vec<FieldSpec>,
    /// Second initial state for coupling and mixing runs.
    pub compare: Option<FieldSpec>,
    /// Cap of the Lipschitz observable `min(‖u‖_H, cap)`.
    pub cap: f64,
    /// Independent horizons of the Poisson count fit.
    pub count_samples: usize,
    pub alpha: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            fuzz_cases: 1000,
            identity_exponents: vec![3.0, 3.5, 4.0, 5.0],
            stationary_tol: 1e-10,
            uniqueness_inits: 4,
            mode: StabilityMode::Meansquare,
            tolerance: 0.1,
            window: 1.0,
            epsilon: None,
            required_fraction: 0.95,
            slack: 0.1,
            observables: vec![Observable::NormHSq],
            burn_in: 0.2,
            initials: Vec::new(),
            compare: None,
            cap: 10.0,
            count_samples: 1000,
            alpha: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub params: CbfParameters,
    #[serde(default)]
    pub forcing: FieldSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub time: TimeSpec,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub experiment: ExperimentOptions,
    #[serde(default)]
    pub initial: FieldSpec,
}

/// Reads and parses a configuration file; relative field paths are taken
/// relative to the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.rebase_paths(base);
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl FieldSpec {
    fn rebase(&mut self, base: &Path) {
        if let FieldSpec::File { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Builds the field. `Stationary` needs the solved stationary state.
    pub fn build(&self, domain: &Domain, stationary: Option<&SpectralField>) -> Result<SpectralField> {
        match self {
            FieldSpec::Zero => Ok(SpectralField::zeros(domain)),
            FieldSpec::Atoms { atoms } => {
                let mut u = SpectralField::zeros(domain);
                for m in atoms {
                    let value: Vec<_> = m
                        .re
                        .iter()
                        .zip(&m.im)
                        .map(|(&re, &im)| num_complex::Complex64::new(re, im))
                        .collect();
                    if m.re.len() != m.im.len() {
                        return Err(Error::config(format!("mode {:?}: re and im lengths differ", m.k)));
                    }
                    u.set_mode(&m.k, &value)?;
                }
                Ok(u)
            }
            FieldSpec::File { path } => {
                let read_err = |e: std::io::Error| Error::config(format!("cannot read {}: {e}", path.display()));
                if path.extension().is_some_and(|x| x == "bin") {
                    read_field_binary(domain, fs::File::open(path).map_err(read_err)?)
                } else {
                    field_from_json(domain, &fs::read_to_string(path).map_err(read_err)?)
                }
            }
            FieldSpec::Random { amplitude, decay, seed } => random_divfree_field(domain, *decay, *amplitude, *seed),
            FieldSpec::Beltrami { amplitude } => SpectralField::beltrami(domain, *amplitude),
            FieldSpec::Shear { amplitude, q } => SpectralField::shear(domain, *amplitude, *q),
            FieldSpec::Stationary => stationary
                .cloned()
                .ok_or_else(|| Error::config("a stationary field is only available as the stabilizing anchor")),
        }
    }
}

impl NoiseSpec {
    fn marks(&self) -> Result<MarkDistribution> {
        match (&self.atoms, &self.uniform) {
            (Some(atoms), None) => MarkDistribution::discrete(atoms.clone(), self.rate),
            (None, Some([lo, hi])) => MarkDistribution::uniform(*lo, *hi, self.rate),
            _ => Err(Error::config("noise needs exactly one of `atoms` and `uniform`")),
        }
    }

    fn check_keys(&self) -> Result<()> {
        let (wanted, field) = match self.family {
            NoiseFamily::LinearMultiplicative => ("sigma", self.sigma.is_some()),
            NoiseFamily::Stabilizing => ("g", self.g.is_some()),
            NoiseFamily::Additive => ("h", self.h.is_some()),
        };
        if !field {
            return Err(Error::config(format!("noise family {:?} needs `{wanted}`", self.family)));
        }
        let stray = [
            ("sigma", self.sigma.is_some() && wanted != "sigma"),
            ("g", self.g.is_some() && wanted != "g"),
            ("h", self.h.is_some() && wanted != "h"),
            ("anchor", self.anchor.is_some() && self.family != NoiseFamily::Stabilizing),
            ("shape", self.shape.is_some() && self.family != NoiseFamily::Additive),
        ];
        if let Some((key, _)) = stray.iter().find(|s| s.1) {
            return Err(Error::config(format!("noise family {:?} does not take `{key}`", self.family)));
        }
        if self.family == NoiseFamily::Additive && self.shape.is_none() {
            return Err(Error::config("additive noise needs `shape`"));
        }
        Ok(())
    }
}

impl RunConfig {
    fn rebase_paths(&mut self, base: &Path) {
        self.forcing.rebase(base);
        self.initial.rebase(base);
        if let Some(n) = &mut self.noise {
            for f in [&mut n.anchor, &mut n.shape].into_iter().flatten() {
                f.rebase(base);
            }
        }
        for f in &mut self.experiment.initials {
            f.rebase(base);
        }
        if let Some(f) = &mut self.experiment.compare {
            f.rebase(base);
        }
    }

    /// The configuration with every default written out: the Galerkin
    /// cutoff, the stabilizing anchor and the pathwise margin `ε`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut out = self.clone();
        out.domain.galerkin_modes.get_or_insert(self.domain.n / 2);
        if let Some(n) = &mut out.noise {
            n.check_keys()?;
            if n.family == NoiseFamily::Stabilizing {
                n.anchor.get_or_insert(FieldSpec::Stationary);
            }
        }
        if out.experiment.epsilon.is_none() {
            let model = self.build_noise_model(&self.build_domain()?, None).ok().flatten();
            if let Ok(c) = stability_constants(&self.params, model.as_ref()) {
                out.experiment.epsilon = Some(0.5 * c.theta.max(0.0));
            }
        }
        Ok(out)
    }

    pub fn build_domain(&self) -> Result<Domain> {
        make_domain(self.domain.dim, self.domain.n, self.domain.oversample)
    }

    /// Noise model; a `Stationary` anchor resolves to `stationary` or, if that
    /// is absent, to zero for constant computations.
    fn build_noise_model(&self, domain: &Domain, stationary: Option<&SpectralField>) -> Result<Option<JumpModel>> {
        let Some(n) = &self.noise else {
            return Ok(None);
        };
        n.check_keys()?;
        let marks = n.marks()?;
        let zero = SpectralField::zeros(domain);
        let coefficient = match n.family {
            NoiseFamily::LinearMultiplicative => Coefficient::LinearMultiplicative {
                sigma: n.sigma.expect("checked"),
            },
            NoiseFamily::Stabilizing => Coefficient::Stabilizing {
                g: n.g.expect("checked"),
                anchor: n
                    .anchor
                    .as_ref()
                    .unwrap_or(&FieldSpec::Stationary)
                    .build(domain, Some(stationary.unwrap_or(&zero)))?,
            },
            NoiseFamily::Additive => Coefficient::Additive {
                h: n.h.expect("checked"),
                shape: n.shape.as_ref().expect("checked").build(domain, None)?,
            },
        };
        JumpModel::new(marks, coefficient).map(Some)
    }

    /// Builds the simulation; solves the stationary problem first when the
    /// stabilizing anchor asks for it.
    pub fn build(&self) -> Result<SimulationConfig> {
        self.params.validate()?;
        let domain = self.build_domain()?;
        let forcing = self.forcing.build(&domain, None)?;
        let needs_stationary = self.noise.as_ref().is_some_and(|n| {
            n.family == NoiseFamily::Stabilizing && matches!(n.anchor, None | Some(FieldSpec::Stationary))
        });
        let stationary = if needs_stationary {
            let s = solve_stationary(&self.params, &forcing, &SpectralField::zeros(&domain), self.experiment.stationary_tol)?
                .into_result()?;
            Some(s.u_inf)
        } else {
            None
        };
        let noise = self.build_noise_model(&domain, stationary.as_ref())?;
        let initial = self.initial.build(&domain, None)?;
        let mut cfg = SimulationConfig::new(&domain, self.params, initial, self.time.horizon, self.time.dt);
        cfg.forcing = forcing;
        cfg.noise = noise;
        cfg.galerkin_modes = self.domain.galerkin_modes.unwrap_or(self.domain.n / 2);
        cfg.record_every = self.time.record_every;
        cfg.seed = self.ensemble.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}
